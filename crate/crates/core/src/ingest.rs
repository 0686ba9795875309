//! Trade-return ingestion: CSV parsing, structural validation, and
//! per-system normalization by the biggest observed loss.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IngestError {
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("line {line}: found {found} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error("line {line}, column {column}: cannot parse {text:?} as a number")]
    NonNumericCell {
        line: usize,
        column: usize,
        text: String,
    },
    #[error("line {line}, column {column}: value is not finite")]
    NonFiniteValue { line: usize, column: usize },
    #[error(
        "system {column} has no losing period (at least one strictly negative return is required)"
    )]
    NoLossInColumn { column: usize },
    #[error("malformed return matrix: {0}")]
    InvalidShape(String),
}

/// Joint absolute trade returns: N periods by M trading systems.
///
/// Entries are profits/losses in currency units per unit traded. Structural
/// validity (rectangular, finite, non-empty) is enforced at construction;
/// the per-column loss requirement is checked downstream where it is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    entries: Vec<Vec<f64>>,
    system_names: Vec<String>,
}

impl ReturnMatrix {
    /// Builds a validated matrix. `system_names` defaults to "S1".."SM".
    pub fn new(
        entries: Vec<Vec<f64>>,
        system_names: Option<Vec<String>>,
    ) -> Result<Self, IngestError> {
        if entries.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        let n_systems = entries[0].len();
        if n_systems == 0 {
            return Err(IngestError::InvalidShape("rows have no fields".into()));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n_systems {
                return Err(IngestError::RaggedRows {
                    line: i + 1,
                    found: row.len(),
                    expected: n_systems,
                });
            }
            for (k, value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(IngestError::NonFiniteValue {
                        line: i + 1,
                        column: k + 1,
                    });
                }
            }
        }
        let system_names = match system_names {
            Some(names) => {
                if names.len() != n_systems {
                    return Err(IngestError::InvalidShape(format!(
                        "{} system names for {} systems",
                        names.len(),
                        n_systems
                    )));
                }
                names
            }
            None => default_names(n_systems),
        };
        Ok(Self {
            entries,
            system_names,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.entries.len()
    }

    pub fn n_systems(&self) -> usize {
        self.entries[0].len()
    }

    /// Raw row-major view of the entries (period-major, zero-based).
    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn system_names(&self) -> &[String] {
        &self.system_names
    }
}

fn default_names(n_systems: usize) -> Vec<String> {
    (1..=n_systems).map(|k| format!("S{k}")).collect()
}

/// Per-system biggest losses and the return rows rescaled by them, so that
/// every column's worst loss is exactly -1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedReturns {
    biggest_losses: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl NormalizedReturns {
    pub fn n_periods(&self) -> usize {
        self.rows.len()
    }

    pub fn n_systems(&self) -> usize {
        self.biggest_losses.len()
    }

    /// The vector of biggest losses, one strictly positive value per system.
    pub fn biggest_losses(&self) -> &[f64] {
        &self.biggest_losses
    }

    /// Normalized rows (period-major, zero-based); entries are dimensionless
    /// and bounded below by -1.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Builds reduced views (column elimination). Callers must preserve the
    /// worst-loss-is-minus-one invariant per remaining column.
    pub(crate) fn from_parts(biggest_losses: Vec<f64>, rows: Vec<Vec<f64>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == biggest_losses.len()));
        Self {
            biggest_losses,
            rows,
        }
    }
}

/// Parses a CSV document of absolute trade returns.
///
/// Comma separated, '.' decimal point, LF or CRLF line endings, no quoting.
/// A single leading header row is assumed when the first field of the first
/// line does not parse as a number.
pub fn parse_returns(text: &str) -> Result<ReturnMatrix, IngestError> {
    parse_returns_with_options(text, false)
}

/// Like [`parse_returns`], but `no_header` forces the first line to be
/// treated as data regardless of its content.
pub fn parse_returns_with_options(
    text: &str,
    no_header: bool,
) -> Result<ReturnMatrix, IngestError> {
    let mut lines: Vec<(usize, &str)> = text
        .split('\n')
        .enumerate()
        .map(|(i, line)| (i + 1, line.strip_suffix('\r').unwrap_or(line)))
        .collect();
    // A trailing newline produces one empty final segment; drop it.
    if let Some(&(_, last)) = lines.last() {
        if last.trim().is_empty() {
            lines.pop();
        }
    }
    if lines.is_empty() {
        return Err(IngestError::EmptyInput);
    }

    let first_fields = split_fields(lines[0].1);
    let has_header = !no_header && parse_field(first_fields[0]).is_none();
    let (names, data_lines) = if has_header {
        let names: Vec<String> = first_fields.iter().map(|s| s.to_string()).collect();
        (Some(names), &lines[1..])
    } else {
        (None, &lines[..])
    };
    if data_lines.is_empty() {
        return Err(IngestError::EmptyInput);
    }

    let n_systems = match &names {
        Some(names) => names.len(),
        None => split_fields(data_lines[0].1).len(),
    };

    let mut entries = Vec::with_capacity(data_lines.len());
    for &(line_no, line) in data_lines {
        let fields = split_fields(line);
        if fields.len() != n_systems {
            return Err(IngestError::RaggedRows {
                line: line_no,
                found: fields.len(),
                expected: n_systems,
            });
        }
        let mut row = Vec::with_capacity(n_systems);
        for (k, field) in fields.iter().enumerate() {
            let value = parse_field(field).ok_or_else(|| IngestError::NonNumericCell {
                line: line_no,
                column: k + 1,
                text: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(IngestError::NonFiniteValue {
                    line: line_no,
                    column: k + 1,
                });
            }
            row.push(value);
        }
        entries.push(row);
    }
    ReturnMatrix::new(entries, names)
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_field(field: &str) -> Option<f64> {
    if field.is_empty() {
        return None;
    }
    field.parse::<f64>().ok()
}

/// Serializes a matrix back to CSV (header row plus one line per period).
/// Floats are printed in shortest round-trip form, so
/// `parse_returns(to_csv(t)) == t`.
pub fn to_csv(matrix: &ReturnMatrix) -> String {
    let mut out = String::new();
    out.push_str(&matrix.system_names().join(","));
    out.push('\n');
    for row in matrix.entries() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Biggest loss per system: the largest absolute value among the strictly
/// negative returns of each column. Stops at the first column without a loss.
pub fn biggest_losses(matrix: &ReturnMatrix) -> Result<Vec<f64>, IngestError> {
    let mut losses = Vec::with_capacity(matrix.n_systems());
    for k in 0..matrix.n_systems() {
        let worst = matrix
            .entries()
            .iter()
            .map(|row| row[k])
            .filter(|&t| t < 0.0)
            .fold(f64::INFINITY, f64::min);
        if worst == f64::INFINITY {
            return Err(IngestError::NoLossInColumn { column: k + 1 });
        }
        losses.push(-worst);
    }
    Ok(losses)
}

/// Rescales each column by its biggest loss so the worst loss of every
/// system is exactly -1.
pub fn normalize(matrix: &ReturnMatrix) -> Result<NormalizedReturns, IngestError> {
    let losses = biggest_losses(matrix)?;
    let rows = matrix
        .entries()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&losses)
                .map(|(&t, &that)| t / that)
                .collect()
        })
        .collect();
    Ok(NormalizedReturns {
        biggest_losses: losses,
        rows,
    })
}
