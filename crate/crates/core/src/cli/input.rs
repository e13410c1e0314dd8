//! Tab-separated count matrices: a header line, then one row per
//! comparison with columns `id  x1  x2  n1  n2`.

use std::collections::HashSet;
use std::io::Read;

use crate::error::{Error, Result};
use crate::exact_tests::{fet_support, CountPair, PValueSupport};

#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub id: String,
    /// 1-based line number in the source file.
    pub line: u64,
    pub counts: CountPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    /// Total count of 0 or 1.
    LowCount,
    /// Any other margin whose only attainable p-value is 1.
    Uninformative,
}

impl Removal {
    pub fn as_str(&self) -> &'static str {
        match self {
            Removal::LowCount => "total_count_le_1",
            Removal::Uninformative => "uninformative_support",
        }
    }
}

/// One input row with its support and cleaning decision.
#[derive(Debug, Clone)]
pub struct CheckedRow {
    pub row: CountRow,
    pub support: PValueSupport,
    pub pvalue: f64,
    pub removal: Option<Removal>,
}

pub fn read_count_matrix<R: Read>(reader: R) -> Result<Vec<CountRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() != 5 {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header has {} columns, expected 5 (id x1 x2 n1 n2)",
                headers.len()
            ),
        });
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 tab-separated fields, found {}", record.len()),
            });
        }
        let field = |idx: usize, name: &str| -> Result<u64> {
            let raw = record[idx].trim();
            raw.parse::<u64>().map_err(|_| Error::Parse {
                line,
                message: format!("{name} must be a non-negative integer, got '{raw}'"),
            })
        };
        let id = record[0].trim().to_string();
        let (x1, x2, n1, n2) = (
            field(1, "x1")?,
            field(2, "x2")?,
            field(3, "n1")?,
            field(4, "n2")?,
        );
        let counts = CountPair::new(x1, x2, n1, n2).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(id.clone()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate identifier '{id}'"),
            });
        }
        rows.push(CountRow { id, line, counts });
    }
    Ok(rows)
}

fn csv_error(err: csv::Error, fallback_line: u64) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

/// Computes supports and p-values and flags rows that carry no information.
pub fn check_rows(rows: Vec<CountRow>) -> Result<Vec<CheckedRow>> {
    rows.into_iter()
        .map(|row| {
            let c = row.counts;
            let support = fet_support(c.n1, c.n2, c.total())?;
            let removal = if c.total() <= 1 {
                Some(Removal::LowCount)
            } else if support.is_trivial() {
                Some(Removal::Uninformative)
            } else {
                None
            };
            let pvalue = support
                .pvalue_of_outcome(c.x1)
                .expect("x1 lies in the attainable range");
            Ok(CheckedRow {
                row,
                support,
                pvalue,
                removal,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "id\tx1\tx2\tn1\tn2\ng1\t0\t2\t5\t5\ng2\t0\t3\t5\t5\ng3\t0\t4\t5\t5\n";

    #[test]
    fn parses_rows() {
        let rows = read_count_matrix(EXAMPLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].id, "g3");
        assert_eq!(rows[2].line, 4);
        assert_eq!(rows[2].counts.total(), 4);
    }

    #[test]
    fn header_only_is_empty() {
        let rows = read_count_matrix("id\tx1\tx2\tn1\tn2\n".as_bytes()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let bad = "id\tx1\tx2\tn1\tn2\na\t1\t1\t5\t5\nb\t1\t1\t5\n";
        match read_count_matrix(bad.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "id\tx1\tx2\tn1\tn2\na\t1\t1\t5\t5\nb\t1.5\t1\t5\t5\n";
        match read_count_matrix(bad.as_bytes()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("x1"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "id\tx1\tx2\tn1\tn2\na\t6\t1\t5\t5\n";
        assert!(matches!(
            read_count_matrix(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let dup = "id\tx1\tx2\tn1\tn2\na\t1\t1\t5\t5\na\t1\t2\t5\t5\n";
        assert!(matches!(
            read_count_matrix(dup.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn flags_low_counts() {
        let text =
            "id\tx1\tx2\tn1\tn2\na\t0\t1\t5\t5\nb\t0\t0\t5\t5\nc\t5\t4\t5\t5\nd\t1\t2\t5\t5\n";
        let checked = check_rows(read_count_matrix(text.as_bytes()).unwrap()).unwrap();
        let flags: Vec<_> = checked.iter().map(|r| r.removal).collect();
        assert_eq!(
            flags,
            vec![
                Some(Removal::LowCount),
                Some(Removal::LowCount),
                Some(Removal::Uninformative),
                None
            ]
        );
    }
}
