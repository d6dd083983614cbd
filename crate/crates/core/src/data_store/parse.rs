use std::collections::HashSet;
use std::io::Read;
use std::str::FromStr;

use super::{Bar, IssueKind, MetricPoint, RowIssue, StoreError};

const OHLCV_HEADER: [&str; 6] = ["ts", "open", "high", "low", "close", "volume"];
const METRICS_HEADER: [&str; 3] = ["ts", "name", "value"];

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), StoreError> {
    let header = rdr.headers().map_err(|e| {
        StoreError::RejectedRows(vec![RowIssue {
            row: 0,
            kind: IssueKind::Malformed,
            message: format!("unreadable header: {e}"),
        }])
    })?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(StoreError::RejectedRows(vec![RowIssue {
            row: 0,
            kind: IssueKind::Malformed,
            message: format!(
                "header is `{}`, expected `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                expected.join(",")
            ),
        }]));
    }
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T, String> {
    let raw = rec.get(idx).ok_or_else(|| format!("missing field `{name}`"))?;
    raw.parse::<T>()
        .map_err(|_| format!("cannot parse `{name}` from `{raw}`"))
}

/// Parses an OHLCV CSV. Any malformed row, invariant violation or repeated
/// timestamp fails the whole source; every offending row is reported.
/// Returned bars are sorted by timestamp.
pub fn parse_ohlcv<R: Read>(source: R) -> Result<Vec<Bar>, StoreError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &OHLCV_HEADER)?;

    let mut bars = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(RowIssue { row, kind: IssueKind::Malformed, message: e.to_string() });
                continue;
            }
        };
        let parsed = (|| -> Result<Bar, String> {
            if rec.len() != OHLCV_HEADER.len() {
                return Err(format!("expected 6 fields, found {}", rec.len()));
            }
            Ok(Bar {
                ts: field(&rec, 0, "ts")?,
                open: field(&rec, 1, "open")?,
                high: field(&rec, 2, "high")?,
                low: field(&rec, 3, "low")?,
                close: field(&rec, 4, "close")?,
                volume: field(&rec, 5, "volume")?,
            })
        })();
        let bar = match parsed {
            Ok(b) => b,
            Err(message) => {
                issues.push(RowIssue { row, kind: IssueKind::Malformed, message });
                continue;
            }
        };
        if let Err(message) = bar.check() {
            issues.push(RowIssue { row, kind: IssueKind::Invariant, message });
            continue;
        }
        if !seen.insert(bar.ts) {
            issues.push(RowIssue {
                row,
                kind: IssueKind::DuplicateTs,
                message: format!("duplicate ts {}", bar.ts),
            });
            continue;
        }
        bars.push(bar);
    }
    if !issues.is_empty() {
        return Err(StoreError::RejectedRows(issues));
    }
    bars.sort_by_key(|b| b.ts);
    Ok(bars)
}

#[derive(Debug, Clone, Default)]
pub struct ParsedMetrics {
    /// Accepted points in source order.
    pub points: Vec<MetricPoint>,
    /// Rows dropped for non-finite values.
    pub rejected: Vec<RowIssue>,
}

/// Parses a metrics CSV. Malformed rows fail the source; rows with
/// non-finite values are dropped and reported in [`ParsedMetrics::rejected`].
pub fn parse_metrics<R: Read>(source: R) -> Result<ParsedMetrics, StoreError> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &METRICS_HEADER)?;

    let mut out = ParsedMetrics::default();
    let mut malformed = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                malformed.push(RowIssue { row, kind: IssueKind::Malformed, message: e.to_string() });
                continue;
            }
        };
        let parsed = (|| -> Result<MetricPoint, String> {
            if rec.len() != METRICS_HEADER.len() {
                return Err(format!("expected 3 fields, found {}", rec.len()));
            }
            let name: String = field(&rec, 1, "name")?;
            if name.is_empty() {
                return Err("empty metric name".into());
            }
            Ok(MetricPoint { ts: field(&rec, 0, "ts")?, name, value: field(&rec, 2, "value")? })
        })();
        match parsed {
            Ok(p) if !p.value.is_finite() => out.rejected.push(RowIssue {
                row,
                kind: IssueKind::NonFinite,
                message: format!("non-finite value for `{}` at ts {}", p.name, p.ts),
            }),
            Ok(p) => out.points.push(p),
            Err(message) => malformed.push(RowIssue { row, kind: IssueKind::Malformed, message }),
        }
    }
    if !malformed.is_empty() {
        return Err(StoreError::RejectedRows(malformed));
    }
    Ok(out)
}
