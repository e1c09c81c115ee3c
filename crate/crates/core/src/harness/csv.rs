use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

/// Identifies the column layout; recorded in every manifest.
pub const CSV_SCHEMA: &str = "metrics/1";

/// 17 significant digits: enough to round-trip any f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_records(rows: &[MetricsRecord]) -> String {
    let mut out = MetricsRecord::FIELDS.join(",");
    out.push('\n');
    for r in rows {
        let cells = [
            r.iter.to_string(),
            r.variant.clone(),
            r.seed.to_string(),
            r.student_updates.to_string(),
            float(r.loss_labeled),
            float(r.loss_unlabeled),
            float(r.lambda_mean),
            float(r.pseudo_error),
            float(r.student_eval),
            float(r.teacher_eval),
            r.wall_ms.to_string(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_records(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(format_records(rows).as_bytes())?;
    file.sync_all()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, detail: String| Error::BadCsv {
        path: path.to_path_buf(),
        detail: format!("line {line}: {detail}"),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    if header != MetricsRecord::FIELDS.join(",") {
        return Err(bad(1, format!("unexpected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != MetricsRecord::FIELDS.len() {
                return Err(bad(i + 2, format!("{} cells", cells.len())));
            }
            let num = |j: usize| -> Result<f64> {
                cells[j]
                    .parse()
                    .map_err(|_| bad(i + 2, format!("bad number `{}`", cells[j])))
            };
            let int = |j: usize| -> Result<u64> {
                cells[j]
                    .parse()
                    .map_err(|_| bad(i + 2, format!("bad integer `{}`", cells[j])))
            };
            Ok(MetricsRecord {
                iter: int(0)? as usize,
                variant: cells[1].to_string(),
                seed: int(2)?,
                student_updates: int(3)?,
                loss_labeled: num(4)?,
                loss_unlabeled: num(5)?,
                lambda_mean: num(6)?,
                pseudo_error: num(7)?,
                student_eval: num(8)?,
                teacher_eval: num(9)?,
                wall_ms: int(10)?,
            })
        })
        .collect()
}
