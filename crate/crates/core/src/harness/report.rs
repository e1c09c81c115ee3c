use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_records, RunManifest};
use crate::error::{Error, Result};
use crate::metrics::{ema_trace, MetricsRecord};
use crate::selftrain::Variant;

/// Momentum of the smoothed labeled-loss series.
pub const LOSS_EMA: f64 = 0.9;

pub const CURVE_SERIES: [&str; 7] = [
    "pseudo_error",
    "student_eval",
    "teacher_eval",
    "lambda_mean",
    "loss_labeled",
    "loss_unlabeled",
    "loss_labeled_ema",
];

fn load_all(manifests: &[PathBuf]) -> Result<Vec<(RunManifest, PathBuf)>> {
    if manifests.is_empty() {
        return Err(Error::InvalidConfig("no manifests given".into()));
    }
    let loaded = manifests
        .iter()
        .map(|p| {
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            RunManifest::load(p).map(|m| (m, dir))
        })
        .collect::<Result<Vec<_>>>()?;
    let (first, _) = &loaded[0];
    for (m, _) in &loaded[1..] {
        if m.task != first.task || m.model != first.model {
            return Err(Error::Incompatible(
                "runs use different task or model specs".into(),
            ));
        }
    }
    Ok(loaded)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub sd: f64,
    /// `mean - mean(st)`; `None` for the baseline or when it is absent.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, variant: Variant) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>5} {:>10} {:>10} {:>10}", "variant", "runs", "mean", "sd", "delta")?;
        for r in &self.rows {
            let delta = r.delta.map(|d| format!("{d:+.4}")).unwrap_or_default();
            writeln!(
                f,
                "{:<10} {:>5} {:>10.4} {:>10.4} {:>10}",
                r.variant.as_str(),
                r.seeds.len(),
                r.mean,
                r.sd,
                delta
            )?;
        }
        Ok(())
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Final student eval score per variant across all replicates, read from
/// the CSVs the manifests point to.
pub fn compare(manifests: &[PathBuf]) -> Result<Comparison> {
    let loaded = load_all(manifests)?;
    let mut finals: Vec<(Variant, u64, f64)> = Vec::new();
    for (m, dir) in &loaded {
        for rep in &m.replicates {
            let rows = read_records(&dir.join(&rep.csv))?;
            let last = rows.last().ok_or_else(|| Error::BadCsv {
                path: dir.join(&rep.csv),
                detail: "no rows".into(),
            })?;
            finals.push((m.variant, rep.seed, last.student_eval));
        }
    }
    let mut rows: Vec<ComparisonRow> = Variant::ALL
        .into_iter()
        .filter_map(|v| {
            let runs: Vec<_> = finals.iter().filter(|(fv, ..)| *fv == v).collect();
            if runs.is_empty() {
                return None;
            }
            let scores: Vec<f64> = runs.iter().map(|r| r.2).collect();
            let (mean, sd) = mean_sd(&scores);
            Some(ComparisonRow {
                variant: v,
                seeds: runs.iter().map(|r| r.1).collect(),
                mean,
                sd,
                delta: None,
            })
        })
        .collect();
    if let Some(base) = rows.iter().find(|r| r.variant == Variant::St).map(|r| r.mean) {
        for r in rows.iter_mut().filter(|r| r.variant != Variant::St) {
            r.delta = Some(r.mean - base);
        }
    }
    Ok(Comparison { rows })
}

fn series(rows: &[MetricsRecord]) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let col = |f: fn(&MetricsRecord) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let loss = col(|r| r.loss_labeled);
    Ok(vec![
        ("pseudo_error", col(|r| r.pseudo_error)),
        ("student_eval", col(|r| r.student_eval)),
        ("teacher_eval", col(|r| r.teacher_eval)),
        ("lambda_mean", col(|r| r.lambda_mean)),
        ("loss_labeled_ema", ema_trace(&loss, LOSS_EMA)?),
        ("loss_labeled", loss),
        ("loss_unlabeled", col(|r| r.loss_unlabeled)),
    ])
}

/// Long-format `variant,seed,iter,series,value` rows for every replicate of
/// every manifest, written to `dest`. Returns the number of data rows.
pub fn export_curves(manifests: &[PathBuf], dest: &Path) -> Result<usize> {
    let loaded = load_all(manifests)?;
    let mut out = String::from("variant,seed,iter,series,value\n");
    let mut count = 0;
    for (m, dir) in &loaded {
        for rep in &m.replicates {
            let rows = read_records(&dir.join(&rep.csv))?;
            let mut all = series(&rows)?;
            all.sort_by_key(|(name, _)| CURVE_SERIES.iter().position(|s| s == name));
            for (name, values) in all {
                for (r, v) in rows.iter().zip(values) {
                    out.push_str(&format!("{},{},{},{name},{v:.16e}\n", m.variant, rep.seed, r.iter));
                    count += 1;
                }
            }
        }
    }
    fs::write(dest, out)?;
    Ok(count)
}
