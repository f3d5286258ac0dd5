use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::run::{csv_text, mean_std, write_atomic, EvalReport, SeedOutcome};
use crate::error::{Error, Result};

pub const LONG_COLUMNS: [&str; 5] = ["variant", "seed", "step", "eval_success", "eval_return"];
pub const AGGREGATE_COLUMNS: [&str; 7] = ["variant", "step", "n", "success_mean", "success_std", "return_mean", "return_std"];

/// Files written by [`emit_curves`].
#[derive(Clone, Debug, PartialEq)]
pub struct CurveFiles {
    pub long: PathBuf,
    pub aggregate: PathBuf,
    /// Present when some seeds had to be resampled.
    pub warnings: Option<PathBuf>,
}

/// `(seed, [(step, success, return)])`
type SeedSeries = (u64, Vec<(u64, f64, f64)>);

/// Per-seed series of one labelled report.
fn series(report: &EvalReport) -> Vec<SeedSeries> {
    report
        .seeds
        .iter()
        .filter_map(|s| match &s.outcome {
            SeedOutcome::Completed { curve, .. } => {
                Some((s.seed, curve.iter().map(|r| (r.step, r.success_rate, r.mean_return)).collect()))
            }
            SeedOutcome::Failed { .. } => None,
        })
        .collect()
}

/// Value of a step series at `step`: the last point at or before it.
fn hold(points: &[(u64, f64, f64)], step: u64) -> Option<(f64, f64)> {
    points.iter().rev().find(|p| p.0 <= step).map(|p| (p.1, p.2))
}

/// Writes `curves_long.csv` (one row per seed and evaluation) and
/// `curves_aggregate.csv` (mean and population std per label and step).
///
/// Seeds of one label whose evaluation steps differ are put on the coarsest grid:
/// the seed grid with the fewest points, each other seed contributing its latest
/// evaluation at or before each grid step. Every such resampling is listed in
/// `curves_warnings.txt`.
pub fn emit_curves(reports: &[(String, EvalReport)], out_dir: &Path) -> Result<CurveFiles> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to emit curves from".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut long = Vec::new();
    let mut agg = Vec::new();
    let mut warnings = Vec::new();

    for (label, report) in reports {
        let runs = series(report);
        for (seed, pts) in &runs {
            for (step, s, r) in pts {
                long.push(vec![label.clone(), seed.to_string(), step.to_string(), s.to_string(), r.to_string()]);
            }
        }
        let Some(grid) = runs.iter().map(|(_, p)| p).min_by_key(|p| p.len()) else { continue };
        let grid: Vec<u64> = grid.iter().map(|p| p.0).collect();
        let grid_set: BTreeSet<u64> = grid.iter().copied().collect();
        for (seed, pts) in &runs {
            let steps: BTreeSet<u64> = pts.iter().map(|p| p.0).collect();
            if steps != grid_set {
                warnings.push(format!("{label}: seed {seed} resampled from {} to {} evaluation steps", steps.len(), grid.len()));
            }
        }
        for &step in &grid {
            let vals: Vec<(f64, f64)> = runs.iter().filter_map(|(_, p)| hold(p, step)).collect();
            let succ: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let ret: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let (sm, ss) = mean_std(&succ);
            let (rm, rs) = mean_std(&ret);
            agg.push(vec![
                label.clone(),
                step.to_string(),
                vals.len().to_string(),
                sm.to_string(),
                ss.to_string(),
                rm.to_string(),
                rs.to_string(),
            ]);
        }
    }

    let files = CurveFiles {
        long: out_dir.join("curves_long.csv"),
        aggregate: out_dir.join("curves_aggregate.csv"),
        warnings: (!warnings.is_empty()).then(|| out_dir.join("curves_warnings.txt")),
    };
    write_atomic(&files.long, &csv_text(&LONG_COLUMNS, long)?)?;
    write_atomic(&files.aggregate, &csv_text(&AGGREGATE_COLUMNS, agg)?)?;
    if let Some(w) = &files.warnings {
        write_atomic(w, &(warnings.join("\n") + "\n"))?;
    }
    Ok(files)
}

/// Finds every `report.json` under `dir`, sorted by path.
pub fn find_reports(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && entry.file_name() == "report.json" {
            found.push(entry.into_path());
        }
    }
    Ok(found)
}

/// Loads every report under `dir` and labels it with its directory path relative
/// to `dir` (or the variant name for a report directly in `dir`).
pub fn load_labeled_reports(dir: &Path) -> Result<Vec<(String, EvalReport)>> {
    find_reports(dir)?
        .into_iter()
        .map(|p| {
            let report = EvalReport::load(&p)?;
            let rel = p.parent().and_then(|d| d.strip_prefix(dir).ok()).map(|r| r.to_string_lossy().replace('\\', "/"));
            let label = match rel {
                Some(r) if !r.is_empty() => r,
                _ => report.config.variant().name().to_string(),
            };
            Ok((label, report))
        })
        .collect()
}
