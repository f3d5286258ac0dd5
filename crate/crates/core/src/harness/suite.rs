use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::curves::emit_curves;
use super::run::{csv_text, report_path, run_training, write_atomic, EvalReport};
use crate::agent::Variant;
use crate::envs::EnvKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    /// AC-SSIL against the plain baseline on every task.
    Comparison,
    /// Ways of using demonstrations: none, action labels, shaped rewards, SSIL.
    Analysis,
    /// Where the SSIL term enters: nowhere, actor only, actor and critic.
    Ablation,
    SensitivityK,
    SensitivityDemos,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] =
        [SuiteName::Comparison, SuiteName::Analysis, SuiteName::Ablation, SuiteName::SensitivityK, SuiteName::SensitivityDemos];

    pub fn name(self) -> &'static str {
        match self {
            SuiteName::Comparison => "comparison",
            SuiteName::Analysis => "analysis",
            SuiteName::Ablation => "ablation",
            SuiteName::SensitivityK => "sensitivity_k",
            SuiteName::SensitivityDemos => "sensitivity_demos",
        }
    }
}

impl std::fmt::Display for SuiteName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL.into_iter().find(|n| n.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown suite `{s}` (expected comparison, analysis, ablation, sensitivity_k or sensitivity_demos)"
            ))
        })
    }
}

/// One experiment of a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Directory name under the suite output.
    pub name: String,
    pub config: ExperimentConfig,
}

pub const K_VALUES: [usize; 5] = [1, 2, 5, 10, 20];
pub const DEMO_COUNTS: [usize; 4] = [10, 25, 50, 100];

/// Expands a suite into its cells. Each cell starts from `base` (config file text),
/// then `overrides` (`key=value`), then the suite's own keys: task, `run.n_seeds`,
/// and the swept parameter.
pub fn suite_cells(suite: SuiteName, n_seeds: usize, base: Option<&str>, overrides: &[String]) -> Result<Vec<Cell>> {
    let cell = |env: EnvKind, name: String, extra: Vec<String>| -> Result<Cell> {
        let mut keys = overrides.to_vec();
        keys.push(format!("env={env}"));
        keys.push(format!("run.n_seeds={n_seeds}"));
        keys.extend(extra);
        Ok(Cell { name, config: ExperimentConfig::resolve(base, &keys, env)? })
    };
    let variant_cells = |env: EnvKind, variants: &[Variant], prefix: bool| -> Result<Vec<Cell>> {
        variants
            .iter()
            .map(|v| {
                let name = if prefix { format!("{env}/{v}") } else { v.to_string() };
                cell(env, name, vec![format!("agent.variant={v}")])
            })
            .collect()
    };
    match suite {
        SuiteName::Comparison => {
            let mut cells = Vec::new();
            for env in EnvKind::ALL {
                cells.extend(variant_cells(env, &[Variant::BaseAc, Variant::AcSsil], true)?);
            }
            Ok(cells)
        }
        SuiteName::Analysis => {
            variant_cells(EnvKind::PickPlace2d, &[Variant::BaseAc, Variant::AcBc, Variant::AcStd, Variant::AcSsil], false)
        }
        SuiteName::Ablation => variant_cells(EnvKind::Handover2d, &[Variant::BaseAc, Variant::ActorSsil, Variant::AcSsil], false),
        SuiteName::SensitivityK => K_VALUES
            .iter()
            .map(|k| cell(EnvKind::PickPlace2d, format!("k_{k}"), vec!["agent.variant=ac_ssil".into(), format!("agent.k={k}")]))
            .collect(),
        SuiteName::SensitivityDemos => DEMO_COUNTS
            .iter()
            .map(|n| {
                cell(EnvKind::PickPlace2d, format!("demos_{n}"), vec!["agent.variant=ac_ssil".into(), format!("demos.episodes={n}")])
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub cell: String,
    pub env: EnvKind,
    pub variant: Variant,
    pub k: usize,
    pub demo_episodes: usize,
    pub completed: usize,
    pub missing_seeds: Vec<u64>,
    pub success_mean: f64,
    pub success_std: f64,
    pub return_mean: f64,
    pub return_std: f64,
    /// Loaded from an earlier run rather than recomputed.
    #[serde(skip)]
    pub reused: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: SuiteName,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn failed_cells(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.missing_seeds.is_empty()).map(|r| r.cell.as_str()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let header = [
            "cell",
            "env",
            "variant",
            "k",
            "demo_episodes",
            "completed",
            "missing",
            "success_mean",
            "success_std",
            "return_mean",
            "return_std",
        ];
        csv_text(
            &header,
            self.rows.iter().map(|r| {
                vec![
                    r.cell.clone(),
                    r.env.to_string(),
                    r.variant.to_string(),
                    r.k.to_string(),
                    r.demo_episodes.to_string(),
                    r.completed.to_string(),
                    r.missing_seeds.len().to_string(),
                    r.success_mean.to_string(),
                    r.success_std.to_string(),
                    r.return_mean.to_string(),
                    r.return_std.to_string(),
                ]
            }),
        )
    }
}

/// A finished cell is one whose report exists, embeds the same config, and has no
/// failed seeds.
fn finished(cell_dir: &Path, config: &ExperimentConfig) -> Option<EvalReport> {
    let report = EvalReport::load(&report_path(cell_dir)).ok()?;
    (report.config == *config && report.failed_seeds().is_empty()).then_some(report)
}

/// Runs (or resumes) every cell of a suite under `out_dir`, then writes
/// `suite.json`, `suite.csv` and curve files under `out_dir/curves`.
pub fn run_suite(suite: SuiteName, n_seeds: usize, base: Option<&str>, overrides: &[String], out_dir: &Path) -> Result<SuiteReport> {
    let cells = suite_cells(suite, n_seeds, base, overrides)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::new();
    let mut labeled = Vec::new();
    for cell in &cells {
        let dir = out_dir.join(&cell.name);
        let (report, reused) = match finished(&dir, &cell.config) {
            Some(r) => {
                info!("{suite}/{}: reusing finished cell", cell.name);
                (r, true)
            }
            None => {
                info!("{suite}/{}: running {} seeds", cell.name, cell.config.run.n_seeds);
                (run_training(&cell.config, &dir)?, false)
            }
        };
        let a = &report.aggregate;
        rows.push(SuiteRow {
            cell: cell.name.clone(),
            env: cell.config.env,
            variant: cell.config.variant(),
            k: cell.config.agent.k,
            demo_episodes: cell.config.demos.episodes,
            completed: a.completed,
            missing_seeds: a.missing_seeds.clone(),
            success_mean: a.success_mean,
            success_std: a.success_std,
            return_mean: a.return_mean,
            return_std: a.return_std,
            reused,
        });
        labeled.push((cell.name.clone(), report));
    }
    let report = SuiteReport { suite, rows };
    write_atomic(&out_dir.join("suite.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_atomic(&out_dir.join("suite.csv"), &report.to_csv()?)?;
    emit_curves(&labeled, &out_dir.join("curves"))?;
    Ok(report)
}
