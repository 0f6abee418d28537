//! Scenario files: one JSON document per run, validated before anything executes.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fraclab_core::dyadic::BRUTE_CELL_LIMIT;
use fraclab_core::ineq_lab::{run_checks, CheckReport, CheckSpec, InequalityParams, TheoremId};
use fraclab_core::lattice::{FieldSpec, MeasureSpec, MAX_DEPTH, MAX_DIM};
use fraclab_core::weights::WeightSpec;

use crate::report::{Provenance, ReportBundle};

/// Cell count above which a run needs `--force`.
pub const CELL_LIMIT: usize = 1 << 24;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub m: u32,
    #[serde(default)]
    pub corner: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckBlock {
    pub theorem: TheoremId,
    #[serde(default)]
    pub params: InequalityParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    P,
    Q,
    Alpha,
    R,
    S,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub grid: GridSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub weight: Option<WeightSpec>,
    pub check: CheckBlock,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Grid depths to repeat the check at; `grid.m` alone when absent.
    #[serde(default)]
    pub convergence: Option<Vec<u32>>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Advisory wall-time budget in seconds.
    #[serde(default)]
    pub time_budget_s: Option<f64>,
}

/// Command-line overrides for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub force: bool,
    /// Record wall times; off for byte-stable output.
    pub timing: bool,
    /// Replaces the scenario's depth list.
    pub levels: Option<Vec<u32>>,
}

/// Parses a scenario; errors carry the line and column of the offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| {
        anyhow::anyhow!("scenario parse error at line {}, column {}: {e}", e.line(), e.column())
    })?;
    Ok(sc)
}

pub fn scenario_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Scenario {
    fn base_spec(&self) -> CheckSpec {
        CheckSpec {
            theorem: self.check.theorem,
            params: self.check.params,
            dim: self.grid.dim,
            corner: self.grid.corner.clone(),
            side: self.grid.side,
            field: self.field.clone(),
            measure: self.measure.clone(),
            weight: self.weight.clone(),
        }
    }

    /// Every `(spec, depth)` the scenario asks for, sweep-major.
    pub fn jobs(&self, levels: Option<&[u32]>) -> Result<Vec<(CheckSpec, u32)>> {
        let depths: Vec<u32> = match (levels, &self.convergence) {
            (Some(l), _) => l.to_vec(),
            (None, Some(l)) => l.clone(),
            (None, None) => vec![self.grid.m],
        };
        if depths.is_empty() {
            bail!("parameter `levels` violates a constraint: list is empty");
        }
        if depths.windows(2).any(|w| w[0] >= w[1]) {
            bail!("parameter `levels` violates a constraint: must be strictly increasing");
        }
        let base = self.base_spec();
        let variants: Vec<CheckSpec> = match &self.sweep {
            None => vec![base],
            Some(sw) => sw
                .values
                .iter()
                .map(|&v| {
                    let mut s = base.clone();
                    let p = &mut s.params;
                    match sw.parameter {
                        SweepParam::Delta => p.delta = v,
                        SweepParam::P => p.p = v,
                        SweepParam::Q => p.q = Some(v),
                        SweepParam::Alpha => p.alpha = Some(v),
                        SweepParam::R => p.r = v,
                        SweepParam::S => p.s = v,
                        SweepParam::Epsilon => p.epsilon = v,
                    }
                    s
                })
                .collect(),
        };
        let mut out = Vec::new();
        for v in variants {
            for &m in &depths {
                out.push((v.clone(), m));
            }
        }
        Ok(out)
    }
}

fn uses_brute_maximal(spec: &CheckSpec) -> bool {
    matches!(
        spec.theorem,
        TheoremId::Riesz | TheoremId::Frac2Grad | TheoremId::Frac2GradSide | TheoremId::Frac2GradA1
    ) || (matches!(
        spec.theorem,
        TheoremId::OneP | TheoremId::SelfBad | TheoremId::SelfGood
    ) && (spec.params.p == 1.0 || spec.params.r == 1.0))
}

/// Grid-size guards, checked before any job runs.
pub fn guard(jobs: &[(CheckSpec, u32)], force: bool) -> Result<()> {
    for (spec, m) in jobs {
        if !(1..=MAX_DIM).contains(&spec.dim) {
            bail!("parameter `dim` violates a constraint: must lie in 1..={MAX_DIM}");
        }
        if *m > MAX_DEPTH {
            bail!("parameter `m` violates a constraint: must be at most {MAX_DEPTH}");
        }
        let cells = 1usize << (*m as usize * spec.dim);
        if force {
            continue;
        }
        if cells > CELL_LIMIT {
            bail!("resource guard: {cells} cells exceed {CELL_LIMIT}; pass --force to run anyway");
        }
        if uses_brute_maximal(spec) && cells > BRUTE_CELL_LIMIT {
            bail!(
                "resource guard: brute maximal function on {cells} cells exceeds \
                 {BRUTE_CELL_LIMIT}; pass --force to fall back to the shifted family"
            );
        }
    }
    Ok(())
}

pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = threads.or_else(|| std::env::var("THREADS").ok().and_then(|v| v.parse().ok()));
    match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .context("building the thread pool")?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs already expanded jobs in submission order.
pub fn run_jobs(
    jobs: &[(CheckSpec, u32)],
    opts: &RunOptions,
) -> Result<Vec<CheckReport>> {
    guard(jobs, opts.force)?;
    let results = with_pool(opts.threads, || run_checks(jobs))?;
    let mut out = Vec::with_capacity(results.len());
    for (r, (spec, m)) in results.into_iter().zip(jobs) {
        let mut rep = r.with_context(|| format!("{} at m = {m}", spec.theorem))?;
        if !opts.timing {
            rep.runtime_ms = 0;
        }
        out.push(rep);
    }
    Ok(out)
}

pub fn run_scenario_text(text: &str, opts: &RunOptions) -> Result<ReportBundle> {
    let start = Instant::now();
    let sc = parse_scenario(text)?;
    let jobs = sc.jobs(opts.levels.as_deref())?;
    let threads = opts.threads.or(sc.threads);
    let checks = run_jobs(
        &jobs,
        &RunOptions {
            threads,
            ..opts.clone()
        },
    )?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(budget) = sc.time_budget_s {
        if wall > budget {
            eprintln!("warning: scenario took {wall:.1} s, budget {budget} s");
        }
    }
    Ok(ReportBundle {
        provenance: Provenance {
            scenario: sc.name.clone().unwrap_or_default(),
            scenario_hash: scenario_hash(text),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: opts.seed.unwrap_or(sc.seed),
            wall_time_ms: if opts.timing { (wall * 1e3) as u64 } else { 0 },
        },
        checks,
        iso: Vec::new(),
        counterexamples: Vec::new(),
    })
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<ReportBundle> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    run_scenario_text(&text, opts)
}
