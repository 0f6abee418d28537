//! The built-in corpus: closed-form instances, inequality sweeps, isoperimetric sets and
//! counterexample tables.

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fraclab_core::dyadic::cz_decompose;
use fraclab_core::ineq_lab::{
    run_counterexample, CheckReport, CheckSpec, CounterEngine, CounterFamily, CounterParams,
    CounterTable, InequalityParams, TheoremId,
};
use fraclab_core::isoperimetry::{annulus_deviation, frac_isoperimetric_ratio, IsoReport};
use fraclab_core::lattice::{CellBox, CellSet, FieldSpec, Grid, MeasureSpec};
use fraclab_core::{par, LabError};

use crate::report::{Provenance, ReportBundle};
use crate::scenario::{run_jobs, with_pool, RunOptions};

pub const DELTAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
/// Positions inside the admissible `q` range.
pub const Q_POSITIONS: [f64; 3] = [0.0, 0.5, 1.0];
/// Coarse and fine depths per dimension for the refinement comparison.
pub const LEVELS_1D: [u32; 2] = [8, 10];
pub const LEVELS_2D: [u32; 2] = [5, 7];
pub const ISO_LEVELS: [u32; 3] = [5, 6, 7];
pub const ISO_SCALES: [u32; 3] = [1, 2, 3];
pub const ISO_SET_COUNT: usize = 200;
/// Depth of the small-region instances; `2x2`-cell cubes first fit the side bound here.
pub const SMALL_REGION_DEPTH: u32 = 9;
const SMALL_REGION_PER_SET: usize = 2;
const CZ_LEVEL: u32 = 4;

fn mid(dim: usize) -> Option<Vec<f64>> {
    Some(vec![0.5; dim])
}

fn spot(dim: usize) -> Vec<f64> {
    [0.3, 0.6, 0.45][..dim].to_vec()
}

pub fn linear(dim: usize) -> FieldSpec {
    FieldSpec::Linear {
        slope: vec![1.0; dim],
        offset: 0.0,
    }
}

fn ramp() -> FieldSpec {
    FieldSpec::Ramp {
        axis: 0,
        cut: 0.5,
        width: 0.25,
    }
}

/// Lebesgue, centred ball, centred power density and an off-centre point mass.
pub fn measures(dim: usize) -> Vec<Option<MeasureSpec>> {
    vec![
        None,
        Some(MeasureSpec::NormalizedBall {
            radius: 0.25,
            center: mid(dim),
        }),
        Some(MeasureSpec::PowerDensity {
            beta: 0.5,
            center: mid(dim),
        }),
        Some(MeasureSpec::PointMass {
            at: spot(dim),
            mass: 1.0,
        }),
    ]
}

fn spec(theorem: TheoremId, params: InequalityParams, dim: usize, field: FieldSpec) -> CheckSpec {
    CheckSpec {
        theorem,
        params,
        dim,
        corner: None,
        side: 1.0,
        field,
        measure: None,
        weight: None,
    }
}

fn levels(dim: usize) -> [u32; 2] {
    if dim == 1 {
        LEVELS_1D
    } else {
        LEVELS_2D
    }
}

/// Instances with known values: WFP (0.2165), WCP (0.25) and both gradient variants (8/3).
pub fn closed_form_jobs() -> Vec<(CheckSpec, u32)> {
    let half = InequalityParams::default();
    vec![
        (
            spec(
                TheoremId::Wfp,
                InequalityParams {
                    q: Some(2.0),
                    ..half
                },
                1,
                linear(1),
            ),
            12,
        ),
        (
            spec(
                TheoremId::Wcp,
                InequalityParams {
                    q: Some(1.0),
                    ..half
                },
                1,
                linear(1),
            ),
            12,
        ),
        (spec(TheoremId::Frac2Grad, half, 1, linear(1)), 12),
        (spec(TheoremId::Frac2GradSide, half, 1, linear(1)), 12),
    ]
}

/// Every WFP instance at both refinement levels, coarse level first.
pub fn wfp_jobs() -> Vec<(CheckSpec, u32)> {
    let mut jobs = Vec::new();
    for dim in [1usize, 2] {
        for &delta in &DELTAS {
            let top = dim as f64 / (dim as f64 - delta);
            for &t in &Q_POSITIONS {
                let q = 1.0 + t * (top - 1.0);
                for measure in measures(dim) {
                    for field in [linear(dim), ramp()] {
                        let mut s = spec(
                            TheoremId::Wfp,
                            InequalityParams {
                                delta,
                                q: Some(q),
                                ..Default::default()
                            },
                            dim,
                            field,
                        );
                        s.measure = measure.clone();
                        for m in levels(dim) {
                            jobs.push((s.clone(), m));
                        }
                    }
                }
            }
        }
    }
    jobs
}

/// WCP instances; in 1D `q` is free and runs over `1, 1.5, 2`.
pub fn wcp_jobs() -> Vec<(CheckSpec, u32)> {
    let mut jobs = Vec::new();
    for dim in [1usize, 2] {
        for &t in &Q_POSITIONS {
            let q = 1.0 + t;
            for measure in measures(dim) {
                for field in [linear(dim), ramp()] {
                    let mut s = spec(
                        TheoremId::Wcp,
                        InequalityParams {
                            q: Some(q),
                            ..Default::default()
                        },
                        dim,
                        field,
                    );
                    s.measure = measure.clone();
                    for m in levels(dim) {
                        jobs.push((s.clone(), m));
                    }
                }
            }
        }
    }
    jobs
}

fn riesz_measures(dim: usize) -> Vec<Option<MeasureSpec>> {
    let mut v = measures(dim);
    v.push(Some(MeasureSpec::SingleCell {
        index: 0,
        mass: 1.0,
    }));
    v
}

/// 50 instances: 5 measures by 5 orders in each of 1D (`m = 8`) and 2D (`m = 6`).
pub fn riesz_jobs() -> Vec<(CheckSpec, u32)> {
    let mut jobs = Vec::new();
    for (dim, m, alphas) in [
        (1usize, 8u32, [0.1, 0.3, 0.5, 0.7, 0.9]),
        (2, 6, [0.2, 0.6, 1.0, 1.4, 1.8]),
    ] {
        for measure in riesz_measures(dim) {
            for alpha in alphas {
                let mut s = spec(
                    TheoremId::Riesz,
                    InequalityParams {
                        alpha: Some(alpha),
                        ..Default::default()
                    },
                    dim,
                    FieldSpec::Constant { value: 0.0 },
                );
                s.measure = measure.clone();
                jobs.push((s, m));
            }
        }
    }
    jobs
}

/// `(p, δ)` pairs with `(p - 1)/p < δ < 1`.
pub const FRAC2GRAD_PD: [(f64, f64); 3] = [(1.0, 0.5), (1.5, 0.6), (2.0, 0.75)];

/// 30 instances, each run in both variants (mass over `|Q|`, and side length).
pub fn frac2grad_jobs() -> Vec<(CheckSpec, u32)> {
    let mut jobs = Vec::new();
    for (dim, m) in [(1usize, 8u32), (2, 5)] {
        let fields = [
            linear(dim),
            ramp(),
            FieldSpec::RadialPower {
                beta: 0.5,
                center: mid(dim),
            },
        ];
        let mut i = 0;
        for (p, delta) in FRAC2GRAD_PD {
            for measure in riesz_measures(dim) {
                for theorem in [TheoremId::Frac2Grad, TheoremId::Frac2GradSide] {
                    let mut s = spec(
                        theorem,
                        InequalityParams {
                            p,
                            delta,
                            ..Default::default()
                        },
                        dim,
                        fields[i % fields.len()].clone(),
                    );
                    s.measure = measure.clone();
                    jobs.push((s, m));
                }
                i += 1;
            }
        }
    }
    jobs
}

/// Resolution-independent planar sets, rasterised at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IsoSet {
    /// `{x . (cos θ, sin θ) < offset}`
    HalfPlane { angle: f64, offset: f64 },
    /// Square of side `size` in the corner numbered `corner` (bit 0: x high, bit 1: y high).
    Quadrant { corner: u8, size: f64 },
    Ball { center: [f64; 2], radius: f64 },
    /// Union of dyadic cubes at `level`, given as a row-major membership mask.
    DyadicUnion { level: u32, mask: Vec<bool> },
}

impl IsoSet {
    fn contains(&self, x: [f64; 3]) -> bool {
        match self {
            IsoSet::HalfPlane { angle, offset } => x[0] * angle.cos() + x[1] * angle.sin() < *offset,
            IsoSet::Quadrant { corner, size } => (0..2).all(|a| {
                if (corner >> a) & 1 == 1 {
                    x[a] > 1.0 - size
                } else {
                    x[a] < *size
                }
            }),
            IsoSet::Ball { center, radius } => {
                (x[0] - center[0]).hypot(x[1] - center[1]) < *radius
            }
            IsoSet::DyadicUnion { level, mask } => {
                let per = 1usize << level;
                let i = ((x[0] * per as f64) as usize).min(per - 1);
                let j = ((x[1] * per as f64) as usize).min(per - 1);
                mask[i + per * j]
            }
        }
    }

    /// The rasterised set, replaced by its complement when it covers more than half.
    pub fn rasterize(&self, m: u32) -> Result<CellSet> {
        let grid = Grid::unit(2, m)?;
        let set = CellSet::from_fn(grid, |x| self.contains(x));
        if 2 * set.count() > grid.len() {
            let flipped = set.members().iter().map(|b| !b).collect();
            return Ok(CellSet::new(grid, flipped)?);
        }
        Ok(set)
    }
}

/// Union of the Calderón-Zygmund cubes of a random coarse set.
fn cz_union(rng: &mut ChaCha8Rng) -> Result<IsoSet> {
    let grid = Grid::unit(2, CZ_LEVEL)?;
    loop {
        let fill: f64 = rng.gen_range(0.05..0.5);
        let raw: Vec<bool> = (0..grid.len()).map(|_| rng.gen_bool(fill)).collect();
        let set = CellSet::new(grid, raw)?;
        let lambda: f64 = rng.gen_range(0.1..0.9);
        let fam = match cz_decompose(&set, lambda) {
            Ok(f) => f,
            Err(LabError::Precondition(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut mask = vec![false; grid.len()];
        for b in &fam.members {
            for i in b.cells(&grid) {
                mask[i] = true;
            }
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 || count == grid.len() {
            continue;
        }
        return Ok(IsoSet::DyadicUnion {
            level: CZ_LEVEL,
            mask,
        });
    }
}

/// 30 half-planes, 12 corner squares, 58 balls and 100 dyadic unions.
pub fn iso_sets(seed: u64) -> Result<Vec<IsoSet>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(ISO_SET_COUNT);
    for a in 0..6 {
        let angle = a as f64 * std::f64::consts::PI / 6.0;
        let reach = angle.cos().max(0.0) + angle.sin().max(0.0);
        let low = angle.cos().min(0.0) + angle.sin().min(0.0);
        for o in 1..=5 {
            let offset = low + (reach - low) * o as f64 / 6.0;
            sets.push(IsoSet::HalfPlane { angle, offset });
        }
    }
    for corner in 0..4u8 {
        for size in [0.25, 0.5, 0.75] {
            sets.push(IsoSet::Quadrant { corner, size });
        }
    }
    for _ in 0..58 {
        let center = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
        let radius = rng.gen_range(0.08..0.35);
        sets.push(IsoSet::Ball { center, radius });
    }
    while sets.len() < ISO_SET_COUNT {
        sets.push(cz_union(&mut rng)?);
    }
    Ok(sets)
}

/// Fractional isoperimetric ratios (`s = 0`) for every set, depth and scale whose density
/// window holds. Order: set-major, then depth, then scale.
pub fn iso_reports(sets: &[IsoSet]) -> Result<Vec<IsoReport>> {
    let per_set = par::map_range(sets.len(), |i| -> Result<Vec<IsoReport>> {
        let mut out = Vec::new();
        for m in ISO_LEVELS {
            let e = sets[i].rasterize(m)?;
            for k in ISO_SCALES {
                match frac_isoperimetric_ratio(&e, None, k, 0.0) {
                    Ok(r) => out.push(r),
                    Err(LabError::Precondition(_)) => {}
                    Err(err) => return Err(err.into()),
                }
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_set {
        all.extend(r?);
    }
    Ok(all)
}

/// `2x2`-cell cubes on the boundary of each set, at most two per set, checked against
/// `|Q| <= (4/ε) ∫_Q |1_E - density over the annulus|` with `a = 1/2`, `ε = 1/4`.
pub fn small_region_reports(sets: &[IsoSet]) -> Result<Vec<IsoReport>> {
    let per_set = par::map_range(sets.len(), |i| -> Result<Vec<IsoReport>> {
        let e = sets[i].rasterize(SMALL_REGION_DEPTH)?;
        let grid = *e.grid();
        let per = grid.cells_per_axis();
        let mut candidates = Vec::new();
        for y in 0..per - 1 {
            for x in 0..per - 1 {
                let q = CellBox::new([x, y, 0], 2);
                let c = e.count_in(&q);
                if c > 0 && c < 4 {
                    candidates.push(q);
                }
            }
        }
        let take = candidates.len().min(SMALL_REGION_PER_SET);
        let mut out = Vec::with_capacity(take);
        for j in 0..take {
            let q = candidates[j * candidates.len() / take];
            out.push(annulus_deviation(&e, None, q, 0.5, 0.25)?);
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_set {
        all.extend(r?);
    }
    Ok(all)
}

/// The three blow-up tables: PQ-CLASSICAL and ALPHA-CLASSICAL (radial, `k = 2..8`) and
/// PQ-CLASSICAL on the grid at `k = 3`.
pub fn counterexample_tables() -> Result<Vec<CounterTable>> {
    let pq = CounterParams {
        dim: 2,
        p: 1.5,
        ..Default::default()
    };
    let alpha = CounterParams {
        dim: 2,
        p: 1.0,
        epsilon: 0.5,
        ..Default::default()
    };
    Ok(vec![
        run_counterexample(CounterFamily::PqClassical, 2, 8, &pq, CounterEngine::Radial)?,
        run_counterexample(CounterFamily::AlphaClassical, 2, 8, &alpha, CounterEngine::Radial)?,
        run_counterexample(
            CounterFamily::PqClassical,
            3,
            3,
            &pq,
            CounterEngine::Grid { depth: 10 },
        )?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub closed_forms: Vec<CheckReport>,
    pub wfp: Vec<CheckReport>,
    pub wcp: Vec<CheckReport>,
    pub riesz: Vec<CheckReport>,
    pub frac2grad: Vec<CheckReport>,
    pub iso: Vec<IsoReport>,
    pub small_region: Vec<IsoReport>,
    pub counterexamples: Vec<CounterTable>,
    pub wall_time_ms: u64,
}

pub fn run_suite(opts: &RunOptions) -> Result<Suite> {
    let start = std::time::Instant::now();
    let seed = opts.seed.unwrap_or(0);
    let checks = |jobs: Vec<(CheckSpec, u32)>, what: &str| {
        run_jobs(&jobs, opts).with_context(|| format!("{what} corpus"))
    };
    let closed_forms = checks(closed_form_jobs(), "closed-form")?;
    let wfp = checks(wfp_jobs(), "WFP")?;
    let wcp = checks(wcp_jobs(), "WCP")?;
    let riesz = checks(riesz_jobs(), "RIESZ")?;
    let frac2grad = checks(frac2grad_jobs(), "FRAC2GRAD")?;
    let (iso, small_region, counterexamples) = with_pool(opts.threads, || -> Result<_> {
        let sets = iso_sets(seed)?;
        Ok((
            iso_reports(&sets)?,
            small_region_reports(&sets)?,
            counterexample_tables()?,
        ))
    })??;
    let wall = start.elapsed().as_millis() as u64;
    Ok(Suite {
        closed_forms,
        wfp,
        wcp,
        riesz,
        frac2grad,
        iso,
        small_region,
        counterexamples,
        wall_time_ms: if opts.timing { wall } else { 0 },
    })
}

impl Suite {
    pub fn bundle(&self, seed: u64) -> ReportBundle {
        let checks = [
            &self.closed_forms,
            &self.wfp,
            &self.wcp,
            &self.riesz,
            &self.frac2grad,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
        ReportBundle {
            provenance: Provenance {
                scenario: "corpus".into(),
                scenario_hash: String::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                wall_time_ms: self.wall_time_ms,
            },
            checks,
            iso: self.iso.iter().chain(&self.small_region).cloned().collect(),
            counterexamples: self.counterexamples.clone(),
        }
    }
}
