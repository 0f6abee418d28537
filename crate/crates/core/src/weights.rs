//! Weight construction, Muckenhoupt constant estimates and summability functionals.
//!
//! Suprema over "all cubes" run over a fixed search family: every dyadic subcube of the root
//! plus its translates by one and two thirds of its side (rounded to whole cells) that still
//! fit inside the root.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    cz_decompose, dyadic_fractional_maximal, local_maximal, shift_offsets, MaximalMode,
};
use crate::error::{constraint, LabError, Result};
use crate::kernels::{gagliardo_form, KernelJob};
use crate::lattice::{
    level_set, sample_measure, CellBox, CellMeasure, Direction, Grid, MeasureSpec, ScalarField,
    WeightField,
};
use crate::par;
use crate::reduce::CompensatedSum;

/// Above this many cells a searched cube uses the shifted maximal function for `A_∞`.
const AINF_BRUTE_CELLS: usize = 1 << 12;
/// Dynamic range of the weight beyond which averages of powers are taken in log space.
const LOG_SPACE_RANGE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant {
        #[serde(default = "unit")]
        value: f64,
    },
    /// `|x - center|^beta`, centred at the grid cube centre by default.
    Power {
        beta: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `(M^d_α μ)^exponent`.
    Maximal {
        measure: MeasureSpec,
        alpha: f64,
        exponent: f64,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

pub fn make_weight(spec: &WeightSpec, grid: &Grid) -> Result<WeightField> {
    let dim = grid.dim();
    match spec {
        WeightSpec::Constant { value } => WeightField::constant(*grid, *value),
        WeightSpec::Power { beta, center } => {
            if !(*beta > -(dim as f64)) {
                return Err(constraint("beta", format!("must exceed -{dim}")));
            }
            let c = match center {
                Some(v) if v.len() == dim => {
                    let mut c = [0.0; 3];
                    c[..dim].copy_from_slice(v);
                    c
                }
                Some(_) => return Err(constraint("center", format!("expected {dim} coordinates"))),
                None => grid.cube().center(),
            };
            let density = (0..grid.len())
                .map(|i| {
                    let x = grid.center(i);
                    let r2: f64 = (0..dim).map(|a| (x[a] - c[a]) * (x[a] - c[a])).sum();
                    r2.sqrt().powf(*beta)
                })
                .collect();
            WeightField::new(*grid, density)
        }
        WeightSpec::Maximal {
            measure,
            alpha,
            exponent,
        } => {
            let mu = sample_measure(measure, grid)?;
            maximal_weight(&mu, *alpha, *exponent)
        }
        WeightSpec::Tabulated { values } => WeightField::new(*grid, values.clone()),
    }
}

/// `(M^d_α μ)^t` with `t ∈ (0, 1]`.
pub fn maximal_weight(mu: &CellMeasure, alpha: f64, t: f64) -> Result<WeightField> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(constraint("exponent", "must lie in (0, 1]"));
    }
    if mu.total() <= 0.0 {
        return Err(LabError::ZeroMass("maximal weight"));
    }
    let m = dyadic_fractional_maximal(mu, alpha)?;
    WeightField::new(*mu.grid(), m.values().iter().map(|v| v.powf(t)).collect())
}

/// Dyadic cubes of `root` and their one-third translates inside `root`.
pub fn search_family(grid: &Grid, root: CellBox) -> Vec<CellBox> {
    let dim = grid.dim();
    let mut out = Vec::new();
    let mut t = root.size;
    while t >= 1 {
        let offs = shift_offsets(t);
        let combos = offs.len().pow(dim as u32);
        for ci in 0..combos {
            let mut o = [0usize; 3];
            let mut r = ci;
            for oa in o.iter_mut().take(dim) {
                *oa = offs[r % offs.len()];
                r /= offs.len();
            }
            let mut per = [1usize; 3];
            for a in 0..dim {
                per[a] = (root.size - o[a]) / t;
            }
            let count: usize = per[..dim].iter().product();
            for k in 0..count {
                let mut lo = [0; 3];
                let mut r = k;
                for a in 0..dim {
                    lo[a] = root.lo[a] + o[a] + (r % per[a]) * t;
                    r /= per[a];
                }
                out.push(CellBox { lo, size: t });
            }
        }
        if t == 1 {
            break;
        }
        t /= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub a1: f64,
    /// `(p, [w]_{A_p})` pairs.
    pub ap: Vec<(f64, f64)>,
    pub ainf: f64,
    pub family: String,
    pub family_size: usize,
}

fn dynamic_range(w: &WeightField) -> f64 {
    let d = w.density();
    let max = d.iter().copied().fold(0.0, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// `log` of the average of `w^e` over a box.
fn log_power_average(w: &WeightField, b: &CellBox, e: f64, log_space: bool) -> f64 {
    let grid = w.grid();
    let d = w.density();
    let n = b.cell_count(grid.dim()) as f64;
    if !log_space {
        let s: CompensatedSum = b
            .cells(grid)
            .map(|i| if e == 1.0 { d[i] } else { d[i].powf(e) })
            .collect();
        return (s.value() / n).ln();
    }
    let top = b
        .cells(grid)
        .map(|i| e * d[i].ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let s: CompensatedSum = b.cells(grid).map(|i| (e * d[i].ln() - top).exp()).collect();
    top + (s.value() / n).ln()
}

/// `sup_Q ⟨w⟩_Q ⟨w^{1-p'}⟩_Q^{p-1}` over the search family.
pub fn ap_constant(w: &WeightField, p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(constraint("p", "must exceed 1 for the A_p product"));
    }
    let grid = *w.grid();
    let family = search_family(&grid, grid.whole());
    let log_space = dynamic_range(w) > LOG_SPACE_RANGE;
    let e = 1.0 - p / (p - 1.0);
    let vals = par::map_range(family.len(), |j| {
        let b = &family[j];
        let lw = log_power_average(w, b, 1.0, log_space);
        let lv = log_power_average(w, b, e, log_space);
        if log_space {
            (lw + (p - 1.0) * lv).exp()
        } else {
            let aw = lw.exp();
            let av = lv.exp();
            aw * av.powf(p - 1.0)
        }
    });
    Ok(vals.into_iter().fold(0.0, f64::max))
}

fn auto_mode(cells: usize) -> MaximalMode {
    if cells <= crate::dyadic::BRUTE_CELL_LIMIT {
        MaximalMode::Brute
    } else {
        MaximalMode::Shifted
    }
}

/// `max_x Mw(x) / w(x)`.
pub fn a1_constant(w: &WeightField, mode: Option<MaximalMode>) -> Result<f64> {
    let grid = *w.grid();
    let mode = mode.unwrap_or_else(|| auto_mode(grid.len()));
    let mu = w.as_measure();
    let m = crate::dyadic::global_fractional_maximal(&mu, 0.0, mode)?;
    Ok(m.values()
        .iter()
        .zip(w.density())
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max))
}

/// Fujii-Wilson constant `sup_Q w(Q)^{-1} ∫_Q M(1_Q w)`.
pub fn ainf_constant(w: &WeightField) -> Result<f64> {
    let grid = *w.grid();
    let dim = grid.dim();
    let h = grid.width();
    let hv = grid.cell_volume();
    let family = search_family(&grid, grid.whole());
    let d = w.density();
    let vals = par::map_range(family.len(), |j| {
        let b = &family[j];
        let masses: Vec<f64> = b.cells(&grid).map(|i| d[i] * hv).collect();
        let mode = if masses.len() <= AINF_BRUTE_CELLS {
            MaximalMode::BruteUnguarded
        } else {
            MaximalMode::Shifted
        };
        let m = local_maximal(&masses, b.size, dim, h, 0.0, mode);
        let num: CompensatedSum = m.iter().map(|v| v * hv).collect();
        let den: CompensatedSum = masses.iter().copied().collect();
        num.value() / den.value()
    });
    Ok(vals.into_iter().fold(0.0, f64::max))
}

pub fn weight_report(w: &WeightField, ps: &[f64]) -> Result<WeightReport> {
    let grid = *w.grid();
    let ap = ps
        .iter()
        .map(|&p| Ok((p, ap_constant(w, p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightReport {
        a1: a1_constant(w, None)?,
        ap,
        ainf: ainf_constant(w)?,
        family: "dyadic+third-shifts".to_string(),
        family_size: search_family(&grid, grid.whole()).len(),
    })
}

/// `(1-δ)^{1/p} δ^{1/p-1} ℓ(Q)^δ (w(Q)^{-1} ∫_Q∫_Q |f(x)-f(y)|^p |x-y|^{-n-δp} w(x))^{1/p}`.
pub fn functional_af(
    f: &ScalarField,
    w: &WeightField,
    region: Option<CellBox>,
    delta: f64,
    p: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(constraint("delta", "must lie in (0, 1)"));
    }
    f.grid().same_as(w.grid())?;
    let grid = *f.grid();
    let b = region.unwrap_or_else(|| grid.whole());
    let mut job = KernelJob::new(f, delta, p).with_outer(w.density());
    job.region = Some(b);
    let form = gagliardo_form(&job)?;
    let wq = w.mass_of(&b);
    Ok((1.0 - delta).powf(1.0 / p)
        * delta.powf(1.0 / p - 1.0)
        * b.side(&grid).powf(delta)
        * (form / wq).powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DpMode {
    Dp { p: f64 },
    SDp { p: f64, s: f64 },
}

impl DpMode {
    fn p(&self) -> f64 {
        match self {
            DpMode::Dp { p } | DpMode::SDp { p, .. } => *p,
        }
    }
}

pub enum FamilySource<'a> {
    /// Calderón-Zygmund families of the super-level sets of `field` at its deciles.
    CzFamilies {
        field: &'a ScalarField,
        lambdas: Vec<f64>,
    },
    /// Random stopping families, seeded.
    RandomFamilies {
        count: usize,
        seed: u64,
        max_gen: u32,
    },
    /// Every disjoint family of dyadic cubes down to `max_gen`, by dynamic programming.
    CoarseExhaustive { max_gen: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpEstimate {
    /// A lower bound of the supremum over all disjoint dyadic families.
    pub value: f64,
    pub families: usize,
    pub source: String,
}

/// `(Σ a(Q_i)^p w(Q_i)/w(Q))^{1/p} / a(Q)` for one family inside the grid cube `Q`, divided by
/// `(|∪Q_i|/|Q|)^{1/s}` in the `SD` mode.
pub fn family_ratio(
    a: &(dyn Fn(&CellBox) -> f64 + Sync),
    w: &WeightField,
    mode: DpMode,
    family: &[CellBox],
) -> Result<f64> {
    let grid = *w.grid();
    let dim = grid.dim();
    let root = grid.whole();
    let p = mode.p();
    let sum: CompensatedSum = family.iter().map(|b| a(b).powf(p) * w.mass_of(b)).collect();
    let sum = sum.value();
    if sum == 0.0 {
        return Ok(0.0);
    }
    let a_root = a(&root);
    if a_root == 0.0 {
        return Err(LabError::Precondition(
            "a(Q) = 0 with a non-zero family sum".into(),
        ));
    }
    let mut v = (sum / w.mass_of(&root)).powf(1.0 / p) / a_root;
    if let DpMode::SDp { s, .. } = mode {
        let cells: usize = family.iter().map(|b| b.cell_count(dim)).sum();
        v /= (cells as f64 / root.cell_count(dim) as f64).powf(1.0 / s);
    }
    Ok(v)
}

fn dyadic_box(root: &CellBox, dim: usize, g: u32, c: [usize; 3]) -> CellBox {
    let size = root.size >> g;
    let mut lo = [0; 3];
    for a in 0..dim {
        lo[a] = root.lo[a] + c[a] * size;
    }
    CellBox { lo, size }
}

/// Lower bound of the `D_p` / `SD_p^s` constant of a cube functional `a` at the grid cube.
pub fn dp_sd_constant(
    a: &(dyn Fn(&CellBox) -> f64 + Sync),
    w: &WeightField,
    mode: DpMode,
    source: FamilySource,
) -> Result<DpEstimate> {
    let grid = *w.grid();
    let dim = grid.dim();
    let root = grid.whole();
    let p = mode.p();
    if !(p >= 1.0) {
        return Err(constraint("p", "must be at least 1"));
    }
    if let DpMode::SDp { s, .. } = mode {
        if !(s > 0.0) {
            return Err(constraint("s", "must be positive"));
        }
    }
    let a_root = a(&root);
    let w_root = w.mass_of(&root);
    let root_cells = root.cell_count(dim) as f64;
    let score = |sum: f64, cells: f64| -> Result<f64> {
        if sum == 0.0 {
            return Ok(0.0);
        }
        if a_root == 0.0 {
            return Err(LabError::Precondition(
                "a(Q) = 0 with a non-zero family sum".into(),
            ));
        }
        let mut v = (sum / w_root).powf(1.0 / p) / a_root;
        if let DpMode::SDp { s, .. } = mode {
            v /= (cells / root_cells).powf(1.0 / s);
        }
        Ok(v)
    };
    let family_score = |fam: &[CellBox]| family_ratio(a, w, mode, fam);
    match source {
        FamilySource::CzFamilies { field, lambdas } => {
            field.grid().same_as(&grid)?;
            let mut sorted = field.values().to_vec();
            sorted.sort_by(|x, y| x.total_cmp(y));
            let mut fams = Vec::new();
            for &lambda in &lambdas {
                for dec in 1..10 {
                    let t = sorted[(sorted.len() * dec / 10).min(sorted.len() - 1)];
                    let e = level_set(field, t, Direction::Above);
                    if e.count() == 0 {
                        continue;
                    }
                    if let Ok(f) = cz_decompose(&e, lambda) {
                        if !f.is_empty() {
                            fams.push(f.members);
                        }
                    }
                }
            }
            let scores = par::map_range(fams.len(), |j| family_score(&fams[j]));
            let mut best: f64 = 0.0;
            for s in scores {
                best = best.max(s?);
            }
            Ok(DpEstimate {
                value: best,
                families: fams.len(),
                source: "cz_families".into(),
            })
        }
        FamilySource::RandomFamilies {
            count,
            seed,
            max_gen,
        } => {
            let max_gen = max_gen.min(grid.depth());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fams = Vec::with_capacity(count);
            for _ in 0..count {
                let mut fam = Vec::new();
                let mut stack = vec![(0u32, [0usize; 3])];
                while let Some((g, c)) = stack.pop() {
                    let u: f64 = rng.gen();
                    if u < 0.35 || (g == max_gen && u < 0.7) {
                        fam.push(dyadic_box(&root, dim, g, c));
                    } else if u < 0.7 || g == max_gen {
                        continue;
                    } else {
                        for bits in 0..(1usize << dim) {
                            let mut d = [0; 3];
                            for ax in 0..dim {
                                d[ax] = 2 * c[ax] + ((bits >> ax) & 1);
                            }
                            stack.push((g + 1, d));
                        }
                    }
                }
                fams.push(fam);
            }
            let scores = par::map_range(fams.len(), |j| family_score(&fams[j]));
            let mut best: f64 = 0.0;
            for s in scores {
                best = best.max(s?);
            }
            Ok(DpEstimate {
                value: best,
                families: count,
                source: format!("random_families(seed={seed})"),
            })
        }
        FamilySource::CoarseExhaustive { max_gen } => {
            let max_gen = max_gen.min(grid.depth());
            let units = 1usize << (max_gen as usize * dim);
            if units > 4096 {
                return Err(LabError::ResourceGuard(format!(
                    "exhaustive search over {units} volume units"
                )));
            }
            let table = exhaustive(a, w, &root, dim, p, max_gen, 0, [0; 3]);
            let mut best: f64 = 0.0;
            for (v, &sum) in table.iter().enumerate().skip(1) {
                if sum.is_finite() {
                    let cells = v as f64 / units as f64 * root_cells;
                    best = best.max(score(sum, cells)?);
                }
            }
            Ok(DpEstimate {
                value: best,
                families: 0,
                source: format!("coarse_exhaustive(max_gen={max_gen})"),
            })
        }
    }
}

/// Best `Σ a^p w` per covered volume (in units of generation-`max_gen` cubes) over disjoint
/// families inside the dyadic cube `(g, c)`. `-∞` marks unreachable volumes.
#[allow(clippy::too_many_arguments)]
fn exhaustive(
    a: &(dyn Fn(&CellBox) -> f64 + Sync),
    w: &WeightField,
    root: &CellBox,
    dim: usize,
    p: f64,
    max_gen: u32,
    g: u32,
    c: [usize; 3],
) -> Vec<f64> {
    let units = 1usize << ((max_gen - g) as usize * dim);
    let b = dyadic_box(root, dim, g, c);
    let own = a(&b).powf(p) * w.mass_of(&b);
    let mut best = vec![f64::NEG_INFINITY; units + 1];
    best[0] = 0.0;
    if g < max_gen {
        for bits in 0..(1usize << dim) {
            let mut d = [0; 3];
            for ax in 0..dim {
                d[ax] = 2 * c[ax] + ((bits >> ax) & 1);
            }
            let child = exhaustive(a, w, root, dim, p, max_gen, g + 1, d);
            let mut next = vec![f64::NEG_INFINITY; units + 1];
            for (i, &x) in best.iter().enumerate() {
                if x == f64::NEG_INFINITY {
                    continue;
                }
                for (j, &y) in child.iter().enumerate() {
                    if y != f64::NEG_INFINITY && i + j <= units && x + y > next[i + j] {
                        next[i + j] = x + y;
                    }
                }
            }
            best = next;
        }
    }
    if own > best[units] {
        best[units] = own;
    }
    best
}
