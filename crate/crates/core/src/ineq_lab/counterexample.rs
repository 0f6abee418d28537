//! Blow-up families `f_k = min(-log|x|, k)` with `μ_k` the normalised Lebesgue measure of
//! `B(0, e^{-k})`, on the cube `Q0` centred at the origin with side `1/√n`.
//!
//! The radial engine integrates in `r` with the exact fraction of each sphere that lies in
//! `Q0`. Maximal functions of `μ_k` are replaced by the majorant
//! `M̄_β(r) = max(σ_n^{1/n} ρ, (r - ρ)_+ / √n)^{β - n}`, `ρ = e^{-k}`, which bounds
//! `M_β μ_k(x)` from above at `|x| = r`. The grid engine samples the same objects on cells.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{constraint, LabError, Result};
use crate::kernels::{gagliardo_form, KernelJob};
use crate::lattice::{
    average, gradient_magnitude, sample_field, sample_measure, unit_ball_volume, Cube, FieldSpec,
    Grid, MeasureSpec,
};
use crate::quadrature::Rule;
use crate::reduce::tiled_sum;

/// Total panels of the radial quadrature.
const RADIAL_PANELS: usize = 100_000;
/// Largest grid on which the grid engine evaluates a fractional form without `force`.
const GRID_FORM_CELLS: usize = 1 << 14;
/// Largest grid the grid engine builds without `force`.
const GRID_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CounterFamily {
    #[serde(rename = "PQ-CLASSICAL")]
    PqClassical,
    #[serde(rename = "PQ-FRACTIONAL")]
    PqFractional,
    #[serde(rename = "ALPHA-CLASSICAL")]
    AlphaClassical,
    #[serde(rename = "ALPHA-FRACTIONAL")]
    AlphaFractional,
}

impl CounterFamily {
    pub const ALL: [CounterFamily; 4] = [
        CounterFamily::PqClassical,
        CounterFamily::PqFractional,
        CounterFamily::AlphaClassical,
        CounterFamily::AlphaFractional,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CounterFamily::PqClassical => "PQ-CLASSICAL",
            CounterFamily::PqFractional => "PQ-FRACTIONAL",
            CounterFamily::AlphaClassical => "ALPHA-CLASSICAL",
            CounterFamily::AlphaFractional => "ALPHA-FRACTIONAL",
        }
    }

    fn fractional(&self) -> bool {
        matches!(
            self,
            CounterFamily::PqFractional | CounterFamily::AlphaFractional
        )
    }

    fn alpha_shift(&self) -> bool {
        matches!(
            self,
            CounterFamily::AlphaClassical | CounterFamily::AlphaFractional
        )
    }
}

impl fmt::Display for CounterFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CounterFamily {
    type Err = LabError;

    fn from_str(s: &str) -> Result<CounterFamily> {
        CounterFamily::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| constraint("family", format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CounterEngine {
    Radial,
    Grid { depth: u32 },
}

fn two() -> usize {
    2
}

fn three_halves() -> f64 {
    1.5
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterParams {
    #[serde(default = "two")]
    pub dim: usize,
    /// Ignored by the ALPHA families, which have `p = 1`.
    #[serde(default = "three_halves")]
    pub p: f64,
    /// `p` for the PQ families and 1 for the ALPHA families when absent.
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default = "half")]
    pub delta: f64,
    #[serde(default = "half")]
    pub epsilon: f64,
    /// Lifts `p < 1/(1-δ)` for PQ-FRACTIONAL (grid engine only).
    #[serde(default)]
    pub allow_large_p: bool,
    /// Lifts the grid-size guards.
    #[serde(default)]
    pub force: bool,
}

impl Default for CounterParams {
    fn default() -> Self {
        CounterParams {
            dim: 2,
            p: 1.5,
            q: None,
            delta: 0.5,
            epsilon: 0.5,
            allow_large_p: false,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterRow {
    pub k: u32,
    /// `(k - c) μ_k(Q0)^{1/q}`.
    #[serde(with = "crate::real")]
    pub lhs_lower_bound: f64,
    /// `(∫_{Q0} |f_k - (f_k)_{Q0}|^q dμ_k)^{1/q}`.
    #[serde(with = "crate::real")]
    pub lhs_exact: f64,
    #[serde(with = "crate::real")]
    pub rhs_upper_bound: f64,
    /// `lhs_lower_bound / rhs_upper_bound`.
    #[serde(with = "crate::real")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterTable {
    pub family: CounterFamily,
    pub engine: CounterEngine,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    /// `∫_{Q0} |log|x|| dx`.
    #[serde(with = "crate::real")]
    pub c: f64,
    pub rows: Vec<CounterRow>,
    /// Ratio column strictly increasing.
    pub monotone: bool,
    /// Least-squares slope of `log ratio` against `log k` over positive ratios.
    #[serde(with = "crate::real")]
    pub growth_exponent: f64,
}

/// Half side of `Q0`.
fn half_side(n: usize) -> f64 {
    0.5 / (n as f64).sqrt()
}

fn sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

fn planar_fraction(a: f64, r: f64) -> f64 {
    if r <= a {
        1.0
    } else if r >= a * 2f64.sqrt() {
        0.0
    } else {
        1.0 - 4.0 / PI * (a / r).acos()
    }
}

/// Fraction of the sphere `|x| = r` lying in `Q0`.
pub fn angular_fraction(n: usize, r: f64) -> f64 {
    let a = half_side(n);
    match n {
        1 => {
            if r < a {
                1.0
            } else {
                0.0
            }
        }
        2 => planar_fraction(a, r),
        _ => {
            if r <= a {
                return 1.0;
            }
            if r >= a * 3f64.sqrt() {
                return 0.0;
            }
            // Archimedes: the height z on the sphere is uniform on [-r, r]
            let z2 = (r * r - a * a).max(0.0).sqrt();
            let z1 = (r * r - 2.0 * a * a).max(0.0).sqrt();
            let top = a.min(r);
            let mut acc = 0.0;
            if z2 < top {
                acc += top - z2;
            }
            let (lo, hi) = (z1, z2.min(top));
            if hi > lo {
                thread_local! {
                    static RULE: Rule = Rule::new(24);
                }
                let g = |z: f64| planar_fraction(a, (r * r - z * z).max(0.0).sqrt());
                acc += RULE.with(|rule| {
                    if hi == z2 {
                        // square-root behaviour at z2, removed by z = z2 - (z2 - lo) t^2
                        rule.integrate(0.0, 1.0, |t| {
                            2.0 * (hi - lo) * t * g(hi - (hi - lo) * t * t)
                        })
                    } else {
                        rule.integrate(lo, hi, g)
                    }
                });
            }
            acc / r
        }
    }
}

/// `∫_lo^hi g(r) F(r) |S^{n-1}| r^{n-1} dr` with logarithmically spaced Gauss-Legendre panels,
/// split at `breaks`.
fn radial_integral<G: Fn(f64) -> f64>(n: usize, lo: f64, hi: f64, breaks: &[f64], g: G) -> f64 {
    if !(hi > lo && lo > 0.0) {
        return 0.0;
    }
    let mut pts = vec![lo];
    let a = half_side(n);
    let mut all: Vec<f64> = breaks.to_vec();
    all.extend([a, a * 2f64.sqrt(), a * 3f64.sqrt()]);
    all.sort_by(|x, y| x.total_cmp(y));
    for b in all {
        if b > lo && b < hi && b > *pts.last().unwrap() {
            pts.push(b);
        }
    }
    pts.push(hi);
    let span = (hi / lo).ln();
    let rule = Rule::new(4);
    let nodes: Vec<(f64, f64)> = rule.points().collect();
    let area = sphere_area(n);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (u, v) = (w[0], w[1]);
        let count = ((RADIAL_PANELS as f64 * (v / u).ln() / span).round() as usize).max(8);
        let ratio = (v / u).powf(1.0 / count as f64);
        let terms: Vec<f64> = (0..count)
            .map(|j| {
                let p0 = u * ratio.powi(j as i32);
                let p1 = if j + 1 == count { v } else { p0 * ratio };
                let (mid, half) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
                nodes
                    .iter()
                    .map(|&(x, wt)| {
                        let r = mid + half * x;
                        wt * half * g(r) * angular_fraction(n, r) * area * r.powi(n as i32 - 1)
                    })
                    .sum()
            })
            .collect();
        total += tiled_sum(terms.len(), |j| terms[j]);
    }
    total
}

/// `∫_{Q0} min(|log|x||, cap) dx`; no cap when `cap` is `None`.
pub fn log_integral(n: usize, cap: Option<f64>) -> f64 {
    let a = half_side(n);
    let area = sphere_area(n);
    let nf = n as f64;
    let rmax = a * nf.sqrt();
    match cap {
        None => {
            // analytic on [0, t0], where the sphere is inside Q0
            let t0 = 0.5 * a;
            let inner =
                area * (t0.powi(n as i32) * (-t0.ln()) / nf + t0.powi(n as i32) / (nf * nf));
            inner + radial_integral(n, t0, rmax, &[], |r| -r.ln())
        }
        Some(k) => {
            let rho = (-k).exp();
            let t0 = rho.min(a);
            let inner = area * k * t0.powi(n as i32) / nf;
            let outer = radial_integral(n, t0, rmax, &[rho], |r| (-r.ln()).min(k));
            inner + outer
        }
    }
}

struct Resolved {
    p: f64,
    q: f64,
    alpha: f64,
    /// Order of the maximal function on the right.
    order: f64,
    /// Exponent of the maximal function on the right.
    power: f64,
}

fn resolve(family: CounterFamily, prm: &CounterParams) -> Result<Resolved> {
    let n = prm.dim;
    if !(1..=3).contains(&n) {
        return Err(constraint("dim", "must be 1, 2 or 3"));
    }
    let nf = n as f64;
    let delta = prm.delta;
    if family.fractional() && !(delta > 0.0 && delta < 1.0) {
        return Err(constraint("delta", "must lie in (0, 1)"));
    }
    let eps = prm.epsilon;
    let within = |q: f64, lo: f64, hi: f64| q >= lo - 1e-12 && q <= hi * (1.0 + 1e-12);
    match family {
        CounterFamily::PqClassical | CounterFamily::PqFractional => {
            let p = prm.p;
            let d = if family == CounterFamily::PqClassical {
                1.0
            } else {
                delta
            };
            if family == CounterFamily::PqClassical {
                if !(p > 1.0 && p < nf) {
                    return Err(constraint("p", format!("must lie in (1, {n})")));
                }
            } else {
                if !(p > 1.0 && p < nf / delta) {
                    return Err(constraint(
                        "p",
                        format!("must lie in (1, n/δ = {})", nf / delta),
                    ));
                }
                if !prm.allow_large_p && !(p < 1.0 / (1.0 - delta)) {
                    return Err(constraint(
                        "p",
                        format!(
                            "must be below 1/(1-δ) = {} (override available)",
                            1.0 / (1.0 - delta)
                        ),
                    ));
                }
            }
            let q = prm.q.unwrap_or(p);
            let upper = nf * p / (nf - d * p);
            if !within(q, p, upper) {
                return Err(constraint("q", format!("must lie in [{p}, {upper}]")));
            }
            let alpha = (nf - q / p * (nf - d * p)).max(0.0);
            Ok(Resolved {
                p,
                q,
                alpha,
                order: alpha,
                power: p / q,
            })
        }
        CounterFamily::AlphaClassical | CounterFamily::AlphaFractional => {
            let d = if family == CounterFamily::AlphaClassical {
                1.0
            } else {
                delta
            };
            let q = prm.q.unwrap_or(1.0);
            let gap = nf - d;
            if gap > 0.0 {
                if !within(q, 1.0, nf / gap) {
                    return Err(constraint("q", format!("must lie in [1, {}]", nf / gap)));
                }
            } else if !(q >= 1.0 && q.is_finite()) {
                return Err(constraint("q", "must be at least 1"));
            }
            let alpha = (nf - q * gap).max(0.0);
            if !(eps > 0.0 && alpha + eps <= nf + 1e-12) {
                return Err(constraint(
                    "epsilon",
                    format!("must satisfy 0 < ε <= n - α = {}", nf - alpha),
                ));
            }
            Ok(Resolved {
                p: 1.0,
                q,
                alpha,
                order: (alpha + eps).min(nf),
                power: 1.0 / q,
            })
        }
    }
}

fn majorant(n: usize, rho: f64, order: f64, r: f64) -> f64 {
    let nf = n as f64;
    let floor = unit_ball_volume(n).powf(1.0 / nf) * rho;
    let far = (r - rho).max(0.0) / nf.sqrt();
    floor.max(far).powf(order - nf)
}

/// Prefactor and `A_1` bound for the fractional families, which pass through the gradient
/// bound with side factor.
fn fractional_constants(
    family: CounterFamily,
    n: usize,
    delta: f64,
    r: &Resolved,
    eps: f64,
) -> (f64, f64) {
    let nf = n as f64;
    let e = (1.0 - delta) * r.p;
    let k_const = 2f64.powf(nf - e) * nf / e / (1.0 - e);
    let a1 = match family {
        CounterFamily::PqFractional => 15f64.powi(n as i32) * 4.0 * nf / (r.p * delta),
        _ => 15f64.powi(n as i32) * 4.0 * nf / (delta + (nf - delta) * eps / (nf - r.alpha)),
    };
    (k_const, a1)
}

fn growth_fit(rows: &[CounterRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ratio > 0.0 && r.ratio.is_finite())
        .map(|r| ((r.k as f64).ln(), r.ratio.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn run_counterexample(
    family: CounterFamily,
    k_min: u32,
    k_max: u32,
    prm: &CounterParams,
    engine: CounterEngine,
) -> Result<CounterTable> {
    if !(k_min >= 1 && k_max >= k_min) {
        return Err(constraint("k", "need 1 <= k_min <= k_max"));
    }
    let res = resolve(family, prm)?;
    let n = prm.dim;
    let nf = n as f64;
    let side = 1.0 / nf.sqrt();
    let delta = prm.delta;
    let eps = prm.epsilon;
    let shift = if family.alpha_shift() {
        side.powf(-eps / res.q)
    } else {
        1.0
    };
    let frac = if family.fractional() {
        Some(fractional_constants(family, n, delta, &res, eps))
    } else {
        None
    };
    let mut rows = Vec::new();
    let c;
    match engine {
        CounterEngine::Radial => {
            if family.fractional() && !((1.0 - delta) * res.p < 1.0) {
                return Err(constraint("p", "the radial bound needs p < 1/(1-δ)"));
            }
            c = log_integral(n, None);
            let vol = side.powi(n as i32);
            let rmax = 0.5;
            for k in k_min..=k_max {
                let kf = k as f64;
                let rho = (-kf).exp();
                let ball = unit_ball_volume(n) * rho.powi(n as i32);
                let mu_q0 = if rho <= half_side(n) {
                    1.0
                } else {
                    radial_integral(n, 1e-9 * rho, rho, &[], |_| 1.0) / ball
                };
                let avg = log_integral(n, Some(kf)) / vol;
                let lhs_exact = (kf - avg) * mu_q0.powf(1.0 / res.q);
                let lhs_lower = (kf - c) * mu_q0.powf(1.0 / res.q);
                let switch = rho + nf.sqrt() * unit_ball_volume(n).powf(1.0 / nf) * rho;
                let grad_w = radial_integral(n, rho, rmax, &[switch], |r| {
                    r.powf(-res.p) * majorant(n, rho, res.order, r).powf(res.power)
                });
                let rhs = match (family, frac) {
                    (CounterFamily::PqClassical, _) => grad_w.powf(1.0 / res.p),
                    (CounterFamily::AlphaClassical, _) => shift * grad_w,
                    (CounterFamily::PqFractional, Some((kc, a1))) => {
                        let e = (1.0 - delta) * res.p;
                        ((1.0 - delta) * kc * side.powf(e) * a1 * grad_w).powf(1.0 / res.p)
                    }
                    (_, Some((kc, a1))) => {
                        (1.0 - delta) * shift * kc * side.powf(1.0 - delta) * a1 * grad_w
                    }
                    _ => unreachable!(),
                };
                rows.push(CounterRow {
                    k,
                    lhs_lower_bound: lhs_lower,
                    lhs_exact,
                    rhs_upper_bound: rhs,
                    ratio: lhs_lower / rhs,
                });
            }
        }
        CounterEngine::Grid { depth } => {
            let grid = Grid::new(Cube::centered(n, side)?, depth)?;
            if grid.len() > GRID_CELLS && !prm.force {
                return Err(LabError::ResourceGuard(format!(
                    "grid engine on {} cells (limit {GRID_CELLS})",
                    grid.len()
                )));
            }
            if family.fractional() && grid.len() > GRID_FORM_CELLS && !prm.force {
                return Err(LabError::ResourceGuard(format!(
                    "fractional form on {} cells (limit {GRID_FORM_CELLS})",
                    grid.len()
                )));
            }
            let h = grid.width();
            let hv = grid.cell_volume();
            let radius: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let x = grid.center(i);
                    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
                })
                .collect();
            c = tiled_sum(grid.len(), |i| radius[i].ln().abs()) * hv;
            for k in k_min..=k_max {
                let kf = k as f64;
                let rho = (-kf).exp();
                if rho < 4.0 * h {
                    return Err(LabError::UnresolvedMeasure {
                        radius: rho,
                        width: h,
                    });
                }
                let f = sample_field(
                    &FieldSpec::LogRadial {
                        k: Some(kf),
                        center: None,
                    },
                    &grid,
                )?;
                let mu = sample_measure(
                    &MeasureSpec::NormalizedBall {
                        radius: rho,
                        center: None,
                    },
                    &grid,
                )?;
                let f_q = average(&f, Default::default())?;
                let fv = f.values();
                let mass = mu.masses();
                let dev = tiled_sum(grid.len(), |i| (fv[i] - f_q).abs().powf(res.q) * mass[i]);
                let lhs_exact = dev.powf(1.0 / res.q);
                let lhs_lower = (kf - c) * mu.total().powf(1.0 / res.q);
                let w: Vec<f64> = radius
                    .iter()
                    .map(|&r| majorant(n, rho, res.order, r).powf(res.power))
                    .collect();
                let rhs = if family.fractional() {
                    let form = gagliardo_form(&KernelJob::new(&f, delta, res.p).with_outer(&w))?;
                    if family == CounterFamily::PqFractional {
                        (1.0 - delta).powf(1.0 / res.p) * form.powf(1.0 / res.p)
                    } else {
                        (1.0 - delta) * shift * form
                    }
                } else {
                    let grad = gradient_magnitude(&f)?;
                    let g = grad.values();
                    let integral = tiled_sum(grid.len(), |i| g[i].powf(res.p) * w[i]) * hv;
                    if family == CounterFamily::PqClassical {
                        integral.powf(1.0 / res.p)
                    } else {
                        shift * integral
                    }
                };
                rows.push(CounterRow {
                    k,
                    lhs_lower_bound: lhs_lower,
                    lhs_exact,
                    rhs_upper_bound: rhs,
                    ratio: lhs_lower / rhs,
                });
            }
        }
    }
    let monotone = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let growth_exponent = growth_fit(&rows);
    Ok(CounterTable {
        family,
        engine,
        n,
        p: res.p,
        q: res.q,
        alpha: res.alpha,
        delta: family.fractional().then_some(delta),
        epsilon: family.alpha_shift().then_some(eps),
        c,
        rows,
        monotone,
        growth_exponent,
    })
}
