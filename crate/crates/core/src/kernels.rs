//! Singular double sums: Gagliardo forms, annulus averages and Riesz potentials.
//!
//! Fields are piecewise constant on cells. When `δp < 1` the Gagliardo form of such a field is
//! finite and is computed exactly up to quadrature error in the cell-pair weights
//! `∫_{cell x}∫_{cell y} |s - t|^{-(n+δp)} ds dt`. When `δp >= 1` that integral diverges for
//! touching cells and the weights fall back to centre distances `h^{2n} |c_x - c_y|^{-(n+δp)}`.

use std::f64::consts::PI;

use crate::error::{constraint, LabError, Result};
use crate::lattice::{CellBox, CellMeasure, CellSet, Grid, ScalarField};
use crate::par;
use crate::quadrature::Rule;
use crate::reduce::CompensatedSum;

/// How cell-pair kernel weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairScheme {
    /// Exact cell-pair integrals when `δp < 1`, centre distances otherwise.
    #[default]
    Auto,
    /// Centre distances for every pair.
    Midpoint,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelJob<'a> {
    pub field: &'a ScalarField,
    pub delta: f64,
    pub p: f64,
    /// Density `g(x)` multiplying the inner integral, one value per grid cell.
    pub outer: Option<&'a [f64]>,
    /// Sub-cube to integrate over; the whole grid when absent.
    pub region: Option<CellBox>,
    pub scheme: PairScheme,
}

impl<'a> KernelJob<'a> {
    pub fn new(field: &'a ScalarField, delta: f64, p: f64) -> Self {
        KernelJob {
            field,
            delta,
            p,
            outer: None,
            region: None,
            scheme: PairScheme::Auto,
        }
    }

    pub fn with_outer(mut self, g: &'a [f64]) -> Self {
        self.outer = Some(g);
        self
    }

    pub fn with_region(mut self, b: CellBox) -> Self {
        self.region = Some(b);
        self
    }

    pub fn with_scheme(mut self, scheme: PairScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Tent-weighted far integral `∫_{[-1,1]^n} |d + t|^{-σ} Π(1 - |t_i|) dt` by tensor Gauss-Legendre.
fn far_weight(d: [f64; 3], dim: usize, sigma: f64, rule: &Rule) -> f64 {
    let pts: Vec<(f64, f64)> = rule.points().collect();
    // one axis: nodes on [-1, 0] and [0, 1] with the tent factor folded into the weight
    let mut axis: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &(x, w) in &pts {
        let t = 0.5 * (x - 1.0);
        axis.push((t, 0.5 * w * (1.0 - t.abs())));
        let t = 0.5 * (x + 1.0);
        axis.push((t, 0.5 * w * (1.0 - t.abs())));
    }
    let e = -0.5 * sigma;
    let mut s = 0.0;
    match dim {
        1 => {
            for &(t0, w0) in &axis {
                s += w0 * ((d[0] + t0) * (d[0] + t0)).powf(e);
            }
        }
        2 => {
            for &(t0, w0) in &axis {
                let a = (d[0] + t0) * (d[0] + t0);
                for &(t1, w1) in &axis {
                    s += w0 * w1 * (a + (d[1] + t1) * (d[1] + t1)).powf(e);
                }
            }
        }
        _ => {
            for &(t0, w0) in &axis {
                let a = (d[0] + t0) * (d[0] + t0);
                for &(t1, w1) in &axis {
                    let b = a + (d[1] + t1) * (d[1] + t1);
                    let w01 = w0 * w1;
                    for &(t2, w2) in &axis {
                        s += w01 * w2 * (b + (d[2] + t2) * (d[2] + t2)).powf(e);
                    }
                }
            }
        }
    }
    s
}

/// `∫_0^∞ r^{n-1-σ} Π Λ(r θ_i - d_i) dr` with `Λ(u) = (1 - |u|)_+`, integrated exactly piece by piece.
fn ray_integral(theta: [f64; 3], d: [f64; 3], dim: usize, sigma: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut constant = 1.0;
    let mut breaks: [f64; 3] = [0.0; 3];
    let mut nb = 0;
    let mut active = [false; 3];
    for a in 0..dim {
        if theta[a].abs() < 1e-300 {
            let v = 1.0 - d[a].abs();
            if v <= 0.0 {
                return 0.0;
            }
            constant *= v;
            continue;
        }
        active[a] = true;
        let (r1, r2) = {
            let x = (d[a] - 1.0) / theta[a];
            let y = (d[a] + 1.0) / theta[a];
            if x < y {
                (x, y)
            } else {
                (y, x)
            }
        };
        lo = lo.max(r1);
        hi = hi.min(r2);
        breaks[nb] = d[a] / theta[a];
        nb += 1;
    }
    if !(hi > lo) {
        return 0.0;
    }
    let mut pts: Vec<f64> = Vec::with_capacity(5);
    pts.push(lo);
    let mut inner: Vec<f64> = breaks[..nb]
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    pts.extend(inner);
    pts.push(hi);
    let e = dim as f64 - 1.0 - sigma;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (r1, r2) = (w[0], w[1]);
        if r2 <= r1 {
            continue;
        }
        let mid = 0.5 * (r1 + r2);
        // product of linear factors (1 + sgn*d_a) - sgn*θ_a r
        let mut poly = [0.0f64; 4];
        poly[0] = constant;
        let mut deg = 0;
        for a in 0..dim {
            if !active[a] {
                continue;
            }
            let sg = if mid * theta[a] - d[a] >= 0.0 {
                1.0
            } else {
                -1.0
            };
            let c0 = 1.0 + sg * d[a];
            let c1 = -sg * theta[a];
            let mut next = [0.0f64; 4];
            for k in 0..=deg {
                next[k] += poly[k] * c0;
                next[k + 1] += poly[k] * c1;
            }
            poly = next;
            deg += 1;
        }
        for (k, &c) in poly.iter().enumerate().take(deg + 1) {
            if c == 0.0 || (k == 0 && r1 == 0.0) {
                // the product vanishes at r = 0, so its constant term is zero there
                continue;
            }
            let ex = e + k as f64 + 1.0;
            let piece = if ex.abs() < 1e-13 {
                (r2 / r1).ln()
            } else {
                (r2.powf(ex) - r1.powf(ex)) / ex
            };
            total += c * piece;
        }
    }
    total
}

fn near_weight_2d(d: [f64; 3], sigma: f64, rule: &Rule) -> f64 {
    let mut angles = vec![-PI, -0.5 * PI, 0.0, 0.5 * PI, PI];
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            let (x, y) = (d[0] + a, d[1] + b);
            if x != 0.0 || y != 0.0 {
                angles.push(y.atan2(x));
            }
        }
    }
    angles.sort_by(|a, b| a.total_cmp(b));
    angles.dedup();
    let mut s = 0.0;
    for w in angles.windows(2) {
        s += rule.integrate(w[0], w[1], |phi| {
            ray_integral([phi.cos(), phi.sin(), 0.0], d, 2, sigma)
        });
    }
    s
}

fn near_weight_3d(d: [f64; 3], sigma: f64, rule: &Rule) -> f64 {
    let mut total = 0.0;
    for f in 0..3 {
        let (j, k) = ((f + 1) % 3, (f + 2) % 3);
        for sign in [-1.0f64, 1.0] {
            // panel edges where kink planes cross this face along constant coordinates
            let edges = |other: usize| {
                let mut e = vec![-1.0, 0.0, 1.0];
                for a in [-1.0, 0.0, 1.0] {
                    for b in [-1.0, 0.0, 1.0] {
                        let den = d[f] + a;
                        if den != 0.0 {
                            let v = sign * (d[other] + b) / den;
                            if v > -1.0 && v < 1.0 {
                                e.push(v);
                            }
                        }
                    }
                }
                e.sort_by(|a, b| a.total_cmp(b));
                e.dedup();
                // split long panels to absorb kinks along oblique lines
                let mut fine = Vec::new();
                for w in e.windows(2) {
                    let pieces = ((w[1] - w[0]) / 0.125).ceil().max(1.0) as usize;
                    for i in 0..pieces {
                        fine.push(w[0] + (w[1] - w[0]) * i as f64 / pieces as f64);
                    }
                }
                fine.push(1.0);
                fine
            };
            let es = edges(j);
            let et = edges(k);
            for ws in es.windows(2) {
                for wt in et.windows(2) {
                    total += rule.integrate(ws[0], ws[1], |s| {
                        rule.integrate(wt[0], wt[1], |t| {
                            let mut u = [0.0; 3];
                            u[f] = sign;
                            u[j] = s;
                            u[k] = t;
                            let len = (1.0 + s * s + t * t).sqrt();
                            let theta = [u[0] / len, u[1] / len, u[2] / len];
                            ray_integral(theta, d, 3, sigma) / (len * len * len)
                        })
                    });
                }
            }
        }
    }
    total
}

/// Second difference of `F(t)` with `F'' = t^{-σ}`, for the 1-D touching pair.
fn touching_weight_1d(sigma: f64) -> f64 {
    if (sigma - 1.0).abs() < 1e-14 {
        2.0 * 2f64.ln()
    } else {
        let f = |t: f64| t.powf(2.0 - sigma) / ((1.0 - sigma) * (2.0 - sigma));
        f(2.0) - 2.0 * f(1.0)
    }
}

/// Exact cell-pair integral for unit cells at integer offset `d`, kernel `|z|^{-σ}`.
///
/// Requires `σ < n + 1`. `d` must be non-zero.
pub fn unit_pair_weight(d: [usize; 3], dim: usize, sigma: f64) -> f64 {
    let df = [d[0] as f64, d[1] as f64, d[2] as f64];
    let far = d[..dim].iter().copied().max().unwrap_or(0);
    if far >= 2 {
        let q = match far {
            2 => 14,
            3..=4 => 9,
            5..=16 => 6,
            _ => 4,
        };
        return far_weight(df, dim, sigma, &Rule::new(q));
    }
    match dim {
        1 => touching_weight_1d(sigma),
        2 => near_weight_2d(df, sigma, &Rule::new(24)),
        _ => near_weight_3d(df, sigma, &Rule::new(8)),
    }
}

/// Kernel weights for every absolute offset inside an `s`-per-axis block.
pub(crate) struct PairTable {
    pub weights: Vec<f64>,
    pub s: usize,
}

impl PairTable {
    pub fn build(grid: &Grid, s: usize, sigma: f64, exact: bool) -> PairTable {
        let dim = grid.dim();
        let h = grid.width();
        let count = s.pow(dim as u32);
        let scale_exact = h.powf(2.0 * dim as f64 - sigma);
        let hv2 = grid.cell_volume() * grid.cell_volume();
        let weights = par::map_range(count, |i| {
            if i == 0 {
                return 0.0;
            }
            let mut d = [0usize; 3];
            let mut r = i;
            for da in d.iter_mut().take(dim) {
                *da = r % s;
                r /= s;
            }
            if exact {
                scale_exact * unit_pair_weight(d, dim, sigma)
            } else {
                let r2: f64 = d.iter().map(|&x| (x as f64) * (x as f64)).sum();
                hv2 * (h * r2.sqrt()).powf(-sigma)
            }
        });
        PairTable { weights, s }
    }
}

fn block_values(values: &[f64], grid: &Grid, b: &CellBox) -> Vec<f64> {
    b.cells(grid).map(|i| values[i]).collect()
}

/// `Σ_{x≠y} |f(x) - f(y)|^p K(x, y) g(x)` over the job's cube; this is the `p`-th power of the
/// weighted Gagliardo seminorm with exponent `δ`.
pub fn gagliardo_form(job: &KernelJob) -> Result<f64> {
    let grid = *job.field.grid();
    let (delta, p) = (job.delta, job.p);
    if !(delta >= 0.0 && delta < 1.0) {
        return Err(constraint("delta", "must lie in [0, 1)"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(constraint("p", "must be at least 1"));
    }
    let region = job.region.unwrap_or_else(|| grid.whole());
    if !region.fits(&grid) {
        return Err(LabError::Precondition(
            "region does not fit the grid".into(),
        ));
    }
    if let Some(g) = job.outer {
        if g.len() != grid.len() {
            return Err(LabError::GridMismatch(
                "outer density length differs from the cell count",
            ));
        }
        if g.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(LabError::Negative("outer density"));
        }
    }
    let dim = grid.dim();
    let sigma = dim as f64 + delta * p;
    let exact = job.scheme == PairScheme::Auto && delta * p < 1.0;
    let s = region.size;
    let table = PairTable::build(&grid, s, sigma, exact);
    let v = block_values(job.field.values(), &grid, &region);
    let g = job.outer.map(|g| block_values(g, &grid, &region));
    let total = pair_sum(&v, g.as_deref(), &table, dim, p);
    if !total.is_finite() {
        return Err(LabError::NonFinite("Gagliardo accumulation"));
    }
    Ok(total)
}

#[inline]
fn pth(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

/// Row-organised pair sum over an `s`-per-axis block.
fn pair_sum(v: &[f64], g: Option<&[f64]>, table: &PairTable, dim: usize, p: f64) -> f64 {
    let s = table.s;
    let t = &table.weights;
    let rows = v.len() / s;
    const XTILE: usize = 64;
    let tiles = v.len().div_ceil(XTILE);
    let partial = par::map_range(tiles, |tile| {
        let mut acc = CompensatedSum::new();
        for x in tile * XTILE..((tile + 1) * XTILE).min(v.len()) {
            let gx = g.map_or(1.0, |g| g[x]);
            if gx == 0.0 {
                continue;
            }
            let fx = v[x];
            let x0 = x % s;
            let xr = x / s;
            let (x1, x2) = (xr % s, xr / s);
            let mut inner = CompensatedSum::new();
            for row in 0..rows {
                let (y1, y2) = (row % s, row / s);
                let dy = if dim > 1 { x1.abs_diff(y1) } else { 0 };
                let dz = if dim > 2 { x2.abs_diff(y2) } else { 0 };
                let trow = &t[s * (dy + s * dz)..s * (dy + s * dz) + s];
                let vrow = &v[row * s..row * s + s];
                let mut rs = 0.0;
                for y0 in 0..x0 {
                    rs += pth((fx - vrow[y0]).abs(), p) * trow[x0 - y0];
                }
                for y0 in x0 + 1..s {
                    rs += pth((fx - vrow[y0]).abs(), p) * trow[y0 - x0];
                }
                if row != xr {
                    rs += pth((fx - vrow[x0]).abs(), p) * trow[0];
                }
                inner.add(rs);
            }
            acc.add(gx * inner.value());
        }
        acc.value()
    });
    partial.into_iter().collect::<CompensatedSum>().value()
}

/// `(δ, (1 - δ) [f]_{δ,p}^p)` for each requested `δ`.
pub fn bbm_probe(
    field: &ScalarField,
    region: Option<CellBox>,
    deltas: &[f64],
    p: f64,
) -> Result<Vec<(f64, f64)>> {
    deltas
        .iter()
        .map(|&d| {
            let mut job = KernelJob::new(field, d, p);
            job.region = region;
            Ok((d, (1.0 - d) * gagliardo_form(&job)?))
        })
        .collect()
}

/// `∫_{[-1/2,1/2]^n} |z|^{α-n} dz`, the self-cell kernel for unit cells.
pub fn self_kernel_unit(alpha: f64, dim: usize) -> f64 {
    let e = alpha - dim as f64;
    match dim {
        1 => 2.0 * 0.5f64.powf(alpha) / alpha,
        2 => {
            let rule = Rule::new(40);
            let edge = rule.integrate(0.0, 0.5, |u| (0.25 + u * u).powf(0.5 * e));
            8.0 * 0.5 * edge / alpha
        }
        _ => {
            let rule = Rule::new(40);
            // face [-1/2,1/2]^2 reduced to 8 copies of the triangle 0 <= v <= u <= 1/2
            let tri = rule.integrate(0.0, 0.5, |u| {
                rule.integrate(0.0, u, |v| (0.25 + u * u + v * v).powf(0.5 * e))
            });
            6.0 * 8.0 * 0.5 * tri / alpha
        }
    }
}

/// `I_α(1_Q μ)` at cell centres, with the exact cell mean of the kernel on the diagonal.
pub fn riesz_potential(mu: &CellMeasure, alpha: f64) -> Result<ScalarField> {
    let grid = *mu.grid();
    let dim = grid.dim();
    if !(alpha > 0.0 && alpha < dim as f64) {
        return Err(constraint("alpha", format!("must lie in (0, {dim})")));
    }
    let n = grid.cells_per_axis();
    let h = grid.width();
    let e = alpha - dim as f64;
    let count = grid.len();
    let mut kernel: Vec<f64> = (0..count)
        .map(|i| {
            let c = grid.coords(i);
            let r2: f64 = c.iter().map(|&x| (x as f64) * (x as f64)).sum();
            (h * h * r2).powf(0.5 * e)
        })
        .collect();
    kernel[0] = h.powf(e) * self_kernel_unit(alpha, dim);
    let mass = mu.masses();
    let support: Vec<usize> = (0..count).filter(|&i| mass[i] != 0.0).collect();
    let mut out = vec![0.0; count];
    par::fill_chunks(&mut out, 256, |start, chunk| {
        for (k, o) in chunk.iter_mut().enumerate() {
            let x = grid.coords(start + k);
            let mut acc = CompensatedSum::new();
            for &j in &support {
                let y = grid.coords(j);
                let d = [
                    x[0].abs_diff(y[0]),
                    x[1].abs_diff(y[1]),
                    x[2].abs_diff(y[2]),
                ];
                acc.add(mass[j] * kernel[d[0] + n * (d[1] + n * d[2])]);
            }
            *o = acc.value();
        }
    });
    ScalarField::new(grid, out)
}

/// Offsets `(d0 span, d1, d2)` of a ball-shell stencil stored as contiguous runs along axis 0.
#[derive(Debug, Clone)]
pub struct ShellStencil {
    rows: Vec<(isize, isize, Vec<(isize, isize)>)>,
}

impl ShellStencil {
    /// Integer offsets `d` with `inner2 <= |d|^2 < outer2`.
    pub fn from_squared(dim: usize, inner2: i64, outer2: i64) -> ShellStencil {
        let r = (outer2 as f64).sqrt().ceil() as isize + 1;
        let span = |lim: isize, used: bool| if used { -lim..=lim } else { 0..=0 };
        let mut rows = Vec::new();
        for d2 in span(r, dim > 2) {
            for d1 in span(r, dim > 1) {
                let mut runs = Vec::new();
                let mut start: Option<isize> = None;
                for d0 in -r..=r + 1 {
                    let q = (d0 * d0 + d1 * d1 + d2 * d2) as i64;
                    let inside = d0 <= r && q >= inner2 && q < outer2;
                    match (inside, start) {
                        (true, None) => start = Some(d0),
                        (false, Some(a)) => {
                            runs.push((a, d0 - 1));
                            start = None;
                        }
                        _ => {}
                    }
                }
                if !runs.is_empty() {
                    rows.push((d1, d2, runs));
                }
            }
        }
        ShellStencil { rows }
    }

    /// Offsets with `(a/2)^2 <= |d h|^2 < a^2` for a real radius `a`.
    pub fn from_radius(dim: usize, a: f64, h: f64) -> ShellStencil {
        let r = (a / h).ceil() as isize + 1;
        let span = |lim: isize, used: bool| if used { -lim..=lim } else { 0..=0 };
        let mut rows = Vec::new();
        for d2 in span(r, dim > 2) {
            for d1 in span(r, dim > 1) {
                let mut runs = Vec::new();
                let mut start: Option<isize> = None;
                for d0 in -r..=r + 1 {
                    let q = ((d0 * d0 + d1 * d1 + d2 * d2) as f64) * h * h;
                    let inside = d0 <= r && q >= 0.25 * a * a && q < a * a;
                    match (inside, start) {
                        (true, None) => start = Some(d0),
                        (false, Some(s)) => {
                            runs.push((s, d0 - 1));
                            start = None;
                        }
                        _ => {}
                    }
                }
                if !runs.is_empty() {
                    rows.push((d1, d2, runs));
                }
            }
        }
        ShellStencil { rows }
    }
}

/// Row prefix counts of set membership inside a box, for O(1) run queries.
pub(crate) struct RowPrefix {
    pre: Vec<u32>,
    s: usize,
}

impl RowPrefix {
    pub fn new(member: &[bool], s: usize) -> RowPrefix {
        let rows = member.len() / s;
        let mut pre = vec![0u32; rows * (s + 1)];
        for r in 0..rows {
            for x in 0..s {
                pre[r * (s + 1) + x + 1] = pre[r * (s + 1) + x] + member[r * s + x] as u32;
            }
        }
        RowPrefix { pre, s }
    }

    #[inline]
    fn count(&self, row: usize, a: usize, b: usize) -> u32 {
        self.pre[row * (self.s + 1) + b] - self.pre[row * (self.s + 1) + a]
    }
}

/// For each cell `x` of the block (or each listed cell): (number of stencil cells inside the
/// block, how many of those differ from `x` in membership).
pub(crate) fn shell_counts(
    member: &[bool],
    s: usize,
    dim: usize,
    st: &ShellStencil,
    at: Option<&[usize]>,
) -> Vec<(u64, u64)> {
    let pre = RowPrefix::new(member, s);
    let count = at.map_or(member.len(), |a| a.len());
    par::map_range(count, |j| {
        let x = at.map_or(j, |a| a[j]);
        let x0 = (x % s) as isize;
        let xr = x / s;
        let x1 = if dim > 1 { (xr % s) as isize } else { 0 };
        let x2 = if dim > 2 { (xr / s) as isize } else { 0 };
        let si = s as isize;
        let mut total = 0u64;
        let mut inside = 0u64;
        for (d1, d2, runs) in &st.rows {
            let (y1, y2) = (x1 + d1, x2 + d2);
            if y1 < 0 || y1 >= si || y2 < 0 || y2 >= si {
                continue;
            }
            let row = (y1 + si * y2) as usize;
            for &(a, b) in runs {
                let lo = (x0 + a).max(0);
                let hi = (x0 + b).min(si - 1);
                if hi < lo {
                    continue;
                }
                total += (hi - lo + 1) as u64;
                inside += pre.count(row, lo as usize, hi as usize + 1) as u64;
            }
        }
        let differ = if member[x] { total - inside } else { inside };
        (total, differ)
    })
}

/// `2^{k+s}` times the average over `x ∈ Q` of the average over the annulus
/// `Q ∩ B(x, 2^{-k} ℓ(Q)) \ B(x, 2^{-k-1} ℓ(Q))` of `|1_E(x) - 1_E(y)|`.
pub fn annulus_form(set: &CellSet, region: Option<CellBox>, k: u32, s: f64) -> Result<f64> {
    let grid = *set.grid();
    if !(s >= 0.0 && s.is_finite()) {
        return Err(constraint("s", "must be non-negative"));
    }
    let b = region.unwrap_or_else(|| grid.whole());
    if !b.fits(&grid) {
        return Err(LabError::Precondition(
            "region does not fit the grid".into(),
        ));
    }
    if !b.size.is_power_of_two() || (b.size >> k) < 4 || k >= usize::BITS {
        return Err(LabError::UnresolvedAnnulus {
            inner: b.side(&grid) / 2f64.powi(k as i32 + 1),
            width: grid.width(),
        });
    }
    let outer = (b.size >> k) as i64;
    let inner = outer / 2;
    let st = ShellStencil::from_squared(grid.dim(), inner * inner, outer * outer);
    let member: Vec<bool> = b.cells(&grid).map(|i| set.contains(i)).collect();
    let counts = shell_counts(&member, b.size, grid.dim(), &st, None);
    let avg: CompensatedSum = counts
        .iter()
        .map(|&(t, d)| if t == 0 { 0.0 } else { d as f64 / t as f64 })
        .collect();
    let mean = avg.value() / counts.len() as f64;
    Ok(2f64.powf(k as f64 + s) * mean)
}
