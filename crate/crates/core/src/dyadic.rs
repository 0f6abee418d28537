//! Dyadic cubes, Calderón-Zygmund selection and fractional maximal functions.

use serde::{Deserialize, Serialize};

use crate::error::{constraint, LabError, Result};
use crate::lattice::{CellBox, CellMeasure, CellSet, Cube, Grid, ScalarField};
use crate::par;

/// Largest grid on which [`MaximalMode::Brute`] runs without being asked explicitly.
pub const BRUTE_CELL_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicCube {
    pub root: Cube,
    pub generation: u32,
    pub index: [usize; 3],
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        self.root.side() / (1u64 << self.generation) as f64
    }

    pub fn corner(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        let s = self.side();
        for (a, ca) in c.iter_mut().enumerate().take(self.root.dim()) {
            *ca = self.root.corner()[a] + self.index[a] as f64 * s;
        }
        c
    }

    /// Cells covered on a grid of the given depth over the same root.
    pub fn to_box(&self, depth: u32) -> Result<CellBox> {
        if self.generation > depth {
            return Err(LabError::Precondition(format!(
                "generation {} is finer than the grid depth {depth}",
                self.generation
            )));
        }
        let size = 1usize << (depth - self.generation);
        let mut lo = [0; 3];
        for (a, l) in lo.iter_mut().enumerate().take(self.root.dim()) {
            *l = self.index[a] * size;
        }
        Ok(CellBox { lo, size })
    }
}

/// All generation-`k` dyadic subcubes of `root`, first axis fastest.
pub fn enumerate_dyadic(root: &Cube, k: u32) -> Vec<DyadicCube> {
    let per = 1usize << k;
    let dim = root.dim();
    let count = per.pow(dim as u32);
    (0..count)
        .map(|mut i| {
            let mut index = [0; 3];
            for ia in index.iter_mut().take(dim) {
                *ia = i % per;
                i /= per;
            }
            DyadicCube {
                root: *root,
                generation: k,
                index,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CubeFamily {
    pub members: Vec<CellBox>,
    pub disjoint: bool,
}

impl CubeFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn pairwise_disjoint(&self, dim: usize) -> bool {
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                if a.overlaps(b, dim) {
                    return false;
                }
            }
        }
        true
    }

    pub fn total_volume(&self, grid: &Grid) -> f64 {
        self.members.iter().map(|b| b.volume(grid)).sum()
    }
}

/// Sums over every dyadic cube of a `2^depth`-per-axis block. Level `k` has `2^k` cubes per axis.
pub(crate) struct Pyramid<T> {
    pub levels: Vec<Vec<T>>,
}

impl<T: Copy + Default + std::ops::Add<Output = T> + Send + Sync> Pyramid<T> {
    pub fn build(leaves: Vec<T>, dim: usize, depth: u32) -> Pyramid<T> {
        let mut levels = vec![leaves];
        for k in (0..depth).rev() {
            let per = 1usize << k;
            let child_per = per * 2;
            let fine = levels.last().unwrap();
            let count = per.pow(dim as u32);
            let coarse = par::map_range(count, |i| {
                let c = unflatten(i, per, dim);
                let mut s = T::default();
                for bits in 0..(1usize << dim) {
                    let mut d = [0; 3];
                    for a in 0..dim {
                        d[a] = 2 * c[a] + ((bits >> a) & 1);
                    }
                    s = s + fine[flatten(d, child_per)];
                }
                s
            });
            levels.push(coarse);
        }
        levels.reverse();
        Pyramid { levels }
    }
}

#[inline]
pub(crate) fn unflatten(mut i: usize, per: usize, dim: usize) -> [usize; 3] {
    let mut c = [0; 3];
    for ca in c.iter_mut().take(dim) {
        *ca = i % per;
        i /= per;
    }
    c
}

#[inline]
pub(crate) fn flatten(c: [usize; 3], per: usize) -> usize {
    c[0] + per * (c[1] + per * c[2])
}

/// Calderón-Zygmund cubes of `E` in the grid cube at level `λ`: the first dyadic cubes,
/// walking down from the root, with `|E ∩ Q'| > 2^{-n} λ |Q'|`.
///
/// Requires `0 < λ < 1` and `|E| <= λ|Q|`. Every member then also has
/// `|E ∩ Q'| <= λ|Q'|`. Comparisons are on integer cell counts, so the selection is exact.
pub fn cz_decompose(set: &CellSet, lambda: f64) -> Result<CubeFamily> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(constraint("lambda", "must lie in (0, 1)"));
    }
    let grid = *set.grid();
    let dim = grid.dim();
    let m = grid.depth();
    let leaves: Vec<u64> = set.members().iter().map(|&b| b as u64).collect();
    let pyr = Pyramid::build(leaves, dim, m);
    let total_cells = grid.len() as f64;
    if pyr.levels[0][0] as f64 > lambda * total_cells {
        return Err(LabError::Precondition(format!(
            "density of the set exceeds lambda = {lambda}"
        )));
    }
    let threshold = lambda / (1u64 << dim) as f64;
    let mut members = Vec::new();
    if pyr.levels[0][0] as f64 > threshold * total_cells {
        return Ok(CubeFamily {
            members: vec![grid.whole()],
            disjoint: true,
        });
    }
    let mut stack: Vec<(u32, [usize; 3])> = vec![(0, [0; 3])];
    while let Some((g, c)) = stack.pop() {
        if g == m {
            continue;
        }
        // children in reverse order so selection comes out in grid order
        let per = 1usize << (g + 1);
        let cells = (1u64 << ((m - g - 1) as u64 * dim as u64)) as f64;
        let mut kids = Vec::with_capacity(1 << dim);
        for bits in 0..(1usize << dim) {
            let mut d = [0; 3];
            for a in 0..dim {
                d[a] = 2 * c[a] + ((bits >> a) & 1);
            }
            kids.push(d);
        }
        for d in kids.into_iter().rev() {
            let count = pyr.levels[(g + 1) as usize][flatten(d, per)] as f64;
            if count > threshold * cells {
                let size = 1usize << (m - g - 1);
                let mut lo = [0; 3];
                for a in 0..dim {
                    lo[a] = d[a] * size;
                }
                members.push(CellBox { lo, size });
            } else if count > 0.0 {
                stack.push((g + 1, d));
            }
        }
    }
    members.sort_by_key(|b| (b.lo[2], b.lo[1], b.lo[0], b.size));
    Ok(CubeFamily {
        members,
        disjoint: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximalMode {
    /// Exact maximum over every grid-aligned cube inside the grid. Refused above
    /// [`BRUTE_CELL_LIMIT`] cells.
    Brute,
    /// Same as `Brute` without the size guard.
    BruteUnguarded,
    /// Dyadic cubes and their translates by a third and two thirds of a side. A pointwise
    /// lower bound of the brute value.
    Shifted,
}

fn check_alpha(alpha: f64, dim: usize) -> Result<()> {
    if !(alpha >= 0.0 && alpha <= dim as f64) {
        return Err(constraint("alpha", format!("must lie in [0, {dim}]")));
    }
    Ok(())
}

/// `sup` over dyadic cubes containing the cell of `ℓ(Q)^{α-n} μ(Q)`.
pub fn dyadic_fractional_maximal(mu: &CellMeasure, alpha: f64) -> Result<ScalarField> {
    let grid = *mu.grid();
    check_alpha(alpha, grid.dim())?;
    let values = local_dyadic(
        mu.masses().to_vec(),
        grid.cells_per_axis(),
        grid.dim(),
        grid.width(),
        alpha,
    );
    ScalarField::new(grid, values)
}

pub fn global_fractional_maximal(
    mu: &CellMeasure,
    alpha: f64,
    mode: MaximalMode,
) -> Result<ScalarField> {
    let grid = *mu.grid();
    check_alpha(alpha, grid.dim())?;
    if mode == MaximalMode::Brute && grid.len() > BRUTE_CELL_LIMIT {
        return Err(LabError::ResourceGuard(format!(
            "brute maximal function on {} cells (limit {BRUTE_CELL_LIMIT})",
            grid.len()
        )));
    }
    let values = local_maximal(
        mu.masses(),
        grid.cells_per_axis(),
        grid.dim(),
        grid.width(),
        alpha,
        mode,
    );
    ScalarField::new(grid, values)
}

/// Maximal function of masses laid out on an `s`-per-axis block with cell width `h`.
pub(crate) fn local_maximal(
    masses: &[f64],
    s: usize,
    dim: usize,
    h: f64,
    alpha: f64,
    mode: MaximalMode,
) -> Vec<f64> {
    match mode {
        MaximalMode::Brute | MaximalMode::BruteUnguarded => local_brute(masses, s, dim, h, alpha),
        MaximalMode::Shifted => local_shifted(masses, s, dim, h, alpha),
    }
}

pub(crate) fn local_dyadic(masses: Vec<f64>, s: usize, dim: usize, h: f64, alpha: f64) -> Vec<f64> {
    let depth = s.trailing_zeros();
    let pyr = Pyramid::build(masses, dim, depth);
    let mut best = vec![0.0f64];
    let expo = alpha - dim as f64;
    let top = (s as f64 * h).powf(expo) * pyr.levels[0][0];
    best[0] = top;
    for k in 1..=depth {
        let per = 1usize << k;
        let scale = ((s >> k) as f64 * h).powf(expo);
        let level = &pyr.levels[k as usize];
        let parent = &best;
        best = par::map_range(per.pow(dim as u32), |i| {
            let c = unflatten(i, per, dim);
            let mut p = [0; 3];
            for a in 0..dim {
                p[a] = c[a] / 2;
            }
            parent[flatten(p, per / 2)].max(scale * level[i])
        });
    }
    best
}

/// Summed-area table with one padding row per axis.
struct Sat {
    table: Vec<f64>,
    stride: usize,
    dim: usize,
}

impl Sat {
    fn new(masses: &[f64], s: usize, dim: usize) -> Sat {
        let st = s + 1;
        let mut table = vec![0.0; st.pow(dim as u32)];
        for i in 0..masses.len() {
            let c = unflatten(i, s, dim);
            let mut d = [0; 3];
            for a in 0..dim {
                d[a] = c[a] + 1;
            }
            table[flatten(d, st)] = masses[i];
        }
        for a in 0..dim {
            let step = st.pow(a as u32);
            for i in 0..table.len() {
                let c = unflatten(i, st, dim);
                if c[a] > 0 {
                    table[i] += table[i - step];
                }
            }
        }
        Sat {
            table,
            stride: st,
            dim,
        }
    }

    /// Mass of the half-open box `[lo, hi)`.
    fn box_sum(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let mut s = 0.0;
        for bits in 0..(1usize << self.dim) {
            let mut c = [0; 3];
            let mut sign = 1.0;
            for a in 0..self.dim {
                if (bits >> a) & 1 == 1 {
                    c[a] = lo[a];
                    sign = -sign;
                } else {
                    c[a] = hi[a];
                }
            }
            s += sign * self.table[flatten(c, self.stride)];
        }
        s.max(0.0)
    }
}

/// Sliding maximum along one axis: input length `c` along `axis`, output length `s`, where
/// output `x` takes the max over inputs `j` with `x - t < j <= x`.
fn window_max(
    data: &[f64],
    shape: [usize; 3],
    axis: usize,
    s: usize,
    t: usize,
) -> (Vec<f64>, [usize; 3]) {
    let c = shape[axis];
    let mut out_shape = shape;
    out_shape[axis] = s;
    let total: usize = out_shape.iter().product();
    let mut out = vec![0.0; total];
    let stride_in: usize = shape[..axis].iter().product();
    let stride_out: usize = out_shape[..axis].iter().product();
    let lines = total / s;
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    for line in 0..lines {
        let low = line % stride_out;
        let high = line / stride_out;
        let base_in = low + high * stride_in * c;
        let base_out = low + high * stride_out * s;
        deque.clear();
        let mut next = 0;
        for x in 0..s {
            while next < c && next <= x {
                let v = data[base_in + next * stride_in];
                while let Some(&b) = deque.back() {
                    if data[base_in + b * stride_in] <= v {
                        deque.pop_back();
                    } else {
                        break;
                    }
                }
                deque.push_back(next);
                next += 1;
            }
            while let Some(&f) = deque.front() {
                if f + t <= x {
                    deque.pop_front();
                } else {
                    break;
                }
            }
            out[base_out + x * stride_out] = deque
                .front()
                .map_or(0.0, |&f| data[base_in + f * stride_in]);
        }
    }
    (out, out_shape)
}

fn local_brute(masses: &[f64], s: usize, dim: usize, h: f64, alpha: f64) -> Vec<f64> {
    let sat = Sat::new(masses, s, dim);
    let expo = alpha - dim as f64;
    let groups = s.min(16);
    let partial = par::map_range(groups, |g| {
        let mut best = vec![0.0f64; masses.len()];
        let mut t = g + 1;
        while t <= s {
            let c = s - t + 1;
            let scale = (t as f64 * h).powf(expo);
            let count = c.pow(dim as u32);
            let mut vals = vec![0.0; count];
            for (i, v) in vals.iter_mut().enumerate() {
                let lo = unflatten(i, c, dim);
                let mut hi = lo;
                for a in 0..dim {
                    hi[a] += t;
                }
                *v = scale * sat.box_sum(lo, hi);
            }
            let mut shape = [1usize; 3];
            for sh in shape.iter_mut().take(dim) {
                *sh = c;
            }
            for a in 0..dim {
                let (nv, ns) = window_max(&vals, shape, a, s, t);
                vals = nv;
                shape = ns;
            }
            for (b, v) in best.iter_mut().zip(&vals) {
                if *v > *b {
                    *b = *v;
                }
            }
            t += groups;
        }
        best
    });
    let mut best = vec![0.0f64; masses.len()];
    for p in partial {
        for (b, v) in best.iter_mut().zip(p) {
            if v > *b {
                *b = v;
            }
        }
    }
    best
}

/// Offsets used by the shifted family for cubes of `t` cells.
pub(crate) fn shift_offsets(t: usize) -> Vec<usize> {
    let mut o = vec![
        0,
        ((t as f64) / 3.0).round() as usize,
        ((2.0 * t as f64) / 3.0).round() as usize,
    ];
    o.retain(|&x| x < t);
    o.sort_unstable();
    o.dedup();
    o
}

fn local_shifted(masses: &[f64], s: usize, dim: usize, h: f64, alpha: f64) -> Vec<f64> {
    let sat = Sat::new(masses, s, dim);
    let expo = alpha - dim as f64;
    let depth = s.trailing_zeros();
    let mut jobs = Vec::new();
    for k in 0..=depth {
        let t = s >> k;
        let offs = shift_offsets(t);
        let combos = offs.len().pow(dim as u32);
        for ci in 0..combos {
            let mut o = [0usize; 3];
            let mut r = ci;
            for oa in o.iter_mut().take(dim) {
                *oa = offs[r % offs.len()];
                r /= offs.len();
            }
            jobs.push((t, o));
        }
    }
    let partial = par::map_range(jobs.len(), |j| {
        let (t, o) = jobs[j];
        let scale = (t as f64 * h).powf(expo);
        let mut per = [1usize; 3];
        for a in 0..dim {
            per[a] = (s - 1 + t - o[a]) / t + 1;
        }
        let count: usize = per[..dim].iter().product();
        let mut cube_val = vec![0.0; count];
        for (ci, cv) in cube_val.iter_mut().enumerate() {
            let mut r = ci;
            let mut lo = [0; 3];
            let mut hi = [0; 3];
            for a in 0..dim {
                let ja = r % per[a];
                r /= per[a];
                let start = (o[a] + ja * t) as isize - t as isize;
                lo[a] = start.max(0) as usize;
                hi[a] = ((start + t as isize) as usize).min(s);
            }
            *cv = scale * sat.box_sum(lo, hi);
        }
        (0..masses.len())
            .map(|i| {
                let c = unflatten(i, s, dim);
                let mut ci = 0;
                let mut mult = 1;
                for a in 0..dim {
                    ci += (c[a] + t - o[a]) / t * mult;
                    mult *= per[a];
                }
                cube_val[ci]
            })
            .collect::<Vec<f64>>()
    });
    let mut best = vec![0.0f64; masses.len()];
    for p in partial {
        for (b, v) in best.iter_mut().zip(p) {
            if v > *b {
                *b = v;
            }
        }
    }
    best
}
