//! Discrete perimeters and isoperimetric-type ratios on cell sets.

use serde::{Deserialize, Serialize};

use crate::dyadic::CubeFamily;
use crate::error::{constraint, LabError, Result};
use crate::kernels::{annulus_form, shell_counts, ShellStencil};
use crate::lattice::{CellBox, CellSet, Grid};
use crate::reduce::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoReport {
    pub kind: String,
    pub n: usize,
    pub m: u32,
    #[serde(with = "crate::real")]
    pub lhs: f64,
    #[serde(with = "crate::real")]
    pub rhs_core: f64,
    /// `lhs / rhs_core`; 0 for 0/0 and infinite for x/0.
    #[serde(with = "crate::real")]
    pub ratio: f64,
    pub k: Option<u32>,
    pub s: Option<f64>,
    pub radius: Option<f64>,
    pub density_epsilon: Option<f64>,
    /// Whether the optional preconditions that are flagged rather than enforced hold.
    pub precondition_ok: bool,
    pub explicit_constant: Option<f64>,
    pub pass_explicit: Option<bool>,
}

pub fn safe_ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

impl IsoReport {
    fn new(kind: &str, grid: &Grid, lhs: f64, rhs_core: f64) -> IsoReport {
        IsoReport {
            kind: kind.to_string(),
            n: grid.dim(),
            m: grid.depth(),
            lhs,
            rhs_core,
            ratio: safe_ratio(lhs, rhs_core),
            k: None,
            s: None,
            radius: None,
            density_epsilon: None,
            precondition_ok: true,
            explicit_constant: None,
            pass_explicit: None,
        }
    }
}

fn region_of(grid: &Grid, region: Option<CellBox>) -> Result<CellBox> {
    let b = region.unwrap_or_else(|| grid.whole());
    if !b.fits(grid) {
        return Err(LabError::Precondition(
            "region does not fit the grid".into(),
        ));
    }
    Ok(b)
}

/// Interior faces of the region separating a member cell from a non-member, times `h^{n-1}`.
pub fn discrete_perimeter(set: &CellSet, region: Option<CellBox>) -> Result<f64> {
    let grid = *set.grid();
    let b = region_of(&grid, region)?;
    let dim = grid.dim();
    let mut faces = 0u64;
    for i in b.cells(&grid) {
        let c = grid.coords(i);
        for a in 0..dim {
            if c[a] + 1 < b.lo[a] + b.size {
                let mut d = c;
                d[a] += 1;
                if set.contains(i) != set.contains(grid.index(d)) {
                    faces += 1;
                }
            }
        }
    }
    Ok(faces as f64 * grid.width().powi(dim as i32 - 1))
}

fn iso_power(v: f64, dim: usize) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.powf((dim as f64 - 1.0) / dim as f64)
    }
}

/// `min(|Q∩E|, |Q\E|)^{(n-1)/n}` against the discrete perimeter.
pub fn relative_isoperimetric_ratio(set: &CellSet, region: Option<CellBox>) -> Result<IsoReport> {
    let grid = *set.grid();
    let b = region_of(&grid, region)?;
    let inside = set.count_in(&b);
    let total = b.cell_count(grid.dim());
    let small = inside.min(total - inside) as f64 * grid.cell_volume();
    let lhs = iso_power(small, grid.dim());
    let rhs = discrete_perimeter(set, Some(b))?;
    Ok(IsoReport::new("relative_isoperimetric", &grid, lhs, rhs))
}

/// Compares `|Q|` with `∫_Q |1_E(x) - |A(x)∩E|/|A(x)|| dx`, `A(x) = Q0 ∩ B(x,a) \ B(x,a/2)`.
///
/// The density band `ε <= |Q∩E|/|Q| <= 1-ε` is reported in `precondition_ok`; the explicit
/// constant `4/ε` is only claimed when it holds.
pub fn annulus_deviation(
    set: &CellSet,
    outer: Option<CellBox>,
    q: CellBox,
    a: f64,
    density_epsilon: f64,
) -> Result<IsoReport> {
    let grid = *set.grid();
    let q0 = region_of(&grid, outer)?;
    let dim = grid.dim();
    let h = grid.width();
    if !(density_epsilon > 0.0 && density_epsilon < 0.5) {
        return Err(constraint("density_epsilon", "must lie in (0, 1/2)"));
    }
    if !q.fits(&grid) || !q0.contains_box(&q, dim) {
        return Err(LabError::Precondition("Q must lie inside Q0".into()));
    }
    if !(a > 0.0 && a <= 0.5 * q0.side(&grid)) {
        return Err(constraint("radius", "must lie in (0, side(Q0)/2]"));
    }
    let limit = a * std::f64::consts::PI.sqrt() / (2f64.powi(dim as i32 + 4) * dim as f64);
    if q.side(&grid) > limit * (1.0 + 1e-12) {
        return Err(LabError::Precondition(format!(
            "side(Q) = {} exceeds a*sqrt(pi)/(2^(n+4) n) = {limit}",
            q.side(&grid)
        )));
    }
    if 0.5 * a < 2.0 * h {
        return Err(LabError::UnresolvedAnnulus {
            inner: 0.5 * a,
            width: h,
        });
    }
    let st = ShellStencil::from_radius(dim, a, h);
    let member: Vec<bool> = q0.cells(&grid).map(|i| set.contains(i)).collect();
    // positions of Q's cells inside the Q0 block
    let at: Vec<usize> = (0..q.cell_count(dim))
        .map(|k| {
            let mut r = k;
            let mut pos = 0;
            let mut mult = 1;
            for a in 0..dim {
                pos += (q.lo[a] - q0.lo[a] + r % q.size) * mult;
                r /= q.size;
                mult *= q0.size;
            }
            pos
        })
        .collect();
    let counts = shell_counts(&member, q0.size, dim, &st, Some(&at));
    let hv = grid.cell_volume();
    let mut acc = CompensatedSum::new();
    for (j, &(t, differ)) in counts.iter().enumerate() {
        if t == 0 {
            return Err(LabError::UnresolvedAnnulus {
                inner: 0.5 * a,
                width: h,
            });
        }
        let inside = if member[at[j]] { t - differ } else { differ };
        let dens = inside as f64 / t as f64;
        let ind = if member[at[j]] { 1.0 } else { 0.0 };
        acc.add((ind - dens).abs() * hv);
    }
    let lhs = q.volume(&grid);
    let rhs = acc.value();
    let frac = set.count_in(&q) as f64 / q.cell_count(dim) as f64;
    let mut rep = IsoReport::new("annulus_deviation", &grid, lhs, rhs);
    rep.radius = Some(a);
    rep.density_epsilon = Some(density_epsilon);
    rep.precondition_ok = frac >= density_epsilon && frac <= 1.0 - density_epsilon;
    let c = 4.0 / density_epsilon;
    rep.explicit_constant = Some(c);
    rep.pass_explicit = Some(lhs <= c * rhs);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneScale {
    pub family: CubeFamily,
    /// Density of the set in each member, same order as the family.
    pub densities: Vec<f64>,
    /// Whether the large-`A` branch (dyadic cubes only) was taken.
    pub dyadic_branch: bool,
    pub report: IsoReport,
}

/// Disjoint cubes of side `2^{-k} ℓ(Q0)` with moderate density of `E`, built by the
/// interpolation argument with whole-cell shifts. `Q0` is the grid cube.
pub fn one_scale_decompose(set: &CellSet, k: u32) -> Result<OneScale> {
    let grid = *set.grid();
    let dim = grid.dim();
    let m = grid.depth();
    if k >= m {
        return Err(constraint("k", format!("must be below the grid depth {m}")));
    }
    let n_cells = grid.len() as u64;
    let count = set.count() as u64;
    if (count << (dim + 1)) < n_cells || 2 * count > n_cells {
        return Err(LabError::Precondition(
            "density of E in Q0 must lie in [2^-(n+1), 1/2]".into(),
        ));
    }
    let t = 1usize << (m - k);
    let per = 1usize << k;
    let cube_cells = t.pow(dim as u32) as u64;
    let cubes: Vec<CellBox> = (0..per.pow(dim as u32))
        .map(|i| {
            let mut lo = [0; 3];
            let mut r = i;
            for l in lo.iter_mut().take(dim) {
                *l = (r % per) * t;
                r /= per;
            }
            CellBox { lo, size: t }
        })
        .collect();
    let counts: Vec<u64> = cubes.iter().map(|b| set.count_in(b) as u64).collect();
    let in_q = |c: u64| (c << (dim + 2)) >= cube_cells;
    let a_cells: u64 = counts.iter().filter(|&&c| in_q(c)).count() as u64 * cube_cells;
    let density = |b: &CellBox| set.count_in(b) as f64 / b.cell_count(dim) as f64;

    let (members, dyadic_branch) = if 4 * a_cells > 3 * n_cells {
        let fam: Vec<CellBox> = cubes
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| in_q(c) && 4 * c <= 3 * cube_cells)
            .map(|(b, _)| *b)
            .collect();
        (fam, true)
    } else {
        let index_of = |c: [usize; 3]| c[0] + per * (c[1] + per * c[2]);
        let mut shifted = Vec::new();
        for (i, b) in cubes.iter().enumerate() {
            if !in_q(counts[i]) {
                continue;
            }
            let mut pos = [0; 3];
            for a in 0..dim {
                pos[a] = b.lo[a] / t;
            }
            // first neighbour outside the collection, in a fixed axis/direction order
            let mut found = None;
            'search: for a in 0..dim {
                for up in [false, true] {
                    let mut q = pos;
                    if up {
                        if q[a] + 1 >= per {
                            continue;
                        }
                        q[a] += 1;
                    } else {
                        if q[a] == 0 {
                            continue;
                        }
                        q[a] -= 1;
                    }
                    if !in_q(counts[index_of(q)]) {
                        found = Some((a, up));
                        break 'search;
                    }
                }
            }
            let Some((a, up)) = found else { continue };
            let mut best = *b;
            for j in 0..=t {
                let mut c = *b;
                c.lo[a] = if up { b.lo[a] + j } else { b.lo[a] - j };
                if in_q(set.count_in(&c) as u64) {
                    best = c;
                }
            }
            shifted.push(best);
        }
        let mut kept: Vec<CellBox> = Vec::new();
        for c in shifted {
            if kept.iter().all(|k| !k.overlaps(&c, dim)) {
                kept.push(c);
            }
        }
        (kept, false)
    };
    if members.is_empty() {
        return Err(LabError::Precondition(
            "construction produced no cubes".into(),
        ));
    }
    let densities: Vec<f64> = members.iter().map(density).collect();
    let family = CubeFamily {
        members,
        disjoint: true,
    };
    let lhs = grid.cube().volume() / 2f64.powi(k as i32);
    let rhs = family.total_volume(&grid);
    let mut report = IsoReport::new("one_scale", &grid, lhs, rhs);
    report.k = Some(k);
    Ok(OneScale {
        family,
        densities,
        dyadic_branch,
        report,
    })
}

/// `(|Q∩E|/|Q|)^{(n-1)/n}` against [`annulus_form`], within the density window
/// `2^{-(k+s)n} <= |Q∩E|/|Q| <= 1/2`.
pub fn frac_isoperimetric_ratio(
    set: &CellSet,
    region: Option<CellBox>,
    k: u32,
    s: f64,
) -> Result<IsoReport> {
    let grid = *set.grid();
    let b = region_of(&grid, region)?;
    let dim = grid.dim();
    let cells = b.cell_count(dim) as f64;
    let inside = set.count_in(&b) as f64;
    let floor = 2f64.powf(-(k as f64 + s) * dim as f64);
    if inside < floor * cells || 2.0 * inside > cells {
        return Err(LabError::Precondition(format!(
            "density {} outside [{floor}, 1/2]",
            inside / cells
        )));
    }
    let lhs = iso_power(inside / cells, dim);
    let rhs = annulus_form(set, Some(b), k, s)?;
    let mut rep = IsoReport::new("frac_isoperimetric", &grid, lhs, rhs);
    rep.k = Some(k);
    rep.s = Some(s);
    Ok(rep)
}

/// Annulus average at scale `k` against `perimeter / |Q|^{(n-1)/n}`; no density window.
pub fn remark_ratio(set: &CellSet, region: Option<CellBox>, k: u32) -> Result<IsoReport> {
    let grid = *set.grid();
    let b = region_of(&grid, region)?;
    let dim = grid.dim();
    let lhs = annulus_form(set, Some(b), k, 0.0)?;
    let per = discrete_perimeter(set, Some(b))?;
    let rhs = per / b.volume(&grid).powf((dim as f64 - 1.0) / dim as f64);
    let mut rep = IsoReport::new("remark", &grid, lhs, rhs);
    rep.k = Some(k);
    rep.s = Some(0.0);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn left_half(m: u32) -> CellSet {
        let g = Grid::unit(2, m).unwrap();
        CellSet::from_fn(g, |x| x[0] < 0.5)
    }

    #[test]
    fn perimeter_of_left_half_is_one() {
        for m in 1..7 {
            assert_eq!(discrete_perimeter(&left_half(m), None).unwrap(), 1.0);
        }
    }

    #[test]
    fn perimeter_of_single_cell() {
        let g = Grid::unit(2, 3).unwrap();
        let mut mem = vec![false; g.len()];
        mem[g.index([3, 4, 0])] = true;
        let e = CellSet::new(g, mem).unwrap();
        assert_eq!(discrete_perimeter(&e, None).unwrap(), 4.0 * g.width());
    }

    #[test]
    fn relative_ratio_of_left_half() {
        let r = relative_isoperimetric_ratio(&left_half(5), None).unwrap();
        assert!((r.lhs - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.rhs_core, 1.0);
    }

    #[test]
    fn one_scale_left_half_k2() {
        let os = one_scale_decompose(&left_half(6), 2).unwrap();
        assert!(!os.dyadic_branch);
        assert_eq!(os.family.len(), 4);
        assert!((os.report.rhs_core - 0.25).abs() < 1e-15);
        assert!((os.report.ratio - 1.0).abs() < 1e-15);
        for d in &os.densities {
            assert!((d - 1.0 / 16.0).abs() <= 1.0 / 16.0);
        }
    }
}
