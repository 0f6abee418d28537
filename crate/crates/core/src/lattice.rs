//! Uniform cube grids, sampled fields and measures, and the basic functionals on them.
//!
//! A grid of depth `m` splits its cube into `N = 2^m` cells per axis. Cells are addressed by a
//! linear index `i0 + N*i1 + N^2*i2`; every sampled quantity is taken at cell centres.

use serde::{Deserialize, Serialize};

use crate::error::{constraint, LabError, Result};
use crate::reduce::{tiled_sum, CompensatedSum};

pub const MAX_DIM: usize = 3;
pub const MAX_DEPTH: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    dim: usize,
    corner: [f64; 3],
    side: f64,
}

impl Cube {
    pub fn new(corner: &[f64], side: f64) -> Result<Cube> {
        let dim = corner.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(LabError::InvalidGrid(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "side {side} must be positive"
            )));
        }
        if corner.iter().any(|c| !c.is_finite()) {
            return Err(LabError::NonFinite("cube corner"));
        }
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(corner);
        Ok(Cube {
            dim,
            corner: c,
            side,
        })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Cube> {
        Cube::new(&vec![0.0; dim], 1.0)
    }

    /// Cube of the given side centred at the origin.
    pub fn centered(dim: usize, side: f64) -> Result<Cube> {
        Cube::new(&vec![-0.5 * side; dim], side)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn corner(&self) -> &[f64] {
        &self.corner[..self.dim]
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (a, ca) in c.iter_mut().enumerate().take(self.dim) {
            *ca = self.corner[a] + 0.5 * self.side;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    cube: Cube,
    depth: u32,
    n: usize,
    width: f64,
}

impl Grid {
    pub fn new(cube: Cube, depth: u32) -> Result<Grid> {
        if depth > MAX_DEPTH {
            return Err(LabError::InvalidGrid(format!(
                "depth {depth} exceeds the maximum {MAX_DEPTH}"
            )));
        }
        let n = 1usize << depth;
        let cells = n.checked_pow(cube.dim as u32).unwrap_or(usize::MAX);
        if cells > 1usize << 42 {
            return Err(LabError::InvalidGrid(format!(
                "{cells} cells do not fit in memory"
            )));
        }
        Ok(Grid {
            cube,
            depth,
            n,
            width: cube.side / n as f64,
        })
    }

    pub fn unit(dim: usize, depth: u32) -> Result<Grid> {
        Grid::new(Cube::unit(dim)?, depth)
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn dim(&self) -> usize {
        self.cube.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.cube.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.width.powi(self.cube.dim as i32)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        let mut c = [0usize; 3];
        c[0] = idx % n;
        if self.cube.dim > 1 {
            c[1] = (idx / n) % n;
        }
        if self.cube.dim > 2 {
            c[2] = idx / (n * n);
        }
        c
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n * (c[1] + self.n * c[2])
    }

    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = self.cube.corner[a] + (c[a] as f64 + 0.5) * self.width;
        }
        x
    }

    /// Cell containing `x`, half-open on the right except at the upper face.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut c = [0usize; 3];
        for a in 0..self.dim() {
            let t = (x[a] - self.cube.corner[a]) / self.width;
            if !(t >= 0.0 && t <= self.n as f64) {
                return None;
            }
            c[a] = (t.floor() as usize).min(self.n - 1);
        }
        Some(self.index(c))
    }

    pub fn whole(&self) -> CellBox {
        CellBox {
            lo: [0; 3],
            size: self.n,
        }
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(LabError::GridMismatch("operands live on different grids"))
        }
    }
}

/// Cell-aligned cube: `size` cells per axis starting at cell `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub size: usize,
}

impl CellBox {
    pub fn new(lo: [usize; 3], size: usize) -> CellBox {
        CellBox { lo, size }
    }

    pub fn cell_count(&self, dim: usize) -> usize {
        self.size.pow(dim as u32)
    }

    pub fn fits(&self, grid: &Grid) -> bool {
        self.size > 0
            && (0..grid.dim()).all(|a| self.lo[a] + self.size <= grid.cells_per_axis())
            && (grid.dim()..3).all(|a| self.lo[a] == 0)
    }

    pub fn contains(&self, c: [usize; 3], dim: usize) -> bool {
        (0..dim).all(|a| c[a] >= self.lo[a] && c[a] < self.lo[a] + self.size)
    }

    pub fn overlaps(&self, other: &CellBox, dim: usize) -> bool {
        (0..dim)
            .all(|a| self.lo[a] < other.lo[a] + other.size && other.lo[a] < self.lo[a] + self.size)
    }

    pub fn contains_box(&self, other: &CellBox, dim: usize) -> bool {
        (0..dim).all(|a| {
            other.lo[a] >= self.lo[a] && other.lo[a] + other.size <= self.lo[a] + self.size
        })
    }

    /// Linear grid indices of the member cells, in grid order.
    pub fn cells<'g>(&self, grid: &'g Grid) -> impl Iterator<Item = usize> + 'g {
        let b = *self;
        let dim = grid.dim();
        let count = b.cell_count(dim);
        (0..count).map(move |k| {
            let mut c = [0usize; 3];
            let mut r = k;
            for (a, ca) in c.iter_mut().enumerate().take(dim) {
                *ca = b.lo[a] + r % b.size;
                r /= b.size;
            }
            grid.index(c)
        })
    }

    pub fn side(&self, grid: &Grid) -> f64 {
        self.size as f64 * grid.width()
    }

    pub fn volume(&self, grid: &Grid) -> f64 {
        self.side(grid).powi(grid.dim() as i32)
    }
}

fn check_values(grid: &Grid, values: &[f64], what: &'static str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(LabError::GridMismatch(
            "value count differs from the cell count",
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LabError::NonFinite(what));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        check_values(&grid, &values, "field")?;
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: Grid, f: F) -> Result<ScalarField> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        ScalarField::new(grid, values)
    }

    pub fn constant(grid: Grid, value: f64) -> Result<ScalarField> {
        ScalarField::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<ScalarField> {
        ScalarField::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Non-negative mass attached to each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasure {
    grid: Grid,
    mass: Vec<f64>,
}

impl CellMeasure {
    pub fn new(grid: Grid, mass: Vec<f64>) -> Result<CellMeasure> {
        check_values(&grid, &mass, "measure")?;
        if mass.iter().any(|&m| m < 0.0) {
            return Err(LabError::Negative("measure"));
        }
        Ok(CellMeasure { grid, mass })
    }

    pub fn lebesgue(grid: Grid) -> CellMeasure {
        CellMeasure {
            grid,
            mass: vec![grid.cell_volume(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        tiled_sum(self.mass.len(), |i| self.mass[i])
    }

    pub fn mass_of(&self, b: &CellBox) -> f64 {
        b.cells(&self.grid)
            .map(|i| self.mass[i])
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn scaled(&self, t: f64) -> Result<CellMeasure> {
        CellMeasure::new(self.grid, self.mass.iter().map(|m| m * t).collect())
    }
}

/// Strictly positive density with respect to Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    grid: Grid,
    density: Vec<f64>,
}

impl WeightField {
    pub fn new(grid: Grid, density: Vec<f64>) -> Result<WeightField> {
        check_values(&grid, &density, "weight")?;
        if density.iter().any(|&d| d <= 0.0) {
            return Err(LabError::Negative(
                "weight (densities must be strictly positive)",
            ));
        }
        Ok(WeightField { grid, density })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<WeightField> {
        WeightField::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `w(B)` for a cell box.
    pub fn mass_of(&self, b: &CellBox) -> f64 {
        let h = self.grid.cell_volume();
        b.cells(&self.grid)
            .map(|i| self.density[i])
            .collect::<CompensatedSum>()
            .value()
            * h
    }

    pub fn total(&self) -> f64 {
        tiled_sum(self.density.len(), |i| self.density[i]) * self.grid.cell_volume()
    }

    pub fn as_measure(&self) -> CellMeasure {
        let h = self.grid.cell_volume();
        CellMeasure {
            grid: self.grid,
            mass: self.density.iter().map(|d| d * h).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    grid: Grid,
    member: Vec<bool>,
}

impl CellSet {
    pub fn new(grid: Grid, member: Vec<bool>) -> Result<CellSet> {
        if member.len() != grid.len() {
            return Err(LabError::GridMismatch(
                "membership length differs from the cell count",
            ));
        }
        Ok(CellSet { grid, member })
    }

    pub fn from_fn<F: Fn([f64; 3]) -> bool>(grid: Grid, pred: F) -> CellSet {
        CellSet {
            grid,
            member: (0..grid.len()).map(|i| pred(grid.center(i))).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.member[idx]
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&b| b).count()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn count_in(&self, b: &CellBox) -> usize {
        b.cells(&self.grid).filter(|&i| self.member[i]).count()
    }

    pub fn complement(&self) -> CellSet {
        CellSet {
            grid: self.grid,
            member: self.member.iter().map(|b| !b).collect(),
        }
    }
}

/// Measure against which a functional integrates.
#[derive(Debug, Clone, Copy)]
pub enum Against<'a> {
    Lebesgue,
    Measure(&'a CellMeasure),
    Weight(&'a WeightField),
}

impl Against<'_> {
    #[inline]
    pub fn mass(&self, grid: &Grid, idx: usize) -> f64 {
        match self {
            Against::Lebesgue => grid.cell_volume(),
            Against::Measure(m) => m.mass[idx],
            Against::Weight(w) => w.density[idx] * grid.cell_volume(),
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        match self {
            Against::Lebesgue => Ok(()),
            Against::Measure(m) => grid.same_as(&m.grid),
            Against::Weight(w) => grid.same_as(&w.grid),
        }
    }
}

/// Which cells a functional looks at.
#[derive(Debug, Clone, Copy, Default)]
pub enum Region<'a> {
    #[default]
    Whole,
    Box(CellBox),
    Set(&'a CellSet),
}

impl Region<'_> {
    pub fn indices(&self, grid: &Grid) -> Result<Vec<usize>> {
        let out: Vec<usize> = match self {
            Region::Whole => (0..grid.len()).collect(),
            Region::Box(b) => {
                if !b.fits(grid) {
                    return Err(LabError::Precondition("box does not fit the grid".into()));
                }
                b.cells(grid).collect()
            }
            Region::Set(s) => {
                grid.same_as(&s.grid)?;
                (0..grid.len()).filter(|&i| s.member[i]).collect()
            }
        };
        if out.is_empty() {
            return Err(LabError::EmptyRegion);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    AtLeast,
    Below,
}

/// Analytic fields sampled at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `offset + slope . x`
    Linear {
        slope: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `min(-log|x - center|, k)`; without `k` the centre must not be a cell centre.
    LogRadial {
        #[serde(default)]
        k: Option<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `|x - center|^beta`
    RadialPower {
        beta: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Indicator of `{x[axis] > cut}`, smoothed linearly over `width` when it is positive.
    Ramp {
        axis: usize,
        cut: f64,
        #[serde(default)]
        width: f64,
    },
    Constant {
        value: f64,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

fn center_of(center: &Option<Vec<f64>>, dim: usize) -> Result<[f64; 3]> {
    let mut c = [0.0; 3];
    if let Some(v) = center {
        if v.len() != dim {
            return Err(constraint("center", format!("expected {dim} coordinates")));
        }
        c[..dim].copy_from_slice(v);
    }
    Ok(c)
}

fn dist(x: &[f64; 3], c: &[f64; 3]) -> f64 {
    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt()
}

pub fn sample_field(spec: &FieldSpec, grid: &Grid) -> Result<ScalarField> {
    let dim = grid.dim();
    match spec {
        FieldSpec::Linear { slope, offset } => {
            if slope.len() != dim {
                return Err(constraint("slope", format!("expected {dim} components")));
            }
            ScalarField::from_fn(*grid, |x| {
                offset + (0..dim).map(|a| slope[a] * x[a]).sum::<f64>()
            })
        }
        FieldSpec::LogRadial { k, center } => {
            let c = center_of(center, dim)?;
            let cap = k.unwrap_or(f64::INFINITY);
            ScalarField::from_fn(*grid, |x| (-dist(&x, &c).ln()).min(cap))
        }
        FieldSpec::RadialPower { beta, center } => {
            let c = center_of(center, dim)?;
            ScalarField::from_fn(*grid, |x| dist(&x, &c).powf(*beta))
        }
        FieldSpec::Ramp { axis, cut, width } => {
            if *axis >= dim {
                return Err(constraint("axis", format!("must be below {dim}")));
            }
            if !(*width >= 0.0) {
                return Err(constraint("width", "must be non-negative"));
            }
            let w = *width;
            ScalarField::from_fn(*grid, |x| {
                let t = x[*axis] - cut;
                if w == 0.0 {
                    if t > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (0.5 + t / w).clamp(0.0, 1.0)
                }
            })
        }
        FieldSpec::Constant { value } => ScalarField::constant(*grid, *value),
        FieldSpec::Tabulated { values } => ScalarField::new(*grid, values.clone()),
    }
}

/// Measures that can be described in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Lebesgue,
    /// Normalised Lebesgue measure of a ball: total mass one.
    NormalizedBall {
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Density `|x - center|^(-beta)`.
    PowerDensity {
        beta: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    SingleCell {
        index: usize,
        #[serde(default = "one")]
        mass: f64,
    },
    PointMass {
        at: Vec<f64>,
        #[serde(default = "one")]
        mass: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Volume of the unit ball in dimension `dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => f64::NAN,
    }
}

pub fn sample_measure(spec: &MeasureSpec, grid: &Grid) -> Result<CellMeasure> {
    let dim = grid.dim();
    let h = grid.width();
    let hv = grid.cell_volume();
    match spec {
        MeasureSpec::Lebesgue => Ok(CellMeasure::lebesgue(*grid)),
        MeasureSpec::NormalizedBall { radius, center } => {
            if !(*radius >= h) {
                return Err(LabError::UnresolvedMeasure {
                    radius: *radius,
                    width: h,
                });
            }
            let c = center_of(center, dim)?;
            let dens = 1.0 / (unit_ball_volume(dim) * radius.powi(dim as i32));
            let mass = (0..grid.len())
                .map(|i| {
                    if dist(&grid.center(i), &c) < *radius {
                        dens * hv
                    } else {
                        0.0
                    }
                })
                .collect();
            CellMeasure::new(*grid, mass)
        }
        MeasureSpec::PowerDensity { beta, center } => {
            let c = center_of(center, dim)?;
            let mass = (0..grid.len())
                .map(|i| dist(&grid.center(i), &c).powf(-beta) * hv)
                .collect();
            CellMeasure::new(*grid, mass)
        }
        MeasureSpec::SingleCell { index, mass } => {
            if *index >= grid.len() {
                return Err(constraint(
                    "index",
                    format!("cell {index} is outside the grid"),
                ));
            }
            let mut v = vec![0.0; grid.len()];
            v[*index] = *mass;
            CellMeasure::new(*grid, v)
        }
        MeasureSpec::PointMass { at, mass } => {
            let idx = grid
                .locate(at)
                .ok_or_else(|| constraint("at", "point lies outside the grid cube"))?;
            let mut v = vec![0.0; grid.len()];
            v[idx] = *mass;
            CellMeasure::new(*grid, v)
        }
    }
}

pub fn integrate(field: &ScalarField, against: Against, region: Region) -> Result<f64> {
    let grid = field.grid;
    against.check(&grid)?;
    let idx = region.indices(&grid)?;
    Ok(tiled_sum(idx.len(), |k| {
        let i = idx[k];
        field.values[i] * against.mass(&grid, i)
    }))
}

/// Lebesgue average over a region.
pub fn average(field: &ScalarField, region: Region) -> Result<f64> {
    let grid = field.grid;
    let idx = region.indices(&grid)?;
    let s = tiled_sum(idx.len(), |k| field.values[idx[k]]);
    Ok(s / idx.len() as f64)
}

/// Average with respect to a measure; errors on zero total mass.
pub fn average_against(field: &ScalarField, against: Against, region: Region) -> Result<f64> {
    let grid = field.grid;
    against.check(&grid)?;
    let idx = region.indices(&grid)?;
    let total = tiled_sum(idx.len(), |k| against.mass(&grid, idx[k]));
    if total <= 0.0 {
        return Err(LabError::ZeroMass("average"));
    }
    let s = tiled_sum(idx.len(), |k| {
        field.values[idx[k]] * against.mass(&grid, idx[k])
    });
    Ok(s / total)
}

/// Centred differences inside, one-sided at the faces.
pub fn gradient_magnitude(field: &ScalarField) -> Result<ScalarField> {
    let grid = field.grid;
    let n = grid.cells_per_axis();
    let h = grid.width();
    let dim = grid.dim();
    let values = (0..grid.len())
        .map(|i| {
            let c = grid.coords(i);
            let mut s = 0.0;
            for a in 0..dim {
                if n == 1 {
                    continue;
                }
                let step = |c: [usize; 3], up: bool| {
                    let mut d = c;
                    if up {
                        d[a] += 1
                    } else {
                        d[a] -= 1
                    }
                    field.values[grid.index(d)]
                };
                let g = if c[a] == 0 {
                    (step(c, true) - field.values[i]) / h
                } else if c[a] == n - 1 {
                    (field.values[i] - step(c, false)) / h
                } else {
                    (step(c, true) - step(c, false)) / (2.0 * h)
                };
                s += g * g;
            }
            s.sqrt()
        })
        .collect();
    ScalarField::new(grid, values)
}

pub fn level_set(field: &ScalarField, lambda: f64, direction: Direction) -> CellSet {
    let member = field
        .values
        .iter()
        .map(|&v| match direction {
            Direction::Above => v > lambda,
            Direction::AtLeast => v >= lambda,
            Direction::Below => v < lambda,
        })
        .collect();
    CellSet {
        grid: field.grid,
        member,
    }
}

/// `inf { a : |{f > a} ∩ Q| < |Q|/2 }` over the cells of the region.
pub fn maximal_median(field: &ScalarField, region: Region) -> Result<f64> {
    let idx = region.indices(&field.grid)?;
    let mut v: Vec<f64> = idx.iter().map(|&i| field.values[i]).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    // count(> v[j]) = k - (last position holding v[j]) - 1; it only drops at data values.
    let mut j = 0;
    while j < k {
        let mut e = j;
        while e + 1 < k && v[e + 1] == v[j] {
            e += 1;
        }
        let above = k - e - 1;
        if 2 * above < k {
            return Ok(v[j]);
        }
        j = e + 1;
    }
    Ok(v[k - 1])
}

#[derive(Debug, Clone, Copy)]
pub enum NormKind<'a> {
    /// `(∫|f - c|^p)^{1/p}`, divided by the total mass first when `normalized`.
    Lp {
        p: f64,
        against: Against<'a>,
        normalized: bool,
    },
    /// `sup_v v (w{|f - c| >= v} / w(Q))^{1/q}`.
    WeakLq { q: f64, against: Against<'a> },
    /// `q ∫_0^∞ μ{|f - c| >= v}^{1/q} dv`.
    LorentzQ1 { q: f64, against: Against<'a> },
}

/// Values `|f - c|` with their masses, sorted descending.
fn deviations(field: &ScalarField, c: f64, against: Against, idx: &[usize]) -> Vec<(f64, f64)> {
    let grid = field.grid;
    let mut d: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| ((field.values[i] - c).abs(), against.mass(&grid, i)))
        .collect();
    d.sort_by(|a, b| b.0.total_cmp(&a.0));
    d
}

pub fn norm(field: &ScalarField, kind: NormKind, c: f64, region: Region) -> Result<f64> {
    let grid = field.grid;
    let idx = region.indices(&grid)?;
    match kind {
        NormKind::Lp {
            p,
            against,
            normalized,
        } => {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(constraint("p", "must be at least 1"));
            }
            against.check(&grid)?;
            let s = tiled_sum(idx.len(), |k| {
                let i = idx[k];
                let d = (field.values[i] - c).abs();
                let t = if p == 1.0 {
                    d
                } else if p == 2.0 {
                    d * d
                } else {
                    d.powf(p)
                };
                t * against.mass(&grid, i)
            });
            let s = if normalized {
                let total = tiled_sum(idx.len(), |k| against.mass(&grid, idx[k]));
                if total <= 0.0 {
                    return Err(LabError::ZeroMass("normalised Lp norm"));
                }
                s / total
            } else {
                s
            };
            Ok(s.powf(1.0 / p))
        }
        NormKind::WeakLq { q, against } => {
            if !(q > 0.0 && q.is_finite()) {
                return Err(constraint("q", "must be positive"));
            }
            against.check(&grid)?;
            let d = deviations(field, c, against, &idx);
            let total = d.iter().map(|x| x.1).collect::<CompensatedSum>().value();
            if total <= 0.0 {
                return Err(LabError::ZeroMass("weak norm"));
            }
            let mut acc = CompensatedSum::new();
            let mut best: f64 = 0.0;
            let mut j = 0;
            while j < d.len() {
                let v = d[j].0;
                while j < d.len() && d[j].0 == v {
                    acc.add(d[j].1);
                    j += 1;
                }
                if v > 0.0 {
                    best = best.max(v * (acc.value() / total).powf(1.0 / q));
                }
            }
            Ok(best)
        }
        NormKind::LorentzQ1 { q, against } => {
            if !(q > 0.0 && q.is_finite()) {
                return Err(constraint("q", "must be positive"));
            }
            against.check(&grid)?;
            let d = deviations(field, c, against, &idx);
            // distinct levels with cumulative mass above them, descending
            let mut levels: Vec<(f64, f64)> = Vec::new();
            let mut acc = CompensatedSum::new();
            let mut j = 0;
            while j < d.len() {
                let v = d[j].0;
                while j < d.len() && d[j].0 == v {
                    acc.add(d[j].1);
                    j += 1;
                }
                levels.push((v, acc.value()));
            }
            let mut s = CompensatedSum::new();
            for (t, &(v, m)) in levels.iter().enumerate() {
                let below = levels.get(t + 1).map_or(0.0, |x| x.0);
                if v > 0.0 {
                    s.add((v - below) * m.powf(1.0 / q));
                }
            }
            Ok(q * s.value())
        }
    }
}
