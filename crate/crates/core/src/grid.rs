//! Uniform rectangular meshes and the cell-centred fields that live on them.
//!
//! Cells are stored row-major with `x` varying fastest: cell `(i, j)` has flat
//! index `i + nx * j` and its centre at `(x_lo + (i + 1/2) h_x, y_lo + (j + 1/2) h_y)`.
//! Every integral in the crate goes through the midpoint rule defined here, so
//! discrete inner products agree everywhere they are paired.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub const fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Rect { x_lo, x_hi, y_lo, y_hi }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_lo && x <= self.x_hi && y >= self.y_lo && y <= self.y_hi
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x_lo, self.x_hi, self.y_lo, self.y_hi].iter().all(|v| v.is_finite());
        if !finite || !(self.x_hi > self.x_lo) || !(self.y_hi > self.y_lo) {
            return Err(Error::invalid(format!("degenerate extent {self:?}")));
        }
        Ok(())
    }
}

/// Uniform mesh over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    extent: Rect,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(extent: Rect, nx: usize, ny: usize) -> Result<Self> {
        extent.validate()?;
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("grid needs at least one cell per axis, got {nx}x{ny}")));
        }
        Ok(Grid { extent, nx, ny, hx: extent.width() / nx as f64, hy: extent.height() / ny as f64 })
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.extent.x_lo + (i as f64 + 0.5) * self.hx, self.extent.y_lo + (j as f64 + 0.5) * self.hy)
    }

    /// Cell containing `(x, y)`; points on the far boundary map to the last cell.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.extent.contains(x, y) {
            return None;
        }
        let i = (((x - self.extent.x_lo) / self.hx) as usize).min(self.nx - 1);
        let j = (((y - self.extent.y_lo) / self.hy) as usize).min(self.ny - 1);
        Some((i, j))
    }

    pub fn centers(&self) -> impl Iterator<Item = (usize, (f64, f64))> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (self.index(i, j), self.cell_center(i, j))))
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!("field has {} values, grid has {} cells", values.len(), grid.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite value {} at cell {pos}", values[pos])));
        }
        Ok(ScalarField { grid, values })
    }

    /// Wraps values without the finiteness scan; used on solver hot paths
    /// where the caller checks at coarser granularity.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField { grid, values: vec![value; grid.len()] }
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = grid.centers().map(|(_, (x, y))| f(x, y)).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Midpoint-rule integral over the domain.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// `L2(Omega)` inner product under the same quadrature.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `integral |self - other|`
    pub fn l1_distance(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid.cell_area()
    }
}

/// A field with values in `[0, 1]`: a relaxed or thresholded region indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField(ScalarField);

impl IndicatorField {
    pub fn new(field: ScalarField) -> Result<Self> {
        if let Some(v) = field.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("indicator value {v} outside [0,1]")));
        }
        Ok(IndicatorField(field))
    }

    pub fn ones(grid: Grid) -> Self {
        IndicatorField(ScalarField::constant(grid, 1.0))
    }

    pub fn zeros(grid: Grid) -> Self {
        IndicatorField(ScalarField::zeros(grid))
    }

    /// Grid-resolved indicator: a cell belongs to the region iff its centre does.
    pub fn from_region(grid: Grid, region: &Region) -> Self {
        IndicatorField(ScalarField::from_fn(grid, |x, y| if region.contains(x, y) { 1.0 } else { 0.0 }))
    }

    /// Clamps every value into `[0, 1]`.
    pub fn project(field: ScalarField) -> Self {
        IndicatorField(field.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }

    /// `1` where the value is at least `0.5`, else `0`.
    pub fn threshold(&self) -> IndicatorField {
        IndicatorField(self.0.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
    }

    pub fn is_binary(&self) -> bool {
        self.values().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Measure of the cells where the two binary indicators disagree.
    pub fn mismatch_area(&self, other: &IndicatorField) -> f64 {
        self.values().iter().zip(other.values()).filter(|(a, b)| (*a >= &0.5) != (*b >= &0.5)).count() as f64
            * self.grid().cell_area()
    }
}

/// Simple geometric regions used to describe ground-truth regions of interest.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Disk { cx: f64, cy: f64, radius: f64 },
    Rect(Rect),
    Union(Vec<Region>),
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Region::Disk { cx, cy, radius } => (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius,
            Region::Rect(r) => r.contains(x, y),
            Region::Union(parts) => parts.iter().any(|p| p.contains(x, y)),
        }
    }

    /// Parses `disk:cx,cy,r` or `rect:x_lo,x_hi,y_lo,y_hi`; several shapes
    /// joined by `;` form their union.
    pub fn parse(text: &str) -> Result<Region> {
        if text.contains(';') {
            let parts =
                text.split(';').filter(|s| !s.trim().is_empty()).map(Region::parse).collect::<Result<Vec<_>>>()?;
            return Ok(Region::Union(parts));
        }
        let (kind, args) =
            text.split_once(':').ok_or_else(|| Error::invalid(format!("region `{text}` lacks a `kind:` prefix")))?;
        let nums = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("region `{text}`: {e}")))?;
        match (kind.trim(), nums.as_slice()) {
            ("disk", &[cx, cy, radius]) if radius > 0.0 => Ok(Region::Disk { cx, cy, radius }),
            ("rect", &[x_lo, x_hi, y_lo, y_hi]) => {
                let r = Rect::new(x_lo, x_hi, y_lo, y_hi);
                r.validate()?;
                Ok(Region::Rect(r))
            }
            _ => Err(Error::invalid(format!("unrecognised region `{text}`"))),
        }
    }
}

/// Normalised Gaussian density using exact cell averages, so the mass is
/// captured even when `sigma` is far below the cell width.
pub fn gaussian_density(grid: Grid, center: (f64, f64), sigma: f64) -> Result<ScalarField> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let ext = grid.extent();
    let cdf = |z: f64, mu: f64| 0.5 * (1.0 + libm::erf((z - mu) / (sigma * std::f64::consts::SQRT_2)));
    let xs: Vec<f64> = (0..grid.nx())
        .map(|i| {
            let a = ext.x_lo + i as f64 * grid.hx();
            cdf(a + grid.hx(), center.0) - cdf(a, center.0)
        })
        .collect();
    let ys: Vec<f64> = (0..grid.ny())
        .map(|j| {
            let a = ext.y_lo + j as f64 * grid.hy();
            cdf(a + grid.hy(), center.1) - cdf(a, center.1)
        })
        .collect();
    let mass: f64 = xs.iter().sum::<f64>() * ys.iter().sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::invalid(format!("Gaussian at {center:?} has no mass inside the domain")));
    }
    let scale = 1.0 / (mass * grid.cell_area());
    let mut values = Vec::with_capacity(grid.len());
    for wy in &ys {
        for wx in &xs {
            values.push(wx * wy * scale);
        }
    }
    ScalarField::new(grid, values)
}

/// Per-partition-cell activity targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    /// Partition cells per axis.
    pub parts: usize,
    /// `z*` per partition cell, index `m + parts * n` (`m` along x).
    pub targets: Vec<f64>,
}

impl CellPartition {
    pub fn target(&self, m: usize, n: usize) -> f64 {
        self.targets[m + self.parts * n]
    }

    pub fn total(&self) -> f64 {
        self.targets.iter().sum()
    }
}

/// How the target activity distribution is derived from a thresholded map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    /// Target count `C` for a partition cell fully inside the region.
    pub total: f64,
    /// Target activity density on the region; defaults to `C / 50`.
    pub density: Option<f64>,
    /// Restrict targets to cells with centre `y >= y_min`.
    pub y_min: Option<f64>,
}

impl TargetSpec {
    pub fn new(total: f64) -> Self {
        TargetSpec { total, density: None, y_min: None }
    }

    pub fn density_value(&self) -> f64 {
        self.density.unwrap_or(self.total / 50.0)
    }
}

/// Builds partition targets `z*_mn = C * |cell ∩ region| / |cell|` and the
/// matching target activity field.
pub fn partition_targets(
    region: &IndicatorField,
    parts: usize,
    spec: TargetSpec,
) -> Result<(CellPartition, ScalarField)> {
    let grid = *region.grid();
    if parts == 0 || !grid.nx().is_multiple_of(parts) || !grid.ny().is_multiple_of(parts) {
        return Err(Error::invalid(format!(
            "partition count {parts} must divide the {}x{} grid",
            grid.nx(),
            grid.ny()
        )));
    }
    if !(spec.total > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {}", spec.total)));
    }
    let masked = ScalarField::from_raw(
        grid,
        grid.centers()
            .map(|(k, (_, y))| {
                let keep = spec.y_min.is_none_or(|y_min| y >= y_min);
                if keep && region.values()[k] >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    );
    let (bx, by) = (grid.nx() / parts, grid.ny() / parts);
    let mut targets = vec![0.0; parts * parts];
    for n in 0..parts {
        for m in 0..parts {
            let mut inside = 0usize;
            for j in n * by..(n + 1) * by {
                for i in m * bx..(m + 1) * bx {
                    if masked.at(i, j) > 0.0 {
                        inside += 1;
                    }
                }
            }
            targets[m + parts * n] = spec.total * inside as f64 / (bx * by) as f64;
        }
    }
    let density = spec.density_value();
    let target = masked.map(|v| v * density);
    Ok((CellPartition { parts, targets }, target))
}
