//! Finite-difference tensor fields on a masked uniform grid.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::FieldError;
use crate::tensor::{geodesic_gamma0, AntiSymTensor3, Linear, Potential, Rotation3, SymTensor3};

/// Uniform cell-centered grid; cell `(i, j)` has center
/// `origin + ((i + 1/2) h, (j + 1/2) h)` and flat index `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

/// Minimum cell count per side.
pub const MIN_CELLS: usize = 16;

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self, FieldError> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(FieldError::TooCoarse(format!(
                "{nx}x{ny} grid, need at least {MIN_CELLS} cells per side"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FieldError::InvalidGeometry(format!("spacing h = {h}")));
        }
        Ok(GridSpec { nx, ny, h, origin })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.coords(idx);
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    /// Neighbours in the order `+x, -x, +y, -y`.
    pub fn neighbors(&self, idx: usize) -> [Option<usize>; 4] {
        let (i, j) = self.coords(idx);
        [
            (i + 1 < self.nx).then(|| idx + 1),
            (i > 0).then(|| idx - 1),
            (j + 1 < self.ny).then(|| idx + self.nx),
            (j > 0).then(|| idx - self.nx),
        ]
    }

    /// Cell containing the point, if inside the grid.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        (i < self.nx && j < self.ny).then(|| self.index(i, j))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellTag {
    Interior,
    Boundary,
    Exterior,
}

/// Winding, frame and phase of the boundary loop
/// `g(theta) = R gamma0(k theta + phi) R^T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryData {
    pub winding: i32,
    pub frame: Rotation3,
    pub phase: f64,
}

impl Default for BoundaryData {
    fn default() -> Self {
        BoundaryData {
            winding: 1,
            frame: Rotation3::IDENTITY,
            phase: 0.0,
        }
    }
}

impl BoundaryData {
    pub fn value(&self, theta: f64) -> SymTensor3 {
        geodesic_gamma0(self.winding as f64 * theta + self.phase).conjugate(&self.frame.0)
    }
}

/// Cell classification with the fixed boundary trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMask {
    grid: GridSpec,
    tags: Vec<CellTag>,
    center: [f64; 2],
    boundary_values: Vec<SymTensor3>,
    boundary_data: Option<BoundaryData>,
    boundary_applied: bool,
}

impl DomainMask {
    /// Builds a mask from an interior indicator. Boundary cells are the
    /// non-interior 4-neighbours of interior cells.
    pub fn from_interior(
        grid: GridSpec,
        center: [f64; 2],
        interior: &[bool],
    ) -> Result<Self, FieldError> {
        assert_eq!(interior.len(), grid.len());
        let count = interior.iter().filter(|b| **b).count();
        if count == 0 {
            return Err(FieldError::TooCoarse("no interior cells".into()));
        }
        let mut tags = vec![CellTag::Exterior; grid.len()];
        for idx in 0..grid.len() {
            if !interior[idx] {
                continue;
            }
            tags[idx] = CellTag::Interior;
            let nbrs = grid.neighbors(idx);
            if nbrs.iter().any(Option::is_none) {
                return Err(FieldError::InvalidGeometry(
                    "interior touches the edge of the grid; no room for the boundary ring".into(),
                ));
            }
        }
        for idx in 0..grid.len() {
            if interior[idx] {
                for q in grid.neighbors(idx).into_iter().flatten() {
                    if !interior[q] {
                        tags[q] = CellTag::Boundary;
                    }
                }
            }
        }
        // Connectivity of the interior.
        let start = interior.iter().position(|b| *b).unwrap();
        let mut seen = vec![false; grid.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(p) = stack.pop() {
            reached += 1;
            for q in grid.neighbors(p).into_iter().flatten() {
                if interior[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        if reached != count {
            return Err(FieldError::InvalidGeometry(format!(
                "interior has {} cells but only {reached} are connected",
                count
            )));
        }
        Ok(DomainMask {
            grid,
            tags,
            center,
            boundary_values: vec![SymTensor3::ISOTROPIC; grid.len()],
            boundary_data: None,
            boundary_applied: false,
        })
    }

    /// Disk of the given radius and center inside an existing grid.
    pub fn disk_in_grid(grid: GridSpec, center: [f64; 2], radius: f64) -> Result<Self, FieldError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(FieldError::InvalidGeometry(format!("radius {radius}")));
        }
        let cut = radius - 0.5 * grid.h;
        let interior: Vec<bool> = (0..grid.len())
            .map(|idx| {
                let c = grid.center(idx);
                (c[0] - center[0]).hypot(c[1] - center[1]) < cut
            })
            .collect();
        DomainMask::from_interior(grid, center, &interior)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn tags(&self) -> &[CellTag] {
        &self.tags
    }

    pub fn tag(&self, idx: usize) -> CellTag {
        self.tags[idx]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.tags[idx] == CellTag::Interior
    }

    /// Interior or boundary.
    pub fn is_active(&self, idx: usize) -> bool {
        self.tags[idx] != CellTag::Exterior
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn interior_count(&self) -> usize {
        self.tags
            .iter()
            .filter(|t| **t == CellTag::Interior)
            .count()
    }

    pub fn boundary_applied(&self) -> bool {
        self.boundary_applied
    }

    pub fn boundary_data(&self) -> Option<&BoundaryData> {
        self.boundary_data.as_ref()
    }

    pub fn boundary_value(&self, idx: usize) -> SymTensor3 {
        self.boundary_values[idx]
    }

    /// Polar coordinates `(r, theta)` of a cell about the domain center.
    pub fn polar(&self, idx: usize) -> (f64, f64) {
        let c = self.grid.center(idx);
        let (dx, dy) = (c[0] - self.center[0], c[1] - self.center[1]);
        (dx.hypot(dy), dy.atan2(dx))
    }

    /// Mean distance of the boundary ring from the center.
    pub fn boundary_radius(&self) -> f64 {
        let (sum, n) = (0..self.grid.len())
            .filter(|&i| self.tags[i] == CellTag::Boundary)
            .fold((0.0, 0usize), |(s, n), i| (s + self.polar(i).0, n + 1));
        sum / n as f64
    }

    /// Sets arbitrary boundary values from a function of position.
    pub fn with_boundary_fn(&self, f: impl Fn([f64; 2]) -> SymTensor3) -> DomainMask {
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            if self.tags[idx] == CellTag::Boundary {
                out.boundary_values[idx] = f(self.grid.center(idx)).with_unit_trace();
            }
        }
        out.boundary_data = None;
        out.boundary_applied = true;
        out
    }

    /// Conjugates every boundary value by a fixed rotation.
    pub fn conjugated(&self, r: &Rotation3) -> DomainMask {
        let mut out = self.clone();
        for idx in 0..self.grid.len() {
            if self.tags[idx] == CellTag::Boundary {
                out.boundary_values[idx] = self.boundary_values[idx].conjugate(&r.0);
            }
        }
        out.boundary_data = self.boundary_data.map(|bd| BoundaryData {
            frame: Rotation3(r.0 * bd.frame.0),
            ..bd
        });
        out
    }
}

/// Square grid of `n` cells per side holding a disk of `radius` centered at
/// the origin, with a margin of two cells around it.
pub fn make_disk_domain(n: usize, radius: f64) -> Result<DomainMask, FieldError> {
    if n < MIN_CELLS {
        return Err(FieldError::TooCoarse(format!("n = {n} < {MIN_CELLS}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(FieldError::InvalidGeometry(format!("radius {radius}")));
    }
    let h = 2.0 * radius / (n - 4) as f64;
    let half = 0.5 * n as f64 * h;
    let grid = GridSpec::new(n, n, h, [-half, -half])?;
    DomainMask::disk_in_grid(grid, [0.0, 0.0], radius)
}

/// Writes `g(theta)` into every boundary cell, with `theta` the polar angle
/// about the domain center.
pub fn apply_boundary(mask: &DomainMask, bd: &BoundaryData) -> Result<DomainMask, FieldError> {
    if bd.winding % 2 == 0 {
        return Err(FieldError::EvenWinding(bd.winding));
    }
    let mut out = mask.clone();
    for idx in 0..mask.grid.len() {
        if mask.tags[idx] == CellTag::Boundary {
            out.boundary_values[idx] = bd.value(mask.polar(idx).1);
        }
    }
    out.boundary_data = Some(*bd);
    out.boundary_applied = true;
    Ok(out)
}

/// Grid-sampled unit-trace tensor field. Boundary cells hold the mask's
/// boundary values; exterior cells hold `I/3` and are never read.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    mask: Arc<DomainMask>,
    values: Vec<SymTensor3>,
}

impl TensorField {
    /// Fills the interior from `f`, the boundary from the mask.
    pub fn from_fn(
        mask: Arc<DomainMask>,
        f: impl Fn([f64; 2]) -> SymTensor3,
    ) -> Result<Self, FieldError> {
        if !mask.boundary_applied {
            return Err(FieldError::MissingBoundary);
        }
        let values = (0..mask.grid.len())
            .map(|idx| match mask.tags[idx] {
                CellTag::Interior => f(mask.grid.center(idx)).with_unit_trace(),
                CellTag::Boundary => mask.boundary_values[idx],
                CellTag::Exterior => SymTensor3::ISOTROPIC,
            })
            .collect();
        Ok(TensorField { mask, values })
    }

    pub(crate) fn from_parts(mask: Arc<DomainMask>, values: Vec<SymTensor3>) -> Self {
        debug_assert_eq!(mask.grid.len(), values.len());
        TensorField { mask, values }
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn mask_arc(&self) -> &Arc<DomainMask> {
        &self.mask
    }

    pub fn grid(&self) -> &GridSpec {
        &self.mask.grid
    }

    pub fn values(&self) -> &[SymTensor3] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> SymTensor3 {
        self.values[idx]
    }

    /// Applies `f` to every interior value, keeping the trace exactly one.
    pub fn map_interior(&self, f: impl Fn(SymTensor3) -> SymTensor3) -> TensorField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, u)| {
                if self.mask.is_interior(idx) {
                    f(*u).with_unit_trace()
                } else {
                    *u
                }
            })
            .collect();
        TensorField {
            mask: self.mask.clone(),
            values,
        }
    }

    /// Global conjugation `u -> R u R^T` of field and boundary trace.
    pub fn conjugated(&self, r: &Rotation3) -> TensorField {
        let mask = Arc::new(self.mask.conjugated(r));
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, u)| {
                if self.mask.is_active(idx) {
                    u.conjugate(&r.0)
                } else {
                    *u
                }
            })
            .collect();
        TensorField { mask, values }
    }

    /// Interior update `u <- u - dt * g`, re-deriving `zz` from the trace.
    pub fn descend(&self, direction: &[SymTensor3], dt: f64) -> TensorField {
        let values = self
            .values
            .iter()
            .zip(direction)
            .enumerate()
            .map(|(idx, (u, g))| {
                if self.mask.is_interior(idx) {
                    (*u - *g * dt).with_unit_trace()
                } else {
                    *u
                }
            })
            .collect();
        TensorField {
            mask: self.mask.clone(),
            values,
        }
    }

    /// Smallest eigenvalue and largest Frobenius norm over active cells.
    pub fn spectral_extremes(&self) -> (f64, f64, f64) {
        let mut min_eig = f64::INFINITY;
        let mut max_eig = f64::NEG_INFINITY;
        let mut max_norm: f64 = 0.0;
        for (idx, u) in self.values.iter().enumerate() {
            if self.mask.is_active(idx) {
                let sys = crate::tensor::eigen_sym3(u);
                min_eig = min_eig.min(sys.values[2]);
                max_eig = max_eig.max(sys.values[0]);
                max_norm = max_norm.max(u.norm());
            }
        }
        (min_eig, max_eig, max_norm)
    }
}

/// How to fill the interior before a solve.
#[derive(Clone, Debug, PartialEq)]
pub enum InitMode {
    /// Blend the boundary loop toward `I/3` linearly in the radius.
    RadialMelt,
    /// Radial melt plus a seeded random traceless perturbation.
    Random { seed: u64, amplitude: f64 },
    /// Read a previously written snapshot.
    Snapshot(PathBuf),
}

fn melt_value(mask: &DomainMask, idx: usize, rb: f64) -> SymTensor3 {
    let (r, theta) = mask.polar(idx);
    let s = (r / rb).clamp(0.0, 1.0);
    let g = match mask.boundary_data {
        Some(bd) => bd.value(theta),
        None => nearest_boundary_by_angle(mask, theta),
    };
    g * s + SymTensor3::ISOTROPIC * (1.0 - s)
}

fn nearest_boundary_by_angle(mask: &DomainMask, theta: f64) -> SymTensor3 {
    let mut best = (f64::INFINITY, SymTensor3::ISOTROPIC);
    for idx in 0..mask.grid.len() {
        if mask.tags[idx] == CellTag::Boundary {
            let d = (mask.polar(idx).1 - theta).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            if d < best.0 {
                best = (d, mask.boundary_values[idx]);
            }
        }
    }
    best.1
}

/// Initial interior values for a solve.
pub fn initial_field(mask: &Arc<DomainMask>, mode: &InitMode) -> Result<TensorField, FieldError> {
    if !mask.boundary_applied {
        return Err(FieldError::MissingBoundary);
    }
    let rb = mask.boundary_radius();
    let melt = |idx: usize| melt_value(mask, idx, rb);
    let values = match mode {
        InitMode::RadialMelt => (0..mask.grid.len())
            .map(|idx| match mask.tags[idx] {
                CellTag::Interior => melt(idx).with_unit_trace(),
                CellTag::Boundary => mask.boundary_values[idx],
                CellTag::Exterior => SymTensor3::ISOTROPIC,
            })
            .collect(),
        InitMode::Random { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..mask.grid.len())
                .map(|idx| match mask.tags[idx] {
                    CellTag::Interior => {
                        let noise =
                            SymTensor3::from_array([(); 6].map(|_| rng.gen_range(-1.0..1.0)))
                                .traceless();
                        (melt(idx) + noise * *amplitude).with_unit_trace()
                    }
                    CellTag::Boundary => mask.boundary_values[idx],
                    CellTag::Exterior => SymTensor3::ISOTROPIC,
                })
                .collect()
        }
        InitMode::Snapshot(path) => return crate::snapshot::read_snapshot(path, mask),
    };
    Ok(TensorField {
        mask: mask.clone(),
        values,
    })
}

/// Dirichlet and potential parts of the discrete energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub dirichlet: f64,
    /// `(1/eps^2) h^2 sum W`.
    pub potential_mass: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.dirichlet + self.potential_mass
    }
}

/// Discrete energy `sum_edges |u_q - u_p|^2 / 2 + h^2 sum_interior W(u)/eps^2`.
///
/// Edges join 4-neighbouring active cells with at least one interior end,
/// so the Dirichlet part is the forward-difference approximation of
/// `int |grad u|^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyFunctional {
    pub eps: f64,
    pub potential: Potential,
}

impl EnergyFunctional {
    pub fn new(eps: f64) -> Self {
        EnergyFunctional {
            eps,
            potential: Potential::Standard,
        }
    }

    pub fn with_potential(eps: f64, potential: Potential) -> Self {
        EnergyFunctional { eps, potential }
    }

    pub fn parts(&self, field: &TensorField) -> EnergyParts {
        let mask = field.mask();
        let grid = mask.grid;
        let u = &field.values;
        let mut dirichlet = 0.0;
        let mut pot = 0.0;
        for idx in 0..grid.len() {
            let tag = mask.tags[idx];
            if tag == CellTag::Exterior {
                continue;
            }
            let (i, j) = grid.coords(idx);
            let fwd = [
                (i + 1 < grid.nx).then(|| idx + 1),
                (j + 1 < grid.ny).then(|| idx + grid.nx),
            ];
            for q in fwd.into_iter().flatten() {
                let tq = mask.tags[q];
                if tq != CellTag::Exterior && (tag == CellTag::Interior || tq == CellTag::Interior)
                {
                    dirichlet += (u[q] - u[idx]).norm_sq();
                }
            }
            if tag == CellTag::Interior {
                pot += self.potential.value(&u[idx]);
            }
        }
        EnergyParts {
            dirichlet: 0.5 * dirichlet,
            potential_mass: pot * grid.h * grid.h / (self.eps * self.eps),
        }
    }

    pub fn value(&self, field: &TensorField) -> f64 {
        self.parts(field).total()
    }

    /// `L^2` gradient: `-Lap_h u + grad W / eps^2` at interior cells, made
    /// traceless; zero elsewhere. The directional derivative of
    /// [`EnergyFunctional::value`] along `d` is `h^2 sum <G, d>`.
    pub fn gradient(&self, field: &TensorField) -> Vec<SymTensor3> {
        let mask = field.mask();
        let grid = mask.grid;
        let u = &field.values;
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        (0..grid.len())
            .map(|idx| {
                if mask.tags[idx] != CellTag::Interior {
                    return SymTensor3::ZERO;
                }
                let up = u[idx];
                // All four neighbours of an interior cell are active.
                let sum = u[idx + 1] + u[idx - 1] + u[idx + grid.nx] + u[idx - grid.nx];
                let lap = (sum - up * 4.0) * inv_h2;
                (self.potential.gradient(&up) * inv_eps2 - lap).traceless()
            })
            .collect()
    }

    /// Energy parts and gradient in one sweep over the grid.
    pub fn evaluate(&self, field: &TensorField) -> (EnergyParts, Vec<SymTensor3>) {
        let mask = field.mask();
        let grid = mask.grid;
        let u = &field.values;
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let mut grad = vec![SymTensor3::ZERO; grid.len()];
        let mut dirichlet = 0.0;
        let mut pot = 0.0;
        for idx in 0..grid.len() {
            if mask.tags[idx] != CellTag::Interior {
                continue;
            }
            let up = u[idx];
            let mut sum = SymTensor3::ZERO;
            for q in [idx + 1, idx - 1, idx + grid.nx, idx - grid.nx] {
                let d = u[q] - up;
                // Interior-interior edges are visited from both ends.
                let w = if mask.tags[q] == CellTag::Interior {
                    0.5
                } else {
                    1.0
                };
                dirichlet += w * d.norm_sq();
                sum += d;
            }
            pot += self.potential.value(&up);
            grad[idx] = (self.potential.gradient(&up) * inv_eps2 - sum * inv_h2).traceless();
        }
        let parts = EnergyParts {
            dirichlet: 0.5 * dirichlet,
            potential_mass: pot * grid.h * grid.h * inv_eps2,
        };
        (parts, grad)
    }
}

/// Energy with the default potential.
pub fn energy(field: &TensorField, eps: f64) -> f64 {
    EnergyFunctional::new(eps).value(field)
}

/// Energy gradient with the default potential.
pub fn energy_gradient(field: &TensorField, eps: f64) -> Vec<SymTensor3> {
    EnergyFunctional::new(eps).gradient(field)
}

/// Matrix-valued function sampled on a grid, defined where `valid`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    pub grid: GridSpec,
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

/// Matrix-valued vector field `(F1, F2)` sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField<T> {
    pub grid: GridSpec,
    pub f1: Vec<T>,
    pub f2: Vec<T>,
    pub valid: Vec<bool>,
}

/// Bilinear weights of the four cell centers around `p`.
fn bilinear_stencil(grid: &GridSpec, p: [f64; 2]) -> Option<[(usize, f64); 4]> {
    let fx = (p[0] - grid.origin[0]) / grid.h - 0.5;
    let fy = (p[1] - grid.origin[1]) / grid.h - 0.5;
    if !(fx >= 0.0 && fy >= 0.0) {
        return None;
    }
    let (i, j) = (fx.floor() as usize, fy.floor() as usize);
    if i + 1 >= grid.nx || j + 1 >= grid.ny {
        return None;
    }
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let base = grid.index(i, j);
    Some([
        (base, (1.0 - tx) * (1.0 - ty)),
        (base + 1, tx * (1.0 - ty)),
        (base + grid.nx, (1.0 - tx) * ty),
        (base + grid.nx + 1, tx * ty),
    ])
}

impl<T: Linear> ScalarField<T> {
    /// Bilinear interpolation; `None` unless all four surrounding cells are valid.
    pub fn sample(&self, p: [f64; 2]) -> Option<T> {
        let st = bilinear_stencil(&self.grid, p)?;
        st.iter().try_fold(T::default(), |acc, (idx, w)| {
            self.valid[*idx].then(|| acc + self.values[*idx] * *w)
        })
    }

    /// `h^2 sum |f|^2` over valid cells accepted by `keep`, square-rooted.
    pub fn l2_norm_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        (0..self.grid.len())
            .filter(|&i| self.valid[i] && keep(i))
            .map(|i| self.values[i].norm_sq() * h2)
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Linear> VectorField<T> {
    pub fn sample(&self, p: [f64; 2]) -> Option<(T, T)> {
        let st = bilinear_stencil(&self.grid, p)?;
        st.iter()
            .try_fold((T::default(), T::default()), |acc, (idx, w)| {
                self.valid[*idx].then(|| (acc.0 + self.f1[*idx] * *w, acc.1 + self.f2[*idx] * *w))
            })
    }

    pub fn map<S: Linear>(&self, f: impl Fn(T) -> S) -> VectorField<S> {
        VectorField {
            grid: self.grid,
            f1: self.f1.iter().map(|v| f(*v)).collect(),
            f2: self.f2.iter().map(|v| f(*v)).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Derivative along `axis` (0 = x, 1 = y): centered where both neighbours are
/// valid, one-sided where only one is (unless `centered_only`).
pub(crate) fn partial<T: Linear>(
    grid: &GridSpec,
    valid: &[bool],
    values: &[T],
    idx: usize,
    axis: usize,
    centered_only: bool,
) -> Option<T> {
    let nb = grid.neighbors(idx);
    let (plus, minus) = (nb[2 * axis], nb[2 * axis + 1]);
    let plus = plus.filter(|q| valid[*q]);
    let minus = minus.filter(|q| valid[*q]);
    let h = grid.h;
    match (plus, minus) {
        (Some(p), Some(m)) => Some((values[p] - values[m]) * (0.5 / h)),
        _ if centered_only => None,
        (Some(p), None) => Some((values[p] - values[idx]) * (1.0 / h)),
        (None, Some(m)) => Some((values[idx] - values[m]) * (1.0 / h)),
        (None, None) => None,
    }
}

/// `(u_x, u_y)` on active cells.
pub fn gradient_field(field: &TensorField) -> VectorField<SymTensor3> {
    let grid = *field.grid();
    let active: Vec<bool> = (0..grid.len()).map(|i| field.mask().is_active(i)).collect();
    let mut f1 = vec![SymTensor3::ZERO; grid.len()];
    let mut f2 = vec![SymTensor3::ZERO; grid.len()];
    let mut valid = vec![false; grid.len()];
    for idx in 0..grid.len() {
        if !active[idx] {
            continue;
        }
        let dx = partial(&grid, &active, &field.values, idx, 0, false);
        let dy = partial(&grid, &active, &field.values, idx, 1, false);
        if let (Some(dx), Some(dy)) = (dx, dy) {
            f1[idx] = dx;
            f2[idx] = dy;
            valid[idx] = true;
        }
    }
    VectorField {
        grid,
        f1,
        f2,
        valid,
    }
}

/// Current `j(u) = ([u; u_x], [u; u_y])`.
pub fn current_field(field: &TensorField) -> VectorField<AntiSymTensor3> {
    let grad = gradient_field(field);
    let u = field.values();
    let mut j1 = vec![AntiSymTensor3::ZERO; grad.grid.len()];
    let mut j2 = vec![AntiSymTensor3::ZERO; grad.grid.len()];
    for idx in 0..grad.grid.len() {
        if grad.valid[idx] {
            j1[idx] = u[idx].commutator(&grad.f1[idx]);
            j2[idx] = u[idx].commutator(&grad.f2[idx]);
        }
    }
    VectorField {
        grid: grad.grid,
        f1: j1,
        f2: j2,
        valid: grad.valid,
    }
}

/// Divergence `dF1/dx + dF2/dy` and curl `dF2/dx - dF1/dy` by centered
/// differences, defined where all four neighbours are valid.
pub fn div_and_curl<T: Linear>(f: &VectorField<T>) -> (ScalarField<T>, ScalarField<T>) {
    let grid = f.grid;
    let mut div = vec![T::default(); grid.len()];
    let mut curl = vec![T::default(); grid.len()];
    let mut valid = vec![false; grid.len()];
    for idx in 0..grid.len() {
        if !f.valid[idx] {
            continue;
        }
        let d1x = partial(&grid, &f.valid, &f.f1, idx, 0, true);
        let d1y = partial(&grid, &f.valid, &f.f1, idx, 1, true);
        let d2x = partial(&grid, &f.valid, &f.f2, idx, 0, true);
        let d2y = partial(&grid, &f.valid, &f.f2, idx, 1, true);
        if let (Some(d1x), Some(d1y), Some(d2x), Some(d2y)) = (d1x, d1y, d2x, d2y) {
            div[idx] = d1x + d2y;
            curl[idx] = d2x - d1y;
            valid[idx] = true;
        }
    }
    (
        ScalarField {
            grid,
            values: div,
            valid: valid.clone(),
        },
        ScalarField {
            grid,
            values: curl,
            valid,
        },
    )
}
