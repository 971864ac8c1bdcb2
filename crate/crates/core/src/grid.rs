//! Uniform rectilinear grids and the nodal fields that live on them.
//!
//! All types are immutable snapshots once constructed; operations elsewhere
//! in the crate are pure functions of them. Node `(i, j, k)` sits at
//! `origin + (i*h_x, j*h_y, k*h_z)`; axis `a` carries `shape[a]` nodes, so
//! the domain length along it is `(shape[a] - 1) * spacing[a]`. For axes at
//! or above `dim` the shape is 1 and the coordinate is inert.

use crate::error::{Result, SimError};
use std::sync::Arc;

/// Boundary condition for scalar fields (temperature).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBc {
    DirichletZero,
    NeumannZero,
}

/// Boundary condition for the gravitational potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiBc {
    /// Periodic box; the source is mean-shifted for solvability and the
    /// potential is normalized to zero mean.
    ZeroMeanPeriodic,
    /// Homogeneous Dirichlet potential on the box boundary.
    DirichletZero,
    /// Direct kernel summation (3-d only); production solves should prefer
    /// the two options above.
    FreeSpaceGreen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    shape: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    pub bc_theta: ScalarBc,
    pub bc_phi: PhiBc,
}

impl Grid {
    pub fn new(
        dim: usize,
        shape_in: &[usize],
        spacing_in: &[f64],
        origin_in: &[f64],
        bc_theta: ScalarBc,
        bc_phi: PhiBc,
    ) -> Result<Arc<Grid>> {
        if !(1..=3).contains(&dim) {
            return Err(SimError::InvalidInput(format!("dim must be 1..=3, got {dim}")));
        }
        if shape_in.len() != dim || spacing_in.len() != dim || origin_in.len() != dim {
            return Err(SimError::InvalidInput(
                "shape/spacing/origin length must equal dim".into(),
            ));
        }
        let mut shape = [1usize; 3];
        let mut spacing = [1.0f64; 3];
        let mut origin = [0.0f64; 3];
        for a in 0..dim {
            if shape_in[a] < 4 {
                return Err(SimError::InvalidInput(format!(
                    "extent along axis {a} must be >= 4, got {}",
                    shape_in[a]
                )));
            }
            if !(spacing_in[a] > 0.0) || !spacing_in[a].is_finite() {
                return Err(SimError::InvalidInput(format!(
                    "spacing along axis {a} must be positive and finite"
                )));
            }
            shape[a] = shape_in[a];
            spacing[a] = spacing_in[a];
            origin[a] = origin_in[a];
        }
        Ok(Arc::new(Grid {
            dim,
            shape,
            spacing,
            origin,
            bc_theta,
            bc_phi,
        }))
    }

    /// 1-d grid on `[origin, origin + (n-1)h]` with Dirichlet temperature bc.
    pub fn line(n: usize, h: f64, origin: f64) -> Result<Arc<Grid>> {
        Grid::new(
            1,
            &[n],
            &[h],
            &[origin],
            ScalarBc::DirichletZero,
            PhiBc::ZeroMeanPeriodic,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Domain extent along each axis, `(n-1) * h`.
    pub fn lengths(&self) -> [f64; 3] {
        let mut l = [0.0; 3];
        for a in 0..3 {
            l[a] = (self.shape[a] - 1) as f64 * self.spacing[a];
        }
        l
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node volume `h_x * ... * h_dim`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.shape[1] + j) * self.shape[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.shape[0];
        let j = (idx / self.shape[0]) % self.shape[1];
        let k = idx / (self.shape[0] * self.shape[1]);
        [i, j, k]
    }

    #[inline]
    pub fn node(&self, c: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + c[0] as f64 * self.spacing[0],
            self.origin[1] + c[1] as f64 * self.spacing[1],
            self.origin[2] + c[2] as f64 * self.spacing[2],
        ]
    }

    /// True if the node touches the domain boundary along any active axis.
    #[inline]
    pub fn is_boundary(&self, c: [usize; 3]) -> bool {
        (0..self.dim).any(|a| c[a] == 0 || c[a] + 1 == self.shape[a])
    }

    pub fn for_each_node(&self, mut f: impl FnMut([usize; 3], usize)) {
        let mut idx = 0;
        for k in 0..self.shape[2] {
            for j in 0..self.shape[1] {
                for i in 0..self.shape[0] {
                    f([i, j, k], idx);
                    idx += 1;
                }
            }
        }
    }

    /// Clamp a point to the closed domain box.
    #[inline]
    pub fn clamp_point(&self, mut x: [f64; 3]) -> ([f64; 3], bool) {
        let l = self.lengths();
        let mut clamped = false;
        for a in 0..self.dim {
            let lo = self.origin[a];
            let hi = self.origin[a] + l[a];
            if x[a] < lo {
                x[a] = lo;
                clamped = true;
            } else if x[a] > hi {
                x[a] = hi;
                clamped = true;
            }
        }
        (x, clamped)
    }
}

/// Deterministic pairwise summation; fixed association order regardless of
/// the caller, so reductions are reproducible bit-for-bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Scalar nodal field.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        Field {
            grid: grid.clone(),
            data: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut([f64; 3]) -> f64) -> Field {
        let mut data = vec![0.0; grid.len()];
        grid.for_each_node(|c, idx| data[idx] = f(grid.node(c)));
        Field {
            grid: grid.clone(),
            data,
        }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<f64>) -> Result<Field> {
        if data.len() != grid.len() {
            return Err(SimError::InvalidInput(format!(
                "field length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            data,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, c: [usize; 3]) -> f64 {
        self.data[self.grid.idx(c[0], c[1], c[2])]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.data.len(), other.data.len());
        Field {
            grid: self.grid.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Multilinear interpolation at a point; the point is clamped to the
    /// closed domain first, so the result is a convex combination of nodal
    /// values (range-preserving).
    pub fn interp(&self, x: [f64; 3]) -> f64 {
        let g = &self.grid;
        let (x, _) = g.clamp_point(x);
        let mut base = [0usize; 3];
        let mut w = [0.0f64; 3];
        for a in 0..g.dim {
            let s = (x[a] - g.origin[a]) / g.spacing[a];
            let mut i = s.floor() as isize;
            let max_i = g.shape[a] as isize - 2;
            if i < 0 {
                i = 0;
            } else if i > max_i {
                i = max_i;
            }
            base[a] = i as usize;
            w[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        let corners = 1usize << g.dim;
        for corner in 0..corners {
            let mut c = base;
            let mut weight = 1.0;
            for a in 0..g.dim {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    weight *= w[a];
                } else {
                    weight *= 1.0 - w[a];
                }
            }
            acc += weight * self.at(c);
        }
        acc
    }
}

/// Vector nodal field with one component per active axis.
#[derive(Debug, Clone)]
pub struct VectorField {
    comps: Vec<Field>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> VectorField {
        VectorField {
            comps: (0..grid.dim()).map(|_| Field::zeros(grid)).collect(),
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> [f64; 3]) -> VectorField {
        let comps = (0..grid.dim())
            .map(|a| Field::from_fn(grid, |x| f(x)[a]))
            .collect();
        VectorField { comps }
    }

    pub fn from_comps(comps: Vec<Field>) -> Result<VectorField> {
        if comps.is_empty() || comps.len() != comps[0].grid().dim() {
            return Err(SimError::InvalidInput(
                "component count must equal grid dimension".into(),
            ));
        }
        Ok(VectorField { comps })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.comps[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, a: usize) -> &Field {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut Field {
        &mut self.comps[a]
    }

    pub fn comps(&self) -> &[Field] {
        &self.comps
    }

    #[inline]
    pub fn at(&self, c: [usize; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, comp) in self.comps.iter().enumerate() {
            v[a] = comp.at(c);
        }
        v
    }

    pub fn interp(&self, x: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, comp) in self.comps.iter().enumerate() {
            v[a] = comp.interp(x);
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0f64, |m, c| m.max(c.max_abs()))
    }

    pub fn is_all_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_all_finite())
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Field {
        let grid = self.grid().clone();
        let n = grid.len();
        let mut data = vec![0.0; n];
        for comp in &self.comps {
            for (d, &v) in data.iter_mut().zip(comp.data()) {
                *d += v * v;
            }
        }
        for d in data.iter_mut() {
            *d = d.sqrt();
        }
        Field { grid, data }
    }
}

/// One time slice of the flow.
#[derive(Debug, Clone)]
pub struct State {
    pub time: f64,
    pub rho: Field,
    pub theta: Field,
    pub u: VectorField,
    pub z: Field,
    pub phi: Field,
}

impl State {
    pub fn grid(&self) -> &Arc<Grid> {
        self.rho.grid()
    }

    pub fn is_all_finite(&self) -> bool {
        self.rho.is_all_finite()
            && self.theta.is_all_finite()
            && self.u.is_all_finite()
            && self.z.is_all_finite()
            && self.phi.is_all_finite()
    }
}

/// Uniformly time-sampled sequence of states over `[0, T]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dt: f64,
    states: Vec<State>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<State>) -> Result<Trajectory> {
        if !(dt > 0.0) {
            return Err(SimError::InvalidInput("trajectory dt must be positive".into()));
        }
        if states.is_empty() {
            return Err(SimError::InvalidInput("trajectory needs at least one state".into()));
        }
        for (n, s) in states.iter().enumerate() {
            let expect = n as f64 * dt;
            if (s.time - expect).abs() > 1e-9 * dt.max(1.0) {
                return Err(SimError::InvalidInput(format!(
                    "state {n} at time {} breaks the uniform lattice (expected {expect})",
                    s.time
                )));
            }
        }
        Ok(Trajectory { dt, states })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().unwrap()
    }

    /// Velocity slices of this trajectory, for use as a frozen transport field.
    pub fn velocity_path(&self) -> VelocityPath {
        VelocityPath {
            dt: self.dt,
            slices: self.states.iter().map(|s| s.u.clone()).collect(),
        }
    }
}

/// Time-lattice of velocity fields with linear interpolation in time.
#[derive(Debug, Clone)]
pub struct VelocityPath {
    dt: f64,
    slices: Vec<VectorField>,
}

impl VelocityPath {
    pub fn new(dt: f64, slices: Vec<VectorField>) -> Result<VelocityPath> {
        if !(dt > 0.0) || slices.is_empty() {
            return Err(SimError::InvalidInput(
                "velocity path needs dt > 0 and at least one slice".into(),
            ));
        }
        Ok(VelocityPath { dt, slices })
    }

    /// Constant-in-time path.
    pub fn stationary(v: VectorField, dt: f64) -> VelocityPath {
        VelocityPath {
            dt,
            slices: vec![v.clone(), v],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn slices(&self) -> &[VectorField] {
        &self.slices
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.slices[0].grid()
    }

    pub fn t_max(&self) -> f64 {
        (self.slices.len() - 1) as f64 * self.dt
    }

    /// Bracketing slice indices and interpolation weight for time `t`
    /// (clamped to the stored range).
    #[inline]
    pub fn bracket(&self, t: f64) -> (usize, usize, f64) {
        if self.slices.len() == 1 {
            return (0, 0, 0.0);
        }
        let s = (t / self.dt).clamp(0.0, (self.slices.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.slices.len() - 2);
        (i, i + 1, s - i as f64)
    }

    /// Space-time sample of the velocity.
    pub fn sample(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let (i0, i1, w) = self.bracket(t);
        let v0 = self.slices[i0].interp(x);
        if i0 == i1 || w == 0.0 {
            return v0;
        }
        let v1 = self.slices[i1].interp(x);
        [
            (1.0 - w) * v0[0] + w * v1[0],
            (1.0 - w) * v0[1] + w * v1[1],
            (1.0 - w) * v0[2] + w * v1[2],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().fold(0.0f64, |m, s| m.max(s.max_abs()))
    }
}
