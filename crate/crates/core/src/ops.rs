//! Discrete differential operators on nodal fields.
//!
//! First derivatives are centered second-order in the interior with
//! one-sided second-order closures at the boundary nodes. The Laplacian is
//! the compact nearest-neighbor stencil with ghost nodes supplied by the
//! boundary condition (odd reflection for homogeneous Dirichlet, mirror for
//! homogeneous Neumann). Gradient and divergence use the same stencil
//! family, so summation by parts holds exactly for interior-supported
//! fields; the composition `div(grad f)` is the wide second-difference and
//! agrees with `laplacian(f)` to O(h^2), not to round-off.

use crate::grid::{Field, Grid, ScalarBc, VectorField};

/// First derivative of `data` along `axis` at node `c`.
#[inline]
fn d1(grid: &Grid, data: &[f64], c: [usize; 3], axis: usize) -> f64 {
    let n = grid.shape()[axis];
    let h = grid.spacing()[axis];
    let i = c[axis];
    let at = |ii: usize| {
        let mut cc = c;
        cc[axis] = ii;
        data[grid.idx(cc[0], cc[1], cc[2])]
    };
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if i + 1 == n {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

/// Second derivative along `axis`, ghost values by `bc` at the boundary.
#[inline]
fn d2(grid: &Grid, data: &[f64], c: [usize; 3], axis: usize, bc: ScalarBc) -> f64 {
    let n = grid.shape()[axis];
    let h2 = grid.spacing()[axis] * grid.spacing()[axis];
    let i = c[axis];
    let at = |ii: usize| {
        let mut cc = c;
        cc[axis] = ii;
        data[grid.idx(cc[0], cc[1], cc[2])]
    };
    let (lo, hi) = if i == 0 {
        let ghost = match bc {
            ScalarBc::DirichletZero => -at(1),
            ScalarBc::NeumannZero => at(1),
        };
        (ghost, at(1))
    } else if i + 1 == n {
        let ghost = match bc {
            ScalarBc::DirichletZero => -at(n - 2),
            ScalarBc::NeumannZero => at(n - 2),
        };
        (at(n - 2), ghost)
    } else {
        (at(i - 1), at(i + 1))
    };
    (lo - 2.0 * at(i) + hi) / h2
}

/// Gradient of a scalar field.
pub fn gradient(f: &Field) -> VectorField {
    let grid = f.grid().clone();
    let mut comps = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut out = Field::zeros(&grid);
        grid.for_each_node(|c, idx| {
            out.data_mut()[idx] = d1(&grid, f.data(), c, axis);
        });
        comps.push(out);
    }
    VectorField::from_comps(comps).expect("component count matches dim")
}

/// Divergence of a vector field, same stencil family as `gradient`.
pub fn divergence(v: &VectorField) -> Field {
    let grid = v.grid().clone();
    let mut out = Field::zeros(&grid);
    for axis in 0..grid.dim() {
        let comp = v.comp(axis);
        grid.for_each_node(|c, idx| {
            out.data_mut()[idx] += d1(&grid, comp.data(), c, axis);
        });
    }
    out
}

/// Compact (2d+1)-point Laplacian with ghost values by `bc`.
pub fn laplacian(f: &Field, bc: ScalarBc) -> Field {
    let grid = f.grid().clone();
    let mut out = Field::zeros(&grid);
    for axis in 0..grid.dim() {
        grid.for_each_node(|c, idx| {
            out.data_mut()[idx] += d2(&grid, f.data(), c, axis, bc);
        });
    }
    out
}

/// Jacobian of a vector field: `jac[a].comp(b)` holds `d u_a / d x_b`.
pub fn jacobian(v: &VectorField) -> Vec<VectorField> {
    v.comps().iter().map(gradient).collect()
}
