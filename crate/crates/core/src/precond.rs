//! Discrete Dirichlet Laplacian used as the descent metric.
//!
//! The P1 stiffness matrix on interior vertices is factored once with a
//! banded Cholesky decomposition; lexicographic numbering keeps the band at
//! `(m-1)^{N-1} + ...` so the factorization stays cheap at desk scale.

use crate::error::{Error, Result};
use crate::functional::{accumulate_flux, zero_boundary};
use crate::mesh::{GridFunction, Mesh};

#[derive(Clone, Debug)]
pub struct LaplacePreconditioner {
    /// Global vertex index of each interior unknown.
    interior: Vec<usize>,
    bandwidth: usize,
    /// Row-major band of the Cholesky factor, `bandwidth + 1` entries per row.
    factor: Vec<f64>,
}

impl LaplacePreconditioner {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let n_vertices = mesh.n_vertices();
        let mut local = vec![usize::MAX; n_vertices];
        let interior: Vec<usize> = (0..n_vertices).filter(|&v| !mesh.is_boundary(v)).collect();
        if interior.is_empty() {
            return Err(Error::config("mesh has no interior vertices"));
        }
        for (i, &v) in interior.iter().enumerate() {
            local[v] = i;
        }

        let mut bandwidth = 0;
        for s in 0..mesh.n_simplices() {
            let ids: Vec<usize> = mesh.simplex(s).iter().map(|&v| local[v]).filter(|&i| i != usize::MAX).collect();
            for &a in &ids {
                for &b in &ids {
                    bandwidth = bandwidth.max(a.abs_diff(b));
                }
            }
        }

        let n = interior.len();
        let width = bandwidth + 1;
        let mut band = vec![0.0; n * width];
        for s in 0..mesh.n_simplices() {
            let verts = mesh.simplex(s);
            for (la, &va) in verts.iter().enumerate() {
                let i = local[va];
                if i == usize::MAX {
                    continue;
                }
                for (lb, &vb) in verts.iter().enumerate() {
                    let j = local[vb];
                    if j == usize::MAX || j > i {
                        continue;
                    }
                    let dot: f64 = mesh
                        .shape_gradient(s, la)
                        .iter()
                        .zip(mesh.shape_gradient(s, lb))
                        .map(|(x, y)| x * y)
                        .sum();
                    band[i * width + j + bandwidth - i] += mesh.volume(s) * dot;
                }
            }
        }

        // In-place banded Cholesky, L stored over A.
        for i in 0..n {
            let row_start = i.saturating_sub(bandwidth);
            for j in row_start..=i {
                let k_start = row_start.max(j.saturating_sub(bandwidth));
                let mut sum = band[i * width + j + bandwidth - i];
                for k in k_start..j {
                    sum -= band[i * width + k + bandwidth - i] * band[j * width + k + bandwidth - j];
                }
                if j == i {
                    if !(sum > 0.0) {
                        return Err(Error::Degenerate("stiffness matrix is not positive definite".into()));
                    }
                    band[i * width + bandwidth] = sum.sqrt();
                } else {
                    band[i * width + j + bandwidth - i] = sum / band[j * width + bandwidth];
                }
            }
        }

        Ok(LaplacePreconditioner {
            interior,
            bandwidth,
            factor: band,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.factor[i * (self.bandwidth + 1) + j + self.bandwidth - i]
    }

    /// Solve `K x = r` for a nodal co-vector `r`; boundary entries of `r`
    /// are ignored and those of `x` are zero.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, rhs: &GridFunction) -> GridFunction {
        let n = self.interior.len();
        let bw = self.bandwidth;
        let mut y: Vec<f64> = self.interior.iter().map(|&v| rhs.values()[v]).collect();
        for i in 0..n {
            let mut sum = y[i];
            for k in i.saturating_sub(bw)..i {
                sum -= self.l(i, k) * y[k];
            }
            y[i] = sum / self.l(i, i);
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                sum -= self.l(k, i) * y[k];
            }
            y[i] = sum / self.l(i, i);
        }
        let mut out = rhs.map(|_| 0.0);
        let values = out.values_mut();
        for (&v, &x) in self.interior.iter().zip(&y) {
            values[v] = x;
        }
        out
    }

    /// Stiffness matvec `K v`, boundary rows zeroed.
    pub fn apply(&self, mesh: &Mesh, v: &GridFunction) -> GridFunction {
        let mut out = v.map(|_| 0.0);
        accumulate_flux(mesh, v.values(), 2.0, 0.0, 1.0, out.values_mut());
        zero_boundary(mesh, out.values_mut());
        out
    }

    /// `sqrt(<r, K^{-1} r>)`, the dual norm of a co-vector.
    pub fn dual_norm(&self, r: &GridFunction) -> f64 {
        r.dot(&self.solve(r)).max(0.0).sqrt()
    }

    /// `sqrt(<K v, v>)`, the discrete `H^1_0` seminorm of a field.
    pub fn energy_norm(&self, mesh: &Mesh, v: &GridFunction) -> f64 {
        self.apply(mesh, v).dot(v).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn solve_inverts_stiffness() {
        for dim in [2, 3] {
            let mesh = build_mesh(dim, 5).unwrap();
            let pre = LaplacePreconditioner::new(&mesh).unwrap();
            let v = mesh
                .apply_dirichlet(&mesh.interpolate(|x| x.iter().enumerate().map(|(i, c)| (c * (i as f64 + 1.3)).sin()).sum()))
                .unwrap();
            let kv = pre.apply(&mesh, &v);
            let back = pre.solve(&kv);
            for (a, b) in back.values().iter().zip(v.values()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn kuhn_stiffness_is_the_standard_stencil() {
        // Single interior vertex at the centre of the unit cube.
        let mesh = build_mesh(3, 2).unwrap();
        let pre = LaplacePreconditioner::new(&mesh).unwrap();
        let centre = mesh.interpolate(|x| if x.iter().all(|&c| (c - 0.5).abs() < 1e-12) { 1.0 } else { 0.0 });
        let k = pre.apply(&mesh, &centre);
        assert!((k.dot(&centre) - 3.0).abs() < 1e-12);
        assert!((pre.dual_norm(&k) - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_cell_has_nothing_to_precondition() {
        let mesh = build_mesh(2, 1).unwrap();
        assert!(LaplacePreconditioner::new(&mesh).is_err());
    }
}
