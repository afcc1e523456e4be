//! Uniform P1 simplicial meshes of the unit square and cube.
//!
//! Vertices are numbered lexicographically, `i + (m+1) j + (m+1)^2 k`, and
//! every cell is split along its main diagonal: two triangles per square,
//! six Kuhn tetrahedra per cube. The construction is fully deterministic.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Identity of a mesh, carried by every field living on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MeshId {
    pub dim: usize,
    pub res: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    id: MeshId,
    coords: Vec<f64>,
    simplices: Vec<usize>,
    volumes: Vec<f64>,
    shape_grads: Vec<f64>,
    boundary: Vec<bool>,
    lumped_mass: Vec<f64>,
}

/// Nodal field on a [`Mesh`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    mesh: MeshId,
    values: Vec<f64>,
}

/// Per-simplex constant gradients, `dim` components per simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTable {
    dim: usize,
    data: Vec<f64>,
}

impl GradientTable {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, simplex: usize) -> &[f64] {
        &self.data[simplex * self.dim..(simplex + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Squared Euclidean norm of the gradient on `simplex`.
    pub fn norm_sqr(&self, simplex: usize) -> f64 {
        self.get(simplex).iter().map(|g| g * g).sum()
    }
}

/// Build the uniform mesh of `(0,1)^dim` with `res` cells per side.
pub fn build_mesh(dim: usize, res: usize) -> Result<Mesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::config(format!("dimension must be 2 or 3, got {dim}")));
    }
    if res == 0 {
        return Err(Error::config("resolution must be at least 1"));
    }
    let side = res + 1;
    let n_vertices = side.pow(dim as u32);
    let h = 1.0 / res as f64;

    let mut coords = Vec::with_capacity(n_vertices * dim);
    let mut boundary = Vec::with_capacity(n_vertices);
    for v in 0..n_vertices {
        let mut rest = v;
        let mut on_boundary = false;
        for _ in 0..dim {
            let i = rest % side;
            rest /= side;
            coords.push(i as f64 * h);
            on_boundary |= i == 0 || i == res;
        }
        boundary.push(on_boundary);
    }

    let vertex = |idx: &[usize]| -> usize {
        idx.iter()
            .rev()
            .fold(0, |acc, &i| acc * side + i)
    };

    let mut simplices = Vec::new();
    let n_cells = res.pow(dim as u32);
    for cell in 0..n_cells {
        let mut base = [0usize; 3];
        let mut rest = cell;
        for b in base.iter_mut().take(dim) {
            *b = rest % res;
            rest /= res;
        }
        if dim == 2 {
            let [i, j, _] = base;
            let v00 = vertex(&[i, j]);
            let v10 = vertex(&[i + 1, j]);
            let v01 = vertex(&[i, j + 1]);
            let v11 = vertex(&[i + 1, j + 1]);
            simplices.extend_from_slice(&[v00, v10, v11, v00, v11, v01]);
        } else {
            const PERMS: [[usize; 3]; 6] = [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            for perm in PERMS {
                let mut idx = base;
                simplices.push(vertex(&idx));
                for &axis in &perm {
                    idx[axis] += 1;
                    simplices.push(vertex(&idx));
                }
            }
        }
    }

    let nv = dim + 1;
    let n_simplices = simplices.len() / nv;
    let mut volumes = Vec::with_capacity(n_simplices);
    let mut shape_grads = Vec::with_capacity(n_simplices * nv * dim);
    let mut lumped_mass = vec![0.0; n_vertices];
    for s in 0..n_simplices {
        let verts = &simplices[s * nv..(s + 1) * nv];
        let x0 = &coords[verts[0] * dim..(verts[0] + 1) * dim];
        // Edge matrix with columns x_k - x_0.
        let mut jac = [[0.0; 3]; 3];
        for k in 1..nv {
            let xk = &coords[verts[k] * dim..(verts[k] + 1) * dim];
            for r in 0..dim {
                jac[r][k - 1] = xk[r] - x0[r];
            }
        }
        let (det, inv) = invert(&jac, dim);
        let volume = det.abs() / if dim == 2 { 2.0 } else { 6.0 };
        volumes.push(volume);

        // Barycentric gradients: rows of the inverse, and minus their sum.
        let mut grad0 = [0.0; 3];
        for row in inv.iter().take(dim) {
            for (g0, r) in grad0.iter_mut().zip(row.iter()).take(dim) {
                *g0 -= r;
            }
        }
        shape_grads.extend_from_slice(&grad0[..dim]);
        for row in inv.iter().take(dim) {
            shape_grads.extend_from_slice(&row[..dim]);
        }
        for &v in verts {
            lumped_mass[v] += volume / nv as f64;
        }
    }

    Ok(Mesh {
        id: MeshId { dim, res },
        coords,
        simplices,
        volumes,
        shape_grads,
        boundary,
        lumped_mass,
    })
}

/// Determinant and inverse of the leading `dim x dim` block.
fn invert(a: &[[f64; 3]; 3], dim: usize) -> (f64, [[f64; 3]; 3]) {
    let mut inv = [[0.0; 3]; 3];
    if dim == 2 {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        inv[0][0] = a[1][1] / det;
        inv[0][1] = -a[0][1] / det;
        inv[1][0] = -a[1][0] / det;
        inv[1][1] = a[0][0] / det;
        return (det, inv);
    }
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    let det = a[0][0] * cof(1, 2, 1, 2) - a[0][1] * cof(1, 2, 0, 2) + a[0][2] * cof(1, 2, 0, 1);
    inv[0][0] = cof(1, 2, 1, 2) / det;
    inv[0][1] = -cof(0, 2, 1, 2) / det;
    inv[0][2] = cof(0, 1, 1, 2) / det;
    inv[1][0] = -cof(1, 2, 0, 2) / det;
    inv[1][1] = cof(0, 2, 0, 2) / det;
    inv[1][2] = -cof(0, 1, 0, 2) / det;
    inv[2][0] = cof(1, 2, 0, 1) / det;
    inv[2][1] = -cof(0, 2, 0, 1) / det;
    inv[2][2] = cof(0, 1, 0, 1) / det;
    (det, inv)
}

impl Mesh {
    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.id.dim
    }

    pub fn res(&self) -> usize {
        self.id.res
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_simplices(&self) -> usize {
        self.volumes.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim()..(v + 1) * self.dim()]
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        let nv = self.dim() + 1;
        &self.simplices[s * nv..(s + 1) * nv]
    }

    pub fn volume(&self, s: usize) -> f64 {
        self.volumes[s]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Gradient of the `local`-th barycentric coordinate on simplex `s`.
    pub fn shape_gradient(&self, s: usize, local: usize) -> &[f64] {
        let dim = self.dim();
        let offset = (s * (dim + 1) + local) * dim;
        &self.shape_grads[offset..offset + dim]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Quadrature weight of each vertex: the incident simplex volumes
    /// shared equally among their vertices.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction {
            mesh: self.id,
            values: vec![0.0; self.n_vertices()],
        }
    }

    /// Nodal interpolant of `f`, boundary values included as evaluated.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> GridFunction {
        let values = (0..self.n_vertices()).map(|v| f(self.vertex(v))).collect();
        GridFunction {
            mesh: self.id,
            values,
        }
    }

    /// Wrap raw nodal values, checking the vertex count.
    pub fn field(&self, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                found: values.len(),
            });
        }
        Ok(GridFunction {
            mesh: self.id,
            values,
        })
    }

    pub(crate) fn check(&self, u: &GridFunction) -> Result<()> {
        if u.values.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                found: u.values.len(),
            });
        }
        if u.mesh != self.id {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// Nodal quadrature: `sum_s |s| * mean(values on s)`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                found: values.len(),
            });
        }
        Ok(self.integrate_unchecked(values))
    }

    pub(crate) fn integrate_unchecked(&self, values: &[f64]) -> f64 {
        self.lumped_mass
            .iter()
            .zip(values)
            .map(|(m, v)| m * v)
            .sum()
    }

    pub(crate) fn integrate_with(&self, values: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        self.lumped_mass
            .iter()
            .zip(values)
            .map(|(m, &v)| m * g(v))
            .sum()
    }

    pub fn gradient_table(&self, u: &GridFunction) -> Result<GradientTable> {
        self.check(u)?;
        Ok(self.gradients_of(&u.values))
    }

    pub(crate) fn gradients_of(&self, values: &[f64]) -> GradientTable {
        let dim = self.dim();
        let mut data = vec![0.0; self.n_simplices() * dim];
        for (s, g) in data.chunks_exact_mut(dim).enumerate() {
            for (local, &v) in self.simplex(s).iter().enumerate() {
                let uv = values[v];
                if uv == 0.0 {
                    continue;
                }
                for (gc, sg) in g.iter_mut().zip(self.shape_gradient(s, local)) {
                    *gc += uv * sg;
                }
            }
        }
        GradientTable { dim, data }
    }

    /// `sum_s |s| |grad u|^p` over the P1 gradients of `values`.
    pub(crate) fn gradient_power_integral(&self, values: &[f64], p: f64) -> f64 {
        let table = self.gradients_of(values);
        self.volumes
            .iter()
            .enumerate()
            .map(|(s, vol)| vol * norm_pow(table.norm_sqr(s), p))
            .sum()
    }

    pub fn apply_dirichlet(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u)?;
        let mut out = u.clone();
        for (val, &b) in out.values.iter_mut().zip(&self.boundary) {
            if b {
                *val = 0.0;
            }
        }
        Ok(out)
    }

    /// Plain-text dump: `v x y [z] flag` per vertex, then `s i0 i1 i2 [i3]`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in 0..self.n_vertices() {
            write!(out, "v")?;
            for x in self.vertex(v) {
                write!(out, " {x}")?;
            }
            writeln!(out, " {}", u8::from(self.boundary[v]))?;
        }
        for s in 0..self.n_simplices() {
            write!(out, "s")?;
            for i in self.simplex(s) {
                write!(out, " {i}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `|g|^p` from the squared norm, exact in the common case `p = 2`.
pub(crate) fn norm_pow(norm_sqr: f64, p: f64) -> f64 {
    if p == 2.0 {
        norm_sqr
    } else {
        norm_sqr.powf(0.5 * p)
    }
}

impl GridFunction {
    pub fn mesh_id(&self) -> MeshId {
        self.mesh
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, t: f64) -> GridFunction {
        self.map(|v| t * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            mesh: self.mesh,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &GridFunction) -> GridFunction {
        debug_assert_eq!(self.mesh, other.mesh);
        GridFunction {
            mesh: self.mesh,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }

    /// Euclidean pairing of nodal vectors (co-vector against vector).
    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_2d() {
        let mesh = build_mesh(2, 2).unwrap();
        assert_eq!(mesh.n_vertices(), 9);
        assert_eq!(mesh.n_simplices(), 8);
        let total: f64 = mesh.volumes().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(mesh.boundary_flags().iter().filter(|&&b| !b).count(), 1);
    }

    #[test]
    fn single_cell_is_all_boundary() {
        let mesh = build_mesh(2, 1).unwrap();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_simplices(), 2);
        assert!(mesh.boundary_flags().iter().all(|&b| b));
    }

    #[test]
    fn counts_3d() {
        let mesh = build_mesh(3, 2).unwrap();
        assert_eq!(mesh.n_vertices(), 27);
        assert_eq!(mesh.n_simplices(), 48);
        let total: f64 = mesh.volumes().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(build_mesh(1, 4), Err(Error::Config(_))));
        assert!(matches!(build_mesh(4, 4), Err(Error::Config(_))));
        assert!(matches!(build_mesh(2, 0), Err(Error::Config(_))));
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        for dim in [2, 3] {
            let mesh = build_mesh(dim, 5).unwrap();
            for v in 0..mesh.n_vertices() {
                let on_face = mesh
                    .vertex(v)
                    .iter()
                    .any(|&x| x.abs() < 1e-14 || (x - 1.0).abs() < 1e-14);
                assert_eq!(on_face, mesh.is_boundary(v), "vertex {v}");
            }
        }
    }

    #[test]
    fn shape_gradients_sum_to_zero() {
        for dim in [2, 3] {
            let mesh = build_mesh(dim, 3).unwrap();
            for s in 0..mesh.n_simplices() {
                for c in 0..dim {
                    let sum: f64 = (0..=dim).map(|l| mesh.shape_gradient(s, l)[c]).sum();
                    assert!(sum.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrate_constants_and_linear() {
        let mesh = build_mesh(2, 4).unwrap();
        let one = mesh.interpolate(|_| 1.0);
        assert!((mesh.integrate(one.values()).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(mesh.integrate(mesh.zeros().values()).unwrap(), 0.0);
        let x = mesh.interpolate(|x| x[0]);
        assert!((mesh.integrate(x.values()).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(
            mesh.integrate(&[1.0; 3]),
            Err(Error::Dimension { expected: 25, found: 3 })
        ));
    }

    #[test]
    fn gradients_of_linear_fields() {
        let mesh = build_mesh(2, 4).unwrap();
        let zero = mesh.gradient_table(&mesh.zeros()).unwrap();
        assert!(zero.iter().all(|g| g.iter().all(|&c| c == 0.0)));
        let x = mesh.interpolate(|x| x[0]);
        let table = mesh.gradient_table(&x).unwrap();
        for g in table.iter() {
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_table_rejects_foreign_fields() {
        let a = build_mesh(2, 4).unwrap();
        let b = build_mesh(2, 3).unwrap();
        assert!(a.gradient_table(&b.zeros()).is_err());
    }

    #[test]
    fn dirichlet_is_idempotent() {
        let mesh = build_mesh(3, 3).unwrap();
        let one = mesh.interpolate(|_| 1.0);
        let once = mesh.apply_dirichlet(&one).unwrap();
        for v in 0..mesh.n_vertices() {
            let expect = if mesh.is_boundary(v) { 0.0 } else { 1.0 };
            assert_eq!(once.values()[v], expect);
        }
        assert_eq!(mesh.apply_dirichlet(&once).unwrap(), once);
    }

    #[test]
    fn dump_format() {
        let mesh = build_mesh(2, 1).unwrap();
        let mut buf = Vec::new();
        mesh.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "v 0 0 1");
        assert_eq!(lines[3], "v 1 1 1");
        assert_eq!(lines[4], "s 0 1 3");
    }
}
