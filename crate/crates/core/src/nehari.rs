//! Sign-restricted Nehari-type constraints.
//!
//! For the positive part (`Part::Plus`) and the negative part (`Part::Minus`)
//! of a nodal field the constraint functionals are
//!
//! ```text
//! phi_1(u) = int |grad u_+|^p - int |u_+|^p* - lambda int f(u) u_+
//! phi_2(u) = int |grad u_-|^p - int |u_-|^p* + lambda int f(u) u_-
//! ```
//!
//! so that `phi_1(u) = <Phi'(u), u_+>` for `u >= 0` and
//! `phi_2(u) = -<Phi'(u), u_->` for `u <= 0`. Positive and negative parts are
//! taken nodally and interpolated, hence `phi_1` only sees vertices where
//! `u > 0` and `phi_2` only those where `u < 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{flux_weight, signed_pow, zero_boundary, Nonlinearity, RunParameters};
use crate::mesh::{GridFunction, Mesh};

/// Which sign part a constraint acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Plus,
    Minus,
}

impl Part {
    fn sign(self) -> f64 {
        match self {
            Part::Plus => 1.0,
            Part::Minus => -1.0,
        }
    }

    /// Nodal value of this part, `max(+-u, 0)`.
    #[inline]
    pub fn of(self, u: f64) -> f64 {
        (self.sign() * u).max(0.0)
    }
}

/// The three sign-restricted sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KIndex {
    /// `u >= 0` on the positive-part constraint.
    K1,
    /// `u <= 0` on the negative-part constraint.
    K2,
    /// Both constraints, no sign restriction.
    K3,
}

impl KIndex {
    pub const ALL: [KIndex; 3] = [KIndex::K1, KIndex::K2, KIndex::K3];

    /// Constraints active on this set.
    pub fn parts(self) -> &'static [Part] {
        match self {
            KIndex::K1 => &[Part::Plus],
            KIndex::K2 => &[Part::Minus],
            KIndex::K3 => &[Part::Plus, Part::Minus],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KIndex::K1 => "K1",
            KIndex::K2 => "K2",
            KIndex::K3 => "K3",
        }
    }
}

/// The three integrals making up one constraint functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintTerms {
    /// `int |grad u_+-|^p`
    pub gradient: f64,
    /// `int |u_+-|^p*`
    pub critical: f64,
    /// `int f(u) (+-u_+-)`, i.e. `int f(u) u` restricted to the part.
    pub source: f64,
    pub lambda: f64,
}

impl ConstraintTerms {
    pub fn value(&self) -> f64 {
        self.gradient - self.critical - self.lambda * self.source
    }

    /// `|phi| / int |grad u_+-|^p`; infinite for a vanishing part.
    pub fn relative_residual(&self) -> f64 {
        if self.gradient > 0.0 {
            self.value().abs() / self.gradient
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberingCoefficients {
    /// `int |grad w|^p`
    pub a: f64,
    /// `int |w|^p*`
    pub b: f64,
    /// `int |w|^q`
    pub c: f64,
}

/// Root of a fibering map together with the a priori bracket
/// `t_1 = (A / (c3 lambda C))^{1/(q-p)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberRoot {
    pub t: f64,
    pub bracket: f64,
    /// Value of the fibering map at `t`.
    pub residual: f64,
}

pub fn constraint_terms(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    part: Part,
) -> Result<ConstraintTerms> {
    mesh.check(u)?;
    Ok(constraint_terms_unchecked(mesh, nl, params, u.values(), part))
}

pub(crate) fn constraint_terms_unchecked(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    values: &[f64],
    part: Part,
) -> ConstraintTerms {
    let sign = part.sign();
    let part_values: Vec<f64> = values.iter().map(|&v| part.of(v)).collect();
    let ps = params.p_star();
    let mut critical = 0.0;
    let mut source = 0.0;
    for ((&m, &v), &w) in mesh.lumped_mass().iter().zip(values).zip(&part_values) {
        if w > 0.0 {
            critical += m * w.powf(ps);
            source += m * nl.f(v) * sign * w;
        }
    }
    ConstraintTerms {
        gradient: mesh.gradient_power_integral(&part_values, params.p()),
        critical,
        source,
        lambda: params.lambda(),
    }
}

/// `phi_1` (`Part::Plus`) or `phi_2` (`Part::Minus`) at `u`.
pub fn constraint_phi(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    part: Part,
) -> Result<f64> {
    Ok(constraint_terms(mesh, nl, params, u, part)?.value())
}

pub fn fibering_coefficients(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    w: &GridFunction,
) -> Result<FiberingCoefficients> {
    mesh.check(w)?;
    if w.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("fibering coefficients of the zero field".into()));
    }
    let values = w.values();
    let (ps, q) = (params.p_star(), nl.q);
    Ok(FiberingCoefficients {
        a: mesh.gradient_power_integral(values, params.p()),
        b: mesh.integrate_with(values, |v| v.abs().powf(ps)),
        c: mesh.integrate_with(values, |v| v.abs().powf(q)),
    })
}

/// `t_1 = (A / (c3 lambda C))^{1/(q-p)}`: beyond it the fibering map of a
/// field satisfying the growth bounds is negative.
pub fn fibering_bracket(coeffs: &FiberingCoefficients, nl: &Nonlinearity, params: &RunParameters) -> f64 {
    (coeffs.a / (nl.constants.c3 * params.lambda() * coeffs.c)).powf(1.0 / (nl.q - params.p()))
}

const MAX_DOUBLINGS: usize = 60;

/// Smallest positive zero of a fibering map, located on the dyadic grid
/// `start * 2^k`.
///
/// The map must be positive near 0 and negative for large arguments. From
/// `start` the argument is doubled until the map is negative, then halved
/// until it is positive; the sign change inside that dyadic cell is bisected
/// to full precision. Maps with a single positive zero (every homogeneous
/// fibering map) get that zero; otherwise the zero returned is the smallest
/// one in the cell below the first negative grid point.
pub fn smallest_positive_root(phi: impl Fn(f64) -> f64, start: f64) -> Result<f64> {
    if !(start > 0.0) || !start.is_finite() {
        return Err(Error::Degenerate(format!("invalid fibering start t = {start}")));
    }
    let mut hi = start;
    let mut doublings = 0;
    while !(phi(hi) < 0.0) {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoRoot {
                start,
                doublings,
            });
        }
        hi *= 2.0;
        doublings += 1;
    }
    let mut lo = hi;
    loop {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::Degenerate("fibering map is not positive near zero".into()));
        }
        if phi(lo) > 0.0 {
            break;
        }
    }
    // phi(lo) > 0 and every grid point between lo and hi is nonpositive.
    let mut hi = 2.0 * lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = phi(mid);
        if value == 0.0 {
            return Ok(mid);
        }
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if phi(lo).abs() <= phi(hi).abs() { lo } else { hi })
}

/// Root of the model fibering map `A t^p - B t^p* - lambda C t^q`.
pub fn scale_coefficients(
    coeffs: &FiberingCoefficients,
    nl: &Nonlinearity,
    params: &RunParameters,
) -> Result<FiberRoot> {
    let (p, ps, q, lambda) = (params.p(), params.p_star(), nl.q, params.lambda());
    let phi = |t: f64| coeffs.a * t.powf(p) - coeffs.b * t.powf(ps) - lambda * coeffs.c * t.powf(q);
    let bracket = fibering_bracket(coeffs, nl, params);
    let t = smallest_positive_root(phi, bracket)?;
    Ok(FiberRoot {
        t,
        bracket,
        residual: phi(t),
    })
}

fn sign_definite(w: &GridFunction, part: Part) -> Result<()> {
    let sign = part.sign();
    if w.values().iter().any(|&v| sign * v < 0.0) {
        return Err(Error::Sign(format!(
            "field must be {} for this part",
            if part == Part::Plus { "nonnegative" } else { "nonpositive" }
        )));
    }
    if w.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("cannot scale the zero field".into()));
    }
    Ok(())
}

/// Scale a sign-definite field onto the constraint of `part`.
pub fn scale_to_manifold(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    w: &GridFunction,
    part: Part,
) -> Result<FiberRoot> {
    mesh.check(w)?;
    sign_definite(w, part)?;
    let coeffs = fibering_coefficients(mesh, nl, params, w)?;
    if coeffs.a == 0.0 {
        return Err(Error::Degenerate("field has no interior support".into()));
    }
    let (p, ps, lambda) = (params.p(), params.p_star(), params.lambda());
    // Only the nonlinear source needs nodal re-evaluation along the ray.
    let support: Vec<(f64, f64)> = mesh
        .lumped_mass()
        .iter()
        .zip(w.values())
        .filter(|(_, &v)| v != 0.0)
        .map(|(&m, &v)| (m, v))
        .collect();
    let phi = |t: f64| {
        let source: f64 = support
            .iter()
            .map(|&(m, v)| {
                let tv = t * v;
                m * nl.f(tv) * tv
            })
            .sum();
        coeffs.a * t.powf(p) - coeffs.b * t.powf(ps) - lambda * source
    };
    let bracket = fibering_bracket(&coeffs, nl, params);
    let t = smallest_positive_root(phi, bracket)?;
    Ok(FiberRoot {
        t,
        bracket,
        residual: phi(t),
    })
}

/// Result of scaling two disjointly supported bumps onto both constraints.
#[derive(Clone, Debug)]
pub struct PairProjection {
    pub t_plus: f64,
    pub t_minus: f64,
    pub field: GridFunction,
}

pub fn project_pair_to_m3(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    w_plus: &GridFunction,
    w_minus: &GridFunction,
) -> Result<PairProjection> {
    mesh.check(w_plus)?;
    mesh.check(w_minus)?;
    if w_plus.values().iter().zip(w_minus.values()).any(|(a, b)| a * b != 0.0) {
        return Err(Error::Precondition("the two bumps have overlapping supports".into()));
    }
    let plus = scale_to_manifold(mesh, nl, params, w_plus, Part::Plus)?;
    let minus = scale_to_manifold(mesh, nl, params, w_minus, Part::Minus)?;
    let field = w_plus.scaled(plus.t).add_scaled(minus.t, w_minus);
    Ok(PairProjection {
        t_plus: plus.t,
        t_minus: minus.t,
        field,
    })
}

/// Nodal first variation of `phi_1` / `phi_2`, zero at boundary vertices.
///
/// The part map `u -> u_+-` is differentiated with the a.e. convention: its
/// derivative at a vertex is the indicator of the part's open support.
pub fn constraint_gradient(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    part: Part,
) -> Result<GridFunction> {
    mesh.check(u)?;
    Ok(constraint_gradient_unchecked(mesh, nl, params, u, part))
}

pub(crate) fn constraint_gradient_unchecked(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    part: Part,
) -> GridFunction {
    let sign = part.sign();
    let (p, ps, lambda) = (params.p(), params.p_star(), params.lambda());
    let values = u.values();
    let part_values: Vec<f64> = values.iter().map(|&v| part.of(v)).collect();

    // p int |grad w|^{p-2} grad w . grad phi_i for w the part.
    let mut flux = vec![0.0; values.len()];
    let table = mesh.gradients_of(&part_values);
    for s in 0..mesh.n_simplices() {
        let g = table.get(s);
        let weight = p * mesh.volume(s) * flux_weight(table.norm_sqr(s), p, params.eps());
        if weight == 0.0 {
            continue;
        }
        for (local, &v) in mesh.simplex(s).iter().enumerate() {
            if part_values[v] > 0.0 {
                let dot: f64 = g.iter().zip(mesh.shape_gradient(s, local)).map(|(a, b)| a * b).sum();
                flux[v] += weight * dot;
            }
        }
    }

    let mut grad = mesh.zeros();
    let out = grad.values_mut();
    for (i, &w) in part_values.iter().enumerate() {
        if w > 0.0 {
            let m = mesh.lumped_mass()[i];
            let val = nl.eval(values[i]);
            out[i] = sign * (flux[i] - m * (ps * signed_pow(w, ps - 1.0) + lambda * sign * val.f))
                - lambda * sign * m * val.f_u * w;
        }
    }
    zero_boundary(mesh, out);
    grad
}

/// Projection of `v` onto the tangent space of the constraint set `k` at
/// `u`, along `span{u_+}` (K1), `span{u_-}` (K2) or `span{u_+, u_-}` (K3).
pub fn tangent_project(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    v: &GridFunction,
    k: KIndex,
) -> Result<GridFunction> {
    mesh.check(u)?;
    mesh.check(v)?;
    let mut out = v.clone();
    for &part in k.parts() {
        let normal = constraint_gradient_unchecked(mesh, nl, params, u, part);
        let direction = u.map(|x| part.of(x));
        let pairing = normal.dot(&direction);
        if !(pairing.abs() > 1e-14 * normal.norm() * direction.norm()) {
            return Err(Error::DegenerateConstraint { pairing });
        }
        // Cross pairings vanish, so each part is removed independently.
        let alpha = normal.dot(v) / pairing;
        out = out.add_scaled(-alpha, &direction);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::Family;
    use crate::mesh::build_mesh;

    fn setup() -> (Mesh, Nonlinearity, RunParameters) {
        (
            build_mesh(2, 6).unwrap(),
            Nonlinearity::new(Family::Signed, 4.0, 4.0).unwrap(),
            RunParameters::new(2, 1.5, 3.0, 1e-8).unwrap(),
        )
    }

    fn bump(mesh: &Mesh) -> GridFunction {
        mesh.apply_dirichlet(&mesh.interpolate(|x| x.iter().map(|c| (std::f64::consts::PI * c).sin()).product()))
            .unwrap()
    }

    #[test]
    fn zero_and_wrong_sign_give_zero_constraint() {
        let (mesh, nl, params) = setup();
        assert_eq!(constraint_phi(&mesh, &nl, &params, &mesh.zeros(), Part::Plus).unwrap(), 0.0);
        let neg = bump(&mesh).scaled(-1.0);
        assert_eq!(constraint_phi(&mesh, &nl, &params, &neg, Part::Plus).unwrap(), 0.0);
        let g = constraint_gradient(&mesh, &nl, &params, &neg, Part::Plus).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_and_sign_errors() {
        let (mesh, nl, params) = setup();
        assert!(matches!(
            fibering_coefficients(&mesh, &nl, &params, &mesh.zeros()),
            Err(Error::Degenerate(_))
        ));
        let w = bump(&mesh);
        assert!(matches!(
            scale_to_manifold(&mesh, &nl, &params, &w, Part::Minus),
            Err(Error::Sign(_))
        ));
        assert!(matches!(
            scale_to_manifold(&mesh, &nl, &params, &mesh.zeros(), Part::Plus),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            project_pair_to_m3(&mesh, &nl, &params, &w, &w.scaled(-1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bracket_formula() {
        let nl = Nonlinearity::new(Family::Signed, 4.0, 4.0)
            .unwrap()
            .with_constants(crate::functional::GrowthConstants {
                c1: 1.0 / 3.0,
                c3: 1.0,
                c4: 1.0,
                k2: 4.0,
            });
        let params = RunParameters::new(3, 2.0, 16.0, 0.0).unwrap();
        let coeffs = FiberingCoefficients { a: 1.0, b: 1.0, c: 1.0 };
        assert!((fibering_bracket(&coeffs, &nl, &params) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn no_root_when_map_never_turns_negative() {
        let err = smallest_positive_root(|t| t, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoRoot { doublings: 60, .. }));
    }

    #[test]
    fn scaled_field_lands_on_constraint() {
        let (mesh, nl, params) = setup();
        let w = bump(&mesh);
        let root = scale_to_manifold(&mesh, &nl, &params, &w, Part::Plus).unwrap();
        assert!(root.t <= root.bracket);
        let terms = constraint_terms(&mesh, &nl, &params, &w.scaled(root.t), Part::Plus).unwrap();
        assert!(terms.relative_residual() <= 1e-10, "{terms:?}");
    }

    #[test]
    fn tangent_projection_removes_normal_direction() {
        let (mesh, nl, params) = setup();
        let w = bump(&mesh);
        let t = scale_to_manifold(&mesh, &nl, &params, &w, Part::Plus).unwrap().t;
        let u = w.scaled(t);
        let projected = tangent_project(&mesh, &nl, &params, &u, &u, KIndex::K1).unwrap();
        assert!(projected.max_abs() < 1e-12 * u.max_abs());
    }
}
