//! Energy of the critical-growth p-Laplacian problem and its first variation.
//!
//! ```text
//! Phi(u) = (1/p) int |grad u|^p - (1/p*) int |u|^p* - lambda int F(u)
//! ```
//!
//! The gradient term is integrated exactly per simplex, the two nonlinear
//! terms by nodal (lumped) quadrature. Differentiating this discrete energy
//! node by node gives [`energy_residual`].

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::mesh::{GridFunction, Mesh};

/// The two source families `f(u) = |u|^{q-2}u + g_r(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `g_r(u) = |u|^{r-2} u`; odd in `u`.
    Signed,
    /// `g_r(u) = |u_+|^{r-2} u_+`.
    Pospart,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Family::Signed),
            "pospart" => Ok(Family::Pospart),
            other => Err(Error::config(format!("unknown family `{other}`"))),
        }
    }
}

/// Growth constants bounding the source term:
///
/// ```text
/// c3 |u|_q^q <= k2 int F(u) <= int f(u) u <= c1 int f_u(u) u^2 <= c4 |u|_q^q
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    pub k2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub family: Family,
    pub q: f64,
    pub r: f64,
    pub constants: GrowthConstants,
}

/// `(f, F, f_u)` at one value of `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinValue {
    pub f: f64,
    pub big_f: f64,
    pub f_u: f64,
}

/// `sign(u) |u|^e`, zero at the origin.
pub(crate) fn signed_pow(u: f64, e: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(e).copysign(u)
    }
}

/// `(e+1)|u|^{e-1}`-style derivative with `0^{negative}` read as 0.
fn abs_pow_or_zero(u: f64, e: f64) -> f64 {
    if u == 0.0 && e < 0.0 {
        0.0
    } else {
        u.abs().powf(e)
    }
}

impl Nonlinearity {
    /// Family with the default growth constants for its exponents.
    ///
    /// For `r < q` no finite upper constant exists (small fields are
    /// dominated by the `r` term), so `c4` is `+inf`.
    pub fn new(family: Family, q: f64, r: f64) -> Result<Self> {
        if !(q > 1.0 && r > 1.0) || !q.is_finite() || !r.is_finite() {
            return Err(Error::config(format!("exponents must exceed 1 (q = {q}, r = {r})")));
        }
        if r > q {
            return Err(Error::config(format!("need r <= q, got r = {r} > q = {q}")));
        }
        let constants = if r == q {
            GrowthConstants {
                c1: 1.0 / (q - 1.0),
                c3: if family == Family::Signed { 2.0 } else { 1.0 },
                c4: 2.0,
                k2: q,
            }
        } else {
            GrowthConstants {
                c1: 1.0 / (r - 1.0),
                c3: r / q,
                c4: f64::INFINITY,
                k2: r,
            }
        };
        Ok(Nonlinearity {
            family,
            q,
            r,
            constants,
        })
    }

    pub fn with_constants(mut self, constants: GrowthConstants) -> Self {
        self.constants = constants;
        self
    }

    /// Check exponents and constants against the run's `p` and `p*`.
    pub fn validate(&self, params: &RunParameters) -> Result<()> {
        let (p, ps) = (params.p(), params.p_star());
        if !(self.q > p && self.q < ps) {
            return Err(Error::config(format!(
                "need p < q < p*, got p = {p}, q = {}, p* = {ps}",
                self.q
            )));
        }
        if self.r > self.q || self.r <= 1.0 {
            return Err(Error::config(format!("need 1 < r <= q, got r = {}", self.r)));
        }
        let c = &self.constants;
        if !(c.c1 > 0.0) {
            return Err(Error::config(format!("c1 must be positive, got {}", c.c1)));
        }
        if !(c.c3 > 0.0 && c.c3 <= c.c4) {
            return Err(Error::config(format!(
                "need 0 < c3 <= c4, got c3 = {}, c4 = {}",
                c.c3, c.c4
            )));
        }
        if !(c.k2 > p && c.k2 < ps) {
            return Err(Error::config(format!(
                "need p < k2 < p*, got k2 = {} (p = {p}, p* = {ps})",
                c.k2
            )));
        }
        Ok(())
    }

    pub fn eval(&self, u: f64) -> NonlinValue {
        let (q, r) = (self.q, self.r);
        let mut f = signed_pow(u, q - 1.0);
        let mut big_f = u.abs().powf(q) / q;
        let mut f_u = (q - 1.0) * abs_pow_or_zero(u, q - 2.0);
        match self.family {
            Family::Signed => {
                f += signed_pow(u, r - 1.0);
                big_f += u.abs().powf(r) / r;
                f_u += (r - 1.0) * abs_pow_or_zero(u, r - 2.0);
            }
            Family::Pospart => {
                if u > 0.0 {
                    f += u.powf(r - 1.0);
                    big_f += u.powf(r) / r;
                    f_u += (r - 1.0) * u.powf(r - 2.0);
                }
            }
        }
        NonlinValue { f, big_f, f_u }
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        self.eval(u).f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    dim: usize,
    p: f64,
    p_star: f64,
    lambda: f64,
    eps: f64,
}

impl RunParameters {
    pub fn new(dim: usize, p: f64, lambda: f64, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        let n = dim as f64;
        if !(p > 1.0 && p < n) {
            return Err(Error::config(format!("need 1 < p < N, got p = {p}, N = {dim}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::config(format!("eps must be nonnegative, got {eps}")));
        }
        Ok(RunParameters {
            dim,
            p,
            p_star: n * p / (n - p),
            lambda,
            eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Critical Sobolev exponent `Np / (N - p)`.
    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        RunParameters::new(self.dim, self.p, lambda, self.eps)
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        RunParameters::new(self.dim, self.p, self.lambda, eps)
    }
}

/// The three integrals the energy is assembled from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyParts {
    /// `int |grad u|^p`
    pub gradient: f64,
    /// `int |u|^p*`
    pub critical: f64,
    /// `int F(u)`
    pub source: f64,
}

impl EnergyParts {
    pub fn total(&self, params: &RunParameters) -> f64 {
        self.gradient / params.p() - self.critical / params.p_star() - params.lambda() * self.source
    }
}

fn check_inputs(mesh: &Mesh, nl: &Nonlinearity, params: &RunParameters, u: &GridFunction) -> Result<()> {
    mesh.check(u)?;
    if params.dim() != mesh.dim() {
        return Err(Error::config(format!(
            "parameters are for N = {}, mesh has N = {}",
            params.dim(),
            mesh.dim()
        )));
    }
    nl.validate(params)
}

pub fn energy_parts(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
) -> Result<EnergyParts> {
    check_inputs(mesh, nl, params, u)?;
    Ok(energy_parts_unchecked(mesh, nl, params, u.values()))
}

pub(crate) fn energy_parts_unchecked(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    values: &[f64],
) -> EnergyParts {
    let ps = params.p_star();
    EnergyParts {
        gradient: mesh.gradient_power_integral(values, params.p()),
        critical: mesh.integrate_with(values, |v| v.abs().powf(ps)),
        source: mesh.integrate_with(values, |v| nl.eval(v).big_f),
    }
}

pub fn energy(mesh: &Mesh, nl: &Nonlinearity, params: &RunParameters, u: &GridFunction) -> Result<f64> {
    Ok(energy_parts(mesh, nl, params, u)?.total(params))
}

/// `(|g|^2 + eps^2)^{(p-2)/2}`, with the degenerate `0 * inf` read as 0.
pub(crate) fn flux_weight(norm_sqr: f64, p: f64, eps: f64) -> f64 {
    if p == 2.0 {
        return 1.0;
    }
    let base = norm_sqr + eps * eps;
    if base == 0.0 {
        0.0
    } else {
        base.powf(0.5 * (p - 2.0))
    }
}

/// Nodal co-vector `<Phi'(u), phi_i>`, zero at boundary vertices.
pub fn energy_residual(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
) -> Result<GridFunction> {
    check_inputs(mesh, nl, params, u)?;
    Ok(energy_residual_unchecked(mesh, nl, params, u))
}

pub(crate) fn energy_residual_unchecked(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
) -> GridFunction {
    let values = u.values();
    let mut res = mesh.zeros();
    let out = res.values_mut();
    accumulate_flux(mesh, values, params.p(), params.eps(), 1.0, out);
    let (ps, lambda) = (params.p_star(), params.lambda());
    for (i, (&m, &v)) in mesh.lumped_mass().iter().zip(values).enumerate() {
        out[i] -= m * (signed_pow(v, ps - 1.0) + lambda * nl.f(v));
    }
    zero_boundary(mesh, out);
    res
}

/// Adds `scale * int w(|grad u|) grad u . grad phi_i` to `out`.
pub(crate) fn accumulate_flux(mesh: &Mesh, values: &[f64], p: f64, eps: f64, scale: f64, out: &mut [f64]) {
    let table = mesh.gradients_of(values);
    for s in 0..mesh.n_simplices() {
        let g = table.get(s);
        let w = scale * mesh.volume(s) * flux_weight(table.norm_sqr(s), p, eps);
        if w == 0.0 {
            continue;
        }
        for (local, &v) in mesh.simplex(s).iter().enumerate() {
            let dot: f64 = g.iter().zip(mesh.shape_gradient(s, local)).map(|(a, b)| a * b).sum();
            out[v] += w * dot;
        }
    }
}

pub(crate) fn zero_boundary(mesh: &Mesh, out: &mut [f64]) {
    for (val, &b) in out.iter_mut().zip(mesh.boundary_flags()) {
        if b {
            *val = 0.0;
        }
    }
}

/// Nodal positive and negative parts, `u = u_+ - u_-`.
pub fn plus_minus_parts(u: &GridFunction) -> (GridFunction, GridFunction) {
    (u.map(|v| v.max(0.0)), u.map(|v| (-v).max(0.0)))
}

/// Best constant of `|grad u|_p^p >= S_p |u|_{p*}^p` on `R^N`.
///
/// Closed form attained by the radial profiles `(1 + r^{p/(p-1)})^{-(N-p)/p}`.
pub fn best_sobolev_constant(p: f64, dim: usize) -> Result<f64> {
    let n = dim as f64;
    if !(p > 1.0 && p < n) {
        return Err(Error::config(format!("need 1 < p < N, got p = {p}, N = {dim}")));
    }
    let ratio = gamma(1.0 + n / 2.0) * gamma(n) / (gamma(n / p) * gamma(1.0 + n - n / p));
    let k = std::f64::consts::PI.powf(-0.5)
        * n.powf(-1.0 / p)
        * ((p - 1.0) / (n - p)).powf(1.0 - 1.0 / p)
        * ratio.powf(1.0 / n);
    Ok(k.powf(-p))
}

/// Energy level `(1/N) S_p^{N/p}` below which compactness holds.
pub fn sobolev_threshold(params: &RunParameters) -> Result<f64> {
    let n = params.dim() as f64;
    Ok(best_sobolev_constant(params.p(), params.dim())?.powf(n / params.p()) / n)
}

/// Discrete Rayleigh quotient `int |grad u|^p / (int |u|^p*)^{p/p*}`.
pub fn rayleigh_quotient(mesh: &Mesh, params: &RunParameters, u: &GridFunction) -> Result<f64> {
    mesh.check(u)?;
    let (p, ps) = (params.p(), params.p_star());
    let num = mesh.gradient_power_integral(u.values(), p);
    let den = mesh.integrate_with(u.values(), |v| v.abs().powf(ps));
    if den == 0.0 {
        return Err(Error::Degenerate("Rayleigh quotient of the zero field".into()));
    }
    Ok(num / den.powf(p / ps))
}

/// The five terms of the growth sandwich evaluated on a field, in order.
pub fn growth_sandwich(mesh: &Mesh, nl: &Nonlinearity, u: &GridFunction) -> Result<[f64; 5]> {
    mesh.check(u)?;
    let c = &nl.constants;
    let values = u.values();
    let lq = mesh.integrate_with(values, |v| v.abs().powf(nl.q));
    let big_f = mesh.integrate_with(values, |v| nl.eval(v).big_f);
    let fu = mesh.integrate_with(values, |v| nl.f(v) * v);
    let fuu = mesh.integrate_with(values, |v| nl.eval(v).f_u * v * v);
    Ok([c.c3 * lq, c.k2 * big_f, fu, c.c1 * fuu, c.c4 * lq])
}
