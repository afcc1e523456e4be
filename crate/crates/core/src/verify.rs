//! Executable versions of the structural facts about K1, K2, K3 and their
//! minimizers. Checks never fail with an error; they report.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::functional::{energy_parts, energy_residual, Nonlinearity, RunParameters};
use crate::mesh::{GridFunction, Mesh};
use crate::nehari::{constraint_terms, KIndex, Part};
use crate::optimizer::{normalized_distance, Problem, DISTINCTNESS_TOL};
use crate::precond::LaplacePreconditioner;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
}

impl Measurement {
    pub fn new(label: impl Into<String>, value: f64, bound: Bound, limit: f64) -> Self {
        Measurement {
            label: label.into(),
            value,
            bound,
            limit,
        }
    }

    pub fn holds(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.value <= self.limit,
            Bound::AtLeast => self.value >= self.limit,
            Bound::Above => self.value > self.limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
}

impl CheckReport {
    fn from_measurements(name: impl Into<String>, measurements: Vec<Measurement>) -> Self {
        let passed = measurements.iter().all(Measurement::holds);
        CheckReport {
            name: name.into(),
            passed,
            measurements,
        }
    }

    /// The first failing measurement, or the first one if all hold.
    pub fn headline(&self) -> Option<&Measurement> {
        self.measurements
            .iter()
            .find(|m| !m.holds())
            .or_else(|| self.measurements.first())
    }
}

impl fmt::Display for CheckReport {
    /// `name PASS|FAIL measured tolerance`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        match self.headline() {
            Some(m) => write!(f, "{} {} {:e} {:e}", self.name, verdict, m.value, m.limit),
            None => write!(f, "{} {}", self.name, verdict),
        }
    }
}

/// Sign condition, nontriviality and constraint residual for `k`.
pub fn check_membership(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    k: KIndex,
    tol: f64,
) -> Result<CheckReport> {
    let mut measurements = Vec::new();
    match k {
        KIndex::K1 => {
            let worst = u.values().iter().fold(0.0f64, |m, &v| m.max(-v)) + 0.0;
            measurements.push(Measurement::new("max_negative_value", worst, Bound::AtMost, 0.0));
        }
        KIndex::K2 => {
            let worst = u.values().iter().fold(0.0f64, |m, &v| m.max(v)) + 0.0;
            measurements.push(Measurement::new("max_positive_value", worst, Bound::AtMost, 0.0));
        }
        KIndex::K3 => {}
    }
    for &part in k.parts() {
        let tag = part_tag(part);
        let mass = mesh.integrate(&u.values().iter().map(|&v| part.of(v)).collect::<Vec<_>>())?;
        measurements.push(Measurement::new(format!("int_u_{tag}"), mass, Bound::Above, 0.0));
    }
    for &part in k.parts() {
        let terms = constraint_terms(mesh, nl, params, u, part)?;
        measurements.push(Measurement::new(
            format!("relative_residual_{}", part_tag(part)),
            terms.relative_residual(),
            Bound::AtMost,
            tol,
        ));
    }
    // Residuals first: they are the headline quantity.
    let shift = measurements.len() - k.parts().len();
    measurements.rotate_left(shift);
    Ok(CheckReport::from_measurements(format!("membership_{}", k.label()), measurements))
}

fn part_tag(part: Part) -> &'static str {
    match part {
        Part::Plus => "plus",
        Part::Minus => "minus",
    }
}

/// Tolerance for the exact Nehari identity in [`check_energy_chain`].
pub const IDENTITY_TOL: f64 = 1e-9;

/// The exactly assertable part of the energy equivalence chain on K_i.
///
/// * the sum of the active constraints vanishes: the sign-part gradient
///   energies equal `lambda int f(u) u + int |u|^p*`;
/// * `Phi(u) > 0`;
/// * `Phi(u) <= (1/k2 + 1/p) int |grad u|^p`.
///
/// The split `int |grad u|^p - sum_parts int |grad u_+-|^p` is reported; it is
/// zero unless some simplex carries both signs.
pub fn check_energy_chain(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    u: &GridFunction,
    k: KIndex,
) -> Result<CheckReport> {
    let parts = energy_parts(mesh, nl, params, u)?;
    let mut part_gradient = 0.0;
    let mut part_rhs = 0.0;
    for &part in k.parts() {
        let terms = constraint_terms(mesh, nl, params, u, part)?;
        part_gradient += terms.gradient;
        part_rhs += terms.critical + terms.lambda * terms.source;
    }
    let identity = if part_gradient > 0.0 {
        (part_gradient - part_rhs).abs() / part_gradient
    } else {
        f64::INFINITY
    };
    let energy = parts.total(params);
    let bound = (1.0 / nl.constants.k2 + 1.0 / params.p()) * parts.gradient;
    let split = if parts.gradient > 0.0 {
        (parts.gradient - part_gradient).abs() / parts.gradient
    } else {
        0.0
    };
    Ok(CheckReport::from_measurements(
        format!("energy_chain_{}", k.label()),
        vec![
            Measurement::new("nehari_identity", identity, Bound::AtMost, IDENTITY_TOL),
            Measurement::new("energy", energy, Bound::Above, 0.0),
            Measurement::new("energy_minus_bound", energy - bound, Bound::AtMost, 0.0),
            Measurement::new("gradient_split_gap", split, Bound::AtMost, f64::INFINITY),
        ],
    ))
}

/// Nodal sign conditions and nontriviality of the three solutions.
pub fn check_sign_structure(mesh: &Mesh, params: &RunParameters, fields: [&GridFunction; 3]) -> Result<CheckReport> {
    let p = params.p();
    let grad_norm = |values: Vec<f64>| mesh.gradient_power_integral(&values, p).powf(1.0 / p);
    for u in fields {
        mesh.check(u)?;
    }
    let [u1, u2, u3] = fields;
    let measurements = vec![
        Measurement::new(
            "u1_max_negative",
            u1.values().iter().fold(0.0f64, |m, &v| m.max(-v)) + 0.0,
            Bound::AtMost,
            0.0,
        ),
        Measurement::new(
            "u2_max_positive",
            u2.values().iter().fold(0.0f64, |m, &v| m.max(v)) + 0.0,
            Bound::AtMost,
            0.0,
        ),
        Measurement::new("u1_grad_norm", grad_norm(u1.values().to_vec()), Bound::Above, 0.0),
        Measurement::new("u2_grad_norm", grad_norm(u2.values().to_vec()), Bound::Above, 0.0),
        Measurement::new("u3_grad_norm", grad_norm(u3.values().to_vec()), Bound::Above, 0.0),
        Measurement::new(
            "u3_plus_grad_norm",
            grad_norm(u3.values().iter().map(|&v| Part::Plus.of(v)).collect()),
            Bound::Above,
            0.0,
        ),
        Measurement::new(
            "u3_minus_grad_norm",
            grad_norm(u3.values().iter().map(|&v| Part::Minus.of(v)).collect()),
            Bound::Above,
            0.0,
        ),
    ];
    Ok(CheckReport::from_measurements("sign_structure", measurements))
}

/// Dual norm of the unrestricted residual `Phi'(u)` against `tol`.
pub fn check_euler_lagrange(
    mesh: &Mesh,
    nl: &Nonlinearity,
    params: &RunParameters,
    precond: &LaplacePreconditioner,
    u: &GridFunction,
    tol: f64,
) -> Result<CheckReport> {
    let residual = energy_residual(mesh, nl, params, u)?;
    let norm = precond.dual_norm(&residual);
    let trivial = u.values().iter().all(|&v| v == 0.0);
    let mut report = CheckReport::from_measurements(
        "euler_lagrange",
        vec![Measurement::new("residual_dual_norm", norm, Bound::AtMost, tol)],
    );
    if trivial {
        report.name.push_str("_trivial");
    }
    Ok(report)
}

/// Norm of the projected Sobolev gradient of the energy restricted to K_i.
pub fn check_constrained_stationarity(problem: &Problem, u: &GridFunction, k: KIndex, tol: f64) -> Result<CheckReport> {
    let norm = problem.projected_residual(u, k)?;
    Ok(CheckReport::from_measurements(
        format!("stationarity_{}", k.label()),
        vec![Measurement::new("projected_gradient_norm", norm, Bound::AtMost, tol)],
    ))
}

pub fn check_distinct(fields: [&GridFunction; 3]) -> CheckReport {
    let mut measurements = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            measurements.push(Measurement::new(
                format!("distance_u{}_u{}", i + 1, j + 1),
                normalized_distance(fields[i], fields[j]),
                Bound::AtLeast,
                DISTINCTNESS_TOL,
            ));
        }
    }
    CheckReport::from_measurements("distinct", measurements)
}

/// Tolerance for the stationarity checks on solver output.
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Checks for a single field claimed to lie in K_i.
pub fn verify_field(problem: &Problem, u: &GridFunction, k: KIndex) -> Result<Vec<CheckReport>> {
    let (mesh, nl, params) = (&problem.mesh, &problem.config.nonlinearity, &problem.config.params);
    let mut reports = vec![check_membership(mesh, nl, params, u, k, problem.config.constraint_tol)?];
    let member = reports[0].passed;
    reports.push(check_energy_chain(mesh, nl, params, u, k)?);
    if member {
        reports.push(check_constrained_stationarity(problem, u, k, STATIONARITY_TOL)?);
    }
    let mut el = check_euler_lagrange(mesh, nl, params, &problem.precond, u, STATIONARITY_TOL)?;
    el.name = format!("{}_{}", el.name, k.label());
    reports.push(el);
    for report in &mut reports {
        report.name = format!("{}:{}", field_name(k), report.name);
    }
    Ok(reports)
}

fn field_name(k: KIndex) -> &'static str {
    match k {
        KIndex::K1 => "u1",
        KIndex::K2 => "u2",
        KIndex::K3 => "u3",
    }
}

/// The full suite on a candidate triple.
pub fn verify_triple(problem: &Problem, fields: [&GridFunction; 3]) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (u, k) in fields.iter().zip(KIndex::ALL) {
        reports.extend(verify_field(problem, u, k)?);
    }
    reports.push(check_sign_structure(&problem.mesh, &problem.config.params, fields)?);
    reports.push(check_distinct(fields));
    Ok(reports)
}
