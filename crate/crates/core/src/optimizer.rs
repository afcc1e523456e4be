//! Minimizing sequences for the energy restricted to K1, K2 and K3.
//!
//! Each iteration takes the Sobolev gradient (the residual preconditioned by
//! the discrete Dirichlet Laplacian), removes its components along the
//! preconditioned constraint normals, and backtracks along the retraction
//! curve `t -> retract(u - t d)` until the Armijo condition holds. The
//! retraction clips the forbidden sign (K1, K2) and rescales each sign part
//! back onto its constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::{
    energy_parts_unchecked, energy_residual_unchecked, sobolev_threshold, Nonlinearity, RunParameters,
};
use crate::mesh::{build_mesh, GridFunction, Mesh};
use crate::nehari::{
    constraint_gradient_unchecked, constraint_terms_unchecked, project_pair_to_m3, scale_to_manifold, KIndex, Part,
};
use crate::precond::LaplacePreconditioner;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub params: RunParameters,
    pub nonlinearity: Nonlinearity,
    /// Cells per side.
    pub res: usize,
    pub max_iters: usize,
    /// Stop once the projected Sobolev gradient has `H^1_0` norm below this.
    pub grad_tol: f64,
    /// Relative tolerance `|phi| / int |grad u_+-|^p` for constraint membership.
    pub constraint_tol: f64,
    pub step_init: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(params: RunParameters, nonlinearity: Nonlinearity, res: usize) -> Self {
        SolverConfig {
            params,
            nonlinearity,
            res,
            max_iters: 5000,
            grad_tol: 1e-7,
            constraint_tol: 1e-10,
            step_init: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.validate(&self.params)?;
        if self.res < 2 {
            return Err(Error::config(format!("resolution must be at least 2, got {}", self.res)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max-iters must be positive"));
        }
        for (name, value) in [
            ("grad-tol", self.grad_tol),
            ("constraint-tol", self.constraint_tol),
            ("step-init", self.step_init),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [("armijo-c", self.armijo_c), ("backtrack-factor", self.backtrack_factor)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub set: KIndex,
    pub iterations: usize,
    pub converged: bool,
    /// Final energy, the computed `inf_{K_i} Phi`.
    pub energy: f64,
    /// Relative constraint residual per active part at the final iterate.
    pub constraint_residuals: Vec<f64>,
    /// Largest relative constraint residual over all accepted iterates.
    pub max_iterate_residual: f64,
    /// `H^1_0` norm of the projected Sobolev gradient.
    pub projected_residual: f64,
    /// Dual norm of the unrestricted residual `Phi'(u)`.
    pub unrestricted_residual: f64,
    pub threshold: f64,
    pub below_threshold: bool,
    /// Energy of every accepted iterate, starting with the initial point.
    pub energy_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: GridFunction,
    pub report: SolveReport,
}

/// Nonnegative, nonpositive and sign-changing solutions.
#[derive(Clone, Debug)]
pub struct SolutionTriple {
    pub u1: Solution,
    pub u2: Solution,
    pub u3: Solution,
}

impl SolutionTriple {
    pub fn solutions(&self) -> [&Solution; 3] {
        [&self.u1, &self.u2, &self.u3]
    }
}

/// Outcome of a retraction onto K_i.
#[derive(Clone, Debug)]
pub struct Retraction {
    pub field: GridFunction,
    /// Scale applied to each active sign part.
    pub scales: Vec<f64>,
    pub sweeps: usize,
}

/// Mesh, metric and parameters shared by every solve of one configuration.
#[derive(Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub precond: LaplacePreconditioner,
    pub config: SolverConfig,
    pub threshold: f64,
}

const MAX_BACKTRACKS: usize = 60;
const MAX_SWEEPS: usize = 50;

impl Problem {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_mesh(config.params.dim(), config.res)?;
        let precond = LaplacePreconditioner::new(&mesh)?;
        let threshold = sobolev_threshold(&config.params)?;
        Ok(Problem {
            mesh,
            precond,
            config,
            threshold,
        })
    }

    fn nl(&self) -> &Nonlinearity {
        &self.config.nonlinearity
    }

    fn params(&self) -> &RunParameters {
        &self.config.params
    }

    /// Relative constraint residuals of the parts active on `k`.
    pub fn constraint_residuals(&self, u: &GridFunction, k: KIndex) -> Vec<f64> {
        k.parts()
            .iter()
            .map(|&part| constraint_terms_unchecked(&self.mesh, self.nl(), self.params(), u.values(), part).relative_residual())
            .collect()
    }

    pub fn energy(&self, u: &GridFunction) -> f64 {
        energy_parts_unchecked(&self.mesh, self.nl(), self.params(), u.values()).total(self.params())
    }

    /// Seeded smooth bump with the sign structure of `k`, before scaling.
    ///
    /// K1 uses `prod sin(pi x_i)` times a random exponential tilt, K2 its
    /// negation, K3 replaces the first factor by `sin(2 pi x_1)`.
    pub fn reference_bump(&self, k: KIndex) -> Result<GridFunction> {
        let dim = self.mesh.dim();
        if k == KIndex::K3 && self.mesh.res() < 4 {
            return Err(Error::config(format!(
                "two disjoint interior bumps need at least 4 cells per side, got {}",
                self.mesh.res()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let tilt: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let pi = std::f64::consts::PI;
        let bump = self.mesh.interpolate(|x| {
            let lean: f64 = x.iter().zip(&tilt).map(|(c, a)| a * (c - 0.5)).sum();
            let first = match k {
                KIndex::K3 => (2.0 * pi * x[0]).sin(),
                _ => (pi * x[0]).sin(),
            };
            let value = first * x[1..].iter().map(|c| (pi * c).sin()).product::<f64>() * lean.exp();
            // Snap roundoff on the nodal planes of the sines.
            let value = if value.abs() < 1e-13 { 0.0 } else { value };
            if k == KIndex::K2 {
                -value
            } else {
                value
            }
        });
        self.mesh.apply_dirichlet(&bump)
    }

    /// Seeded bump scaled onto the constraint set `k`.
    pub fn initial_point(&self, k: KIndex) -> Result<GridFunction> {
        let bump = self.reference_bump(k)?;
        match k {
            KIndex::K1 => {
                let root = scale_to_manifold(&self.mesh, self.nl(), self.params(), &bump, Part::Plus)?;
                Ok(bump.scaled(root.t))
            }
            KIndex::K2 => {
                let root = scale_to_manifold(&self.mesh, self.nl(), self.params(), &bump, Part::Minus)?;
                Ok(bump.scaled(root.t))
            }
            KIndex::K3 => {
                let plus = bump.map(|v| v.max(0.0));
                let minus = bump.map(|v| v.min(0.0));
                Ok(project_pair_to_m3(&self.mesh, self.nl(), self.params(), &plus, &minus)?.field)
            }
        }
    }

    /// Return `u` to K_i: clip the forbidden sign, then rescale each sign part.
    pub fn retract(&self, u: &GridFunction, k: KIndex) -> Result<Retraction> {
        self.mesh.check(u)?;
        let interior_support = |w: &GridFunction| {
            w.values()
                .iter()
                .zip(self.mesh.boundary_flags())
                .any(|(&v, &b)| v != 0.0 && !b)
        };
        match k {
            KIndex::K1 | KIndex::K2 => {
                let part = k.parts()[0];
                let w = match part {
                    Part::Plus => u.map(|v| v.max(0.0)),
                    Part::Minus => u.map(|v| v.min(0.0)),
                };
                if !interior_support(&w) {
                    return Err(Error::LostSign);
                }
                let root = scale_to_manifold(&self.mesh, self.nl(), self.params(), &w, part)?;
                Ok(Retraction {
                    field: w.scaled(root.t),
                    scales: vec![root.t],
                    sweeps: 1,
                })
            }
            KIndex::K3 => {
                let mut plus = u.map(|v| v.max(0.0));
                let mut minus = u.map(|v| v.min(0.0));
                if !interior_support(&plus) || !interior_support(&minus) {
                    return Err(Error::LostSign);
                }
                let mut scales = vec![1.0, 1.0];
                for sweep in 1..=MAX_SWEEPS {
                    let s = scale_to_manifold(&self.mesh, self.nl(), self.params(), &plus, Part::Plus)?.t;
                    plus = plus.scaled(s);
                    let t = scale_to_manifold(&self.mesh, self.nl(), self.params(), &minus, Part::Minus)?.t;
                    minus = minus.scaled(t);
                    scales[0] *= s;
                    scales[1] *= t;
                    let field = plus.add_scaled(1.0, &minus);
                    let worst = self.constraint_residuals(&field, k).into_iter().fold(0.0, f64::max);
                    if worst <= self.config.constraint_tol {
                        return Ok(Retraction {
                            field,
                            scales,
                            sweeps: sweep,
                        });
                    }
                }
                Err(Error::Degenerate(format!(
                    "K3 rescaling did not settle within {MAX_SWEEPS} sweeps"
                )))
            }
        }
    }

    /// Projected Sobolev gradient at `u` and the unrestricted residual.
    ///
    /// The preconditioned residual `d = K^{-1} r` is projected
    /// `K`-orthogonally onto the common kernel of the active constraint
    /// normals, so it vanishes exactly at constrained critical points.
    fn projected_gradient(&self, u: &GridFunction, k: KIndex) -> Result<(GridFunction, GridFunction)> {
        let r = energy_residual_unchecked(&self.mesh, self.nl(), self.params(), u);
        let d = self.precond.solve(&r);
        let normals: Vec<GridFunction> = k
            .parts()
            .iter()
            .map(|&part| constraint_gradient_unchecked(&self.mesh, self.nl(), self.params(), u, part))
            .collect();
        let lifted: Vec<GridFunction> = normals.iter().map(|n| self.precond.solve(n)).collect();
        let gram: Vec<Vec<f64>> = normals
            .iter()
            .map(|n| lifted.iter().map(|z| n.dot(z)).collect())
            .collect();
        let rhs: Vec<f64> = normals.iter().map(|n| n.dot(&d)).collect();
        let multipliers = match gram.len() {
            1 => {
                if !(gram[0][0] > 0.0) {
                    return Err(Error::DegenerateConstraint { pairing: gram[0][0] });
                }
                vec![rhs[0] / gram[0][0]]
            }
            _ => {
                let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
                if !(det.abs() > 1e-14 * gram[0][0] * gram[1][1]) {
                    return Err(Error::DegenerateConstraint { pairing: det });
                }
                vec![
                    (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det,
                    (rhs[1] * gram[0][0] - rhs[0] * gram[1][0]) / det,
                ]
            }
        };
        let mut direction = d;
        for (mu, z) in multipliers.iter().zip(&lifted) {
            direction = direction.add_scaled(-mu, z);
        }
        Ok((direction, r))
    }

    /// `H^1_0` norm of the projected Sobolev gradient at `u` on K_i.
    pub fn projected_residual(&self, u: &GridFunction, k: KIndex) -> Result<f64> {
        self.mesh.check(u)?;
        let (direction, _) = self.projected_gradient(u, k)?;
        Ok(self.precond.energy_norm(&self.mesh, &direction))
    }

    /// Armijo-backtracked projected descent from `init` on K_i.
    pub fn descend(&self, k: KIndex, init: &GridFunction) -> Result<Solution> {
        self.mesh.check(init)?;
        let tol = self.config.constraint_tol;
        let initial_residual = self.constraint_residuals(init, k).into_iter().fold(0.0, f64::max);
        if !(initial_residual <= tol) {
            return Err(Error::Precondition(format!(
                "initial point is off {} (relative residual {initial_residual:e})",
                k.label()
            )));
        }

        let mut u = init.clone();
        let mut energy = self.energy(&u);
        let mut history = vec![energy];
        let mut max_residual = initial_residual;
        let mut iterations = 0;
        let mut step = self.config.step_init;

        let (residual, projected_norm, converged) = loop {
            let (direction, residual) = self.projected_gradient(&u, k)?;
            let projected_norm = self.precond.energy_norm(&self.mesh, &direction);
            if projected_norm <= self.config.grad_tol {
                break (residual, projected_norm, true);
            }
            if iterations == self.config.max_iters {
                break (residual, projected_norm, false);
            }
            let slope = residual.dot(&direction);

            let mut accepted = None;
            let mut last_error = None;
            let mut t = step;
            for _ in 0..MAX_BACKTRACKS {
                match self.retract(&u.add_scaled(-t, &direction), k) {
                    Ok(candidate) => {
                        let trial = self.energy(&candidate.field);
                        if trial <= energy - self.config.armijo_c * t * slope {
                            accepted = Some((candidate.field, trial));
                            break;
                        }
                    }
                    Err(err @ (Error::LostSign | Error::NoRoot { .. } | Error::Degenerate(_))) => {
                        last_error = Some(err);
                    }
                    Err(err) => return Err(err),
                }
                t *= self.config.backtrack_factor;
            }

            let Some((next, next_energy)) = accepted else {
                if let Some(Error::LostSign) = last_error {
                    return Err(Error::LostSign);
                }
                let report = self.report(k, &u, iterations, false, projected_norm, &residual, history, max_residual);
                return Err(Error::Stagnation {
                    iterations,
                    report: Box::new(report),
                });
            };
            // Grow the trial step again after an easy acceptance.
            step = if t == step { (2.0 * t).min(self.config.step_init) } else { t };
            u = next;
            energy = next_energy;
            history.push(energy);
            let residual_now = self.constraint_residuals(&u, k).into_iter().fold(0.0, f64::max);
            max_residual = max_residual.max(residual_now);
            iterations += 1;
        };
        let report = self.report(k, &u, iterations, converged, projected_norm, &residual, history, max_residual);
        Ok(Solution { field: u, report })
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        k: KIndex,
        u: &GridFunction,
        iterations: usize,
        converged: bool,
        projected_residual: f64,
        residual: &GridFunction,
        energy_history: Vec<f64>,
        max_iterate_residual: f64,
    ) -> SolveReport {
        let energy = *energy_history.last().expect("history starts with the initial energy");
        SolveReport {
            set: k,
            iterations,
            converged,
            energy,
            constraint_residuals: self.constraint_residuals(u, k),
            max_iterate_residual,
            projected_residual,
            unrestricted_residual: self.precond.dual_norm(residual),
            threshold: self.threshold,
            below_threshold: energy < self.threshold,
            energy_history,
        }
    }

    pub fn solve(&self, k: KIndex) -> Result<Solution> {
        let init = self.initial_point(k)?;
        self.descend(k, &init)
    }

    /// Solve on K1, K2 and K3 (concurrently; each run is deterministic).
    pub fn solve_three(&self) -> Result<SolutionTriple> {
        let mut runs: Vec<Result<Solution>> = KIndex::ALL.par_iter().map(|&k| self.solve(k)).collect();
        let failures: Vec<(KIndex, String)> = KIndex::ALL
            .iter()
            .zip(&runs)
            .filter_map(|(&k, run)| run.as_ref().err().map(|e| (k, e.to_string())))
            .collect();
        if !failures.is_empty() {
            let solutions = runs.into_iter().filter_map(Result::ok).collect();
            return Err(Error::Partial { failures, solutions });
        }
        let u3 = runs.pop().unwrap()?;
        let u2 = runs.pop().unwrap()?;
        let u1 = runs.pop().unwrap()?;
        let triple = SolutionTriple { u1, u2, u3 };
        let fields = triple.solutions().map(|s| &s.field);
        if fields[0].values().iter().any(|&v| v < 0.0) || fields[1].values().iter().any(|&v| v > 0.0) {
            return Err(Error::Sign("K1/K2 solutions violate their sign restriction".into()));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let gap = normalized_distance(fields[i], fields[j]);
                if !(gap >= DISTINCTNESS_TOL) {
                    return Err(Error::Degenerate(format!(
                        "solutions {} and {} coincide (normalized distance {gap:e})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(triple)
    }
}

/// Pairwise separation required between the three solutions.
pub const DISTINCTNESS_TOL: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|)` in the nodal Euclidean norm.
pub fn normalized_distance(a: &GridFunction, b: &GridFunction) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return 0.0;
    }
    a.add_scaled(-1.0, b).norm() / scale
}

pub fn initial_point(problem: &Problem, k: KIndex) -> Result<GridFunction> {
    problem.initial_point(k)
}

pub fn retract(problem: &Problem, u: &GridFunction, k: KIndex) -> Result<GridFunction> {
    Ok(problem.retract(u, k)?.field)
}

pub fn descend(problem: &Problem, k: KIndex, init: &GridFunction) -> Result<Solution> {
    problem.descend(k, init)
}

pub fn solve_three(config: &SolverConfig) -> Result<SolutionTriple> {
    Problem::new(config.clone())?.solve_three()
}

/// One row of a lambda sweep; per-set failures are kept as messages.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Fibering scale of the seeded K1 bump, `NaN` if it failed.
    pub t_lambda: f64,
    /// `(A / (c3 lambda C))^{1/(q-p)}` for the same bump.
    pub bracket: f64,
    pub energies: [Option<f64>; 3],
    pub below_threshold: [Option<bool>; 3],
    pub errors: Vec<String>,
}

impl SweepRow {
    pub fn all_failed(&self) -> bool {
        self.t_lambda.is_nan() && self.energies.iter().all(Option::is_none)
    }
}

/// Fibering scale of the reference bump and the three minimized energies
/// for every lambda, rows in input order.
pub fn lambda_sweep(config: &SolverConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::config("lambda list is empty"));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) || !(lambdas[0] > 0.0) {
        return Err(Error::config("lambda list must be positive and strictly increasing"));
    }
    config.validate()?;
    Ok(lambdas.par_iter().map(|&lambda| sweep_row(config, lambda)).collect())
}

fn sweep_row(config: &SolverConfig, lambda: f64) -> SweepRow {
    let mut row = SweepRow {
        lambda,
        t_lambda: f64::NAN,
        bracket: f64::NAN,
        energies: [None; 3],
        below_threshold: [None; 3],
        errors: Vec::new(),
    };
    let problem = match config
        .params
        .with_lambda(lambda)
        .and_then(|params| Problem::new(SolverConfig { params, ..config.clone() }))
    {
        Ok(problem) => problem,
        Err(err) => {
            row.errors.push(err.to_string());
            return row;
        }
    };
    match problem
        .reference_bump(KIndex::K1)
        .and_then(|w| scale_to_manifold(&problem.mesh, problem.nl(), problem.params(), &w, Part::Plus))
    {
        Ok(root) => {
            row.t_lambda = root.t;
            row.bracket = root.bracket;
        }
        Err(err) => row.errors.push(format!("t_lambda: {err}")),
    }
    for (i, k) in KIndex::ALL.into_iter().enumerate() {
        match problem.solve(k) {
            Ok(solution) => {
                row.energies[i] = Some(solution.report.energy);
                row.below_threshold[i] = Some(solution.report.below_threshold);
            }
            Err(err) => row.errors.push(format!("{}: {err}", k.label())),
        }
    }
    row
}
