//! Descent methods for the discrete energy: damped Newton with the exact
//! Hessian (default) and L-BFGS. Both use a backtracking line search in which
//! `+∞` energies (inverted elements) are rejected like any other failed step.

use serde::{Deserialize, Serialize};

use super::{extract_observables, BeamConfig, BeamProblem, DeformationField, Observables};
use crate::error::{Error, Result};
use crate::material::ExtendedReal;
use crate::sparse::{dot, norm2, reverse_cuthill_mckee, EnvelopeCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Newton,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Relative gradient tolerance, see [`SolverReport::gradient_target`].
    pub tol: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    pub lbfgs_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Newton,
            tol: 1e-9,
            max_iterations: 200,
            max_backtracks: 60,
            lbfgs_memory: 20,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Input(format!("solver tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iterations == 0 || self.max_backtracks == 0 {
            return Err(Error::Input("solver iteration limits must be positive".into()));
        }
        if self.kind == SolverKind::Lbfgs && self.lbfgs_memory == 0 {
            return Err(Error::Input("lbfgs_memory must be positive".into()));
        }
        Ok(())
    }
}

/// Statistics of one minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub kind: SolverKind,
    pub iterations: usize,
    pub energy: f64,
    pub elastic_energy: f64,
    /// Euclidean norm of the gradient over free dofs.
    pub gradient_norm: f64,
    /// `tol·(s + |𝒥|)` with `s = h^{2α−2}`; convergence means `gradient_norm` is below it.
    pub gradient_target: f64,
    pub backtracks: usize,
    pub hessian_shifts: usize,
    /// Smallest `det ∇_h y` over quadrature points of the final state.
    pub min_det: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub field: DeformationField,
    pub observables: Observables,
    pub report: SolverReport,
}

/// Minimizes `𝒥^h` starting from `y⁰`.
pub fn minimize(config: &BeamConfig) -> Result<MinimizeOutcome> {
    let problem = BeamProblem::new(config)?;
    let start = DeformationField::reference(&problem.mesh, config.alpha);
    minimize_from(&problem, start, &config.solver)
}

/// Minimizes `𝒥^h` from a given admissible state. Clamped nodes are reset to
/// the clamp.
pub fn minimize_from(
    problem: &BeamProblem,
    mut field: DeformationField,
    options: &SolverOptions,
) -> Result<MinimizeOutcome> {
    options.validate()?;
    if field.disp.len() != problem.mesh.node_count() {
        return Err(Error::Input("initial field does not match the mesh".into()));
    }
    let ns = problem.mesh.section_nodes();
    for d in field.disp.iter_mut().take(ns) {
        *d = [0.0; 3];
    }
    if !problem.energy(&field).is_finite() {
        return Err(Error::Input("initial field is not admissible (det ∇_h y ≤ 0)".into()));
    }
    let first_free = 3 * ns;
    let scale = problem.mesh.h.powf(2.0 * problem.alpha - 2.0);
    let mut state = Descent::new(problem, field, first_free, scale, options);
    match options.kind {
        SolverKind::Newton => state.newton()?,
        SolverKind::Lbfgs => state.lbfgs()?,
    }
    let report = state.report();
    let observables = extract_observables(problem, &state.field);
    Ok(MinimizeOutcome {
        field: state.field,
        observables,
        report,
    })
}

struct Descent<'a> {
    problem: &'a BeamProblem,
    field: DeformationField,
    first_free: usize,
    scale: f64,
    options: &'a SolverOptions,
    energy: f64,
    grad: Vec<f64>,
    iterations: usize,
    backtracks: usize,
    shifts: usize,
}

impl<'a> Descent<'a> {
    fn new(
        problem: &'a BeamProblem,
        field: DeformationField,
        first_free: usize,
        scale: f64,
        options: &'a SolverOptions,
    ) -> Self {
        let mut d = Descent {
            problem,
            field,
            first_free,
            scale,
            options,
            energy: 0.0,
            grad: Vec::new(),
            iterations: 0,
            backtracks: 0,
            shifts: 0,
        };
        d.refresh();
        d
    }

    fn refresh(&mut self) {
        let (e, g) = self.problem.energy_and_gradient(&self.field);
        self.energy = e.to_f64();
        self.grad = g.expect("accepted states are admissible")[self.first_free..].to_vec();
    }

    fn gradient_norm(&self) -> f64 {
        norm2(&self.grad)
    }

    fn target(&self) -> f64 {
        self.options.tol * (self.scale + self.energy.abs())
    }

    fn converged(&self) -> bool {
        self.gradient_norm() <= self.target()
    }

    fn failure(&self, reason: impl Into<String>) -> Error {
        Error::Convergence {
            iterations: self.iterations,
            reason: reason.into(),
            gradient_norm: self.gradient_norm(),
            energy: self.energy,
        }
    }

    fn trial(&self, step: &[f64], t: f64) -> DeformationField {
        let mut f = self.field.clone();
        let mut x = f.as_flat();
        for (xi, si) in x[self.first_free..].iter_mut().zip(step) {
            *xi += t * si;
        }
        f.set_flat(&x);
        f
    }

    /// Backtracking with Armijo decrease. Energies within rounding of the
    /// current value count as decrease, since near the minimum the change
    /// falls below the evaluation noise.
    fn line_search(&mut self, step: &[f64]) -> Result<()> {
        let slope = dot(&self.grad, step);
        if !(slope < 0.0) {
            return Err(self.failure("search direction is not a descent direction"));
        }
        let noise = 64.0 * f64::EPSILON * (self.scale + self.energy.abs());
        let mut t = 1.0;
        for _ in 0..self.options.max_backtracks {
            let f = self.trial(step, t);
            if let ExtendedReal::Finite(e) = self.problem.energy(&f) {
                if e <= self.energy + 1e-4 * t * slope + noise {
                    self.field = f;
                    self.refresh();
                    return Ok(());
                }
            }
            self.backtracks += 1;
            t *= 0.5;
        }
        Err(self.failure("line search failed"))
    }

    fn newton(&mut self) -> Result<()> {
        let mut pattern = self.problem.hessian_pattern();
        let keep: Vec<bool> = (0..self.problem.mesh.dof_count())
            .map(|i| i >= self.first_free)
            .collect();
        let mut ordering = None;
        while !self.converged() {
            if self.iterations >= self.options.max_iterations {
                return Err(self.failure("iteration limit reached"));
            }
            self.iterations += 1;
            self.problem.hessian_into(&self.field, &mut pattern)?;
            let (k, _) = pattern.submatrix(&keep);
            let perm = ordering.get_or_insert_with(|| reverse_cuthill_mckee(&k));
            let max_diag = (0..k.dim()).map(|i| k.get(i, i).abs()).fold(0.0, f64::max);
            let mut shift = 0.0;
            let chol = loop {
                match EnvelopeCholesky::factor_with(&k, perm, shift) {
                    Ok(c) => break c,
                    Err(Error::NotPositiveDefinite { .. }) if shift < max_diag => {
                        self.shifts += 1;
                        shift = if shift == 0.0 { 1e-8 * max_diag } else { 10.0 * shift };
                    }
                    Err(e) => return Err(e),
                }
            };
            let rhs: Vec<f64> = self.grad.iter().map(|g| -g).collect();
            let step = if shift == 0.0 {
                chol.solve_refined(&k, &rhs, 2)
            } else {
                chol.solve(&rhs)
            };
            let before = self.energy;
            self.line_search(&step)?;
            // at the noise floor the energy no longer moves; the gradient decides
            if self.energy == before && !self.converged() && self.gradient_norm() <= 1e3 * self.target() {
                break;
            }
        }
        Ok(())
    }

    fn lbfgs(&mut self) -> Result<()> {
        let m = self.options.lbfgs_memory;
        let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
        while !self.converged() {
            if self.iterations >= self.options.max_iterations {
                return Err(self.failure("iteration limit reached"));
            }
            self.iterations += 1;
            let mut q = self.grad.clone();
            let mut alphas = Vec::with_capacity(hist.len());
            for (s, y, rho) in hist.iter().rev() {
                let a = rho * dot(s, &q);
                q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                alphas.push(a);
            }
            let gamma = match hist.back() {
                Some((s, y, _)) => dot(s, y) / dot(y, y),
                None => {
                    // first step of length ~ the displacement scale
                    let h = self.problem.mesh.h;
                    h.powf(self.problem.alpha - 2.0) * 1e-2 / self.gradient_norm().max(f64::MIN_POSITIVE)
                }
            };
            q.iter_mut().for_each(|v| *v *= gamma);
            for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(y, &q);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
            }
            let step: Vec<f64> = q.iter().map(|v| -v).collect();
            let x0 = self.field.as_flat()[self.first_free..].to_vec();
            let g0 = self.grad.clone();
            self.line_search(&step)?;
            let x1 = &self.field.as_flat()[self.first_free..];
            let s: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = self.grad.iter().zip(&g0).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                if hist.len() == m {
                    hist.pop_front();
                }
                hist.push_back((s, y, 1.0 / sy));
            }
        }
        Ok(())
    }

    fn report(&self) -> SolverReport {
        SolverReport {
            kind: self.options.kind,
            iterations: self.iterations,
            energy: self.energy,
            elastic_energy: self.problem.elastic_energy(&self.field).to_f64(),
            gradient_norm: self.gradient_norm(),
            gradient_target: self.target(),
            backtracks: self.backtracks,
            hessian_shifts: self.shifts,
            min_det: self.problem.min_det(&self.field),
        }
    }
}
