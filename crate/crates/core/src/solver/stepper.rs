//! θ-scheme time stepping of `V y' + (A + γV) y = V f`.

use crate::grid::{GridError, TracerField};
use crate::krylov::{gmres, GmresOptions};
use crate::sparse::Ilu0;
use crate::transport::TransportOperator;

use super::{SolveConfig, SolverError};

/// Per-step solves whose residual stays above this are reported as failures.
const STEP_FAIL: f64 = 1e-10;

/// Time stepper for one shift `γ`, with ILU(0) factors of every distinct
/// step matrix.
pub(crate) struct Stepper<'a> {
    op: &'a TransportOperator,
    n_steps: usize,
    theta: f64,
    /// `V/Δt + θγV`
    diag_lhs: Vec<f64>,
    /// `V/Δt − (1−θ)γV`
    diag_rhs: Vec<f64>,
    ilu: Vec<Ilu0>,
    opts: GmresOptions,
    project: bool,
    total_volume: f64,
    pub(crate) periods: usize,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(
        op: &'a TransportOperator,
        gamma: f64,
        config: &SolveConfig,
        project: bool,
    ) -> Result<Self, SolverError> {
        config.check_operator(op)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(SolverError::Config(format!("shift must be >= 0, got {gamma}")));
        }
        let dt = config.time_step();
        let theta = config.theta;
        let v = op.volumes();
        let diag_lhs: Vec<f64> = v.iter().map(|v| v / dt + theta * gamma * v).collect();
        let diag_rhs = v.iter().map(|v| v / dt - (1.0 - theta) * gamma * v).collect();
        let ilu = (0..op.n_time_steps())
            .map(|m| Ilu0::new(&op.step_matrix(m).scaled_plus_diagonal(theta, &diag_lhs)))
            .collect();
        Ok(Self {
            op,
            n_steps: config.n_time_steps,
            theta,
            diag_lhs,
            diag_rhs,
            ilu,
            opts: GmresOptions {
                tol: config.step_tol,
                max_iter: 200,
                restart: 40,
                verify: false,
            },
            project,
            total_volume: v.iter().sum(),
            periods: 0,
        })
    }

    pub(crate) fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub(crate) fn n_cells(&self) -> usize {
        self.diag_lhs.len()
    }

    fn matrix_index(&self, step: usize) -> usize {
        (step % self.n_steps) * self.op.n_time_steps() / self.n_steps
    }

    /// Removes the volume-weighted mean.
    pub(crate) fn project(&self, y: &mut [f64]) {
        let mean = self
            .op
            .volumes()
            .iter()
            .zip(y.iter())
            .map(|(v, y)| v * y)
            .sum::<f64>()
            / self.total_volume;
        y.iter_mut().for_each(|y| *y -= mean);
    }

    /// `θ f^{n+1} + (1−θ) f^n` for every step of a periodic forcing.
    pub(crate) fn combine(&self, forcing: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = forcing.len();
        (0..n)
            .map(|k| {
                forcing[(k + 1) % n]
                    .iter()
                    .zip(&forcing[k])
                    .map(|(a, b)| self.theta * a + (1.0 - self.theta) * b)
                    .collect()
            })
            .collect()
    }

    /// Advances `y` by one step; `combined` is the θ-weighted forcing
    /// (concentration rate) or `None` for the homogeneous problem.
    pub(crate) fn step(
        &self,
        step: usize,
        y: &[f64],
        combined: Option<&[f64]>,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        let m = self.matrix_index(step);
        let a = self.op.step_matrix(m);
        let mut rhs = vec![0.0; y.len()];
        a.mul_vec(y, &mut rhs);
        let v = self.op.volumes();
        for i in 0..y.len() {
            rhs[i] = self.diag_rhs[i] * y[i] - (1.0 - self.theta) * rhs[i];
            if let Some(f) = combined {
                rhs[i] += v[i] * f[i];
            }
        }
        out.copy_from_slice(y);
        let ilu = &self.ilu[m];
        let outcome = gmres(
            |x, o| a.mul_vec_shifted(&self.diag_lhs, self.theta, x, o),
            |x| ilu.solve_in_place(x),
            None,
            &rhs,
            out,
            &self.opts,
        );
        if !outcome.converged && outcome.relative_residual > STEP_FAIL {
            return Err(SolverError::StepSolve {
                step,
                residual: outcome.relative_residual,
            });
        }
        if self.project {
            self.project(out);
        }
        Ok(())
    }

    /// Integrates one period from `y0`; returns `y(T)` and, if requested, the
    /// whole trajectory.
    pub(crate) fn integrate(
        &mut self,
        y0: &[f64],
        combined: Option<&[Vec<f64>]>,
        keep: bool,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>), SolverError> {
        self.periods += 1;
        let mut y = y0.to_vec();
        if self.project {
            self.project(&mut y);
        }
        let mut next = vec![0.0; y.len()];
        let mut trajectory = Vec::new();
        if keep {
            trajectory.reserve(self.n_steps + 1);
            trajectory.push(y.clone());
        }
        for n in 0..self.n_steps {
            self.step(n, &y, combined.map(|c| c[n].as_slice()), &mut next)?;
            std::mem::swap(&mut y, &mut next);
            if keep {
                trajectory.push(y.clone());
            }
        }
        Ok((y, trajectory))
    }
}

pub(crate) fn check_forcing(
    op: &TransportOperator,
    config: &SolveConfig,
    rhs: &[TracerField],
) -> Result<Vec<Vec<f64>>, SolverError> {
    if rhs.len() != config.n_time_steps {
        return Err(SolverError::Config(format!(
            "forcing has {} time nodes, expected {}",
            rhs.len(),
            config.n_time_steps
        )));
    }
    rhs.iter()
        .map(|f| {
            check_field(op, f)?;
            Ok(f.values().to_vec())
        })
        .collect()
}

pub(crate) fn check_field(op: &TransportOperator, f: &TracerField) -> Result<(), SolverError> {
    if f.grid_id() != op.grid_id() {
        return Err(GridError::GridMismatch {
            expected: op.grid_id().raw(),
            found: f.grid_id().raw(),
        }
        .into());
    }
    if !f.is_finite() {
        return Err(SolverError::NonFinite("field"));
    }
    Ok(())
}

/// One period of `y' + B y + γ y = f` from `y(0) = y0` with the θ-scheme
///
/// ```text
/// (V/Δt + θ(A_n + γV)) y^{n+1} = (V/Δt − (1−θ)(A_n + γV)) y^n + V(θ f^{n+1} + (1−θ) f^n)
/// ```
///
/// where `A_n = V B` on step `n` and `f` is sampled at the nodes `0..N`
/// (periodically extended). Returns `y(T)`.
pub fn period_map(
    op: &TransportOperator,
    gamma: f64,
    rhs: &[TracerField],
    y0: &TracerField,
    config: &SolveConfig,
) -> Result<TracerField, SolverError> {
    check_field(op, y0)?;
    let forcing = check_forcing(op, config, rhs)?;
    let mut stepper = Stepper::new(op, gamma, config, false)?;
    let combined = stepper.combine(&forcing);
    let (y, _) = stepper.integrate(y0.values(), Some(&combined), false)?;
    Ok(TracerField::from_raw(op.grid_id(), y))
}
