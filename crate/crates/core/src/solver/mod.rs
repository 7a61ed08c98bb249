//! Periodic solutions with prescribed total mass.
//!
//! The nonlinear problem is solved by iterating the map `A`: freeze the
//! reactions at a state `z`, solve the coercive periodic problem for `y2`
//! (shift `λ`), solve the periodic sum problem `S = y1 + y2` in the zero-mass
//! subspace, shift `S` by `C/|Ω|` and recover `y1 = S_C − y2`. Every periodic
//! solve is a fixed point of the period map, found by GMRES on `(I − M) y0 = g`.

mod fixed_point;
mod oracle;
mod periodic;
mod stepper;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError, GridId, TracerField};
use crate::reactions::{BoundsReport, MassIdentityReport, ReactionError};
use crate::transport::{TransportError, TransportOperator};

pub use fixed_point::{
    equation_residuals, fixed_point_solve, residual_report, spinup, InitialState, SpinupReport,
};
pub use oracle::{
    dense_linear_oracle, two_box_oracle, two_box_problem, OracleConfig, OracleError, TwoBoxGeometry,
    TwoBoxOrbit, TwoBoxProblem,
};
pub use periodic::{
    linearized_solve, solve_linear_periodic_shifted, solve_sum_zero_mean, PeriodicSolver,
};
pub use stepper::period_map;

/// Relative tolerance on the discrete mass of the sum forcing.
pub const RHS_MASS_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Reaction(#[from] ReactionError),
    #[error("time step {step}: linear solve stopped at relative residual {residual:e}")]
    StepSolve { step: usize, residual: f64 },
    #[error("{what}: GMRES stopped after {iterations} iterations at relative residual {residual:e}")]
    Krylov {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("sum forcing at time node {node} has relative mass {relative:e}; the reaction model does not conserve mass")]
    RhsMass { node: usize, relative: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

/// Initial guess of the period-map GMRES solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KrylovStart {
    #[default]
    Zero,
    /// Uniform random values drawn from the configured seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Total mass `C` (mmol P).
    pub total_mass: f64,
    /// Period `T` (s).
    pub period: f64,
    pub n_time_steps: usize,
    /// θ ∈ [1/2, 1]; 1 is implicit Euler.
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    #[serde(default = "defaults::outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "defaults::outer_max_iter")]
    pub outer_max_iter: usize,
    /// Picard damping ω ∈ (0, 1].
    #[serde(default = "defaults::damping")]
    pub damping: f64,
    /// Relative tolerance of the period-map solves.
    #[serde(default = "defaults::inner_tol")]
    pub inner_tol: f64,
    /// Relative tolerance of the per-step linear solves.
    #[serde(default = "defaults::step_tol")]
    pub step_tol: f64,
    #[serde(default = "defaults::krylov_restart")]
    pub krylov_restart: usize,
    #[serde(default = "defaults::krylov_max_iter")]
    pub krylov_max_iter: usize,
    #[serde(default)]
    pub krylov_start: KrylovStart,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn theta() -> f64 {
        1.0
    }
    pub fn outer_tol() -> f64 {
        1e-8
    }
    pub fn outer_max_iter() -> usize {
        100
    }
    pub fn damping() -> f64 {
        0.5
    }
    pub fn inner_tol() -> f64 {
        1e-12
    }
    pub fn step_tol() -> f64 {
        1e-14
    }
    pub fn krylov_restart() -> usize {
        60
    }
    pub fn krylov_max_iter() -> usize {
        600
    }
}

impl SolveConfig {
    pub fn new(total_mass: f64, period: f64, n_time_steps: usize) -> Self {
        Self {
            total_mass,
            period,
            n_time_steps,
            theta: defaults::theta(),
            outer_tol: defaults::outer_tol(),
            outer_max_iter: defaults::outer_max_iter(),
            damping: defaults::damping(),
            inner_tol: defaults::inner_tol(),
            step_tol: defaults::step_tol(),
            krylov_restart: defaults::krylov_restart(),
            krylov_max_iter: defaults::krylov_max_iter(),
            krylov_start: KrylovStart::Zero,
            seed: 0,
        }
    }

    pub fn time_step(&self) -> f64 {
        self.period / self.n_time_steps as f64
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Config(msg));
        if !(self.total_mass.is_finite() && self.total_mass >= 0.0) {
            return bad(format!("total_mass must be finite and >= 0, got {}", self.total_mass));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return bad(format!("period must be positive, got {}", self.period));
        }
        if self.n_time_steps == 0 {
            return bad("n_time_steps must be at least 1".into());
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0.5, 1], got {}", self.theta));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        for (name, v) in [
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("step_tol", self.step_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.krylov_restart == 0 || self.krylov_max_iter == 0 || self.outer_max_iter == 0 {
            return bad("iteration limits must be at least 1".into());
        }
        Ok(())
    }

    /// Checks the configuration against a transport operator: same period and
    /// a step count that is a multiple of the operator's.
    pub(crate) fn check_operator(&self, op: &TransportOperator) -> Result<(), SolverError> {
        self.validate()?;
        if (self.period - op.period()).abs() > 1e-12 * self.period {
            return Err(SolverError::Config(format!(
                "period {} differs from the transport period {}",
                self.period,
                op.period()
            )));
        }
        if !self.n_time_steps.is_multiple_of(op.n_time_steps()) {
            return Err(SolverError::Config(format!(
                "n_time_steps {} is not a multiple of the transport sampling {}",
                self.n_time_steps,
                op.n_time_steps()
            )));
        }
        Ok(())
    }

    pub(crate) fn random_start(&self, salt: u64, scale: f64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        (0..n).map(|_| scale * rng.gen_range(-1.0..=1.0)).collect()
    }
}

/// Trajectories `y1, y2` at the time nodes `t_n = nΔt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerState {
    grid: GridId,
    period: f64,
    y1: Vec<Vec<f64>>,
    y2: Vec<Vec<f64>>,
}

impl TracerState {
    /// Spatially and temporally constant state.
    pub fn constant(grid: &Grid, period: f64, n_time_steps: usize, y1: f64, y2: f64) -> Self {
        let n = grid.n_cells();
        Self {
            grid: grid.id(),
            period,
            y1: vec![vec![y1; n]; n_time_steps + 1],
            y2: vec![vec![y2; n]; n_time_steps + 1],
        }
    }

    /// Builds a state from per-node fields; both lists need `N + 1` entries.
    pub fn from_fields(
        grid: &Grid,
        period: f64,
        y1: Vec<TracerField>,
        y2: Vec<TracerField>,
    ) -> Result<Self, SolverError> {
        if y1.len() != y2.len() || y1.len() < 2 {
            return Err(SolverError::Config(format!(
                "need matching trajectories of at least 2 nodes, got {} and {}",
                y1.len(),
                y2.len()
            )));
        }
        for f in y1.iter().chain(&y2) {
            grid.check_field(f)?;
        }
        Ok(Self {
            grid: grid.id(),
            period,
            y1: y1.into_iter().map(TracerField::into_values).collect(),
            y2: y2.into_iter().map(TracerField::into_values).collect(),
        })
    }

    pub(crate) fn from_raw(grid: GridId, period: f64, y1: Vec<Vec<f64>>, y2: Vec<Vec<f64>>) -> Self {
        Self {
            grid,
            period,
            y1,
            y2,
        }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n_time_steps(&self) -> usize {
        self.y1.len() - 1
    }

    pub fn time_step(&self) -> f64 {
        self.period / self.n_time_steps() as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.time_step()
    }

    pub fn y1(&self, node: usize) -> &[f64] {
        &self.y1[node]
    }

    pub fn y2(&self, node: usize) -> &[f64] {
        &self.y2[node]
    }

    pub fn y1_field(&self, node: usize) -> TracerField {
        TracerField::from_raw(self.grid, self.y1[node].clone())
    }

    pub fn y2_field(&self, node: usize) -> TracerField {
        TracerField::from_raw(self.grid, self.y2[node].clone())
    }

    pub fn is_finite(&self) -> bool {
        self.y1.iter().chain(&self.y2).flatten().all(|v| v.is_finite())
    }

    /// Mutable access for perturbation studies.
    pub fn y1_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.y1[node]
    }

    pub fn y2_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.y2[node]
    }

    /// Total mass at every node.
    pub fn mass_series(&self, grid: &Grid) -> Vec<f64> {
        self.y1
            .iter()
            .zip(&self.y2)
            .map(|(a, b)| grid.integrate_values(a) + grid.integrate_values(b))
            .collect()
    }

    /// Largest `|a − b|` over all nodes, cells and both components.
    pub fn max_abs_diff(&self, other: &TracerState) -> f64 {
        self.y1
            .iter()
            .chain(&self.y2)
            .zip(other.y1.iter().chain(&other.y2))
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.y1
            .iter()
            .chain(&self.y2)
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_layout(&self, grid: &Grid, n_time_steps: usize) -> Result<(), SolverError> {
        if self.grid != grid.id() {
            return Err(GridError::GridMismatch {
                expected: grid.id().raw(),
                found: self.grid.raw(),
            }
            .into());
        }
        if self.n_time_steps() != n_time_steps {
            return Err(SolverError::Config(format!(
                "state has {} time steps, configuration {}",
                self.n_time_steps(),
                n_time_steps
            )));
        }
        if !self.is_finite() {
            return Err(SolverError::NonFinite("state"));
        }
        Ok(())
    }
}

/// Normalized discrete `L²(0,T; L²(Ω))` norms: volume- and time-weighted
/// over the nodes `0..N`, divided by `T|Ω|`, so a constant `c` has norm `|c|`.
#[derive(Debug, Clone)]
pub(crate) struct Norms {
    volumes: Vec<f64>,
    total: f64,
}

impl Norms {
    pub(crate) fn new(grid: &Grid) -> Self {
        Self {
            volumes: grid.volumes(),
            total: grid.total_volume(),
        }
    }

    pub(crate) fn field_sq(&self, y: &[f64]) -> f64 {
        self.volumes.iter().zip(y).map(|(v, y)| v * y * y).sum::<f64>() / self.total
    }

    pub(crate) fn field(&self, y: &[f64]) -> f64 {
        self.field_sq(y).sqrt()
    }

    pub(crate) fn field_diff(&self, a: &[f64], b: &[f64]) -> f64 {
        (self
            .volumes
            .iter()
            .zip(a.iter().zip(b))
            .map(|(v, (x, y))| v * (x - y) * (x - y))
            .sum::<f64>()
            / self.total)
            .sqrt()
    }

    /// Norm of a pair of trajectories sampled at nodes `0..N`.
    pub(crate) fn pair(&self, y1: &[Vec<f64>], y2: &[Vec<f64>]) -> f64 {
        let n = y1.len();
        let s: f64 = (0..n).map(|k| self.field_sq(&y1[k]) + self.field_sq(&y2[k])).sum();
        (s / n as f64).sqrt()
    }

    pub(crate) fn state(&self, s: &TracerState) -> f64 {
        let n = s.n_time_steps();
        self.pair(&s.y1[..n], &s.y2[..n])
    }

    pub(crate) fn state_diff(&self, a: &TracerState, b: &TracerState) -> f64 {
        let n = a.n_time_steps();
        let s: f64 = (0..n)
            .map(|k| {
                self.field_diff(&a.y1[k], &b.y1[k]).powi(2)
                    + self.field_diff(&a.y2[k], &b.y2[k]).powi(2)
            })
            .sum();
        (s / n as f64).sqrt()
    }
}

/// Mass and periodicity of one image `A(z_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateCheck {
    /// `max_n |mass(y(t_n)) − C| / max(C, 1)`.
    pub mass_drift: f64,
    /// `max_j ‖y_j(T) − y_j(0)‖ / max(1, ‖y_j(0)‖)`.
    pub periodicity: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// `‖A(z_k) − z_k‖ / max(1, ‖z_k‖)` per outer iteration.
    pub residual_history: Vec<f64>,
    pub iterate_checks: Vec<IterateCheck>,
    pub converged: bool,
    /// Description of the initial state.
    pub initial: String,
    /// Periodicity residual of `y1` and `y2`.
    pub periodicity: [f64; 2],
    /// `mass(y(t_n)) − C` (mmol P) at every node.
    pub mass_drift: Vec<f64>,
    /// Largest `|mass drift| / max(C, 1)`.
    pub max_relative_mass_drift: f64,
    /// Norm of the semi-discrete equation residual (mmol P m⁻³ s⁻¹).
    pub equation_residual: f64,
    /// Norm of the reaction forcing `F(y)` (mmol P m⁻³ s⁻¹).
    pub forcing_norm: f64,
    /// `(step, cell, component)` of the largest pointwise equation residual.
    pub worst_residual: Option<(usize, usize, usize)>,
    pub bounds: BoundsReport,
    pub mass_identity: MassIdentityReport,
    /// One-period integrations spent, including trajectory fills.
    pub period_integrations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let last = self.residual_history.last().copied().unwrap_or(f64::NAN);
        format!(
            "converged: {}\nouter iterations: {}\nlast fixed-point residual: {:e}\n\
             periodicity residual (y1, y2): {:e}, {:e}\nmax relative mass drift: {:e}\n\
             equation residual: {:e} (forcing norm {:e})\nreaction bounds: {} ({} violations)\n\
             mass identity: {}\nperiod integrations: {}\ninitial state: {}\nwall time: {:.3} s",
            self.converged,
            self.residual_history.len(),
            last,
            self.periodicity[0],
            self.periodicity[1],
            self.max_relative_mass_drift,
            self.equation_residual,
            self.forcing_norm,
            if self.bounds.passed() { "ok" } else { "VIOLATED" },
            self.bounds.violations.len(),
            if self.mass_identity.passed { "ok" } else { "VIOLATED" },
            self.period_integrations,
            self.initial,
            self.wall_time.as_secs_f64(),
        )
    }
}
