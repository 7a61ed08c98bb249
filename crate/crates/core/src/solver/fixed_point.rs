//! Outer fixed-point iteration, residual diagnostics and naive spin-up.

use std::time::Instant;

use crate::grid::{Grid, TracerField};
use crate::reactions::{check_bounds, check_mass_identity, ReactionModel, Sample};
use crate::transport::TransportOperator;

use super::periodic::PeriodicSolver;
use super::stepper::Stepper;
use super::{IterateCheck, Norms, SolveConfig, SolveReport, SolverError, TracerState};

/// Starting point of the outer iteration.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// `y1 ≡ C/|Ω|`, `y2 ≡ 0`.
    Constant,
    State(TracerState),
}

impl InitialState {
    fn describe(&self) -> String {
        match self {
            InitialState::Constant => "constant (C/|Ω|, 0)".into(),
            InitialState::State(s) => format!("given state with {} time steps", s.n_time_steps()),
        }
    }

    fn build(&self, grid: &Grid, config: &SolveConfig) -> Result<TracerState, SolverError> {
        match self {
            InitialState::Constant => Ok(TracerState::constant(
                grid,
                config.period,
                config.n_time_steps,
                config.total_mass / grid.total_volume(),
                0.0,
            )),
            InitialState::State(s) => {
                s.check_layout(grid, config.n_time_steps)?;
                Ok(s.clone())
            }
        }
    }
}

fn iterate_check(grid: &Grid, norms: &Norms, y: &TracerState, total_mass: f64) -> IterateCheck {
    let scale = total_mass.max(1.0);
    let mass_drift = y
        .mass_series(grid)
        .iter()
        .map(|m| (m - total_mass).abs() / scale)
        .fold(0.0, f64::max);
    let n = y.n_time_steps();
    let per = |a: &[f64], b: &[f64]| norms.field_diff(a, b) / norms.field(a).max(1.0);
    IterateCheck {
        mass_drift,
        periodicity: per(y.y1(0), y.y1(n)).max(per(y.y2(0), y.y2(n))),
    }
}

/// Damped Picard iteration `z_{k+1} = (1−ω) z_k + ω A(z_k)`.
///
/// Stops when `‖A(z_k) − z_k‖ ≤ outer_tol · max(1, ‖z_k‖)` and returns the
/// image `A(z_k)`, which satisfies the mass and periodicity constraints
/// exactly. Non-convergence is reported with `converged = false`.
pub fn fixed_point_solve(
    grid: &Grid,
    config: &SolveConfig,
    op: &TransportOperator,
    model: &dyn ReactionModel,
    init: &InitialState,
) -> Result<(TracerState, SolveReport), SolverError> {
    let start = Instant::now();
    let mut solver = PeriodicSolver::new(op, model.lambda(), config)?;
    let norms = Norms::new(grid);
    let mut z = init.build(grid, config)?;
    let mut history = Vec::new();
    let mut checks = Vec::new();
    let mut converged = false;
    let y = loop {
        let y = solver.linearized(grid, model, &z)?;
        let residual = norms.state_diff(&y, &z) / norms.state(&z).max(1.0);
        history.push(residual);
        checks.push(iterate_check(grid, &norms, &y, config.total_mass));
        log::info!(
            "outer iteration {}: residual {:e} (GMRES {:?})",
            history.len(),
            residual,
            solver.last_iterations
        );
        if residual <= config.outer_tol {
            converged = true;
            break y;
        }
        if !residual.is_finite() || history.len() >= config.outer_max_iter {
            break y;
        }
        let w = config.damping;
        z = TracerState::from_raw(
            grid.id(),
            config.period,
            blend(&z.y1, &y.y1, w),
            blend(&z.y2, &y.y2, w),
        );
    };
    let mut report = residual_report(grid, &y, op, model, config)?;
    report.residual_history = history;
    report.iterate_checks = checks;
    report.converged = converged;
    report.initial = init.describe();
    report.period_integrations = solver.period_integrations();
    report.wall_time = start.elapsed();
    Ok((y, report))
}

fn blend(z: &[Vec<f64>], y: &[Vec<f64>], w: f64) -> Vec<Vec<f64>> {
    z.iter()
        .zip(y)
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| (1.0 - w) * a + w * b).collect())
        .collect()
}

/// Reaction forcing `F(y)` at every node `0..=N`.
fn forcing_series(
    grid: &Grid,
    model: &dyn ReactionModel,
    y: &TracerState,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, SolverError> {
    (0..=y.n_time_steps())
        .map(|k| {
            let r = model.evaluate(grid, &y.y1_field(k), &y.y2_field(k), y.time(k))?;
            Ok(r.forcing(grid))
        })
        .collect()
}

/// Pointwise residuals of the fully discrete nonlinear equations, in
/// concentration rate units, per step `n` (`0..N`) and component:
///
/// ```text
/// r1 = (y1^{n+1} − y1^n)/Δt + V⁻¹A_n(θ y1^{n+1} + (1−θ) y1^n) − θ(λ y2 + F1)^{n+1} − (1−θ)(λ y2 + F1)^n
/// r2 = (y2^{n+1} − y2^n)/Δt + V⁻¹A_n(θ y2^{n+1} + (1−θ) y2^n) + θ(λ y2 − F2)^{n+1} + (1−θ)(λ y2 − F2)^n
/// ```
pub fn equation_residuals(
    grid: &Grid,
    y: &TracerState,
    op: &TransportOperator,
    model: &dyn ReactionModel,
    config: &SolveConfig,
) -> Result<Vec<[Vec<f64>; 2]>, SolverError> {
    config.check_operator(op)?;
    y.check_layout(grid, config.n_time_steps)?;
    let forcing = forcing_series(grid, model, y)?;
    Ok(residuals_with(y, op, model.lambda(), config, &forcing))
}

fn residuals_with(
    y: &TracerState,
    op: &TransportOperator,
    lambda: f64,
    config: &SolveConfig,
    forcing: &[(Vec<f64>, Vec<f64>)],
) -> Vec<[Vec<f64>; 2]> {
    let n = config.n_time_steps;
    let (dt, th) = (config.time_step(), config.theta);
    let v = op.volumes();
    let nc = v.len();
    let mut mixed = vec![0.0; nc];
    let mut transported = vec![0.0; nc];
    (0..n)
        .map(|k| {
            let a = op.step_matrix(k * op.n_time_steps() / n);
            let mut out = [vec![0.0; nc], vec![0.0; nc]];
            for (comp, traj) in [&y.y1, &y.y2].into_iter().enumerate() {
                for i in 0..nc {
                    mixed[i] = th * traj[k + 1][i] + (1.0 - th) * traj[k][i];
                }
                a.mul_vec(&mixed, &mut transported);
                for i in 0..nc {
                    let tend = (traj[k + 1][i] - traj[k][i]) / dt + transported[i] / v[i];
                    let src = |m: usize| {
                        let (f1, f2) = &forcing[m];
                        if comp == 0 {
                            lambda * y.y2[m][i] + f1[i]
                        } else {
                            f2[i] - lambda * y.y2[m][i]
                        }
                    };
                    out[comp][i] = tend - th * src(k + 1) - (1.0 - th) * src(k);
                }
            }
            out
        })
        .collect()
}

/// Periodicity, mass drift, equation residual and reaction checks of a state.
pub fn residual_report(
    grid: &Grid,
    y: &TracerState,
    op: &TransportOperator,
    model: &dyn ReactionModel,
    config: &SolveConfig,
) -> Result<SolveReport, SolverError> {
    let start = Instant::now();
    config.check_operator(op)?;
    y.check_layout(grid, config.n_time_steps)?;
    let norms = Norms::new(grid);
    let n = config.n_time_steps;
    let forcing = forcing_series(grid, model, y)?;
    let residuals = residuals_with(y, op, model.lambda(), config, &forcing);

    let mut worst = None;
    let mut worst_value = 0.0;
    let mut sq = 0.0;
    for (k, r) in residuals.iter().enumerate() {
        for (comp, values) in r.iter().enumerate() {
            sq += norms.field_sq(values);
            for (i, v) in values.iter().enumerate() {
                if v.abs() > worst_value {
                    worst_value = v.abs();
                    worst = Some((k, i, comp));
                }
            }
        }
    }
    let equation_residual = (sq / n as f64).sqrt();
    let f1: Vec<Vec<f64>> = forcing[..n].iter().map(|f| f.0.clone()).collect();
    let f2: Vec<Vec<f64>> = forcing[..n].iter().map(|f| f.1.clone()).collect();
    let forcing_norm = norms.pair(&f1, &f2);

    let masses = y.mass_series(grid);
    let mass_drift: Vec<f64> = masses.iter().map(|m| m - config.total_mass).collect();
    let check = iterate_check(grid, &norms, y, config.total_mass);
    let per = |a: &[f64], b: &[f64]| norms.field_diff(a, b) / norms.field(a).max(1.0);

    let samples: Vec<Sample> = (0..n)
        .map(|k| Sample {
            y1: y.y1_field(k),
            y2: y.y2_field(k),
            t: y.time(k),
        })
        .collect();
    let bounds = check_bounds(model, grid, &samples)?;
    let mass_identity = check_mass_identity(model, grid, &samples)?;

    Ok(SolveReport {
        residual_history: Vec::new(),
        iterate_checks: Vec::new(),
        converged: false,
        initial: String::new(),
        periodicity: [per(y.y1(0), y.y1(n)), per(y.y2(0), y.y2(n))],
        mass_drift,
        max_relative_mass_drift: check.mass_drift,
        equation_residual,
        forcing_norm,
        worst_residual: worst,
        bounds,
        mass_identity,
        period_integrations: 0,
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone)]
pub struct SpinupReport {
    /// Periodicity residual `‖y(T) − y(0)‖ / max(1, ‖y(0)‖)` after each period.
    pub periodicity_history: Vec<f64>,
    pub periods: usize,
    pub converged: bool,
    /// Trajectory of the last integrated period.
    pub state: TracerState,
}

/// Naive spin-up: integrates the nonlinear discrete equations period after
/// period until the periodicity residual drops to `target` or `max_periods`
/// is reached. Each step is solved by a Picard iteration on the reactions.
pub fn spinup(
    grid: &Grid,
    config: &SolveConfig,
    op: &TransportOperator,
    model: &dyn ReactionModel,
    init: &InitialState,
    target: f64,
    max_periods: usize,
) -> Result<SpinupReport, SolverError> {
    let lambda = model.lambda();
    let shifted = Stepper::new(op, lambda, config, false)?;
    let plain = Stepper::new(op, 0.0, config, false)?;
    let state = init.build(grid, config)?;
    let norms = Norms::new(grid);
    let (n, dt, th) = (config.n_time_steps, config.time_step(), config.theta);
    let nc = grid.n_cells();
    let mut y1 = state.y1(0).to_vec();
    let mut y2 = state.y2(0).to_vec();
    let mut history = Vec::new();
    let forcing_at = |a: &[f64], b: &[f64], t: f64| -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let r = model.evaluate(
            grid,
            &TracerField::from_raw(grid.id(), a.to_vec()),
            &TracerField::from_raw(grid.id(), b.to_vec()),
            t,
        )?;
        Ok(r.forcing(grid))
    };
    loop {
        let mut t1 = vec![y1.clone()];
        let mut t2 = vec![y2.clone()];
        let (mut f1, mut f2) = forcing_at(&y1, &y2, 0.0)?;
        for k in 0..n {
            let t_next = (k + 1) as f64 * dt;
            let (mut n1, mut n2) = (y1.clone(), y2.clone());
            let (mut g1, mut g2) = (f1.clone(), f2.clone());
            for sweep in 0.. {
                let c2: Vec<f64> = (0..nc).map(|i| th * g2[i] + (1.0 - th) * f2[i]).collect();
                let mut m2 = vec![0.0; nc];
                shifted.step(k, &y2, Some(&c2), &mut m2)?;
                let c1: Vec<f64> = (0..nc)
                    .map(|i| th * (g1[i] + lambda * m2[i]) + (1.0 - th) * (f1[i] + lambda * y2[i]))
                    .collect();
                let mut m1 = vec![0.0; nc];
                plain.step(k, &y1, Some(&c1), &mut m1)?;
                let change = norms.field_diff(&m1, &n1) + norms.field_diff(&m2, &n2);
                let size = (norms.field(&m1) + norms.field(&m2)).max(1.0);
                n1 = m1;
                n2 = m2;
                (g1, g2) = forcing_at(&n1, &n2, t_next)?;
                if change <= 1e-14 * size || sweep >= 50 {
                    break;
                }
            }
            y1 = n1;
            y2 = n2;
            f1 = g1;
            f2 = g2;
            t1.push(y1.clone());
            t2.push(y2.clone());
        }
        let per = (norms.field_diff(&t1[0], &t1[n]).powi(2) + norms.field_diff(&t2[0], &t2[n]).powi(2))
            .sqrt()
            / (norms.field(&t1[0]).powi(2) + norms.field(&t2[0]).powi(2)).sqrt().max(1.0);
        history.push(per);
        let converged = per <= target;
        if converged || history.len() >= max_periods || !per.is_finite() {
            return Ok(SpinupReport {
                periods: history.len(),
                periodicity_history: history,
                converged,
                state: TracerState::from_raw(grid.id(), config.period, t1, t2),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, HorizontalMesh, LayerSpec};
    use crate::reactions::{InertModel, Insolation, Po4Dop, Po4DopParams};
    use crate::transport::{
        assemble_transport, builtin_diffusivity, overturning_velocity, AdvectionScheme, MixingParams,
        OverturningParams,
    };

    const YEAR: f64 = 3.1104e7;

    fn setup(n: usize) -> (Grid, TransportOperator) {
        let mesh = HorizontalMesh {
            nx: 3,
            ny: 3,
            dx: 5e4,
            dy: 5e4,
        };
        let depths = [80.0, 400.0, 700.0, 300.0, 900.0, 600.0, 150.0, 500.0, 250.0];
        let grid = build_grid(
            mesh,
            &depths,
            100.0,
            &LayerSpec::Split {
                euphotic: 2,
                aphotic: 4,
            },
        )
        .unwrap();
        let vel = overturning_velocity(
            &grid,
            &OverturningParams {
                amplitude_xz: 10.0,
                amplitude_yz: 5.0,
                seasonal: 0.2,
            },
            YEAR,
            n,
        );
        let diff = builtin_diffusivity(
            &grid,
            &MixingParams {
                kappa_h: 1000.0,
                kappa_v: 5e-3,
                euphotic_mixing: 5e-2,
            },
            YEAR,
            n,
        )
        .unwrap();
        let op = assemble_transport(&grid, &vel, &diff, AdvectionScheme::Upwind).unwrap();
        (grid, op)
    }

    fn po4dop(grid: &Grid, i0: f64) -> Po4Dop {
        Po4Dop::new(
            grid,
            Po4DopParams {
                alpha: 5e-9,
                k_p: 0.5,
                k_i: 30.0,
                nu: 0.67,
                beta: 0.858,
                lambda: 6e-8,
            },
            Insolation::Analytic {
                i0,
                k_w: 0.04,
                period: YEAR,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_mass_converges_immediately_to_zero() {
        let (grid, op) = setup(12);
        let cfg = SolveConfig::new(0.0, YEAR, 12);
        let model = po4dop(&grid, 200.0);
        let (y, report) = fixed_point_solve(&grid, &cfg, &op, &model, &InitialState::Constant).unwrap();
        assert!(report.converged);
        assert_eq!(report.residual_history.len(), 1);
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn darkness_gives_constant_nutrient() {
        let (grid, op) = setup(12);
        let c = 2.0 * grid.total_volume();
        let cfg = SolveConfig::new(c, YEAR, 12);
        let model = po4dop(&grid, 0.0);
        let (y, report) = fixed_point_solve(&grid, &cfg, &op, &model, &InitialState::Constant).unwrap();
        assert!(report.converged);
        for k in 0..=12 {
            assert!(y.y2(k).iter().all(|v| *v == 0.0));
            assert!(y.y1(k).iter().all(|v| (v - 2.0).abs() < 1e-12));
        }
        assert!(report.equation_residual <= 1e-12);
    }

    #[test]
    fn lit_run_converges_with_conserved_mass() {
        let (grid, op) = setup(24);
        let c = 2.0 * grid.total_volume();
        let cfg = SolveConfig::new(c, YEAR, 24);
        let model = po4dop(&grid, 200.0);
        let (y, report) = fixed_point_solve(&grid, &cfg, &op, &model, &InitialState::Constant).unwrap();
        assert!(report.converged, "{}", report.summary());
        assert!(report.max_relative_mass_drift <= 1e-10);
        assert!(report.periodicity[0] <= 1e-8 && report.periodicity[1] <= 1e-8);
        assert!(report.equation_residual <= 10.0 * cfg.outer_tol * report.forcing_norm);
        assert!(report.bounds.passed() && report.mass_identity.passed);
        let y2_max = (0..=24).flat_map(|k| y.y2(k).to_vec()).fold(0.0, |m: f64, v| m.max(v.abs()));
        assert!(y2_max > 1e-8 * 2.0);
        for c in &report.iterate_checks {
            assert!(c.mass_drift <= 1e-10 && c.periodicity <= 1e-8);
        }
    }

    #[test]
    fn bumped_cell_localizes_the_residual() {
        let (grid, op) = setup(12);
        let cfg = SolveConfig::new(2.0 * grid.total_volume(), YEAR, 12);
        let model = po4dop(&grid, 200.0);
        let (mut y, _) = fixed_point_solve(&grid, &cfg, &op, &model, &InitialState::Constant).unwrap();
        let (node, cell) = (5, 17);
        y.y1_mut(node)[cell] += 0.1;
        let report = residual_report(&grid, &y, &op, &model, &cfg).unwrap();
        let (step, at, comp) = report.worst_residual.unwrap();
        assert_eq!((at, comp), (cell, 0));
        assert!(step == node - 1 || step == node);
    }

    #[test]
    fn exact_constant_solution_has_tiny_residuals() {
        let (grid, op) = setup(6);
        let c = 3.0 * grid.total_volume();
        let cfg = SolveConfig::new(c, YEAR, 6);
        let y = TracerState::constant(&grid, YEAR, 6, 3.0, 0.0);
        let report = residual_report(&grid, &y, &op, &InertModel { lambda: 1e-7 }, &cfg).unwrap();
        assert!(report.equation_residual <= 1e-12);
        assert!(report.max_relative_mass_drift <= 1e-12);
        assert_eq!(report.periodicity, [0.0, 0.0]);
    }

    #[test]
    fn spinup_reaches_the_same_orbit() {
        let (grid, op) = setup(12);
        let c = 2.0 * grid.total_volume();
        let mut cfg = SolveConfig::new(c, YEAR, 12);
        cfg.outer_tol = 1e-10;
        let model = po4dop(&grid, 200.0);
        let (y, _) = fixed_point_solve(&grid, &cfg, &op, &model, &InitialState::Constant).unwrap();
        let spin = spinup(&grid, &cfg, &op, &model, &InitialState::Constant, 1e-9, 3000).unwrap();
        assert!(spin.converged, "{:?}", spin.periodicity_history.last());
        assert!(spin.state.max_abs_diff(&y) <= 1e-6 * y.max_abs());
        let drift = spin
            .state
            .mass_series(&grid)
            .iter()
            .map(|m| (m - c).abs() / c)
            .fold(0.0, f64::max);
        assert!(drift <= 1e-10);
    }
}
