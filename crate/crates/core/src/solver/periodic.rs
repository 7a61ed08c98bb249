//! Periodic solves through the period map and the linearized problem.

use crate::grid::{Grid, TracerField};
use crate::krylov::{gmres, GmresOptions};
use crate::reactions::ReactionModel;
use crate::transport::TransportOperator;

use super::stepper::{check_forcing, Stepper};
use super::{KrylovStart, SolveConfig, SolverError, TracerState, RHS_MASS_TOL};

/// Reusable periodic solver for one operator and configuration. Keeps the
/// time-step factorizations and warm starts between calls.
pub struct PeriodicSolver<'a> {
    op: &'a TransportOperator,
    config: SolveConfig,
    lambda: f64,
    shifted: Option<Stepper<'a>>,
    sum: Option<Stepper<'a>>,
    warm_shifted: Option<Vec<f64>>,
    warm_sum: Option<Vec<f64>>,
    /// GMRES iterations of the last shifted and sum solves.
    pub last_iterations: [usize; 2],
}

impl<'a> PeriodicSolver<'a> {
    pub fn new(op: &'a TransportOperator, lambda: f64, config: &SolveConfig) -> Result<Self, SolverError> {
        config.check_operator(op)?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(SolverError::Config(format!(
                "remineralization rate must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            op,
            config: config.clone(),
            lambda,
            shifted: None,
            sum: None,
            warm_shifted: None,
            warm_sum: None,
            last_iterations: [0; 2],
        })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    /// One-period integrations performed so far.
    pub fn period_integrations(&self) -> usize {
        self.shifted.as_ref().map_or(0, |s| s.periods) + self.sum.as_ref().map_or(0, |s| s.periods)
    }

    /// Periodic trajectory (`N + 1` nodes) of `y' + B y + λ y = f`.
    pub fn solve_shifted(&mut self, forcing: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        if self.shifted.is_none() {
            self.shifted = Some(Stepper::new(self.op, self.lambda, &self.config, false)?);
        }
        let stepper = self.shifted.as_mut().unwrap();
        let (traj, iterations) = periodic_solve(
            stepper,
            self.op.volumes(),
            &self.config,
            forcing,
            &mut self.warm_shifted,
            0x5eed_0001,
            "shifted periodic solve",
        )?;
        self.last_iterations[0] = iterations;
        Ok(traj)
    }

    /// Zero-mass periodic trajectory of `S' + B S = f`; `f` must have zero
    /// mass at every node.
    pub fn solve_sum(&mut self, forcing: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        let v = self.op.volumes();
        for (node, f) in forcing.iter().enumerate() {
            let mass: f64 = v.iter().zip(f).map(|(v, f)| v * f).sum();
            let scale: f64 = v.iter().zip(f).map(|(v, f)| v * f.abs()).sum();
            let relative = if scale > 0.0 { mass.abs() / scale } else { 0.0 };
            if relative > RHS_MASS_TOL {
                return Err(SolverError::RhsMass { node, relative });
            }
        }
        if self.sum.is_none() {
            self.sum = Some(Stepper::new(self.op, 0.0, &self.config, true)?);
        }
        let stepper = self.sum.as_mut().unwrap();
        let (traj, iterations) = periodic_solve(
            stepper,
            v,
            &self.config,
            forcing,
            &mut self.warm_sum,
            0x5eed_0002,
            "zero-mass periodic solve",
        )?;
        self.last_iterations[1] = iterations;
        Ok(traj)
    }

    /// The map `A`: solution of the problem linearized at `z`.
    pub fn linearized(
        &mut self,
        grid: &Grid,
        model: &dyn ReactionModel,
        z: &TracerState,
    ) -> Result<TracerState, SolverError> {
        z.check_layout(grid, self.config.n_time_steps)?;
        let n = self.config.n_time_steps;
        let dt = self.config.time_step();
        let mut f2 = Vec::with_capacity(n);
        let mut fs = Vec::with_capacity(n);
        for k in 0..n {
            let r = model.evaluate(grid, &z.y1_field(k), &z.y2_field(k), k as f64 * dt)?;
            let (a, b) = r.forcing(grid);
            fs.push(a.iter().zip(&b).map(|(a, b)| a + b).collect::<Vec<f64>>());
            f2.push(b);
        }
        let y2 = self.solve_shifted(&f2)?;
        let s0 = self.solve_sum(&fs)?;
        let shift = self.config.total_mass / grid.total_volume();
        let y1 = s0
            .iter()
            .zip(&y2)
            .map(|(s, y)| s.iter().zip(y).map(|(s, y)| s + shift - y).collect())
            .collect();
        Ok(TracerState::from_raw(grid.id(), self.config.period, y1, y2))
    }
}

/// Solves `(I − M) y0 = g` with volume-weighted GMRES and integrates the
/// periodic trajectory.
fn periodic_solve(
    stepper: &mut Stepper<'_>,
    volumes: &[f64],
    config: &SolveConfig,
    forcing: &[Vec<f64>],
    warm: &mut Option<Vec<f64>>,
    salt: u64,
    what: &'static str,
) -> Result<(Vec<Vec<f64>>, usize), SolverError> {
    let n_cells = stepper.n_cells();
    if forcing.len() != stepper.n_steps() || forcing.iter().any(|f| f.len() != n_cells) {
        return Err(SolverError::Config(format!("{what}: forcing has the wrong layout")));
    }
    let combined = stepper.combine(forcing);
    let mut x = match (warm.take(), config.krylov_start) {
        (Some(w), _) => w,
        (None, KrylovStart::Zero) => vec![0.0; n_cells],
        (None, KrylovStart::Random) => {
            let peak = forcing
                .iter()
                .flatten()
                .fold(0.0, |m: f64, v| m.max(v.abs()));
            config.random_start(salt, peak * config.period, n_cells)
        }
    };
    let norm = |v: &[f64]| {
        let total: f64 = volumes.iter().sum();
        (v.iter().zip(volumes).map(|(a, w)| w * a * a).sum::<f64>() / total).sqrt()
    };
    let tol = config.inner_tol;
    let mut iterations = 0;
    // Each pass integrates the forced problem from the current guess, which
    // doubles as the periodicity check and the output trajectory. GMRES then
    // solves for the correction with the homogeneous monodromy.
    loop {
        let (end, trajectory) = stepper.integrate(&x, Some(&combined), true)?;
        let start = &trajectory[0];
        let r: Vec<f64> = end.iter().zip(start).map(|(e, s)| e - s).collect();
        let (rnorm, xnorm) = (norm(&r), norm(start));
        if rnorm <= tol * xnorm.max(1.0) {
            log::debug!("{what}: {iterations} GMRES iterations, periodicity {:e}", rnorm / xnorm.max(1.0));
            *warm = Some(start.clone());
            return Ok((trajectory, iterations));
        }
        if iterations >= config.krylov_max_iter {
            return Err(SolverError::Krylov {
                what,
                iterations,
                residual: rnorm / xnorm.max(1.0),
            });
        }
        x = start.clone();
        let reference = xnorm.max(0.5 * rnorm).max(1.0);
        let opts = GmresOptions {
            tol: (0.5 * tol * reference / rnorm).min(0.5),
            max_iter: config.krylov_max_iter - iterations,
            restart: config.krylov_restart,
            verify: false,
        };
        let mut delta = vec![0.0; n_cells];
        let mut failure = None;
        let outcome = gmres(
            |v, out| {
                if failure.is_some() {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                match stepper.integrate(v, None, false) {
                    Ok((mv, _)) => {
                        for i in 0..out.len() {
                            out[i] = v[i] - mv[i];
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        out.iter_mut().for_each(|o| *o = 0.0);
                    }
                }
            },
            |_| {},
            Some(volumes),
            &r,
            &mut delta,
            &opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        iterations += outcome.iterations.max(1);
        if !outcome.converged {
            return Err(SolverError::Krylov {
                what,
                iterations,
                residual: outcome.relative_residual * rnorm / reference,
            });
        }
        x.iter_mut().zip(&delta).for_each(|(xi, di)| *xi += di);
    }
}

fn to_fields(op: &TransportOperator, traj: Vec<Vec<f64>>) -> Vec<TracerField> {
    traj.into_iter()
        .map(|v| TracerField::from_raw(op.grid_id(), v))
        .collect()
}

/// Unique periodic solution of `y2' + B y2 + λ y2 = f`, sampled at `N + 1`
/// nodes. `rhs` holds `f` at the nodes `0..N`.
pub fn solve_linear_periodic_shifted(
    op: &TransportOperator,
    lambda: f64,
    rhs: &[TracerField],
    config: &SolveConfig,
) -> Result<Vec<TracerField>, SolverError> {
    let forcing = check_forcing(op, config, rhs)?;
    let mut solver = PeriodicSolver::new(op, lambda, config)?;
    Ok(to_fields(op, solver.solve_shifted(&forcing)?))
}

/// Unique periodic solution of `S' + B S = f` with zero mass at every node.
pub fn solve_sum_zero_mean(
    op: &TransportOperator,
    rhs_sum: &[TracerField],
    config: &SolveConfig,
) -> Result<Vec<TracerField>, SolverError> {
    let forcing = check_forcing(op, config, rhs_sum)?;
    // the shift is unused by the sum solve
    let mut solver = PeriodicSolver::new(op, 1.0, config)?;
    Ok(to_fields(op, solver.solve_sum(&forcing)?))
}

/// Solution of the problem linearized at `z`: reactions frozen at `z`,
/// periodic in time, with total mass `C` at every node.
pub fn linearized_solve(
    grid: &Grid,
    z: &TracerState,
    config: &SolveConfig,
    op: &TransportOperator,
    model: &dyn ReactionModel,
) -> Result<TracerState, SolverError> {
    let mut solver = PeriodicSolver::new(op, model.lambda(), config)?;
    solver.linearized(grid, model, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, HorizontalMesh, LayerSpec};
    use crate::reactions::InertModel;
    use crate::transport::{
        assemble_transport, builtin_diffusivity, overturning_velocity, AdvectionScheme,
        DiffusivityField, MixingParams, OverturningParams, VelocityField,
    };

    fn basin(n: usize) -> (Grid, TransportOperator) {
        let mesh = HorizontalMesh {
            nx: 4,
            ny: 3,
            dx: 2e4,
            dy: 2e4,
        };
        let depths = [80.0, 300.0, 500.0, 200.0, 150.0, 600.0, 700.0, 250.0, 90.0, 400.0, 350.0, 120.0];
        let grid = build_grid(
            mesh,
            &depths,
            100.0,
            &LayerSpec::Split {
                euphotic: 2,
                aphotic: 3,
            },
        )
        .unwrap();
        let period = 3.6e6;
        let vel = overturning_velocity(
            &grid,
            &OverturningParams {
                amplitude_xz: 5.0,
                amplitude_yz: 2.0,
                seasonal: 0.3,
            },
            period,
            n,
        );
        let diff = builtin_diffusivity(
            &grid,
            &MixingParams {
                kappa_h: 500.0,
                kappa_v: 1e-3,
                euphotic_mixing: 1e-2,
            },
            period,
            n,
        )
        .unwrap();
        let op = assemble_transport(&grid, &vel, &diff, AdvectionScheme::Upwind).unwrap();
        (grid, op)
    }

    fn field(grid: &Grid, f: impl Fn(usize) -> f64) -> TracerField {
        TracerField::new(grid, (0..grid.n_cells()).map(f).collect()).unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let (grid, op) = basin(8);
        let cfg = SolveConfig::new(0.0, op.period(), 8);
        let rhs = vec![TracerField::zeros(&grid); 8];
        for y in solve_linear_periodic_shifted(&op, 1e-6, &rhs, &cfg).unwrap() {
            assert!(y.values().iter().all(|v| *v == 0.0));
        }
        for s in solve_sum_zero_mean(&op, &rhs, &cfg).unwrap() {
            assert!(s.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn constant_forcing_balances_the_shift() {
        let mesh = HorizontalMesh {
            nx: 3,
            ny: 2,
            dx: 1e3,
            dy: 1e3,
        };
        let grid = build_grid(mesh, &[50.0; 6], 20.0, &LayerSpec::Uniform { count: 5 }).unwrap();
        let n = 10;
        let vel = VelocityField::zero(&grid, 1e5, n);
        let diff = DiffusivityField::new(vec![vec![10.0; grid.interior_faces().len()]; n]).unwrap();
        let op = assemble_transport(&grid, &vel, &diff, AdvectionScheme::Upwind).unwrap();
        let cfg = SolveConfig::new(0.0, 1e5, n);
        let (f, lambda) = (3e-7, 2e-5);
        let rhs = vec![TracerField::constant(&grid, f); n];
        for y in solve_linear_periodic_shifted(&op, lambda, &rhs, &cfg).unwrap() {
            for v in y.values() {
                assert!((v - f / lambda).abs() < 1e-12 * f / lambda, "{v}");
            }
        }
    }

    #[test]
    fn shifted_solve_is_periodic_and_start_independent() {
        let (grid, op) = basin(12);
        let mut cfg = SolveConfig::new(0.0, op.period(), 12);
        let rhs: Vec<TracerField> = (0..12)
            .map(|n| field(&grid, |i| ((i * 7 + n * 3) % 11) as f64 * 1e-7 - 4e-7))
            .collect();
        let a = solve_linear_periodic_shifted(&op, 5e-7, &rhs, &cfg).unwrap();
        cfg.krylov_start = KrylovStart::Random;
        cfg.seed = 99;
        let b = solve_linear_periodic_shifted(&op, 5e-7, &rhs, &cfg).unwrap();
        let scale = a.iter().flat_map(|f| f.values()).fold(0.0, |m: f64, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() <= 1e-10 * scale);
            }
        }
        let (first, last) = (a[0].values(), a[12].values());
        for (p, q) in first.iter().zip(last) {
            assert!((p - q).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn sum_solve_stays_in_zero_mass_subspace() {
        let (grid, op) = basin(8);
        let cfg = SolveConfig::new(0.0, op.period(), 8);
        let rhs: Vec<TracerField> = (0..8)
            .map(|n| {
                let f = field(&grid, |i| (((i + n) * 5) % 9) as f64 - 4.0 + n as f64);
                grid.project_zero_mass(&f).unwrap()
            })
            .collect();
        let s = solve_sum_zero_mean(&op, &rhs, &cfg).unwrap();
        let vols = grid.volumes();
        let scale = s
            .iter()
            .map(|f| vols.iter().zip(f.values()).map(|(v, y)| v * y.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        for f in &s {
            assert!(grid.integrate(f).unwrap().abs() <= 1e-11 * scale);
        }
        assert!(s.iter().any(|f| f.values().iter().any(|v| v.abs() > 1e-3)));
    }

    #[test]
    fn sum_solve_rejects_massive_forcing() {
        let (grid, op) = basin(4);
        let cfg = SolveConfig::new(0.0, op.period(), 4);
        let mut rhs = vec![TracerField::zeros(&grid); 4];
        rhs[2] = TracerField::constant(&grid, 1.0);
        assert!(matches!(
            solve_sum_zero_mean(&op, &rhs, &cfg),
            Err(SolverError::RhsMass { node: 2, .. })
        ));
    }

    #[test]
    fn inert_model_gives_constant_state() {
        let (grid, op) = basin(6);
        let c = 4.2e12;
        let cfg = SolveConfig::new(c, op.period(), 6);
        let z = TracerState::constant(&grid, op.period(), 6, 1.0, 0.5);
        let y = linearized_solve(&grid, &z, &cfg, &op, &InertModel { lambda: 1e-7 }).unwrap();
        let mean = c / grid.total_volume();
        for k in 0..=6 {
            assert!(y.y2(k).iter().all(|v| *v == 0.0));
            assert!(y.y1(k).iter().all(|v| (v - mean).abs() <= 1e-14 * mean));
        }
        let zero = SolveConfig::new(0.0, op.period(), 6);
        let y = linearized_solve(&grid, &z, &zero, &op, &InertModel { lambda: 1e-7 }).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let (grid, op) = basin(4);
        let cfg = SolveConfig::new(0.0, op.period(), 4);
        let rhs = vec![TracerField::zeros(&grid); 4];
        assert!(matches!(
            solve_linear_periodic_shifted(&op, 0.0, &rhs, &cfg),
            Err(SolverError::Config(_))
        ));
    }
}
