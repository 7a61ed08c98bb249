//! Subcommands. Each returns [`Status::Success`] or [`Status::Failure`];
//! configuration and I/O problems surface as errors.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndop_core::grid::TracerField;
use ndop_core::reactions::{check_bounds, check_mass_identity, BoundTerm, Sample};
use ndop_core::solver::{
    fixed_point_solve, spinup, two_box_oracle, InitialState, OracleConfig, SolveReport, TracerState, TwoBoxOrbit,
};
use ndop_core::transport::{assemble_transport, check_operator_properties, verify_velocity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, RunConfig};
use crate::output;
use crate::plot::{self, Chart, Series};
use crate::setup;

/// Largest accepted pointwise relative difference between solver and oracle.
pub const ORACLE_TOL: f64 = 1e-7;

const DAY: f64 = 86400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Non-convergence or a failed check; outputs are still written.
    Failure,
}

impl Status {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Status::Success
        } else {
            Status::Failure
        }
    }
}

/// Output directory handle.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn svg(&self, name: &str, charts: &[Chart]) -> Result<()> {
        output::write_text(&self.path(name), &plot::render(charts))
    }
}

fn write_config(out: &Out, cfg: &RunConfig) -> Result<()> {
    output::write_text(&out.path("config.toml"), &cfg.to_toml()?)
}

fn line(label: &str, points: Vec<(f64, f64)>) -> Series {
    Series {
        label: label.into(),
        points,
    }
}

fn solve_outputs(out: &Out, cfg: &RunConfig, grid: &ndop_core::grid::Grid, y: &TracerState, r: &SolveReport) -> Result<()> {
    output::write_grid(&out.path("grid.csv"), grid)?;
    output::write_trajectory(&out.path("trajectory.csv"), y)?;
    output::write_history(&out.path("history.csv"), r)?;
    output::write_mass(&out.path("mass.csv"), grid, y, cfg.solver.total_mass)?;
    output::write_report(&out.path("report.csv"), r, cfg.reproducible)?;
    output::write_text(&out.path("report.txt"), &format!("{}\n", r.summary()))?;
    output::write_snapshot(&out.path("snapshot.bin"), y)?;
    let profiles = output::horizontal_profiles(grid, y, 20);
    output::write_profiles(&out.path("profiles.csv"), &profiles)?;

    let c = cfg.solver.total_mass;
    let drift: Vec<(f64, f64)> = y
        .mass_series(grid)
        .iter()
        .enumerate()
        .map(|(k, m)| (y.time(k) / DAY, (m - c) / c.max(1.0)))
        .collect();
    out.svg(
        "mass_drift.svg",
        &[Chart {
            title: "Relative mass drift".into(),
            x_label: "time (days)".into(),
            y_label: "(mass − C) / max(C, 1)".into(),
            series: vec![line("drift", drift)],
            ..Chart::default()
        }],
    )?;
    let hist = |v: Vec<f64>| v.into_iter().enumerate().map(|(k, r)| ((k + 1) as f64, r)).collect();
    out.svg(
        "residuals.svg",
        &[Chart {
            title: "Fixed-point residual".into(),
            x_label: "outer iteration".into(),
            y_label: "‖A(z) − z‖ / max(1, ‖z‖)".into(),
            log_y: true,
            series: vec![line("residual", hist(r.residual_history.clone()))],
            ..Chart::default()
        }],
    )?;
    let profile = |title: &str, pick: fn(&(f64, f64, f64)) -> f64| Chart {
        title: title.into(),
        x_label: "mmol P m⁻³".into(),
        y_label: "depth (m)".into(),
        invert_y: true,
        series: vec![line(title, profiles.iter().map(|p| (pick(p), p.0)).collect())],
        ..Chart::default()
    };
    out.svg(
        "profiles.svg",
        &[
            profile("Mean phosphate y1", |p| p.1),
            profile("Mean DOP y2", |p| p.2),
        ],
    )
}

/// Periodic solve with the configured total mass. `restart` names a
/// snapshot used as the initial state.
pub fn solve(cfg: &RunConfig, out_dir: &Path, restart: Option<&Path>) -> Result<Status> {
    let p = setup::problem(cfg)?;
    let out = Out::create(out_dir)?;
    write_config(&out, cfg)?;
    let init = match restart {
        Some(path) => InitialState::State(output::read_snapshot(path, &p.grid)?),
        None => InitialState::Constant,
    };
    let (y, report) = match fixed_point_solve(&p.grid, &cfg.solver, &p.op, p.model.as_ref(), &init) {
        Ok(r) => r,
        Err(e) => {
            log::error!("solve failed: {e}");
            output::write_text(&out.path("report.txt"), &format!("solve failed: {e}\n"))?;
            return Ok(Status::Failure);
        }
    };
    solve_outputs(&out, cfg, &p.grid, &y, &report)?;
    log::info!("{}", report.summary());
    if !report.converged {
        log::warn!(
            "no convergence after {} outer iterations",
            report.residual_history.len()
        );
    }
    Ok(Status::from_ok(report.converged))
}

/// Report-only structural checks of the configured velocity, operator and
/// reactions.
pub fn verify(cfg: &RunConfig, out_dir: &Path) -> Result<Status> {
    let parts = setup::parts(cfg)?;
    let out = Out::create(out_dir)?;
    write_config(&out, cfg)?;
    let grid = &parts.grid;
    let mut checks: Vec<(&str, bool, &str, f64)> = Vec::new();

    let vel = verify_velocity(grid, &parts.velocity);
    checks.push(("velocity_divergence", vel.passed, "max_divergence_rel", vel.max_divergence));
    let mut w = csv::Writer::from_path(out.path("operator.csv"))?;
    w.write_record([
        "time_index",
        "boundary_flux_max_m3_per_s",
        "column_sum_rel",
        "constant_kernel_rel",
        "min_quadratic_rel",
        "min_gradient_margin_rel",
        "norm_inf_per_s",
    ])?;
    if vel.passed {
        let op = assemble_transport(grid, &parts.velocity, &parts.diffusivity, cfg.transport.scheme)?;
        let rep = check_operator_properties(&op, grid, 20, cfg.solver.seed);
        let worst = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
        checks.push(("operator_conservation", rep.conservation_ok, "column_sum_rel", worst(&rep.column_sum, f64::max, 0.0)));
        checks.push(("operator_constant_kernel", rep.kernel_ok, "row_sum_rel", worst(&rep.constant_kernel, f64::max, 0.0)));
        checks.push(("operator_monotone", rep.monotone_ok, "min_quadratic_rel", worst(&rep.min_quadratic, f64::min, f64::INFINITY)));
        checks.push((
            "operator_gradient_bound",
            rep.gradient_bound_ok,
            "min_gradient_margin_rel",
            worst(&rep.min_gradient_margin, f64::min, f64::INFINITY),
        ));
        for n in 0..rep.norms.len() {
            w.serialize((
                n,
                vel.boundary_flux_max[n % vel.boundary_flux_max.len()],
                rep.column_sum[n],
                rep.constant_kernel[n],
                rep.min_quadratic[n],
                rep.min_gradient_margin[n],
                rep.norms[n],
            ))?;
        }
    } else {
        log::warn!("velocity check failed ({}); operator checks skipped", vel.summary());
        checks.push(("operator_assembly", false, "skipped", f64::NAN));
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.path("velocity_flagged.csv"))?;
    w.write_record(["time_index", "cell", "divergence_rel"])?;
    for &(n, cell) in &vel.flagged {
        w.serialize((n, cell, vel.divergence[n][cell]))?;
    }
    w.flush()?;

    // states: zero, the constant mean, and random perturbations of it
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed);
    let n_cells = grid.n_cells();
    let mean = cfg.solver.total_mass / grid.total_volume();
    let amp = mean.max(1.0);
    let period = cfg.solver.period;
    let mut samples = vec![Sample {
        y1: TracerField::zeros(grid),
        y2: TracerField::zeros(grid),
        t: 0.0,
    }];
    for s in 0..24 {
        let t = period * s as f64 / 24.0;
        let (y1, y2): (Vec<f64>, Vec<f64>) = if s == 0 {
            (vec![mean; n_cells], vec![0.0; n_cells])
        } else {
            (0..n_cells)
                .map(|_| (mean + amp * rng.gen_range(-1.0..1.0), 0.5 * amp * rng.gen_range(-1.0..1.0)))
                .unzip()
        };
        samples.push(Sample {
            y1: TracerField::new(grid, y1)?,
            y2: TracerField::new(grid, y2)?,
            t,
        });
    }
    let model = parts.model.as_ref();
    let bounds = check_bounds(model, grid, &samples)?;
    let mass = check_mass_identity(model, grid, &samples)?;
    checks.push(("reaction_bounds", bounds.passed(), "max_ratio_rel", bounds.max_ratio));
    checks.push((
        "reaction_mass_identity",
        mass.passed,
        "max_residual_rel",
        mass.relative.iter().copied().fold(0.0, f64::max),
    ));

    let mut w = csv::Writer::from_path(out.path("reaction_mass.csv"))?;
    w.write_record(["sample", "time_s", "residual_mmolP_per_s", "residual_rel"])?;
    for (k, (r, rel)) in mass.residuals.iter().zip(&mass.relative).enumerate() {
        w.serialize((k, samples[k].t, r, rel))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.path("bound_violations.csv"))?;
    w.write_record(["sample", "term", "location", "value", "bound", "unit"])?;
    for v in &bounds.violations {
        let (term, unit) = match v.term {
            BoundTerm::D1 => ("d1", "mmolP_per_m3_per_s"),
            BoundTerm::D2 => ("d2", "mmolP_per_m3_per_s"),
            BoundTerm::B1 => ("b1", "mmolP_per_m2_per_s"),
            BoundTerm::B2 => ("b2", "mmolP_per_m2_per_s"),
        };
        w.serialize((v.sample, term, v.location, v.value, v.bound, unit))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.path("verify.csv"))?;
    w.write_record(["check", "passed", "metric", "value"])?;
    for c in &checks {
        w.serialize(c)?;
    }
    w.flush()?;
    let all = checks.iter().all(|c| c.1);
    for c in &checks {
        log::info!("{}: {} ({} = {:e})", c.0, if c.1 { "pass" } else { "FAIL" }, c.2, c.3);
    }
    Ok(Status::from_ok(all))
}

fn write_orbit(path: &Path, orbit: &TwoBoxOrbit) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "node",
        "time_s",
        "y1_upper_mmolP_per_m3",
        "y1_lower_mmolP_per_m3",
        "y2_upper_mmolP_per_m3",
        "y2_lower_mmolP_per_m3",
        "mass_mmolP",
    ])?;
    for (k, (u, t)) in orbit.states.iter().zip(&orbit.times).enumerate() {
        w.serialize((k, t, u[0], u[1], u[2], u[3], orbit.mass[k]))?;
    }
    w.flush()?;
    Ok(())
}

/// Solver against the independent two-box integrator on the same time grid.
pub fn oracle(cfg: &RunConfig, out_dir: &Path) -> Result<Status> {
    let geom = setup::two_box_geometry(cfg)?;
    let ModelConfig::Po4Dop { params, .. } = &cfg.model else {
        unreachable!("checked by two_box_geometry");
    };
    let p = setup::problem(cfg)?;
    let out = Out::create(out_dir)?;
    write_config(&out, cfg)?;
    let light = geom.light(cfg.solver.period);
    let orbit = two_box_oracle(
        params,
        geom.volumes(),
        geom.exchange(),
        &light,
        &OracleConfig::from_solve_config(&cfg.solver),
    )?;
    write_orbit(&out.path("oracle_orbit.csv"), &orbit)?;
    let (y, report) = fixed_point_solve(&p.grid, &cfg.solver, &p.op, p.model.as_ref(), &InitialState::Constant)?;
    let solver_orbit = TwoBoxOrbit {
        times: (0..=y.n_time_steps()).map(|k| y.time(k)).collect(),
        states: (0..=y.n_time_steps())
            .map(|k| [y.y1(k)[0], y.y1(k)[1], y.y2(k)[0], y.y2(k)[1]])
            .collect(),
        mass: y.mass_series(&p.grid),
        newton_history: Vec::new(),
    };
    write_orbit(&out.path("solver_orbit.csv"), &solver_orbit)?;
    let diff = orbit.max_relative_difference(&y);
    let ok = report.converged && diff <= ORACLE_TOL;

    let mut w = csv::Writer::from_path(out.path("oracle.csv"))?;
    w.write_record(["quantity", "value", "unit"])?;
    w.serialize(("max_relative_difference", diff, "rel"))?;
    w.serialize(("tolerance", ORACLE_TOL, "rel"))?;
    w.serialize(("solver_converged", report.converged, "bool"))?;
    w.serialize(("solver_outer_iterations", report.residual_history.len(), "count"))?;
    w.serialize(("oracle_newton_steps", orbit.newton_history.len(), "count"))?;
    w.flush()?;

    let series = |o: &TwoBoxOrbit, comp: usize| o.times.iter().zip(&o.states).map(|(t, u)| (t / DAY, u[comp])).collect();
    let chart = |title: &str, comp: usize| Chart {
        title: title.into(),
        x_label: "time (days)".into(),
        y_label: "mmol P m⁻³".into(),
        series: vec![line("oracle", series(&orbit, comp)), line("solver", series(&solver_orbit, comp))],
        ..Chart::default()
    };
    out.svg("oracle.svg", &[chart("Upper-box phosphate", 0), chart("Upper-box DOP", 2)])?;
    log::info!("oracle difference {diff:e} (tolerance {ORACLE_TOL:e})");
    Ok(Status::from_ok(ok))
}

/// Fixed-point solve against naive period-by-period spin-up. Spin-up runs
/// until its periodicity residual reaches the outer tolerance.
pub fn compare_spinup(cfg: &RunConfig, out_dir: &Path) -> Result<Status> {
    let p = setup::problem(cfg)?;
    let out = Out::create(out_dir)?;
    write_config(&out, cfg)?;
    let model = p.model.as_ref();
    let (y, report) = fixed_point_solve(&p.grid, &cfg.solver, &p.op, model, &InitialState::Constant)?;
    let target = cfg.solver.outer_tol;
    let spin = spinup(
        &p.grid,
        &cfg.solver,
        &p.op,
        model,
        &InitialState::Constant,
        target,
        cfg.spinup.max_periods,
    )?;
    let scale = y.max_abs().max(f64::MIN_POSITIVE);
    let difference = spin.state.max_abs_diff(&y) / scale;

    let mut w = csv::Writer::from_path(out.path("compare.csv"))?;
    w.write_record([
        "method",
        "iterations",
        "period_integrations",
        "periodicity_rel",
        "converged",
        "max_difference_to_fixed_point_rel",
    ])?;
    w.serialize((
        "fixed_point",
        report.residual_history.len(),
        report.period_integrations,
        report.periodicity[0].max(report.periodicity[1]),
        report.converged,
        0.0,
    ))?;
    w.serialize((
        "spinup",
        spin.periods,
        spin.periods,
        spin.periodicity_history.last().copied().unwrap_or(f64::NAN),
        spin.converged,
        difference,
    ))?;
    w.flush()?;
    let mut w = csv::Writer::from_path(out.path("spinup_history.csv"))?;
    w.write_record(["period", "periodicity_rel"])?;
    for (k, r) in spin.periodicity_history.iter().enumerate() {
        w.serialize((k + 1, r))?;
    }
    w.flush()?;

    let pts = |v: &[f64]| v.iter().enumerate().map(|(k, r)| ((k + 1) as f64, *r)).collect();
    out.svg(
        "compare.svg",
        &[
            Chart {
                title: "Spin-up".into(),
                x_label: "period".into(),
                y_label: "periodicity residual".into(),
                log_y: true,
                series: vec![line("spin-up", pts(&spin.periodicity_history))],
                ..Chart::default()
            },
            Chart {
                title: "Fixed point".into(),
                x_label: "outer iteration".into(),
                y_label: "fixed-point residual".into(),
                log_y: true,
                series: vec![line("fixed point", pts(&report.residual_history))],
                ..Chart::default()
            },
        ],
    )?;
    log::info!(
        "fixed point: {} iterations, {} period integrations; spin-up: {} periods; difference {difference:e}",
        report.residual_history.len(),
        report.period_integrations,
        spin.periods
    );
    Ok(Status::from_ok(report.converged && spin.converged))
}
