//! Dense two-box reference solutions.
//!
//! One euphotic box `a` above one aphotic box `b`, exchanging water at a rate
//! `q` (m³ s⁻¹). In amounts, with `u = (y1a, y1b, y2a, y2b)`:
//!
//! ```text
//! M u' + K u = s(u, t)
//! K u = (q(y1a − y1b) − Va λ y2a, q(y1b − y1a) − Vb λ y2b, q(y2a − y2b) + Va λ y2a, q(y2b − y2a) + Vb λ y2b)
//! s   = Va G(y1a, t) · (−1, 1 − ν, ν, 0)
//! ```
//!
//! All exported production ends up in box `b`, whether remineralized in the
//! water or deposited on the floor. The formulation shares no code with the
//! grid, transport or reaction modules.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{build_grid, Grid, HorizontalMesh, LayerSpec};
use crate::reactions::{Insolation, Po4Dop, Po4DopParams};
use crate::transport::{assemble_transport, AdvectionScheme, DiffusivityField, TransportOperator, VelocityField};

use super::{SolveConfig, SolverError, TracerState};

type Vec4 = [f64; 4];
type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("implicit step {step} did not converge (update {update:e})")]
    Step { step: usize, update: f64 },
    #[error("singular Newton matrix")]
    Singular,
    #[error("shooting Newton iteration failed; residual history {history:?}")]
    Newton { history: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub period: f64,
    pub n_time_steps: usize,
    pub theta: f64,
    /// Total mass `C` (mmol P).
    pub total_mass: f64,
    /// Shooting stops when `‖Φ_T(u0) − u0‖∞ ≤ tol · ‖u0‖∞`.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl OracleConfig {
    pub fn from_solve_config(cfg: &SolveConfig) -> Self {
        Self {
            period: cfg.period,
            n_time_steps: cfg.n_time_steps,
            theta: cfg.theta,
            total_mass: cfg.total_mass,
            newton_tol: 1e-13,
            max_newton: 50,
        }
    }
}

/// Periodic orbit sampled at `N + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBoxOrbit {
    pub times: Vec<f64>,
    /// `(y1a, y1b, y2a, y2b)` per node (mmol P m⁻³).
    pub states: Vec<Vec4>,
    /// Total mass per node (mmol P).
    pub mass: Vec<f64>,
    /// Shooting residual per Newton iteration (empty for linear solves).
    pub newton_history: Vec<f64>,
}

impl TwoBoxOrbit {
    /// The orbit as a state on the matching two-cell grid.
    pub fn to_state(&self, grid: &Grid, period: f64) -> Result<TracerState, SolverError> {
        if grid.n_cells() != 2 {
            return Err(SolverError::Config(format!(
                "two-box orbit needs a 2-cell grid, got {} cells",
                grid.n_cells()
            )));
        }
        let y1 = self.states.iter().map(|u| vec![u[0], u[1]]).collect();
        let y2 = self.states.iter().map(|u| vec![u[2], u[3]]).collect();
        Ok(TracerState::from_raw(grid.id(), period, y1, y2))
    }

    /// Largest pointwise difference per component, relative to the largest
    /// magnitude of that component in the orbit (absolute if it vanishes).
    pub fn max_relative_difference(&self, state: &TracerState) -> f64 {
        let mut worst: f64 = 0.0;
        for comp in 0..2 {
            let scale = self
                .states
                .iter()
                .flat_map(|u| [u[2 * comp], u[2 * comp + 1]])
                .fold(0.0, |m: f64, v| m.max(v.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            for (k, u) in self.states.iter().enumerate() {
                let y = if comp == 0 { state.y1(k) } else { state.y2(k) };
                for (cell, v) in y.iter().enumerate() {
                    worst = worst.max((v - u[2 * comp + cell]).abs() / scale);
                }
            }
        }
        worst
    }

    /// Largest `|y2|` along the orbit.
    pub fn y2_amplitude(&self) -> f64 {
        self.states
            .iter()
            .fold(0.0, |m: f64, u| m.max(u[2].abs()).max(u[3].abs()))
    }
}

struct TwoBox<'a> {
    p: Po4DopParams,
    va: f64,
    vb: f64,
    q: f64,
    light: &'a dyn Fn(f64) -> f64,
    dt: f64,
    theta: f64,
    n: usize,
}

impl TwoBox<'_> {
    fn mass_row(&self) -> Vec4 {
        [self.va, self.vb, self.va, self.vb]
    }

    fn k_apply(&self, u: &Vec4) -> Vec4 {
        let (q, l) = (self.q, self.p.lambda);
        [
            q * (u[0] - u[1]) - self.va * l * u[2],
            q * (u[1] - u[0]) - self.vb * l * u[3],
            q * (u[2] - u[3]) + self.va * l * u[2],
            q * (u[3] - u[2]) + self.vb * l * u[3],
        ]
    }

    fn k_matrix(&self) -> Mat4 {
        let mut k = [[0.0; 4]; 4];
        for (j, col) in (0..4).map(|j| {
            let mut e = [0.0; 4];
            e[j] = 1.0;
            (j, self.k_apply(&e))
        }) {
            for i in 0..4 {
                k[i][j] = col[i];
            }
        }
        k
    }

    fn m_diag(&self) -> Vec4 {
        [self.va, self.vb, self.va, self.vb]
    }

    /// Uptake and its derivative in `y1a`.
    fn uptake(&self, y1a: f64, t: f64) -> (f64, f64) {
        let i = (self.light)(t);
        let light = i / (i.abs() + self.p.k_i);
        let d = y1a.abs() + self.p.k_p;
        (self.p.alpha * y1a / d * light, self.p.alpha * self.p.k_p / (d * d) * light)
    }

    fn source(&self, u: &Vec4, t: f64) -> (Vec4, Vec4) {
        let (g, dg) = self.uptake(u[0], t);
        let nu = self.p.nu;
        let w = [-self.va, (1.0 - nu) * self.va, nu * self.va, 0.0];
        (w.map(|c| c * g), w.map(|c| c * dg))
    }

    /// Fully implicit θ step of the nonlinear system, solved by Newton.
    fn step(&self, k: usize, u: &Vec4) -> Result<Vec4, OracleError> {
        let (t, t1) = (k as f64 * self.dt, (k + 1) as f64 * self.dt);
        let th = self.theta;
        let m = self.m_diag();
        let km = self.k_matrix();
        let ku = self.k_apply(u);
        let (s0, _) = self.source(u, t);
        let fixed: Vec4 = std::array::from_fn(|i| -m[i] * u[i] / self.dt + (1.0 - th) * (ku[i] - s0[i]));
        let mut x = *u;
        let scale = u.iter().fold(1e-300, |a: f64, v| a.max(v.abs()));
        for _ in 0..40 {
            let kx = self.k_apply(&x);
            let (s, ds) = self.source(&x, t1);
            let r: Vec4 = std::array::from_fn(|i| m[i] * x[i] / self.dt + th * (kx[i] - s[i]) + fixed[i]);
            let mut j = km.map(|row| row.map(|v| th * v));
            for i in 0..4 {
                j[i][i] += m[i] / self.dt;
                j[i][0] -= th * ds[i];
            }
            let delta = solve4(j, r).ok_or(OracleError::Singular)?;
            let size = delta.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
            for i in 0..4 {
                x[i] -= delta[i];
            }
            if size <= 1e-16 * scale {
                return Ok(x);
            }
        }
        // accept rounding-level limit cycles of the update
        let kx = self.k_apply(&x);
        let (s, _) = self.source(&x, t1);
        let r: Vec4 = std::array::from_fn(|i| m[i] * x[i] / self.dt + th * (kx[i] - s[i]) + fixed[i]);
        let resid = r
            .iter()
            .zip(&m)
            .fold(0.0, |a: f64, (r, m)| a.max((r / m * self.dt).abs()));
        if resid <= 1e-14 * scale {
            Ok(x)
        } else {
            Err(OracleError::Step {
                step: k,
                update: resid,
            })
        }
    }

    fn orbit(&self, u0: &Vec4) -> Result<Vec<Vec4>, OracleError> {
        let mut out = Vec::with_capacity(self.n + 1);
        out.push(*u0);
        for k in 0..self.n {
            let next = self.step(k, out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    fn finish(&self, states: Vec<Vec4>, newton_history: Vec<f64>) -> TwoBoxOrbit {
        let mr = self.mass_row();
        TwoBoxOrbit {
            times: (0..=self.n).map(|k| k as f64 * self.dt).collect(),
            mass: states.iter().map(|u| dot4(&mr, u)).collect(),
            states,
            newton_history,
        }
    }
}

fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: Mat4, mut b: Vec4) -> Option<Vec4> {
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c] == 0.0 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn setup<'a>(
    params: &Po4DopParams,
    volumes: [f64; 2],
    exchange: f64,
    light: &'a dyn Fn(f64) -> f64,
    cfg: &OracleConfig,
) -> Result<TwoBox<'a>, OracleError> {
    params
        .validate()
        .map_err(|e| OracleError::Config(e.to_string()))?;
    if !(volumes.iter().all(|v| v.is_finite() && *v > 0.0) && exchange.is_finite() && exchange >= 0.0) {
        return Err(OracleError::Config("volumes must be positive, exchange nonnegative".into()));
    }
    if cfg.n_time_steps == 0 || !(cfg.period > 0.0) || !(0.5..=1.0).contains(&cfg.theta) {
        return Err(OracleError::Config("need n_time_steps >= 1, period > 0, theta in [0.5, 1]".into()));
    }
    Ok(TwoBox {
        p: *params,
        va: volumes[0],
        vb: volumes[1],
        q: exchange,
        light,
        dt: cfg.period / cfg.n_time_steps as f64,
        theta: cfg.theta,
        n: cfg.n_time_steps,
    })
}

/// Periodic orbit of the two-box PO4-DOP system with total mass `C`, by
/// Newton shooting on `Φ_T(u0) − u0` with the last equation replaced by the
/// mass constraint and a forward-difference Jacobian.
pub fn two_box_oracle(
    params: &Po4DopParams,
    volumes: [f64; 2],
    exchange: f64,
    light: &dyn Fn(f64) -> f64,
    cfg: &OracleConfig,
) -> Result<TwoBoxOrbit, OracleError> {
    let sys = setup(params, volumes, exchange, light, cfg)?;
    let mr = sys.mass_row();
    let mean = cfg.total_mass / (volumes[0] + volumes[1]);
    let residual = |u: &Vec4| -> Result<Vec4, OracleError> {
        let orbit = sys.orbit(u)?;
        let end = orbit[sys.n];
        Ok([end[0] - u[0], end[1] - u[1], end[2] - u[2], dot4(&mr, u) - cfg.total_mass])
    };
    let size = |r: &Vec4, u: &Vec4| {
        // the mass row is measured in amounts; bring it to concentrations
        let r3 = r[3] / (volumes[0] + volumes[1]);
        let rmax = r[..3].iter().fold(r3.abs(), |a: f64, v| a.max(v.abs()));
        let umax = u.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        (rmax, umax)
    };
    let mut u = [mean, mean, 0.0, 0.0];
    let mut history = Vec::new();
    for _ in 0..cfg.max_newton {
        let r = residual(&u)?;
        let (rmax, umax) = size(&r, &u);
        history.push(rmax);
        if rmax <= cfg.newton_tol * umax || rmax == 0.0 {
            let states = sys.orbit(&u)?;
            return Ok(sys.finish(states, history));
        }
        let mut jac = [[0.0; 4]; 4];
        for j in 0..4 {
            let h = 1e-7 * (u[j].abs() + mean) + 1e-12;
            let mut up = u;
            up[j] += h;
            let rp = residual(&up)?;
            for i in 0..4 {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let delta = solve4(jac, r).ok_or(OracleError::Singular)?;
        for i in 0..4 {
            u[i] -= delta[i];
        }
        if !u.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(OracleError::Newton { history })
}

/// Periodic solution of the two-box system linearized at the orbit `z`
/// (`N + 1` nodes): the reaction source is frozen at `z` and the periodic
/// initial value follows from the dense monodromy matrix.
pub fn dense_linear_oracle(
    params: &Po4DopParams,
    volumes: [f64; 2],
    exchange: f64,
    light: &dyn Fn(f64) -> f64,
    cfg: &OracleConfig,
    z: &[[f64; 4]],
) -> Result<TwoBoxOrbit, OracleError> {
    let sys = setup(params, volumes, exchange, light, cfg)?;
    let n = sys.n;
    if z.len() != n + 1 {
        return Err(OracleError::Config(format!("frozen orbit needs {} nodes, got {}", n + 1, z.len())));
    }
    let th = sys.theta;
    let src: Vec<Vec4> = (0..n).map(|k| sys.source(&z[k], k as f64 * sys.dt).0).collect();
    let m = sys.m_diag();
    let km = sys.k_matrix();
    let mut lhs = km.map(|row| row.map(|v| th * v));
    for i in 0..4 {
        lhs[i][i] += m[i] / sys.dt;
    }
    let step = |k: usize, u: &Vec4, forced: bool| -> Result<Vec4, OracleError> {
        let ku = sys.k_apply(u);
        let rhs: Vec4 = std::array::from_fn(|i| {
            let mut r = m[i] * u[i] / sys.dt - (1.0 - th) * ku[i];
            if forced {
                r += th * src[(k + 1) % n][i] + (1.0 - th) * src[k][i];
            }
            r
        });
        solve4(lhs, rhs).ok_or(OracleError::Singular)
    };
    let run = |u0: Vec4, forced: bool| -> Result<Vec<Vec4>, OracleError> {
        let mut out = vec![u0];
        for k in 0..n {
            let next = step(k, out.last().unwrap(), forced)?;
            out.push(next);
        }
        Ok(out)
    };
    let g = run([0.0; 4], true)?[n];
    let mut a = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let col = run(e, false)?[n];
        for i in 0..4 {
            a[i][j] = e[i] - col[i];
        }
    }
    let mut b = g;
    a[3] = sys.mass_row();
    b[3] = cfg.total_mass;
    let u0 = solve4(a, b).ok_or(OracleError::Singular)?;
    Ok(sys.finish(run(u0, true)?, Vec::new()))
}

/// Geometry of the two-box configuration as a one-column grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBoxGeometry {
    /// Horizontal area (m²).
    pub area: f64,
    /// Euphotic depth h̄_e (m), the thickness of the upper box.
    pub euphotic_depth: f64,
    /// Total depth (m).
    pub depth: f64,
    /// Vertical diffusivity between the boxes (m² s⁻¹).
    pub diffusivity: f64,
    /// Surface insolation amplitude (W m⁻²).
    pub i0: f64,
    /// Light attenuation (m⁻¹).
    pub k_w: f64,
}

impl TwoBoxGeometry {
    pub fn volumes(&self) -> [f64; 2] {
        [
            self.area * self.euphotic_depth,
            self.area * (self.depth - self.euphotic_depth),
        ]
    }

    /// Exchange rate `κ · area / distance` between the box centres.
    pub fn exchange(&self) -> f64 {
        self.diffusivity * self.area / (0.5 * self.depth)
    }

    /// Insolation at the centre of the upper box.
    pub fn light(&self, period: f64) -> impl Fn(f64) -> f64 {
        let (i0, att) = (self.i0, (-self.k_w * 0.5 * self.euphotic_depth).exp());
        move |t| i0 * (2.0 * PI * t / period).cos().max(0.0) * att
    }
}

/// The two-box configuration expressed in the general grid, transport and
/// reaction modules.
pub struct TwoBoxProblem {
    pub grid: Grid,
    pub op: TransportOperator,
    pub model: Po4Dop,
}

pub fn two_box_problem(
    geom: &TwoBoxGeometry,
    params: &Po4DopParams,
    period: f64,
) -> Result<TwoBoxProblem, SolverError> {
    let side = geom.area.sqrt();
    let mesh = HorizontalMesh {
        nx: 1,
        ny: 1,
        dx: side,
        dy: side,
    };
    let grid = build_grid(
        mesh,
        &[geom.depth],
        geom.euphotic_depth,
        &LayerSpec::Split {
            euphotic: 1,
            aphotic: 1,
        },
    )?;
    let vel = VelocityField::zero(&grid, period, 1);
    let diff = DiffusivityField::new(vec![vec![geom.diffusivity]])?;
    let op = assemble_transport(&grid, &vel, &diff, AdvectionScheme::Upwind)?;
    let model = Po4Dop::new(
        &grid,
        *params,
        Insolation::Analytic {
            i0: geom.i0,
            k_w: geom.k_w,
            period,
        },
    )?;
    Ok(TwoBoxProblem { grid, op, model })
}
