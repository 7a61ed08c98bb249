//! Discrete advection-diffusion operator.
//!
//! The semi-discrete tracer equation on a [`Grid`] reads
//! `dy/dt + B(t) y = f` with `B(t) = V⁻¹ A(t)`, where `V` is the diagonal of
//! cell volumes and `A(t)` the flux matrix (m³ s⁻¹): row `i` holds the net
//! outflow of tracer mass from cell `i` per unit concentration. Diffusion uses
//! two-point face fluxes `κ A_f (y_i − y_j) / d_f`, advection first-order
//! upwind (or centered) face values. Boundary faces carry no transport flux;
//! exchange with the surface and sea floor enters only through reaction terms.
//!
//! Velocity and diffusivity are piecewise constant in time: index `n` covers
//! `[n Δt, (n+1) Δt)` and index `n_time_steps` wraps to 0.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FaceOrientation, Grid, GridError, GridId, TracerField};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Relative tolerance for the discrete divergence-free and operator checks.
pub const TRANSPORT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("velocity has {velocity} time steps but diffusivity has {diffusivity}")]
    TimeStepMismatch { velocity: usize, diffusivity: usize },
    #[error("{what} at time index {t_index} has {got} entries, expected {expected}")]
    FaceCount {
        what: &'static str,
        t_index: usize,
        expected: usize,
        got: usize,
    },
    #[error("a time-periodic field needs at least one time step")]
    NoTimeSteps,
    #[error("diffusivity {value} at time index {t_index}, face {face} is not positive")]
    NonPositiveDiffusivity {
        t_index: usize,
        face: usize,
        value: f64,
    },
    #[error("velocity is not discretely divergence free: {}", .0.summary())]
    NotDivergenceFree(Box<VelocityReport>),
    #[error("time index {index} outside 0..={max}")]
    TimeIndex { index: usize, max: usize },
}

/// Normal volume fluxes (m³ s⁻¹) through every face, per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub period: f64,
    /// `interior[n][f]`: flux through interior face `f` along its normal.
    pub interior: Vec<Vec<f64>>,
    /// `boundary[n][f]`: outward flux through boundary face `f`; must vanish.
    pub boundary: Vec<Vec<f64>>,
}

impl VelocityField {
    pub fn zero(grid: &Grid, period: f64, n_time_steps: usize) -> Self {
        Self {
            period,
            interior: vec![vec![0.0; grid.interior_faces().len()]; n_time_steps],
            boundary: vec![vec![0.0; grid.boundary_faces().len()]; n_time_steps],
        }
    }

    pub fn n_time_steps(&self) -> usize {
        self.interior.len()
    }

    fn check_layout(&self, grid: &Grid) -> Result<(), TransportError> {
        if self.interior.is_empty() {
            return Err(TransportError::NoTimeSteps);
        }
        if self.boundary.len() != self.interior.len() {
            return Err(TransportError::FaceCount {
                what: "boundary flux table",
                t_index: 0,
                expected: self.interior.len(),
                got: self.boundary.len(),
            });
        }
        for (t_index, (fi, fb)) in self.interior.iter().zip(&self.boundary).enumerate() {
            if fi.len() != grid.interior_faces().len() {
                return Err(TransportError::FaceCount {
                    what: "interior velocity flux",
                    t_index,
                    expected: grid.interior_faces().len(),
                    got: fi.len(),
                });
            }
            if fb.len() != grid.boundary_faces().len() {
                return Err(TransportError::FaceCount {
                    what: "boundary velocity flux",
                    t_index,
                    expected: grid.boundary_faces().len(),
                    got: fb.len(),
                });
            }
        }
        Ok(())
    }
}

/// Parameters of the built-in overturning circulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverturningParams {
    /// Peak stream function of the zonal (x-z) overturning cell (m² s⁻¹).
    pub amplitude_xz: f64,
    /// Peak stream function of the meridional (y-z) overturning cell (m² s⁻¹).
    pub amplitude_yz: f64,
    /// Relative seasonal modulation of both amplitudes, in [0, 1).
    pub seasonal: f64,
}

/// Depth down to which the vertical line between two neighbouring columns is
/// wet; zero on the outer walls.
fn wetted_depth(left: Option<f64>, right: Option<f64>) -> f64 {
    match (left, right) {
        (Some(a), Some(b)) => a.min(b),
        _ => 0.0,
    }
}

/// Stream function profile along a vertical line, vanishing at the surface
/// and everywhere at or below the wetted depth.
fn line_profile(z: f64, wetted: f64) -> f64 {
    if wetted <= 0.0 || z <= 0.0 || z >= wetted {
        0.0
    } else {
        (PI * z / wetted).sin()
    }
}

/// Exactly divergence-free velocity built from two overturning stream
/// functions, one per vertical slice direction.
///
/// The stream function lives on the vertical lines between columns; face
/// fluxes are differences of its values at face end points, so the signed
/// fluxes around every cell telescope to zero, and the stream function
/// vanishes on the surface, the sea floor and the outer walls.
pub fn overturning_velocity(
    grid: &Grid,
    params: &OverturningParams,
    period: f64,
    n_time_steps: usize,
) -> VelocityField {
    let mesh = *grid.mesh();
    let (nx, ny) = (mesh.nx, mesh.ny);
    let depth = |i: usize, j: usize| grid.columns()[mesh.column_index(i, j)].depth;
    // wetted depth of x-line `il` (between columns il-1 and il) in row j
    let x_wet = |il: usize, j: usize| {
        let left = (il > 0).then(|| depth(il - 1, j));
        let right = (il < nx).then(|| depth(il, j));
        wetted_depth(left, right)
    };
    let y_wet = |i: usize, jl: usize| {
        let south = (jl > 0).then(|| depth(i, jl - 1));
        let north = (jl < ny).then(|| depth(i, jl));
        wetted_depth(south, north)
    };
    let x_shape = |il: usize| (PI * il as f64 / nx as f64).sin();
    let y_shape = |jl: usize| (PI * jl as f64 / ny as f64).sin();

    let dt = period / n_time_steps as f64;
    let mut interior = Vec::with_capacity(n_time_steps);
    for n in 0..n_time_steps {
        let season = 1.0 + params.seasonal * (2.0 * PI * n as f64 * dt / period).cos();
        let axz = params.amplitude_xz * season;
        let ayz = params.amplitude_yz * season;
        let psi_xz = |il: usize, j: usize, z: f64| axz * x_shape(il) * line_profile(z, x_wet(il, j));
        let psi_yz = |i: usize, jl: usize, z: f64| ayz * y_shape(jl) * line_profile(z, y_wet(i, jl));

        let fluxes = grid
            .interior_faces()
            .iter()
            .map(|f| {
                let col = &grid.columns()[grid.cells()[f.from].column];
                let (i, j) = (col.i, col.j);
                match f.orientation {
                    FaceOrientation::X => {
                        mesh.dy * (psi_xz(i + 1, j, f.bottom) - psi_xz(i + 1, j, f.top))
                    }
                    FaceOrientation::Y => {
                        mesh.dx * (psi_yz(i, j + 1, f.bottom) - psi_yz(i, j + 1, f.top))
                    }
                    FaceOrientation::Z => {
                        let z = f.top;
                        -mesh.dy * (psi_xz(i + 1, j, z) - psi_xz(i, j, z))
                            - mesh.dx * (psi_yz(i, j + 1, z) - psi_yz(i, j, z))
                    }
                }
            })
            .collect();
        interior.push(fluxes);
    }
    VelocityField {
        period,
        interior,
        boundary: vec![vec![0.0; grid.boundary_faces().len()]; n_time_steps],
    }
}

/// Face diffusivities (m² s⁻¹) per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusivityField {
    kappa: Vec<Vec<f64>>,
    kappa_min: f64,
}

impl DiffusivityField {
    pub fn new(kappa: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        if kappa.is_empty() {
            return Err(TransportError::NoTimeSteps);
        }
        let mut kappa_min = f64::INFINITY;
        for (t_index, row) in kappa.iter().enumerate() {
            for (face, &value) in row.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(TransportError::NonPositiveDiffusivity {
                        t_index,
                        face,
                        value,
                    });
                }
                kappa_min = kappa_min.min(value);
            }
        }
        Ok(Self { kappa, kappa_min })
    }

    pub fn kappa(&self, t_index: usize) -> &[f64] {
        &self.kappa[t_index % self.kappa.len()]
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn n_time_steps(&self) -> usize {
        self.kappa.len()
    }
}

/// Parameters of the built-in mixing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    /// Horizontal diffusivity (m² s⁻¹).
    pub kappa_h: f64,
    /// Background vertical diffusivity (m² s⁻¹).
    pub kappa_v: f64,
    /// Additional vertical diffusivity inside the euphotic zone at the peak
    /// of the (winter) mixing season (m² s⁻¹).
    pub euphotic_mixing: f64,
}

pub fn builtin_diffusivity(
    grid: &Grid,
    params: &MixingParams,
    period: f64,
    n_time_steps: usize,
) -> Result<DiffusivityField, TransportError> {
    let dt = period / n_time_steps as f64;
    let kappa = (0..n_time_steps)
        .map(|n| {
            let winter = (-(2.0 * PI * n as f64 * dt / period).cos()).max(0.0);
            grid.interior_faces()
                .iter()
                .map(|f| match f.orientation {
                    FaceOrientation::Z if f.top < grid.h_bar_e() => {
                        params.kappa_v + params.euphotic_mixing * winter
                    }
                    FaceOrientation::Z => params.kappa_v,
                    _ => params.kappa_h,
                })
                .collect()
        })
        .collect();
    DiffusivityField::new(kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionScheme {
    #[default]
    Upwind,
    Centered,
}

/// Outcome of [`verify_velocity`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityReport {
    /// `divergence[n][cell]`: net outflow relative to the largest face flux.
    pub divergence: Vec<Vec<f64>>,
    /// Largest boundary flux magnitude per time index (m³ s⁻¹).
    pub boundary_flux_max: Vec<f64>,
    /// Cells whose relative divergence exceeds the tolerance, as `(n, cell)`.
    pub flagged: Vec<(usize, usize)>,
    pub max_divergence: f64,
    pub passed: bool,
}

impl VelocityReport {
    pub fn summary(&self) -> String {
        let worst = self.flagged.first().map(|(n, c)| format!(", first at time {n} cell {c}")).unwrap_or_default();
        format!(
            "max relative divergence {:.3e}, max boundary flux {:.3e}, {} flagged cell(s){worst}",
            self.max_divergence,
            self.boundary_flux_max.iter().cloned().fold(0.0, f64::max),
            self.flagged.len(),
        )
    }
}

/// Per-cell, per-time discrete divergence and boundary-flux check.
pub fn verify_velocity(grid: &Grid, vel: &VelocityField) -> VelocityReport {
    let n_cells = grid.n_cells();
    let mut divergence = Vec::with_capacity(vel.n_time_steps());
    let mut boundary_flux_max = Vec::with_capacity(vel.n_time_steps());
    let mut flagged = Vec::new();
    let mut max_divergence: f64 = 0.0;
    for (n, fluxes) in vel.interior.iter().enumerate() {
        let boundary = vel.boundary.get(n).map(|b| b.as_slice()).unwrap_or(&[]);
        let mut div = vec![0.0; n_cells];
        let mut scale: f64 = 0.0;
        for (f, &q) in grid.interior_faces().iter().zip(fluxes) {
            div[f.from] += q;
            div[f.to] -= q;
            scale = scale.max(q.abs());
        }
        let mut bmax: f64 = 0.0;
        for (f, &q) in grid.boundary_faces().iter().zip(boundary) {
            div[f.cell] += q;
            bmax = bmax.max(q.abs());
            scale = scale.max(q.abs());
        }
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for (cell, d) in div.iter_mut().enumerate() {
            *d /= scale;
            if d.abs() > TRANSPORT_TOL {
                flagged.push((n, cell));
            }
            max_divergence = max_divergence.max(d.abs());
        }
        if bmax > 0.0 {
            flagged.extend(
                grid.boundary_faces()
                    .iter()
                    .zip(boundary)
                    .filter(|(_, q)| **q != 0.0)
                    .map(|(f, _)| (n, f.cell)),
            );
        }
        boundary_flux_max.push(bmax);
        divergence.push(div);
    }
    flagged.sort_unstable();
    flagged.dedup();
    VelocityReport {
        passed: flagged.is_empty(),
        divergence,
        boundary_flux_max,
        flagged,
        max_divergence,
    }
}

/// Time-indexed discrete advection-diffusion operator.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    grid: GridId,
    volumes: Vec<f64>,
    matrices: Vec<CsrMatrix>,
    kappa_min: f64,
    period: f64,
    scheme: AdvectionScheme,
}

/// Assembles the operator after checking that the velocity is discretely
/// divergence free with no boundary flux.
pub fn assemble_transport(
    grid: &Grid,
    vel: &VelocityField,
    diff: &DiffusivityField,
    scheme: AdvectionScheme,
) -> Result<TransportOperator, TransportError> {
    vel.check_layout(grid)?;
    let report = verify_velocity(grid, vel);
    if !report.passed {
        return Err(TransportError::NotDivergenceFree(Box::new(report)));
    }
    assemble_transport_unchecked(grid, vel, diff, scheme)
}

/// Assembly without the divergence guard. Only the field layout is checked.
pub fn assemble_transport_unchecked(
    grid: &Grid,
    vel: &VelocityField,
    diff: &DiffusivityField,
    scheme: AdvectionScheme,
) -> Result<TransportOperator, TransportError> {
    vel.check_layout(grid)?;
    if vel.n_time_steps() != diff.n_time_steps() {
        return Err(TransportError::TimeStepMismatch {
            velocity: vel.n_time_steps(),
            diffusivity: diff.n_time_steps(),
        });
    }
    let faces = grid.interior_faces();
    let n_cells = grid.n_cells();
    let mut matrices = Vec::with_capacity(vel.n_time_steps());
    for (t_index, fluxes) in vel.interior.iter().enumerate() {
        let kappa = diff.kappa(t_index);
        if kappa.len() != faces.len() {
            return Err(TransportError::FaceCount {
                what: "diffusivity",
                t_index,
                expected: faces.len(),
                got: kappa.len(),
            });
        }
        let mut b = TripletBuilder::new(n_cells);
        for ((f, &q), &k) in faces.iter().zip(fluxes).zip(kappa) {
            let (a, c) = (f.from, f.to);
            let g = k * f.area / f.distance;
            b.push(a, a, g);
            b.push(a, c, -g);
            b.push(c, c, g);
            b.push(c, a, -g);
            match scheme {
                AdvectionScheme::Upwind => {
                    let (fwd, back) = (q.max(0.0), (-q).max(0.0));
                    // mass flux a -> c is fwd*y_a - back*y_c
                    b.push(a, a, fwd);
                    b.push(a, c, -back);
                    b.push(c, a, -fwd);
                    b.push(c, c, back);
                }
                AdvectionScheme::Centered => {
                    let h = 0.5 * q;
                    b.push(a, a, h);
                    b.push(a, c, h);
                    b.push(c, a, -h);
                    b.push(c, c, -h);
                }
            }
        }
        matrices.push(b.build());
    }
    Ok(TransportOperator {
        grid: grid.id(),
        volumes: grid.volumes(),
        matrices,
        kappa_min: diff.kappa_min(),
        period: vel.period,
        scheme,
    })
}

impl TransportOperator {
    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn n_time_steps(&self) -> usize {
        self.matrices.len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn time_step(&self) -> f64 {
        self.period / self.matrices.len() as f64
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn scheme(&self) -> AdvectionScheme {
        self.scheme
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Flux matrix `A = V B` at a time index in `0..=n_time_steps`.
    pub fn flux_matrix(&self, t_index: usize) -> Result<&CsrMatrix, TransportError> {
        let n = self.matrices.len();
        if t_index > n {
            return Err(TransportError::TimeIndex {
                index: t_index,
                max: n,
            });
        }
        Ok(&self.matrices[t_index % n])
    }

    /// Flux matrix for a time step index taken modulo the period.
    pub(crate) fn step_matrix(&self, step: usize) -> &CsrMatrix {
        &self.matrices[step % self.matrices.len()]
    }

    /// `B y` at a time index (s⁻¹ times concentration).
    pub fn apply(&self, t_index: usize, y: &TracerField) -> Result<TracerField, TransportError> {
        if y.grid_id() != self.grid {
            return Err(GridError::GridMismatch {
                expected: self.grid.raw(),
                found: y.grid_id().raw(),
            }
            .into());
        }
        let a = self.flux_matrix(t_index)?;
        let mut out = vec![0.0; y.len()];
        a.mul_vec(y.values(), &mut out);
        out.iter_mut().zip(&self.volumes).for_each(|(o, v)| *o /= v);
        Ok(TracerField::from_raw(self.grid, out))
    }

    /// Infinity norm of `B(t)` per time index.
    pub fn norms(&self) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|a| {
                (0..a.n())
                    .map(|r| a.row(r).map(|(_, v)| v.abs()).sum::<f64>() / self.volumes[r])
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Outcome of [`check_operator_properties`]; all residuals are relative.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorReport {
    /// Max `|Σ_i V_i B_ij|` over columns, relative to `max |A|`.
    pub column_sum: Vec<f64>,
    /// Max `|(B 1)_i|` relative to `max_i Σ_j |B_ij|`.
    pub constant_kernel: Vec<f64>,
    /// Min of `yᵀ V B y / (‖A‖∞ ‖y‖²)` over the sample battery.
    pub min_quadratic: Vec<f64>,
    /// Min of `(yᵀ V B y − κ_min |y|²_grad) / (‖A‖∞ ‖y‖²)`.
    pub min_gradient_margin: Vec<f64>,
    /// `‖B(t)‖∞`.
    pub norms: Vec<f64>,
    pub conservation_ok: bool,
    pub kernel_ok: bool,
    pub monotone_ok: bool,
    pub gradient_bound_ok: bool,
}

impl OperatorReport {
    pub fn passed(&self) -> bool {
        self.conservation_ok && self.kernel_ok && self.monotone_ok && self.gradient_bound_ok
    }
}

/// Discrete gradient seminorm `Σ_f A_f/d_f (y_to − y_from)²`.
pub fn gradient_seminorm_sq(grid: &Grid, y: &[f64]) -> f64 {
    grid.interior_faces()
        .iter()
        .map(|f| {
            let d = y[f.to] - y[f.from];
            f.area / f.distance * d * d
        })
        .sum()
}

/// Checks conservation, the constant kernel and monotonicity of every time
/// slice against a battery of random vectors.
///
/// Half of the battery is uniform in [-1, 1]; the other half are small
/// perturbations of the constant field, which expose any sign defect caused
/// by a non-solenoidal velocity.
pub fn check_operator_properties(
    op: &TransportOperator,
    grid: &Grid,
    n_samples: usize,
    seed: u64,
) -> OperatorReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_cells();
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .map(|s| {
            if s % 2 == 0 {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            } else {
                (0..n).map(|_| 1.0 + 1e-3 * rng.gen_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let grads: Vec<f64> = samples.iter().map(|y| gradient_seminorm_sq(grid, y)).collect();

    let mut report = OperatorReport {
        column_sum: Vec::new(),
        constant_kernel: Vec::new(),
        min_quadratic: Vec::new(),
        min_gradient_margin: Vec::new(),
        norms: op.norms(),
        conservation_ok: true,
        kernel_ok: true,
        monotone_ok: true,
        gradient_bound_ok: true,
    };
    let mut ay = vec![0.0; n];
    for a in &op.matrices {
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let col = a.column_sums().iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        let row_scale = a.norm_inf().max(f64::MIN_POSITIVE);
        let kernel = a.row_sums().iter().fold(0.0f64, |m, v| m.max(v.abs())) / row_scale;
        let mut qmin = f64::INFINITY;
        let mut gmin = f64::INFINITY;
        for (y, grad) in samples.iter().zip(&grads) {
            a.mul_vec(y, &mut ay);
            let q: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let denom = row_scale * yy;
            qmin = qmin.min(q / denom);
            gmin = gmin.min((q - op.kappa_min * grad) / denom);
        }
        report.conservation_ok &= col <= TRANSPORT_TOL;
        report.kernel_ok &= kernel <= TRANSPORT_TOL;
        report.monotone_ok &= qmin >= -TRANSPORT_TOL;
        report.gradient_bound_ok &= gmin >= -TRANSPORT_TOL;
        report.column_sum.push(col);
        report.constant_kernel.push(kernel);
        report.min_quadratic.push(qmin);
        report.min_gradient_margin.push(gmin);
    }
    report
}
