//! Reaction terms of N-DOP type models.
//!
//! A model supplies, for a tracer pair `y = (y1, y2)` at time `t`, the volume
//! terms `d1, d2` (mmol P m⁻³ s⁻¹, per cell) and the boundary terms `b1, b2`
//! (mmol P m⁻² s⁻¹, per boundary face), signed as they appear on the left of
//! the model equations:
//!
//! ```text
//! ∂t y1 + transport(y1) − λ y2 + d1 = 0
//! ∂t y2 + transport(y2) + λ y2 + d2 = 0
//! κ ∂n y_j + b_j = 0 on the boundary
//! ```
//!
//! Models must be bounded (`|d_j| ≤ M_d`, `|b_j| ≤ M_b`) and conserve mass:
//! `Σ_j (Σ V d_j + Σ area b_j) = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoundaryKind, Grid, GridError, TracerField, Zone};

/// Relative tolerance of the discrete mass identity.
pub const MASS_IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ReactionError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("insolation table: {0}")]
    Insolation(String),
    #[error("sinking column must start at h_bar_e = {h_bar_e}, got {start}")]
    ColumnStart { start: f64, h_bar_e: f64 },
    #[error("sinking column interfaces must increase, got {0:?}")]
    ColumnOrder(Vec<f64>),
}

/// Reaction terms of one state at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Reactions {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Reactions {
    pub fn zeros(grid: &Grid) -> Self {
        let (nc, nf) = (grid.n_cells(), grid.boundary_faces().len());
        Self {
            d1: vec![0.0; nc],
            d2: vec![0.0; nc],
            b1: vec![0.0; nf],
            b2: vec![0.0; nf],
        }
    }

    /// Right-hand sides `F1, F2` as concentration rates: `−d_j` in every cell
    /// and `−b_j · area / V` added to the cell owning each boundary face.
    pub fn forcing(&self, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
        let mut f1: Vec<f64> = self.d1.iter().map(|d| -d).collect();
        let mut f2: Vec<f64> = self.d2.iter().map(|d| -d).collect();
        let cells = grid.cells();
        for (k, face) in grid.boundary_faces().iter().enumerate() {
            let scale = face.area / cells[face.cell].volume;
            f1[face.cell] -= self.b1[k] * scale;
            f2[face.cell] -= self.b2[k] * scale;
        }
        (f1, f2)
    }

    /// `Σ_j (Σ V d_j + Σ area b_j)` (mmol s⁻¹).
    pub fn mass_rate(&self, grid: &Grid) -> f64 {
        let vol: f64 = grid
            .cells()
            .iter()
            .zip(self.d1.iter().zip(&self.d2))
            .map(|(c, (a, b))| c.volume * (a + b))
            .sum();
        let surf: f64 = grid
            .boundary_faces()
            .iter()
            .zip(self.b1.iter().zip(&self.b2))
            .map(|(f, (a, b))| f.area * (a + b))
            .sum();
        vol + surf
    }
}

/// Reaction part of an N-DOP model.
pub trait ReactionModel: Send + Sync {
    fn name(&self) -> &str;

    /// Remineralization rate λ (s⁻¹).
    fn lambda(&self) -> f64;

    fn evaluate(
        &self,
        grid: &Grid,
        y1: &TracerField,
        y2: &TracerField,
        t: f64,
    ) -> Result<Reactions, ReactionError>;

    /// Declared bound `M_d` per cell at time `t`.
    fn bound_d(&self, grid: &Grid, t: f64) -> Vec<f64>;

    /// Declared bound `M_b` per boundary face at time `t`.
    fn bound_b(&self, grid: &Grid, t: f64) -> Vec<f64>;
}

/// Model without nonlinear reactions: only remineralization couples the
/// tracers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertModel {
    pub lambda: f64,
}

impl ReactionModel for InertModel {
    fn name(&self) -> &str {
        "inert"
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn evaluate(
        &self,
        grid: &Grid,
        y1: &TracerField,
        y2: &TracerField,
        _t: f64,
    ) -> Result<Reactions, ReactionError> {
        grid.check_field(y1)?;
        grid.check_field(y2)?;
        Ok(Reactions::zeros(grid))
    }

    fn bound_d(&self, grid: &Grid, _t: f64) -> Vec<f64> {
        vec![0.0; grid.n_cells()]
    }

    fn bound_b(&self, grid: &Grid, _t: f64) -> Vec<f64> {
        vec![0.0; grid.boundary_faces().len()]
    }
}

/// Parameters of the PO4-DOP model. Rates are per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Po4DopParams {
    /// Maximum uptake rate α (mmol P m⁻³ s⁻¹).
    pub alpha: f64,
    /// Nutrient half saturation K_P (mmol P m⁻³).
    pub k_p: f64,
    /// Light half saturation K_I (W m⁻²).
    pub k_i: f64,
    /// Fraction ν of uptake routed to DOP.
    pub nu: f64,
    /// Sinking exponent β.
    pub beta: f64,
    /// Remineralization rate λ (s⁻¹).
    pub lambda: f64,
}

impl Po4DopParams {
    pub fn validate(&self) -> Result<(), ReactionError> {
        let positive = [
            ("alpha", self.alpha),
            ("k_p", self.k_p),
            ("k_i", self.k_i),
            ("beta", self.beta),
            ("lambda", self.lambda),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ReactionError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(ReactionError::InvalidParameter {
                name: "nu",
                value: self.nu,
                reason: "must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

/// Uptake `G = α y1/(|y1| + K_P) · I/(|I| + K_I)`; `|G| ≤ α` for all inputs.
pub fn uptake(y1: f64, insolation: f64, p: &Po4DopParams) -> f64 {
    p.alpha * y1 / (y1.abs() + p.k_p) * insolation / (insolation.abs() + p.k_i)
}

/// Cell-integrated weights of the export profile `(β/h̄)(z/h̄)^(−β−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkingWeights {
    /// Fraction of the export remineralized in each aphotic cell.
    pub cells: Vec<f64>,
    /// Fraction reaching the sea floor.
    pub bottom: f64,
}

impl SinkingWeights {
    /// Compensated sum of all weights; 1 up to rounding.
    pub fn total(&self) -> f64 {
        neumaier_sum(self.cells.iter().copied().chain(std::iter::once(self.bottom)))
    }
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact profile integrals over the aphotic cells of one column.
///
/// `interfaces` runs from `h_bar_e` down to the column depth. A cell `[a, b]`
/// receives `(a/h̄)^(−β) − (b/h̄)^(−β)` and the floor `(h/h̄)^(−β)`, so the
/// weights telescope to exactly one.
pub fn sinking_weights(
    interfaces: &[f64],
    beta: f64,
    h_bar_e: f64,
) -> Result<SinkingWeights, ReactionError> {
    let Some(&start) = interfaces.first() else {
        return Err(ReactionError::ColumnOrder(vec![]));
    };
    if start != h_bar_e {
        return Err(ReactionError::ColumnStart { start, h_bar_e });
    }
    if interfaces.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReactionError::ColumnOrder(interfaces.to_vec()));
    }
    let profile: Vec<f64> = interfaces.iter().map(|z| (z / h_bar_e).powf(-beta)).collect();
    Ok(SinkingWeights {
        cells: profile.windows(2).map(|w| w[0] - w[1]).collect(),
        bottom: *profile.last().unwrap(),
    })
}

/// Insolation `I(x, t)` (W m⁻²), nonnegative and zero outside the euphotic
/// zone.
#[derive(Debug, Clone, PartialEq)]
pub enum Insolation {
    /// `I0 · max(0, cos(2πt/T)) · exp(−k_w z)` at cell-centre depth `z`.
    Analytic { i0: f64, k_w: f64, period: f64 },
    /// Per time step, per cell values; piecewise constant in time.
    Table { period: f64, values: Vec<Vec<f64>> },
}

impl Insolation {
    fn validate(&self, grid: &Grid) -> Result<(), ReactionError> {
        match self {
            Insolation::Analytic { i0, k_w, period } => {
                for (name, v) in [("i0", *i0), ("k_w", *k_w)] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(ReactionError::InvalidParameter {
                            name,
                            value: v,
                            reason: "must be nonnegative and finite",
                        });
                    }
                }
                if !(period.is_finite() && *period > 0.0) {
                    return Err(ReactionError::InvalidParameter {
                        name: "period",
                        value: *period,
                        reason: "must be positive",
                    });
                }
                Ok(())
            }
            Insolation::Table { period, values } => {
                if values.is_empty() || !(period.is_finite() && *period > 0.0) {
                    return Err(ReactionError::Insolation(
                        "need a positive period and at least one time step".into(),
                    ));
                }
                for (n, row) in values.iter().enumerate() {
                    if row.len() != grid.n_cells() {
                        return Err(ReactionError::Insolation(format!(
                            "time step {n} has {} values, grid has {} cells",
                            row.len(),
                            grid.n_cells()
                        )));
                    }
                    for (cell, (&v, c)) in row.iter().zip(grid.cells()).enumerate() {
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(ReactionError::Insolation(format!(
                                "value {v} at time step {n}, cell {cell} is not nonnegative"
                            )));
                        }
                        if c.zone == Zone::Aphotic && v != 0.0 {
                            return Err(ReactionError::Insolation(format!(
                                "aphotic cell {cell} is lit at time step {n}"
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Insolation of every cell at time `t`.
    pub fn at(&self, grid: &Grid, t: f64) -> Vec<f64> {
        match self {
            Insolation::Analytic { i0, k_w, period } => {
                let season = (2.0 * PI * t / period).cos().max(0.0);
                grid.cells()
                    .iter()
                    .map(|c| match c.zone {
                        Zone::Euphotic => i0 * season * (-k_w * c.center_depth()).exp(),
                        Zone::Aphotic => 0.0,
                    })
                    .collect()
            }
            Insolation::Table { period, values } => {
                let n = values.len();
                let phase = (t / period).rem_euclid(1.0) * n as f64;
                // nodes that round-trip through t = k T / n land on step k
                let k = ((phase + 1e-9).floor() as usize) % n;
                values[k].clone()
            }
        }
    }
}

/// The PO4-DOP model: light- and nutrient-limited uptake in the euphotic
/// zone, a fraction ν released as DOP, the rest exported downward and
/// remineralized along a power-law profile or deposited on the floor.
#[derive(Debug, Clone)]
pub struct Po4Dop {
    params: Po4DopParams,
    insolation: Insolation,
    /// Per column: sinking weights of its aphotic cells (empty if shallow).
    weights: Vec<SinkingWeights>,
}

impl Po4Dop {
    pub fn new(grid: &Grid, params: Po4DopParams, insolation: Insolation) -> Result<Self, ReactionError> {
        params.validate()?;
        insolation.validate(grid)?;
        let h_bar_e = grid.h_bar_e();
        let weights = grid
            .columns()
            .iter()
            .map(|col| {
                if col.depth <= h_bar_e {
                    return Ok(SinkingWeights {
                        cells: vec![],
                        bottom: 1.0,
                    });
                }
                let cells = &grid.cells()[col.cells.clone()];
                let mut interfaces: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.zone == Zone::Aphotic)
                    .map(|c| c.top)
                    .collect();
                interfaces.push(col.depth);
                sinking_weights(&interfaces, params.beta, h_bar_e)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            params,
            insolation,
            weights,
        })
    }

    pub fn params(&self) -> &Po4DopParams {
        &self.params
    }

    pub fn insolation(&self) -> &Insolation {
        &self.insolation
    }

    pub fn column_weights(&self, column: usize) -> &SinkingWeights {
        &self.weights[column]
    }

    /// The pointwise bound `max{α, (1−ν)αβ}` on `|d_j|` for the continuous
    /// export profile.
    pub fn pointwise_bound_d(&self) -> f64 {
        let p = &self.params;
        p.alpha.max((1.0 - p.nu) * p.alpha * p.beta)
    }

    /// The bound `(1−ν) α h̄_e` on `|b_j|`.
    pub fn bound_b_value(&self, grid: &Grid) -> f64 {
        (1.0 - self.params.nu) * self.params.alpha * grid.h_bar_e()
    }

    /// Uptake `G` in every cell (zero in the aphotic zone).
    pub fn uptake_field(&self, grid: &Grid, y1: &TracerField, t: f64) -> Result<Vec<f64>, ReactionError> {
        grid.check_field(y1)?;
        let light = self.insolation.at(grid, t);
        Ok(grid
            .cells()
            .iter()
            .zip(y1.values().iter().zip(&light))
            .map(|(c, (&y, &i))| match c.zone {
                Zone::Euphotic => uptake(y, i, &self.params),
                Zone::Aphotic => 0.0,
            })
            .collect())
    }
}

impl ReactionModel for Po4Dop {
    fn name(&self) -> &str {
        "po4-dop"
    }

    fn lambda(&self) -> f64 {
        self.params.lambda
    }

    fn evaluate(
        &self,
        grid: &Grid,
        y1: &TracerField,
        y2: &TracerField,
        t: f64,
    ) -> Result<Reactions, ReactionError> {
        grid.check_field(y2)?;
        let g = self.uptake_field(grid, y1, t)?;
        let nu = self.params.nu;
        let mut r = Reactions::zeros(grid);
        let cells = grid.cells();
        for (c, col) in grid.columns().iter().enumerate() {
            // column uptake integral over the euphotic cells (mmol m⁻² s⁻¹)
            let mut column_uptake = 0.0;
            let mut aphotic = 0;
            for k in col.cells.clone() {
                match cells[k].zone {
                    Zone::Euphotic => {
                        r.d1[k] = g[k];
                        r.d2[k] = -nu * g[k];
                        column_uptake += cells[k].thickness() * g[k];
                    }
                    Zone::Aphotic => aphotic += 1,
                }
            }
            let export = (1.0 - nu) * column_uptake;
            let w = &self.weights[c];
            debug_assert_eq!(w.cells.len(), aphotic);
            let first_aphotic = col.cells.end - aphotic;
            for (k, wk) in (first_aphotic..col.cells.end).zip(&w.cells) {
                r.d1[k] = -export * wk / cells[k].thickness();
            }
            let (_, bottom) = grid.column_boundary_faces(c);
            r.b1[bottom] = match grid.boundary_faces()[bottom].kind {
                BoundaryKind::EuphoticBottom => -export,
                _ => -export * w.bottom,
            };
        }
        Ok(r)
    }

    /// Cell-averaged bound: `α` in the euphotic zone and
    /// `(1−ν) α h̄_e w_k / Δz_k` in aphotic cells, which never exceeds the
    /// pointwise bound `(1−ν)αβ`.
    fn bound_d(&self, grid: &Grid, _t: f64) -> Vec<f64> {
        let p = &self.params;
        let mut m = vec![p.alpha; grid.n_cells()];
        let cells = grid.cells();
        for (c, col) in grid.columns().iter().enumerate() {
            let w = &self.weights[c];
            let first_aphotic = col.cells.end - w.cells.len();
            for (k, wk) in (first_aphotic..col.cells.end).zip(&w.cells) {
                m[k] = (1.0 - p.nu) * p.alpha * grid.h_bar_e() * wk / cells[k].thickness();
            }
        }
        m
    }

    fn bound_b(&self, grid: &Grid, _t: f64) -> Vec<f64> {
        vec![self.bound_b_value(grid); grid.boundary_faces().len()]
    }
}

/// State sample for the report-only checks.
#[derive(Debug, Clone)]
pub struct Sample {
    pub y1: TracerField,
    pub y2: TracerField,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTerm {
    D1,
    D2,
    B1,
    B2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub sample: usize,
    pub term: BoundTerm,
    /// Cell id for `d_j`, boundary face id for `b_j`.
    pub location: usize,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub samples: usize,
    pub violations: Vec<BoundViolation>,
    /// Largest `|term| / bound` seen (0 when all bounds vanish with the terms).
    pub max_ratio: f64,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|d_j| ≤ M_d` and `|b_j| ≤ M_b` pointwise on every sample.
pub fn check_bounds(
    model: &dyn ReactionModel,
    grid: &Grid,
    samples: &[Sample],
) -> Result<BoundsReport, ReactionError> {
    let mut violations = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (s, sample) in samples.iter().enumerate() {
        let r = model.evaluate(grid, &sample.y1, &sample.y2, sample.t)?;
        let md = model.bound_d(grid, sample.t);
        let mb = model.bound_b(grid, sample.t);
        let groups: [(BoundTerm, &[f64], &[f64]); 4] = [
            (BoundTerm::D1, &r.d1, &md),
            (BoundTerm::D2, &r.d2, &md),
            (BoundTerm::B1, &r.b1, &mb),
            (BoundTerm::B2, &r.b2, &mb),
        ];
        for (term, values, bounds) in groups {
            for (location, (&value, &bound)) in values.iter().zip(bounds).enumerate() {
                if value.abs() > 0.0 {
                    max_ratio = max_ratio.max(value.abs() / bound);
                }
                if !(value.abs() <= bound) {
                    violations.push(BoundViolation {
                        sample: s,
                        term,
                        location,
                        value,
                        bound,
                    });
                }
            }
        }
    }
    Ok(BoundsReport {
        samples: samples.len(),
        violations,
        max_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassIdentityReport {
    /// `Σ_j (Σ V d_j + Σ area b_j)` per sample (mmol s⁻¹).
    pub residuals: Vec<f64>,
    /// Residual relative to `Σ V |d1|` per sample.
    pub relative: Vec<f64>,
    pub passed: bool,
}

/// Evaluates the discrete mass identity on every sample.
pub fn check_mass_identity(
    model: &dyn ReactionModel,
    grid: &Grid,
    samples: &[Sample],
) -> Result<MassIdentityReport, ReactionError> {
    let mut residuals = Vec::with_capacity(samples.len());
    let mut relative = Vec::with_capacity(samples.len());
    for sample in samples {
        let r = model.evaluate(grid, &sample.y1, &sample.y2, sample.t)?;
        let res = r.mass_rate(grid);
        let scale: f64 = grid
            .cells()
            .iter()
            .zip(&r.d1)
            .map(|(c, d)| c.volume * d.abs())
            .sum();
        residuals.push(res);
        relative.push(if scale > 0.0 { res.abs() / scale } else { res.abs() });
    }
    let passed = relative.iter().all(|r| *r <= MASS_IDENTITY_TOL);
    Ok(MassIdentityReport {
        residuals,
        relative,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, HorizontalMesh, LayerSpec};

    const P: Po4DopParams = Po4DopParams {
        alpha: 2.0,
        k_p: 0.5,
        k_i: 30.0,
        nu: 0.67,
        beta: 0.858,
        lambda: 0.1,
    };

    #[test]
    fn uptake_examples() {
        assert_eq!(uptake(0.0, 100.0, &P), 0.0);
        assert_eq!(uptake(3.0, 0.0, &P), 0.0);
        assert!((uptake(P.k_p, P.k_i, &P) - P.alpha / 4.0).abs() < 1e-15);
        for (y, i) in [(1e9, 1e9), (-1e9, 1e9), (-3.0, 7.0), (1e-300, 1e-300)] {
            assert!(uptake(y, i, &P).abs() <= P.alpha);
        }
        assert!(uptake(-1.0, 50.0, &P) < 0.0);
    }

    #[test]
    fn sinking_weight_examples() {
        let w = sinking_weights(&[100.0], 0.9, 100.0).unwrap();
        assert!(w.cells.is_empty());
        assert_eq!(w.bottom, 1.0);
        let w = sinking_weights(&[100.0, 200.0], 1.0, 100.0).unwrap();
        assert_eq!(w.cells, vec![0.5]);
        assert_eq!(w.bottom, 0.5);
        assert!(matches!(
            sinking_weights(&[90.0, 200.0], 1.0, 100.0),
            Err(ReactionError::ColumnStart { .. })
        ));
        assert!(matches!(
            sinking_weights(&[100.0, 100.0], 1.0, 100.0),
            Err(ReactionError::ColumnOrder(_))
        ));
    }

    #[test]
    fn parameter_validation() {
        let mut p = P;
        p.nu = 1.5;
        assert!(matches!(
            p.validate(),
            Err(ReactionError::InvalidParameter { name: "nu", .. })
        ));
        let mut p = P;
        p.lambda = 0.0;
        assert!(p.validate().is_err());
    }

    fn grid() -> Grid {
        let mesh = HorizontalMesh {
            nx: 2,
            ny: 1,
            dx: 10.0,
            dy: 10.0,
        };
        build_grid(
            mesh,
            &[60.0, 400.0],
            100.0,
            &LayerSpec::Split {
                euphotic: 2,
                aphotic: 3,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_nutrient_gives_zero_reactions() {
        let g = grid();
        let model = Po4Dop::new(
            &g,
            P,
            Insolation::Analytic {
                i0: 100.0,
                k_w: 0.02,
                period: 1.0,
            },
        )
        .unwrap();
        let z = TracerField::zeros(&g);
        let r = model.evaluate(&g, &z, &z, 0.0).unwrap();
        assert_eq!(r, Reactions::zeros(&g));
    }

    #[test]
    fn table_insolation_must_be_dark_below_euphotic_zone() {
        let g = grid();
        let mut values = vec![vec![0.0; g.n_cells()]];
        let aphotic = g.cells().iter().position(|c| c.zone == Zone::Aphotic).unwrap();
        values[0][aphotic] = 1.0;
        assert!(matches!(
            Po4Dop::new(&g, P, Insolation::Table { period: 1.0, values }),
            Err(ReactionError::Insolation(_))
        ));
    }

    #[test]
    fn table_insolation_is_piecewise_constant() {
        let g = grid();
        let values: Vec<Vec<f64>> = (0..4)
            .map(|n| {
                g.cells()
                    .iter()
                    .map(|c| if c.zone == Zone::Euphotic { n as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let ins = Insolation::Table { period: 2.0, values };
        assert_eq!(ins.at(&g, 0.0)[0], 0.0);
        assert_eq!(ins.at(&g, 1.0)[0], 2.0);
        assert_eq!(ins.at(&g, 1.4)[0], 2.0);
        assert_eq!(ins.at(&g, 2.0)[0], 0.0);
        assert_eq!(ins.at(&g, 3.0 * 2.0 / 4.0)[0], 3.0);
    }
}
