//! Run configuration: one TOML file describing grid, transport, reactions,
//! solver settings and output.

use std::path::{Path, PathBuf};

use ndop_core::grid::{HorizontalMesh, LayerSpec};
use ndop_core::reactions::Po4DopParams;
use ndop_core::solver::SolveConfig;
use ndop_core::transport::{AdvectionScheme, MixingParams, OverturningParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{field}: referenced file {path} does not exist")]
    MissingFile { field: &'static str, path: PathBuf },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory for all outputs, relative to the working directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Omit wall-clock timings from CSV outputs so reruns are byte-identical.
    #[serde(default)]
    pub reproducible: bool,
    pub grid: GridConfig,
    pub transport: TransportConfig,
    pub model: ModelConfig,
    pub solver: SolveConfig,
    #[serde(default)]
    pub spinup: SpinupConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mesh: HorizontalMesh,
    /// Euphotic depth h̄_e (m).
    pub h_bar_e: f64,
    pub depths: DepthSpec,
    pub layers: LayerSpec,
}

/// Per-column depth `h(x')` (m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DepthSpec {
    /// `shelf + (deep − shelf) · sin(πx/Lx) · sin(πy/Ly)` at column centres.
    Basin { shelf: f64, deep: f64 },
    /// Row-major values, `j * nx + i`.
    Values { values: Vec<f64> },
    /// CSV with columns `i,j,depth_m`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default)]
    pub scheme: AdvectionScheme,
    /// Number of time samples of velocity and diffusivity per period; the
    /// solver's step count must be a multiple of it.
    pub n_time_samples: usize,
    pub velocity: VelocitySpec,
    pub diffusivity: DiffusivitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    Zero,
    /// Built-in overturning circulation from a stream function.
    Overturning(OverturningParams),
    /// CSV with columns `time_index,face_kind,face,flux_m3_per_s`, where
    /// `face_kind` is `interior` or `boundary`. Missing entries are zero.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusivitySpec {
    /// One value (m² s⁻¹) on every face at every time.
    Constant { kappa: f64 },
    /// Horizontal/vertical split with enhanced seasonal mixing near the top.
    Builtin(MixingParams),
    /// CSV with columns `time_index,face,kappa_m2_per_s` covering every
    /// interior face at every time index.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// No reactions; only the decay coupling `λ`.
    Inert { lambda: f64 },
    Po4Dop {
        params: Po4DopParams,
        insolation: InsolationSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InsolationSpec {
    /// `I0 · max(0, cos(2πt/T)) · exp(−k_w z)` in euphotic cells.
    Analytic { i0: f64, k_w: f64 },
    /// CSV with columns `time_index,cell,insolation_W_per_m2`; missing
    /// entries are zero.
    Csv { path: PathBuf, n_time_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinupConfig {
    /// Upper limit on integrated periods in `compare-spinup`.
    #[serde(default = "default_max_periods")]
    pub max_periods: usize,
}

fn default_max_periods() -> usize {
    5000
}

impl Default for SpinupConfig {
    fn default() -> Self {
        Self {
            max_periods: default_max_periods(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            source: Box::new(e),
        })
    }

    /// Reads and validates a config; relative data paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DepthSpec::Csv { path } = &mut self.grid.depths {
            fix(path);
        }
        if let VelocitySpec::Csv { path } = &mut self.transport.velocity {
            fix(path);
        }
        if let DiffusivitySpec::Csv { path } = &mut self.transport.diffusivity {
            fix(path);
        }
        if let ModelConfig::Po4Dop {
            insolation: InsolationSpec::Csv { path, .. },
            ..
        } = &mut self.model
        {
            fix(path);
        }
    }

    /// Range checks and file existence. Grid and operator consistency is
    /// checked again when they are built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.mesh.nx == 0 || g.mesh.ny == 0 {
            return Err(invalid("grid.mesh", "nx and ny must be at least 1"));
        }
        if !(g.mesh.dx > 0.0 && g.mesh.dy > 0.0 && g.mesh.dx.is_finite() && g.mesh.dy.is_finite()) {
            return Err(invalid("grid.mesh", "dx and dy must be positive"));
        }
        if !(g.h_bar_e.is_finite() && g.h_bar_e > 0.0) {
            return Err(invalid("grid.h_bar_e", "must be positive"));
        }
        let mut files: Vec<(&'static str, &Path)> = Vec::new();
        match &g.depths {
            DepthSpec::Basin { shelf, deep } => {
                if !(*shelf > 0.0 && deep >= shelf && deep.is_finite()) {
                    return Err(invalid("grid.depths", "need 0 < shelf <= deep"));
                }
            }
            DepthSpec::Values { values } => {
                if values.len() != g.mesh.n_columns() {
                    return Err(invalid(
                        "grid.depths",
                        format!("{} values for {} columns", values.len(), g.mesh.n_columns()),
                    ));
                }
                if values.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    return Err(invalid("grid.depths", "depths must be positive"));
                }
            }
            DepthSpec::Csv { path } => files.push(("grid.depths.path", path)),
        }

        let t = &self.transport;
        if t.n_time_samples == 0 {
            return Err(invalid("transport.n_time_samples", "must be at least 1"));
        }
        match &t.velocity {
            VelocitySpec::Zero => {}
            VelocitySpec::Overturning(p) => {
                if !(p.amplitude_xz.is_finite() && p.amplitude_yz.is_finite()) {
                    return Err(invalid("transport.velocity", "amplitudes must be finite"));
                }
                if !(0.0..1.0).contains(&p.seasonal) {
                    return Err(invalid("transport.velocity.seasonal", "must lie in [0, 1)"));
                }
            }
            VelocitySpec::Csv { path } => files.push(("transport.velocity.path", path)),
        }
        match &t.diffusivity {
            DiffusivitySpec::Constant { kappa } => {
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return Err(invalid("transport.diffusivity.kappa", "must be positive"));
                }
            }
            DiffusivitySpec::Builtin(m) => {
                if ![m.kappa_h, m.kappa_v].iter().all(|v| v.is_finite() && *v > 0.0)
                    || !(m.euphotic_mixing.is_finite() && m.euphotic_mixing >= 0.0)
                {
                    return Err(invalid(
                        "transport.diffusivity",
                        "kappa_h, kappa_v must be positive and euphotic_mixing nonnegative",
                    ));
                }
            }
            DiffusivitySpec::Csv { path } => files.push(("transport.diffusivity.path", path)),
        }

        match &self.model {
            ModelConfig::Inert { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(invalid("model.lambda", "must be positive"));
                }
            }
            ModelConfig::Po4Dop { params, insolation } => {
                params
                    .validate()
                    .map_err(|e| invalid("model.params", e.to_string()))?;
                match insolation {
                    InsolationSpec::Analytic { i0, k_w } => {
                        if !(i0.is_finite() && *i0 >= 0.0 && k_w.is_finite() && *k_w >= 0.0) {
                            return Err(invalid("model.insolation", "i0 and k_w must be nonnegative"));
                        }
                    }
                    InsolationSpec::Csv { path, n_time_samples } => {
                        if *n_time_samples == 0 {
                            return Err(invalid("model.insolation.n_time_samples", "must be at least 1"));
                        }
                        files.push(("model.insolation.path", path));
                    }
                }
            }
        }

        self.solver
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;
        if !self.solver.n_time_steps.is_multiple_of(t.n_time_samples) {
            return Err(invalid(
                "solver.n_time_steps",
                format!(
                    "{} is not a multiple of transport.n_time_samples = {}",
                    self.solver.n_time_steps, t.n_time_samples
                ),
            ));
        }
        if self.spinup.max_periods == 0 {
            return Err(invalid("spinup.max_periods", "must be at least 1"));
        }
        for (field, path) in files {
            if !path.is_file() {
                return Err(ConfigError::MissingFile {
                    field,
                    path: path.to_path_buf(),
                });
            }
        }
        Ok(())
    }
}

/// Annotated reference of every config key, printed by
/// `print-config-schema`. It is itself a valid config.
pub const CONFIG_SCHEMA: &str = r#"# ndop run configuration (TOML). Units: m, s, mmol P.

output_dir = "out"          # where outputs go; --out overrides
reproducible = false        # true: no wall-clock values in CSV outputs

[grid]
h_bar_e = 100.0             # euphotic depth (m), > 0

[grid.mesh]                 # uniform horizontal mesh
nx = 8                      # columns in x, >= 1
ny = 6                      # columns in y, >= 1
dx = 5.0e4                  # column width in x (m), > 0
dy = 5.0e4                  # column width in y (m), > 0

[grid.depths]               # one of:
kind = "basin"              #   basin:  shelf + (deep - shelf) sin(pi x/Lx) sin(pi y/Ly)
shelf = 60.0                #           shelf > 0 (m)
deep = 1000.0               #           deep >= shelf (m)
                            #   values: values = [...]  (nx*ny entries, row-major j*nx+i)
                            #   csv:    path = "depths.csv"  (columns i,j,depth_m)

[grid.layers]               # one of:
kind = "split"              #   split:   euphotic layers above h_e(x'), aphotic below
euphotic = 2                #            >= 1
aphotic = 4                 #            >= 1 (unused in columns not deeper than h_bar_e)
                            #   uniform: count = n (an interface must fall on h_bar_e)
                            #   levels:  thicknesses = [...] from the surface down

[transport]
scheme = "upwind"           # upwind | centered
n_time_samples = 12         # velocity/diffusivity samples per period, >= 1

[transport.velocity]        # one of:
kind = "overturning"        #   overturning: stream-function circulation
amplitude_xz = 20.0         #                peak x-z stream function (m2/s)
amplitude_yz = 10.0         #                peak y-z stream function (m2/s)
seasonal = 0.3              #                relative seasonal modulation, in [0, 1)
                            #   zero
                            #   csv: path = "fluxes.csv" (time_index,face_kind,face,flux_m3_per_s)

[transport.diffusivity]     # one of:
kind = "builtin"            #   builtin: horizontal/vertical split
kappa_h = 1000.0            #            horizontal diffusivity (m2/s), > 0
kappa_v = 5.0e-3            #            vertical diffusivity (m2/s), > 0
euphotic_mixing = 5.0e-2    #            extra seasonal vertical mixing in the top layer (m2/s), >= 0
                            #   constant: kappa = 1e-4
                            #   csv: path = "kappa.csv" (time_index,face,kappa_m2_per_s)

[model]                     # one of:
kind = "po4_dop"            #   po4_dop: phosphate / dissolved organic phosphorus
                            #   inert:   lambda = 6e-8  (no reactions)

[model.params]
alpha = 5.0e-9              # max uptake rate (mmol P m-3 s-1), > 0
k_p = 0.5                   # half-saturation of phosphate (mmol P m-3), > 0
k_i = 30.0                  # half-saturation of light (W m-2), > 0
nu = 0.67                   # fraction of uptake to DOP, in [0, 1]
beta = 0.858                # export profile exponent, > 0
lambda = 6.0e-8             # DOP remineralization rate (s-1), > 0

[model.insolation]          # one of:
kind = "analytic"           #   analytic: i0 max(0, cos(2 pi t/T)) exp(-k_w z)
i0 = 200.0                  #             surface insolation (W m-2), >= 0
k_w = 0.04                  #             attenuation (1/m), >= 0
                            #   csv: path = "light.csv", n_time_samples = 12
                            #        (time_index,cell,insolation_W_per_m2)

[solver]
total_mass = 1.0748e14       # total phosphorus C (mmol P), >= 0; here a mean of 2 mmol P m-3
period = 3.1104e7           # period T (s), > 0
n_time_steps = 24           # time steps per period; multiple of transport.n_time_samples
theta = 1.0                 # 1 = implicit Euler, 0.5 = Crank-Nicolson
outer_tol = 1e-8            # fixed-point residual tolerance
outer_max_iter = 100        # fixed-point iteration limit
damping = 0.5               # Picard damping in (0, 1]
inner_tol = 1e-12           # periodic linear solves, relative
step_tol = 1e-14            # per-step linear solves, relative
krylov_restart = 60
krylov_max_iter = 600
krylov_start = "zero"       # zero | random
seed = 0                    # seed for random Krylov starts; --seed overrides

[spinup]
max_periods = 5000          # limit for compare-spinup
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_a_valid_config() {
        let cfg = RunConfig::parse(CONFIG_SCHEMA, Path::new("schema")).unwrap();
        cfg.validate().unwrap();
        assert!(matches!(cfg.model, ModelConfig::Po4Dop { .. }));
        assert_eq!(cfg.solver.n_time_steps, 24);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(CONFIG_SCHEMA, Path::new("schema")).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text, Path::new("round")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        let bad = CONFIG_SCHEMA.replace("theta = 1.0", "theta = 1.0\nthetta = 2.0");
        assert!(matches!(
            RunConfig::parse(&bad, Path::new("x")),
            Err(ConfigError::Parse { .. })
        ));
        let mut cfg = RunConfig::parse(CONFIG_SCHEMA, Path::new("schema")).unwrap();
        cfg.solver.n_time_steps = 25;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "solver.n_time_steps", .. })));
        let mut cfg = RunConfig::parse(CONFIG_SCHEMA, Path::new("schema")).unwrap();
        cfg.grid.depths = DepthSpec::Csv {
            path: "/nonexistent/depths.csv".into(),
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::MissingFile { .. })));
    }
}
