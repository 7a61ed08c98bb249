//! Builds grid, transport operator and reaction model from a [`RunConfig`].

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndop_core::grid::{build_grid, Grid, LayerSpec};
use ndop_core::reactions::{InertModel, Insolation, Po4Dop, ReactionModel};
use ndop_core::solver::TwoBoxGeometry;
use ndop_core::transport::{
    assemble_transport, builtin_diffusivity, overturning_velocity, DiffusivityField, TransportOperator,
    VelocityField,
};
use serde::Deserialize;

use crate::config::{DepthSpec, DiffusivitySpec, InsolationSpec, ModelConfig, RunConfig, VelocitySpec};

pub struct Problem {
    pub grid: Grid,
    pub velocity: VelocityField,
    pub op: TransportOperator,
    pub model: Box<dyn ReactionModel>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (line, row) in reader.deserialize().enumerate() {
        rows.push(row.with_context(|| format!("{}: data row {}", path.display(), line + 1))?);
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct DepthRow {
    i: usize,
    j: usize,
    depth_m: f64,
}

#[derive(Deserialize)]
struct FluxRow {
    time_index: usize,
    face_kind: String,
    face: usize,
    flux_m3_per_s: f64,
}

#[derive(Deserialize)]
struct KappaRow {
    time_index: usize,
    face: usize,
    kappa_m2_per_s: f64,
}

#[derive(Deserialize)]
struct LightRow {
    time_index: usize,
    cell: usize,
    #[serde(rename = "insolation_W_per_m2")]
    insolation: f64,
}

pub fn depths(cfg: &RunConfig) -> Result<Vec<f64>> {
    let mesh = &cfg.grid.mesh;
    match &cfg.grid.depths {
        DepthSpec::Basin { shelf, deep } => Ok((0..mesh.ny)
            .flat_map(|j| {
                (0..mesh.nx).map(move |i| {
                    let s = (PI * (i as f64 + 0.5) / mesh.nx as f64).sin()
                        * (PI * (j as f64 + 0.5) / mesh.ny as f64).sin();
                    shelf + (deep - shelf) * s
                })
            })
            .collect()),
        DepthSpec::Values { values } => Ok(values.clone()),
        DepthSpec::Csv { path } => {
            let mut out = vec![f64::NAN; mesh.n_columns()];
            for r in read_rows::<DepthRow>(path)? {
                if r.i >= mesh.nx || r.j >= mesh.ny {
                    bail!("{}: column ({}, {}) outside the mesh", path.display(), r.i, r.j);
                }
                out[mesh.column_index(r.i, r.j)] = r.depth_m;
            }
            if let Some(k) = out.iter().position(|d| d.is_nan()) {
                bail!("{}: no depth for column {k}", path.display());
            }
            Ok(out)
        }
    }
}

pub fn grid(cfg: &RunConfig) -> Result<Grid> {
    let d = depths(cfg)?;
    Ok(build_grid(cfg.grid.mesh, &d, cfg.grid.h_bar_e, &cfg.grid.layers)?)
}

fn velocity(cfg: &RunConfig, grid: &Grid) -> Result<VelocityField> {
    let (period, n) = (cfg.solver.period, cfg.transport.n_time_samples);
    match &cfg.transport.velocity {
        VelocitySpec::Zero => Ok(VelocityField::zero(grid, period, n)),
        VelocitySpec::Overturning(p) => Ok(overturning_velocity(grid, p, period, n)),
        VelocitySpec::Csv { path } => {
            let mut v = VelocityField::zero(grid, period, n);
            for r in read_rows::<FluxRow>(path)? {
                if r.time_index >= n {
                    bail!("{}: time index {} outside 0..{n}", path.display(), r.time_index);
                }
                let target = match r.face_kind.as_str() {
                    "interior" => &mut v.interior[r.time_index],
                    "boundary" => &mut v.boundary[r.time_index],
                    other => bail!("{}: unknown face kind {other:?}", path.display()),
                };
                let Some(slot) = target.get_mut(r.face) else {
                    bail!("{}: {} face {} does not exist", path.display(), r.face_kind, r.face);
                };
                *slot = r.flux_m3_per_s;
            }
            Ok(v)
        }
    }
}

fn diffusivity(cfg: &RunConfig, grid: &Grid) -> Result<DiffusivityField> {
    let (period, n) = (cfg.solver.period, cfg.transport.n_time_samples);
    let faces = grid.interior_faces().len();
    match &cfg.transport.diffusivity {
        DiffusivitySpec::Constant { kappa } => Ok(DiffusivityField::new(vec![vec![*kappa; faces]; n])?),
        DiffusivitySpec::Builtin(m) => Ok(builtin_diffusivity(grid, m, period, n)?),
        DiffusivitySpec::Csv { path } => {
            let mut k = vec![vec![f64::NAN; faces]; n];
            for r in read_rows::<KappaRow>(path)? {
                if r.time_index >= n || r.face >= faces {
                    bail!("{}: entry ({}, {}) out of range", path.display(), r.time_index, r.face);
                }
                k[r.time_index][r.face] = r.kappa_m2_per_s;
            }
            if k.iter().flatten().any(|v| v.is_nan()) {
                bail!("{}: diffusivity missing for some face or time index", path.display());
            }
            Ok(DiffusivityField::new(k)?)
        }
    }
}

fn insolation(spec: &InsolationSpec, grid: &Grid, period: f64) -> Result<Insolation> {
    match spec {
        InsolationSpec::Analytic { i0, k_w } => Ok(Insolation::Analytic {
            i0: *i0,
            k_w: *k_w,
            period,
        }),
        InsolationSpec::Csv { path, n_time_samples } => {
            let mut values = vec![vec![0.0; grid.n_cells()]; *n_time_samples];
            for r in read_rows::<LightRow>(path)? {
                if r.time_index >= *n_time_samples || r.cell >= grid.n_cells() {
                    bail!("{}: entry ({}, {}) out of range", path.display(), r.time_index, r.cell);
                }
                values[r.time_index][r.cell] = r.insolation;
            }
            Ok(Insolation::Table { period, values })
        }
    }
}

pub fn model(cfg: &RunConfig, grid: &Grid) -> Result<Box<dyn ReactionModel>> {
    Ok(match &cfg.model {
        ModelConfig::Inert { lambda } => Box::new(InertModel { lambda: *lambda }),
        ModelConfig::Po4Dop { params, insolation: spec } => {
            let light = insolation(spec, grid, cfg.solver.period)?;
            Box::new(Po4Dop::new(grid, *params, light)?)
        }
    })
}

/// Velocity is kept unchecked so that `verify` can report a defective field;
/// assembly rejects it.
pub fn problem(cfg: &RunConfig) -> Result<Problem> {
    let grid = grid(cfg)?;
    let velocity = velocity(cfg, &grid)?;
    let diff = diffusivity(cfg, &grid)?;
    let op = assemble_transport(&grid, &velocity, &diff, cfg.transport.scheme)?;
    let model = model(cfg, &grid)?;
    Ok(Problem {
        grid,
        velocity,
        op,
        model,
    })
}

/// Parts of a config that `verify` can build even when the velocity field is
/// defective.
pub struct Parts {
    pub grid: Grid,
    pub velocity: VelocityField,
    pub diffusivity: DiffusivityField,
    pub model: Box<dyn ReactionModel>,
}

pub fn parts(cfg: &RunConfig) -> Result<Parts> {
    let grid = grid(cfg)?;
    let velocity = velocity(cfg, &grid)?;
    let diffusivity = diffusivity(cfg, &grid)?;
    let model = model(cfg, &grid)?;
    Ok(Parts {
        grid,
        velocity,
        diffusivity,
        model,
    })
}

/// The two-box geometry described by a config, if it is one: a single
/// column cut into one euphotic and one aphotic cell, no circulation,
/// constant diffusivity and PO4-DOP with analytic insolation.
pub fn two_box_geometry(cfg: &RunConfig) -> Result<TwoBoxGeometry> {
    let g = &cfg.grid;
    if g.mesh.nx != 1 || g.mesh.ny != 1 {
        bail!("the oracle needs a 1 x 1 mesh");
    }
    if g.layers
        != (LayerSpec::Split {
            euphotic: 1,
            aphotic: 1,
        })
    {
        bail!("the oracle needs layers = split with one euphotic and one aphotic layer");
    }
    let depth = depths(cfg)?[0];
    if depth <= g.h_bar_e {
        bail!("the oracle needs a column deeper than h_bar_e");
    }
    if cfg.transport.velocity != VelocitySpec::Zero {
        bail!("the oracle needs velocity kind = zero");
    }
    let DiffusivitySpec::Constant { kappa } = cfg.transport.diffusivity else {
        bail!("the oracle needs a constant diffusivity");
    };
    let ModelConfig::Po4Dop {
        insolation: InsolationSpec::Analytic { i0, k_w },
        ..
    } = cfg.model
    else {
        bail!("the oracle needs the po4_dop model with analytic insolation");
    };
    Ok(TwoBoxGeometry {
        area: g.mesh.cell_area(),
        euphotic_depth: g.h_bar_e,
        depth,
        diffusivity: kappa,
        i0,
        k_w,
    })
}
