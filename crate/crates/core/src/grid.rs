//! Layered finite-volume discretization of the ocean domain.
//!
//! The domain is a structured horizontal mesh of surface cells. Below each
//! surface cell hangs a column of layer cells reaching down to the local depth
//! `h(x')`. Columns are split into the light-flooded euphotic zone (above
//! `h_e(x') = min(h_bar_e, h(x'))`) and the dark aphotic zone beneath it. Layer
//! interfaces are required to coincide with `h_bar_e` so every cell belongs to
//! exactly one zone.
//!
//! Depths are measured positive downward from the surface.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to snap layer interfaces onto `h_bar_e`.
const INTERFACE_SNAP: f64 = 1e-9;

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("horizontal mesh needs nx, ny >= 1 and positive finite spacing")]
    InvalidMesh,
    #[error("expected {expected} column depths, got {got}")]
    DepthCount { expected: usize, got: usize },
    #[error("column ({i}, {j}): depth {depth} must be positive and finite")]
    NonPositiveDepth { i: usize, j: usize, depth: f64 },
    #[error("maximum euphotic depth {0} must be positive and finite")]
    InvalidEuphoticDepth(f64),
    #[error("invalid layer specification: {0}")]
    InvalidLayers(String),
    #[error(
        "column ({i}, {j}) with depth {depth} m has no layer interface at the euphotic depth {h_bar_e} m"
    )]
    EuphoticInterface {
        i: usize,
        j: usize,
        depth: f64,
        h_bar_e: f64,
    },
    #[error("column ({i}, {j}): layer levels reach only {reached} m of {depth} m")]
    LevelsTooShallow {
        i: usize,
        j: usize,
        depth: f64,
        reached: f64,
    },
    #[error("field belongs to grid {found}, expected grid {expected}")]
    GridMismatch { expected: u64, found: u64 },
    #[error("field has {got} values but the grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },
}

/// Identity of a constructed [`Grid`]; fields remember the grid they live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(u64);

impl GridId {
    pub fn raw(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Euphotic,
    Aphotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Sea surface.
    Surface,
    /// Sea floor of a column no deeper than `h_bar_e`.
    EuphoticBottom,
    /// Sea floor of a column reaching into the aphotic zone.
    AphoticBottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceOrientation {
    /// Normal along +x (cell `from` is west of `to`).
    X,
    /// Normal along +y (cell `from` is south of `to`).
    Y,
    /// Normal pointing down (cell `from` lies above `to`).
    Z,
}

/// Uniform structured horizontal mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalMesh {
    pub nx: usize,
    pub ny: usize,
    /// Cell width in x (m).
    pub dx: f64,
    /// Cell width in y (m).
    pub dy: f64,
}

impl HorizontalMesh {
    pub fn n_columns(&self) -> usize {
        self.nx * self.ny
    }

    pub fn column_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
}

/// How columns are cut into layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Every column is cut into `count` equal layers. Columns deeper than
    /// `h_bar_e` must then have an interface exactly at `h_bar_e`.
    Uniform { count: usize },
    /// `euphotic` equal layers above `h_e(x')` and `aphotic` equal layers
    /// between `h_bar_e` and the floor. Always aligned.
    Split { euphotic: usize, aphotic: usize },
    /// Global z-levels given by their thicknesses from the surface down; each
    /// column uses levels down to its depth, truncating the last one.
    Levels { thicknesses: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub i: usize,
    pub j: usize,
    /// Horizontal area of the surface cell (m²).
    pub area: f64,
    /// Local depth `h(x')` (m).
    pub depth: f64,
    /// `h_e(x') = min(h_bar_e, h(x'))` (m).
    pub euphotic_depth: f64,
    /// Contiguous range of cell ids, ordered top to bottom.
    pub cells: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub column: usize,
    pub layer: usize,
    /// Depth of the upper interface (m).
    pub top: f64,
    /// Depth of the lower interface (m).
    pub bottom: f64,
    pub volume: f64,
    pub zone: Zone,
}

impl Cell {
    pub fn thickness(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn center_depth(&self) -> f64 {
        0.5 * (self.top + self.bottom)
    }
}

/// Face shared by two cells. Positive normal points from `from` to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    pub from: usize,
    pub to: usize,
    pub orientation: FaceOrientation,
    /// Face area (m²).
    pub area: f64,
    /// Distance between the two cell centers used by the flux stencil (m).
    pub distance: f64,
    /// Depth range covered by the face; equal for horizontal faces.
    pub top: f64,
    pub bottom: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub column: usize,
    pub kind: BoundaryKind,
    pub area: f64,
}

/// Immutable discretized domain.
#[derive(Debug, Clone)]
pub struct Grid {
    id: GridId,
    mesh: HorizontalMesh,
    h_bar_e: f64,
    h_max: f64,
    columns: Vec<Column>,
    cells: Vec<Cell>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
    /// Boundary face ids for each column: (surface, bottom).
    column_boundaries: Vec<(usize, usize)>,
    total_volume: f64,
}

/// Builds the layered grid.
///
/// `depths` holds one depth per surface cell in row-major order (`j * nx + i`).
pub fn build_grid(
    mesh: HorizontalMesh,
    depths: &[f64],
    h_bar_e: f64,
    layers: &LayerSpec,
) -> Result<Grid, GridError> {
    if mesh.nx == 0
        || mesh.ny == 0
        || !(mesh.dx.is_finite() && mesh.dx > 0.0)
        || !(mesh.dy.is_finite() && mesh.dy > 0.0)
    {
        return Err(GridError::InvalidMesh);
    }
    if depths.len() != mesh.n_columns() {
        return Err(GridError::DepthCount {
            expected: mesh.n_columns(),
            got: depths.len(),
        });
    }
    if !(h_bar_e.is_finite() && h_bar_e > 0.0) {
        return Err(GridError::InvalidEuphoticDepth(h_bar_e));
    }
    validate_layer_spec(layers)?;

    let area = mesh.cell_area();
    let mut columns = Vec::with_capacity(mesh.n_columns());
    let mut cells = Vec::new();
    let mut interior_faces = Vec::new();
    let mut boundary_faces = Vec::with_capacity(2 * mesh.n_columns());
    let mut column_boundaries = Vec::with_capacity(mesh.n_columns());

    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let col = mesh.column_index(i, j);
            let depth = depths[col];
            if !(depth.is_finite() && depth > 0.0) {
                return Err(GridError::NonPositiveDepth { i, j, depth });
            }
            let interfaces = column_interfaces(i, j, depth, h_bar_e, layers)?;
            let euphotic_depth = h_bar_e.min(depth);
            let start = cells.len();
            for (layer, w) in interfaces.windows(2).enumerate() {
                let (top, bottom) = (w[0], w[1]);
                let zone = if bottom <= euphotic_depth {
                    Zone::Euphotic
                } else {
                    Zone::Aphotic
                };
                cells.push(Cell {
                    column: col,
                    layer,
                    top,
                    bottom,
                    volume: area * (bottom - top),
                    zone,
                });
            }
            let end = cells.len();
            for k in start..end - 1 {
                let upper = &cells[k];
                let lower = &cells[k + 1];
                interior_faces.push(InteriorFace {
                    from: k,
                    to: k + 1,
                    orientation: FaceOrientation::Z,
                    area,
                    distance: 0.5 * (upper.thickness() + lower.thickness()),
                    top: upper.bottom,
                    bottom: upper.bottom,
                });
            }
            let surface = boundary_faces.len();
            boundary_faces.push(BoundaryFace {
                cell: start,
                column: col,
                kind: BoundaryKind::Surface,
                area,
            });
            boundary_faces.push(BoundaryFace {
                cell: end - 1,
                column: col,
                kind: if depth <= h_bar_e {
                    BoundaryKind::EuphoticBottom
                } else {
                    BoundaryKind::AphoticBottom
                },
                area,
            });
            column_boundaries.push((surface, surface + 1));
            columns.push(Column {
                i,
                j,
                area,
                depth,
                euphotic_depth,
                cells: start..end,
            });
        }
    }

    // Lateral faces: overlap of the depth intervals of neighbouring columns.
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let col = mesh.column_index(i, j);
            if i + 1 < mesh.nx {
                let east = mesh.column_index(i + 1, j);
                lateral_faces(
                    &cells,
                    &columns[col],
                    &columns[east],
                    FaceOrientation::X,
                    mesh.dy,
                    mesh.dx,
                    &mut interior_faces,
                );
            }
            if j + 1 < mesh.ny {
                let north = mesh.column_index(i, j + 1);
                lateral_faces(
                    &cells,
                    &columns[col],
                    &columns[north],
                    FaceOrientation::Y,
                    mesh.dx,
                    mesh.dy,
                    &mut interior_faces,
                );
            }
        }
    }

    let total_volume = columns.iter().map(|c| c.area * c.depth).sum();
    let h_max = depths.iter().cloned().fold(0.0, f64::max);

    Ok(Grid {
        id: GridId(NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed)),
        mesh,
        h_bar_e,
        h_max,
        columns,
        cells,
        interior_faces,
        boundary_faces,
        column_boundaries,
        total_volume,
    })
}

fn validate_layer_spec(layers: &LayerSpec) -> Result<(), GridError> {
    match layers {
        LayerSpec::Uniform { count } if *count == 0 => Err(GridError::InvalidLayers(
            "uniform layer count must be at least 1".into(),
        )),
        LayerSpec::Split { euphotic, aphotic } if *euphotic == 0 || *aphotic == 0 => Err(
            GridError::InvalidLayers("split layer counts must be at least 1".into()),
        ),
        LayerSpec::Levels { thicknesses } => {
            if thicknesses.is_empty() {
                return Err(GridError::InvalidLayers("no levels given".into()));
            }
            if let Some(t) = thicknesses.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(GridError::InvalidLayers(format!(
                    "level thickness {t} is not positive"
                )));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Interface depths `0 = z_0 < z_1 < ... < z_n = depth` of one column.
fn column_interfaces(
    i: usize,
    j: usize,
    depth: f64,
    h_bar_e: f64,
    layers: &LayerSpec,
) -> Result<Vec<f64>, GridError> {
    let mut z = match layers {
        LayerSpec::Uniform { count } => {
            let n = *count;
            let mut z: Vec<f64> = (0..=n).map(|k| depth * k as f64 / n as f64).collect();
            z[n] = depth;
            z
        }
        LayerSpec::Split { euphotic, aphotic } => {
            let top = h_bar_e.min(depth);
            let mut z: Vec<f64> = (0..=*euphotic)
                .map(|k| top * k as f64 / *euphotic as f64)
                .collect();
            z[*euphotic] = top;
            if depth > h_bar_e {
                let span = depth - h_bar_e;
                for k in 1..=*aphotic {
                    z.push(h_bar_e + span * k as f64 / *aphotic as f64);
                }
                *z.last_mut().unwrap() = depth;
            }
            z
        }
        LayerSpec::Levels { thicknesses } => {
            let mut z = vec![0.0];
            let mut acc = 0.0;
            for t in thicknesses {
                acc += t;
                if acc >= depth * (1.0 - INTERFACE_SNAP) {
                    break;
                }
                z.push(acc);
            }
            if acc < depth * (1.0 - INTERFACE_SNAP) {
                return Err(GridError::LevelsTooShallow {
                    i,
                    j,
                    depth,
                    reached: acc,
                });
            }
            z.push(depth);
            z
        }
    };

    if depth > h_bar_e {
        let tol = INTERFACE_SNAP * h_bar_e;
        match z.iter_mut().find(|zk| (**zk - h_bar_e).abs() <= tol) {
            Some(zk) => *zk = h_bar_e,
            None => {
                return Err(GridError::EuphoticInterface {
                    i,
                    j,
                    depth,
                    h_bar_e,
                })
            }
        }
    }
    Ok(z)
}

fn lateral_faces(
    cells: &[Cell],
    a: &Column,
    b: &Column,
    orientation: FaceOrientation,
    width: f64,
    distance: f64,
    out: &mut Vec<InteriorFace>,
) {
    let (mut p, mut q) = (a.cells.start, b.cells.start);
    let min_overlap = 1e-12 * a.depth.max(b.depth);
    while p < a.cells.end && q < b.cells.end {
        let (ca, cb) = (&cells[p], &cells[q]);
        let top = ca.top.max(cb.top);
        let bottom = ca.bottom.min(cb.bottom);
        if bottom - top > min_overlap {
            out.push(InteriorFace {
                from: p,
                to: q,
                orientation,
                area: width * (bottom - top),
                distance,
                top,
                bottom,
            });
        }
        if ca.bottom <= cb.bottom {
            p += 1;
        } else {
            q += 1;
        }
    }
}

impl Grid {
    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn mesh(&self) -> &HorizontalMesh {
        &self.mesh
    }

    /// Maximum euphotic depth `h_bar_e` (m).
    pub fn h_bar_e(&self) -> f64 {
        self.h_bar_e
    }

    /// Largest column depth (m).
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Boundary face ids `(surface, bottom)` of a column.
    pub fn column_boundary_faces(&self, column: usize) -> (usize, usize) {
        self.column_boundaries[column]
    }

    /// `|Ω|` as the sum of column volumes (m³).
    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.volume).collect()
    }

    pub fn check_field(&self, field: &TracerField) -> Result<(), GridError> {
        if field.grid != self.id {
            return Err(GridError::GridMismatch {
                expected: self.id.0,
                found: field.grid.0,
            });
        }
        if field.values.len() != self.cells.len() {
            return Err(GridError::LengthMismatch {
                expected: self.cells.len(),
                got: field.values.len(),
            });
        }
        Ok(())
    }

    /// Volume integral of one field.
    pub fn integrate(&self, field: &TracerField) -> Result<f64, GridError> {
        self.check_field(field)?;
        Ok(self.integrate_values(&field.values))
    }

    pub(crate) fn integrate_values(&self, values: &[f64]) -> f64 {
        self.cells
            .iter()
            .zip(values)
            .map(|(c, v)| c.volume * v)
            .sum()
    }

    /// Total mass of a tracer pair: the volume integral of `y1 + y2` (mmol).
    pub fn mass(&self, y1: &TracerField, y2: &TracerField) -> Result<f64, GridError> {
        Ok(self.integrate(y1)? + self.integrate(y2)?)
    }

    /// Removes the volume mean so the result has zero mass.
    pub fn project_zero_mass(&self, field: &TracerField) -> Result<TracerField, GridError> {
        self.check_field(field)?;
        let mut out = field.clone();
        self.project_zero_mass_in_place(&mut out.values);
        Ok(out)
    }

    pub(crate) fn project_zero_mass_in_place(&self, values: &mut [f64]) {
        let mean = self.integrate_values(values) / self.total_volume;
        values.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Concentration field (mmol P m⁻³) with one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TracerField {
    grid: GridId,
    values: Vec<f64>,
}

impl TracerField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_cells() {
            return Err(GridError::LengthMismatch {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { cell, value });
        }
        Ok(Self {
            grid: grid.id,
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: grid.id,
            values: vec![value; grid.n_cells()],
        }
    }

    /// Wraps values already known to match the grid's layout.
    pub(crate) fn from_raw(grid: GridId, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
