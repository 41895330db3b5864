//! Example plants, plant files, and integral-action validation.
//!
//! Plants are square (`d` inputs, `d` outputs) realizations with integral
//! action: every vertex's `A` matrix has a kernel, and the kernels share a
//! common direction. LPV plants are polytopic with vertex enumeration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::null_direction;
use crate::ss::{build_vehicle, ReferenceGains, StateSpace};

/// Plant kind: LTI or polytopic LPV given by its vertex realizations.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantKind {
    Lti(StateSpace),
    LpvPolytopic(Vec<StateSpace>),
}

/// A validated plant model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub kind: PlantKind,
    pub d: usize,
    pub label: String,
}

impl PlantModel {
    pub fn lti(label: impl Into<String>, ss: StateSpace) -> Result<Self> {
        let d = ss.ny();
        let model = PlantModel {
            kind: PlantKind::Lti(ss),
            d,
            label: label.into(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn lpv(label: impl Into<String>, vertices: Vec<StateSpace>) -> Result<Self> {
        let d = vertices.first().map(|v| v.ny()).unwrap_or(0);
        let model = PlantModel {
            kind: PlantKind::LpvPolytopic(vertices),
            d,
            label: label.into(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Vertex realizations; an LTI plant is a single vertex.
    pub fn vertices(&self) -> &[StateSpace] {
        match &self.kind {
            PlantKind::Lti(ss) => std::slice::from_ref(ss),
            PlantKind::LpvPolytopic(v) => v,
        }
    }

    pub fn is_lpv(&self) -> bool {
        matches!(self.kind, PlantKind::LpvPolytopic(_))
    }

    /// State dimension (shared across vertices).
    pub fn nx(&self) -> usize {
        self.vertices()[0].nx()
    }

    /// The shared integral-action direction.
    pub fn kernel_direction(&self) -> Result<DVector<f64>> {
        null_direction(&self.vertices()[0].a)
            .ok_or_else(|| Error::PlantValidation("A has no kernel".into()))
    }

    /// Checks dimensions, square IO of width `d`, integral action of every
    /// vertex, and a shared kernel direction.
    pub fn validate(&self) -> Result<()> {
        let vertices = self.vertices();
        if vertices.is_empty() {
            return Err(Error::PlantValidation("no vertices".into()));
        }
        let (nx, d) = (vertices[0].nx(), self.d);
        for (i, v) in vertices.iter().enumerate() {
            if v.nx() != nx {
                return Err(Error::PlantValidation(format!(
                    "vertex {i} has {} states, expected {nx}",
                    v.nx()
                )));
            }
            if v.nu() != d || v.ny() != d {
                return Err(Error::PlantValidation(format!(
                    "vertex {i} must be {d}x{d}, got {} inputs {} outputs",
                    v.nu(),
                    v.ny()
                )));
            }
        }
        // Integral action with a common direction: take the first vertex's
        // kernel and require every vertex's A to annihilate it.
        let eta = null_direction(&vertices[0].a).ok_or_else(|| {
            Error::PlantValidation("vertex 0 lacks integral action (A has no kernel)".into())
        })?;
        for (i, v) in vertices.iter().enumerate() {
            let residual = (&v.a * &eta).norm();
            let scale = v.a.amax().max(1e-300);
            if residual > 1e-8 * scale {
                return Err(Error::PlantValidation(format!(
                    "vertex {i} does not share the integral-action direction \
                     (residual {residual:e})"
                )));
            }
        }
        Ok(())
    }
}

/// The non-minimum-phase benchmark `G(s) = 5 (s - 1) / (s (s^2 + s + 25))`,
/// in controllable canonical form (3 states, `d = 1`).
pub fn nonmin_phase_example() -> PlantModel {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -25.0, -1.0]);
    let b = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(1, 3, &[-5.0, 5.0, 0.0]);
    let ss = StateSpace::new(a, b, c, DMatrix::zeros(1, 1)).unwrap();
    PlantModel::lti("nonmin-phase", ss).unwrap()
}

/// Scheduling range of the LPV vehicle example.
pub const LPV_VEHICLE_RANGE: (f64, f64) = (0.8, 1.2);

/// Generic LPV vehicle `xdot = v`, `vdot = -rho v - u` with damping
/// `rho in [0.8, 1.2]`, as two vertices (`d = 1`).
///
/// The input sign makes `u = grad f(y)` drive the position toward the
/// minimizer: with a linear gradient `u = k y` the loop is
/// `s^2 + rho s + k`, stable for `k > 0`.
pub fn lpv_vehicle_example() -> PlantModel {
    let vertex = |rho: f64| {
        StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -rho]),
            DMatrix::from_row_slice(2, 1, &[0.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap()
    };
    PlantModel::lpv(
        "lpv-vehicle",
        vec![vertex(LPV_VEHICLE_RANGE.0), vertex(LPV_VEHICLE_RANGE.1)],
    )
    .unwrap()
}

/// Inner position tracker: `xddot = F / mass` with force feedback placing the
/// tracking poles at a double pole `-bandwidth`. Inputs are the reference
/// pair `[r_pos; r_vel]`, output is the position (one axis).
fn tracker_closed_loop(bandwidth: f64) -> StateSpace {
    let w = bandwidth;
    // xddot = w^2 (r_pos - x) + 2 w (r_vel - xdot)
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -2.0 * w]);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, w * w, 2.0 * w]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    StateSpace::new(a, b, c, DMatrix::zeros(1, 2)).unwrap()
}

/// Stand-in for a tracking-controlled multirotor: a second-order tracker
/// whose inner loop places a double pole at `-tracker_bandwidth`, composed
/// with the reference dynamics. One axis; `d` axes are decoupled copies.
///
/// The force loop absorbs the vehicle mass, so `mass` enters through the
/// achievable bandwidth at the call site rather than through the matrices.
pub fn quadrotor_surrogate(
    gains: ReferenceGains,
    mass: f64,
    tracker_bandwidth: f64,
) -> Result<PlantModel> {
    if !(mass > 0.0) || !(tracker_bandwidth > 0.0) {
        return Err(Error::invalid("mass and tracker bandwidth must be positive"));
    }
    let g = build_vehicle(&tracker_closed_loop(tracker_bandwidth), gains, 1)?;
    PlantModel::lti("quadrotor-surrogate", g)
}

/// Nominal force-loop constant tying vehicle mass to achievable tracker
/// bandwidth in the two-mode surrogate: `bandwidth = OMEGA0 / sqrt(mass)`.
pub const TWO_MODE_OMEGA0: f64 = 3.0;

/// Two-operating-mode surrogate (e.g. loaded/unloaded vehicle): one vertex
/// per mass with its own reference gains, under arbitrary switching.
/// Heavier modes get proportionally slower trackers.
pub fn two_mode_quadrotor(
    masses: (f64, f64),
    gains: (ReferenceGains, ReferenceGains),
) -> Result<PlantModel> {
    if !(masses.0 > 0.0) || !(masses.1 > 0.0) {
        return Err(Error::invalid("masses must be positive"));
    }
    let vertex = |mass: f64, g: ReferenceGains| -> Result<StateSpace> {
        let bw = TWO_MODE_OMEGA0 / mass.sqrt();
        build_vehicle(&tracker_closed_loop(bw), g, 1)
    };
    PlantModel::lpv(
        "two-mode-quadrotor",
        vec![vertex(masses.0, gains.0)?, vertex(masses.1, gains.1)?],
    )
}

// ---------------------------------------------------------------------------
// Plant files: a single JSON document with row-major matrices.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct VertexFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PlantFile {
    kind: String,
    d: usize,
    label: String,
    vertices: Vec<VertexFile>,
}

fn rows_to_matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map(|r| r.len()).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != nc {
            return Err(Error::Parse {
                field: field.into(),
                message: format!("row {i} has {} entries, expected {nc}", r.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nr, nc, &flat))
}

/// Parses and validates a plant from JSON text.
pub fn parse_plant(text: &str) -> Result<PlantModel> {
    let file: PlantFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        field: "plant".into(),
        message: e.to_string(),
    })?;
    let mut vertices = Vec::with_capacity(file.vertices.len());
    for (i, v) in file.vertices.iter().enumerate() {
        let a = rows_to_matrix(&v.a, &format!("vertices[{i}].A"))?;
        let b = rows_to_matrix(&v.b, &format!("vertices[{i}].B"))?;
        let c = rows_to_matrix(&v.c, &format!("vertices[{i}].C"))?;
        let d = DMatrix::zeros(c.nrows(), b.ncols());
        vertices.push(StateSpace::new(a, b, c, d).map_err(|e| Error::Parse {
            field: format!("vertices[{i}]"),
            message: e.to_string(),
        })?);
    }
    let model = match file.kind.as_str() {
        "lti" => {
            if vertices.len() != 1 {
                return Err(Error::Parse {
                    field: "vertices".into(),
                    message: format!("lti plant needs exactly one vertex, got {}", vertices.len()),
                });
            }
            PlantModel {
                kind: PlantKind::Lti(vertices.into_iter().next().unwrap()),
                d: file.d,
                label: file.label,
            }
        }
        "lpv_polytopic" => PlantModel {
            kind: PlantKind::LpvPolytopic(vertices),
            d: file.d,
            label: file.label,
        },
        other => {
            return Err(Error::Parse {
                field: "kind".into(),
                message: format!("unknown plant kind `{other}`"),
            })
        }
    };
    if model.vertices().iter().any(|v| v.ny() != model.d) {
        return Err(Error::PlantValidation(format!(
            "declared d = {} does not match vertex output width",
            model.d
        )));
    }
    model.validate()?;
    Ok(model)
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>, indent: &str) {
    out.push_str("[\n");
    for r in 0..m.nrows() {
        out.push_str(indent);
        out.push_str("  [");
        for c in 0..m.ncols() {
            if c > 0 {
                out.push_str(", ");
            }
            // 17 significant digits: exact f64 round-trip.
            out.push_str(&format!("{:.16e}", m[(r, c)]));
        }
        out.push(']');
        if r + 1 < m.nrows() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(indent);
    out.push(']');
}

/// Serializes a plant to the JSON plant-file format (numbers with 17
/// significant digits, so loading reproduces every matrix bit-exactly).
pub fn plant_to_string(model: &PlantModel) -> String {
    let kind = match model.kind {
        PlantKind::Lti(_) => "lti",
        PlantKind::LpvPolytopic(_) => "lpv_polytopic",
    };
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"kind\": \"{kind}\",\n"));
    out.push_str(&format!("  \"d\": {},\n", model.d));
    out.push_str(&format!("  \"label\": {},\n", serde_json::to_string(&model.label).unwrap()));
    out.push_str("  \"vertices\": [\n");
    for (i, v) in model.vertices().iter().enumerate() {
        out.push_str("    {\n");
        out.push_str("      \"A\": ");
        write_matrix(&mut out, &v.a, "      ");
        out.push_str(",\n      \"B\": ");
        write_matrix(&mut out, &v.b, "      ");
        out.push_str(",\n      \"C\": ");
        write_matrix(&mut out, &v.c, "      ");
        out.push_str("\n    }");
        if i + 1 < model.vertices().len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}\n");
    out
}

/// Loads a plant file.
pub fn load_plant(path: impl AsRef<Path>) -> Result<PlantModel> {
    let text = std::fs::read_to_string(path)?;
    parse_plant(&text)
}

/// Saves a plant file.
pub fn save_plant(model: &PlantModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, plant_to_string(model))?;
    Ok(())
}
