//! Parametric deformable head mesh: topology, blendshape evaluation, UV chart,
//! articulation, mouth-cavity closure and per-face region masks.

mod asset;
mod mouth;

pub use asset::{load_mesh_asset, save_mesh_asset, MeshSidecar};
pub use mouth::{close_mouth, MouthClosure};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{axis_angle, Real, Vec3};

/// Named sub-block of the expression code (expression, jaw, eyes, eyelids, ...).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: String,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionLayout {
    pub blocks: Vec<LayoutBlock>,
}

impl ExpressionLayout {
    pub fn new(blocks: impl IntoIterator<Item = (&'static str, usize)>) -> Self {
        Self {
            blocks: blocks
                .into_iter()
                .map(|(name, size)| LayoutBlock {
                    name: name.to_owned(),
                    size,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    /// Offset of the first coefficient of the named block.
    pub fn block_offset(&self, name: &str) -> Option<usize> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(offset);
            }
            offset += b.size;
        }
        None
    }
}

/// Per-frame expression coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpressionCode(pub Vec<Real>);

impl ExpressionCode {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Real] {
        &self.0
    }
}

impl From<Vec<Real>> for ExpressionCode {
    fn from(v: Vec<Real>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulationMode {
    /// `v += w * angle * (axis x (v - pivot))`; linear in the code.
    #[default]
    Linearized,
    /// Exact rotation about the pivot by `w * angle`.
    Rotational,
}

/// Jaw/eye style rotation driven by one expression coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Articulation {
    pub name: String,
    pub code_index: usize,
    pub pivot: [Real; 3],
    pub axis: [Real; 3],
    /// Per-vertex influence in [0, 1].
    pub weights: Vec<f32>,
    #[serde(default)]
    pub mode: ArticulationMode,
}

/// Per-face region membership.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    /// Face belongs to the modelled head region (head + neck).
    pub head: Vec<bool>,
    /// Face lies on the mesh boundary band and is excluded from sampling.
    pub boundary: Vec<bool>,
    /// Face belongs to the closed mouth interior.
    pub mouth: Vec<bool>,
}

impl RegionMask {
    pub fn all_head(face_count: usize) -> Self {
        Self {
            head: vec![true; face_count],
            boundary: vec![false; face_count],
            mouth: vec![false; face_count],
        }
    }

    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }

    /// Whether a face participates in Gaussian sampling.
    pub fn is_sampled(&self, face: usize) -> bool {
        (self.head[face] || self.mouth[face]) && !self.boundary[face]
    }

    fn push(&mut self, head: bool, boundary: bool, mouth: bool) {
        self.head.push(head);
        self.boundary.push(boundary);
        self.mouth.push(mouth);
    }

    fn validate(&self, face_count: usize) -> Result<()> {
        if self.head.len() != face_count
            || self.boundary.len() != face_count
            || self.mouth.len() != face_count
        {
            return Err(Error::DimensionMismatch {
                what: "region mask length",
                expected: face_count,
                actual: self.head.len().min(self.boundary.len()).min(self.mouth.len()),
            });
        }
        Ok(())
    }
}

/// Blendshape head mesh with a per-face-corner UV chart.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendshapeMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// UV per face corner, `uv_coords[f][k]` belongs to `faces[f][k]`.
    pub uv_coords: Vec<[[Real; 2]; 3]>,
    /// Row-major `(3 * vertex_count) x code_dim` displacement matrix.
    pub deform_bases: Vec<f32>,
    pub layout: ExpressionLayout,
    pub articulations: Vec<Articulation>,
    pub regions: RegionMask,
    pub lip_loops: Option<[Vec<u32>; 2]>,
    /// UV rectangle `[u0, v0, u1, v1]` reserved for mouth-closure faces.
    pub mouth_uv_rect: Option<[Real; 4]>,
}

impl BlendshapeMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn code_dim(&self) -> usize {
        self.layout.dim()
    }

    /// Checks every structural invariant of the mesh.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i as usize >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "face {f} references vertex out of range (vertex count {nv})"
                )));
            }
        }
        if self.uv_coords.len() != self.faces.len() {
            return Err(Error::DimensionMismatch {
                what: "uv corner count",
                expected: self.faces.len(),
                actual: self.uv_coords.len(),
            });
        }
        for (f, uvs) in self.uv_coords.iter().enumerate() {
            for uv in uvs {
                if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                    return Err(Error::InvalidMesh(format!(
                        "face {f} has UV {uv:?} outside [0,1]"
                    )));
                }
            }
        }
        let dim = self.code_dim();
        if self.deform_bases.len() != 3 * nv * dim {
            return Err(Error::DimensionMismatch {
                what: "deform basis entries (3 * vertices * code dim)",
                expected: 3 * nv * dim,
                actual: self.deform_bases.len(),
            });
        }
        for a in &self.articulations {
            if a.code_index >= dim {
                return Err(Error::InvalidMesh(format!(
                    "articulation {} drives code index {} but code dim is {dim}",
                    a.name, a.code_index
                )));
            }
            if a.weights.len() != nv {
                return Err(Error::DimensionMismatch {
                    what: "articulation weights",
                    expected: nv,
                    actual: a.weights.len(),
                });
            }
        }
        self.regions.validate(self.faces.len())?;
        if let Some(loops) = &self.lip_loops {
            for l in loops {
                if l.iter().any(|&i| i as usize >= nv) {
                    return Err(Error::InvalidMesh("lip loop vertex out of range".into()));
                }
            }
        }
        Ok(())
    }

    /// Deformed vertices for an expression code: canonical + bases * psi,
    /// then articulations in declaration order.
    pub fn evaluate(&self, psi: &ExpressionCode) -> Result<Vec<Vec3>> {
        let dim = self.code_dim();
        if psi.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "expression code",
                expected: dim,
                actual: psi.len(),
            });
        }
        let psi = psi.as_slice();
        let mut out = self.vertices.clone();
        if dim > 0 {
            for (v, row) in out.iter_mut().zip(self.deform_bases.chunks_exact(3 * dim)) {
                for axis in 0..3 {
                    let coeffs = &row[axis * dim..(axis + 1) * dim];
                    let mut acc = 0.0;
                    for (b, p) in coeffs.iter().zip(psi) {
                        acc += *b as Real * p;
                    }
                    v[axis] += acc;
                }
            }
        }
        for art in &self.articulations {
            apply_articulation(art, psi[art.code_index], &mut out);
        }
        Ok(out)
    }

    /// Edge-manifold check over faces accepted by `include`: every edge of an
    /// included face must be shared by exactly two faces of the whole mesh.
    pub fn is_watertight_over(&self, include: impl Fn(usize) -> bool) -> bool {
        use std::collections::HashMap;
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for face in &self.faces {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        self.faces.iter().enumerate().filter(|(f, _)| include(*f)).all(|(_, face)| {
            (0..3).all(|k| {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                counts[&(a.min(b), a.max(b))] == 2
            })
        })
    }
}

fn apply_articulation(art: &Articulation, angle: Real, verts: &mut [Vec3]) {
    if angle == 0.0 {
        return;
    }
    let pivot = Vec3::from(art.pivot);
    let axis = Vec3::from(art.axis).normalize();
    for (v, &w) in verts.iter_mut().zip(&art.weights) {
        if w == 0.0 {
            continue;
        }
        let theta = angle * w as Real;
        let rel = *v - pivot;
        *v = match art.mode {
            ArticulationMode::Linearized => *v + axis.cross(&rel) * theta,
            ArticulationMode::Rotational => pivot + axis_angle(&axis, theta) * rel,
        };
    }
}
