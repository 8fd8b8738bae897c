//! Procedural assets: an icosphere "head" with smooth blendshape bases and an
//! atlas UV chart, plus a small nested-cup mesh with two lip loops.

mod scene;

pub use scene::{
    hidden_displacement, synthetic_frames, GroundTruth, GroundTruthConfig, SequenceConfig,
};

use std::collections::HashMap;

use crate::geometry::{
    Articulation, ArticulationMode, BlendshapeMesh, ExpressionLayout, RegionMask,
};
use crate::math::{Real, Vec3};

#[derive(Clone, Debug)]
pub struct SyntheticAvatarConfig {
    pub subdivisions: u32,
    pub radius: Real,
    /// Scale of the blendshape displacements at |psi| = 1.
    pub basis_amplitude: Real,
    /// Adds a one-coefficient "jaw" block driving a linearized articulation.
    pub with_jaw: bool,
}

impl Default for SyntheticAvatarConfig {
    fn default() -> Self {
        Self {
            subdivisions: 3,
            radius: 1.0,
            basis_amplitude: 0.25,
            with_jaw: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticAvatar {
    pub mesh: BlendshapeMesh,
}

/// Number of smooth expression bases on the synthetic head.
pub const SYNTHETIC_EXPRESSION_BASES: usize = 3;

impl SyntheticAvatar {
    pub fn build(cfg: &SyntheticAvatarConfig) -> Self {
        let (unit, faces) = icosphere(cfg.subdivisions);
        let vertices: Vec<Vec3> = unit.iter().map(|p| p * cfg.radius).collect();
        let uv_coords = atlas_uvs(faces.len(), [0.0, 0.0, 1.0, 1.0]);

        let dim = SYNTHETIC_EXPRESSION_BASES + usize::from(cfg.with_jaw);
        let a = cfg.basis_amplitude * cfg.radius;
        let mut bases = vec![0f32; 3 * vertices.len() * dim];
        for (v, p) in unit.iter().enumerate() {
            let disp = expression_bases(p);
            for (k, d) in disp.iter().enumerate() {
                for axis in 0..3 {
                    bases[(3 * v + axis) * dim + k] = (a * d[axis]) as f32;
                }
            }
        }

        let mut blocks = vec![("expression", SYNTHETIC_EXPRESSION_BASES)];
        let mut articulations = Vec::new();
        if cfg.with_jaw {
            blocks.push(("jaw", 1));
            articulations.push(Articulation {
                name: "jaw".into(),
                code_index: SYNTHETIC_EXPRESSION_BASES,
                pivot: [0.0, 0.1 * cfg.radius, -0.3 * cfg.radius],
                axis: [1.0, 0.0, 0.0],
                weights: unit
                    .iter()
                    .map(|p| smoothstep(0.0, 0.5, -p.y) as f32 * smoothstep(-0.2, 0.4, p.z) as f32)
                    .collect(),
                mode: ArticulationMode::Linearized,
            });
        }

        let face_count = faces.len();
        Self {
            mesh: BlendshapeMesh {
                vertices,
                faces,
                uv_coords,
                deform_bases: bases,
                layout: ExpressionLayout::new(blocks),
                articulations,
                regions: RegionMask::all_head(face_count),
                lip_loops: None,
                mouth_uv_rect: None,
            },
        }
    }
}

fn smoothstep(e0: Real, e1: Real, x: Real) -> Real {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Displacement fields on the unit sphere (y up, z towards the front).
fn expression_bases(p: &Vec3) -> [Vec3; SYNTHETIC_EXPRESSION_BASES] {
    let front = p.z.max(0.0);
    [
        // lower half stretches downwards
        Vec3::new(0.0, 0.6 * p.y.min(0.0), 0.0),
        // front widens sideways
        Vec3::new(0.5 * p.x * front, 0.0, 0.0),
        // frontal bulge along the normal
        p * (0.4 * front * front),
    ]
}

/// Smooth procedural albedo in [0.15, 0.85] over canonical positions.
pub fn procedural_color(p: &Vec3, frequency: Real) -> [Real; 3] {
    let f = frequency;
    [
        0.5 + 0.35 * (f * p.x + 0.3).sin() * (0.7 * f * p.y).cos(),
        0.5 + 0.35 * (f * p.y - 0.5 * f * p.z).sin(),
        0.5 + 0.35 * (f * (p.z + p.x) + 1.1).cos() * (0.5 * f * p.y + 0.2).cos(),
    ]
}

/// Subdivided icosahedron projected onto the unit sphere.
pub fn icosphere(subdivisions: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let t = (1.0 + (5.0 as Real).sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Packs faces pairwise into a square grid of cells inside `rect`
/// (`[u0, v0, u1, v1]`): face `2k` takes the lower-left half of cell `k`,
/// face `2k + 1` the upper-right half.
pub fn atlas_uvs(face_count: usize, rect: [Real; 4]) -> Vec<[[Real; 2]; 3]> {
    let cells = face_count.div_ceil(2).max(1);
    let g = (cells as f64).sqrt().ceil() as usize;
    let w = (rect[2] - rect[0]) / g as Real;
    let h = (rect[3] - rect[1]) / g as Real;
    (0..face_count)
        .map(|f| {
            let cell = f / 2;
            let (cx, cy) = (cell % g, cell / g);
            let u0 = rect[0] + cx as Real * w;
            let v0 = rect[1] + cy as Real * h;
            // clamp guards against the last cell rounding past the rect edge
            let (u1, v1) = ((u0 + w).min(rect[2]), (v0 + h).min(rect[3]));
            if f % 2 == 0 {
                [[u0, v0], [u1, v0], [u0, v1]]
            } else {
                [[u1, v0], [u1, v1], [u0, v1]]
            }
        })
        .collect()
}

/// An open outer box with an open inner box inside it; both rims are
/// boundary loops listed in the same rotational sense. Bridging them closes
/// the surface like a thick cup.
pub fn nested_cup() -> (BlendshapeMesh, [Vec<u32>; 2]) {
    let mut vertices = Vec::new();
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    for &(y, half) in &[(-1.0, 1.0), (1.0, 1.0), (-0.5, 0.5), (1.0, 0.5)] {
        for &(x, z) in &corners {
            vertices.push(Vec3::new(x * half, y, z * half));
        }
    }
    // (bottom ring, top ring, outward?)
    let mut faces = Vec::new();
    for &(base, outward) in &[(0u32, true), (8u32, false)] {
        let bottom = [base, base + 1, base + 2, base + 3];
        let top = [base + 4, base + 5, base + 6, base + 7];
        let center: Vec3 = (0..8)
            .map(|i| vertices[(base + i) as usize])
            .sum::<Vec3>()
            / 8.0;
        let mut quads = vec![[bottom[0], bottom[1], bottom[2], bottom[3]]];
        for i in 0..4 {
            let j = (i + 1) % 4;
            quads.push([bottom[i], bottom[j], top[j], top[i]]);
        }
        for [a, b, c, d] in quads {
            for mut tri in [[a, b, c], [a, c, d]] {
                let p: Vec<Vec3> = tri.iter().map(|&i| vertices[i as usize]).collect();
                let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let centroid = (p[0] + p[1] + p[2]) / 3.0;
                let points_out = n.dot(&(centroid - center)) > 0.0;
                if points_out != outward {
                    tri.swap(1, 2);
                }
                faces.push(tri);
            }
        }
    }
    let face_count = faces.len();
    let mesh = BlendshapeMesh {
        vertices,
        uv_coords: atlas_uvs(face_count, [0.0, 0.0, 0.5, 0.5]),
        faces,
        deform_bases: Vec::new(),
        layout: ExpressionLayout { blocks: vec![] },
        articulations: vec![],
        regions: RegionMask::all_head(face_count),
        lip_loops: None,
        mouth_uv_rect: Some([0.55, 0.05, 0.75, 0.25]),
    };
    (mesh, [vec![4, 5, 6, 7], vec![12, 13, 14, 15]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_unit() {
        let (v, f) = icosphere(2);
        assert_eq!(f.len(), 320);
        assert_eq!(v.len(), 162);
        assert!(v.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn synthetic_avatar_is_valid_and_closed() {
        let a = SyntheticAvatar::build(&SyntheticAvatarConfig {
            with_jaw: true,
            ..Default::default()
        });
        a.mesh.validate().unwrap();
        assert!(a.mesh.is_watertight_over(|_| true));
        assert_eq!(a.mesh.code_dim(), 4);
    }

    #[test]
    fn cup_has_two_boundary_rims() {
        let (mesh, _) = nested_cup();
        mesh.validate().unwrap();
        assert_eq!(mesh.face_count(), 20);
    }
}
