use std::collections::HashMap;

use super::BlendshapeMesh;
use crate::error::{Error, Result};
use crate::math::Real;

/// Options for bridging the two lip loops.
#[derive(Clone, Debug)]
pub struct MouthClosure {
    /// Area multiplier applied to the mouth UV rectangle (grown from its min corner).
    pub uv_area_multiplier: Real,
    /// Overrides the mesh's own `mouth_uv_rect`.
    pub uv_rect: Option<[Real; 4]>,
}

impl Default for MouthClosure {
    fn default() -> Self {
        Self {
            uv_area_multiplier: 1.0,
            uv_rect: None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum LoopDirection {
    /// Existing faces traverse the boundary edges in loop order.
    Along,
    Against,
}

fn loop_direction(
    directed: &HashMap<(u32, u32), u32>,
    undirected: &HashMap<(u32, u32), u32>,
    lp: &[u32],
    which: &str,
) -> Result<LoopDirection> {
    let n = lp.len();
    let mut dir = None;
    for i in 0..n {
        let (a, b) = (lp[i], lp[(i + 1) % n]);
        if undirected.get(&(a.min(b), a.max(b))).copied().unwrap_or(0) != 1 {
            return Err(Error::MouthClosure(format!(
                "{which} loop edge ({a}, {b}) is not a boundary edge"
            )));
        }
        let this = if directed.contains_key(&(a, b)) {
            LoopDirection::Along
        } else {
            LoopDirection::Against
        };
        match dir {
            None => dir = Some(this),
            Some(d) if d != this => {
                return Err(Error::MouthClosure(format!(
                    "{which} loop is not a consistently oriented boundary loop"
                )))
            }
            _ => {}
        }
    }
    Ok(dir.expect("loop has at least one edge"))
}

/// Bridges two boundary loops with a triangle strip.
///
/// The strip starts at `(a[0], b[0])` and greedily advances along whichever
/// loop gives the shorter new diagonal, so two loops of `n` and `m` vertices
/// produce exactly `n + m` faces. New faces get UVs inside the mouth UV
/// rectangle and are tagged as mouth interior; nothing pre-existing changes.
pub fn close_mouth(
    mesh: &BlendshapeMesh,
    loops: &[Vec<u32>; 2],
    opts: &MouthClosure,
) -> Result<BlendshapeMesh> {
    let [la, lb] = loops;
    for (name, lp) in [("first", la), ("second", lb)] {
        if lp.len() < 3 {
            return Err(Error::MouthClosure(format!(
                "{name} loop has {} vertices, need at least 3",
                lp.len()
            )));
        }
        if lp.iter().any(|&v| v as usize >= mesh.vertex_count()) {
            return Err(Error::MouthClosure(format!("{name} loop vertex out of range")));
        }
        let mut sorted = lp.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != lp.len() {
            return Err(Error::MouthClosure(format!("{name} loop repeats a vertex")));
        }
    }
    if la.iter().any(|v| lb.contains(v)) {
        return Err(Error::MouthClosure("loops share a vertex".into()));
    }

    let mut directed = HashMap::new();
    let mut undirected = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *directed.entry((a, b)).or_insert(0u32) += 1;
            *undirected.entry((a.min(b), a.max(b))).or_insert(0u32) += 1;
        }
    }
    let dir_a = loop_direction(&directed, &undirected, la, "first")?;
    let dir_b = loop_direction(&directed, &undirected, lb, "second")?;
    if dir_a == dir_b {
        return Err(Error::MouthClosure(
            "lip loops must be listed with equal orientation".into(),
        ));
    }
    // Strip faces traverse the first loop along its order; flip when the
    // existing faces already do.
    let flip = dir_a == LoopDirection::Along;

    let rect = opts
        .uv_rect
        .or(mesh.mouth_uv_rect)
        .ok_or_else(|| Error::MouthClosure("no mouth UV rectangle declared".into()))?;
    if !(opts.uv_area_multiplier > 0.0) {
        return Err(Error::MouthClosure("UV area multiplier must be positive".into()));
    }
    let grow = opts.uv_area_multiplier.sqrt();
    let (u0, v0) = (rect[0], rect[1]);
    let (w, h) = ((rect[2] - rect[0]) * grow, (rect[3] - rect[1]) * grow);
    if w <= 0.0 || h <= 0.0 || u0 < 0.0 || v0 < 0.0 || u0 + w > 1.0 || v0 + h > 1.0 {
        return Err(Error::MouthClosure(format!(
            "broadened mouth UV rectangle [{u0}, {v0}, {}, {}] leaves the unit square",
            u0 + w,
            v0 + h
        )));
    }

    let (n, m) = (la.len(), lb.len());
    let pos = |v: u32| mesh.vertices[v as usize];
    let uv_a = |i: usize| [u0 + w * i as Real / n as Real, v0];
    let uv_b = |j: usize| [u0 + w * j as Real / m as Real, v0 + h];

    let mut patched = mesh.clone();
    let (mut i, mut j) = (0usize, 0usize);
    while i < n || j < m {
        let advance_a = if i == n {
            false
        } else if j == m {
            true
        } else {
            let diag_a = (pos(la[(i + 1) % n]) - pos(lb[j % m])).norm();
            let diag_b = (pos(la[i % n]) - pos(lb[(j + 1) % m])).norm();
            diag_a <= diag_b
        };
        let (mut face, mut uvs) = if advance_a {
            (
                [lb[j % m], la[i % n], la[(i + 1) % n]],
                [uv_b(j), uv_a(i), uv_a(i + 1)],
            )
        } else {
            (
                [lb[j % m], la[i % n], lb[(j + 1) % m]],
                [uv_b(j), uv_a(i), uv_b(j + 1)],
            )
        };
        if flip {
            face.swap(1, 2);
            uvs.swap(1, 2);
        }
        patched.faces.push(face);
        patched.uv_coords.push(uvs);
        patched.regions.push(false, false, true);
        if advance_a {
            i += 1;
        } else {
            j += 1;
        }
    }
    patched.lip_loops = Some([la.clone(), lb.clone()]);
    patched.mouth_uv_rect = Some([u0, v0, u0 + w, v0 + h]);
    Ok(patched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::nested_cup;

    #[test]
    fn two_four_vertex_loops_add_eight_faces() {
        let (mesh, loops) = nested_cup();
        let patched = close_mouth(&mesh, &loops, &MouthClosure::default()).unwrap();
        assert_eq!(patched.face_count(), mesh.face_count() + 8);
        assert!(patched.regions.mouth[mesh.face_count()..].iter().all(|&m| m));
    }

    #[test]
    fn patched_cup_is_watertight() {
        let (mesh, loops) = nested_cup();
        assert!(!mesh.is_watertight_over(|f| mesh.regions.is_sampled(f)));
        let patched = close_mouth(&mesh, &loops, &MouthClosure::default()).unwrap();
        assert!(patched.is_watertight_over(|f| patched.regions.is_sampled(f)));
        patched.validate().unwrap();
    }

    #[test]
    fn closure_preserves_existing_geometry() {
        let (mesh, loops) = nested_cup();
        let patched = close_mouth(&mesh, &loops, &MouthClosure::default()).unwrap();
        assert_eq!(patched.vertices, mesh.vertices);
        assert_eq!(&patched.faces[..mesh.face_count()], &mesh.faces[..]);
        assert_eq!(&patched.uv_coords[..mesh.face_count()], &mesh.uv_coords[..]);
    }

    #[test]
    fn strip_is_consistently_oriented() {
        let (mesh, loops) = nested_cup();
        let patched = close_mouth(&mesh, &loops, &MouthClosure::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        for f in &patched.faces {
            for k in 0..3 {
                assert!(seen.insert((f[k], f[(k + 1) % 3])), "half-edge used twice");
            }
        }
    }

    #[test]
    fn rejects_non_boundary_loop() {
        let (mesh, loops) = nested_cup();
        // the first four vertices of the outer box bottom are interior
        let bad = [vec![0, 1, 2, 3], loops[1].clone()];
        assert!(matches!(
            close_mouth(&mesh, &bad, &MouthClosure::default()),
            Err(Error::MouthClosure(_))
        ));
    }

    #[test]
    fn rejects_opposite_orientation() {
        let (mesh, loops) = nested_cup();
        let mut reversed = loops[1].clone();
        reversed.reverse();
        let bad = [loops[0].clone(), reversed];
        let err = close_mouth(&mesh, &bad, &MouthClosure::default()).unwrap_err();
        assert!(err.to_string().contains("orientation"), "{err}");
    }

    #[test]
    fn rejects_broadening_outside_unit_square() {
        let (mesh, loops) = nested_cup();
        let opts = MouthClosure {
            uv_area_multiplier: 100.0,
            uv_rect: None,
        };
        assert!(close_mouth(&mesh, &loops, &opts).is_err());
    }
}
