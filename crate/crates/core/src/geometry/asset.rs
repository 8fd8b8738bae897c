//! Mesh asset on disk: an OBJ (positions + per-corner UVs), a JSON sidecar with
//! the expression layout, articulations, region masks and lip loops, and a raw
//! little-endian row-major f32 blob holding the deformation bases.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::{Articulation, BlendshapeMesh, ExpressionLayout, RegionMask};
use crate::error::{Error, Result};
use crate::math::{Real, Vec3};

pub const MESH_FORMAT: &str = "meshsplat-mesh";
pub const MESH_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasesRef {
    pub path: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub order: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RegionLists {
    /// Faces outside the head region.
    #[serde(default)]
    pub non_head: Vec<u32>,
    #[serde(default)]
    pub boundary: Vec<u32>,
    #[serde(default)]
    pub mouth: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshSidecar {
    pub format: String,
    pub version: u32,
    pub obj: String,
    pub bases: BasesRef,
    pub layout: ExpressionLayout,
    #[serde(default)]
    pub articulations: Vec<Articulation>,
    #[serde(default)]
    pub regions: RegionLists,
    #[serde(default)]
    pub lip_loops: Option<[Vec<u32>; 2]>,
    #[serde(default)]
    pub mouth_uv_rect: Option<[Real; 4]>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct ObjData {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    uv_coords: Vec<[[Real; 2]; 3]>,
}

fn resolve_index(raw: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let idx: i64 = raw
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad index '{raw}'")))?;
    let resolved = if idx < 0 { count as i64 + idx } else { idx - 1 };
    if resolved < 0 || resolved as usize >= count {
        return Err(parse_err(path, line, format!("index {idx} out of range")));
    }
    Ok(resolved as usize)
}

fn parse_obj(text: &str, path: &Path) -> Result<ObjData> {
    let mut vertices = Vec::new();
    let mut tex = Vec::new();
    let mut faces = Vec::new();
    let mut uv_coords = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let tag = parts.next().unwrap();
        let fields: Vec<&str> = parts.collect();
        let floats = |n: usize| -> Result<Vec<Real>> {
            if fields.len() < n {
                return Err(parse_err(path, line, format!("'{tag}' needs {n} values")));
            }
            fields[..n]
                .iter()
                .map(|s| {
                    s.parse::<Real>()
                        .map_err(|_| parse_err(path, line, format!("bad number '{s}'")))
                })
                .collect()
        };
        match tag {
            "v" => {
                let p = floats(3)?;
                vertices.push(Vec3::new(p[0], p[1], p[2]));
            }
            "vt" => {
                let p = floats(2)?;
                tex.push([p[0], p[1]]);
            }
            "f" => {
                if fields.len() != 3 {
                    return Err(parse_err(
                        path,
                        line,
                        format!("only triangles are supported, got {} corners", fields.len()),
                    ));
                }
                let mut face = [0u32; 3];
                let mut uvs = [[0.0; 2]; 3];
                for (k, corner) in fields.iter().enumerate() {
                    let mut it = corner.split('/');
                    let vi = resolve_index(it.next().unwrap_or(""), vertices.len(), path, line)?;
                    let ti = match it.next() {
                        Some(t) if !t.is_empty() => resolve_index(t, tex.len(), path, line)?,
                        _ => return Err(parse_err(path, line, "face corner lacks a UV index")),
                    };
                    face[k] = vi as u32;
                    uvs[k] = tex[ti];
                }
                faces.push(face);
                uv_coords.push(uvs);
            }
            // groups, materials, normals, smoothing: irrelevant here
            "vn" | "g" | "o" | "s" | "usemtl" | "mtllib" => {}
            other => return Err(parse_err(path, line, format!("unknown OBJ record '{other}'"))),
        }
    }
    Ok(ObjData {
        vertices,
        faces,
        uv_coords,
    })
}

fn write_obj(mesh: &BlendshapeMesh) -> String {
    let mut out = String::from("# meshsplat mesh\n");
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for uvs in &mesh.uv_coords {
        for uv in uvs {
            let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let t = 3 * f + 1;
        let _ = writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            face[0] + 1,
            t,
            face[1] + 1,
            t + 1,
            face[2] + 1,
            t + 2
        );
    }
    out
}

fn mask_from_lists(lists: &RegionLists, faces: usize, path: &Path) -> Result<RegionMask> {
    let mut mask = RegionMask::all_head(faces);
    let set = |list: &[u32], target: &mut Vec<bool>, value: bool| -> Result<()> {
        for &f in list {
            let slot = target.get_mut(f as usize).ok_or_else(|| {
                parse_err(path, 0, format!("region mask names face {f} but mesh has {faces}"))
            })?;
            *slot = value;
        }
        Ok(())
    };
    set(&lists.non_head, &mut mask.head, false)?;
    set(&lists.boundary, &mut mask.boundary, true)?;
    set(&lists.mouth, &mut mask.mouth, true)?;
    Ok(mask)
}

fn lists_from_mask(mask: &RegionMask) -> RegionLists {
    let collect = |v: &[bool], want: bool| {
        v.iter()
            .enumerate()
            .filter(|(_, &b)| b == want)
            .map(|(i, _)| i as u32)
            .collect()
    };
    RegionLists {
        non_head: collect(&mask.head, false),
        boundary: collect(&mask.boundary, true),
        mouth: collect(&mask.mouth, true),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a mesh asset from its JSON sidecar, or from a bare OBJ (no bases).
pub fn load_mesh_asset(path: impl AsRef<Path>) -> Result<BlendshapeMesh> {
    let path = path.as_ref();
    let is_obj = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("obj"))
        .unwrap_or(false);
    if is_obj {
        let sidecar = path.with_extension("json");
        if sidecar.exists() {
            return load_mesh_asset(sidecar);
        }
        let obj = parse_obj(&read_text(path)?, path)?;
        let faces = obj.faces.len();
        let mesh = BlendshapeMesh {
            vertices: obj.vertices,
            faces: obj.faces,
            uv_coords: obj.uv_coords,
            deform_bases: Vec::new(),
            layout: ExpressionLayout { blocks: vec![] },
            articulations: vec![],
            regions: RegionMask::all_head(faces),
            lip_loops: None,
            mouth_uv_rect: None,
        };
        mesh.validate()?;
        return Ok(mesh);
    }

    let text = read_text(path)?;
    let sidecar: MeshSidecar = serde_json::from_str(&text)
        .map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    if sidecar.format != MESH_FORMAT {
        return Err(parse_err(path, 1, format!("unexpected format '{}'", sidecar.format)));
    }
    if sidecar.version != MESH_VERSION {
        return Err(parse_err(path, 1, format!("unsupported version {}", sidecar.version)));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let obj_path = dir.join(&sidecar.obj);
    let obj = parse_obj(&read_text(&obj_path)?, &obj_path)?;

    let bases_path = dir.join(&sidecar.bases.path);
    if sidecar.bases.dtype != "f32" || sidecar.bases.order != "row-major" {
        return Err(parse_err(path, 0, "bases must be row-major f32"));
    }
    let expected_rows = 3 * obj.vertices.len();
    if sidecar.bases.rows != expected_rows || sidecar.bases.cols != sidecar.layout.dim() {
        return Err(parse_err(
            path,
            0,
            format!(
                "bases declared {}x{}, mesh needs {}x{}",
                sidecar.bases.rows,
                sidecar.bases.cols,
                expected_rows,
                sidecar.layout.dim()
            ),
        ));
    }
    let blob = fs::read(&bases_path).map_err(|e| Error::io(&bases_path, e))?;
    let want = sidecar.bases.rows * sidecar.bases.cols * 4;
    if blob.len() != want {
        return Err(Error::Format {
            path: bases_path,
            offset: blob.len().min(want) as u64,
            message: format!("expected {want} bytes, found {}", blob.len()),
        });
    }
    let mut deform_bases = vec![0f32; want / 4];
    LittleEndian::read_f32_into(&blob, &mut deform_bases);

    let regions = mask_from_lists(&sidecar.regions, obj.faces.len(), path)?;
    let mesh = BlendshapeMesh {
        vertices: obj.vertices,
        faces: obj.faces,
        uv_coords: obj.uv_coords,
        deform_bases,
        layout: sidecar.layout,
        articulations: sidecar.articulations,
        regions,
        lip_loops: sidecar.lip_loops,
        mouth_uv_rect: sidecar.mouth_uv_rect,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Writes `<stem>.obj`, `<stem>.json` and `<stem>_bases.bin` next to `json_path`.
pub fn save_mesh_asset(mesh: &BlendshapeMesh, json_path: impl AsRef<Path>) -> Result<PathBuf> {
    let json_path = json_path.as_ref().with_extension("json");
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_owned();
    let obj_name = format!("{stem}.obj");
    let bases_name = format!("{stem}_bases.bin");

    let obj_path = dir.join(&obj_name);
    fs::write(&obj_path, write_obj(mesh)).map_err(|e| Error::io(&obj_path, e))?;

    let mut blob = vec![0u8; mesh.deform_bases.len() * 4];
    LittleEndian::write_f32_into(&mesh.deform_bases, &mut blob);
    let bases_path = dir.join(&bases_name);
    fs::write(&bases_path, blob).map_err(|e| Error::io(&bases_path, e))?;

    let sidecar = MeshSidecar {
        format: MESH_FORMAT.into(),
        version: MESH_VERSION,
        obj: obj_name,
        bases: BasesRef {
            path: bases_name,
            rows: 3 * mesh.vertex_count(),
            cols: mesh.code_dim(),
            dtype: "f32".into(),
            order: "row-major".into(),
        },
        layout: mesh.layout.clone(),
        articulations: mesh.articulations.clone(),
        regions: lists_from_mask(&mesh.regions),
        lip_loops: mesh.lip_loops.clone(),
        mouth_uv_rect: mesh.mouth_uv_rect,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(json_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{SyntheticAvatar, SyntheticAvatarConfig};

    #[test]
    fn asset_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let avatar = SyntheticAvatar::build(&SyntheticAvatarConfig {
            with_jaw: true,
            ..Default::default()
        });
        let mut mesh = avatar.mesh.clone();
        mesh.regions.boundary[3] = true;
        mesh.regions.head[5] = false;
        let path = save_mesh_asset(&mesh, dir.path().join("head.json")).unwrap();
        let loaded = load_mesh_asset(&path).unwrap();
        assert_eq!(loaded, mesh);
        // loading through the OBJ finds the sidecar
        assert_eq!(load_mesh_asset(dir.path().join("head.obj")).unwrap(), mesh);
    }

    #[test]
    fn malformed_obj_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 x\n").unwrap();
        match load_mesh_asset(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_bases_blob_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let avatar = SyntheticAvatar::build(&SyntheticAvatarConfig::default());
        let path = save_mesh_asset(&avatar.mesh, dir.path().join("m.json")).unwrap();
        let blob = dir.path().join("m_bases.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 6]).unwrap();
        match load_mesh_asset(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_face_index_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        fs::write(&p, "v 0 0 0\nvt 0 0\nf 1/1 2/1 1/1\n").unwrap();
        assert!(matches!(load_mesh_asset(&p), Err(Error::Parse { line: 3, .. })));
    }
}
