//! Surface binding through UV rasterization.
//!
//! The canonical mesh is rasterized into its UV chart once. Every covered texel
//! centre of a sampled face becomes one Gaussian anchor, stored as a face index
//! plus fixed barycentric weights, so anchors follow any later deformation of
//! the mesh. Faces in regions with a density multiplier `k > 1` are sampled on
//! a `k`-times finer lattice.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::geometry::{BlendshapeMesh, RegionMask};
use crate::math::{Real, Vec3};

pub const BINDING_MAGIC: &[u8; 8] = b"MSBIND\0\0";
pub const BINDING_VERSION: u32 = 1;
const RECORD_BYTES: u64 = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub face: u32,
    pub barycentric: [f32; 3],
    pub uv: [f32; 2],
}

/// Fixed-count set of surface anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceBinding {
    samples: Vec<SurfaceSample>,
    /// Vertex triple of each sample's face, resolved against the bound mesh.
    corners: Vec<[u32; 3]>,
    vertex_count: usize,
    resolution: u32,
}

/// Per-region sampling density factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionMultipliers {
    pub mouth: u32,
}

impl Default for RegionMultipliers {
    fn default() -> Self {
        Self { mouth: 2 }
    }
}

impl RegionMultipliers {
    pub fn uniform() -> Self {
        Self { mouth: 1 }
    }
}

#[inline]
fn orient(a: [Real; 2], b: [Real; 2], p: [Real; 2]) -> Real {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Barycentric weights of `p` in `tri` when `p` lies inside or on an edge.
pub fn uv_barycentric(tri: &[[Real; 2]; 3], p: [Real; 2]) -> Option<[Real; 3]> {
    let area = orient(tri[0], tri[1], tri[2]);
    if area.abs() < 1e-14 {
        return None;
    }
    let w0 = orient(tri[1], tri[2], p) / area;
    let w1 = orient(tri[2], tri[0], p) / area;
    let w2 = orient(tri[0], tri[1], p) / area;
    (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0).then_some([w0, w1, w2])
}

fn quantize_barycentric(b: [Real; 3]) -> [f32; 3] {
    let b = b.map(|x| x.max(0.0));
    let s = b[0] + b[1] + b[2];
    [(b[0] / s) as f32, (b[1] / s) as f32, (b[2] / s) as f32]
}

/// Samples covered texel centres of every sampled face.
///
/// Order is row-major over texels (`v` rows, then `u`), then by density
/// multiplier, then by sub-sample in row-major order. A lattice point covered
/// by several faces belongs to the lowest face index.
pub fn rasterize_uv(
    mesh: &BlendshapeMesh,
    resolution: usize,
    mask: &RegionMask,
    multipliers: RegionMultipliers,
) -> Result<SurfaceBinding> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "UV resolution must be at least 2, got {resolution}"
        )));
    }
    if mask.len() != mesh.face_count() {
        return Err(Error::DimensionMismatch {
            what: "region mask",
            expected: mesh.face_count(),
            actual: mask.len(),
        });
    }
    if multipliers.mouth == 0 {
        return Err(Error::InvalidArgument("region multiplier must be >= 1".into()));
    }
    /// Owning face and barycentric weights of a lattice cell.
    type Owner = (u32, [f32; 3]);
    let face_k = |f: usize| if mask.mouth[f] { multipliers.mouth } else { 1 };

    let mut levels: Vec<u32> = (0..mesh.face_count())
        .filter(|&f| mask.is_sampled(f))
        .map(face_k)
        .collect();
    levels.sort_unstable();
    levels.dedup();

    // one ownership lattice per density level
    let mut lattices: Vec<(u32, Vec<Option<Owner>>)> = Vec::new();
    for &k in &levels {
        let fine = resolution * k as usize;
        let mut cells = vec![None; fine * fine];
        let fine_r = fine as Real;
        for f in 0..mesh.face_count() {
            if !mask.is_sampled(f) || face_k(f) != k {
                continue;
            }
            let tri = &mesh.uv_coords[f];
            let (mut umin, mut umax, mut vmin, mut vmax) = (Real::MAX, Real::MIN, Real::MAX, Real::MIN);
            for p in tri {
                umin = umin.min(p[0]);
                umax = umax.max(p[0]);
                vmin = vmin.min(p[1]);
                vmax = vmax.max(p[1]);
            }
            let lo = |x: Real| ((x * fine_r - 0.5).ceil().max(0.0)) as usize;
            let hi = |x: Real| ((x * fine_r - 0.5).floor().min(fine_r - 1.0)).max(-1.0) as i64;
            let (i0, i1) = (lo(umin), hi(umax));
            let (j0, j1) = (lo(vmin), hi(vmax));
            for j in j0 as i64..=j1 {
                for i in i0 as i64..=i1 {
                    let cell = &mut cells[j as usize * fine + i as usize];
                    if cell.is_some() {
                        continue;
                    }
                    let p = [(i as Real + 0.5) / fine_r, (j as Real + 0.5) / fine_r];
                    if let Some(b) = uv_barycentric(tri, p) {
                        *cell = Some((f as u32, quantize_barycentric(b)));
                    }
                }
            }
        }
        lattices.push((k, cells));
    }

    let mut samples = Vec::new();
    for ty in 0..resolution {
        for tx in 0..resolution {
            for (k, cells) in &lattices {
                let k = *k as usize;
                let fine = resolution * k;
                for sy in 0..k {
                    for sx in 0..k {
                        let (i, j) = (tx * k + sx, ty * k + sy);
                        if let Some((face, barycentric)) = cells[j * fine + i] {
                            samples.push(SurfaceSample {
                                face,
                                barycentric,
                                uv: [
                                    ((i as Real + 0.5) / fine as Real) as f32,
                                    ((j as Real + 0.5) / fine as Real) as f32,
                                ],
                            });
                        }
                    }
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyCoverage { resolution });
    }
    SurfaceBinding::from_samples(samples, resolution as u32, mesh)
}

impl SurfaceBinding {
    /// Validates samples against `mesh` and resolves their vertex triples.
    pub fn from_samples(
        samples: Vec<SurfaceSample>,
        resolution: u32,
        mesh: &BlendshapeMesh,
    ) -> Result<Self> {
        let mut corners = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let face = mesh.faces.get(s.face as usize).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "sample {i} names face {} but mesh has {}",
                    s.face,
                    mesh.face_count()
                ))
            })?;
            let sum: f64 = s.barycentric.iter().map(|&b| b as f64).sum();
            if s.barycentric.iter().any(|&b| b < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has invalid barycentric weights {:?}",
                    s.barycentric
                )));
            }
            corners.push(*face);
        }
        Ok(Self {
            samples,
            corners,
            vertex_count: mesh.vertex_count(),
            resolution,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn samples(&self) -> &[SurfaceSample] {
        &self.samples
    }

    /// Anchor positions on a (deformed) vertex set of the bound mesh.
    pub fn anchors(&self, vertices: &[Vec3]) -> Result<Vec<Vec3>> {
        if vertices.len() != self.vertex_count {
            return Err(Error::DimensionMismatch {
                what: "vertex list for bound mesh",
                expected: self.vertex_count,
                actual: vertices.len(),
            });
        }
        Ok(self
            .samples
            .iter()
            .zip(&self.corners)
            .map(|(s, c)| {
                let b = s.barycentric;
                vertices[c[0] as usize] * b[0] as Real
                    + vertices[c[1] as usize] * b[1] as Real
                    + vertices[c[2] as usize] * b[2] as Real
            })
            .collect())
    }

    /// Anchors on the undeformed mesh.
    pub fn canonical_anchors(&self, mesh: &BlendshapeMesh) -> Result<Vec<Vec3>> {
        self.anchors(&mesh.vertices)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.samples.len() * RECORD_BYTES as usize);
        out.extend_from_slice(BINDING_MAGIC);
        out.write_u32::<LittleEndian>(BINDING_VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.samples.len() as u32).unwrap();
        out.write_u32::<LittleEndian>(self.resolution).unwrap();
        for s in &self.samples {
            out.write_u32::<LittleEndian>(s.face).unwrap();
            for b in s.barycentric {
                out.write_f32::<LittleEndian>(b).unwrap();
            }
            for u in s.uv {
                out.write_f32::<LittleEndian>(u).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], mesh: &BlendshapeMesh, path: &Path) -> Result<Self> {
        let fmt = |offset: u64, message: &str| Error::Format {
            path: path.to_path_buf(),
            offset,
            message: message.to_owned(),
        };
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| fmt(0, "truncated header"))?;
        if &magic != BINDING_MAGIC {
            return Err(fmt(0, "bad magic"));
        }
        let mut header = [0u32; 3];
        for h in &mut header {
            *h = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| fmt(cur.position(), "truncated header"))?;
        }
        let [version, count, resolution] = header;
        if version != BINDING_VERSION {
            return Err(fmt(8, &format!("unsupported version {version}")));
        }
        let expected = 20 + count as u64 * RECORD_BYTES;
        if bytes.len() as u64 != expected {
            return Err(fmt(
                (bytes.len() as u64).min(expected),
                &format!("expected {expected} bytes for {count} records, found {}", bytes.len()),
            ));
        }
        let mut samples = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let face = cur.read_u32::<LittleEndian>().unwrap();
            let mut barycentric = [0f32; 3];
            for b in &mut barycentric {
                *b = cur.read_f32::<LittleEndian>().unwrap();
            }
            let mut uv = [0f32; 2];
            for u in &mut uv {
                *u = cur.read_f32::<LittleEndian>().unwrap();
            }
            samples.push(SurfaceSample {
                face,
                barycentric,
                uv,
            });
        }
        Self::from_samples(samples, resolution, mesh)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, mesh: &BlendshapeMesh) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, mesh, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{close_mouth, ExpressionLayout, MouthClosure};
    use crate::synthetic::nested_cup;

    fn quad_mesh() -> BlendshapeMesh {
        // unit UV square as two triangles sharing the diagonal
        BlendshapeMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            uv_coords: vec![
                [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
                [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            ],
            deform_bases: vec![],
            layout: ExpressionLayout { blocks: vec![] },
            articulations: vec![],
            regions: RegionMask::all_head(2),
            lip_loops: None,
            mouth_uv_rect: None,
        }
    }

    #[test]
    fn full_coverage_quad_gives_one_sample_per_texel() {
        let mesh = quad_mesh();
        let b = rasterize_uv(&mesh, 4, &mesh.regions, RegionMultipliers::uniform()).unwrap();
        assert_eq!(b.len(), 16);
        // row-major texel order
        assert_eq!(b.samples()[0].uv, [0.125, 0.125]);
        assert_eq!(b.samples()[1].uv, [0.375, 0.125]);
        assert_eq!(b.samples()[4].uv, [0.125, 0.375]);
        // texels on the shared diagonal belong to the first face
        assert_eq!(b.samples()[5].face, 0);
    }

    #[test]
    fn resolution_below_two_is_rejected() {
        let mesh = quad_mesh();
        assert!(rasterize_uv(&mesh, 1, &mesh.regions, RegionMultipliers::uniform()).is_err());
    }

    #[test]
    fn fully_masked_mesh_has_empty_coverage() {
        let mesh = quad_mesh();
        let mut mask = mesh.regions.clone();
        mask.boundary = vec![true; 2];
        assert!(matches!(
            rasterize_uv(&mesh, 8, &mask, RegionMultipliers::uniform()),
            Err(Error::EmptyCoverage { .. })
        ));
    }

    #[test]
    fn barycentric_anchor_hits_vertex_and_centroid() {
        let mesh = quad_mesh();
        let samples = vec![
            SurfaceSample {
                face: 0,
                barycentric: [1.0, 0.0, 0.0],
                uv: [0.0, 0.0],
            },
            SurfaceSample {
                face: 0,
                barycentric: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                uv: [0.0, 0.0],
            },
        ];
        let eq = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, (3.0 as Real).sqrt() / 2.0, 0.0),
            Vec3::new(9.0, 9.0, 9.0),
        ];
        let b = SurfaceBinding::from_samples(samples, 2, &mesh).unwrap();
        let a = b.anchors(&eq).unwrap();
        assert_eq!(a[0], eq[0]);
        let centroid = (eq[0] + eq[1] + eq[2]) / 3.0;
        assert!((a[1] - centroid).norm() < 1e-7);
    }

    #[test]
    fn anchors_reject_wrong_vertex_count() {
        let mesh = quad_mesh();
        let b = rasterize_uv(&mesh, 4, &mesh.regions, RegionMultipliers::uniform()).unwrap();
        assert!(b.anchors(&mesh.vertices[..3]).is_err());
    }

    #[test]
    fn mouth_multiplier_supersamples_mouth_faces() {
        let (cup, loops) = nested_cup();
        let patched = close_mouth(&cup, &loops, &MouthClosure::default()).unwrap();
        let base = rasterize_uv(&patched, 64, &patched.regions, RegionMultipliers::uniform())
            .unwrap();
        let dense = rasterize_uv(&patched, 64, &patched.regions, RegionMultipliers { mouth: 2 })
            .unwrap();
        let mouth = |b: &SurfaceBinding| {
            b.samples()
                .iter()
                .filter(|s| patched.regions.mouth[s.face as usize])
                .count()
        };
        let non_mouth = |b: &SurfaceBinding| b.len() - mouth(b);
        assert_eq!(non_mouth(&base), non_mouth(&dense));
        let ratio = mouth(&dense) as f64 / mouth(&base) as f64;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn cache_rejects_bad_magic_and_truncation() {
        let mesh = quad_mesh();
        let b = rasterize_uv(&mesh, 4, &mesh.regions, RegionMultipliers::uniform()).unwrap();
        let mut bytes = b.to_bytes();
        let p = Path::new("mem");
        assert_eq!(SurfaceBinding::from_bytes(&bytes, &mesh, p).unwrap(), b);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            SurfaceBinding::from_bytes(&bytes, &mesh, p),
            Err(Error::Format { .. })
        ));
        bytes[0] = b'X';
        assert!(SurfaceBinding::from_bytes(&bytes, &mesh, p).is_err());
    }
}
