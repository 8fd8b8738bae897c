//! Tracked sequences: one JSON record per line describing a frame's
//! expression code, camera and (optionally) its image and mouth mask.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussians::{Camera, Intrinsics};
use crate::image::{Image, Mask};
use crate::math::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub psi: Vec<Real>,
    /// Row-major 4x4 camera-to-world.
    pub pose: [Real; 16],
    pub intrinsics: Intrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mouth_mask_path: Option<PathBuf>,
    /// Output size for records without an image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl FrameRecord {
    pub fn from_camera(frame_id: impl Into<String>, psi: Vec<Real>, camera: &Camera) -> Self {
        Self {
            frame_id: frame_id.into(),
            psi,
            pose: camera.camera_to_world(),
            intrinsics: camera.intrinsics,
            image_path: None,
            mouth_mask_path: None,
            width: Some(camera.width),
            height: Some(camera.height),
        }
    }

    pub fn camera(&self, width: u32, height: u32) -> Result<Camera> {
        Camera::from_camera_to_world(&self.pose, self.intrinsics, width, height)
    }

    /// Camera at the record's declared size, if it has one.
    pub fn declared_camera(&self) -> Result<Camera> {
        match (self.width, self.height) {
            (Some(w), Some(h)) => self.camera(w, h),
            _ => Err(Error::InvalidArgument(format!(
                "frame {} has no width/height",
                self.frame_id
            ))),
        }
    }
}

pub fn read_sequence(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_sequence(path: impl AsRef<Path>, records: &[FrameRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// A decoded frame ready for training or evaluation.
#[derive(Clone, Debug)]
pub struct TrainingFrame {
    pub frame_id: String,
    pub psi: Vec<Real>,
    pub camera: Camera,
    pub image: Image,
    pub mouth_mask: Option<Mask>,
}

/// Loads every frame of a sequence; relative paths resolve against the sequence's directory.
pub fn load_frames(sequence: impl AsRef<Path>) -> Result<Vec<TrainingFrame>> {
    let sequence = sequence.as_ref();
    let base = sequence.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::new();
    let mut unmasked = 0usize;
    for rec in read_sequence(sequence)? {
        let Some(img_path) = &rec.image_path else {
            return Err(Error::InvalidArgument(format!(
                "frame {} has no image_path",
                rec.frame_id
            )));
        };
        let image = Image::load_png(base.join(img_path))?;
        let mouth_mask = match &rec.mouth_mask_path {
            Some(p) => {
                let m = Mask::load_png(base.join(p))?;
                if m.width != image.width || m.height != image.height {
                    return Err(Error::InvalidArgument(format!(
                        "frame {}: mouth mask size differs from image",
                        rec.frame_id
                    )));
                }
                Some(m)
            }
            None => {
                unmasked += 1;
                None
            }
        };
        frames.push(TrainingFrame {
            camera: rec.camera(image.width, image.height)?,
            frame_id: rec.frame_id,
            psi: rec.psi,
            image,
            mouth_mask,
        });
    }
    if unmasked > 0 {
        log::warn!(
            "{}: {unmasked} of {} frames have no mouth mask; their mouth term is skipped",
            sequence.display(),
            frames.len()
        );
    }
    Ok(frames)
}

/// Writes frames as PNGs plus `sequence.jsonl` under `dir`. Returns the sequence path.
pub fn save_frames(dir: impl AsRef<Path>, frames: &[TrainingFrame]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(frames.len());
    for f in frames {
        let mut rec = FrameRecord::from_camera(&f.frame_id, f.psi.clone(), &f.camera);
        let img = PathBuf::from(format!("{}.png", f.frame_id));
        f.image.save_png(dir.join(&img))?;
        rec.image_path = Some(img);
        if let Some(m) = &f.mouth_mask {
            let p = PathBuf::from(format!("{}_mouth.png", f.frame_id));
            m.save_png(dir.join(&p))?;
            rec.mouth_mask_path = Some(p);
        }
        records.push(rec);
    }
    let seq = dir.join("sequence.jsonl");
    write_sequence(&seq, &records)?;
    Ok(seq)
}
