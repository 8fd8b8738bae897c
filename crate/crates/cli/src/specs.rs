//! Parsers for the compact command-line value formats.

use std::path::Path;

use meshsplat_core::gaussians::Orbit;
use meshsplat_core::math::Real;

use crate::failure::{CliResult, Failure};

/// `radius,elevation,azimuth-range,frames`; the range is `a:b` in degrees or a
/// single total sweep centred on zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSpec {
    pub radius: Real,
    pub elevation_deg: Real,
    pub azimuth_from: Real,
    pub azimuth_to: Real,
    pub frames: usize,
}

impl OrbitSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = |why: &str| Failure::usage(format!("--orbit {text:?}: {why}"));
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad("expected radius,elev,azim-range,frames"));
        }
        let num = |s: &str| s.parse::<Real>().map_err(|_| bad(&format!("{s:?} is not a number")));
        let radius = num(parts[0])?;
        let elevation_deg = num(parts[1])?;
        let (azimuth_from, azimuth_to) = match parts[2].split_once(':') {
            Some((a, b)) => (num(a)?, num(b)?),
            None => {
                let sweep = num(parts[2])?;
                (-0.5 * sweep, 0.5 * sweep)
            }
        };
        let frames: usize = parts[3].parse().map_err(|_| bad("frames must be a positive integer"))?;
        if frames == 0 || !(radius > 0.0) {
            return Err(bad("radius and frames must be positive"));
        }
        Ok(Self {
            radius,
            elevation_deg,
            azimuth_from,
            azimuth_to,
            frames,
        })
    }

    /// Pose `k` of `count`, spread evenly over the azimuth range.
    pub fn pose(&self, k: usize, count: usize, fov_deg: Real) -> Orbit {
        let t = if count > 1 { k as Real / (count - 1) as Real } else { 0.5 };
        let t = if count > 1 && (self.azimuth_to - self.azimuth_from).abs() >= 360.0 {
            // A full turn would repeat the first pose at the end.
            k as Real / count as Real
        } else {
            t
        };
        Orbit {
            radius: self.radius,
            elevation_deg: self.elevation_deg,
            azimuth_deg: self.azimuth_from + t * (self.azimuth_to - self.azimuth_from),
            fov_deg,
        }
    }
}

/// `WxH`.
pub fn parse_size(text: &str) -> CliResult<(u32, u32)> {
    let bad = || Failure::usage(format!("size {text:?}: expected WIDTHxHEIGHT"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// An expression code given inline (`[0.1, 0.2]`) or as a JSON file holding
/// either an array or an object with a `psi` array.
pub fn parse_psi(arg: &str) -> CliResult<Vec<Real>> {
    let text = if arg.trim_start().starts_with(['[', '{']) {
        arg.to_owned()
    } else {
        std::fs::read_to_string(Path::new(arg)).map_err(|e| Failure::new("io", format!("{arg}: {e}")))?
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::new("json", format!("--psi-json: {e}")))?;
    let array = match &value {
        serde_json::Value::Object(m) => m.get("psi").cloned().unwrap_or_default(),
        v => v.clone(),
    };
    serde_json::from_value(array)
        .map_err(|_| Failure::usage("--psi-json must be a number array or an object with a \"psi\" array"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_with_symmetric_sweep() {
        let o = OrbitSpec::parse("3.2, 10, 60, 5").unwrap();
        assert_eq!((o.azimuth_from, o.azimuth_to, o.frames), (-30.0, 30.0, 5));
        assert_eq!(o.pose(0, 5, 40.0).azimuth_deg, -30.0);
        assert_eq!(o.pose(4, 5, 40.0).azimuth_deg, 30.0);
        assert_eq!(o.pose(0, 1, 40.0).azimuth_deg, 0.0);
    }

    #[test]
    fn full_turn_does_not_repeat() {
        let o = OrbitSpec::parse("3,0,0:360,4").unwrap();
        let az: Vec<Real> = (0..4).map(|k| o.pose(k, 4, 40.0).azimuth_deg).collect();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);
    }

    #[test]
    fn malformed_orbits() {
        for s in ["3,0,10", "x,0,10,2", "3,0,10,0", "-1,0,10,2"] {
            assert!(OrbitSpec::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("512x256").unwrap(), (512, 256));
        assert!(parse_size("512").is_err());
        assert!(parse_size("0x4").is_err());
    }

    #[test]
    fn psi_inline_and_object() {
        assert_eq!(parse_psi("[0.5, -1]").unwrap(), vec![0.5, -1.0]);
        assert_eq!(parse_psi(r#"{"psi": [2]}"#).unwrap(), vec![2.0]);
        assert!(parse_psi(r#"{"x": 1}"#).is_err());
    }
}
