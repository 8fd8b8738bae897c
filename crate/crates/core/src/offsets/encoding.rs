use serde::{Deserialize, Serialize};

use crate::math::{Real, Vec3};

/// Sinusoidal encoding `[p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub frequencies: usize,
    pub include_input: bool,
}

impl Default for PositionalEncoding {
    fn default() -> Self {
        Self {
            frequencies: 6,
            include_input: true,
        }
    }
}

impl PositionalEncoding {
    pub fn dim(&self) -> usize {
        3 * (2 * self.frequencies + usize::from(self.include_input))
    }

    pub fn encode_into(&self, p: &Vec3, out: &mut [Real]) {
        debug_assert_eq!(out.len(), self.dim());
        let mut k = 0;
        if self.include_input {
            out[..3].copy_from_slice(p.as_slice());
            k = 3;
        }
        for f in 0..self.frequencies {
            let w = (1u64 << f) as Real * std::f64::consts::PI as Real;
            for a in 0..3 {
                out[k + a] = (w * p[a]).sin();
                out[k + 3 + a] = (w * p[a]).cos();
            }
            k += 6;
        }
    }

    pub fn encode(&self, p: &Vec3) -> Vec<Real> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(p, &mut out);
        out
    }

    /// `d out[k] / d p[axis(k)]` for every output; each output depends on one axis only.
    pub fn derivative(&self, p: &Vec3) -> Vec<Real> {
        let mut out = vec![0.0; self.dim()];
        let mut k = 0;
        if self.include_input {
            out[..3].fill(1.0);
            k = 3;
        }
        for f in 0..self.frequencies {
            let w = (1u64 << f) as Real * std::f64::consts::PI as Real;
            for a in 0..3 {
                out[k + a] = w * (w * p[a]).cos();
                out[k + 3 + a] = -w * (w * p[a]).sin();
            }
            k += 6;
        }
        out
    }

    /// Input axis each output component depends on.
    pub fn axis_of(&self, k: usize) -> usize {
        k % 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encoding() {
        let enc = PositionalEncoding {
            frequencies: 2,
            include_input: true,
        };
        let e = enc.encode(&Vec3::zeros());
        assert_eq!(e.len(), 15);
        assert_eq!(&e[..3], &[0.0; 3]);
        assert_eq!(&e[3..6], &[0.0; 3]);
        assert_eq!(&e[6..9], &[1.0; 3]);
        assert_eq!(&e[9..12], &[0.0; 3]);
        assert_eq!(&e[12..15], &[1.0; 3]);
    }

    #[test]
    fn default_dim_is_39() {
        assert_eq!(PositionalEncoding::default().dim(), 39);
        let no_input = PositionalEncoding {
            frequencies: 6,
            include_input: false,
        };
        assert_eq!(no_input.dim(), 36);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let enc = PositionalEncoding::default();
        let p = Vec3::new(0.31, -0.72, 0.05);
        let d = enc.derivative(&p);
        let h = 1e-6;
        for a in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let (ep, em) = (enc.encode(&pp), enc.encode(&pm));
            for k in 0..enc.dim() {
                let fd = (ep[k] - em[k]) / (2.0 * h);
                let an = if enc.axis_of(k) == a { d[k] } else { 0.0 };
                assert!((fd - an).abs() < 1e-5, "k={k} a={a} fd={fd} an={an}");
            }
        }
    }
}
