use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::linalg::Matrix;

/// Weights of the two-layer GCN: `w1` is `d × h`, `w2` is `h × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl ModelParams {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self, NnError> {
        if w2.cols() != 1 || w1.cols() != w2.rows() {
            return Err(NnError::ShapeMismatch(format!(
                "w1 {:?} and w2 {:?} do not chain into a binary head",
                w1.shape(),
                w2.shape()
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, h),
            w2: Matrix::zeros(h, 1),
        }
    }

    /// Glorot-uniform initialization.
    pub fn glorot(d: usize, h: usize, rng: &mut impl Rng) -> Self {
        let mut fill = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let w1 = fill(d, h);
        let w2 = fill(h, 1);
        Self { w1, w2 }
    }

    /// `(d, h)`
    pub fn dims(&self) -> (usize, usize) {
        self.w1.shape()
    }

    pub fn num_values(&self) -> usize {
        self.w1.as_slice().len() + self.w2.as_slice().len()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1.as_slice().iter().chain(self.w2.as_slice()).copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .as_mut_slice()
            .iter_mut()
            .chain(self.w2.as_mut_slice().iter_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub fn from_flat(d: usize, h: usize, flat: &[f64]) -> Result<Self, NnError> {
        if flat.len() != d * h + h {
            return Err(NnError::ShapeMismatch(format!(
                "{} values cannot fill a ({d}, {h}) model",
                flat.len()
            )));
        }
        Ok(Self {
            w1: Matrix::from_vec(d, h, flat[..d * h].to_vec()),
            w2: Matrix::from_vec(h, 1, flat[d * h..].to_vec()),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.w1.shape() == other.w1.shape() && self.w2.shape() == other.w2.shape()
    }

    /// Elementwise `(1 − t)·self + t·other`, clamped into the segment between
    /// the two endpoints so every coordinate stays between them.
    pub fn interpolate(&self, other: &ModelParams, t: f64) -> Result<ModelParams, NnError> {
        if !self.same_shape(other) {
            return Err(NnError::ShapeMismatch("interpolation endpoints differ".into()));
        }
        let mut out = self.clone();
        for (o, b) in out.values_mut().zip(other.values()) {
            let a = *o;
            let v = (1.0 - t) * a + t * b;
            *o = v.clamp(a.min(b), a.max(b));
        }
        Ok(out)
    }

    /// `Σ wᵢ · paramsᵢ`
    pub fn weighted_sum(items: &[(&ModelParams, f64)]) -> Result<ModelParams, NnError> {
        let Some(((first, _), rest)) = items.split_first() else {
            return Err(NnError::ShapeMismatch("no models to combine".into()));
        };
        if rest.iter().any(|(p, _)| !p.same_shape(first)) {
            return Err(NnError::ShapeMismatch("models to combine differ in shape".into()));
        }
        let (d, h) = first.dims();
        let mut out = ModelParams::zeros(d, h);
        for (p, w) in items {
            for (o, v) in out.values_mut().zip(p.values()) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Wire format: `d` and `h` as little-endian u64, then every weight as a
    /// little-endian f64 (`w1` row-major, then `w2`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let (d, h) = self.dims();
        let mut buf = Vec::with_capacity(16 + 8 * self.num_values());
        buf.extend_from_slice(&(d as u64).to_le_bytes());
        buf.extend_from_slice(&(h as u64).to_le_bytes());
        for v in self.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, NnError> {
        if buf.len() < 16 {
            return Err(NnError::Wire("buffer shorter than shape header".into()));
        }
        let word = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        let (d, h) = (word(0) as usize, word(8) as usize);
        let expected = d
            .checked_mul(h)
            .and_then(|dh| dh.checked_add(h))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(16))
            .ok_or_else(|| NnError::Wire("shape header overflows".into()))?;
        if buf.len() != expected {
            return Err(NnError::Wire(format!(
                "expected {expected} bytes for shape ({d}, {h}), got {}",
                buf.len()
            )));
        }
        let flat: Vec<f64> = buf[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(d, h, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn filled(d: usize, h: usize, v: f64) -> ModelParams {
        let mut p = ModelParams::zeros(d, h);
        p.values_mut().for_each(|x| *x = v);
        p
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let local = filled(3, 2, 0.0);
        let global = filled(3, 2, 2.0);
        assert_eq!(local.interpolate(&global, 0.0).unwrap(), local);
        assert_eq!(local.interpolate(&global, 1.0).unwrap(), global);
        assert_eq!(local.interpolate(&global, 0.5).unwrap(), filled(3, 2, 1.0));
    }

    #[test]
    fn weighted_sum_arithmetic() {
        let a = filled(2, 2, 0.0);
        let b = filled(2, 2, 4.0);
        let out = ModelParams::weighted_sum(&[(&a, 0.25), (&b, 0.75)]).unwrap();
        assert_eq!(out, filled(2, 2, 3.0));
        assert_eq!(ModelParams::weighted_sum(&[(&b, 1.0)]).unwrap(), b);
        let c = filled(3, 2, 1.0);
        assert!(ModelParams::weighted_sum(&[(&a, 0.5), (&c, 0.5)]).is_err());
    }

    #[test]
    fn wire_format_layout() {
        let p = ModelParams::from_flat(1, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 16 + 4 * 8);
        assert_eq!(&bytes[..8], &1u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[40..48], &4.0f64.to_le_bytes());
        assert!(ModelParams::from_bytes(&bytes[..30]).is_err());
        assert!(ModelParams::from_bytes(&[0u8; 5]).is_err());
    }

    proptest! {
        #[test]
        fn wire_round_trip(d in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let p = ModelParams::glorot(d, h, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(ModelParams::from_bytes(&p.to_bytes()).unwrap(), p);
        }

        #[test]
        fn interpolation_is_convex(seed in any::<u64>(), t in 0.0f64..=1.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = ModelParams::glorot(4, 3, &mut rng);
            let b = ModelParams::glorot(4, 3, &mut rng);
            let m = a.interpolate(&b, t).unwrap();
            for ((x, y), z) in a.values().zip(b.values()).zip(m.values()) {
                prop_assert!(x.min(y) <= z && z <= x.max(y));
            }
        }
    }
}
