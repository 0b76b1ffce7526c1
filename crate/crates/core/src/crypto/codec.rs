//! Fixed-point quantization of tensors into 32-bit two's-complement words.

use super::CryptoError;
use crate::tensor::Tensor;
use crate::Scalar;

pub const DEFAULT_FRAC_BITS: u8 = 16;
pub const MAX_FRAC_BITS: u8 = 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntBlob {
    pub shape: Vec<usize>,
    pub frac_bits: u8,
    /// `i32` values reinterpreted as `u32`.
    pub words: Vec<u32>,
    /// Elements clamped to the representable range.
    pub saturated: usize,
}

impl IntBlob {
    pub fn saturation_ratio(&self) -> f64 {
        if self.words.is_empty() {
            0.0
        } else {
            self.saturated as f64 / self.words.len() as f64
        }
    }
}

pub fn quantize<T: Scalar>(t: &Tensor<T>, frac_bits: u8) -> Result<IntBlob, CryptoError> {
    if frac_bits > MAX_FRAC_BITS {
        return Err(CryptoError::FracBits(frac_bits));
    }
    let scale = (frac_bits as f64).exp2();
    let mut saturated = 0;
    let words = t
        .data()
        .iter()
        .map(|v| {
            let r = (v.to_f64_lossy() * scale).round();
            let q = if r.is_nan() {
                saturated += 1;
                0
            } else if r > i32::MAX as f64 {
                saturated += 1;
                i32::MAX
            } else if r < i32::MIN as f64 {
                saturated += 1;
                i32::MIN
            } else {
                r as i32
            };
            q as u32
        })
        .collect();
    Ok(IntBlob {
        shape: t.shape().to_vec(),
        frac_bits,
        words,
        saturated,
    })
}

pub fn dequantize<T: Scalar>(blob: &IntBlob) -> Result<Tensor<T>, CryptoError> {
    if blob.frac_bits > MAX_FRAC_BITS {
        return Err(CryptoError::FracBits(blob.frac_bits));
    }
    let scale = (-(blob.frac_bits as f64)).exp2();
    let data = blob.words.iter().map(|&w| T::of(w as i32 as f64 * scale)).collect();
    Tensor::new(&blob.shape, data).map_err(|e| CryptoError::BlobShape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let t = Tensor::new(&[3], vec![1.0f32, 0.0, -1.5]).unwrap();
        let b = quantize(&t, 16).unwrap();
        assert_eq!(b.words, vec![65536, 0, (-98304i32) as u32]);
        assert_eq!(dequantize::<f32>(&b).unwrap(), t);
    }

    #[test]
    fn saturation_is_counted() {
        let t = Tensor::new(&[4], vec![1e6f64, -1e6, 3.0, f64::NAN]).unwrap();
        let b = quantize(&t, 16).unwrap();
        assert_eq!(b.saturated, 3);
        assert_eq!(b.words[0] as i32, i32::MAX);
        assert_eq!(b.words[1] as i32, i32::MIN);
        assert!(quantize(&t, 31).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let b = IntBlob {
            shape: vec![2, 2],
            frac_bits: 16,
            words: vec![0; 3],
            saturated: 0,
        };
        assert!(matches!(dequantize::<f32>(&b), Err(CryptoError::BlobShape(_))));
    }
}
