//! Symmetric uniform quantizer with a per-update max-abs scale.
//!
//! For `b >= 2` bits the levels are `{-L, .., 0, .., L} * s / L` with
//! `L = 2^(b-1) - 1`, so zero is always representable. One bit is a sign
//! quantizer onto `{-s, +s}`. 32 bits passes the `f32` values through.
//! Codes are packed MSB-first.

use super::CodecError;

pub const SUPPORTED_BITS: [u8; 4] = [1, 2, 4, 32];

pub fn check_bits(bits: u8) -> Result<(), CodecError> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(CodecError::InvalidBits(bits))
    }
}

/// Largest positive code offset `L`.
fn half_levels(bits: u8) -> u32 {
    (1u32 << (bits - 1)) - 1
}

/// Reconstruction levels for `bits` at `scale`, in code order.
pub fn levels(bits: u8, scale: f32) -> Result<Vec<f32>, CodecError> {
    check_bits(bits)?;
    match bits {
        1 => Ok(vec![-scale, scale]),
        32 => Err(CodecError::InvalidBits(bits)),
        _ => Ok((0..=2 * half_levels(bits)).map(|c| level(c, bits, scale)).collect()),
    }
}

fn level(code: u32, bits: u8, scale: f32) -> f32 {
    if bits == 1 {
        return if code == 1 { scale } else { -scale };
    }
    let l = half_levels(bits);
    (code as f32 - l as f32) * scale / l as f32
}

/// Worst-case per-element reconstruction error.
pub fn error_bound(bits: u8, scale: f32) -> Result<f32, CodecError> {
    check_bits(bits)?;
    Ok(match bits {
        1 => scale,
        32 => 0.0,
        b => scale / (2 * half_levels(b)) as f32,
    })
}

/// Returns the packed code stream and the scale.
pub fn quantize(v: &[f32], bits: u8) -> Result<(Vec<u8>, f32), CodecError> {
    check_bits(bits)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CodecError::NonFinite);
    }
    let scale = v.iter().fold(0.0f32, |m, x| m.max(x.abs()));
    if bits == 32 {
        return Ok((v.iter().flat_map(|x| x.to_le_bytes()).collect(), scale));
    }
    let per_byte = 8 / bits as usize;
    let mut out = vec![0u8; v.len().div_ceil(per_byte)];
    let l = half_levels(bits.max(2)) as f64;
    for (i, &x) in v.iter().enumerate() {
        let code = if bits == 1 {
            (x >= 0.0) as u32
        } else if scale == 0.0 {
            l as u32
        } else {
            ((x as f64 / scale as f64 * l).round() + l).clamp(0.0, 2.0 * l) as u32
        };
        let shift = 8 - bits as usize * (i % per_byte + 1);
        out[i / per_byte] |= (code as u8) << shift;
    }
    Ok((out, scale))
}

/// Inverse of [`quantize`]; `len` is the number of encoded values.
pub fn dequantize(codes: &[u8], scale: f32, bits: u8, len: usize) -> Result<Vec<f32>, CodecError> {
    check_bits(bits)?;
    if bits == 32 {
        if codes.len() != 4 * len {
            return Err(CodecError::Corrupt(format!("expected {} bytes of f32 codes, got {}", 4 * len, codes.len())));
        }
        return Ok(codes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
    }
    let per_byte = 8 / bits as usize;
    if codes.len() != len.div_ceil(per_byte) {
        return Err(CodecError::Corrupt(format!(
            "expected {} code bytes for {len} values, got {}",
            len.div_ceil(per_byte),
            codes.len()
        )));
    }
    let mask = (1u8 << bits) - 1;
    Ok((0..len)
        .map(|i| {
            let shift = 8 - bits as usize * (i % per_byte + 1);
            let code = (codes[i / per_byte] >> shift) & mask;
            level(code as u32, bits, scale)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_stay_zero() {
        for bits in [2, 4, 32] {
            let (codes, s) = quantize(&[0.0; 7], bits).unwrap();
            assert_eq!(s, 0.0);
            assert_eq!(dequantize(&codes, s, bits, 7).unwrap(), vec![0.0; 7]);
        }
    }

    #[test]
    fn passthrough_is_exact() {
        let v = [1.5f32, -3.25e-7, 0.0, f32::MAX, -f32::MIN_POSITIVE];
        let (codes, s) = quantize(&v, 32).unwrap();
        assert_eq!(dequantize(&codes, s, 32, v.len()).unwrap(), v);
    }

    #[test]
    fn two_bit_example_matches_level_table() {
        let v = [-1.0f32, 0.2, 0.9];
        let (codes, s) = quantize(&v, 2).unwrap();
        assert_eq!(s, 1.0);
        let table = levels(2, s).unwrap();
        assert_eq!(table, vec![-1.0, 0.0, 1.0]);
        let back = dequantize(&codes, s, 2, 3).unwrap();
        for (x, y) in v.iter().zip(&back) {
            let nearest = table.iter().cloned().min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap();
            assert_eq!(*y, nearest);
            assert!((x - y).abs() <= 1.0 / 3.0 + 1e-6);
        }
    }

    #[test]
    fn one_bit_is_sign() {
        let v = [-0.5f32, 0.0, 0.25, -2.0];
        let (codes, s) = quantize(&v, 1).unwrap();
        assert_eq!(dequantize(&codes, s, 1, 4).unwrap(), vec![-2.0, 2.0, 2.0, -2.0]);
    }

    #[test]
    fn four_bit_packs_two_per_byte() {
        let v = [1.0f32, -1.0, 0.0];
        let (codes, _) = quantize(&v, 4).unwrap();
        assert_eq!(codes, vec![0xE0, 0x70]);
    }

    #[test]
    fn rejects_unsupported() {
        assert!(quantize(&[1.0], 3).is_err());
        assert!(quantize(&[f32::NAN], 4).is_err());
        assert!(dequantize(&[0], 1.0, 4, 5).is_err());
        assert!(quantize(&[], 4).unwrap().0.is_empty());
    }
}
