//! Fragmentation and packet-level erasure coding.
//!
//! The erasure code is modeled by its MDS property alone: any `k` of the `n`
//! coded fragments recover the `k` source fragments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CodecError;

/// Code rate `k/n` as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FecRate {
    num: u32,
    den: u32,
}

impl FecRate {
    pub const ONE: FecRate = FecRate { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, CodecError> {
        if num == 0 || den == 0 || num > den {
            return Err(CodecError::InvalidRate(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `n = ⌈k / r⌉`.
    pub fn coded_count(self, k: usize) -> usize {
        (k * self.den as usize).div_ceil(self.num as usize)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for FecRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for FecRate {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CodecError::InvalidRate(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        FecRate::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for FecRate {
    type Error = CodecError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FecRate> for String {
    fn from(r: FecRate) -> Self {
        r.to_string()
    }
}

/// Splits `payload` into `⌈U/b⌉` fragments of exactly `b` bytes, zero-padding
/// the last one.
pub fn fragment(payload: &[u8], b: usize) -> Result<Vec<Vec<u8>>, CodecError> {
    if b == 0 {
        return Err(CodecError::InvalidFragmentSize);
    }
    if payload.is_empty() {
        return Err(CodecError::EmptyPayload);
    }
    Ok(payload
        .chunks(b)
        .map(|c| {
            let mut f = c.to_vec();
            f.resize(b, 0);
            f
        })
        .collect())
}

/// Coded fragments that reached a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentSet {
    received: BTreeSet<usize>,
    k_required: usize,
    n: usize,
}

impl FragmentSet {
    pub fn new(received: BTreeSet<usize>, k_required: usize, n: usize) -> Result<Self, CodecError> {
        if let Some(&bad) = received.iter().find(|&&i| i >= n) {
            return Err(CodecError::Corrupt(format!("fragment index {bad} out of range for n = {n}")));
        }
        Ok(Self { received, k_required, n })
    }

    pub fn received(&self) -> &BTreeSet<usize> {
        &self.received
    }

    pub fn k_required(&self) -> usize {
        self.k_required
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decodable(&self) -> bool {
        self.received.len() >= self.k_required
    }
}

/// Recovers the original bytes from the source fragments when `set` holds at
/// least `k` coded fragments.
pub fn reassemble(source: &[Vec<u8>], set: &FragmentSet, original_len: usize) -> Result<Vec<u8>, CodecError> {
    if set.k_required != source.len() {
        return Err(CodecError::Corrupt(format!(
            "fragment set expects k = {}, got {} source fragments",
            set.k_required,
            source.len()
        )));
    }
    if !set.decodable() {
        return Err(CodecError::Undecodable { received: set.received.len(), required: set.k_required });
    }
    let mut out: Vec<u8> = source.concat();
    if original_len > out.len() {
        return Err(CodecError::Corrupt(format!("original length {original_len} exceeds fragment data {}", out.len())));
    }
    out.truncate(original_len);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fragment_counts() {
        assert_eq!(fragment(&[1; 1000], 115).unwrap().len(), 9);
        assert_eq!(fragment(&[1; 222], 222).unwrap().len(), 1);
        let f = fragment(&[7; 223], 222).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[1][0], 7);
        assert!(f[1][1..].iter().all(|&b| b == 0));
        assert!(fragment(&[], 10).is_err());
        assert!(fragment(&[1], 0).is_err());
    }

    #[test]
    fn coded_counts() {
        assert_eq!(FecRate::new(1, 2).unwrap().coded_count(5), 10);
        assert_eq!(FecRate::new(2, 3).unwrap().coded_count(7), 11);
        assert_eq!(FecRate::ONE.coded_count(13), 13);
        assert_eq!(FecRate::new(1, 3).unwrap().coded_count(4), 12);
    }

    #[test]
    fn rate_parsing() {
        assert_eq!("1/2".parse::<FecRate>().unwrap(), FecRate::new(1, 2).unwrap());
        assert_eq!("2/4".parse::<FecRate>().unwrap().to_string(), "1/2");
        assert_eq!("1".parse::<FecRate>().unwrap(), FecRate::ONE);
        for bad in ["0/1", "3/2", "a/b", "1/0", ""] {
            assert!(bad.parse::<FecRate>().is_err(), "{bad}");
        }
    }

    #[test]
    fn decodability_threshold() {
        let set = FragmentSet::new([0, 2, 3, 6, 9].into(), 5, 10).unwrap();
        assert!(set.decodable());
        let set = FragmentSet::new([0, 1, 2, 3].into(), 5, 5).unwrap();
        assert!(!set.decodable());
        assert!(FragmentSet::new([10].into(), 5, 10).is_err());
    }

    #[test]
    fn reassembly() {
        let payload: Vec<u8> = (0..=255).collect();
        let frags = fragment(&payload, 50).unwrap();
        let k = frags.len();
        let ok = FragmentSet::new((0..k).collect(), k, 2 * k).unwrap();
        assert_eq!(reassemble(&frags, &ok, payload.len()).unwrap(), payload);
        let short = FragmentSet::new((0..k - 1).collect(), k, 2 * k).unwrap();
        assert!(matches!(reassemble(&frags, &short, payload.len()), Err(CodecError::Undecodable { .. })));
    }
}
