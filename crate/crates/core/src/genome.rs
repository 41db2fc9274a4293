//! Bitstring genomes, their decoding into the plane, and the sombrero
//! fitness surface `f(x, y) = 1 + sin(r) / r` with `r = sqrt(x² + y²)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest per-axis width for which every decoded integer is exactly
/// representable as an `f64`.
pub const MAX_BITS_PER_AXIS: u32 = 53;

/// Lower and upper bound of `1 + sin(r)/r` over `r >= 0`.
///
/// The minimum sits at the first positive root of `tan(r) = r`
/// (r ≈ 4.4934), where `sin(r)/r ≈ -0.217234`.
pub const FITNESS_MIN: f64 = 0.782_766_371_788_778_3;
pub const FITNESS_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenomeError {
    #[error("genome length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid genome character {found:?} at position {position}")]
    BadAlphabet { position: usize, found: char },
    #[error("empty genome")]
    Empty,
    #[error("invalid search domain: {0}")]
    Domain(String),
}

/// Per-axis interval and bit width used to map genomes onto the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    lo: f64,
    hi: f64,
    bits_per_axis: u32,
}

impl SearchDomain {
    pub fn new(lo: f64, hi: f64, bits_per_axis: u32) -> Result<Self, GenomeError> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(GenomeError::Domain(format!(
                "bounds must be finite with lo < hi (got [{lo}, {hi}])"
            )));
        }
        if !(1..=MAX_BITS_PER_AXIS).contains(&bits_per_axis) {
            return Err(GenomeError::Domain(format!(
                "bits per axis must be in 1..={MAX_BITS_PER_AXIS} (got {bits_per_axis})"
            )));
        }
        Ok(Self { lo, hi, bits_per_axis })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.bits_per_axis
    }

    /// Total genome length for this domain.
    pub fn genome_len(&self) -> usize {
        2 * self.bits_per_axis as usize
    }

    /// Largest integer a single axis can hold, `2^b - 1`.
    pub fn max_axis_value(&self) -> u64 {
        (1u64 << self.bits_per_axis) - 1
    }

    /// Distance between two adjacent decoded values on one axis.
    pub fn resolution(&self) -> f64 {
        (self.hi - self.lo) / self.max_axis_value() as f64
    }

    fn axis_value(&self, n: u64) -> f64 {
        self.lo + n as f64 / self.max_axis_value() as f64 * (self.hi - self.lo)
    }
}

impl Default for SearchDomain {
    /// `[-10, 10]` on both axes at 32 bits each.
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            bits_per_axis: 32,
        }
    }
}

/// Fixed-length bitstring; the first half encodes `x`, the second `y`,
/// both most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    bits: Vec<bool>,
}

impl Genome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    /// Builds a genome whose two halves hold the given integers.
    pub fn from_axes(nx: u64, ny: u64, bits_per_axis: u32) -> Self {
        let b = bits_per_axis as usize;
        let mut bits = Vec::with_capacity(2 * b);
        for n in [nx, ny] {
            bits.extend((0..b).rev().map(|i| (n >> i) & 1 == 1));
        }
        Self { bits }
    }

    /// Parses the `{0,1}` wire form.
    pub fn from_wire(s: &str) -> Result<Self, GenomeError> {
        if s.is_empty() {
            return Err(GenomeError::Empty);
        }
        let bits = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(GenomeError::BadAlphabet { position, found }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { bits })
    }

    /// Parses the wire form and checks it against a domain's length.
    pub fn from_wire_for(s: &str, domain: &SearchDomain) -> Result<Self, GenomeError> {
        let g = Self::from_wire(s)?;
        g.check_len(domain)?;
        Ok(g)
    }

    pub fn to_wire(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn check_len(&self, domain: &SearchDomain) -> Result<(), GenomeError> {
        let expected = domain.genome_len();
        if self.bits.len() != expected {
            return Err(GenomeError::LengthMismatch {
                expected,
                actual: self.bits.len(),
            });
        }
        Ok(())
    }

    /// Unsigned big-endian integers held in the x and y halves.
    pub fn axis_integers(&self, domain: &SearchDomain) -> Result<(u64, u64), GenomeError> {
        self.check_len(domain)?;
        let (xs, ys) = self.bits.split_at(domain.bits_per_axis as usize);
        let fold = |half: &[bool]| half.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Ok((fold(xs), fold(ys)))
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_wire())
    }
}

impl FromStr for Genome {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_wire(s)
    }
}

/// A point in the plane produced by [`decode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phenotype {
    pub x: f64,
    pub y: f64,
}

impl Phenotype {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn radius(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// Sombrero fitness value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fitness(pub f64);

impl Fitness {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `f - 1`: the `sin(r)/r` term, equal to 1 exactly at the optimum.
    pub fn accuracy(self) -> f64 {
        self.0 - 1.0
    }

    pub fn within_bounds(self) -> bool {
        (FITNESS_MIN - 1e-9..=FITNESS_MAX).contains(&self.0)
    }
}

pub fn accuracy(f: Fitness) -> f64 {
    f.accuracy()
}

/// Maps a genome linearly onto `[lo, hi]²`.
pub fn decode(g: &Genome, domain: &SearchDomain) -> Result<Phenotype, GenomeError> {
    let (nx, ny) = g.axis_integers(domain)?;
    Ok(Phenotype {
        x: domain.axis_value(nx),
        y: domain.axis_value(ny),
    })
}

pub fn sombrero(p: Phenotype) -> Fitness {
    let r = p.radius();
    if r == 0.0 {
        return Fitness(2.0);
    }
    Fitness(1.0 + r.sin() / r)
}

/// `sombrero(decode(g))`.
pub fn evaluate(g: &Genome, domain: &SearchDomain) -> Result<Fitness, GenomeError> {
    decode(g, domain).map(sombrero)
}

/// Uniformly random genome sized for `domain`.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, domain: &SearchDomain) -> Genome {
    Genome {
        bits: (0..domain.genome_len()).map(|_| rng.gen::<bool>()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d16() -> SearchDomain {
        SearchDomain::new(-10.0, 10.0, 16).unwrap()
    }

    #[test]
    fn decode_extremes() {
        let d = d16();
        assert_eq!(decode(&Genome::zeros(32), &d).unwrap(), Phenotype::new(-10.0, -10.0));
        assert_eq!(decode(&Genome::ones(32), &d).unwrap(), Phenotype::new(10.0, 10.0));
    }

    #[test]
    fn decode_high_bit_matches_integer_oracle() {
        let d = d16();
        let mut s = String::from("1");
        s.push_str(&"0".repeat(31));
        let p = decode(&s.parse().unwrap(), &d).unwrap();
        // 32768 / 65535 * 20, done as an exact integer ratio before scaling.
        let num: u64 = 32768 * 20;
        let expected = -10.0 + num as f64 / 65535.0;
        assert!((p.x - expected).abs() < 1e-12, "{} vs {}", p.x, expected);
        assert_eq!(p.y, -10.0);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let err = decode(&Genome::zeros(31), &d16()).unwrap_err();
        assert_eq!(
            err,
            GenomeError::LengthMismatch {
                expected: 32,
                actual: 31
            }
        );
        assert!(err.to_string().contains("32") && err.to_string().contains("31"));
    }

    #[test]
    fn sombrero_reference_points() {
        assert_eq!(sombrero(Phenotype::new(0.0, 0.0)).value(), 2.0);
        assert!((sombrero(Phenotype::new(std::f64::consts::PI, 0.0)).value() - 1.0).abs() < 1e-15);
        // 1 + sin(5)/5, from a 30-digit mpmath evaluation.
        let expected = 0.808_215_145_067_372_3;
        assert!((sombrero(Phenotype::new(3.0, 4.0)).value() - expected).abs() < 1e-15);
    }

    #[test]
    fn accuracy_reference_points() {
        assert_eq!(accuracy(Fitness(2.0)), 1.0);
        assert_eq!(accuracy(Fitness(1.0)), 0.0);
        let a = accuracy(sombrero(Phenotype::new(3.0, 4.0)));
        assert!((a - (-0.191_784_854_932_627_7)).abs() < 1e-15);
    }

    #[test]
    fn random_genome_is_seed_deterministic() {
        let d = d16();
        let a = random_genome(&mut ChaCha8Rng::seed_from_u64(7), &d);
        let b = random_genome(&mut ChaCha8Rng::seed_from_u64(7), &d);
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        let one = SearchDomain::new(-1.0, 1.0, 1).unwrap();
        assert_eq!(random_genome(&mut ChaCha8Rng::seed_from_u64(1), &one).len(), 2);
    }

    #[test]
    fn random_genome_bits_are_balanced() {
        let d = d16();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let ones: usize = (0..10_000).map(|_| random_genome(&mut rng, &d).count_ones()).sum();
        let frac = ones as f64 / (10_000.0 * 32.0);
        assert!((0.48..=0.52).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn wire_form_rejects_bad_alphabet() {
        assert_eq!(
            Genome::from_wire("01X0").unwrap_err(),
            GenomeError::BadAlphabet {
                position: 2,
                found: 'X'
            }
        );
        assert_eq!(Genome::from_wire("").unwrap_err(), GenomeError::Empty);
    }

    #[test]
    fn domain_validation() {
        assert!(SearchDomain::new(1.0, 1.0, 8).is_err());
        assert!(SearchDomain::new(-1.0, 1.0, 0).is_err());
        assert!(SearchDomain::new(-1.0, 1.0, 54).is_err());
        assert!(SearchDomain::default().resolution() <= 1e-5);
    }

    #[test]
    fn midpoint_genome_is_near_optimum() {
        let d = SearchDomain::default();
        let mid = d.max_axis_value() / 2;
        let g = Genome::from_axes(mid, mid, d.bits_per_axis());
        let f = evaluate(&g, &d).unwrap();
        assert!((f.value() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sombrero_is_radially_symmetric(r in 0.0f64..30.0, t1 in 0.0f64..6.3, t2 in 0.0f64..6.3) {
            let a = sombrero(Phenotype::new(r * t1.cos(), r * t1.sin()));
            let b = sombrero(Phenotype::new(r * t2.cos(), r * t2.sin()));
            prop_assert!((a.value() - b.value()).abs() <= 1e-12);
        }

        #[test]
        fn sombrero_stays_in_bounds(x in -1e3f64..1e3, y in -1e3f64..1e3) {
            let f = sombrero(Phenotype::new(x, y));
            prop_assert!(f.value() >= 0.78 && f.value() <= 2.0);
            prop_assert!(f.within_bounds());
        }

        #[test]
        fn decode_is_injective(a in any::<u32>(), b in any::<u32>(), c in any::<u32>(), e in any::<u32>()) {
            let d = SearchDomain::default();
            let g1 = Genome::from_axes(a as u64, b as u64, 32);
            let g2 = Genome::from_axes(c as u64, e as u64, 32);
            let p1 = decode(&g1, &d).unwrap();
            let p2 = decode(&g2, &d).unwrap();
            prop_assert_eq!(g1 == g2, p1 == p2);
        }

        #[test]
        fn wire_roundtrip(bits in proptest::collection::vec(any::<bool>(), 1..128)) {
            let g = Genome::from_bits(bits);
            prop_assert_eq!(Genome::from_wire(&g.to_wire()).unwrap(), g);
        }
    }
}
