//! Scalar-field values used for identities, seeds, pseudonyms and digests.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ark_bls12_381::Fr;
use ark_ff::{BigInt, BigInteger, PrimeField, UniformRand, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Width of the fixed little-endian encoding.
pub const FIELD_BYTES: usize = 32;

/// Canonical big-integer representative of a field element.
pub type CanonicalInt = BigInt<4>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldDecodeError {
    #[error("expected {FIELD_BYTES} bytes, got {0}")]
    Length(usize),
    #[error("encoding is not the canonical representative")]
    NonCanonical,
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// An element of the BLS12-381 scalar field.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FieldElement(pub(crate) Fr);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(ark_ff::MontFp!("0"));
    pub const ONE: FieldElement = FieldElement(ark_ff::MontFp!("1"));

    pub fn new(inner: Fr) -> Self {
        Self(inner)
    }

    pub fn from_u64(v: u64) -> Self {
        Self(Fr::from(v))
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Self(Fr::rand(rng))
    }

    /// `p - 1`, the largest element.
    pub fn max_value() -> Self {
        Self(-Fr::from(1u64))
    }

    pub fn inner(&self) -> Fr {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn canonical_int(&self) -> CanonicalInt {
        self.0.into_bigint()
    }

    /// `self + 1` in the field.
    pub fn successor(&self) -> Self {
        Self(self.0 + Fr::from(1u64))
    }

    pub fn to_bytes_le(&self) -> [u8; FIELD_BYTES] {
        let mut out = [0u8; FIELD_BYTES];
        out.copy_from_slice(&self.canonical_int().to_bytes_le());
        out
    }

    /// Decodes a fixed-width little-endian encoding, rejecting values `>= p`.
    pub fn from_bytes_le(bytes: &[u8]) -> Result<Self, FieldDecodeError> {
        if bytes.len() != FIELD_BYTES {
            return Err(FieldDecodeError::Length(bytes.len()));
        }
        let mut limbs = [0u64; 4];
        for (limb, chunk) in limbs.iter_mut().zip(bytes.chunks_exact(8)) {
            *limb = u64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        }
        Fr::from_bigint(BigInt(limbs))
            .map(Self)
            .ok_or(FieldDecodeError::NonCanonical)
    }

    /// Reduces arbitrary bytes (interpreted little-endian) modulo `p`.
    pub fn from_le_bytes_mod_order(bytes: &[u8]) -> Self {
        Self(Fr::from_le_bytes_mod_order(bytes))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes_le())
    }

    pub fn from_hex(s: &str) -> Result<Self, FieldDecodeError> {
        let bytes = hex::decode(s).map_err(|e| FieldDecodeError::Hex(e.to_string()))?;
        Self::from_bytes_le(&bytes)
    }

    /// Modulus `p` as little-endian bytes.
    pub fn modulus_bytes_le() -> Vec<u8> {
        Fr::MODULUS.to_bytes_le()
    }

    /// Bit length of `p`.
    pub fn modulus_bits() -> u32 {
        Fr::MODULUS_BIT_SIZE
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_int().cmp(&other.canonical_int())
    }
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<Fr> for FieldElement {
    fn from(v: Fr) -> Self {
        Self(v)
    }
}

impl From<FieldElement> for Fr {
    fn from(v: FieldElement) -> Self {
        v.0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fe({})", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for FieldElement {
    type Err = FieldDecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
