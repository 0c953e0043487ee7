//! Schnorr signatures over JubJub with a Poseidon challenge, verifiable both
//! natively and as constraints over the BLS12-381 scalar field.
//!
//! Verification checks `[s]G == R + [e]PK` where `e` is the challenge hash
//! of `(R, PK, m)` read as a 255-bit integer.

use std::fmt;
use std::sync::OnceLock;

use ark_bls12_381::Fr as Fq;
use ark_ec::{AffineRepr, CurveGroup, PrimeGroup};
use ark_ff::{BigInteger, PrimeField, UniformRand};
use ark_r1cs_std::{
    alloc::{AllocVar, AllocationMode},
    boolean::Boolean,
    convert::ToBitsGadget,
    eq::EqGadget,
    fields::fp::FpVar,
    groups::CurveVar,
};
use ark_relations::r1cs::{ConstraintSystemRef, SynthesisError};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::field::FieldElement;
use crate::hash::{DomainTag, Hasher};
use crate::jubjub::{EdwardsAffine, EdwardsProjective, EdwardsVar, Fr};

/// Bits needed for a canonical JubJub scalar.
pub const SCALAR_BITS: usize = 252;
pub const SIGNATURE_BYTES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyDecodeError {
    #[error("invalid hex")]
    Hex,
    #[error("not a canonical encoding")]
    Encoding,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey(Fr);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct VerifyingKey(EdwardsAffine);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    r: EdwardsAffine,
    s: Fr,
}

fn generator() -> EdwardsProjective {
    EdwardsProjective::generator()
}

/// `G * 2^i` for every scalar bit, shared by all in-circuit verifications.
fn generator_powers() -> &'static [EdwardsProjective] {
    static POWERS: OnceLock<Vec<EdwardsProjective>> = OnceLock::new();
    POWERS.get_or_init(|| {
        let mut acc = generator();
        (0..SCALAR_BITS)
            .map(|_| {
                let cur = acc;
                acc = acc + acc;
                cur
            })
            .collect()
    })
}

fn challenge(hasher: &Hasher, r: &EdwardsAffine, pk: &EdwardsAffine, msg: FieldElement) -> FieldElement {
    let h = |a: Fq, b: Fq| hasher.hash2(DomainTag::Challenge, FieldElement(a), FieldElement(b));
    let hr = h(r.x, r.y);
    let hpk = h(pk.x, pk.y);
    let both = hasher.hash2(DomainTag::Challenge, hr, hpk);
    hasher.hash2(DomainTag::Challenge, both, msg)
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        Self(Fr::rand(rng))
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        VerifyingKey((generator() * self.0).into_affine())
    }

    pub fn sign<R: RngCore + CryptoRng + ?Sized>(
        &self,
        hasher: &Hasher,
        msg: FieldElement,
        rng: &mut R,
    ) -> Signature {
        let pk = self.verifying_key();
        let k = Fr::rand(rng);
        let r = (generator() * k).into_affine();
        let e = challenge(hasher, &r, &pk.0, msg);
        let e = Fr::from_le_bytes_mod_order(&e.to_bytes_le());
        Signature { r, s: k + e * self.0 }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out.copy_from_slice(&self.0.into_bigint().to_bytes_le());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeyDecodeError> {
        Fr::deserialize_compressed(bytes).map(Self).map_err(|_| KeyDecodeError::Encoding)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyDecodeError> {
        Self::from_bytes(&hex::decode(s).map_err(|_| KeyDecodeError::Hex)?)
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

impl VerifyingKey {
    pub fn point(&self) -> EdwardsAffine {
        self.0
    }

    pub fn verify(&self, hasher: &Hasher, msg: FieldElement, sig: &Signature) -> bool {
        let e = challenge(hasher, &sig.r, &self.0, msg);
        let lhs = generator() * sig.s;
        let rhs = sig.r.into_group() + self.0.mul_bigint(e.canonical_int());
        lhs == rhs
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        self.0.serialize_compressed(&mut out).expect("vec write");
        out
    }

    /// Decodes a compressed point, checking it is on the curve and in the
    /// prime-order subgroup.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeyDecodeError> {
        let p = EdwardsAffine::deserialize_compressed(bytes).map_err(|_| KeyDecodeError::Encoding)?;
        if p.is_zero() {
            return Err(KeyDecodeError::Encoding);
        }
        Ok(Self(p))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyDecodeError> {
        Self::from_bytes(&hex::decode(s).map_err(|_| KeyDecodeError::Hex)?)
    }

    /// The two public-input field elements `(x, y)`.
    pub fn public_inputs(&self) -> [FieldElement; 2] {
        [FieldElement(self.0.x), FieldElement(self.0.y)]
    }
}

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyingKey({})", self.to_hex())
    }
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_BYTES] {
        let mut out = Vec::with_capacity(SIGNATURE_BYTES);
        self.r.serialize_compressed(&mut out).expect("vec write");
        self.s.serialize_compressed(&mut out).expect("vec write");
        out.try_into().expect("fixed width")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeyDecodeError> {
        if bytes.len() != SIGNATURE_BYTES {
            return Err(KeyDecodeError::Encoding);
        }
        let r = EdwardsAffine::deserialize_compressed(&bytes[..32])
            .map_err(|_| KeyDecodeError::Encoding)?;
        let s = Fr::deserialize_compressed(&bytes[32..]).map_err(|_| KeyDecodeError::Encoding)?;
        Ok(Self { r, s })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, KeyDecodeError> {
        Self::from_bytes(&hex::decode(s).map_err(|_| KeyDecodeError::Hex)?)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

macro_rules! hex_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$t>::from_hex(&s).map_err(de::Error::custom)
            }
        }
    };
}

hex_serde!(SigningKey);
hex_serde!(VerifyingKey);
hex_serde!(Signature);

/// Signature wires. `s` is carried as little-endian bits.
pub struct SignatureVar {
    pub r: EdwardsVar,
    pub s_bits: Vec<Boolean<Fq>>,
}

impl SignatureVar {
    pub fn alloc(cs: ConstraintSystemRef<Fq>, sig: Option<&Signature>) -> Result<Self, SynthesisError> {
        let r = EdwardsVar::new_variable_omit_prime_order_check(
            cs.clone(),
            || sig.map(|s| s.r.into_group()).ok_or(SynthesisError::AssignmentMissing),
            AllocationMode::Witness,
        )?;
        let s_bits = sig.map(|s| s.s.into_bigint().to_bits_le());
        let s_bits = (0..SCALAR_BITS)
            .map(|i| {
                Boolean::new_witness(cs.clone(), || {
                    s_bits.as_ref().map(|b| b[i]).ok_or(SynthesisError::AssignmentMissing)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { r, s_bits })
    }
}

/// Allocates a verifying key as two public inputs `(x, y)`, with the
/// on-curve check.
pub fn alloc_verifying_key_input(
    cs: ConstraintSystemRef<Fq>,
    pk: Option<&VerifyingKey>,
) -> Result<EdwardsVar, SynthesisError> {
    EdwardsVar::new_variable_omit_prime_order_check(
        cs,
        || pk.map(|k| k.0.into_group()).ok_or(SynthesisError::AssignmentMissing),
        AllocationMode::Input,
    )
}

/// Enforces that `sig` is a valid signature on `msg` under `pk`.
///
/// `R` is only checked to be on the curve: the equation pins it to
/// `[s]G - [e]PK`, which lies in the prime-order subgroup.
pub fn enforce_verify(
    hasher: &Hasher,
    pk: &EdwardsVar,
    msg: &FpVar<Fq>,
    sig: &SignatureVar,
) -> Result<(), SynthesisError> {
    let h = |a: &FpVar<Fq>, b: &FpVar<Fq>| hasher.hash2_var(DomainTag::Challenge, a, b);
    let hr = h(&sig.r.x, &sig.r.y)?;
    let hpk = h(&pk.x, &pk.y)?;
    let both = h(&hr, &hpk)?;
    let e = h(&both, msg)?;
    let e_bits = e.to_bits_le()?;

    let mut lhs = EdwardsVar::zero();
    lhs.precomputed_base_scalar_mul_le(sig.s_bits.iter().zip(generator_powers()))?;
    let rhs = sig.r.clone() + pk.scalar_mul_le(e_bits.iter())?;
    lhs.enforce_equal(&rhs)
}
