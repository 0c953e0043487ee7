//! Proof backends behind one setup / prove / verify / simulate interface.
//!
//! * `Reference`: the proof carries the witness and verification re-runs
//!   the native evaluator. Not zero-knowledge; used for exhaustive testing.
//! * `Groth16`: Groth16 over BLS12-381. Proofs are 192 bytes for every
//!   relation and statement.
//!
//! Keys embed the params digest, relation and depth; verification rejects
//! any mismatch, including a proof tagged for the other backend.

use std::fmt;

use ark_bls12_381::{Bls12_381, Fr, G1Projective, G2Projective};
use ark_ec::{AffineRepr, CurveGroup};
use ark_ff::{Field, UniformRand};
use ark_groth16::{prepare_verifying_key, Groth16, PreparedVerifyingKey};
use ark_relations::r1cs::ConstraintSynthesizer;
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::FieldElement;
use crate::params::SystemParams;
use crate::relations::{
    circuit_satisfied, eval_auth, eval_block, AuthCircuit, AuthStatement, AuthWitness,
    BlockCircuit, BlockStatement, BlockWitness, RelationId, Statement,
};

type G16Proof = ark_groth16::Proof<Bls12_381>;
type G16ProvingKey = ark_groth16::ProvingKey<Bls12_381>;
type G16VerifyingKey = ark_groth16::VerifyingKey<Bls12_381>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    Groth16,
}

impl BackendKind {
    pub fn tag(self) -> u8 {
        match self {
            BackendKind::Reference => 0x01,
            BackendKind::Groth16 => 0x02,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0x01 => Some(BackendKind::Reference),
            0x02 => Some(BackendKind::Groth16),
            _ => None,
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(BackendKind::Reference),
            "groth16" => Ok(BackendKind::Groth16),
            other => Err(BackendError::Decode(format!("unknown backend {other:?}"))),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Reference => "reference",
            BackendKind::Groth16 => "groth16",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("witness does not satisfy the {0:?} relation")]
    UnsatisfiedRelation(RelationId),
    #[error("no trapdoor available for simulation")]
    TrapdoorUnavailable,
    #[error("key is for {found:?}, expected {expected:?}")]
    WrongRelation { expected: RelationId, found: RelationId },
    #[error("key was generated under different system parameters")]
    ParamsMismatch,
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("malformed encoding: {0}")]
    Decode(String),
}

/// Whether setup keeps the Groth16 toxic waste. Only test harnesses ask
/// for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KeyMode {
    #[default]
    Production,
    WithTrapdoor,
}

/// Binding between a relation, its native evaluator and its circuit.
pub trait Relation {
    const ID: RelationId;
    type Statement: Statement + Clone;
    type Witness: Serialize + DeserializeOwned + Clone;
    type Circuit: ConstraintSynthesizer<Fr>;

    fn blank(params: &SystemParams) -> Self::Circuit;
    fn circuit(params: &SystemParams, st: &Self::Statement, w: &Self::Witness) -> Self::Circuit;
    fn eval(params: &SystemParams, st: &Self::Statement, w: &Self::Witness) -> bool;
}

pub struct AuthRelation;
pub struct BlockRelation;

impl Relation for AuthRelation {
    const ID: RelationId = RelationId::Auth;
    type Statement = AuthStatement;
    type Witness = AuthWitness;
    type Circuit = AuthCircuit;

    fn blank(params: &SystemParams) -> AuthCircuit {
        AuthCircuit::blank(params)
    }

    fn circuit(params: &SystemParams, st: &AuthStatement, w: &AuthWitness) -> AuthCircuit {
        AuthCircuit::new(params, st, w)
    }

    fn eval(params: &SystemParams, st: &AuthStatement, w: &AuthWitness) -> bool {
        eval_auth(params.hasher(), st, w)
    }
}

impl Relation for BlockRelation {
    const ID: RelationId = RelationId::Block;
    type Statement = BlockStatement;
    type Witness = BlockWitness;
    type Circuit = BlockCircuit;

    fn blank(params: &SystemParams) -> BlockCircuit {
        BlockCircuit::blank(params)
    }

    fn circuit(params: &SystemParams, st: &BlockStatement, w: &BlockWitness) -> BlockCircuit {
        BlockCircuit::new(params, st, w)
    }

    fn eval(params: &SystemParams, st: &BlockStatement, w: &BlockWitness) -> bool {
        eval_block(params.hasher(), params.depth(), st, w)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyHeader {
    pub backend: BackendKind,
    pub relation: RelationId,
    pub depth: u32,
    pub params_digest: String,
}

impl KeyHeader {
    const MAGIC: &'static [u8; 4] = b"FABK";

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(Self::MAGIC);
        out.push(self.backend.tag());
        out.push(self.relation.to_byte());
        out.extend_from_slice(&self.depth.to_le_bytes());
        let digest = self.params_digest.as_bytes();
        out.extend_from_slice(&(digest.len() as u16).to_le_bytes());
        out.extend_from_slice(digest);
    }

    fn read(bytes: &[u8]) -> Result<(Self, &[u8]), BackendError> {
        let err = |m: &str| BackendError::Decode(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != Self::MAGIC {
            return Err(err("bad key magic"));
        }
        let backend = BackendKind::from_tag(bytes[4]).ok_or_else(|| err("unknown backend tag"))?;
        let relation = RelationId::from_byte(bytes[5]).ok_or_else(|| err("unknown relation"))?;
        let depth = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let n = u16::from_le_bytes(bytes[10..12].try_into().unwrap()) as usize;
        let rest = &bytes[12..];
        if rest.len() < n {
            return Err(err("truncated key header"));
        }
        let params_digest =
            String::from_utf8(rest[..n].to_vec()).map_err(|_| err("params digest not utf-8"))?;
        Ok((Self { backend, relation, depth, params_digest }, &rest[n..]))
    }

    fn check<R: Relation>(&self, params: &SystemParams) -> Result<(), BackendError> {
        if self.relation != R::ID {
            return Err(BackendError::WrongRelation { expected: R::ID, found: self.relation });
        }
        if self.params_digest != params.digest() || self.depth != params.depth() {
            return Err(BackendError::ParamsMismatch);
        }
        Ok(())
    }
}

#[derive(Clone)]
enum ProvingInner {
    Reference { key_id: [u8; 32] },
    Groth16(Box<G16ProvingKey>),
}

#[derive(Clone)]
enum VerifyingInner {
    Reference { key_id: [u8; 32] },
    Groth16 { vk: Box<G16VerifyingKey>, pvk: Box<PreparedVerifyingKey<Bls12_381>> },
}

#[derive(Clone)]
pub struct ProvingKey {
    pub header: KeyHeader,
    inner: ProvingInner,
}

#[derive(Clone)]
pub struct VerifyingKey {
    pub header: KeyHeader,
    inner: VerifyingInner,
}

/// Groth16 toxic waste.
#[derive(Clone)]
pub struct Trapdoor {
    alpha: Fr,
    beta: Fr,
    gamma: Fr,
    delta: Fr,
    g1: G1Projective,
    g2: G2Projective,
}

#[derive(Clone)]
pub struct RelationKeys {
    pub pk: ProvingKey,
    pub vk: VerifyingKey,
    pub td: Option<Trapdoor>,
}

impl fmt::Debug for RelationKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RelationKeys")
            .field("header", &self.vk.header)
            .field("vk_digest", &self.vk.digest())
            .field("trapdoor", &self.td.is_some())
            .finish()
    }
}

fn ser_err(e: impl fmt::Display) -> BackendError {
    BackendError::Decode(e.to_string())
}

impl ProvingKey {
    pub fn backend(&self) -> BackendKind {
        self.header.backend
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.header.write(&mut out);
        match &self.inner {
            ProvingInner::Reference { key_id } => out.extend_from_slice(key_id),
            ProvingInner::Groth16(pk) => pk.serialize_uncompressed(&mut out).expect("vec write"),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BackendError> {
        let (header, rest) = KeyHeader::read(bytes)?;
        let inner = match header.backend {
            BackendKind::Reference => ProvingInner::Reference {
                key_id: rest.try_into().map_err(|_| ser_err("reference key id"))?,
            },
            // Proving keys are local artifacts; group membership of every
            // element is not rechecked on load.
            BackendKind::Groth16 => ProvingInner::Groth16(Box::new(
                G16ProvingKey::deserialize_uncompressed_unchecked(rest).map_err(ser_err)?,
            )),
        };
        Ok(Self { header, inner })
    }
}

impl VerifyingKey {
    pub fn backend(&self) -> BackendKind {
        self.header.backend
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.header.write(&mut out);
        match &self.inner {
            VerifyingInner::Reference { key_id } => out.extend_from_slice(key_id),
            VerifyingInner::Groth16 { vk, .. } => vk.serialize_compressed(&mut out).expect("vec write"),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BackendError> {
        let (header, rest) = KeyHeader::read(bytes)?;
        let inner = match header.backend {
            BackendKind::Reference => VerifyingInner::Reference {
                key_id: rest.try_into().map_err(|_| ser_err("reference key id"))?,
            },
            BackendKind::Groth16 => {
                let vk = G16VerifyingKey::deserialize_compressed(rest).map_err(ser_err)?;
                VerifyingInner::Groth16 { pvk: Box::new(prepare_verifying_key(&vk)), vk: Box::new(vk) }
            }
        };
        Ok(Self { header, inner })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

impl fmt::Debug for VerifyingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VerifyingKey({:?}, {})", self.header, self.digest())
    }
}

/// A proof with its wire envelope: backend tag, relation id, then the
/// opaque bytes with a little-endian u32 length prefix.
#[derive(Clone, PartialEq, Eq)]
pub struct Proof {
    pub backend: BackendKind,
    pub relation: RelationId,
    pub bytes: Vec<u8>,
}

impl Proof {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + self.bytes.len());
        out.push(self.backend.tag());
        out.push(self.relation.to_byte());
        out.extend_from_slice(&(self.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, BackendError> {
        if b.len() < 6 {
            return Err(ser_err("truncated proof envelope"));
        }
        let backend = BackendKind::from_tag(b[0]).ok_or_else(|| ser_err("unknown backend tag"))?;
        let relation = RelationId::from_byte(b[1]).ok_or_else(|| ser_err("unknown relation"))?;
        let n = u32::from_le_bytes(b[2..6].try_into().unwrap()) as usize;
        if b.len() - 6 != n {
            return Err(ser_err("proof length prefix mismatch"));
        }
        Ok(Self { backend, relation, bytes: b[6..].to_vec() })
    }

    /// Size of the opaque proof bytes, without the envelope.
    pub fn size(&self) -> usize {
        self.bytes.len()
    }
}

impl fmt::Debug for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Proof({}, {:?}, {} bytes)", self.backend, self.relation, self.bytes.len())
    }
}

impl Serialize for Proof {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Proof {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        Proof::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

fn to_fr(inputs: &[FieldElement]) -> Vec<Fr> {
    inputs.iter().map(|f| f.inner()).collect()
}

pub fn setup<R: Relation, G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    backend: BackendKind,
    mode: KeyMode,
    rng: &mut G,
) -> Result<RelationKeys, BackendError> {
    let header = KeyHeader {
        backend,
        relation: R::ID,
        depth: params.depth(),
        params_digest: params.digest().to_string(),
    };
    match backend {
        BackendKind::Reference => {
            let mut key_id = [0u8; 32];
            rng.fill_bytes(&mut key_id);
            Ok(RelationKeys {
                pk: ProvingKey { header: header.clone(), inner: ProvingInner::Reference { key_id } },
                vk: VerifyingKey { header, inner: VerifyingInner::Reference { key_id } },
                td: None,
            })
        }
        BackendKind::Groth16 => {
            let mut rng = rand_compat(rng);
            let td = Trapdoor {
                alpha: Fr::rand(&mut rng),
                beta: Fr::rand(&mut rng),
                gamma: Fr::rand(&mut rng),
                delta: Fr::rand(&mut rng),
                g1: G1Projective::rand(&mut rng),
                g2: G2Projective::rand(&mut rng),
            };
            let pk = Groth16::<Bls12_381>::generate_parameters_with_qap(
                R::blank(params),
                td.alpha,
                td.beta,
                td.gamma,
                td.delta,
                td.g1,
                td.g2,
                &mut rng,
            )
            .map_err(|e| BackendError::Synthesis(e.to_string()))?;
            let vk = pk.vk.clone();
            Ok(RelationKeys {
                pk: ProvingKey { header: header.clone(), inner: ProvingInner::Groth16(Box::new(pk)) },
                vk: VerifyingKey {
                    header,
                    inner: VerifyingInner::Groth16 { pvk: Box::new(prepare_verifying_key(&vk)), vk: Box::new(vk) },
                },
                td: (mode == KeyMode::WithTrapdoor).then_some(td),
            })
        }
    }
}

/// The arkworks APIs want a sized `Rng`; wrap a possibly unsized source.
fn rand_compat<G: RngCore + ?Sized>(rng: &mut G) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    rand_chacha::ChaCha20Rng::from_seed(seed)
}

pub fn prove<R: Relation, G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    pk: &ProvingKey,
    stmt: &R::Statement,
    wit: &R::Witness,
    rng: &mut G,
) -> Result<Proof, BackendError> {
    pk.header.check::<R>(params)?;
    let satisfied = circuit_satisfied(R::circuit(params, stmt, wit))
        .map_err(|e| BackendError::Synthesis(e.to_string()))?;
    if !satisfied {
        return Err(BackendError::UnsatisfiedRelation(R::ID));
    }
    let bytes = match &pk.inner {
        ProvingInner::Reference { key_id } => {
            let mut out = key_id.to_vec();
            out.extend_from_slice(&stmt.digest());
            out.extend_from_slice(&serde_json::to_vec(wit).expect("witness serializes"));
            out
        }
        ProvingInner::Groth16(gpk) => {
            let mut rng = rand_compat(rng);
            let proof = Groth16::<Bls12_381>::create_random_proof_with_reduction(
                R::circuit(params, stmt, wit),
                gpk,
                &mut rng,
            )
            .map_err(|e| BackendError::Synthesis(e.to_string()))?;
            let mut out = Vec::with_capacity(192);
            proof.serialize_compressed(&mut out).expect("vec write");
            out
        }
    };
    Ok(Proof { backend: pk.backend(), relation: R::ID, bytes })
}

/// Accepts only a proof made under `vk` for exactly this statement.
pub fn verify<R: Relation>(
    params: &SystemParams,
    vk: &VerifyingKey,
    stmt: &R::Statement,
    proof: &Proof,
) -> bool {
    if vk.header.check::<R>(params).is_err()
        || proof.relation != R::ID
        || proof.backend != vk.backend()
    {
        return false;
    }
    match &vk.inner {
        VerifyingInner::Reference { key_id } => {
            if proof.bytes.len() < 64
                || proof.bytes[..32] != key_id[..]
                || proof.bytes[32..64] != stmt.digest()
            {
                return false;
            }
            match serde_json::from_slice::<R::Witness>(&proof.bytes[64..]) {
                Ok(wit) => R::eval(params, stmt, &wit),
                Err(_) => false,
            }
        }
        VerifyingInner::Groth16 { pvk, .. } => {
            let Ok(p) = G16Proof::deserialize_compressed(&proof.bytes[..]) else {
                return false;
            };
            let inputs = to_fr(&stmt.public_inputs());
            Groth16::<Bls12_381>::verify_proof(pvk, &p, &inputs).unwrap_or(false)
        }
    }
}

/// Produces an accepting proof from the statement alone, using the setup
/// trapdoor.
pub fn simulate<R: Relation, G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    keys: &RelationKeys,
    stmt: &R::Statement,
    rng: &mut G,
) -> Result<Proof, BackendError> {
    keys.vk.header.check::<R>(params)?;
    let (td, vk) = match (&keys.td, &keys.vk.inner) {
        (Some(td), VerifyingInner::Groth16 { vk, .. }) => (td, vk),
        _ => return Err(BackendError::TrapdoorUnavailable),
    };
    let inputs = to_fr(&stmt.public_inputs());
    if inputs.len() + 1 != vk.gamma_abc_g1.len() {
        return Err(BackendError::Synthesis("public input count".into()));
    }
    let mut ic = vk.gamma_abc_g1[0].into_group();
    for (x, base) in inputs.iter().zip(&vk.gamma_abc_g1[1..]) {
        ic += base.into_group() * x;
    }
    // e(A, B) = e(alpha, beta) e(IC, gamma) e(C, delta) with A = a g1,
    // B = b g2 forces C = ((ab - alpha beta) / delta) g1 - (gamma / delta) IC.
    let a = Fr::rand(&mut rand_compat(rng));
    let b = Fr::rand(&mut rand_compat(rng));
    let delta_inv = td.delta.inverse().expect("nonzero delta");
    let c = td.g1 * ((a * b - td.alpha * td.beta) * delta_inv) - ic * (td.gamma * delta_inv);
    let proof = G16Proof {
        a: (td.g1 * a).into_affine(),
        b: (td.g2 * b).into_affine(),
        c: c.into_affine(),
    };
    let mut bytes = Vec::with_capacity(192);
    proof.serialize_compressed(&mut bytes).expect("vec write");
    Ok(Proof { backend: BackendKind::Groth16, relation: R::ID, bytes })
}
