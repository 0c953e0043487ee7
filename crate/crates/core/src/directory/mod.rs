//! The realm directory: published realm states, their epoch history and the
//! system keys, reachable in-process or over TCP.

use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accumulator::{FieldTree, SerializedFieldTree};
use crate::backend::{BackendKind, VerifyingKey as RelationVk};
use crate::field::FieldElement;
use crate::hash::Hasher;
use crate::params::SystemParams;
use crate::realm::{RealmError, RealmId, RealmSnapshot, RealmState, VerifierKeys};
use crate::signature::{Signature, SigningKey, VerifyingKey};

mod client;
mod store;
mod tcp;
mod wire;

pub use client::{ClosureError, CountingTransport, DirectoryClient, InProcess, Transport};
pub use wire::{Reply, Request, Response};
pub use store::DirectoryStore;
pub use tcp::{serve, spawn_server, TcpTransport};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum DirectoryError {
    #[error("unknown realm {0}")]
    UnknownRealm(RealmId),
    #[error("realm {0} is already registered")]
    AlreadyRegistered(RealmId),
    #[error("epoch {got} does not advance past {stored}")]
    EpochRegression { stored: u64, got: u64 },
    #[error("epoch {got} skips ahead; expected {expected}")]
    EpochGap { expected: u64, got: u64 },
    #[error("record signature does not verify under the maintainer key")]
    BadSignature,
    #[error("record was produced under different system parameters")]
    ParamsMismatch,
    #[error("trusted realms are not registered: {0:?}")]
    DanglingTrust(Vec<RealmId>),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("system keys are already published")]
    KeysAlreadySet,
    #[error("system keys have not been published")]
    KeysMissing,
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

/// One published realm state, signed by the realm's maintainer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryRecord {
    pub params_digest: String,
    pub realm_id: RealmId,
    pub seed: FieldElement,
    pub root: FieldElement,
    pub epoch: u64,
    pub trusted: Vec<RealmId>,
    pub accumulator: SerializedFieldTree,
    pub signature: Signature,
}

#[derive(Serialize)]
struct Unsigned<'a> {
    domain: &'static str,
    params_digest: &'a str,
    realm_id: &'a str,
    seed: FieldElement,
    root: FieldElement,
    epoch: u64,
    trusted: &'a [RealmId],
    accumulator: &'a SerializedFieldTree,
}

impl Unsigned<'_> {
    fn message(&self) -> FieldElement {
        let bytes = serde_json::to_vec(self).expect("record serializes");
        FieldElement::from_le_bytes_mod_order(&Sha256::digest(bytes))
    }
}

const RECORD_DOMAIN: &str = "fab-directory-record-v1";

impl DirectoryRecord {
    /// Field element the maintainer signs: SHA-256 of the canonical JSON of
    /// every field but the signature, reduced into the field.
    pub fn signing_message(&self) -> FieldElement {
        Unsigned {
            domain: RECORD_DOMAIN,
            params_digest: &self.params_digest,
            realm_id: &self.realm_id,
            seed: self.seed,
            root: self.root,
            epoch: self.epoch,
            trusted: &self.trusted,
            accumulator: &self.accumulator,
        }
        .message()
    }

    pub fn from_state<G: RngCore + CryptoRng + ?Sized>(
        params: &SystemParams,
        state: &RealmState,
        rng: &mut G,
    ) -> Self {
        let trusted: Vec<RealmId> = state.trusted().iter().cloned().collect();
        let accumulator = state.accumulator().to_serialized(params);
        let msg = Unsigned {
            domain: RECORD_DOMAIN,
            params_digest: params.digest(),
            realm_id: state.id(),
            seed: state.seed(),
            root: state.root(),
            epoch: state.epoch(),
            trusted: &trusted,
            accumulator: &accumulator,
        }
        .message();
        Self {
            params_digest: params.digest().to_string(),
            realm_id: state.id().clone(),
            seed: state.seed(),
            root: state.root(),
            epoch: state.epoch(),
            trusted,
            accumulator,
            signature: state.maintainer().sign(params.hasher(), msg, rng),
        }
    }

    /// Digest kept in the audit history.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("record serializes")))
    }

    pub fn signature_valid(&self, hasher: &Hasher, maintainer: &VerifyingKey) -> bool {
        maintainer.verify(hasher, self.signing_message(), &self.signature)
    }

    /// A view for verification. With `with_tree` the accumulator is rebuilt
    /// and checked against the published root.
    pub fn snapshot(&self, params: &SystemParams, with_tree: bool) -> Result<RealmSnapshot, RealmError> {
        let tree = if with_tree {
            let t = FieldTree::from_serialized(params, &self.accumulator)?;
            if t.root() != self.root {
                return Err(RealmError::RootMismatch);
            }
            Some(Arc::new(t))
        } else {
            None
        };
        Ok(RealmSnapshot {
            id: self.realm_id.clone(),
            seed: self.seed,
            epoch: self.epoch,
            trusted: self.trusted.clone(),
            root: self.root,
            tree,
        })
    }
}

/// Keys every participant needs: params digest, verifying keys, and the
/// identity provider's public key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedKeys {
    pub params_digest: String,
    pub backend: BackendKind,
    pub auth_vk: String,
    pub block_vk: String,
    pub pk_ip: VerifyingKey,
}

impl PublishedKeys {
    pub fn new(params: &SystemParams, keys: &VerifierKeys, pk_ip: VerifyingKey) -> Self {
        Self {
            params_digest: params.digest().to_string(),
            backend: keys.auth.header.backend,
            auth_vk: hex::encode(keys.auth.to_bytes()),
            block_vk: hex::encode(keys.block.to_bytes()),
            pk_ip,
        }
    }

    pub fn verifier_keys(&self) -> Result<VerifierKeys, DirectoryError> {
        let decode = |s: &str| {
            let bytes = hex::decode(s).map_err(|e| DirectoryError::Malformed(e.to_string()))?;
            RelationVk::from_bytes(&bytes).map_err(|e| DirectoryError::Malformed(e.to_string()))
        };
        Ok(VerifierKeys { auth: decode(&self.auth_vk)?, block: decode(&self.block_vk)? })
    }
}

/// Entry of a LIST response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealmListing {
    pub realm_id: RealmId,
    pub epoch: u64,
    pub root: FieldElement,
}

/// Retained per publication for audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub epoch: u64,
    pub root: FieldElement,
    pub record_digest: String,
}

/// Realm ids double as file names in the persistent store.
pub fn valid_realm_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Signature a maintainer gives to retire its realm.
pub fn deregistration_message(realm_id: &str) -> FieldElement {
    let mut h = Sha256::new();
    h.update(b"fab-directory-deregister-v1");
    h.update(realm_id.as_bytes());
    FieldElement::from_le_bytes_mod_order(&h.finalize())
}

pub fn sign_deregistration<G: RngCore + CryptoRng + ?Sized>(
    hasher: &Hasher,
    maintainer: &SigningKey,
    realm_id: &str,
    rng: &mut G,
) -> Signature {
    maintainer.sign(hasher, deregistration_message(realm_id), rng)
}

#[cfg(test)]
mod tests;
