//! Realm lifecycle and the authentication protocol.
//!
//! A realm owns a seed, a complementary Merkle tree of blocked pseudonyms,
//! an epoch and the set of realms whose blocklists it also enforces. Every
//! mutation bumps the epoch by one; bundles are bound to epochs and the
//! verifier insists on equality with what it fetched.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accumulator::{AccumulatorError, FieldTree, SerializedFieldTree, UpdateRecord};
use crate::backend::{
    setup, AuthRelation, BackendError, BackendKind, BlockRelation, KeyMode, ProvingKey,
    RelationKeys, VerifyingKey as RelationVk,
};
use crate::field::FieldElement;
use crate::params::SystemParams;
use crate::signature::SigningKey;

mod protocol;

pub use protocol::{
    auth, auth_with, simulate_bundle, verify, AuthBundle, AuthError, BlockProofEntry, ProofMode,
    Rejection,
};

pub type RealmId = String;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RealmError {
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error("unknown realm {0}")]
    UnknownRealm(RealmId),
    #[error("realm {0} is already trusted")]
    DuplicateTrust(RealmId),
    #[error("realm {0} is not trusted")]
    NotTrusted(RealmId),
    #[error("a realm cannot trust itself")]
    SelfTrust,
    #[error("published accumulator does not match its root")]
    RootMismatch,
}

/// Both relations keyed under one set of parameters.
#[derive(Clone, Debug)]
pub struct SystemKeys {
    pub auth: RelationKeys,
    pub block: RelationKeys,
}

/// What a prover needs.
#[derive(Clone, Copy)]
pub struct ProverKeys<'a> {
    pub auth: &'a ProvingKey,
    pub block: &'a ProvingKey,
}

/// What a verifier needs; small enough to hand out through the directory.
#[derive(Clone, Debug)]
pub struct VerifierKeys {
    pub auth: RelationVk,
    pub block: RelationVk,
}

impl SystemKeys {
    pub fn prover(&self) -> ProverKeys<'_> {
        ProverKeys { auth: &self.auth.pk, block: &self.block.pk }
    }

    pub fn verifier(&self) -> VerifierKeys {
        VerifierKeys { auth: self.auth.vk.clone(), block: self.block.vk.clone() }
    }

    pub fn backend(&self) -> BackendKind {
        self.auth.pk.backend()
    }
}

pub fn setup_system<G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    backend: BackendKind,
    mode: KeyMode,
    rng: &mut G,
) -> Result<SystemKeys, BackendError> {
    Ok(SystemKeys {
        auth: setup::<AuthRelation, _>(params, backend, mode, rng)?,
        block: setup::<BlockRelation, _>(params, backend, mode, rng)?,
    })
}

/// One realm mutation, for batched updates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "arg", rename_all = "snake_case")]
pub enum RealmOp {
    Block(FieldElement),
    Unblock(FieldElement),
    Trust(RealmId),
    Untrust(RealmId),
}

/// Mutable realm state, held by the realm's maintainer.
#[derive(Clone, Debug)]
pub struct RealmState {
    id: RealmId,
    seed: FieldElement,
    acc: FieldTree,
    epoch: u64,
    trusted: BTreeSet<RealmId>,
    maintainer: SigningKey,
}

impl RealmState {
    pub fn create<G: RngCore + CryptoRng + ?Sized>(
        params: &SystemParams,
        id: impl Into<RealmId>,
        rng: &mut G,
    ) -> Self {
        Self {
            id: id.into(),
            seed: FieldElement::random(rng),
            acc: FieldTree::create(params),
            epoch: 0,
            trusted: BTreeSet::new(),
            maintainer: SigningKey::generate(rng),
        }
    }

    /// Reassembles a realm from stored parts.
    pub fn from_parts(
        params: &SystemParams,
        id: RealmId,
        seed: FieldElement,
        acc: &SerializedFieldTree,
        epoch: u64,
        trusted: BTreeSet<RealmId>,
        maintainer: SigningKey,
    ) -> Result<Self, RealmError> {
        let acc = FieldTree::from_serialized(params, acc)?;
        Ok(Self { id, seed, acc, epoch, trusted, maintainer })
    }

    pub fn id(&self) -> &RealmId {
        &self.id
    }

    pub fn seed(&self) -> FieldElement {
        self.seed
    }

    pub fn accumulator(&self) -> &FieldTree {
        &self.acc
    }

    pub fn root(&self) -> FieldElement {
        self.acc.root()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn trusted(&self) -> &BTreeSet<RealmId> {
        &self.trusted
    }

    pub fn maintainer(&self) -> &SigningKey {
        &self.maintainer
    }

    pub fn block(&mut self, ps: FieldElement) -> Result<UpdateRecord<FieldElement>, RealmError> {
        let rec = self.acc.add(ps)?;
        self.epoch += 1;
        Ok(rec)
    }

    pub fn unblock(&mut self, ps: FieldElement) -> Result<UpdateRecord<FieldElement>, RealmError> {
        let rec = self.acc.remove(ps)?;
        self.epoch += 1;
        Ok(rec)
    }

    /// `is_registered` answers whether the directory knows the realm.
    pub fn trust(
        &mut self,
        other: &str,
        is_registered: impl FnOnce(&str) -> bool,
    ) -> Result<(), RealmError> {
        if other == self.id {
            return Err(RealmError::SelfTrust);
        }
        if self.trusted.contains(other) {
            return Err(RealmError::DuplicateTrust(other.to_string()));
        }
        if !is_registered(other) {
            return Err(RealmError::UnknownRealm(other.to_string()));
        }
        self.trusted.insert(other.to_string());
        self.epoch += 1;
        Ok(())
    }

    pub fn untrust(&mut self, other: &str) -> Result<(), RealmError> {
        if !self.trusted.remove(other) {
            return Err(RealmError::NotTrusted(other.to_string()));
        }
        self.epoch += 1;
        Ok(())
    }

    /// Applies `ops` in order as a single update. Ops that would change
    /// nothing (blocking a blocked pseudonym, trusting a trusted realm, ...)
    /// are skipped; any other failure leaves the realm untouched. The epoch
    /// advances once if anything changed. Returns which ops took effect.
    pub fn apply_batch(
        &mut self,
        ops: &[RealmOp],
        is_registered: impl Fn(&str) -> bool,
    ) -> Result<Vec<bool>, RealmError> {
        let mut next = self.clone();
        let mut applied = Vec::with_capacity(ops.len());
        for op in ops {
            let changed = match op {
                RealmOp::Block(ps) if next.acc.is_blocked(ps) => false,
                RealmOp::Block(ps) => next.acc.add(*ps).map(|_| true)?,
                RealmOp::Unblock(ps) if !next.acc.is_blocked(ps) => false,
                RealmOp::Unblock(ps) => next.acc.remove(*ps).map(|_| true)?,
                RealmOp::Trust(id) if next.trusted.contains(id) => false,
                RealmOp::Trust(id) => {
                    if *id == next.id {
                        return Err(RealmError::SelfTrust);
                    }
                    if !is_registered(id) {
                        return Err(RealmError::UnknownRealm(id.clone()));
                    }
                    next.trusted.insert(id.clone())
                }
                RealmOp::Untrust(id) => next.trusted.remove(id),
            };
            applied.push(changed);
        }
        if applied.iter().any(|&c| c) {
            next.epoch += 1;
            *self = next;
        }
        Ok(applied)
    }

    pub fn snapshot(&self) -> RealmSnapshot {
        RealmSnapshot {
            id: self.id.clone(),
            seed: self.seed,
            epoch: self.epoch,
            trusted: self.trusted.iter().cloned().collect(),
            root: self.acc.root(),
            tree: Some(Arc::new(self.acc.clone())),
        }
    }
}

/// Read-only view of a realm at one epoch. Verifiers only need the root;
/// provers also need the tree to build witnesses.
#[derive(Clone, Debug)]
pub struct RealmSnapshot {
    pub id: RealmId,
    pub seed: FieldElement,
    pub epoch: u64,
    /// In the published (sorted) order.
    pub trusted: Vec<RealmId>,
    pub root: FieldElement,
    pub tree: Option<Arc<FieldTree>>,
}

impl RealmSnapshot {
    pub fn without_tree(&self) -> Self {
        Self { tree: None, ..self.clone() }
    }
}

#[cfg(test)]
mod tests;
