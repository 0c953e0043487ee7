//! Messaging groups as realms. Membership and blocklist edits go through
//! proposals and commits; joiners present an auth bundle in place of a key
//! package. No key schedule, no encryption.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directory::{ClosureError, DirectoryClient, DirectoryError, DirectoryRecord};
use crate::field::FieldElement;
use crate::params::SystemParams;
use crate::realm::{
    verify, AuthBundle, RealmError, RealmId, RealmOp, RealmSnapshot, RealmState, Rejection,
    VerifierKeys,
};
use crate::signature::VerifyingKey;

pub mod scenario;

pub type ProposalId = u64;

/// Analog of a key package: the joiner's auth bundle for this group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub bundle: AuthBundle,
}

impl JoinRequest {
    pub fn pseudonym(&self) -> FieldElement {
        self.bundle.ps_r
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "snake_case")]
pub enum ProposalKind {
    Block(FieldElement),
    Unblock(FieldElement),
    Trust(RealmId),
    Untrust(RealmId),
    Add(Box<JoinRequest>),
    Remove(FieldElement),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: ProposalId,
    pub proposer: FieldElement,
    pub kind: ProposalKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("{0} is not a member")]
    NotAMember(FieldElement),
    #[error("no pending proposals")]
    NothingToCommit,
    #[error("join rejected: {0}")]
    JoinRejected(Rejection),
    #[error(transparent)]
    Realm(#[from] RealmError),
    #[error(transparent)]
    Directory(#[from] DirectoryError),
}

impl From<ClosureError> for GroupError {
    fn from(e: ClosureError) -> Self {
        match e {
            ClosureError::Directory(e) => GroupError::Directory(e),
            ClosureError::Realm(e) => GroupError::Realm(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitSummary {
    pub context_epoch: u64,
    pub realm_epoch: u64,
    pub applied: Vec<ProposalId>,
    pub skipped: Vec<ProposalId>,
    pub added: Vec<FieldElement>,
    pub removed: Vec<FieldElement>,
}

/// Shared verification context every group needs.
#[derive(Clone)]
pub struct GroupContext {
    pub params: SystemParams,
    pub keys: VerifierKeys,
    pub pk_ip: VerifyingKey,
    pub directory: DirectoryClient,
}

impl GroupContext {
    /// Fresh closure of `realm`, roots only, then the realm-engine verifier.
    pub fn verify_join(&self, realm: &str, req: &JoinRequest) -> Result<(), GroupError> {
        let (target, trusted) = self.directory.closure_snapshots(&self.params, realm, false)?;
        let trusted: BTreeMap<RealmId, RealmSnapshot> =
            trusted.into_iter().map(|s| (s.id.clone(), s)).collect();
        verify(&self.params, &self.keys, &self.pk_ip, &req.bundle, &target, &trusted)
            .map_err(GroupError::JoinRejected)
    }
}

pub struct Group {
    ctx: GroupContext,
    realm: RealmState,
    members: BTreeSet<FieldElement>,
    pending: Vec<Proposal>,
    context_epoch: u64,
    next_id: ProposalId,
}

impl Group {
    /// New group with an empty blocklist, registered with the directory.
    /// It has no members until someone joins.
    pub fn create<G: RngCore + CryptoRng + ?Sized>(
        ctx: GroupContext,
        id: impl Into<RealmId>,
        rng: &mut G,
    ) -> Result<Self, GroupError> {
        let realm = RealmState::create(&ctx.params, id, rng);
        ctx.directory.publish_state(&ctx.params, &realm, rng)?;
        Ok(Self { ctx, realm, members: BTreeSet::new(), pending: Vec::new(), context_epoch: 0, next_id: 0 })
    }

    pub fn id(&self) -> &RealmId {
        self.realm.id()
    }

    pub fn realm(&self) -> &RealmState {
        &self.realm
    }

    pub fn members(&self) -> &BTreeSet<FieldElement> {
        &self.members
    }

    pub fn is_member(&self, ps: &FieldElement) -> bool {
        self.members.contains(ps)
    }

    pub fn pending(&self) -> &[Proposal] {
        &self.pending
    }

    pub fn context_epoch(&self) -> u64 {
        self.context_epoch
    }

    /// Verifies the joiner against freshly fetched directory state and adds
    /// the pseudonym on success.
    pub fn join(&mut self, req: &JoinRequest) -> Result<FieldElement, GroupError> {
        self.ctx.verify_join(self.realm.id(), req)?;
        let ps = req.pseudonym();
        if self.members.insert(ps) {
            self.context_epoch += 1;
        }
        Ok(ps)
    }

    pub fn propose(&mut self, member: FieldElement, kind: ProposalKind) -> Result<ProposalId, GroupError> {
        if !self.members.contains(&member) {
            return Err(GroupError::NotAMember(member));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.pending.push(Proposal { id, proposer: member, kind });
        Ok(id)
    }

    /// Drops a pending proposal; used to clear one that made a commit fail.
    pub fn withdraw(&mut self, id: ProposalId) -> bool {
        let before = self.pending.len();
        self.pending.retain(|p| p.id != id);
        self.pending.len() != before
    }

    /// Applies every pending proposal in order, or none of them. Duplicates
    /// and no-ops are skipped. Realm changes go out as one directory
    /// publication; members blocked by the result are removed. On error the
    /// group, its realm, the directory and the pending list are unchanged.
    pub fn commit<G: RngCore + CryptoRng + ?Sized>(
        &mut self,
        committer: FieldElement,
        rng: &mut G,
    ) -> Result<CommitSummary, GroupError> {
        if !self.members.contains(&committer) {
            return Err(GroupError::NotAMember(committer));
        }
        if self.pending.is_empty() {
            return Err(GroupError::NothingToCommit);
        }

        // Add proposals are checked against the state before this commit.
        for p in &self.pending {
            if let ProposalKind::Add(req) = &p.kind {
                self.ctx.verify_join(self.realm.id(), req)?;
            }
        }

        let mut ops = Vec::new();
        let mut op_owner = Vec::new();
        let mut members = self.members.clone();
        let mut applied = Vec::new();
        let mut skipped = Vec::new();
        let mut added = Vec::new();
        for p in &self.pending {
            let op = match &p.kind {
                ProposalKind::Block(ps) => RealmOp::Block(*ps),
                ProposalKind::Unblock(ps) => RealmOp::Unblock(*ps),
                ProposalKind::Trust(id) => RealmOp::Trust(id.clone()),
                ProposalKind::Untrust(id) => RealmOp::Untrust(id.clone()),
                ProposalKind::Add(req) => {
                    if members.insert(req.pseudonym()) {
                        added.push(req.pseudonym());
                        applied.push(p.id);
                    } else {
                        skipped.push(p.id);
                    }
                    continue;
                }
                ProposalKind::Remove(ps) => {
                    if members.remove(ps) {
                        applied.push(p.id);
                    } else {
                        skipped.push(p.id);
                    }
                    continue;
                }
            };
            ops.push(op);
            op_owner.push(p.id);
        }

        let mut realm = self.realm.clone();
        let directory = &self.ctx.directory;
        let results = realm.apply_batch(&ops, |id| directory.fetch(id).is_ok())?;
        for (id, took) in op_owner.into_iter().zip(results) {
            if took {
                applied.push(id);
            } else {
                skipped.push(id);
            }
        }
        applied.sort_unstable();
        skipped.sort_unstable();

        members.retain(|ps| !realm.accumulator().is_blocked(ps));
        let removed: Vec<FieldElement> = self.members.difference(&members).copied().collect();
        added.retain(|ps| members.contains(ps));

        if realm.epoch() != self.realm.epoch() {
            let record = DirectoryRecord::from_state(&self.ctx.params, &realm, rng);
            self.ctx.directory.publish(record)?;
        }

        self.realm = realm;
        self.members = members;
        self.pending.clear();
        self.context_epoch += 1;
        Ok(CommitSummary {
            context_epoch: self.context_epoch,
            realm_epoch: self.realm.epoch(),
            applied,
            skipped,
            added,
            removed,
        })
    }
}
