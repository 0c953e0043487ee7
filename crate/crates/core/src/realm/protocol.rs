use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ProverKeys, RealmId, RealmSnapshot, SystemKeys, VerifierKeys};
use crate::accumulator::{ver_non_mem, FieldTreeHasher, FieldWitness};
use crate::backend::{
    prove, simulate, verify as verify_proof, AuthRelation, BackendError, BlockRelation, Proof,
};
use crate::credential::Credential;
use crate::field::FieldElement;
use crate::params::SystemParams;
use crate::relations::{AuthStatement, AuthWitness, BlockStatement, BlockWitness};
use crate::signature::VerifyingKey;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockProofEntry {
    pub realm: RealmId,
    pub epoch: u64,
    pub proof: Proof,
}

/// Everything a user presents to authenticate to `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthBundle {
    pub params_digest: String,
    pub target: RealmId,
    pub target_epoch: u64,
    pub ps_r: FieldElement,
    pub witness: FieldWitness,
    pub pi_auth: Proof,
    pub pi_block: Vec<BlockProofEntry>,
}

impl AuthBundle {
    /// Proof bytes only: the auth proof plus one block proof per trusted realm.
    pub fn proof_bytes(&self) -> usize {
        self.pi_auth.size() + self.pi_block.iter().map(|e| e.proof.size()).sum::<usize>()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("pseudonym is blocked in realm {0}")]
    Blocked(RealmId),
    #[error("trusted states do not match the target's trusted list")]
    TrustedListMismatch,
    #[error("no accumulator available for realm {0}")]
    MissingTree(RealmId),
    #[error("accumulator depth of realm {0} differs from the system depth")]
    DepthMismatch(RealmId),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Why a bundle was refused.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "realm")]
pub enum Rejection {
    #[error("bundle was made under different system parameters")]
    ParamsMismatch,
    #[error("verifying keys or witness use a different tree depth")]
    DepthMismatch,
    #[error("bundle is addressed to realm {0}")]
    WrongTarget(RealmId),
    #[error("bundle epoch for realm {0} is stale; regenerate")]
    EpochMismatch(RealmId),
    #[error("trusted realm {0} could not be fetched")]
    UnreachableRealm(RealmId),
    #[error("block proofs do not follow the published trusted list")]
    TrustedListMismatch,
    #[error("pseudonym is not shown absent from the target blocklist")]
    TargetNonMembership,
    #[error("auth proof does not verify")]
    AuthProof,
    #[error("block proof for realm {0} does not verify")]
    BlockProof(RealmId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProofMode {
    #[default]
    Sequential,
    /// Block proofs are generated on the rayon pool.
    Parallel,
}

pub fn auth<G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    keys: ProverKeys<'_>,
    cred: &Credential,
    pk_ip: &VerifyingKey,
    target: &RealmSnapshot,
    trusted: &[RealmSnapshot],
    rng: &mut G,
) -> Result<AuthBundle, AuthError> {
    auth_with(params, keys, cred, pk_ip, target, trusted, ProofMode::Parallel, rng)
}

fn witness_for(
    params: &SystemParams,
    realm: &RealmSnapshot,
    ps: &FieldElement,
) -> Result<FieldWitness, AuthError> {
    let tree = realm.tree.as_ref().ok_or_else(|| AuthError::MissingTree(realm.id.clone()))?;
    if tree.depth() != params.depth() {
        return Err(AuthError::DepthMismatch(realm.id.clone()));
    }
    tree.non_mem_prove(ps).ok_or_else(|| AuthError::Blocked(realm.id.clone()))
}

fn check_trusted_order(target: &RealmSnapshot, trusted: &[RealmSnapshot]) -> Result<(), AuthError> {
    if trusted.len() != target.trusted.len()
        || trusted.iter().zip(&target.trusted).any(|(s, id)| &s.id != id)
    {
        return Err(AuthError::TrustedListMismatch);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn auth_with<G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    keys: ProverKeys<'_>,
    cred: &Credential,
    pk_ip: &VerifyingKey,
    target: &RealmSnapshot,
    trusted: &[RealmSnapshot],
    mode: ProofMode,
    rng: &mut G,
) -> Result<AuthBundle, AuthError> {
    check_trusted_order(target, trusted)?;
    let h = params.hasher();
    let ps_r = h.prf(cred.x, target.seed);
    let witness = witness_for(params, target, &ps_r)?;
    // Collect every trusted witness first so a block anywhere fails before
    // any proving work.
    let jobs = trusted
        .iter()
        .map(|t| {
            let w = witness_for(params, t, &h.prf(cred.x, t.seed))?;
            let stmt = BlockStatement { ps_r, s_r: target.seed, s_t: t.seed, acc_t: t.root };
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            Ok((t, stmt, BlockWitness { w, x: cred.x }, seed))
        })
        .collect::<Result<Vec<_>, AuthError>>()?;

    let stmt = AuthStatement { pk_ip: *pk_ip, s_r: target.seed, ps_r };
    let pi_auth = prove::<AuthRelation, _>(params, keys.auth, &stmt, &AuthWitness::from(cred), rng)?;

    let prove_one = |(t, stmt, wit, seed): &(&RealmSnapshot, BlockStatement, BlockWitness, [u8; 32])| {
        let mut r = ChaCha20Rng::from_seed(*seed);
        prove::<BlockRelation, _>(params, keys.block, stmt, wit, &mut r)
            .map(|proof| BlockProofEntry { realm: t.id.clone(), epoch: t.epoch, proof })
    };
    let pi_block = match mode {
        ProofMode::Sequential => jobs.iter().map(prove_one).collect::<Result<Vec<_>, _>>()?,
        ProofMode::Parallel => jobs.par_iter().map(prove_one).collect::<Result<Vec<_>, _>>()?,
    };

    Ok(AuthBundle {
        params_digest: params.digest().to_string(),
        target: target.id.clone(),
        target_epoch: target.epoch,
        ps_r,
        witness,
        pi_auth,
        pi_block,
    })
}

/// Checks a bundle against the verifier's freshly fetched states. A trusted
/// realm missing from `trusted` is treated as unreachable and the bundle is
/// refused.
pub fn verify(
    params: &SystemParams,
    keys: &VerifierKeys,
    pk_ip: &VerifyingKey,
    bundle: &AuthBundle,
    target: &RealmSnapshot,
    trusted: &BTreeMap<RealmId, RealmSnapshot>,
) -> Result<(), Rejection> {
    if bundle.params_digest != params.digest() {
        return Err(Rejection::ParamsMismatch);
    }
    if keys.auth.header.depth != params.depth()
        || keys.block.header.depth != params.depth()
        || bundle.witness.path.len() != params.depth() as usize
    {
        return Err(Rejection::DepthMismatch);
    }
    if bundle.target != target.id {
        return Err(Rejection::WrongTarget(bundle.target.clone()));
    }
    if bundle.target_epoch != target.epoch {
        return Err(Rejection::EpochMismatch(target.id.clone()));
    }
    if bundle.pi_block.len() != target.trusted.len()
        || bundle.pi_block.iter().zip(&target.trusted).any(|(e, id)| &e.realm != id)
    {
        return Err(Rejection::TrustedListMismatch);
    }
    let mut fetched = Vec::with_capacity(bundle.pi_block.len());
    for entry in &bundle.pi_block {
        let state = trusted
            .get(&entry.realm)
            .ok_or_else(|| Rejection::UnreachableRealm(entry.realm.clone()))?;
        if state.epoch != entry.epoch {
            return Err(Rejection::EpochMismatch(entry.realm.clone()));
        }
        fetched.push(state);
    }

    let tree_hasher = FieldTreeHasher::new(params.hasher().clone());
    if !ver_non_mem(&tree_hasher, params.depth(), &target.root, &bundle.ps_r, &bundle.witness) {
        return Err(Rejection::TargetNonMembership);
    }
    let stmt = AuthStatement { pk_ip: *pk_ip, s_r: target.seed, ps_r: bundle.ps_r };
    if !verify_proof::<AuthRelation>(params, &keys.auth, &stmt, &bundle.pi_auth) {
        return Err(Rejection::AuthProof);
    }
    for (entry, state) in bundle.pi_block.iter().zip(fetched) {
        let stmt = BlockStatement {
            ps_r: bundle.ps_r,
            s_r: target.seed,
            s_t: state.seed,
            acc_t: state.root,
        };
        if !verify_proof::<BlockRelation>(params, &keys.block, &stmt, &entry.proof) {
            return Err(Rejection::BlockProof(entry.realm.clone()));
        }
    }
    Ok(())
}

/// Builds a bundle for pseudonym `ps_r` from public data and the setup
/// trapdoor alone, with no credential. The clear witness is computed from
/// the public target tree.
pub fn simulate_bundle<G: RngCore + CryptoRng + ?Sized>(
    params: &SystemParams,
    keys: &SystemKeys,
    pk_ip: &VerifyingKey,
    ps_r: FieldElement,
    target: &RealmSnapshot,
    trusted: &[RealmSnapshot],
    rng: &mut G,
) -> Result<AuthBundle, AuthError> {
    check_trusted_order(target, trusted)?;
    let witness = witness_for(params, target, &ps_r)?;
    let stmt = AuthStatement { pk_ip: *pk_ip, s_r: target.seed, ps_r };
    let pi_auth = simulate::<AuthRelation, _>(params, &keys.auth, &stmt, rng)?;
    let pi_block = trusted
        .iter()
        .map(|t| {
            let stmt = BlockStatement { ps_r, s_r: target.seed, s_t: t.seed, acc_t: t.root };
            let proof = simulate::<BlockRelation, _>(params, &keys.block, &stmt, rng)?;
            Ok(BlockProofEntry { realm: t.id.clone(), epoch: t.epoch, proof })
        })
        .collect::<Result<Vec<_>, AuthError>>()?;
    Ok(AuthBundle {
        params_digest: params.digest().to_string(),
        target: target.id.clone(),
        target_epoch: target.epoch,
        ps_r,
        witness,
        pi_auth,
        pi_block,
    })
}
