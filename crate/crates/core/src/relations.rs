//! The authentication and block relations: statements, witnesses, native
//! evaluators and constraint synthesis.
//!
//! Public inputs are laid out in statement field order. For the auth
//! relation the identity-provider key contributes its two coordinates.

use ark_bls12_381::Fr;
use ark_r1cs_std::{alloc::AllocVar, eq::EqGadget, fields::fp::FpVar};
use ark_relations::r1cs::{
    ConstraintSynthesizer, ConstraintSystem, ConstraintSystemRef, SynthesisError, SynthesisMode,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accumulator::gadget::{enforce_non_membership, WitnessVar};
use crate::accumulator::{ver_non_mem, FieldTreeHasher, FieldWitness};
use crate::credential::{verify_credential, Credential};
use crate::field::FieldElement;
use crate::hash::Hasher;
use crate::params::SystemParams;
use crate::signature::{alloc_verifying_key_input, enforce_verify, Signature, SignatureVar, VerifyingKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationId {
    Auth,
    Block,
}

impl RelationId {
    pub fn to_byte(self) -> u8 {
        match self {
            RelationId::Auth => 1,
            RelationId::Block => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(RelationId::Auth),
            2 => Some(RelationId::Block),
            _ => None,
        }
    }
}

/// A statement with a normative public-input encoding.
pub trait Statement {
    const RELATION: RelationId;

    fn public_inputs(&self) -> Vec<FieldElement>;

    fn to_bytes(&self) -> Vec<u8> {
        self.public_inputs().iter().flat_map(|f| f.to_bytes_le()).collect()
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"fab-statement-v1");
        h.update([Self::RELATION.to_byte()]);
        h.update(self.to_bytes());
        h.finalize().into()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthStatement {
    pub pk_ip: VerifyingKey,
    pub s_r: FieldElement,
    pub ps_r: FieldElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthWitness {
    pub sigma: Signature,
    pub x: FieldElement,
}

impl From<&Credential> for AuthWitness {
    fn from(c: &Credential) -> Self {
        Self { sigma: c.sigma, x: c.x }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStatement {
    pub ps_r: FieldElement,
    pub s_r: FieldElement,
    pub s_t: FieldElement,
    pub acc_t: FieldElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockWitness {
    pub w: FieldWitness,
    pub x: FieldElement,
}

impl Statement for AuthStatement {
    const RELATION: RelationId = RelationId::Auth;

    fn public_inputs(&self) -> Vec<FieldElement> {
        let [px, py] = self.pk_ip.public_inputs();
        vec![px, py, self.s_r, self.ps_r]
    }
}

impl Statement for BlockStatement {
    const RELATION: RelationId = RelationId::Block;

    fn public_inputs(&self) -> Vec<FieldElement> {
        vec![self.ps_r, self.s_r, self.s_t, self.acc_t]
    }
}

pub fn eval_auth(hasher: &Hasher, stmt: &AuthStatement, wit: &AuthWitness) -> bool {
    let cred = Credential { x: wit.x, sigma: wit.sigma };
    verify_credential(hasher, &stmt.pk_ip, &cred) && hasher.prf(wit.x, stmt.s_r) == stmt.ps_r
}

pub fn eval_block(hasher: &Hasher, depth: u32, stmt: &BlockStatement, wit: &BlockWitness) -> bool {
    if hasher.prf(wit.x, stmt.s_r) != stmt.ps_r {
        return false;
    }
    let ps_t = hasher.prf(wit.x, stmt.s_t);
    ver_non_mem(&FieldTreeHasher::new(hasher.clone()), depth, &stmt.acc_t, &ps_t, &wit.w)
}

fn input(cs: &ConstraintSystemRef<Fr>, v: Option<FieldElement>) -> Result<FpVar<Fr>, SynthesisError> {
    FpVar::new_input(cs.clone(), || v.map(|f| f.inner()).ok_or(SynthesisError::AssignmentMissing))
}

fn witness(cs: &ConstraintSystemRef<Fr>, v: Option<FieldElement>) -> Result<FpVar<Fr>, SynthesisError> {
    FpVar::new_witness(cs.clone(), || v.map(|f| f.inner()).ok_or(SynthesisError::AssignmentMissing))
}

/// Circuit for the auth relation. Statement and witness are `None` during
/// key generation.
#[derive(Clone)]
pub struct AuthCircuit {
    pub hasher: Hasher,
    pub statement: Option<AuthStatement>,
    pub witness: Option<AuthWitness>,
}

impl ConstraintSynthesizer<Fr> for AuthCircuit {
    fn generate_constraints(self, cs: ConstraintSystemRef<Fr>) -> Result<(), SynthesisError> {
        let st = self.statement.as_ref();
        let wit = self.witness.as_ref();
        let pk = alloc_verifying_key_input(cs.clone(), st.map(|s| &s.pk_ip))?;
        let s_r = input(&cs, st.map(|s| s.s_r))?;
        let ps_r = input(&cs, st.map(|s| s.ps_r))?;

        let x = witness(&cs, wit.map(|w| w.x))?;
        let sig = SignatureVar::alloc(cs.clone(), wit.map(|w| &w.sigma))?;

        let h_x = self.hasher.credential_hash_var(&x)?;
        enforce_verify(&self.hasher, &pk, &h_x, &sig)?;
        self.hasher.prf_var(&x, &s_r)?.enforce_equal(&ps_r)
    }
}

#[derive(Clone)]
pub struct BlockCircuit {
    pub hasher: Hasher,
    pub depth: u32,
    pub statement: Option<BlockStatement>,
    pub witness: Option<BlockWitness>,
}

impl ConstraintSynthesizer<Fr> for BlockCircuit {
    fn generate_constraints(self, cs: ConstraintSystemRef<Fr>) -> Result<(), SynthesisError> {
        let st = self.statement.as_ref();
        let wit = self.witness.as_ref();
        let ps_r = input(&cs, st.map(|s| s.ps_r))?;
        let s_r = input(&cs, st.map(|s| s.s_r))?;
        let s_t = input(&cs, st.map(|s| s.s_t))?;
        let acc_t = input(&cs, st.map(|s| s.acc_t))?;

        let x = witness(&cs, wit.map(|w| w.x))?;
        let wv = WitnessVar::alloc(cs.clone(), self.depth, wit.map(|w| &w.w))?;

        self.hasher.prf_var(&x, &s_r)?.enforce_equal(&ps_r)?;
        let ps_t = self.hasher.prf_var(&x, &s_t)?;
        enforce_non_membership(&self.hasher, self.depth, &acc_t, &ps_t, &wv)
    }
}

impl AuthCircuit {
    pub fn blank(params: &SystemParams) -> Self {
        Self { hasher: params.hasher().clone(), statement: None, witness: None }
    }

    pub fn new(params: &SystemParams, stmt: &AuthStatement, wit: &AuthWitness) -> Self {
        Self {
            hasher: params.hasher().clone(),
            statement: Some(stmt.clone()),
            witness: Some(wit.clone()),
        }
    }
}

impl BlockCircuit {
    pub fn blank(params: &SystemParams) -> Self {
        Self { hasher: params.hasher().clone(), depth: params.depth(), statement: None, witness: None }
    }

    pub fn new(params: &SystemParams, stmt: &BlockStatement, wit: &BlockWitness) -> Self {
        Self {
            hasher: params.hasher().clone(),
            depth: params.depth(),
            statement: Some(stmt.clone()),
            witness: Some(wit.clone()),
        }
    }
}

/// Shape of a compiled relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledRelation {
    pub relation: RelationId,
    pub depth: u32,
    pub num_constraints: usize,
    /// Public inputs, excluding the constant-one wire.
    pub num_public_inputs: usize,
    pub num_witness_variables: usize,
}

fn compile<C: ConstraintSynthesizer<Fr>>(
    relation: RelationId,
    depth: u32,
    circuit: C,
) -> Result<CompiledRelation, SynthesisError> {
    let cs = ConstraintSystem::<Fr>::new_ref();
    cs.set_mode(SynthesisMode::Setup);
    circuit.generate_constraints(cs.clone())?;
    cs.finalize();
    Ok(CompiledRelation {
        relation,
        depth,
        num_constraints: cs.num_constraints(),
        num_public_inputs: cs.num_instance_variables() - 1,
        num_witness_variables: cs.num_witness_variables(),
    })
}

pub fn compile_auth(params: &SystemParams) -> Result<CompiledRelation, SynthesisError> {
    compile(RelationId::Auth, 0, AuthCircuit::blank(params))
}

pub fn compile_block(params: &SystemParams) -> Result<CompiledRelation, SynthesisError> {
    compile(RelationId::Block, params.depth(), BlockCircuit::blank(params))
}

/// Runs the circuit on a concrete assignment. A synthesis error caused by a
/// malformed witness counts as unsatisfied.
pub fn circuit_satisfied<C: ConstraintSynthesizer<Fr>>(circuit: C) -> Result<bool, SynthesisError> {
    let cs = ConstraintSystem::<Fr>::new_ref();
    match circuit.generate_constraints(cs.clone()) {
        Ok(()) => cs.is_satisfied(),
        Err(SynthesisError::Unsatisfiable) => Ok(false),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulator::FieldTree;
    use crate::credential::{ip_init, register, IdentityProvider};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const DEPTH: u32 = 4;

    struct Fixture {
        params: SystemParams,
        ip: IdentityProvider,
        rng: ChaCha20Rng,
    }

    impl Fixture {
        fn new(seed: u64) -> Self {
            let params = SystemParams::new(DEPTH).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let ip = IdentityProvider::new(ip_init(&mut rng), params.hasher().clone());
            Self { params, ip, rng }
        }

        fn credential(&mut self) -> Credential {
            let x = FieldElement::random(&mut self.rng);
            register(self.params.hasher(), x, &self.ip, &mut self.rng).unwrap()
        }

        fn auth_instance(&mut self) -> (AuthStatement, AuthWitness) {
            let cred = self.credential();
            let s_r = FieldElement::random(&mut self.rng);
            let ps_r = self.params.hasher().prf(cred.x, s_r);
            (AuthStatement { pk_ip: self.ip.pk(), s_r, ps_r }, AuthWitness::from(&cred))
        }

        /// Honest block instance against a trusted tree holding a few
        /// random blocks.
        fn block_instance(&mut self) -> (BlockStatement, BlockWitness) {
            let h = self.params.hasher().clone();
            let x = FieldElement::random(&mut self.rng);
            let s_r = FieldElement::random(&mut self.rng);
            let s_t = FieldElement::random(&mut self.rng);
            let mut tree = FieldTree::create(&self.params);
            for _ in 0..self.rng.gen_range(0..6) {
                tree.add(FieldElement::random(&mut self.rng)).unwrap();
            }
            let w = tree.non_mem_prove(&h.prf(x, s_t)).unwrap();
            let stmt = BlockStatement { ps_r: h.prf(x, s_r), s_r, s_t, acc_t: tree.root() };
            (stmt, BlockWitness { w, x })
        }

        fn auth_both(&self, st: &AuthStatement, w: &AuthWitness) -> (bool, bool) {
            let native = eval_auth(self.params.hasher(), st, w);
            let circuit = circuit_satisfied(AuthCircuit::new(&self.params, st, w)).unwrap();
            (native, circuit)
        }

        fn block_both(&self, st: &BlockStatement, w: &BlockWitness) -> (bool, bool) {
            let native = eval_block(self.params.hasher(), DEPTH, st, w);
            let circuit = circuit_satisfied(BlockCircuit::new(&self.params, st, w)).unwrap();
            (native, circuit)
        }
    }

    #[test]
    fn auth_examples() {
        let mut f = Fixture::new(1);
        let (st, w) = f.auth_instance();
        assert_eq!(f.auth_both(&st, &w), (true, true));

        let other_seed = AuthStatement { s_r: FieldElement::random(&mut f.rng), ..st.clone() };
        assert_eq!(f.auth_both(&other_seed, &w), (false, false));

        let mut junk = [0u8; 64];
        f.rng.fill(&mut junk[..]);
        if let Ok(sigma) = Signature::from_bytes(&junk) {
            assert_eq!(f.auth_both(&st, &AuthWitness { sigma, ..w.clone() }), (false, false));
        }
        let forged = crate::signature::SigningKey::generate(&mut f.rng)
            .sign(f.params.hasher(), f.params.hasher().credential_hash(w.x), &mut f.rng);
        assert_eq!(f.auth_both(&st, &AuthWitness { sigma: forged, ..w }), (false, false));
    }

    #[test]
    fn block_examples() {
        let mut f = Fixture::new(2);
        let (st, w) = f.block_instance();
        assert_eq!(f.block_both(&st, &w), (true, true));
        // Witness from the trusted realm belongs to someone else.
        let (_, w2) = f.block_instance();
        let mixed = BlockWitness { x: w2.x, w: w.w.clone() };
        assert_eq!(f.block_both(&st, &mixed), (false, false));
    }

    #[test]
    fn blocked_user_has_no_accepting_witness() {
        let mut f = Fixture::new(3);
        let h = f.params.hasher().clone();
        let x = FieldElement::random(&mut f.rng);
        let s_r = FieldElement::random(&mut f.rng);
        let s_t = FieldElement::random(&mut f.rng);
        let mut tree = FieldTree::create(&f.params);
        for _ in 0..4 {
            tree.add(FieldElement::random(&mut f.rng)).unwrap();
        }
        tree.add(h.prf(x, s_t)).unwrap();
        let stmt = BlockStatement { ps_r: h.prf(x, s_r), s_r, s_t, acc_t: tree.root() };
        // Every stored leaf, at its own slot with its genuine path.
        for (slot, iv) in tree.slots().collect::<Vec<_>>() {
            let w = FieldWitness { a: iv.a, b: iv.b, leaf_index: slot, path: tree.path(slot) };
            assert_eq!(f.block_both(&stmt, &BlockWitness { w, x }), (false, false));
        }
    }

    #[test]
    fn dual_evaluation_on_honest_and_mutated_auth() {
        let mut f = Fixture::new(4);
        for i in 0..100 {
            let (st, w) = f.auth_instance();
            assert_eq!(f.auth_both(&st, &w), (true, true));
            let (mut st2, mut w2) = (st.clone(), w.clone());
            match i % 5 {
                0 => st2.pk_ip = ip_init(&mut f.rng).pk,
                1 => st2.s_r = st2.s_r.successor(),
                2 => st2.ps_r = FieldElement::random(&mut f.rng),
                3 => w2.x = w2.x.successor(),
                _ => w2.sigma = f.auth_instance().1.sigma,
            }
            assert_eq!(f.auth_both(&st2, &w2), (false, false), "mutation {}", i % 5);
        }
    }

    #[test]
    fn dual_evaluation_on_honest_and_mutated_block() {
        let mut f = Fixture::new(5);
        for i in 0..100 {
            let (st, w) = f.block_instance();
            assert_eq!(f.block_both(&st, &w), (true, true));
            let (mut st2, mut w2) = (st.clone(), w.clone());
            match i % 9 {
                0 => st2.ps_r = st2.ps_r.successor(),
                1 => st2.s_r = FieldElement::random(&mut f.rng),
                2 => st2.s_t = FieldElement::random(&mut f.rng),
                3 => st2.acc_t = FieldElement::random(&mut f.rng),
                4 => w2.x = FieldElement::random(&mut f.rng),
                5 => w2.w.b = w2.w.a,
                6 => w2.w.leaf_index ^= 1,
                7 => {
                    let k = f.rng.gen_range(0..DEPTH as usize);
                    w2.w.path[k] = w2.w.path[k].successor();
                }
                _ => w2.w.leaf_index |= 1 << DEPTH,
            }
            let (native, circuit) = f.block_both(&st2, &w2);
            assert_eq!(native, circuit, "mutation {}", i % 9);
            // A fresh trusted seed usually lands the pseudonym in the same
            // free interval, so that mutation only has to agree.
            if i % 9 != 2 {
                assert!(!native, "mutation {}", i % 9);
            }
        }
    }

    #[test]
    fn statements_bind_field_order() {
        let mut f = Fixture::new(6);
        let (st, _) = f.block_instance();
        let swapped = BlockStatement { s_r: st.s_t, s_t: st.s_r, ..st.clone() };
        assert_ne!(st.digest(), swapped.digest());
        assert_eq!(st.to_bytes().len(), 4 * 32);
        let (ast, _) = f.auth_instance();
        assert_eq!(ast.public_inputs().len(), 4);
    }

    #[test]
    fn constraint_counts_are_pinned() {
        let params = SystemParams::new(20).unwrap();
        let auth = compile_auth(&params).unwrap();
        let block = compile_block(&params).unwrap();
        assert_eq!(auth.num_public_inputs, 4);
        assert_eq!(block.num_public_inputs, 4);
        assert_eq!(auth.num_constraints, 6589);
        assert_eq!(block.num_constraints, 8306);
        // Block size grows with depth; auth does not depend on it.
        let small = SystemParams::new(10).unwrap();
        assert_eq!(compile_auth(&small).unwrap().num_constraints, auth.num_constraints);
        assert!(compile_block(&small).unwrap().num_constraints < block.num_constraints);
    }
}
