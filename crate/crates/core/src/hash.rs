//! Domain-separated two-to-one hash and the pseudonym PRF.
//!
//! `hash2(tag, a, b)` runs one Poseidon permutation over `[tag, a, b]` and
//! returns the first rate element. The tag occupies the capacity slot, so
//! the credential, pseudonym, leaf, node and challenge uses never collide.

use std::sync::Arc;

use ark_bls12_381::Fr;
use ark_r1cs_std::fields::fp::FpVar;
use ark_relations::r1cs::SynthesisError;
use serde::{Deserialize, Serialize};

use crate::field::FieldElement;
use crate::poseidon::PoseidonParams;

/// Uses of the hash that must never collide with one another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Credential,
    Pseudonym,
    Leaf,
    Node,
    Challenge,
}

impl DomainTag {
    pub const ALL: [DomainTag; 5] = [
        DomainTag::Credential,
        DomainTag::Pseudonym,
        DomainTag::Leaf,
        DomainTag::Node,
        DomainTag::Challenge,
    ];
}

/// Field constants written into the capacity element for each tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTags {
    pub credential: u64,
    pub pseudonym: u64,
    pub leaf: u64,
    pub node: u64,
    pub challenge: u64,
}

impl Default for DomainTags {
    fn default() -> Self {
        Self { credential: 1, pseudonym: 2, leaf: 3, node: 4, challenge: 5 }
    }
}

impl DomainTags {
    pub fn value(&self, tag: DomainTag) -> u64 {
        match tag {
            DomainTag::Credential => self.credential,
            DomainTag::Pseudonym => self.pseudonym,
            DomainTag::Leaf => self.leaf,
            DomainTag::Node => self.node,
            DomainTag::Challenge => self.challenge,
        }
    }

    pub fn pairwise_distinct(&self) -> bool {
        let values: Vec<u64> = DomainTag::ALL.iter().map(|t| self.value(*t)).collect();
        values
            .iter()
            .enumerate()
            .all(|(i, v)| values[i + 1..].iter().all(|w| w != v))
    }
}

#[derive(Clone, Debug)]
pub struct Hasher {
    poseidon: Arc<PoseidonParams>,
    tags: DomainTags,
}

impl PartialEq for Hasher {
    fn eq(&self, other: &Self) -> bool {
        self.tags == other.tags
            && (Arc::ptr_eq(&self.poseidon, &other.poseidon) || self.poseidon == other.poseidon)
    }
}

impl Eq for Hasher {}

impl Default for Hasher {
    fn default() -> Self {
        Self::new(PoseidonParams::default_shared(), DomainTags::default())
    }
}

impl Hasher {
    pub fn new(poseidon: Arc<PoseidonParams>, tags: DomainTags) -> Self {
        Self { poseidon, tags }
    }

    pub fn poseidon(&self) -> &PoseidonParams {
        &self.poseidon
    }

    pub fn tags(&self) -> &DomainTags {
        &self.tags
    }

    fn tag_fr(&self, tag: DomainTag) -> Fr {
        Fr::from(self.tags.value(tag))
    }

    pub fn hash2(&self, tag: DomainTag, a: FieldElement, b: FieldElement) -> FieldElement {
        let mut state = [self.tag_fr(tag), a.0, b.0];
        self.poseidon.permute(&mut state);
        FieldElement(state[1])
    }

    /// Pseudonym of identity `x` in the realm with seed `s`.
    pub fn prf(&self, x: FieldElement, s: FieldElement) -> FieldElement {
        self.hash2(DomainTag::Pseudonym, x, s)
    }

    /// Hash of an identity, the message the identity provider signs.
    pub fn credential_hash(&self, x: FieldElement) -> FieldElement {
        self.hash2(DomainTag::Credential, x, FieldElement::ZERO)
    }

    pub fn hash2_var(
        &self,
        tag: DomainTag,
        a: &FpVar<Fr>,
        b: &FpVar<Fr>,
    ) -> Result<FpVar<Fr>, SynthesisError> {
        let mut state = [FpVar::Constant(self.tag_fr(tag)), a.clone(), b.clone()];
        self.poseidon.permute_var(&mut state)?;
        let [_, out, _] = state;
        Ok(out)
    }

    pub fn prf_var(&self, x: &FpVar<Fr>, s: &FpVar<Fr>) -> Result<FpVar<Fr>, SynthesisError> {
        self.hash2_var(DomainTag::Pseudonym, x, s)
    }

    pub fn credential_hash_var(&self, x: &FpVar<Fr>) -> Result<FpVar<Fr>, SynthesisError> {
        self.hash2_var(DomainTag::Credential, x, &FpVar::Constant(Fr::from(0u64)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ark_r1cs_std::{alloc::AllocVar, R1CSVar};
    use ark_relations::r1cs::ConstraintSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    // Pinned outputs. These must never change between releases: pseudonyms
    // and stored accumulators depend on them.
    const GOLDEN_LEAF_1_2: &str = "ec6de5d4abed478f56beb54367fb921318a6244bd378073752068ee3c6ac0639";
    const GOLDEN_PRF_3_4: &str = "98d044650123874d8838d1b96ee37db466b06fd3523c2b9234e0466a4d7a5a1a";

    #[test]
    fn golden_vectors() {
        let h = Hasher::default();
        let leaf = h.hash2(DomainTag::Leaf, FieldElement::from_u64(1), FieldElement::from_u64(2));
        let prf = h.prf(FieldElement::from_u64(3), FieldElement::from_u64(4));
        assert_eq!(leaf.to_hex(), GOLDEN_LEAF_1_2);
        assert_eq!(prf.to_hex(), GOLDEN_PRF_3_4);
    }

    #[test]
    fn deterministic_and_domain_separated() {
        let h = Hasher::default();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a = FieldElement::random(&mut rng);
        let b = FieldElement::random(&mut rng);
        assert_eq!(h.hash2(DomainTag::Leaf, a, b), h.hash2(DomainTag::Leaf, a, b));
        let outputs: HashSet<FieldElement> =
            DomainTag::ALL.iter().map(|t| h.hash2(*t, a, b)).collect();
        assert_eq!(outputs.len(), DomainTag::ALL.len());
        assert!(DomainTags::default().pairwise_distinct());
        let clash = DomainTags { node: 3, ..DomainTags::default() };
        assert!(!clash.pairwise_distinct());
    }

    #[test]
    fn prf_collision_free_on_samples() {
        let h = Hasher::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x = FieldElement::random(&mut rng);
        let s = FieldElement::random(&mut rng);
        let mut by_seed = HashSet::new();
        let mut by_identity = HashSet::new();
        for _ in 0..10_000 {
            assert!(by_seed.insert(h.prf(x, FieldElement::random(&mut rng))));
            assert!(by_identity.insert(h.prf(FieldElement::random(&mut rng), s)));
        }
        assert_eq!(h.prf(x, s), h.prf(x, s));
    }

    #[test]
    fn constraint_evaluation_matches_native() {
        let h = Hasher::default();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cs = ConstraintSystem::<Fr>::new_ref();
        for i in 0..100 {
            let a = FieldElement::random(&mut rng);
            let b = FieldElement::random(&mut rng);
            let tag = DomainTag::ALL[i % DomainTag::ALL.len()];
            let av = FpVar::new_witness(cs.clone(), || Ok(a.0)).unwrap();
            let bv = FpVar::new_witness(cs.clone(), || Ok(b.0)).unwrap();
            let out = h.hash2_var(tag, &av, &bv).unwrap();
            assert_eq!(FieldElement(out.value().unwrap()), h.hash2(tag, a, b));
        }
        assert!(cs.is_satisfied().unwrap());
    }
}
