use serde::{Deserialize, Serialize};

use super::{
    AccumulatorError, ComplementaryMerkleTree, Interval, NonMembershipWitness, TreeHasher,
};
use crate::field::FieldElement;
use crate::hash::{DomainTag, Hasher};
use crate::params::SystemParams;

/// Poseidon-backed hasher over the scalar field. The authenticatable
/// domain is `[0, p - 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldTreeHasher {
    hasher: Hasher,
}

impl FieldTreeHasher {
    pub fn new(hasher: Hasher) -> Self {
        Self { hasher }
    }

    pub fn inner(&self) -> &Hasher {
        &self.hasher
    }
}

impl TreeHasher for FieldTreeHasher {
    type Elem = FieldElement;
    type Digest = FieldElement;

    fn domain_start(&self) -> FieldElement {
        FieldElement::ZERO
    }

    fn domain_end(&self) -> FieldElement {
        FieldElement::max_value()
    }

    fn successor(&self, e: FieldElement) -> FieldElement {
        e.successor()
    }

    fn leaf(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.hasher.hash2(DomainTag::Leaf, a, b)
    }

    fn node(&self, left: FieldElement, right: FieldElement) -> FieldElement {
        self.hasher.hash2(DomainTag::Node, left, right)
    }

    fn empty_leaf(&self) -> FieldElement {
        FieldElement::ZERO
    }
}

pub type FieldTree = ComplementaryMerkleTree<FieldTreeHasher>;
pub type FieldWitness = NonMembershipWitness<FieldElement, FieldElement>;

impl FieldTree {
    pub fn create(params: &SystemParams) -> Self {
        Self::new(FieldTreeHasher::new(params.hasher().clone()), params.depth())
    }

    pub fn to_serialized(&self, params: &SystemParams) -> SerializedFieldTree {
        SerializedFieldTree {
            params_digest: params.digest().to_string(),
            depth: self.depth(),
            slots: self.slots().map(|(i, iv)| (i, iv.a, iv.b)).collect(),
            blocked: self.blocked().iter().copied().collect(),
        }
    }

    pub fn from_serialized(
        params: &SystemParams,
        ser: &SerializedFieldTree,
    ) -> Result<Self, AccumulatorError> {
        if ser.params_digest != params.digest() {
            return Err(AccumulatorError::Inconsistent("params digest mismatch".into()));
        }
        if ser.depth != params.depth() {
            return Err(AccumulatorError::Inconsistent("depth mismatch".into()));
        }
        Self::from_parts(
            FieldTreeHasher::new(params.hasher().clone()),
            ser.depth,
            ser.slots.iter().map(|(i, a, b)| (*i, Interval { a: *a, b: *b })),
            ser.blocked.iter().copied(),
        )
    }
}

/// Wire form of a field tree: occupied slots in slot order plus the blocked list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedFieldTree {
    pub params_digest: String,
    pub depth: u32,
    pub slots: Vec<(u64, FieldElement, FieldElement)>,
    pub blocked: Vec<FieldElement>,
}

/// Wire form of a witness; the direction bits are redundant with the leaf
/// index and are checked against it on decode.
#[derive(Serialize, Deserialize)]
struct WitnessWire {
    a: FieldElement,
    b: FieldElement,
    leaf_index: u64,
    path: Vec<FieldElement>,
    directions: Vec<bool>,
}

impl Serialize for FieldWitness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        WitnessWire {
            a: self.a,
            b: self.b,
            leaf_index: self.leaf_index,
            path: self.path.clone(),
            directions: self.directions(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldWitness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = WitnessWire::deserialize(d)?;
        let witness = NonMembershipWitness {
            a: wire.a,
            b: wire.b,
            leaf_index: wire.leaf_index,
            path: wire.path,
        };
        if witness.path.len() >= 64 || witness.directions() != wire.directions {
            return Err(serde::de::Error::custom("direction bits disagree with leaf index"));
        }
        Ok(witness)
    }
}
