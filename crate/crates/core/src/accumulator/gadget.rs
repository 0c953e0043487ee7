//! In-circuit verification of complementary-tree witnesses.

use ark_bls12_381::Fr;
use ark_r1cs_std::{
    alloc::AllocVar, boolean::Boolean, eq::EqGadget, fields::fp::FpVar, fields::FieldVar,
    convert::ToBitsGadget, select::CondSelectGadget,
};
use ark_relations::r1cs::{ConstraintSystemRef, SynthesisError};

use super::FieldWitness;
use crate::field::FieldElement;
use crate::hash::{DomainTag, Hasher};

/// Allocated witness wires: interval bounds, leaf-index bits (little-endian,
/// doubling as direction bits) and sibling digests.
pub struct WitnessVar {
    pub a: FpVar<Fr>,
    pub b: FpVar<Fr>,
    pub index_bits: Vec<Boolean<Fr>>,
    pub path: Vec<FpVar<Fr>>,
}

impl WitnessVar {
    /// Allocates witness wires for a tree of `depth`. With `None` the wires
    /// carry no assignment (key generation).
    pub fn alloc(
        cs: ConstraintSystemRef<Fr>,
        depth: u32,
        witness: Option<&FieldWitness>,
    ) -> Result<Self, SynthesisError> {
        if let Some(w) = witness {
            if w.path.len() != depth as usize || w.leaf_index >> depth != 0 {
                return Err(SynthesisError::Unsatisfiable);
            }
        }
        let value = |f: fn(&FieldWitness) -> FieldElement| {
            witness.map(|w| f(w).inner()).ok_or(SynthesisError::AssignmentMissing)
        };
        let a = FpVar::new_witness(cs.clone(), || value(|w| w.a))?;
        let b = FpVar::new_witness(cs.clone(), || value(|w| w.b))?;
        let index_bits = (0..depth)
            .map(|i| {
                Boolean::new_witness(cs.clone(), || {
                    witness
                        .map(|w| (w.leaf_index >> i) & 1 == 1)
                        .ok_or(SynthesisError::AssignmentMissing)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let path = (0..depth as usize)
            .map(|i| {
                FpVar::new_witness(cs.clone(), || {
                    witness
                        .map(|w| w.path[i].inner())
                        .ok_or(SynthesisError::AssignmentMissing)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { a, b, index_bits, path })
    }
}

/// `x < y` over little-endian bit decompositions of equal width.
///
/// Scans from the least significant bit, keeping
/// `lt <- (!x_i & y_i) | (x_i == y_i & lt)`, two constraints per bit.
pub fn less_than_bits(
    x: &[Boolean<Fr>],
    y: &[Boolean<Fr>],
) -> Result<FpVar<Fr>, SynthesisError> {
    assert_eq!(x.len(), y.len());
    let mut lt = FpVar::<Fr>::zero();
    for (xi, yi) in x.iter().zip(y) {
        let xf: FpVar<Fr> = xi.clone().into();
        let yf: FpVar<Fr> = yi.clone().into();
        let xy = &xf * &yf;
        let eq = FpVar::one() - &xf - &yf + xy.double()?;
        lt = &yf - &xy + eq * &lt;
    }
    Ok(lt)
}

/// Enforces `a <= x < b` and that the leaf `hash(a, b)` at the indexed
/// position authenticates to `root`.
pub fn enforce_non_membership(
    hasher: &Hasher,
    depth: u32,
    root: &FpVar<Fr>,
    x: &FpVar<Fr>,
    witness: &WitnessVar,
) -> Result<(), SynthesisError> {
    if witness.index_bits.len() != depth as usize || witness.path.len() != depth as usize {
        return Err(SynthesisError::Unsatisfiable);
    }
    // Canonical decompositions: `to_bits_le` enforces each value is < p.
    let x_bits = x.to_bits_le()?;
    let a_bits = witness.a.to_bits_le()?;
    let b_bits = witness.b.to_bits_le()?;
    less_than_bits(&x_bits, &a_bits)?.enforce_equal(&FpVar::zero())?;
    less_than_bits(&x_bits, &b_bits)?.enforce_equal(&FpVar::one())?;

    let mut current = hasher.hash2_var(DomainTag::Leaf, &witness.a, &witness.b)?;
    for (sibling, is_right) in witness.path.iter().zip(&witness.index_bits) {
        let left = FpVar::conditionally_select(is_right, sibling, &current)?;
        let right = FpVar::conditionally_select(is_right, &current, sibling)?;
        current = hasher.hash2_var(DomainTag::Node, &left, &right)?;
    }
    current.enforce_equal(root)
}
