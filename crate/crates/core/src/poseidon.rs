//! Width-3 Poseidon permutation over the BLS12-381 scalar field, evaluated
//! natively and as R1CS constraints.

use std::sync::{Arc, OnceLock};

use ark_bls12_381::Fr;
use ark_crypto_primitives::sponge::poseidon::find_poseidon_ark_and_mds;
use ark_ff::{Field, PrimeField};
use ark_r1cs_std::fields::{fp::FpVar, FieldVar};
use ark_relations::r1cs::SynthesisError;
use sha2::{Digest, Sha256};

pub const WIDTH: usize = 3;
pub const RATE: usize = 2;
pub const FULL_ROUNDS: usize = 8;
pub const PARTIAL_ROUNDS: usize = 57;
pub const ALPHA: u64 = 5;

/// Round constants and MDS matrix, generated with the Grain LFSR procedure
/// of the Poseidon reference implementation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoseidonParams {
    pub full_rounds: usize,
    pub partial_rounds: usize,
    pub alpha: u64,
    pub ark: Vec<[Fr; WIDTH]>,
    pub mds: [[Fr; WIDTH]; WIDTH],
}

impl PoseidonParams {
    pub fn generate(full_rounds: usize, partial_rounds: usize, alpha: u64) -> Self {
        let (ark, mds) = find_poseidon_ark_and_mds::<Fr>(
            Fr::MODULUS_BIT_SIZE as u64,
            RATE,
            full_rounds as u64,
            partial_rounds as u64,
            0,
        );
        let ark = ark
            .into_iter()
            .map(|row| [row[0], row[1], row[2]])
            .collect();
        let mds = [
            [mds[0][0], mds[0][1], mds[0][2]],
            [mds[1][0], mds[1][1], mds[1][2]],
            [mds[2][0], mds[2][1], mds[2][2]],
        ];
        Self { full_rounds, partial_rounds, alpha, ark, mds }
    }

    /// The shared default instance (8 full rounds, 57 partial rounds, x^5).
    pub fn default_shared() -> Arc<Self> {
        static DEFAULT: OnceLock<Arc<PoseidonParams>> = OnceLock::new();
        DEFAULT
            .get_or_init(|| Arc::new(Self::generate(FULL_ROUNDS, PARTIAL_ROUNDS, ALPHA)))
            .clone()
    }

    /// SHA-256 over the round parameters and every constant.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.full_rounds as u64).to_le_bytes());
        h.update((self.partial_rounds as u64).to_le_bytes());
        h.update(self.alpha.to_le_bytes());
        for row in self.ark.iter().chain(self.mds.iter()) {
            for c in row {
                h.update(crate::field::FieldElement::from(*c).to_bytes_le());
            }
        }
        h.finalize().into()
    }

    fn is_full_round(&self, round: usize) -> bool {
        let half = self.full_rounds / 2;
        round < half || round >= half + self.partial_rounds
    }

    fn rounds(&self) -> usize {
        self.full_rounds + self.partial_rounds
    }

    pub fn permute(&self, state: &mut [Fr; WIDTH]) {
        for round in 0..self.rounds() {
            for (s, c) in state.iter_mut().zip(self.ark[round].iter()) {
                *s += c;
            }
            if self.is_full_round(round) {
                for s in state.iter_mut() {
                    *s = s.pow([self.alpha]);
                }
            } else {
                state[0] = state[0].pow([self.alpha]);
            }
            *state = self.mix(state);
        }
    }

    fn mix(&self, state: &[Fr; WIDTH]) -> [Fr; WIDTH] {
        let mut out = [Fr::from(0u64); WIDTH];
        for (o, row) in out.iter_mut().zip(self.mds.iter()) {
            *o = row.iter().zip(state.iter()).map(|(m, s)| *m * s).sum();
        }
        out
    }

    pub fn permute_var(&self, state: &mut [FpVar<Fr>; WIDTH]) -> Result<(), SynthesisError> {
        for round in 0..self.rounds() {
            for (s, c) in state.iter_mut().zip(self.ark[round].iter()) {
                *s += *c;
            }
            if self.is_full_round(round) {
                for s in state.iter_mut() {
                    *s = self.sbox_var(s)?;
                }
            } else {
                state[0] = self.sbox_var(&state[0])?;
            }
            let mixed: Vec<FpVar<Fr>> = self
                .mds
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(state.iter())
                        .fold(FpVar::zero(), |acc, (m, s)| acc + s * *m)
                })
                .collect();
            for (s, m) in state.iter_mut().zip(mixed) {
                *s = m;
            }
        }
        Ok(())
    }

    fn sbox_var(&self, x: &FpVar<Fr>) -> Result<FpVar<Fr>, SynthesisError> {
        if self.alpha == 5 {
            let x2 = x.square()?;
            let x4 = x2.square()?;
            Ok(x4 * x)
        } else {
            x.pow_by_constant([self.alpha])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ark_crypto_primitives::sponge::poseidon::{PoseidonConfig, PoseidonSponge};
    use ark_crypto_primitives::sponge::{CryptographicSponge, FieldBasedCryptographicSponge};
    use ark_ff::UniformRand;
    use ark_r1cs_std::{alloc::AllocVar, R1CSVar};
    use ark_relations::r1cs::ConstraintSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    // The arkworks sponge is an independent implementation of the same
    // permutation: absorb two elements into the rate, squeeze one.
    fn sponge_oracle(params: &PoseidonParams, cap: Fr, a: Fr, b: Fr) -> Fr {
        let config = PoseidonConfig::new(
            params.full_rounds,
            params.partial_rounds,
            params.alpha,
            params.mds.iter().map(|r| r.to_vec()).collect(),
            params.ark.iter().map(|r| r.to_vec()).collect(),
            RATE,
            1,
        );
        let mut sponge = PoseidonSponge::new(&config);
        sponge.state[0] = cap;
        sponge.absorb(&vec![a, b]);
        sponge.squeeze_native_field_elements(1)[0]
    }

    #[test]
    fn permutation_matches_arkworks_sponge() {
        let params = PoseidonParams::default_shared();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (c, a, b) = (Fr::rand(&mut rng), Fr::rand(&mut rng), Fr::rand(&mut rng));
            let mut state = [c, a, b];
            params.permute(&mut state);
            assert_eq!(state[1], sponge_oracle(&params, c, a, b));
        }
    }

    #[test]
    fn gadget_matches_native() {
        let params = PoseidonParams::default_shared();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let cs = ConstraintSystem::<Fr>::new_ref();
        for _ in 0..5 {
            let native = [Fr::rand(&mut rng), Fr::rand(&mut rng), Fr::rand(&mut rng)];
            let mut vars = [
                FpVar::new_witness(cs.clone(), || Ok(native[0])).unwrap(),
                FpVar::new_witness(cs.clone(), || Ok(native[1])).unwrap(),
                FpVar::new_witness(cs.clone(), || Ok(native[2])).unwrap(),
            ];
            let mut expected = native;
            params.permute(&mut expected);
            params.permute_var(&mut vars).unwrap();
            for (v, e) in vars.iter().zip(expected.iter()) {
                assert_eq!(v.value().unwrap(), *e);
            }
        }
        assert!(cs.is_satisfied().unwrap());
    }

    #[test]
    fn constant_count_matches_round_count() {
        let params = PoseidonParams::default_shared();
        assert_eq!(params.ark.len(), FULL_ROUNDS + PARTIAL_ROUNDS);
    }
}
