//! The twisted Edwards curve embedded in the BLS12-381 scalar field
//! (JubJub), used for identity-provider and maintainer signatures.
//!
//! Coordinates live in BLS12-381 `Fr`, so points are cheap to handle inside
//! a constraint system over the same field.

use ark_bls12_381::Fr as Fq;
use ark_ec::{
    models::CurveConfig,
    twisted_edwards::{Affine, MontCurveConfig, Projective, TECurveConfig},
};
use ark_ff::{Fp256, MontBackend, MontFp};
use ark_r1cs_std::{fields::fp::FpVar, groups::curves::twisted_edwards::AffineVar};

mod fr {
    // The derive emits an `asm` feature gate this crate does not declare.
    #![allow(unexpected_cfgs)]
    use ark_ff::MontConfig;

    #[derive(MontConfig)]
    #[modulus = "6554484396890773809930967563523245729705921265872317281365359162392183254199"]
    #[generator = "6"]
    pub struct FrConfig;
}
pub use fr::FrConfig;

/// Scalar field of the prime-order subgroup.
pub type Fr = Fp256<MontBackend<FrConfig, 4>>;

pub type EdwardsAffine = Affine<JubjubConfig>;
pub type EdwardsProjective = Projective<JubjubConfig>;
pub type EdwardsVar = AffineVar<JubjubConfig, FpVar<Fq>>;

#[derive(Clone, Default, PartialEq, Eq)]
pub struct JubjubConfig;

impl CurveConfig for JubjubConfig {
    type BaseField = Fq;
    type ScalarField = Fr;

    const COFACTOR: &'static [u64] = &[8];
    const COFACTOR_INV: Fr =
        MontFp!("819310549611346726241370945440405716213240158234039660170669895299022906775");
}

impl TECurveConfig for JubjubConfig {
    // a = -1
    const COEFF_A: Fq = MontFp!("-1");
    // d = -(10240/10241)
    const COEFF_D: Fq =
        MontFp!("19257038036680949359750312669786877991949435402254120286184196891950884077233");

    const GENERATOR: EdwardsAffine = EdwardsAffine::new_unchecked(
        MontFp!("8076246640662884909881801758704306714034609987455869804520522091855516602923"),
        MontFp!("13262374693698910701929044844600465831413122818447359594527400194675274060458"),
    );

    type MontCurveConfig = JubjubConfig;

    #[inline(always)]
    fn mul_by_a(elem: Fq) -> Fq {
        -elem
    }
}

impl MontCurveConfig for JubjubConfig {
    const COEFF_A: Fq = MontFp!("40962");
    const COEFF_B: Fq = MontFp!("-40964");

    type TECurveConfig = JubjubConfig;
}
