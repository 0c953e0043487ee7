use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::credential::{ip_init, register, Credential, IdentityProvider};

const DEPTH: u32 = 6;

struct Net {
    params: SystemParams,
    keys: SystemKeys,
    ip: IdentityProvider,
    realms: BTreeMap<RealmId, RealmState>,
    rng: ChaCha20Rng,
}

impl Net {
    fn new(seed: u64, backend: BackendKind) -> Self {
        Self::with_depth(seed, backend, DEPTH)
    }

    fn with_depth(seed: u64, backend: BackendKind, depth: u32) -> Self {
        let params = SystemParams::new(depth).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = setup_system(&params, backend, KeyMode::WithTrapdoor, &mut rng).unwrap();
        let ip = IdentityProvider::new(ip_init(&mut rng), params.hasher().clone());
        Self { params, keys, ip, realms: BTreeMap::new(), rng }
    }

    fn realm(&mut self, id: &str) {
        let r = RealmState::create(&self.params, id, &mut self.rng);
        self.realms.insert(id.to_string(), r);
    }

    fn user(&mut self) -> Credential {
        let x = FieldElement::random(&mut self.rng);
        register(self.params.hasher(), x, &self.ip, &mut self.rng).unwrap()
    }

    fn ps(&self, cred: &Credential, realm: &str) -> FieldElement {
        self.params.hasher().prf(cred.x, self.realms[realm].seed())
    }

    fn trust(&mut self, a: &str, b: &str) {
        let known: Vec<RealmId> = self.realms.keys().cloned().collect();
        self.realms.get_mut(a).unwrap().trust(b, |id| known.iter().any(|k| k == id)).unwrap();
    }

    fn states(&self, target: &str) -> (RealmSnapshot, Vec<RealmSnapshot>) {
        let t = self.realms[target].snapshot();
        let trusted = t.trusted.iter().map(|id| self.realms[id].snapshot()).collect();
        (t, trusted)
    }

    fn auth(&mut self, cred: &Credential, target: &str) -> Result<AuthBundle, AuthError> {
        let (t, trusted) = self.states(target);
        let pk = self.ip.pk();
        auth(&self.params, self.keys.prover(), cred, &pk, &t, &trusted, &mut self.rng)
    }

    fn verify(&self, bundle: &AuthBundle, target: &str) -> Result<(), Rejection> {
        let (t, trusted) = self.states(target);
        let fetched = trusted.into_iter().map(|s| (s.id.clone(), s.without_tree())).collect();
        verify(&self.params, &self.keys.verifier(), &self.ip.pk(), bundle, &t.without_tree(), &fetched)
    }

    fn round_trip(&mut self, cred: &Credential, target: &str) -> Result<(), String> {
        let b = self.auth(cred, target).map_err(|e| e.to_string())?;
        self.verify(&b, target).map_err(|e| e.to_string())
    }
}

#[test]
fn fresh_realms_accept_registered_users() {
    let mut n = Net::new(1, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    assert_ne!(n.realms["a"].seed(), n.realms["b"].seed());
    assert_eq!(n.realms["a"].epoch(), 0);
    let u = n.user();
    let b = n.auth(&u, "a").unwrap();
    assert!(b.pi_block.is_empty());
    assert_eq!(n.verify(&b, "a"), Ok(()));
}

#[test]
fn block_then_unblock_in_target() {
    let mut n = Net::new(2, BackendKind::Reference);
    n.realm("a");
    let u = n.user();
    let stale = n.auth(&u, "a").unwrap();
    let ps = n.ps(&u, "a");
    n.realms.get_mut("a").unwrap().block(ps).unwrap();
    assert_eq!(n.realms["a"].epoch(), 1);
    assert_eq!(n.auth(&u, "a"), Err(AuthError::Blocked("a".into())));
    assert_eq!(n.verify(&stale, "a"), Err(Rejection::EpochMismatch("a".into())));
    // Relabelling the stale bundle with the new epoch does not help.
    let relabelled = AuthBundle { target_epoch: 1, ..stale };
    assert_eq!(n.verify(&relabelled, "a"), Err(Rejection::TargetNonMembership));

    n.realms.get_mut("a").unwrap().unblock(ps).unwrap();
    assert_eq!(n.realms["a"].epoch(), 2);
    assert_eq!(n.round_trip(&u, "a"), Ok(()));
    assert!(matches!(
        n.realms.get_mut("a").unwrap().unblock(ps),
        Err(RealmError::Accumulator(AccumulatorError::NotBlocked))
    ));
}

#[test]
fn trust_enforces_blocklists_directly_but_not_transitively() {
    let mut n = Net::new(3, BackendKind::Reference);
    for id in ["a", "b", "c"] {
        n.realm(id);
    }
    n.trust("a", "b");
    n.trust("b", "c");
    let spammer = n.user();
    let honest = n.user();

    let ps_b = n.ps(&spammer, "b");
    n.realms.get_mut("b").unwrap().block(ps_b).unwrap();
    assert_eq!(n.auth(&spammer, "a"), Err(AuthError::Blocked("b".into())));
    assert_eq!(n.round_trip(&honest, "a"), Ok(()));

    // Blocked only in c, which a does not trust directly.
    let other = n.user();
    let ps_c = n.ps(&other, "c");
    n.realms.get_mut("c").unwrap().block(ps_c).unwrap();
    assert_eq!(n.round_trip(&other, "a"), Ok(()));
    assert_eq!(n.auth(&other, "b"), Err(AuthError::Blocked("c".into())));

    n.realms.get_mut("a").unwrap().untrust("b").unwrap();
    assert_eq!(n.round_trip(&spammer, "a"), Ok(()));
}

#[test]
fn stale_bundle_after_trusted_block_then_blocked_on_retry() {
    let mut n = Net::new(4, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    n.trust("a", "b");
    let u = n.user();
    let bundle = n.auth(&u, "a").unwrap();
    assert_eq!(n.verify(&bundle, "a"), Ok(()));
    let ps = n.ps(&u, "b");
    n.realms.get_mut("b").unwrap().block(ps).unwrap();
    assert_eq!(n.verify(&bundle, "a"), Err(Rejection::EpochMismatch("b".into())));
    assert_eq!(n.auth(&u, "a"), Err(AuthError::Blocked("b".into())));
}

#[test]
fn five_trusted_realms() {
    let mut n = Net::new(5, BackendKind::Reference);
    n.realm("t");
    for i in 0..5 {
        let id = format!("r{i}");
        n.realm(&id);
        n.trust("t", &id);
    }
    let u = n.user();
    let b = n.auth(&u, "t").unwrap();
    assert_eq!(b.pi_block.len(), 5);
    let order: Vec<_> = b.pi_block.iter().map(|e| e.realm.clone()).collect();
    assert_eq!(order, n.realms["t"].snapshot().trusted);
    assert_eq!(n.verify(&b, "t"), Ok(()));

    let mut shuffled = b.clone();
    shuffled.pi_block.swap(0, 1);
    assert_eq!(n.verify(&shuffled, "t"), Err(Rejection::TrustedListMismatch));
    let mut dropped = b.clone();
    dropped.pi_block.pop();
    assert_eq!(n.verify(&dropped, "t"), Err(Rejection::TrustedListMismatch));
}

#[test]
fn replay_to_another_realm_is_rejected() {
    let mut n = Net::new(6, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    let u = n.user();
    let b = n.auth(&u, "a").unwrap();
    assert_eq!(n.verify(&b, "b"), Err(Rejection::WrongTarget("a".into())));
    // Readdressed bundle: the auth statement binds the seed of "a".
    let readdressed = AuthBundle { target: "b".into(), ..b };
    let r = n.verify(&readdressed, "b");
    assert!(matches!(r, Err(Rejection::TargetNonMembership | Rejection::AuthProof)), "{r:?}");
}

#[test]
fn unreachable_trusted_realm_fails_closed() {
    let mut n = Net::new(7, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    n.trust("a", "b");
    let u = n.user();
    let b = n.auth(&u, "a").unwrap();
    let t = n.realms["a"].snapshot().without_tree();
    let r = verify(&n.params, &n.keys.verifier(), &n.ip.pk(), &b, &t, &BTreeMap::new());
    assert_eq!(r, Err(Rejection::UnreachableRealm("b".into())));
}

#[test]
fn mismatched_depth_is_rejected() {
    let mut small = Net::with_depth(8, BackendKind::Reference, 4);
    small.realm("a");
    let u = small.user();
    let bundle = small.auth(&u, "a").unwrap();
    let mut big = Net::with_depth(9, BackendKind::Reference, 8);
    let t = small.realms["a"].snapshot().without_tree();
    let r = verify(&big.params, &big.keys.verifier(), &small.ip.pk(), &bundle, &t, &BTreeMap::new());
    assert_eq!(r, Err(Rejection::ParamsMismatch));
    // Same params digest but keys for another depth.
    let mut relabelled = bundle.clone();
    relabelled.params_digest = big.params.digest().to_string();
    let r = verify(&big.params, &big.keys.verifier(), &small.ip.pk(), &relabelled, &t, &BTreeMap::new());
    assert_eq!(r, Err(Rejection::DepthMismatch));
    let r = verify(&small.params, &big.keys.verifier(), &small.ip.pk(), &bundle, &t, &BTreeMap::new());
    assert_eq!(r, Err(Rejection::DepthMismatch));
    // A realm built at another depth cannot be proven against.
    big.realms.insert("a".into(), small.realms["a"].clone());
    let cred = big.user();
    assert_eq!(big.auth(&cred, "a"), Err(AuthError::DepthMismatch("a".into())));
}

#[test]
fn trust_set_errors_and_epochs() {
    let mut n = Net::new(10, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    let a = n.realms.get_mut("a").unwrap();
    assert_eq!(a.trust("a", |_| true), Err(RealmError::SelfTrust));
    assert_eq!(a.trust("zz", |_| false), Err(RealmError::UnknownRealm("zz".into())));
    a.trust("b", |_| true).unwrap();
    assert_eq!(a.epoch(), 1);
    assert_eq!(a.trust("b", |_| true), Err(RealmError::DuplicateTrust("b".into())));
    assert_eq!(a.untrust("c"), Err(RealmError::NotTrusted("c".into())));
    a.untrust("b").unwrap();
    assert_eq!(a.epoch(), 2);
    let seed = a.seed();
    let ps = FieldElement::from_u64(77);
    a.block(ps).unwrap();
    assert_eq!(a.block(ps), Err(RealmError::Accumulator(AccumulatorError::AlreadyBlocked)));
    assert_eq!(a.epoch(), 3);
    assert_eq!(a.seed(), seed);
}

#[test]
fn random_blocks_of_others_never_frame_an_honest_user() {
    let mut n = Net::new(11, BackendKind::Reference);
    let ids: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
    for id in &ids {
        n.realm(id);
    }
    n.trust("r0", "r1");
    n.trust("r0", "r2");
    let honest = n.user();
    let own: Vec<FieldElement> = ids.iter().map(|id| n.ps(&honest, id)).collect();
    for _ in 0..60 {
        let id = &ids[n.rng.gen_range(0..ids.len())];
        let victim = FieldElement::random(&mut n.rng);
        if !own.contains(&victim) {
            n.realms.get_mut(id).unwrap().block(victim).unwrap();
        }
    }
    assert_eq!(n.round_trip(&honest, "r0"), Ok(()));
}

#[test]
fn pseudonyms_are_stable_per_realm() {
    let mut n = Net::new(12, BackendKind::Reference);
    n.realm("a");
    n.realm("b");
    let u = n.user();
    let first = n.auth(&u, "a").unwrap();
    let second = n.auth(&u, "a").unwrap();
    assert_eq!(first.ps_r, second.ps_r);
    assert_ne!(first.ps_r, n.auth(&u, "b").unwrap().ps_r);
}

#[test]
fn groth16_round_trip_and_simulated_bundles() {
    let mut n = Net::with_depth(13, BackendKind::Groth16, 4);
    n.realm("a");
    n.realm("b");
    n.trust("a", "b");
    let u = n.user();
    let real = n.auth(&u, "a").unwrap();
    assert_eq!(n.verify(&real, "a"), Ok(()));
    assert_eq!(real.proof_bytes(), 2 * 192);

    let (t, trusted) = n.states("a");
    let pk = n.ip.pk();
    let sim = |seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        simulate_bundle(&n.params, &n.keys, &pk, real.ps_r, &t, &trusted, &mut rng).unwrap()
    };
    let s1 = sim(99);
    assert_eq!(s1, sim(99));
    assert_eq!(n.verify(&s1, "a"), Ok(()));
    assert_eq!((s1.ps_r, &s1.witness), (real.ps_r, &real.witness));

    let json = serde_json::to_string(&real).unwrap();
    assert_eq!(serde_json::from_str::<AuthBundle>(&json).unwrap(), real);
}

#[test]
fn sequential_and_parallel_proving_agree() {
    let mut n = Net::new(14, BackendKind::Reference);
    n.realm("t");
    for i in 0..3 {
        let id = format!("r{i}");
        n.realm(&id);
        n.trust("t", &id);
    }
    let u = n.user();
    let (t, trusted) = n.states("t");
    let pk = n.ip.pk();
    let mut r1 = ChaCha20Rng::seed_from_u64(5);
    let mut r2 = ChaCha20Rng::seed_from_u64(5);
    let a = auth_with(&n.params, n.keys.prover(), &u, &pk, &t, &trusted, ProofMode::Sequential, &mut r1);
    let b = auth_with(&n.params, n.keys.prover(), &u, &pk, &t, &trusted, ProofMode::Parallel, &mut r2);
    assert_eq!(a.unwrap(), b.unwrap());
}

#[test]
fn batch_updates_are_atomic_and_bump_once() {
    let mut net = Net::new(40, BackendKind::Reference);
    net.realm("a");
    net.realm("b");
    let known = |id: &str| id == "a" || id == "b";
    let a = net.realms.get_mut("a").unwrap();
    let (p, q) = (FieldElement::from_u64(3), FieldElement::from_u64(4));
    let applied = a
        .apply_batch(
            &[RealmOp::Block(p), RealmOp::Block(p), RealmOp::Trust("b".into()), RealmOp::Unblock(q)],
            known,
        )
        .unwrap();
    assert_eq!(applied, vec![true, false, true, false]);
    assert_eq!(a.epoch(), 1);

    let before = (a.root(), a.epoch(), a.trusted().clone());
    let err = a.apply_batch(&[RealmOp::Block(q), RealmOp::Trust("nowhere".into())], known);
    assert_eq!(err, Err(RealmError::UnknownRealm("nowhere".into())));
    assert_eq!((a.root(), a.epoch(), a.trusted().clone()), before);
    assert!(!a.accumulator().is_blocked(&q));

    assert_eq!(a.apply_batch(&[RealmOp::Untrust("c".into())], known).unwrap(), vec![false]);
    assert_eq!(a.epoch(), 1);
}
