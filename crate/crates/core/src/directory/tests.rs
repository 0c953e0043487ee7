use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;

const DEPTH: u32 = 6;

fn setup() -> (SystemParams, Arc<DirectoryStore>, ChaCha20Rng) {
    let params = SystemParams::new(DEPTH).unwrap();
    let store = Arc::new(DirectoryStore::in_memory(params.clone()));
    (params, store, ChaCha20Rng::seed_from_u64(11))
}

fn realm(params: &SystemParams, store: &DirectoryStore, id: &str, rng: &mut ChaCha20Rng) -> RealmState {
    let state = RealmState::create(params, id, rng);
    let rec = DirectoryRecord::from_state(params, &state, rng);
    store.register(rec, state.maintainer().verifying_key()).unwrap();
    state
}

#[test]
fn register_publish_fetch() {
    let (params, store, mut rng) = setup();
    let mut a = realm(&params, &store, "a", &mut rng);
    a.block(FieldElement::from_u64(5)).unwrap();
    let v = store.publish(DirectoryRecord::from_state(&params, &a, &mut rng)).unwrap();
    let (fv, rec) = store.fetch("a").unwrap();
    assert_eq!(fv, v);
    assert_eq!(rec.epoch, 1);
    let snap = rec.snapshot(&params, true).unwrap();
    assert_eq!(snap.root, a.root());
    assert!(snap.tree.unwrap().is_blocked(&FieldElement::from_u64(5)));

    let dup = DirectoryRecord::from_state(&params, &RealmState::create(&params, "a", &mut rng), &mut rng);
    assert_eq!(
        store.register(dup.clone(), a.maintainer().verifying_key()),
        Err(DirectoryError::AlreadyRegistered("a".into()))
    );
    assert_eq!(store.fetch("zz").unwrap_err(), DirectoryError::UnknownRealm("zz".into()));
}

#[test]
fn publish_rejections() {
    let (params, store, mut rng) = setup();
    let mut a = realm(&params, &store, "a", &mut rng);

    // Same epoch again.
    let stale = DirectoryRecord::from_state(&params, &a, &mut rng);
    assert_eq!(store.publish(stale), Err(DirectoryError::EpochRegression { stored: 0, got: 0 }));

    a.block(FieldElement::from_u64(1)).unwrap();
    a.block(FieldElement::from_u64(2)).unwrap();
    let skip = DirectoryRecord::from_state(&params, &a, &mut rng);
    assert_eq!(store.publish(skip), Err(DirectoryError::EpochGap { expected: 1, got: 2 }));

    // Signed by someone else.
    let mut imposter = RealmState::create(&params, "a", &mut rng);
    imposter.block(FieldElement::from_u64(9)).unwrap();
    let forged = DirectoryRecord::from_state(&params, &imposter, &mut rng);
    assert_eq!(store.publish(forged), Err(DirectoryError::BadSignature));

    // Valid signature, then a field edited afterwards.
    let mut b = RealmState::create(&params, "a", &mut rng);
    b.block(FieldElement::from_u64(3)).unwrap();
    let mut rec = DirectoryRecord::from_state(&params, &b, &mut rng);
    rec.signature = DirectoryRecord::from_state(&params, &a, &mut rng).signature;
    assert_eq!(store.publish(rec), Err(DirectoryError::BadSignature));

    let other = SystemParams::new(DEPTH + 1).unwrap();
    let wrong = DirectoryRecord::from_state(&other, &RealmState::create(&other, "q", &mut rng), &mut rng);
    assert_eq!(store.register(wrong, a.maintainer().verifying_key()), Err(DirectoryError::ParamsMismatch));
    assert_eq!(store.history("a").unwrap().len(), 1);
}

#[test]
fn trust_must_point_at_registered_realms() {
    let (params, store, mut rng) = setup();
    let b = realm(&params, &store, "b", &mut rng);
    let mut a = realm(&params, &store, "a", &mut rng);
    a.trust("ghost", |_| true).unwrap();
    let rec = DirectoryRecord::from_state(&params, &a, &mut rng);
    assert_eq!(store.publish(rec), Err(DirectoryError::DanglingTrust(vec!["ghost".into()])));

    let mut a = realm(&params, &store, "a2", &mut rng);
    a.trust("b", |id| store.fetch(id).is_ok()).unwrap();
    store.publish(DirectoryRecord::from_state(&params, &a, &mut rng)).unwrap();
    let (_, target, trusted) = store.fetch_closure("a2").unwrap();
    assert_eq!(target.trusted, vec!["b".to_string()]);
    assert_eq!(trusted[0].realm_id, "b");

    let sig = sign_deregistration(params.hasher(), a.maintainer(), "b", &mut rng);
    assert_eq!(store.deregister("b", &sig), Err(DirectoryError::BadSignature));
    let sig = sign_deregistration(params.hasher(), b.maintainer(), "b", &mut rng);
    store.deregister("b", &sig).unwrap();
    assert_eq!(store.fetch_closure("a2").unwrap_err(), DirectoryError::DanglingTrust(vec!["b".into()]));
    assert!(store.list().1.iter().all(|l| l.realm_id != "b"));
}

#[test]
fn concurrent_publish_has_one_winner() {
    let (params, store, mut rng) = setup();
    let base = realm(&params, &store, "a", &mut rng);
    let mut s = base.clone();
    for round in 1..=20u64 {
        let mut c1 = s.clone();
        let mut c2 = s.clone();
        c1.block(FieldElement::from_u64(2 * round)).unwrap();
        c2.block(FieldElement::from_u64(2 * round + 1)).unwrap();
        let r1 = DirectoryRecord::from_state(&params, &c1, &mut rng);
        let r2 = DirectoryRecord::from_state(&params, &c2, &mut rng);
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = [r1, r2]
            .into_iter()
            .map(|r| {
                let store = store.clone();
                let barrier = barrier.clone();
                thread::spawn(move || {
                    barrier.wait();
                    store.publish(r)
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let wins = results.iter().filter(|r| r.is_ok()).count();
        assert_eq!(wins, 1, "round {round}: {results:?}");
        let loser = results.iter().find(|r| r.is_err()).unwrap();
        assert_eq!(*loser, Err(DirectoryError::EpochRegression { stored: round, got: round }));
        let (_, stored) = store.fetch("a").unwrap();
        s = if stored.root == c1.root() { c1 } else { c2 };
    }
    let epochs: Vec<u64> = store.history("a").unwrap().iter().map(|h| h.epoch).collect();
    assert_eq!(epochs, (0..=20).collect::<Vec<_>>());
}

// A writer publishes a then b, epoch by epoch. Any single-version read sees
// a at the same epoch as b or one ahead; separate reads could see b ahead.
#[test]
fn closure_reads_are_snapshots() {
    let (params, store, mut rng) = setup();
    let mut b = realm(&params, &store, "b", &mut rng);
    let mut a = realm(&params, &store, "a", &mut rng);
    a.trust("b", |_| true).unwrap();
    b.block(FieldElement::from_u64(1)).unwrap();
    store.publish(DirectoryRecord::from_state(&params, &a, &mut rng)).unwrap();
    store.publish(DirectoryRecord::from_state(&params, &b, &mut rng)).unwrap();

    let rounds = 60u64;
    let records: Vec<_> = (0..rounds)
        .map(|i| {
            a.block(FieldElement::from_u64(100 + i)).unwrap();
            b.block(FieldElement::from_u64(200 + i)).unwrap();
            (
                DirectoryRecord::from_state(&params, &a, &mut rng),
                DirectoryRecord::from_state(&params, &b, &mut rng),
            )
        })
        .collect();

    let done = Arc::new(AtomicBool::new(false));
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let store = store.clone();
            let done = done.clone();
            thread::spawn(move || {
                let mut seen = 0;
                let mut last_version = 0;
                while !done.load(Ordering::Acquire) {
                    let (v, ta, tb) = store.fetch_closure("a").unwrap();
                    let (ea, eb) = (ta.epoch, tb[0].epoch);
                    assert!(ea == eb || ea == eb + 1, "torn read: a={ea} b={eb}");
                    assert!(v >= last_version);
                    last_version = v;
                    seen += 1;
                }
                seen
            })
        })
        .collect();
    for (ra, rb) in records {
        store.publish(ra).unwrap();
        store.publish(rb).unwrap();
    }
    done.store(true, Ordering::Release);
    for r in readers {
        assert!(r.join().unwrap() > 0);
    }
    assert_eq!(store.fetch("a").unwrap().1.epoch, rounds + 1);
}

#[test]
fn persistence_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = SystemParams::new(DEPTH).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (version, root) = {
        let store = DirectoryStore::open(params.clone(), dir.path()).unwrap();
        let mut a = realm(&params, &store, "a", &mut rng);
        for i in 0..5 {
            a.block(FieldElement::from_u64(i + 1)).unwrap();
            store.publish(DirectoryRecord::from_state(&params, &a, &mut rng)).unwrap();
        }
        realm(&params, &store, "b", &mut rng);
        (store.version(), a.root())
    };
    let store = DirectoryStore::open(params.clone(), dir.path()).unwrap();
    assert_eq!(store.version(), version);
    let (_, rec) = store.fetch("a").unwrap();
    assert_eq!((rec.epoch, rec.root), (5, root));
    assert_eq!(store.history("a").unwrap().len(), 6);
    assert_eq!(store.list().1.len(), 2);

    let other = SystemParams::new(DEPTH + 1).unwrap();
    assert!(matches!(DirectoryStore::open(other, dir.path()), Err(DirectoryError::ParamsMismatch)));
}

#[test]
fn tcp_and_in_process_agree() {
    let (params, store, mut rng) = setup();
    let addr = spawn_server(store.clone(), "127.0.0.1:0").unwrap();
    let counting = Arc::new(CountingTransport::new(TcpTransport::new(addr).unwrap()));
    let tcp = DirectoryClient::new(counting.clone());
    let local = DirectoryClient::in_process(store.clone());

    let mut a = RealmState::create(&params, "a", &mut rng);
    let b = RealmState::create(&params, "b", &mut rng);
    tcp.publish_state(&params, &a, &mut rng).unwrap();
    tcp.publish_state(&params, &b, &mut rng).unwrap();
    a.trust("b", |id| tcp.fetch(id).is_ok()).unwrap();
    tcp.publish_state(&params, &a, &mut rng).unwrap();
    a.block(FieldElement::from_u64(77)).unwrap();
    tcp.publish_state(&params, &a, &mut rng).unwrap();

    let over_tcp = tcp.fetch_closure("a").unwrap();
    assert_eq!(over_tcp, local.fetch_closure("a").unwrap());
    let (snap, trusted) = tcp.closure_snapshots(&params, "a", true).unwrap();
    assert_eq!(snap.root, a.root());
    assert_eq!(trusted[0].id, "b");
    assert_eq!(
        tcp.publish_state(&params, &a, &mut rng),
        Err(DirectoryError::EpochRegression { stored: 2, got: 2 })
    );
    assert_eq!(counting.count("PUBLISH"), 3);
    assert_eq!(counting.count("REGISTER"), 2);
    assert_eq!(counting.count("FETCH_CLOSURE"), 2);

    let keys_missing = tcp.get_keys().unwrap_err();
    assert_eq!(keys_missing, DirectoryError::KeysMissing);
}

#[test]
fn record_json_round_trip() {
    let (params, _, mut rng) = setup();
    let mut a = RealmState::create(&params, "a", &mut rng);
    a.block(FieldElement::from_u64(4)).unwrap();
    let rec = DirectoryRecord::from_state(&params, &a, &mut rng);
    let back: DirectoryRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(back, rec);
    assert!(back.signature_valid(params.hasher(), &a.maintainer().verifying_key()));

    let mut bad = rec.clone();
    bad.accumulator.slots[0].1 = bad.accumulator.slots[0].1.successor();
    assert!(!bad.signature_valid(params.hasher(), &a.maintainer().verifying_key()));
    assert!(bad.snapshot(&params, true).is_err());
}
