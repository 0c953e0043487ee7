//! Measurement harness: fixtures for multi-realm authentication, a
//! median-of-N timer, least-squares fits and the CSV report.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use fab_core::accumulator::{FieldTree, FieldTreeHasher, Interval, TreeHasher};
use fab_core::backend::{BackendKind, KeyMode};
use fab_core::credential::{ip_init, register, Credential, IdentityProvider};
use fab_core::field::FieldElement;
use fab_core::params::SystemParams;
use fab_core::realm::{
    auth_with, setup_system, verify, AuthBundle, ProofMode, RealmId, RealmSnapshot, SystemKeys,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "backend,d,R,op,median_ms,proof_bytes";

/// Median wall time in milliseconds of `iters` runs after `warmup` runs.
pub fn median_ms<T>(warmup: usize, iters: usize, mut f: impl FnMut() -> T) -> f64 {
    for _ in 0..warmup {
        std::hint::black_box(f());
    }
    let mut samples: Vec<f64> = (0..iters.max(1))
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(&mut samples)
}

/// Per-case median wall time of `n` cases measured round-robin: every
/// iteration runs each case once, so slow drift in machine speed hits all
/// cases alike instead of whichever ran last.
pub fn interleaved_median_ms(warmup: usize, iters: usize, n: usize, mut f: impl FnMut(usize)) -> Vec<f64> {
    for _ in 0..warmup {
        (0..n).for_each(&mut f);
    }
    let mut samples = vec![Vec::with_capacity(iters); n];
    for _ in 0..iters.max(1) {
        for (i, s) in samples.iter_mut().enumerate() {
            let t = Instant::now();
            f(i);
            s.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    samples.iter_mut().map(|s| median(s)).collect()
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Fit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Fit { slope, intercept, r2 }
}

/// A blocklist tree of depth `params.depth()` holding `count` random
/// pseudonyms, built in one pass rather than by repeated insertion.
pub fn filled_tree(params: &SystemParams, count: u64, rng: &mut ChaCha20Rng) -> FieldTree {
    let capacity = params.capacity();
    assert!(count < capacity, "a tree of capacity {capacity} holds at most {} blocked", capacity - 1);
    let mut blocked = std::collections::BTreeSet::new();
    while (blocked.len() as u64) < count {
        blocked.insert(FieldElement::random(rng));
    }
    let hasher = FieldTreeHasher::new(params.hasher().clone());
    let mut intervals = Vec::with_capacity(blocked.len() + 1);
    let mut cursor = hasher.domain_start();
    for &x in &blocked {
        if cursor < x {
            intervals.push(Interval { a: cursor, b: x });
        }
        cursor = hasher.successor(x);
    }
    if cursor < hasher.domain_end() {
        intervals.push(Interval { a: cursor, b: hasher.domain_end() });
    }
    FieldTree::from_parts(hasher, params.depth(), intervals.into_iter().enumerate().map(|(i, iv)| (i as u64, iv)), blocked)
        .expect("intervals partition the domain")
}

/// System keys, an identity provider and a deterministic rng for one depth.
pub struct System {
    pub params: SystemParams,
    pub keys: SystemKeys,
    pub ip: IdentityProvider,
    pub rng: ChaCha20Rng,
}

impl System {
    pub fn new(backend: BackendKind, depth: u32, seed: u64) -> Self {
        let params = SystemParams::new(depth).expect("valid depth");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = setup_system(&params, backend, KeyMode::Production, &mut rng).expect("setup");
        let ip = IdentityProvider::new(ip_init(&mut rng), params.hasher().clone());
        Self { params, keys, ip, rng }
    }

    pub fn user(&mut self) -> Credential {
        let x = FieldElement::random(&mut self.rng);
        register(self.params.hasher(), x, &self.ip, &mut self.rng).expect("registration")
    }

    /// A target realm trusting `r` others, every tree holding `blocked`
    /// random pseudonyms.
    pub fn federation(&mut self, r: usize, blocked: u64) -> Federation {
        let snap = |id: String, trusted: Vec<RealmId>, rng: &mut ChaCha20Rng| {
            let tree = if blocked == 0 { FieldTree::create(&self.params) } else { filled_tree(&self.params, blocked, rng) };
            RealmSnapshot {
                id,
                seed: FieldElement::random(rng),
                epoch: 0,
                trusted,
                root: tree.root(),
                tree: Some(Arc::new(tree)),
            }
        };
        let ids: Vec<RealmId> = (0..r).map(|i| format!("t{i:02}")).collect();
        let trusted = ids.iter().map(|id| snap(id.clone(), vec![], &mut self.rng)).collect();
        let target = snap("target".into(), ids, &mut self.rng);
        Federation { target, trusted }
    }

    pub fn auth(&mut self, cred: &Credential, fed: &Federation, mode: ProofMode) -> AuthBundle {
        let pk = self.ip.pk();
        auth_with(&self.params, self.keys.prover(), cred, &pk, &fed.target, &fed.trusted, mode, &mut self.rng)
            .expect("honest auth")
    }

    pub fn verify(&self, bundle: &AuthBundle, fed: &Federation) -> bool {
        verify(&self.params, &self.keys.verifier(), &self.ip.pk(), bundle, &fed.target, &fed.verifier_view()).is_ok()
    }
}

pub struct Federation {
    pub target: RealmSnapshot,
    pub trusted: Vec<RealmSnapshot>,
}

impl Federation {
    pub fn verifier_view(&self) -> BTreeMap<RealmId, RealmSnapshot> {
        self.trusted.iter().map(|s| (s.id.clone(), s.without_tree())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub backend: BackendKind,
    pub d: u32,
    #[serde(rename = "R")]
    pub r: usize,
    pub op: String,
    pub median_ms: f64,
    pub proof_bytes: usize,
}

impl Row {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{:.3},{}", self.backend, self.d, self.r, self.op, self.median_ms, self.proof_bytes)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    pub backend: BackendKind,
    pub depths: Vec<u32>,
    pub realm_counts: Vec<usize>,
    /// Blocklist fill levels (fraction of capacity) for the fill sweep; empty
    /// skips it.
    pub fills: Vec<f64>,
    /// Depth used by the fill sweep.
    pub fill_depth: u32,
    pub warmup: usize,
    pub iters: usize,
    /// Also measure with block proofs spread over all cores.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Groth16,
            depths: vec![10, 14, 20],
            realm_counts: vec![1, 5, 10, 20],
            fills: vec![0.0, 0.5, 0.9],
            fill_depth: 14,
            warmup: 2,
            iters: 10,
            parallel: false,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitRow {
    pub backend: BackendKind,
    pub d: u32,
    pub op: String,
    /// Milliseconds per trusted realm.
    pub slope_ms: f64,
    pub intercept_ms: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub git_revision: String,
    /// Params digest per depth.
    pub params_digests: BTreeMap<u32, String>,
    pub config: BenchConfig,
    pub rows: Vec<Row>,
    pub fits: Vec<FitRow>,
}

impl Report {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }

    pub fn rows_for(&self, d: u32, op: &str) -> Vec<&Row> {
        self.rows.iter().filter(|r| r.d == d && r.op == op).collect()
    }
}

pub fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Runs `f` on a dedicated single-thread pool so proving does not fan out.
pub fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Auth time, verify time, per-block-proof verify time and proof size for
/// every (d, R), plus the fill sweep. `progress` receives each row as it is
/// measured.
pub fn run(config: &BenchConfig, mut progress: impl FnMut(&Row)) -> Report {
    let mut rows = Vec::new();
    let mut digests = BTreeMap::new();
    let mut push = |row: Row, rows: &mut Vec<Row>| {
        progress(&row);
        rows.push(row);
    };
    for &d in &config.depths {
        let mut sys = System::new(config.backend, d, config.seed);
        digests.insert(d, sys.params.digest().to_string());
        let cred = sys.user();
        let feds: Vec<Federation> = config.realm_counts.iter().map(|&r| sys.federation(r, 0)).collect();
        let bundles: Vec<AuthBundle> = feds.iter().map(|f| sys.auth(&cred, f, ProofMode::Sequential)).collect();
        for (b, f) in bundles.iter().zip(&feds) {
            assert!(sys.verify(b, f), "honest bundle rejected");
        }
        let auth_ms = single_threaded(|| {
            interleaved_median_ms(config.warmup, config.iters, feds.len(), |i| {
                std::hint::black_box(sys.auth(&cred, &feds[i], ProofMode::Sequential));
            })
        });
        for (i, &r) in config.realm_counts.iter().enumerate() {
            let (fed, bundle) = (&feds[i], &bundles[i]);
            let bytes = bundle.proof_bytes();
            push(row(config.backend, d, r, "auth", auth_ms[i], bytes), &mut rows);
            if config.parallel {
                let ms = median_ms(config.warmup, config.iters, || sys.auth(&cred, fed, ProofMode::Parallel));
                push(row(config.backend, d, r, "auth_parallel", ms, bytes), &mut rows);
            }
            let verify_ms =
                single_threaded(|| median_ms(config.warmup, config.iters, || sys.verify(bundle, fed)));
            push(row(config.backend, d, r, "verify", verify_ms, bytes), &mut rows);

            let block_bytes = bundle.pi_block[0].proof.size();
            let per_block = single_threaded(|| block_verify_ms(&sys, bundle, fed, config));
            push(row(config.backend, d, r, "verify_block", per_block, block_bytes), &mut rows);
        }
    }

    if !config.fills.is_empty() {
        let d = config.fill_depth;
        let mut sys = System::new(config.backend, d, config.seed);
        digests.insert(d, sys.params.digest().to_string());
        let cred = sys.user();
        let feds: Vec<Federation> = config
            .fills
            .iter()
            .map(|&fill| {
                let blocked = ((sys.params.capacity() as f64 * fill) as u64).min(sys.params.capacity() - 1);
                sys.federation(1, blocked)
            })
            .collect();
        let bytes: Vec<usize> = feds.iter().map(|f| sys.auth(&cred, f, ProofMode::Sequential).proof_bytes()).collect();
        let ms = single_threaded(|| {
            interleaved_median_ms(config.warmup, config.iters, feds.len(), |i| {
                std::hint::black_box(sys.auth(&cred, &feds[i], ProofMode::Sequential));
            })
        });
        for (i, &fill) in config.fills.iter().enumerate() {
            push(row(config.backend, d, 1, &fill_op(fill), ms[i], bytes[i]), &mut rows);
        }
    }

    let mut fits = Vec::new();
    for &d in &config.depths {
        for op in ["auth", "verify"] {
            let pts: Vec<&Row> = rows.iter().filter(|r| r.d == d && r.op == op).collect();
            if pts.len() >= 2 {
                let xs: Vec<f64> = pts.iter().map(|r| r.r as f64).collect();
                let ys: Vec<f64> = pts.iter().map(|r| r.median_ms).collect();
                let fit = linear_fit(&xs, &ys);
                fits.push(FitRow {
                    backend: config.backend,
                    d,
                    op: op.into(),
                    slope_ms: fit.slope,
                    intercept_ms: fit.intercept,
                    r2: fit.r2,
                });
            }
        }
    }
    Report { git_revision: git_revision(), params_digests: digests, config: config.clone(), rows, fits }
}

pub fn fill_op(fill: f64) -> String {
    format!("auth_fill{:.0}", fill * 100.0)
}

fn row(backend: BackendKind, d: u32, r: usize, op: &str, median_ms: f64, proof_bytes: usize) -> Row {
    Row { backend, d, r, op: op.into(), median_ms, proof_bytes }
}

/// Median time to verify one block proof of `bundle`, over all of them.
fn block_verify_ms(sys: &System, bundle: &AuthBundle, fed: &Federation, config: &BenchConfig) -> f64 {
    use fab_core::backend::{verify as verify_proof, BlockRelation};
    use fab_core::relations::BlockStatement;
    let vk = &sys.keys.block.vk;
    let mut samples = Vec::new();
    for (entry, state) in bundle.pi_block.iter().zip(&fed.trusted) {
        let stmt = BlockStatement { ps_r: bundle.ps_r, s_r: fed.target.seed, s_t: state.seed, acc_t: state.root };
        samples.push(median_ms(config.warmup, config.iters, || {
            assert!(verify_proof::<BlockRelation>(&sys.params, vk, &stmt, &entry.proof));
        }));
    }
    median(&mut samples)
}
