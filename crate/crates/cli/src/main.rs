use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fab_bench::BenchConfig;
use fab_core::backend::{BackendKind, KeyMode};
use fab_core::credential::{ip_init, ip_sign, register, CredentialFile, IdentityProvider};
use fab_core::directory::{
    serve, DirectoryClient, DirectoryError, DirectoryStore, PublishedKeys, TcpTransport,
};
use fab_core::field::FieldElement;
use fab_core::group::scenario::ScenarioRunner;
use fab_core::params::SystemParams;
use fab_core::realm::{auth_with, setup_system, verify, AuthBundle, AuthError, ProofMode, RealmOp, Rejection};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

mod config;
mod files;

use config::Config;
use files::{prover_keys, read_json, realm_path, write_json, KeyDir, RealmFile};

#[derive(Parser)]
#[command(name = "fab", version, about = "Federated anonymous blocklisting")]
struct Cli {
    /// JSON or TOML config file.
    #[arg(long, global = true, env = "FAB_CONFIG")]
    config: Option<PathBuf>,
    /// Directory address (`host:port`) or `file:<dir>` for a local store.
    #[arg(long, global = true)]
    directory: Option<String>,
    /// Key directory.
    #[arg(long, global = true)]
    keys: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate system parameters and relation keys.
    Setup {
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Output directory (defaults to the key directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Deterministic setup, for tests only.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Identity provider.
    #[command(subcommand)]
    Ip(IpCmd),
    /// Realm maintainer.
    #[command(subcommand)]
    Realm(RealmCmd),
    /// User side.
    #[command(subcommand)]
    User(UserCmd),
    /// Check an auth bundle against fresh directory state.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        realm: String,
    },
    #[command(subcommand)]
    Directory(DirectoryCmd),
    #[command(subcommand)]
    Group(GroupCmd),
    /// Scaling benchmark; CSV on stdout.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum IpCmd {
    /// Create the identity provider keypair.
    Init {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sign a credential hash H(x), given as hex.
    Sign {
        #[arg(long)]
        hash: String,
    },
}

#[derive(Args)]
struct RealmRef {
    #[arg(long)]
    id: String,
    /// Where maintainer state files live.
    #[arg(long, default_value = "realms")]
    state: PathBuf,
}

#[derive(Args)]
struct Target {
    /// Pseudonym in this realm, hex.
    #[arg(long, conflicts_with = "user", required_unless_present = "user")]
    pseudonym: Option<String>,
    /// Credential file; the pseudonym is derived from it.
    #[arg(long)]
    user: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RealmCmd {
    Create {
        #[command(flatten)]
        realm: RealmRef,
    },
    Block {
        #[command(flatten)]
        realm: RealmRef,
        #[command(flatten)]
        target: Target,
        /// Queue instead of publishing now.
        #[arg(long)]
        defer: bool,
    },
    Unblock {
        #[command(flatten)]
        realm: RealmRef,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        defer: bool,
    },
    Trust {
        #[command(flatten)]
        realm: RealmRef,
        #[arg(long)]
        other: String,
        #[arg(long)]
        defer: bool,
    },
    Untrust {
        #[command(flatten)]
        realm: RealmRef,
        #[arg(long)]
        other: String,
        #[arg(long)]
        defer: bool,
    },
    /// Apply queued changes as one epoch and publish.
    Publish {
        #[command(flatten)]
        realm: RealmRef,
    },
    Show {
        #[command(flatten)]
        realm: RealmRef,
    },
}

#[derive(Subcommand)]
enum UserCmd {
    /// Obtain a credential from the identity provider.
    Register {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an auth bundle for a target realm.
    Auth {
        #[arg(long)]
        cred: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        /// Prove block proofs in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Print this credential's pseudonym in a realm.
    Pseudonym {
        #[arg(long)]
        cred: PathBuf,
        #[arg(long)]
        realm: String,
    },
}

#[derive(Subcommand)]
enum DirectoryCmd {
    /// Serve a persistent store over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        #[arg(long, default_value = "directory")]
        store: PathBuf,
    },
    /// Publish params digest, verifying keys and the IP public key.
    PutKeys,
    List,
}

#[derive(Subcommand)]
enum GroupCmd {
    /// Run a JSON-lines scenario script.
    Run { file: PathBuf },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long, value_delimiter = ',', default_values_t = [10u32, 14, 20])]
    depths: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 20])]
    realms: Vec<usize>,
    /// Blocklist fill levels for the fill sweep; pass an empty string to skip.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0f64, 0.5, 0.9])]
    fills: Vec<f64>,
    #[arg(long, default_value_t = 14)]
    fill_depth: u32,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Also measure parallel block proving.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code and the JSON written to stderr.
struct Failure {
    code: u8,
    body: Value,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if let Some(r) = e.downcast_ref::<Rejection>() {
            let mut body = serde_json::to_value(r).unwrap_or(Value::Null);
            body["error"] = json!("Rejected");
            body["message"] = json!(r.to_string());
            return Failure { code: 2, body };
        }
        if let Some(AuthError::Blocked(realm)) = e.downcast_ref::<AuthError>() {
            return Failure {
                code: 2,
                body: json!({"error": "Blocked", "realm": realm, "message": e.to_string()}),
            };
        }
        if let Some(d) = e.downcast_ref::<DirectoryError>() {
            let mut body = serde_json::to_value(d).unwrap_or(Value::Null);
            body["message"] = json!(d.to_string());
            return Failure { code: 1, body };
        }
        Failure { code: 1, body: json!({"error": "Error", "message": format!("{e:#}")}) }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            if !out.is_null() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}

struct Ctx {
    cfg: Config,
}

impl Ctx {
    fn keys(&self) -> KeyDir {
        KeyDir(self.cfg.keys.clone())
    }

    fn directory(&self, params: &SystemParams) -> Result<DirectoryClient> {
        let addr = self
            .cfg
            .directory
            .as_deref()
            .ok_or_else(|| anyhow!("no directory configured (--directory, FAB_DIRECTORY or config file)"))?;
        Ok(match addr.strip_prefix("file:") {
            Some(dir) => DirectoryClient::in_process(Arc::new(DirectoryStore::open(params.clone(), dir)?)),
            None => DirectoryClient::new(Arc::new(TcpTransport::new(addr).with_context(|| format!("directory {addr}"))?)),
        })
    }
}

fn run(cli: Cli) -> Result<Value, Failure> {
    let mut cfg = Config::load(cli.config.as_deref(), |k| std::env::var(k).ok())?;
    if let Some(d) = cli.directory {
        cfg.directory = Some(d);
    }
    if let Some(k) = cli.keys {
        cfg.keys = k;
    }
    let ctx = Ctx { cfg };
    Ok(match cli.cmd {
        Cmd::Setup { depth, backend, out, seed } => cmd_setup(&ctx, depth, backend, out, seed)?,
        Cmd::Ip(c) => cmd_ip(&ctx, c)?,
        Cmd::Realm(c) => cmd_realm(&ctx, c)?,
        Cmd::User(c) => cmd_user(&ctx, c)?,
        Cmd::Verify { bundle, realm } => cmd_verify(&ctx, &bundle, &realm)?,
        Cmd::Directory(c) => cmd_directory(&ctx, c)?,
        Cmd::Group(GroupCmd::Run { file }) => cmd_group_run(&file)?,
        Cmd::Bench(args) => cmd_bench(&ctx, args)?,
    })
}

fn seeded(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_rng(OsRng).expect("os rng"),
    }
}

fn cmd_setup(
    ctx: &Ctx,
    depth: Option<u32>,
    backend: Option<BackendKind>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<Value> {
    let depth = depth.unwrap_or(ctx.cfg.depth);
    let backend = backend.unwrap_or(ctx.cfg.backend);
    let dir = KeyDir(out.unwrap_or_else(|| ctx.cfg.keys.clone()));
    let params = SystemParams::new(depth).map_err(|e| anyhow!("{e}"))?;
    let keys = setup_system(&params, backend, KeyMode::Production, &mut seeded(seed))?;
    dir.write_params(&params)?;
    dir.write_relation_keys("auth", &keys.auth.pk, &keys.auth.vk)?;
    dir.write_relation_keys("block", &keys.block.pk, &keys.block.vk)?;
    Ok(json!({
        "params_digest": params.digest(),
        "depth": depth,
        "backend": backend,
        "auth_vk": keys.auth.vk.digest(),
        "block_vk": keys.block.vk.digest(),
        "keys": dir.0,
    }))
}

fn cmd_ip(ctx: &Ctx, c: IpCmd) -> Result<Value> {
    let dir = ctx.keys();
    match c {
        IpCmd::Init { seed } => {
            let kp = ip_init(&mut seeded(seed));
            dir.write_ip(&kp)?;
            Ok(json!({"pk": kp.pk.to_hex()}))
        }
        IpCmd::Sign { hash } => {
            let params = dir.params()?;
            let kp = dir.ip_keypair()?;
            let h = FieldElement::from_hex(&hash).map_err(|e| anyhow!("--hash: {e}"))?;
            let sig = ip_sign(params.hasher(), &kp.sk, h, &mut OsRng);
            Ok(json!({"signature": sig.to_hex()}))
        }
    }
}

fn load_realm(r: &RealmRef, params: &SystemParams) -> Result<RealmFile> {
    let file: RealmFile = read_json(&realm_path(&r.state, &r.id))?;
    file.state(params)?;
    Ok(file)
}

fn pseudonym_arg(t: &Target, params: &SystemParams, seed: FieldElement) -> Result<FieldElement> {
    match (&t.pseudonym, &t.user) {
        (Some(hex), _) => FieldElement::from_hex(hex).map_err(|e| anyhow!("--pseudonym: {e}")),
        (None, Some(path)) => {
            let cred: CredentialFile = read_json(path)?;
            Ok(params.hasher().prf(cred.credential(params)?.x, seed))
        }
        (None, None) => bail!("give --pseudonym or --user"),
    }
}

fn cmd_realm(ctx: &Ctx, c: RealmCmd) -> Result<Value> {
    let params = ctx.keys().params()?;
    let mut rng = OsRng;
    let (r, op, defer) = match c {
        RealmCmd::Create { realm } => {
            let path = realm_path(&realm.state, &realm.id);
            if path.exists() {
                bail!("{} already exists", path.display());
            }
            let state = fab_core::realm::RealmState::create(&params, realm.id.clone(), &mut rng);
            let version = ctx.directory(&params)?.publish_state(&params, &state, &mut rng)?;
            write_json(&path, &RealmFile::from_state(&params, &state, vec![]))?;
            return Ok(json!({"realm": realm.id, "epoch": 0, "seed": state.seed(), "root": state.root(), "store_version": version}));
        }
        RealmCmd::Show { realm } => {
            let f = load_realm(&realm, &params)?;
            let state = f.state(&params)?;
            return Ok(json!({
                "realm": f.id,
                "epoch": f.epoch,
                "seed": f.seed,
                "root": state.root(),
                "trusted": f.trusted,
                "blocked": state.accumulator().blocked().len(),
                "pending": f.pending,
            }));
        }
        RealmCmd::Publish { realm } => (realm, None, false),
        RealmCmd::Block { realm, target, defer } => {
            let seed = load_realm(&realm, &params)?.seed;
            let ps = pseudonym_arg(&target, &params, seed)?;
            (realm, Some(RealmOp::Block(ps)), defer)
        }
        RealmCmd::Unblock { realm, target, defer } => {
            let seed = load_realm(&realm, &params)?.seed;
            let ps = pseudonym_arg(&target, &params, seed)?;
            (realm, Some(RealmOp::Unblock(ps)), defer)
        }
        RealmCmd::Trust { realm, other, defer } => (realm, Some(RealmOp::Trust(other)), defer),
        RealmCmd::Untrust { realm, other, defer } => (realm, Some(RealmOp::Untrust(other)), defer),
    };

    let mut file = load_realm(&r, &params)?;
    let path = realm_path(&r.state, &r.id);
    file.pending.extend(op);
    if defer {
        write_json(&path, &file)?;
        return Ok(json!({"realm": r.id, "queued": file.pending.len()}));
    }
    if file.pending.is_empty() {
        bail!("nothing to publish for realm {}", r.id);
    }
    let dir = ctx.directory(&params)?;
    let mut state = file.state(&params)?;
    let applied = state
        .apply_batch(&file.pending, |id| dir.fetch(id).is_ok())
        .map_err(|e| anyhow!("realm {}: {e}", r.id))?;
    let version = if state.epoch() != file.epoch {
        Some(dir.publish_state(&params, &state, &mut rng)?)
    } else {
        None
    };
    write_json(&path, &RealmFile::from_state(&params, &state, vec![]))?;
    Ok(json!({
        "realm": r.id,
        "epoch": state.epoch(),
        "root": state.root(),
        "applied": applied,
        "store_version": version,
    }))
}

fn cmd_user(ctx: &Ctx, c: UserCmd) -> Result<Value> {
    let keys = ctx.keys();
    let params = keys.params()?;
    match c {
        UserCmd::Register { out } => {
            let ip = IdentityProvider::new(keys.ip_keypair()?, params.hasher().clone());
            let x = FieldElement::random(&mut OsRng);
            let cred = register(params.hasher(), x, &ip, &mut OsRng)?;
            write_json(&out, &CredentialFile::new(&params, &cred))?;
            Ok(json!({"credential": out}))
        }
        UserCmd::Pseudonym { cred, realm } => {
            let cred: CredentialFile = read_json(&cred)?;
            let (_, rec) = ctx.directory(&params)?.fetch(&realm)?;
            let ps = params.hasher().prf(cred.credential(&params)?.x, rec.seed);
            Ok(json!({"realm": realm, "pseudonym": ps}))
        }
        UserCmd::Auth { cred, target, out, parallel } => {
            let cred = read_json::<CredentialFile>(&cred)?.credential(&params)?;
            let pk_ip = keys.ip_pk()?;
            let pkeys = keys.prover()?;
            let dir = ctx.directory(&params)?;
            let (t, trusted) = dir.closure_snapshots(&params, &target, true)?;
            let mode = if parallel { ProofMode::Parallel } else { ProofMode::Sequential };
            let bundle = auth_with(&params, prover_keys(&pkeys), &cred, &pk_ip, &t, &trusted, mode, &mut OsRng)?;
            write_json(&out, &bundle)?;
            Ok(json!({
                "target": target,
                "target_epoch": bundle.target_epoch,
                "block_proofs": bundle.pi_block.len(),
                "proof_bytes": bundle.proof_bytes(),
                "bundle": out,
            }))
        }
    }
}

fn cmd_verify(ctx: &Ctx, bundle: &Path, realm: &str) -> Result<Value> {
    let keys = ctx.keys();
    let params = keys.params()?;
    let bundle: AuthBundle = read_json(bundle)?;
    let dir = ctx.directory(&params)?;
    let (vkeys, pk_ip) = if keys.has_verifier() {
        (keys.verifier()?, keys.ip_pk()?)
    } else {
        let published = dir.get_keys()?;
        (published.verifier_keys()?, published.pk_ip)
    };
    let (target, trusted) = match dir.closure_snapshots(&params, realm, false) {
        Ok(v) => v,
        Err(fab_core::directory::ClosureError::Directory(DirectoryError::DanglingTrust(ids))) => {
            return Err(Rejection::UnreachableRealm(ids[0].clone()).into());
        }
        Err(e) => return Err(e.into()),
    };
    let trusted: BTreeMap<_, _> = trusted.into_iter().map(|s| (s.id.clone(), s)).collect();
    verify(&params, &vkeys, &pk_ip, &bundle, &target, &trusted)?;
    Ok(json!({"result": "accept", "realm": realm, "pseudonym": bundle.ps_r, "epoch": target.epoch}))
}

fn cmd_directory(ctx: &Ctx, c: DirectoryCmd) -> Result<Value> {
    let keys = ctx.keys();
    let params = keys.params()?;
    match c {
        DirectoryCmd::Serve { listen, store } => {
            let store = Arc::new(DirectoryStore::open(params.clone(), &store)?);
            if keys.has_verifier() && keys.path("ip.pub").exists() {
                store.put_keys(PublishedKeys::new(&params, &keys.verifier()?, keys.ip_pk()?))?;
            }
            let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            let addr = listener.local_addr()?;
            println!("{}", json!({"listening": addr.to_string(), "params_digest": params.digest()}));
            std::io::stdout().flush()?;
            serve(store, listener)?;
            Ok(Value::Null)
        }
        DirectoryCmd::PutKeys => {
            let published = PublishedKeys::new(&params, &keys.verifier()?, keys.ip_pk()?);
            let version = ctx.directory(&params)?.put_keys(published)?;
            Ok(json!({"store_version": version}))
        }
        DirectoryCmd::List => {
            let (version, realms) = ctx.directory(&params)?.list()?;
            Ok(json!({"store_version": version, "realms": realms}))
        }
    }
}

fn cmd_group_run(file: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let report = ScenarioRunner::default().run_text(&text)?;
    for step in &report.steps {
        println!("{}", serde_json::to_string(step)?);
    }
    let failed = report.failures().count();
    if failed > 0 {
        bail!("{failed} of {} steps did not match expectations", report.steps.len());
    }
    Ok(json!({"steps": report.steps.len(), "failed": 0}))
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<Value> {
    let config = BenchConfig {
        backend: a.backend.unwrap_or(ctx.cfg.backend),
        depths: a.depths,
        realm_counts: a.realms,
        fills: a.fills,
        fill_depth: a.fill_depth,
        warmup: a.warmup,
        iters: a.iters,
        parallel: a.parallel,
        seed: a.seed,
    };
    println!("{}", fab_bench::CSV_HEADER);
    let report = fab_bench::run(&config, |row| {
        println!("{}", row.csv());
        let _ = std::io::stdout().flush();
    });
    for f in &report.fits {
        println!("# fit backend={} d={} op={} slope_ms={:.3} intercept_ms={:.3} r2={:.4}", f.backend, f.d, f.op, f.slope_ms, f.intercept_ms, f.r2);
    }
    if let Some(dir) = a.out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("report.csv"), report.csv())?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(Value::Null)
}
