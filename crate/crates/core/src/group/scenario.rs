//! JSON-lines scenario scripts. One action per line; blank lines and lines
//! starting with `#` are ignored.
//!
//! ```text
//! {"op":"setup","depth":8,"backend":"reference","seed":7}
//! {"op":"register-user","user":"alice"}
//! {"op":"create-group","group":"A","founder":"alice"}
//! {"op":"join","group":"A","user":"bob","expect":"joined"}
//! {"op":"propose","group":"A","by":"alice","proposal":{"kind":"block","user":"bob"}}
//! {"op":"commit","group":"A","by":"alice"}
//! {"op":"assert","group":"A","check":"member","user":"bob","expect":false}
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Group, GroupContext, GroupError, JoinRequest, ProposalKind};
use crate::backend::{BackendKind, KeyMode};
use crate::credential::{ip_init, register, Credential, IdentityProvider};
use crate::directory::{DirectoryClient, DirectoryStore};
use crate::field::FieldElement;
use crate::params::SystemParams;
use crate::realm::{auth, setup_system, AuthError, RealmId, SystemKeys};

fn default_depth() -> u32 {
    8
}

fn default_backend() -> BackendKind {
    BackendKind::Reference
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Step {
    Setup {
        #[serde(default = "default_depth")]
        depth: u32,
        #[serde(default = "default_backend")]
        backend: BackendKind,
        #[serde(default)]
        seed: u64,
    },
    RegisterUser {
        user: String,
    },
    CreateGroup {
        group: String,
        #[serde(default)]
        founder: Option<String>,
    },
    Join {
        group: String,
        user: String,
        #[serde(default)]
        expect: Option<String>,
    },
    Propose {
        group: String,
        by: String,
        proposal: ProposalSpec,
        #[serde(default)]
        expect: Option<String>,
    },
    Commit {
        group: String,
        by: String,
        #[serde(default)]
        expect: Option<String>,
    },
    Assert {
        group: String,
        #[serde(flatten)]
        check: Check,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalSpec {
    Block { user: String },
    Unblock { user: String },
    Trust { realm: RealmId },
    Untrust { realm: RealmId },
    Add { user: String },
    Remove { user: String },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    Member { user: String, expect: bool },
    Blocked { user: String, expect: bool },
    Trusts { realm: RealmId, expect: bool },
    ContextEpoch { expect: u64 },
    RealmEpoch { expect: u64 },
    MemberCount { expect: usize },
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Step { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub line: usize,
    pub op: String,
    pub outcome: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub steps: Vec<StepReport>,
}

impl ScenarioReport {
    pub fn failures(&self) -> impl Iterator<Item = &StepReport> {
        self.steps.iter().filter(|s| !s.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

pub fn parse(text: &str) -> Result<Vec<(usize, Step)>, ScenarioError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(line, l)| {
            serde_json::from_str(l)
                .map(|s| (line, s))
                .map_err(|e| ScenarioError::Parse { line, msg: e.to_string() })
        })
        .collect()
}

/// Name of an enum variant from its Debug form: `EpochMismatch("a")` gives
/// `EpochMismatch`.
fn variant<T: std::fmt::Debug>(v: &T) -> String {
    let s = format!("{v:?}");
    s.split(['(', ' ', '{']).next().unwrap_or_default().to_string()
}

fn error_label(e: &GroupError) -> String {
    match e {
        GroupError::JoinRejected(r) => variant(r),
        GroupError::Realm(e) => variant(e),
        GroupError::Directory(e) => variant(e),
        other => variant(other),
    }
}

/// `expect` matches the outcome label exactly; `rejected` matches any
/// outcome other than `joined`, and `error` any failed commit or proposal.
fn matches(expect: &Option<String>, outcome: &str) -> bool {
    match expect.as_deref() {
        None => true,
        Some("rejected") => outcome != "joined",
        Some("error") => outcome != "ok",
        Some(e) => e == outcome,
    }
}

struct World {
    params: SystemParams,
    keys: SystemKeys,
    ip: IdentityProvider,
    ctx: GroupContext,
    rng: ChaCha20Rng,
}

pub struct ScenarioRunner {
    directory: Option<DirectoryClient>,
    world: Option<World>,
    users: BTreeMap<String, Credential>,
    groups: BTreeMap<String, Group>,
}

impl Default for ScenarioRunner {
    fn default() -> Self {
        Self::new(None)
    }
}

impl ScenarioRunner {
    /// With `directory = None` each setup creates a private in-process store.
    pub fn new(directory: Option<DirectoryClient>) -> Self {
        Self { directory, world: None, users: BTreeMap::new(), groups: BTreeMap::new() }
    }

    pub fn run_text(&mut self, text: &str) -> Result<ScenarioReport, ScenarioError> {
        let steps = parse(text)?;
        let mut report = ScenarioReport::default();
        for (line, step) in steps {
            let (outcome, passed) = self
                .step(&step)
                .map_err(|msg| ScenarioError::Step { line, msg })?;
            report.steps.push(StepReport { line, op: op_name(&step).to_string(), outcome, passed });
        }
        Ok(report)
    }

    pub fn group(&self, name: &str) -> Option<&Group> {
        self.groups.get(name)
    }

    pub fn pseudonym(&self, user: &str, group: &str) -> Option<FieldElement> {
        let w = self.world.as_ref()?;
        let cred = self.users.get(user)?;
        let g = self.groups.get(group)?;
        Some(w.params.hasher().prf(cred.x, g.realm().seed()))
    }

    fn setup(&mut self, depth: u32, backend: BackendKind, seed: u64) -> Result<(), String> {
        let params = SystemParams::new(depth).map_err(|e| e.to_string())?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = setup_system(&params, backend, KeyMode::Production, &mut rng).map_err(|e| e.to_string())?;
        let ip = IdentityProvider::new(ip_init(&mut rng), params.hasher().clone());
        let directory = self
            .directory
            .clone()
            .unwrap_or_else(|| DirectoryClient::in_process(Arc::new(DirectoryStore::in_memory(params.clone()))));
        let ctx = GroupContext { params: params.clone(), keys: keys.verifier(), pk_ip: ip.pk(), directory };
        self.world = Some(World { params, keys, ip, ctx, rng });
        self.users.clear();
        self.groups.clear();
        Ok(())
    }

    fn world(&mut self) -> Result<&mut World, String> {
        if self.world.is_none() {
            self.setup(default_depth(), default_backend(), 0)?;
        }
        Ok(self.world.as_mut().expect("set up above"))
    }

    fn ps(&self, user: &str, group: &str) -> Result<FieldElement, String> {
        self.users.get(user).ok_or_else(|| format!("unknown user {user}"))?;
        self.groups.get(group).ok_or_else(|| format!("unknown group {group}"))?;
        Ok(self.pseudonym(user, group).expect("checked above"))
    }

    /// Builds the user's bundle against fresh directory state.
    fn bundle(&mut self, user: &str, group: &str) -> Result<Result<JoinRequest, AuthError>, String> {
        let cred = self.users.get(user).ok_or_else(|| format!("unknown user {user}"))?.clone();
        if !self.groups.contains_key(group) {
            return Err(format!("unknown group {group}"));
        }
        let w = self.world()?;
        let (target, trusted) =
            w.ctx.directory.closure_snapshots(&w.params, group, true).map_err(|e| e.to_string())?;
        let pk = w.ip.pk();
        Ok(auth(&w.params, w.keys.prover(), &cred, &pk, &target, &trusted, &mut w.rng)
            .map(|bundle| JoinRequest { bundle }))
    }

    fn join(&mut self, group: &str, user: &str) -> Result<String, String> {
        let req = match self.bundle(user, group)? {
            Ok(r) => r,
            Err(AuthError::Blocked(_)) => return Ok("Blocked".into()),
            Err(e) => return Ok(variant(&e)),
        };
        let g = self.groups.get_mut(group).expect("checked in bundle");
        Ok(match g.join(&req) {
            Ok(_) => "joined".into(),
            Err(e) => error_label(&e),
        })
    }

    fn step(&mut self, step: &Step) -> Result<(String, bool), String> {
        Ok(match step {
            Step::Setup { depth, backend, seed } => {
                self.setup(*depth, *backend, *seed)?;
                ("ok".into(), true)
            }
            Step::RegisterUser { user } => {
                let w = self.world()?;
                let x = FieldElement::random(&mut w.rng);
                let cred = register(w.params.hasher(), x, &w.ip, &mut w.rng).map_err(|e| e.to_string())?;
                self.users.insert(user.clone(), cred);
                ("ok".into(), true)
            }
            Step::CreateGroup { group, founder } => {
                let w = self.world()?;
                let g = Group::create(w.ctx.clone(), group.clone(), &mut w.rng).map_err(|e| e.to_string())?;
                self.groups.insert(group.clone(), g);
                match founder {
                    Some(f) => {
                        let outcome = self.join(group, f)?;
                        let ok = outcome == "joined";
                        (outcome, ok)
                    }
                    None => ("ok".into(), true),
                }
            }
            Step::Join { group, user, expect } => {
                let outcome = self.join(group, user)?;
                let ok = matches(expect, &outcome);
                (outcome, ok)
            }
            Step::Propose { group, by, proposal, expect } => {
                let proposer = self.ps(by, group)?;
                let kind = match proposal {
                    ProposalSpec::Block { user } => ProposalKind::Block(self.ps(user, group)?),
                    ProposalSpec::Unblock { user } => ProposalKind::Unblock(self.ps(user, group)?),
                    ProposalSpec::Remove { user } => ProposalKind::Remove(self.ps(user, group)?),
                    ProposalSpec::Trust { realm } => ProposalKind::Trust(realm.clone()),
                    ProposalSpec::Untrust { realm } => ProposalKind::Untrust(realm.clone()),
                    ProposalSpec::Add { user } => match self.bundle(user, group)? {
                        Ok(req) => ProposalKind::Add(Box::new(req)),
                        Err(e) => {
                            let outcome = variant(&e);
                            let ok = matches(expect, &outcome);
                            return Ok((outcome, ok));
                        }
                    },
                };
                let g = self.groups.get_mut(group).expect("checked in ps");
                let outcome = match g.propose(proposer, kind) {
                    Ok(_) => "ok".into(),
                    Err(e) => error_label(&e),
                };
                let ok = matches(expect, &outcome) && (expect.is_some() || outcome == "ok");
                (outcome, ok)
            }
            Step::Commit { group, by, expect } => {
                let committer = self.ps(by, group)?;
                let w = self.world.as_mut().expect("users exist only after setup");
                let g = self.groups.get_mut(group).expect("checked in ps");
                let outcome = match g.commit(committer, &mut w.rng) {
                    Ok(_) => "ok".into(),
                    Err(e) => error_label(&e),
                };
                let ok = matches(expect, &outcome) && (expect.is_some() || outcome == "ok");
                (outcome, ok)
            }
            Step::Assert { group, check } => {
                let g = self.groups.get(group).ok_or_else(|| format!("unknown group {group}"))?;
                let (got, want) = match check {
                    Check::Member { user, expect } => {
                        (g.is_member(&self.ps(user, group)?).to_string(), expect.to_string())
                    }
                    Check::Blocked { user, expect } => (
                        g.realm().accumulator().is_blocked(&self.ps(user, group)?).to_string(),
                        expect.to_string(),
                    ),
                    Check::Trusts { realm, expect } => {
                        (g.realm().trusted().contains(realm).to_string(), expect.to_string())
                    }
                    Check::ContextEpoch { expect } => (g.context_epoch().to_string(), expect.to_string()),
                    Check::RealmEpoch { expect } => (g.realm().epoch().to_string(), expect.to_string()),
                    Check::MemberCount { expect } => (g.members().len().to_string(), expect.to_string()),
                };
                let ok = got == want;
                (got, ok)
            }
        })
    }
}

fn op_name(step: &Step) -> &'static str {
    match step {
        Step::Setup { .. } => "setup",
        Step::RegisterUser { .. } => "register-user",
        Step::CreateGroup { .. } => "create-group",
        Step::Join { .. } => "join",
        Step::Propose { .. } => "propose",
        Step::Commit { .. } => "commit",
        Step::Assert { .. } => "assert",
    }
}

/// Parses and runs a script against a private in-process directory.
pub fn run(text: &str) -> Result<ScenarioReport, ScenarioError> {
    ScenarioRunner::default().run_text(text)
}
