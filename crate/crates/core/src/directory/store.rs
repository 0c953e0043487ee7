use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::wire::{Reply, Request, Response};
use super::{
    deregistration_message, valid_realm_id, AuditEntry, DirectoryError, DirectoryRecord,
    PublishedKeys, RealmListing,
};
use crate::params::SystemParams;
use crate::realm::RealmId;
use crate::signature::{Signature, VerifyingKey};

struct Entry {
    maintainer: VerifyingKey,
    active: bool,
    history: Vec<AuditEntry>,
    latest: Arc<DirectoryRecord>,
}

#[derive(Default)]
struct Inner {
    /// Bumped on every accepted write.
    version: u64,
    realms: BTreeMap<RealmId, Entry>,
    keys: Option<PublishedKeys>,
}

#[derive(Serialize, Deserialize)]
struct IndexRealm {
    maintainer: VerifyingKey,
    active: bool,
}

#[derive(Serialize, Deserialize)]
struct Index {
    params_digest: String,
    version: u64,
    keys: Option<PublishedKeys>,
    realms: BTreeMap<RealmId, IndexRealm>,
}

/// Authoritative directory state. Writes are serialized by one lock, so two
/// publishes for the same epoch cannot both succeed, and multi-realm reads
/// see a single version.
pub struct DirectoryStore {
    params: SystemParams,
    inner: RwLock<Inner>,
    dir: Option<PathBuf>,
}

fn storage<E: std::fmt::Display>(e: E) -> DirectoryError {
    DirectoryError::Storage(e.to_string())
}

impl DirectoryStore {
    pub fn in_memory(params: SystemParams) -> Self {
        Self { params, inner: RwLock::new(Inner::default()), dir: None }
    }

    /// Opens (or creates) a store persisted under `dir`: `index.json` plus
    /// one append-only JSON-lines log per realm. The logs are authoritative
    /// for record history.
    pub fn open(params: SystemParams, dir: impl AsRef<Path>) -> Result<Self, DirectoryError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("realms")).map_err(storage)?;
        let index_path = dir.join("index.json");
        let mut inner = Inner::default();
        if index_path.exists() {
            let index: Index =
                serde_json::from_slice(&fs::read(&index_path).map_err(storage)?).map_err(storage)?;
            if index.params_digest != params.digest() {
                return Err(DirectoryError::ParamsMismatch);
            }
            inner.version = index.version;
            inner.keys = index.keys;
            for (id, meta) in index.realms {
                let (history, latest) = load_log(&dir, &id)?;
                inner.realms.insert(
                    id,
                    Entry { maintainer: meta.maintainer, active: meta.active, history, latest },
                );
            }
        }
        let store = Self { params, inner: RwLock::new(inner), dir: Some(dir) };
        store.write_index(&store.inner.read().unwrap())?;
        Ok(store)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn version(&self) -> u64 {
        self.inner.read().unwrap().version
    }

    fn check_record(&self, inner: &Inner, rec: &DirectoryRecord) -> Result<(), DirectoryError> {
        if rec.params_digest != self.params.digest()
            || rec.accumulator.params_digest != self.params.digest()
            || rec.accumulator.depth != self.params.depth()
        {
            return Err(DirectoryError::ParamsMismatch);
        }
        if !valid_realm_id(&rec.realm_id) {
            return Err(DirectoryError::Malformed(format!("bad realm id {:?}", rec.realm_id)));
        }
        if rec.trusted.windows(2).any(|w| w[0] >= w[1]) || rec.trusted.contains(&rec.realm_id) {
            return Err(DirectoryError::Malformed("trusted list must be sorted, unique and exclude self".into()));
        }
        let unknown: Vec<RealmId> = rec
            .trusted
            .iter()
            .filter(|t| !inner.realms.get(*t).is_some_and(|e| e.active))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(DirectoryError::DanglingTrust(unknown));
        }
        Ok(())
    }

    /// First publication of a realm; binds the maintainer key.
    pub fn register(&self, rec: DirectoryRecord, maintainer: VerifyingKey) -> Result<u64, DirectoryError> {
        let mut inner = self.inner.write().unwrap();
        if inner.realms.contains_key(&rec.realm_id) {
            return Err(DirectoryError::AlreadyRegistered(rec.realm_id));
        }
        self.check_record(&inner, &rec)?;
        if rec.epoch != 0 {
            return Err(DirectoryError::EpochGap { expected: 0, got: rec.epoch });
        }
        if !rec.signature_valid(self.params.hasher(), &maintainer) {
            return Err(DirectoryError::BadSignature);
        }
        self.append_log(&rec, true)?;
        let entry = Entry {
            maintainer,
            active: true,
            history: vec![audit(&rec)],
            latest: Arc::new(rec),
        };
        inner.realms.insert(entry.latest.realm_id.clone(), entry);
        self.commit(&mut inner)
    }

    /// Accepts exactly the next epoch, signed by the registered maintainer.
    pub fn publish(&self, rec: DirectoryRecord) -> Result<u64, DirectoryError> {
        let mut inner = self.inner.write().unwrap();
        let (stored, maintainer) = match inner.realms.get(&rec.realm_id) {
            Some(e) if e.active => (e.latest.epoch, e.maintainer),
            _ => return Err(DirectoryError::UnknownRealm(rec.realm_id)),
        };
        self.check_record(&inner, &rec)?;
        if rec.epoch <= stored {
            return Err(DirectoryError::EpochRegression { stored, got: rec.epoch });
        }
        if rec.epoch != stored + 1 {
            return Err(DirectoryError::EpochGap { expected: stored + 1, got: rec.epoch });
        }
        if !rec.signature_valid(self.params.hasher(), &maintainer) {
            return Err(DirectoryError::BadSignature);
        }
        self.append_log(&rec, false)?;
        let entry = inner.realms.get_mut(&rec.realm_id).expect("checked above");
        entry.history.push(audit(&rec));
        entry.latest = Arc::new(rec);
        self.commit(&mut inner)
    }

    /// Retires a realm. Its history stays on disk; realms that still trust
    /// it get `DanglingTrust` on closure fetches.
    pub fn deregister(&self, realm_id: &str, sig: &Signature) -> Result<u64, DirectoryError> {
        let mut inner = self.inner.write().unwrap();
        let entry = match inner.realms.get_mut(realm_id) {
            Some(e) if e.active => e,
            _ => return Err(DirectoryError::UnknownRealm(realm_id.to_string())),
        };
        if !entry.maintainer.verify(self.params.hasher(), deregistration_message(realm_id), sig) {
            return Err(DirectoryError::BadSignature);
        }
        entry.active = false;
        self.commit(&mut inner)
    }

    pub fn fetch(&self, realm_id: &str) -> Result<(u64, Arc<DirectoryRecord>), DirectoryError> {
        let inner = self.inner.read().unwrap();
        Ok((inner.version, latest(&inner, realm_id)?))
    }

    /// The target and every realm it trusts, read under one lock.
    #[allow(clippy::type_complexity)]
    pub fn fetch_closure(
        &self,
        realm_id: &str,
    ) -> Result<(u64, Arc<DirectoryRecord>, Vec<Arc<DirectoryRecord>>), DirectoryError> {
        let inner = self.inner.read().unwrap();
        let target = latest(&inner, realm_id)?;
        let mut trusted = Vec::with_capacity(target.trusted.len());
        let mut missing = Vec::new();
        for id in &target.trusted {
            match latest(&inner, id) {
                Ok(r) => trusted.push(r),
                Err(_) => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(DirectoryError::DanglingTrust(missing));
        }
        Ok((inner.version, target, trusted))
    }

    pub fn list(&self) -> (u64, Vec<RealmListing>) {
        let inner = self.inner.read().unwrap();
        let realms = inner
            .realms
            .iter()
            .filter(|(_, e)| e.active)
            .map(|(id, e)| RealmListing { realm_id: id.clone(), epoch: e.latest.epoch, root: e.latest.root })
            .collect();
        (inner.version, realms)
    }

    pub fn history(&self, realm_id: &str) -> Result<Vec<AuditEntry>, DirectoryError> {
        let inner = self.inner.read().unwrap();
        inner
            .realms
            .get(realm_id)
            .map(|e| e.history.clone())
            .ok_or_else(|| DirectoryError::UnknownRealm(realm_id.to_string()))
    }

    pub fn maintainer(&self, realm_id: &str) -> Option<VerifyingKey> {
        self.inner.read().unwrap().realms.get(realm_id).map(|e| e.maintainer)
    }

    pub fn keys(&self) -> Result<PublishedKeys, DirectoryError> {
        self.inner.read().unwrap().keys.clone().ok_or(DirectoryError::KeysMissing)
    }

    /// Keys are set once; re-sending identical keys is accepted.
    pub fn put_keys(&self, keys: PublishedKeys) -> Result<u64, DirectoryError> {
        let mut inner = self.inner.write().unwrap();
        if keys.params_digest != self.params.digest() {
            return Err(DirectoryError::ParamsMismatch);
        }
        match &inner.keys {
            Some(k) if *k == keys => return Ok(inner.version),
            Some(_) => return Err(DirectoryError::KeysAlreadySet),
            None => {}
        }
        inner.keys = Some(keys);
        self.commit(&mut inner)
    }

    pub fn handle(&self, req: &Request) -> Response {
        let result = match req {
            Request::Register { record, maintainer } => {
                self.register(record.clone(), *maintainer).map(|_| Reply::Ack)
            }
            Request::Publish { record } => self.publish(record.clone()).map(|_| Reply::Ack),
            Request::Deregister { realm_id, signature } => {
                self.deregister(realm_id, signature).map(|_| Reply::Ack)
            }
            Request::Fetch { realm_id } => {
                return match self.fetch(realm_id) {
                    Ok((v, r)) => Response::ok(v, Reply::Record { record: (*r).clone() }),
                    Err(e) => Response::err(self.version(), e),
                }
            }
            Request::FetchClosure { realm_id } => {
                return match self.fetch_closure(realm_id) {
                    Ok((v, t, ts)) => Response::ok(
                        v,
                        Reply::Closure {
                            target: (*t).clone(),
                            trusted: ts.iter().map(|r| (**r).clone()).collect(),
                        },
                    ),
                    Err(e) => Response::err(self.version(), e),
                }
            }
            Request::List => {
                let (v, realms) = self.list();
                return Response::ok(v, Reply::Listing { realms });
            }
            Request::History { realm_id } => self.history(realm_id).map(|entries| Reply::History { entries }),
            Request::GetKeys => self.keys().map(|keys| Reply::Keys { keys }),
            Request::PutKeys { keys } => self.put_keys(keys.clone()).map(|_| Reply::Ack),
        };
        Response { store_version: self.version(), result }
    }

    fn commit(&self, inner: &mut Inner) -> Result<u64, DirectoryError> {
        inner.version += 1;
        self.write_index(inner)?;
        Ok(inner.version)
    }

    fn append_log(&self, rec: &DirectoryRecord, fresh: bool) -> Result<(), DirectoryError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(log_path(dir, &rec.realm_id))
            .map_err(storage)?;
        let mut line = serde_json::to_vec(rec).map_err(storage)?;
        line.push(b'\n');
        file.write_all(&line).map_err(storage)?;
        file.sync_data().map_err(storage)
    }

    fn write_index(&self, inner: &Inner) -> Result<(), DirectoryError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let index = Index {
            params_digest: self.params.digest().to_string(),
            version: inner.version,
            keys: inner.keys.clone(),
            realms: inner
                .realms
                .iter()
                .map(|(id, e)| (id.clone(), IndexRealm { maintainer: e.maintainer, active: e.active }))
                .collect(),
        };
        let tmp = dir.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&index).map_err(storage)?).map_err(storage)?;
        fs::rename(tmp, dir.join("index.json")).map_err(storage)
    }
}

fn audit(rec: &DirectoryRecord) -> AuditEntry {
    AuditEntry { epoch: rec.epoch, root: rec.root, record_digest: rec.digest() }
}

fn latest(inner: &Inner, realm_id: &str) -> Result<Arc<DirectoryRecord>, DirectoryError> {
    match inner.realms.get(realm_id) {
        Some(e) if e.active => Ok(e.latest.clone()),
        _ => Err(DirectoryError::UnknownRealm(realm_id.to_string())),
    }
}

fn log_path(dir: &Path, realm_id: &str) -> PathBuf {
    dir.join("realms").join(format!("{realm_id}.jsonl"))
}

fn load_log(dir: &Path, realm_id: &str) -> Result<(Vec<AuditEntry>, Arc<DirectoryRecord>), DirectoryError> {
    let file = File::open(log_path(dir, realm_id)).map_err(storage)?;
    let mut history = Vec::new();
    let mut last = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(storage)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DirectoryRecord = serde_json::from_str(&line).map_err(storage)?;
        if rec.epoch != history.len() as u64 || rec.realm_id != realm_id {
            return Err(DirectoryError::Storage(format!("log for {realm_id} is out of sequence")));
        }
        history.push(audit(&rec));
        last = Some(rec);
    }
    let last = last.ok_or_else(|| DirectoryError::Storage(format!("log for {realm_id} is empty")))?;
    Ok((history, Arc::new(last)))
}
