use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::{CryptoRng, RngCore};

use super::wire::{Reply, Request, Response};
use super::{
    sign_deregistration, AuditEntry, DirectoryError, DirectoryRecord, DirectoryStore,
    PublishedKeys, RealmListing,
};
use crate::params::SystemParams;
use crate::realm::{RealmError, RealmSnapshot, RealmState};
use crate::signature::VerifyingKey;

pub trait Transport: Send + Sync {
    fn call(&self, req: &Request) -> Result<Response, DirectoryError>;
}

/// Direct calls into a store in the same process.
#[derive(Clone)]
pub struct InProcess(pub Arc<DirectoryStore>);

impl Transport for InProcess {
    fn call(&self, req: &Request) -> Result<Response, DirectoryError> {
        Ok(self.0.handle(req))
    }
}

/// Wraps a transport and counts requests by operation.
pub struct CountingTransport<T> {
    inner: T,
    counts: Mutex<BTreeMap<&'static str, u64>>,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, counts: Mutex::new(BTreeMap::new()) }
    }

    pub fn counts(&self) -> BTreeMap<&'static str, u64> {
        self.counts.lock().unwrap().clone()
    }

    pub fn count(&self, op: &str) -> u64 {
        self.counts.lock().unwrap().get(op).copied().unwrap_or(0)
    }

    pub fn reset(&self) {
        self.counts.lock().unwrap().clear();
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn call(&self, req: &Request) -> Result<Response, DirectoryError> {
        *self.counts.lock().unwrap().entry(req.name()).or_default() += 1;
        self.inner.call(req)
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn call(&self, req: &Request) -> Result<Response, DirectoryError> {
        (**self).call(req)
    }
}

/// Typed access to a directory over any transport.
#[derive(Clone)]
pub struct DirectoryClient {
    transport: Arc<dyn Transport>,
}

fn unexpected(reply: Reply) -> DirectoryError {
    DirectoryError::Transport(format!("unexpected reply {reply:?}"))
}

impl DirectoryClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    pub fn in_process(store: Arc<DirectoryStore>) -> Self {
        Self::new(Arc::new(InProcess(store)))
    }

    fn call(&self, req: Request) -> Result<(u64, Reply), DirectoryError> {
        let resp = self.transport.call(&req)?;
        resp.result.map(|r| (resp.store_version, r))
    }

    fn ack(&self, req: Request) -> Result<u64, DirectoryError> {
        match self.call(req)? {
            (v, Reply::Ack) => Ok(v),
            (_, r) => Err(unexpected(r)),
        }
    }

    pub fn register(&self, record: DirectoryRecord, maintainer: VerifyingKey) -> Result<u64, DirectoryError> {
        self.ack(Request::Register { record, maintainer })
    }

    pub fn publish(&self, record: DirectoryRecord) -> Result<u64, DirectoryError> {
        self.ack(Request::Publish { record })
    }

    /// Signs the current state of `state` and registers or publishes it,
    /// whichever applies.
    pub fn publish_state<G: RngCore + CryptoRng + ?Sized>(
        &self,
        params: &SystemParams,
        state: &RealmState,
        rng: &mut G,
    ) -> Result<u64, DirectoryError> {
        let record = DirectoryRecord::from_state(params, state, rng);
        if state.epoch() == 0 {
            self.register(record, state.maintainer().verifying_key())
        } else {
            self.publish(record)
        }
    }

    pub fn deregister<G: RngCore + CryptoRng + ?Sized>(
        &self,
        params: &SystemParams,
        state: &RealmState,
        rng: &mut G,
    ) -> Result<u64, DirectoryError> {
        let signature = sign_deregistration(params.hasher(), state.maintainer(), state.id(), rng);
        self.ack(Request::Deregister { realm_id: state.id().clone(), signature })
    }

    pub fn fetch(&self, realm_id: &str) -> Result<(u64, DirectoryRecord), DirectoryError> {
        match self.call(Request::Fetch { realm_id: realm_id.to_string() })? {
            (v, Reply::Record { record }) => Ok((v, record)),
            (_, r) => Err(unexpected(r)),
        }
    }

    pub fn fetch_closure(
        &self,
        realm_id: &str,
    ) -> Result<(u64, DirectoryRecord, Vec<DirectoryRecord>), DirectoryError> {
        match self.call(Request::FetchClosure { realm_id: realm_id.to_string() })? {
            (v, Reply::Closure { target, trusted }) => Ok((v, target, trusted)),
            (_, r) => Err(unexpected(r)),
        }
    }

    /// Closure as snapshots. Provers pass `with_trees` to rebuild every
    /// accumulator (checked against its root); verifiers need only roots.
    pub fn closure_snapshots(
        &self,
        params: &SystemParams,
        realm_id: &str,
        with_trees: bool,
    ) -> Result<(RealmSnapshot, Vec<RealmSnapshot>), ClosureError> {
        let (_, target, trusted) = self.fetch_closure(realm_id)?;
        let t = target.snapshot(params, with_trees)?;
        let ts = trusted
            .iter()
            .map(|r| r.snapshot(params, with_trees))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((t, ts))
    }

    pub fn list(&self) -> Result<(u64, Vec<RealmListing>), DirectoryError> {
        match self.call(Request::List)? {
            (v, Reply::Listing { realms }) => Ok((v, realms)),
            (_, r) => Err(unexpected(r)),
        }
    }

    pub fn history(&self, realm_id: &str) -> Result<Vec<AuditEntry>, DirectoryError> {
        match self.call(Request::History { realm_id: realm_id.to_string() })? {
            (_, Reply::History { entries }) => Ok(entries),
            (_, r) => Err(unexpected(r)),
        }
    }

    pub fn get_keys(&self) -> Result<PublishedKeys, DirectoryError> {
        match self.call(Request::GetKeys)? {
            (_, Reply::Keys { keys }) => Ok(keys),
            (_, r) => Err(unexpected(r)),
        }
    }

    pub fn put_keys(&self, keys: PublishedKeys) -> Result<u64, DirectoryError> {
        self.ack(Request::PutKeys { keys })
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ClosureError {
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error(transparent)]
    Realm(#[from] RealmError),
}
