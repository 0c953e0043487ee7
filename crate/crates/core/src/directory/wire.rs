use serde::{Deserialize, Serialize};

use super::{AuditEntry, DirectoryError, DirectoryRecord, PublishedKeys, RealmListing};
use crate::realm::RealmId;
use crate::signature::{Signature, VerifyingKey};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Request {
    Register { record: DirectoryRecord, maintainer: VerifyingKey },
    Publish { record: DirectoryRecord },
    Deregister { realm_id: RealmId, signature: Signature },
    Fetch { realm_id: RealmId },
    FetchClosure { realm_id: RealmId },
    List,
    History { realm_id: RealmId },
    GetKeys,
    PutKeys { keys: PublishedKeys },
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::Register { .. } => "REGISTER",
            Request::Publish { .. } => "PUBLISH",
            Request::Deregister { .. } => "DEREGISTER",
            Request::Fetch { .. } => "FETCH",
            Request::FetchClosure { .. } => "FETCH_CLOSURE",
            Request::List => "LIST",
            Request::History { .. } => "HISTORY",
            Request::GetKeys => "GET_KEYS",
            Request::PutKeys { .. } => "PUT_KEYS",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reply {
    Ack,
    Record { record: DirectoryRecord },
    Closure { target: DirectoryRecord, trusted: Vec<DirectoryRecord> },
    Listing { realms: Vec<RealmListing> },
    History { entries: Vec<AuditEntry> },
    Keys { keys: PublishedKeys },
}

/// Every response carries the store version it was served at.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub store_version: u64,
    pub result: Result<Reply, DirectoryError>,
}

impl Response {
    pub fn ok(store_version: u64, reply: Reply) -> Self {
        Self { store_version, result: Ok(reply) }
    }

    pub fn err(store_version: u64, e: DirectoryError) -> Self {
        Self { store_version, result: Err(e) }
    }
}
