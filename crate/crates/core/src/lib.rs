pub mod accumulator;
pub mod backend;
pub mod credential;
pub mod directory;
pub mod field;
pub mod group;
pub mod hash;
pub mod jubjub;
pub mod params;
pub mod poseidon;
pub mod realm;
pub mod relations;
pub mod signature;

pub use accumulator::{ComplementaryMerkleTree, FieldTree, FieldWitness, Interval};
pub use backend::{BackendKind, KeyMode, Proof};
pub use credential::{Credential, IdentityProvider};
pub use directory::{DirectoryClient, DirectoryError, DirectoryRecord, DirectoryStore};
pub use field::FieldElement;
pub use group::{Group, GroupContext, GroupError};
pub use params::SystemParams;
pub use realm::{
    auth, verify, AuthBundle, AuthError, ProofMode, RealmId, RealmOp, RealmSnapshot, RealmState,
    Rejection, SystemKeys, VerifierKeys,
};
