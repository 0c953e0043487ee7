//! System-wide parameters and their content digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::FieldElement;
use crate::hash::{DomainTags, Hasher};
use crate::poseidon::{PoseidonParams, ALPHA, FULL_ROUNDS, PARTIAL_ROUNDS, WIDTH};

pub const DEFAULT_DEPTH: u32 = 20;
/// Trees deeper than this cannot be addressed by a `u64` slot index with
/// room to spare, and would not fit a realistic proving key anyway.
pub const MAX_DEPTH: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamsError {
    #[error("tree depth must be in 1..={MAX_DEPTH}, got {0}")]
    Depth(u32),
    #[error("domain tags are not pairwise distinct")]
    TagClash,
    #[error("unsupported hash configuration")]
    HashConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemParams {
    depth: u32,
    hasher: Hasher,
    digest: String,
}

/// Serialized form. Round constants are regenerated from the round counts
/// and checked against the digest on load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParamsFile {
    pub depth: u32,
    pub hash_width: usize,
    pub full_rounds: usize,
    pub partial_rounds: usize,
    pub alpha: u64,
    pub tags: DomainTags,
    pub digest: String,
}

impl SystemParams {
    pub fn new(depth: u32) -> Result<Self, ParamsError> {
        Self::with_tags(depth, DomainTags::default())
    }

    pub fn with_tags(depth: u32, tags: DomainTags) -> Result<Self, ParamsError> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(ParamsError::Depth(depth));
        }
        if !tags.pairwise_distinct() {
            return Err(ParamsError::TagClash);
        }
        let hasher = Hasher::new(PoseidonParams::default_shared(), tags);
        let digest = compute_digest(depth, &hasher);
        Ok(Self { depth, hasher, digest })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of leaf slots, `2^depth`.
    pub fn capacity(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn hasher(&self) -> &Hasher {
        &self.hasher
    }

    /// Hex SHA-256 of the canonical parameter encoding.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn to_file(&self) -> SystemParamsFile {
        let p = self.hasher.poseidon();
        SystemParamsFile {
            depth: self.depth,
            hash_width: WIDTH,
            full_rounds: p.full_rounds,
            partial_rounds: p.partial_rounds,
            alpha: p.alpha,
            tags: *self.hasher.tags(),
            digest: self.digest.clone(),
        }
    }

    pub fn from_file(file: &SystemParamsFile) -> Result<Self, ParamsError> {
        if file.hash_width != WIDTH
            || file.full_rounds != FULL_ROUNDS
            || file.partial_rounds != PARTIAL_ROUNDS
            || file.alpha != ALPHA
        {
            return Err(ParamsError::HashConfig);
        }
        let params = Self::with_tags(file.depth, file.tags)?;
        if params.digest != file.digest {
            return Err(ParamsError::HashConfig);
        }
        Ok(params)
    }
}

fn compute_digest(depth: u32, hasher: &Hasher) -> String {
    let mut h = Sha256::new();
    h.update(b"fab-system-params-v1");
    h.update(FieldElement::modulus_bytes_le());
    h.update((WIDTH as u64).to_le_bytes());
    h.update(hasher.poseidon().digest());
    for tag in crate::hash::DomainTag::ALL {
        h.update(hasher.tags().value(tag).to_le_bytes());
    }
    h.update(depth.to_le_bytes());
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_depth_and_tags() {
        assert_eq!(SystemParams::new(0), Err(ParamsError::Depth(0)));
        assert_eq!(SystemParams::new(MAX_DEPTH + 1), Err(ParamsError::Depth(MAX_DEPTH + 1)));
        let tags = DomainTags { leaf: 4, ..DomainTags::default() };
        assert_eq!(SystemParams::with_tags(4, tags), Err(ParamsError::TagClash));
    }

    #[test]
    fn digest_depends_on_depth_and_round_trips() {
        let a = SystemParams::new(4).unwrap();
        let b = SystemParams::new(8).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let back = SystemParams::from_file(&a.to_file()).unwrap();
        assert_eq!(back, a);
        let mut tampered = a.to_file();
        tampered.digest = b.digest().to_string();
        assert!(SystemParams::from_file(&tampered).is_err());
    }
}
