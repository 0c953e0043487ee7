//! On-disk layout.
//!
//! ```text
//! keys/params.json             system parameters
//! keys/{auth,block}.{pk,vk}    relation keys (binary)
//! keys/ip.json                 identity provider keypair (secret)
//! keys/ip.pub                  identity provider public key (hex)
//! realms/<id>.json             maintainer-side realm state (secret)
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fab_core::accumulator::SerializedFieldTree;
use fab_core::backend::{ProvingKey, VerifyingKey as RelationVk};
use fab_core::credential::IdentityProviderKeypair;
use fab_core::field::FieldElement;
use fab_core::params::{SystemParams, SystemParamsFile};
use fab_core::realm::{ProverKeys, RealmId, RealmOp, RealmState, VerifierKeys};
use fab_core::signature::{SigningKey, VerifyingKey};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub struct KeyDir(pub PathBuf);

impl KeyDir {
    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn params(&self) -> Result<SystemParams> {
        let file: SystemParamsFile = read_json(&self.path("params.json"))
            .context("system parameters missing; run `fab setup` first")?;
        SystemParams::from_file(&file).map_err(|e| anyhow!("params.json: {e}"))
    }

    pub fn write_params(&self, params: &SystemParams) -> Result<()> {
        write_json(&self.path("params.json"), &params.to_file())
    }

    pub fn write_relation_keys(&self, name: &str, pk: &ProvingKey, vk: &RelationVk) -> Result<()> {
        fs::create_dir_all(&self.0)?;
        fs::write(self.path(&format!("{name}.pk")), pk.to_bytes())?;
        fs::write(self.path(&format!("{name}.vk")), vk.to_bytes())?;
        Ok(())
    }

    fn proving(&self, name: &str) -> Result<ProvingKey> {
        ProvingKey::from_bytes(&read_bytes(&self.path(&format!("{name}.pk")))?).map_err(|e| anyhow!("{name}.pk: {e}"))
    }

    fn verifying(&self, name: &str) -> Result<RelationVk> {
        RelationVk::from_bytes(&read_bytes(&self.path(&format!("{name}.vk")))?).map_err(|e| anyhow!("{name}.vk: {e}"))
    }

    pub fn prover(&self) -> Result<(ProvingKey, ProvingKey)> {
        Ok((self.proving("auth")?, self.proving("block")?))
    }

    pub fn verifier(&self) -> Result<VerifierKeys> {
        Ok(VerifierKeys { auth: self.verifying("auth")?, block: self.verifying("block")? })
    }

    pub fn has_verifier(&self) -> bool {
        self.path("auth.vk").exists() && self.path("block.vk").exists()
    }

    pub fn ip_keypair(&self) -> Result<IdentityProviderKeypair> {
        read_json(&self.path("ip.json")).context("identity provider keys missing; run `fab ip init` first")
    }

    pub fn write_ip(&self, kp: &IdentityProviderKeypair) -> Result<()> {
        write_json(&self.path("ip.json"), kp)?;
        fs::write(self.path("ip.pub"), format!("{}\n", kp.pk.to_hex()))?;
        Ok(())
    }

    pub fn ip_pk(&self) -> Result<VerifyingKey> {
        let text = fs::read_to_string(self.path("ip.pub")).context("ip.pub missing; run `fab ip init` first")?;
        VerifyingKey::from_hex(text.trim()).map_err(|e| anyhow!("ip.pub: {e}"))
    }
}

pub fn prover_keys<'a>(keys: &'a (ProvingKey, ProvingKey)) -> ProverKeys<'a> {
    ProverKeys { auth: &keys.0, block: &keys.1 }
}

/// Maintainer-side realm state, including mutations not yet published.
#[derive(Serialize, Deserialize)]
pub struct RealmFile {
    pub params_digest: String,
    pub id: RealmId,
    pub seed: FieldElement,
    pub epoch: u64,
    pub trusted: BTreeSet<RealmId>,
    pub accumulator: SerializedFieldTree,
    pub maintainer: SigningKey,
    #[serde(default)]
    pub pending: Vec<RealmOp>,
}

impl RealmFile {
    pub fn from_state(params: &SystemParams, state: &RealmState, pending: Vec<RealmOp>) -> Self {
        Self {
            params_digest: params.digest().to_string(),
            id: state.id().clone(),
            seed: state.seed(),
            epoch: state.epoch(),
            trusted: state.trusted().clone(),
            accumulator: state.accumulator().to_serialized(params),
            maintainer: state.maintainer().clone(),
            pending,
        }
    }

    pub fn state(&self, params: &SystemParams) -> Result<RealmState> {
        if self.params_digest != params.digest() {
            bail!("realm {} was created under different system parameters", self.id);
        }
        RealmState::from_parts(
            params,
            self.id.clone(),
            self.seed,
            &self.accumulator,
            self.epoch,
            self.trusted.clone(),
            self.maintainer.clone(),
        )
        .map_err(|e| anyhow!("realm {}: {e}", self.id))
    }
}

pub fn realm_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}
