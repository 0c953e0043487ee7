//! Identity provider and user credentials.
//!
//! The provider signs `credential_hash(x)` and never sees `x`.

use std::fmt;
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldElement;
use crate::hash::Hasher;
use crate::params::SystemParams;
use crate::signature::{Signature, SigningKey, VerifyingKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("registration refused by issuance policy")]
    PolicyRejected,
    #[error("credential file was produced under different system parameters")]
    ParamsMismatch,
    #[error("credential does not verify under the identity provider key")]
    Invalid,
}

/// Decides whether a credential hash may be signed. A deployment plugs its
/// one-credential-per-person check in here.
pub type IssuancePolicy = Arc<dyn Fn(&FieldElement) -> bool + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityProviderKeypair {
    pub pk: VerifyingKey,
    pub sk: SigningKey,
}

pub fn ip_init<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> IdentityProviderKeypair {
    let sk = SigningKey::generate(rng);
    IdentityProviderKeypair { pk: sk.verifying_key(), sk }
}

pub fn ip_sign<R: RngCore + CryptoRng + ?Sized>(
    hasher: &Hasher,
    sk: &SigningKey,
    h_x: FieldElement,
    rng: &mut R,
) -> Signature {
    sk.sign(hasher, h_x, rng)
}

pub struct IdentityProvider {
    keys: IdentityProviderKeypair,
    hasher: Hasher,
    policy: IssuancePolicy,
}

impl fmt::Debug for IdentityProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IdentityProvider").field("pk", &self.keys.pk).finish()
    }
}

impl IdentityProvider {
    /// A provider that signs every request.
    pub fn new(keys: IdentityProviderKeypair, hasher: Hasher) -> Self {
        Self::with_policy(keys, hasher, Arc::new(|_| true))
    }

    pub fn with_policy(keys: IdentityProviderKeypair, hasher: Hasher, policy: IssuancePolicy) -> Self {
        Self { keys, hasher, policy }
    }

    pub fn pk(&self) -> VerifyingKey {
        self.keys.pk
    }

    pub fn keys(&self) -> &IdentityProviderKeypair {
        &self.keys
    }

    /// Signs a credential hash submitted by a user.
    pub fn sign_hash<R: RngCore + CryptoRng + ?Sized>(
        &self,
        h_x: FieldElement,
        rng: &mut R,
    ) -> Result<Signature, CredentialError> {
        if !(self.policy)(&h_x) {
            return Err(CredentialError::PolicyRejected);
        }
        Ok(ip_sign(&self.hasher, &self.keys.sk, h_x, rng))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub x: FieldElement,
    pub sigma: Signature,
}

/// User side of registration: hash the identity, have it signed.
pub fn register<R: RngCore + CryptoRng + ?Sized>(
    hasher: &Hasher,
    x: FieldElement,
    ip: &IdentityProvider,
    rng: &mut R,
) -> Result<Credential, CredentialError> {
    let sigma = ip.sign_hash(hasher.credential_hash(x), rng)?;
    Ok(Credential { x, sigma })
}

pub fn verify_credential(hasher: &Hasher, pk: &VerifyingKey, cred: &Credential) -> bool {
    pk.verify(hasher, hasher.credential_hash(cred.x), &cred.sigma)
}

/// User-local credential file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialFile {
    pub params_digest: String,
    pub x: FieldElement,
    pub sigma: Signature,
}

impl CredentialFile {
    pub fn new(params: &SystemParams, cred: &Credential) -> Self {
        Self { params_digest: params.digest().to_string(), x: cred.x, sigma: cred.sigma }
    }

    pub fn credential(&self, params: &SystemParams) -> Result<Credential, CredentialError> {
        if self.params_digest != params.digest() {
            return Err(CredentialError::ParamsMismatch);
        }
        Ok(Credential { x: self.x, sigma: self.sigma })
    }
}
