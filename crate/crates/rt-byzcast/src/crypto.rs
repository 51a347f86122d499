//! Pluggable signature scheme with two backends.
//!
//! The `sim` backend is a keyed-hash construction: Monte-Carlo experiments
//! run millions of worlds and cannot afford asymmetric operations, and the
//! simulated adversary has no forging capability to begin with. Its
//! verification key equals the signing key, so only the key holder can
//! produce a verifying tag. The `ecdsa-p256` backend is the production
//! scheme (RFC 6979 deterministic signing, 64-byte signatures, 33-byte
//! compressed keys); bandwidth accounting uses those sizes under both
//! backends.

use std::collections::BTreeMap;

use p256::ecdsa::signature::hazmat::{PrehashSigner, PrehashVerifier};
use p256::ecdsa::{Signature as P256Signature, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::types::{DigestKey, ProcessId, SignatureBytes, SignatureSet};

/// Backend selector, config key `crypto.backend`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Sim,
    EcdsaP256,
}

impl Backend {
    pub fn parse(s: &str) -> Option<Backend> {
        match s {
            "sim" => Some(Backend::Sim),
            "ecdsa-p256" => Some(Backend::EcdsaP256),
            _ => None,
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Sim => "sim",
            Backend::EcdsaP256 => "ecdsa-p256",
        })
    }
}

fn sim_tag(secret: &[u8], digest: &DigestKey) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"rtbc-sim-sig");
    h.update(secret);
    h.update(digest.0);
    h.finalize().to_vec()
}

/// Derive a P-256 signing key from seed material, re-hashing until the
/// candidate is a valid scalar.
fn p256_key_from_seed(seed: &[u8; 32]) -> SigningKey {
    let mut candidate = *seed;
    loop {
        if let Ok(key) = SigningKey::from_bytes(&candidate.into()) {
            return key;
        }
        let mut h = Sha256::new();
        h.update(b"rtbc-p256-retry");
        h.update(candidate);
        candidate = h.finalize().into();
    }
}

#[derive(Clone)]
enum Signer {
    Sim(Vec<u8>),
    P256(SigningKey),
}

/// One process's key material. Construction is deterministic in the seed.
#[derive(Clone)]
pub struct KeyPair {
    owner: ProcessId,
    public: Vec<u8>,
    signer: Signer,
}

impl KeyPair {
    pub fn from_seed(backend: Backend, owner: ProcessId, seed: &[u8; 32]) -> KeyPair {
        match backend {
            Backend::Sim => {
                let secret = {
                    let mut h = Sha256::new();
                    h.update(b"rtbc-sim-secret");
                    h.update(seed);
                    h.finalize().to_vec()
                };
                KeyPair {
                    owner,
                    public: secret.clone(),
                    signer: Signer::Sim(secret),
                }
            }
            Backend::EcdsaP256 => {
                let key = p256_key_from_seed(seed);
                let public = VerifyingKey::from(&key)
                    .to_encoded_point(true)
                    .as_bytes()
                    .to_vec();
                KeyPair {
                    owner,
                    public,
                    signer: Signer::P256(key),
                }
            }
        }
    }

    pub fn owner(&self) -> ProcessId {
        self.owner
    }

    /// Verification key bytes as distributed through the registry (and as
    /// join-message payload). 33 bytes compressed for the ECDSA backend.
    pub fn public(&self) -> &[u8] {
        &self.public
    }

    pub fn sign(&self, digest: &DigestKey) -> SignatureBytes {
        match &self.signer {
            Signer::Sim(secret) => SignatureBytes(sim_tag(secret, digest)),
            Signer::P256(key) => {
                let sig: P256Signature = key
                    .sign_prehash(&digest.0)
                    .expect("prehash has valid length");
                SignatureBytes(sig.to_bytes().to_vec())
            }
        }
    }
}

#[derive(Clone)]
enum Verifier {
    Sim(Vec<u8>),
    P256(VerifyingKey),
}

/// The outcome of checking a whole signature set against one digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetVerification {
    pub valid: SignatureSet,
    pub rejected: Vec<ProcessId>,
}

/// Static in-world registry of verification keys. Immutable after setup
/// except for dynamic joins, which add keys delivered through the join
/// flow.
#[derive(Clone, Default)]
pub struct KeyRegistry {
    backend: Backend,
    verifiers: BTreeMap<ProcessId, Verifier>,
    publics: BTreeMap<ProcessId, Vec<u8>>,
}

impl KeyRegistry {
    pub fn new(backend: Backend) -> KeyRegistry {
        KeyRegistry {
            backend,
            verifiers: BTreeMap::new(),
            publics: BTreeMap::new(),
        }
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn add(&mut self, owner: ProcessId, public: &[u8]) -> bool {
        let verifier = match self.backend {
            Backend::Sim => Verifier::Sim(public.to_vec()),
            Backend::EcdsaP256 => match VerifyingKey::from_sec1_bytes(public) {
                Ok(key) => Verifier::P256(key),
                Err(_) => return false,
            },
        };
        self.verifiers.insert(owner, verifier);
        self.publics.insert(owner, public.to_vec());
        true
    }

    pub fn contains(&self, id: ProcessId) -> bool {
        self.verifiers.contains_key(&id)
    }

    pub fn public_bytes(&self, id: ProcessId) -> Option<&[u8]> {
        self.publics.get(&id).map(|v| v.as_slice())
    }

    pub fn verify(&self, signer: ProcessId, digest: &DigestKey, sig: &SignatureBytes) -> bool {
        match self.verifiers.get(&signer) {
            None => false,
            Some(Verifier::Sim(secret)) => sim_tag(secret, digest) == sig.0,
            Some(Verifier::P256(key)) => P256Signature::from_slice(&sig.0)
                .map(|s| key.verify_prehash(&digest.0, &s).is_ok())
                .unwrap_or(false),
        }
    }

    /// Split a set into the entries that verify against `digest` and the
    /// signers that do not (unknown signers are rejected). The input is
    /// left untouched.
    pub fn verify_set(&self, digest: &DigestKey, sigs: &SignatureSet) -> SetVerification {
        let mut valid = SignatureSet::new();
        let mut rejected = Vec::new();
        for (signer, sig) in sigs.iter() {
            if self.verify(signer, digest, sig) {
                valid.insert(signer, sig.clone());
            } else {
                rejected.push(signer);
            }
        }
        SetVerification { valid, rejected }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digest(byte: u8) -> DigestKey {
        DigestKey([byte; 32])
    }

    fn setup(backend: Backend, n: u64) -> (Vec<KeyPair>, KeyRegistry) {
        let mut registry = KeyRegistry::new(backend);
        let keys: Vec<KeyPair> = (0..n)
            .map(|i| {
                let mut seed = [0u8; 32];
                seed[0] = i as u8;
                KeyPair::from_seed(backend, ProcessId(i), &seed)
            })
            .collect();
        for k in &keys {
            assert!(registry.add(k.owner(), k.public()));
        }
        (keys, registry)
    }

    #[test]
    fn sign_verify_round_trip_both_backends() {
        for backend in [Backend::Sim, Backend::EcdsaP256] {
            let (keys, registry) = setup(backend, 2);
            let d = digest(7);
            let sig = keys[0].sign(&d);
            assert!(registry.verify(ProcessId(0), &d, &sig), "{backend}");

            // Flipping a digest bit must break verification.
            let mut flipped = d;
            flipped.0[0] ^= 1;
            assert!(!registry.verify(ProcessId(0), &flipped, &sig), "{backend}");
        }
    }

    #[test]
    fn sim_signing_is_deterministic() {
        let (keys, _) = setup(Backend::Sim, 1);
        let d = digest(3);
        assert_eq!(keys[0].sign(&d), keys[0].sign(&d));
    }

    #[test]
    fn ecdsa_signing_is_deterministic_with_expected_sizes() {
        let (keys, _) = setup(Backend::EcdsaP256, 1);
        let d = digest(3);
        let sig = keys[0].sign(&d);
        assert_eq!(sig, keys[0].sign(&d));
        assert_eq!(sig.0.len(), 64);
        assert_eq!(keys[0].public().len(), 33);
    }

    #[test]
    fn no_cross_signing_for_any_pair() {
        for backend in [Backend::Sim, Backend::EcdsaP256] {
            let (keys, registry) = setup(backend, 10);
            let d = digest(9);
            for a in &keys {
                let sig = a.sign(&d);
                for b in &keys {
                    let ok = registry.verify(b.owner(), &d, &sig);
                    assert_eq!(
                        ok,
                        a.owner() == b.owner(),
                        "{backend}: {} -> {}",
                        a.owner(),
                        b.owner()
                    );
                }
            }
        }
    }

    #[test]
    fn verify_set_splits_valid_and_rejected() {
        let (keys, registry) = setup(Backend::Sim, 4);
        let d = digest(1);

        let all_valid: SignatureSet = keys[..3].iter().map(|k| (k.owner(), k.sign(&d))).collect();
        let res = registry.verify_set(&d, &all_valid);
        assert_eq!(res.valid.len(), 3);
        assert!(res.rejected.is_empty());

        // Two valid entries plus one forged one.
        let mut mixed = SignatureSet::new();
        mixed.insert(ProcessId(0), keys[0].sign(&d));
        mixed.insert(ProcessId(1), keys[1].sign(&d));
        mixed.insert(ProcessId(2), SignatureBytes(vec![0xde; 32]));
        let res = registry.verify_set(&d, &mixed);
        assert_eq!(res.valid.len(), 2);
        assert_eq!(res.rejected, vec![ProcessId(2)]);
        // Input unmodified.
        assert_eq!(mixed.len(), 3);

        // Unknown signer lands in rejected.
        let unknown = SignatureSet::singleton(ProcessId(99), keys[0].sign(&d));
        let res = registry.verify_set(&d, &unknown);
        assert!(res.valid.is_empty());
        assert_eq!(res.rejected, vec![ProcessId(99)]);

        let empty = registry.verify_set(&d, &SignatureSet::new());
        assert!(empty.valid.is_empty() && empty.rejected.is_empty());
    }

    #[test]
    fn verify_set_is_a_fixpoint_on_its_valid_output() {
        let (keys, registry) = setup(Backend::Sim, 4);
        let d = digest(2);
        let mut set: SignatureSet = keys.iter().map(|k| (k.owner(), k.sign(&d))).collect();
        set.insert(ProcessId(1), SignatureBytes(vec![1; 8])); // ignored: signer already present
        let first = registry.verify_set(&d, &set);
        let second = registry.verify_set(&d, &first.valid);
        assert_eq!(first.valid, second.valid);
        assert!(second.rejected.is_empty());
    }
}
