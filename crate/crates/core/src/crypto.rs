//! Owner keys, context-bound signing payloads, and fragment signatures.
//!
//! A fragment is never signed directly. The signer hashes its canonical
//! bytes and signs a payload that also names the resource type, the
//! resource name and the concrete path, so a signature cannot be moved to a
//! different resource or location.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use sha2::{Digest as _, Sha256};

use crate::document::{self, Document};
use crate::error::{Error, Result};
use crate::resource::ResourceType;
use crate::selector::FragmentMatch;

/// Domain-separation prefix of every signing payload.
pub const PAYLOAD_DOMAIN: &[u8] = b"meshguard-v1\0";

const SECRET_KEY_HEADER: &str = "meshguard-secret-key-v1";
const PUBLIC_KEY_HEADER: &str = "meshguard-public-key-v1";

pub type Digest = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

/// Owner public key (raw 32-byte Ed25519 point).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::MalformedKey(format!("public key must be 32 bytes, got {}", bytes.len())))?;
        VerifyingKey::from_bytes(&arr)
            .map(Self)
            .map_err(|e| Error::MalformedKey(e.to_string()))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::MalformedKey(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    /// First 16 hex chars of SHA-256 over the raw key.
    pub fn key_id(&self) -> String {
        hex::encode(&sha256(&self.to_bytes())[..8])
    }

    pub fn verify(&self, message: &[u8], signature: &[u8; 64]) -> bool {
        self.0.verify_strict(message, &Signature::from_bytes(signature)).is_ok()
    }

    pub fn to_file_string(&self) -> String {
        format!("{PUBLIC_KEY_HEADER}\n{}\n", self.to_hex())
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        Self::from_hex(key_file_body(text, PUBLIC_KEY_HEADER)?)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

fn key_file_body<'a>(text: &'a str, header: &str) -> Result<&'a str> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match (lines.next(), lines.next(), lines.next()) {
        (Some(h), Some(body), None) if h == header => Ok(body),
        (Some(h), _, _) if h != header => Err(Error::MalformedKey(format!("expected header {header:?}, found {h:?}"))),
        _ => Err(Error::MalformedKey(format!(
            "expected {header:?} followed by one hex line"
        ))),
    }
}

pub struct KeyPair {
    pub key_id: String,
    pub public: PublicKey,
    secret: SigningKey,
}

impl KeyPair {
    fn from_secret(secret: SigningKey) -> Self {
        let public = PublicKey(secret.verifying_key());
        Self {
            key_id: public.key_id(),
            public,
            secret,
        }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.secret.sign(message).to_bytes()
    }

    pub fn to_secret_file_string(&self) -> String {
        format!("{SECRET_KEY_HEADER}\n{}\n", hex::encode(self.secret_bytes()))
    }

    pub fn from_secret_file_string(text: &str) -> Result<Self> {
        let bytes =
            hex::decode(key_file_body(text, SECRET_KEY_HEADER)?).map_err(|e| Error::MalformedKey(e.to_string()))?;
        generate_keypair(Some(&bytes)).map_err(|_| Error::MalformedKey("secret key must be 32 bytes".into()))
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("key_id", &self.key_id)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Deterministic from a 32-byte seed, random otherwise.
pub fn generate_keypair(seed: Option<&[u8]>) -> Result<KeyPair> {
    let seed: [u8; 32] = match seed {
        Some(s) => s.try_into().map_err(|_| Error::BadSeedLength(s.len()))?,
        None => rand::random(),
    };
    Ok(KeyPair::from_secret(SigningKey::from_bytes(&seed)))
}

/// `PAYLOAD_DOMAIN ‖ len‖rtype ‖ len‖name ‖ len‖path ‖ len‖digest`, lengths as u32 big-endian.
pub fn signing_payload(rtype: ResourceType, name: &str, path: &str, fragment_digest: &Digest) -> Vec<u8> {
    let fields: [&[u8]; 4] = [
        rtype.tag().as_bytes(),
        name.as_bytes(),
        path.as_bytes(),
        fragment_digest,
    ];
    let len = PAYLOAD_DOMAIN.len() + fields.iter().map(|f| 4 + f.len()).sum::<usize>();
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(PAYLOAD_DOMAIN);
    for field in fields {
        let n = u32::try_from(field.len()).expect("payload field exceeds 4 GiB");
        out.extend_from_slice(&n.to_be_bytes());
        out.extend_from_slice(field);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accepted,
    WrongContext,
    DigestMismatch,
    BadSignature,
    UnknownKey,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "Accepted",
            Verdict::WrongContext => "WrongContext",
            Verdict::DigestMismatch => "DigestMismatch",
            Verdict::BadSignature => "BadSignature",
            Verdict::UnknownKey => "UnknownKey",
        }
    }

    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A detached signature over one fragment, bound to its location.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignatureEnvelope {
    pub key_id: String,
    pub rtype: ResourceType,
    pub resource_name: String,
    pub path: String,
    pub fragment_digest: Digest,
    pub signature: [u8; 64],
}

impl SignatureEnvelope {
    pub fn payload(&self) -> Vec<u8> {
        signing_payload(self.rtype, &self.resource_name, &self.path, &self.fragment_digest)
    }

    pub fn to_document(&self) -> Document {
        Document::map()
            .with("key_id", self.key_id.as_str())
            .with("rtype", self.rtype.tag())
            .with("name", self.resource_name.as_str())
            .with("path", self.path.as_str())
            .with("digest", hex::encode(self.fragment_digest))
            .with("signature", hex::encode(self.signature))
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        let bad = |m: String| Error::MalformedEnvelope(m);
        let map = doc.as_map().ok_or_else(|| bad("envelope must be a map".into()))?;
        const FIELDS: [&str; 6] = ["key_id", "rtype", "name", "path", "digest", "signature"];
        if let Some(k) = map.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(bad(format!("unknown field {k:?}")));
        }
        let field = |k: &str| {
            map.get(k)
                .and_then(Document::as_str)
                .ok_or_else(|| bad(format!("field {k:?} must be a string")))
        };
        Ok(Self {
            key_id: field("key_id")?.to_owned(),
            rtype: field("rtype")?.parse().map_err(|e: Error| bad(e.to_string()))?,
            resource_name: field("name")?.to_owned(),
            path: field("path")?.to_owned(),
            fragment_digest: decode_hex_array(field("digest")?).map_err(bad)?,
            signature: decode_hex_array(field("signature")?).map_err(bad)?,
        })
    }

    /// Base64 of the envelope's canonical bytes, as embedded in annotations.
    pub fn to_annotation_value(&self) -> String {
        BASE64.encode(self.to_document().canonical_bytes())
    }

    /// Inverse of [`Self::to_annotation_value`]; the decoded bytes must already be canonical.
    pub fn from_annotation_value(value: &str) -> Result<Self> {
        let bytes = BASE64
            .decode(value.trim())
            .map_err(|e| Error::MalformedEnvelope(format!("base64: {e}")))?;
        let doc = document::parse_json(&bytes).map_err(|e| Error::MalformedEnvelope(e.to_string()))?;
        if doc.canonical_bytes() != bytes {
            return Err(Error::MalformedEnvelope("envelope bytes are not canonical".into()));
        }
        Self::from_document(&doc)
    }
}

pub(crate) fn decode_hex_array<const N: usize>(s: &str) -> std::result::Result<[u8; N], String> {
    let bytes = hex::decode(s).map_err(|e| format!("hex: {e}"))?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("expected {N} bytes, got {}", b.len()))
}

pub fn sign_fragment(m: &FragmentMatch, keys: &KeyPair) -> SignatureEnvelope {
    let path = m.concrete_path.to_string();
    let fragment_digest = sha256(&m.fragment.canonical_bytes());
    let signature = keys.sign(&signing_payload(m.rtype, &m.resource_name, &path, &fragment_digest));
    SignatureEnvelope {
        key_id: keys.key_id.clone(),
        rtype: m.rtype,
        resource_name: m.resource_name.clone(),
        path,
        fragment_digest,
        signature,
    }
}

pub fn verify_fragment(m: &FragmentMatch, envelope: &SignatureEnvelope, owner_key: &PublicKey) -> Verdict {
    verify_canonical(
        m.rtype,
        &m.resource_name,
        &m.concrete_path.to_string(),
        &m.fragment.canonical_bytes(),
        envelope,
        owner_key,
    )
}

/// Verification over already-canonical fragment bytes.
///
/// Checks run in a fixed order (context, key, digest, signature) and the
/// first failure is the verdict.
pub fn verify_canonical(
    rtype: ResourceType,
    resource_name: &str,
    path: &str,
    canonical_fragment: &[u8],
    envelope: &SignatureEnvelope,
    owner_key: &PublicKey,
) -> Verdict {
    if envelope.rtype != rtype || envelope.resource_name != resource_name || envelope.path != path {
        return Verdict::WrongContext;
    }
    if envelope.key_id != owner_key.key_id() {
        return Verdict::UnknownKey;
    }
    if sha256(canonical_fragment) != envelope.fragment_digest {
        return Verdict::DigestMismatch;
    }
    if !owner_key.verify(&envelope.payload(), &envelope.signature) {
        return Verdict::BadSignature;
    }
    Verdict::Accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::FragmentPath;

    fn mirror_match(name: &str, host: &str) -> FragmentMatch {
        FragmentMatch {
            selector_label: "request-mirroring".into(),
            rtype: ResourceType::RouteConfiguration,
            resource_name: name.into(),
            concrete_path: FragmentPath::parse("routes[0].mirror").unwrap(),
            fragment: Document::map().with("host", host),
        }
    }

    #[test]
    fn seeded_keys_are_reproducible() {
        let a = generate_keypair(Some(&[7; 32])).unwrap();
        let b = generate_keypair(Some(&[7; 32])).unwrap();
        assert_eq!(a.public, b.public);
        assert_eq!(a.key_id, a.public.key_id());
        assert_eq!(a.key_id.len(), 16);
    }

    #[test]
    fn random_keys_differ() {
        let a = generate_keypair(None).unwrap();
        let b = generate_keypair(None).unwrap();
        assert_ne!(a.public, b.public);
    }

    #[test]
    fn bad_seed_length() {
        assert!(matches!(
            generate_keypair(Some(&[0; 16])),
            Err(Error::BadSeedLength(16))
        ));
    }

    #[test]
    fn payload_is_length_prefixed() {
        let d = [9; 32];
        let a = signing_payload(ResourceType::Cluster, "a", "b", &d);
        assert_eq!(a, signing_payload(ResourceType::Cluster, "a", "b", &d));
        assert_ne!(a, signing_payload(ResourceType::Cluster, "ab", "", &d));
        let mut d2 = d;
        d2[31] ^= 1;
        assert_ne!(a, signing_payload(ResourceType::Cluster, "a", "b", &d2));
        assert!(a.starts_with(PAYLOAD_DOMAIN));
        assert_eq!(a.len(), PAYLOAD_DOMAIN.len() + 4 * 4 + 7 + 1 + 1 + 32);
    }

    #[test]
    fn sign_verify_round_trip() {
        let keys = generate_keypair(Some(&[1; 32])).unwrap();
        let m = mirror_match("vs/a", "shadow.svc");
        let env = sign_fragment(&m, &keys);
        assert_eq!(verify_fragment(&m, &env, &keys.public), Verdict::Accepted);
    }

    #[test]
    fn verdicts() {
        let keys = generate_keypair(Some(&[1; 32])).unwrap();
        let other = generate_keypair(Some(&[2; 32])).unwrap();
        let m = mirror_match("vs/a", "shadow.svc");
        let env = sign_fragment(&m, &keys);

        assert_eq!(
            verify_fragment(&mirror_match("vs/a", "evil.svc"), &env, &keys.public),
            Verdict::DigestMismatch
        );
        assert_eq!(
            verify_fragment(&mirror_match("vs/b", "shadow.svc"), &env, &keys.public),
            Verdict::WrongContext
        );
        assert_eq!(verify_fragment(&m, &env, &other.public), Verdict::UnknownKey);

        let mut forged = env.clone();
        forged.signature[5] ^= 0x40;
        assert_eq!(verify_fragment(&m, &forged, &keys.public), Verdict::BadSignature);

        // Signed by another key but relabelled with the owner's key id.
        let mut impostor = sign_fragment(&m, &other);
        impostor.key_id = keys.key_id.clone();
        assert_eq!(verify_fragment(&m, &impostor, &keys.public), Verdict::BadSignature);
    }

    #[test]
    fn different_fragments_different_digests() {
        let keys = generate_keypair(Some(&[1; 32])).unwrap();
        let a = sign_fragment(&mirror_match("vs/a", "x"), &keys);
        let b = sign_fragment(&mirror_match("vs/a", "y"), &keys);
        assert_ne!(a.fragment_digest, b.fragment_digest);
    }

    #[test]
    fn envelope_annotation_round_trip() {
        let keys = generate_keypair(Some(&[1; 32])).unwrap();
        let env = sign_fragment(&mirror_match("vs/a", "x"), &keys);
        let value = env.to_annotation_value();
        assert_eq!(SignatureEnvelope::from_annotation_value(&value).unwrap(), env);
    }

    #[test]
    fn non_canonical_envelope_rejected() {
        let keys = generate_keypair(Some(&[1; 32])).unwrap();
        let env = sign_fragment(&mirror_match("vs/a", "x"), &keys);
        let pretty = serde_json::to_vec_pretty(&env.to_document()).unwrap();
        assert!(SignatureEnvelope::from_annotation_value(&BASE64.encode(pretty)).is_err());
        assert!(SignatureEnvelope::from_annotation_value("not base64!").is_err());
    }

    #[test]
    fn key_files_round_trip() {
        let keys = generate_keypair(Some(&[3; 32])).unwrap();
        let back = KeyPair::from_secret_file_string(&keys.to_secret_file_string()).unwrap();
        assert_eq!(back.public, keys.public);
        let public = PublicKey::from_file_string(&keys.public.to_file_string()).unwrap();
        assert_eq!(public, keys.public);
        assert!(PublicKey::from_file_string(&keys.to_secret_file_string()).is_err());
        assert!(KeyPair::from_secret_file_string("meshguard-secret-key-v1\nabcd\n").is_err());
    }
}
