//! Forwarding Commitments: signed per-pathlet routing intent.
//!
//! An FC binds the tuple (previous AS, current AS, next AS, prefix) under the
//! current AS's key. The prefix is not carried in the FC itself; it is
//! supplied by the enclosing BGP update's NLRI at verification time.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::SecretKey;
use crate::trust::{AsNumber, Prefix, TrustBase};

pub const DIGEST_LEN: usize = 32;

/// A ⟨previous, current, next⟩ hop on an AS path, together with the prefix the
/// route is for. `previous` is [`AsNumber::NULL`] for an origin pathlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pathlet {
    pub previous: AsNumber,
    pub current: AsNumber,
    pub next: AsNumber,
    pub prefix: Prefix,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FcError {
    #[error("invalid pathlet {0:?}: {1}")]
    InvalidPathlet(String, &'static str),
    #[error("signer {signer} does not match pathlet current AS {current}")]
    SignerMismatch { signer: AsNumber, current: AsNumber },
    #[error("malformed FC text: {0}")]
    Text(String),
}

impl Pathlet {
    pub fn new(
        previous: AsNumber,
        current: AsNumber,
        next: AsNumber,
        prefix: Prefix,
    ) -> Result<Self, FcError> {
        let p = Pathlet {
            previous,
            current,
            next,
            prefix,
        };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<(), FcError> {
        let fail = |reason| {
            Err(FcError::InvalidPathlet(
                format!("{}<-{}<-{}", self.previous, self.current, self.next),
                reason,
            ))
        };
        if self.current.is_null() {
            return fail("current AS must not be Null");
        }
        if self.next.is_null() {
            return fail("next AS must not be Null");
        }
        if self.current == self.next {
            return fail("current and next AS must differ");
        }
        if self.previous == self.current {
            return fail("previous and current AS must differ");
        }
        Ok(())
    }
}

/// Canonical digest input: previous ‖ current ‖ next as 4-octet big-endian
/// integers, then the prefix address bytes, then a 1-octet mask length.
/// SHA-256 is the repo-wide digest algorithm.
pub fn canonical_digest(pathlet: &Pathlet) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update(pathlet.previous.0.to_be_bytes());
    h.update(pathlet.current.0.to_be_bytes());
    h.update(pathlet.next.0.to_be_bytes());
    h.update(pathlet.prefix.address_bytes());
    h.update([pathlet.prefix.mask_len()]);
    h.finalize().into()
}

/// Signed commitment of `current` to carry traffic for a prefix over the
/// `current -> next` hop after learning the route from `previous`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ForwardingCommitment {
    pub previous: AsNumber,
    pub current: AsNumber,
    pub next: AsNumber,
    pub signature: Vec<u8>,
}

impl ForwardingCommitment {
    /// The pathlet this FC claims to cover, in the context of `prefix`.
    pub fn pathlet(&self, prefix: Prefix) -> Result<Pathlet, FcError> {
        Pathlet::new(self.previous, self.current, self.next, prefix)
    }

    pub fn tuple(&self) -> (AsNumber, AsNumber, AsNumber) {
        (self.previous, self.current, self.next)
    }
}

impl fmt::Debug for ForwardingCommitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FC{{{},{},{}}}",
            self.previous, self.current, self.next
        )
    }
}

/// Hex textual form `prev:cur:next:sig-hex` for fixtures and logs.
impl fmt::Display for ForwardingCommitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.previous.0,
            self.current.0,
            self.next.0,
            hex::encode(&self.signature)
        )
    }
}

impl FromStr for ForwardingCommitment {
    type Err = FcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(FcError::Text(s.to_string()));
        }
        let asn = |t: &str| -> Result<AsNumber, FcError> {
            t.parse::<u32>()
                .map(AsNumber)
                .map_err(|_| FcError::Text(s.to_string()))
        };
        Ok(ForwardingCommitment {
            previous: asn(parts[0])?,
            current: asn(parts[1])?,
            next: asn(parts[2])?,
            signature: hex::decode(parts[3]).map_err(|_| FcError::Text(s.to_string()))?,
        })
    }
}

/// Signs an FC for `pathlet`. `signer` must be the pathlet's current AS.
pub fn sign_fc(
    signer: AsNumber,
    pathlet: &Pathlet,
    key: &SecretKey,
) -> Result<ForwardingCommitment, FcError> {
    pathlet.check()?;
    if signer != pathlet.current {
        return Err(FcError::SignerMismatch {
            signer,
            current: pathlet.current,
        });
    }
    let digest = canonical_digest(pathlet);
    Ok(ForwardingCommitment {
        previous: pathlet.previous,
        current: pathlet.current,
        next: pathlet.next,
        signature: key.sign(&digest),
    })
}

/// True iff the digest recomputed from (fc.previous, fc.current, fc.next,
/// prefix) verifies under fc.current's registered key. Unknown or legacy ASes
/// map to false: they cannot have issued a valid FC.
pub fn verify_fc(fc: &ForwardingCommitment, prefix: Prefix, trust: &TrustBase) -> bool {
    let Ok(pathlet) = fc.pathlet(prefix) else {
        return false;
    };
    let digest = canonical_digest(&pathlet);
    trust
        .verify_key(fc.current, &fc.signature, &digest)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trust::TrustBase;

    fn prefix(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn setup() -> (TrustBase, crate::trust::KeyStore) {
        TrustBase::load("1||1|auto\n2||1|auto\n3||1|auto\n", b"fc-tests").unwrap()
    }

    #[test]
    fn digest_is_deterministic() {
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), prefix("10.0.0.0/24")).unwrap();
        assert_eq!(canonical_digest(&p), canonical_digest(&p));
    }

    #[test]
    fn all_six_permutations_distinct() {
        let pfx = prefix("10.0.0.0/24");
        let asns = [AsNumber(1), AsNumber(2), AsNumber(3)];
        let mut digests = std::collections::BTreeSet::new();
        for &a in &asns {
            for &b in &asns {
                for &c in &asns {
                    if a != b && b != c && a != c {
                        let p = Pathlet::new(a, b, c, pfx).unwrap();
                        digests.insert(canonical_digest(&p));
                    }
                }
            }
        }
        assert_eq!(digests.len(), 6);
    }

    #[test]
    fn null_previous_is_well_defined() {
        let p = Pathlet::new(AsNumber::NULL, AsNumber(1), AsNumber(2), prefix("10.0.0.0/24"))
            .unwrap();
        let q = Pathlet::new(AsNumber(3), AsNumber(1), AsNumber(2), prefix("10.0.0.0/24")).unwrap();
        assert_ne!(canonical_digest(&p), canonical_digest(&q));
        // Null is only legal in the previous slot.
        assert!(Pathlet::new(AsNumber(1), AsNumber::NULL, AsNumber(2), prefix("10.0.0.0/24"))
            .is_err());
        assert!(Pathlet::new(AsNumber(1), AsNumber(2), AsNumber::NULL, prefix("10.0.0.0/24"))
            .is_err());
    }

    #[test]
    fn sign_and_verify_roundtrip() {
        let (trust, keys) = setup();
        let pfx = prefix("10.0.0.0/24");
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), pfx).unwrap();
        let fc = sign_fc(AsNumber(2), &p, keys.get(AsNumber(2)).unwrap()).unwrap();
        assert_eq!(fc.tuple(), (AsNumber(1), AsNumber(2), AsNumber(3)));
        assert!(verify_fc(&fc, pfx, &trust));
    }

    #[test]
    fn origin_fc() {
        let (trust, keys) = setup();
        let pfx = prefix("10.0.0.0/24");
        let p = Pathlet::new(AsNumber::NULL, AsNumber(1), AsNumber(2), pfx).unwrap();
        let fc = sign_fc(AsNumber(1), &p, keys.get(AsNumber(1)).unwrap()).unwrap();
        assert!(verify_fc(&fc, pfx, &trust));
    }

    #[test]
    fn signer_mismatch_rejected() {
        let (_, keys) = setup();
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), prefix("10.0.0.0/24")).unwrap();
        let err = sign_fc(AsNumber(3), &p, keys.get(AsNumber(3)).unwrap()).unwrap_err();
        assert!(matches!(err, FcError::SignerMismatch { .. }));
    }

    #[test]
    fn wrong_prefix_fails() {
        let (trust, keys) = setup();
        let p1 = prefix("10.0.0.0/24");
        let p2 = prefix("10.0.1.0/24");
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), p1).unwrap();
        let fc = sign_fc(AsNumber(2), &p, keys.get(AsNumber(2)).unwrap()).unwrap();
        assert!(verify_fc(&fc, p1, &trust));
        assert!(!verify_fc(&fc, p2, &trust));
    }

    #[test]
    fn tampered_fields_fail() {
        let (trust, keys) = setup();
        let pfx = prefix("10.0.0.0/24");
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), pfx).unwrap();
        let fc = sign_fc(AsNumber(2), &p, keys.get(AsNumber(2)).unwrap()).unwrap();

        let mut tampered = fc.clone();
        tampered.next = AsNumber(9);
        assert!(!verify_fc(&tampered, pfx, &trust));

        let mut tampered = fc.clone();
        tampered.previous = AsNumber(9);
        assert!(!verify_fc(&tampered, pfx, &trust));

        // current=9 is unknown to the trust base
        let mut tampered = fc.clone();
        tampered.current = AsNumber(9);
        assert!(!verify_fc(&tampered, pfx, &trust));
    }

    #[test]
    fn text_roundtrip() {
        let (_, keys) = setup();
        let p = Pathlet::new(AsNumber(1), AsNumber(2), AsNumber(3), prefix("10.0.0.0/24")).unwrap();
        let fc = sign_fc(AsNumber(2), &p, keys.get(AsNumber(2)).unwrap()).unwrap();
        let parsed: ForwardingCommitment = fc.to_string().parse().unwrap();
        assert_eq!(parsed, fc);
    }
}
