//! In-process stand-in for RPKI: the authoritative mapping from AS numbers to
//! owned prefixes, public keys, and deployment status. Read-only once loaded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{PublicKey, SecretKey, PUBLIC_KEY_LEN};

/// 32-bit AS number. Zero is reserved: it encodes the "Null" previous-AS of an
/// origin pathlet and never appears as a current or next AS.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsNumber(pub u32);

impl AsNumber {
    pub const NULL: AsNumber = AsNumber(0);

    pub fn is_null(&self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for AsNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            f.write_str("Null")
        } else {
            write!(f, "AS{}", self.0)
        }
    }
}

impl fmt::Debug for AsNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<u32> for AsNumber {
    fn from(v: u32) -> Self {
        AsNumber(v)
    }
}

/// An IPv4 or IPv6 prefix in canonical form: bits beyond the mask length are
/// zero.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    addr: [u8; 16],
    /// 4 or 16.
    addr_len: u8,
    mask_len: u8,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("invalid prefix syntax: {0}")]
    Syntax(String),
    #[error("mask length {mask} out of range for {bits}-bit address")]
    MaskRange { mask: u8, bits: u16 },
}

impl Prefix {
    pub fn new(addr: IpAddr, mask_len: u8) -> Result<Self, PrefixError> {
        let (bytes, addr_len) = match addr {
            IpAddr::V4(a) => {
                let mut b = [0u8; 16];
                b[..4].copy_from_slice(&a.octets());
                (b, 4u8)
            }
            IpAddr::V6(a) => (a.octets(), 16u8),
        };
        if mask_len > addr_len * 8 {
            return Err(PrefixError::MaskRange {
                mask: mask_len,
                bits: addr_len as u16 * 8,
            });
        }
        let mut p = Prefix {
            addr: bytes,
            addr_len,
            mask_len,
        };
        p.canonicalize();
        Ok(p)
    }

    pub fn from_bytes(bytes: &[u8], mask_len: u8) -> Result<Self, PrefixError> {
        match bytes.len() {
            4 => {
                let mut a = [0u8; 4];
                a.copy_from_slice(bytes);
                Self::new(IpAddr::from(a), mask_len)
            }
            16 => {
                let mut a = [0u8; 16];
                a.copy_from_slice(bytes);
                Self::new(IpAddr::from(a), mask_len)
            }
            n => Err(PrefixError::Syntax(format!("{n}-byte address"))),
        }
    }

    fn canonicalize(&mut self) {
        let full = (self.mask_len / 8) as usize;
        let rem = self.mask_len % 8;
        let len = self.addr_len as usize;
        if full < len {
            if rem != 0 {
                self.addr[full] &= 0xffu8 << (8 - rem);
                for b in &mut self.addr[full + 1..len] {
                    *b = 0;
                }
            } else {
                for b in &mut self.addr[full..len] {
                    *b = 0;
                }
            }
        }
    }

    /// Address bytes: 4 octets for IPv4, 16 for IPv6.
    pub fn address_bytes(&self) -> &[u8] {
        &self.addr[..self.addr_len as usize]
    }

    pub fn mask_len(&self) -> u8 {
        self.mask_len
    }

    pub fn is_v4(&self) -> bool {
        self.addr_len == 4
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, mask) = s
            .split_once('/')
            .ok_or_else(|| PrefixError::Syntax(s.to_string()))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| PrefixError::Syntax(s.to_string()))?;
        let mask: u8 = mask
            .parse()
            .map_err(|_| PrefixError::Syntax(s.to_string()))?;
        Prefix::new(addr, mask)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_v4() {
            let mut a = [0u8; 4];
            a.copy_from_slice(self.address_bytes());
            write!(f, "{}/{}", IpAddr::from(a), self.mask_len)
        } else {
            write!(f, "{}/{}", IpAddr::from(self.addr), self.mask_len)
        }
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// One AS entry in the trust base.
#[derive(Debug, Clone)]
pub struct TrustRecord {
    pub asn: AsNumber,
    pub prefixes: BTreeSet<Prefix>,
    pub public_key: Option<PublicKey>,
    pub deployed: bool,
}

#[derive(Debug, Error)]
pub enum TrustError {
    #[error("AS {0} is not registered")]
    UnknownAs(AsNumber),
    #[error("prefix {prefix} already owned by {owner}, cannot assign to {claimant}")]
    OwnershipConflict {
        prefix: Prefix,
        owner: AsNumber,
        claimant: AsNumber,
    },
    #[error("deployed AS {0} has no public key")]
    MissingKey(AsNumber),
    #[error("trust file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Authoritative AS registry shared read-only by every simulated AS.
#[derive(Debug, Clone, Default)]
pub struct TrustBase {
    records: BTreeMap<AsNumber, TrustRecord>,
    owners: BTreeMap<Prefix, AsNumber>,
}

impl TrustBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, record: TrustRecord) -> Result<(), TrustError> {
        if record.deployed && record.public_key.is_none() {
            return Err(TrustError::MissingKey(record.asn));
        }
        for prefix in &record.prefixes {
            if let Some(&owner) = self.owners.get(prefix) {
                if owner != record.asn {
                    return Err(TrustError::OwnershipConflict {
                        prefix: *prefix,
                        owner,
                        claimant: record.asn,
                    });
                }
            }
        }
        for prefix in &record.prefixes {
            self.owners.insert(*prefix, record.asn);
        }
        self.records.insert(record.asn, record);
        Ok(())
    }

    pub fn lookup_owner(&self, prefix: &Prefix) -> Option<AsNumber> {
        self.owners.get(prefix).copied()
    }

    /// Unknown ASes report not-deployed.
    pub fn is_deployed(&self, asn: AsNumber) -> bool {
        self.records.get(&asn).map(|r| r.deployed).unwrap_or(false)
    }

    pub fn public_key(&self, asn: AsNumber) -> Option<&PublicKey> {
        self.records.get(&asn).and_then(|r| r.public_key.as_ref())
    }

    pub fn record(&self, asn: AsNumber) -> Option<&TrustRecord> {
        self.records.get(&asn)
    }

    pub fn ases(&self) -> impl Iterator<Item = AsNumber> + '_ {
        self.records.keys().copied()
    }

    pub fn verify_key(
        &self,
        asn: AsNumber,
        signature: &[u8],
        message_digest: &[u8],
    ) -> Result<bool, TrustError> {
        let record = self.records.get(&asn).ok_or(TrustError::UnknownAs(asn))?;
        let key = record.public_key.ok_or(TrustError::MissingKey(asn))?;
        Ok(key.verify(message_digest, signature))
    }

    /// Parses the line-oriented trust file format:
    ///
    /// ```text
    /// asn|prefix[,prefix...]|deployed(0/1)|pubkey-hex
    /// ```
    ///
    /// A pubkey field of `auto` derives a key pair from `master_seed`; the
    /// generated secrets are returned in the [`KeyStore`]. `-` means no key
    /// (legacy AS). Blank lines and lines starting with `#` are skipped.
    pub fn load(text: &str, master_seed: &[u8]) -> Result<(TrustBase, KeyStore), TrustError> {
        let mut base = TrustBase::new();
        let mut keys = KeyStore::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('|').collect();
            if fields.len() != 4 {
                return Err(TrustError::Parse {
                    line,
                    reason: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let asn: u32 = fields[0].parse().map_err(|_| TrustError::Parse {
                line,
                reason: format!("bad ASN {:?}", fields[0]),
            })?;
            let asn = AsNumber(asn);
            let mut prefixes = BTreeSet::new();
            if !fields[1].is_empty() {
                for p in fields[1].split(',') {
                    let prefix: Prefix = p.parse().map_err(|e| TrustError::Parse {
                        line,
                        reason: format!("{e}"),
                    })?;
                    prefixes.insert(prefix);
                }
            }
            let deployed = match fields[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(TrustError::Parse {
                        line,
                        reason: format!("deployed flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let public_key = match fields[3] {
                "-" => None,
                "auto" => {
                    let secret = SecretKey::derive(master_seed, asn.0);
                    let public = secret.public();
                    keys.insert(asn, secret);
                    Some(public)
                }
                hex_key => {
                    let bytes = hex::decode(hex_key).map_err(|_| TrustError::Parse {
                        line,
                        reason: "bad pubkey hex".into(),
                    })?;
                    let bytes: [u8; PUBLIC_KEY_LEN] =
                        bytes.try_into().map_err(|_| TrustError::Parse {
                            line,
                            reason: format!("pubkey must be {PUBLIC_KEY_LEN} bytes"),
                        })?;
                    Some(PublicKey::from_bytes(bytes))
                }
            };
            base.register(TrustRecord {
                asn,
                prefixes,
                public_key,
                deployed,
            })?;
        }
        Ok((base, keys))
    }
}

/// Private keys for the simulated ASes. Only the simulator holds this; the
/// trust base itself never sees a secret.
#[derive(Debug, Clone, Default)]
pub struct KeyStore {
    keys: BTreeMap<AsNumber, SecretKey>,
}

impl KeyStore {
    pub fn insert(&mut self, asn: AsNumber, key: SecretKey) {
        self.keys.insert(asn, key);
    }

    pub fn get(&self, asn: AsNumber) -> Option<&SecretKey> {
        self.keys.get(&asn)
    }
}
