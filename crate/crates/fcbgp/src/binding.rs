//! Forward-binding messages and the per-AS packet filter table.
//!
//! An on-path binding ties traffic ⟨src-prefix, dst-prefix⟩ to the FC-certified
//! forwarding path; the off-path form carries no FC list and just tells the
//! receiver to discard that flow. Versioning: ver = −1 withdrawal, 0 startup,
//! ≥ 1 normal; ver-sub > 0 marks a subversion issued by an on-path AS after a
//! partial path change. For a withdrawal the ver-sub field carries the master
//! version being withdrawn, so replayed old withdrawals cannot kill fresh
//! rules.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::crypto::SecretKey;
use crate::fc::{verify_fc, ForwardingCommitment};
use crate::trust::{AsNumber, Prefix, TrustBase};
use crate::wire::{parse_fc_records, WireError};

pub const VER_WITHDRAWAL: i64 = -1;
pub const VER_STARTUP: i64 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingMessage {
    pub src_prefix: Prefix,
    pub dst_prefix: Prefix,
    /// Empty for the off-path form. When ver ≥ 1, ordered from the hop
    /// nearest the traffic source toward the destination origin.
    pub fc_list: Vec<ForwardingCommitment>,
    pub ver: i64,
    pub ver_sub: u32,
    pub issuer: AsNumber,
    /// Over all preceding fields, under the issuer's key.
    pub signature: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("issuer {issuer} does not own source prefix {prefix}")]
    NotOwner { issuer: AsNumber, prefix: Prefix },
    #[error("FC list does not verify for destination prefix {0}")]
    BadFcList(Prefix),
    #[error("issuer {0} is not on the original path")]
    NotOnPath(AsNumber),
    #[error("withdrawn master version {0} does not fit the carrier field")]
    VersionRange(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BadSignature,
    NotOwner,
    NoSelfFc,
    BadFc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    AcceptedOnPath,
    AcceptedOffPath,
    Rejected(RejectReason),
}

fn prefix_bytes(prefix: &Prefix, out: &mut Vec<u8>) {
    let addr = prefix.address_bytes();
    out.push(addr.len() as u8);
    out.extend_from_slice(addr);
    out.push(prefix.mask_len());
}

/// Canonical byte form of everything the signature covers.
fn signed_bytes(msg: &BindingMessage) -> Vec<u8> {
    let mut out = Vec::new();
    prefix_bytes(&msg.src_prefix, &mut out);
    prefix_bytes(&msg.dst_prefix, &mut out);
    out.extend_from_slice(&(msg.fc_list.len() as u16).to_be_bytes());
    for fc in &msg.fc_list {
        out.extend_from_slice(&fc.previous.0.to_be_bytes());
        out.extend_from_slice(&fc.current.0.to_be_bytes());
        out.extend_from_slice(&fc.next.0.to_be_bytes());
        out.extend_from_slice(&(fc.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&fc.signature);
    }
    out.extend_from_slice(&msg.ver.to_be_bytes());
    out.extend_from_slice(&msg.ver_sub.to_be_bytes());
    out.extend_from_slice(&msg.issuer.0.to_be_bytes());
    out
}

fn sign(mut msg: BindingMessage, key: &SecretKey) -> BindingMessage {
    msg.signature = key.sign(&signed_bytes(&msg));
    msg
}

/// Source-issued on-path binding (ver ≥ 1, ver-sub = 0). `fcs` must be in
/// binding order (hop nearest the traffic source first) and verify for
/// `dst_prefix`.
pub fn make_onpath_binding(
    issuer: AsNumber,
    src_prefix: Prefix,
    dst_prefix: Prefix,
    fcs: Vec<ForwardingCommitment>,
    ver: i64,
    key: &SecretKey,
    trust: &TrustBase,
) -> Result<BindingMessage, BindingError> {
    if trust.lookup_owner(&src_prefix) != Some(issuer) {
        return Err(BindingError::NotOwner {
            issuer,
            prefix: src_prefix,
        });
    }
    if ver >= 1 && !fcs.iter().all(|fc| verify_fc(fc, dst_prefix, trust)) {
        return Err(BindingError::BadFcList(dst_prefix));
    }
    Ok(sign(
        BindingMessage {
            src_prefix,
            dst_prefix,
            fc_list: fcs,
            ver,
            ver_sub: 0,
            issuer,
            signature: Vec::new(),
        },
        key,
    ))
}

/// Off-path form: no FC list (Eq. 3 shape).
pub fn make_offpath_binding(
    issuer: AsNumber,
    src_prefix: Prefix,
    dst_prefix: Prefix,
    ver: i64,
    key: &SecretKey,
    trust: &TrustBase,
) -> Result<BindingMessage, BindingError> {
    if trust.lookup_owner(&src_prefix) != Some(issuer) {
        return Err(BindingError::NotOwner {
            issuer,
            prefix: src_prefix,
        });
    }
    Ok(sign(
        BindingMessage {
            src_prefix,
            dst_prefix,
            fc_list: Vec::new(),
            ver,
            ver_sub: 0,
            issuer,
            signature: Vec::new(),
        },
        key,
    ))
}

/// Startup binding (ver = 0): the FC list is the inverse sequence of the BGP
/// AS path, as unsigned placeholder FCs. `route_path` is the stored AS path,
/// origin first, not including the issuer.
pub fn make_startup_binding(
    issuer: AsNumber,
    src_prefix: Prefix,
    dst_prefix: Prefix,
    route_path: &[AsNumber],
    key: &SecretKey,
    trust: &TrustBase,
) -> Result<BindingMessage, BindingError> {
    let fcs = inverse_path_fcs(route_path, issuer);
    make_onpath_binding_unchecked_list(issuer, src_prefix, dst_prefix, fcs, VER_STARTUP, key, trust)
}

fn make_onpath_binding_unchecked_list(
    issuer: AsNumber,
    src_prefix: Prefix,
    dst_prefix: Prefix,
    fcs: Vec<ForwardingCommitment>,
    ver: i64,
    key: &SecretKey,
    trust: &TrustBase,
) -> Result<BindingMessage, BindingError> {
    if trust.lookup_owner(&src_prefix) != Some(issuer) {
        return Err(BindingError::NotOwner {
            issuer,
            prefix: src_prefix,
        });
    }
    Ok(sign(
        BindingMessage {
            src_prefix,
            dst_prefix,
            fc_list: fcs,
            ver,
            ver_sub: 0,
            issuer,
            signature: Vec::new(),
        },
        key,
    ))
}

/// Placeholder FC tuples for the reversed AS path, nearest-source hop first.
pub fn inverse_path_fcs(route_path: &[AsNumber], issuer: AsNumber) -> Vec<ForwardingCommitment> {
    let n = route_path.len();
    (0..n)
        .rev()
        .map(|i| ForwardingCommitment {
            previous: if i == 0 { AsNumber::NULL } else { route_path[i - 1] },
            current: route_path[i],
            next: if i + 1 < n { route_path[i + 1] } else { issuer },
            signature: Vec::new(),
        })
        .collect()
}

/// Withdrawal (ver = −1): removes the filter for the pair. The withdrawn
/// master version travels in the ver-sub field.
pub fn make_withdrawal(
    issuer: AsNumber,
    src_prefix: Prefix,
    dst_prefix: Prefix,
    withdrawn_master: i64,
    key: &SecretKey,
) -> Result<BindingMessage, BindingError> {
    let carried =
        u32::try_from(withdrawn_master).map_err(|_| BindingError::VersionRange(withdrawn_master))?;
    Ok(sign(
        BindingMessage {
            src_prefix,
            dst_prefix,
            fc_list: Vec::new(),
            ver: VER_WITHDRAWAL,
            ver_sub: carried,
            issuer,
            signature: Vec::new(),
        },
        key,
    ))
}

/// Subversion update issued by on-path AS `issuer` after a partial path
/// change: hops strictly between the traffic source and the issuer are kept,
/// the issuer's own hop onward is replaced by `new_tail_fcs`. The master
/// version is preserved and ver-sub is bumped.
pub fn subversion_update(
    issuer: AsNumber,
    original: &BindingMessage,
    new_tail_fcs: Vec<ForwardingCommitment>,
    key: &SecretKey,
) -> Result<BindingMessage, BindingError> {
    let boundary = original
        .fc_list
        .iter()
        .position(|fc| fc.current == issuer)
        .ok_or(BindingError::NotOnPath(issuer))?;
    let mut fc_list: Vec<ForwardingCommitment> = original.fc_list[..boundary].to_vec();
    fc_list.extend(new_tail_fcs);
    Ok(sign(
        BindingMessage {
            src_prefix: original.src_prefix,
            dst_prefix: original.dst_prefix,
            fc_list,
            ver: original.ver,
            ver_sub: original.ver_sub + 1,
            issuer,
            signature: Vec::new(),
        },
        key,
    ))
}

/// The three checks of binding verification. Startup messages (ver = 0) skip
/// cryptographic FC verification; subversion messages (ver-sub > 0) may be
/// issued by an on-path AS instead of the prefix owner.
pub fn verify_binding(msg: &BindingMessage, self_asn: AsNumber, trust: &TrustBase) -> VerifyOutcome {
    let ok = trust
        .verify_key(msg.issuer, &msg.signature, &signed_bytes(msg))
        .unwrap_or(false);
    if !ok {
        return VerifyOutcome::Rejected(RejectReason::BadSignature);
    }
    let owner = trust.lookup_owner(&msg.src_prefix) == Some(msg.issuer);
    let onpath_issuer = msg.ver_sub > 0 && msg.fc_list.iter().any(|fc| fc.current == msg.issuer);
    if !owner && !onpath_issuer {
        return VerifyOutcome::Rejected(RejectReason::NotOwner);
    }
    if msg.fc_list.is_empty() {
        return VerifyOutcome::AcceptedOffPath;
    }
    if self_asn != msg.issuer && !msg.fc_list.iter().any(|fc| fc.current == self_asn) {
        return VerifyOutcome::Rejected(RejectReason::NoSelfFc);
    }
    if msg.ver != VER_STARTUP
        && !msg
            .fc_list
            .iter()
            .all(|fc| verify_fc(fc, msg.dst_prefix, trust))
    {
        return VerifyOutcome::Rejected(RejectReason::BadFc);
    }
    VerifyOutcome::AcceptedOnPath
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// Traffic for the pair must arrive from this neighbor; `None` means the
    /// flow originates locally and must never arrive from any neighbor.
    OnPath { expected_inbound: Option<AsNumber> },
    /// Off-path: discard the flow outright.
    OffPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterRule {
    pub src_prefix: Prefix,
    pub dst_prefix: Prefix,
    pub mode: FilterMode,
    pub source_version: (i64, u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstallError {
    #[error("message version {got:?} not newer than installed {installed:?}")]
    Stale {
        got: (i64, u32),
        installed: (i64, u32),
    },
    #[error("message was not accepted")]
    NotAccepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstallAction {
    Installed,
    Replaced,
    Removed,
    NoRule,
}

/// Per-AS filter rule table: exactly one rule per (src, dst) pair, the one
/// with the lexicographically highest (ver, ver-sub).
#[derive(Debug, Clone, Default)]
pub struct FilterTable {
    rules: BTreeMap<(Prefix, Prefix), FilterRule>,
}

impl FilterTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(&self, src: &Prefix, dst: &Prefix) -> Option<&FilterRule> {
        self.rules.get(&(*src, *dst))
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Line-delimited dump for assertions.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for rule in self.rules.values() {
            let mode = match rule.mode {
                FilterMode::OnPath {
                    expected_inbound: Some(n),
                } => format!("on-path inbound={}", n.0),
                FilterMode::OnPath {
                    expected_inbound: None,
                } => "on-path local".to_string(),
                FilterMode::OffPath => "off-path".to_string(),
            };
            out.push_str(&format!(
                "src={} dst={} {} ver={}.{}\n",
                rule.src_prefix, rule.dst_prefix, mode, rule.source_version.0, rule.source_version.1
            ));
        }
        out
    }

    /// Installs (or removes, for ver = −1) the rule for an accepted message.
    pub fn install(
        &mut self,
        msg: &BindingMessage,
        outcome: VerifyOutcome,
        self_asn: AsNumber,
    ) -> Result<InstallAction, InstallError> {
        let key = (msg.src_prefix, msg.dst_prefix);
        if matches!(outcome, VerifyOutcome::Rejected(_)) {
            return Err(InstallError::NotAccepted);
        }
        if msg.ver == VER_WITHDRAWAL {
            let withdrawn = msg.ver_sub as i64;
            return match self.rules.get(&key) {
                Some(rule) if withdrawn >= rule.source_version.0 => {
                    self.rules.remove(&key);
                    Ok(InstallAction::Removed)
                }
                Some(rule) => Err(InstallError::Stale {
                    got: (VER_WITHDRAWAL, msg.ver_sub),
                    installed: rule.source_version,
                }),
                None => Ok(InstallAction::NoRule),
            };
        }
        let version = (msg.ver, msg.ver_sub);
        if let Some(existing) = self.rules.get(&key) {
            if existing.source_version >= version {
                return Err(InstallError::Stale {
                    got: version,
                    installed: existing.source_version,
                });
            }
        }
        let mode = match outcome {
            VerifyOutcome::AcceptedOnPath => FilterMode::OnPath {
                expected_inbound: msg
                    .fc_list
                    .iter()
                    .find(|fc| fc.current == self_asn)
                    .map(|fc| fc.next),
            },
            VerifyOutcome::AcceptedOffPath => FilterMode::OffPath,
            VerifyOutcome::Rejected(_) => unreachable!(),
        };
        let replaced = self
            .rules
            .insert(
                key,
                FilterRule {
                    src_prefix: msg.src_prefix,
                    dst_prefix: msg.dst_prefix,
                    mode,
                    source_version: version,
                },
            )
            .is_some();
        Ok(if replaced {
            InstallAction::Replaced
        } else {
            InstallAction::Installed
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    WrongInbound,
    OffPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketDecision {
    Forward,
    Discard(DiscardReason),
}

/// Checks one packet against the rule table. Pairs without a rule default to
/// forward, so absent bindings never break legacy traffic.
pub fn check_packet(
    table: &FilterTable,
    src_prefix: &Prefix,
    dst_prefix: &Prefix,
    inbound_neighbor: AsNumber,
) -> PacketDecision {
    match table.rule(src_prefix, dst_prefix).map(|r| r.mode) {
        None => PacketDecision::Forward,
        Some(FilterMode::OffPath) => PacketDecision::Discard(DiscardReason::OffPath),
        Some(FilterMode::OnPath { expected_inbound }) => match expected_inbound {
            Some(expected) if expected == inbound_neighbor => PacketDecision::Forward,
            _ => PacketDecision::Discard(DiscardReason::WrongInbound),
        },
    }
}

/// Binary codec for binding messages; shares the FC record framing with the
/// BGP wire codec.
pub fn encode_binding(msg: &BindingMessage) -> Vec<u8> {
    let mut out = signed_bytes(msg);
    out.extend_from_slice(&(msg.signature.len() as u16).to_be_bytes());
    out.extend_from_slice(&msg.signature);
    out
}

pub fn decode_binding(bytes: &[u8]) -> Result<BindingMessage, WireError> {
    let malformed = |offset: usize, reason: &str| WireError::Malformed {
        offset,
        reason: reason.to_string(),
    };
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize, what: &str| -> Result<&[u8], WireError> {
        if bytes.len() - *at < n {
            return Err(WireError::Malformed {
                offset: *at,
                reason: format!("truncated {what}"),
            });
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let read_prefix = |at: &mut usize| -> Result<Prefix, WireError> {
        let len = take(at, 1, "address length")?[0] as usize;
        if len != 4 && len != 16 {
            return Err(WireError::Malformed {
                offset: *at - 1,
                reason: format!("bad address length {len}"),
            });
        }
        let addr = take(at, len, "address")?.to_vec();
        let mask = take(at, 1, "mask length")?[0];
        Prefix::from_bytes(&addr, mask).map_err(|e| WireError::Malformed {
            offset: *at,
            reason: e.to_string(),
        })
    };
    let src_prefix = read_prefix(&mut at)?;
    let dst_prefix = read_prefix(&mut at)?;
    let count = u16::from_be_bytes(take(&mut at, 2, "FC count")?.try_into().unwrap()) as usize;
    let fc_start = at;
    // FC records are length-delimited; reuse the shared parser by first
    // locating the end of the record region.
    let mut scan = at;
    for _ in 0..count {
        if bytes.len() - scan < 14 {
            return Err(malformed(scan, "truncated FC record"));
        }
        let sig_len =
            u16::from_be_bytes(bytes[scan + 12..scan + 14].try_into().unwrap()) as usize;
        scan += 14 + sig_len;
        if scan > bytes.len() {
            return Err(malformed(scan, "truncated FC signature"));
        }
    }
    let fc_list = parse_fc_records(&bytes[fc_start..scan], fc_start)?;
    at = scan;
    let ver = i64::from_be_bytes(take(&mut at, 8, "version")?.try_into().unwrap());
    let ver_sub = u32::from_be_bytes(take(&mut at, 4, "sub-version")?.try_into().unwrap());
    let issuer = AsNumber(u32::from_be_bytes(
        take(&mut at, 4, "issuer")?.try_into().unwrap(),
    ));
    let sig_len = u16::from_be_bytes(take(&mut at, 2, "signature length")?.try_into().unwrap());
    let signature = take(&mut at, sig_len as usize, "signature")?.to_vec();
    if at != bytes.len() {
        return Err(malformed(at, "trailing bytes"));
    }
    Ok(BindingMessage {
        src_prefix,
        dst_prefix,
        fc_list,
        ver,
        ver_sub,
        issuer,
        signature,
    })
}

impl fmt::Display for BindingMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "binding src={} dst={} ver={}.{} issuer={} fcs={}",
            self.src_prefix,
            self.dst_prefix,
            self.ver,
            self.ver_sub,
            self.issuer.0,
            self.fc_list.len()
        )
    }
}
