//! Binding version views and the periodic consistency check over Byzantine
//! reliable broadcast, with optional sharding into regions.
//!
//! Each AS keeps one monotone version counter covering all its binding
//! messages; a BVV maps AS number to the latest version seen. Round v's
//! leader broadcasts its BVV through an echo/ready RBC; members reconcile,
//! pull missing messages from the leader, and push newer ones back. A region
//! leader forwards the post-check BVV to every AS outside its region.

use std::collections::{BTreeMap, BTreeSet};

use crate::binding::{decode_binding, encode_binding, verify_binding, BindingMessage, VerifyOutcome, VER_WITHDRAWAL};
use crate::trust::{AsNumber, TrustBase};
use crate::wire::WireError;

/// The version a message advances its issuer's counter to. Withdrawals carry
/// the withdrawn master version in the sub-version field and participate
/// under that number, keeping views monotone.
pub fn message_version(msg: &BindingMessage) -> i64 {
    if msg.ver == VER_WITHDRAWAL {
        msg.ver_sub as i64
    } else {
        msg.ver
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BindingVersionView {
    pub entries: BTreeMap<AsNumber, i64>,
}

impl BindingVersionView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version_of(&self, asn: AsNumber) -> i64 {
        self.entries.get(&asn).copied().unwrap_or(0)
    }

    /// Raises the entry for `asn`; never lowers it.
    pub fn observe(&mut self, asn: AsNumber, ver: i64) {
        let e = self.entries.entry(asn).or_insert(0);
        if ver > *e {
            *e = ver;
        }
    }

    pub fn merge_max(&mut self, other: &BindingVersionView) {
        for (&asn, &ver) in &other.entries {
            self.observe(asn, ver);
        }
    }

    /// Payload codec: count ‖ (asn, ver)*, all big-endian. Carries version
    /// numbers only, never binding-message bodies.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.entries.len() * 12);
        out.extend_from_slice(&(self.entries.len() as u16).to_be_bytes());
        for (&asn, &ver) in &self.entries {
            out.extend_from_slice(&asn.0.to_be_bytes());
            out.extend_from_slice(&ver.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let malformed = |offset: usize, reason: &str| WireError::Malformed {
            offset,
            reason: reason.to_string(),
        };
        if bytes.len() < 2 {
            return Err(malformed(0, "truncated view count"));
        }
        let count = u16::from_be_bytes(bytes[..2].try_into().unwrap()) as usize;
        if bytes.len() != 2 + count * 12 {
            return Err(malformed(2, "view length does not match count"));
        }
        let mut entries = BTreeMap::new();
        for i in 0..count {
            let at = 2 + i * 12;
            let asn = AsNumber(u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()));
            let ver = i64::from_be_bytes(bytes[at + 4..at + 12].try_into().unwrap());
            entries.insert(asn, ver);
        }
        Ok(BindingVersionView { entries })
    }
}

/// members must be the canonically sorted region list.
pub fn leader_for_round(round: u64, members: &[AsNumber]) -> AsNumber {
    members[(round % members.len() as u64) as usize]
}

/// One Bracha-style broadcast instance for a (round, leader) pair.
/// Thresholds: echo on the first SEND; ready after ⌈(n+f+1)/2⌉ echoes or
/// f+1 readys; deliver after 2f+1 readys. Requires f < n/3.
#[derive(Debug, Clone)]
pub struct RbcInstance {
    n: usize,
    f: usize,
    sent_echo: bool,
    sent_ready: bool,
    echoes: BTreeMap<Vec<u8>, BTreeSet<AsNumber>>,
    readys: BTreeMap<Vec<u8>, BTreeSet<AsNumber>>,
    delivered: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RbcEmit {
    Echo(Vec<u8>),
    Ready(Vec<u8>),
    Deliver(Vec<u8>),
}

impl RbcInstance {
    pub fn new(n: usize, f: usize) -> Self {
        assert!(n > 3 * f, "RBC requires f < n/3");
        RbcInstance {
            n,
            f,
            sent_echo: false,
            sent_ready: false,
            echoes: BTreeMap::new(),
            readys: BTreeMap::new(),
            delivered: None,
        }
    }

    pub fn delivered(&self) -> Option<&[u8]> {
        self.delivered.as_deref()
    }

    fn echo_threshold(&self) -> usize {
        (self.n + self.f + 1).div_ceil(2)
    }

    pub fn on_send(&mut self, payload: &[u8]) -> Vec<RbcEmit> {
        if self.sent_echo {
            return Vec::new();
        }
        self.sent_echo = true;
        vec![RbcEmit::Echo(payload.to_vec())]
    }

    pub fn on_echo(&mut self, from: AsNumber, payload: &[u8]) -> Vec<RbcEmit> {
        self.echoes
            .entry(payload.to_vec())
            .or_default()
            .insert(from);
        self.maybe_ready_and_deliver(payload)
    }

    pub fn on_ready(&mut self, from: AsNumber, payload: &[u8]) -> Vec<RbcEmit> {
        self.readys
            .entry(payload.to_vec())
            .or_default()
            .insert(from);
        self.maybe_ready_and_deliver(payload)
    }

    fn maybe_ready_and_deliver(&mut self, payload: &[u8]) -> Vec<RbcEmit> {
        let mut out = Vec::new();
        let echoes = self.echoes.get(payload).map_or(0, BTreeSet::len);
        let readys = self.readys.get(payload).map_or(0, BTreeSet::len);
        if !self.sent_ready && (echoes >= self.echo_threshold() || readys >= self.f + 1) {
            self.sent_ready = true;
            out.push(RbcEmit::Ready(payload.to_vec()));
        }
        if self.delivered.is_none() && readys >= 2 * self.f + 1 {
            self.delivered = Some(payload.to_vec());
            out.push(RbcEmit::Deliver(payload.to_vec()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncAction {
    /// Case 1: the delivered view is ahead; pull the missed range from the
    /// leader.
    RequestMissing {
        asn: AsNumber,
        from_ver: i64,
        to_ver: i64,
    },
    /// Case 3: the local view is ahead; push the newer messages to the
    /// leader.
    SendNewer { asn: AsNumber, ver: i64 },
}

pub fn reconcile(local: &BindingVersionView, delivered: &BindingVersionView) -> Vec<SyncAction> {
    let mut asns: BTreeSet<AsNumber> = local.entries.keys().copied().collect();
    asns.extend(delivered.entries.keys().copied());
    let mut actions = Vec::new();
    for asn in asns {
        let l = local.version_of(asn);
        let d = delivered.version_of(asn);
        if d > l {
            actions.push(SyncAction::RequestMissing {
                asn,
                from_ver: l + 1,
                to_ver: d,
            });
        } else if l > d {
            actions.push(SyncAction::SendNewer { asn, ver: l });
        }
    }
    actions
}

pub const SYNC_TAG_SEND: u8 = 1;
pub const SYNC_TAG_ECHO: u8 = 2;
pub const SYNC_TAG_READY: u8 = 3;
pub const SYNC_TAG_REQUEST: u8 = 4;
pub const SYNC_TAG_SUPPLY: u8 = 5;
pub const SYNC_TAG_FORWARD: u8 = 6;

/// One sync-plane wire record. SEND/ECHO/READY carry a BVV through the RBC;
/// REQUEST/SUPPLY repair missing binding messages; FORWARD carries a
/// post-check BVV across region boundaries outside any RBC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncRecord {
    pub round: u64,
    pub leader: AsNumber,
    pub kind: SyncKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncKind {
    Send(BindingVersionView),
    Echo(BindingVersionView),
    Ready(BindingVersionView),
    Request {
        asn: AsNumber,
        from_ver: i64,
        to_ver: i64,
    },
    Supply(Vec<BindingMessage>),
    Forward(BindingVersionView),
}

pub fn encode_sync(rec: &SyncRecord) -> Vec<u8> {
    let (tag, payload) = match &rec.kind {
        SyncKind::Send(v) => (SYNC_TAG_SEND, v.encode()),
        SyncKind::Echo(v) => (SYNC_TAG_ECHO, v.encode()),
        SyncKind::Ready(v) => (SYNC_TAG_READY, v.encode()),
        SyncKind::Request {
            asn,
            from_ver,
            to_ver,
        } => {
            let mut p = Vec::with_capacity(20);
            p.extend_from_slice(&asn.0.to_be_bytes());
            p.extend_from_slice(&from_ver.to_be_bytes());
            p.extend_from_slice(&to_ver.to_be_bytes());
            (SYNC_TAG_REQUEST, p)
        }
        SyncKind::Supply(msgs) => {
            let mut p = Vec::new();
            p.extend_from_slice(&(msgs.len() as u16).to_be_bytes());
            for m in msgs {
                let body = encode_binding(m);
                p.extend_from_slice(&(body.len() as u32).to_be_bytes());
                p.extend_from_slice(&body);
            }
            (SYNC_TAG_SUPPLY, p)
        }
        SyncKind::Forward(v) => (SYNC_TAG_FORWARD, v.encode()),
    };
    let mut out = Vec::with_capacity(17 + payload.len());
    out.push(tag);
    out.extend_from_slice(&rec.round.to_be_bytes());
    out.extend_from_slice(&rec.leader.0.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn decode_sync(bytes: &[u8]) -> Result<SyncRecord, WireError> {
    let malformed = |offset: usize, reason: &str| WireError::Malformed {
        offset,
        reason: reason.to_string(),
    };
    if bytes.len() < 17 {
        return Err(malformed(0, "truncated sync header"));
    }
    let tag = bytes[0];
    let round = u64::from_be_bytes(bytes[1..9].try_into().unwrap());
    let leader = AsNumber(u32::from_be_bytes(bytes[9..13].try_into().unwrap()));
    let len = u32::from_be_bytes(bytes[13..17].try_into().unwrap()) as usize;
    if bytes.len() != 17 + len {
        return Err(malformed(13, "payload length mismatch"));
    }
    let p = &bytes[17..];
    let kind = match tag {
        SYNC_TAG_SEND => SyncKind::Send(BindingVersionView::decode(p)?),
        SYNC_TAG_ECHO => SyncKind::Echo(BindingVersionView::decode(p)?),
        SYNC_TAG_READY => SyncKind::Ready(BindingVersionView::decode(p)?),
        SYNC_TAG_REQUEST => {
            if p.len() != 20 {
                return Err(malformed(17, "bad request payload length"));
            }
            SyncKind::Request {
                asn: AsNumber(u32::from_be_bytes(p[..4].try_into().unwrap())),
                from_ver: i64::from_be_bytes(p[4..12].try_into().unwrap()),
                to_ver: i64::from_be_bytes(p[12..20].try_into().unwrap()),
            }
        }
        SYNC_TAG_SUPPLY => {
            if p.len() < 2 {
                return Err(malformed(17, "truncated supply count"));
            }
            let count = u16::from_be_bytes(p[..2].try_into().unwrap()) as usize;
            let mut at = 2;
            let mut msgs = Vec::with_capacity(count);
            for _ in 0..count {
                if p.len() - at < 4 {
                    return Err(malformed(17 + at, "truncated supply body length"));
                }
                let blen = u32::from_be_bytes(p[at..at + 4].try_into().unwrap()) as usize;
                at += 4;
                if p.len() - at < blen {
                    return Err(malformed(17 + at, "truncated supply body"));
                }
                msgs.push(decode_binding(&p[at..at + blen])?);
                at += blen;
            }
            if at != p.len() {
                return Err(malformed(17 + at, "trailing supply bytes"));
            }
            SyncKind::Supply(msgs)
        }
        SYNC_TAG_FORWARD => SyncKind::Forward(BindingVersionView::decode(p)?),
        t => return Err(malformed(0, &format!("unknown sync tag {t}"))),
    };
    Ok(SyncRecord {
        round,
        leader,
        kind,
    })
}

/// Where a produced sync record should go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncDest {
    /// Every member of the sender's region, the sender included.
    Region,
    One(AsNumber),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncOutbound {
    pub dest: SyncDest,
    pub record: SyncRecord,
}

/// Per-AS sync state: the local BVV, the store of verified binding-message
/// bodies keyed (issuer, version), and live RBC instances. The node is a pure
/// state machine; the host delivers records and dispatches the outputs.
#[derive(Debug, Clone)]
pub struct SyncNode {
    pub asn: AsNumber,
    /// Sorted region members, self included.
    pub region: Vec<AsNumber>,
    /// Sorted full membership across all regions.
    pub all_members: Vec<AsNumber>,
    pub f: usize,
    pub view: BindingVersionView,
    store: BTreeMap<(AsNumber, i64), BindingMessage>,
    instances: BTreeMap<(u64, AsNumber), RbcInstance>,
}

impl SyncNode {
    pub fn new(asn: AsNumber, region: Vec<AsNumber>, all_members: Vec<AsNumber>, f: usize) -> Self {
        assert!(region.contains(&asn));
        SyncNode {
            asn,
            region,
            all_members,
            f,
            view: BindingVersionView::new(),
            store: BTreeMap::new(),
            instances: BTreeMap::new(),
        }
    }

    pub fn store_len(&self) -> usize {
        self.store.len()
    }

    pub fn store_keys(&self) -> Vec<(AsNumber, i64)> {
        self.store.keys().copied().collect()
    }

    /// Records a binding this node has already verified and acted on. Filter
    /// installation never waits on the sync plane.
    pub fn record_binding(&mut self, msg: &BindingMessage) {
        let ver = message_version(msg);
        self.view.observe(msg.issuer, ver);
        self.store.insert((msg.issuer, ver), msg.clone());
    }

    fn instance(&mut self, round: u64, leader: AsNumber) -> &mut RbcInstance {
        let n = self.region.len();
        let f = self.f;
        self.instances
            .entry((round, leader))
            .or_insert_with(|| RbcInstance::new(n, f))
    }

    /// Starts a consistency-check round; only the round leader emits a SEND.
    pub fn start_round(&mut self, round: u64) -> Vec<SyncOutbound> {
        if leader_for_round(round, &self.region) != self.asn {
            return Vec::new();
        }
        vec![SyncOutbound {
            dest: SyncDest::Region,
            record: SyncRecord {
                round,
                leader: self.asn,
                kind: SyncKind::Send(self.view.clone()),
            },
        }]
    }

    /// Processes one delivered record. Returns records to dispatch plus any
    /// binding messages newly accepted from a SUPPLY (for the host to install
    /// filters from).
    pub fn handle(
        &mut self,
        from: AsNumber,
        rec: &SyncRecord,
        trust: &TrustBase,
    ) -> (Vec<SyncOutbound>, Vec<BindingMessage>) {
        let mut out = Vec::new();
        let mut accepted = Vec::new();
        let round = rec.round;
        let leader = rec.leader;
        match &rec.kind {
            SyncKind::Send(view) => {
                // Only the round leader's own SEND counts.
                if from == leader && leader_for_round(round, &self.region) == leader {
                    let emits = self.instance(round, leader).on_send(&view.encode());
                    self.dispatch_emits(round, leader, emits, &mut out);
                }
            }
            SyncKind::Echo(view) => {
                let emits = self.instance(round, leader).on_echo(from, &view.encode());
                self.dispatch_emits(round, leader, emits, &mut out);
            }
            SyncKind::Ready(view) => {
                let emits = self.instance(round, leader).on_ready(from, &view.encode());
                self.dispatch_emits(round, leader, emits, &mut out);
            }
            SyncKind::Request {
                asn,
                from_ver,
                to_ver,
            } => {
                let msgs: Vec<BindingMessage> = (*from_ver..=*to_ver)
                    .filter_map(|v| self.store.get(&(*asn, v)).cloned())
                    .collect();
                if !msgs.is_empty() {
                    out.push(SyncOutbound {
                        dest: SyncDest::One(from),
                        record: SyncRecord {
                            round,
                            leader,
                            kind: SyncKind::Supply(msgs),
                        },
                    });
                }
            }
            SyncKind::Supply(msgs) => {
                for msg in msgs {
                    let outcome = verify_binding(msg, self.asn, trust);
                    if !matches!(outcome, VerifyOutcome::Rejected(_)) {
                        let ver = message_version(msg);
                        if self.store.insert((msg.issuer, ver), msg.clone()).is_none() {
                            self.view.observe(msg.issuer, ver);
                            accepted.push(msg.clone());
                        }
                    }
                }
            }
            SyncKind::Forward(view) => {
                // Cross-region post-check view: reconcile against the
                // forwarding leader directly, no RBC.
                self.reconcile_with(round, leader, from, view, &mut out);
            }
        }
        (out, accepted)
    }

    fn dispatch_emits(
        &mut self,
        round: u64,
        leader: AsNumber,
        emits: Vec<RbcEmit>,
        out: &mut Vec<SyncOutbound>,
    ) {
        for emit in emits {
            match emit {
                RbcEmit::Echo(p) => {
                    let view = BindingVersionView::decode(&p).unwrap();
                    out.push(SyncOutbound {
                        dest: SyncDest::Region,
                        record: SyncRecord {
                            round,
                            leader,
                            kind: SyncKind::Echo(view),
                        },
                    });
                }
                RbcEmit::Ready(p) => {
                    let view = BindingVersionView::decode(&p).unwrap();
                    out.push(SyncOutbound {
                        dest: SyncDest::Region,
                        record: SyncRecord {
                            round,
                            leader,
                            kind: SyncKind::Ready(view),
                        },
                    });
                }
                RbcEmit::Deliver(p) => {
                    let view = BindingVersionView::decode(&p).unwrap();
                    self.on_delivered(round, leader, &view, out);
                }
            }
        }
    }

    fn on_delivered(
        &mut self,
        round: u64,
        leader: AsNumber,
        delivered: &BindingVersionView,
        out: &mut Vec<SyncOutbound>,
    ) {
        self.reconcile_with(round, leader, leader, delivered, out);
        // Region leader forwards the post-check view beyond the region.
        if leader == self.asn {
            let mut post = self.view.clone();
            post.merge_max(delivered);
            for &m in &self.all_members {
                if !self.region.contains(&m) {
                    out.push(SyncOutbound {
                        dest: SyncDest::One(m),
                        record: SyncRecord {
                            round,
                            leader,
                            kind: SyncKind::Forward(post.clone()),
                        },
                    });
                }
            }
        }
    }

    /// Applies the three reconciliation cases against `peer`, who holds (or
    /// forwarded) `delivered`.
    fn reconcile_with(
        &mut self,
        round: u64,
        leader: AsNumber,
        peer: AsNumber,
        delivered: &BindingVersionView,
        out: &mut Vec<SyncOutbound>,
    ) {
        for action in reconcile(&self.view, delivered) {
            match action {
                SyncAction::RequestMissing {
                    asn,
                    from_ver,
                    to_ver,
                } => out.push(SyncOutbound {
                    dest: SyncDest::One(peer),
                    record: SyncRecord {
                        round,
                        leader,
                        kind: SyncKind::Request {
                            asn,
                            from_ver,
                            to_ver,
                        },
                    },
                }),
                SyncAction::SendNewer { asn, ver } => {
                    let newer: Vec<BindingMessage> = (delivered.version_of(asn) + 1..=ver)
                        .filter_map(|v| self.store.get(&(asn, v)).cloned())
                        .collect();
                    if !newer.is_empty() {
                        out.push(SyncOutbound {
                            dest: SyncDest::One(peer),
                            record: SyncRecord {
                                round,
                                leader,
                                kind: SyncKind::Supply(newer),
                            },
                        });
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::make_offpath_binding;
    use crate::trust::{KeyStore, Prefix, TrustBase};

    fn asns(v: &[u32]) -> Vec<AsNumber> {
        v.iter().map(|&a| AsNumber(a)).collect()
    }

    #[test]
    fn leader_rotates_through_members() {
        let members = asns(&[10, 20, 30]);
        assert_eq!(leader_for_round(0, &members), AsNumber(10));
        assert_eq!(leader_for_round(4, &members), AsNumber(20));
        let seen: BTreeSet<AsNumber> = (0..3).map(|r| leader_for_round(r, &members)).collect();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn view_codec_roundtrip_and_merge() {
        let mut v = BindingVersionView::new();
        v.observe(AsNumber(1), 3);
        v.observe(AsNumber(2), 7);
        v.observe(AsNumber(1), 2); // no regression
        assert_eq!(v.version_of(AsNumber(1)), 3);
        assert_eq!(BindingVersionView::decode(&v.encode()).unwrap(), v);

        let mut w = BindingVersionView::new();
        w.observe(AsNumber(1), 5);
        w.merge_max(&v);
        assert_eq!(w.version_of(AsNumber(1)), 5);
        assert_eq!(w.version_of(AsNumber(2)), 7);
    }

    #[test]
    fn reconcile_three_cases() {
        let mut local = BindingVersionView::new();
        local.observe(AsNumber(1), 3);
        local.observe(AsNumber(2), 4);
        local.observe(AsNumber(3), 7);
        let mut delivered = BindingVersionView::new();
        delivered.observe(AsNumber(1), 5);
        delivered.observe(AsNumber(2), 4);
        delivered.observe(AsNumber(3), 5);
        assert_eq!(
            reconcile(&local, &delivered),
            vec![
                SyncAction::RequestMissing {
                    asn: AsNumber(1),
                    from_ver: 4,
                    to_ver: 5
                },
                SyncAction::SendNewer {
                    asn: AsNumber(3),
                    ver: 7
                },
            ]
        );
        assert!(reconcile(&delivered, &delivered).is_empty());
    }

    /// Runs a failure-free RBC among `n` synchronous members.
    fn run_rbc(n: usize, f: usize, payload: &[u8]) -> Vec<Option<Vec<u8>>> {
        let members = asns(&(1..=n as u32).collect::<Vec<_>>());
        let mut insts: Vec<RbcInstance> = (0..n).map(|_| RbcInstance::new(n, f)).collect();
        // (from, emit) queue, delivered to everyone.
        let mut queue: Vec<(AsNumber, RbcEmit)> = Vec::new();
        for (i, inst) in insts.iter_mut().enumerate() {
            for e in inst.on_send(payload) {
                queue.push((members[i], e));
            }
        }
        let mut at = 0;
        while at < queue.len() {
            let (from, emit) = queue[at].clone();
            at += 1;
            for (i, inst) in insts.iter_mut().enumerate() {
                let emits = match &emit {
                    RbcEmit::Echo(p) => inst.on_echo(from, p),
                    RbcEmit::Ready(p) => inst.on_ready(from, p),
                    RbcEmit::Deliver(_) => Vec::new(),
                };
                for e in emits {
                    if !matches!(e, RbcEmit::Deliver(_)) {
                        queue.push((members[i], e));
                    }
                }
            }
        }
        insts
            .iter()
            .map(|i| i.delivered().map(|p| p.to_vec()))
            .collect()
    }

    #[test]
    fn rbc_failure_free_all_deliver() {
        for (n, f) in [(4, 0), (4, 1), (7, 2)] {
            let outcomes = run_rbc(n, f, b"payload");
            assert!(outcomes.iter().all(|o| o.as_deref() == Some(&b"payload"[..])), "n={n} f={f}");
        }
    }

    #[test]
    fn rbc_equivocating_leader_never_splits_agreement() {
        // n=4, f=1: leader (member 0, Byzantine) sends payload X to members
        // 1,2 and payload Y to member 3; the Byzantine node also echoes both
        // payloads selectively. Exhaust a set of adversarial schedules and
        // assert no two correct members deliver different payloads.
        let n = 4;
        let f = 1;
        let members = asns(&[1, 2, 3, 4]);
        for byz_echo_to in 0..3usize {
            let mut insts: Vec<RbcInstance> = (0..n).map(|_| RbcInstance::new(n, f)).collect();
            let x = b"x".to_vec();
            let y = b"y".to_vec();
            // Correct members 1,2 get X; member 3 gets Y.
            let mut queue: Vec<(AsNumber, usize, RbcEmit)> = Vec::new();
            for (i, p) in [(1usize, &x), (2, &x), (3, &y)] {
                for e in insts[i].on_send(p) {
                    // broadcast to all correct members
                    for t in 1..4 {
                        queue.push((members[i], t, e.clone()));
                    }
                }
            }
            // Byzantine leader echoes X to one chosen member and Y to another.
            queue.push((members[0], 1 + byz_echo_to % 3, RbcEmit::Echo(x.clone())));
            queue.push((members[0], 1 + (byz_echo_to + 1) % 3, RbcEmit::Echo(y.clone())));
            let mut at = 0;
            while at < queue.len() {
                let (from, target, emit) = queue[at].clone();
                at += 1;
                let emits = match &emit {
                    RbcEmit::Echo(p) => insts[target].on_echo(from, p),
                    RbcEmit::Ready(p) => insts[target].on_ready(from, p),
                    RbcEmit::Deliver(_) => Vec::new(),
                };
                for e in emits {
                    if !matches!(e, RbcEmit::Deliver(_)) {
                        for t in 1..4 {
                            queue.push((members[target], t, e.clone()));
                        }
                    }
                }
            }
            let delivered: BTreeSet<Vec<u8>> = insts[1..]
                .iter()
                .filter_map(|i| i.delivered().map(|p| p.to_vec()))
                .collect();
            assert!(delivered.len() <= 1, "correct members split on {delivered:?}");
        }
    }

    #[test]
    fn rbc_silent_leader_delivers_nothing() {
        let n = 4;
        let insts: Vec<RbcInstance> = (0..n).map(|_| RbcInstance::new(n, 1)).collect();
        assert!(insts.iter().all(|i| i.delivered().is_none()));
    }

    fn trust_for(count: u32) -> (TrustBase, KeyStore) {
        let text: String = (1..=count)
            .map(|a| format!("{a}|10.{a}.0.0/24|1|auto\n"))
            .collect();
        TrustBase::load(&text, b"sync-tests").unwrap()
    }

    fn prefix(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    fn binding(keys: &KeyStore, trust: &TrustBase, issuer: u32, ver: i64) -> BindingMessage {
        make_offpath_binding(
            AsNumber(issuer),
            prefix(&format!("10.{issuer}.0.0/24")),
            prefix("10.1.0.0/24"),
            ver,
            keys.get(AsNumber(issuer)).unwrap(),
            trust,
        )
        .unwrap()
    }

    /// Synchronous dispatcher over a set of SyncNodes.
    fn pump(nodes: &mut BTreeMap<AsNumber, SyncNode>, trust: &TrustBase, mut queue: Vec<(AsNumber, SyncDest, SyncRecord)>) {
        let regions: BTreeMap<AsNumber, Vec<AsNumber>> = nodes
            .iter()
            .map(|(&a, n)| (a, n.region.clone()))
            .collect();
        let mut at = 0;
        while at < queue.len() {
            let (from, dest, rec) = queue[at].clone();
            at += 1;
            let targets: Vec<AsNumber> = match dest {
                SyncDest::Region => regions[&from].clone(),
                SyncDest::One(a) => vec![a],
            };
            for t in targets {
                let Some(node) = nodes.get_mut(&t) else { continue };
                let (outs, _) = node.handle(from, &rec, trust);
                for o in outs {
                    queue.push((t, o.dest, o.record));
                }
            }
        }
    }

    #[test]
    fn single_region_round_repairs_missing_bindings() {
        let (trust, keys) = trust_for(4);
        let members = asns(&[1, 2, 3, 4]);
        let mut nodes: BTreeMap<AsNumber, SyncNode> = members
            .iter()
            .map(|&a| (a, SyncNode::new(a, members.clone(), members.clone(), 1)))
            .collect();
        // AS 2's binding (ver 1) reached only node 1 over the data plane.
        let b = binding(&keys, &trust, 2, 1);
        nodes.get_mut(&AsNumber(1)).unwrap().record_binding(&b);
        // Round 0: leader is AS 1.
        let start = nodes.get_mut(&AsNumber(1)).unwrap().start_round(0);
        let queue: Vec<_> = start
            .into_iter()
            .map(|o| (AsNumber(1), o.dest, o.record))
            .collect();
        pump(&mut nodes, &trust, queue);
        for node in nodes.values() {
            assert_eq!(node.view.version_of(AsNumber(2)), 1, "node {}", node.asn);
            assert_eq!(node.store_len(), 1);
        }
    }

    #[test]
    fn newer_local_version_flows_back_to_leader_and_onward() {
        let (trust, keys) = trust_for(4);
        let members = asns(&[1, 2, 3, 4]);
        let mut nodes: BTreeMap<AsNumber, SyncNode> = members
            .iter()
            .map(|&a| (a, SyncNode::new(a, members.clone(), members.clone(), 1)))
            .collect();
        // Node 3 alone holds AS 3's versions 1 and 2; leader 1 knows nothing.
        for ver in 1..=2 {
            let b = binding(&keys, &trust, 3, ver);
            nodes.get_mut(&AsNumber(3)).unwrap().record_binding(&b);
        }
        let start = nodes.get_mut(&AsNumber(1)).unwrap().start_round(0);
        let queue: Vec<_> = start
            .into_iter()
            .map(|o| (AsNumber(1), o.dest, o.record))
            .collect();
        pump(&mut nodes, &trust, queue);
        // Case 3 pushed both messages to the leader.
        let leader = &nodes[&AsNumber(1)];
        assert_eq!(leader.view.version_of(AsNumber(3)), 2);
        assert_eq!(leader.store_len(), 2);
        // A later round led by the leader spreads them region-wide.
        let start = nodes.get_mut(&AsNumber(1)).unwrap().start_round(4);
        let queue: Vec<_> = start
            .into_iter()
            .map(|o| (AsNumber(1), o.dest, o.record))
            .collect();
        pump(&mut nodes, &trust, queue);
        for node in nodes.values() {
            assert_eq!(node.view.version_of(AsNumber(3)), 2, "node {}", node.asn);
            assert_eq!(node.store_len(), 2);
        }
    }

    #[test]
    fn region_leader_forwards_post_check_view_across_regions() {
        let (trust, keys) = trust_for(8);
        let all = asns(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let r1 = asns(&[1, 2, 3, 4]);
        let r2 = asns(&[5, 6, 7, 8]);
        let mut nodes: BTreeMap<AsNumber, SyncNode> = BTreeMap::new();
        for &a in &r1 {
            nodes.insert(a, SyncNode::new(a, r1.clone(), all.clone(), 1));
        }
        for &a in &r2 {
            nodes.insert(a, SyncNode::new(a, r2.clone(), all.clone(), 1));
        }
        // Region-1 knowledge only.
        let b = binding(&keys, &trust, 2, 1);
        for &a in &r1 {
            nodes.get_mut(&a).unwrap().record_binding(&b);
        }
        let start = nodes.get_mut(&AsNumber(1)).unwrap().start_round(0);
        let queue: Vec<_> = start
            .into_iter()
            .map(|o| (AsNumber(1), o.dest, o.record))
            .collect();
        pump(&mut nodes, &trust, queue);
        // Region-2 nodes learned the version and repaired the body from the
        // forwarding leader.
        for &a in &r2 {
            let node = &nodes[&a];
            assert_eq!(node.view.version_of(AsNumber(2)), 1, "node {}", node.asn);
            assert_eq!(node.store_len(), 1);
        }
    }

    #[test]
    fn sync_codec_roundtrip() {
        let (trust, keys) = trust_for(2);
        let mut v = BindingVersionView::new();
        v.observe(AsNumber(1), 9);
        let records = vec![
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Send(v.clone()),
            },
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Echo(v.clone()),
            },
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Ready(v.clone()),
            },
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Request {
                    asn: AsNumber(2),
                    from_ver: 1,
                    to_ver: 4,
                },
            },
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Supply(vec![binding(&keys, &trust, 2, 1)]),
            },
            SyncRecord {
                round: 3,
                leader: AsNumber(1),
                kind: SyncKind::Forward(v),
            },
        ];
        for rec in records {
            let bytes = encode_sync(&rec);
            assert_eq!(decode_sync(&bytes).unwrap(), rec);
            assert!(decode_sync(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn check_payloads_never_carry_binding_bodies() {
        let (trust, keys) = trust_for(2);
        let b = binding(&keys, &trust, 2, 1);
        let mut node = SyncNode::new(
            AsNumber(1),
            asns(&[1, 2, 3, 4]),
            asns(&[1, 2, 3, 4]),
            1,
        );
        node.record_binding(&b);
        let outs = node.start_round(0);
        assert_eq!(outs.len(), 1);
        let bytes = encode_sync(&outs[0].record);
        // The signature bytes of the stored binding must not appear in the
        // consistency-check payload.
        let sig = &b.signature;
        assert!(!bytes
            .windows(sig.len())
            .any(|w| w == &sig[..]));
        assert!(bytes.len() < 64);
    }
}
