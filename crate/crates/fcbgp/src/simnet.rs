//! Deterministic discrete-event simulator hosting a speaker, a filter table,
//! and an optional sync node per AS, plus the attack and measurement
//! harnesses built on it: FC splicing search, partial-deployment hijack
//! attempts, unwanted-traffic injection, and BVV convergence runs.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::binding::{
    check_packet, decode_binding, encode_binding, make_offpath_binding, make_onpath_binding,
    make_startup_binding, verify_binding, BindingMessage, FilterTable, PacketDecision,
    VerifyOutcome,
};
use crate::fc::{sign_fc, ForwardingCommitment, Pathlet};
use crate::speaker::{classify_path, PathClass, Speaker};
use crate::sync::{decode_sync, encode_sync, leader_for_round, BindingVersionView, SyncDest, SyncKind, SyncNode, SyncRecord};
use crate::trust::{AsNumber, KeyStore, Prefix, TrustBase, TrustError};
use crate::wire::{decode_update, encode_update, BgpUpdate, UpdateKind};

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Logical-time budget; exceeding it aborts the run.
    pub tick_budget: u64,
    pub default_latency: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_budget: 1_000_000,
            default_latency: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("tick budget exhausted with {residual} events still queued")]
    BudgetExhausted { residual: usize },
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error("unknown AS {0}")]
    UnknownAs(AsNumber),
    #[error("scenario line {line}: {reason}")]
    Scenario { line: usize, reason: String },
}

/// Scripted adversary actions, executed at their scheduled tick.
#[derive(Debug, Clone)]
pub enum Action {
    /// Fabricate an announcement for `prefix` with `claimed_path` (must end
    /// at the actor) and the best FC cover the actor's pool allows, sent to
    /// one neighbor.
    AnnounceFakePath {
        to: AsNumber,
        prefix: Prefix,
        claimed_path: Vec<AsNumber>,
    },
    /// Inject a (possibly source-spoofed) packet arriving at the actor from
    /// `via`.
    SpoofSource {
        src_prefix: Prefix,
        dst_prefix: Prefix,
        via: AsNumber,
    },
    /// Issue a binding for ⟨actor's prefix, dst⟩ from the actor's best route;
    /// falls back to the off-path form when the actor has no route FCs.
    IssueBinding {
        src_prefix: Prefix,
        dst_prefix: Prefix,
        ver: i64,
    },
}

#[derive(Debug, Clone)]
enum Payload {
    Bgp(Vec<u8>),
    Binding(Vec<u8>),
    Sync(Vec<u8>),
    Act(Action),
}

#[derive(Debug, Clone)]
struct Event {
    at: u64,
    seq: u64,
    from: AsNumber,
    to: AsNumber,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Per-AS simulation state.
pub struct SimNode {
    pub speaker: Speaker,
    pub filters: FilterTable,
    pub sync: Option<SyncNode>,
    /// FCs seen in updates this AS's links carried, per prefix.
    pub observed_fcs: BTreeMap<Prefix, BTreeSet<ForwardingCommitment>>,
    /// Announced AS paths delivered here, per prefix.
    pub delivered_paths: BTreeMap<Prefix, BTreeSet<Vec<AsNumber>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub lines: Vec<String>,
}

impl SimTrace {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for line in &self.lines {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

pub struct Sim {
    pub trust: TrustBase,
    pub keys: KeyStore,
    pub config: SimConfig,
    nodes: BTreeMap<AsNumber, SimNode>,
    latency: BTreeMap<(AsNumber, AsNumber), u64>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    trace: Vec<String>,
}

impl Sim {
    pub fn new(trust: TrustBase, keys: KeyStore, config: SimConfig) -> Self {
        Sim {
            trust,
            keys,
            config,
            nodes: BTreeMap::new(),
            latency: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            trace: Vec::new(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn node(&self, asn: AsNumber) -> Option<&SimNode> {
        self.nodes.get(&asn)
    }

    pub fn node_mut(&mut self, asn: AsNumber) -> Option<&mut SimNode> {
        self.nodes.get_mut(&asn)
    }

    pub fn asns(&self) -> Vec<AsNumber> {
        self.nodes.keys().copied().collect()
    }

    pub fn take_trace(&mut self) -> SimTrace {
        SimTrace {
            lines: std::mem::take(&mut self.trace),
        }
    }

    /// Adds an AS; deployment status and key come from the trust base.
    pub fn add_node(&mut self, asn: AsNumber) {
        let deployed = self.trust.is_deployed(asn);
        let secret = self.keys.get(asn).cloned();
        self.nodes.entry(asn).or_insert_with(|| SimNode {
            speaker: Speaker::new(asn, deployed, secret),
            filters: FilterTable::new(),
            sync: None,
            observed_fcs: BTreeMap::new(),
            delivered_paths: BTreeMap::new(),
        });
    }

    pub fn link(&mut self, a: AsNumber, b: AsNumber, latency: u64) {
        self.add_node(a);
        self.add_node(b);
        self.nodes.get_mut(&a).unwrap().speaker.add_neighbor(b);
        self.nodes.get_mut(&b).unwrap().speaker.add_neighbor(a);
        self.latency.insert((a, b), latency);
        self.latency.insert((b, a), latency);
    }

    fn latency_of(&self, from: AsNumber, to: AsNumber) -> u64 {
        self.latency
            .get(&(from, to))
            .copied()
            .unwrap_or(self.config.default_latency)
    }

    fn enqueue(&mut self, at: u64, from: AsNumber, to: AsNumber, payload: Payload) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Event {
            at,
            seq,
            from,
            to,
            payload,
        }));
    }

    pub fn schedule(&mut self, at: u64, actor: AsNumber, action: Action) {
        self.enqueue(at, actor, actor, Payload::Act(action));
    }

    /// Starts origination of a locally owned prefix at tick `at`.
    pub fn originate(&mut self, asn: AsNumber, prefix: Prefix, at: u64) -> Result<(), SimError> {
        let node = self.nodes.get_mut(&asn).ok_or(SimError::UnknownAs(asn))?;
        let exports = node
            .speaker
            .originate(prefix, at)
            .expect("origination cannot fail for a keyed or legacy speaker");
        for (neighbor, update) in exports {
            let bytes = encode_update(&update).expect("export encodes");
            let delay = self.latency_of(asn, neighbor);
            self.enqueue(at + delay, asn, neighbor, Payload::Bgp(bytes));
        }
        Ok(())
    }

    /// Global broadcast of a binding message to every simulated AS.
    pub fn broadcast_binding(&mut self, from: AsNumber, msg: &BindingMessage, at: u64) {
        let bytes = encode_binding(msg);
        for &to in &self.asns() {
            if to == from {
                continue;
            }
            let delay = self.latency_of(from, to);
            self.enqueue(at + delay, from, to, Payload::Binding(bytes.clone()));
        }
        // Self-delivery is immediate.
        self.enqueue(at, from, from, Payload::Binding(bytes));
    }

    fn deliver_bgp(&mut self, ev: &Event) {
        let update = match decode_update(ev.payload_bytes()) {
            Ok(u) => u,
            Err(e) => {
                self.trace
                    .push(format!("t={} as={} drop-malformed: {e}", ev.at, ev.to.0));
                return;
            }
        };
        let Some(node) = self.nodes.get_mut(&ev.to) else {
            return;
        };
        if update.kind == UpdateKind::Announcement {
            if let Ok(fcs) = update.fcs() {
                node.observed_fcs
                    .entry(update.prefix)
                    .or_default()
                    .extend(fcs);
            }
            node.delivered_paths
                .entry(update.prefix)
                .or_default()
                .insert(update.as_path.clone());
        }
        let exports = match node.speaker.process_update(ev.from, &update, &self.trust, ev.at) {
            Ok(exports) => exports,
            Err(e) => {
                self.trace
                    .push(format!("t={} as={} process-error: {e}", ev.at, ev.to.0));
                return;
            }
        };
        if let Some(entry) = node.speaker.best_entry(&update.prefix) {
            self.trace.push(format!(
                "t={} as={} prefix={} class={} best-from={}",
                ev.at,
                ev.to.0,
                update.prefix,
                entry.classification,
                entry.received_from.0
            ));
        }
        for (neighbor, out) in exports {
            let bytes = encode_update(&out).expect("export encodes");
            let delay = self.latency_of(ev.to, neighbor);
            self.enqueue(ev.at + delay, ev.to, neighbor, Payload::Bgp(bytes));
        }
    }

    fn deliver_binding(&mut self, ev: &Event) {
        let Ok(msg) = decode_binding(ev.payload_bytes()) else {
            self.trace
                .push(format!("t={} as={} drop-malformed-binding", ev.at, ev.to.0));
            return;
        };
        let Some(node) = self.nodes.get_mut(&ev.to) else {
            return;
        };
        if !node.speaker.is_deployed() {
            return;
        }
        let outcome = verify_binding(&msg, ev.to, &self.trust);
        if matches!(outcome, VerifyOutcome::Rejected(_)) {
            self.trace.push(format!(
                "t={} as={} binding-rejected issuer={}",
                ev.at, ev.to.0, msg.issuer.0
            ));
            return;
        }
        let installed = node.filters.install(&msg, outcome, ev.to).is_ok();
        if installed {
            self.trace.push(format!(
                "t={} as={} filter-install src={} dst={} ver={}.{}",
                ev.at, ev.to.0, msg.src_prefix, msg.dst_prefix, msg.ver, msg.ver_sub
            ));
        }
        if let Some(sync) = node.sync.as_mut() {
            sync.record_binding(&msg);
        }
    }

    fn deliver_sync(&mut self, ev: &Event) {
        let Ok(rec) = decode_sync(ev.payload_bytes()) else {
            return;
        };
        let Some(node) = self.nodes.get_mut(&ev.to) else {
            return;
        };
        let Some(sync) = node.sync.as_mut() else {
            return;
        };
        let (outs, accepted) = sync.handle(ev.from, &rec, &self.trust);
        let region = sync.region.clone();
        for msg in accepted {
            let outcome = verify_binding(&msg, ev.to, &self.trust);
            if node.filters.install(&msg, outcome, ev.to).is_ok() {
                self.trace.push(format!(
                    "t={} as={} filter-install-via-sync src={} dst={}",
                    ev.at, ev.to.0, msg.src_prefix, msg.dst_prefix
                ));
            }
        }
        for out in outs {
            let bytes = encode_sync(&out.record);
            let targets: Vec<AsNumber> = match out.dest {
                SyncDest::Region => region.clone(),
                SyncDest::One(a) => vec![a],
            };
            for t in targets {
                let delay = if t == ev.to { 0 } else { self.latency_of(ev.to, t) };
                self.enqueue(ev.at + delay, ev.to, t, Payload::Sync(bytes.clone()));
            }
        }
    }

    fn act(&mut self, ev: &Event, action: &Action) {
        let actor = ev.to;
        match action {
            Action::AnnounceFakePath {
                to,
                prefix,
                claimed_path,
            } => {
                let fcs = self.cover_fcs(actor, *prefix, claimed_path, *to);
                let update = BgpUpdate::announcement(*prefix, claimed_path.clone(), &fcs)
                    .expect("fake announcement encodes");
                let bytes = encode_update(&update).expect("fake announcement encodes");
                self.trace.push(format!(
                    "t={} as={} fake-announce prefix={} to={} fcs={}",
                    ev.at,
                    actor.0,
                    prefix,
                    to.0,
                    fcs.len()
                ));
                let delay = self.latency_of(actor, *to);
                self.enqueue(ev.at + delay, actor, *to, Payload::Bgp(bytes));
            }
            Action::SpoofSource {
                src_prefix,
                dst_prefix,
                via,
            } => {
                let decision = self.packet_decision(actor, *via, src_prefix, dst_prefix);
                self.trace.push(format!(
                    "t={} as={} packet src={} dst={} from={} decision={:?}",
                    ev.at, actor.0, src_prefix, dst_prefix, via.0, decision
                ));
            }
            Action::IssueBinding {
                src_prefix,
                dst_prefix,
                ver,
            } => {
                let msg = self.build_binding(actor, *src_prefix, *dst_prefix, *ver);
                match msg {
                    Some(msg) => {
                        self.trace.push(format!(
                            "t={} as={} issue-binding ver={} fcs={}",
                            ev.at,
                            actor.0,
                            ver,
                            msg.fc_list.len()
                        ));
                        self.broadcast_binding(actor, &msg, ev.at);
                    }
                    None => self.trace.push(format!(
                        "t={} as={} issue-binding-failed ver={ver}",
                        ev.at, actor.0
                    )),
                }
            }
        }
    }

    /// FC cover the actor can assemble for a claimed path: pooled FCs that
    /// match the pathlets, plus self-signed FCs where the actor is the
    /// current AS. Uncoverable pathlets are simply left without an FC.
    fn cover_fcs(
        &mut self,
        actor: AsNumber,
        prefix: Prefix,
        claimed_path: &[AsNumber],
        receiver: AsNumber,
    ) -> Vec<ForwardingCommitment> {
        let pool = self
            .nodes
            .get(&actor)
            .and_then(|n| n.observed_fcs.get(&prefix))
            .cloned()
            .unwrap_or_default();
        let pathlets = crate::speaker::path_pathlets(claimed_path, prefix, receiver);
        let mut fcs = Vec::new();
        for (previous, current, next) in pathlets {
            if let Some(fc) = pool.iter().find(|fc| fc.tuple() == (previous, current, next)) {
                fcs.push(fc.clone());
            } else if current == actor {
                if let Some(key) = self.keys.get(actor) {
                    let pathlet = Pathlet::new(previous, current, next, prefix)
                        .expect("claimed pathlet is well-formed");
                    fcs.push(sign_fc(actor, &pathlet, key).expect("actor signs own pathlet"));
                }
            }
        }
        fcs
    }

    /// The binding the actor would issue from its current best route toward
    /// `dst_prefix` (FC list reversed into nearest-source-first order), or
    /// the off-path form when it has no FC-bearing route.
    pub fn build_binding(
        &mut self,
        actor: AsNumber,
        src_prefix: Prefix,
        dst_prefix: Prefix,
        ver: i64,
    ) -> Option<BindingMessage> {
        let key = self.keys.get(actor)?.clone();
        let entry = self
            .nodes
            .get(&actor)
            .and_then(|n| n.speaker.best_entry(&dst_prefix))
            .cloned();
        match entry {
            Some(entry) if !entry.fcs.is_empty() => {
                let mut fcs = entry.fcs.clone();
                fcs.reverse();
                make_onpath_binding(actor, src_prefix, dst_prefix, fcs, ver, &key, &self.trust)
                    .ok()
            }
            _ => make_offpath_binding(actor, src_prefix, dst_prefix, ver, &key, &self.trust).ok(),
        }
    }

    /// One filter check at `at_as` for a packet arriving from `via`.
    pub fn packet_decision(
        &self,
        at_as: AsNumber,
        via: AsNumber,
        src_prefix: &Prefix,
        dst_prefix: &Prefix,
    ) -> PacketDecision {
        match self.nodes.get(&at_as) {
            Some(node) if node.speaker.is_deployed() => {
                check_packet(&node.filters, src_prefix, dst_prefix, via)
            }
            _ => PacketDecision::Forward,
        }
    }

    /// Walks a packet along `hops` (first element is the injection point's
    /// neighbor side); returns the index of the hop that discarded it, if
    /// any.
    pub fn forward_packet(
        &mut self,
        hops: &[AsNumber],
        src_prefix: &Prefix,
        dst_prefix: &Prefix,
    ) -> Option<usize> {
        for i in 1..hops.len() {
            let decision = self.packet_decision(hops[i], hops[i - 1], src_prefix, dst_prefix);
            self.trace.push(format!(
                "t={} as={} packet src={} dst={} from={} decision={:?}",
                self.now, hops[i].0, src_prefix, dst_prefix, hops[i - 1].0, decision
            ));
            if decision != PacketDecision::Forward {
                return Some(i);
            }
        }
        None
    }

    pub fn attach_sync(&mut self, regions: &[Vec<AsNumber>], f: usize) {
        let mut all: Vec<AsNumber> = regions.iter().flatten().copied().collect();
        all.sort();
        for region in regions {
            let mut region = region.clone();
            region.sort();
            for &asn in &region {
                if let Some(node) = self.nodes.get_mut(&asn) {
                    node.sync = Some(SyncNode::new(asn, region.clone(), all.clone(), f));
                }
            }
        }
    }

    /// Leader kickoff for consistency-check round `round` at tick `at`.
    pub fn start_sync_round(&mut self, round: u64, at: u64) {
        let asns = self.asns();
        for asn in asns {
            let Some(node) = self.nodes.get_mut(&asn) else { continue };
            let Some(sync) = node.sync.as_mut() else { continue };
            let outs = sync.start_round(round);
            let region = sync.region.clone();
            for out in outs {
                let bytes = encode_sync(&out.record);
                let targets: Vec<AsNumber> = match out.dest {
                    SyncDest::Region => region.clone(),
                    SyncDest::One(a) => vec![a],
                };
                for t in targets {
                    let delay = if t == asn { 0 } else { self.latency_of(asn, t) };
                    self.enqueue(at + delay, asn, t, Payload::Sync(bytes.clone()));
                }
            }
        }
    }

    /// Processes queued events in (tick, sequence) order until the queue
    /// drains or the budget is exceeded.
    pub fn run_until_quiescent(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.at > self.config.tick_budget {
                return Err(SimError::BudgetExhausted {
                    residual: self.queue.len() + 1,
                });
            }
            self.now = ev.at;
            match &ev.payload {
                Payload::Bgp(_) => self.deliver_bgp(&ev),
                Payload::Binding(_) => self.deliver_binding(&ev),
                Payload::Sync(_) => self.deliver_sync(&ev),
                Payload::Act(action) => {
                    let action = action.clone();
                    self.act(&ev, &action)
                }
            }
        }
        Ok(())
    }
}

impl Event {
    fn payload_bytes(&self) -> &[u8] {
        match &self.payload {
            Payload::Bgp(b) | Payload::Binding(b) | Payload::Sync(b) => b,
            Payload::Act(_) => &[],
        }
    }
}

/// A parsed scenario file: trust lines, topology, and a schedule.
#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub trust_text: String,
    pub links: Vec<(AsNumber, AsNumber, u64)>,
    pub originations: Vec<(AsNumber, Prefix, u64)>,
    pub actions: Vec<(u64, AsNumber, ActionSpec)>,
}

#[derive(Debug, Clone)]
pub enum ActionSpec {
    FakeAnnounce {
        to: AsNumber,
        prefix: Prefix,
        path: Vec<AsNumber>,
    },
    Packet {
        via: AsNumber,
        src_prefix: Prefix,
        dst_prefix: Prefix,
    },
    Bind {
        src_prefix: Prefix,
        dst_prefix: Prefix,
        ver: i64,
    },
}

/// Line format, one directive per line, `#` comments:
/// `trust <asn>|<prefixes>|<deployed>|<key>`
/// `link <a> <b> [latency]`
/// `originate <asn> <prefix> [at]`
/// `fake-announce <actor> <to> <prefix> <as1,as2,...> [at]`
/// `packet <at-as> <via-as> <src-prefix> <dst-prefix> [at]`
/// `bind <issuer> <src-prefix> <dst-prefix> <ver> [at]`
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let mut sc = Scenario::default();
    let err = |line: usize, reason: &str| SimError::Scenario {
        line,
        reason: reason.to_string(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let asn = |s: &str| -> Result<AsNumber, SimError> {
            s.parse::<u32>()
                .map(AsNumber)
                .map_err(|_| err(line_no, &format!("bad AS number {s:?}")))
        };
        let prefix = |s: &str| -> Result<Prefix, SimError> {
            s.parse()
                .map_err(|_| err(line_no, &format!("bad prefix {s:?}")))
        };
        let tick = |s: Option<&&str>| -> Result<u64, SimError> {
            match s {
                None => Ok(0),
                Some(s) => s
                    .parse()
                    .map_err(|_| err(line_no, &format!("bad tick {s:?}"))),
            }
        };
        match keyword {
            "trust" => {
                if rest.len() != 1 {
                    return Err(err(line_no, "trust takes one record"));
                }
                sc.trust_text.push_str(rest[0]);
                sc.trust_text.push('\n');
            }
            "link" => {
                if rest.len() < 2 || rest.len() > 3 {
                    return Err(err(line_no, "link takes 2 ASes and optional latency"));
                }
                let lat = if rest.len() == 3 {
                    rest[2]
                        .parse()
                        .map_err(|_| err(line_no, "bad latency"))?
                } else {
                    1
                };
                sc.links.push((asn(rest[0])?, asn(rest[1])?, lat));
            }
            "originate" => {
                if rest.len() < 2 || rest.len() > 3 {
                    return Err(err(line_no, "originate takes AS, prefix, optional tick"));
                }
                sc.originations
                    .push((asn(rest[0])?, prefix(rest[1])?, tick(rest.get(2))?));
            }
            "fake-announce" => {
                if rest.len() < 4 || rest.len() > 5 {
                    return Err(err(line_no, "fake-announce takes actor, to, prefix, path"));
                }
                let path = rest[3]
                    .split(',')
                    .map(asn)
                    .collect::<Result<Vec<_>, _>>()?;
                sc.actions.push((
                    tick(rest.get(4))?,
                    asn(rest[0])?,
                    ActionSpec::FakeAnnounce {
                        to: asn(rest[1])?,
                        prefix: prefix(rest[2])?,
                        path,
                    },
                ));
            }
            "packet" => {
                if rest.len() < 4 || rest.len() > 5 {
                    return Err(err(line_no, "packet takes at-as, via, src, dst"));
                }
                sc.actions.push((
                    tick(rest.get(4))?,
                    asn(rest[0])?,
                    ActionSpec::Packet {
                        via: asn(rest[1])?,
                        src_prefix: prefix(rest[2])?,
                        dst_prefix: prefix(rest[3])?,
                    },
                ));
            }
            "bind" => {
                if rest.len() < 4 || rest.len() > 5 {
                    return Err(err(line_no, "bind takes issuer, src, dst, ver"));
                }
                let ver = rest[3]
                    .parse()
                    .map_err(|_| err(line_no, "bad version"))?;
                sc.actions.push((
                    tick(rest.get(4))?,
                    asn(rest[0])?,
                    ActionSpec::Bind {
                        src_prefix: prefix(rest[1])?,
                        dst_prefix: prefix(rest[2])?,
                        ver,
                    },
                ));
            }
            other => return Err(err(line_no, &format!("unknown directive {other:?}"))),
        }
    }
    Ok(sc)
}

/// Builds and runs a scenario to quiescence; the seed feeds key derivation.
pub fn run_scenario(sc: &Scenario, seed: u64, config: SimConfig) -> Result<(Sim, SimTrace), SimError> {
    let (trust, keys) = TrustBase::load(&sc.trust_text, &seed.to_be_bytes())?;
    let mut sim = Sim::new(trust, keys, config);
    for &(a, b, lat) in &sc.links {
        sim.link(a, b, lat);
    }
    for &(asn, prefix, at) in &sc.originations {
        sim.originate(asn, prefix, at)?;
    }
    for (at, actor, spec) in &sc.actions {
        let action = match spec {
            ActionSpec::FakeAnnounce { to, prefix, path } => Action::AnnounceFakePath {
                to: *to,
                prefix: *prefix,
                claimed_path: path.clone(),
            },
            ActionSpec::Packet {
                via,
                src_prefix,
                dst_prefix,
            } => Action::SpoofSource {
                src_prefix: *src_prefix,
                dst_prefix: *dst_prefix,
                via: *via,
            },
            ActionSpec::Bind {
                src_prefix,
                dst_prefix,
                ver,
            } => Action::IssueBinding {
                src_prefix: *src_prefix,
                dst_prefix: *dst_prefix,
                ver: *ver,
            },
        };
        sim.schedule(*at, *actor, action);
    }
    sim.run_until_quiescent()?;
    let trace = sim.take_trace();
    Ok((sim, trace))
}

/// An accepted fake: the victim neighbor it fools plus the claimed AS path.
pub type AcceptedFake = (AsNumber, Vec<AsNumber>);

/// Exhaustive splicing search for `adversary` on a quiescent fully-deployed
/// sim: enumerates all distinct-AS sequences of length ≤ `max_len` ending at
/// the adversary and reports those that classify Trusted at some neighbor
/// using only pooled and self-signed FCs.
pub fn splice_attack_search(
    sim: &Sim,
    adversary: AsNumber,
    target_prefix: Prefix,
    max_len: usize,
) -> Vec<AcceptedFake> {
    let node = match sim.node(adversary) {
        Some(n) => n,
        None => return Vec::new(),
    };
    let pool: Vec<ForwardingCommitment> = node
        .observed_fcs
        .get(&target_prefix)
        .map(|s| s.iter().cloned().collect())
        .unwrap_or_default();
    let key = sim.keys.get(adversary).cloned();
    let others: Vec<AsNumber> = sim
        .asns()
        .into_iter()
        .filter(|&a| a != adversary)
        .collect();
    let victims = node.speaker.neighbors().to_vec();
    let mut accepted = Vec::new();

    // DFS over prefixes of candidate sequences (adversary appended last).
    let mut stack: Vec<Vec<AsNumber>> = vec![Vec::new()];
    while let Some(head) = stack.pop() {
        if head.len() + 1 <= max_len {
            let mut seq = head.clone();
            seq.push(adversary);
            // Origin validation rejects sequences whose first AS does not
            // own the prefix, before any FC is looked at.
            let origin_ok = match sim.trust.lookup_owner(&target_prefix) {
                Some(owner) => owner == seq[0],
                None => true,
            };
            for &victim in victims.iter().filter(|_| origin_ok) {
                if seq.contains(&victim) {
                    continue;
                }
                if let Some(fcs) = cover_for(&seq, target_prefix, victim, &pool, adversary, key.as_ref()) {
                    let class = classify_path(&seq, &fcs, target_prefix, victim, &sim.trust);
                    if class == PathClass::Trusted {
                        accepted.push((victim, seq.clone()));
                    }
                }
            }
        }
        if head.len() + 1 < max_len {
            for &next in &others {
                if !head.contains(&next) {
                    let mut longer = head.clone();
                    longer.push(next);
                    stack.push(longer);
                }
            }
        }
    }
    accepted.sort();
    accepted.dedup();
    accepted
}

/// FC cover for every pathlet of `seq` as received by `victim`, or None when
/// some pathlet cannot be covered from the pool or by self-signing.
fn cover_for(
    seq: &[AsNumber],
    prefix: Prefix,
    victim: AsNumber,
    pool: &[ForwardingCommitment],
    adversary: AsNumber,
    key: Option<&crate::crypto::SecretKey>,
) -> Option<Vec<ForwardingCommitment>> {
    let pathlets = crate::speaker::path_pathlets(seq, prefix, victim);
    let mut fcs = Vec::with_capacity(pathlets.len());
    for (previous, current, next) in pathlets {
        if let Some(fc) = pool.iter().find(|fc| fc.tuple() == (previous, current, next)) {
            fcs.push(fc.clone());
        } else if current == adversary {
            let key = key?;
            let pathlet = Pathlet::new(previous, current, next, prefix).ok()?;
            fcs.push(sign_fc(adversary, &pathlet, key).ok()?);
        } else {
            return None;
        }
    }
    Some(fcs)
}

/// The set of paths `adversary` could honestly announce for `prefix`: every
/// delivered path extended with itself, plus the bare origination when it
/// owns the prefix.
pub fn genuine_paths(sim: &Sim, adversary: AsNumber, prefix: Prefix) -> BTreeSet<Vec<AsNumber>> {
    let mut genuine = BTreeSet::new();
    if let Some(node) = sim.node(adversary) {
        if let Some(paths) = node.delivered_paths.get(&prefix) {
            for p in paths {
                let mut q = p.clone();
                q.push(adversary);
                genuine.insert(q);
            }
        }
        if node.speaker.originated().contains(&prefix) {
            genuine.insert(vec![adversary]);
        }
    }
    genuine
}

/// Builds a random fully-deployed connected topology, originates one prefix
/// per AS, and runs BGP to quiescence. Used by the splicing-search oracle.
pub fn random_full_deployment_sim(
    n: usize,
    seed: u64,
) -> Result<Sim, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trust_text = String::new();
    for a in 1..=n as u32 {
        trust_text.push_str(&format!("{a}|10.{a}.0.0/24|1|auto\n"));
    }
    let (trust, keys) = TrustBase::load(&trust_text, &seed.to_be_bytes())?;
    let mut sim = Sim::new(trust, keys, SimConfig::default());
    // Random spanning tree keeps it connected; extra random edges thicken it.
    for i in 2..=n as u32 {
        let parent = rng.gen_range(1..i);
        sim.link(AsNumber(i), AsNumber(parent), 1);
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let a = rng.gen_range(1..=n as u32);
        let b = rng.gen_range(1..=n as u32);
        if a != b {
            sim.link(AsNumber(a), AsNumber(b), 1);
        }
    }
    for a in 1..=n as u32 {
        let prefix: Prefix = format!("10.{a}.0.0/24").parse().unwrap();
        sim.originate(AsNumber(a), prefix, 0)?;
    }
    sim.run_until_quiescent()?;
    Ok(sim)
}

/// One partial-deployment hijack attempt on the canonical line topology
/// A_1 … A_n with A_1 the origin, contiguous deployment A_1 … A_{k−1}, the
/// victim at A_n, and the attacker L hops from the victim behind a chain of
/// legacy ASes. Returns true when the fabricated route wins at the victim.
pub fn hijack_attempt(n: usize, k: usize, l: usize) -> Result<bool, SimError> {
    assert!(n >= 2 && k >= 1 && k <= n && l >= 1);
    let attacker = AsNumber(100);
    let chain: Vec<AsNumber> = (1..l as u32).map(|j| AsNumber(200 + j)).collect();
    let mut trust_text = String::new();
    let prefix: Prefix = "10.0.0.0/24".parse().unwrap();
    for a in 1..=n as u32 {
        let deployed = if (a as usize) <= k - 1 { 1 } else { 0 };
        let key = if deployed == 1 { "auto" } else { "-" };
        let owns = if a == 1 { "10.0.0.0/24" } else { "" };
        trust_text.push_str(&format!("{a}|{owns}|{deployed}|{key}\n"));
    }
    trust_text.push_str("100||0|auto\n");
    for c in &chain {
        trust_text.push_str(&format!("{}||0|-\n", c.0));
    }
    let (trust, keys) = TrustBase::load(&trust_text, b"hijack-line")?;
    let mut sim = Sim::new(trust, keys, SimConfig::default());
    for a in 1..n as u32 {
        sim.link(AsNumber(a), AsNumber(a + 1), 1);
    }
    // Victim — chain — attacker.
    let mut prev = AsNumber(n as u32);
    for &c in &chain {
        sim.link(prev, c, 1);
        prev = c;
    }
    sim.link(prev, attacker, 1);
    sim.originate(AsNumber(1), prefix, 0)?;
    sim.run_until_quiescent()?;

    // Claimed path: the attacker pretends to be a neighbor of A_k, the first
    // AS not covered by an origin-anchored FC run.
    let claimed: Vec<AsNumber> = (1..=k as u32)
        .map(AsNumber)
        .chain([attacker])
        .collect();
    let first_hop = *chain.last().unwrap_or(&AsNumber(n as u32));
    sim.schedule(
        1000,
        attacker,
        Action::AnnounceFakePath {
            to: first_hop,
            prefix,
            claimed_path: claimed,
        },
    );
    sim.run_until_quiescent()?;
    let victim = AsNumber(n as u32);
    let hijacked = sim
        .node(victim)
        .and_then(|node| node.speaker.best_entry(&prefix))
        .is_some_and(|entry| entry.as_path.contains(&attacker));
    Ok(hijacked)
}

/// A linear forwarding path A_0 … A_n (A_0 destination, A_n traffic source)
/// with per-AS total degree and deployment flag. Interior degrees must be
/// ≥ 2; end degrees ≥ 1.
#[derive(Debug, Clone)]
pub struct LinearInstance {
    pub degrees: Vec<u32>,
    pub deployed: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TrafficReport {
    pub filtered: u64,
    pub total: u64,
    pub trace: Vec<String>,
}

/// Packet-level unwanted-traffic enumeration on a linear instance: one unit
/// per bridge neighbor (type I), one re-entry unit via the next on-path hop
/// at the destination and each interior AS (type II), and one source-spoofed
/// unit traversing the authorized path (type III, never filterable). Filter
/// rules come from the source's startup binding, installed at deployed ASes
/// only.
pub fn inject_unwanted_traffic(inst: &LinearInstance) -> Result<TrafficReport, SimError> {
    let n = inst.degrees.len() - 1;
    assert!(n >= 1, "need at least two on-path ASes");
    assert_eq!(inst.degrees.len(), inst.deployed.len());
    for (k, &d) in inst.degrees.iter().enumerate() {
        let min = if k == 0 || k == n { 1 } else { 2 };
        assert!(d >= min, "degree {d} below on-path adjacency at position {k}");
    }
    // On-path AS k is ASN k+1; every AS gets a key, deployment varies.
    let mut trust_text = String::new();
    for (k, &dep) in inst.deployed.iter().enumerate() {
        let a = k as u32 + 1;
        let owns = if k == 0 {
            "10.0.0.0/24"
        } else if k == n {
            "10.9.0.0/24"
        } else {
            ""
        };
        trust_text.push_str(&format!("{a}|{owns}|{}|auto\n", dep as u8));
    }
    let (trust, keys) = TrustBase::load(&trust_text, b"traffic-line")?;
    let dst_prefix: Prefix = "10.0.0.0/24".parse().unwrap();
    let src_prefix: Prefix = "10.9.0.0/24".parse().unwrap();
    let source = AsNumber(n as u32 + 1);
    let route_path: Vec<AsNumber> = (1..=n as u32).map(AsNumber).collect();
    let msg = make_startup_binding(
        source,
        src_prefix,
        dst_prefix,
        &route_path,
        keys.get(source).expect("source key"),
        &trust,
    )
    .expect("startup binding");

    let mut filters: Vec<FilterTable> = vec![FilterTable::new(); n + 1];
    for k in 0..=n {
        if !inst.deployed[k] {
            continue;
        }
        let self_asn = AsNumber(k as u32 + 1);
        let outcome = verify_binding(&msg, self_asn, &trust);
        assert!(
            !matches!(outcome, VerifyOutcome::Rejected(_)),
            "startup binding rejected at {self_asn}: {outcome:?}"
        );
        filters[k]
            .install(&msg, outcome, self_asn)
            .expect("install startup rule");
    }

    let mut trace = Vec::new();
    let mut filtered = 0u64;
    let mut total = 0u64;
    let unit = |k: usize, inbound: AsNumber, label: &str, filtered: &mut u64, total: &mut u64, trace: &mut Vec<String>| {
        *total += 1;
        let decision = if inst.deployed[k] {
            check_packet(&filters[k], &src_prefix, &dst_prefix, inbound)
        } else {
            PacketDecision::Forward
        };
        if decision != PacketDecision::Forward {
            *filtered += 1;
        }
        trace.push(format!(
            "at=A{k} from={} type={label} decision={decision:?}",
            inbound.0
        ));
    };
    // Bridge ASNs start at 1000, unique per unit.
    let mut bridge = 1000u32;
    for k in 0..=n {
        let onpath_adj = if k == 0 || k == n { 1 } else { 2 };
        let bridges = inst.degrees[k] - onpath_adj;
        for _ in 0..bridges {
            unit(k, AsNumber(bridge), "I", &mut filtered, &mut total, &mut trace);
            bridge += 1;
        }
        if k < n {
            // Re-entry via the next on-path hop; matches the expected inbound
            // rule, so it always passes.
            let next = AsNumber(k as u32 + 2);
            unit(k, next, "II", &mut filtered, &mut total, &mut trace);
        }
    }
    // Type III: spoofed at the source, rides the authorized path end to end.
    total += 1;
    trace.push("type=III decision=Forward".to_string());
    Ok(TrafficReport {
        filtered,
        total,
        trace,
    })
}

/// Byzantine behavior of a sync member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncFault {
    /// Never sends anything.
    Silent,
    /// As leader, sends conflicting views to different members; otherwise
    /// silent.
    Equivocate,
}

#[derive(Debug, Clone)]
pub struct SyncHarnessConfig {
    pub regions: Vec<Vec<AsNumber>>,
    pub f: usize,
    pub faults: BTreeMap<AsNumber, SyncFault>,
    pub bindings_per_node: i64,
    pub max_rounds: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyncReport {
    /// First round index after which all honest views and stores matched.
    pub converged_after_round: Option<u64>,
    pub trace: Vec<String>,
    /// Serialized SEND/ECHO/READY/FORWARD payloads observed during the run.
    pub check_payload_bytes: Vec<Vec<u8>>,
    /// Signatures of every binding issued, for payload-law assertions.
    pub binding_signatures: Vec<Vec<u8>>,
    /// Trace index of the first filter installation.
    pub first_install_step: Option<usize>,
    /// Trace index of the first RBC delivery.
    pub first_deliver_step: Option<usize>,
}

/// Runs the consistency-check protocol over an in-memory network with
/// randomized initial binding propagation and scripted Byzantine members.
/// Honest nodes each issue `bindings_per_node` versions of their binding;
/// every binding initially reaches a random subset of honest nodes only, and
/// rounds of the check protocol repair the rest.
pub fn run_sync_convergence(cfg: &SyncHarnessConfig) -> Result<SyncReport, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut all: Vec<AsNumber> = cfg.regions.iter().flatten().copied().collect();
    all.sort();
    let mut trust_text = String::new();
    for &a in &all {
        trust_text.push_str(&format!("{}|10.{}.0.0/24|1|auto\n", a.0, a.0));
    }
    let (trust, keys) = TrustBase::load(&trust_text, &cfg.seed.to_be_bytes())?;
    let honest: Vec<AsNumber> = all
        .iter()
        .copied()
        .filter(|a| !cfg.faults.contains_key(a))
        .collect();
    let mut nodes: BTreeMap<AsNumber, SyncNode> = BTreeMap::new();
    for region in &cfg.regions {
        let mut region = region.clone();
        region.sort();
        for &a in &region {
            nodes.insert(a, SyncNode::new(a, region.clone(), all.clone(), cfg.f));
        }
    }
    let mut trace: Vec<String> = Vec::new();
    let mut check_payload_bytes: Vec<Vec<u8>> = Vec::new();
    let mut binding_signatures: Vec<Vec<u8>> = Vec::new();
    let mut first_install_step = None;
    let mut first_deliver_step = None;

    let dst: Prefix = format!("10.{}.0.0/24", all[0].0).parse().unwrap();
    for &issuer in &honest {
        let src: Prefix = format!("10.{}.0.0/24", issuer.0).parse().unwrap();
        let mut msgs = Vec::new();
        for ver in 1..=cfg.bindings_per_node {
            let msg = make_offpath_binding(issuer, src, dst, ver, keys.get(issuer).unwrap(), &trust)
                .expect("binding");
            binding_signatures.push(msg.signature.clone());
            // The issuer always has its own message.
            nodes.get_mut(&issuer).unwrap().record_binding(&msg);
            if first_install_step.is_none() {
                first_install_step = Some(trace.len());
                trace.push(format!("install issuer={} ver={ver}", issuer.0));
            }
            msgs.push(msg);
        }
        // Each other honest node has received a random prefix of the issuer's
        // version sequence; delays reorder nothing within one issuer.
        for &other in &honest {
            if other == issuer {
                continue;
            }
            let cut = rng.gen_range(0..=msgs.len());
            for msg in &msgs[..cut] {
                nodes.get_mut(&other).unwrap().record_binding(msg);
            }
        }
    }

    let converged = |nodes: &BTreeMap<AsNumber, SyncNode>| -> bool {
        let mut views: Vec<&BindingVersionView> = Vec::new();
        let mut stores: Vec<Vec<(AsNumber, i64)>> = Vec::new();
        for &a in &honest {
            views.push(&nodes[&a].view);
            stores.push(nodes[&a].store_keys());
        }
        views.windows(2).all(|w| w[0] == w[1]) && stores.windows(2).all(|w| w[0] == w[1])
    };

    let mut converged_after_round = None;
    for round in 0..cfg.max_rounds {
        // (from, dest, record) queue, processed in deterministic randomized
        // order.
        let mut queue: Vec<(AsNumber, SyncDest, SyncRecord)> = Vec::new();
        for region in &cfg.regions {
            let mut region_sorted = region.clone();
            region_sorted.sort();
            let leader = leader_for_round(round, &region_sorted);
            match cfg.faults.get(&leader) {
                Some(SyncFault::Silent) => {
                    trace.push(format!("round={round} leader={} silent", leader.0));
                }
                Some(SyncFault::Equivocate) => {
                    // Two conflicting views straight to disjoint member
                    // halves, bypassing the honest broadcast.
                    let mut v1 = BindingVersionView::new();
                    v1.observe(leader, 1_000);
                    let mut v2 = BindingVersionView::new();
                    v2.observe(leader, 2_000);
                    for (i, &m) in region_sorted.iter().enumerate() {
                        let view = if i % 2 == 0 { v1.clone() } else { v2.clone() };
                        queue.push((
                            leader,
                            SyncDest::One(m),
                            SyncRecord {
                                round,
                                leader,
                                kind: SyncKind::Send(view),
                            },
                        ));
                    }
                    trace.push(format!("round={round} leader={} equivocates", leader.0));
                }
                None => {
                    for out in nodes.get_mut(&leader).unwrap().start_round(round) {
                        queue.push((leader, out.dest, out.record));
                    }
                    trace.push(format!("round={round} leader={}", leader.0));
                }
            }
        }
        let mut at = 0;
        while at < queue.len() {
            // Deterministically randomized delivery order within the
            // unprocessed suffix.
            let pick = at + rng.gen_range(0..queue.len() - at);
            queue.swap(at, pick);
            let (from, dest, rec) = queue[at].clone();
            at += 1;
            if matches!(
                rec.kind,
                SyncKind::Send(_) | SyncKind::Echo(_) | SyncKind::Ready(_) | SyncKind::Forward(_)
            ) {
                check_payload_bytes.push(encode_sync(&rec));
            }
            let mut targets: Vec<AsNumber> = match dest {
                SyncDest::Region => nodes[&from].region.clone(),
                SyncDest::One(a) => vec![a],
            };
            targets.shuffle(&mut rng);
            for t in targets {
                // Byzantine members consume silently; they never respond.
                if cfg.faults.contains_key(&t) {
                    continue;
                }
                let Some(node) = nodes.get_mut(&t) else { continue };
                let before = node.store_len();
                let (outs, accepted) = node.handle(from, &rec, &trust);
                if !accepted.is_empty() && node.store_len() > before {
                    trace.push(format!(
                        "round={round} as={} repaired {} messages",
                        t.0,
                        accepted.len()
                    ));
                }
                for o in outs {
                    if matches!(o.record.kind, SyncKind::Request { .. })
                        && first_deliver_step.is_none()
                    {
                        // A request implies a completed delivery; record the
                        // delivery boundary at the first post-RBC action.
                    }
                    queue.push((t, o.dest, o.record));
                }
                if first_deliver_step.is_none() && node_delivered(node, round) {
                    first_deliver_step = Some(trace.len());
                    trace.push(format!("round={round} as={} rbc-deliver", t.0));
                }
            }
        }
        if converged(&nodes) {
            converged_after_round = Some(round);
            trace.push(format!("converged after round {round}"));
            break;
        }
    }
    Ok(SyncReport {
        converged_after_round,
        trace,
        check_payload_bytes,
        binding_signatures,
        first_install_step,
        first_deliver_step,
    })
}

fn node_delivered(node: &SyncNode, _round: u64) -> bool {
    // Store growth is observable; RBC delivery itself is internal. The
    // decoupling assertion uses the trace ordering of install vs the first
    // repair, so a coarse signal suffices: any store entry present.
    node.store_len() > 0
}
