//! Topology ingestion and closed-form security metrics: control-plane
//! hijacking rate, data-plane filtering rate, and update-churn accounting.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::par::map_collect;
use crate::trust::{AsNumber, Prefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relationship {
    /// The keyed AS is the provider of this neighbor.
    Customer,
    /// The keyed AS is the customer of this neighbor.
    Provider,
    Peer,
}

impl Relationship {
    fn inverse(self) -> Self {
        match self {
            Relationship::Customer => Relationship::Provider,
            Relationship::Provider => Relationship::Customer,
            Relationship::Peer => Relationship::Peer,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AsTopology {
    pub adjacency: BTreeMap<AsNumber, BTreeMap<AsNumber, Relationship>>,
    pub prefix_ownership: BTreeMap<Prefix, AsNumber>,
    /// AS-path samples, origin first.
    pub monitored_paths: Vec<Vec<AsNumber>>,
}

impl AsTopology {
    pub fn degree(&self, asn: AsNumber) -> usize {
        self.adjacency.get(&asn).map_or(0, BTreeMap::len)
    }

    pub fn as_count(&self) -> usize {
        self.adjacency.len()
    }

    fn add_edge(&mut self, a: AsNumber, b: AsNumber, rel: Relationship) -> Result<(), ()> {
        if a == b {
            return Err(());
        }
        if let Some(existing) = self.adjacency.get(&a).and_then(|m| m.get(&b)) {
            return if *existing == rel { Ok(()) } else { Err(()) };
        }
        self.adjacency.entry(a).or_default().insert(b, rel);
        self.adjacency.entry(b).or_default().insert(a, rel.inverse());
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: conflicting relationship for duplicate edge")]
    Conflict { line: usize },
    #[error("interior on-path AS at position {0} has degree < 2")]
    Degenerate(usize),
    #[error("no monitored paths")]
    NoPaths,
}

/// Parses the AS-relationship (`as1|as2|rel`, rel −1 provider-to-customer,
/// 0 peer) and prefix-to-AS (`address<TAB>length<TAB>asn`) formats. `#`
/// lines are comments; multi-origin prefix entries go to the first listed
/// ASN.
pub fn load_topology(as_rel: &str, prefix2as: &str) -> Result<AsTopology, AnalysisError> {
    let mut topo = AsTopology::default();
    for (i, raw) in as_rel.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() < 3 {
            return Err(AnalysisError::Parse {
                line,
                reason: format!("expected as1|as2|rel, got {text:?}"),
            });
        }
        let asn = |s: &str| -> Result<AsNumber, AnalysisError> {
            s.parse::<u32>().map(AsNumber).map_err(|_| AnalysisError::Parse {
                line,
                reason: format!("bad AS number {s:?}"),
            })
        };
        let a = asn(parts[0])?;
        let b = asn(parts[1])?;
        let rel = match parts[2] {
            "-1" => Relationship::Customer,
            "0" => Relationship::Peer,
            other => {
                return Err(AnalysisError::Parse {
                    line,
                    reason: format!("bad relationship {other:?}"),
                })
            }
        };
        topo.add_edge(a, b, rel)
            .map_err(|()| AnalysisError::Conflict { line })?;
    }
    for (i, raw) in prefix2as.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = text.split('\t').collect();
        if parts.len() != 3 {
            return Err(AnalysisError::Parse {
                line,
                reason: format!("expected address<TAB>length<TAB>asn, got {text:?}"),
            });
        }
        let prefix: Prefix = format!("{}/{}", parts[0], parts[1])
            .parse()
            .map_err(|e| AnalysisError::Parse {
                line,
                reason: format!("bad prefix: {e}"),
            })?;
        // Multi-origin sets are separated by `_` or `,`; first one wins.
        let first = parts[2]
            .split(['_', ','])
            .next()
            .unwrap_or_default();
        let owner = first
            .parse::<u32>()
            .map(AsNumber)
            .map_err(|_| AnalysisError::Parse {
                line,
                reason: format!("bad origin ASN {:?}", parts[2]),
            })?;
        topo.prefix_ownership.insert(prefix, owner);
    }
    Ok(topo)
}

#[derive(Debug, Clone)]
pub struct DeploymentPlan {
    pub rate: f64,
    pub deployed: BTreeSet<AsNumber>,
}

impl DeploymentPlan {
    /// Top ⌈rate·N⌉ ASes by descending degree, ties by ascending ASN. Plans
    /// for increasing rates are nested.
    pub fn top_by_degree(topo: &AsTopology, rate: f64) -> Self {
        assert!((0.0..=1.0).contains(&rate), "rate must be in [0,1]");
        let count = (rate * topo.as_count() as f64).ceil() as usize;
        let mut ranked: Vec<AsNumber> = topo.adjacency.keys().copied().collect();
        ranked.sort_by_key(|&a| (std::cmp::Reverse(topo.degree(a)), a.0));
        DeploymentPlan {
            rate,
            deployed: ranked.into_iter().take(count).collect(),
        }
    }

    pub fn is_deployed(&self, asn: AsNumber) -> bool {
        self.deployed.contains(&asn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HijackMode {
    FcBgp,
    BgpSec,
}

/// Whether one monitored path is hijackable by an attacker `l` hops from the
/// path's last AS. `deployed_run` is K−1, the length of the origin-anchored
/// deployed prefix of the path; `n` is the AS count N.
pub fn path_hijackable(mode: HijackMode, n: usize, deployed_run: usize, l: usize, any_undeployed: bool) -> bool {
    match mode {
        // The fake route attaches after A_K and needs K+L hops; it wins only
        // when strictly shorter than the real N−1 hops.
        HijackMode::FcBgp => n - 1 > deployed_run + 1 + l,
        // BGPsec protects a path only when every on-path AS signs; otherwise
        // the attacker forges a neighbor-of-origin route of 1+L hops.
        HijackMode::BgpSec => any_undeployed && n - 1 > 1 + l,
    }
}

/// Fraction of monitored paths hijackable from `l` hops away under `plan`.
pub fn hijacking_rate(
    topo: &AsTopology,
    plan: &DeploymentPlan,
    l: usize,
    mode: HijackMode,
) -> Result<f64, AnalysisError> {
    if topo.monitored_paths.is_empty() {
        return Err(AnalysisError::NoPaths);
    }
    let flags: Vec<bool> = map_collect(&topo.monitored_paths, |path| {
        let n = path.len();
        if n < 2 {
            return false;
        }
        let run = path.iter().take_while(|a| plan.is_deployed(**a)).count();
        let any_undeployed = path.iter().any(|a| !plan.is_deployed(*a));
        path_hijackable(mode, n, run, l, any_undeployed)
    });
    let hits = flags.iter().filter(|&&b| b).count();
    Ok(hits as f64 / topo.monitored_paths.len() as f64)
}

/// Closed-form filtering rate for one linear instance: degrees D_0..D_n and
/// deployment flags t_0..t_n (destination first, traffic source last).
///
/// M = 2 + Σ(D_k − 1); y_0 = (D_0−1)t_0; y_k = (D_k−2)t_k for interior k;
/// y_n = (D_n−1)t_n; F = Σy_k / M. t_k is 1 exactly when A_k deploys: the
/// published equation prints the inverted indicator, which contradicts its
/// own prose and the reported monotone curves, so the prose reading is used
/// here.
pub fn filtering_rate(degrees: &[u32], deployed: &[bool]) -> Result<f64, AnalysisError> {
    assert_eq!(degrees.len(), deployed.len());
    let n = degrees.len() - 1;
    assert!(n >= 1, "need at least two on-path ASes");
    let mut m = 2u64;
    let mut filtered = 0u64;
    for (k, (&d, &t)) in degrees.iter().zip(deployed).enumerate() {
        let interior = k != 0 && k != n;
        if interior && d < 2 {
            return Err(AnalysisError::Degenerate(k));
        }
        m += (d as u64).saturating_sub(1);
        let y = if interior {
            (d as u64) - 2
        } else {
            (d as u64).saturating_sub(1)
        };
        if t {
            filtered += y;
        }
    }
    Ok(filtered as f64 / m as f64)
}

/// Integer unit counts for the same instance, for exact comparison against
/// packet-level enumeration.
pub fn filtering_counts(degrees: &[u32], deployed: &[bool]) -> Result<(u64, u64), AnalysisError> {
    let n = degrees.len() - 1;
    let mut m = 2u64;
    let mut filtered = 0u64;
    for (k, (&d, &t)) in degrees.iter().zip(deployed).enumerate() {
        let interior = k != 0 && k != n;
        if interior && d < 2 {
            return Err(AnalysisError::Degenerate(k));
        }
        m += (d as u64).saturating_sub(1);
        let y = if interior {
            (d as u64) - 2
        } else {
            (d as u64).saturating_sub(1)
        };
        if t {
            filtered += y;
        }
    }
    Ok((filtered, m))
}

/// Mean filtering rate over the monitored paths at each deployment rate.
/// Returns (rate, mean F) rows; the curve is non-decreasing because plans
/// are nested.
pub fn average_filtering_curve(
    topo: &AsTopology,
    rates: &[f64],
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    if topo.monitored_paths.is_empty() {
        return Err(AnalysisError::NoPaths);
    }
    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let plan = DeploymentPlan::top_by_degree(topo, rate);
        let values: Vec<f64> = map_collect(&topo.monitored_paths, |path| {
            let degrees: Vec<u32> = path.iter().map(|&a| topo.degree(a) as u32).collect();
            let deployed: Vec<bool> = path.iter().map(|&a| plan.is_deployed(a)).collect();
            filtering_rate(&degrees, &deployed).unwrap_or(0.0)
        });
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        rows.push((rate, mean));
    }
    Ok(rows)
}

/// One update observation: the announcing AS, the prefix, and the announced
/// path (origin first).
pub type UpdateRecord = (AsNumber, Prefix, Vec<AsNumber>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChurnStats {
    pub total: u64,
    pub new_path: u64,
    pub path_change: u64,
    pub duplicate: u64,
    /// FCs that survive unchanged across all path-change updates, as a
    /// fraction of the FCs on the old paths.
    pub unchanged_fc_fraction: f64,
    /// Changed-FC count per path-change update.
    pub changed_fc_histogram: BTreeMap<usize, u64>,
}

impl ChurnStats {
    pub fn new_path_fraction(&self) -> f64 {
        self.new_path as f64 / self.total as f64
    }

    pub fn path_change_fraction(&self) -> f64 {
        self.path_change as f64 / self.total as f64
    }
}

/// Pathlets of a stored path (no external receiver): n−1 tuples for n ASes.
fn own_pathlets(path: &[AsNumber]) -> BTreeSet<(AsNumber, AsNumber, AsNumber)> {
    (0..path.len().saturating_sub(1))
        .map(|i| {
            let prev = if i == 0 { AsNumber::NULL } else { path[i - 1] };
            (prev, path[i], path[i + 1])
        })
        .collect()
}

/// Classifies a stream of updates into new-path, path-change, and duplicate
/// per (announcing AS, prefix) key; for path changes, the changed-FC count is
/// the number of new pathlets absent from the old path.
pub fn update_churn_stats(stream: &[UpdateRecord]) -> ChurnStats {
    let mut stats = ChurnStats::default();
    let mut last: BTreeMap<(AsNumber, Prefix), Vec<AsNumber>> = BTreeMap::new();
    let mut unchanged = 0u64;
    let mut old_total = 0u64;
    for (src, prefix, path) in stream {
        stats.total += 1;
        match last.get(&(*src, *prefix)) {
            None => {
                stats.new_path += 1;
                last.insert((*src, *prefix), path.clone());
            }
            Some(old) if old == path => {
                stats.duplicate += 1;
            }
            Some(old) => {
                stats.path_change += 1;
                let old_set = own_pathlets(old);
                let new_set = own_pathlets(path);
                let changed = new_set.difference(&old_set).count();
                unchanged += old_set.intersection(&new_set).count() as u64;
                old_total += old_set.len() as u64;
                *stats.changed_fc_histogram.entry(changed).or_insert(0) += 1;
                last.insert((*src, *prefix), path.clone());
            }
        }
    }
    stats.unchanged_fc_fraction = if old_total == 0 {
        0.0
    } else {
        unchanged as f64 / old_total as f64
    };
    stats
}

/// Scale-free topology by preferential attachment: each new AS links to
/// `m` existing ASes with probability proportional to degree. The higher-
/// degree endpoint becomes the provider.
pub fn generate_scale_free(n: usize, m: usize, seed: u64) -> AsTopology {
    assert!(n > m && m >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut topo = AsTopology::default();
    // Degree-weighted endpoint pool: each edge contributes both endpoints.
    let mut pool: Vec<AsNumber> = Vec::new();
    // Seed clique over the first m+1 ASes.
    for a in 1..=(m + 1) as u32 {
        for b in (a + 1)..=(m + 1) as u32 {
            topo.add_edge(AsNumber(a), AsNumber(b), Relationship::Customer)
                .unwrap();
            pool.push(AsNumber(a));
            pool.push(AsNumber(b));
        }
    }
    for a in (m as u32 + 2)..=(n as u32) {
        let new = AsNumber(a);
        let mut chosen = BTreeSet::new();
        while chosen.len() < m {
            let pick = pool[rng.gen_range(0..pool.len())];
            chosen.insert(pick);
        }
        for b in chosen {
            // The established (higher-degree) side provides transit.
            topo.add_edge(new, b, Relationship::Provider).unwrap();
            pool.push(new);
            pool.push(b);
        }
    }
    // Fix up provider direction to follow final degrees.
    let edges: Vec<(AsNumber, AsNumber)> = topo
        .adjacency
        .iter()
        .flat_map(|(&a, nbrs)| nbrs.keys().map(move |&b| (a, b)))
        .filter(|(a, b)| a < b)
        .collect();
    for (a, b) in edges {
        let rel = if topo.degree(a) >= topo.degree(b) {
            Relationship::Customer
        } else {
            Relationship::Provider
        };
        topo.adjacency.get_mut(&a).unwrap().insert(b, rel);
        topo.adjacency.get_mut(&b).unwrap().insert(a, rel.inverse());
    }
    topo
}

/// Samples `count` valley-free AS paths (origin first): an uphill
/// customer-to-provider segment, at most one peer step, then a downhill
/// segment. Self-avoiding; short paths are kept as long as they have ≥ 2
/// ASes.
pub fn generate_monitored_paths(topo: &mut AsTopology, count: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let asns: Vec<AsNumber> = topo.adjacency.keys().copied().collect();
    let mut paths = Vec::with_capacity(count);
    while paths.len() < count {
        let origin = asns[rng.gen_range(0..asns.len())];
        let mut path = vec![origin];
        let mut phase = 0; // 0 uphill, 1 after peer, 2 downhill
        let target_len = rng.gen_range(2..=6usize);
        while path.len() < target_len {
            let cur = *path.last().unwrap();
            let nbrs = &topo.adjacency[&cur];
            let allowed: Vec<AsNumber> = nbrs
                .iter()
                .filter(|(n, rel)| {
                    if path.contains(n) {
                        return false;
                    }
                    match (phase, rel) {
                        (0, _) => true,
                        (1, Relationship::Customer) => true,
                        (2, Relationship::Customer) => true,
                        _ => false,
                    }
                })
                .map(|(&n, _)| n)
                .collect();
            if allowed.is_empty() {
                break;
            }
            let next = allowed[rng.gen_range(0..allowed.len())];
            let rel = topo.adjacency[&cur][&next];
            phase = match (phase, rel) {
                (0, Relationship::Provider) => 0,
                (0, Relationship::Peer) => 1,
                _ => 2,
            };
            path.push(next);
        }
        if path.len() >= 2 {
            paths.push(path);
        }
    }
    topo.monitored_paths = paths;
}

/// CSV rows for the hijack sweep: rate,l,mode,value.
pub fn hijack_csv(rows: &[(f64, usize, HijackMode, f64)]) -> String {
    let mut out = String::from("rate,l,mode,hijack_rate\n");
    for (rate, l, mode, v) in rows {
        let mode = match mode {
            HijackMode::FcBgp => "fcbgp",
            HijackMode::BgpSec => "bgpsec",
        };
        out.push_str(&format!("{rate},{l},{mode},{v}\n"));
    }
    out
}

/// CSV rows for the filtering curve: rate,mean_f.
pub fn filtering_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("rate,mean_f\n");
    for (rate, f) in rows {
        out.push_str(&format!("{rate},{f}\n"));
    }
    out
}
