//! Property tests for the structural invariants: codecs roundtrip, version
//! views behave like a join-semilattice, reconcile is exhaustive, the
//! filtering formula is bounded and monotone, churn counters add up.

use std::collections::BTreeMap;

use proptest::prelude::*;

use fcbgp::analysis::{filtering_rate, update_churn_stats, UpdateRecord};
use fcbgp::binding::{decode_binding, encode_binding, BindingMessage};
use fcbgp::sync::{reconcile, BindingVersionView, SyncAction};
use fcbgp::trust::{AsNumber, Prefix};
use fcbgp::wire::{decode_update, encode_update, BgpUpdate};
use fcbgp::{canonical_digest, ForwardingCommitment, Pathlet};

fn arb_prefix() -> impl Strategy<Value = Prefix> {
    (any::<[u8; 4]>(), 0u8..=32).prop_map(|(addr, mask)| Prefix::from_bytes(&addr, mask).unwrap())
}

fn arb_asn() -> impl Strategy<Value = AsNumber> {
    (1u32..100_000).prop_map(AsNumber)
}

fn arb_path() -> impl Strategy<Value = Vec<AsNumber>> {
    prop::collection::btree_set(1u32..5_000, 1..8)
        .prop_map(|s| s.into_iter().map(AsNumber).collect())
}

fn arb_fc() -> impl Strategy<Value = ForwardingCommitment> {
    (
        prop::option::of(arb_asn()),
        arb_asn(),
        arb_asn(),
        prop::collection::vec(any::<u8>(), 0..100),
    )
        .prop_map(|(prev, cur, next, sig)| ForwardingCommitment {
            previous: prev.unwrap_or(AsNumber::NULL),
            current: cur,
            next,
            signature: sig,
        })
}

fn arb_update() -> impl Strategy<Value = BgpUpdate> {
    (
        arb_prefix(),
        arb_path(),
        prop::collection::vec(arb_fc(), 0..8),
        any::<bool>(),
    )
        .prop_map(|(prefix, path, mut fcs, withdraw)| {
            if withdraw {
                BgpUpdate::withdrawal(prefix, path)
            } else {
                fcs.truncate(path.len());
                BgpUpdate::announcement(prefix, path, &fcs).unwrap()
            }
        })
}

fn arb_view() -> impl Strategy<Value = BindingVersionView> {
    prop::collection::btree_map(1u32..50, 0i64..40, 0..12).prop_map(|m| {
        let mut v = BindingVersionView::new();
        for (a, ver) in m {
            v.observe(AsNumber(a), ver);
        }
        v
    })
}

proptest! {
    #[test]
    fn update_codec_roundtrips(update in arb_update()) {
        let bytes = encode_update(&update).unwrap();
        let back = decode_update(&bytes).unwrap();
        prop_assert_eq!(&back, &update);
        prop_assert_eq!(encode_update(&back).unwrap(), bytes);
    }

    #[test]
    fn e_bit_tracks_fc_count(update in arb_update()) {
        if let Some(attr) = update.fc_attribute() {
            let fcs = update.fcs().unwrap();
            prop_assert_eq!(attr.extended(), fcs.len() > 1);
        }
    }

    #[test]
    fn binding_codec_roundtrips(
        src in arb_prefix(),
        dst in arb_prefix(),
        fcs in prop::collection::vec(arb_fc(), 0..6),
        ver in -1i64..1000,
        ver_sub in 0u32..10,
        issuer in arb_asn(),
        sig in prop::collection::vec(any::<u8>(), 0..100),
    ) {
        let msg = BindingMessage {
            src_prefix: src,
            dst_prefix: dst,
            fc_list: fcs,
            ver,
            ver_sub,
            issuer,
            signature: sig,
        };
        let bytes = encode_binding(&msg);
        prop_assert_eq!(decode_binding(&bytes).unwrap(), msg);
    }

    #[test]
    fn pathlet_digest_separates_tuples(
        a in 1u32..1000, b in 1u32..1000, c in 1u32..1000,
        d in 1u32..1000, e in 1u32..1000, f in 1u32..1000,
        prefix in arb_prefix(),
    ) {
        prop_assume!(a != b && b != c && d != e && e != f);
        prop_assume!((a, b, c) != (d, e, f));
        let p1 = Pathlet::new(AsNumber(a), AsNumber(b), AsNumber(c), prefix).unwrap();
        let p2 = Pathlet::new(AsNumber(d), AsNumber(e), AsNumber(f), prefix).unwrap();
        prop_assert_ne!(canonical_digest(&p1), canonical_digest(&p2));
    }

    #[test]
    fn view_merge_is_join(a in arb_view(), b in arb_view(), c in arb_view()) {
        // Commutative.
        let mut ab = a.clone();
        ab.merge_max(&b);
        let mut ba = b.clone();
        ba.merge_max(&a);
        prop_assert_eq!(&ab, &ba);
        // Idempotent.
        let mut aa = a.clone();
        aa.merge_max(&a);
        prop_assert_eq!(&aa, &a);
        // Associative.
        let mut ab_c = ab.clone();
        ab_c.merge_max(&c);
        let mut bc = b.clone();
        bc.merge_max(&c);
        let mut a_bc = a.clone();
        a_bc.merge_max(&bc);
        prop_assert_eq!(ab_c, a_bc);
    }

    #[test]
    fn view_codec_roundtrips(v in arb_view()) {
        prop_assert_eq!(BindingVersionView::decode(&v.encode()).unwrap(), v);
    }

    #[test]
    fn reconcile_is_exhaustive(local in arb_view(), delivered in arb_view()) {
        // Every divergent entry yields exactly one action of the right kind;
        // agreeing entries yield none.
        let actions = reconcile(&local, &delivered);
        let mut seen = BTreeMap::new();
        for action in &actions {
            match action {
                SyncAction::RequestMissing { asn, from_ver, to_ver } => {
                    prop_assert_eq!(*from_ver, local.version_of(*asn) + 1);
                    prop_assert_eq!(*to_ver, delivered.version_of(*asn));
                    prop_assert!(local.version_of(*asn) < delivered.version_of(*asn));
                    prop_assert!(seen.insert(*asn, ()).is_none());
                }
                SyncAction::SendNewer { asn, ver } => {
                    prop_assert_eq!(*ver, local.version_of(*asn));
                    prop_assert!(local.version_of(*asn) > delivered.version_of(*asn));
                    prop_assert!(seen.insert(*asn, ()).is_none());
                }
            }
        }
        for (asn, _) in local.entries.iter().chain(delivered.entries.iter()) {
            let divergent = local.version_of(*asn) != delivered.version_of(*asn);
            prop_assert_eq!(divergent, seen.contains_key(asn));
        }
    }

    #[test]
    fn filtering_rate_bounded_and_monotone(
        degrees in prop::collection::vec(2u32..7, 2..9),
        deployed in prop::collection::vec(any::<bool>(), 8),
        flip in 0usize..8,
    ) {
        let n = degrees.len();
        let deployed: Vec<bool> = deployed.into_iter().take(n).collect();
        let f = filtering_rate(&degrees, &deployed).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        // Turning one more AS on never lowers the rate.
        let mut more = deployed.clone();
        more[flip % n] = true;
        let f2 = filtering_rate(&degrees, &more).unwrap();
        prop_assert!(f2 >= f);
        // Full deployment filters everything but the two unfilterable units.
        let all = filtering_rate(&degrees, &vec![true; n]).unwrap();
        let m = 2 + degrees.iter().map(|&d| d as u64 - 1).sum::<u64>();
        prop_assert!((all - (m - n as u64) as f64 / m as f64).abs() < 1e-12);
    }

    #[test]
    fn churn_counters_add_up(
        raw in prop::collection::vec(
            (1u32..5, 0u8..3, prop::collection::btree_set(1u32..40, 2..6)),
            1..40,
        ),
    ) {
        let prefixes: [Prefix; 3] = [
            "10.0.0.0/24".parse().unwrap(),
            "10.1.0.0/24".parse().unwrap(),
            "10.2.0.0/24".parse().unwrap(),
        ];
        let stream: Vec<UpdateRecord> = raw
            .into_iter()
            .map(|(src, p, path)| {
                (
                    AsNumber(src),
                    prefixes[p as usize],
                    path.into_iter().map(AsNumber).collect(),
                )
            })
            .collect();
        let stats = update_churn_stats(&stream);
        prop_assert_eq!(stats.total as usize, stream.len());
        prop_assert_eq!(stats.new_path + stats.path_change + stats.duplicate, stats.total);
        prop_assert_eq!(
            stats.changed_fc_histogram.values().sum::<u64>(),
            stats.path_change
        );
        prop_assert!((0.0..=1.0).contains(&stats.unchanged_fc_fraction));
    }
}
