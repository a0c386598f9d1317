use std::collections::BTreeMap;
use std::path::Path;

use countingstars::baselines::Scheme;
use countingstars::flows::{DistanceMatrix, FlowKey};
use countingstars::sim::harness::{
    forward_packet, reroute_on_change, run, run_with_plan, Cursors, EpochPlan, InFlight, Plan,
    RunOptions,
};
use countingstars::sim::Scenario;
use countingstars::topology::{LinkKind, SatId, TopologySnapshot};

const SMALL: &str = r#"
name = "small"
rng_seed = 4
epoch_s = 1.0
horizon_s = 4.0
memory_bytes = 4096

[constellation]
kind = "walker"
planes = 6
sats_per_plane = 11
altitude_km = 780.0
inclination_deg = 86.4
phasing_offset = 2
raan_spread_deg = 180.0

[traffic]
offerload = 0.9
isl_bandwidth_b = 18.5
n_stations = 20
station_seed = 7
min_elevation_deg = 8.2
"#;

fn small() -> Scenario {
    Scenario::from_toml(SMALL, Path::new(".")).unwrap()
}

fn snapshot(n: usize, edges: &[(SatId, SatId)]) -> TopologySnapshot {
    let mut g = TopologySnapshot::empty(0.0, n);
    for &(a, b) in edges {
        g.edges.insert((a.min(b), a.max(b)), LinkKind::Visible);
    }
    g
}

fn epoch_plan(g: TopologySnapshot) -> EpochPlan {
    let adjacency = g.adjacency();
    EpochPlan {
        index: 0,
        t_s: 0.0,
        dist: DistanceMatrix::from_adjacency(&adjacency),
        adjacency,
        snapshot: g,
        access: vec![],
    }
}

#[test]
fn predicted_sets_cover_every_hop_and_counts_conserve() {
    let s = small();
    let plan = Plan::build(&s).unwrap();
    let reports = run_with_plan(&s, &plan, RunOptions { retain_maps: true }).unwrap();
    assert_eq!(reports.len(), 4);
    for (r, ep) in reports.iter().zip(&plan.epochs) {
        assert!(r.packets_injected > 0);
        assert_eq!(r.packets_injected, r.packets_delivered);
        assert!(r.schemes.iter().all(|x| x.prediction_misses == 0));
        let truth = r.truth.as_ref().unwrap();
        let mut per_flow: BTreeMap<FlowKey, u64> = BTreeMap::new();
        let mut at_src: BTreeMap<FlowKey, u64> = BTreeMap::new();
        for (&(sat, f, _), &v) in truth {
            *per_flow.entry(f).or_default() += v;
            if sat == f.src {
                *at_src.entry(f).or_default() += v;
            }
            assert_ne!(sat, f.dst, "destination never forwards");
        }
        for (f, total) in per_flow {
            assert_eq!(
                total,
                at_src[&f] * ep.dist.get(f.src, f.dst) as u64,
                "{f:?}"
            );
        }
    }
}

#[test]
fn runs_are_pure_functions_of_the_scenario() {
    let s = small();
    let a = run(&s, RunOptions { retain_maps: true }).unwrap();
    let b = run(&s, RunOptions { retain_maps: true }).unwrap();
    assert_eq!(a, b);
    let mut other = s.clone();
    other.rng_seed += 1;
    assert_ne!(run(&other, RunOptions { retain_maps: true }).unwrap(), a);
}

#[test]
fn ample_cs_memory_is_exact() {
    let mut s = small();
    s.schemes = vec!["cs".into()];
    let plan = Plan::build(&s).unwrap();
    s.memory_overrides
        .insert("cs".into(), 8 * plan.max_h() as usize);
    for r in run_with_plan(&s, &plan, RunOptions { retain_maps: true }).unwrap() {
        let cs = &r.schemes[0];
        assert_eq!(cs.estimates, r.truth);
        assert_eq!(
            (cs.metrics.are, cs.metrics.wmre, cs.metrics.re),
            (0.0, 0.0, 0.0)
        );
    }
}

#[test]
fn negligible_load_gives_all_zero() {
    let mut s = small();
    s.traffic.isl_bandwidth_b = 1e-9;
    for r in run(&s, RunOptions { retain_maps: true }).unwrap() {
        assert_eq!(r.packets_injected, 0);
        assert!(r.truth.as_ref().unwrap().is_empty());
        for x in &r.schemes {
            assert!(x.estimates.as_ref().unwrap().is_empty(), "{:?}", x.scheme);
            assert_eq!(x.metrics.are, 0.0);
        }
    }
}

#[test]
fn hop_delay_carries_packets_across_epochs() {
    let mut s = small();
    s.hop_delay_s = 0.35;
    let r = run(&s, RunOptions::default()).unwrap();
    let injected: u64 = r.iter().map(|e| e.packets_injected).sum();
    let delivered: u64 = r.iter().map(|e| e.packets_delivered).sum();
    let dropped: u64 = r.iter().map(|e| e.packets_dropped).sum();
    assert!(
        delivered + dropped < injected,
        "some packets still in flight at the horizon"
    );
    assert!(r
        .iter()
        .skip(1)
        .any(|e| e.packets_delivered > e.packets_injected));
}

#[test]
fn lost_seed_uploads_blind_cs_only() {
    let mut s = small();
    s.control_loss_prob = 1.0;
    for r in run(&s, RunOptions { retain_maps: true }).unwrap() {
        assert_eq!(r.control_losses, 66);
        for x in &r.schemes {
            let empty = x.estimates.as_ref().unwrap().is_empty();
            assert_eq!(empty, x.scheme == Scheme::Cs);
        }
    }
}

#[test]
fn round_robin_splits_equal_cost_paths() {
    // 0 -> {1, 2} -> 3.
    let ep = epoch_plan(snapshot(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]));
    let f = FlowKey::new(0, 3).unwrap();
    let mut cursors = Cursors::default();
    let mut via = BTreeMap::new();
    for _ in 0..4 {
        let p = forward_packet(&ep, f, &mut cursors).unwrap();
        assert_eq!(p.len() as u32 - 1, ep.dist.get(0, 3));
        *via.entry(p[1]).or_insert(0) += 1;
    }
    assert_eq!(via, BTreeMap::from([(1, 2), (2, 2)]));
    let line = epoch_plan(snapshot(3, &[(0, 1), (1, 2)]));
    let f = FlowKey::new(0, 2).unwrap();
    let first = forward_packet(&line, f, &mut cursors).unwrap();
    assert!((0..3).all(|_| forward_packet(&line, f, &mut cursors).unwrap() == first));
    let cut = epoch_plan(snapshot(3, &[(0, 1)]));
    assert!(forward_packet(&cut, f, &mut cursors).is_err());
}

#[test]
fn reroute_moves_packets_off_removed_links() {
    let prev = snapshot(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
    let f = FlowKey::new(0, 2).unwrap();
    let mut pk = vec![
        InFlight {
            id: 0,
            flow: f,
            units: 1,
            from: Some(0),
            at: 1,
        },
        InFlight {
            id: 1,
            flow: f,
            units: 1,
            from: Some(0),
            at: 3,
        },
    ];
    assert_eq!(reroute_on_change(&prev, &prev, &mut pk), 0);
    let next = snapshot(4, &[(1, 2), (2, 3), (0, 3)]);
    assert_eq!(reroute_on_change(&prev, &next, &mut pk), 1);
    assert_eq!((pk[0].at, pk[0].from), (0, None));
    assert_eq!(pk[1].at, 3);
    // The packet continues from node 0 over the surviving shortest path.
    let ep = epoch_plan(next);
    let path = forward_packet(&ep, f, &mut Cursors::default()).unwrap();
    assert_eq!(path, vec![0, 3, 2]);
}
