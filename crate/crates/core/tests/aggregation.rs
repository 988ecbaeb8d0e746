mod common;

use std::collections::BTreeMap;

use common::Xs;
use lbsn_core::pipeline::{aggregate_borda, aggregate_combsum, update_weights, Ranker, RankerWeights};
use lbsn_core::similarity::SimilarityScore;
use lbsn_core::VenueId;
use proptest::prelude::*;

fn venue(i: usize) -> VenueId {
    VenueId::new(format!("v{i}"))
}

fn shuffled(rng: &mut Xs, m: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        p.swap(i, rng.below(i + 1));
    }
    p
}

/// Orders venues by an exact integer key, then WiFi tie-break, then id.
fn oracle_order(keys: &BTreeMap<usize, i128>, tiebreak: &BTreeMap<VenueId, f64>) -> Vec<VenueId> {
    let mut v: Vec<(VenueId, i128)> = keys.iter().map(|(i, k)| (venue(*i), *k)).collect();
    let tb = |x: &VenueId| tiebreak.get(x).copied().unwrap_or(f64::NEG_INFINITY);
    v.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| tb(&b.0).total_cmp(&tb(&a.0)))
            .then_with(|| a.0.cmp(&b.0))
    });
    v.into_iter().map(|(x, _)| x).collect()
}

struct Instance {
    m: usize,
    rankers: Vec<Ranker>,
    /// Integer weights; the real weights are these over their sum.
    k: Vec<i128>,
    tiebreak: BTreeMap<VenueId, f64>,
}

fn instance(rng: &mut Xs) -> Instance {
    let m = 1 + rng.below(6);
    let r = 1 + rng.below(5);
    let rankers: Vec<Ranker> = shuffled(rng, Ranker::ALL.len())[..r]
        .iter()
        .map(|&i| Ranker::ALL[i])
        .collect();
    let equal = rng.below(4) == 0;
    let k: Vec<i128> = (0..r)
        .map(|_| if equal { 1 } else { rng.below(1001) as i128 })
        .collect();
    let mut tiebreak = BTreeMap::new();
    for i in 0..m {
        if rng.below(4) != 0 {
            tiebreak.insert(venue(i), rng.below(3) as f64 * 0.5);
        }
    }
    Instance {
        m,
        rankers,
        k,
        tiebreak,
    }
}

fn weights(inst: &Instance) -> RankerWeights {
    let total: i128 = inst.k.iter().sum();
    RankerWeights {
        weights: inst
            .rankers
            .iter()
            .zip(&inst.k)
            .map(|(r, k)| (*r, if total == 0 { 1.0 } else { *k as f64 / total as f64 }))
            .collect(),
    }
}

fn effective_k(inst: &Instance) -> Vec<i128> {
    if inst.k.iter().sum::<i128>() == 0 {
        vec![1; inst.k.len()]
    } else {
        inst.k.clone()
    }
}

#[test]
fn borda_matches_exact_oracle() {
    let mut rng = Xs(0xb0bda);
    for _ in 0..1000 {
        let inst = instance(&mut rng);
        let perms: Vec<Vec<usize>> = inst.rankers.iter().map(|_| shuffled(&mut rng, inst.m)).collect();
        let lists: BTreeMap<Ranker, Vec<VenueId>> = inst
            .rankers
            .iter()
            .zip(&perms)
            .map(|(r, p)| (*r, p.iter().map(|&i| venue(i)).collect()))
            .collect();
        // Sum of k_r * (m - rank_r(v)), with rank 0-based.
        let k = effective_k(&inst);
        let mut keys: BTreeMap<usize, i128> = (0..inst.m).map(|i| (i, 0)).collect();
        for (kr, p) in k.iter().zip(&perms) {
            for (rank, &v) in p.iter().enumerate() {
                *keys.get_mut(&v).unwrap() += kr * (inst.m - rank) as i128;
            }
        }
        let got = aggregate_borda(&lists, &weights(&inst), &inst.tiebreak).unwrap();
        let order: Vec<VenueId> = got.entries.iter().map(|(v, _)| v.clone()).collect();
        assert_eq!(order, oracle_order(&keys, &inst.tiebreak));
        let wsum: f64 = got.weights_used.values().sum();
        assert!((wsum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn combsum_matches_exact_oracle() {
    let mut rng = Xs(0xc0b5);
    for _ in 0..1000 {
        let inst = instance(&mut rng);
        let candidates: Vec<VenueId> = (0..inst.m).map(venue).collect();
        // Integer scores on a small grid; some venues lack a score.
        let raw: Vec<BTreeMap<usize, (i128, bool)>> = inst
            .rankers
            .iter()
            .map(|_| {
                let distance = rng.below(2) == 0;
                let mut s = BTreeMap::new();
                for i in 0..inst.m {
                    if rng.below(5) != 0 {
                        s.insert(i, (rng.below(5) as i128, distance));
                    }
                }
                s
            })
            .collect();
        let lists: BTreeMap<Ranker, BTreeMap<VenueId, SimilarityScore>> = inst
            .rankers
            .iter()
            .zip(&raw)
            .map(|(r, s)| {
                let m = s
                    .iter()
                    .map(|(i, (x, dist))| {
                        let score = if *dist {
                            SimilarityScore::distance(*x as f64)
                        } else {
                            SimilarityScore::similarity(*x as f64)
                        };
                        (venue(*i), score)
                    })
                    .collect();
                (*r, m)
            })
            .collect();
        // Exact: sum_r k_r * (g - lo) / (hi - lo) over a common denominator.
        let k = effective_k(&inst);
        let spans: Vec<(i128, i128)> = raw
            .iter()
            .map(|s| {
                let g: Vec<i128> = s.values().map(|(x, d)| if *d { -x } else { *x }).collect();
                (
                    g.iter().copied().min().unwrap_or(0),
                    g.iter().copied().max().unwrap_or(0),
                )
            })
            .collect();
        let denom: i128 = spans.iter().map(|(lo, hi)| (hi - lo).max(1)).product();
        let mut keys: BTreeMap<usize, i128> = (0..inst.m).map(|i| (i, 0)).collect();
        for ((kr, s), (lo, hi)) in k.iter().zip(&raw).zip(&spans) {
            if hi == lo {
                continue;
            }
            for (i, (x, d)) in s {
                let g = if *d { -x } else { *x };
                *keys.get_mut(i).unwrap() += kr * (g - lo) * (denom / (hi - lo));
            }
        }
        let got = aggregate_combsum(&lists, &candidates, &weights(&inst), &inst.tiebreak).unwrap();
        let order: Vec<VenueId> = got.entries.iter().map(|(v, _)| v.clone()).collect();
        assert_eq!(order, oracle_order(&keys, &inst.tiebreak));
    }
}

fn permutation(m: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..m).collect::<Vec<_>>()).prop_shuffle()
}

fn borda_instance() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..=6, 1usize..=5).prop_flat_map(|(m, r)| (Just(m), prop::collection::vec(permutation(m), r)))
}

proptest! {
    #[test]
    fn single_ranker_identity(p in (1usize..=6).prop_flat_map(permutation)) {
        let list: Vec<VenueId> = p.iter().map(|&i| venue(i)).collect();
        let lists = [(Ranker::Sound, list.clone())].into();
        let w = RankerWeights { weights: [(Ranker::Sound, 1.0)].into() };
        let got = aggregate_borda(&lists, &w, &BTreeMap::new()).unwrap();
        let order: Vec<VenueId> = got.entries.into_iter().map(|(v, _)| v).collect();
        prop_assert_eq!(order, list);
    }

    #[test]
    fn equal_weight_borda_ignores_ranker_labels((m, perms) in borda_instance(), offset in 0usize..10) {
        let lists_with = |shift: usize| -> BTreeMap<Ranker, Vec<VenueId>> {
            perms.iter().enumerate().map(|(j, p)| (Ranker::ALL[(j + shift) % 10], p.iter().map(|&i| venue(i)).collect())).collect()
        };
        let a = lists_with(0);
        let b = lists_with(offset);
        let wa = RankerWeights::equal(a.keys().copied());
        let wb = RankerWeights::equal(b.keys().copied());
        let oa = aggregate_borda(&a, &wa, &BTreeMap::new()).unwrap();
        let ob = aggregate_borda(&b, &wb, &BTreeMap::new()).unwrap();
        prop_assert_eq!(oa.entries, ob.entries);
        let _ = m;
    }

    #[test]
    fn borda_ignores_venue_labels((m, perms) in borda_instance(), relabel in (6usize..=6).prop_flat_map(permutation)) {
        // Distinct tie-break scores so that ids never decide.
        let tb = |f: &dyn Fn(usize) -> usize| -> BTreeMap<VenueId, f64> { (0..m).map(|i| (venue(f(i)), i as f64)).collect() };
        let lists = |f: &dyn Fn(usize) -> usize| -> BTreeMap<Ranker, Vec<VenueId>> {
            perms.iter().enumerate().map(|(j, p)| (Ranker::ALL[j], p.iter().map(|&i| venue(f(i))).collect())).collect()
        };
        let id = |i: usize| i;
        let re = |i: usize| relabel[i] + 10;
        let w = RankerWeights::equal(Ranker::ALL[..perms.len()].iter().copied());
        let a = aggregate_borda(&lists(&id), &w, &tb(&id)).unwrap();
        let b = aggregate_borda(&lists(&re), &w, &tb(&re)).unwrap();
        let mapped: Vec<VenueId> = a.entries.iter().map(|(v, _)| venue(re(v.as_str()[1..].parse().unwrap()))).collect();
        let got: Vec<VenueId> = b.entries.iter().map(|(v, _)| v.clone()).collect();
        prop_assert_eq!(mapped, got);
    }

    #[test]
    fn updated_weights_stay_normalized(
        (m, perms) in borda_instance(),
        raw_w in prop::collection::vec(0.0f64..1.0, 5),
        actual in 0usize..6,
        alpha in 0.0f64..=1.0,
        steps in 1usize..20,
    ) {
        let actual = venue(actual % m);
        let lists: BTreeMap<Ranker, Vec<VenueId>> = perms.iter().enumerate().map(|(j, p)| (Ranker::ALL[j], p.iter().map(|&i| venue(i)).collect())).collect();
        let total: f64 = raw_w.iter().sum::<f64>().max(1e-9);
        let mut w = RankerWeights { weights: Ranker::ALL[..5].iter().zip(&raw_w).map(|(r, x)| (*r, x / total)).collect() };
        for _ in 0..steps {
            w = update_weights(&w, &lists, &actual, m, alpha).unwrap();
            prop_assert!((w.total() - 1.0).abs() < 1e-9);
            prop_assert!(w.weights.values().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn better_rank_never_lowers_weight((m, perms) in borda_instance(), actual in 0usize..6, alpha in 0.01f64..=1.0) {
        let actual_id = venue(actual % m);
        let lists: BTreeMap<Ranker, Vec<VenueId>> = perms.iter().enumerate().map(|(j, p)| (Ranker::ALL[j], p.iter().map(|&i| venue(i)).collect())).collect();
        let w = RankerWeights::equal(lists.keys().copied());
        let base = update_weights(&w, &lists, &actual_id, m, alpha).unwrap();
        // Move the actual venue one place up in the first ranker.
        let mut improved = lists.clone();
        let first = improved.get_mut(&Ranker::ALL[0]).unwrap();
        let pos = first.iter().position(|v| *v == actual_id).unwrap();
        if pos > 0 {
            first.swap(pos, pos - 1);
        }
        let better = update_weights(&w, &improved, &actual_id, m, alpha).unwrap();
        prop_assert!(better.get(Ranker::ALL[0]) >= base.get(Ranker::ALL[0]) - 1e-12);
    }
}
