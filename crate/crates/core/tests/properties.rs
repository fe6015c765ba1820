use std::collections::{BTreeMap, BTreeSet, HashSet};

use indexmap::IndexMap;
use proptest::prelude::*;

use incapprox::biasing::{bias, BiasedSample};
use incapprox::engine::{Engine, EngineConfig, QueryBudget};
use incapprox::estimator::{estimate_sum, t_score, StratumStats};
use incapprox::incremental::{evict, run_incremental, Aggregate, MemoStore, QueryDef};
use incapprox::sampling::{allocate, StratifiedReservoir};
use incapprox::stream::{GroupKey, Stratum, StreamItem, WindowSpec, WindowState};

const STRATA: [&str; 4] = ["A", "B", "C", "D"];
const KEYS: [&str; 3] = ["k0", "k1", "k2"];

fn item(id: u64, ts: u64, s: usize, key: usize, value: f64) -> StreamItem<f64> {
    StreamItem::new(id, ts, STRATA[s], value).with_key(KEYS[key])
}

fn group(items: Vec<StreamItem<f64>>) -> IndexMap<Stratum, Vec<StreamItem<f64>>> {
    let mut out: IndexMap<Stratum, Vec<StreamItem<f64>>> = IndexMap::new();
    for it in items {
        out.entry(it.stratum.clone()).or_default().push(it);
    }
    out
}

/// (timestamp, stratum, key, value) tuples; ids come from the position.
fn raw_items(max: usize) -> impl Strategy<Value = Vec<(u64, usize, usize, f64)>> {
    prop::collection::vec((0u64..400, 0usize..4, 0usize..3, -1e3f64..1e3), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn window_counts_stay_consistent(
        raw in raw_items(300),
        cuts in prop::collection::vec(0usize..300, 0..6),
        length in 20u64..150,
        slide_frac in 1u64..=100,
    ) {
        let slide = (length * slide_frac / 100).max(1);
        let spec = WindowSpec::new(0, length, slide).unwrap();
        let mut state = WindowState::from_spec(&spec);
        let items: Vec<_> = raw.iter().enumerate().map(|(i, &(t, s, k, v))| item(i as u64, t, s, k, v)).collect();
        let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.min(items.len())).collect();
        bounds.push(0);
        bounds.push(items.len());
        bounds.sort_unstable();
        bounds.dedup();
        let mut start = 0;
        for w in bounds.windows(2) {
            state.ingest(items[w[0]..w[1]].to_vec()).unwrap();
            let counted: usize = state.stratum_counts().values().sum();
            prop_assert_eq!(counted, state.total());
            prop_assert_eq!(state.items().count(), state.total());
            prop_assert!(state.items().all(|i| i.timestamp >= state.start() && i.timestamp < state.end()));
            let strata: Vec<_> = state.strata().cloned().collect();
            let keys: Vec<_> = state.stratum_counts().keys().cloned().collect();
            prop_assert_eq!(strata, keys);
            start += slide;
            state.advance_to(start);
            let total = state.total();
            prop_assert!(state.advance_to(start).is_empty());
            prop_assert_eq!(state.total(), total);
        }
    }

    #[test]
    fn window_order_ignores_batch_order(raw in raw_items(100), seed in any::<u64>()) {
        let items: Vec<_> = raw.iter().enumerate().map(|(i, &(t, s, k, v))| item(i as u64, t, s, k, v)).collect();
        let mut shuffled = items.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(i as u64 + 1).rotate_left(17) % (i as u64 + 1)) as usize;
            shuffled.swap(i, j);
        }
        let mut a = WindowState::new(0, 1000);
        let mut b = WindowState::new(0, 1000);
        a.ingest(items).unwrap();
        b.ingest(shuffled).unwrap();
        let ia: Vec<_> = a.items().map(|i| i.id).collect();
        let ib: Vec<_> = b.items().map(|i| i.id).collect();
        prop_assert_eq!(ia, ib);
    }

    #[test]
    fn reservoir_invariants(
        strata in prop::collection::vec(0usize..4, 0..600),
        capacity in 0usize..80,
        realloc in prop::option::of(1usize..100),
        seed in any::<u64>(),
    ) {
        let mut res = StratifiedReservoir::new(capacity, realloc, seed);
        for (i, &s) in strata.iter().enumerate() {
            res.offer(StreamItem::new(i as u64, i as u64, STRATA[s], 0.0f64));
            prop_assert!(res.resident() <= capacity);
            if i + 1 >= capacity {
                let debt: usize = res.strata().values().map(|r| r.fill_debt()).sum();
                prop_assert_eq!(res.resident() + debt, capacity);
            }
        }
        let mut ids = HashSet::new();
        for (name, sub) in res.strata() {
            for it in sub.items() {
                prop_assert_eq!(&it.stratum, name);
                prop_assert!(ids.insert(it.id));
            }
        }
        let targets: usize = res.targets().values().sum();
        if strata.len() >= capacity && capacity > 0 {
            prop_assert_eq!(targets, capacity);
        }
    }

    #[test]
    fn reservoir_is_seed_deterministic(strata in prop::collection::vec(0usize..4, 0..300), seed in any::<u64>()) {
        let run = || {
            let mut res = StratifiedReservoir::new(25, None, seed);
            for (i, &s) in strata.iter().enumerate() {
                res.offer(StreamItem::new(i as u64, i as u64, STRATA[s], i as f64));
            }
            res.into_sample().strata
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn allocation_is_proportional(counts in prop::collection::vec(0u64..10_000, 1..8), capacity in 0usize..5_000) {
        let sizes = allocate(&counts, capacity);
        let total: u64 = counts.iter().sum();
        if total == 0 {
            prop_assert!(sizes.iter().all(|&s| s == 0));
        } else {
            prop_assert_eq!(sizes.iter().sum::<usize>(), capacity);
            for (&c, &s) in counts.iter().zip(&sizes) {
                let exact = capacity as f64 * c as f64 / total as f64;
                prop_assert!((s as f64 - exact).abs() < 1.0);
            }
        }
    }

    #[test]
    fn bias_preserves_sizes_and_maximizes_reuse(
        sample_ids in prop::collection::btree_set(0u64..200, 0..60),
        memo_ids in prop::collection::btree_set(0u64..200, 0..60),
        salt in any::<u64>(),
    ) {
        let stratum_of = |id: u64| ((id ^ salt) % 3) as usize;
        let mk = |ids: &BTreeSet<u64>| group(ids.iter().map(|&id| item(id, id * 7 % 101, stratum_of(id), 0, id as f64)).collect());
        let sample = mk(&sample_ids);
        let memo = mk(&memo_ids);
        let out = bias(&sample, &memo).unwrap();
        prop_assert_eq!(out.sizes(), sample.iter().map(|(k, v)| (k.clone(), v.len())).collect::<IndexMap<_, _>>());
        let mut seen = HashSet::new();
        prop_assert!(out.items().all(|i| seen.insert(i.id)));
        for (s, fresh) in &sample {
            let x = memo.get(s).map_or(0, Vec::len);
            prop_assert_eq!(out.reused[s], x.min(fresh.len()));
            let memo_set: HashSet<u64> = memo.get(s).map(|v| v.iter().map(|i| i.id).collect()).unwrap_or_default();
            let fresh_set: HashSet<u64> = fresh.iter().map(|i| i.id).collect();
            prop_assert!(out.strata[s].iter().all(|i| memo_set.contains(&i.id) || fresh_set.contains(&i.id)));
            prop_assert!(out.strata[s].iter().all(|i| &i.stratum == s));
        }
    }

    #[test]
    fn incremental_matches_fold(
        windows in prop::collection::vec(prop::collection::btree_set(0u64..120, 0..50), 1..8),
        group_by in any::<bool>(),
        agg in 0usize..3,
    ) {
        let aggregate = [Aggregate::Sum, Aggregate::Count, Aggregate::Mean][agg];
        let query = QueryDef::new(aggregate, group_by);
        let universe: Vec<StreamItem<f64>> = (0..120u64)
            .map(|id| item(id, id, (id % 4) as usize, (id % 3) as usize, (id as f64).sin() * 100.0))
            .collect();
        let mut memo = MemoStore::new();
        let mut previous: BTreeSet<u64> = BTreeSet::new();
        for ids in windows {
            let gone: Vec<u64> = previous.difference(&ids).copied().collect();
            evict(&mut memo, 0, gone.iter().copied());
            let dirty = memo.dirty_partitions();
            let expected_dirty: BTreeSet<_> = gone
                .iter()
                .map(|&id| (if group_by { universe[id as usize].key.clone() } else { None }, universe[id as usize].stratum.clone()))
                .collect();
            prop_assert_eq!(dirty, expected_dirty);

            let live: HashSet<u64> = memo.item_ids().collect();
            let biased = BiasedSample {
                strata: group(ids.iter().map(|&id| universe[id as usize].clone()).collect()),
                reused: IndexMap::new(),
            };
            let out = run_incremental(&query, &biased, &mut memo);
            prop_assert_eq!(out.stats.map_reused, ids.iter().filter(|id| live.contains(id)).count());
            prop_assert_eq!(memo.len(), ids.len());

            // naive fold per group
            let mut fold: BTreeMap<GroupKey, (u64, f64, f64)> = BTreeMap::new();
            for &id in &ids {
                let it = &universe[id as usize];
                let k = if group_by { it.key.clone() } else { None };
                let e = fold.entry(k).or_insert((0, 0.0, 0.0));
                e.0 += 1;
                e.1 += it.value;
                e.2 += it.value.abs();
            }
            prop_assert_eq!(out.groups.len(), fold.len());
            for (k, (count, sum, mag)) in &fold {
                let g = &out.groups[k];
                prop_assert_eq!(g.total.count, *count);
                let got = g.value(aggregate);
                let (want, scale) = match aggregate {
                    Aggregate::Sum => (*sum, *mag),
                    Aggregate::Count => (*count as f64, 1.0),
                    Aggregate::Mean => (sum / *count as f64, mag / *count as f64),
                };
                prop_assert!((got - want).abs() <= 1e-9 * scale.max(1.0), "{got} vs {want}");
            }

            // groups recomputed are exactly those whose membership changed
            let changed: BTreeSet<GroupKey> = previous
                .symmetric_difference(&ids)
                .map(|&id| if group_by { universe[id as usize].key.clone() } else { None })
                .filter(|k| fold.contains_key(k))
                .collect();
            prop_assert_eq!(out.stats.reduce_recomputed, changed.len());
            prop_assert_eq!(out.stats.reduce_reused, fold.len() - changed.len());
            previous = ids;
        }
    }

    #[test]
    fn error_bound_shrinks_with_sample_size(
        strata in prop::collection::vec((10u64..500, 2u64..10, 0.1f64..50.0), 1..5),
        grow in 0usize..5,
    ) {
        let stats = |extra: u64| -> Vec<StratumStats<f64>> {
            strata
                .iter()
                .enumerate()
                .map(|(i, &(pop, b, s2))| {
                    let b = if i == grow % strata.len() { (b + extra).min(pop) } else { b };
                    StratumStats { stratum: Stratum::from(format!("s{i}")), population: pop, sampled: b, sum: 0.0, m2: s2 * (b - 1) as f64 }
                })
                .collect()
        };
        let mut last = f64::INFINITY;
        for extra in [0, 1, 5, 50, 1000] {
            let e = estimate_sum(&stats(extra), 0.95).unwrap().error_bound.unwrap();
            prop_assert!(e <= last * (1.0 + 1e-12));
            last = e;
        }
        let full: Vec<_> = strata
            .iter()
            .enumerate()
            .map(|(i, &(pop, _, s2))| StratumStats { stratum: Stratum::from(format!("s{i}")), population: pop, sampled: pop, sum: 0.0, m2: s2 * (pop - 1) as f64 })
            .collect();
        prop_assert_eq!(estimate_sum(&full, 0.95).unwrap().error_bound, Some(0.0));
    }

    #[test]
    fn estimate_is_scale_equivariant(
        values in prop::collection::vec(prop::collection::vec(-100f64..100.0, 3..20), 1..4),
        lambda in -50f64..50.0,
    ) {
        let stats = |scale: f64| -> Vec<StratumStats<f64>> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
                    StratumStats::from_values(format!("s{i}"), v.len() as u64 * 10, &scaled)
                })
                .collect()
        };
        let base = estimate_sum(&stats(1.0), 0.9).unwrap();
        let scaled = estimate_sum(&stats(lambda), 0.9).unwrap();
        let mag: f64 = values.iter().flatten().map(|x| x.abs()).sum::<f64>() * 10.0;
        prop_assert!((scaled.value - lambda * base.value).abs() <= 1e-9 * (mag * lambda.abs()).max(1.0));
        let (eb, es) = (base.error_bound.unwrap(), scaled.error_bound.unwrap());
        prop_assert!((es - lambda.abs() * eb).abs() <= 1e-9 * (lambda.abs() * eb).max(1e-9));
    }

    #[test]
    fn t_score_is_monotone(f in 1.0f64..500.0, df in 0.5f64..100.0, p in 0.51f64..0.999, dp in 0.0005f64..0.01) {
        let t = t_score(f, p).unwrap();
        prop_assert!(t_score(f + df, p).unwrap() < t);
        if p + dp < 1.0 {
            prop_assert!(t_score(f, p + dp).unwrap() > t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn engine_respects_budget_and_memo_bounds(
        rates in prop::collection::vec(1u64..6, 1..4),
        fraction in 0.2f64..1.0,
        slide in 5u64..50,
        seed in any::<u64>(),
    ) {
        let mut engine = Engine::<f64>::new(EngineConfig {
            window: WindowSpec::new(0, 100, slide).unwrap(),
            query: QueryDef::new(Aggregate::Sum, false),
            budget: QueryBudget::fraction(fraction),
            seed,
            realloc_every: None,
        });
        let mut next_id = 0;
        let mut fed = 0;
        for _ in 0..15 {
            let end = engine.window_end();
            let mut batch = Vec::new();
            for t in fed..end {
                for (s, &r) in rates.iter().enumerate() {
                    for _ in 0..r {
                        batch.push(StreamItem::new(next_id, t, STRATA[s], (t % 13) as f64));
                        next_id += 1;
                    }
                }
            }
            fed = end;
            let r = engine.process_window(batch).unwrap();
            prop_assert!(r.sample_size <= r.budget_sample_size);
            prop_assert!(engine.memo().len() <= r.sample_size);
            prop_assert!(engine.memo().oldest_timestamp().is_none_or(|ts| ts >= r.start));
            prop_assert!((0.0..=1.0).contains(&r.reuse.overall_fraction));
        }
    }
}
