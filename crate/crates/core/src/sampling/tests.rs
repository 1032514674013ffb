use std::collections::BTreeMap;

use num_rational::Ratio;
use proptest::prelude::*;

use super::Strategy;
use super::*;

fn specs(n: usize) -> Vec<DatasetSpec> {
    (1..=n)
        .map(|r| DatasetSpec::new(format!("d{r:02}"), 1000 * r as u64, r as u32))
        .collect()
}

/// Exact-fraction quotas: raw weight `4 - 3(i)/(N-1)` for rank position `i`,
/// floors plus largest remainders (earlier position wins ties).
fn rational_weighted(n: usize, total: u64) -> Vec<u64> {
    let weights: Vec<Ratio<i128>> = (0..n)
        .map(|i| Ratio::from_integer(4) - Ratio::new(3 * i as i128, n as i128 - 1))
        .collect();
    let sum: Ratio<i128> = weights.iter().sum();
    let exact: Vec<Ratio<i128>> = weights.iter().map(|w| w * total as i128 / sum).collect();
    let mut quotas: Vec<u64> = exact.iter().map(|q| q.floor().to_integer() as u64).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let missing = total - quotas.iter().sum::<u64>();
    for &i in order.iter().take(missing as usize) {
        quotas[i] += 1;
    }
    quotas
}

#[test]
fn balanced_examples() {
    assert_eq!(plan_balanced(&specs(5), 750_000).unwrap().targets(), vec![150_000; 5]);
    assert_eq!(plan_balanced(&specs(3), 10).unwrap().targets(), vec![4, 3, 3]);
    let plan = plan_balanced(&specs(32), 4_500_000).unwrap();
    assert_eq!(plan.targets(), vec![140_625; 32]);
    assert_eq!(plan.total, 4_500_000);
}

#[test]
fn weighted_examples() {
    assert_eq!(plan_weighted(&specs(4), 100).unwrap().targets(), vec![40, 30, 20, 10]);
    assert_eq!(plan_weighted(&specs(2), 10).unwrap().targets(), vec![8, 2]);
    let five = plan_weighted(&specs(5), 750_000).unwrap().targets();
    assert_eq!(five, rational_weighted(5, 750_000));
    assert_eq!(five, vec![240_000, 195_000, 150_000, 105_000, 60_000]);
    assert_eq!(arithmetic_weights(5), vec![16, 13, 10, 7, 4]);
}

#[test]
fn weighted_single_dataset_falls_back() {
    let plan = plan_weighted(&specs(1), 77).unwrap();
    assert_eq!(plan.status, PlanStatus::FellBackToBalanced);
    assert_eq!(plan.strategy, Strategy::Weighted);
    assert_eq!(plan.targets(), vec![77]);
}

#[test]
fn weights_follow_rank_order_not_rank_values() {
    let gapped = vec![
        DatasetSpec::new("c", 5, 9),
        DatasetSpec::new("a", 5, 1),
        DatasetSpec::new("b", 5, 4),
    ];
    let plan = plan_weighted(&gapped, 700).unwrap();
    let names: Vec<_> = plan.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["a", "b", "c"]);
    assert_eq!(plan.targets(), rational_weighted(3, 700));
}

#[test]
fn concat_keeps_native_lengths() {
    let s = specs(4);
    let plan = plan_concat(&s).unwrap();
    assert_eq!(plan.targets(), vec![1000, 2000, 3000, 4000]);
    assert_eq!(plan.total, 10_000);
    let empty = plan_concat(&[]).unwrap();
    assert!(empty.entries.is_empty());
    assert_eq!(empty.total, 0);
}

#[test]
fn concat_and_balanced_totals_for_32_datasets() {
    let s = parse_specs(include_str!("../../tests/fixtures/native_lengths_32.json")).unwrap();
    assert_eq!(s.len(), 32);
    let concat = plan(Strategy::Concat, &s, None).unwrap();
    let balanced = plan(Strategy::Balanced, &s, Some(4_500_000)).unwrap();
    let weighted = plan(Strategy::Weighted, &s, Some(4_500_000)).unwrap();
    assert_eq!(concat.total, 5_600_000);
    assert_eq!(balanced.total, 4_500_000);
    assert_eq!(weighted.total, 4_500_000);
    assert_eq!(concat.total - balanced.total, 1_100_000);
}

#[test]
fn validation_errors() {
    assert!(matches!(plan_balanced(&[], 10), Err(SamplingError::Empty)));
    assert!(matches!(
        plan_balanced(&specs(3), 2),
        Err(SamplingError::TotalTooSmall { .. })
    ));
    assert!(matches!(
        plan_weighted(&specs(3), 2),
        Err(SamplingError::TotalTooSmall { .. })
    ));
    let mut dup = specs(3);
    dup[2].rank = 1;
    assert!(matches!(plan_balanced(&dup, 30), Err(SamplingError::DuplicateRank(1))));
    let mut dup = specs(3);
    dup[2].name = "d01".into();
    assert!(matches!(plan_concat(&dup), Err(SamplingError::DuplicateName(_))));
    let mut zero = specs(2);
    zero[0].native_length = 0;
    assert!(matches!(plan_concat(&zero), Err(SamplingError::InvalidLength(_))));
    let mut zero = specs(2);
    zero[0].rank = 0;
    assert!(matches!(plan_concat(&zero), Err(SamplingError::InvalidRank(_))));
    assert!(matches!(
        plan(Strategy::Balanced, &specs(2), None),
        Err(SamplingError::MissingTotal(_))
    ));
    assert!(matches!(
        "uniform".parse::<Strategy>(),
        Err(SamplingError::UnknownStrategy(_))
    ));
    assert!(matches!(parse_specs("[{\"name\": 1}]"), Err(SamplingError::Json(_))));
}

#[test]
fn spec_and_plan_json() {
    let text = r#"[{"name": "A", "native_length": 10, "rank": 2}, {"name": "B", "native_length": 4, "rank": 1}]"#;
    let s = parse_specs(text).unwrap();
    let p = plan_weighted(&s, 10).unwrap();
    let json: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(json["strategy"], "weighted");
    assert_eq!(json["status"], "ok");
    assert_eq!(json["entries"][0]["name"], "B");
    assert_eq!(json["entries"][0]["target_length"], 8);
    let back: SamplingPlan = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(back, p);
}

fn counts(indices: &[u64]) -> BTreeMap<u64, usize> {
    let mut m = BTreeMap::new();
    for &i in indices {
        *m.entry(i).or_default() += 1;
    }
    m
}

#[test]
fn realized_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let perm = realize_indices(50, 50, &mut rng);
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    assert_ne!(perm, sorted);

    let twice = realize_indices(20, 40, &mut rng);
    assert!(counts(&twice).values().all(|&c| c == 2));
    assert_eq!(counts(&twice).len(), 20);

    let sub = realize_indices(100, 30, &mut rng);
    assert_eq!(counts(&sub).len(), 30);
    assert!(sub.iter().all(|&i| i < 100));

    let a = realize_indices(2, 5, &mut ChaCha8Rng::seed_from_u64(9));
    let b = realize_indices(2, 5, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    let c = counts(&a);
    assert!(c[&0] >= 2 && c[&1] >= 2 && c[&0] + c[&1] == 5);
}

#[test]
fn schedules_are_seeded() {
    let p = plan_balanced(&specs(4), 9000).unwrap();
    let a = realize_schedule(&p, 11);
    assert_eq!(a, realize_schedule(&p, 11));
    assert_ne!(a, realize_schedule(&p, 12));
    for (s, e) in a.iter().zip(&p.entries) {
        assert_eq!(s.name, e.name);
        assert_eq!(s.indices.len() as u64, e.target_length);
        let c = counts(&s.indices);
        let lo = e.target_length / e.native_length;
        assert!(c.values().all(|&k| k as u64 == lo || k as u64 == lo + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exact_sum(n in 1usize..40, extra in 0u64..5_000_000) {
        let total = n as u64 + extra;
        let b = plan_balanced(&specs(n), total).unwrap();
        prop_assert_eq!(b.targets().iter().sum::<u64>(), total);
        let t = b.targets();
        prop_assert!(t.iter().max().unwrap() - t.iter().min().unwrap() <= 1);
        let w = plan_weighted(&specs(n), total).unwrap();
        prop_assert_eq!(w.targets().iter().sum::<u64>(), total);
    }

    #[test]
    fn weighted_shape(n in 2usize..40, extra in 0u64..5_000_000) {
        let total = n as u64 + extra;
        let t = plan_weighted(&specs(n), total).unwrap().targets();
        for w in t.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert_eq!(&t, &rational_weighted(n, total));
        let (max, min) = (t[0] as f64, t[n - 1] as f64);
        if min > 2.0 {
            let ratio = max / min;
            prop_assert!(ratio >= 4.0 * (1.0 - 2.0 / min) && ratio <= 4.0 * (1.0 + 2.0 / min), "{}", ratio);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schedule_determinism(n in 1usize..5, total in 5u64..5000, seed in any::<u64>()) {
        let p = plan_weighted(&specs(n), total.max(n as u64)).unwrap();
        prop_assert_eq!(realize_schedule(&p, seed), realize_schedule(&p, seed));
    }
}
