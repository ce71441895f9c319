use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use branchforge_core::rsa::{compute_rdm_stack, linear_cka, FeatureDump};
use branchforge_core::search::{
    bell_number, computational_score, enumerate_partitions, enumerate_plans, rsa_score, CostModel,
    PlanMode, SharingPlan,
};
use branchforge_core::train::largest_remainder_quotas;
use branchforge_core::Matrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

#[test]
fn partition_enumeration_is_complete_and_ordered() {
    for n in 1..=7 {
        let parts = enumerate_partitions(n).unwrap();
        assert_eq!(parts.len() as u64, bell_number(n));
        assert_eq!(parts[0].num_groups(), 1);
        assert_eq!(parts.last().unwrap().num_groups(), n);
        let labels: Vec<Vec<usize>> = parts.iter().map(|p| p.labels().collect()).collect();
        assert!(
            labels.windows(2).all(|w| w[0] < w[1]),
            "not strictly increasing for n = {n}"
        );
        for l in &labels {
            // restricted growth: each label at most one above the running max
            let mut max = 0;
            for (i, &x) in l.iter().enumerate() {
                assert!(if i == 0 { x == 0 } else { x <= max + 1 });
                max = max.max(x);
            }
        }
    }
    assert!(enumerate_partitions(11).is_err());
}

#[test]
fn plan_counts() {
    for n in 1..=4 {
        for l in 1..=3 {
            let all: Vec<SharingPlan> = enumerate_plans(n, l, PlanMode::Unconstrained)
                .unwrap()
                .collect();
            assert_eq!(all.len() as u64, bell_number(n).pow(l as u32));
            let tree: Vec<SharingPlan> = enumerate_plans(n, l, PlanMode::Tree).unwrap().collect();
            let expected: Vec<&SharingPlan> = all.iter().filter(|p| p.is_tree()).collect();
            assert_eq!(tree.iter().collect::<Vec<_>>(), expected);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cka_is_symmetric_bounded_and_scale_invariant(a in matrix(6, 6), b in matrix(6, 6), s in 0.1f64..100.0) {
        let ab = linear_cka(&a, &b).unwrap();
        let ba = linear_cka(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        let scaled = linear_cka(&a.scale(s), &b).unwrap();
        prop_assert!((scaled - ab).abs() < 1e-9);
        prop_assert!((linear_cka(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rdm_stacks_are_valid(seed in any::<u64>(), n in 1usize..4, l in 1usize..3) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dumps = Vec::new();
        for t in 0..n {
            for m in 0..l {
                let f = Matrix::from_fn(7, 5, |_, _| rng.random_range(-1.0..1.0));
                dumps.push(FeatureDump::new(t, m, f).unwrap());
            }
        }
        let stack = compute_rdm_stack(&dumps).unwrap();
        prop_assert!(stack.validate().is_ok());
        prop_assert_eq!(stack.num_modules(), l);
    }

    #[test]
    fn split_costs_most_and_shared_least(
        seed in any::<u64>(),
        n in 1usize..5,
        lat in prop::collection::vec(0.1f64..5.0, 1..4),
        backbone in 0.1f64..5.0,
        head in 0.01f64..1.0,
    ) {
        use rand::Rng;
        let l = lat.len();
        let costs = CostModel { backbone_latency: backbone, module_latencies: lat, head_latency: head, single_inference_time: None };
        let lo = computational_score(&SharingPlan::fully_shared(n, l), &costs, n).unwrap();
        let hi = computational_score(&SharingPlan::fully_split(n, l), &costs, n).unwrap();
        prop_assert!(hi <= 1.0 + 1e-12);
        let parts = enumerate_partitions(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = SharingPlan::new(n, (0..l).map(|_| parts[rng.random_range(0..parts.len())].clone()).collect()).unwrap();
        let c = computational_score(&plan, &costs, n).unwrap();
        prop_assert!(lo <= c + 1e-12 && c <= hi + 1e-12);
    }

    #[test]
    fn fully_split_has_zero_rsa_score(seed in any::<u64>(), n in 1usize..6, l in 1usize..4) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ms = (0..l).map(|_| {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n { for j in i + 1..n { let v = rng.random_range(0.0..1.0); m.row_mut(i)[j] = v; m.row_mut(j)[i] = v; } }
            m
        }).collect();
        let rdms = branchforge_core::RdmStack::new(n, ms).unwrap();
        prop_assert_eq!(rsa_score(&SharingPlan::fully_split(n, l), &rdms).unwrap(), 0.0);
        prop_assert!(rsa_score(&SharingPlan::fully_shared(n, l), &rdms).unwrap() >= 0.0);
    }

    #[test]
    fn quotas_are_floor_or_ceiling(freqs in prop::collection::vec(1usize..1000, 1..10), frac in 0.0f64..1.0, seed in any::<u64>()) {
        let total: usize = freqs.iter().sum();
        let b = ((total as f64 * frac) as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = largest_remainder_quotas(&freqs, b, &mut rng).unwrap();
        prop_assert_eq!(q.iter().sum::<usize>(), b);
        for (&f, &qc) in freqs.iter().zip(&q) {
            let exact = b as f64 * f as f64 / total as f64;
            prop_assert!((qc as f64 - exact).abs() < 1.0);
        }
    }
}
