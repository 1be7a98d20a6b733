mod common;

use fedkmeans::data::{generate_blobs, partition_half_iid, partition_iid, partition_noniid, BlobParams};
use fedkmeans::federation::{federated_round, FederationState};
use fedkmeans::metrics::{accuracy, score, v_measure};
use fedkmeans::{
    aggregate, assign, compute_lambda, lloyd_step, request_score, CentroidSet, ClientDataset, DataMatrix,
    FederationConfig, ScoreMode, WeightMode, WeightVector,
};
use proptest::prelude::*;

fn matrix(max_rows: usize, dim: usize) -> impl Strategy<Value = DataMatrix> {
    prop::collection::vec(prop::collection::vec(-50.0..50.0f64, dim), 1..=max_rows)
        .prop_map(|rows| DataMatrix::from_rows(&rows).unwrap())
}

fn points_and_centroids() -> impl Strategy<Value = (DataMatrix, CentroidSet)> {
    (1usize..=4).prop_flat_map(|dim| {
        (matrix(60, dim), prop::collection::vec(prop::collection::vec(-50.0..50.0f64, dim), 1..=6))
            .prop_map(|(x, c)| (x, CentroidSet::from_rows(&c).unwrap()))
    })
}

fn weights(n: usize, k: usize) -> impl Strategy<Value = Vec<WeightVector>> {
    prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.0..100.0f64], k).prop_map(WeightVector), n)
}

fn clients_and_centroids() -> impl Strategy<Value = (Vec<ClientDataset>, CentroidSet)> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(dim, k)| {
        (
            prop::collection::vec(matrix(20, dim).prop_map(ClientDataset::unlabeled), 1..=6),
            prop::collection::vec(prop::collection::vec(-50.0..50.0f64, dim), k),
        )
            .prop_map(|(clients, c)| (clients, CentroidSet::from_rows(&c).unwrap()))
    })
}

fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..=40).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..6, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lloyd_step_never_increases_score((x, c) in points_and_centroids()) {
        let (next, _) = lloyd_step(&x, &c, false).unwrap();
        prop_assert!(score(&x, &next).unwrap() <= score(&x, &c).unwrap() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn assignment_is_idempotent((x, c) in points_and_centroids()) {
        prop_assert_eq!(assign(&x, &c).unwrap(), assign(&x, &c).unwrap());
    }

    #[test]
    fn counts_are_the_assignment_histogram((x, c) in points_and_centroids()) {
        let (_, counts) = lloyd_step(&x, &c, false).unwrap();
        let a = assign(&x, &c).unwrap();
        let mut hist = vec![0usize; c.k()];
        for &l in a.labels() {
            hist[l] += 1;
        }
        prop_assert_eq!(counts.as_slice(), &hist[..]);
        prop_assert_eq!(counts.total(), x.n_rows());
    }

    #[test]
    fn lloyd_step_ignores_row_order((x, c) in points_and_centroids(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..x.n_rows()).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut common::rng(seed));
        let (a, ca) = lloyd_step(&x, &c, false).unwrap();
        let (b, cb) = lloyd_step(&x.select_rows(&order), &c, false).unwrap();
        prop_assert_eq!(ca, cb);
        prop_assert!(common::coordinate_error(&a.to_rows(), &b.to_rows()) <= 1e-12);
    }

    #[test]
    fn lambda_columns_sum_to_one(w in (1usize..=8, 1usize..=6).prop_flat_map(|(n, k)| weights(n, k))) {
        let lambda = compute_lambda(&w).unwrap();
        for j in 0..w[0].0.len() {
            prop_assert!((lambda.column_sum(j) - 1.0).abs() <= 1e-12);
            let zero = w.iter().all(|v| v.0[j] == 0.0);
            for i in 0..w.len() {
                let l = lambda.get(i, j);
                prop_assert!(l >= 0.0);
                if zero {
                    prop_assert_eq!(l, 1.0 / w.len() as f64);
                }
            }
        }
    }

    #[test]
    fn aggregation_ignores_participant_order(
        (n, k, dim) in (1usize..=6, 1usize..=4, 1usize..=3),
        seed in any::<u64>(),
        lr in 0.01..1.0f64,
        mom in 0.0..0.95f64,
    ) {
        let mut rng = common::rng(seed);
        let mut set = || {
            let v: Vec<f64> = (0..k * dim).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
            CentroidSet::new(k, dim, v).unwrap()
        };
        let locals: Vec<CentroidSet> = (0..n).map(|_| set()).collect();
        let (cur, prev) = (set(), set());
        let mut rng = common::rng(seed ^ 1);
        let w: Vec<WeightVector> = (0..n)
            .map(|_| WeightVector((0..k).map(|_| rand::Rng::random_range(&mut rng, 0..4) as f64).collect()))
            .collect();
        let a = aggregate(&locals, &w, &cur, &prev, lr, mom).unwrap();
        let rev_l: Vec<CentroidSet> = locals.iter().rev().cloned().collect();
        let rev_w: Vec<WeightVector> = w.iter().rev().cloned().collect();
        let b = aggregate(&rev_l, &rev_w, &cur, &prev, lr, mom).unwrap();
        prop_assert!(common::coordinate_error(&a.to_rows(), &b.to_rows()) <= 1e-12);
    }

    #[test]
    fn full_step_without_momentum_returns_the_weighted_mean(
        (n, k) in (1usize..=5, 1usize..=4),
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let mut set = || {
            let v: Vec<f64> = (0..k * 2).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
            CentroidSet::new(k, 2, v).unwrap()
        };
        let locals: Vec<CentroidSet> = (0..n).map(|_| set()).collect();
        let (cur, prev) = (set(), set());
        let w: Vec<WeightVector> = (0..n).map(|i| WeightVector(vec![(i % 3) as f64; k])).collect();
        let lambda = compute_lambda(&w).unwrap();
        let got = aggregate(&locals, &w, &cur, &prev, 1.0, 0.0).unwrap();
        for j in 0..k {
            for d in 0..2 {
                let want: f64 = (0..n).map(|i| lambda.get(i, j) * locals[i].centroid(j)[d]).sum();
                prop_assert_eq!(got.centroid(j)[d], want);
            }
        }
    }

    #[test]
    fn equal_weights_match_dynamic_when_counts_agree(per_cluster in 1usize..=5, n_clients in 1usize..=4) {
        // Every client holds the same points, so every count vector is equal.
        let base = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let rows: Vec<[f64; 2]> = base.iter().flat_map(|r| std::iter::repeat_n(*r, per_cluster)).collect();
        let client = ClientDataset::unlabeled(DataMatrix::from_rows(&rows).unwrap());
        let clients = vec![client; n_clients];
        let init = CentroidSet::from_rows(&[[0.0, 0.0], [5.0, 5.0]]).unwrap();
        let participants: Vec<usize> = (0..n_clients).collect();
        let run = |mode| {
            let cfg = FederationConfig { k: 2, weight_mode: mode, ..FederationConfig::default() };
            let mut state = FederationState::new(init.clone());
            federated_round(&clients, &participants, &mut state, &cfg, None).unwrap();
            state.current
        };
        prop_assert_eq!(run(WeightMode::Dynamic), run(WeightMode::Equal));
    }

    #[test]
    fn size_weighted_request_score_is_the_union_score((clients, c) in clients_and_centroids()) {
        let union = DataMatrix::concat(clients.iter().map(|c| &c.points)).unwrap();
        let got = request_score(&clients, &c, ScoreMode::SizeWeighted).unwrap();
        let want = score(&union, &c).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn metrics_ignore_cluster_relabeling((t, p) in labels(), shift in 1usize..50) {
        let relabeled: Vec<usize> = p.iter().map(|&l| (l * 7 + shift) % 1000).collect();
        prop_assert_eq!(accuracy(&t, &p).unwrap(), accuracy(&t, &relabeled).unwrap());
        prop_assert!((v_measure(&t, &p).unwrap() - v_measure(&t, &relabeled).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn metrics_stay_in_unit_interval((t, p) in labels()) {
        let a = accuracy(&t, &p).unwrap();
        let v = v_measure(&t, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn partitions_are_disjoint_covers(seed in any::<u64>(), n_clients in 2usize..=12, kind in 0usize..3) {
        let params = BlobParams { n_samples: 300, n_noise: 10, ..BlobParams::default() };
        let data = generate_blobs(&params, seed).unwrap();
        let partition = match kind {
            0 => partition_iid(&data, n_clients, seed),
            1 => partition_half_iid(&data, n_clients, seed),
            _ => partition_noniid(&data, n_clients, seed),
        }
        .unwrap();
        prop_assert_eq!(partition.n_clients(), n_clients);
        let mut seen: Vec<usize> = partition.clients().iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..data.len()).collect::<Vec<_>>());
        prop_assert!(partition.sizes().iter().all(|&s| s > 0));
    }
}
