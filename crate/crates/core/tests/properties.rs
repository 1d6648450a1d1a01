use evitram::checkpoint::{autoencoder_from_str, autoencoder_to_string};
use evitram::cluster::{acc, kmeans, nmi, KMeansConfig};
use evitram::autoenc::{pretrain, DenoisingAEConfig};
use evitram::nn::{cross_entropy, Matrix, OptimizerConfig, Rng};
use proptest::prelude::*;

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

fn relabel(v: &[usize], perm: &[usize]) -> Vec<usize> {
    v.iter().map(|&c| perm[c]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_stay_in_unit_interval((pred, truth) in (1usize..60).prop_flat_map(|n| (labels(n, 4), labels(n, 4)))) {
        let a = acc(&pred, &truth).unwrap();
        let m = nmi(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
    }

    #[test]
    fn nmi_is_symmetric((pred, truth) in (1usize..60).prop_flat_map(|n| (labels(n, 5), labels(n, 3)))) {
        prop_assert_eq!(nmi(&pred, &truth).unwrap(), nmi(&truth, &pred).unwrap());
    }

    #[test]
    fn renaming_clusters_changes_nothing(
        (pred, truth) in (1usize..60).prop_flat_map(|n| (labels(n, 4), labels(n, 4))),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let moved = relabel(&pred, &perm);
        prop_assert_eq!(acc(&pred, &truth).unwrap(), acc(&moved, &truth).unwrap());
        prop_assert_eq!(nmi(&pred, &truth).unwrap(), nmi(&moved, &truth).unwrap());
    }

    #[test]
    fn kmeans_never_increases_inertia(seed in any::<u64>(), n in 8usize..60, k in 2usize..5) {
        let mut rng = Rng::new(seed);
        let z = Matrix::from_fn(n, 3, |_, _| rng.normal());
        let res = kmeans(&z, &KMeansConfig::new(k, seed)).unwrap();
        prop_assert!(res.inertia_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(res.assignments.iter().all(|&a| a < k));
    }

    #[test]
    fn cross_entropy_is_smallest_at_the_target(seed in any::<u64>(), rows in 1usize..8, cols in 2usize..6) {
        let mut rng = Rng::new(seed);
        let mut dist = || {
            let mut m = Matrix::from_fn(rows, cols, |_, _| rng.uniform() + 0.05);
            for r in 0..rows {
                let s: f64 = m.row(r).iter().sum();
                m.row_mut(r).iter_mut().for_each(|v| *v /= s);
            }
            m
        };
        let p = dist();
        let q = dist();
        prop_assert!(cross_entropy(&p, &p).unwrap() <= cross_entropy(&p, &q).unwrap() + 1e-12);
    }
}

#[test]
fn checkpoint_text_survives_a_second_round_trip() {
    let mut rng = Rng::new(4);
    let x = Matrix::from_fn(40, 5, |r, c| (r % 4) as f64 * c as f64 + 0.1 * rng.normal());
    let cfg = DenoisingAEConfig {
        input_width: 5,
        hidden_widths: vec![7, 6],
        latent_width: 2,
        corruption_rate: 0.2,
        epochs: 3,
        optimizer: OptimizerConfig::adam(1e-2, 8),
    };
    let (ae, _) = pretrain(&x, &cfg, &mut Rng::new(9)).unwrap();
    let text = autoencoder_to_string(&ae);
    let back = autoencoder_from_str(&text, "mem").unwrap();
    assert_eq!(autoencoder_to_string(&back), text);
    assert_eq!(back.encode(&x).unwrap(), ae.encode(&x).unwrap());
}
