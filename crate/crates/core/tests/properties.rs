mod common;

use metric_lab::analysis::{
    loss_decay_epoch, paired_t_test, pca_project, regularized_incomplete_beta,
    student_t_two_sided_p, variance_report,
};
use metric_lab::datagen::{
    generate_synthetic, load_embeddings, save_embeddings, Dataset, SyntheticConfig,
};
use metric_lab::eval::{knn_classify, recall_at_k};
use metric_lab::numcore::linalg::{gram_outer, lower_matvec};
use metric_lab::numcore::{cholesky_factor, gaussian_matrix, RngStream, Tensor};
use metric_lab::trainer::DiagnosticsTrace;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use common::{brute_force_variance, naive_recall, normalize_rows, random_rotation};

fn labels_strategy(n: usize, classes: i32) -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(-1..classes, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb1_round_trip(
        rows in 1usize..20,
        cols in 1usize..9,
        seed in any::<u64>(),
        labels in prop::collection::vec(-1i32..50, 20),
    ) {
        let mut rng = RngStream::new(seed);
        // values representable in f32 survive the narrowing exactly
        let data: Vec<f64> = (0..rows * cols).map(|_| (rng.normal() * 3.0) as f32 as f64).collect();
        let ds = Dataset::new("x", Tensor::matrix(rows, cols, data).unwrap(), labels[..rows].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        save_embeddings(&ds, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        prop_assert_eq!(back.features(), ds.features());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn pca_components_orthonormal(seed in any::<u64>(), n in 3usize..40, d in 2usize..7) {
        let mut rng = RngStream::new(seed);
        let z = gaussian_matrix(&mut rng, n, d);
        let k = d.min(n);
        let r = pca_project(&z, k).unwrap();
        let g = r.components.matmul(&r.components.transpose().unwrap()).unwrap();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g.get2(i, j) - want).abs() < 1e-8);
            }
        }
        let total: f64 = r.explained_fraction.iter().sum();
        prop_assert!(total <= 1.0 + 1e-9);
        prop_assert!(r.explained_fraction.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn t_test_is_antisymmetric(
        a in prop::collection::vec(-10.0f64..10.0, 2..30),
        seed in any::<u64>(),
    ) {
        let mut rng = RngStream::new(seed);
        let b: Vec<f64> = a.iter().map(|v| v + rng.normal()).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }

    #[test]
    fn t_p_value_matches_statrs(t in -12.0f64..12.0, df in 1usize..60) {
        let dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
        let want = 2.0 * dist.cdf(-t.abs());
        let got = student_t_two_sided_p(t, df as f64);
        prop_assert!((got - want).abs() <= 1e-10 + 1e-8 * want, "{got} vs {want}");
    }

    #[test]
    fn incomplete_beta_matches_statrs(x in 0.0f64..1.0, a in 0.05f64..40.0, b in 0.05f64..40.0) {
        let want = statrs::function::beta::beta_reg(a, b, x);
        let got = regularized_incomplete_beta(x, a, b);
        prop_assert!((got - want).abs() < 1e-10, "I_{x}({a},{b}) = {got} vs {want}");
    }

    #[test]
    fn decay_epoch_is_monotone_under_appending(
        losses in prop::collection::vec(0.0f64..10.0, 1..30),
        extra in prop::collection::vec(0.0f64..10.0, 0..10),
    ) {
        let n = losses.len();
        let before = loss_decay_epoch(&DiagnosticsTrace::from_series(&losses, &vec![0.0; n], &vec![0.0; n]));
        let mut longer = losses.clone();
        longer.extend(&extra);
        let m = longer.len();
        let after = loss_decay_epoch(&DiagnosticsTrace::from_series(&longer, &vec![0.0; m], &vec![0.0; m]));
        if let Some(e) = before {
            prop_assert_eq!(after, Some(e));
        }
    }

    #[test]
    fn recall_is_monotone_and_matches_oracle(
        seed in any::<u64>(),
        labels in labels_strategy(60, 5),
        dim in 2usize..5,
        leave_one_out in any::<bool>(),
    ) {
        prop_assume!(labels.iter().filter(|&&l| l != -1).count() >= 12);
        let mut rng = RngStream::new(seed);
        let z = gaussian_matrix(&mut rng, labels.len(), dim);
        let ks = [1, 2, 5, 10];
        let (g, gl) = if leave_one_out {
            (z.clone(), labels.clone())
        } else {
            let g = gaussian_matrix(&mut rng, 40, dim);
            let gl: Vec<i32> = (0..40).map(|i| (i % 5) as i32).collect();
            (g, gl)
        };
        let r = recall_at_k(&z, &labels, &g, &gl, &ks, leave_one_out).unwrap();
        let values: Vec<f64> = r.recall_at.values().copied().collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(r.recall_at, naive_recall(&z, &labels, &g, &gl, &ks, leave_one_out));
    }

    #[test]
    fn knn_and_recall_invariant_under_rotation(seed in any::<u64>(), labels in labels_strategy(50, 4)) {
        prop_assume!(labels.iter().filter(|&&l| l != -1).count() >= 12);
        let dim = 4;
        let mut rng = RngStream::new(seed);
        let z = normalize_rows(&gaussian_matrix(&mut rng, labels.len(), dim));
        let rot = random_rotation(&mut rng, dim);
        let zr = z.matmul(&rot).unwrap();
        let (train, test) = (z.select_rows(&(0..30).collect::<Vec<_>>()), z.select_rows(&(30..50).collect::<Vec<_>>()));
        let (train_r, test_r) = (zr.select_rows(&(0..30).collect::<Vec<_>>()), zr.select_rows(&(30..50).collect::<Vec<_>>()));
        let (ltr, lte) = (&labels[..30], &labels[30..]);
        prop_assume!(ltr.iter().any(|&l| l != -1) && lte.iter().any(|&l| l != -1));
        let a = knn_classify(&train, ltr, &test, lte, 5).unwrap();
        let b = knn_classify(&train_r, ltr, &test_r, lte, 5).unwrap();
        prop_assert_eq!(a, b);
        let ra = recall_at_k(&z, &labels, &z, &labels, &[1, 5], true).unwrap();
        let rb = recall_at_k(&zr, &labels, &zr, &labels, &[1, 5], true).unwrap();
        prop_assert_eq!(ra.recall_at, rb.recall_at);
    }

    #[test]
    fn variance_matches_brute_force(seed in any::<u64>(), labels in labels_strategy(120, 6), dim in 1usize..6) {
        let mut counts = std::collections::BTreeMap::new();
        for &l in labels.iter().filter(|&&l| l != -1) {
            *counts.entry(l).or_insert(0) += 1;
        }
        prop_assume!(counts.len() >= 2 && counts.values().all(|&c| c >= 2));
        let z = gaussian_matrix(&mut RngStream::new(seed), labels.len(), dim);
        let r = variance_report(&z, &labels).unwrap();
        let (intra, inter) = brute_force_variance(&z, &labels);
        prop_assert!((r.intra_mean - intra).abs() < 1e-12);
        prop_assert!((r.inter_mean_sq - inter).abs() < 1e-12);
        prop_assert!(r.intra_var >= 0.0 && r.inter_var >= 0.0);
        prop_assert_eq!(r.per_class_intra.len(), r.num_classes);
    }

    #[test]
    fn cholesky_round_trip(seed in any::<u64>(), n in 1usize..12) {
        let a = gaussian_matrix(&mut RngStream::new(seed), n, n);
        let mut s = gram_outer(&a).unwrap();
        for i in 0..n {
            let v = s.get2(i, i) + 0.1;
            s.set2(i, i, v);
        }
        let l = cholesky_factor(&s).unwrap();
        let back = l.matmul(&l.transpose().unwrap()).unwrap();
        let err = back.sub(&s).unwrap().norm() / s.norm();
        prop_assert!(err < 1e-8);
        let z = vec![1.0; n];
        prop_assert_eq!(lower_matvec(&l, &z).len(), n);
    }
}

#[test]
fn synthetic_relabel_rate() {
    // A relabel draws uniformly over all C classes, so the observed label
    // differs from the generating class with probability 0.1·(C−1)/C.
    let mut changed = 0usize;
    let mut total = 0usize;
    for seed in 0..4 {
        let cfg = SyntheticConfig {
            dim: 8,
            ..SyntheticConfig::with_seed(seed)
        };
        let ds = generate_synthetic(&cfg).unwrap();
        for (i, &l) in ds.labels().iter().enumerate().take(cfg.num_classes * cfg.samples_per_class) {
            total += 1;
            if l != (i / cfg.samples_per_class) as i32 {
                changed += 1;
            }
        }
        assert_eq!(ds.num_outliers(), 100);
        assert_eq!(ds.len(), 2100);
    }
    let p = 0.1 * 9.0 / 10.0;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    let rate = changed as f64 / total as f64;
    assert!((rate - p).abs() < 3.0 * se, "rate {rate} vs {p} ± {}", 3.0 * se);
}

#[test]
fn synthetic_classes_separable_by_nearest_centroid() {
    // Class centroids estimated from half the data classify the other half
    // far above chance.
    let ds = generate_synthetic(&SyntheticConfig::with_seed(3)).unwrap();
    let (c, n) = (10, 200);
    let d = ds.dim();
    let mut centroids = vec![vec![0.0; d]; c];
    for class in 0..c {
        for i in class * n..class * n + n / 2 {
            centroids[class].iter_mut().zip(ds.features().row(i)).for_each(|(m, v)| *m += v / (n / 2) as f64);
        }
    }
    let mut correct = 0;
    for class in 0..c {
        for i in class * n + n / 2..(class + 1) * n {
            let x = ds.features().row(i);
            let best = (0..c)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&centroids[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = x.iter().zip(&centroids[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(best == class);
        }
    }
    let acc = correct as f64 / (c * n / 2) as f64;
    assert!(acc > 0.6, "nearest-centroid accuracy {acc}");
}
