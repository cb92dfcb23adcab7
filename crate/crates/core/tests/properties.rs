use proptest::collection::vec;
use proptest::prelude::*;
use scriptviolence::features::{FeaturizedMovie, GenreVector, UtteranceFeature};
use scriptviolence::neural::{softmax, ModelDims, ModelParams};
use scriptviolence::pipeline::{assign_folds, make_windows, movie_posteriors};
use scriptviolence::roles::{filter_forms, form_distribution, Form, Mention, SvoTriplet};
use scriptviolence::stats::{
    anova_oneway, bonferroni, dist_cdf, dist_sf, macro_f1, pearson_residuals, prop_test_two, residualize_fixed_effect,
    t_test_two_sample, ContingencyTable, Distribution,
};

fn movie(len: usize, dim: usize, genre_dim: usize) -> FeaturizedMovie {
    FeaturizedMovie {
        movie_id: "p".into(),
        features: (0..len)
            .map(|i| UtteranceFeature::new((0..dim).map(|j| ((i * 7 + j) as f64).cos()).collect(), vec![i as f64]))
            .collect(),
        genre: GenreVector { bits: (0..genre_dim).map(|i| (i % 2) as u8).collect() },
        label: None,
    }
}

fn spread(xs: &[f64]) -> bool {
    xs.iter().any(|x| (x - xs[0]).abs() > 1e-3)
}

fn triplet(subject: &str, object: &str) -> SvoTriplet {
    let mention = |upos: &str| Mention { surface: "x".into(), upos: upos.into(), coref: None };
    SvoTriplet {
        movie_id: "m".into(),
        utterance_index: 0,
        subject: mention(subject),
        verb_lemma: "hit".into(),
        object: mention(object),
        form: Form::from_upos(subject, object),
        passive: false,
    }
}

const UPOS: [&str; 4] = ["PRON", "NOUN", "PROPN", "VERB"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_window_per_utterance_centered_on_it(len in 1usize..40, half in 1usize..7) {
        let k = 2 * half;
        let m = movie(len, 2, 0);
        let windows = make_windows(&m, k).unwrap();
        prop_assert_eq!(windows.len(), len);
        for (i, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.len(), k + 1);
            prop_assert_eq!(w.center_index, i);
            prop_assert_eq!(w.slots[w.center_slot()], Some(i));
            let real = w.slots.iter().flatten().count();
            prop_assert_eq!(real, (i + half + 1).min(len) - i.saturating_sub(half));
        }
    }

    #[test]
    fn posteriors_are_distributions(len in 1usize..12, seed in any::<u64>(), scale in 0.01f64..3.0) {
        let model = ModelParams::random(ModelDims::new(3, 3, 2), scale, seed);
        let (records, _) = movie_posteriors(&model, &movie(len, 2, 2), 2).unwrap();
        prop_assert_eq!(records.len(), len);
        for r in records {
            let sum: f64 = r.class_probs.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(r.class_probs.iter().all(|&p| p > 0.0));
            prop_assert!((r.violence_posterior - (1.0 - r.class_probs[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_sums_to_one(logits in vec(-50.0f64..50.0, 1..8)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn folds_partition_evenly(n in 2usize..60, folds in 2usize..8, seed in any::<u64>()) {
        prop_assume!(n >= folds);
        let assignment = assign_folds(n, folds, seed);
        prop_assert_eq!(assignment.len(), n);
        let mut sizes = vec![0usize; folds];
        for &f in &assignment {
            prop_assert!(f < folds);
            sizes[f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(assign_folds(n, folds, seed), assignment);
    }

    #[test]
    fn filter_forms_is_idempotent(pairs in vec((0usize..4, 0usize..4), 0..30)) {
        let triplets: Vec<SvoTriplet> = pairs.iter().map(|&(s, o)| triplet(UPOS[s], UPOS[o])).collect();
        let once = filter_forms(&triplets);
        prop_assert_eq!(filter_forms(&once), once.clone());
        prop_assert!(once.iter().all(|t| matches!(t.form, Form::Pvp | Form::Pvpn)));
        if !triplets.is_empty() {
            let total: f64 = form_distribution(&triplets).unwrap().values().sum();
            prop_assert!((total - 100.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn residuals_sum_to_zero_per_group(rows in vec((0u8..5, -100.0f64..100.0), 1..50)) {
        let groups: Vec<u8> = rows.iter().map(|r| r.0).collect();
        let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let res = residualize_fixed_effect(&values, &groups).unwrap();
        for g in 0..5u8 {
            let s: f64 = res.iter().zip(&groups).filter(|(_, x)| **x == g).map(|(r, _)| r).sum();
            prop_assert!(s.abs() < 1e-9, "group {g}: {s}");
        }
    }

    #[test]
    fn t_test_is_antisymmetric_and_matches_anova(a in vec(-10.0f64..10.0, 2..12), b in vec(-10.0f64..10.0, 2..12)) {
        prop_assume!(spread(&a) || spread(&b));
        let ab = t_test_two_sample(&a, &b).unwrap();
        let ba = t_test_two_sample(&b, &a).unwrap();
        prop_assert!((ab.statistic + ba.statistic).abs() < 1e-12 * ab.statistic.abs().max(1.0));
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        let f = anova_oneway(&[a, b]).unwrap();
        prop_assert!((f.statistic - ab.statistic * ab.statistic).abs() < 1e-9 * f.statistic.max(1.0));
        prop_assert!((f.p_value - ab.p_value).abs() < 1e-9);
    }

    #[test]
    fn prop_test_is_symmetric(n1 in 1u64..200, n2 in 1u64..200, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let (x1, x2) = ((f1 * n1 as f64) as u64, (f2 * n2 as f64) as u64);
        let a = prop_test_two(x1, n1, x2, n2).unwrap();
        let b = prop_test_two(x2, n2, x1, n1).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-12 * a.statistic.max(1.0));
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }

    #[test]
    fn weighted_residuals_cancel(counts in vec(vec(1u64..60, 3), 2..5)) {
        let labels = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let table = ContingencyTable::new(labels(counts.len()), labels(3), counts.clone()).unwrap();
        let z = pearson_residuals(&table).unwrap();
        let e = table.expected().unwrap();
        for i in 0..counts.len() {
            let s: f64 = (0..3).map(|j| z[i][j] * e[i][j].sqrt()).sum();
            prop_assert!(s.abs() < 1e-9);
        }
        for j in 0..3 {
            let s: f64 = (0..counts.len()).map(|i| z[i][j] * e[i][j].sqrt()).sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn bonferroni_is_monotone(ps in vec(0.0f64..=1.0, 1..20)) {
        let adj = bonferroni(&ps).unwrap();
        for (i, (p, q)) in ps.iter().zip(&adj).enumerate() {
            prop_assert!(q >= p && *q <= 1.0);
            for (p2, q2) in ps.iter().zip(&adj).skip(i + 1) {
                if p <= p2 {
                    prop_assert!(q <= q2);
                }
            }
        }
    }

    #[test]
    fn macro_f1_is_bounded(pairs in vec((0u8..3, 0u8..3), 1..40)) {
        let (pred, gold): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let f = macro_f1(&pred, &gold, &[0, 1, 2]).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let perfect = macro_f1(&gold, &gold, &[0, 1, 2]).unwrap();
        let present = (0..3u8).filter(|c| gold.contains(c)).count() as f64;
        prop_assert!((perfect - present / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_and_sf_are_complementary(df in 0.5f64..100.0, d2 in 0.5f64..100.0, x in -20.0f64..20.0, dx in 0.0f64..5.0) {
        for dist in [Distribution::StudentT(df), Distribution::FisherF(df, d2), Distribution::ChiSquared(df)] {
            let c = dist_cdf(dist, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c + dist_sf(dist, x).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!(dist_cdf(dist, x + dx).unwrap() >= c - 1e-14);
        }
    }
}
