use std::io::Write;

use scriptviolence::features::{FeaturizedMovie, GenreVector, UtteranceFeature};
use scriptviolence::neural::{
    read_model, seeded_gradcheck, write_model, ModelDims, ModelParams, GRADCHECK_CASES, GRADCHECK_EPSILON,
};
use scriptviolence::pipeline::{make_windows, movie_posteriors};
use scriptviolence::stats::{anova_oneway, t_test_two_sample};

use crate::CliError;

const GRADCHECK_BOUND: f64 = 1e-4;

type Check = fn() -> Result<(), String>;

fn movie(len: usize, dim: usize, genre_dim: usize) -> FeaturizedMovie {
    FeaturizedMovie {
        movie_id: "selfcheck".into(),
        features: (0..len)
            .map(|i| UtteranceFeature::new((0..dim).map(|j| ((i * dim + j) as f64 * 0.37).sin()).collect(), vec![]))
            .collect(),
        genre: GenreVector { bits: (0..genre_dim).map(|i| (i % 2) as u8).collect() },
        label: None,
    }
}

fn windows() -> Result<(), String> {
    for len in 1..=20 {
        let m = movie(len, 2, 0);
        for k in [2, 4, 10] {
            let ws = make_windows(&m, k).map_err(|e| e.to_string())?;
            if ws.len() != len {
                return Err(format!("L={len} k={k}: {} windows", ws.len()));
            }
            for (i, w) in ws.iter().enumerate() {
                for (slot, s) in w.slots.iter().enumerate() {
                    let pos = (i + slot).checked_sub(k / 2).filter(|&p| p < len);
                    if *s != pos {
                        return Err(format!("L={len} k={k} center {i} slot {slot}: {s:?}, expected {pos:?}"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn posteriors() -> Result<(), String> {
    let model = ModelParams::random(ModelDims::new(3, 4, 2), 0.5, 7);
    let (records, _) = movie_posteriors(&model, &movie(9, 3, 2), 4).map_err(|e| e.to_string())?;
    for r in records {
        let sum: f64 = r.class_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || r.class_probs.iter().any(|&p| p <= 0.0) {
            return Err(format!("utterance {}: probabilities {:?}", r.utterance_index, r.class_probs));
        }
        if (r.violence_posterior - (1.0 - r.class_probs[0])).abs() > 1e-15 {
            return Err(format!("utterance {}: posterior is not 1 - p(LOW)", r.utterance_index));
        }
    }
    Ok(())
}

fn f_equals_t_squared() -> Result<(), String> {
    let a = [2.1, 3.4, 1.9, 5.0, 4.2];
    let b = [1.0, 0.4, 2.2, 1.7];
    let t = t_test_two_sample(&a, &b).map_err(|e| e.to_string())?;
    let f = anova_oneway(&[a.to_vec(), b.to_vec()]).map_err(|e| e.to_string())?;
    let gap = (f.statistic - t.statistic * t.statistic).abs();
    if gap > 1e-9 {
        return Err(format!("F - t^2 = {gap}"));
    }
    Ok(())
}

fn model_round_trip() -> Result<(), String> {
    let model = ModelParams::random(ModelDims::new(5, 3, 4), 1.0, 11);
    let mut first = Vec::new();
    write_model(&model, &mut first).map_err(|e| e.to_string())?;
    let back = read_model(first.as_slice()).map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    write_model(&back, &mut second).map_err(|e| e.to_string())?;
    if first != second {
        return Err("re-saved model differs".into());
    }
    Ok(())
}

pub fn check(stdout: &mut dyn Write) -> Result<(), CliError> {
    let worst = seeded_gradcheck()?;
    let _ = writeln!(stdout, "gradcheck max_rel_err={worst}");
    let _ = writeln!(stdout, "gradcheck cases={GRADCHECK_CASES} epsilon={GRADCHECK_EPSILON}");
    let mut failed = Vec::new();
    if worst.is_nan() || worst >= GRADCHECK_BOUND {
        failed.push("gradcheck");
    }
    let checks: [(&str, Check); 4] = [
        ("windows", windows),
        ("posteriors", posteriors),
        ("f_equals_t_squared", f_equals_t_squared),
        ("model_round_trip", model_round_trip),
    ];
    for (name, run) in checks {
        match run() {
            Ok(()) => {
                let _ = writeln!(stdout, "invariant {name} ok");
            }
            Err(msg) => {
                let _ = writeln!(stdout, "invariant {name} FAILED: {msg}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("self-check failed: {}", failed.join(", "))))
    }
}
