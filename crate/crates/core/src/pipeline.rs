//! Context windows, cross-validated training with a hidden-size sweep, and
//! per-utterance violence posteriors.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeaturizedMovie, UtteranceFeature};
use crate::neural::{
    adam_step, classify_window, loss_and_gradients, AdamConfig, AdamState, ModelDims, ModelParams, WindowExample,
    NUM_CLASSES,
};
use crate::script::ViolenceLevel;
use crate::stats::macro_f1;

/// The utterances around one center utterance. Slot `k / 2` is the center;
/// `None` slots fall outside the movie and read as the zero feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub movie_id: String,
    pub center_index: usize,
    pub k: usize,
    pub slots: Vec<Option<usize>>,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn center_slot(&self) -> usize {
        self.k / 2
    }

    pub fn is_padding(&self, slot: usize) -> bool {
        self.slots[slot].is_none()
    }

    /// Slot features as slices into `movie`, with `zero` standing in for
    /// padding.
    pub fn features<'a>(&self, movie: &'a FeaturizedMovie, zero: &'a [f64]) -> Vec<&'a [f64]> {
        self.slots.iter().map(|s| s.map_or(zero, |i| movie.features[i].combined.as_slice())).collect()
    }

    /// Owned `(feature, is_padding)` pairs.
    pub fn materialize(&self, movie: &FeaturizedMovie) -> Vec<(UtteranceFeature, bool)> {
        let first = &movie.features[self.slots[self.center_slot()].unwrap_or(0)];
        let pad = UtteranceFeature::empty(first.semantic.len(), first.sentiment.len());
        self.slots
            .iter()
            .map(|s| match s {
                Some(i) => (movie.features[*i].clone(), false),
                None => (pad.clone(), true),
            })
            .collect()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidWindow(k));
    }
    Ok(())
}

/// One window per utterance, each `k + 1` slots long.
pub fn make_windows(movie: &FeaturizedMovie, k: usize) -> Result<Vec<ContextWindow>> {
    check_k(k)?;
    let n = movie.features.len();
    if n == 0 {
        return Err(Error::EmptyInput("movie has no utterances"));
    }
    let half = k / 2;
    Ok((0..n)
        .map(|t| ContextWindow {
            movie_id: movie.movie_id.clone(),
            center_index: t,
            k,
            slots: (0..=k).map(|s| (t + s).checked_sub(half).filter(|&i| i < n)).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_keep: f64,
    pub convergence_delta: f64,
    pub max_epochs: usize,
    pub folds: usize,
    pub hidden_grid: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 16,
            dropout_keep: 0.5,
            convergence_delta: 1e-8,
            max_epochs: 200,
            folds: 5,
            hidden_grid: vec![4, 8, 16, 32],
            k: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout_keep must be in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.convergence_delta.is_nan() || self.convergence_delta < 0.0 {
            return bad("convergence_delta must be nonnegative");
        }
        if self.hidden_grid.is_empty() || self.hidden_grid.contains(&0) {
            return bad("hidden_grid must list positive sizes");
        }
        Ok(())
    }
}

/// Epoch losses of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub converged: bool,
}

/// An independent seed for the sub-task `stream` of a run seeded with `seed`.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

fn check_movies(movies: &[&FeaturizedMovie]) -> Result<(usize, usize)> {
    let first = movies.first().ok_or(Error::EmptyInput("no movies"))?;
    let (d, g) = (first.feature_dim(), first.genre.len());
    for m in movies {
        if m.features.is_empty() {
            return Err(Error::EmptyInput("movie has no utterances"));
        }
        if let Some(f) = m.features.iter().find(|f| f.dim() != d) {
            return Err(Error::Shape(format!("movie {}: feature of length {}, expected {d}", m.movie_id, f.dim())));
        }
        if m.genre.len() != g {
            return Err(Error::Shape(format!(
                "movie {}: genre vector of length {}, expected {g}",
                m.movie_id,
                m.genre.len()
            )));
        }
    }
    Ok((d, g))
}

/// Train one model with Adam on every window of `movies`, each window
/// carrying its movie's label.
///
/// An epoch visits the windows in a fresh shuffled order, in mini-batches,
/// with dropout active; the epoch loss is the mean batch loss. Training stops
/// once two consecutive epoch losses differ by less than
/// `cfg.convergence_delta`, or after `cfg.max_epochs`.
pub fn train_model(
    movies: &[&FeaturizedMovie],
    hidden: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    let (d, g) = check_movies(movies)?;
    let labels: Vec<usize> = movies
        .iter()
        .map(|m| {
            m.label.map(ViolenceLevel::index).ok_or_else(|| Error::Config(format!("movie {} has no label", m.movie_id)))
        })
        .collect::<Result<_>>()?;
    let windows: Vec<Vec<ContextWindow>> = movies.iter().map(|m| make_windows(m, cfg.k)).collect::<Result<_>>()?;
    let mut order: Vec<(usize, usize)> =
        windows.iter().enumerate().flat_map(|(mi, ws)| (0..ws.len()).map(move |wi| (mi, wi))).collect();
    let zero = vec![0.0; d];

    let mut model = ModelParams::init(ModelDims::new(d, hidden, g), seed);
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::new(&model, adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut log = TrainLog { epoch_losses: Vec::new(), converged: false };

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<WindowExample<'_>> = chunk
                .iter()
                .map(|&(mi, wi)| WindowExample {
                    features: windows[mi][wi].features(movies[mi], &zero),
                    genre: &movies[mi].genre,
                    gold: labels[mi],
                })
                .collect();
            let (loss, grads) = loss_and_gradients(&batch, &model, Some(cfg.dropout_keep), &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss in epoch {epoch}")));
            }
            adam_step(&mut model, &grads, &mut state)?;
            total += loss;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        log::debug!("H={hidden} epoch {epoch}: loss {epoch_loss:e}");
        let previous = log.epoch_losses.last().copied();
        log.epoch_losses.push(epoch_loss);
        if previous.is_some_and(|p| (epoch_loss - p).abs() < cfg.convergence_delta) {
            log.converged = true;
            break;
        }
    }
    Ok((model, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub movie_id: String,
    pub utterance_index: usize,
    /// LOW, MED, HIGH
    pub class_probs: [f64; NUM_CLASSES],
    pub violence_posterior: f64,
    pub predicted_class: ViolenceLevel,
}

/// Index of the largest entry; ties go to the lower index.
fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn level(i: usize) -> ViolenceLevel {
    ViolenceLevel::from_index(i).expect("class index below NUM_CLASSES")
}

/// Posterior for every utterance from its centered window, and the movie
/// label from the mean class probabilities.
pub fn movie_posteriors(
    model: &ModelParams,
    movie: &FeaturizedMovie,
    k: usize,
) -> Result<(Vec<PosteriorRecord>, ViolenceLevel)> {
    let windows = make_windows(movie, k)?;
    let dims = model.dims();
    if movie.feature_dim() != dims.input_dim {
        return Err(Error::Shape(format!(
            "features of length {}, model expects {}",
            movie.feature_dim(),
            dims.input_dim
        )));
    }
    let zero = vec![0.0; dims.input_dim];
    let records: Vec<PosteriorRecord> = windows
        .par_iter()
        .map(|w| {
            let probs = classify_window(&w.features(movie, &zero), &movie.genre, model, None)?;
            Ok(PosteriorRecord {
                movie_id: movie.movie_id.clone(),
                utterance_index: w.center_index,
                class_probs: probs,
                violence_posterior: 1.0 - probs[0],
                predicted_class: level(argmax(&probs)),
            })
        })
        .collect::<Result<_>>()?;
    let mut mean = [0.0; NUM_CLASSES];
    for r in &records {
        mean.iter_mut().zip(&r.class_probs).for_each(|(m, p)| *m += p);
    }
    Ok((records, level(argmax(&mean))))
}

/// Cross-validation scores of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub fold: usize,
    pub movie_f1: f64,
    pub window_f1: f64,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub hidden: usize,
    pub folds: Vec<FoldScore>,
    pub mean_movie_f1: f64,
    pub mean_window_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// `(movie_id, fold)` for every labeled movie, in dataset order.
    pub assignment: Vec<(String, usize)>,
    pub grid: Vec<GridEntry>,
    pub selected_hidden: usize,
    pub final_epochs: usize,
    pub final_loss: f64,
    pub final_converged: bool,
}

/// Fold of every movie: a seeded shuffle dealt round-robin.
pub fn assign_folds(n_movies: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_movies).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0)));
    let mut fold = vec![0; n_movies];
    for (pos, &m) in order.iter().enumerate() {
        fold[m] = pos % folds;
    }
    fold
}

/// Movie-level and window-level macro-F1 of `model` on `movies`.
pub fn evaluate(model: &ModelParams, movies: &[&FeaturizedMovie], k: usize) -> Result<(f64, f64)> {
    let (mut movie_pred, mut movie_gold) = (Vec::new(), Vec::new());
    let (mut win_pred, mut win_gold) = (Vec::new(), Vec::new());
    for m in movies {
        let gold = m.label.ok_or_else(|| Error::Config(format!("movie {} has no label", m.movie_id)))?;
        let (records, label) = movie_posteriors(model, m, k)?;
        movie_pred.push(label);
        movie_gold.push(gold);
        win_pred.extend(records.iter().map(|r| r.predicted_class));
        win_gold.extend(std::iter::repeat_n(gold, records.len()));
    }
    Ok((macro_f1(&movie_pred, &movie_gold, &ViolenceLevel::ALL)?, macro_f1(&win_pred, &win_gold, &ViolenceLevel::ALL)?))
}

/// Cross-validate every hidden size, pick the best by mean movie-level
/// macro-F1 (ties toward the smaller size) and retrain it on all labeled
/// movies. Unlabeled movies are ignored.
pub fn train(dataset: &[FeaturizedMovie], cfg: &TrainConfig) -> Result<(ModelParams, CvReport)> {
    cfg.validate()?;
    let labeled: Vec<&FeaturizedMovie> = dataset.iter().filter(|m| m.label.is_some()).collect();
    if labeled.len() < cfg.folds {
        return Err(Error::TooFewMovies { labeled: labeled.len(), folds: cfg.folds });
    }
    check_movies(&labeled)?;
    let fold_of = assign_folds(labeled.len(), cfg.folds, cfg.seed);

    let jobs: Vec<(usize, usize)> =
        (0..cfg.hidden_grid.len()).flat_map(|h| (0..cfg.folds).map(move |f| (h, f))).collect();
    let scores: Vec<FoldScore> = jobs
        .par_iter()
        .map(|&(hi, fold)| {
            let hidden = cfg.hidden_grid[hi];
            let (train_set, held_out): (Vec<_>, Vec<_>) = labeled.iter().zip(&fold_of).partition(|(_, f)| **f != fold);
            let train_set: Vec<&FeaturizedMovie> = train_set.into_iter().map(|(m, _)| *m).collect();
            let held_out: Vec<&FeaturizedMovie> = held_out.into_iter().map(|(m, _)| *m).collect();
            let seed = derive_seed(cfg.seed, 1 + (hi * cfg.folds + fold) as u64);
            let (model, log) = train_model(&train_set, hidden, cfg, seed)?;
            let (movie_f1, window_f1) = evaluate(&model, &held_out, cfg.k)?;
            Ok(FoldScore { fold, movie_f1, window_f1, epochs: log.epoch_losses.len(), converged: log.converged })
        })
        .collect::<Result<_>>()?;

    let grid: Vec<GridEntry> = cfg
        .hidden_grid
        .iter()
        .zip(scores.chunks(cfg.folds))
        .map(|(&hidden, folds)| {
            let n = folds.len() as f64;
            GridEntry {
                hidden,
                mean_movie_f1: folds.iter().map(|f| f.movie_f1).sum::<f64>() / n,
                mean_window_f1: folds.iter().map(|f| f.window_f1).sum::<f64>() / n,
                folds: folds.to_vec(),
            }
        })
        .collect();
    let best = grid
        .iter()
        .reduce(|best, e| {
            let better = e.mean_movie_f1 > best.mean_movie_f1
                || (e.mean_movie_f1 == best.mean_movie_f1 && e.hidden < best.hidden);
            if better {
                e
            } else {
                best
            }
        })
        .expect("hidden grid is not empty");
    let selected_hidden = best.hidden;

    let final_seed = derive_seed(cfg.seed, u64::MAX);
    let (model, log) = train_model(&labeled, selected_hidden, cfg, final_seed)?;
    let report = CvReport {
        k: cfg.k,
        seed: cfg.seed,
        assignment: labeled.iter().zip(&fold_of).map(|(m, f)| (m.movie_id.clone(), *f)).collect(),
        grid,
        selected_hidden,
        final_epochs: log.epoch_losses.len(),
        final_loss: log.epoch_losses.last().copied().unwrap_or(f64::NAN),
        final_converged: log.converged,
    };
    Ok((model, report))
}

/// Plain-text cross-validation report.
///
/// ```text
/// k=10
/// seed=7
/// fold m1=0
/// ...
/// H=4 fold=0 movie_macro_f1=1 window_macro_f1=0.8 epochs=57 converged=true
/// H=4 mean movie_macro_f1=… window_macro_f1=…
/// selected H=4
/// final epochs=61 loss=… converged=true
/// ```
pub fn write_cv_report(r: &CvReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "k={}", r.k)?;
    writeln!(w, "seed={}", r.seed)?;
    for (movie, fold) in &r.assignment {
        writeln!(w, "fold {movie}={fold}")?;
    }
    for e in &r.grid {
        for f in &e.folds {
            writeln!(
                w,
                "H={} fold={} movie_macro_f1={} window_macro_f1={} epochs={} converged={}",
                e.hidden, f.fold, f.movie_f1, f.window_f1, f.epochs, f.converged
            )?;
        }
        writeln!(w, "H={} mean movie_macro_f1={} window_macro_f1={}", e.hidden, e.mean_movie_f1, e.mean_window_f1)?;
    }
    writeln!(w, "selected H={}", r.selected_hidden)?;
    writeln!(w, "final epochs={} loss={} converged={}", r.final_epochs, r.final_loss, r.final_converged)?;
    w.flush()?;
    Ok(())
}

const POSTERIOR_HEADER: [&str; 7] =
    ["movie_id", "utterance_index", "p_low", "p_med", "p_high", "violence_posterior", "predicted_class"];

pub fn write_posteriors(records: &[PosteriorRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POSTERIOR_HEADER)?;
    for r in records {
        let [lo, med, hi] = r.class_probs;
        out.write_record([
            r.movie_id.clone(),
            r.utterance_index.to_string(),
            lo.to_string(),
            med.to_string(),
            hi.to_string(),
            r.violence_posterior.to_string(),
            r.predicted_class.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_posteriors(rdr: impl Read) -> Result<Vec<PosteriorRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != POSTERIOR_HEADER {
        return Err(Error::BadHeader { expected: POSTERIOR_HEADER.join(","), found: found.join(",") });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |message: String| Error::BadRecord { record: i + 1, message };
        let f = |j: usize| row.get(j).unwrap_or("");
        let num = |j: usize| f(j).parse::<f64>().map_err(|_| bad(format!("bad probability {:?}", f(j))));
        let class_probs = [num(2)?, num(3)?, num(4)?];
        let violence_posterior = num(5)?;
        if class_probs.iter().chain([&violence_posterior]).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(bad("probability outside [0, 1]".into()));
        }
        out.push(PosteriorRecord {
            movie_id: f(0).to_string(),
            utterance_index: f(1).parse().map_err(|_| bad(format!("bad utterance index {:?}", f(1))))?,
            class_probs,
            violence_posterior,
            predicted_class: f(6).parse()?,
        });
    }
    Ok(out)
}
