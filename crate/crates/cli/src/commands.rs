use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use scriptviolence::features::{
    default_genre_vocabulary, load_embeddings, load_sentiment, validate_vocabulary, EncoderSentiment, FeaturizedMovie,
    Featurizer, SentimentSource, ZeroSentiment,
};
use scriptviolence::neural::{load_model, read_bilstm, save_model, BiLstmParams};
use scriptviolence::pipeline::{self, movie_posteriors, read_posteriors, write_cv_report, write_posteriors};
use scriptviolence::roles::{
    collect_interactions, extract_roles, read_interactions, read_roles, write_form_distribution, write_interactions,
    write_roles,
};
use scriptviolence::script::{
    load_conllu, load_demographics, load_manifest, parse_screenplay, read_dataset, write_dataset, DemographicIndex,
    Demographics, Screenplay, ViolenceLevel,
};
use scriptviolence::stats::{analyze_roles, interaction_residuals, macro_f1, write_residuals, write_stats_report};

use crate::config::{require, RunConfig};
use crate::CliError;

pub const DATASET: &str = "dataset.jsonl";
pub const MODEL: &str = "model.txt";
pub const CV_REPORT: &str = "cv_report.txt";
pub const POSTERIORS: &str = "posteriors.csv";
pub const MOVIE_LABELS: &str = "movie_labels.csv";
pub const ROLES: &str = "roles.csv";
pub const INTERACTIONS: &str = "interactions.csv";
pub const FORMS: &str = "forms.csv";
pub const STATS_REPORT: &str = "stats_report.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const SUMMARY: &str = "summary.txt";

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Parse a file with `f`, attaching the path to any error.
fn read_with<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> scriptviolence::Result<T>) -> Result<T, CliError> {
    f(open(path)?).map_err(|e| CliError::file(path, e))
}

/// Write a file through `f`, creating the output directory first.
fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> scriptviolence::Result<()>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))?;
    f(&mut w).map_err(|e| CliError::file(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// An output of an earlier stage, or a validation error naming that stage.
fn stage_input(cfg: &RunConfig, file: &str, what: &str, stage: &str) -> Result<PathBuf, CliError> {
    let path = cfg.output(file);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Validation(format!("{what} not found: {} (run `{stage}` first)", path.display())))
    }
}

fn screenplays(cfg: &RunConfig) -> Result<Vec<Screenplay>, CliError> {
    let path = stage_input(cfg, DATASET, "dataset", "ingest")?;
    let mut movies = read_with(&path, read_dataset)?;
    if let Some(manifest) = &cfg.manifest {
        require(manifest, "manifest")?;
        let entries = read_with(manifest, load_manifest)?;
        for sp in &mut movies {
            if let Some(entry) = entries.get(&sp.movie_id) {
                sp.apply_manifest(entry);
            }
        }
    }
    Ok(movies)
}

fn vocabulary(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let Some(path) = &cfg.genre_vocabulary else {
        return Ok(default_genre_vocabulary());
    };
    require(path, "genre vocabulary")?;
    let mut words = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if !line.trim().is_empty() {
            words.push(line.trim().to_string());
        }
    }
    words.sort();
    words.dedup();
    validate_vocabulary(&words)?;
    Ok(words)
}

fn featurize(cfg: &RunConfig, movies: &[Screenplay]) -> Result<Vec<FeaturizedMovie>, CliError> {
    let emb_path = cfg.input("embeddings", &cfg.embeddings)?;
    let embeddings = read_with(&emb_path, |r| load_embeddings(r, cfg.ngram_order))?;
    let vocab = vocabulary(cfg)?;
    let encoder: Option<BiLstmParams> = match &cfg.sentiment_model {
        Some(p) => {
            require(p, "sentiment model")?;
            Some(read_with(p, read_bilstm)?)
        }
        None => None,
    };
    let precomputed = match &cfg.sentiment {
        Some(p) => {
            require(p, "sentiment file")?;
            Some(read_with(p, load_sentiment)?)
        }
        None => None,
    };
    let zero = ZeroSentiment(cfg.sentiment_dim);
    let provider: &dyn SentimentSource = match (&encoder, &precomputed) {
        (Some(encoder), _) => &EncoderSentiment { encoder, embeddings: &embeddings },
        (None, Some(p)) => p,
        (None, None) => &zero,
    };
    let featurizer = Featurizer::new(&embeddings, provider, &vocab);
    let out: Vec<FeaturizedMovie> = movies.iter().map(|m| featurizer.movie(m)).collect();
    let s = &featurizer.stats;
    if s.embedding_misses() + s.sentiment_misses() + s.unknown_genres() > 0 {
        warn!(
            "fallbacks: {} embedding misses, {} sentiment misses, {} unknown genres",
            s.embedding_misses(),
            s.sentiment_misses(),
            s.unknown_genres()
        );
    }
    Ok(out)
}

fn demographics(cfg: &RunConfig) -> Result<Demographics, CliError> {
    match &cfg.demographics {
        Some(path) => {
            require(path, "demographics")?;
            read_with(path, load_demographics)
        }
        None => {
            warn!("no demographics configured; every character is UNKNOWN");
            Ok(Demographics::default())
        }
    }
}

pub fn ingest(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.input("scripts_dir", &cfg.scripts_dir)?;
    let manifest_path = cfg.input("manifest", &cfg.manifest)?;
    let manifest = read_with(&manifest_path, load_manifest)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| CliError::io(&dir, e)))
        .collect::<Result<Vec<_>, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    files.sort();
    let mut movies = Vec::new();
    for path in &files {
        let movie_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut raw = String::new();
        open(path)?.read_to_string(&mut raw).map_err(|e| CliError::io(path, e))?;
        let mut sp = parse_screenplay(&raw, &movie_id).map_err(|e| CliError::file(path, e))?;
        match manifest.get(&movie_id) {
            Some(entry) => sp.apply_manifest(entry),
            None => warn!("{movie_id}: not in the manifest"),
        }
        movies.push(sp);
    }
    for id in manifest.keys() {
        if !movies.iter().any(|m| &m.movie_id == id) {
            warn!("{id}: listed in the manifest but has no screenplay");
        }
    }
    if movies.is_empty() {
        return Err(CliError::Validation(format!("no .txt screenplays in {}", dir.display())));
    }
    write_with(&cfg.output(DATASET), |w| write_dataset(&movies, w))?;
    let utterances: usize = movies.iter().map(|m| m.utterances.len()).sum();
    let _ = writeln!(stdout, "ingested {} movies, {} utterances", movies.len(), utterances);
    Ok(())
}

pub fn train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let movies = screenplays(cfg)?;
    let dataset = featurize(cfg, &movies)?;
    let (model, report) = pipeline::train(&dataset, &cfg.train)?;
    let model_path = cfg.output(MODEL);
    if let Some(dir) = model_path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_model(&model, &model_path).map_err(|e| CliError::file(&model_path, e))?;
    write_with(&cfg.output(CV_REPORT), |w| write_cv_report(&report, w))?;
    let _ = writeln!(
        stdout,
        "selected H={} final epochs={} converged={}",
        report.selected_hidden, report.final_epochs, report.final_converged
    );
    Ok(())
}

pub fn classify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let model_path = stage_input(cfg, MODEL, "model", "train")?;
    let model = load_model(&model_path).map_err(|e| CliError::file(&model_path, e))?;
    let movies = screenplays(cfg)?;
    let dataset = featurize(cfg, &movies)?;
    let mut records = Vec::new();
    let mut labels = Vec::new();
    for movie in &dataset {
        let (r, predicted) = movie_posteriors(&model, movie, cfg.train.k)?;
        records.extend(r);
        labels.push((movie.movie_id.clone(), predicted, movie.label));
    }
    write_with(&cfg.output(POSTERIORS), |w| write_posteriors(&records, w))?;
    write_with(&cfg.output(MOVIE_LABELS), |w| {
        writeln!(w, "movie_id,predicted,gold")?;
        for (id, predicted, gold) in &labels {
            writeln!(w, "{id},{predicted},{}", gold.map_or("-", ViolenceLevel::as_str))?;
        }
        Ok(())
    })?;
    let (pred, gold): (Vec<_>, Vec<_>) = labels.iter().filter_map(|(_, p, g)| g.map(|g| (*p, g))).unzip();
    if !gold.is_empty() {
        let f1 = macro_f1(&pred, &gold, &ViolenceLevel::ALL)?;
        info!("movie-level macro-F1 against manifest labels: {f1}");
    }
    let _ = writeln!(stdout, "classified {} utterances in {} movies", records.len(), labels.len());
    Ok(())
}

pub fn roles(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let posterior_path = cfg.output(POSTERIORS);
    if !posterior_path.exists() {
        return Err(CliError::Validation(format!(
            "posterior file {} is required for the LOW-violence gate (run `classify` first)",
            posterior_path.display()
        )));
    }
    let posteriors = read_with(&posterior_path, read_posteriors)?;
    let parses = cfg.input("parses", &cfg.parses)?;
    let sentences = read_with(&parses, load_conllu)?;
    let movies = screenplays(cfg)?;
    let demo = demographics(cfg)?;
    let mut extra: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &demo.records {
        extra.entry(r.movie_id.clone()).or_default().push(r.character_id.clone());
    }
    let out = extract_roles(&movies, &sentences, &posteriors, &extra)?;
    let interactions = collect_interactions(&out.assignments, &demo.index());
    write_with(&cfg.output(ROLES), |w| write_roles(&out.assignments, w))?;
    write_with(&cfg.output(INTERACTIONS), |w| write_interactions(&interactions, w))?;
    write_with(&cfg.output(FORMS), |w| write_form_distribution(&out.triplets, w))?;
    let _ = writeln!(
        stdout,
        "{} triplets, {} role assignments, {} interactions",
        out.triplets.len(),
        out.assignments.len(),
        interactions.len()
    );
    Ok(())
}

pub fn stats(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let roles = read_with(&stage_input(cfg, ROLES, "role table", "roles")?, read_roles)?;
    let interactions = read_with(&stage_input(cfg, INTERACTIONS, "interaction table", "roles")?, read_interactions)?;
    let index: DemographicIndex = demographics(cfg)?.index();
    let rows = analyze_roles(&roles, &interactions, &index, cfg.interaction_grouping)?;
    let cells = interaction_residuals(&interactions)?;
    write_with(&cfg.output(STATS_REPORT), |w| write_stats_report(&rows, w))?;
    write_with(&cfg.output(RESIDUALS), |w| write_residuals(&cells, w))?;
    let run = rows.iter().filter(|r| r.result.is_some()).count();
    let _ = writeln!(stdout, "{run} of {} tests run, {} residual cells", rows.len(), cells.len());
    Ok(())
}

pub fn report(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let sections = [CV_REPORT, MOVIE_LABELS, FORMS, STATS_REPORT, RESIDUALS];
    let mut text = String::new();
    let mut found = 0;
    for name in sections {
        let path = cfg.output(name);
        text.push_str(&format!("== {name} ==\n"));
        if path.exists() {
            let body = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            text.push_str(&body);
            if !body.ends_with('\n') {
                text.push('\n');
            }
            found += 1;
        } else {
            text.push_str("(not produced)\n");
        }
        text.push('\n');
    }
    if found == 0 {
        return Err(CliError::Validation(format!("no stage outputs in {}", cfg.out_dir.display())));
    }
    write_with(&cfg.output(SUMMARY), |w| Ok(w.write_all(text.as_bytes())?))?;
    let _ = writeln!(stdout, "summary of {found} outputs written to {}", cfg.output(SUMMARY).display());
    Ok(())
}
