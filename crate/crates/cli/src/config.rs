use std::path::{Path, PathBuf};

use scriptviolence::features::{DEFAULT_NGRAM_ORDER, DEFAULT_SENTIMENT_DIM};
use scriptviolence::pipeline::TrainConfig;
use scriptviolence::stats::InteractionGrouping;
use serde::Deserialize;

use crate::CliError;

/// Run configuration, read from a TOML file. Relative paths are resolved
/// against the directory of that file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of `<movie_id>.txt` screenplays.
    pub scripts_dir: Option<PathBuf>,
    /// `movie_id,title,genres,violence_label` table.
    pub manifest: Option<PathBuf>,
    /// `movie_id,character_id,gender,race` table.
    pub demographics: Option<PathBuf>,
    /// word2vec-style text embeddings.
    pub embeddings: Option<PathBuf>,
    /// Precomputed sentiment vectors.
    pub sentiment: Option<PathBuf>,
    /// A trained bi-LSTM sentiment encoder, used instead of `sentiment`.
    pub sentiment_model: Option<PathBuf>,
    /// CoNLL-U parses of the utterances.
    pub parses: Option<PathBuf>,
    /// One genre per line. Defaults to the 23 IMDb genres.
    pub genre_vocabulary: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub ngram_order: usize,
    /// Width of the zero sentiment vector when no provider is configured.
    pub sentiment_dim: usize,
    pub log_level: String,
    pub interaction_grouping: InteractionGrouping,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scripts_dir: None,
            manifest: None,
            demographics: None,
            embeddings: None,
            sentiment: None,
            sentiment_model: None,
            parses: None,
            genre_vocabulary: None,
            out_dir: PathBuf::from("out"),
            ngram_order: DEFAULT_NGRAM_ORDER,
            sentiment_dim: DEFAULT_SENTIMENT_DIM,
            log_level: "info".to_string(),
            interaction_grouping: InteractionGrouping::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.scripts_dir,
            &mut self.manifest,
            &mut self.demographics,
            &mut self.embeddings,
            &mut self.sentiment,
            &mut self.sentiment_model,
            &mut self.parses,
            &mut self.genre_vocabulary,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if self.ngram_order == 0 {
            return Err(CliError::Validation("ngram_order must be positive".into()));
        }
        if self.sentiment.is_some() && self.sentiment_model.is_some() {
            return Err(CliError::Validation("set at most one of sentiment and sentiment_model".into()));
        }
        Ok(())
    }

    /// A configured input that must exist for the current command.
    pub fn input(&self, name: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        let path = value.as_ref().ok_or_else(|| CliError::Validation(format!("config does not set `{name}`")))?;
        require(path, name)?;
        Ok(path.clone())
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }
}

/// Fail with a validation error naming `what` when `path` does not exist.
pub fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} not found: {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg =
            RunConfig::from_toml("manifest = \"m.csv\"\nout_dir = \"/abs/out\"\n", Path::new("/data/run")).unwrap();
        assert_eq!(cfg.manifest.as_deref(), Some(Path::new("/data/run/m.csv")));
        assert_eq!(cfg.out_dir, PathBuf::from("/abs/out"));
    }

    #[test]
    fn train_section_and_defaults() {
        let cfg = RunConfig::from_toml("[train]\nk = 4\nhidden_grid = [8]\n", Path::new("")).unwrap();
        assert_eq!(cfg.train.k, 4);
        assert_eq!(cfg.train.hidden_grid, vec![8]);
        assert_eq!(cfg.train.folds, 5);
        assert_eq!(cfg.ngram_order, 2);
        assert_eq!(cfg.interaction_grouping, InteractionGrouping::GenderRace);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("manfest = \"x\"\n", Path::new("")).is_err());
        assert!(RunConfig::from_toml("[train]\nlr = 1\n", Path::new("")).is_err());
    }

    #[test]
    fn odd_k_fails_validation() {
        let cfg = RunConfig::from_toml("[train]\nk = 3\n", Path::new("")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
