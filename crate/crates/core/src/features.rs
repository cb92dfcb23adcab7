//! Utterance featurization: n-gram sentence embeddings, sentiment vectors and
//! multi-hot genre encodings.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neural::BiLstmParams;
use crate::script::{Screenplay, Utterance, ViolenceLevel};

pub const DEFAULT_NGRAM_ORDER: usize = 2;
pub const DEFAULT_SENTIMENT_DIM: usize = 8;

/// Word and n-gram vectors, keyed by lowercase tokens joined with `_`.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    ngram_order: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, ngram_order: usize) -> Self {
        assert!(dimension > 0 && ngram_order > 0);
        EmbeddingTable { dimension, ngram_order, entries: HashMap::new() }
    }

    pub fn insert(&mut self, key: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch { line: 0, expected: self.dimension, found: vector.len() });
        }
        if self.entries.contains_key(key) {
            return Err(Error::DuplicateKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ngram_order(&self) -> usize {
        self.ngram_order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Multiply every vector by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.entries.values_mut().flatten().for_each(|v| *v *= c);
        out
    }
}

/// Read a word2vec-style text table: a `count dimension` header, then one
/// `key v1 .. vd` row per entry.
pub fn load_embeddings(rdr: impl BufRead, ngram_order: usize) -> Result<EmbeddingTable> {
    let mut lines = rdr.lines();
    let header = lines.next().ok_or(Error::EmptyInput("embedding file"))??;
    let mut parts = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(count)), Some(Ok(dimension)), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(Error::BadRecord { record: 1, message: format!("bad header {header:?}") });
    };
    if dimension == 0 || ngram_order == 0 {
        return Err(Error::Config("embedding dimension and n-gram order must be positive".into()));
    }
    let mut table = EmbeddingTable::new(dimension, ngram_order);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let mut fields = line.split_whitespace();
        let Some(key) = fields.next() else { continue };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::BadRecord { record: lineno, message: format!("bad value {f:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        if vector.len() != dimension {
            return Err(Error::DimensionMismatch { line: lineno, expected: dimension, found: vector.len() });
        }
        table.insert(key, vector)?;
    }
    if table.len() != count {
        return Err(Error::BadRecord {
            record: 1,
            message: format!("header declares {count} entries, file has {}", table.len()),
        });
    }
    Ok(table)
}

/// Counters for lookups that fell back to zero vectors. Shared across
/// worker threads.
#[derive(Debug, Default)]
pub struct FeatureStats {
    embedding_misses: AtomicUsize,
    sentiment_misses: AtomicUsize,
    unknown_genres: AtomicUsize,
}

impl FeatureStats {
    pub fn embedding_misses(&self) -> usize {
        self.embedding_misses.load(Ordering::Relaxed)
    }

    pub fn sentiment_misses(&self) -> usize {
        self.sentiment_misses.load(Ordering::Relaxed)
    }

    pub fn unknown_genres(&self) -> usize {
        self.unknown_genres.load(Ordering::Relaxed)
    }
}

/// Mean of the vectors of every unigram and contiguous n-gram (up to the
/// table's order) present in the table. Tokens are lowercased first. Falls
/// back to the zero vector, counting a miss, when nothing is found.
pub fn embed_sentence(tokens: &[String], table: &EmbeddingTable, stats: &FeatureStats) -> Vec<f64> {
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut sum = vec![0.0; table.dimension];
    let mut found = 0usize;
    for n in 1..=table.ngram_order.min(lower.len()) {
        for gram in lower.windows(n) {
            let hit = if n == 1 { table.get(&gram[0]) } else { table.get(&gram.join("_")) };
            if let Some(v) = hit {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
    }
    if found == 0 {
        stats.embedding_misses.fetch_add(1, Ordering::Relaxed);
        return sum;
    }
    let n = found as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// Something that maps an utterance to a fixed-length sentiment vector.
pub trait SentimentSource: Sync {
    fn dim(&self) -> usize;
    fn sentiment(&self, utterance: &Utterance, stats: &FeatureStats) -> Vec<f64>;
}

/// Precomputed vectors keyed by `(movie_id, utterance index)`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedSentiment {
    dim: usize,
    vectors: HashMap<(String, usize), Vec<f64>>,
}

impl PrecomputedSentiment {
    pub fn new(dim: usize) -> Self {
        PrecomputedSentiment { dim, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, movie_id: &str, index: usize, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { line: 0, expected: self.dim, found: v.len() });
        }
        self.vectors.insert((movie_id.to_string(), index), v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl SentimentSource for PrecomputedSentiment {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sentiment(&self, u: &Utterance, stats: &FeatureStats) -> Vec<f64> {
        match self.vectors.get(&(u.movie_id.clone(), u.index)) {
            Some(v) => v.clone(),
            None => {
                stats.sentiment_misses.fetch_add(1, Ordering::Relaxed);
                vec![0.0; self.dim]
            }
        }
    }
}

/// Read `movie_id, index, v1 .. vd` lines. Values may be separated by
/// commas or whitespace; every line must carry the same number of values.
pub fn load_sentiment(rdr: impl BufRead) -> Result<PrecomputedSentiment> {
    let mut out: Option<PrecomputedSentiment> = None;
    for (i, line) in rdr.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::BadRecord { record: lineno, message };
        let (movie_id, rest) = line.split_once(',').ok_or_else(|| bad("missing index field".into()))?;
        let (index, rest) = rest.trim_start().split_once([',', ' ', '\t']).unwrap_or((rest.trim(), ""));
        let index: usize = index.trim().parse().map_err(|_| bad(format!("bad index {index:?}")))?;
        let values = rest
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("bad value {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let table = out.get_or_insert_with(|| PrecomputedSentiment::new(values.len()));
        if values.len() != table.dim || values.is_empty() {
            return Err(Error::DimensionMismatch { line: lineno, expected: table.dim, found: values.len() });
        }
        let key = (movie_id.trim().to_string(), index);
        if table.vectors.contains_key(&key) {
            return Err(Error::DuplicateKey(format!("{}:{}", key.0, key.1)));
        }
        table.vectors.insert(key, values);
    }
    out.ok_or(Error::EmptyInput("sentiment file"))
}

/// Sentiment from a bidirectional LSTM run over the utterance's token
/// embeddings (unigrams only). Utterances with no embedded token map to the
/// zero vector.
pub struct EncoderSentiment<'a> {
    pub encoder: &'a BiLstmParams,
    pub embeddings: &'a EmbeddingTable,
}

impl SentimentSource for EncoderSentiment<'_> {
    fn dim(&self) -> usize {
        2 * self.encoder.hidden_dim()
    }

    fn sentiment(&self, u: &Utterance, stats: &FeatureStats) -> Vec<f64> {
        let xs: Vec<&[f64]> = u.tokens.iter().filter_map(|t| self.embeddings.get(&t.to_lowercase())).collect();
        match self.encoder.encode(&xs) {
            Ok(v) => v,
            Err(_) => {
                stats.sentiment_misses.fetch_add(1, Ordering::Relaxed);
                vec![0.0; self.dim()]
            }
        }
    }
}

/// Constant zero sentiment, used when no provider is configured.
pub struct ZeroSentiment(pub usize);

impl SentimentSource for ZeroSentiment {
    fn dim(&self) -> usize {
        self.0
    }

    fn sentiment(&self, _: &Utterance, _: &FeatureStats) -> Vec<f64> {
        vec![0.0; self.0]
    }
}

pub fn sentiment_features(u: &Utterance, provider: &dyn SentimentSource, stats: &FeatureStats) -> Vec<f64> {
    provider.sentiment(u, stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeature {
    pub semantic: Vec<f64>,
    pub sentiment: Vec<f64>,
    /// `semantic` followed by `sentiment`.
    pub combined: Vec<f64>,
}

impl UtteranceFeature {
    pub fn new(semantic: Vec<f64>, sentiment: Vec<f64>) -> Self {
        let combined = semantic.iter().chain(&sentiment).copied().collect();
        UtteranceFeature { semantic, sentiment, combined }
    }

    /// The all-zero feature used for window padding.
    pub fn empty(semantic_dim: usize, sentiment_dim: usize) -> Self {
        Self::new(vec![0.0; semantic_dim], vec![0.0; sentiment_dim])
    }

    pub fn dim(&self) -> usize {
        self.combined.len()
    }
}

/// Multi-hot genre encoding over an ordered vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenreVector {
    pub bits: Vec<u8>,
}

impl GenreVector {
    pub fn zeros(len: usize) -> Self {
        GenreVector { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

pub fn encode_genres(genres: &BTreeSet<String>, vocabulary: &[String], stats: &FeatureStats) -> GenreVector {
    let mut bits = vec![0u8; vocabulary.len()];
    for g in genres {
        match vocabulary.binary_search(g) {
            Ok(i) => bits[i] = 1,
            Err(_) => {
                log::warn!("genre {g:?} not in vocabulary, ignored");
                stats.unknown_genres.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
    GenreVector { bits }
}

/// A 23-genre vocabulary in sorted order.
pub fn default_genre_vocabulary() -> Vec<String> {
    [
        "Action",
        "Adventure",
        "Animation",
        "Biography",
        "Comedy",
        "Crime",
        "Documentary",
        "Drama",
        "Family",
        "Fantasy",
        "Film-Noir",
        "History",
        "Horror",
        "Music",
        "Musical",
        "Mystery",
        "Romance",
        "Sci-Fi",
        "Short",
        "Sport",
        "Thriller",
        "War",
        "Western",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Check that a genre vocabulary is sorted and free of duplicates.
pub fn validate_vocabulary(vocabulary: &[String]) -> Result<()> {
    if vocabulary.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::Config("genre vocabulary must be sorted and unique".into()))
    }
}

/// A screenplay reduced to what the classifier consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedMovie {
    pub movie_id: String,
    pub features: Vec<UtteranceFeature>,
    pub genre: GenreVector,
    pub label: Option<ViolenceLevel>,
}

impl FeaturizedMovie {
    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, UtteranceFeature::dim)
    }
}

pub struct Featurizer<'a> {
    pub embeddings: &'a EmbeddingTable,
    pub sentiment: &'a dyn SentimentSource,
    pub vocabulary: &'a [String],
    pub stats: FeatureStats,
}

impl<'a> Featurizer<'a> {
    pub fn new(embeddings: &'a EmbeddingTable, sentiment: &'a dyn SentimentSource, vocabulary: &'a [String]) -> Self {
        Featurizer { embeddings, sentiment, vocabulary, stats: FeatureStats::default() }
    }

    pub fn feature_dim(&self) -> usize {
        self.embeddings.dimension() + self.sentiment.dim()
    }

    pub fn utterance(&self, u: &Utterance) -> UtteranceFeature {
        let semantic = embed_sentence(&u.tokens, self.embeddings, &self.stats);
        let sentiment = sentiment_features(u, self.sentiment, &self.stats);
        UtteranceFeature::new(semantic, sentiment)
    }

    pub fn movie(&self, sp: &Screenplay) -> FeaturizedMovie {
        FeaturizedMovie {
            movie_id: sp.movie_id.clone(),
            features: sp.utterances.par_iter().map(|u| self.utterance(u)).collect(),
            genre: encode_genres(&sp.genres, self.vocabulary, &self.stats),
            label: sp.violence_label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn loads_word2vec_text() {
        let t = load_embeddings("2 3\ncat 1 0 0\ndog 0 1 0\n".as_bytes(), 1).unwrap();
        assert_eq!((t.dimension(), t.len()), (3, 2));
        assert_eq!(t.get("dog"), Some(&[0.0, 1.0, 0.0][..]));
    }

    #[test]
    fn embedding_file_errors() {
        let short = load_embeddings("1 3\ncat 1 0\n".as_bytes(), 1);
        assert!(matches!(short, Err(Error::DimensionMismatch { line: 2, expected: 3, found: 2 })));
        let dup = load_embeddings("2 2\ncat 1 0\ncat 0 1\n".as_bytes(), 1);
        assert!(matches!(dup, Err(Error::DuplicateKey(k)) if k == "cat"));
        let count = load_embeddings("3 2\ncat 1 0\n".as_bytes(), 1);
        assert!(matches!(count, Err(Error::BadRecord { .. })));
    }

    #[test]
    fn unigram_mean() {
        let t = load_embeddings("2 2\ncat 1 0\ndog 0 1\n".as_bytes(), 1).unwrap();
        let stats = FeatureStats::default();
        assert_eq!(embed_sentence(&toks(&["cat", "dog"]), &t, &stats), vec![0.5, 0.5]);
        assert_eq!(embed_sentence(&toks(&["Cat", "DOG"]), &t, &stats), vec![0.5, 0.5]);
        assert_eq!(stats.embedding_misses(), 0);
    }

    #[test]
    fn out_of_vocabulary_is_zero() {
        let t = load_embeddings("1 2\ncat 1 0\n".as_bytes(), 2).unwrap();
        let stats = FeatureStats::default();
        assert_eq!(embed_sentence(&toks(&["xyz"]), &t, &stats), vec![0.0, 0.0]);
        assert_eq!(embed_sentence(&[], &t, &stats), vec![0.0, 0.0]);
        assert_eq!(stats.embedding_misses(), 2);
    }

    #[test]
    fn bigram_joins_the_mean() {
        // a=(3,0,0), b=(0,6,0), a_b=(0,0,9): mean of three = (1,2,3)
        let t = load_embeddings("3 3\na 3 0 0\nb 0 6 0\na_b 0 0 9\n".as_bytes(), 2).unwrap();
        let stats = FeatureStats::default();
        assert_eq!(embed_sentence(&toks(&["a", "b"]), &t, &stats), vec![1.0, 2.0, 3.0]);
        // reversed order: the bigram "b_a" is absent
        assert_eq!(embed_sentence(&toks(&["b", "a"]), &t, &stats), vec![1.5, 3.0, 0.0]);
    }

    #[test]
    fn precomputed_sentiment_lookup() {
        let p = load_sentiment("m1, 0, 0.2 -0.1\nm1,1,0.5,0.5\n".as_bytes()).unwrap();
        let stats = FeatureStats::default();
        assert_eq!(p.sentiment(&Utterance::new("m1", 0, "A", "x"), &stats), vec![0.2, -0.1]);
        assert_eq!(p.sentiment(&Utterance::new("m1", 5, "A", "x"), &stats), vec![0.0, 0.0]);
        assert_eq!(stats.sentiment_misses(), 1);
        let ragged = load_sentiment("m1,0,0.2 0.1\nm1,1,0.5\n".as_bytes());
        assert!(matches!(ragged, Err(Error::DimensionMismatch { line: 2, .. })));
    }

    #[test]
    fn zero_encoder_gives_zero_sentiment() {
        let enc = BiLstmParams::zeros(2, 3);
        let t = load_embeddings("1 2\nhi 1 -1\n".as_bytes(), 1).unwrap();
        let src = EncoderSentiment { encoder: &enc, embeddings: &t };
        let stats = FeatureStats::default();
        let v = sentiment_features(&Utterance::new("m", 0, "A", "hi hi"), &src, &stats);
        assert_eq!(v, vec![0.0; 6]);
    }

    #[test]
    fn genre_multi_hot() {
        let vocab = toks(&["Action", "Comedy", "Drama"]);
        let stats = FeatureStats::default();
        let set = |g: &[&str]| g.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(encode_genres(&set(&["Action"]), &vocab, &stats).bits, [1, 0, 0]);
        assert_eq!(encode_genres(&set(&[]), &vocab, &stats).bits, [0, 0, 0]);
        assert_eq!(encode_genres(&set(&["Action", "Western"]), &vocab, &stats).bits, [1, 0, 0]);
        assert_eq!(stats.unknown_genres(), 1);
    }

    #[test]
    fn default_vocabulary_is_valid() {
        let v = default_genre_vocabulary();
        assert_eq!(v.len(), 23);
        validate_vocabulary(&v).unwrap();
    }
}
