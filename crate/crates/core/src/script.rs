//! Screenplay ingestion.
//!
//! A movie is represented as the ordered sequence of its dialogue blocks:
//! who spoke, and what they said. Everything else in a screenplay (scene
//! headings, action lines, parenthetical directions) is discarded. The
//! sidecar files that travel with a corpus are read here too: the manifest
//! of titles, genres and movie-level ratings, the cast demographics, and
//! dependency parses aligned to utterances.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_CUE_LEN: usize = 40;

/// Movie-level (and window-level) violence rating, in severity order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolenceLevel {
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "MED")]
    Med,
    #[serde(rename = "HIGH")]
    High,
}

impl ViolenceLevel {
    pub const ALL: [ViolenceLevel; 3] = [ViolenceLevel::Low, ViolenceLevel::Med, ViolenceLevel::High];

    /// Row of this class in the output layer.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViolenceLevel::Low => "LOW",
            ViolenceLevel::Med => "MED",
            ViolenceLevel::High => "HIGH",
        }
    }
}

impl fmt::Display for ViolenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViolenceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOW" => Ok(ViolenceLevel::Low),
            "MED" => Ok(ViolenceLevel::Med),
            "HIGH" => Ok(ViolenceLevel::High),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "FEMALE")]
    Female,
    #[serde(rename = "MALE")]
    Male,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "FEMALE",
            Gender::Male => "MALE",
            Gender::Unknown => "UNKNOWN",
        }
    }

    /// Lenient parse; `None` for strings that are not a recognized gender.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FEMALE" | "F" => Some(Gender::Female),
            "MALE" | "M" => Some(Gender::Male),
            "UNKNOWN" => Some(Gender::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    #[serde(rename = "WHITE")]
    White,
    #[serde(rename = "BLACK")]
    Black,
    #[serde(rename = "LATINO")]
    Latino,
    #[serde(rename = "ASIAN")]
    Asian,
    #[serde(rename = "MIXED")]
    Mixed,
    #[serde(rename = "OTHER")]
    Other,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl Race {
    pub fn as_str(self) -> &'static str {
        match self {
            Race::White => "WHITE",
            Race::Black => "BLACK",
            Race::Latino => "LATINO",
            Race::Asian => "ASIAN",
            Race::Mixed => "MIXED",
            Race::Other => "OTHER",
            Race::Unknown => "UNKNOWN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "WHITE" => Some(Race::White),
            "BLACK" => Some(Race::Black),
            "LATINO" => Some(Race::Latino),
            "ASIAN" => Some(Race::Asian),
            "MIXED" => Some(Race::Mixed),
            "OTHER" => Some(Race::Other),
            "UNKNOWN" => Some(Race::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One continuous block of dialogue spoken by a single character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub movie_id: String,
    /// Position in the movie's dialogue order, consecutive from 0.
    pub index: usize,
    pub speaker_id: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(movie_id: &str, index: usize, speaker_id: &str, text: &str) -> Self {
        Utterance {
            movie_id: movie_id.to_string(),
            index,
            speaker_id: speaker_id.to_string(),
            text: text.to_string(),
            tokens: tokenize(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screenplay {
    pub movie_id: String,
    pub title: String,
    pub utterances: Vec<Utterance>,
    pub genres: BTreeSet<String>,
    pub violence_label: Option<ViolenceLevel>,
}

impl Screenplay {
    /// Attach title, genres and rating from a manifest row.
    pub fn apply_manifest(&mut self, entry: &ManifestEntry) {
        self.title = entry.title.clone();
        self.genres = entry.genres.clone();
        self.violence_label = entry.violence_label;
    }

    /// Distinct speakers in order of first appearance.
    pub fn roster(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.utterances.iter().filter(|u| seen.insert(u.speaker_id.as_str())).map(|u| u.speaker_id.clone()).collect()
    }
}

/// Split text into lookup tokens.
///
/// The characters `.,!?;:"` and dashes are separators; an apostrophe is kept
/// only when it sits between two alphanumeric characters ("don't", "o'clock").
/// Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut cleaned = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = match c {
            '.' | ',' | '!' | '?' | ';' | ':' | '"' | '—' | '–' | '“' | '”' => false,
            '\'' | '’' => {
                let before = i > 0 && chars[i - 1].is_alphanumeric();
                let after = chars.get(i + 1).is_some_and(|c| c.is_alphanumeric());
                before && after
            }
            _ => true,
        };
        cleaned.push(if keep { c } else { ' ' });
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Canonical character id for a cue: trimmed, uppercased, whitespace
/// collapsed, trailing extensions such as `(V.O.)` or `(CONT'D)` removed.
pub fn normalize_speaker(cue: &str) -> String {
    let mut s = cue.trim().to_uppercase();
    while s.ends_with(')') {
        match s.rfind('(') {
            Some(open) => s = s[..open].trim_end().to_string(),
            None => break,
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_parenthetical(line: &str) -> bool {
    line.len() >= 2 && line.starts_with('(') && line.ends_with(')')
}

fn is_cue(line: &str) -> bool {
    if line.is_empty() || line.chars().count() > MAX_CUE_LEN {
        return false;
    }
    if line.starts_with("INT.") || line.starts_with("EXT.") {
        return false;
    }
    // Trailing extensions like "(V.O.)" may follow the name itself.
    let mut name = line;
    while name.ends_with(')') {
        match name.rfind('(') {
            Some(open) => name = name[..open].trim_end(),
            None => return false,
        }
    }
    !name.is_empty()
        && name.chars().any(|c| c.is_ascii_uppercase())
        && name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || matches!(c, ' ' | '.' | '\'' | '-'))
}

/// Extract the ordered dialogue of a plain-text screenplay.
///
/// A cue line opens a dialogue block that runs until the next blank line.
/// Parenthetical lines inside the block are dropped and the remaining lines
/// are joined with single spaces. Lines outside any block are scene headings
/// or action and are ignored, except that a parenthetical direction with no
/// cue above it is reported as malformed.
pub fn parse_screenplay(raw_text: &str, movie_id: &str) -> Result<Screenplay> {
    if raw_text.trim().is_empty() {
        return Err(Error::EmptyScreenplay);
    }

    let mut utterances = Vec::new();
    let mut speaker: Option<String> = None;
    let mut lines: Vec<&str> = Vec::new();

    let mut flush = |speaker: &mut Option<String>, lines: &mut Vec<&str>| {
        if let Some(spk) = speaker.take() {
            if !lines.is_empty() {
                let text = lines.join(" ");
                utterances.push(Utterance::new(movie_id, utterances.len(), &spk, &text));
            }
        }
        lines.clear();
    };

    for (lineno, raw) in raw_text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut speaker, &mut lines);
            continue;
        }
        match speaker {
            Some(_) => {
                if !is_parenthetical(line) {
                    lines.push(line);
                }
            }
            None if is_cue(line) => speaker = Some(normalize_speaker(line)),
            None if is_parenthetical(line) => {
                return Err(Error::MalformedScript {
                    line: lineno + 1,
                    message: "dialogue direction without a preceding character cue".into(),
                });
            }
            None => {}
        }
    }
    flush(&mut speaker, &mut lines);

    if utterances.is_empty() {
        return Err(Error::EmptyScreenplay);
    }
    Ok(Screenplay {
        movie_id: movie_id.to_string(),
        title: movie_id.to_string(),
        utterances,
        genres: BTreeSet::new(),
        violence_label: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub title: String,
    pub genres: BTreeSet<String>,
    pub violence_label: Option<ViolenceLevel>,
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers()?;
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::BadHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn csv_reader(rdr: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr)
}

/// Read a `movie_id,title,genres,violence_label` manifest.
pub fn load_manifest(rdr: impl Read) -> Result<BTreeMap<String, ManifestEntry>> {
    let mut reader = csv_reader(rdr);
    check_header(&mut reader, &["movie_id", "title", "genres", "violence_label"])?;
    let mut out = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = |j: usize| row.get(j).unwrap_or("");
        let movie_id = field(0).to_string();
        if movie_id.is_empty() {
            return Err(Error::BadRecord { record: i + 1, message: "empty movie_id".into() });
        }
        let genres = field(2).split('|').map(str::trim).filter(|g| !g.is_empty()).map(str::to_string).collect();
        let label = match field(3) {
            "" => None,
            s => Some(s.parse()?),
        };
        let entry = ManifestEntry { title: field(1).to_string(), genres, violence_label: label };
        if out.insert(movie_id.clone(), entry).is_some() {
            return Err(Error::DuplicateMovie(movie_id));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub movie_id: String,
    pub character_id: String,
    pub gender: Gender,
    pub race: Race,
}

/// Demographic records plus the number of gender/race fields that were not
/// recognized and fell back to UNKNOWN.
#[derive(Debug, Clone, Default)]
pub struct Demographics {
    pub records: Vec<DemographicRecord>,
    pub unknown_fields: usize,
}

impl Demographics {
    /// Lookup table keyed by `(movie_id, character_id)`.
    pub fn index(&self) -> DemographicIndex {
        DemographicIndex(
            self.records.iter().map(|r| ((r.movie_id.clone(), r.character_id.clone()), (r.gender, r.race))).collect(),
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct DemographicIndex(BTreeMap<(String, String), (Gender, Race)>);

impl DemographicIndex {
    /// Gender and race of a character, UNKNOWN for characters without a record.
    pub fn get(&self, movie_id: &str, character_id: &str) -> (Gender, Race) {
        self.0
            .get(&(movie_id.to_string(), character_id.to_string()))
            .copied()
            .unwrap_or((Gender::Unknown, Race::Unknown))
    }
}

/// Read a `movie_id,character_id,gender,race` table.
pub fn load_demographics(rdr: impl Read) -> Result<Demographics> {
    let mut reader = csv_reader(rdr);
    check_header(&mut reader, &["movie_id", "character_id", "gender", "race"])?;
    let mut seen = HashSet::new();
    let mut out = Demographics::default();
    for row in reader.records() {
        let row = row?;
        let field = |j: usize| row.get(j).unwrap_or("");
        let movie_id = field(0).to_string();
        let character_id = normalize_speaker(field(1));
        if !seen.insert((movie_id.clone(), character_id.clone())) {
            return Err(Error::DuplicateCharacter { movie_id, character_id });
        }
        let gender = Gender::parse(field(2)).unwrap_or_else(|| {
            out.unknown_fields += 1;
            Gender::Unknown
        });
        let race = Race::parse(field(3)).unwrap_or_else(|| {
            out.unknown_fields += 1;
            Race::Unknown
        });
        out.records.push(DemographicRecord { movie_id, character_id, gender, race });
    }
    if out.unknown_fields > 0 {
        log::warn!("{} demographic fields not recognized, mapped to UNKNOWN", out.unknown_fields);
    }
    Ok(out)
}

/// One row of a CoNLL-U sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluToken {
    pub surface: String,
    pub lemma: String,
    pub upos: String,
    /// 1-based index of the head token, 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub misc: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSentence {
    pub movie_id: String,
    pub utt_index: usize,
    pub tokens: Vec<ConlluToken>,
}

impl ParsedSentence {
    /// Position (0-based) of the root token.
    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.head == 0)
    }

    /// Direct dependents of the token at 0-based position `i`.
    pub fn children(&self, i: usize) -> impl Iterator<Item = (usize, &ConlluToken)> {
        self.tokens.iter().enumerate().filter(move |(_, t)| t.head == i + 1)
    }
}

#[derive(Default)]
struct SentenceBuf {
    movie_id: Option<String>,
    utt_index: Option<usize>,
    tokens: Vec<ConlluToken>,
}

impl SentenceBuf {
    fn finish(&mut self, line: usize) -> Result<Option<ParsedSentence>> {
        let buf = std::mem::take(self);
        if buf.tokens.is_empty() {
            return Ok(None);
        }
        let (Some(movie_id), Some(utt_index)) = (buf.movie_id, buf.utt_index) else {
            return Err(Error::UnalignedSentence { line });
        };
        let n = buf.tokens.len();
        if let Some(t) = buf.tokens.iter().find(|t| t.head > n) {
            return Err(Error::Conllu { line, message: format!("head {} outside sentence of {} tokens", t.head, n) });
        }
        let roots = buf.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(Error::Conllu { line, message: format!("expected exactly one root, found {roots}") });
        }
        Ok(Some(ParsedSentence { movie_id, utt_index, tokens: buf.tokens }))
    }
}

fn parse_misc(field: &str) -> BTreeMap<String, String> {
    if field == "_" {
        return BTreeMap::new();
    }
    field.split('|').filter_map(|kv| kv.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Read dependency parses aligned to utterances by `# movie_id` and
/// `# utt_index` comments. Multiword-token and empty-node lines are skipped.
pub fn load_conllu(rdr: impl BufRead) -> Result<Vec<ParsedSentence>> {
    let mut out = Vec::new();
    let mut buf = SentenceBuf::default();
    let mut lineno = 0;
    for line in rdr.lines() {
        let line = line?;
        lineno += 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            out.extend(buf.finish(lineno)?);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "movie_id" => buf.movie_id = Some(value.trim().to_string()),
                    "utt_index" => {
                        let idx = value.trim().parse().map_err(|_| Error::Conllu {
                            line: lineno,
                            message: format!("utt_index {:?} is not a nonnegative integer", value.trim()),
                        })?;
                        buf.utt_index = Some(idx);
                    }
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Conllu { line: lineno, message: format!("expected 10 columns, found {}", cols.len()) });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| Error::Conllu { line: lineno, message: format!("bad token id {:?}", cols[0]) })?;
        if id != buf.tokens.len() + 1 {
            return Err(Error::Conllu { line: lineno, message: format!("token id {id} out of sequence") });
        }
        let head = cols[6]
            .parse()
            .map_err(|_| Error::Conllu { line: lineno, message: format!("non-integer head {:?}", cols[6]) })?;
        buf.tokens.push(ConlluToken {
            surface: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
            misc: parse_misc(cols[9]),
        });
    }
    out.extend(buf.finish(lineno + 1)?);
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRecord {
    movie_id: String,
    index: usize,
    speaker_id: String,
    text: String,
}

/// Write the canonical dataset: one JSON record per utterance.
pub fn write_dataset<'a>(screenplays: impl IntoIterator<Item = &'a Screenplay>, mut w: impl Write) -> Result<()> {
    for sp in screenplays {
        for u in &sp.utterances {
            let rec = DatasetRecord {
                movie_id: u.movie_id.clone(),
                index: u.index,
                speaker_id: u.speaker_id.clone(),
                text: u.text.clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Read the canonical dataset back into screenplays, in order of first
/// appearance. Titles default to the movie id; genres and labels are empty
/// until a manifest is applied.
pub fn read_dataset(rdr: impl BufRead) -> Result<Vec<Screenplay>> {
    let mut movies: Vec<Screenplay> = Vec::new();
    let mut position: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in rdr.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)?;
        let slot = *position.entry(rec.movie_id.clone()).or_insert_with(|| {
            movies.push(Screenplay {
                movie_id: rec.movie_id.clone(),
                title: rec.movie_id.clone(),
                utterances: Vec::new(),
                genres: BTreeSet::new(),
                violence_label: None,
            });
            movies.len() - 1
        });
        let movie = &mut movies[slot];
        if rec.index != movie.utterances.len() {
            return Err(Error::BadRecord {
                record: i + 1,
                message: format!(
                    "movie {} expected index {}, found {}",
                    rec.movie_id,
                    movie.utterances.len(),
                    rec.index
                ),
            });
        }
        if rec.speaker_id.is_empty() || rec.text.trim().is_empty() {
            return Err(Error::BadRecord { record: i + 1, message: "empty speaker or text".into() });
        }
        movie.utterances.push(Utterance::new(&rec.movie_id, rec.index, &rec.speaker_id, &rec.text));
    }
    Ok(movies)
}
