//! Lexicon phrase scanning and TF-IDF promotion-intensity scores.
//!
//! Matching runs over a normalized token stream: text is case-folded,
//! punctuation becomes whitespace, and phrases are matched longest-first
//! without overlap. Tokenization sits behind [`Tokenizer`] so a
//! segmentation plugin for unspaced scripts can replace the default.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::par;

pub const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.txt");

pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lower-cases and splits on anything that is not alphanumeric.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleTokenizer;

impl Tokenizer for SimpleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(|s| s.to_lowercase())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub phrase: String,
    pub tokens: Vec<String>,
    pub weight: f64,
}

/// Keyword set with positive weights, sorted by normalized phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
}

impl Lexicon {
    pub fn from_entries<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let tok = SimpleTokenizer;
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (i, (phrase, weight)) in items.into_iter().enumerate() {
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::InvalidWeight(i + 1));
            }
            let tokens = tok.tokenize(phrase.as_ref());
            if tokens.is_empty() {
                continue;
            }
            let norm = tokens.join(" ");
            if !seen.insert(norm.clone()) {
                return Err(Error::DuplicatePhrase(norm));
            }
            entries.push(LexiconEntry {
                phrase: norm,
                tokens,
                weight,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        entries.sort_by(|a, b| a.phrase.cmp(&b.phrase));
        Ok(Self { entries })
    }

    /// Parse the lexicon file format: `phrase[TAB]weight`, `#` comments.
    pub fn parse(src: &str) -> Result<Self> {
        let tok = SimpleTokenizer;
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (phrase, weight) = match line.split_once('\t') {
                Some((p, w)) => {
                    let w: f64 = w.trim().parse().map_err(|_| Error::InvalidWeight(lineno + 1))?;
                    if !(w > 0.0) || !w.is_finite() {
                        return Err(Error::InvalidWeight(lineno + 1));
                    }
                    (p, w)
                }
                None => (line, 1.0),
            };
            let norm = tok.tokenize(phrase).join(" ");
            if norm.is_empty() {
                continue;
            }
            if !seen.insert(norm.clone()) {
                return Err(Error::DuplicatePhrase(norm));
            }
            items.push((norm, weight));
        }
        Self::from_entries(items)
    }

    pub fn default_set() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, phrase: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|e| e.phrase.as_str().cmp(phrase))
            .ok()
            .map(|i| self.entries[i].weight)
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Lexicon::parse(&src)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTermStats {
    pub firm_id: String,
    pub year: i32,
    /// Only phrases that occurred; absent phrases count zero.
    pub term_counts: BTreeMap<String, u64>,
    pub doc_token_count: u64,
}

impl DocumentTermStats {
    pub fn count(&self, phrase: &str) -> u64 {
        self.term_counts.get(phrase).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TalkScore {
    pub firm_id: String,
    pub year: i32,
    pub score: f64,
}

/// Phrase matcher keyed by first token, candidates longest first.
struct Matcher<'a> {
    by_first: HashMap<&'a str, Vec<&'a LexiconEntry>>,
}

impl<'a> Matcher<'a> {
    fn new(lex: &'a Lexicon) -> Self {
        let mut by_first: HashMap<&str, Vec<&LexiconEntry>> = HashMap::new();
        for e in lex.entries() {
            by_first.entry(e.tokens[0].as_str()).or_default().push(e);
        }
        for v in by_first.values_mut() {
            v.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()).then(a.phrase.cmp(&b.phrase)));
        }
        Self { by_first }
    }

    fn scan(&self, tokens: &[String]) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut step = 1;
            if let Some(cands) = self.by_first.get(tokens[i].as_str()) {
                for e in cands {
                    let k = e.tokens.len();
                    if i + k <= tokens.len() && tokens[i..i + k] == e.tokens[..] {
                        *counts.entry(e.phrase.clone()).or_insert(0) += 1;
                        step = k;
                        break;
                    }
                }
            }
            i += step;
        }
        counts
    }
}

/// Count non-overlapping, longest-match-first phrase occurrences.
pub fn scan_document(text: &str, lexicon: &Lexicon) -> DocumentTermStats {
    scan_document_with(text, lexicon, &SimpleTokenizer, "", 0)
}

pub fn scan_document_with(
    text: &str,
    lexicon: &Lexicon,
    tokenizer: &dyn Tokenizer,
    firm_id: &str,
    year: i32,
) -> DocumentTermStats {
    let tokens = tokenizer.tokenize(text);
    let term_counts = Matcher::new(lexicon).scan(&tokens);
    DocumentTermStats {
        firm_id: firm_id.to_string(),
        year,
        term_counts,
        doc_token_count: (tokens.len() as u64).max(1),
    }
}

/// Smoothed inverse document frequency, floored at zero.
pub fn idf(n_docs: usize, doc_freq: usize) -> f64 {
    ((n_docs as f64 / (1.0 + doc_freq as f64)).ln() + 1.0).max(0.0)
}

/// TF-IDF promotion scores for one scoring pool. Output is sorted by
/// `(firm_id, year)`.
pub fn tfidf_scores(corpus: &[DocumentTermStats], lexicon: &Lexicon) -> Result<Vec<TalkScore>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = corpus.len();
    let idfs: Vec<f64> = lexicon
        .entries()
        .iter()
        .map(|e| {
            let df = corpus.iter().filter(|d| d.count(&e.phrase) > 0).count();
            idf(n, df)
        })
        .collect();
    let mut out: Vec<TalkScore> = corpus
        .iter()
        .map(|d| {
            let mut acc = CompensatedSum::new();
            let len = d.doc_token_count.max(1) as f64;
            for (e, w_idf) in lexicon.entries().iter().zip(&idfs) {
                let c = d.count(&e.phrase);
                if c > 0 {
                    acc.add(e.weight * (c as f64 / len) * w_idf);
                }
            }
            TalkScore {
                firm_id: d.firm_id.clone(),
                year: d.year,
                score: acc.value(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.firm_id.cmp(&b.firm_id).then(a.year.cmp(&b.year)));
    Ok(out)
}

/// Score each calendar year as its own pool (cross-sectional idf).
pub fn talk_scores_by_year(corpus: &[DocumentTermStats], lexicon: &Lexicon) -> Result<Vec<TalkScore>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut years: BTreeMap<i32, Vec<DocumentTermStats>> = BTreeMap::new();
    for d in corpus {
        years.entry(d.year).or_default().push(d.clone());
    }
    let mut out = Vec::with_capacity(corpus.len());
    for docs in years.values() {
        out.extend(tfidf_scores(docs, lexicon)?);
    }
    out.sort_by(|a, b| a.firm_id.cmp(&b.firm_id).then(a.year.cmp(&b.year)));
    Ok(out)
}

/// Split `<firm_id>_<year>.txt` at the last underscore.
pub fn parse_doc_name(file_name: &str) -> Option<(String, i32)> {
    let stem = file_name.strip_suffix(".txt")?;
    let (firm, year) = stem.rsplit_once('_')?;
    if firm.is_empty() {
        return None;
    }
    Some((firm.to_string(), year.parse().ok()?))
}

/// Scan every `<firm_id>_<year>.txt` file in a directory.
pub fn load_corpus_dir(dir: &Path, lexicon: &Lexicon, tokenizer: &dyn Tokenizer) -> Result<Vec<DocumentTermStats>> {
    let mut files: Vec<(PathBuf, String, i32)> = Vec::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for entry in rd {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some((firm, year)) = parse_doc_name(&name) {
            files.push((entry.path(), firm, year));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    if files.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let docs = par::map_slice(&files, |(path, firm, year)| {
        let text = std::fs::read_to_string(path)?;
        Ok(scan_document_with(&text, lexicon, tokenizer, firm, *year))
    });
    docs.into_iter().collect()
}

pub fn write_talk_csv<W: Write>(scores: &[TalkScore], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["firm_id", "year", "talk_score"])?;
    for s in scores {
        wr.write_record([s.firm_id.clone(), s.year.to_string(), format!("{}", s.score)])?;
    }
    wr.flush()?;
    Ok(())
}
