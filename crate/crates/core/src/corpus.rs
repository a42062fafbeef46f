//! Recipe corpora: JSON-lines ingestion, tokenization, word and ingredient
//! vocabularies, and multi-hot ingredient encoding.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VideoManifest {
    pub feature_file: PathBuf,
    pub num_frames: usize,
    pub feature_dim: usize,
    /// One `[start, end)` frame range per step, sorted, non-overlapping.
    pub segments: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recipe {
    pub id: String,
    pub ingredients: BTreeSet<String>,
    pub steps: Vec<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<VideoManifest>,
}

/// Lowercase, split punctuation into separate tokens, collapse whitespace.
/// Digit runs stay single tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in sentence.chars() {
        if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                run.push(lc);
            }
        } else {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

/// Canonical form used for ingredient lookup: tokenized and re-joined.
pub fn normalize_ingredient(raw: &str) -> String {
    tokenize(raw).join(" ")
}

#[derive(Debug, Default)]
pub struct LoadStats {
    pub parsed: usize,
    pub skipped: Vec<(usize, String)>,
}

#[derive(Deserialize)]
struct RecipeLine {
    id: String,
    ingredients: Vec<String>,
    steps: Vec<String>,
    split: Split,
    #[serde(default)]
    video: Option<VideoManifest>,
}

fn validate(line: RecipeLine, base: &Path) -> std::result::Result<Recipe, String> {
    if line.steps.is_empty() {
        return Err("steps list is empty".into());
    }
    for (i, s) in line.steps.iter().enumerate() {
        if tokenize(s).is_empty() {
            return Err(format!("step {} is empty after tokenization", i + 1));
        }
    }
    let video = match line.video {
        None => None,
        Some(mut v) => {
            let mut prev_end = 0usize;
            for &(s, e) in &v.segments {
                if s >= e || e > v.num_frames {
                    return Err(format!(
                        "segment [{s}, {e}) out of bounds for {} frames",
                        v.num_frames
                    ));
                }
                if s < prev_end {
                    return Err(format!("segment [{s}, {e}) overlaps or is out of order"));
                }
                prev_end = e;
            }
            if v.feature_file.is_relative() {
                v.feature_file = base.join(&v.feature_file);
            }
            Some(v)
        }
    };
    Ok(Recipe {
        id: line.id,
        ingredients: line
            .ingredients
            .iter()
            .map(|i| normalize_ingredient(i))
            .filter(|i| !i.is_empty())
            .collect(),
        steps: line.steps,
        split: line.split,
        video,
    })
}

/// Read a JSON-lines corpus. Malformed lines and invariant violations are
/// warned about and skipped; an unreadable file is fatal.
pub fn load_corpus_with_stats(path: &Path) -> Result<(Vec<Recipe>, LoadStats)> {
    let file = fs::File::open(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut recipes = Vec::new();
    let mut stats = LoadStats::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<RecipeLine, _> = serde_json::from_str(&line);
        match parsed {
            Err(e) => {
                warn!("{}:{lineno}: malformed line: {e}", path.display());
                stats.skipped.push((lineno, e.to_string()));
            }
            Ok(raw) => match validate(raw, &base) {
                Err(reason) => {
                    warn!("{}:{lineno}: skipping recipe: {reason}", path.display());
                    stats.skipped.push((lineno, reason));
                }
                Ok(recipe) => {
                    recipes.push(recipe);
                    stats.parsed += 1;
                }
            },
        }
    }
    Ok((recipes, stats))
}

pub fn load_corpus(path: &Path) -> Result<Vec<Recipe>> {
    load_corpus_with_stats(path).map(|(recipes, _)| recipes)
}

/// Word vocabulary with reserved control ids 0..=3.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, usize>,
    id_to_word: Vec<String>,
}

impl Vocabulary {
    /// The `max_size - 4` most frequent tokens over train-split step
    /// sentences, ties broken lexicographically.
    pub fn build(recipes: &[Recipe], max_size: usize) -> Result<Vocabulary> {
        if max_size < 5 {
            return Err(CoreError::invalid(format!(
                "vocabulary max_size must be at least 5, got {max_size}"
            )));
        }
        if recipes.is_empty() {
            return Err(CoreError::invalid("cannot build vocabulary from an empty corpus"));
        }
        let mut freq: HashMap<String, u64> = HashMap::new();
        for r in recipes.iter().filter(|r| r.split == Split::Train) {
            for step in &r.steps {
                for tok in tokenize(step) {
                    *freq.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut entries: Vec<(String, u64)> = freq.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries.truncate(max_size - RESERVED.len());
        Ok(Vocabulary::from_words(entries.into_iter().map(|(w, _)| w)))
    }

    pub fn from_words(words: impl IntoIterator<Item = String>) -> Vocabulary {
        let mut id_to_word: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_word.extend(words);
        let word_to_id = id_to_word
            .iter()
            .enumerate()
            .skip(RESERVED.len())
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            word_to_id,
            id_to_word,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_word.len()
    }

    /// Token id, or UNK for out-of-vocabulary words.
    pub fn id(&self, word: &str) -> usize {
        self.word_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.id_to_word[id]
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.id_to_word[i].clone()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# procap vocabulary v1\n");
        out.push_str("# reserved: <pad>=0 <bos>=1 <eos>=2 <unk>=3\n");
        out.push_str("# the token on data line i (0-based) has id i + 4\n");
        for w in &self.id_to_word[RESERVED.len()..] {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Vocabulary::from_words(
            text.lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .map(|l| l.to_string()),
        ))
    }
}

pub const ING_PAD: usize = 0;
pub const ING_UNK: usize = 1;
pub const ING_RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Ingredient vocabulary; ids 0..=1 are reserved, entries are ordered by
/// descending train-corpus frequency then lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct IngredientVocabulary {
    name_to_id: HashMap<String, usize>,
    id_to_name: Vec<String>,
}

impl IngredientVocabulary {
    pub fn build(recipes: &[Recipe]) -> IngredientVocabulary {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for r in recipes.iter().filter(|r| r.split == Split::Train) {
            for ing in &r.ingredients {
                *freq.entry(ing.clone()).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(String, u64)> = freq.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        IngredientVocabulary::from_names(entries.into_iter().map(|(n, _)| n))
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> IngredientVocabulary {
        let mut id_to_name: Vec<String> = ING_RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_name.extend(names);
        let name_to_id = id_to_name
            .iter()
            .enumerate()
            .skip(ING_RESERVED.len())
            .map(|(i, n)| (n.clone(), i))
            .collect();
        IngredientVocabulary {
            name_to_id,
            id_to_name,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_name.len()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.name_to_id.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.id_to_name[id]
    }

    /// Non-reserved entries in id order.
    pub fn entries(&self) -> &[String] {
        &self.id_to_name[ING_RESERVED.len()..]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# procap ingredient vocabulary v1\n");
        out.push_str("# reserved: <pad>=0 <unk>=1\n");
        out.push_str("# the ingredient on data line i (0-based) has id i + 2\n");
        for n in self.entries() {
            out.push_str(n);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<IngredientVocabulary> {
        let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(IngredientVocabulary::from_names(
            text.lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .map(|l| l.to_string()),
        ))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngredientCoverage {
    pub known: usize,
    pub total: usize,
}

/// Multi-hot encoding of a recipe's ingredient set over `iv`; unknown
/// ingredients are ignored and reported through the coverage statistic.
pub fn encode_ingredients(r: &Recipe, iv: &IngredientVocabulary) -> (Vec<f32>, IngredientCoverage) {
    let mut vec = vec![0.0f32; iv.size()];
    let mut coverage = IngredientCoverage {
        known: 0,
        total: r.ingredients.len(),
    };
    for ing in &r.ingredients {
        if let Some(id) = iv.id(ing) {
            vec[id] = 1.0;
            coverage.known += 1;
        }
    }
    (vec, coverage)
}
