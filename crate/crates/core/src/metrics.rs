//! Sentence and keyword metrics: BLEU-n, a lightweight METEOR (exact + stem
//! alignment, no synonym tables), ingredient recall, verb recall, and the
//! per-prefix/per-horizon aggregation over prediction traces.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, IngredientVocabulary, Recipe};
use crate::error::{CoreError, Result};
use crate::inference::PredictionTrace;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-n in [0, 100]: clipped modified n-gram precisions with
/// add-one smoothing on orders >= 2, geometric mean, and a brevity penalty
/// when the prediction is shorter than the reference. Smoothed higher-order
/// precisions are capped at the unigram precision so BLEU1 >= BLEU4 holds on
/// every pair.
pub fn bleu_n(pred: &[String], reference: &[String], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "bleu order must be in 1..=4");
    if pred.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(n);
    let mut p1 = 0.0;
    for order in 1..=n {
        let pred_counts = ngram_counts(pred, order);
        let ref_counts = ngram_counts(reference, order);
        let total: usize = pred_counts.values().sum();
        let matched: usize = pred_counts
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if order == 1 {
            if total == 0 {
                0.0
            } else {
                matched as f64 / total as f64
            }
        } else {
            ((matched + 1) as f64 / (total + 1) as f64).min(p1)
        };
        if order == 1 {
            p1 = p;
        }
        precisions.push(p);
    }
    if precisions.iter().any(|&p| p == 0.0) {
        return 0.0;
    }
    let geo = (precisions.iter().map(|p| p.ln()).sum::<f64>() / n as f64).exp();
    let bp = if pred.len() < reference.len() {
        (1.0 - reference.len() as f64 / pred.len() as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * geo
}

fn english_stemmer() -> Stemmer {
    Stemmer::create(Algorithm::English)
}

fn stem(stemmer: &Stemmer, token: &str) -> String {
    stemmer.stem(token).into_owned()
}

/// Greedy one-to-one unigram alignment in two passes (exact match, then stem
/// match); weighted F-score with a cubic fragmentation penalty, in [0, 100].
pub fn meteor_lite(pred: &[String], reference: &[String]) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let stemmer = english_stemmer();
    let mut ref_taken = vec![false; reference.len()];
    // matches[i] = Some(ref index) for pred position i.
    let mut matches: Vec<Option<usize>> = vec![None; pred.len()];

    for (i, tok) in pred.iter().enumerate() {
        if let Some(j) = reference
            .iter()
            .enumerate()
            .position(|(j, r)| !ref_taken[j] && r == tok)
        {
            ref_taken[j] = true;
            matches[i] = Some(j);
        }
    }
    let pred_stems: Vec<String> = pred.iter().map(|t| stem(&stemmer, t)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|t| stem(&stemmer, t)).collect();
    for (i, ps) in pred_stems.iter().enumerate() {
        if matches[i].is_some() {
            continue;
        }
        if let Some(j) = ref_stems
            .iter()
            .enumerate()
            .position(|(j, rs)| !ref_taken[j] && rs == ps)
        {
            ref_taken[j] = true;
            matches[i] = Some(j);
        }
    }

    let aligned: Vec<(usize, usize)> = matches
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (i, j)))
        .collect();
    let m = aligned.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / pred.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (0.9 * p + 0.1 * r);
    // Chunks: maximal runs contiguous in both sentences.
    let mut chunks = 1usize;
    for w in aligned.windows(2) {
        if !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1) {
            chunks += 1;
        }
    }
    // A single chunk covering both sentences in full is not fragmented at
    // all; identity pairs score exactly 100.
    let penalty = if chunks == 1 && m == pred.len() && m == reference.len() {
        0.0
    } else {
        0.5 * (chunks as f64 / m as f64).powi(3)
    };
    100.0 * f_mean * (1.0 - penalty)
}

/// Ingredient entries present in a token sequence: contiguous subsequence
/// matching, longest entries first, each token consumed at most once.
fn present_ingredients(tokens: &[String], entries: &[(Vec<String>, usize)]) -> Vec<usize> {
    let mut consumed = vec![false; tokens.len()];
    let mut found = Vec::new();
    for (needle, id) in entries {
        let n = needle.len();
        if n == 0 || n > tokens.len() {
            continue;
        }
        let mut hit = false;
        for start in 0..=tokens.len() - n {
            if consumed[start..start + n].iter().any(|&c| c) {
                continue;
            }
            if tokens[start..start + n]
                .iter()
                .zip(needle)
                .all(|(a, b)| a == b)
            {
                for c in &mut consumed[start..start + n] {
                    *c = true;
                }
                hit = true;
                break;
            }
        }
        if hit {
            found.push(*id);
        }
    }
    found
}

fn ingredient_entries(iv: &IngredientVocabulary) -> Vec<(Vec<String>, usize)> {
    let mut entries: Vec<(Vec<String>, usize)> = iv
        .entries()
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.split_whitespace().map(|s| s.to_string()).collect(),
                i,
            )
        })
        .collect();
    entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    entries
}

/// `(hits, total)`: vocabulary ingredients mentioned in the reference, and
/// how many of those the prediction also mentions.
pub fn ingredient_recall(
    pred: &[String],
    reference: &[String],
    iv: &IngredientVocabulary,
) -> (usize, usize) {
    let entries = ingredient_entries(iv);
    let in_ref = present_ingredients(reference, &entries);
    if in_ref.is_empty() {
        return (0, 0);
    }
    let in_pred = present_ingredients(pred, &entries);
    let hits = in_ref.iter().filter(|id| in_pred.contains(id)).count();
    (hits, in_ref.len())
}

/// Fixed list of verb lemmas with precomputed stem forms.
#[derive(Clone, Debug)]
pub struct VerbLexicon {
    lemmas: Vec<String>,
    stem_to_idx: HashMap<String, usize>,
}

impl VerbLexicon {
    pub fn from_lemmas(lemmas: impl IntoIterator<Item = String>) -> VerbLexicon {
        let stemmer = english_stemmer();
        let mut out = VerbLexicon {
            lemmas: Vec::new(),
            stem_to_idx: HashMap::new(),
        };
        for lemma in lemmas {
            let s = stem(&stemmer, &lemma);
            // First lemma wins for a shared stem; no duplicates after stemming.
            if !out.stem_to_idx.contains_key(&s) {
                out.stem_to_idx.insert(s, out.lemmas.len());
                out.lemmas.push(lemma);
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<VerbLexicon> {
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(VerbLexicon::from_lemmas(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from),
        ))
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    /// Distinct lexicon verbs present in the tokens, by stem match.
    pub fn verbs_in(&self, tokens: &[String]) -> Vec<usize> {
        let stemmer = english_stemmer();
        let mut seen = Vec::new();
        for tok in tokens {
            if let Some(&idx) = self.stem_to_idx.get(&stem(&stemmer, tok)) {
                if !seen.contains(&idx) {
                    seen.push(idx);
                }
            }
        }
        seen
    }
}

/// `(hits, total)`: lexicon verbs in the reference and how many the
/// prediction recalls.
pub fn verb_recall(pred: &[String], reference: &[String], lex: &VerbLexicon) -> (usize, usize) {
    let in_ref = lex.verbs_in(reference);
    if in_ref.is_empty() {
        return (0, 0);
    }
    let in_pred = lex.verbs_in(pred);
    let hits = in_ref.iter().filter(|v| in_pred.contains(v)).count();
    (hits, in_ref.len())
}

/// Mean number of lexicon verbs per ground-truth step.
pub fn mean_lexicon_verbs_per_step(recipes: &[Recipe], lex: &VerbLexicon) -> f64 {
    let mut verbs = 0usize;
    let mut steps = 0usize;
    for r in recipes {
        for s in &r.steps {
            verbs += lex.verbs_in(&tokenize(s)).len();
            steps += 1;
        }
    }
    if steps == 0 {
        0.0
    } else {
        verbs as f64 / steps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Score each prediction against the ground-truth step it aligns to.
    Exact,
    /// Score the sentence metrics against the best of the aligned step and
    /// the three following it; recall metrics stay exact-aligned.
    Future,
}

#[derive(Clone, Debug, Default)]
struct CellAccum {
    support: usize,
    bleu1: f64,
    bleu4: f64,
    meteor: f64,
    ing_hits: usize,
    ing_total: usize,
    verb_hits: usize,
    verb_total: usize,
}

impl CellAccum {
    fn merge_pair(&mut self, pair: &PairScores) {
        self.support += 1;
        self.bleu1 += pair.bleu1;
        self.bleu4 += pair.bleu4;
        self.meteor += pair.meteor;
        self.ing_hits += pair.ing.0;
        self.ing_total += pair.ing.1;
        self.verb_hits += pair.verb.0;
        self.verb_total += pair.verb.1;
    }
}

struct PairScores {
    bleu1: f64,
    bleu4: f64,
    meteor: f64,
    ing: (usize, usize),
    verb: (usize, usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellReport {
    pub prefix: usize,
    pub horizon: usize,
    /// 1-based ground-truth step index this cell scored against.
    pub predicted_step: usize,
    pub support: usize,
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub ingredient_recall: Option<f64>,
    pub verb_recall: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub support: usize,
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub ingredient_recall: Option<f64>,
    pub verb_recall: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: ScoreMode,
    pub cells: Vec<CellReport>,
    pub horizons: Vec<HorizonReport>,
}

fn finish_cell(key: (usize, usize), acc: &CellAccum) -> CellReport {
    let n = acc.support.max(1) as f64;
    CellReport {
        prefix: key.0,
        horizon: key.1,
        predicted_step: key.0 + key.1,
        support: acc.support,
        bleu1: acc.bleu1 / n,
        bleu4: acc.bleu4 / n,
        meteor: acc.meteor / n,
        ingredient_recall: (acc.ing_total > 0)
            .then(|| acc.ing_hits as f64 / acc.ing_total as f64),
        verb_recall: (acc.verb_total > 0)
            .then(|| acc.verb_hits as f64 / acc.verb_total as f64),
    }
}

/// Score traces against their ground-truth recipes. A prediction with prefix
/// `j` and horizon `h` scores against step `j + h`; only recipes long enough
/// to have that step contribute to the cell.
pub fn aggregate(
    traces: &[PredictionTrace],
    recipes: &[Recipe],
    iv: &IngredientVocabulary,
    lex: &VerbLexicon,
    mode: ScoreMode,
) -> Result<MetricReport> {
    let by_id: HashMap<&str, &Recipe> = recipes.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut cells: BTreeMap<(usize, usize), CellAccum> = BTreeMap::new();
    let mut horizons: BTreeMap<usize, CellAccum> = BTreeMap::new();

    for trace in traces {
        let recipe = by_id.get(trace.recipe_id.as_str()).ok_or_else(|| {
            CoreError::invalid(format!(
                "trace references unknown recipe {}",
                trace.recipe_id
            ))
        })?;
        let gt_tokens: Vec<Vec<String>> = recipe.steps.iter().map(|s| tokenize(s)).collect();
        let n = gt_tokens.len();
        for row in &trace.rows {
            for pred in &row.predictions {
                let target = row.prefix + pred.horizon; // 1-based step index
                if target > n {
                    continue;
                }
                let pred_tokens: Vec<String> = pred
                    .text
                    .split_whitespace()
                    .map(|s| s.to_string())
                    .collect();
                let aligned = &gt_tokens[target - 1];
                // Sentence scores; in future mode the best of steps
                // target..target+3 counts, per metric independently.
                let candidates: Vec<&Vec<String>> = match mode {
                    ScoreMode::Exact => vec![aligned],
                    ScoreMode::Future => (target..=(target + 3).min(n))
                        .map(|s| &gt_tokens[s - 1])
                        .collect(),
                };
                let mut pair = PairScores {
                    bleu1: 0.0,
                    bleu4: 0.0,
                    meteor: 0.0,
                    ing: ingredient_recall(&pred_tokens, aligned, iv),
                    verb: verb_recall(&pred_tokens, aligned, lex),
                };
                for cand in candidates {
                    pair.bleu1 = pair.bleu1.max(bleu_n(&pred_tokens, cand, 1));
                    pair.bleu4 = pair.bleu4.max(bleu_n(&pred_tokens, cand, 4));
                    pair.meteor = pair.meteor.max(meteor_lite(&pred_tokens, cand));
                }
                cells
                    .entry((row.prefix, pred.horizon))
                    .or_default()
                    .merge_pair(&pair);
                horizons.entry(pred.horizon).or_default().merge_pair(&pair);
            }
        }
    }

    Ok(MetricReport {
        mode,
        cells: cells.iter().map(|(k, a)| finish_cell(*k, a)).collect(),
        horizons: horizons
            .iter()
            .map(|(h, a)| {
                let c = finish_cell((0, *h), a);
                HorizonReport {
                    horizon: *h,
                    support: c.support,
                    bleu1: c.bleu1,
                    bleu4: c.bleu4,
                    meteor: c.meteor,
                    ingredient_recall: c.ingredient_recall,
                    verb_recall: c.verb_recall,
                }
            })
            .collect(),
    })
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "prefix,horizon,predicted_step,support,bleu1,bleu4,meteor,ingredient_recall,verb_recall\n",
        );
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4},{},{}\n",
                c.prefix,
                c.horizon,
                c.predicted_step,
                c.support,
                c.bleu1,
                c.bleu4,
                c.meteor,
                fmt_opt(c.ingredient_recall),
                fmt_opt(c.verb_recall),
            ));
        }
        out
    }
}
