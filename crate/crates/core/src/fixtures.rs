//! Self-contained synthetic corpus: 20 template recipes over a 30-word
//! vocabulary, with 16-dim "video" features produced by a fixed random
//! linear map of each step's token counts, plus jittered segment proposals.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::corpus::{tokenize, Recipe, Split, VideoManifest};
use crate::error::{CoreError, Result};
use crate::features::write_features;

pub const TOY_RECIPE_COUNT: usize = 20;
pub const TOY_FEATURE_DIM: usize = 16;

const INGREDIENTS: [&str; 10] = [
    "butter", "eggs", "flour", "sugar", "salt", "milk", "chicken", "garlic", "cheese", "onions",
];

/// The full 30-token content vocabulary, in count-vector order.
const TOKENS: [&str; 30] = [
    "butter", "eggs", "flour", "sugar", "salt", "milk", "chicken", "garlic", "cheese", "onions",
    "preheat", "add", "mix", "stir", "bake", "pour", "heat", "serve", "the", "oven", "to",
    "degrees", "bowl", "pan", "and", "in", "for", "minutes", "350", "20",
];

pub struct ToyFixture {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub proposals: PathBuf,
}

fn token_index(tok: &str) -> usize {
    TOKENS
        .iter()
        .position(|t| *t == tok)
        .unwrap_or_else(|| panic!("fixture token {tok} missing from TOKENS"))
}

fn step_counts(step: &str) -> Vec<f32> {
    let mut counts = vec![0.0f32; TOKENS.len()];
    for tok in tokenize(step) {
        counts[token_index(&tok)] += 1.0;
    }
    counts
}

fn middle_step(rng: &mut ChaCha8Rng, ings: &[String], rotation: usize) -> String {
    let a = &ings[rotation % ings.len()];
    let b = &ings[(rotation + 1) % ings.len()];
    match rng.random_range(0..5u8) {
        0 => format!("Add the {a} to the bowl"),
        1 => format!("Add the {a} and {b} to the pan"),
        2 => format!("Mix the {a} and {b} in the bowl"),
        3 => format!("Stir the {a} for 20 minutes"),
        _ => format!("Pour the {a} in the pan"),
    }
}

/// Generate the corpus into `dir`, writing `recipes.jsonl`, one feature file
/// per recipe under `features/`, and `proposals.json`.
pub fn generate_toy_corpus(dir: &Path, seed: u64) -> Result<ToyFixture> {
    let features_dir = dir.join("features");
    fs::create_dir_all(&features_dir).map_err(|source| CoreError::Io {
        path: features_dir.clone(),
        source,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Fixed random linear map from token counts to the 16-dim feature space.
    let map: Vec<f32> = (0..TOY_FEATURE_DIM * TOKENS.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    let mut lines = String::new();
    let mut proposals: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();

    for idx in 0..TOY_RECIPE_COUNT {
        let id = format!("toy-{idx:02}");
        let split = match idx {
            0..=15 => Split::Train,
            16 | 17 => Split::Val,
            _ => Split::Test,
        };
        let mut pool: Vec<String> = INGREDIENTS.iter().map(|s| s.to_string()).collect();
        for i in (1..pool.len()).rev() {
            let j = rng.random_range(0..=i);
            pool.swap(i, j);
        }
        let n_ings = rng.random_range(3..=5usize);
        let ings: Vec<String> = pool.into_iter().take(n_ings).collect();

        let n_steps = rng.random_range(6..=10usize);
        let mut steps = Vec::with_capacity(n_steps);
        steps.push(if rng.random_bool(0.5) {
            "Preheat the oven to 350 degrees".to_string()
        } else {
            "Heat the pan".to_string()
        });
        for m in 0..n_steps - 2 {
            steps.push(middle_step(&mut rng, &ings, m));
        }
        steps.push(if rng.random_bool(0.5) {
            "Bake for 20 minutes in the oven".to_string()
        } else {
            format!("Serve the {} and {}", ings[0], ings[1 % ings.len()])
        });

        // One segment per step; every frame carries the step's mapped counts.
        let mut segments = Vec::with_capacity(n_steps);
        let mut rows: Vec<f32> = Vec::new();
        let mut cursor = 0usize;
        for step in &steps {
            let len = rng.random_range(6..=18usize);
            let counts = step_counts(step);
            let mut feature = vec![0.0f32; TOY_FEATURE_DIM];
            for (d, f) in feature.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for (t, c) in counts.iter().enumerate() {
                    acc += map[d * TOKENS.len() + t] as f64 * *c as f64;
                }
                *f = acc as f32;
            }
            for _ in 0..len {
                rows.extend_from_slice(&feature);
            }
            segments.push((cursor, cursor + len));
            cursor += len;
        }
        let num_frames = cursor;
        let feature_rel = format!("features/{id}.pcf");
        let matrix = Tensor::matrix(num_frames, TOY_FEATURE_DIM, rows)?;
        write_features(&dir.join(&feature_rel), &matrix)?;

        // Jittered proposals: starts pulled back a little, ends pushed past
        // the next segment's start so the NMS/overlap-split path is exercised.
        let jittered: Vec<(usize, usize)> = segments
            .iter()
            .map(|&(s, e)| {
                let ns = s.saturating_sub(rng.random_range(0..=2usize));
                let ne = (e + rng.random_range(1..=4usize)).min(num_frames);
                (ns, ne.max(ns + 1))
            })
            .collect();
        proposals.insert(id.clone(), jittered);

        let recipe = Recipe {
            id,
            ingredients: ings.into_iter().collect(),
            steps,
            split,
            video: Some(VideoManifest {
                feature_file: PathBuf::from(&feature_rel),
                num_frames,
                feature_dim: TOY_FEATURE_DIM,
                segments,
            }),
        };
        lines.push_str(&serde_json::to_string(&recipe).expect("recipe serializes"));
        lines.push('\n');
    }

    let corpus = dir.join("recipes.jsonl");
    fs::write(&corpus, lines).map_err(|source| CoreError::Io {
        path: corpus.clone(),
        source,
    })?;
    let proposals_path = dir.join("proposals.json");
    let json = serde_json::to_string_pretty(&proposals).expect("proposals serialize");
    fs::write(&proposals_path, json).map_err(|source| CoreError::Io {
        path: proposals_path.clone(),
        source,
    })?;
    Ok(ToyFixture {
        dir: dir.to_path_buf(),
        corpus,
        proposals: proposals_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, Vocabulary};
    use crate::features::load_features;
    use crate::inference::load_proposals;

    #[test]
    fn twenty_recipes_with_expected_splits() {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate_toy_corpus(dir.path(), 7).unwrap();
        let recipes = load_corpus(&fx.corpus).unwrap();
        assert_eq!(recipes.len(), 20);
        let count = |s: Split| recipes.iter().filter(|r| r.split == s).count();
        assert_eq!(count(Split::Train), 16);
        assert_eq!(count(Split::Val), 2);
        assert_eq!(count(Split::Test), 2);
        for r in &recipes {
            assert!((6..=10).contains(&r.steps.len()), "{}", r.id);
            assert!(!r.ingredients.is_empty());
        }
    }

    #[test]
    fn vocabulary_is_thirty_content_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate_toy_corpus(dir.path(), 7).unwrap();
        let recipes = load_corpus(&fx.corpus).unwrap();
        // Count distinct tokens over the whole corpus, not just train.
        let mut seen = std::collections::BTreeSet::new();
        for r in &recipes {
            for s in &r.steps {
                seen.extend(tokenize(s));
            }
        }
        assert_eq!(seen.len(), 30);
        let vocab = Vocabulary::build(&recipes, 1000).unwrap();
        assert!(vocab.size() <= 34);
    }

    #[test]
    fn feature_files_match_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate_toy_corpus(dir.path(), 7).unwrap();
        let recipes = load_corpus(&fx.corpus).unwrap();
        for r in &recipes {
            let m = r.video.as_ref().unwrap();
            let feats = load_features(m).unwrap();
            assert_eq!(feats.shape(), &[m.num_frames, TOY_FEATURE_DIM]);
            assert_eq!(m.segments.len(), r.steps.len());
            assert_eq!(m.segments.last().unwrap().1, m.num_frames);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_toy_corpus(d1.path(), 11).unwrap();
        generate_toy_corpus(d2.path(), 11).unwrap();
        let read = |d: &Path| std::fs::read(d.join("recipes.jsonl")).unwrap();
        assert_eq!(read(d1.path()), read(d2.path()));
        let feat = |d: &Path| std::fs::read(d.join("features/toy-13.pcf")).unwrap();
        assert_eq!(feat(d1.path()), feat(d2.path()));
        let props = |d: &Path| std::fs::read(d.join("proposals.json")).unwrap();
        assert_eq!(props(d1.path()), props(d2.path()));

        let d3 = tempfile::tempdir().unwrap();
        generate_toy_corpus(d3.path(), 12).unwrap();
        assert_ne!(read(d1.path()), read(d3.path()));
    }

    #[test]
    fn proposals_cover_every_recipe() {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate_toy_corpus(dir.path(), 7).unwrap();
        let props = load_proposals(&fx.proposals).unwrap();
        assert_eq!(props.len(), 20);
        let recipes = load_corpus(&fx.corpus).unwrap();
        for r in &recipes {
            let list = &props[&r.id];
            assert_eq!(list.len(), r.steps.len());
            // Jitter must produce at least one overlapping pair somewhere.
        }
        let any_overlap = props.values().any(|list| {
            list.windows(2).any(|w| w[1].0 < w[0].1)
        });
        assert!(any_overlap);
    }
}
