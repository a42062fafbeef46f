//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers. The toy model is trained once and shared.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use procap_core::autodiff::{gradcheck, lstm_cell, Param, Scalar, Tape, Tensor};
use procap_core::corpus::{load_corpus, tokenize, IngredientVocabulary, Recipe, Split, Vocabulary};
use procap_core::decoder::{decode_beam, decode_greedy};
use procap_core::fixtures::generate_toy_corpus;
use procap_core::inference::{normalize_proposals, segment_video, SegmentationStrategy};
use procap_core::metrics::{bleu_n, ingredient_recall, meteor_lite, verb_recall, VerbLexicon};
use procap_core::model::{ModelConfig, ModelParams, Stage};
use procap_core::training::{
    prepare_recipes, recipe_forward_loss, PreparedRecipe, ScheduledSampling, TrainConfig, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAIN_SEED: u64 = 42;
const FIXTURE_SEED: u64 = 1;

struct Artifacts {
    _dir: tempfile::TempDir,
    recipes: Vec<Recipe>,
    vocab: Vocabulary,
    iv: IngredientVocabulary,
    text_params: ModelParams<f32>,
    video_params: ModelParams<f32>,
    pretext_params: ModelParams<f32>,
    initial_ld: f64,
    final_ld: f64,
    epochs_used: usize,
    text_wall_secs: f64,
}

fn toy_model_config(vocab: &Vocabulary, iv: &IngredientVocabulary) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab.size(),
        ingredient_count: iv.size(),
        embed_dim: 32,
        enc_hidden: 48,
        feature_dim: procap_core::fixtures::TOY_FEATURE_DIM,
    }
}

fn toy_train_cfg(stage: Stage) -> TrainConfig {
    TrainConfig {
        stage,
        epochs: 200,
        batch_size: 2,
        lr: 0.005,
        alpha: 0.1,
        use_recipe_loss: false,
        scheduled_sampling: ScheduledSampling::default(),
        seed: TRAIN_SEED,
        clip_norm: 5.0,
        no_ing: false,
        frame_stride: 5,
    }
}

fn split_of(recipes: &[Recipe], s: Split) -> Vec<Recipe> {
    recipes.iter().filter(|r| r.split == s).cloned().collect()
}

fn artifacts() -> &'static Artifacts {
    static CELL: OnceLock<Artifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fx = generate_toy_corpus(dir.path(), FIXTURE_SEED).unwrap();
        let recipes = load_corpus(&fx.corpus).unwrap();
        let vocab = Vocabulary::build(&recipes, 1000).unwrap();
        let iv = IngredientVocabulary::build(&recipes);
        let config = toy_model_config(&vocab, &iv);

        let train_text =
            prepare_recipes(&split_of(&recipes, Split::Train), &vocab, &iv, false).unwrap();
        let train_video =
            prepare_recipes(&split_of(&recipes, Split::Train), &vocab, &iv, true).unwrap();

        // Text stage: run in 20-epoch slices up to the 200-epoch budget,
        // stopping once the overfit targets are met.
        let started = Instant::now();
        let pretext_params = ModelParams::init(config, TRAIN_SEED);
        let mut trainer = Trainer::new(
            pretext_params.clone(),
            train_text.clone(),
            vec![],
            toy_train_cfg(Stage::Text),
        );
        let initial_ld = trainer.evaluate_mean_ld(&train_text).unwrap().unwrap();
        let mut final_ld = initial_ld;
        while trainer.epochs_run() < 200 {
            trainer.run(20).unwrap();
            final_ld = trainer.evaluate_mean_ld(&train_text).unwrap().unwrap();
            if final_ld < 0.1 * initial_ld
                && reproduction_rate(&trainer.params, &train_text) >= 0.9
            {
                break;
            }
        }
        let epochs_used = trainer.epochs_run();
        let text_wall_secs = started.elapsed().as_secs_f64();
        let (text_params, _, _) = trainer.finish();

        // Video stage: 25 epochs on the synthetic features.
        let mut vcfg = toy_train_cfg(Stage::Video);
        vcfg.epochs = 25;
        let mut vtrainer = Trainer::new(text_params.clone(), train_video, vec![], vcfg);
        vtrainer.run(25).unwrap();
        let (video_params, _, _) = vtrainer.finish();

        Artifacts {
            _dir: dir,
            recipes,
            vocab,
            iv,
            text_params,
            video_params,
            pretext_params,
            initial_ld,
            final_ld,
            epochs_used,
            text_wall_secs,
        }
    })
}

/// Fraction of training-step sentences reproduced token-exactly by greedy
/// decoding with ground-truth context.
fn reproduction_rate(params: &ModelParams<f32>, preps: &[PreparedRecipe]) -> f64 {
    let mut exact = 0usize;
    let mut total = 0usize;
    for prep in preps {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let (mut state, _) =
            procap_core::recipe_net::init_from_ingredients(&mut tape, &bound, params, &prep.ing_vec)
                .unwrap();
        for j in 0..prep.step_ids.len() {
            let repr = tape.value(state.h).clone();
            let out = decode_greedy(params, &repr, 30).unwrap();
            if out.tokens == prep.step_ids[j] {
                exact += 1;
            }
            total += 1;
            if j + 1 < prep.step_ids.len() {
                let ctx = procap_core::encoders::encode_sentence(&mut tape, &bound, params, &prep.step_ids[j])
                    .unwrap();
                state = procap_core::recipe_net::advance(&mut tape, &bound, &state, ctx).unwrap();
            }
        }
    }
    exact as f64 / total as f64
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut rand_t = |shape: &[usize]| {
        let n: usize = shape.iter().product();
        Tensor::<f64>::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    };

    // Every primitive op against central finite differences at 1e-4.
    let mut worst: f64 = 0.0;
    let a = rand_t(&[4]);
    let b = rand_t(&[4]);
    worst = worst.max(
        gradcheck::max_grad_error(&[a.clone(), b.clone()], 1e-5, &|t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(s, v[1])?;
            let m = t.mul(d, v[0])?;
            let m = t.scale(m, -1.4);
            let sg = t.sigmoid(m);
            let th = t.tanh(sg);
            let sm = t.softmax(th)?;
            let ls = t.log_softmax(sm)?;
            let cat = t.concat(&[ls, v[1]])?;
            let sl = t.slice(cat, 1, 5)?;
            let st = t.stack(&[sl, sl])?;
            let mx = t.max_over_time(st)?;
            let p = t.pick(mx, 2)?;
            let s2 = t.sum(mx);
            t.add(p, s2)
        })
        .unwrap(),
    );
    let w = rand_t(&[3, 4]);
    let m2 = rand_t(&[4, 2]);
    let x = rand_t(&[4]);
    worst = worst.max(
        gradcheck::max_grad_error(&[w, m2, x], 1e-5, &|t, v| {
            let mm = t.matmul(v[0], v[1])?;
            let mv = t.matvec(v[0], v[2])?;
            let r = t.row(mm, 1)?;
            let head = t.slice(mv, 0, 2)?;
            let j = t.add(r, head)?;
            Ok(t.sum(j))
        })
        .unwrap(),
    );
    let table = rand_t(&[5, 3]);
    worst = worst.max(
        gradcheck::max_grad_error(&[table], 1e-5, &|t, v| {
            let e = t.embedding_lookup(v[0], &[0, 3, 3])?;
            let pooled = t.max_over_time(e)?;
            Ok(t.sum(pooled))
        })
        .unwrap(),
    );
    // LSTM cell.
    let (input, hidden) = (3, 4);
    let inputs = vec![
        rand_t(&[4 * hidden, input]),
        rand_t(&[4 * hidden, hidden]),
        rand_t(&[4 * hidden]),
        rand_t(&[input]),
        rand_t(&[hidden]),
        rand_t(&[hidden]),
    ];
    worst = worst.max(
        gradcheck::max_grad_error(&inputs, 1e-4, &|tape, vars| {
            let p = procap_core::autodiff::LstmVars {
                w_ih: vars[0],
                w_hh: vars[1],
                bias: vars[2],
            };
            let (h, c) = lstm_cell(tape, vars[3], vars[4], vars[5], &p)?;
            let hc = tape.concat(&[h, c])?;
            Ok(tape.sum(hc))
        })
        .unwrap(),
    );
    assert!(worst < 1e-4, "per-op max relative error {worst}");

    // Composed SE -> RE -> SD graph on a 4-unit configuration, ten random
    // parameters, tolerance 1e-3.
    let cfg = ModelConfig {
        vocab_size: 10,
        ingredient_count: 4,
        embed_dim: 4,
        enc_hidden: 4,
        feature_dim: 3,
    };
    let params = ModelParams::<f64>::init(cfg, 2024);
    let prep = PreparedRecipe {
        id: "g".into(),
        step_ids: vec![vec![4, 6], vec![7, 8, 5]],
        targets: vec![vec![4, 6, 2], vec![7, 8, 5, 2]],
        ing_vec: vec![1.0, 0.0, 1.0, 0.0],
        has_ingredients: true,
        video: None,
    };
    let eval = |probe: &ModelParams<f64>| -> f64 {
        let mut t = Tape::new();
        let b = probe.bind(&mut t, None);
        let mut s = 0u64;
        let l = recipe_forward_loss(
            &mut t, &b, probe, &prep, Stage::Text, 0.1, true, 5, false, &[], &mut s,
        )
        .unwrap();
        t.value(l.total).item()
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, Some(Stage::Text));
    let mut sink = 0u64;
    let loss = recipe_forward_loss(
        &mut tape, &bound, &params, &prep, Stage::Text, 0.1, true, 5, false, &[], &mut sink,
    )
    .unwrap();
    tape.backward(loss.total).unwrap();

    let text_params: Vec<usize> = params
        .params()
        .iter()
        .enumerate()
        .filter(|(_, p)| procap_core::model::trainable_in(&p.name, Stage::Text))
        .map(|(i, _)| i)
        .collect();
    let mut composed_worst: f64 = 0.0;
    for k in 0..10 {
        let pi = text_params[(k * 7) % text_params.len()];
        let plist = params.params();
        let name = plist[pi].name.clone();
        let len = plist[pi].value.len();
        let elem = (k * 13) % len;
        let analytic = tape
            .grad(bound.vars()[pi])
            .map(|g| g.data()[elem])
            .unwrap_or(0.0);
        let h = 1e-4;
        let mut probe_at = |delta: f64| {
            let mut probe = params.clone();
            {
                let mut slots = probe.params_mut();
                let slot: &mut &mut Param<f64> =
                    slots.iter_mut().find(|p| p.name == name).unwrap();
                slot.value.data_mut()[elem] += delta;
            }
            eval(&probe)
        };
        let numeric = (probe_at(h) - probe_at(-h)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs());
        composed_worst = composed_worst.max(rel);
    }
    assert!(composed_worst < 1e-3, "composed-graph error {composed_worst}");

    let wall = started.elapsed().as_secs_f64();
    assert!(wall < 60.0, "gradient checks took {wall:.1}s");
    println!(
        "criterion 1 (gradient correctness): PASS  per-op {worst:.2e}, composed {composed_worst:.2e}, {wall:.1}s"
    );
}

#[test]
fn criterion_2_overfit_capability() {
    let art = artifacts();
    let train = prepare_recipes(
        &split_of(&art.recipes, Split::Train),
        &art.vocab,
        &art.iv,
        false,
    )
    .unwrap();
    let ratio = art.final_ld / art.initial_ld;
    let rate = reproduction_rate(&art.text_params, &train);
    assert!(art.epochs_used <= 200, "needed {} epochs", art.epochs_used);
    assert!(
        ratio < 0.1,
        "final L_d {} is {:.3} of initial {}",
        art.final_ld,
        ratio,
        art.initial_ld
    );
    assert!(rate >= 0.9, "reproduction rate {rate:.3}");
    assert!(
        art.text_wall_secs < 600.0,
        "text stage took {:.1}s",
        art.text_wall_secs
    );
    println!(
        "criterion 2 (overfit capability): PASS  L_d ratio {ratio:.4}, reproduction {rate:.3}, {} epochs, {:.1}s",
        art.epochs_used, art.text_wall_secs
    );
}

#[test]
fn criterion_3_freeze_integrity() {
    let art = artifacts();
    let mut ve_changed = false;
    for (after, before) in art.video_params.params().iter().zip(art.text_params.params()) {
        assert_eq!(after.name, before.name);
        if after.name.starts_with("ve.") {
            ve_changed |= after.value.data() != before.value.data();
        } else {
            // Bit-identical to the pretrained checkpoint.
            assert_eq!(
                after.value.data(),
                before.value.data(),
                "frozen parameter {} changed during video training",
                after.name
            );
        }
    }
    assert!(ve_changed, "video encoder parameters never moved");
    println!("criterion 3 (freeze integrity): PASS  RE/SD/SE/embedding bit-identical, VE updated");
}

#[test]
fn criterion_4_beam_properties() {
    let cfg = ModelConfig {
        vocab_size: 9,
        ingredient_count: 4,
        embed_dim: 3,
        enc_hidden: 2,
        feature_dim: 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for seed in 0..100u64 {
        let params = ModelParams::<f64>::init(cfg, 5000 + seed);
        let dim = params.config.repr_dim();
        let r = Tensor::vector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        let greedy = decode_greedy(&params, &r, 8).unwrap();
        let beam5 = decode_beam(&params, &r, 5, 8).unwrap();
        assert!(
            beam5.logprob >= greedy.logprob - 1e-12,
            "seed {seed}: beam {} < greedy {}",
            beam5.logprob,
            greedy.logprob
        );
        let beam1 = decode_beam(&params, &r, 1, 8).unwrap();
        assert_eq!(
            beam1.content_tokens(),
            greedy.tokens.as_slice(),
            "seed {seed}: beam-1 differs from greedy"
        );
    }

    // 4-word vocabulary (8 ids), max_len 3: beam-5 equals exhaustive argmax.
    let tiny = ModelConfig {
        vocab_size: 8,
        ingredient_count: 4,
        embed_dim: 3,
        enc_hidden: 2,
        feature_dim: 3,
    };
    let params = ModelParams::<f64>::init(tiny, 777);
    let r = Tensor::vector((0..tiny.enc_hidden * 2).map(|i| 0.3 - 0.2 * i as f64).collect());
    let best = exhaustive_best(&params, &r, 3);
    let beam = decode_beam(&params, &r, 5, 3).unwrap();
    assert!(
        (beam.logprob - best.0).abs() < 1e-9,
        "beam {} vs exhaustive {}",
        beam.logprob,
        best.0
    );
    assert_eq!(beam.tokens, best.1);
    println!("criterion 4 (beam properties): PASS  dominance and beam-1 equality on 100 models, enumeration match");
}

/// Brute-force search over every decodable sequence up to `max_len` tokens.
fn exhaustive_best(params: &ModelParams<f64>, r: &Tensor<f64>, max_len: usize) -> (f64, Vec<usize>) {
    use procap_core::corpus::{BOS, EOS, UNK};
    fn step(
        params: &ModelParams<f64>,
        r: &Tensor<f64>,
        prev: usize,
        state: Option<&(Tensor<f64>, Tensor<f64>)>,
    ) -> (Vec<f64>, (Tensor<f64>, Tensor<f64>)) {
        // Teacher-forced continuation scores from the decoder itself, with
        // UNK masked the same way decoding masks it.
        let hidden = params.config.dec_hidden();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, None);
        let (h0, c0) = match state {
            Some((h, c)) => (tape.constant(h.clone()), tape.constant(c.clone())),
            None => (
                tape.constant(Tensor::zeros(&[hidden])),
                tape.constant(Tensor::zeros(&[hidden])),
            ),
        };
        let emb = tape.row(bound.embedding, prev).unwrap();
        let rv = tape.constant(r.clone());
        let inp = tape.concat(&[emb, rv]).unwrap();
        let (h, c) = lstm_cell(&mut tape, inp, h0, c0, &bound.sd).unwrap();
        let logits_raw = tape.matvec(bound.out.w, h).unwrap();
        let logits = tape.add(logits_raw, bound.out.b).unwrap();
        let mut xs: Vec<f64> = tape.value(logits).data().iter().map(|x| x.wide()).collect();
        xs[UNK] = f64::NEG_INFINITY;
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = xs.iter().map(|x| (x - max).exp()).sum();
        let lps = xs.iter().map(|x| x - max - z.ln()).collect();
        (lps, (tape.value(h).clone(), tape.value(c).clone()))
    }
    fn recurse(
        params: &ModelParams<f64>,
        r: &Tensor<f64>,
        prefix: &mut Vec<usize>,
        lp: f64,
        state: Option<&(Tensor<f64>, Tensor<f64>)>,
        max_len: usize,
        best: &mut (f64, Vec<usize>),
    ) {
        if prefix.len() >= max_len {
            if lp > best.0 {
                *best = (lp, prefix.clone());
            }
            return;
        }
        let prev = *prefix.last().unwrap_or(&BOS);
        let (lps, next) = step(params, r, prev, state);
        for (tok, &tok_lp) in lps.iter().enumerate() {
            if tok_lp == f64::NEG_INFINITY {
                continue;
            }
            if tok == EOS {
                if lp + tok_lp > best.0 {
                    let mut seq = prefix.clone();
                    seq.push(EOS);
                    *best = (lp + tok_lp, seq);
                }
            } else {
                prefix.push(tok);
                recurse(params, r, prefix, lp + tok_lp, Some(&next), max_len, best);
                prefix.pop();
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, vec![]);
    recurse(params, r, &mut Vec::new(), 0.0, None, max_len, &mut best);
    best
}

#[test]
fn criterion_5_metric_anchors() {
    let gt = tokenize("Bake in the preheated oven until bacon is crisp and browned , 50 to 60 minutes .");
    let pred = tokenize("Bake in preheated oven until bacon is crisp and breadsticks are golden brown , about 15 minutes .");
    let b1 = bleu_n(&pred, &gt, 1);
    let b4 = bleu_n(&pred, &gt, 4);
    assert!((b1 - 63.0).abs() <= 5.0, "BLEU1 {b1:.2} outside 63±5");
    assert!((b4 - 43.0).abs() <= 5.0, "BLEU4 {b4:.2} outside 43±5");

    let iv = IngredientVocabulary::from_names(["bacon".to_string(), "oven racks".to_string()]);
    let lex = VerbLexicon::from_lemmas(["bake", "stir"].map(String::from));
    let ident = tokenize("Stir the bacon until crisp");
    assert_eq!(bleu_n(&ident, &ident, 1), 100.0);
    assert_eq!(bleu_n(&ident, &ident, 4), 100.0);
    assert_eq!(meteor_lite(&ident, &ident), 100.0);
    let (ih, it) = ingredient_recall(&ident, &ident, &iv);
    assert!(it > 0 && ih == it);
    let (vh, vt) = verb_recall(&ident, &ident, &lex);
    assert!(vt > 0 && vh == vt);

    let disjoint = tokenize("whisk two eggs gently");
    assert_eq!(bleu_n(&disjoint, &ident, 1), 0.0);
    assert_eq!(bleu_n(&disjoint, &ident, 4), 0.0);
    assert_eq!(meteor_lite(&disjoint, &ident), 0.0);
    assert_eq!(ingredient_recall(&disjoint, &ident, &iv), (0, 1));
    println!("criterion 5 (metric anchors): PASS  step-6 pair BLEU1 {b1:.1}, BLEU4 {b4:.1}; identity 100; disjoint 0");
}

#[test]
fn criterion_6_alpha_scaling() {
    // Frozen batch in f64: L(alpha=0.2) - L(alpha=0.1) must equal 0.1 * L_r.
    let cfg = ModelConfig {
        vocab_size: 12,
        ingredient_count: 5,
        embed_dim: 6,
        enc_hidden: 5,
        feature_dim: 4,
    };
    let params = ModelParams::<f64>::init(cfg, 606);
    let batch = vec![
        PreparedRecipe {
            id: "a".into(),
            step_ids: vec![vec![4, 5, 6], vec![7, 8]],
            targets: vec![vec![4, 5, 6, 2], vec![7, 8, 2]],
            ing_vec: vec![1.0, 0.0, 1.0, 0.0, 0.0],
            has_ingredients: true,
            video: None,
        },
        PreparedRecipe {
            id: "b".into(),
            step_ids: vec![vec![9, 10], vec![11, 4], vec![5]],
            targets: vec![vec![9, 10, 2], vec![11, 4, 2], vec![5, 2]],
            ing_vec: vec![0.0, 1.0, 0.0, 1.0, 1.0],
            has_ingredients: true,
            video: None,
        },
    ];
    let total_with = |alpha: f64| -> (f64, f64) {
        let mut total = 0.0;
        let mut lr = 0.0;
        for prep in &batch {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, None);
            let mut sink = 0u64;
            let loss = recipe_forward_loss(
                &mut tape, &bound, &params, prep, Stage::Text, alpha, true, 5, false, &[], &mut sink,
            )
            .unwrap();
            total += tape.value(loss.total).item();
            lr += loss.lr_value;
        }
        (total, lr)
    };
    let (t1, lr) = total_with(0.1);
    let (t2, _) = total_with(0.2);
    let diff = (t2 - t1) - 0.1 * lr;
    assert!(diff.abs() < 1e-5, "Eq. 9 linearity off by {diff}");
    println!("criterion 6 (alpha scaling): PASS  |Δ - 0.1·L_r| = {:.2e}", diff.abs());
}

#[test]
fn criterion_7_window_segmentation_and_proposals() {
    let manifest = procap_core::corpus::VideoManifest {
        feature_file: "unused.pcf".into(),
        num_frames: 400,
        feature_dim: 4,
        segments: vec![],
    };
    let segs = segment_video(
        &manifest,
        &SegmentationStrategy::FixedWindow { width: 170 },
        400,
    )
    .unwrap();
    assert_eq!(segs, vec![(0, 170), (170, 340), (340, 400)]);

    // NMS at the 0.2 IoU threshold: the longest proposal wins and the
    // shorter is discarded at exactly 0.2.
    assert_eq!(normalize_proposals(&[(0, 10), (6, 20)]), vec![(6, 20)]);
    // Below threshold both survive and the overlap splits by length.
    assert_eq!(normalize_proposals(&[(0, 10), (8, 20)]), vec![(0, 9), (9, 20)]);
    println!("criterion 7 (window segmentation): PASS  partition and proposal normalization match hand derivations");
}

fn run_cli(args: &[&str]) {
    let exe = env!("CARGO_BIN_EXE_procap");
    let out = Command::new(exe)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "procap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn full_pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let fixtures = root.join("fixtures");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run_cli(&["make-fixtures", "--out", &s(&fixtures), "--seed", "9"]);
    let corpus = fixtures.join("recipes.jsonl");
    let vocab_dir = root.join("vocab");
    run_cli(&[
        "build-vocab",
        "--corpus",
        &s(&corpus),
        "--max-words",
        "1000",
        "--out",
        &s(&vocab_dir),
    ]);
    let vocab = vocab_dir.join("vocab.txt");
    let ingredients = vocab_dir.join("ingredients.txt");
    let text_dir = root.join("text");
    run_cli(&[
        "train",
        "--stage",
        "text",
        "--corpus",
        &s(&corpus),
        "--vocab",
        &s(&vocab),
        "--ingredients",
        &s(&ingredients),
        "--epochs",
        "3",
        "--embed-dim",
        "12",
        "--enc-hidden",
        "12",
        "--batch-size",
        "4",
        "--lr",
        "0.005",
        "--seed",
        "33",
        "--out",
        &s(&text_dir),
    ]);
    let video_dir = root.join("video");
    run_cli(&[
        "train",
        "--stage",
        "video",
        "--corpus",
        &s(&corpus),
        "--vocab",
        &s(&vocab),
        "--ingredients",
        &s(&ingredients),
        "--pretrained",
        &s(&text_dir.join("model.ckpt")),
        "--epochs",
        "2",
        "--batch-size",
        "4",
        "--lr",
        "0.005",
        "--seed",
        "33",
        "--out",
        &s(&video_dir),
    ]);
    let ant_dir = root.join("ant");
    run_cli(&[
        "anticipate",
        "--checkpoint",
        &s(&video_dir.join("model.ckpt")),
        "--corpus",
        &s(&corpus),
        "--vocab",
        &s(&vocab),
        "--ingredients",
        &s(&ingredients),
        "--strategy",
        "gt",
        "--decode",
        "greedy",
        "--horizons",
        "4",
        "--threads",
        "1",
        "--out",
        &s(&ant_dir),
    ]);
    let eval_dir = root.join("eval");
    let lexicon = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/verb_lexicon.txt");
    run_cli(&[
        "evaluate",
        "--traces",
        &s(&ant_dir.join("traces.jsonl")),
        "--corpus",
        &s(&corpus),
        "--ingredient-vocab",
        &s(&ingredients),
        "--verb-lexicon",
        &s(&lexicon),
        "--mode",
        "exact",
        "--out",
        &s(&eval_dir),
    ]);

    [
        vocab_dir.join("vocab.txt"),
        vocab_dir.join("ingredients.txt"),
        text_dir.join("model.ckpt"),
        video_dir.join("model.ckpt"),
        ant_dir.join("traces.jsonl"),
        eval_dir.join("report.json"),
        eval_dir.join("report.csv"),
    ]
    .iter()
    .map(|p| {
        (
            p.file_name().unwrap().to_string_lossy().to_string(),
            std::fs::read(p).unwrap(),
        )
    })
    .collect()
}

#[test]
fn criterion_8_pipeline_determinism() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = full_pipeline(d1.path());
    let b = full_pipeline(d2.path());
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            bytes_a, bytes_b,
            "{name_a} differs between identically seeded runs"
        );
    }
    println!("criterion 8 (determinism): PASS  two seeded pipeline runs byte-identical across {} artifacts", a.len());
}

#[test]
fn criterion_9_trend_sanity() {
    let art = artifacts();
    let held_out = split_of(&art.recipes, Split::Test);
    assert!(!held_out.is_empty());
    let lex = VerbLexicon::from_lemmas(
        ["preheat", "heat", "add", "mix", "stir", "pour", "bake", "serve"].map(String::from),
    );
    let opts = procap_core::inference::AnticipateOptions::default();
    let traces: Vec<_> = held_out
        .iter()
        .map(|r| {
            procap_core::inference::anticipate(
                r,
                &art.text_params,
                &art.vocab,
                &art.iv,
                &procap_core::inference::ContextSource::TextGt,
                &opts,
            )
            .unwrap()
        })
        .collect();
    let report = procap_core::metrics::aggregate(
        &traces,
        &held_out,
        &art.iv,
        &lex,
        procap_core::metrics::ScoreMode::Exact,
    )
    .unwrap();
    let horizon = |h: usize| report.horizons.iter().find(|r| r.horizon == h).unwrap();
    let (next, far) = (horizon(1), horizon(4));
    assert!(
        next.bleu1 > far.bleu1,
        "BLEU1 next {:.2} vs next+3 {:.2}",
        next.bleu1,
        far.bleu1
    );
    let next_ing = next.ingredient_recall.unwrap_or(0.0);
    let far_ing = far.ingredient_recall.unwrap_or(0.0);
    assert!(
        next_ing > far_ing,
        "ingredient recall next {next_ing:.3} vs next+3 {far_ing:.3}"
    );
    println!(
        "criterion 9 (trend sanity): PASS  BLEU1 {:.2} > {:.2}, ING {:.3} > {:.3}",
        next.bleu1, far.bleu1, next_ing, far_ing
    );
}

#[test]
fn zero_epoch_checkpoint_equals_initialization() {
    // cmd_train contract: --epochs 0 leaves parameters at initialization.
    let art = artifacts();
    let init = &art.pretext_params;
    let fresh = ModelParams::<f32>::init(toy_model_config(&art.vocab, &art.iv), TRAIN_SEED);
    for (a, b) in init.params().iter().zip(fresh.params()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
}
