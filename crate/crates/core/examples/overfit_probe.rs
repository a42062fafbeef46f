//! Scratch probe for toy-corpus overfitting behavior across hyperparameters.
//! Run: cargo run --release -p procap-core --example overfit_probe -- <embed> <hidden> <lr> <batch> <ss:0|1>

use std::time::Instant;

use procap_core::corpus::{load_corpus, IngredientVocabulary, Split, Vocabulary};
use procap_core::decoder::decode_greedy;
use procap_core::fixtures::generate_toy_corpus;
use procap_core::model::{ModelConfig, ModelParams, Stage};
use procap_core::training::{prepare_recipes, ScheduledSampling, TrainConfig, Trainer};

fn reproduction_rate(
    params: &ModelParams<f32>,
    preps: &[procap_core::training::PreparedRecipe],
) -> f64 {
    let mut exact = 0usize;
    let mut total = 0usize;
    for prep in preps {
        let mut tape = procap_core::autodiff::Tape::new();
        let bound = params.bind(&mut tape, None);
        let (mut state, _) = procap_core::recipe_net::init_from_ingredients(
            &mut tape, &bound, params, &prep.ing_vec,
        )
        .unwrap();
        for j in 0..prep.step_ids.len() {
            let repr = tape.value(state.h).clone();
            let out = decode_greedy(params, &repr, 30).unwrap();
            if out.tokens == prep.step_ids[j] {
                exact += 1;
            }
            total += 1;
            if j + 1 < prep.step_ids.len() {
                let ctx = procap_core::encoders::encode_sentence(
                    &mut tape,
                    &bound,
                    params,
                    &prep.step_ids[j],
                )
                .unwrap();
                state = procap_core::recipe_net::advance(&mut tape, &bound, &state, ctx).unwrap();
            }
        }
    }
    exact as f64 / total as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let embed: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(24);
    let hidden: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(24);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.003);
    let batch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(4);
    let ss: bool = args.get(5).map(|s| s == "1").unwrap_or(true);

    let dir = tempfile::tempdir().unwrap();
    let fx = generate_toy_corpus(dir.path(), 1).unwrap();
    let recipes = load_corpus(&fx.corpus).unwrap();
    let vocab = Vocabulary::build(&recipes, 1000).unwrap();
    let iv = IngredientVocabulary::build(&recipes);
    let train_recipes: Vec<_> = recipes
        .iter()
        .filter(|r| r.split == Split::Train)
        .cloned()
        .collect();
    let train = prepare_recipes(&train_recipes, &vocab, &iv, false).unwrap();

    let config = ModelConfig {
        vocab_size: vocab.size(),
        ingredient_count: iv.size(),
        embed_dim: embed,
        enc_hidden: hidden,
        feature_dim: procap_core::fixtures::TOY_FEATURE_DIM,
    };
    let cfg = TrainConfig {
        stage: Stage::Text,
        epochs: 200,
        batch_size: batch,
        lr,
        alpha: 0.1,
        use_recipe_loss: false,
        scheduled_sampling: ScheduledSampling {
            enabled: ss,
            prob: 0.5,
            start_epoch: 5,
        },
        seed: 42,
        clip_norm: 5.0,
        no_ing: false,
        frame_stride: 5,
    };
    let params = ModelParams::init(config, cfg.seed);
    let mut trainer = Trainer::new(params, train.clone(), vec![], cfg);
    let initial = trainer.evaluate_mean_ld(&train).unwrap().unwrap();
    println!("embed={embed} hidden={hidden} lr={lr} batch={batch} ss={ss}");
    println!("initial mean L_d = {initial:.3}");
    let start = Instant::now();
    for chunk in 0..10 {
        trainer.run(20).unwrap();
        let ld = trainer.evaluate_mean_ld(&train).unwrap().unwrap();
        let rate = reproduction_rate(&trainer.params, &train);
        println!(
            "epoch {:3}  L_d {:8.3}  ratio {:.4}  repro {:.3}  elapsed {:.1}s",
            (chunk + 1) * 20,
            ld,
            ld / initial,
            rate,
            start.elapsed().as_secs_f64()
        );
        if ld / initial < 0.1 && rate >= 0.9 {
            println!("PASS at epoch {}", (chunk + 1) * 20);
            break;
        }
    }
}
