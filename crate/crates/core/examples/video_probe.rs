//! Scratch probe: text pretrain then VE grounding on synthetic features.
//! Run: cargo run --release -p procap-core --example video_probe -- <video_lr> <video_epochs>

use procap_core::corpus::{load_corpus, IngredientVocabulary, Split, Vocabulary};
use procap_core::fixtures::generate_toy_corpus;
use procap_core::model::{ModelConfig, ModelParams, Stage};
use procap_core::training::{prepare_recipes, ScheduledSampling, TrainConfig, Trainer};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let video_lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.005);
    let video_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(25);

    let dir = tempfile::tempdir().unwrap();
    let fx = generate_toy_corpus(dir.path(), 1).unwrap();
    let recipes = load_corpus(&fx.corpus).unwrap();
    let vocab = Vocabulary::build(&recipes, 1000).unwrap();
    let iv = IngredientVocabulary::build(&recipes);
    let train_recipes: Vec<_> = recipes.iter().filter(|r| r.split == Split::Train).cloned().collect();
    let train_text = prepare_recipes(&train_recipes, &vocab, &iv, false).unwrap();
    let train_video = prepare_recipes(&train_recipes, &vocab, &iv, true).unwrap();

    let config = ModelConfig {
        vocab_size: vocab.size(),
        ingredient_count: iv.size(),
        embed_dim: 32,
        enc_hidden: 48,
        feature_dim: procap_core::fixtures::TOY_FEATURE_DIM,
    };
    let mut cfg = TrainConfig {
        stage: Stage::Text,
        epochs: 120,
        batch_size: 2,
        lr: 0.005,
        alpha: 0.1,
        use_recipe_loss: false,
        scheduled_sampling: ScheduledSampling::default(),
        seed: 42,
        clip_norm: 5.0,
        no_ing: false,
        frame_stride: 5,
    };
    let params = ModelParams::init(config, cfg.seed);
    let mut trainer = Trainer::new(params, train_text.clone(), vec![], cfg.clone());
    trainer.run(120).unwrap();
    println!("text L_d after 120 epochs: {:.3}", trainer.evaluate_mean_ld(&train_text).unwrap().unwrap());
    let (pretrained, _, _) = trainer.finish();

    cfg.stage = Stage::Video;
    cfg.lr = video_lr;
    cfg.epochs = video_epochs;
    let mut vtrainer = Trainer::new(pretrained, train_video.clone(), vec![], cfg);
    let initial = vtrainer.evaluate_mean_ld(&train_video).unwrap().unwrap();
    println!("video-stage initial L_d = {initial:.3}");
    let start = std::time::Instant::now();
    for e in 0..video_epochs {
        vtrainer.run(1).unwrap();
        if (e + 1) % 5 == 0 {
            let ld = vtrainer.evaluate_mean_ld(&train_video).unwrap().unwrap();
            println!("video epoch {:2}  L_d {:8.3}  ratio {:.3}  {:.1}s", e + 1, ld, ld / initial, start.elapsed().as_secs_f64());
        }
    }
}
