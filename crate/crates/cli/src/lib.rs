//! Command implementations behind the `procap` binary; the binary itself only
//! parses arguments and maps errors to exit codes.

pub mod commands;
pub mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "procap",
    version,
    about = "Learn recipe structure from text, ground a video encoder into the same space, and predict future instruction steps."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build word and ingredient vocabularies from a corpus.
    BuildVocab(commands::build_vocab::BuildVocabArgs),
    /// Train the text stage, or ground the video encoder on a pretrained
    /// checkpoint.
    Train(commands::train::TrainArgs),
    /// Predict future steps for each recipe prefix.
    Anticipate(commands::anticipate::AnticipateArgs),
    /// Score traces against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Sweep fixed-window widths and report next-step BLEU4.
    SweepWindow(commands::sweep::SweepArgs),
    #[command(hide = true)]
    MakeFixtures(commands::fixtures::MakeFixturesArgs),
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::BuildVocab(args) => commands::build_vocab::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Anticipate(args) => commands::anticipate::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::SweepWindow(args) => commands::sweep::run(args),
        Command::MakeFixtures(args) => commands::fixtures::run(args),
    }
}
