//! Command-line entry point. Every subcommand is deterministic given its
//! seed and inputs, and every run that produces files writes its fully
//! resolved settings next to them as `config.txt`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/input error,
//! 4 numeric failure.

mod cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "relaynet",
    version,
    about = "Retinal OCT layer and fluid segmentation: train, segment, evaluate, gradient-check, and generate phantoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a labeled dataset
    Train(cmd::train::TrainArgs),
    /// Segment scans with a trained checkpoint
    Segment(cmd::segment::SegmentArgs),
    /// Compare predicted label maps against ground truth
    Eval(cmd::eval::EvalArgs),
    /// Check every analytic gradient against finite differences
    Gradcheck(cmd::gradcheck::GradcheckArgs),
    /// Generate a synthetic layered-retina dataset
    Phantom(cmd::phantom::PhantomArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd::train::run(args),
        Command::Segment(args) => cmd::segment::run(args),
        Command::Eval(args) => cmd::eval::run(args),
        Command::Gradcheck(args) => cmd::gradcheck::run(args),
        Command::Phantom(args) => cmd::phantom::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
