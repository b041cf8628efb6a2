use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocmot::cli::{build_config, exit_code, run, Command};

#[derive(Parser)]
#[command(name = "ocmot", version, about = "Object-centric multiple object tracking")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one configuration field, e.g. `--set sim.videos=8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output path of the command (a directory for `viz`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic slot benchmark.
    Gen,
    /// Train the memory and index-merge module.
    Train,
    /// Track every video of a dataset.
    Track,
    /// Score tracklets against ground truth.
    Eval,
    /// Render tracklets as PNG frames.
    Viz,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cmd = match args.cmd {
        Cmd::Gen => Command::Gen,
        Cmd::Train => Command::Train,
        Cmd::Track => Command::Track,
        Cmd::Eval => Command::Eval,
        Cmd::Viz => Command::Viz,
    };
    let result = build_config(args.config.as_deref(), args.seed, &args.sets)
        .and_then(|cfg| run(cmd, &cfg, args.out.as_deref()));
    match result {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
