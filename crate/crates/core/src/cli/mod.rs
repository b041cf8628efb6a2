//! Batch entry points behind the `ocmot` binary: one JSON run
//! configuration, `key=value` overrides, and one function per subcommand.
//!
//! Errors map to exit codes with [`exit_code`]: configuration and usage
//! problems (including missing input files) give 2, everything else 1.

mod commands;
mod config;
mod viz;

pub use commands::{cmd_eval, cmd_gen, cmd_track, cmd_train, cmd_viz, curve_path, track_all};
pub use config::{set_path, Paths, RunConfig, TrackMethod, TrackSettings, VizConfig};
pub use viz::{render_frame, track_color};

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Gen,
    Train,
    Track,
    Eval,
    Viz,
}

/// Builds the run configuration from an optional file, a seed override
/// and `--set` overrides, in that order.
pub fn build_config<S: AsRef<str>>(file: Option<&Path>, seed: Option<u64>, sets: &[S]) -> Result<RunConfig> {
    let base = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(sets)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

pub fn run(cmd: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    match cmd {
        Command::Gen => cmd_gen(cfg, out),
        Command::Train => cmd_train(cfg, out),
        Command::Track => cmd_track(cfg, out),
        Command::Eval => cmd_eval(cfg, out),
        Command::Viz => cmd_viz(cfg, out),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}
