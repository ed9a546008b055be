mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use toroidal_core::Error;

use args::{Cli, Command};

/// Failures caused by the inputs rather than by the computation.
fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonTriangleFace { .. }
            | Error::IndexOutOfRange { .. }
            | Error::NonManifold(_)
            | Error::Genus { .. }
            | Error::Disconnected(_)
            | Error::DegenerateFace { .. }
            | Error::InvalidShape { .. }
            | Error::NotOnManifold { .. }
            | Error::RowCount { .. }
            | Error::InvalidLoop(_)
            | Error::NotSimple(_)
            | Error::Independence(_)
            | Error::Landmarks(_)
            | Error::Config(_)
            | Error::Json(_)
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Parameterize(a) => commands::parameterize_cmd(a),
        Command::Register(a) => commands::register_cmd(a),
        Command::Metrics(a) => commands::metrics_cmd(a),
        Command::Texture(a) => commands::texture_cmd(a),
        Command::Generate(a) => commands::generate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(if is_input_error(&e) { 2 } else { 1 })
        }
    }
}
