//! Config-file / flag merging. Keys mirror flags one-to-one; a flag typed on
//! the command line beats the file, the file beats the flag default.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::Deserialize;
use xr_core::coarse::{FusionMode, FusionOptions};
use xr_core::domain::{validate_config, PipelineConfig};
use xr_core::exec::ExecMode;
use xr_core::fine::{VerifyMode, VerifyOptions};
use xr_core::pipeline::RunOptions;

use crate::args::{ConfigArgs, FusionArg, VerifyArg};
use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    lambda: Option<f64>,
    z: Option<f64>,
    k: Option<usize>,
    k_prime: Option<usize>,
    n_questions: Option<usize>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_inflight: Option<usize>,
    query_parallelism: Option<usize>,
    fusion: Option<FusionArg>,
    verify_mode: Option<VerifyArg>,
    failure_threshold: Option<f64>,
    sequential: Option<bool>,
    disable_text_sim: Option<bool>,
    disable_vision_sim: Option<bool>,
    disable_text_q: Option<bool>,
    disable_vision_q: Option<bool>,
    bypass_select: Option<bool>,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Effective settings of one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: PipelineConfig,
    pub options: RunOptions,
}

pub fn resolve(args: &ConfigArgs, matches: &ArgMatches) -> Result<Settings, CliError> {
    let file = match &args.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    let typed = |id: &str| matches.value_source(id) == Some(ValueSource::CommandLine);
    macro_rules! pick {
        ($field:ident) => {
            match file.$field {
                Some(v) if !typed(stringify!($field)) => v,
                _ => args.$field,
            }
        };
    }

    let config = validate_config(PipelineConfig {
        lambda: pick!(lambda),
        z: pick!(z),
        k: pick!(k),
        k_prime: pick!(k_prime),
        n_questions: pick!(n_questions),
        temperature: pick!(temperature),
        top_p: pick!(top_p),
        max_inflight: pick!(max_inflight),
    })
    .map_err(|e| CliError::Usage(format!("invalid configuration: {}", e.0)))?;

    let failure_threshold = pick!(failure_threshold);
    if !(0.0..=1.0).contains(&failure_threshold) {
        return Err(CliError::Usage("failure_threshold outside [0, 1]".into()));
    }
    let query_parallelism = pick!(query_parallelism);
    if query_parallelism == 0 {
        return Err(CliError::Usage("query_parallelism must be at least 1".into()));
    }
    let options = RunOptions {
        exec: if pick!(sequential) { ExecMode::Sequential } else { ExecMode::Parallel },
        fusion: FusionOptions {
            mode: match pick!(fusion) {
                FusionArg::Rrf => FusionMode::Rrf,
                FusionArg::Sum => FusionMode::Sum,
            },
            use_text: !pick!(disable_text_sim),
            use_vision: !pick!(disable_vision_sim),
        },
        verify: VerifyOptions {
            mode: match pick!(verify_mode) {
                VerifyArg::Independent => VerifyMode::Independent,
                VerifyArg::Conjunctive => VerifyMode::Conjunctive,
            },
            use_text: !pick!(disable_text_q),
            use_vision: !pick!(disable_vision_q),
        },
        bypass_select: pick!(bypass_select),
        query_parallelism,
        failure_threshold,
    };
    options.check().map_err(|e| CliError::Usage(format!("invalid configuration: {}", e.0)))?;
    Ok(Settings { config, options })
}
