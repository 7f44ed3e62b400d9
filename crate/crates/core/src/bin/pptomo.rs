use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pptomo::config::{bundled_dimer, bundled_fmo_style};
use pptomo::deconv::{DeconvConfig, StageMethod};
use pptomo::regularize::{Penalty, SelectorConfig, SelectorMethod};
use pptomo::run::{self, load_config, ModelInput, ReproduceTarget, Severity};
use pptomo::{Error, Result};

/// Pump-probe deconvolution, dimer state tomography and inversion feasibility.
///
/// Thread count defaults to PPTOMO_THREADS when set.
#[derive(Parser)]
#[command(name = "pptomo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model JSON; the bundled model for the command when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Command configuration JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set ensemble.n_samples=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate heterodyne signals and the true response.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seeds both the ensemble and the detection noise.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Deconvolve signals into a response estimate.
    InvertResponse {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate` (or measured data in the same schema).
        #[arg(long)]
        input: PathBuf,
        /// Probe envelope samples (t_fs, re, im); the simulated probe otherwise.
        #[arg(long)]
        probe: Option<PathBuf>,
        #[arg(long, value_parser = parse_method)]
        stage1: Option<StageMethod>,
        #[arg(long, value_parser = parse_method)]
        stage2: Option<StageMethod>,
        #[arg(long, value_parser = parse_penalty)]
        penalty: Option<Penalty>,
        #[arg(long, value_parser = parse_selector)]
        selector: Option<SelectorMethod>,
        /// Weight for `--selector fixed`.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct the dimer Bloch vector from a response surface.
    Tomography {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        response: PathBuf,
        /// Response at the normalization delay.
        #[arg(long)]
        long_response: Option<PathBuf>,
        /// Known Bloch trajectory for fidelity scoring.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Singular-value spectra of the global pump-probe map.
    Feasibility {
        #[command(flatten)]
        common: Common,
    },
    /// Species-associated spectra of one scenario.
    SpeciesSpectra {
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate a table or figure data set.
    Reproduce {
        #[arg(value_enum)]
        target: ReproduceTarget,
        #[command(flatten)]
        common: Common,
        /// Aggregate model for the feasibility figures.
        #[arg(long)]
        aggregate: Option<PathBuf>,
    },
    /// Dry-run checks of a simulate/invert configuration.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Deconvolution configuration JSON.
        #[arg(long)]
        deconv: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> std::result::Result<StageMethod, String> {
    StageMethod::parse(s).map_err(|e| e.to_string())
}

fn parse_penalty(s: &str) -> std::result::Result<Penalty, String> {
    Penalty::parse(s).map_err(|e| e.to_string())
}

fn parse_selector(s: &str) -> std::result::Result<SelectorMethod, String> {
    SelectorMethod::parse(s).map_err(|e| e.to_string())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, seed } => {
            let model = ModelInput::load(common.model.as_deref(), bundled_dimer)?;
            let mut spec = load_config(common.config.as_deref(), run::default_experiment(&model), &common.overrides)?;
            if let Some(s) = seed {
                spec.ensemble.seed = s;
                spec.noise_seed = s;
            }
            run::simulate(&model, &spec, &common.out)?;
        }
        Command::InvertResponse {
            common,
            input,
            probe,
            stage1,
            stage2,
            penalty,
            selector,
            lambda,
            seed,
        } => {
            let mut cfg = load_config(common.config.as_deref(), DeconvConfig::default(), &common.overrides)?;
            for stage in [&mut cfg.stage1, &mut cfg.stage2] {
                if let Some(p) = penalty {
                    stage.penalty = p;
                }
                if let Some(m) = selector {
                    stage.selector.method = m;
                }
                if let Some(l) = lambda {
                    stage.selector = SelectorConfig {
                        fixed_lambda: l,
                        ..stage.selector.clone()
                    };
                }
            }
            if let Some(m) = stage1 {
                cfg.stage1.method = m;
            }
            if let Some(m) = stage2 {
                cfg.stage2.method = m;
            }
            run::invert_response(&input, probe.as_deref(), &cfg, seed, &common.out)?;
        }
        Command::Tomography {
            common,
            response,
            long_response,
            truth,
        } => {
            let model = ModelInput::load(common.model.as_deref(), bundled_dimer)?;
            let cfg = load_config(common.config.as_deref(), run::TomographyConfig::default(), &common.overrides)?;
            let inputs = run::TomographyInputs {
                response: &response,
                long_response: long_response.as_deref(),
                truth: truth.as_deref(),
            };
            run::tomography(&model, &inputs, &cfg, &common.out)?;
        }
        Command::Feasibility { common } => {
            let model = ModelInput::load(common.model.as_deref(), bundled_fmo_style)?;
            let cfg = load_config(common.config.as_deref(), run::FeasibilityConfig::default(), &common.overrides)?;
            run::feasibility(&model, &cfg, &common.out)?;
        }
        Command::SpeciesSpectra { common } => {
            let model = ModelInput::load(common.model.as_deref(), bundled_fmo_style)?;
            let cfg = load_config(common.config.as_deref(), run::SpeciesConfig::default(), &common.overrides)?;
            run::species(&model, &cfg, &common.out)?;
        }
        Command::Reproduce { target, common, aggregate } => {
            let dimer = ModelInput::load(common.model.as_deref(), bundled_dimer)?;
            let agg = ModelInput::load(aggregate.as_deref(), bundled_fmo_style)?;
            let cfg = load_config(common.config.as_deref(), run::ReproduceConfig::default(), &common.overrides)?;
            run::reproduce(target, &dimer, &agg, &cfg, &common.out)?;
        }
        Command::Validate { common, deconv } => {
            let model = ModelInput::load(common.model.as_deref(), bundled_dimer)?;
            let spec = load_config(common.config.as_deref(), run::default_experiment(&model), &common.overrides)?;
            let deconv = load_config(deconv.as_deref(), DeconvConfig::default(), &[])?;
            let diags = run::validate(&model, &spec, &deconv)?;
            for d in &diags {
                let tag = match d.severity {
                    Severity::Warning => "warning",
                    Severity::Error => "error",
                };
                println!("{tag}: {}", d.message);
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Err(Error::Config("validation failed".into()));
            }
            if diags.is_empty() {
                println!("ok");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("PPTOMO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
