//! Command pipelines behind the `pptomo` binary: configuration resolution,
//! artifact writing and run manifests.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bath::BathSpec;
use crate::benchmark::{selector_comparison, stage_comparison, Problem};
use crate::config::{apply_overrides, read_text, ModelFile};
use crate::deconv::{deconvolve, rmse, DeconvConfig};
use crate::error::{Error, Result};
use crate::feasibility::{
    continuous_grid, scenario_operators, singular_spectrum, species_amplitude_matrix, uncertainty_bands,
    AveragingConfig, PumpProbeMap, Scenario,
};
use crate::forward::{simulate_experiment, ExperimentSpec, SignalPair};
use crate::io::{read_real_surface, read_response, write_json, write_real_surface, write_response, Manifest, Table};
use crate::model::{diagonalize, EnsembleSpec, HamiltonianUncertainty, SiteModel};
use crate::pulse::Pulse;
use crate::response::species_spectra;
use crate::tomography::{
    build_plan, disorder_sweep, ensemble_projector, exact_tomography, exciton_frequencies, reconstruct, sample_response,
    Channel, TomographySetup, DEFAULT_NORMALIZATION_DELAY,
};
use crate::units::TWO_PI_C;

/// A model file with the path it came from (`None` for bundled models).
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub file: ModelFile,
    pub path: Option<PathBuf>,
}

impl ModelInput {
    pub fn load(path: Option<&Path>, fallback: fn() -> ModelFile) -> Result<Self> {
        Ok(match path {
            Some(p) => Self {
                file: ModelFile::load(p)?,
                path: Some(p.to_path_buf()),
            },
            None => Self {
                file: fallback(),
                path: None,
            },
        })
    }

    pub fn model(&self) -> Result<SiteModel> {
        self.file.site_model()
    }

    /// The model's own bath if it has one, else `default`.
    pub fn bath_or(&self, default: BathSpec) -> BathSpec {
        self.file.bath.unwrap_or(default)
    }

    fn record(&self, manifest: &mut Manifest) -> Result<()> {
        match &self.path {
            Some(p) => manifest.add_input(p),
            None => Ok(()),
        }
    }
}

/// Resolves a command configuration: the JSON file (or the default), then
/// `key=value` overrides, then strict deserialization.
pub fn load_config<T: Serialize + DeserializeOwned>(path: Option<&Path>, default: T, overrides: &[String]) -> Result<T> {
    let mut doc = match path {
        Some(p) => serde_json::from_str::<Value>(&read_text(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => serde_json::to_value(&default)?,
    };
    apply_overrides(&mut doc, overrides)?;
    let where_ = path.map_or("configuration".to_string(), |p| p.display().to_string());
    serde_json::from_value(doc).map_err(|e| Error::Config(format!("{where_}: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Default simulate configuration for a model: the reference experiment,
/// the model's bath when it has one, and a 10 ps normalization delay.
pub fn default_experiment(model: &ModelInput) -> ExperimentSpec {
    let mut spec = ExperimentSpec::reference();
    spec.bath = model.bath_or(spec.bath);
    spec.normalization_delay = Some(DEFAULT_NORMALIZATION_DELAY);
    spec
}

fn bloch_table(delays: &[f64], bloch: &[[f64; 4]]) -> Table {
    let mut t = Table::new(
        "bloch-true",
        "delay fs; ensemble-mean Bloch vector r0..r3",
        ["delay_fs", "r0", "r1", "r2", "r3"].map(String::from).to_vec(),
    );
    for (d, b) in delays.iter().zip(bloch) {
        t.push_numbers(&[*d, b[0], b[1], b[2], b[3]]);
    }
    t
}

pub fn simulate(model: &ModelInput, spec: &ExperimentSpec, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    let m = model.model()?;
    let sim = simulate_experiment(&m, spec)?;
    let g = &spec.grid;
    let mut manifest = Manifest::new("simulate", Some(spec.noise_seed), json!({ "experiment": spec, "model": model.file }));
    model.record(&mut manifest)?;
    write_real_surface(&out.join("signal_abs.csv"), "signal-absorptive", &g.probe_freqs, &g.delays, &sim.signals.absorptive)?;
    write_real_surface(&out.join("signal_disp.csv"), "signal-dispersive", &g.probe_freqs, &g.delays, &sim.signals.dispersive)?;
    write_response(&out.join("response_true.csv"), "response-true", &sim.truth.response.restrict(&g.delays)?)?;
    write_json(&out.join("experiment.json"), spec)?;
    write_json(&out.join("model.json"), &model.file)?;
    manifest.outputs = ["signal_abs.csv", "signal_disp.csv", "response_true.csv", "experiment.json", "model.json"]
        .map(String::from)
        .to_vec();
    if let Some(b) = &sim.truth.mean_bloch {
        let pad = spec.truth_padding();
        bloch_table(&g.delays, &b[pad..pad + g.delays.len()]).write(&out.join("bloch_true.csv"))?;
        manifest.outputs.push("bloch_true.csv".into());
    }
    if let Some(long) = &sim.long_delay {
        write_response(&out.join("response_long.csv"), "response-long", &long.response)?;
        manifest.outputs.push("response_long.csv".into());
        if let Some(b) = &long.mean_bloch {
            bloch_table(&long.response.delays, b).write(&out.join("bloch_long.csv"))?;
            manifest.outputs.push("bloch_long.csv".into());
        }
    }
    write_json(
        &out.join("simulation_report.json"),
        &json!({ "noise_sigma": sim.noise_sigma, "warnings": sim.warnings }),
    )?;
    manifest.outputs.push("simulation_report.json".into());
    manifest.write(out)?;
    Ok(manifest)
}

/// Probe characterization: CSV with `t_fs`, `re`, `im` envelope samples.
pub fn read_probe(path: &Path, center_freq: f64) -> Result<Pulse> {
    let t = Table::read(path)?;
    let (ct, cr, ci) = (t.column("t_fs")?, t.column("re")?, t.column("im")?);
    let rows = t.numbers()?;
    Pulse::tabulated(
        rows.iter().map(|r| r[ct]).collect(),
        rows.iter().map(|r| Complex64::new(r[cr], r[ci])).collect(),
        center_freq,
        1.0,
    )
}

pub fn invert_response(input: &Path, probe_file: Option<&Path>, cfg: &DeconvConfig, seed: Option<u64>, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    let spec_path = input.join("experiment.json");
    let spec: ExperimentSpec = serde_json::from_str(&read_text(&spec_path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    let probe = match probe_file {
        Some(p) => read_probe(p, spec.probe.center_freq)?,
        None => spec.probe.clone(),
    };
    let abs_path = input.join("signal_abs.csv");
    let disp_path = input.join("signal_disp.csv");
    let (freqs, delays, absorptive) = read_real_surface(&abs_path)?;
    let (f2, d2, dispersive) = read_real_surface(&disp_path)?;
    if f2 != freqs || d2 != delays {
        return Err(Error::Config("signal_abs.csv and signal_disp.csv use different grids".into()));
    }
    let signals = SignalPair {
        freqs,
        delays,
        absorptive,
        dispersive,
    };
    let mut manifest = Manifest::new("invert-response", seed, json!({ "deconvolution": cfg }));
    for p in [&spec_path, &abs_path, &disp_path] {
        manifest.add_input(p)?;
    }
    if let Some(p) = probe_file {
        manifest.add_input(p)?;
    }
    let d = deconvolve(&signals, &probe, &probe, cfg)?;
    let est = d.response.restrict(&signals.delays)?;
    write_response(&out.join("response_est.csv"), "response-estimate", &est)?;
    let truth_path = input.join("response_true.csv");
    let error = if truth_path.exists() {
        manifest.add_input(&truth_path)?;
        Some(rmse(&est, &read_response(&truth_path)?)?)
    } else {
        None
    };
    let masked: Vec<f64> = d
        .polarization
        .freqs
        .iter()
        .zip(&d.polarization.supported)
        .filter(|(_, s)| !**s)
        .map(|(w, _)| *w)
        .collect();
    let report = json!({
        "stage1": d.polarization.selections,
        "stage2": d.stage2_selections.iter().zip(&est.freqs).map(|(s, w)| json!({
            "freq_cm1": w, "lambda": s.lambda, "score": s.score, "converged": s.converged,
        })).collect::<Vec<_>>(),
        "masked_freqs_cm1": masked,
        "absorptive_only": d.polarization.absorptive_only,
        "rmse_vs_truth": error,
    });
    write_json(&out.join("inversion_report.json"), &report)?;
    manifest.outputs = vec!["response_est.csv".into(), "inversion_report.json".into()];
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    /// Used when the model file carries no bath.
    pub bath: BathSpec,
    /// Members averaged into the projector; 1 with zero disorder.
    pub disorder_samples: usize,
    pub seed: u64,
    pub channels: Vec<Channel>,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            bath: BathSpec::reference(),
            disorder_samples: 1000,
            seed: 7,
            channels: Channel::both(),
        }
    }
}

fn read_bloch(path: &Path) -> Result<Vec<(f64, [f64; 4])>> {
    let t = Table::read(path)?;
    let cols = [t.column("delay_fs")?, t.column("r0")?, t.column("r1")?, t.column("r2")?, t.column("r3")?];
    Ok(t.numbers()?
        .iter()
        .map(|r| (r[cols[0]], [r[cols[1]], r[cols[2]], r[cols[3]], r[cols[4]]]))
        .collect())
}

pub struct TomographyInputs<'a> {
    pub response: &'a Path,
    /// Response at the normalization delay; the last delay of `response` otherwise.
    pub long_response: Option<&'a Path>,
    pub truth: Option<&'a Path>,
}

pub fn tomography(model: &ModelInput, inputs: &TomographyInputs, cfg: &TomographyConfig, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    let m = model.model()?;
    let bath = model.bath_or(cfg.bath);
    let response = read_response(inputs.response)?;
    let mut manifest = Manifest::new("tomography", Some(cfg.seed), json!({ "tomography": cfg, "bath": bath }));
    model.record(&mut manifest)?;
    manifest.add_input(inputs.response)?;
    let mut warnings = Vec::new();
    let long = match inputs.long_response {
        Some(p) => {
            manifest.add_input(p)?;
            read_response(p)?
        }
        None => {
            let last = response.delays[response.delays.len() - 1];
            warnings.push(format!("no long-delay response given; normalizing at the last delay {last} fs"));
            response.restrict(&[last])?
        }
    };
    let freqs = exciton_frequencies(&m)?;
    let mut grid = freqs.to_vec();
    grid.sort_by(f64::total_cmp);
    let n = if m.disorder_sigma().iter().all(|s| *s == 0.0) { 1 } else { cfg.disorder_samples };
    let projector = ensemble_projector(&m, &bath, &EnsembleSpec::new(n, cfg.seed), &grid)?;
    let plan = build_plan(&projector, &freqs, &cfg.channels)?;
    let long_values = sample_response(&long, &freqs)?.pop().unwrap_or_default();
    let truth: Option<Vec<[f64; 4]>> = match inputs.truth {
        Some(p) => {
            manifest.add_input(p)?;
            let table = read_bloch(p)?;
            let picked = response
                .delays
                .iter()
                .map(|d| {
                    table
                        .iter()
                        .find(|(t, _)| (t - d).abs() < 1e-6)
                        .map(|(_, b)| *b)
                        .ok_or_else(|| Error::Config(format!("truth has no row for delay {d} fs")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(picked)
        }
        None => None,
    };
    let result = reconstruct(&response, &plan, &long_values, truth.as_deref())?;
    let mut t = Table::new(
        "bloch-trajectory",
        "delay fs; r1/r0 r2/r0 r3/r0; fidelity (NaN without truth)",
        ["delay_fs", "r1_over_r0", "r2_over_r0", "r3_over_r0", "fidelity"].map(String::from).to_vec(),
    );
    for (k, d) in result.delays.iter().enumerate() {
        let f = result.fidelity.as_ref().map_or(f64::NAN, |f| f[k]);
        let v = result.normalized[k];
        t.push_numbers(&[*d, v[0], v[1], v[2], f]);
    }
    t.write(&out.join("bloch_trajectory.csv"))?;
    write_json(
        &out.join("tomography_report.json"),
        &json!({
            "sample_freqs_cm1": plan.sample_freqs,
            "condition_full": plan.condition_full,
            "condition_fixed_population": plan.condition_fixed_population,
            "r0": result.normalization.r0,
            "no_excitation": result.normalization.no_excitation,
            "unphysical_delays": result.unphysical_delays,
            "worst_fidelity": result.worst_fidelity(),
            "mean_fidelity": result.mean_fidelity(),
            "warnings": warnings,
        }),
    )?;
    manifest.outputs = vec!["bloch_trajectory.csv".into(), "tomography_report.json".into()];
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibilityConfig {
    pub scenarios: Vec<Scenario>,
    pub averaging: AveragingConfig,
    pub uncertainty: HamiltonianUncertainty,
    /// Hamiltonian draws for the species bands; 0 skips them.
    pub draws: usize,
    /// Disorder members per draw.
    pub band_disorder_samples: usize,
    pub band_seed: u64,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::cumulative_sequence(),
            averaging: AveragingConfig::default(),
            uncertainty: HamiltonianUncertainty {
                site_sigma: 20.0,
                coupling_relative_sigma: 0.1,
            },
            draws: 100,
            band_disorder_samples: 100,
            band_seed: 23,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub rows: usize,
    pub condition: f64,
    pub rank_deficient: bool,
}

/// Probe grid shared by every scenario: the finest (lowest-temperature) one.
fn shared_grid(m: &SiteModel, bath: &BathSpec, scenarios: &[Scenario]) -> Result<Vec<f64>> {
    let coldest = scenarios
        .iter()
        .map(|s| s.temperature)
        .fold(f64::INFINITY, f64::min);
    let t = if coldest.is_finite() { coldest } else { bath.temperature };
    continuous_grid(m, &bath.with_temperature(t))
}

fn singular_table(maps: &[PumpProbeMap]) -> (Table, Vec<ScenarioSummary>) {
    let mut t = Table::new(
        "singular-values",
        "scenario index; i (1-based); sigma_i/sigma_1; sigma_i",
        ["scenario", "label", "i", "normalized", "absolute"].map(String::from).to_vec(),
    );
    let mut summary = Vec::new();
    for (k, map) in maps.iter().enumerate() {
        let s = singular_spectrum(map);
        for (i, (n, a)) in s.normalized.iter().zip(&s.values).enumerate() {
            t.rows.push(vec![k.to_string(), map.label.clone(), (i + 1).to_string(), n.to_string(), a.to_string()]);
        }
        summary.push(ScenarioSummary {
            label: map.label.clone(),
            rows: map.matrix.nrows(),
            condition: s.condition,
            rank_deficient: s.rank_deficient,
        });
    }
    (t, summary)
}

fn amplitude_rows(t: &mut Table, scenario: &str, block: &str, a: &DMatrix<f64>) {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let kind = match i.cmp(&j) {
                std::cmp::Ordering::Equal => "population",
                std::cmp::Ordering::Less => "real-coherence",
                std::cmp::Ordering::Greater => "imag-coherence",
            };
            t.rows.push(vec![
                scenario.to_string(),
                block.to_string(),
                (i + 1).to_string(),
                (j + 1).to_string(),
                kind.to_string(),
                a[(i, j)].to_string(),
            ]);
        }
    }
}

fn amplitude_table() -> Table {
    Table::new(
        "species-amplitudes",
        "peak |absorptive| over the probe grid per state element; row/col 1-based exciton indices",
        ["scenario", "block", "row", "col", "kind", "amplitude"].map(String::from).to_vec(),
    )
}

pub fn feasibility(model: &ModelInput, cfg: &FeasibilityConfig, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    if cfg.scenarios.is_empty() {
        return Err(Error::Config("feasibility needs at least one scenario".into()));
    }
    let m = model.model()?;
    let bath = model.bath_or(BathSpec::reference());
    let grid = shared_grid(&m, &bath, &cfg.scenarios)?;
    let mut manifest = Manifest::new("feasibility", Some(cfg.averaging.seed), json!({ "feasibility": cfg, "bath": bath }));
    model.record(&mut manifest)?;
    let mut maps = Vec::new();
    let mut amps = amplitude_table();
    for sc in &cfg.scenarios {
        let ops = scenario_operators(&m, &bath, sc, &grid, &cfg.averaging)?;
        for (block, op) in &ops {
            amplitude_rows(&mut amps, &sc.label, block, &species_amplitude_matrix(op)?);
        }
        let ops: Vec<_> = ops.into_iter().map(|(_, o)| o).collect();
        maps.push(PumpProbeMap::from_operators(&sc.label, &ops, sc.channels)?);
    }
    let (sv, summary) = singular_table(&maps);
    sv.write(&out.join("singular_values.csv"))?;
    amps.write(&out.join("species_amplitudes.csv"))?;
    manifest.outputs = vec!["singular_values.csv".into(), "species_amplitudes.csv".into()];
    if cfg.draws > 0 {
        let avg = AveragingConfig {
            disorder_samples: cfg.band_disorder_samples,
            seed: cfg.averaging.seed,
        };
        let bands = uncertainty_bands(&m, &bath, &cfg.uncertainty, cfg.draws, &grid, &avg, cfg.band_seed)?;
        bands_table(&bands, &grid).write(&out.join("species_bands.csv"))?;
        manifest.outputs.push("species_bands.csv".into());
    }
    write_json(&out.join("feasibility_report.json"), &json!({ "grid_points": grid.len(), "scenarios": summary }))?;
    manifest.outputs.push("feasibility_report.json".into());
    manifest.write(out)?;
    Ok(manifest)
}

fn bands_table(bands: &[crate::feasibility::SpeciesBand], grid: &[f64]) -> Table {
    let mut t = Table::new(
        "species-bands",
        "probe frequency cm^-1; nominal and 2.5/97.5 percentile absorptive (Im) and dispersive (Re) parts",
        [
            "species", "freq_cm1", "abs_nominal", "abs_lower", "abs_upper", "disp_nominal", "disp_lower", "disp_upper",
        ]
        .map(String::from)
        .to_vec(),
    );
    for b in bands {
        for (i, w) in grid.iter().enumerate() {
            t.rows.push(
                std::iter::once(b.label.clone())
                    .chain(
                        [
                            *w,
                            b.nominal_absorptive[i],
                            b.lower_absorptive[i],
                            b.upper_absorptive[i],
                            b.nominal_dispersive[i],
                            b.lower_dispersive[i],
                            b.upper_dispersive[i],
                        ]
                        .iter()
                        .map(|v| v.to_string()),
                    )
                    .collect(),
            );
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub scenario: Scenario,
    pub averaging: AveragingConfig,
}

impl Default for SpeciesConfig {
    fn default() -> Self {
        let mut scenario = Scenario::cumulative_sequence()[2].clone();
        scenario.label = "isotropic ensemble, 77 K".into();
        Self {
            scenario,
            averaging: AveragingConfig::default(),
        }
    }
}

pub fn species(model: &ModelInput, cfg: &SpeciesConfig, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    let m = model.model()?;
    let bath = model.bath_or(BathSpec::reference());
    let grid = shared_grid(&m, &bath, std::slice::from_ref(&cfg.scenario))?;
    let mut manifest = Manifest::new("species-spectra", Some(cfg.averaging.seed), json!({ "species": cfg, "bath": bath }));
    model.record(&mut manifest)?;
    let mut t = Table::new(
        "species-spectra",
        "probe frequency cm^-1; absorptive = Im R, dispersive = Re R per state element",
        ["block", "species", "freq_cm1", "absorptive", "dispersive"].map(String::from).to_vec(),
    );
    let mut amps = amplitude_table();
    for (block, op) in scenario_operators(&m, &bath, &cfg.scenario, &grid, &cfg.averaging)? {
        for s in species_spectra(&op) {
            for (i, w) in grid.iter().enumerate() {
                t.rows.push(vec![
                    block.clone(),
                    s.label.clone(),
                    w.to_string(),
                    s.absorptive[i].to_string(),
                    s.dispersive[i].to_string(),
                ]);
            }
        }
        amplitude_rows(&mut amps, &cfg.scenario.label, &block, &species_amplitude_matrix(&op)?);
    }
    t.write(&out.join("species_spectra.csv"))?;
    amps.write(&out.join("species_amplitudes.csv"))?;
    manifest.outputs = vec!["species_spectra.csv".into(), "species_amplitudes.csv".into()];
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReproduceTarget {
    /// Stage-method comparison.
    Table1,
    /// Penalty and selector comparison.
    Table3,
    /// Tomography fidelity against static disorder.
    Fig3,
    /// Species spectra with Hamiltonian-uncertainty bands.
    Fig4,
    /// Singular values of the cumulative constraint scenarios.
    Fig5,
    /// Species amplitude matrices.
    Fig6,
    /// Dimer plan condition numbers.
    Conditions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceConfig {
    pub seed: u64,
    /// Noise instances for the deconvolution tables.
    pub instances: usize,
    /// Ensemble size of the simulated benchmark data.
    pub benchmark_ensemble: usize,
    /// Ensemble size per disorder width in the fidelity sweep.
    pub sweep_samples: usize,
    pub sweep_widths: Vec<f64>,
    pub feasibility: FeasibilityConfig,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            instances: 100,
            benchmark_ensemble: 200,
            sweep_samples: 10_000,
            sweep_widths: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0],
            feasibility: FeasibilityConfig::default(),
        }
    }
}

fn stat_cells(s: &crate::benchmark::Stat) -> [String; 2] {
    [s.mean.to_string(), s.std.to_string()]
}

pub fn reproduce(target: ReproduceTarget, dimer: &ModelInput, aggregate: &ModelInput, cfg: &ReproduceConfig, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new(&format!("reproduce {}", target_name(target)), Some(cfg.seed), json!({ "reproduce": cfg }));
    dimer.record(&mut manifest)?;
    let benchmark_problem = || -> Result<Problem> {
        let mut spec = default_experiment(dimer);
        spec.normalization_delay = None;
        spec.ensemble = EnsembleSpec::new(cfg.benchmark_ensemble, cfg.seed);
        Problem::simulate(dimer.model()?, spec)
    };
    match target {
        ReproduceTarget::Table1 => {
            let rows = stage_comparison(&benchmark_problem()?, &[1e-2, 0.0], cfg.instances, cfg.seed)?;
            let mut t = Table::new(
                "table1",
                "RMSE and improvement over naive/naive (mean, sample std) per stage-method pair",
                ["noise", "stage1", "stage2", "rmse_mean", "rmse_std", "improvement_mean", "improvement_std", "instances"]
                    .map(String::from)
                    .to_vec(),
            );
            for r in &rows {
                let mut row = vec![r.noise.to_string(), r.stage1.label().into(), r.stage2.label().into()];
                row.extend(stat_cells(&r.rmse));
                row.extend(stat_cells(&r.improvement));
                row.push(r.instances.to_string());
                t.rows.push(row);
            }
            t.write(&out.join("table1.csv"))?;
            manifest.outputs.push("table1.csv".into());
        }
        ReproduceTarget::Table3 => {
            let p = benchmark_problem()?;
            let rows = selector_comparison(&p, p.upper_exciton_index(), &[1e-2, 1e-3], cfg.instances, cfg.seed)?;
            let mut t = Table::new(
                "table3",
                "delay deconvolution at the upper exciton frequency; improvement = naive MSE / regularized MSE",
                ["noise", "penalty", "selector", "lambda_mean", "lambda_std", "improvement_mean", "improvement_std", "instances"]
                    .map(String::from)
                    .to_vec(),
            );
            for r in &rows {
                let mut row = vec![r.noise.to_string(), r.penalty.label().into(), r.selector.label().into()];
                row.extend(stat_cells(&r.lambda));
                row.extend(stat_cells(&r.improvement));
                row.push(r.instances.to_string());
                t.rows.push(row);
            }
            t.write(&out.join("table3.csv"))?;
            manifest.outputs.push("table3.csv".into());
        }
        ReproduceTarget::Fig3 => {
            let m = dimer.model()?;
            let mut setup = TomographySetup::reference();
            setup.bath = dimer.bath_or(setup.bath);
            let sweep = disorder_sweep(&m, &cfg.sweep_widths, cfg.sweep_samples, cfg.seed, &setup)?;
            let mut t = Table::new(
                "fig3-sweep",
                "disorder cm^-1; worst and mean fidelity over the delay window; r0; 3-parameter condition number",
                ["disorder_cm1", "worst_fidelity", "mean_fidelity", "r0", "condition_fixed_population"]
                    .map(String::from)
                    .to_vec(),
            );
            for p in &sweep {
                t.push_numbers(&[p.disorder, p.worst_fidelity, p.mean_fidelity, p.r0, p.condition_fixed_population]);
            }
            t.write(&out.join("fig3_sweep.csv"))?;
            let sigma = m.disorder_sigma()[0];
            let run = exact_tomography(&m, &EnsembleSpec::new(cfg.sweep_samples, cfg.seed), &setup)?;
            let mut traj = Table::new(
                "fig3-trajectory",
                "delay fs; reconstructed r/r0 and fidelity at the model's own disorder",
                ["delay_fs", "r1_over_r0", "r2_over_r0", "r3_over_r0", "fidelity"].map(String::from).to_vec(),
            );
            let fid = run.result.fidelity.clone().unwrap_or_default();
            for (k, d) in run.result.delays.iter().enumerate() {
                let v = run.result.normalized[k];
                traj.push_numbers(&[*d, v[0], v[1], v[2], fid.get(k).cloned().unwrap_or(f64::NAN)]);
            }
            traj.write(&out.join("fig3_trajectory.csv"))?;
            write_json(&out.join("fig3_report.json"), &json!({ "trajectory_disorder_cm1": sigma, "sweep": sweep }))?;
            manifest.outputs = ["fig3_sweep.csv", "fig3_trajectory.csv", "fig3_report.json"].map(String::from).to_vec();
        }
        ReproduceTarget::Fig4 | ReproduceTarget::Fig5 | ReproduceTarget::Fig6 => {
            aggregate.record(&mut manifest)?;
            let mut f = cfg.feasibility.clone();
            match target {
                ReproduceTarget::Fig4 => f.scenarios.truncate(1),
                _ => f.draws = 0,
            }
            let sub = feasibility(aggregate, &f, out)?;
            manifest.outputs = sub.outputs;
        }
        ReproduceTarget::Conditions => {
            let m = dimer.model()?;
            let bath = dimer.bath_or(BathSpec::reference());
            let freqs = exciton_frequencies(&m)?;
            let mut grid = freqs.to_vec();
            grid.sort_by(f64::total_cmp);
            let mut t = Table::new(
                "conditions",
                "dimer plan condition numbers, isotropic projector at the exciton frequencies",
                ["disorder_cm1", "samples", "condition_full", "condition_fixed_population"].map(String::from).to_vec(),
            );
            for (w, n) in [(0.0, 1), (m.disorder_sigma()[0], cfg.sweep_samples.min(2000))] {
                let p = ensemble_projector(&m.clone().with_disorder(w), &bath, &EnsembleSpec::new(n, cfg.seed), &grid)?;
                let plan = build_plan(&p, &freqs, &Channel::both())?;
                t.push_numbers(&[w, n as f64, plan.condition_full, plan.condition_fixed_population]);
            }
            t.write(&out.join("conditions.csv"))?;
            manifest.outputs.push("conditions.csv".into());
        }
    }
    manifest.write(out)?;
    Ok(manifest)
}

fn target_name(t: ReproduceTarget) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

fn warn(message: String) -> Diagnostic {
    Diagnostic {
        severity: Severity::Warning,
        message,
    }
}

/// Dry-run checks of a simulate/invert configuration. Invalid inputs are
/// returned as errors; questionable ones as warnings.
pub fn validate(model: &ModelInput, spec: &ExperimentSpec, deconv: &DeconvConfig) -> Result<Vec<Diagnostic>> {
    let m = model.model()?;
    spec.validate()?;
    deconv.stage1.selector.validate()?;
    deconv.stage2.selector.validate()?;
    let mut out = Vec::new();
    let g = &spec.grid;
    let step = g.delay_step().unwrap_or(f64::NAN);
    // Every oscillation in the rotating frame must be sampled above Nyquist.
    let energies = diagonalize(&m).one_exciton_energies;
    let span = energies
        .iter()
        .chain(&g.probe_freqs)
        .map(|e| (e - g.rotating_frame_freq).abs())
        .fold(0.0, f64::max);
    if span > 0.0 {
        let nyquist = 1.0 / (2.0 * span * TWO_PI_C / std::f64::consts::TAU);
        if step >= nyquist {
            out.push(warn(format!(
                "delay step {step:.2} fs undersamples detunings up to {span:.0} cm^-1 (Nyquist step {nyquist:.2} fs)"
            )));
        }
        if spec.pump_step_fs >= nyquist / 5.0 {
            out.push(warn(format!(
                "pump step {:.2} fs is coarse for detunings up to {span:.0} cm^-1",
                spec.pump_step_fs
            )));
        }
    }
    // Covers the probe-only rule too: fwhm_pr > t0/1.5 implies t0 < 1.5·(fwhm_pu + fwhm_pr).
    out.extend(spec.overlap_warning().map(warn));
    let (below, above) = deconv.padding(&spec.probe, step);
    if g.delays.len() < 8 {
        out.push(warn(format!("{} delays is too few for the periodogram selector", g.delays.len())));
    }
    if below + above > 4 * g.delays.len() {
        out.push(warn(format!(
            "reconstruction pads {below}+{above} points onto {} delays; the delay problem is badly underdetermined",
            g.delays.len()
        )));
    }
    for (label, s) in [("stage 1", &deconv.stage1.selector), ("stage 2", &deconv.stage2.selector)] {
        if !(s.initial >= s.lambda_floor && s.initial <= s.lambda_max) {
            out.push(warn(format!("{label} selector starts outside [floor, max]")));
        }
    }
    Ok(out)
}
