//! `longline simulate`: one simulated survey with its latent escape counts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use longline::data::write_records;
use longline::sim::{simulate_dataset, write_truth, Scenario};
use longline::study::EscapeScenario;
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{fresh_seed, sidecar_path, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// No escape.
    Sc1,
    /// `p_T = p_NT = 0.2`.
    Sc2,
    /// `p_T = 0.02`, `p_NT = 0.2`.
    Sc3,
}

impl From<Preset> for EscapeScenario {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Sc1 => EscapeScenario::Sc1,
            Preset::Sc2 => EscapeScenario::Sc2,
            Preset::Sc3 => EscapeScenario::Sc3,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Escape probabilities of a standard scenario; explicit flags override them.
    #[arg(long, value_enum, default_value_t = Preset::Sc1)]
    pub preset: Preset,
    /// Target catch rate per hook-minute.
    #[arg(long, default_value_t = 5e-4)]
    pub lambda_target: f64,
    /// Non-target catch rate per hook-minute.
    #[arg(long, default_value_t = 5e-4)]
    pub lambda_nontarget: f64,
    #[arg(long)]
    pub p_target: Option<f64>,
    #[arg(long)]
    pub p_nontarget: Option<f64>,
    /// Hooks per set.
    #[arg(long, default_value_t = 220)]
    pub hooks: u64,
    #[arg(long, default_value_t = 20)]
    pub sets: usize,
    /// Soak time in minutes.
    #[arg(long, default_value_t = 120.0)]
    pub soak: f64,
    /// Replicate index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    /// Year label stamped on every set.
    #[arg(long)]
    pub year: Option<i32>,
    /// Area label stamped on every set.
    #[arg(long)]
    pub area: Option<String>,
    /// Generated and recorded in the manifest when missing.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Latent escape counts as JSON. Defaults to `<out>.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Manifest path. Defaults to a sidecar of the output.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    preset: Preset,
    scenario: &'a Scenario,
    replicate: usize,
    year: Option<i32>,
    area: Option<&'a str>,
}

impl SimulateArgs {
    pub fn scenario(&self, seed: u64) -> Scenario {
        let (pt, pnt) = EscapeScenario::from(self.preset).escapes();
        Scenario {
            lambda_target: self.lambda_target,
            lambda_nontarget: self.lambda_nontarget,
            p_target: self.p_target.unwrap_or(pt),
            p_nontarget: self.p_nontarget.unwrap_or(pnt),
            n_hooks: self.hooks,
            n_sets: self.sets,
            soak: self.soak,
            replicates: self.replicate + 1,
            seed,
            label: format!("{:?}", self.preset).to_lowercase(),
        }
    }
}

pub fn run(args: &SimulateArgs, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    let seed = args.seed.unwrap_or_else(fresh_seed);
    let scenario = args.scenario(seed);
    scenario.validate()?;
    let mut manifest = RunManifest::begin("simulate", argv);
    manifest.seed = Some(seed);
    manifest.set_config(&SimulateConfig {
        preset: args.preset,
        scenario: &scenario,
        replicate: args.replicate,
        year: args.year,
        area: args.area.as_deref(),
    });

    let mut sim = simulate_dataset(&scenario, args.replicate);
    if args.year.is_some() || args.area.is_some() {
        let records = sim
            .dataset
            .into_records()
            .into_iter()
            .map(|r| r.with_group(args.year, args.area.clone()))
            .collect();
        sim.dataset = longline::Dataset::new(records).map_err(|source| CliError::Input { path: args.out.clone(), source })?;
    }
    let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_records(&sim.dataset, BufWriter::new(file)).map_err(|source| CliError::Input { path: args.out.clone(), source })?;
    let truth_path = args.truth.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".truth.json");
        args.out.with_file_name(name)
    });
    let file = File::create(&truth_path).map_err(|e| CliError::io(&truth_path, e))?;
    write_truth(&scenario, args.replicate, &sim, BufWriter::new(file))
        .map_err(|source| CliError::Input { path: truth_path.clone(), source })?;
    manifest.add_output(&args.out)?;
    manifest.add_output(&truth_path)?;
    manifest.finish(&args.manifest.clone().unwrap_or_else(|| sidecar_path(&args.out)))?;
    writeln!(
        out,
        "wrote {} sets to {} (seed {seed}); truth in {}",
        sim.dataset.len(),
        args.out.display(),
        truth_path.display()
    )
    .map_err(|e| CliError::io("<stdout>", e))?;
    Ok(0)
}
