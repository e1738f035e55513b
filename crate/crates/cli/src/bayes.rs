//! `longline bayes`: posterior sampling for MEM1, MEM2 and the FULL model.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use longline::bayes::{
    identifiability_check, sample_posterior, summarize_posterior, BayesModel, BetaPrior, IdentifiabilityCheck,
    McmcConfig, PosteriorSummary, PriorSpec,
};
use longline::Dataset;
use serde::Serialize;

use crate::error::CliError;
use crate::estimate::FormatArg;
use crate::manifest::{fresh_seed, sidecar_path, RunManifest};
use crate::parse_pair;
use crate::table::{fixed, sci, TextTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Mem1,
    Mem2,
    /// All four rates and escape probabilities free; not identifiable.
    Full,
}

impl From<ModelArg> for BayesModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mem1 => BayesModel::Mem1,
            ModelArg::Mem2 => BayesModel::Mem2,
            ModelArg::Full => BayesModel::Full,
        }
    }
}

fn parse_beta(s: &str) -> Result<BetaPrior, String> {
    let (a, b) = parse_pair(s)?;
    BetaPrior::new(a, b).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct BayesArgs {
    /// Survey CSV file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Sets)]
    pub format: FormatArg,
    /// Keep only sets from this year.
    #[arg(long)]
    pub year: Option<i32>,
    /// Keep only sets from this area.
    #[arg(long)]
    pub area: Option<String>,
    #[arg(long, value_enum, default_value_t = ModelArg::Mem1)]
    pub model: ModelArg,
    /// Beta shapes `a,b` of the prior on both catch rates.
    #[arg(long, value_parser = parse_beta, default_value = "1,1", conflicts_with = "diffuse")]
    pub prior_lambda: BetaPrior,
    /// Beta shapes `a,b` of the prior on every escape probability.
    #[arg(long, value_parser = parse_beta, default_value = "1,1", conflicts_with = "diffuse")]
    pub prior_p: BetaPrior,
    /// Beta(0.1, 0.1) on every parameter.
    #[arg(long)]
    pub diffuse: bool,
    #[arg(long, default_value_t = McmcConfig::default().chains)]
    pub chains: usize,
    /// Iterations per chain, burn-in included.
    #[arg(long, default_value_t = McmcConfig::default().draws)]
    pub draws: usize,
    #[arg(long, default_value_t = McmcConfig::default().burn_in)]
    pub burn_in: usize,
    #[arg(long, default_value_t = McmcConfig::default().thin)]
    pub thin: usize,
    /// Generated and recorded in the manifest when missing.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample the prior only.
    #[arg(long)]
    pub prior_only: bool,
    /// Credible interval level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Write every kept draw as CSV.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Write the posterior summary as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path. Defaults to a sidecar of the first output file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct BayesConfig<'a> {
    input: String,
    format: FormatArg,
    year: Option<i32>,
    area: Option<&'a str>,
    model: BayesModel,
    prior: PriorSpec,
    mcmc: McmcConfig,
    level: f64,
}

#[derive(Serialize)]
struct BayesReport<'a> {
    summary: &'a PosteriorSummary,
    acceptance: &'a [f64],
    identifiability: Option<&'a IdentifiabilityCheck>,
}

const FULL_WARNING: &str = "\
WARNING: the FULL model is not identifiable.
  The likelihood depends on (lambda_T, lambda_NT, p_T, p_NT) only through the
  total rate and two catch shares, so the data cannot separate escape from
  catch rates. Posteriors of the individual parameters reproduce the prior
  along that ridge; do not read them as estimates.";

pub fn run(args: &BayesArgs, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let mut manifest = RunManifest::begin("bayes", argv);
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let full = longline::data::parse_records(file, &longline::data::ParseOptions { format: args.format.into() })
        .map_err(|source| CliError::Input { path: args.input.clone(), source })?;
    manifest.add_input(&args.input)?;
    let ds: Dataset = full.filter(args.year, args.area.as_deref());
    if ds.is_empty() {
        return Err(CliError::Input { path: args.input.clone(), source: longline::DataError::Empty });
    }

    let model: BayesModel = args.model.into();
    let prior = if args.diffuse {
        PriorSpec::diffuse()
    } else {
        PriorSpec {
            lambda_target: args.prior_lambda,
            lambda_nontarget: args.prior_lambda,
            p: args.prior_p,
        }
    };
    let seed = args.seed.unwrap_or_else(fresh_seed);
    let mcmc = McmcConfig {
        chains: args.chains,
        draws: args.draws,
        burn_in: args.burn_in,
        thin: args.thin,
        seed,
        use_likelihood: !args.prior_only,
    };
    mcmc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    manifest.seed = Some(seed);
    manifest.set_config(&BayesConfig {
        input: args.input.display().to_string(),
        format: args.format,
        year: args.year,
        area: args.area.as_deref(),
        model,
        prior,
        mcmc,
        level: args.level,
    });

    let sample = sample_posterior(&ds, model, &prior, &mcmc)?;
    let summary = summarize_posterior(&sample, args.level)?;
    let check = if model == BayesModel::Full && mcmc.use_likelihood {
        Some(identifiability_check(&sample, seed)?)
    } else {
        None
    };

    let io = |e: std::io::Error| CliError::io("<stdout>", e);
    if model == BayesModel::Full {
        writeln!(out, "{FULL_WARNING}\n").map_err(io)?;
    }
    writeln!(
        out,
        "{} posterior from {} sets: {} chains x {} kept draws, seed {seed}{}",
        model.as_str(),
        ds.len(),
        sample.n_chains(),
        sample.n_kept(),
        if args.prior_only { " (prior only)" } else { "" }
    )
    .map_err(io)?;
    let pct = 100.0 * args.level;
    let mut t = TextTable::new(&["parameter", "mean", "median", "sd", &format!("lower{pct:.0}"), &format!("upper{pct:.0}"), "rhat", "ess"]);
    for p in &summary.parameters {
        t.push(vec![
            p.name.clone(),
            sci(Some(p.mean)),
            sci(Some(p.median)),
            sci(Some(p.sd)),
            sci(Some(p.lower)),
            sci(Some(p.upper)),
            fixed(p.rhat, 3),
            fixed(p.ess, 0),
        ]);
    }
    out.write_all(t.render().as_bytes()).map_err(io)?;
    let accept: Vec<String> = sample.acceptance.iter().map(|a| format!("{a:.2}")).collect();
    writeln!(out, "acceptance per chain: {}", accept.join(" ")).map_err(io)?;
    for w in &summary.warnings {
        writeln!(out, "warning: {w}").map_err(io)?;
    }
    if let Some(c) = &check {
        writeln!(
            out,
            "\nprior-vs-posterior check for p_target: KS distance {:.4}, critical value {:.4} ({:.0} effective draws)\n  {}",
            c.ks_statistic,
            c.critical_value,
            c.effective_draws,
            if c.indistinguishable {
                "posterior is indistinguishable from the conditional prior: the data carry no information on p_target"
            } else {
                "posterior differs from the conditional prior"
            }
        )
        .map_err(io)?;
    }

    let mut outputs = Vec::new();
    if let Some(path) = &args.samples {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        sample
            .write_csv(BufWriter::new(file))
            .map_err(|source| CliError::Input { path: path.clone(), source })?;
        outputs.push(path.clone());
    }
    if let Some(path) = &args.out {
        let report = BayesReport {
            summary: &summary,
            acceptance: &sample.acceptance,
            identifiability: check.as_ref(),
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
        outputs.push(path.clone());
    }
    for p in &outputs {
        manifest.add_output(p)?;
    }
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| outputs.first().map(|p| sidecar_path(p)))
        .unwrap_or_else(|| PathBuf::from("longline-bayes.manifest.json"));
    manifest.finish(&manifest_path)?;
    Ok(0)
}
