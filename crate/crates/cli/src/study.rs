//! `longline study`: Monte Carlo bias and CV tables over a catch-rate grid.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use longline::plot::{cv_vs_catch_chart, metric_chart};
use longline::study::{
    analytic_vs_numeric, cpue_bias_curve, run_study, AgreementCell, CpueBiasRow, EscapeScenario, Metric,
    StudyEstimator, StudyGrid, StudyReport,
};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::simulate::Preset;
use crate::table::{fixed, TextTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyPreset {
    /// 4 × 4 grid, 20 sets of 220 hooks, 5000 replicates, all three scenarios.
    Full,
    /// The same grid with 100 replicates.
    Smoke,
}

pub const SMOKE_REPLICATES: usize = 100;

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Grid configuration in TOML; missing fields take the default grid's values.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<StudyPreset>,
    /// Scenarios to run. Defaults to the configured one, or all three.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub scenario: Vec<Preset>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated estimators, e.g. `cpue,mem1,mem2,sem1,sem1_numeric`.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Vec<StudyEstimator>,
    /// Also compare closed-form with numerical λ̂_T on the same datasets.
    #[arg(long)]
    pub compare_numeric: bool,
    /// Keep every replicate estimate in the report.
    #[arg(long)]
    pub keep_replicates: bool,
    /// Output directory, created if needed.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct StudyConfig<'a> {
    preset: Option<StudyPreset>,
    config_file: Option<String>,
    compare_numeric: bool,
    grids: &'a [StudyGrid],
}

fn resolve_grids(args: &StudyArgs, manifest: &mut RunManifest) -> Result<Vec<StudyGrid>, CliError> {
    let mut base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            manifest.add_input(path)?;
            toml::from_str::<StudyGrid>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => StudyGrid::default(),
    };
    if args.preset == Some(StudyPreset::Smoke) {
        base.replicates = SMOKE_REPLICATES;
    }
    if let Some(r) = args.replicates {
        base.replicates = r;
    }
    if let Some(s) = args.seed {
        base.seed = s;
    }
    if !args.estimators.is_empty() {
        base.estimators = args.estimators.clone();
    }
    base.keep_replicates |= args.keep_replicates;
    let scenarios: Vec<EscapeScenario> = if !args.scenario.is_empty() {
        args.scenario.iter().map(|&p| p.into()).collect()
    } else if args.config.is_some() {
        vec![base.scenario]
    } else {
        EscapeScenario::ALL.to_vec()
    };
    let grids: Vec<StudyGrid> = scenarios
        .into_iter()
        .map(|scenario| StudyGrid { scenario, ..base.clone() })
        .collect();
    for g in &grids {
        g.validate()?;
    }
    Ok(grids)
}

fn file_label(estimator: &str) -> String {
    estimator.to_ascii_lowercase()
}

fn agreement_csv(cells: &[AgreementCell]) -> String {
    let mut out = String::from(
        "estimator,lambda_target,lambda_nontarget,compared,skipped,flagged,mean_difference,median_difference,p95_difference,max_difference,share_below_5pct\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.4}",
            c.estimator,
            c.lambda_target,
            c.lambda_nontarget,
            c.compared,
            c.skipped,
            c.flagged,
            c.mean_difference,
            c.median_difference,
            c.p95_difference,
            c.max_difference,
            c.share_below_5pct
        );
    }
    out
}

fn cpue_bias_csv(rows: &[CpueBiasRow]) -> String {
    let mut out = String::from("lambda_target,lambda_nontarget,simulated_pct,expected_pct\n");
    for row in rows {
        for p in &row.points {
            let _ = writeln!(out, "{:e},{:e},{:.4},{:.4}", row.lambda_target, p.lambda_nontarget, p.simulated_pct, p.expected_pct);
        }
    }
    out
}

/// Writes `contents` and records the file in the manifest.
fn emit(path: PathBuf, contents: &str, manifest: &mut RunManifest) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    manifest.add_output(&path)
}

fn summary_table(report: &StudyReport, estimator: &str, metric: Metric) -> String {
    let mut header = vec!["lambda_T \\ lambda_NT".to_string()];
    header.extend(report.grid.lambda_nontarget.iter().map(|v| format!("{v:e}")));
    let mut t = TextTable::new(&header);
    for (lt, row) in report.grid.lambda_target.iter().zip(report.table(estimator, metric)) {
        let mut cells = vec![format!("{lt:e}")];
        cells.extend(row.into_iter().map(|v| fixed(v, 1)));
        t.push(cells);
    }
    t.render()
}

fn write_scenario(dir: &Path, grid: &StudyGrid, compare: bool, manifest: &mut RunManifest, out: &mut dyn Write) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let report = run_study(grid)?;
    let io = |e: std::io::Error| CliError::io("<stdout>", e);
    writeln!(out, "\nscenario {} ({} replicates per cell)", grid.scenario, grid.replicates).map_err(io)?;
    for label in report.estimator_labels() {
        let name = file_label(&label);
        for (metric, stem) in [
            (Metric::Cv, "cv"),
            (Metric::RelativeBias, "bias"),
            (Metric::SignedBias, "signed_bias"),
            (Metric::Failures, "failures"),
        ] {
            emit(dir.join(format!("{stem}_{name}.csv")), &report.table_csv(&label, metric), manifest)?;
        }
        for (metric, stem) in [(Metric::RelativeBias, "bias"), (Metric::Cv, "cv")] {
            emit(dir.join(format!("{stem}_{name}.svg")), &metric_chart(&report, &label, metric).to_svg(), manifest)?;
        }
        emit(dir.join(format!("cv_vs_catch_{name}.svg")), &cv_vs_catch_chart(&report, &label).to_svg(), manifest)?;
        writeln!(out, "\n{label}: CV (%)").map_err(io)?;
        out.write_all(summary_table(&report, &label, Metric::Cv).as_bytes()).map_err(io)?;
        writeln!(out, "{label}: relative bias (%)").map_err(io)?;
        out.write_all(summary_table(&report, &label, Metric::RelativeBias).as_bytes()).map_err(io)?;
    }
    emit(dir.join("cells.csv"), &report.cells_csv(), manifest)?;
    emit(dir.join("report.json"), &(report.to_json() + "\n"), manifest)?;
    if grid.scenario == EscapeScenario::Sc1 {
        emit(dir.join("cpue_bias.csv"), &cpue_bias_csv(&cpue_bias_curve(grid)?), manifest)?;
    }
    if compare {
        emit(dir.join("agreement.csv"), &agreement_csv(&analytic_vs_numeric(grid)?), manifest)?;
    }
    Ok(())
}

pub fn run(args: &StudyArgs, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    let mut manifest = RunManifest::begin("study", argv);
    let grids = resolve_grids(args, &mut manifest)?;
    manifest.seed = grids.first().map(|g| g.seed);
    manifest.set_config(&StudyConfig {
        preset: args.preset,
        config_file: args.config.as_ref().map(|p| p.display().to_string()),
        compare_numeric: args.compare_numeric,
        grids: &grids,
    });
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    for grid in &grids {
        write_scenario(&args.out.join(grid.scenario.as_str()), grid, args.compare_numeric, &mut manifest, out)?;
    }
    manifest.finish(&args.out.join("manifest.json"))?;
    writeln!(out, "\nresults in {}", args.out.display()).map_err(|e| CliError::io("<stdout>", e))?;
    Ok(0)
}
