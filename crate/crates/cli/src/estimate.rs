//! `longline estimate`: indices per (year, area) group of a survey file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use longline::data::{parse_records, Dataset, GroupBy, GroupKey, InputFormat, ParseOptions, DEFAULT_SOAK_TOLERANCE};
use longline::numeric::{fit_method, FitOptions, InitStrategy, NumericMode, OptimizerConfig};
use longline::uncertainty::{bootstrap, BootstrapConfig, BootstrapSummary};
use longline::{DataError, EstimateResult, Method};
use serde::Serialize;

use crate::error::{CliError, EXIT_NUMERICAL};
use crate::manifest::{fresh_seed, sidecar_path, RunManifest};
use crate::table::{fixed, sci, TextTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Sets,
    Hooks,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Sets => InputFormat::Sets,
            FormatArg::Hooks => InputFormat::Hooks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupField {
    Year,
    Area,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolField {
    /// Merge areas within each year.
    Areas,
    /// Merge years within each area.
    Years,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NumericArg {
    Auto,
    Always,
    Never,
}

impl From<NumericArg> for NumericMode {
    fn from(n: NumericArg) -> Self {
        match n {
            NumericArg::Auto => NumericMode::Auto,
            NumericArg::Always => NumericMode::Always,
            NumericArg::Never => NumericMode::Never,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    ClosedForm,
    Cpue,
}

/// Numerical optimizer settings.
#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    /// Simplex iterations per restart.
    #[arg(long, default_value_t = OptimizerConfig::default().max_iterations)]
    pub max_iterations: usize,
    /// Jittered restarts after the first start.
    #[arg(long, default_value_t = OptimizerConfig::default().restarts)]
    pub restarts: usize,
    /// Where the first start comes from.
    #[arg(long, value_enum, default_value_t = InitArg::ClosedForm)]
    pub init: InitArg,
    /// Flag fits whose standard error of log λ_T exceeds this.
    #[arg(long, default_value_t = OptimizerConfig::default().max_relative_se)]
    pub max_relative_se: f64,
}

impl OptimizerArgs {
    pub fn config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            init: match self.init {
                InitArg::ClosedForm => InitStrategy::ClosedForm,
                InitArg::Cpue => InitStrategy::Cpue,
            },
            max_relative_se: self.max_relative_se,
            seed,
            ..OptimizerConfig::default()
        }
    }
}

pub(crate) fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Survey CSV file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Sets)]
    pub format: FormatArg,
    /// Comma-separated methods: cpue, hovgard, mem1, mem2, mem_regular, sem1, sem2.
    #[arg(long = "method", value_delimiter = ',', default_value = "cpue,mem1,mem2,sem1", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Labels to group on. Defaults to every label present in the file.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub by: Vec<GroupField>,
    /// Merge groups along one label before fitting.
    #[arg(long, value_enum)]
    pub pool: Option<PoolField>,
    /// Keep only these years.
    #[arg(long, value_delimiter = ',')]
    pub year: Vec<i32>,
    /// Keep only these areas.
    #[arg(long, value_delimiter = ',')]
    pub area: Vec<String>,
    /// When to use the numerical fit.
    #[arg(long, value_enum, default_value_t = NumericArg::Auto)]
    pub numeric: NumericArg,
    /// Relative soak-time spread tolerated by the closed forms.
    #[arg(long, default_value_t = DEFAULT_SOAK_TOLERANCE)]
    pub soak_tolerance: f64,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Bootstrap resamples of sets per group.
    #[arg(long, value_name = "R")]
    pub bootstrap: Option<usize>,
    /// Confidence level of bootstrap intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Seed for resampling and optimizer restarts; generated when missing.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write every result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the result table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Manifest path. Defaults to a sidecar of the first output file.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct ResolvedConfig {
    input: String,
    format: FormatArg,
    methods: Vec<Method>,
    group_by_year: bool,
    group_by_area: bool,
    pool: Option<PoolField>,
    years: Vec<i32>,
    areas: Vec<String>,
    fit: FitOptions,
    bootstrap: Option<BootstrapConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The numerical fit converged but carries a degeneracy flag.
    Flagged,
    Failed,
    NoData,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Flagged => "flagged",
            Status::Failed => "failed",
            Status::NoData => "no data",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub status: Status,
    pub error: Option<String>,
    pub estimate: Option<EstimateResult>,
    pub bootstrap: Option<BootstrapSummary>,
    pub bootstrap_error: Option<String>,
}

impl MethodOutcome {
    /// Standard error of λ̂_T: bootstrap when available, asymptotic otherwise.
    pub fn standard_error(&self) -> Option<f64> {
        if let Some(b) = &self.bootstrap {
            return Some(b.lambda_target.sd);
        }
        let cov = self.estimate.as_ref()?.covariance.as_ref()?;
        let i = cov.labels.iter().position(|l| l == "lambda_target")?;
        Some(cov.std_errors()[i])
    }

    pub fn cv_pct(&self) -> Option<f64> {
        let est = self.estimate.as_ref()?.lambda_target;
        let se = self.standard_error()?;
        (est > 0.0).then(|| 100.0 * se / est)
    }

    fn flags(&self) -> String {
        let mut flags: Vec<String> = Vec::new();
        if let Some(d) = self.estimate.as_ref().and_then(|e| e.diagnostics.as_ref()) {
            flags.extend(d.reasons.iter().map(|r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()));
            flags.extend(d.pinned.iter().map(|p| format!("pinned:{p}")));
        }
        if let Some(b) = &self.bootstrap {
            if b.degenerate > 0 {
                flags.push(format!("bootstrap_degenerate:{}", b.degenerate));
            }
        }
        if self.bootstrap_error.is_some() {
            flags.push("bootstrap_failed".into());
        }
        flags.join(";")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupOutcome {
    pub label: String,
    pub year: Option<i32>,
    /// Area labels merged into the group.
    pub areas: Vec<String>,
    pub n_sets: usize,
    pub results: Vec<MethodOutcome>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    config: &'a ResolvedConfig,
    groups: &'a [GroupOutcome],
}

fn label_of(year: Option<i32>, areas: &[String]) -> String {
    let y = year.map_or_else(|| "all".to_string(), |y| y.to_string());
    let a = if areas.is_empty() { "all".to_string() } else { areas.join("+") };
    format!("{y}/{a}")
}

/// Every (year, area) key the run should report on, including those without sets.
fn expected_keys(full: &Dataset, by: GroupBy, args: &EstimateArgs) -> BTreeSet<GroupKey> {
    let years: BTreeSet<Option<i32>> = if !by.year {
        [None].into()
    } else if args.year.is_empty() {
        full.records().iter().map(|r| r.year).collect()
    } else {
        args.year.iter().map(|y| Some(*y)).collect()
    };
    let areas: BTreeSet<Option<String>> = if !by.area {
        [None].into()
    } else if args.area.is_empty() {
        full.records().iter().map(|r| r.area.clone()).collect()
    } else {
        args.area.iter().map(|a| Some(a.clone())).collect()
    };
    years
        .iter()
        .flat_map(|y| areas.iter().map(move |a| GroupKey { year: *y, area: a.clone() }))
        .collect()
}

fn read_input(path: &Path, format: InputFormat) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_records(file, &ParseOptions { format }).map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

fn fit_group(ds: &Dataset, methods: &[Method], fit: &FitOptions, boot: Option<&BootstrapConfig>) -> Vec<MethodOutcome> {
    methods
        .iter()
        .map(|&method| match fit_method(ds, method, fit) {
            Ok(est) => {
                let status = if est.is_degenerate() { Status::Flagged } else { Status::Ok };
                let (bootstrap, bootstrap_error) = match boot.map(|cfg| bootstrap(ds, method, cfg)) {
                    Some(Ok(mut summary)) => {
                        summary.replicates.clear();
                        (Some(summary), None)
                    }
                    Some(Err(e)) => (None, Some(e.to_string())),
                    None => (None, None),
                };
                MethodOutcome { method, status, error: None, estimate: Some(est), bootstrap, bootstrap_error }
            }
            Err(e) => MethodOutcome {
                method,
                status: Status::Failed,
                error: Some(e.to_string()),
                estimate: None,
                bootstrap: None,
                bootstrap_error: None,
            },
        })
        .collect()
}

fn row_cells(g: &GroupOutcome, r: &MethodOutcome) -> Vec<String> {
    let est = r.estimate.as_ref();
    let lt = est.map(|e| e.lambda_target);
    let (lower, upper) = match &r.bootstrap {
        Some(b) => (Some(b.lambda_target.lower), Some(b.lambda_target.upper)),
        None => (None, None),
    };
    let path = est.map_or("-".to_string(), |e| {
        serde_json::to_value(e.path).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    });
    let flags = match (&r.error, r.flags()) {
        (Some(e), _) => e.clone(),
        (None, f) if f.is_empty() => "-".into(),
        (None, f) => f,
    };
    vec![
        g.label.clone(),
        r.method.to_string(),
        path,
        r.status.as_str().to_string(),
        g.n_sets.to_string(),
        sci(lt),
        sci(lt.map(|v| v * 60.0)),
        sci(r.standard_error()),
        fixed(r.cv_pct(), 1),
        sci(lower),
        sci(upper),
        flags,
    ]
}

const COLUMNS: [&str; 12] = [
    "group",
    "method",
    "path",
    "status",
    "n_sets",
    "lambda_t_per_min",
    "lambda_t_per_hour",
    "se",
    "cv_pct",
    "lower",
    "upper",
    "flags",
];

fn write_csv(path: &Path, groups: &[GroupOutcome]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(io)?;
    for g in groups {
        for r in &g.results {
            w.write_record(row_cells(g, r)).map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Years down, methods across, λ̂_T per hook-hour; one block per area label.
fn time_series(groups: &[GroupOutcome], methods: &[Method]) -> String {
    let mut blocks: BTreeMap<String, Vec<&GroupOutcome>> = BTreeMap::new();
    for g in groups {
        let area = if g.areas.is_empty() { "all".to_string() } else { g.areas.join("+") };
        blocks.entry(area).or_default().push(g);
    }
    let mut out = String::new();
    for (area, gs) in blocks {
        let mut header = vec!["year".to_string()];
        header.extend(methods.iter().map(|m| m.to_string()));
        let mut t = TextTable::new(&header);
        for g in gs {
            let mut row = vec![g.year.map_or("all".into(), |y| y.to_string())];
            for m in methods {
                let cell = g.results.iter().find(|r| r.method == *m).map_or("no data".to_string(), |r| match r.status {
                    Status::Ok => sci(r.estimate.as_ref().map(|e| e.lambda_target * 60.0)),
                    Status::Flagged => format!("{}*", sci(r.estimate.as_ref().map(|e| e.lambda_target * 60.0))),
                    Status::Failed => "failed".into(),
                    Status::NoData => "no data".into(),
                });
                row.push(cell);
            }
            t.push(row);
        }
        out.push_str(&format!("\nIndex series, area {area} (lambda_T per hook-hour; * flagged)\n"));
        out.push_str(&t.render());
    }
    out
}

pub fn run(args: &EstimateArgs, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    if args.methods.is_empty() {
        return Err(CliError::Usage("at least one method is required".into()));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let mut manifest = RunManifest::begin("estimate", argv);
    let full = read_input(&args.input, args.format.into())?;
    manifest.add_input(&args.input)?;

    let has_year = full.records().iter().any(|r| r.year.is_some());
    let has_area = full.records().iter().any(|r| r.area.is_some());
    let mut by = if args.by.is_empty() {
        GroupBy { year: has_year, area: has_area }
    } else {
        GroupBy {
            year: args.by.contains(&GroupField::Year),
            area: args.by.contains(&GroupField::Area),
        }
    };
    match args.pool {
        Some(PoolField::Areas) => by.area = false,
        Some(PoolField::Years) => by.year = false,
        None => {}
    }

    let filtered = Dataset::new(
        full.records()
            .iter()
            .filter(|r| args.year.is_empty() || r.year.is_some_and(|y| args.year.contains(&y)))
            .filter(|r| args.area.is_empty() || r.area.as_ref().is_some_and(|a| args.area.contains(a)))
            .cloned()
            .collect(),
    );
    let groups_data = match filtered {
        Ok(ds) => ds.group_by(by),
        Err(DataError::Empty) => BTreeMap::new(),
        Err(source) => return Err(CliError::Input { path: args.input.clone(), source }),
    };

    let seed = match (args.seed, args.bootstrap) {
        (Some(s), _) => s,
        (None, Some(_)) => fresh_seed(),
        (None, None) => 0,
    };
    manifest.seed = Some(seed);
    let fit = FitOptions {
        numeric: args.numeric.into(),
        soak_tolerance: args.soak_tolerance,
        optimizer: args.optimizer.config(seed),
    };
    fit.optimizer.validate()?;
    let boot = args.bootstrap.map(|replicates| BootstrapConfig {
        replicates,
        level: args.level,
        seed,
        fit: fit.clone(),
    });
    let config = ResolvedConfig {
        input: args.input.display().to_string(),
        format: args.format,
        methods: args.methods.clone(),
        group_by_year: by.year,
        group_by_area: by.area,
        pool: args.pool,
        years: args.year.clone(),
        areas: args.area.clone(),
        fit: fit.clone(),
        bootstrap: boot.clone(),
    };
    manifest.set_config(&config);

    let mut keys = expected_keys(&full, by, args);
    keys.extend(groups_data.keys().cloned());
    let mut groups = Vec::new();
    for key in keys {
        let outcome = match groups_data.get(&key) {
            Some(ds) => {
                let areas: Vec<String> = ds
                    .records()
                    .iter()
                    .filter_map(|r| r.area.clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                GroupOutcome {
                    label: label_of(key.year, &areas),
                    year: key.year,
                    areas,
                    n_sets: ds.len(),
                    results: fit_group(ds, &args.methods, &fit, boot.as_ref()),
                }
            }
            None => {
                let areas: Vec<String> = key.area.iter().cloned().collect();
                GroupOutcome {
                    label: label_of(key.year, &areas),
                    year: key.year,
                    areas,
                    n_sets: 0,
                    results: args
                        .methods
                        .iter()
                        .map(|&method| MethodOutcome {
                            method,
                            status: Status::NoData,
                            error: None,
                            estimate: None,
                            bootstrap: None,
                            bootstrap_error: None,
                        })
                        .collect(),
                }
            }
        };
        groups.push(outcome);
    }

    let mut table = TextTable::new(&COLUMNS);
    for g in &groups {
        for r in &g.results {
            table.push(row_cells(g, r));
        }
    }
    let io = |e: std::io::Error| CliError::io("<stdout>", e);
    writeln!(out, "{} sets read from {}", full.len(), args.input.display()).map_err(io)?;
    if let Some(b) = &boot {
        writeln!(out, "bootstrap: {} resamples, level {}, seed {}", b.replicates, b.level, b.seed).map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    out.write_all(table.render().as_bytes()).map_err(io)?;
    if by.year {
        out.write_all(time_series(&groups, &args.methods).as_bytes()).map_err(io)?;
    }

    let mut outputs = Vec::new();
    if let Some(path) = &args.out {
        let report = Report { config: &config, groups: &groups };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
        outputs.push(path.clone());
    }
    if let Some(path) = &args.csv {
        write_csv(path, &groups)?;
        outputs.push(path.clone());
    }
    for p in &outputs {
        manifest.add_output(p)?;
    }
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| outputs.first().map(|p| sidecar_path(p)))
        .unwrap_or_else(|| PathBuf::from("longline-estimate.manifest.json"));
    manifest.finish(&manifest_path)?;

    let attempted = groups.iter().filter(|g| g.n_sets > 0).count();
    let any_fit = groups.iter().flat_map(|g| &g.results).any(|r| r.estimate.is_some());
    Ok(if attempted > 0 && !any_fit { EXIT_NUMERICAL } else { 0 })
}
