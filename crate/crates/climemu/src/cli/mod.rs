//! Command-line surface: dataset synthesis, training, prediction,
//! evaluation, benchmarking and grid export.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 I/O failure,
//! 4 numerical failure (factorization ladder exhausted, eigensolver stuck).
//!
//! Most flags can also come from a flat `key=value` config file
//! (`--config`); explicit flags win over config values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::bundle::{train_bundle, ModelBundle, TrainConfig};
use crate::data::cbx::{read_cbx, write_cbx};
use crate::data::synth::{synth_scenarios, SynthOptions};
use crate::data::{FeatureMode, OutputVariable, ScenarioDataset};
use crate::error::{Error, Result};
use crate::eval::{
    default_windows, evaluate_pair, run_benchmark, BenchmarkConfig, LeadTimeWindow, ModelKind,
};
use crate::kernel::parse_kernel;
use crate::krr::CvGrid;

#[derive(Parser)]
#[command(
    name = "climemu",
    version,
    about = "Kernel-regression climate emulation toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic scenario files plus a manifest.
    Synth(SynthArgs),
    /// Train a regressor bundle on one or more scenario files.
    Train(TrainArgs),
    /// Predict output fields for a scenario's forcings.
    Predict(PredictArgs),
    /// Windowed RMSE of a prediction against truth.
    Evaluate(EvaluateArgs),
    /// Train and compare all three regressors on a scenario suite.
    Benchmark(BenchmarkArgs),
    /// Export one field as a PGM image or CSV table.
    ExportGrid(ExportGridArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    scenarios: usize,
    #[arg(long, default_value_t = 51)]
    years: usize,
    /// Grid as LATxLON, e.g. 8x16.
    #[arg(long, default_value = "8x16")]
    grid: String,
    /// Standard deviation of the smooth tas noise.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 2050)]
    start_year: i32,
    /// Make every output response affine in the forcings.
    #[arg(long, default_value_t = false)]
    linear: bool,
    /// Output directory for CBX files and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// gpr, svr or krr.
    #[arg(long)]
    model: Option<String>,
    /// Kernel DSL, e.g. "matern32(ls=2, var=1) + white(var=0.1)".
    #[arg(long)]
    kernel: Option<String>,
    /// Training scenario files (CBX), pooled.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    eof_k: Option<usize>,
    /// global_mean or eof_k.
    #[arg(long)]
    feature_mode: Option<String>,
    /// Aerosol EOF rank when --feature-mode eof_k.
    #[arg(long)]
    aerosol_eof_k: Option<usize>,
    /// Output bundle file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write a per-cell predictive variance CBX next to --out
    /// (GPR bundles only).
    #[arg(long, default_value_t = false)]
    with_variance: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// "default" or a comma list of YYYY / YYYY-YYYY items.
    #[arg(long, default_value = "default")]
    windows: String,
    /// Plain RMSE instead of cosine-latitude weighting.
    #[arg(long, default_value_t = false)]
    unweighted: bool,
    /// CSV output path (default: the prediction path with .rmse.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Directory holding manifest.txt and the scenario files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = false)]
    unweighted: bool,
    /// CSV report path (default: <data>/report.csv).
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportGridArgs {
    #[arg(long, name = "in")]
    input: PathBuf,
    /// tas, dtr, pr, pr90, so2 or bc.
    #[arg(long)]
    variable: String,
    #[arg(long)]
    year: i32,
    /// pgm or csv.
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn run_main() -> i32 {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::NotPositiveDefinite | Error::NoConvergence(_) => 4,
        _ => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::ExportGrid(args) => cmd_export_grid(args),
    }
}

// ---------------------------------------------------------------------
// config files and the manifest

/// Flat `key=value` file; `#` starts a comment line.
struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            for line in fs::read_to_string(path)?.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::InvalidHyperparameter(format!("config line without '=': `{line}`"))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ConfigMap(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidHyperparameter(format!("config key `{key}` has bad value `{raw}`"))
            }),
        }
    }

    fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidHyperparameter(format!(
                            "config key `{key}` has bad list entry `{s}`"
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }
}

fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

const MANIFEST_NAME: &str = "manifest.txt";

fn write_manifest(dir: &Path, opts: &SynthOptions, files: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("seed={}\n", opts.seed));
    out.push_str(&format!("scenarios={}\n", opts.n_scenarios));
    out.push_str(&format!("years={}\n", opts.n_years));
    out.push_str(&format!("start_year={}\n", opts.start_year));
    out.push_str(&format!("grid={}x{}\n", opts.n_lat, opts.n_lon));
    out.push_str(&format!("noise={}\n", opts.noise));
    out.push_str(&format!("linear={}\n", opts.linear));
    for f in files {
        out.push_str(&format!("file={f}\n"));
    }
    fs::write(dir.join(MANIFEST_NAME), out)?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path)?;
    let mut files = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("file=") {
            files.push(dir.join(name.trim()));
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidHeader(format!(
            "{} lists no scenario files",
            path.display()
        )));
    }
    Ok(files)
}

// ---------------------------------------------------------------------
// commands

fn parse_grid_spec(spec: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidDimensions(format!("grid spec `{spec}` is not LATxLON"));
    let (h, w) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let n_lat = h.trim().parse::<usize>().map_err(|_| bad())?;
    let n_lon = w.trim().parse::<usize>().map_err(|_| bad())?;
    if n_lat == 0 || n_lon == 0 {
        return Err(bad());
    }
    Ok((n_lat, n_lon))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let (n_lat, n_lon) = parse_grid_spec(&args.grid)?;
    let opts = SynthOptions {
        seed: args.seed,
        n_scenarios: args.scenarios,
        n_years: args.years,
        n_lat,
        n_lon,
        noise: args.noise,
        start_year: args.start_year,
        linear: args.linear,
    };
    let datasets = synth_scenarios(&opts)?;
    fs::create_dir_all(&args.out)?;
    let mut files = Vec::new();
    for d in &datasets {
        let file = format!("{}.cbx", d.name);
        write_cbx(d, &args.out.join(&file))?;
        println!("wrote {}", args.out.join(&file).display());
        files.push(file);
    }
    write_manifest(&args.out, &opts, &files)?;
    println!("wrote {}", args.out.join(MANIFEST_NAME).display());
    Ok(())
}

fn parse_model(name: &str) -> Result<ModelKind> {
    ModelKind::from_name(name).ok_or_else(|| {
        Error::InvalidHyperparameter(format!("unknown model `{name}` (expected gpr, svr or krr)"))
    })
}

fn parse_feature_mode(name: &str, aerosol_k: usize) -> Result<FeatureMode> {
    match name {
        "global_mean" => Ok(FeatureMode::GlobalMean),
        "eof_k" => Ok(FeatureMode::EofK(aerosol_k)),
        other => Err(Error::InvalidHyperparameter(format!(
            "unknown feature mode `{other}` (expected global_mean or eof_k)"
        ))),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let model = parse_model(&pick(
        args.model,
        cfg.get::<String>("model")?,
        "gpr".to_string(),
    ))?;
    let kernel_text = pick(
        args.kernel,
        cfg.get::<String>("kernel")?,
        "matern32(ls=1, var=1)".to_string(),
    );
    let kernel = parse_kernel(&kernel_text)?;
    let aerosol_k = pick(args.aerosol_eof_k, cfg.get("aerosol_eof_k")?, 2);
    let feature_mode = parse_feature_mode(
        &pick(
            args.feature_mode,
            cfg.get::<String>("feature_mode")?,
            "global_mean".to_string(),
        ),
        aerosol_k,
    )?;
    let config = TrainConfig {
        model,
        kernel,
        noise_variance: pick(args.noise_variance, cfg.get("noise_variance")?, 1e-4),
        lambda: pick(args.lambda, cfg.get("lambda")?, 1e-4),
        epsilon: pick(args.epsilon, cfg.get("epsilon")?, 0.1),
        c: pick(args.c, cfg.get("c")?, 10.0),
        tol: pick(args.tol, cfg.get("tol")?, 1e-3),
        max_iter: pick(args.max_iter, cfg.get("max_iter")?, 100_000),
        eof_k: pick(args.eof_k, cfg.get("eof_k")?, 5),
        feature_mode,
    };

    let mut train = Vec::new();
    for path in &args.data {
        train.push(read_cbx(path)?);
    }
    let bundle = train_bundle(&train, &config)?;
    let unconverged = bundle
        .per_variable
        .values()
        .flat_map(|vm| &vm.regressors)
        .filter(|r| matches!(r, crate::bundle::ComponentRegressor::Svr(m) if !m.converged))
        .count();
    if unconverged > 0 {
        eprintln!("warning: {unconverged} SVR component(s) hit the iteration budget");
    }
    bundle.write(&args.out)?;
    println!(
        "trained {} bundle ({} variables, k={}) -> {}",
        model.name(),
        bundle.per_variable.len(),
        bundle.eof_k,
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let bundle = ModelBundle::read(&args.model_file)?;
    let data = read_cbx(&args.data)?;
    let (pred, variance) = bundle.predict(&data, args.with_variance)?;
    write_cbx(&pred, &args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(variance) = variance {
        let sidecar = args.out.with_extension("var.cbx");
        write_cbx(&variance, &sidecar)?;
        println!("wrote {}", sidecar.display());
    }
    Ok(())
}

fn parse_windows(spec: &str) -> Result<Vec<LeadTimeWindow>> {
    if spec.trim() == "default" {
        return Ok(default_windows());
    }
    let mut windows = Vec::new();
    for item in spec.split(',') {
        let item = item.trim();
        let bad = || {
            Error::InvalidHyperparameter(format!(
                "window `{item}` is not YYYY or YYYY-YYYY"
            ))
        };
        let (start, end) = match item.split_once('-') {
            Some((a, b)) => (
                a.trim().parse::<i32>().map_err(|_| bad())?,
                b.trim().parse::<i32>().map_err(|_| bad())?,
            ),
            None => {
                let y = item.parse::<i32>().map_err(|_| bad())?;
                (y, y)
            }
        };
        if start > end {
            return Err(bad());
        }
        windows.push(LeadTimeWindow::new(item, start, end));
    }
    if windows.is_empty() {
        return Err(Error::InvalidHyperparameter("empty window list".into()));
    }
    Ok(windows)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = read_cbx(&args.pred)?;
    let truth = read_cbx(&args.truth)?;
    let windows = parse_windows(&args.windows)?;
    let report = evaluate_pair(&pred, &truth, &windows, !args.unweighted)?;
    print!("{}", report.render_table());
    let csv_path = args
        .csv
        .unwrap_or_else(|| args.pred.with_extension("rmse.csv"));
    fs::write(&csv_path, report.to_csv())?;
    println!("\nwrote {}", csv_path.display());
    Ok(())
}

fn benchmark_config(cfg: &ConfigMap, args: &BenchmarkArgs) -> Result<BenchmarkConfig> {
    let mut config = BenchmarkConfig::default();
    if let Some(models) = cfg.get::<String>("models")? {
        config.models = models
            .split(',')
            .map(|m| parse_model(m.trim()))
            .collect::<Result<Vec<_>>>()?;
    }
    config.eof_k = pick(None, cfg.get("eof_k")?, config.eof_k);
    let aerosol_k = cfg.get("aerosol_eof_k")?.unwrap_or(2);
    if let Some(mode) = cfg.get::<String>("feature_mode")? {
        config.feature_mode = parse_feature_mode(&mode, aerosol_k)?;
    }
    config.seed = pick(args.seed, cfg.get("seed")?, config.seed);
    config.area_weighted = !args.unweighted;

    let grids = &mut config.grids;
    if let Some(text) = cfg.get::<String>("gpr_kernel")? {
        grids.gpr_template = parse_kernel(&text)?;
    }
    if let Some(v) = cfg.get_list("gpr_lengthscales")? {
        grids.gpr_lengthscales = v;
    }
    if let Some(v) = cfg.get_list("gpr_variances_rel")? {
        grids.gpr_variances_rel = v;
    }
    if let Some(v) = cfg.get_list("gpr_noise_rel")? {
        grids.gpr_noise_rel = v;
    }
    let mut krr = CvGrid::default_grid();
    if let Some(v) = cfg.get_list("krr_lambdas")? {
        krr.lambdas = v;
    }
    if let Some(text) = cfg.get::<String>("krr_kernels")? {
        krr.kernel_candidates = text
            .split(';')
            .map(|t| parse_kernel(t.trim()))
            .collect::<Result<Vec<_>>>()?;
    }
    krr.folds = cfg.get("krr_folds")?.unwrap_or(krr.folds);
    grids.krr_grid = krr;
    if let Some(text) = cfg.get::<String>("svr_kernel")? {
        grids.svr_kernel = parse_kernel(&text)?;
    }
    grids.svr_epsilon_rel = cfg.get("svr_epsilon_rel")?.unwrap_or(grids.svr_epsilon_rel);
    grids.svr_c_rel = cfg.get("svr_c_rel")?.unwrap_or(grids.svr_c_rel);
    grids.svr_tol = cfg.get("svr_tol")?.unwrap_or(grids.svr_tol);
    grids.svr_max_iter = cfg.get("svr_max_iter")?.unwrap_or(grids.svr_max_iter);
    Ok(config)
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let files = read_manifest(&args.data)?;
    if files.len() < 2 {
        return Err(Error::TooFewSamples(
            "benchmark needs at least one training and one test scenario".into(),
        ));
    }
    let mut datasets = Vec::new();
    for f in &files {
        datasets.push(read_cbx(f)?);
    }
    let test = datasets.pop().expect("len checked above");
    let cfg = ConfigMap::load(args.config.as_deref())?;
    let config = benchmark_config(&cfg, &args)?;
    let report = run_benchmark(&datasets, &test, &config)?;
    print!("{}", report.render_table());
    let csv_path = args
        .out_csv
        .clone()
        .unwrap_or_else(|| args.data.join("report.csv"));
    fs::write(&csv_path, report.to_csv())?;
    println!("\nwrote {}", csv_path.display());
    Ok(())
}

/// Field for one (variable, year): output variables come from the output
/// map, `so2`/`bc` from the forcing inputs.
fn select_field<'a>(d: &'a ScenarioDataset, variable: &str, year: i32) -> Result<&'a [f64]> {
    let t = d.year_index(year).ok_or_else(|| {
        Error::InvalidHyperparameter(format!("year {year} not present in {}", d.name))
    })?;
    match variable {
        "so2" => Ok(d.so2.row(t)),
        "bc" => Ok(d.bc.row(t)),
        name => {
            let var = OutputVariable::from_name(name)
                .ok_or_else(|| Error::MissingVariable(name.to_string()))?;
            Ok(d.output(var)?.row(t))
        }
    }
}

fn cmd_export_grid(args: ExportGridArgs) -> Result<()> {
    let d = read_cbx(&args.input)?;
    let field = select_field(&d, &args.variable, args.year)?;
    match args.format.as_str() {
        "pgm" => write_pgm(&args.out, &d, field)?,
        "csv" => write_grid_csv(&args.out, &d, field)?,
        other => {
            return Err(Error::InvalidHyperparameter(format!(
                "unknown format `{other}` (expected pgm or csv)"
            )))
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

/// 8-bit binary PGM, min-max scaled, row 0 at the northernmost latitude.
fn write_pgm(path: &Path, d: &ScenarioDataset, field: &[f64]) -> Result<()> {
    let (n_lat, n_lon) = (d.grid.n_lat, d.grid.n_lon);
    let min = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = Vec::with_capacity(field.len() + 32);
    out.extend_from_slice(format!("P5\n{n_lon} {n_lat}\n255\n").as_bytes());
    for lat in (0..n_lat).rev() {
        for lon in 0..n_lon {
            let v = field[lat * n_lon + lon];
            let byte = if span > 0.0 {
                ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(byte);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// `lat,lon,value` rows, one per grid cell, full float precision.
fn write_grid_csv(path: &Path, d: &ScenarioDataset, field: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "lat,lon,value")?;
    for (lat_idx, lat) in d.grid.lat_degrees.iter().enumerate() {
        for lon_idx in 0..d.grid.n_lon {
            let v = field[lat_idx * d.grid.n_lon + lon_idx];
            writeln!(f, "{lat},{},{v}", d.grid.lon_degrees(lon_idx))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parses_lat_then_lon() {
        assert_eq!(parse_grid_spec("4x8").unwrap(), (4, 8));
        assert_eq!(parse_grid_spec("16X32").unwrap(), (16, 32));
        assert!(parse_grid_spec("8").is_err());
        assert!(parse_grid_spec("0x8").is_err());
    }

    #[test]
    fn window_specs_parse() {
        let w = parse_windows("2050,2090-2100").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].year_start, w[0].year_end), (2050, 2050));
        assert_eq!((w[1].year_start, w[1].year_end), (2090, 2100));
        assert_eq!(w[1].label, "2090-2100");
        assert_eq!(parse_windows("default").unwrap().len(), 6);
        assert!(parse_windows("2100-2050").is_err());
        assert!(parse_windows("soon").is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::other("disk on fire"))),
            3
        );
        assert_eq!(exit_code(&Error::NotPositiveDefinite), 4);
        assert_eq!(exit_code(&Error::NoConvergence(100)), 4);
        assert_eq!(exit_code(&Error::BadMagic), 2);
        assert_eq!(
            exit_code(&Error::Syntax {
                pos: 3,
                expected: "x".into()
            }),
            2
        );
        assert_eq!(exit_code(&Error::GridMismatch("g".into())), 2);
    }

    #[test]
    fn config_map_parses_and_reports_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nmodel=krr\neof_k=3\nlist=1,2.5,3\n").unwrap();
        let cfg = ConfigMap::load(Some(&path)).unwrap();
        assert_eq!(cfg.get::<String>("model").unwrap().unwrap(), "krr");
        assert_eq!(cfg.get::<usize>("eof_k").unwrap().unwrap(), 3);
        assert_eq!(cfg.get_list("list").unwrap().unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(cfg.get::<usize>("model").is_err());
        assert!(cfg.get::<usize>("missing").unwrap().is_none());
    }
}
