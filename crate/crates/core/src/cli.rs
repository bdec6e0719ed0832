//! The `delag` command line.

use std::ffi::OsString;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::atc::{fit_atc, AtcEnsemble};
use crate::config::RunConfig;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::eval::{airtemp_validation, compute_metrics, synthetic_stations, validate_all, LstCube, StationTable};
use crate::geo;
use crate::gp::GpSet;
use crate::raster::{load_stack, save_stack, Era5Series, FeatureRaster};
use crate::recon::{fit_gp_all, layer_path, reconstruct_days, export_cube};
use crate::synth::{generate, Cadence, GroundTruth};

pub const TRUTH_KIND: &str = "ground-truth";

#[derive(Debug, Parser)]
#[command(name = "delag", version, about = "Daily gap-free land surface temperature reconstruction")]
pub struct Cli {
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic stack, forcing, features, truth and stations.
    Generate(GenerateArgs),
    /// Fit the per-pixel cycle ensemble.
    FitAtc(FitAtcArgs),
    /// Fit one residual model per observed day.
    FitGp(FitGpArgs),
    /// Produce daily grids with intervals and variance layers.
    Reconstruct(ReconstructArgs),
    /// Run the clear-sky, heavy-cloud and station strategies.
    Validate(ValidateArgs),
    /// Fit the paired station air-temperature models.
    Airtemp(AirtempArgs),
    /// Compare two cubes cell by cell.
    Metrics(MetricsArgs),
    /// Cross-track coverage ratio for a latitude or a range of them.
    Crosstrack(CrosstrackArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// 4-per-16, 2-per-16 or 1-per-16.
    #[arg(long)]
    pub cadence: Option<Cadence>,
}

#[derive(Debug, Args)]
pub struct FitAtcArgs {
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub era5: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitGpArgs {
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub atc: Option<PathBuf>,
    #[arg(long)]
    pub era5: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub atc: Option<PathBuf>,
    #[arg(long)]
    pub gp_dir: Option<PathBuf>,
    #[arg(long)]
    pub era5: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..365")]
    pub days: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cycle model alone.
    #[arg(long)]
    pub no_gp: bool,
    /// Final snapshot instead of the ensemble.
    #[arg(long)]
    pub no_ensemble: bool,
    /// Residual variance at observed pixels too.
    #[arg(long)]
    pub full_variance: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub era5: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub stations: Option<PathBuf>,
    /// Seamless cube from `reconstruct` over the full stack.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AirtempArgs {
    #[arg(long)]
    pub stations: Option<PathBuf>,
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Where to write both fitted models as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, requires = "upper")]
    pub lower: Option<PathBuf>,
    #[arg(long, requires = "lower")]
    pub upper: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct CrosstrackArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub lat: Option<f64>,
    /// `start:end:step` in degrees; prints CSV.
    #[arg(long, allow_hyphen_values = true)]
    pub table: Option<String>,
}

fn pick(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.clone())
        .ok_or_else(|| Error::Config(format!("missing path `{name}` (flag or config `paths.{name}`)")))
}

/// Parses `a..b` (inclusive) or `a,b,c`.
pub fn parse_days(s: &str) -> Result<Vec<u16>> {
    let bad = || Error::Config(format!("bad day list `{s}`"));
    let mut days: Vec<u16> = if let Some((a, b)) = s.split_once("..") {
        let a: u16 = a.trim().parse().map_err(|_| bad())?;
        let b: u16 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|d| d.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    days.sort_unstable();
    days.dedup();
    if days.is_empty() || days[0] == 0 || *days.last().unwrap() > 366 {
        return Err(bad());
    }
    Ok(days)
}

fn parse_table(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad table range `{s}`")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Config(format!("table range must be start:end:step, got `{s}`"))),
    }
}

fn init_logging(level: &str) -> Result<()> {
    let level: tracing::Level = level
        .parse()
        .map_err(|_| Error::Config(format!("unknown log level `{level}`")))?;
    // A second call in the same process keeps the first subscriber.
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn save_truth(truth: &GroundTruth, dir: &Path) -> Result<()> {
    let (h, w) = (truth.params.height, truth.params.width);
    let days: Vec<u32> = truth.days.iter().map(|&d| d as u32).collect();
    let lst = Container::new([days.len(), h, w], days, truth.lst.iter().map(|&v| v as f32).collect()).with_kind(TRUTH_KIND);
    lst.save(dir.join("truth.lstc"))?;
    write_json(
        &dir.join("truth_params.json"),
        &json!({ "height": h, "width": w, "pixels": truth.params.pixels }),
    )
}

fn run_generate(a: &GenerateArgs, cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let dir = pick(&a.out_dir, &cfg.paths.out, "out")?;
    let mut sc = cfg.synth.clone();
    sc.seed = seed;
    sc.height = a.height.unwrap_or(sc.height);
    sc.width = a.width.unwrap_or(sc.width);
    sc.cadence = a.cadence.unwrap_or(sc.cadence);
    let data = generate(&sc)?;
    std::fs::create_dir_all(&dir)?;
    save_stack(&data.stack, dir.join("stack.lstc"))?;
    data.era5.save(dir.join("era5.lstc"))?;
    data.features.save(dir.join("features.lstc"))?;
    save_truth(&data.truth, &dir)?;
    let stations = synthetic_stations(&data.truth, &data.stack, cfg.stations.n_stations.min(sc.height * sc.width), &cfg.stations.planted, seed)?;
    stations.save(dir.join("stations.csv"))?;
    tracing::info!(dir = %dir.display(), days = data.stack.days().len(), "wrote synthetic dataset");
    Ok(())
}

fn run_fit_atc(a: &FitAtcArgs, cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let stack = load_stack(pick(&a.stack, &cfg.paths.stack, "stack")?)?;
    let era5 = Era5Series::load(pick(&a.era5, &cfg.paths.era5, "era5")?)?;
    let out = pick(&a.out, &cfg.paths.atc, "atc")?;
    let fit = fit_atc(&stack, &era5, &cfg.pipeline.fit, seed)?;
    tracing::info!(
        initial_loss = fit.initial_loss(),
        final_loss = fit.final_loss,
        deficient = fit.deficiency.pixels.len(),
        "cycle ensemble fitted"
    );
    ensure_parent(&out)?;
    fit.ensemble.save(&out, Some(&fit.deficiency))
}

fn run_fit_gp(a: &FitGpArgs, cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let stack = load_stack(pick(&a.stack, &cfg.paths.stack, "stack")?)?;
    let ens = AtcEnsemble::load(pick(&a.atc, &cfg.paths.atc, "atc")?)?;
    let era5 = Era5Series::load(pick(&a.era5, &cfg.paths.era5, "era5")?)?;
    let features = FeatureRaster::load(pick(&a.features, &cfg.paths.features, "features")?)?;
    let out = pick(&a.out, &cfg.paths.gp_dir, "gp_dir")?;
    let set = fit_gp_all(&stack, &ens, &era5, &features, &cfg.pipeline.gp, &cfg.pipeline.recon, seed)?;
    for s in &set.skipped {
        tracing::warn!(day = s.day, n_valid = s.n_valid, reason = %s.reason, "residual model skipped");
    }
    tracing::info!(fitted = set.models.len(), skipped = set.skipped.len(), "residual models fitted");
    set.save(out)
}

fn run_reconstruct(a: &ReconstructArgs, cfg: &RunConfig) -> Result<()> {
    let stack = load_stack(pick(&a.stack, &cfg.paths.stack, "stack")?)?;
    let ens = AtcEnsemble::load(pick(&a.atc, &cfg.paths.atc, "atc")?)?;
    let era5 = Era5Series::load(pick(&a.era5, &cfg.paths.era5, "era5")?)?;
    let features = FeatureRaster::load(pick(&a.features, &cfg.paths.features, "features")?)?;
    let out = pick(&a.out, &cfg.paths.recon, "recon")?;
    let mut rc = cfg.pipeline.recon.clone();
    rc.use_gp &= !a.no_gp;
    rc.use_ensemble &= !a.no_ensemble;
    rc.full_variance |= a.full_variance;
    let gps = if rc.use_gp {
        GpSet::load(pick(&a.gp_dir, &cfg.paths.gp_dir, "gp_dir")?)?
    } else {
        GpSet::default()
    };
    let days = parse_days(&a.days)?;
    let results = reconstruct_days(&ens, &gps, &era5, &features, &stack, &days, &rc)?;
    ensure_parent(&out)?;
    let (h, w) = ens.grid();
    let written = export_cube(&results, h, w, &out)?;
    tracing::info!(days = days.len(), files = written.len(), "reconstruction written");
    Ok(())
}

fn load_recon(path: &Path) -> Result<LstCube> {
    // Model means are the regression input; the seamless cube would mix in
    // observations.
    let mean = layer_path(path, "mean");
    let c = Container::load(if mean.exists() { mean } else { path.to_path_buf() })?;
    LstCube::from_container(&c)
}

fn run_validate(a: &ValidateArgs, cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let stack = load_stack(pick(&a.stack, &cfg.paths.stack, "stack")?)?;
    let era5 = Era5Series::load(pick(&a.era5, &cfg.paths.era5, "era5")?)?;
    let features = FeatureRaster::load(pick(&a.features, &cfg.paths.features, "features")?)?;
    let out = pick(&a.out, &cfg.paths.out, "out")?;
    let stations = a
        .stations
        .clone()
        .or_else(|| cfg.paths.stations.clone())
        .map(StationTable::load)
        .transpose()?;
    let recon = a.recon.clone().or_else(|| cfg.paths.recon.clone()).map(|p| load_recon(&p)).transpose()?;
    let report = validate_all(
        &a.dataset,
        &stack,
        &era5,
        &features,
        stations.as_ref(),
        recon.as_ref(),
        &cfg.pipeline,
        &cfg.validation,
        seed,
    )?;
    write_json(&out, &report)?;
    tracing::info!(out = %out.display(), "validation report written");
    Ok(())
}

fn run_airtemp(a: &AirtempArgs, cfg: &RunConfig) -> Result<()> {
    let stations = StationTable::load(pick(&a.stations, &cfg.paths.stations, "stations")?)?;
    let stack = load_stack(pick(&a.stack, &cfg.paths.stack, "stack")?)?;
    let recon = load_recon(&pick(&a.recon, &cfg.paths.recon, "recon")?)?;
    let (metrics, models) = airtemp_validation(&stations, &stack, &recon)?;
    if let Some(out) = &a.out {
        write_json(out, &json!({ "models": models, "metrics": metrics }))?;
    }
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

fn run_metrics(a: &MetricsArgs) -> Result<()> {
    let pred = Container::load(&a.pred)?;
    let truth = Container::load(&a.truth)?;
    if pred.dims != truth.dims || pred.days != truth.days {
        return Err(Error::Domain("prediction and truth cubes differ in dims or days".into()));
    }
    let bounds = match (&a.lower, &a.upper) {
        (Some(l), Some(u)) => {
            let (l, u) = (Container::load(l)?, Container::load(u)?);
            if l.dims != pred.dims || u.dims != pred.dims {
                return Err(Error::Domain("interval cubes differ in dims".into()));
            }
            Some((l.data, u.data))
        }
        _ => None,
    };
    let (mut p, mut t, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..pred.data.len() {
        let (x, y) = (pred.data[i], truth.data[i]);
        if x.is_finite() && y.is_finite() {
            p.push(x as f64);
            t.push(y as f64);
            if let Some((l, u)) = &bounds {
                lo.push(l[i] as f64);
                hi.push(u[i] as f64);
            }
        }
    }
    let m = compute_metrics(&p, &t, bounds.as_ref().map(|_| (&lo[..], &hi[..])))?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(())
}

fn run_crosstrack(a: &CrosstrackArgs, cfg: &RunConfig) -> Result<()> {
    let c = &cfg.crosstrack;
    if let Some(lat) = a.lat {
        println!("latitude {lat} ratio {:.4} overlap {:.4}", c.ratio(lat)?, c.overlap(lat)?);
    }
    if let Some(t) = &a.table {
        let (start, end, step) = parse_table(t)?;
        let rows = geo::table(c, start, end, step)?;
        let mut w = csv::Writer::from_writer(std::io::stdout());
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn is_stochastic(c: &Command) -> bool {
    matches!(c, Command::Generate(_) | Command::FitAtc(_) | Command::FitGp(_) | Command::Validate(_))
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.seed = cli.seed.or(cfg.seed);
    cfg.workers = cli.workers.or(cfg.workers);
    if let Some(l) = &cli.log_level {
        cfg.log_level = l.clone();
    }
    init_logging(&cfg.log_level)?;
    cfg.validate()?;
    if is_stochastic(&cli.command) {
        tracing::info!(seed = cfg.require_seed()?, config_hash = %cfg.hash()?, "run configuration");
    }
    let work = || match &cli.command {
        Command::Generate(a) => run_generate(a, &cfg),
        Command::FitAtc(a) => run_fit_atc(a, &cfg),
        Command::FitGp(a) => run_fit_gp(a, &cfg),
        Command::Reconstruct(a) => run_reconstruct(a, &cfg),
        Command::Validate(a) => run_validate(a, &cfg),
        Command::Airtemp(a) => run_airtemp(a, &cfg),
        Command::Metrics(a) => run_metrics(a),
        Command::Crosstrack(a) => run_crosstrack(a, &cfg),
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Single-line machine-readable error.
pub fn error_line(e: &Error) -> String {
    json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Parses and runs `args`; returns the process exit code. Usage errors
/// exit 2, everything else that fails exits 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}
