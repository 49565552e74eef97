//! `grouser`: command-line frontend for the adaptive-grouser wheel toolkit.
//!
//! One subcommand per workflow stage: single simulated trials, the full
//! terrain-by-height campaign grid, sieve-data analysis, scaling-law
//! fitting, height prediction, validation against slip measurements, and
//! report rebuilding from trial logs. Data goes to stdout as plot-ready
//! CSV or JSON; status lines go to stderr.
//!
//! Exit codes: 0 success, 2 config or input error, 3 simulation fault,
//! 4 validation tolerance failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grouser_core::campaign::{run_campaign, CampaignError};
use grouser_core::config::{
    load_campaign_file, load_gains_file, load_terrain_file, resolve_campaign, CampaignFile,
};
use grouser_core::controller::PidGains;
use grouser_core::estimators::{aggregate, Aggregate};
use grouser_core::psd::{InterpSpace, SieveDataset};
use grouser_core::scaling::{
    fit_family, predict_height, reference_optimum_points, reference_validation_measurements,
    select_best, validate_table, FitFamily, FitMode, OptimumPoint, ScalingFit,
    ValidationMeasurement,
};
use grouser_core::sim::{run_trial, EndReason, SimConfig, TrialRecord};
use grouser_core::terrain::{by_name, default_catalog, Provenance, TerrainModel};

/// Overrides the campaign output directory when no `--output-dir` is given.
const OUTPUT_DIR_ENV: &str = "GROUSER_OUTPUT_DIR";

/// Failure classes mapped to distinct exit codes.
enum CliError {
    /// Bad flags, config files, or input data (exit 2).
    Config(String),
    /// The simulation faulted or a trial did not complete (exit 3).
    Sim(String),
    /// A validation check exceeded its tolerance (exit 4).
    Tolerance(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Sim(m) | CliError::Tolerance(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Parser)]
#[command(name = "grouser", version, about = "Adaptive-grouser wheel simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated trial and print its metrics.
    Simulate(SimulateArgs),
    /// Run the full terrain-by-height campaign grid.
    Campaign(CampaignArgs),
    /// Compute percentile diameters from a sieve-analysis CSV.
    AnalyzePsd(AnalyzePsdArgs),
    /// Fit the grouser-height scaling law to optimum points.
    FitScaling(FitScalingArgs),
    /// Predict the optimal grouser height for median grain sizes.
    Predict(PredictArgs),
    /// Check a fit against slip measurements at predicted heights.
    Validate(ValidateArgs),
    /// Rebuild the per-cell aggregate CSV from trial logs.
    Report(ReportArgs),
}

#[derive(Args)]
struct CalibrationArgs {
    /// Terrain calibration TOML; defaults to the built-in catalog.
    #[arg(long, value_name = "FILE")]
    terrain_file: Option<PathBuf>,
    /// Controller gains TOML; defaults to the built-in gains.
    #[arg(long, value_name = "FILE")]
    gains_file: Option<PathBuf>,
}

impl CalibrationArgs {
    fn catalog(&self) -> Result<Vec<TerrainModel>, CliError> {
        match &self.terrain_file {
            Some(path) => load_terrain_file(path).map_err(config_err),
            None => Ok(default_catalog()),
        }
    }

    fn gains(&self) -> Result<PidGains<f64>, CliError> {
        match &self.gains_file {
            Some(path) => load_gains_file(path).map_err(config_err),
            None => Ok(PidGains::default()),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    calibration: CalibrationArgs,
    /// Terrain name from the calibration catalog.
    #[arg(long)]
    terrain: String,
    /// Commanded grouser height in millimetres.
    #[arg(long, value_name = "MM")]
    height: f64,
    /// RNG seed for the trial.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full trial log (JSONL) here.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Route controller sensing through the binary wire format.
    #[arg(long)]
    wire_loop: bool,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    calibration: CalibrationArgs,
    /// Campaign grid TOML; defaults to the built-in grid.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for trial logs and reports; overrides the config file and
    /// the GROUSER_OUTPUT_DIR environment variable.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzePsdArgs {
    /// Sieve CSV with `aperture_mm,mass_retained_g` rows; aperture 0 is
    /// the pan.
    input: PathBuf,
    /// Percentiles to report.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 30.0, 50.0, 60.0])]
    percentiles: Vec<f64>,
    /// Interpolate in linear diameter instead of log diameter.
    #[arg(long)]
    linear: bool,
    /// Emit the cumulative percent-passing curve instead of percentiles.
    #[arg(long)]
    curve: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    /// Fit all three families and keep the best original-space R^2.
    Best,
    Power,
    Log,
    Exp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Damped Gauss-Newton on untransformed residuals.
    OriginalSpace,
    /// Least squares in the family's linearizing transform.
    Linearized,
}

impl From<ModeArg> for FitMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::OriginalSpace => FitMode::OriginalSpace,
            ModeArg::Linearized => FitMode::Linearized,
        }
    }
}

#[derive(Args)]
struct FitScalingArgs {
    /// Optimum-point CSV with `terrain,d50_mm,h_star_mm[,provenance]` rows;
    /// defaults to the reference optima.
    #[arg(long, value_name = "FILE")]
    points: Option<PathBuf>,
    /// Add the dense-sand duplicate point to the reference set.
    #[arg(long)]
    include_dense_sand: bool,
    /// Model family to fit.
    #[arg(long, value_enum, default_value_t = FamilyArg::Best)]
    family: FamilyArg,
    /// Where to solve the least-squares problem.
    #[arg(long, value_enum, default_value_t = ModeArg::OriginalSpace)]
    mode: ModeArg,
    /// Write the fit JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit JSON from fit-scaling; defaults to the reference power fit.
    #[arg(long, value_name = "FILE")]
    fit: Option<PathBuf>,
    /// Median grain sizes in millimetres.
    #[arg(long, value_delimiter = ',', required = true, value_name = "MM")]
    d50: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Fit JSON from fit-scaling; defaults to the reference power fit.
    #[arg(long, value_name = "FILE")]
    fit: Option<PathBuf>,
    /// Measurement JSON; defaults to the reference measurements.
    #[arg(long, value_name = "FILE")]
    measurements: Option<PathBuf>,
    /// Terrains that must appear in the measurements.
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    expect: Option<Vec<String>>,
    /// Allowed relative gap between the fit's height and the quoted
    /// predicted height, in percent.
    #[arg(long, default_value_t = 3.0, value_name = "PCT")]
    height_tolerance_percent: f64,
    /// Emit the report as CSV instead of the aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign output directory holding `<terrain>/h<height>/*.jsonl`.
    input_dir: PathBuf,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Campaign(args) => cmd_campaign(args),
        Command::AnalyzePsd(args) => cmd_analyze_psd(args),
        Command::FitScaling(args) => cmd_fit_scaling(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn end_reason_str(reason: EndReason) -> &'static str {
    match reason {
        EndReason::Completed => "completed",
        EndReason::Immobilized => "immobilized",
        EndReason::TimedOut => "timed_out",
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let catalog = args.calibration.catalog()?;
    let terrain = by_name(&catalog, &args.terrain).map_err(config_err)?.clone();
    let mut config = SimConfig::for_terrain(terrain, args.height, args.seed);
    config.gains = args.calibration.gains()?;
    config.frame_period_s = config.gains.ts_s;
    config.wire_loop = args.wire_loop;
    config.validate().map_err(config_err)?;
    let record = run_trial(&config).map_err(|e| CliError::Sim(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "--".into());
    println!("terrain: {}", record.config.terrain.name);
    println!("commanded_height_mm: {:.1}", record.config.commanded_height_mm);
    println!("seed: {}", record.config.seed);
    println!("end_reason: {}", end_reason_str(record.end_reason));
    println!("frames: {}", record.frames.len());
    println!("slip_true: {:.4}", record.slip_true);
    println!("slip_est: {}", opt(record.slip_est));
    println!("travel_time_s: {}", opt(record.travel_time_s));
    println!("energy_j: {}", opt(record.energy_j));
    if let Some(path) = &args.log {
        record.write_log(path).map_err(config_err)?;
        eprintln!("trial log written to {}", path.display());
    }
    if record.end_reason != EndReason::Completed {
        return Err(CliError::Sim(format!("trial ended {}", end_reason_str(record.end_reason))));
    }
    Ok(())
}

fn output_dir_override(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
}

fn cmd_campaign(args: CampaignArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => load_campaign_file(path).map_err(config_err)?,
        None => CampaignFile::default(),
    };
    let catalog = args.calibration.catalog()?;
    let gains = args.calibration.gains()?;
    let mut config = resolve_campaign(&file, &catalog, gains).map_err(config_err)?;
    if let Some(dir) = output_dir_override(args.output_dir) {
        config.output_dir = Some(dir);
    }
    let report = run_campaign(&config).map_err(|e| match e {
        CampaignError::Config(_) => CliError::Config(e.to_string()),
        other => CliError::Sim(other.to_string()),
    })?;
    print!("{}", report.to_csv().map_err(|e| CliError::Sim(e.to_string()))?);
    let n_faulted: usize = report.cells.iter().map(|c| c.n_faulted).sum();
    eprintln!(
        "{} trials across {} cells, {} faulted",
        report.total_trials,
        report.cells.len(),
        n_faulted
    );
    for optimum in &report.optima {
        eprintln!(
            "optimum {}: {} mm (mean travel {:.3} s)",
            optimum.terrain, optimum.best_height_mm, optimum.mean_travel_time_s
        );
    }
    if let Some(dir) = &report.config.output_dir {
        eprintln!("trial logs and reports under {}", dir.display());
    }
    Ok(())
}

fn cmd_analyze_psd(args: AnalyzePsdArgs) -> Result<(), CliError> {
    let file = fs::File::open(&args.input)
        .map_err(|e| CliError::Config(format!("open {} failed: {e}", args.input.display())))?;
    let dataset = SieveDataset::from_csv(file).map_err(config_err)?;
    let curve = dataset.cumulative_curve().map_err(config_err)?;
    if args.curve {
        println!("diameter_mm,percent_passing");
        for point in curve.points() {
            println!("{},{}", point.diameter_mm, point.percent_passing);
        }
        return Ok(());
    }
    let space = if args.linear { InterpSpace::Linear } else { InterpSpace::LogDiameter };
    println!("percentile,diameter_mm");
    for &p in &args.percentiles {
        let d = curve.percentile_diameter(p, space).map_err(config_err)?;
        println!("{p},{d:.4}");
    }
    Ok(())
}

fn read_points_csv(path: &Path) -> Result<Vec<OptimumPoint>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Config(format!("open {} failed: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(config_err)?;
        if record.len() < 3 {
            return Err(CliError::Config(format!(
                "points row needs terrain,d50_mm,h_star_mm, got {} fields",
                record.len()
            )));
        }
        let d50_mm: f64 = record[1]
            .parse()
            .map_err(|_| CliError::Config(format!("bad d50 {:?}", &record[1])))?;
        let h_star_mm: f64 = record[2]
            .parse()
            .map_err(|_| CliError::Config(format!("bad height {:?}", &record[2])))?;
        let source = match record.get(3).unwrap_or("free") {
            "paper" => Provenance::Published,
            "derived" => Provenance::DerivedFromPublished,
            "free" | "" => Provenance::Interpolated,
            other => return Err(CliError::Config(format!("bad provenance {other:?}"))),
        };
        points.push(OptimumPoint { terrain: record[0].to_string(), d50_mm, h_star_mm, source });
    }
    Ok(points)
}

fn cmd_fit_scaling(args: FitScalingArgs) -> Result<(), CliError> {
    let points = match &args.points {
        Some(path) => read_points_csv(path)?,
        None => reference_optimum_points(args.include_dense_sand),
    };
    let mode = FitMode::from(args.mode);
    let fit = match args.family {
        FamilyArg::Best => select_best(&points, mode),
        FamilyArg::Power => fit_family(&points, FitFamily::Power, mode),
        FamilyArg::Log => fit_family(&points, FitFamily::Logarithmic, mode),
        FamilyArg::Exp => fit_family(&points, FitFamily::Exponential, mode),
    }
    .map_err(config_err)?;
    let json = serde_json::to_string_pretty(&fit).map_err(config_err)?;
    match &args.output {
        Some(path) => {
            fs::write(path, json)
                .map_err(|e| CliError::Config(format!("write {} failed: {e}", path.display())))?;
            eprintln!("fit written to {}", path.display());
        }
        None => println!("{json}"),
    }
    eprintln!(
        "{} fit: a={:.4} b={:.4} R2={:.4}",
        fit.family, fit.a, fit.b, fit.r_squared_original
    );
    Ok(())
}

fn load_fit(path: &Option<PathBuf>) -> Result<ScalingFit<f64>, CliError> {
    match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("read {} failed: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(config_err)
        }
        None => {
            fit_family(&reference_optimum_points(false), FitFamily::Power, FitMode::OriginalSpace)
                .map_err(config_err)
        }
    }
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let fit = load_fit(&args.fit)?;
    println!("d50_mm,height_mm,clamped");
    for &d in &args.d50 {
        let prediction = predict_height(&fit, d).map_err(config_err)?;
        println!("{d},{:.4},{}", prediction.height_mm, prediction.clamped);
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let fit = load_fit(&args.fit)?;
    let measurements = match &args.measurements {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("read {} failed: {e}", path.display())))?;
            serde_json::from_str::<Vec<ValidationMeasurement>>(&text).map_err(config_err)?
        }
        None => reference_validation_measurements(),
    };
    let expected: Vec<String> = match &args.expect {
        Some(names) => names.clone(),
        None if args.measurements.is_some() => {
            measurements.iter().map(|m| m.terrain.clone()).collect()
        }
        None => ["coarse_rock", "pea_gravel", "loose_sand", "dense_sand"]
            .map(String::from)
            .to_vec(),
    };
    let expected_refs: Vec<&str> = expected.iter().map(String::as_str).collect();
    let report = validate_table(&fit, &measurements, &expected_refs);
    if args.csv {
        let mut out = Vec::new();
        report.to_csv(&mut out).map_err(config_err)?;
        print!("{}", String::from_utf8_lossy(&out));
    } else {
        print!("{report}");
    }
    let mut failures = Vec::new();
    for row in &report.rows {
        if let Some(model_h) = row.model_height_mm {
            let quoted = row.measurement.predicted_height_mm;
            let gap = (model_h - quoted).abs() / quoted * 100.0;
            if gap > args.height_tolerance_percent {
                failures.push(format!(
                    "{}: fit gives {model_h:.2} mm, quoted prediction {quoted:.2} mm \
                     ({gap:.2}% > {:.2}%)",
                    row.measurement.terrain, args.height_tolerance_percent
                ));
            }
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Tolerance(failures.join("; ")));
    }
    Ok(())
}

fn collect_jsonl(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("read {} failed: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Config(e.to_string()))?;
        let path = entry.path();
        if path.is_dir() {
            collect_jsonl(&path, out)?;
        } else if path.extension().is_some_and(|ext| ext == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let mut paths = Vec::new();
    collect_jsonl(&args.input_dir, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no trial logs under {}",
            args.input_dir.display()
        )));
    }
    let mut cells: BTreeMap<(String, i64), Vec<TrialRecord>> = BTreeMap::new();
    for path in &paths {
        let record = TrialRecord::read_log(path)
            .map_err(|e| CliError::Config(format!("read {} failed: {e}", path.display())))?;
        let key = (
            record.config.terrain.name.clone(),
            (record.config.commanded_height_mm * 10.0).round() as i64,
        );
        cells.entry(key).or_default().push(record);
    }
    let mut out = String::new();
    out.push_str(
        "terrain,height_mm,n_logs,n_completed,slip_mean,slip_std,\
         travel_time_mean_s,travel_time_std_s,energy_mean_j,energy_std_j\n",
    );
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for ((terrain, _), group) in &cells {
        let stat = |values: Vec<Option<f64>>| -> Option<Aggregate> {
            if values.iter().all(Option::is_none) {
                None
            } else {
                aggregate(&values).ok()
            }
        };
        let slip = stat(group.iter().map(|r| r.slip_est).collect());
        let travel = stat(group.iter().map(|r| r.travel_time_s).collect());
        let energy = stat(group.iter().map(|r| r.energy_j).collect());
        out.push_str(&format!(
            "{},{:.1},{},{},{},{},{},{},{},{}\n",
            terrain,
            group[0].config.commanded_height_mm,
            group.len(),
            group.iter().filter(|r| r.completed).count(),
            fmt(slip.map(|a| a.mean)),
            fmt(slip.and_then(|a| a.std_dev)),
            fmt(travel.map(|a| a.mean)),
            fmt(travel.and_then(|a| a.std_dev)),
            fmt(energy.map(|a| a.mean)),
            fmt(energy.and_then(|a| a.std_dev)),
        ));
    }
    match &args.output {
        Some(path) => {
            let mut file = fs::File::create(path)
                .map_err(|e| CliError::Config(format!("write {} failed: {e}", path.display())))?;
            file.write_all(out.as_bytes())
                .map_err(|e| CliError::Config(format!("write {} failed: {e}", path.display())))?;
            eprintln!("report written to {}", path.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}
