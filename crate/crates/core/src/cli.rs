//! Command-line interface.
//!
//! Subcommands: `factorize` (one epsilon), `sweep` (a list of epsilons),
//! `preprocess-ionosphere` (the data-cleaning pipeline), and `scatter`
//! (plot data from a finished k = 2 run).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{
    load_delimited, parse_angle, parse_angle_list, preprocess_ionosphere, Dataset, LabelColumn,
    LoadOptions, Orientation,
};
use crate::driver::{child_seed, factorize_with_options, pareto_sweep};
use crate::error::{DataError, GeometryError, TsnmfError};
use crate::geometry::ZeroColumnPolicy;
use crate::io::{
    format_value, read_matrix_csv, write_result, write_scatter, write_sweep_manifest, RunManifest,
    SweepManifest, SweepPointEntry, WriteOptions,
};
use crate::search::SearchConfig;

#[derive(Parser)]
#[command(
    name = "tsnmf",
    about = "Tight semi-nonnegative matrix factorization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a dataset for one spread bound epsilon.
    Factorize(FactorizeArgs),
    /// Factorize for several epsilons and emit the Pareto trade-off table.
    Sweep(SweepArgs),
    /// Apply the ionosphere cleaning pipeline to a raw 34-attribute file.
    PreprocessIonosphere(PreprocessArgs),
    /// Emit scatter plot data (H rows as coordinates) from a k = 2 run.
    Scatter(ScatterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    /// One data point per file row (UCI convention).
    Rows,
    /// One data point per file column.
    Columns,
}

#[derive(Args)]
struct InputArgs {
    /// Delimited input file.
    #[arg(long)]
    input: PathBuf,
    /// Field delimiter (single character).
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Skip a header row.
    #[arg(long)]
    has_header: bool,
    /// Column carrying class labels: an index or "last".
    #[arg(long)]
    label_column: Option<String>,
    /// How file rows/columns map to data points.
    #[arg(long, value_enum, default_value = "rows")]
    orientation: OrientationArg,
    /// Drop zero-norm data columns instead of failing.
    #[arg(long)]
    drop_zero_columns: bool,
}

#[derive(Args)]
struct SearchArgs {
    /// Number of templates.
    #[arg(long)]
    k: usize,
    /// Iteration budget.
    #[arg(long, default_value_t = 100)]
    imax: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FactorizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Spread bound in radians or as a pi fraction (e.g. "pi/2").
    #[arg(long)]
    epsilon: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated spread bounds, radians or pi fractions
    /// (e.g. "pi/4,pi/2,3pi/4").
    #[arg(long)]
    epsilons: String,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw ionosphere file (34 attributes plus a trailing label).
    #[arg(long)]
    input: PathBuf,
    /// Output file: preprocessed points as rows, label appended last.
    #[arg(long)]
    out: PathBuf,
    /// Field delimiter (single character).
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Skip a header row.
    #[arg(long)]
    has_header: bool,
}

#[derive(Args)]
struct ScatterArgs {
    /// Directory written by `factorize` (needs H.csv; labels.csv optional).
    #[arg(long)]
    result: PathBuf,
    /// Output scatter file.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Data(DataError),
    Numeric(TsnmfError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(e) => match e {
                TsnmfError::InvalidConfig(_) => 1,
                TsnmfError::Geometry(GeometryError::ZeroColumn(_)) => 2,
                TsnmfError::InsufficientData { .. } => 2,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Data(e) => e.to_string(),
            CliError::Numeric(e) => e.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl From<TsnmfError> for CliError {
    fn from(e: TsnmfError) -> Self {
        CliError::Numeric(e)
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let (outcome, error_sink) = match cli.command {
        Command::Factorize(args) => {
            let sink = Some(args.search.out.clone());
            (run_factorize(args), sink)
        }
        Command::Sweep(args) => {
            let sink = Some(args.search.out.clone());
            (run_sweep(args), sink)
        }
        Command::PreprocessIonosphere(args) => (run_preprocess(args), None),
        Command::Scatter(args) => (run_scatter(args), None),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if let Some(dir) = error_sink {
                write_error_manifest(&dir, &e);
            }
            e.exit_code()
        }
    }
}

/// Failed runs still leave a machine-readable record in the output
/// directory's manifest.
fn write_error_manifest(dir: &Path, e: &CliError) {
    let record = serde_json::json!({
        "status": "error",
        "error": e.message(),
        "exit_code": e.exit_code(),
    });
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&record).expect("json") + "\n",
        );
    }
}

fn load_options(args: &InputArgs) -> Result<LoadOptions, CliError> {
    let delim = args.delimiter.as_bytes();
    if delim.len() != 1 {
        return Err(CliError::Usage(format!(
            "delimiter must be a single byte, got {:?}",
            args.delimiter
        )));
    }
    let label_column = match &args.label_column {
        None => None,
        Some(s) if s.eq_ignore_ascii_case("last") => Some(LabelColumn::Last),
        Some(s) => match s.parse::<usize>() {
            Ok(i) => Some(LabelColumn::Index(i)),
            Err(_) => {
                return Err(CliError::Usage(format!(
                    "label column must be an index or \"last\", got {s:?}"
                )))
            }
        },
    };
    Ok(LoadOptions {
        delimiter: delim[0],
        has_header: args.has_header,
        label_column,
        orientation: match args.orientation {
            OrientationArg::Rows => Orientation::RowsArePoints,
            OrientationArg::Columns => Orientation::ColumnsArePoints,
        },
    })
}

fn zero_policy(args: &InputArgs) -> ZeroColumnPolicy {
    if args.drop_zero_columns {
        ZeroColumnPolicy::Drop
    } else {
        ZeroColumnPolicy::Error
    }
}

/// Remove labels of dropped data columns so they stay aligned with H.
fn filter_labels(labels: Option<Vec<String>>, dropped: &[usize]) -> Option<Vec<String>> {
    labels.map(|l| {
        l.into_iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, v)| v)
            .collect()
    })
}

fn run_factorize(args: FactorizeArgs) -> Result<(), CliError> {
    let epsilon = parse_angle(&args.epsilon).map_err(CliError::Usage)?;
    let opts = load_options(&args.input)?;
    let started = Instant::now();
    let dataset = load_delimited(&args.input.input, &opts)?;
    let load_ms = started.elapsed().as_secs_f64() * 1e3;

    let config = SearchConfig::new(epsilon, args.search.imax, args.search.seed);
    let solve_start = Instant::now();
    let result = factorize_with_options(
        &dataset.matrix,
        args.search.k,
        &config,
        zero_policy(&args.input),
    )?;
    let solve_ms = solve_start.elapsed().as_secs_f64() * 1e3;

    let labels = filter_labels(dataset.labels.clone(), &result.dropped_columns);
    let mut timings = BTreeMap::new();
    timings.insert("load_ms".to_string(), load_ms);
    timings.insert("factorize_ms".to_string(), solve_ms);
    let manifest = write_result(
        &result,
        &args.search.out,
        &WriteOptions {
            command: "factorize".to_string(),
            provenance: dataset.provenance.clone(),
            labels,
            timings_ms: timings,
        },
    )?;
    println!(
        "fit {} (from {}), spread {}, area {} -> {}",
        format_value(manifest.fit),
        format_value(manifest.initial_fit),
        format_value(manifest.spread),
        format_value(manifest.area),
        args.search.out.display()
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<(), CliError> {
    let epsilons = parse_angle_list(&args.epsilons).map_err(CliError::Usage)?;
    let opts = load_options(&args.input)?;
    let dataset = load_delimited(&args.input.input, &opts)?;

    let config = SearchConfig::new(
        *epsilons
            .first()
            .expect("parse_angle_list rejects empty lists"),
        args.search.imax,
        args.search.seed,
    );
    // Validate the epsilon list and data eagerly, then run the members.
    let sweep = match zero_policy(&args.input) {
        ZeroColumnPolicy::Error => {
            pareto_sweep(&dataset.matrix, args.search.k, &epsilons, &config)?
        }
        ZeroColumnPolicy::Drop => {
            // pareto_sweep rejects zero columns; pre-drop them here.
            let data = crate::geometry::normalize_columns(&dataset.matrix, ZeroColumnPolicy::Drop)
                .map_err(TsnmfError::Geometry)?;
            pareto_sweep(&data.original().clone(), args.search.k, &epsilons, &config)?
        }
    };

    std::fs::create_dir_all(&args.search.out).map_err(DataError::Io)?;
    let mut entries = Vec::new();
    for point in &sweep.points {
        let index = epsilons
            .iter()
            .position(|&e| e == point.epsilon)
            .expect("sweep epsilon comes from the input list");
        let dir = args.search.out.join(format!("eps_{index:02}"));
        let labels = filter_labels(dataset.labels.clone(), &point.result.dropped_columns);
        write_result(
            &point.result,
            &dir,
            &WriteOptions {
                command: "sweep".to_string(),
                provenance: dataset.provenance.clone(),
                labels,
                timings_ms: BTreeMap::new(),
            },
        )?;
        entries.push(SweepPointEntry {
            index,
            epsilon: point.epsilon,
            seed: point.result.config.seed,
            status: "ok".to_string(),
            fit: Some(point.fit),
            dir: Some(dir),
        });
    }
    for failure in &sweep.failures {
        eprintln!(
            "epsilon {}: {}",
            format_value(failure.epsilon),
            failure.error
        );
        entries.push(SweepPointEntry {
            index: failure.index,
            epsilon: failure.epsilon,
            seed: child_seed(args.search.seed, failure.index),
            status: format!("error: {}", failure.error),
            fit: None,
            dir: None,
        });
    }
    entries.sort_by_key(|e| e.index);
    let manifest = SweepManifest {
        command: "sweep".to_string(),
        k: args.search.k,
        seed: args.search.seed,
        epsilons: epsilons.clone(),
        provenance: dataset.provenance.clone(),
        points: entries,
    };
    write_sweep_manifest(&manifest, &args.search.out)?;
    println!(
        "{} of {} sweep members succeeded -> {}",
        sweep.points.len(),
        epsilons.len(),
        args.search.out.display()
    );
    Ok(())
}

fn run_preprocess(args: PreprocessArgs) -> Result<(), CliError> {
    let delim = args.delimiter.as_bytes();
    if delim.len() != 1 {
        return Err(CliError::Usage(format!(
            "delimiter must be a single byte, got {:?}",
            args.delimiter
        )));
    }
    let opts = LoadOptions {
        delimiter: delim[0],
        has_header: args.has_header,
        label_column: Some(LabelColumn::Last),
        orientation: Orientation::RowsArePoints,
    };
    let raw = load_delimited(&args.input, &opts)?;
    let cleaned = preprocess_ionosphere(&raw)?;
    write_preprocessed(&cleaned, &args.out)?;
    for line in &cleaned.provenance.preprocessing {
        println!("{line}");
    }
    println!(
        "{} points x {} attributes -> {}",
        cleaned.point_count(),
        cleaned.dim(),
        args.out.display()
    );
    Ok(())
}

/// Points as rows at 17 significant digits, label appended as the last
/// column.
fn write_preprocessed(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for j in 0..ds.point_count() {
        for i in 0..ds.dim() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_value(ds.matrix[(i, j)]));
        }
        if let Some(labels) = &ds.labels {
            out.push(',');
            out.push_str(&labels[j]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run_scatter(args: ScatterArgs) -> Result<(), CliError> {
    let h_path = args.result.join("H.csv");
    if !h_path.exists() {
        return Err(CliError::Data(DataError::MissingFile(
            h_path.display().to_string(),
        )));
    }
    let h = read_matrix_csv(&h_path)?;
    let labels_path = args.result.join("labels.csv");
    let labels: Option<Vec<String>> = if labels_path.exists() {
        Some(
            std::fs::read_to_string(&labels_path)
                .map_err(DataError::Io)?
                .lines()
                .map(|l| l.to_string())
                .collect(),
        )
    } else {
        None
    };
    write_scatter(&h, labels.as_deref(), &args.out)?;
    println!("{} -> {}", h.ncols(), args.out.display());
    Ok(())
}

/// Re-exported manifest type for downstream tooling.
pub type Manifest = RunManifest;
