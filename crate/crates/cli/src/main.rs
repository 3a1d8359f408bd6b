//! Command-line front end: ingest, normalize, compute, report, simulate,
//! and queue administration over a single config-described store.
//!
//! Exit codes: 0 success, 2 configuration error, 3 storage/IO error,
//! 4 partial normalization (some items quarantined), 1 other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chargestat_core::config::Config;
use chargestat_core::error::Error;
use chargestat_core::pipeline;
use chargestat_core::report::{PlotView, ReportFormat};
use chargestat_core::simulator::FleetScenario;
use chargestat_core::store::Store;
use chargestat_core::timeline::{parse_instant, Granularity, PeriodSpec};

#[derive(Parser)]
#[command(
    name = "chargestat",
    version,
    about = "Reliability analytics for EV charging sites",
    long_about = "Ingests charger telemetry exports, reconstructs per-charger \
                  state timelines, and computes uptime, fault-time, fault-reason, \
                  and unreachable-time metrics over calendar windows."
)]
struct Cli {
    /// YAML configuration file.
    #[arg(long, short, global = true, default_value = "chargestat.yaml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GranularityArg {
    Daily,
    Weekly,
    Monthly,
    Yearly,
    Custom,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Daily => Granularity::Daily,
            GranularityArg::Weekly => Granularity::Weekly,
            GranularityArg::Monthly => Granularity::Monthly,
            GranularityArg::Yearly => Granularity::Yearly,
            GranularityArg::Custom => Granularity::Custom,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ViewArg {
    StackedStates,
    ReasonAllocation,
}

#[derive(Subcommand)]
enum Command {
    /// Extract raw data from the configured sources into the store.
    Ingest {
        /// Input files; when given they replace the configured source
        /// inputs.
        paths: Vec<PathBuf>,
    },
    /// Apply unprocessed raw items to the charger information model.
    Normalize,
    /// Compute per-charger metrics over calendar windows and persist them.
    Compute {
        #[arg(long, value_enum)]
        granularity: GranularityArg,
        /// Range start: RFC 3339, or a date taken at site-local midnight.
        #[arg(long)]
        start: String,
        /// Range end (exclusive), same formats as --start.
        #[arg(long)]
        end: String,
    },
    /// Export site-wide reports and plot-data files.
    Report {
        #[arg(long, value_enum)]
        granularity: GranularityArg,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Output directory for the report and plot files; defaults to the
        /// config's report.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plot views to emit; defaults to all of them.
        #[arg(long, value_enum)]
        view: Vec<ViewArg>,
    },
    /// Generate a synthetic fleet: export CSVs, ground truth, and a
    /// ready-to-run config.
    Simulate {
        /// Scenario YAML file.
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-queue every raw item and clear the derived model so the next
    /// normalize rebuilds it from scratch.
    ResetProcessed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::UnknownTimezone(_)
        | Error::Yaml(_)
        | Error::Scenario(_)
        | Error::MissingColumn { .. }
        | Error::UnrecognizedSchema { .. } => 2,
        Error::Io { .. } | Error::Storage(_) | Error::StoreLocked(_) | Error::Csv { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            // simulation needs no config file
            let scenario = FleetScenario::from_path(&scenario)?;
            let summary = pipeline::simulate(&scenario, &out)?;
            println!(
                "generated fleet: {} chargers, {} event rows, {} session rows",
                summary.chargers, summary.event_rows, summary.session_rows
            );
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        command => {
            let config = Config::load(&cli.config)?;
            let store = Store::open(&config.store_path)?;
            dispatch(command, &config, &store)
        }
    }
}

fn dispatch(command: Command, config: &Config, store: &Store) -> Result<ExitCode, Error> {
    match command {
        Command::Ingest { paths } => {
            let override_inputs = if paths.is_empty() { None } else { Some(paths.as_slice()) };
            let summary = pipeline::ingest(store, config, override_inputs)?;
            for reject in &summary.rejects {
                eprintln!("rejected row: {reject}");
            }
            println!(
                "stored {} raw items ({} rows rejected)",
                summary.items_stored,
                summary.rejects.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Normalize => {
            let summary = pipeline::normalize(store, config.rules())?;
            println!(
                "processed {} items ({} duplicates skipped), quarantined {}",
                summary.processed, summary.duplicates_skipped, summary.quarantined
            );
            if summary.unrecognized_statuses > 0 {
                eprintln!(
                    "warning: {} overview statuses were unrecognized and recorded as unknown",
                    summary.unrecognized_statuses
                );
            }
            if summary.quarantined > 0 {
                eprintln!(
                    "warning: {} items quarantined; see the quarantine table",
                    summary.quarantined
                );
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compute { granularity, start, end } => {
            let spec = period_spec(config, granularity, &start, &end)?;
            let summary = pipeline::compute(store, &spec, &config.policy()?)?;
            if summary.rows_persisted == 0 {
                eprintln!("warning: no metric rows computed (empty model or empty range)");
            }
            println!(
                "computed {} rows: {} chargers x {} windows",
                summary.rows_persisted, summary.chargers, summary.windows
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { granularity, start, end, format, out, view } => {
            let spec = period_spec(config, granularity, &start, &end)?;
            let out = out
                .or_else(|| config.report.output_dir.clone())
                .ok_or_else(|| {
                    Error::Config(
                        "no output directory: pass --out or set report.output_dir".into(),
                    )
                })?;
            let format = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            };
            let views: Vec<PlotView> = if view.is_empty() {
                vec![PlotView::StackedStates, PlotView::ReasonAllocation]
            } else {
                view.iter()
                    .map(|v| match v {
                        ViewArg::StackedStates => PlotView::StackedStates,
                        ViewArg::ReasonAllocation => PlotView::ReasonAllocation,
                    })
                    .collect()
            };
            let summary = pipeline::report(store, config, &spec, format, &out, &views)?;
            if summary.windows_skipped > 0 {
                eprintln!(
                    "warning: {} windows had no active chargers and were skipped",
                    summary.windows_skipped
                );
            }
            println!("reported {} windows", summary.windows_reported);
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ResetProcessed => {
            let requeued = store.reset_processed()?;
            println!(
                "re-queued {requeued} raw items; normalized model cleared (run `normalize` to rebuild)"
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { .. } => unreachable!("handled before config load"),
    }
}

fn period_spec(
    config: &Config,
    granularity: GranularityArg,
    start: &str,
    end: &str,
) -> Result<PeriodSpec, Error> {
    let tz = config.timezone()?;
    let start = parse_instant(start, tz)?;
    let end = parse_instant(end, tz)?;
    PeriodSpec::new(granularity.into(), (start, end), config.site_timezone.clone())
}
