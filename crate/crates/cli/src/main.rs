mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evac_core::harness::{Component, ModelKind};

use config::{ConfigError, Preset, VERSION};

#[derive(Parser)]
#[command(name = "evac", version = VERSION, about = "Wildfire evacuation demand: trip inference, graphs and forecasting")]
struct Cli {
    /// Worker threads (0 uses the config value, then one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Run every stage on the sequential path.
    #[arg(long, global = true)]
    sequential: bool,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic scenario bundle.
    Generate(GenerateArgs),
    /// Cluster pings into stays and trips and write the hourly demand panel.
    InferTrips(InferArgs),
    /// Build the environmental, demographic and fused tract graphs.
    BuildGraphs(GraphArgs),
    /// Train and forecast a single update day.
    Train(ForecastArgs),
    /// Retrain and forecast every update day in turn.
    RollingForecast(ForecastArgs),
    /// Retrain with each component removed and report its importance.
    Ablate(AblateArgs),
    /// Score forecasts against observations.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated devices [default: 200]
    #[arg(long)]
    devices: Option<usize>,
    /// Tracts per grid side [default: 4]
    #[arg(long)]
    grid_side: Option<usize>,
    /// Ordinary days before the fire [default: 7]
    #[arg(long)]
    days_before_fire: Option<usize>,
    /// Days of fire [default: 14]
    #[arg(long)]
    fire_days: Option<usize>,
    /// GPS position noise radius in metres [default: 0]
    #[arg(long)]
    jitter_m: Option<f64>,
}

#[derive(Args)]
struct InferenceOverrides {
    /// Stay-point clustering radius in metres [default: 500]
    #[arg(long)]
    radius_m: Option<f64>,
    /// Minimum stay duration in minutes [default: 5]
    #[arg(long)]
    min_stay_min: Option<i64>,
    /// Pings less accurate than this many metres are dropped [default: 250]
    #[arg(long)]
    max_error_m: Option<f64>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Scenario bundle directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceOverrides,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Scenario bundle directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Demand panel whose tracts the graphs cover; all tracts when absent.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Environmental similarity threshold [default: 0.9]
    #[arg(long)]
    env_threshold: Option<f64>,
    /// Demographic similarity threshold [default: 0.9]
    #[arg(long)]
    demo_threshold: Option<f64>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Scenario bundle directory.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Demand panel from infer-trips; inferred inline when absent.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Model layer sizes and training schedule; replaces `rolling.params`.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Data availability delay in hours [default: 0]
    #[arg(long)]
    delay: Option<usize>,
    /// sa-mgcrn, mlp or ha [default: sa-mgcrn]
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Update day(s) as YYYY-MM-DD [default: the first fire day for train, every fire day otherwise]
    #[arg(long = "test-date")]
    test_dates: Vec<String>,
    /// Maximum training epochs [default: 2000, or 40 with --preset desk]
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Training seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    inference: InferenceOverrides,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    forecast: ForecastArgs,
    /// Comma-separated components to remove [default: all nine]
    #[arg(long, value_delimiter = ',', value_parser = parse_component)]
    components: Vec<Component>,
}

#[derive(Args)]
struct EvalArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Forecast CSV holding both y_pred and y_obs columns.
    #[arg(long, conflicts_with_all = ["pred", "obs"])]
    forecast: Vec<PathBuf>,
    /// Predictions CSV (tract_id, hour_iso8601 and a value column).
    #[arg(long, requires = "obs")]
    pred: Option<PathBuf>,
    /// Observations CSV in the same layout.
    #[arg(long, requires = "pred")]
    obs: Option<PathBuf>,
    /// Value column in the predictions file.
    #[arg(long, default_value = "y_pred")]
    pred_column: String,
    /// Value column in the observations file.
    #[arg(long, default_value = "y_obs")]
    obs_column: String,
    /// Scenario bundle; adds metrics over tracts that receive orders.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    [ModelKind::SaMgcrn, ModelKind::Mlp, ModelKind::Ha]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown model `{s}` (expected sa-mgcrn, mlp or ha)"))
}

fn parse_component(s: &str) -> Result<Component, String> {
    Component::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
        let names: Vec<_> = Component::ALL.iter().map(|c| c.name()).collect();
        format!("unknown component `{s}` (expected one of {})", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
