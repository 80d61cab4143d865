use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use evac_core::graph::{build_similarity_graph, fuse_graphs, GraphKind, SimilarityGraph};
use evac_core::harness::{
    ablate, evaluate, rolling_run, write_json, write_rolling_outputs, ForecastData, ScenarioBundle, CALENDAR_FILE,
    DEMO_FEATURES_FILE, ENV_FEATURES_FILE, EVENTS_FILE, GROUND_TRUTH_FILE, PINGS_FILE, TRACTS_FILE, WEATHER_FILE,
};
use evac_core::synthetic::generate_scenario;
use evac_core::time::parse_date;
use evac_core::trip::{infer_demand, read_panel_csv, read_pings_file, DemandPanel, Trip};
use evac_core::Exec;
use serde::Serialize;

use crate::config::{config_error, load, Loaded, Manifest, RunConfig, VERSION};
use crate::{
    AblateArgs, Cli, Command, ConfigArgs, EvalArgs, ForecastArgs, GenerateArgs, GraphArgs, InferArgs,
    InferenceOverrides,
};

pub const PANEL_FILE: &str = "panel.csv";
pub const TRIPS_FILE: &str = "trips.csv";

struct Ctx {
    cli_threads: usize,
    exec: Exec,
}

impl Ctx {
    fn start(&self, config: &RunConfig) {
        let threads = if self.cli_threads > 0 {
            self.cli_threads
        } else {
            config.threads
        };
        evac_core::exec::set_thread_count(threads);
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        cli_threads: cli.threads,
        exec: if cli.sequential { Exec::Sequential } else { Exec::best() },
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::InferTrips(a) => infer_trips(&ctx, a),
        Command::BuildGraphs(a) => build_graphs(&ctx, a),
        Command::Train(a) => forecast(&ctx, a, "train"),
        Command::RollingForecast(a) => forecast(&ctx, a, "rolling-forecast"),
        Command::Ablate(a) => run_ablation(&ctx, a),
        Command::Eval(a) => eval(a),
    }
}

/// Tracks resolved inputs and written files for the manifest.
struct Run {
    subcommand: &'static str,
    out: PathBuf,
    config_file: Option<PathBuf>,
    inputs: BTreeMap<String, PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    fn new(subcommand: &'static str, common: &ConfigArgs) -> Result<Self> {
        std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
        Ok(Self {
            subcommand,
            out: common.out.clone(),
            config_file: common.config.clone(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    /// The flag value, else the path an earlier run recorded. The path
    /// must exist.
    fn input(&mut self, name: &str, flag: Option<PathBuf>, loaded: &Loaded, required: bool) -> Result<Option<PathBuf>> {
        let Some(path) = flag.or_else(|| loaded.inputs.get(name).cloned()) else {
            if required {
                return Err(config_error(format!("--{name} is required")));
            }
            return Ok(None);
        };
        if !path.exists() {
            bail!("{name} input not found: {}", path.display());
        }
        let path = std::fs::canonicalize(&path).with_context(|| format!("resolving {}", path.display()))?;
        self.inputs.insert(name.to_string(), path.clone());
        Ok(Some(path))
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn record(&mut self, written: &[PathBuf]) {
        for p in written {
            if let Some(name) = p.file_name() {
                self.outputs.push(name.to_string_lossy().into_owned());
            }
        }
    }

    fn finish(self, config: RunConfig, seed: u64) -> Result<()> {
        let out = self.out.clone();
        Manifest {
            version: VERSION.to_string(),
            subcommand: self.subcommand.to_string(),
            config_file: self.config_file,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            config,
        }
        .write(&out)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn apply_inference(config: &mut RunConfig, o: &InferenceOverrides) {
    if let Some(v) = o.radius_m {
        config.inference.radius_m = v;
    }
    if let Some(v) = o.min_stay_min {
        config.inference.min_stay_min = v;
    }
    if let Some(v) = o.max_error_m {
        config.inference.max_error_m = v;
    }
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let mut loaded = load(a.common.config.as_deref(), None, "generate")?;
    let s = &mut loaded.config.scenario;
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.devices {
        s.n_devices = v;
    }
    if let Some(v) = a.grid_side {
        s.grid_side = v;
    }
    if let Some(v) = a.days_before_fire {
        s.days_before_fire = v;
    }
    if let Some(v) = a.fire_days {
        s.fire_duration_days = v;
    }
    if let Some(v) = a.jitter_m {
        s.jitter_m = v;
    }
    loaded.config.validate_scenario()?;
    ctx.start(&loaded.config);
    let mut run = Run::new("generate", &a.common)?;
    let scenario = generate_scenario(&loaded.config.scenario, ctx.exec)?;
    scenario.write_bundle(&run.out)?;
    for name in [
        PINGS_FILE,
        TRACTS_FILE,
        ENV_FEATURES_FILE,
        DEMO_FEATURES_FILE,
        WEATHER_FILE,
        EVENTS_FILE,
        CALENDAR_FILE,
        GROUND_TRUTH_FILE,
    ] {
        run.path(name);
    }
    let trips: usize = scenario.devices.iter().map(|d| d.n_trips()).sum();
    println!(
        "{} pings from {} devices over {} tracts: {trips} trips, {} orders",
        scenario.pings.len(),
        scenario.devices.len(),
        scenario.tracts.len(),
        scenario.events.orders.len()
    );
    let seed = loaded.config.scenario.seed;
    run.finish(loaded.config, seed)
}

fn write_trips(path: &Path, trips: &[Trip]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "device_id",
        "depart_t",
        "arrive_t",
        "origin_lat",
        "origin_lon",
        "dest_lat",
        "dest_lon",
        "origin_tract",
        "dest_tract",
    ])?;
    for t in trips {
        w.write_record([
            t.device_id.clone(),
            t.depart_t.to_string(),
            t.arrive_t.to_string(),
            t.origin.lat.to_string(),
            t.origin.lon.to_string(),
            t.destination.lat.to_string(),
            t.destination.lon.to_string(),
            t.origin_tract.clone().unwrap_or_default(),
            t.dest_tract.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn load_bundle(path: &Path) -> Result<ScenarioBundle> {
    ScenarioBundle::load(path).with_context(|| format!("loading scenario bundle {}", path.display()))
}

fn infer_panel(bundle: &ScenarioBundle, config: &RunConfig, exec: Exec) -> Result<(DemandPanel, Vec<Trip>, usize)> {
    let pings = read_pings_file(&bundle.pings_path())?;
    let workdays = bundle.calendar.workday_indices()?;
    let inf = infer_demand(&pings, &bundle.tracts, bundle.grid(), &workdays, config.inference, exec)?;
    if !inf.dropped_tracts.is_empty() {
        log::warn!("dropped {} tracts with no baseline users", inf.dropped_tracts.len());
    }
    log::info!(
        "{} pings, {} stays, {} trips ({} from a tract)",
        pings.len(),
        inf.activities.len(),
        inf.trips.len(),
        inf.n_assigned_trips()
    );
    Ok((inf.panel, inf.trips, pings.len()))
}

fn infer_trips(ctx: &Ctx, a: InferArgs) -> Result<()> {
    let mut loaded = load(a.common.config.as_deref(), None, "infer-trips")?;
    apply_inference(&mut loaded.config, &a.inference);
    loaded.config.validate_common()?;
    ctx.start(&loaded.config);
    let mut run = Run::new("infer-trips", &a.common)?;
    let bundle_dir = run.input("bundle", a.bundle, &loaded, true)?.expect("required");
    let bundle = load_bundle(&bundle_dir)?;
    let (panel, trips, n_pings) = infer_panel(&bundle, &loaded.config, ctx.exec)?;
    let path = run.path(PANEL_FILE);
    let mut w = create(&path)?;
    panel.write_csv(&mut w)?;
    w.flush()?;
    write_trips(&run.path(TRIPS_FILE), &trips)?;
    let total: u64 = panel.m_gps.iter().flatten().map(|&m| u64::from(m)).sum();
    println!(
        "{n_pings} pings -> {} trips, {total} counted in {} tracts",
        trips.len(),
        panel.n_tracts()
    );
    run.finish(loaded.config, 0)
}

fn write_graph(run: &mut Run, name: &str, g: &SimilarityGraph) -> Result<()> {
    let mut w = create(&run.path(&format!("edges_{name}.csv")))?;
    g.write_edge_list(&mut w)?;
    w.flush()?;
    let mut w = create(&run.path(&format!("adjacency_{name}.csv")))?;
    g.write_matrix(&mut w)?;
    w.flush()?;
    Ok(())
}

fn build_graphs(ctx: &Ctx, a: GraphArgs) -> Result<()> {
    let mut loaded = load(a.common.config.as_deref(), None, "build-graphs")?;
    if let Some(v) = a.env_threshold {
        loaded.config.graph.env_threshold = v;
    }
    if let Some(v) = a.demo_threshold {
        loaded.config.graph.demo_threshold = v;
    }
    loaded.config.validate_common()?;
    ctx.start(&loaded.config);
    let mut run = Run::new("build-graphs", &a.common)?;
    let bundle_dir = run.input("bundle", a.bundle, &loaded, true)?.expect("required");
    let bundle = load_bundle(&bundle_dir)?;
    let ids = match run.input("panel", a.panel, &loaded, false)? {
        Some(p) => {
            let file = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            read_panel_csv(file, bundle.grid())?.tract_ids
        }
        None => bundle.environmental.tract_ids.clone(),
    };
    let env = bundle.environmental.select(&ids)?;
    let demo = bundle.demographic.select(&ids)?;
    let g = loaded.config.graph;
    let graphs = [
        (
            "environmental",
            build_similarity_graph(&env, g.env_threshold, GraphKind::Environmental, ctx.exec)?,
        ),
        (
            "demographic",
            build_similarity_graph(&demo, g.demo_threshold, GraphKind::Demographic, ctx.exec)?,
        ),
        (
            "fused",
            fuse_graphs(&env, &demo, g.env_threshold, g.demo_threshold, ctx.exec)?,
        ),
    ];
    for (name, graph) in &graphs {
        write_graph(&mut run, name, graph)?;
        println!("{name}: {} nodes, {} edges", graph.n_nodes(), graph.n_edges());
    }
    run.finish(loaded.config, 0)
}

fn load_forecast_data(run: &mut Run, a: &ForecastArgs, loaded: &Loaded, exec: Exec) -> Result<ForecastData> {
    let bundle_dir = run.input("bundle", a.bundle.clone(), loaded, true)?.expect("required");
    let bundle = load_bundle(&bundle_dir)?;
    let grid = bundle.grid();
    let config = &loaded.config;
    let panel = match run.input("panel", a.panel.clone(), loaded, false)? {
        Some(p) => {
            let file = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            let workdays = bundle.calendar.workday_indices()?;
            read_panel_csv(file, grid)?
                .into_panel(&bundle.tracts, grid, &workdays)
                .with_context(|| format!("rebuilding panel from {}", p.display()))?
        }
        None => infer_panel(&bundle, config, exec)?.0,
    };
    Ok(ForecastData::assemble(
        &panel,
        &bundle,
        config.graph,
        config.fire_distance_cap_km,
        exec,
    )?)
}

fn apply_forecast_overrides(config: &mut RunConfig, a: &ForecastArgs) {
    apply_inference(config, &a.inference);
    let r = &mut config.rolling;
    if let Some(v) = a.delay {
        r.delay_hours = v;
    }
    if let Some(v) = a.model {
        r.model = v;
    }
    if let Some(v) = a.max_epochs {
        r.params.train.max_epochs = v;
        r.params.train.patience_epochs = r.params.train.patience_epochs.min(v);
    }
    if let Some(v) = a.seed {
        r.params.train.seed = v;
    }
}

/// Turns `--test-date` values into day indices; `train` defaults to the
/// first fire day.
fn resolve_days(config: &mut RunConfig, a: &ForecastArgs, data: &ForecastData, single: bool) -> Result<()> {
    if !a.test_dates.is_empty() {
        let days = a
            .test_dates
            .iter()
            .map(|s| {
                let date = parse_date(s).map_err(|e| config_error(format!("--test-date {s}: {e}")))?;
                data.grid
                    .day_of_date(date)
                    .ok_or_else(|| config_error(format!("--test-date {s} is outside the scenario")))
            })
            .collect::<Result<Vec<_>>>()?;
        config.rolling.test_days = Some(days);
    }
    if single {
        match &config.rolling.test_days {
            None => {
                let first = *data.fire_days.first().context("scenario has no fire days")?;
                config.rolling.test_days = Some(vec![first]);
            }
            Some(d) if d.len() != 1 => return Err(config_error("train forecasts exactly one update day")),
            Some(_) => {}
        }
    }
    Ok(())
}

fn prepare(ctx: &Ctx, a: &ForecastArgs, subcommand: &'static str) -> Result<(Run, RunConfig, ForecastData)> {
    let mut loaded = load(a.common.config.as_deref(), a.preset, subcommand)?;
    apply_forecast_overrides(&mut loaded.config, a);
    loaded.config.validate_rolling()?;
    ctx.start(&loaded.config);
    let mut run = Run::new(subcommand, &a.common)?;
    let data = load_forecast_data(&mut run, a, &loaded, ctx.exec)?;
    let mut config = loaded.config;
    resolve_days(&mut config, a, &data, subcommand == "train")?;
    Ok((run, config, data))
}

fn forecast(ctx: &Ctx, a: ForecastArgs, subcommand: &'static str) -> Result<()> {
    let (mut run, config, data) = prepare(ctx, &a, subcommand)?;
    let name = config.scenario.name.clone();
    let result = rolling_run(&data, &config.rolling, &name, ctx.exec)?;
    let written = write_rolling_outputs(&run.out, &name, &data, &result)?;
    run.record(&written);
    let delay = config.rolling.delay_hours;
    for day in &result.days {
        if let Some(log) = &day.train_log {
            let file = format!(
                "train_log_{name}_{}_{delay}h_{}.json",
                config.rolling.model.name(),
                day.date
            );
            write_json(&run.path(&file), log)?;
        }
    }
    let r = &result.report;
    for d in &r.days {
        println!("{}  MAE {:.3}  RMSE {:.3}", d.date, d.all.mae, d.all.rmse);
    }
    println!(
        "{} delay {}h over {} day(s): MAE {:.3}  RMSE {:.3}",
        r.model,
        r.delay_hours,
        r.days.len(),
        r.aggregate.mae,
        r.aggregate.rmse
    );
    let seed = config.rolling.params.train.seed;
    run.finish(config, seed)
}

#[derive(Serialize)]
struct AblationCsvRow<'a> {
    component: &'a str,
    mae: f64,
    rmse: f64,
    delta_mae: f64,
    delta_rmse: f64,
    importance_mae: f64,
    importance_rmse: f64,
}

fn run_ablation(ctx: &Ctx, a: AblateArgs) -> Result<()> {
    let (mut run, mut config, data) = prepare(ctx, &a.forecast, "ablate")?;
    if !a.components.is_empty() {
        config.ablation.components = a.components.clone();
    }
    let name = config.scenario.name.clone();
    let table = ablate(&data, &config.rolling, &config.ablation.components, &name, ctx.exec)?;
    let delay = config.rolling.delay_hours;
    write_json(&run.path(&format!("ablation_{name}_{delay}h.json")), &table)?;
    let mut w = csv::Writer::from_writer(create(&run.path(&format!("ablation_{name}_{delay}h.csv")))?);
    println!("full model: MAE {:.3}  RMSE {:.3}", table.full.mae, table.full.rmse);
    for row in &table.rows {
        w.serialize(AblationCsvRow {
            component: row.component.name(),
            mae: row.metrics.mae,
            rmse: row.metrics.rmse,
            delta_mae: row.delta_mae,
            delta_rmse: row.delta_rmse,
            importance_mae: row.importance_mae,
            importance_rmse: row.importance_rmse,
        })?;
        println!(
            "{:<20} dMAE {:+.3} ({:.1}%)  dRMSE {:+.3} ({:.1}%)",
            row.component.name(),
            row.delta_mae,
            row.importance_mae,
            row.delta_rmse,
            row.importance_rmse
        );
    }
    w.flush()?;
    let seed = config.rolling.params.train.seed;
    run.finish(config, seed)
}

/// `(tract, hour) -> value` for one column of a long-format CSV.
fn read_column(path: &Path, column: &str) -> Result<BTreeMap<(String, String), f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: no `{name}` column", path.display()))
    };
    let (ti, hi, vi) = (find("tract_id")?, find("hour_iso8601")?, find(column)?);
    let mut out = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[vi].parse().with_context(|| {
            format!(
                "{} row {}: bad `{column}` value {:?}",
                path.display(),
                line + 2,
                &rec[vi]
            )
        })?;
        if out.insert((rec[ti].to_string(), rec[hi].to_string()), v).is_some() {
            bail!("{} row {}: duplicate tract and hour", path.display(), line + 2);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalOutput {
    all: evac_core::harness::Metrics,
    ordered_tracts: Option<evac_core::harness::Metrics>,
    n_tracts: usize,
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut run = Run::new(
        "eval",
        &ConfigArgs {
            config: None,
            out: a.out.clone(),
        },
    )?;
    let empty = Loaded {
        config: RunConfig::default(),
        inputs: BTreeMap::new(),
    };
    let (mut pred, mut obs) = (BTreeMap::new(), BTreeMap::new());
    if let (Some(p), Some(o)) = (a.pred.clone(), a.obs.clone()) {
        let p = run.input("pred", Some(p), &empty, true)?.expect("given");
        let o = run.input("obs", Some(o), &empty, true)?.expect("given");
        pred = read_column(&p, &a.pred_column)?;
        obs = read_column(&o, &a.obs_column)?;
    } else if a.forecast.is_empty() {
        return Err(config_error("give --forecast or both --pred and --obs"));
    }
    for (i, f) in a.forecast.iter().enumerate() {
        let f = run
            .input(&format!("forecast{i}"), Some(f.clone()), &empty, true)?
            .expect("given");
        pred.extend(read_column(&f, &a.pred_column)?);
        obs.extend(read_column(&f, &a.obs_column)?);
    }
    // group cells by tract, hours in timestamp order
    let mut rows: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((tract, hour), p) in &pred {
        let Some(o) = obs.get(&(tract.clone(), hour.clone())) else {
            bail!("no observation for tract {tract} at {hour}");
        };
        let row = rows.entry(tract.clone()).or_default();
        row.0.push(*p);
        row.1.push(*o);
    }
    if pred.len() != obs.len() {
        log::warn!(
            "{} observations have no prediction and are ignored",
            obs.len().saturating_sub(pred.len())
        );
    }
    let ids: Vec<&String> = rows.keys().collect();
    let p: Vec<Vec<f64>> = rows.values().map(|r| r.0.clone()).collect();
    let o: Vec<Vec<f64>> = rows.values().map(|r| r.1.clone()).collect();
    let all = evaluate(&p, &o, None)?;
    let ordered_tracts = match run.input("bundle", a.bundle.clone(), &empty, false)? {
        Some(dir) => {
            let bundle = load_bundle(&dir)?;
            let ordered: HashSet<&str> = bundle.events.orders.iter().map(|o| o.tract_id.as_str()).collect();
            let mask: Vec<bool> = ids.iter().map(|id| ordered.contains(id.as_str())).collect();
            mask.iter()
                .any(|&m| m)
                .then(|| evaluate(&p, &o, Some(&mask)))
                .transpose()?
        }
        None => None,
    };
    println!("MAE {:.6}  RMSE {:.6}  over {} cells", all.mae, all.rmse, all.n_cells);
    if let Some(m) = &ordered_tracts {
        println!(
            "ordered tracts: MAE {:.6}  RMSE {:.6}  over {} cells",
            m.mae, m.rmse, m.n_cells
        );
    }
    let report = EvalOutput {
        all,
        ordered_tracts,
        n_tracts: ids.len(),
    };
    write_json(&run.path("eval.json"), &report)?;
    run.finish(RunConfig::default(), 0)
}
