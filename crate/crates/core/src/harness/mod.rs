//! Feature engineering, windowing, delay-aware rolling retraining,
//! baselines, metrics and ablation.

mod ablation;
mod bundle;
mod data;
mod features;
mod metrics;
mod rolling;

pub use ablation::{ablate, importances, AblationRow, AblationTable, Component};
pub use bundle::{
    read_json, write_json, Calendar, Events, FireDistanceTable, OrderInterval, Perimeter, ScenarioBundle,
    WeatherSeries, CALENDAR_FILE, DEMO_FEATURES_FILE, ENV_FEATURES_FILE, EVENTS_FILE, FIRE_DISTANCE_FILE,
    GROUND_TRUTH_FILE, PINGS_FILE, TRACTS_FILE, WEATHER_COLUMNS, WEATHER_FILE,
};
pub use data::{
    make_windows, plan_split, split_for_day, ForecastData, GraphChoice, GraphConfig, Graphs, Scalers, Split, SplitPlan,
    WindowSource,
};
pub use features::{
    compute_features, compute_fire_distance, daily_population_ratio, exogenous_features, population_change_at,
    DemandHistory, ExogenousPanel, Feature, FeaturePanel, DEFAULT_FIRE_DISTANCE_CAP, N_EXOGENOUS, N_FEATURES,
};
pub use metrics::{evaluate, pool, DayMetrics, EvalReport, Metrics};
pub use rolling::{
    baseline_ha, config_hash, forecast_day, forecast_file_name, rolling_run, write_forecast_csv, write_rolling_outputs,
    DayResult, GridPoint, ModelConfig, ModelKind, RollingConfig, RollingResult,
};
