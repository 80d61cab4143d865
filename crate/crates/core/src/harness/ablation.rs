//! Single-component removal and the resulting importance table.

use serde::{Deserialize, Serialize};

use super::data::{ForecastData, GraphChoice};
use super::features::Feature;
use super::metrics::Metrics;
use super::rolling::{rolling_run, RollingConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    EnvironmentalGraph,
    DemographicGraph,
    Weekend,
    Weather,
    EvacOrder,
    FireDistance,
    HistEmbed1,
    HistEmbed2,
    PopulationChange,
}

impl Component {
    pub const ALL: [Component; 9] = [
        Component::EnvironmentalGraph,
        Component::DemographicGraph,
        Component::Weekend,
        Component::Weather,
        Component::EvacOrder,
        Component::FireDistance,
        Component::HistEmbed1,
        Component::HistEmbed2,
        Component::PopulationChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::EnvironmentalGraph => "environmental-graph",
            Component::DemographicGraph => "demographic-graph",
            Component::Weekend => "weekend",
            Component::Weather => "weather",
            Component::EvacOrder => "evac-order",
            Component::FireDistance => "fire-distance",
            Component::HistEmbed1 => "hist-embed-1",
            Component::HistEmbed2 => "hist-embed-2",
            Component::PopulationChange => "population-change",
        }
    }

    fn features(self) -> &'static [Feature] {
        match self {
            Component::Weekend => &[Feature::Weekend],
            Component::Weather => &Feature::WEATHER,
            Component::EvacOrder => &[Feature::EvacOrder],
            Component::FireDistance => &[Feature::FireDistance],
            Component::HistEmbed1 => &[Feature::HistEmbed1],
            Component::HistEmbed2 => &[Feature::HistEmbed2],
            Component::PopulationChange => &[Feature::PopulationChange],
            Component::EnvironmentalGraph | Component::DemographicGraph => &[],
        }
    }

    /// The configuration with this component removed. Dropping one graph
    /// leaves the other one alone rather than an empty graph.
    pub fn remove_from(self, base: &RollingConfig) -> Result<RollingConfig> {
        let mut cfg = base.clone();
        match self {
            Component::EnvironmentalGraph => cfg.graph = GraphChoice::Demographic,
            Component::DemographicGraph => cfg.graph = GraphChoice::Environmental,
            _ => cfg.features.retain(|f| !self.features().contains(f)),
        }
        if cfg.features.is_empty() {
            return Err(Error::invalid(format!(
                "removing {} leaves no temporal features",
                self.name()
            )));
        }
        Ok(cfg)
    }
}

/// `e_k · 100 / Σ e`. Negative entries stay negative; an all-zero total
/// yields zeros.
pub fn importances(deltas: &[f64]) -> Vec<f64> {
    let total: f64 = deltas.iter().sum();
    if total == 0.0 {
        return vec![0.0; deltas.len()];
    }
    deltas.iter().map(|e| e * 100.0 / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub component: Component,
    pub metrics: Metrics,
    pub delta_mae: f64,
    pub delta_rmse: f64,
    pub importance_mae: f64,
    pub importance_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub full: Metrics,
    pub rows: Vec<AblationRow>,
}

/// Retrains once per removed component and compares pooled test metrics
/// with the full model's.
pub fn ablate(
    data: &ForecastData,
    base: &RollingConfig,
    components: &[Component],
    scenario: &str,
    exec: Exec,
) -> Result<AblationTable> {
    let arms: Vec<RollingConfig> = components.iter().map(|c| c.remove_from(base)).collect::<Result<_>>()?;
    let full = rolling_run(data, base, scenario, exec)?.report.aggregate;
    let metrics = exec.try_map(&arms, |cfg| {
        Ok::<_, Error>(rolling_run(data, cfg, scenario, exec)?.report.aggregate)
    })?;
    let d_mae: Vec<f64> = metrics.iter().map(|m| m.mae - full.mae).collect();
    let d_rmse: Vec<f64> = metrics.iter().map(|m| m.rmse - full.rmse).collect();
    let i_mae = importances(&d_mae);
    let i_rmse = importances(&d_rmse);
    let rows = components
        .iter()
        .enumerate()
        .map(|(i, &component)| {
            if d_mae[i] < 0.0 || d_rmse[i] < 0.0 {
                log::warn!(
                    "removing {} improved the model (dMAE {:.4}, dRMSE {:.4}); its importance is negative",
                    component.name(),
                    d_mae[i],
                    d_rmse[i]
                );
            }
            AblationRow {
                component,
                metrics: metrics[i],
                delta_mae: d_mae[i],
                delta_rmse: d_rmse[i],
                importance_mae: i_mae[i],
                importance_rmse: i_rmse[i],
            }
        })
        .collect();
    Ok(AblationTable { full, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_deltas_share_equally() {
        let imp = importances(&[2.0; 9]);
        for v in &imp {
            assert!((v - 100.0 / 9.0).abs() < 1e-12);
        }
        assert!((imp.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn negative_deltas_are_not_clamped() {
        let imp = importances(&[3.0, -1.0]);
        assert_eq!(imp, vec![150.0, -50.0]);
        assert_eq!(importances(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn removal_edits_config() {
        let base = RollingConfig::default();
        let w = Component::Weather.remove_from(&base).unwrap();
        assert_eq!(w.features.len(), 6);
        assert!(!w.features.contains(&Feature::Humidity));
        let g = Component::EnvironmentalGraph.remove_from(&base).unwrap();
        assert_eq!(g.graph, GraphChoice::Demographic);
        assert_eq!(g.features, base.features);
        let only = RollingConfig {
            features: vec![Feature::Weekend],
            ..RollingConfig::default()
        };
        assert!(Component::Weekend.remove_from(&only).is_err());
    }
}
