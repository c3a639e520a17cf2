//! Per-user objectives, the configuration comparator and round reports.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{compute_pdp, doppler_spread, rms_delay_spread, w_to_dbm, ChannelParams};
use crate::em::MergedFunction;
use crate::geometry::{Vec3, SPEED_OF_LIGHT};
use crate::graph::{Configuration, PweGraph};

use super::OptimizeError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    MaxRxPower,
    MinRmsDs,
    MinDopplerSpread,
    MinEavesdropExposure { eavesdropper_id: String },
    MinDelay,
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::MaxRxPower => "MAX_RX_POWER".into(),
            Metric::MinRmsDs => "MIN_RMS_DS".into(),
            Metric::MinDopplerSpread => "MIN_DOPPLER_SPREAD".into(),
            Metric::MinEavesdropExposure { eavesdropper_id } => format!("MIN_EAVESDROP_EXPOSURE({eavesdropper_id})"),
            Metric::MinDelay => "MIN_DELAY".into(),
        }
    }
}

impl FromStr for Metric {
    type Err = OptimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Ok(match s {
            "MAX_RX_POWER" => Metric::MaxRxPower,
            "MIN_RMS_DS" => Metric::MinRmsDs,
            "MIN_DOPPLER_SPREAD" => Metric::MinDopplerSpread,
            "MIN_DELAY" => Metric::MinDelay,
            _ => match s.strip_prefix("MIN_EAVESDROP_EXPOSURE(").and_then(|r| r.strip_suffix(')')) {
                Some(id) if !id.is_empty() => Metric::MinEavesdropExposure { eavesdropper_id: id.to_string() },
                _ => return Err(OptimizeError::UnknownMetric(s.to_string())),
            },
        })
    }
}

/// Receiver-side requirement that the final link meets the trajectory at a right angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perpendicular {
    pub trajectory: Vec3,
    /// Largest accepted |cos| between the final link and the trajectory.
    #[serde(default = "default_perp_tolerance")]
    pub tolerance: f64,
}

fn default_perp_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConstraints {
    /// Cap on simultaneously deployed functions per tile.
    pub max_functions_per_tile: Option<usize>,
    /// Node-id pairs whose link must not be used (either direction).
    pub forbidden_links: Vec<(String, String)>,
    /// Links passing closer than this to an eavesdropper are dropped.
    pub eavesdropper_clearance_m: Option<f64>,
    pub eavesdroppers: Vec<String>,
    pub perpendicular: Option<Perpendicular>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserObjective {
    pub tx_id: String,
    pub rx_id: String,
    /// Metric with its positive weight.
    pub metrics: Vec<(Metric, f64)>,
    #[serde(default)]
    pub constraints: PathConstraints,
    /// Receiver velocity used by the Doppler metric (m/s).
    #[serde(default)]
    pub rx_velocity: Option<Vec3>,
}

impl UserObjective {
    pub fn new(tx_id: &str, rx_id: &str, metrics: Vec<(Metric, f64)>) -> Self {
        UserObjective {
            tx_id: tx_id.into(),
            rx_id: rx_id.into(),
            metrics,
            constraints: PathConstraints::default(),
            rx_velocity: None,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.metrics.is_empty() {
            return Err(OptimizeError::InvalidObjective(format!("{}->{}: empty metric set", self.tx_id, self.rx_id)));
        }
        if let Some((m, w)) = self.metrics.iter().find(|(_, w)| !(*w > 0.0)) {
            return Err(OptimizeError::InvalidObjective(format!("weight {w} of {} is not positive", m.name())));
        }
        Ok(())
    }
}

/// c(f, f*): 1 when both assignments are structurally equal (∅ included).
pub fn comparator(f: Option<&MergedFunction>, g: Option<&MergedFunction>) -> u8 {
    match (f, g) {
        (None, None) => 1,
        (Some(a), Some(b)) => u8::from(a.function_ids() == b.function_ids() && a.merged_bias == b.merged_bias),
        _ => 0,
    }
}

/// R^t = |N| − Σ c(f^{t−1}, f^t)
pub fn touches(prev: &Configuration, now: &Configuration, tile_count: usize) -> usize {
    let same: usize = (0..tile_count).map(|n| comparator(prev.get(n), now.get(n)) as usize).sum();
    tile_count - same
}

/// S_∅^t = Σ c(f^t, ∅)
pub fn free_tiles(now: &Configuration, tile_count: usize) -> usize {
    (0..tile_count).map(|n| comparator(now.get(n), None) as usize).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub tx_id: String,
    pub rx_id: String,
    /// Raw metric values keyed by metric name; `None` when undefined (no paths).
    pub values: BTreeMap<String, Option<f64>>,
    /// Weighted sum of normalised metric costs, lower is better.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub users: Vec<UserReport>,
    pub touches: usize,
    pub free_tiles: usize,
    /// Soft-limit violations (R^max, S_∅^min); reported, never fatal.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoftLimits {
    pub max_touches: Option<usize>,
    pub min_free_tiles: Option<usize>,
}

pub fn evaluate(
    graph: &PweGraph,
    prev: &Configuration,
    now: &Configuration,
    objectives: &[UserObjective],
    params: &ChannelParams,
    limits: &SoftLimits,
) -> Result<ObjectiveReport, OptimizeError> {
    let n = graph.tiles.len();
    let r = touches(prev, now, n);
    let s = free_tiles(now, n);
    let tx_dbm = w_to_dbm(params.tx_power_w);
    let span = tx_dbm - params.min_power_dbm;
    let mut users = Vec::new();
    for obj in objectives {
        obj.validate()?;
        let pdp = compute_pdp(graph, now, &obj.tx_id, &obj.rx_id, params)?;
        let mut values = BTreeMap::new();
        let mut score = 0.0;
        for (metric, w) in &obj.metrics {
            let (value, cost) = match metric {
                Metric::MaxRxPower => {
                    let dbm = if pdp.is_empty() { params.min_power_dbm } else { w_to_dbm(pdp.total_power()) };
                    (Some(dbm), ((tx_dbm - dbm) / span).clamp(0.0, 1.0))
                }
                Metric::MinRmsDs => match rms_delay_spread(&pdp) {
                    Ok(v) => (Some(v), v / (v + 10e-9)),
                    Err(_) => (None, 1.0),
                },
                Metric::MinDopplerSpread => {
                    let v = obj
                        .rx_velocity
                        .or(obj.constraints.perpendicular.map(|p| p.trajectory))
                        .unwrap_or(Vec3::ZERO);
                    let max = 2.0 * params.frequency_hz * v.norm() / SPEED_OF_LIGHT;
                    match doppler_spread(&pdp, v, params.frequency_hz) {
                        Ok(d) => (Some(d), if max > 0.0 { d / max } else { 0.0 }),
                        Err(_) => (None, 1.0),
                    }
                }
                Metric::MinEavesdropExposure { eavesdropper_id } => {
                    let leak = compute_pdp(graph, now, &obj.tx_id, eavesdropper_id, params)?;
                    let dbm = if leak.is_empty() { params.min_power_dbm } else { w_to_dbm(leak.total_power()) };
                    (Some(dbm), ((dbm - params.min_power_dbm) / span).clamp(0.0, 1.0))
                }
                Metric::MinDelay => {
                    let first = pdp.entries.iter().map(|e| e.delay).fold(f64::INFINITY, f64::min);
                    if first.is_finite() {
                        (Some(first), first / (first + 100e-9))
                    } else {
                        (None, 1.0)
                    }
                }
            };
            values.insert(metric.name(), value);
            score += w * cost;
        }
        users.push(UserReport { tx_id: obj.tx_id.clone(), rx_id: obj.rx_id.clone(), values, score });
    }
    let mut violations = Vec::new();
    if let Some(max) = limits.max_touches {
        if r > max {
            violations.push(format!("touches {r} exceed R_max {max}"));
        }
    }
    if let Some(min) = limits.min_free_tiles {
        if s < min {
            violations.push(format!("free tiles {s} below S_min {min}"));
        }
    }
    Ok(ObjectiveReport { users, touches: r, free_tiles: s, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{merge, EmFunction, PortId, Template};

    fn steer(out: u32) -> MergedFunction {
        merge(&[EmFunction {
            function_id: format!("steer:1>{out}"),
            template: Template::Steer { in_port: PortId(1), out_port: PortId(out) },
            bias_vector: vec![out as u8; 4],
            efficiency: 0.9,
        }])
        .unwrap()
    }

    #[test]
    fn comparator_basics() {
        assert_eq!(comparator(None, None), 1);
        assert_eq!(comparator(Some(&steer(2)), Some(&steer(3))), 0);
        assert_eq!(comparator(Some(&steer(2)), Some(&steer(2))), 1);
        assert_eq!(comparator(Some(&steer(2)), None), 0);
    }

    #[test]
    fn touches_and_free_tiles_by_count() {
        let mut prev = Configuration::empty();
        prev.assignment.insert(0, steer(2));
        prev.assignment.insert(3, steer(3));
        let mut now = prev.clone();
        assert_eq!(touches(&prev, &now, 5), 0);
        now.assignment.insert(1, steer(2));
        now.assignment.insert(3, steer(4));
        assert_eq!(touches(&prev, &now, 5), 2);
        assert_eq!(free_tiles(&now, 5), 2);
        assert_eq!(free_tiles(&Configuration::empty(), 5), 5);
    }

    #[test]
    fn metric_names_parse() {
        for m in [
            Metric::MaxRxPower,
            Metric::MinRmsDs,
            Metric::MinDopplerSpread,
            Metric::MinDelay,
            Metric::MinEavesdropExposure { eavesdropper_id: "eve".into() },
        ] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!("MAX_SNR".parse::<Metric>(), Err(OptimizeError::UnknownMetric(_))));
    }
}
