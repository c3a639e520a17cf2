//! Time-stepped simulation of a mobile receiver in a PWE whose configuration
//! is refreshed over a broadcast control channel.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{compute_pdp, doppler_spread, w_to_dbm, ChannelParams};
use crate::geometry::{Floorplan, Obstacle, Surface, Vec3};
use crate::graph::{Configuration, GraphError, PweGraph};
use crate::optimize::{OptimizeError, OptimizerSpec, Perpendicular, UserObjective};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time {t} s outside trajectory span [{start}, {end}] s")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid broadcast channel: {0}")]
    InvalidBroadcast(String),
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("empty time series")]
    EmptySeries,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

/// Piecewise-linear path travelled at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub waypoints: Vec<Vec3>,
    pub speed_mps: f64,
    #[serde(default)]
    pub start_time_s: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.len() < 2 {
            return Err(SimError::InvalidTrajectory(format!("need at least 2 waypoints, got {}", self.waypoints.len())));
        }
        if !(self.speed_mps > 0.0) || !self.speed_mps.is_finite() {
            return Err(SimError::InvalidTrajectory(format!("speed_mps must be positive, got {}", self.speed_mps)));
        }
        if !self.start_time_s.is_finite() {
            return Err(SimError::InvalidTrajectory("start_time_s must be finite".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed_mps
    }

    pub fn end_time(&self) -> f64 {
        self.start_time_s + self.duration()
    }

    /// Position and unit heading after travelling `s` metres; the heading is
    /// that of the segment being entered at a waypoint and zero at the end.
    fn at_distance(&self, s: f64) -> (Vec3, Vec3) {
        let mut left = s.max(0.0);
        for w in self.waypoints.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= 0.0 {
                continue;
            }
            if left < len {
                let dir = (w[1] - w[0]) * (1.0 / len);
                return (w[0] + dir * left, dir);
            }
            left -= len;
        }
        (*self.waypoints.last().unwrap(), Vec3::ZERO)
    }

    /// Distance travelled by time `t`, clamped to the trajectory span.
    pub fn distance_at(&self, t: f64) -> f64 {
        ((t - self.start_time_s) * self.speed_mps).clamp(0.0, self.length())
    }

    /// Arc-length parameterised position at time `t`.
    pub fn predict_position(&self, t: f64) -> Result<Vec3, SimError> {
        let end = self.end_time();
        if t < self.start_time_s - 1e-9 || t > end + 1e-9 {
            return Err(SimError::TimeOutOfRange { t, start: self.start_time_s, end });
        }
        Ok(self.at_distance(self.distance_at(t)).0)
    }

    /// Position and velocity at `t`; before the start and after the end the
    /// user is parked at the first or last waypoint. At the end time itself
    /// the user still carries the heading it arrives with.
    pub fn state_at(&self, t: f64) -> (Vec3, Vec3) {
        if t < self.start_time_s || t > self.end_time() + 1e-9 {
            let p = if t < self.start_time_s { self.waypoints[0] } else { *self.waypoints.last().unwrap() };
            return (p, Vec3::ZERO);
        }
        let (p, dir) = self.at_distance(self.distance_at(t));
        if dir == Vec3::ZERO {
            let arrival = self.waypoints.windows(2).rev().find(|w| w[0].distance(w[1]) > 0.0);
            if let Some(w) = arrival {
                return (p, (w[1] - w[0]).normalized() * self.speed_mps);
            }
        }
        (p, dir * self.speed_mps)
    }
}

/// Control channel that carries one full schedule per refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BroadcastChannel {
    pub rate_bps: f64,
    pub command_size_bits: u64,
    pub tile_capacity: u64,
    /// Time from schedule start to the deploy message; defaults to the
    /// schedule transmission time.
    pub deploy_latency_s: Option<f64>,
}

impl Default for BroadcastChannel {
    fn default() -> Self {
        BroadcastChannel { rate_bps: 360_000.0, command_size_bits: 360, tile_capacity: 1000, deploy_latency_s: None }
    }
}

impl BroadcastChannel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate_bps > 0.0) {
            return Err(SimError::InvalidBroadcast(format!("rate_bps must be positive, got {}", self.rate_bps)));
        }
        if self.command_size_bits == 0 || self.tile_capacity == 0 {
            return Err(SimError::InvalidBroadcast("command_size_bits and tile_capacity must be positive".into()));
        }
        if let Some(l) = self.deploy_latency_s {
            if !(l >= 0.0) {
                return Err(SimError::InvalidBroadcast(format!("deploy_latency_s must be non-negative, got {l}")));
            }
        }
        Ok(())
    }

    pub fn schedule_size_bits(&self) -> u64 {
        self.command_size_bits * self.tile_capacity
    }

    pub fn refresh_period_s(&self) -> f64 {
        self.schedule_size_bits() as f64 / self.rate_bps
    }

    pub fn deploy_latency(&self) -> f64 {
        self.deploy_latency_s.unwrap_or_else(|| self.refresh_period_s())
    }

    /// Deploy instants in `[start, end]`: the pre-deployed configuration at
    /// `start`, then one per schedule broadcast.
    pub fn deploy_times(&self, start: f64, end: f64) -> Vec<f64> {
        let period = self.refresh_period_s();
        let mut out = vec![start];
        let mut k = 0u64;
        loop {
            let t = start + self.deploy_latency() + k as f64 * period;
            if t > end + 1e-9 {
                break;
            }
            if t > start + 1e-12 {
                out.push(t);
            }
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PweMode {
    On,
    Off,
}

impl PweMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PweMode::On => "on",
            PweMode::Off => "off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time_s: f64,
    pub distance_m: f64,
    pub doppler_spread_hz: f64,
    pub rx_power_dbm: f64,
    pub config_age_s: f64,
    /// Number of arriving paths.
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub mode: PweMode,
    pub samples: Vec<Sample>,
    pub deploy_times: Vec<f64>,
}

pub const TIME_SERIES_CSV_HEADER: &str = "time_s,distance_m,doppler_spread_hz,rx_power_dbm,config_age_s,mode";

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TIME_SERIES_CSV_HEADER);
        s.push('\n');
        for x in &self.samples {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                x.time_s,
                x.distance_m,
                x.doppler_spread_hz,
                x.rx_power_dbm,
                x.config_age_s,
                self.mode.as_str()
            );
        }
        s
    }
}

/// Config age at each sample time given the deploy instants (sorted).
pub fn config_ages(sample_times: &[f64], deploys: &[f64]) -> Vec<f64> {
    sample_times
        .iter()
        .map(|&t| {
            let last = deploys.iter().copied().filter(|&d| d <= t + 1e-9).fold(f64::NAN, f64::max);
            if last.is_nan() {
                0.0
            } else {
                (t - last).max(0.0)
            }
        })
        .collect()
}

/// (distance, config age) pairs of a series.
pub fn configuration_age_profile(series: &TimeSeries) -> Result<Vec<(f64, f64)>, SimError> {
    if series.samples.is_empty() {
        return Err(SimError::EmptySeries);
    }
    Ok(series.samples.iter().map(|s| (s.distance_m, s.config_age_s)).collect())
}

/// Travelled distances at which the Doppler spread collapses: the sample
/// falls below half of its predecessor by more than `min_drop_hz`.
pub fn spread_resets(series: &TimeSeries, min_drop_hz: f64) -> Vec<f64> {
    series
        .samples
        .windows(2)
        .filter(|w| w[1].doppler_spread_hz < 0.5 * w[0].doppler_spread_hz && w[0].doppler_spread_hz - w[1].doppler_spread_hz > min_drop_hz)
        .map(|w| w[1].distance_m)
        .collect()
}

/// Fundamental period (m) of the spread sawtooth.
///
/// Returns the largest spacing of which at least 90% of the gaps between
/// consecutive resets are whole multiples, to within half a sample step.
/// Teeth with no visible reset are thus tolerated. `None` with fewer than
/// three resets.
pub fn sawtooth_period(series: &TimeSeries, min_drop_hz: f64) -> Option<f64> {
    let resets = spread_resets(series, min_drop_hz);
    if resets.len() < 3 {
        return None;
    }
    let mut steps: Vec<f64> = series.samples.windows(2).map(|w| w[1].distance_m - w[0].distance_m).filter(|d| *d > 0.0).collect();
    steps.sort_by(f64::total_cmp);
    let step = *steps.get(steps.len() / 2)?;
    let tol = step / 2.0;
    let gaps: Vec<f64> = resets.windows(2).map(|w| w[1] - w[0]).collect();
    let fits = |p: f64| {
        let ok = gaps
            .iter()
            .filter(|&&g| {
                let m = (g / p).round();
                m >= 1.0 && (g - m * p).abs() <= tol
            })
            .count();
        ok as f64 >= 0.9 * gaps.len() as f64
    };
    let mut candidates: Vec<f64> =
        gaps.iter().flat_map(|&g| (1..=8).map(move |k| g / k as f64)).filter(|&p| p >= 2.0 * step).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.into_iter().find(|&p| fits(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub dt_s: f64,
    /// Defaults to the trajectory duration.
    pub duration_s: Option<f64>,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { dt_s: 0.05, duration_s: None, seed: 0 }
    }
}

/// Everything a run needs; the graph holds the receiver at an arbitrary
/// position and is re-linked per sample.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub graph: PweGraph,
    pub channel: ChannelParams,
    pub objective: UserObjective,
    pub optimizer: OptimizerSpec,
    pub trajectory: Trajectory,
    pub broadcast: BroadcastChannel,
    pub params: SimParams,
}

impl SimSetup {
    pub fn validate(&self) -> Result<(), SimError> {
        self.trajectory.validate()?;
        self.broadcast.validate()?;
        if !(self.params.dt_s > 0.0) {
            return Err(SimError::InvalidParams(format!("dt_s must be positive, got {}", self.params.dt_s)));
        }
        if let Some(d) = self.params.duration_s {
            if !(d >= 0.0) {
                return Err(SimError::InvalidParams(format!("duration_s must be non-negative, got {d}")));
            }
        }
        self.graph.user_node(&self.objective.tx_id)?;
        self.graph.user_node(&self.objective.rx_id)?;
        self.objective.validate()?;
        Ok(())
    }

    fn duration(&self) -> f64 {
        self.params.duration_s.unwrap_or_else(|| self.trajectory.duration())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let start = self.trajectory.start_time_s;
        let n = (self.duration() / self.params.dt_s + 1e-9).floor() as usize;
        (0..=n).map(|i| start + i as f64 * self.params.dt_s).collect()
    }

    /// Configuration for the receiver parked at `position` moving along `velocity`.
    ///
    /// The final link is asked to meet the trajectory at a right angle; when
    /// no path satisfies that, the tolerance is doubled until it does, then
    /// dropped. `hold` lists the (position, velocity) states the configuration
    /// will serve until the next deploy: tiles that lose sight of the receiver
    /// there, or whose link would meet a later heading off the right angle,
    /// are avoided as the last hop unless nothing else is left.
    pub fn plan(&self, position: Vec3, velocity: Vec3, hold: &[(Vec3, Vec3)]) -> Result<Configuration, SimError> {
        let rx_id = &self.objective.rx_id;
        let graph = self.graph.with_user_position(rx_id, position)?;
        let rx = graph.user_node(rx_id)?;
        let finals: Vec<usize> = graph.neighbors(rx).iter().map(|&(n, _)| n).filter(|&n| graph.is_tile(n)).collect();
        let mut lost = BTreeSet::new();
        let mut headings: Vec<Vec3> = Vec::new();
        for &(q, w) in hold {
            let seen: BTreeSet<usize> = self.graph.tiles_in_sight(q)?.into_iter().collect();
            lost.extend(finals.iter().copied().filter(|n| !seen.contains(n)));
            if w.norm() > 0.0 {
                let w = w.normalized();
                if !headings.iter().any(|h| h.dot(w) > 1.0 - 1e-9) {
                    headings.push(w);
                }
            }
        }
        let base = self.objective.constraints.perpendicular.map_or(0.1, |p| p.tolerance);
        let mut tolerances = Vec::new();
        if velocity.norm() > 0.0 {
            let mut tol = base;
            while tol < 1.0 {
                tolerances.push(Some(tol));
                tol *= 2.0;
            }
        }
        tolerances.push(None);
        let mut last_err = None;
        for keep_sight in [true, false] {
            for &tol in &tolerances {
                let mut avoid: BTreeSet<usize> = if keep_sight { lost.clone() } else { BTreeSet::new() };
                if let Some(tol) = tol {
                    avoid.extend(finals.iter().copied().filter(|&t| {
                        let dir = (position - graph.position(t)).normalized();
                        headings.iter().any(|h| dir.dot(*h).abs() > tol)
                    }));
                }
                let mut objective = self.objective.clone();
                objective.rx_velocity = Some(velocity);
                objective.constraints.perpendicular = tol.map(|tolerance| Perpendicular { trajectory: velocity, tolerance });
                objective
                    .constraints
                    .forbidden_links
                    .extend(avoid.iter().map(|&t| (graph.tiles[t].tile_id.clone(), rx_id.clone())));
                match self.optimizer.configure(&graph, std::slice::from_ref(&objective), &self.channel) {
                    Ok(c) => return Ok(c),
                    Err(e @ OptimizeError::NoFeasiblePath { .. }) => {
                        log::debug!("no path at tolerance {tol:?} for position {position:?}");
                        last_err = Some(e);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if lost.is_empty() {
                break;
            }
        }
        Err(last_err.unwrap().into())
    }
}

/// Run one mode of the scenario.
pub fn run_scenario(setup: &SimSetup, mode: PweMode) -> Result<TimeSeries, SimError> {
    setup.validate()?;
    let times = setup.sample_times();
    let start = setup.trajectory.start_time_s;
    let end = *times.last().unwrap();
    let deploys = match mode {
        PweMode::On => setup.broadcast.deploy_times(start, end),
        PweMode::Off => vec![start],
    };
    let ages = config_ages(&times, &deploys);
    let mut configs: Vec<Configuration> = Vec::with_capacity(deploys.len());
    for (i, &d) in deploys.iter().enumerate() {
        let config = match mode {
            PweMode::On => {
                let (p, v) = setup.trajectory.state_at(d);
                let until = deploys.get(i + 1).copied().unwrap_or(end).min(end);
                let hold: Vec<(Vec3, Vec3)> = times
                    .iter()
                    .filter(|&&t| t > d && t < until + 1e-9)
                    .map(|&t| setup.trajectory.state_at(t))
                    .collect();
                // A parked user still gets its last heading for the perpendicular objective.
                let v = if v.norm() > 0.0 { v } else { setup.trajectory.state_at(d - setup.params.dt_s).1 };
                match setup.plan(p, v, &hold) {
                    Ok(c) => c,
                    Err(SimError::Optimize(OptimizeError::NoFeasiblePath { .. })) if !configs.is_empty() => {
                        log::warn!("no path for the deploy at {d} s; keeping the previous configuration");
                        configs.last().unwrap().clone()
                    }
                    Err(e) => return Err(e),
                }
            }
            PweMode::Off => Configuration::empty(),
        };
        configs.push(config);
    }
    let rx = &setup.objective.rx_id;
    let mut samples = Vec::with_capacity(times.len());
    let mut k = 0;
    let mut graph = setup.graph.clone();
    for (i, &t) in times.iter().enumerate() {
        while k + 1 < deploys.len() && deploys[k + 1] <= t + 1e-9 {
            k += 1;
        }
        let (pos, vel) = setup.trajectory.state_at(t);
        graph.move_user(rx, pos)?;
        let pdp = compute_pdp(&graph, &configs[k], &setup.objective.tx_id, rx, &setup.channel)?;
        let (spread, power) = if pdp.is_empty() {
            (0.0, setup.channel.min_power_dbm)
        } else {
            (doppler_spread(&pdp, vel, setup.channel.frequency_hz)?, w_to_dbm(pdp.total_power()))
        };
        samples.push(Sample {
            time_s: t,
            distance_m: setup.trajectory.distance_at(t),
            doppler_spread_hz: spread,
            rx_power_dbm: power,
            config_age_s: ages[i],
            paths: pdp.len(),
        });
    }
    Ok(TimeSeries { mode, samples, deploy_times: deploys })
}

/// Run both modes as independent jobs.
pub fn run_both(setup: &SimSetup) -> Result<(TimeSeries, TimeSeries), SimError> {
    let (on, off) = std::thread::scope(|s| {
        let on = s.spawn(|| run_scenario(setup, PweMode::On));
        let off = s.spawn(|| run_scenario(setup, PweMode::Off));
        (on.join().expect("simulation thread panicked"), off.join().expect("simulation thread panicked"))
    });
    Ok((on?, off?))
}

/// Z-shaped corridor: a first leg along +x, a middle leg along +y and a
/// last leg along +x, all `width_m` wide, with solid blocks filling the
/// bounding box outside the corridor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZCorridor {
    pub first_leg_m: f64,
    pub middle_leg_m: f64,
    pub last_leg_m: f64,
    pub width_m: f64,
    pub ceiling_height_m: f64,
}

impl Default for ZCorridor {
    fn default() -> Self {
        ZCorridor { first_leg_m: 6.0, middle_leg_m: 9.0, last_leg_m: 9.0, width_m: 3.0, ceiling_height_m: 3.0 }
    }
}

impl ZCorridor {
    /// Corners in counter-clockwise order (interior on the left).
    pub fn outline(&self) -> Vec<(f64, f64)> {
        let (a, m, c, w) = (self.first_leg_m, self.middle_leg_m, self.last_leg_m, self.width_m);
        vec![(0.0, 0.0), (a, 0.0), (a, m - w), (a - w + c, m - w), (a - w + c, m), (a - w, m), (a - w, w), (0.0, w)]
    }

    pub fn validate(&self) -> Result<(), String> {
        let w = self.width_m;
        if !(w > 0.0 && self.ceiling_height_m > 0.0) {
            return Err("width_m and ceiling_height_m must be positive".into());
        }
        if !(self.first_leg_m > w && self.middle_leg_m > 2.0 * w && self.last_leg_m > w) {
            return Err("legs must be longer than the corridor width (middle leg: twice the width)".into());
        }
        Ok(())
    }

    pub fn floorplan(&self) -> Floorplan {
        let h = self.ceiling_height_m;
        let up = Vec3::new(0.0, 0.0, h);
        let pts = self.outline();
        let mut surfaces = Vec::new();
        for i in 0..pts.len() {
            let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
            surfaces.push(Surface {
                id: format!("wall{i}"),
                origin: Vec3::new(p.0, p.1, 0.0),
                edge_u: up,
                edge_v: Vec3::new(q.0 - p.0, q.1 - p.1, 0.0),
            });
        }
        let (a, m, c, w) = (self.first_leg_m, self.middle_leg_m, self.last_leg_m, self.width_m);
        let ceiling = |id: &str, x0: f64, y0: f64, x1: f64, y1: f64| Surface {
            id: id.into(),
            origin: Vec3::new(x0, y0, h),
            edge_u: Vec3::new(0.0, y1 - y0, 0.0),
            edge_v: Vec3::new(x1 - x0, 0.0, 0.0),
        };
        surfaces.push(ceiling("ceiling0", 0.0, 0.0, a, w));
        surfaces.push(ceiling("ceiling1", a - w, w, a, m - w));
        surfaces.push(ceiling("ceiling2", a - w, m - w, a - w + c, m));
        let obstacles = vec![
            Obstacle::new(Vec3::new(a, 0.0, 0.0), Vec3::new(a - w + c, m - w, h)),
            Obstacle::new(Vec3::new(0.0, w, 0.0), Vec3::new(a - w, m, h)),
        ];
        Floorplan { surfaces, obstacles, ceiling_height: h }
    }

    /// Centre-line route from the start of the first leg to the end of the last leg.
    pub fn centre_line(&self, height: f64) -> Vec<Vec3> {
        let (a, m, c, w) = (self.first_leg_m, self.middle_leg_m, self.last_leg_m, self.width_m);
        let half = w / 2.0;
        vec![
            Vec3::new(0.0, half, height),
            Vec3::new(a - half, half, height),
            Vec3::new(a - half, m - half, height),
            Vec3::new(a - w + c, m - half, height),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: f64) -> Trajectory {
        Trajectory { waypoints: vec![Vec3::ZERO, Vec3::new(len, 0.0, 0.0)], speed_mps: 1.0, start_time_s: 2.0 }
    }

    #[test]
    fn positions_along_straight_and_l_paths() {
        let t = line(10.0);
        assert_eq!(t.predict_position(2.0).unwrap(), Vec3::ZERO);
        assert_eq!(t.predict_position(7.0).unwrap(), Vec3::new(5.0, 0.0, 0.0));
        assert!(matches!(t.predict_position(12.5), Err(SimError::TimeOutOfRange { .. })));
        assert!(matches!(t.predict_position(1.0), Err(SimError::TimeOutOfRange { .. })));
        let l = Trajectory {
            waypoints: vec![Vec3::ZERO, Vec3::new(6.0, 0.0, 0.0), Vec3::new(6.0, 4.0, 0.0)],
            speed_mps: 1.0,
            start_time_s: 0.0,
        };
        assert!(l.predict_position(8.0).unwrap().distance(Vec3::new(6.0, 2.0, 0.0)) < 1e-12);
        assert_eq!(l.state_at(6.0).1, Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(l.state_at(20.0), (Vec3::new(6.0, 4.0, 0.0), Vec3::ZERO));
    }

    #[test]
    fn trajectory_validation() {
        let mut t = line(1.0);
        t.speed_mps = -1.0;
        assert!(t.validate().is_err());
        t.speed_mps = 1.0;
        t.waypoints.pop();
        assert!(t.validate().is_err());
    }

    #[test]
    fn broadcast_period_and_deploys() {
        let b = BroadcastChannel::default();
        assert_eq!(b.schedule_size_bits(), 360_000);
        assert_eq!(b.refresh_period_s(), 1.0);
        assert_eq!(b.deploy_times(0.0, 3.5), vec![0.0, 1.0, 2.0, 3.0]);
        let fast = BroadcastChannel { rate_bps: 720_000.0, ..b };
        assert_eq!(fast.deploy_times(0.0, 1.2), vec![0.0, 0.5, 1.0]);
        let late = BroadcastChannel { deploy_latency_s: Some(0.25), ..b };
        assert_eq!(late.deploy_times(0.0, 2.0), vec![0.0, 0.25, 1.25]);
    }

    #[test]
    fn ages_reset_at_deploys() {
        let ages = config_ages(&[0.0, 0.5, 1.0, 1.5], &[0.0, 1.0]);
        assert_eq!(ages, vec![0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn corridor_outline_is_closed_and_valid() {
        let z = ZCorridor::default();
        let fp = z.floorplan();
        fp.validate().unwrap();
        assert_eq!(fp.surfaces.len(), 11);
        for s in &fp.surfaces[..8] {
            // Wall normals are horizontal.
            assert!(s.normal().z.abs() < 1e-12);
        }
        assert_eq!(fp.surfaces[8].normal(), Vec3::new(0.0, 0.0, -1.0));
    }

    fn spread_series(spread: impl Fn(f64) -> f64) -> TimeSeries {
        let samples = (0..=200)
            .map(|i| {
                let d = i as f64 * 0.05;
                Sample {
                    time_s: d,
                    distance_m: d,
                    doppler_spread_hz: spread(d),
                    rx_power_dbm: -70.0,
                    config_age_s: 0.0,
                    paths: 2,
                }
            })
            .collect();
        TimeSeries { mode: PweMode::On, samples, deploy_times: vec![] }
    }

    #[test]
    fn sawtooth_period_survives_missing_teeth() {
        let tooth = |p: f64| move |d: f64| 100.0 * ((d + 1e-9) % p);
        assert!((sawtooth_period(&spread_series(tooth(1.0)), 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((sawtooth_period(&spread_series(tooth(0.5)), 1.0).unwrap() - 0.5).abs() < 1e-9);
        // Flat stretches hide every other reset.
        let gappy = spread_series(|d: f64| if (d as u32) % 3 == 1 { 0.0 } else { 100.0 * ((d + 1e-9) % 1.0) });
        assert!((sawtooth_period(&gappy, 1.0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(sawtooth_period(&spread_series(|_| 5.0), 1.0), None);
    }
}
