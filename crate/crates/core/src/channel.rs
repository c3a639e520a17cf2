//! Path loss over tile chains, PDP traversal and channel metrics.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{visibility_with, Vec3, VisibilityKind, SPEED_OF_LIGHT};
use crate::graph::{Configuration, GraphError, LinkIdx, NodeIdx, PweGraph};

/// Physical-layer settings for PDP computation. Defaults follow the
/// factory study: 60 GHz, 30 dBm, 50 bounces, -250 dBm floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub frequency_hz: f64,
    pub tx_power_w: f64,
    pub min_power_dbm: f64,
    pub max_bounces: usize,
    pub a_near: f64,
    pub a_far: f64,
    pub near_field_radius_m: f64,
    /// Add the direct Tx→Rx component when the users see each other.
    pub include_los: bool,
    /// Hard cap on enumerated paths per profile.
    pub max_paths: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            frequency_hz: 60e9,
            tx_power_w: 1.0,
            min_power_dbm: -250.0,
            max_bounces: 50,
            a_near: 1.0,
            a_far: 2.0,
            near_field_radius_m: 2.0,
            include_los: true,
            max_paths: 200_000,
        }
    }
}

impl ChannelParams {
    /// Collimation exponent for a hop of the given length.
    pub fn exponent(&self, length: f64) -> f64 {
        if length <= self.near_field_radius_m {
            self.a_near
        } else {
            self.a_far
        }
    }

    pub fn min_power_w(&self) -> f64 {
        dbm_to_w(self.min_power_dbm)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.a_near < self.a_far && self.a_far <= 2.0) {
            return Err(format!("need a_near < a_far <= 2, got {} / {}", self.a_near, self.a_far));
        }
        if self.max_bounces < 1 {
            return Err("max_bounces must be at least 1".into());
        }
        if !(self.frequency_hz > 0.0) || !(self.tx_power_w > 0.0) {
            return Err("frequency and tx power must be positive".into());
        }
        Ok(())
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// (4πf/c)²
pub fn spreading_constant(frequency_hz: f64) -> f64 {
    let k = 4.0 * PI * frequency_hz / SPEED_OF_LIGHT;
    k * k
}

/// One link of a Tx→Rx path as seen by the loss model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub length: f64,
    pub nlos_factor: f64,
    /// The link touches an active collimating tile.
    pub collimated: bool,
}

/// Received power of a path.
///
/// `gain` is P_t·ε_t·ε_r·Πε_n. Collimated links each contribute their own
/// `(4πf/c)²·l^a` term; every maximal run of non-collimated links
/// contributes one `(4πf/c)²·(Σl)^{a_far}` term. All-collimated paths give
/// the product form, all-plain paths the summed-length form.
pub fn path_power(gain: f64, hops: &[Hop], params: &ChannelParams) -> f64 {
    let k2 = spreading_constant(params.frequency_hz);
    let mut denom = 1.0;
    let mut run = 0.0f64;
    let mut l_prod = 1.0;
    for h in hops {
        l_prod *= h.nlos_factor;
        if h.collimated {
            if run > 0.0 {
                denom *= k2 * run.powf(params.a_far);
                run = 0.0;
            }
            denom *= k2 * h.length.powf(params.exponent(h.length));
        } else {
            run += h.length;
        }
    }
    if run > 0.0 {
        denom *= k2 * run.powf(params.a_far);
    }
    gain * l_prod / denom
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub trace: Vec<LinkIdx>,
    /// Watts.
    pub power: f64,
    /// Seconds.
    pub delay: f64,
    /// Unit vector from the receiver towards the last hop.
    pub arrival_direction: Vec3,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub entries: Vec<PathRecord>,
}

impl PowerDelayProfile {
    pub fn total_power(&self) -> f64 {
        self.entries.iter().map(|e| e.power).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entries ordered by ascending delay (ties by trace).
    pub fn sorted_by_delay(&self) -> Vec<&PathRecord> {
        let mut v: Vec<&PathRecord> = self.entries.iter().collect();
        v.sort_by(|a, b| a.delay.total_cmp(&b.delay).then_with(|| a.trace.cmp(&b.trace)));
        v
    }
}

struct Walk<'a> {
    graph: &'a PweGraph,
    config: &'a Configuration,
    params: &'a ChannelParams,
    rx: NodeIdx,
    floor: f64,
    out: Vec<PathRecord>,
    used: HashSet<LinkIdx>,
    trace: Vec<LinkIdx>,
    hops: Vec<Hop>,
}

impl Walk<'_> {
    fn collimating_active(&self, n: NodeIdx) -> bool {
        self.graph.is_tile(n) && self.config.get(n).is_some() && self.graph.tiles[n].is_collimating()
    }

    fn hop(&self, a: NodeIdx, b: NodeIdx, link: LinkIdx) -> Hop {
        let l = &self.graph.links[link];
        Hop {
            length: l.length,
            nlos_factor: l.nlos_factor,
            collimated: self.collimating_active(a) || self.collimating_active(b),
        }
    }

    fn visit(&mut self, tile: NodeIdx, from: NodeIdx, gain: f64, tiles_seen: usize) -> Result<(), GraphError> {
        if self.out.len() >= self.params.max_paths {
            return Ok(());
        }
        let dist = self.graph.forward_at(self.config, tile, from)?;
        for (port, frac) in dist {
            let next = port.0 as usize;
            let Some(link) = self.graph.link_between(tile, next) else { continue };
            if self.used.contains(&link) {
                continue;
            }
            let hop = self.hop(tile, next, link);
            let g = gain * frac;
            if next == self.rx {
                let arrival = (self.graph.position(tile) - self.graph.position(next)).normalized();
                let eps_r = self.graph.user(next).antenna.gain(arrival);
                self.hops.push(hop);
                self.trace.push(link);
                let power = path_power(g * eps_r, &self.hops, self.params);
                if power >= self.floor && power > 0.0 {
                    let length: f64 = self.trace.iter().map(|&l| self.graph.links[l].length).sum();
                    let delay = length / SPEED_OF_LIGHT;
                    self.out.push(PathRecord {
                        trace: self.trace.clone(),
                        power,
                        delay,
                        arrival_direction: arrival,
                        phase: (2.0 * PI * self.params.frequency_hz * delay).rem_euclid(2.0 * PI),
                    });
                }
                self.hops.pop();
                self.trace.pop();
            } else if self.graph.is_tile(next) && tiles_seen < self.params.max_bounces {
                self.hops.push(hop);
                // Extensions only add loss, so the partial power bounds every descendant.
                if path_power(g, &self.hops, self.params) >= self.floor {
                    self.used.insert(link);
                    self.trace.push(link);
                    self.visit(next, tile, g, tiles_seen + 1)?;
                    self.trace.pop();
                    self.used.remove(&link);
                }
                self.hops.pop();
            }
        }
        Ok(())
    }
}

/// Traverse the configured graph and collect every Tx→Rx path above the floor.
pub fn compute_pdp(
    graph: &PweGraph,
    config: &Configuration,
    tx_id: &str,
    rx_id: &str,
    params: &ChannelParams,
) -> Result<PowerDelayProfile, GraphError> {
    let tx = graph.user_node(tx_id)?;
    let rx = graph.user_node(rx_id)?;
    if tx == rx {
        return Err(GraphError::SameUser);
    }
    let mut walk = Walk {
        graph,
        config,
        params,
        rx,
        floor: params.min_power_w(),
        out: Vec::new(),
        used: HashSet::new(),
        trace: Vec::new(),
        hops: Vec::new(),
    };
    let tx_pos = graph.position(tx);
    let tx_antenna = graph.user(tx).antenna;
    if params.include_los {
        let rx_pos = graph.position(rx);
        let vis = visibility_with(tx_pos, rx_pos, &graph.obstacles, params.frequency_hz, &graph.params.fresnel)?;
        if vis.kind != VisibilityKind::Blocked {
            let d = tx_pos.distance(rx_pos);
            let arrival = (tx_pos - rx_pos).normalized();
            let gain = params.tx_power_w * tx_antenna.gain(rx_pos - tx_pos) * graph.user(rx).antenna.gain(arrival);
            let hop = Hop { length: d, nlos_factor: vis.attenuation_factor, collimated: false };
            let power = path_power(gain, &[hop], params);
            if power >= walk.floor && power > 0.0 {
                let delay = d / SPEED_OF_LIGHT;
                walk.out.push(PathRecord {
                    trace: vec![],
                    power,
                    delay,
                    arrival_direction: arrival,
                    phase: (2.0 * PI * params.frequency_hz * delay).rem_euclid(2.0 * PI),
                });
            }
        }
    }
    for &(tile, link) in graph.neighbors(tx) {
        if !graph.is_tile(tile) {
            continue;
        }
        let eps_t = tx_antenna.gain(graph.position(tile) - tx_pos);
        if eps_t <= 0.0 {
            continue;
        }
        let gain = params.tx_power_w * eps_t;
        let hop = walk.hop(tx, tile, link);
        walk.hops.push(hop);
        if path_power(gain, &walk.hops, params) >= walk.floor {
            walk.used.insert(link);
            walk.trace.push(link);
            walk.visit(tile, tx, gain, 1)?;
            walk.trace.pop();
            walk.used.remove(&link);
        }
        walk.hops.pop();
    }
    if walk.out.len() >= params.max_paths {
        log::warn!("path cap {} reached for {tx_id}->{rx_id}", params.max_paths);
    }
    walk.out.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(PowerDelayProfile { entries: walk.out })
}

/// Root-mean-square delay spread in seconds.
pub fn rms_delay_spread(pdp: &PowerDelayProfile) -> Result<f64, GraphError> {
    let total = pdp.total_power();
    if pdp.is_empty() || !(total > 0.0) {
        return Err(GraphError::EmptyProfile);
    }
    let mean = pdp.entries.iter().map(|e| e.power * e.delay).sum::<f64>() / total;
    let mean_sq = pdp.entries.iter().map(|e| e.power * e.delay * e.delay).sum::<f64>() / total;
    Ok((mean_sq - mean * mean).max(0.0).sqrt())
}

/// Doppler shift of one arrival for a receiver moving at `velocity`.
pub fn doppler_shift(arrival: Vec3, velocity: Vec3, frequency_hz: f64) -> f64 {
    frequency_hz / SPEED_OF_LIGHT * velocity.dot(arrival)
}

/// Spread (max − min) of per-path Doppler shifts, Hz.
pub fn doppler_spread(pdp: &PowerDelayProfile, velocity: Vec3, frequency_hz: f64) -> Result<f64, GraphError> {
    if pdp.is_empty() {
        return Err(GraphError::EmptyProfile);
    }
    let shifts = pdp.entries.iter().map(|e| doppler_shift(e.arrival_direction, velocity, frequency_hz));
    let (lo, hi) = shifts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    Ok(hi - lo)
}

pub const PDP_CSV_HEADER: &str = "path_index,power_dbm,delay_ns,arrival_x,arrival_y,arrival_z";

/// One PDP CSV row without the trailing newline.
pub fn pdp_csv_row(index: usize, power_dbm: f64, delay_ns: f64, arrival: Vec3) -> String {
    format!("{index},{power_dbm},{delay_ns},{},{},{}", arrival.x, arrival.y, arrival.z)
}

/// CSV with one row per path, in profile order.
pub fn pdp_to_csv(pdp: &PowerDelayProfile) -> String {
    let mut s = String::from(PDP_CSV_HEADER);
    s.push('\n');
    for (i, e) in pdp.entries.iter().enumerate() {
        s.push_str(&pdp_csv_row(i, w_to_dbm(e.power), e.delay * 1e9, e.arrival_direction));
        s.push('\n');
    }
    s
}
