mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use pwe_core::channel::{
    compute_pdp, doppler_spread, path_power, pdp_to_csv, rms_delay_spread, ChannelParams, Hop, PathRecord,
    PowerDelayProfile, PDP_CSV_HEADER,
};
use pwe_core::em::{merge, PortId};
use pwe_core::geometry::Vec3;
use pwe_core::graph::Configuration;
use pwe_core::parse_scenario_str;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{route_power, TWO_ROUTE_TOY};

const C: f64 = 299_792_458.0;

fn k_squared(f: f64) -> f64 {
    (4.0 * std::f64::consts::PI * f / C).powi(2)
}

fn random_params(rng: &mut ChaCha8Rng) -> ChannelParams {
    let a_near = rng.gen_range(0.5..1.5);
    ChannelParams {
        frequency_hz: rng.gen_range(1e9..100e9),
        tx_power_w: rng.gen_range(0.01..10.0),
        a_near,
        a_far: rng.gen_range(a_near + 0.1..=2.0),
        near_field_radius_m: rng.gen_range(0.5..5.0),
        ..Default::default()
    }
}

fn random_hops(rng: &mut ChaCha8Rng, collimated: bool) -> Vec<Hop> {
    (0..rng.gen_range(2..7))
        .map(|_| Hop { length: rng.gen_range(0.2..12.0), nlos_factor: rng.gen_range(0.3..=1.0), collimated })
        .collect()
}

#[test]
fn collimated_chain_is_product_of_per_link_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..5 {
        let p = random_params(&mut rng);
        let hops = random_hops(&mut rng, true);
        let gains: Vec<f64> = (0..hops.len() + 1).map(|_| rng.gen_range(0.5..=1.0)).collect();
        let gain = p.tx_power_w * gains.iter().product::<f64>();
        let mut expected = gain;
        for h in &hops {
            let a = if h.length <= p.near_field_radius_m { p.a_near } else { p.a_far };
            expected *= h.nlos_factor / (k_squared(p.frequency_hz) * h.length.powf(a));
        }
        assert_relative_eq!(path_power(gain, &hops, &p), expected, max_relative = 1e-12);
    }
}

#[test]
fn plain_reflector_chain_uses_summed_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let p = random_params(&mut rng);
        let hops = random_hops(&mut rng, false);
        let gain = p.tx_power_w * rng.gen_range(0.5..=1.0);
        let total: f64 = hops.iter().map(|h| h.length).sum();
        let nlos: f64 = hops.iter().map(|h| h.nlos_factor).product();
        let expected = gain * nlos / (k_squared(p.frequency_hz) * total.powf(p.a_far));
        assert_relative_eq!(path_power(gain, &hops, &p), expected, max_relative = 1e-12);
    }
}

fn record(power: f64, delay: f64) -> PathRecord {
    PathRecord { trace: vec![], power, delay, arrival_direction: Vec3::new(1.0, 0.0, 0.0), phase: 0.0 }
}

#[test]
fn rms_delay_spread_matches_analytic_cases() {
    let pdp = PowerDelayProfile { entries: vec![record(1.0, 10e-9), record(3.0, 20e-9)] };
    assert_relative_eq!(rms_delay_spread(&pdp).unwrap(), 4.330127018922193e-9, max_relative = 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let (p, t0, d) = (rng.gen_range(1e-9..1.0), rng.gen_range(0.0..1e-6), rng.gen_range(1e-10..1e-6));
        let pdp = PowerDelayProfile { entries: vec![record(p, t0), record(p, t0 + d)] };
        assert_relative_eq!(rms_delay_spread(&pdp).unwrap(), d / 2.0, max_relative = 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn doppler_spread_is_bounded_by_twice_the_max_shift(
        dirs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..8),
        speed in 0.1f64..30.0,
    ) {
        let entries: Vec<PathRecord> = dirs
            .iter()
            .filter(|d| d.0.abs() + d.1.abs() + d.2.abs() > 1e-3)
            .map(|&(x, y, z)| PathRecord { arrival_direction: Vec3::new(x, y, z).normalized(), ..record(1.0, 0.0) })
            .collect();
        prop_assume!(!entries.is_empty());
        let pdp = PowerDelayProfile { entries };
        let s = doppler_spread(&pdp, Vec3::new(speed, 0.0, 0.0), 60e9).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!(s <= 2.0 * 60e9 * speed / C + 1e-9);
    }
}

#[test]
fn steered_route_power_matches_link_oracle() {
    let params = ChannelParams::default();
    let scenario = parse_scenario_str(TWO_ROUTE_TOY).unwrap();
    let g = &scenario.graph;
    let (tx, rx) = (g.user_node("tx").unwrap(), g.user_node("rx").unwrap());
    let north = g.tile_node("north-0-0").unwrap();
    let f = g.tiles[north].steer(PortId(tx as u32), PortId(rx as u32)).unwrap();
    let mut config = Configuration::empty();
    config.assignment.insert(north, merge(&[f]).unwrap());
    let pdp = compute_pdp(g, &config, "tx", "rx", &params).unwrap();
    // The steered path arrives from the north; the deactivated south tile
    // adds a natural reflection from below.
    assert_eq!(pdp.len(), 2);
    let steered = pdp.entries.iter().find(|e| e.arrival_direction.y > 0.0).unwrap();
    assert_relative_eq!(steered.power, route_power(g, &[tx, north, rx], &params), max_relative = 1e-12);
    let length = g.position(tx).distance(g.position(north)) + g.position(north).distance(g.position(rx));
    assert_relative_eq!(steered.delay, length / C, max_relative = 1e-12);
}

#[test]
fn profile_is_sorted_and_bounded_by_transmit_power() {
    let params = ChannelParams::default();
    let scenario = common::toy_with_users([1.0, 1.5, 0.5], [3.0, 1.5, 0.5]);
    let pdp = compute_pdp(&scenario.graph, &Configuration::empty(), "tx", "rx", &params).unwrap();
    assert!(!pdp.is_empty());
    assert!(pdp.entries.windows(2).all(|w| w[0].delay <= w[1].delay));
    assert!(pdp.entries.iter().all(|e| e.power > 0.0 && e.power <= params.tx_power_w));
    assert!(pdp.entries.iter().all(|e| e.power >= params.min_power_w()));
    let csv = pdp_to_csv(&pdp);
    assert_eq!(csv.lines().next(), Some(PDP_CSV_HEADER));
    assert_eq!(csv.lines().count(), pdp.len() + 1);
}

#[test]
fn unknown_and_identical_users_are_rejected() {
    let params = ChannelParams::default();
    let scenario = common::toy_with_users([1.0, 1.5, 0.5], [3.0, 1.5, 0.5]);
    assert!(compute_pdp(&scenario.graph, &Configuration::empty(), "tx", "nobody", &params).is_err());
    assert!(compute_pdp(&scenario.graph, &Configuration::empty(), "tx", "tx", &params).is_err());
}
