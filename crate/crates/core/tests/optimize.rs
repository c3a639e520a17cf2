mod common;

use std::collections::BTreeMap;

use pwe_core::channel::{compute_pdp, ChannelParams};
use pwe_core::em::PortId;
use pwe_core::graph::Configuration;
use pwe_core::optimize::backprop::{build_mlp, train, WallMlp};
use pwe_core::optimize::routing::{k_shortest_paths, shortest_path, RoutingGraph};
use pwe_core::optimize::{
    backprop_configure, explorer_search, k_shortest_configure, BackpropOptions, ExplorerOptions, Metric, PathOptions,
    UserObjective,
};
use pwe_core::{parse_scenario_str, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{enumerate_routes, reference_distance, reference_least_loss, route_power, toy_with_users, TWO_ROUTE_TOY, TWO_WALL_TOY};

#[test]
fn routing_matches_reference_dijkstra_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..50 {
        let n = rng.gen_range(4..16);
        let mut edges = Vec::new();
        let mut g = RoutingGraph::new(n);
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.gen_bool(0.3) {
                    let c = (rng.gen_range(0.0..40.0) * 1e6f64).round() / 1e6;
                    edges.push((u, v, c));
                    g.add_edge(u, v, c);
                }
            }
        }
        let expected = reference_distance(n, &edges, 0, n - 1);
        let got = shortest_path(&g, 0, n - 1, &[], &Default::default());
        let k1 = k_shortest_paths(&g, 0, n - 1, 1);
        match (expected, got) {
            (None, None) => assert!(k1.is_empty(), "case {case}"),
            (Some(d), Some(r)) => {
                assert!((r.cost() - d).abs() < 1e-6, "case {case}: {} vs {d}", r.cost());
                assert_eq!(g.path_cost_q(&r.nodes), Some(r.cost_q));
                assert_eq!(k1.len(), 1);
                assert_eq!(k1[0].cost_q, r.cost_q);
            }
            (e, r) => panic!("case {case}: reference {e:?}, routing {r:?}"),
        }
    }
}

#[test]
fn single_path_search_matches_reference_on_random_placements() {
    let params = ChannelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    for case in 0..50 {
        let tx = [rng.gen_range(0.3..1.7), rng.gen_range(1.1..3.8), rng.gen_range(0.2..0.8)];
        let rx = [rng.gen_range(2.3..3.7), rng.gen_range(1.1..3.8), rng.gen_range(0.2..0.8)];
        let scenario = toy_with_users(tx, rx);
        let g = &scenario.graph;
        let (t, r) = (g.user_node("tx").unwrap(), g.user_node("rx").unwrap());
        let objective = UserObjective::new("tx", "rx", vec![(Metric::MaxRxPower, 1.0)]);
        let options = PathOptions { k: 1, candidate_slack: 0, absorb_unused: false };
        let found = k_shortest_configure(g, &[objective], &params, &options);
        match (reference_least_loss(g, t, r, &params), found) {
            (Some(d), Ok(pc)) => {
                assert_eq!(pc.paths.len(), 1);
                let p = &pc.paths[0];
                assert!((p.cost_db - d).abs() < 1e-4, "case {case}: {} vs {d}", p.cost_db);
                assert_eq!((p.nodes[0], *p.nodes.last().unwrap()), (t, r));
                compared += 1;
            }
            (None, Err(_)) => {}
            (d, f) => panic!("case {case}: reference {d:?}, search {f:?}"),
        }
    }
    assert!(compared >= 40, "only {compared} placements had a path");
}

#[test]
fn two_shortest_paths_match_exhaustive_enumeration_on_toy() {
    let params = ChannelParams::default();
    let scenario = toy_with_users([1.0, 1.5, 0.5], [3.0, 1.5, 0.5]);
    let g = &scenario.graph;
    let (tx, rx) = (g.user_node("tx").unwrap(), g.user_node("rx").unwrap());
    let mut all = Vec::new();
    enumerate_routes(g, tx, rx, &params, &mut vec![tx], 0.0, &mut all);
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let objective = UserObjective::new("tx", "rx", vec![(Metric::MaxRxPower, 1.0)]);
    let pc = k_shortest_configure(g, &[objective], &params, &PathOptions { k: 2, ..Default::default() }).unwrap();
    assert_eq!(pc.paths.len(), 2);
    for (p, (cost, _)) in pc.paths.iter().zip(&all) {
        assert!((p.cost_db - cost).abs() < 1e-4, "{} vs {cost}", p.cost_db);
    }
    let tiles: Vec<String> = pc.paths.iter().map(|p| g.node_id(p.nodes[1]).to_string()).collect();
    assert_eq!(tiles, ["north-0-0", "north-1-0"]);
}

#[test]
fn explorer_recovers_brute_force_best_route() {
    let params = ChannelParams::default();
    let scenario = parse_scenario_str(TWO_ROUTE_TOY).unwrap();
    let g = &scenario.graph;
    let (tx, rx) = (g.user_node("tx").unwrap(), g.user_node("rx").unwrap());
    let mut routes = Vec::new();
    enumerate_routes(g, tx, rx, &params, &mut vec![tx], 0.0, &mut routes);
    let powers: Vec<(f64, Vec<usize>)> = routes.iter().map(|(_, n)| (route_power(g, n, &params), n.clone())).collect();
    let best = powers.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let runner_up = powers.iter().filter(|p| p.1 != best.1).map(|p| p.0).fold(0.0, f64::max);
    let gap_db = 10.0 * (best.0 / runner_up).log10();
    assert!((gap_db - 10.0).abs() < 0.5, "route gap {gap_db} dB");
    let objective = UserObjective::new("tx", "rx", vec![(Metric::MaxRxPower, 1.0)]);
    let options = ExplorerOptions { seed: 5, rounds: 50, ..Default::default() };
    let result = explorer_search(g, &[objective], &params, &options).unwrap();
    assert_eq!(result.top_routes[0].nodes, best.1);
}

fn random_mlp(rng: &mut ChaCha8Rng) -> WallMlp {
    let hidden = rng.gen_range(1..4);
    let mut widths = vec![1];
    for _ in 0..hidden {
        widths.push(rng.gen_range(1..5));
    }
    widths.push(rng.gen_range(1..3));
    let layers: Vec<Vec<usize>> = widths.iter().map(|&w| (0..w).collect()).collect();
    let gains = widths
        .windows(2)
        .map(|w| (0..w[0]).map(|_| (0..w[1]).map(|_| rng.gen_range(0.1..1.0)).collect()).collect())
        .collect();
    let mut target = vec![0.0; *widths.last().unwrap()];
    target[0] = 1.0;
    WallMlp { layers, gains, target }
}

#[test]
fn backprop_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..30 {
        let mlp = random_mlp(&mut rng);
        let w: Vec<Vec<Vec<f64>>> = mlp
            .gains
            .iter()
            .map(|l| l.iter().map(|r| r.iter().map(|_| rng.gen_range(0.05..1.0)).collect()).collect())
            .collect();
        let grad = mlp.gradient(&w);
        let h = 1e-6;
        for k in 0..w.len() {
            for i in 0..w[k].len() {
                for j in 0..w[k][i].len() {
                    let mut up = w.clone();
                    let mut down = w.clone();
                    up[k][i][j] += h;
                    down[k][i][j] -= h;
                    let fd = (mlp.loss(&up) - mlp.loss(&down)) / (2.0 * h);
                    let scale = fd.abs().max(grad[k][i][j].abs()).max(1e-3);
                    assert!(
                        (grad[k][i][j] - fd).abs() <= 1e-5 * scale,
                        "case {case} w[{k}][{i}][{j}]: {} vs {fd}",
                        grad[k][i][j]
                    );
                }
            }
        }
    }
}

#[test]
fn backprop_training_decreases_loss() {
    let params = ChannelParams::default();
    let scenario = parse_scenario_str(TWO_WALL_TOY).unwrap();
    let objective = UserObjective::new("tx", "rx", vec![(Metric::MaxRxPower, 1.0)]);
    let (mlp, route) = build_mlp(&scenario.graph, &objective, &params).unwrap();
    assert_eq!(route, ["west", "east"]);
    let (_, history, _) = train(&mlp, &BackpropOptions::default());
    assert!(history.last().unwrap() < history.first().unwrap());
}

fn rx_power(s: &Scenario, c: &Configuration, params: &ChannelParams) -> f64 {
    compute_pdp(&s.graph, c, "tx", "rx", params).unwrap().total_power()
}

#[test]
fn backprop_reaches_ninety_percent_of_exhaustive_best() {
    let params = ChannelParams::default();
    let scenario = parse_scenario_str(TWO_WALL_TOY).unwrap();
    let g = &scenario.graph;
    let objective = UserObjective::new("tx", "rx", vec![(Metric::MaxRxPower, 1.0)]);
    let result = backprop_configure(g, &objective, &params, &BackpropOptions::default()).unwrap();
    let got = rx_power(&scenario, &result.configuration, &params);

    // Every tile on the wall route is left deactivated or steers from a
    // node of the previous layer to a node of the next one.
    let (mlp, _) = build_mlp(g, &objective, &params).unwrap();
    let mut choices: Vec<(usize, Vec<Option<pwe_core::em::EmFunction>>)> = Vec::new();
    for k in 1..mlp.layers.len() - 1 {
        for &t in &mlp.layers[k] {
            let mut opts = vec![None];
            for &a in &mlp.layers[k - 1] {
                for &b in &mlp.layers[k + 1] {
                    if let Some(f) = g.tiles[t].steer(PortId(a as u32), PortId(b as u32)) {
                        opts.push(Some(f));
                    }
                }
            }
            choices.push((t, opts));
        }
    }
    let total: usize = choices.iter().map(|c| c.1.len()).product();
    assert!(total <= 5000, "{total} configurations");
    let mut best = 0.0f64;
    for mut code in 0..total {
        let mut assignment = BTreeMap::new();
        for (t, opts) in &choices {
            if let Some(f) = &opts[code % opts.len()] {
                assignment.insert(*t, pwe_core::em::merge(std::slice::from_ref(f)).unwrap());
            }
            code /= opts.len();
        }
        let config = Configuration { assignment, ..Default::default() };
        best = best.max(rx_power(&scenario, &config, &params));
    }
    assert!(got >= 0.9 * best, "backprop {got:e} W vs exhaustive {best:e} W");
}
