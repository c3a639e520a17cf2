mod common;

use std::io::{BufRead, BufReader, Cursor, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use pwe_core::channel::ChannelParams;
use pwe_core::geometry::Vec3;
use pwe_core::service::{PdpRequest, PdpResponse, PdpService, PdpStatus};
use pwe_core::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{expected_response, random_request, toy_with_users};

fn toy_service() -> (Scenario, PdpService) {
    let s = toy_with_users([1.0, 1.5, 0.5], [3.0, 1.5, 0.5]);
    let objective = pwe_core::UserObjective::new("tx", "rx", vec![(pwe_core::optimize::Metric::MaxRxPower, 1.0)]);
    let config = s.file.optimizer.configure(&s.graph, &[objective], &ChannelParams::default()).unwrap();
    let service = PdpService::new(s.graph.clone(), config, ChannelParams::default());
    (s, service)
}

const TOY_BOUNDS: (Vec3, Vec3) = (Vec3 { x: 0.2, y: 1.1, z: 0.1 }, Vec3 { x: 3.8, y: 3.9, z: 0.9 });

fn check(service: &PdpService, req: &PdpRequest, line: &str) {
    let resp: PdpResponse = serde_json::from_str(line).unwrap();
    let expected = expected_response(service.graph(), service.configuration(), &ChannelParams::default(), req);
    if expected == "unknown_user" {
        assert_eq!(resp.status, PdpStatus::UnknownUser, "{line}");
    } else {
        assert_eq!(resp.status, PdpStatus::Ok, "{line}");
        assert_eq!(resp.to_csv(), expected);
    }
}

#[test]
fn concurrent_tcp_responses_match_the_library() {
    let (_, service) = toy_service();
    let service = Arc::new(service);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = Arc::clone(&service);
    thread::spawn(move || server.serve_tcp(listener));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let requests: Vec<PdpRequest> = (0..100).map(|_| random_request(&mut rng, service.graph(), TOY_BOUNDS)).collect();
    let clients: Vec<_> = requests
        .iter()
        .cloned()
        .map(|req| {
            thread::spawn(move || {
                let mut stream = TcpStream::connect(addr).unwrap();
                writeln!(stream, "{}", serde_json::to_string(&req).unwrap()).unwrap();
                let mut line = String::new();
                BufReader::new(stream).read_line(&mut line).unwrap();
                line
            })
        })
        .collect();
    for (req, client) in requests.iter().zip(clients) {
        check(&service, req, client.join().unwrap().trim_end());
    }
}

#[test]
fn stream_answers_each_line_in_order() {
    let (_, service) = toy_service();
    let input = concat!(
        r#"{"tx_id":"tx","rx_id":"rx"}"#,
        "\n\n",
        r#"{"tx_id":"tx","rx_id":"nobody"}"#,
        "\n",
        "not json\n",
        r#"{"tx_id":"tx","rx_id":"rx","overrides":{"no-such-tile":[]}}"#,
        "\n",
        r#"{"tx_id":"tx","rx_id":"rx","overrides":{"north-0-0":["steer:99>98"]}}"#,
        "\n",
    );
    let mut out = Vec::new();
    service.serve_stream(Cursor::new(input), &mut out).unwrap();
    let lines: Vec<PdpResponse> =
        String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let statuses: Vec<PdpStatus> = lines.iter().map(|r| r.status).collect();
    assert_eq!(
        statuses,
        [PdpStatus::Ok, PdpStatus::UnknownUser, PdpStatus::InvalidConfig, PdpStatus::InvalidConfig, PdpStatus::InvalidConfig]
    );
    assert!(!lines[0].entries.is_empty());
    assert!(lines[2].message.as_deref().unwrap().starts_with("malformed request"));
    assert!(lines[3].message.as_deref().unwrap().contains("no-such-tile"));
}

#[test]
fn deactivating_every_steered_tile_changes_the_profile() {
    let (_, service) = toy_service();
    let plain = PdpRequest { tx_id: "tx".into(), rx_id: "rx".into(), overrides: None, rx_position: None };
    let cleared: std::collections::BTreeMap<String, Vec<String>> = service
        .configuration()
        .assignment
        .keys()
        .map(|&t| (service.graph().tiles[t].tile_id.clone(), vec![]))
        .collect();
    assert!(!cleared.is_empty());
    let off = PdpRequest { overrides: Some(cleared), ..plain.clone() };
    let a = service.handle(&plain);
    let b = service.handle(&off);
    assert_eq!(b.status, PdpStatus::Ok);
    assert_ne!(a.to_csv(), b.to_csv());
    check(&service, &off, &b.to_line());
}
