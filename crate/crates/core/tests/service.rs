use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use mediarank::server::{self, QueryService};
use mediarank::synth::{self, SynthConfig};
use mediarank::{build_index, store, AggregationStrategy, Method};
use serde_json::Value;

struct Server {
    addr: SocketAddr,
    _rt: tokio::runtime::Runtime,
    service: Arc<QueryService>,
}

fn start(pca: bool) -> Server {
    let records =
        synth::generate(&SynthConfig { clusters: 3, per_cluster: 10, dim: 6, frames: 2, sigma: 0.2, seed: 4 }).unwrap();
    let agg = AggregationStrategy::mean_pool();
    let model = pca.then(|| store::fit_index_pca(&records, &agg, 0.9).unwrap());
    let repo = build_index(&records, agg, model, pca).unwrap();
    let service = Arc::new(QueryService::new(repo).unwrap());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(server::serve_listener(listener, service.clone()));
    Server { addr, _rt: rt, service }
}

fn send(addr: SocketAddr, raw: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
    s.write_all(raw.as_bytes()).unwrap();
    let mut reply = String::new();
    s.read_to_string(&mut reply).unwrap();
    let status = reply[9..12].parse().unwrap();
    let body = reply.split_once("\r\n\r\n").unwrap().1;
    (status, serde_json::from_str(body).unwrap_or(Value::Null))
}

fn query(addr: SocketAddr, body: &str) -> (u16, Value) {
    send(
        addr,
        &format!(
            "POST /query HTTP/1.1\r\nHost: t\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
    )
}

#[test]
fn health_describes_the_index() {
    let s = start(true);
    let (status, v) = send(s.addr, "GET /health HTTP/1.1\r\nHost: t\r\nConnection: close\r\n\r\n");
    assert_eq!(status, 200);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["items"], 30);
    assert_eq!(v["query_dim"], 6);
    assert_eq!(v["dim"], s.service.repository().dim());
    assert_eq!(v["aggregation"], "mean");
    assert_eq!(v["pca"], true);
    assert_eq!(v["normalized"], true);
}

#[test]
fn seed_id_query_defaults_to_par() {
    let s = start(false);
    let (status, v) = query(s.addr, r#"{"seed_id":"c001-0003"}"#);
    assert_eq!(status, 200);
    assert_eq!(v["method"], "par");
    assert_eq!(v["k"], 10);
    assert_eq!(v["delta_t"], 0.5);
    let results = v["results"].as_array().unwrap();
    assert_eq!(results[0]["id"], "c001-0003");
    assert_eq!(results[0]["distance"], 0.0);
    let expected = s.service.repository().search_by_id("c001-0003", 10, Method::Par, None).unwrap();
    let got: Vec<&str> = results.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(got, expected.ids().collect::<Vec<_>>());
}

#[test]
fn raw_seed_vectors_go_through_the_index_projection() {
    let s = start(true);
    let (status, v) = query(s.addr, r#"{"seed_vector":[1,0,0,0,0,0],"k":3,"method":"euclidean"}"#);
    assert_eq!(status, 200);
    assert_eq!(v["delta_t"], Value::Null);
    assert_eq!(v["results"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_requests_are_rejected_with_json_errors() {
    let s = start(false);
    let (status, v) = query(s.addr, r#"{"seed_vector":[1,2,3]}"#);
    assert_eq!(status, 400);
    assert_eq!(v["expected_dim"], 6);

    let (status, _) = query(s.addr, r#"{"seed_id":"missing"}"#);
    assert_eq!(status, 404);

    for body in [
        "{not json",
        r#"{"seed_id":"c000-0000","bogus":1}"#,
        r#"{"seed_id":"c000-0000","seed_vector":[0,0,0,0,0,1]}"#,
        r#"{}"#,
        r#"{"seed_id":"c000-0000","k":0}"#,
        r#"{"seed_id":"c000-0000","method":"hamming"}"#,
        r#"{"seed_id":"c000-0000","delta_t":1.5}"#,
        r#"{"seed_vector":[0,0,0,0,0,0],"method":"par"}"#,
    ] {
        let (status, v) = query(s.addr, body);
        assert_eq!(status, 400, "{body}");
        assert!(v["error"].is_string(), "{body}");
    }
}

#[test]
fn unknown_routes_are_not_found() {
    let s = start(false);
    let (status, _) = send(s.addr, "GET /nope HTTP/1.1\r\nHost: t\r\nConnection: close\r\n\r\n");
    assert_eq!(status, 404);
}

#[test]
fn concurrent_mixed_queries_match_sequential_answers() {
    let s = start(false);
    let bodies: Vec<String> = (0..40)
        .map(|i| format!(r#"{{"seed_id":"c00{}-000{}","k":{},"method":"{}"}}"#, i % 3, i % 10, 1 + i % 7, ["par", "euclidean", "cosine"][i % 3]))
        .collect();
    let expected: Vec<String> = bodies.iter().map(|b| s.service.handle_query(b.as_bytes()).body).collect();
    let handles: Vec<_> = bodies
        .iter()
        .cloned()
        .map(|b| {
            let addr = s.addr;
            std::thread::spawn(move || query(addr, &b))
        })
        .collect();
    for (h, e) in handles.into_iter().zip(expected) {
        let (status, v) = h.join().unwrap();
        assert_eq!(status, 200);
        assert_eq!(v, serde_json::from_str::<Value>(&e).unwrap());
    }
}
