use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::Duration;

use fec_core::corrector::{Endpoint, ExternalCorrector, ExternalError, ItemError, WireRequest};
use fec_core::maskers::MaskedClaim;
use fec_core::retrieval::EvidenceSet;
use fec_core::tokenize;

#[derive(Clone, Copy)]
enum Behaviour {
    Echo,
    Reversed,
    DropId(u64),
    BadShape(u64),
    Garbage,
}

/// One-connection corrector stub: reads every request, then answers.
fn serve(behaviour: Behaviour, expected: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut reqs = Vec::new();
        for _ in 0..expected {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            reqs.push(serde_json::from_str::<WireRequest>(&line).unwrap());
        }
        if let Behaviour::Reversed = behaviour {
            reqs.reverse();
        }
        let mut w = stream;
        for r in reqs {
            let line = match behaviour {
                Behaviour::DropId(id) if id == r.id => continue,
                Behaviour::BadShape(id) if id == r.id => format!("{{\"id\":{},\"text\":1}}", r.id),
                Behaviour::Garbage => "not json".to_string(),
                _ => serde_json::json!({"id": r.id, "correction": r.masked_claim}).to_string(),
            };
            writeln!(w, "{line}").unwrap();
        }
        // hold the connection open so a dropped id surfaces as a timeout
        std::thread::sleep(Duration::from_millis(800));
    });
    addr
}

fn batch() -> Vec<(u64, MaskedClaim, EvidenceSet)> {
    ["alpha beta", "gamma delta", "epsilon zeta"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let toks = tokenize(t);
            (10 + i as u64, MaskedClaim::new(toks, vec![false, true]), EvidenceSet::empty(2))
        })
        .collect()
}

fn client(addr: String) -> ExternalCorrector {
    ExternalCorrector::new(Endpoint::Tcp(addr)).with_timeout(Duration::from_millis(400))
}

#[test]
fn echo_server_returns_rendered_masks() {
    let out = client(serve(Behaviour::Echo, 3)).correct_batch(&batch()).unwrap();
    let got: Vec<String> = out.into_iter().map(|r| r.unwrap().correction).collect();
    assert_eq!(got, ["alpha [MASK]", "gamma [MASK]", "epsilon [MASK]"]);
}

#[test]
fn out_of_order_responses_matched_by_id() {
    let out = client(serve(Behaviour::Reversed, 3)).correct_batch(&batch()).unwrap();
    let ids: Vec<u64> = out.iter().map(|r| r.as_ref().unwrap().id).collect();
    assert_eq!(ids, [10, 11, 12]);
    assert_eq!(out[0].as_ref().unwrap().correction, "alpha [MASK]");
}

#[test]
fn single_timeout_is_item_level() {
    let out = client(serve(Behaviour::DropId(11), 3)).correct_batch(&batch()).unwrap();
    assert!(out[0].is_ok() && out[2].is_ok());
    assert_eq!(out[1], Err(ItemError::Timeout(11)));
}

#[test]
fn bad_shape_names_the_id() {
    let out = client(serve(Behaviour::BadShape(12), 3)).correct_batch(&batch()).unwrap();
    assert!(matches!(&out[2], Err(ItemError::Protocol { id: 12, .. })));
    assert!(out[0].is_ok());
}

#[test]
fn unparseable_line_is_protocol_error() {
    let err = client(serve(Behaviour::Garbage, 3)).correct_batch(&batch()).unwrap_err();
    assert!(matches!(err, ExternalError::Protocol(_)));
}

#[test]
fn unreachable_endpoint_is_connect_error() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    let err = client(addr).correct_batch(&batch()).unwrap_err();
    assert!(matches!(err, ExternalError::Connect { .. }), "{err}");
}

#[test]
fn subprocess_endpoint() {
    // `cat` echoes requests back: they carry the id but no correction
    let c = ExternalCorrector::new("cmd:cat".parse().unwrap()).with_timeout(Duration::from_secs(5));
    let out = c.correct_batch(&batch()).unwrap();
    assert!(out.iter().all(|r| matches!(r, Err(ItemError::Protocol { .. }))));
}
