#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use vidloop::layout::{parse_design_text, StructuredDesign};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn transcript(name: &str) -> StructuredDesign {
    parse_design_text(&read_fixture(&format!("transcripts/{name}.txt")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Boxes per keyframe for one id, as plain arrays.
pub fn boxes(d: &StructuredDesign, id: u32) -> Vec<[u32; 4]> {
    d.keyframes
        .iter()
        .filter_map(|k| k.object(id).map(|o| o.bbox.into()))
        .collect()
}

/// Mean of the `k` largest of `values`, summed largest first.
pub fn sorted_topk_mean(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[..k].iter().sum::<f64>() / k as f64
}

/// `-beta * topk(A*M) + topk(A*(1-M))` by sorting, with each `k` clamped
/// to its region; the outside term is 0 when the box covers everything.
pub fn energy_oracle(a: &[f64], inside: &[bool], beta: f64, k: usize) -> f64 {
    let n_in = inside.iter().filter(|&&b| b).count();
    let n_out = inside.len() - n_in;
    let masked: Vec<f64> = a.iter().zip(inside).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
    let rest: Vec<f64> = a.iter().zip(inside).map(|(v, &m)| if m { 0.0 } else { *v }).collect();
    let t_in = sorted_topk_mean(&masked, k.min(n_in));
    let t_out = if n_out == 0 { 0.0 } else { sorted_topk_mean(&rest, k.min(n_out)) };
    -beta * t_in + t_out
}

/// Maximum beta per id over a sequence of scale maps.
pub fn max_scales(history: &[BTreeMap<u32, f64>]) -> BTreeMap<u32, f64> {
    let mut out = BTreeMap::new();
    for m in history {
        for (&id, &b) in m {
            let e = out.entry(id).or_insert(b);
            if b > *e {
                *e = b;
            }
        }
    }
    out
}

pub fn schema(name: &str) -> serde_json::Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// A request the stub server received.
#[derive(Debug, Clone)]
pub struct Received {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Received {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

/// One-connection-per-request HTTP stub. Answers with `replies` in order,
/// then stops accepting.
pub struct Stub {
    pub url: String,
    handle: Option<std::thread::JoinHandle<Vec<Received>>>,
}

impl Stub {
    pub fn serve(replies: Vec<(u16, String)>) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut headers = Vec::new();
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        headers.push((k.trim().to_string(), v.trim().to_string()));
                    }
                }
                let len = headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                    .map_or(0, |(_, v)| v.parse().unwrap());
                let mut data = vec![0; len];
                reader.read_exact(&mut data).unwrap();
                seen.push(Received {
                    method,
                    path,
                    headers,
                    body: data,
                });
                let mut stream = stream;
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.flush();
            }
            seen
        });
        Stub {
            url,
            handle: Some(handle),
        }
    }

    /// Requests received so far; waits for the server thread to finish.
    pub fn finish(mut self) -> Vec<Received> {
        self.handle.take().unwrap().join().unwrap()
    }
}
