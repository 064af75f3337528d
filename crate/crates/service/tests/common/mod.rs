#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::Cursor;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use strata_core::audio::{encode_wav, AudioBuffer, SAMPLE_RATE};

pub const SR: f64 = SAMPLE_RATE as f64;

/// One decaying harmonic note per beat, each with its own random pitch and
/// overtone mix, so every beat has a distinct timbre.
pub fn synthetic_track(seconds: f64, bpm: f64, seed: u64) -> AudioBuffer {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = (seconds * SR).round() as usize;
    let beat = (60.0 / bpm * SR).round() as usize;
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let f0 = 110.0 * 2f64.powf(rng.random_range(0..36) as f64 / 12.0);
        let partials: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
        let noise = rng.random_range(0.0..0.3);
        let decay = rng.random_range(3.0..12.0);
        let norm: f64 = partials.iter().sum::<f64>() + noise + 1e-9;
        for i in 0..beat.min(n - start) {
            let t = i as f64 / SR;
            let env = (-decay * t).exp();
            let tone: f64 = partials
                .iter()
                .enumerate()
                .map(|(k, a)| a * (2.0 * PI * f0 * (k + 1) as f64 * t).sin())
                .sum();
            let hiss = noise * rng.random_range(-1.0..1.0);
            out[start + i] = 0.6 * env * (tone + hiss) / norm;
        }
        start += beat;
    }
    AudioBuffer::new(out, SAMPLE_RATE)
}

pub fn track_wav(seconds: f64, bpm: f64, seed: u64) -> Vec<u8> {
    encode_wav(&synthetic_track(seconds, bpm, seed))
}

pub fn excerpt_wav(track: &AudioBuffer, start_s: f64, end_s: f64) -> Vec<u8> {
    let (a, b) = ((start_s * SR).round() as usize, (end_s * SR).round() as usize);
    encode_wav(&AudioBuffer::new(track.samples()[a..b].to_vec(), SAMPLE_RATE))
}

pub fn png(rgb: [u8; 3]) -> Vec<u8> {
    let img = image::RgbImage::from_pixel(16, 16, image::Rgb(rgb));
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
    out
}

/// Every file under `dir` with its bytes, sorted by path.
pub fn snapshot_dir(dir: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path, bytes));
            }
        }
    }
    out.sort();
    out
}

pub mod http {
    use axum::body::Body;
    use axum::http::{Method, Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use serde_json::Value;
    use tower::ServiceExt;

    const BOUNDARY: &str = "strata-test-boundary";

    #[derive(Clone, Copy)]
    pub enum Part<'a> {
        Field(&'a str, &'a str),
        File(&'a str, &'a str, &'a [u8]),
    }

    pub fn multipart(parts: &[Part<'_>]) -> (String, Vec<u8>) {
        let mut body = Vec::new();
        for part in parts {
            body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
            match part {
                Part::Field(name, value) => {
                    body.extend_from_slice(
                        format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
                    );
                }
                Part::File(name, file_name, bytes) => {
                    body.extend_from_slice(
                        format!(
                            "Content-Disposition: form-data; name=\"{name}\"; filename=\"{file_name}\"\r\n\
                             Content-Type: application/octet-stream\r\n\r\n"
                        )
                        .as_bytes(),
                    );
                    body.extend_from_slice(bytes);
                    body.extend_from_slice(b"\r\n");
                }
            }
        }
        body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
        (format!("multipart/form-data; boundary={BOUNDARY}"), body)
    }

    pub struct Reply {
        pub status: StatusCode,
        pub content_type: String,
        pub body: Vec<u8>,
    }

    impl Reply {
        pub fn json(&self) -> Value {
            serde_json::from_slice(&self.body)
                .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
        }
    }

    pub async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, content_type, body }
    }

    pub async fn get(app: &Router, uri: &str) -> Reply {
        send(app, Method::GET, uri, None, Vec::new()).await
    }

    pub async fn post_form(app: &Router, uri: &str, parts: &[Part<'_>]) -> Reply {
        let (ct, body) = multipart(parts);
        send(app, Method::POST, uri, Some(&ct), body).await
    }

    pub async fn patch_json(app: &Router, uri: &str, json: Value) -> Reply {
        send(app, Method::PATCH, uri, Some("application/json"), serde_json::to_vec(&json).unwrap()).await
    }

    pub async fn delete(app: &Router, uri: &str) -> Reply {
        send(app, Method::DELETE, uri, None, Vec::new()).await
    }

    pub async fn post_empty(app: &Router, uri: &str) -> Reply {
        send(app, Method::POST, uri, None, Vec::new()).await
    }
}
