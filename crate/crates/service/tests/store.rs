mod common;

use std::sync::Arc;

use strata_core::audio::decode_wav;
use strata_core::placement::TimeWindow;
use strata_core::sonify::{Backends, ElementPayload, Rgb};
use strata_service::{AddOptions, ElementUpdate, ProjectStore, ServiceError};

use common::*;

fn store(dir: &std::path::Path) -> ProjectStore {
    ProjectStore::open(dir, None, Backends::stub()).unwrap()
}

fn text(t: &str) -> ElementPayload {
    ElementPayload::Text(t.into())
}

#[test]
fn create_validates_base_track() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("demo", "base.wav", &track_wav(30.0, 120.0, 1), None).unwrap();
    assert_eq!(p.view().duration_s, 30.0);
    assert_eq!(p.version(), 0);
    assert!((p.view().tempo_bpm - 120.0).abs() < 1.0);

    let short = s.create_project("x", "s.wav", &track_wav(2.0, 120.0, 1), None).unwrap_err();
    assert_eq!(short.code(), "DurationOutOfRange");
    let corrupt = s.create_project("x", "c.wav", b"RIFF garbage", None).unwrap_err();
    assert_eq!(corrupt.code(), "MalformedWav");
    assert_eq!(s.project_ids().len(), 1);
}

#[test]
fn text_element_gets_color_and_placement() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("demo", "base.wav", &track_wav(30.0, 120.0, 2), None).unwrap();
    let (p, plan) = s.add_element(p.id(), text("calm blue evening"), AddOptions::default()).unwrap();
    assert_eq!(p.version(), 1);
    assert!(plan.start_s >= 0.0 && plan.end_s <= 30.0);
    let view = p.view();
    assert_eq!(view.elements[0].color, Rgb(0, 0, 255));
    assert_eq!(view.elements[0].label, "calm blue evening");
    assert_eq!(view.elements[0].id, "el-0001");
}

#[test]
fn audio_excerpt_lands_at_its_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let track = synthetic_track(30.0, 120.0, 3);
    let p = s.create_project("demo", "base.wav", &excerpt_wav(&track, 0.0, 30.0), None).unwrap();
    let payload = ElementPayload::Audio {
        bytes: excerpt_wav(&track, 10.0, 12.0),
        file_name: "piece.wav".into(),
    };
    let (p, plan) = s.add_element(p.id(), payload, AddOptions::default()).unwrap();
    assert!((plan.start_s - 10.0).abs() <= 0.05, "{plan:?}");
    assert_eq!(p.view().elements[0].label, "piece.wav");
}

#[test]
fn hint_constrains_start() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("demo", "base.wav", &track_wav(30.0, 120.0, 4), None).unwrap();
    let opts = AddOptions {
        hint: Some(TimeWindow::new(5.0, 8.0)),
        ..Default::default()
    };
    let (_, plan) = s.add_element(p.id(), text("bright morning"), opts).unwrap();
    assert!((5.0..=8.0).contains(&plan.start_s));
    assert_eq!(plan.hint_window, opts.hint);
}

#[test]
fn edits_removal_and_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("demo", "base.wav", &track_wav(20.0, 100.0, 5), None).unwrap();
    let id = p.id().to_string();
    let empty = s.render(&id).unwrap();
    let base_bytes = std::fs::read(s.project_dir(&id).unwrap().join("base.wav")).unwrap();
    assert_eq!(decode_wav(&empty.mix_wav).unwrap(), decode_wav(&base_bytes).unwrap());

    let (p, _) = s.add_element(&id, text("a red sunset"), AddOptions::default()).unwrap();
    let gain = p.record.manifest.entries[0].gain;
    let before = s.render(&id).unwrap();
    let doubled = ElementUpdate {
        gain: Some(2.0 * gain),
        ..Default::default()
    };
    let p = s.update_element(&id, "el-0001", doubled).unwrap();
    assert_eq!(p.version(), 2);
    let after = s.render(&id).unwrap();
    for (a, b) in before.viz.layers[0].thickness.iter().zip(&after.viz.layers[0].thickness) {
        assert!((b - 2.0 * a).abs() <= 1e-9 * b.abs().max(1e-300), "{a} {b}");
    }

    let project_json = s.project_dir(&id).unwrap().join("project.json");
    let stored = std::fs::read(&project_json).unwrap();
    let past_end = ElementUpdate {
        start_s: Some(19.0),
        ..Default::default()
    };
    let err = s.update_element(&id, "el-0001", past_end).unwrap_err();
    assert_eq!(err.code(), "InvalidPlacement");
    assert_eq!(s.get(&id).unwrap().version(), 2);
    assert_eq!(std::fs::read(&project_json).unwrap(), stored);
    assert!(matches!(
        s.update_element(&id, "el-0009", doubled),
        Err(ServiceError::Mix(_))
    ));

    let p = s.remove_element(&id, "el-0001").unwrap();
    assert_eq!(p.version(), 3);
    assert!(p.view().elements.is_empty());
    assert_eq!(s.render(&id).unwrap().mix_wav, empty.mix_wav);
    assert!(!s.project_dir(&id).unwrap().join("clips/el-0001.wav").exists());
}

#[test]
fn zero_gain_matches_empty_render() {
    let tmp = tempfile::tempdir().unwrap();
    let s = store(tmp.path());
    let p = s.create_project("demo", "base.wav", &track_wav(15.0, 90.0, 6), None).unwrap();
    let id = p.id().to_string();
    let empty = decode_wav(&s.render(&id).unwrap().mix_wav).unwrap();
    s.add_element(&id, text("green hills"), AddOptions::default()).unwrap();
    let mute = ElementUpdate {
        gain: Some(0.0),
        ..Default::default()
    };
    s.update_element(&id, "el-0001", mute).unwrap();
    let muted = decode_wav(&s.render(&id).unwrap().mix_wav).unwrap();
    for (a, b) in empty.samples().iter().zip(muted.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn reload_renders_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (id, mix, viz, svg) = {
        let s = store(tmp.path());
        let p = s.create_project("demo", "base.wav", &track_wav(20.0, 120.0, 7), Some(42)).unwrap();
        let id = p.id().to_string();
        s.add_element(&id, text("yellow and white cat"), AddOptions::default()).unwrap();
        let image = ElementPayload::Image {
            bytes: png([200, 30, 30]),
            file_name: "red.png".into(),
            sidecar_caption: None,
        };
        s.add_element(&id, image, AddOptions::default()).unwrap();
        let r = s.render(&id).unwrap();
        (id.clone(), r.mix_wav.clone(), r.viz_json.clone(), s.render_svg(&id, 800, 200).unwrap())
    };
    let s = store(tmp.path());
    let p = s.get(&id).unwrap();
    assert_eq!(p.version(), 2);
    assert_eq!(p.view().elements[1].label, "an image");
    let r = s.render(&id).unwrap();
    assert_eq!(r.mix_wav, mix);
    assert_eq!(r.viz_json, viz);
    assert_eq!(s.render_svg(&id, 800, 200).unwrap(), svg);
}

#[test]
fn mutations_are_serialized() {
    let tmp = tempfile::tempdir().unwrap();
    let s = Arc::new(store(tmp.path()));
    let p = s.create_project("demo", "base.wav", &track_wav(60.0, 120.0, 8), None).unwrap();
    let id = p.id().to_string();
    let workers: Vec<_> = (0..4)
        .map(|k| {
            let (s, id) = (s.clone(), id.clone());
            std::thread::spawn(move || {
                let opts = AddOptions {
                    duration_s: Some(2.0),
                    seed: Some(k),
                    ..Default::default()
                };
                s.add_element(&id, text(&format!("voice {k}")), opts).unwrap().0.version()
            })
        })
        .collect();
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let (s, id) = (s.clone(), id.clone());
            std::thread::spawn(move || {
                let mut last = 0;
                for _ in 0..20 {
                    let v = s.get(&id).unwrap().version();
                    assert!(v >= last);
                    last = v;
                }
            })
        })
        .collect();
    let mut versions: Vec<u64> = workers.into_iter().map(|w| w.join().unwrap()).collect();
    readers.into_iter().for_each(|r| r.join().unwrap());
    versions.sort();
    assert_eq!(versions, vec![1, 2, 3, 4]);
    let p = s.get(&id).unwrap();
    let mut intervals: Vec<(f64, f64)> = p
        .record
        .manifest
        .entries
        .iter()
        .map(|e| (e.placement.start_s, e.placement.end_s))
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in intervals.windows(2) {
        assert!(w[0].1 - w[1].0 < 1.0, "{intervals:?}");
    }
}

#[test]
fn library_listing() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = tmp.path().join("lib");
    std::fs::create_dir_all(&lib).unwrap();
    std::fs::write(lib.join("b.wav"), track_wav(6.0, 120.0, 9)).unwrap();
    std::fs::write(lib.join("a.WAV"), track_wav(6.0, 120.0, 10)).unwrap();
    std::fs::write(lib.join("notes.txt"), b"x").unwrap();
    let s = ProjectStore::open(tmp.path().join("data"), Some(lib), Backends::stub()).unwrap();
    let names: Vec<String> = s.library().unwrap().into_iter().map(|e| e.name).collect();
    assert_eq!(names, ["a.WAV", "b.wav"]);
    let p = s.create_from_library("x", "b.wav", None).unwrap();
    assert_eq!(p.record.base_file_name, "b.wav");
    assert_eq!(s.create_from_library("x", "../etc", None).unwrap_err().code(), "BadRequest");
}
