//! Projects on disk and in memory.
//!
//! Each project lives in its own directory:
//!
//! ```text
//! <id>/project.json        metadata, elements, mix manifest
//! <id>/base.wav            base track, canonical rate, 16-bit PCM
//! <id>/clips/<eid>.wav     rendered clip per element, 16-bit PCM
//! <id>/payloads/<eid>.*    the raw upload (text, image or audio)
//! ```
//!
//! Audio is quantized to 16-bit before it is used anywhere, so a project
//! reloaded from disk renders exactly the same bytes as before.
//!
//! Mutations on one project are serialized by a writer lock. Readers take a
//! cheap snapshot (`Arc<Project>`) and never wait for a writer or a render.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use strata_core::audio::{decode_canonical, encode_wav, quantize_to_pcm16, AudioBuffer};
use strata_core::features::{analyze_track, mfcc, PitchEstimate, TrackAnalysis};
use strata_core::mixer::{auto_gain, render_mix, update_entry, ClipSource, EntryUpdate, MixEntry, MixManifest};
use strata_core::placement::{find_placement, ClipQuery, PlacementPlan, TimeWindow};
use strata_core::sonify::{
    process_element, Backends, ElementKind, ElementPayload, ProcessOptions, Rgb, DEFAULT_CLIP_S,
};
use strata_core::viz::{build_viz, export_svg, LayerStyle, VizModel};

use crate::error::{Result, ServiceError};

pub const MIN_BASE_S: f64 = 5.0;
pub const MAX_BASE_S: f64 = 600.0;
const PROJECT_FILE: &str = "project.json";
const BASE_FILE: &str = "base.wav";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    pub caption: String,
    pub color: Rgb,
    pub seed: u64,
    pub requested_duration_s: f64,
    pub hint: Option<TimeWindow>,
    pub pitch: Option<PitchEstimate>,
    pub text: Option<String>,
    pub file_name: Option<String>,
    pub sidecar_caption: Option<String>,
    /// Upload path relative to the project directory.
    pub payload_path: String,
    pub created_at: DateTime<Utc>,
}

/// Contents of `project.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub id: String,
    pub name: String,
    pub base_file_name: String,
    pub seed: u64,
    pub version: u64,
    pub next_element: u32,
    pub created_at: DateTime<Utc>,
    pub elements: Vec<ElementRecord>,
    pub manifest: MixManifest,
}

/// A project with its decoded audio and base-track analysis.
#[derive(Debug, Clone)]
pub struct Project {
    pub record: ProjectRecord,
    pub base: Arc<AudioBuffer>,
    pub analysis: Arc<TrackAnalysis>,
    clips: BTreeMap<String, Arc<AudioBuffer>>,
}

impl ClipSource for Project {
    fn clip(&self, element_id: &str) -> Option<&AudioBuffer> {
        self.clips.get(element_id).map(Arc::as_ref)
    }
}

impl Project {
    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn version(&self) -> u64 {
        self.record.version
    }

    pub fn element(&self, element_id: &str) -> Option<&ElementRecord> {
        self.record.elements.iter().find(|e| e.id == element_id)
    }

    fn styles(&self) -> HashMap<String, LayerStyle> {
        self.record
            .elements
            .iter()
            .map(|e| {
                let thumbnail_ref = (e.kind == ElementKind::Image)
                    .then(|| format!("elements/{}/payload", e.id));
                let style = LayerStyle {
                    color: e.color,
                    label: e.label.clone(),
                    thumbnail_ref,
                };
                (e.id.clone(), style)
            })
            .collect()
    }

    pub fn view(&self) -> ProjectView {
        let elements = self
            .record
            .elements
            .iter()
            .filter_map(|e| {
                let entry = self.record.manifest.entry(&e.id)?;
                Some(ElementView {
                    id: e.id.clone(),
                    kind: e.kind,
                    label: e.label.clone(),
                    caption: e.caption.clone(),
                    color: e.color,
                    placement: entry.placement.clone(),
                    gain: entry.gain,
                    fade_s: entry.fade_s,
                    pitch_hz: e.pitch.and_then(|p| p.f0_hz),
                    seed: e.seed,
                })
            })
            .collect();
        ProjectView {
            id: self.record.id.clone(),
            name: self.record.name.clone(),
            version: self.record.version,
            base_file_name: self.record.base_file_name.clone(),
            duration_s: self.base.duration_s(),
            tempo_bpm: self.analysis.beats.tempo_bpm,
            beat_times_s: self.analysis.beats.beat_times_s.clone(),
            beats_low_confidence: self.analysis.beats.low_confidence,
            seed: self.record.seed,
            master_gain: self.record.manifest.master_gain,
            elements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementView {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    pub caption: String,
    pub color: Rgb,
    pub placement: PlacementPlan,
    pub gain: f64,
    pub fade_s: f64,
    pub pitch_hz: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectView {
    pub id: String,
    pub name: String,
    pub version: u64,
    pub base_file_name: String,
    pub duration_s: f64,
    pub tempo_bpm: f64,
    pub beat_times_s: Vec<f64>,
    pub beats_low_confidence: bool,
    pub seed: u64,
    pub master_gain: f64,
    pub elements: Vec<ElementView>,
}

/// Mix and visualization for one project version.
#[derive(Debug)]
pub struct Rendered {
    pub version: u64,
    pub mix_wav: Vec<u8>,
    pub viz: VizModel,
    pub viz_json: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AddOptions {
    pub duration_s: Option<f64>,
    pub hint: Option<TimeWindow>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementUpdate {
    pub gain: Option<f64>,
    pub start_s: Option<f64>,
    pub fade_s: Option<f64>,
    #[serde(default)]
    pub remove: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibraryEntry {
    pub name: String,
    pub size_bytes: u64,
}

#[derive(Debug)]
struct ProjectHandle {
    dir: PathBuf,
    writer: Mutex<()>,
    current: RwLock<Arc<Project>>,
    rendered: RwLock<Option<Arc<Rendered>>>,
}

impl ProjectHandle {
    fn new(dir: PathBuf, project: Project) -> Self {
        Self {
            dir,
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(project)),
            rendered: RwLock::new(None),
        }
    }

    fn snapshot(&self) -> Arc<Project> {
        self.current.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    fn replace(&self, project: Project) -> Arc<Project> {
        let project = Arc::new(project);
        *self.current.write().unwrap_or_else(PoisonError::into_inner) = project.clone();
        project
    }
}

#[derive(Debug)]
pub struct ProjectStore {
    root: PathBuf,
    library_dir: Option<PathBuf>,
    backends: Backends,
    projects: RwLock<BTreeMap<String, Arc<ProjectHandle>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn payload_extension(payload: &ElementPayload) -> String {
    let from_name = |name: &str| {
        Path::new(name)
            .extension()
            .and_then(|e| e.to_str())
            .filter(|e| !e.is_empty() && e.len() <= 8 && e.chars().all(|c| c.is_ascii_alphanumeric()))
            .map(str::to_ascii_lowercase)
    };
    match payload {
        ElementPayload::Text(_) => "txt".into(),
        ElementPayload::Image { file_name, .. } => from_name(file_name).unwrap_or_else(|| "img".into()),
        ElementPayload::Audio { file_name, .. } => from_name(file_name).unwrap_or_else(|| "wav".into()),
    }
}

fn payload_bytes(payload: &ElementPayload) -> &[u8] {
    match payload {
        ElementPayload::Text(t) => t.as_bytes(),
        ElementPayload::Image { bytes, .. } | ElementPayload::Audio { bytes, .. } => bytes,
    }
}

/// Seed derived from the uploaded base track bytes.
pub fn default_seed(base_bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(base_bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl ProjectStore {
    /// Opens (creating if needed) `data_dir` and loads every project in it.
    pub fn open(data_dir: impl Into<PathBuf>, library_dir: Option<PathBuf>, backends: Backends) -> Result<Self> {
        let root = data_dir.into().join("projects");
        fs::create_dir_all(&root)?;
        let mut projects = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let dir = entry?.path();
            if !dir.join(PROJECT_FILE).is_file() {
                continue;
            }
            match load_project(&dir) {
                Ok(p) => {
                    projects.insert(p.record.id.clone(), Arc::new(ProjectHandle::new(dir, p)));
                }
                Err(e) => tracing::warn!("skipping {}: {e}", dir.display()),
            }
        }
        Ok(Self {
            root,
            library_dir,
            backends,
            projects: RwLock::new(projects),
        })
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    fn handle(&self, project_id: &str) -> Result<Arc<ProjectHandle>> {
        self.projects
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(project_id)
            .cloned()
            .ok_or_else(|| ServiceError::ProjectNotFound(project_id.to_string()))
    }

    pub fn project_dir(&self, project_id: &str) -> Result<PathBuf> {
        Ok(self.handle(project_id)?.dir.clone())
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.projects.read().unwrap_or_else(PoisonError::into_inner).keys().cloned().collect()
    }

    pub fn get(&self, project_id: &str) -> Result<Arc<Project>> {
        Ok(self.handle(project_id)?.snapshot())
    }

    pub fn create_project(
        &self,
        name: &str,
        base_file_name: &str,
        base_wav: &[u8],
        seed: Option<u64>,
    ) -> Result<Arc<Project>> {
        let decoded = decode_canonical(base_wav)?;
        let got = decoded.duration_s();
        if !(MIN_BASE_S..=MAX_BASE_S).contains(&got) {
            return Err(ServiceError::DurationOutOfRange {
                got,
                min: MIN_BASE_S,
                max: MAX_BASE_S,
            });
        }
        let base = quantize_to_pcm16(&decoded);
        let analysis = analyze_track(&base)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = ProjectRecord {
            id: id.clone(),
            name: name.trim().to_string(),
            base_file_name: base_file_name.to_string(),
            seed: seed.unwrap_or_else(|| default_seed(base_wav)),
            version: 0,
            next_element: 1,
            created_at: Utc::now(),
            elements: Vec::new(),
            manifest: MixManifest::default(),
        };
        let dir = self.root.join(&id);
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(dir.join("clips"))?;
            fs::create_dir_all(dir.join("payloads"))?;
            fs::write(dir.join(BASE_FILE), encode_wav(&base))?;
            write_atomic(&dir.join(PROJECT_FILE), &to_json(&record))
        };
        if let Err(e) = write() {
            let _ = fs::remove_dir_all(&dir);
            return Err(e.into());
        }
        let project = Project {
            record,
            base: Arc::new(base),
            analysis: Arc::new(analysis),
            clips: BTreeMap::new(),
        };
        let handle = Arc::new(ProjectHandle::new(dir, project));
        let snapshot = handle.snapshot();
        self.projects.write().unwrap_or_else(PoisonError::into_inner).insert(id, handle);
        Ok(snapshot)
    }

    /// WAV files in the library directory, sorted by name.
    pub fn library(&self) -> Result<Vec<LibraryEntry>> {
        let Some(dir) = &self.library_dir else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            let is_wav = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if is_wav && path.is_file() {
                out.push(LibraryEntry {
                    name: entry.file_name().to_string_lossy().into_owned(),
                    size_bytes: entry.metadata()?.len(),
                });
            }
        }
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }

    pub fn create_from_library(&self, name: &str, track: &str, seed: Option<u64>) -> Result<Arc<Project>> {
        if !self.library()?.iter().any(|e| e.name == track) {
            return Err(ServiceError::BadRequest(format!("no library track named {track:?}")));
        }
        let dir = self.library_dir.as_ref().expect("library listed");
        let bytes = fs::read(dir.join(track))?;
        self.create_project(name, track, &bytes, seed)
    }

    /// Processes an input, places it, and appends it to the mix.
    pub fn add_element(
        &self,
        project_id: &str,
        payload: ElementPayload,
        options: AddOptions,
    ) -> Result<(Arc<Project>, PlacementPlan)> {
        let handle = self.handle(project_id)?;
        let _writer = handle.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let current = handle.snapshot();

        let ordinal = current.record.next_element;
        let id = format!("el-{ordinal:04}");
        let seed = options.seed.unwrap_or(current.record.seed);
        let requested_duration_s = options.duration_s.unwrap_or(DEFAULT_CLIP_S);
        let process = ProcessOptions {
            duration_s: requested_duration_s,
            seed,
            palette_index: (ordinal - 1) as usize,
        };
        let element = process_element(&id, payload, &self.backends, process, Utc::now())?;
        let clip = Arc::new(quantize_to_pcm16(&element.clip));
        let clip_mfcc = mfcc(&clip)?;
        let occupied: Vec<TimeWindow> = current
            .record
            .manifest
            .entries
            .iter()
            .map(|e| e.placement.interval())
            .collect();
        let query = ClipQuery {
            mfcc: &clip_mfcc,
            duration_s: clip.duration_s(),
        };
        let plan = find_placement(&id, &current.analysis, query, options.hint, &occupied)?;
        let gain = auto_gain(&current.base, &clip, &plan);

        let label = element.label();
        let payload_path = format!("payloads/{id}.{}", payload_extension(&element.payload));
        let (text, file_name, sidecar_caption) = match &element.payload {
            ElementPayload::Text(t) => (Some(t.clone()), None, None),
            ElementPayload::Image {
                file_name,
                sidecar_caption,
                ..
            } => (None, Some(file_name.clone()), sidecar_caption.clone()),
            ElementPayload::Audio { file_name, .. } => (None, Some(file_name.clone()), None),
        };
        let mut next = (*current).clone();
        next.record.elements.push(ElementRecord {
            id: id.clone(),
            kind: element.kind,
            label,
            caption: element.caption.clone(),
            color: element.color,
            seed,
            requested_duration_s,
            hint: options.hint,
            pitch: element.pitch,
            text,
            file_name,
            sidecar_caption,
            payload_path: payload_path.clone(),
            created_at: element.created_at,
        });
        next.record.manifest.entries.push(MixEntry::new(plan.clone(), gain));
        next.record.next_element += 1;
        next.record.version += 1;
        next.clips.insert(id.clone(), clip.clone());

        let clip_path = handle.dir.join(clip_file(&id));
        let payload_file = handle.dir.join(&payload_path);
        let write = || -> std::io::Result<()> {
            write_atomic(&clip_path, &encode_wav(&clip))?;
            write_atomic(&payload_file, payload_bytes(&element.payload))?;
            write_atomic(&handle.dir.join(PROJECT_FILE), &to_json(&next.record))
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&clip_path);
            let _ = fs::remove_file(&payload_file);
            return Err(e.into());
        }
        Ok((handle.replace(next), plan))
    }

    /// Changes gain, position or fade of an element, or removes it.
    pub fn update_element(&self, project_id: &str, element_id: &str, update: ElementUpdate) -> Result<Arc<Project>> {
        let handle = self.handle(project_id)?;
        let _writer = handle.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let current = handle.snapshot();
        if current.element(element_id).is_none() {
            return Err(strata_core::mixer::MixError::UnknownElement(element_id.to_string()).into());
        }
        let mut next = (*current).clone();
        let mut stale_files = Vec::new();
        if update.remove {
            let removed = next.record.elements.iter().position(|e| e.id == element_id).expect("checked");
            let record = next.record.elements.remove(removed);
            next.record.manifest.entries.retain(|e| e.element_id != element_id);
            next.clips.remove(element_id);
            stale_files.push(handle.dir.join(clip_file(element_id)));
            stale_files.push(handle.dir.join(record.payload_path));
        } else {
            if update.gain.is_none() && update.start_s.is_none() && update.fade_s.is_none() {
                return Err(ServiceError::BadRequest("nothing to update".into()));
            }
            let entry_update = EntryUpdate {
                gain: update.gain,
                start_s: update.start_s,
                fade_s: update.fade_s,
            };
            next.record.manifest = update_entry(
                &current.record.manifest,
                element_id,
                entry_update,
                current.base.duration_s(),
            )?;
        }
        next.record.version += 1;
        write_atomic(&handle.dir.join(PROJECT_FILE), &to_json(&next.record))?;
        for path in stale_files {
            let _ = fs::remove_file(path);
        }
        Ok(handle.replace(next))
    }

    pub fn remove_element(&self, project_id: &str, element_id: &str) -> Result<Arc<Project>> {
        let update = ElementUpdate {
            remove: true,
            ..Default::default()
        };
        self.update_element(project_id, element_id, update)
    }

    /// Raw upload of an element.
    pub fn payload(&self, project_id: &str, element_id: &str) -> Result<(ElementRecord, Vec<u8>)> {
        let handle = self.handle(project_id)?;
        let project = handle.snapshot();
        let record = project
            .element(element_id)
            .cloned()
            .ok_or_else(|| strata_core::mixer::MixError::UnknownElement(element_id.to_string()))?;
        let bytes = fs::read(handle.dir.join(&record.payload_path))?;
        Ok((record, bytes))
    }

    /// Mix and viz for the current version, rendered at most once per version.
    pub fn render(&self, project_id: &str) -> Result<Arc<Rendered>> {
        let handle = self.handle(project_id)?;
        let project = handle.snapshot();
        if let Some(cached) = handle.rendered.read().unwrap_or_else(PoisonError::into_inner).as_ref() {
            if cached.version == project.version() {
                return Ok(cached.clone());
            }
        }
        let rendered = Arc::new(render_project(&project)?);
        let mut slot = handle.rendered.write().unwrap_or_else(PoisonError::into_inner);
        if slot.as_ref().is_none_or(|c| c.version < rendered.version) {
            *slot = Some(rendered.clone());
        }
        Ok(rendered)
    }

    pub fn render_svg(&self, project_id: &str, width_px: u32, height_px: u32) -> Result<Vec<u8>> {
        let rendered = self.render(project_id)?;
        Ok(export_svg(&rendered.viz, width_px, height_px)?)
    }
}

fn clip_file(element_id: &str) -> String {
    format!("clips/{element_id}.wav")
}

fn to_json(record: &ProjectRecord) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(record).expect("project record serializes");
    bytes.push(b'\n');
    bytes
}

pub fn render_project(project: &Project) -> Result<Rendered> {
    let mix = render_mix(&project.base, &project.record.manifest, project)?;
    let viz = build_viz(&project.base, &project.record.manifest, project, &project.styles())?;
    Ok(Rendered {
        version: project.version(),
        mix_wav: encode_wav(&mix),
        viz_json: viz.to_json(),
        viz,
    })
}

fn load_project(dir: &Path) -> Result<Project> {
    let text = fs::read(dir.join(PROJECT_FILE))?;
    let record: ProjectRecord =
        serde_json::from_slice(&text).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
    let base = decode_canonical(&fs::read(dir.join(BASE_FILE))?)?;
    let analysis = analyze_track(&base)?;
    let mut clips = BTreeMap::new();
    for e in &record.elements {
        let clip = decode_canonical(&fs::read(dir.join(clip_file(&e.id)))?)?;
        clips.insert(e.id.clone(), Arc::new(clip));
    }
    if record.manifest.entries.len() != record.elements.len()
        || record.elements.iter().any(|e| record.manifest.entry(&e.id).is_none())
    {
        return Err(ServiceError::Corrupt("manifest and elements disagree".into()));
    }
    Ok(Project {
        record,
        base: Arc::new(base),
        analysis: Arc::new(analysis),
        clips,
    })
}
