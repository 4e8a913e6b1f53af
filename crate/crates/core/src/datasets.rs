//! On-disk datasets of generated samples.
//!
//! ```text
//! <dir>/manifest.jsonl          header line, then one record per line
//! <dir>/images/<id>_<cam>.png   8-bit RGB difference image per camera
//! <dir>/config.snapshot         TOML sensor configuration
//! <dir>/.lock                   present while a writer is active
//! ```

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config;
use crate::error::{DatasetError, Error, Result};
use crate::geometry::SensorConfig;
use crate::imageio;
use crate::optics::TactileImage;
use crate::tasks::{AngleScenario, InsertionScenario};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.snapshot";
pub const IMAGE_DIR: &str = "images";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Angle,
    Insertion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Angle(AngleScenario),
    Insertion(InsertionScenario),
}

impl Scenario {
    pub fn task(&self) -> Task {
        match self {
            Scenario::Angle(_) => Task::Angle,
            Scenario::Insertion(_) => Task::Insertion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    ThetaDeg(f64),
    TargetMm([f64; 2]),
}

impl Label {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Label::ThetaDeg(t) => vec![*t],
            Label::TargetMm(t) => t.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub camera: usize,
    /// Relative to the dataset directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub task: Task,
    pub seed: u64,
    pub scenario: Scenario,
    pub images: Vec<ImageRef>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_triple: Option<[f64; 3]>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub task: Task,
    pub config_hash: String,
    pub generator_seed: u64,
    pub test_fraction: f64,
    pub record_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// SHA-256 of the manifest file bytes.
    pub fn digest(&self) -> Result<String> {
        Ok(config::hex(&Sha256::digest(self.to_jsonl()?.as_bytes())))
    }

    fn to_jsonl(&self) -> Result<String> {
        let mut out = json_line(&self.header)?;
        for r in &self.records {
            out.push_str(&json_line(r)?);
        }
        Ok(out)
    }
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string(v).map_err(|e| Error::Input(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// A record not yet written, with its images in memory.
#[derive(Debug, Clone)]
pub struct Sample {
    pub sample_id: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub images: Vec<TactileImage>,
    pub label: Label,
    pub force_triple: Option<[f64; 3]>,
}

/// Test membership keyed on `(generator_seed, sample_id)` so assignments do
/// not depend on record order.
pub fn assign_split(generator_seed: u64, sample_id: &str, test_fraction: f64) -> Split {
    let mut h = Sha256::new();
    h.update(generator_seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let d = h.finalize();
    let u = u64::from_le_bytes(d[..8].try_into().unwrap()) as f64 / 2f64.powi(64);
    if u < test_fraction {
        Split::Test
    } else {
        Split::Train
    }
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(DatasetError::Locked(dir.to_path_buf()).into())
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn image_name(sample_id: &str, config: &SensorConfig, camera: usize) -> Result<String> {
    Ok(format!("{IMAGE_DIR}/{sample_id}_{}.png", config.camera(camera)?.name))
}

/// Writes `samples` into `dir`, appending when a manifest already exists.
/// Appending requires the same task, configuration hash and generator seed.
pub fn write_dataset(
    dir: &Path,
    config: &SensorConfig,
    generator_seed: u64,
    test_fraction: f64,
    samples: &[Sample],
) -> Result<Manifest> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Input(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let task = match samples.first() {
        Some(s) => s.scenario.task(),
        None => return Err(Error::Input("no samples to write".into())),
    };
    if samples.iter().any(|s| s.scenario.task() != task) {
        return Err(DatasetError::MixedTasks.into());
    }
    fs::create_dir_all(dir.join(IMAGE_DIR)).map_err(|e| Error::io(dir, e))?;
    let _lock = DirLock::acquire(dir)?;
    let hash = config::config_hash(config)?;

    let mut records = if dir.join(MANIFEST_FILE).exists() {
        let existing = read_manifest(dir)?;
        if existing.header.config_hash != hash {
            return Err(DatasetError::HashMismatch {
                manifest: existing.header.config_hash,
                expected: hash,
            }
            .into());
        }
        if existing.header.task != task {
            return Err(DatasetError::MixedTasks.into());
        }
        if existing.header.generator_seed != generator_seed || existing.header.test_fraction != test_fraction {
            return Err(Error::Input(
                "appending requires the original generator seed and test fraction".into(),
            ));
        }
        existing.records
    } else {
        Vec::new()
    };

    let mut seen: BTreeSet<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    for s in samples {
        if !seen.insert(s.sample_id.clone()) {
            return Err(Error::Input(format!("duplicate sample id {}", s.sample_id)));
        }
        let mut images = Vec::with_capacity(s.images.len());
        for img in &s.images {
            let cam = config.camera(img.camera_index)?;
            if img.shape() != (cam.rows(), cam.cols()) {
                return Err(Error::Input(format!(
                    "sample {} camera {} image does not match the configured resolution",
                    s.sample_id, cam.name
                )));
            }
            let rel = image_name(&s.sample_id, config, img.camera_index)?;
            imageio::write_png(img, &dir.join(&rel))?;
            images.push(ImageRef {
                camera: img.camera_index,
                path: rel,
            });
        }
        records.push(SampleRecord {
            sample_id: s.sample_id.clone(),
            task,
            seed: s.seed,
            scenario: s.scenario.clone(),
            images,
            label: s.label.clone(),
            force_triple: s.force_triple,
            split: assign_split(generator_seed, &s.sample_id, test_fraction),
        });
    }

    let manifest = Manifest {
        header: ManifestHeader {
            format_version: FORMAT_VERSION,
            task,
            config_hash: hash,
            generator_seed,
            test_fraction,
            record_count: records.len(),
        },
        records,
    };
    let snapshot = dir.join(CONFIG_FILE);
    config::save(config, &snapshot)?;
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let text = manifest.to_jsonl()?;
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::from(DatasetError::MissingFile {
            sample_id: "<manifest>".into(),
            path: path.clone(),
        }),
        _ => Error::io(&path, e),
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let malformed = |line: usize, reason: String| Error::from(DatasetError::Malformed { line, reason });
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty manifest".into()))?;
    let first = first.map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&first).map_err(|e| malformed(1, e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| malformed(1, "missing format_version".into()))?;
    if found != FORMAT_VERSION as u64 {
        return Err(DatasetError::VersionMismatch {
            found: found as u32,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let header: ManifestHeader = serde_json::from_value(value).map_err(|e| malformed(1, e.to_string()))?;
    let mut records = Vec::with_capacity(header.record_count);
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| malformed(i + 1, e.to_string()))?;
        if rec.task != header.task || rec.scenario.task() != header.task {
            return Err(DatasetError::MixedTasks.into());
        }
        records.push(rec);
    }
    if records.len() != header.record_count {
        return Err(malformed(
            1,
            format!(
                "header announces {} records, found {}",
                header.record_count,
                records.len()
            ),
        ));
    }
    Ok(Manifest { header, records })
}

/// A validated dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub config: SensorConfig,
    pub manifest: Manifest,
}

impl Dataset {
    /// Loads the images of `record` for the cameras in `cameras`, in that
    /// order.
    pub fn load_images(&self, record: &SampleRecord, cameras: &[usize]) -> Result<Vec<TactileImage>> {
        cameras
            .iter()
            .map(|&cam| {
                let r = record.images.iter().find(|r| r.camera == cam).ok_or_else(|| {
                    Error::Input(format!("sample {} has no image for camera {cam}", record.sample_id))
                })?;
                imageio::read_png(cam, &self.dir.join(&r.path)).map_err(|e| corrupt(record, e))
            })
            .collect()
    }
}

fn corrupt(record: &SampleRecord, e: Error) -> Error {
    DatasetError::CorruptImage {
        sample_id: record.sample_id.clone(),
        reason: e.to_string(),
    }
    .into()
}

/// Reads and validates a dataset. When `expected` is given, its hash must
/// match the manifest's; the snapshot must match in any case. Every image is
/// checked for existence, decodability and resolution.
pub fn read_dataset(dir: &Path, expected: Option<&SensorConfig>) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let snap_path = dir.join(CONFIG_FILE);
    if !snap_path.exists() {
        return Err(DatasetError::MissingFile {
            sample_id: "<config>".into(),
            path: snap_path,
        }
        .into());
    }
    let config = config::load(&snap_path)?;
    let check = |c: &SensorConfig| -> Result<()> {
        let h = config::config_hash(c)?;
        if h != manifest.header.config_hash {
            return Err(DatasetError::HashMismatch {
                manifest: manifest.header.config_hash.clone(),
                expected: h,
            }
            .into());
        }
        Ok(())
    };
    check(&config)?;
    if let Some(c) = expected {
        check(c)?;
    }
    for rec in &manifest.records {
        for r in &rec.images {
            let path = dir.join(&r.path);
            if !path.exists() {
                return Err(DatasetError::MissingFile {
                    sample_id: rec.sample_id.clone(),
                    path,
                }
                .into());
            }
            let cam = config.camera(r.camera)?;
            let img = imageio::read_png(r.camera, &path).map_err(|e| corrupt(rec, e))?;
            let (h, w) = img.shape();
            if (h, w) != (cam.rows(), cam.cols()) {
                let reason = format!("image is {h}x{w}, camera is {}x{}", cam.rows(), cam.cols());
                return Err(DatasetError::CorruptImage {
                    sample_id: rec.sample_id.clone(),
                    reason,
                }
                .into());
            }
        }
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        config,
        manifest,
    })
}
