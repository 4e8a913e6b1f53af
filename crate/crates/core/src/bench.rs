//! End-to-end benchmark pipelines: angle-of-contact regression and
//! tactile connector insertion.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contact::DEFAULT_SIGMA_MM;
use crate::datasets::{Label, Sample, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{SensorConfig, SensorKind, SIDE_POS_X, TOP};
use crate::learn::{self, abs_error_stats, extract_features, FeatureVector, Mlp, ModelKind, TrainConfig};
use crate::optics::TactileImage;
use crate::seed;
use crate::sensor::Sensor;
use crate::tasks::insertion::{force_triple, FLOOR_CAMERA, PLUG_CAMERA};
use crate::tasks::{
    expert_target, noise_free_target, observe_angle, observe_insertion, sample_angle_scenario,
    sample_insertion_scenario, simulate_insertion, AngleRange, AngleScenario, AngleSettings, InsertionScenario,
    InsertionSettings, ScenarioMode,
};

/// Runs `f` over `items` on `jobs` threads, preserving order.
pub fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Deterministic exact-size test split: the `test_fraction` of ids with the
/// smallest seeded hash.
pub fn split_indices(seed: u64, ids: &[String], test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let key = |id: &String| {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(id.as_bytes());
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    };
    let mut order: Vec<(u64, usize)> = ids.iter().enumerate().map(|(i, id)| (key(id), i)).collect();
    order.sort_unstable();
    let n_test = (ids.len() as f64 * test_fraction).round() as usize;
    let mut test: Vec<usize> = order[..n_test].iter().map(|&(_, i)| i).collect();
    let mut train: Vec<usize> = order[n_test..].iter().map(|&(_, i)| i).collect();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn rows_of(features: &[FeatureVector], idx: &[usize]) -> Result<DMatrix<f64>> {
    let picked: Vec<FeatureVector> = idx.iter().map(|&i| features[i].clone()).collect();
    learn::feature_matrix(&picked)
}

fn labels_of(labels: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
    let k = labels.first().map(Vec::len).unwrap_or(0);
    DMatrix::from_fn(idx.len(), k, |r, c| labels[idx[r]][c])
}

// ---------------------------------------------------------------- angle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleBenchSettings {
    pub samples_per_range: usize,
    pub test_fraction: f64,
    /// Render resolution used for both sensors.
    pub resolution: usize,
    pub ds: (usize, usize),
    pub model: ModelKind,
    pub train: TrainConfig,
    pub scenario: AngleSettings,
    pub sigma_mm: f64,
    /// Cameras of the multi-directional sensor fed to its model.
    pub omnitact_cameras: Vec<usize>,
}

impl Default for AngleBenchSettings {
    fn default() -> Self {
        AngleBenchSettings {
            samples_per_range: 1000,
            test_fraction: 0.2,
            resolution: 64,
            ds: learn::DEFAULT_DS,
            model: ModelKind::Mlp,
            train: TrainConfig::default(),
            scenario: AngleSettings::default(),
            sigma_mm: DEFAULT_SIGMA_MM,
            omnitact_cameras: vec![TOP, SIDE_POS_X],
        }
    }
}

pub fn angle_sample_id(range: AngleRange, index: usize) -> String {
    format!("angle-{}-{index:05}", format!("{range:?}").to_lowercase())
}

/// Scenario seeds are shared by every sensor so the comparison is paired.
pub fn angle_scenarios(range: AngleRange, n: usize, base_seed: u64, settings: &AngleSettings) -> Vec<AngleScenario> {
    (0..n)
        .map(|i| {
            sample_angle_scenario(
                range,
                seed::derive(base_seed, &[0xA, range.index() as u64, i as u64]),
                settings,
            )
        })
        .collect()
}

pub fn angle_cameras(config: &SensorConfig, omnitact_cameras: &[usize]) -> Vec<usize> {
    match config.kind {
        SensorKind::MultiDirectional => omnitact_cameras.to_vec(),
        SensorKind::FlatBaseline => (0..config.num_cameras()).collect(),
    }
}

/// Renders difference images for every scenario.
pub fn render_angle(
    sensor: &Sensor,
    scenarios: &[AngleScenario],
    cameras: &[usize],
    jobs: usize,
) -> Result<Vec<Vec<TactileImage>>> {
    par_map(jobs, scenarios, |s| Ok(observe_angle(sensor, s, cameras)?.images))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub sensor: String,
    pub range: String,
    pub median_abs_error_deg: f64,
    pub iqr_deg: f64,
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub seed: u64,
    pub settings: AngleBenchSettings,
    pub config_hashes: Vec<(String, String)>,
    pub rows: Vec<AngleRow>,
}

impl AngleReport {
    pub fn row(&self, sensor: &str, range: AngleRange) -> Option<&AngleRow> {
        self.rows
            .iter()
            .find(|r| r.sensor == sensor && r.range == range.label())
    }

    /// Sensors as rows, ranges as columns: `median (IQR)` in degrees.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Angle of contact estimation: median absolute error in deg (IQR)");
        let _ = write!(out, "{:<10}", "sensor");
        for r in AngleRange::ALL {
            let (lo, hi) = r.bounds_deg();
            let _ = write!(out, " | {:>17}", format!("{lo} to {hi} deg"));
        }
        out.push('\n');
        let mut sensors: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !sensors.contains(&row.sensor.as_str()) {
                sensors.push(&row.sensor);
            }
        }
        for s in sensors {
            let _ = write!(out, "{s:<10}");
            for r in AngleRange::ALL {
                let cell = self
                    .row(s, r)
                    .map(|x| format!("{:.3} ({:.3})", x.median_abs_error_deg, x.iqr_deg))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " | {cell:>17}");
            }
            out.push('\n');
        }
        out
    }
}

/// One model per `(sensor, range)`, trained on the seeded 80 % and scored
/// on the held-out rest.
pub fn run_angle_benchmark(
    sensors: &[(String, SensorConfig)],
    settings: &AngleBenchSettings,
    base_seed: u64,
    jobs: usize,
) -> Result<AngleReport> {
    let mut rows = Vec::new();
    let mut hashes = Vec::new();
    for (name, config) in sensors {
        let cfg = config.with_resolution(settings.resolution);
        hashes.push((name.clone(), crate::config::config_hash(&cfg)?));
        let sensor = Sensor::new(cfg, settings.sigma_mm)?;
        let cameras = angle_cameras(sensor.config(), &settings.omnitact_cameras);
        for range in AngleRange::ALL {
            let scenarios = angle_scenarios(range, settings.samples_per_range, base_seed, &settings.scenario);
            let images = render_angle(&sensor, &scenarios, &cameras, jobs)?;
            let features = par_map(jobs, &images, |imgs| extract_features(imgs, &cameras, settings.ds))?;
            let labels: Vec<Vec<f64>> = scenarios.iter().map(|s| vec![s.theta_deg]).collect();
            let ids: Vec<String> = (0..scenarios.len()).map(|i| angle_sample_id(range, i)).collect();
            let (train, test) = split_indices(base_seed, &ids, settings.test_fraction);
            if test.is_empty() {
                return Err(Error::Input("empty test set".into()));
            }
            let mut tc = settings.train.clone();
            tc.seed = seed::derive(base_seed, &[0xB, range.index() as u64]);
            let model = learn::fit(
                settings.model,
                &rows_of(&features, &train)?,
                &labels_of(&labels, &train),
                &tc,
            )?;
            let pred = model.predict_batch(&rows_of(&features, &test)?);
            let truth: Vec<f64> = test.iter().map(|&i| labels[i][0]).collect();
            let stats = abs_error_stats(pred.as_slice(), &truth)?;
            rows.push(AngleRow {
                sensor: name.clone(),
                range: range.label(),
                median_abs_error_deg: stats.median_abs_error,
                iqr_deg: stats.iqr,
                train_count: train.len(),
                test_count: test.len(),
            });
        }
    }
    Ok(AngleReport {
        seed: base_seed,
        settings: settings.clone(),
        config_hashes: hashes,
        rows,
    })
}

// ------------------------------------------------------------ insertion

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    SideOnly,
    TopOnly,
    Both,
    ForceOnly,
    /// Noise-free expert; a sanity row, not a learned policy.
    Oracle,
}

impl Policy {
    /// Learned policies in table order.
    pub const TABLE: [Policy; 4] = [Policy::SideOnly, Policy::TopOnly, Policy::Both, Policy::ForceOnly];

    pub fn label(self) -> &'static str {
        match self {
            Policy::SideOnly => "side camera only",
            Policy::TopOnly => "top camera only",
            Policy::Both => "side and top cameras",
            Policy::ForceOnly => "force only",
            Policy::Oracle => "oracle",
        }
    }

    pub fn cameras(self) -> Vec<usize> {
        let mut c = match self {
            Policy::SideOnly => vec![PLUG_CAMERA],
            Policy::TopOnly => vec![FLOOR_CAMERA],
            Policy::Both => vec![FLOOR_CAMERA, PLUG_CAMERA],
            Policy::ForceOnly | Policy::Oracle => vec![],
        };
        c.sort_unstable();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsertionBenchSettings {
    pub demonstrations: usize,
    pub resolution: usize,
    pub ds: (usize, usize),
    pub model: ModelKind,
    pub train: TrainConfig,
    pub task: InsertionSettings,
    pub sigma_mm: f64,
    pub include_oracle: bool,
}

impl Default for InsertionBenchSettings {
    fn default() -> Self {
        InsertionBenchSettings {
            demonstrations: 100,
            resolution: 64,
            ds: learn::DEFAULT_DS,
            model: ModelKind::Mlp,
            train: TrainConfig::default(),
            task: InsertionSettings::default(),
            sigma_mm: DEFAULT_SIGMA_MM,
            include_oracle: false,
        }
    }
}

/// Observation of one scenario in every modality a policy may consume.
#[derive(Debug, Clone)]
pub struct InsertionSample {
    pub scenario: InsertionScenario,
    pub images: Vec<TactileImage>,
    pub force: [f64; 3],
    pub target_mm: [f64; 2],
}

impl InsertionSample {
    pub fn features(&self, policy: Policy, ds: (usize, usize)) -> Result<FeatureVector> {
        match policy {
            Policy::ForceOnly => Ok(FeatureVector {
                values: self.force.to_vec(),
                blocks: vec![],
            }),
            Policy::Oracle => Err(Error::Input("the oracle consumes no features".into())),
            p => extract_features(&self.images, &p.cameras(), ds),
        }
    }
}

pub fn insertion_scenarios(
    mode: ScenarioMode,
    n: usize,
    base_seed: u64,
    settings: &InsertionSettings,
) -> Result<Vec<InsertionScenario>> {
    let stream = match mode {
        ScenarioMode::Train => 0xC,
        ScenarioMode::Eval => 0xD,
    };
    (0..n)
        .map(|i| sample_insertion_scenario(mode, i, seed::derive(base_seed, &[stream, i as u64]), settings))
        .collect()
}

pub fn observe_insertion_samples(
    sensor: &Sensor,
    scenarios: &[InsertionScenario],
    settings: &InsertionSettings,
    jobs: usize,
) -> Result<Vec<InsertionSample>> {
    par_map(jobs, scenarios, |s| {
        let obs = observe_insertion(sensor, s, settings)?;
        Ok(InsertionSample {
            scenario: s.clone(),
            images: vec![obs.top_image, obs.side_image],
            force: force_triple(s, settings),
            target_mm: expert_target(s, settings),
        })
    })
}

pub fn train_policy(
    policy: Policy,
    demos: &[InsertionSample],
    settings: &InsertionBenchSettings,
    base_seed: u64,
) -> Result<Mlp> {
    let feats = demos
        .iter()
        .map(|d| d.features(policy, settings.ds))
        .collect::<Result<Vec<_>>>()?;
    let x = learn::feature_matrix(&feats)?;
    let y = DMatrix::from_fn(demos.len(), 2, |r, c| demos[r].target_mm[c]);
    let mut tc = settings.train.clone();
    tc.seed = seed::derive(base_seed, &[0xE, policy as u64]);
    learn::fit(settings.model, &x, &y, &tc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub plug_position_index: usize,
    pub success: bool,
    pub residual_gap_mm: f64,
    pub lateral_error_mm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: Policy,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub trial_records: Vec<TrialRecord>,
}

/// Runs the evaluation protocol for one predictor.
pub fn evaluate_insertion(
    policy: Policy,
    predict: impl Fn(&InsertionSample) -> Result<[f64; 2]>,
    trials: &[InsertionSample],
    settings: &InsertionSettings,
) -> Result<PolicyRow> {
    let mut records = Vec::with_capacity(trials.len());
    for t in trials {
        let out = simulate_insertion(&t.scenario, predict(t)?, settings);
        records.push(TrialRecord {
            plug_position_index: t.scenario.plug_position_index,
            success: out.success,
            residual_gap_mm: out.residual_gap_mm,
            lateral_error_mm: out.lateral_error_mm,
        });
    }
    let successes = records.iter().filter(|r| r.success).count();
    Ok(PolicyRow {
        policy,
        successes,
        trials: records.len(),
        success_rate: if records.is_empty() {
            0.0
        } else {
            successes as f64 / records.len() as f64
        },
        trial_records: records,
    })
}

pub fn model_predictor(
    model: &Mlp,
    policy: Policy,
    ds: (usize, usize),
) -> impl Fn(&InsertionSample) -> Result<[f64; 2]> + '_ {
    move |s| {
        let p = model.predict(&s.features(policy, ds)?.values);
        Ok([p[0], p[1]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub seed: u64,
    pub settings: InsertionBenchSettings,
    pub config_hash: String,
    pub rows: Vec<PolicyRow>,
}

impl InsertionReport {
    pub fn rate(&self, policy: Policy) -> Option<f64> {
        self.rows.iter().find(|r| r.policy == policy).map(|r| r.success_rate)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let n = self.rows.first().map(|r| r.trials).unwrap_or(0);
        let _ = writeln!(out, "{:<22} | Success rate ({n} trials)", "Policy inputs");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} | {:>5.1}% ({}/{})",
                r.policy.label(),
                100.0 * r.success_rate,
                r.successes,
                r.trials
            );
        }
        out
    }
}

pub fn run_insertion_benchmark(
    config: &SensorConfig,
    settings: &InsertionBenchSettings,
    base_seed: u64,
    jobs: usize,
) -> Result<InsertionReport> {
    settings.task.validate()?;
    let cfg = config.with_resolution(settings.resolution);
    let config_hash = crate::config::config_hash(&cfg)?;
    let sensor = Sensor::new(cfg, settings.sigma_mm)?;
    let demo_sc = insertion_scenarios(ScenarioMode::Train, settings.demonstrations, base_seed, &settings.task)?;
    let demos = observe_insertion_samples(&sensor, &demo_sc, &settings.task, jobs)?;
    let eval_sc = insertion_scenarios(ScenarioMode::Eval, settings.task.eval_trials, base_seed, &settings.task)?;
    let trials = observe_insertion_samples(&sensor, &eval_sc, &settings.task, jobs)?;
    let mut rows = Vec::new();
    for policy in Policy::TABLE {
        let model = train_policy(policy, &demos, settings, base_seed)?;
        rows.push(evaluate_insertion(
            policy,
            model_predictor(&model, policy, settings.ds),
            &trials,
            &settings.task,
        )?);
    }
    if settings.include_oracle {
        rows.push(evaluate_insertion(
            Policy::Oracle,
            |s| Ok(noise_free_target(&s.scenario)),
            &trials,
            &settings.task,
        )?);
    }
    Ok(InsertionReport {
        seed: base_seed,
        settings: settings.clone(),
        config_hash,
        rows,
    })
}

// ------------------------------------------------------------- datasets

/// Angle samples ready for [`crate::datasets::write_dataset`].
pub fn angle_dataset_samples(
    sensor: &Sensor,
    range: AngleRange,
    n: usize,
    base_seed: u64,
    settings: &AngleSettings,
    cameras: &[usize],
    jobs: usize,
) -> Result<Vec<Sample>> {
    let scenarios = angle_scenarios(range, n, base_seed, settings);
    let images = render_angle(sensor, &scenarios, cameras, jobs)?;
    Ok(scenarios
        .into_iter()
        .zip(images)
        .enumerate()
        .map(|(i, (s, images))| Sample {
            sample_id: angle_sample_id(range, i),
            seed: s.seed,
            label: Label::ThetaDeg(s.theta_deg),
            scenario: Scenario::Angle(s),
            images,
            force_triple: None,
        })
        .collect())
}

/// Insertion demonstrations (train mode) or protocol trials (eval mode).
pub fn insertion_dataset_samples(
    sensor: &Sensor,
    mode: ScenarioMode,
    n: usize,
    base_seed: u64,
    settings: &InsertionSettings,
    jobs: usize,
) -> Result<Vec<Sample>> {
    let scenarios = insertion_scenarios(mode, n, base_seed, settings)?;
    let tag = match mode {
        ScenarioMode::Train => "demo",
        ScenarioMode::Eval => "trial",
    };
    Ok(observe_insertion_samples(sensor, &scenarios, settings, jobs)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sample {
            sample_id: format!("insertion-{tag}-{i:05}"),
            seed: s.scenario.seed,
            label: Label::TargetMm(s.target_mm),
            scenario: Scenario::Insertion(s.scenario),
            images: s.images,
            force_triple: Some(s.force),
        })
        .collect())
}
