use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use omnitact::bench::{self, AngleBenchSettings, InsertionBenchSettings, Policy};
use omnitact::contact::DEFAULT_SIGMA_MM;
use omnitact::datasets::{self, Label, Scenario, Split, Task};
use omnitact::demo::{self, DemoObject, SweepSettings};
use omnitact::geometry::{compute_coverage, CoveragePlane, SensorConfig, SensorKind};
use omnitact::learn::{self, abs_error_stats, extract_features, model_io, FeatureVector, ModelKind, TrainConfig};
use omnitact::sensor::Sensor;
use omnitact::tasks::{simulate_insertion, AngleRange, AngleSettings, InsertionSettings, ScenarioMode};
use omnitact::{config, imageio, Error, Result};

#[derive(Parser)]
#[command(
    name = "omnitact-sim",
    version,
    about = "Multi-camera tactile fingertip simulator and benchmarks"
)]
struct Cli {
    /// Sensor configuration file (TOML); replaces the preset of the same kind.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for rendering.
    #[arg(long, global = true, env = "OMNITACT_SIM_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Omnitact,
    Flat,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Angle,
    Insertion,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ridge,
    Mlp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ridge => ModelKind::Ridge,
            ModelArg::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Angular coverage of the camera cones in the two characteristic cuts.
    Coverage {
        #[arg(long, value_enum, default_value = "omnitact")]
        preset: Preset,
        /// Directions sampled per plane (3600 = 0.1 deg).
        #[arg(long, default_value_t = 3600)]
        samples: usize,
    },
    /// Pose sweep of a demo object, written as an image strip.
    RenderDemo {
        #[arg(long)]
        object: String,
        #[arg(long, default_value_t = 13)]
        frames: usize,
        #[arg(long, default_value_t = 1.0)]
        press_mm: f64,
        #[arg(long, default_value_t = 96)]
        resolution: usize,
        /// Also write 16-bit depth and normal maps for every frame and camera.
        #[arg(long)]
        dump_maps: bool,
    },
    /// Generates a dataset directory.
    GenDataset {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "omnitact")]
        preset: Preset,
        /// Angle range R1, R2, R3 or all.
        #[arg(long, default_value = "all")]
        range: String,
        /// Samples per angle range, or insertion demonstrations.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Comma-separated camera names; defaults to every camera.
        #[arg(long)]
        cameras: Option<String>,
        #[arg(long)]
        demo_noise_mm: Option<f64>,
    },
    /// Trains a regressor on the train split of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "mlp")]
        model: ModelArg,
        /// Comma-separated camera names, or `force` for the force triple.
        #[arg(long)]
        inputs: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Scores a trained model on the test split of a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        clearance_mm: Option<f64>,
    },
    /// Angle-of-contact benchmark for the multi-directional and flat sensors.
    BenchmarkAngle {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "mlp")]
        model: ModelArg,
    },
    /// Connector insertion benchmark for the four policy input sets.
    BenchmarkInsertion {
        #[arg(long, default_value_t = 100)]
        demos: usize,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long)]
        clearance_mm: Option<f64>,
        #[arg(long)]
        demo_noise_mm: Option<f64>,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "mlp")]
        model: ModelArg,
        /// Adds the noise-free expert as a sanity row.
        #[arg(long, hide = true)]
        oracle: bool,
    },
}

/// Sidecar describing how a saved model consumes a dataset.
#[derive(Serialize, Deserialize)]
struct ModelCard {
    task: Task,
    model: ModelKind,
    /// Camera indices, empty when the force triple is used.
    cameras: Vec<usize>,
    force: bool,
    ds: (usize, usize),
    config_hash: String,
    train_count: usize,
    seed: u64,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    seed: u64,
    config_hashes: Vec<String>,
    wall_time_s: f64,
    outputs: Vec<String>,
}

struct Ctx {
    config: Option<SensorConfig>,
    seed: u64,
    out_dir: PathBuf,
    jobs: usize,
}

impl Ctx {
    fn preset(&self, p: Preset) -> Result<SensorConfig> {
        let kind = match p {
            Preset::Omnitact => SensorKind::MultiDirectional,
            Preset::Flat => SensorKind::FlatBaseline,
        };
        if let Some(c) = &self.config {
            if c.kind == kind {
                return Ok(c.clone());
            }
        }
        config::preset(match p {
            Preset::Omnitact => "omnitact",
            Preset::Flat => "flat",
        })
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::Io {
            path: self.out_dir.clone(),
            source: e,
        })?;
        Ok(self.out_dir.join(name))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn camera_indices(cfg: &SensorConfig, names: &str) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = names
        .split(',')
        .map(|n| {
            cfg.cameras
                .iter()
                .position(|c| c.name == n.trim())
                .ok_or_else(|| Error::Input(format!("unknown camera {n:?}")))
        })
        .collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Config(_) | Error::Dataset(_) | Error::Io { .. } => 2,
        Error::Simulation(_) | Error::Calibration(_) | Error::Numeric(_) => 3,
        Error::Training { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Input("--jobs must be at least 1".into()));
    }
    let ctx = Ctx {
        config: cli.config.as_deref().map(config::load).transpose()?,
        seed: cli.seed,
        out_dir: cli.out_dir,
        jobs: cli.jobs,
    };
    let start = Instant::now();
    let (name, hashes, outputs) = match cli.command {
        Command::Coverage { preset, samples } => cmd_coverage(&ctx, preset, samples)?,
        Command::RenderDemo {
            object,
            frames,
            press_mm,
            resolution,
            dump_maps,
        } => cmd_render_demo(&ctx, &object, frames, press_mm, resolution, dump_maps)?,
        Command::GenDataset {
            task,
            preset,
            range,
            samples,
            resolution,
            test_fraction,
            cameras,
            demo_noise_mm,
        } => cmd_gen_dataset(
            &ctx,
            task,
            preset,
            &range,
            samples,
            resolution,
            test_fraction,
            cameras.as_deref(),
            demo_noise_mm,
        )?,
        Command::Train {
            dataset,
            model,
            inputs,
            epochs,
        } => cmd_train(&ctx, &dataset, model.into(), inputs.as_deref(), epochs)?,
        Command::Eval {
            dataset,
            model_file,
            clearance_mm,
        } => cmd_eval(&ctx, &dataset, &model_file, clearance_mm)?,
        Command::BenchmarkAngle {
            samples,
            resolution,
            model,
        } => cmd_benchmark_angle(&ctx, samples, resolution, model.into())?,
        Command::BenchmarkInsertion {
            demos,
            trials,
            clearance_mm,
            demo_noise_mm,
            resolution,
            model,
            oracle,
        } => cmd_benchmark_insertion(
            &ctx,
            demos,
            trials,
            clearance_mm,
            demo_noise_mm,
            resolution,
            model.into(),
            oracle,
        )?,
    };
    let wall = start.elapsed().as_secs_f64();
    eprintln!("{name}: done in {wall:.1} s");
    let info = RunInfo {
        command: name,
        seed: ctx.seed,
        config_hashes: hashes,
        wall_time_s: wall,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    if name == "gen-dataset" {
        return Ok(());
    }
    write_json(&ctx.out(&format!("{name}.run.json"))?, &info)
}

type Outcome = (&'static str, Vec<String>, Vec<PathBuf>);

fn cmd_coverage(ctx: &Ctx, preset: Preset, samples: usize) -> Result<Outcome> {
    let cfg = ctx.preset(preset)?;
    let report = compute_coverage(&cfg, samples)?;
    let mut table = String::new();
    table.push_str(&format!("{:<22} {:>10}\n", "cut", "covered"));
    table.push_str(&format!("{:<22} {:>9.1}°\n", "vertical", report.vertical_covered_deg));
    table.push_str(&format!(
        "{:<22} {:>9.1}°\n",
        "horizontal", report.horizontal_covered_deg
    ));
    for plane in [CoveragePlane::Vertical, CoveragePlane::Horizontal] {
        let blind: Vec<String> = report
            .blind_spot_arcs
            .iter()
            .filter(|a| a.plane == plane)
            .map(|a| format!("{:.1}-{:.1}°", a.start_deg, a.end_deg))
            .collect();
        table.push_str(&format!(
            "{:<22} {:>9.1}° {}\n",
            format!("{plane:?} blind").to_lowercase(),
            report.blind_total_deg(plane) + 0.0,
            blind.join(" ")
        ));
    }
    table.push_str(&format!(
        "{:<22} {:>10.3}\n",
        "solid angle fraction", report.solid_angle_fraction
    ));
    print!("{table}");
    let json = ctx.out("coverage.json")?;
    let txt = ctx.out("coverage.txt")?;
    let png = ctx.out("coverage.png")?;
    write_json(&json, &report)?;
    write_text(&txt, &table)?;
    imageio::save_rgb(&demo::polar_diagram(&report, 400), &png)?;
    Ok(("coverage", vec![config::config_hash(&cfg)?], vec![json, txt, png]))
}

fn cmd_render_demo(
    ctx: &Ctx,
    object: &str,
    frames: usize,
    press_mm: f64,
    resolution: usize,
    dump_maps: bool,
) -> Result<Outcome> {
    let object: DemoObject = object.parse()?;
    let cfg = ctx.preset(Preset::Omnitact)?.with_resolution(resolution);
    let hash = config::config_hash(&cfg)?;
    let sensor = Sensor::new(cfg, DEFAULT_SIGMA_MM)?;
    let rendered = demo::render_demo(&sensor, object, &SweepSettings { frames, press_mm })?;
    let name = format!("{object:?}").to_lowercase();
    let strip = ctx.out(&format!("demo_{name}.png"))?;
    imageio::save_rgb(&demo::frame_strip(&rendered), &strip)?;
    #[derive(Serialize)]
    struct Frame {
        parameter: f64,
        contact_px: Vec<usize>,
    }
    let summary: Vec<Frame> = rendered
        .iter()
        .map(|f| Frame {
            parameter: f.parameter,
            contact_px: f.contact_px.clone(),
        })
        .collect();
    for f in &summary {
        println!("{:>8.3}  contact px per camera {:?}", f.parameter, f.contact_px);
    }
    let json = ctx.out(&format!("demo_{name}.json"))?;
    write_json(&json, &summary)?;
    let mut outputs = vec![strip, json];
    if dump_maps {
        let dir = ctx.out("maps")?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for (i, f) in rendered.iter().enumerate() {
            for r in &f.readings {
                let cam = &sensor.config().cameras[r.depth.camera_index].name;
                let stem = dir.join(format!("{name}_{i:02}_{cam}"));
                imageio::write_bytes(&imageio::encode_depth(&r.depth), &stem.with_extension("otd"))?;
                imageio::write_bytes(&imageio::encode_normals(&r.normals), &stem.with_extension("otn"))?;
            }
        }
        outputs.push(dir);
    }
    Ok(("render-demo", vec![hash], outputs))
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_dataset(
    ctx: &Ctx,
    task: TaskArg,
    preset: Preset,
    range: &str,
    samples: usize,
    resolution: usize,
    test_fraction: f64,
    cameras: Option<&str>,
    demo_noise_mm: Option<f64>,
) -> Result<Outcome> {
    let cfg = ctx.preset(preset)?.with_resolution(resolution);
    let sensor = Sensor::new(cfg.clone(), DEFAULT_SIGMA_MM)?;
    let dir = ctx.out_dir.clone();
    let manifest = match task {
        TaskArg::Angle => {
            let cams = match cameras {
                Some(n) => camera_indices(&cfg, n)?,
                None => (0..cfg.num_cameras()).collect(),
            };
            let ranges: Vec<AngleRange> = if range.eq_ignore_ascii_case("all") {
                AngleRange::ALL.to_vec()
            } else {
                vec![range.parse()?]
            };
            let mut all = Vec::new();
            for r in ranges {
                all.extend(bench::angle_dataset_samples(
                    &sensor,
                    r,
                    samples,
                    ctx.seed,
                    &AngleSettings::default(),
                    &cams,
                    ctx.jobs,
                )?);
            }
            datasets::write_dataset(&dir, &cfg, ctx.seed, test_fraction, &all)?
        }
        TaskArg::Insertion => {
            let mut settings = InsertionSettings::default();
            if let Some(n) = demo_noise_mm {
                settings.demo_noise_mm = n;
            }
            settings.validate()?;
            let s =
                bench::insertion_dataset_samples(&sensor, ScenarioMode::Train, samples, ctx.seed, &settings, ctx.jobs)?;
            datasets::write_dataset(&dir, &cfg, ctx.seed, test_fraction, &s)?
        }
    };
    println!(
        "{} records ({} train, {} test), manifest digest {}",
        manifest.records.len(),
        manifest.split(Split::Train).count(),
        manifest.split(Split::Test).count(),
        manifest.digest()?
    );
    Ok((
        "gen-dataset",
        vec![manifest.header.config_hash.clone()],
        vec![dir.join(datasets::MANIFEST_FILE)],
    ))
}

fn record_features(ds: &datasets::Dataset, rec: &datasets::SampleRecord, card: &ModelCard) -> Result<FeatureVector> {
    if card.force {
        let f = rec
            .force_triple
            .ok_or_else(|| Error::Input(format!("sample {} has no force triple", rec.sample_id)))?;
        return Ok(FeatureVector {
            values: f.to_vec(),
            blocks: vec![],
        });
    }
    extract_features(&ds.load_images(rec, &card.cameras)?, &card.cameras, card.ds)
}

fn cmd_train(ctx: &Ctx, dir: &Path, model: ModelKind, inputs: Option<&str>, epochs: Option<usize>) -> Result<Outcome> {
    let ds = datasets::read_dataset(dir, None)?;
    let task = ds.manifest.header.task;
    let force = inputs == Some("force");
    let cameras = match inputs {
        Some("force") => vec![],
        Some(n) => camera_indices(&ds.config, n)?,
        None => {
            let mut c: Vec<usize> = ds
                .manifest
                .records
                .first()
                .map(|r| r.images.iter().map(|i| i.camera).collect())
                .unwrap_or_default();
            c.sort_unstable();
            c
        }
    };
    let train: Vec<_> = ds.manifest.split(Split::Train).collect();
    let mut card = ModelCard {
        task,
        model,
        cameras,
        force,
        ds: learn::DEFAULT_DS,
        config_hash: ds.manifest.header.config_hash.clone(),
        train_count: train.len(),
        seed: ctx.seed,
    };
    let res = ds.config.cameras[0].rows();
    card.ds = (res.min(card.ds.0), res.min(card.ds.1));
    let feats = bench::par_map(ctx.jobs, &train, |r| record_features(&ds, r, &card))?;
    let labels: Vec<Vec<f64>> = train.iter().map(|r| r.label.values()).collect();
    let x = learn::feature_matrix(&feats)?;
    let k = labels.first().map(Vec::len).unwrap_or(0);
    let y = nalgebra::DMatrix::from_fn(labels.len(), k, |r, c| labels[r][c]);
    let mut tc = TrainConfig {
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    if let Some(e) = epochs {
        tc.epochs = e;
    }
    let net = learn::fit(model, &x, &y, &tc)?;
    let model_path = ctx.out("model.otmlp")?;
    let card_path = ctx.out("model.json")?;
    model_io::save(&net, &model_path)?;
    write_json(&card_path, &card)?;
    println!("trained {model:?} on {} samples, {} features", train.len(), x.ncols());
    Ok(("train", vec![card.config_hash.clone()], vec![model_path, card_path]))
}

fn cmd_eval(ctx: &Ctx, dir: &Path, model_file: &Path, clearance_mm: Option<f64>) -> Result<Outcome> {
    let ds = datasets::read_dataset(dir, None)?;
    let card: ModelCard = read_json(&model_file.with_extension("json"))?;
    if card.config_hash != ds.manifest.header.config_hash {
        return Err(omnitact::DatasetError::HashMismatch {
            manifest: ds.manifest.header.config_hash.clone(),
            expected: card.config_hash.clone(),
        }
        .into());
    }
    let net = model_io::load(model_file)?;
    let test: Vec<_> = ds.manifest.split(Split::Test).collect();
    let feats = bench::par_map(ctx.jobs, &test, |r| record_features(&ds, r, &card))?;
    let preds: Vec<Vec<f64>> = feats.iter().map(|f| net.predict(&f.values)).collect();
    let path = ctx.out("eval.json")?;
    match card.task {
        Task::Angle => {
            #[derive(Serialize)]
            struct Row {
                range: String,
                median_abs_error_deg: f64,
                iqr_deg: f64,
                count: usize,
            }
            let mut rows = Vec::new();
            for range in AngleRange::ALL {
                let (p, t): (Vec<f64>, Vec<f64>) = test
                    .iter()
                    .zip(&preds)
                    .filter_map(|(r, p)| match (&r.scenario, &r.label) {
                        (Scenario::Angle(s), Label::ThetaDeg(t)) if s.range == range => Some((p[0], *t)),
                        _ => None,
                    })
                    .unzip();
                if p.is_empty() {
                    continue;
                }
                let s = abs_error_stats(&p, &t)?;
                println!(
                    "{:<10} {:.3} ({:.3})  n = {}",
                    range.label(),
                    s.median_abs_error,
                    s.iqr,
                    s.count
                );
                rows.push(Row {
                    range: range.label(),
                    median_abs_error_deg: s.median_abs_error,
                    iqr_deg: s.iqr,
                    count: s.count,
                });
            }
            if rows.is_empty() {
                return Err(Error::Input("empty test set".into()));
            }
            write_json(&path, &rows)?;
        }
        Task::Insertion => {
            let mut settings = InsertionSettings::default();
            if let Some(c) = clearance_mm {
                settings.clearance_mm = c;
            }
            settings.validate()?;
            let mut successes = 0;
            for (r, p) in test.iter().zip(&preds) {
                if let Scenario::Insertion(s) = &r.scenario {
                    successes += simulate_insertion(s, [p[0], p[1]], &settings).success as usize;
                }
            }
            if test.is_empty() {
                return Err(Error::Input("empty test set".into()));
            }
            #[derive(Serialize)]
            struct Summary {
                successes: usize,
                trials: usize,
                success_rate: f64,
            }
            let s = Summary {
                successes,
                trials: test.len(),
                success_rate: successes as f64 / test.len() as f64,
            };
            println!("success {}/{} ({:.1}%)", s.successes, s.trials, 100.0 * s.success_rate);
            write_json(&path, &s)?;
        }
    }
    Ok(("eval", vec![card.config_hash], vec![path]))
}

fn cmd_benchmark_angle(ctx: &Ctx, samples: usize, resolution: usize, model: ModelKind) -> Result<Outcome> {
    let settings = AngleBenchSettings {
        samples_per_range: samples,
        resolution,
        ds: (resolution.min(learn::DEFAULT_DS.0), resolution.min(learn::DEFAULT_DS.1)),
        model,
        ..AngleBenchSettings::default()
    };
    let sensors = vec![
        ("omnitact".to_string(), ctx.preset(Preset::Omnitact)?),
        ("flat".to_string(), ctx.preset(Preset::Flat)?),
    ];
    let report = bench::run_angle_benchmark(&sensors, &settings, ctx.seed, ctx.jobs)?;
    let table = report.table();
    print!("{table}");
    let json = ctx.out("benchmark_angle.json")?;
    let txt = ctx.out("benchmark_angle.txt")?;
    write_json(&json, &report)?;
    write_text(&txt, &table)?;
    let hashes = report.config_hashes.iter().map(|(_, h)| h.clone()).collect();
    Ok(("benchmark-angle", hashes, vec![json, txt]))
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark_insertion(
    ctx: &Ctx,
    demos: usize,
    trials: usize,
    clearance_mm: Option<f64>,
    demo_noise_mm: Option<f64>,
    resolution: usize,
    model: ModelKind,
    oracle: bool,
) -> Result<Outcome> {
    let mut settings = InsertionBenchSettings {
        demonstrations: demos,
        resolution,
        ds: (resolution.min(learn::DEFAULT_DS.0), resolution.min(learn::DEFAULT_DS.1)),
        model,
        include_oracle: oracle,
        ..InsertionBenchSettings::default()
    };
    settings.task.eval_trials = trials;
    if let Some(c) = clearance_mm {
        settings.task.clearance_mm = c;
    }
    if let Some(n) = demo_noise_mm {
        settings.task.demo_noise_mm = n;
    }
    let report = bench::run_insertion_benchmark(&ctx.preset(Preset::Omnitact)?, &settings, ctx.seed, ctx.jobs)?;
    let table = report.table();
    print!("{table}");
    let json = ctx.out("benchmark_insertion.json")?;
    let txt = ctx.out("benchmark_insertion.txt")?;
    write_json(&json, &report)?;
    write_text(&txt, &table)?;
    debug_assert!(report.rows.iter().take(4).map(|r| r.policy).eq(Policy::TABLE));
    Ok(("benchmark-insertion", vec![report.config_hash.clone()], vec![json, txt]))
}
