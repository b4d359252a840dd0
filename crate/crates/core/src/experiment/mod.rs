//! Config-driven experiment runs and their manifests.
//!
//! Each command reads one [`ExperimentConfig`], validates the parts it needs
//! before touching any data, writes its artifacts into the output directory
//! and finishes with a `manifest.json` listing the config, seed and the
//! SHA-256 of every artifact.

mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{
    BenchSection, Command, DataConfig, ExperimentConfig, ExplainSection, FragilitySection, ModelSection,
    Overrides, ProjectSection, SweepSection, TrainSection, DEFAULT_SEED,
};
pub use manifest::{sha256_hex, verify_manifest, Artifact, Manifest, MANIFEST_FILE};

use crate::attribution::{grid_csv, integrate, normalize_min_max, IntegrateSpec};
use crate::certainty::BenchmarkTable;
use crate::diagnostics::{alignment_study, augmentation_fragility, p_sweep, SweepSpec};
use crate::error::{Error, Result};
use crate::model::{self, read_checkpoint, Checkpoint, ModelConfig, TrainDuration, TrainSpec};
use crate::render;

/// Collects emitted files and their hashes.
struct Emitter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.emit(name, serde_json::to_string_pretty(value)? + "\n")
    }

    fn table(&mut self, stem: &str, table: &BenchmarkTable) -> Result<()> {
        self.emit(&format!("{stem}.csv"), table.to_csv())?;
        self.json(&format!("{stem}.json"), table)
    }
}

fn checkpoint(cfg: &ExperimentConfig, base: &Path) -> Result<Checkpoint> {
    let path = cfg
        .model
        .as_ref()
        .and_then(|m| m.checkpoint.as_ref())
        .ok_or_else(|| Error::Config("missing [model] checkpoint".into()))?;
    read_checkpoint(base.join(path))
}

/// Runs `cmd`, resolving relative input paths against `base`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, base: &Path) -> Result<Manifest> {
    cfg.validate(cmd)?;
    let out = cfg.out.as_ref().expect("validated");
    let mut em = Emitter::new(out)?;
    match cmd {
        Command::Train => {
            let train = cfg.data.load_train(base)?;
            let test = cfg.data.load_test(base)?;
            let arch = match cfg.model.as_ref().and_then(|m| m.architecture.clone()) {
                Some(a) => a,
                None => ModelConfig::reference(train.image_shape(), train.class_count(), cfg.seed),
            };
            let init = model::init_model(arch)?;
            let mut trained = model::train(&init, &train, &cfg.train_spec()?)?;
            trained.train_meta.test_accuracy = Some(model::evaluate(&trained, &test)?);
            em.emit("model.ckpt", trained.to_bytes()?)?;
            em.json("train.json", &trained.train_meta)?;
        }
        Command::Explain => {
            let e = cfg.explain.as_ref().expect("validated");
            let ckpt = checkpoint(cfg, base)?;
            let test = cfg.data.load_test(base)?;
            if e.index >= test.len() {
                return Err(Error::SampleOutOfRange {
                    index: e.index,
                    count: test.len(),
                });
            }
            let x = test.image(e.index)?;
            let y = e.class.unwrap_or(test.label(e.index));
            let spec = IntegrateSpec {
                sampler: e.sampler.clone(),
                samples: e.samples,
                seed: cfg.seed,
                multiply_by_input: e.multiply_by_input,
                score_mode: e.score_mode,
            };
            let map = normalize_min_max(&integrate(&ckpt, &x, y, &spec)?);
            em.emit("explanation.csv", grid_csv(&map.values)?)?;
            em.emit("explanation_raw.csv", grid_csv(&map.raw)?)?;
            em.json("explanation.json", &map.meta)?;
            em.emit("explanation.png", render::heatmap_image(&map, e.scale)?.to_png()?)?;
            em.emit("explanation.pgm", render::pgm_bytes(&map.values)?)?;
        }
        Command::Bench => {
            let b = cfg.bench.as_ref().expect("validated");
            let ckpt = checkpoint(cfg, base)?;
            let test = cfg.data.load_test(base)?;
            let table = crate::certainty::benchmark(&ckpt, &test, &b.spec(cfg.seed))?;
            em.table("bench", &table)?;
        }
        Command::Sweep => {
            let s = cfg.sweep.as_ref().expect("validated");
            let ckpt = checkpoint(cfg, base)?;
            let test = cfg.data.load_test(base)?;
            let spec = SweepSpec {
                grid: s.grid.clone(),
                samples: s.samples,
                image_count: s.image_count,
                seed: cfg.seed,
                histogram: s.histogram,
                score_mode: s.score_mode,
            };
            let sweep = p_sweep(&ckpt, &test, &spec)?;
            em.emit("sweep.csv", sweep.to_csv())?;
            em.json("sweep.json", &sweep)?;
            let plot = render::line_plot(&sweep.grid, &[sweep.mean_grad_norm.clone(), sweep.mean_mi.clone()], 400);
            em.emit("sweep.png", plot.to_png()?)?;
        }
        Command::Project => {
            let p = cfg.project.as_ref().expect("validated");
            let ckpt = checkpoint(cfg, base)?;
            let test = cfg.data.load_test(base)?;
            let proj = alignment_study(&ckpt, &test, &p.samplers, p.per_group, cfg.seed)?;
            em.emit("projection.csv", proj.to_csv())?;
            em.emit("centroids.csv", proj.centroids_csv())?;
            let groups: Vec<usize> = (0..proj.points.len()).map(|i| proj.group_index(i)).collect();
            em.emit(
                "projection.png",
                render::scatter_plot(&proj.points, &groups, &proj.centroids, 480).to_png()?,
            )?;
        }
        Command::Fragility => {
            let f = cfg.fragility.as_ref().expect("validated");
            let ckpt = checkpoint(cfg, base)?;
            let train = cfg.data.load_train(base)?;
            let test = cfg.data.load_test(base)?;
            let fine_tune = TrainSpec {
                learning_rate: f.learning_rate,
                batch_size: f.batch_size,
                duration: TrainDuration::Batches(f.batches),
                augmentation: None,
                seed: cfg.seed,
            };
            let (report, tuned) =
                augmentation_fragility(&ckpt, &train, &test, &f.augmentation, &fine_tune, &f.bench.spec(cfg.seed))?;
            em.table("before", &report.before)?;
            em.table("after", &report.after)?;
            em.emit("fragility.csv", report.to_csv())?;
            em.json("fragility.json", &report.changes)?;
            em.emit("finetuned.ckpt", tuned.to_bytes()?)?;
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd,
        seed: cfg.seed,
        config: cfg.clone(),
        artifacts: em.artifacts,
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// [`run`] inside a dedicated rayon pool of `workers` threads.
pub fn run_with_workers(cmd: Command, cfg: &ExperimentConfig, base: &Path, workers: usize) -> Result<Manifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {workers} workers: {e}")))?;
    pool.install(|| run(cmd, cfg, base))
}

/// Loads `path`, applies the overrides and runs `cmd`. Relative inputs
/// resolve against the config file's directory.
pub fn run_file(cmd: Command, path: &Path, overrides: &Overrides, workers: Option<usize>) -> Result<Manifest> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(cmd, overrides);
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    match workers {
        Some(w) => run_with_workers(cmd, &cfg, &base, w),
        None => run(cmd, &cfg, &base),
    }
}

/// One-line, machine-parsable failure report.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace(['\n', '\r'], " ");
    format!("error category={} message={:?}", err.category(), msg)
}
