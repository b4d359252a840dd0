use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certainty::{HistogramConfig, Method};
use crate::data::{load_idx, load_rgb_dir, synth, Dataset};
use crate::diagnostics::unit_grid;
use crate::diff::ScoreMode;
use crate::error::{Error, Result};
use crate::model::{AugmentSpec, ModelConfig};
use crate::samplers::SamplerSpec;

pub const DEFAULT_SEED: u64 = synth::REFERENCE_SEED;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// One experiment, as read from a TOML file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explain: Option<ExplainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<ProjectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragility: Option<FragilitySection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    SyntheticDigits {
        #[serde(default = "default_train_count")]
        train_count: usize,
        #[serde(default = "default_test_count")]
        test_count: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Idx {
        train_images: Option<PathBuf>,
        train_labels: Option<PathBuf>,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    RgbDir {
        train_dir: Option<PathBuf>,
        test_dir: PathBuf,
        width: usize,
        height: usize,
    },
}

fn default_train_count() -> usize {
    synth::REFERENCE_TRAIN
}

fn default_test_count() -> usize {
    synth::REFERENCE_TEST
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::SyntheticDigits {
            train_count: synth::REFERENCE_TRAIN,
            test_count: synth::REFERENCE_TEST,
            seed: DEFAULT_SEED,
        }
    }
}

impl DataConfig {
    pub fn load_test(&self, base: &Path) -> Result<Dataset> {
        match self {
            DataConfig::SyntheticDigits { test_count, seed, .. } => {
                synth::generate("digits-test", *test_count, crate::rng::derive_seed(*seed, 1))
            }
            DataConfig::Idx {
                test_images,
                test_labels,
                ..
            } => load_idx(base.join(test_images), base.join(test_labels)),
            DataConfig::RgbDir {
                test_dir,
                width,
                height,
                ..
            } => load_rgb_dir(base.join(test_dir), *width, *height),
        }
    }

    pub fn load_train(&self, base: &Path) -> Result<Dataset> {
        let missing = || Error::Config("data section has no training split".into());
        match self {
            DataConfig::SyntheticDigits { train_count, seed, .. } => {
                synth::generate("digits-train", *train_count, *seed)
            }
            DataConfig::Idx {
                train_images,
                train_labels,
                ..
            } => {
                let (Some(i), Some(l)) = (train_images, train_labels) else {
                    return Err(missing());
                };
                load_idx(base.join(i), base.join(l))
            }
            DataConfig::RgbDir {
                train_dir,
                width,
                height,
                ..
            } => load_rgb_dir(base.join(train_dir.as_ref().ok_or_else(missing)?), *width, *height),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Checkpoint consumed by every command except `train`.
    pub checkpoint: Option<PathBuf>,
    /// Architecture for `train`; the reference CNN when absent.
    pub architecture: Option<ModelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: Option<u32>,
    pub batches: Option<u64>,
    pub augmentation: Option<AugmentSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    /// Row of the test split.
    pub index: usize,
    pub sampler: SamplerSpec,
    pub samples: usize,
    #[serde(default)]
    pub multiply_by_input: bool,
    /// Explained class; the true label when absent.
    pub class: Option<usize>,
    #[serde(default)]
    pub score_mode: ScoreMode,
    /// Heatmap pixels per map cell.
    #[serde(default = "default_scale")]
    pub scale: usize,
}

fn default_scale() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub methods: Vec<Method>,
    pub samples: usize,
    pub image_count: usize,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub score_mode: ScoreMode,
    #[serde(default = "yes")]
    pub normalize_to_linear_scale: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "unit_grid")]
    pub grid: Vec<f64>,
    pub samples: usize,
    pub image_count: usize,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub score_mode: ScoreMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    pub samplers: Vec<SamplerSpec>,
    pub per_group: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragilitySection {
    pub augmentation: AugmentSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batches: u64,
    pub bench: BenchSection,
}

/// Per-invocation overrides from the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Replaces `p` of every Bernoulli sampler in the active section.
    pub p: Option<f64>,
    /// Replaces `sigma` of every Gaussian sampler in the active section.
    pub sigma: Option<f64>,
    pub samples: Option<usize>,
    pub bins: Option<usize>,
    pub multiply_by_input: bool,
}

/// The experiment commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Explain,
    Bench,
    Sweep,
    Project,
    Fragility,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Explain => "explain",
            Command::Bench => "bench",
            Command::Sweep => "sweep",
            Command::Project => "project",
            Command::Fragility => "fragility",
        }
    }
}

fn section<'a, T>(s: &'a Option<T>, cmd: Command, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("`{}` needs a [{name}] section", cmd.name())))
}

fn retune(s: &mut SamplerSpec, o: &Overrides) {
    match s {
        SamplerSpec::BernoulliDrop { p } => {
            if let Some(v) = o.p {
                *p = v;
            }
        }
        SamplerSpec::GaussianNoise { sigma, .. } => {
            if let Some(v) = o.sigma {
                *sigma = v;
            }
        }
        _ => {}
    }
}

fn retune_bench(b: &mut BenchSection, o: &Overrides) {
    for m in &mut b.methods {
        retune(&mut m.sampler, o);
        m.multiply_by_input |= o.multiply_by_input;
    }
    if let Some(n) = o.samples {
        b.samples = n;
    }
    if let Some(bins) = o.bins {
        b.histogram.bins = bins;
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace('\n', " ").trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, cmd: Command, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        match cmd {
            Command::Train => {}
            Command::Explain => {
                if let Some(e) = &mut self.explain {
                    retune(&mut e.sampler, o);
                    e.multiply_by_input |= o.multiply_by_input;
                    if let Some(n) = o.samples {
                        e.samples = n;
                    }
                }
            }
            Command::Bench => {
                if let Some(b) = &mut self.bench {
                    retune_bench(b, o);
                }
            }
            Command::Sweep => {
                if let Some(s) = &mut self.sweep {
                    if let Some(n) = o.samples {
                        s.samples = n;
                    }
                    if let Some(bins) = o.bins {
                        s.histogram.bins = bins;
                    }
                }
            }
            Command::Project => {
                if let Some(p) = &mut self.project {
                    p.samplers.iter_mut().for_each(|s| retune(s, o));
                }
            }
            Command::Fragility => {
                if let Some(f) = &mut self.fragility {
                    retune_bench(&mut f.bench, o);
                }
            }
        }
    }

    /// Checks everything `cmd` will need before any work starts.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        if self.out.is_none() {
            return Err(Error::Config("no output directory (set `out` or pass --out)".into()));
        }
        if let DataConfig::SyntheticDigits { test_count, .. } = self.data {
            if test_count == 0 {
                return Err(Error::Config("synthetic test_count must be positive".into()));
            }
        }
        if cmd != Command::Train && !self.model.as_ref().is_some_and(|m| m.checkpoint.is_some()) {
            return Err(Error::Config(format!("`{}` needs [model] checkpoint", cmd.name())));
        }
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        let bench_ok = |b: &BenchSection| -> Result<()> {
            if b.methods.is_empty() {
                return Err(Error::Config("bench needs at least one method".into()));
            }
            for m in &b.methods {
                m.sampler.validate()?;
            }
            if b.normalize_to_linear_scale && !b.methods.iter().any(|m| m.sampler == SamplerSpec::LinearScale) {
                return Err(Error::MissingReferenceMethod);
            }
            positive(b.samples, "samples")?;
            positive(b.image_count, "image_count")?;
            b.histogram.validate()
        };
        match cmd {
            Command::Train => {
                let t = section(&self.train, cmd, "train")?;
                if t.epochs.is_some() == t.batches.is_some() {
                    return Err(Error::Config("[train] needs exactly one of `epochs` or `batches`".into()));
                }
                self.train_spec()?.validate()?;
                if let Some(arch) = self.model.as_ref().and_then(|m| m.architecture.as_ref()) {
                    arch.parameter_shapes()?;
                }
            }
            Command::Explain => {
                let e = section(&self.explain, cmd, "explain")?;
                e.sampler.validate()?;
                positive(e.samples, "samples")?;
                positive(e.scale, "scale")?;
            }
            Command::Bench => {
                bench_ok(section(&self.bench, cmd, "bench")?)?;
            }
            Command::Sweep => {
                let s = section(&self.sweep, cmd, "sweep")?;
                if s.grid.is_empty() {
                    return Err(Error::Config("sweep grid is empty".into()));
                }
                for &p in &s.grid {
                    SamplerSpec::bernoulli(p).validate()?;
                }
                positive(s.samples, "samples")?;
                positive(s.image_count, "image_count")?;
                s.histogram.validate()?;
            }
            Command::Project => {
                let p = section(&self.project, cmd, "project")?;
                for s in &p.samplers {
                    s.validate()?;
                }
                positive(p.per_group, "per_group")?;
            }
            Command::Fragility => {
                let f = section(&self.fragility, cmd, "fragility")?;
                f.augmentation.validate()?;
                positive(f.batch_size, "batch_size")?;
                if !(f.learning_rate >= 0.0 && f.learning_rate.is_finite()) {
                    return Err(Error::Config("fragility learning_rate must be finite and non-negative".into()));
                }
                bench_ok(&f.bench)?;
            }
        }
        Ok(())
    }

    pub(crate) fn train_spec(&self) -> Result<crate::model::TrainSpec> {
        let t = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("missing [train] section".into()))?;
        let duration = match (t.epochs, t.batches) {
            (Some(e), None) => crate::model::TrainDuration::Epochs(e),
            (None, Some(b)) => crate::model::TrainDuration::Batches(b),
            _ => return Err(Error::Config("[train] needs exactly one of `epochs` or `batches`".into())),
        };
        Ok(crate::model::TrainSpec {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            duration,
            augmentation: t.augmentation.clone(),
            seed: self.seed,
        })
    }
}

impl BenchSection {
    pub(crate) fn spec(&self, seed: u64) -> crate::certainty::BenchmarkSpec {
        crate::certainty::BenchmarkSpec {
            methods: self.methods.clone(),
            samples: self.samples,
            image_count: self.image_count,
            seed,
            histogram: self.histogram,
            score_mode: self.score_mode,
            normalize_to_linear_scale: self.normalize_to_linear_scale,
        }
    }
}
