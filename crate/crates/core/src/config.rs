//! Pipeline configuration: a flat `section.key = value` text format with
//! `#` comments, two base profiles (`desk`, `paper`) and a stable hash.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::augmentation::AugmentMode;
use crate::autoencoder::{Architecture, AutoencoderSpec, TrainingSpec};
use crate::classifier::{ClassifierArch, ClassifierTraining};
use crate::dataset::Shape;
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::selection::{RankMode, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Fmnist,
    Cifar10,
    Blobs,
    Rings,
}

impl DataSource {
    pub fn name(&self) -> &'static str {
        match self {
            DataSource::Fmnist => "fmnist",
            DataSource::Cifar10 => "cifar10",
            DataSource::Blobs => "blobs",
            DataSource::Rings => "rings",
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, DataSource::Blobs | DataSource::Rings)
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fmnist" => Ok(DataSource::Fmnist),
            "cifar10" => Ok(DataSource::Cifar10),
            "blobs" => Ok(DataSource::Blobs),
            "rings" => Ok(DataSource::Rings),
            _ => Err(Error::Config(format!("unknown data source `{s}`"))),
        }
    }
}

/// How Ñ is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectStrategy {
    /// Rank leftovers by anomaly degree, then apply the population mode.
    Rank,
    /// Uniformly random leftovers, as many as the population mode asks for.
    Random,
    /// Ignore the detector: uniformly random samples of the whole
    /// unlabeled pool.
    Naive,
}

impl SelectStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SelectStrategy::Rank => "rank",
            SelectStrategy::Random => "random",
            SelectStrategy::Naive => "naive",
        }
    }
}

impl FromStr for SelectStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(SelectStrategy::Rank),
            "random" => Ok(SelectStrategy::Random),
            "naive" => Ok(SelectStrategy::Naive),
            _ => Err(Error::Config(format!("unknown selection strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierInput {
    Images,
    Encodings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub path: PathBuf,
    pub positive_classes: BTreeSet<u8>,
    pub n_labeled: usize,
    /// Cap on the unlabeled pool; 0 keeps all of it.
    pub max_unlabeled: usize,
    /// Cap on the test set; 0 keeps all of it.
    pub max_test: usize,
    /// Preprocessing target; `None` keeps the native shape.
    pub image_shape: Option<Shape>,
    pub synthetic_unlabeled: usize,
    pub synthetic_test: usize,
    pub synthetic_positive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaeConfig {
    pub architecture: String,
    pub filters: Vec<usize>,
    pub hidden: Vec<usize>,
    /// 0 means no dense bottleneck (convolutional model only).
    pub latent_dim: usize,
    pub latent_activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// `None` disables augmentation (forest fit on the encodings alone).
    pub mode: Option<AugmentMode>,
    pub k: f64,
    /// `None`: `16 · |P_L|`, capped at `max_pairs`.
    pub pairs: Option<usize>,
    pub max_pairs: usize,
    pub samples_per_pair: usize,
    pub mixup_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub subsample: usize,
    /// `None`: computed from the pair budget.
    pub contamination: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig {
    pub strategy: SelectStrategy,
    pub rank_mode: RankMode,
    pub population: SelectionMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub input: ClassifierInput,
    pub architecture: String,
    pub filters: Vec<usize>,
    pub head: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub cae: CaeConfig,
    pub augment: AugmentConfig,
    pub forest: ForestConfig,
    pub select: SelectConfig,
    pub classifier: ClassifierConfig,
    pub run: RunConfig,
}

fn list<T: fmt::Display>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad_value(key, v)))
        .collect()
}

fn bad_value(key: &str, v: &str) -> Error {
    Error::Config(format!("invalid value `{v}` for `{key}`"))
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad_value(key, v))
}

fn auto_or<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn opt<T: fmt::Display>(v: &Option<T>, none: &str) -> String {
    v.as_ref().map_or_else(|| none.to_string(), |x| x.to_string())
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Relu => "relu",
        Activation::Sigmoid => "sigmoid",
    }
}

fn parse_activation(key: &str, v: &str) -> Result<Activation> {
    match v {
        "identity" => Ok(Activation::Identity),
        "relu" => Ok(Activation::Relu),
        "sigmoid" => Ok(Activation::Sigmoid),
        _ => Err(bad_value(key, v)),
    }
}

impl PipelineConfig {
    /// Defaults for a profile and data source.
    pub fn defaults(profile: Profile, source: DataSource) -> Self {
        let mut c = Self {
            data: DataConfig {
                source,
                path: PathBuf::from("data/fashion-mnist"),
                positive_classes: [0, 2, 4, 6].into_iter().collect(),
                n_labeled: 1000,
                max_unlabeled: 6000,
                max_test: 0,
                image_shape: None,
                synthetic_unlabeled: 1000,
                synthetic_test: 1000,
                synthetic_positive_fraction: 0.5,
            },
            cae: CaeConfig {
                architecture: "conv".into(),
                filters: vec![32, 16, 8],
                hidden: vec![],
                latent_dim: 64,
                latent_activation: Activation::Relu,
                epochs: 30,
                batch_size: 64,
                learning_rate: 1e-3,
                weight_decay: 1e-3,
            },
            augment: AugmentConfig {
                mode: Some(AugmentMode::Dens),
                k: 0.2,
                pairs: None,
                max_pairs: 16000,
                samples_per_pair: 11,
                mixup_alpha: 0.4,
            },
            forest: ForestConfig {
                trees: 200,
                subsample: 256,
                contamination: None,
            },
            select: SelectConfig {
                strategy: SelectStrategy::Rank,
                rank_mode: RankMode::ForestScore,
                population: SelectionMode::MatchPositives,
            },
            classifier: ClassifierConfig {
                input: ClassifierInput::Images,
                architecture: "conv".into(),
                filters: vec![16, 32],
                head: 128,
                hidden: vec![],
                epochs: 100,
                batch_size: 32,
                learning_rate: 0.01,
                momentum: 0.9,
                weight_decay: 1e-3,
                patience: 100,
                min_delta: 1e-4,
            },
            run: RunConfig {
                seed: 0,
                seeds: vec![0, 1, 2],
                out: PathBuf::from("runs/default"),
            },
        };
        match source {
            DataSource::Fmnist => {}
            DataSource::Cifar10 => {
                c.data.path = PathBuf::from("data/cifar-10-batches-bin");
                c.data.positive_classes = [0, 1, 8, 9].into_iter().collect();
            }
            DataSource::Blobs | DataSource::Rings => {
                c.data.path = PathBuf::new();
                c.data.positive_classes = [1].into_iter().collect();
                c.data.n_labeled = 100;
                c.data.max_unlabeled = 0;
                c.cae = CaeConfig {
                    architecture: "dense".into(),
                    filters: vec![],
                    hidden: vec![16],
                    latent_dim: 2,
                    latent_activation: Activation::Identity,
                    epochs: 100,
                    batch_size: 32,
                    learning_rate: 1e-2,
                    weight_decay: 1e-4,
                };
                c.classifier = ClassifierConfig {
                    architecture: "dense".into(),
                    filters: vec![],
                    head: 0,
                    hidden: vec![32, 32],
                    epochs: 200,
                    learning_rate: 0.05,
                    weight_decay: 1e-4,
                    patience: 10,
                    ..c.classifier
                };
            }
        }
        if profile == Profile::Paper {
            c.data.max_unlabeled = 0;
            c.forest.trees = 1000;
            c.augment.pairs = Some(16000);
            c.run.seeds = vec![0, 1, 2];
            c.classifier.epochs = 200;
            c.classifier.batch_size = 32;
            c.classifier.learning_rate = 1e-4;
            c.classifier.momentum = 0.0;
            c.classifier.weight_decay = 1e-3;
            if !source.is_synthetic() {
                c.data.image_shape = Some(Shape::new(32, 32, 3));
                c.cae.filters = vec![64, 32, 8];
                c.cae.latent_dim = 0;
                c.cae.epochs = 50;
                c.cae.batch_size = 64;
                c.cae.learning_rate = 1e-4;
                c.cae.weight_decay = 1e-3;
            }
        }
        c
    }

    /// Set one `section.key` to a textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "data.source" => self.data.source = v.parse()?,
            "data.path" => self.data.path = PathBuf::from(v),
            "data.positive_classes" => self.data.positive_classes = parse_list(key, v)?.into_iter().collect(),
            "data.n_labeled" => self.data.n_labeled = parse(key, v)?,
            "data.max_unlabeled" => self.data.max_unlabeled = parse(key, v)?,
            "data.max_test" => self.data.max_test = parse(key, v)?,
            "data.image_shape" => {
                self.data.image_shape = if v == "native" { None } else { Some(parse(key, v)?) }
            }
            "data.synthetic_unlabeled" => self.data.synthetic_unlabeled = parse(key, v)?,
            "data.synthetic_test" => self.data.synthetic_test = parse(key, v)?,
            "data.synthetic_positive_fraction" => self.data.synthetic_positive_fraction = parse(key, v)?,
            "cae.architecture" => self.cae.architecture = v.to_string(),
            "cae.filters" => self.cae.filters = parse_list(key, v)?,
            "cae.hidden" => self.cae.hidden = parse_list(key, v)?,
            "cae.latent_dim" => self.cae.latent_dim = parse(key, v)?,
            "cae.latent_activation" => self.cae.latent_activation = parse_activation(key, v)?,
            "cae.epochs" => self.cae.epochs = parse(key, v)?,
            "cae.batch_size" => self.cae.batch_size = parse(key, v)?,
            "cae.learning_rate" => self.cae.learning_rate = parse(key, v)?,
            "cae.weight_decay" => self.cae.weight_decay = parse(key, v)?,
            "augment.mode" => self.augment.mode = if v == "none" { None } else { Some(v.parse()?) },
            "augment.k" => self.augment.k = parse(key, v)?,
            "augment.pairs" => self.augment.pairs = auto_or(key, v)?,
            "augment.max_pairs" => self.augment.max_pairs = parse(key, v)?,
            "augment.samples_per_pair" => self.augment.samples_per_pair = parse(key, v)?,
            "augment.mixup_alpha" => self.augment.mixup_alpha = parse(key, v)?,
            "forest.trees" => self.forest.trees = parse(key, v)?,
            "forest.subsample" => self.forest.subsample = parse(key, v)?,
            "forest.contamination" => self.forest.contamination = auto_or(key, v)?,
            "select.strategy" => self.select.strategy = v.parse()?,
            "select.rank_mode" => self.select.rank_mode = v.parse()?,
            "select.population" => self.select.population = v.parse()?,
            "classifier.input" => {
                self.classifier.input = match v {
                    "images" => ClassifierInput::Images,
                    "encodings" => ClassifierInput::Encodings,
                    _ => return Err(bad_value(key, v)),
                }
            }
            "classifier.architecture" => self.classifier.architecture = v.to_string(),
            "classifier.filters" => self.classifier.filters = parse_list(key, v)?,
            "classifier.head" => self.classifier.head = parse(key, v)?,
            "classifier.hidden" => self.classifier.hidden = parse_list(key, v)?,
            "classifier.epochs" => self.classifier.epochs = parse(key, v)?,
            "classifier.batch_size" => self.classifier.batch_size = parse(key, v)?,
            "classifier.learning_rate" => self.classifier.learning_rate = parse(key, v)?,
            "classifier.momentum" => self.classifier.momentum = parse(key, v)?,
            "classifier.weight_decay" => self.classifier.weight_decay = parse(key, v)?,
            "classifier.patience" => self.classifier.patience = parse(key, v)?,
            "classifier.min_delta" => self.classifier.min_delta = parse(key, v)?,
            "run.seed" => self.run.seed = parse(key, v)?,
            "run.seeds" => self.run.seeds = parse_list(key, v)?,
            "run.out" => self.run.out = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs of a flat config text, in file order.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Profile defaults (chosen by `data.source` if the text sets it), then
    /// every key of `text` applied in order.
    pub fn from_flat(text: &str, profile: Profile) -> Result<Self> {
        let pairs = Self::parse_pairs(text)?;
        let source = match pairs.iter().rev().find(|(k, _)| k == "data.source") {
            Some((_, v)) => v.parse()?,
            None => DataSource::Fmnist,
        };
        let mut c = Self::defaults(profile, source);
        for (k, v) in &pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_flat(&text, profile)
    }

    /// Canonical text; `from_flat(to_flat())` reproduces the config.
    pub fn to_flat(&self) -> String {
        let d = &self.data;
        let a = &self.cae;
        let g = &self.augment;
        let f = &self.forest;
        let s = &self.select;
        let c = &self.classifier;
        let r = &self.run;
        let rows: Vec<(&str, String)> = vec![
            ("data.source", d.source.name().into()),
            ("data.path", d.path.display().to_string()),
            ("data.positive_classes", list(&d.positive_classes)),
            ("data.n_labeled", d.n_labeled.to_string()),
            ("data.max_unlabeled", d.max_unlabeled.to_string()),
            ("data.max_test", d.max_test.to_string()),
            ("data.image_shape", opt(&d.image_shape, "native")),
            ("data.synthetic_unlabeled", d.synthetic_unlabeled.to_string()),
            ("data.synthetic_test", d.synthetic_test.to_string()),
            ("data.synthetic_positive_fraction", d.synthetic_positive_fraction.to_string()),
            ("cae.architecture", a.architecture.clone()),
            ("cae.filters", list(&a.filters)),
            ("cae.hidden", list(&a.hidden)),
            ("cae.latent_dim", a.latent_dim.to_string()),
            ("cae.latent_activation", activation_name(a.latent_activation).into()),
            ("cae.epochs", a.epochs.to_string()),
            ("cae.batch_size", a.batch_size.to_string()),
            ("cae.learning_rate", a.learning_rate.to_string()),
            ("cae.weight_decay", a.weight_decay.to_string()),
            ("augment.mode", g.mode.map_or("none", |m| m.name()).into()),
            ("augment.k", g.k.to_string()),
            ("augment.pairs", opt(&g.pairs, "auto")),
            ("augment.max_pairs", g.max_pairs.to_string()),
            ("augment.samples_per_pair", g.samples_per_pair.to_string()),
            ("augment.mixup_alpha", g.mixup_alpha.to_string()),
            ("forest.trees", f.trees.to_string()),
            ("forest.subsample", f.subsample.to_string()),
            ("forest.contamination", opt(&f.contamination, "auto")),
            ("select.strategy", s.strategy.name().into()),
            ("select.rank_mode", s.rank_mode.name().into()),
            ("select.population", s.population.name().into()),
            (
                "classifier.input",
                match c.input {
                    ClassifierInput::Images => "images",
                    ClassifierInput::Encodings => "encodings",
                }
                .into(),
            ),
            ("classifier.architecture", c.architecture.clone()),
            ("classifier.filters", list(&c.filters)),
            ("classifier.head", c.head.to_string()),
            ("classifier.hidden", list(&c.hidden)),
            ("classifier.epochs", c.epochs.to_string()),
            ("classifier.batch_size", c.batch_size.to_string()),
            ("classifier.learning_rate", c.learning_rate.to_string()),
            ("classifier.momentum", c.momentum.to_string()),
            ("classifier.weight_decay", c.weight_decay.to_string()),
            ("classifier.patience", c.patience.to_string()),
            ("classifier.min_delta", c.min_delta.to_string()),
            ("run.seed", r.seed.to_string()),
            ("run.seeds", list(&r.seeds)),
            ("run.out", r.out.display().to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 over the canonical text, without the output directory.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_flat()
            .lines()
            .filter(|l| !l.starts_with("run.out "))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.data.n_labeled == 0 {
            return bad("data.n_labeled must be positive".into());
        }
        if self.data.positive_classes.is_empty() {
            return bad("data.positive_classes is empty".into());
        }
        if !matches!(self.cae.architecture.as_str(), "conv" | "dense") {
            return bad(format!("cae.architecture `{}` is not conv or dense", self.cae.architecture));
        }
        if !matches!(self.classifier.architecture.as_str(), "conv" | "dense") {
            return bad(format!("classifier.architecture `{}` is not conv or dense", self.classifier.architecture));
        }
        if !(self.augment.k > 0.0 && self.augment.k < 1.0) {
            return bad(format!("augment.k = {} is outside (0, 1)", self.augment.k));
        }
        if self.augment.samples_per_pair == 0 {
            return bad("augment.samples_per_pair must be positive".into());
        }
        if let Some(c) = self.forest.contamination {
            if !(0.0..1.0).contains(&c) {
                return bad(format!("forest.contamination = {c} is outside [0, 1)"));
            }
        }
        if self.cae.batch_size == 0 || self.classifier.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.run.seeds.is_empty() {
            return bad("run.seeds is empty".into());
        }
        Ok(())
    }

    pub fn autoencoder_spec(&self) -> AutoencoderSpec {
        let architecture = if self.cae.architecture == "dense" {
            Architecture::Dense {
                hidden: self.cae.hidden.clone(),
            }
        } else {
            Architecture::Conv {
                filters: self.cae.filters.clone(),
            }
        };
        AutoencoderSpec {
            architecture,
            latent_dim: (self.cae.latent_dim > 0).then_some(self.cae.latent_dim),
            latent_activation: self.cae.latent_activation,
        }
    }

    pub fn cae_training(&self) -> TrainingSpec {
        TrainingSpec {
            epochs: self.cae.epochs,
            batch_size: self.cae.batch_size,
            learning_rate: self.cae.learning_rate,
            weight_decay: self.cae.weight_decay,
        }
    }

    /// Pair budget for `n_labeled` encodings.
    pub fn pair_budget(&self, n_labeled: usize) -> usize {
        let available = n_labeled * n_labeled.saturating_sub(1) / 2;
        self.augment
            .pairs
            .unwrap_or_else(|| (16 * n_labeled).min(self.augment.max_pairs))
            .min(available)
    }

    pub fn classifier_arch(&self) -> ClassifierArch {
        if self.classifier.architecture == "dense" || self.classifier.input == ClassifierInput::Encodings {
            let hidden = if self.classifier.architecture == "dense" {
                self.classifier.hidden.clone()
            } else {
                vec![self.classifier.head]
            };
            ClassifierArch::Dense { hidden }
        } else {
            ClassifierArch::Conv {
                filters: self.classifier.filters.clone(),
                hidden: self.classifier.head,
            }
        }
    }

    pub fn classifier_training(&self) -> ClassifierTraining {
        let c = &self.classifier;
        ClassifierTraining {
            max_epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
            patience: c.patience,
            min_delta: c.min_delta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip_for_every_profile() {
        for p in [Profile::Desk, Profile::Paper] {
            for s in [DataSource::Fmnist, DataSource::Cifar10, DataSource::Blobs, DataSource::Rings] {
                let c = PipelineConfig::defaults(p, s);
                c.validate().unwrap();
                let back = PipelineConfig::from_flat(&c.to_flat(), p).unwrap();
                assert_eq!(back, c);
                assert_eq!(back.hash(), c.hash());
            }
        }
    }

    #[test]
    fn overrides_comments_and_errors() {
        let text = "# desk run\naugment.k = 0.3  # wider\n\nforest.contamination = 0.01\naugment.mode = none\n";
        let c = PipelineConfig::from_flat(text, Profile::Desk).unwrap();
        assert_eq!(c.augment.k, 0.3);
        assert_eq!(c.forest.contamination, Some(0.01));
        assert_eq!(c.augment.mode, None);
        assert!(PipelineConfig::from_flat("augment.q = 1", Profile::Desk).is_err());
        assert!(PipelineConfig::from_flat("augment.k = 1.5", Profile::Desk).is_err());
        assert!(PipelineConfig::from_flat("augment.k", Profile::Desk).is_err());
        assert!(PipelineConfig::from_flat("forest.trees = many", Profile::Desk).is_err());
    }

    #[test]
    fn source_picks_defaults_and_hash_ignores_output() {
        let c = PipelineConfig::from_flat("data.source = blobs", Profile::Desk).unwrap();
        assert_eq!(c.cae.architecture, "dense");
        assert_eq!(c.data.n_labeled, 100);
        let mut d = c.clone();
        d.run.out = PathBuf::from("elsewhere");
        assert_eq!(c.hash(), d.hash());
        d.run.seed = 9;
        assert_ne!(c.hash(), d.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn large_profile_settings() {
        let c = PipelineConfig::defaults(Profile::Paper, DataSource::Fmnist);
        assert_eq!(c.cae.filters, vec![64, 32, 8]);
        assert_eq!(c.data.image_shape, Some(Shape::new(32, 32, 3)));
        assert_eq!((c.cae.epochs, c.cae.batch_size), (50, 64));
        assert_eq!((c.cae.learning_rate, c.cae.weight_decay), (1e-4, 1e-3));
        assert_eq!((c.forest.trees, c.forest.subsample), (1000, 256));
        assert_eq!((c.augment.k, c.augment.samples_per_pair), (0.2, 11));
        assert_eq!(c.pair_budget(1000), 16000);
        assert_eq!((c.classifier.learning_rate, c.classifier.weight_decay, c.classifier.batch_size), (1e-4, 1e-3, 32));
        let desk = PipelineConfig::defaults(Profile::Desk, DataSource::Fmnist);
        assert_eq!(desk.pair_budget(1000), 16000);
        assert_eq!(desk.pair_budget(12000), 16000);
        assert_eq!(desk.pair_budget(3), 3);
    }
}
