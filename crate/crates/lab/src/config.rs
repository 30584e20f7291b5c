//! Declarative experiment files.
//!
//! A config is TOML. Parsing rejects unknown keys, and [`ExperimentConfig::parse`]
//! is the single validation path shared by `lab run` and `lab validate`.

use std::fmt;
use std::ops::Range;

use oampi_core::improve::DEFAULT_WEIGHT_CLIP;
use oampi_core::oampi::{DEFAULT_ITERATIVE_K, DEFAULT_MULTI_STEP_K};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub kind: ExperimentKind,
    /// A list of seeds or an inclusive range such as `"0..19"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<SeedSpec>,
    pub environment: EnvironmentConfig,
    pub behavior: BehaviorConfig,
    pub dataset: DatasetConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// One dataset per seed; every variant and hyperparameter runs on it.
    #[default]
    Trajectory,
    /// Mixed datasets over a probability grid, tuned per variant.
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub width: usize,
    pub height: usize,
    pub discount: f64,
    #[serde(default = "defaults::good_reward")]
    pub good_reward: f64,
    #[serde(default = "defaults::noisy_mean")]
    pub noisy_mean: f64,
    #[serde(default = "defaults::noisy_std")]
    pub noisy_std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePolicy {
    Optimal,
    Suboptimal,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuboptimalKind {
    #[default]
    HalfDownHalfLeft,
    AllDown,
    AllLeft,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalTies {
    /// Split mass evenly over tied optimal actions.
    #[default]
    Uniform,
    LowestIndex,
}

/// `beta = weight * base + (1 - weight) * uniform`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorConfig {
    pub base: BasePolicy,
    pub weight: f64,
    #[serde(default)]
    pub suboptimal_policy: SuboptimalKind,
    #[serde(default)]
    pub optimal_ties: OptimalTies,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_trajectories: usize,
    pub horizon: usize,
    /// Write each seed's training data as `dataset.csv`.
    #[serde(default = "defaults::yes")]
    pub export: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    OneStep,
    MultiStep,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorName {
    BehaviorClone,
    EasyBcq,
    ReverseKl,
    ExpWeighted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Oracle,
    Empirical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcqModeName {
    #[default]
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcqAnchorName {
    #[default]
    Previous,
    Behavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub variants: Vec<VariantName>,
    pub operator: OperatorName,
    /// Values of the operator's hyperparameter (alpha, m or tau). Empty for
    /// behavior cloning.
    #[serde(default)]
    pub hyperparams: Vec<f64>,
    #[serde(default = "defaults::multi_step_k")]
    pub k_iterations: usize,
    #[serde(default = "defaults::iterative_k")]
    pub iterative_k: usize,
    /// Backups per evaluation for one-step and multi-step; 0 runs to convergence.
    #[serde(default)]
    pub eval_sweeps: usize,
    #[serde(default)]
    pub transition_source: Source,
    #[serde(default)]
    pub behavior_source: Source,
    #[serde(default = "defaults::step_size")]
    pub step_size: f64,
    #[serde(default)]
    pub bcq_mode: BcqModeName,
    #[serde(default)]
    pub bcq_anchor: BcqAnchorName,
    #[serde(default = "defaults::weight_clip")]
    pub weight_clip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    /// Probabilities of drawing a trajectory from the primary dataset.
    pub p_grid: Vec<f64>,
    /// Trajectories per source dataset and per mixture.
    pub size: usize,
    /// Behavior of the secondary source dataset.
    #[serde(default = "defaults::uniform")]
    pub secondary: BasePolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    #[default]
    Dataset,
    Visitation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default)]
    pub weights: WeightName,
    /// Emit `q_<k>`, `qtilde_<k>` and `policy_<k>` tables per seed.
    #[serde(default)]
    pub tables: bool,
    /// Diagnose every `every`-th iterate (and always the last).
    #[serde(default = "defaults::every")]
    pub every: usize,
    #[serde(default)]
    pub lemma_checks: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            weights: WeightName::Dataset,
            tables: false,
            every: defaults::every(),
            lemma_checks: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

mod defaults {
    use super::*;

    pub fn good_reward() -> f64 {
        1.0
    }
    pub fn noisy_mean() -> f64 {
        -0.5
    }
    pub fn noisy_std() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn multi_step_k() -> usize {
        DEFAULT_MULTI_STEP_K
    }
    pub fn iterative_k() -> usize {
        DEFAULT_ITERATIVE_K
    }
    pub fn step_size() -> f64 {
        1.0
    }
    pub fn weight_clip() -> f64 {
        DEFAULT_WEIGHT_CLIP
    }
    pub fn uniform() -> BasePolicy {
        BasePolicy::Uniform
    }
    pub fn every() -> usize {
        1
    }
}

/// One problem found in a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    /// Dotted key path, when the issue belongs to a key.
    pub key: Option<String>,
    /// 1-based line of the offending key, when it appears in the file.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: ")?,
            None => write!(f, "config: ")?,
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

/// Every issue found, in file order where lines are known.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn single(key: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                key: key.map(str::to_owned),
                line,
                message: message.into(),
            }],
        }
    }
}

/// A validated config together with the warnings raised while checking it.
#[derive(Clone, Debug, PartialEq)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `key` inside table `section` ("" for the root table).
fn locate(source: &str, path: &str) -> Option<usize> {
    let (section, key) = match path.rsplit_once('.') {
        Some((section, key)) => (section, key),
        None => ("", path),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim().to_owned();
            if current == path {
                section_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

/// Parses an inclusive range `a..b` (or `a..=b`) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range `{text}`"))?;
        if hi < lo {
            return Err(format!("seed range `{text}` is empty"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed `{}`", s.trim())))
            .collect::<Result<_, _>>()?
    };
    check_seed_list(&seeds)?;
    Ok(seeds)
}

fn check_seed_list(seeds: &[u64]) -> Result<(), String> {
    if seeds.is_empty() {
        return Err("seed list is empty".into());
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err("seed list contains duplicates".into());
    }
    Ok(())
}

struct Checker<'a> {
    source: &'a str,
    issues: Vec<ConfigIssue>,
}

impl Checker<'_> {
    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: Some(key.to_owned()),
            line: locate(self.source, key),
            message: message.into(),
        });
    }

    fn require(&mut self, ok: bool, key: &str, message: &str) {
        if !ok {
            self.fail(key, message);
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates `source`; `seed_override` replaces the file's seeds.
    pub fn parse(source: &str, seed_override: Option<&[u64]>) -> Result<Validated, ConfigError> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|span: Range<usize>| line_of_offset(source, span.start));
            ConfigError::single(None, line, e.message().trim().to_owned())
        })?;
        config.validate(source, seed_override)
    }

    /// Semantic checks; `source` is used only to attach line numbers.
    pub fn validate(
        self,
        source: &str,
        seed_override: Option<&[u64]>,
    ) -> Result<Validated, ConfigError> {
        let mut c = Checker {
            source,
            issues: Vec::new(),
        };
        let mut warnings = Vec::new();

        let seeds = match (seed_override, &self.seeds) {
            (Some(seeds), _) => match check_seed_list(seeds) {
                Ok(()) => seeds.to_vec(),
                Err(e) => {
                    c.fail("seeds", e);
                    Vec::new()
                }
            },
            (None, Some(SeedSpec::List(list))) => match check_seed_list(list) {
                Ok(()) => list.clone(),
                Err(e) => {
                    c.fail("seeds", e);
                    Vec::new()
                }
            },
            (None, Some(SeedSpec::Range(text))) => parse_seeds(text).unwrap_or_else(|e| {
                c.fail("seeds", e);
                Vec::new()
            }),
            (None, None) => {
                warnings.push("no seed list given; defaulting to seed 0".to_owned());
                vec![0]
            }
        };

        c.require(!self.name.trim().is_empty(), "name", "must not be empty");
        c.require(
            self.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "_-.".contains(ch)),
            "name",
            "may contain only ASCII letters, digits, `_`, `-` and `.`",
        );

        let env = &self.environment;
        c.require(env.width >= 1, "environment.width", "must be at least 1");
        c.require(env.height >= 1, "environment.height", "must be at least 1");
        c.require(
            (0.0..1.0).contains(&env.discount),
            "environment.discount",
            "must lie in [0, 1)",
        );
        c.require(env.good_reward.is_finite(), "environment.good_reward", "must be finite");
        c.require(env.noisy_mean.is_finite(), "environment.noisy_mean", "must be finite");
        c.require(
            env.noisy_std.is_finite() && env.noisy_std >= 0.0,
            "environment.noisy_std",
            "must be finite and nonnegative",
        );

        c.require(
            (0.0..=1.0).contains(&self.behavior.weight),
            "behavior.weight",
            "must lie in [0, 1]",
        );

        c.require(self.dataset.n_trajectories >= 1, "dataset.n_trajectories", "must be at least 1");
        c.require(self.dataset.horizon >= 1, "dataset.horizon", "must be at least 1");

        let alg = &self.algorithm;
        if alg.variants.is_empty() {
            c.fail("algorithm.variants", "must list at least one variant");
        }
        let mut seen = alg.variants.clone();
        seen.sort_by_key(|v| *v as u8);
        if seen.windows(2).any(|w| w[0] == w[1]) {
            c.fail("algorithm.variants", "contains duplicates");
        }
        match alg.operator {
            OperatorName::BehaviorClone => c.require(
                alg.hyperparams.is_empty(),
                "algorithm.hyperparams",
                "behavior cloning takes no hyperparameter",
            ),
            op => {
                if alg.hyperparams.is_empty() {
                    c.fail("algorithm.hyperparams", "must list at least one value");
                }
                for &h in &alg.hyperparams {
                    let ok = match op {
                        OperatorName::EasyBcq => h >= 1.0 && h.fract() == 0.0 && h <= 1e9,
                        _ => h.is_finite() && h > 0.0,
                    };
                    if !ok {
                        let what = match op {
                            OperatorName::EasyBcq => "sample counts must be positive integers",
                            _ => "values must be positive and finite",
                        };
                        c.fail("algorithm.hyperparams", format!("{what}; got {h}"));
                    }
                }
            }
        }
        c.require(alg.k_iterations >= 1, "algorithm.k_iterations", "must be at least 1");
        c.require(alg.iterative_k >= 1, "algorithm.iterative_k", "must be at least 1");
        c.require(
            alg.step_size > 0.0 && alg.step_size <= 1.0,
            "algorithm.step_size",
            "must lie in (0, 1]",
        );
        c.require(
            alg.weight_clip.is_finite() && alg.weight_clip > 0.0,
            "algorithm.weight_clip",
            "must be positive and finite",
        );

        match (self.kind, &self.mixture) {
            (ExperimentKind::Mixture, None) => {
                c.fail("kind", "a mixture experiment needs a [mixture] table")
            }
            (ExperimentKind::Trajectory, Some(_)) => {
                c.fail("mixture", "only mixture experiments take a [mixture] table")
            }
            (ExperimentKind::Mixture, Some(m)) => {
                if m.p_grid.is_empty() {
                    c.fail("mixture.p_grid", "must list at least one probability");
                }
                if m.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    c.fail("mixture.p_grid", "probabilities must lie in [0, 1]");
                }
                if m.p_grid.windows(2).any(|w| w[0] >= w[1]) {
                    c.fail("mixture.p_grid", "must be strictly increasing");
                }
                c.require(m.size >= 1, "mixture.size", "must be at least 1");
                if !alg.variants.contains(&VariantName::OneStep)
                    || !alg.variants.contains(&VariantName::Iterative)
                {
                    c.fail(
                        "algorithm.variants",
                        "a mixture experiment compares one_step with iterative; list both",
                    );
                }
            }
            (ExperimentKind::Trajectory, None) => {}
        }

        c.require(self.diagnostics.every >= 1, "diagnostics.every", "must be at least 1");

        if c.issues.is_empty() {
            Ok(Validated {
                config: self,
                seeds,
                warnings,
            })
        } else {
            c.issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
            Err(ConfigError { issues: c.issues })
        }
    }

    /// Hash of everything that determines output content; seeds and the
    /// output directory are excluded because each file records its seed.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.seeds = None;
        canonical.output = OutputConfig::default();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
