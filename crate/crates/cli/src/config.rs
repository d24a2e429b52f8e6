use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use landscape_core::datasets::{
    self, gen_circles, gen_conflicting, gen_linearly_separable, gen_poly_separable, gen_xor,
};
use landscape_core::{
    Activation, Augmentation, Dataset, HingeLoss, NetworkSpec, OptimizerConfig, Thresholds,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
    pub model: ModelSection,
    pub seeds: SeedSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// xor, linearly_separable, circles, poly_separable, conflicting or file.
    pub generator: String,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub margin: Option<f64>,
    pub degree: Option<u32>,
    pub groups: Option<usize>,
    pub dups: Option<usize>,
    pub flip_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub widths: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub augmentation: String,
    #[serde(default = "default_hinge_power")]
    pub hinge_power: u32,
    pub lambdas: Option<Vec<f64>>,
}

fn default_hinge_power() -> u32 {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub count: usize,
    #[serde(default)]
    pub offset: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub init_scale: Option<f64>,
    pub perturb_radius: Option<f64>,
    pub max_perturbations: Option<usize>,
    pub curvature_tol: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub grad_tol: Option<f64>,
    pub hessian_tol: Option<f64>,
    pub inactivity_tol: Option<f64>,
    pub tensor_rel_tol: Option<f64>,
    pub max_order: Option<u32>,
    pub restarts: Option<usize>,
    pub probe_c: Option<f64>,
    pub probe_radius: Option<f64>,
    pub probe_dirs: Option<usize>,
    pub probe_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_baseline")]
    pub baseline: String,
}

fn default_baseline() -> String {
    "none".to_string()
}

/// One augmentation mode swept over the λ list.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    /// Value of the `arm` column.
    pub label: String,
    pub mode: Augmentation,
    pub lambdas: Vec<f64>,
}

/// A validated configuration with its dataset materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub out_dir: Option<PathBuf>,
    pub dataset: Dataset,
    pub dataset_source: String,
    pub spec: NetworkSpec,
    pub hinge: HingeLoss,
    /// Arm used by `run`.
    pub arm: Arm,
    /// Baseline arm used by `compare`, listed first in its output.
    pub baseline: Option<Arm>,
    pub seed_count: usize,
    pub seed_offset: u64,
    pub optimizer: OptimizerConfig,
    pub thresholds: Thresholds,
}

fn field(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.message().to_string();
            CliError::Config {
                path: if path == "." { "<root>".to_string() } else { path },
                message,
            }
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Validates every field and builds the dataset. Relative dataset paths
    /// are resolved against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment, CliError> {
        let (dataset, dataset_source) = self.dataset.build(base_dir)?;

        let activation: Activation = self
            .network
            .activation
            .parse()
            .map_err(|e: landscape_core::LabError| field("network.activation", e.to_string()))?;
        if self.network.widths.contains(&0) {
            return Err(field("network.widths", "every width must be at least 1"));
        }
        let spec = NetworkSpec::new(dataset.dim(), self.network.widths.clone(), activation)
            .map_err(|e| field("network", e.to_string()))?;

        let hinge = HingeLoss::new(self.model.hinge_power)
            .map_err(|e| field("model.hinge_power", e.to_string()))?;
        let mode: Augmentation = self
            .model
            .augmentation
            .parse()
            .map_err(|e: landscape_core::LabError| field("model.augmentation", e.to_string()))?;
        check_mode(mode, &spec, "model.augmentation")?;
        let lambdas = match (&self.model.lambdas, mode) {
            (None, Augmentation::None) => vec![0.0],
            (None, _) => return Err(field("model.lambdas", "required when augmented")),
            (Some(l), _) if l.is_empty() => {
                return Err(field("model.lambdas", "at least one value is required"))
            }
            (Some(l), _) => l.clone(),
        };
        for (i, &l) in lambdas.iter().enumerate() {
            let path = format!("model.lambdas[{i}]");
            if !l.is_finite() || l < 0.0 {
                return Err(field(&path, format!("must be finite and non-negative, got {l}")));
            }
            if mode != Augmentation::None && l <= 0.0 {
                return Err(field(&path, "must be positive when augmented"));
            }
        }
        let arm = Arm {
            label: mode.to_string(),
            mode,
            lambdas,
        };

        let baseline = match &self.compare {
            None => None,
            Some(c) => {
                let b: Augmentation = c.baseline.parse().map_err(|e: landscape_core::LabError| {
                    field("compare.baseline", e.to_string())
                })?;
                check_mode(b, &spec, "compare.baseline")?;
                if b != Augmentation::None && arm.lambdas.iter().any(|&l| l <= 0.0) {
                    return Err(field("compare.baseline", "augmented baseline needs positive lambdas"));
                }
                Some(Arm {
                    label: format!("baseline:{b}"),
                    mode: b,
                    lambdas: arm.lambdas.clone(),
                })
            }
        };

        if self.seeds.count == 0 {
            return Err(field("seeds.count", "seed count must be ≥ 1"));
        }

        let optimizer = self.optimizer.build(self.seeds.offset)?;
        let thresholds = self.thresholds.build()?;

        Ok(Experiment {
            name: self.name.clone().unwrap_or_else(|| "experiment".to_string()),
            out_dir: self.out_dir.clone(),
            dataset,
            dataset_source,
            spec,
            hinge,
            arm,
            baseline,
            seed_count: self.seeds.count,
            seed_offset: self.seeds.offset,
            optimizer,
            thresholds,
        })
    }
}

fn check_mode(mode: Augmentation, spec: &NetworkSpec, path: &str) -> Result<(), CliError> {
    if mode == Augmentation::PerLayerExp && spec.depth() == 0 {
        return Err(field(path, "per_layer_exp needs at least one hidden layer"));
    }
    Ok(())
}

impl DatasetSection {
    fn build(&self, base_dir: &Path) -> Result<(Dataset, String), CliError> {
        let g = self.generator.as_str();
        let allowed: &[&str] = match g {
            "xor" => &[],
            "linearly_separable" => &["n", "d", "margin", "seed"],
            "circles" => &["n", "seed"],
            "poly_separable" => &["n", "d", "degree", "seed"],
            "conflicting" => &["groups", "dups", "flip_fraction", "seed"],
            "file" => &["path"],
            other => return Err(field("dataset.generator", format!("unknown generator '{other}'"))),
        };
        let present = [
            ("n", self.n.is_some()),
            ("d", self.d.is_some()),
            ("margin", self.margin.is_some()),
            ("degree", self.degree.is_some()),
            ("groups", self.groups.is_some()),
            ("dups", self.dups.is_some()),
            ("flip_fraction", self.flip_fraction.is_some()),
            ("seed", self.seed.is_some()),
            ("path", self.path.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(field(
                    &format!("dataset.{name}"),
                    format!("not used by generator '{g}'"),
                ));
            }
        }
        fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
            v.ok_or_else(|| field(&format!("dataset.{name}"), "required by this generator"))
        }
        let seed = self.seed.unwrap_or(0);
        let wrap = |e: landscape_core::LabError| field("dataset", e.to_string());
        let ds = match g {
            "xor" => gen_xor(),
            "linearly_separable" => gen_linearly_separable(
                need(self.n, "n")?,
                need(self.d, "d")?,
                need(self.margin, "margin")?,
                seed,
            )
            .map_err(wrap)?,
            "circles" => gen_circles(need(self.n, "n")?, seed).map_err(wrap)?,
            "poly_separable" => gen_poly_separable(
                need(self.n, "n")?,
                need(self.d, "d")?,
                need(self.degree, "degree")?,
                seed,
            )
            .map_err(wrap)?,
            "conflicting" => gen_conflicting(
                need(self.groups, "groups")?,
                need(self.dups, "dups")?,
                need(self.flip_fraction, "flip_fraction")?,
                seed,
            )
            .map_err(wrap)?,
            _ => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| field("dataset.path", "required by this generator"))?;
                let full = base_dir.join(path);
                let ds = datasets::load(&full).map_err(|e| field("dataset.path", e.to_string()))?;
                return Ok((ds, format!("file {}", path.display())));
            }
        };
        let mut desc = g.to_string();
        for (name, v) in [
            ("n", self.n.map(|v| v.to_string())),
            ("d", self.d.map(|v| v.to_string())),
            ("margin", self.margin.map(|v| v.to_string())),
            ("degree", self.degree.map(|v| v.to_string())),
            ("groups", self.groups.map(|v| v.to_string())),
            ("dups", self.dups.map(|v| v.to_string())),
            ("flip_fraction", self.flip_fraction.map(|v| v.to_string())),
        ] {
            if let Some(v) = v {
                let _ = write!(desc, " {name}={v}");
            }
        }
        if g != "xor" {
            let _ = write!(desc, " seed={seed}");
        }
        Ok((ds, desc))
    }
}

fn positive(path: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field(path, format!("must be positive, got {v}")))
    }
}

impl OptimizerSection {
    fn build(&self, seed: u64) -> Result<OptimizerConfig, CliError> {
        let d = OptimizerConfig::default();
        let f = |name: &str, v: Option<f64>, default: f64| {
            positive(&format!("optimizer.{name}"), v.unwrap_or(default))
        };
        let max_iters = self.max_iters.unwrap_or(d.max_iters);
        if max_iters == 0 {
            return Err(field("optimizer.max_iters", "must be at least 1"));
        }
        Ok(OptimizerConfig {
            max_iters,
            grad_tol: f("grad_tol", self.grad_tol, d.grad_tol)?,
            init_scale: f("init_scale", self.init_scale, d.init_scale)?,
            perturb_radius: f("perturb_radius", self.perturb_radius, d.perturb_radius)?,
            max_perturbations: self.max_perturbations.unwrap_or(d.max_perturbations),
            curvature_tol: f("curvature_tol", self.curvature_tol, d.curvature_tol)?,
            initial_step: f("initial_step", self.initial_step, d.initial_step)?,
            max_step: f("max_step", self.max_step, d.max_step)?,
            seed,
        })
    }
}

impl ThresholdSection {
    fn build(&self) -> Result<Thresholds, CliError> {
        let d = Thresholds::default();
        let f = |name: &str, v: Option<f64>, default: f64| {
            positive(&format!("thresholds.{name}"), v.unwrap_or(default))
        };
        let probe_radius = f("probe_radius", self.probe_radius, d.probe_radius)?;
        if probe_radius >= 1.0 {
            return Err(field("thresholds.probe_radius", "must be below 1"));
        }
        let restarts = self.restarts.unwrap_or(d.restarts);
        if restarts == 0 {
            return Err(field("thresholds.restarts", "must be at least 1"));
        }
        let probe_dirs = self.probe_dirs.unwrap_or(d.probe_dirs);
        if probe_dirs == 0 {
            return Err(field("thresholds.probe_dirs", "must be at least 1"));
        }
        Ok(Thresholds {
            grad_tol: f("grad_tol", self.grad_tol, d.grad_tol)?,
            hessian_tol: f("hessian_tol", self.hessian_tol, d.hessian_tol)?,
            inactivity_tol: f("inactivity_tol", self.inactivity_tol, d.inactivity_tol)?,
            tensor_rel_tol: f("tensor_rel_tol", self.tensor_rel_tol, d.tensor_rel_tol)?,
            max_order: self.max_order.unwrap_or(d.max_order),
            restarts,
            probe_c: f("probe_c", self.probe_c, d.probe_c)?,
            probe_radius,
            probe_dirs,
            probe_seed: self.probe_seed.unwrap_or(d.probe_seed),
        })
    }
}

impl Experiment {
    pub fn from_str_in(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        ExperimentConfig::parse(text)?.resolve(base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_file(path)?.resolve(base)
    }

    /// Arms executed by `compare`, baseline first, or by `run`.
    pub fn arms(&self, compare: bool) -> Result<Vec<Arm>, CliError> {
        if !compare {
            return Ok(vec![self.arm.clone()]);
        }
        match &self.baseline {
            Some(b) => {
                let treatment = Arm {
                    label: format!("treatment:{}", self.arm.mode),
                    ..self.arm.clone()
                };
                Ok(vec![b.clone(), treatment])
            }
            None => Err(field("compare", "compare needs a [compare] section")),
        }
    }

    pub fn run_count(&self, compare: bool) -> Result<usize, CliError> {
        Ok(self
            .arms(compare)?
            .iter()
            .map(|a| a.lambdas.len() * self.seed_count)
            .sum())
    }

    /// Resolved settings as `key = value` pairs, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("name", self.name.clone());
        put("dataset.source", self.dataset_source.clone());
        put("dataset.n", self.dataset.len().to_string());
        put("dataset.d", self.dataset.dim().to_string());
        put("network.widths", format!("{:?}", self.spec.widths()));
        put("network.activation", self.spec.activation().to_string());
        put("model.augmentation", self.arm.mode.to_string());
        put("model.hinge_power", self.hinge.power().to_string());
        put("model.lambdas", list(&self.arm.lambdas));
        if let Some(b) = &self.baseline {
            put("compare.baseline", b.mode.to_string());
        }
        put("seeds.count", self.seed_count.to_string());
        put("seeds.offset", self.seed_offset.to_string());
        let o = &self.optimizer;
        put("optimizer.max_iters", o.max_iters.to_string());
        put("optimizer.grad_tol", num(o.grad_tol));
        put("optimizer.init_scale", num(o.init_scale));
        put("optimizer.perturb_radius", num(o.perturb_radius));
        put("optimizer.max_perturbations", o.max_perturbations.to_string());
        put("optimizer.curvature_tol", num(o.curvature_tol));
        put("optimizer.initial_step", num(o.initial_step));
        put("optimizer.max_step", num(o.max_step));
        let t = &self.thresholds;
        put("thresholds.grad_tol", num(t.grad_tol));
        put("thresholds.hessian_tol", num(t.hessian_tol));
        put("thresholds.inactivity_tol", num(t.inactivity_tol));
        put("thresholds.tensor_rel_tol", num(t.tensor_rel_tol));
        put("thresholds.max_order", t.max_order.to_string());
        put("thresholds.restarts", t.restarts.to_string());
        put("thresholds.probe_c", num(t.probe_c));
        put("thresholds.probe_radius", num(t.probe_radius));
        put("thresholds.probe_dirs", t.probe_dirs.to_string());
        put("thresholds.probe_seed", t.probe_seed.to_string());
        out
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(", "))
}
