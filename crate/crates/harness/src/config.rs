//! Experiment configuration: a flat INI file with one section per component.
//! Every default is materialized so that reports are self-describing.

use std::collections::BTreeMap;
use std::path::Path;

use ini::Ini;
use lepski_core::balancing::{BalancingConfig, ConstantMode};
use lepski_core::filters::{FilterFamily, IndexFunction};
use lepski_core::kernels::KernelSpec;
use lepski_core::synthetic::{NoiseModel, SourceConditionTarget, SpectralModel, DEFAULT_TRUNCATION};
use serde::Serialize;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Power-law Mercer model `μ_j = j^{−1/b}` on the cosine basis.
    Mercer { decay: f64, truncation: usize },
    Gaussian { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FilterSpec {
    Tikhonov,
    IteratedTikhonov { iterations: u32 },
    SpectralCutoff { qualification: f64 },
    Landweber { qualification: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian { level: f64 },
    BoundedUniform { level: f64 },
    Rademacher { level: f64 },
}

/// Confidence level per run, or `n^{−1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSpec {
    Fixed(f64),
    InverseSqrtN,
}

impl EtaSpec {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EtaSpec::Fixed(e) => e,
            EtaSpec::InverseSqrtN => 1.0 / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "c_user", rename_all = "snake_case")]
pub enum ConstantSpec {
    Theory,
    Scaled(f64),
}

impl ConstantSpec {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let s = s.trim();
        if s == "theory" {
            return Ok(ConstantSpec::Theory);
        }
        if let Some(c) = s.strip_prefix("scaled:") {
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad scaled constant in {s:?}")))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(HarnessError::Config(format!("scaled constant must be positive, got {c}")));
            }
            return Ok(ConstantSpec::Scaled(c));
        }
        Err(HarnessError::Config(format!(
            "constant mode must be `theory` or `scaled:<c>`, got {s:?}"
        )))
    }

    pub fn mode(&self) -> ConstantMode {
        match *self {
            ConstantSpec::Theory => ConstantMode::Theory,
            ConstantSpec::Scaled(c) => ConstantMode::Scaled(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalancingSpec {
    pub q: f64,
    pub eta: EtaSpec,
    pub constant_mode: ConstantSpec,
    pub grid_floor: f64,
    pub grid_dimension_factor: f64,
    /// Bernstein pair; defaults to the noise model's own constants.
    pub sigma: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsSpec {
    pub n: Vec<usize>,
    pub replicates: usize,
    pub eta: f64,
    pub truncation: usize,
    pub trials: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub replicates: usize,
    pub n: Vec<usize>,
    pub model: ModelSpec,
    /// Hölder exponent of the source condition `φ(t) = t^r`.
    pub r: f64,
    pub sign_seed: Option<u64>,
    pub filter: FilterSpec,
    pub noise: NoiseSpec,
    pub balancing: BalancingSpec,
    pub diagnostics: DiagnosticsSpec,
    pub out_dir: String,
    /// Whether every pairwise comparison is written out.
    pub traces: bool,
}

pub const DEFAULT_Q: f64 = 1.5;
pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_NOISE: f64 = 0.1;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let noise = NoiseSpec::Gaussian { level: DEFAULT_NOISE };
        let (sigma, m) = noise.model().bernstein_constants();
        Self {
            name: "experiment".into(),
            seed: 1,
            replicates: 100,
            n: vec![128, 256, 512, 1024, 2048, 4096],
            model: ModelSpec::Mercer {
                decay: 0.5,
                truncation: DEFAULT_TRUNCATION,
            },
            r: 0.5,
            sign_seed: None,
            filter: FilterSpec::Tikhonov,
            noise,
            balancing: BalancingSpec {
                q: DEFAULT_Q,
                eta: EtaSpec::Fixed(DEFAULT_ETA),
                constant_mode: ConstantSpec::Scaled(1.0),
                grid_floor: lepski_core::balancing::SCALED_GRID_FLOOR,
                grid_dimension_factor: lepski_core::balancing::SCALED_GRID_DIMENSION_FACTOR,
                sigma,
                m,
            },
            diagnostics: DiagnosticsSpec {
                n: vec![256, 1024],
                replicates: 400,
                eta: 0.05,
                truncation: 64,
                trials: 500,
                dim: 12,
            },
            out_dir: "out".into(),
            traces: true,
        }
    }
}

impl NoiseSpec {
    pub fn model(&self) -> NoiseModel {
        match *self {
            NoiseSpec::Gaussian { level } => NoiseModel::Gaussian { std: level },
            NoiseSpec::BoundedUniform { level } => NoiseModel::BoundedUniform { half_width: level },
            NoiseSpec::Rademacher { level } => NoiseModel::Rademacher { scale: level },
        }
    }
}

/// Key/value view of one INI section that tracks which keys were consumed.
struct Section<'a> {
    name: &'static str,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Section<'a> {
    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.values.remove(key).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                HarnessError::Config(format!("[{}] {key} = {v:?} is not a valid value", self.name))
            }),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<usize>>, HarnessError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        HarnessError::Config(format!("[{}] {key}: {s:?} is not a sample size", self.name))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<(), HarnessError> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(k) => Err(HarnessError::Config(format!("unknown key [{}] {k}", self.name))),
        }
    }
}

const SECTIONS: [&str; 8] = [
    "experiment",
    "model",
    "target",
    "filter",
    "noise",
    "balancing",
    "diagnostics",
    "output",
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self, HarnessError> {
        let ini = Ini::load_from_str(text).map_err(|e| HarnessError::Config(format!("INI syntax: {e}")))?;
        for (name, props) in ini.iter() {
            match name {
                None if props.is_empty() => {}
                None => return Err(HarnessError::Config("keys outside any section".into())),
                Some(s) if !SECTIONS.contains(&s) => {
                    return Err(HarnessError::Config(format!("unknown section [{s}]")))
                }
                _ => {}
            }
        }
        let section = |name: &'static str| Section {
            name,
            values: ini
                .section(Some(name))
                .map(|p| p.iter().collect())
                .unwrap_or_default(),
        };
        let mut cfg = ExperimentConfig::default();

        let mut s = section("experiment");
        if let Some(v) = s.take("name") {
            cfg.name = v.to_string();
        }
        cfg.seed = s.parse("seed")?.unwrap_or(cfg.seed);
        cfg.replicates = s.parse("replicates")?.unwrap_or(cfg.replicates);
        cfg.n = s.list("n")?.unwrap_or(cfg.n);
        s.finish()?;

        let mut s = section("model");
        let kernel = s.take("kernel").unwrap_or("mercer");
        cfg.model = match kernel {
            "mercer" => ModelSpec::Mercer {
                decay: s.parse("decay")?.unwrap_or(0.5),
                truncation: s.parse("truncation")?.unwrap_or(DEFAULT_TRUNCATION),
            },
            "gaussian" => ModelSpec::Gaussian {
                width: s
                    .parse("width")?
                    .ok_or_else(|| HarnessError::Config("[model] gaussian kernel needs width".into()))?,
            },
            other => return Err(HarnessError::Config(format!("unknown kernel {other:?}"))),
        };
        s.finish()?;

        let mut s = section("target");
        cfg.r = s.parse("r")?.unwrap_or(cfg.r);
        cfg.sign_seed = s.parse("sign_seed")?;
        s.finish()?;

        let mut s = section("filter");
        let family = s.take("family").unwrap_or("tikhonov");
        cfg.filter = match family {
            "tikhonov" => FilterSpec::Tikhonov,
            "iterated_tikhonov" => FilterSpec::IteratedTikhonov {
                iterations: s.parse("iterations")?.unwrap_or(2),
            },
            "spectral_cutoff" => FilterSpec::SpectralCutoff {
                qualification: s.parse("qualification")?.unwrap_or(4.0),
            },
            "landweber" => FilterSpec::Landweber {
                qualification: s.parse("qualification")?.unwrap_or(4.0),
            },
            other => return Err(HarnessError::Config(format!("unknown filter family {other:?}"))),
        };
        s.finish()?;

        let mut s = section("noise");
        let level = s.parse("level")?.unwrap_or(DEFAULT_NOISE);
        cfg.noise = match s.take("distribution").unwrap_or("gaussian") {
            "gaussian" => NoiseSpec::Gaussian { level },
            "bounded_uniform" => NoiseSpec::BoundedUniform { level },
            "rademacher" => NoiseSpec::Rademacher { level },
            other => return Err(HarnessError::Config(format!("unknown noise distribution {other:?}"))),
        };
        let (sigma, m) = cfg.noise.model().bernstein_constants();
        let sigma_override: Option<f64> = s.parse("sigma")?;
        let m_override: Option<f64> = s.parse("m")?;
        s.finish()?;

        let mut s = section("balancing");
        let b = &mut cfg.balancing;
        b.q = s.parse("q")?.unwrap_or(b.q);
        if let Some(e) = s.take("eta") {
            b.eta = if e == "n^-1/2" {
                EtaSpec::InverseSqrtN
            } else {
                EtaSpec::Fixed(e.parse().map_err(|_| {
                    HarnessError::Config(format!("[balancing] eta must be a number or n^-1/2, got {e:?}"))
                })?)
            };
        }
        if let Some(c) = s.take("constant_mode") {
            b.constant_mode = ConstantSpec::parse(c)?;
        }
        b.grid_floor = s.parse("grid_floor")?.unwrap_or(b.grid_floor);
        b.grid_dimension_factor = s.parse("grid_dimension_factor")?.unwrap_or(b.grid_dimension_factor);
        b.sigma = sigma_override.unwrap_or(sigma);
        b.m = m_override.unwrap_or(m);
        s.finish()?;

        let mut s = section("diagnostics");
        let d = &mut cfg.diagnostics;
        d.n = s.list("n")?.unwrap_or(std::mem::take(&mut d.n));
        d.replicates = s.parse("replicates")?.unwrap_or(d.replicates);
        d.eta = s.parse("eta")?.unwrap_or(d.eta);
        d.truncation = s.parse("truncation")?.unwrap_or(d.truncation);
        d.trials = s.parse("trials")?.unwrap_or(d.trials);
        d.dim = s.parse("dim")?.unwrap_or(d.dim);
        s.finish()?;

        let mut s = section("output");
        if let Some(v) = s.take("dir") {
            cfg.out_dir = v.to_string();
        }
        cfg.traces = s.parse("traces")?.unwrap_or(cfg.traces);
        s.finish()?;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n.is_empty() {
            return bad("sample size list is empty".into());
        }
        if self.n.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("sample sizes must be strictly increasing, got {:?}", self.n));
        }
        if self.n[0] < 4 {
            return bad(format!("sample sizes must be at least 4, got {}", self.n[0]));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        match self.model {
            ModelSpec::Mercer { decay, truncation } => {
                if !(decay > 0.0 && decay < 1.0) {
                    return bad(format!("decay b must lie in (0,1), got {decay}"));
                }
                if truncation == 0 || truncation > 4096 {
                    return bad(format!("truncation must lie in 1..=4096, got {truncation}"));
                }
            }
            ModelSpec::Gaussian { width } => {
                if !(width > 0.0) {
                    return bad(format!("Gaussian width must be positive, got {width}"));
                }
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("source exponent r must be positive, got {}", self.r));
        }
        let b = &self.balancing;
        if !(b.q > 1.0 && b.q.is_finite()) {
            return bad(format!("q must exceed 1, got {}", b.q));
        }
        if let EtaSpec::Fixed(e) = b.eta {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("η must lie in (0,1), got {e}"));
            }
        }
        if !(b.sigma > 0.0 && b.m > 0.0) {
            return bad(format!(
                "Bernstein constants must be positive, got σ={}, M={}; with zero noise set [noise] sigma and m as a floor",
                b.sigma, b.m
            ));
        }
        if !(b.grid_floor > 0.0 && b.grid_dimension_factor >= 0.0) {
            return bad("grid constraints must be nonnegative with a positive floor".into());
        }
        let level = match self.noise {
            NoiseSpec::Gaussian { level }
            | NoiseSpec::BoundedUniform { level }
            | NoiseSpec::Rademacher { level } => level,
        };
        if !(level >= 0.0 && level.is_finite()) {
            return bad(format!("noise level must be nonnegative, got {level}"));
        }
        match self.filter {
            FilterSpec::IteratedTikhonov { iterations: 0 } => {
                return bad("iterated Tikhonov needs at least one iteration".into())
            }
            FilterSpec::SpectralCutoff { qualification } | FilterSpec::Landweber { qualification }
                if !(qualification > 0.0) =>
            {
                return bad(format!("qualification exponent must be positive, got {qualification}"))
            }
            _ => {}
        }
        let d = &self.diagnostics;
        if d.dim == 0 || d.dim > lepski_core::diagnostics::MAX_CHECK_DIMENSION {
            return bad(format!("diagnostic dimension must lie in 1..=20, got {}", d.dim));
        }
        if !(d.eta > 0.0 && d.eta < 1.0) {
            return bad(format!("diagnostic η must lie in (0,1), got {}", d.eta));
        }
        if d.truncation == 0 || d.truncation > 512 {
            return bad(format!("diagnostic truncation must lie in 1..=512, got {}", d.truncation));
        }
        if d.n.iter().any(|&n| n == 0 || n > 4096) {
            return bad(format!("diagnostic sample sizes must lie in 1..=4096, got {:?}", d.n));
        }
        Ok(())
    }

    /// The Mercer model; experiments with exact errors need one.
    pub fn spectral_model(&self) -> Result<SpectralModel, HarnessError> {
        match self.model {
            ModelSpec::Mercer { decay, truncation } => Ok(SpectralModel::power_law(decay, truncation)?),
            ModelSpec::Gaussian { .. } => Err(HarnessError::Config(
                "exact population errors need a Mercer model; the Gaussian kernel has no explicit eigensystem"
                    .into(),
            )),
        }
    }

    pub fn kernel(&self) -> Result<KernelSpec, HarnessError> {
        Ok(match self.model {
            ModelSpec::Mercer { .. } => KernelSpec::mercer(self.spectral_model()?),
            ModelSpec::Gaussian { width } => KernelSpec::gaussian(width)?,
        })
    }

    pub fn target(&self, model: &SpectralModel) -> Result<SourceConditionTarget, HarnessError> {
        Ok(SourceConditionTarget::default_source(
            model,
            IndexFunction::power(self.r),
            self.sign_seed,
        )?)
    }

    pub fn filter_family(&self, kappa2: f64) -> Result<FilterFamily, HarnessError> {
        Ok(match self.filter {
            FilterSpec::Tikhonov => FilterFamily::tikhonov(kappa2),
            FilterSpec::IteratedTikhonov { iterations } => FilterFamily::iterated_tikhonov(kappa2, iterations)?,
            FilterSpec::SpectralCutoff { qualification } => FilterFamily::spectral_cutoff(kappa2, qualification)?,
            FilterSpec::Landweber { qualification } => FilterFamily::landweber(kappa2, qualification)?,
        })
    }

    pub fn balancing_config(&self, filter: &FilterFamily, kappa2: f64, n: usize) -> BalancingConfig {
        let b = &self.balancing;
        let mut cfg = BalancingConfig::new(b.q, b.eta.at(n), b.sigma, b.m, filter, b.constant_mode.mode(), kappa2);
        cfg.grid_floor = b.grid_floor;
        cfg.grid_dimension_factor = b.grid_dimension_factor;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_materialized() {
        let cfg = ExperimentConfig::from_ini_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.balancing.sigma, 0.1);
        assert_eq!(cfg.balancing.constant_mode, ConstantSpec::Scaled(1.0));
    }

    #[test]
    fn full_file_round_trip() {
        let text = "\
[experiment]
name = demo
seed = 9
replicates = 3
n = 64, 128

[model]
kernel = mercer
decay = 0.25
truncation = 32

[target]
r = 1

[filter]
family = landweber
qualification = 2

[noise]
distribution = bounded_uniform
level = 0.3

[balancing]
q = 2
eta = n^-1/2
constant_mode = theory
";
        let cfg = ExperimentConfig::from_ini_str(text).unwrap();
        assert_eq!(cfg.n, vec![64, 128]);
        assert_eq!(cfg.model, ModelSpec::Mercer { decay: 0.25, truncation: 32 });
        assert_eq!(cfg.filter, FilterSpec::Landweber { qualification: 2.0 });
        assert_eq!(cfg.balancing.eta, EtaSpec::InverseSqrtN);
        assert_eq!(cfg.balancing.constant_mode, ConstantSpec::Theory);
        assert!((cfg.balancing.sigma - 0.3 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(cfg.balancing.eta.at(100), 0.1);
    }

    #[test]
    fn invalid_files_are_rejected() {
        for text in [
            "[experiment]\nn = 256, 128\n",
            "[experiment]\nreplicates = 0\n",
            "[model]\ndecay = 1.5\n",
            "[balancing]\nq = 1\n",
            "[balancing]\nconstant_mode = loose\n",
            "[balancing]\nspeed = 3\n",
            "[extra]\na = 1\n",
            "[noise]\nlevel = abc\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_ini_str(text), Err(HarnessError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn constant_mode_parsing() {
        assert_eq!(ConstantSpec::parse("scaled:2.5").unwrap(), ConstantSpec::Scaled(2.5));
        assert_eq!(ConstantSpec::parse("theory").unwrap(), ConstantSpec::Theory);
        assert!(ConstantSpec::parse("scaled:-1").is_err());
    }
}
