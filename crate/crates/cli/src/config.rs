use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emlab_core::capacity::BoundarySample;
use emlab_core::geometry::{DomainSpec, Point};
use emlab_core::growth::GrowthFunction;
use emlab_core::norms::SamplingPlan;
use emlab_core::operator::CoefficientField;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Wellposed,
    Illposed,
    NormEquivalence,
    CdcSweep,
    MeasureDecay,
    GrowthSuite,
    CampanatoEquivalence,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::Wellposed,
        ExperimentId::Illposed,
        ExperimentId::NormEquivalence,
        ExperimentId::CdcSweep,
        ExperimentId::MeasureDecay,
        ExperimentId::GrowthSuite,
        ExperimentId::CampanatoEquivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Wellposed => "wellposed",
            ExperimentId::Illposed => "illposed",
            ExperimentId::NormEquivalence => "norm_equivalence",
            ExperimentId::CdcSweep => "cdc_sweep",
            ExperimentId::MeasureDecay => "measure_decay",
            ExperimentId::GrowthSuite => "growth_suite",
            ExperimentId::CampanatoEquivalence => "campanato_equivalence",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            ExperimentId::Wellposed => "Dirichlet problem with Hölder data: trace recovery and Hölder bounds",
            ExperimentId::Illposed => "exterior domain: two anchored solutions and the mass-deficit identity",
            ExperimentId::NormEquivalence => "Carleson/Hölder and Campanato/Hölder ratios over a data suite",
            ExperimentId::CdcSweep => "capacity density ratios over boundary points and scales",
            ExperimentId::MeasureDecay => "elliptic measure decay near a boundary point or at infinity",
            ExperimentId::GrowthSuite => "growth-function inequalities on a logarithmic grid",
            ExperimentId::CampanatoEquivalence => "Morrey-Campanato versus Hölder norms of boundary data",
        }
    }

    /// Tolerance keys and their defaults.
    pub fn default_tolerances(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ExperimentId::Wellposed => &[("trace", 1e-8), ("lower_bound_slack", -1e-6), ("ratio_max", 50.0)],
            ExperimentId::Illposed => &[("identity", 1e-9), ("separation_factor", 0.4)],
            ExperimentId::NormEquivalence => &[("ratio_min", 1.0 / 50.0), ("ratio_max", 50.0)],
            ExperimentId::CdcSweep => &[("inf_ratio_min", 0.1)],
            ExperimentId::MeasureDecay => {
                &[("exponent_min", 0.8), ("exponent_max", 1.2), ("far_exponent", -1.0), ("far_exponent_tol", 0.1)]
            }
            ExperimentId::GrowthSuite => &[("slack_min", -1e-9)],
            ExperimentId::CampanatoEquivalence => &[("ratio_min", 1.0 / 20.0), ("ratio_max", 20.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Keys of `params` that the experiment reads.
    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            ExperimentId::Wellposed => &["alpha", "anchor", "plan", "trace_poles"],
            ExperimentId::Illposed => &["alpha", "data", "x0", "anchor", "probe_radius"],
            ExperimentId::NormEquivalence => &["alpha", "plan"],
            ExperimentId::CdcSweep => &["sample"],
            ExperimentId::MeasureDecay => &["base", "pole_radii", "radius"],
            ExperimentId::GrowthSuite => &["alpha", "beta", "grid", "pair_points"],
            ExperimentId::CampanatoEquivalence => &["alpha", "p", "plan"],
        }
    }

    pub fn uses_domain(self) -> bool {
        self != ExperimentId::GrowthSuite
    }

    pub fn default_domain(self) -> Option<DomainSpec> {
        match self {
            ExperimentId::Wellposed | ExperimentId::MeasureDecay => Some(DomainSpec::unit_cube(1.0 / 32.0)),
            ExperimentId::Illposed => Some(DomainSpec::exterior_of_ball(1.0, 8.0, 1.0 / 6.0)),
            ExperimentId::NormEquivalence | ExperimentId::CdcSweep | ExperimentId::CampanatoEquivalence => {
                Some(DomainSpec::unit_cube(1.0 / 16.0))
            }
            ExperimentId::GrowthSuite => None,
        }
    }

    pub fn default_phi(self) -> GrowthFunction {
        let a = match self {
            ExperimentId::Wellposed | ExperimentId::Illposed => 0.4,
            ExperimentId::GrowthSuite => 0.3,
            _ => 0.5,
        };
        GrowthFunction::Power { a }
    }

    pub fn default_scales(self) -> Vec<f64> {
        match self {
            ExperimentId::CdcSweep => vec![0.5, 1.0],
            ExperimentId::MeasureDecay => vec![0.25, 0.125],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| CliError::UnknownExperiment(s.to_string()))
    }
}

/// Boundary datum used by the solution experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// `|y - y0|^alpha`.
    #[default]
    Power,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Experiment-specific parameters; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataKind>,
    /// Base point `y0` of the power datum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pole_radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<BoundarySample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<SamplingPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_poles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_points: Option<usize>,
}

impl Params {
    fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! probe {
            ($($f:ident),*) => { $( if self.$f.is_some() { keys.push(stringify!($f)); } )* };
        }
        probe!(alpha, beta, p, data, anchor, x0, base, probe_radius, pole_radii, radius, sample, plan, trace_poles, grid, pair_points);
        keys
    }
}

/// Configuration file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient: Option<CoefficientField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<GrowthFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
}

pub const DEFAULT_SEED: u64 = emlab_core::norms::DEFAULT_SEED;

impl ExperimentConfig {
    pub fn new(id: ExperimentId) -> Self {
        ExperimentConfig {
            experiment: id.as_str().to_string(),
            domain: None,
            coefficient: None,
            phi: None,
            scales: None,
            seed: None,
            tolerances: BTreeMap::new(),
            output: None,
            params: Params::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_json(&text)
    }

    pub fn id(&self) -> Result<ExperimentId, CliError> {
        self.experiment.parse()
    }

    /// Applies `KEY=VALUE` tolerance overrides.
    pub fn apply_tolerances(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for kv in overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("tolerance override `{kv}` is not KEY=VALUE")))?;
            let v: f64 = v.trim().parse().map_err(|_| CliError::Config(format!("tolerance `{k}` has a non-numeric value `{v}`")))?;
            self.tolerances.insert(k.trim().to_string(), v);
        }
        Ok(())
    }

    /// Checks the id, tolerance keys, parameter keys and the growth function.
    pub fn validate(&self) -> Result<ExperimentId, CliError> {
        let id = self.id()?;
        let known = id.default_tolerances();
        for k in self.tolerances.keys() {
            if !known.contains_key(k) {
                let list: Vec<&str> = known.keys().map(String::as_str).collect();
                return Err(CliError::Config(format!("unknown tolerance `{k}` for {id}; expected one of {}", list.join(", "))));
            }
        }
        for k in self.params.set_keys() {
            if !id.param_keys().contains(&k) {
                return Err(CliError::Config(format!("parameter `{k}` is not used by {id}")));
            }
        }
        if let Some(phi) = &self.phi {
            phi.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(s) = &self.scales {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(CliError::Config("scales must be positive".into()));
            }
        }
        Ok(id)
    }

    /// Effective tolerances: defaults overridden by the config.
    pub fn tolerances(&self) -> Result<BTreeMap<String, f64>, CliError> {
        let mut t = self.id()?.default_tolerances();
        t.extend(self.tolerances.iter().map(|(k, v)| (k.clone(), *v)));
        Ok(t)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Sampling plan with the configured seed substituted into stratified plans.
    pub fn plan(&self) -> SamplingPlan {
        match self.params.plan.unwrap_or(SamplingPlan::Exact) {
            SamplingPlan::Stratified { anchors, .. } => SamplingPlan::Stratified { seed: self.seed(), anchors },
            p => p,
        }
    }

    /// Output directory: the config value, or `emlab-out/<id>`.
    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("emlab-out").join(&self.experiment))
    }
}

/// Text printed by `emlab list`.
pub fn schema_listing() -> String {
    let mut s = String::new();
    s.push_str("Config file: JSON object with keys\n");
    s.push_str("  experiment   string, one of the ids below\n");
    s.push_str("  domain       {\"shape\": box|ball|l_shape|box_minus_ball|exterior_of_ball|box_minus_needle, \"h\": f64, \"params\": {..}}\n");
    s.push_str("  coefficient  {\"family\": identity|diagonal|checkerboard|rotation, ..}\n");
    s.push_str("  phi          {\"family\": power|power_log|tabulated, ..}\n");
    s.push_str("  scales       [f64]\n");
    s.push_str("  seed         u64\n");
    s.push_str("  tolerances   {key: f64}\n");
    s.push_str("  output       directory\n");
    s.push_str("  params       experiment parameters\n\n");
    for id in ExperimentId::ALL {
        s.push_str(&format!("{id}\n  {}\n", id.summary()));
        let tol: Vec<String> = id.default_tolerances().iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!("  tolerances: {}\n", tol.join(", ")));
        s.push_str(&format!("  params: {}\n", id.param_keys().join(", ")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.as_str().parse::<ExperimentId>().unwrap(), id);
        }
        assert!(matches!("nope".parse::<ExperimentId>(), Err(CliError::UnknownExperiment(_))));
    }

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "experiment": "cdc_sweep",
            "domain": {"shape": "box", "h": 0.0625},
            "coefficient": {"family": "checkerboard", "kappa": 4.0},
            "phi": {"family": "power", "a": 0.5},
            "scales": [0.5],
            "seed": 7,
            "tolerances": {"inf_ratio_min": 0.2},
            "params": {"sample": "stride:5"}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.validate().unwrap(), ExperimentId::CdcSweep);
        assert_eq!(c.params.sample, Some(BoundarySample::Stride(5)));
        assert_eq!(c.tolerances().unwrap()["inf_ratio_min"], 0.2);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut c = ExperimentConfig::new(ExperimentId::GrowthSuite);
        c.apply_tolerances(&["bogus=1".into()]).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::new(ExperimentId::GrowthSuite);
        c.params.sample = Some(BoundarySample::AllFaces);
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        assert!(ExperimentConfig::from_json(r#"{"experiment": "wellposed", "extra": 1}"#).is_err());
        let mut c = ExperimentConfig::new(ExperimentId::Wellposed);
        assert!(c.apply_tolerances(&["trace".into()]).is_err());
    }

    #[test]
    fn plan_takes_seed() {
        let mut c = ExperimentConfig::new(ExperimentId::NormEquivalence);
        c.params.plan = Some(SamplingPlan::Stratified { seed: 1, anchors: 8 });
        c.seed = Some(99);
        assert_eq!(c.plan(), SamplingPlan::Stratified { seed: 99, anchors: 8 });
    }
}
