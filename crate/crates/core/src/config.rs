//! Experiment configuration: schema validation, semantic checks, defaults
//! and the canonical hash.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use jsonschema::error::ValidationErrorKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{InvariantSetSpec, PotentialSpec, RegionSpec, SamplingKnobs, DEFAULT_NEIGHBOR_DEPTH, DEFAULT_STEP};
use crate::geometry::{HPoint, Isometry};
use crate::group::{check_ping_pong, DiskPair, SchottkyGroup, Word, DEFAULT_REDUCTION_CAP};

/// The published configuration schema.
pub const CONFIG_SCHEMA: &str = include_str!("../../../docs/config.schema.json");

/// Largest orbit-table level a configuration may request.
pub const MAX_TABLE_LEVEL: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub disks: Vec<DiskPair>,
    /// Explicit generators `[a, b, c, d]`; derived from the disk pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<[f64; 4]>>,
    #[serde(default = "default_basepoint")]
    pub basepoint: [f64; 2],
    #[serde(default)]
    pub extended: bool,
}

fn default_basepoint() -> [f64; 2] {
    [0.0, 1.0]
}

impl GroupConfig {
    pub fn build(&self) -> Result<SchottkyGroup> {
        let base = HPoint::new(self.basepoint[0], self.basepoint[1])?;
        match &self.generators {
            None => SchottkyGroup::from_disk_pairs(self.disks.clone(), base, self.extended),
            Some(gens) => {
                let gens =
                    gens.iter().map(|g| Isometry::new(g[0], g[1], g[2], g[3])).collect::<Result<Vec<_>>>()?;
                SchottkyGroup::new(gens, self.disks.clone(), base, self.extended)
            }
        }
    }

    pub fn from_group(g: &SchottkyGroup) -> Self {
        Self {
            disks: g.disks.clone(),
            generators: None,
            basepoint: [g.basepoint.x, g.basepoint.y],
            extended: g.extended,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    pub step: f64,
    pub neighbor_depth: usize,
    pub reduction_cap: usize,
    /// Word length of the Poincaré shells used for critical exponents.
    pub shell_depth: usize,
    pub ping_pong_samples: usize,
}

impl Default for Knobs {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            neighbor_depth: DEFAULT_NEIGHBOR_DEPTH,
            reduction_cap: DEFAULT_REDUCTION_CAP,
            shell_depth: 9,
            ping_pong_samples: 16,
        }
    }
}

impl Knobs {
    pub fn sampling(&self) -> SamplingKnobs {
        SamplingKnobs { step: self.step, neighbor_depth: self.neighbor_depth, reduction_cap: self.reduction_cap }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reference {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_inf: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, svg: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckParams {
    pub random_cases: usize,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self { random_cases: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentParams {
    pub families: Vec<[usize; 2]>,
    pub n_list: Vec<u32>,
    /// Subgroup word depth of the core samples used for the disjointness check.
    pub sample_depth: usize,
}

impl Default for ExponentParams {
    fn default() -> Self {
        Self { families: vec![[1, 2], [3, 4]], n_list: vec![0, 1, 2, 3], sample_depth: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureParams {
    pub phi: String,
    #[serde(default = "default_derivative_step")]
    pub derivative_step: f64,
}

fn default_derivative_step() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroTempParams {
    pub phi: String,
    pub region: String,
    #[serde(default = "default_eps_target")]
    pub eps_target: f64,
    #[serde(default = "default_mean_min")]
    pub mean_min: f64,
    /// Entropy of the target set; derived from the target when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_reference: Option<f64>,
    #[serde(default = "default_entropy_tol")]
    pub entropy_tol: f64,
}

fn default_eps_target() -> f64 {
    0.05
}
fn default_mean_min() -> f64 {
    0.98
}
fn default_entropy_tol() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermediateParams {
    pub phi: String,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_intermediate_tol")]
    pub tol: f64,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_intermediate_tol() -> f64 {
    0.01
}
fn default_max_evals() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonergodicParams {
    pub word: Word,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_split_tol")]
    pub tol: f64,
    #[serde(default = "default_combined_min")]
    pub combined_min: f64,
}

fn default_radius() -> f64 {
    0.3
}
fn default_split_tol() -> f64 {
    0.05
}
fn default_combined_min() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergenceParams {
    pub families: [[usize; 2]; 2],
    pub levels: usize,
    pub eps: Vec<f64>,
    pub radius: f64,
    pub sample_depth: usize,
    pub t_start: f64,
    pub t_cap: f64,
    pub max_halvings: usize,
}

impl Default for DivergenceParams {
    fn default() -> Self {
        Self {
            families: [[1, 2], [3, 4]],
            levels: 2,
            eps: vec![0.1, 0.1],
            radius: 0.3,
            sample_depth: 4,
            t_start: 1.0,
            t_cap: 256.0,
            max_halvings: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoMaximizerParams {
    pub phi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(default = "default_p")]
    pub p: i32,
    #[serde(default = "default_h")]
    pub h: i32,
    #[serde(default = "default_family_n")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_escape_n")]
    pub escape_n: usize,
    #[serde(default = "default_escape_threshold")]
    pub escape_threshold: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_tilt_grid")]
    pub tilt_grid: Vec<f64>,
    #[serde(default = "default_split_tol")]
    pub tilt_tol: f64,
}

fn default_p() -> i32 {
    1
}
fn default_h() -> i32 {
    2
}
fn default_family_n() -> Vec<usize> {
    vec![1, 2, 5, 10, 20, 30]
}
fn default_escape_n() -> usize {
    30
}
fn default_escape_threshold() -> f64 {
    0.9
}
fn default_margin() -> f64 {
    crate::ergopt::DEFAULT_MARGIN
}
fn default_tilt_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityParams {
    pub phi: String,
    pub word: Word,
    pub tests: Vec<String>,
    #[serde(default = "default_density_tol")]
    pub tol: f64,
}

fn default_density_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiments {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pressure_curve: Option<PressureParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_temp: Option<ZeroTempParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<IntermediateParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonergodic: Option<NonergodicParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<DivergenceParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_maximizer: Option<NoMaximizerParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupConfig,
    #[serde(default)]
    pub potentials: BTreeMap<String, PotentialSpec>,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_n_range")]
    pub n_range: (usize, usize),
    #[serde(default)]
    pub knobs: Knobs,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub experiments: Experiments,
}

fn default_t_grid() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 40.0]
}

fn default_n_range() -> (usize, usize) {
    (5, 6)
}

impl ExperimentConfig {
    /// A configuration around an existing group with default knobs.
    pub fn for_group(group: &SchottkyGroup) -> Self {
        Self {
            group: GroupConfig::from_group(group),
            potentials: BTreeMap::new(),
            regions: Vec::new(),
            t_grid: default_t_grid(),
            n_range: default_n_range(),
            knobs: Knobs::default(),
            reference: Reference::default(),
            output: OutputConfig::default(),
            seed: 0,
            experiments: Experiments::default(),
        }
    }

    /// Canonical JSON: defaults filled in, object keys sorted, no whitespace.
    pub fn canonical_json(&self) -> Result<String> {
        let v = serde_json::to_value(self).map_err(|e| Error::Internal(e.to_string()))?;
        serde_json::to_string(&v).map_err(|e| Error::Internal(e.to_string()))
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    pub fn potential(&self, id: &str) -> Result<&PotentialSpec> {
        self.potentials.get(id).ok_or_else(|| Error::Config(vec![format!("/potentials: no potential named {id:?}")]))
    }

    pub fn region(&self, id: &str) -> Result<&RegionSpec> {
        self.regions
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Config(vec![format!("/regions: no region named {id:?}")]))
    }
}

fn schema_validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(CONFIG_SCHEMA).expect("bundled schema is valid JSON");
        jsonschema::validator_for(&schema).expect("bundled schema compiles")
    })
}

/// Schema violations as `"<json pointer>: <message>"`. Missing and unknown
/// keys are reported at the key's own path.
pub fn schema_errors(instance: &Value) -> Vec<String> {
    let mut out: Vec<String> = schema_validator()
        .iter_errors(instance)
        .flat_map(|e| {
            let base = e.instance_path.to_string();
            match &e.kind {
                ValidationErrorKind::Required { property } => {
                    let name = property.as_str().map(str::to_string).unwrap_or_else(|| property.to_string());
                    vec![format!("{base}/{name}: required property is missing")]
                }
                ValidationErrorKind::AdditionalProperties { unexpected } => {
                    unexpected.iter().map(|k| format!("{base}/{k}: unknown key")).collect()
                }
                _ => vec![format!("{}: {e}", if base.is_empty() { "/" } else { &base })],
            }
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Parses and validates a configuration, reporting every violation found.
pub fn parse_config(bytes: &[u8]) -> Result<ExperimentConfig> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Config(vec![format!("/: not UTF-8: {e}")]))?;
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("/: not JSON: {e}")]))?;
    let errors = schema_errors(&value);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(vec![format!("/: {e}")]))?;
    let errors = semantic_errors(&cfg);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok(cfg)
}

fn check_letters(word: &Word, rank: usize, path: &str, errors: &mut Vec<String>) {
    if word.0.iter().any(|&l| l == 0 || l.unsigned_abs() as usize > rank) {
        errors.push(format!("{path}: word {word} uses generators outside 1..={rank}"));
    }
}

fn check_family(f: &[usize; 2], rank: usize, path: &str, errors: &mut Vec<String>) {
    if f[0] == f[1] || f[0] == 0 || f[1] == 0 || f[0] > rank || f[1] > rank {
        errors.push(format!("{path}: family needs two distinct generators in 1..={rank}"));
    }
}

/// Checks the schema cannot express: group validity, potential and region
/// references, weight halving, level ranges and parameter consistency.
pub fn semantic_errors(cfg: &ExperimentConfig) -> Vec<String> {
    let mut errors = Vec::new();
    if let Some(gens) = &cfg.group.generators {
        if gens.len() != cfg.group.disks.len() {
            errors.push(format!(
                "/group/generators: {} generators for {} disk pairs",
                gens.len(),
                cfg.group.disks.len()
            ));
        }
    }
    let group = match cfg.group.build() {
        Ok(g) => Some(g),
        Err(e) => {
            errors.push(format!("/group: {e}"));
            None
        }
    };
    if let Some(g) = &group {
        match check_ping_pong(g, cfg.knobs.ping_pong_samples) {
            Ok(r) if !r.ok => errors.push(format!("/group/disks: ping-pong fails: {}", r.violations.join("; "))),
            Err(e) => errors.push(format!("/group/disks: {e}")),
            _ => {}
        }
    }
    let rank = cfg.group.disks.len();
    for (id, p) in &cfg.potentials {
        if let Err(e) = potential_halving(p) {
            errors.push(format!("/potentials/{id}: {e}"));
        } else if let Some(g) = &group {
            if let Err(e) = p.validate(g) {
                errors.push(format!("/potentials/{id}: {e}"));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for (i, r) in cfg.regions.iter().enumerate() {
        if !seen.insert(r.id.clone()) {
            errors.push(format!("/regions/{i}/id: duplicate region id {:?}", r.id));
        }
        let lo = r.min_radius.unwrap_or(0.0);
        if let Some(hi) = r.radius {
            if hi <= lo {
                errors.push(format!("/regions/{i}: radius must exceed min_radius"));
            }
        }
        if let (Some(t), Some(g)) = (&r.target, &group) {
            if let Err(e) = t.validate(g) {
                errors.push(format!("/regions/{i}/target: {e}"));
            }
        }
    }
    if cfg.t_grid.iter().any(|t| !t.is_finite()) {
        errors.push("/t_grid: values must be finite".into());
    }
    let (lo, hi) = cfg.n_range;
    if lo == 0 || lo > hi || hi > MAX_TABLE_LEVEL {
        errors.push(format!("/n_range: need 1 ≤ {lo} ≤ {hi} ≤ {MAX_TABLE_LEVEL}"));
    }
    let need_phi = |id: &str, path: &str, errors: &mut Vec<String>| {
        if !cfg.potentials.contains_key(id) {
            errors.push(format!("{path}: no potential named {id:?}"));
        }
    };
    let ex = &cfg.experiments;
    if let Some(p) = &ex.exponents {
        for (i, f) in p.families.iter().enumerate() {
            check_family(f, rank, &format!("/experiments/exponents/families/{i}"), &mut errors);
        }
    }
    if let Some(p) = &ex.pressure_curve {
        need_phi(&p.phi, "/experiments/pressure_curve/phi", &mut errors);
    }
    if let Some(p) = &ex.zero_temp {
        need_phi(&p.phi, "/experiments/zero_temp/phi", &mut errors);
        if !cfg.regions.iter().any(|r| r.id == p.region) {
            errors.push(format!("/experiments/zero_temp/region: no region named {:?}", p.region));
        }
        if let Some(PotentialSpec::Bump { target }) = cfg.potentials.get(&p.phi) {
            if !matches!(target, InvariantSetSpec::ClosedOrbit { .. } | InvariantSetSpec::SubgroupCore { .. }) {
                errors.push("/experiments/zero_temp/phi: target must be a closed orbit or a subgroup core".into());
            }
        } else if cfg.potentials.contains_key(&p.phi) {
            errors.push("/experiments/zero_temp/phi: potential must be a bump".into());
        }
    }
    if let Some(p) = &ex.intermediate {
        need_phi(&p.phi, "/experiments/intermediate/phi", &mut errors);
        if p.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            errors.push("/experiments/intermediate/fractions: each fraction must lie in (0, 1)".into());
        }
    }
    if let Some(p) = &ex.nonergodic {
        check_letters(&p.word, rank, "/experiments/nonergodic/word", &mut errors);
    }
    if let Some(p) = &ex.divergence {
        check_family(&p.families[0], rank, "/experiments/divergence/families/0", &mut errors);
        check_family(&p.families[1], rank, "/experiments/divergence/families/1", &mut errors);
        if p.eps.len() != p.levels {
            errors.push(format!("/experiments/divergence/eps: expected {} values, got {}", p.levels, p.eps.len()));
        }
        if p.eps.windows(2).any(|w| w[1] > w[0]) {
            errors.push("/experiments/divergence/eps: tolerances must be non-increasing".into());
        }
        if !(p.t_cap >= p.t_start) {
            errors.push("/experiments/divergence/t_cap: must be at least t_start".into());
        }
    }
    if let Some(p) = &ex.no_maximizer {
        need_phi(&p.phi, "/experiments/no_maximizer/phi", &mut errors);
        if let Some(psi) = &p.psi {
            need_phi(psi, "/experiments/no_maximizer/psi", &mut errors);
        }
        let k = rank as i32;
        if p.p.abs() > k || p.h.abs() > k || p.p.abs() == p.h.abs() {
            errors.push(format!("/experiments/no_maximizer: letters p = {}, h = {} invalid for rank {k}", p.p, p.h));
        }
    }
    if let Some(p) = &ex.density {
        need_phi(&p.phi, "/experiments/density/phi", &mut errors);
        check_letters(&p.word, rank, "/experiments/density/word", &mut errors);
        for (i, t) in p.tests.iter().enumerate() {
            need_phi(t, &format!("/experiments/density/tests/{i}"), &mut errors);
        }
    }
    errors
}

/// The weight condition of weighted sums, checked before the group is known.
fn potential_halving(p: &PotentialSpec) -> Result<()> {
    match p {
        PotentialSpec::WeightedSum { terms } => {
            for (k, pair) in terms.windows(2).enumerate() {
                if pair[1].delta > pair[0].delta / 2.0 {
                    return Err(Error::InvalidSpec(format!(
                        "weighted-sum constraint violated: weight {} = {} exceeds half of weight {} = {} (need δ_(k+1) ≤ δ_k / 2)",
                        k + 1,
                        pair[1].delta,
                        k,
                        pair[0].delta
                    )));
                }
            }
            terms.iter().try_for_each(|t| potential_halving(&t.potential))
        }
        PotentialSpec::Scaled { inner, .. } => potential_halving(inner),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "group": {
                "disks": [
                    {"repelling": {"center": -2.5, "radius": 1.0}, "attracting": {"center": 2.5, "radius": 1.0}},
                    {"repelling": {"center": -0.9, "radius": 0.35}, "attracting": {"center": 0.9, "radius": 0.35}}
                ]
            }
        })
    }

    fn errs(v: &Value) -> Vec<String> {
        match parse_config(v.to_string().as_bytes()) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_parses_to_the_standard_group() {
        let cfg = parse_config(minimal().to_string().as_bytes()).unwrap();
        let g = cfg.group.build().unwrap();
        let s = demo::standard_group();
        for (a, b) in g.generators.iter().zip(&s.generators) {
            assert!(a.approx_eq(b, 1e-14));
        }
        assert_eq!(cfg.n_range, (5, 6));
    }

    #[test]
    fn missing_disks_named() {
        let e = errs(&json!({"group": {}}));
        assert!(e.iter().any(|m| m.starts_with("/group/disks")), "{e:?}");
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        let mut v = minimal();
        v["colour"] = json!(1);
        v["group"]["disks"][0]["repelling"]["extra"] = json!(true);
        let e = errs(&v);
        assert!(e.iter().any(|m| m.starts_with("/colour")), "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("/group/disks/0/repelling/extra")), "{e:?}");
    }

    #[test]
    fn all_violations_listed() {
        let mut v = minimal();
        v["t_grid"] = json!([]);
        v["knobs"] = json!({"step": 5.0});
        v["n_range"] = json!([0, 3]);
        let e = errs(&v);
        assert!(e.len() >= 3, "{e:?}");
    }

    #[test]
    fn halving_violation_cites_the_weight_constraint() {
        let mut v = minimal();
        let b = json!({"kind": "bump", "target": {"kind": "closed_orbit", "word": [1]}});
        v["potentials"] = json!({"phi": {"kind": "weighted_sum", "terms": [
            {"delta": 1.0, "potential": b}, {"delta": 0.75, "potential": b}
        ]}});
        let e = errs(&v);
        assert!(e.iter().any(|m| m.starts_with("/potentials/phi") && m.contains("weighted-sum constraint")), "{e:?}");
    }

    #[test]
    fn semantic_reference_checks() {
        let mut v = minimal();
        v["experiments"] = json!({"pressure_curve": {"phi": "nope"}, "nonergodic": {"word": [3]}});
        v["n_range"] = json!([4, 3]);
        let e = errs(&v);
        assert!(e.iter().any(|m| m.starts_with("/experiments/pressure_curve/phi")), "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("/experiments/nonergodic/word")), "{e:?}");
        assert!(e.iter().any(|m| m.starts_with("/n_range")), "{e:?}");
    }

    #[test]
    fn overlapping_disks_fail_ping_pong() {
        let mut v = minimal();
        v["group"]["disks"][1]["attracting"]["center"] = json!(2.0);
        let e = errs(&v);
        assert!(e.iter().any(|m| m.starts_with("/group")), "{e:?}");
    }

    #[test]
    fn hash_is_canonical() {
        let a = parse_config(minimal().to_string().as_bytes()).unwrap();
        let mut v = minimal();
        v["n_range"] = json!([5, 6]);
        v["seed"] = json!(0);
        let b = parse_config(serde_json::to_string_pretty(&v).unwrap().as_bytes()).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        v["seed"] = json!(1);
        let c = parse_config(v.to_string().as_bytes()).unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn defaulted_config_round_trips() {
        let a = parse_config(minimal().to_string().as_bytes()).unwrap();
        let b = parse_config(a.canonical_json().unwrap().as_bytes()).unwrap();
        assert_eq!(a, b);
    }
}
