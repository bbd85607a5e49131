//! Periodic-orbit thermodynamics: pressure from Bowen's equation on orbit
//! partition sums, Gibbs averages, entropy and region masses.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{axis_samples, Potential, Region, SamplingKnobs};
use crate::geometry::{classify_isometry, IsometryKind, WindowEnds};
use crate::group::{cyclic_classes, SchottkyGroup, Word};
use crate::sum::{compensated_sum, log_sum_exp};

pub const TABLE_SCHEMA_VERSION: u32 = 1;
/// Entropy values below this are reported as clipped.
pub const ENTROPY_FLOOR: f64 = -1e-6;

/// Closed geodesic classes of length `n`: canonical word and rotation
/// multiplicity.
pub fn enumerate_periodic_classes(group: &SchottkyGroup, n: usize) -> Result<Vec<(Word, usize)>> {
    if n == 0 {
        return Err(Error::InvalidInput("class length must be at least 1".into()));
    }
    let k = group.rank() as u64;
    let count = (2 * k - 1).checked_pow(n as u32).unwrap_or(u64::MAX);
    if n > crate::group::MAX_WORD_LEN || count > crate::group::MAX_TOTAL_WORDS {
        return Err(Error::ResourceLimit(format!("classes of length {n} over {k} generators exceed the cap")));
    }
    Ok(cyclic_classes(group.rank(), n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicClass {
    pub class: Word,
    pub multiplicity: usize,
    pub length_ell: f64,
    /// `∫_O φ` per potential id.
    pub birkhoff: BTreeMap<String, f64>,
    /// Time spent in each region per region id.
    pub region_time: BTreeMap<String, f64>,
}

impl PeriodicClass {
    pub fn average(&self, phi_id: &str) -> Result<f64> {
        Ok(self.integral(phi_id)? / self.length_ell)
    }

    pub fn integral(&self, phi_id: &str) -> Result<f64> {
        self.birkhoff
            .get(phi_id)
            .copied()
            .ok_or_else(|| Error::StaleTable(format!("no integral for potential {phi_id:?}")))
    }

    fn region(&self, id: &str) -> Result<f64> {
        self.region_time
            .get(id)
            .copied()
            .ok_or_else(|| Error::StaleTable(format!("no time for region {id:?}")))
    }
}

/// Closed geodesics per word length with cached Birkhoff integrals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitTable {
    pub schema_version: u32,
    pub n_max: usize,
    pub step: f64,
    pub potential_ids: Vec<String>,
    pub region_ids: Vec<String>,
    /// Classes of length `n` at index `n − 1`. Non-hyperbolic classes of
    /// extended groups are left out.
    pub levels: Vec<Vec<PeriodicClass>>,
}

impl PeriodicOrbitTable {
    pub fn build(
        group: &SchottkyGroup,
        n_max: usize,
        potentials: &[(String, Potential)],
        regions: &[Region],
        knobs: SamplingKnobs,
    ) -> Result<Self> {
        let mut levels = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let classes = enumerate_periodic_classes(group, n)?;
            let rows = classes
                .par_iter()
                .map(|(w, mult)| orbit_row(group, w, *mult, potentials, regions, knobs))
                .collect::<Result<Vec<_>>>()?;
            levels.push(rows.into_iter().flatten().collect());
        }
        Ok(Self {
            schema_version: TABLE_SCHEMA_VERSION,
            n_max,
            step: knobs.step,
            potential_ids: potentials.iter().map(|p| p.0.clone()).collect(),
            region_ids: regions.iter().map(|r| r.spec.id.clone()).collect(),
            levels,
        })
    }

    pub fn level(&self, n: usize) -> Result<&[PeriodicClass]> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::StaleTable(format!("table has no level {n} (n_max = {})", self.n_max)));
        }
        Ok(&self.levels[n - 1])
    }

    pub fn has_potential(&self, id: &str) -> bool {
        self.potential_ids.iter().any(|p| p == id)
    }

    fn require(&self, phi_id: &str) -> Result<()> {
        if self.has_potential(phi_id) {
            Ok(())
        } else {
            Err(Error::StaleTable(format!("potential {phi_id:?} missing from table")))
        }
    }

    /// Registers `Σ c_j φ_j` under `id`, using the linearity of orbit
    /// integrals.
    pub fn add_combination(&mut self, id: &str, terms: &[(f64, String)]) -> Result<()> {
        for (_, leaf) in terms {
            self.require(leaf)?;
        }
        for o in self.levels.iter_mut().flatten() {
            let v = compensated_sum(terms.iter().map(|(c, leaf)| c * o.birkhoff[leaf]));
            o.birkhoff.insert(id.to_string(), v);
        }
        if !self.has_potential(id) {
            self.potential_ids.push(id.to_string());
        }
        Ok(())
    }

    /// All classes with length at most `n_max`, shortest first.
    pub fn classes_up_to(&self, n_max: usize) -> impl Iterator<Item = &PeriodicClass> {
        self.levels.iter().take(n_max).flatten()
    }
}

fn orbit_row(
    group: &SchottkyGroup,
    w: &Word,
    mult: usize,
    potentials: &[(String, Potential)],
    regions: &[Region],
    knobs: SamplingKnobs,
) -> Result<Option<PeriodicClass>> {
    let m = group.matrix_of(w);
    if group.extended {
        match classify_isometry(&m) {
            Ok(c) if c.kind == IsometryKind::Hyperbolic => {}
            _ => return Ok(None),
        }
    }
    let (ell, samples, _) = axis_samples(&m, group, knobs.step, knobs.reduction_cap)?;
    if samples.len() < 4 {
        return Err(Error::QuadratureResolution(samples.len()));
    }
    let windows: Vec<WindowEnds> = samples.iter().map(WindowEnds::centred).collect();
    let n = samples.len() as f64;
    let mut birkhoff = BTreeMap::new();
    for (id, p) in potentials {
        let integral = match p.spec.constant_value() {
            Some(c) => c * ell,
            None => compensated_sum(p.eval_windows(&windows)) / n * ell,
        };
        birkhoff.insert(id.clone(), integral);
    }
    let mut region_time = BTreeMap::new();
    for r in regions {
        let inside = r.count_inside(&windows);
        let time = if inside == samples.len() { ell } else { inside as f64 / n * ell };
        region_time.insert(r.spec.id.clone(), time);
    }
    Ok(Some(PeriodicClass { class: w.clone(), multiplicity: mult, length_ell: ell, birkhoff, region_time }))
}

/// `log Z_n(t, c)` with `Z_n = Σ mult · exp(t ∫_O φ − c ℓ(O))`.
pub fn log_partition_sum(table: &PeriodicOrbitTable, n: usize, t: f64, c: f64, phi_id: &str) -> Result<f64> {
    table.require(phi_id)?;
    let level = table.level(n)?;
    let terms = level
        .iter()
        .map(|o| Ok((o.multiplicity as f64).ln() + t * o.integral(phi_id)? - c * o.length_ell))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

pub fn partition_sum(table: &PeriodicOrbitTable, n: usize, t: f64, c: f64, phi_id: &str) -> Result<f64> {
    Ok(log_partition_sum(table, n, t, c, phi_id)?.exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureResult {
    pub t: f64,
    /// Root at the largest level; Gibbs statistics use the same level.
    pub c_star: f64,
    /// `(n, c_n)` for each level in the range.
    pub per_n_roots: Vec<(usize, f64)>,
    /// Richardson extrapolation in `1/n` of the top two roots.
    pub extrapolated: f64,
    /// `|c_{n_max} − c_{n_max − 1}|`.
    pub residual: f64,
    pub n_range: (usize, usize),
}

struct LevelTerms {
    log_mult: Vec<f64>,
    integral: Vec<f64>,
    ell: Vec<f64>,
}

impl LevelTerms {
    fn new(table: &PeriodicOrbitTable, n: usize, phi_id: &str) -> Result<Self> {
        let level = table.level(n)?;
        if level.is_empty() {
            return Err(Error::Bracket(format!("level {n} has no closed geodesics")));
        }
        Ok(Self {
            log_mult: level.iter().map(|o| (o.multiplicity as f64).ln()).collect(),
            integral: level.iter().map(|o| o.integral(phi_id)).collect::<Result<_>>()?,
            ell: level.iter().map(|o| o.length_ell).collect(),
        })
    }

    fn log_z(&self, t: f64, c: f64) -> f64 {
        let terms: Vec<f64> = (0..self.ell.len())
            .map(|i| self.log_mult[i] + t * self.integral[i] - c * self.ell[i])
            .collect();
        log_sum_exp(&terms)
    }

    /// Unique root of `c ↦ log Z(t, c)`. At `c = min t·avg` every term is at
    /// least its multiplicity; above the upper end the sum is below one.
    fn root(&self, t: f64) -> Result<f64> {
        let avgs = self.integral.iter().zip(&self.ell).map(|(i, l)| t * i / l);
        let lo_c = avgs.clone().fold(f64::INFINITY, f64::min);
        let hi_avg = avgs.fold(f64::NEG_INFINITY, f64::max);
        let count: f64 = self.log_mult.iter().map(|m| m.exp()).sum();
        let ell_min = self.ell.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_c = hi_avg + count.ln() / ell_min + 1.0;
        let (mut lo, mut hi) = (lo_c, hi_c);
        let (flo, fhi) = (self.log_z(t, lo), self.log_z(t, hi));
        if !(flo >= 0.0 && fhi < 0.0) {
            return Err(Error::Bracket(format!("log Z = {flo:e} at c = {lo}, {fhi:e} at c = {hi}")));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.log_z(t, mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Flow pressure `P(tφ)`: the root of Bowen's equation `Z_n(t, c) = 1` per
/// level, reported at the largest level of `n_range`.
pub fn flow_pressure(table: &PeriodicOrbitTable, phi_id: &str, t: f64, n_range: (usize, usize)) -> Result<PressureResult> {
    table.require(phi_id)?;
    let (n_min, n_max) = n_range;
    if n_min == 0 || n_min > n_max {
        return Err(Error::InvalidInput(format!("invalid level range {n_min}..={n_max}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidInput("t must be finite".into()));
    }
    let mut per_n_roots = Vec::new();
    for n in n_min..=n_max {
        per_n_roots.push((n, LevelTerms::new(table, n, phi_id)?.root(t)?));
    }
    let c_star = per_n_roots.last().map(|r| r.1).unwrap_or(f64::NAN);
    let (extrapolated, residual) = if per_n_roots.len() >= 2 {
        let (n1, c1) = per_n_roots[per_n_roots.len() - 1];
        let (_, c0) = per_n_roots[per_n_roots.len() - 2];
        (n1 as f64 * c1 - (n1 as f64 - 1.0) * c0, (c1 - c0).abs())
    } else {
        (c_star, 0.0)
    };
    Ok(PressureResult { t, c_star, per_n_roots, extrapolated, residual, n_range })
}

/// Normalized Gibbs weights `mult · exp(t∫φ − P ℓ)` at level `n`.
fn gibbs_weights(table: &PeriodicOrbitTable, n: usize, phi_id: &str, t: f64, pressure: f64) -> Result<Vec<f64>> {
    let level = table.level(n)?;
    let logs = level
        .iter()
        .map(|o| Ok((o.multiplicity as f64).ln() + t * o.integral(phi_id)? - pressure * o.length_ell))
        .collect::<Result<Vec<_>>>()?;
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateWeights(format!("no finite weight at level {n}")));
    }
    Ok(logs.iter().map(|l| (l - top).exp()).collect())
}

/// Gibbs measure of the orbit ensemble at one level.
#[derive(Clone, Debug)]
pub struct GibbsEnsemble<'a> {
    table: &'a PeriodicOrbitTable,
    pub level: usize,
    pub t: f64,
    pub pressure: f64,
    weights: Vec<f64>,
    norm: f64,
}

impl<'a> GibbsEnsemble<'a> {
    pub fn new(table: &'a PeriodicOrbitTable, phi_id: &str, pressure: &PressureResult) -> Result<Self> {
        let level = pressure.n_range.1;
        let weights = gibbs_weights(table, level, phi_id, pressure.t, pressure.c_star)?;
        let norm = compensated_sum(weights.iter().zip(table.level(level)?).map(|(w, o)| w * o.length_ell));
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateWeights(format!("weight normalization {norm}")));
        }
        Ok(Self { table, level, t: pressure.t, pressure: pressure.c_star, weights, norm })
    }

    /// `∫ψ dm`: orbit integrals weighted by the Gibbs weights, normalized by
    /// the weighted lengths.
    pub fn average(&self, psi_id: &str) -> Result<f64> {
        self.table.require(psi_id)?;
        let level = self.table.level(self.level)?;
        let num = level
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| Ok(w * o.integral(psi_id)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(num) / self.norm)
    }

    pub fn region_mass(&self, region_id: &str) -> Result<f64> {
        let level = self.table.level(self.level)?;
        let num = level
            .iter()
            .zip(&self.weights)
            .map(|(o, w)| Ok(w * o.region(region_id)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((compensated_sum(num) / self.norm).clamp(0.0, 1.0))
    }

    /// Weight of each class as a probability on orbits (not on time).
    pub fn orbit_probabilities(&self) -> Vec<f64> {
        let s = compensated_sum(self.weights.iter().copied());
        self.weights.iter().map(|w| w / s).collect()
    }
}

pub fn gibbs_average(
    table: &PeriodicOrbitTable,
    phi_id: &str,
    t: f64,
    psi_id: &str,
    n_range: (usize, usize),
) -> Result<f64> {
    let p = flow_pressure(table, phi_id, t, n_range)?;
    GibbsEnsemble::new(table, phi_id, &p)?.average(psi_id)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsStats {
    pub t: f64,
    pub pressure: f64,
    pub phi_mean: f64,
    pub entropy: f64,
    /// Set when the raw entropy fell below [`ENTROPY_FLOOR`].
    pub entropy_clipped: bool,
    pub region_masses: BTreeMap<String, f64>,
    /// Pressure change between the top two levels.
    pub n_stability: f64,
}

pub fn equilibrium_stats(
    table: &PeriodicOrbitTable,
    phi_id: &str,
    t: f64,
    region_ids: &[String],
    n_range: (usize, usize),
) -> Result<GibbsStats> {
    let p = flow_pressure(table, phi_id, t, n_range)?;
    stats_from_pressure(table, phi_id, &p, region_ids)
}

pub fn stats_from_pressure(
    table: &PeriodicOrbitTable,
    phi_id: &str,
    p: &PressureResult,
    region_ids: &[String],
) -> Result<GibbsStats> {
    let g = GibbsEnsemble::new(table, phi_id, p)?;
    let phi_mean = g.average(phi_id)?;
    let raw = p.c_star - p.t * phi_mean;
    let region_masses =
        region_ids.iter().map(|id| Ok((id.clone(), g.region_mass(id)?))).collect::<Result<BTreeMap<_, _>>>()?;
    Ok(GibbsStats {
        t: p.t,
        pressure: p.c_star,
        phi_mean,
        entropy: raw.max(ENTROPY_FLOOR),
        entropy_clipped: raw < ENTROPY_FLOOR,
        region_masses,
        n_stability: p.residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TPhiVerdict {
    NotApplicable,
    Estimate { t_phi: f64 },
    /// No grid point qualifies.
    Empty { warning: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TPhiReport {
    pub verdict: TPhiVerdict,
    /// `(t, P(tφ))` along the grid.
    pub curve: Vec<(f64, f64)>,
    /// Whether `P(tφ) − h_∞` is non-decreasing along the grid.
    pub excess_monotone: Option<bool>,
}

/// Smallest grid `t` beyond which the pressure stays above the reference
/// entropy at infinity.
pub fn t_phi_report(
    table: &PeriodicOrbitTable,
    phi_id: &str,
    h_inf_reference: Option<f64>,
    t_grid: &[f64],
    n_range: (usize, usize),
) -> Result<TPhiReport> {
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let curve = grid
        .iter()
        .map(|&t| Ok((t, flow_pressure(table, phi_id, t, n_range)?.c_star)))
        .collect::<Result<Vec<_>>>()?;
    let Some(h_inf) = h_inf_reference else {
        return Ok(TPhiReport { verdict: TPhiVerdict::NotApplicable, curve, excess_monotone: None });
    };
    let h_top = flow_pressure(table, phi_id, 0.0, n_range)?.c_star;
    let excess: Vec<f64> = curve.iter().map(|(_, p)| p - h_inf).collect();
    let excess_monotone = Some(excess.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    if h_inf > h_top {
        return Ok(TPhiReport {
            verdict: TPhiVerdict::Empty {
                warning: format!("reference {h_inf} exceeds the computed topological entropy {h_top}"),
            },
            curve,
            excess_monotone,
        });
    }
    // first index from which every later excess is positive
    let mut start = None;
    for i in (0..excess.len()).rev() {
        if excess[i] > 0.0 {
            start = Some(i);
        } else {
            break;
        }
    }
    let verdict = match start {
        Some(i) => TPhiVerdict::Estimate { t_phi: if i == 0 { grid[0].min(0.0) } else { grid[i - 1] } },
        None => TPhiVerdict::Empty { warning: "pressure never exceeds the reference on the grid".into() },
    };
    Ok(TPhiReport { verdict, curve, excess_monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::flow::{InvariantSetSpec, PotentialSpec, RegionSpec};

    fn table(n_max: usize) -> PeriodicOrbitTable {
        let g = demo::standard_group();
        let knobs = SamplingKnobs { step: 0.1, neighbor_depth: 1, reduction_cap: 256 };
        let k = InvariantSetSpec::closed_orbit(&[1]);
        let pots = vec![
            ("zero".to_string(), Potential::new(&PotentialSpec::Constant { value: 0.0 }, &g, knobs).unwrap()),
            ("kappa".to_string(), Potential::new(&PotentialSpec::Constant { value: 0.3 }, &g, knobs).unwrap()),
            ("bump".to_string(), Potential::new(&PotentialSpec::bump(k.clone()), &g, knobs).unwrap()),
        ];
        let regions = vec![
            Region::new(&RegionSpec::whole_space("all"), &g, knobs).unwrap(),
            Region::new(&RegionSpec::neighborhood("near", k, 0.3), &g, knobs).unwrap(),
        ];
        PeriodicOrbitTable::build(&g, n_max, &pots, &regions, knobs).unwrap()
    }

    #[test]
    fn partition_sum_examples() {
        let tb = table(3);
        let count: usize = tb.level(3).unwrap().iter().map(|o| o.multiplicity).sum();
        assert_eq!(partition_sum(&tb, 3, 0.0, 0.0, "zero").unwrap().round() as usize, count);
        let a = partition_sum(&tb, 3, 0.0, 1.0, "zero").unwrap();
        let b = partition_sum(&tb, 3, 0.0, 50.0, "zero").unwrap();
        assert!(b < a && b < 1e-50);
        let lhs = log_partition_sum(&tb, 3, 2.0, 1.0, "kappa").unwrap();
        let rhs = log_partition_sum(&tb, 3, 0.0, 1.0 - 2.0 * 0.3, "zero").unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(matches!(partition_sum(&tb, 3, 0.0, 0.0, "missing"), Err(Error::StaleTable(_))));
        assert!(matches!(partition_sum(&tb, 7, 0.0, 0.0, "zero"), Err(Error::StaleTable(_))));
    }

    #[test]
    fn constant_shift_and_normalization() {
        let tb = table(4);
        let p0 = flow_pressure(&tb, "zero", 0.0, (3, 4)).unwrap();
        let p1 = flow_pressure(&tb, "kappa", 1.5, (3, 4)).unwrap();
        assert!((p1.c_star - p0.c_star - 1.5 * 0.3).abs() < 1e-10);
        let g = GibbsEnsemble::new(&tb, "bump", &flow_pressure(&tb, "bump", 3.0, (3, 4)).unwrap()).unwrap();
        assert!((g.region_mass("all").unwrap() - 1.0).abs() < 1e-12);
        let s = equilibrium_stats(&tb, "bump", 3.0, &["all".into(), "near".into()], (3, 4)).unwrap();
        assert!(s.entropy >= 0.0);
        assert!(s.region_masses["near"] <= 1.0);
    }

    #[test]
    fn t_phi_examples() {
        let tb = table(3);
        let r = t_phi_report(&tb, "bump", None, &[0.0, 1.0], (2, 3)).unwrap();
        assert_eq!(r.verdict, TPhiVerdict::NotApplicable);
        let r = t_phi_report(&tb, "bump", Some(0.0), &[0.0, 1.0, 2.0], (2, 3)).unwrap();
        assert!(matches!(r.verdict, TPhiVerdict::Estimate { t_phi } if t_phi <= 0.0));
        let r = t_phi_report(&tb, "bump", Some(10.0), &[0.0, 1.0], (2, 3)).unwrap();
        assert!(matches!(r.verdict, TPhiVerdict::Empty { .. }));
    }
}
