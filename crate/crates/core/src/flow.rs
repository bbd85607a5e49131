//! Closed geodesics, sampled invariant sets, distance potentials and
//! Birkhoff integrals along closed orbits.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use num_complex::Complex64;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    acosh_clamped, flip, geodesic_flow_step, hyperbolic_data, line_window_cosh, BoundaryPoint, GeodesicLine,
    Isometry, TangentVector, WindowEnds,
};
use crate::group::{
    cyclic_classes, Disk, enumerate_reduced_words, reduce_tangent, SchottkyGroup, Word, DEFAULT_REDUCTION_CAP,
};
use crate::sum::compensated_sum;

pub const DEFAULT_STEP: f64 = 0.05;
pub const DEFAULT_SAMPLE_DEPTH: usize = 3;
pub const DEFAULT_NEIGHBOR_DEPTH: usize = 2;

fn default_sample_depth() -> usize {
    DEFAULT_SAMPLE_DEPTH
}

/// Flow-invariant compact sets built from closed geodesics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InvariantSetSpec {
    ClosedOrbit {
        word: Word,
    },
    /// Closed geodesics of the subgroup generated by the given ambient words,
    /// using every subgroup class of length at most `sample_depth`.
    SubgroupCore {
        generators: Vec<Word>,
        #[serde(default = "default_sample_depth")]
        sample_depth: usize,
    },
    Flipped {
        inner: Box<InvariantSetSpec>,
    },
    Union {
        parts: Vec<InvariantSetSpec>,
    },
}

impl InvariantSetSpec {
    pub fn closed_orbit(letters: &[i32]) -> Self {
        Self::ClosedOrbit { word: Word(letters.to_vec()) }
    }

    pub fn flipped(self) -> Self {
        Self::Flipped { inner: Box::new(self) }
    }

    pub fn validate(&self, group: &SchottkyGroup) -> Result<()> {
        match self {
            Self::ClosedOrbit { word } => {
                group.validate_word(word).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                if word.is_empty() || !word.is_cyclically_reduced() {
                    return Err(Error::InvalidSpec(format!("orbit word {word} is not cyclically reduced")));
                }
                Ok(())
            }
            Self::SubgroupCore { generators, sample_depth } => {
                if generators.is_empty() {
                    return Err(Error::InvalidSpec("subgroup has no generators".into()));
                }
                if *sample_depth < 1 {
                    return Err(Error::InvalidSpec("sample_depth must be at least 1".into()));
                }
                for w in generators {
                    group.validate_word(w).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                    if w.is_empty() {
                        return Err(Error::InvalidSpec("subgroup generator is the identity".into()));
                    }
                }
                Ok(())
            }
            Self::Flipped { inner } => inner.validate(group),
            Self::Union { parts } => {
                if parts.is_empty() {
                    return Err(Error::InvalidSpec("empty union".into()));
                }
                parts.iter().try_for_each(|p| p.validate(group))
            }
        }
    }
}

/// Samples of one or more closed orbits. Every sample is reduced to the
/// fundamental domain; `lines` holds the lifted axis through each sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSet {
    pub samples: Vec<TangentVector>,
    pub meta: InvariantSetSpec,
    /// Length of each source orbit.
    pub periods: Vec<f64>,
    /// Start of each orbit's samples in `samples`.
    pub offsets: Vec<usize>,
    pub lines: Vec<GeodesicLine>,
}

impl SampledSet {
    pub fn orbit_count(&self) -> usize {
        self.periods.len()
    }

    pub fn orbit_samples(&self, i: usize) -> &[TangentVector] {
        let end = self.offsets.get(i + 1).copied().unwrap_or(self.samples.len());
        &self.samples[self.offsets[i]..end]
    }

    fn concat(meta: InvariantSetSpec, parts: Vec<SampledSet>) -> Self {
        let mut out = SampledSet { samples: vec![], meta, periods: vec![], offsets: vec![], lines: vec![] };
        for p in parts {
            let base = out.samples.len();
            out.offsets.extend(p.offsets.iter().map(|o| o + base));
            out.samples.extend(p.samples);
            out.periods.extend(p.periods);
            out.lines.extend(p.lines);
        }
        out
    }
}

/// The oriented line traced by `v` under the flow.
fn line_through(v: &TangentVector) -> Result<GeodesicLine> {
    let f = v.frame();
    GeodesicLine::new(f.apply_boundary(BoundaryPoint::Finite(0.0)), f.apply_boundary(BoundaryPoint::Infinity))
}

/// Samples along the axis of a hyperbolic isometry at spacing at most `step`,
/// each reduced to the fundamental domain, with its lifted line. Each sample
/// is the previous reduced one moved by the flow, so coordinates stay
/// bounded however long the axis.
pub(crate) fn axis_samples(
    m: &Isometry,
    group: &SchottkyGroup,
    step: f64,
    cap: usize,
) -> Result<(f64, Vec<TangentVector>, Vec<GeodesicLine>)> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let (ell, axis) = hyperbolic_data(m).map_err(|e| match e {
        Error::AmbiguousClassification(t) => Error::NotAClosedGeodesic(format!("parabolic (trace {t})")),
        other => other,
    })?;
    let n = (ell / step).ceil().max(1.0) as usize;
    let h = ell / n as f64;
    let mut samples = Vec::with_capacity(n);
    let mut lines = Vec::with_capacity(n);
    let mut v = axis.point_at(0.0);
    for _ in 0..n {
        let (r, _, _) = reduce_tangent(&v, group, cap)?;
        samples.push(r);
        lines.push(line_through(&r)?);
        v = geodesic_flow_step(&r, h);
    }
    Ok((ell, samples, lines))
}

pub fn closed_geodesic_from_word(w: &Word, group: &SchottkyGroup, step: f64) -> Result<SampledSet> {
    group.validate_word(w)?;
    if w.is_empty() {
        return Err(Error::NotAClosedGeodesic("identity word".into()));
    }
    let (ell, samples, lines) = axis_samples(&group.matrix_of(w), group, step, DEFAULT_REDUCTION_CAP)?;
    Ok(SampledSet {
        samples,
        meta: InvariantSetSpec::ClosedOrbit { word: w.clone() },
        periods: vec![ell],
        offsets: vec![0],
        lines,
    })
}

/// Ambient words of every subgroup class of length `1..=depth`.
pub fn subgroup_class_words(generators: &[Word], depth: usize) -> Vec<Word> {
    let mut out = Vec::new();
    for n in 1..=depth {
        for (class, _) in cyclic_classes(generators.len(), n) {
            let ambient = class.0.iter().fold(Word::identity(), |acc, &l| {
                let g = &generators[(l.unsigned_abs() - 1) as usize];
                acc.concat(&if l > 0 { g.clone() } else { g.inverse() })
            });
            out.push(ambient);
        }
    }
    out
}

pub fn sample_invariant_set(spec: &InvariantSetSpec, group: &SchottkyGroup, step: f64) -> Result<SampledSet> {
    spec.validate(group)?;
    sample_unchecked(spec, group, step)
}

fn sample_unchecked(spec: &InvariantSetSpec, group: &SchottkyGroup, step: f64) -> Result<SampledSet> {
    match spec {
        InvariantSetSpec::ClosedOrbit { word } => closed_geodesic_from_word(word, group, step),
        InvariantSetSpec::SubgroupCore { generators, sample_depth } => {
            let words = subgroup_class_words(generators, *sample_depth);
            if words.is_empty() {
                return Err(Error::InvalidSpec("subgroup has no closed geodesics".into()));
            }
            let parts = words
                .par_iter()
                .map(|w| {
                    let (ell, samples, lines) = axis_samples(&group.matrix_of(w), group, step, DEFAULT_REDUCTION_CAP)?;
                    Ok(SampledSet { samples, meta: spec.clone(), periods: vec![ell], offsets: vec![0], lines })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampledSet::concat(spec.clone(), parts))
        }
        InvariantSetSpec::Flipped { inner } => {
            let mut s = sample_unchecked(inner, group, step)?;
            s.samples = s.samples.iter().map(flip).collect();
            s.lines = s.lines.iter().map(GeodesicLine::reversed).collect();
            s.meta = spec.clone();
            Ok(s)
        }
        InvariantSetSpec::Union { parts } => {
            let parts = parts.iter().map(|p| sample_unchecked(p, group, step)).collect::<Result<Vec<_>>>()?;
            Ok(SampledSet::concat(spec.clone(), parts))
        }
    }
}

fn boundary_key(x: BoundaryPoint) -> i64 {
    match x {
        BoundaryPoint::Finite(v) => (v * 1e9).round() as i64,
        BoundaryPoint::Infinity => i64::MAX,
    }
}

/// The lifted lines of a sampled set near the fundamental domain, expanded
/// by group words up to `neighbor_depth` and stored in standardized form.
#[derive(Clone, Debug)]
pub struct LineNet {
    standardizers: Vec<Isometry>,
    /// Endpoint interval `[lo, hi]` of each line; `±∞` when an end is at infinity.
    spans: Vec<(f64, f64)>,
    /// Contiguous index ranges of lines inside one Schottky disk (or in no
    /// disk, for `None`).
    buckets: Vec<(Option<Disk>, std::ops::Range<usize>)>,
}

fn span_of(l: &GeodesicLine) -> (f64, f64) {
    match (l.xi_minus, l.xi_plus) {
        (BoundaryPoint::Finite(a), BoundaryPoint::Finite(b)) => (a.min(b), a.max(b)),
        (BoundaryPoint::Finite(a), BoundaryPoint::Infinity) | (BoundaryPoint::Infinity, BoundaryPoint::Finite(a)) => {
            (a, a)
        }
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

/// Lower bound on `sinh d(z, line)`: the line lies in the half-plane beyond
/// the vertical geodesic through its nearer end.
#[inline]
fn outside_gap(z: Complex64, span: (f64, f64)) -> f64 {
    (span.0 - z.re).max(z.re - span.1).max(0.0) / z.im
}

/// `sinh` of the distance from `z` to the half-plane bounded by the
/// geodesic over `disk`, or 0 inside it.
#[inline]
fn disk_gap(z: Complex64, disk: &Disk) -> f64 {
    let dx = z.re - disk.center;
    ((dx * dx + z.im * z.im - disk.radius * disk.radius) / (2.0 * disk.radius * z.im)).max(0.0)
}

impl LineNet {
    pub fn new(set: &SampledSet, group: &SchottkyGroup, neighbor_depth: usize) -> Result<Self> {
        let neighbors: Vec<Isometry> =
            enumerate_reduced_words(group, neighbor_depth)?.iter().map(|w| group.matrix_of(w)).collect();
        let disks: Vec<Disk> = group.disks.iter().flat_map(|p| [p.repelling, p.attracting]).collect();
        let inside = |x: BoundaryPoint, d: &Disk| matches!(x, BoundaryPoint::Finite(v) if (v - d.center).abs() < d.radius);
        let mut seen = BTreeSet::new();
        let mut sorted: Vec<Vec<GeodesicLine>> = vec![Vec::new(); disks.len() + 1];
        for line in &set.lines {
            for u in &neighbors {
                let l = line.image(u);
                if seen.insert((boundary_key(l.xi_minus), boundary_key(l.xi_plus))) {
                    let b = disks.iter().position(|d| inside(l.xi_minus, d) && inside(l.xi_plus, d));
                    sorted[b.map_or(0, |j| j + 1)].push(l);
                }
            }
        }
        let mut standardizers = Vec::new();
        let mut spans = Vec::new();
        let mut buckets = Vec::new();
        for (j, lines) in sorted.into_iter().enumerate() {
            if lines.is_empty() {
                continue;
            }
            let from = standardizers.len();
            standardizers.extend(lines.iter().map(GeodesicLine::standardizer));
            spans.extend(lines.iter().map(span_of));
            buckets.push((if j == 0 { None } else { Some(disks[j - 1]) }, from..standardizers.len()));
        }
        if standardizers.is_empty() {
            return Err(Error::InvalidSpec("invariant set has no samples".into()));
        }
        Ok(Self { standardizers, spans, buckets })
    }

    pub fn len(&self) -> usize {
        self.standardizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.standardizers.is_empty()
    }

    /// `cosh` of the distance from a window to the nearest line.
    pub(crate) fn cosh_dist(&self, ends: &WindowEnds) -> f64 {
        self.cosh_dist_seeded(ends, &mut 0)
    }

    /// Like [`Self::cosh_dist`], trying line `*seed` first and leaving the
    /// argmin in `*seed`. Pruning only skips lines that cannot improve the
    /// minimum, so the value does not depend on the seed.
    pub(crate) fn cosh_dist_seeded(&self, ends: &WindowEnds, seed: &mut usize) -> f64 {
        let first = (*seed).min(self.standardizers.len() - 1);
        let s0 = &self.standardizers[first];
        let mut best = line_window_cosh(s0.act(ends.start), s0.act(ends.end));
        let mut best_sinh = (best * best - 1.0).max(0.0).sqrt();
        let mut arg = first;
        for (disk, range) in &self.buckets {
            if let Some(d) = disk {
                if disk_gap(ends.start, d) >= best_sinh || disk_gap(ends.end, d) >= best_sinh {
                    continue;
                }
            }
            for j in range.clone() {
                let span = self.spans[j];
                if j == first || outside_gap(ends.start, span) >= best_sinh || outside_gap(ends.end, span) >= best_sinh
                {
                    continue;
                }
                let s = &self.standardizers[j];
                // cosh d(p, iℝ₊) = |p| / Im p, compared squared
                let best_sq = best * best;
                let p = s.act(ends.start);
                if p.norm_sqr() >= best_sq * p.im * p.im {
                    continue;
                }
                let q = s.act(ends.end);
                if q.norm_sqr() >= best_sq * q.im * q.im {
                    continue;
                }
                let c = line_window_cosh(p, q);
                if c < best {
                    best = c;
                    best_sinh = (c * c - 1.0).max(0.0).sqrt();
                    arg = j;
                }
            }
        }
        *seed = arg;
        best
    }

    pub(crate) fn dist(&self, ends: &WindowEnds) -> f64 {
        acosh_clamped(self.cosh_dist(ends))
    }
}

/// Distance in the quotient bundle from `v` to a sampled invariant set,
/// using the unit window centred at each vector. Lifts of the set's orbits
/// are taken along exact axes, so the value is exact up to the neighbor
/// search.
pub fn dist_to_invariant_set(
    v: &TangentVector,
    set: &SampledSet,
    group: &SchottkyGroup,
    neighbor_depth: usize,
) -> Result<f64> {
    let net = LineNet::new(set, group, neighbor_depth)?;
    let (r, _, _) = reduce_tangent(v, group, DEFAULT_REDUCTION_CAP)?;
    Ok(net.dist(&WindowEnds::centred(&r)))
}

/// Smallest distance from a sample of `a` to the set `b`.
pub fn set_separation(a: &SampledSet, b: &SampledSet, group: &SchottkyGroup, neighbor_depth: usize) -> Result<f64> {
    let net = LineNet::new(b, group, neighbor_depth)?;
    let mut seed = 0;
    let best = a
        .samples
        .iter()
        .map(|v| net.cosh_dist_seeded(&WindowEnds::centred(v), &mut seed))
        .fold(f64::INFINITY, f64::min);
    Ok(acosh_clamped(best))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTerm {
    pub delta: f64,
    pub potential: PotentialSpec,
}

/// Potentials built from distances to invariant sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `1 / (1 + d(x, K))`
    Bump { target: InvariantSetSpec },
    /// `d(x, K) / (1 + d(x, K))`
    Tail { target: InvariantSetSpec },
    WeightedSum { terms: Vec<WeightedTerm> },
    Scaled { c: f64, inner: Box<PotentialSpec> },
    Constant { value: f64 },
}

impl PotentialSpec {
    pub fn bump(target: InvariantSetSpec) -> Self {
        Self::Bump { target }
    }

    pub fn tail(target: InvariantSetSpec) -> Self {
        Self::Tail { target }
    }

    pub fn validate(&self, group: &SchottkyGroup) -> Result<()> {
        match self {
            Self::Bump { target } | Self::Tail { target } => target.validate(group),
            Self::WeightedSum { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidSpec("weighted sum has no terms".into()));
                }
                for (k, t) in terms.iter().enumerate() {
                    if !(t.delta > 0.0) || !t.delta.is_finite() {
                        return Err(Error::InvalidSpec(format!("weight {k} must be positive")));
                    }
                    if k > 0 && t.delta > terms[k - 1].delta / 2.0 {
                        return Err(Error::InvalidSpec(format!(
                            "weight {k} = {} exceeds half of the previous weight {}",
                            t.delta,
                            terms[k - 1].delta
                        )));
                    }
                    t.potential.validate(group)?;
                }
                Ok(())
            }
            Self::Scaled { c, inner } => {
                if !c.is_finite() {
                    return Err(Error::InvalidSpec("scale must be finite".into()));
                }
                inner.validate(group)
            }
            Self::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec("constant must be finite".into()))
                }
            }
        }
    }

    /// `true` when the potential is the same constant everywhere.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Self::Constant { value } => Some(*value),
            Self::Scaled { c, inner } => inner.constant_value().map(|v| c * v),
            Self::WeightedSum { terms } => terms
                .iter()
                .map(|t| t.potential.constant_value().map(|v| t.delta * v))
                .sum::<Option<f64>>(),
            _ => None,
        }
    }
}

/// Upper bound on `sup|φ| + Lip(φ)`.
pub fn lipschitz_bound(spec: &PotentialSpec) -> f64 {
    match spec {
        PotentialSpec::Bump { .. } | PotentialSpec::Tail { .. } => 2.0,
        PotentialSpec::WeightedSum { terms } => terms.iter().map(|t| t.delta * lipschitz_bound(&t.potential)).sum(),
        PotentialSpec::Scaled { c, inner } => c.abs() * lipschitz_bound(inner),
        PotentialSpec::Constant { value } => value.abs(),
    }
}

/// Sampling and search parameters for distance evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingKnobs {
    pub step: f64,
    pub neighbor_depth: usize,
    pub reduction_cap: usize,
}

impl Default for SamplingKnobs {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, neighbor_depth: DEFAULT_NEIGHBOR_DEPTH, reduction_cap: DEFAULT_REDUCTION_CAP }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Bump(Arc<LineNet>, usize),
    Tail(Arc<LineNet>, usize),
    Sum(Vec<(f64, Node)>),
    Scaled(f64, Box<Node>),
    Constant(f64),
}

impl Node {
    /// `seeds[slot]` carries each net's last nearest line between calls.
    fn eval(&self, ends: &WindowEnds, seeds: &mut [usize]) -> f64 {
        match self {
            Node::Bump(net, slot) => 1.0 / (1.0 + acosh_clamped(net.cosh_dist_seeded(ends, &mut seeds[*slot]))),
            Node::Tail(net, slot) => {
                let d = acosh_clamped(net.cosh_dist_seeded(ends, &mut seeds[*slot]));
                d / (1.0 + d)
            }
            Node::Sum(terms) => compensated_sum(terms.iter().map(|(w, n)| w * n.eval(ends, seeds))),
            Node::Scaled(c, inner) => c * inner.eval(ends, seeds),
            Node::Constant(v) => *v,
        }
    }
}

/// Builds line nets once per distinct target.
struct NetCache<'a> {
    group: &'a SchottkyGroup,
    knobs: SamplingKnobs,
    nets: HashMap<String, Arc<LineNet>>,
    slots: usize,
}

impl<'a> NetCache<'a> {
    fn get(&mut self, target: &InvariantSetSpec) -> Result<Arc<LineNet>> {
        let key = serde_json::to_string(target).map_err(|e| Error::Internal(e.to_string()))?;
        if let Some(n) = self.nets.get(&key) {
            return Ok(n.clone());
        }
        let set = sample_invariant_set(target, self.group, self.knobs.step)?;
        let net = Arc::new(LineNet::new(&set, self.group, self.knobs.neighbor_depth)?);
        self.nets.insert(key, net.clone());
        Ok(net)
    }

    fn next_slot(&mut self) -> usize {
        self.slots += 1;
        self.slots - 1
    }

    fn node(&mut self, spec: &PotentialSpec) -> Result<Node> {
        Ok(match spec {
            PotentialSpec::Bump { target } => Node::Bump(self.get(target)?, self.next_slot()),
            PotentialSpec::Tail { target } => Node::Tail(self.get(target)?, self.next_slot()),
            PotentialSpec::WeightedSum { terms } => Node::Sum(
                terms.iter().map(|t| Ok((t.delta, self.node(&t.potential)?))).collect::<Result<Vec<_>>>()?,
            ),
            PotentialSpec::Scaled { c, inner } => Node::Scaled(*c, Box::new(self.node(inner)?)),
            PotentialSpec::Constant { value } => Node::Constant(*value),
        })
    }
}

/// A potential ready for evaluation on a fixed group.
#[derive(Clone, Debug)]
pub struct Potential {
    pub spec: PotentialSpec,
    group: SchottkyGroup,
    cap: usize,
    node: Node,
    slots: usize,
}

impl Potential {
    pub fn new(spec: &PotentialSpec, group: &SchottkyGroup, knobs: SamplingKnobs) -> Result<Self> {
        spec.validate(group)?;
        let mut cache = NetCache { group, knobs, nets: HashMap::new(), slots: 0 };
        let node = cache.node(spec)?;
        Ok(Self { spec: spec.clone(), group: group.clone(), cap: knobs.reduction_cap, node, slots: cache.slots })
    }

    pub fn eval(&self, v: &TangentVector) -> Result<f64> {
        let (r, _, _) = reduce_tangent(v, &self.group, self.cap)?;
        Ok(self.eval_reduced(&r))
    }

    /// Evaluation at a vector already in the fundamental domain.
    pub fn eval_reduced(&self, v: &TangentVector) -> f64 {
        self.node.eval(&WindowEnds::centred(v), &mut vec![0; self.slots])
    }

    /// Values on a sequence of windows, typically consecutive samples of one
    /// orbit.
    pub(crate) fn eval_windows(&self, windows: &[WindowEnds]) -> Vec<f64> {
        let mut seeds = vec![0; self.slots];
        windows.iter().map(|e| self.node.eval(e, &mut seeds)).collect()
    }
}

pub fn eval_potential(spec: &PotentialSpec, v: &TangentVector, group: &SchottkyGroup) -> Result<f64> {
    Potential::new(spec, group, SamplingKnobs::default())?.eval(v)
}

/// Distance shell `{x : min_radius ≤ d(x, K) < radius}`. Without a target
/// the region is the whole space; a missing radius means no upper limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub id: String,
    #[serde(default)]
    pub target: Option<InvariantSetSpec>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub min_radius: Option<f64>,
}

impl RegionSpec {
    pub fn neighborhood(id: &str, target: InvariantSetSpec, radius: f64) -> Self {
        Self { id: id.into(), target: Some(target), radius: Some(radius), min_radius: None }
    }

    pub fn whole_space(id: &str) -> Self {
        Self { id: id.into(), target: None, radius: None, min_radius: None }
    }
}

#[derive(Clone, Debug)]
pub struct Region {
    pub spec: RegionSpec,
    net: Option<Arc<LineNet>>,
    cosh_lo: f64,
    cosh_hi: f64,
}

impl Region {
    pub fn new(spec: &RegionSpec, group: &SchottkyGroup, knobs: SamplingKnobs) -> Result<Self> {
        let lo = spec.min_radius.unwrap_or(0.0);
        let hi = spec.radius.unwrap_or(f64::INFINITY);
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(Error::InvalidSpec(format!("region {} needs 0 ≤ min_radius < radius", spec.id)));
        }
        let net = match &spec.target {
            Some(t) if lo > 0.0 || hi.is_finite() => {
                let mut cache = NetCache { group, knobs, nets: HashMap::new(), slots: 0 };
                Some(cache.get(t)?)
            }
            _ => None,
        };
        let cosh_lo = if lo > 0.0 { lo.cosh() } else { f64::NEG_INFINITY };
        Ok(Self { spec: spec.clone(), net, cosh_lo, cosh_hi: hi.cosh() })
    }

    fn contains_seeded(&self, ends: &WindowEnds, seed: &mut usize) -> bool {
        match &self.net {
            None => true,
            Some(net) => {
                let c = net.cosh_dist_seeded(ends, seed);
                c >= self.cosh_lo && c < self.cosh_hi
            }
        }
    }

    /// Number of windows of the sequence lying in the region.
    pub(crate) fn count_inside(&self, windows: &[WindowEnds]) -> usize {
        let mut seed = 0;
        windows.iter().filter(|e| self.contains_seeded(e, &mut seed)).count()
    }

    pub fn contains_reduced(&self, v: &TangentVector) -> bool {
        self.contains_seeded(&WindowEnds::centred(v), &mut 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffResult {
    pub integral: f64,
    pub average: f64,
}

/// Periodic trapezoid rule over one period of equally spaced samples.
pub(crate) fn periodic_quadrature(period: f64, values: impl IntoIterator<Item = f64>) -> Result<BirkhoffResult> {
    let vals: Vec<f64> = values.into_iter().collect();
    if vals.len() < 4 {
        return Err(Error::QuadratureResolution(vals.len()));
    }
    let average = compensated_sum(vals.iter().copied()) / vals.len() as f64;
    Ok(BirkhoffResult { integral: average * period, average })
}

pub fn birkhoff_integral(potential: &Potential, orbit: &SampledSet) -> Result<BirkhoffResult> {
    if orbit.orbit_count() != 1 {
        return Err(Error::InvalidInput(format!("expected one orbit, got {}", orbit.orbit_count())));
    }
    if let Some(c) = potential.spec.constant_value() {
        let ell = orbit.periods[0];
        if orbit.samples.len() < 4 {
            return Err(Error::QuadratureResolution(orbit.samples.len()));
        }
        return Ok(BirkhoffResult { integral: c * ell, average: c });
    }
    periodic_quadrature(orbit.periods[0], orbit.samples.iter().map(|v| potential.eval_reduced(v)))
}
