//! Ping-pong (Schottky) groups, reduced words, orbit shells and critical
//! exponents.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cosh_dist, HPoint, Isometry, IsometryKind, TangentVector};
use crate::sum::{compensated_sum, log_sum_exp};

/// Longest word the enumerators accept.
pub const MAX_WORD_LEN: usize = 16;
/// Largest number of words a single enumeration may produce.
pub const MAX_TOTAL_WORDS: u64 = 100_000_000;
/// Default step cap for fundamental-domain reduction.
pub const DEFAULT_REDUCTION_CAP: usize = 256;

/// Reduced word in signed generator indices: `+i` is `g_i`, `−i` its inverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Word(pub Vec<i32>);

impl Word {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn new(letters: Vec<i32>) -> Result<Self> {
        let w = Self(letters);
        if w.0.contains(&0) {
            return Err(Error::InvalidInput("letter 0 is not a generator".into()));
        }
        if !w.is_reduced() {
            return Err(Error::InvalidInput(format!("word {w} is not reduced")));
        }
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[i32] {
        &self.0
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|p| p[0] != -p[1])
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced() && (self.0.len() < 2 || self.0[0] != -self.0[self.0.len() - 1])
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.iter().rev().map(|l| -l).collect())
    }

    pub fn rotate(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        if !v.is_empty() {
            let k = k % v.len();
            v.rotate_left(k);
        }
        Self(v)
    }

    /// Concatenation followed by free reduction.
    pub fn concat(&self, rhs: &Self) -> Self {
        let mut out = self.0.clone();
        for &l in &rhs.0 {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self(out)
    }

    pub fn power(&self, n: usize) -> Self {
        let mut out = Self::identity();
        for _ in 0..n {
            out = out.concat(self);
        }
        out
    }

    /// Smallest period `p` with `w` equal to its rotation by `p`; this is the
    /// number of distinct cyclic rotations.
    pub fn primitive_period(&self) -> usize {
        let n = self.0.len();
        (1..=n).find(|&p| n.is_multiple_of(p) && (0..n).all(|i| self.0[i] == self.0[(i + p) % n])).unwrap_or(n)
    }

    /// Lexicographically least rotation under [`letter_key`].
    pub fn canonical_rotation(&self) -> Self {
        let n = self.0.len();
        (0..n.max(1))
            .map(|k| self.rotate(k))
            .min_by(compare_words)
            .unwrap_or_default()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|&l| if l > 0 { format!("g{l}") } else { format!("g{}^-1", -l) })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

/// Letter order `g1 < g1⁻¹ < g2 < g2⁻¹ < …` used for canonical forms and ties.
#[inline]
pub fn letter_key(l: i32) -> i32 {
    2 * (l.abs() - 1) + i32::from(l < 0)
}

pub fn compare_words(a: &Word, b: &Word) -> std::cmp::Ordering {
    a.0.iter()
        .map(|&l| letter_key(l))
        .cmp(b.0.iter().map(|&l| letter_key(l)))
}

/// Closed Euclidean disk centred on the real line. Its trace in the upper
/// half-plane is the half-disk bounded by a geodesic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    pub center: f64,
    pub radius: f64,
}

impl Disk {
    #[inline]
    pub fn contains_open(&self, z: Complex64) -> bool {
        (z.re - self.center).powi(2) + z.im * z.im < self.radius * self.radius
    }

    pub fn contains_boundary(&self, x: f64, tol: f64) -> bool {
        (x - self.center).abs() <= self.radius * (1.0 + tol) + tol
    }

    /// Image under `g`, assuming the pole of `g` lies outside the disk.
    pub fn image(&self, g: &Isometry) -> Result<Disk> {
        let lo = self.center - self.radius;
        let hi = self.center + self.radius;
        let pole = if g.c != 0.0 { -g.d / g.c } else { f64::INFINITY };
        if pole >= lo && pole <= hi {
            return Err(Error::InvalidConfig("disk image is unbounded".into()));
        }
        let f = |x: f64| (g.a * x + g.b) / (g.c * x + g.d);
        let (x1, x2) = (f(lo), f(hi));
        Ok(Disk { center: 0.5 * (x1 + x2), radius: 0.5 * (x1 - x2).abs() })
    }

    /// Hyperbolic distance between the bounding geodesics of two disjoint disks.
    pub fn boundary_distance(&self, other: &Disk) -> f64 {
        let dc = self.center - other.center;
        let c = (dc * dc - self.radius.powi(2) - other.radius.powi(2)) / (2.0 * self.radius * other.radius);
        c.max(1.0).acosh()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskPair {
    pub repelling: Disk,
    pub attracting: Disk,
}

impl DiskPair {
    /// The isometry mapping the boundary of `repelling` onto the boundary of
    /// `attracting`, exterior to interior: `z ↦ b − r_a r_b / (z − a)`.
    pub fn pairing(&self) -> Result<Isometry> {
        let (a, ra) = (self.repelling.center, self.repelling.radius);
        let (b, rb) = (self.attracting.center, self.attracting.radius);
        if ra <= 0.0 || rb <= 0.0 {
            return Err(Error::InvalidConfig("disk radius must be positive".into()));
        }
        Isometry::new(b, -(a * b + ra * rb), 1.0, -a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchottkyGroup {
    pub generators: Vec<Isometry>,
    pub disks: Vec<DiskPair>,
    pub basepoint: HPoint,
    pub extended: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PingPongReport {
    pub ok: bool,
    pub violations: Vec<String>,
}

impl SchottkyGroup {
    /// Generators paired exactly with their disks, which makes the
    /// complement of the open disks a fundamental domain.
    pub fn from_disk_pairs(disks: Vec<DiskPair>, basepoint: HPoint, extended: bool) -> Result<Self> {
        let generators = disks.iter().map(DiskPair::pairing).collect::<Result<Vec<_>>>()?;
        Self::new(generators, disks, basepoint, extended)
    }

    pub fn new(generators: Vec<Isometry>, disks: Vec<DiskPair>, basepoint: HPoint, extended: bool) -> Result<Self> {
        if generators.len() != disks.len() {
            return Err(Error::InvalidConfig(format!(
                "{} generators but {} disk pairs",
                generators.len(),
                disks.len()
            )));
        }
        let generators = generators.into_iter().map(|g| g.normalized()).collect::<Result<Vec<_>>>()?;
        let basepoint = HPoint::new(basepoint.x, basepoint.y)?;
        Ok(Self { generators, disks, basepoint, extended })
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    #[inline]
    pub fn letter(&self, l: i32) -> Isometry {
        let g = self.generators[(l.unsigned_abs() - 1) as usize];
        if l > 0 { g } else { g.inverse() }
    }

    /// Disk containing the attracting fixed point of the letter.
    #[inline]
    pub fn attracting_disk(&self, l: i32) -> Disk {
        let pair = &self.disks[(l.unsigned_abs() - 1) as usize];
        if l > 0 { pair.attracting } else { pair.repelling }
    }

    pub fn matrix_of(&self, w: &Word) -> Isometry {
        w.0.iter().fold(Isometry::IDENTITY, |acc, &l| acc.compose(&self.letter(l)))
    }

    pub fn with_basepoint(&self, basepoint: HPoint) -> Result<Self> {
        Self::new(self.generators.clone(), self.disks.clone(), basepoint, self.extended)
    }

    fn check_letters(&self, w: &Word) -> Result<()> {
        let k = self.rank() as i32;
        if w.0.iter().any(|&l| l == 0 || l.abs() > k) {
            return Err(Error::InvalidInput(format!("word {w} uses generators outside 1..={k}")));
        }
        Ok(())
    }

    pub fn validate_word(&self, w: &Word) -> Result<()> {
        self.check_letters(w)?;
        if !w.is_reduced() {
            return Err(Error::InvalidInput(format!("word {w} is not reduced")));
        }
        Ok(())
    }

    /// Minimum hyperbolic distance between distinct disk boundaries; each
    /// letter after the first moves the orbit point across one such gap.
    pub fn displacement_rate_bound(&self) -> f64 {
        let all: Vec<Disk> = self.disks.iter().flat_map(|p| [p.repelling, p.attracting]).collect();
        let mut best = f64::INFINITY;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                best = best.min(all[i].boundary_distance(&all[j]));
            }
        }
        best
    }
}

/// Checks disk disjointness and the ping-pong mapping condition at
/// `samples` boundary points on each side of each disk.
pub fn check_ping_pong(group: &SchottkyGroup, samples: usize) -> Result<PingPongReport> {
    if group.rank() < 2 {
        return Err(Error::InvalidConfig("a non-elementary group needs at least 2 generators".into()));
    }
    if group.generators.len() != group.disks.len() {
        return Err(Error::InvalidConfig("generator and disk counts differ".into()));
    }
    let mut violations = Vec::new();
    let mut disks = Vec::new();
    for (i, pair) in group.disks.iter().enumerate() {
        for (tag, d) in [("-", pair.repelling), ("+", pair.attracting)] {
            if !(d.radius > 0.0) || !d.radius.is_finite() || !d.center.is_finite() {
                return Err(Error::InvalidConfig(format!("degenerate disk C{}{tag}", i + 1)));
            }
            disks.push((i, tag, d));
        }
    }
    const TANGENCY: f64 = 1e-12;
    for a in 0..disks.len() {
        for b in a + 1..disks.len() {
            let (i, ti, di) = disks[a];
            let (j, tj, dj) = disks[b];
            let gap = (di.center - dj.center).abs() - di.radius - dj.radius;
            let scale = di.radius + dj.radius;
            let tangent_ok = group.extended
                && i == j
                && gap.abs() <= TANGENCY * scale
                && classify_kind(&group.generators[i]) == Some(IsometryKind::Parabolic);
            if gap <= 0.0 && !tangent_ok {
                violations.push(format!("disks C{}{ti} and C{}{tj} are not disjoint (gap {gap:e})", i + 1, j + 1));
            }
        }
    }
    let parabolic = group
        .generators
        .iter()
        .filter(|g| classify_kind(g) == Some(IsometryKind::Parabolic))
        .count();
    if parabolic > 0 && !group.extended {
        violations.push("parabolic generator requires extended mode".into());
    }
    if parabolic > 1 {
        violations.push("extended mode admits at most one parabolic generator".into());
    }
    for (i, g) in group.generators.iter().enumerate() {
        let pair = group.disks[i];
        for (map, from, to, label) in [
            (*g, pair.repelling, pair.attracting, format!("g{}", i + 1)),
            (g.inverse(), pair.attracting, pair.repelling, format!("g{}^-1", i + 1)),
        ] {
            for x in complement_samples(&from, samples) {
                let image = match x {
                    Some(x) => {
                        let den = map.c * x + map.d;
                        if den == 0.0 { None } else { Some((map.a * x + map.b) / den) }
                    }
                    None => (map.c != 0.0).then(|| map.a / map.c),
                };
                let inside = image.is_some_and(|y| to.contains_boundary(y, 1e-9));
                if !inside {
                    let xs = x.map_or("∞".to_string(), |x| format!("{x}"));
                    violations.push(format!("{label} maps boundary point {xs} outside its target disk"));
                }
            }
        }
    }
    Ok(PingPongReport { ok: violations.is_empty(), violations })
}

fn classify_kind(g: &Isometry) -> Option<IsometryKind> {
    crate::geometry::classify_isometry(g).ok().map(|c| c.kind)
}

/// Boundary points outside the open disk: `c ± r/s` for `s ∈ (0, 1]`, plus ∞.
fn complement_samples(d: &Disk, samples: usize) -> Vec<Option<f64>> {
    let mut out = vec![None];
    let n = samples.max(1);
    for j in 1..=n {
        let s = j as f64 / n as f64;
        out.push(Some(d.center + d.radius / s));
        out.push(Some(d.center - d.radius / s));
    }
    out
}

fn total_words(k: usize, max_len: usize) -> u64 {
    let mut total: u64 = 1;
    let mut shell: u64 = 2 * k as u64;
    for _ in 1..=max_len {
        total = total.saturating_add(shell);
        shell = shell.saturating_mul(2 * k as u64 - 1);
    }
    total
}

fn check_caps(k: usize, max_len: usize) -> Result<()> {
    if max_len > MAX_WORD_LEN {
        return Err(Error::ResourceLimit(format!("word length {max_len} exceeds cap {MAX_WORD_LEN}")));
    }
    let total = total_words(k, max_len);
    if total > MAX_TOTAL_WORDS {
        return Err(Error::ResourceLimit(format!("{total} words exceed cap {MAX_TOTAL_WORDS}")));
    }
    Ok(())
}

/// Number of reduced words of length exactly `m` in a free group of rank `k`.
pub fn shell_size(k: usize, m: usize) -> u64 {
    if m == 0 {
        1
    } else {
        2 * k as u64 * (2 * k as u64 - 1).pow(m as u32 - 1)
    }
}

fn all_letters(k: usize) -> Vec<i32> {
    (1..=k as i32).flat_map(|i| [i, -i]).collect()
}

/// All reduced words of length at most `max_len`, shell by shell, each shell
/// in prefix-tree order.
pub fn enumerate_reduced_words(group: &SchottkyGroup, max_len: usize) -> Result<Vec<Word>> {
    reduced_words_of_rank(group.rank(), max_len)
}

pub fn reduced_words_of_rank(k: usize, max_len: usize) -> Result<Vec<Word>> {
    check_caps(k, max_len)?;
    let letters = all_letters(k);
    let mut out = vec![Word::identity()];
    let mut shell = vec![Word::identity()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(shell.len() * letters.len());
        for w in &shell {
            for &l in &letters {
                if w.0.last() != Some(&-l) {
                    let mut v = w.0.clone();
                    v.push(l);
                    next.push(Word(v));
                }
            }
        }
        out.extend(next.iter().cloned());
        shell = next;
    }
    Ok(out)
}

/// Cyclically reduced words of length `n` over `k` generators, up to
/// rotation: canonical (least) representative and number of distinct
/// rotations. Ordered by the canonical word.
pub fn cyclic_classes(k: usize, n: usize) -> Vec<(Word, usize)> {
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let letters = all_letters(k);
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(n);
    class_walk(&letters, n, &mut buf, &mut out);
    out
}

fn class_walk(letters: &[i32], n: usize, buf: &mut Vec<i32>, out: &mut Vec<(Word, usize)>) {
    if buf.len() == n {
        let w = Word(buf.clone());
        if w.is_cyclically_reduced() && w.canonical_rotation() == w {
            let p = w.primitive_period();
            out.push((w, p));
        }
        return;
    }
    // letters are visited in canonical order, so output is sorted
    let mut sorted = letters.to_vec();
    sorted.sort_by_key(|&l| letter_key(l));
    for l in sorted {
        if buf.last() == Some(&-l) {
            continue;
        }
        // a canonical word starts with its least letter
        if !buf.is_empty() && letter_key(l) < letter_key(buf[0]) {
            continue;
        }
        buf.push(l);
        class_walk(letters, n, buf, out);
        buf.pop();
    }
}

/// Number of cyclically reduced words of length `n` over `k` generators.
pub fn cyclically_reduced_count(k: usize, n: usize) -> u64 {
    let q = 2 * k as i64 - 1;
    let extra = if n.is_multiple_of(2) { 2 * (k as i64 - 1) } else { 0 };
    (q.pow(n as u32) + 1 + extra) as u64
}

/// Displacements `d(o, w·o)` for every reduced word, grouped by length.
/// Computed in parallel over first letters and concatenated in a fixed order.
pub fn shell_displacements(group: &SchottkyGroup, max_len: usize) -> Result<Vec<Vec<f64>>> {
    shells_for(&group.generators, group.basepoint, max_len)
}

fn shells_for(generators: &[Isometry], basepoint: HPoint, max_len: usize) -> Result<Vec<Vec<f64>>> {
    check_caps(generators.len(), max_len)?;
    // conjugate so the basepoint sits at i; then cosh d(i, M i) = |M|²/2
    let to_o = Isometry::translation(basepoint.x).compose(&Isometry::dilation(basepoint.y.ln()));
    let from_o = to_o.inverse();
    let letters = all_letters(generators.len());
    let letter = |l: i32| {
        let g = generators[(l.unsigned_abs() - 1) as usize];
        if l > 0 { g } else { g.inverse() }
    };
    let conj: Vec<Isometry> = letters.iter().map(|&l| from_o.compose(&letter(l)).compose(&to_o)).collect();
    let per_first: Vec<Vec<Vec<f64>>> = (0..letters.len())
        .into_par_iter()
        .map(|first| {
            let mut shells = vec![Vec::new(); max_len + 1];
            if max_len >= 1 {
                walk(&letters, &conj, &conj[first], first, 1, max_len, &mut shells);
            }
            shells
        })
        .collect();
    let mut shells = vec![Vec::new(); max_len + 1];
    shells[0].push(0.0);
    for part in per_first {
        for (m, v) in part.into_iter().enumerate() {
            shells[m].extend(v);
        }
    }
    Ok(shells)
}

/// `d(i, M·i)` from the Frobenius norm, stable for long words.
#[inline]
pub(crate) fn displacement_at_i(m: &Isometry) -> f64 {
    let f2 = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
    // acosh(f2/2) = log(f2/2 + sqrt((f2/2)² − 1)), with f2/2 − 1 formed as a sum of squares
    let excess = 0.5 * ((m.a - m.d).powi(2) + (m.b + m.c).powi(2));
    let half = 0.5 * f2;
    if half > 1e8 {
        half.ln() + (1.0 + (1.0 - 1.0 / (half * half)).sqrt()).ln()
    } else {
        (excess + (excess * (excess + 2.0)).sqrt()).ln_1p()
    }
}

fn walk(
    letters: &[i32],
    conj: &[Isometry],
    prefix: &Isometry,
    last: usize,
    depth: usize,
    max_len: usize,
    shells: &mut [Vec<f64>],
) {
    shells[depth].push(displacement_at_i(prefix));
    if depth == max_len {
        return;
    }
    for (j, &l) in letters.iter().enumerate() {
        if l != -letters[last] {
            walk(letters, conj, &prefix.compose(&conj[j]), j, depth + 1, max_len, shells);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareShellSums {
    pub s: f64,
    /// `S_m(s)` for `m = 0..=max_len`.
    pub shells: Vec<f64>,
    pub partial_sum: f64,
}

pub fn poincare_shell_sums(group: &SchottkyGroup, s: f64, max_len: usize) -> Result<PoincareShellSums> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("s must be non-negative, got {s}")));
    }
    let disp = shell_displacements(group, max_len)?;
    let shells: Vec<f64> = disp.iter().map(|d| compensated_sum(d.iter().map(|x| (-s * x).exp()))).collect();
    let partial_sum = compensated_sum(shells.iter().copied());
    Ok(PoincareShellSums { s, shells, partial_sum })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellDiagnostic {
    pub m: usize,
    pub shell_size: usize,
    pub root: f64,
    /// `log S_m` at the final estimate.
    pub log_shell_at_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponentEstimate {
    pub delta_hat: f64,
    pub shell_data: Vec<ShellDiagnostic>,
    pub uncertainty: f64,
}

/// How shell sums behave as the word length grows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShellGrowth {
    /// Free groups: `S_m(s) ≈ A λ(s)^m`; the root of `log S_m − log S_{m−1}`,
    /// the Richardson-extrapolated growth rate, estimates δ.
    Exponential,
    /// Cyclic groups: `S_m(s)` decays like a power of `m`; the root of
    /// the local power exponent equal to one, extrapolated in `1/m`, gives
    /// the abscissa of convergence.
    Polynomial,
}

const S_MAX: f64 = 2.0;

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Estimates the abscissa of convergence from orbit shells `d(o, g·o)`.
pub fn estimate_from_shells(shells: &[Vec<f64>], growth: ShellGrowth) -> Result<CriticalExponentEstimate> {
    let max_len = shells.len().saturating_sub(1);
    let first = match growth {
        ShellGrowth::Exponential => 2,
        ShellGrowth::Polynomial => 3,
    };
    if max_len < first + 2 {
        return Err(Error::EstimationFailure(format!("need shells up to length {}, got {max_len}", first + 2)));
    }
    let log_s = |m: usize, s: f64| {
        let v: Vec<f64> = shells[m].iter().map(|d| -s * d).collect();
        log_sum_exp(&v)
    };
    let stat = |m: usize, s: f64| match growth {
        ShellGrowth::Exponential => log_s(m, s) - log_s(m - 1, s),
        ShellGrowth::Polynomial => {
            (log_s(m - 1, s) - log_s(m, s)) / ((m as f64) / (m as f64 - 1.0)).ln() - 1.0
        }
    };
    let mut roots = Vec::new();
    for m in first..=max_len {
        let (f0, f1) = (stat(m, 0.0), stat(m, S_MAX));
        if (f0 > 0.0) == (f1 > 0.0) {
            return Err(Error::EstimationFailure(format!(
                "growth statistic at m={m} does not change sign on [0, {S_MAX}] ({f0:.3e}, {f1:.3e})"
            )));
        }
        roots.push((m, bisect(|s| stat(m, s), 0.0, S_MAX)));
    }
    let extrapolated: Vec<(usize, f64)> = match growth {
        ShellGrowth::Exponential => roots.clone(),
        ShellGrowth::Polynomial => roots
            .windows(2)
            .map(|w| {
                let (m, r) = w[1];
                let (_, r0) = w[0];
                (m, (m as f64 * r - (m as f64 - 1.0) * r0).max(0.0))
            })
            .collect(),
    };
    let top: Vec<f64> = extrapolated.iter().rev().take(3).map(|p| p.1).collect();
    let delta_hat = top[0];
    let spread = top.iter().copied().fold(f64::NEG_INFINITY, f64::max) - top.iter().copied().fold(f64::INFINITY, f64::min);
    let shell_data = roots
        .iter()
        .map(|&(m, root)| ShellDiagnostic {
            m,
            shell_size: shells[m].len(),
            root,
            log_shell_at_estimate: log_s(m, delta_hat),
        })
        .collect();
    Ok(CriticalExponentEstimate { delta_hat, shell_data, uncertainty: spread.max(f64::EPSILON) })
}

/// Critical exponent of a non-elementary ping-pong group from word shells up
/// to `max_len`.
pub fn critical_exponent_estimate(group: &SchottkyGroup, max_len: usize) -> Result<CriticalExponentEstimate> {
    if group.rank() < 2 {
        return Err(Error::InvalidConfig("critical exponent needs a non-elementary group".into()));
    }
    let shells = shell_displacements(group, max_len)?;
    estimate_from_shells(&shells, ShellGrowth::Exponential)
}

/// Critical exponent of the subgroup generated by the given ambient words,
/// enumerated by word length in those generators. The words must generate
/// a free subgroup of rank at least 2.
pub fn subgroup_exponent_estimate(
    group: &SchottkyGroup,
    generators: &[Word],
    max_len: usize,
) -> Result<CriticalExponentEstimate> {
    if generators.len() < 2 {
        return Err(Error::InvalidConfig("critical exponent needs a non-elementary subgroup".into()));
    }
    for w in generators {
        group.validate_word(w)?;
    }
    let mats: Vec<Isometry> = generators.iter().map(|w| group.matrix_of(w)).collect();
    estimate_from_shells(&shells_for(&mats, group.basepoint, max_len)?, ShellGrowth::Exponential)
}

/// The elementary group generated by a single isometry, enumerated by powers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicGroup {
    pub generator: Isometry,
    pub basepoint: HPoint,
}

/// Largest power a cyclic enumeration accepts.
pub const MAX_CYCLIC_POWER: usize = 1 << 16;

impl CyclicGroup {
    pub fn new(generator: Isometry, basepoint: HPoint) -> Result<Self> {
        Ok(Self { generator: generator.normalized()?, basepoint: HPoint::new(basepoint.x, basepoint.y)? })
    }

    /// Shell `m` holds `d(o, h^{±m} o)`.
    pub fn shell_displacements(&self, max_power: usize) -> Result<Vec<Vec<f64>>> {
        if max_power > MAX_CYCLIC_POWER {
            return Err(Error::ResourceLimit(format!("power {max_power} exceeds cap {MAX_CYCLIC_POWER}")));
        }
        let to_o = Isometry::translation(self.basepoint.x).compose(&Isometry::dilation(self.basepoint.y.ln()));
        let h = to_o.inverse().compose(&self.generator).compose(&to_o);
        let h_inv = h.inverse();
        let (mut plus, mut minus) = (Isometry::IDENTITY, Isometry::IDENTITY);
        let mut shells = vec![vec![0.0]];
        for _ in 1..=max_power {
            plus = plus.compose(&h);
            minus = minus.compose(&h_inv);
            let pair = [displacement_at_i(&plus), displacement_at_i(&minus)];
            if pair.iter().any(|d| !d.is_finite()) {
                return Err(Error::NumericOverflow("power of the generator overflows".into()));
            }
            shells.push(pair.to_vec());
        }
        Ok(shells)
    }

    pub fn critical_exponent_estimate(&self, max_power: usize) -> Result<CriticalExponentEstimate> {
        estimate_from_shells(&self.shell_displacements(max_power)?, ShellGrowth::Polynomial)
    }
}

/// `⟨g_first, g_second^{2^n}⟩` inside `group`, with the powered generator's
/// disks shrunk to the images that keep the pairing exact.
pub fn nested_subgroup(group: &SchottkyGroup, first: usize, second: usize, n: u32) -> Result<SchottkyGroup> {
    let k = group.rank();
    if first == 0 || second == 0 || first > k || second > k || first == second {
        return Err(Error::InvalidInput(format!("generator indices {first}, {second} invalid for rank {k}")));
    }
    let base = SchottkyGroup::new(
        vec![group.generators[first - 1], group.generators[second - 1]],
        vec![group.disks[first - 1], group.disks[second - 1]],
        group.basepoint,
        false,
    )?;
    if !check_ping_pong(&base, 16)?.ok {
        return Err(Error::InvalidConfig("base pair fails ping-pong".into()));
    }
    let power = 1i64 << n;
    let h = base.generators[1];
    let pair = base.disks[1];
    let forward = (power - 1) / 2;
    let backward = power - 1 - forward;
    let shrunk = DiskPair {
        attracting: pair.attracting.image(&h.pow(forward))?,
        repelling: pair.repelling.image(&h.pow(-backward))?,
    };
    let out = SchottkyGroup::new(
        vec![base.generators[0], h.pow(power).normalized()?],
        vec![base.disks[0], shrunk],
        group.basepoint,
        false,
    )?;
    let report = check_ping_pong(&out, 16)?;
    if !report.ok {
        return Err(Error::Internal(format!("powered pair fails ping-pong: {:?}", report.violations)));
    }
    Ok(out)
}

/// Generators of `⟨g_first, g_second^{2^n}⟩` written as ambient words.
pub fn nested_generator_words(first: usize, second: usize, n: u32) -> Vec<Word> {
    vec![Word(vec![first as i32]), Word(vec![second as i32; 1usize << n])]
}

/// Moves `z` outside every open disk. Returns the image and the word `w`
/// with `z' = w·z`.
pub fn reduce_to_fundamental_domain(z: HPoint, group: &SchottkyGroup, cap: usize) -> Result<(HPoint, Word)> {
    let (zc, word, _) = reduce_complex(z.to_complex(), group, cap)?;
    Ok((HPoint::from_complex(zc), word))
}

/// Same as [`reduce_to_fundamental_domain`] for a tangent vector; also
/// returns the reducing isometry.
pub fn reduce_tangent(v: &TangentVector, group: &SchottkyGroup, cap: usize) -> Result<(TangentVector, Word, Isometry)> {
    let (_, word, m) = reduce_complex(v.base.to_complex(), group, cap)?;
    Ok((m.apply_tangent(v)?, word, m))
}

pub(crate) fn reduce_complex(z: Complex64, group: &SchottkyGroup, cap: usize) -> Result<(Complex64, Word, Isometry)> {
    let mut z = z;
    let mut applied: Vec<i32> = Vec::new();
    let mut m = Isometry::IDENTITY;
    let k = group.rank() as i32;
    'outer: loop {
        for i in 1..=k {
            for l in [i, -i] {
                if !group.attracting_disk(l).contains_open(z) {
                    continue;
                }
                let step = -l;
                if applied.last() == Some(&l) {
                    continue;
                }
                if applied.len() >= cap {
                    return Err(Error::ReductionLimit(cap));
                }
                let g = group.letter(step);
                z = g.act(z);
                m = g.compose(&m);
                applied.push(step);
                continue 'outer;
            }
        }
        break;
    }
    applied.reverse();
    Ok((z, Word(applied), m))
}

/// Isometries of all reduced words of length at most `depth`.
pub fn neighbor_isometries(group: &SchottkyGroup, depth: usize) -> Result<Vec<Isometry>> {
    Ok(enumerate_reduced_words(group, depth)?.iter().map(|w| group.matrix_of(w)).collect())
}

/// Upper bound for the distance on the quotient surface: compares reduced
/// representatives across translates by words of length `≤ neighbor_depth`.
pub fn quotient_point_dist(z: HPoint, w: HPoint, group: &SchottkyGroup, neighbor_depth: usize) -> Result<f64> {
    let (zr, _) = reduce_to_fundamental_domain(z, group, DEFAULT_REDUCTION_CAP)?;
    let (wr, _) = reduce_to_fundamental_domain(w, group, DEFAULT_REDUCTION_CAP)?;
    let zc = zr.to_complex();
    let wc = wr.to_complex();
    let best = neighbor_isometries(group, neighbor_depth)?
        .iter()
        .map(|u| cosh_dist(zc, u.act(wc)))
        .fold(f64::INFINITY, f64::min);
    Ok(best.max(1.0).acosh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn word_counts() {
        let g = demo::standard_group();
        assert_eq!(enumerate_reduced_words(&g, 1).unwrap().len(), 5);
        assert_eq!(enumerate_reduced_words(&g, 3).unwrap().len(), 53);
        assert_eq!(shell_size(3, 2), 30);
        assert!(matches!(enumerate_reduced_words(&g, 17), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn class_counts() {
        // length 3: 36 reduced words minus the 8 of the form a·b·a⁻¹
        for (n, total) in [(1usize, 4u64), (2, 12), (3, 28)] {
            let cls = cyclic_classes(2, n);
            let weighted: usize = cls.iter().map(|c| c.1).sum();
            assert_eq!(weighted as u64, total);
            assert_eq!(cyclically_reduced_count(2, n), total);
        }
        assert_eq!(cyclic_classes(2, 1).len(), 4);
        for n in 1..=6 {
            let weighted: usize = cyclic_classes(3, n).iter().map(|c| c.1).sum();
            assert_eq!(weighted as u64, cyclically_reduced_count(3, n));
        }
    }

    #[test]
    fn word_helpers() {
        let w = Word::new(vec![1, 2, -1]).unwrap();
        assert!(!w.is_cyclically_reduced());
        assert_eq!(w.inverse(), Word(vec![1, -2, -1]));
        assert!(Word::new(vec![1, -1]).is_err());
        assert_eq!(Word(vec![1, 2, 1, 2]).primitive_period(), 2);
        assert_eq!(Word(vec![2, 1]).canonical_rotation(), Word(vec![1, 2]));
        assert_eq!(Word(vec![1]).concat(&Word(vec![-1, 2])), Word(vec![2]));
    }

    #[test]
    fn ping_pong_checks() {
        let g = demo::standard_group();
        let r = check_ping_pong(&g, 32).unwrap();
        assert!(r.ok, "{:?}", r.violations);

        let mut bad = g.clone();
        bad.disks[1].repelling.center = bad.disks[0].repelling.center + 0.1;
        let r = check_ping_pong(&bad, 8).unwrap();
        assert!(!r.ok);
        assert!(r.violations.iter().any(|v| v.contains("not disjoint")));

        let single = SchottkyGroup::new(vec![g.generators[0]], vec![g.disks[0]], g.basepoint, false).unwrap();
        assert!(matches!(check_ping_pong(&single, 8), Err(Error::InvalidConfig(_))));

        let mut degenerate = g.clone();
        degenerate.disks[0].attracting.radius = 0.0;
        assert!(matches!(check_ping_pong(&degenerate, 8), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn conjugated_diagonal_generators_play_ping_pong() {
        // Axes (−3, −1) and (1, 3), translation length 4.
        let ell: f64 = 4.0;
        let diag = Isometry::new((ell / 2.0).exp(), 0.0, 0.0, (-ell / 2.0).exp()).unwrap();
        let conj = |m: f64, p: f64| {
            // sends 0 ↦ m and ∞ ↦ p
            let c = Isometry::new(p, m, 1.0, 1.0).unwrap();
            c.compose(&diag).compose(&c.inverse())
        };
        let g1 = conj(-3.0, -1.0);
        let g2 = conj(1.0, 3.0);
        // Each disk pair: the isometric circles of g and g⁻¹.
        let pair = |g: &Isometry| {
            let r = 1.0 / g.c.abs();
            DiskPair {
                repelling: Disk { center: -g.d / g.c, radius: r },
                attracting: Disk { center: g.a / g.c, radius: r },
            }
        };
        let group = SchottkyGroup::new(vec![g1, g2], vec![pair(&g1), pair(&g2)], HPoint::origin(), false).unwrap();
        let report = check_ping_pong(&group, 64).unwrap();
        assert!(report.ok, "{:?}", report.violations);
    }

    #[test]
    fn shell_sums_examples() {
        let g = demo::standard_group();
        let p0 = poincare_shell_sums(&g, 0.7, 0).unwrap();
        assert_eq!(p0.partial_sum, 1.0);
        let counts = poincare_shell_sums(&g, 0.0, 2).unwrap();
        assert_eq!(counts.partial_sum, 17.0);
        let a = poincare_shell_sums(&g, 0.3, 4).unwrap().partial_sum;
        let b = poincare_shell_sums(&g, 0.6, 4).unwrap().partial_sum;
        assert!(a >= b);
    }

    #[test]
    fn reduction_examples() {
        let g = demo::standard_group();
        let z0 = HPoint::new(0.05, 2.5).unwrap();
        let (r, w) = reduce_to_fundamental_domain(z0, &g, 64).unwrap();
        assert_eq!(r, z0);
        assert!(w.is_empty());

        let z = g.generators[0].apply(z0).unwrap();
        let (r, w) = reduce_to_fundamental_domain(z, &g, 64).unwrap();
        assert!((r.x - z0.x).abs() < 1e-9 && (r.y - z0.y).abs() < 1e-9);
        assert_eq!(w, Word(vec![-1]));

        // near the attracting fixed point of g1
        let (_, axis) = crate::geometry::hyperbolic_data(&g.generators[0]).unwrap();
        let xi = match axis.xi_plus {
            crate::geometry::BoundaryPoint::Finite(x) => x,
            _ => unreachable!(),
        };
        let near = HPoint::new(xi, 1e-12).unwrap();
        assert!(matches!(reduce_to_fundamental_domain(near, &g, 3), Err(Error::ReductionLimit(3))));
    }

    #[test]
    fn quotient_distance_examples() {
        let g = demo::standard_group();
        let z = HPoint::new(0.1, 2.0).unwrap();
        assert!(quotient_point_dist(z, z, &g, 1).unwrap() < 1e-12);
        let w = g.generators[0].apply(z).unwrap();
        assert!(quotient_point_dist(z, w, &g, 1).unwrap() < 1e-9);
    }

    #[test]
    fn nested_subgroup_examples() {
        let g = demo::standard_group();
        let n0 = nested_subgroup(&g, 1, 2, 0).unwrap();
        assert!(n0.generators[1].approx_eq(&g.generators[1], 1e-12));
        let n2 = nested_subgroup(&g, 1, 2, 2).unwrap();
        assert!(n2.generators[1].approx_eq(&g.generators[1].pow(4), 1e-9));
        assert_eq!(nested_generator_words(1, 2, 2)[1], Word(vec![2, 2, 2, 2]));
    }
}
