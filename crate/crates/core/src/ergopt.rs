//! Maximizing-orbit search, the tilt curve, escaping orbit families and
//! the maximizer/escape verdict.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{axis_samples, periodic_quadrature, Potential, SamplingKnobs};
use crate::group::{compare_words, SchottkyGroup, Word};
use crate::thermo::PeriodicOrbitTable;

pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthMaximum {
    pub n: usize,
    pub value: f64,
    pub class: Word,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaLower {
    pub value: f64,
    pub argmax_class: Word,
    pub per_length_maxima: Vec<LengthMaximum>,
}

fn better(value: f64, w: &Word, best: &Option<(f64, Word)>) -> bool {
    match best {
        None => true,
        Some((v, bw)) => value > *v || (value == *v && compare_words(w, bw).is_lt()),
    }
}

/// Largest orbit average of φ over classes of length at most `n_max`.
pub fn beta_lower(table: &PeriodicOrbitTable, phi_id: &str, n_max: usize) -> Result<BetaLower> {
    if n_max == 0 || n_max > table.levels.len() {
        return Err(Error::StaleTable(format!("table has levels 1..={}, asked for {n_max}", table.levels.len())));
    }
    let mut per_length_maxima = Vec::new();
    let mut overall: Option<(f64, Word)> = None;
    for n in 1..=n_max {
        let mut best: Option<(f64, Word)> = None;
        for o in table.level(n)? {
            let avg = o.average(phi_id)?;
            if better(avg, &o.class, &best) {
                best = Some((avg, o.class.clone()));
            }
        }
        if let Some((v, w)) = best {
            // ties keep the shorter class
            if overall.as_ref().is_none_or(|o| v > o.0) {
                overall = Some((v, w.clone()));
            }
            per_length_maxima.push(LengthMaximum { n, value: v, class: w });
        }
    }
    let (value, argmax_class) =
        overall.ok_or_else(|| Error::StaleTable("table holds no closed geodesics".into()))?;
    Ok(BetaLower { value, argmax_class, per_length_maxima })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltCurve {
    /// `(t, max_O avg(φ − tψ))`.
    pub points: Vec<(f64, f64)>,
    /// Value at the largest `t`.
    pub plateau: f64,
    /// Change between the last two grid points.
    pub plateau_spread: f64,
}

/// `t ↦ β̂(φ − tψ)` over the orbit ensemble of lengths up to `n_max`.
pub fn tilted_beta_curve(
    table: &PeriodicOrbitTable,
    phi_id: &str,
    psi_id: &str,
    t_grid: &[f64],
    n_max: usize,
) -> Result<TiltCurve> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("empty t grid".into()));
    }
    let pairs = table
        .classes_up_to(n_max)
        .map(|o| Ok((o.average(phi_id)?, o.average(psi_id)?)))
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::StaleTable("table holds no closed geodesics".into()));
    }
    if let Some((_, b)) = pairs.iter().find(|(_, b)| !(*b >= 0.0)) {
        return Err(Error::InvalidInput(format!("ψ must be non-negative on every orbit, found average {b}")));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            // t = 0 reproduces the untilted maximum exactly
            let v = pairs
                .iter()
                .map(|(a, b)| if t == 0.0 { *a } else { a - t * b })
                .fold(f64::NEG_INFINITY, f64::max);
            (t, v)
        })
        .collect();
    let plateau = points.last().map(|p| p.1).unwrap_or(f64::NAN);
    let plateau_spread = if points.len() >= 2 { (points[points.len() - 2].1 - plateau).abs() } else { 0.0 };
    Ok(TiltCurve { points, plateau, plateau_spread })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub n: usize,
    pub word: Word,
    pub length_ell: f64,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAverages {
    pub points: Vec<FamilyPoint>,
    /// `(n, reason)` for members that are not closed geodesics.
    pub skipped: Vec<(usize, String)>,
}

impl FamilyAverages {
    pub fn last(&self) -> Option<&FamilyPoint> {
        self.points.last()
    }
}

/// Orbit averages of φ along the words `p^n h`.
pub fn escaping_family_averages(
    group: &SchottkyGroup,
    phi: &Potential,
    p: i32,
    h: i32,
    n_list: &[usize],
    knobs: SamplingKnobs,
) -> Result<FamilyAverages> {
    let k = group.rank() as i32;
    if p == 0 || h == 0 || p.abs() > k || h.abs() > k || p.abs() == h.abs() {
        return Err(Error::Family(format!("letters {p}, {h} invalid for rank {k}")));
    }
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &n in n_list {
        let mut letters = vec![p; n];
        letters.push(h);
        let word = Word(letters);
        let m = group.matrix_of(&word);
        let cap = knobs.reduction_cap.max(4 * n + 64);
        match axis_samples(&m, group, knobs.step, cap) {
            Ok((ell, samples, _)) => {
                let b = periodic_quadrature(ell, samples.iter().map(|v| phi.eval_reduced(v)))?;
                points.push(FamilyPoint { n, word, length_ell: ell, average: b.average });
            }
            Err(e @ (Error::NotAClosedGeodesic(_) | Error::AmbiguousClassification(_))) => {
                skipped.push((n, Error::Family(format!("p^{n}h: {e}")).to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FamilyAverages { points, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    MaximizerExpected,
    FullEscapeExpected,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub beta_lower: f64,
    pub argmax_class: Word,
    pub per_length_maxima: Vec<LengthMaximum>,
    /// Absent for convex-cocompact groups, where no mass can escape.
    pub beta_inf_estimate: Option<f64>,
    pub escaping_averages: Vec<f64>,
    pub margin: f64,
    pub verdict: Verdict,
}

/// Compares the best orbit average with the average at infinity estimated
/// from an escaping family.
pub fn gap_test(
    group: &SchottkyGroup,
    table: &PeriodicOrbitTable,
    phi_id: &str,
    n_max: usize,
    margin: f64,
    family: Option<&FamilyAverages>,
) -> Result<BetaReport> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidInput(format!("margin must be non-negative, got {margin}")));
    }
    let b = beta_lower(table, phi_id, n_max)?;
    let escaping_averages: Vec<f64> = family.map(|f| f.points.iter().map(|p| p.average).collect()).unwrap_or_default();
    let (beta_inf_estimate, verdict) = if !group.extended {
        (None, Verdict::MaximizerExpected)
    } else {
        match escaping_averages.last() {
            None => (None, Verdict::Inconclusive),
            Some(&e) => {
                let tail = &escaping_averages[escaping_averages.len().saturating_sub(3)..];
                let rising = tail.windows(2).all(|w| w[1] >= w[0] - 1e-12);
                let v = if e < b.value - margin {
                    Verdict::MaximizerExpected
                } else if rising {
                    Verdict::FullEscapeExpected
                } else {
                    Verdict::Inconclusive
                };
                (Some(e), v)
            }
        }
    };
    Ok(BetaReport {
        beta_lower: b.value,
        argmax_class: b.argmax_class,
        per_length_maxima: b.per_length_maxima,
        beta_inf_estimate,
        escaping_averages,
        margin,
        verdict,
    })
}
