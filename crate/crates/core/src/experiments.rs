//! Experiment drivers. Each one turns a validated configuration into a
//! [`DriverReport`] of rows, verdicts and charts.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cache::TableCache;
use crate::config::{semantic_errors, ExperimentConfig};
use crate::ergopt::{beta_lower, escaping_family_averages, gap_test, tilted_beta_curve, Verdict as GapVerdict};
use crate::error::{Error, Result};
use crate::flow::{
    birkhoff_integral, closed_geodesic_from_word, sample_invariant_set, set_separation, InvariantSetSpec, Potential,
    PotentialSpec, Region, RegionSpec, SamplingKnobs,
};
use crate::geometry::{bundle_dist, flip, geodesic_flow_step, hyp_dist, HPoint, Isometry, TangentVector};
use crate::group::{
    check_ping_pong, critical_exponent_estimate, nested_generator_words, nested_subgroup, subgroup_exponent_estimate,
    SchottkyGroup, Word,
};
use crate::report::{num, Chart, DriverReport, Series, Table};
use crate::thermo::{equilibrium_stats, flow_pressure, stats_from_pressure, GibbsEnsemble, GibbsStats, PeriodicOrbitTable};

/// Driver names, in the order `run_all` executes them. Output files use
/// these names; the CLI spells them with dashes.
pub const DRIVERS: [&str; 9] = [
    "check",
    "exponents",
    "pressure_curve",
    "zero_temp",
    "intermediate",
    "nonergodic",
    "divergence",
    "no_maximizer",
    "density",
];

/// Grid used by bundle-distance checks.
const CHECK_GRID: usize = 33;
const CHECK_TOL: f64 = 1e-10;

/// Fraction of the density tolerance below which deviations count as converged.
const DENSITY_FLOOR_FRACTION: f64 = 0.01;

/// Validated configuration plus the derived group and table cache.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub hash: String,
    pub group: SchottkyGroup,
    cache: Option<TableCache>,
}

impl RunContext {
    /// `cache_root = None` disables the table cache.
    pub fn new(config: ExperimentConfig, cache_root: Option<&Path>) -> Result<Self> {
        let errors = semantic_errors(&config);
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let hash = config.hash()?;
        let group = config.group.build()?;
        let cache = cache_root.map(|r| TableCache::new(r, &hash));
        Ok(Self { config, hash, group, cache })
    }

    pub fn knobs(&self) -> SamplingKnobs {
        self.config.knobs.sampling()
    }

    pub fn n_range(&self) -> (usize, usize) {
        self.config.n_range
    }

    /// Sorted, deduplicated temperature grid.
    pub fn t_grid(&self) -> Vec<f64> {
        let mut g = self.config.t_grid.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// The orbit table for `name`, from the cache when possible.
    pub fn table(
        &self,
        name: &str,
        potentials: &[(String, PotentialSpec)],
        regions: &[RegionSpec],
    ) -> Result<PeriodicOrbitTable> {
        let pids: Vec<String> = potentials.iter().map(|p| p.0.clone()).collect();
        let rids: Vec<String> = regions.iter().map(|r| r.id.clone()).collect();
        if let Some(t) = self.cache.as_ref().and_then(|c| c.load(name, &pids, &rids)) {
            return Ok(t);
        }
        let knobs = self.knobs();
        let pots = potentials
            .iter()
            .map(|(id, s)| Ok((id.clone(), Potential::new(s, &self.group, knobs)?)))
            .collect::<Result<Vec<_>>>()?;
        let regs = regions.iter().map(|r| Region::new(r, &self.group, knobs)).collect::<Result<Vec<_>>>()?;
        log::info!("building table {name} up to length {}", self.config.n_range.1);
        let t = PeriodicOrbitTable::build(&self.group, self.config.n_range.1, &pots, &regs, knobs)?;
        if let Some(c) = &self.cache {
            c.store(name, &t)?;
        }
        Ok(t)
    }

    /// Critical exponent: the configured reference, else the shell estimate.
    pub fn delta_hat(&self) -> Result<f64> {
        match self.config.reference.delta_hat {
            Some(d) => Ok(d),
            None => Ok(critical_exponent_estimate(&self.group, self.config.knobs.shell_depth)?.delta_hat),
        }
    }

    pub fn potential_entry(&self, id: &str) -> Result<(String, PotentialSpec)> {
        Ok((id.to_string(), self.config.potential(id)?.clone()))
    }
}

fn missing(section: &str) -> Error {
    Error::Config(vec![format!("/experiments/{section}: section required by this driver")])
}

/// Runs one driver by name (dashes or underscores).
pub fn run_driver(ctx: &RunContext, name: &str) -> Result<DriverReport> {
    match name.replace('-', "_").as_str() {
        "check" => run_check(ctx),
        "exponents" => run_exponents(ctx),
        "pressure_curve" => run_pressure_curve(ctx),
        "zero_temp" => run_zero_temp(ctx),
        "intermediate" => run_intermediate(ctx),
        "nonergodic" => run_nonergodic(ctx),
        "divergence" => run_divergence(ctx),
        "no_maximizer" => run_no_maximizer(ctx),
        "density" => run_density(ctx),
        other => Err(Error::InvalidInput(format!("unknown driver {other:?}"))),
    }
}

fn series(name: &str, points: Vec<(f64, f64)>) -> Series {
    Series { name: name.into(), points }
}

fn chart(title: &str, x: &str, y: &str, series: Vec<Series>) -> Chart {
    Chart { title: title.into(), x_label: x.into(), y_label: y.into(), series }
}

fn word_value(w: &Word) -> Value {
    Value::String(w.to_string())
}

// ---------------------------------------------------------------- check

fn random_vector(rng: &mut ChaCha8Rng) -> Result<TangentVector> {
    let x = rng.random_range(-2.0..2.0);
    let y = rng.random_range(-2.0f64..2.0).exp();
    TangentVector::new(HPoint::new(x, y)?, rng.random_range(0.0..TAU))
}

fn random_isometry(rng: &mut ChaCha8Rng) -> Isometry {
    Isometry::translation(rng.random_range(-2.0..2.0))
        .compose(&Isometry::dilation(rng.random_range(-1.5..1.5)))
        .compose(&Isometry::rotation_about_i(rng.random_range(0.0..TAU)))
        .compose(&Isometry::translation(rng.random_range(-1.0..1.0)))
}

fn angle_gap(a: f64, b: f64) -> f64 {
    ((a - b + PI).rem_euclid(TAU) - PI).abs()
}

fn vector_gap(v: &TangentVector, w: &TangentVector) -> f64 {
    hyp_dist(v.base, w.base) + angle_gap(v.angle, w.angle)
}

/// Ping-pong and randomized geometry checks: metric axioms, isometry
/// invariance, unit speed and flip anti-commutation.
pub fn run_check(ctx: &RunContext) -> Result<DriverReport> {
    let cases = ctx.config.experiments.check.clone().unwrap_or_default().random_cases;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    let mut worst = [0.0f64; 6];
    for _ in 0..cases {
        let (u, v, w) = (random_vector(&mut rng)?, random_vector(&mut rng)?, random_vector(&mut rng)?);
        let g = random_isometry(&mut rng);
        let t = rng.random_range(-3.0..3.0);
        let d_uv = bundle_dist(&u, &v, CHECK_GRID)?;
        let d_vu = bundle_dist(&v, &u, CHECK_GRID)?;
        let d_vw = bundle_dist(&v, &w, CHECK_GRID)?;
        let d_uw = bundle_dist(&u, &w, CHECK_GRID)?;
        let d_uu = bundle_dist(&u, &u, CHECK_GRID)?;
        let d_g = bundle_dist(&g.apply_tangent(&u)?, &g.apply_tangent(&v)?, CHECK_GRID)?;
        let moved = geodesic_flow_step(&u, t);
        let errs = [
            d_uu,
            (d_uv - d_vu).abs(),
            (d_uw - d_uv - d_vw).max(0.0),
            (d_g - d_uv).abs(),
            (hyp_dist(moved.base, u.base) - t.abs()).abs(),
            vector_gap(&geodesic_flow_step(&flip(&u), t), &flip(&geodesic_flow_step(&u, -t))),
        ];
        for (m, e) in worst.iter_mut().zip(errs) {
            *m = m.max(if e.is_nan() { f64::INFINITY } else { e });
        }
    }
    let names = ["identity", "symmetry", "triangle", "isometry_invariance", "unit_speed", "flip_anticommutation"];
    let mut table = Table::new(&["check", "cases", "max_error", "tolerance", "passed"]);
    let pp = check_ping_pong(&ctx.group, ctx.config.knobs.ping_pong_samples)?;
    table.push(vec![
        "ping_pong".into(),
        ctx.config.knobs.ping_pong_samples.into(),
        (pp.violations.len() as u64).into(),
        0.into(),
        pp.ok.into(),
    ]);
    let mut report = DriverReport::new("check", Table::default());
    report.verdict("ping_pong", pp.ok, pp.violations.join("; "));
    for (name, err) in names.iter().zip(worst) {
        let ok = err <= CHECK_TOL;
        table.push(vec![(*name).into(), cases.into(), num(err), num(CHECK_TOL), ok.into()]);
        report.verdict(name, ok, format!("max error {err:.3e} over {cases} cases"));
    }
    report.table = table;
    Ok(report)
}

// ------------------------------------------------------------ exponents

fn family_label(f: [usize; 2]) -> String {
    format!("g{}_g{}", f[0], f[1])
}

fn nested_core(f: [usize; 2], n: u32, sample_depth: usize) -> InvariantSetSpec {
    InvariantSetSpec::SubgroupCore { generators: nested_generator_words(f[0], f[1], n), sample_depth }
}

/// Greedy re-enumeration of two entropy sequences into an interleaved chain
/// `(i_m, j_m)` with `minus[j_{m+1}] < plus[i_m]` and
/// `plus[i_{m+1}] < minus[j_m]`, both index sequences increasing.
pub fn alternation_chain(plus: &[f64], minus: &[f64]) -> Vec<(usize, usize)> {
    if plus.is_empty() || minus.is_empty() {
        return Vec::new();
    }
    let mut chain = vec![(0, 0)];
    loop {
        let (i, j) = *chain.last().expect("chain is non-empty");
        let ni = (i + 1..plus.len()).find(|&q| plus[q] < minus[j]);
        let nj = (j + 1..minus.len()).find(|&q| minus[q] < plus[i]);
        match (ni, nj) {
            (Some(a), Some(b)) => chain.push((a, b)),
            _ => return chain,
        }
    }
}

/// Critical exponents of the nested families `⟨g_a, g_b^{2^n}⟩`.
pub fn run_exponents(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.exponents.clone().unwrap_or_default();
    let mut n_list = p.n_list.clone();
    n_list.sort_unstable();
    n_list.dedup();
    let depth = ctx.config.knobs.shell_depth;
    let mut columns = vec!["n".to_string()];
    for f in &p.families {
        columns.push(format!("delta_{}", family_label(*f)));
        columns.push(format!("uncertainty_{}", family_label(*f)));
    }
    let mut estimates = Vec::new();
    for f in &p.families {
        let mut col = Vec::new();
        for &n in &n_list {
            let sub = nested_subgroup(&ctx.group, f[0], f[1], n)?;
            let e = critical_exponent_estimate(&sub, depth)?;
            log::info!("delta({}, n={n}) = {:.5}", family_label(*f), e.delta_hat);
            col.push((e.delta_hat, e.uncertainty));
        }
        estimates.push(col);
    }
    let mut table = Table::new(&columns);
    for (i, &n) in n_list.iter().enumerate() {
        let mut row = vec![Value::from(n)];
        for col in &estimates {
            row.push(num(col[i].0));
            row.push(num(col[i].1));
        }
        table.push(row);
    }
    let mut report = DriverReport::new("exponents", table);
    for (f, col) in p.families.iter().zip(&estimates) {
        let label = family_label(*f);
        let d: Vec<f64> = col.iter().map(|e| e.0).collect();
        let (first, last) = (d[0], d[d.len() - 1]);
        report.verdict(
            &format!("{label}_strictly_decreasing"),
            d.windows(2).all(|w| w[1] < w[0]),
            format!("{d:.5?}"),
        );
        report.verdict(&format!("{label}_initial_positive"), first > 0.0, format!("{first:.5}"));
        report.verdict(&format!("{label}_final_below_half_initial"), last < 0.5 * first, format!("{last:.5} vs {first:.5}"));
        report.charts.push(chart(
            &format!("critical exponent, family {label}"),
            "n",
            "delta",
            vec![series(&label, n_list.iter().zip(&d).map(|(&n, &v)| (n as f64, v)).collect())],
        ));
    }
    if let [fp, fm] = p.families[..] {
        let knobs = ctx.knobs();
        let mut cores = Table::new(&["n", "separation"]);
        let mut min_sep = f64::INFINITY;
        for &n in &n_list {
            let kp = sample_invariant_set(&nested_core(fp, n, p.sample_depth), &ctx.group, knobs.step)?;
            let km = sample_invariant_set(&nested_core(fm, n, p.sample_depth), &ctx.group, knobs.step)?;
            let sep = set_separation(&kp, &km, &ctx.group, knobs.neighbor_depth)?;
            min_sep = min_sep.min(sep);
            cores.push(vec![n.into(), num(sep)]);
        }
        report.verdict("cores_disjoint", min_sep > 0.0, format!("smallest separation {min_sep:.4}"));
        report.extra.push(("cores".into(), cores));

        let plus: Vec<f64> = estimates[0].iter().map(|e| e.0).collect();
        let minus: Vec<f64> = estimates[1].iter().map(|e| e.0).collect();
        let raw = (1..n_list.len()).all(|i| minus[i] < plus[i - 1] && plus[i] < minus[i - 1]);
        let chain = alternation_chain(&plus, &minus);
        let mut alt = Table::new(&["level", "n_plus", "n_minus", "entropy_plus", "entropy_minus"]);
        for (m, &(i, j)) in chain.iter().enumerate() {
            alt.push(vec![m.into(), n_list[i].into(), n_list[j].into(), num(plus[i]), num(minus[j])]);
        }
        let pairs: Vec<String> = chain.iter().map(|&(i, j)| format!("({},{})", n_list[i], n_list[j])).collect();
        report.verdict(
            "alternation_after_reindexing",
            chain.len() >= 2,
            format!("interleaving {} (holds without re-indexing: {raw})", pairs.join(" ")),
        );
        report.extra.push(("alternation".into(), alt));
    }
    Ok(report)
}

// ------------------------------------------------------- pressure curve

const UNIT_ID: &str = "_unit";

/// Pressure, its derivative and the thermodynamic identities along the grid.
pub fn run_pressure_curve(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.pressure_curve.clone().ok_or_else(|| missing("pressure_curve"))?;
    let phi = p.phi.as_str();
    let pots = vec![ctx.potential_entry(phi)?, (UNIT_ID.to_string(), PotentialSpec::Constant { value: 1.0 })];
    let table = ctx.table("pressure_curve", &pots, &[])?;
    let nr = ctx.n_range();
    let beta = beta_lower(&table, phi, nr.1)?.value;
    let h = p.derivative_step;
    let grid = ctx.t_grid();
    let mut out = Table::new(&[
        "t",
        "pressure",
        "extrapolated",
        "residual",
        "derivative",
        "phi_mean",
        "entropy",
        "normalization",
        "t_beta",
    ]);
    let (mut norm_err, mut deriv_err, mut h_min, mut lower_gap) = (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY);
    let mut pressures = Vec::new();
    for &t in &grid {
        let pr = flow_pressure(&table, phi, t, nr)?;
        let ens = GibbsEnsemble::new(&table, phi, &pr)?;
        let stats = stats_from_pressure(&table, phi, &pr, &[])?;
        let total: f64 = ens.orbit_probabilities().iter().sum();
        let unit = ens.average(UNIT_ID)?;
        let deriv = (flow_pressure(&table, phi, t + h, nr)?.c_star - flow_pressure(&table, phi, t - h, nr)?.c_star) / (2.0 * h);
        norm_err = norm_err.max((total - 1.0).abs()).max((unit - 1.0).abs());
        deriv_err = deriv_err.max((stats.phi_mean - deriv).abs());
        h_min = h_min.min(pr.c_star - t * stats.phi_mean);
        lower_gap = lower_gap.min(pr.c_star - t * beta);
        pressures.push((t, pr.c_star));
        out.push(vec![
            num(t),
            num(pr.c_star),
            num(pr.extrapolated),
            num(pr.residual),
            num(deriv),
            num(stats.phi_mean),
            num(stats.entropy),
            num(unit),
            num(t * beta),
        ]);
    }
    let mut convex_gap = f64::NEG_INFINITY;
    for w in pressures.windows(2) {
        let mid = flow_pressure(&table, phi, 0.5 * (w[0].0 + w[1].0), nr)?.c_star;
        convex_gap = convex_gap.max(mid - 0.5 * (w[0].1 + w[1].1));
    }
    let entropy: Vec<(f64, f64)> = out.rows.iter().map(|r| (r[0].as_f64().unwrap_or(f64::NAN), r[6].as_f64().unwrap_or(f64::NAN))).collect();
    let mut report = DriverReport::new("pressure_curve", out);
    report.verdict("gibbs_normalization", norm_err <= 1e-6, format!("max deviation {norm_err:.3e}"));
    report.verdict("derivative_matches_mean", deriv_err <= 1e-3, format!("max |∫φ dm − P'| {deriv_err:.3e}"));
    if pressures.len() >= 2 {
        report.verdict("midpoint_convexity", convex_gap <= 1e-6, format!("max excess {convex_gap:.3e}"));
    }
    report.verdict("entropy_nonnegative", h_min >= -1e-6, format!("min entropy {h_min:.3e}"));
    report.verdict("pressure_above_t_beta", lower_gap >= -1e-6, format!("min P − tβ̂ {lower_gap:.3e}, β̂ = {beta:.6}"));
    if let Some(&(_, p0)) = pressures.first().filter(|x| x.0 == 0.0) {
        if !ctx.group.extended {
            let d = ctx.delta_hat()?;
            report.verdict("pressure_at_zero_matches_exponent", (p0 - d).abs() <= 0.02, format!("P(0) = {p0:.5}, δ̂ = {d:.5}"));
        }
    }
    report.charts.push(chart("pressure", "t", "P(tφ)", vec![series("P", pressures)]));
    report.charts.push(chart("entropy", "t", "h", vec![series("h", entropy)]));
    Ok(report)
}

// ------------------------------------------------- zero temperature

fn stats_columns(region_ids: &[String]) -> Vec<String> {
    let mut c: Vec<String> = ["t", "pressure", "phi_mean", "entropy", "n_stability"].iter().map(|s| s.to_string()).collect();
    c.extend(region_ids.iter().map(|r| format!("mass_{r}")));
    c
}

fn stats_row(s: &GibbsStats, region_ids: &[String]) -> Vec<Value> {
    let mut r = vec![num(s.t), num(s.pressure), num(s.phi_mean), num(s.entropy), num(s.n_stability)];
    r.extend(region_ids.iter().map(|id| num(s.region_masses[id])));
    r
}

fn stats_sweep(
    ctx: &RunContext,
    table: &PeriodicOrbitTable,
    phi: &str,
    region_ids: &[String],
) -> Result<(Table, Vec<GibbsStats>)> {
    let mut out = Table::new(&stats_columns(region_ids));
    let mut all = Vec::new();
    for t in ctx.t_grid() {
        let s = equilibrium_stats(table, phi, t, region_ids, ctx.n_range())?;
        out.push(stats_row(&s, region_ids));
        all.push(s);
    }
    Ok((out, all))
}

fn mass_charts(stats: &[GibbsStats], region_ids: &[String]) -> Vec<Chart> {
    let masses = region_ids
        .iter()
        .map(|r| series(r, stats.iter().map(|s| (s.t, s.region_masses[r])).collect()))
        .collect();
    vec![
        chart("region masses", "t", "mass", masses),
        chart("entropy", "t", "h", vec![series("h", stats.iter().map(|s| (s.t, s.entropy)).collect())]),
    ]
}

/// Gibbs statistics of a bump potential as the temperature goes to zero.
pub fn run_zero_temp(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.zero_temp.clone().ok_or_else(|| missing("zero_temp"))?;
    let region = ctx.config.region(&p.region)?.clone();
    let table = ctx.table("zero_temp", &[ctx.potential_entry(&p.phi)?], &[region])?;
    let ids = vec![p.region.clone()];
    let (out, stats) = stats_sweep(ctx, &table, &p.phi, &ids)?;
    let reference = match (p.entropy_reference, ctx.config.potential(&p.phi)?) {
        (Some(r), _) => r,
        (None, PotentialSpec::Bump { target: InvariantSetSpec::ClosedOrbit { .. } }) => 0.0,
        (None, PotentialSpec::Bump { target: InvariantSetSpec::SubgroupCore { generators, .. } }) => {
            subgroup_exponent_estimate(&ctx.group, generators, ctx.config.knobs.shell_depth)?.delta_hat
        }
        _ => return Err(Error::InvalidInput("zero-temperature driver needs a bump potential".into())),
    };
    let mut report = DriverReport::new("zero_temp", out);
    let last = stats.last().ok_or_else(|| Error::InvalidInput("empty t grid".into()))?;
    let mass = last.region_masses[&p.region];
    report.verdict(
        "target_mass",
        mass > 1.0 - p.eps_target,
        format!("mass {mass:.4} at t = {} (need > {})", last.t, 1.0 - p.eps_target),
    );
    report.verdict("phi_mean", last.phi_mean > p.mean_min, format!("∫φ dm = {:.4} (need > {})", last.phi_mean, p.mean_min));
    report.verdict(
        "entropy_matches_target",
        (last.entropy - reference).abs() <= p.entropy_tol,
        format!("h = {:.4}, reference {reference:.4}, tolerance {}", last.entropy, p.entropy_tol),
    );
    if let Some(s0) = stats.first().filter(|s| s.t == 0.0) {
        if !ctx.group.extended {
            let d = ctx.delta_hat()?;
            report.verdict("entropy_at_zero_matches_exponent", (s0.entropy - d).abs() <= 0.02, format!("h(0) = {:.5}, δ̂ = {d:.5}", s0.entropy));
        }
    }
    report.charts = mass_charts(&stats, &ids);
    Ok(report)
}

// ------------------------------------------------- intermediate entropy

/// Solves `h(m_{tφ}) = c` for a set of targets by bisection on `t`.
pub fn run_intermediate(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.intermediate.clone().ok_or_else(|| missing("intermediate"))?;
    let table = ctx.table("intermediate", &[ctx.potential_entry(&p.phi)?], &[])?;
    let nr = ctx.n_range();
    let entropy = |t: f64| -> Result<f64> { Ok(equilibrium_stats(&table, &p.phi, t, &[], nr)?.entropy) };
    let delta = ctx.delta_hat()?;
    let h_top = entropy(0.0)?;
    let mut out = Table::new(&["fraction", "target", "t_star", "entropy", "error", "evaluations", "converged"]);
    let mut report_rows = Vec::new();
    for &f in &p.fractions {
        let c = f * delta;
        if !(c > 0.0 && c < delta) {
            return Err(Error::InvalidInput(format!("target {c} must lie in (0, δ̂ = {delta})")));
        }
        if c >= h_top {
            return Err(Error::InvalidInput(format!("target {c} is not below the computed entropy {h_top}")));
        }
        let mut evals = 1;
        let (mut lo, mut h_lo) = (0.0, h_top);
        let (mut hi, mut h_hi) = (1.0, entropy(1.0)?);
        evals += 1;
        while h_hi > c && evals < p.max_evals {
            lo = hi;
            h_lo = h_hi;
            hi *= 2.0;
            h_hi = entropy(hi)?;
            evals += 1;
        }
        let (mut t_star, mut h_star) = if (h_hi - c).abs() < (h_lo - c).abs() { (hi, h_hi) } else { (lo, h_lo) };
        while (h_star - c).abs() >= p.tol && evals < p.max_evals && h_hi <= c {
            let mid = 0.5 * (lo + hi);
            let h_mid = entropy(mid)?;
            evals += 1;
            if h_mid > h_lo + 1e-9 || h_mid < h_hi - 1e-9 {
                return Err(Error::Bisection(format!(
                    "entropy not monotone: h({lo}) = {h_lo}, h({mid}) = {h_mid}, h({hi}) = {h_hi}"
                )));
            }
            (t_star, h_star) = (mid, h_mid);
            if h_mid > c {
                (lo, h_lo) = (mid, h_mid);
            } else {
                (hi, h_hi) = (mid, h_mid);
            }
        }
        let err = (h_star - c).abs();
        let ok = err < p.tol && evals <= p.max_evals;
        out.push(vec![num(f), num(c), num(t_star), num(h_star), num(err), evals.into(), ok.into()]);
        report_rows.push((f, c, t_star, err, evals, ok));
    }
    let mut report = DriverReport::new("intermediate", out);
    for &(f, c, t, err, evals, ok) in &report_rows {
        report.verdict(
            &format!("target_{f}"),
            ok,
            format!("c = {c:.4}: t* = {t:.4}, |h − c| = {err:.2e}, {evals} evaluations (limit {})", p.max_evals),
        );
    }
    let mut by_target: Vec<_> = report_rows.iter().map(|r| (r.1, r.2)).collect();
    by_target.sort_by(|a, b| a.0.total_cmp(&b.0));
    report.verdict(
        "t_star_decreasing_in_target",
        by_target.windows(2).all(|w| w[1].1 < w[0].1),
        format!("{by_target:.4?}"),
    );
    report.notes.push(format!("δ̂ = {delta:.5}, h_top from the orbit ensemble = {h_top:.5}"));
    report.charts.push(chart("inverse temperature for each target entropy", "target entropy", "t*", vec![series("t*", by_target)]));
    Ok(report)
}

// ----------------------------------------------------------- nonergodic

/// Zero-temperature limit of a flip-symmetric bump on `K ∪ flip(K)`.
pub fn run_nonergodic(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.nonergodic.clone().ok_or_else(|| missing("nonergodic"))?;
    let knobs = ctx.knobs();
    let k = InvariantSetSpec::ClosedOrbit { word: p.word.clone() };
    let fk = k.clone().flipped();
    let ks = sample_invariant_set(&k, &ctx.group, knobs.step)?;
    let fks = sample_invariant_set(&fk, &ctx.group, knobs.step)?;
    let sep = set_separation(&ks, &fks, &ctx.group, knobs.neighbor_depth)?;
    if !(sep > 0.0) {
        return Err(Error::InvalidTarget(format!("orbit {} meets its flip (separation {sep})", p.word)));
    }
    let phi_spec = PotentialSpec::bump(InvariantSetSpec::Union { parts: vec![k.clone(), fk.clone()] });
    let phi = Potential::new(&phi_spec, &ctx.group, knobs)?;
    let mut probes: Vec<TangentVector> = ks.samples.iter().chain(&fks.samples).copied().collect();
    for l in 1..=ctx.group.rank() as i32 {
        probes.extend(closed_geodesic_from_word(&Word(vec![l]), &ctx.group, knobs.step)?.samples);
    }
    let mut flip_err = 0.0f64;
    for v in &probes {
        flip_err = flip_err.max((phi.eval(v)? - phi.eval(&flip(v))?).abs());
    }
    let ids = vec!["K".to_string(), "flip_K".to_string()];
    let regions = [RegionSpec::neighborhood("K", k, p.radius), RegionSpec::neighborhood("flip_K", fk, p.radius)];
    let table = ctx.table("nonergodic", &[("phi".into(), phi_spec)], &regions)?;
    let (out, stats) = stats_sweep(ctx, &table, "phi", &ids)?;
    let last = stats.last().ok_or_else(|| Error::InvalidInput("empty t grid".into()))?;
    let (a, b) = (last.region_masses["K"], last.region_masses["flip_K"]);
    let mut report = DriverReport::new("nonergodic", out);
    report.verdict("flip_symmetry", flip_err < 1e-9, format!("max |φ − φ∘flip| = {flip_err:.2e} on {} samples", probes.len()));
    report.verdict(
        "neighborhoods_disjoint",
        sep > 2.0 * p.radius,
        format!("separation {sep:.4}, radius {}", p.radius),
    );
    report.verdict("mass_K", (a - 0.5).abs() <= p.tol, format!("{a:.4} at t = {}", last.t));
    report.verdict("mass_flip_K", (b - 0.5).abs() <= p.tol, format!("{b:.4} at t = {}", last.t));
    report.verdict("combined_mass", a + b > p.combined_min, format!("{:.4} (need > {})", a + b, p.combined_min));
    report.charts = mass_charts(&stats, &ids);
    Ok(report)
}

// ----------------------------------------------------------- divergence

/// One level of the alternating schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleLevel {
    pub k: usize,
    /// `+` for odd levels, `−` for even ones.
    pub sign: char,
    pub delta: f64,
    pub t: f64,
    pub eps: f64,
    /// Mass of the level's region under `m_{t_k φ_k}`.
    pub mass_own: f64,
    /// Mass of the level's region under `m_{t_k φ}` for the final `φ`.
    pub mass_final: f64,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub entropy: f64,
    pub halvings: usize,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSchedule {
    pub levels: Vec<ScheduleLevel>,
    /// Set when a search hit its cap.
    pub failure: Option<String>,
}

fn sign_of(k: usize) -> char {
    if k % 2 == 1 { '+' } else { '-' }
}

fn region_of(k: usize) -> &'static str {
    if k % 2 == 1 { "U+" } else { "U-" }
}

fn mass_at(table: &PeriodicOrbitTable, phi: &str, t: f64, region: &str, nr: (usize, usize)) -> Result<f64> {
    Ok(equilibrium_stats(table, phi, t, &[region.to_string()], nr)?.region_masses[region])
}

/// Builds `φ_L = Σ δ_k φ_k^{s(k)}` level by level: `t_k` by doubling until the
/// level's region holds mass above `1 − ε_k/3`, `δ_{k+1}` by halving until the
/// next term moves no earlier mass by `ε_k/3` or more.
pub fn run_divergence(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.divergence.clone().unwrap_or_default();
    let [fp, fm] = p.families;
    let core = |f: [usize; 2], n: usize| nested_core(f, n as u32, p.sample_depth);
    let y = |k: usize| -> InvariantSetSpec {
        let parts = if k % 2 == 1 { vec![core(fp, k - 1), core(fm, k)] } else { vec![core(fp, k), core(fm, k - 1)] };
        InvariantSetSpec::Union { parts }
    };
    let leaves: Vec<(String, PotentialSpec)> =
        (1..=p.levels).map(|k| (format!("y{k}"), PotentialSpec::bump(y(k)))).collect();
    let regions = [
        RegionSpec::neighborhood("U+", core(fp, 0), p.radius),
        RegionSpec::neighborhood("U-", core(fm, 0), p.radius),
    ];
    let mut table = ctx.table("divergence", &leaves, &regions)?;
    let nr = ctx.n_range();

    let mut terms: Vec<(f64, String)> = vec![(1.0, "y1".into())];
    table.add_combination("phi1", &terms)?;
    let mut schedule = DivergenceSchedule { levels: Vec::new(), failure: None };
    let mut prev_t = 0.0;
    for k in 1..=p.levels {
        let phi_k = format!("phi{k}");
        let own = region_of(k);
        let eps = p.eps[k - 1];
        let need = 1.0 - eps / 3.0;
        let delta = terms[k - 1].0;
        // t_k = max(T, t_{k-1} + k), with T the first doubling point that passes
        let floor = prev_t + k as f64;
        let mut t = p.t_start;
        let mut best = (f64::NEG_INFINITY, t);
        let mut found = None;
        while t <= p.t_cap {
            let m = mass_at(&table, &phi_k, t, own, nr)?;
            log::debug!("level {k}: m({own}) = {m:.4} at t = {t}");
            if m > best.0 {
                best = (m, t);
            }
            if m > need {
                if t >= floor {
                    found = Some((t, m));
                    break;
                }
                let mf = mass_at(&table, &phi_k, floor, own, nr)?;
                if mf > need {
                    found = Some((floor, mf));
                    break;
                }
            }
            t *= 2.0;
        }
        let level = |t: f64, m: f64, halvings: usize, complete: bool| ScheduleLevel {
            k,
            sign: sign_of(k),
            delta,
            t,
            eps,
            mass_own: m,
            mass_final: f64::NAN,
            mass_plus: f64::NAN,
            mass_minus: f64::NAN,
            entropy: f64::NAN,
            halvings,
            complete,
        };
        let Some((tk, mk)) = found else {
            schedule.failure = Some(
                Error::Schedule(format!(
                    "level {k}: mass of {own} reached only {:.4} (at t = {}) below the cap t = {}, needed {need:.4}",
                    best.0, best.1, p.t_cap
                ))
                .to_string(),
            );
            schedule.levels.push(level(best.1, best.0, 0, false));
            break;
        };
        prev_t = tk;
        if k == p.levels {
            schedule.levels.push(level(tk, mk, 0, true));
            break;
        }
        let next = format!("y{}", k + 1);
        let mut sigma = delta / 2.0;
        let mut halvings = 0;
        let accepted = loop {
            let mut trial = terms.clone();
            trial.push((sigma, next.clone()));
            table.add_combination("trial", &trial)?;
            let mut dev = 0.0f64;
            for (j, lv) in schedule.levels.iter().map(|l| (l.k, l.t)).chain([(k, tk)]) {
                let r = region_of(j);
                dev = dev.max((mass_at(&table, "trial", lv, r, nr)? - mass_at(&table, &phi_k, lv, r, nr)?).abs());
            }
            if dev < eps / 3.0 {
                break true;
            }
            if halvings == p.max_halvings {
                break false;
            }
            sigma /= 2.0;
            halvings += 1;
        };
        schedule.levels.push(level(tk, mk, halvings, accepted));
        if !accepted {
            schedule.failure = Some(
                Error::Schedule(format!("level {k}: no weight for level {} within {} halvings", k + 1, p.max_halvings))
                    .to_string(),
            );
            break;
        }
        terms.push((sigma, next));
        table.add_combination(&format!("phi{}", k + 1), &terms)?;
    }

    let phi = format!("phi{}", terms.len());
    let both = ["U+".to_string(), "U-".to_string()];
    for l in &mut schedule.levels {
        let s = equilibrium_stats(&table, &phi, l.t, &both, nr)?;
        l.mass_plus = s.region_masses["U+"];
        l.mass_minus = s.region_masses["U-"];
        l.mass_final = if l.sign == '+' { l.mass_plus } else { l.mass_minus };
        l.entropy = s.entropy;
    }
    let deltas: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let tail = |n: usize| -> f64 { deltas.iter().skip(n).fold(0.0, |a, d| a + d) };

    let mut out = Table::new(&[
        "k",
        "sign",
        "delta",
        "t",
        "eps",
        "mass_own",
        "mass_final",
        "mass_plus",
        "mass_minus",
        "entropy",
        "tail_norm",
        "halvings",
        "complete",
    ]);
    for l in &schedule.levels {
        out.push(vec![
            l.k.into(),
            l.sign.to_string().into(),
            num(l.delta),
            num(l.t),
            num(l.eps),
            num(l.mass_own),
            num(l.mass_final),
            num(l.mass_plus),
            num(l.mass_minus),
            num(l.entropy),
            num(tail(l.k)),
            l.halvings.into(),
            l.complete.into(),
        ]);
    }
    let mut report = DriverReport::new("divergence", out);
    report.verdict(
        "schedule_complete",
        schedule.failure.is_none(),
        schedule.failure.clone().unwrap_or_else(|| format!("{} levels", p.levels)),
    );
    let mut through = 0;
    for l in &schedule.levels {
        let ok = l.mass_final > 1.0 - l.eps;
        if ok && through == l.k - 1 {
            through = l.k;
        }
        report.verdict(
            &format!("level_{}_mass", l.k),
            ok,
            format!("m_(t_{} φ)(U{}) = {:.4} at t = {} (need > {})", l.k, l.sign, l.mass_final, l.t, 1.0 - l.eps),
        );
    }
    report.verdict(
        "delta_halving",
        deltas.windows(2).all(|w| w[1] <= 0.5 * w[0]),
        format!("δ = {deltas:?}"),
    );
    let ts: Vec<f64> = schedule.levels.iter().map(|l| l.t).collect();
    report.verdict(
        "t_spacing",
        ts.windows(2).enumerate().all(|(i, w)| w[1] >= w[0] + (i + 1) as f64),
        format!("t = {ts:?}"),
    );
    report.verdict(
        "eps_non_increasing",
        p.eps.windows(2).all(|w| w[1] <= w[0]),
        format!("ε = {:?}", p.eps),
    );
    let tail_ok = (1..=deltas.len()).all(|n| tail(n) < deltas[n - 1]);
    report.verdict(
        "tail_bound",
        tail_ok,
        format!(
            "‖φ − φ_n‖∞ ≤ Σ_(j>n) δ_j: {:?}",
            (1..=deltas.len()).map(tail).collect::<Vec<_>>()
        ),
    );
    report.notes.push(if through > 0 {
        format!("alternation exhibited through level {through}")
    } else {
        "alternation not exhibited at any level".to_string()
    });

    let mut sweep = Table::new(&["t", "mass_plus", "mass_minus"]);
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    let mut t = p.t_start;
    while t <= p.t_cap {
        let s = equilibrium_stats(&table, &phi, t, &both, nr)?;
        sweep.push(vec![num(t), num(s.region_masses["U+"]), num(s.region_masses["U-"])]);
        plus.push((t.log2(), s.region_masses["U+"]));
        minus.push((t.log2(), s.region_masses["U-"]));
        t *= 2.0;
    }
    report.extra.push(("sweep".into(), sweep));
    report.charts.push(chart("final potential: region masses", "log2 t", "mass", vec![series("U+", plus), series("U-", minus)]));
    Ok(report)
}

// --------------------------------------------------------- no maximizer

/// Escape of mass: orbit averages along `p^n h`, the gap verdict and the
/// tilt curve.
pub fn run_no_maximizer(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.no_maximizer.clone().ok_or_else(|| missing("no_maximizer"))?;
    let mut pots = vec![ctx.potential_entry(&p.phi)?];
    if let Some(psi) = &p.psi {
        pots.push(ctx.potential_entry(psi)?);
    }
    let table = ctx.table("no_maximizer", &pots, &[])?;
    let n_max = ctx.n_range().1;
    let phi = Potential::new(&pots[0].1, &ctx.group, ctx.knobs())?;
    let fam = escaping_family_averages(&ctx.group, &phi, p.p, p.h, &p.n_list, ctx.knobs())?;
    let beta = beta_lower(&table, &p.phi, n_max)?;
    let gap = gap_test(&ctx.group, &table, &p.phi, n_max, p.margin, Some(&fam))?;

    let mut out = Table::new(&["n", "word", "length", "average"]);
    for pt in &fam.points {
        out.push(vec![pt.n.into(), word_value(&pt.word), num(pt.length_ell), num(pt.average)]);
    }
    let mut report = DriverReport::new("no_maximizer", out);
    for (n, why) in &fam.skipped {
        report.notes.push(format!("n = {n} skipped: {why}"));
    }
    let expected = if ctx.group.extended { GapVerdict::FullEscapeExpected } else { GapVerdict::MaximizerExpected };
    report.verdict(
        "gap_verdict",
        gap.verdict == expected,
        format!("{:?} (expected {expected:?}), β̂ = {:.4}, β∞ estimate {:?}", gap.verdict, gap.beta_lower, gap.beta_inf_estimate),
    );
    if ctx.group.extended {
        report.verdict(
            "orbit_averages_below_one",
            beta.value < 1.0,
            format!("largest orbit average {:.6} on {}", beta.value, beta.argmax_class),
        );
        let at = fam.points.iter().find(|pt| pt.n == p.escape_n);
        report.verdict(
            "escaping_average",
            at.is_some_and(|pt| pt.average > p.escape_threshold),
            match at {
                Some(pt) => format!("average {:.4} at n = {} (need > {})", pt.average, pt.n, p.escape_threshold),
                None => format!("n = {} not evaluated", p.escape_n),
            },
        );
    }
    report.charts.push(chart(
        "orbit averages along the escaping family",
        "n",
        "average",
        vec![series("p^n h", fam.points.iter().map(|pt| (pt.n as f64, pt.average)).collect())],
    ));
    if let Some(psi) = &p.psi {
        let curve = tilted_beta_curve(&table, &p.phi, psi, &p.tilt_grid, n_max)?;
        let mut tilt = Table::new(&["t", "beta_tilted"]);
        for &(t, v) in &curve.points {
            tilt.push(vec![num(t), num(v)]);
        }
        report.verdict(
            "tilt_non_increasing",
            curve.points.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12),
            format!("{:.4?}", curve.points),
        );
        if ctx.group.extended {
            let est = gap.beta_inf_estimate.unwrap_or(f64::NAN);
            report.verdict(
                "tilt_plateau_matches_escape",
                (curve.plateau - est).abs() <= p.tilt_tol,
                format!("plateau {:.4}, escape estimate {est:.4}", curve.plateau),
            );
        } else {
            let small: Vec<&(f64, f64)> = curve.points.iter().filter(|pt| pt.0 <= 1.0).collect();
            let dev = small.iter().map(|pt| (pt.1 - beta.value).abs()).fold(0.0, f64::max);
            report.verdict(
                "tilt_flat_at_small_t",
                dev <= p.tilt_tol,
                format!("max |β̂(φ − tψ) − β̂(φ)| = {dev:.4} for t ≤ 1"),
            );
        }
        report.charts.push(chart("tilt curve", "t", "β̂(φ − tψ)", vec![series("tilt", curve.points.clone())]));
        report.extra.push(("tilt".into(), tilt));
    }
    Ok(report)
}

// -------------------------------------------------------------- density

/// Convergence of Gibbs averages of test potentials to their averages over
/// the target orbit.
pub fn run_density(ctx: &RunContext) -> Result<DriverReport> {
    let p = ctx.config.experiments.density.clone().ok_or_else(|| missing("density"))?;
    let mut pots = vec![ctx.potential_entry(&p.phi)?];
    for id in &p.tests {
        if *id != p.phi {
            pots.push(ctx.potential_entry(id)?);
        }
    }
    let table = ctx.table("density", &pots, &[])?;
    let knobs = ctx.knobs();
    let orbit = closed_geodesic_from_word(&p.word, &ctx.group, knobs.step)?;
    let targets = p
        .tests
        .iter()
        .map(|id| Ok(birkhoff_integral(&Potential::new(ctx.config.potential(id)?, &ctx.group, knobs)?, &orbit)?.average))
        .collect::<Result<Vec<_>>>()?;
    let mut grid = ctx.t_grid();
    let t_max = *grid.last().ok_or_else(|| Error::InvalidInput("empty t grid".into()))?;
    grid.push(t_max / 4.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut columns = vec!["t".to_string()];
    for id in &p.tests {
        columns.extend([format!("{id}_gibbs"), format!("{id}_orbit"), format!("{id}_deviation")]);
    }
    let mut out = Table::new(&columns);
    let mut devs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p.tests.len()];
    for &t in &grid {
        let pr = flow_pressure(&table, &p.phi, t, ctx.n_range())?;
        let ens = GibbsEnsemble::new(&table, &p.phi, &pr)?;
        let mut row = vec![num(t)];
        for (j, id) in p.tests.iter().enumerate() {
            let g = ens.average(id)?;
            let d = (g - targets[j]).abs();
            row.extend([num(g), num(targets[j]), num(d)]);
            devs[j].push((t, d));
        }
        out.push(row);
    }
    let mut report = DriverReport::new("density", out);
    let at = |d: &[(f64, f64)], t: f64| d.iter().find(|x| x.0 == t).map(|x| x.1).unwrap_or(f64::NAN);
    // quadrature of an orbit and of its powers use different nodes, so
    // deviations settle at this level instead of zero
    let floor = DENSITY_FLOOR_FRACTION * p.tol;
    for (j, id) in p.tests.iter().enumerate() {
        let (end, quarter) = (at(&devs[j], t_max), at(&devs[j], t_max / 4.0));
        report.verdict(&format!("{id}_deviation_at_t_max"), end < p.tol, format!("{end:.2e} at t = {t_max} (need < {})", p.tol));
        report.verdict(
            &format!("{id}_deviation_shrinks"),
            end < quarter || end.max(quarter) <= floor,
            format!("{end:.2e} at t = {t_max} vs {quarter:.2e} at t = {}", t_max / 4.0),
        );
        let rises = devs[j].windows(2).filter(|w| w[1].1 > w[0].1.max(floor)).count();
        report.verdict(
            &format!("{id}_deviation_decreasing"),
            rises == 0,
            format!("{rises} increases above {floor:.1e} along the grid"),
        );
    }
    report.charts.push(chart(
        "deviation from the orbit average",
        "t",
        "|∫ψ dm − orbit average|",
        p.tests.iter().zip(&devs).map(|(id, d)| series(id, d.clone())).collect(),
    ));
    Ok(report)
}
