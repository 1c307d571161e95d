//! Growth functions, the Hardy-type operator `Q_alpha`, class membership and
//! numerical verification of the doubling / domination inequalities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("tail integral diverges for alpha = {alpha}")]
    DivergentTail { alpha: f64 },
    #[error("growth function is not strictly positive at t = {t}")]
    NonpositivePhi { t: f64 },
    #[error("invalid growth parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, GrowthError>;

/// A non-decreasing function on `(0, inf)` with `phi(0+) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GrowthFunction {
    /// `t^a`.
    Power { a: f64 },
    /// `t^a * log(e + 1/t)^(-gamma)`.
    PowerLog { a: f64, gamma: f64 },
    /// Piecewise power law through `(t[i], values[i])`, extended by the end slopes.
    Tabulated { t: Vec<f64>, values: Vec<f64> },
}

impl GrowthFunction {
    pub fn power(a: f64) -> Result<Self> {
        let phi = GrowthFunction::Power { a };
        phi.validate()?;
        Ok(phi)
    }

    pub fn power_log(a: f64, gamma: f64) -> Result<Self> {
        let phi = GrowthFunction::PowerLog { a, gamma };
        phi.validate()?;
        Ok(phi)
    }

    pub fn tabulated(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let phi = GrowthFunction::Tabulated { t, values };
        phi.validate()?;
        Ok(phi)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthFunction::Power { a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(GrowthError::InvalidParameter(format!("power exponent {a} must be > 0")));
                }
            }
            GrowthFunction::PowerLog { a, gamma } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(GrowthError::InvalidParameter(format!("power exponent {a} must be > 0")));
                }
                // Monotone for gamma >= 0; negative log powers are rejected.
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(GrowthError::InvalidParameter(format!("log exponent {gamma} must be >= 0")));
                }
            }
            GrowthFunction::Tabulated { t, values } => {
                if t.len() < 2 || t.len() != values.len() {
                    return Err(GrowthError::InvalidParameter(
                        "tabulated growth needs >= 2 nodes and matching value count".into(),
                    ));
                }
                for (i, (&ti, &vi)) in t.iter().zip(values).enumerate() {
                    if !(ti.is_finite() && ti > 0.0) {
                        return Err(GrowthError::InvalidParameter(format!("node t[{i}] = {ti} must be > 0")));
                    }
                    if !(vi.is_finite() && vi > 0.0) {
                        return Err(GrowthError::NonpositivePhi { t: ti });
                    }
                    if i > 0 && (ti <= t[i - 1] || vi < values[i - 1]) {
                        return Err(GrowthError::InvalidParameter(format!(
                            "nodes must increase strictly and values must not decrease (at index {i})"
                        )));
                    }
                }
                if self.tab_slope(0) <= 0.0 {
                    return Err(GrowthError::InvalidParameter(
                        "first tabulated segment must increase so that phi(0+) = 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            GrowthFunction::Power { a } => t.powf(*a),
            GrowthFunction::PowerLog { a, gamma } => {
                t.powf(*a) * (std::f64::consts::E + 1.0 / t).ln().powf(-*gamma)
            }
            GrowthFunction::Tabulated { t: nodes, values } => {
                let (i, p) = self.tab_segment(t);
                let (ti, vi) = if t < nodes[0] { (nodes[0], values[0]) } else { (nodes[i], values[i]) };
                vi * (t / ti).powf(p)
            }
        }
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match self {
            GrowthFunction::Power { a } => format!("t^{a}"),
            GrowthFunction::PowerLog { a, gamma } => format!("t^{a}*log(e+1/t)^-{gamma}"),
            GrowthFunction::Tabulated { t, .. } => format!("tabulated[{} nodes]", t.len()),
        }
    }

    fn tab_slope(&self, seg: usize) -> f64 {
        match self {
            GrowthFunction::Tabulated { t, values } => {
                (values[seg + 1] / values[seg]).ln() / (t[seg + 1] / t[seg]).ln()
            }
            _ => unreachable!(),
        }
    }

    /// Segment index and log-log slope used at `t`.
    fn tab_segment(&self, t: f64) -> (usize, f64) {
        let GrowthFunction::Tabulated { t: nodes, .. } = self else { unreachable!() };
        let n = nodes.len();
        if t <= nodes[0] {
            return (0, self.tab_slope(0));
        }
        if t >= nodes[n - 1] {
            return (n - 1, self.tab_slope(n - 2));
        }
        let i = nodes.partition_point(|&x| x <= t) - 1;
        (i, self.tab_slope(i))
    }
}

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        s += w * (f(m - r * x) + f(m + r * x));
    }
    s * r
}

/// Ratio above which a block sequence is not considered geometrically decaying.
const DECAY_RATIO: f64 = 0.999;
const WINDOW: usize = 8;
const MAX_BLOCKS: usize = 900;

/// `int_0^inf g(v) dv` summed over blocks of width `ln 2`, with a geometric tail bound.
/// Returns `None` when the block sums do not decay geometrically.
fn dyadic_integral(g: impl Fn(f64) -> f64, burn_in: usize) -> Option<f64> {
    let width = std::f64::consts::LN_2;
    let mut blocks: Vec<f64> = Vec::with_capacity(64);
    let mut sum = 0.0;
    let mut stalled = 0usize;
    for k in 0..MAX_BLOCKS {
        let a = k as f64 * width;
        let b = a + width;
        let bk = gauss(&g, a, 0.5 * (a + b)) + gauss(&g, 0.5 * (a + b), b);
        if !bk.is_finite() {
            return None;
        }
        sum += bk;
        blocks.push(bk);
        if k == 0 {
            continue;
        }
        let prev = blocks[k - 1];
        let ratio = if prev > 0.0 { bk / prev } else { 0.0 };
        if k > burn_in && ratio >= DECAY_RATIO {
            stalled += 1;
            if stalled >= WINDOW {
                return None;
            }
        } else {
            stalled = 0;
        }
        if k > burn_in + WINDOW {
            let q = blocks[k - WINDOW..=k]
                .windows(2)
                .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
                .fold(0.0_f64, f64::max);
            if q < DECAY_RATIO {
                let tail = bk * q / (1.0 - q);
                if tail <= 1e-14 * sum {
                    return Some(sum + tail);
                }
            }
        }
    }
    let k = blocks.len() - 1;
    let q = blocks[k - WINDOW..=k]
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0_f64, f64::max);
    if q < DECAY_RATIO {
        Some(sum + blocks[k] * q / (1.0 - q))
    } else {
        None
    }
}

/// `int_lo^hi c (s/t0)^p s^(-alpha-1) ds` for a single power segment.
fn power_segment(c: f64, t0: f64, p: f64, alpha: f64, lo: f64, hi: f64) -> f64 {
    let e = p - alpha;
    let scale = c * t0.powf(-p);
    if e.abs() < 1e-14 {
        scale * (hi / lo).ln()
    } else if hi.is_infinite() {
        // Only reached with e < 0.
        scale * (-lo.powf(e) / e)
    } else {
        scale * (hi.powf(e) - lo.powf(e)) / e
    }
}

fn check_exponent(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GrowthError::InvalidParameter(format!("exponent {alpha} must lie in (0,1)")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(GrowthError::InvalidParameter(format!("t = {t} must be positive and finite")));
    }
    Ok(())
}

/// `Q_alpha phi(t) = t^alpha int_t^inf phi(s) s^(-alpha-1) ds`.
pub fn q_alpha(phi: &GrowthFunction, alpha: f64, t: f64) -> Result<f64> {
    check_exponent(alpha)?;
    check_t(t)?;
    match phi {
        GrowthFunction::Power { a } => {
            if *a >= alpha {
                Err(GrowthError::DivergentTail { alpha })
            } else {
                Ok(t.powf(*a) / (alpha - a))
            }
        }
        GrowthFunction::PowerLog { .. } => q_alpha_numeric(phi, alpha, t),
        GrowthFunction::Tabulated { t: nodes, values } => {
            let n = nodes.len();
            let p_right = phi.tab_slope(n - 2);
            if p_right >= alpha {
                return Err(GrowthError::DivergentTail { alpha });
            }
            let mut total = 0.0;
            let mut lo = t;
            if lo < nodes[0] {
                let hi = nodes[0];
                total += power_segment(values[0], nodes[0], phi.tab_slope(0), alpha, lo, hi);
                lo = hi;
            }
            for i in 0..n - 1 {
                if nodes[i + 1] <= lo {
                    continue;
                }
                let a = lo.max(nodes[i]);
                total += power_segment(values[i], nodes[i], phi.tab_slope(i), alpha, a, nodes[i + 1]);
                lo = nodes[i + 1];
            }
            let a = lo.max(nodes[n - 1]);
            total += power_segment(values[n - 1], nodes[n - 1], p_right, alpha, a, f64::INFINITY);
            Ok(t.powf(alpha) * total)
        }
    }
}

/// `Q_alpha` by quadrature regardless of family (used to cross-check closed forms).
pub fn q_alpha_numeric(phi: &GrowthFunction, alpha: f64, t: f64) -> Result<f64> {
    check_exponent(alpha)?;
    check_t(t)?;
    // Substituting s = t e^v gives int_0^inf phi(t e^v) e^(-alpha v) dv.
    let burn_in = 24 + (1.0 / t).log2().max(0.0) as usize;
    dyadic_integral(|v| phi.eval(t * v.exp()) * (-alpha * v).exp(), burn_in)
        .ok_or(GrowthError::DivergentTail { alpha })
}

/// `int_0^t phi(s) ds / s`; `None` when the Dini integral diverges.
pub fn dini_integral(phi: &GrowthFunction, t: f64) -> Result<Option<f64>> {
    check_t(t)?;
    Ok(match phi {
        GrowthFunction::Power { a } => Some(t.powf(*a) / a),
        GrowthFunction::PowerLog { .. } => {
            let burn_in = 24 + t.log2().max(0.0) as usize;
            dyadic_integral(|v| phi.eval(t * (-v).exp()), burn_in)
        }
        GrowthFunction::Tabulated { t: nodes, values } => {
            let p0 = phi.tab_slope(0);
            let head_end = t.min(nodes[0]);
            let mut total = phi.eval(head_end) / p0;
            let mut lo = head_end;
            for i in 0..nodes.len() {
                if lo >= t {
                    break;
                }
                let hi = if i + 1 < nodes.len() { nodes[i + 1].min(t) } else { t };
                if hi <= lo {
                    continue;
                }
                let p = phi.tab_slope(i.min(nodes.len() - 2));
                // phi(s)/s on a power segment: alpha = 0 in power_segment.
                total += power_segment(values[i], nodes[i], p, 0.0, lo, hi);
                lo = hi;
            }
            Some(total)
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassRow {
    pub t: f64,
    pub dini: f64,
    pub tail: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GrowthClassReport {
    pub beta: f64,
    /// `inf` when either integral diverges.
    pub c_phi_estimate: f64,
    pub is_member: bool,
    pub worst_t: f64,
    pub rows: Vec<ClassRow>,
}

/// Estimates `C_phi` in `int_0^t phi ds/s + Q_beta phi(t) <= C_phi phi(t)` over `t_grid`.
pub fn check_class_membership(phi: &GrowthFunction, beta: f64, t_grid: &[f64]) -> Result<GrowthClassReport> {
    phi.validate()?;
    check_exponent(beta)?;
    if t_grid.is_empty() {
        return Err(GrowthError::InvalidParameter("empty t grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(GrowthError::InvalidParameter("t grid must be sorted".into()));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut c = 0.0_f64;
    let mut worst_t = t_grid[0];
    for &t in t_grid {
        let value = phi.eval(t);
        if !(value > 0.0 && value.is_finite()) {
            return Err(GrowthError::NonpositivePhi { t });
        }
        let dini = dini_integral(phi, t)?.unwrap_or(f64::INFINITY);
        let tail = match q_alpha(phi, beta, t) {
            Ok(q) => q,
            Err(GrowthError::DivergentTail { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let ratio = (dini + tail) / value;
        if ratio > c || (ratio.is_infinite() && c.is_finite()) {
            c = ratio;
            worst_t = t;
        }
        rows.push(ClassRow { t, dini, tail, ratio });
    }
    Ok(GrowthClassReport { beta, c_phi_estimate: c, is_member: c.is_finite(), worst_t, rows })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckRow {
    pub check_id: String,
    pub worst_t: f64,
    /// Smallest relative margin `(rhs - lhs) / max(|lhs|, |rhs|)`.
    pub slack: f64,
    pub pass: bool,
    pub evaluated: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GrowthLemmaReport {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub c_phi: f64,
    pub rows: Vec<CheckRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LemmaOptions {
    pub tolerance: f64,
    /// Comparison exponent below `alpha`; defaults to `0.8 alpha`.
    pub alpha_prime: Option<f64>,
    /// Number of halvings/doublings used for the limit checks.
    pub limit_steps: u32,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        LemmaOptions { tolerance: 1e-9, alpha_prime: None, limit_steps: 64 }
    }
}

struct Tracker {
    id: &'static str,
    slack: f64,
    worst_t: f64,
    count: usize,
}

impl Tracker {
    fn new(id: &'static str) -> Self {
        Tracker { id, slack: f64::INFINITY, worst_t: f64::NAN, count: 0 }
    }

    /// Records `lhs <= rhs` at `t`.
    fn le(&mut self, t: f64, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let s = (rhs - lhs) / scale;
        self.count += 1;
        if s < self.slack || self.worst_t.is_nan() {
            self.slack = s;
            self.worst_t = t;
        }
    }

    fn finish(self, tol: f64) -> CheckRow {
        let (slack, worst_t) = if self.count == 0 { (0.0, 0.0) } else { (self.slack, self.worst_t) };
        CheckRow {
            check_id: self.id.to_string(),
            worst_t,
            slack,
            pass: slack >= -tol && slack.is_finite(),
            evaluated: self.count,
        }
    }
}

/// Checks the monotonicity, doubling, domination and comparison properties of
/// `Q_alpha phi`, and the consequences of `phi` lying in the class for `beta`.
pub fn verify_growth_lemmas(
    phi: &GrowthFunction,
    alpha: f64,
    beta: f64,
    t_grid: &[f64],
    pair_grid: &[f64],
    opts: LemmaOptions,
) -> Result<GrowthLemmaReport> {
    phi.validate()?;
    check_exponent(alpha)?;
    check_exponent(beta)?;
    if t_grid.is_empty() {
        return Err(GrowthError::InvalidParameter("empty t grid".into()));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    for &t in grid.iter().chain(pair_grid) {
        check_t(t)?;
    }
    let alpha_prime = opts.alpha_prime.unwrap_or(0.8 * alpha);
    if !(alpha_prime > 0.0 && alpha_prime < alpha) {
        return Err(GrowthError::InvalidParameter(format!("alpha' = {alpha_prime} must lie in (0, alpha)")));
    }
    let tol = opts.tolerance;
    let q = |t: f64| q_alpha(phi, alpha, t);
    let qs: Vec<f64> = grid.iter().map(|&t| q(t)).collect::<Result<_>>()?;
    let mut rows = Vec::new();

    let mut a = Tracker::new("qalpha_a");
    for i in 1..grid.len() {
        a.le(grid[i], qs[i - 1], qs[i]);
    }
    rows.push(a.finish(tol));

    let mut a_lim = Tracker::new("qalpha_a_limit");
    let mut prev = qs[0];
    let mut t = grid[0];
    for _ in 0..opts.limit_steps {
        t *= 0.5;
        let v = q(t)?;
        a_lim.le(t, v, prev);
        prev = v;
    }
    a_lim.le(t, prev, 0.5 * qs[0]);
    rows.push(a_lim.finish(tol));

    let mut b = Tracker::new("qalpha_b");
    for i in 1..grid.len() {
        b.le(grid[i], grid[i].powf(-alpha) * qs[i], grid[i - 1].powf(-alpha) * qs[i - 1]);
    }
    rows.push(b.finish(tol));

    let mut b_lim = Tracker::new("qalpha_b_limit");
    let last = grid.len() - 1;
    let start = grid[last].powf(-alpha) * qs[last];
    let mut prev = start;
    let mut t = grid[last];
    for _ in 0..opts.limit_steps {
        t *= 2.0;
        let v = t.powf(-alpha) * q(t)?;
        b_lim.le(t, v, prev);
        prev = v;
    }
    b_lim.le(t, prev, 0.5 * start);
    rows.push(b_lim.finish(tol));

    let mut c = Tracker::new("qalpha_c");
    for (i, &t) in grid.iter().enumerate() {
        c.le(t, q(2.0 * t)?, 2f64.powf(alpha) * qs[i]);
    }
    rows.push(c.finish(tol));

    let mut d = Tracker::new("qalpha_d");
    for (i, &t) in grid.iter().enumerate() {
        d.le(t, phi.eval(t), alpha * qs[i]);
        d.le(t, alpha * qs[i], qs[i]);
    }
    rows.push(d.finish(tol));

    let mut e = Tracker::new("qalpha_e");
    let e_const = 2f64.powf(alpha) / std::f64::consts::LN_2;
    for (i, &t) in grid.iter().enumerate() {
        e.le(t, dyadic_sum(phi, alpha, t)?, e_const * qs[i]);
    }
    rows.push(e.finish(tol));

    let mut f = Tracker::new("qalpha_f");
    for (i, &t) in grid.iter().enumerate() {
        f.le(t, qs[i], q_alpha(phi, alpha_prime, t)?);
    }
    rows.push(f.finish(tol));

    // Class constant from the tail condition alone, over every point used below.
    let mut c_phi = 0.0_f64;
    for &t in grid.iter().chain(pair_grid) {
        c_phi = c_phi.max(q_alpha(phi, beta, t)? / phi.eval(t));
    }
    let pb = |t: f64| t.powf(-beta) * phi.eval(t);

    let mut pa = Tracker::new("pro_phi_a");
    let mut pc = Tracker::new("pro_phi_c");
    for &t1 in pair_grid {
        for &t2 in pair_grid {
            if t1 <= t2 {
                pa.le(t2, pb(t2), beta * c_phi * pb(t1));
            }
            pc.le(t1 + t2, phi.eval(t1 + t2), 2.0 * c_phi * (phi.eval(t1) + phi.eval(t2)));
        }
    }
    let mut pbk = Tracker::new("pro_phi_b");
    for &t in &grid {
        let mid = 2f64.powf(beta) * beta * c_phi * phi.eval(t);
        pbk.le(t, phi.eval(2.0 * t), mid);
        pbk.le(t, mid, 2.0 * c_phi * phi.eval(t));
    }
    let mut pd = Tracker::new("pro_phi_d");
    let start = pb(grid[last]);
    let mut prev = start;
    let mut t = grid[last];
    for _ in 0..opts.limit_steps {
        t *= 2.0;
        let v = pb(t);
        pd.le(t, v, prev);
        prev = v;
    }
    pd.le(t, prev, 0.5 * start);
    rows.push(pa.finish(tol));
    rows.push(pbk.finish(tol));
    rows.push(pc.finish(tol));
    rows.push(pd.finish(tol));

    let pass = rows.iter().all(|r| r.pass);
    Ok(GrowthLemmaReport { alpha, alpha_prime, beta, c_phi, rows, pass })
}

/// `t^alpha sum_{k>=0} phi(2^k t) / (2^k t)^alpha`.
pub fn dyadic_sum(phi: &GrowthFunction, alpha: f64, t: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut prev_term = f64::INFINITY;
    let mut stalled = 0;
    for k in 0..1000 {
        let s = t * 2f64.powi(k);
        let term = phi.eval(s) * 2f64.powf(-alpha * k as f64);
        sum += term;
        let ratio = term / prev_term;
        if k > 32 && ratio >= DECAY_RATIO {
            stalled += 1;
            if stalled >= WINDOW {
                return Err(GrowthError::DivergentTail { alpha });
            }
        } else {
            stalled = 0;
        }
        if k > 32 && ratio < DECAY_RATIO && term * ratio / (1.0 - ratio) <= 1e-15 * sum {
            return Ok(sum + term * ratio / (1.0 - ratio));
        }
        prev_term = term;
    }
    Err(GrowthError::DivergentTail { alpha })
}

/// Geometric grid of `n` points between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let phi = GrowthFunction::power(0.3).unwrap();
        assert!((q_alpha(&phi, 0.5, 1.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((q_alpha(&phi, 0.5, 2.0).unwrap() - 6.155_722_066).abs() < 1e-6);
    }

    #[test]
    fn borderline_power_diverges() {
        let phi = GrowthFunction::power(0.5).unwrap();
        for t in [1e-3, 1.0, 7.0] {
            assert_eq!(q_alpha(&phi, 0.5, t), Err(GrowthError::DivergentTail { alpha: 0.5 }));
            assert_eq!(q_alpha_numeric(&phi, 0.5, t), Err(GrowthError::DivergentTail { alpha: 0.5 }));
        }
        let borderline_log = GrowthFunction::power_log(0.5, 1.0).unwrap();
        assert!(q_alpha(&borderline_log, 0.5, 1.0).is_err());
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &(a, alpha) in &[(0.3, 0.5), (0.1, 0.9), (0.45, 0.5), (0.7, 0.75)] {
            let phi = GrowthFunction::power(a).unwrap();
            for &t in &[1e-4, 0.01, 1.0, 3.0, 1e4] {
                let exact = q_alpha(&phi, alpha, t).unwrap();
                let num = q_alpha_numeric(&phi, alpha, t).unwrap();
                assert!(((num - exact) / exact).abs() < 1e-6, "a={a} alpha={alpha} t={t}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn tabulated_power_law_is_exact() {
        let t = log_grid(1e-3, 1e3, 7);
        let values: Vec<f64> = t.iter().map(|s: &f64| s.powf(0.3)).collect();
        let tab = GrowthFunction::tabulated(t, values).unwrap();
        let pw = GrowthFunction::power(0.3).unwrap();
        for &s in &[1e-5, 0.2, 1.0, 50.0, 1e5] {
            assert!((tab.eval(s) / pw.eval(s) - 1.0).abs() < 1e-12);
            let a = q_alpha(&tab, 0.5, s).unwrap();
            let b = q_alpha(&pw, 0.5, s).unwrap();
            assert!((a / b - 1.0).abs() < 1e-10, "{s}: {a} vs {b}");
            let da = dini_integral(&tab, s).unwrap().unwrap();
            let db = dini_integral(&pw, s).unwrap().unwrap();
            assert!((da / db - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tabulated_rejects_bad_input() {
        assert!(GrowthFunction::tabulated(vec![1.0, 2.0], vec![1.0, 0.5]).is_err());
        assert!(GrowthFunction::tabulated(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(GrowthFunction::tabulated(vec![2.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(matches!(
            GrowthFunction::tabulated(vec![1.0, 2.0], vec![-1.0, 2.0]),
            Err(GrowthError::NonpositivePhi { .. })
        ));
    }

    #[test]
    fn membership_examples() {
        let grid = log_grid(1e-4, 1e4, 41);
        let r = check_class_membership(&GrowthFunction::power(0.3).unwrap(), 0.5, &grid).unwrap();
        assert!(r.is_member);
        assert!((r.c_phi_estimate - (1.0 / 0.3 + 1.0 / 0.2)).abs() < 1e-9);
        let r = check_class_membership(&GrowthFunction::power(0.6).unwrap(), 0.5, &grid).unwrap();
        assert!(!r.is_member);
        assert!(r.c_phi_estimate.is_infinite());
        let single = check_class_membership(&GrowthFunction::power(0.3).unwrap(), 0.5, &[2.0]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(single.rows[0].ratio.is_finite());
    }

    #[test]
    fn power_log_membership() {
        let grid = log_grid(1e-4, 1e4, 41);
        let phi = GrowthFunction::power_log(0.3, 1.0).unwrap();
        let r = check_class_membership(&phi, 0.5, &grid).unwrap();
        assert!(r.is_member);
        assert!(r.c_phi_estimate > 1.0 && r.c_phi_estimate < 100.0);
    }

    #[test]
    fn lemma_checks_pass_for_power() {
        let grid = log_grid(1e-4, 1e4, 200);
        let pairs = log_grid(1e-3, 1e3, 25);
        let phi = GrowthFunction::power(0.3).unwrap();
        let rep = verify_growth_lemmas(&phi, 0.5, 0.5, &grid, &pairs, LemmaOptions::default()).unwrap();
        for row in &rep.rows {
            assert!(row.pass, "{row:?}");
            assert!(row.evaluated > 0);
        }
        assert!((rep.c_phi - 5.0).abs() < 1e-9);
    }

    #[test]
    fn lemma_checks_pass_for_power_log() {
        let grid = log_grid(1e-3, 1e3, 30);
        let pairs = log_grid(1e-2, 1e2, 9);
        let phi = GrowthFunction::power_log(0.25, 0.5).unwrap();
        let rep = verify_growth_lemmas(&phi, 0.5, 0.5, &grid, &pairs, LemmaOptions::default()).unwrap();
        for row in &rep.rows {
            assert!(row.pass, "{row:?}");
        }
    }

    #[test]
    fn single_point_grid_is_finite() {
        let phi = GrowthFunction::power(0.3).unwrap();
        let rep = verify_growth_lemmas(&phi, 0.5, 0.5, &[1.0], &[1.0], LemmaOptions::default()).unwrap();
        assert!(rep.rows.iter().all(|r| r.slack.is_finite() && r.pass));
    }

    #[test]
    fn divergence_is_propagated() {
        let phi = GrowthFunction::power(0.6).unwrap();
        let r = verify_growth_lemmas(&phi, 0.5, 0.5, &[1.0], &[1.0], LemmaOptions::default());
        assert!(matches!(r, Err(GrowthError::DivergentTail { .. })));
    }

    #[test]
    fn json_shape() {
        let phi: GrowthFunction = serde_json::from_str(r#"{"family": "power", "a": 0.3}"#).unwrap();
        assert_eq!(phi, GrowthFunction::Power { a: 0.3 });
        let phi: GrowthFunction =
            serde_json::from_str(r#"{"family": "power_log", "a": 0.3, "gamma": 1.0}"#).unwrap();
        assert_eq!(phi, GrowthFunction::PowerLog { a: 0.3, gamma: 1.0 });
    }

    proptest! {
        #[test]
        fn membership_iff_below_beta(a in 0.05f64..0.95, beta in 0.1f64..0.9) {
            prop_assume!((a - beta).abs() > 1e-3);
            let grid = log_grid(1e-2, 1e2, 5);
            let r = check_class_membership(&GrowthFunction::Power { a }, beta, &grid).unwrap();
            prop_assert_eq!(r.is_member, a < beta);
        }

        #[test]
        fn evaluation_monotone_and_vanishing(a in 0.05f64..0.95, gamma in 0.0f64..2.0) {
            let phi = GrowthFunction::PowerLog { a, gamma };
            let grid = log_grid(1e-12, 1e6, 64);
            let vals: Vec<f64> = grid.iter().map(|&t| phi.eval(t)).collect();
            prop_assert!(vals.iter().all(|&v| v > 0.0));
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(vals[0] <= vals[63] * 1e-18f64.powf(a) * (1.0 + 1e-9));
        }

        #[test]
        fn doubling_of_q(a in 0.05f64..0.6, gap in 0.05f64..0.3, t in 1e-3f64..1e3) {
            let alpha = (a + gap).min(0.99);
            let phi = GrowthFunction::PowerLog { a, gamma: 0.5 };
            let q1 = q_alpha(&phi, alpha, t).unwrap();
            let q2 = q_alpha(&phi, alpha, 2.0 * t).unwrap();
            prop_assert!(q2 <= 2f64.powf(alpha) * q1 * (1.0 + 1e-9));
            prop_assert!(phi.eval(t) <= alpha * q1 * (1.0 + 1e-9));
        }
    }
}
