//! Radial eigensystem of the Newtonian operator on a ball.
//!
//! Only the `l = 0` family has a nonzero average over the ball, so it is the
//! only family indexed here. For a ball of radius `a` the eigenvalues are
//! `lambda_n = a^2 / m_n^2` where `m_n` is the n-th positive root of
//! `tan m + 2 m = 0`, lying in `((n - 1/2) pi, n pi)`. Writing
//! `m_n = n pi - pi/2 + gamma_n` gives `tan(gamma_n) = 1 / (2 m_n)`, which is
//! the form solved and checked below: it keeps full relative precision in
//! `gamma_n` even when `m_n` is large.
//!
//! Unnormalized eigenfunctions are `ê_n(x) = sqrt(2 sqrt(lambda_n) / pi) *
//! sin(|x| / sqrt(lambda_n)) / |x|`; everything downstream uses the
//! normalized average `avg_n = (∫ ê_n) / ||ê_n||`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

pub const DEFAULT_N_MAX: usize = 200;

/// Number of trailing terms used to calibrate the O(1/N) tail constant.
const TAIL_CALIBRATION_TERMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenMode {
    pub n: usize,
    /// Root of `tan m + 2m = 0` (dimensionless).
    pub m: f64,
    /// Offset `m - (n - 1/2) pi`.
    pub gamma: f64,
    /// Eigenvalue, length^2.
    pub lambda: f64,
    /// `∫_D e_n` for the L2-normalized eigenfunction, length^(3/2).
    pub avg: f64,
}

impl EigenMode {
    /// `(∫ e_n)^2 / lambda_n`, one term of the series feeding alpha.
    #[inline]
    pub fn weight(&self) -> f64 {
        self.avg * self.avg / self.lambda
    }

    /// Angular frequency of the mode for droplet wave speed `c1`.
    #[inline]
    pub fn frequency(&self, c1: f64) -> f64 {
        c1 / self.lambda.sqrt()
    }

    /// Unnormalized integral and squared norm of `ê_n`, evaluated from the
    /// re-derived closed forms.
    pub fn raw_constants(&self) -> RawConstants {
        let sl = self.lambda.sqrt();
        let pref = (2.0 * sl / PI).sqrt();
        // sin m = -(-1)^n cos(gamma), cos m = (-1)^n sin(gamma)
        let sign = if self.n % 2 == 0 { 1.0 } else { -1.0 };
        let cos_m = sign * self.gamma.sin();
        let integral = pref * 4.0 * PI * self.lambda * (-3.0 * self.m * cos_m);
        let cg2 = self.gamma.cos().powi(2);
        let norm_sq = 4.0 * self.lambda * (self.m + cg2 / (2.0 * self.m));
        let legacy_integral =
            sign * 3.0 * (2.0 * PI.powi(3)).sqrt() * self.lambda.powf(1.25) * self.gamma.cos();
        let legacy_norm_sq = 2.0 * PI * self.lambda * (self.m + cg2 / self.m);
        RawConstants {
            integral,
            norm_sq,
            legacy_integral,
            legacy_norm_sq,
        }
    }
}

/// Unnormalized constants kept for audit. The `legacy_*` entries are the older
/// closed forms, which differ from the re-derived ones by constant factors
/// (and, for the integral, by sign); normalized quantities never use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawConstants {
    pub integral: f64,
    pub norm_sq: f64,
    pub legacy_integral: f64,
    pub legacy_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub radius: f64,
    pub modes: Vec<EigenMode>,
    pub series_sum: f64,
    pub tail_bound: f64,
}

impl EigenSystem {
    pub fn n_max(&self) -> usize {
        self.modes.len()
    }

    /// One JSON object per mode followed by a summary record.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for mode in &self.modes {
            let raw = mode.raw_constants();
            let rec = serde_json::json!({
                "n": mode.n,
                "m": mode.m,
                "gamma": mode.gamma,
                "lambda": mode.lambda,
                "avg": mode.avg,
                "raw_integral": raw.integral,
                "raw_norm_sq": raw.norm_sq,
                "raw_integral_legacy": raw.legacy_integral,
                "raw_norm_sq_legacy": raw.legacy_norm_sq,
            });
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
        let summary = serde_json::json!({
            "radius": self.radius,
            "n_max": self.n_max(),
            "series_sum": self.series_sum,
            "tail_bound": self.tail_bound,
        });
        out.push_str(&serde_json::to_string(&summary)?);
        out.push('\n');
        Ok(out)
    }
}

/// `2 m - cot(gamma)` with `m = (n - 1/2) pi + gamma`; zero exactly at the
/// n-th root. Equal to `tan m + 2m` since `tan((n - 1/2) pi + g) = -cot g`.
pub fn root_residual(n: usize, gamma: f64) -> f64 {
    let m = (n as f64 - 0.5) * PI + gamma;
    2.0 * m - 1.0 / gamma.tan()
}

fn solve_gamma(n: usize) -> f64 {
    // residual is increasing in gamma on (0, pi/2)
    let mut lo = 0.0f64;
    let mut hi = 0.5 * PI;
    // residual(lo) = -inf; bisect until the bracket is below 1e-13 wide.
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if root_residual(n, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut g = 0.5 * (lo + hi);
    // One Newton polish; d/dgamma (2m - cot g) = 2 + 1/sin^2 g.
    let s = g.sin();
    let step = root_residual(n, g) / (2.0 + 1.0 / (s * s));
    let polished = g - step;
    if polished > 0.0 && polished < 0.5 * PI
        && root_residual(n, polished).abs() <= root_residual(n, g).abs()
    {
        g = polished;
    }
    g
}

/// First `n_max` roots as `(m_n, gamma_n)`.
pub fn solve_roots(n_max: usize) -> Vec<(f64, f64)> {
    (1..=n_max)
        .map(|n| {
            let g = solve_gamma(n);
            ((n as f64 - 0.5) * PI + g, g)
        })
        .collect()
}

/// Normalized average `∫_B e_n` over a ball of radius `a`, from `m` and `gamma`.
fn normalized_average(n: usize, m: f64, gamma: f64, lambda: f64) -> f64 {
    let sl = lambda.sqrt();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let cos_m = sign * gamma.sin();
    // ∫_0^a r sin(r/sl) dr = lambda (sin m - m cos m) = -3 m lambda cos m
    let integral = 4.0 * PI * lambda * (-3.0 * m * cos_m);
    // ∫_0^a sin^2(r/sl) dr = sl (m - sin m cos m) / 2 = sl (m + cos^2 g / (2m)) / 2
    let norm_sq = 2.0 * PI * sl * (m + gamma.cos().powi(2) / (2.0 * m));
    integral / norm_sq.sqrt()
}

pub fn build_eigensystem(a: f64, n_max: usize) -> Result<EigenSystem> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "droplet radius must be positive, got {a}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let modes: Vec<EigenMode> = solve_roots(n_max)
        .into_iter()
        .enumerate()
        .map(|(i, (m, gamma))| {
            let n = i + 1;
            let lambda = a * a / (m * m);
            EigenMode {
                n,
                m,
                gamma,
                lambda,
                avg: normalized_average(n, m, gamma, lambda),
            }
        })
        .collect();
    let mut sys = EigenSystem {
        radius: a,
        modes,
        series_sum: 0.0,
        tail_bound: 0.0,
    };
    let (value, tail) = series_sum(&sys);
    sys.series_sum = value;
    sys.tail_bound = tail;
    Ok(sys)
}

/// `Σ (∫ e_n)^2 / lambda_n` over the stored modes, with an O(1/N) estimate of
/// the truncated remainder. Terms decay like `C / n^2`; `C` is taken as the
/// largest `n^2 * term_n` among the last ten modes.
pub fn series_sum(sys: &EigenSystem) -> (f64, f64) {
    let mut acc = CompensatedSum::new();
    for mode in &sys.modes {
        acc.add(mode.weight());
    }
    let n_max = sys.modes.len();
    let start = n_max.saturating_sub(TAIL_CALIBRATION_TERMS);
    let c = sys.modes[start..]
        .iter()
        .map(|m| (m.n as f64).powi(2) * m.weight())
        .fold(0.0f64, f64::max);
    (acc.value(), c / n_max as f64)
}

/// Partial sums of the series, ascending in n.
pub fn partial_sums(sys: &EigenSystem) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    sys.modes
        .iter()
        .map(|m| {
            acc.add(m.weight());
            acc.value()
        })
        .collect()
}

/// `c1 * T < a`: the droplet sine family stays a Riesz basis on (0, T).
pub fn check_riesz_condition(a: f64, c1: f64, horizon: f64) -> bool {
    c1 * horizon < a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_roots_match_bisection_oracle() {
        let roots = solve_roots(2);
        assert!((roots[0].0 - 1.8366).abs() < 5e-5, "{}", roots[0].0);
        assert!((roots[0].1 - 0.2658).abs() < 5e-5);
        assert!((roots[1].0 - 4.8158).abs() < 5e-5, "{}", roots[1].0);
        assert!((roots[1].1 - 0.10345).abs() < 5e-5);
    }

    #[test]
    fn small_roots_satisfy_plain_tan_equation() {
        // direct f64 evaluation is only meaningful while tan' is moderate
        for (m, _) in solve_roots(3) {
            assert!((m.tan() + 2.0 * m).abs() < 1e-11, "m={m}");
        }
    }

    #[test]
    fn roots_are_bracketed_and_gamma_decreases() {
        let roots = solve_roots(200);
        for (i, &(m, g)) in roots.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!(m > (n - 0.5) * PI && m < n * PI);
            assert!(root_residual(i + 1, g).abs() <= 1e-12);
            if i > 0 {
                assert!(g < roots[i - 1].1);
            }
        }
    }

    #[test]
    fn eigenvalue_identity_and_ordering() {
        let sys = build_eigensystem(0.3, 50).unwrap();
        for w in sys.modes.windows(2) {
            assert!(w[1].lambda < w[0].lambda);
        }
        for m in &sys.modes {
            assert!((m.lambda * m.m * m.m - 0.09).abs() < 1e-15);
        }
    }

    #[test]
    fn average_sign_alternates() {
        let sys = build_eigensystem(1.0, 20).unwrap();
        for m in &sys.modes {
            let expected = if m.n % 2 == 1 { 1.0 } else { -1.0 };
            assert_eq!(m.avg.signum(), expected, "n = {}", m.n);
        }
    }

    #[test]
    fn first_term_at_unit_radius() {
        let sys = build_eigensystem(1.0, 1).unwrap();
        assert!((sys.series_sum - 13.71).abs() < 0.01, "{}", sys.series_sum);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(build_eigensystem(0.0, 5).is_err());
        assert!(build_eigensystem(-1.0, 5).is_err());
    }

    #[test]
    fn radius_scaling() {
        let s1 = build_eigensystem(1.0, 40).unwrap();
        let s2 = build_eigensystem(2.0, 40).unwrap();
        assert!((s2.series_sum / s1.series_sum - 2.0).abs() < 1e-13);
        for (a, b) in s1.modes.iter().zip(&s2.modes) {
            assert!((b.avg / a.avg - 2f64.powf(1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_bound_halves_when_n_doubles() {
        let a = build_eigensystem(1.0, 100).unwrap();
        let b = build_eigensystem(1.0, 200).unwrap();
        let r = b.tail_bound / a.tail_bound;
        assert!((0.4..=0.6).contains(&r), "ratio {r}");
    }

    #[test]
    fn riesz_condition_cases() {
        assert!(check_riesz_condition(0.01, 0.001, 5.0));
        assert!(!check_riesz_condition(0.01, 0.01, 2.0));
        for a in [1e-3, 0.05, 2.0] {
            assert!(check_riesz_condition(a, 0.9 * a, 1.0));
        }
    }

    #[test]
    fn json_lines_have_one_record_per_mode() {
        let sys = build_eigensystem(0.5, 7).unwrap();
        let text = sys.to_json_lines().unwrap();
        assert_eq!(text.lines().count(), 8);
        let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        assert!(last["series_sum"].as_f64().unwrap() > 0.0);
    }
}
