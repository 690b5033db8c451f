//! Closed-form stick-breaking weight diagnostics under Gamma mixing.
//!
//! The first GEM weight satisfies w1 | α ~ Beta(1, α), and mixing over
//! α ~ Gamma(a, b) yields closed forms for its density, CDF, quantiles and
//! tail probabilities. w1 is in size-biased order: Pr(w1 > t) is the
//! probability that a randomly selected unit's cluster carries mass above t.
//! For t ≥ 0.5 a weight above t is necessarily the largest, so the 0.5 tail
//! is an exact majority-dominance probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::shared_log_stirling;
use crate::quadrature::{
    gamma_expectation, marginal_pmf, mixed_moments, shared_rule, QuadratureRule, DEFAULT_ORDER,
};
use crate::GammaHyperprior;

/// Tail probability of w1 at a threshold, with hyperparameter gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1TailSummary {
    pub threshold: f64,
    pub probability: f64,
    pub grad_a: f64,
    pub grad_b: f64,
}

fn check_unit_open(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() || x <= 0.0 || x >= 1.0 {
        return Err(Error::Domain(format!("{what} must lie in (0, 1), got {x}")));
    }
    Ok(())
}

/// Pr(w1 > t | a, b) = (b / (b − ln(1 − t)))^a with gradients
/// ∂S/∂a = S ln(b/(b+c_t)) and ∂S/∂b = S a c_t / (b (b + c_t)),
/// where c_t = −ln(1 − t).
pub fn w1_survival(t: f64, hyper: &GammaHyperprior) -> Result<W1TailSummary> {
    check_unit_open(t, "dominance threshold t")?;
    let c_t = -(-t).ln_1p();
    let ratio = hyper.b / (hyper.b + c_t);
    let probability = (hyper.a * ratio.ln()).exp();
    Ok(W1TailSummary {
        threshold: t,
        probability,
        grad_a: probability * ratio.ln(),
        grad_b: probability * hyper.a * c_t / (hyper.b * (hyper.b + c_t)),
    })
}

/// Marginal density of w1 at x ∈ (0, 1).
pub fn w1_density(x: f64, hyper: &GammaHyperprior) -> Result<f64> {
    check_unit_open(x, "w1 density argument")?;
    let c = -(-x).ln_1p();
    // a b^a / ((1-x) (b + c)^{a+1}), evaluated in logs
    let log_density = hyper.a.ln() + hyper.a * hyper.b.ln() - (1.0 - x).ln()
        - (hyper.a + 1.0) * (hyper.b + c).ln();
    Ok(log_density.exp())
}

/// Marginal CDF of w1 at x ∈ (0, 1); complement of the survival function.
pub fn w1_cdf(x: f64, hyper: &GammaHyperprior) -> Result<f64> {
    Ok(1.0 - w1_survival(x, hyper)?.probability)
}

/// Quantile of w1 at u ∈ (0, 1): 1 − exp(b [1 − (1−u)^{−1/a}]).
pub fn w1_quantile(u: f64, hyper: &GammaHyperprior) -> Result<f64> {
    check_unit_open(u, "quantile level u")?;
    Ok(-(hyper.b * (1.0 - (1.0 - u).powf(-1.0 / hyper.a))).exp_m1())
}

// I_c(a, b) = E[(alpha + c)^{-1}] by quadrature on the shared nodes. The
// incomplete-gamma closed form is fragile for a >= 1 (analytic continuation),
// so it is kept only as a cross-check oracle for a < 1.
fn inverse_moment(c: f64, hyper: &GammaHyperprior, rule: &QuadratureRule) -> Result<f64> {
    gamma_expectation(|alpha| 1.0 / (alpha + c), hyper, rule)
}

/// E[w1] = E[1/(1+α)] under the hyperprior; equals E[ρ].
pub fn w1_mean(hyper: &GammaHyperprior, rule: &QuadratureRule) -> Result<f64> {
    inverse_moment(1.0, hyper, rule)
}

/// Moments of the co-clustering (Simpson) index ρ = Σ_h w_h².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of ρ via the partial-fraction reduction
/// E[ρ²] = (5/2) I₁ − 4 I₂ + (3/2) I₃.
pub fn rho_moments(hyper: &GammaHyperprior, rule: &QuadratureRule) -> Result<RhoMoments> {
    let i1 = inverse_moment(1.0, hyper, rule)?;
    let i2 = inverse_moment(2.0, hyper, rule)?;
    let i3 = inverse_moment(3.0, hyper, rule)?;
    let second = 2.5 * i1 - 4.0 * i2 + 1.5 * i3;
    let mut variance = second - i1 * i1;
    if variance < 0.0 {
        if variance < -1e-10 {
            return Err(Error::Numerical(format!(
                "negative co-clustering variance {variance} beyond cancellation tolerance"
            )));
        }
        variance = 0.0;
    }
    Ok(RhoMoments {
        mean: i1,
        variance,
    })
}

/// Dominance-risk band for Pr(w1 > 0.5). Bands are half-open on the right,
/// so boundary values take the higher-risk label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Moderate,
    Substantial,
    High,
}

impl std::fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RiskLevel::Low => "Low",
            RiskLevel::Moderate => "Moderate",
            RiskLevel::Substantial => "Substantial",
            RiskLevel::High => "High",
        };
        write!(f, "{s}")
    }
}

/// Classifies Pr(w1 > 0.5) into the interpretation bands
/// [0, 0.20) Low, [0.20, 0.40) Moderate, [0.40, 0.60) Substantial, ≥0.60 High.
pub fn classify_risk(p_dom: f64) -> RiskLevel {
    if p_dom < 0.20 {
        RiskLevel::Low
    } else if p_dom < 0.40 {
        RiskLevel::Moderate
    } else if p_dom < 0.60 {
        RiskLevel::Substantial
    } else {
        RiskLevel::High
    }
}

/// Dominance warning trigger on Pr(w1 > 0.5).
pub const DOMINANCE_TRIGGER: f64 = 0.40;

/// Location/shape summary of the induced marginal of K_J. Quantiles are the
/// smallest k whose CDF reaches the level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub mean: f64,
    pub variance: f64,
    pub mode: usize,
    pub median: usize,
    pub q05: usize,
    pub q10: usize,
    pub q90: usize,
    pub q95: usize,
}

/// Composite prior-predictive diagnostics for a hyperprior at design size J.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub k_summary: KSummary,
    /// Tail summaries at the default thresholds 0.5 and 0.9.
    pub w1_tails: Vec<W1TailSummary>,
    pub w1_mean: f64,
    pub rho_mean: f64,
    pub rho_var: f64,
    pub risk_level: RiskLevel,
    pub warnings: Vec<String>,
}

fn smallest_k_reaching(cdf: &[f64], level: f64) -> usize {
    for (idx, &c) in cdf.iter().enumerate() {
        if c >= level {
            return idx + 1;
        }
    }
    cdf.len()
}

/// Diagnostics at the default quadrature order.
pub fn diagnostics(j: usize, hyper: &GammaHyperprior) -> Result<DiagnosticsReport> {
    diagnostics_with_order(j, hyper, DEFAULT_ORDER)
}

pub fn diagnostics_with_order(
    j: usize,
    hyper: &GammaHyperprior,
    order: usize,
) -> Result<DiagnosticsReport> {
    if j < 2 {
        return Err(Error::Domain(format!("diagnostics require J >= 2, got {j}")));
    }
    let table = shared_log_stirling(j)?;
    let rule = shared_rule(hyper.a, order)?;
    let pmf = marginal_pmf(j, hyper, &table, &rule)?;
    let mm = mixed_moments(j, hyper, &rule)?;

    // Mode: smallest k attaining the maximum mass.
    let mut mode = 1usize;
    let mut best = pmf[0];
    for (idx, &p) in pmf.iter().enumerate().skip(1) {
        if p > best {
            best = p;
            mode = idx + 1;
        }
    }
    let mut cdf = Vec::with_capacity(j);
    let mut acc = 0.0;
    for &p in &pmf {
        acc += p;
        cdf.push(acc);
    }
    let k_summary = KSummary {
        mean: mm.mean,
        variance: mm.variance,
        mode,
        median: smallest_k_reaching(&cdf, 0.5),
        q05: smallest_k_reaching(&cdf, 0.05),
        q10: smallest_k_reaching(&cdf, 0.10),
        q90: smallest_k_reaching(&cdf, 0.90),
        q95: smallest_k_reaching(&cdf, 0.95),
    };

    let tail_05 = w1_survival(0.5, hyper)?;
    let tail_09 = w1_survival(0.9, hyper)?;
    let w1_mean_val = w1_mean(hyper, &rule)?;
    let rho = rho_moments(hyper, &rule)?;
    let risk_level = classify_risk(tail_05.probability);

    let mut warnings = Vec::new();
    if tail_05.probability > DOMINANCE_TRIGGER {
        warnings.push(format!(
            "dominance risk: Pr(w1 > 0.5) = {:.3} exceeds {DOMINANCE_TRIGGER}; \
             Dual-Anchor refinement recommended",
            tail_05.probability
        ));
    }

    Ok(DiagnosticsReport {
        k_summary,
        w1_tails: vec![tail_05, tail_09],
        w1_mean: w1_mean_val,
        rho_mean: rho.mean,
        rho_var: rho.variance,
        risk_level,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hyper(a: f64, b: f64) -> GammaHyperprior {
        GammaHyperprior::new(a, b).unwrap()
    }

    #[test]
    fn survival_reference_values() {
        // Vague Gamma(1,1): 1/(1 + ln 2)
        let s = w1_survival(0.5, &hyper(1.0, 1.0)).unwrap();
        assert_relative_eq!(
            s.probability,
            1.0 / (1.0 + std::f64::consts::LN_2),
            max_relative = 1e-14
        );
        assert_abs_diff_eq!(s.probability, 0.591, epsilon = 5e-4);

        // Worked example hyperprior.
        let s = w1_survival(0.9, &hyper(1.407, 1.076)).unwrap();
        assert_abs_diff_eq!(s.probability, 0.20, epsilon = 0.01);
        let s = w1_survival(0.5, &hyper(1.407, 1.076)).unwrap();
        assert_abs_diff_eq!(s.probability, 0.50, epsilon = 0.01);

        // Further reference hyperpriors.
        let s = w1_survival(0.5, &hyper(1.67, 1.65)).unwrap();
        assert_abs_diff_eq!(s.probability, 0.557, epsilon = 5e-3);
        let s = w1_survival(0.5, &hyper(5.18, 0.34)).unwrap();
        assert_abs_diff_eq!(s.probability, 0.003, epsilon = 1e-3);
    }

    #[test]
    fn survival_limits_and_domain() {
        let s = w1_survival(1e-12, &hyper(1.4, 1.1)).unwrap();
        assert_abs_diff_eq!(s.probability, 1.0, epsilon = 1e-9);
        assert!(w1_survival(0.0, &hyper(1.0, 1.0)).is_err());
        assert!(w1_survival(1.0, &hyper(1.0, 1.0)).is_err());
    }

    #[test]
    fn survival_gradient_signs_and_fd() {
        for &(a, b) in &[(0.7, 0.5), (1.408, 1.077), (3.0, 2.0)] {
            for &t in &[0.5, 0.9] {
                let h = hyper(a, b);
                let s = w1_survival(t, &h).unwrap();
                assert!(s.probability > 0.0 && s.probability < 1.0);
                assert!(s.grad_a < 0.0);
                assert!(s.grad_b > 0.0);
                let eps_a = 1e-6 * a;
                let fd_a = (w1_survival(t, &hyper(a + eps_a, b)).unwrap().probability
                    - w1_survival(t, &hyper(a - eps_a, b)).unwrap().probability)
                    / (2.0 * eps_a);
                assert_relative_eq!(s.grad_a, fd_a, max_relative = 1e-6);
                let eps_b = 1e-6 * b;
                let fd_b = (w1_survival(t, &hyper(a, b + eps_b)).unwrap().probability
                    - w1_survival(t, &hyper(a, b - eps_b)).unwrap().probability)
                    / (2.0 * eps_b);
                assert_relative_eq!(s.grad_b, fd_b, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn survival_monotone_in_threshold_and_parameters() {
        let h = hyper(1.4, 1.1);
        let mut prev = 1.0;
        for &t in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let s = w1_survival(t, &h).unwrap().probability;
            assert!(s < prev);
            prev = s;
        }
        // Decreasing in a, increasing in b.
        let base = w1_survival(0.5, &h).unwrap().probability;
        assert!(w1_survival(0.5, &hyper(2.0, 1.1)).unwrap().probability < base);
        assert!(w1_survival(0.5, &hyper(1.4, 2.0)).unwrap().probability > base);
    }

    #[test]
    fn cdf_quantile_round_trip() {
        let h = hyper(1.408, 1.077);
        for &u in &[0.1, 0.5, 0.9] {
            let x = w1_quantile(u, &h).unwrap();
            assert_relative_eq!(w1_cdf(x, &h).unwrap(), u, max_relative = 1e-10);
        }
        // Complement identity is exact by construction.
        let x = 0.37;
        assert_eq!(
            w1_cdf(x, &h).unwrap(),
            1.0 - w1_survival(x, &h).unwrap().probability
        );
    }

    #[test]
    fn density_integrates_to_cdf() {
        // Plain Simpson on [lo, x0] against the closed-form CDF.
        let h = hyper(1.408, 1.077);
        for &x0 in &[0.3, 0.9] {
            let n = 20_000usize;
            let lo = 1e-12;
            let step = (x0 - lo) / n as f64;
            let mut acc = w1_density(lo, &h).unwrap() + w1_density(x0, &h).unwrap();
            for i in 1..n {
                let x = lo + i as f64 * step;
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * w1_density(x, &h).unwrap();
            }
            let integral = acc * step / 3.0;
            assert_abs_diff_eq!(integral, w1_cdf(x0, &h).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn density_total_mass_is_one() {
        // Substituting x = 1 − e^{b−u}, then u = e^s, turns the density
        // integral into a smooth, exponentially decaying integrand in s;
        // Simpson over s covers the full mass to below 1e-8.
        let h = hyper(1.408, 1.077);
        let integrand = |s: f64| -> f64 {
            let u = s.exp();
            // density(x(u)) dx = a b^a u^{-(a+1)} du, du = u ds
            (h.a.ln() + h.a * h.b.ln() - h.a * u.ln()).exp()
        };
        let (s_lo, s_hi) = (h.b.ln(), h.b.ln() + 30.0);
        let n = 40_000usize;
        let step = (s_hi - s_lo) / n as f64;
        let mut acc = integrand(s_lo) + integrand(s_hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * integrand(s_lo + i as f64 * step);
        }
        let integral = acc * step / 3.0;
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn w1_mean_reference_and_oracle_values() {
        // Worked example: E[rho] = E[w1] ~ 0.52.
        let h = hyper(1.407, 1.076);
        let rule = shared_rule(h.a, 80).unwrap();
        let m = w1_mean(&h, &rule).unwrap();
        assert_abs_diff_eq!(m, 0.52, epsilon = 0.01);

        // Quasi-degenerate prior at alpha = 1.
        let h = hyper(1e6, 1e6);
        let rule = shared_rule(h.a, 80).unwrap();
        let m = w1_mean(&h, &rule).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-4);

        // Gamma(1,1): closed form e * Gamma(0, 1), 30-digit reference.
        let h = hyper(1.0, 1.0);
        let rule = shared_rule(1.0, 80).unwrap();
        let m = w1_mean(&h, &rule).unwrap();
        assert_abs_diff_eq!(m, 0.5963473623231941, epsilon = 1e-9);
    }

    #[test]
    fn incomplete_gamma_closed_form_cross_check_below_one() {
        // I_c(a,b) = b^a c^{a-1} e^{bc} Gamma(1-a, bc) for a < 1; the
        // quadrature route must agree with the special-function route.
        use crate::specfun::upper_incomplete_gamma;
        let (a, b) = (0.7, 1.3);
        let h = hyper(a, b);
        let rule = shared_rule(a, 80).unwrap();
        let quad = w1_mean(&h, &rule).unwrap();
        let closed = b.powf(a) * (b).exp() * upper_incomplete_gamma(1.0 - a, b).unwrap();
        assert_relative_eq!(quad, closed, max_relative = 1e-9);
        assert_abs_diff_eq!(closed, 0.7279881940079365, epsilon = 1e-10);
    }

    #[test]
    fn partial_fraction_identity() {
        // (alpha+6)/((alpha+1)(alpha+2)(alpha+3)) = 5/(2(alpha+1)) - 4/(alpha+2) + 3/(2(alpha+3))
        for &alpha in &[0.5, 1.0, 7.0] {
            let lhs = (alpha + 6.0) / ((alpha + 1.0) * (alpha + 2.0) * (alpha + 3.0));
            let rhs = 2.5 / (alpha + 1.0) - 4.0 / (alpha + 2.0) + 1.5 / (alpha + 3.0);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_moments_degenerate_prior() {
        // alpha ~ delta_1: E[rho] = 1/2, Var(rho) = 1/24.
        let h = hyper(1e6, 1e6);
        let rule = shared_rule(h.a, 80).unwrap();
        let rho = rho_moments(&h, &rule).unwrap();
        assert_abs_diff_eq!(rho.mean, 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(rho.variance, 1.0 / 24.0, epsilon = 1e-3);
    }

    #[test]
    fn rho_mean_equals_w1_mean() {
        let h = hyper(1.408, 1.077);
        let rule = shared_rule(h.a, 80).unwrap();
        let rho = rho_moments(&h, &rule).unwrap();
        assert_eq!(rho.mean, w1_mean(&h, &rule).unwrap());
        assert!(rho.variance >= 0.0);
    }

    #[test]
    fn risk_bands() {
        assert_eq!(classify_risk(0.19), RiskLevel::Low);
        assert_eq!(classify_risk(0.20), RiskLevel::Moderate);
        assert_eq!(classify_risk(0.39), RiskLevel::Moderate);
        assert_eq!(classify_risk(0.40), RiskLevel::Substantial);
        assert_eq!(classify_risk(0.59), RiskLevel::Substantial);
        assert_eq!(classify_risk(0.60), RiskLevel::High);
        assert_eq!(classify_risk(0.75), RiskLevel::High);
    }

    #[test]
    fn diagnostics_worked_example() {
        let h = hyper(1.408, 1.077);
        let d = diagnostics(50, &h).unwrap();
        assert_abs_diff_eq!(d.w1_tails[0].probability, 0.50, epsilon = 0.01);
        assert_abs_diff_eq!(d.w1_tails[1].probability, 0.20, epsilon = 0.01);
        assert_eq!(d.k_summary.q05, 1);
        assert_eq!(d.k_summary.q95, 11);
        assert_eq!(d.k_summary.median, 4);
        assert_eq!(d.risk_level, RiskLevel::Substantial);
        assert!(!d.warnings.is_empty(), "dominance warning expected");
        assert!(d.k_summary.q05 <= d.k_summary.q10);
        assert!(d.k_summary.q10 <= d.k_summary.q90);
        assert!(d.k_summary.q90 <= d.k_summary.q95);
    }

    #[test]
    fn diagnostics_low_risk_case() {
        let d = diagnostics(100, &hyper(5.18, 0.34)).unwrap();
        assert!(d.w1_tails[0].probability < 0.01);
        assert_eq!(d.risk_level, RiskLevel::Low);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn diagnostics_substantial_case() {
        let d = diagnostics(100, &hyper(1.67, 1.65)).unwrap();
        assert_abs_diff_eq!(d.w1_tails[0].probability, 0.557, epsilon = 5e-3);
        assert!(!d.warnings.is_empty());
    }
}
