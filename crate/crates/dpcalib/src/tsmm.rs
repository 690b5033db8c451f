//! Two-stage moment matching: elicitation-input resolution, feasibility
//! screening, the closed-form stage-1 initializer, and the exact-moment
//! Newton refinement (A2-MN).

use crate::error::{Error, Result};
use crate::quadrature::{mixed_moments, moments_and_jacobian, shared_rule, MixedMoments};
use crate::specfun::normal_quantile;
use crate::GammaHyperprior;

/// Qualitative confidence level mapped to a variance inflation factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VifLevel {
    High,
    Medium,
    Low,
}

impl VifLevel {
    /// Var(K_J) = VIF · (μ_K − 1).
    pub fn factor(&self) -> f64 {
        match self {
            VifLevel::High => 1.5,
            VifLevel::Medium => 2.5,
            VifLevel::Low => 5.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(VifLevel::High),
            "medium" => Ok(VifLevel::Medium),
            "low" => Ok(VifLevel::Low),
            other => Err(Error::InvalidInput(format!(
                "confidence must be high, medium or low, got '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for VifLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VifLevel::High => "high",
            VifLevel::Medium => "medium",
            VifLevel::Low => "low",
        };
        write!(f, "{s}")
    }
}

/// How the variance target was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySource {
    /// Var(K_J) given directly.
    Direct,
    /// Confidence level through the VIF mapping.
    Vif(VifLevel),
    /// Coefficient of variation: Var = (cv · μ_K)².
    Cv(f64),
    /// Central interval [k_lo, k_hi] with coverage q, via a normal proxy.
    Interval { k_lo: f64, k_hi: f64, coverage: f64 },
}

impl std::fmt::Display for UncertaintySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UncertaintySource::Direct => write!(f, "direct"),
            UncertaintySource::Vif(level) => write!(f, "vif({level})"),
            UncertaintySource::Cv(cv) => write!(f, "cv({cv})"),
            UncertaintySource::Interval { k_lo, k_hi, coverage } => {
                write!(f, "interval({k_lo}, {k_hi}, {coverage})")
            }
        }
    }
}

/// Elicited design-conditional target for `K_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationTarget {
    pub j: usize,
    pub mu_k: f64,
    pub var_k: f64,
    pub uncertainty_source: UncertaintySource,
}

/// Resolves `(J, μ_K, uncertainty spec)` into a full target.
pub fn resolve_target(j: usize, mu_k: f64, spec: UncertaintySource) -> Result<ElicitationTarget> {
    if j < 2 {
        return Err(Error::Domain(format!("design size J must be >= 2, got {j}")));
    }
    if !mu_k.is_finite() || mu_k < 1.0 || mu_k > j as f64 {
        return Err(Error::Infeasible(format!(
            "target mean E[K_J] = {mu_k} must lie in [1, J = {j}]"
        )));
    }
    let var_k = match &spec {
        UncertaintySource::Direct => {
            return Err(Error::InvalidInput(
                "direct source requires resolve_target_direct with an explicit variance".into(),
            ))
        }
        UncertaintySource::Vif(level) => level.factor() * (mu_k - 1.0),
        UncertaintySource::Cv(cv) => {
            if !cv.is_finite() || *cv <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "coefficient of variation must be positive, got {cv}"
                )));
            }
            (cv * mu_k).powi(2)
        }
        UncertaintySource::Interval { k_lo, k_hi, coverage } => {
            if !(k_lo.is_finite() && k_hi.is_finite()) || *k_lo < 1.0 || k_lo >= k_hi || *k_hi > j as f64
            {
                return Err(Error::InvalidInput(format!(
                    "interval requires 1 <= k_lo < k_hi <= J, got [{k_lo}, {k_hi}] with J = {j}"
                )));
            }
            if !(*coverage > 0.0 && *coverage < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "interval coverage must lie in (0, 1), got {coverage}"
                )));
            }
            let z = normal_quantile((1.0 + coverage) / 2.0)?;
            ((k_hi - k_lo) / (2.0 * z)).powi(2)
        }
    };
    Ok(ElicitationTarget {
        j,
        mu_k,
        var_k,
        uncertainty_source: spec,
    })
}

/// Resolves a target with an explicitly supplied variance.
pub fn resolve_target_direct(j: usize, mu_k: f64, var_k: f64) -> Result<ElicitationTarget> {
    if j < 2 {
        return Err(Error::Domain(format!("design size J must be >= 2, got {j}")));
    }
    if !mu_k.is_finite() || mu_k < 1.0 || mu_k > j as f64 {
        return Err(Error::Infeasible(format!(
            "target mean E[K_J] = {mu_k} must lie in [1, J = {j}]"
        )));
    }
    if !var_k.is_finite() || var_k < 0.0 {
        return Err(Error::InvalidInput(format!(
            "target variance must be a nonnegative real, got {var_k}"
        )));
    }
    Ok(ElicitationTarget {
        j,
        mu_k,
        var_k,
        uncertainty_source: UncertaintySource::Direct,
    })
}

/// Stage-1 feasibility classification; hard violations are errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Feasibility {
    Feasible,
    /// σ_K² ≤ μ_K − 1: infeasible for the stage-1 proxy only; the projection
    /// produces a numerically stable initializer and stage 2 re-targets the
    /// original moments (exact moments are conditionally underdispersed, so
    /// such targets can still be matched exactly).
    ProjectionRequired,
}

/// Hard-rejects violations of 1 ≤ μ_K ≤ J and 0 ≤ σ_K² ≤ (J−1)²/4
/// (Popoviciu's bound on a variable supported on {1, …, J}); flags
/// σ_K² ≤ μ_K − 1 as requiring the stage-1 projection.
pub fn feasibility_check(target: &ElicitationTarget) -> Result<Stage1Feasibility> {
    let jf = target.j as f64;
    if target.mu_k < 1.0 || target.mu_k > jf {
        return Err(Error::Infeasible(format!(
            "target mean E[K_J] = {} violates 1 <= mu_K <= J = {}",
            target.mu_k, target.j
        )));
    }
    let popoviciu = (jf - 1.0) * (jf - 1.0) / 4.0;
    if target.var_k < 0.0 || target.var_k > popoviciu {
        return Err(Error::Infeasible(format!(
            "target variance {} violates 0 <= var_K <= (J-1)^2/4 = {popoviciu}",
            target.var_k
        )));
    }
    if target.var_k <= target.mu_k - 1.0 {
        Ok(Stage1Feasibility::ProjectionRequired)
    } else {
        Ok(Stage1Feasibility::Feasible)
    }
}

/// Scaling constant for the stage-1 proxy mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    /// c_J = ln J (default).
    #[default]
    LogJ,
    /// c_J = H_{J−1}, the (J−1)-th harmonic number.
    Harmonic,
}

impl Scaling {
    fn constant(&self, j: usize) -> f64 {
        match self {
            Scaling::LogJ => (j as f64).ln(),
            Scaling::Harmonic => (1..j).map(|i| 1.0 / i as f64).sum(),
        }
    }
}

/// Closed-form stage-1 initializer from the shifted Poisson–Gamma proxy:
/// with μ₀ = μ_K − 1, a₀ = μ₀²/(σ²_eff − μ₀) and b₀ = μ₀ c_J/(σ²_eff − μ₀),
/// where σ²_eff applies the minimal variance inflation when the target is
/// proxy-infeasible.
pub fn stage1_init(target: &ElicitationTarget, scaling: Scaling) -> Result<GammaHyperprior> {
    let mu0 = target.mu_k - 1.0;
    if mu0 <= 0.0 {
        return Err(Error::Infeasible(format!(
            "stage 1 requires mu_K > 1 (shifted mean must be positive), got mu_K = {}",
            target.mu_k
        )));
    }
    let c_j = scaling.constant(target.j);
    let eps = (1e-6 * mu0).max(1e-8);
    let sigma_eff = target.var_k.max(mu0 + eps);
    let denom = sigma_eff - mu0;
    GammaHyperprior::new(mu0 * mu0 / denom, mu0 * c_j / denom)
}

/// Calibration method identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    A1,
    A2Mn,
    A2Kl,
    DualAnchor,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FitMethod::A1 => "A1",
            FitMethod::A2Mn => "A2-MN",
            FitMethod::A2Kl => "A2-KL",
            FitMethod::DualAnchor => "Dual-Anchor",
        };
        write!(f, "{s}")
    }
}

/// Termination state of a calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    ProjectedThenConverged,
    MaxIter,
    LineSearchStall,
}

impl FitStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, FitStatus::Converged | FitStatus::ProjectedThenConverged)
    }
}

impl std::fmt::Display for FitStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FitStatus::Converged => "converged",
            FitStatus::ProjectedThenConverged => "projected_then_converged",
            FitStatus::MaxIter => "max_iter",
            FitStatus::LineSearchStall => "line_search_stall",
        };
        write!(f, "{s}")
    }
}

/// Options for the Newton refinement.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub order: usize,
    pub tol_f: f64,
    pub tol_eta: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub min_lambda: f64,
    pub det_floor: f64,
    pub ridge: f64,
    pub scaling: Scaling,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            order: crate::quadrature::DEFAULT_ORDER,
            tol_f: 1e-8,
            tol_eta: 1e-10,
            max_iter: 20,
            armijo_c: 0.5,
            min_lambda: 1e-8,
            det_floor: 1e-12,
            ridge: 1e-8,
            scaling: Scaling::LogJ,
        }
    }
}

/// Outcome of a calibration run.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub hyper: GammaHyperprior,
    pub target: ElicitationTarget,
    pub achieved: MixedMoments,
    pub residual_inf_norm: f64,
    pub method: FitMethod,
    pub iterations: usize,
    pub status: FitStatus,
    pub stage1_init: GammaHyperprior,
    pub projection_applied: bool,
}

// Safety floor on log-parameters; prevents drift to degenerate priors on
// pathological targets.
const ETA_FLOOR: f64 = -13.815510557964274; // ln(1e-6)

fn clamp_eta(eta: [f64; 2]) -> [f64; 2] {
    [eta[0].max(ETA_FLOOR), eta[1].max(ETA_FLOOR)]
}

fn residual(mm: &MixedMoments, target: &ElicitationTarget) -> [f64; 2] {
    [mm.mean - target.mu_k, mm.variance - target.var_k]
}

fn inf_norm(f: &[f64; 2]) -> f64 {
    f[0].abs().max(f[1].abs())
}

fn two_norm(f: &[f64; 2]) -> f64 {
    f[0].hypot(f[1])
}

/// Stage-1-only calibration: evaluates the exact mixed moments at the
/// closed-form initializer without refinement. The residual is whatever the
/// proxy leaves, so the status is reported as `MaxIter` with 0 iterations
/// unless the initializer happens to meet `tol_f`.
pub fn a1_fit(target: &ElicitationTarget, opts: &FitOptions) -> Result<CalibrationResult> {
    let feas = feasibility_check(target)?;
    let projection_applied = feas == Stage1Feasibility::ProjectionRequired;
    let init = stage1_init(target, opts.scaling)?;
    let rule = shared_rule(init.a, opts.order)?;
    let achieved = mixed_moments(target.j, &init, &rule)?;
    let res = inf_norm(&residual(&achieved, target));
    let status = if res <= opts.tol_f {
        if projection_applied {
            FitStatus::ProjectedThenConverged
        } else {
            FitStatus::Converged
        }
    } else {
        FitStatus::MaxIter
    };
    Ok(CalibrationResult {
        hyper: init,
        target: target.clone(),
        achieved,
        residual_inf_norm: res,
        method: FitMethod::A1,
        iterations: 0,
        status,
        stage1_init: init,
        projection_applied,
    })
}

/// Full TSMM calibration: stage-1 initializer followed by exact-moment
/// Newton refinement in η = (ln a, ln b) with an analytic score-identity
/// Jacobian, determinant-floor regularization and Armijo backtracking.
pub fn tsmm_fit(target: &ElicitationTarget, opts: &FitOptions) -> Result<CalibrationResult> {
    let feas = feasibility_check(target)?;
    let projection_applied = feas == Stage1Feasibility::ProjectionRequired;
    let init = stage1_init(target, opts.scaling)?;
    let mut eta = clamp_eta([init.a.ln(), init.b.ln()]);

    let evaluate = |eta: &[f64; 2]| -> Result<(GammaHyperprior, MixedMoments)> {
        let hyper = GammaHyperprior::new(eta[0].exp(), eta[1].exp())?;
        let rule = shared_rule(hyper.a, opts.order)?;
        let mm = mixed_moments(target.j, &hyper, &rule)?;
        Ok((hyper, mm))
    };

    let converged_status = if projection_applied {
        FitStatus::ProjectedThenConverged
    } else {
        FitStatus::Converged
    };

    let mut best: Option<(f64, GammaHyperprior, MixedMoments, usize)> = None;
    let mut iterations = 0usize;

    let finish = |hyper: GammaHyperprior,
                  mm: MixedMoments,
                  res: f64,
                  status: FitStatus,
                  iterations: usize| CalibrationResult {
        hyper,
        target: target.clone(),
        achieved: mm,
        residual_inf_norm: res,
        method: FitMethod::A2Mn,
        iterations,
        status,
        stage1_init: init,
        projection_applied,
    };

    for _ in 0..opts.max_iter {
        let hyper = GammaHyperprior::new(eta[0].exp(), eta[1].exp())?;
        let rule = shared_rule(hyper.a, opts.order)?;
        let (mm, jac) = moments_and_jacobian(target.j, &hyper, &rule)?;
        let f = residual(&mm, target);
        let res = inf_norm(&f);
        if best.as_ref().is_none_or(|(b, ..)| res < *b) {
            best = Some((res, hyper, mm, iterations));
        }
        if res <= opts.tol_f {
            return Ok(finish(hyper, mm, res, converged_status, iterations));
        }

        // J_G = J_F diag(a, b) maps log-parameter steps to moment changes.
        let mut jg = [
            [jac.d_mean_da * hyper.a, jac.d_mean_db * hyper.b],
            [jac.d_var_da * hyper.a, jac.d_var_db * hyper.b],
        ];
        let det = jg[0][0] * jg[1][1] - jg[0][1] * jg[1][0];
        if det.abs() < opts.det_floor {
            jg[0][0] += opts.ridge;
            jg[1][1] += opts.ridge;
        }
        let det = jg[0][0] * jg[1][1] - jg[0][1] * jg[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Numerical(format!(
                "singular Newton system at (a, b) = ({}, {})",
                hyper.a, hyper.b
            )));
        }
        let step = [
            (-f[0] * jg[1][1] + f[1] * jg[0][1]) / det,
            (-f[1] * jg[0][0] + f[0] * jg[1][0]) / det,
        ];
        if inf_norm(&step) <= opts.tol_eta {
            let (bres, bhyper, bmm, bit) = best.unwrap();
            let status = if bres <= opts.tol_f {
                converged_status
            } else {
                FitStatus::LineSearchStall
            };
            return Ok(finish(bhyper, bmm, bres, status, bit));
        }

        // Backtracking: accept when the residual two-norm satisfies the
        // Armijo-style contraction || f(cand) || <= (1 - c lambda) || f ||.
        let f_norm = two_norm(&f);
        let mut lambda = 1.0;
        let accepted = loop {
            let cand = clamp_eta([eta[0] + lambda * step[0], eta[1] + lambda * step[1]]);
            let (_, cand_mm) = evaluate(&cand)?;
            let cand_f = residual(&cand_mm, target);
            if two_norm(&cand_f) <= (1.0 - opts.armijo_c * lambda) * f_norm {
                break Some(cand);
            }
            lambda /= 2.0;
            if lambda < opts.min_lambda {
                break None;
            }
        };
        match accepted {
            Some(cand) => {
                eta = cand;
                iterations += 1;
            }
            None => {
                let (bres, bhyper, bmm, bit) = best.unwrap();
                return Ok(finish(bhyper, bmm, bres, FitStatus::LineSearchStall, bit));
            }
        }
    }

    // Budget exhausted: check the final iterate, then fall back to the best.
    let (hyper, mm) = evaluate(&eta)?;
    let res = inf_norm(&residual(&mm, target));
    if res <= opts.tol_f {
        return Ok(finish(hyper, mm, res, converged_status, iterations));
    }
    if best.as_ref().is_none_or(|(b, ..)| res < *b) {
        best = Some((res, hyper, mm, iterations));
    }
    let (bres, bhyper, bmm, bit) = best.unwrap();
    Ok(finish(bhyper, bmm, bres, FitStatus::MaxIter, bit))
}
