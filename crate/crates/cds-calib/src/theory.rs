//! Numerical verification of the bias–variance trade-off between one global
//! linear regressor and per-context regressors under a fixed-design model:
//! the global fit pays a bias Σ‖θ̄ − θ_i‖²_ψ plus σ²d variance, the
//! per-context fits pay no bias but K·σ²·d variance. Closed forms are checked
//! against a Monte-Carlo oracle with two independently computed risk forms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const CONDITION_LIMIT: f64 = 1e12;

/// One context: a fixed design matrix and its true parameter vector.
#[derive(Debug, Clone)]
pub struct Group {
    pub design: DMatrix<f64>,
    pub theta: DVector<f64>,
}

/// K groups generated as Y_i = X_iθ_i + ε_i with noise std σ, scalar outputs.
#[derive(Debug, Clone)]
pub struct FixedDesignProblem {
    groups: Vec<Group>,
    sigma: f64,
}

impl FixedDesignProblem {
    /// σ = 0 is allowed (noiseless checks); dimensions must agree across groups.
    pub fn new(groups: Vec<Group>, sigma: f64) -> Result<Self> {
        let first = groups
            .first()
            .ok_or(Error::EmptyInput("a problem needs at least one group"))?;
        let d = first.design.ncols();
        if d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "designs need at least one column".into(),
            });
        }
        for (i, g) in groups.iter().enumerate() {
            if g.design.nrows() == 0 {
                return Err(Error::InvalidParameter {
                    name: "n_i",
                    reason: format!("group {i} has an empty design"),
                });
            }
            if g.design.ncols() != d || g.theta.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "group {i}: design {}×{}, θ length {}, expected d = {d}",
                    g.design.nrows(),
                    g.design.ncols(),
                    g.theta.len()
                )));
            }
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("noise std must be finite and nonnegative, got {sigma}"),
            });
        }
        Ok(Self { groups, sigma })
    }

    /// Standard-normal designs with n_i = `n_per_group` rows and independent
    /// standard-normal θ_i per group. Keeping n_per_group ≥ 2d makes each ψ_i
    /// well-conditioned with overwhelming probability.
    pub fn random(k: usize, d: usize, n_per_group: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = (0..k)
            .map(|_| Group {
                design: DMatrix::from_fn(n_per_group, d, |_, _| rng.sample(StandardNormal)),
                theta: DVector::from_fn(d, |_, _| rng.sample(StandardNormal)),
            })
            .collect();
        Self::new(groups, sigma)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.groups[0].design.ncols()
    }

    pub fn total_samples(&self) -> usize {
        self.groups.iter().map(|g| g.design.nrows()).sum()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The irreducible noise floor R* = n·σ².
    pub fn irreducible_risk(&self) -> f64 {
        self.total_samples() as f64 * self.sigma * self.sigma
    }
}

/// Which regressor the oracle should fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// One θ̂ shared by all groups.
    Glr,
    /// An independent θ̂_i per group.
    Clr,
}

/// Noise law for the sampler; both have mean 0 and variance σ².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on ±σ√3 — for checking that the risk formulas only care about
    /// the first two moments.
    UniformMatched,
}

fn draw_noise(rng: &mut ChaCha8Rng, sigma: f64, kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
        NoiseKind::UniformMatched => {
            if sigma == 0.0 {
                0.0
            } else {
                let half_width = sigma * 3.0f64.sqrt();
                rng.random_range(-half_width..half_width)
            }
        }
    }
}

/// Y_i = X_iθ_i + ε_i for every group, with the given generator.
pub fn sample_outputs_with(
    problem: &FixedDesignProblem,
    rng: &mut ChaCha8Rng,
    noise: NoiseKind,
) -> Vec<DVector<f64>> {
    problem
        .groups
        .iter()
        .map(|g| {
            let mut y = &g.design * &g.theta;
            for v in y.iter_mut() {
                *v += draw_noise(rng, problem.sigma, noise);
            }
            y
        })
        .collect()
}

/// Gaussian-noise outputs from a fresh generator seeded with `seed`;
/// deterministic per seed.
pub fn sample_outputs(problem: &FixedDesignProblem, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_outputs_with(problem, &mut rng, NoiseKind::Gaussian)
}

fn check_outputs(problem: &FixedDesignProblem, ys: &[DVector<f64>]) -> Result<()> {
    if ys.len() != problem.num_groups() {
        return Err(Error::ShapeMismatch(format!(
            "{} output vectors for {} groups",
            ys.len(),
            problem.num_groups()
        )));
    }
    for (i, (g, y)) in problem.groups.iter().zip(ys).enumerate() {
        if y.len() != g.design.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "group {i}: {} outputs for {} design rows",
                y.len(),
                g.design.nrows()
            )));
        }
    }
    Ok(())
}

fn checked_cholesky(matrix: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let eigen = SymmetricEigen::new(matrix.clone());
    let max = eigen.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eigen.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min >= CONDITION_LIMIT {
        return Err(Error::SingularDesign(format!(
            "{what}: eigenvalue range [{min:.3e}, {max:.3e}]"
        )));
    }
    Cholesky::new(matrix).ok_or_else(|| Error::SingularDesign(format!("{what}: not positive definite")))
}

/// Per-group ψ_i = X_iᵀX_i and the factorizations both fits need, computed
/// once so the Monte-Carlo loop stays cheap.
struct Precomputed {
    psis: Vec<DMatrix<f64>>,
    sum_psi_chol: Cholesky<f64, Dyn>,
    group_chols: Option<Vec<Cholesky<f64, Dyn>>>,
}

impl Precomputed {
    fn build(problem: &FixedDesignProblem, need_clr: bool) -> Result<Self> {
        let psis: Vec<DMatrix<f64>> = problem
            .groups
            .iter()
            .map(|g| g.design.tr_mul(&g.design))
            .collect();
        let sum_psi = psis
            .iter()
            .fold(DMatrix::zeros(problem.dim(), problem.dim()), |acc, p| acc + p);
        let sum_psi_chol = checked_cholesky(sum_psi, "Σψ")?;
        let group_chols = if need_clr {
            Some(
                psis.iter()
                    .enumerate()
                    .map(|(i, p)| checked_cholesky(p.clone(), &format!("ψ of group {i}")))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self { psis, sum_psi_chol, group_chols })
    }

    fn glr(&self, problem: &FixedDesignProblem, ys: &[DVector<f64>]) -> DVector<f64> {
        let mut rhs = DVector::zeros(problem.dim());
        for (g, y) in problem.groups.iter().zip(ys) {
            rhs += g.design.tr_mul(y);
        }
        self.sum_psi_chol.solve(&rhs)
    }

    fn clr(&self, problem: &FixedDesignProblem, ys: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let chols = self.group_chols.as_ref().expect("built with need_clr");
        problem
            .groups
            .iter()
            .zip(ys)
            .zip(chols)
            .map(|((g, y), chol)| chol.solve(&g.design.tr_mul(y)))
            .collect()
    }
}

/// θ̂ = (Σψ_i)⁻¹ ΣX_iᵀY_i — one parameter vector for all groups.
pub fn fit_glr(problem: &FixedDesignProblem, ys: &[DVector<f64>]) -> Result<DVector<f64>> {
    check_outputs(problem, ys)?;
    let pre = Precomputed::build(problem, false)?;
    Ok(pre.glr(problem, ys))
}

/// θ̂_i = ψ_i⁻¹ X_iᵀY_i per group.
pub fn fit_clr(problem: &FixedDesignProblem, ys: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    check_outputs(problem, ys)?;
    let pre = Precomputed::build(problem, true)?;
    Ok(pre.clr(problem, ys))
}

/// ‖v‖²_ψ = vᵀψv.
fn mahalanobis_sq(v: &DVector<f64>, psi: &DMatrix<f64>) -> f64 {
    v.dot(&(psi * v))
}

/// Bias/variance split of an estimator's excess risk.
#[derive(Debug, Clone)]
pub struct RiskBreakdown {
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
    /// The ψ-weighted parameter mean the global fit converges to (global fit only).
    pub theta_bar: Option<DVector<f64>>,
}

/// Excess risk of the global regressor: Σ_i ‖θ̄ − θ_i‖²_{ψ_i} + σ²d with
/// θ̄ = (Σψ_i)⁻¹ Σψ_iθ_i.
pub fn analytic_excess_risk_glr(problem: &FixedDesignProblem) -> Result<RiskBreakdown> {
    let pre = Precomputed::build(problem, false)?;
    let mut weighted = DVector::zeros(problem.dim());
    for (g, psi) in problem.groups.iter().zip(&pre.psis) {
        weighted += psi * &g.theta;
    }
    let theta_bar = pre.sum_psi_chol.solve(&weighted);
    let bias: f64 = problem
        .groups
        .iter()
        .zip(&pre.psis)
        .map(|(g, psi)| mahalanobis_sq(&(&theta_bar - &g.theta), psi))
        .sum();
    let variance = problem.sigma * problem.sigma * problem.dim() as f64;
    Ok(RiskBreakdown {
        bias,
        variance,
        total: bias + variance,
        theta_bar: Some(theta_bar),
    })
}

/// Excess risk of the per-group regressors: zero bias, K·σ²·d variance.
pub fn analytic_excess_risk_clr(problem: &FixedDesignProblem) -> Result<RiskBreakdown> {
    // The formula needs every per-group fit to exist.
    Precomputed::build(problem, true)?;
    let variance =
        problem.num_groups() as f64 * problem.sigma * problem.sigma * problem.dim() as f64;
    Ok(RiskBreakdown {
        bias: 0.0,
        variance,
        total: variance,
        theta_bar: None,
    })
}

/// The oracle's output. `estimate` comes from the parameter-error form
/// Σ_i ‖α_i − θ_i‖²_{ψ_i}; the fresh-noise form refits nothing but scores
/// Σ_i ‖Y_i′ − X_iα_i‖² − nσ² on newly drawn test noise. The two agree in
/// expectation, and disagreement beyond Monte-Carlo error means a bug in one.
#[derive(Debug, Clone)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub fresh_noise_estimate: f64,
    pub fresh_noise_standard_error: f64,
    pub trials: usize,
}

pub fn monte_carlo_excess_risk(
    problem: &FixedDesignProblem,
    estimator: EstimatorKind,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    monte_carlo_excess_risk_with(problem, estimator, trials, seed, NoiseKind::Gaussian)
}

/// Each trial draws fit noise, fits the estimator, and scores both risk forms;
/// trial generators are derived from (seed, trial index) so results do not
/// depend on evaluation order.
pub fn monte_carlo_excess_risk_with(
    problem: &FixedDesignProblem,
    estimator: EstimatorKind,
    trials: usize,
    seed: u64,
    noise: NoiseKind,
) -> Result<MonteCarloEstimate> {
    if trials < 2 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "need at least 2 trials for a standard error".into(),
        });
    }
    let pre = Precomputed::build(problem, estimator == EstimatorKind::Clr)?;
    let noise_floor = problem.irreducible_risk();
    let mut param_form = Vec::with_capacity(trials);
    let mut fresh_form = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let ys = sample_outputs_with(problem, &mut rng, noise);
        let alphas: Vec<DVector<f64>> = match estimator {
            EstimatorKind::Glr => {
                let shared = pre.glr(problem, &ys);
                vec![shared; problem.num_groups()]
            }
            EstimatorKind::Clr => pre.clr(problem, &ys),
        };
        let param: f64 = problem
            .groups
            .iter()
            .zip(&pre.psis)
            .zip(&alphas)
            .map(|((g, psi), alpha)| mahalanobis_sq(&(alpha - &g.theta), psi))
            .sum();
        param_form.push(param);
        let mut fresh = -noise_floor;
        for (g, alpha) in problem.groups.iter().zip(&alphas) {
            let residual_base = &g.design * &(&g.theta - alpha);
            for r in residual_base.iter() {
                let e = r + draw_noise(&mut rng, problem.sigma, noise);
                fresh += e * e;
            }
        }
        fresh_form.push(fresh);
    }
    let (estimate, standard_error) = mean_and_se(&param_form);
    let (fresh_noise_estimate, fresh_noise_standard_error) = mean_and_se(&fresh_form);
    Ok(MonteCarloEstimate {
        estimate,
        standard_error,
        fresh_noise_estimate,
        fresh_noise_standard_error,
        trials,
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
