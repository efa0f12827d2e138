//! Turning cosine scores into task-relevance probabilities.
//!
//! Scores for the negative (`y = 0`) and positive (`y = 1`) classes are modelled
//! as Gaussians. A single score is converted with Bayes' rule; repeated views
//! are fused recursively, with an optional gate that discards observations
//! which would lower the posterior of every task at once.
//!
//! All likelihood comparisons are done on log-likelihood ratios so that
//! scores far in the tails do not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::MapState;

/// Posteriors are kept inside this band after every fused update.
pub const POSTERIOR_FLOOR: f64 = 1e-6;
pub const POSTERIOR_CEIL: f64 = 1.0 - 1e-6;

/// Class-conditional score distributions plus the initial relevance prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodModel {
    pub mu_neg: f64,
    pub sigma_neg: f64,
    pub mu_pos: f64,
    pub sigma_pos: f64,
    /// Extra measurement noise added in quadrature to both classes.
    pub sigma_eps: f64,
    pub prior_relevant: f64,
}

impl Default for LikelihoodModel {
    fn default() -> Self {
        Self {
            mu_neg: 0.20,
            sigma_neg: 0.035,
            mu_pos: 0.27,
            sigma_pos: 0.035,
            sigma_eps: 0.0,
            prior_relevant: 0.05,
        }
    }
}

impl LikelihoodModel {
    /// Fitted MSCOCO-caption statistics, useful for calibration checks.
    pub fn mscoco() -> Self {
        Self {
            mu_neg: 0.092,
            sigma_neg: 0.039,
            mu_pos: 0.243,
            sigma_pos: 0.035,
            sigma_eps: 0.0,
            prior_relevant: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_neg,
            self.sigma_neg,
            self.mu_pos,
            self.sigma_pos,
            self.sigma_eps,
            self.prior_relevant,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if self.sigma_neg <= 0.0 || self.sigma_pos <= 0.0 {
            return Err(Error::InvalidModel("class deviations must be positive".into()));
        }
        if self.sigma_eps < 0.0 {
            return Err(Error::InvalidModel("sigma_eps must be non-negative".into()));
        }
        if self.mu_pos <= self.mu_neg {
            return Err(Error::InvalidModel("mu_pos must exceed mu_neg".into()));
        }
        if !(self.prior_relevant > 0.0 && self.prior_relevant < 1.0) {
            return Err(Error::InvalidModel("prior_relevant must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn effective_sigma_neg(&self) -> f64 {
        self.sigma_neg.hypot(self.sigma_eps)
    }

    pub fn effective_sigma_pos(&self) -> f64 {
        self.sigma_pos.hypot(self.sigma_eps)
    }

    /// ln p(phi | y=1) - ln p(phi | y=0) with noise-inflated deviations.
    pub fn log_likelihood_ratio(&self, phi: f64) -> f64 {
        let s1 = self.effective_sigma_pos();
        let s0 = self.effective_sigma_neg();
        let z1 = (phi - self.mu_pos) / s1;
        let z0 = (phi - self.mu_neg) / s0;
        0.5 * (z0 * z0 - z1 * z1) + (s0 / s1).ln()
    }
}

/// Sample mean and unbiased standard deviation.
pub fn fit_gaussian(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|s| (s - mean) * (s - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Fits the negative class (and the positive class, when samples are given)
/// and keeps every other parameter from `base`.
pub fn calibrate(negative: &[f64], positive: Option<&[f64]>, base: &LikelihoodModel) -> Result<LikelihoodModel> {
    let (mu_neg, sigma_neg) = fit_gaussian(negative)?;
    let mut model = LikelihoodModel {
        mu_neg,
        sigma_neg,
        ..*base
    };
    if let Some(positive) = positive {
        let (mu_pos, sigma_pos) = fit_gaussian(positive)?;
        model.mu_pos = mu_pos;
        model.sigma_pos = sigma_pos;
    }
    model.validate()?;
    Ok(model)
}

/// Applies one fused update in log-odds form.
#[inline]
fn fuse(prior: f64, llr: f64) -> f64 {
    // prior * L1 / (prior * L1 + (1 - prior) * L0)
    prior / (prior + (1.0 - prior) * (-llr).exp())
}

/// Single-observation relevance p(y=1 | phi) for an explicit prior p(y=1).
/// Pass `0.5` for uninformative priors.
pub fn posterior_single(phi: f64, model: &LikelihoodModel, prior_relevant: f64) -> f64 {
    fuse(prior_relevant, model.log_likelihood_ratio(phi))
}

/// One recursive update of p(y=1 | scores so far). Unclamped.
pub fn bayes_update(prior: f64, phi_hat: f64, model: &LikelihoodModel) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::DegeneratePrior(prior));
    }
    Ok(fuse(prior, model.log_likelihood_ratio(phi_hat)))
}

/// True iff the positive-class likelihood is below the negative-class
/// likelihood for every task, i.e. the observation looks irrelevant to all.
pub fn is_outlier_observation(scores: &[f64], model: &LikelihoodModel) -> bool {
    scores.iter().all(|&phi| model.log_likelihood_ratio(phi) < 0.0)
}

/// True iff a Bayesian update with these scores would strictly lower every
/// task's posterior. `posteriors` and `scores` are per task.
pub fn update_decreases_all(posteriors: &[f64], scores: &[f64], model: &LikelihoodModel) -> bool {
    posteriors
        .iter()
        .zip(scores)
        .all(|(&p, &phi)| fuse(p, model.log_likelihood_ratio(phi)) < p)
}

/// Result of applying one mask's scores to its Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Accepted,
    RejectedAsOutlier,
}

impl UpdateOutcome {
    pub fn is_rejected(self) -> bool {
        matches!(self, UpdateOutcome::RejectedAsOutlier)
    }
}

/// Fuses one mask's scores into the posteriors of the listed Gaussians.
///
/// With `outlier_reject` set, an observation that would strictly lower every
/// task's posterior leaves the state untouched.
pub fn update_gaussians(
    state: &mut MapState,
    gaussian_ids: &[u64],
    scores: &[f64],
    model: &LikelihoodModel,
    outlier_reject: bool,
) -> Result<UpdateOutcome> {
    state.check_scores(scores)?;
    let slots = state.slots_of(gaussian_ids)?;
    if outlier_reject && is_outlier_observation(scores, model) {
        return Ok(UpdateOutcome::RejectedAsOutlier);
    }
    let llr: Vec<f64> = scores.iter().map(|&phi| model.log_likelihood_ratio(phi)).collect();
    for slot in slots {
        let record = state.record_mut(slot);
        for (p, &l) in record.posterior.iter_mut().zip(&llr) {
            *p = fuse(*p, l).clamp(POSTERIOR_FLOOR, POSTERIOR_CEIL);
        }
        record.update_count += 1;
    }
    Ok(UpdateOutcome::Accepted)
}

/// Relevance from the mean score over all views, without recursive fusion.
pub fn average_scores_posterior(all_scores: &[f64], model: &LikelihoodModel) -> Result<f64> {
    if all_scores.is_empty() {
        return Err(Error::EmptyInput("score list"));
    }
    let mean = all_scores.iter().sum::<f64>() / all_scores.len() as f64;
    Ok(posterior_single(mean, model, model.prior_relevant))
}

/// Averaging-mode counterpart of [`update_gaussians`]: accumulates raw scores
/// per Gaussian instead of fusing them. The gate still applies.
pub fn accumulate_scores(
    state: &mut MapState,
    gaussian_ids: &[u64],
    scores: &[f64],
    model: &LikelihoodModel,
    outlier_reject: bool,
) -> Result<UpdateOutcome> {
    state.check_scores(scores)?;
    let slots = state.slots_of(gaussian_ids)?;
    if outlier_reject && is_outlier_observation(scores, model) {
        return Ok(UpdateOutcome::RejectedAsOutlier);
    }
    for slot in slots {
        state.accumulate(slot, scores);
    }
    Ok(UpdateOutcome::Accepted)
}

/// Replaces every observed Gaussian's posterior by the single-shot posterior
/// of its mean score. Unobserved Gaussians keep the prior.
pub fn finalize_averaged(state: &mut MapState, model: &LikelihoodModel) {
    state.apply_score_means(|mean| {
        posterior_single(mean, model, model.prior_relevant).clamp(POSTERIOR_FLOOR, POSTERIOR_CEIL)
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pdf(x: f64, mu: f64, s: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn fit_constant_and_two_samples() {
        assert_eq!(fit_gaussian(&[0.25, 0.25, 0.25]).unwrap(), (0.25, 0.0));
        let (m, s) = fit_gaussian(&[0.1, 0.3]).unwrap();
        assert_relative_eq!(m, 0.2, epsilon = 1e-15);
        assert_relative_eq!(s, 0.02f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(fit_gaussian(&[0.1]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn midpoint_is_half_with_equal_sigmas() {
        let model = LikelihoodModel::default();
        assert_relative_eq!(posterior_single(0.235, &model, 0.5), 0.5, epsilon = 1e-12);
        assert_relative_eq!(bayes_update(0.5, 0.235, &model).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mscoco_example_value() {
        let m = LikelihoodModel::mscoco();
        let l1 = pdf(0.15, 0.243, 0.035);
        let l0 = pdf(0.15, 0.092, 0.039);
        let direct = l1 / (l1 + l0);
        let p = posterior_single(0.15, &m, 0.5);
        assert_relative_eq!(p, direct, max_relative = 1e-12);
        assert!((p - 0.090).abs() < 5e-3, "{p}");
    }

    #[test]
    fn large_scores_saturate_towards_one() {
        let m = LikelihoodModel::default();
        assert!(posterior_single(1.0, &m, 0.5) > 1.0 - 1e-12);
    }

    #[test]
    fn single_update_from_prior() {
        let m = LikelihoodModel::default();
        let odds = 0.05 / 0.95 * 2f64.exp();
        let expected = odds / (1.0 + odds);
        let p = bayes_update(0.05, 0.27, &m).unwrap();
        assert_relative_eq!(p, expected, max_relative = 1e-12);
        assert!((p - 0.280).abs() < 1e-3);
    }

    #[test]
    fn five_updates_exceed_three_nines() {
        let m = LikelihoodModel::default();
        let mut p = 0.05;
        for _ in 0..5 {
            p = bayes_update(p, 0.27, &m).unwrap();
        }
        assert!(p > 0.999, "{p}");
    }

    #[test]
    fn degenerate_prior_is_an_error() {
        let m = LikelihoodModel::default();
        assert!(matches!(bayes_update(0.0, 0.2, &m), Err(Error::DegeneratePrior(_))));
        assert!(matches!(bayes_update(1.0, 0.2, &m), Err(Error::DegeneratePrior(_))));
    }

    #[test]
    fn averaging_is_idempotent_in_repetition() {
        let m = LikelihoodModel::default();
        let single = posterior_single(0.27, &m, m.prior_relevant);
        assert_eq!(average_scores_posterior(&[0.27], &m).unwrap(), single);
        assert_relative_eq!(average_scores_posterior(&[0.20, 0.34], &m).unwrap(), single, epsilon = 1e-12);
        for n in 1..10 {
            assert_eq!(average_scores_posterior(&vec![0.3; n], &m).unwrap(), average_scores_posterior(&[0.3], &m).unwrap());
        }
        assert!(average_scores_posterior(&[], &m).is_err());
    }

    #[test]
    fn effective_variance_matches_inflated_model() {
        let noisy = LikelihoodModel {
            sigma_eps: 0.02,
            ..LikelihoodModel::default()
        };
        let inflated = LikelihoodModel {
            sigma_neg: 0.035f64.hypot(0.02),
            sigma_pos: 0.035f64.hypot(0.02),
            ..LikelihoodModel::default()
        };
        for phi in [0.0, 0.15, 0.22, 0.3, 0.5] {
            assert_eq!(
                bayes_update(0.3, phi, &noisy).unwrap(),
                bayes_update(0.3, phi, &inflated).unwrap()
            );
        }
    }

    #[test]
    fn model_validation() {
        assert!(LikelihoodModel::default().validate().is_ok());
        let bad = LikelihoodModel {
            mu_pos: 0.1,
            ..LikelihoodModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = LikelihoodModel {
            prior_relevant: 1.0,
            ..LikelihoodModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
