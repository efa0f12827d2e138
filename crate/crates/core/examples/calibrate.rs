//! Fit the score likelihoods from held-out cosine similarities and look at
//! how single-view posteriors and the outlier gate respond to a score.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use taskmap::relevance::is_outlier_observation;
use taskmap::{bayes_update, calibrate, posterior_single, LikelihoodModel};

fn main() -> taskmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let neg = Normal::new(0.20, 0.03).unwrap();
    let pos = Normal::new(0.27, 0.03).unwrap();
    let negatives: Vec<f64> = (0..5000).map(|_| neg.sample(&mut rng)).collect();
    let positives: Vec<f64> = (0..500).map(|_| pos.sample(&mut rng)).collect();

    let model = calibrate(&negatives, Some(&positives), &LikelihoodModel::default())?;
    println!("{}", serde_json::to_string_pretty(&model)?);

    println!("\n score  llr     posterior");
    for phi in [0.15, 0.20, 0.235, 0.27, 0.32] {
        println!(
            "{phi:6.3} {:+7.3}  {:.4}",
            model.log_likelihood_ratio(phi),
            posterior_single(phi, &model, model.prior_relevant)
        );
    }

    let mut p = model.prior_relevant;
    for view in 1..=5 {
        p = bayes_update(p, 0.27, &model)?;
        println!("after {view} views at 0.27: {p:.4}");
    }

    for scores in [[0.18, 0.21, 0.19], [0.18, 0.29, 0.19]] {
        println!("{scores:?} rejected: {}", is_outlier_observation(&scores, &model));
    }
    Ok(())
}
