//! Displacement metrics for multi-hypothesis forecasts.
//!
//! ADE is the mean Euclidean displacement over predicted steps, FDE the
//! displacement at the final step. Single-trajectory metrics score the
//! first hypothesis (the model's primary mode); Top-K variants score the
//! best of the first k hypotheses, so they are monotone non-increasing in
//! k. [`evaluate`] averages all four over a dataset; evaluating a frozen
//! source-trained model on target-domain data is the benchmark's
//! generalization error, exposed as [`generalization_error`] for readers
//! of the results.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forecastnet::Forecaster;
use crate::geom::Point;
use crate::synthworld::Dataset;

fn check_tracks(pred: &[Point], gt: &[Point]) -> Result<()> {
    if gt.is_empty() || pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory length mismatch: prediction {} vs ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Average displacement error between one predicted track and the ground
/// truth.
pub fn ade(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_tracks(pred, gt)?;
    let total: f64 = pred.iter().zip(gt).map(|(p, g)| p.dist(*g)).sum();
    Ok(total / gt.len() as f64)
}

/// Final displacement error between one predicted track and the ground
/// truth.
pub fn fde(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_tracks(pred, gt)?;
    Ok(pred.last().unwrap().dist(*gt.last().unwrap()))
}

fn topk_min<F>(hyps: &[Vec<Point>], gt: &[Point], k: usize, score: F) -> Result<f64>
where
    F: Fn(&[Point], &[Point]) -> Result<f64>,
{
    if k == 0 || k > hyps.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            hyps.len()
        )));
    }
    let mut best = f64::INFINITY;
    for h in &hyps[..k] {
        best = best.min(score(h, gt)?);
    }
    Ok(best)
}

/// Best ADE over the first k hypotheses.
pub fn topk_ade(hyps: &[Vec<Point>], gt: &[Point], k: usize) -> Result<f64> {
    topk_min(hyps, gt, k, ade)
}

/// Best FDE over the first k hypotheses.
pub fn topk_fde(hyps: &[Vec<Point>], gt: &[Point], k: usize) -> Result<f64> {
    topk_min(hyps, gt, k, fde)
}

/// Dataset-level metric averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub k: usize,
    /// Mean ADE of the first hypothesis.
    pub ade: f64,
    /// Mean FDE of the first hypothesis.
    pub fde: f64,
    /// Mean best-of-k ADE.
    pub topk_ade: f64,
    /// Mean best-of-k FDE.
    pub topk_fde: f64,
}

/// Runs the model over every sample and averages the four displacement
/// metrics. Deterministic: samples are visited in order and no randomness
/// is involved.
pub fn evaluate(model: &Forecaster, dataset: &Dataset, k: usize) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let (mut s_ade, mut s_fde, mut s_tade, mut s_tfde) = (0.0, 0.0, 0.0, 0.0);
    for sample in &dataset.samples {
        let grid = dataset.scene(&sample.scene_id)?;
        let hyps = model.predict(grid, &sample.past)?;
        s_ade += ade(&hyps[0], &sample.future)?;
        s_fde += fde(&hyps[0], &sample.future)?;
        s_tade += topk_ade(&hyps, &sample.future, k)?;
        s_tfde += topk_fde(&hyps, &sample.future, k)?;
    }
    let n = dataset.len() as f64;
    Ok(EvalReport {
        n_samples: dataset.len(),
        k,
        ade: s_ade / n,
        fde: s_fde / n,
        topk_ade: s_tade / n,
        topk_fde: s_tfde / n,
    })
}

/// Generalization error: the performance of a frozen model on data from a
/// domain it was not trained on. Computationally identical to
/// [`evaluate`]; the distinct name marks the role the number plays in
/// transfer comparisons.
pub fn generalization_error(model: &Forecaster, target_test: &Dataset, k: usize) -> Result<EvalReport> {
    evaluate(model, target_test, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecastnet::{Forecaster, ModelConfig};
    use crate::rng::SplitMix64;
    use crate::synthworld::{Sample, SceneGrid};
    use std::collections::BTreeMap;

    #[test]
    fn three_four_five_example() {
        // Displacements 0 and 5 across two steps: ADE 2.5, FDE 5.
        let gt = vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)];
        let pred = vec![Point::new(0.0, 0.0), Point::new(6.0, 8.0)];
        assert_eq!(ade(&pred, &gt).unwrap(), 2.5);
        assert_eq!(fde(&pred, &gt).unwrap(), 5.0);
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let gt = vec![Point::new(1.0, 2.0), Point::new(3.0, 4.0)];
        assert_eq!(ade(&gt.clone(), &gt).unwrap(), 0.0);
        assert_eq!(fde(&gt.clone(), &gt).unwrap(), 0.0);
    }

    #[test]
    fn rejects_mismatched_or_empty_tracks() {
        let a = vec![Point::new(0.0, 0.0)];
        assert!(ade(&a, &[]).is_err());
        assert!(fde(&[], &a).is_err());
        let b = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(ade(&a, &b).is_err());
    }

    #[test]
    fn topk_picks_the_best_hypothesis_and_checks_k() {
        let gt = vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)];
        let hyps = vec![
            vec![Point::new(0.0, 1.0), Point::new(2.0, 1.0)], // ADE 1
            vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)], // ADE 0
            vec![Point::new(0.0, 3.0), Point::new(2.0, 3.0)], // ADE 3
        ];
        assert_eq!(topk_ade(&hyps, &gt, 1).unwrap(), 1.0);
        assert_eq!(topk_ade(&hyps, &gt, 2).unwrap(), 0.0);
        assert_eq!(topk_ade(&hyps, &gt, 3).unwrap(), 0.0);
        assert!(topk_ade(&hyps, &gt, 0).is_err());
        assert!(topk_ade(&hyps, &gt, 4).is_err());
    }

    #[test]
    fn topk_matches_bruteforce_min_and_is_monotone() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..200 {
            let t = 1 + rng.next_below(6);
            let kmax = 1 + rng.next_below(5);
            let gt: Vec<Point> = (0..t)
                .map(|_| Point::new(rng.gaussian(0.0, 2.0), rng.gaussian(0.0, 2.0)))
                .collect();
            let hyps: Vec<Vec<Point>> = (0..kmax)
                .map(|_| {
                    (0..t)
                        .map(|_| Point::new(rng.gaussian(0.0, 2.0), rng.gaussian(0.0, 2.0)))
                        .collect()
                })
                .collect();
            let mut prev = f64::INFINITY;
            for k in 1..=kmax {
                let brute_ade = hyps[..k]
                    .iter()
                    .map(|h| ade(h, &gt).unwrap())
                    .fold(f64::INFINITY, f64::min);
                let brute_fde = hyps[..k]
                    .iter()
                    .map(|h| fde(h, &gt).unwrap())
                    .fold(f64::INFINITY, f64::min);
                let ta = topk_ade(&hyps, &gt, k).unwrap();
                let tf = topk_fde(&hyps, &gt, k).unwrap();
                assert_eq!(ta, brute_ade);
                assert_eq!(tf, brute_fde);
                assert!(ta <= prev, "top-k ADE must not increase with k");
                prev = ta;
            }
        }
    }

    #[test]
    fn evaluate_standstill_model_by_hand() {
        // Zero decoder: every hypothesis stays at the last observed point.
        let config = ModelConfig {
            grid_h: 4,
            grid_w: 4,
            n_classes: 4,
            t_obs: 2,
            t_pred: 2,
            d_model: 8,
            k_modes: 2,
            seed: 3,
        };
        let mut model = Forecaster::new(config).unwrap();
        for name in ["D.out.w", "D.out.b"] {
            let id = model.params().id(name).unwrap();
            let shape = model.params().value(id).shape().to_vec();
            model.params_mut().get_mut(id).value = crate::diffcore::Tensor::zeros(shape);
        }
        let grid = SceneGrid::from_rows("g", &["rrrr", "rrrr", "rrrr", "rrrr"]).unwrap();
        let mut scenes = BTreeMap::new();
        scenes.insert("g".to_string(), grid);
        let samples = vec![Sample {
            scene_id: "g".to_string(),
            past: vec![Point::new(1.0, 1.5), Point::new(1.5, 1.5)],
            future: vec![Point::new(2.0, 1.5), Point::new(2.5, 1.5)],
        }];
        let ds = Dataset::new(samples, scenes).unwrap();
        let report = evaluate(&model, &ds, 2).unwrap();
        assert_eq!(report.ade, 0.75);
        assert_eq!(report.fde, 1.0);
        assert_eq!(report.topk_ade, 0.75);
        assert_eq!(report.topk_fde, 1.0);
        assert_eq!(report.n_samples, 1);

        let again = generalization_error(&model, &ds, 2).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn evaluate_rejects_empty_dataset() {
        let model = Forecaster::new(ModelConfig {
            grid_h: 4,
            grid_w: 4,
            t_obs: 2,
            t_pred: 2,
            d_model: 8,
            k_modes: 2,
            ..ModelConfig::default()
        })
        .unwrap();
        let ds = Dataset::new(vec![], BTreeMap::new()).unwrap();
        assert!(evaluate(&model, &ds, 1).is_err());
    }
}
