//! Position and force regression metrics.

use crate::error::{Error, Result};

fn vec3_rmse(predictions: &[[f64; 3]], labels: &[[f64; 3]], what: &str) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{what}: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Validation(format!("{what}: empty input")));
    }
    let mut sum = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        for c in 0..3 {
            let d = p[c] - l[c];
            sum += d * d;
        }
    }
    let rmse = (sum / predictions.len() as f64).sqrt();
    if !rmse.is_finite() {
        return Err(Error::Numeric(format!("{what}: non-finite rmse")));
    }
    Ok(rmse)
}

/// Root-mean-square position error in millimetres:
/// `sqrt(mean over samples of squared Euclidean distance)`.
pub fn position_rmse(predictions: &[[f64; 3]], labels: &[[f64; 3]]) -> Result<f64> {
    vec3_rmse(predictions, labels, "position_rmse")
}

/// Root-mean-square force error in Newtons; same definition as
/// [`position_rmse`] with Newton units.
pub fn force_rmse(predictions: &[[f64; 3]], labels: &[[f64; 3]]) -> Result<f64> {
    vec3_rmse(predictions, labels, "force_rmse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)])
            .collect()
    }

    #[test]
    fn exact_predictions_score_zero() {
        let pts = random_points(&mut ChaCha8Rng::seed_from_u64(1), 20);
        assert_eq!(position_rmse(&pts, &pts).unwrap(), 0.0);
        assert_eq!(force_rmse(&pts, &pts).unwrap(), 0.0);
    }

    #[test]
    fn constant_unit_offset_scores_one() {
        let labels = random_points(&mut ChaCha8Rng::seed_from_u64(2), 17);
        let preds: Vec<_> = labels.iter().map(|p| [p[0] + 1.0, p[1], p[2]]).collect();
        assert!((position_rmse(&preds, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_half_newton_offset() {
        let labels = random_points(&mut ChaCha8Rng::seed_from_u64(3), 9);
        let preds: Vec<_> = labels.iter().map(|p| [p[0], p[1], p[2] + 0.5]).collect();
        assert!((force_rmse(&preds, &labels).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_loop_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels = random_points(&mut rng, 100);
        let preds = random_points(&mut rng, 100);
        let mut acc = 0.0;
        for i in 0..100 {
            let dx = preds[i][0] - labels[i][0];
            let dy = preds[i][1] - labels[i][1];
            let dz = preds[i][2] - labels[i][2];
            acc += dx * dx + dy * dy + dz * dz;
        }
        let expect = (acc / 100.0).sqrt();
        assert!((position_rmse(&preds, &labels).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn invariant_under_joint_rigid_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = random_points(&mut rng, 40);
        let preds = random_points(&mut rng, 40);
        let base = position_rmse(&preds, &labels).unwrap();
        let shift = [3.25, -1.5, 0.75];
        let move_all = |pts: &[[f64; 3]]| -> Vec<[f64; 3]> {
            pts.iter()
                .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
                .collect()
        };
        let shifted = position_rmse(&move_all(&preds), &move_all(&labels)).unwrap();
        assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_and_empty_inputs_error() {
        let pts = random_points(&mut ChaCha8Rng::seed_from_u64(6), 3);
        assert!(matches!(
            position_rmse(&pts, &pts[..2]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(position_rmse(&[], &[]), Err(Error::Validation(_))));
    }
}
