//! Merging local models into the next global policy.
//!
//! The merge is a weighted element-wise mean computed the same way no
//! matter how the inputs are ordered: models are first sorted into a
//! canonical order by their raw value bits, then summed over a fixed
//! pairwise tree. Reordering the inputs therefore cannot change the result
//! by even one bit, which keeps whole-cluster runs replayable when workers
//! finish in a different order.

use crate::policy::ParamVector;

use super::CoordError;

/// How local models are weighted in the merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeStrategy {
    /// Every worker counts equally.
    #[default]
    Uniform,
    /// Workers count in proportion to the steps they collected.
    StepWeighted,
}

/// Element-wise mean of the given models. The result's version is one past
/// the highest input version.
pub fn merge_models(models: &[ParamVector]) -> Result<ParamVector, CoordError> {
    let weights = vec![1.0; models.len()];
    merge_models_weighted(models, &weights)
}

/// Weighted element-wise mean. Weights must be finite, non-negative, and
/// not all zero; they are normalized internally.
pub fn merge_models_weighted(
    models: &[ParamVector],
    weights: &[f64],
) -> Result<ParamVector, CoordError> {
    if models.is_empty() {
        return Err(CoordError::EmptyMerge);
    }
    if weights.len() != models.len() {
        return Err(CoordError::BadWeights {
            reason: format!("{} weights for {} models", weights.len(), models.len()),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(CoordError::BadWeights {
            reason: format!("weight {w} is not finite and non-negative"),
        });
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(CoordError::BadWeights {
            reason: "weights sum to zero".to_string(),
        });
    }
    for (i, model) in models.iter().enumerate().skip(1) {
        if !model.same_manifest(&models[0]) {
            return Err(CoordError::ManifestMismatch {
                who: format!("merge input {i}"),
                detail: models[0].manifest().describe_mismatch(model.manifest()),
            });
        }
    }

    let version = models.iter().map(ParamVector::version).max().unwrap_or(0) + 1;

    // Canonical order: by value bits, ties broken by weight bits, so any
    // permutation of (model, weight) pairs produces the same tree.
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| {
        cmp_bits(models[a].values(), models[b].values())
            .then_with(|| weights[a].to_bits().cmp(&weights[b].to_bits()))
    });

    // All-equal inputs short-circuit to an exact copy: the mean of k
    // identical vectors must be that vector bit for bit, which a sum
    // followed by a divide does not guarantee for every k.
    if order
        .windows(2)
        .all(|pair| models[pair[0]].values_eq(&models[pair[1]]))
    {
        let mut out = models[0].clone();
        out.set_version(version);
        return Ok(out);
    }

    let scaled = tree_sum(&order, &|i| scale(models[i].values(), weights[i]));
    let total_weight = tree_sum(&order, &|i| vec![weights[i]])[0];
    let merged: Vec<f64> = scaled.iter().map(|v| v / total_weight).collect();
    Ok(ParamVector::from_parts(
        models[0].manifest().clone(),
        merged,
        version,
    )?)
}

fn cmp_bits(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.to_bits().cmp(&y.to_bits()) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

fn scale(values: &[f64], weight: f64) -> Vec<f64> {
    values.iter().map(|v| v * weight).collect()
}

/// Element-wise sum over a fixed binary tree: leaves in `order`, split at
/// the midpoint. The tree shape depends only on the input count.
fn tree_sum(order: &[usize], leaf: &dyn Fn(usize) -> Vec<f64>) -> Vec<f64> {
    match order.len() {
        1 => leaf(order[0]),
        len => {
            let (left, right) = order.split_at(len / 2);
            let mut sum = tree_sum(left, leaf);
            for (s, r) in sum.iter_mut().zip(tree_sum(right, leaf)) {
                *s += r;
            }
            sum
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng;

    use super::*;
    use crate::policy::{Manifest, TensorSpec};
    use crate::rng::stream;

    fn vector(values: Vec<f64>, version: u64) -> ParamVector {
        let manifest = Arc::new(
            Manifest::new(vec![TensorSpec::new("w", vec![values.len()])]).unwrap(),
        );
        ParamVector::from_parts(manifest, values, version).unwrap()
    }

    #[test]
    fn identical_models_merge_to_an_exact_copy() {
        let model = vector(vec![0.1, -0.7, 3.3], 5);
        let merged = merge_models(&[model.clone(), model.clone(), model.clone()]).unwrap();
        assert!(merged.values_eq(&model));
        assert_eq!(merged.version(), 6);
    }

    #[test]
    fn two_models_average_element_wise() {
        let a = vector(vec![1.0, 3.0], 1);
        let b = vector(vec![3.0, 5.0], 2);
        let merged = merge_models(&[a, b]).unwrap();
        assert_eq!(merged.values(), &[2.0, 4.0]);
        assert_eq!(merged.version(), 3);
    }

    #[test]
    fn opposite_models_cancel_to_zero() {
        let v = vec![0.125, -9.5, 1e-3, 7.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let merged = merge_models(&[vector(v, 0), vector(neg, 0)]).unwrap();
        assert!(merged.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn merge_is_permutation_invariant_to_the_bit() {
        let mut rng = stream(901, &[]);
        let models: Vec<ParamVector> = (0..5)
            .map(|i| {
                let values: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                vector(values, i)
            })
            .collect();
        let weights = [1.0, 2.0, 3.0, 4.0, 5.0];

        let forward = merge_models_weighted(&models, &weights).unwrap();
        let mut shuffled: Vec<(ParamVector, f64)> =
            models.into_iter().zip(weights).rev().collect();
        shuffled.swap(0, 3);
        let (models2, weights2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let backward = merge_models_weighted(&models2, &weights2).unwrap();

        assert!(forward.values_eq(&backward));
        assert_eq!(forward.version(), backward.version());
    }

    #[test]
    fn weights_shift_the_mean() {
        let a = vector(vec![0.0], 0);
        let b = vector(vec![4.0], 0);
        let merged = merge_models_weighted(&[a, b], &[1.0, 3.0]).unwrap();
        assert_eq!(merged.values(), &[3.0]);
    }

    #[test]
    fn singleton_merge_is_the_identity_even_with_an_odd_weight() {
        let model = vector(vec![0.1, 0.2, 0.3], 7);
        let merged = merge_models_weighted(&[model.clone()], &[2047.0]).unwrap();
        assert!(merged.values_eq(&model));
        assert_eq!(merged.version(), 8);
    }

    #[test]
    fn degenerate_inputs_are_typed_errors() {
        assert!(matches!(
            merge_models(&[]).unwrap_err(),
            CoordError::EmptyMerge
        ));

        let a = vector(vec![1.0], 0);
        let b = vector(vec![2.0], 0);
        assert!(matches!(
            merge_models_weighted(&[a.clone(), b.clone()], &[1.0]).unwrap_err(),
            CoordError::BadWeights { .. }
        ));
        assert!(matches!(
            merge_models_weighted(&[a.clone(), b.clone()], &[1.0, -0.5]).unwrap_err(),
            CoordError::BadWeights { .. }
        ));
        assert!(matches!(
            merge_models_weighted(&[a.clone(), b.clone()], &[f64::NAN, 1.0]).unwrap_err(),
            CoordError::BadWeights { .. }
        ));
        assert!(matches!(
            merge_models_weighted(&[a.clone(), b], &[0.0, 0.0]).unwrap_err(),
            CoordError::BadWeights { .. }
        ));

        let wide = vector(vec![1.0, 2.0], 0);
        let err = merge_models(&[a, wide]).unwrap_err();
        assert!(matches!(err, CoordError::ManifestMismatch { .. }));
        assert!(err.to_string().contains("merge input 1"));
    }
}
