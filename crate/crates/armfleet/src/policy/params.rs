//! Flat parameter storage with a named-tensor manifest.

use std::sync::Arc;

use super::PolicyError;

/// One named tensor in the flat layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, dims: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered tensor layout; the order defines the flat index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    specs: Vec<TensorSpec>,
    offsets: Vec<usize>,
    total: usize,
}

const MAX_TOTAL_VALUES: u128 = (1 << 31) - 1;

impl Manifest {
    pub fn new(specs: Vec<TensorSpec>) -> Result<Self, PolicyError> {
        if specs.is_empty() {
            return Err(PolicyError::EmptyManifest);
        }
        let mut total: u128 = 0;
        let mut offsets = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if spec.name.is_empty() {
                return Err(PolicyError::EmptyTensorName);
            }
            if specs[..i].iter().any(|s| s.name == spec.name) {
                return Err(PolicyError::DuplicateTensor(spec.name.clone()));
            }
            if spec.dims.iter().any(|&d| d == 0) {
                return Err(PolicyError::ZeroDim {
                    name: spec.name.clone(),
                });
            }
            offsets.push(total as usize);
            total += spec.dims.iter().map(|&d| d as u128).product::<u128>();
            if total > MAX_TOTAL_VALUES {
                return Err(PolicyError::TooLarge(total));
            }
        }
        Ok(Self {
            specs,
            offsets,
            total: total as usize,
        })
    }

    /// Total scalar count across all tensors.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn tensor_count(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn range(&self, index: usize) -> std::ops::Range<usize> {
        let start = self.offsets[index];
        start..start + self.specs[index].len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// One-line description of where two manifests first disagree.
    pub fn describe_mismatch(&self, other: &Manifest) -> String {
        if self.specs.len() != other.specs.len() {
            return format!(
                "{} tensors vs {} tensors",
                self.specs.len(),
                other.specs.len()
            );
        }
        for (a, b) in self.specs.iter().zip(&other.specs) {
            if a != b {
                return format!(
                    "tensor {:?} {:?} vs tensor {:?} {:?}",
                    a.name, a.dims, b.name, b.dims
                );
            }
        }
        "manifests are equal".to_string()
    }
}

/// Flat 64-bit parameter vector. Immutable by convention once built; the
/// mutating accessors exist for the optimizer, which re-validates finiteness
/// through the loss before values escape the update loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    manifest: Arc<Manifest>,
    values: Vec<f64>,
    version: u64,
}

impl ParamVector {
    pub fn zeros(manifest: Arc<Manifest>) -> Self {
        let values = vec![0.0; manifest.len()];
        Self {
            manifest,
            values,
            version: 0,
        }
    }

    pub fn from_values(manifest: Arc<Manifest>, values: Vec<f64>) -> Result<Self, PolicyError> {
        Self::from_parts(manifest, values, 0)
    }

    pub fn from_parts(
        manifest: Arc<Manifest>,
        values: Vec<f64>,
        version: u64,
    ) -> Result<Self, PolicyError> {
        if values.len() != manifest.len() {
            return Err(PolicyError::LengthMismatch {
                expected: manifest.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteValue(i));
        }
        Ok(Self {
            manifest,
            values,
            version,
        })
    }

    pub fn manifest(&self) -> &Arc<Manifest> {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Slice of the named tensor by manifest index.
    pub fn tensor(&self, index: usize) -> &[f64] {
        &self.values[self.manifest.range(index)]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        let range = self.manifest.range(index);
        &mut self.values[range]
    }

    /// True when both vectors use the same tensor layout.
    pub fn same_manifest(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.manifest, &other.manifest) || self.manifest == other.manifest
    }

    /// Value-level equality ignoring version.
    pub fn values_eq(&self, other: &ParamVector) -> bool {
        self.same_manifest(other) && self.values == other.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Arc<Manifest> {
        Arc::new(
            Manifest::new(vec![
                TensorSpec::new("a/kernel", vec![2, 3]),
                TensorSpec::new("a/bias", vec![3]),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn manifest_indexing() {
        let m = manifest();
        assert_eq!(m.len(), 9);
        assert_eq!(m.tensor_count(), 2);
        assert_eq!(m.range(0), 0..6);
        assert_eq!(m.range(1), 6..9);
        assert_eq!(m.index_of("a/bias"), Some(1));
        assert_eq!(m.index_of("missing"), None);
    }

    #[test]
    fn manifest_validation() {
        assert!(matches!(
            Manifest::new(vec![]),
            Err(PolicyError::EmptyManifest)
        ));
        assert!(matches!(
            Manifest::new(vec![TensorSpec::new("", vec![1])]),
            Err(PolicyError::EmptyTensorName)
        ));
        assert!(matches!(
            Manifest::new(vec![
                TensorSpec::new("x", vec![1]),
                TensorSpec::new("x", vec![2]),
            ]),
            Err(PolicyError::DuplicateTensor(_))
        ));
        assert!(matches!(
            Manifest::new(vec![TensorSpec::new("x", vec![1, 0])]),
            Err(PolicyError::ZeroDim { .. })
        ));
        assert!(matches!(
            Manifest::new(vec![TensorSpec::new("x", vec![1 << 20, 1 << 20])]),
            Err(PolicyError::TooLarge(_))
        ));
    }

    #[test]
    fn param_vector_construction() {
        let m = manifest();
        let p = ParamVector::zeros(m.clone());
        assert_eq!(p.len(), 9);
        assert_eq!(p.version(), 0);
        assert!(p.values().iter().all(|&v| v == 0.0));

        assert!(matches!(
            ParamVector::from_values(m.clone(), vec![0.0; 8]),
            Err(PolicyError::LengthMismatch {
                expected: 9,
                got: 8
            })
        ));
        let mut bad = vec![0.0; 9];
        bad[4] = f64::NAN;
        assert!(matches!(
            ParamVector::from_values(m.clone(), bad),
            Err(PolicyError::NonFiniteValue(4))
        ));
    }

    #[test]
    fn tensor_slices_follow_manifest_order() {
        let m = manifest();
        let mut p = ParamVector::from_values(m, (0..9).map(f64::from).collect()).unwrap();
        assert_eq!(p.tensor(0), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p.tensor(1), &[6.0, 7.0, 8.0]);
        p.tensor_mut(1)[0] = 42.0;
        assert_eq!(p.values()[6], 42.0);
    }

    #[test]
    fn values_eq_ignores_version() {
        let m = manifest();
        let a = ParamVector::from_parts(m.clone(), vec![1.0; 9], 3).unwrap();
        let b = ParamVector::from_parts(m, vec![1.0; 9], 7).unwrap();
        assert!(a.values_eq(&b));
        assert_ne!(a, b);
    }
}
