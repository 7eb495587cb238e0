use ndarray::ArrayD;

/// Handle to a tensor held by a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: ArrayD<f64>,
}

/// Named, ordered collection of trainable tensors.
///
/// Insertion order is stable and is the order used for serialization,
/// optimizer state and gradient clipping.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.entries.push(Entry { name, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.entries[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &ArrayD<f64>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (ParamId(i), e.name.as_str(), &e.value))
    }

    /// Overwrites every value with those of `other`; layouts must agree.
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.len(), other.len(), "parameter layouts differ");
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(dst.name, src.name, "parameter layouts differ");
            dst.value.assign(&src.value);
        }
    }

    /// Zero tensors with the same layout, used for gradient accumulation.
    pub fn zeros_like(&self) -> Vec<ArrayD<f64>> {
        self.entries
            .iter()
            .map(|e| ArrayD::zeros(e.value.raw_dim()))
            .collect()
    }
}

/// Gradients of a scalar with respect to every parameter of a store.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<ArrayD<f64>>,
}

impl ParamGrads {
    pub fn zeros(store: &ParamStore) -> Self {
        Self {
            grads: store.zeros_like(),
        }
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayD<f64>> {
        self.grads.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ArrayD<f64>> {
        self.grads.iter_mut()
    }

    /// Global L2 norm over all tensors.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
