use std::collections::BTreeMap;
use std::fmt;

use crate::linalg::{hermitian_eigenvalues, hermitize, CMatrix};

/// Which route produced an effective Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Flow,
    ExpansionOrder0,
    ExpansionOrder1,
    ExpansionSeriesU,
    ExpansionSeriesJ,
    Monodromy,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flow => "flow",
            Method::ExpansionOrder0 => "expansion_order_0",
            Method::ExpansionOrder1 => "expansion_order_1",
            Method::ExpansionSeriesU => "series_U",
            Method::ExpansionSeriesJ => "series_J",
            Method::Monodromy => "monodromy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A Hermitian system-space matrix plus a record of how it was obtained.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub matrix: CMatrix,
    pub method: Method,
    /// Numeric provenance: couplings, cutoffs, tolerances and diagnostics.
    pub metadata: BTreeMap<String, f64>,
}

impl EffectiveHamiltonian {
    /// Hermitizes `matrix` and records the pre-symmetrization defect under
    /// `hermiticity_defect`.
    pub fn new(matrix: &CMatrix, method: Method) -> Self {
        let (matrix, defect) = hermitize(matrix);
        let mut metadata = BTreeMap::new();
        metadata.insert("hermiticity_defect".to_string(), defect);
        Self {
            matrix,
            method,
            metadata,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }
}
