use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BumpConformal, ExpandingSphere, ShrinkingHyperbolic, SharedModel, StaticEuclidean};
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub dim: usize,
    pub bump_amplitude: f64,
    pub bump_width: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { dim: 2, bump_amplitude: 0.3, bump_width: 0.5 }
    }
}

pub type ModelCtor = fn(&ModelParams) -> Result<SharedModel>;

/// Name -> constructor table for metric models.
pub struct ModelRegistry {
    entries: BTreeMap<&'static str, ModelCtor>,
}

fn dim_in(p: &ModelParams, lo: usize, hi: usize, id: &str) -> Result<usize> {
    if p.dim < lo || p.dim > hi {
        return Err(LabError::Invalid(format!("model `{id}` supports dim in {lo}..={hi}, got {}", p.dim)));
    }
    Ok(p.dim)
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("euclidean", |p| Ok(Arc::new(StaticEuclidean::new(dim_in(p, 1, 3, "euclidean")?))));
        r.register("sphere", |p| Ok(Arc::new(ExpandingSphere::new(dim_in(p, 2, 3, "sphere")?))));
        r.register("hyperbolic", |p| Ok(Arc::new(ShrinkingHyperbolic::new(dim_in(p, 2, 3, "hyperbolic")?))));
        r.register("bump", |p| {
            dim_in(p, 2, 2, "bump")?;
            if !(p.bump_width > 0.0) || !p.bump_amplitude.is_finite() {
                return Err(LabError::Invalid("bump needs a positive width and finite amplitude".into()));
            }
            Ok(Arc::new(BumpConformal::new(p.bump_amplitude, p.bump_width)))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, ctor: ModelCtor) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn build(&self, name: &str, params: &ModelParams) -> Result<SharedModel> {
        let ctor = self
            .entries
            .get(name)
            .ok_or_else(|| LabError::Unknown { kind: "model", name: name.to_string() })?;
        ctor(params)
    }
}
