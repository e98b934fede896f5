use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{Detector, HoennModel};
use crate::error::{ensure, Result};
use crate::scalar::{lit, widen, Real};
use crate::sim::SimConfigDoc;

pub const HOENN_CHECKPOINT_FORMAT: &str = "hoenn-checkpoint/1";

/// Serialized trained model. Weights are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoennCheckpoint {
    pub format: String,
    pub onn: SimConfigDoc,
    pub detector: Detector,
    pub classes: usize,
    pub features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feature_scale: f64,
    /// Digest of the configuration that produced the model.
    pub config_hash: String,
}

impl HoennCheckpoint {
    pub fn from_model<T: Real>(model: &HoennModel<T>, config_hash: impl Into<String>) -> Self {
        let (classes, features) = model.weights.shape();
        Self {
            format: HOENN_CHECKPOINT_FORMAT.to_string(),
            onn: SimConfigDoc::from_stack(&model.onn),
            detector: model.detector,
            classes,
            features,
            weights: (0..classes)
                .flat_map(|i| (0..features).map(move |j| (i, j)))
                .map(|(i, j)| widen(model.weights[(i, j)]))
                .collect(),
            bias: model.bias.iter().map(|b| widen(*b)).collect(),
            feature_scale: widen(model.feature_scale),
            config_hash: config_hash.into(),
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<HoennModel<T>> {
        ensure!(
            self.format == HOENN_CHECKPOINT_FORMAT,
            Config,
            "unsupported checkpoint format {:?}, expected {HOENN_CHECKPOINT_FORMAT:?}",
            self.format
        );
        ensure!(
            self.weights.len() == self.classes * self.features && self.bias.len() == self.classes,
            Dimension,
            "checkpoint weight or bias length does not match its shape"
        );
        let model = HoennModel {
            onn: self.onn.to_stack()?,
            detector: self.detector,
            weights: DMatrix::from_row_iterator(self.classes, self.features, self.weights.iter().map(|w| lit(*w))),
            bias: DVector::from_iterator(self.classes, self.bias.iter().map(|b| lit(*b))),
            feature_scale: lit(self.feature_scale),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
