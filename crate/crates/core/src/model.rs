//! Canonical domain types shared by every component.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ValidationError;

pub const SEVERITY_MIN: f64 = 0.0;
pub const SEVERITY_MAX: f64 = 100.0;

/// One structured anomaly: what is wrong, how it looks, why it is wrong and
/// how realistic it still is (0 = completely implausible, 100 = fully realistic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub name: String,
    pub phenomenon: String,
    pub reasoning: String,
    pub severity: f64,
}

impl AnomalyRecord {
    pub fn new(
        name: impl Into<String>,
        phenomenon: impl Into<String>,
        reasoning: impl Into<String>,
        severity: f64,
    ) -> Result<Self, ValidationError> {
        let record = Self {
            name: name.into(),
            phenomenon: phenomenon.into(),
            reasoning: reasoning.into(),
            severity,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (field, value) in [
            ("name", &self.name),
            ("phenomenon", &self.phenomenon),
            ("reasoning", &self.reasoning),
        ] {
            if value.trim().is_empty() {
                return Err(ValidationError::new(field, "must not be empty"));
            }
        }
        validate_severity(self.severity)
    }
}

pub fn validate_severity(severity: f64) -> Result<(), ValidationError> {
    if !(SEVERITY_MIN..=SEVERITY_MAX).contains(&severity) {
        return Err(ValidationError::new(
            "severity",
            "severity out of range [0,100]",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Real,
    Ai,
}

impl fmt::Display for SourceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Real => "real",
            Self::Ai => "ai",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AgentRaw,
    HitlVerified,
    ModelPrediction,
    Human,
}

/// Ground-truth or predicted anomaly set for one image.
///
/// Fields not known to this schema are kept in `extra` and written back
/// unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub image_uri: String,
    #[serde(default)]
    pub source_label: Option<SourceLabel>,
    #[serde(default)]
    pub generator_tag: Option<String>,
    pub provenance: Provenance,
    #[serde(default)]
    pub anomalies: Vec<AnomalyRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ImageAnnotation {
    pub fn new(
        image_id: impl Into<String>,
        image_uri: impl Into<String>,
        provenance: Provenance,
        anomalies: Vec<AnomalyRecord>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            image_uri: image_uri.into(),
            source_label: None,
            generator_tag: None,
            provenance,
            anomalies,
            extra: Map::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.image_id.trim().is_empty() {
            return Err(ValidationError::new("image_id", "must not be empty"));
        }
        validate_anomalies(&self.anomalies)
    }
}

fn validate_anomalies(anomalies: &[AnomalyRecord]) -> Result<(), ValidationError> {
    for (i, anomaly) in anomalies.iter().enumerate() {
        anomaly
            .validate()
            .map_err(|e| ValidationError::new(format!("anomalies[{i}].{}", e.field), e.reason))?;
    }
    Ok(())
}

/// A model's output for one image: its anomaly list and, for deepfake
/// evaluation, its real/AI verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub image_id: String,
    #[serde(default)]
    pub predicted_label: Option<SourceLabel>,
    #[serde(default)]
    pub anomalies: Vec<AnomalyRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl PredictionSet {
    pub fn new(image_id: impl Into<String>, anomalies: Vec<AnomalyRecord>) -> Self {
        Self {
            image_id: image_id.into(),
            predicted_label: None,
            anomalies,
            extra: Map::new(),
        }
    }

    pub fn with_label(mut self, label: SourceLabel) -> Self {
        self.predicted_label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.image_id.trim().is_empty() {
            return Err(ValidationError::new("image_id", "must not be empty"));
        }
        validate_anomalies(&self.anomalies)
    }
}

/// Answer to "is this structured description correct for the given image?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Unsure,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accept => "accept",
            Self::Reject => "reject",
            Self::Unsure => "unsure",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub image_id: String,
    pub anomaly_index: usize,
    pub decision: Decision,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
}

/// Similarity thresholds used to gate matches; strictly increasing, in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ThresholdSet(Vec<f64>);

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, ValidationError> {
        if thresholds.is_empty() {
            return Err(ValidationError::new("thresholds", "must not be empty"));
        }
        for &t in &thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ValidationError::new(
                    "thresholds",
                    format!("{t} is outside (0,1]"),
                ));
            }
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ValidationError::new(
                "thresholds",
                "must be strictly increasing",
            ));
        }
        Ok(Self(thresholds))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self(vec![0.7, 0.8, 0.9])
    }
}

impl FromStr for ThresholdSet {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|_| {
                    ValidationError::new("thresholds", format!("`{}` is not a number", part.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(values)
    }
}

impl<'de> Deserialize<'de> for ThresholdSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        Self::new(values).map_err(serde::de::Error::custom)
    }
}

/// Which text fields a similarity compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    Phe,
    Rea,
    Full,
}

impl View {
    pub const ALL: [View; 3] = [View::Phe, View::Rea, View::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Phe => "Phe",
            Self::Rea => "Rea",
            Self::Full => "Full",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// Weight of the phenomenon similarity in the Full view.
    pub alpha: f64,
    pub view: View,
    pub backend_id: String,
}

impl SimilarityConfig {
    pub fn new(alpha: f64, backend_id: impl Into<String>) -> Result<Self, ValidationError> {
        let cfg = Self {
            alpha,
            view: View::Full,
            backend_id: backend_id.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ValidationError::new("alpha", "must lie in [0,1]"));
        }
        Ok(())
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            view: View::Full,
            backend_id: crate::similarity::SURROGATE_BACKEND_ID.to_string(),
        }
    }
}
