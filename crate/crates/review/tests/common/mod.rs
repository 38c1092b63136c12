#![allow(dead_code)]

use anomkit_core::{AnomalyRecord, Decision, ImageAnnotation, Provenance, Verdict};

pub fn record(image: usize, n: usize) -> AnomalyRecord {
    AnomalyRecord::new(format!("anomaly {image}-{n}"), "phenomenon", "reasoning", (n * 7 % 100) as f64).unwrap()
}

pub fn annotation(image: usize, count: usize) -> ImageAnnotation {
    ImageAnnotation::new(
        format!("img{image:03}"),
        format!("img{image:03}.png"),
        Provenance::AgentRaw,
        (0..count).map(|n| record(image, n)).collect(),
    )
}

pub fn verdict(image_id: &str, idx: usize, decision: Decision, annotator: &str, secs: i64) -> Verdict {
    Verdict {
        image_id: image_id.into(),
        anomaly_index: idx,
        decision,
        annotator_id: annotator.into(),
        timestamp: chrono::DateTime::from_timestamp(1_700_000_000 + secs, 0).unwrap(),
    }
}
