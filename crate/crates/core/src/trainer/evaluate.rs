use super::train::Example;
use crate::error::{Error, Result};
use crate::physnet::{predict_batch, ModelWeights, Sampling};
use crate::voxel::iou;

const EVAL_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_iou: f64,
    pub per_record: Vec<f64>,
}

/// Deterministic prediction (`z = μ`) for every example, binarized at `p`
/// and scored against its target.
pub fn evaluate(weights: &ModelWeights, examples: &[Example], p: f64) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::Evaluation("nothing to evaluate: the split is empty".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Evaluation(format!("threshold {p} must lie in (0, 1)")));
    }
    let mut per_record = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let inputs: Vec<_> = chunk.iter().map(|e| &e.input).collect();
        let conds: Vec<_> = chunk.iter().map(|e| e.condition.clone()).collect();
        let preds = predict_batch(weights, &inputs, &conds, Sampling::Deterministic)?;
        for (pred, e) in preds.iter().zip(chunk) {
            per_record.push(iou(pred, &e.target, p)?);
        }
    }
    let mean_iou = per_record.iter().sum::<f64>() / per_record.len() as f64;
    Ok(Evaluation { mean_iou, per_record })
}
