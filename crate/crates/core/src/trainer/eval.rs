use crate::data::{batch_tensor, resize_eval, Dataset, Image};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::micronet::ModelState;

/// Eval-mode scores for every sample of `data` at resolution `r`, in order.
pub fn predict_dataset(model: &ModelState, data: &Dataset, r: usize, batch_size: usize) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size) {
        let imgs = chunk
            .iter()
            .map(|&i| resize_eval(data.image(i), r))
            .collect::<Result<Vec<Image>>>()?;
        let refs: Vec<&Image> = imgs.iter().collect();
        out.extend(model.predict(&batch_tensor(&refs)?)?);
    }
    Ok(out)
}

/// SRCC / PLCC / final score of `model` on `data`.
pub fn evaluate_model(model: &ModelState, data: &Dataset, r: usize, batch_size: usize) -> Result<EvalReport> {
    let pred = predict_dataset(model, data, r, batch_size)?;
    evaluate(&pred, &data.manifest().labels())
}
