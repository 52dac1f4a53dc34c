//! Thresholded average precision for one label and mAP over a score matrix.

use dishnet::metrics::{
    average_precision, mean_average_precision, per_label_average_precision, precision_recall_at, Averaging,
    PredictionSet, ThresholdGrid,
};
use dishnet::Tensor;

fn main() -> dishnet::Result<()> {
    let preds = PredictionSet::new(vec![0.9, 0.8, 0.7, 0.6], vec![true, false, true, false])?;
    let grid = ThresholdGrid::default();
    for t in [0.65, 0.75, 0.85] {
        let (p, r) = precision_recall_at(&preds, t)?;
        println!("t={t:.2}  precision {p:.3}  recall {r:.3}");
    }
    println!("AP {:.6}", average_precision(&preds, &grid)?);

    let scores = Tensor::<f64>::new(vec![0.9, 0.1, 0.3, 0.4, 0.8, 0.2, 0.2, 0.6, 0.7], &[3, 3])?;
    let labels = Tensor::<f64>::new(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0], &[3, 3])?;
    println!("per-label AP {:?}", per_label_average_precision(&scores, &labels, &grid)?);
    println!("micro mAP {:.6}", mean_average_precision(&scores, &labels, &grid, Averaging::Micro)?);
    println!("macro mAP {:.6}", mean_average_precision(&scores, &labels, &grid, Averaging::Macro)?);
    Ok(())
}
