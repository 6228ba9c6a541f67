//! Prediction quality metrics and horizon-wise evaluation reports.

mod report;
mod similarity;

pub use report::{
    evaluate, summary_csv, timestep_csv, CopyLast, Forecaster, GroundTruth, MetricReport, MetricSeries, SUMMARY_HEADER,
    TIMESTEP_HEADER,
};
pub use similarity::{image_similarity, image_similarity_classes, manhattan_distance_transform, UNREACHABLE};

use crate::error::{Error, Result};
use crate::grid::Ogm;

/// Mean squared difference of occupancy probabilities over all cells.
pub fn mse(pred: &Ogm, gt: &Ogm) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let n = pred.cells().len() as f64;
    Ok(pred.cells().iter().zip(gt.cells()).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / n)
}

/// MSE restricted to masked cells, with the number of cells it covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicMse {
    /// Zero when the mask is empty.
    pub value: f64,
    pub cells: usize,
}

pub fn dynamic_mse(pred: &Ogm, gt: &Ogm, mask: &[bool]) -> Result<DynamicMse> {
    pred.check_same_shape(gt)?;
    if mask.len() != pred.cells().len() {
        return Err(Error::Shape(format!("mask has {} cells, grid has {}", mask.len(), pred.cells().len())));
    }
    let (sum, cells) = pred
        .cells()
        .iter()
        .zip(gt.cells())
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((p, g), _)| (s + (p - g) * (p - g), n + 1));
    let value = if cells == 0 { 0.0 } else { sum / cells as f64 };
    Ok(DynamicMse { value, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;

    fn ogm(w: usize, h: usize, cells: Vec<f64>) -> Ogm {
        Ogm::new(GridConfig::new(w, h, 1.0).unwrap(), cells).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = ogm(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let half = ogm(2, 2, vec![0.5; 4]);
        let zero = ogm(2, 2, vec![0.0; 4]);
        assert_eq!(mse(&half, &zero).unwrap(), 0.25);
        assert!(mse(&half, &ogm(4, 1, vec![0.0; 4])).is_err());
    }

    #[test]
    fn dynamic_mse_examples() {
        let a = ogm(3, 3, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let b = ogm(3, 3, vec![1.0, 0.1, 0.2, 0.3, 0.0, 0.5, 0.6, 0.7, 0.8]);
        let mut mask = vec![false; 9];
        mask[0] = true;
        mask[4] = true;
        // (1.0^2 + 0.4^2) / 2
        let d = dynamic_mse(&a, &b, &mask).unwrap();
        assert_eq!(d.cells, 2);
        assert!((d.value - 0.58).abs() < 1e-15);

        let none = dynamic_mse(&a, &b, &[false; 9]).unwrap();
        assert_eq!(none, DynamicMse { value: 0.0, cells: 0 });
        let all = dynamic_mse(&a, &b, &[true; 9]).unwrap();
        assert_eq!(all.value, mse(&a, &b).unwrap());
        assert!(dynamic_mse(&a, &b, &[true; 4]).is_err());
    }

    use proptest::prelude::*;

    fn pair(max: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<bool>)> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            let n = w * h;
            (
                Just(w),
                Just(h),
                prop::collection::vec(0.0..=1.0f64, n),
                prop::collection::vec(0.0..=1.0f64, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_naive_loops((w, h, a, b, mask) in pair(12)) {
            let (pa, pb) = (ogm(w, h, a.clone()), ogm(w, h, b.clone()));
            let mut sum = 0.0;
            for i in 0..a.len() {
                sum += (a[i] - b[i]) * (a[i] - b[i]);
            }
            prop_assert!((mse(&pa, &pb).unwrap() - sum / a.len() as f64).abs() < 1e-12);
            prop_assert_eq!(mse(&pa, &pb).unwrap(), mse(&pb, &pa).unwrap());
            prop_assert_eq!(dynamic_mse(&pa, &pb, &vec![true; a.len()]).unwrap().value, mse(&pa, &pb).unwrap());
            let d = dynamic_mse(&pa, &pb, &mask).unwrap();
            prop_assert_eq!(d.cells, mask.iter().filter(|&&m| m).count());
            prop_assert_eq!(d, dynamic_mse(&pb, &pa, &mask).unwrap());
        }
    }
}
