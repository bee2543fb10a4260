use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{ensure_same_shape, AnnotationSet, BinaryMask};

use super::confusion;

/// Squared generalized energy distance of a deterministic prediction
/// against a set of annotations, with its two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GedReport {
    pub d2_ged: f64,
    /// Mean IoU distance between the prediction and each annotation.
    pub expected_distance: f64,
    /// Mean IoU distance over all ordered annotation pairs, self-pairs included.
    pub diversity: f64,
    /// Mean DSC between the prediction and each annotation.
    pub expected_dsc: f64,
}

impl GedReport {
    /// Assemble a report from its two distance terms.
    pub fn from_terms(expected_distance: f64, diversity: f64, expected_dsc: f64) -> Self {
        Self { d2_ged: 2.0 * expected_distance - diversity, expected_distance, diversity, expected_dsc }
    }
}

/// `d(x, y) = 1 - IoU(x, y)`; zero for two empty masks.
pub fn iou_distance(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    Ok(1.0 - confusion(x, y)?.iou())
}

fn mean_pairwise(xs: &[BinaryMask], ys: &[BinaryMask]) -> Result<f64> {
    let mut total = 0.0;
    for x in xs {
        for y in ys {
            total += iou_distance(x, y)?;
        }
    }
    Ok(total / (xs.len() * ys.len()) as f64)
}

/// Plug-in estimate of `D^2_GED` between two empirical distributions of
/// segmentations. Every expectation is a mean over ordered pairs, self-pairs
/// included.
pub fn ged_squared_general(samples_p: &[BinaryMask], samples_q: &[BinaryMask]) -> Result<f64> {
    let (Some(first), false) = (samples_p.first(), samples_q.is_empty()) else {
        return Err(Error::InvalidArgument("GED needs non-empty sample lists".into()));
    };
    for m in samples_p.iter().chain(samples_q) {
        ensure_same_shape(first.shape(), m.shape(), "GED samples")?;
    }
    let cross = mean_pairwise(samples_p, samples_q)?;
    let within_p = mean_pairwise(samples_p, samples_p)?;
    let within_q = mean_pairwise(samples_q, samples_q)?;
    Ok(2.0 * cross - within_p - within_q)
}

/// `D^2_GED` for a single deterministic prediction, where the prediction's
/// own diversity term vanishes.
pub fn ged_squared_deterministic(annotations: &AnnotationSet, pred: &BinaryMask) -> Result<GedReport> {
    ensure_same_shape(annotations.shape(), pred.shape(), "GED prediction vs annotations")?;
    let n = annotations.len() as f64;
    let mut dist = 0.0;
    let mut dsc = 0.0;
    for y in annotations {
        let c = confusion(y, pred)?;
        dist += 1.0 - c.iou();
        dsc += c.dice();
    }
    let diversity = mean_pairwise(annotations.annotations(), annotations.annotations())?;
    Ok(GedReport::from_terms(dist / n, diversity, dsc / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: &[u8]) -> BinaryMask {
        BinaryMask::new(2, 2, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_distributions_zero() {
        let ps = vec![m(&[1, 0, 0, 0]), m(&[1, 1, 0, 0]), m(&[0, 0, 0, 0])];
        assert_eq!(ged_squared_general(&ps, &ps).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_perfect_prediction() {
        let a = m(&[1, 1, 0, 1]);
        let set = AnnotationSet::new(vec![a.clone(); 4]).unwrap();
        let r = ged_squared_deterministic(&set, &a).unwrap();
        assert_eq!(r.d2_ged, 0.0);
        assert_eq!(r.expected_dsc, 1.0);
    }

    #[test]
    fn singleton_q_reduces_to_deterministic() {
        let ps = vec![m(&[1, 0, 0, 0]), m(&[1, 1, 0, 0]), m(&[0, 1, 1, 0])];
        let pred = m(&[1, 1, 1, 0]);
        let general = ged_squared_general(&ps, std::slice::from_ref(&pred)).unwrap();
        let det = ged_squared_deterministic(&AnnotationSet::new(ps).unwrap(), &pred).unwrap();
        assert!((general - det.d2_ged).abs() < 1e-12);
    }

    #[test]
    fn expanded_double_sum() {
        // p = {A, B, C}, q = {D, E}; IoU distances worked out by hand:
        // A=1000 B=1100 C=0110 D=1110 E=0001
        // d(A,B)=1/2 d(A,C)=1 d(B,C)=2/3
        // d(A,D)=2/3 d(A,E)=1 d(B,D)=1/3 d(B,E)=1 d(C,D)=1/3 d(C,E)=1
        // d(D,E)=1
        let ps = vec![m(&[1, 0, 0, 0]), m(&[1, 1, 0, 0]), m(&[0, 1, 1, 0])];
        let qs = vec![m(&[1, 1, 1, 0]), m(&[0, 0, 0, 1])];
        let cross = (2.0 / 3.0 + 1.0 + 1.0 / 3.0 + 1.0 + 1.0 / 3.0 + 1.0) / 6.0;
        let within_p = 2.0 * (0.5 + 1.0 + 2.0 / 3.0) / 9.0;
        let within_q = 2.0 * 1.0 / 4.0;
        let expected = 2.0 * cross - within_p - within_q;
        assert!((ged_squared_general(&ps, &qs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn published_rows_assemble() {
        let brain_growth = GedReport::from_terms(0.1876, 0.2429, 0.8963);
        assert!((brain_growth.d2_ged - 0.1323).abs() <= 5e-4);
        let kidney = GedReport::from_terms(0.0814, 0.1015, 0.9573);
        assert!((kidney.d2_ged - 0.0613).abs() <= 5e-4);
    }

    #[test]
    fn errors() {
        let a = m(&[1, 0, 0, 0]);
        assert!(ged_squared_general(&[], std::slice::from_ref(&a)).is_err());
        assert!(ged_squared_general(std::slice::from_ref(&a), &[]).is_err());
        let other = BinaryMask::zeros(3, 1).unwrap();
        assert!(ged_squared_general(&[a.clone()], &[other.clone()]).is_err());
        let set = AnnotationSet::new(vec![a]).unwrap();
        assert!(ged_squared_deterministic(&set, &other).is_err());
    }
}
