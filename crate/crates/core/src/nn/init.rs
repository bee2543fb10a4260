use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::Tensor;

/// Zero-mean normal draws with std `sqrt(2 / fan_in)`.
pub fn kaiming_init<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("Kaiming init needs fan_in > 0".into()));
    }
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

/// Uniform draws in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument("Xavier init needs positive fans".into()));
    }
    let bound = xavier_bound(fan_in, fan_out);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn kaiming_std() {
        let mut rng = stream(3, Purpose::Init);
        let t = kaiming_init(vec![100_000], 8, &mut rng).unwrap();
        let n = t.len() as f64;
        let mean = t.values().iter().sum::<f64>() / n;
        let std = (t.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.5).abs() / 0.5 < 0.02, "std {std}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn xavier_within_bound() {
        assert_eq!(xavier_bound(3, 3), 1.0);
        let mut rng = stream(3, Purpose::Init);
        let t = xavier_init(vec![10_000], 3, 3, &mut rng).unwrap();
        assert!(t.values().iter().all(|v| v.abs() <= 1.0));
        assert!(t.values().iter().any(|v| v.abs() > 0.9));
    }

    #[test]
    fn same_seed_same_tensor() {
        let a = kaiming_init(vec![4, 4], 16, &mut stream(9, Purpose::Init)).unwrap();
        let b = kaiming_init(vec![4, 4], 16, &mut stream(9, Purpose::Init)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_fan_rejected() {
        let mut rng = stream(0, Purpose::Init);
        assert!(kaiming_init(vec![1], 0, &mut rng).is_err());
        assert!(xavier_init(vec![1], 0, 1, &mut rng).is_err());
        assert!(xavier_init(vec![1], 1, 0, &mut rng).is_err());
    }
}
