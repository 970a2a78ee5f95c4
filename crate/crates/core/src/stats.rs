//! Small Monte Carlo helpers: compensated sums and sample moments.

/// Neumaier-compensated running sum. Addition order is fixed by the caller,
/// so sums over ordered trial results are reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<KahanSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).collect::<KahanSum>().value() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Summary of a scalar Monte Carlo sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        Estimate {
            mean: mean(xs),
            std_error: if xs.len() >= 2 { std_error(xs) } else { f64::NAN },
            samples: xs.len(),
        }
    }

    /// `mean^(1/p)` with a delta-method standard error.
    pub fn pth_root(&self, p: f64) -> Estimate {
        let root = self.mean.powf(1.0 / p);
        let se = if self.mean > 0.0 {
            root / (p * self.mean) * self.std_error
        } else {
            f64::NAN
        };
        Estimate {
            mean: root,
            std_error: se,
            samples: self.samples,
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Binomial standard deviation of a success fraction over `shots` trials.
pub fn binomial_std(prob: f64, shots: usize) -> f64 {
    (prob * (1.0 - prob) / shots as f64).sqrt()
}

/// Skewness (population form) of a sample.
pub fn skewness(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1e16, 1.0, -1e16];
        xs.extend(std::iter::repeat_n(1.0, 10));
        assert_eq!(sum(&xs), 11.0);
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!(skewness(&[-1.0, 0.0, 1.0]).abs() < 1e-15);
    }

    #[test]
    fn pth_root_delta_method() {
        let e = Estimate {
            mean: 16.0,
            std_error: 0.4,
            samples: 10,
        };
        let r = e.pth_root(2.0);
        assert_eq!(r.mean, 4.0);
        assert!((r.std_error - 0.05).abs() < 1e-15);
    }
}
