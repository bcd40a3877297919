//! Small statistical helpers shared by the estimators and campaigns.

/// Compensated (Neumaier) summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 2, "variance needs at least two samples");
    let mu = mean(xs);
    compensated_sum(xs.iter().map(|&x| (x - mu) * (x - mu))) / (n - 1) as f64
}

pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    (mean(xs), sample_variance(xs))
}

/// Standard error of the sample mean.
pub fn se_of_mean(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the sample variance via the fourth central moment.
pub fn se_of_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let s2 = sample_variance(xs);
    let m4 = compensated_sum(xs.iter().map(|&x| (x - mu).powi(4))) / n;
    ((m4 - s2 * s2).max(0.0) / n).sqrt()
}

/// Center and scale to empirical mean 0, variance 1.
///
/// Returns `None` when the sample variance vanishes (degenerate ensemble).
pub fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let (mu, var) = mean_and_var(xs);
    if var <= 0.0 || !var.is_finite() {
        return None;
    }
    let sd = var.sqrt();
    Some(xs.iter().map(|&x| (x - mu) / sd).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares fit of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 2, "fit needs at least two points");
    let xm = mean(x);
    let ym = mean(y);
    let sxx = compensated_sum(x.iter().map(|&v| (v - xm) * (v - xm)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)));
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let slope_se = if n > 2 {
        let ss_res = compensated_sum(
            x.iter()
                .zip(y)
                .map(|(&a, &b)| (b - intercept - slope * a).powi(2)),
        );
        (ss_res / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
    }
}
