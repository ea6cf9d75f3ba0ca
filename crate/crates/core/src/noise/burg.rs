use super::{ARModel, FlowSeries, NoiseError};

/// Burg lattice fit of an order-`order` model to `series`.
///
/// The mean is removed first and stored. Each stage picks the reflection
/// coefficient minimising the summed forward and backward error energies,
/// `k_m = -2 sum f b / (sum f^2 + sum b^2)`, then updates the predictor by
/// the Levinson recursion and the errors in place.
pub fn burg_fit(series: &FlowSeries, order: usize) -> Result<ARModel, NoiseError> {
    let n = series.samples.len();
    if n < 2 || order + 1 >= n {
        return Err(NoiseError::InsufficientData { order, len: n });
    }
    if series.samples.iter().any(|v| !v.is_finite()) {
        return Err(NoiseError::InvalidParameter("series contains non-finite samples".into()));
    }
    let mu = series.mean();
    let x: Vec<f64> = series.samples.iter().map(|v| v - mu).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(energy > 1e-24 * (1.0 + mu * mu)) {
        return Err(NoiseError::ZeroVariance);
    }

    let mut f = x.clone();
    let mut b = x;
    let mut a: Vec<f64> = Vec::with_capacity(order);
    let mut err = energy;
    for m in 1..=order {
        // f[i] pairs with b[i - 1] for i in m..n
        let mut num = 0.0;
        let mut den = 0.0;
        for i in m..n {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        let k = if den > 0.0 { -2.0 * num / den } else { 0.0 };
        let prev = a.clone();
        a.push(k);
        for j in 0..m - 1 {
            a[j] = prev[j] + k * prev[m - 2 - j];
        }
        for i in (m..n).rev() {
            let fi = f[i];
            let bi = b[i - 1];
            f[i] = fi + k * bi;
            b[i] = bi + k * fi;
        }
        err = (m..n).map(|i| f[i] * f[i] + b[i] * b[i]).sum::<f64>() / (2 * (n - m)) as f64;
    }
    Ok(ARModel::new(a, err.sqrt(), mu))
}
