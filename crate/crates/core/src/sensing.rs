//! Sample yield, quality of data and the analytic learning gain.

use crate::error::{Error, Result};

/// Sensing allocation of one client: `x` visual time cells, `y` wireless
/// frequency cells, `z` wireless time cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleYieldInputs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub a: f64,
    pub b: f64,
}

/// Continuous yield `a·x + b·z·y`.
pub fn yield_continuous(a: f64, b: f64, x: f64, y: f64, z: f64) -> f64 {
    a * x + b * z * y
}

/// `⌊a·x + b·z·y⌋`; the floor is taken once over both modalities.
pub fn sample_yield(inp: &SampleYieldInputs) -> Result<u64> {
    let SampleYieldInputs { x, y, z, a, b } = *inp;
    if [x, y, z, a, b].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "sensing inputs must be finite and nonnegative".into(),
        ));
    }
    if z > x {
        return Err(Error::InvalidArgument(format!(
            "wireless sensing time {z} exceeds visual sensing time {x}"
        )));
    }
    // Tolerate representation error just under an integer.
    let n = yield_continuous(a, b, x, y, z);
    Ok((n + 1e-9 * (1.0 + n)).floor() as u64)
}

/// Total-variation distance between two label distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let tv = 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Quality of data `1 − TV(local, global)`.
///
/// An empty local distribution (client senses nothing) has quality 0.
pub fn qod(local: &[f64], global: &[f64]) -> Result<f64> {
    if local.is_empty() {
        return Ok(0.0);
    }
    Ok(1.0 - total_variation(local, global)?)
}

/// `λ_sp·Q·N`.
pub fn learning_gain(n: f64, q: f64, lambda_sp: f64) -> f64 {
    lambda_sp * q * n
}

/// Sample-weighted mixture of per-modality label distributions. Empty
/// components or zero weights are skipped.
pub fn mix_distributions(parts: &[(&[f64], f64)]) -> Vec<f64> {
    let len = parts.iter().map(|(d, _)| d.len()).max().unwrap_or(0);
    let mut out = vec![0.0; len];
    let mut total = 0.0;
    for (d, w) in parts {
        if d.is_empty() || *w <= 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(d.iter()) {
            *o += w * v;
        }
        total += w;
    }
    if total <= 0.0 {
        return Vec::new();
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}
