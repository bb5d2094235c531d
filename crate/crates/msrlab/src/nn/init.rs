//! Glorot (Xavier) uniform initialization.

use super::NnError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Half-width of the Glorot uniform support, `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> Result<f64, NnError> {
    if fan_in == 0 || fan_out == 0 {
        return Err(NnError::InvalidParameter(format!(
            "glorot fans must be positive (fan_in={fan_in}, fan_out={fan_out})"
        )));
    }
    Ok((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Draws `count` weights uniformly from `[-limit, limit)` with
/// `limit = sqrt(6 / (fan_in + fan_out))`.
///
/// For a convolution kernel `fan_in = kh*kw*in_ch` and
/// `fan_out = kh*kw*out_ch`; for a dense layer the fans are the feature
/// counts. The draw order is the storage order of the parameter buffer, so a
/// given RNG state yields an identical tensor every time.
pub fn glorot_uniform(
    count: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, NnError> {
    let limit = glorot_limit(fan_in, fan_out)?;
    Ok((0..count)
        .map(|_| limit * (2.0 * rng.random::<f64>() - 1.0))
        .collect())
}
