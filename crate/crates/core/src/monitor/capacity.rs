//! Covert-channel decoding and capacity estimation.
//!
//! The receiver side of a probe pair yields one latency sample per frame.
//! Decoding is deliberately unsophisticated — split at the sample median —
//! because the question is whether *any* low-effort observer could extract
//! the bit-stream, not how well an optimal one would do. Capacity is the
//! plug-in empirical mutual information between sent and decoded bits, in
//! bits per symbol, clamped to `[0, 1]`.

use super::MonitorError;

/// Median of the samples; for even sizes, the mean of the two middle values.
/// Empty input yields `0.0`.
pub fn median_threshold(samples: &[u64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    }
}

/// Decode each sample against the sample median: strictly above → 1.
///
/// A constant stream therefore decodes to all zeros, which against a
/// balanced bit sequence scores exactly chance-level accuracy.
pub fn threshold_decode(samples: &[u64]) -> Vec<u8> {
    let thr = median_threshold(samples);
    samples.iter().map(|&s| u8::from((s as f64) > thr)).collect()
}

/// Fraction of positions where `sent` and `decoded` agree.
/// Empty input scores `0.5` (chance level) by convention.
pub fn decode_accuracy(sent: &[u8], decoded: &[u8]) -> Result<f64, MonitorError> {
    if sent.len() != decoded.len() {
        return Err(MonitorError::LengthMismatch { sent: sent.len(), received: decoded.len() });
    }
    if sent.is_empty() {
        return Ok(0.5);
    }
    let hits = sent.iter().zip(decoded).filter(|(a, b)| (**a != 0) == (**b != 0)).count();
    Ok(hits as f64 / sent.len() as f64)
}

/// Plug-in empirical mutual information between two binary sequences, in
/// bits per symbol.
pub fn estimate_capacity(sent: &[u8], decoded: &[u8]) -> Result<f64, MonitorError> {
    if sent.len() != decoded.len() {
        return Err(MonitorError::LengthMismatch { sent: sent.len(), received: decoded.len() });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let mut c = [[0.0f64; 2]; 2];
    for (&x, &y) in sent.iter().zip(decoded) {
        c[usize::from(x != 0)][usize::from(y != 0)] += 1.0;
    }
    let n = sent.len() as f64;
    let rows = [c[0][0] + c[0][1], c[1][0] + c[1][1]];
    let cols = [c[0][0] + c[1][0], c[0][1] + c[1][1]];
    let mut mi = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            if c[x][y] > 0.0 {
                mi += (c[x][y] / n) * ((c[x][y] * n) / (rows[x] * cols[y])).log2();
            }
        }
    }
    Ok(mi.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(p: f64) -> f64 {
        if p == 0.0 || p == 1.0 {
            return 0.0;
        }
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    /// Balanced n-bit input with exactly `flips` decoding errors per class:
    /// the empirical channel is a perfectly symmetric BSC.
    fn bsc(per_class: usize, flips: usize) -> (Vec<u8>, Vec<u8>) {
        let mut sent = vec![0u8; per_class];
        sent.extend(vec![1u8; per_class]);
        let mut decoded = sent.clone();
        for d in decoded.iter_mut().take(flips) {
            *d ^= 1;
        }
        for d in decoded.iter_mut().skip(per_class).take(flips) {
            *d ^= 1;
        }
        (sent, decoded)
    }

    #[test]
    fn median_handles_both_parities() {
        assert_eq!(median_threshold(&[]), 0.0);
        assert_eq!(median_threshold(&[7]), 7.0);
        assert_eq!(median_threshold(&[2, 6]), 4.0);
        assert_eq!(median_threshold(&[6, 2, 6, 2]), 4.0);
        assert_eq!(median_threshold(&[1, 9, 5]), 5.0);
    }

    #[test]
    fn two_level_latencies_decode_exactly() {
        let lat = [6, 2, 6, 6, 2, 2];
        assert_eq!(threshold_decode(&lat), vec![1, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn constant_latency_scores_chance_on_balanced_bits() {
        let lat = [6u64; 6];
        let decoded = threshold_decode(&lat);
        assert_eq!(decoded, vec![0; 6]);
        let sent = [1, 0, 1, 1, 0, 0];
        assert_eq!(decode_accuracy(&sent, &decoded).unwrap(), 0.5);
        assert_eq!(estimate_capacity(&sent, &decoded).unwrap(), 0.0);
    }

    #[test]
    fn perfect_channel_reaches_one_bit() {
        let (sent, decoded) = bsc(500, 0);
        assert_eq!(decode_accuracy(&sent, &decoded).unwrap(), 1.0);
        assert!((estimate_capacity(&sent, &decoded).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_noise_matches_the_closed_form() {
        // 550 flips per 5000-bit class is an exact 11% crossover; the
        // plug-in estimate must equal 1 - H2(0.11) to rounding error.
        let (sent, decoded) = bsc(5000, 550);
        let cap = estimate_capacity(&sent, &decoded).unwrap();
        assert!((cap - (1.0 - h2(0.11))).abs() < 1e-12, "cap = {cap}");
        assert!((cap - 0.5001).abs() < 5e-4);
        assert_eq!(decode_accuracy(&sent, &decoded).unwrap(), 0.89);
    }

    #[test]
    fn capacity_decreases_as_noise_grows() {
        let mut last = f64::INFINITY;
        for flips in [0usize, 100, 250, 550, 1000, 2000, 2400, 2500] {
            let (sent, decoded) = bsc(5000, flips);
            let cap = estimate_capacity(&sent, &decoded).unwrap();
            assert!(cap < last, "capacity must fall as flips rise ({flips}: {cap} vs {last})");
            last = cap;
        }
        assert_eq!(last, 0.0, "an exactly half-flipped channel carries nothing");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = estimate_capacity(&[1, 0], &[1]).unwrap_err();
        assert_eq!(err, MonitorError::LengthMismatch { sent: 2, received: 1 });
        assert!(decode_accuracy(&[], &[0]).is_err());
    }

    #[test]
    fn degenerate_inputs_carry_nothing() {
        assert_eq!(estimate_capacity(&[], &[]).unwrap(), 0.0);
        assert_eq!(estimate_capacity(&[1, 1, 1], &[1, 0, 1]).unwrap(), 0.0);
        assert_eq!(estimate_capacity(&[1, 0, 1], &[0, 0, 0]).unwrap(), 0.0);
    }
}
