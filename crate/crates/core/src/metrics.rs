//! Separation quality metrics.

use crate::error::{CueError, Result};
use crate::objectives::{si_snr, RATIO_MAX, RATIO_MIN};

/// SI-SNR improvement of `est` over the unprocessed mixture.
pub fn si_snri(est: &[f64], mix: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(si_snr(est, reference)? - si_snr(mix, reference)?)
}

/// Plain signal-to-distortion ratio `10 log10(|ref|^2 / |est - ref|^2)`, clamped like SI-SNR.
pub fn sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(CueError::LengthMismatch(est.len(), reference.len()));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(CueError::DegenerateReference);
    }
    let err: f64 = est.iter().zip(reference).map(|(e, r)| (e - r) * (e - r)).sum();
    let ratio = if err == 0.0 { f64::INFINITY } else { rr / err };
    Ok(10.0 * ratio.clamp(RATIO_MIN, RATIO_MAX).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdr_edges() {
        let r = [0.5, -1.0, 2.0];
        assert_eq!(sdr(&r, &r).unwrap(), 100.0);
        assert_eq!(sdr(&[0.0; 3], &r).unwrap(), 0.0);
        assert!(sdr(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn mixture_has_zero_improvement() {
        let mix = [0.3, 0.1, -0.4, 0.9];
        let r = [0.2, 0.0, -0.5, 1.0];
        assert_eq!(si_snri(&mix, &mix, &r).unwrap(), 0.0);
    }
}
