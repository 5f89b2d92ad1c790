//! Error analysis for comparisons that only see a middle window of bits.
//!
//! Dropping `k_lsb` low bits and `k_msb` high bits from an `n`-bit compare
//! shrinks the expensive bit-decomposed stage of every sign decision. The
//! price is a bounded error probability. Two error notions live here:
//!
//! * the *compare model* — two operands are truncated and compared as
//!   integers. For uniform operands the analytic bound is
//!   `2^-(n-k_lsb+1)`; see [`uniform_error_bound`]. Bit-width
//!   recommendations scan against this model.
//! * the *share model* — a secret is additively split, each share is
//!   windowed, and the sign is read off the windowed share sum. This is the
//!   quantity the secure DReLU actually computes, so the empirical error
//!   surface uses it. Dropping LSBs loses the carry out of the dropped part
//!   (a `{0,1}` perturbation), so its error sits within 2× of the compare
//!   bound for uniform inputs.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::profile::CompareConfig;

#[derive(Debug, Error, PartialEq)]
pub enum BitsError {
    #[error("bit domain must be 1..=64 bits, got {0}")]
    BadDomain(u32),
    #[error("window [{k_lsb}, {n}-{k_msb}) keeps no bits")]
    EmptyWindow { n: u32, k_msb: u32, k_lsb: u32 },
    #[error("target error must be in (0, 1), got {0}")]
    BadTarget(f64),
    #[error("exhaustive scan over {0} bits is too large (max 13)")]
    DomainTooLarge(u32),
    #[error("need at least one sample")]
    NoSamples,
}

/// A compare window: `n`-bit domain, ignoring the top `k_msb` and bottom
/// `k_lsb` bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncationConfig {
    pub n: u32,
    pub k_msb: u32,
    pub k_lsb: u32,
}

impl TruncationConfig {
    pub fn new(n: u32, k_msb: u32, k_lsb: u32) -> Result<Self, BitsError> {
        if n == 0 || n > 64 {
            return Err(BitsError::BadDomain(n));
        }
        if k_msb + k_lsb >= n {
            return Err(BitsError::EmptyWindow { n, k_msb, k_lsb });
        }
        Ok(TruncationConfig { n, k_msb, k_lsb })
    }

    pub fn exact(n: u32) -> Result<Self, BitsError> {
        Self::new(n, 0, 0)
    }

    /// Full-ring window taken from a protocol compare profile.
    pub fn from_compare(c: &CompareConfig) -> Self {
        TruncationConfig { n: 64, k_msb: c.ignore_msb, k_lsb: c.ignore_lsb }
    }

    /// Bits actually compared.
    pub fn width(&self) -> u32 {
        self.n - self.k_msb - self.k_lsb
    }

    fn mask_n(&self) -> u64 {
        low_mask(self.n)
    }

    /// Value of the kept window of an `n`-bit value.
    fn window(&self, x: u64) -> u64 {
        (x & low_mask(self.n - self.k_msb)) >> self.k_lsb
    }
}

fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Analytic error bound `2^-(n-k_lsb+1)` for comparing two uniform `n`-bit
/// operands with `k_lsb` low bits ignored.
pub fn uniform_error_bound(n: u32, k_lsb: u32) -> f64 {
    assert!(k_lsb < n, "window must keep at least one bit");
    (2.0f64).powi(-((n - k_lsb + 1) as i32))
}

/// Share-model error: fraction of samples whose sign, read from the windowed
/// share sum of a fresh random additive split, differs from the true sign.
/// Samples are reduced into the `n`-bit domain.
pub fn empirical_error(samples: &[u64], cfg: TruncationConfig, seed: u64) -> Result<f64, BitsError> {
    if samples.is_empty() {
        return Err(BitsError::NoSamples);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mn = cfg.mask_n();
    let sign_n = 1u64 << (cfg.n - 1);
    let width = cfg.width();
    let wmask = low_mask(width);
    let sign_w = 1u64 << (width - 1);
    let mut errors = 0u64;
    for &raw in samples {
        let x = raw & mn;
        let a0 = rng.next_u64() & mn;
        let a1 = x.wrapping_sub(a0) & mn;
        let xw = (cfg.window(a0).wrapping_add(cfg.window(a1))) & wmask;
        errors += ((xw & sign_w != 0) != (x & sign_n != 0)) as u64;
    }
    Ok(errors as f64 / samples.len() as f64)
}

/// Exact share-model error probability: the average over *all* `(x, a0)`
/// pairs in the `n`-bit domain. Tractable only for small `n`; serves as the
/// deterministic oracle for the Monte Carlo estimator.
pub fn exhaustive_error(cfg: TruncationConfig) -> Result<f64, BitsError> {
    if cfg.n > 13 {
        return Err(BitsError::DomainTooLarge(cfg.n));
    }
    let size = 1u64 << cfg.n;
    let mn = cfg.mask_n();
    let sign_n = 1u64 << (cfg.n - 1);
    let width = cfg.width();
    let wmask = low_mask(width);
    let sign_w = 1u64 << (width - 1);
    let mut errors = 0u64;
    for x in 0..size {
        let neg = x & sign_n != 0;
        for a0 in 0..size {
            let a1 = x.wrapping_sub(a0) & mn;
            let xw = (cfg.window(a0).wrapping_add(cfg.window(a1))) & wmask;
            errors += ((xw & sign_w != 0) != neg) as u64;
        }
    }
    Ok(errors as f64 / (size as f64 * size as f64))
}

fn compare_error_core(
    mut draw: impl FnMut(&mut ChaCha20Rng) -> u64,
    cfg: TruncationConfig,
    trials: u64,
    seed: u64,
    bail_after: Option<u64>,
) -> (u64, u64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mn = cfg.mask_n();
    let mut errors = 0u64;
    for t in 0..trials {
        let x = draw(&mut rng) & mn;
        let r = draw(&mut rng) & mn;
        let exact = x > r;
        let approx = cfg.window(x) > cfg.window(r);
        errors += (exact != approx) as u64;
        if let Some(limit) = bail_after {
            if errors > limit {
                return (errors, t + 1);
            }
        }
    }
    (errors, trials)
}

/// Compare-model error for uniform `n`-bit operands: fresh `x, r` per trial,
/// compared exactly and through the window.
pub fn uniform_compare_error(cfg: TruncationConfig, trials: u64, seed: u64) -> f64 {
    let (errors, done) = compare_error_core(|rng| rng.next_u64(), cfg, trials, seed, None);
    errors as f64 / done as f64
}

/// Compare-model error with both operands drawn from a sample pool.
pub fn compare_error_from_samples(
    samples: &[u64],
    cfg: TruncationConfig,
    trials: u64,
    seed: u64,
) -> Result<f64, BitsError> {
    if samples.is_empty() {
        return Err(BitsError::NoSamples);
    }
    let len = samples.len() as u64;
    let (errors, done) = compare_error_core(
        |rng| samples[(rng.next_u64() % len) as usize],
        cfg,
        trials,
        seed,
        None,
    );
    Ok(errors as f64 / done as f64)
}

/// Outcome of a bit-width scan.
#[derive(Clone, Copy, Debug)]
pub struct Recommendation {
    pub config: TruncationConfig,
    /// Compare-model error measured for the returned window.
    pub measured_error: f64,
    /// Set when no nonzero truncation met the target and the exact
    /// (zero-truncation) window is returned instead.
    pub warning: bool,
}

/// Finds the most aggressive window whose compare-model error stays at or
/// under `target`, preferring dropped MSBs over dropped LSBs: the scan tries
/// `k_msb` descending and, within each, `k_lsb` descending, returning the
/// first window that passes. Deterministic for a fixed seed.
pub fn recommend_bits(
    samples: &[u64],
    n: u32,
    target: f64,
    trials: u64,
    seed: u64,
) -> Result<Recommendation, BitsError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(BitsError::BadTarget(target));
    }
    if samples.is_empty() {
        return Err(BitsError::NoSamples);
    }
    if n == 0 || n > 64 {
        return Err(BitsError::BadDomain(n));
    }
    let allow = (target * trials as f64).floor() as u64;
    let len = samples.len() as u64;
    for k_msb in (0..n).rev() {
        for k_lsb in (0..n - k_msb).rev() {
            if k_msb == 0 && k_lsb == 0 {
                // Nothing but the exact compare met the target.
                return Ok(Recommendation {
                    config: TruncationConfig::exact(n)?,
                    measured_error: 0.0,
                    warning: true,
                });
            }
            let cfg = TruncationConfig::new(n, k_msb, k_lsb)?;
            // Per-window seed: the scan stays deterministic while windows
            // draw independent trial streams.
            let cfg_seed = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(((k_msb as u64) << 32) | k_lsb as u64);
            let (errors, done) = compare_error_core(
                |rng| samples[(rng.next_u64() % len) as usize],
                cfg,
                trials,
                cfg_seed,
                Some(allow),
            );
            if done == trials && errors <= allow {
                return Ok(Recommendation {
                    config: cfg,
                    measured_error: errors as f64 / trials as f64,
                    warning: false,
                });
            }
        }
    }
    unreachable!("scan always reaches the exact window");
}

/// Share-model error grid for plotting: one `(k_msb, k_lsb, error)` row per
/// valid window.
pub fn error_surface(
    samples: &[u64],
    n: u32,
    k_msb_values: &[u32],
    k_lsb_values: &[u32],
    seed: u64,
) -> Result<Vec<(u32, u32, f64)>, BitsError> {
    let mut out = Vec::new();
    for &km in k_msb_values {
        for &kl in k_lsb_values {
            let Ok(cfg) = TruncationConfig::new(n, km, kl) else { continue };
            out.push((km, kl, empirical_error(samples, cfg, seed)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile;
    use crate::ring::FixedPointCodec;

    fn uniform_samples(n: u32, count: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..count).map(|_| rng.next_u64() & low_mask(n)).collect()
    }

    #[test]
    fn bound_formula_pins() {
        assert_eq!(uniform_error_bound(16, 5), (2.0f64).powi(-12));
        assert_eq!(uniform_error_bound(4, 3), 0.25);
        assert_eq!(uniform_error_bound(8, 0), (2.0f64).powi(-9));
    }

    #[test]
    fn config_validation() {
        assert!(TruncationConfig::new(0, 0, 0).is_err());
        assert!(TruncationConfig::new(65, 0, 0).is_err());
        assert!(TruncationConfig::new(8, 4, 4).is_err());
        assert_eq!(TruncationConfig::new(8, 4, 3).unwrap().width(), 1);
        let c = TruncationConfig::from_compare(&profile::preset("classification-16bit").unwrap().compare);
        assert_eq!((c.n, c.k_msb, c.k_lsb, c.width()), (64, 43, 5, 16));
    }

    #[test]
    fn exhaustive_share_error_is_analytic() {
        // Dropping k low bits: error = 2^-(n-k) * (1 - 2^-k), exactly.
        let e = exhaustive_error(TruncationConfig::new(4, 0, 3).unwrap()).unwrap();
        assert_eq!(e, 7.0 / 16.0);
        assert!(e <= 2.0 * uniform_error_bound(4, 3));

        let e = exhaustive_error(TruncationConfig::new(12, 0, 3).unwrap()).unwrap();
        let ratio = e / uniform_error_bound(12, 3);
        assert!((ratio - 1.75).abs() < 1e-12, "ratio {ratio}");
    }

    #[test]
    fn share_error_stays_within_twice_the_uniform_bound() {
        // The ratio is 2·(1 − 2^−k): exactly 1 at k = 1, approaching 2 from
        // below as more bits are ignored — never past twice the bound.
        for k in 1..=6 {
            let e = exhaustive_error(TruncationConfig::new(12, 0, k).unwrap()).unwrap();
            let ratio = e / uniform_error_bound(12, k);
            let expect = 2.0 * (1.0 - (0.5f64).powi(k as i32));
            assert!((ratio - expect).abs() < 1e-12, "k={k} ratio {ratio}");
            assert!((1.0..2.0).contains(&ratio), "k={k} ratio {ratio}");
        }
    }

    #[test]
    fn exhaustive_surface_is_monotone_in_both_axes() {
        let err = |km: u32, kl: u32| {
            exhaustive_error(TruncationConfig::new(8, km, kl).unwrap()).unwrap()
        };
        for km in 0..=3u32 {
            for kl in 0..=3u32 {
                assert!(err(km, kl + 1) >= err(km, kl), "k_lsb step at ({km},{kl})");
                assert!(err(km + 1, kl) >= err(km, kl), "k_msb step at ({km},{kl})");
            }
        }
    }

    #[test]
    fn monte_carlo_matches_exhaustive() {
        let cfg = TruncationConfig::new(12, 0, 3).unwrap();
        let exact = exhaustive_error(cfg).unwrap();
        let samples = uniform_samples(12, 1 << 18, 41);
        let mc = empirical_error(&samples, cfg, 42).unwrap();
        assert!((mc - exact).abs() < 4e-4, "mc {mc} vs exact {exact}");
    }

    #[test]
    fn bounded_values_tolerate_dropped_msbs_exactly() {
        // |x| < 2^20 in the 64-bit ring: the top 43 bits are redundant for
        // the sign, and with no dropped LSBs there is no carry — zero error.
        let codec = FixedPointCodec::new(16).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let samples: Vec<u64> = (0..(1 << 16))
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                codec.encode(32.0 * u - 16.0).unwrap()
            })
            .collect();
        let cfg = TruncationConfig::new(64, 43, 0).unwrap();
        assert_eq!(empirical_error(&samples, cfg, 1).unwrap(), 0.0);
    }

    #[test]
    fn empirical_curve_is_monotone_on_decaying_activations() {
        // Heavy mass near zero, like trained pre-activations.
        let codec = FixedPointCodec::new(16).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let samples: Vec<u64> = (0..(1 << 18))
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                let mag = u * u * u * 16.0;
                let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                codec.encode(sign * mag).unwrap()
            })
            .collect();
        let errs: Vec<f64> = (0..=8)
            .map(|k| {
                empirical_error(&samples, TruncationConfig::new(64, 40, k).unwrap(), 5).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] + 2e-4 >= w[0], "curve must not decrease: {errs:?}");
        }
        assert!(errs[8] > errs[0], "dropping 8 low bits must cost something");
    }

    #[test]
    fn uniform_compare_error_sits_near_the_bound() {
        let cfg = TruncationConfig::new(16, 0, 5).unwrap();
        let e = uniform_compare_error(cfg, 1 << 20, 2024);
        let bound = uniform_error_bound(16, 5);
        assert!(e >= 0.5 * bound && e <= 2.0 * bound, "error {e} vs bound {bound}");
    }

    #[test]
    fn recommendation_saturates_at_loose_targets() {
        let samples = uniform_samples(16, 1 << 12, 3);
        let rec = recommend_bits(&samples, 16, 0.999, 1 << 12, 0).unwrap();
        assert_eq!((rec.config.k_msb, rec.config.k_lsb), (15, 0));
        assert_eq!(rec.config.width(), 1);
        assert!(!rec.warning);
    }

    #[test]
    fn recommendation_recovers_five_dropped_lsbs_for_uniform_16_bit() {
        let samples = uniform_samples(16, 1 << 16, 3);
        let rec = recommend_bits(&samples, 16, 2.5e-4, 1 << 22, 17).unwrap();
        assert_eq!((rec.config.k_msb, rec.config.k_lsb), (0, 5));
        assert!(!rec.warning);
        assert!(rec.measured_error <= 2.5e-4);
    }

    #[test]
    fn recommendation_finds_redundant_msbs_of_bounded_data() {
        // Activations bounded by 16.0 at 16 fractional bits occupy 21 bits of
        // the ring; the scan should shed the 43 redundant high bits first,
        // then pay for low bits until the target stops it.
        let codec = FixedPointCodec::new(16).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let samples: Vec<u64> = (0..(1 << 16))
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                codec.encode(32.0 * u - 16.0).unwrap()
            })
            .collect();
        let rec = recommend_bits(&samples, 64, 2e-4, 1 << 22, 99).unwrap();
        assert_eq!((rec.config.k_msb, rec.config.k_lsb), (43, 9));
        assert!(!rec.warning);
    }

    #[test]
    fn unreachable_target_returns_exact_window_with_warning() {
        let samples = uniform_samples(8, 1 << 12, 5);
        let rec = recommend_bits(&samples, 8, 1e-9, 1 << 16, 1).unwrap();
        assert_eq!((rec.config.k_msb, rec.config.k_lsb), (0, 0));
        assert!(rec.warning);

        assert!(matches!(
            recommend_bits(&samples, 8, 0.0, 1, 0),
            Err(BitsError::BadTarget(t)) if t == 0.0
        ));
        assert!(matches!(recommend_bits(&[], 8, 0.5, 1, 0), Err(BitsError::NoSamples)));
    }

    #[test]
    fn surface_skips_invalid_windows() {
        let samples = uniform_samples(8, 1 << 10, 6);
        let rows = error_surface(&samples, 8, &[0, 4], &[0, 3, 7], 0).unwrap();
        // (4,7) overflows the domain and is skipped; (0,7) keeps one bit.
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|&(km, kl, _)| km + kl < 8));
    }
}
