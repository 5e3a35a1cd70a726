//! Log-distance path-loss model.
//!
//! `P = A - 10 n log10(d)`, where `A` is the RSSI one meter from the access
//! point and `n` the environment exponent. Shadowing is modelled as zero-mean
//! Gaussian noise in the dB domain.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Ranges below this are clamped before evaluating the model.
pub const MIN_DISTANCE_M: f64 = 0.01;

/// Typical indoor range for `A`; values outside only produce a warning.
pub const TYPICAL_A_REF_DBM: (f64, f64) = (-80.0, -20.0);

/// Default shadowing standard deviation (dB).
pub const DEFAULT_SIGMA_DB: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// RSSI at 1 m, dBm.
    pub a_ref: f64,
    /// Environmental path-loss exponent.
    pub n_env: f64,
}

impl Default for PathLossParams {
    /// Indoor 2.4 GHz defaults used by the builtin scenarios.
    fn default() -> Self {
        Self {
            a_ref: -40.0,
            n_env: 3.0,
        }
    }
}

impl PathLossParams {
    pub fn new(a_ref: f64, n_env: f64) -> Result<Self> {
        let p = Self { a_ref, n_env };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a_ref.is_finite() {
            return Err(Error::InvalidParams(format!(
                "a_ref must be finite, got {}",
                self.a_ref
            )));
        }
        if !(self.n_env.is_finite() && self.n_env > 0.0) {
            return Err(Error::InvalidParams(format!(
                "n_env must be positive, got {}",
                self.n_env
            )));
        }
        Ok(())
    }

    /// Non-fatal observations about the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let (lo, hi) = TYPICAL_A_REF_DBM;
        let mut w = Vec::new();
        if self.a_ref < lo || self.a_ref > hi {
            w.push(format!(
                "a_ref {} dBm is outside the typical range [{lo}, {hi}]",
                self.a_ref
            ));
        }
        w
    }

    /// Noiseless RSSI at distance `d`.
    pub fn rssi_at(&self, d: f64) -> Result<f64> {
        self.validate()?;
        let d = clamp_distance(d)?;
        Ok(self.a_ref - 10.0 * self.n_env * d.log10())
    }
}

fn clamp_distance(d: f64) -> Result<f64> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::Geometry(format!(
            "distance must be positive and finite, got {d}"
        )));
    }
    Ok(d.max(MIN_DISTANCE_M))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_db: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_db: DEFAULT_SIGMA_DB,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            sigma_db: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_db.is_finite() && self.sigma_db >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma_db must be non-negative, got {}",
                self.sigma_db
            )));
        }
        Ok(())
    }
}

/// Seeded source of dB-domain shadowing noise.
#[derive(Debug, Clone)]
pub struct Shadowing {
    normal: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Shadowing {
    pub fn new(noise: NoiseConfig) -> Result<Self> {
        Self::on_stream(noise, Stream::Noise)
    }

    /// Noise for synthetic calibration samples, independent of scenario noise.
    pub fn calibration(noise: NoiseConfig) -> Result<Self> {
        Self::on_stream(noise, Stream::Calibration)
    }

    fn on_stream(noise: NoiseConfig, stream: Stream) -> Result<Self> {
        noise.validate()?;
        let normal = if noise.sigma_db > 0.0 {
            Some(Normal::new(0.0, noise.sigma_db).map_err(|e| Error::InvalidParams(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            normal,
            rng: rng::stream(noise.seed, stream),
        })
    }

    /// Next noise term. Always exactly zero (and consumes nothing) when sigma is 0.
    pub fn sample(&mut self) -> f64 {
        match &self.normal {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// RSSI observed at distance `d`, including one shadowing draw.
pub fn distance_to_rssi(d: f64, params: &PathLossParams, noise: &mut Shadowing) -> Result<f64> {
    Ok(params.rssi_at(d)? + noise.sample())
}

/// Inverts the model: `d = 10^((A - P) / (10 n))`.
pub fn rssi_to_distance(p: f64, params: &PathLossParams) -> Result<f64> {
    params.validate()?;
    if !p.is_finite() {
        return Err(Error::InvalidParams(format!("rssi must be finite, got {p}")));
    }
    Ok(10f64.powf((params.a_ref - p) / (10.0 * params.n_env)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    /// Seconds since the start of the recording.
    pub timestamp: f64,
    pub ap_id: u8,
    /// dBm.
    pub rssi: f64,
}

impl RssiSample {
    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sample timestamp must be >= 0, got {}",
                self.timestamp
            )));
        }
        if !(1..=3).contains(&self.ap_id) {
            return Err(Error::InvalidParams(format!("ap_id {} not in 1..=3", self.ap_id)));
        }
        if !self.rssi.is_finite() {
            return Err(Error::InvalidParams("rssi must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Mean,
    /// Robust to the occasional multipath spike.
    Median,
}

impl Estimator {
    fn estimate(self, samples: &[RssiSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Calibration("no samples".into()));
        }
        for s in samples {
            s.validate()?;
        }
        Ok(match self {
            Estimator::Mean => samples.iter().map(|s| s.rssi).sum::<f64>() / samples.len() as f64,
            Estimator::Median => {
                let mut v: Vec<f64> = samples.iter().map(|s| s.rssi).collect();
                v.sort_by(f64::total_cmp);
                let m = v.len() / 2;
                if v.len().is_multiple_of(2) {
                    (v[m - 1] + v[m]) / 2.0
                } else {
                    v[m]
                }
            }
        })
    }
}

/// Estimates `A` from samples recorded 1 m from the access point.
pub fn calibrate_a(samples: &[RssiSample], estimator: Estimator) -> Result<f64> {
    estimator.estimate(samples)
}

/// Estimates `n` from samples recorded at `d_known` meters, given `A`.
pub fn calibrate_n(
    samples: &[RssiSample],
    d_known: f64,
    a_ref: f64,
    estimator: Estimator,
) -> Result<f64> {
    if !d_known.is_finite() || d_known <= 0.0 || d_known == 1.0 {
        return Err(Error::UnidentifiableExponent(d_known));
    }
    let p = estimator.estimate(samples)?;
    let n = (a_ref - p) / (10.0 * d_known.log10());
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidParams(format!(
            "calibrated exponent n = {n} is not positive (mean RSSI {p} dBm at {d_known} m, A = {a_ref} dBm)"
        )));
    }
    Ok(n)
}

/// Both calibration steps in sequence.
pub fn calibrate(
    at_one_meter: &[RssiSample],
    at_known: &[RssiSample],
    d_known: f64,
    estimator: Estimator,
) -> Result<PathLossParams> {
    let a_ref = calibrate_a(at_one_meter, estimator)?;
    let n_env = calibrate_n(at_known, d_known, a_ref, estimator)?;
    PathLossParams::new(a_ref, n_env)
}

/// Persisted per-access-point calibration result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApCalibration {
    pub ap_id: u8,
    pub a_ref: f64,
    pub n_env: f64,
}

impl ApCalibration {
    pub fn params(&self) -> Result<PathLossParams> {
        PathLossParams::new(self.a_ref, self.n_env)
    }
}

/// Synthesizes `count` samples at distance `d`, one every `period` seconds.
pub fn synth_samples(
    ap_id: u8,
    d: f64,
    params: &PathLossParams,
    count: usize,
    period: f64,
    noise: &mut Shadowing,
) -> Result<Vec<RssiSample>> {
    (0..count)
        .map(|i| {
            Ok(RssiSample {
                timestamp: i as f64 * period,
                ap_id,
                rssi: distance_to_rssi(d, params, noise)?,
            })
        })
        .collect()
}

/// Reads `timestamp,ap_id,rssi` CSV.
pub fn read_samples<R: Read>(reader: R) -> Result<Vec<RssiSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<RssiSample>().enumerate() {
        let s = rec?;
        s.validate().map_err(|e| Error::Data {
            row: i + 1,
            reason: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_samples<W: Write>(writer: W, samples: &[RssiSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, n: f64) -> PathLossParams {
        PathLossParams::new(a, n).unwrap()
    }

    fn quiet() -> Shadowing {
        Shadowing::new(NoiseConfig::noiseless()).unwrap()
    }

    fn flat(v: &[f64]) -> Vec<RssiSample> {
        v.iter()
            .enumerate()
            .map(|(i, &rssi)| RssiSample {
                timestamp: i as f64 * 0.1,
                ap_id: 1,
                rssi,
            })
            .collect()
    }

    #[test]
    fn forward_examples() {
        let params = p(-40.0, 2.0);
        let mut q = quiet();
        assert_eq!(distance_to_rssi(1.0, &params, &mut q).unwrap(), -40.0);
        assert_eq!(distance_to_rssi(10.0, &params, &mut q).unwrap(), -60.0);
        assert_eq!(distance_to_rssi(100.0, &params, &mut q).unwrap(), -80.0);
    }

    #[test]
    fn inverse_examples() {
        let params = p(-40.0, 2.0);
        assert_eq!(rssi_to_distance(-40.0, &params).unwrap(), 1.0);
        assert!((rssi_to_distance(-60.0, &params).unwrap() - 10.0).abs() < 1e-12);
        assert!((rssi_to_distance(-50.0, &params).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert!((rssi_to_distance(-50.0, &params).unwrap() - 3.1623).abs() < 1e-4);
    }

    #[test]
    fn clamp_and_rejects() {
        let params = p(-40.0, 2.0);
        let mut q = quiet();
        let at_min = distance_to_rssi(MIN_DISTANCE_M, &params, &mut q).unwrap();
        assert_eq!(distance_to_rssi(1e-6, &params, &mut q).unwrap(), at_min);
        assert!(distance_to_rssi(0.0, &params, &mut q).is_err());
        assert!(distance_to_rssi(-1.0, &params, &mut q).is_err());
        assert!(distance_to_rssi(f64::NAN, &params, &mut q).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(PathLossParams::new(-40.0, 0.0).is_err());
        assert!(PathLossParams::new(-40.0, -2.0).is_err());
        assert!(PathLossParams::new(f64::INFINITY, 2.0).is_err());
        let bad = PathLossParams {
            a_ref: -40.0,
            n_env: 0.0,
        };
        assert!(rssi_to_distance(-50.0, &bad).is_err());
        assert!(p(-90.0, 2.0).warnings().len() == 1);
        assert!(p(-40.0, 2.0).warnings().is_empty());
    }

    #[test]
    fn calibrate_a_examples() {
        assert_eq!(calibrate_a(&flat(&[-40.0; 5]), Estimator::Mean).unwrap(), -40.0);
        assert_eq!(calibrate_a(&flat(&[-39.0, -41.0]), Estimator::Mean).unwrap(), -40.0);
        assert!(matches!(
            calibrate_a(&[], Estimator::Mean),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn calibrate_a_noisy() {
        let truth = p(-45.0, 2.0);
        let mut noise = Shadowing::new(NoiseConfig { sigma_db: 2.0, seed: 11 }).unwrap();
        let s = synth_samples(1, 1.0, &truth, 500, 0.1, &mut noise).unwrap();
        let a = calibrate_a(&s, Estimator::Mean).unwrap();
        assert!((a + 45.0).abs() <= 0.3, "a = {a}");
        let a_med = calibrate_a(&s, Estimator::Median).unwrap();
        assert!((a_med + 45.0).abs() <= 0.4, "median a = {a_med}");
    }

    #[test]
    fn calibrate_n_examples() {
        let n = calibrate_n(&flat(&[-60.0]), 10.0, -40.0, Estimator::Mean).unwrap();
        assert!((n - 2.0).abs() < 1e-12);
        // zero numerator -> n = 0 -> rejected
        assert!(matches!(
            calibrate_n(&flat(&[-40.0]), 10.0, -40.0, Estimator::Mean),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            calibrate_n(&flat(&[-60.0]), 1.0, -40.0, Estimator::Mean),
            Err(Error::UnidentifiableExponent(_))
        ));
        assert!(matches!(
            calibrate_n(&flat(&[-60.0]), 0.0, -40.0, Estimator::Mean),
            Err(Error::UnidentifiableExponent(_))
        ));
        assert!(matches!(
            calibrate_n(&[], 5.0, -40.0, Estimator::Mean),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn calibrate_n_noisy() {
        let truth = p(-40.0, 2.5);
        let mut noise = Shadowing::new(NoiseConfig { sigma_db: 2.0, seed: 3 }).unwrap();
        let s = synth_samples(2, 5.0, &truth, 500, 0.1, &mut noise).unwrap();
        let n = calibrate_n(&s, 5.0, -40.0, Estimator::Mean).unwrap();
        assert!((n - 2.5).abs() <= 0.05, "n = {n}");
    }

    #[test]
    fn noiseless_calibration_recovers_params() {
        let truth = p(-47.3, 2.7);
        let mut q = quiet();
        let one = synth_samples(1, 1.0, &truth, 50, 0.1, &mut q).unwrap();
        let far = synth_samples(1, 4.0, &truth, 50, 0.1, &mut q).unwrap();
        let got = calibrate(&one, &far, 4.0, Estimator::Mean).unwrap();
        assert!((got.a_ref - truth.a_ref).abs() < 1e-12);
        assert!((got.n_env - truth.n_env).abs() < 1e-12);
    }

    #[test]
    fn noise_stream_is_deterministic() {
        let cfg = NoiseConfig { sigma_db: 2.0, seed: 99 };
        let mut a = Shadowing::new(cfg).unwrap();
        let mut b = Shadowing::new(cfg).unwrap();
        for _ in 0..100 {
            assert_eq!(a.sample().to_bits(), b.sample().to_bits());
        }
        assert!(Shadowing::new(NoiseConfig { sigma_db: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let s = flat(&[-41.5, -39.25]);
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("timestamp,ap_id,rssi\n"));
        assert_eq!(read_samples(buf.as_slice()).unwrap(), s);
        assert!(read_samples("timestamp,ap_id,rssi\n0,7,-40\n".as_bytes()).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(a in -70.0f64..-30.0, n in 1.5f64..4.0, d in 0.011f64..100.0) {
            let params = PathLossParams::new(a, n).unwrap();
            let mut q = Shadowing::new(NoiseConfig::noiseless()).unwrap();
            let back = rssi_to_distance(distance_to_rssi(d, &params, &mut q).unwrap(), &params).unwrap();
            prop_assert!(((back - d) / d).abs() < 1e-9);
        }

        #[test]
        fn monotone(a in -70.0f64..-30.0, n in 1.5f64..4.0, d in 0.011f64..50.0, step in 1e-3f64..10.0) {
            let params = PathLossParams::new(a, n).unwrap();
            prop_assert!(params.rssi_at(d + step).unwrap() < params.rssi_at(d).unwrap());
            let p0 = params.rssi_at(d).unwrap();
            prop_assert!(rssi_to_distance(p0 - step, &params).unwrap() > rssi_to_distance(p0, &params).unwrap());
        }
    }
}
