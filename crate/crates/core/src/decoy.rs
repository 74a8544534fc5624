//! Two-decoy single-photon bounds and the asymptotic secret fraction.
//!
//! Given gains `Q_x` and error gains `E_x Q_x` for the signal (mu) and two
//! decoy intensities (nu1 > nu2 >= 0), the vacuum yield, single-photon yield
//! and single-photon error rate are bounded as
//!
//! ```text
//! Y0_L  = max{ (nu1 E2 Q2 e^nu2 - nu2 E1 Q1 e^nu1) / (nu1 - nu2), 0 }
//! Y1_L  = mu / (mu (nu1 - nu2) - nu1^2 + nu2^2)
//!         * [ Q1 e^nu1 - Q2 e^nu2 - (nu1^2 - nu2^2) / mu^2 * (Qmu e^mu - Y0) ]
//! e1_U  = (E1 Q1 e^nu1 - E2 Q2 e^nu2) / ((nu1 - nu2) Y1_L)
//! R     = q { -Qmu f H2(Emu) + Y1_L mu e^-mu (1 - H2(e1_U)) }
//! ```
//!
//! Statistical fluctuations of finite tallies are not propagated; the bounds
//! are evaluated on point estimates.

use crate::channel::{IntensityClass, PulseConfig};
use crate::error::{Error, Result};
use crate::sifting::DecoyTally;

pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", "must lie in [0, 1]"));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// Entropy of an error rate clamped into [0, 0.5].
fn h2_clamped(p: f64) -> f64 {
    binary_entropy(p.clamp(0.0, 0.5)).expect("clamped into range")
}

/// Gains and error gains per intensity class, indexed by [`IntensityClass`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub gain: [f64; 3],
    pub error_gain: [f64; 3],
}

impl Gains {
    pub fn q(&self, c: IntensityClass) -> f64 {
        self.gain[c.index()]
    }

    pub fn eq(&self, c: IntensityClass) -> f64 {
        self.error_gain[c.index()]
    }

    pub fn qber(&self, c: IntensityClass) -> f64 {
        let q = self.q(c);
        if q > 0.0 {
            self.eq(c) / q
        } else {
            0.0
        }
    }
}

fn check_intensities(pulses: &PulseConfig) -> Result<()> {
    let (mu, nu1, nu2) = (pulses.mu, pulses.nu1, pulses.nu2);
    if !(nu2 >= 0.0 && nu2 < nu1 && nu1 + nu2 < mu) {
        return Err(Error::InvalidDecoyConfig(format!(
            "need 0 <= nu2 < nu1 and nu1 + nu2 < mu (mu = {mu}, nu1 = {nu1}, nu2 = {nu2})"
        )));
    }
    Ok(())
}

/// Vacuum-yield lower bound from the decoy error gains.
pub fn y0_lower_bound(gains: &Gains, pulses: &PulseConfig) -> Result<f64> {
    check_intensities(pulses)?;
    let (nu1, nu2) = (pulses.nu1, pulses.nu2);
    let v = (nu1 * gains.eq(IntensityClass::Decoy2) * nu2.exp()
        - nu2 * gains.eq(IntensityClass::Decoy1) * nu1.exp())
        / (nu1 - nu2);
    Ok(v.max(0.0))
}

pub fn y1_lower_bound(gains: &Gains, pulses: &PulseConfig, y0: f64) -> Result<f64> {
    check_intensities(pulses)?;
    let (mu, nu1, nu2) = (pulses.mu, pulses.nu1, pulses.nu2);
    let q_mu = gains.q(IntensityClass::Signal);
    let q1 = gains.q(IntensityClass::Decoy1);
    let q2 = gains.q(IntensityClass::Decoy2);
    let d2 = nu1 * nu1 - nu2 * nu2;
    let y1 = mu / (mu * (nu1 - nu2) - d2)
        * (q1 * nu1.exp() - q2 * nu2.exp() - d2 / (mu * mu) * (q_mu * mu.exp() - y0));
    Ok(y1.max(0.0))
}

/// Single-photon error upper bound, clamped into [0, 0.5]. A zero yield
/// bound leaves the error unbounded and is reported as an error.
pub fn e1_upper_bound(gains: &Gains, pulses: &PulseConfig, y1_l: f64) -> Result<f64> {
    check_intensities(pulses)?;
    if !(y1_l > 0.0) {
        return Err(Error::UnboundedError);
    }
    let (nu1, nu2) = (pulses.nu1, pulses.nu2);
    let num = gains.eq(IntensityClass::Decoy1) * nu1.exp() - gains.eq(IntensityClass::Decoy2) * nu2.exp();
    Ok((num / ((nu1 - nu2) * y1_l)).clamp(0.0, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateParams {
    pub f_ec: f64,
    pub q_sift: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        KeyRateParams { f_ec: 1.2, q_sift: 0.5 }
    }
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_ec >= 1.0) {
            return Err(Error::param("f_ec", "must be at least 1"));
        }
        if !(self.q_sift > 0.0 && self.q_sift <= 1.0) {
            return Err(Error::param("q_sift", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// How the vacuum yield entering the single-photon bound is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VacuumYield {
    /// Lower bound from the decoy data.
    #[default]
    DecoyBound,
    /// Measured or assumed value.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimates {
    pub q_mu: f64,
    pub q_nu1: f64,
    pub q_nu2: f64,
    pub e_mu: f64,
    pub e_nu1: f64,
    pub e_nu2: f64,
    pub y0_l: f64,
    pub y1_l: f64,
    /// 0.5 when the single-photon yield bound vanished.
    pub e1_u: f64,
    pub q1_l: f64,
    pub mu: f64,
}

/// Chains the bounds for a set of gains.
pub fn estimate(gains: &Gains, pulses: &PulseConfig, vacuum: VacuumYield) -> Result<DecoyEstimates> {
    let y0_l = match vacuum {
        VacuumYield::DecoyBound => y0_lower_bound(gains, pulses)?,
        VacuumYield::Fixed(y) => {
            check_intensities(pulses)?;
            y
        }
    };
    let y1_l = y1_lower_bound(gains, pulses, y0_l)?;
    let e1_u = match e1_upper_bound(gains, pulses, y1_l) {
        Ok(e) => e,
        Err(Error::UnboundedError) => 0.5,
        Err(e) => return Err(e),
    };
    Ok(DecoyEstimates {
        q_mu: gains.q(IntensityClass::Signal),
        q_nu1: gains.q(IntensityClass::Decoy1),
        q_nu2: gains.q(IntensityClass::Decoy2),
        e_mu: gains.qber(IntensityClass::Signal),
        e_nu1: gains.qber(IntensityClass::Decoy1),
        e_nu2: gains.qber(IntensityClass::Decoy2),
        y0_l,
        y1_l,
        e1_u,
        q1_l: y1_l * pulses.mu * (-pulses.mu).exp(),
        mu: pulses.mu,
    })
}

/// Secret key per pulse, clamped at zero.
pub fn secret_fraction(estimates: &DecoyEstimates, e_mu: f64, q_mu: f64, params: &KeyRateParams) -> f64 {
    let r = params.q_sift
        * (-q_mu * params.f_ec * h2_clamped(e_mu) + estimates.q1_l * (1.0 - h2_clamped(estimates.e1_u)));
    r.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TallyAnalysis {
    pub estimates: DecoyEstimates,
    /// Secret key per signal pulse.
    pub rate: f64,
    /// Secret bits per corrected signal bit, `(Q1_L / Q_mu)(1 - H2(e1_U)) - f H2(E_mu)`.
    pub corrected_fraction: f64,
}

/// Empirical gains: matched-basis detections over `q_sift` times the pulses sent.
pub fn tally_gains(tally: &DecoyTally, q_sift: f64) -> Result<Gains> {
    let mut gains = Gains { gain: [0.0; 3], error_gain: [0.0; 3] };
    for c in IntensityClass::ALL {
        let i = c.index();
        if tally.sent[i] == 0 {
            return Err(Error::InsufficientData(c.name()));
        }
        let sent = tally.sent[i] as f64;
        gains.gain[i] = tally.detected[i] as f64 / (q_sift * sent);
        gains.error_gain[i] = tally.errors[i] as f64 / (q_sift * sent);
    }
    Ok(gains)
}

pub fn analyze_tally(
    tally: &DecoyTally,
    pulses: &PulseConfig,
    params: &KeyRateParams,
    vacuum: VacuumYield,
) -> Result<TallyAnalysis> {
    params.validate()?;
    let gains = tally_gains(tally, params.q_sift)?;
    let estimates = estimate(&gains, pulses, vacuum)?;
    let rate = secret_fraction(&estimates, estimates.e_mu, estimates.q_mu, params);
    let corrected_fraction = if estimates.q_mu > 0.0 {
        estimates.q1_l / estimates.q_mu * (1.0 - h2_clamped(estimates.e1_u))
            - params.f_ec * h2_clamped(estimates.e_mu)
    } else {
        0.0
    };
    Ok(TallyAnalysis { estimates, rate, corrected_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{error_gain_for_eta, gain_for_eta};

    fn model_gains(eta: f64, y0: f64, e_det: f64, pulses: &PulseConfig) -> Gains {
        let mut g = Gains { gain: [0.0; 3], error_gain: [0.0; 3] };
        for c in IntensityClass::ALL {
            let x = pulses.intensity(c);
            g.gain[c.index()] = gain_for_eta(eta, y0, x);
            g.error_gain[c.index()] = error_gain_for_eta(eta, y0, e_det, x);
        }
        g
    }

    fn worked() -> PulseConfig {
        PulseConfig { mu: 0.5, nu1: 0.1, nu2: 0.005, ..PulseConfig::default() }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.035).unwrap() - 0.218_877_726_539).abs() < 1e-6);
        assert!(binary_entropy(1.5).is_err());
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!((binary_entropy(p).unwrap() - binary_entropy(1.0 - p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn worked_example_bounds() {
        let pulses = worked();
        let g = model_gains(0.01, 0.0, 0.01, &pulses);
        let est = estimate(&g, &pulses, VacuumYield::DecoyBound).unwrap();
        assert_eq!(est.y0_l, 0.0);
        assert!((est.y1_l - 9.6771510247622832e-3).abs() < 1e-6);
        assert!(est.y1_l <= 0.01);
        assert!((est.e1_u - 0.011468894689416279).abs() < 1e-5);
        assert!(est.e1_u >= 0.01);
        let r = secret_fraction(&est, est.e_mu, est.q_mu, &KeyRateParams::default());
        assert!((r - 1.0929753784969818e-3).abs() < 2e-5);
    }

    #[test]
    fn dead_channel_and_bad_intensities() {
        let pulses = worked();
        let g = Gains { gain: [0.0; 3], error_gain: [0.0; 3] };
        assert_eq!(y1_lower_bound(&g, &pulses, 0.0).unwrap(), 0.0);
        assert!(matches!(e1_upper_bound(&g, &pulses, 0.0), Err(Error::UnboundedError)));
        let bad = PulseConfig { nu1: 0.45, nu2: 0.1, ..pulses };
        assert!(matches!(y1_lower_bound(&g, &bad, 0.0), Err(Error::InvalidDecoyConfig(_))));
    }

    #[test]
    fn fixed_ratio_decoys_always_valid() {
        for i in 1..100 {
            let p = PulseConfig::with_fixed_ratios(i as f64 * 0.2);
            assert!(check_intensities(&p).is_ok());
        }
    }

    #[test]
    fn e1_bound_clamps() {
        let pulses = worked();
        let mut g = model_gains(0.01, 0.0, 0.0, &pulses);
        assert_eq!(e1_upper_bound(&g, &pulses, 1e-3).unwrap(), 0.0);
        // decoy-2 errors exceeding decoy-1 errors, as from sampling noise
        g.error_gain[IntensityClass::Decoy2.index()] = 1e-3;
        assert_eq!(e1_upper_bound(&g, &pulses, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn rate_reductions() {
        let pulses = worked();
        let params = KeyRateParams::default();
        let g = model_gains(0.01, 0.0, 0.01, &pulses);
        let mut est = estimate(&g, &pulses, VacuumYield::DecoyBound).unwrap();
        est.e1_u = 0.5;
        assert_eq!(secret_fraction(&est, 0.01, est.q_mu, &params), 0.0);

        let g = model_gains(0.01, 0.0, 0.0, &pulses);
        let est = estimate(&g, &pulses, VacuumYield::DecoyBound).unwrap();
        let p1 = KeyRateParams { f_ec: 1.0, q_sift: 0.5 };
        let r = secret_fraction(&est, 0.0, est.q_mu, &p1);
        assert!(r > 0.0);
        assert!((r - 0.5 * est.y1_l * 0.5 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rate_monotonicity() {
        let pulses = worked();
        let params = KeyRateParams::default();
        let g = model_gains(0.01, 1e-5, 0.02, &pulses);
        let base = estimate(&g, &pulses, VacuumYield::DecoyBound).unwrap();
        let r0 = secret_fraction(&base, base.e_mu, base.q_mu, &params);
        let worse_e1 = DecoyEstimates { e1_u: base.e1_u + 0.01, ..base };
        assert!(secret_fraction(&worse_e1, base.e_mu, base.q_mu, &params) <= r0);
        assert!(secret_fraction(&base, base.e_mu + 0.01, base.q_mu, &params) <= r0);
        let better_y1 = DecoyEstimates { q1_l: base.q1_l * 1.1, ..base };
        assert!(secret_fraction(&better_y1, base.e_mu, base.q_mu, &params) >= r0);
    }

    #[test]
    fn tally_analysis_errors_and_noiseless() {
        let pulses = worked();
        let mut t = DecoyTally { sent: [1000, 1000, 0], detected: [10, 5, 0], errors: [0; 3] };
        let err = analyze_tally(&t, &pulses, &KeyRateParams::default(), VacuumYield::DecoyBound);
        assert!(matches!(err, Err(Error::InsufficientData("nu2"))));

        // exact noiseless counts: detections follow the model gains
        let sent = [1_000_000_000u64, 100_000_000, 100_000_000];
        t.sent = sent;
        for c in IntensityClass::ALL {
            let q = gain_for_eta(0.01, 0.0, pulses.intensity(c));
            t.detected[c.index()] = (0.5 * q * sent[c.index()] as f64).round() as u64;
        }
        let a = analyze_tally(&t, &pulses, &KeyRateParams::default(), VacuumYield::DecoyBound).unwrap();
        assert_eq!(a.estimates.e1_u, 0.0);
        assert!(a.rate > 0.0);
    }
}
