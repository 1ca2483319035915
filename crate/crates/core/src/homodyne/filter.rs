//! Butterworth band-pass design (analog prototype → band-pass transform →
//! bilinear transform with prewarping) realized as cascaded biquads, plus
//! zero-phase forward-backward filtering.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        // transposed direct form II
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + s1;
            s1 = b1 * input - a1 * y + s2;
            s2 = b2 * input - a2 * y;
            *v = y;
        }
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Largest pole radius.
    pub fn pole_radius(&self) -> f64 {
        let [_, a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) * 0.5;
        let p2 = (-a1 - disc) * 0.5;
        p1.norm().max(p2.norm())
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    sample_rate_hz: f64,
}

impl SosFilter {
    /// Order-`order` Butterworth prototype mapped onto the band
    /// `[low_hz, high_hz]`. The result has `order` biquads (`2·order` poles)
    /// and is scaled to unit gain at `unit_gain_hz`.
    pub fn butterworth_bandpass(
        order: usize,
        low_hz: f64,
        high_hz: f64,
        sample_rate_hz: f64,
        unit_gain_hz: f64,
    ) -> Result<Self> {
        let nyquist = 0.5 * sample_rate_hz;
        if order == 0 || !(0.0 < low_hz && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::Settings(format!(
                "band-pass [{low_hz}, {high_hz}] Hz, order {order} at {sample_rate_hz} Hz"
            )));
        }
        let fs2 = 2.0 * sample_rate_hz;
        let w_lo = fs2 * (PI * low_hz / sample_rate_hz).tan();
        let w_hi = fs2 * (PI * high_hz / sample_rate_hz).tan();
        let w0_sq = w_lo * w_hi;
        let bw = w_hi - w_lo;

        let mut upper = Vec::with_capacity(order);
        let mut real = Vec::new();
        for k in 1..=order {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let pb = proto * bw;
            let disc = (pb * pb - 4.0 * w0_sq).sqrt();
            for s in [(pb + disc) * 0.5, (pb - disc) * 0.5] {
                let z = (fs2 + s) / (fs2 - s);
                if z.im > 1e-14 {
                    upper.push(z);
                } else if z.im.abs() <= 1e-14 {
                    real.push(z.re);
                }
            }
        }
        let mut sections: Vec<Biquad> = upper
            .iter()
            .map(|z| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * z.re, z.norm_sqr()],
            })
            .collect();
        real.sort_by(|a, b| a.total_cmp(b));
        for pair in real.chunks(2) {
            let (p, q) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -(p + q), p * q],
            });
        }
        if sections.len() != order {
            return Err(Error::Settings(format!(
                "pole pairing produced {} sections for order {order}",
                sections.len()
            )));
        }
        let mut filter = Self {
            sections,
            sample_rate_hz,
        };
        for (i, s) in filter.sections.iter().enumerate() {
            let radius = s.pole_radius();
            if !(radius < 1.0) {
                return Err(Error::UnstableFilter {
                    section: i,
                    radius,
                    a: s.a,
                });
            }
        }
        let gain = filter.response(unit_gain_hz).norm();
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::UnstableFilter {
                section: 0,
                radius: f64::NAN,
                a: filter.sections[0].a,
            });
        }
        for b in filter.sections[0].b.iter_mut() {
            *b /= gain;
        }
        Ok(filter)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Causal filtering in place, zero initial state.
    pub fn apply(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Zero-phase filtering: forward pass, then a pass over the reversed
    /// signal. The effective response is `|H(f)|²`.
    pub fn filtfilt(&self, x: &mut [f64]) {
        self.apply(x);
        x.reverse();
        self.apply(x);
        x.reverse();
    }

    /// Complex response of one causal pass at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate_hz);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Power gain of [`SosFilter::filtfilt`] at `freq_hz`, in dB.
    pub fn zero_phase_gain_db(&self, freq_hz: f64) -> f64 {
        // |H|² in amplitude, i.e. 20 log10 |H|² = 40 log10 |H|
        40.0 * self.response(freq_hz).norm().log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_filter() -> SosFilter {
        SosFilter::butterworth_bandpass(4, 1.5e6, 3.5e6, 1e8, 2.5e6).unwrap()
    }

    /// Amplitude of a long steady tone after zero-phase filtering, measured
    /// in the middle of the record by least squares against sin/cos.
    fn tone_gain_db(filter: &SosFilter, f: f64, fs: f64) -> f64 {
        let n = 40_000;
        let mut x: Vec<f64> = (0..n)
            .map(|k| (2.0 * PI * f * k as f64 / fs).sin())
            .collect();
        filter.filtfilt(&mut x);
        let (mut ss, mut sc) = (0.0, 0.0);
        let window = n / 4..3 * n / 4;
        let m = window.len() as f64;
        for k in window {
            let ph = 2.0 * PI * f * k as f64 / fs;
            ss += x[k] * ph.sin();
            sc += x[k] * ph.cos();
        }
        let amp = 2.0 * (ss * ss + sc * sc).sqrt() / m;
        20.0 * amp.log10()
    }

    #[test]
    fn section_count_and_stability() {
        for order in 1..=8 {
            let f = SosFilter::butterworth_bandpass(order, 1.5e6, 3.5e6, 1e8, 2.5e6).unwrap();
            assert_eq!(f.sections().len(), order);
            assert!(f.sections().iter().all(|s| s.pole_radius() < 1.0));
        }
    }

    #[test]
    fn centre_tone_passes() {
        let f = default_filter();
        assert!(f.zero_phase_gain_db(2.5e6).abs() < 1e-9);
        let measured = tone_gain_db(&f, 2.5e6, 1e8);
        assert!(measured.abs() <= 0.1, "{measured} dB");
        // maximally flat: whole passband interior within 0.1 dB
        assert!(f.zero_phase_gain_db(2.2e6).abs() < 0.1);
    }

    #[test]
    fn far_tone_rejected() {
        let f = default_filter();
        assert!(f.zero_phase_gain_db(25e6) <= -40.0);
        let measured = tone_gain_db(&f, 25e6, 1e8);
        assert!(measured <= -40.0, "{measured} dB");
        assert!(f.zero_phase_gain_db(1e3) <= -40.0);
    }

    #[test]
    fn band_edges_are_half_power_per_pass() {
        let f = default_filter();
        let lo = 20.0 * f.response(1.5e6).norm().log10();
        let hi = 20.0 * f.response(3.5e6).norm().log10();
        assert!((lo + 3.0103).abs() < 0.1, "{lo}");
        assert!((hi + 3.0103).abs() < 0.1, "{hi}");
    }

    #[test]
    fn narrowband_at_high_rate() {
        let f = SosFilter::butterworth_bandpass(4, 1.5e6, 3.5e6, 2e10, 2.5e6).unwrap();
        assert!(f.sections().iter().all(|s| s.pole_radius() < 1.0));
        assert!(f.zero_phase_gain_db(2.5e6).abs() < 1e-6);
        assert!(f.zero_phase_gain_db(25e6) <= -40.0);
    }

    #[test]
    fn invalid_band_rejected() {
        assert!(SosFilter::butterworth_bandpass(4, 3.5e6, 1.5e6, 1e8, 2.5e6).is_err());
        assert!(SosFilter::butterworth_bandpass(4, 1.5e6, 6e7, 1e8, 2.5e6).is_err());
        assert!(SosFilter::butterworth_bandpass(0, 1.5e6, 3.5e6, 1e8, 2.5e6).is_err());
    }
}
