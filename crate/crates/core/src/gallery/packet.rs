//! Closed forms of the freely spreading Gaussian packet in rescaled units
//! (`nu = 1`), and the Madelung-type real factors built from it.

use num_complex::Complex;

use crate::scalar::Real;

/// Evaluators for the free Gaussian wave packet and every real field derived from it.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuantumFreePacket;

/// All closed-form values at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketValues<T> {
    pub psi: Complex<T>,
    pub rho: T,
    pub theta: T,
    pub theta_star: T,
    /// Half of the effective potential; the Feynman-Kac potential `c` of the packet.
    pub omega_half: T,
    pub drift: T,
    pub drift_star: T,
    pub current_velocity: T,
    /// Amplitude `R` and phase `S` with `psi = exp(R + iS)`.
    pub amplitude_log: T,
    pub phase: T,
}

#[inline]
fn spread<T: Real>(t: T) -> T {
    T::one() + t * t
}

impl QuantumFreePacket {
    pub fn psi<T: Real>(x: T, t: T) -> Complex<T> {
        let two = T::lit(2.0);
        let prefactor = (two / T::PI()).powf(T::lit(0.25));
        let denom = Complex::new(two, two * t).sqrt();
        let exponent = -Complex::new(x * x, T::zero()) / Complex::new(T::lit(4.0), T::lit(4.0) * t);
        exponent.exp() * prefactor / denom
    }

    pub fn rho<T: Real>(x: T, t: T) -> T {
        let var = spread(t);
        (-x * x / (T::lit(2.0) * var)).exp() / (T::lit(2.0) * T::PI() * var).sqrt()
    }

    pub fn log_theta<T: Real>(x: T, t: T) -> T {
        let var = spread(t);
        -T::lit(0.25) * (T::lit(2.0) * T::PI() * var).ln()
            - x * x / T::lit(4.0) * (T::one() - t) / var
            - t.atan() / T::lit(2.0)
    }

    pub fn log_theta_star<T: Real>(x: T, t: T) -> T {
        let var = spread(t);
        -T::lit(0.25) * (T::lit(2.0) * T::PI() * var).ln()
            - x * x / T::lit(4.0) * (T::one() + t) / var
            + t.atan() / T::lit(2.0)
    }

    pub fn theta<T: Real>(x: T, t: T) -> T {
        Self::log_theta(x, t).exp()
    }

    pub fn theta_star<T: Real>(x: T, t: T) -> T {
        Self::log_theta_star(x, t).exp()
    }

    /// `Omega / 2 = x^2 / (2 (1+t^2)^2) - 1 / (1+t^2)`.
    pub fn omega_half<T: Real>(x: T, t: T) -> T {
        let var = spread(t);
        x * x / (T::lit(2.0) * var * var) - T::one() / var
    }

    /// Forward drift `-(1-t) x / (1+t^2)`.
    pub fn drift<T: Real>(x: T, t: T) -> T {
        -(T::one() - t) * x / spread(t)
    }

    /// Backward drift `x (1+t) / (1+t^2)`.
    pub fn drift_star<T: Real>(x: T, t: T) -> T {
        (T::one() + t) * x / spread(t)
    }

    pub fn current_velocity<T: Real>(x: T, t: T) -> T {
        x * t / spread(t)
    }

    /// Force `2 grad(Omega/2) = 2x / (1+t^2)^2`.
    pub fn force<T: Real>(x: T, t: T) -> T {
        let var = spread(t);
        T::lit(2.0) * x / (var * var)
    }

    pub fn variance<T: Real>(t: T) -> T {
        spread(t)
    }
}

/// Closed-form record at `(x, t)`.
pub fn eval_packet<T: Real>(x: T, t: T) -> PacketValues<T> {
    type P = QuantumFreePacket;
    let (lt, lts) = (P::log_theta(x, t), P::log_theta_star(x, t));
    PacketValues {
        psi: P::psi(x, t),
        rho: P::rho(x, t),
        theta: lt.exp(),
        theta_star: lts.exp(),
        omega_half: P::omega_half(x, t),
        drift: P::drift(x, t),
        drift_star: P::drift_star(x, t),
        current_velocity: P::current_velocity(x, t),
        amplitude_log: (lt + lts) / T::lit(2.0),
        phase: (lt - lts) / T::lit(2.0),
    }
}

/// Coefficient `c_{t,s} = sqrt(((1-t)^2 + 2s) / (1+s^2))` of the pinned propagator.
pub fn pinned_coefficient<T: Real>(t: T, s: T) -> T {
    let one = T::one();
    (((one - t) * (one - t) + T::lit(2.0) * s) / (one + s * s)).sqrt()
}

/// `d c_{t,s} / dt = -(1-t) / ((1+s^2) c_{t,s})`.
pub fn pinned_coefficient_dt<T: Real>(t: T, s: T) -> T {
    let one = T::one();
    -(one - t) / ((one + s * s) * pinned_coefficient(t, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = QuantumFreePacket;

    #[test]
    fn reference_values() {
        let peak = (2.0 * std::f64::consts::PI).sqrt().recip();
        assert!((P::rho(0.0, 0.0) - peak).abs() < 1e-15);
        assert!((P::rho(0.0f64, 0.0) - 0.398942).abs() < 1e-6);
        assert_eq!(P::omega_half(0.0, 0.0), -1.0);
        assert_eq!(P::variance(1.0), 2.0);
    }

    #[test]
    fn factor_product_is_density() {
        for &(x, t) in &[(0.0, 0.0), (1.5, 0.3), (-4.0, 1.0), (7.0, 0.75)] {
            let v = eval_packet::<f64>(x, t);
            assert!((v.theta * v.theta_star / v.rho - 1.0).abs() < 1e-12);
            assert!((v.psi.norm_sqr() / v.rho - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pinned_coefficient_limits() {
        for s in [0.0, 0.2, 0.5, 0.9] {
            assert!((pinned_coefficient(s, s) - 1.0f64).abs() < 1e-15);
        }
        assert_eq!(pinned_coefficient(1.0f64, 0.0), 0.0);
        let (t, s, h) = (0.4f64, 0.1, 1e-6);
        let fd = (pinned_coefficient(t + h, s) - pinned_coefficient(t - h, s)) / (2.0 * h);
        assert!((fd - pinned_coefficient_dt(t, s)).abs() < 1e-8);
    }

    #[test]
    fn single_precision_evaluates() {
        let v = eval_packet::<f32>(1.0, 0.5);
        assert!((v.theta * v.theta_star / v.rho - 1.0).abs() < 1e-5);
    }
}
