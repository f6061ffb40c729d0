use schrodinger_bridge::gallery::{example1_suite, example2_suite, quantum_free_suite};
use schrodinger_bridge::{Grid, TimeLattice};

fn lattice() -> (Grid, TimeLattice) {
    (
        Grid::default_domain(),
        TimeLattice::default_lattice(1.0).unwrap(),
    )
}

#[test]
fn quantum_free_suite_passes() {
    let (g, ts) = lattice();
    let r = quantum_free_suite(&g, &ts).unwrap();
    println!("{r}");
    assert!(r.passed(), "{r}");
}

#[test]
fn example1_suite_passes() {
    let (g, ts) = lattice();
    let r = example1_suite(&g, &ts).unwrap();
    println!("{r}");
    assert!(r.passed(), "{r}");
}

#[test]
fn example2_suite_passes() {
    let (g, ts) = lattice();
    let r = example2_suite(&g, &ts).unwrap();
    println!("{r}");
    assert!(r.passed(), "{r}");
}

mod packet_against_wave_function {
    use num_complex::Complex64;
    use proptest::prelude::*;
    use schrodinger_bridge::gallery::{eval_packet, QuantumFreePacket as P};

    /// Five-point derivative of `ln psi` in `x`, taken through ratios so no branch cut is crossed.
    fn log_psi_gradient(x: f64, t: f64) -> Complex64 {
        let h = 1e-3;
        let base = P::psi(x, t);
        let l = |k: f64| (P::psi(x + k * h, t) / base).ln();
        (l(-2.0) - 8.0 * l(-1.0) + 8.0 * l(1.0) - l(2.0)) / (12.0 * h)
    }

    proptest! {
        #[test]
        fn fields_follow_from_psi(x in -5.0f64..5.0, t in 0.0f64..2.0) {
            let v = eval_packet(x, t);
            prop_assert!((v.psi.norm_sqr() - v.rho).abs() <= 1e-12 * v.rho.max(1e-300));
            let g = log_psi_gradient(x, t);
            prop_assert!((2.0 * (g.re + g.im) - v.drift).abs() < 1e-8);
            prop_assert!((2.0 * g.im - v.current_velocity).abs() < 1e-8);
            prop_assert!((2.0 * (g.re - g.im) + v.drift_star).abs() < 1e-8);
        }
    }
}
