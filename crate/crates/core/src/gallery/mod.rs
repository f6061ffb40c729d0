//! Closed-form oracle layer: the free Gaussian packet, the two counter-example
//! kernel constructions built on top of it, and the suites that check them.

mod packet;
mod report;
pub mod residuals;
mod suites;

pub use packet::{
    eval_packet, pinned_coefficient, pinned_coefficient_dt, PacketValues, QuantumFreePacket,
};
pub use report::{convergence_order, Bound, Check, OrderCheck, SuiteReport, SECOND_ORDER_BAND};
pub use suites::{
    bridge_drift_errors, example1_suite, example2_suite, gauge_aligned_error, packet_boundary,
    packet_factor_errors, packet_factors, quantum_free_suite, run_suite, stretched_grid,
    verify_parabolic_system, COMPATIBILITY_MIN_STEPS, DRIFT_DOMAIN_STRETCH, GALLERY_T_END,
    SCENARIOS,
};
