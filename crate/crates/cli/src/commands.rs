//! Pipelines behind the subcommands.

use std::path::PathBuf;

use schrodinger_bridge::bridge::{
    propagate_factors, solve_boundary_system, BoundaryData, BridgeSolution, IpfOptions,
};
use schrodinger_bridge::burgers::{
    burgers_residual, compatibility_potential, deviation_from_constant, force_from_potential,
};
use schrodinger_bridge::dynamics::{
    grid_cdf, ks_statistic, simulate_backward, simulate_forward, PathEnsemble, SdeConfig,
};
use schrodinger_bridge::gallery::{
    convergence_order, run_suite, QuantumFreePacket, COMPATIBILITY_MIN_STEPS, SCENARIOS,
};
use schrodinger_bridge::kernel::{check_chapman_kolmogorov, Kernel};
use schrodinger_bridge::numgrid::{ScalarField, TailMask};
use schrodinger_bridge::{Grid, Series, TimeLattice};

use crate::config::{DensitySpec, ScenarioConfig};
use crate::error::CliError;
use crate::io::{ArtifactDir, DensityTable};
use crate::report::RunReport;

/// Where artifacts go: `--out`, then `[output] dir`, then the environment default.
pub fn output_dir(cfg: &ScenarioConfig, env_default: Option<PathBuf>) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .or(env_default)
        .unwrap_or_else(|| PathBuf::from("sbridge-out"))
}

/// Runs `pipeline`, writes its artifacts and `summary.json` into `out`, and
/// returns the report; failed checks are reported through [`RunReport::verdict`].
pub fn execute(pipeline: &str, cfg: &ScenarioConfig, out: PathBuf) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let mut report = RunReport::new(pipeline, cfg);
    let mut dir = ArtifactDir::create(out)?;
    match pipeline {
        "bridge-solve" => bridge_solve(cfg, &mut report, &mut dir)?,
        "simulate" => simulate(cfg, &mut report, &mut dir)?,
        "burgers-residual" => burgers(cfg, &mut report)?,
        "kernel-check-ck" => kernel_check_ck(cfg, &mut report)?,
        "gallery" => gallery(cfg, &mut report)?,
        other => {
            return Err(CliError::Unknown {
                what: "pipeline",
                name: other.to_string(),
            })
        }
    }
    report.artifacts = dir.written().to_vec();
    report.artifacts.push(dir.root().join("summary.json"));
    let json = report.to_json();
    dir.write("summary.json", |w| {
        use std::io::Write;
        writeln!(w, "{json}")
    })?;
    Ok(report)
}

fn density(
    cfg: &ScenarioConfig,
    spec: &DensitySpec,
    grid: &Grid,
    t: f64,
) -> Result<ScalarField<f64>, CliError> {
    match spec.kind.as_str() {
        "gaussian" => {
            let (m, v) = (spec.mean, spec.variance);
            let norm = (2.0 * std::f64::consts::PI * v).sqrt();
            Ok(ScalarField::from_fn(*grid, t, |x| {
                spec.scale * (-(x - m) * (x - m) / (2.0 * v)).exp() / norm
            })?)
        }
        "packet" => Ok(ScalarField::from_fn(*grid, t, |x| {
            spec.scale * QuantumFreePacket::rho(x, t)
        })?),
        "csv" => {
            let path = cfg.resolve(spec)?;
            let table = DensityTable::read(&path, spec.t)?;
            let mass = table.mass();
            if (mass - 1.0).abs() > cfg.tolerances.mass {
                return Err(CliError::Validation(format!(
                    "{} is not normalized: mass {mass} (tolerance {})",
                    path.display(),
                    cfg.tolerances.mass
                )));
            }
            table.resample(grid, t)
        }
        other => Err(CliError::Validation(format!(
            "unknown density kind {other:?}"
        ))),
    }
}

fn boundary(cfg: &ScenarioConfig, grid: &Grid) -> Result<BoundaryData<f64>, CliError> {
    let t_end = cfg.time.t_end;
    let rho0 = density(cfg, &cfg.boundary.rho0, grid, 0.0)?;
    let rho_t = density(cfg, &cfg.boundary.rho_t, grid, t_end)?;
    Ok(BoundaryData::normalized(rho0, rho_t, t_end)?)
}

fn ipf(cfg: &ScenarioConfig) -> IpfOptions<f64> {
    IpfOptions {
        tol: cfg.tolerances.ipf,
        max_iter: cfg.tolerances.max_iter,
    }
}

fn l1(grid: &Grid, a: &[f64], b: &[f64]) -> Result<f64, CliError> {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok(ScalarField::new(*grid, d, 0.0)?.integrate()?)
}

fn solve(
    cfg: &ScenarioConfig,
    kernel: &Kernel<f64>,
    grid: &Grid,
    times: &TimeLattice,
    report: Option<&mut RunReport>,
) -> Result<(BoundaryData<f64>, BridgeSolution<f64>), CliError> {
    let bd = boundary(cfg, grid)?;
    let k = kernel.matrix(grid, 0.0, bd.t_end())?;
    let factors = solve_boundary_system(&k, &bd, ipf(cfg))?;
    if let Some(report) = report {
        let residual = factors
            .residual_history()
            .last()
            .copied()
            .unwrap_or(f64::NAN);
        report.note("fitting sweeps", factors.iterations() as f64);
        report.below("fitting residual (L1)", residual, cfg.tolerances.ipf);
    }
    let sol = propagate_factors(&factors, kernel, times)?;
    Ok((bd, sol))
}

fn marginal_checks(
    report: &mut RunReport,
    cfg: &ScenarioConfig,
    bd: &BoundaryData<f64>,
    sol: &BridgeSolution<f64>,
) -> Result<(), CliError> {
    let g = sol.grid();
    let last = sol.times().n_slices() - 1;
    report.below(
        "initial marginal (L1)",
        l1(g, sol.rho().values(0), bd.rho0().values())?,
        cfg.tolerances.marginal,
    );
    report.below(
        "terminal marginal (L1)",
        l1(g, sol.rho().values(last), bd.rho_t().values())?,
        cfg.tolerances.marginal,
    );
    Ok(())
}

fn bridge_solve(
    cfg: &ScenarioConfig,
    report: &mut RunReport,
    dir: &mut ArtifactDir,
) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let times = cfg.times()?;
    let kernel = cfg.kernel(&grid)?;
    let (bd, sol) = solve(cfg, &kernel, &grid, &times, Some(report))?;
    marginal_checks(report, cfg, &bd, &sol)?;
    dir.field("u0.csv", sol.factors().u0())?;
    dir.field("v_t.csv", sol.factors().v_t())?;
    dir.series("rho.csv", sol.rho())?;
    dir.series("drift.csv", sol.drift())?;
    dir.series("drift_star.csv", sol.drift_star())?;
    Ok(())
}

/// Kernels generated by `nu d2/dx2 - c(x, t)`, with their potential `c`.
fn diffusion_potential(
    cfg: &ScenarioConfig,
    kernel: &Kernel<f64>,
) -> Result<Box<dyn Fn(f64, f64) -> f64>, CliError> {
    match kernel {
        Kernel::Heat { .. } => Ok(Box::new(|_, _| 0.0)),
        Kernel::QuantumK1 => Ok(Box::new(QuantumFreePacket::omega_half)),
        Kernel::NumericFk(_) => {
            let c = cfg.potential()?;
            Ok(Box::new(move |x, t| c.eval(x, t)))
        }
        other => Err(CliError::Validation(format!(
            "kernel {} is not generated by a constant diffusion with a known potential \
             (use heat, quantum-k1 or numeric-fk)",
            other.tag()
        ))),
    }
}

fn simulate(
    cfg: &ScenarioConfig,
    report: &mut RunReport,
    dir: &mut ArtifactDir,
) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let times = cfg.times()?;
    let kernel = cfg.kernel(&grid)?;
    diffusion_potential(cfg, &kernel).map(drop)?;
    let (bd, sol) = solve(cfg, &kernel, &grid, &times, Some(report))?;
    let sde = SdeConfig {
        nu: sol.nu(),
        n_paths: cfg.sde.n_paths,
        dt: cfg.sde.dt,
        seed: cfg.sde.seed,
        boundary_policy: cfg.boundary_policy()?,
        record_intervals: cfg.sde.record_intervals,
    };
    let t_end = cfg.time.t_end;
    let ens = if cfg.sde.direction == "backward" {
        simulate_backward(sol.drift_star(), bd.rho_t(), &sde, t_end)?
    } else {
        simulate_forward(sol.drift(), bd.rho0(), &sde, t_end)?
    };
    report.note("live paths", ens.live_count() as f64);
    report.below(
        "max KS distance to bridge density",
        max_ks(&ens, &sol)?,
        cfg.tolerances.ks,
    );
    dir.write("paths.csv", |w| ens.write_csv(w))?;
    dir.series("rho.csv", sol.rho())?;
    Ok(())
}

/// Largest KS distance between a recorded slice and the bridge density at that time.
fn max_ks(ens: &PathEnsemble<f64>, sol: &BridgeSolution<f64>) -> Result<f64, CliError> {
    let grid = sol.grid();
    let mut worst: f64 = 0.0;
    for k in 0..ens.times().n_slices() {
        let t = ens.times().time(k);
        let rho = ScalarField::from_fn(*grid, t, |x| sol.rho().interpolate(x, t))?;
        worst = worst.max(ks_statistic(&ens.slice(k), grid_cdf(&rho)));
    }
    Ok(worst)
}

fn burgers(cfg: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let times = cfg.times()?;
    let kernel = cfg.kernel(&grid)?;
    let c = diffusion_potential(cfg, &kernel)?;
    let residual = |g: &Grid, ts: &TimeLattice| -> schrodinger_bridge::Result<f64> {
        let kernel = cfg.kernel(g).map_err(core_error)?;
        let (_, sol) = solve(cfg, &kernel, g, ts, None).map_err(core_error)?;
        let cs = Series::from_fn(*g, *ts, &c)?;
        let force = force_from_potential(&cs, sol.nu())?;
        burgers_residual(
            sol.drift_star(),
            sol.nu(),
            &force,
            TailMask::density(sol.rho()),
        )
    };
    let order = convergence_order(&grid, &times, residual)?;
    report.second_order("forced Burgers residual ratio", order);

    let steps = times.n_steps().max(COMPATIBILITY_MIN_STEPS);
    let dense = TimeLattice::new(0.0, cfg.time.t_end, steps)?;
    let (_, sol) = solve(cfg, &kernel, &grid, &dense, None)?;
    let recovered = compatibility_potential(sol.drift(), sol.nu())?;
    let known = Series::from_fn(grid, dense, &c)?;
    report.below(
        "compatibility potential",
        deviation_from_constant(&recovered.c, &known, TailMask::density(sol.rho()))?,
        cfg.tolerances.compatibility,
    );
    Ok(())
}

/// Carries a CLI error through a closure that must return the library error type.
fn core_error(e: CliError) -> schrodinger_bridge::Error {
    match e {
        CliError::Core(e) => e,
        other => schrodinger_bridge::Error::InvalidArgument(other.to_string()),
    }
}

fn kernel_check_ck(cfg: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let kernel = cfg.kernel(&grid)?;
    let ck = cfg.ck;
    let violation = check_chapman_kolmogorov(&kernel, ck.s, ck.tau, ck.t, &grid)?;
    report.below(
        &format!(
            "Chapman-Kolmogorov {} ({}, {}, {})",
            kernel.tag(),
            ck.s,
            ck.tau,
            ck.t
        ),
        violation,
        cfg.tolerances.ck,
    );
    Ok(())
}

fn gallery(cfg: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let name = cfg.scenario.name.as_str();
    if !SCENARIOS.contains(&name) {
        return Err(CliError::Unknown {
            what: "scenario",
            name: name.to_string(),
        });
    }
    let suite = run_suite(name, &cfg.grid()?, &cfg.times()?)?;
    report.extend_suite(&suite);
    Ok(())
}
