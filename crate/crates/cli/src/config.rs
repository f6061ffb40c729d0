//! Scenario files: a TOML document with one table per concern.
//!
//! ```toml
//! [scenario]
//! pipeline = "bridge-solve"   # bridge-solve | simulate | burgers-residual | kernel-check-ck | gallery
//! name = "quantum-free"       # gallery scenario, only read by the gallery pipeline
//!
//! [grid]
//! x_min = -10.0
//! x_max = 10.0
//! points = 513
//!
//! [time]
//! t_end = 1.0
//! steps = 100
//!
//! [kernel]
//! kind = "quantum-k1"         # heat | example1 | quantum-k1 | pinned-example2 | quantum-k2
//!                             # | markov-family | numeric-fk
//! nu = 1.0                    # heat and numeric-fk only
//! y = 0.0                     # markov-family label
//! s = 0.0
//! potential = "zero"          # numeric-fk: zero | constant | quantum-packet
//! potential_value = 0.0       # numeric-fk with a constant potential
//!
//! [boundary.rho0]
//! kind = "gaussian"           # gaussian | packet | csv
//! mean = 0.0
//! variance = 1.0
//!
//! [boundary.rho_t]
//! kind = "csv"
//! path = "rho_t.csv"          # relative to the scenario file
//!
//! [sde]
//! n_paths = 10000
//! dt = 1e-3
//! seed = 1
//! boundary = "reflect"        # reflect | absorb-and-discard
//! record_intervals = 10
//! direction = "forward"       # forward | backward
//!
//! [ck]
//! s = 0.0
//! tau = 0.5
//! t = 1.0
//!
//! [tolerances]
//! ipf = 1e-12
//! max_iter = 500
//! mass = 1e-6
//! marginal = 1e-6
//! ck = 1e-6
//! ks = 0.02
//! compatibility = 1e-4
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every table and key is optional; missing values take the defaults shown.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use schrodinger_bridge::dynamics::BoundaryPolicy;
use schrodinger_bridge::kernel::{Kernel, Potential};
use schrodinger_bridge::{Grid, TimeLattice};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub kernel: KernelSection,
    pub boundary: BoundarySection,
    pub sde: SdeSection,
    pub ck: CkSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
    /// Directory relative CSV paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub pipeline: String,
    pub name: String,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            pipeline: "bridge-solve".into(),
            name: "quantum-free".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            points: 513,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    pub steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub kind: String,
    pub nu: f64,
    pub y: f64,
    pub s: f64,
    pub potential: String,
    pub potential_value: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            kind: "quantum-k1".into(),
            nu: 1.0,
            y: 0.0,
            s: 0.0,
            potential: "zero".into(),
            potential_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    pub rho0: DensitySpec,
    pub rho_t: DensitySpec,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            rho0: DensitySpec::packet(),
            rho_t: DensitySpec::packet(),
        }
    }
}

/// One boundary density.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySpec {
    /// `gaussian`, `packet` (the free packet density at the boundary time) or `csv`.
    pub kind: String,
    pub mean: f64,
    pub variance: f64,
    /// Multiplies the analytic forms; anything but 1 is rejected as unnormalized.
    pub scale: f64,
    pub path: Option<PathBuf>,
    /// Slice to read from a three-column `t,x,value` file.
    pub t: Option<f64>,
}

impl DensitySpec {
    pub fn packet() -> Self {
        Self {
            kind: "packet".into(),
            ..Self::default()
        }
    }
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self {
            kind: "gaussian".into(),
            mean: 0.0,
            variance: 1.0,
            scale: 1.0,
            path: None,
            t: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub boundary: String,
    pub record_intervals: usize,
    pub direction: String,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            dt: 1e-3,
            seed: 1,
            boundary: "reflect".into(),
            record_intervals: 10,
            direction: "forward".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CkSection {
    pub s: f64,
    pub tau: f64,
    pub t: f64,
}

impl Default for CkSection {
    fn default() -> Self {
        Self {
            s: 0.0,
            tau: 0.5,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Stopping tolerance of the proportional fitting.
    pub ipf: f64,
    pub max_iter: usize,
    /// Allowed deviation of a boundary density's mass from one before renormalization.
    pub mass: f64,
    /// Bound on the L1 error of the propagated terminal marginal.
    pub marginal: f64,
    pub ck: f64,
    pub ks: f64,
    pub compatibility: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ipf: 1e-12,
            max_iter: 500,
            mass: 1e-6,
            marginal: 1e-6,
            ck: 1e-6,
            ks: 0.02,
            compatibility: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    pub tol: Option<f64>,
    pub kernel: Option<String>,
    pub scenario: Option<String>,
}

impl ScenarioConfig {
    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|span| text[..span.start.min(text.len())].lines().count().max(1));
            CliError::ConfigParse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = Some(dir.clone());
        }
        if let Some(seed) = o.seed {
            self.sde.seed = seed;
        }
        if let Some(n) = o.grid_points {
            self.grid.points = n;
        }
        if let Some(tol) = o.tol {
            self.tolerances.ipf = tol;
        }
        if let Some(kind) = &o.kernel {
            self.kernel.kind = kind.clone();
        }
        if let Some(name) = &o.scenario {
            self.scenario.name = name.clone();
        }
    }

    /// Range checks that need no numerical work.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        let g = &self.grid;
        if !(g.x_min < g.x_max) || !g.x_min.is_finite() || !g.x_max.is_finite() {
            return bad(format!(
                "grid needs x_min < x_max, got [{}, {}]",
                g.x_min, g.x_max
            ));
        }
        if g.points < 3 {
            return bad(format!("grid needs at least 3 points, got {}", g.points));
        }
        if !(self.time.t_end > 0.0) || self.time.steps < 2 {
            return bad(format!(
                "time lattice needs t_end > 0 and at least 2 steps, got t_end = {}, steps = {}",
                self.time.t_end, self.time.steps
            ));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("ipf", t.ipf),
            ("mass", t.mass),
            ("marginal", t.marginal),
            ("ck", t.ck),
            ("ks", t.ks),
            ("compatibility", t.compatibility),
        ] {
            if !(v > 0.0) {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if t.max_iter == 0 {
            return bad("tolerance max_iter must be at least 1".into());
        }
        if self.sde.n_paths == 0 || self.sde.record_intervals == 0 {
            return bad("sde needs n_paths >= 1 and record_intervals >= 1".into());
        }
        if !["forward", "backward"].contains(&self.sde.direction.as_str()) {
            return bad(format!(
                "sde direction must be forward or backward, got {:?}",
                self.sde.direction
            ));
        }
        self.boundary_policy()?;
        let ck = &self.ck;
        if !(ck.s < ck.tau && ck.tau < ck.t) {
            return bad(format!(
                "ck needs s < tau < t, got ({}, {}, {})",
                ck.s, ck.tau, ck.t
            ));
        }
        for (label, spec) in [
            ("rho0", &self.boundary.rho0),
            ("rho_t", &self.boundary.rho_t),
        ] {
            match spec.kind.as_str() {
                "gaussian" if !(spec.variance > 0.0) => {
                    return bad(format!("boundary {label}: variance must be positive"))
                }
                "gaussian" | "packet" => {
                    if (spec.scale - 1.0).abs() > t.mass {
                        return bad(format!(
                            "boundary {label} is not normalized: mass {} (tolerance {})",
                            spec.scale, t.mass
                        ));
                    }
                }
                "csv" => {
                    let path = self.resolve(spec)?;
                    if !path.is_file() {
                        return Err(CliError::MissingFile(path));
                    }
                }
                other => return bad(format!(
                    "boundary {label}: unknown kind {other:?} (expected gaussian, packet or csv)"
                )),
            }
        }
        Ok(())
    }

    pub fn resolve(&self, spec: &DensitySpec) -> Result<PathBuf, CliError> {
        let path = spec
            .path
            .as_ref()
            .ok_or_else(|| CliError::Validation("csv boundary needs a path".into()))?;
        Ok(if path.is_absolute() {
            path.clone()
        } else {
            self.base_dir.join(path)
        })
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(
            self.grid.x_min,
            self.grid.x_max,
            self.grid.points,
        )?)
    }

    pub fn times(&self) -> Result<TimeLattice, CliError> {
        Ok(TimeLattice::new(0.0, self.time.t_end, self.time.steps)?)
    }

    pub fn boundary_policy(&self) -> Result<BoundaryPolicy, CliError> {
        self.sde
            .boundary
            .parse()
            .map_err(|e: schrodinger_bridge::Error| CliError::Validation(e.to_string()))
    }

    pub fn kernel(&self, grid: &Grid) -> Result<Kernel<f64>, CliError> {
        let k = &self.kernel;
        Ok(match k.kind.as_str() {
            "heat" => Kernel::Heat {
                nu: positive_nu(k.nu)?,
            },
            "example1" => Kernel::Example1,
            "quantum-k1" => Kernel::QuantumK1,
            "pinned-example2" => Kernel::PinnedExample2,
            "quantum-k2" => Kernel::QuantumK2,
            "markov-family" => Kernel::MarkovFamily { y: k.y, s: k.s },
            "numeric-fk" => Kernel::numeric_fk(self.potential()?, *grid),
            other => {
                return Err(CliError::Validation(format!(
                    "unknown kernel kind {other:?} (expected one of {})",
                    KERNEL_KINDS.join(", ")
                )))
            }
        })
    }

    /// Potential of a numeric Feynman-Kac kernel.
    pub fn potential(&self) -> Result<Potential<f64>, CliError> {
        let k = &self.kernel;
        let nu = positive_nu(k.nu)?;
        match k.potential.as_str() {
            "zero" => Ok(Potential::zero(nu)),
            "constant" => Ok(Potential::constant(k.potential_value, nu)),
            "quantum-packet" if nu == 1.0 => Ok(Potential::quantum_packet()),
            "quantum-packet" => Err(CliError::Validation(
                "the quantum-packet potential is defined for nu = 1".into(),
            )),
            other => Err(CliError::Validation(format!(
                "unknown potential {other:?} (expected zero, constant or quantum-packet)"
            ))),
        }
    }
}

/// Kernel tags accepted in scenario files.
pub const KERNEL_KINDS: [&str; 7] = [
    "heat",
    "example1",
    "quantum-k1",
    "pinned-example2",
    "quantum-k2",
    "markov-family",
    "numeric-fk",
];

fn positive_nu(nu: f64) -> Result<f64, CliError> {
    if nu > 0.0 && nu.is_finite() {
        Ok(nu)
    } else {
        Err(CliError::Validation(format!(
            "nu must be positive, got {nu}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::parse("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.grid().unwrap().len(), 513);
    }

    #[test]
    fn parse_error_names_line() {
        let text = "[grid]\npoints = 10\n\n[time]\nsteps = \"many\"\n";
        match ScenarioConfig::parse(text, Path::new("bad.toml")) {
            Err(CliError::ConfigParse { line, .. }) => assert_eq!(line, Some(5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ScenarioConfig::parse("[grid]\npionts = 3\n", Path::new("x.toml")),
            Err(CliError::ConfigParse { .. })
        ));
    }

    #[test]
    fn unnormalized_analytic_boundary_is_rejected() {
        let text = "[boundary.rho0]\nkind = \"gaussian\"\nscale = 2.0\n";
        let cfg = ScenarioConfig::parse(text, Path::new("x.toml")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Validation(_))));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = ScenarioConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            grid_points: Some(129),
            tol: Some(1e-9),
            kernel: Some("heat".into()),
            ..Overrides::default()
        });
        assert_eq!(
            (cfg.sde.seed, cfg.grid.points, cfg.tolerances.ipf),
            (9, 129, 1e-9)
        );
        assert_eq!(cfg.kernel(&cfg.grid().unwrap()).unwrap().tag(), "heat");
    }

    #[test]
    fn every_kernel_tag_round_trips() {
        let g = Grid::new(-5.0, 5.0, 33).unwrap();
        for tag in KERNEL_KINDS {
            let mut cfg = ScenarioConfig::default();
            cfg.kernel.kind = tag.into();
            assert_eq!(cfg.kernel(&g).unwrap().tag(), tag);
        }
    }
}
