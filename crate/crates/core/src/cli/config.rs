//! Strict JSON experiment configuration.
//!
//! Unknown keys, missing required keys and invalid values are all collected
//! before anything is reported, so one run of `validate` lists every problem.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::classical::{PotentialKind, PotentialSpec};
use crate::minplus::Grid1D;
use crate::quantum::CoherentStateParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HopfLax,
    Schrodinger,
    StatisticalSweep,
    DeterministicSweep,
    Bohm,
    Legendre,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::HopfLax,
        Mode::Schrodinger,
        Mode::StatisticalSweep,
        Mode::DeterministicSweep,
        Mode::Bohm,
        Mode::Legendre,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::HopfLax => "hopf_lax",
            Mode::Schrodinger => "schrodinger",
            Mode::StatisticalSweep => "statistical_sweep",
            Mode::DeterministicSweep => "deterministic_sweep",
            Mode::Bohm => "bohm",
            Mode::Legendre => "legendre",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn is_sweep(self) -> bool {
        matches!(self, Mode::StatisticalSweep | Mode::DeterministicSweep)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Gaussian,
    Coherent,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialConfig {
    pub kind: &'static str,
    pub mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.x_min, self.x_max, self.n).expect("validated grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    pub output_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialConfig {
    #[serde(rename = "type")]
    pub kind: InitialKind,
    pub x0: f64,
    pub v0: f64,
    pub sigma: f64,
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub hbar: f64,
    pub hbars: Vec<f64>,
    pub particles: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Momentum grid of the `legendre` mode; defaults to the spatial grid.
    pub momentum: GridConfig,
}

impl ExperimentConfig {
    pub fn potential_spec(&self) -> PotentialSpec {
        let p = &self.potential;
        let kind = match p.kind {
            "linear" => PotentialKind::Linear {
                force: p.force.unwrap_or(0.0),
            },
            "harmonic" => PotentialKind::Harmonic {
                omega: p.omega.unwrap_or(1.0),
            },
            _ => PotentialKind::Free,
        };
        PotentialSpec::new(kind, p.mass).expect("validated potential")
    }

    pub fn coherent_params(&self, hbar: f64) -> Option<CoherentStateParams> {
        let omega = self.potential.omega?;
        CoherentStateParams::new(
            self.initial.x0,
            self.initial.v0,
            omega,
            self.potential.mass,
            hbar,
        )
        .ok()
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Read and validate `path` for the subcommand `mode`. A `mode` key in the
/// file is optional but must agree with the subcommand when present.
pub fn parse_config(path: &Path, mode: Option<Mode>) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config_str(&text, mode)
}

pub fn parse_config_str(text: &str, mode: Option<Mode>) -> Result<ExperimentConfig, ConfigErrors> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("invalid JSON: {e}")]))?;
    let mut r = Reader::default();
    let cfg = r.config(&value, mode);
    match cfg {
        Some(cfg) if r.errors.is_empty() => Ok(cfg),
        _ => Err(ConfigErrors(r.errors)),
    }
}

const TOP_KEYS: &[&str] = &[
    "mode",
    "potential",
    "grid",
    "time",
    "initial",
    "hbar",
    "hbars",
    "particles",
    "seed",
    "output_dir",
    "momentum",
];

#[derive(Default)]
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn err(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn object<'v>(
        &mut self,
        v: &'v Value,
        path: &str,
        allowed: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.err(format!("`{path}` must be an object"));
            return None;
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                let full = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                self.err(format!(
                    "unknown key `{full}` (allowed: {})",
                    allowed.join(", ")
                ));
            }
        }
        Some(map)
    }

    fn number(&mut self, map: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        let v = map.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(format!("`{}` must be a finite number", join(path, key)));
                None
            }
        }
    }

    fn required_number(&mut self, map: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        if !map.contains_key(key) {
            self.err(format!("missing required key `{}`", join(path, key)));
            return None;
        }
        self.number(map, key, path)
    }

    fn count(&mut self, map: &Map<String, Value>, key: &str, path: &str) -> Option<u64> {
        let v = map.get(key)?;
        match v.as_u64() {
            Some(x) => Some(x),
            None => {
                self.err(format!(
                    "`{}` must be a nonnegative integer",
                    join(path, key)
                ));
                None
            }
        }
    }

    fn config(&mut self, v: &Value, cli_mode: Option<Mode>) -> Option<ExperimentConfig> {
        let top = self.object(v, "", TOP_KEYS)?;

        let file_mode = match top.get("mode") {
            None => None,
            Some(Value::String(s)) => match Mode::from_name(s) {
                Some(m) => Some(m),
                None => {
                    self.err(format!(
                        "`mode` = {s:?} is not one of {}",
                        Mode::ALL.map(Mode::name).join(", ")
                    ));
                    None
                }
            },
            Some(_) => {
                self.err("`mode` must be a string");
                None
            }
        };
        let mode = match (cli_mode, file_mode) {
            (Some(c), Some(f)) if c != f => {
                self.err(format!("config `mode` is {f} but the subcommand is {c}"));
                c
            }
            (Some(c), _) => c,
            (None, Some(f)) => f,
            (None, None) => {
                if !top.contains_key("mode") {
                    self.err("missing required key `mode` (needed when no subcommand selects one)");
                }
                Mode::HopfLax
            }
        };

        let potential = self.potential(top.get("potential"));
        let grid = match top.get("grid") {
            Some(g) => self.grid(g, "grid"),
            None => {
                self.err("missing required key `grid`");
                None
            }
        };
        let time = self.time(top.get("time"), potential);
        let initial = self.initial(top.get("initial"), mode);

        let hbar = match self.number(top, "hbar", "") {
            Some(h) if h <= 0.0 => {
                self.err("`hbar` must be positive");
                None
            }
            Some(h) => Some(h),
            None => Some(1.0),
        };
        let hbars = self.hbars(top.get("hbars"), mode);
        let particles = match self.count(top, "particles", "") {
            Some(0) => {
                self.err("`particles` must be at least 1");
                None
            }
            Some(p) => Some(p as usize),
            None => Some(10_000),
        };
        let seed = self.count(top, "seed", "").unwrap_or(0);
        let output_dir = match top.get("output_dir") {
            None => Some(PathBuf::from("out")),
            Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
            Some(_) => {
                self.err("`output_dir` must be a nonempty string");
                None
            }
        };
        let momentum = match top.get("momentum") {
            Some(m) => self.grid(m, "momentum"),
            None => grid,
        };

        let cfg = ExperimentConfig {
            mode,
            potential: potential?,
            grid: grid?,
            time: time?,
            initial: initial?,
            hbar: hbar?,
            hbars: hbars?,
            particles: particles?,
            seed,
            output_dir: output_dir?,
            momentum: momentum?,
        };
        self.cross_checks(&cfg);
        Some(cfg)
    }

    fn potential(&mut self, v: Option<&Value>) -> Option<PotentialConfig> {
        let Some(v) = v else {
            return Some(PotentialConfig {
                kind: "free",
                mass: 1.0,
                force: None,
                omega: None,
            });
        };
        let map = self.object(v, "potential", &["kind", "mass", "force", "omega"])?;
        let kind = match map.get("kind").map(|k| k.as_str()) {
            None => "free",
            Some(Some("free")) => "free",
            Some(Some("linear")) => "linear",
            Some(Some("harmonic")) => "harmonic",
            Some(_) => {
                self.err("`potential.kind` must be one of free, linear, harmonic");
                return None;
            }
        };
        let mass = self.number(map, "mass", "potential").unwrap_or(1.0);
        if mass <= 0.0 {
            self.err("`potential.mass` must be positive");
        }
        let force = self.number(map, "force", "potential");
        let omega = self.number(map, "omega", "potential");
        match kind {
            "linear" if force.is_none() => {
                self.err("missing required key `potential.force` for the linear potential")
            }
            "harmonic" if omega.is_none() => {
                self.err("missing required key `potential.omega` for the harmonic potential")
            }
            "harmonic" if omega.is_some_and(|w| w <= 0.0) => {
                self.err("`potential.omega` must be positive")
            }
            _ => {}
        }
        if kind != "linear" && force.is_some() {
            self.err(format!(
                "`potential.force` does not apply to the {kind} potential"
            ));
        }
        if kind != "harmonic" && omega.is_some() {
            self.err(format!(
                "`potential.omega` does not apply to the {kind} potential"
            ));
        }
        Some(PotentialConfig {
            kind,
            mass,
            force: if kind == "linear" { force } else { None },
            omega: if kind == "harmonic" { omega } else { None },
        })
    }

    fn grid(&mut self, v: &Value, path: &str) -> Option<GridConfig> {
        let map = self.object(v, path, &["x_min", "x_max", "n"])?;
        let lo = self.required_number(map, "x_min", path);
        let hi = self.required_number(map, "x_max", path);
        let n = if map.contains_key("n") {
            self.count(map, "n", path)
        } else {
            self.err(format!("missing required key `{path}.n`"));
            None
        };
        let (lo, hi, n) = (lo?, hi?, n?);
        if lo >= hi {
            self.err(format!("`{path}.x_min` must be below `{path}.x_max`"));
        }
        if n < 3 {
            self.err(format!("`{path}.n` must be at least 3"));
        }
        Some(GridConfig {
            x_min: lo,
            x_max: hi,
            n: n as usize,
        })
    }

    fn time(&mut self, v: Option<&Value>, pot: Option<PotentialConfig>) -> Option<TimeConfig> {
        let Some(v) = v else {
            self.err("missing required key `time`");
            return None;
        };
        let map = self.object(v, "time", &["t_end", "dt", "output_every"])?;
        let t_end = self.required_number(map, "t_end", "time")?;
        if t_end <= 0.0 {
            self.err("`time.t_end` must be positive");
        }
        let default_dt = match pot.and_then(|p| p.omega) {
            Some(w) => 1e-3 * 2.0 * std::f64::consts::PI / w,
            None => 1e-3,
        };
        let dt = self
            .number(map, "dt", "time")
            .unwrap_or(default_dt.min(t_end.abs()));
        if dt <= 0.0 {
            self.err("`time.dt` must be positive");
        } else if dt > t_end {
            self.err("`time.dt` must not exceed `time.t_end`");
        }
        let every = self.count(map, "output_every", "time").unwrap_or(1);
        if every == 0 {
            self.err("`time.output_every` must be at least 1");
        }
        Some(TimeConfig {
            t_end,
            dt,
            output_every: every as usize,
        })
    }

    fn initial(&mut self, v: Option<&Value>, mode: Mode) -> Option<InitialConfig> {
        let default_kind = match mode {
            Mode::HopfLax | Mode::Legendre => InitialKind::Plane,
            Mode::DeterministicSweep => InitialKind::Coherent,
            _ => InitialKind::Gaussian,
        };
        let Some(v) = v else {
            return Some(InitialConfig {
                kind: default_kind,
                x0: 0.0,
                v0: 0.0,
                sigma: 1.0,
            });
        };
        let map = self.object(v, "initial", &["type", "x0", "v0", "sigma"])?;
        let kind = match map.get("type").map(|k| k.as_str()) {
            None => default_kind,
            Some(Some("gaussian")) => InitialKind::Gaussian,
            Some(Some("coherent")) => InitialKind::Coherent,
            Some(Some("plane")) => InitialKind::Plane,
            Some(_) => {
                self.err("`initial.type` must be one of gaussian, coherent, plane");
                return None;
            }
        };
        let x0 = self.number(map, "x0", "initial").unwrap_or(0.0);
        let v0 = self.number(map, "v0", "initial").unwrap_or(0.0);
        let sigma = self.number(map, "sigma", "initial");
        if kind == InitialKind::Coherent && sigma.is_some() {
            self.err("`initial.sigma` does not apply to coherent states (the width is sqrt(hbar/2 m omega))");
        }
        let sigma = sigma.unwrap_or(1.0);
        if sigma <= 0.0 {
            self.err("`initial.sigma` must be positive");
        }
        Some(InitialConfig {
            kind,
            x0,
            v0,
            sigma,
        })
    }

    fn hbars(&mut self, v: Option<&Value>, mode: Mode) -> Option<Vec<f64>> {
        let Some(v) = v else {
            if mode.is_sweep() {
                self.err(format!("missing required key `hbars` for {mode}"));
                return None;
            }
            return Some(Vec::new());
        };
        let Some(arr) = v.as_array() else {
            self.err("`hbars` must be an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            match x.as_f64() {
                Some(h) if h > 0.0 && h.is_finite() => out.push(h),
                _ => self.err(format!("`hbars[{i}]` must be a positive number")),
            }
        }
        if mode.is_sweep() && out.is_empty() && arr.is_empty() {
            self.err("`hbars` must not be empty");
        }
        if out.windows(2).any(|w| w[1] >= w[0]) {
            self.err(
                "`hbars` must be strictly descending (the sweep runs from large to small hbar)",
            );
        }
        Some(out)
    }

    fn cross_checks(&mut self, cfg: &ExperimentConfig) {
        let omega = cfg.potential.omega;
        let harmonic = omega.is_some();
        if cfg.initial.kind == InitialKind::Coherent && !harmonic {
            self.err("`initial.type` = coherent requires the harmonic potential");
        }
        match cfg.mode {
            Mode::DeterministicSweep => {
                if !harmonic {
                    self.err("deterministic_sweep requires the harmonic potential");
                }
                if cfg.initial.kind != InitialKind::Coherent {
                    self.err("deterministic_sweep requires `initial.type` = coherent");
                }
            }
            Mode::StatisticalSweep if cfg.initial.kind != InitialKind::Gaussian => {
                self.err(
                    "statistical_sweep requires `initial.type` = gaussian (hbar-independent data)",
                );
            }
            Mode::HopfLax => {
                if let Some(w) = omega {
                    if w * cfg.time.t_end >= std::f64::consts::PI {
                        self.err(format!(
                            "`time.t_end` must lie before the first focal time pi/omega = {}",
                            std::f64::consts::PI / w
                        ));
                    }
                }
            }
            _ => {}
        }
        let g = cfg.grid;
        let quantum = matches!(
            cfg.mode,
            Mode::Schrodinger | Mode::Bohm | Mode::StatisticalSweep | Mode::DeterministicSweep
        );
        let needs_packet =
            quantum || (cfg.mode == Mode::HopfLax && cfg.initial.kind == InitialKind::Gaussian);
        if needs_packet && g.x_min < g.x_max {
            let (lo, hi) = match cfg.initial.kind {
                InitialKind::Gaussian => (
                    cfg.initial.x0 - 8.0 * cfg.initial.sigma,
                    cfg.initial.x0 + 8.0 * cfg.initial.sigma,
                ),
                InitialKind::Coherent => {
                    let h = if cfg.mode.is_sweep() {
                        cfg.hbars.first().copied().unwrap_or(cfg.hbar)
                    } else {
                        cfg.hbar
                    };
                    match cfg.coherent_params(h) {
                        Some(p) => {
                            let reach = p.orbit_amplitude() + 8.0 * p.sigma();
                            (-reach, reach)
                        }
                        None => (g.x_min, g.x_max),
                    }
                }
                InitialKind::Plane => (g.x_min, g.x_max),
            };
            if lo < g.x_min || hi > g.x_max {
                self.err(format!(
                    "grid [{}, {}] must contain [{lo}, {hi}] (8 widths around the initial packet)",
                    g.x_min, g.x_max
                ));
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}
