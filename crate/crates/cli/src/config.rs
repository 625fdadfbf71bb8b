//! Run configuration: presets, `key = value` files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use radpair::groenewold::{linear_grid, CoherenceFunctional, SweepSettings};
use radpair::integrator::{default_grid, DEFAULT_STRIDE};
use radpair::spin::{Electron, HyperfineCoupling};
use radpair::{DensityMatrix, Operator, ReactionParams, SpinSystem, Theory, C64};

/// Keys accepted in config files, in echo order.
pub const KEYS: [&str; 18] = [
    "theory", "n_nuclei", "couplings", "b", "k_s", "k_t", "gamma", "rho0", "rho0_file", "t_max",
    "dt", "stride", "b_grid", "gammas", "coherence", "c35", "out", "plot_dir",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1ab,
    Fig1de,
    Fig2,
    Fig3,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig1ab, Preset::Fig1de, Preset::Fig2, Preset::Fig3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1ab => "fig1ab",
            Preset::Fig1de => "fig1de",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
        }
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError(format!("unknown preset '{s}' (expected fig1ab, fig1de, fig2 or fig3)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    SingletUp,
    MixedTriplet,
    Custom,
}

impl InitialState {
    fn name(self) -> &'static str {
        match self {
            InitialState::SingletUp => "SINGLET_UP",
            InitialState::MixedTriplet => "MIXED_TRIPLET",
            InitialState::Custom => "CUSTOM",
        }
    }
}

impl FromStr for InitialState {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SINGLET_UP" => Ok(InitialState::SingletUp),
            "MIXED_TRIPLET" => Ok(InitialState::MixedTriplet),
            "CUSTOM" => Ok(InitialState::Custom),
            _ => err(format!("unknown rho0 '{s}' (expected SINGLET_UP, MIXED_TRIPLET or CUSTOM)")),
        }
    }
}

/// Field grid, kept in the form it was given for the config echo.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldGrid {
    Linear { lo: f64, hi: f64, n: usize },
    List(Vec<f64>),
}

impl FieldGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            FieldGrid::Linear { lo, hi, n } => linear_grid(*lo, *hi, *n),
            FieldGrid::List(v) => v.clone(),
        }
    }
}

impl fmt::Display for FieldGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldGrid::Linear { lo, hi, n } => write!(f, "{lo}:{hi}:{n}"),
            FieldGrid::List(v) => f.write_str(&join(v)),
        }
    }
}

impl FromStr for FieldGrid {
    type Err = ConfigError;

    /// `lo:hi:n` or a comma-separated list.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let grid = match parts.as_slice() {
            [lo, hi, n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| ConfigError(format!("b_grid: bad point count '{n}'")))?;
                let (lo, hi) = (parse_f64("b_grid", lo)?, parse_f64("b_grid", hi)?);
                if n == 0 || (n > 1 && hi <= lo) {
                    return err(format!("b_grid '{s}' needs n >= 1 and hi > lo"));
                }
                FieldGrid::Linear { lo, hi, n }
            }
            [list] => FieldGrid::List(parse_list("b_grid", list)?),
            _ => return err(format!("b_grid '{s}' is neither lo:hi:n nor a list")),
        };
        let pts = grid.points();
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return err("b_grid must be strictly ascending");
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub theory: Theory,
    pub n_nuclei: usize,
    pub couplings: Vec<HyperfineCoupling>,
    pub b: f64,
    pub k_singlet: f64,
    pub k_triplet: f64,
    pub gamma: f64,
    pub rho0: InitialState,
    pub rho0_file: Option<PathBuf>,
    /// `None` selects the default grid of the subcommand.
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub stride: usize,
    pub b_grid: FieldGrid,
    pub gammas: Vec<f64>,
    pub coherence: String,
    pub c35: CoherenceFunctional,
    pub out: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            theory: Theory::Kominis,
            n_nuclei: 1,
            couplings: vec![HyperfineCoupling::donor(0, 1.0)],
            b: 0.0,
            k_singlet: 0.01,
            k_triplet: 0.2,
            gamma: 0.0,
            rho0: InitialState::SingletUp,
            rho0_file: None,
            t_max: None,
            dt: None,
            stride: DEFAULT_STRIDE,
            b_grid: FieldGrid::Linear { lo: 0.0, hi: 3.0, n: 201 },
            gammas: vec![0.0005, 0.005, 0.05, 0.2],
            coherence: "trace-norm".into(),
            c35: CoherenceFunctional::EventWeighted,
            out: None,
            plot_dir: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return err(format!("{key}: '{v}' is not finite"));
    }
    Ok(x)
}

fn parse_rate(key: &str, v: &str) -> Result<f64> {
    let x = parse_f64(key, v)?;
    if x < 0.0 {
        return err(format!("{key} = {x} must be non-negative"));
    }
    Ok(x)
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `D1:1.0,A2:0.5`: electron letter, 1-based nucleus index, constant.
fn parse_couplings(v: &str) -> Result<Vec<HyperfineCoupling>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let bad = || ConfigError(format!("couplings: '{s}' is not of the form D<n>:<A> or A<n>:<A>"));
            let (site, constant) = s.split_once(':').ok_or_else(bad)?;
            let mut chars = site.chars();
            let electron = match chars.next().map(|c| c.to_ascii_uppercase()) {
                Some('D') => Electron::Donor,
                Some('A') => Electron::Acceptor,
                _ => return Err(bad()),
            };
            let nucleus: usize = chars.as_str().parse().map_err(|_| bad())?;
            if nucleus == 0 {
                return Err(bad());
            }
            Ok(HyperfineCoupling {
                nucleus: nucleus - 1,
                electron,
                constant: parse_f64("couplings", constant)?,
            })
        })
        .collect()
}

fn format_couplings(c: &[HyperfineCoupling]) -> String {
    c.iter()
        .map(|h| {
            let e = match h.electron {
                Electron::Donor => 'D',
                Electron::Acceptor => 'A',
            };
            format!("{e}{}:{}", h.nucleus + 1, h.constant)
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn optional(v: &str) -> Option<&str> {
    let v = v.trim();
    (!v.is_empty() && v != "auto").then_some(v)
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let fig1 = Self {
            preset: Some(preset),
            k_singlet: 0.01,
            k_triplet: 0.2,
            t_max: Some(100.0),
            dt: Some(1e-3),
            ..Self::default()
        };
        match preset {
            Preset::Fig1ab => Self { gamma: 0.0005, rho0: InitialState::SingletUp, ..fig1 },
            Preset::Fig1de => Self { gamma: 0.0, rho0: InitialState::MixedTriplet, ..fig1 },
            Preset::Fig2 => Self {
                gamma: 0.0005,
                rho0: InitialState::SingletUp,
                gammas: vec![0.0005, 0.005, 0.05, 0.2],
                ..fig1
            },
            Preset::Fig3 => Self {
                preset: Some(preset),
                theory: Theory::Kominis,
                k_singlet: 0.05,
                k_triplet: 0.05,
                gamma: 0.0,
                rho0: InitialState::SingletUp,
                b_grid: FieldGrid::Linear { lo: 0.0, hi: 3.0, n: 201 },
                ..Self::default()
            },
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "theory" => {
                self.theory = v.parse().map_err(|_| {
                    ConfigError(format!("theory: '{v}' (expected HABERKORN or KOMINIS)"))
                })?
            }
            "n_nuclei" => {
                self.n_nuclei = v
                    .parse()
                    .map_err(|_| ConfigError(format!("n_nuclei: '{v}' is not a count")))?
            }
            "couplings" => self.couplings = parse_couplings(v)?,
            "b" => self.b = parse_f64(key, v)?,
            "k_s" => self.k_singlet = parse_rate(key, v)?,
            "k_t" => self.k_triplet = parse_rate(key, v)?,
            "gamma" => self.gamma = parse_rate(key, v)?,
            "rho0" => self.rho0 = v.parse()?,
            "rho0_file" => self.rho0_file = optional(v).map(PathBuf::from),
            "t_max" => self.t_max = optional(v).map(|v| parse_rate(key, v)).transpose()?,
            "dt" => self.dt = optional(v).map(|v| parse_rate(key, v)).transpose()?,
            "stride" => {
                self.stride = v
                    .parse()
                    .ok()
                    .filter(|&s: &usize| s > 0)
                    .ok_or_else(|| ConfigError(format!("stride: '{v}' is not a positive count")))?
            }
            "b_grid" => self.b_grid = v.parse()?,
            "gammas" => {
                let g = v.split(',').map(|s| parse_rate(key, s)).collect::<Result<Vec<_>>>()?;
                if g.windows(2).any(|w| w[1] <= w[0]) {
                    return err("gammas must be strictly ascending");
                }
                self.gammas = g;
            }
            "coherence" => {
                radpair::master::coherence_measure(v).map_err(|e| ConfigError(format!("coherence: {e}")))?;
                self.coherence = v.to_string();
            }
            "c35" => {
                self.c35 = v.parse().map_err(|e| ConfigError(format!("c35: {e}")))?;
            }
            "out" => self.out = optional(v).filter(|v| *v != "-").map(PathBuf::from),
            "plot_dir" => self.plot_dir = optional(v).map(PathBuf::from),
            "preset" => return err("preset may only be given once, before other keys"),
            _ => return err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Preset (flag wins over file), then file entries, then flag overrides.
    pub fn resolve(
        preset_flag: Option<&str>,
        file: Option<&Path>,
        overrides: &[(&str, String)],
    ) -> Result<Self> {
        let entries = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                parse_file(&text)?
            }
            None => Vec::new(),
        };
        let file_preset = entries.iter().find(|(k, _)| k == "preset").map(|(_, v)| v.as_str());
        let mut cfg = match preset_flag.or(file_preset) {
            Some(name) => Self::from_preset(name.parse()?),
            None => Self::default(),
        };
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.params()?;
        cfg.system()?;
        Ok(cfg)
    }

    pub fn params(&self) -> Result<ReactionParams> {
        ReactionParams::new(self.k_singlet, self.k_triplet, self.gamma, self.theory)
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn system(&self) -> Result<SpinSystem> {
        self.system_at(self.b)
    }

    pub fn system_at(&self, b: f64) -> Result<SpinSystem> {
        SpinSystem::new(self.n_nuclei, self.couplings.clone(), b).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn initial_state(&self, sys: &SpinSystem) -> Result<DensityMatrix> {
        match self.rho0 {
            InitialState::SingletUp => Ok(DensityMatrix::singlet_up(sys)),
            InitialState::MixedTriplet => Ok(DensityMatrix::mixed_triplet(sys)),
            InitialState::Custom => {
                let path = self
                    .rho0_file
                    .as_ref()
                    .ok_or_else(|| ConfigError("rho0 = CUSTOM needs rho0_file".into()))?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                let op = parse_matrix(&text, sys.dim())?;
                DensityMatrix::new(op).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
            }
        }
    }

    /// `(t_max, dt)` for trajectory subcommands.
    pub fn time_grid(&self) -> Result<(f64, f64)> {
        let (t, dt) = default_grid(&self.params()?).map_err(|e| ConfigError(e.to_string()))?;
        Ok((self.t_max.unwrap_or(t), self.dt.unwrap_or(dt)))
    }

    pub fn sweep_settings(&self) -> Result<SweepSettings> {
        let mut s = SweepSettings::for_params(&self.params()?).map_err(|e| ConfigError(e.to_string()))?;
        s.t_max = self.t_max.unwrap_or(s.t_max);
        s.dt = self.dt.unwrap_or(s.dt);
        s.functional = self.c35;
        Ok(s)
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt_f = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let opt_p = |v: &Option<PathBuf>| v.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let values = [
            self.theory.to_string().to_ascii_uppercase(),
            self.n_nuclei.to_string(),
            format_couplings(&self.couplings),
            self.b.to_string(),
            self.k_singlet.to_string(),
            self.k_triplet.to_string(),
            self.gamma.to_string(),
            self.rho0.name().to_string(),
            opt_p(&self.rho0_file),
            opt_f(self.t_max),
            opt_f(self.dt),
            self.stride.to_string(),
            self.b_grid.to_string(),
            join(&self.gammas),
            self.coherence.clone(),
            self.c35.to_string(),
            opt_p(&self.out),
            opt_p(&self.plot_dir),
        ];
        KEYS.into_iter().zip(values).collect()
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if k != "preset" && !KEYS.contains(&k.as_str()) {
            return err(format!("line {}: unknown key '{k}'", n + 1));
        }
        if out.iter().any(|(seen, _)| *seen == k) {
            return err(format!("line {}: duplicate key '{k}'", n + 1));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// `dim` rows of `dim` whitespace-separated complex entries (`0.5`, `0.1-0.2i`).
fn parse_matrix(text: &str, dim: usize) -> Result<Operator> {
    let rows: Vec<Vec<C64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|z| z.parse::<C64>().map_err(|_| ConfigError(format!("rho0_file: bad entry '{z}'"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return err(format!("rho0_file must hold a {dim}x{dim} matrix"));
    }
    Ok(Operator::from_fn(dim, dim, |i, j| rows[i][j]))
}
