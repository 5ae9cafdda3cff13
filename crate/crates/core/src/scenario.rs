//! Scenario configuration, presets and run orchestration.
//!
//! Config files are TOML with five sections (`atom`, `ensemble`, `chirality`,
//! `run`, `io`). Every dimensional key carries its unit in the name
//! (`*_mhz`, `*_us`, `*_gauss`); frequencies are ordinary MHz and are turned
//! into rad/s here and nowhere else. `atom.omega_s_mhz` and `atom.od0` are
//! full-coupling values; the directional overlap scales them per direction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cascade::{propagate, quasi_steady_average, uniform_grid, EnsembleConfig, TransmissionTrace};
use crate::chiral::{
    offset_for_resonance, resolve_scenario, Direction, DirectionalOverlap, FieldEnvironment, Spin,
    SpinPreparation,
};
use crate::error::{Error, Result};
use crate::lambda::{mhz, to_mhz, LambdaParams};
use crate::ode::AdaptiveOptions;
use crate::output::{dynamics_table, read_spectrum_path, spectrum_table, CsvTable};
use crate::spectroscopy::{
    fit_spectrum, resonance_separation, scan_spectrum, FitConfig, ScanMode, ScanScenario, SpectrumFit,
};

pub const TOOL_NAME: &str = "raman-chiral";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Dynamics,
    Scan,
    Fit,
    Bidirectional,
}

/// How scan points are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Analytic,
    Cascade,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(EvalMode::Analytic),
            "cascade" => Ok(EvalMode::Cascade),
            _ => Err(validation("run.scan_mode", format!("`{s}` is not analytic or cascade"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_s_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_p_mhz: Option<f64>,
    /// Signed one-photon detuning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_ab_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub od0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_b: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_start_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pump_on_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiralitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spin: Option<SpinPreparation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_gauss: Option<f64>,
    /// TLS curvature C in E(m_F) = C m_F².
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tls_coefficient_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_minus: Option<f64>,
    /// Λ system the signal detuning refers to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned_to: Option<Spin>,
    /// δ + δ_LS of the `tuned_to` system for dynamics runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dressed_detuning_mhz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    /// Averaging window [t1, t2].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_us: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_start_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_end_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_mode: Option<EvalMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_center: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_delta_guess_mhz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Spectrum CSV for fit runs, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_input: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub atom: AtomSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub chirality: ChiralitySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub io: IoSection,
}

fn validation(key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigValidation {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| validation(key, "missing required key"))
}

fn parse_error(src: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &src[..span.start.min(src.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::ConfigParse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

impl ScenarioConfig {
    /// Parses a config document, or the `scenario` table of a run manifest.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(src).map_err(|e| parse_error(src, &e))?;
        if table.contains_key("manifest") {
            let m: Manifest = toml::from_str(src).map_err(|e| parse_error(src, &e))?;
            return Ok(m.scenario);
        }
        toml::from_str(src).map_err(|e| parse_error(src, &e))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with defaults filled in. Keys that do not apply to the run mode
    /// stay absent.
    pub fn normalized(&self) -> Result<Self> {
        let mut c = self.clone();
        let a = &mut c.atom;
        match (a.branch_a, a.branch_b) {
            (None, None) => {
                a.branch_a = Some(0.5);
                a.branch_b = Some(0.5);
            }
            (Some(x), None) => a.branch_b = Some(1.0 - x),
            (None, Some(y)) => a.branch_a = Some(1.0 - y),
            _ => {}
        }
        for (v, key) in [
            (a.omega_s_mhz, "atom.omega_s_mhz"),
            (a.omega_p_mhz, "atom.omega_p_mhz"),
            (a.delta_mhz, "atom.delta_mhz"),
            (a.gamma_e_mhz, "atom.gamma_e_mhz"),
            (a.gamma_ab_mhz, "atom.gamma_ab_mhz"),
            (a.od0, "atom.od0"),
        ] {
            required(v, key)?;
        }
        let delta = a.delta_mhz;

        let e = &mut c.ensemble;
        required(e.n_atoms, "ensemble.n_atoms")?;
        e.t_start_us.get_or_insert(-1.0);
        e.t_end_us.get_or_insert(15.0);
        e.dt_us.get_or_insert(0.002);
        e.pump_on_us.get_or_insert(0.0);
        e.rtol.get_or_insert(1e-8);
        e.atol.get_or_insert(1e-10);

        let ch = &mut c.chirality;
        let spin = required(ch.spin, "chirality.spin")?;
        ch.b_gauss.get_or_insert(0.0);
        ch.tls_coefficient_mhz.get_or_insert(0.0);
        ch.f_minus.get_or_insert(0.92);
        ch.tuned_to.get_or_insert(match spin {
            SpinPreparation::Plus4 => Spin::Plus4,
            _ => Spin::Minus4,
        });
        ch.dressed_detuning_mhz.get_or_insert(0.0);

        let r = &mut c.run;
        let mode = required(r.mode, "run.mode")?;
        r.window_us.get_or_insert([0.7, 1.2]);
        match mode {
            RunMode::Scan => {
                required(r.scan_start_mhz, "run.scan_start_mhz")?;
                required(r.scan_end_mhz, "run.scan_end_mhz")?;
                required(r.scan_points, "run.scan_points")?;
                r.scan_mode.get_or_insert(EvalMode::Analytic);
            }
            RunMode::Fit => {
                r.free_center.get_or_insert(true);
                r.fit_delta_guess_mhz = r.fit_delta_guess_mhz.or(delta);
                if c.io.fit_input.is_none() {
                    return Err(validation("io.fit_input", "fit runs need an input spectrum"));
                }
            }
            RunMode::Dynamics | RunMode::Bidirectional => {}
        }
        c.io.output.get_or_insert_with(|| "out.csv".to_string());
        Ok(c)
    }

    /// Validates and converts to simulation units.
    pub fn resolve(&self) -> Result<Scenario> {
        let c = self.normalized()?;
        let (a, e, ch, r) = (&c.atom, &c.ensemble, &c.chirality, &c.run);
        let base = LambdaParams {
            omega_s: mhz(a.omega_s_mhz.unwrap()),
            omega_p: mhz(a.omega_p_mhz.unwrap()),
            delta: mhz(a.delta_mhz.unwrap()),
            delta_two_photon: 0.0,
            gamma_e: mhz(a.gamma_e_mhz.unwrap()),
            gamma_ab: mhz(a.gamma_ab_mhz.unwrap()),
            od0: a.od0.unwrap(),
            branch_a: a.branch_a.unwrap(),
            branch_b: a.branch_b.unwrap(),
        };
        base.validate().map_err(|err| match err {
            Error::InvalidParameter { name, reason } => {
                let key = match name {
                    "od0" | "branch_a" | "branch_b" => format!("atom.{name}"),
                    other => format!("atom.{other}_mhz"),
                };
                validation(&key, reason)
            }
            other => other,
        })?;

        let (t0, t1, dt) = (e.t_start_us.unwrap(), e.t_end_us.unwrap(), e.dt_us.unwrap());
        if !(dt > 0.0) || !(t1 > t0) {
            return Err(validation("ensemble.dt_us", "need dt_us > 0 and t_end_us > t_start_us"));
        }
        let times = uniform_grid(t0 * 1e-6, t1 * 1e-6, dt * 1e-6)
            .map_err(|_| validation("ensemble.dt_us", "grid span must be a multiple of dt_us"))?;
        let (rtol, atol) = (e.rtol.unwrap(), e.atol.unwrap());
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(validation("ensemble.rtol", "tolerances must be > 0"));
        }
        let pump_on = e.pump_on_us.unwrap() * 1e-6;
        if !pump_on.is_finite() {
            return Err(validation("ensemble.pump_on_us", "must be finite"));
        }

        let f_minus = ch.f_minus.unwrap();
        let overlap = DirectionalOverlap::new(f_minus).map_err(|_| validation("chirality.f_minus", "must lie in [0, 1]"))?;
        let env = FieldEnvironment {
            b_gauss: ch.b_gauss.unwrap(),
            tls_coefficient: mhz(ch.tls_coefficient_mhz.unwrap()),
        };
        if !(env.b_gauss >= 0.0) {
            return Err(validation("chirality.b_gauss", "must be >= 0"));
        }
        if !(env.tls_coefficient >= 0.0) {
            return Err(validation("chirality.tls_coefficient_mhz", "must be >= 0"));
        }

        let window = (r.window_us.unwrap()[0] * 1e-6, r.window_us.unwrap()[1] * 1e-6);
        if !(window.1 >= window.0) {
            return Err(validation("run.window_us", "need t1 <= t2"));
        }
        let mode = r.mode.unwrap();
        let needs_window = mode == RunMode::Bidirectional
            || (mode == RunMode::Scan && r.scan_mode == Some(EvalMode::Cascade));
        if needs_window && (window.0 < times[0] || window.1 > *times.last().unwrap()) {
            return Err(validation("run.window_us", "window must lie within the time grid"));
        }
        let scan = if mode == RunMode::Scan {
            let (s0, s1, n) = (r.scan_start_mhz.unwrap(), r.scan_end_mhz.unwrap(), r.scan_points.unwrap());
            if n < 2 || !(s1 > s0) {
                return Err(validation("run.scan_points", "need scan_points >= 2 and scan_end_mhz > scan_start_mhz"));
            }
            Some(ScanRange { start: mhz(s0), end: mhz(s1), points: n })
        } else {
            None
        };

        Ok(Scenario {
            base,
            n_atoms: e.n_atoms.unwrap(),
            times,
            pump_on,
            ode: AdaptiveOptions::with_tolerances(rtol, atol),
            spin: ch.spin.unwrap(),
            env,
            overlap,
            tuned_to: ch.tuned_to.unwrap(),
            dressed_detuning: mhz(ch.dressed_detuning_mhz.unwrap()),
            mode,
            window,
            scan,
            eval_mode: r.scan_mode.unwrap_or(EvalMode::Analytic),
            free_center: r.free_center.unwrap_or(true),
            fit_delta_guess: r.fit_delta_guess_mhz.map(mhz),
            output: PathBuf::from(c.io.output.clone().unwrap()),
            fit_input: c.io.fit_input.as_ref().map(PathBuf::from),
            config: c,
        })
    }
}

/// Reads and validates a config file (or a run manifest). A relative
/// `io.fit_input` is taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path)?;
    let mut sc = ScenarioConfig::from_toml_str(&src)?.resolve()?;
    if let (Some(input), Some(dir)) = (&sc.fit_input, path.parent()) {
        if input.is_relative() {
            sc.fit_input = Some(dir.join(input));
        }
    }
    Ok(sc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRange {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

/// A validated scenario in simulation units (rad/s, s).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Normalized config this scenario was resolved from.
    pub config: ScenarioConfig,
    /// Full-coupling parameters; `delta_two_photon` is set per run.
    pub base: LambdaParams,
    pub n_atoms: usize,
    pub times: Vec<f64>,
    pub pump_on: f64,
    pub ode: AdaptiveOptions,
    pub spin: SpinPreparation,
    pub env: FieldEnvironment,
    pub overlap: DirectionalOverlap,
    pub tuned_to: Spin,
    pub dressed_detuning: f64,
    pub mode: RunMode,
    pub window: (f64, f64),
    pub scan: Option<ScanRange>,
    pub eval_mode: EvalMode,
    pub free_center: bool,
    pub fit_delta_guess: Option<f64>,
    pub output: PathBuf,
    pub fit_input: Option<PathBuf>,
}

impl Scenario {
    /// Bare two-photon offset that puts `tuned_to` at `dressed_detuning`.
    pub fn signal_offset(&self) -> f64 {
        offset_for_resonance(self.tuned_to, &self.env, &self.base, self.dressed_detuning)
    }

    pub fn effective(&self, dir: Direction) -> Result<Vec<(f64, LambdaParams)>> {
        resolve_scenario(self.spin, dir, &self.env, &self.base, &self.overlap, self.signal_offset())
    }

    pub fn ensemble(&self, dir: Direction) -> Result<EnsembleConfig> {
        let mut cfg = EnsembleConfig::from_species(&self.effective(dir)?, self.n_atoms, dir, self.times.clone());
        cfg.pump_on = self.pump_on;
        cfg.ode = self.ode;
        Ok(cfg)
    }

    pub fn scan_scenario(&self, dir: Direction) -> ScanScenario {
        ScanScenario {
            base: self.base,
            spin: self.spin,
            direction: dir,
            env: self.env,
            overlap: self.overlap,
            n_atoms: self.n_atoms,
        }
    }

    pub fn scan_mode(&self) -> ScanMode {
        match self.eval_mode {
            EvalMode::Analytic => ScanMode::Analytic,
            EvalMode::Cascade => ScanMode::Cascade {
                times: self.times.clone(),
                window: self.window,
                ode: self.ode,
            },
        }
    }

    /// Propagates both directions concurrently.
    pub fn propagate_both(&self) -> Result<(TransmissionTrace, TransmissionTrace)> {
        let fwd = self.ensemble(Direction::Forward)?;
        let bwd = self.ensemble(Direction::Backward)?;
        let (a, b) = rayon::join(|| propagate(&fwd), || propagate(&bwd));
        Ok((a?, b?))
    }
}

/// Effective parameters of one species in one direction, in config units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveEntry {
    pub direction: Direction,
    pub weight: f64,
    pub omega_s_mhz: f64,
    pub omega_p_mhz: f64,
    pub delta_mhz: f64,
    pub delta_two_photon_mhz: f64,
    pub dressed_detuning_mhz: f64,
    pub gamma_e_mhz: f64,
    pub gamma_ab_mhz: f64,
    pub od0: f64,
    pub branch_a: f64,
    pub branch_b: f64,
}

impl EffectiveEntry {
    fn new(direction: Direction, weight: f64, p: &LambdaParams) -> Self {
        Self {
            direction,
            weight,
            omega_s_mhz: to_mhz(p.omega_s),
            omega_p_mhz: to_mhz(p.omega_p),
            delta_mhz: to_mhz(p.delta),
            delta_two_photon_mhz: to_mhz(p.delta_two_photon),
            dressed_detuning_mhz: to_mhz(p.dressed_detuning()),
            gamma_e_mhz: to_mhz(p.gamma_e),
            gamma_ab_mhz: to_mhz(p.gamma_ab),
            od0: p.od0,
            branch_a: p.branch_a,
            branch_b: p.branch_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub tool: String,
    pub version: String,
    pub run: String,
    pub mode: RunMode,
    pub wall_time_s: f64,
    pub results: BTreeMap<String, f64>,
    pub effective: Vec<EffectiveEntry>,
}

/// Run record: what was run, with what, and the headline numbers. The
/// `scenario` table is a complete config that reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest: ManifestInfo,
    pub scenario: ScenarioConfig,
}

impl Manifest {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub name: String,
    pub table: CsvTable,
    pub manifest: Manifest,
    pub fit: Option<SpectrumFit>,
}

impl RunArtifact {
    /// Writes `<stem>.csv` and `<stem>.manifest.toml` next to `csv_path`.
    pub fn write(&self, csv_path: &Path) -> Result<PathBuf> {
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.table.write_path(csv_path)?;
        let manifest_path = csv_path.with_extension("manifest.toml");
        std::fs::write(&manifest_path, self.manifest.to_toml_string())?;
        Ok(manifest_path)
    }
}

/// Runs a scenario in its configured mode.
pub fn run(sc: &Scenario, name: &str) -> Result<RunArtifact> {
    let start = Instant::now();
    let mut results = BTreeMap::new();
    let mut fit = None;
    let table = match sc.mode {
        RunMode::Dynamics | RunMode::Bidirectional => {
            let (fwd, bwd) = sc.propagate_both()?;
            for (tag, tr) in [("12", &fwd), ("21", &bwd)] {
                if let Some((t, v)) = tr.peak() {
                    results.insert(format!("peak_T_{tag}"), v);
                    results.insert(format!("t_peak_{tag}_us"), t * 1e6);
                }
                if let Some(t) = tr.first_crossing_after_peak(1.0) {
                    results.insert(format!("gain_until_{tag}_us"), t * 1e6);
                }
                let window_in_span = sc.window.0 >= sc.times[0] && sc.window.1 <= *sc.times.last().unwrap();
                if sc.mode == RunMode::Bidirectional || window_in_span {
                    results.insert(format!("window_T_{tag}"), quasi_steady_average(tr, sc.window.0, sc.window.1)?);
                }
            }
            dynamics_table(&fwd.times, &fwd.transmission, &bwd.transmission)
        }
        RunMode::Scan => {
            let range = sc.scan.expect("scan range validated");
            let mode = sc.scan_mode();
            let (a, b) = rayon::join(
                || scan_spectrum(&sc.scan_scenario(Direction::Forward), (range.start, range.end), range.points, &mode),
                || scan_spectrum(&sc.scan_scenario(Direction::Backward), (range.start, range.end), range.points, &mode),
            );
            let (a, b) = (a?, b?);
            for (tag, s) in [("12", &a), ("21", &b)] {
                let imin = (0..s.len()).fold(0, |m, i| if s.transmission[i] < s.transmission[m] { i } else { m });
                results.insert(format!("min_T_ss_{tag}"), s.transmission[imin]);
                results.insert(format!("delta_at_min_{tag}_mhz"), to_mhz(s.detunings[imin]));
            }
            spectrum_table(&a.detunings, &a.transmission, &b.transmission)
        }
        RunMode::Fit => {
            let path = sc.fit_input.as_ref().expect("fit input validated");
            let spectrum = read_spectrum_path(path)?;
            let f = fit_spectrum(&spectrum, &sc.fit_config())?;
            let table = fit_table(&f);
            results.insert("gamma_ab_mhz".into(), to_mhz(f.params.gamma_ab));
            results.insert("od".into(), f.params.od);
            results.insert("delta_mhz".into(), to_mhz(f.params.delta));
            results.insert("resonance_mhz".into(), to_mhz(f.resonance()));
            results.insert("residual_norm".into(), f.residual_norm);
            results.insert("converged".into(), f64::from(u8::from(f.converged)));
            results.insert("degenerate".into(), f64::from(u8::from(f.degenerate)));
            fit = Some(f);
            table
        }
    };
    let mut effective = Vec::new();
    for dir in [Direction::Forward, Direction::Backward] {
        for (w, p) in sc.effective(dir)? {
            effective.push(EffectiveEntry::new(dir, w, &p));
        }
    }
    Ok(RunArtifact {
        name: name.to_string(),
        table,
        manifest: Manifest {
            manifest: ManifestInfo {
                tool: TOOL_NAME.to_string(),
                version: TOOL_VERSION.to_string(),
                run: name.to_string(),
                mode: sc.mode,
                wall_time_s: start.elapsed().as_secs_f64(),
                results,
                effective,
            },
            scenario: sc.config.clone(),
        },
        fit,
    })
}

impl Scenario {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            free_center: self.free_center,
            ..FitConfig::new(self.base.omega_p, self.base.gamma_e, self.fit_delta_guess.unwrap_or(self.base.delta))
        }
    }
}

fn fit_table(f: &SpectrumFit) -> CsvTable {
    let mut t = CsvTable::new(&["parameter", "value", "std_error"]);
    let err = f.std_errors();
    let e = |i: usize, scale: f64| {
        err.as_ref()
            .and_then(|v| v.get(i))
            .map_or(String::new(), |v| crate::output::fmt_sig(v * scale))
    };
    let per_mhz = 1.0 / mhz(1.0);
    let rows = [
        ("gamma_ab_MHz", to_mhz(f.params.gamma_ab), e(0, per_mhz)),
        ("OD", f.params.od, e(1, 1.0)),
        ("delta_MHz", to_mhz(f.params.delta), e(2, per_mhz)),
        ("resonance_MHz", to_mhz(f.resonance()), e(3, per_mhz)),
    ];
    for (name, v, se) in rows {
        t.rows.push(vec![name.to_string(), crate::output::fmt_sig(v), se]);
    }
    t
}

pub const PRESET_NAMES: [&str; 7] = [
    "fig2b-dynamics",
    "figS2-longtime",
    "fig2cd-bars",
    "fig3b-tls",
    "specscan-7G",
    "specscan-B0",
    "bidirectional",
];

/// Overlap fraction of the σ⁻ component for 1→2 in the presets.
const PRESET_F_MINUS: f64 = 0.92;
/// Residual field from the 7.29 G resonance separation.
const PRESET_B_GAUSS: f64 = 7.29;

/// Reference atom model used by all presets. Signal Rabi frequency 0.95 MHz
/// and OD 0.0131 are the forward (σ⁻, 92 %) values; the stored base values
/// are the full-coupling ones.
pub fn reference_atom() -> AtomSection {
    AtomSection {
        omega_s_mhz: Some(0.95 / PRESET_F_MINUS.sqrt()),
        omega_p_mhz: Some(20.7),
        delta_mhz: Some(-82.0),
        gamma_e_mhz: Some(5.225),
        gamma_ab_mhz: Some(0.29),
        od0: Some(0.0131 / PRESET_F_MINUS),
        branch_a: Some(0.5),
        branch_b: Some(0.5),
    }
}

fn preset_base(spin: SpinPreparation, mode: RunMode) -> ScenarioConfig {
    ScenarioConfig {
        atom: reference_atom(),
        ensemble: EnsembleSection {
            n_atoms: Some(1420),
            ..Default::default()
        },
        chirality: ChiralitySection {
            spin: Some(spin),
            b_gauss: Some(PRESET_B_GAUSS),
            f_minus: Some(PRESET_F_MINUS),
            ..Default::default()
        },
        run: RunSection {
            mode: Some(mode),
            ..Default::default()
        },
        io: IoSection::default(),
    }
}

fn tls_on(mut c: ScenarioConfig) -> ScenarioConfig {
    c.chirality.b_gauss = Some(0.0);
    c.chirality.tls_coefficient_mhz = Some(2.0 / 7.0);
    c
}

fn short_window(mut c: ScenarioConfig) -> ScenarioConfig {
    c.ensemble.t_end_us = Some(2.0);
    c.run.window_us = Some([0.7, 1.2]);
    c
}

fn scan(mut c: ScenarioConfig, start: f64, end: f64, points: usize) -> ScenarioConfig {
    c.run.scan_start_mhz = Some(start);
    c.run.scan_end_mhz = Some(end);
    c.run.scan_points = Some(points);
    c.run.scan_mode = Some(EvalMode::Analytic);
    c
}

/// Named sub-runs of a preset.
pub fn preset(name: &str) -> Result<Vec<(String, ScenarioConfig)>> {
    use RunMode::*;
    use SpinPreparation::*;
    let runs = match name {
        "fig2b-dynamics" | "fig2b" => vec![("fig2b-dynamics".into(), preset_base(Minus4, Dynamics))],
        "figS2-longtime" => {
            let mut c = preset_base(Minus4, Bidirectional);
            c.ensemble.t_end_us = Some(50.0);
            c.run.window_us = Some([20.0, 50.0]);
            vec![("figS2-longtime".into(), c)]
        }
        "fig2cd-bars" => vec![
            ("fig2cd-bars-spin-4".into(), short_window(preset_base(Minus4, Bidirectional))),
            ("fig2cd-bars-spin+4".into(), short_window(preset_base(Plus4, Bidirectional))),
        ],
        "fig3b-tls" => [("spin-4", Minus4), ("spin+4", Plus4), ("mixture", Mixture)]
            .into_iter()
            .map(|(tag, s)| {
                let mut c = short_window(tls_on(preset_base(s, Bidirectional)));
                c.chirality.tuned_to = Some(Spin::Minus4);
                (format!("fig3b-tls-{tag}"), c)
            })
            .collect(),
        "specscan-7G" => [("spin-4", Minus4), ("spin+4", Plus4)]
            .into_iter()
            .map(|(tag, s)| {
                let mut c = scan(preset_base(s, Scan), -5.0, 41.0, 4601);
                c.atom.gamma_ab_mhz = Some(0.47);
                (format!("specscan-7G-{tag}"), c)
            })
            .collect(),
        "specscan-B0" => [("spin-4", Minus4, 3.4), ("spin+4", Plus4, 2.6)]
            .into_iter()
            .map(|(tag, s, g)| {
                let mut c = scan(tls_on(preset_base(s, Scan)), -15.0, 15.0, 3001);
                c.atom.gamma_ab_mhz = Some(g);
                (format!("specscan-B0-{tag}"), c)
            })
            .collect(),
        "bidirectional" => vec![("bidirectional".into(), preset_base(Minus4, Bidirectional))],
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(runs)
}

/// All sub-runs of a preset plus cross-run results.
#[derive(Debug, Clone)]
pub struct PresetArtifact {
    pub name: String,
    pub runs: Vec<RunArtifact>,
    pub summary: BTreeMap<String, f64>,
}

impl PresetArtifact {
    /// Writes every run into `dir` plus `<preset>.summary.toml`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for r in &self.runs {
            let csv = dir.join(format!("{}.csv", r.name));
            let m = r.write(&csv)?;
            written.push(csv);
            written.push(m);
        }
        let summary_path = dir.join(format!("{}.summary.toml", self.name));
        let mut doc = BTreeMap::new();
        doc.insert("summary", &self.summary);
        std::fs::write(&summary_path, toml::to_string(&doc).expect("summary serializes"))?;
        written.push(summary_path);
        Ok(written)
    }
}

/// Runs a preset. `eval_mode` overrides the scan evaluation mode.
pub fn run_preset(name: &str, eval_mode: Option<EvalMode>) -> Result<PresetArtifact> {
    let mut runs = Vec::new();
    for (run_name, mut cfg) in preset(name)? {
        if let (Some(m), Some(RunMode::Scan)) = (eval_mode, cfg.run.mode) {
            cfg.run.scan_mode = Some(m);
        }
        runs.push(run(&cfg.resolve()?, &run_name)?);
    }
    let mut summary = BTreeMap::new();
    let result = |r: &RunArtifact, key: &str| r.manifest.manifest.results.get(key).copied();
    match name {
        "specscan-7G" | "specscan-B0" => {
            // fit the forward spectrum of each spin and compare resonances
            let mut fits = Vec::new();
            for (r, (_, cfg)) in runs.iter().zip(preset(name)?) {
                let sc = cfg.resolve()?;
                let s = crate::output::read_spectrum(spectrum_12_as_csv(&r.table)?.as_bytes())?;
                let f = fit_spectrum(&s, &sc.fit_config())?;
                summary.insert(format!("{}.resonance_mhz", r.name), to_mhz(f.resonance()));
                summary.insert(format!("{}.gamma_ab_mhz", r.name), to_mhz(f.params.gamma_ab));
                fits.push(f);
            }
            let (sep, b) = resonance_separation(&fits[0], &fits[1])?;
            summary.insert("separation_mhz".into(), to_mhz(sep));
            summary.insert("inferred_b_gauss".into(), b);
        }
        _ => {
            for r in &runs {
                for key in ["peak_T_12", "peak_T_21", "window_T_12", "window_T_21"] {
                    if let Some(v) = result(r, key) {
                        summary.insert(format!("{}.{key}", r.name), v);
                    }
                }
            }
        }
    }
    Ok(PresetArtifact {
        name: name.to_string(),
        runs,
        summary,
    })
}

/// Re-labels the forward column of a spectrum table as a fit input.
fn spectrum_12_as_csv(t: &CsvTable) -> Result<String> {
    let mut out = CsvTable::new(&["delta_MHz", "T"]);
    for r in &t.rows {
        out.rows.push(vec![r[0].clone(), r[1].clone()]);
    }
    out.to_string()
}
