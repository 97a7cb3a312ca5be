//! Scenario files, the `run` / `sweep` / `ladder` commands and their outputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::engine::{ladder, ladder_holds, run, sweep_csv, sweep_rtt, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{coverage_csv, coverage_sweep, NtnGeometry, Payload};
use crate::protocol::{CollisionModel, CorrectionMode, CorrectionStrategy, FixFlags, Stage};
use crate::raconfig::{PrachTable, PreambleFormat, TimerMode};
use crate::timing::{Duration, Standard};

/// Overrides the default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "NTN_RACH_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    ProtocolFailure = 2,
    InvariantViolation = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::Contract(_) => ExitStatus::InvariantViolation,
            _ => ExitStatus::ConfigError,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub system: SystemSection,
    #[serde(default)]
    pub ntn: NtnSection,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub sim: SimSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub standard: Standard,
    pub prach_index: u32,
    #[serde(default)]
    pub mu: u8,
    pub preamble_format: Option<u8>,
    /// PRACH table file, relative to the scenario file.
    pub prach_table: Option<PathBuf>,
    #[serde(default)]
    pub contention_free: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NtnSection {
    pub altitude_km: Option<f64>,
    pub rtt_ms: Option<f64>,
    pub payload: Payload,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub cell_rtt_ms: Option<f64>,
    pub gnss_error_ms: f64,
}

impl Default for NtnSection {
    fn default() -> Self {
        Self {
            altitude_km: None,
            rtt_ms: None,
            payload: Payload::Regenerative,
            alpha_min: 10.0,
            alpha_max: 90.0,
            cell_rtt_ms: None,
            gnss_error_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub mode: CorrectionMode,
    /// Defaults to every fix for SF-level modes and none otherwise.
    pub fix_flags: Option<FixFlags>,
    pub timer_mode: Option<TimerMode>,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self { mode: CorrectionMode::NoCorrection, fix_flags: None, timer_mode: None }
    }
}

impl StrategySection {
    pub fn strategy(&self) -> CorrectionStrategy {
        let mut s = CorrectionStrategy::for_mode(self.mode);
        if let Some(f) = self.fix_flags {
            s.fix_flags = f;
        }
        if let Some(t) = self.timer_mode {
            s.timer_mode = t;
        }
        s
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub seed: u64,
    pub n_ues: u32,
    pub max_time_ms: f64,
    pub processing_ms: f64,
    pub grant_offset_sf: u32,
    pub harq_max: u32,
    pub backoff_max_ms: f64,
    pub extended_timers: bool,
    pub force_same_preamble: bool,
    pub collision_model: CollisionModel,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            seed: 1,
            n_ues: 1,
            max_time_ms: 4000.0,
            processing_ms: 4.0,
            grant_offset_sf: 4,
            harq_max: 4,
            backoff_max_ms: 20.0,
            extended_timers: true,
            force_same_preamble: false,
            collision_model: CollisionModel::Undetected,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub rtt_ms: Option<Vec<f64>>,
    pub altitude_km: Option<Vec<f64>>,
    /// Strategies compared in an RTT sweep; the scenario's own when absent.
    pub strategies: Option<Vec<CorrectionMode>>,
    /// Far-edge elevations for a coverage sweep.
    pub coverage_alpha_min_deg: Option<Vec<f64>>,
    pub formats: Option<Vec<u8>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_owned(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_owned(),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)?;
        let file = Self::parse(&text, &path.display().to_string())?;
        Ok((file, path.parent().map(Path::to_path_buf).unwrap_or_default()))
    }

    pub fn geometry(&self, altitude_km: f64) -> Result<NtnGeometry> {
        let g = NtnGeometry {
            alpha_min: self.ntn.alpha_min,
            alpha_max: self.ntn.alpha_max,
            ..NtnGeometry::new(altitude_km, self.ntn.payload)
        };
        if !g.is_valid() {
            return Err(Error::Config(format!(
                "invalid geometry: altitude {altitude_km} km, elevation {}..{} deg",
                g.alpha_min, g.alpha_max
            )));
        }
        Ok(g)
    }

    /// Round trip of a UE at `alpha_max` under the platform at `altitude_km`.
    pub fn rtt_for_altitude(&self, altitude_km: f64) -> Result<Duration> {
        let g = self.geometry(altitude_km)?;
        Duration::from_secs_f64(g.rtt_at(g.alpha_max))
    }

    fn rtt(&self) -> Result<Duration> {
        match (self.ntn.altitude_km, self.ntn.rtt_ms) {
            (Some(h), None) => self.rtt_for_altitude(h),
            (None, Some(r)) => Duration::from_ms_f64(r),
            (Some(_), Some(_)) => Err(Error::Config("[ntn] takes altitude_km or rtt_ms, not both".into())),
            (None, None) => Err(Error::Config("[ntn] needs altitude_km or rtt_ms".into())),
        }
    }

    /// Builds the engine scenario; `base_dir` resolves a relative table path.
    pub fn scenario(&self, base_dir: &Path) -> Result<Scenario> {
        let rtt = self.rtt()?;
        let mut s = Scenario::new(self.strategy.strategy(), rtt);
        s.standard = self.system.standard;
        s.mu = self.system.mu;
        s.prach_index = self.system.prach_index;
        s.prach_table = match &self.system.prach_table {
            Some(p) => Some(PrachTable::load(&base_dir.join(p))?),
            None => None,
        };
        s.preamble_format = self.system.preamble_format.map(PreambleFormat::new).transpose()?;
        s.contention_free = self.system.contention_free;
        s.cell_rtt = self.ntn.cell_rtt_ms.map(Duration::from_ms_f64).transpose()?;
        s.payload = self.ntn.payload;
        s.gnss_error = (self.ntn.gnss_error_ms * crate::timing::SAMPLES_PER_MS as f64).round() as i64;
        s.n_ues = self.sim.n_ues;
        s.seed = self.sim.seed;
        s.max_time = Duration::from_ms_f64(self.sim.max_time_ms)?;
        s.processing = Duration::from_ms_f64(self.sim.processing_ms)?;
        s.grant_offset_sf = self.sim.grant_offset_sf;
        s.harq_max = self.sim.harq_max;
        s.backoff_max = Duration::from_ms_f64(self.sim.backoff_max_ms)?;
        s.extended_timers = self.sim.extended_timers;
        s.force_same_preamble = self.sim.force_same_preamble;
        s.collision_model = self.sim.collision_model;
        s.validate()?;
        s.setup()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trace: bool,
    pub plot: bool,
    /// Keep stdout silent; files and errors are unaffected.
    pub quiet: bool,
}

macro_rules! say {
    ($opts:expr, $($arg:tt)*) => {
        if !$opts.quiet {
            println!($($arg)*);
        }
    };
}

impl Options {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, contents)?;
    Ok(p)
}

fn load_scenario(path: &Path, opts: &Options) -> Result<(ScenarioFile, Scenario)> {
    let (file, dir) = ScenarioFile::load(path)?;
    let mut s = file.scenario(&dir)?;
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    Ok((file, s))
}

fn report(e: &Error) -> ExitStatus {
    eprintln!("error: {e}");
    ExitStatus::from_error(e)
}

pub fn cmd_run(scenario_path: &Path, opts: &Options) -> ExitStatus {
    match try_run(scenario_path, opts) {
        Ok(s) => s,
        Err(e) => report(&e),
    }
}

fn try_run(path: &Path, opts: &Options) -> Result<ExitStatus> {
    let (_, scenario) = load_scenario(path, opts)?;
    let r = run(&scenario)?;
    let dir = opts.out_dir();
    let name = stem(path);
    let kpi = write_out(&dir, &format!("{name}_kpi.csv"), &r.kpi_csv())?;
    say!(opts, "kpi: {}", kpi.display());
    if opts.trace {
        let t = write_out(&dir, &format!("{name}_trace.csv"), &r.trace_csv())?;
        say!(opts, "trace: {}", t.display());
    }
    for u in &r.ues {
        let access = u.access_time.map_or("-".into(), |a| format!("{:.3} ms", a.as_ms_f64()));
        say!(opts, "ue{} access {access} stage {} retries {}", u.ue, u.furthest_stage, u.retries);
    }
    Ok(if r.all_connected() { ExitStatus::Success } else { ExitStatus::ProtocolFailure })
}

pub fn cmd_sweep(scenario_path: &Path, opts: &Options) -> ExitStatus {
    match try_sweep(scenario_path, opts) {
        Ok(s) => s,
        Err(e) => report(&e),
    }
}

fn try_sweep(path: &Path, opts: &Options) -> Result<ExitStatus> {
    let (file, scenario) = load_scenario(path, opts)?;
    let sweep = file.sweep.clone().ok_or_else(|| Error::Config("scenario has no [sweep] section".into()))?;
    let dir = opts.out_dir();
    let name = stem(path);

    if let Some(alphas) = &sweep.coverage_alpha_min_deg {
        if alphas.is_empty() {
            return Err(Error::Config("empty coverage sweep list".into()));
        }
        let h = file.ntn.altitude_km.ok_or_else(|| Error::Config("coverage sweep needs [ntn] altitude_km".into()))?;
        let formats = match &sweep.formats {
            Some(f) => f.iter().map(|&i| PreambleFormat::new(i)).collect::<Result<Vec<_>>>()?,
            None => PreambleFormat::ALL.to_vec(),
        };
        let g = file.geometry(h)?;
        let points = coverage_sweep(&g, scenario.standard, &formats, alphas);
        let csv = write_out(&dir, &format!("{name}_coverage.csv"), &coverage_csv(&points))?;
        say!(opts, "coverage: {}", csv.display());
        if opts.plot {
            let gp = write_out(&dir, &format!("{name}_coverage.gp"), &coverage_plot(&name, &formats))?;
            say!(opts, "plot: {}", gp.display());
        }
        return Ok(ExitStatus::Success);
    }

    let rtts: Vec<Duration> = match (&sweep.rtt_ms, &sweep.altitude_km) {
        (Some(r), None) => r.iter().map(|&v| Duration::from_ms_f64(v)).collect::<Result<_>>()?,
        (None, Some(h)) => h.iter().map(|&v| file.rtt_for_altitude(v)).collect::<Result<_>>()?,
        _ => {
            return Err(Error::Config(
                "[sweep] needs exactly one of rtt_ms, altitude_km, coverage_alpha_min_deg".into(),
            ))
        }
    };
    if rtts.is_empty() {
        return Err(Error::Config("empty sweep list".into()));
    }
    let strategies: Vec<CorrectionStrategy> = match &sweep.strategies {
        Some(modes) if !modes.is_empty() => modes.iter().map(|&m| CorrectionStrategy::for_mode(m)).collect(),
        Some(_) => return Err(Error::Config("empty strategy list".into())),
        None => vec![scenario.strategy],
    };
    let points = sweep_rtt(&scenario, &rtts, &strategies)?;
    let csv = write_out(&dir, &format!("{name}_sweep.csv"), &sweep_csv(&points))?;
    say!(opts, "sweep: {}", csv.display());
    if opts.plot {
        let modes: Vec<CorrectionMode> = strategies.iter().map(|s| s.mode).collect();
        let gp = write_out(&dir, &format!("{name}_sweep.gp"), &sweep_plot(&name, &modes))?;
        say!(opts, "plot: {}", gp.display());
    }
    for p in &points {
        let access = p.access_time.map_or("-".into(), |a| format!("{:.3}", a.as_ms_f64()));
        say!(opts, "{:>9.3} ms {:<15} {access}", p.rtt.as_ms_f64(), p.mode.to_string());
    }
    Ok(if points.iter().all(|p| p.access_time.is_some()) { ExitStatus::Success } else { ExitStatus::ProtocolFailure })
}

fn sweep_plot(name: &str, modes: &[CorrectionMode]) -> String {
    let plots: Vec<String> = modes
        .iter()
        .map(|m| format!("'{name}_sweep.csv' using ($2 eq \"{m}\" ? $1 : 1/0):3 with linespoints title '{m}'"))
        .collect();
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'RTT [ms]'\nset ylabel 'access time [ms]'\nplot {}\n",
        plots.join(", \\\n     ")
    )
}

fn coverage_plot(name: &str, formats: &[PreambleFormat]) -> String {
    let plots: Vec<String> = formats
        .iter()
        .map(|f| format!("'{name}_coverage.csv' using ($2 == {f} ? $1 : 1/0):3 with lines title 'format {f}'"))
        .collect();
    format!(
        "set datafile separator ','\nset xlabel 'cell centre elevation [deg]'\nset ylabel 'cell radius [km]'\nplot {}\n",
        plots.join(", \\\n     ")
    )
}

pub fn cmd_ladder(scenario_path: &Path, opts: &Options) -> ExitStatus {
    match try_ladder(scenario_path, opts) {
        Ok(s) => s,
        Err(e) => report(&e),
    }
}

fn try_ladder(path: &Path, opts: &Options) -> Result<ExitStatus> {
    let (_, scenario) = load_scenario(path, opts)?;
    let steps = ladder(&scenario)?;
    let mut csv = String::from("step,fixes,furthest_stage,access_time_ms\n");
    for (i, s) in steps.iter().enumerate() {
        let access = s.access_time.map_or(String::new(), |a| format!("{:.4}", a.as_ms_f64()));
        csv.push_str(&format!("{i},{},{},{access}\n", s.flags, s.stage));
        say!(opts, "{i} {:<20} {}", s.flags.to_string(), s.stage);
    }
    let out = write_out(&opts.out_dir(), &format!("{}_ladder.csv", stem(path)), &csv)?;
    say!(opts, "ladder: {}", out.display());
    if ladder_holds(&steps, scenario.rtt) {
        Ok(ExitStatus::Success)
    } else {
        let stages: Vec<Stage> = steps.iter().map(|s| s.stage).collect();
        eprintln!("ladder progression violated: {stages:?}");
        Ok(ExitStatus::InvariantViolation)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ntn-rach", version, about = "Random access over non-terrestrial network delays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single scenario run.
    Run(CommandArgs),
    /// RTT or coverage sweep from the scenario's [sweep] section.
    Sweep(CommandArgs),
    /// Step through the cumulative fix sets.
    Ladder(CommandArgs),
}

#[derive(Debug, Args)]
pub struct CommandArgs {
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the message trace.
    #[arg(long)]
    pub trace: bool,
    /// Also write a gnuplot script next to sweep output.
    #[arg(long)]
    pub plot: bool,
    /// Print nothing on success.
    #[arg(long, short)]
    pub quiet: bool,
}

impl CommandArgs {
    fn options(&self) -> Options {
        Options { out: self.out.clone(), seed: self.seed, trace: self.trace, plot: self.plot, quiet: self.quiet }
    }
}

pub fn dispatch(cli: &Cli) -> ExitStatus {
    match &cli.command {
        Command::Run(a) => cmd_run(&a.scenario, &a.options()),
        Command::Sweep(a) => cmd_sweep(&a.scenario, &a.options()),
        Command::Ladder(a) => cmd_ladder(&a.scenario, &a.options()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEO: &str = r#"
[system]
standard = "LTE"
prach_index = 3

[ntn]
altitude_km = 600.0

[strategy]
mode = "sf-level-ta"
"#;

    #[test]
    fn parses_and_builds() {
        let f = ScenarioFile::parse(LEO, "leo.toml").unwrap();
        let s = f.scenario(Path::new(".")).unwrap();
        assert!((s.rtt.as_ms_f64() - 4.0).abs() < 0.01);
        assert_eq!(s.strategy, CorrectionStrategy::ta());
    }

    #[test]
    fn unknown_key_reports_line() {
        let bad = LEO.replace("prach_index = 3", "prach_index = 3\ncolour = 1");
        match ScenarioFile::parse(&bad, "bad.toml") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(path, "bad.toml");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn altitude_xor_rtt() {
        let both = LEO.replace("altitude_km = 600.0", "altitude_km = 600.0\nrtt_ms = 4.0");
        let f = ScenarioFile::parse(&both, "x").unwrap();
        assert!(matches!(f.scenario(Path::new(".")), Err(Error::Config(_))));
        let none = LEO.replace("altitude_km = 600.0", "");
        let f = ScenarioFile::parse(&none, "x").unwrap();
        assert!(matches!(f.scenario(Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn strategy_defaults() {
        let s = StrategySection { mode: CorrectionMode::SfLevelTd, fix_flags: None, timer_mode: None }.strategy();
        assert_eq!(s, CorrectionStrategy::td());
        let partial = StrategySection {
            mode: CorrectionMode::SfLevelTa,
            fix_flags: Some(FixFlags { rao: true, ..FixFlags::NONE }),
            timer_mode: Some(TimerMode::Standard),
        }
        .strategy();
        assert_eq!(partial.fix_flags.to_string(), "rao");
        assert_eq!(partial.timer_mode, TimerMode::Standard);
    }

    #[test]
    fn error_codes() {
        assert_eq!(ExitStatus::from_error(&Error::Config(String::new())).code(), 1);
        assert_eq!(ExitStatus::from_error(&Error::Contract(String::new())).code(), 3);
        assert_eq!(ExitStatus::ProtocolFailure.code(), 2);
    }
}
