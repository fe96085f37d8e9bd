//! Monte Carlo drivers for the convergence, beampattern and
//! gain-versus-threshold studies, their configuration file and the tables
//! they emit.
//!
//! Every trial is a pure function of `(seed, Gamma, scheme)`: the channel and
//! the initial phases come from stream 0 of the trial seed, and each scheme
//! draws its randomizations from its own stream. Trials run on a rayon pool
//! whose size is capped by the `ISAC_THREADS` environment variable, and rows
//! are written in `(seed, Gamma, scheme)` order, so output files are
//! byte-identical across runs and thread counts. Wall times are kept out of
//! those files and written to `timings.csv` instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gen_channels, ChannelRealization, SystemParams};
use crate::error::{Error, Result};
use crate::metrics::{beampattern, check_feasibility, ReflectDesign};
use crate::numerics::{db_to_linear, linear_to_db, seeded_stream};
use crate::optimizer::{
    algorithm1, scheme_info_only, scheme_separate, AlternatingSettings, IsacSolution, RunTrace, Termination,
};

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    InfoOnly,
    Separate,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::InfoOnly, Scheme::Separate];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::InfoOnly => "info-only",
            Scheme::Separate => "separate",
        }
    }

    fn index(self) -> u64 {
        match self {
            Scheme::Proposed => 1,
            Scheme::InfoOnly => 2,
            Scheme::Separate => 3,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?} (expected proposed, info-only or separate)")))
    }
}

/// How the alternating schemes pick their first reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform random phases; if the first transmit step is infeasible the
    /// run is retried once from the cascade-aligned phases.
    Random,
    CascadeAligned,
}

/// System parameters in the units used to describe the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub bs_antennas: usize,
    pub irs_elements: usize,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    /// SNR threshold used where no sweep applies.
    pub snr_threshold_db: f64,
    pub bs_position_m: [f64; 2],
    pub irs_position_m: [f64; 2],
    pub cu_position_m: [f64; 2],
    pub path_loss_exponent_bs_irs: f64,
    pub path_loss_exponent_irs_cu: f64,
    pub path_loss_exponent_bs_cu: f64,
    pub reference_path_loss_db: f64,
    pub reference_distance_m: f64,
    /// Linear LoS-to-NLoS power ratio; `inf` means pure line of sight.
    pub rician_factor: f64,
    pub shadowing_std_db: f64,
    pub irs_spacing_wavelengths: f64,
    pub bs_spacing_wavelengths: f64,
    /// Closed intervals of desired sensing angles, degrees.
    pub sensing_intervals_deg: Vec<[f64; 2]>,
    pub sensing_step_deg: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 8,
            irs_elements: 64,
            tx_power_dbm: 20.0,
            noise_power_dbm: -80.0,
            snr_threshold_db: 10.0,
            bs_position_m: [0.0, 0.0],
            irs_position_m: [18.0, 2.0],
            cu_position_m: [50.0, 0.0],
            path_loss_exponent_bs_irs: 2.5,
            path_loss_exponent_irs_cu: 2.5,
            path_loss_exponent_bs_cu: 3.5,
            reference_path_loss_db: -30.0,
            reference_distance_m: 1.0,
            rician_factor: 0.5,
            shadowing_std_db: 10.0,
            irs_spacing_wavelengths: 0.5,
            bs_spacing_wavelengths: 0.5,
            sensing_intervals_deg: vec![
                [-61.0, -59.0],
                [-31.0, -29.0],
                [-1.0, 1.0],
                [29.0, 31.0],
                [59.0, 61.0],
            ],
            sensing_step_deg: 0.25,
        }
    }
}

impl SystemConfig {
    /// Sensing angles in radians, endpoints included, ascending.
    pub fn sensing_angles(&self) -> Result<Vec<f64>> {
        if !(self.sensing_step_deg > 0.0) {
            return Err(Error::Config("sensing_step_deg must be positive".into()));
        }
        let mut out = Vec::new();
        for &[lo, hi] in &self.sensing_intervals_deg {
            if !(lo <= hi) {
                return Err(Error::Config(format!("sensing interval [{lo}, {hi}] is empty")));
            }
            let count = ((hi - lo) / self.sensing_step_deg + 1e-9).floor() as usize;
            out.extend((0..=count).map(|k| (lo + k as f64 * self.sensing_step_deg).to_radians()));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }

    /// Linear-unit parameters at SNR threshold `gamma_db`.
    pub fn params(&self, gamma_db: f64) -> Result<SystemParams> {
        let p = SystemParams {
            m: self.bs_antennas,
            n: self.irs_elements,
            p0: db_to_linear(self.tx_power_dbm),
            sigma2: db_to_linear(self.noise_power_dbm),
            gamma: db_to_linear(gamma_db),
            bs_pos: self.bs_position_m,
            irs_pos: self.irs_position_m,
            cu_pos: self.cu_position_m,
            alpha_bi: self.path_loss_exponent_bs_irs,
            alpha_ic: self.path_loss_exponent_irs_cu,
            alpha_bc: self.path_loss_exponent_bs_cu,
            k0: db_to_linear(self.reference_path_loss_db),
            d0: self.reference_distance_m,
            rician_k: self.rician_factor,
            shadow_std_db: self.shadowing_std_db,
            element_spacing_ratio: self.irs_spacing_wavelengths,
            antenna_spacing_ratio: self.bs_spacing_wavelengths,
            sensing_angles: self.sensing_angles()?,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

/// Monte Carlo and algorithm settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schemes: Vec<Scheme>,
    /// Trial `t` uses seed `seed + t`.
    pub seed: u64,
    pub trials: usize,
    pub gamma_sweep_db: Vec<f64>,
    pub init: InitStrategy,
    pub eps: f64,
    pub max_iters: usize,
    pub reflect_samples: usize,
    pub transmit_samples: usize,
    pub stall_limit: usize,
    /// Angle range and step of the beampattern table, degrees.
    pub beampattern_range_deg: [f64; 2],
    pub beampattern_step_deg: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = AlternatingSettings::default();
        Self {
            schemes: Scheme::ALL.to_vec(),
            seed: 1,
            trials: 50,
            gamma_sweep_db: (0..=8).map(|k| 2.0 * k as f64).collect(),
            init: InitStrategy::Random,
            eps: s.eps,
            max_iters: s.max_iters,
            reflect_samples: s.reflect_samples,
            transmit_samples: s.transmit_samples,
            stall_limit: s.stall_limit,
            beampattern_range_deg: [-90.0, 90.0],
            beampattern_step_deg: 0.25,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Complete experiment description, stored as TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.system.params(self.system.snr_threshold_db)?;
        let r = &self.run;
        if r.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if r.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if r.gamma_sweep_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("gamma_sweep_db entries must be finite".into()));
        }
        if !(r.eps >= 0.0) || r.max_iters == 0 || r.stall_limit == 0 {
            return Err(Error::Config("eps must be nonnegative, max_iters and stall_limit positive".into()));
        }
        if r.reflect_samples == 0 || r.transmit_samples == 0 {
            return Err(Error::Config("randomization counts must be positive".into()));
        }
        let [lo, hi] = r.beampattern_range_deg;
        if !(lo <= hi) || !(r.beampattern_step_deg > 0.0) {
            return Err(Error::Config("beampattern range must be ordered and its step positive".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> AlternatingSettings {
        AlternatingSettings {
            eps: self.run.eps,
            max_iters: self.run.max_iters,
            reflect_samples: self.run.reflect_samples,
            transmit_samples: self.run.transmit_samples,
            stall_limit: self.run.stall_limit,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.trials as u64).map(|t| self.run.seed.wrapping_add(t)).collect()
    }
}

/// Outcome class of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Converged,
    MaxIters,
    RoundingStall,
    /// No feasible design for this channel and threshold.
    Infeasible,
    /// No randomized candidate met the SNR constraint on the first step.
    RoundingFailed,
    /// The conic solver did not certify a subproblem.
    SolverFailure,
}

impl TrialStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrialStatus::Converged => "converged",
            TrialStatus::MaxIters => "max_iters",
            TrialStatus::RoundingStall => "rounding_stall",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::RoundingFailed => "rounding_failed",
            TrialStatus::SolverFailure => "solver_failure",
        }
    }

    /// `true` when the trial produced a design.
    pub fn has_solution(self) -> bool {
        matches!(self, TrialStatus::Converged | TrialStatus::MaxIters | TrialStatus::RoundingStall)
    }
}

impl From<Termination> for TrialStatus {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Converged => TrialStatus::Converged,
            Termination::MaxIters => TrialStatus::MaxIters,
            Termination::RoundingStall => TrialStatus::RoundingStall,
            Termination::Infeasible => TrialStatus::Infeasible,
        }
    }
}

/// One `(scheme, seed, Gamma)` trial. Gains are linear with a dB companion
/// computed from the same stored value; fields are `NaN` when the trial has
/// no design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub gamma_db: f64,
    pub min_gain: f64,
    pub min_gain_db: f64,
    pub snr: f64,
    pub snr_db: f64,
    pub iterations: usize,
    pub status: TrialStatus,
    /// Whether the independent feasibility check passed.
    pub certified: bool,
    /// `true` when the cascade-aligned fallback start was used.
    pub fallback_init: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

impl ResultRow {
    pub const CSV_HEADER: &'static str =
        "scheme,seed,gamma_db,min_gain,min_gain_db,snr,snr_db,iterations,status,certified,fallback_init";

    /// The row as a line of `runs.csv`; `NaN` values become empty cells.
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.seed,
            self.gamma_db,
            fmt_f64(self.min_gain),
            fmt_f64(self.min_gain_db),
            fmt_f64(self.snr),
            fmt_f64(self.snr_db),
            self.iterations,
            self.status.name(),
            self.certified,
            self.fallback_init
        )
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// A finished trial with its design, if any.
#[derive(Debug, Clone)]
pub struct Trial {
    pub row: ResultRow,
    pub solution: Option<IsacSolution>,
}

/// Stream id of the randomizations for one `(Gamma, scheme)` pair.
fn stream_id(gamma_db: f64, scheme: Scheme) -> u64 {
    let milli_db = (gamma_db * 1000.0).round() as i64 as u64;
    (milli_db << 4) | scheme.index()
}

/// Channel realization and random initial phases of trial `seed`.
pub fn trial_channel(cfg: &ExperimentConfig, seed: u64) -> Result<(ChannelRealization, ReflectDesign)> {
    let params = cfg.system.params(cfg.system.snr_threshold_db)?;
    let mut rng = seeded_stream(seed, 0);
    let chan = gen_channels(&params, &mut rng)?;
    let init = ReflectDesign::random(params.n, &mut rng);
    Ok((chan, init))
}

/// Runs one scheme on trial `seed` at threshold `gamma_db`. Only
/// configuration errors are returned as `Err`; infeasibility and solver
/// trouble are reported through the row status.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64, gamma_db: f64, scheme: Scheme) -> Result<Trial> {
    let params = cfg.system.params(gamma_db)?;
    let (chan, random_init) = trial_channel(cfg, seed)?;
    let settings = cfg.settings();
    let mut rng = seeded_stream(seed, stream_id(gamma_db, scheme));
    let start = Instant::now();

    let mut fallback_init = false;
    let outcome = match scheme {
        Scheme::Separate => scheme_separate(&chan, &params, &settings, &mut rng),
        Scheme::Proposed | Scheme::InfoOnly => {
            let run = |init: ReflectDesign, rng: &mut crate::numerics::Stream| match scheme {
                Scheme::Proposed => algorithm1(&chan, &params, init, &settings, rng),
                _ => scheme_info_only(&chan, &params, init, &settings, rng),
            };
            match cfg.run.init {
                InitStrategy::CascadeAligned => run(ReflectDesign::cascade_aligned(&chan), &mut rng),
                InitStrategy::Random => match run(random_init, &mut rng) {
                    Err(Error::Infeasible(_)) | Err(Error::RoundingFailed { .. }) => {
                        fallback_init = true;
                        run(ReflectDesign::cascade_aligned(&chan), &mut rng)
                    }
                    other => other,
                },
            }
        }
    };
    let wall_time = start.elapsed().as_secs_f64();

    let empty = |status: TrialStatus| ResultRow {
        scheme,
        seed,
        gamma_db,
        min_gain: f64::NAN,
        min_gain_db: f64::NAN,
        snr: f64::NAN,
        snr_db: f64::NAN,
        iterations: 0,
        status,
        certified: false,
        fallback_init,
        wall_time,
    };
    match outcome {
        Ok(sol) => {
            let report = check_feasibility(&chan, &sol.refl, &sol.tx, params.p0, params.sigma2, params.gamma)?;
            let row = ResultRow {
                min_gain: sol.min_gain,
                min_gain_db: linear_to_db(sol.min_gain),
                snr: sol.snr,
                snr_db: linear_to_db(sol.snr),
                iterations: sol.trace.iterations(),
                status: sol.trace.termination.into(),
                certified: report.is_feasible(),
                ..empty(TrialStatus::Converged)
            };
            Ok(Trial { row, solution: Some(sol) })
        }
        Err(Error::Infeasible(_)) => Ok(Trial { row: empty(TrialStatus::Infeasible), solution: None }),
        Err(Error::RoundingFailed { .. }) => Ok(Trial { row: empty(TrialStatus::RoundingFailed), solution: None }),
        Err(Error::Solver(_)) | Err(Error::NotPsd { .. }) | Err(Error::DegenerateExtraction(_)) => {
            Ok(Trial { row: empty(TrialStatus::SolverFailure), solution: None })
        }
        Err(e) => Err(e),
    }
}

/// Runs `f` on a pool capped by `ISAC_THREADS` (all cores when unset).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var("ISAC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("ISAC_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every `(seed, Gamma, scheme)` task in parallel, returned in task order.
fn run_tasks(cfg: &ExperimentConfig, tasks: &[(u64, f64, Scheme)]) -> Result<Vec<Trial>> {
    with_pool(|| {
        tasks
            .par_iter()
            .map(|&(seed, gamma_db, scheme)| run_trial(cfg, seed, gamma_db, scheme))
            .collect::<Result<Vec<_>>>()
    })?
}

fn sorted_tasks(seeds: &[u64], gammas: &[f64], schemes: &[Scheme]) -> Vec<(u64, f64, Scheme)> {
    let mut schemes = schemes.to_vec();
    schemes.sort();
    schemes.dedup();
    let mut tasks = Vec::new();
    for &s in seeds {
        for &g in gammas {
            for &k in &schemes {
                tasks.push((s, g, k));
            }
        }
    }
    tasks
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub gamma_db: f64,
    pub rows: Vec<ResultRow>,
    /// Traces of the trials that produced a design, by seed.
    pub traces: Vec<(u64, RunTrace)>,
}

impl ConvergenceResult {
    /// Fraction of feasible runs that converged within `k` iterations.
    pub fn converged_within(&self, k: usize) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        let ok = self
            .traces
            .iter()
            .filter(|(_, t)| t.termination == Termination::Converged && t.iterations() <= k)
            .count();
        ok as f64 / self.traces.len() as f64
    }
}

/// Proposed scheme at the configured threshold over all trial seeds.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceResult> {
    cfg.validate()?;
    let gamma_db = cfg.system.snr_threshold_db;
    let tasks = sorted_tasks(&cfg.seeds(), &[gamma_db], &[Scheme::Proposed]);
    let trials = run_tasks(cfg, &tasks)?;
    let mut rows = Vec::with_capacity(trials.len());
    let mut traces = Vec::new();
    for t in trials {
        if let Some(sol) = t.solution {
            traces.push((t.row.seed, sol.trace));
        }
        rows.push(t.row);
    }
    Ok(ConvergenceResult { gamma_db, rows, traces })
}

// ---------------------------------------------------------------------------
// beampattern

#[derive(Debug, Clone)]
pub struct BeampatternCurve {
    pub seed: u64,
    pub scheme: Scheme,
    /// Reported minimum gain over the sensing angles.
    pub min_gain: f64,
    /// Linear gain at each plotting angle.
    pub gains: Vec<f64>,
    /// Linear gain at each desired sensing angle.
    pub target_gains: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BeampatternResult {
    pub gamma_db: f64,
    pub angles_deg: Vec<f64>,
    pub rows: Vec<ResultRow>,
    /// Curves of the trials that produced a design, in task order.
    pub curves: Vec<BeampatternCurve>,
}

impl BeampatternResult {
    pub fn curve(&self, seed: u64, scheme: Scheme) -> Option<&BeampatternCurve> {
        self.curves.iter().find(|c| c.seed == seed && c.scheme == scheme)
    }
}

pub fn beampattern_angles_deg(cfg: &ExperimentConfig) -> Vec<f64> {
    let [lo, hi] = cfg.run.beampattern_range_deg;
    let step = cfg.run.beampattern_step_deg;
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}

/// Gain-versus-angle curves of every configured scheme at the configured threshold.
pub fn run_beampattern(cfg: &ExperimentConfig) -> Result<BeampatternResult> {
    cfg.validate()?;
    let gamma_db = cfg.system.snr_threshold_db;
    let params = cfg.system.params(gamma_db)?;
    let angles_deg = beampattern_angles_deg(cfg);
    let angles: Vec<f64> = angles_deg.iter().map(|d| d.to_radians()).collect();
    let tasks = sorted_tasks(&cfg.seeds(), &[gamma_db], &cfg.run.schemes);
    let trials = run_tasks(cfg, &tasks)?;
    let mut rows = Vec::with_capacity(trials.len());
    let mut curves = Vec::new();
    for t in trials {
        if let Some(sol) = &t.solution {
            let (chan, _) = trial_channel(cfg, t.row.seed)?;
            let gains = beampattern(&angles, params.element_spacing_ratio, &chan, &sol.refl, &sol.tx)?;
            let target_gains =
                beampattern(&params.sensing_angles, params.element_spacing_ratio, &chan, &sol.refl, &sol.tx)?;
            curves.push(BeampatternCurve {
                seed: t.row.seed,
                scheme: t.row.scheme,
                min_gain: sol.min_gain,
                gains,
                target_gains,
            });
        }
        rows.push(t.row);
    }
    Ok(BeampatternResult {
        gamma_db,
        angles_deg,
        rows,
        curves,
    })
}

// ---------------------------------------------------------------------------
// gain versus threshold

/// Aggregate of one `(scheme, Gamma)` cell over the trial seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub gamma_db: f64,
    pub trials: usize,
    pub feasible: usize,
    pub infeasibility_rate: f64,
    pub median_min_gain: f64,
    pub median_min_gain_db: f64,
    pub mean_min_gain: f64,
    pub mean_min_gain_db: f64,
}

impl SummaryRow {
    const CSV_HEADER: &'static str = "scheme,gamma_db,trials,feasible,infeasibility_rate,median_min_gain,median_min_gain_db,mean_min_gain,mean_min_gain_db";

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.gamma_db,
            self.trials,
            self.feasible,
            self.infeasibility_rate,
            fmt_f64(self.median_min_gain),
            fmt_f64(self.median_min_gain_db),
            fmt_f64(self.mean_min_gain),
            fmt_f64(self.mean_min_gain_db)
        )
    }
}

/// Median of a sample (mean of the two middle values for even sizes);
/// `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-`(scheme, Gamma)` aggregates. Gains are averaged over trials that
/// produced a design; every other trial counts as infeasible.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(Scheme, i64), (f64, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let key = (r.scheme, (r.gamma_db * 1000.0).round() as i64);
        cells.entry(key).or_insert_with(|| (r.gamma_db, Vec::new())).1.push(r);
    }
    cells
        .into_values()
        .map(|(gamma_db, rs)| {
            let gains: Vec<f64> = rs.iter().filter(|r| r.status.has_solution()).map(|r| r.min_gain).collect();
            let med = median(&gains);
            let mean = if gains.is_empty() {
                f64::NAN
            } else {
                gains.iter().sum::<f64>() / gains.len() as f64
            };
            let db = |x: f64| if x.is_nan() { f64::NAN } else { linear_to_db(x) };
            SummaryRow {
                scheme: rs[0].scheme,
                gamma_db,
                trials: rs.len(),
                feasible: gains.len(),
                infeasibility_rate: 1.0 - gains.len() as f64 / rs.len() as f64,
                median_min_gain: med,
                median_min_gain_db: db(med),
                mean_min_gain: mean,
                mean_min_gain_db: db(mean),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GainVsGammaResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl GainVsGammaResult {
    pub fn cell(&self, scheme: Scheme, gamma_db: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.scheme == scheme && (s.gamma_db - gamma_db).abs() < 1e-9)
    }
}

/// Every configured scheme over the threshold sweep and all trial seeds.
pub fn run_gain_vs_gamma(cfg: &ExperimentConfig) -> Result<GainVsGammaResult> {
    cfg.validate()?;
    if cfg.run.gamma_sweep_db.is_empty() {
        return Err(Error::Config("gamma_sweep_db is empty".into()));
    }
    let tasks = sorted_tasks(&cfg.seeds(), &cfg.run.gamma_sweep_db, &cfg.run.schemes);
    let rows: Vec<ResultRow> = run_tasks(cfg, &tasks)?.into_iter().map(|t| t.row).collect();
    let summary = summarize(&rows);
    Ok(GainVsGammaResult { rows, summary })
}

// ---------------------------------------------------------------------------
// output

#[derive(Serialize)]
struct JsonSummary<'a, T: Serialize> {
    schema_version: u32,
    experiment: &'a str,
    config: &'a ExperimentConfig,
    status_counts: BTreeMap<&'static str, usize>,
    results: T,
}

fn status_counts(rows: &[ResultRow]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for r in rows {
        *m.entry(r.status.name()).or_insert(0) += 1;
    }
    m
}

fn rows_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(ResultRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn timings_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("scheme,seed,gamma_db,wall_time_s\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.scheme, r.seed, r.gamma_db, r.wall_time);
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn write_json<T: Serialize>(
    dir: &Path,
    experiment: &str,
    cfg: &ExperimentConfig,
    rows: &[ResultRow],
    results: T,
) -> Result<PathBuf> {
    let doc = JsonSummary {
        schema_version: SCHEMA_VERSION,
        experiment,
        config: cfg,
        status_counts: status_counts(rows),
        results,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(dir, "summary.json", &text)
}

/// `convergence.csv` (seed, iteration, objective per sweep), `runs.csv`,
/// `summary.json` and `timings.csv` under `dir`.
pub fn write_convergence(dir: &Path, cfg: &ExperimentConfig, res: &ConvergenceResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut trace = String::from("seed,iteration,objective,objective_db,reflect_objective,transmit_objective,snr_db,power_mw,accepted\n");
    for (seed, t) in &res.traces {
        let f0 = t.initial_objective;
        let _ = writeln!(trace, "{seed},0,{f0},{},,,,,", linear_to_db(f0));
        for r in &t.records {
            let _ = writeln!(
                trace,
                "{},{},{},{},{},{},{},{},{}",
                seed,
                r.iteration,
                r.objective,
                linear_to_db(r.objective),
                fmt_f64(r.reflect_objective),
                fmt_f64(r.transmit_objective),
                linear_to_db(r.snr),
                r.power,
                r.accepted
            );
        }
    }
    #[derive(Serialize)]
    struct Conv {
        gamma_db: f64,
        runs: usize,
        feasible_runs: usize,
        converged_within_15: f64,
        all_monotone: bool,
        runs_detail: Vec<ResultRow>,
    }
    let results = Conv {
        gamma_db: res.gamma_db,
        runs: res.rows.len(),
        feasible_runs: res.traces.len(),
        converged_within_15: res.converged_within(15),
        all_monotone: res.traces.iter().all(|(_, t)| t.is_monotone(1e-9)),
        runs_detail: res.rows.clone(),
    };
    Ok(vec![
        write_file(dir, "convergence.csv", &trace)?,
        write_file(dir, "runs.csv", &rows_csv(&res.rows))?,
        write_json(dir, "convergence", cfg, &res.rows, results)?,
        write_file(dir, "timings.csv", &timings_csv(&res.rows))?,
    ])
}

/// `beampattern.csv` (one row per seed and angle, a linear and a dB column
/// per scheme, empty cells where a scheme had no design), `runs.csv`,
/// `summary.json` and `timings.csv` under `dir`.
pub fn write_beampattern(dir: &Path, cfg: &ExperimentConfig, res: &BeampatternResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut schemes = cfg.run.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut table = String::from("seed,angle_deg");
    for k in &schemes {
        let _ = write!(table, ",{k}_gain,{k}_gain_db");
    }
    table.push('\n');
    for seed in cfg.seeds() {
        let curves: Vec<Option<&BeampatternCurve>> = schemes.iter().map(|&k| res.curve(seed, k)).collect();
        for (i, a) in res.angles_deg.iter().enumerate() {
            let _ = write!(table, "{seed},{a}");
            for c in &curves {
                match c {
                    Some(c) => {
                        let _ = write!(table, ",{},{}", c.gains[i], linear_to_db(c.gains[i]));
                    }
                    None => table.push_str(",,"),
                }
            }
            table.push('\n');
        }
    }
    #[derive(Serialize)]
    struct Bp {
        gamma_db: f64,
        angles: usize,
        runs_detail: Vec<ResultRow>,
    }
    let results = Bp {
        gamma_db: res.gamma_db,
        angles: res.angles_deg.len(),
        runs_detail: res.rows.clone(),
    };
    Ok(vec![
        write_file(dir, "beampattern.csv", &table)?,
        write_file(dir, "runs.csv", &rows_csv(&res.rows))?,
        write_json(dir, "beampattern", cfg, &res.rows, results)?,
        write_file(dir, "timings.csv", &timings_csv(&res.rows))?,
    ])
}

/// `gain_vs_gamma.csv` (per-cell aggregates), `runs.csv` (per trial),
/// `summary.json` and `timings.csv` under `dir`.
pub fn write_gain_vs_gamma(dir: &Path, cfg: &ExperimentConfig, res: &GainVsGammaResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut table = String::from(SummaryRow::CSV_HEADER);
    table.push('\n');
    for s in &res.summary {
        table.push_str(&s.csv_line());
        table.push('\n');
    }
    #[derive(Serialize)]
    struct Gg<'a> {
        summary: &'a [SummaryRow],
        runs_detail: &'a [ResultRow],
    }
    let results = Gg {
        summary: &res.summary,
        runs_detail: &res.rows,
    };
    Ok(vec![
        write_file(dir, "gain_vs_gamma.csv", &table)?,
        write_file(dir, "runs.csv", &rows_csv(&res.rows))?,
        write_json(dir, "gain_vs_gamma", cfg, &res.rows, results)?,
        write_file(dir, "timings.csv", &timings_csv(&res.rows))?,
    ])
}
