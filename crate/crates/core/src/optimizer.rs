//! Alternating optimization of the transmit covariance and the IRS phases,
//! and the two benchmark schemes it is compared against.
//!
//! Every iterate is feasible. Rounded phase vectors must meet the SNR
//! constraint with the current beamformers, and the transmit step at a
//! candidate only ever improves on them. A candidate is judged together with
//! its transmit design: if the pair does not beat the current iterate, the
//! previous phases and beamformers are kept, so the objective sequence never
//! decreases.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, SystemParams};
use crate::conic::Status;
use crate::error::{Error, Result};
use crate::metrics::{combined_channel, min_gain, snr, ReflectDesign, TransmitDesign};
use crate::reflect::{build_lifted, gaussian_round, solve_p4, solve_sdr31, DEFAULT_SAMPLES};
use crate::transmit::{extract_transmit, solve_sdr21, solve_transmit_info_only, DEFAULT_RANDOMIZATIONS};

/// Stopping rule and randomization budget of the alternating loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternatingSettings {
    /// Stop once `(f_k - f_{k-1}) / f_{k-1} < eps`.
    pub eps: f64,
    pub max_iters: usize,
    /// Gaussian candidates per reflect step.
    pub reflect_samples: usize,
    /// Gaussian candidates per information-only transmit step.
    pub transmit_samples: usize,
    /// Consecutive failed reflect steps tolerated before giving up.
    pub stall_limit: usize,
}

impl Default for AlternatingSettings {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iters: 30,
            reflect_samples: DEFAULT_SAMPLES,
            transmit_samples: DEFAULT_RANDOMIZATIONS,
            stall_limit: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Infeasible,
    RoundingStall,
}

/// One sweep: a reflect step at the current beamformers, then a transmit
/// step at the candidate phases.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based sweep index.
    pub iteration: usize,
    /// Minimum gain of the rounded phases with the previous transmit design;
    /// `NaN` when the reflect step produced no candidate.
    pub reflect_objective: f64,
    /// Minimum gain after the transmit step at the candidate phases; `NaN`
    /// when there was no candidate or the step failed.
    pub transmit_objective: f64,
    /// Objective of the iterate kept after the sweep.
    pub objective: f64,
    /// Linear SNR of the kept iterate.
    pub snr: f64,
    /// Transmit power of the kept iterate (mW).
    pub power: f64,
    /// Wall time of the sweep in seconds.
    pub wall_time: f64,
    /// Whether the candidate replaced the iterate.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Objective after the transmit step at the initial phases.
    pub initial_objective: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl RunTrace {
    /// Number of sweeps run.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Iterate objective before the first sweep and after each sweep.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.records.iter().map(|r| r.objective))
            .collect()
    }

    /// `true` when no sweep lowered the objective by more than
    /// `slack * max(1, |previous|)`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objectives()
            .windows(2)
            .all(|w| w[1] >= w[0] - slack * w[0].abs().max(1.0))
    }
}

/// A feasible joint design and how it was reached.
#[derive(Debug, Clone)]
pub struct IsacSolution {
    pub tx: TransmitDesign,
    pub refl: ReflectDesign,
    /// Minimum beampattern gain over the sensing angles.
    pub min_gain: f64,
    /// Linear SNR at the communication user.
    pub snr: f64,
    pub trace: RunTrace,
}

fn evaluate(chan: &ChannelRealization, refl: &ReflectDesign, tx: &TransmitDesign, params: &SystemParams) -> Result<f64> {
    min_gain(&params.sensing_angles, params.element_spacing_ratio, chan, refl, tx)
}

fn finish(
    chan: &ChannelRealization,
    refl: ReflectDesign,
    tx: TransmitDesign,
    params: &SystemParams,
    trace: RunTrace,
) -> Result<IsacSolution> {
    let min_gain = evaluate(chan, &refl, &tx, params)?;
    let snr = snr(chan, &refl, &tx, params.sigma2)?;
    Ok(IsacSolution {
        tx,
        refl,
        min_gain,
        snr,
        trace,
    })
}

/// Joint design with both information and dedicated sensing beams.
fn joint_transmit(chan: &ChannelRealization, refl: &ReflectDesign, params: &SystemParams) -> Result<TransmitDesign> {
    let sol = solve_sdr21(chan, refl, params)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible("transmit relaxation".into())),
        s => return Err(Error::Solver(format!("transmit relaxation ended with {s:?}"))),
    }
    let h = combined_channel(chan, refl)?;
    Ok(extract_transmit(&sol, &h, params.gamma)?.0)
}

/// `true` when the SNR target cannot be met at any transmit design for
/// these phases (`P0 ||h||^2 < Gamma sigma2`).
fn snr_unreachable(chan: &ChannelRealization, refl: &ReflectDesign, params: &SystemParams) -> Result<bool> {
    let h = combined_channel(chan, refl)?;
    Ok(params.p0 * h.norm_squared() < params.gamma * params.sigma2)
}

#[derive(Clone, Copy)]
enum TransmitStep {
    Joint,
    InformationOnly,
}

impl TransmitStep {
    fn run<R: Rng + ?Sized>(
        self,
        chan: &ChannelRealization,
        refl: &ReflectDesign,
        params: &SystemParams,
        settings: &AlternatingSettings,
        rng: &mut R,
    ) -> Result<TransmitDesign> {
        match self {
            TransmitStep::Joint => joint_transmit(chan, refl, params),
            TransmitStep::InformationOnly => {
                solve_transmit_info_only(chan, refl, params, settings.transmit_samples, rng).map(|o| o.design)
            }
        }
    }
}

fn alternate<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    params: &SystemParams,
    init: ReflectDesign,
    settings: &AlternatingSettings,
    step: TransmitStep,
    rng: &mut R,
) -> Result<IsacSolution> {
    params.validate()?;
    if init.n() != chan.n() {
        return Err(Error::DimensionMismatch {
            context: "initial reflection vs IRS size",
            expected: chan.n(),
            got: init.n(),
        });
    }
    if snr_unreachable(chan, &init, params)? {
        return Err(Error::Infeasible("SNR target unreachable at the initial reflection".into()));
    }

    let mut refl = init;
    let mut tx = step.run(chan, &refl, params, settings, rng)?;
    let mut current = evaluate(chan, &refl, &tx, params)?;
    let initial_objective = current;
    let mut records = Vec::new();
    let mut failures = 0;
    let mut termination = Termination::MaxIters;

    for k in 1..=settings.max_iters {
        let start = Instant::now();
        let previous = current;

        // reflect step at the current beamformers
        let lifted = build_lifted(chan, &tx, params)?;
        let rounded = solve_sdr31(&lifted).and_then(|sol| {
            if sol.is_optimal() {
                gaussian_round(&sol, &lifted, settings.reflect_samples, rng)
            } else {
                Err(Error::Solver(format!("reflect relaxation ended with {:?}", sol.status)))
            }
        });
        let candidate = match rounded {
            Ok(outcome) => Some(outcome.design),
            Err(Error::RoundingFailed { .. }) | Err(Error::Solver(_)) => None,
            Err(e) => return Err(e),
        };

        // transmit step at the candidate phases; the previous beamformers
        // stay available since the rounding kept them SNR-feasible
        let mut reflect_objective = f64::NAN;
        let mut transmit_objective = f64::NAN;
        let mut accepted = false;
        if let Some(cand) = &candidate {
            reflect_objective = evaluate(chan, cand, &tx, params)?;
            let mut best = (reflect_objective, None);
            if let Ok(new_tx) = step.run(chan, cand, params, settings, rng) {
                transmit_objective = evaluate(chan, cand, &new_tx, params)?;
                if transmit_objective > best.0 {
                    best = (transmit_objective, Some(new_tx));
                }
            }
            if best.0 > current {
                current = best.0;
                refl = cand.clone();
                if let Some(new_tx) = best.1 {
                    tx = new_tx;
                }
                accepted = true;
            }
        }

        records.push(IterationRecord {
            iteration: k,
            reflect_objective,
            transmit_objective,
            objective: current,
            snr: snr(chan, &refl, &tx, params.sigma2)?,
            power: tx.power(),
            wall_time: start.elapsed().as_secs_f64(),
            accepted,
        });

        if candidate.is_none() {
            failures += 1;
            if failures >= settings.stall_limit {
                termination = Termination::RoundingStall;
                break;
            }
            continue;
        }
        failures = 0;
        let gain = if previous > 0.0 {
            (current - previous) / previous
        } else if current > previous {
            f64::INFINITY
        } else {
            0.0
        };
        if gain < settings.eps {
            termination = Termination::Converged;
            break;
        }
    }

    finish(
        chan,
        refl,
        tx,
        params,
        RunTrace {
            initial_objective,
            records,
            termination,
        },
    )
}

/// The proposed alternating design: the joint transmit relaxation with
/// rank-one reconstruction, then the lifted reflect relaxation with Gaussian
/// randomization, repeated until the fractional improvement drops below
/// `settings.eps` or `settings.max_iters` sweeps have run.
///
/// Fails with [`Error::Infeasible`] when the first transmit step is
/// infeasible for `init`.
pub fn algorithm1<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    params: &SystemParams,
    init: ReflectDesign,
    settings: &AlternatingSettings,
    rng: &mut R,
) -> Result<IsacSolution> {
    alternate(chan, params, init, settings, TransmitStep::Joint, rng)
}

/// Information-only benchmark: the same loop with `R0 = 0`, the transmit
/// step solved by Gaussian randomization.
pub fn scheme_info_only<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    params: &SystemParams,
    init: ReflectDesign,
    settings: &AlternatingSettings,
    rng: &mut R,
) -> Result<IsacSolution> {
    alternate(chan, params, init, settings, TransmitStep::InformationOnly, rng)
}

/// Separate-design benchmark: phases from the sensing-only problem, then a
/// single joint transmit design at those phases.
pub fn scheme_separate<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    params: &SystemParams,
    settings: &AlternatingSettings,
    rng: &mut R,
) -> Result<IsacSolution> {
    params.validate()?;
    let start = Instant::now();
    let refl = solve_p4(chan, params, settings.reflect_samples, rng)?.design;
    if snr_unreachable(chan, &refl, params)? {
        return Err(Error::Infeasible("SNR target unreachable at the sensing-only reflection".into()));
    }
    let tx = joint_transmit(chan, &refl, params)?;
    let f = evaluate(chan, &refl, &tx, params)?;
    let record = IterationRecord {
        iteration: 1,
        reflect_objective: f64::NAN,
        transmit_objective: f,
        objective: f,
        snr: snr(chan, &refl, &tx, params.sigma2)?,
        power: tx.power(),
        wall_time: start.elapsed().as_secs_f64(),
        accepted: true,
    };
    finish(
        chan,
        refl,
        tx,
        params,
        RunTrace {
            initial_objective: f,
            records: vec![record],
            termination: Termination::Converged,
        },
    )
}
