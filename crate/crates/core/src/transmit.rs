//! Transmit covariance design for a fixed IRS configuration: the relaxed
//! max-min beampattern SDP, the closed-form rank-one reconstruction, and the
//! information-beam-only variant solved with Gaussian randomization.

use rand::Rng;

use crate::channel::{ChannelRealization, SystemParams};
use crate::conic::{
    epigraph_maxmin, hermitian_low_rank_coef, hermitian_trace_coef, solve, unembed, ConicProblem,
    LinearFunctional, Relation, Sense, Status,
};
use crate::error::{Error, Result};
use crate::metrics::{combined_channel, effective_steering, gains_from_effective, ReflectDesign, TransmitDesign};
use crate::numerics::{
    adjoint_mul, c64, eig_hermitian, CMat, CVec, ComplexGaussian, HermitianMatrix, LowRankHermitian,
};

/// Rank-one test `lambda_2 / lambda_1 <= RANK_ONE_RATIO`.
pub const RANK_ONE_RATIO: f64 = 1e-6;
/// Default number of Gaussian candidates for the information-only design.
pub const DEFAULT_RANDOMIZATIONS: usize = 1000;
/// Relative SNR shortfall accepted for randomized candidates.
const CANDIDATE_SNR_TOL: f64 = 1e-9;

/// The relaxed transmit problem together with what is needed to map its
/// solution back to physical units.
///
/// Variables are `W / P0` and `R0 / P0` (real-embedded), so the power
/// constraint reads `tr <= 1`; gains are divided by `kappa`, the largest
/// squared norm among the effective steering vectors.
#[derive(Debug, Clone)]
pub struct Sdr21 {
    pub problem: ConicProblem,
    /// Combined channel `h` at the fixed reflection.
    pub h: CVec,
    /// `G^H Phi^H a(theta_l)` per sensing angle (columns).
    pub effective: CMat,
    pub kappa: f64,
    pub p0: f64,
    pub with_sensing: bool,
}

/// Optimal covariances of the relaxed transmit problem, in mW.
#[derive(Debug, Clone)]
pub struct TransmitSdrSolution {
    pub w_star: HermitianMatrix,
    pub r0_star: HermitianMatrix,
    /// Minimum beampattern gain attained by `W* + R0*`.
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
}

impl TransmitSdrSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Builds the relaxed max-min problem. With `with_sensing = false` the
/// sensing covariance block is omitted (`R0 = 0`).
pub fn build_sdr21_with(
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    params: &SystemParams,
    with_sensing: bool,
) -> Result<Sdr21> {
    let m = chan.m();
    let h = combined_channel(chan, refl)?;
    let effective = effective_steering(&params.sensing_angles, params.element_spacing_ratio, chan, refl)?;
    let kappa = effective
        .column_iter()
        .map(|c| c.norm_squared())
        .fold(0.0, f64::max);
    let kappa = if kappa > 0.0 { kappa } else { 1.0 };
    let n_blocks = if with_sensing { 2 } else { 1 };

    let mut base = ConicProblem::new(vec![2 * m; n_blocks], 0, Sense::Maximize);
    let mut power = LinearFunctional::new();
    for b in 0..n_blocks {
        power = power.block(b, hermitian_trace_coef(m));
    }
    base.add_constraint(power, Relation::Le, 1.0);

    // tr(h h^H W) >= Gamma sigma2, divided through by P0 ||h||^2
    let h_norm2 = h.norm_squared();
    let (h_unit, snr_rhs) = if h_norm2 > 0.0 {
        (
            &h / c64(h_norm2.sqrt(), 0.0),
            params.gamma * params.sigma2 / (params.p0 * h_norm2),
        )
    } else {
        (CVec::zeros(m), params.gamma * params.sigma2 / params.p0)
    };
    let snr_coef = if h_norm2 > 0.0 {
        vec![(0, hermitian_low_rank_coef(&LowRankHermitian::gram(CMat::from_column_slice(m, 1, h_unit.as_slice()))))]
    } else {
        Vec::new()
    };
    base.add_constraint(LinearFunctional { blocks: snr_coef, free: Vec::new() }, Relation::Ge, snr_rhs);

    let scale = 1.0 / kappa.sqrt();
    let objectives: Vec<LinearFunctional> = effective
        .column_iter()
        .map(|g| {
            let f = CMat::from_column_slice(m, 1, (g * c64(scale, 0.0)).as_slice());
            let coef = hermitian_low_rank_coef(&LowRankHermitian::gram(f));
            let mut lf = LinearFunctional::new();
            for b in 0..n_blocks {
                lf = lf.block(b, coef.clone());
            }
            lf
        })
        .collect();
    let (problem, _) = epigraph_maxmin(&objectives, base)?;
    Ok(Sdr21 {
        problem,
        h,
        effective,
        kappa,
        p0: params.p0,
        with_sensing,
    })
}

/// The joint information/sensing transmit relaxation.
pub fn build_sdr21(chan: &ChannelRealization, refl: &ReflectDesign, params: &SystemParams) -> Result<Sdr21> {
    build_sdr21_with(chan, refl, params, true)
}

/// Clips negative eigenvalues of an interior-point output.
fn project_psd(a: &HermitianMatrix) -> HermitianMatrix {
    let (ev, u) = eig_hermitian(a);
    if ev[0] >= 0.0 {
        return a.clone();
    }
    let mut us = u.clone();
    for (k, mut col) in us.column_iter_mut().enumerate() {
        col *= c64(ev[k].max(0.0), 0.0);
    }
    HermitianMatrix::symmetrized(us * u.adjoint())
}

impl Sdr21 {
    pub fn solve(&self) -> Result<TransmitSdrSolution> {
        let sol = solve(&self.problem)?;
        let m = self.h.len();
        let mut w = project_psd(&unembed(&sol.blocks[0])?).scale(self.p0);
        let mut r0 = if self.with_sensing {
            project_psd(&unembed(&sol.blocks[1])?).scale(self.p0)
        } else {
            HermitianMatrix::zeros(m)
        };
        let total = w.trace() + r0.trace();
        if total > self.p0 {
            let s = self.p0 / total;
            w = w.scale(s);
            r0 = r0.scale(s);
        }
        let objective = self.min_gain(&w.add(&r0));
        Ok(TransmitSdrSolution {
            w_star: w,
            r0_star: r0,
            objective,
            status: sol.status,
            iterations: sol.iterations,
        })
    }

    /// Minimum gain over the sensing angles for a transmit covariance.
    pub fn min_gain(&self, cov: &HermitianMatrix) -> f64 {
        gains_from_effective(&self.effective, cov)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn solve_sdr21(chan: &ChannelRealization, refl: &ReflectDesign, params: &SystemParams) -> Result<TransmitSdrSolution> {
    build_sdr21(chan, refl, params)?.solve()
}

/// Residuals of the four identities behind the rank-one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Report {
    /// `||W_hat + R0_hat - W* - R0*||_F / ||W* + R0*||_F`.
    pub covariance_residual: f64,
    /// `|h^H W_hat h - h^H W* h| / h^H W* h`.
    pub snr_residual: f64,
    /// Minimum eigenvalue of `W* - W_hat`.
    pub min_eig_w_gap: f64,
    /// Minimum eigenvalue of `R0_hat`.
    pub min_eig_r0: f64,
}

impl Prop1Report {
    pub fn holds(&self, rel_tol: f64, psd_tol: f64) -> bool {
        self.covariance_residual <= rel_tol
            && self.snr_residual <= rel_tol
            && self.min_eig_w_gap >= -psd_tol
            && self.min_eig_r0 >= -psd_tol
    }
}

/// `w_hat = W* h / sqrt(h^H W* h)`, `W_hat = w_hat w_hat^H`,
/// `R0_hat = R0* + W* - W_hat`.
pub fn prop1_extract(
    w_star: &HermitianMatrix,
    r0_star: &HermitianMatrix,
    h: &CVec,
) -> Result<(TransmitDesign, Prop1Report)> {
    let q = w_star.quad_form(h);
    let floor = 1e-14 * w_star.trace().abs().max(f64::MIN_POSITIVE) * h.norm_squared();
    if !(q > floor) {
        return Err(Error::DegenerateExtraction(q));
    }
    let w_hat = (w_star.as_matrix() * h) / c64(q.sqrt(), 0.0);
    let w_outer = HermitianMatrix::outer(&w_hat);
    let r0_hat = r0_star.add(w_star).sub(&w_outer);

    let before = w_star.add(r0_star);
    let after = w_outer.add(&r0_hat);
    let report = Prop1Report {
        covariance_residual: after.sub(&before).frobenius() / before.frobenius().max(f64::MIN_POSITIVE),
        snr_residual: (w_outer.quad_form(h) - q).abs() / q,
        min_eig_w_gap: w_star.sub(&w_outer).min_eigenvalue(),
        min_eig_r0: r0_hat.min_eigenvalue(),
    };
    let scale = before.frobenius().max(1.0);
    debug_assert!(
        report.holds(1e-7, 1e-8 * scale),
        "rank-one reconstruction identities violated: {report:?}"
    );
    Ok((
        TransmitDesign {
            w: w_hat,
            w_outer,
            r0: r0_hat,
        },
        report,
    ))
}

/// Rank-one design from a relaxed solution. When `Gamma = 0` and
/// `h^H W* h` vanishes, all power goes to sensing: `w = 0`, `R0 = W* + R0*`.
pub fn extract_transmit(sol: &TransmitSdrSolution, h: &CVec, gamma: f64) -> Result<(TransmitDesign, Option<Prop1Report>)> {
    match prop1_extract(&sol.w_star, &sol.r0_star, h) {
        Ok((tx, rep)) => Ok((tx, Some(rep))),
        Err(Error::DegenerateExtraction(_)) if gamma == 0.0 => {
            let m = h.len();
            let tx = TransmitDesign {
                w: CVec::zeros(m),
                w_outer: HermitianMatrix::zeros(m),
                r0: sol.w_star.add(&sol.r0_star),
            };
            Ok((tx, None))
        }
        Err(e) => Err(e),
    }
}

/// Outcome of the information-only transmit design.
#[derive(Debug, Clone)]
pub struct InfoOnlyOutcome {
    pub design: TransmitDesign,
    /// Minimum gain of the returned beamformer.
    pub objective: f64,
    /// Optimum of the restricted relaxation (an upper bound on `objective`).
    pub sdr_objective: f64,
    /// `false` when the relaxed optimum was already rank one.
    pub randomized: bool,
}

/// Information-beam-only transmit design (`R0 = 0`).
///
/// A rank-one relaxed optimum is used directly. Otherwise candidates are
/// drawn from `CN(0, W*)`. A candidate short of the SNR target is scaled up
/// to meet it with equality, one above the power budget is scaled down onto
/// it, and the best candidate still meeting the target is returned.
pub fn solve_transmit_info_only<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    params: &SystemParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<InfoOnlyOutcome> {
    let sdr = build_sdr21_with(chan, refl, params, false)?;
    let sol = sdr.solve()?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible("information-only transmit relaxation".into())),
        s => return Err(Error::Solver(format!("information-only transmit relaxation ended with {s:?}"))),
    }
    let m = chan.m();
    let (ev, u) = eig_hermitian(&sol.w_star);
    let l1 = ev[m - 1];
    let l2 = if m > 1 { ev[m - 2] } else { 0.0 };
    let principal = u.column(m - 1).into_owned();
    let snr_floor = params.gamma * params.sigma2 * (1.0 - CANDIDATE_SNR_TOL);
    let h = &sdr.h;

    if l1 > 0.0 && l2 / l1 <= RANK_ONE_RATIO {
        let w = &principal * c64(sol.w_star.trace().sqrt(), 0.0);
        if h.dotc(&w).norm_sqr() >= snr_floor {
            let design = TransmitDesign::information_only(w);
            let objective = sdr.min_gain(&design.w_outer);
            return Ok(InfoOnlyOutcome {
                design,
                objective,
                sdr_objective: sol.objective,
                randomized: false,
            });
        }
    }

    if n_samples == 0 {
        return Err(Error::InvalidParam("at least one randomization is required".into()));
    }
    let gauss = ComplexGaussian::zero_mean(&sol.w_star)?;
    let mut cands = gauss.sample_many(n_samples, rng);
    let target = params.gamma * params.sigma2;
    for mut c in cands.column_iter_mut() {
        let hw = h.dotc(&c.clone_owned()).norm_sqr();
        if hw < target && hw > 0.0 {
            c *= c64((target / hw).sqrt(), 0.0);
        }
        let pw = c.norm_squared();
        if pw > params.p0 {
            c *= c64((params.p0 / pw).sqrt(), 0.0);
        }
    }
    let snrs = adjoint_mul(&CMat::from_column_slice(m, 1, h.as_slice()), &cands);
    let gains = adjoint_mul(&sdr.effective, &cands);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..cands.ncols() {
        if snrs[(0, k)].norm_sqr() < snr_floor || cands.column(k).norm() == 0.0 {
            continue;
        }
        let g = gains.column(k).iter().map(|z| z.norm_sqr()).fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(_, b)| g > b) {
            best = Some((k, g));
        }
    }
    let (k, objective) = best.ok_or(Error::RoundingFailed { samples: n_samples })?;
    let design = TransmitDesign::information_only(cands.column(k).into_owned());
    Ok(InfoOnlyOutcome {
        design,
        objective,
        sdr_objective: sol.objective,
        randomized: true,
    })
}
