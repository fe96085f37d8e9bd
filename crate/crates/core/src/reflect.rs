//! Reflection design for a fixed transmit covariance: lifting to
//! `v_bar = [v; 1]`, the relaxed SDP over `V_bar`, and Gaussian
//! randomization back to unit-modulus phases.

use rand::Rng;

use crate::channel::{steering_vector, ChannelRealization, SystemParams};
use crate::conic::{
    epigraph_maxmin, hermitian_diag_entry_coef, hermitian_low_rank_coef, solve, unembed,
    ConicProblem, LinearFunctional, Relation, Sense, Status,
};
use crate::error::{Error, Result};
use crate::metrics::{ReflectDesign, TransmitDesign};
use crate::numerics::{
    adjoint_mul_split, c64, eig_hermitian, psd_factor, split, CMat, CVec, ComplexGaussian,
    HermitianMatrix, LowRankHermitian, RMat, C64,
};

pub const DEFAULT_SAMPLES: usize = 1000;
/// Relative SNR shortfall accepted for rounded candidates.
pub const ROUNDING_SNR_TOL: f64 = 1e-9;
/// Eigenvalues of the transmit covariance below this fraction of the largest
/// are treated as zero when factoring it.
const FACTOR_TOL: f64 = 1e-12;

/// Lifted data of the reflection subproblem.
///
/// `R1(theta_l) = B_l B_l^H` with `B_l = diag(a(theta_l)^*) G L` and
/// `W + R0 = L L^H`; `R2` pads `R1` with a zero last row and column.
/// `R3 = [[H W H^H, H W h_d], [h_d^H W H^H, 0]]` with `H = diag(h_r^H) G`
/// is stored as the signed low-rank form
/// `sum_k g_k g_k^H - (sum_k |c_k|^2) e e^H`, `g_k = [H w_k; h_d^H w_k]`.
#[derive(Debug, Clone)]
pub struct LiftedReflectProblem {
    pub n: usize,
    pub gain_factors: Vec<CMat>,
    /// `None` when there is no SNR constraint.
    pub r3: Option<LowRankHermitian>,
    /// `h_d^H W h_d`.
    pub direct_term: f64,
    /// `Gamma sigma2`.
    pub snr_rhs: f64,
    stacked_re: RMat,
    stacked_im: RMat,
}

impl LiftedReflectProblem {
    fn from_parts(
        gain_factors: Vec<CMat>,
        r3: Option<LowRankHermitian>,
        direct_term: f64,
        snr_rhs: f64,
        n: usize,
    ) -> Self {
        let cols: usize = gain_factors.iter().map(|b| b.ncols()).sum();
        let mut stacked = CMat::zeros(n, cols);
        let mut at = 0;
        for b in &gain_factors {
            stacked.columns_mut(at, b.ncols()).copy_from(b);
            at += b.ncols();
        }
        let (stacked_re, stacked_im) = split(&stacked);
        Self {
            n,
            gain_factors,
            r3,
            direct_term,
            snr_rhs,
            stacked_re,
            stacked_im,
        }
    }

    pub fn num_angles(&self) -> usize {
        self.gain_factors.len()
    }

    pub fn r1(&self, l: usize) -> HermitianMatrix {
        let b = &self.gain_factors[l];
        HermitianMatrix::symmetrized(b * b.adjoint())
    }

    pub fn r2(&self, l: usize) -> HermitianMatrix {
        let n = self.n;
        let mut m = CMat::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(self.r1(l).as_matrix());
        HermitianMatrix::symmetrized(m)
    }

    pub fn r3_dense(&self) -> HermitianMatrix {
        self.r3
            .as_ref()
            .map(|r| r.dense())
            .unwrap_or_else(|| HermitianMatrix::zeros(self.n + 1))
    }

    /// `v^H R1(theta_l) v` for every angle.
    pub fn gains(&self, v: &CVec) -> Vec<f64> {
        self.gain_factors
            .iter()
            .map(|b| b.ad_mul(v).norm_squared())
            .collect()
    }

    pub fn min_gain(&self, v: &CVec) -> f64 {
        self.gains(v).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `v_bar^H R3 v_bar + h_d^H W h_d`, i.e. the SNR times `sigma2`.
    pub fn snr_numerator(&self, v_bar: &CVec) -> f64 {
        self.r3.as_ref().map_or(0.0, |r| r.quad_form(v_bar)) + self.direct_term
    }

    /// Minimum of `tr(R2(theta_l) V_bar)` over the angles.
    pub fn relaxed_min_gain(&self, v_bar: &HermitianMatrix) -> f64 {
        let n = self.n;
        let top = v_bar.as_matrix().view((0, 0), (n, n)).into_owned();
        self.gain_factors
            .iter()
            .map(|b| {
                let vb = &top * b;
                (0..b.ncols()).map(|k| b.column(k).dotc(&vb.column(k)).re).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn gain_factors(chan: &ChannelRealization, l_factor: &CMat, params: &SystemParams) -> Vec<CMat> {
    let gl = &chan.g * l_factor;
    params
        .sensing_angles
        .iter()
        .map(|&t| {
            let a = steering_vector(t, chan.n(), params.element_spacing_ratio);
            let mut b = gl.clone();
            for (i, mut row) in b.row_iter_mut().enumerate() {
                row *= a[i].conj();
            }
            b
        })
        .collect()
}

/// Lifts the reflection subproblem at a fixed transmit design.
pub fn build_lifted(chan: &ChannelRealization, tx: &TransmitDesign, params: &SystemParams) -> Result<LiftedReflectProblem> {
    if tx.m() != chan.m() {
        return Err(Error::DimensionMismatch {
            context: "transmit design vs BS antennas",
            expected: chan.m(),
            got: tx.m(),
        });
    }
    let n = chan.n();
    let l_factor = psd_factor(&tx.covariance(), FACTOR_TOL)?;
    let factors = gain_factors(chan, &l_factor, params);

    let w_factor = psd_factor(&tx.w_outer, FACTOR_TOL)?;
    let hw = chan.cascade() * &w_factor;
    let cw = w_factor.ad_mul(&chan.h_d).conjugate();
    let k = w_factor.ncols();
    let mut f3 = CMat::zeros(n + 1, k + 1);
    f3.view_mut((0, 0), (n, k)).copy_from(&hw);
    for j in 0..k {
        f3[(n, j)] = cw[j];
    }
    f3[(n, k)] = c64(1.0, 0.0);
    let mut weights = vec![1.0; k + 1];
    weights[k] = -cw.norm_squared();
    let r3 = LowRankHermitian::new(f3, weights)?;
    let direct_term = tx.w_outer.quad_form(&chan.h_d).max(0.0);
    Ok(LiftedReflectProblem::from_parts(
        factors,
        Some(r3),
        direct_term,
        params.gamma * params.sigma2,
        n,
    ))
}

/// Lifted sensing-only problem: `max min_l ||a(theta_l)^H Phi G||^2`, i.e.
/// the transmit covariance is the identity and no SNR constraint applies.
pub fn build_lifted_sensing_only(chan: &ChannelRealization, params: &SystemParams) -> LiftedReflectProblem {
    let factors = gain_factors(chan, &CMat::identity(chan.m(), chan.m()), params);
    LiftedReflectProblem::from_parts(factors, None, 0.0, 0.0, chan.n())
}

/// Relaxed optimum over `V_bar`.
#[derive(Debug, Clone)]
pub struct ReflectSdrSolution {
    pub v_bar: HermitianMatrix,
    /// `min_l tr(R2(theta_l) V_bar)`.
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
}

impl ReflectSdrSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Conic form of the relaxation; gains are divided by the largest
/// `tr(R1(theta_l))` so the epigraph variable is of order one.
pub fn sdr31_problem(lp: &LiftedReflectProblem) -> Result<ConicProblem> {
    let n = lp.n;
    let dim = n + 1;
    let mut base = ConicProblem::new(vec![2 * dim], 0, Sense::Maximize);
    for i in 0..dim {
        base.add_constraint(
            LinearFunctional::new().block(0, hermitian_diag_entry_coef(dim, i)),
            Relation::Eq,
            1.0,
        );
    }
    if let Some(r3) = &lp.r3 {
        let rhs = lp.snr_rhs - lp.direct_term;
        let scale = lp.snr_rhs.max(f64::MIN_POSITIVE);
        let coef = LowRankHermitian::new(
            r3.factor.clone(),
            r3.weights.iter().map(|w| w / scale).collect(),
        )?;
        base.add_constraint(
            LinearFunctional::new().block(0, hermitian_low_rank_coef(&coef)),
            Relation::Ge,
            rhs / scale,
        );
    }
    let kappa = lp
        .gain_factors
        .iter()
        .map(|b| b.norm_squared())
        .fold(0.0, f64::max);
    let inv = if kappa > 0.0 { 1.0 / kappa.sqrt() } else { 1.0 };
    let objectives: Vec<LinearFunctional> = lp
        .gain_factors
        .iter()
        .map(|b| {
            let mut f = CMat::zeros(dim, b.ncols());
            f.view_mut((0, 0), (n, b.ncols())).copy_from(&(b * c64(inv, 0.0)));
            LinearFunctional::new().block(0, hermitian_low_rank_coef(&LowRankHermitian::gram(f)))
        })
        .collect();
    Ok(epigraph_maxmin(&objectives, base)?.0)
}

pub fn solve_sdr31(lp: &LiftedReflectProblem) -> Result<ReflectSdrSolution> {
    let sol = solve(&sdr31_problem(lp)?)?;
    let raw = unembed(&sol.blocks[0])?;
    let (ev, u) = eig_hermitian(&raw);
    let v_bar = if ev[0] < 0.0 {
        let mut us = u.clone();
        for (k, mut col) in us.column_iter_mut().enumerate() {
            col *= c64(ev[k].max(0.0), 0.0);
        }
        HermitianMatrix::symmetrized(us * u.adjoint())
    } else {
        raw
    };
    let objective = lp.relaxed_min_gain(&v_bar);
    Ok(ReflectSdrSolution {
        v_bar,
        objective,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Best rounded candidate.
#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub design: ReflectDesign,
    /// Minimum gain of the chosen candidate.
    pub objective: f64,
    /// Number of candidates meeting the SNR constraint.
    pub feasible: usize,
    pub samples: usize,
}

/// Gaussian randomization: draws `r ~ CN(0, V_bar)`, maps each draw to
/// `v = exp(j arg(r_{1:N} / r_{N+1}))`, discards candidates violating the SNR
/// constraint and returns the one with the largest minimum gain (lowest
/// sample index on ties).
pub fn gaussian_round<R: Rng + ?Sized>(
    sol: &ReflectSdrSolution,
    lp: &LiftedReflectProblem,
    n_samples: usize,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("at least one randomization is required".into()));
    }
    let n = lp.n;
    let gauss = ComplexGaussian::zero_mean(&sol.v_bar)?;
    let mut draws = gauss.sample_many(n_samples, rng);
    for k in 0..n_samples {
        let mut tries = 0;
        while draws[(n, k)].norm() == 0.0 {
            tries += 1;
            if tries > 64 {
                return Err(Error::RoundingFailed { samples: n_samples });
            }
            draws.set_column(k, &gauss.sample(rng));
        }
    }
    let mut vs = CMat::zeros(n, n_samples);
    for k in 0..n_samples {
        let anchor = draws[(n, k)].conj();
        for i in 0..n {
            vs[(i, k)] = unit_phase(draws[(i, k)] * anchor);
        }
    }

    let (vr, vi) = split(&vs);
    let q = adjoint_mul_split(&lp.stacked_re, &lp.stacked_im, &vr, &vi);
    let snr_floor = lp.snr_rhs * (1.0 - ROUNDING_SNR_TOL);
    let mut best: Option<(usize, f64)> = None;
    let mut feasible = 0;
    for k in 0..n_samples {
        let v = vs.column(k).into_owned();
        if lp.r3.is_some() {
            let mut v_bar = CVec::zeros(n + 1);
            v_bar.rows_mut(0, n).copy_from(&v);
            v_bar[n] = c64(1.0, 0.0);
            if lp.snr_numerator(&v_bar) < snr_floor {
                continue;
            }
        }
        feasible += 1;
        let mut at = 0;
        let mut g_min = f64::INFINITY;
        for b in &lp.gain_factors {
            let g: f64 = (at..at + b.ncols()).map(|r| q[(r, k)].norm_sqr()).sum();
            g_min = g_min.min(g);
            at += b.ncols();
        }
        if best.is_none_or(|(_, b)| g_min > b) {
            best = Some((k, g_min));
        }
    }
    let (k, objective) = best.ok_or(Error::RoundingFailed { samples: n_samples })?;
    let design = ReflectDesign::from_v(&vs.column(k).into_owned())?;
    Ok(RoundingOutcome {
        design,
        objective,
        feasible,
        samples: n_samples,
    })
}

fn unit_phase(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        c64(1.0, 0.0)
    }
}

/// Sensing-only reflection design: relaxation of
/// `max min_l ||a(theta_l)^H Phi G||^2` followed by Gaussian randomization.
pub fn solve_p4<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    params: &SystemParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    let lp = build_lifted_sensing_only(chan, params);
    let sol = solve_sdr31(&lp)?;
    if !sol.is_optimal() {
        return Err(Error::Solver(format!("sensing-only relaxation ended with {:?}", sol.status)));
    }
    gaussian_round(&sol, &lp, n_samples, rng)
}
