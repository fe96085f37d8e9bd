//! Physical-layer quantities: combined channel, CU SNR and IRS beampattern
//! gain, plus the transmit and reflect design containers they act on.

use rand::Rng;

use crate::channel::{steering_vector, ChannelRealization};
use crate::error::{Error, Result};
use crate::numerics::{c64, eig_hermitian, CMat, CVec, HermitianMatrix, RVec, C64};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Quadratic forms below this (in absolute value) are round-off.
const CLAMP: f64 = 1e-10;

fn clamp_nonneg(x: f64) -> f64 {
    if x < 0.0 && x >= -CLAMP {
        0.0
    } else {
        x.max(0.0)
    }
}

/// Information beamformer `w`, its outer product `W = w w^H`, and the
/// sensing covariance `R0`.
#[derive(Debug, Clone)]
pub struct TransmitDesign {
    pub w: CVec,
    pub w_outer: HermitianMatrix,
    pub r0: HermitianMatrix,
}

impl TransmitDesign {
    pub fn new(w: CVec, r0: HermitianMatrix) -> Result<Self> {
        if r0.dim() != w.len() {
            return Err(Error::DimensionMismatch {
                context: "sensing covariance vs beamformer length",
                expected: w.len(),
                got: r0.dim(),
            });
        }
        let w_outer = HermitianMatrix::outer(&w);
        Ok(Self { w, w_outer, r0 })
    }

    /// Beamformer only, no dedicated sensing signal.
    pub fn information_only(w: CVec) -> Self {
        let m = w.len();
        Self {
            w_outer: HermitianMatrix::outer(&w),
            r0: HermitianMatrix::zeros(m),
            w,
        }
    }

    pub fn m(&self) -> usize {
        self.w.len()
    }

    /// Total transmit covariance `W + R0`.
    pub fn covariance(&self) -> HermitianMatrix {
        self.w_outer.add(&self.r0)
    }

    /// `tr(W) + tr(R0)`.
    pub fn power(&self) -> f64 {
        self.w.norm_squared() + self.r0.trace()
    }
}

/// IRS phase configuration. `phases` lie in `(0, 2 pi]`; `v` is the
/// conjugated unit-modulus vector `[e^{j phi_1}, ..., e^{j phi_N}]^H` and
/// `Phi = diag(e^{j phi_n})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectDesign {
    phases: RVec,
}

impl ReflectDesign {
    pub fn from_phases(phases: RVec) -> Result<Self> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParam("phases must be finite".into()));
        }
        Ok(Self {
            phases: phases.map(wrap_phase),
        })
    }

    /// Inverse of [`ReflectDesign::v`]: entries of `v` must be unit modulus.
    pub fn from_v(v: &CVec) -> Result<Self> {
        if v.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::Contract("reflection vector must be unit modulus".into()));
        }
        Self::from_phases(v.map(|z| -z.arg()))
    }

    /// All phases `2 pi`, i.e. `Phi = I`.
    pub fn identity(n: usize) -> Self {
        Self {
            phases: RVec::from_element(n, TWO_PI),
        }
    }

    /// Independent uniform phases.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let phases = RVec::from_fn(n, |_, _| wrap_phase(rng.random::<f64>() * TWO_PI));
        Self { phases }
    }

    /// Phases that co-phase the reflected and direct paths along the
    /// dominant direction of `[diag(h_r^H) G; h_d^H]`.
    pub fn cascade_aligned(chan: &ChannelRealization) -> Self {
        let n = chan.n();
        let h = chan.cascade();
        let mut stacked = CMat::zeros(n + 1, chan.m());
        stacked.rows_mut(0, n).copy_from(&h);
        stacked.row_mut(n).copy_from(&chan.h_d.adjoint());
        let gram = HermitianMatrix::symmetrized(&stacked * stacked.adjoint());
        let (_, u) = eig_hermitian(&gram);
        let top = u.column(n);
        let anchor = top[n];
        let v = CVec::from_fn(n, |i, _| {
            let r = if anchor.norm() > 0.0 { top[i] / anchor } else { top[i] };
            if r.norm() > 0.0 {
                r / r.norm()
            } else {
                c64(1.0, 0.0)
            }
        });
        Self::from_v(&v).unwrap_or_else(|_| Self::identity(n))
    }

    pub fn n(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &RVec {
        &self.phases
    }

    /// Diagonal of `Phi`.
    pub fn phi_diag(&self) -> CVec {
        self.phases.map(|p| C64::from_polar(1.0, p))
    }

    pub fn v(&self) -> CVec {
        self.phases.map(|p| C64::from_polar(1.0, -p))
    }

    /// `v_bar = [v; 1]`.
    pub fn v_bar(&self) -> CVec {
        let n = self.n();
        CVec::from_fn(n + 1, |i, _| {
            if i < n {
                C64::from_polar(1.0, -self.phases[i])
            } else {
                c64(1.0, 0.0)
            }
        })
    }

    pub fn phi(&self) -> CMat {
        CMat::from_diagonal(&self.phi_diag())
    }
}

fn wrap_phase(p: f64) -> f64 {
    let r = p.rem_euclid(TWO_PI);
    if r == 0.0 {
        TWO_PI
    } else {
        r
    }
}

fn check_dims(chan: &ChannelRealization, refl: &ReflectDesign) -> Result<()> {
    if refl.n() != chan.n() {
        return Err(Error::DimensionMismatch {
            context: "IRS phases vs channel rows",
            expected: chan.n(),
            got: refl.n(),
        });
    }
    Ok(())
}

fn check_tx(chan: &ChannelRealization, tx: &TransmitDesign) -> Result<()> {
    if tx.m() != chan.m() {
        return Err(Error::DimensionMismatch {
            context: "beamformer vs BS antennas",
            expected: chan.m(),
            got: tx.m(),
        });
    }
    Ok(())
}

/// `h = G^H Phi^H h_r + h_d`.
pub fn combined_channel(chan: &ChannelRealization, refl: &ReflectDesign) -> Result<CVec> {
    check_dims(chan, refl)?;
    let phi_h_hr = chan.h_r.component_mul(&refl.v());
    Ok(chan.g.ad_mul(&phi_h_hr) + &chan.h_d)
}

/// `|h^H w|^2 / sigma2`.
pub fn snr(chan: &ChannelRealization, refl: &ReflectDesign, tx: &TransmitDesign, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParam("noise power must be positive".into()));
    }
    check_tx(chan, tx)?;
    let h = combined_channel(chan, refl)?;
    Ok(h.dotc(&tx.w).norm_sqr() / sigma2)
}

/// `h^H W h / sigma2` for a general transmit covariance `W`.
pub fn snr_covariance(h: &CVec, w: &HermitianMatrix, sigma2: f64) -> f64 {
    clamp_nonneg(w.quad_form(h)) / sigma2
}

/// Effective transmit-side vectors `G^H Phi^H a(theta_l)`, one column per angle.
pub fn effective_steering(
    thetas: &[f64],
    spacing_ratio: f64,
    chan: &ChannelRealization,
    refl: &ReflectDesign,
) -> Result<CMat> {
    check_dims(chan, refl)?;
    let v = refl.v();
    let mut a = CMat::zeros(chan.n(), thetas.len());
    for (l, &t) in thetas.iter().enumerate() {
        a.set_column(l, &steering_vector(t, chan.n(), spacing_ratio).component_mul(&v));
    }
    Ok(chan.g.ad_mul(&a))
}

/// `a^H(theta) Phi G (W + R0) G^H Phi^H a(theta)`.
pub fn beampattern_gain(
    theta: f64,
    spacing_ratio: f64,
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    tx: &TransmitDesign,
) -> Result<f64> {
    Ok(beampattern(&[theta], spacing_ratio, chan, refl, tx)?[0])
}

/// Gains for many angles at once.
pub fn beampattern(
    thetas: &[f64],
    spacing_ratio: f64,
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    tx: &TransmitDesign,
) -> Result<Vec<f64>> {
    check_tx(chan, tx)?;
    let b = effective_steering(thetas, spacing_ratio, chan, refl)?;
    Ok(gains_from_effective(&b, &tx.covariance()))
}

/// `diag(B^H C B)` clamped at zero.
pub fn gains_from_effective(b: &CMat, cov: &HermitianMatrix) -> Vec<f64> {
    let cb = cov.as_matrix() * b;
    (0..b.ncols())
        .map(|l| clamp_nonneg(b.column(l).dotc(&cb.column(l)).re))
        .collect()
}

/// Minimum gain over `thetas`.
pub fn min_gain(
    thetas: &[f64],
    spacing_ratio: f64,
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    tx: &TransmitDesign,
) -> Result<f64> {
    let g = beampattern(thetas, spacing_ratio, chan, refl, tx)?;
    Ok(g.into_iter().fold(f64::INFINITY, f64::min))
}

/// Result of the end-to-end feasibility check of a joint design.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub snr: f64,
    pub power: f64,
    pub max_modulus_error: f64,
    pub min_eig_r0: f64,
    pub violations: Vec<String>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Independent check of SNR `>= Gamma (1 - 1e-6)`, power `<= P0 (1 + 1e-6)`,
/// unit-modulus reflection and PSD sensing covariance, recomputed from the
/// raw channel rather than from any solver output.
pub fn check_feasibility(
    chan: &ChannelRealization,
    refl: &ReflectDesign,
    tx: &TransmitDesign,
    p0: f64,
    sigma2: f64,
    gamma: f64,
) -> Result<FeasibilityReport> {
    let s = snr(chan, refl, tx, sigma2)?;
    let power = tx.power();
    let max_modulus_error = refl
        .v()
        .iter()
        .map(|z| (z.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let (ev, _) = eig_hermitian(&tx.r0);
    let min_eig_r0 = ev[0];
    let scale = ev[ev.len() - 1].abs().max(1.0);
    let mut violations = Vec::new();
    if s < gamma * (1.0 - 1e-6) {
        violations.push(format!("SNR {s:.6e} below threshold {gamma:.6e}"));
    }
    if power > p0 * (1.0 + 1e-6) {
        violations.push(format!("power {power:.6e} exceeds budget {p0:.6e}"));
    }
    if max_modulus_error > 1e-9 {
        violations.push(format!("reflection modulus error {max_modulus_error:.3e}"));
    }
    if min_eig_r0 < -1e-8 * scale {
        violations.push(format!("sensing covariance eigenvalue {min_eig_r0:.3e}"));
    }
    Ok(FeasibilityReport {
        snr: s,
        power,
        max_modulus_error,
        min_eig_r0,
        violations,
    })
}
