//! System parameters, array steering vectors, path loss and random channel
//! realizations for the BS / IRS / CU geometry.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{c64, db_to_linear, standard_complex_matrix, standard_complex_vector, CMat, CVec};

/// Physical and geometric parameters, all powers in linear mW.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// BS antenna count.
    pub m: usize,
    /// IRS element count.
    pub n: usize,
    pub p0: f64,
    pub sigma2: f64,
    /// SNR threshold as a linear ratio.
    pub gamma: f64,
    pub bs_pos: [f64; 2],
    pub irs_pos: [f64; 2],
    pub cu_pos: [f64; 2],
    pub alpha_bi: f64,
    pub alpha_ic: f64,
    pub alpha_bc: f64,
    pub k0: f64,
    pub d0: f64,
    /// LoS-to-NLoS power ratio of the Rician links; `f64::INFINITY` gives
    /// pure line of sight.
    pub rician_k: f64,
    pub shadow_std_db: f64,
    pub element_spacing_ratio: f64,
    pub antenna_spacing_ratio: f64,
    /// Desired sensing directions seen from the IRS, radians.
    pub sensing_angles: Vec<f64>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m: 8,
            n: 64,
            p0: db_to_linear(20.0),
            sigma2: db_to_linear(-80.0),
            gamma: db_to_linear(10.0),
            bs_pos: [0.0, 0.0],
            irs_pos: [18.0, 2.0],
            cu_pos: [50.0, 0.0],
            alpha_bi: 2.5,
            alpha_ic: 2.5,
            alpha_bc: 3.5,
            k0: db_to_linear(-30.0),
            d0: 1.0,
            rician_k: 0.5,
            shadow_std_db: 10.0,
            element_spacing_ratio: 0.5,
            antenna_spacing_ratio: 0.5,
            sensing_angles: default_sensing_grid(),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.to_string()));
        if self.m == 0 || self.n == 0 {
            return bad("need at least one BS antenna and one IRS element");
        }
        if !(self.p0 > 0.0 && self.sigma2 > 0.0 && self.gamma >= 0.0) {
            return bad("P0 and sigma2 must be positive and Gamma nonnegative");
        }
        for r in [self.element_spacing_ratio, self.antenna_spacing_ratio] {
            if !(r > 0.0 && r <= 1.0) {
                return bad("spacing ratios must lie in (0, 1]");
            }
        }
        if !(self.k0 > 0.0 && self.d0 > 0.0) {
            return bad("reference path loss and distance must be positive");
        }
        if !(self.rician_k >= 0.0) || !(self.shadow_std_db >= 0.0) {
            return bad("Rician factor and shadowing std must be nonnegative");
        }
        if self.sensing_angles.is_empty() {
            return bad("at least one sensing angle is required");
        }
        Ok(())
    }
}

/// Five 2-degree intervals around -60, -30, 0, 30 and 60 degrees, sampled
/// every 0.25 degrees with both endpoints included (45 angles, radians,
/// ascending).
pub fn default_sensing_grid() -> Vec<f64> {
    let mut out = Vec::with_capacity(45);
    for centre in [-60.0_f64, -30.0, 0.0, 30.0, 60.0] {
        for k in 0..9 {
            let deg = centre - 1.0 + 0.25 * k as f64;
            out.push(deg.to_radians());
        }
    }
    out
}

/// Uniform linear array response, element `k` equal to
/// `exp(j 2 pi ratio k sin(theta))`.
pub fn steering_vector(theta: f64, n_elems: usize, spacing_ratio: f64) -> CVec {
    let step = 2.0 * std::f64::consts::PI * spacing_ratio * theta.sin();
    CVec::from_fn(n_elems, |k, _| {
        if k == 0 {
            c64(1.0, 0.0)
        } else {
            let (s, c) = (step * k as f64).sin_cos();
            c64(c, s)
        }
    })
}

/// `K0 (d / d0)^(-alpha)`.
pub fn path_loss(d: f64, alpha: f64, k0: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidParam(format!("distance must be positive, got {d}")));
    }
    Ok(k0 * (d / d0).powf(-alpha))
}

/// Direct-path geometry between two nodes.
fn link(from: [f64; 2], to: [f64; 2]) -> Result<(f64, f64)> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(Error::InvalidParam("coincident node positions".into()));
    }
    // arrays lie along the y axis; angles are measured from broadside
    Ok((d, (dy / d).asin()))
}

/// One random draw of the three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS to IRS, `N x M`.
    pub g: CMat,
    /// IRS to CU, length `N`.
    pub h_r: CVec,
    /// BS to CU, length `M`.
    pub h_d: CVec,
}

impl ChannelRealization {
    pub fn new(g: CMat, h_r: CVec, h_d: CVec) -> Result<Self> {
        if h_r.len() != g.nrows() {
            return Err(Error::DimensionMismatch {
                context: "h_r length vs rows of G",
                expected: g.nrows(),
                got: h_r.len(),
            });
        }
        if h_d.len() != g.ncols() {
            return Err(Error::DimensionMismatch {
                context: "h_d length vs columns of G",
                expected: g.ncols(),
                got: h_d.len(),
            });
        }
        let finite = g
            .iter()
            .chain(h_r.iter())
            .chain(h_d.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::InvalidParam("channel entries must be finite".into()));
        }
        Ok(Self { g, h_r, h_d })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    /// Cascaded channel `diag(h_r^H) G`.
    pub fn cascade(&self) -> CMat {
        let mut h = self.g.clone();
        for (i, mut row) in h.row_iter_mut().enumerate() {
            row *= self.h_r[i].conj();
        }
        h
    }
}

/// LoS and NLoS amplitude weights for a Rician factor `k`.
fn rician_weights(k: f64) -> (f64, f64) {
    if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (1.0 + k)).sqrt(), (1.0 / (1.0 + k)).sqrt())
    }
}

/// Pure line-of-sight BS-IRS channel `a(theta_irs) b(theta_bs)^H`.
pub fn los_channel(theta_irs: f64, theta_bs: f64, params: &SystemParams) -> CMat {
    let a = steering_vector(theta_irs, params.n, params.element_spacing_ratio);
    let b = steering_vector(theta_bs, params.m, params.antenna_spacing_ratio);
    &a * b.adjoint()
}

/// Draws `(G, h_r, h_d)`: Rician BS-IRS and IRS-CU links with LoS angles from
/// the node coordinates, Rayleigh BS-CU link with log-normal shadowing.
///
/// Random numbers are consumed in a fixed order (NLoS part of `G`, of `h_r`,
/// of `h_d`, then the shadowing variate) regardless of the Rician factor.
pub fn gen_channels<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Result<ChannelRealization> {
    let (d_bi, theta_bs_aod) = link(params.bs_pos, params.irs_pos)?;
    let (_, theta_irs_aoa) = link(params.irs_pos, params.bs_pos)?;
    let (d_ic, theta_irs_aod) = link(params.irs_pos, params.cu_pos)?;
    let (d_bc, _) = link(params.bs_pos, params.cu_pos)?;
    let pl_bi = path_loss(d_bi, params.alpha_bi, params.k0, params.d0)?;
    let pl_ic = path_loss(d_ic, params.alpha_ic, params.k0, params.d0)?;
    let pl_bc = path_loss(d_bc, params.alpha_bc, params.k0, params.d0)?;
    let (w_los, w_nlos) = rician_weights(params.rician_k);

    let g_nlos = standard_complex_matrix(params.n, params.m, rng);
    let hr_nlos = standard_complex_vector(params.n, rng);
    let hd_nlos = standard_complex_vector(params.m, rng);
    let z: f64 = StandardNormal.sample(rng);

    let g_los = los_channel(theta_irs_aoa, theta_bs_aod, params);
    let g = (g_los * c64(w_los, 0.0) + g_nlos * c64(w_nlos, 0.0)) * c64(pl_bi.sqrt(), 0.0);

    let a_ic = steering_vector(theta_irs_aod, params.n, params.element_spacing_ratio);
    let h_r = (a_ic * c64(w_los, 0.0) + hr_nlos * c64(w_nlos, 0.0)) * c64(pl_ic.sqrt(), 0.0);

    let chi = db_to_linear(params.shadow_std_db * z);
    let h_d = hd_nlos * c64((pl_bc * chi).sqrt(), 0.0);

    ChannelRealization::new(g, h_r, h_d)
}
