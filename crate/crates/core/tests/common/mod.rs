//! Independent oracles shared by the integration tests. Nothing here calls the
//! conic solver or the rounding code.

#![allow(dead_code)]

use std::f64::consts::PI;

use isac_core::channel::{gen_channels, steering_vector, ChannelRealization, SystemParams};
use isac_core::numerics::{c64, seeded_stream, CVec};

/// Small system with `n` IRS elements, `m` BS antennas and a single sensing
/// angle `theta`.
pub fn toy_params(n: usize, m: usize, theta: f64) -> SystemParams {
    SystemParams {
        n,
        m,
        sensing_angles: vec![theta],
        ..SystemParams::default()
    }
}

pub fn toy_channel(params: &SystemParams, seed: u64) -> ChannelRealization {
    gen_channels(params, &mut seeded_stream(seed, 0)).expect("channel")
}

/// Combined channel and effective steering vector for phases `phi`, computed
/// directly from the definitions.
pub fn direct_quantities(chan: &ChannelRealization, phases: &[f64], theta: f64, spacing: f64) -> (CVec, CVec) {
    let n = chan.n();
    let a = steering_vector(theta, n, spacing);
    let v: CVec = CVec::from_iterator(n, phases.iter().map(|&p| c64(p.cos(), -p.sin())));
    // h = G^H (v . h_r) + h_d with v = conj(e^{j phi})
    let h = chan.g.adjoint() * v.component_mul(&chan.h_r) + &chan.h_d;
    // b = G^H Phi^H a = G^H (v . a)
    let b = chan.g.adjoint() * v.component_mul(&a);
    (h, b)
}

/// Best single-angle gain `max |b^H w|^2` subject to `||w||^2 <= p0` and
/// `|h^H w|^2 >= c`, in closed form: the matched filter when it already meets
/// the SNR target, otherwise the unit-power beam in `span{h, b}` that meets
/// the target with equality. `None` when the target is unreachable.
pub fn matched_gain(b: &CVec, h: &CVec, p0: f64, c: f64) -> Option<f64> {
    let hn2 = h.norm_squared();
    if p0 * hn2 < c {
        return None;
    }
    let bn = b.norm();
    if bn == 0.0 {
        return Some(0.0);
    }
    let hb = h.dotc(b).norm();
    if p0 * hb * hb / (bn * bn) >= c {
        return Some(p0 * bn * bn);
    }
    let h_unit = h / c64(hn2.sqrt(), 0.0);
    let along = h_unit.dotc(b);
    let perp = (b - &h_unit * along).norm();
    let cos_t = (c / (p0 * hn2)).sqrt().min(1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    Some(p0 * (cos_t * along.norm() + sin_t * perp).powi(2))
}

/// Exhaustive search over a uniform phase grid with `points` values per
/// element (`n` = 1 or 2). Returns the best gain (`None` if no grid point
/// meets the SNR target) and the largest reachable SNR on the grid.
pub fn phase_grid_optimum(chan: &ChannelRealization, params: &SystemParams, points: usize) -> (Option<f64>, f64) {
    let n = chan.n();
    assert!(n == 1 || n == 2, "grid search only for one or two elements");
    let theta = params.sensing_angles[0];
    let c = params.gamma * params.sigma2;
    let step = 2.0 * PI / points as f64;
    let mut best: Option<f64> = None;
    let mut max_snr: f64 = 0.0;
    let outer = if n == 2 { points } else { 1 };
    for i in 0..points {
        for k in 0..outer {
            let phases: Vec<f64> = if n == 2 {
                vec![i as f64 * step, k as f64 * step]
            } else {
                vec![i as f64 * step]
            };
            let (h, b) = direct_quantities(chan, &phases, theta, params.element_spacing_ratio);
            max_snr = max_snr.max(params.p0 * h.norm_squared() / params.sigma2);
            if let Some(g) = matched_gain(&b, &h, params.p0, c) {
                best = Some(best.map_or(g, |x: f64| x.max(g)));
            }
        }
    }
    (best, max_snr)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
