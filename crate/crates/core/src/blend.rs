//! Per-ray soft depth blending.
//!
//! For hits with NDC depth `z`, closeness `c` and opacity `o`:
//!
//! ```text
//! w_i  = o_i c_i exp(o_i z_i / gamma) / D
//! w_bg = exp(eps / gamma) / D
//! D    = exp(eps / gamma) + sum_k o_k c_k exp(o_k z_k / gamma)
//! ```
//!
//! Every evaluation factors out the largest exponent, so nothing overflows
//! even at `gamma = 1e-5`. The denominator is carried as `ln D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAMMA_MIN: f64 = 1e-5;
pub const GAMMA_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendParams {
    /// Softness; clamped into `[1e-5, 1]` on use.
    pub gamma: f64,
    /// Background offset.
    pub epsilon: f64,
    /// Minimum weight a later sphere must be able to reach; 0 disables early
    /// termination.
    pub tau: f64,
    /// Hits kept per pixel for the backward pass.
    pub top_k: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            epsilon: 1e-2,
            tau: 0.01,
            top_k: 5,
        }
    }
}

impl BlendParams {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_top_k(mut self, top_k: usize) -> Self {
        self.top_k = top_k;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if self.top_k == 0 || self.top_k > u16::MAX as usize {
            return Err(Error::Config(format!(
                "top_k must lie in [1, 65535], got {}",
                self.top_k
            )));
        }
        Ok(())
    }

    pub fn effective_gamma(&self) -> f64 {
        self.gamma.clamp(GAMMA_MIN, GAMMA_MAX)
    }

    /// Exponent of the background term, `eps / gamma`.
    pub fn background_exponent(&self) -> f64 {
        self.epsilon / self.effective_gamma()
    }
}

/// One ray-sphere intersection as seen by the blending function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit<'a> {
    pub sphere_id: usize,
    /// NDC depth in `[0, 1]`, 1 nearest.
    pub z: f64,
    /// `1 - distance / radius`, in `[0, 1]`.
    pub closeness: f64,
    /// Clamped opacity in `[0, 1]`.
    pub opacity: f64,
    pub feature: &'a [f64],
}

/// `ln D` for a set of `(z, c, o)` triples.
pub fn log_denominator<I>(terms: I, params: &BlendParams) -> f64
where
    I: IntoIterator<Item = (f64, f64, f64)> + Clone,
{
    let g = params.effective_gamma();
    let bg = params.background_exponent();
    let m = terms.clone().into_iter().map(|(z, _, o)| o * z / g).fold(bg, f64::max);
    let sum: f64 = (bg - m).exp()
        + terms
            .into_iter()
            .map(|(z, c, o)| o * c * (o * z / g - m).exp())
            .sum::<f64>();
    m + sum.ln()
}

/// Weight of a single hit given `ln D`.
#[inline]
pub fn hit_weight(z: f64, closeness: f64, opacity: f64, log_d: f64, gamma: f64) -> f64 {
    opacity * closeness * (opacity * z / gamma - log_d).exp()
}

/// Returns the per-hit weights (in input order) and the background weight.
pub fn blend_weights(hits: &[RayHit<'_>], params: &BlendParams) -> (Vec<f64>, f64) {
    let g = params.effective_gamma();
    let log_d = log_denominator(hits.iter().map(|h| (h.z, h.closeness, h.opacity)), params);
    let w = hits
        .iter()
        .map(|h| hit_weight(h.z, h.closeness, h.opacity, log_d, g))
        .collect();
    (w, (params.background_exponent() - log_d).exp())
}

/// Blended feature `sum_i w_i f_i + w_bg * background`.
pub fn blend_feature(hits: &[RayHit<'_>], params: &BlendParams, background: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, h)) = hits
        .iter()
        .enumerate()
        .find(|(_, h)| h.feature.len() != background.len())
    {
        return Err(Error::Validation {
            index: i,
            reason: format!(
                "hit on sphere {} has {} channels, background has {}",
                h.sphere_id,
                h.feature.len(),
                background.len()
            ),
        });
    }
    let (w, w_bg) = blend_weights(hits, params);
    let mut out: Vec<f64> = background.iter().map(|b| b * w_bg).collect();
    for (h, wi) in hits.iter().zip(&w) {
        for (o, f) in out.iter_mut().zip(h.feature) {
            *o += wi * f;
        }
    }
    Ok(out)
}

/// Smallest NDC depth at which a fully opaque, centered sphere could still
/// reach weight `tau` against a denominator `exp(log_d)`:
/// `gamma * ln(tau * D / (1 - tau))`. Returns `-inf` when `tau == 0`.
pub fn stop_depth_bound_log(log_d: f64, params: &BlendParams) -> f64 {
    if params.tau <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let g = params.effective_gamma();
    g * ((params.tau / (1.0 - params.tau)).ln() + log_d)
}

/// [`stop_depth_bound_log`] for a denominator given directly.
pub fn stop_depth_bound(current_d: f64, params: &BlendParams) -> f64 {
    stop_depth_bound_log(current_d.ln(), params)
}

/// Streaming form of the blend used by the rasterizer: hits arrive one at a
/// time and the running maximum exponent is rescaled on the fly.
#[derive(Debug, Clone)]
pub struct OnlineBlend {
    gamma: f64,
    bg_exponent: f64,
    max_exponent: f64,
    sum: f64,
    numerator: Vec<f64>,
}

impl OnlineBlend {
    pub fn new(params: &BlendParams, feature_dim: usize) -> Self {
        let bg = params.background_exponent();
        Self {
            gamma: params.effective_gamma(),
            bg_exponent: bg,
            max_exponent: bg,
            sum: 1.0,
            numerator: vec![0.0; feature_dim],
        }
    }

    /// Clears the state for the next pixel, keeping allocations.
    pub fn reset(&mut self) {
        self.max_exponent = self.bg_exponent;
        self.sum = 1.0;
        self.numerator.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn push(&mut self, z: f64, closeness: f64, opacity: f64, feature: &[f64]) {
        let e = opacity * z / self.gamma;
        if e > self.max_exponent {
            let scale = (self.max_exponent - e).exp();
            self.sum *= scale;
            self.numerator.iter_mut().for_each(|v| *v *= scale);
            self.max_exponent = e;
        }
        let t = opacity * closeness * (e - self.max_exponent).exp();
        self.sum += t;
        for (n, f) in self.numerator.iter_mut().zip(feature) {
            *n += t * f;
        }
    }

    pub fn log_denominator(&self) -> f64 {
        self.max_exponent + self.sum.ln()
    }

    pub fn background_weight(&self) -> f64 {
        (self.bg_exponent - self.log_denominator()).exp()
    }

    /// Writes the blended feature into `out`.
    pub fn finish(&self, background: &[f64], out: &mut [f64]) {
        let bg_term = (self.bg_exponent - self.max_exponent).exp();
        for ((o, n), b) in out.iter_mut().zip(&self.numerator).zip(background) {
            *o = (n + bg_term * b) / self.sum;
        }
    }
}

/// Partial derivatives of the weights with respect to every hit's inputs.
///
/// `d_z[i][k]` is `dw_i/dz_k`; likewise `d_closeness`, `d_opacity`. The
/// `bg_*` vectors hold the background weight's partials and `d_gamma[i]` is
/// `dw_i/dgamma` (last entry: background).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightJacobian {
    pub weights: Vec<f64>,
    pub background_weight: f64,
    pub d_z: Vec<Vec<f64>>,
    pub d_closeness: Vec<Vec<f64>>,
    pub d_opacity: Vec<Vec<f64>>,
    pub bg_d_z: Vec<f64>,
    pub bg_d_closeness: Vec<f64>,
    pub bg_d_opacity: Vec<f64>,
    pub d_gamma: Vec<f64>,
}

pub fn weight_jacobian(hits: &[RayHit<'_>], params: &BlendParams) -> WeightJacobian {
    let g = params.effective_gamma();
    let n = hits.len();
    let (w, w_bg) = blend_weights(hits, params);
    let log_d = log_denominator(hits.iter().map(|h| (h.z, h.closeness, h.opacity)), params);
    // dD/dx_k / D for each input kind
    let rel_z: Vec<f64> = hits.iter().zip(&w).map(|(h, wk)| wk * h.opacity / g).collect();
    let rel_c: Vec<f64> = hits
        .iter()
        .map(|h| h.opacity * (h.opacity * h.z / g - log_d).exp())
        .collect();
    let rel_o: Vec<f64> = hits
        .iter()
        .map(|h| h.closeness * (h.opacity * h.z / g - log_d).exp() * (1.0 + h.opacity * h.z / g))
        .collect();
    let mut d_z = vec![vec![0.0; n]; n];
    let mut d_c = vec![vec![0.0; n]; n];
    let mut d_o = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let own = if i == k { 1.0 } else { 0.0 };
            d_z[i][k] = (own * hits[i].opacity / g) * w[i] - w[i] * rel_z[k];
            d_c[i][k] = own * rel_c[i] - w[i] * rel_c[k];
            d_o[i][k] = own * rel_o[i] - w[i] * rel_o[k];
        }
    }
    let mean_oz = hits.iter().zip(&w).map(|(h, wk)| wk * h.opacity * h.z).sum::<f64>() + w_bg * params.epsilon;
    let mut d_gamma: Vec<f64> = hits
        .iter()
        .zip(&w)
        .map(|(h, wi)| wi / (g * g) * (mean_oz - h.opacity * h.z))
        .collect();
    d_gamma.push(w_bg / (g * g) * (mean_oz - params.epsilon));
    WeightJacobian {
        bg_d_z: rel_z.iter().map(|r| -w_bg * r).collect(),
        bg_d_closeness: rel_c.iter().map(|r| -w_bg * r).collect(),
        bg_d_opacity: rel_o.iter().map(|r| -w_bg * r).collect(),
        weights: w,
        background_weight: w_bg,
        d_z,
        d_closeness: d_c,
        d_opacity: d_o,
        d_gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F1: [f64; 3] = [1.0, 0.0, 0.0];
    const F2: [f64; 3] = [0.0, 1.0, 0.0];

    fn hit(z: f64, c: f64, o: f64, f: &[f64]) -> RayHit<'_> {
        RayHit {
            sphere_id: 0,
            z,
            closeness: c,
            opacity: o,
            feature: f,
        }
    }

    fn params(gamma: f64) -> BlendParams {
        BlendParams::default().with_gamma(gamma)
    }

    #[test]
    fn no_hits_is_background() {
        let (w, bg) = blend_weights(&[], &params(0.1));
        assert!(w.is_empty());
        assert_eq!(bg, 1.0);
        assert_eq!(
            blend_feature(&[], &params(0.1), &[0.2, 0.3, 0.4]).unwrap(),
            vec![0.2, 0.3, 0.4]
        );
    }

    #[test]
    fn transparent_hit_has_zero_weight() {
        let (w, bg) = blend_weights(&[hit(0.7, 1.0, 0.0, &F1)], &params(0.1));
        assert_eq!(w, vec![0.0]);
        assert_eq!(bg, 1.0);
    }

    #[test]
    fn two_hit_example() {
        let hits = [hit(0.8, 1.0, 1.0, &F1), hit(0.6, 1.0, 1.0, &F2)];
        let (w, bg) = blend_weights(&hits, &params(0.1));
        // e^8, e^6 and e^0.1 evaluated independently
        let (a, b, c) = (8f64.exp(), 6f64.exp(), 0.1f64.exp());
        let d = a + b + c;
        assert!((w[0] - a / d).abs() < 1e-15);
        assert!((w[1] - b / d).abs() < 1e-15);
        assert!((bg - c / d).abs() < 1e-15);
        assert!((w[0] - 0.8805).abs() < 5e-5);
        assert!((w[1] - 0.1192).abs() < 5e-5);
        assert!((bg - 3.3e-4).abs() < 1e-5);
    }

    #[test]
    fn hard_regime_returns_sphere_feature() {
        let f = [0.3, 0.6, 0.9];
        let out = blend_feature(&[hit(0.5, 1.0, 1.0, &f)], &params(1e-5), &[0.0; 3]).unwrap();
        for (o, e) in out.iter().zip(&f) {
            assert!((o - e).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_equal_hits() {
        let f = [0.25, 0.5, 0.75];
        let one = blend_feature(&[hit(0.5, 1.0, 1.0, &f)], &params(1e-3), &[0.0; 3]).unwrap();
        let two = blend_feature(
            &[hit(0.5, 1.0, 1.0, &f), hit(0.5, 1.0, 1.0, &f)],
            &params(1e-3),
            &[0.0; 3],
        )
        .unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn feature_dim_mismatch_is_validation_error() {
        let f = [1.0, 2.0];
        assert!(matches!(
            blend_feature(&[hit(0.5, 1.0, 1.0, &f)], &params(0.1), &[0.0; 3]),
            Err(Error::Validation { index: 0, .. })
        ));
    }

    #[test]
    fn stop_bound_examples() {
        let p = params(0.1).with_tau(0.0);
        assert_eq!(stop_depth_bound(10f64.exp(), &p), f64::NEG_INFINITY);

        let p = params(0.1).with_tau(0.01);
        let z = stop_depth_bound_log(10.0, &p);
        assert!((z - 0.540488).abs() < 1e-6, "{z}");
        // binary search over the literal weight formula w = e^{z/g}/(D + e^{z/g})
        let d = 10f64.exp();
        let (mut lo, mut hi) = (-2.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let e = (mid / 0.1).exp();
            if e / (d + e) >= 0.01 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((z - hi).abs() < 1e-9);

        let p = BlendParams {
            gamma: 1.0,
            epsilon: 0.01,
            tau: 0.01,
            top_k: 5,
        };
        let z = stop_depth_bound_log(0.01, &p);
        assert!((z - (0.01f64 * 0.01f64.exp() / 0.99).ln()).abs() < 1e-12);
        assert!(z < -4.5);
    }

    #[test]
    fn online_blend_matches_batch() {
        let fa = [0.1, 0.9];
        let fb = [0.7, 0.2];
        let fc = [0.4, 0.4];
        let hits = [
            hit(0.3, 0.5, 0.9, &fa),
            hit(0.9, 0.2, 1.0, &fb),
            hit(0.6, 1.0, 0.4, &fc),
        ];
        let p = params(0.01);
        let bg = [0.5, 0.5];
        let batch = blend_feature(&hits, &p, &bg).unwrap();
        let mut acc = OnlineBlend::new(&p, 2);
        for h in &hits {
            acc.push(h.z, h.closeness, h.opacity, h.feature);
        }
        let mut out = [0.0; 2];
        acc.finish(&bg, &mut out);
        for (a, b) in out.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-14);
        }
        let (_, w_bg) = blend_weights(&hits, &p);
        assert!((acc.background_weight() - w_bg).abs() < 1e-14);
    }

    #[test]
    fn no_overflow_at_minimum_gamma() {
        let hits = [hit(1.0, 1.0, 1.0, &F1), hit(0.99, 1.0, 1.0, &F2)];
        let (w, bg) = blend_weights(&hits, &params(1e-5));
        assert!(w.iter().all(|v| v.is_finite()) && bg.is_finite());
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    fn fd_check(hits: &[(f64, f64, f64)], gamma: f64) {
        let p = params(gamma);
        let feat = [0.0];
        let make = |t: &[(f64, f64, f64)]| -> Vec<f64> {
            let hs: Vec<RayHit> = t.iter().map(|&(z, c, o)| hit(z, c, o, &feat)).collect();
            let (mut w, bg) = blend_weights(&hs, &p);
            w.push(bg);
            w
        };
        let hs: Vec<RayHit> = hits.iter().map(|&(z, c, o)| hit(z, c, o, &feat)).collect();
        let jac = weight_jacobian(&hs, &p);
        let h = 1e-6;
        let close = |an: f64, fd: f64| (an - fd).abs() <= 1e-5 * fd.abs().max(an.abs()) + 1e-9;
        for k in 0..hits.len() {
            for field in 0..3 {
                let mut up = hits.to_vec();
                let mut dn = hits.to_vec();
                match field {
                    0 => {
                        up[k].0 += h;
                        dn[k].0 -= h;
                    }
                    1 => {
                        up[k].1 += h;
                        dn[k].1 -= h;
                    }
                    _ => {
                        up[k].2 += h;
                        dn[k].2 -= h;
                    }
                }
                let (wu, wd) = (make(&up), make(&dn));
                for i in 0..=hits.len() {
                    let fd = (wu[i] - wd[i]) / (2.0 * h);
                    let an = match (field, i == hits.len()) {
                        (0, false) => jac.d_z[i][k],
                        (1, false) => jac.d_closeness[i][k],
                        (_, false) => jac.d_opacity[i][k],
                        (0, true) => jac.bg_d_z[k],
                        (1, true) => jac.bg_d_closeness[k],
                        (_, true) => jac.bg_d_opacity[k],
                    };
                    assert!(close(an, fd), "field {field} i {i} k {k}: an {an} fd {fd}");
                }
            }
        }
        let pu = params(gamma + h);
        let pd = params(gamma - h);
        let weights = |p: &BlendParams| {
            let (mut w, bg) = blend_weights(&hs, p);
            w.push(bg);
            w
        };
        let (wu, wd) = (weights(&pu), weights(&pd));
        for i in 0..=hits.len() {
            let fd = (wu[i] - wd[i]) / (2.0 * h);
            assert!(close(jac.d_gamma[i], fd), "gamma i {i}: an {} fd {fd}", jac.d_gamma[i]);
        }
    }

    #[test]
    fn partials_match_central_differences() {
        fd_check(&[(0.8, 0.9, 0.7), (0.6, 0.4, 0.95), (0.3, 0.2, 0.5)], 0.3);
        fd_check(&[(0.5, 0.5, 0.5)], 0.05);
        fd_check(&[(0.45, 0.7, 0.8), (0.44, 0.6, 0.9)], 0.1);
    }

    fn hit_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
        proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, -2.0f64..2.0), 0..12)
    }

    proptest! {
        #[test]
        fn weights_normalize_and_lie_in_unit_range(
            raw in hit_strategy(), gamma in 1e-5f64..1.0,
        ) {
            let feats: Vec<[f64; 1]> = raw.iter().map(|r| [r.3]).collect();
            let hits: Vec<RayHit> = raw.iter().zip(&feats)
                .map(|(r, f)| hit(r.0, r.1, r.2, f)).collect();
            let (w, bg) = blend_weights(&hits, &params(gamma));
            let total: f64 = w.iter().sum::<f64>() + bg;
            // ln D reaches 1/gamma = 1e5 and carries an absolute rounding
            // error of that magnitude times the f64 epsilon.
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(w.iter().chain([bg].iter()).all(|v| (0.0..=1.0 + 1e-10).contains(v)));
        }

        #[test]
        fn feature_is_permutation_invariant(
            raw in hit_strategy(), gamma in 1e-5f64..1.0, seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let feats: Vec<[f64; 1]> = raw.iter().map(|r| [r.3]).collect();
            let hits: Vec<RayHit> = raw.iter().zip(&feats)
                .map(|(r, f)| hit(r.0, r.1, r.2, f)).collect();
            let mut shuffled = hits.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = blend_feature(&hits, &params(gamma), &[0.3]).unwrap();
            let b = blend_feature(&shuffled, &params(gamma), &[0.3]).unwrap();
            prop_assert!((a[0] - b[0]).abs() < 1e-6);
        }

        #[test]
        fn weight_monotone_in_own_inputs(
            z in 0.0f64..0.9, c in 0.01f64..0.9, o in 0.01f64..1.0,
            oz in 0.0f64..1.0, oc in 0.0f64..1.0, oo in 0.0f64..1.0,
            dz in 0.0f64..0.1, gamma in 1e-3f64..1.0,
        ) {
            let f = [0.0];
            let p = params(gamma);
            let base = blend_weights(&[hit(z, c, o, &f), hit(oz, oc, oo, &f)], &p).0[0];
            let more_z = blend_weights(&[hit(z + dz, c, o, &f), hit(oz, oc, oo, &f)], &p).0[0];
            let more_c = blend_weights(&[hit(z, c + dz, o, &f), hit(oz, oc, oo, &f)], &p).0[0];
            prop_assert!(more_z >= base * (1.0 - 1e-12));
            prop_assert!(more_c >= base * (1.0 - 1e-12));
            if z >= p.epsilon {
                let more_o = blend_weights(&[hit(z, c, (o + dz).min(1.0), &f), hit(oz, oc, oo, &f)], &p).0[0];
                prop_assert!(more_o >= base * (1.0 - 1e-12));
            }
        }

        #[test]
        fn stop_bound_monotone_in_denominator(
            a in 0.0f64..50.0, b in 0.0f64..50.0, tau in 0.001f64..0.5, gamma in 1e-5f64..1.0,
        ) {
            let p = params(gamma).with_tau(tau);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(stop_depth_bound_log(lo, &p) <= stop_depth_bound_log(hi, &p));
        }
    }
}
