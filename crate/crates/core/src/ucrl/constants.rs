use serde::{Deserialize, Serialize};

use crate::confidence::log_term;
use crate::error::{Error, Result};

/// Every constant the agent and its guarantees depend on.
///
/// `m` is the faithful value from the formulas; experiments that need a
/// tractable sample size pass an override to the agent instead of editing
/// this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcrlConstants {
    pub epsilon: f64,
    pub delta: f64,
    pub discount: f64,
    pub num_states: usize,
    pub num_actions: usize,
    /// `ε(1-γ) / 4|S|`
    pub w_min: f64,
    /// `⌈log2(8|S| / ε(1-γ)²)⌉`
    pub iota_max: u32,
    /// `𝒦 = 𝒵(|S|)`
    pub kappa_set: Vec<u64>,
    /// `𝓘 = {0, ..., ι_max}`
    pub iota_set: Vec<u32>,
    /// `⌈log(1/(1-γ)) / (2 log 2)⌉`
    pub beta: u32,
    /// `𝒟 = 𝒵(β)`
    pub d_set: Vec<u64>,
    /// Delay length `H`, rounded up to whole steps.
    #[serde(rename = "H")]
    pub horizon: u64,
    pub delta1: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    pub m: f64,
    /// `N = 6|S×A| m`
    #[serde(rename = "N")]
    pub n_threshold: f64,
    /// `|S×A| |𝒦×𝓘|`
    pub u_max: u64,
    /// `4 N |𝒦×𝓘|`
    pub e_max: f64,
}

impl UcrlConstants {
    /// `w_ι = 2^ι w_min`
    pub fn w_iota(&self, iota: u32) -> f64 {
        2f64.powi(iota as i32) * self.w_min
    }

    /// `|𝒦×𝓘|`
    pub fn kappa_iota_size(&self) -> u64 {
        (self.kappa_set.len() * self.iota_set.len()) as u64
    }

    pub fn num_pairs(&self) -> u64 {
        (self.num_states * self.num_actions) as u64
    }

    /// `H (U_max + E_max)`: the mistake bound.
    pub fn mistake_bound(&self) -> f64 {
        self.horizon as f64 * (self.u_max as f64 + self.e_max)
    }
}

/// `𝒵(a)`: the terms `z_i = 2^i - 2`, `i ≥ 1`, up to and including the
/// first one that reaches `a`.
pub fn z_set(a: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for i in 1..64 {
        let z = (1u64 << i) - 2;
        out.push(z);
        if z >= a {
            break;
        }
    }
    out
}

pub fn derive_constants(
    num_states: usize,
    num_actions: usize,
    epsilon: f64,
    delta: f64,
    discount: f64,
) -> Result<UcrlConstants> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if num_states == 0 || num_actions == 0 {
        return Err(Error::Domain(
            "need at least one state and one action".into(),
        ));
    }
    if !open_unit(epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if !open_unit(delta) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 1)")));
    }
    if !open_unit(discount) {
        return Err(Error::InvalidDiscount(discount));
    }

    let s = num_states as f64;
    let sa = (num_states * num_actions) as f64;
    let horizon_scale = 1.0 - discount;

    let w_min = epsilon * horizon_scale / (4.0 * s);
    let iota_max =
        ((8.0 * s / (epsilon * horizon_scale * horizon_scale)).ln() / 2f64.ln()).ceil() as u32;
    let iota_set: Vec<u32> = (0..=iota_max).collect();
    let kappa_set = z_set(num_states as u64);
    let beta = ((1.0 / horizon_scale).ln() / (2.0 * 2f64.ln()))
        .ceil()
        .max(1.0) as u32;
    let d_set = z_set(u64::from(beta));
    let horizon = ((8.0 * s / (epsilon * horizon_scale)).ln() / horizon_scale).ceil() as u64;

    let ki = (kappa_set.len() * iota_set.len()) as f64;
    let delta1 = delta / (2.0 * sa * sa * ki);
    let l1 = log_term(delta1);
    let d_size = d_set.len() as f64;
    let m = 20.0 * l1 * ki * d_size * d_size
        / (epsilon * epsilon * horizon_scale.powf(2.0 + 2.0 / f64::from(beta)));
    let n_threshold = 6.0 * sa * m;
    let u_max = (num_states * num_actions) as u64 * ki as u64;
    let e_max = 4.0 * n_threshold * ki;

    Ok(UcrlConstants {
        epsilon,
        delta,
        discount,
        num_states,
        num_actions,
        w_min,
        iota_max,
        kappa_set,
        iota_set,
        beta,
        d_set,
        horizon,
        delta1,
        l1,
        m,
        n_threshold,
        u_max,
        e_max,
    })
}

/// Relative slack on knownness boundaries. Decimal inputs often put
/// `n / (w_ι m)` exactly on an element of `𝒦`, which rounding would
/// otherwise push to either side.
const BOUNDARY_SLACK: f64 = 1e-12;

/// `κ(ι, n) = max{z ∈ 𝒦 : z ≤ n / (w_ι m)}`, with `m_override` replacing
/// the faithful `m` when given.
pub fn knownness(iota: u32, n: u64, constants: &UcrlConstants, m_override: Option<f64>) -> u64 {
    let m = m_override.unwrap_or(constants.m);
    let ratio = n as f64 / (constants.w_iota(iota) * m) * (1.0 + BOUNDARY_SLACK);
    constants
        .kappa_set
        .iter()
        .copied()
        .take_while(|&z| z as f64 <= ratio)
        .last()
        .unwrap_or(0)
}
