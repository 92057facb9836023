//! Conserved and virial functionals of a field, in the frame where the
//! potential is V^omega (pass the sampled potential for that omega).

use serde::{Deserialize, Serialize};

use crate::grid::RadialField;
use crate::potential::SampledPotential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "H0")]
    pub kinetic: f64,
    #[serde(rename = "G")]
    pub quartic: f64,
    /// (1/2) <V u | u>
    #[serde(rename = "V")]
    pub potential: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "E0")]
    pub free_energy: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    /// E + M in the rescaled frame
    #[serde(rename = "Aom")]
    pub action: f64,
    /// A - K2 / 2
    #[serde(rename = "Jom")]
    pub j: f64,
}

pub fn mass(u: &RadialField) -> f64 {
    0.5 * u.l2_norm_sq()
}

pub fn kinetic(u: &RadialField) -> f64 {
    0.5 * u.grad_norm_sq()
}

pub fn quartic(u: &RadialField) -> f64 {
    0.25 * u.l4_norm().powi(4)
}

pub fn evaluate(u: &RadialField, pot: &SampledPotential) -> Functionals {
    let m = mass(u);
    let h0 = kinetic(u);
    let g = quartic(u);
    let pv = 0.5 * pot.expectation(u);
    let prv = 0.5 * pot.expectation_r_vr(u);
    let e = h0 - g + pv;
    let k2 = 2.0 * h0 - 3.0 * g - prv;
    let a = e + m;
    Functionals {
        mass: m,
        kinetic: h0,
        quartic: g,
        potential: pv,
        energy: e,
        free_energy: h0 - g,
        k2,
        action: a,
        j: a - 0.5 * k2,
    }
}

/// d/dl E(l^{3/2} u(l x)) at l = 1, which equals K2.
pub fn scaling_derivative(u: &RadialField, pot: &SampledPotential) -> f64 {
    evaluate(u, pot).k2
}

/// Gradient of the energy: -Lap u + V u - |u|^2 u.
pub fn energy_gradient(u: &RadialField, pot: &SampledPotential) -> RadialField {
    let lap = u.laplacian();
    let mut out = lap.scale(-1.0);
    let vals: Vec<_> = (0..u.grid().n_points())
        .map(|i| {
            let z = u.value(i);
            let v = pot.v.get(i).copied().unwrap_or(0.0);
            out.value(i) + z * v - z * z.norm_sqr()
        })
        .collect();
    out = RadialField::from_values(u.grid(), vals).expect("finite gradient");
    out
}

/// Gradient of K2: -2 Lap u - 3 |u|^2 u - r V_r u.
pub fn k2_gradient(u: &RadialField, pot: &SampledPotential) -> RadialField {
    let lap = u.laplacian();
    let vals: Vec<_> = (0..u.grid().n_points())
        .map(|i| {
            let z = u.value(i);
            let w = pot.r_vr.get(i).copied().unwrap_or(0.0);
            -lap.value(i) * 2.0 - z * (3.0 * z.norm_sqr()) - z * w
        })
        .collect();
    RadialField::from_values(u.grid(), vals).expect("finite gradient")
}
