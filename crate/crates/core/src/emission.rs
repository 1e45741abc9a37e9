//! Phenomenological soft-photon emission model.
//!
//! The number of extra photons follows Poisson-like weights
//! `p_k ∝ μ^k / k!` with `μ = κ_rad · α · ln(Λ/E_min)`, truncated at `k_max`.
//! Photon energies follow the soft `1/E` spectrum on `[E_min, Λ]` where
//! `Λ = E_total − E_A − m_B` is the energy left over once A is measured.
//! `E_min` stands for the detector resolution, not a physical threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::spin::Direction;

/// Largest supported `k_max`.
pub const MAX_PHOTON_COUNT: usize = 64;

/// Group-rejection attempts before [`sample_photons`] gives up.
pub const MAX_REJECTION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmissionError {
    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("no phase space for radiation: available energy {available} <= E_min {e_min}")]
    NoPhaseSpace { available: f64, e_min: f64 },
    #[error("cannot fit {k} photons of at least {e_min} into available energy {available}")]
    Infeasible {
        k: usize,
        e_min: f64,
        available: f64,
    },
    #[error("no {k}-photon sample fit the energy budget after {attempts} attempts")]
    RejectionLimit { k: usize, attempts: usize },
}

/// All knobs of the radiation model. Energies share one arbitrary unit, `c = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionParams {
    /// Fine-structure-like coupling.
    pub alpha: f64,
    /// Total energy liberated in the production process.
    #[serde(rename = "E_total")]
    pub e_total: f64,
    /// Measured energy of particle A.
    #[serde(rename = "E_A")]
    pub e_a: f64,
    /// Rest energy of particle B.
    #[serde(rename = "m_B")]
    pub m_b: f64,
    /// Infrared cutoff on photon energies.
    #[serde(rename = "E_min")]
    pub e_min: f64,
    pub kappa_rad: f64,
    pub kappa_par: f64,
    pub k_max: usize,
}

impl Default for EmissionParams {
    fn default() -> Self {
        EmissionParams {
            alpha: 1.0 / 137.0,
            e_total: 1.0,
            e_a: 0.5,
            m_b: 0.2,
            e_min: 1e-3,
            kappa_rad: 1.0,
            kappa_par: 1.0,
            k_max: 8,
        }
    }
}

impl EmissionParams {
    pub fn validate(&self) -> Result<(), EmissionError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> EmissionError {
            EmissionError::InvalidParameter {
                field,
                reason: reason.into(),
            }
        }
        if !(self.alpha.is_finite() && (0.0..1.0).contains(&self.alpha)) {
            return Err(bad(
                "emission.alpha",
                format!("{} not in [0, 1)", self.alpha),
            ));
        }
        if !(self.e_total.is_finite() && self.e_total > 0.0) {
            return Err(bad(
                "emission.E_total",
                format!("{} must be > 0", self.e_total),
            ));
        }
        if !(self.e_a.is_finite() && self.e_a >= 0.0) {
            return Err(bad("emission.E_A", format!("{} must be >= 0", self.e_a)));
        }
        if !(self.m_b.is_finite() && self.m_b >= 0.0) {
            return Err(bad("emission.m_B", format!("{} must be >= 0", self.m_b)));
        }
        if !(self.e_min.is_finite() && self.e_min > 0.0) {
            return Err(bad("emission.E_min", format!("{} must be > 0", self.e_min)));
        }
        if !(self.kappa_rad.is_finite() && self.kappa_rad >= 0.0) {
            return Err(bad(
                "emission.kappa_rad",
                format!("{} must be >= 0", self.kappa_rad),
            ));
        }
        if !(self.kappa_par.is_finite() && self.kappa_par >= 0.0) {
            return Err(bad(
                "emission.kappa_par",
                format!("{} must be >= 0", self.kappa_par),
            ));
        }
        if !(1..=MAX_PHOTON_COUNT).contains(&self.k_max) {
            return Err(bad(
                "emission.k_max",
                format!("{} not in [1, {MAX_PHOTON_COUNT}]", self.k_max),
            ));
        }
        Ok(())
    }

    /// Mean of the untruncated count law, `κ_rad · α · ln(Λ/E_min)`; zero
    /// when there is no phase space.
    pub fn radiation_strength(&self) -> f64 {
        let available = available_energy(self);
        if available <= self.e_min {
            0.0
        } else {
            self.kappa_rad * self.alpha * (available / self.e_min).ln()
        }
    }
}

/// One radiated soft photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonRecord {
    pub energy: f64,
    pub direction: Direction,
    /// Spin projection on the momentum, ±1 in units of ħ.
    pub helicity: i32,
    /// Angular momentum projection on the lab ledger axis, in {−1, 0, +1}
    /// units of ħ. Assigned by the event generator when it closes the ledger;
    /// zero straight out of [`sample_photons`].
    pub lab_jz: i32,
}

impl PhotonRecord {
    /// Momentum components transverse to the lab z axis (massless photon).
    pub fn transverse_momentum(&self) -> [f64; 2] {
        [
            self.energy * self.direction.x(),
            self.energy * self.direction.y(),
        ]
    }
}

/// Probabilities `p_0 ..= p_kmax` of radiating `k` extra photons.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonCountDistribution {
    probabilities: Vec<f64>,
}

impl PhotonCountDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn p(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }

    pub fn k_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    /// `1 − p_0`, summed from the tail for precision.
    pub fn radiated_fraction(&self) -> f64 {
        self.probabilities[1..].iter().rev().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Draws `k` with one uniform draw through the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last = 0;
        for (k, &p) in self.probabilities.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            cumulative += p;
            if u < cumulative {
                return k;
            }
            last = k;
        }
        last
    }
}

/// `Λ = E_total − E_A − m_B`; may be zero or negative.
pub fn available_energy(params: &EmissionParams) -> f64 {
    params.e_total - params.e_a - params.m_b
}

pub fn photon_count_distribution(
    params: &EmissionParams,
) -> Result<PhotonCountDistribution, EmissionError> {
    params.validate()?;
    let mu = params.radiation_strength();
    let mut weights = Vec::with_capacity(params.k_max + 1);
    let mut w = 1.0;
    weights.push(w);
    for k in 1..=params.k_max {
        w *= mu / k as f64;
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    Ok(PhotonCountDistribution {
        probabilities: weights.into_iter().map(|w| w / total).collect(),
    })
}

/// Samples `k` photons under the energy budget `Λ`.
///
/// Draw order: `k` energies (one uniform each, inverse CDF of the `1/E`
/// spectrum), redrawn as a group until their sum fits in `Λ`; then for each
/// photon in turn `cos θ`, `φ` and the helicity.
pub fn sample_photons<R: Rng + ?Sized>(
    k: usize,
    params: &EmissionParams,
    rng: &mut R,
) -> Result<Vec<PhotonRecord>, EmissionError> {
    params.validate()?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let available = available_energy(params);
    if available <= params.e_min {
        return Err(EmissionError::NoPhaseSpace {
            available,
            e_min: params.e_min,
        });
    }
    if k as f64 * params.e_min > available {
        return Err(EmissionError::Infeasible {
            k,
            e_min: params.e_min,
            available,
        });
    }
    let log_span = (available / params.e_min).ln();
    let mut energies = vec![0.0; k];
    let mut accepted = false;
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        for e in energies.iter_mut() {
            let u: f64 = rng.random();
            *e = (params.e_min * (u * log_span).exp()).min(available);
        }
        if energies.iter().sum::<f64>() <= available {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(EmissionError::RejectionLimit {
            k,
            attempts: MAX_REJECTION_ATTEMPTS,
        });
    }
    Ok(energies
        .into_iter()
        .map(|energy| {
            let direction = Direction::sample_isotropic(rng);
            let helicity = if rng.random::<f64>() < 0.5 { 1 } else { -1 };
            PhotonRecord {
                energy,
                direction,
                helicity,
                lab_jz: 0,
            }
        })
        .collect())
}

/// Probability that the fermion pair ends up with parallel spins.
///
/// Zero without radiation; otherwise `min(1, κ_par (Λ/E_total)²)`, applied
/// once per event regardless of `k`.
pub fn parallel_spin_probability(params: &EmissionParams, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let ratio = available_energy(params).max(0.0) / params.e_total;
    (params.kappa_par * ratio * ratio).min(1.0)
}
