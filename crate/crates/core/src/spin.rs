//! Two-qubit spin states, projective measurements and closed-form
//! correlation functions for the EPR-Bohm configuration.
//!
//! Spin values are expressed in units of ħ/2 and correlations in units of
//! ħ²/4, so the singlet correlation is exactly `-a·b`.

use std::fmt;
use std::ops::Neg;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance on the squared norm of states and directions.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Joint cells with probability at or below this value are never sampled.
///
/// Rounding leaves cells such as `(+,+)` of the singlet on a tilted axis at
/// ~1e-33 instead of zero; without the floor a uniform draw of exactly 0.0
/// could land there.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpinError {
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("outcome {0} has zero probability, cannot condition on it")]
    ZeroProbability(SpinOutcome),
    #[error("invalid direction ({0}, {1}, {2}): needs finite, nonzero components")]
    InvalidDirection(f64, f64, f64),
}

/// A unit 3-vector used both for measurement axes and momentum directions.
///
/// Equality is exact component-wise equality. Measurement settings are drawn
/// from finite configured lists, so analyses match them exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub const X: Direction = Direction {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: Direction = Direction {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: Direction = Direction {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Builds a direction from arbitrary components.
    ///
    /// Vectors already unit within [`NORM_TOLERANCE`] are kept bit-for-bit,
    /// anything else is rescaled. This makes construction idempotent, which
    /// the exact setting matching relies on after a text round trip.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, SpinError> {
        let norm_sq = x * x + y * y + z * z;
        if !norm_sq.is_finite() || norm_sq == 0.0 {
            return Err(SpinError::InvalidDirection(x, y, z));
        }
        if (norm_sq - 1.0).abs() <= NORM_TOLERANCE {
            return Ok(Direction { x, y, z });
        }
        let norm = norm_sq.sqrt();
        Ok(Direction {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Direction with polar angle `theta` from +z and azimuth `phi`, in radians.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (sin_t, cos_t) = theta.sin_cos();
        let (sin_p, cos_p) = phi.sin_cos();
        Direction {
            x: sin_t * cos_p,
            y: sin_t * sin_p,
            z: cos_t,
        }
    }

    /// Direction in the xz-plane at `degrees` from +z towards +x.
    pub fn in_xz_plane(degrees: f64) -> Self {
        Self::from_angles(degrees.to_radians(), 0.0)
    }

    /// Isotropic direction from two uniform draws: `cos θ` first, then `φ`.
    pub fn sample_isotropic<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let cos_theta = 2.0 * rng.random::<f64>() - 1.0;
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        Direction {
            x: sin_theta * phi.cos(),
            y: sin_theta * phi.sin(),
            z: cos_theta,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Azimuth in `(-π, π]`, zero on the z axis.
    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Two unit vectors completing `self` to a right-handed orthonormal frame.
    pub fn orthonormal_frame(&self) -> (Direction, Direction) {
        // Cross with the coordinate axis least aligned with self.
        let helper = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            Direction::X
        } else if self.y.abs() <= self.z.abs() {
            Direction::Y
        } else {
            Direction::Z
        };
        let u = cross(self, &helper);
        let u_norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let u = Direction {
            x: u[0] / u_norm,
            y: u[1] / u_norm,
            z: u[2] / u_norm,
        };
        let v = cross(self, &u);
        (
            u,
            Direction {
                x: v[0],
                y: v[1],
                z: v[2],
            },
        )
    }

    /// Tilts `self` by `angle` radians towards the frame direction at `azimuth`.
    pub fn tilted(&self, angle: f64, azimuth: f64) -> Direction {
        if angle == 0.0 {
            return *self;
        }
        let (u, v) = self.orthonormal_frame();
        let (sin_a, cos_a) = angle.sin_cos();
        let (sin_p, cos_p) = azimuth.sin_cos();
        let x = cos_a * self.x + sin_a * (cos_p * u.x + sin_p * v.x);
        let y = cos_a * self.y + sin_a * (cos_p * u.y + sin_p * v.y);
        let z = cos_a * self.z + sin_a * (cos_p * u.z + sin_p * v.z);
        Direction::new(x, y, z).expect("rotation of a unit vector is nonzero")
    }

    /// Spinor components, in the z basis, of the eigenstate of `n·σ` with
    /// eigenvalue `outcome`.
    ///
    /// Phase convention: `|+n⟩ = (cos θ/2, e^{iφ} sin θ/2)` and
    /// `|−n⟩ = (−e^{−iφ} sin θ/2, cos θ/2)`. Observable quantities do not
    /// depend on it.
    pub fn eigenvector(&self, outcome: SpinOutcome) -> [Complex64; 2] {
        let cos_half = ((1.0 + self.z) / 2.0).max(0.0).sqrt();
        let sin_half = ((1.0 - self.z) / 2.0).max(0.0).sqrt();
        let rho = self.x.hypot(self.y);
        let phase = if rho > 0.0 {
            Complex64::new(self.x / rho, self.y / rho)
        } else {
            Complex64::new(1.0, 0.0)
        };
        match outcome {
            SpinOutcome::Up => [Complex64::new(cos_half, 0.0), phase * sin_half],
            SpinOutcome::Down => [-phase.conj() * sin_half, Complex64::new(cos_half, 0.0)],
        }
    }
}

fn cross(a: &Direction, b: &Direction) -> [f64; 3] {
    [
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    ]
}

impl Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 3]> for Direction {
    type Error = SpinError;

    fn try_from(v: [f64; 3]) -> Result<Self, SpinError> {
        Direction::new(v[0], v[1], v[2])
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> [f64; 3] {
        d.to_array()
    }
}

/// Measured spin component in units of ħ/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinOutcome {
    Up,
    Down,
}

impl SpinOutcome {
    pub const BOTH: [SpinOutcome; 2] = [SpinOutcome::Up, SpinOutcome::Down];

    pub fn value(self) -> i32 {
        match self {
            SpinOutcome::Up => 1,
            SpinOutcome::Down => -1,
        }
    }

    pub fn from_value(value: i32) -> Option<Self> {
        match value {
            1 => Some(SpinOutcome::Up),
            -1 => Some(SpinOutcome::Down),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SpinOutcome::Up => SpinOutcome::Down,
            SpinOutcome::Down => SpinOutcome::Up,
        }
    }

    fn index(self) -> usize {
        match self {
            SpinOutcome::Up => 0,
            SpinOutcome::Down => 1,
        }
    }
}

impl fmt::Display for SpinOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// Pure state of two spin-1/2 particles A and B.
///
/// Amplitudes are stored in the z basis in the fixed order
/// `(+,+), (+,−), (−,+), (−,−)`, A in the first slot: index 1 is `(+,−)` and
/// index 2 is `(−,+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitSpinState {
    amplitudes: [Complex64; 4],
}

impl TwoQubitSpinState {
    /// Wraps raw amplitudes without normalizing; operations that need a
    /// normalized state check it themselves.
    pub fn from_amplitudes(amplitudes: [Complex64; 4]) -> Self {
        TwoQubitSpinState { amplitudes }
    }

    /// The z-basis product state `|a⟩_A |b⟩_B`.
    pub fn basis(a: SpinOutcome, b: SpinOutcome) -> Self {
        let mut amplitudes = [Complex64::new(0.0, 0.0); 4];
        amplitudes[basis_index(a, b)] = Complex64::new(1.0, 0.0);
        TwoQubitSpinState { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn amplitude(&self, a: SpinOutcome, b: SpinOutcome) -> Complex64 {
        self.amplitudes[basis_index(a, b)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &TwoQubitSpinState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(l, r)| l.conj() * r)
            .sum()
    }

    fn require_normalized(&self) -> Result<(), SpinError> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(SpinError::NotNormalized(self.norm_sqr()))
        }
    }

    /// `⟨n_a, s_a| ⊗ ⟨n_b, s_b| ψ⟩`.
    fn projected_amplitude(
        &self,
        a: &Direction,
        s_a: SpinOutcome,
        b: &Direction,
        s_b: SpinOutcome,
    ) -> Complex64 {
        let ea = a.eigenvector(s_a);
        let eb = b.eigenvector(s_b);
        let mut amp = Complex64::new(0.0, 0.0);
        for (i, ca) in ea.iter().enumerate() {
            for (j, cb) in eb.iter().enumerate() {
                amp += ca.conj() * cb.conj() * self.amplitudes[2 * i + j];
            }
        }
        amp
    }
}

fn basis_index(a: SpinOutcome, b: SpinOutcome) -> usize {
    2 * a.index() + b.index()
}

/// Conditional state of a single spin-1/2 particle, z basis `(+, −)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    amplitudes: [Complex64; 2],
}

impl QubitState {
    pub fn amplitudes(&self) -> &[Complex64; 2] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Born probability of `outcome` when measuring along `axis`.
    pub fn probability(&self, axis: &Direction, outcome: SpinOutcome) -> f64 {
        let e = axis.eigenvector(outcome);
        (e[0].conj() * self.amplitudes[0] + e[1].conj() * self.amplitudes[1]).norm_sqr()
    }
}

/// Probabilities of the four joint outcomes for a pair of measurement axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl JointDistribution {
    /// Cells in the fixed sampling order `(+,+), (+,−), (−,+), (−,−)`.
    pub fn cells(&self) -> [((SpinOutcome, SpinOutcome), f64); 4] {
        use SpinOutcome::{Down, Up};
        [
            ((Up, Up), self.p_pp),
            ((Up, Down), self.p_pm),
            ((Down, Up), self.p_mp),
            ((Down, Down), self.p_mm),
        ]
    }

    pub fn probability(&self, a: SpinOutcome, b: SpinOutcome) -> f64 {
        self.cells()[basis_index(a, b)].1
    }

    pub fn total(&self) -> f64 {
        self.p_pp + self.p_pm + self.p_mp + self.p_mm
    }

    pub fn marginal_a(&self, a: SpinOutcome) -> f64 {
        self.probability(a, SpinOutcome::Up) + self.probability(a, SpinOutcome::Down)
    }

    pub fn marginal_b(&self, b: SpinOutcome) -> f64 {
        self.probability(SpinOutcome::Up, b) + self.probability(SpinOutcome::Down, b)
    }

    /// Expectation of `s_A·s_B` in units of ħ²/4.
    pub fn correlation(&self) -> f64 {
        self.p_pp + self.p_mm - self.p_pm - self.p_mp
    }

    /// Samples one joint outcome with exactly one uniform draw, walking the
    /// cumulative distribution in [`cells`](Self::cells) order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (SpinOutcome, SpinOutcome) {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last = None;
        for (outcome, p) in self.cells() {
            if p <= PROBABILITY_FLOOR {
                continue;
            }
            cumulative += p;
            if u < cumulative {
                return outcome;
            }
            last = Some(outcome);
        }
        last.expect("a normalized distribution has a cell above the floor")
    }
}

/// The spin singlet `(|+−⟩ − |−+⟩)/√2`.
pub fn make_singlet() -> TwoQubitSpinState {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    TwoQubitSpinState {
        amplitudes: [
            Complex64::new(0.0, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(-c, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    }
}

/// Born-rule probabilities for measuring A along `a` and B along `b`.
pub fn joint_distribution(
    state: &TwoQubitSpinState,
    a: &Direction,
    b: &Direction,
) -> Result<JointDistribution, SpinError> {
    state.require_normalized()?;
    use SpinOutcome::{Down, Up};
    let p = |sa, sb| state.projected_amplitude(a, sa, b, sb).norm_sqr();
    Ok(JointDistribution {
        p_pp: p(Up, Up),
        p_pm: p(Up, Down),
        p_mp: p(Down, Up),
        p_mm: p(Down, Down),
    })
}

/// Samples one joint measurement outcome. Consumes exactly one uniform draw.
pub fn measure_pair<R: Rng + ?Sized>(
    state: &TwoQubitSpinState,
    a: &Direction,
    b: &Direction,
    rng: &mut R,
) -> Result<(SpinOutcome, SpinOutcome), SpinError> {
    Ok(joint_distribution(state, a, b)?.sample(rng))
}

/// State of B after A was measured along `a` and found in `outcome`.
pub fn collapse_after_a(
    state: &TwoQubitSpinState,
    a: &Direction,
    outcome: SpinOutcome,
) -> Result<QubitState, SpinError> {
    state.require_normalized()?;
    let ea = a.eigenvector(outcome);
    let mut b = [Complex64::new(0.0, 0.0); 2];
    for (j, slot) in b.iter_mut().enumerate() {
        *slot = ea[0].conj() * state.amplitudes[j] + ea[1].conj() * state.amplitudes[2 + j];
    }
    let p: f64 = b.iter().map(|c| c.norm_sqr()).sum();
    if p <= PROBABILITY_FLOOR {
        return Err(SpinError::ZeroProbability(outcome));
    }
    let norm = p.sqrt();
    Ok(QubitState {
        amplitudes: [b[0] / norm, b[1] / norm],
    })
}

/// Singlet correlation `⟨S_a(A) S_b(B)⟩` in units of ħ²/4.
pub fn correlation_analytic(a: &Direction, b: &Direction) -> f64 {
    -a.dot(b)
}

/// `|E(a,b) − E(a,b2) + E(a2,b) + E(a2,b2)|` from the singlet correlation.
pub fn chsh_analytic(a: &Direction, a2: &Direction, b: &Direction, b2: &Direction) -> f64 {
    chsh_combination(
        correlation_analytic(a, b),
        correlation_analytic(a, b2),
        correlation_analytic(a2, b),
        correlation_analytic(a2, b2),
    )
}

pub(crate) fn chsh_combination(e_ab: f64, e_ab2: f64, e_a2b: f64, e_a2b2: f64) -> f64 {
    (e_ab - e_ab2 + e_a2b + e_a2b2).abs()
}
