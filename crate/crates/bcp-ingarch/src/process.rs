//! BCP-INGARCH(1,1) dynamics: conditional-mean recursion, stability
//! checks, and trajectory simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bcp::{self, BcpParams};
use crate::{Error, Result};

/// Default burn-in for simulated trajectories.
pub const DEFAULT_BURN_IN: usize = 300;

/// Full parameter vector of a BCP-INGARCH(1,1) model.
///
/// `a` and `b` are the 2x2 feedback matrices on the past conditional mean
/// and the past counts. Estimation restricts `a` to be diagonal; simulation
/// accepts a full `a`. When `b_diagonal` is set, the off-diagonal entries
/// of `b` are identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: [f64; 2],
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
    pub b_diagonal: bool,
    pub phi: f64,
}

impl ModelParams {
    /// Model with diagonal `a` (the estimation restriction).
    pub fn new_diag_a(
        omega: [f64; 2],
        a_diag: [f64; 2],
        b: [[f64; 2]; 2],
        b_diagonal: bool,
        phi: f64,
    ) -> Result<Self> {
        Self::new(omega, [[a_diag[0], 0.0], [0.0, a_diag[1]]], b, b_diagonal, phi)
    }

    pub fn new(
        omega: [f64; 2],
        a: [[f64; 2]; 2],
        b: [[f64; 2]; 2],
        b_diagonal: bool,
        phi: f64,
    ) -> Result<Self> {
        if omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega entries must be positive, got {omega:?}"
            )));
        }
        for m in [&a, &b] {
            if m.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "A and B entries must be nonnegative and finite".into(),
                ));
            }
        }
        if b_diagonal && (b[0][1] != 0.0 || b[1][0] != 0.0) {
            return Err(Error::InvalidParameter(
                "b_diagonal set but off-diagonal B entries are nonzero".into(),
            ));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!("phi must be finite, got {phi}")));
        }
        Ok(Self { omega, a, b, b_diagonal, phi })
    }

    pub fn a_is_diagonal(&self) -> bool {
        self.a[0][1] == 0.0 && self.a[1][0] == 0.0
    }

    pub fn a_diag(&self) -> [f64; 2] {
        [self.a[0][0], self.a[1][1]]
    }
}

/// An observed (or simulated) bivariate count series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub y1: Vec<u64>,
    pub y2: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SeriesPair {
    pub fn new(y1: Vec<u64>, y2: Vec<u64>) -> Result<Self> {
        if y1.len() != y2.len() {
            return Err(Error::Data(format!(
                "series lengths differ: {} vs {}",
                y1.len(),
                y2.len()
            )));
        }
        if y1.len() < 2 {
            return Err(Error::Data("series must have at least 2 observations".into()));
        }
        Ok(Self { y1, y2, labels: None })
    }

    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    pub fn means(&self) -> [f64; 2] {
        let n = self.len() as f64;
        [
            self.y1.iter().sum::<u64>() as f64 / n,
            self.y2.iter().sum::<u64>() as f64 / n,
        ]
    }

    /// FNV-1a over both columns; used to detect fits on different data.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for &v in &self.y1 {
            eat(v);
        }
        eat(u64::MAX); // column separator
        for &v in &self.y2 {
            eat(v);
        }
        h
    }

    /// First `n` observations as a new series.
    pub fn prefix(&self, n: usize) -> Result<SeriesPair> {
        if n > self.len() {
            return Err(Error::Data(format!(
                "prefix length {n} exceeds series length {}",
                self.len()
            )));
        }
        SeriesPair::new(self.y1[..n].to_vec(), self.y2[..n].to_vec())
    }
}

/// Filtered conditional-mean path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lam1: Vec<f64>,
    pub lam2: Vec<f64>,
}

impl LambdaPath {
    pub fn len(&self) -> usize {
        self.lam1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam1.is_empty()
    }
}

/// One step of the conditional-mean recursion:
/// `lambda_t = omega + A lambda_{t-1} + B y_{t-1}`.
pub fn lambda_update(prev_lambda: [f64; 2], prev_y: [u64; 2], p: &ModelParams) -> [f64; 2] {
    let y = [prev_y[0] as f64, prev_y[1] as f64];
    [
        p.omega[0] + p.a[0][0] * prev_lambda[0] + p.a[0][1] * prev_lambda[1]
            + p.b[0][0] * y[0]
            + p.b[0][1] * y[1],
        p.omega[1] + p.a[1][0] * prev_lambda[0] + p.a[1][1] * prev_lambda[1]
            + p.b[1][0] * y[0]
            + p.b[1][1] * y[1],
    ]
}

/// Outcome of the ergodicity condition `|A|_1 + |B|_1 < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub satisfied: bool,
    /// `1 - (|A|_1 + |B|_1)`; positive iff the condition holds.
    pub margin: f64,
}

fn norm1(m: &[[f64; 2]; 2]) -> f64 {
    let c0 = m[0][0].abs() + m[1][0].abs();
    let c1 = m[0][1].abs() + m[1][1].abs();
    c0.max(c1)
}

/// Check the p = 1 stationarity/ergodicity condition.
pub fn stationarity_check(p: &ModelParams) -> Stationarity {
    let total = norm1(&p.a) + norm1(&p.b);
    Stationarity { satisfied: total < 1.0, margin: 1.0 - total }
}

/// Unconditional mean `(I - A - B)^{-1} omega` under first-order stationarity.
pub fn unconditional_mean(p: &ModelParams) -> Result<[f64; 2]> {
    let m = [
        [1.0 - p.a[0][0] - p.b[0][0], -p.a[0][1] - p.b[0][1]],
        [-p.a[1][0] - p.b[1][0], 1.0 - p.a[1][1] - p.b[1][1]],
    ];
    // Sufficient check |A+B|_1 < 1; otherwise fall back to the spectral
    // radius of the 2x2 sum.
    let sum = [
        [p.a[0][0] + p.b[0][0], p.a[0][1] + p.b[0][1]],
        [p.a[1][0] + p.b[1][0], p.a[1][1] + p.b[1][1]],
    ];
    if norm1(&sum) >= 1.0 && spectral_radius_2x2(&sum) >= 1.0 {
        return Err(Error::NonstationaryMean);
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-12 {
        return Err(Error::NonstationaryMean);
    }
    Ok([
        (m[1][1] * p.omega[0] - m[0][1] * p.omega[1]) / det,
        (-m[1][0] * p.omega[0] + m[0][0] * p.omega[1]) / det,
    ])
}

fn spectral_radius_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
    } else {
        det.abs().sqrt() // complex pair: |eig| = sqrt(det)
    }
}

/// Simulation output: counts plus the generating conditional-mean path.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub series: SeriesPair,
    pub lambda: LambdaPath,
    pub stationarity: Stationarity,
}

/// Simulate `n` observations after `burn_in` discarded iterations.
///
/// `lambda_init` defaults to the unconditional mean (or `omega` when the
/// mean does not exist). A violated stationarity condition is reported in
/// the output, not an error: near-boundary behavior is a legitimate use.
pub fn simulate(
    p: &ModelParams,
    n: usize,
    burn_in: usize,
    lambda_init: Option<[f64; 2]>,
    seed: u64,
) -> Result<SimOutput> {
    if n < 2 {
        return Err(Error::InvalidParameter("simulate requires n >= 2".into()));
    }
    let stationarity = stationarity_check(p);
    let init = match lambda_init {
        Some(v) => {
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "lambda_init must be positive, got {v:?}"
                )));
            }
            v
        }
        None => unconditional_mean(p).unwrap_or(p.omega),
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut lambda = init;
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    let mut lam1 = Vec::with_capacity(n);
    let mut lam2 = Vec::with_capacity(n);

    for t in 0..burn_in + n {
        let dist = BcpParams::new(lambda[0], lambda[1], p.phi)?;
        let (z1, z2) = bcp::sample(&dist, &mut rng)?;
        if t >= burn_in {
            y1.push(z1);
            y2.push(z2);
            lam1.push(lambda[0]);
            lam2.push(lambda[1]);
        }
        lambda = lambda_update(lambda, [z1, z2], p);
    }

    Ok(SimOutput {
        series: SeriesPair::new(y1, y2)?,
        lambda: LambdaPath { lam1, lam2 },
        stationarity,
    })
}
