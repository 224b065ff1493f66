//! Wigner functions on phase-space grids by displaced parity,
//! `W(x, p) = (1/pi) tr[rho D(2 beta) P]` with `beta = (x + i p)/sqrt 2` and
//! `P = (-1)^{a^dag a}`, normalized so that `int W dx dp = 1`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, C64};
use crate::special::ln_factorial;
use crate::states::{mean_energy, QuantumState};

/// Populations below this are dropped from the evaluation block.
const SUPPORT_TOL: f64 = 1e-22;

/// `<m|D(gamma)|n>` for `m, n < k`, row-major, exact in the untruncated
/// space: band `m - n = j` is `sqrt(n!/m!) gamma^j e^{-|gamma|^2/2} L_n^{(j)}(|gamma|^2)`,
/// with one Laguerre recurrence per band, and the upper triangle follows
/// from `D_{n,m} = (-1)^j conj(D_{m,n})`.
pub fn displacement_block(gamma: C64, k: usize) -> Vec<C64> {
    let mut d = vec![C64::new(0.0, 0.0); k * k];
    let x = gamma.norm_sqr();
    if x == 0.0 {
        for n in 0..k {
            d[n * k + n] = C64::new(1.0, 0.0);
        }
        return d;
    }
    let ln_fact: Vec<f64> = (0..k as u64).map(ln_factorial).collect();
    let ln_abs = 0.5 * x.ln();
    let arg = gamma.arg();
    let mut lag = vec![0.0; k];
    for j in 0..k {
        let a = j as f64;
        let len = k - j;
        lag[0] = 1.0;
        if len > 1 {
            lag[1] = 1.0 + a - x;
        }
        for n in 1..len.saturating_sub(1) {
            let nf = n as f64;
            lag[n + 1] = ((2.0 * nf + 1.0 + a - x) * lag[n] - (nf + a) * lag[n - 1]) / (nf + 1.0);
        }
        let phase = C64::from_polar(1.0, a * arg);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..len {
            let m = n + j;
            let mag = (0.5 * (ln_fact[n] - ln_fact[m]) + a * ln_abs - 0.5 * x).exp() * lag[n];
            let v = phase * mag;
            d[m * k + n] = v;
            if j > 0 {
                d[n * k + m] = v.conj() * sign;
            }
        }
    }
    d
}

/// Density matrix restricted to the levels that carry population.
struct Block {
    rho: CMatrix,
    k: usize,
}

impl Block {
    fn new(state: &QuantumState) -> Self {
        let rho = state.to_density();
        let d = rho.dim();
        let k = (0..d).rev().find(|&n| rho.matrix()[(n, n)].re > SUPPORT_TOL).map_or(1, |n| n + 1);
        Block { rho: rho.matrix().view((0, 0), (k, k)).into_owned(), k }
    }

    fn value(&self, x: f64, p: f64) -> C64 {
        let gamma = C64::new(x, p) * SQRT_2; // 2 beta
        let k = self.k;
        let d = displacement_block(gamma, k);
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..k {
            for n in 0..k {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                acc += self.rho[(n, m)] * d[m * k + n] * sign;
            }
        }
        acc / PI
    }
}

/// `W(x, p)` before discarding the imaginary residue.
pub fn wigner_point(state: &QuantumState, x: f64, p: f64) -> C64 {
    Block::new(state).value(x, p)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridSpec {
    pub resolution: usize,
    /// Defaults to `max(2 sqrt(2N + 1) + 2, 5 s)` for a state of energy
    /// `N`, with `s^2` the largest quadrature second moment.
    pub half_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { resolution: 201, half_width: None }
    }
}

impl GridSpec {
    pub fn half_width_for(&self, state: &QuantumState) -> f64 {
        self.half_width.unwrap_or_else(|| {
            let n = mean_energy(state);
            let s2 = (2.0 * second_moment_a2(state).norm() + 2.0 * n + 1.0) / 2.0;
            (2.0 * (2.0 * n + 1.0).sqrt() + 2.0).max(5.0 * s2.sqrt())
        })
    }
}

/// `<a^2>`.
fn second_moment_a2(state: &QuantumState) -> C64 {
    let rho = state.to_density();
    let m = rho.matrix();
    (2..rho.dim()).map(|k| m[(k, k - 2)] * ((k * (k - 1)) as f64).sqrt()).sum()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PhaseSpaceGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    /// `values[i][j] = W(xs[i], ps[j])`.
    pub values: Vec<Vec<f64>>,
    pub max_imag: f64,
    /// Largest `|W|` on the boundary, relative to the peak.
    pub edge_fraction: f64,
    pub warning: Option<String>,
}

impl PhaseSpaceGrid {
    pub fn step(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    /// Riemann sum of `W dx dp`.
    pub fn integral(&self) -> f64 {
        let h = self.step();
        self.values.iter().flatten().sum::<f64>() * h * h
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Largest pointwise `|W_self - W_other|` on identical grids.
    pub fn max_difference(&self, other: &PhaseSpaceGrid) -> Result<f64> {
        if self.xs != other.xs || self.ps != other.ps {
            return Err(Error::Shape("Wigner grids differ".into()));
        }
        Ok(self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0, |a, (u, v)| a.max((u - v).abs())))
    }
}

/// Relative edge magnitude above which a grid is flagged as clipping the
/// state.
pub const EDGE_WARNING: f64 = 1e-3;
/// Imaginary residue above which evaluation is considered broken.
pub const IMAG_TOLERANCE: f64 = 1e-10;

pub fn wigner_grid(state: &QuantumState, spec: &GridSpec) -> Result<PhaseSpaceGrid> {
    if spec.resolution < 3 {
        return Err(Error::Domain(format!("grid resolution {} too small", spec.resolution)));
    }
    let half = spec.half_width_for(state);
    if !(half > 0.0) || !half.is_finite() {
        return Err(Error::Domain(format!("bad grid half width {half}")));
    }
    let n = spec.resolution;
    let axis: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let block = Block::new(state);
    let mut max_imag: f64 = 0.0;
    let mut values = vec![vec![0.0; n]; n];
    for (i, &x) in axis.iter().enumerate() {
        for (j, &p) in axis.iter().enumerate() {
            let w = block.value(x, p);
            max_imag = max_imag.max(w.im.abs());
            values[i][j] = w.re;
        }
    }
    if max_imag > IMAG_TOLERANCE {
        return Err(Error::Quadrature(format!("Wigner imaginary residue {max_imag:.2e}")));
    }
    let peak = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut edge: f64 = 0.0;
    for k in 0..n {
        for v in [values[0][k], values[n - 1][k], values[k][0], values[k][n - 1]] {
            edge = edge.max(v.abs());
        }
    }
    let edge_fraction = if peak > 0.0 { edge / peak } else { 0.0 };
    let mut notes = Vec::new();
    if edge_fraction > EDGE_WARNING {
        notes.push(format!("grid edge carries {edge_fraction:.2e} of the peak; widen the range"));
    }
    if state.leakage() > crate::states::LEAKAGE_LIMIT {
        notes.push(format!("state truncation leakage {:.2e}", state.leakage()));
    }
    Ok(PhaseSpaceGrid {
        xs: axis.clone(),
        ps: axis,
        values,
        max_imag,
        edge_fraction,
        warning: (!notes.is_empty()).then(|| notes.join("; ")),
    })
}
