//! Probe states: vacuum, Fock, coherent, squeezed vacuum, multi-component
//! cat and thermal states, plus the text form the CLI uses for them.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fock::{CVector, DensityOperator, FockDim, StateVector, C64};
use crate::special::ln_factorial;

/// States with more than this much population in the top two levels are
/// rejected by [`build_state`].
pub const LEAKAGE_LIMIT: f64 = 1e-6;

/// Target tail population used by the automatic truncation.
pub const AUTO_TAIL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum CatAmplitude {
    /// Coherent amplitude of every component.
    Beta(C64),
    /// Mean photon number of the normalized superposition; `|beta|` is
    /// solved for and the phase comes from `theta`.
    MeanPhotons(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum StateSpec {
    Vacuum,
    Fock { n: usize },
    Coherent { beta: C64 },
    /// Amplitudes `c_{2m} ~ (-e^{i theta} tanh r)^m`.
    Squeezed { r: f64, theta: f64 },
    /// Superposition of `components` coherent states at phases
    /// `2 pi k / components + theta`.
    MultiCat { components: usize, amplitude: CatAmplitude, theta: f64 },
    Thermal { nbar: f64 },
}

/// Pure or mixed probe.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(v) => v.dim(),
            QuantumState::Mixed(r) => r.dim(),
        }
    }

    pub fn leakage(&self) -> f64 {
        match self {
            QuantumState::Pure(v) => v.leakage(),
            QuantumState::Mixed(r) => r.leakage(),
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        match self {
            QuantumState::Pure(v) => v.to_density(),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    pub fn as_pure(&self) -> Result<&StateVector> {
        match self {
            QuantumState::Pure(v) => Ok(v),
            QuantumState::Mixed(_) => Err(Error::Domain("operation needs a pure probe".into())),
        }
    }
}

/// `<a^dag a>`.
pub fn mean_energy(state: &QuantumState) -> f64 {
    match state {
        QuantumState::Pure(v) => v.mean_photon_number(),
        QuantumState::Mixed(r) => r.mean_photon_number(),
    }
}

impl StateSpec {
    /// Squeezed vacuum with `sinh^2 r = nbar`.
    pub fn squeezed_with_energy(nbar: f64, theta: f64) -> Self {
        StateSpec::Squeezed { r: nbar.sqrt().asinh(), theta }
    }

    pub fn coherent_real(beta: f64) -> Self {
        StateSpec::Coherent { beta: C64::new(beta, 0.0) }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(what.to_string()));
        match *self {
            StateSpec::Squeezed { r, theta } if !(r >= 0.0) || !r.is_finite() || !theta.is_finite() => {
                bad("squeezing r must be finite and >= 0")
            }
            StateSpec::Thermal { nbar } if !(nbar >= 0.0) || !nbar.is_finite() => bad("thermal nbar must be >= 0"),
            StateSpec::Coherent { beta } if !beta.re.is_finite() || !beta.im.is_finite() => {
                bad("coherent amplitude must be finite")
            }
            StateSpec::MultiCat { components, amplitude, theta } => {
                if components == 0 {
                    return bad("cat needs at least one component");
                }
                if !theta.is_finite() {
                    return bad("cat theta must be finite");
                }
                match amplitude {
                    CatAmplitude::MeanPhotons(n) if !(n >= 0.0) || !n.is_finite() => bad("cat nbar must be >= 0"),
                    CatAmplitude::Beta(b) if !b.re.is_finite() || !b.im.is_finite() => bad("cat beta must be finite"),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Closed-form mean photon number (infinite-dimensional), where one exists.
    pub fn nominal_energy(&self) -> f64 {
        match *self {
            StateSpec::Vacuum => 0.0,
            StateSpec::Fock { n } => n as f64,
            StateSpec::Coherent { beta } => beta.norm_sqr(),
            StateSpec::Squeezed { r, .. } => r.sinh().powi(2),
            StateSpec::Thermal { nbar } => nbar,
            StateSpec::MultiCat { components, amplitude, .. } => match amplitude {
                CatAmplitude::MeanPhotons(n) => n,
                CatAmplitude::Beta(b) => cat_energy_closed(components, b.norm_sqr()),
            },
        }
    }

    /// Whether the self-projection fidelity is independent of the
    /// displacement phase.
    pub fn is_phase_insensitive(&self) -> bool {
        matches!(self, StateSpec::Vacuum | StateSpec::Fock { .. } | StateSpec::Coherent { .. } | StateSpec::Thermal { .. })
    }
}

/// Fock-basis populations of the untruncated state, evaluated up to `count`.
fn closed_populations(spec: &StateSpec, count: usize) -> Vec<f64> {
    let mut pops = vec![0.0; count];
    match *spec {
        StateSpec::Vacuum => pops[0] = 1.0,
        StateSpec::Fock { n } => {
            if n < count {
                pops[n] = 1.0
            }
        }
        StateSpec::Coherent { beta } => poisson_into(&mut pops, beta.norm_sqr(), 1),
        StateSpec::Squeezed { r, .. } => {
            let t = r.tanh();
            for m in 0..count.div_ceil(2) {
                let n = 2 * m;
                if n >= count {
                    break;
                }
                // |c_2m|^2 = tanh^{2m} (2m)! / (cosh r 4^m (m!)^2)
                let lp = if t == 0.0 {
                    if m == 0 { 0.0 } else { f64::NEG_INFINITY }
                } else {
                    2.0 * m as f64 * t.ln() + ln_factorial(n as u64)
                        - 2.0 * ln_factorial(m as u64)
                        - m as f64 * 4f64.ln()
                };
                pops[n] = (lp - r.cosh().ln()).exp();
            }
        }
        StateSpec::MultiCat { components, amplitude, .. } => {
            let x = match amplitude {
                CatAmplitude::Beta(b) => b.norm_sqr(),
                CatAmplitude::MeanPhotons(n) => solve_cat_intensity_closed(components, n),
            };
            poisson_into(&mut pops, x, components);
        }
        StateSpec::Thermal { nbar } => {
            let q = nbar / (nbar + 1.0);
            for (n, p) in pops.iter_mut().enumerate() {
                *p = q.powi(n as i32) / (nbar + 1.0);
            }
        }
    }
    pops
}

/// Poisson(x) weights restricted to multiples of `stride`, renormalized.
fn poisson_into(pops: &mut [f64], x: f64, stride: usize) {
    if x == 0.0 {
        pops[0] = 1.0;
        return;
    }
    let logs: Vec<(usize, f64)> = (0..pops.len())
        .step_by(stride)
        .map(|n| (n, n as f64 * x.ln() - ln_factorial(n as u64)))
        .collect();
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    for (n, l) in logs {
        pops[n] = (l - max).exp() / total;
    }
}

fn closed_cat_populations(components: usize, x: f64) -> Vec<f64> {
    let count = (x + 40.0 * (x + 1.0).sqrt() + 60.0) as usize + components;
    let mut pops = vec![0.0; count];
    poisson_into(&mut pops, x, components);
    pops
}

fn cat_energy_closed(components: usize, x: f64) -> f64 {
    closed_cat_populations(components, x).iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Monotone bisection for `|beta|^2` such that the cat has mean `nbar`.
fn bisect_cat_intensity(nbar: f64, energy: impl Fn(f64) -> f64) -> Result<f64> {
    if nbar == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = nbar.max(1.0);
    let mut guard = 0;
    while energy(hi) < nbar {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Domain(format!("cannot reach cat energy {nbar}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if energy(mid) < nbar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn solve_cat_intensity_closed(components: usize, nbar: f64) -> f64 {
    bisect_cat_intensity(nbar, |x| cat_energy_closed(components, x)).unwrap_or(nbar)
}

/// Smallest dimension whose untruncated tail population is below `tol`.
pub fn tail_dim(spec: &StateSpec, tol: f64) -> usize {
    let mut count = 64usize;
    loop {
        let pops = closed_populations(spec, count);
        let top = pops[count - count / 4..].iter().cloned().fold(0.0, f64::max);
        if top < 1e-30 || count >= 1 << 15 {
            let mut tail = 0.0;
            for n in (0..count).rev() {
                tail += pops[n];
                if tail >= tol {
                    return (n + 1).max(2);
                }
            }
            return 2;
        }
        count *= 2;
    }
}

/// Truncation heuristic: probe tail below [`AUTO_TAIL`] plus room for
/// displacements up to `alpha_max`, never below
/// `ceil(4 (N + alpha^2 + 3 sqrt(N + 1)) + 20)`.
pub fn auto_dim(specs: &[StateSpec], alpha_max: f64) -> usize {
    let alpha = alpha_max.abs();
    specs
        .iter()
        .map(|s| {
            let n = s.nominal_energy();
            let heuristic = (4.0 * (n + alpha * alpha + 3.0 * (n + 1.0).sqrt()) + 20.0).ceil() as usize;
            let support = tail_dim(s, AUTO_TAIL);
            let bulk = tail_dim(s, 1e-9) as f64;
            let margin = (alpha * alpha + 8.0 * alpha * (2.0 * bulk + 1.0).sqrt() + 10.0).ceil() as usize;
            heuristic.max(support + margin)
        })
        .max()
        .unwrap_or(2)
}

fn coherent_amplitudes(dim: usize, beta: C64) -> CVector {
    let mut v = CVector::zeros(dim);
    v[0] = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for n in 1..dim {
        v[n] = v[n - 1] * beta / (n as f64).sqrt();
    }
    v
}

fn cat_amplitudes(dim: usize, components: usize, beta_abs: f64, theta: f64) -> CVector {
    let mut v = CVector::zeros(dim);
    for k in 0..components {
        let phase = 2.0 * PI * k as f64 / components as f64 + theta;
        v += coherent_amplitudes(dim, C64::from_polar(beta_abs, phase));
    }
    v
}

/// Realizes `spec` in `dim` levels, rejecting leakage above [`LEAKAGE_LIMIT`].
pub fn build_state(spec: &StateSpec, dim: usize) -> Result<QuantumState> {
    build_state_with_limit(spec, dim, LEAKAGE_LIMIT)
}

pub fn build_state_with_limit(spec: &StateSpec, dim: usize, leakage_limit: f64) -> Result<QuantumState> {
    spec.validate()?;
    let dim = FockDim::new(dim)?.get();
    let state = match *spec {
        StateSpec::Vacuum => QuantumState::Pure(StateVector::basis(FockDim::new(dim)?, 0)?),
        StateSpec::Fock { n } => QuantumState::Pure(StateVector::basis(FockDim::new(dim)?, n)?),
        StateSpec::Coherent { beta } => QuantumState::Pure(StateVector::from_amplitudes(coherent_amplitudes(dim, beta))?),
        StateSpec::Squeezed { r, theta } => {
            let mut v = CVector::zeros(dim);
            v[0] = C64::new(r.cosh().powf(-0.5), 0.0);
            let ratio = -C64::from_polar(r.tanh(), theta);
            let mut m = 1;
            while 2 * m < dim {
                let mf = m as f64;
                v[2 * m] = v[2 * m - 2] * ratio * ((2.0 * mf - 1.0) / (2.0 * mf)).sqrt();
                m += 1;
            }
            QuantumState::Pure(StateVector::from_amplitudes(v)?)
        }
        StateSpec::MultiCat { components, amplitude, theta } => {
            let (beta_abs, theta) = match amplitude {
                CatAmplitude::Beta(b) => (b.norm(), theta + b.arg()),
                CatAmplitude::MeanPhotons(n) => (matched_cat_beta(components, n, dim)?, theta),
            };
            QuantumState::Pure(StateVector::from_amplitudes(cat_amplitudes(dim, components, beta_abs, theta))?)
        }
        StateSpec::Thermal { nbar } => {
            let q = nbar / (nbar + 1.0);
            let pops: Vec<f64> = (0..dim).map(|n| q.powi(n as i32)).collect();
            QuantumState::Mixed(DensityOperator::diagonal(&pops)?)
        }
    };
    let leakage = state.leakage();
    if leakage > leakage_limit {
        return Err(Error::Truncation { leakage, limit: leakage_limit, dim });
    }
    Ok(state)
}

/// `|beta|` of the energy-matched cat, by bisection on the energy of the
/// normalized superposition in `dim` levels.
pub fn matched_cat_beta(components: usize, nbar: f64, dim: usize) -> Result<f64> {
    let energy = |x: f64| {
        let v = cat_amplitudes(dim, components, x.sqrt(), 0.0);
        let norm = v.norm_squared();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum::<f64>() / norm
    };
    Ok(bisect_cat_intensity(nbar, energy)?.sqrt())
}

// ---------------------------------------------------------------------------
// text form

pub(crate) fn parse_f64(s: &str, position: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(position, format!("expected a number, found '{s}'")))
}

/// Parses `a`, `a+bi`, `a-bi` or `bi`.
pub(crate) fn parse_complex(s: &str, position: usize) -> Result<C64> {
    let t = s.trim();
    let err = || Error::parse(position, format!("expected a complex number like 1+0.5i, found '{s}'"));
    if let Some(body) = t.strip_suffix('i') {
        // split at the last sign that is not an exponent sign or the leading sign
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        match split {
            Some(i) => {
                let re = body[..i].parse::<f64>().map_err(|_| err())?;
                let im_str = &body[i..];
                let im = match im_str {
                    "+" => 1.0,
                    "-" => -1.0,
                    _ => im_str.parse::<f64>().map_err(|_| err())?,
                };
                Ok(C64::new(re, im))
            }
            None => {
                let im = match body {
                    "" | "+" => 1.0,
                    "-" => -1.0,
                    _ => body.parse::<f64>().map_err(|_| err())?,
                };
                Ok(C64::new(0.0, im))
            }
        }
    } else {
        Ok(C64::new(t.parse::<f64>().map_err(|_| err())?, 0.0))
    }
}

/// Splits `kind:k=v,k=v` into the kind and positioned key/value pairs.
pub(crate) fn split_kv(s: &str) -> Result<(String, Vec<(String, String, usize)>)> {
    let (kind, rest, offset) = match s.find(':') {
        Some(i) => (&s[..i], &s[i + 1..], i + 1),
        None => (s, "", s.len()),
    };
    let mut pairs = Vec::new();
    let mut pos = offset;
    if !rest.is_empty() {
        for part in rest.split(',') {
            let Some(eq) = part.find('=') else {
                return Err(Error::parse(pos, format!("expected key=value, found '{part}'")));
            };
            pairs.push((part[..eq].trim().to_string(), part[eq + 1..].to_string(), pos + eq + 1));
            pos += part.len() + 1;
        }
    }
    Ok((kind.trim().to_ascii_lowercase(), pairs))
}

fn reject_unknown(pairs: &[(String, String, usize)], allowed: &[&str]) -> Result<()> {
    for (k, _, p) in pairs {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::parse(*p - k.len() - 1, format!("unknown key '{k}'")));
        }
    }
    Ok(())
}

fn lookup<'a>(pairs: &'a [(String, String, usize)], key: &str) -> Option<(&'a str, usize)> {
    pairs.iter().find(|(k, _, _)| k == key).map(|(_, v, p)| (v.as_str(), *p))
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, pairs) = split_kv(s)?;
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match lookup(&pairs, key) {
                Some((v, p)) => parse_f64(v, p),
                None => default.ok_or_else(|| Error::parse(s.len(), format!("missing '{key}'"))),
            }
        };
        let spec = match kind.as_str() {
            "vac" | "vacuum" => {
                reject_unknown(&pairs, &[])?;
                StateSpec::Vacuum
            }
            "fock" => {
                reject_unknown(&pairs, &["n"])?;
                let n = num("n", None)?;
                if n < 0.0 || n.fract() != 0.0 {
                    return Err(Error::parse(lookup(&pairs, "n").map_or(0, |x| x.1), "n must be a non-negative integer"));
                }
                StateSpec::Fock { n: n as usize }
            }
            "coh" | "coherent" => {
                reject_unknown(&pairs, &["beta"])?;
                let (v, p) = lookup(&pairs, "beta").ok_or_else(|| Error::parse(s.len(), "missing 'beta'"))?;
                StateSpec::Coherent { beta: parse_complex(v, p)? }
            }
            "sq" | "squeezed" => {
                reject_unknown(&pairs, &["r", "nbar", "theta"])?;
                let theta = num("theta", Some(0.0))?;
                match (lookup(&pairs, "r"), lookup(&pairs, "nbar")) {
                    (Some(_), Some((_, p))) => return Err(Error::parse(p, "give either r or nbar, not both")),
                    (None, Some(_)) => StateSpec::squeezed_with_energy(num("nbar", None)?, theta),
                    _ => StateSpec::Squeezed { r: num("r", None)?, theta },
                }
            }
            "cat" => {
                reject_unknown(&pairs, &["k", "nbar", "beta", "theta"])?;
                let k = num("k", None)?;
                if k < 1.0 || k.fract() != 0.0 {
                    return Err(Error::parse(lookup(&pairs, "k").map_or(0, |x| x.1), "k must be a positive integer"));
                }
                let theta = num("theta", Some(0.0))?;
                let amplitude = match (lookup(&pairs, "nbar"), lookup(&pairs, "beta")) {
                    (Some(_), Some((_, p))) => return Err(Error::parse(p, "give either nbar or beta, not both")),
                    (Some(_), None) => CatAmplitude::MeanPhotons(num("nbar", None)?),
                    (None, Some((v, p))) => CatAmplitude::Beta(parse_complex(v, p)?),
                    (None, None) => return Err(Error::parse(s.len(), "cat needs nbar or beta")),
                };
                StateSpec::MultiCat { components: k as usize, amplitude, theta }
            }
            "thermal" => {
                reject_unknown(&pairs, &["nbar"])?;
                StateSpec::Thermal { nbar: num("nbar", None)? }
            }
            other => return Err(Error::parse(0, format!("unknown state kind '{other}'"))),
        };
        spec.validate().map_err(|e| Error::parse(0, e.to_string()))?;
        Ok(spec)
    }
}

fn fmt_complex(c: C64) -> String {
    if c.im < 0.0 {
        format!("{}{}i", c.re, c.im)
    } else {
        format!("{}+{}i", c.re, c.im)
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StateSpec::Vacuum => write!(f, "vac"),
            StateSpec::Fock { n } => write!(f, "fock:n={n}"),
            StateSpec::Coherent { beta } => write!(f, "coh:beta={}", fmt_complex(beta)),
            StateSpec::Squeezed { r, theta } => write!(f, "sq:r={r},theta={theta}"),
            StateSpec::MultiCat { components, amplitude, theta } => match amplitude {
                CatAmplitude::MeanPhotons(n) => write!(f, "cat:k={components},nbar={n},theta={theta}"),
                CatAmplitude::Beta(b) => write!(f, "cat:k={components},beta={},theta={theta}", fmt_complex(b)),
            },
            StateSpec::Thermal { nbar } => write!(f, "thermal:nbar={nbar}"),
        }
    }
}

/// Populations `|c_n|^2` of a pure state or the diagonal of a mixed one.
pub fn populations(state: &QuantumState) -> DVector<f64> {
    match state {
        QuantumState::Pure(v) => v.amplitudes().map(|c| c.norm_sqr()),
        QuantumState::Mixed(r) => DVector::from_iterator(r.dim(), (0..r.dim()).map(|n| r.matrix()[(n, n)].re)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pure(spec: &StateSpec, dim: usize) -> StateVector {
        build_state(spec, dim).unwrap().as_pure().unwrap().clone()
    }

    #[test]
    fn fock_is_basis_vector() {
        let v = pure(&StateSpec::Fock { n: 5 }, 12);
        for (n, c) in v.amplitudes().iter().enumerate() {
            assert_eq!(c.norm(), if n == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn squeezed_closed_form_amplitudes() {
        let v = pure(&StateSpec::Squeezed { r: 1.0, theta: 0.0 }, 120);
        assert_relative_eq!(v.amplitudes()[0].re, 1.0 / 1f64.cosh().sqrt(), max_relative = 1e-10);
        for n in (1..120).step_by(2) {
            assert_eq!(v.amplitudes()[n], C64::new(0.0, 0.0));
        }
        // oracle: (cosh r)^{-1/2} (-tanh r)^m sqrt((2m)!) / (2^m m!)
        let t = 1f64.tanh();
        for m in 0..10u64 {
            let expected = 1f64.cosh().powf(-0.5)
                * (-t).powi(m as i32)
                * (0.5 * ln_factorial(2 * m) - m as f64 * 2f64.ln() - ln_factorial(m)).exp();
            assert!((v.amplitudes()[2 * m as usize].re - expected).abs() < 1e-12);
        }
        assert!((v.mean_photon_number() - 1f64.sinh().powi(2)).abs() < 1e-8);
        assert!((v.mean_photon_number() - 1.381_097_845_541_816_5).abs() < 1e-8);
    }

    #[test]
    fn two_cat_parity() {
        let b = 10f64.sqrt();
        let spec = StateSpec::MultiCat { components: 2, amplitude: CatAmplitude::Beta(C64::new(b, 0.0)), theta: PI / 2.0 };
        let v = pure(&spec, 80);
        for n in (1..80).step_by(2) {
            assert!(v.amplitudes()[n].norm() < 1e-14);
        }
        assert!(v.amplitudes()[10].norm() > 0.1);
    }

    #[test]
    fn coherent_vacuum_amplitude() {
        let v = pure(&StateSpec::coherent_real(1.0), 40);
        assert_relative_eq!(v.amplitudes()[0].re, (-0.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn energies() {
        assert_eq!(mean_energy(&build_state(&StateSpec::Vacuum, 4).unwrap()), 0.0);
        let sq = StateSpec::Squeezed { r: 5f64.sqrt().asinh(), theta: 0.0 };
        let dim = auto_dim(&[sq], 0.0);
        assert!((mean_energy(&build_state(&sq, dim).unwrap()) - 5.0).abs() < 1e-8);
        let th = StateSpec::Thermal { nbar: 5.0 };
        assert!((mean_energy(&build_state(&th, auto_dim(&[th], 0.0)).unwrap()) - 5.0).abs() < 1e-8);
        let coh = StateSpec::Coherent { beta: C64::new(1.0, 2.0) };
        assert!((mean_energy(&build_state(&coh, auto_dim(&[coh], 0.0)).unwrap()) - 5.0).abs() < 1e-8);
    }

    #[test]
    fn ten_cat_energy_match() {
        let spec = StateSpec::MultiCat { components: 10, amplitude: CatAmplitude::MeanPhotons(10.0), theta: 0.0 };
        let dim = auto_dim(&[spec], 0.0);
        let state = build_state(&spec, dim).unwrap();
        assert!((mean_energy(&state) - 10.0).abs() < 1e-6);
        // the quoted 8.3045 is |beta|^2
        let beta = matched_cat_beta(10, 10.0, dim).unwrap();
        assert!((beta * beta - 8.3045).abs() < 1e-3, "{}", beta * beta);
    }

    #[test]
    fn single_component_cat_is_coherent() {
        let b = C64::from_polar(1.3, 0.4);
        let cat = StateSpec::MultiCat { components: 1, amplitude: CatAmplitude::Beta(C64::new(1.3, 0.0)), theta: 0.4 };
        let f = fidelity(&pure(&cat, 40), &pure(&StateSpec::Coherent { beta: b }, 40)).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ten_cat_is_insensitive_to_theta() {
        let dim = 80;
        let fock = pure(&StateSpec::Fock { n: 10 }, dim);
        let fids: Vec<f64> = [0.0, 0.3, 1.0, PI / 2.0]
            .iter()
            .map(|&theta| {
                let spec = StateSpec::MultiCat { components: 10, amplitude: CatAmplitude::MeanPhotons(10.0), theta };
                fidelity(&fock, &pure(&spec, dim)).unwrap()
            })
            .collect();
        for f in &fids {
            assert!((f - fids[0]).abs() < 1e-2);
            assert!(*f > 0.99);
        }
    }

    #[test]
    fn truncation_is_reported() {
        let err = build_state(&StateSpec::coherent_real(4.0), 10).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
        assert!(build_state(&StateSpec::Squeezed { r: -1.0, theta: 0.0 }, 10).is_err());
        assert!(build_state(&StateSpec::Thermal { nbar: -0.5 }, 10).is_err());
    }

    #[test]
    fn auto_dim_covers_the_probe() {
        for spec in [
            StateSpec::Squeezed { r: 1.5, theta: 0.0 },
            StateSpec::coherent_real(3.0),
            StateSpec::Fock { n: 10 },
            StateSpec::Thermal { nbar: 2.0 },
        ] {
            let dim = auto_dim(&[spec], 1.0);
            assert!(build_state(&spec, dim).unwrap().leakage() < 1e-12, "{spec}");
        }
    }

    #[test]
    fn parse_forms() {
        assert_eq!("fock:n=5".parse::<StateSpec>().unwrap(), StateSpec::Fock { n: 5 });
        assert_eq!("sq:r=1.0,theta=0".parse::<StateSpec>().unwrap(), StateSpec::Squeezed { r: 1.0, theta: 0.0 });
        assert_eq!("coh:beta=1+0i".parse::<StateSpec>().unwrap(), StateSpec::coherent_real(1.0));
        assert_eq!(
            "coh:beta=-0.5-2i".parse::<StateSpec>().unwrap(),
            StateSpec::Coherent { beta: C64::new(-0.5, -2.0) }
        );
        assert_eq!(
            "cat:k=2,nbar=10,theta=1.5708".parse::<StateSpec>().unwrap(),
            StateSpec::MultiCat { components: 2, amplitude: CatAmplitude::MeanPhotons(10.0), theta: 1.5708 }
        );
        assert_eq!("thermal:nbar=5".parse::<StateSpec>().unwrap(), StateSpec::Thermal { nbar: 5.0 });
        assert_eq!("vac".parse::<StateSpec>().unwrap(), StateSpec::Vacuum);
        match "sq:r=abc".parse::<StateSpec>() {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 5),
            other => panic!("{other:?}"),
        }
        assert!("sq:rr=1".parse::<StateSpec>().is_err());
        assert!("blob".parse::<StateSpec>().is_err());
        assert!("fock:n=1.5".parse::<StateSpec>().is_err());
    }

    proptest! {
        #[test]
        fn text_form_round_trips(r in 0.0f64..2.0, theta in -3.0f64..3.0, n in 0usize..40, re in -3.0f64..3.0, im in -3.0f64..3.0) {
            for spec in [
                StateSpec::Squeezed { r, theta },
                StateSpec::Fock { n },
                StateSpec::Coherent { beta: C64::new(re, im) },
                StateSpec::MultiCat { components: n + 1, amplitude: CatAmplitude::Beta(C64::new(re, im)), theta },
                StateSpec::Thermal { nbar: r },
            ] {
                prop_assert_eq!(spec.to_string().parse::<StateSpec>().unwrap(), spec);
            }
        }

        #[test]
        fn built_states_are_normalized(r in 0.0f64..1.2, theta in 0.0f64..6.0) {
            let v = pure(&StateSpec::Squeezed { r, theta }, 200);
            prop_assert!((v.amplitudes().norm() - 1.0).abs() < 1e-10);
        }
    }
}
