//! Displacement unitaries `D(alpha, phi)`, phase distributions `p(phi)` and
//! the phase-averaged displacement channel.
//!
//! Conventions: `phi` is the phase of `e^{i phi} a^dag` in the generator, so
//! `D(alpha, 0)` shifts `x = (a + a^dag)/sqrt 2` by `sqrt 2 alpha`. A squeezed
//! vacuum with `theta = 0` has its narrow quadrature along that same axis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{CMatrix, CVector, DensityOperator, FockDim, Operator, StateVector, C64};
use crate::special::{laguerre_generalized, ln_factorial};
use crate::states::{parse_f64, split_kv, QuantumState};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhaseAtom {
    pub phi: f64,
    pub weight: f64,
}

/// Distribution of the displacement phase.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum PhaseDistribution {
    Uniform,
    VonMises { mu: f64, kappa: f64 },
    /// Finitely many atoms; weights are normalized on construction.
    Discrete(Vec<PhaseAtom>),
}

impl PhaseDistribution {
    pub fn von_mises(mu: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() || !mu.is_finite() {
            return Err(Error::Domain(format!("von Mises needs finite mu and kappa >= 0 (kappa={kappa})")));
        }
        Ok(PhaseDistribution::VonMises { mu, kappa })
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("discrete phase distribution needs atoms".into()));
        }
        if atoms.iter().any(|(p, w)| !(*w > 0.0) || !p.is_finite() || !w.is_finite()) {
            return Err(Error::Domain("atom weights must be positive and finite".into()));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        Ok(PhaseDistribution::Discrete(
            atoms.iter().map(|&(phi, w)| PhaseAtom { phi, weight: w / total }).collect(),
        ))
    }

    /// `delta(phi - phi0)`.
    pub fn point(phi0: f64) -> Self {
        PhaseDistribution::Discrete(vec![PhaseAtom { phi: phi0, weight: 1.0 }])
    }

    /// `(delta(phi) + delta(phi - pi)) / 2`.
    pub fn antipodal_pair() -> Self {
        PhaseDistribution::Discrete(vec![PhaseAtom { phi: 0.0, weight: 0.5 }, PhaseAtom { phi: PI, weight: 0.5 }])
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, PhaseDistribution::Discrete(_))
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, PhaseDistribution::Uniform)
            || matches!(self, PhaseDistribution::VonMises { kappa, .. } if *kappa == 0.0)
    }

    /// Node count used for continuous distributions at dimension `dim`.
    pub fn default_nodes(dim: usize) -> usize {
        64.max(4 * dim)
    }

    /// Quadrature rule `(phi_j, w_j)`. Continuous distributions use the
    /// uniform trapezoid on `[0, 2 pi)` with density weights normalized to
    /// one, so constants integrate exactly.
    pub fn rule(&self, nodes: usize) -> Result<Vec<(f64, f64)>> {
        match self {
            PhaseDistribution::Discrete(atoms) => Ok(atoms.iter().map(|a| (a.phi, a.weight)).collect()),
            _ if nodes < 8 => Err(Error::Quadrature(format!("{nodes} phase nodes; need at least 8"))),
            PhaseDistribution::Uniform => {
                let w = 1.0 / nodes as f64;
                Ok((0..nodes).map(|j| (TAU * j as f64 / nodes as f64, w)).collect())
            }
            PhaseDistribution::VonMises { mu, kappa } => {
                let raw: Vec<(f64, f64)> = (0..nodes)
                    .map(|j| {
                        let phi = TAU * j as f64 / nodes as f64;
                        (phi, (kappa * ((phi - mu).cos() - 1.0)).exp())
                    })
                    .collect();
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                Ok(raw.into_iter().map(|(p, w)| (p, w / total)).collect())
            }
        }
    }

    /// Draws one phase.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PhaseDistribution::Uniform => TAU * rng.random::<f64>(),
            PhaseDistribution::Discrete(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.weight;
                    if u < acc {
                        return a.phi;
                    }
                }
                atoms[atoms.len() - 1].phi
            }
            PhaseDistribution::VonMises { mu, kappa } => sample_von_mises(*mu, *kappa, rng),
        }
    }
}

/// Best-Fisher rejection sampler.
fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return TAU * rng.random::<f64>();
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let s = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + s * z) / (s + z);
        let c = kappa * (s - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let dev = f.clamp(-1.0, 1.0).acos();
            let phi = if u3 < 0.5 { mu - dev } else { mu + dev };
            return phi.rem_euclid(TAU);
        }
    }
}

impl FromStr for PhaseDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("uniform") {
            return Ok(PhaseDistribution::Uniform);
        }
        if let Some(rest) = t.strip_prefix("discrete:") {
            let mut atoms = Vec::new();
            let mut pos = "discrete:".len();
            for part in rest.split(',') {
                let Some(at) = part.find('@') else {
                    return Err(Error::parse(pos, format!("expected phi@weight, found '{part}'")));
                };
                let phi = parse_f64(&part[..at], pos)?;
                let w = parse_f64(&part[at + 1..], pos + at + 1)?;
                atoms.push((phi, w));
                pos += part.len() + 1;
            }
            return PhaseDistribution::discrete(&atoms).map_err(|e| Error::parse(0, e.to_string()));
        }
        let (kind, pairs) = split_kv(t)?;
        if kind == "vonmises" {
            let mut mu = 0.0;
            let mut kappa = None;
            for (k, v, p) in &pairs {
                match k.as_str() {
                    "mu" => mu = parse_f64(v, *p)?,
                    "kappa" => kappa = Some(parse_f64(v, *p)?),
                    _ => return Err(Error::parse(*p, format!("unknown key '{k}'"))),
                }
            }
            let kappa = kappa.ok_or_else(|| Error::parse(t.len(), "missing 'kappa'"))?;
            return PhaseDistribution::von_mises(mu, kappa).map_err(|e| Error::parse(0, e.to_string()));
        }
        Err(Error::parse(0, format!("unknown phase distribution '{t}'")))
    }
}

impl fmt::Display for PhaseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseDistribution::Uniform => write!(f, "uniform"),
            PhaseDistribution::VonMises { mu, kappa } => write!(f, "vonmises:mu={mu},kappa={kappa}"),
            PhaseDistribution::Discrete(atoms) => {
                write!(f, "discrete:")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{}@{}", a.phi, a.weight)?;
                }
                Ok(())
            }
        }
    }
}

/// Eigensystem of the displacement generator for one truncation, shared by
/// every `D(alpha, phi)` at that dimension.
///
/// `D(alpha, phi) = R Q e^{-i alpha L} Q^T R^dag` with `Q L Q^T = a + a^dag`
/// and `R = diag(e^{i n (phi + pi/2)})`.
#[derive(Debug, Clone)]
pub struct Displacer {
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl Displacer {
    pub fn new(dim: usize) -> Result<Self> {
        let dim = FockDim::new(dim)?.get();
        let mut x = DMatrix::<f64>::zeros(dim, dim);
        for n in 1..dim {
            let s = (n as f64).sqrt();
            x[(n - 1, n)] = s;
            x[(n, n - 1)] = s;
        }
        let eig = SymmetricEigen::new(x);
        Ok(Displacer { eigvals: eig.eigenvalues, eigvecs: eig.eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    fn rotation(&self, phi: f64) -> Vec<C64> {
        (0..self.dim()).map(|n| C64::from_polar(1.0, n as f64 * (phi + FRAC_PI_2))).collect()
    }

    /// `D(alpha, phi) v`.
    pub fn apply(&self, alpha: f64, phi: f64, v: &CVector) -> Result<CVector> {
        check_alpha(alpha)?;
        crate::fock::check_dims(self.dim(), v.len())?;
        let rot = self.rotation(phi);
        let w: Vec<C64> = v.iter().zip(&rot).map(|(a, r)| a * r.conj()).collect();
        let re = DVector::from_iterator(w.len(), w.iter().map(|c| c.re));
        let im = DVector::from_iterator(w.len(), w.iter().map(|c| c.im));
        let qre = self.eigvecs.tr_mul(&re);
        let qim = self.eigvecs.tr_mul(&im);
        let mut ure = DVector::zeros(w.len());
        let mut uim = DVector::zeros(w.len());
        for k in 0..w.len() {
            let e = C64::from_polar(1.0, -alpha * self.eigvals[k]);
            let u = C64::new(qre[k], qim[k]) * e;
            ure[k] = u.re;
            uim[k] = u.im;
        }
        let yre = &self.eigvecs * ure;
        let yim = &self.eigvecs * uim;
        Ok(CVector::from_iterator(
            w.len(),
            (0..w.len()).map(|n| C64::new(yre[n], yim[n]) * rot[n]),
        ))
    }

    /// `D(alpha, phi) |psi>` as a state.
    pub fn displace(&self, alpha: f64, phi: f64, psi: &StateVector) -> Result<StateVector> {
        StateVector::from_amplitudes(self.apply(alpha, phi, psi.amplitudes())?)
    }

    /// Dense `D(alpha, phi)`.
    pub fn operator(&self, alpha: f64, phi: f64) -> Result<Operator> {
        check_alpha(alpha)?;
        let d = self.dim();
        let rot = self.rotation(phi);
        let cos = DVector::from_iterator(d, self.eigvals.iter().map(|l| (alpha * l).cos()));
        let sin = DVector::from_iterator(d, self.eigvals.iter().map(|l| -(alpha * l).sin()));
        let mre = &self.eigvecs * DMatrix::from_diagonal(&cos) * self.eigvecs.transpose();
        let mim = &self.eigvecs * DMatrix::from_diagonal(&sin) * self.eigvecs.transpose();
        Operator::new(CMatrix::from_fn(d, d, |r, c| C64::new(mre[(r, c)], mim[(r, c)]) * rot[r] * rot[c].conj()))
    }

    /// Trigonometric-polynomial form of `phi -> <psi| D(alpha, phi) |psi>`.
    pub fn fidelity_kernel(&self, psi: &StateVector, alpha: f64) -> Result<PhaseFidelity> {
        check_alpha(alpha)?;
        crate::fock::check_dims(self.dim(), psi.dim())?;
        let d = self.dim();
        let support: Vec<usize> = (0..d).filter(|&n| psi.amplitudes()[n].norm_sqr() > 0.0).collect();
        let b = DMatrix::from_fn(support.len(), d, |a, j| self.eigvecs[(support[a], j)]);
        let cos = DVector::from_iterator(d, self.eigvals.iter().map(|l| (alpha * l).cos()));
        let sin = DVector::from_iterator(d, self.eigvals.iter().map(|l| -(alpha * l).sin()));
        let bc = DMatrix::from_fn(support.len(), d, |a, j| b[(a, j)] * cos[j]);
        let bs = DMatrix::from_fn(support.len(), d, |a, j| b[(a, j)] * sin[j]);
        let mre = &bc * b.transpose();
        let mim = &bs * b.transpose();
        let offset = d - 1;
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * d - 1];
        let i_pow = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        for (a, &m) in support.iter().enumerate() {
            let cm = psi.amplitudes()[m].conj();
            for (bi, &n) in support.iter().enumerate() {
                let k = m as isize - n as isize;
                let phase = i_pow[k.rem_euclid(4) as usize];
                coeffs[(k + offset as isize) as usize] +=
                    cm * C64::new(mre[(a, bi)], mim[(a, bi)]) * psi.amplitudes()[n] * phase;
            }
        }
        let last = coeffs.iter().rposition(|c| c.norm_sqr() > 0.0).unwrap_or(offset);
        let first = coeffs.iter().position(|c| c.norm_sqr() > 0.0).unwrap_or(offset);
        let min_k = first as isize - offset as isize;
        Ok(PhaseFidelity { coeffs: coeffs[first..=last].to_vec(), min_k })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("displacement magnitude must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// `A(phi) = sum_k c_k e^{i k phi} = <psi|D(alpha, phi)|psi>` for fixed
/// probe and `alpha`.
#[derive(Debug, Clone)]
pub struct PhaseFidelity {
    coeffs: Vec<C64>,
    min_k: isize,
}

impl PhaseFidelity {
    pub fn amplitude(&self, phi: f64) -> C64 {
        let z = C64::from_polar(1.0, phi);
        let mut acc = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc * C64::from_polar(1.0, self.min_k as f64 * phi)
    }

    /// `|<psi|D(alpha, phi)|psi>|^2`.
    pub fn fidelity(&self, phi: f64) -> f64 {
        self.amplitude(phi).norm_sqr()
    }

    /// Largest harmonic present; the trapezoid rule is exact for the
    /// uniform average once it has more than twice this many nodes.
    pub fn bandwidth(&self) -> usize {
        let hi = self.min_k + self.coeffs.len() as isize - 1;
        hi.unsigned_abs().max(self.min_k.unsigned_abs())
    }

    /// Exact uniform average of the fidelity over `phi` (Parseval).
    pub fn uniform_average(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `sum_j w_j |A(phi_j)|^2` over a quadrature rule.
    pub fn average(&self, rule: &[(f64, f64)]) -> f64 {
        rule.iter().map(|(phi, w)| w * self.fidelity(*phi)).sum()
    }
}

/// Exact `<m| D(gamma) |n>` for `D(gamma) = exp(gamma a^dag - gamma* a)`,
/// from the generalized-Laguerre closed form (no truncation).
pub fn displacement_element(m: usize, n: usize, gamma: C64) -> C64 {
    let x = gamma.norm_sqr();
    if x == 0.0 {
        return if m == n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
    }
    let (hi, lo) = if m >= n { (m, n) } else { (n, m) };
    let k = (hi - lo) as f64;
    let lag = laguerre_generalized(lo, k, x).unwrap_or(f64::NAN);
    let log_mag = 0.5 * (ln_factorial(lo as u64) - ln_factorial(hi as u64)) + 0.5 * k * x.ln() - 0.5 * x;
    let mag = log_mag.exp() * lag;
    // m >= n: gamma^{m-n}; m < n: (-gamma*)^{n-m}
    let phase = if m >= n {
        C64::from_polar(1.0, k * gamma.arg())
    } else {
        C64::from_polar(1.0, -k * gamma.arg()) * if (hi - lo) % 2 == 1 { -1.0 } else { 1.0 }
    };
    phase * mag
}

/// `D(alpha, phi)` in `dim` levels.
pub fn displacement(alpha: f64, phi: f64, dim: usize) -> Result<Operator> {
    check_alpha(alpha)?;
    Displacer::new(dim)?.operator(alpha, phi)
}

/// Phase-averaged displacement channel.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ChannelSpec {
    pub alpha: f64,
    pub phases: PhaseDistribution,
    /// Trapezoid nodes for continuous `p(phi)`; defaults to `max(64, 4 dim)`.
    pub nodes: Option<usize>,
    /// Re-run with doubled nodes and fail unless the outputs agree to 1e-10.
    pub certify: bool,
}

impl ChannelSpec {
    pub fn new(alpha: f64, phases: PhaseDistribution) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(ChannelSpec { alpha, phases, nodes: None, certify: true })
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = Some(nodes);
        self
    }

    pub fn uncertified(mut self) -> Self {
        self.certify = false;
        self
    }
}

/// Tolerance of the doubled-node convergence certificate.
pub const CHANNEL_CONVERGENCE_TOL: f64 = 1e-10;

/// `Lambda_alpha(rho) = int dphi p(phi) D rho D^dag`.
pub fn apply_channel(state: &QuantumState, spec: &ChannelSpec, displacer: &Displacer) -> Result<DensityOperator> {
    check_alpha(spec.alpha)?;
    crate::fock::check_dims(displacer.dim(), state.dim())?;
    if spec.alpha == 0.0 {
        return Ok(state.to_density());
    }
    let nodes = spec.nodes.unwrap_or_else(|| PhaseDistribution::default_nodes(state.dim()));
    let components: Vec<(f64, CVector)> = match state {
        QuantumState::Pure(v) => vec![(1.0, v.amplitudes().clone())],
        QuantumState::Mixed(rho) => {
            let (vals, vecs) = rho.eigen();
            vals.iter()
                .enumerate()
                .filter(|(_, l)| **l > 1e-15)
                .map(|(i, l)| (*l, vecs.column(i).into_owned()))
                .collect()
        }
    };
    let average = |nodes: usize| -> Result<CMatrix> {
        let d = state.dim();
        let mut acc = CMatrix::zeros(d, d);
        for (phi, w) in spec.phases.rule(nodes)? {
            for (p, v) in &components {
                let out = displacer.apply(spec.alpha, phi, v)?;
                acc.gerc(C64::new(w * p, 0.0), &out, &out, C64::new(1.0, 0.0));
            }
        }
        Ok(acc)
    };
    let out = average(nodes)?;
    if spec.certify && spec.phases.is_continuous() {
        let fine = average(2 * nodes)?;
        let diff = (&fine - &out).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if diff > CHANNEL_CONVERGENCE_TOL {
            return Err(Error::Quadrature(format!(
                "phase average not converged with {nodes} nodes (doubling changed it by {diff:.2e})"
            )));
        }
        return Ok(DensityOperator::from_matrix_unchecked(fine));
    }
    Ok(DensityOperator::from_matrix_unchecked(out))
}
