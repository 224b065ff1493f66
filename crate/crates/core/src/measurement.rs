//! Measurement models on the channel output: the self-projection POVM
//! `{|psi><psi|, 1 - |psi><psi|}` and quadrature (homodyne) detection.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::sync::OnceLock;

use rand::Rng;

use crate::channel::{Displacer, PhaseDistribution, PhaseFidelity};
use crate::error::{Error, Result};
use crate::fock::{FockDim, StateVector, C64};
use crate::special::{bessel_i0e, laguerre};
use crate::states::{auto_dim, build_state, StateSpec, LEAKAGE_LIMIT};

/// Binary self-projection or quadrature detection, with dark noise `eps`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MeasurementModel {
    pub kind: MeasurementKind,
    pub dark_noise: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum MeasurementKind {
    SelfProjection { probe: StateSpec },
    Quadrature { angle: f64, grid: XGrid },
}

impl MeasurementModel {
    pub fn self_projection(probe: StateSpec) -> Self {
        MeasurementModel { kind: MeasurementKind::SelfProjection { probe }, dark_noise: 0.0 }
    }

    pub fn quadrature(angle: f64, grid: XGrid) -> Self {
        MeasurementModel { kind: MeasurementKind::Quadrature { angle, grid }, dark_noise: 0.0 }
    }

    pub fn with_dark_noise(mut self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        self.dark_noise = eps;
        Ok(self)
    }

    /// Short description of the POVM, carried into Fisher reports.
    pub fn label(&self) -> String {
        let noise = if self.dark_noise > 0.0 { format!(", eps={}", self.dark_noise) } else { String::new() };
        match &self.kind {
            MeasurementKind::SelfProjection { probe } => format!("self-projection onto {probe}{noise}"),
            MeasurementKind::Quadrature { angle, .. } => format!("quadrature at angle {angle}{noise}"),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("dark noise must lie in [0, 1], got {eps}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// `(p0, p1)` after mixing with a fair coin of weight `eps`.
pub fn apply_dark_noise(p0: f64, eps: f64) -> Result<(f64, f64)> {
    check_eps(eps)?;
    if !(-1e-12..=1.0 + 1e-12).contains(&p0) {
        return Err(Error::Domain(format!("p0 must lie in [0, 1], got {p0}")));
    }
    let q = (1.0 - eps) * p0 + 0.5 * eps;
    Ok((q, 1.0 - q))
}

/// `e^{-alpha^2 cosh 2r} I0(alpha^2 sinh 2r)`: uniform-phase self-projection
/// fidelity of a squeezed vacuum.
pub fn p0_squeezed_closed(alpha: f64, r: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("squeezing must be >= 0, got {r}")));
    }
    let a2 = alpha * alpha;
    // e^{-a2 cosh2r} I0(a2 sinh2r) = e^{-a2 e^{-2r}} * [e^{-a2 sinh2r} I0(a2 sinh2r)]
    Ok((-a2 * (-2.0 * r).exp()).exp() * bessel_i0e(a2 * (2.0 * r).sinh())?)
}

/// `e^{-alpha^2} L_n(alpha^2)^2`, independent of the displacement phase.
pub fn p0_fock_closed(alpha: f64, n: usize) -> Result<f64> {
    check_alpha(alpha)?;
    let a2 = alpha * alpha;
    Ok((-a2).exp() * laguerre(n as i64, a2)?.powi(2))
}

/// `e^{-alpha^2}` for vacuum and every coherent probe.
pub fn p0_coherent_closed(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((-alpha * alpha).exp())
}

/// Fixed-phase fidelity `|<r,theta|D(alpha, phi)|r,theta>|^2`.
pub fn squeezed_fidelity_at(alpha: f64, r: f64, theta: f64, phi: f64) -> f64 {
    let t = phi - 0.5 * theta;
    let (c, s) = (t.cos(), t.sin());
    (-alpha * alpha * (c * c * (2.0 * r).exp() + s * s * (-2.0 * r).exp())).exp()
}

/// Closed-form fixed-phase fidelity where one exists.
pub fn closed_fidelity(spec: &StateSpec, alpha: f64, phi: f64) -> Option<f64> {
    match *spec {
        StateSpec::Vacuum | StateSpec::Coherent { .. } => p0_coherent_closed(alpha).ok(),
        StateSpec::Fock { n } => p0_fock_closed(alpha, n).ok(),
        StateSpec::Squeezed { r, theta } => Some(squeezed_fidelity_at(alpha, r, theta, phi)),
        _ => None,
    }
}

/// Closed-form phase-averaged `p0` where one exists.
pub fn closed_p0(spec: &StateSpec, alpha: f64, phases: &PhaseDistribution) -> Option<f64> {
    match (*spec, phases) {
        (StateSpec::Vacuum | StateSpec::Coherent { .. } | StateSpec::Fock { .. }, _) => closed_fidelity(spec, alpha, 0.0),
        (StateSpec::Squeezed { r, .. }, p) if p.is_uniform() => p0_squeezed_closed(alpha, r).ok(),
        (StateSpec::Squeezed { r, theta }, PhaseDistribution::Discrete(atoms)) => {
            Some(atoms.iter().map(|a| a.weight * squeezed_fidelity_at(alpha, r, theta, a.phi)).sum())
        }
        (StateSpec::Squeezed { r, theta }, p) => {
            // closed integrand, trapezoid in phi doubled to 1e-13
            let avg = |nodes: usize| -> Option<f64> {
                Some(p.rule(nodes).ok()?.iter().map(|(phi, w)| w * squeezed_fidelity_at(alpha, r, theta, *phi)).sum())
            };
            let mut nodes = 64;
            let mut prev = avg(nodes)?;
            while nodes < 1 << 16 {
                nodes *= 2;
                let next = avg(nodes)?;
                if (next - prev).abs() < 1e-13 {
                    return Some(next);
                }
                prev = next;
            }
            None
        }
        _ => None,
    }
}

/// Which path produces fidelities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityRoute {
    /// Closed forms where available, the Fock-space kernel otherwise.
    #[default]
    Auto,
    Numeric,
}

/// Self-projection measurement bound to a realized probe.
#[derive(Debug, Clone)]
pub struct SelfProjection {
    spec: StateSpec,
    probe: StateVector,
    displacer: OnceLock<Displacer>,
}

impl SelfProjection {
    pub fn new(spec: StateSpec, dim: usize) -> Result<Self> {
        let probe = build_state(&spec, dim)?.as_pure()?.clone();
        FockDim::new(dim)?;
        Ok(SelfProjection { spec, probe, displacer: OnceLock::new() })
    }

    /// Truncation sized for displacements up to `alpha_max`.
    pub fn auto(spec: StateSpec, alpha_max: f64) -> Result<Self> {
        Self::new(spec, auto_dim(&[spec], alpha_max))
    }

    pub fn spec(&self) -> &StateSpec {
        &self.spec
    }

    pub fn probe(&self) -> &StateVector {
        &self.probe
    }

    /// Eigensystem for this truncation, built on first use (closed-form
    /// routes never need it).
    pub fn displacer(&self) -> &Displacer {
        self.displacer.get_or_init(|| Displacer::new(self.dim()).expect("dimension validated on construction"))
    }

    pub fn dim(&self) -> usize {
        self.probe.dim()
    }

    /// Largest top-level population of `D(alpha, phi)|psi>` over four
    /// displacement directions.
    pub fn displaced_leakage(&self, alpha: f64) -> Result<f64> {
        let mut worst = self.probe.leakage();
        if alpha == 0.0 {
            return Ok(worst);
        }
        for k in 0..4 {
            let v = self.displacer().displace(alpha, k as f64 * FRAC_PI_2, &self.probe)?;
            worst = worst.max(v.leakage());
        }
        Ok(worst)
    }

    fn checked_leakage(&self, alpha: f64) -> Result<f64> {
        let leak = self.displaced_leakage(alpha)?;
        if leak > LEAKAGE_LIMIT {
            return Err(Error::Truncation { leakage: leak, limit: LEAKAGE_LIMIT, dim: self.dim() });
        }
        Ok(leak)
    }

    pub fn kernel(&self, alpha: f64) -> Result<PhaseFidelity> {
        self.displacer().fidelity_kernel(&self.probe, alpha)
    }

    /// Fixed-`alpha` fidelity curve `phi -> |<psi|D(alpha, phi)|psi>|^2`.
    pub fn at_alpha(&self, alpha: f64, route: FidelityRoute) -> Result<FixedAlpha> {
        check_alpha(alpha)?;
        if route == FidelityRoute::Auto && closed_fidelity(&self.spec, alpha, 0.0).is_some() {
            return Ok(FixedAlpha::Closed { spec: self.spec, alpha });
        }
        self.checked_leakage(alpha)?;
        Ok(FixedAlpha::Kernel(self.kernel(alpha)?))
    }

    /// Numerically integrated `p0(alpha) = int p(phi) |<psi|psi_alpha^phi>|^2`.
    pub fn p0(&self, alpha: f64, phases: &PhaseDistribution) -> Result<P0Value> {
        check_alpha(alpha)?;
        if alpha == 0.0 {
            return Ok(P0Value { value: 1.0, leakage: self.probe.leakage() });
        }
        let leakage = self.checked_leakage(alpha)?;
        let kernel = self.kernel(alpha)?;
        let value = average_kernel(&kernel, phases, self.dim())?;
        Ok(P0Value { value: value.clamp(0.0, 1.0), leakage })
    }

    /// `p0` through closed forms where available.
    pub fn p0_routed(&self, alpha: f64, phases: &PhaseDistribution, route: FidelityRoute) -> Result<P0Value> {
        if route == FidelityRoute::Auto {
            check_alpha(alpha)?;
            if let Some(v) = closed_p0(&self.spec, alpha, phases) {
                return Ok(P0Value { value: v, leakage: 0.0 });
            }
        }
        self.p0(alpha, phases)
    }
}

/// Phase average of a fidelity kernel. Uniform phases are summed exactly;
/// other continuous distributions double the trapezoid until two
/// successive rules agree to 1e-12.
fn average_kernel(kernel: &PhaseFidelity, phases: &PhaseDistribution, dim: usize) -> Result<f64> {
    match phases {
        p if p.is_uniform() => Ok(kernel.uniform_average()),
        PhaseDistribution::Discrete(_) => Ok(kernel.average(&phases.rule(0)?)),
        _ => {
            let mut nodes = PhaseDistribution::default_nodes(dim);
            let mut prev = kernel.average(&phases.rule(nodes)?);
            for _ in 0..10 {
                nodes *= 2;
                let next = kernel.average(&phases.rule(nodes)?);
                if (next - prev).abs() < 1e-12 {
                    return Ok(next);
                }
                prev = next;
            }
            Err(Error::Quadrature(format!("phase average did not settle by {nodes} nodes")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct P0Value {
    pub value: f64,
    /// Worst truncation leakage of the displaced probe.
    pub leakage: f64,
}

/// Fidelity curve in `phi` at one `alpha`.
#[derive(Debug, Clone)]
pub enum FixedAlpha {
    Closed { spec: StateSpec, alpha: f64 },
    Kernel(PhaseFidelity),
}

impl FixedAlpha {
    pub fn fidelity(&self, phi: f64) -> f64 {
        match self {
            FixedAlpha::Closed { spec, alpha } => closed_fidelity(spec, *alpha, phi).unwrap_or(f64::NAN),
            FixedAlpha::Kernel(k) => k.fidelity(phi).clamp(0.0, 1.0),
        }
    }
}

/// `p0` with a truncation sized automatically for `probe` and `alpha`.
pub fn p0_numeric(probe: &StateSpec, alpha: f64, phases: &PhaseDistribution) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(SelfProjection::auto(*probe, alpha)?.p0(alpha, phases)?.value)
}

/// Uniform position grid for quadrature densities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct XGrid {
    pub half_width: f64,
    pub points: usize,
}

impl XGrid {
    pub const DEFAULT_POINTS: usize = 4001;

    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() || points < 3 {
            return Err(Error::Domain(format!("bad grid: half width {half_width}, {points} points")));
        }
        Ok(XGrid { half_width, points })
    }

    /// Half-width `8 max(1, e^r, sqrt(2N + 1)) + sqrt 2 alpha`, where `r` is
    /// the probe's squeezing and `N` its energy.
    pub fn for_probe(spec: &StateSpec, alpha: f64) -> Self {
        let stretch = match *spec {
            StateSpec::Squeezed { r, .. } => r.exp(),
            _ => 1.0,
        };
        let spread = (2.0 * spec.nominal_energy() + 1.0).sqrt();
        XGrid { half_width: 8.0 * stretch.max(spread) + SQRT_2 * alpha, points: Self::DEFAULT_POINTS }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Same range, half the spacing.
    pub fn refined(&self) -> Self {
        XGrid { half_width: self.half_width, points: 2 * self.points - 1 }
    }

    /// Trapezoid weights.
    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }
}

/// Position-representation wavefunction `psi(x) = sum_n c_n <x|n>` of the
/// quadrature at a given angle.
#[derive(Debug, Clone)]
pub struct Wavefunction {
    coeffs: Vec<C64>,
}

impl Wavefunction {
    /// Quadrature `x_angle = (a e^{-i angle} + a^dag e^{i angle}) / sqrt 2`.
    pub fn new(psi: &StateVector, angle: f64) -> Self {
        let last = psi.amplitudes().iter().rposition(|c| c.norm_sqr() > 0.0).unwrap_or(0);
        let coeffs =
            (0..=last).map(|n| psi.amplitudes()[n] * C64::from_polar(1.0, -(n as f64) * angle)).collect();
        Wavefunction { coeffs }
    }

    /// `(psi(x), psi'(x))`.
    pub fn eval(&self, x: f64) -> (C64, C64) {
        // h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}
        let count = self.coeffs.len();
        let mut log_scale = -0.5 * x * x;
        let mut prev = 0.0;
        let mut cur = PI.powf(-0.25);
        let mut val = C64::new(0.0, 0.0);
        let mut der = C64::new(0.0, 0.0);
        for n in 0..count {
            let nf = n as f64;
            let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
            let c = self.coeffs[n];
            val += c * cur;
            der += c * ((0.5 * nf).sqrt() * prev - (0.5 * (nf + 1.0)).sqrt() * next);
            prev = cur;
            cur = next;
            if cur.abs() > 1e150 {
                prev *= 1e-150;
                cur *= 1e-150;
                val *= 1e-150;
                der *= 1e-150;
                log_scale += 150.0 * std::f64::consts::LN_10;
            }
        }
        let s = log_scale.exp();
        (val * s, der * s)
    }

    /// `(|psi(x)|^2, d/dx |psi(x)|^2)`.
    pub fn density(&self, x: f64) -> (f64, f64) {
        let (v, d) = self.eval(x);
        (v.norm_sqr(), 2.0 * (v.conj() * d).re)
    }
}

/// `p(x|alpha)` and `d p(x|alpha) / d alpha` on a grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DensityTable {
    pub grid: XGrid,
    pub p: Vec<f64>,
    pub dp_dalpha: Vec<f64>,
    pub phase_nodes: usize,
}

impl DensityTable {
    pub fn xs(&self) -> Vec<f64> {
        self.grid.xs()
    }

    pub fn integral(&self) -> f64 {
        self.p.iter().enumerate().map(|(i, p)| self.grid.weight(i) * p).sum()
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.p.iter().enumerate().map(|(i, p)| self.grid.weight(i) * p * self.grid.x(i).powi(k)).sum()
    }
}

/// Probe densities below this fraction of their peak are treated as zero.
/// Truncated probes carry cancellation residue of order 1e-22 far out in
/// the tails; this sits well below the CFI probability floor.
const SUPPORT_FLOOR: f64 = 1e-20;

/// Interval outside which the unshifted probe density is negligible,
/// padded by two grid steps.
fn density_support(wf: &Wavefunction, grid: &XGrid) -> (f64, f64) {
    let f: Vec<f64> = (0..grid.points).map(|i| wf.density(grid.x(i)).0).collect();
    let peak = f.iter().cloned().fold(0.0, f64::max);
    let first = f.iter().position(|v| *v > SUPPORT_FLOOR * peak).unwrap_or(0);
    let last = f.iter().rposition(|v| *v > SUPPORT_FLOOR * peak).unwrap_or(grid.points - 1);
    let pad = 2.0 * grid.dx();
    let lo = if first == 0 { f64::NEG_INFINITY } else { grid.x(first) - pad };
    let hi = if last + 1 == grid.points { f64::INFINITY } else { grid.x(last) + pad };
    (lo, hi)
}

/// Density at a fixed phase-quadrature rule, visiting only grid points
/// where the shifted probe has support.
fn density_with_rule(
    wf: &Wavefunction,
    alpha: f64,
    angle: f64,
    rule: &[(f64, f64)],
    grid: &XGrid,
    support: (f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; grid.points];
    let mut dp = vec![0.0; grid.points];
    let index = |x: f64| (x + grid.half_width) / grid.dx();
    for &(phi, w) in rule {
        let c = SQRT_2 * (phi - angle).cos();
        let shift = alpha * c;
        let lo = index(support.0 + shift).ceil().max(0.0);
        let hi = index(support.1 + shift).floor().min((grid.points - 1) as f64);
        if hi < lo {
            continue;
        }
        for i in lo as usize..=hi as usize {
            let (f, df) = wf.density(grid.x(i) - shift);
            p[i] += w * f;
            dp[i] -= w * c * df;
        }
    }
    (p, dp)
}

/// Phase-averaged quadrature density of `D(alpha, phi)|psi>` with its
/// `alpha`-derivative. Continuous phase distributions are integrated with
/// trapezoid rules doubled until the table settles to 1e-10 of its peak.
pub fn quadrature_density(
    psi: &StateVector,
    alpha: f64,
    phases: &PhaseDistribution,
    angle: f64,
    grid: &XGrid,
) -> Result<DensityTable> {
    check_alpha(alpha)?;
    let wf = Wavefunction::new(psi, angle);
    let support = density_support(&wf, grid);
    let table = if !phases.is_continuous() || alpha == 0.0 {
        let rule = if alpha == 0.0 { vec![(0.0, 1.0)] } else { phases.rule(0)? };
        let (p, dp) = density_with_rule(&wf, alpha, angle, &rule, grid, support);
        DensityTable { grid: *grid, p, dp_dalpha: dp, phase_nodes: rule.len() }
    } else {
        let mut nodes = 64;
        let (mut p, mut dp) = density_with_rule(&wf, alpha, angle, &phases.rule(nodes)?, grid, support);
        loop {
            if nodes > 1 << 14 {
                return Err(Error::Quadrature(format!("phase average of quadrature density unsettled at {nodes} nodes")));
            }
            nodes *= 2;
            let (p2, dp2) = density_with_rule(&wf, alpha, angle, &phases.rule(nodes)?, grid, support);
            let peak = p2.iter().cloned().fold(0.0, f64::max);
            let dpeak = dp2.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let dev = p.iter().zip(&p2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let ddev = dp.iter().zip(&dp2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = p2;
            dp = dp2;
            if dev <= 1e-10 * peak && ddev <= 1e-10 * dpeak.max(peak) {
                break;
            }
        }
        DensityTable { grid: *grid, p, dp_dalpha: dp, phase_nodes: nodes }
    };
    let norm = table.integral();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Quadrature(format!(
            "quadrature density integrates to {norm:.9} on +/-{:.3}; widen the grid",
            grid.half_width
        )));
    }
    Ok(table)
}

/// Statistics of `A = x^2` for the phase-averaged output.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct QuadratureMoments {
    pub mean_a: f64,
    /// Phase-averaged conditional variance `E_phi[Var(A | phi)]`.
    pub var_a: f64,
    /// Variance of `A` under the phase-averaged density.
    pub var_a_total: f64,
    /// Error-propagation variance `E_phi[Var(A|phi)] / (d<A>/d alpha)^2`;
    /// undefined at `alpha = 0`.
    pub var_estimate: Option<f64>,
}

impl QuadratureMoments {
    /// `1 / var_estimate`, zero where it is undefined.
    pub fn effective_fi(&self) -> f64 {
        self.var_estimate.map_or(0.0, |v| 1.0 / v)
    }
}

/// Closed-form moments of `A = x^2` for a squeezed vacuum (narrow along the
/// measured quadrature) under a uniformly random displacement phase.
pub fn quadrature_moments_closed(r: f64, alpha: f64) -> Result<QuadratureMoments> {
    check_alpha(alpha)?;
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("squeezing must be >= 0, got {r}")));
    }
    let v = 0.5 * (-2.0 * r).exp();
    let a2 = alpha * alpha;
    let var_a = 4.0 * a2 * v + 2.0 * v * v;
    Ok(QuadratureMoments {
        mean_a: a2 + v,
        var_a,
        var_a_total: var_a + 0.5 * a2 * a2,
        var_estimate: (alpha > 0.0).then(|| var_a / (4.0 * a2)),
    })
}

/// Numerical counterpart of [`quadrature_moments_closed`] for any pure
/// probe, phase distribution and quadrature angle.
pub fn quadrature_moments(
    psi: &StateVector,
    alpha: f64,
    phases: &PhaseDistribution,
    angle: f64,
    grid: &XGrid,
) -> Result<QuadratureMoments> {
    check_alpha(alpha)?;
    let wf = Wavefunction::new(psi, angle);
    let mut mu = [0.0f64; 5];
    for i in 0..grid.points {
        let x = grid.x(i);
        let f = wf.density(x).0 * grid.weight(i);
        let mut xp = 1.0;
        for m in mu.iter_mut() {
            *m += f * xp;
            xp *= x;
        }
    }
    if (mu[0] - 1.0).abs() > 1e-6 {
        return Err(Error::Quadrature(format!("probe density integrates to {:.9}", mu[0])));
    }
    let rule = if phases.is_continuous() {
        phases.rule(PhaseDistribution::default_nodes(psi.dim()).max(256))?
    } else {
        phases.rule(0)?
    };
    let (mut mean, mut second, mut within, mut slope) = (0.0, 0.0, 0.0, 0.0);
    for (phi, w) in rule {
        let c = SQRT_2 * (phi - angle).cos();
        let s = alpha * c;
        // moments of x^2 and x^4 of f shifted by s
        let m2 = mu[2] + 2.0 * s * mu[1] + s * s * mu[0];
        let m4 = mu[4] + 4.0 * s * mu[3] + 6.0 * s * s * mu[2] + 4.0 * s.powi(3) * mu[1] + s.powi(4) * mu[0];
        mean += w * m2;
        second += w * m4;
        within += w * (m4 - m2 * m2);
        slope += w * c * (2.0 * mu[1] + 2.0 * s * mu[0]);
    }
    Ok(QuadratureMoments {
        mean_a: mean,
        var_a: within,
        var_a_total: second - mean * mean,
        var_estimate: (slope.abs() > 0.0).then(|| within / (slope * slope)),
    })
}

/// Draws quadrature outcomes from the phase-averaged output by inverting
/// the probe's tabulated cumulative distribution.
#[derive(Debug, Clone)]
pub struct QuadratureSampler {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    angle: f64,
}

impl QuadratureSampler {
    /// Table refinement over the caller's grid. Linear inversion of the CDF
    /// spreads each draw uniformly over a cell, which inflates the
    /// quadrature variance by `dx^2 / 12`.
    const REFINE: usize = 8;

    pub fn new(psi: &StateVector, angle: f64, grid: &XGrid) -> Result<Self> {
        let wf = Wavefunction::new(psi, angle);
        let grid = XGrid::new(grid.half_width, Self::REFINE * (grid.points - 1) + 1)?;
        let xs = grid.xs();
        let f: Vec<f64> = xs.iter().map(|&x| wf.density(x).0).collect();
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (f[i] + f[i - 1]) * grid.dx();
        }
        let total = cdf[xs.len() - 1];
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Quadrature(format!("probe density integrates to {total:.9}")));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(QuadratureSampler { xs, cdf, angle })
    }

    pub fn sample<R: Rng + ?Sized>(&self, alpha: f64, phases: &PhaseDistribution, rng: &mut R) -> f64 {
        let phi = phases.sample(rng);
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.xs.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        let x = self.xs[i - 1] + t * (self.xs[i] - self.xs[i - 1]);
        x + SQRT_2 * alpha * (phi - self.angle).cos()
    }
}
