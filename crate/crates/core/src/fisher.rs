//! Quantum and classical Fisher information for `alpha`.

use std::f64::consts::SQRT_2;

use crate::channel::{Displacer, PhaseDistribution};
use crate::error::{Error, Result};
use crate::fock::{CMatrix, CVector, DensityOperator, Operator, StateVector, C64};
use crate::measurement::{apply_dark_noise, quadrature_density, FidelityRoute, SelfProjection, XGrid};

/// Default SLD cutoff on `lambda_j + lambda_k`.
pub const SLD_CUTOFF: f64 = 1e-12;
/// Outcome probabilities below this are dropped from classical sums.
pub const PROBABILITY_FLOOR: f64 = 1e-14;
/// Small positive `alpha` standing in for the right limit at zero.
pub const RIGHT_LIMIT_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMethod {
    PureVariance,
    SldEigen,
    DiscreteCfi,
    QuadratureCfi,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FisherReport {
    pub value: f64,
    pub method: FisherMethod,
    pub sld_spectrum_cutoff: f64,
    /// Step of the finite difference in `alpha`; zero when exact.
    pub derivative_step: f64,
    pub leakage: f64,
    /// SLD pairs or outcomes dropped by the cutoff / floor.
    pub excluded_terms: usize,
    /// POVM behind a classical value.
    pub povm: Option<String>,
}

impl FisherReport {
    fn new(value: f64, method: FisherMethod) -> Self {
        FisherReport {
            value: value.max(0.0),
            method,
            sld_spectrum_cutoff: 0.0,
            derivative_step: 0.0,
            leakage: 0.0,
            excluded_terms: 0,
            povm: None,
        }
    }
}

/// `8 (N + 1/2)`.
pub fn qfi_bound(mean_photons: f64) -> Result<f64> {
    if !(mean_photons >= 0.0) {
        return Err(Error::Domain(format!("photon number must be >= 0, got {mean_photons}")));
    }
    Ok(8.0 * (mean_photons + 0.5))
}

/// Displacement generator `G(phi) = -i (e^{i phi} a^dag - e^{-i phi} a)`.
pub fn generator(phi: f64, dim: usize) -> Result<Operator> {
    let (a, ad) = crate::fock::make_ladder(dim)?;
    let z = C64::from_polar(1.0, phi);
    let minus_i = C64::new(0.0, -1.0);
    Operator::new((ad.matrix() * z - a.matrix() * z.conj()) * minus_i)
}

/// `4 Var_psi(G)`.
pub fn qfi_pure(psi: &StateVector, g: &Operator) -> Result<FisherReport> {
    crate::fock::check_dims(psi.dim(), g.dim())?;
    if !g.is_hermitian(1e-10) {
        return Err(Error::Domain("generator is not Hermitian".into()));
    }
    let gpsi = g.matrix() * psi.amplitudes();
    let mean = psi.amplitudes().dotc(&gpsi).re;
    let second = gpsi.dotc(&gpsi).re;
    let mut r = FisherReport::new(4.0 * (second - mean * mean), FisherMethod::PureVariance);
    r.leakage = psi.leakage();
    Ok(r)
}

/// `4 Var(G(phi))` with `a`, `a^dag` applied without truncating the
/// top level, so the variance is exact for the stored amplitudes.
fn generator_variance(v: &CVector, phi: f64) -> f64 {
    let d = v.len();
    let z = C64::from_polar(1.0, phi);
    // G v lives in d + 1 levels
    let mut gv = vec![C64::new(0.0, 0.0); d + 1];
    for n in 0..d {
        gv[n + 1] += z * (n as f64 + 1.0).sqrt() * v[n];
        if n > 0 {
            gv[n - 1] -= z.conj() * (n as f64).sqrt() * v[n];
        }
    }
    let minus_i = C64::new(0.0, -1.0);
    let mean: C64 = (0..d).map(|n| v[n].conj() * gv[n] * minus_i).sum();
    let second: f64 = gv.iter().map(|c| c.norm_sqr()).sum();
    4.0 * (second - mean.re * mean.re)
}

/// Phase-averaged QFI `int p(phi) F_Q(D(alpha, phi)|psi>) dphi`.
pub fn avg_qfi(psi: &StateVector, alpha: f64, phases: &PhaseDistribution) -> Result<FisherReport> {
    let displacer = Displacer::new(psi.dim())?;
    avg_qfi_with(psi, alpha, phases, &displacer)
}

pub fn avg_qfi_with(
    psi: &StateVector,
    alpha: f64,
    phases: &PhaseDistribution,
    displacer: &Displacer,
) -> Result<FisherReport> {
    // the integrand is a degree-2 trigonometric polynomial in phi, so 16
    // uniform nodes integrate it exactly
    let nodes = if phases.is_uniform() { 16 } else { PhaseDistribution::default_nodes(psi.dim()).max(256) };
    let mut value = 0.0;
    let mut leakage = psi.leakage();
    for (phi, w) in phases.rule(nodes)? {
        let moved = displacer.displace(alpha, phi, psi)?;
        leakage = leakage.max(moved.leakage());
        value += w * generator_variance(moved.amplitudes(), phi);
    }
    let mut r = FisherReport::new(value, FisherMethod::PureVariance);
    r.leakage = leakage;
    Ok(r)
}

/// Finite-difference settings for `d/d alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivativeOptions {
    /// Overrides `h = max(1e-6, 1e-3 alpha)`.
    pub step: Option<f64>,
    pub richardson: bool,
}

impl DerivativeOptions {
    pub fn step_for(&self, alpha: f64) -> f64 {
        self.step.unwrap_or_else(|| (1e-3 * alpha).max(1e-6))
    }
}

/// Central difference, or a one-sided three-point rule when `alpha - h`
/// would leave the domain. Works elementwise on anything linear.
fn differentiate<T, F>(f: F, alpha: f64, h: f64, richardson: bool) -> Result<T>
where
    F: Fn(f64) -> Result<T>,
    T: Clone + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let once = |h: f64| -> Result<T> {
        if alpha - h >= 0.0 {
            Ok((f(alpha + h)? - f(alpha - h)?) * (0.5 / h))
        } else {
            let f0 = f(alpha)?;
            let f1 = f(alpha + h)?;
            let f2 = f(alpha + 2.0 * h)?;
            Ok((f1 * 4.0 - f0 * 3.0 - f2) * (0.5 / h))
        }
    };
    let d = once(h)?;
    if !richardson {
        return Ok(d);
    }
    let d2 = once(0.5 * h)?;
    Ok(d2 * (4.0 / 3.0) - d * (1.0 / 3.0))
}

#[derive(Clone)]
struct Mat(CMatrix);

impl std::ops::Sub for Mat {
    type Output = Mat;
    fn sub(self, o: Mat) -> Mat {
        Mat(self.0 - o.0)
    }
}
impl std::ops::Add for Mat {
    type Output = Mat;
    fn add(self, o: Mat) -> Mat {
        Mat(self.0 + o.0)
    }
}
impl std::ops::Mul<f64> for Mat {
    type Output = Mat;
    fn mul(self, s: f64) -> Mat {
        Mat(self.0 * C64::new(s, 0.0))
    }
}

#[derive(Clone)]
struct Probs(Vec<f64>);

impl std::ops::Sub for Probs {
    type Output = Probs;
    fn sub(self, o: Probs) -> Probs {
        Probs(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }
}
impl std::ops::Add for Probs {
    type Output = Probs;
    fn add(self, o: Probs) -> Probs {
        Probs(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
}
impl std::ops::Mul<f64> for Probs {
    type Output = Probs;
    fn mul(self, s: f64) -> Probs {
        Probs(self.0.iter().map(|a| a * s).collect())
    }
}

/// SLD quantum Fisher information of a density-operator family at
/// `alpha > 0`.
pub fn qfi_mixed<F>(family: F, alpha: f64, opts: DerivativeOptions) -> Result<FisherReport>
where
    F: Fn(f64) -> Result<DensityOperator>,
{
    qfi_mixed_with_cutoff(family, alpha, opts, SLD_CUTOFF)
}

pub fn qfi_mixed_with_cutoff<F>(family: F, alpha: f64, opts: DerivativeOptions, cutoff: f64) -> Result<FisherReport>
where
    F: Fn(f64) -> Result<DensityOperator>,
{
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Err(Error::Degenerate {
            alpha,
            reason: format!("the SLD is not defined at the family's endpoint; evaluate the right limit at alpha = {RIGHT_LIMIT_ALPHA}"),
        });
    }
    let h = opts.step_for(alpha);
    let rho = family(alpha)?;
    let drho = differentiate(|a| family(a).map(|r| Mat(r.matrix().clone())), alpha, h, opts.richardson)?.0;
    let (vals, vecs) = rho.eigen();
    let d_eig = vecs.adjoint() * drho * &vecs;
    let mut value = 0.0;
    let mut included = 0usize;
    let mut excluded = 0usize;
    for j in 0..vals.len() {
        for k in 0..vals.len() {
            let s = vals[j] + vals[k];
            if s > cutoff {
                value += 2.0 * d_eig[(j, k)].norm_sqr() / s;
                included += 1;
            } else {
                excluded += 1;
            }
        }
    }
    if included == 0 {
        return Err(Error::Degenerate { alpha, reason: "every SLD term falls below the spectrum cutoff".into() });
    }
    let mut r = FisherReport::new(value, FisherMethod::SldEigen);
    r.sld_spectrum_cutoff = cutoff;
    r.derivative_step = h;
    r.excluded_terms = excluded;
    r.leakage = rho.leakage();
    Ok(r)
}

/// `sum_i (d p_i / d alpha)^2 / p_i` for a discrete outcome family.
pub fn cfi_discrete<F>(probabilities: F, alpha: f64, opts: DerivativeOptions) -> Result<FisherReport>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let p = probabilities(alpha)?;
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 || p.iter().any(|x| *x < -1e-12) {
        return Err(Error::Domain(format!("outcome probabilities sum to {total}")));
    }
    let h = opts.step_for(alpha);
    let dp = differentiate(|a| probabilities(a).map(Probs), alpha, h, opts.richardson)?.0;
    let mut value = 0.0;
    let mut excluded = 0;
    for (pi, di) in p.iter().zip(&dp) {
        if *pi < PROBABILITY_FLOOR {
            excluded += 1;
        } else {
            value += di * di / pi;
        }
    }
    let mut r = FisherReport::new(value, FisherMethod::DiscreteCfi);
    r.derivative_step = h;
    r.excluded_terms = excluded;
    Ok(r)
}

/// Binary CFI of `p0 -> (1 - eps) p0 + eps / 2`.
pub fn noisy_cfi<F>(p0_curve: F, eps: f64, alpha: f64, opts: DerivativeOptions) -> Result<FisherReport>
where
    F: Fn(f64) -> Result<f64>,
{
    apply_dark_noise(0.5, eps)?;
    cfi_discrete(
        |a| {
            let (q0, q1) = apply_dark_noise(p0_curve(a)?.clamp(0.0, 1.0), eps)?;
            Ok(vec![q0, q1])
        },
        alpha,
        opts,
    )
}

/// CFI of the self-projection measurement on the phase-averaged output.
pub fn self_projection_cfi(
    sp: &SelfProjection,
    alpha: f64,
    phases: &PhaseDistribution,
    eps: f64,
    route: FidelityRoute,
    opts: DerivativeOptions,
) -> Result<FisherReport> {
    let leakage = if route == FidelityRoute::Numeric { sp.p0(alpha, phases)?.leakage } else { 0.0 };
    let mut r = noisy_cfi(|a| Ok(sp.p0_routed(a, phases, route)?.value), eps, alpha, opts)?;
    r.leakage = leakage;
    r.povm = Some(format!("self-projection onto {}", sp.spec()) + &noise_note(eps));
    Ok(r)
}

fn noise_note(eps: f64) -> String {
    if eps > 0.0 {
        format!(", eps={eps}")
    } else {
        String::new()
    }
}

/// CFI of quadrature detection at `angle` on the phase-averaged output,
/// with the `alpha`-derivative of the density taken analytically.
/// The value is confirmed on a grid of half the spacing.
pub fn cfi_quadrature(
    psi: &StateVector,
    alpha: f64,
    phases: &PhaseDistribution,
    angle: f64,
    grid: &XGrid,
) -> Result<FisherReport> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("quadrature CFI needs alpha > 0, got {alpha}")));
    }
    let coarse = quadrature_sum(psi, alpha, phases, angle, grid)?;
    let fine = quadrature_sum(psi, alpha, phases, angle, &grid.refined())?;
    if (fine.0 - coarse.0).abs() > 1e-6 * fine.0.abs() + 1e-9 {
        return Err(Error::Quadrature(format!(
            "quadrature CFI not grid-converged ({:.9e} vs {:.9e})",
            coarse.0, fine.0
        )));
    }
    let mut r = FisherReport::new(fine.0, FisherMethod::QuadratureCfi);
    r.excluded_terms = fine.1;
    r.leakage = psi.leakage();
    r.povm = Some(format!("quadrature at angle {angle}"));
    Ok(r)
}

fn quadrature_sum(
    psi: &StateVector,
    alpha: f64,
    phases: &PhaseDistribution,
    angle: f64,
    grid: &XGrid,
) -> Result<(f64, usize)> {
    let t = quadrature_density(psi, alpha, phases, angle, grid)?;
    let peak = t.p.iter().cloned().fold(0.0, f64::max);
    let mut value = 0.0;
    let mut excluded = 0;
    for (i, (p, dp)) in t.p.iter().zip(&t.dp_dalpha).enumerate() {
        if *p < PROBABILITY_FLOOR * peak {
            excluded += 1;
            continue;
        }
        let w = if i == 0 || i + 1 == grid.points { 0.5 } else { 1.0 };
        value += w * grid.dx() * dp * dp / p;
    }
    Ok((value, excluded))
}

/// Shift per unit `alpha` of the measured quadrature at phase `phi`.
pub fn quadrature_shift(phi: f64, angle: f64) -> f64 {
    SQRT_2 * (phi - angle).cos()
}

/// Least-squares `C` in `|F(alpha)/F_plus - 1| = C alpha`.
pub fn fit_linear_constant(points: &[(f64, f64)], f_plus: f64) -> f64 {
    let num: f64 = points.iter().map(|(a, f)| a * (f / f_plus - 1.0).abs()).sum();
    let den: f64 = points.iter().map(|(a, _)| a * a).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, ChannelSpec};
    use crate::fock::FockDim;
    use crate::measurement::p0_squeezed_closed;
    use crate::states::{build_state, QuantumState, StateSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pure(spec: StateSpec, dim: usize) -> StateVector {
        build_state(&spec, dim).unwrap().as_pure().unwrap().clone()
    }

    fn app_a_family(a: f64) -> Result<DensityOperator> {
        DensityOperator::diagonal(&[a * a, 1.0 - a * a])
    }

    #[test]
    fn bound_values() {
        assert_eq!(qfi_bound(0.0).unwrap(), 4.0);
        assert_eq!(qfi_bound(5.0).unwrap(), 44.0);
        assert_eq!(qfi_bound(10.0).unwrap(), 84.0);
        assert!(qfi_bound(-1.0).is_err());
    }

    #[test]
    fn pure_qfi_examples() {
        let vac = pure(StateSpec::Vacuum, 20);
        assert_relative_eq!(qfi_pure(&vac, &generator(0.0, 20).unwrap()).unwrap().value, 4.0, epsilon = 1e-12);
        let sq = pure(StateSpec::Squeezed { r: 1.0, theta: 0.0 }, 160);
        let par = qfi_pure(&sq, &generator(0.0, 160).unwrap()).unwrap().value;
        assert_relative_eq!(par, 4.0 * 2f64.exp(), max_relative = 1e-9);
        assert!((par - 29.556).abs() < 1e-3);
        let orth = qfi_pure(&sq, &generator(std::f64::consts::FRAC_PI_2, 160).unwrap()).unwrap().value;
        assert_relative_eq!(orth, 4.0 * (-2f64).exp(), max_relative = 1e-9);
        let not_herm = Operator::new(crate::fock::make_ladder(20).unwrap().0.matrix().clone()).unwrap();
        assert!(qfi_pure(&vac, &not_herm).is_err());
    }

    #[test]
    fn generator_variance_agrees_with_dense_operator() {
        let psi = pure(StateSpec::Squeezed { r: 0.5, theta: 0.7 }, 60);
        for &phi in &[0.0, 0.4, 2.2] {
            let dense = qfi_pure(&psi, &generator(phi, 60).unwrap()).unwrap().value;
            assert!((generator_variance(psi.amplitudes(), phi) - dense).abs() < 1e-10);
        }
    }

    #[test]
    fn averaged_qfi_examples() {
        let fock = pure(StateSpec::Fock { n: 5 }, 40);
        for &a in &[1e-3, 0.3] {
            let v = avg_qfi(&fock, a, &PhaseDistribution::Uniform).unwrap().value;
            assert!((v - 44.0).abs() < 1e-8, "{v}");
        }
        let sq = pure(StateSpec::squeezed_with_energy(5.0, 0.0), 400);
        assert!((avg_qfi(&sq, 1e-3, &PhaseDistribution::Uniform).unwrap().value - 44.0).abs() < 1e-6);
        let coh = pure(StateSpec::coherent_real(5f64.sqrt()), 60);
        assert!((avg_qfi(&coh, 1e-3, &PhaseDistribution::Uniform).unwrap().value - 4.0).abs() < 1e-8);
    }

    #[test]
    fn app_a_family_closed_form() {
        for i in 1..=18 {
            let a = 0.05 * i as f64;
            let v = qfi_mixed(app_a_family, a, DerivativeOptions::default()).unwrap().value;
            let closed = 4.0 + 4.0 * a * a / (1.0 - a * a);
            assert!((v / closed - 1.0).abs() < 1e-4, "a={a}: {v} vs {closed}");
        }
        let v = qfi_mixed(app_a_family, 0.5, DerivativeOptions::default()).unwrap().value;
        assert!((v - 16.0 / 3.0).abs() < 1e-6);
        let right = qfi_mixed(app_a_family, 1e-3, DerivativeOptions::default()).unwrap().value;
        assert!((right - 4.0).abs() < 1e-4);
        assert!(matches!(
            qfi_mixed(app_a_family, 0.0, DerivativeOptions::default()),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn richardson_sharpens_the_derivative() {
        let opts = DerivativeOptions { step: Some(1e-2), richardson: false };
        let plain = qfi_mixed(app_a_family, 0.6, opts).unwrap().value;
        let rich = qfi_mixed(app_a_family, 0.6, DerivativeOptions { richardson: true, ..opts }).unwrap().value;
        let closed = 4.0 + 4.0 * 0.36 / 0.64;
        assert!((rich - closed).abs() <= (plain - closed).abs());
    }

    #[test]
    fn cutoff_that_removes_everything_is_degenerate() {
        let r = qfi_mixed_with_cutoff(app_a_family, 0.5, DerivativeOptions::default(), 10.0);
        assert!(matches!(r, Err(Error::Degenerate { .. })));
    }

    #[test]
    fn rank_one_family_matches_pure_qfi() {
        let dim = 60;
        let psi = pure(StateSpec::Squeezed { r: 0.4, theta: 0.0 }, dim);
        let disp = Displacer::new(dim).unwrap();
        let family = |a: f64| Ok(disp.displace(a, 0.0, &psi)?.to_density());
        let opts = DerivativeOptions { richardson: true, ..Default::default() };
        let mixed = qfi_mixed(family, 0.2, opts).unwrap();
        let pure_v = qfi_pure(&psi, &generator(0.0, dim).unwrap()).unwrap().value;
        assert!((mixed.value - pure_v).abs() < 1e-6, "{} vs {pure_v}", mixed.value);
        assert!(mixed.excluded_terms > 0);
    }

    #[test]
    fn discrete_cfi_examples() {
        let consts = cfi_discrete(|_| Ok(vec![0.25, 0.75]), 0.3, DerivativeOptions::default()).unwrap();
        assert_eq!(consts.value, 0.0);
        let binary = |a: f64| Ok(vec![1.0 - 11.0 * a * a, 11.0 * a * a]);
        let v = cfi_discrete(binary, 0.01, DerivativeOptions::default()).unwrap().value;
        assert!((v / 44.0 - 1.0).abs() < 0.02);
        let coh = |a: f64| Ok(vec![(-a * a).exp(), 1.0 - (-a * a).exp()]);
        let v = cfi_discrete(coh, 0.01, DerivativeOptions::default()).unwrap().value;
        assert!((v / 4.0 - 1.0).abs() < 0.01);
        assert!(cfi_discrete(|_| Ok(vec![0.5, 0.6]), 0.1, DerivativeOptions::default()).is_err());
    }

    #[test]
    fn floor_drops_dead_outcomes() {
        let r = cfi_discrete(|a: f64| Ok(vec![1.0 - a * a, a * a, 0.0]), 0.2, DerivativeOptions::default()).unwrap();
        assert_eq!(r.excluded_terms, 1);
        assert!(r.value.is_finite());
    }

    #[test]
    fn noisy_cfi_limits() {
        let curve = |a: f64| p0_squeezed_closed(a, 5f64.sqrt().asinh());
        let clean = noisy_cfi(curve, 0.0, 0.05, DerivativeOptions::default()).unwrap().value;
        let direct = cfi_discrete(
            |a| {
                let p = curve(a)?;
                Ok(vec![p, 1.0 - p])
            },
            0.05,
            DerivativeOptions::default(),
        )
        .unwrap()
        .value;
        assert_eq!(clean, direct);
        assert_eq!(noisy_cfi(curve, 1.0, 0.05, DerivativeOptions::default()).unwrap().value, 0.0);
        let weak = noisy_cfi(curve, 1e-6, 0.01, DerivativeOptions::default()).unwrap().value;
        let strong = noisy_cfi(curve, 1e-2, 0.01, DerivativeOptions::default()).unwrap().value;
        // clean binary CFI scales by p1 / (p1 + eps/2) once eps dominates
        let p1 = 1.0 - curve(0.01).unwrap();
        assert!((strong / weak - p1 / (p1 + 5e-3)).abs() < 0.01, "{weak} {strong}");
        let drowned = noisy_cfi(curve, 1e-1, 0.01, DerivativeOptions::default()).unwrap().value;
        assert!(weak > 10.0 * drowned);
    }

    #[test]
    fn self_projection_cfi_approaches_bound() {
        let sp = SelfProjection::auto(StateSpec::squeezed_with_energy(5.0, 0.0), 0.2).unwrap();
        let at = |a: f64, route| {
            self_projection_cfi(&sp, a, &PhaseDistribution::Uniform, 0.0, route, DerivativeOptions::default())
                .unwrap()
                .value
        };
        let v = at(0.01, FidelityRoute::Auto);
        assert!((v / 44.0 - 1.0).abs() < 0.02, "{v}");
        assert!((at(0.05, FidelityRoute::Numeric) / at(0.05, FidelityRoute::Auto) - 1.0).abs() < 1e-6);
        let coh = SelfProjection::auto(StateSpec::coherent_real(5f64.sqrt()), 0.1).unwrap();
        let c = self_projection_cfi(&coh, 0.01, &PhaseDistribution::Uniform, 0.0, FidelityRoute::Auto, DerivativeOptions::default())
            .unwrap()
            .value;
        assert!((c / 4.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn quadrature_cfi_vanishes_for_vacuum_pair() {
        let vac = pure(StateSpec::Vacuum, 10);
        let grid = XGrid::for_probe(&StateSpec::Vacuum, 0.1);
        let mut prev = f64::INFINITY;
        for &a in &[0.1, 0.03, 0.01, 0.003] {
            let v = cfi_quadrature(&vac, a, &PhaseDistribution::antipodal_pair(), 0.0, &grid).unwrap().value;
            // 4 alpha^2 int f''^2 / f = 32 alpha^2 at leading order
            assert!((v / (32.0 * a * a) - 1.0).abs() < 0.08, "{a}: {v}");
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn quadrature_cfi_curse_for_squeezed() {
        let spec = StateSpec::Squeezed { r: 1.5, theta: 0.0 };
        let psi = pure(spec, 400);
        let grid = XGrid::for_probe(&spec, 1e-3);
        let v = cfi_quadrature(&psi, 1e-3, &PhaseDistribution::Uniform, 0.0, &grid).unwrap().value;
        assert!(v < 0.5);
        assert!((v - 0.003_227).abs() < 5e-5, "{v}");
    }

    #[test]
    fn data_processing_inequality() {
        // CFI of self-projection on the averaged output never exceeds its QFI
        let dim = 70;
        let spec = StateSpec::Squeezed { r: 0.6, theta: 0.0 };
        let state = build_state(&spec, dim).unwrap();
        let disp = Displacer::new(dim).unwrap();
        let family = |a: f64| apply_channel(&state, &ChannelSpec::new(a, PhaseDistribution::Uniform)?.uncertified(), &disp);
        let sp = SelfProjection::new(spec, dim).unwrap();
        for &a in &[0.1, 0.3] {
            let q = qfi_mixed(family, a, DerivativeOptions::default()).unwrap().value;
            let c = self_projection_cfi(&sp, a, &PhaseDistribution::Uniform, 0.0, FidelityRoute::Numeric, DerivativeOptions::default())
                .unwrap()
                .value;
            let avg = avg_qfi_with(sp.probe(), a, &PhaseDistribution::Uniform, &disp).unwrap().value;
            assert!(c <= q + 1e-6, "cfi {c} > qfi {q}");
            assert!(q <= avg + 1e-6, "qfi {q} > avg {avg}");
        }
    }

    #[test]
    fn fitted_constant_recovers_slope() {
        let pts: Vec<(f64, f64)> = [0.01, 0.02, 0.05].iter().map(|&a| (a, 44.0 * (1.0 - 3.0 * a))).collect();
        assert!((fit_linear_constant(&pts, 44.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_state_vacuum_matches_basis() {
        let psi = StateVector::basis(FockDim::new(8).unwrap(), 0).unwrap();
        let st = QuantumState::Pure(psi);
        assert_eq!(st.dim(), 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn averaged_qfi_respects_bound(r in 0.0f64..1.2, theta in 0.0f64..6.0, beta in 0.0f64..2.0, n in 0usize..6) {
            for spec in [StateSpec::Squeezed { r, theta }, StateSpec::coherent_real(beta), StateSpec::Fock { n }] {
                let dim = crate::states::auto_dim(&[spec], 0.01);
                let psi = pure(spec, dim);
                let v = avg_qfi(&psi, 0.01, &PhaseDistribution::Uniform).unwrap().value;
                let bound = qfi_bound(psi.mean_photon_number()).unwrap();
                prop_assert!(v >= 0.0);
                prop_assert!(v <= bound + 1e-8, "{} > {}", v, bound);
            }
        }
    }
}
