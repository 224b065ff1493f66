use spreadchan::estimation::{
    randomized_rotation_statistics, rmse_sweep, simulate, ExperimentConfig, MIN_TRIALS,
};
use spreadchan::measurement::{FidelityRoute, SelfProjection};
use spreadchan::{PhaseDistribution, StateSpec};

fn squeezed5() -> StateSpec {
    StateSpec::squeezed_with_energy(5.0, 0.0)
}

#[test]
fn identical_seeds_give_identical_results() {
    let mut config = ExperimentConfig::new(squeezed5(), PhaseDistribution::Uniform, 0.2, 5000, 42);
    config.keep_phases = true;
    let a = simulate(&config).unwrap();
    let b = simulate(&config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.alpha_hat.to_bits(), b.alpha_hat.to_bits());
    config.seed = 43;
    assert_ne!(simulate(&config).unwrap().phases, a.phases);
}

#[test]
fn error_shrinks_like_inverse_root_m() {
    let alpha = 0.3;
    let configs: Vec<_> = [1_000u64, 10_000, 100_000]
        .iter()
        .map(|&m| ExperimentConfig::new(squeezed5(), PhaseDistribution::Uniform, alpha, m, 7))
        .collect();
    let rows = rmse_sweep(&configs, 2 * MIN_TRIALS).unwrap();
    let scaled: Vec<f64> = rows.iter().map(|r| r.rmse * (r.repetitions as f64).sqrt()).collect();
    for s in &scaled {
        assert!((s / scaled[1] - 1.0).abs() < 0.25, "rmse * sqrt(M): {scaled:?}");
    }
    // the median estimate closes in on the truth
    let mut medians = Vec::new();
    for r in &rows {
        let mut errs: Vec<f64> = r.squared_errors.iter().map(|e| e.sqrt()).collect();
        errs.sort_by(f64::total_cmp);
        medians.push(errs[errs.len() / 2]);
    }
    assert!(medians[2] < medians[1] && medians[1] < medians[0], "{medians:?}");
}

#[test]
fn practical_regime_gives_useful_estimates() {
    // eps << p1(alpha) and M >> 1/p1(alpha), both by a factor 100
    for (spec, alpha) in [(squeezed5(), 0.05), (StateSpec::coherent_real(5f64.sqrt()), 0.1)] {
        let sp = SelfProjection::auto(spec, alpha).unwrap();
        let p1 = 1.0 - sp.p0_routed(alpha, &PhaseDistribution::Uniform, FidelityRoute::Auto).unwrap().value;
        let mut config =
            ExperimentConfig::new(spec, PhaseDistribution::Uniform, alpha, (100.0 / p1).ceil() as u64, 11);
        config.dark_noise = p1 / 100.0;
        let row = &rmse_sweep(&[config], MIN_TRIALS).unwrap()[0];
        assert!(row.rmse / alpha < 0.5, "{spec}: relative rmse {}", row.rmse / alpha);
    }
}

#[test]
fn random_rotation_makes_any_phase_law_uniform() {
    let cases = [
        (squeezed5(), "vonmises:mu=0.3,kappa=2", 0.4),
        (StateSpec::Squeezed { r: 0.8, theta: 1.0 }, "discrete:0@1,2@3", 0.7),
        (
            StateSpec::MultiCat { components: 3, amplitude: spreadchan::states::CatAmplitude::MeanPhotons(2.0), theta: 0.0 },
            "discrete:1@1",
            0.5,
        ),
    ];
    for (i, (spec, law, alpha)) in cases.into_iter().enumerate() {
        let phases: PhaseDistribution = law.parse().unwrap();
        let sp = SelfProjection::auto(spec, alpha).unwrap();
        let uniform = sp.p0(alpha, &PhaseDistribution::Uniform).unwrap().value;
        let biased = sp.p0(alpha, &phases).unwrap().value;
        let mc = randomized_rotation_statistics(&sp, alpha, &phases, 20_000, i as u64, FidelityRoute::Numeric).unwrap();
        assert!((mc.mean - uniform).abs() < 4.0 * mc.std_err, "{spec} {law}: {} vs {uniform}", mc.mean);
        // without the rotation the law matters
        assert!((biased - uniform).abs() > 10.0 * mc.std_err, "{spec} {law}: no contrast");
    }
}
