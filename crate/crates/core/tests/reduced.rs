use rqj::analysis::scaling::{scaling_study, ScalingSpec};
use rqj::noise::NoiseSource;
use rqj::pfe::{
    check_p_plus_ode, pfe_moments, simulate_pfe, PfeConfig, PfeGridSpec, PfeState, PfeStepper,
};
use rqj::{Branch, SystemParams};

#[test]
fn each_branch_is_drawn_to_its_fixed_point_from_anywhere() {
    let p = SystemParams {
        gamma_perp: 0.0,
        eta: 0.0,
        ..SystemParams::reference()
    };
    let grid = PfeGridSpec::default();
    let dt = PfeStepper::default_dt(&p, &grid);
    let steps = (5.0 / p.kappa / dt).ceil() as usize;
    for branch in [Branch::Plus, Branch::Minus] {
        let fix = -branch.sign() * p.y_fix();
        for y0 in [-11.0, -6.0, -1.0, 0.0, 2.5, 7.0, 11.0] {
            let mut s = PfeState::for_params(&p, &grid).unwrap();
            s.add_point_mass(branch, y0, 1.0);
            let mut stepper = PfeStepper::new(&s, &p, dt).unwrap();
            for _ in 0..steps {
                stepper.step(&mut s, 0.0).unwrap();
            }
            let m = pfe_moments(&s);
            let mean = match branch {
                Branch::Plus => m.y_mean_plus,
                Branch::Minus => m.y_mean_minus,
            };
            let tol = 0.01 * (y0 - fix).abs() + 0.5 * s.dy();
            assert!((mean - fix).abs() <= tol, "{branch:?} from {y0}: {mean}");
        }
    }
}

#[test]
fn clipped_probability_stays_small_at_default_resolution() {
    let p = SystemParams::reference();
    let cfg = PfeConfig {
        t_final: 40.0,
        ..PfeConfig::new(&p)
    };
    let run = simulate_pfe(&p, &cfg, &mut NoiseSource::new(2, 0).increments()).unwrap();
    assert!(run.clipped_mass / cfg.t_final < 1e-4, "{}", run.clipped_mass);
}

#[test]
fn population_follows_its_moment_equation() {
    let p = SystemParams::reference();
    let cfg = PfeConfig {
        t_final: 4.0,
        stride: 1,
        ..PfeConfig::new(&p)
    };
    let run = simulate_pfe(&p, &cfg, &mut NoiseSource::new(3, 0).increments()).unwrap();
    let check = check_p_plus_ode(&run.record, &p, cfg.dt).unwrap();
    assert!(check.normalized_rms < 0.05, "{check:?}");
    assert!(check.sign_test_steps > 100);
    assert!(check.sign_test_fraction > 0.99, "{check:?}");
}

#[test]
fn scaling_study_is_independent_of_worker_count() {
    let spec = ScalingSpec {
        g_values: vec![120.0, 240.0],
        gamma_perp_values: vec![1.3, 0.65],
        eta_values: vec![0.5, 1.0],
        t_final: 3.0,
        burn_in: 1.0,
        base_seed: 5,
        ..ScalingSpec::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scaling_study(&spec).unwrap())
    };
    assert_eq!(run(1), run(3));
}
