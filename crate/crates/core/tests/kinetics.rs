use chemo_core::presets::random_1d;
use chemo_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_params(seed: u64) -> Params64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_1d::<f64, _>(&mut rng, 4).unwrap().params
}

proptest! {
    /// Each rate is nonnegative wherever its own species vanishes, so the
    /// nonnegative orthant is invariant.
    #[test]
    fn kinetics_are_quasi_positive(
        seed in any::<u64>(),
        x in prop::array::uniform4(0.0..3.0f64),
        zero in 0usize..4,
        s in 0.0..1.0f64,
        v in 0.0..2.0f64,
    ) {
        let p = random_params(seed);
        let mut a = x;
        a[zero] = 0.0;
        let f = reaction_rates(Densities::from_array(a), &p, s, v).to_array();
        prop_assert!(f[zero] >= 0.0, "species {zero}: {}", f[zero]);
    }

    #[test]
    fn ode_trajectories_stay_nonnegative(
        seed in any::<u64>(),
        x0 in prop::array::uniform4(0.0..1.5f64),
        s in 0.0..0.5f64,
        v in 0.0..1.0f64,
    ) {
        let p = random_params(seed);
        let sys = OdeSystem::constant_sources(p, s, v);
        let traj = ode_integrate(OdeState::new(0.0, Densities::from_array(x0)), 5.0, 0.01, &sys).unwrap();
        prop_assert!(traj.max_clamp < 1e-9, "clamp {}", traj.max_clamp);
        for st in &traj.states {
            prop_assert!(st.x.to_array().iter().all(|&c| c >= 0.0 && c.is_finite()));
        }
    }

    /// Without injection and without initial drug there is never any drug.
    #[test]
    fn no_injection_means_no_drug(seed in any::<u64>(), x0 in prop::array::uniform3(0.0..1.5f64)) {
        let p = random_params(seed);
        let sys = OdeSystem::constant_sources(p, 0.2, 0.0).with_cutoff(true);
        let init = Densities::new(x0[0], x0[1], x0[2], 0.0);
        let traj = ode_integrate(OdeState::new(0.0, init), 3.0, 0.01, &sys).unwrap();
        prop_assert!(traj.states.iter().all(|st| st.x.u == 0.0));
    }
}
