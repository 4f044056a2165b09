use proptest::prelude::*;
use taskalloc_core::{average_latency, solve_nep, solve_optimal, Scenario, ServerSpec};
use taskalloc_oracle::{
    best_response_nep, brute_force_optimal, check_no_profitable_deviation, OracleConfig,
    DEFAULT_DEVIATION,
};

fn server() -> impl Strategy<Value = ServerSpec> {
    (0.0..0.2f64, 1.0..300.0f64, 0.0..3.0f64, any::<bool>()).prop_map(|(d, mu, cv, queue)| {
        if queue {
            ServerSpec::mm1(d, mu).unwrap()
        } else {
            ServerSpec::mg1(d, mu, cv).unwrap()
        }
    })
}

fn case(max_n: usize) -> impl Strategy<Value = (Scenario, f64)> {
    (prop::collection::vec(server(), 2..=max_n), 0.01..0.98f64).prop_map(|(servers, rho)| {
        let sc = Scenario::with_servers(servers).unwrap();
        let load = rho * sc.capacity();
        (sc, load)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_never_beats_the_solver((sc, load) in case(4)) {
        let cfg = OracleConfig::default();
        let exact = solve_optimal(&sc, load).unwrap();
        let p = brute_force_optimal(&sc, load, &cfg).unwrap();
        let u = average_latency(&sc, &p, load).unwrap();
        prop_assert!(u >= exact.mean_latency - 1e-9);
        prop_assert!((u - exact.mean_latency) / u <= 1e-6);
    }

    #[test]
    fn best_response_matches_solver((sc, load) in case(6)) {
        let cfg = OracleConfig::default();
        let exact = solve_nep(&sc, load).unwrap();
        let p = best_response_nep(&sc, load, &cfg).unwrap();
        for (a, b) in p.iter().zip(&exact.p) {
            prop_assert!((a - b).abs() <= 1e-5, "{:?} vs {:?}", p, exact.p);
        }
        prop_assert!(check_no_profitable_deviation(&sc, load, &exact.p, DEFAULT_DEVIATION, &cfg));
    }
}
