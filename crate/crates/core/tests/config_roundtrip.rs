use arratia_core::harness::{config, RunConfig};
use arratia_core::Method;
use proptest::prelude::*;

fn method() -> impl Strategy<Value = Method> {
    prop::sample::select(vec![Method::Series, Method::Pde, Method::Mc, Method::Flow, Method::Oracle])
}

fn drift() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("zero".to_string()),
        (-3.0..3.0f64).prop_map(|k| format!("const:k={k}")),
        (0.1..2.0f64, 0.2..3.0f64).prop_map(|(k, l)| format!("tanh:k={k},lam={l}")),
        (1u32..20).prop_map(|n| format!("mollify(step:h=0.5,lo=-1,hi=1,n={n})")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_parse_is_lossless(
        m in method(),
        d in drift(),
        t in 1e-3..10.0f64,
        x in -5.0..5.0f64,
        seed in any::<u64>(),
        h in 1e-3..0.1f64,
        paths in 1000u64..1_000_000,
        richardson in any::<bool>(),
        window in prop::option::of((-5.0..0.0f64, 0.0..5.0f64)),
        bins in 1usize..50,
    ) {
        let mut cfg = RunConfig::new(m, &d, t, x);
        cfg.seed = seed;
        cfg.h = h;
        cfg.paths = paths;
        cfg.richardson = richardson;
        cfg.window = window;
        cfg.bins = bins;
        let text = cfg.to_config_string();
        let back = RunConfig::from_map(&config::parse(&text).unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn digest_tracks_every_field(seed in any::<u64>(), bump in 1u64..1000) {
        let mut a = RunConfig::new(Method::Mc, "zero", 1.0, 0.0);
        a.seed = seed;
        let mut b = a.clone();
        b.paths += bump;
        prop_assert_ne!(a.digest(), b.digest());
    }
}
