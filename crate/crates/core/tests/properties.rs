use std::sync::OnceLock;

use proptest::prelude::*;
use srbflow_core::entropy::{sobolev_inner, SobolevMetric};
use srbflow_core::spectral::lab::seeded_rng;
use srbflow_core::transfer::duality_residual;
use srbflow_core::verify::{random_trig_field, random_vec_field, sine_map};
use srbflow_core::{parse_config, ExpandingMap, Numerics, TransferContext};

fn contexts() -> &'static [TransferContext; 2] {
    static CTX: OnceLock<[TransferContext; 2]> = OnceLock::new();
    CTX.get_or_init(|| {
        let n = Numerics::default_for(1).with_grid_size(128);
        [
            TransferContext::new(ExpandingMap::linear(1, &[vec![2]]).unwrap(), n).unwrap(),
            TransferContext::new(sine_map(0.1), n).unwrap(),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duality_holds(seed in any::<u64>(), which in 0usize..2, degree in 0i64..=8) {
        let ctx = &contexts()[which];
        let mut rng = seeded_rng(seed);
        let phi = random_trig_field(&mut rng, ctx.grid(), degree);
        let psi = random_trig_field(&mut rng, ctx.grid(), degree);
        prop_assert!(duality_residual(ctx, &phi, &psi).unwrap() < 1e-10);
    }

    #[test]
    fn transfer_conserves_mass(seed in any::<u64>(), which in 0usize..2) {
        let ctx = &contexts()[which];
        let mut rng = seeded_rng(seed);
        let phi = random_trig_field(&mut rng, ctx.grid(), 8);
        let out = ctx.apply(&phi).unwrap();
        prop_assert!((out.mean() - phi.mean()).abs() < 1e-12);
    }

    #[test]
    fn transfer_preserves_positivity(seed in any::<u64>()) {
        let ctx = &contexts()[1];
        let mut rng = seeded_rng(seed);
        let phi = random_trig_field(&mut rng, ctx.grid(), 2);
        let shift = 1.0 - phi.min();
        let out = ctx.apply(&phi.add_scalar(shift)).unwrap();
        prop_assert!(out.min() > 0.0);
    }

    #[test]
    fn sobolev_inner_is_symmetric_and_positive(seed in any::<u64>(), dim in 1usize..=2, k in 1u32..=5) {
        let mut rng = seeded_rng(seed);
        let m = SobolevMetric::new(dim, k, 4).unwrap();
        let u = random_vec_field(&mut rng, dim, 4, 4, 1.0);
        let v = random_vec_field(&mut rng, dim, 4, 4, 1.0);
        let uv = sobolev_inner(&m, &u, &v).unwrap();
        let vu = sobolev_inner(&m, &v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * uv.abs().max(1.0));
        prop_assert!(sobolev_inner(&m, &u, &u).unwrap() > 0.0);
    }

    #[test]
    fn add_scaled_is_affine(seed in any::<u64>(), t in -1.0f64..1.0) {
        let mut rng = seeded_rng(seed);
        let g = random_vec_field(&mut rng, 1, 4, 3, 0.01);
        let f = sine_map(0.05);
        let ft = f.add_scaled(t, &g).unwrap();
        for x in [0.0, 0.17, 0.5, 0.93] {
            let lhs = ft.lift([x, 0.0])[0];
            let rhs = f.lift([x, 0.0])[0] + t * g.eval([x, 0.0])[0];
            prop_assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn power_of_two_grid_sizes(exp in 3u32..=10, bump in 1usize..7) {
        let ok = format!(r#"{{"map":{{"dim":1,"A":[[2]]}},"numerics":{{"grid_size":{},"cutoff":1}}}}"#, 1usize << exp);
        prop_assert!(parse_config(&ok).is_ok());
        let bad = format!(r#"{{"map":{{"dim":1,"A":[[2]]}},"numerics":{{"grid_size":{}}}}}"#, (1usize << exp) + bump);
        prop_assert_eq!(parse_config(&bad).unwrap_err().to_string(), "grid_size: must be a power of two");
    }
}
