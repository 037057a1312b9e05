//! With a single particle every conditional filter must hand back the
//! reference path unchanged.

use abcpg::filters::{self, run_conditional_smc, GaussianLikelihood, ReferenceWeight, Resampling, Weighting};
use abcpg::model::simulate;
use abcpg::seed::rng_from_seed;
use abcpg::{AbcConfig, FilterKind, KernelKind, StableParams, SvmParams};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = (SvmParams, StableParams, AbcConfig, usize, u64)> {
    (
        (-2.0..0.5f64, -0.95..0.99f64, 0.01..2.0f64),
        (0.6..2.0f64, -1.0..1.0f64),
        (1e-4..10.0f64, prop::bool::ANY),
        1usize..40,
        any::<u64>(),
    )
        .prop_map(|((tau, phi, s2), (alpha, beta), (eps, gauss), t_len, seed)| {
            let kind = if gauss { KernelKind::Gaussian } else { KernelKind::Uniform };
            (
                SvmParams::new(tau, phi, s2).unwrap(),
                StableParams::standard(alpha, beta).unwrap(),
                AbcConfig::new(eps, kind).unwrap(),
                t_len,
                seed,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn single_particle_returns_reference((theta, stable, abc, t_len, seed) in config()) {
        let mut rng = rng_from_seed(seed);
        let (reference, obs) = simulate(&theta, &stable, t_len, &mut rng).unwrap();
        for kind in FilterKind::ALL {
            let path = filters::abc_filter(kind, &obs, &reference, &theta, &stable, abc, 1, &mut rng).unwrap();
            prop_assert_eq!(&path.h, &reference.h, "{}", kind);
        }
        let lik = GaussianLikelihood;
        prop_assert_eq!(filters::cbf(&obs, &reference, &theta, &lik, 1, &mut rng).unwrap().h, reference.h.clone());
        prop_assert_eq!(filters::cbfas(&obs, &reference, &theta, &lik, 1, &mut rng).unwrap().h, reference.h.clone());
        let corrected = run_conditional_smc(
            &obs,
            &reference,
            &theta,
            Weighting::Abc { stable: &stable, abc },
            Resampling::Auxiliary(ReferenceWeight::Corrected),
            1,
            &mut rng,
        )
        .unwrap();
        prop_assert_eq!(corrected.trajectory(0).h, reference.h.clone());
    }
}
