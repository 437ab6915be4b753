//! Property tests over randomly drawn coefficient families and states.

use pdeobs_core::coeffs::{CoeffField, CoefficientSet, Radial, Temporal, TimeFunction};
use pdeobs_core::grid::{FieldLabel, SpatialGrid, StateField};
use pdeobs_core::kernel::KernelField;
use pdeobs_core::xform::{
    gauge_forward, gauge_inverse, normalized_coordinate, volterra_apply,
};
use proptest::prelude::*;

/// Positive diffusion field: offset dominates the oscillation amplitude.
fn diffusion_strategy() -> impl Strategy<Value = CoeffField> {
    (0.5f64..3.0, 0.0f64..0.3, 0.5f64..4.0, 0.0f64..1.0).prop_map(|(off, amp, freq, phase)| {
        CoeffField::separable(
            off,
            amp,
            Radial::Sin { freq, phase },
            Temporal::Cos { freq: 1.0, phase: 0.0 },
        )
    })
}

fn advection_strategy() -> impl Strategy<Value = CoeffField> {
    (-1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(c0, c1)| CoeffField::poly(&[c0, c1]))
}

fn state_strategy(grid: SpatialGrid) -> impl Strategy<Value = StateField> {
    proptest::collection::vec(-1.0f64..1.0, 4).prop_map(move |amps| {
        StateField::from_fn(grid, 0.0, FieldLabel::WTilde, |r| {
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::FRAC_PI_2 * r).sin())
                .sum()
        })
        .unwrap()
    })
}

fn cs_of(d: CoeffField, b: CoeffField) -> CoefficientSet {
    CoefficientSet::new(d, b, CoeffField::constant(0.0), TimeFunction::constant(0.0), 10.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauge_round_trip_is_identity(
        d in diffusion_strategy(),
        b in advection_strategy(),
        state in state_strategy(SpatialGrid::new(100).unwrap()),
    ) {
        let cs = cs_of(d, b);
        let mut u = state;
        u.label = FieldLabel::U;
        let back = gauge_inverse(&gauge_forward(&u, &cs).unwrap(), &cs).unwrap();
        for (a, b) in u.values.iter().zip(&back.values) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coordinate_stretch_is_strictly_monotone(
        d in diffusion_strategy(),
        t in 0.0f64..5.0,
        split in 0.05f64..0.95,
    ) {
        let cs = cs_of(d, CoeffField::constant(0.0));
        let lo = normalized_coordinate(&cs, split - 0.04, t).unwrap();
        let hi = normalized_coordinate(&cs, split + 0.04, t).unwrap();
        prop_assert!(lo < hi);
    }

    #[test]
    fn effective_reaction_equals_reaction_without_advection(
        d in diffusion_strategy(),
        phi_off in -3.0f64..3.0,
        r in 0.0f64..1.0,
        t in 0.0f64..5.0,
    ) {
        let cs = CoefficientSet::new(
            d,
            CoeffField::constant(0.0),
            CoeffField::separable(phi_off, 1.0, Radial::Poly(vec![0.0, 1.0]), Temporal::One),
            TimeFunction::constant(0.0),
            10.0,
        );
        prop_assert_eq!(cs.effective_reaction(r, t).unwrap(), cs.reaction.value(r, t));
    }

    #[test]
    fn robin_slope_offset_has_the_sign_of_edge_advection(
        d in diffusion_strategy(),
        b_end in -1.5f64..1.5,
        t in 0.0f64..5.0,
    ) {
        let cs = cs_of(d, CoeffField::constant(b_end));
        let bd = cs.boundary_data(t).unwrap();
        prop_assert_eq!((bd.robin_slope - 1.0).signum(), b_end.signum());
    }

    #[test]
    fn mu_bound_never_increases_with_more_samples(
        d in diffusion_strategy(),
    ) {
        let cs = cs_of(d, CoeffField::constant(0.0));
        let coarse_grid = SpatialGrid::new(40).unwrap();
        let fine_grid = SpatialGrid::new(320).unwrap();
        let coarse = cs.mu_admissible_bound(&coarse_grid, &[0.0, 2.0]).unwrap();
        let fine = cs
            .mu_admissible_bound(&fine_grid, &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
            .unwrap();
        prop_assert!(fine <= coarse + 1e-14);
    }

    #[test]
    fn volterra_apply_is_linear_in_the_state(
        w1 in state_strategy(SpatialGrid::new(80).unwrap()),
        w2 in state_strategy(SpatialGrid::new(80).unwrap()),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        scale in -1.0f64..1.0,
    ) {
        let grid = SpatialGrid::new(80).unwrap();
        let kernel = KernelField::from_fn(grid, &[0.0], move |r, s, _| scale * (r + 2.0 * s).cos());
        let combo = StateField::new(
            grid,
            w1.values.iter().zip(&w2.values).map(|(x, y)| a * x + b * y).collect(),
            0.0,
            FieldLabel::WTilde,
        )
        .unwrap();
        let lhs = volterra_apply(&kernel, &combo).unwrap();
        let c1 = volterra_apply(&kernel, &w1).unwrap();
        let c2 = volterra_apply(&kernel, &w2).unwrap();
        for i in 0..lhs.values.len() {
            prop_assert!((lhs.values[i] - (a * c1.values[i] + b * c2.values[i])).abs() < 1e-12);
        }
    }
}
