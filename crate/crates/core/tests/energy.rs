use std::f64::consts::PI;

use hrx_core::ansatz::{hedgehog, ward_field, ward_map, WARD_DIRICHLET, WARD_FADDEEV};
use hrx_core::energy::{
    cross_energy, density_map, dirichlet_energy, monotonicity_check, perturbed_energy, quartic_energy, EnergyReport, Mode,
};
use hrx_core::{BoundaryTag, DirectionField, Error, GridSpec};
use proptest::prelude::*;

fn north(g: GridSpec) -> DirectionField {
    DirectionField::constant(g, &[0.0, 0.0, 1.0], BoundaryTag::Free).unwrap()
}

/// A smooth field built from a few random Fourier modes, projected to S².
fn random_smooth(seed: u64, amp: f64) -> DirectionField {
    let g = GridSpec::cube(7, 1.0).unwrap();
    let mut s = seed | 1;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let coef: Vec<[f64; 4]> = (0..9).map(|_| [next(), next(), next(), next()]).collect();
    DirectionField::from_fn(g, BoundaryTag::Free, |x| {
        let mut v = [0.0, 0.0, 1.0];
        for (m, c) in coef.iter().enumerate() {
            let phase = 2.0 * (c[0] * x[0] + c[1] * x[1] + c[2] * x[2]) + c[3];
            v[m % 3] += amp * phase.sin();
        }
        v
    })
    .unwrap()
    .project_to_sphere()
    .unwrap()
}

#[test]
fn constant_field_has_zero_energies() {
    let u = north(GridSpec::cube(5, 1.0).unwrap());
    assert_eq!(dirichlet_energy(&u), 0.0);
    assert_eq!(quartic_energy(&u), 0.0);
    assert_eq!(cross_energy(&u), 0.0);
}

#[test]
fn great_circle_map_integrates_its_constant_density() {
    let k = 1.1;
    let g = GridSpec::cube(41, 1.0).unwrap();
    let u = DirectionField::from_fn(g, BoundaryTag::Free, |x| [(k * x[0]).cos(), (k * x[0]).sin(), 0.0]).unwrap();
    let exact = k * k * g.volume();
    let e = dirichlet_energy(&u);
    assert!((e - exact).abs() <= exact * (k * g.spacing()).powi(2), "{e} vs {exact}");
    assert!(cross_energy(&u) < 1e-14);
}

#[test]
fn cross_term_vanishes_on_great_circle_images() {
    let g = GridSpec::cube(9, 1.0).unwrap();
    let u = DirectionField::from_fn(g, BoundaryTag::Free, |x| {
        let phi = x[0] + 2.0 * x[1] - x[2] * x[2] + x[0] * x[1];
        [phi.cos(), phi.sin(), 0.0]
    })
    .unwrap();
    assert!(dirichlet_energy(&u) > 1.0);
    assert!(cross_energy(&u) < 1e-14);
}

#[test]
fn quartic_integral_scales_linearly_under_dilation() {
    // ∫|∇(u∘λ)|⁴ = λ∫|∇u|⁴; on the lattice, sampling u(λx) on a grid is
    // sampling u on the grid scaled by λ.
    let lambda = 2.0;
    let g = GridSpec::cube(17, 1.5).unwrap();
    let dilated = DirectionField::from_fn(g, BoundaryTag::Free, |x| ward_map([lambda * x[0], lambda * x[1], lambda * x[2]])).unwrap();
    let base = DirectionField::from_fn(g.scaled(lambda).unwrap(), BoundaryTag::Free, ward_map).unwrap();
    let (a, b) = (quartic_energy(&dilated), lambda * quartic_energy(&base));
    assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
    let (a, b) = (dirichlet_energy(&dilated), dirichlet_energy(&base) / lambda);
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn ward_energies_approach_the_closed_forms_under_refinement() {
    let coarse = perturbed_energy(&ward_field(32, 8.0).unwrap(), 0.0, Mode::Faddeev).unwrap();
    let fine = perturbed_energy(&ward_field(64, 8.0).unwrap(), 0.0, Mode::Faddeev).unwrap();
    assert!((fine.dirichlet - WARD_DIRICHLET).abs() < (coarse.dirichlet - WARD_DIRICHLET).abs());
    assert!((fine.total - WARD_FADDEEV).abs() < (coarse.total - WARD_FADDEEV).abs());
    assert!(fine.total < WARD_FADDEEV);
}

#[test]
fn zero_epsilon_reduces_to_the_unperturbed_energies() {
    let u = ward_field(17, 3.0).unwrap();
    let h = perturbed_energy(&u, 0.0, Mode::Harmonic).unwrap();
    assert_eq!(h.total, h.dirichlet);
    let f = perturbed_energy(&u, 0.0, Mode::Faddeev).unwrap();
    assert_eq!(f.total, f.faddeev());
}

#[test]
fn epsilon_powers_differ_between_modes() {
    let u = ward_field(17, 3.0).unwrap();
    let eps = 0.3;
    let h = perturbed_energy(&u, eps, Mode::Harmonic).unwrap();
    let f = perturbed_energy(&u, eps, Mode::Faddeev).unwrap();
    assert!((h.total - (h.dirichlet + eps * eps * h.quartic)).abs() <= 1e-12 * h.total);
    assert!((f.total - (f.dirichlet + f.cross + eps * f.quartic)).abs() <= 1e-12 * f.total);
    assert!(perturbed_energy(&u, -0.1, Mode::Harmonic).is_err());
}

#[test]
fn csv_row_follows_the_header() {
    let r = EnergyReport::assemble(Mode::Faddeev, 0.5, 1.0, 2.0, 4.0);
    assert_eq!(EnergyReport::csv_header(), "mode,epsilon,dirichlet,cross,quartic,total");
    assert_eq!(r.csv_row(), "faddeev,0.5,1,2,4,5");
}

#[test]
fn monotonicity_of_a_constant_field_is_trivial() {
    let u = north(GridSpec::cube(17, 1.0).unwrap());
    let rows = monotonicity_check(&u, 0.1, [0.0; 3], &[0.2, 0.4, 0.6]).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert_eq!(r.residual, 0.0);
    }
}

#[test]
fn monotonicity_rejects_balls_leaving_the_domain() {
    let u = north(GridSpec::cube(9, 1.0).unwrap());
    assert!(matches!(
        monotonicity_check(&u, 0.1, [0.5, 0.0, 0.0], &[0.2, 0.6]),
        Err(Error::BallOutsideDomain { .. })
    ));
    assert!(monotonicity_check(&u, 0.1, [0.0; 3], &[0.4]).is_err());
    assert!(monotonicity_check(&u, 0.1, [0.0; 3], &[0.4, 0.2]).is_err());
}

#[test]
fn hedgehog_centre_is_flagged_and_smooth_fields_are_not() {
    let g = GridSpec::cube(33, 1.0).unwrap();
    let centre = g.index(16, 16, 16);
    let u = hedgehog(g, [0.0; 3], 1, BoundaryTag::Free).unwrap();
    let radii = [0.2, 0.3, 0.4];
    let map = density_map(&u, 0.0, 0.05, &radii, Some(&[centre])).unwrap();
    assert_eq!(map.flagged, vec![centre]);
    // r⁻¹∫_{B_r} 2/|x|² = 8π for every r; the lattice loses a fixed amount
    // in the core cells, which the 1/r factor dilutes.
    let err: Vec<f64> = (0..radii.len()).map(|r| (8.0 * PI - map.ratio(0, r)).abs()).collect();
    assert!(err.windows(2).all(|w| w[1] < w[0]), "{err:?}");
    assert!(err[2] < 0.1 * 8.0 * PI, "{err:?}");

    let smooth = DirectionField::from_fn(g, BoundaryTag::Free, |x| [0.01 * x[0], 0.0, 1.0]).unwrap();
    let smooth = smooth.project_to_sphere().unwrap();
    let map = density_map(&smooth, 0.0, 0.05, &radii, None).unwrap();
    assert!(!map.centers.is_empty());
    assert!(map.flagged.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energies_are_ordered(seed in any::<u64>(), amp in 0.05f64..2.0, eps in 0.0f64..1.0) {
        let u = random_smooth(seed, amp);
        let d = dirichlet_energy(&u);
        let f = perturbed_energy(&u, 0.0, Mode::Faddeev).unwrap();
        let fe = perturbed_energy(&u, eps, Mode::Faddeev).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(f.total >= d);
        prop_assert!(fe.total >= f.total);
        prop_assert!(f.cross >= 0.0 && fe.quartic >= 0.0);
    }

    #[test]
    fn totals_grow_with_epsilon(seed in any::<u64>(), e1 in 0.0f64..1.0, de in 0.0f64..1.0) {
        let u = random_smooth(seed, 0.7);
        for mode in [Mode::Harmonic, Mode::Faddeev] {
            let a = perturbed_energy(&u, e1, mode).unwrap();
            let b = perturbed_energy(&u, e1 + de, mode).unwrap();
            prop_assert!(a.total <= b.total);
            let recomputed = a.dirichlet + mode.cross_weight() * a.cross + mode.quartic_weight(e1) * a.quartic;
            prop_assert!((recomputed - a.total).abs() <= 1e-12 * a.total.max(1e-300));
        }
    }

    #[test]
    fn energies_are_invariant_under_target_rotation(seed in any::<u64>(), angle in 0.0f64..6.3) {
        let u = random_smooth(seed, 0.8);
        let (s, c) = angle.sin_cos();
        let r = u
            .map_values(|v, o| o.copy_from_slice(&[c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]))
            .unwrap();
        let a = perturbed_energy(&u, 0.2, Mode::Faddeev).unwrap();
        let b = perturbed_energy(&r, 0.2, Mode::Faddeev).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-10 * a.total);
    }
}
