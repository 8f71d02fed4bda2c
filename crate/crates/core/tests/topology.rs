use hrx_core::ansatz::{ward_bumps, ward_field, ward_lift_field};
use hrx_core::topology::{
    alpha_pullback, coulomb_gauge, helmholtz_solenoidal, hopf_charge, hopf_lift, hopf_map, hopf_project, pullback_field,
};
use hrx_core::vecmath::{cross, dot};
use hrx_core::{BoundaryTag, DirectionField, Error, GridSpec, VectorField3};
use proptest::prelude::*;

const TOL: f64 = 1e-8;

fn north(g: GridSpec) -> DirectionField {
    DirectionField::constant(g, &[0.0, 0.0, 1.0], BoundaryTag::FarFieldConstant).unwrap()
}

fn rotate_pair(p: [f64; 4], theta: f64) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], c * p[2] - s * p[3], s * p[2] + c * p[3]]
}

/// Rotation of the target sphere about the unit axis `k`.
fn rotation(k: [f64; 3], angle: f64) -> impl Fn(&[f64], &mut [f64]) + Sync {
    move |v, out| {
        let v = [v[0], v[1], v[2]];
        let (s, c) = angle.sin_cos();
        let kxv = cross(&k, &v);
        let kv = dot(&k, &v);
        for i in 0..3 {
            out[i] = v[i] * c + kxv[i] * s + k[i] * kv * (1.0 - c);
        }
    }
}

#[test]
fn hopf_map_examples() {
    assert_eq!(hopf_map([1.0, 0.0, 0.0, 0.0]), [0.0, 0.0, 1.0]);
    assert_eq!(hopf_map([0.0, 0.0, 1.0, 0.0]), [0.0, 0.0, -1.0]);
}

#[test]
fn pullback_vanishes_on_constant_and_rank_one_maps() {
    let g = GridSpec::cube(9, 1.0).unwrap();
    assert_eq!(pullback_field(&north(g)).unwrap().max_abs(), 0.0);
    let circle = DirectionField::from_fn(g, BoundaryTag::Free, |x| {
        let phi = x[0] * x[1] + 2.0 * x[2];
        [phi.cos(), 0.0, phi.sin()]
    })
    .unwrap();
    assert!(pullback_field(&circle).unwrap().max_abs() < 1e-13);
}

#[test]
fn pullback_is_dominated_by_the_cross_density() {
    let u = ward_field(33, 3.0).unwrap();
    let d = pullback_field(&u).unwrap();
    let jac = u.gradient();
    for idx in 0..u.grid().len() {
        let p: [[f64; 3]; 3] = std::array::from_fn(|k| jac.partial3(idx, k));
        let sigma: f64 = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(k, l)| {
                let c = cross(&p[k], &p[l]);
                dot(&c, &c)
            })
            .sum();
        let dv = d.get(idx);
        assert!(dot(&dv, &dv) <= sigma * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn zero_source_gives_zero_gauge_and_charge() {
    let g = GridSpec::cube(12, 1.0).unwrap();
    let gauge = coulomb_gauge(&north(g), TOL).unwrap();
    assert_eq!(gauge.eta.max_abs(), 0.0);
    let q = hopf_charge(&north(g), TOL).unwrap();
    assert_eq!(q.value, 0.0);
    assert_eq!(q.rounded, 0);
}

#[test]
fn ward_gauge_meets_its_residual_bounds() {
    let u = ward_field(48, 4.0).unwrap().flatten_far_field(1.9).unwrap();
    let gauge = coulomb_gauge(&u, TOL).unwrap();
    assert!(gauge.curl_residual <= 1e-6, "{}", gauge.curl_residual);
    assert!(gauge.div_residual <= 10.0 * TOL, "{}", gauge.div_residual);
    let q = hopf_charge(&u, TOL).unwrap();
    assert_eq!(q.rounded, 1);
    assert!((q.value - 1.0).abs() <= 0.1, "{}", q.value);
    assert!(!q.poorly_resolved);
}

#[test]
fn unflattened_tails_are_rejected() {
    let u = ward_field(24, 2.0).unwrap();
    assert!(matches!(coulomb_gauge(&u, TOL), Err(Error::NonCompactSupport { .. })));
}

#[test]
fn gauge_is_translation_equivariant() {
    let g = GridSpec::cube(32, 4.0).unwrap();
    let h = g.spacing();
    let a = ward_bumps(g, &[[0.0; 3]], 0.9).unwrap();
    let b = ward_bumps(g, &[[h, 0.0, 0.0]], 0.9).unwrap();
    let ea = coulomb_gauge(&a, TOL).unwrap().eta;
    let eb = coulomb_gauge(&b, TOL).unwrap().eta;
    let [n, _, _] = g.dims();
    let scale = ea.max_abs();
    for idx in 0..g.len() {
        let [i, j, k] = g.coords(idx);
        if i + 1 < n {
            let (x, y) = (ea.get(idx), eb.get(g.index(i + 1, j, k)));
            for c in 0..3 {
                assert!((x[c] - y[c]).abs() <= 1e-10 * scale, "{idx}: {x:?} vs {y:?}");
            }
        }
    }
}

#[test]
fn mirror_image_has_opposite_charge() {
    let u = ward_field(40, 4.0).unwrap().flatten_far_field(1.9).unwrap();
    let q = hopf_charge(&u, TOL).unwrap().value;
    let m = hopf_charge(&u.reflected(), TOL).unwrap().value;
    assert!((q + m).abs() <= 1e-8, "{q} {m}");
}

#[test]
fn charge_is_additive_over_separated_bumps() {
    let g = GridSpec::cube(48, 8.0).unwrap();
    let (c1, c2) = ([0.0, 0.0, -4.0], [0.0, 0.0, 4.0]);
    let q1 = hopf_charge(&ward_bumps(g, &[c1], 1.8).unwrap(), TOL).unwrap();
    let q2 = hopf_charge(&ward_bumps(g, &[c2], 1.8).unwrap(), TOL).unwrap();
    let both = hopf_charge(&ward_bumps(g, &[c1, c2], 1.8).unwrap(), TOL).unwrap();
    assert_eq!(both.rounded, 2);
    assert!((both.value - q1.value - q2.value).abs() <= 2.0 * q1.defect.max(q2.defect));
}

#[test]
fn alpha_pullback_of_a_constant_lift_vanishes() {
    let g = GridSpec::cube(6, 1.0).unwrap();
    let v = DirectionField::constant(g, &[0.5, 0.5, 0.5, 0.5], BoundaryTag::Free).unwrap();
    assert_eq!(alpha_pullback(&v).unwrap().max_abs(), 0.0);
}

#[test]
fn analytic_lift_projects_to_the_ward_field() {
    let g = GridSpec::cube(24, 3.0).unwrap();
    let lift = ward_lift_field(g).unwrap();
    let u = ward_field(24, 3.0).unwrap();
    let back = hopf_project(&lift).unwrap();
    let err = back.values().iter().zip(u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-12, "{err}");
}

/// `‖P(−ū*(2α)) − η‖ / ‖η‖` for the analytic lift, `P` the projection onto
/// divergence-free fields, `η` the gauge of the flattened Ward field.
fn lift_gauge_mismatch(n: usize, l: f64, r: f64) -> f64 {
    let g = GridSpec::cube(n, l).unwrap();
    let u = ward_field(n, l).unwrap().flatten_far_field(r).unwrap();
    let gauge = coulomb_gauge(&u, TOL).unwrap();
    let a = alpha_pullback(&ward_lift_field(g).unwrap()).unwrap();
    let neg = VectorField3::new(g, a.values().iter().map(|v| [-v[0], -v[1], -v[2]]).collect()).unwrap();
    helmholtz_solenoidal(&neg).sub(&gauge.eta).l2() / gauge.eta.l2()
}

#[test]
fn analytic_lift_connection_approaches_the_gauge_as_the_box_grows() {
    // The mismatch lives in the flattened tail: same spacing, larger box.
    let small = lift_gauge_mismatch(32, 4.0, 1.9);
    let large = lift_gauge_mismatch(64, 8.0, 3.5);
    assert!(large < small, "{small} -> {large}");
    assert!(large < 0.2, "{large}");
}

#[test]
fn constant_field_lifts_to_a_constant() {
    let g = GridSpec::cube(10, 1.0).unwrap();
    let u = north(g);
    let gauge = coulomb_gauge(&u, TOL).unwrap();
    let lift = hopf_lift(&u, &gauge).unwrap();
    let first = lift.lift.node(0).to_vec();
    assert!(lift.lift.values().chunks(4).all(|v| v == first.as_slice()));
    assert_eq!(lift.identity_residual, 0.0);
    assert_eq!(lift.pullback_residual, 0.0);
}

#[test]
fn lattice_lift_projects_exactly() {
    let u = ward_field(40, 4.0).unwrap().flatten_far_field(1.9).unwrap();
    let gauge = coulomb_gauge(&u, TOL).unwrap();
    let lift = hopf_lift(&u, &gauge).unwrap();
    assert!(lift.projection_error <= 1e-10, "{}", lift.projection_error);
    assert!(lift.lift.max_norm_defect() <= 1e-12);
}

#[test]
fn constant_phase_leaves_lift_quantities_unchanged() {
    let g = GridSpec::cube(20, 3.0).unwrap();
    let lift = ward_lift_field(g).unwrap();
    let turned = lift.map_values(|v, o| o.copy_from_slice(&rotate_pair([v[0], v[1], v[2], v[3]], 1.1))).unwrap();
    let (p0, p1) = (hopf_project(&lift).unwrap(), hopf_project(&turned).unwrap());
    assert!(p0.values().iter().zip(p1.values()).all(|(a, b)| (a - b).abs() <= 1e-12));
    let (a0, a1) = (alpha_pullback(&lift).unwrap(), alpha_pullback(&turned).unwrap());
    assert!(a0.sub(&a1).max_abs() <= 1e-12 * a0.max_abs());
    let (j0, j1) = (lift.gradient(), turned.gradient());
    for idx in 0..g.len() {
        assert!((j0.norm2_at(idx) - j1.norm2_at(idx)).abs() <= 1e-12 * j0.norm2_at(idx).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hopf_map_is_unit_and_fibre_invariant(p in prop::array::uniform4(-1.0f64..1.0), theta in -3.2f64..3.2) {
        let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let p = p.map(|x| x / n);
        let a = hopf_map(p);
        prop_assert!((dot(&a, &a).sqrt() - 1.0).abs() <= 1e-12);
        let b = hopf_map(rotate_pair(p, theta));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn charge_is_invariant_under_target_rotations(
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in 0.0f64..6.3,
    ) {
        let n = dot(&axis, &axis).sqrt();
        prop_assume!(n > 1e-2);
        let k = axis.map(|x| x / n);
        let u = ward_field(24, 3.0).unwrap().flatten_far_field(1.4).unwrap();
        let r = u.map_values(rotation(k, angle)).unwrap();
        let q = hopf_charge(&u, TOL).unwrap().value;
        let qr = hopf_charge(&r, TOL).unwrap().value;
        prop_assert!((q - qr).abs() <= 1e-8, "{} vs {}", q, qr);
    }
}
