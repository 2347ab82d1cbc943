//! MRP identities and attitude propagation.

use emff_core::kinematics::{mrp_rate_matrix, mrp_rate_matrix_inv, mrp_to_dcm, shadow_switch};
use emff_core::{Mat3, Vec3};
use proptest::prelude::*;

fn mrp() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0..1.0f64)
        .prop_map(|a| Vec3::new(a[0], a[1], a[2]))
        .prop_filter("inside unit ball", |s| s.norm() < 1.0 && s.norm() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rate_matrix_determinant(s in mrp()) {
        let expected = ((1.0 + s.norm_squared()) / 4.0).powi(3);
        prop_assert!((mrp_rate_matrix(&s).determinant() - expected).abs() <= 1e-14);
    }

    #[test]
    fn rate_matrix_is_scaled_orthogonal(s in mrp()) {
        let z = mrp_rate_matrix(&s);
        let k = ((1.0 + s.norm_squared()) / 4.0).powi(2);
        prop_assert!((z * z.transpose() - Mat3::identity() * k).amax() <= 1e-14);
        prop_assert!((z * mrp_rate_matrix_inv(&s) - Mat3::identity()).amax() <= 1e-12);
    }

    #[test]
    fn dcm_is_a_rotation(s in mrp()) {
        let c = mrp_to_dcm(&s);
        prop_assert!((c * c.transpose() - Mat3::identity()).amax() <= 1e-13);
        prop_assert!((c.determinant() - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn shadow_set_gives_the_same_rotation(s in mrp()) {
        let outside = -s / s.norm_squared();
        let back = shadow_switch(&outside);
        prop_assert!((back - s).norm() <= 1e-12 * s.norm().max(1.0));
        prop_assert!((mrp_to_dcm(&outside) - mrp_to_dcm(&s)).amax() <= 1e-12);
    }
}

#[test]
fn constant_rate_integrates_to_axis_angle_rotation() {
    let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
    let (rate, horizon, steps) = (0.8, 2.0, 2000);
    let omega = axis * rate;
    let f = |s: &Vec3| mrp_rate_matrix(s) * omega;
    let dt = horizon / steps as f64;
    let mut s = Vec3::zeros();
    for _ in 0..steps {
        let k1 = f(&s);
        let k2 = f(&(s + k1 * (dt / 2.0)));
        let k3 = f(&(s + k2 * (dt / 2.0)));
        let k4 = f(&(s + k3 * dt));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    let expected = axis * (rate * horizon / 4.0).tan();
    assert!((s - expected).norm() < 1e-12, "{s} vs {expected}");
}
