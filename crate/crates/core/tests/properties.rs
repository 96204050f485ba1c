use mobius_mono::geom::{fit_sphere, orthonormal_frame, project, ExtendedPoint, Isometry, Sphere, VecN};
use mobius_mono::mobius::{ball_image, reflect, Decomposition, BallImage, Reflection};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = VecN> {
    prop::array::uniform3(-r..r).prop_map(VecN::from)
}

fn vec4(r: f64) -> impl Strategy<Value = VecN> {
    prop::array::uniform4(-r..r).prop_map(VecN::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_splits_the_norm(x in vec4(5.0), u in vec4(1.0), v in vec4(1.0)) {
        let Ok(frame) = orthonormal_frame(&[u, v], 1e-6) else { return Ok(()) };
        let (t, n) = project(&x, &frame);
        prop_assert!((t.norm_sq() + n.norm_sq() - x.norm_sq()).abs() <= 1e-12 * x.norm_sq().max(1.0));
        let (tt, tn) = project(&t, &frame);
        prop_assert!(tt.dist(&t) <= 1e-12 * t.norm().max(1.0));
        prop_assert!(tn.norm() <= 1e-12 * t.norm().max(1.0));
        for f in frame.vectors() {
            prop_assert!(n.dot(f).abs() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn isometries_preserve_distances(x in vec3(4.0), y in vec3(4.0), normal in vec3(1.0), offset in -2.0..2.0f64) {
        let Ok(plane) = mobius_mono::geom::Hyperplane::new(normal, offset) else { return Ok(()) };
        let m = Isometry::mirror(&plane);
        prop_assert!((m.apply(&x).dist(&m.apply(&y)) - x.dist(&y)).abs() <= 1e-12 * x.dist(&y).max(1.0));
        prop_assert!(m.apply_inverse(&m.apply(&x)).dist(&x) <= 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn reflection_is_an_involution(b in vec3(3.0), r in 0.1..3.0f64, x in vec3(5.0)) {
        prop_assume!(x.dist(&b) > 1e-6);
        let sigma = Reflection::InSphere(Sphere::new(b.clone(), r).unwrap());
        let once = reflect(&sigma, &x.clone().into());
        let twice = reflect(&sigma, &once);
        let back = twice.finite().unwrap();
        prop_assert!(back.dist(&x) <= 1e-11 * x.norm().max(1.0));
        prop_assert!(reflect(&sigma, &ExtendedPoint::Infinity).finite() == Some(&b));
        prop_assert!(reflect(&sigma, &b.clone().into()).is_infinity());
    }

    #[test]
    fn norm_of_reflected_point(b in vec3(3.0), r in 0.1..3.0f64, x in vec3(5.0)) {
        prop_assume!(x.dist(&b) > 1e-6 && b.norm() > 1e-3);
        let sigma = Reflection::InSphere(Sphere::new(b.clone(), r).unwrap());
        let sx = reflect(&sigma, &x.clone().into()).finite().unwrap().clone();
        let s0 = reflect(&sigma, &VecN::zeros(3).into()).finite().unwrap().clone();
        let lhs = sx.norm() * x.dist(&b);
        let rhs = b.norm() * x.dist(&s0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(rhs).max(1.0));
    }

    #[test]
    fn exact_sphere_samples_are_recovered(c in vec3(3.0), r in 0.1..2.0f64, dirs in prop::collection::vec(vec3(1.0), 12..20)) {
        let pts: Vec<VecN> = dirs.iter().filter(|d| d.norm() > 0.1).map(|d| c.axpy(r / d.norm(), d)).collect();
        prop_assume!(pts.len() >= 8);
        let Ok((s, resid)) = fit_sphere(&pts) else { return Ok(()) };
        prop_assert!(s.center.dist(&c) <= 1e-10 * c.norm().max(1.0));
        prop_assert!((s.radius - r).abs() <= 1e-10);
        prop_assert!(resid <= 1e-10);
    }

    #[test]
    fn ball_images_are_nested(b in vec3(3.0), big_r in 0.2..2.0f64, t1 in 0.05..0.95f64, t2 in 0.05..0.95f64) {
        prop_assume!(b.norm() > 0.2);
        let dec = Decomposition::of_reflection(b.clone(), big_r).unwrap();
        let (lo, hi) = (t1.min(t2) * b.norm(), t1.max(t2) * b.norm());
        let (BallImage::Ball(small), BallImage::Ball(big)) = (ball_image(&dec, lo), ball_image(&dec, hi)) else {
            return Err(TestCaseError::fail("expected balls below |b|"));
        };
        prop_assert!(small.center.dist(&big.center) + small.radius <= big.radius * (1.0 + 1e-12));
    }
}
