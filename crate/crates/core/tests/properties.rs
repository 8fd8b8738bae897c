use meshsplat_core::gaussians::{covariance_3d, GaussianField, SH_C0};
use meshsplat_core::geometry::{BlendshapeMesh, ExpressionCode};
use meshsplat_core::math::{axis_angle, Mat3, Real, Vec3};
use meshsplat_core::offsets::{compose, PositionalEncoding, OUTPUT_DIM};
use meshsplat_core::render::{random_scene, render, RenderSettings};
use meshsplat_core::synthetic::{SyntheticAvatar, SyntheticAvatarConfig};
use meshsplat_core::train::{epoch_indices, huber, huber_derivative};
use meshsplat_core::uv::{rasterize_uv, RegionMultipliers};
use ndarray::Array2;
use proptest::prelude::*;

fn small_head() -> BlendshapeMesh {
    SyntheticAvatar::build(&SyntheticAvatarConfig {
        subdivisions: 1,
        ..Default::default()
    })
    .mesh
}

fn quat() -> impl Strategy<Value = [Real; 4]> {
    prop::array::uniform4(-1.0..1.0 as Real).prop_filter("non-degenerate", |q| {
        q.iter().map(|v| v * v).sum::<Real>() > 1e-3
    })
}

fn close(a: &Mat3, b: &Mat3, tol: Real) -> bool {
    (a - b).abs().max() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_ignores_quaternion_sign_and_scale(q in quat(), s in prop::array::uniform3(0.01..2.0 as Real), c in 0.1..5.0 as Real) {
        let s = Vec3::from(s);
        let base = covariance_3d(&q, &s);
        prop_assert!(close(&base, &covariance_3d(&q.map(|v| -v), &s), 1e-12));
        prop_assert!(close(&base, &covariance_3d(&q.map(|v| c * v), &s), 1e-12));
        prop_assert!(close(&base, &base.transpose(), 1e-15));
        let eig = base.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn anchors_follow_rigid_motion(axis in prop::array::uniform3(-1.0..1.0 as Real), angle in -3.0..3.0 as Real, t in prop::array::uniform3(-2.0..2.0 as Real)) {
        let axis = Vec3::from(axis);
        prop_assume!(axis.norm() > 1e-2);
        let mesh = small_head();
        let binding = rasterize_uv(&mesh, 16, &mesh.regions, RegionMultipliers::uniform()).unwrap();
        let r = axis_angle(&axis.normalize(), angle);
        let t = Vec3::from(t);
        let moved: Vec<Vec3> = mesh.vertices.iter().map(|v| r * v + t).collect();
        let a = binding.anchors(&mesh.vertices).unwrap();
        let b = binding.anchors(&moved).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!(((r * p + t) - q).norm() < 1e-9);
        }
    }

    #[test]
    fn blendshapes_are_linear(a in prop::array::uniform3(-1.0..1.0 as Real), b in prop::array::uniform3(-1.0..1.0 as Real)) {
        let mesh = small_head();
        let eval = |psi: [Real; 3]| mesh.evaluate(&ExpressionCode(psi.to_vec())).unwrap();
        let base = eval([0.0; 3]);
        let sum = eval([a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
        let (ea, eb) = (eval(a), eval(b));
        for i in 0..base.len() {
            let lhs = sum[i] - base[i];
            let rhs = (ea[i] - base[i]) + (eb[i] - base[i]);
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_residuals_compose_to_the_base_field(n in 1usize..20, seed in any::<u64>()) {
        let spacing: Vec<Real> = (0..n).map(|i| 0.01 + 0.001 * ((seed >> (i % 60)) & 7) as Real).collect();
        let field = GaussianField::initialize(&spacing, 1).unwrap();
        let anchors: Vec<Vec3> = (0..n).map(|i| Vec3::new(i as Real, -(i as Real), 0.5)).collect();
        let c = compose(&field, &anchors, &Array2::zeros((n, OUTPUT_DIM))).unwrap();
        prop_assert_eq!(&c.means, &anchors);
        prop_assert_eq!(&c.rotations, &field.rotations);
        for (s, ls) in c.scales.iter().zip(&field.log_scales) {
            prop_assert_eq!(*s, Vec3::from(ls.map(Real::exp)));
        }
    }

    #[test]
    fn encoding_dimension(l in 0usize..10, include in any::<bool>(), p in prop::array::uniform3(-2.0..2.0 as Real)) {
        let enc = PositionalEncoding { frequencies: l, include_input: include };
        prop_assert_eq!(enc.dim(), 3 * (2 * l + usize::from(include)));
        prop_assert_eq!(enc.encode(&Vec3::from(p)).len(), enc.dim());
    }

    #[test]
    fn huber_is_even_nonnegative_and_lipschitz(r in -1.0..1.0 as Real, delta in 0.01..0.5 as Real) {
        let h = huber(r, delta);
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h, huber(-r, delta));
        prop_assert!(huber_derivative(r, delta).abs() <= delta);
        prop_assert!(h <= delta * r.abs());
    }

    #[test]
    fn epoch_indices_stay_in_range(seed in any::<u64>(), epoch in 0u64..100, len in 1usize..50) {
        let idx = epoch_indices(seed, epoch, len, 64);
        prop_assert_eq!(idx.len(), 64);
        prop_assert!(idx.iter().all(|&i| i < len));
        prop_assert_eq!(idx, epoch_indices(seed, epoch, len, 64));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn frames_conserve_weight_and_stay_in_range(n in 20usize..300, seed in any::<u64>()) {
        let rs = random_scene(n, 2, 48, 40, seed);
        let out = render(&rs.scene(), &rs.camera, &RenderSettings { background: [0.3, 0.1, 0.9] }).unwrap();
        prop_assert!(out.frame.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(out.frame.transmittance.iter().all(|v| (0.0..=1.0).contains(v)));
        for py in 0..40 {
            for px in 0..48 {
                let w = out.frame.composited_weight(&out.state, px, py);
                prop_assert!((w - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn raising_one_opacity_never_lowers_its_weight(n in 5usize..120, seed in any::<u64>(), pick in any::<prop::sample::Index>(), bump in 0.05..4.0 as Real) {
        let mut rs = random_scene(n, 0, 32, 32, seed);
        let target = pick.index(n);
        // Red carries exactly the target's weight: its red is 1, every other red is 0
        // and so is the background's.
        for i in 0..n {
            let red = if i == target { 1.0 } else { 0.0 };
            rs.sh[3 * i] = (red - 0.5) / SH_C0;
        }
        let settings = RenderSettings { background: [0.0, 0.5, 0.5] };
        let before = render(&rs.scene(), &rs.camera, &settings).unwrap().frame.image;
        rs.opacity_logits[target] += bump;
        let after = render(&rs.scene(), &rs.camera, &settings).unwrap().frame.image;
        for (b, a) in before.data.iter().zip(&after.data).step_by(3) {
            prop_assert!(*a >= *b - 1e-12, "weight fell from {b} to {a}");
        }
    }
}
