use super::*;
use crate::gaussians::{Intrinsics, SH_C0};
use crate::math::{logit, IDENTITY_QUAT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn front_camera(size: u32) -> Camera {
    let k = Intrinsics {
        fx: 40.0,
        fy: 40.0,
        cx: (size / 2) as Real,
        cy: (size / 2) as Real,
    };
    Camera::new(k, Mat3::identity(), Vec3::zeros(), size, size).unwrap()
}

fn dc_for(rgb: [Real; 3]) -> [Real; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

struct Owned {
    means: Vec<Vec3>,
    rotations: Vec<Quat>,
    scales: Vec<Vec3>,
    opacity_logits: Vec<Real>,
    sh: Vec<Real>,
    sh_degree: u32,
}

impl Owned {
    fn scene(&self) -> SplatScene<'_> {
        SplatScene {
            means: &self.means,
            rotations: &self.rotations,
            scales: &self.scales,
            opacity_logits: &self.opacity_logits,
            sh: &self.sh,
            sh_degree: self.sh_degree,
        }
    }
}

fn on_axis(depths: &[Real], opacities: &[Real], colors: &[[Real; 3]]) -> Owned {
    let n = depths.len();
    Owned {
        means: depths.iter().map(|&z| Vec3::new(0.0, 0.0, z)).collect(),
        rotations: vec![IDENTITY_QUAT; n],
        scales: vec![Vec3::repeat(0.05); n],
        opacity_logits: opacities.iter().map(|&o| logit(o)).collect(),
        sh: colors.iter().flat_map(|c| dc_for(*c)).collect(),
        sh_degree: 0,
    }
}

#[test]
fn opaque_gaussian_center_shows_its_colour() {
    let s = on_axis(&[2.0], &[0.999999], &[[0.2, 0.6, 0.9]]);
    let cam = front_camera(16);
    let settings = RenderSettings {
        background: [0.0; 3],
    };
    let out = render(&s.scene(), &cam, &settings).unwrap();
    let px = out.frame.image.pixel(8, 8);
    for (ch, want) in [0.2, 0.6, 0.9].into_iter().enumerate() {
        assert!((px[ch] - MAX_ALPHA * want).abs() < 1e-12);
    }
}

#[test]
fn two_half_transparent_splats_composite_front_to_back() {
    let s = on_axis(&[2.0, 3.0], &[0.5, 0.5], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let out = render(
        &s.scene(),
        &front_camera(16),
        &RenderSettings {
            background: [0.0; 3],
        },
    )
    .unwrap();
    let px = out.frame.image.pixel(8, 8);
    assert!((px[0] - 0.5).abs() < 1e-12);
    assert!((px[1] - 0.25).abs() < 1e-12);
    assert!(px[2].abs() < 1e-12);
    assert!((out.frame.transmittance[8 * 16 + 8] - 0.25).abs() < 1e-12);
    assert_eq!(out.frame.contributors[8 * 16 + 8], 2);
}

#[test]
fn all_culled_gives_background() {
    let s = on_axis(&[-1.0, 0.001], &[0.5, 0.5], &[[1.0; 3], [1.0; 3]]);
    let bg = [0.1, 0.2, 0.3];
    let out = render(&s.scene(), &front_camera(8), &RenderSettings { background: bg }).unwrap();
    assert_eq!(out.frame.image, Image::filled(8, 8, bg));
    assert!(out.state.tile_ids.is_empty());
}

#[test]
fn non_finite_attribute_names_the_gaussian() {
    let mut s = on_axis(&[2.0, 2.0, 2.0], &[0.5; 3], &[[0.5; 3]; 3]);
    s.scales[2].y = Real::NAN;
    let err = render(&s.scene(), &front_camera(8), &RenderSettings::default()).unwrap_err();
    assert!(matches!(
        err,
        Error::NonFinite {
            index: 2,
            attribute: "scale"
        }
    ));
}

#[test]
fn backward_rejects_mismatched_state() {
    let s = on_axis(&[2.0], &[0.5], &[[0.5; 3]]);
    let cam = front_camera(8);
    let out = render(&s.scene(), &cam, &RenderSettings::default()).unwrap();
    let two = on_axis(&[2.0, 3.0], &[0.5; 2], &[[0.5; 3]; 2]);
    let g = Image::new(8, 8);
    assert!(matches!(
        render_backward(&two.scene(), &cam, &out.state, &g),
        Err(Error::ForwardStateMismatch(_))
    ));
    assert!(render_backward(&s.scene(), &front_camera(16), &out.state, &g).is_err());
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let rs = random_scene(40, 1, 32, 32, 5);
    let out = render(&rs.scene(), &rs.camera, &RenderSettings::default()).unwrap();
    let g = render_backward(&rs.scene(), &rs.camera, &out.state, &Image::new(32, 32)).unwrap();
    assert_eq!(g, SplatGradients::zeros(40, 12));
}

#[test]
fn single_gaussian_opacity_gradient_matches_closed_form() {
    // C = o c + (1 - o) bg at the centre pixel, so dC/do = c - bg
    let o = 0.4;
    let c = [0.7, 0.3, 0.5];
    let bg = [1.0, 1.0, 1.0];
    let s = on_axis(&[2.0], &[o], &[c]);
    let cam = front_camera(16);
    let out = render(&s.scene(), &cam, &RenderSettings { background: bg }).unwrap();
    let mut g = Image::new(16, 16);
    g.data[3 * (8 * 16 + 8)] = 1.0;
    let grads = render_backward(&s.scene(), &cam, &out.state, &g).unwrap();
    let want = (c[0] - bg[0]) * o * (1.0 - o);
    assert!((grads.opacity_logits[0] - want).abs() < 1e-12);
}

#[test]
fn equal_depth_ties_break_by_index() {
    let s = on_axis(&[2.0, 2.0], &[0.6, 0.6], &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let out = render(
        &s.scene(),
        &front_camera(16),
        &RenderSettings {
            background: [0.0; 3],
        },
    )
    .unwrap();
    let px = out.frame.image.pixel(8, 8);
    assert!((px[0] - 0.6).abs() < 1e-12 && (px[2] - 0.24).abs() < 1e-12);
}

fn weighted_loss(img: &Image, w: &[Real]) -> Real {
    img.data.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn rel_err(a: &[Real], b: &[Real]) -> Real {
    let diff: Real = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<Real>().sqrt();
    let scale: Real = a.iter().chain(b).map(|x| x * x).sum::<Real>().sqrt();
    diff / scale.max(1e-12)
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let size = 24;
    let n = 6;
    let mut s = Owned {
        means: (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(2.0..3.0),
                )
            })
            .collect(),
        rotations: (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect(),
        scales: (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(0.06..0.15)))
            .collect(),
        opacity_logits: (0..n).map(|_| logit(rng.random_range(0.3..0.7))).collect(),
        sh: (0..n * 12)
            .map(|k| if k % 12 < 3 { rng.random_range(-0.5..0.5) } else { rng.random_range(-0.1..0.1) })
            .collect(),
        sh_degree: 1,
    };
    let cam = front_camera(size);
    let settings = RenderSettings {
        background: [0.3, 0.4, 0.5],
    };
    let w: Vec<Real> = (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = render(&s.scene(), &cam, &settings).unwrap();
    let g_img = Image {
        width: size,
        height: size,
        data: w.clone(),
    };
    let grads = render_backward(&s.scene(), &cam, &out.state, &g_img).unwrap();

    let h = 1e-6;
    let eval = |s: &Owned| weighted_loss(&render(&s.scene(), &cam, &settings).unwrap().frame.image, &w);

    let mut fd_means = Vec::new();
    let mut fd_rot = Vec::new();
    let mut fd_scale = Vec::new();
    let mut fd_op = Vec::new();
    let mut fd_sh = Vec::new();
    for i in 0..n {
        for a in 0..3 {
            let v = s.means[i][a];
            s.means[i][a] = v + h;
            let p = eval(&s);
            s.means[i][a] = v - h;
            let m = eval(&s);
            s.means[i][a] = v;
            fd_means.push((p - m) / (2.0 * h));

            let v = s.scales[i][a];
            s.scales[i][a] = v + h;
            let p = eval(&s);
            s.scales[i][a] = v - h;
            let m = eval(&s);
            s.scales[i][a] = v;
            fd_scale.push((p - m) / (2.0 * h));
        }
        for a in 0..4 {
            let v = s.rotations[i][a];
            s.rotations[i][a] = v + h;
            let p = eval(&s);
            s.rotations[i][a] = v - h;
            let m = eval(&s);
            s.rotations[i][a] = v;
            fd_rot.push((p - m) / (2.0 * h));
        }
        let v = s.opacity_logits[i];
        s.opacity_logits[i] = v + h;
        let p = eval(&s);
        s.opacity_logits[i] = v - h;
        let m = eval(&s);
        s.opacity_logits[i] = v;
        fd_op.push((p - m) / (2.0 * h));
    }
    for k in 0..s.sh.len() {
        let v = s.sh[k];
        s.sh[k] = v + h;
        let p = eval(&s);
        s.sh[k] = v - h;
        let m = eval(&s);
        s.sh[k] = v;
        fd_sh.push((p - m) / (2.0 * h));
    }

    let an_means: Vec<Real> = grads.means.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
    let an_scale: Vec<Real> = grads.scales.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect();
    let an_rot: Vec<Real> = grads.rotations.iter().flatten().copied().collect();
    for (name, an, fd) in [
        ("means", &an_means, &fd_means),
        ("scales", &an_scale, &fd_scale),
        ("rotations", &an_rot, &fd_rot),
        ("opacity", &grads.opacity_logits, &fd_op),
        ("sh", &grads.sh, &fd_sh),
    ] {
        let e = rel_err(an, fd);
        assert!(e < 1e-4, "{name}: relative error {e}\n an {an:?}\n fd {fd:?}");
    }
}

#[test]
fn tiled_render_matches_oracle_on_a_random_scene() {
    let rs = random_scene(150, 2, 48, 40, 3);
    let bg = [0.2, 0.7, 0.4];
    let out = render(&rs.scene(), &rs.camera, &RenderSettings { background: bg }).unwrap();
    let (img, t) = oracle::render_naive(&rs.scene(), &rs.camera, bg).unwrap();
    assert!(out.frame.image.max_abs_diff(&img) < 1e-10);
    for (a, b) in out.frame.transmittance.iter().zip(&t) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn tile_lists_are_depth_sorted() {
    let rs = random_scene(200, 0, 64, 64, 8);
    let out = render(&rs.scene(), &rs.camera, &RenderSettings::default()).unwrap();
    let st = &out.state;
    for &(s, e) in &st.tile_ranges {
        let ids = &st.tile_ids[s as usize..e as usize];
        for pair in ids.windows(2) {
            let (a, b) = (
                st.splats[pair[0] as usize].unwrap(),
                st.splats[pair[1] as usize].unwrap(),
            );
            assert!(a.depth < b.depth || (a.depth == b.depth && pair[0] < pair[1]));
        }
    }
}
