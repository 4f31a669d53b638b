use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpcmvs::rpc::{GroundPoint, ImagePoint, RpcModel};
use rpcmvs::synthetic::{
    footprint_cube, gen_rpc_from_projector, AnalyticProjector, CameraKind, LocalFrame, PushBroomCamera,
};
use rpcmvs::warp::{jacobian_wrt_height, warp_point, WarpPair};

fn projector(size: usize, pitch_deg: f64, roll_deg: f64) -> AnalyticProjector {
    let c = 0.5 * (size as f64 - 1.0);
    AnalyticProjector {
        frame: LocalFrame::centered_at(36.0, 114.0).unwrap(),
        camera: CameraKind::PushBroom(PushBroomCamera {
            gsd: 2.5,
            altitude: 505_000.0,
            pitch: pitch_deg.to_radians(),
            roll: roll_deg.to_radians(),
            ref_height: 250.0,
            center_samp: c,
            center_line: c,
        }),
        width: size,
        height: size,
    }
}

fn model(size: usize, pitch_deg: f64, roll_deg: f64) -> (AnalyticProjector, RpcModel) {
    let p = projector(size, pitch_deg, roll_deg);
    let cube = footprint_cube(&p, [0.0, 500.0]).unwrap();
    let (m, _) = gen_rpc_from_projector(&p, &cube).unwrap();
    (p, m)
}

fn random_ground(rng: &mut ChaCha8Rng, m: &RpcModel) -> GroundPoint {
    let n = &m.norm;
    GroundPoint::new(
        n.lat_off + n.lat_scale * rng.gen_range(-0.9..0.9),
        n.lon_off + n.lon_scale * rng.gen_range(-0.9..0.9),
        n.hei_off + n.hei_scale * rng.gen_range(-1.0..1.0),
    )
}

#[test]
fn localize_round_trip_within_1e8_degrees() {
    let (_, m) = model(1024, 22.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = random_ground(&mut rng, &m);
        let q = m.project_forward(&p).unwrap();
        let g = m.localize_iterative(&q, p.hei, 1e-9).unwrap();
        assert!((g.lat - p.lat).abs() < 1e-8 && (g.lon - p.lon).abs() < 1e-8, "{p:?} -> {g:?}");
    }
}

#[test]
fn localize_then_project_residual_below_1e6_px() {
    let (_, m) = model(1024, -22.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = m.norm;
    for _ in 0..1000 {
        let q = ImagePoint::new(
            n.samp_off + n.samp_scale * rng.gen_range(-0.9..0.9),
            n.line_off + n.line_scale * rng.gen_range(-0.9..0.9),
        );
        let hei = n.hei_off + n.hei_scale * rng.gen_range(-1.0..1.0);
        let g = m.localize_iterative(&q, hei, 1e-9).unwrap();
        assert!(m.project_forward(&g).unwrap().distance(&q) < 1e-6);
    }
}

#[test]
fn fitted_inverse_residual_across_extents() {
    for size in [768usize, 2048, 5120] {
        let p = projector(size, 22.0, 2.0);
        let cube = footprint_cube(&p, [0.0, 500.0]).unwrap();
        let (m, rep) = gen_rpc_from_projector(&p, &cube).unwrap();
        assert!(rep.max_forward_residual < 0.02, "{size}: {rep:?}");
        assert!(rep.max_inverse_residual < 0.05, "{size}: {rep:?}");
        // independent random check points
        let mut rng = ChaCha8Rng::seed_from_u64(size as u64);
        for _ in 0..500 {
            let q = ImagePoint::new(rng.gen_range(0.0..size as f64 - 1.0), rng.gen_range(0.0..size as f64 - 1.0));
            let hei = rng.gen_range(0.0..500.0);
            let g = m.localize_inverse_fitted(&q, hei).unwrap();
            assert!(m.project_forward(&g).unwrap().distance(&q) < 0.05, "{size}");
        }
    }
}

#[test]
fn rpc_matches_projector_over_cube() {
    let (p, m) = model(1024, 22.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let g = random_ground(&mut rng, &m);
        let d = m.project_forward(&g).unwrap().distance(&p.project(&g).unwrap());
        assert!(d < 0.05, "{d}");
    }
}

#[test]
fn warp_lands_on_true_projection() {
    let (p_src, src) = model(1024, 0.0, 0.0);
    let (p_dst, dst) = model(1024, 22.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let q = ImagePoint::new(rng.gen_range(50.0..970.0), rng.gen_range(50.0..970.0));
        let hei = rng.gen_range(10.0..490.0);
        let g = p_src.unproject(&q, hei).unwrap();
        let truth = p_dst.project(&g).unwrap();
        let w = warp_point(&src, &dst, &q, hei).unwrap();
        assert!(w.distance(&truth) < 0.05, "{}", w.distance(&truth));
    }
}

#[test]
fn warp_composition_returns_to_start() {
    let (_, a) = model(1024, 22.0, 0.0);
    let (_, b) = model(1024, -22.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let q = ImagePoint::new(rng.gen_range(100.0..920.0), rng.gen_range(100.0..920.0));
        let hei = rng.gen_range(10.0..490.0);
        let w = warp_point(&a, &b, &q, hei).unwrap();
        let back = warp_point(&b, &a, &w, hei).unwrap();
        assert!(back.distance(&q) < 0.1);
    }
}

#[test]
fn jacobian_matches_central_difference() {
    let (_, a) = model(1024, 0.0, 0.0);
    let (_, b) = model(1024, 22.0, 3.0);
    let pair = WarpPair::new(&a, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 0.1;
    for _ in 0..1000 {
        let q = ImagePoint::new(rng.gen_range(0.0..1023.0), rng.gen_range(0.0..1023.0));
        let hei = rng.gen_range(1.0..499.0);
        let j = pair.jacobian(&q, hei).unwrap();
        let up = pair.warp(&q, hei + d).unwrap();
        let dn = pair.warp(&q, hei - d).unwrap();
        let fd = [(up.samp - dn.samp) / (2.0 * d), (up.line - dn.line) / (2.0 * d)];
        let scale = j[0].hypot(j[1]);
        for k in 0..2 {
            assert!((j[k] - fd[k]).abs() <= 1e-5 * scale, "{j:?} vs {fd:?}");
        }
    }
}

#[test]
fn rolled_view_has_across_track_parallax() {
    let (p_src, src) = model(1024, 0.0, 0.0);
    let (p_dst, dst) = model(1024, 0.0, 4.0);
    for &(x, y, h) in &[(511.5, 511.5, 250.0), (200.0, 800.0, 100.0), (900.0, 100.0, 400.0)] {
        let q = ImagePoint::new(x, y);
        let j = jacobian_wrt_height(&src, &dst, &q, h).unwrap();
        let r = p_src.parallax_rate(&q, h, &p_dst);
        assert!(r[1].abs() < 1e-9);
        assert!((j[0] - r[0]).abs() < 1e-3 && j[1].abs() < 1e-3, "{j:?} vs {r:?}");
    }
}
