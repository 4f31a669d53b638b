use rpcmvs::geo::dsm::{evaluate_dsm, is_valid, Dsm};
use rpcmvs::geo::fusion::geometric_consistency_filter;
use rpcmvs::geo::pipeline::{run_pipeline, PipelineConfig, View};
use rpcmvs::geo::GeoRect;
use rpcmvs::rpc::ImagePoint;
use rpcmvs::sweep::HeightMap;
use rpcmvs::synthetic::{gen_scene, render_views, RenderedView, SceneParams, SyntheticScene};
use rpcmvs::warp::WarpPair;

fn scene(seed: u64, size: usize) -> (SyntheticScene, Vec<RenderedView>) {
    let s = gen_scene(seed, &SceneParams { image_size: size, ..SceneParams::default() }).unwrap();
    let r = render_views(&s).unwrap();
    (s, r)
}

fn views(s: &SyntheticScene, r: &[RenderedView]) -> Vec<View> {
    r.iter().zip(s.rpcs()).map(|(r, m)| View { image: r.image.clone(), rpc: m }).collect()
}

fn truth_maps(r: &[RenderedView]) -> Vec<HeightMap> {
    r.iter().map(|v| HeightMap::new(v.image.width, v.image.height, v.heights.clone(), 1).unwrap()).collect()
}

#[test]
fn single_block_reconstruction_meets_bounds() {
    let (s, r) = scene(21, 512);
    let out = run_pipeline(&views(&s, &r), &s.aoi, &PipelineConfig::default(), None, Some(&s.gt_dsm)).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.blocks.len(), 1);
    let m = out.metrics.unwrap();
    println!("{m:?}");
    assert!(m.mae <= 2.5 && m.pct_below_2_5 >= 80.0 && m.completeness >= 90.0, "{m:?}");
    assert!(m.rmse >= m.mae);
}

#[test]
fn block_partition_does_not_change_the_surface() {
    let (s, r) = scene(22, 512);
    let v = views(&s, &r);
    let one = run_pipeline(&v, &s.aoi, &PipelineConfig::default(), None, Some(&s.gt_dsm)).unwrap();
    let cfg4 = PipelineConfig { block_size: 520.0, ..PipelineConfig::default() };
    let four = run_pipeline(&v, &s.aoi, &cfg4, None, Some(&s.gt_dsm)).unwrap();
    assert_eq!(four.blocks.len(), 4);
    assert!(four.failures.is_empty(), "{:?}", four.failures);
    let (mut shared, mut close) = (0usize, 0usize);
    for (a, b) in one.dsm.values.iter().zip(&four.dsm.values) {
        if is_valid(*a) && is_valid(*b) {
            shared += 1;
            close += ((a - b).abs() <= 2.5) as usize;
        }
    }
    let frac = close as f64 / shared as f64;
    println!("shared {shared}, within 2.5 m {frac:.4}; {:?} vs {:?}", one.metrics, four.metrics);
    assert!(shared as f64 >= 0.9 * one.dsm.valid_count() as f64);
    assert!(frac >= 0.99, "{frac}");
}

#[test]
fn aoi_outside_coverage_gives_empty_dsm() {
    let (s, r) = scene(23, 256);
    let far = GeoRect::new(s.aoi.lat_min + 1.0, s.aoi.lat_max + 1.0, s.aoi.lon_min, s.aoi.lon_max);
    let out = run_pipeline(&views(&s, &r), &far, &PipelineConfig::default(), None, None).unwrap();
    assert_eq!(out.dsm.valid_count(), 0);
    assert_eq!(out.failures.len(), 1);
    assert!(out.metrics.is_none());
}

#[test]
fn consistent_maps_are_retained() {
    let (s, r) = scene(24, 512);
    let maps = truth_maps(&r);
    let rpcs = s.rpcs();
    for ref_index in 0..3 {
        let kept = geometric_consistency_filter(&maps, &rpcs, ref_index, 1.0, 1).unwrap();
        let before = maps[ref_index].valid_count();
        // pixels also seen by another view
        let seen = (0..maps[ref_index].valid.len())
            .filter(|&i| maps[ref_index].valid[i] && observed_elsewhere(&s, &maps, ref_index, i))
            .count();
        let frac = kept.valid_count() as f64 / seen as f64;
        println!("ref {ref_index}: kept {} of {seen} multi-view ({before} valid)", kept.valid_count());
        assert!(frac >= 0.99, "{frac}");
    }
}

fn observed_elsewhere(s: &SyntheticScene, maps: &[HeightMap], r: usize, i: usize) -> bool {
    let rpcs = s.rpcs();
    let w = maps[r].width;
    let h = maps[r].heights[i];
    let g = rpcs[r].localize_iterative(&ImagePoint::new((i % w) as f64, (i / w) as f64), h, 1e-9).unwrap();
    (0..maps.len()).any(|j| {
        j != r && {
            let q = rpcs[j].project_forward(&g).unwrap();
            q.samp >= 0.0
                && q.line >= 0.0
                && q.samp <= (maps[j].width - 1) as f64
                && q.line <= (maps[j].height - 1) as f64
        }
    })
}

#[test]
fn perturbed_heights_are_rejected() {
    let (s, r) = scene(25, 512);
    let mut maps = truth_maps(&r);
    let rpcs = s.rpcs();
    let reference = 1;
    let w = maps[reference].width;
    let pairs: Vec<WarpPair> = [0, 2].iter().map(|&j| WarpPair::new(&rpcs[reference], &rpcs[j])).collect();
    let mut perturbed = Vec::new();
    for i in (0..maps[reference].valid.len()).step_by(7) {
        let Some(h) = maps[reference].get(i % w, i / w) else { continue };
        let q = ImagePoint::new((i % w) as f64, (i / w) as f64);
        // smallest parallax rate over the sources sets the offset for 2 px
        let rate = pairs.iter().map(|p| {
            let j = p.jacobian(&q, h).unwrap();
            j[0].hypot(j[1])
        });
        let rate = rate.fold(f64::INFINITY, f64::min);
        let dh = 2.0 / rate * if i % 2 == 0 { 1.0 } else { -1.0 };
        maps[reference].heights[i] = h + dh;
        perturbed.push(i);
    }
    let kept = geometric_consistency_filter(&maps, &rpcs, reference, 1.0, 1).unwrap();
    let rejected = perturbed.iter().filter(|&&i| !kept.valid[i]).count();
    let frac = rejected as f64 / perturbed.len() as f64;
    println!("rejected {rejected} of {}", perturbed.len());
    assert!(frac >= 0.99, "{frac}");
}

#[test]
fn infinite_threshold_is_identity() {
    let (s, r) = scene(26, 256);
    let mut maps = truth_maps(&r);
    for (k, h) in maps[0].heights.iter_mut().enumerate() {
        *h += (k % 13) as f64 * 3.0;
    }
    let rpcs = s.rpcs();
    let kept = geometric_consistency_filter(&maps, &rpcs, 0, f64::INFINITY, 1).unwrap();
    assert_eq!(kept.valid, maps[0].valid);
    assert!(kept.heights.iter().zip(&maps[0].heights).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn truth_surface_passes_evaluation_exactly() {
    let (s, _) = scene(27, 256);
    let m = evaluate_dsm(&s.gt_dsm, &s.gt_dsm).unwrap();
    assert_eq!(m.mae, 0.0);
    let shifted = Dsm::from_values(
        s.gt_dsm.grid,
        s.gt_dsm.values.iter().map(|v| if is_valid(*v) { v + 1.0 } else { *v }).collect(),
    )
    .unwrap();
    assert!((evaluate_dsm(&shifted, &s.gt_dsm).unwrap().mae - 1.0).abs() < 1e-12);
}
