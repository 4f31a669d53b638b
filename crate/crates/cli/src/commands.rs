use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rpcmvs::geo::blocks::ElevationSource;
use rpcmvs::geo::dsm::{evaluate_dsm, Dsm};
use rpcmvs::geo::pipeline::{run_pipeline, PipelineConfig, View};
use rpcmvs::geo::GeoRect;
use rpcmvs::pinhole::{fit_pinhole_with, PinholeFitOptions};
use rpcmvs::raster::{read_pgm, write_pgm16, PixelRect, Raster};
use rpcmvs::rpc::{fit_inverse_rpc, parse_rpc, write_rpc, GridSpec, GroundPoint, ImagePoint, RpcModel};
use rpcmvs::sweep::{run_multistage_stages, Interval, StageConfig, SweepConfig};
use rpcmvs::synthetic::{gen_scene, read_manifest, render_views, write_bundle, SceneParams};
use rpcmvs::warp::{resample_bilinear, warp_grid};

use crate::args::*;
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Project(a) => project(a),
        Command::Localize(a) => localize(a),
        Command::FitInverse(a) => fit_inverse(a),
        Command::Warp(a) => warp(a),
        Command::FitPinhole(a) => fit_pinhole(a),
        Command::Sweep(a) => sweep(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_rpc(path: &Path) -> CliResult<RpcModel> {
    let text = read_text(path)?;
    parse_rpc(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_pgm(path: &Path) -> CliResult<Raster> {
    read_pgm(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return usage(format!("{what}: empty list"));
    }
    items.iter().map(|t| t.parse::<T>().map_err(|_| CliError::Usage(format!("{what}: cannot parse {t:?}")))).collect()
}

fn parse_fixed<const N: usize>(s: &str, what: &str) -> CliResult<[f64; N]> {
    let v: Vec<f64> = parse_list(s, what)?;
    v.try_into().map_err(|v: Vec<f64>| CliError::Usage(format!("{what}: expected {N} values, got {}", v.len())))
}

fn parse_range(s: &str, what: &str) -> CliResult<[f64; 2]> {
    let r = parse_fixed::<2>(s, what)?;
    if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
        return usage(format!("{what}: need finite min < max"));
    }
    Ok(r)
}

fn parse_sizes(s: &str) -> CliResult<Vec<(usize, usize)>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return usage("sizes: empty list");
    }
    items
        .iter()
        .map(|t| {
            let bad = || CliError::Usage(format!("sizes: invalid patch size {t:?}"));
            let (w, h) = match t.split_once(['x', 'X']) {
                Some((w, h)) => (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?),
                None => {
                    let n = t.parse().map_err(|_| bad())?;
                    (n, n)
                }
            };
            if w == 0 || h == 0 {
                return Err(bad());
            }
            Ok((w, h))
        })
        .collect()
}

fn install<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn project(a: ProjectArgs) -> CliResult<()> {
    let m = load_rpc(&a.rpc)?;
    let q = m.project_forward(&GroundPoint::new(a.lat, a.lon, a.hei))?;
    println!("{:.6} {:.6}", q.samp, q.line);
    Ok(())
}

fn localize(a: LocalizeArgs) -> CliResult<()> {
    let m = load_rpc(&a.rpc)?;
    let q = ImagePoint::new(a.samp, a.line);
    let g = if a.fitted { m.localize_inverse_fitted(&q, a.hei)? } else { m.localize_iterative(&q, a.hei, a.tol)? };
    let back = m.project_forward(&g)?;
    println!("{:.9} {:.9} {:.6}", g.lat, g.lon, g.hei);
    println!("residual {:.3e} px", back.distance(&q));
    Ok(())
}

fn fit_inverse(a: FitInverseArgs) -> CliResult<()> {
    if a.grid < 2 {
        return usage("grid must be at least 2");
    }
    let m = load_rpc(&a.rpc)?;
    let (fitted, report) = fit_inverse_rpc(&m, GridSpec::new(a.grid, a.grid, a.grid))?;
    write_text(&a.out, &write_rpc(&fitted))?;
    println!(
        "max residual {:.3e} px, rms {:.3e} px over {} check points",
        report.max_residual, report.rms_residual, report.check_points
    );
    Ok(())
}

fn warp(a: WarpArgs) -> CliResult<()> {
    let img = load_pgm(&a.src_image)?;
    let src = load_rpc(&a.src_rpc)?;
    let reference = load_rpc(&a.ref_rpc)?;
    let rect = match &a.rect {
        Some(s) => {
            let v = parse_fixed::<4>(s, "rect")?;
            if v.iter().any(|x| x.fract() != 0.0) || v[2] < 1.0 || v[3] < 1.0 {
                return usage("rect: need integer x0,y0 and positive width,height");
            }
            PixelRect::new(v[0] as i64, v[1] as i64, v[2] as usize, v[3] as usize)
        }
        None => PixelRect::new(0, 0, img.width, img.height),
    };
    let map = warp_grid(&src, &reference, rect, a.hei, (img.width, img.height))?;
    let (out, mask) = resample_bilinear(&img, &map);
    write_pgm16(&a.out, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let valid = mask.iter().filter(|m| **m).count();
    println!("{valid} of {} pixels inside the source", mask.len());
    Ok(())
}

fn fit_pinhole(a: FitPinholeArgs) -> CliResult<()> {
    let sizes = parse_sizes(&a.sizes)?;
    if a.grid < 2 {
        return usage("grid must be at least 2");
    }
    let m = load_rpc(&a.rpc)?;
    let (cx, cy) = match &a.center {
        Some(s) => {
            let c = parse_fixed::<2>(s, "center")?;
            (c[0], c[1])
        }
        None => match &a.image_size {
            Some(s) => {
                let [w, h] = parse_fixed::<2>(s, "image-size")?;
                if !(w >= 1.0 && h >= 1.0) {
                    return usage("image-size: need positive width and height");
                }
                (0.5 * (w - 1.0), 0.5 * (h - 1.0))
            }
            None => (m.norm.samp_off, m.norm.line_off),
        },
    };
    let heights = match &a.heights {
        Some(s) => parse_range(s, "heights")?,
        None => m.height_range(),
    };
    let opts = PinholeFitOptions { refine: !a.linear, ..PinholeFitOptions::default() };
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    let grid = GridSpec::new(a.grid, a.grid, a.grid);
    let mut table = String::from("width,height,min_err,max_err,mean_err,rms_err\n");
    for (w, h) in sizes {
        let x0 = (cx - 0.5 * (w as f64 - 1.0)).round() as i64;
        let y0 = (cy - 0.5 * (h as f64 - 1.0)).round() as i64;
        let (cam, rep) = fit_pinhole_with(&m, PixelRect::new(x0, y0, w, h), heights, grid, &opts)?;
        let stem = a.out_dir.join(format!("pinhole_{w}x{h}"));
        let summary: serde_json::Value =
            serde_json::from_str(&rep.summary_json()?).map_err(|e| CliError::Runtime(e.to_string()))?;
        let doc = serde_json::json!({ "report": summary, "camera": cam });
        let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
        write_text(&stem.with_extension("json"), &json)?;
        write_text(&stem.with_extension("csv"), &rep.raster_csv())?;
        let _ = writeln!(table, "{w},{h},{},{},{},{}", rep.min_err, rep.max_err, rep.mean_err, rep.rms_err);
        println!("{w}x{h}: max {:.6} px, mean {:.6} px, rms {:.6} px", rep.max_err, rep.mean_err, rep.rms_err);
    }
    write_text(&a.out_dir.join("summary.csv"), &table)
}

/// Pipeline (or sweep-only) configuration from an optional JSON file plus
/// flag overrides.
fn apply_sweep_overrides(cfg: &mut SweepConfig, threads: &mut usize, o: &SweepOverrides) -> CliResult<()> {
    let planes: Option<Vec<usize>> = o.planes.as_deref().map(|s| parse_list(s, "planes")).transpose()?;
    let factors: Option<Vec<usize>> = o.factors.as_deref().map(|s| parse_list(s, "factors")).transpose()?;
    let intervals: Option<Vec<Interval>> = o
        .intervals
        .as_deref()
        .map(|s| {
            parse_list::<String>(s, "intervals")?
                .iter()
                .map(|t| match t.as_str() {
                    "span" => Ok(Interval::Span),
                    t => t
                        .parse::<f64>()
                        .map(Interval::Meters)
                        .map_err(|_| CliError::Usage(format!("intervals: cannot parse {t:?}"))),
                })
                .collect()
        })
        .transpose()?;
    let n = [planes.as_ref().map(Vec::len), factors.as_ref().map(Vec::len), intervals.as_ref().map(Vec::len)]
        .into_iter()
        .flatten()
        .max();
    if let Some(n) = n {
        for len in [planes.as_ref().map(Vec::len), factors.as_ref().map(Vec::len), intervals.as_ref().map(Vec::len)]
            .into_iter()
            .flatten()
        {
            if len != n {
                return usage("planes, factors and intervals must list the same number of stages");
            }
        }
        if n != cfg.stages.len() {
            if planes.is_none() || factors.is_none() || intervals.is_none() {
                return usage(format!(
                    "changing the stage count from {} to {n} needs planes, factors and intervals",
                    cfg.stages.len()
                ));
            }
            cfg.stages = vec![StageConfig { factor: 1, planes: 1, interval: Interval::Span }; n];
        }
        for (k, st) in cfg.stages.iter_mut().enumerate() {
            if let Some(p) = &planes {
                st.planes = p[k];
            }
            if let Some(f) = &factors {
                st.factor = f[k];
            }
            if let Some(i) = &intervals {
                st.interval = i[k];
            }
        }
    }
    if let Some(t) = o.temperature {
        cfg.temperature = t;
    }
    if let Some(t) = o.threads {
        *threads = t;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    if a.src_images.len() != a.src_rpcs.len() {
        return usage(format!("{} source images for {} source models", a.src_images.len(), a.src_rpcs.len()));
    }
    let mut cfg: SweepConfig = match &a.sweep.config {
        Some(p) => load_json(p)?,
        None => SweepConfig::default(),
    };
    let mut threads = 0;
    apply_sweep_overrides(&mut cfg, &mut threads, &a.sweep)?;
    cfg.validate()?;
    let ref_img = load_pgm(&a.ref_image)?;
    let srcs: Vec<Raster> = a.src_images.iter().map(|p| load_pgm(p)).collect::<CliResult<_>>()?;
    let mut rpcs = vec![load_rpc(&a.ref_rpc)?];
    for p in &a.src_rpcs {
        rpcs.push(load_rpc(p)?);
    }
    let range = match &a.range {
        Some(s) => parse_range(s, "range")?,
        None => match ElevationSource::from_rpcs(&rpcs)? {
            ElevationSource::Range(r) => r,
            ElevationSource::Dem { .. } => unreachable!("model ranges give a fixed range"),
        },
    };
    let (schedule, stages) = install(threads, || run_multistage_stages(&ref_img, &srcs, &rpcs, range, &cfg))??;
    if a.all_stages {
        for (k, st) in stages.iter().enumerate() {
            st.map.write(stage_path(&a.out, k), Some(&schedule)).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    let last = &stages.last().expect("at least one stage").map;
    last.write(&a.out, Some(&schedule)).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{} of {} pixels valid", last.valid_count(), last.width * last.height);
    Ok(())
}

fn stage_path(out: &Path, k: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.stage{k}.pfm"))
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let mut cfg: PipelineConfig = match &a.sweep.config {
        Some(p) => load_json(p)?,
        None => PipelineConfig::default(),
    };
    apply_sweep_overrides(&mut cfg.sweep, &mut cfg.threads, &a.sweep)?;
    if let Some(b) = a.block_size {
        cfg.block_size = b;
    }
    if let Some(t) = a.threshold {
        cfg.consistency_threshold = t;
    }
    if let Some(c) = a.cell {
        cfg.dsm_cell = c;
    }
    cfg.validate()?;

    let (image_paths, rpc_paths, mut aoi, mut gt_path) = match &a.scene {
        Some(dir) => {
            let man = read_manifest(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
            (
                man.views.iter().map(|v| dir.join(&v.image)).collect(),
                man.views.iter().map(|v| dir.join(&v.rpc)).collect(),
                Some(man.aoi),
                Some(dir.join(&man.gt_dsm)),
            )
        }
        None => (a.images.clone(), a.rpcs.clone(), None, None),
    };
    if image_paths.len() != rpc_paths.len() {
        return usage(format!("{} images for {} models", image_paths.len(), rpc_paths.len()));
    }
    if image_paths.len() < 2 {
        return usage("at least two views are required");
    }
    if let Some(s) = &a.aoi {
        let v = parse_fixed::<4>(s, "aoi")?;
        aoi = Some(GeoRect::new(v[0], v[1], v[2], v[3]));
    }
    let Some(aoi) = aoi else { return usage("--aoi is required without --scene") };
    if aoi.is_empty() {
        return usage("aoi is empty");
    }
    if a.gt.is_some() {
        gt_path = a.gt.clone();
    }
    let views: Vec<View> = image_paths
        .iter()
        .zip(&rpc_paths)
        .map(|(i, r)| Ok(View { image: load_pgm(i)?, rpc: load_rpc(r)? }))
        .collect::<CliResult<_>>()?;
    let gt = gt_path.as_deref().map(load_dsm).transpose()?;
    let elevation = a
        .dem
        .as_deref()
        .map(|p| Ok::<_, CliError>(ElevationSource::Dem { dem: load_dsm(p)?, margin: a.dem_margin }))
        .transpose()?;

    let out = run_pipeline(&views, &aoi, &cfg, elevation.as_ref(), gt.as_ref())?;
    for f in &out.failures {
        eprintln!("block {} failed: {}", f.block, f.message);
    }
    if out.blocks.is_empty() {
        return Err(CliError::Runtime(format!("all {} block(s) failed", out.failures.len())));
    }
    out.dsm.write(&a.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    for b in &out.blocks {
        eprintln!("block {}: {} views, {} points, {} cells", b.block.id, b.crops.len(), b.points, b.cells);
    }
    match (&out.metrics, &a.metrics) {
        (Some(m), path) => {
            let json = serde_json::to_string_pretty(m).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
            if let Some(p) = path {
                write_text(p, &json)?;
            }
            print!("{json}");
        }
        (None, Some(_)) => eprintln!("no ground truth overlap; metrics not written"),
        (None, None) => {}
    }
    eprintln!("{} valid cells in {:.1} s", out.dsm.valid_count(), out.runtime_s);
    Ok(())
}

fn load_dsm(path: &Path) -> CliResult<Dsm> {
    Dsm::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let dsm = load_dsm(&a.dsm)?;
    let gt = load_dsm(&a.gt)?;
    let m = evaluate_dsm(&dsm, &gt)?;
    let json = serde_json::to_string_pretty(&m).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    if let Some(p) = &a.out {
        write_text(p, &json)?;
    }
    print!("{json}");
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut params: SceneParams = match &a.config {
        Some(p) => load_json(p)?,
        None => SceneParams::default(),
    };
    if let Some(s) = a.size {
        params.image_size = s;
    }
    if let Some(r) = a.relief {
        params.relief = r;
    }
    params.validate()?;
    let scene = gen_scene(a.seed, &params)?;
    let renders = render_views(&scene)?;
    let man = write_bundle(&scene, &renders, &a.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "{} views of {}x{} px, heights [{:.1}, {:.1}] m, written to {}",
        man.views.len(),
        params.image_size,
        params.image_size,
        man.height_range[0],
        man.height_range[1],
        a.out.display()
    );
    Ok(())
}
