mod common;

use common::*;
use dropstereo::optics::{dark_band_mask, CameraModel};
use dropstereo::raytrace::Ray;
use dropstereo::rectify::{
    compensate_illuminance, rectify_drop, rectify_drop_with_scale, DepthSource,
};
use dropstereo::scene::{render_with_truth, Scene, Texture};
use dropstereo::{DropMask, Error, HeightField, OpticalConfig, RasterGray, Vec3};
use std::path::Path;

fn water() -> OpticalConfig {
    OpticalConfig::water()
}

#[test]
fn constant_scene_compensates_flat() {
    let (w, h) = (120, 120);
    let hf = cap_field(w, h, 60.0, 60.0, 45.0, 0.3);
    let spec = scene(
        w,
        h,
        vec![plane(2000.0, Texture::Constant { value: 0.6 })],
        vec![],
    );
    let sc = Scene::load(&spec, Path::new(".")).unwrap();
    let img = render_with_truth(&sc, &spec, std::slice::from_ref(&hf), &water())
        .unwrap()
        .image;
    let comp = compensate_illuminance(&img, &hf, &water()).unwrap();
    let vals: Vec<f64> = hf
        .mask()
        .pixels()
        .filter(|&(i, j)| comp.valid[i * w + j])
        .map(|(i, j)| comp.image.get(i, j))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(sd / mean <= 0.03, "cv {}", sd / mean);
    assert!((mean - 0.6).abs() < 1e-3, "{mean}");
    // the raw drop is visibly darker toward the band
    let raw: Vec<f64> = hf
        .mask()
        .pixels()
        .filter(|&(i, j)| comp.valid[i * w + j])
        .map(|(i, j)| img.get(i, j))
        .collect();
    let raw_min = raw.iter().cloned().fold(1.0, f64::min);
    assert!(raw_min < 0.5);
}

#[test]
fn normal_incidence_divides_by_two_interfaces() {
    // camera at infinity and a flat surface: normal incidence everywhere
    let mut config = water();
    config.camera_at_infinity = true;
    let mask = DropMask::disk(21, 21, 10.0, 10.0, 6.0).unwrap();
    let hf = HeightField::constant(mask, 2.0).unwrap();
    let img = RasterGray::filled(21, 21, 0.5);
    let comp = compensate_illuminance(&img, &hf, &config).unwrap();
    let t1 = 4.0 * (4.0f64 / 3.0) / (1.0 + 4.0f64 / 3.0).powi(2);
    assert!((t1 - 0.980).abs() < 1e-3);
    assert!((comp.image.get(10, 10) - 0.5 / (t1 * t1)).abs() < 1e-12);
    assert!((comp.transmittance[10 * 21 + 10] - t1 * t1).abs() < 1e-12);
    // outside the mask nothing changes
    assert_eq!(comp.image.get(0, 0), 0.5);
    assert_eq!(comp.transmittance[0], 1.0);
}

#[test]
fn dark_band_is_invalid_not_amplified_and_output_never_exceeds_one() {
    let (w, h) = (81, 81);
    let hf = cap_field(w, h, 40.0, 40.0, 30.0, 0.35);
    let img = RasterGray::from_fn(w, h, |i, j| ((i * 7 + j * 13) % 10) as f64 / 9.0);
    let comp = compensate_illuminance(&img, &hf, &water()).unwrap();
    let band = dark_band_mask(&hf, &water()).unwrap();
    assert!(band.count() > 0);
    for (i, j) in band.pixels() {
        assert!(!comp.valid[i * w + j]);
        assert_eq!(comp.image.get(i, j), img.get(i, j));
    }
    assert!(comp.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    for k in 0..w * h {
        if !hf.mask().bits()[k] {
            assert_eq!(comp.image.data()[k], img.data()[k]);
        }
    }
}

#[test]
fn flat_drop_rectifies_to_the_input_crop() {
    let (w, h) = (60, 50);
    let mask = DropMask::disk(w, h, 25.0, 30.0, 15.0).unwrap();
    let hf = HeightField::flat(mask);
    let img = RasterGray::from_fn(w, h, |i, j| {
        0.3 + 0.2 * ((i as f64 * 0.3).sin() * (j as f64 * 0.2).cos())
    });
    let view = rectify_drop(&img, &hf, &water(), DepthSource::Plane(2000.0)).unwrap();
    let comp = compensate_illuminance(&img, &hf, &water()).unwrap();
    assert!((view.info.scale - 1.0).abs() < 1e-9, "{:?}", view.info);
    let mut checked = 0;
    for r in 0..view.info.height {
        for c in 0..view.info.width {
            if !view.valid[r * view.info.width + c] {
                continue;
            }
            let [x, y] = view.plate_position(r as f64, c as f64);
            let (i, j) = (y.round() as usize, x.round() as usize);
            assert!((x - j as f64).abs() < 1e-6 && (y - i as f64).abs() < 1e-6);
            assert!((view.image.get(r, c) - comp.image.get(i, j)).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked as f64 > 0.8 * hf.mask().area() as f64);
}

fn checker_setup() -> (HeightField, RasterGray, Scene, OpticalConfig) {
    let (w, h) = (140, 140);
    let hf = cap_field(w, h, 70.0, 70.0, 50.0, 0.3);
    let spec = scene(
        w,
        h,
        vec![plane(
            2000.0,
            Texture::Checker {
                square: 800.0,
                softness: 0.0,
            },
        )],
        vec![],
    );
    let sc = Scene::load(&spec, Path::new(".")).unwrap();
    let img = render_with_truth(&sc, &spec, std::slice::from_ref(&hf), &water())
        .unwrap()
        .image;
    (hf, img, sc, water())
}

fn truth_zncc(
    view: &dropstereo::rectify::RectifiedView,
    sc: &Scene,
    config: &OpticalConfig,
    w: usize,
    h: usize,
) -> f64 {
    let cam = CameraModel::new(config, w, h);
    let truth: Vec<f64> = (0..view.info.width * view.info.height)
        .map(|k| {
            let [x, y] =
                view.plate_position((k / view.info.width) as f64, (k % view.info.width) as f64);
            let ray = Ray::new(Vec3::new(x, y, 0.0), cam.direct_ray(x, y)).unwrap();
            sc.shade(&ray).map_or(0.5, |hit| hit.value)
        })
        .collect();
    zncc(view.image.data(), &truth, &view.valid)
}

#[test]
fn true_depth_rectifies_best() {
    let (hf, img, sc, config) = checker_setup();
    let native = rectify_drop(&img, &hf, &config, DepthSource::Plane(2000.0)).unwrap();
    // one grid for every depth so the scores are comparable
    let scale = native.info.scale;
    let score = |d: f64| {
        let v = rectify_drop_with_scale(&img, &hf, &config, DepthSource::Plane(d), Some(scale))
            .unwrap();
        truth_zncc(&v, &sc, &config, 140, 140)
    };
    let best = score(2000.0);
    assert!(best >= 0.9, "{best}");
    for d in [
        1600.0, 1700.0, 1800.0, 1900.0, 2100.0, 2200.0, 2300.0, 2400.0,
    ] {
        let s = score(d);
        assert!(s < best, "depth {d}: {s} vs {best}");
    }
}

#[test]
fn rectified_view_has_no_total_reflection_pixels() {
    let (hf, img, _, config) = checker_setup();
    let v = rectify_drop(&img, &hf, &config, DepthSource::Plane(2000.0)).unwrap();
    assert!(v.info.valid_fraction > 0.3);
    assert!(v
        .transmittance
        .iter()
        .zip(&v.valid)
        .all(|(&t, &ok)| !ok || t > 0.0));
    assert!(v.image.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert!(v.info.width <= 1024 && v.info.height <= 1024);
}

#[test]
fn depth_in_front_of_the_drop_or_all_dark_is_rejected() {
    let (w, h) = (81, 81);
    let hf = cap_field(w, h, 40.0, 40.0, 30.0, 0.3);
    let img = RasterGray::filled(w, h, 0.5);
    assert!(rectify_drop(&img, &hf, &water(), DepthSource::Plane(1.0)).is_err());
    // normals everywhere steeper than critical: a steep ramp
    let mask = DropMask::disk(w, h, 40.0, 40.0, 3.0).unwrap();
    let spike = HeightField::from_fn(mask, |_, j| 10.0 * (j as f64 - 36.0)).unwrap();
    assert!(matches!(
        rectify_drop(&img, &spike, &water(), DepthSource::Plane(2000.0)),
        Err(Error::EmptyOutput(_))
    ));
}
