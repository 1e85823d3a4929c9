use dropstereo::config::BlockMatchParams;
use dropstereo::raytrace::{AngularGrid, Dewarped, Ray};
use dropstereo::stereo::{block_match, depth_from_drops, match_grids, triangulate, Correspondence};
use dropstereo::{Error, HeightField, OpticalConfig, PipelineConfig, RasterGray, Vec3};
use proptest::prelude::*;

fn hash_texture(n: usize, seed: u64) -> RasterGray {
    // per-pixel hashed noise under a 3×3 box blur
    let hash = |r: usize, c: usize| {
        let mut x = seed ^ ((r as u64) << 32) ^ c as u64;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        ((x ^ (x >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    RasterGray::from_fn(n, n, |r, c| {
        let mut s = 0.0;
        for dr in 0..3 {
            for dc in 0..3 {
                s += hash(r + dr, c + dc);
            }
        }
        s / 9.0
    })
}

fn identity_view(image: RasterGray) -> Dewarped {
    let n = image.width();
    Dewarped {
        grid: AngularGrid {
            center: [0.0, 0.0],
            step: 1.0,
            size: n,
        },
        valid: vec![true; n * n],
        source: (0..n * n)
            .map(|k| [(k % n) as f64, (k / n) as f64])
            .collect(),
        image,
    }
}

#[test]
fn identical_images_match_themselves() {
    let img = hash_texture(64, 1);
    let v = identity_view(img);
    let m = block_match(&v, &v, (0, 1), &BlockMatchParams::default()).unwrap();
    assert!(m.len() >= 8);
    for c in &m {
        // parabola refinement on asymmetric neighbors moves the peak a little
        assert!((c.pixel_a[0] - c.pixel_b[0]).abs() < 0.25, "{c:?}");
        assert!((c.pixel_a[1] - c.pixel_b[1]).abs() < 0.25, "{c:?}");
        assert!(c.score > 0.999);
        assert_eq!((c.drop_a, c.drop_b), (0, 1));
    }
}

#[test]
fn shifted_copy_matches_at_the_shift() {
    let n = 96;
    let big = hash_texture(n + 10, 2);
    let a = RasterGray::from_fn(n, n, |r, c| big.get(r + 5, c + 5));
    // b is a moved 5 px right and 3 px down
    let b = RasterGray::from_fn(n, n, |r, c| big.get(r + 2, c));
    let m = match_grids(
        &a,
        &vec![true; n * n],
        &b,
        &vec![true; n * n],
        &BlockMatchParams::default(),
    )
    .unwrap();
    assert!(m.len() >= 50);
    for g in &m {
        assert!((g.b[1] - g.a[1] - 5.0).abs() <= 0.5, "{g:?}");
        assert!((g.b[0] - g.a[0] - 3.0).abs() <= 0.5, "{g:?}");
    }
}

#[test]
fn textureless_images_have_no_matches() {
    let v = identity_view(RasterGray::filled(64, 64, 0.4));
    assert!(matches!(
        block_match(&v, &v, (0, 1), &BlockMatchParams::default()),
        Err(Error::InsufficientMatches { found: 0, min: 8 })
    ));
}

#[test]
fn invalid_pixels_are_never_matched() {
    let n = 64;
    let img = hash_texture(n, 3);
    let valid: Vec<bool> = (0..n * n).map(|k| k % n < 32).collect();
    let m = match_grids(&img, &valid, &img, &valid, &BlockMatchParams::default()).unwrap();
    assert!(m.iter().all(|g| g.a[1] + 5.0 < 32.0 && g.b[1] + 5.0 < 32.0));
}

#[test]
fn single_drop_is_insufficient() {
    let mask = dropstereo::DropMask::disk(20, 20, 10.0, 10.0, 5.0).unwrap();
    let hf = HeightField::flat(mask);
    let img = RasterGray::filled(20, 20, 0.5);
    let config = PipelineConfig::new(OpticalConfig::water());
    assert!(matches!(
        depth_from_drops(&img, &[hf], &config, None),
        Err(Error::InsufficientDrops(1))
    ));
}

#[test]
fn given_correspondences_through_flat_drops_triangulate() {
    // With flat drops the outbound rays are the straight camera rays, so
    // two pixels seeing one point triangulate back to it.
    let config = PipelineConfig::new(OpticalConfig::water());
    let (w, h) = (80, 40);
    let a = HeightField::flat(dropstereo::DropMask::disk(w, h, 20.0, 20.0, 12.0).unwrap());
    let b = HeightField::flat(dropstereo::DropMask::disk(w, h, 20.0, 60.0, 12.0).unwrap());
    let cam = Vec3::new(39.5, 19.5, -3000.0);
    let pix = [[20.0, 20.0], [20.0, 60.0]];
    let dirs: Vec<Vec3> = pix
        .iter()
        .map(|p| (Vec3::new(p[1], p[0], 0.0) - cam).normalize())
        .collect();
    let rays = [
        Ray::new(Vec3::new(20.0, 20.0, 0.0), dirs[0]).unwrap(),
        Ray::new(Vec3::new(60.0, 20.0, 0.0), dirs[1]).unwrap(),
    ];
    let (p, _) = triangulate(&rays).unwrap();
    let corr: Vec<Correspondence> = (0..8)
        .map(|_| Correspondence {
            drop_a: 0,
            pixel_a: pix[0],
            drop_b: 1,
            pixel_b: pix[1],
            score: 1.0,
        })
        .collect();
    let img = RasterGray::filled(w, h, 0.5);
    let res = depth_from_drops(&img, &[a, b], &config, Some(&corr)).unwrap();
    assert_eq!(res.points.len(), 8);
    assert!((res.points[0] - p).norm() < 1e-6);
}

fn unit(v: [f64; 3]) -> Option<Vec3> {
    let v = Vec3::from(v);
    (v.norm() > 0.1).then(|| v.normalize())
}

proptest! {
    #[test]
    fn rays_through_one_point_recover_it(
        q in prop::array::uniform3(-100.0..100.0f64),
        dirs in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 2..6),
        ts in prop::collection::vec(-50.0..50.0f64, 6),
    ) {
        let q = Vec3::from(q);
        let rays: Vec<Ray> = dirs.iter().zip(&ts).filter_map(|(d, &t)| {
            let d = unit(*d)?;
            Ray::new(q + d * t, d).ok()
        }).collect();
        prop_assume!(rays.len() >= 2);
        match triangulate(&rays) {
            Ok((p, res)) => {
                prop_assert!((p - q).norm() <= 1e-9 * (1.0 + q.norm()));
                prop_assert!(res <= 1e-12 * (1.0 + q.norm_squared()));
            }
            Err(Error::DegenerateGeometry { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn translation_moves_the_point(
        o in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 3),
        d in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 3),
        t in prop::array::uniform3(-100.0..100.0f64),
    ) {
        let t = Vec3::from(t);
        let mk = |shift: Vec3| -> Vec<Ray> {
            o.iter().zip(&d).filter_map(|(o, d)| Ray::new(Vec3::from(*o) + shift, unit(*d)?).ok()).collect()
        };
        let (base, moved) = (mk(Vec3::zeros()), mk(t));
        prop_assume!(base.len() >= 2);
        if let (Ok((p, _)), Ok((p2, _))) = (triangulate(&base), triangulate(&moved)) {
            prop_assert!((p2 - p - t).norm() <= 1e-8 * (1.0 + p.norm() + t.norm()));
        }
    }

    #[test]
    fn a_ray_through_the_solution_does_not_raise_the_residual(
        o in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 3),
        d in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 4),
    ) {
        let rays: Vec<Ray> = o.iter().zip(&d).filter_map(|(o, d)| Ray::new(Vec3::from(*o), unit(*d)?).ok()).collect();
        prop_assume!(rays.len() >= 2);
        let Ok((p, res)) = triangulate(&rays) else { return Ok(()); };
        let Some(extra) = unit(d[3]) else { return Ok(()); };
        let mut more = rays.clone();
        more.push(Ray::new(p - extra * 3.0, extra).unwrap());
        if let Ok((_, res2)) = triangulate(&more) {
            prop_assert!(res2 <= res * (1.0 + 1e-9) + 1e-12);
        }
    }
}
