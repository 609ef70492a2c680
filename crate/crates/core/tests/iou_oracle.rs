//! Polygon overlap against Monte-Carlo estimates and a pixel-count oracle.

use obdkit::geom::{intersection_area, iou, rotate, Point, Quad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Crossing-number point-in-polygon test, independent of the library's
/// orientation and clipping code.
fn inside(q: &Quad, p: Point) -> bool {
    let v = q.vertices();
    let mut c = false;
    for i in 0..4 {
        let (a, b) = (v[i], v[(i + 1) % 4]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                c = !c;
            }
        }
    }
    c
}

fn monte_carlo_iou(a: &Quad, b: &Quad, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let ra = a.bounding_rect();
    let rb = b.bounding_rect();
    let (x0, y0) = (ra.x_min.min(rb.x_min), ra.y_min.min(rb.y_min));
    let (x1, y1) = (ra.x_max.max(rb.x_max), ra.y_max.max(rb.y_max));
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let p = Point::new(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let (ia, ib) = (inside(a, p), inside(b, p));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

fn random_quad(rng: &mut ChaCha8Rng, centre: Point) -> Quad {
    let pts = std::array::from_fn(|k| {
        let a = k as f64 * std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.6..0.6);
        let r = rng.gen_range(10.0..40.0);
        Point::new(centre.x + r * a.cos(), centre.y + r * a.sin())
    });
    Quad::new(pts).unwrap()
}

#[test]
fn iou_matches_monte_carlo_within_one_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 12 {
        let a = random_quad(&mut rng, Point::new(50.0, 50.0));
        let c = Point::new(rng.gen_range(35.0..65.0), rng.gen_range(35.0..65.0));
        let b = random_quad(&mut rng, c);
        let exact = iou(&a, &b);
        if exact < 0.05 {
            continue;
        }
        let est = monte_carlo_iou(&a, &b, 1_000_000, &mut rng);
        assert!((exact - est).abs() < 0.01, "exact {exact} vs sampled {est}");
        checked += 1;
    }
}

#[test]
fn concave_overlap_matches_pixel_count() {
    // concave dart and a rotated square, integrated on a fine lattice
    let dart = Quad::from_coords([0., 0., 40., 20., 0., 40., 12., 20.]).unwrap();
    let sq = Quad::from_coords([5., 5., 35., 5., 35., 35., 5., 35.]).unwrap();
    let sq = rotate(&sq, Point::new(20.0, 20.0), 0.3);
    let h = 0.02;
    let mut count = 0usize;
    let steps = (50.0 / h) as usize;
    for i in 0..steps {
        for j in 0..steps {
            let p = Point::new(-5.0 + (i as f64 + 0.5) * h, -5.0 + (j as f64 + 0.5) * h);
            if inside(&dart, p) && inside(&sq, p) {
                count += 1;
            }
        }
    }
    let lattice = count as f64 * h * h;
    let exact = intersection_area(&dart, &sq);
    assert!((lattice - exact).abs() / exact < 5e-3, "{lattice} vs {exact}");
}
