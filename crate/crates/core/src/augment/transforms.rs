use super::{AugmentError, Image};
use crate::scalar::Scalar;

/// Rec.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Out-of-bounds slack for rotation sources, in pixels.
const EDGE_SLACK: f64 = 1e-9;

/// Bilinear sample at continuous coordinates already inside
/// `[0, w−1] × [0, h−1]`. Lerp form, so constant neighbourhoods are
/// reproduced exactly.
fn sample<T: Scalar>(img: &Image<T>, sx: f64, sy: f64, c: usize) -> T {
    let (w, h) = (img.width(), img.height());
    let x0 = (sx.floor() as usize).min(w - 1);
    let y0 = (sy.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let dx = T::of(sx - x0 as f64);
    let dy = T::of(sy - y0 as f64);
    let top = img.get(x0, y0, c) + (img.get(x1, y0, c) - img.get(x0, y0, c)) * dx;
    let bottom = img.get(x0, y1, c) + (img.get(x1, y1, c) - img.get(x0, y1, c)) * dx;
    top + (bottom - top) * dy
}

/// Bilinear resize with half-pixel centres: output pixel `x` samples the
/// source at `(x + 0.5)·w_in/w_out − 0.5`, clamped to the image.
pub fn resize_bilinear<T: Scalar>(
    img: &Image<T>,
    width: usize,
    height: usize,
) -> Result<Image<T>, AugmentError> {
    if width == 0 || height == 0 {
        return Err(AugmentError::InvalidImage(format!(
            "target size {width}x{height}"
        )));
    }
    let sx_scale = img.width() as f64 / width as f64;
    let sy_scale = img.height() as f64 / height as f64;
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    Image::from_fn(width, height, img.channels(), |x, y, c| {
        let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, max_x);
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, max_y);
        sample(img, sx, sy, c)
    })
}

pub fn greyscale<T: Scalar>(img: &Image<T>) -> Result<Image<T>, AugmentError> {
    if img.channels() != 3 {
        return Err(AugmentError::NotRgb(img.channels()));
    }
    let [wr, wg, wb] = LUMA.map(T::of);
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| wr * px[0] + wg * px[1] + wb * px[2])
        .collect();
    Image::new(img.width(), img.height(), 1, data)
}

/// `(x − mean_c) / std_c`. A single mean/std value applies to every channel.
pub fn normalize<T: Scalar>(
    img: &Image<T>,
    mean: &[T],
    std: &[T],
) -> Result<Image<T>, AugmentError> {
    let ch = img.channels();
    let expand = |v: &[T]| -> Result<Vec<T>, AugmentError> {
        match v.len() {
            1 => Ok(vec![v[0]; ch]),
            n if n == ch => Ok(v.to_vec()),
            n => Err(AugmentError::ChannelCount {
                expected: ch,
                got: n,
            }),
        }
    };
    let mean = expand(mean)?;
    let std = expand(std)?;
    if let Some(c) = std.iter().position(|&s| s.is_nan() || s <= T::zero()) {
        return Err(AugmentError::NonPositiveStd(c));
    }
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - mean[i % ch]) / std[i % ch])
        .collect();
    Image::new(img.width(), img.height(), ch, data)
}

pub fn flip_h<T: Scalar>(img: &Image<T>) -> Image<T> {
    let w = img.width();
    Image::from_fn(w, img.height(), img.channels(), |x, y, c| {
        img.get(w - 1 - x, y, c)
    })
    .expect("same shape")
}

pub fn flip_v<T: Scalar>(img: &Image<T>) -> Image<T> {
    let h = img.height();
    Image::from_fn(img.width(), h, img.channels(), |x, y, c| {
        img.get(x, h - 1 - y, c)
    })
    .expect("same shape")
}

/// Counter-clockwise rotation (as displayed, y pointing down) about the
/// image centre with bilinear resampling; uncovered pixels take `fill`.
pub fn rotate<T: Scalar>(img: &Image<T>, degrees: f64, fill: T) -> Image<T> {
    rotate_with_fill(img, degrees, &vec![fill; img.channels()])
}

/// [`rotate`] with a per-channel fill value.
pub fn rotate_with_fill<T: Scalar>(img: &Image<T>, degrees: f64, fill: &[T]) -> Image<T> {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    Image::from_fn(w, h, img.channels(), |x, y, c| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        let inside = sx >= -EDGE_SLACK
            && sx <= max_x + EDGE_SLACK
            && sy >= -EDGE_SLACK
            && sy <= max_y + EDGE_SLACK;
        if inside {
            sample(img, sx.clamp(0.0, max_x), sy.clamp(0.0, max_y), c)
        } else {
            fill[c]
        }
    })
    .expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, c: usize, data: &[f64]) -> Image<f64> {
        Image::new(w, h, c, data.to_vec()).unwrap()
    }

    #[test]
    fn resize_constant_and_identity() {
        let k = Image::filled(37, 19, 3, 0.3_f64).unwrap();
        let r = resize_bilinear(&k, 224, 224).unwrap();
        assert_eq!((r.width(), r.height(), r.channels()), (224, 224, 3));
        assert!(r.data().iter().all(|&v| v == 0.3));
        let g = Image::from_fn(5, 4, 1, |x, y, _| (x * 7 + y * 3) as f64 / 50.0).unwrap();
        assert_eq!(resize_bilinear(&g, 5, 4).unwrap(), g);
    }

    #[test]
    fn checkerboard_upsample_matches_hand_weights() {
        let cb = img(2, 2, 1, &[0.0, 1.0, 1.0, 0.0]);
        let r = resize_bilinear(&cb, 4, 4).unwrap();
        // Source coordinates per output index: clamp((i + 0.5)/2 − 0.5) =
        // 0, 0.25, 0.75, 1. With f(u,v) = u + v − 2uv on the unit square:
        let coord = [0.0, 0.25, 0.75, 1.0];
        for (y, &v) in coord.iter().enumerate() {
            for (x, &u) in coord.iter().enumerate() {
                let expected: f64 = u + v - 2.0 * u * v;
                assert!((r.get(x, y, 0) - expected).abs() < 1e-15, "({x},{y})");
            }
        }
        assert!((r.get(1, 1, 0) - 0.375).abs() < 1e-15);
        assert!((r.get(2, 1, 0) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn greyscale_weights() {
        let g = greyscale(&img(2, 1, 3, &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0])).unwrap();
        assert!((g.get(0, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(g.get(1, 0, 0), 0.299);
        assert!(matches!(greyscale(&g), Err(AugmentError::NotRgb(1))));
    }

    #[test]
    fn normalize_cases() {
        let a = Image::from_fn(4, 3, 3, |x, y, c| (x + y + c) as f64 / 10.0).unwrap();
        assert_eq!(normalize(&a, &[0.0], &[1.0]).unwrap(), a);
        let k = Image::filled(3, 3, 1, 0.5).unwrap();
        assert!(normalize(&k, &[0.5], &[0.2])
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let mean = [0.1, 0.2, 0.3];
        let std = [0.5, 0.25, 2.0];
        let n = normalize(&a, &mean, &std).unwrap();
        for (i, (&orig, &z)) in a.data().iter().zip(n.data()).enumerate() {
            assert!((z * std[i % 3] + mean[i % 3] - orig).abs() < 1e-12);
        }
        assert!(matches!(
            normalize(&a, &[0.5], &[0.0]),
            Err(AugmentError::NonPositiveStd(0))
        ));
        assert!(matches!(
            normalize(&a, &[0.5, 0.5], &[1.0]),
            Err(AugmentError::ChannelCount { .. })
        ));
    }

    #[test]
    fn flip_examples() {
        let a = img(2, 1, 1, &[0.1, 0.9]);
        assert_eq!(flip_h(&a).data(), &[0.9, 0.1]);
        let b = Image::from_fn(3, 2, 3, |x, y, c| (x * 10 + y * 100 + c) as f64 / 1000.0).unwrap();
        assert_eq!(flip_h(&flip_v(&b)), flip_v(&flip_h(&b)));
        // Both flips equal a 180° rotation (exact on half-integer centres).
        let r = rotate(&b, 180.0, 0.0);
        let hv = flip_h(&flip_v(&b));
        for (p, q) in r.data().iter().zip(hv.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_zero_and_full_turn() {
        let a =
            Image::from_fn(9, 7, 3, |x, y, c| ((x * 3 + y * 5 + c) % 11) as f64 / 10.0).unwrap();
        let r0 = rotate(&a, 0.0, 0.0);
        for (p, q) in r0.data().iter().zip(a.data()) {
            assert!((p - q).abs() <= 1e-12);
        }
        let r360 = rotate(&a, 360.0, 0.0);
        for y in 1..6 {
            for x in 1..8 {
                for c in 0..3 {
                    assert!((r360.get(x, y, c) - a.get(x, y, c)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rotate_quarter_turn_moves_corners() {
        let mut data = vec![0.0; 9];
        data[2] = 1.0; // top-right (x=2, y=0)
        let a = img(3, 3, 1, &data);
        let r = rotate(&a, 90.0, 0.0);
        // Counter-clockwise on screen: top-right goes to top-left.
        assert!((r.get(0, 0, 0) - 1.0).abs() < 1e-12);
        assert!((r.data().iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radially_symmetric_image_is_rotation_invariant() {
        let n = 101;
        let c = (n - 1) as f64 / 2.0;
        let disk = Image::from_fn(n, n, 1, |x, y, _| {
            let r2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            (-r2 / (2.0 * 20.0 * 20.0)).exp()
        })
        .unwrap();
        let r = rotate(&disk, 45.0, 0.0);
        let mut worst: f64 = 0.0;
        for y in 0..n {
            for x in 0..n {
                let rad = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if rad < c - 1.0 {
                    worst = worst.max((r.get(x, y, 0) - disk.get(x, y, 0)).abs());
                }
            }
        }
        assert!(worst < 1e-3, "max deviation {worst}");
    }

    #[test]
    fn rotate_fill_covers_corners() {
        let a = Image::filled(11, 11, 1, 1.0).unwrap();
        let r = rotate(&a, 45.0, 0.25);
        assert_eq!(r.get(0, 0, 0), 0.25);
        assert_eq!(r.get(5, 5, 0), 1.0);
    }

    fn smooth_image() -> impl Strategy<Value = Image<f64>> {
        (
            proptest::collection::vec((-1.0f64..1.0, 0.02f64..0.15, 0.02f64..0.15, 0.0f64..6.3), 3),
            16usize..40,
            16usize..40,
        )
            .prop_map(|(waves, w, h)| {
                Image::from_fn(w, h, 1, |x, y, _| {
                    let s: f64 = waves
                        .iter()
                        .map(|&(a, fx, fy, ph)| a * (fx * x as f64 + fy * y as f64 + ph).sin())
                        .sum();
                    0.5 + s / 6.0
                })
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn flips_are_commuting_involutions(w in 1usize..12, h in 1usize..12, seed in 0u64..1000) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let a = Image::from_fn(w, h, 3, |_, _, _| rng.next_f64()).unwrap();
            prop_assert_eq!(flip_h(&flip_h(&a)), a.clone());
            prop_assert_eq!(flip_v(&flip_v(&a)), a.clone());
            prop_assert_eq!(flip_h(&flip_v(&a)), flip_v(&flip_h(&a)));
        }

        #[test]
        fn greyscale_is_a_convex_combination(seed in 0u64..1000) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let a = Image::from_fn(6, 5, 3, |_, _, _| rng.next_f64()).unwrap();
            let g = greyscale(&a).unwrap();
            for (px, &y) in a.data().chunks_exact(3).zip(g.data()) {
                let lo = px.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }

        #[test]
        fn resize_of_constant_is_constant(v in 0.0f64..=1.0, w in 1usize..30, h in 1usize..30, tw in 1usize..60, th in 1usize..60) {
            let k = Image::filled(w, h, 1, v).unwrap();
            let r = resize_bilinear(&k, tw, th).unwrap();
            prop_assert!(r.data().iter().all(|&x| x == v));
        }

        #[test]
        fn inverse_rotation_recovers_interior(img in smooth_image(), deg in -45.0f64..45.0) {
            let back = rotate(&rotate(&img, deg, 0.0), -deg, 0.0);
            let (w, h) = (img.width(), img.height());
            let cx = (w as f64 - 1.0) / 2.0;
            let cy = (h as f64 - 1.0) / 2.0;
            // Pixels within the inscribed circle (less a one-pixel margin)
            // keep in-bounds pre-images under both rotations.
            let radius = cx.min(cy) - 1.0;
            for y in 0..h {
                for x in 0..w {
                    let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    if r <= radius {
                        prop_assert!((back.get(x, y, 0) - img.get(x, y, 0)).abs() < 5e-2);
                    }
                }
            }
        }
    }
}
