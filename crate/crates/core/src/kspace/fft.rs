//! Centered, unitary 2D Fourier transforms.
//!
//! `fft2_centered = fftshift ∘ FFT ∘ ifftshift / √N`, so the DC coefficient
//! sits at `(height/2, width/2)` and Parseval holds exactly.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::image::{ComplexImage, KSpace};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

pub fn fft2_centered(img: &ComplexImage) -> KSpace {
    let (w, h) = img.shape();
    let mut values = img.values().to_vec();
    centered_in_place(&mut values, w, h, true);
    KSpace::from_raw(w, h, values)
}

pub fn ifft2_centered(k: &KSpace) -> ComplexImage {
    let (w, h) = k.shape();
    let mut values = k.values().to_vec();
    centered_in_place(&mut values, w, h, false);
    ComplexImage::from_raw(w, h, values)
}

/// Centered unitary transform on a raw row-major buffer.
pub(crate) fn centered_in_place(values: &mut Vec<Complex64>, w: usize, h: usize, forward: bool) {
    let dir = if forward {
        Direction::Forward
    } else {
        Direction::Inverse
    };
    centered_in_place_dir(values, w, h, dir);
}

fn centered_in_place_dir(values: &mut Vec<Complex64>, w: usize, h: usize, dir: Direction) {
    // ifftshift: roll by -floor(n/2)  (== +ceil(n/2))
    let rolled = roll(values, w, h, h - h / 2, w - w / 2);
    *values = rolled;
    fft2_in_place(values, w, h, dir);
    let rolled = roll(values, w, h, h / 2, w / 2);
    *values = rolled;
    let scale = 1.0 / ((w * h) as f64).sqrt();
    for v in values.iter_mut() {
        *v *= scale;
    }
}

/// `out[(r + dr) % h][(c + dc) % w] = in[r][c]`
fn roll(values: &[Complex64], w: usize, h: usize, dr: usize, dc: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for r in 0..h {
        let dst_r = (r + dr) % h;
        let src = &values[r * w..(r + 1) * w];
        let dst = &mut out[dst_r * w..(dst_r + 1) * w];
        dst[dc..].copy_from_slice(&src[..w - dc]);
        dst[..dc].copy_from_slice(&src[w - dc..]);
    }
    out
}

fn fft2_in_place(values: &mut [Complex64], w: usize, h: usize, dir: Direction) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = match dir {
            Direction::Forward => (planner.plan_fft_forward(w), planner.plan_fft_forward(h)),
            Direction::Inverse => (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h)),
        };
        drop(planner);

        row_fft.process(values);

        let mut transposed = vec![Complex64::new(0.0, 0.0); values.len()];
        for r in 0..h {
            for c in 0..w {
                transposed[c * h + r] = values[r * w + c];
            }
        }
        col_fft.process(&mut transposed);
        for c in 0..w {
            for r in 0..h {
                values[r * w + c] = transposed[c * h + r];
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    fn random_image(w: usize, h: usize, seed: u64) -> ComplexImage {
        let mut r = rng::seeded(seed);
        ComplexImage::from_fn(w, h, |_, _| {
            Complex64::new(rng::standard_normal(&mut r), rng::standard_normal(&mut r))
        })
        .unwrap()
    }

    /// Direct O(N²) centered unitary DFT.
    fn naive_centered_dft(img: &ComplexImage) -> Vec<Complex64> {
        let (w, h) = img.shape();
        let (cw, ch) = ((w / 2) as f64, (h / 2) as f64);
        let scale = 1.0 / ((w * h) as f64).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for kr in 0..h {
            for kc in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let phase = -2.0
                            * PI
                            * ((kr as f64 - ch) * (r as f64 - ch) / h as f64
                                + (kc as f64 - cw) * (c as f64 - cw) / w as f64);
                        acc += img.get(r, c) * Complex64::from_polar(1.0, phase);
                    }
                }
                out[kr * w + kc] = acc * scale;
            }
        }
        out
    }

    #[test]
    fn constant_image_maps_to_centered_delta() {
        let c = 2.5;
        let img = ComplexImage::from_fn(6, 4, |_, _| Complex64::new(c, 0.0)).unwrap();
        let k = fft2_centered(&img);
        let center = 2 * 6 + 3;
        for (i, v) in k.values().iter().enumerate() {
            if i == center {
                assert!((v.norm() - c * (24f64).sqrt()).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "leak at {i}: {v}");
            }
        }
    }

    #[test]
    fn impulse_4x4_has_flat_quarter_spectrum() {
        let mut img = ComplexImage::zeros(4, 4).unwrap();
        img.values_mut()[5] = Complex64::new(1.0, 0.0);
        let k = fft2_centered(&img);
        let oracle = naive_centered_dft(&img);
        for (v, o) in k.values().iter().zip(&oracle) {
            assert!((v.norm() - 0.25).abs() < 1e-12);
            assert!((v - o).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_dft_on_odd_shapes() {
        for (w, h) in [(5, 3), (4, 7), (1, 6)] {
            let img = random_image(w, h, 11);
            let k = fft2_centered(&img);
            for (v, o) in k.values().iter().zip(naive_centered_dft(&img)) {
                assert!((v - o).norm() < 1e-10, "{w}x{h}");
            }
            let back = ifft2_centered(&k);
            assert!(back.distance_sqr(&img).unwrap().sqrt() < 1e-12 * img.norm().max(1.0));
        }
    }

    #[test]
    fn round_trip_32x32() {
        let img = random_image(32, 32, 3);
        let back = ifft2_centered(&fft2_centered(&img));
        let rel = back.distance_sqr(&img).unwrap().sqrt() / img.norm();
        assert!(rel < 1e-10, "rel err {rel}");
    }

    #[test]
    fn zero_spectrum_gives_zero_image() {
        let k = KSpace::zeros(8, 8).unwrap();
        assert_eq!(ifft2_centered(&k).norm(), 0.0);
    }

    #[test]
    fn adjoint_identity() {
        let x = random_image(12, 10, 4);
        let y_img = random_image(12, 10, 5);
        let y = KSpace::new(12, 10, y_img.values().to_vec()).unwrap();
        let lhs = fft2_centered(&x).inner(&y);
        let rhs = x.inner(&ifft2_centered(&y));
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-10);
    }
}
