//! Closed-form region descriptors derived from a [`DescriptorAccumulator`]:
//! intensity statistics, central and normalized moments, Hu invariants, and
//! the moment-equivalent ellipse.
//!
//! A pixel `(x, y)` contributes at exactly `(x, y)`. Central moments are
//! evaluated from the raw sums in exact integer arithmetic (scaled by
//! `n^(p+q)`) and only converted to floating point at the end, so the
//! result does not depend on how the region's pixels were grouped.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::mser::DescriptorAccumulator;

/// Central moments `mu_pq = sum (x - xc)^p (y - yc)^q`; `mu10 = mu01 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentralMoments {
    pub mu00: f64,
    pub mu11: f64,
    pub mu20: f64,
    pub mu02: f64,
    pub mu30: f64,
    pub mu21: f64,
    pub mu12: f64,
    pub mu03: f64,
}

/// Scale-normalized moments `nu_pq = mu_pq / mu00^((p+q+2)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizedMoments {
    pub nu11: f64,
    pub nu20: f64,
    pub nu02: f64,
    pub nu30: f64,
    pub nu21: f64,
    pub nu12: f64,
    pub nu03: f64,
}

/// Ellipse with the same zeroth to second order moments as the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Orientation of the major axis in `(-pi/2, pi/2]`, measured from the x
    /// axis towards the y axis (image y points down).
    pub theta: f64,
    /// Semi-minor axis.
    pub h: f64,
    /// Semi-major axis.
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionDescriptors {
    pub mean: f64,
    pub variance: f64,
    pub centroid: [f64; 2],
    pub central: CentralMoments,
    pub normalized: NormalizedMoments,
    pub hu: [f64; 7],
    pub ellipse: Ellipse,
}

pub fn describe(acc: &DescriptorAccumulator) -> RegionDescriptors {
    let (mean, variance) = intensity_stats(acc);
    let central = central_moments(acc);
    let normalized = normalized_moments(&central);
    RegionDescriptors {
        mean,
        variance,
        centroid: centroid(acc),
        central,
        normalized,
        hu: hu_invariants(&normalized),
        ellipse: bounding_ellipse(acc),
    }
}

/// Mean and variance of the region's intensities.
///
/// Panics on an empty accumulator.
pub fn intensity_stats(acc: &DescriptorAccumulator) -> (f64, f64) {
    assert!(acc.n > 0, "empty region");
    let n = acc.n as f64;
    let mean = acc.s1 as f64 / n;
    // S2/n - mean^2, evaluated as (n S2 - S1^2) / n^2 without cancellation
    let num = acc.n as u128 * acc.s2 as u128 - acc.s1 as u128 * acc.s1 as u128;
    let variance = (num as f64 / (n * n)).max(0.0);
    (mean, variance)
}

/// Absolute centroid `(m10 / m00, m01 / m00)`.
pub fn centroid(acc: &DescriptorAccumulator) -> [f64; 2] {
    assert!(acc.n > 0, "empty region");
    let n = acc.n as f64;
    [
        acc.origin[0] as f64 + acc.moments.m10 as f64 / n,
        acc.origin[1] as f64 + acc.moments.m01 as f64 / n,
    ]
}

const BINOMIAL: [[i128; 4]; 4] = [[1, 0, 0, 0], [1, 1, 0, 0], [1, 2, 1, 0], [1, 3, 3, 1]];

/// `n^(p+q) * mu_pq`, exactly.
fn scaled_central(acc: &DescriptorAccumulator, p: u32, q: u32) -> i128 {
    let n = acc.n as i128;
    let a = acc.moments.m10 as i128;
    let b = acc.moments.m01 as i128;
    let mut sum = 0i128;
    for i in 0..=p {
        for j in 0..=q {
            let term = BINOMIAL[p as usize][i as usize]
                * BINOMIAL[q as usize][j as usize]
                * n.pow(i + j)
                * (-a).pow(p - i)
                * (-b).pow(q - j)
                * acc.moments.get(i, j) as i128;
            sum += term;
        }
    }
    sum
}

/// Panics on an empty accumulator.
pub fn central_moments(acc: &DescriptorAccumulator) -> CentralMoments {
    assert!(acc.n > 0, "empty region");
    let n = acc.n as f64;
    let mu = |p: u32, q: u32| scaled_central(acc, p, q) as f64 / n.powi((p + q) as i32);
    CentralMoments {
        mu00: n,
        mu11: mu(1, 1),
        mu20: mu(2, 0).max(0.0),
        mu02: mu(0, 2).max(0.0),
        mu30: mu(3, 0),
        mu21: mu(2, 1),
        mu12: mu(1, 2),
        mu03: mu(0, 3),
    }
}

/// `(mu20, mu11, mu02)` as in [`central_moments`], without the third order.
pub fn second_moments(acc: &DescriptorAccumulator) -> (f64, f64, f64) {
    assert!(acc.n > 0, "empty region");
    let n = acc.n as f64;
    let mu = |p: u32, q: u32| scaled_central(acc, p, q) as f64 / n.powi((p + q) as i32);
    (mu(2, 0).max(0.0), mu(1, 1), mu(0, 2).max(0.0))
}

/// First Hu invariant, equal to `hu_invariants(..)[0]` of the full chain.
pub fn hu1(acc: &DescriptorAccumulator) -> f64 {
    let (mu20, _, mu02) = second_moments(acc);
    let n = acc.n as f64;
    let second = n * n;
    mu20 / second + mu02 / second
}

pub fn normalized_moments(c: &CentralMoments) -> NormalizedMoments {
    let second = c.mu00 * c.mu00;
    let third = second * c.mu00.sqrt();
    NormalizedMoments {
        nu11: c.mu11 / second,
        nu20: c.mu20 / second,
        nu02: c.mu02 / second,
        nu30: c.mu30 / third,
        nu21: c.mu21 / third,
        nu12: c.mu12 / third,
        nu03: c.mu03 / third,
    }
}

/// The seven moment invariants `phi_1 .. phi_7` (translation, scale and
/// rotation invariant; `phi_7` flips sign under reflection).
pub fn hu_invariants(m: &NormalizedMoments) -> [f64; 7] {
    let NormalizedMoments {
        nu11,
        nu20,
        nu02,
        nu30,
        nu21,
        nu12,
        nu03,
    } = *m;
    let s = nu30 + nu12;
    let t = nu21 + nu03;
    let u = nu30 - 3.0 * nu12;
    let v = 3.0 * nu21 - nu03;
    let d = nu20 - nu02;
    [
        nu20 + nu02,
        d * d + 4.0 * nu11 * nu11,
        u * u + v * v,
        s * s + t * t,
        u * s * (s * s - 3.0 * t * t) + v * t * (3.0 * s * s - t * t),
        d * (s * s - t * t) + 4.0 * nu11 * s * t,
        v * s * (s * s - 3.0 * t * t) - u * t * (3.0 * s * s - t * t),
    ]
}

/// Ellipse from `a = mu20/m00`, `b = 2 mu11/m00`, `c = mu02/m00`:
/// `theta = atan2(b, a - c) / 2`, `h, w = sqrt(2 (a + c -/+ sqrt(b^2 + (a-c)^2)))`.
/// An isotropic region gets `theta = 0` and `h = w`.
pub fn bounding_ellipse(acc: &DescriptorAccumulator) -> Ellipse {
    let (mu20, mu11, mu02) = second_moments(acc);
    let n = acc.n as f64;
    let (a, b, cc) = (mu20 / n, 2.0 * mu11 / n, mu02 / n);
    // + 0.0 turns a negative zero into a positive one
    let b = b + 0.0;
    let mut theta = 0.5 * (b).atan2(a - cc);
    if theta <= -FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    let r = b.hypot(a - cc);
    Ellipse {
        center: centroid(acc),
        theta,
        h: (2.0 * (a + cc - r)).max(0.0).sqrt(),
        w: (2.0 * (a + cc + r)).max(0.0).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn acc_of(pixels: &[(usize, usize)]) -> DescriptorAccumulator {
        DescriptorAccumulator::from_pixels([0, 0], pixels.iter().map(|&(x, y)| (x, y, 100)))
    }

    /// Direct `sum (x - xc)^p (y - yc)^q` in floating point.
    fn direct_central(pixels: &[(usize, usize)], p: i32, q: i32) -> f64 {
        let n = pixels.len() as f64;
        let xc = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let yc = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        pixels
            .iter()
            .map(|&(x, y)| (x as f64 - xc).powi(p) * (y as f64 - yc).powi(q))
            .sum()
    }

    fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * scale.max(a.abs()).max(b.abs()).max(1e-300)
    }

    #[test]
    fn intensity_examples() {
        let a = DescriptorAccumulator::from_pixels([0, 0], [(0, 0, 10), (1, 0, 20), (2, 0, 30)]);
        let (m, v) = intensity_stats(&a);
        assert_eq!(m, 20.0);
        assert!((v - (1400.0 / 3.0 - 400.0)).abs() < 1e-12);
        let c = DescriptorAccumulator::from_pixels([0, 0], (0..9).map(|i| (i, 0, 77)));
        assert_eq!(intensity_stats(&c).1, 0.0);
    }

    #[test]
    fn variance_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<u8> = (0..1000).map(|_| rng.random()).collect();
        let acc = DescriptorAccumulator::from_pixels([0, 0], vals.iter().enumerate().map(|(i, &v)| (i % 40, i / 40, v)));
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / 1000.0;
        let var = vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 1000.0;
        let (m, v) = intensity_stats(&acc);
        assert!(close(m, mean, 0.0, 1e-9) && close(v, var, 0.0, 1e-9));
    }

    #[test]
    #[should_panic]
    fn empty_region_panics() {
        intensity_stats(&DescriptorAccumulator::new([0, 0]));
    }

    #[test]
    fn single_pixel_has_no_spread() {
        let c = central_moments(&acc_of(&[(5, 9)]));
        assert_eq!([c.mu11, c.mu20, c.mu02, c.mu30, c.mu21, c.mu12, c.mu03], [0.0; 7]);
    }

    fn square(cx: usize, cy: usize, r: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                v.push((x, y));
            }
        }
        v
    }

    #[test]
    fn symmetric_square() {
        let acc = acc_of(&square(10, 10, 2));
        let c = central_moments(&acc);
        assert_eq!((c.mu11, c.mu30, c.mu03, c.mu21, c.mu12), (0.0, 0.0, 0.0, 0.0, 0.0));
        let hu = hu_invariants(&normalized_moments(&c));
        assert!(hu[2..].iter().all(|&h| h == 0.0));
        assert!(hu[0] > 0.0);
    }

    fn random_blob(rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let cx = rng.random_range(20.0..40.0f64);
        let cy = rng.random_range(20.0..40.0f64);
        let (ax, ay) = (rng.random_range(3.0..12.0f64), rng.random_range(3.0..12.0f64));
        let rot: f64 = rng.random_range(0.0..3.2);
        let mut v = Vec::new();
        for y in 0..60 {
            for x in 0..60 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let (u, w) = (dx * rot.cos() + dy * rot.sin(), -dx * rot.sin() + dy * rot.cos());
                // lumpy ellipse so odd moments are nonzero
                let lump = 1.0 + 0.3 * (3.0 * w.atan2(u)).sin();
                if (u / ax).powi(2) + (w / ay).powi(2) <= lump && rng.random::<f64>() > 0.05 {
                    v.push((x, y));
                }
            }
        }
        if v.is_empty() {
            v.push((30, 30));
        }
        v
    }

    #[test]
    fn central_moments_match_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let px = random_blob(&mut rng);
            let c = central_moments(&acc_of(&px));
            let scale2 = direct_central(&px, 2, 0) + direct_central(&px, 0, 2);
            let scale3 = scale2.powf(1.5) / (px.len() as f64).sqrt();
            for (got, p, q, scale) in [
                (c.mu11, 1, 1, scale2),
                (c.mu20, 2, 0, scale2),
                (c.mu02, 0, 2, scale2),
                (c.mu30, 3, 0, scale3),
                (c.mu21, 2, 1, scale3),
                (c.mu12, 1, 2, scale3),
                (c.mu03, 0, 3, scale3),
            ] {
                assert!(close(got, direct_central(&px, p, q), scale, 1e-9), "mu{p}{q}");
            }
        }
    }

    fn hu_of(px: &[(usize, usize)]) -> [f64; 7] {
        hu_invariants(&normalized_moments(&central_moments(&acc_of(px))))
    }

    fn hu_close(a: &[f64; 7], b: &[f64; 7], tol: f64) -> bool {
        // third-order invariants are compared against the natural magnitude
        // of their order
        let s2 = a[0].abs();
        let scales = [s2, s2 * s2, s2.powi(3), s2.powi(3), s2.powi(6), s2.powi(4), s2.powi(6)];
        a.iter().zip(b).zip(scales).all(|((x, y), s)| close(*x, *y, s, tol))
    }

    #[test]
    fn hu_translation_and_quarter_turn() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let px = random_blob(&mut rng);
            let moved: Vec<_> = px.iter().map(|&(x, y)| (x + 7, y + 13)).collect();
            let turned: Vec<_> = px.iter().map(|&(x, y)| (100 - y, x)).collect();
            let h = hu_of(&px);
            assert!(hu_close(&h, &hu_of(&moved), 1e-9));
            assert!(hu_close(&h, &hu_of(&turned), 1e-9));
            let mirrored: Vec<_> = px.iter().map(|&(x, y)| (100 - x, y)).collect();
            let hm = hu_of(&mirrored);
            assert!(close(hm[6], -h[6], s6(&h), 1e-9));
        }
    }

    fn s6(h: &[f64; 7]) -> f64 {
        h[0].abs().powi(6)
    }

    fn disc(cx: f64, cy: f64, r: f64) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in 0..(cy + r + 2.0) as usize {
            for x in 0..(cx + r + 2.0) as usize {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    v.push((x, y));
                }
            }
        }
        v
    }

    #[test]
    fn disc_ellipse() {
        let e = bounding_ellipse(&acc_of(&disc(30.0, 30.0, 20.0)));
        assert!((e.h - 20.0).abs() / 20.0 < 0.02, "h = {}", e.h);
        assert!((e.w - 20.0).abs() / 20.0 < 0.02, "w = {}", e.w);
        assert_eq!(e.center, [30.0, 30.0]);
    }

    #[test]
    fn isotropic_square_has_zero_angle() {
        let e = bounding_ellipse(&acc_of(&square(10, 10, 3)));
        assert_eq!(e.theta, 0.0);
        assert_eq!(e.h, e.w);
    }

    #[test]
    fn horizontal_strip() {
        let strip: Vec<_> = (0..21).map(|x| (x, 4)).collect();
        let e = bounding_ellipse(&acc_of(&strip));
        assert_eq!(e.theta, 0.0);
        assert!(e.w > e.h);
        let column: Vec<_> = (0..21).map(|y| (4, y)).collect();
        let e = bounding_ellipse(&acc_of(&column));
        assert!((e.theta - FRAC_PI_2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ellipse_round_trips_second_moments(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let px = random_blob(&mut rng);
            prop_assume!(px.len() > 3);
            let acc = acc_of(&px);
            let e = bounding_ellipse(&acc);
            prop_assert!(e.w >= e.h && e.h >= 0.0);
            prop_assert!(e.theta > -FRAC_PI_2 && e.theta <= FRAC_PI_2);
            let c = central_moments(&acc);
            let n = c.mu00;
            let (a, b, cc) = (c.mu20 / n, 2.0 * c.mu11 / n, c.mu02 / n);
            let sum = (e.w * e.w + e.h * e.h) / 4.0;
            let r = (e.w * e.w - e.h * e.h) / 4.0;
            let (a2, b2, c2) = ((sum + r * (2.0 * e.theta).cos()) / 2.0, r * (2.0 * e.theta).sin(), (sum - r * (2.0 * e.theta).cos()) / 2.0);
            let scale = a + cc;
            prop_assert!(close(a, a2, scale, 1e-6) && close(b, b2, scale, 1e-6) && close(cc, c2, scale, 1e-6));
            let nm = normalized_moments(&c);
            prop_assert_eq!(second_moments(&acc), (c.mu20, c.mu11, c.mu02));
            prop_assert_eq!(hu1(&acc).to_bits(), hu_invariants(&nm)[0].to_bits());
            if px.len() >= 3 {
                prop_assert!(hu_invariants(&nm)[0] > 0.0);
            }
        }
    }
}
