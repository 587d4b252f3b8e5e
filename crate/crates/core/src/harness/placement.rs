//! User drops.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Homogeneous PPP on the square `[-L/2, L/2]^2`. The count is
/// Poisson(`lambda * L^2`), truncated at `cap` and floored at one user.
pub fn place_users_indoor<R: Rng + ?Sized>(
    lambda: f64,
    room_m: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    if !(lambda > 0.0) || !(room_m > 0.0) || !lambda.is_finite() || !room_m.is_finite() {
        return Err(Error::invalid("PPP intensity and room size must be positive"));
    }
    if cap == 0 {
        return Err(Error::invalid("user cap must be at least 1"));
    }
    let mean = lambda * room_m * room_m;
    let poisson = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
    let n = (poisson.sample(rng) as usize).clamp(1, cap);
    let half = room_m / 2.0;
    Ok((0..n)
        .map(|_| [rng.random_range(-half..half), rng.random_range(-half..half)])
        .collect())
}

/// `q` users uniform by area in the sector of half-width `half_width_deg`
/// around `boresight_deg`, at ranges `[r_min, r_max]`.
pub fn place_users_sector<R: Rng + ?Sized>(
    q: usize,
    boresight_deg: f64,
    half_width_deg: f64,
    r_min: f64,
    r_max: f64,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    if q == 0 || !(r_min > 0.0) || !(r_max > r_min) || !(half_width_deg > 0.0) {
        return Err(Error::invalid("sector drop needs q >= 1 and 0 < r_min < r_max"));
    }
    Ok((0..q)
        .map(|_| {
            let r = rng.random_range(r_min * r_min..r_max * r_max).sqrt();
            let a = (boresight_deg + rng.random_range(-half_width_deg..half_width_deg)).to_radians();
            [r * a.cos(), r * a.sin()]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_intensity_always_hits_the_cap() {
        // Poisson(50) falls below 10 with probability ~1e-13.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert_eq!(place_users_indoor(0.5, 10.0, 10, &mut rng).unwrap().len(), 10);
        }
    }

    #[test]
    fn cap_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(place_users_indoor(0.5, 10.0, 1, &mut rng).unwrap().len(), 1);
        }
    }

    #[test]
    fn sparse_intensity_floors_at_one_and_tracks_the_mean() {
        // lambda * L^2 = 2: untruncated mean 2, the floor adds P(N = 0) = e^-2.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let total: usize = (0..n)
            .map(|_| place_users_indoor(0.02, 10.0, 100, &mut rng).unwrap().len())
            .sum();
        let mean = total as f64 / n as f64;
        let expected = 2.0 + (-2.0f64).exp();
        assert!((mean - expected).abs() < 0.04, "{mean}");
    }

    #[test]
    fn positions_centre_on_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sum = [0.0; 2];
        let mut count = 0usize;
        while count < 100_000 {
            for p in place_users_indoor(0.5, 10.0, 10, &mut rng).unwrap() {
                assert!(p[0].abs() <= 5.0 && p[1].abs() <= 5.0);
                sum[0] += p[0];
                sum[1] += p[1];
                count += 1;
            }
        }
        // Uniform on [-5, 5]: sd 10/sqrt(12); 4 standard errors.
        let se = 10.0 / 12f64.sqrt() / (count as f64).sqrt();
        assert!((sum[0] / count as f64).abs() < 4.0 * se);
        assert!((sum[1] / count as f64).abs() < 4.0 * se);
    }

    #[test]
    fn sector_drop_stays_in_sector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in place_users_sector(500, 0.0, 60.0, 10.0, 115.0, &mut rng).unwrap() {
            let r = p[0].hypot(p[1]);
            assert!((10.0..=115.0).contains(&r));
            assert!(p[1].atan2(p[0]).to_degrees().abs() <= 60.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(place_users_indoor(0.0, 10.0, 10, &mut rng).is_err());
        assert!(place_users_indoor(0.5, -1.0, 10, &mut rng).is_err());
        assert!(place_users_sector(0, 0.0, 60.0, 10.0, 100.0, &mut rng).is_err());
    }
}
