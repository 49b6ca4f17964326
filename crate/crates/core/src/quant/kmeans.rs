use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::codebook::nearest_codes;

/// Lloyd's k-means with k-means++ seeding over row-major `points` of width
/// `dim`. When there are fewer distinct points than `k`, the surplus centroids
/// are jittered copies of sampled points. Returns `k x dim` centroids.
pub fn kmeans(
    points: &[f64],
    dim: usize,
    k: usize,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = points.len() / dim;
    assert!(n > 0, "k-means needs at least one point");
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq(row(i), row(first))).collect();
    let scale = points.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-6);
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in best.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let mut c = row(pick).to_vec();
        if total <= 0.0 {
            for v in &mut c {
                *v += 1e-3 * scale * (rng.random::<f64>() - 0.5);
            }
        }
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq(row(i), &c));
        }
        centroids.extend(c);
    }

    let mut assign = vec![u32::MAX; n];
    for _ in 0..max_iters {
        let next = nearest_codes(points, &centroids, dim);
        if next == assign {
            break;
        }
        assign = next;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, v) in sums[c as usize * dim..(c as usize + 1) * dim]
                .iter_mut()
                .zip(row(i))
            {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    centroids
}

/// Mean squared distance from each point to its nearest centroid.
pub fn inertia(points: &[f64], centroids: &[f64], dim: usize) -> f64 {
    let codes = nearest_codes(points, centroids, dim);
    let n = codes.len();
    codes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            points[i * dim..(i + 1) * dim]
                .iter()
                .zip(&centroids[c as usize * dim..(c as usize + 1) * dim])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pts = Vec::new();
        for i in 0..100 {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            pts.push(c + rng.random::<f64>() * 0.1);
            pts.push(c + rng.random::<f64>() * 0.1);
        }
        let cents = kmeans(&pts, 2, 2, 50, &mut rng);
        let mut xs = [cents[0], cents[2]];
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 4.95).abs() < 0.1 && (xs[1] - 5.05).abs() < 0.1);
        assert!(inertia(&pts, &cents, 2) < 0.01);
    }

    #[test]
    fn more_centroids_than_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = vec![1.0, 2.0, 3.0, 4.0];
        let cents = kmeans(&pts, 2, 5, 10, &mut rng);
        assert_eq!(cents.len(), 10);
        assert!(cents.iter().all(|v| v.is_finite()));
        assert_eq!(inertia(&pts, &cents, 2), 0.0);
    }
}
