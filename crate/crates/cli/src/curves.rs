//! Representative curves of a corpus: k-medoids over z-normalized curves.

/// Zero mean, unit population deviation; flat curves become all zeros.
pub fn z_normalize(curve: &[f64]) -> Vec<f64> {
    if curve.is_empty() {
        return Vec::new();
    }
    let n = curve.len() as f64;
    let mean = curve.iter().sum::<f64>() / n;
    let sd = (curve.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if sd > 0.0 && sd.is_finite() {
        curve.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; curve.len()]
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of `k` medoids of equal-length points under Euclidean distance,
/// in ascending order. Starts from the most central point, adds the farthest
/// remaining point until `k` are chosen, then alternates assignment and
/// medoid update until nothing changes. Ties go to the lower index.
pub fn k_medoids(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    if k == 0 || n == 0 {
        return Vec::new();
    }
    let k = k.min(n);
    let d: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| distance(a, b)).collect()).collect();
    let argmin = |it: &mut dyn Iterator<Item = (usize, f64)>| {
        it.fold((usize::MAX, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best }).0
    };
    let mut medoids = vec![argmin(&mut (0..n).map(|i| (i, d[i].iter().sum::<f64>())))];
    while medoids.len() < k {
        let far = (0..n)
            .filter(|i| !medoids.contains(i))
            .map(|i| (i, medoids.iter().map(|&m| d[i][m]).fold(f64::INFINITY, f64::min)))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
            .0;
        medoids.push(far);
    }
    for _ in 0..100 {
        let assign: Vec<usize> = (0..n).map(|i| argmin(&mut medoids.iter().enumerate().map(|(c, &m)| (c, d[i][m])))).collect();
        let mut changed = false;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            let best = argmin(&mut members.iter().map(|&i| (i, members.iter().map(|&j| d[i][j]).sum::<f64>())));
            if best != usize::MAX && best != *medoid {
                *medoid = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    medoids.sort_unstable();
    medoids
}
