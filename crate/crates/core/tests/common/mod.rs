//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Nothing here calls into the code under test except
//! for plain data constructors.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttaood::augment::ImageBuffer;
use ttaood::pack::{ClassifierHead, FeaturePack, Label, Matrix, Split};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pairwise AUROC: OOD above ID counts 1, ties 1/2. Exact in integers.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice: u64 = 0;
    for &o in ood {
        for &i in id {
            if o > i {
                twice += 2;
            } else if o == i {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * id.len() as u64 * ood.len() as u64) as f64
}

/// Sweeps every observed ID score as a candidate threshold and returns the
/// smallest one that keeps at least `target` of the ID scores strictly
/// below it. `None` when no candidate works.
pub fn brute_threshold(id: &[f64], target: f64) -> Option<f64> {
    let n = id.len() as f64;
    let mut best: Option<f64> = None;
    for &c in id {
        let below = id.iter().filter(|&&s| s < c).count();
        if below as f64 / n >= target && best.is_none_or(|b| c < b) {
            best = Some(c);
        }
    }
    best
}

pub fn brute_fpr(id: &[f64], ood: &[f64], target: f64) -> Option<f64> {
    let lambda = brute_threshold(id, target)?;
    let passed = ood.iter().filter(|&&s| s < lambda).count();
    Some(passed as f64 / ood.len() as f64)
}

/// Random score vectors. Every third instance draws from a small integer
/// range so ties (and degenerate thresholds) are common.
pub fn random_scores(rng: &mut ChaCha8Rng, instance: usize, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let n_id = rng.random_range(1..=max_n);
    let n_ood = rng.random_range(1..=max_n);
    let draw = |rng: &mut ChaCha8Rng, n: usize, shift: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if instance % 3 == 0 {
                    f64::from(rng.random_range(0..6u8)) + shift.round()
                } else {
                    rng.random::<f64>() * 4.0 - 2.0 + shift
                }
            })
            .collect()
    };
    let shift = rng.random_range(-1.0..2.0);
    let id = draw(rng, n_id, 0.0);
    let ood = draw(rng, n_ood, shift);
    (id, ood)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix in oracle");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        aug[row][k] -= f * aug[col][k];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Class means, shared 1/n covariance with `eps * trace / m` ridge, and its
/// explicit inverse.
pub struct BruteMahalanobis {
    pub means: Vec<Vec<f64>>,
    pub precision: Vec<Vec<f64>>,
}

impl BruteMahalanobis {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, eps: f64) -> Self {
        let m = x[0].len();
        let mut means = vec![vec![0.0; m]; classes];
        let mut counts = vec![0usize; classes];
        for (row, &c) in x.iter().zip(y) {
            counts[c] += 1;
            for j in 0..m {
                means[c][j] += row[j];
            }
        }
        for c in 0..classes {
            for v in means[c].iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        let mut cov = vec![vec![0.0; m]; m];
        for (row, &c) in x.iter().zip(y) {
            for a in 0..m {
                for b in 0..m {
                    cov[a][b] += (row[a] - means[c][a]) * (row[b] - means[c][b]);
                }
            }
        }
        let n = x.len() as f64;
        let mut trace = 0.0;
        for a in 0..m {
            for b in 0..m {
                cov[a][b] /= n;
            }
            trace += cov[a][a];
        }
        for a in 0..m {
            cov[a][a] += eps * trace / m as f64;
        }
        Self {
            means,
            precision: gauss_jordan_inverse(&cov),
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.means
            .iter()
            .map(|mu| {
                let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
                let mut q = 0.0;
                for a in 0..d.len() {
                    for b in 0..d.len() {
                        q += d[a] * self.precision[a][b] * d[b];
                    }
                }
                q
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn brute_logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// ViM for 2-dim features and a 1-dim principal subspace, from scratch:
/// explicit 2x2 inverse for the origin, closed-form eigenvectors.
pub struct BruteVim2 {
    pub origin: [f64; 2],
    pub residual_dir: [f64; 2],
    pub alpha: f64,
}

impl BruteVim2 {
    /// `w` is 2x2 (row per class), invertible.
    pub fn fit(w: [[f64; 2]; 2], b: [f64; 2], x: &[[f64; 2]], logits: &[Vec<f64>]) -> Self {
        let det = w[0][0] * w[1][1] - w[0][1] * w[1][0];
        let inv = [
            [w[1][1] / det, -w[0][1] / det],
            [-w[1][0] / det, w[0][0] / det],
        ];
        let origin = [
            -(inv[0][0] * b[0] + inv[0][1] * b[1]),
            -(inv[1][0] * b[0] + inv[1][1] * b[1]),
        ];
        let n = x.len() as f64;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in x {
            let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let (a, bb, c) = (sxx / n, sxy / n, syy / n);
        // Smaller eigenvalue of [[a, bb], [bb, c]] and its eigenvector.
        let mean = (a + c) / 2.0;
        let rad = (((a - c) / 2.0).powi(2) + bb * bb).sqrt();
        let small = mean - rad;
        let v = if bb.abs() > 1e-300 {
            [bb, small - a]
        } else if a <= c {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let residual_dir = [v[0] / len, v[1] / len];
        let mut res_sum = 0.0;
        let mut max_sum = 0.0;
        for (p, z) in x.iter().zip(logits) {
            res_sum += ((p[0] - origin[0]) * residual_dir[0] + (p[1] - origin[1]) * residual_dir[1]).abs();
            max_sum += z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        Self {
            origin,
            residual_dir,
            alpha: max_sum / res_sum,
        }
    }

    pub fn score(&self, x: [f64; 2], logits: &[f64]) -> f64 {
        let r = ((x[0] - self.origin[0]) * self.residual_dir[0]
            + (x[1] - self.origin[1]) * self.residual_dir[1])
            .abs();
        self.alpha * r - brute_logsumexp(logits)
    }
}

pub fn random_image(rng: &mut ChaCha8Rng, max_side: u32) -> ImageBuffer {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let mut pixels = vec![0u8; (w * h * 3) as usize];
    // Half the images use a narrow palette so equalize sees few levels.
    if rng.random_bool(0.5) {
        rng.fill(pixels.as_mut_slice());
    } else {
        let lo = rng.random_range(0..200u8);
        for p in pixels.iter_mut() {
            *p = lo + rng.random_range(0..8u8);
        }
    }
    ImageBuffer::new(w, h, pixels).unwrap()
}

pub fn head(weights: &[f32], bias: &[f32], classes: usize, dim: usize) -> ClassifierHead {
    ClassifierHead::new(
        Matrix::from_vec(classes, dim, weights.to_vec()).unwrap(),
        bias.to_vec(),
    )
    .unwrap()
}

/// Pack whose logits are `head` applied to `features` (rounded to f32).
pub fn pack_with_head(
    features: &[Vec<f32>],
    labels: Vec<Label>,
    head: &ClassifierHead,
    split: Split,
    view: &str,
) -> FeaturePack {
    let logits: Vec<Vec<f32>> = features
        .iter()
        .map(|f| {
            let x: Vec<f64> = f.iter().map(|&v| f64::from(v)).collect();
            head.logits(&x).into_iter().map(|v| v as f32).collect()
        })
        .collect();
    FeaturePack {
        sample_ids: (0..features.len()).map(|i| format!("s{i:05}")).collect(),
        labels,
        features: Matrix::from_rows(features).unwrap(),
        logits: Matrix::from_rows(&logits).unwrap(),
        view: view.to_string(),
        split,
        model_id: "test".into(),
    }
}

/// Pack with explicit f32 features and logits.
pub fn pack(
    features: &[Vec<f32>],
    logits: &[Vec<f32>],
    labels: Vec<Label>,
    split: Split,
    view: &str,
) -> FeaturePack {
    FeaturePack {
        sample_ids: (0..features.len()).map(|i| format!("s{i:05}")).collect(),
        labels,
        features: Matrix::from_rows(features).unwrap(),
        logits: Matrix::from_rows(logits).unwrap(),
        view: view.to_string(),
        split,
        model_id: "test".into(),
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
