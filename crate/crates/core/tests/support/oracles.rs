//! Naive scalar-loop reference implementations. They deliberately avoid the
//! library's helpers so that each comparison exercises two independent routes.
#![allow(dead_code, clippy::needless_range_loop)]

/// DE/current-to-rand/1 for one member.
pub fn current_to_rand_1(x: &[Vec<f64>], i: usize, r: &[usize], f1: f64, f2: f64) -> Vec<f64> {
    let mut out = vec![0.0; x[i].len()];
    for j in 0..out.len() {
        out[j] = x[i][j] + f1 * (x[r[0]][j] - x[i][j]) + f2 * (x[r[1]][j] - x[r[2]][j]);
    }
    out
}

/// DE/best/2.
pub fn best_2(x: &[Vec<f64>], best: usize, r: &[usize], f1: f64, f2: f64) -> Vec<f64> {
    let mut out = vec![0.0; x[0].len()];
    for j in 0..out.len() {
        out[j] = x[best][j] + f1 * (x[r[0]][j] - x[r[1]][j]) + f2 * (x[r[2]][j] - x[r[3]][j]);
    }
    out
}

/// DE/rand/2.
pub fn rand_2(x: &[Vec<f64>], r: &[usize], f1: f64, f2: f64) -> Vec<f64> {
    let mut out = vec![0.0; x[0].len()];
    for j in 0..out.len() {
        out[j] = x[r[0]][j] + f1 * (x[r[1]][j] - x[r[2]][j]) + f2 * (x[r[3]][j] - x[r[4]][j]);
    }
    out
}

/// DE/current-to-best/1.
pub fn current_to_best_1(x: &[Vec<f64>], i: usize, best: usize, r: &[usize], f1: f64, f2: f64) -> Vec<f64> {
    let mut out = vec![0.0; x[i].len()];
    for j in 0..out.len() {
        out[j] = x[i][j] + f1 * (x[best][j] - x[i][j]) + f2 * (x[r[0]][j] - x[r[1]][j]);
    }
    out
}

pub fn binomial(x: &[f64], trial: &[f64], rand: &[f64], jrand: usize, cr: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for j in 0..x.len() {
        if rand[j] < cr || j == jrand {
            out[j] = trial[j];
        }
    }
    out
}

/// Copies `len` consecutive genes (cyclically) starting at `start`.
pub fn exponential(x: &[f64], trial: &[f64], start: usize, len: usize) -> Vec<f64> {
    let dim = x.len();
    let mut out = x.to_vec();
    let mut j = start;
    let mut copied = 0;
    while copied < len {
        out[j] = trial[j];
        j += 1;
        if j == dim {
            j = 0;
        }
        copied += 1;
    }
    out
}

pub fn mpx(x: &[f64], partner: &[f64], rand: &[f64], cr: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        out.push(if rand[j] < cr { partner[j] } else { x[j] });
    }
    out
}

pub fn sbx(x: &[f64], partner: &[f64], u: &[f64], flip: bool, eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let beta = if u[j] <= 0.5 {
            f64::powf(2.0 * u[j], 1.0 / (eta + 1.0)) - 1.0
        } else {
            f64::powf(1.0 / (2.0 * (1.0 - u[j])), 1.0 / (eta + 1.0))
        };
        let (a, b) = if flip { (x[j], partner[j]) } else { (partner[j], x[j]) };
        out.push(0.5 * ((1.0 + beta) * a + (1.0 - beta) * b));
    }
    out
}

pub fn gaussian(x: &[f64], normals: &[f64], sigma: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        out.push(x[j] + sigma * (hi - lo) * normals[j]);
    }
    out
}

pub fn polynomial(x: &[f64], u: &[f64], eta: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let v = if u[j] <= 0.5 {
            x[j] + (f64::powf(2.0 * u[j], 1.0 / (1.0 + eta)) - 1.0) * (x[j] - lo)
        } else {
            x[j] + (1.0 - f64::powf(2.0 * (1.0 - u[j]), 1.0 / (1.0 + eta))) * (hi - x[j])
        };
        out.push(v);
    }
    out
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    s.sqrt()
}

/// Raw (unnormalized) features s1..s6 of a population given the
/// generation-best index and the best-so-far point and value.
pub fn raw_features(x: &[Vec<f64>], f: &[f64], gen_best: usize, bsf_x: &[f64], bsf_f: f64) -> [f64; 6] {
    let n = x.len();
    let mut pair = 0.0;
    let mut count = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i < j {
                pair += euclid(&x[i], &x[j]);
                count += 1.0;
            }
        }
    }
    let s1 = if count > 0.0 { pair / count } else { 0.0 };
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut s4 = 0.0;
    let mut s5 = 0.0;
    let mut mean = 0.0;
    for i in 0..n {
        s2 += euclid(&x[i], &x[gen_best]);
        s3 += euclid(&x[i], bsf_x);
        s4 += f[i] - bsf_f;
        s5 += f[i] - f[gen_best];
        mean += f[i];
    }
    let nf = n as f64;
    mean /= nf;
    let mut var = 0.0;
    for i in 0..n {
        var += (f[i] - mean) * (f[i] - mean);
    }
    [s1, s2 / nf, s3 / nf, s4 / nf, s5 / nf, (var / nf).sqrt()]
}

/// Triple-loop compositional conservative loss for one trajectory.
/// `q[t][i][j]`, `actions[t][i]`, `limits[i]`.
#[allow(clippy::too_many_arguments)]
pub fn q_loss(
    q: &[Vec<Vec<f64>>],
    actions: &[Vec<usize>],
    rewards: &[f64],
    limits: &[usize],
    beta: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let t_len = q.len();
    let k = limits.len();
    let masked_max = |row: &[f64], m: usize| {
        let mut best = row[0];
        for j in 1..m {
            if row[j] > best {
                best = row[j];
            }
        }
        best
    };
    let mut total = 0.0;
    for t in 0..t_len {
        for i in 0..k {
            for j in 0..q[t][i].len() {
                let v = q[t][i][j];
                if j != actions[t][i] {
                    total += lambda / 2.0 * v * v;
                } else if i + 1 < k {
                    let target = masked_max(&q[t][i + 1], limits[i + 1]);
                    total += 0.5 * (v - target) * (v - target);
                } else {
                    let next = if t + 1 < t_len { masked_max(&q[t + 1][0], limits[0]) } else { 0.0 };
                    let target = rewards[t] + gamma * next;
                    total += beta / 2.0 * (v - target) * (v - target);
                }
            }
        }
    }
    total
}

/// Exact star discrepancy of a 2-D point set in [0,1)², checking every
/// anchored box whose corner lies on the grid of point coordinates.
pub fn star_discrepancy_2d(points: &[[f64; 2]]) -> f64 {
    let n = points.len() as f64;
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    xs.push(1.0);
    ys.push(1.0);
    let mut worst: f64 = 0.0;
    for &a in &xs {
        for &b in &ys {
            let mut open = 0.0;
            let mut closed = 0.0;
            for p in points {
                if p[0] < a && p[1] < b {
                    open += 1.0;
                }
                if p[0] <= a && p[1] <= b {
                    closed += 1.0;
                }
            }
            let vol = a * b;
            worst = worst.max(vol - open / n).max(closed / n - vol);
        }
    }
    worst
}
