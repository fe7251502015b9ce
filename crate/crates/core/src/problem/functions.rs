use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{lambda_diag, ProblemInstance};

fn matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

fn scale(diag: &[f64], v: &mut [f64]) {
    v.iter_mut().zip(diag).for_each(|(x, d)| *x *= d);
}

fn t_osz_scalar(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let xh = x.abs().ln();
    let (c1, c2) = if x > 0.0 { (10.0, 7.9) } else { (5.5, 3.1) };
    x.signum() * (xh + 0.049 * ((c1 * xh).sin() + (c2 * xh).sin())).exp()
}

fn t_osz(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = t_osz_scalar(*x));
}

fn t_asy(beta: f64, v: &mut [f64]) {
    let d = v.len();
    if d < 2 {
        return;
    }
    for (i, x) in v.iter_mut().enumerate() {
        if *x > 0.0 {
            *x = x.powf(1.0 + beta * i as f64 / (d - 1) as f64 * x.sqrt());
        }
    }
}

fn f_pen(x: &[f64]) -> f64 {
    x.iter()
        .map(|&v| (v.abs() - 5.0).max(0.0).powi(2))
        .sum()
}

fn offset(x: &[f64], shift: &[f64]) -> Vec<f64> {
    x.iter().zip(shift).map(|(a, b)| a - b).collect()
}

fn rastrigin_core(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    10.0 * (d - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>())
        + z.iter().map(|v| v * v).sum::<f64>()
}

fn rosenbrock_core(z: &[f64]) -> f64 {
    z.windows(2)
        .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn ellipsoid_core(z: &[f64]) -> f64 {
    let d = z.len();
    z.iter()
        .enumerate()
        .map(|(i, v)| 10f64.powf(6.0 * i as f64 / (d - 1) as f64) * v * v)
        .sum()
}

fn schaffer_core(z: &[f64]) -> f64 {
    let d = z.len();
    let sum: f64 = z
        .windows(2)
        .map(|w| {
            let s = (w[0] * w[0] + w[1] * w[1]).sqrt();
            s.sqrt() + s.sqrt() * (50.0 * s.powf(0.2)).sin().powi(2)
        })
        .sum();
    (sum / (d - 1) as f64).powi(2)
}

pub(super) fn evaluate(p: &ProblemInstance, x: &[f64]) -> f64 {
    let d = p.dim;
    let df = d as f64;
    let r = &p.rotation;
    let q = &p.rotation2;
    let xo = &p.shift;
    let raw = match p.function_id {
        1 => offset(x, xo).iter().map(|v| v * v).sum(),
        2 => {
            let mut z = offset(x, xo);
            t_osz(&mut z);
            ellipsoid_core(&z)
        }
        3 => {
            let mut z = offset(x, xo);
            t_osz(&mut z);
            t_asy(0.2, &mut z);
            scale(&lambda_diag(10.0, d), &mut z);
            rastrigin_core(&z)
        }
        4 => {
            let mut z = offset(x, xo);
            t_osz(&mut z);
            for (i, v) in z.iter_mut().enumerate() {
                let base = 10f64.powf(i as f64 / (2.0 * (df - 1.0)));
                *v *= if *v > 0.0 && i % 2 == 0 { 10.0 * base } else { base };
            }
            rastrigin_core(&z) + 100.0 * f_pen(x)
        }
        5 => {
            let mut sum = 0.0;
            for i in 0..d {
                let s = xo[i].signum() * 10f64.powf(i as f64 / (df - 1.0));
                let z = if xo[i] * x[i] < 25.0 { x[i] } else { xo[i] };
                sum += 5.0 * s.abs() - s * z;
            }
            sum
        }
        6 => {
            let mut z = matvec(r, &offset(x, xo));
            scale(&lambda_diag(10.0, d), &mut z);
            let z = matvec(q, &z);
            let s: f64 = z
                .iter()
                .zip(xo)
                .map(|(zi, oi)| {
                    let w = if zi * oi > 0.0 { 100.0 } else { 1.0 };
                    (w * zi).powi(2)
                })
                .sum();
            t_osz_scalar(s).powf(0.9)
        }
        7 => {
            let mut zh = matvec(r, &offset(x, xo));
            scale(&lambda_diag(10.0, d), &mut zh);
            let zt: Vec<f64> = zh
                .iter()
                .map(|&v| {
                    if v.abs() > 0.5 {
                        (0.5 + v).floor()
                    } else {
                        (0.5 + 10.0 * v).floor() / 10.0
                    }
                })
                .collect();
            let z = matvec(q, &zt);
            let ell: f64 = z
                .iter()
                .enumerate()
                .map(|(i, v)| 10f64.powf(2.0 * i as f64 / (df - 1.0)) * v * v)
                .sum();
            0.1 * (zh[0].abs() / 1e4).max(ell) + f_pen(x)
        }
        8 => {
            let c = 1f64.max(df.sqrt() / 8.0);
            let z: Vec<f64> = offset(x, xo).iter().map(|v| c * v + 1.0).collect();
            rosenbrock_core(&z)
        }
        9 => {
            let c = 1f64.max(df.sqrt() / 8.0);
            let z: Vec<f64> = matvec(r, &offset(x, xo))
                .iter()
                .map(|v| c * v + 1.0)
                .collect();
            rosenbrock_core(&z)
        }
        10 => {
            let mut z = matvec(r, &offset(x, xo));
            t_osz(&mut z);
            ellipsoid_core(&z)
        }
        11 => {
            let mut z = matvec(r, &offset(x, xo));
            t_osz(&mut z);
            1e6 * z[0] * z[0] + z[1..].iter().map(|v| v * v).sum::<f64>()
        }
        12 => {
            let mut z = matvec(r, &offset(x, xo));
            t_asy(0.5, &mut z);
            let z = matvec(r, &z);
            z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>()
        }
        13 => {
            let mut z = matvec(r, &offset(x, xo));
            scale(&lambda_diag(10.0, d), &mut z);
            let z = matvec(q, &z);
            z[0] * z[0] + 100.0 * z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
        }
        14 => {
            let z = matvec(r, &offset(x, xo));
            z.iter()
                .enumerate()
                .map(|(i, v)| v.abs().powf(2.0 + 4.0 * i as f64 / (df - 1.0)))
                .sum::<f64>()
                .sqrt()
        }
        15 => {
            let mut z = matvec(r, &offset(x, xo));
            t_osz(&mut z);
            t_asy(0.2, &mut z);
            let mut z = matvec(q, &z);
            scale(&lambda_diag(10.0, d), &mut z);
            let z = matvec(r, &z);
            rastrigin_core(&z)
        }
        16 => {
            let mut z = matvec(r, &offset(x, xo));
            t_osz(&mut z);
            let mut z = matvec(q, &z);
            scale(&lambda_diag(0.01, d), &mut z);
            let z = matvec(r, &z);
            let f0: f64 = (0..12)
                .map(|k| 0.5f64.powi(k) * (PI * 3f64.powi(k)).cos())
                .sum();
            let inner: f64 = z
                .iter()
                .map(|zi| {
                    (0..12)
                        .map(|k| {
                            0.5f64.powi(k) * (2.0 * PI * 3f64.powi(k) * (zi + 0.5)).cos()
                        })
                        .sum::<f64>()
                })
                .sum();
            10.0 * (inner / df - f0).powi(3) + 10.0 / df * f_pen(x)
        }
        id @ (17 | 18) => {
            let alpha = if id == 17 { 10.0 } else { 1000.0 };
            let mut z = matvec(r, &offset(x, xo));
            t_asy(0.5, &mut z);
            let mut z = matvec(q, &z);
            scale(&lambda_diag(alpha, d), &mut z);
            schaffer_core(&z) + 10.0 * f_pen(x)
        }
        19 => {
            let c = 1f64.max(df.sqrt() / 8.0);
            let z: Vec<f64> = matvec(r, &offset(x, xo))
                .iter()
                .map(|v| c * v + 1.0)
                .collect();
            let sum: f64 = z
                .windows(2)
                .map(|w| {
                    let s = 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2);
                    s / 4000.0 - s.cos()
                })
                .sum();
            10.0 / (df - 1.0) * sum + 10.0
        }
        20 => {
            let two_abs: Vec<f64> = xo.iter().map(|v| 2.0 * v.abs()).collect();
            let xh: Vec<f64> = x
                .iter()
                .zip(xo)
                .map(|(xi, oi)| 2.0 * oi.signum() * xi)
                .collect();
            let mut zh = xh.clone();
            for i in 1..d {
                zh[i] = xh[i] + 0.25 * (xh[i - 1] - two_abs[i - 1]);
            }
            let lam = lambda_diag(10.0, d);
            let z: Vec<f64> = (0..d)
                .map(|i| 100.0 * (lam[i] * (zh[i] - two_abs[i]) + two_abs[i]))
                .collect();
            let zs: Vec<f64> = z.iter().map(|v| v / 100.0).collect();
            -z.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>() / (100.0 * df)
                + 4.189_828_872_724_339
                + 100.0 * f_pen(&zs)
        }
        21 | 22 => {
            let peaks = p.peaks.as_ref().expect("Gallagher instance without peaks");
            let mut best = f64::NEG_INFINITY;
            for ((c, w), sc) in peaks.centers.iter().zip(&peaks.weights).zip(&peaks.scales) {
                let z = matvec(r, &offset(x, c));
                let quad: f64 = z.iter().zip(sc).map(|(v, s)| s * v * v).sum();
                best = best.max(w * (-quad / (2.0 * df)).exp());
            }
            t_osz_scalar(10.0 - best).powi(2) + f_pen(x)
        }
        23 => {
            let mut z = matvec(r, &offset(x, xo));
            scale(&lambda_diag(100.0, d), &mut z);
            let z = matvec(q, &z);
            let expo = 10.0 / df.powf(1.2);
            let prod: f64 = z
                .iter()
                .enumerate()
                .map(|(i, zi)| {
                    let s: f64 = (1..=32)
                        .map(|j| {
                            let p2 = 2f64.powi(j);
                            (p2 * zi - (p2 * zi).round()).abs() / p2
                        })
                        .sum();
                    (1.0 + (i + 1) as f64 * s).powf(expo)
                })
                .product();
            10.0 / (df * df) * prod - 10.0 / (df * df) + f_pen(x)
        }
        24 => {
            let mu0 = super::LUNACEK_MU0;
            let s = 1.0 - 1.0 / (2.0 * (df + 20.0).sqrt() - 8.2);
            let mu1 = -((mu0 * mu0 - 1.0) / s).sqrt();
            let xh: Vec<f64> = x
                .iter()
                .zip(xo)
                .map(|(xi, oi)| 2.0 * oi.signum() * xi)
                .collect();
            let mut z = matvec(r, &xh.iter().map(|v| v - mu0).collect::<Vec<_>>());
            scale(&lambda_diag(100.0, d), &mut z);
            let z = matvec(q, &z);
            let s1: f64 = xh.iter().map(|v| (v - mu0).powi(2)).sum();
            let s2: f64 = xh.iter().map(|v| (v - mu1).powi(2)).sum();
            s1.min(df + s * s2)
                + 10.0 * (df - z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>())
                + 1e4 * f_pen(x)
        }
        _ => unreachable!("function id validated at construction"),
    };
    raw + p.f_opt
}
