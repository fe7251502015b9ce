//! Noiseless BBOB-style test functions with seeded shift and rotation.
//!
//! Every instance is constructed so that its optimum lies at `shift` and takes
//! the value `f_opt`. Functions whose standard definition ties the optimum to a
//! sign pattern (linear slope, Schwefel, Lunacek) place `shift` on that pattern.

mod functions;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{child_rng, derive_seed, Rng};

pub const SUPPORTED_DIMS: [usize; 4] = [5, 10, 20, 50];
pub const NUM_FUNCTIONS: u8 = 24;

/// Closed box bound applied to every coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self::new(-5.0, 5.0)
    }
}

pub fn function_name(function_id: u8) -> &'static str {
    match function_id {
        1 => "sphere",
        2 => "ellipsoidal",
        3 => "rastrigin",
        4 => "buche_rastrigin",
        5 => "linear_slope",
        6 => "attractive_sector",
        7 => "step_ellipsoidal",
        8 => "rosenbrock",
        9 => "rosenbrock_rotated",
        10 => "ellipsoidal_rotated",
        11 => "discus",
        12 => "bent_cigar",
        13 => "sharp_ridge",
        14 => "different_powers",
        15 => "rastrigin_rotated",
        16 => "weierstrass",
        17 => "schaffers_f7",
        18 => "schaffers_f7_ill",
        19 => "griewank_rosenbrock",
        20 => "schwefel",
        21 => "gallagher_101",
        22 => "gallagher_21",
        23 => "katsuura",
        24 => "lunacek_bi_rastrigin",
        _ => "unknown",
    }
}

/// Local optima of the Gallagher functions (f21, f22). Peak 0 is the global one.
#[derive(Clone, Debug, PartialEq)]
pub struct GallagherPeaks {
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Diagonal of each peak's conditioning matrix, already divided by alpha^(1/4).
    pub scales: Vec<Vec<f64>>,
}

impl GallagherPeaks {
    fn sample(function_id: u8, dim: usize, global: &[f64], rng: &mut Rng) -> Self {
        let (count, alpha_global, alpha_exp_steps, local_half) = if function_id == 21 {
            (101usize, 1000.0f64, 99usize, 5.0)
        } else {
            (21usize, 1000.0f64 * 1000.0, 19usize, 4.9)
        };
        let mut centers = Vec::with_capacity(count);
        centers.push(global.to_vec());
        for _ in 1..count {
            centers.push(
                (0..dim)
                    .map(|_| rng.random_range(-local_half..local_half))
                    .collect(),
            );
        }
        let mut weights = vec![10.0];
        for i in 2..=count {
            weights.push(1.1 + 8.0 * (i - 2) as f64 / (count - 2) as f64);
        }
        // alphas for local peaks are a random permutation of 1000^(2j/steps)
        let mut exps: Vec<usize> = (0..=alpha_exp_steps).collect();
        shuffle(&mut exps, rng);
        let mut alphas = vec![alpha_global];
        alphas.extend(
            exps.iter()
                .take(count - 1)
                .map(|&j| 1000f64.powf(2.0 * j as f64 / alpha_exp_steps as f64)),
        );
        let scales = alphas
            .iter()
            .map(|&alpha| {
                let mut diag = lambda_diag(alpha, dim);
                shuffle(&mut diag, rng);
                let norm = alpha.powf(0.25);
                diag.iter().map(|d| d / norm).collect()
            })
            .collect();
        Self {
            centers,
            weights,
            scales,
        }
    }
}

fn shuffle<T>(v: &mut [T], rng: &mut Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Diagonal of the BBOB conditioning matrix: alpha^(i / (2 (D-1))).
pub(crate) fn lambda_diag(alpha: f64, dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|i| alpha.powf(i as f64 / (2.0 * (dim - 1) as f64)))
        .collect()
}

/// Seeded Gaussian matrix orthogonalized by QR, with the sign of each column
/// fixed by the sign of the corresponding diagonal entry of R.
pub fn random_rotation(dim: usize, rng: &mut Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..dim * dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let g = DMatrix::from_row_slice(dim, dim, &data);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Max-abs deviation of `RᵀR` from the identity.
pub fn orthogonality_error(r: &DMatrix<f64>) -> f64 {
    let n = r.nrows();
    (r.transpose() * r - DMatrix::<f64>::identity(n, n)).amax()
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    function_id: u8,
    dim: usize,
    shift: Vec<f64>,
    rotation: DMatrix<f64>,
    rotation2: DMatrix<f64>,
    f_opt: f64,
    range: Interval,
    seed: u64,
    peaks: Option<GallagherPeaks>,
}

fn check_id_dim(function_id: u8, dim: usize) -> Result<()> {
    if !(1..=NUM_FUNCTIONS).contains(&function_id) {
        return Err(Error::UnknownFunction(function_id));
    }
    if !SUPPORTED_DIMS.contains(&dim) {
        return Err(Error::UnsupportedDim(dim));
    }
    Ok(())
}

/// Constants fixing the optimum of the sign-patterned functions.
const SCHWEFEL_OPT: f64 = 4.209_687_462_275_036 / 2.0;
const LUNACEK_MU0: f64 = 2.5;

fn sign_pattern_optimum(function_id: u8, signs: &[f64]) -> Option<Vec<f64>> {
    let magnitude = match function_id {
        5 => 5.0,
        20 => SCHWEFEL_OPT,
        24 => LUNACEK_MU0 / 2.0,
        _ => return None,
    };
    Some(signs.iter().map(|s| s * magnitude).collect())
}

/// Builds the deterministic instance for `(function_id, dim, seed)`.
pub fn make_instance(function_id: u8, dim: usize, seed: u64) -> Result<ProblemInstance> {
    check_id_dim(function_id, dim)?;
    let range = Interval::default();
    let mut rng = child_rng(seed, &[function_id as u64, dim as u64]);
    let rotation = random_rotation(dim, &mut rng);
    let rotation2 = random_rotation(dim, &mut rng);
    let signs: Vec<f64> = (0..dim)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let inner = 0.8 * range.width() / 2.0;
    let centre = (range.lo + range.hi) / 2.0;
    let uniform_shift: Vec<f64> = (0..dim)
        .map(|_| centre + rng.random_range(-inner..inner))
        .collect();
    let shift = sign_pattern_optimum(function_id, &signs).unwrap_or(uniform_shift);
    let f_opt = rng.random_range(-100.0..100.0);
    let peaks = matches!(function_id, 21 | 22)
        .then(|| GallagherPeaks::sample(function_id, dim, &shift, &mut rng));
    Ok(ProblemInstance {
        function_id,
        dim,
        shift,
        rotation,
        rotation2,
        f_opt,
        range,
        seed,
        peaks,
    })
}

impl ProblemInstance {
    /// Instance with caller-chosen transform. Used for golden-value checks and
    /// debugging; `rotation` and `rotation2` must be orthogonal.
    pub fn with_transform(
        function_id: u8,
        dim: usize,
        shift: Vec<f64>,
        rotation: DMatrix<f64>,
        rotation2: DMatrix<f64>,
        f_opt: f64,
        peaks: Option<GallagherPeaks>,
    ) -> Result<Self> {
        check_id_dim(function_id, dim)?;
        for (what, len) in [
            ("shift", shift.len()),
            ("rotation", rotation.nrows()),
            ("rotation", rotation.ncols()),
            ("rotation2", rotation2.nrows()),
            ("rotation2", rotation2.ncols()),
        ] {
            if len != dim {
                return Err(Error::ShapeMismatch(format!(
                    "{what} has size {len}, problem dimension is {dim}"
                )));
            }
        }
        if matches!(function_id, 21 | 22) && peaks.is_none() {
            return Err(Error::InvalidParameter(
                "Gallagher functions need explicit peaks".into(),
            ));
        }
        Ok(Self {
            function_id,
            dim,
            shift,
            rotation,
            rotation2,
            f_opt,
            range: Interval::default(),
            seed: 0,
            peaks,
        })
    }

    /// Identity-rotation instance with `f_opt = 0`. The optimum sits at the
    /// origin, or on the all-positive sign pattern for f5, f20 and f24.
    /// Gallagher peaks are still sampled from `seed`.
    pub fn identity(function_id: u8, dim: usize, seed: u64) -> Result<Self> {
        check_id_dim(function_id, dim)?;
        let shift = sign_pattern_optimum(function_id, &vec![1.0; dim]).unwrap_or(vec![0.0; dim]);
        let mut rng = child_rng(seed, &[function_id as u64, dim as u64, 0x1d]);
        let peaks = matches!(function_id, 21 | 22)
            .then(|| GallagherPeaks::sample(function_id, dim, &shift, &mut rng));
        let eye = DMatrix::identity(dim, dim);
        Self::with_transform(function_id, dim, shift, eye.clone(), eye, 0.0, peaks)
    }

    pub fn function_id(&self) -> u8 {
        self.function_id
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }
    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }
    pub fn rotation2(&self) -> &DMatrix<f64> {
        &self.rotation2
    }
    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }
    pub fn range(&self) -> Interval {
        self.range
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn peaks(&self) -> Option<&GallagherPeaks> {
        self.peaks.as_ref()
    }
    pub fn name(&self) -> &'static str {
        function_name(self.function_id)
    }

    /// Objective value of one point.
    pub fn evaluate_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(functions::evaluate(self, x))
    }

    /// Objective values of every row of `xs`.
    pub fn evaluate(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate_one(x)).collect()
    }
}

/// Train/test partition of the 24 functions with one dimension per function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSplit {
    pub train_ids: Vec<u8>,
    pub test_ids: Vec<u8>,
    pub dims: BTreeMap<u8, usize>,
}

const DEFAULT_DIMS: [usize; 24] = [
    50, 5, 5, 10, 50, 5, 20, 10, 10, 10, 5, 50, 10, 20, 5, 20, 50, 50, 10, 20, 20, 10, 20, 20,
];

pub fn default_split() -> ProblemSplit {
    ProblemSplit {
        train_ids: vec![1, 4, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24],
        test_ids: vec![2, 3, 5, 6, 7, 8, 9, 10],
        dims: (1..=NUM_FUNCTIONS)
            .zip(DEFAULT_DIMS)
            .collect(),
    }
}

impl ProblemSplit {
    /// Same partition with every dimension clamped to at most `max_dim`.
    pub fn with_max_dim(mut self, max_dim: usize) -> Self {
        let cap = SUPPORTED_DIMS
            .iter()
            .copied()
            .filter(|&d| d <= max_dim)
            .max()
            .unwrap_or(SUPPORTED_DIMS[0]);
        for d in self.dims.values_mut() {
            *d = (*d).min(cap);
        }
        self
    }

    /// Restricts to explicit train/test ids, all at `dim`.
    pub fn custom(train_ids: Vec<u8>, test_ids: Vec<u8>, dim: usize) -> Result<Self> {
        if !SUPPORTED_DIMS.contains(&dim) {
            return Err(Error::UnsupportedDim(dim));
        }
        let mut dims = BTreeMap::new();
        for &id in train_ids.iter().chain(&test_ids) {
            if !(1..=NUM_FUNCTIONS).contains(&id) {
                return Err(Error::UnknownFunction(id));
            }
            dims.insert(id, dim);
        }
        Ok(Self {
            train_ids,
            test_ids,
            dims,
        })
    }

    pub fn dim_of(&self, function_id: u8) -> Result<usize> {
        self.dims
            .get(&function_id)
            .copied()
            .ok_or(Error::UnknownFunction(function_id))
    }

    /// Seed of the instance used for `function_id` under a run seed.
    pub fn instance_seed(run_seed: u64, function_id: u8) -> u64 {
        derive_seed(run_seed, &[0x1257, function_id as u64])
    }

    pub fn train_instances(&self, run_seed: u64) -> Result<Vec<ProblemInstance>> {
        self.instances(&self.train_ids, run_seed)
    }

    pub fn test_instances(&self, run_seed: u64) -> Result<Vec<ProblemInstance>> {
        self.instances(&self.test_ids, run_seed)
    }

    fn instances(&self, ids: &[u8], run_seed: u64) -> Result<Vec<ProblemInstance>> {
        ids.iter()
            .map(|&id| make_instance(id, self.dim_of(id)?, Self::instance_seed(run_seed, id)))
            .collect()
    }
}
