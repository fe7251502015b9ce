use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// An evaluated set of candidate solutions with its best-so-far record.
///
/// `best_so_far` covers every point ever evaluated for this population,
/// including offspring that were not selected.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    x: Vec<Vec<f64>>,
    fitness: Vec<f64>,
    best_index: usize,
    best_so_far_x: Vec<f64>,
    best_so_far_f: f64,
}

pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in v.iter().enumerate().skip(1) {
        if f < v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut worst = 0;
    for (i, &f) in v.iter().enumerate().skip(1) {
        if f > v[worst] {
            worst = i;
        }
    }
    worst
}

impl Population {
    pub fn new(x: Vec<Vec<f64>>, fitness: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if x.len() != fitness.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} solutions but {} fitness values",
                x.len(),
                fitness.len()
            )));
        }
        let dim = x[0].len();
        if let Some(bad) = x.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let best_index = argmin(&fitness);
        Ok(Self {
            best_so_far_x: x[best_index].clone(),
            best_so_far_f: fitness[best_index],
            x,
            fitness,
            best_index,
        })
    }

    pub fn evaluate(problem: &ProblemInstance, x: Vec<Vec<f64>>) -> Result<Self> {
        let fitness = problem.evaluate(&x)?;
        Self::new(x, fitness)
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }
    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }
    pub fn best_index(&self) -> usize {
        self.best_index
    }
    pub fn best_x(&self) -> &[f64] {
        &self.x[self.best_index]
    }
    pub fn best_f(&self) -> f64 {
        self.fitness[self.best_index]
    }
    pub fn worst_index(&self) -> usize {
        argmax(&self.fitness)
    }
    pub fn best_so_far_x(&self) -> &[f64] {
        &self.best_so_far_x
    }
    pub fn best_so_far_f(&self) -> f64 {
        self.best_so_far_f
    }

    /// Records an evaluated point in the best-so-far memory without adding it
    /// to the population.
    pub(crate) fn observe(&mut self, x: &[f64], f: f64) {
        if f < self.best_so_far_f {
            self.best_so_far_f = f;
            self.best_so_far_x = x.to_vec();
        }
    }

    pub(crate) fn observe_all(&mut self, xs: &[Vec<f64>], fs: &[f64]) {
        let i = argmin(fs);
        if !fs.is_empty() {
            self.observe(&xs[i], fs[i]);
        }
    }

    /// Replaces the members and refreshes `best_index` and the best-so-far record.
    pub(crate) fn replace_members(&mut self, x: Vec<Vec<f64>>, fitness: Vec<f64>) {
        debug_assert_eq!(x.len(), fitness.len());
        self.x = x;
        self.fitness = fitness;
        self.best_index = argmin(&self.fitness);
        let b = self.best_index;
        if self.fitness[b] < self.best_so_far_f {
            self.best_so_far_f = self.fitness[b];
            self.best_so_far_x = self.x[b].clone();
        }
    }

    pub(crate) fn set_member(&mut self, i: usize, x: Vec<f64>, f: f64) {
        self.x[i] = x;
        self.fitness[i] = f;
        self.best_index = argmin(&self.fitness);
        let b = self.best_index;
        if self.fitness[b] < self.best_so_far_f {
            self.best_so_far_f = self.fitness[b];
            self.best_so_far_x = self.x[b].clone();
        }
    }

    /// Keeps the `n` best members (stable by original position) and drops the rest.
    pub(crate) fn keep_best(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = order[..n.max(1)].to_vec();
        kept.sort_unstable();
        let x = kept.iter().map(|&i| self.x[i].clone()).collect();
        let f = kept.iter().map(|&i| self.fitness[i]).collect();
        self.replace_members(x, f);
    }
}
