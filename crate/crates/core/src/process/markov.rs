use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const MAX_STATES: usize = 64;

/// Stationary finite-state Markov chain with a value table `v: state → ℝ^℘`.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    p: Matrix,
    values: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

impl MarkovChain {
    pub fn new(rows: &[Vec<f64>], values: Vec<Vec<f64>>) -> Result<Self> {
        let p = Matrix::from_rows(rows)?;
        let s = p.dim();
        if s > MAX_STATES {
            return Err(Error::InvalidModel(format!("{s} states, at most {MAX_STATES} allowed")));
        }
        p.is_row_stochastic(1e-12)?;
        if values.len() != s {
            return Err(Error::InvalidModel(format!(
                "value table has {} rows for {s} states",
                values.len()
            )));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidModel("state values must share a positive dimension".into()));
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("state values must be finite".into()));
        }
        let pi = stationary_distribution(&p)?;
        Ok(MarkovChain { p, values, pi })
    }

    /// Chain with scalar state values.
    pub fn scalar(rows: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        Self::new(rows, values.iter().map(|&v| vec![v]).collect())
    }

    pub fn transition(&self) -> &Matrix {
        &self.p
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.p.dim()
    }

    pub fn dimension(&self) -> usize {
        self.values[0].len()
    }

    /// All rows equal: the chain is an iid sequence.
    pub fn is_iid(&self) -> bool {
        let r0 = self.p.row(0);
        (1..self.n_states()).all(|i| self.p.row(i) == r0)
    }
}

/// Unique stationary law of a primitive stochastic matrix.
pub fn stationary_distribution(p: &Matrix) -> Result<Vec<f64>> {
    let n = p.dim();
    if !p.is_primitive() {
        return Err(Error::NoUniqueStationaryLaw(
            "chain is reducible or periodic".into(),
        ));
    }
    // (Pᵀ − I) π = 0 with the last equation replaced by Σ π = 1.
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    let mut pi = linalg::solve(a, b)?;
    for x in pi.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= s);
    let res = p
        .left_mul(&pi)
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if res > 1e-12 {
        return Err(Error::NoUniqueStationaryLaw(format!("residual {res:e} after solve")));
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn symmetric_two_state() {
        let pi = stationary_distribution(&m(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_state_by_hand() {
        let pi = stationary_distribution(&m(&[&[0.9, 0.1], &[0.2, 0.8]])).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let p = m(&[&[0.2, 0.5, 0.3], &[0.3, 0.2, 0.5], &[0.5, 0.3, 0.2]]);
        let pi = stationary_distribution(&p).unwrap();
        for x in pi {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn periodic_and_reducible_rejected() {
        assert!(matches!(
            stationary_distribution(&m(&[&[0.0, 1.0], &[1.0, 0.0]])),
            Err(Error::NoUniqueStationaryLaw(_))
        ));
        assert!(matches!(
            stationary_distribution(&m(&[&[1.0, 0.0], &[0.0, 1.0]])),
            Err(Error::NoUniqueStationaryLaw(_))
        ));
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(MarkovChain::scalar(&[vec![0.5, 0.4], vec![0.5, 0.5]], &[0.0, 1.0]).is_err());
        assert!(MarkovChain::scalar(&[vec![1.5, -0.5], vec![0.5, 0.5]], &[0.0, 1.0]).is_err());
    }
}
