//! Count data: one multinomial observation vector per covariate.

use nalgebra::DMatrix;

use crate::error::{invalid, validation, Result};

/// `C x K` matrix of nonnegative integer counts with cached row totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMatrix {
    n_covariates: usize,
    n_categories: usize,
    counts: Vec<u64>,
    row_totals: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(n_covariates: usize, n_categories: usize) -> Result<Self> {
        if n_covariates < 1 {
            return Err(invalid("count matrix needs at least one covariate"));
        }
        if n_categories < 2 {
            return Err(invalid("count matrix needs at least two categories"));
        }
        Ok(Self {
            n_covariates,
            n_categories,
            counts: vec![0; n_covariates * n_categories],
            row_totals: vec![0; n_covariates],
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        let mut m = Self::zeros(rows.len(), k)?;
        for (c, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(invalid(format!("row {c} has {} entries, expected {k}", row.len())));
            }
            for (j, &x) in row.iter().enumerate() {
                m.set(c, j, x);
            }
        }
        Ok(m)
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    #[inline]
    pub fn get(&self, c: usize, k: usize) -> u64 {
        self.counts[c * self.n_categories + k]
    }

    pub fn set(&mut self, c: usize, k: usize, value: u64) {
        let idx = c * self.n_categories + k;
        self.row_totals[c] = self.row_totals[c] - self.counts[idx] + value;
        self.counts[idx] = value;
    }

    pub fn increment(&mut self, c: usize, k: usize) {
        self.counts[c * self.n_categories + k] += 1;
        self.row_totals[c] += 1;
    }

    pub fn row(&self, c: usize) -> &[u64] {
        &self.counts[c * self.n_categories..(c + 1) * self.n_categories]
    }

    pub fn row_totals(&self) -> &[u64] {
        &self.row_totals
    }

    pub fn total(&self) -> u64 {
        self.row_totals.iter().sum()
    }

    /// Parses `covariate_id,k1,...,kK` CSV. Rows are placed by covariate id,
    /// which must cover `0..C` exactly once.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| validation("count CSV is empty"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"covariate_id") {
            return Err(validation("count CSV header must start with `covariate_id`"));
        }
        let k = cols.len() - 1;
        for (j, name) in cols[1..].iter().enumerate() {
            if *name != format!("k{}", j + 1) {
                return Err(validation(format!("count CSV column {} must be named k{}, got `{name}`", j + 1, j + 1)));
            }
        }
        let mut rows: Vec<(usize, Vec<u64>)> = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != k + 1 {
                return Err(validation(format!("count CSV line {}: expected {} fields", line_no + 2, k + 1)));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| validation(format!("count CSV line {}: bad covariate id", line_no + 2)))?;
            let vals =
                fields[1..].iter().map(|f| f.parse::<u64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(
                    |_| validation(format!("count CSV line {}: counts must be nonnegative integers", line_no + 2)),
                )?;
            rows.push((id, vals));
        }
        let c = rows.len();
        let mut ordered: Vec<Option<Vec<u64>>> = vec![None; c];
        for (id, vals) in rows {
            if id >= c || ordered[id].is_some() {
                return Err(validation(format!("covariate ids must be a permutation of 0..{c}, saw {id}")));
            }
            ordered[id] = Some(vals);
        }
        let rows: Vec<Vec<u64>> = ordered.into_iter().map(|r| r.expect("checked")).collect();
        Self::from_rows(&rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("covariate_id");
        for j in 0..self.n_categories {
            out.push_str(&format!(",k{}", j + 1));
        }
        out.push('\n');
        for c in 0..self.n_covariates {
            out.push_str(&c.to_string());
            for &x in self.row(c) {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Binomial-expansion statistics of the stick-breaking likelihood.
///
/// `b[(c,k)] = N_c - sum_{j<k} x_cj` and `kappa[(c,k)] = x_ck - b[(c,k)]/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct StickStats {
    pub b: DMatrix<f64>,
    pub kappa: DMatrix<f64>,
    /// `sum_{c,k} log C(b_ck, x_ck)`, a data-only constant of the ELBO.
    pub log_binom: f64,
    /// `sum_{c,k} b_ck`.
    pub total_trials: f64,
}

impl StickStats {
    pub fn n_covariates(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.b.ncols()
    }

    /// Inverts [`compute_stick_stats`]: `x_ck = kappa_ck + b_ck/2`, the last
    /// category taking whatever the sticks leave over.
    pub fn counts(&self) -> Result<CountMatrix> {
        let (c_n, k_n) = (self.n_covariates(), self.n_factors());
        let rows = (0..c_n)
            .map(|c| {
                let mut row = Vec::with_capacity(k_n + 1);
                let mut remaining = 0.0;
                for k in 0..k_n {
                    let b = self.b[(c, k)];
                    if k == 0 {
                        remaining = b;
                    }
                    let x = self.kappa[(c, k)] + 0.5 * b;
                    row.push(x.round() as u64);
                    remaining -= x;
                }
                row.push(remaining.round().max(0.0) as u64);
                row
            })
            .collect::<Vec<_>>();
        CountMatrix::from_rows(&rows)
    }
}

pub fn compute_stick_stats(x: &CountMatrix) -> StickStats {
    let c_n = x.n_covariates();
    let k_n = x.n_categories() - 1;
    let max_n = x.row_totals().iter().copied().max().unwrap_or(0) as usize;
    let mut ln_fact = vec![0.0f64; max_n + 1];
    for i in 1..=max_n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let mut b = DMatrix::zeros(c_n, k_n);
    let mut kappa = DMatrix::zeros(c_n, k_n);
    let mut log_binom = 0.0;
    let mut total_trials = 0.0;
    for c in 0..c_n {
        let mut remaining = x.row_totals()[c];
        for k in 0..k_n {
            let xk = x.get(c, k);
            b[(c, k)] = remaining as f64;
            kappa[(c, k)] = xk as f64 - 0.5 * remaining as f64;
            log_binom += ln_fact[remaining as usize] - ln_fact[xk as usize] - ln_fact[(remaining - xk) as usize];
            total_trials += remaining as f64;
            remaining -= xk;
        }
    }
    StickStats { b, kappa, log_binom, total_trials }
}
