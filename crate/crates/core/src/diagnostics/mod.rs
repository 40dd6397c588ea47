//! Chain diagnostics: integrated autocorrelation time, effective sample
//! size, cost per effective sample, thinning and posterior field moments.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::field::KlBasis;
use crate::{Error, Result};

/// Default window constant for the self-consistent cutoff.
pub const DEFAULT_WINDOW_FACTOR: f64 = 4.0;

/// Normalised autocorrelation `rho(t)` for `t = 0..n-1`, from the biased
/// autocovariance estimator computed by FFT.
pub fn autocorrelation(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 {
        return Err(Error::invalid("empty series"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let gamma0 = buf[0].re;
    let spread = series.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let magnitude = series.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if !(gamma0 > 0.0) || spread <= 1e-12 * magnitude {
        return Err(Error::DegenerateSeries);
    }
    Ok(buf[..n].iter().map(|c| c.re / gamma0).collect())
}

/// Integrated autocorrelation time `1 + 2 sum_{t=1}^{W} rho(t)` with the
/// smallest window `W >= c * tau(W)`, floored at 1.
pub fn integrated_autocorrelation_with(series: &[f64], window_factor: f64) -> Result<f64> {
    if series.len() < 10 {
        return Err(Error::invalid(format!(
            "series of length {} is too short (need 10)",
            series.len()
        )));
    }
    let rho = autocorrelation(series)?;
    let mut tau = 1.0;
    for (w, r) in rho.iter().enumerate().skip(1) {
        tau += 2.0 * r;
        if w as f64 >= window_factor * tau {
            break;
        }
    }
    Ok(tau.max(1.0))
}

pub fn integrated_autocorrelation(series: &[f64]) -> Result<f64> {
    integrated_autocorrelation_with(series, DEFAULT_WINDOW_FACTOR)
}

/// Per-component autocorrelation times of a chain stored one state per row.
pub fn component_taus(chain: &DMatrix<f64>) -> Result<Vec<f64>> {
    if chain.nrows() == 0 || chain.ncols() == 0 {
        return Err(Error::invalid("empty chain"));
    }
    chain
        .column_iter()
        .map(|c| integrated_autocorrelation(c.as_slice()))
        .collect()
}

/// `N / max_j tau_j` and the maximum tau.
pub fn effective_sample_size(chain: &DMatrix<f64>) -> Result<(f64, f64)> {
    let tau = component_taus(chain)?.into_iter().fold(1.0, f64::max);
    Ok((chain.nrows() as f64 / tau, tau))
}

/// Per-chain outcome used for cost comparisons. Times are seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_C")]
    pub n_coarse: usize,
    pub acceptance_rate: f64,
    pub t_fine: f64,
    pub t_train: f64,
    pub t_run: f64,
    #[serde(rename = "N_eff")]
    pub n_eff: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    /// Each chain is charged the full precomputation time.
    Conservative,
    /// Precomputation is shared by this many chains.
    Normalized { chains: usize },
}

/// `(t_fine + t_train + t_run) / N_eff`.
pub fn total_cost(summary: &ChainSummary, mode: CostMode) -> Result<f64> {
    if !(summary.n_eff > 0.0) {
        return Err(Error::invalid(format!(
            "effective sample size must be positive, got {}",
            summary.n_eff
        )));
    }
    let share = match mode {
        CostMode::Conservative => 1.0,
        CostMode::Normalized { chains } if chains > 0 => 1.0 / chains as f64,
        CostMode::Normalized { .. } => return Err(Error::invalid("chain count must be positive")),
    };
    Ok(((summary.t_fine + summary.t_train) * share + summary.t_run) / summary.n_eff)
}

/// Keeps every `ceil(tau)`-th state, starting with the first.
pub fn prune<T: Clone>(chain: &[T], tau: f64) -> Result<Vec<T>> {
    if !(tau >= 1.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("thinning interval {tau} must be at least 1")));
    }
    let stride = tau.ceil() as usize;
    Ok(chain.iter().step_by(stride).cloned().collect())
}

/// Nodal mean and unbiased variance of the log-transmissivity.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldStatistics {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub count: usize,
}

impl FieldStatistics {
    /// `node_index,mean_logT,var_logT` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_index,mean_logT,var_logT\n");
        for (i, (m, v)) in self.mean.iter().zip(self.variance.iter()).enumerate() {
            s.push_str(&format!("{i},{m},{v}\n"));
        }
        s
    }
}

pub fn field_statistics<'a, I>(samples: I, basis: &KlBasis) -> Result<FieldStatistics>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let m = basis.node_count();
    let mut mean = DVector::zeros(m);
    let mut m2 = DVector::zeros(m);
    let mut count = 0usize;
    for theta in samples {
        let field = basis.log_field(theta)?;
        count += 1;
        let delta = &field - &mean;
        mean += &delta / count as f64;
        m2 += delta.component_mul(&(&field - &mean));
    }
    if count < 2 {
        return Err(Error::invalid("field statistics need at least two samples"));
    }
    let variance = (m2 / (count - 1) as f64).map(|v: f64| v.max(0.0));
    Ok(FieldStatistics {
        mean,
        variance,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_series_floors() {
        let s: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rho = autocorrelation(&s).unwrap();
        assert!((rho[1] + 0.99).abs() < 1e-12);
        assert_eq!(integrated_autocorrelation(&s).unwrap(), 1.0);
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(
            integrated_autocorrelation(&[2.5; 50]),
            Err(Error::DegenerateSeries)
        ));
        assert!(integrated_autocorrelation(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cost_arithmetic() {
        let s = ChainSummary {
            n: 100,
            n_coarse: 0,
            acceptance_rate: 0.3,
            t_fine: 0.0,
            t_train: 0.0,
            t_run: 60.0,
            n_eff: 10.0,
            tau: 10.0,
        };
        assert_eq!(total_cost(&s, CostMode::Conservative).unwrap(), 6.0);
        let s2 = ChainSummary { t_fine: 64.0, t_train: 32.0, ..s.clone() };
        assert_eq!(total_cost(&s2, CostMode::Normalized { chains: 32 }).unwrap(), 6.3);
        assert!(total_cost(&ChainSummary { n_eff: 0.0, ..s }, CostMode::Conservative).is_err());
    }

    #[test]
    fn prune_edges() {
        let c: Vec<usize> = (0..10000).collect();
        assert_eq!(prune(&c, 1.0).unwrap(), c);
        assert_eq!(prune(&c, 181.0).unwrap().len(), 56);
        assert_eq!(prune(&c, 10000.0).unwrap(), vec![0]);
        assert!(prune(&c, 0.5).is_err());
    }
}
