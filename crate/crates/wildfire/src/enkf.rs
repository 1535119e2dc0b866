//! Randomized-data ensemble Kalman filter analysis step.
//!
//! The update is
//! `U_a = U_f + (1/(N-1)) A (HA)ᵀ (HCHᵀ + R)⁻¹ (D - HU_f)`
//! with the observation matrix H never materialized: `HU_f` comes from
//! applying the observation function columnwise and `HA` from centering it.
//! The m×m inverse is applied through the Sherman-Morrison-Woodbury
//! identity, which for diagonal R reduces the work to an N×N
//! symmetric-positive-definite solve; total cost is O(N³ + mN² + nN²).
//! The measured error covariance R is used directly, never the sample
//! covariance of the perturbed data, so the inner system stays well posed
//! for any ensemble.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fields::{FireState, Grid};
use crate::streams::{Purpose, SeedStream};

/// Which field a sample reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservedVariable {
    Temperature,
    Fuel,
}

/// Sampled grid indices with variable tags, the observed values, and the
/// diagonal error covariance.
#[derive(Debug, Clone)]
pub struct ObservationSpec {
    n_cells: usize,
    targets: Vec<(ObservedVariable, usize)>,
    values: Vec<f64>,
    variances: Vec<f64>,
}

impl ObservationSpec {
    pub fn new(
        n_cells: usize,
        targets: Vec<(ObservedVariable, usize)>,
        values: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<ObservationSpec> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("no observations".into()));
        }
        if targets.len() != values.len() || targets.len() != variances.len() {
            return Err(Error::ShapeMismatch(format!(
                "targets/values/variances have lengths {}/{}/{}",
                targets.len(),
                values.len(),
                variances.len()
            )));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "observation variance {v} is not > 0"
            )));
        }
        for &(_, cell) in &targets {
            if cell >= n_cells {
                return Err(Error::ObservationIndex {
                    index: cell,
                    len: n_cells,
                });
            }
        }
        Ok(ObservationSpec {
            n_cells,
            targets,
            values,
            variances,
        })
    }

    /// Sample T and S of a reference state every `stride` points along each
    /// axis, all with the same error variance.
    pub fn sample_strided(
        reference: &FireState,
        stride: usize,
        variance: f64,
    ) -> Result<ObservationSpec> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        let grid = reference.grid();
        let mut targets = Vec::new();
        let mut values = Vec::new();
        for iy in (0..grid.ny()).step_by(stride) {
            for ix in (0..grid.nx()).step_by(stride) {
                let c = grid.index(ix, iy);
                targets.push((ObservedVariable::Temperature, c));
                values.push(reference.temp()[c]);
            }
        }
        for iy in (0..grid.ny()).step_by(stride) {
            for ix in (0..grid.nx()).step_by(stride) {
                let c = grid.index(ix, iy);
                targets.push((ObservedVariable::Fuel, c));
                values.push(reference.fuel()[c]);
            }
        }
        let m = targets.len();
        ObservationSpec::new(grid.cells(), targets, values, vec![variance; m])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Index into the flattened state vector for observation `i`.
    fn flat_index(&self, i: usize) -> usize {
        let (var, cell) = self.targets[i];
        match var {
            ObservedVariable::Temperature => cell,
            ObservedVariable::Fuel => self.n_cells + cell,
        }
    }
}

/// Analysis configuration: regularization strength, the data-perturbation
/// toggle, and the seed machinery for the perturbation draws.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    /// Variance ρ of the gradient observation in the regularization pass.
    pub regularization: f64,
    /// Perturb the data per member (the randomized-data filter). Off makes
    /// every member see the same data vector.
    pub perturb_data: bool,
    /// Root seed for the perturbation substreams.
    pub seed: u64,
    /// Assimilation cycle label for the substreams.
    pub cycle: u32,
}

/// Apply the observation function to one state vector: pure selection of
/// the tagged entries (H is a 0/1 selection matrix).
pub fn observe(u: &[f64], spec: &ObservationSpec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        let idx = spec.flat_index(i);
        if idx >= u.len() {
            return Err(Error::ObservationIndex {
                index: idx,
                len: u.len(),
            });
        }
        out.push(u[idx]);
    }
    Ok(out)
}

/// Randomly perturbed data matrix: column j is `d + v_j` with
/// `v_j ~ N(0, diag(R))`, drawn from the per-member substream
/// `(DataPerturbation, cycle, j)`.
pub fn perturb_data(
    values: &[f64],
    variances: &[f64],
    n_members: usize,
    seeds: &SeedStream,
    cycle: u32,
) -> Array2<f64> {
    perturbed_columns(values, variances, n_members, seeds, Purpose::DataPerturbation, cycle)
}

fn perturbed_columns(
    values: &[f64],
    variances: &[f64],
    n_members: usize,
    seeds: &SeedStream,
    purpose: Purpose,
    cycle: u32,
) -> Array2<f64> {
    let m = values.len();
    let mut d = Array2::zeros((m, n_members));
    for j in 0..n_members {
        let mut rng = seeds.rng(purpose, cycle, j as u32);
        for i in 0..m {
            let noise: f64 = rng.sample(StandardNormal);
            d[[i, j]] = values[i] + variances[i].sqrt() * noise;
        }
    }
    d
}

fn replicated_columns(values: &[f64], n_members: usize) -> Array2<f64> {
    let m = values.len();
    Array2::from_shape_fn((m, n_members), |(i, _)| values[i])
}

/// Ensemble mean and anomaly matrix: `ū = (1/N) Σ u_i` and
/// `A = [u_1-ū, …, u_N-ū]`. The covariance `AAᵀ/(N-1)` is never formed.
pub fn ensemble_stats(matrix: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = matrix
        .mean_axis(Axis(1))
        .expect("ensemble matrix has at least one column");
    let anomalies = matrix - &mean.view().insert_axis(Axis(1));
    (mean, anomalies)
}

/// The EnKF analysis step: every forecast member is pulled toward its own
/// perturbed copy of the data. Matrix-free in H; see the module docs for
/// the linear algebra route.
pub fn analysis(
    forecast: &Array2<f64>,
    spec: &ObservationSpec,
    cfg: &AnalysisConfig,
) -> Result<Array2<f64>> {
    let n_members = forecast.ncols();
    if n_members < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis needs N >= 2 members, got {n_members}"
        )));
    }
    let seeds = SeedStream::new(cfg.seed);
    let data = if cfg.perturb_data {
        perturb_data(spec.values(), spec.variances(), n_members, &seeds, cfg.cycle)
    } else {
        replicated_columns(spec.values(), n_members)
    };

    // synthetic data per member, columnwise
    let mut synthetic = Array2::zeros((spec.len(), n_members));
    for (j, col) in forecast.axis_iter(Axis(1)).enumerate() {
        let obs = observe(col.as_slice().expect("standard layout column"), spec)?;
        synthetic.column_mut(j).assign(&Array1::from(obs));
    }

    analysis_core(forecast, &synthetic, &data, spec.variances())
}

/// Shared update for both the data pass and the gradient regularization
/// pass. `synthetic` holds `h(u_j)` per column and `data` the (possibly
/// perturbed) observations per column.
fn analysis_core(
    forecast: &Array2<f64>,
    synthetic: &Array2<f64>,
    data: &Array2<f64>,
    variances: &[f64],
) -> Result<Array2<f64>> {
    if forecast.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence(
            "forecast ensemble contains non-finite values".into(),
        ));
    }
    if data.iter().any(|x| !x.is_finite()) || synthetic.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence(
            "observations contain non-finite values".into(),
        ));
    }
    let n_members = forecast.ncols();
    let scale = 1.0 / (n_members as f64 - 1.0);

    let (_, anomalies) = ensemble_stats(forecast);
    let (_, obs_anomalies) = ensemble_stats(synthetic); // HA = h(u_j) centered

    let innovations = data - synthetic; // D - HU_f

    // R⁻¹ is a rowwise divide for diagonal R
    let r_col = Array1::from(variances.to_vec()).insert_axis(Axis(1));
    let rinv_innovations = &innovations / &r_col;
    let rinv_obs_anomalies = &obs_anomalies / &r_col;

    // inner N×N SPD system: M = I + (HA)ᵀ R⁻¹ (HA) / (N-1)
    let mut inner = obs_anomalies.t().dot(&rinv_obs_anomalies) * scale;
    for i in 0..n_members {
        inner[[i, i]] += 1.0;
    }
    let rhs = obs_anomalies.t().dot(&rinv_innovations);
    let solved = cholesky_solve(inner, rhs)?;

    // SMW: (HCHᵀ+R)⁻¹ Y = R⁻¹Y - (1/(N-1)) R⁻¹(HA) M⁻¹ (HA)ᵀ R⁻¹ Y
    let weighted = &rinv_innovations - &(rinv_obs_anomalies.dot(&solved) * scale);

    // gain application: U_f + (1/(N-1)) A (HA)ᵀ weighted
    let combination = obs_anomalies.t().dot(&weighted) * scale;
    Ok(forecast + &anomalies.dot(&combination))
}

/// Second analysis pass against the spatial gradient of the temperature
/// field: the observation operator is the forward-difference gradient
/// (both axes, stacked), the data is the gradient of the current ensemble
/// mean, and the error covariance is ρI. Penalizes large nonphysical
/// gradients that the span of a small ensemble can otherwise produce.
pub fn regularize(
    forecast: &Array2<f64>,
    grid: &Grid,
    cfg: &AnalysisConfig,
) -> Result<Array2<f64>> {
    if !(cfg.regularization > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization = {}, need > 0",
            cfg.regularization
        )));
    }
    let n_members = forecast.ncols();
    if n_members < 2 {
        return Err(Error::InvalidArgument(format!(
            "analysis needs N >= 2 members, got {n_members}"
        )));
    }

    let mut synthetic = Array2::zeros((gradient_len(grid), n_members));
    for (j, col) in forecast.axis_iter(Axis(1)).enumerate() {
        let g = temp_gradient(col.as_slice().expect("standard layout column"), grid);
        synthetic.column_mut(j).assign(&Array1::from(g));
    }
    let (mean, _) = ensemble_stats(forecast);
    let target = temp_gradient(mean.as_slice().expect("contiguous"), grid);

    let variances = vec![cfg.regularization; target.len()];
    let seeds = SeedStream::new(cfg.seed);
    let data = if cfg.perturb_data {
        perturbed_columns(
            &target,
            &variances,
            n_members,
            &seeds,
            Purpose::GradientPerturbation,
            cfg.cycle,
        )
    } else {
        replicated_columns(&target, n_members)
    };

    analysis_core(forecast, &synthetic, &data, &variances)
}

fn gradient_len(grid: &Grid) -> usize {
    let (nx, ny) = (grid.nx(), grid.ny());
    if grid.dims() == 1 {
        nx - 1
    } else {
        (nx - 1) * ny + nx * (ny - 1)
    }
}

/// Forward-difference gradient of the T block of a flattened state, x
/// differences then y differences.
fn temp_gradient(u: &[f64], grid: &Grid) -> Vec<f64> {
    let (nx, ny, dx) = (grid.nx(), grid.ny(), grid.dx());
    let t = &u[..grid.cells()];
    let mut g = Vec::with_capacity(gradient_len(grid));
    for iy in 0..ny {
        for ix in 0..nx - 1 {
            g.push((t[iy * nx + ix + 1] - t[iy * nx + ix]) / dx);
        }
    }
    if grid.dims() == 2 {
        for iy in 0..ny - 1 {
            for ix in 0..nx {
                g.push((t[(iy + 1) * nx + ix] - t[iy * nx + ix]) / dx);
            }
        }
    }
    g
}

/// Solve `M X = B` for SPD `M` by an unpivoted Cholesky factorization.
/// M is consumed as the factor workspace.
fn cholesky_solve(mut m: Array2<f64>, mut b: Array2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    debug_assert_eq!(n, b.nrows());

    for j in 0..n {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= m[[j, k]] * m[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SolveFailure(format!(
                "inner ensemble system is not positive definite at pivot {j} (d = {d})"
            )));
        }
        let d = d.sqrt();
        m[[j, j]] = d;
        for i in j + 1..n {
            let mut v = m[[i, j]];
            for k in 0..j {
                v -= m[[i, k]] * m[[j, k]];
            }
            m[[i, j]] = v / d;
        }
    }

    let ncols = b.ncols();
    for c in 0..ncols {
        // forward: L y = b
        for i in 0..n {
            let mut v = b[[i, c]];
            for k in 0..i {
                v -= m[[i, k]] * b[[k, c]];
            }
            b[[i, c]] = v / m[[i, i]];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut v = b[[i, c]];
            for k in i + 1..n {
                v -= m[[k, i]] * b[[k, c]];
            }
            b[[i, c]] = v / m[[i, i]];
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_single(n_cells: usize, cell: usize, value: f64, variance: f64) -> ObservationSpec {
        ObservationSpec::new(
            n_cells,
            vec![(ObservedVariable::Temperature, cell)],
            vec![value],
            vec![variance],
        )
        .unwrap()
    }

    #[test]
    fn observe_selects_tagged_entries() {
        let u = vec![10.0, 11.0, 12.0, 0.5, 0.6, 0.7]; // 3 cells: T then S
        let spec = spec_single(3, 0, 0.0, 1.0);
        assert_eq!(observe(&u, &spec).unwrap(), vec![10.0]);
        let spec = ObservationSpec::new(
            3,
            vec![
                (ObservedVariable::Temperature, 2),
                (ObservedVariable::Fuel, 1),
            ],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        assert_eq!(observe(&u, &spec).unwrap(), vec![12.0, 0.6]);
    }

    #[test]
    fn observe_everything_is_identity() {
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let mut targets = Vec::new();
        for c in 0..4 {
            targets.push((ObservedVariable::Temperature, c));
        }
        for c in 0..4 {
            targets.push((ObservedVariable::Fuel, c));
        }
        let spec = ObservationSpec::new(4, targets, vec![0.0; 8], vec![1.0; 8]).unwrap();
        assert_eq!(observe(&u, &spec).unwrap(), u);
    }

    #[test]
    fn observation_index_checked() {
        assert!(matches!(
            ObservationSpec::new(
                3,
                vec![(ObservedVariable::Fuel, 3)],
                vec![0.0],
                vec![1.0]
            ),
            Err(Error::ObservationIndex { .. })
        ));
    }

    #[test]
    fn strided_sampling_count_matches_paper_rule() {
        // 250×250 mesh sampled every 5 grid points, T and S: m = 2·50·50
        let grid = Grid::new_2d(250, 250, 2.0).unwrap();
        let state = FireState::uniform(grid, 300.0, 1.0);
        let spec = ObservationSpec::sample_strided(&state, 5, 10.0).unwrap();
        assert_eq!(spec.len(), 5000);
    }

    #[test]
    fn perturb_data_zero_variance_keeps_columns() {
        // variance must be > 0 in a spec, but perturb_data itself accepts 0
        let d = perturb_data(&[1.0, 2.0], &[0.0, 0.0], 3, &SeedStream::new(5), 0);
        for j in 0..3 {
            assert_eq!(d.column(j).to_vec(), vec![1.0, 2.0]);
        }
    }

    #[test]
    fn perturb_data_is_deterministic_per_member() {
        let seeds = SeedStream::new(9);
        let a = perturb_data(&[1.0; 4], &[10.0; 4], 3, &seeds, 2);
        let b = perturb_data(&[1.0; 4], &[10.0; 4], 5, &seeds, 2);
        // adding members does not reshuffle the noise of existing ones
        assert_eq!(a, b.slice(ndarray::s![.., ..3]).to_owned());
    }

    #[test]
    fn perturb_data_covariance_monte_carlo() {
        let variances = [10.0, 2.0, 0.5];
        let n = 10_000;
        let d = perturb_data(&[0.0; 3], &variances, n, &SeedStream::new(17), 0);
        for i in 0..3 {
            let row = d.row(i);
            let mean = row.sum() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
            assert!(
                (var - variances[i]).abs() / variances[i] < 0.1,
                "row {i}: {var} vs {}",
                variances[i]
            );
        }
    }

    #[test]
    fn zero_spread_ensemble_is_fixed_point() {
        let forecast = Array2::from_shape_fn((6, 4), |(i, _)| i as f64);
        let spec = spec_single(3, 1, 99.0, 1.0);
        let cfg = AnalysisConfig {
            regularization: 750.0,
            perturb_data: true,
            seed: 1,
            cycle: 0,
        };
        let analyzed = analysis(&forecast, &spec, &cfg).unwrap();
        assert_eq!(analyzed, forecast);
    }

    #[test]
    fn scalar_hand_example() {
        // n=1, m=1, N=2, U_f=[1,3], d=4, R=1, no perturbation:
        // C = 2, K = 2/3, members move by (2/3)(4 - u_i)
        let forecast = ndarray::array![[1.0, 3.0]];
        let spec = ObservationSpec::new(
            1,
            vec![(ObservedVariable::Temperature, 0)],
            vec![4.0],
            vec![1.0],
        )
        .unwrap();
        let cfg = AnalysisConfig {
            regularization: 1.0,
            perturb_data: false,
            seed: 0,
            cycle: 0,
        };
        let analyzed = analysis(&forecast, &spec, &cfg).unwrap();
        assert!((analyzed[[0, 0]] - 3.0).abs() < 1e-14);
        assert!((analyzed[[0, 1]] - 11.0 / 3.0).abs() < 1e-14);
    }

    /// Dense Gauss-Jordan inverse, the oracle for the SMW route.
    fn dense_inverse(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut inv: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for j in 0..n {
                a[col][j] /= p;
                inv[col][j] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
        inv
    }

    /// Textbook dense EnKF update, the oracle for the matrix-free path.
    fn dense_analysis(
        forecast: &Array2<f64>,
        spec: &ObservationSpec,
        data: &Array2<f64>,
    ) -> Array2<f64> {
        let n_members = forecast.ncols();
        let scale = 1.0 / (n_members as f64 - 1.0);
        let m = spec.len();
        // materialize H
        let mut h = Array2::zeros((m, forecast.nrows()));
        for i in 0..m {
            h[[i, spec.flat_index(i)]] = 1.0;
        }
        let (_, a) = ensemble_stats(forecast);
        let c = a.dot(&a.t()) * scale;
        let hc = h.dot(&c);
        let mut hcht = hc.dot(&h.t());
        for i in 0..m {
            hcht[[i, i]] += spec.variances()[i];
        }
        let rows: Vec<Vec<f64>> = (0..m).map(|i| hcht.row(i).to_vec()).collect();
        let inv = dense_inverse(rows);
        let inv = Array2::from_shape_fn((m, m), |(i, j)| inv[i][j]);
        let innovation = data - &h.dot(forecast);
        forecast + &c.dot(&h.t()).dot(&inv).dot(&innovation)
    }

    #[test]
    fn smw_matches_dense_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let n_cells = rng.random_range(2..10usize);
            let n = 2 * n_cells;
            let n_members = rng.random_range(2..8usize);
            let m = rng.random_range(1..=n_cells);
            let forecast = Array2::from_shape_fn((n, n_members), |_| rng.random_range(-3.0..3.0));
            let targets: Vec<(ObservedVariable, usize)> = (0..m)
                .map(|i| {
                    if rng.random_bool(0.5) {
                        (ObservedVariable::Temperature, i)
                    } else {
                        (ObservedVariable::Fuel, i)
                    }
                })
                .collect();
            let values: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let variances: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..4.0)).collect();
            let spec = ObservationSpec::new(n_cells, targets, values, variances).unwrap();
            let cfg = AnalysisConfig {
                regularization: 1.0,
                perturb_data: false,
                seed: trial,
                cycle: 0,
            };
            let fast = analysis(&forecast, &spec, &cfg).unwrap();
            let data = replicated_columns(spec.values(), n_members);
            let dense = dense_analysis(&forecast, &spec, &data);
            for (x, y) in fast.iter().zip(dense.iter()) {
                assert!(
                    (x - y).abs() < 1e-10 * y.abs().max(1.0),
                    "trial {trial}: {x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn analysis_stays_in_forecast_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let forecast = Array2::from_shape_fn((30, 5), |_| rng.random_range(-1.0..1.0));
        let targets: Vec<_> = (0..7).map(|i| (ObservedVariable::Temperature, i)).collect();
        let values: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = ObservationSpec::new(15, targets, values, vec![0.5; 7]).unwrap();
        let cfg = AnalysisConfig {
            regularization: 1.0,
            perturb_data: true,
            seed: 21,
            cycle: 3,
        };
        let analyzed = analysis(&forecast, &spec, &cfg).unwrap();
        let (_, anomalies) = ensemble_stats(&forecast);
        let delta = &analyzed - &forecast;
        // least-squares projection of each update onto the anomaly span
        let gram = anomalies.t().dot(&anomalies);
        let rhs = anomalies.t().dot(&delta);
        let coef = cholesky_solve(
            gram + Array2::<f64>::eye(5) * 1e-12,
            rhs,
        )
        .unwrap();
        let residual = &delta - &anomalies.dot(&coef);
        let norm = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "projection residual {norm}");
    }

    #[test]
    fn gaussian_linear_consistency() {
        // scalar state, exact Kalman posterior as oracle
        let n_members = 10_000;
        let prior_mean = 1.0;
        let prior_var = 4.0;
        let data_value = 3.0;
        let data_var = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let forecast = Array2::from_shape_fn((1, n_members), |_| {
            let z: f64 = rng.sample(StandardNormal);
            prior_mean + prior_var.sqrt() * z
        });
        let spec = spec_single(1, 0, data_value, data_var);
        let cfg = AnalysisConfig {
            regularization: 1.0,
            perturb_data: true,
            seed: 4242,
            cycle: 0,
        };
        let analyzed = analysis(&forecast, &spec, &cfg).unwrap();
        let mean = analyzed.sum() / n_members as f64;
        let var = analyzed
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n_members as f64 - 1.0);
        let gain = prior_var / (prior_var + data_var);
        let post_mean = prior_mean + gain * (data_value - prior_mean);
        let post_var = (1.0 - gain) * prior_var;
        assert!(
            (mean - post_mean).abs() / post_mean.abs() < 0.05,
            "mean {mean} vs {post_mean}"
        );
        assert!(
            (var - post_var).abs() / post_var < 0.05,
            "var {var} vs {post_var}"
        );
    }

    #[test]
    fn analysis_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let forecast = Array2::from_shape_fn((20, 6), |_| rng.random_range(-1.0..1.0));
        let spec = spec_single(10, 4, 0.3, 0.8);
        let cfg = AnalysisConfig {
            regularization: 5.0,
            perturb_data: true,
            seed: 77,
            cycle: 5,
        };
        let a = analysis(&forecast, &spec, &cfg).unwrap();
        let b = analysis(&forecast, &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analysis_rejects_non_finite() {
        let mut forecast = Array2::zeros((4, 3));
        forecast[[1, 1]] = f64::NAN;
        let spec = spec_single(2, 0, 1.0, 1.0);
        let cfg = AnalysisConfig {
            regularization: 1.0,
            perturb_data: false,
            seed: 0,
            cycle: 0,
        };
        assert!(matches!(
            analysis(&forecast, &spec, &cfg),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn regularize_identical_members_unchanged() {
        let grid = Grid::new_2d(4, 4, 2.0).unwrap();
        let col: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let forecast =
            Array2::from_shape_fn((32, 3), |(i, _)| col[i]);
        let cfg = AnalysisConfig {
            regularization: 750.0,
            perturb_data: true,
            seed: 3,
            cycle: 1,
        };
        let out = regularize(&forecast, &grid, &cfg).unwrap();
        assert_eq!(out, forecast);
    }

    #[test]
    fn regularize_huge_rho_is_negligible() {
        let grid = Grid::new_2d(5, 5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let forecast = Array2::from_shape_fn((50, 6), |_| rng.random_range(0.0..2.0));
        let cfg = AnalysisConfig {
            regularization: 1e12,
            perturb_data: true,
            seed: 15,
            cycle: 2,
        };
        let out = regularize(&forecast, &grid, &cfg).unwrap();
        let max_change = (&out - &forecast)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max_change < 1e-6, "max change {max_change}");
        assert!(regularize(&forecast, &grid, &AnalysisConfig { regularization: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn regularize_smooths_gradient_outliers() {
        // one member with a sharp temperature jump gets pulled toward the
        // ensemble mean gradient
        let grid = Grid::new_2d(6, 6, 2.0).unwrap();
        let smooth: Vec<f64> = (0..72)
            .map(|i| if i < 36 { 300.0 + (i % 6) as f64 } else { 1.0 })
            .collect();
        let mut spiky = smooth.clone();
        spiky[14] += 400.0;
        let mut forecast = Array2::zeros((72, 4));
        for j in 0..3 {
            forecast.column_mut(j).assign(&Array1::from(smooth.clone()));
        }
        forecast.column_mut(3).assign(&Array1::from(spiky));
        let cfg = AnalysisConfig {
            regularization: 10.0,
            perturb_data: false,
            seed: 0,
            cycle: 0,
        };
        let out = regularize(&forecast, &grid, &cfg).unwrap();
        let before = forecast[[14, 3]] - 300.0 - 2.0;
        let after = out[[14, 3]] - 300.0 - 2.0;
        assert!(after.abs() < before.abs(), "{after} vs {before}");
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let m = ndarray::array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = ndarray::array![[1.0], [2.0], [3.0]];
        let x = cholesky_solve(m.clone(), b.clone()).unwrap();
        let back = m.dot(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        // not positive definite
        let bad = ndarray::array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_solve(bad, ndarray::array![[1.0], [1.0]]).is_err());
    }
}
