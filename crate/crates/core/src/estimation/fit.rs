//! Lineshape fitting: binomial maximum likelihood for counts, least squares
//! for exact probabilities, both by a damped Gauss-Newton (Levenberg-Marquardt)
//! search from a deterministic set of starts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lineshape::{lineshape_grad, LineshapeParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::scan::{AxisParam, PointData, SpectrumDataset};
use crate::units::Dimension;

/// Parameters held at their initial values (`true` = fixed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedParams {
    pub a: bool,
    pub omega_line: bool,
    pub tau: bool,
    pub alpha: bool,
    pub delta0: bool,
}

impl Default for FixedParams {
    /// The pulse time is known, the rest is fitted.
    fn default() -> Self {
        Self {
            a: false,
            omega_line: false,
            tau: true,
            alpha: false,
            delta0: false,
        }
    }
}

impl FixedParams {
    pub fn none() -> Self {
        Self {
            tau: false,
            ..Self::default()
        }
    }

    fn to_array(self) -> [bool; 5] {
        [self.a, self.omega_line, self.tau, self.alpha, self.delta0]
    }
}

/// Per-parameter standard errors; zero for fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub a: f64,
    pub omega_line: f64,
    pub tau: f64,
    pub alpha: f64,
    pub delta0: f64,
}

impl ParamErrors {
    fn from_array(v: [f64; 5]) -> Self {
        Self {
            a: v[0],
            omega_line: v[1],
            tau: v[2],
            alpha: v[3],
            delta0: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    BinomialMle,
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LineshapeParams,
    /// Present only for converged fits.
    pub std_errors: Option<ParamErrors>,
    /// Binomial log-likelihood without the combinatorial constant, or
    /// `−½ Σ r²` for least squares.
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_points: usize,
    pub method: FitMethod,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Counts { k: Vec<u64>, n: Vec<u64> },
    Probabilities(Vec<f64>),
}

/// Detunings (rad/s) with their observations.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    pub x: Vec<f64>,
    pub obs: Observations,
}

impl FitData {
    /// Extracts the series of one outcome from a one-axis frequency scan.
    pub fn from_dataset(ds: &SpectrumDataset, target: &str) -> Result<Self> {
        if ds.axes.len() != 1 {
            return Err(Error::Dataset(
                "lineshape fits need a one-axis dataset".into(),
            ));
        }
        let axis = AxisParam::from_column(&ds.axes[0])
            .ok_or_else(|| Error::Dataset(format!("unknown axis column {}", ds.axes[0])))?;
        if axis.dimension() != Dimension::Frequency {
            return Err(Error::Dataset(
                "lineshape fits need a frequency axis".into(),
            ));
        }
        let col = ds.outcome_column(target)?;
        let x = ds
            .points
            .iter()
            .map(|p| axis.from_column_unit(p.coords[0]))
            .collect();
        let obs = if ds.is_sampled() {
            let mut k = Vec::with_capacity(ds.points.len());
            let mut n = Vec::with_capacity(ds.points.len());
            for p in &ds.points {
                match &p.data {
                    PointData::Counts { counts, shots } => {
                        k.push(counts[col]);
                        n.push(*shots);
                    }
                    PointData::Probabilities(_) => {
                        return Err(Error::Dataset("mixed point types".into()))
                    }
                }
            }
            Observations::Counts { k, n }
        } else {
            Observations::Probabilities(ds.series(target)?)
        };
        Ok(Self { x, obs })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        match &self.obs {
            Observations::Probabilities(p) => p.clone(),
            Observations::Counts { k, n } => k
                .iter()
                .zip(n)
                .map(|(&k, &n)| k as f64 / n as f64)
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let len = match &self.obs {
            Observations::Counts { k, n } => {
                if k.len() != n.len() || k.iter().zip(n).any(|(k, n)| k > n || *n == 0) {
                    return Err(Error::Dataset(
                        "counts must satisfy 0 <= k <= shots, shots > 0".into(),
                    ));
                }
                if k.iter().all(|&k| k == 0) {
                    return Err(Error::DegenerateData("all counts are zero".into()));
                }
                k.len()
            }
            Observations::Probabilities(p) => {
                if p.iter().all(|&p| p == 0.0) {
                    return Err(Error::DegenerateData("all probabilities are zero".into()));
                }
                p.len()
            }
        };
        if len != self.x.len() {
            return Err(Error::Dataset(
                "detuning and observation lengths differ".into(),
            ));
        }
        if len < 5 {
            return Err(Error::DegenerateData(format!(
                "{len} points, at least 5 needed"
            )));
        }
        Ok(())
    }

    /// Starting point: contrast and centre from the highest point, π pulse.
    pub fn initial_guess(&self, tau: f64, alpha: f64) -> LineshapeParams {
        let y = self.frequencies();
        let k = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        LineshapeParams {
            a: y[k].clamp(0.05, 1.0),
            omega_line: std::f64::consts::PI / tau,
            tau,
            alpha,
            delta0: self.x[k],
        }
    }
}

const MAX_ITER: usize = 500;
const MIN_STARTS: usize = 8;
/// Keeps `ln p` finite where the model touches 0 or 1.
const PROB_GUARD: f64 = 1e-12;

struct Objective<'a> {
    data: &'a FitData,
    free: Vec<usize>,
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    /// Gauss-Newton (least squares) or expected-information (binomial) curvature.
    approx_hess: DMatrix<f64>,
}

impl Objective<'_> {
    fn method(&self) -> FitMethod {
        match self.data.obs {
            Observations::Counts { .. } => FitMethod::BinomialMle,
            Observations::Probabilities(_) => FitMethod::LeastSquares,
        }
    }

    fn eval(&self, p: &LineshapeParams) -> Eval {
        let m = self.free.len();
        let mut f = 0.0;
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        for (i, &x) in self.data.x.iter().enumerate() {
            let (v, g) = lineshape_grad(p, x);
            let gf = DVector::from_iterator(m, self.free.iter().map(|&j| g[j]));
            let (residual_weight, curvature) = match &self.data.obs {
                Observations::Probabilities(y) => {
                    let r = v - y[i];
                    f += 0.5 * r * r;
                    (r, 1.0)
                }
                Observations::Counts { k, n } => {
                    let (k, n) = (k[i] as f64, n[i] as f64);
                    let q = v.clamp(PROB_GUARD, 1.0 - PROB_GUARD);
                    let (up, down) = (
                        if k > 0.0 { k * q.ln() } else { 0.0 },
                        if k < n { (n - k) * (1.0 - q).ln() } else { 0.0 },
                    );
                    f -= up + down;
                    (-(k / q - (n - k) / (1.0 - q)), n / (q * (1.0 - q)))
                }
            };
            grad.axpy(residual_weight, &gf, 1.0);
            hess.ger(curvature, &gf, &gf, 1.0);
        }
        Eval {
            f,
            grad,
            approx_hess: hess,
        }
    }

    fn value(&self, p: &LineshapeParams) -> f64 {
        self.eval(p).f
    }

    fn with_free(&self, base: &LineshapeParams, v: &DVector<f64>) -> LineshapeParams {
        let mut a = base.to_array();
        for (slot, &j) in self.free.iter().enumerate() {
            a[j] = v[slot];
        }
        project(LineshapeParams::from_array(a), base)
    }

    fn free_values(&self, p: &LineshapeParams) -> DVector<f64> {
        let a = p.to_array();
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&j| a[j]))
    }

    /// Slots whose parameter sits on a bound with the descent direction
    /// pointing outward.
    fn blocked(&self, p: &LineshapeParams, grad: &DVector<f64>) -> Vec<bool> {
        self.free
            .iter()
            .enumerate()
            .map(|(slot, &j)| {
                j == 0 && ((p.a >= 1.0 && grad[slot] < 0.0) || (p.a <= 0.0 && grad[slot] > 0.0))
            })
            .collect()
    }

    /// Gradient and curvature with blocked directions removed.
    fn restrict_to_bounds(&self, p: &LineshapeParams, e: &Eval) -> (DVector<f64>, DMatrix<f64>) {
        let blocked = self.blocked(p, &e.grad);
        let mut g = e.grad.clone();
        let mut h = e.approx_hess.clone();
        for (slot, &b) in blocked.iter().enumerate() {
            if b {
                g[slot] = 0.0;
                h.row_mut(slot).fill(0.0);
                h.column_mut(slot).fill(0.0);
                h[(slot, slot)] = 1.0;
            }
        }
        (g, h)
    }

    /// Observed information: central differences of the analytic gradient.
    fn observed_hessian(&self, p: &LineshapeParams) -> DMatrix<f64> {
        let m = self.free.len();
        let v0 = self.free_values(p);
        let mut h = DMatrix::zeros(m, m);
        for c in 0..m {
            let j = self.free[c];
            let scale = if j == 4 {
                p.omega_line / p.alpha.max(1e-12)
            } else {
                v0[c].abs().max(1e-3)
            };
            let step = 1e-5 * scale;
            let mut up = v0.clone();
            let mut dn = v0.clone();
            up[c] += step;
            dn[c] -= step;
            let col = (self.eval(&self.raw(p, &up)).grad - self.eval(&self.raw(p, &dn)).grad)
                / (2.0 * step);
            h.set_column(c, &col);
        }
        0.5 * (&h + h.transpose())
    }

    /// Parameters without projection, for differentiation at the bounds.
    fn raw(&self, base: &LineshapeParams, v: &DVector<f64>) -> LineshapeParams {
        let mut a = base.to_array();
        for (slot, &j) in self.free.iter().enumerate() {
            a[j] = v[slot];
        }
        LineshapeParams::from_array(a)
    }
}

fn project(mut p: LineshapeParams, prev: &LineshapeParams) -> LineshapeParams {
    p.a = p.a.clamp(0.0, 1.0);
    p.omega_line = p.omega_line.max(1e-3 * prev.omega_line);
    p.alpha = p.alpha.max(1e-3 * prev.alpha);
    p.tau = p.tau.max(0.0);
    p
}

struct LocalFit {
    params: LineshapeParams,
    f: f64,
    converged: bool,
    iterations: usize,
}

fn local_search(obj: &Objective, start: LineshapeParams) -> LocalFit {
    let mut p = start;
    let mut e = obj.eval(&p);
    let mut lambda = 1e-3;
    for it in 0..MAX_ITER {
        let m = obj.free.len();
        let (grad, hess) = obj.restrict_to_bounds(&p, &e);
        let diag = hess.diagonal().map(|d| d.max(1e-300));
        let decrement = hess
            .clone()
            .cholesky()
            .map_or(f64::INFINITY, |c| grad.dot(&c.solve(&grad)));
        if decrement <= (1e-12 * e.f.abs()).max(1e-26) {
            return LocalFit {
                params: p,
                f: e.f,
                converged: true,
                iterations: it,
            };
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = hess.clone();
            for k in 0..m {
                a[(k, k)] += lambda * diag[k];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&-&grad);
            let trial = obj.with_free(&p, &(obj.free_values(&p) + step));
            let ft = obj.value(&trial);
            if ft.is_finite() && ft < e.f {
                p = trial;
                e = obj.eval(&p);
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left: a minimum up to rounding.
            let ok = decrement <= (1e-8 * e.f.abs()).max(1e-20);
            return LocalFit {
                params: p,
                f: e.f,
                converged: ok,
                iterations: it,
            };
        }
    }
    LocalFit {
        params: p,
        f: e.f,
        converged: false,
        iterations: MAX_ITER,
    }
}

/// Fits the lineshape to `data`. Parameters marked in `fixed` stay at their
/// `init` values. When `alpha` is free the search restarts from at least
/// eight narrowing factors spread over `[0.5, 2.5·n_spins]`; the best
/// converged optimum wins, ties going to the smaller `alpha`.
pub fn fit_points(
    data: &FitData,
    init: &LineshapeParams,
    fixed: FixedParams,
    n_spins: usize,
) -> Result<FitResult> {
    data.validate()?;
    init.validate()?;
    let mask = fixed.to_array();
    let free: Vec<usize> = (0..5).filter(|&j| !mask[j]).collect();
    if free.is_empty() {
        return Err(Error::InvalidParameter(
            "every lineshape parameter is fixed".into(),
        ));
    }
    let obj = Objective { data, free };

    let mut starts = vec![*init];
    if !fixed.alpha {
        let hi = 2.5 * n_spins.max(1) as f64;
        for j in 0..MIN_STARTS {
            let alpha = 0.5 + (hi - 0.5) * j as f64 / (MIN_STARTS - 1) as f64;
            starts.push(LineshapeParams { alpha, ..*init });
        }
    }

    let mut best: Option<LocalFit> = None;
    for s in starts {
        let r = local_search(&obj, s);
        if !r.f.is_finite() {
            continue;
        }
        best = Some(match best {
            None => r,
            Some(b) => {
                if better(&r, &b) {
                    r
                } else {
                    b
                }
            }
        });
    }
    let best =
        best.ok_or_else(|| Error::NonConvergence("no start produced a finite objective".into()))?;

    let method = obj.method();
    let (std_errors, converged) = if best.converged {
        standard_errors(&obj, &best.params)
    } else {
        (None, false)
    };
    let log_likelihood = -best.f;
    Ok(FitResult {
        params: best.params,
        std_errors,
        log_likelihood,
        converged,
        n_points: data.len(),
        method,
        iterations: best.iterations,
    })
}

fn better(r: &LocalFit, b: &LocalFit) -> bool {
    if r.converged != b.converged {
        return r.converged;
    }
    let tie = (r.f - b.f).abs() <= 1e-9 * (1.0 + r.f.abs().max(b.f.abs()));
    if tie {
        r.params.alpha < b.params.alpha
    } else {
        r.f < b.f
    }
}

fn standard_errors(obj: &Objective, p: &LineshapeParams) -> (Option<ParamErrors>, bool) {
    let m = obj.free.len();
    let e = obj.eval(p);
    let blocked = obj.blocked(p, &e.grad);
    let pin = |mut h: DMatrix<f64>| {
        for (slot, &b) in blocked.iter().enumerate() {
            if b {
                h.row_mut(slot).fill(0.0);
                h.column_mut(slot).fill(0.0);
                h[(slot, slot)] = 1.0;
            }
        }
        h
    };
    let (cov, ok) = match obj.method() {
        FitMethod::BinomialMle => match pin(obj.observed_hessian(p)).cholesky() {
            Some(c) => (c.inverse(), true),
            None => return (None, false),
        },
        FitMethod::LeastSquares => {
            let dof = obj.data.len().saturating_sub(m).max(1) as f64;
            let sigma2 = 2.0 * e.f / dof;
            match pin(e.approx_hess.clone()).cholesky() {
                Some(c) => (c.inverse() * sigma2, true),
                None => return (None, false),
            }
        }
    };
    let mut se = [0.0; 5];
    for (slot, &j) in obj.free.iter().enumerate() {
        se[j] = if blocked[slot] {
            0.0
        } else {
            cov[(slot, slot)].max(0.0).sqrt()
        };
    }
    (Some(ParamErrors::from_array(se)), ok)
}

/// Fits the series of `target` in a one-axis dataset.
pub fn fit_lineshape(
    data: &SpectrumDataset,
    target: &str,
    init: &LineshapeParams,
    fixed: FixedParams,
) -> Result<FitResult> {
    fit_points(
        &FitData::from_dataset(data, target)?,
        init,
        fixed,
        target.len(),
    )
}

/// Names of the free parameters in covariance order.
pub fn free_parameter_names(fixed: FixedParams) -> Vec<&'static str> {
    let mask = fixed.to_array();
    (0..5)
        .filter(|&j| !mask[j])
        .map(|j| PARAM_NAMES[j])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::lineshape::{lineshape, map_hamiltonian_to_lineshape, SpectrumKind};
    use crate::hamiltonian::CouplingAxis;
    use crate::scan::{point_rng, run_scan, sample_counts, AxisSpec, Ion, Model, ScanConfig};
    use crate::units::hz;
    use approx::assert_abs_diff_eq;

    const OMEGA: f64 = 2.0 * std::f64::consts::PI * 127.5;

    fn scan(model: Model, init: &str, axis: AxisParam, span_hz: f64) -> SpectrumDataset {
        let cfg = ScanConfig::new(
            model,
            init,
            AxisSpec::new(axis, hz(-span_hz), hz(span_hz), 41),
        );
        run_scan(&cfg).unwrap()
    }

    fn residual(ds: &SpectrumDataset, label: &str, p: &LineshapeParams) -> f64 {
        let d = FitData::from_dataset(ds, label).unwrap();
        d.x.iter()
            .zip(d.frequencies())
            .map(|(&x, y)| (lineshape(p, x) - y).abs())
            .fold(0.0, f64::max)
    }

    fn mapped(kind: SpectrumKind) -> LineshapeParams {
        let (w, alpha) = map_hamiltonian_to_lineshape(OMEGA, kind);
        LineshapeParams::pi_pulse(w, alpha)
    }

    #[test]
    fn hamiltonian_spectra_obey_lineshape_exactly() {
        let even = scan(
            Model::EffectiveIsing { omega: OMEGA },
            "dd",
            AxisParam::Delta1,
            1000.0,
        );
        assert!(residual(&even, "uu", &mapped(SpectrumKind::Even)) < 1e-9);
        let odd = scan(
            Model::EffectiveIsing { omega: OMEGA },
            "du",
            AxisParam::Delta2,
            1000.0,
        );
        assert!(residual(&odd, "ud", &mapped(SpectrumKind::Odd)) < 1e-9);
        let single = scan(
            Model::SingleSpin {
                omega: OMEGA,
                ion: Ion::First,
            },
            "d",
            AxisParam::Delta1,
            1000.0,
        );
        assert!(residual(&single, "u", &mapped(SpectrumKind::Single)) < 1e-9);
        for n in 3..=4 {
            let reg = scan(
                Model::NSpin {
                    omega: OMEGA,
                    n,
                    axis: CouplingAxis::X,
                },
                &"d".repeat(n),
                AxisParam::Delta1,
                1000.0,
            );
            assert!(residual(&reg, &"u".repeat(n), &mapped(SpectrumKind::Register(n))) < 1e-9);
        }
    }

    fn fit_alpha(ds: &SpectrumDataset, label: &str) -> FitResult {
        let d = FitData::from_dataset(ds, label).unwrap();
        let init = d.initial_guess(ms_pi(), 1.0);
        fit_points(&d, &init, FixedParams::default(), label.len()).unwrap()
    }

    fn ms_pi() -> f64 {
        crate::ms::pi_time(OMEGA)
    }

    #[test]
    fn fits_recover_narrowing_factors() {
        let even = fit_alpha(
            &scan(
                Model::EffectiveIsing { omega: OMEGA },
                "dd",
                AxisParam::Delta1,
                600.0,
            ),
            "uu",
        );
        assert!(even.converged);
        assert_abs_diff_eq!(even.params.alpha, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(even.params.a, 1.0, epsilon = 1e-6);
        let single = fit_alpha(
            &scan(
                Model::SingleSpin {
                    omega: OMEGA,
                    ion: Ion::First,
                },
                "d",
                AxisParam::Delta1,
                1200.0,
            ),
            "u",
        );
        assert_abs_diff_eq!(single.params.alpha, 1.0, epsilon = 1e-6);
        let three = fit_alpha(
            &scan(
                Model::NSpin {
                    omega: OMEGA,
                    n: 3,
                    axis: CouplingAxis::X,
                },
                "ddd",
                AxisParam::Delta1,
                400.0,
            ),
            "uuu",
        );
        assert_abs_diff_eq!(three.params.alpha, 3.0, epsilon = 1e-6);
    }

    #[test]
    fn synthetic_lineshape_round_trip() {
        let truth = LineshapeParams {
            a: 0.9,
            omega_line: 2.0 * OMEGA,
            tau: ms_pi(),
            alpha: 2.0,
            delta0: hz(30.0),
        };
        let x: Vec<f64> = (0..31)
            .map(|i| hz(-500.0 + 1000.0 * i as f64 / 30.0))
            .collect();
        let y = x.iter().map(|&d| lineshape(&truth, d)).collect();
        let data = FitData {
            x,
            obs: Observations::Probabilities(y),
        };
        let init = LineshapeParams {
            a: 0.7,
            omega_line: 1.7 * OMEGA,
            alpha: 1.0,
            delta0: 0.0,
            ..truth
        };
        let r = fit_points(&data, &init, FixedParams::default(), 2).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.params.alpha, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.params.delta0, truth.delta0, epsilon = 1e-6);
    }

    fn sampled(truth: &LineshapeParams, x: &[f64], shots: u64, seed: u64) -> FitData {
        let mut rng = point_rng(seed, 0);
        let k = x
            .iter()
            .map(|&d| sample_counts(lineshape(truth, d), shots, &mut rng))
            .collect();
        FitData {
            x: x.to_vec(),
            obs: Observations::Counts {
                k,
                n: vec![shots; x.len()],
            },
        }
    }

    #[test]
    fn sampled_correlated_scan_is_consistent() {
        let mut cfg = ScanConfig::new(
            Model::EffectiveIsing { omega: OMEGA },
            "dd",
            AxisSpec::new(AxisParam::Delta1, hz(-600.0), hz(600.0), 41),
        );
        cfg.shots = 500;
        cfg.seed = 11;
        let r = fit_alpha(&run_scan(&cfg).unwrap(), "uu");
        assert!(r.converged);
        let se = r.std_errors.unwrap();
        assert!(
            (r.params.alpha - 2.0).abs() < 3.0 * se.alpha,
            "{} ± {}",
            r.params.alpha,
            se.alpha
        );
        assert!(se.alpha > 0.005 && se.alpha < 0.05, "{}", se.alpha);
    }

    #[test]
    fn sampled_single_ion_scan_gives_unit_alpha() {
        let mut cfg = ScanConfig::new(
            Model::SingleSpin {
                omega: OMEGA,
                ion: Ion::Second,
            },
            "d",
            AxisSpec::new(AxisParam::Delta1, hz(-1200.0), hz(1200.0), 41),
        );
        cfg.shots = 500;
        cfg.seed = 5;
        let r = fit_alpha(&run_scan(&cfg).unwrap(), "u");
        let se = r.std_errors.unwrap();
        assert!((r.params.alpha - 1.0).abs() < 3.0 * se.alpha);
    }

    #[test]
    fn standard_error_shrinks_as_inverse_root_shots() {
        let truth = mapped(SpectrumKind::Even);
        let x: Vec<f64> = (0..41).map(|i| hz(-600.0 + 30.0 * i as f64)).collect();
        let pts: Vec<(f64, f64)> = [1e3, 1e4, 1e5]
            .iter()
            .map(|&shots| {
                let d = sampled(&truth, &x, shots as u64, 3);
                let r = fit_points(&d, &truth, FixedParams::default(), 2).unwrap();
                assert!((r.params.alpha - 2.0).abs() < 4.0 * r.std_errors.unwrap().alpha);
                (f64::ln(shots), r.std_errors.unwrap().alpha.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.05, "{slope}");
    }

    #[test]
    fn mle_matches_grid_search() {
        let truth = LineshapeParams {
            a: 1.0,
            omega_line: 2.0,
            tau: std::f64::consts::PI / 2.0,
            alpha: 2.0,
            delta0: 0.1,
        };
        let x = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        let data = sampled(&truth, &x, 200, 17);
        let fixed = FixedParams {
            a: true,
            omega_line: true,
            tau: true,
            alpha: false,
            delta0: false,
        };
        let r = fit_points(&data, &truth, fixed, 2).unwrap();
        assert!(r.converged);
        let obj = Objective {
            data: &data,
            free: vec![3, 4],
        };
        let (mut best, mut arg) = (f64::INFINITY, (0.0, 0.0));
        let (na, nd) = (400, 400);
        let (step_a, step_d) = (3.0 / na as f64, 0.6 / nd as f64);
        for i in 0..=na {
            for j in 0..=nd {
                let p = LineshapeParams {
                    alpha: 0.5 + step_a * i as f64,
                    delta0: -0.3 + step_d * j as f64,
                    ..truth
                };
                let f = obj.value(&p);
                if f < best {
                    best = f;
                    arg = (p.alpha, p.delta0);
                }
            }
        }
        assert!(
            (r.params.alpha - arg.0).abs() <= step_a,
            "{} vs {}",
            r.params.alpha,
            arg.0
        );
        assert!(
            (r.params.delta0 - arg.1).abs() <= step_d,
            "{} vs {}",
            r.params.delta0,
            arg.1
        );
        assert!(-r.log_likelihood <= best + 1e-9);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let p = LineshapeParams::pi_pulse(1.0, 1.0);
        let zeros = FitData {
            x: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            obs: Observations::Counts {
                k: vec![0; 5],
                n: vec![10; 5],
            },
        };
        assert!(matches!(
            fit_points(&zeros, &p, FixedParams::default(), 1),
            Err(Error::DegenerateData(_))
        ));
        let short = FitData {
            x: vec![0.0; 4],
            obs: Observations::Probabilities(vec![0.5; 4]),
        };
        assert!(fit_points(&short, &p, FixedParams::default(), 1).is_err());
        let all = FixedParams {
            a: true,
            omega_line: true,
            tau: true,
            alpha: true,
            delta0: true,
        };
        let ok = FitData {
            x: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            obs: Observations::Probabilities(vec![0.5; 5]),
        };
        assert!(fit_points(&ok, &p, all, 1).is_err());
    }

    #[test]
    fn common_noise_lowers_even_alpha_and_contrast() {
        let mut cfg = ScanConfig::new(
            Model::EffectiveIsing { omega: OMEGA },
            "dd",
            AxisSpec::new(AxisParam::Delta1, hz(-600.0), hz(600.0), 41),
        );
        cfg.noise = Some(crate::scan::NoiseModel {
            sigma_common: hz(40.0),
            draws: 300,
            ..Default::default()
        });
        cfg.seed = 2;
        let r = fit_alpha(&run_scan(&cfg).unwrap(), "uu");
        assert!(r.params.alpha < 2.0 && r.params.a < 1.0, "{:?}", r.params);
    }

    #[test]
    fn free_names_follow_mask() {
        assert_eq!(
            free_parameter_names(FixedParams::default()),
            vec!["a", "omega_line", "alpha", "delta0"]
        );
    }
}
