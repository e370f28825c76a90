//! Browser bindings for three interactive views: the control-parameter
//! collapse of a low-dimensional sweep, mod-OMP against naive OMP on one
//! instance, and a concentration probe.
//!
//! Each view is a JSON-in, JSON-out function so it can be tested natively;
//! the `#[wasm_bindgen]` exports are thin wrappers.

use corrupt_sense::concentration::{self, Coupling, ProbeReport};
use corrupt_sense::datagen::{gen_instance, CorruptionSpec, DesignSpec};
use corrupt_sense::experiments::{
    run_sweep_with, ExperimentConfig, Method, NoiseAxis, Regime, SweepOptions,
};
use corrupt_sense::linalg::Covariance;
use corrupt_sense::metrics::{collapse_fit, support_report};
use corrupt_sense::omp::{mod_omp, naive_omp, FinalEstimatorChoice};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const MAX_WORK: usize = 4_000_000;

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct CollapseRequest {
    pub estimator: String,
    pub n: usize,
    pub ks: Vec<usize>,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CollapseRequest {
    fn default() -> Self {
        Self {
            estimator: "sigma_x".into(),
            n: 800,
            ks: (2..=7).collect(),
            levels: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            trials: 30,
            seed: 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CollapsePoint {
    pub k: usize,
    pub level: f64,
    pub control: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Serialize)]
pub struct CollapseResponse {
    pub axis: &'static str,
    pub points: Vec<CollapsePoint>,
    pub pooled_slope: Option<f64>,
    pub pooled_r2: Option<f64>,
    pub slope_dispersion: Option<f64>,
}

pub fn collapse(req: &CollapseRequest) -> Result<CollapseResponse, String> {
    let method: Method = req.estimator.parse().map_err(|e| format!("{e}"))?;
    let (noise, axis) = if method == Method::MissingData {
        (NoiseAxis::Rho(req.levels.clone()), "rho")
    } else {
        (NoiseAxis::SigmaW(req.levels.clone()), "sigma_w")
    };
    let kmax = req.ks.iter().copied().max().unwrap_or(0);
    let work = req.n * kmax * kmax * req.ks.len() * req.levels.len() * req.trials;
    if work > MAX_WORK * 50 {
        return Err("request too large for an interactive run".into());
    }
    let config = ExperimentConfig {
        name: "demo".into(),
        regime: Regime::LowDim,
        n: req.n,
        p: None,
        ks: req.ks.clone(),
        noise,
        sigma_e: 0.0,
        sigma_x: Covariance::identity(),
        methods: vec![method],
        trials: req.trials,
        base_seed: req.seed,
        iv_ratio: 2,
        control: None,
    };
    let records =
        run_sweep_with(&config, SweepOptions { timing: false }).map_err(|e| e.to_string())?;
    let points: Vec<CollapsePoint> = records
        .iter()
        .map(|r| CollapsePoint {
            k: r.k,
            level: if axis == "rho" { r.rho } else { r.sigma_w },
            control: r.control_value,
            mean_error: r.mean_l2_error,
            std_error: r.std_l2_error,
            failure_rate: r.failure_rate,
        })
        .collect();
    let fit_input: Vec<(usize, f64, f64)> = points
        .iter()
        .filter(|p| p.mean_error.is_finite())
        .map(|p| (p.k, p.control, p.mean_error))
        .collect();
    let fit = collapse_fit(&fit_input).ok();
    Ok(CollapseResponse {
        axis,
        pooled_slope: fit.as_ref().map(|f| f.pooled_slope),
        pooled_r2: fit.as_ref().map(|f| f.pooled_r2),
        slope_dispersion: fit.as_ref().map(|f| f.slope_dispersion),
        points,
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct OmpRequest {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub sigma_w: f64,
    pub sigma_e: f64,
    pub seed: u64,
}

impl Default for OmpRequest {
    fn default() -> Self {
        Self {
            n: 400,
            p: 450,
            k: 5,
            sigma_w: 0.5,
            sigma_e: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Coefficient {
    /// 1-based column index.
    pub index: usize,
    pub truth: f64,
    pub corrected: f64,
    pub naive: f64,
}

#[derive(Debug, Serialize)]
pub struct OmpResponse {
    /// Selected columns, 1-based, in selection order.
    pub support: Vec<usize>,
    pub exact_support: bool,
    pub corrected_error: Option<f64>,
    pub naive_error: f64,
    /// Union of the true and the selected support.
    pub coefficients: Vec<Coefficient>,
    pub lambda_min: Option<f64>,
    pub message: Option<String>,
}

pub fn omp_compare(req: &OmpRequest) -> Result<OmpResponse, String> {
    if req.n * req.p > MAX_WORK {
        return Err("n * p too large for an interactive run".into());
    }
    let inst = gen_instance(
        req.n,
        req.p,
        req.k,
        &DesignSpec::isotropic(req.sigma_e),
        &CorruptionSpec::additive(req.sigma_w),
        req.seed,
    )
    .map_err(|e| e.to_string())?;
    let naive = naive_omp(&inst.z, &inst.y, req.k).map_err(|e| e.to_string())?;
    let choice =
        FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(req.sigma_w * req.sigma_w));
    let (corrected, message) = match mod_omp(&inst.z, &inst.y, req.k, &choice) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let truth = inst.support();
    let mut indices: Vec<usize> = truth.iter().chain(&naive.support).copied().collect();
    indices.sort_unstable();
    indices.dedup();
    let corrected_beta = corrected
        .as_ref()
        .map_or_else(|| DVector::zeros(req.p), |f| f.beta_hat.clone());
    Ok(OmpResponse {
        support: naive.support.iter().map(|i| i + 1).collect(),
        exact_support: support_report(&naive.support, &truth).exact_match,
        corrected_error: corrected
            .as_ref()
            .map(|f| (&f.beta_hat - &inst.beta_star).norm()),
        naive_error: (&naive.beta_hat - &inst.beta_star).norm(),
        coefficients: indices
            .into_iter()
            .map(|i| Coefficient {
                index: i + 1,
                truth: inst.beta_star[i],
                corrected: corrected_beta[i],
                naive: naive.beta_hat[i],
            })
            .collect(),
        lambda_min: corrected.as_ref().map(|f| f.diagnostics.lambda_min_final),
        message,
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct ProbeRequest {
    pub lemma: String,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ProbeRequest {
    fn default() -> Self {
        Self {
            lemma: "maxdev".into(),
            p: 20,
            k: 5,
            m: 5,
            n_values: concentration::DEFAULT_N_VALUES.to_vec(),
            trials: concentration::DEFAULT_TRIALS,
            seed: 1,
        }
    }
}

pub fn probe(req: &ProbeRequest) -> Result<ProbeReport, String> {
    let nmax = req.n_values.iter().copied().max().unwrap_or(0);
    if nmax * req.p.max(req.k + req.m) * req.trials > MAX_WORK * 20 {
        return Err("request too large for an interactive run".into());
    }
    let (n, t, s) = (&req.n_values[..], req.trials, req.seed);
    let report = match req.lemma.as_str() {
        "maxdev" => concentration::probe_max_deviation(req.p, &Covariance::identity(), n, t, s),
        "bilinear" => {
            let mut f1 = DVector::zeros(req.p.max(1));
            f1[0] = 1.0;
            let mut e1 = DVector::zeros(req.k.max(1));
            e1[0] = 1.0;
            concentration::probe_bilinear(req.p, req.k, n, t, s, &f1, &e1, Coupling::Independent)
        }
        "operator" => concentration::probe_operator(req.k, req.m, n, t, s),
        "projection" => concentration::probe_column_projection(req.k, n, t, s),
        other => return Err(format!("unknown probe `{other}`")),
    };
    report.map_err(|e| e.to_string())
}

fn json_call<Req, Resp>(
    request: &str,
    f: impl FnOnce(&Req) -> Result<Resp, String>,
) -> Result<String, String>
where
    Req: for<'de> Deserialize<'de>,
    Resp: Serialize,
{
    let req: Req = serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))?;
    let resp = f(&req)?;
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

pub fn collapse_json(request: &str) -> Result<String, String> {
    json_call(request, collapse)
}

pub fn omp_json(request: &str) -> Result<String, String> {
    json_call(request, omp_compare)
}

pub fn probe_json(request: &str) -> Result<String, String> {
    json_call(request, probe)
}

#[wasm_bindgen(js_name = runCollapse)]
pub fn run_collapse(request: &str) -> Result<String, JsValue> {
    collapse_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = compareOmp)]
pub fn compare_omp(request: &str) -> Result<String, JsValue> {
    omp_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runProbe)]
pub fn run_probe(request: &str) -> Result<String, JsValue> {
    probe_json(request).map_err(|e| JsValue::from_str(&e))
}
