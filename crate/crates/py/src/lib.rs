//! Python bindings: the main types and operations exposed as a small
//! extension module. Matrices cross the boundary as nested lists of
//! [re, im] pairs; structured results come back as JSON strings so callers
//! can feed them straight into their own tooling.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qbc_core::codesim::{
    analytic_bound, monte_carlo, CodebookSpec, Scenario, SimContext, SimInstance,
};
use qbc_core::cqstate::{channel_from_json, cq_from_json, dist_from_json};
use qbc_core::divergence;
use qbc_core::hermitian::{C64, CMat, DensityMatrix, HermitianOperator};
use qbc_core::lemmas;
use qbc_core::mutual_info::{
    renyi_mi_down, renyi_mi_up, shannon_mi, MiDownOptions, MutualInfoRequest, RenyiKind,
    RightSide,
};
use qbc_core::pinching;
use qbc_core::region::{evaluate_region, reproduce_final_region, RegionInput, TheoremId};

type PyMatrix = Vec<Vec<[f64; 2]>>;

fn to_err(e: qbc_core::QbcError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_matrix(m: &PyMatrix) -> PyResult<HermitianOperator> {
    let n = m.len();
    let mut out = CMat::zeros(n, n);
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(PyValueError::new_err("matrix must be square"));
        }
        for (j, &[re, im]) in row.iter().enumerate() {
            out[(i, j)] = C64::new(re, im);
        }
    }
    HermitianOperator::new(out).map_err(to_err)
}

fn parse_density(m: &PyMatrix) -> PyResult<DensityMatrix> {
    DensityMatrix::new(parse_matrix(m)?).map_err(to_err)
}

/// Clustered eigenvalues of a Hermitian matrix: list of (value, multiplicity).
#[pyfunction]
#[pyo3(signature = (matrix, cluster_tol = 1e-9))]
fn spectral_eigenvalues(matrix: PyMatrix, cluster_tol: f64) -> PyResult<Vec<(f64, usize)>> {
    let h = parse_matrix(&matrix)?;
    Ok(h.spectral(cluster_tol)
        .eigenspaces
        .iter()
        .map(|e| (e.value, e.multiplicity))
        .collect())
}

#[pyfunction]
fn fidelity(rho: PyMatrix, sigma: PyMatrix) -> PyResult<f64> {
    qbc_core::hermitian::fidelity(&parse_density(&rho)?, &parse_density(&sigma)?).map_err(to_err)
}

#[pyfunction]
fn purified_distance(rho: PyMatrix, sigma: PyMatrix) -> PyResult<f64> {
    qbc_core::hermitian::purified_distance(&parse_density(&rho)?, &parse_density(&sigma)?)
        .map_err(to_err)
}

#[pyfunction]
#[pyo3(signature = (rho, sigma, tol = 1e-9))]
fn relative_entropy(rho: PyMatrix, sigma: PyMatrix, tol: f64) -> PyResult<f64> {
    Ok(divergence::relative_entropy(
        &parse_density(&rho)?,
        &parse_density(&sigma)?,
        tol,
    ))
}

#[pyfunction]
#[pyo3(signature = (rho, sigma, alpha, tol = 1e-9))]
fn petz_renyi(rho: PyMatrix, sigma: PyMatrix, alpha: f64, tol: f64) -> PyResult<f64> {
    Ok(divergence::petz_renyi(
        &parse_density(&rho)?,
        &parse_density(&sigma)?,
        alpha,
        tol,
    ))
}

#[pyfunction]
#[pyo3(signature = (rho, sigma, alpha, tol = 1e-9))]
fn sandwiched_renyi(rho: PyMatrix, sigma: PyMatrix, alpha: f64, tol: f64) -> PyResult<f64> {
    Ok(divergence::sandwiched_renyi(
        &parse_density(&rho)?,
        &parse_density(&sigma)?,
        alpha,
        tol,
    ))
}

#[pyfunction]
#[pyo3(signature = (rho, sigma, tol = 1e-9))]
fn dmax(rho: PyMatrix, sigma: PyMatrix, tol: f64) -> PyResult<f64> {
    Ok(divergence::dmax(
        &parse_density(&rho)?,
        &parse_density(&sigma)?,
        tol,
    ))
}

/// Minimum eigenvalue of `nu E_sigma(rho) - rho`; nonnegative up to
/// round-off certifies the pinching inequality.
#[pyfunction]
#[pyo3(signature = (rho, sigma, cluster_tol = 1e-9))]
fn pinching_margin(rho: PyMatrix, sigma: PyMatrix, cluster_tol: f64) -> PyResult<f64> {
    pinching::verify_pinching_inequality(
        &parse_density(&rho)?,
        &parse_density(&sigma)?,
        cluster_tol,
    )
    .map_err(to_err)
}

#[pyfunction]
#[pyo3(signature = (matrix, cluster_tol = 1e-9))]
fn distinct_eigenvalue_count(matrix: PyMatrix, cluster_tol: f64) -> PyResult<usize> {
    Ok(pinching::distinct_eigenvalue_count(
        &parse_matrix(&matrix)?,
        cluster_tol,
    ))
}

/// Hayashi-Nagaoka certificate as (margin, passed).
#[pyfunction]
#[pyo3(signature = (s, t, tol = 1e-9))]
fn hayashi_nagaoka_margin(s: PyMatrix, t: PyMatrix, tol: f64) -> PyResult<(f64, bool)> {
    let c = lemmas::certify_hayashi_nagaoka(&parse_matrix(&s)?, &parse_matrix(&t)?, tol, "py")
        .map_err(to_err)?;
    Ok((c.margin, c.passed))
}

/// Shannon mutual information `I(left ; B | cond)` on a cq-state given as
/// JSON (registers, pmf, d_b, conditionals).
#[pyfunction]
#[pyo3(signature = (cq_json, left, cond = Vec::new()))]
fn cq_shannon_mi(cq_json: &str, left: Vec<String>, cond: Vec<String>) -> PyResult<f64> {
    let state = cq_from_json(cq_json).map_err(to_err)?;
    let left_refs: Vec<&str> = left.iter().map(|s| s.as_str()).collect();
    let cond_refs: Vec<&str> = cond.iter().map(|s| s.as_str()).collect();
    shannon_mi(&MutualInfoRequest::new(
        &state,
        &left_refs,
        RightSide::Quantum,
        &cond_refs,
    ))
    .map_err(to_err)
}

/// Up-arrow Renyi mutual information on a cq-state given as JSON.
#[pyfunction]
#[pyo3(signature = (cq_json, left, alpha, sandwiched = true, tol = 1e-9))]
fn cq_renyi_mi_up(
    cq_json: &str,
    left: Vec<String>,
    alpha: f64,
    sandwiched: bool,
    tol: f64,
) -> PyResult<f64> {
    let state = cq_from_json(cq_json).map_err(to_err)?;
    let left_refs: Vec<&str> = left.iter().map(|s| s.as_str()).collect();
    let kind = if sandwiched {
        RenyiKind::Sandwiched
    } else {
        RenyiKind::Petz
    };
    renyi_mi_up(
        &MutualInfoRequest::new(&state, &left_refs, RightSide::Quantum, &[]),
        alpha,
        kind,
        tol,
    )
    .map_err(to_err)
}

/// Down-arrow (minimized) sandwiched Renyi mutual information; returns
/// (value, converged).
#[pyfunction]
#[pyo3(signature = (cq_json, left, alpha, cond = Vec::new(), seed = 0, tol = 1e-9))]
fn cq_renyi_mi_down(
    cq_json: &str,
    left: Vec<String>,
    alpha: f64,
    cond: Vec<String>,
    seed: u64,
    tol: f64,
) -> PyResult<(f64, bool)> {
    let state = cq_from_json(cq_json).map_err(to_err)?;
    let left_refs: Vec<&str> = left.iter().map(|s| s.as_str()).collect();
    let cond_refs: Vec<&str> = cond.iter().map(|s| s.as_str()).collect();
    let opts = MiDownOptions {
        seed,
        ..MiDownOptions::default()
    };
    let r = renyi_mi_down(
        &MutualInfoRequest::new(&state, &left_refs, RightSide::Quantum, &cond_refs),
        alpha,
        tol,
        &opts,
    )
    .map_err(to_err)?;
    Ok((r.value, r.converged))
}

/// Evaluate a theorem's rate region; returns the atoms and inequality system
/// as a JSON string.
#[pyfunction]
#[pyo3(signature = (theorem, channel_json, dist_json, tol = 1e-9))]
fn region_evaluate(
    theorem: &str,
    channel_json: &str,
    dist_json: &str,
    tol: f64,
) -> PyResult<String> {
    let id = TheoremId::parse(theorem).map_err(to_err)?;
    let channel = channel_from_json(channel_json).map_err(to_err)?;
    let (dist, x_of) = dist_from_json(dist_json).map_err(to_err)?;
    let input = match x_of {
        Some(x_of) => RegionInput { dist, x_of },
        None => RegionInput::from_dist_with_x(dist).map_err(to_err)?,
    };
    let inst = evaluate_region(id, &channel, &input, tol).map_err(to_err)?;
    let atoms: std::collections::BTreeMap<String, f64> = inst
        .atoms
        .iter()
        .map(|(k, a)| (k.clone(), a.value))
        .collect();
    Ok(serde_json::json!({
        "theorem": id.name(),
        "banner": inst.banner,
        "atoms": atoms,
        "system": inst.system.to_text(),
    })
    .to_string())
}

/// Fourier-Motzkin reproduction check: does eliminating the preliminary
/// system's auxiliaries reproduce the displayed theorem exactly?
#[pyfunction]
#[pyo3(signature = (theorem, channel_json, dist_json, tol = 1e-9))]
fn region_fm_check(
    theorem: &str,
    channel_json: &str,
    dist_json: &str,
    tol: f64,
) -> PyResult<bool> {
    let fin = TheoremId::parse(theorem).map_err(to_err)?;
    let prelim = match fin {
        TheoremId::MartonFinal => TheoremId::MartonPrelim,
        TheoremId::MultilevelFinal => TheoremId::MultilevelPrelim,
        TheoremId::General2Final => TheoremId::General2Prelim,
        TheoremId::General3Final => TheoremId::General3Prelim,
        _ => return Err(PyValueError::new_err("theorem has no preliminary system")),
    };
    let channel = channel_from_json(channel_json).map_err(to_err)?;
    let (dist, x_of) = dist_from_json(dist_json).map_err(to_err)?;
    let input = match x_of {
        Some(x_of) => RegionInput { dist, x_of },
        None => RegionInput::from_dist_with_x(dist).map_err(to_err)?,
    };
    reproduce_final_region(&channel, &input, prelim, fin, tol).map_err(to_err)
}

/// Simulate a one-shot code: Monte-Carlo errors plus analytic bounds, as a
/// JSON string. `scenario` is one of marton_common, multilevel2_deg,
/// general2_deg, general3_deg.
#[pyfunction]
#[pyo3(signature = (scenario, channel_json, dist_json, rates, alpha, trials = 100, seed = 0, theta = 0.5, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    scenario: &str,
    channel_json: &str,
    dist_json: &str,
    rates: std::collections::BTreeMap<String, f64>,
    alpha: f64,
    trials: usize,
    seed: u64,
    theta: f64,
    tol: f64,
) -> PyResult<String> {
    let scenario: Scenario = serde_json::from_value(serde_json::json!(scenario))
        .map_err(|e| PyValueError::new_err(format!("bad scenario: {e}")))?;
    let channel = channel_from_json(channel_json).map_err(to_err)?;
    let (dist, x_of) = dist_from_json(dist_json).map_err(to_err)?;
    let input = match x_of {
        Some(x_of) => RegionInput { dist, x_of },
        None => RegionInput::from_dist_with_x(dist).map_err(to_err)?,
    };
    let instance =
        SimInstance::new(scenario, channel, input.dist, input.x_of).map_err(to_err)?;
    let ctx = SimContext::new(instance, tol).map_err(to_err)?;
    let spec = CodebookSpec {
        scenario,
        rates,
        theta,
        seed,
    };
    let stats = monte_carlo(&ctx, &spec, trials, seed).map_err(to_err)?;
    let bounds = analytic_bound(&ctx, &spec, alpha).map_err(to_err)?;
    Ok(serde_json::json!({
        "measured": stats,
        "bounds": bounds,
        "alpha": alpha,
    })
    .to_string())
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn qbc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(purified_distance, m)?)?;
    m.add_function(wrap_pyfunction!(relative_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(petz_renyi, m)?)?;
    m.add_function(wrap_pyfunction!(sandwiched_renyi, m)?)?;
    m.add_function(wrap_pyfunction!(dmax, m)?)?;
    m.add_function(wrap_pyfunction!(pinching_margin, m)?)?;
    m.add_function(wrap_pyfunction!(distinct_eigenvalue_count, m)?)?;
    m.add_function(wrap_pyfunction!(hayashi_nagaoka_margin, m)?)?;
    m.add_function(wrap_pyfunction!(cq_shannon_mi, m)?)?;
    m.add_function(wrap_pyfunction!(cq_renyi_mi_up, m)?)?;
    m.add_function(wrap_pyfunction!(cq_renyi_mi_down, m)?)?;
    m.add_function(wrap_pyfunction!(region_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(region_fm_check, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
