use hqnet_core::control::CentralStateMatrix;
use hqnet_core::experiments::{run_config, Overrides, CSV_COLUMNS};
use hqnet_core::noise;
use hqnet_core::topology::{CellularLayout, Topology};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hqnet_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Run a scenario; returns one dict per CSV row (strings, empty when a
/// column does not apply).
#[pyfunction]
#[pyo3(signature = (scenario, config = "", seed = None, trials = None))]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario: &str,
    config: &str,
    seed: Option<u64>,
    trials: Option<u32>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py
        .detach(|| run_config(scenario, config, &Overrides { seed, trials }))
        .map_err(err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            for (k, v) in CSV_COLUMNS.iter().zip(r.record()) {
                d.set_item(*k, v)?;
            }
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn channel_quality(loss_init: f64, loss_noise: f64) -> f64 {
    noise::channel_quality(loss_init, loss_noise).value
}

#[pyfunction]
fn op_ratio(hops: u32) -> u32 {
    noise::op_ratio(hops)
}

/// Text form of the default hierarchical layout with `rings` rings.
#[pyfunction]
#[pyo3(signature = (rings = 2, distributed = false))]
fn cellular_topology(rings: u32, distributed: bool) -> PyResult<String> {
    let layout = CellularLayout {
        rings,
        ..CellularLayout::default()
    };
    let t = if distributed { layout.distributed() } else { layout.hierarchical() };
    Ok(t.map_err(err)?.to_text())
}

/// Fresh central state matrix dump for a topology given in text form.
#[pyfunction]
fn csm_dump(topology: &str) -> PyResult<String> {
    let t = Topology::from_text(topology).map_err(err)?;
    Ok(CentralStateMatrix::from_topology(&t).dump())
}

#[pymodule]
fn hqnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(channel_quality, m)?)?;
    m.add_function(wrap_pyfunction!(op_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(cellular_topology, m)?)?;
    m.add_function(wrap_pyfunction!(csm_dump, m)?)?;
    Ok(())
}
