//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export has a plain Rust counterpart returning `zlin::Result`, so the logic is
//! testable natively; the `wasm_bindgen` wrappers only convert errors to JavaScript strings.

use wasm_bindgen::prelude::*;
use zlin::harness::parse_architecture;
use zlin::layers::DropoutRates;
use zlin::probes::{
    activation_histogram, clt_probe, hidden_layer_indices, spike_mass_check, InputDist, Shape,
};
use zlin::{Error, Matrix, Network, Result, Rng};

fn shape(name: &str) -> Result<Shape> {
    match name {
        "uniform" => Ok(Shape::Uniform),
        "rademacher" => Ok(Shape::Rademacher),
        "exponential" => Ok(Shape::Exponential),
        other => Err(Error::InvalidArgument(format!(
            "unknown input shape {other:?} (expected uniform, rademacher or exponential)"
        ))),
    }
}

/// KS distance to a Gaussian of the standardized sum of `n` inputs, one value per `n`.
pub fn clt_distances(
    shape_name: &str,
    n_values: &[u32],
    samples: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let dists = [InputDist::standard(shape(shape_name)?)];
    let ns: Vec<usize> = n_values.iter().map(|&n| n as usize).collect();
    Ok(
        clt_probe(&dists, None, &ns, samples as usize, &mut Rng::new(seed))?
            .into_iter()
            .map(|p| p.ks)
            .collect(),
    )
}

/// `[empirical, predicted]` fraction of zeros of `relu(bias + sum of n inputs)`.
pub fn spike_mass_pair(
    bias: f64,
    shape_name: &str,
    n: u32,
    samples: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let dists = [InputDist::standard(shape(shape_name)?)];
    let s = spike_mass_check(
        bias,
        &dists,
        None,
        n as usize,
        samples as usize,
        &mut Rng::new(seed),
    )?;
    Ok(vec![s.empirical, s.predicted])
}

/// Histogram of hidden layer `hidden` (0-based) of a freshly initialized network on
/// standard Gaussian inputs, flattened as `[spike_fraction, lo, hi, counts...]`.
pub fn fresh_histogram(
    architecture: &str,
    input_dim: u32,
    hidden: u32,
    samples: u32,
    bins: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let arch = parse_architecture(architecture)?;
    let mut rng = Rng::new(seed);
    let net: Network<f64> = arch.build(input_dim as usize, DropoutRates::default(), &mut rng);
    let layers = hidden_layer_indices(&net);
    let layer = *layers.get(hidden as usize).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "hidden layer {hidden} out of range for {} hidden layers",
            layers.len()
        ))
    })?;
    let x = Matrix::from_fn(samples as usize, input_dim as usize, |_, _| rng.gaussian());
    let h = activation_histogram(&net, &x, layer, bins as usize)?;
    let mut out = vec![h.spike_fraction(), h.edges[0], h.edges[h.edges.len() - 1]];
    out.extend(h.counts.iter().map(|&c| c as f64));
    Ok(out)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = cltDistances)]
pub fn clt_distances_js(
    shape: &str,
    n_values: Vec<u32>,
    samples: u32,
    seed: u64,
) -> std::result::Result<Vec<f64>, JsValue> {
    js(clt_distances(shape, &n_values, samples, seed))
}

#[wasm_bindgen(js_name = spikeMass)]
pub fn spike_mass_js(
    bias: f64,
    shape: &str,
    n: u32,
    samples: u32,
    seed: u64,
) -> std::result::Result<Vec<f64>, JsValue> {
    js(spike_mass_pair(bias, shape, n, samples, seed))
}

#[wasm_bindgen(js_name = activationHistogram)]
pub fn activation_histogram_js(
    architecture: &str,
    input_dim: u32,
    hidden: u32,
    samples: u32,
    bins: u32,
    seed: u64,
) -> std::result::Result<Vec<f64>, JsValue> {
    js(fresh_histogram(
        architecture,
        input_dim,
        hidden,
        samples,
        bins,
        seed,
    ))
}
