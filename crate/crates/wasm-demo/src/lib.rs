//! Browser demo: three small experiments on top of `infoplane`, exported to
//! JavaScript as functions returning JSON strings.

use infoplane::entropy::saturation_check;
use infoplane::pid::PairTerms;
use infoplane::{
    gram, joint_entropy, label_gram, matrix_entropy, silverman_sigma, EntropyConfig, GramMatrix,
    KernelSpec,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub type Result<T> = std::result::Result<T, infoplane::Error>;

const SWEEP_STEPS: usize = 48;

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropySweep {
    pub points: Vec<[f64; 2]>,
    pub cluster: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub bits: Vec<f64>,
    pub max_bits: f64,
    pub silverman_sigma: f64,
    pub silverman_bits: f64,
}

/// Entropy of a 2-D cluster cloud as the RBF width sweeps from 0.01 to 100.
pub fn entropy_sweep(
    n: usize,
    clusters: usize,
    spread: f64,
    alpha: f64,
    seed: u64,
) -> Result<EntropySweep> {
    let cfg = EntropyConfig::with_alpha(alpha)?;
    let clusters = clusters.clamp(1, n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = normal(&mut rng, clusters, 2) * 4.0;
    let cluster: Vec<usize> = (0..n).map(|i| i % clusters).collect();
    let noise = normal(&mut rng, n, 2) * spread;
    let x = DMatrix::from_fn(n, 2, |i, j| centers[(cluster[i], j)] + noise[(i, j)]);

    let sigmas: Vec<f64> = (0..SWEEP_STEPS)
        .map(|k| 10f64.powf(-2.0 + 4.0 * k as f64 / (SWEEP_STEPS - 1) as f64))
        .collect();
    let bits = sigmas
        .iter()
        .map(|&s| Ok(matrix_entropy(&gram(&x, &KernelSpec::rbf_fixed(s))?, &cfg)?.bits))
        .collect::<Result<Vec<f64>>>()?;
    let s_sigma = silverman_sigma(n, 2, 5.0)?;
    let s_bits = matrix_entropy(&gram(&x, &KernelSpec::rbf_fixed(s_sigma))?, &cfg)?.bits;
    Ok(EntropySweep {
        points: x.row_iter().map(|r| [r[0], r[1]]).collect(),
        cluster,
        sigmas,
        bits,
        max_bits: (n as f64).log2(),
        silverman_sigma: s_sigma,
        silverman_bits: s_bits,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SaturationCurve {
    pub maps: Vec<usize>,
    pub joint_bits: Vec<f64>,
    pub mean_off_diagonal: Vec<f64>,
    pub saturated: Vec<bool>,
    pub max_bits: f64,
    pub threshold: f64,
}

/// Joint entropy of the first C random feature maps for C = 1..=maps.
pub fn saturation_curve(
    n: usize,
    maps: usize,
    d: usize,
    h: f64,
    alpha: f64,
    seed: u64,
) -> Result<SaturationCurve> {
    let cfg = EntropyConfig::with_alpha(alpha)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = KernelSpec::rbf_silverman(h);
    // Maps share a common signal so the product collapses gradually.
    let base = normal(&mut rng, n, d);
    let grams = (0..maps)
        .map(|_| gram(&(&base + normal(&mut rng, n, d) * 0.5), &kernel))
        .collect::<Result<Vec<GramMatrix>>>()?;
    let mut curve = SaturationCurve {
        maps: Vec::new(),
        joint_bits: Vec::new(),
        mean_off_diagonal: Vec::new(),
        saturated: Vec::new(),
        max_bits: (n as f64).log2(),
        threshold: cfg.saturation_epsilon / n as f64,
    };
    for c in 1..=maps {
        let sat = saturation_check(&grams[..c], cfg.saturation_epsilon)?;
        curve.maps.push(c);
        curve
            .joint_bits
            .push(joint_entropy(&grams[..c], &cfg)?.bits);
        curve.mean_off_diagonal.push(sat.mean_off_diagonal());
        curve.saturated.push(sat.is_saturated());
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Both maps carry the label.
    Redundant,
    /// The label is the XOR of the two maps.
    Synergistic,
    /// Maps unrelated to the label.
    Independent,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "redundant" => Some(Scenario::Redundant),
            "synergistic" => Some(Scenario::Synergistic),
            "independent" => Some(Scenario::Independent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PidScenario {
    pub mi_i: f64,
    pub mi_j: f64,
    pub mi_joint: f64,
    pub tradeoff: f64,
    pub nonredundant: f64,
    pub label_bits: f64,
}

/// Two one-dimensional feature maps against a binary label.
pub fn pid_scenario(
    scenario: Scenario,
    n: usize,
    noise: f64,
    sigma: f64,
    seed: u64,
) -> Result<PidScenario> {
    let cfg = EntropyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
    let b: Vec<i64> = (0..n).map(|i| ((i / 2) % 2) as i64).collect();
    let (y, ti, tj): (Vec<i64>, Vec<i64>, Vec<i64>) = match scenario {
        Scenario::Redundant => (a.clone(), a.clone(), a),
        Scenario::Synergistic => (a.iter().zip(&b).map(|(p, q)| p ^ q).collect(), a, b),
        Scenario::Independent => {
            let y = (0..n).map(|_| rng.gen_range(0..2)).collect();
            (y, a, b)
        }
    };
    let kernel = KernelSpec::rbf_fixed(sigma);
    let mut map = |bits: &[i64]| {
        let m = DMatrix::from_fn(n, 1, |i, _| {
            bits[i] as f64 + noise * rng.sample::<f64, _>(StandardNormal)
        });
        gram(&m, &kernel)
    };
    let (gi, gj) = (map(&ti)?, map(&tj)?);
    let gy = label_gram(&y)?;
    let t = PairTerms::measure(&gy, &gi, &gj, &cfg)?;
    Ok(PidScenario {
        mi_i: t.mi_i,
        mi_j: t.mi_j,
        mi_joint: t.mi_joint,
        tradeoff: t.tradeoff(),
        nonredundant: t.nonredundant(),
        label_bits: matrix_entropy(&gy, &cfg)?.bits,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = entropySweep)]
pub fn entropy_sweep_js(
    n: usize,
    clusters: usize,
    spread: f64,
    alpha: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(entropy_sweep(n, clusters, spread, alpha, seed as u64))
}

#[wasm_bindgen(js_name = saturationCurve)]
pub fn saturation_curve_js(
    n: usize,
    maps: usize,
    d: usize,
    h: f64,
    alpha: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(saturation_curve(n, maps, d, h, alpha, seed as u64))
}

#[wasm_bindgen(js_name = pidScenario)]
pub fn pid_scenario_js(
    scenario: &str,
    n: usize,
    noise: f64,
    sigma: f64,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    let s = Scenario::parse(scenario).ok_or_else(|| JsValue::from_str("unknown scenario"))?;
    to_js(pid_scenario(s, n, noise, sigma, seed as u64))
}
