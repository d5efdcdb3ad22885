//! Browser demo: quantifiers on simulated classifier outputs, fairness
//! metrics of a ranking and simplex projection.
//!
//! Each exported function takes and returns JSON strings. The `*_json`
//! functions do the work and are what the native tests call.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use qfe_core::fairness::{rkl, rnd, CutoffSchedule, DistributionsAtK};
use qfe_core::quantify::{fit_correction, QuantifierKind};
use qfe_core::simplex::euclidean_projection;
use qfe_core::{project_to_simplex, PosteriorMatrix, PrevalenceVector};

type DemoResult = Result<String, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, String> {
    v.get(key).ok_or_else(|| format!("missing field {key:?}"))
}

fn as_f64(v: &Value, key: &str) -> Result<f64, String> {
    field(v, key)?.as_f64().ok_or_else(|| format!("{key:?} must be a number"))
}

fn as_usize(v: &Value, key: &str) -> Result<usize, String> {
    field(v, key)?
        .as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| format!("{key:?} must be a non-negative integer"))
}

fn as_vec(v: &Value, key: &str) -> Result<Vec<f64>, String> {
    serde_json::from_value(field(v, key)?.clone()).map_err(|e| format!("{key:?}: {e}"))
}

/// Posterior of an item of class `y`: `skill * e_y + (1 - skill) * r`, with
/// `r` uniform on the simplex.
fn noisy_posterior(rng: &mut ChaCha8Rng, y: usize, n: usize, skill: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let total: f64 = e.iter().sum();
    (0..n)
        .map(|j| (1.0 - skill) * e[j] / total + if j == y { skill } else { 0.0 })
        .collect()
}

fn draw(rng: &mut ChaCha8Rng, prevalence: &[f64], size: usize, skill: f64) -> Result<(PosteriorMatrix, Vec<usize>), String> {
    let n = prevalence.len();
    let dist = WeightedIndex::new(prevalence).map_err(err)?;
    let mut post = PosteriorMatrix::with_capacity(n, size);
    let mut labels = Vec::with_capacity(size);
    for _ in 0..size {
        let y = dist.sample(rng);
        post.push(&noisy_posterior(rng, y, n, skill)).map_err(err)?;
        labels.push(y);
    }
    Ok((post, labels))
}

/// Simulates a correction sample drawn at `correction_prevalence` and a bag
/// drawn at `bag_prevalence`, then runs CC, ACC, PACC and KDEy on the bag.
///
/// Input: `{"bag_prevalence": [..], "correction_prevalence": [..],
/// "skill": 0.4, "correction_size": 500, "bag_size": 200,
/// "bandwidth": 0.05, "seed": 0}`.
pub fn simulate_json(input: &str) -> DemoResult {
    let v: Value = serde_json::from_str(input).map_err(err)?;
    let bag_prev = PrevalenceVector::new(as_vec(&v, "bag_prevalence")?).map_err(err)?;
    let corr_prev = PrevalenceVector::new(as_vec(&v, "correction_prevalence")?).map_err(err)?;
    if bag_prev.len() != corr_prev.len() || bag_prev.len() < 2 {
        return Err("prevalence vectors need the same length, at least 2".into());
    }
    let skill = as_f64(&v, "skill")?;
    if !(0.0..=1.0).contains(&skill) {
        return Err("skill must lie in [0, 1]".into());
    }
    let (m, b) = (as_usize(&v, "correction_size")?, as_usize(&v, "bag_size")?);
    if m == 0 || b == 0 {
        return Err("sample sizes must be positive".into());
    }
    let bandwidth = as_f64(&v, "bandwidth")?;
    let mut rng = ChaCha8Rng::seed_from_u64(as_usize(&v, "seed")? as u64);

    let (corr_post, corr_labels) = draw(&mut rng, corr_prev.as_slice(), m, skill)?;
    let (bag_post, bag_labels) = draw(&mut rng, bag_prev.as_slice(), b, skill)?;
    let n = bag_prev.len();
    let mut truth = vec![0.0; n];
    bag_labels.iter().for_each(|&y| truth[y] += 1.0 / b as f64);

    let mut estimates = serde_json::Map::new();
    for kind in [QuantifierKind::Cc, QuantifierKind::Acc, QuantifierKind::Pacc, QuantifierKind::Kdey] {
        let h = (kind == QuantifierKind::Kdey).then_some(bandwidth);
        let result = fit_correction(kind, &corr_post, &corr_labels, h).and_then(|model| model.estimate(&bag_post));
        let entry = match result {
            Ok(p) => {
                let ae = p.as_slice().iter().zip(&truth).map(|(a, t)| (a - t).abs()).sum::<f64>() / n as f64;
                json!({"prevalence": p.as_slice(), "absolute_error": ae})
            }
            Err(e) => json!({"error": e.to_string()}),
        };
        estimates.insert(kind.name().to_string(), entry);
    }
    Ok(json!({"truth": truth, "estimates": estimates}).to_string())
}

/// rKL and, for two groups, rND of a ranking given its group labels.
///
/// Input: `{"groups": [0, 1, 1, 0, ...], "target": [..], "cutoffs": [..]}`,
/// with groups listed best rank first.
pub fn fairness_json(input: &str) -> DemoResult {
    let v: Value = serde_json::from_str(input).map_err(err)?;
    let target = PrevalenceVector::new(as_vec(&v, "target")?).map_err(err)?;
    let groups: Vec<usize> = serde_json::from_value(field(&v, "groups")?.clone()).map_err(err)?;
    let cutoffs: Vec<usize> = serde_json::from_value(field(&v, "cutoffs")?.clone()).map_err(err)?;
    let schedule = CutoffSchedule::new(cutoffs).map_err(err)?;
    let n = target.len();
    if let Some(g) = groups.iter().find(|&&g| g >= n) {
        return Err(format!("group {g} out of range for {n} groups"));
    }
    if groups.len() < schedule.max() {
        return Err(format!("ranking has {} items; the largest cutoff is {}", groups.len(), schedule.max()));
    }
    let mut dists = DistributionsAtK::new();
    for &k in schedule.cutoffs() {
        let mut p = vec![0.0; n];
        groups[..k].iter().for_each(|&g| p[g] += 1.0);
        dists.insert(k, project_to_simplex(&p.iter().map(|c| c / k as f64).collect::<Vec<_>>()).map_err(err)?);
    }
    let rnd_value = if n == 2 { Some(rnd(&dists, &target, &schedule).map_err(err)?) } else { None };
    let at_k: serde_json::Map<String, Value> = dists.iter().map(|(k, p)| (k.to_string(), json!(p.as_slice()))).collect();
    Ok(json!({
        "rkl": rkl(&dists, &target, &schedule).map_err(err)?,
        "rnd": rnd_value,
        "distributions": at_k,
    })
    .to_string())
}

/// Maps a JSON array of numbers onto the simplex two ways: clipping
/// negatives and renormalizing, and the nearest point in Euclidean distance.
pub fn project_json(input: &str) -> DemoResult {
    let raw: Vec<f64> = serde_json::from_str(input).map_err(err)?;
    let clipped = project_to_simplex(&raw).map_err(err)?;
    Ok(json!({"clipped": clipped.as_slice(), "euclidean": euclidean_projection(&raw)}).to_string())
}

#[wasm_bindgen]
pub fn simulate(input: &str) -> Result<String, JsError> {
    simulate_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fairness(input: &str) -> Result<String, JsError> {
    fairness_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn project(input: &str) -> Result<String, JsError> {
    project_json(input).map_err(|e| JsError::new(&e))
}
