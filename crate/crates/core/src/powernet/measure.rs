use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::case::json_error;
use super::{CaseError, Network};

/// One voltage/current phasor snapshot over all buses.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub v: Vec<Complex64>,
    pub i: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MeasurementSet {
    pub scenarios: Vec<Scenario>,
}

impl MeasurementSet {
    /// Bus count, or `None` for an empty set.
    pub fn n(&self) -> Option<usize> {
        self.scenarios.first().map(|s| s.v.len())
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let mut problems = Vec::new();
        let n = self.n().unwrap_or(0);
        if self.scenarios.is_empty() {
            problems.push("measurement set has no scenarios".to_string());
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            if s.v.len() != n || s.i.len() != n {
                problems.push(format!(
                    "scenario {k}: {} voltages and {} currents, expected {n} of each",
                    s.v.len(),
                    s.i.len()
                ));
            }
            if s.v.iter().chain(&s.i).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                problems.push(format!("scenario {k}: non-finite value"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CaseError::Invalid(problems))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    v_re: Vec<f64>,
    v_im: Vec<f64>,
    i_re: Vec<f64>,
    i_im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasurementFile {
    scenarios: Vec<ScenarioFile>,
}

fn join(re: &[f64], im: &[f64]) -> Option<Vec<Complex64>> {
    (re.len() == im.len()).then(|| re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

pub fn parse_measurements(text: &str) -> Result<MeasurementSet, CaseError> {
    let file: MeasurementFile = serde_json::from_str(text).map_err(json_error)?;
    let mut scenarios = Vec::with_capacity(file.scenarios.len());
    let mut problems = Vec::new();
    for (k, s) in file.scenarios.into_iter().enumerate() {
        match (join(&s.v_re, &s.v_im), join(&s.i_re, &s.i_im)) {
            (Some(v), Some(i)) => scenarios.push(Scenario { v, i }),
            _ => problems.push(format!("scenario {k}: real and imaginary parts differ in length")),
        }
    }
    if !problems.is_empty() {
        return Err(CaseError::Invalid(problems));
    }
    let set = MeasurementSet { scenarios };
    set.validate()?;
    Ok(set)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| CaseError::Io { path: path.display().to_string(), source })?;
    parse_measurements(&text)
}

pub fn save_measurements(set: &MeasurementSet) -> String {
    let file = MeasurementFile {
        scenarios: set
            .scenarios
            .iter()
            .map(|s| ScenarioFile {
                v_re: s.v.iter().map(|z| z.re).collect(),
                v_im: s.v.iter().map(|z| z.im).collect(),
                i_re: s.i.iter().map(|z| z.re).collect(),
                i_im: s.i.iter().map(|z| z.im).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("measurements serialize");
    s.push('\n');
    s
}

/// `I = Y·V` for each voltage vector, plus optional Gaussian noise of
/// standard deviation `noise_std` on the real and imaginary parts of `I`.
pub fn synthesize_measurements(
    net: &Network,
    voltages: &[Vec<Complex64>],
    noise_std: f64,
    seed: u64,
) -> Result<MeasurementSet, CaseError> {
    let n = net.n();
    if let Some(k) = voltages.iter().position(|v| v.len() != n) {
        return Err(CaseError::Invalid(vec![format!(
            "scenario {k} has {} voltages, network has {n} buses",
            voltages[k].len()
        )]));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(CaseError::Invalid(vec![format!("noise_std must be non-negative, got {noise_std}")]));
    }
    let y = net.ybus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("valid std");
    let scenarios = voltages
        .iter()
        .map(|v| {
            let mut i = y.apply(v);
            if noise_std > 0.0 {
                for z in &mut i {
                    z.re += noise.sample(&mut rng);
                    z.im += noise.sample(&mut rng);
                }
            }
            Scenario { v: v.clone(), i }
        })
        .collect();
    Ok(MeasurementSet { scenarios })
}

/// Seeded voltage snapshots: magnitudes in [0.9, 1.1] p.u., angles within
/// ±0.5 rad.
pub fn default_scenarios(n: usize, count: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.5..0.5)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powernet::bundled_case;

    #[test]
    fn unit_vector_extracts_column() {
        let net = bundled_case("case4").unwrap();
        let y = net.ybus();
        for k in 0..4 {
            let mut v = vec![Complex64::new(0.0, 0.0); 4];
            v[k] = Complex64::new(1.0, 0.0);
            let m = synthesize_measurements(&net, &[v], 0.0, 0).unwrap();
            for r in 0..4 {
                assert_eq!(m.scenarios[0].i[r], y.get(r, k));
            }
        }
    }

    #[test]
    fn noise_free_satisfies_ohms_law() {
        let net = bundled_case("case3").unwrap();
        let y = net.ybus();
        let m = synthesize_measurements(&net, &default_scenarios(3, 4, 1), 0.0, 0).unwrap();
        for s in &m.scenarios {
            let yv = y.apply(&s.v);
            for (a, b) in yv.iter().zip(&s.i) {
                assert_eq!((a - b).norm(), 0.0);
            }
        }
    }

    #[test]
    fn noisy_sets_are_reproducible() {
        let net = bundled_case("case4").unwrap();
        let v = default_scenarios(4, 5, 3);
        let a = synthesize_measurements(&net, &v, 0.01, 7).unwrap();
        let b = synthesize_measurements(&net, &v, 0.01, 7).unwrap();
        let c = synthesize_measurements(&net, &v, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn file_round_trip() {
        let net = bundled_case("case4").unwrap();
        let m = synthesize_measurements(&net, &default_scenarios(4, 2, 0), 0.0, 0).unwrap();
        let text = save_measurements(&m);
        assert_eq!(parse_measurements(&text).unwrap(), m);
        assert_eq!(save_measurements(&parse_measurements(&text).unwrap()), text);
    }

    #[test]
    fn bad_measurement_files() {
        let ragged = r#"{"scenarios": [{"v_re": [1, 0], "v_im": [0], "i_re": [1, 0], "i_im": [0, 0]}]}"#;
        assert!(matches!(parse_measurements(ragged), Err(CaseError::Invalid(_))));
        let mixed = r#"{"scenarios": [
            {"v_re": [1, 0], "v_im": [0, 0], "i_re": [1, 0], "i_im": [0, 0]},
            {"v_re": [1], "v_im": [0], "i_re": [1], "i_im": [0]}]}"#;
        assert!(matches!(parse_measurements(mixed), Err(CaseError::Invalid(_))));
        assert!(matches!(parse_measurements(r#"{"scenarios": []}"#), Err(CaseError::Invalid(_))));
        assert!(matches!(parse_measurements("{"), Err(CaseError::Parse { .. })));
    }

    #[test]
    fn wrong_length_scenario() {
        let net = bundled_case("case2").unwrap();
        assert!(synthesize_measurements(&net, &[vec![Complex64::new(1.0, 0.0)]], 0.0, 0).is_err());
    }
}
