//! Scenario model: the full problem description for one control experiment.
//!
//! A scenario bundles per-stage system matrices, quadratic stage costs, a
//! bounded random-horizon distribution, the disturbance prior, and the
//! initial state. Construction always validates; a `Scenario` value in hand
//! is well-formed.
//!
//! On disk a scenario is a JSON object with fields
//! `{m, r, M, stages[], horizon.probs[], prior.beta[], prior.r[], prior.k, x0[]}`;
//! matrices are flat row-major arrays. See `scenarios/example.json`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("could not read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("field m: state dimension must be at least 1")]
    BadStateDim,
    #[error("field r: equation row count must be at least 1")]
    BadRowCount,
    #[error("field stages: expected M + 1 = {expected} stage entries, found {found}")]
    StageCountMismatch { expected: usize, found: usize },
    #[error("field horizon.probs: expected M + 1 = {expected} entries, found {found}")]
    HorizonLengthMismatch { expected: usize, found: usize },
    #[error("stage {stage} field {name}: expected {rows}x{cols} = {} entries, found {found}", rows * cols)]
    MatrixSizeMismatch { stage: usize, name: &'static str, rows: usize, cols: usize, found: usize },
    #[error("stage {stage} field {name}: non-finite entry")]
    NonFiniteMatrix { stage: usize, name: &'static str },
    #[error("stage {stage} field {name}: not symmetric (defect {defect:.3e})")]
    NotSymmetric { stage: usize, name: &'static str, defect: f64 },
    #[error("stage {stage} field {name}: not positive semidefinite (smallest eigenvalue {min_eig:.3e})")]
    NotPsd { stage: usize, name: &'static str, min_eig: f64 },
    #[error("field horizon.probs[{index}]: probability {p} is negative or non-finite")]
    BadProbability { index: usize, p: f64 },
    #[error("field horizon.probs: probabilities sum to {sum}, not 1 (tolerance 1e-12)")]
    ProbabilitiesDoNotSumToOne { sum: f64 },
    #[error("field horizon.probs: final entry must be strictly positive")]
    FinalProbabilityZero,
    #[error("field prior.{field}: expected {expected} entries, found {found}")]
    PriorLengthMismatch { field: &'static str, expected: usize, found: usize },
    #[error("field prior.k: active coordinate count {k} exceeds state dimension {m}")]
    TooManyActive { k: usize, m: usize },
    #[error("field prior.beta[{coord}]: shape {beta} must exceed 2 on active coordinates")]
    BetaTooSmall { coord: usize, beta: f64 },
    #[error("field prior.r[{coord}]: scale {r} must be positive on active coordinates")]
    ScaleNotPositive { coord: usize, r: f64 },
    #[error("field prior.{field}[{coord}]: inactive coordinates must be exactly zero")]
    InactiveNotZero { field: &'static str, coord: usize },
    #[error("field x0: expected {expected} entries, found {found}")]
    InitialStateLength { expected: usize, found: usize },
    #[error("field x0[{coord}]: non-finite entry")]
    InitialStateNonFinite { coord: usize },
}

/// Distribution of the random horizon on `{0, ..., M}`. Probabilities sum to
/// one and the mass at `M` is strictly positive, so every tail mass below `M`
/// is strictly positive too.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDist {
    probs: Vec<f64>,
    tails: Vec<f64>,
}

impl HorizonDist {
    pub fn new(probs: Vec<f64>) -> Result<Self, ScenarioError> {
        if probs.is_empty() {
            return Err(ScenarioError::HorizonLengthMismatch { expected: 1, found: 0 });
        }
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(ScenarioError::BadProbability { index, p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::ProbabilitiesDoNotSumToOne { sum });
        }
        if *probs.last().unwrap() <= 0.0 {
            return Err(ScenarioError::FinalProbabilityZero);
        }
        // Reverse cumulative sums avoid cancellation; the leading tail is 1 by
        // the sum check, and clamping keeps the sequence monotone under rounding.
        let mut tails = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for i in (0..probs.len()).rev() {
            acc += probs[i];
            tails[i] = acc;
        }
        tails[0] = 1.0;
        for i in 1..tails.len() {
            tails[i] = tails[i].min(tails[i - 1]);
        }
        Ok(HorizonDist { probs, tails })
    }

    /// Point mass at stage `m`: the fixed-horizon special case.
    pub fn point_mass(m: usize) -> Self {
        let mut probs = vec![0.0; m + 1];
        probs[m] = 1.0;
        HorizonDist::new(probs).expect("point mass is always valid")
    }

    /// Largest reachable stage M.
    pub fn max_stage(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Tail mass `phi_n = P(N >= n)`; exactly 1 at n = 0 and strictly
    /// positive for all n <= M.
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.tails[n]
    }

    /// Draw a horizon by inverse CDF; consumes exactly one uniform draw.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.max_stage()
    }
}

/// Coefficients and costs for one stage: dynamics row block
/// `alpha x + b u + c v` and the quadratic weights `s` (on the augmented
/// vector `(x; lambda)`) and `k` (on the control).
#[derive(Debug, Clone, PartialEq)]
pub struct StageData {
    /// State coefficient, `r x m`.
    pub alpha: DMatrix<f64>,
    /// Control coefficient, `r x m`.
    pub b: DMatrix<f64>,
    /// Disturbance coefficient, `r x m`.
    pub c: DMatrix<f64>,
    /// Stage weight on `(x; lambda)`, symmetric PSD `2m x 2m`.
    pub s: DMatrix<f64>,
    /// Control weight, symmetric PSD `m x m`.
    pub k: DMatrix<f64>,
}

/// Independent Pareto priors for the disturbance bounds: coordinate `i < active`
/// has shape `beta[i] > 2` and scale `scale[i] > 0`; the rest are structurally
/// zero (no disturbance).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta: Vec<f64>,
    pub scale: Vec<f64>,
    pub active: usize,
}

/// A validated control experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    m: usize,
    r: usize,
    stages: Vec<StageData>,
    horizon: HorizonDist,
    prior: PriorSpec,
    x0: DVector<f64>,
}

impl Scenario {
    pub fn new(
        m: usize,
        r: usize,
        stages: Vec<StageData>,
        horizon: HorizonDist,
        prior: PriorSpec,
        x0: DVector<f64>,
    ) -> Result<Self, ScenarioError> {
        if m == 0 {
            return Err(ScenarioError::BadStateDim);
        }
        if r == 0 {
            return Err(ScenarioError::BadRowCount);
        }
        if stages.len() != horizon.max_stage() + 1 {
            return Err(ScenarioError::StageCountMismatch {
                expected: horizon.max_stage() + 1,
                found: stages.len(),
            });
        }
        for (stage, data) in stages.iter().enumerate() {
            check_shape(stage, "alpha", &data.alpha, r, m)?;
            check_shape(stage, "b", &data.b, r, m)?;
            check_shape(stage, "c", &data.c, r, m)?;
            check_shape(stage, "s", &data.s, 2 * m, 2 * m)?;
            check_shape(stage, "k", &data.k, m, m)?;
            check_symmetric_psd(stage, "s", &data.s)?;
            check_symmetric_psd(stage, "k", &data.k)?;
        }
        if prior.beta.len() != m {
            return Err(ScenarioError::PriorLengthMismatch {
                field: "beta",
                expected: m,
                found: prior.beta.len(),
            });
        }
        if prior.scale.len() != m {
            return Err(ScenarioError::PriorLengthMismatch {
                field: "r",
                expected: m,
                found: prior.scale.len(),
            });
        }
        if prior.active > m {
            return Err(ScenarioError::TooManyActive { k: prior.active, m });
        }
        for coord in 0..m {
            if coord < prior.active {
                if !(prior.beta[coord] > 2.0) || !prior.beta[coord].is_finite() {
                    return Err(ScenarioError::BetaTooSmall { coord, beta: prior.beta[coord] });
                }
                if !(prior.scale[coord] > 0.0) || !prior.scale[coord].is_finite() {
                    return Err(ScenarioError::ScaleNotPositive { coord, r: prior.scale[coord] });
                }
            } else {
                if prior.beta[coord] != 0.0 {
                    return Err(ScenarioError::InactiveNotZero { field: "beta", coord });
                }
                if prior.scale[coord] != 0.0 {
                    return Err(ScenarioError::InactiveNotZero { field: "r", coord });
                }
            }
        }
        if x0.len() != m {
            return Err(ScenarioError::InitialStateLength { expected: m, found: x0.len() });
        }
        for coord in 0..m {
            if !x0[coord].is_finite() {
                return Err(ScenarioError::InitialStateNonFinite { coord });
            }
        }
        Ok(Scenario { m, r, stages, horizon, prior, x0 })
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    /// Number of rows in each stage's dynamics equation; equals
    /// [`state_dim`](Self::state_dim) for the square system.
    pub fn row_count(&self) -> usize {
        self.r
    }

    pub fn is_square(&self) -> bool {
        self.r == self.m
    }

    pub fn max_stage(&self) -> usize {
        self.horizon.max_stage()
    }

    pub fn stages(&self) -> &[StageData] {
        &self.stages
    }

    pub fn stage(&self, n: usize) -> &StageData {
        &self.stages[n]
    }

    pub fn horizon(&self) -> &HorizonDist {
        &self.horizon
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// Equivalent square system under the minimum-norm completion rule.
    ///
    /// With J the completion map (row truncation for r > m, zero padding for
    /// r < m), each step `x' = J (alpha x + b u + c v)` is exactly the square
    /// system with coefficients `J alpha`, `J b`, `J c`. Costs, prior,
    /// horizon, and initial state are untouched. For r > m the dropped
    /// equation rows are not represented here; the simulator checks them and
    /// records their residual separately.
    pub fn reduced(&self) -> Scenario {
        if self.is_square() {
            return self.clone();
        }
        let stages = self
            .stages
            .iter()
            .map(|st| StageData {
                alpha: complete_rows(&st.alpha, self.m),
                b: complete_rows(&st.b, self.m),
                c: complete_rows(&st.c, self.m),
                s: st.s.clone(),
                k: st.k.clone(),
            })
            .collect();
        Scenario {
            m: self.m,
            r: self.m,
            stages,
            horizon: self.horizon.clone(),
            prior: self.prior.clone(),
            x0: self.x0.clone(),
        }
    }
}

/// First `m` rows of `mat`, padded with zero rows if `mat` has fewer.
pub(crate) fn complete_rows(mat: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, mat.ncols());
    for row in 0..m.min(mat.nrows()) {
        for col in 0..mat.ncols() {
            out[(row, col)] = mat[(row, col)];
        }
    }
    out
}

fn check_shape(
    stage: usize,
    name: &'static str,
    mat: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), ScenarioError> {
    if mat.nrows() != rows || mat.ncols() != cols {
        return Err(ScenarioError::MatrixSizeMismatch {
            stage,
            name,
            rows,
            cols,
            found: mat.len(),
        });
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(ScenarioError::NonFiniteMatrix { stage, name });
    }
    Ok(())
}

fn check_symmetric_psd(stage: usize, name: &'static str, mat: &DMatrix<f64>) -> Result<(), ScenarioError> {
    let scale = 1.0 + mat.amax();
    let defect = (mat - mat.transpose()).amax();
    if defect > 1e-12 * scale {
        return Err(ScenarioError::NotSymmetric { stage, name, defect });
    }
    let min_eig = mat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 * scale {
        return Err(ScenarioError::NotPsd { stage, name, min_eig });
    }
    Ok(())
}

// ---------- file format ----------

#[derive(Serialize, Deserialize)]
struct StageFile {
    alpha: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    s: Vec<f64>,
    k: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HorizonFile {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    beta: Vec<f64>,
    r: Vec<f64>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    m: usize,
    r: usize,
    #[serde(rename = "M")]
    max_stage: usize,
    stages: Vec<StageFile>,
    horizon: HorizonFile,
    prior: PriorFile,
    x0: Vec<f64>,
}

fn matrix_from_flat(
    stage: usize,
    name: &'static str,
    data: &[f64],
    rows: usize,
    cols: usize,
) -> Result<DMatrix<f64>, ScenarioError> {
    if data.len() != rows * cols {
        return Err(ScenarioError::MatrixSizeMismatch {
            stage,
            name,
            rows,
            cols,
            found: data.len(),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn flat_from_matrix(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(mat.len());
    for row in 0..mat.nrows() {
        for col in 0..mat.ncols() {
            out.push(mat[(row, col)]);
        }
    }
    out
}

/// Parse and validate a scenario from JSON text.
pub fn scenario_from_json(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    if file.m == 0 {
        return Err(ScenarioError::BadStateDim);
    }
    if file.r == 0 {
        return Err(ScenarioError::BadRowCount);
    }
    if file.stages.len() != file.max_stage + 1 {
        return Err(ScenarioError::StageCountMismatch {
            expected: file.max_stage + 1,
            found: file.stages.len(),
        });
    }
    if file.horizon.probs.len() != file.max_stage + 1 {
        return Err(ScenarioError::HorizonLengthMismatch {
            expected: file.max_stage + 1,
            found: file.horizon.probs.len(),
        });
    }
    let (m, r) = (file.m, file.r);
    let mut stages = Vec::with_capacity(file.stages.len());
    for (i, st) in file.stages.iter().enumerate() {
        stages.push(StageData {
            alpha: matrix_from_flat(i, "alpha", &st.alpha, r, m)?,
            b: matrix_from_flat(i, "b", &st.b, r, m)?,
            c: matrix_from_flat(i, "c", &st.c, r, m)?,
            s: matrix_from_flat(i, "s", &st.s, 2 * m, 2 * m)?,
            k: matrix_from_flat(i, "k", &st.k, m, m)?,
        });
    }
    let horizon = HorizonDist::new(file.horizon.probs)?;
    let prior = PriorSpec {
        beta: file.prior.beta,
        scale: file.prior.r,
        active: file.prior.k,
    };
    Scenario::new(m, r, stages, horizon, prior, DVector::from_vec(file.x0))
}

/// Serialize a scenario to the documented JSON schema.
pub fn scenario_to_json(sc: &Scenario) -> String {
    let file = ScenarioFile {
        m: sc.m,
        r: sc.r,
        max_stage: sc.max_stage(),
        stages: sc
            .stages
            .iter()
            .map(|st| StageFile {
                alpha: flat_from_matrix(&st.alpha),
                b: flat_from_matrix(&st.b),
                c: flat_from_matrix(&st.c),
                s: flat_from_matrix(&st.s),
                k: flat_from_matrix(&st.k),
            })
            .collect(),
        horizon: HorizonFile {
            probs: sc.horizon.probs().to_vec(),
        },
        prior: PriorFile {
            beta: sc.prior.beta.clone(),
            r: sc.prior.scale.clone(),
            k: sc.prior.active,
        },
        x0: sc.x0.iter().cloned().collect(),
    };
    serde_json::to_string_pretty(&file).expect("scenario serialization cannot fail")
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(sc: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario_to_json(sc))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn minimal_scalar_json() -> String {
        r#"{
            "m": 1, "r": 1, "M": 1,
            "stages": [
                {"alpha": [1.0], "b": [1.0], "c": [1.0], "s": [1.0, 0.0, 0.0, 0.0], "k": [1.0]},
                {"alpha": [1.0], "b": [1.0], "c": [1.0], "s": [1.0, 0.0, 0.0, 0.0], "k": [1.0]}
            ],
            "horizon": {"probs": [0.0, 1.0]},
            "prior": {"beta": [3.0], "r": [1.0], "k": 1},
            "x0": [0.0]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_scalar_scenario_parses() {
        let sc = scenario_from_json(&minimal_scalar_json()).unwrap();
        assert_eq!(sc.state_dim(), 1);
        assert_eq!(sc.max_stage(), 1);
        assert!(sc.is_square());
        assert_eq!(sc.prior().active, 1);
        assert_eq!(sc.horizon().tail_mass(0), 1.0);
        assert_eq!(sc.horizon().tail_mass(1), 1.0);
    }

    #[test]
    fn shape_at_most_two_is_rejected_naming_beta() {
        let bad = minimal_scalar_json().replace("\"beta\": [3.0]", "\"beta\": [2.0]");
        match scenario_from_json(&bad) {
            Err(ScenarioError::BetaTooSmall { coord: 0, beta }) => assert_eq!(beta, 2.0),
            other => panic!("expected BetaTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let bad = minimal_scalar_json().replace("[0.0, 1.0]", "[0.25, 0.5]");
        assert!(matches!(
            scenario_from_json(&bad),
            Err(ScenarioError::ProbabilitiesDoNotSumToOne { .. })
        ));
    }

    #[test]
    fn final_probability_must_be_positive() {
        let bad = minimal_scalar_json().replace("[0.0, 1.0]", "[1.0, 0.0]");
        assert!(matches!(
            scenario_from_json(&bad),
            Err(ScenarioError::FinalProbabilityZero)
        ));
    }

    #[test]
    fn matrix_size_mismatch_names_stage_and_field() {
        let bad = minimal_scalar_json().replace("\"b\": [1.0], \"c\": [1.0]", "\"b\": [1.0, 2.0], \"c\": [1.0]");
        match scenario_from_json(&bad) {
            Err(ScenarioError::MatrixSizeMismatch { stage: 0, name: "b", .. }) => {}
            other => panic!("expected MatrixSizeMismatch on stage 0 field b, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_stage_weight_is_rejected() {
        let bad = minimal_scalar_json()
            .replace("\"s\": [1.0, 0.0, 0.0, 0.0]", "\"s\": [1.0, 0.5, 0.0, 0.0]");
        assert!(matches!(
            scenario_from_json(&bad),
            Err(ScenarioError::NotSymmetric { name: "s", .. })
        ));
    }

    #[test]
    fn indefinite_stage_weight_is_rejected() {
        // Symmetric but with eigenvalues {3, -1}; both stages hit it, stage 0 reports first.
        let bad = minimal_scalar_json()
            .replace("\"s\": [1.0, 0.0, 0.0, 0.0]", "\"s\": [1.0, 2.0, 2.0, 1.0]");
        assert!(matches!(
            scenario_from_json(&bad),
            Err(ScenarioError::NotPsd { name: "s", .. })
        ));
    }

    #[test]
    fn inactive_prior_coordinates_must_be_zero() {
        let json = r#"{
            "m": 2, "r": 2, "M": 0,
            "stages": [
                {"alpha": [1,0,0,1], "b": [1,0,0,1], "c": [1,0,0,1],
                 "s": [0,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0], "k": [1,0,0,1]}
            ],
            "horizon": {"probs": [1.0]},
            "prior": {"beta": [3.0, 0.5], "r": [1.0, 0.0], "k": 1},
            "x0": [0.0, 0.0]
        }"#;
        assert!(matches!(
            scenario_from_json(json),
            Err(ScenarioError::InactiveNotZero { field: "beta", coord: 1 })
        ));
    }

    #[test]
    fn tail_mass_of_known_distribution() {
        let h = HorizonDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(h.tail_mass(0), 1.0);
        assert_relative_eq!(h.tail_mass(1), 0.8, epsilon = 1e-15);
        assert_relative_eq!(h.tail_mass(2), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn point_mass_tail_is_all_ones() {
        let h = HorizonDist::point_mass(3);
        for n in 0..=3 {
            assert_eq!(h.tail_mass(n), 1.0);
        }
    }

    #[test]
    fn sampling_point_mass_always_returns_the_atom() {
        let h = HorizonDist::point_mass(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(h.sample(&mut rng), 2);
        }
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        let h = HorizonDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 3];
        let reps = 100_000;
        for _ in 0..reps {
            counts[h.sample(&mut rng)] += 1;
        }
        for (i, &p) in h.probs().iter().enumerate() {
            let freq = counts[i] as f64 / reps as f64;
            assert!((freq - p).abs() < 0.01, "stage {i}: freq {freq} vs p {p}");
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let sc = scenario_from_json(&minimal_scalar_json()).unwrap();
        let text = scenario_to_json(&sc);
        let back = scenario_from_json(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn file_round_trip_is_identity() {
        let sc = scenario_from_json(&minimal_scalar_json()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sc.json");
        save_scenario(&sc, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), sc);
    }

    #[test]
    fn reduction_truncates_extra_rows() {
        // r = 2 > m = 1: keep the first row, drop the second.
        let json = r#"{
            "m": 1, "r": 2, "M": 0,
            "stages": [
                {"alpha": [1.0, 3.0], "b": [2.0, 4.0], "c": [1.0, 0.0],
                 "s": [1.0, 0.0, 0.0, 0.0], "k": [1.0]}
            ],
            "horizon": {"probs": [1.0]},
            "prior": {"beta": [3.0], "r": [1.0], "k": 1},
            "x0": [0.5]
        }"#;
        let sc = scenario_from_json(json).unwrap();
        assert!(!sc.is_square());
        let red = sc.reduced();
        assert!(red.is_square());
        assert_eq!(red.stage(0).alpha[(0, 0)], 1.0);
        assert_eq!(red.stage(0).b[(0, 0)], 2.0);
    }

    #[test]
    fn reduction_zero_pads_missing_rows() {
        // r = 1 < m = 2: second state coordinate gets a zero dynamics row.
        let json = r#"{
            "m": 2, "r": 1, "M": 0,
            "stages": [
                {"alpha": [1.0, 2.0], "b": [0.5, 0.0], "c": [1.0, 0.0],
                 "s": [0,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,0], "k": [1,0,0,1]}
            ],
            "horizon": {"probs": [1.0]},
            "prior": {"beta": [3.0, 0.0], "r": [1.0, 0.0], "k": 1},
            "x0": [0.0, 0.0]
        }"#;
        let sc = scenario_from_json(json).unwrap();
        let red = sc.reduced();
        assert_eq!(red.stage(0).alpha.nrows(), 2);
        assert_eq!(red.stage(0).alpha[(0, 1)], 2.0);
        assert_eq!(red.stage(0).alpha[(1, 0)], 0.0);
        assert_eq!(red.stage(0).alpha[(1, 1)], 0.0);
    }

    proptest! {
        #[test]
        fn tail_mass_is_monotone_and_starts_at_one(
            raw in proptest::collection::vec(0.01f64..1.0, 1..8)
        ) {
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let h = HorizonDist::new(probs).unwrap();
            prop_assert_eq!(h.tail_mass(0), 1.0);
            for n in 1..=h.max_stage() {
                prop_assert!(h.tail_mass(n) <= h.tail_mass(n - 1));
                prop_assert!(h.tail_mass(n) > 0.0);
            }
        }
    }
}
