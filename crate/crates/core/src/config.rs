//! Experiment configuration: JSON file, `key=value` overrides and a stable hash.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::coupling::CouplingConfig;
use crate::error::{LabError, Result};
use crate::frame_bm::SdeStepConfig;
use crate::geometry::{reference_point, ChartPoint, MetricModel, ModelParams, ModelRegistry, SharedModel};
use crate::lgeodesic::ShootConfig;
use crate::linalg::to_vec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootParams {
    /// RK4 steps for single evaluations (`qdist`, comparison checks).
    pub ode_steps: usize,
    /// RK4 steps inside Monte Carlo loops.
    pub mc_ode_steps: usize,
    pub random_starts: usize,
    pub fd_step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub q_tie_tol: f64,
    pub z_sep_tol: f64,
    pub direct_nodes: usize,
}

impl Default for ShootParams {
    fn default() -> Self {
        let d = ShootConfig::default();
        Self {
            ode_steps: d.ode_steps,
            mc_ode_steps: ShootConfig::fast().ode_steps,
            random_starts: d.random_starts,
            fd_step: d.fd_step,
            tol: d.tol,
            max_iter: d.max_iter,
            q_tie_tol: d.q_tie_tol,
            z_sep_tol: d.z_sep_tol,
            direct_nodes: d.direct_nodes,
        }
    }
}

impl ShootParams {
    fn apply(&self, base: ShootConfig, steps: usize) -> ShootConfig {
        ShootConfig {
            ode_steps: steps,
            random_starts: self.random_starts,
            fd_step: self.fd_step,
            tol: self.tol,
            max_iter: self.max_iter,
            q_tie_tol: self.q_tie_tol,
            z_sep_tol: self.z_sep_tol,
            direct_nodes: self.direct_nodes,
            ..base
        }
    }

    pub fn accurate(&self) -> ShootConfig {
        self.apply(ShootConfig::default(), self.ode_steps)
    }

    pub fn monte_carlo(&self) -> ShootConfig {
        self.apply(ShootConfig::fast(), self.mc_ode_steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub dim: usize,
    pub bump_amplitude: f64,
    pub bump_width: f64,
    pub seed: u64,
    pub dt: f64,
    pub n_trials: usize,
    /// Speed scale of `simulate` paths.
    pub speed_scale: f64,
    pub s0: f64,
    pub t_end: f64,
    /// Start point; the model's reference point when absent.
    pub x: Option<Vec<f64>>,
    /// Second point for `qdist` and `couple`.
    pub y: Option<Vec<f64>>,
    pub tau1: f64,
    pub tau2: f64,
    pub tau_bar1: f64,
    pub tau_bar2: f64,
    pub coupling_dt: f64,
    pub q_every: usize,
    pub cut_fallback_tol: f64,
    pub max_q_failures: usize,
    pub shoot: ShootParams,
    pub suite: String,
    /// Grid size of the supermartingale test.
    pub grid_points: usize,
    /// Multiplier on `V` in the supermartingale test.
    pub v_scale: f64,
    /// SDE steps between `Q` evaluations in the quadratic-variation test.
    pub qv_stride: usize,
    pub qv_tol: f64,
    /// Configurations of the comparison test.
    pub n_points: usize,
    pub comparison_slack: f64,
    /// Clock grid `s0 growth^k`, `k < theta_points`.
    pub theta_points: usize,
    pub theta_growth: f64,
    /// Pairs per empirical transportation-cost sample.
    pub theta_batch: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let c = CouplingConfig::default();
        Self {
            model: "sphere".into(),
            dim: 2,
            bump_amplitude: ModelParams::default().bump_amplitude,
            bump_width: ModelParams::default().bump_width,
            seed: 1,
            dt: 1e-3,
            n_trials: 2000,
            speed_scale: 1.0,
            s0: 0.25,
            t_end: 1.0,
            x: None,
            y: None,
            tau1: 0.0,
            tau2: 1.0,
            tau_bar1: c.tau_bar1,
            tau_bar2: c.tau_bar2,
            coupling_dt: c.dt,
            q_every: c.q_every,
            cut_fallback_tol: c.cut_fallback_tol,
            max_q_failures: c.max_q_failures,
            shoot: ShootParams::default(),
            suite: "supermartingale".into(),
            grid_points: 10,
            v_scale: 1.0,
            qv_stride: 5,
            qv_tol: 0.15,
            n_points: 20,
            comparison_slack: 0.05,
            theta_points: 5,
            theta_growth: 1.5,
            theta_batch: 20,
        }
    }
}

fn invalid<T>(msg: String) -> Result<T> {
    Err(LabError::Invalid(msg))
}

impl ExperimentConfig {
    /// Parses a JSON document; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Invalid(format!("config: {e}")))
    }

    /// Applies `key=value` overrides. Dotted keys address nested tables;
    /// values are parsed as JSON and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).map_err(|e| LabError::Invalid(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let Some((key, raw)) = item.split_once('=') else {
                return invalid(format!("override `{item}` is not of the form key=value"));
            };
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                let Some(obj) = slot.as_object_mut() else {
                    return invalid(format!("override `{key}`: `{part}` is not inside a table"));
                };
                if !obj.contains_key(part) {
                    return invalid(format!("override `{key}`: unknown key `{part}`"));
                }
                slot = obj.get_mut(part).expect("key checked above");
            }
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| LabError::Invalid(format!("override: {e}")))
    }

    /// Canonical JSON: struct fields in declaration order, shortest
    /// round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams { dim: self.dim, bump_amplitude: self.bump_amplitude, bump_width: self.bump_width }
    }

    pub fn build_model(&self) -> Result<SharedModel> {
        ModelRegistry::builtin().build(&self.model, &self.model_params())
    }

    pub fn start_point(&self, model: &dyn MetricModel) -> Result<ChartPoint> {
        match &self.x {
            Some(x) => ChartPoint::new(model, x),
            None => ChartPoint::new(model, &to_vec(&reference_point(model), model.ambient_dim())),
        }
    }

    pub fn second_point(&self, model: &dyn MetricModel) -> Result<ChartPoint> {
        match &self.y {
            Some(y) => ChartPoint::new(model, y),
            None => invalid("`y` is required".into()),
        }
    }

    pub fn sde(&self) -> SdeStepConfig {
        SdeStepConfig { dt: self.dt, speed_scale: self.speed_scale, ..SdeStepConfig::default() }
    }

    /// Clock grid of the transportation-cost test.
    pub fn theta_times(&self) -> Vec<f64> {
        (0..self.theta_points).map(|k| self.s0 * self.theta_growth.powi(k as i32)).collect()
    }

    pub fn coupling(&self) -> CouplingConfig {
        let t_end = if self.theta_points > 1 { *self.theta_times().last().expect("non-empty") } else { self.t_end };
        CouplingConfig {
            tau_bar1: self.tau_bar1,
            tau_bar2: self.tau_bar2,
            s: self.s0,
            t_end,
            dt: self.coupling_dt,
            n_trials: self.n_trials,
            cut_fallback_tol: self.cut_fallback_tol,
            q_every: self.q_every,
            max_q_failures: self.max_q_failures,
        }
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<SharedModel> {
        let model = self.build_model()?;
        self.sde().validate()?;
        if self.n_trials == 0 {
            return invalid("n_trials must be positive".into());
        }
        if !(self.s0 > 0.0 && self.s0 < self.t_end) {
            return invalid(format!("need 0 < s0 < t_end, got s0={}, t_end={}", self.s0, self.t_end));
        }
        if !(self.speed_scale > 0.0) {
            return invalid("speed_scale must be positive".into());
        }
        if !(self.grid_points >= 2 && self.grid_points <= 10) {
            return invalid(format!("grid_points must lie in 2..=10, got {}", self.grid_points));
        }
        if !(self.v_scale > 0.0 && self.qv_tol > 0.0 && self.comparison_slack >= 0.0) || self.qv_stride == 0 {
            return invalid("v_scale, qv_tol, qv_stride must be positive and comparison_slack non-negative".into());
        }
        if self.theta_points == 0 || self.theta_batch == 0 || self.theta_batch > 256 || !(self.theta_growth > 1.0) {
            return invalid("theta_points must be positive, theta_batch in 1..=256, theta_growth > 1".into());
        }
        if self.shoot.ode_steps < 2 || self.shoot.mc_ode_steps < 2 || !(self.shoot.tol > 0.0 && self.shoot.fd_step > 0.0) {
            return invalid("shooting needs at least 2 ODE steps and positive tol and fd_step".into());
        }
        self.start_point(model.as_ref())?;
        if self.y.is_some() {
            self.second_point(model.as_ref())?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_values_and_nested_keys() {
        let c = ExperimentConfig::default()
            .with_overrides(&["model=euclidean", "n_trials=7", "x=[0.5,0.0]", "shoot.ode_steps=200"])
            .unwrap();
        assert_eq!(c.model, "euclidean");
        assert_eq!(c.n_trials, 7);
        assert_eq!(c.x, Some(vec![0.5, 0.0]));
        assert_eq!(c.shoot.ode_steps, 200);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let c = ExperimentConfig::default();
        assert!(c.with_overrides(&["nope=1"]).is_err());
        assert!(c.with_overrides(&["shoot.nope=1"]).is_err());
        assert!(c.with_overrides(&["n_trials=many"]).is_err());
        assert!(c.with_overrides(&["n_trials"]).is_err());
        assert!(ExperimentConfig::from_json(r#"{"modle": "sphere"}"#).is_err());
    }

    #[test]
    fn json_round_trip_preserves_config_and_hash() {
        let c = ExperimentConfig::default().with_overrides(&["dt=0.0007", "tau_bar1=0.1"]).unwrap();
        let back = ExperimentConfig::from_json(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(ExperimentConfig::default().hash(), c.hash());
    }

    #[test]
    fn validation_catches_inconsistent_settings() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = |o: &str| ExperimentConfig::default().with_overrides(&[o]).unwrap().validate().is_err();
        assert!(bad("dt=0.1"));
        assert!(bad("s0=2.0"));
        assert!(bad("model=torus"));
        assert!(bad("x=[1.0,2.0]"));
        assert!(bad("grid_points=11"));
    }

    #[test]
    fn default_start_is_the_reference_point() {
        let c = ExperimentConfig::default();
        let m = c.build_model().unwrap();
        assert_eq!(c.start_point(m.as_ref()).unwrap().to_vec(m.as_ref()), vec![0.0, 0.0, 1.0]);
    }
}
