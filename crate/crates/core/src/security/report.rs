use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of one attack run. Everything except `wall_ms` is a function of
/// the inputs and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub name: String,
    pub trials: u64,
    pub success_count: u64,
    pub success_rate: f64,
    /// Success rate of an attacker with no information.
    pub baseline_rate: f64,
    pub seed: u64,
    pub params: serde_json::Value,
    /// Attack-specific measurements.
    pub metrics: BTreeMap<String, f64>,
    pub wall_ms: f64,
}

impl AttackReport {
    pub fn new(
        name: &str,
        trials: u64,
        success_count: u64,
        baseline_rate: f64,
        seed: u64,
        params: serde_json::Value,
    ) -> Result<Self> {
        if trials == 0 {
            return Err(Error::param("an attack needs at least one trial"));
        }
        if success_count > trials {
            return Err(Error::param("more successes than trials"));
        }
        Ok(Self {
            name: name.to_string(),
            trials,
            success_count,
            success_rate: success_count as f64 / trials as f64,
            baseline_rate,
            seed,
            params,
            metrics: BTreeMap::new(),
            wall_ms: 0.0,
        })
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub(crate) fn timed(mut self, start: Instant) -> Self {
        self.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }

    /// Copy with the wall clock zeroed, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_and_json_round_trip() {
        let r = AttackReport::new("x", 4, 1, 0.25, 7, serde_json::json!({"k": 2}))
            .unwrap()
            .metric("m", 0.5);
        assert_eq!(r.success_rate, 0.25);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<AttackReport>(&s).unwrap(), r);
        assert!(AttackReport::new("x", 0, 0, 0.0, 0, serde_json::Value::Null).is_err());
        assert!(AttackReport::new("x", 1, 2, 0.0, 0, serde_json::Value::Null).is_err());
    }
}
