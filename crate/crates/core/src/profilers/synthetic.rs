use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{setting_str, MeasureSet, Profiler, ProfilerError, RunContext, Settings};
use crate::model::substitute;

/// Deterministic stand-in for a physical meter.
///
/// Energy is `power_w × duration_s`; `values` adds constant metrics. Any
/// setting may be a string with `{param}` placeholders filled from the run's
/// treatment parameters, so treatments can drive the output. With `jitter`
/// each value is scaled by `1 + jitter·u`, `u` uniform in [−1, 1] drawn from a
/// generator keyed by (seed, run_id): identical inputs give identical bits.
#[derive(Debug, Clone)]
pub struct SyntheticProfiler {
    name: String,
    energy_metric: Option<String>,
    power_w: String,
    duration_s: String,
    jitter: String,
    values: BTreeMap<String, String>,
    started: bool,
}

fn raw(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SyntheticProfiler {
    pub fn from_settings(name: &str, settings: &Settings) -> Result<Self, ProfilerError> {
        let values: BTreeMap<String, String> = match settings.get("values") {
            None => BTreeMap::new(),
            Some(serde_json::Value::Object(map)) => {
                map.iter().map(|(k, v)| (k.clone(), raw(v))).collect()
            }
            Some(other) => {
                return Err(ProfilerError::Setting {
                    profiler: name.to_string(),
                    key: "values".into(),
                    message: format!("expected an object, got {other}"),
                })
            }
        };
        let energy_metric = if values.is_empty() || settings.contains_key("power_w") {
            Some(setting_str(settings, "energy_metric").unwrap_or_else(|| "energy".into()))
        } else {
            None
        };
        Ok(SyntheticProfiler {
            name: name.to_string(),
            energy_metric,
            power_w: setting_str(settings, "power_w").unwrap_or_else(|| "1".into()),
            duration_s: setting_str(settings, "duration_s").unwrap_or_else(|| "1".into()),
            jitter: setting_str(settings, "jitter").unwrap_or_else(|| "0".into()),
            values,
            started: false,
        })
    }

    /// Emits the given constants for exactly these metrics.
    pub fn constant(name: &str, values: impl IntoIterator<Item = (String, f64)>) -> Self {
        SyntheticProfiler {
            name: name.to_string(),
            energy_metric: None,
            power_w: "1".into(),
            duration_s: "1".into(),
            jitter: "0".into(),
            values: values
                .into_iter()
                .map(|(k, v)| (k, v.to_string()))
                .collect(),
            started: false,
        }
    }

    fn number(&self, key: &str, template: &str, ctx: &RunContext) -> Result<f64, ProfilerError> {
        let setting = |message: String| ProfilerError::Setting {
            profiler: self.name.clone(),
            key: key.to_string(),
            message,
        };
        let text = substitute(template, &ctx.vars)
            .map_err(|p| setting(format!("unknown placeholder `{{{p}}}`")))?;
        let v: f64 = text
            .trim()
            .parse()
            .map_err(|_| setting(format!("`{text}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(setting("not finite".into()))
        }
    }

    /// Deterministic generator for one run.
    pub fn run_rng(seed: u64, run_id: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(run_id.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(bytes)
    }

    /// The values this profiler reports for a run, without start/stop.
    pub fn measure(&self, ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        let jitter = self.number("jitter", &self.jitter, ctx)?;
        let mut rng = Self::run_rng(ctx.seed, &ctx.run_id);
        let mut scale = || {
            if jitter == 0.0 {
                1.0
            } else {
                1.0 + jitter * rng.gen_range(-1.0..=1.0)
            }
        };
        let mut set = MeasureSet::new();
        if let Some(metric) = &self.energy_metric {
            let power = self.number("power_w", &self.power_w, ctx)?;
            let duration = self.number("duration_s", &self.duration_s, ctx)?;
            set.push(duration, metric, power * duration * scale());
        }
        for (metric, template) in &self.values {
            let v = self.number(metric, template, ctx)?;
            set.push(0.0, metric, v * scale());
        }
        Ok(set)
    }
}

impl Profiler for SyntheticProfiler {
    fn name(&self) -> &str {
        &self.name
    }

    fn declared_metrics(&self) -> Vec<String> {
        self.energy_metric
            .iter()
            .cloned()
            .chain(self.values.keys().cloned())
            .collect()
    }

    fn start(&mut self, _ctx: &RunContext) -> Result<(), ProfilerError> {
        self.started = true;
        Ok(())
    }

    fn stop(&mut self, ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        if !std::mem::take(&mut self.started) {
            return Err(ProfilerError::Failed {
                profiler: self.name.clone(),
                message: "stop without start".into(),
            });
        }
        self.measure(ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::path::PathBuf;
    use std::time::Instant;

    fn ctx(run_id: &str, seed: u64, vars: &[(&str, &str)]) -> RunContext {
        RunContext {
            run_id: run_id.into(),
            subject: "s".into(),
            repetition: 1,
            treatments: vec![],
            vars: vars
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            output_dir: PathBuf::from("."),
            seed,
            started: Instant::now(),
        }
    }

    fn settings(v: serde_json::Value) -> Settings {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn constant_power_over_five_seconds() {
        let mut p = SyntheticProfiler::from_settings(
            "synthetic",
            &settings(json!({"power_w": 2, "duration_s": 5})),
        )
        .unwrap();
        let c = ctx("r1", 0, &[]);
        p.start(&c).unwrap();
        let set = p.stop(&c).unwrap();
        assert_eq!(set.values_of("energy").collect::<Vec<_>>(), vec![10.0]);
        assert_eq!(p.declared_metrics(), vec!["energy"]);
    }

    #[test]
    fn treatment_parameters_drive_power() {
        let p = SyntheticProfiler::from_settings(
            "synthetic",
            &settings(json!({"power_w": "{power}", "values": {"cpu": "{cpu}"}})),
        )
        .unwrap();
        let set = p
            .measure(&ctx("r1", 0, &[("power", "20"), ("cpu", "35.5")]))
            .unwrap();
        assert_eq!(set.values_of("energy").next(), Some(20.0));
        assert_eq!(set.values_of("cpu").next(), Some(35.5));
        assert!(p.measure(&ctx("r1", 0, &[])).is_err());
    }

    #[test]
    fn jitter_is_bit_deterministic_per_seed_and_run() {
        let p = SyntheticProfiler::from_settings(
            "synthetic",
            &settings(json!({"power_w": 10, "jitter": 0.1})),
        )
        .unwrap();
        let a = p.measure(&ctx("r1", 3, &[])).unwrap();
        let b = p.measure(&ctx("r1", 3, &[])).unwrap();
        let c = p.measure(&ctx("r2", 3, &[])).unwrap();
        let d = p.measure(&ctx("r1", 4, &[])).unwrap();
        let bits = |s: &MeasureSet| s.values_of("energy").next().unwrap().to_bits();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
        assert_ne!(bits(&a), bits(&d));
        let v = f64::from_bits(bits(&a));
        assert!((9.0..=11.0).contains(&v));
    }

    #[test]
    fn values_only_profiler_declares_no_energy() {
        let p = SyntheticProfiler::from_settings(
            "synthetic",
            &settings(json!({"values": {"time": 1.5}})),
        )
        .unwrap();
        assert_eq!(p.declared_metrics(), vec!["time"]);
    }
}
