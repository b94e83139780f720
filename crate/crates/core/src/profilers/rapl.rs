use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use super::{
    sample_period, setting_str, MeasureSet, Profiler, ProfilerError, RunContext, Settings,
    SAMPLE_BUFFER_CAP,
};

/// A powercap-style energy domain: a directory holding `energy_uj` and
/// `max_energy_range_uj` as decimal ASCII.
///
/// Readings are taken as ground truth; the counter's own accuracy is not modeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyCounterSource {
    dir: PathBuf,
    max_energy_range_uj: u64,
}

fn read_u64(path: &Path) -> Result<u64, ProfilerError> {
    let text = fs::read_to_string(path).map_err(|source| ProfilerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.trim().parse().map_err(|_| ProfilerError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("`{}` is not a decimal integer", text.trim()),
        ),
    })
}

impl EnergyCounterSource {
    /// Opens a domain directory, reading its wrap modulus.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ProfilerError> {
        let dir = dir.into();
        let max_energy_range_uj = read_u64(&dir.join("max_energy_range_uj"))?;
        if max_energy_range_uj == 0 {
            return Err(ProfilerError::Io {
                path: dir.join("max_energy_range_uj"),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, "range must be > 0"),
            });
        }
        Ok(EnergyCounterSource {
            dir,
            max_energy_range_uj,
        })
    }

    pub fn with_range(dir: impl Into<PathBuf>, max_energy_range_uj: u64) -> Self {
        assert!(max_energy_range_uj > 0);
        EnergyCounterSource {
            dir: dir.into(),
            max_energy_range_uj,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn max_energy_range_uj(&self) -> u64 {
        self.max_energy_range_uj
    }

    /// Current raw counter value in microjoules.
    pub fn read_raw(&self) -> Result<u64, ProfilerError> {
        let raw = read_u64(&self.dir.join("energy_uj"))?;
        if raw >= self.max_energy_range_uj {
            return Err(ProfilerError::CounterDomain {
                raw,
                range: self.max_energy_range_uj,
            });
        }
        Ok(raw)
    }

    /// Energy between two readings in microjoules, assuming at most one wrap.
    pub fn delta_uj(&self, start_raw: u64, end_raw: u64) -> Result<u64, ProfilerError> {
        let range = self.max_energy_range_uj;
        for raw in [start_raw, end_raw] {
            if raw >= range {
                return Err(ProfilerError::CounterDomain { raw, range });
            }
        }
        Ok(if end_raw >= start_raw {
            end_raw - start_raw
        } else {
            range - start_raw + end_raw
        })
    }
}

/// Joules elapsed between two raw readings: `((end − start) mod range) / 10⁶`.
pub fn read_energy_delta(
    source: &EnergyCounterSource,
    start_raw: u64,
    end_raw: u64,
) -> Result<f64, ProfilerError> {
    Ok(source.delta_uj(start_raw, end_raw)? as f64 / 1e6)
}

/// Per-tick (seconds, microjoules) deltas and the final raw reading.
type SamplerOutput = Result<(Vec<(f64, u64)>, u64), ProfilerError>;

struct Sampler {
    stop: Sender<()>,
    handle: JoinHandle<SamplerOutput>,
}

/// Energy profiler over a powercap domain.
///
/// With a nonzero `sample_period_ms` a background thread reads the counter
/// every period and records per-tick deltas, which keeps each interval under
/// one wrap for any realistic domain. With period 0 only the start and stop
/// readings are taken.
pub struct RaplProfiler {
    name: String,
    metric: String,
    domain: PathBuf,
    period: Duration,
    source: Option<EnergyCounterSource>,
    start_raw: u64,
    sampler: Option<Sampler>,
}

impl RaplProfiler {
    pub fn from_settings(name: &str, settings: &Settings) -> Result<Self, ProfilerError> {
        let domain = setting_str(settings, "domain")
            .unwrap_or_else(|| "/sys/class/powercap/intel-rapl:0".to_string());
        Ok(RaplProfiler {
            name: name.to_string(),
            metric: setting_str(settings, "metric").unwrap_or_else(|| "energy".to_string()),
            domain: PathBuf::from(domain),
            period: sample_period(name, settings)?,
            source: None,
            start_raw: 0,
            sampler: None,
        })
    }

    fn failed(&self, message: impl Into<String>) -> ProfilerError {
        ProfilerError::Failed {
            profiler: self.name.clone(),
            message: message.into(),
        }
    }
}

impl Profiler for RaplProfiler {
    fn name(&self) -> &str {
        &self.name
    }

    fn declared_metrics(&self) -> Vec<String> {
        vec![self.metric.clone()]
    }

    fn check_ready(&self) -> Result<(), ProfilerError> {
        EnergyCounterSource::open(&self.domain)
            .and_then(|s| s.read_raw().map(|_| ()))
            .map_err(|e| ProfilerError::NotReady {
                profiler: self.name.clone(),
                message: e.to_string(),
            })
    }

    fn start(&mut self, ctx: &RunContext) -> Result<(), ProfilerError> {
        let source = EnergyCounterSource::open(&self.domain)?;
        self.start_raw = source.read_raw()?;
        if !self.period.is_zero() {
            let (tx, rx) = mpsc::channel::<()>();
            let thread_source = source.clone();
            let period = self.period;
            let started = ctx.started;
            let mut prev = self.start_raw;
            let handle = std::thread::spawn(move || {
                let mut ticks: Vec<(f64, u64)> = Vec::new();
                loop {
                    match rx.recv_timeout(period) {
                        Err(RecvTimeoutError::Timeout) => {
                            let raw = thread_source.read_raw()?;
                            let delta = thread_source.delta_uj(prev, raw)?;
                            prev = raw;
                            let t = started.elapsed().as_secs_f64();
                            if ticks.len() < SAMPLE_BUFFER_CAP {
                                ticks.push((t, delta));
                            } else if let Some(last) = ticks.last_mut() {
                                // buffer full: fold into the last tick, keeping the sum
                                *last = (t, last.1 + delta);
                            }
                        }
                        _ => return Ok((ticks, prev)),
                    }
                }
            });
            self.sampler = Some(Sampler { stop: tx, handle });
        }
        self.source = Some(source);
        Ok(())
    }

    fn stop(&mut self, ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        let source = self
            .source
            .take()
            .ok_or_else(|| self.failed("stop without start"))?;
        let (ticks, last_raw) = match self.sampler.take() {
            Some(sampler) => {
                let _ = sampler.stop.send(());
                sampler
                    .handle
                    .join()
                    .map_err(|_| self.failed("sampler thread panicked"))??
            }
            None => (Vec::new(), self.start_raw),
        };
        let end_raw = source.read_raw()?;
        let mut set = MeasureSet::new();
        for (t, uj) in ticks {
            set.push(t, &self.metric, uj as f64 / 1e6);
        }
        set.push(
            ctx.started.elapsed().as_secs_f64(),
            &self.metric,
            read_energy_delta(&source, last_raw, end_raw)?,
        );
        Ok(set)
    }
}

/// Writes a mock powercap domain, for tests and examples.
pub fn write_mock_domain(dir: &Path, range_uj: u64, energy_uj: u64) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("max_energy_range_uj"), format!("{range_uj}\n"))?;
    set_mock_energy(dir, energy_uj)
}

/// Updates a mock domain's counter atomically.
pub fn set_mock_energy(dir: &Path, energy_uj: u64) -> std::io::Result<()> {
    let tmp = dir.join(".energy_uj.tmp");
    fs::write(&tmp, format!("{energy_uj}\n"))?;
    fs::rename(tmp, dir.join("energy_uj"))
}
