use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{
    sample_period, setting_str, MeasureSet, Profiler, ProfilerError, RunContext, Settings,
    SAMPLE_BUFFER_CAP,
};

/// CPU utilization (and optionally resident memory) of the subject's process
/// tree, read from `/proc` every sampling period.
///
/// CPU is reported in percent of one core. Runs too short for a single period
/// fall back to the children rusage delta between start and stop.
pub struct ProcessSampler {
    name: String,
    cpu_metric: String,
    memory_metric: Option<String>,
    period: Duration,
    state: Option<SamplerState>,
}

/// (seconds since start, cpu percent, rss bytes)
type CpuSample = (f64, f64, Option<f64>);

struct SamplerState {
    started_at: Instant,
    rusage_start: f64,
    thread: Option<(Sender<()>, JoinHandle<Vec<CpuSample>>)>,
}

fn clock_ticks() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as f64
    } else {
        100.0
    }
}

fn page_size() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let p = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    if p > 0 {
        p as f64
    } else {
        4096.0
    }
}

/// CPU seconds consumed by reaped children of this process.
fn children_cpu_seconds() -> f64 {
    // SAFETY: getrusage writes into the provided struct only.
    unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_CHILDREN, &mut usage) != 0 {
            return 0.0;
        }
        let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
        tv(usage.ru_utime) + tv(usage.ru_stime)
    }
}

struct Stat {
    ppid: u32,
    /// utime + stime + cutime + cstime, in clock ticks
    ticks: u64,
    rss_pages: u64,
}

fn read_stat(pid: u32) -> Option<Stat> {
    let text = fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // the command name may contain spaces; fields resume after the last ')'
    let rest = &text[text.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let num = |i: usize| fields.get(i).and_then(|f| f.parse::<u64>().ok());
    Some(Stat {
        ppid: num(1)? as u32,
        ticks: num(11)? + num(12)? + num(13)? + num(14)?,
        rss_pages: num(21)?,
    })
}

/// Total ticks and resident pages over `root` and all its descendants.
fn tree_usage(root: u32) -> Option<(u64, u64)> {
    let mut stats: BTreeMap<u32, Stat> = BTreeMap::new();
    for entry in fs::read_dir("/proc").ok()?.flatten() {
        if let Some(pid) = entry.file_name().to_str().and_then(|s| s.parse().ok()) {
            if let Some(stat) = read_stat(pid) {
                stats.insert(pid, stat);
            }
        }
    }
    stats.get(&root)?;
    let mut tree: BTreeSet<u32> = BTreeSet::from([root]);
    loop {
        let before = tree.len();
        for (pid, stat) in &stats {
            if tree.contains(&stat.ppid) {
                tree.insert(*pid);
            }
        }
        if tree.len() == before {
            break;
        }
    }
    Some(
        tree.iter()
            .filter_map(|p| stats.get(p))
            .fold((0, 0), |(t, r), s| (t + s.ticks, r + s.rss_pages)),
    )
}

impl ProcessSampler {
    pub fn from_settings(name: &str, settings: &Settings) -> Result<Self, ProfilerError> {
        let mut period = sample_period(name, settings)?;
        if period.is_zero() {
            period = super::DEFAULT_SAMPLE_PERIOD;
        }
        Ok(ProcessSampler {
            name: name.to_string(),
            cpu_metric: setting_str(settings, "cpu_metric").unwrap_or_else(|| "cpu".into()),
            memory_metric: setting_str(settings, "memory_metric"),
            period,
            state: None,
        })
    }
}

impl Profiler for ProcessSampler {
    fn name(&self) -> &str {
        &self.name
    }

    fn declared_metrics(&self) -> Vec<String> {
        std::iter::once(self.cpu_metric.clone())
            .chain(self.memory_metric.clone())
            .collect()
    }

    fn check_ready(&self) -> Result<(), ProfilerError> {
        if read_stat(std::process::id()).is_none() {
            return Err(ProfilerError::NotReady {
                profiler: self.name.clone(),
                message: "/proc/<pid>/stat is not readable".into(),
            });
        }
        Ok(())
    }

    fn start(&mut self, _ctx: &RunContext) -> Result<(), ProfilerError> {
        self.state = Some(SamplerState {
            started_at: Instant::now(),
            rusage_start: children_cpu_seconds(),
            thread: None,
        });
        Ok(())
    }

    fn subject_started(&mut self, pid: u32) {
        let Some(state) = self.state.as_mut() else {
            return;
        };
        let period = self.period;
        let hz = clock_ticks();
        let page = page_size();
        let started = state.started_at;
        let (tx, rx) = mpsc::channel::<()>();
        let handle = std::thread::spawn(move || {
            let mut samples = Vec::new();
            let mut last = tree_usage(pid).map(|(t, _)| (Instant::now(), t));
            while let Err(RecvTimeoutError::Timeout) = rx.recv_timeout(period) {
                let now = Instant::now();
                let Some((ticks, rss)) = tree_usage(pid) else {
                    break;
                };
                if let Some((then, prev)) = last {
                    let wall = now.duration_since(then).as_secs_f64();
                    if wall > 0.0 && samples.len() < SAMPLE_BUFFER_CAP {
                        let cpu = ticks.saturating_sub(prev) as f64 / hz / wall * 100.0;
                        let t = now.duration_since(started).as_secs_f64();
                        samples.push((t, cpu, Some(rss as f64 * page)));
                    }
                }
                last = Some((now, ticks));
            }
            samples
        });
        state.thread = Some((tx, handle));
    }

    fn stop(&mut self, _ctx: &RunContext) -> Result<MeasureSet, ProfilerError> {
        let state = self.state.take().ok_or_else(|| ProfilerError::Failed {
            profiler: self.name.clone(),
            message: "stop without start".into(),
        })?;
        let samples = match state.thread {
            Some((tx, handle)) => {
                let _ = tx.send(());
                handle.join().unwrap_or_default()
            }
            None => Vec::new(),
        };
        let mut set = MeasureSet::new();
        for (t, cpu, rss) in &samples {
            set.push(*t, &self.cpu_metric, *cpu);
            if let (Some(metric), Some(rss)) = (&self.memory_metric, rss) {
                set.push(*t, metric, *rss);
            }
        }
        if !set.has(&self.cpu_metric) {
            let wall = state.started_at.elapsed().as_secs_f64();
            let cpu = children_cpu_seconds() - state.rusage_start;
            let t = wall;
            set.push(
                t,
                &self.cpu_metric,
                if wall > 0.0 { cpu / wall * 100.0 } else { 0.0 },
            );
        }
        if let Some(metric) = &self.memory_metric {
            if !set.has(metric) {
                set.push(state.started_at.elapsed().as_secs_f64(), metric, 0.0);
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MetricSpec, Unit};
    use crate::profilers::aggregate;
    use std::path::PathBuf;
    use std::process::Command;

    fn ctx() -> RunContext {
        RunContext {
            run_id: "r1".into(),
            subject: "s".into(),
            repetition: 1,
            treatments: vec![],
            vars: BTreeMap::new(),
            output_dir: PathBuf::from("."),
            seed: 0,
            started: Instant::now(),
        }
    }

    fn run_subject(cmd: &str) -> MeasureSet {
        let settings: Settings = serde_json::from_value(serde_json::json!({
            "sample_period_ms": 50, "memory_metric": "rss"
        }))
        .unwrap();
        let mut p = ProcessSampler::from_settings("process", &settings).unwrap();
        let c = ctx();
        p.start(&c).unwrap();
        let mut child = Command::new("sh").arg("-c").arg(cmd).spawn().unwrap();
        p.subject_started(child.id());
        child.wait().unwrap();
        p.stop(&c).unwrap()
    }

    #[test]
    fn sleeping_subject_uses_no_cpu() {
        // oracle: an idle process accrues (almost) no CPU ticks
        let set = run_subject("sleep 0.6");
        let cpu = aggregate(&set, &MetricSpec::new("cpu", Unit::Percent)).unwrap();
        assert!(cpu.abs() <= 2.0, "mean cpu {cpu}%");
        assert!(set.has("rss"));
    }

    #[test]
    fn busy_subject_uses_cpu() {
        let set = run_subject("i=0; while [ $i -lt 200000 ]; do i=$((i+1)); done");
        let cpu = aggregate(&set, &MetricSpec::new("cpu", Unit::Percent)).unwrap();
        assert!(cpu > 20.0, "mean cpu {cpu}%");
    }

    #[test]
    fn stat_parsing_handles_own_process() {
        let stat = read_stat(std::process::id()).unwrap();
        assert!(stat.rss_pages > 0);
    }
}
