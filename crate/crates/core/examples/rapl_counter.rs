// Read energy from a powercap-style counter, including a wraparound, and
// sample it from a profiler while a background thread drives the counter.
//
// The domain here is a temporary directory shaped like
// `/sys/class/powercap/intel-rapl:0`; point `domain` at the real one on a
// machine that exposes it.

use std::error::Error;
use std::time::{Duration, Instant};

use exrunner::model::{MetricSpec, Unit};
use exrunner::profilers::{
    aggregate, read_energy_delta, set_mock_energy, write_mock_domain, EnergyCounterSource,
    Profiler, RaplProfiler, RunContext,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let domain = tmp.path().join("intel-rapl:0");

    write_mock_domain(&domain, 1000, 900)?;
    let source = EnergyCounterSource::open(&domain)?;
    let start = source.read_raw()?;
    set_mock_energy(&domain, 100)?;
    let end = source.read_raw()?;
    let joules = read_energy_delta(&source, start, end)?;
    println!("{start} uJ -> {end} uJ across a 1000 uJ modulus = {joules} J");
    assert_eq!(joules, 0.0002);

    // 2 J per step on a 2^32 uJ counter, sampled every 10 ms
    let range = 1u64 << 32;
    write_mock_domain(&domain, range, range - 3_000_000)?;
    let settings = serde_json::from_value(serde_json::json!({
        "domain": domain, "metric": "energy", "sample_period_ms": 10
    }))?;
    let mut rapl = RaplProfiler::from_settings("rapl", &settings)?;
    let ctx = RunContext {
        run_id: "r1".into(),
        subject: "demo".into(),
        repetition: 1,
        treatments: vec![],
        vars: Default::default(),
        output_dir: tmp.path().into(),
        seed: 0,
        started: Instant::now(),
    };
    rapl.check_ready()?;
    rapl.start(&ctx)?;
    let mut counter = range - 3_000_000;
    for _ in 0..10 {
        counter = (counter + 2_000_000) % range;
        set_mock_energy(&domain, counter)?;
        std::thread::sleep(Duration::from_millis(15));
    }
    let measures = rapl.stop(&ctx)?;
    let total = aggregate(&measures, &MetricSpec::new("energy", Unit::Joule))?;
    println!("{} samples, {total} J in total", measures.samples().len());
    assert!((total - 20.0).abs() < 1e-9);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
