//! Acceptance suite. Each criterion prints one PASS or FAIL line; the process
//! exits nonzero if any fails.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use exrunner::design::{
    check_feasibility, cross_product, estimate_duration, generate_run_table, FeasibilityVerdict,
    DEFAULT_BUDGET,
};
use exrunner::journal::{parse_run_table_csv, read_records, Journal, JOURNAL_FILE, RUN_TABLE_FILE};
use exrunner::model::{parse_definition, Direction, ExperimentDefinition, Mode};
use exrunner::orchestrator::{
    execute, transition, EventKind, ExecuteOptions, ExperimentState, IllegalTransition,
    LifecycleEvent, Phase,
};
use exrunner::profilers::{
    read_energy_delta, set_mock_energy, write_mock_domain, EnergyCounterSource, ProfilerRegistry,
};
use exrunner::stats::{
    analyze, cliffs_delta, mann_whitney, shapiro_wilk, spearman, welch_t, Decision,
};

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn close(name: &str, got: f64, want: f64) -> Result<(), String> {
    ensure((got - want).abs() <= 1e-3, || {
        format!("{name}: got {got}, reference {want}")
    })
}

fn definition(v: Value) -> ExperimentDefinition {
    parse_definition(&v.to_string()).expect("fixture definition parses")
}

fn factor(name: &str, kind: &str, treatments: &[&str]) -> Value {
    let ts: Vec<Value> = treatments.iter().map(|t| json!({"name": t})).collect();
    json!({"name": name, "kind": kind, "treatments": ts})
}

fn subjects(n: usize) -> Vec<Value> {
    (0..n)
        .map(|i| json!({"name": format!("s{i}"), "command": "true"}))
        .collect()
}

fn base(factors: Vec<Value>, subjects: Vec<Value>, repetitions: u32, seed: u64) -> Value {
    json!({
        "name": "acceptance",
        "gqm": {"goal": "g", "questions": ["q"]},
        "factors": factors,
        "subjects": subjects,
        "metrics": [{"name": "energy", "unit": "joule"}],
        "repetitions": repetitions,
        "cooldown_s": 0,
        "seed": seed,
    })
}

fn ac1_cardinality() -> Check {
    let t0 = Instant::now();
    let apps = definition(base(
        vec![factor("app", "main", &["apk"])],
        subjects(21),
        25,
        1,
    ));
    let n = generate_run_table(&apps).map_err(|e| e.to_string())?.len();
    ensure(n == 525, || format!("21 subjects x 25 reps gave {n} runs"))?;

    let wasm = definition(base(
        vec![
            factor("language", "main", &["c", "rust", "go", "js"]),
            factor("runtime", "co_factor", &["browser", "wasmer"]),
        ],
        subjects(3),
        10,
        2,
    ));
    let table = generate_run_table(&wasm).map_err(|e| e.to_string())?;
    let trials = table.trial_keys().len();
    ensure((table.len(), trials) == (240, 24), || {
        format!(
            "3 x (4x2) x 10 gave {} runs and {trials} trials",
            table.len()
        )
    })?;
    within(t0, Duration::from_secs(1))?;
    Ok("525 runs; 240 runs over 24 trials".into())
}

fn ac2_feasibility() -> Check {
    let (per_run, cooldown) = (Duration::from_secs(300), Duration::from_secs(60));
    let total = estimate_duration(240, per_run, cooldown);
    ensure(total == Duration::from_secs(86_340), || {
        format!("240 runs estimated at {total:?}")
    })?;
    ensure(check_feasibility(total, DEFAULT_BUDGET).is_ok(), || {
        "240 runs judged infeasible".into()
    })?;
    let big = estimate_duration(1000, per_run, cooldown);
    ensure(
        matches!(
            check_feasibility(big, DEFAULT_BUDGET),
            FeasibilityVerdict::OverBudget { .. }
        ),
        || format!("1000 runs ({big:?}) not judged over budget"),
    )?;
    Ok(format!(
        "86340 s feasible; 1000 runs = {} s over budget",
        big.as_secs()
    ))
}

fn random_definition(rng: &mut ChaCha8Rng) -> ExperimentDefinition {
    let kinds = ["main", "co_factor", "blocking", "fixed"];
    let mut factors = vec![];
    let mut blocking = false;
    for i in 0..rng.gen_range(1..=3) {
        let mut kind = if i == 0 {
            "main"
        } else {
            kinds[rng.gen_range(0..4)]
        };
        if kind == "blocking" && std::mem::replace(&mut blocking, true) {
            kind = "co_factor";
        }
        let n = if kind == "fixed" {
            1
        } else {
            rng.gen_range(1..=4)
        };
        let names: Vec<String> = (0..n).map(|t| format!("t{t}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        factors.push(factor(&format!("f{i}"), kind, &names));
    }
    definition(base(
        factors,
        subjects(rng.gen_range(1..=3)),
        rng.gen_range(1..=5),
        rng.gen(),
    ))
}

fn ac3_determinism() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = vec![];
    let mut runs = 0;
    for i in 0..100 {
        let def = random_definition(&mut rng);
        let a = generate_run_table(&def).map_err(|e| e.to_string())?;
        let b = generate_run_table(&def).map_err(|e| e.to_string())?;
        if a.order_digest != b.order_digest {
            violations.push(format!("definition {i}: digests differ"));
        }
        let key = |r: &exrunner::design::Run| (r.run_id.clone(), r.trial_key.clone(), r.repetition);
        let mut shuffled: Vec<_> = a.runs.iter().map(key).collect();
        let mut canonical: Vec<_> = cross_product(&def)
            .map_err(|e| e.to_string())?
            .iter()
            .map(key)
            .collect();
        shuffled.sort();
        canonical.sort();
        if shuffled != canonical {
            violations.push(format!(
                "definition {i}: run multiset differs from the cross product"
            ));
        }
        runs += a.len();
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    within(t0, Duration::from_secs(10))?;
    Ok(format!("100 definitions, {runs} runs, 0 violations"))
}

fn exr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exr"))
}

fn exr_in(dir: &Path, args: &[&str]) -> std::process::ExitStatus {
    exr()
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .expect("exr spawns")
}

fn resume_once(k: usize) -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let counter = dir.join("count");
    // the (k+1)-th subject launch SIGKILLs the runner, which is the subject shell's parent
    let subject = format!(
        "n=$(( $(cat {c} 2>/dev/null || echo 0) + 1 )); echo $n > {c}; \
         if [ $n -eq {kill} ]; then kill -9 $PPID; sleep 1; fi",
        c = counter.display(),
        kill = k + 1
    );
    let mut config = base(
        vec![factor("impl", "main", &["a", "b"])],
        vec![
            json!({"name": "s0", "command": subject}),
            json!({"name": "s1", "command": subject}),
        ],
        3,
        k as u64,
    );
    config["profilers"] =
        json!([{"name": "synthetic", "settings": {"power_w": 10, "jitter": 0.05}}]);
    config["output_dir"] = json!(dir.join("data"));
    std::fs::write(dir.join("experiment.json"), config.to_string()).map_err(|e| e.to_string())?;

    let first = exr_in(dir, &["run", "experiment.json"]);
    ensure(first.code().is_none(), || {
        format!("k={k}: runner was not killed ({first})")
    })?;
    let launches = |p: &Path| -> usize {
        std::fs::read_to_string(p)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0)
    };
    let before = launches(&counter);
    let journal = dir.join("data").join(JOURNAL_FILE);
    let done = read_records(&journal).map_err(|e| e.to_string())?.len();
    ensure(done == k, || {
        format!("k={k}: {done} runs journaled before the kill")
    })?;

    let second = exr_in(dir, &["run", "experiment.json", "--resume"]);
    ensure(second.success(), || {
        format!("k={k}: resume exited with {second}")
    })?;
    let executed = launches(&counter) - before;
    ensure(executed == 12 - k, || {
        format!("k={k}: resume executed {executed} runs")
    })?;

    let def: ExperimentDefinition =
        parse_definition(&config.to_string()).map_err(|e| e.to_string())?;
    let csv = std::fs::read_to_string(dir.join("data").join(RUN_TABLE_FILE))
        .map_err(|e| e.to_string())?;
    let rows = parse_run_table_csv(&def, &csv)
        .map_err(|e| e.to_string())?
        .runs;
    let ids: BTreeSet<_> = rows.iter().map(|r| r.run_id.as_str()).collect();
    let populated = rows
        .iter()
        .filter(|r| r.measures.contains_key("energy"))
        .count();
    ensure(
        rows.len() == 12 && ids.len() == 12 && populated == 12,
        || {
            format!(
                "k={k}: {} rows, {} distinct ids, {populated} populated",
                rows.len(),
                ids.len()
            )
        },
    )?;
    let records = read_records(&journal).map_err(|e| e.to_string())?;
    let journaled: BTreeSet<_> = records.iter().map(|r| r.run_id.as_str()).collect();
    ensure(records.len() == 12 && journaled.len() == 12, || {
        format!(
            "k={k}: journal holds {} records for {} runs",
            records.len(),
            journaled.len()
        )
    })
}

fn ac4_resume() -> Check {
    let t0 = Instant::now();
    let failures: Vec<String> = (1..=11).filter_map(|k| resume_once(k).err()).collect();
    ensure(failures.is_empty(), || failures.join("; "))?;
    within(t0, Duration::from_secs(120))?;
    Ok(format!(
        "k = 1..11 all resumed to 12 unique rows in {:.1?}",
        t0.elapsed()
    ))
}

fn ac5_wraparound() -> Check {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let domain = tmp.path().join("intel-rapl:0");
    write_mock_domain(&domain, 1000, 900).map_err(|e| e.to_string())?;
    let source = EnergyCounterSource::open(&domain).map_err(|e| e.to_string())?;
    let start = source.read_raw().map_err(|e| e.to_string())?;
    set_mock_energy(&domain, 100).map_err(|e| e.to_string())?;
    let end = source.read_raw().map_err(|e| e.to_string())?;
    let joules = read_energy_delta(&source, start, end).map_err(|e| e.to_string())?;
    ensure(joules == 0.0002, || {
        format!("900 -> 100 mod 1000 gave {joules} J")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seq in 0..10_000 {
        let range = rng.gen_range(2..=1u64 << 40);
        let source = EnergyCounterSource::with_range(&domain, range);
        let mut raw = rng.gen_range(0..range);
        let (mut truth, mut measured) = (0u128, 0u128);
        for _ in 0..rng.gen_range(1..40) {
            let step = rng.gen_range(0..range);
            let next = ((raw as u128 + step as u128) % range as u128) as u64;
            measured += source.delta_uj(raw, next).map_err(|e| e.to_string())? as u128;
            truth += step as u128;
            raw = next;
        }
        ensure(truth == measured, || {
            format!("sequence {seq}: {measured} uJ measured, {truth} uJ true")
        })?;
    }
    within(t0, Duration::from_secs(5))?;
    Ok("0.0002 J across the modulus; 10000 sequences telescope".into())
}

/// Sorted multisets of size 1..=5 over {1..6}.
fn multisets() -> Vec<Vec<f64>> {
    fn grow(prefix: &mut Vec<f64>, lo: u8, out: &mut Vec<Vec<f64>>) {
        if !prefix.is_empty() {
            out.push(prefix.clone());
        }
        if prefix.len() == 5 {
            return;
        }
        for v in lo..=6 {
            prefix.push(v as f64);
            grow(prefix, v, out);
            prefix.pop();
        }
    }
    let mut out = vec![];
    grow(&mut vec![], 1, &mut out);
    out
}

/// Pairs of `a` above `b`, ties counting one half.
fn brute_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| {
            if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Permutation p values (two-sided, a < b, a > b) by enumerating every split
/// of the pooled sample into groups of the original sizes.
fn brute_p(a: &[f64], b: &[f64]) -> [f64; 3] {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, na) = (pooled.len(), a.len());
    let observed = brute_u(a, b);
    let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (mut ga, mut gb) = (vec![], vec![]);
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        let u = brute_u(&ga, &gb);
        total += 1;
        le += (u <= observed) as u64;
        ge += (u >= observed) as u64;
    }
    let (le, ge) = (le as f64 / total as f64, ge as f64 / total as f64);
    [(2.0 * le.min(ge)).min(1.0), le, ge]
}

fn ac6_statistics() -> Check {
    let t0 = Instant::now();
    let sets = multisets();
    let dirs = [Direction::TwoSided, Direction::ALess, Direction::AGreater];
    let (mut pairs, mut exact) = (0, 0);
    for a in &sets {
        for b in &sets {
            pairs += 1;
            let r = mann_whitney(a, b, Direction::TwoSided, 0.05).map_err(|e| e.to_string())?;
            ensure(r.statistic == brute_u(a, b), || {
                format!("U mismatch for {a:?} vs {b:?}")
            })?;
            let distinct: BTreeSet<u64> = a.iter().chain(b).map(|v| v.to_bits()).collect();
            if distinct.len() < a.len() + b.len() {
                continue;
            }
            exact += 1;
            let want = brute_p(a, b);
            for (dir, want) in dirs.iter().zip(want) {
                let r = mann_whitney(a, b, *dir, 0.05).map_err(|e| e.to_string())?;
                ensure(
                    r.test_name == "mann_whitney_exact" && (r.p_value - want).abs() < 1e-12,
                    || {
                        format!(
                            "{dir:?} p for {a:?} vs {b:?}: {} ({}), brute force {want}",
                            r.p_value, r.test_name
                        )
                    },
                )?;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let n = rng.gen_range(1..30);
            (0..n).map(|_| rng.gen_range(0..20) as f64 / 2.0).collect()
        };
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        let mut dominance = 0i64;
        for x in &a {
            for y in &b {
                dominance += (x > y) as i64 - (x < y) as i64;
            }
        }
        let want = dominance as f64 / (a.len() * b.len()) as f64;
        let got = cliffs_delta(&a, &b).map_err(|e| e.to_string())?.value;
        ensure(got == want, || {
            format!("Cliff pair {i}: {got} vs all-pairs {want}")
        })?;
    }

    // frozen reference values
    let skewed = [
        0.4709, 1.0055, 0.0841, 0.1495, 1.4291, 0.5241, 0.6577, 1.3108, 1.0776, 0.6219, 0.0116,
        0.698, 0.0032, 4.7217, 1.2733, 3.0798, 0.4407, 3.1834, 3.1606, 0.8696,
    ];
    let (w, p) = shapiro_wilk(&skewed).map_err(|e| e.to_string())?;
    close("SW W (n=20)", w, 0.8099726307078092)?;
    close("SW p (n=20)", p, 0.0012214587096577385)?;
    let twelve = [
        44.803, 44.354, 53.815, 43.226, 45.787, 50.51, 43.935, 44.223, 58.439, 49.276, 48.132,
        60.744,
    ];
    let (w, p) = shapiro_wilk(&twelve).map_err(|e| e.to_string())?;
    close("SW W (n=12)", w, 0.8542604808763683)?;
    close("SW p (n=12)", p, 0.041456266634308694)?;

    let wa = [10.1, 9.8, 10.3, 10.0, 9.7, 10.4];
    let wb = [12.0, 11.1, 13.5, 12.7, 10.9, 14.2, 12.3];
    let t = welch_t(&wa, &wb, Direction::TwoSided, 0.05).map_err(|e| e.to_string())?;
    close("Welch t", t.statistic, -4.997757030195257)?;
    close("Welch df", t.df.unwrap_or(f64::NAN), 6.720834607170594)?;
    close("Welch p", t.p_value, 0.0017684048725426765)?;
    let t = welch_t(&wa, &wb, Direction::ALess, 0.05).map_err(|e| e.to_string())?;
    close("Welch p (less)", t.p_value, 0.0008842024362713382)?;

    let mx = [
        6., 4., 5., 3., 6., 11., 11., 7., 1., 6., 1., 3., 10., 10., 3., 0., 5., 2., 3., 7., 6.,
        11., 6., 2., 5.,
    ];
    let my = [
        11., 10., 4., 3., 11., 10., 9., 13., 6., 6., 9., 4., 12., 13., 13., 11., 8., 14., 12., 5.,
        13., 13., 4., 13., 8.,
    ];
    let r = mann_whitney(&mx, &my, Direction::TwoSided, 0.05).map_err(|e| e.to_string())?;
    close("MW U", r.statistic, 129.5)?;
    close("MW p", r.p_value, 0.0003756917216054916)?;
    let r = mann_whitney(&mx, &my, Direction::AGreater, 0.05).map_err(|e| e.to_string())?;
    close("MW p (greater)", r.p_value, 0.9998256100903562)?;
    let r = mann_whitney(
        &[1.5, 3.2, 0.4, 2.2, 5.0],
        &[4.1, 6.3, 7.7, 2.9, 8.8, 9.1],
        Direction::TwoSided,
        0.05,
    )
    .map_err(|e| e.to_string())?;
    close("MW exact U", r.statistic, 3.0)?;
    close("MW exact p", r.p_value, 0.030303030303030304)?;

    let sx = [
        -1.315, 0.175, -0.702, 1.564, -0.078, 1.117, 0.667, 0.124, -1.346, -0.28, 0.395, 0.955,
        1.743, 0.472, 2.09, -0.366, 0.304, -0.351, -0.692, -1.698, -1.894,
    ];
    let sy = [
        0.713, -1.518, -1.209, -0.517, -0.035, -0.876, -1.03, 0.439, -0.523, -0.547, 1.389, 1.869,
        1.251, -0.512, 1.712, 0.253, 2.392, 0.228, 0.522, -0.938, 1.354,
    ];
    let (rho, p) = spearman(&sx, &sy).map_err(|e| e.to_string())?;
    close("Spearman rho", rho, 0.1935064935064935)?;
    close("Spearman p", p, 0.4006585883807031)?;

    within(t0, Duration::from_secs(30))?;
    Ok(format!(
        "U on {pairs} pairs, exact p on {exact} tie-free pairs, 1000 Cliff pairs, 14 fixtures"
    ))
}

fn golden_config(dir: &Path) -> Result<(), String> {
    let path = dir.join("experiment.json");
    let mut config: Value =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    config["gqm"]["questions"] = json!(["RQ1: Does the implementation change energy use?"]);
    config["factors"] = json!([{"name": "impl", "kind": "main", "treatments": [
        {"name": "A", "params": {"power": "10"}}, {"name": "B", "params": {"power": "20"}}]}]);
    config["subjects"] = json!([
        {"name": "small", "command": "true"}, {"name": "large", "command": "true"}]);
    config["metrics"] = json!([{"name": "energy", "unit": "joule"}]);
    config["hypotheses"] = json!([{"id": "H1", "metric": "energy", "factor": "impl",
        "treatment_a": "A", "treatment_b": "B"}]);
    config["repetitions"] = json!(3);
    config["cooldown_s"] = json!(0);
    config["profilers"] = json!([{"name": "synthetic", "settings": {
        "power_w": "{power}", "duration_s": 1, "jitter": 0.02}}]);
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).map_err(|e| e.to_string())
}

fn self_comparison(seed: u64) -> Result<Decision, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let def = definition(json!({
        "name": "same", "gqm": {"goal": "g", "questions": ["q"]},
        "factors": [factor("impl", "main", &["A", "B"])],
        "subjects": subjects(2),
        "metrics": [{"name": "energy", "unit": "joule"}],
        "hypotheses": [{"id": "H0", "metric": "energy", "factor": "impl", "treatment_a": "A", "treatment_b": "B"}],
        "repetitions": 3, "cooldown_s": 0, "seed": seed,
        "profilers": [{"name": "synthetic", "settings": {"power_w": 10, "duration_s": 1, "jitter": 0.02}}],
        "output_dir": tmp.path(),
    }));
    let mut table = generate_run_table(&def).map_err(|e| e.to_string())?;
    let mut journal =
        Journal::open(def.output_dir.join(JOURNAL_FILE)).map_err(|e| e.to_string())?;
    let mut profilers = ProfilerRegistry::with_builtins()
        .build_all(&def)
        .map_err(|e| e.to_string())?;
    let options = ExecuteOptions {
        dry_run: true,
        ..Default::default()
    };
    execute(&def, &mut table, &mut journal, &mut profilers, options).map_err(|e| e.to_string())?;
    let report = analyze(&def, &table).map_err(|e| e.to_string())?;
    Ok(report.hypothesis("H0").ok_or("H0 missing")?.test.decision)
}

fn ac7_golden_run() -> Check {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path().join("exp");
    let d = dir.to_str().ok_or("non-UTF-8 temp dir")?;
    ensure(exr_in(tmp.path(), &["init", d]).success(), || {
        "init failed".into()
    })?;
    golden_config(&dir)?;
    for args in [
        &["plan", "experiment.json"][..],
        &["run", "experiment.json", "--dry-run"],
    ] {
        let status = exr_in(&dir, args);
        ensure(status.success(), || {
            format!("{args:?} exited with {status}")
        })?;
    }
    let data = dir.join("data");
    let data = data.to_str().ok_or("non-UTF-8 temp dir")?;
    for cmd in ["analyze", "report"] {
        let status = exr_in(&dir, &[cmd, data]);
        ensure(status.success(), || format!("{cmd} exited with {status}"))?;
    }
    let report =
        std::fs::read_to_string(dir.join("data").join("report.md")).map_err(|e| e.to_string())?;
    ensure(report.contains("**reject**"), || {
        "report does not reject the null".into()
    })?;
    ensure(report.contains("Cliff's delta = -1.000 (large)"), || {
        "report lacks |delta| = 1 (large)".into()
    })?;
    within(t0, Duration::from_secs(60))?;

    let mut kept = 0;
    for seed in 0..100 {
        if self_comparison(seed)? == Decision::FailToReject {
            kept += 1;
        }
    }
    ensure(kept >= 90, || {
        format!("A = B failed to reject in only {kept} of 100")
    })?;
    Ok(format!(
        "golden run rejects with delta = -1 (large); A = B kept H0 in {kept}/100"
    ))
}

fn event(kind: EventKind) -> LifecycleEvent {
    match kind {
        EventKind::BeforeRun => LifecycleEvent::before_run("r"),
        _ => kind.into(),
    }
}

fn ac8_state_machine() -> Check {
    let t0 = Instant::now();
    let mut pairs = 0;
    let mut defined = 0;
    for mode in [Mode::Automatic, Mode::SemiAutomatic] {
        for (total, completed) in [(0, 0), (3, 0), (3, 1), (3, 3)] {
            for phase in Phase::ALL {
                for kind in EventKind::ALL {
                    let state = ExperimentState {
                        phase,
                        completed_count: completed,
                        paused_from: (phase == Phase::Paused).then_some(Phase::CoolingDown),
                        ..ExperimentState::new(total, mode, 0.5)
                    };
                    pairs += 1;
                    match transition(&state, &event(kind)) {
                        Ok(next) => {
                            defined += 1;
                            ensure(
                                mode == Mode::SemiAutomatic || next.phase != Phase::WaitingOperator,
                                || format!("automatic {phase} --{kind}--> waiting_operator"),
                            )?;
                        }
                        Err(IllegalTransition { phase: p, event: e }) => {
                            ensure((p, e) == (phase, kind), || {
                                format!("error misreports {phase}/{kind}")
                            })?;
                            ensure(
                                !(phase.is_active() && kind == EventKind::PauseRequested),
                                || format!("{phase} cannot be paused"),
                            )?;
                            ensure(
                                phase.is_terminal() || kind != EventKind::AbortRequested,
                                || format!("{phase} cannot be aborted"),
                            )?;
                        }
                    }
                }
            }
        }
    }

    // breadth-first search over (phase, done, failed, paused_from)
    for mode in [Mode::Automatic, Mode::SemiAutomatic] {
        for total in 0..6 {
            let start = ExperimentState::new(total, mode, 0.5);
            let key =
                |s: &ExperimentState| (s.phase, s.completed_count, s.failed_count, s.paused_from);
            let mut seen = HashMap::from([(key(&start), ())]);
            let mut queue = VecDeque::from([start]);
            let mut completed = false;
            while let Some(s) = queue.pop_front() {
                completed |= s.phase == Phase::Completed;
                ensure(
                    mode == Mode::SemiAutomatic || s.phase != Phase::WaitingOperator,
                    || format!("automatic mode reached waiting_operator with {total} runs"),
                )?;
                for kind in EventKind::ALL {
                    if let Ok(next) = transition(&s, &event(kind)) {
                        if seen.insert(key(&next), ()).is_none() {
                            queue.push_back(next);
                        }
                    }
                }
            }
            ensure(completed, || {
                format!("{mode:?} with {total} runs never completes")
            })?;
        }
    }
    within(t0, Duration::from_secs(1))?;
    Ok(format!("{pairs} (state, event) pairs, {defined} defined; completed reachable; automatic never waits"))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("AC1 run-table cardinality", ac1_cardinality),
        ("AC2 feasibility rule", ac2_feasibility),
        (
            "AC3 determinism and permutation invariance",
            ac3_determinism,
        ),
        ("AC4 resume soundness", ac4_resume),
        ("AC5 counter wraparound", ac5_wraparound),
        ("AC6 statistics oracles", ac6_statistics),
        ("AC7 end-to-end golden run", ac7_golden_run),
        ("AC8 state-machine soundness", ac8_state_machine),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
