//! Acceptance criteria, one line each. Exits non-zero if a criterion that
//! is not listed in `KNOWN_FAILURES` fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sdd_core::suite::{self, CheckOutcome};
use sdd_core::{solve, write_csv_file, ScenarioConfig, SolverMode};

/// Criteria whose stated targets cannot all hold at once; see README.
const KNOWN_FAILURES: &[u32] = &[2];

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> Result<(bool, String), String>,
}

fn outcome(o: CheckOutcome) -> (bool, String) {
    (o.pass, o.line())
}

fn c1() -> Result<(bool, String), String> {
    suite::decay().map(outcome).map_err(|e| e.to_string())
}

fn c2() -> Result<(bool, String), String> {
    let mut pass = false;
    let mut parts = Vec::new();
    for mode in [SolverMode::Etd1, SolverMode::Etd2] {
        let (e1, e2) = suite::oracle_errors_for(mode, 1e-3).map_err(|e| e.to_string())?;
        let ratio = e1 / e2;
        let err_ok = e1 < 1e-6;
        let ratio_ok = (1.7..=2.3).contains(&ratio);
        pass |= err_ok && ratio_ok;
        parts.push(format!(
            "{}: error={e1:.3e} [{}], ratio={ratio:.3} [{}]",
            mode.name(),
            if err_ok { "<1e-6 ok" } else { "<1e-6 violated" },
            if ratio_ok { "in [1.7,2.3]" } else { "outside [1.7,2.3]" }
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn c3() -> Result<(bool, String), String> {
    suite::ignore_property(1000).map(outcome).map_err(|e| e.to_string())
}

fn c4() -> Result<(bool, String), String> {
    suite::schedule_consistency().map(outcome).map_err(|e| e.to_string())
}

fn c5() -> Result<(bool, String), String> {
    suite::dependence(&[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]).map(outcome).map_err(|e| e.to_string())
}

fn c6() -> Result<(bool, String), String> {
    suite::apriori().map(outcome).map_err(|e| e.to_string())
}

fn c7() -> Result<(bool, String), String> {
    suite::dissipation().map(outcome).map_err(|e| e.to_string())
}

fn c8() -> Result<(bool, String), String> {
    suite::holder().map(outcome).map_err(|e| e.to_string())
}

fn c9() -> Result<(bool, String), String> {
    let cfg = ScenarioConfig::preset("nicholson").map_err(|e| e.to_string())?;
    let (spec, opts, t) = cfg.build().map_err(|e| e.to_string())?;
    let cols = cfg.columns().map_err(|e| e.to_string())?;
    let dir = std::env::temp_dir().join(format!("sdd-acceptance-{}", std::process::id()));
    let mut files = Vec::new();
    for i in 0..2 {
        let traj = solve(&spec, &opts, t).map_err(|e| e.to_string())?;
        let path = dir.join(format!("run{i}.csv"));
        write_csv_file(&traj, &spec.op, &cols, &path).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok((files[0] == files[1], format!("identical={} bytes={}", files[0] == files[1], files[0].len())))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, title: "exact decay", limit: Duration::from_secs(1), run: c1 },
        Criterion { id: 2, title: "constant-delay oracle", limit: Duration::from_secs(10), run: c2 },
        Criterion { id: 3, title: "ignore-property invariance", limit: Duration::from_secs(5), run: c3 },
        Criterion { id: 4, title: "schedule consistency", limit: Duration::from_secs(10), run: c4 },
        Criterion { id: 5, title: "continuous dependence + restart", limit: Duration::from_secs(60), run: c5 },
        Criterion { id: 6, title: "a-priori bound", limit: Duration::from_secs(10), run: c6 },
        Criterion { id: 7, title: "dissipativity", limit: Duration::from_secs(60), run: c7 },
        Criterion { id: 8, title: "Hölder equicontinuity", limit: Duration::from_secs(30), run: c8 },
        Criterion { id: 9, title: "determinism", limit: Duration::from_secs(60), run: c9 },
    ];
    let mut unexpected = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok((p, d)) => (p && elapsed <= c.limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let known = KNOWN_FAILURES.contains(&c.id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {} [{}] {tag} in {:.2}s (limit {}s): {detail}",
            c.id,
            c.title,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if !pass && !known {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
