//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use hecke::suites::{run, Command, Curve, Report, RunConfig};

const SEED: u64 = 7;

struct Run {
    report: Report,
    elapsed: Duration,
}

fn exec(command: Command) -> Run {
    let cfg = RunConfig { seed: SEED, ..RunConfig::default() };
    let start = Instant::now();
    let report = run(&command, &cfg).unwrap_or_else(|e| panic!("{command}: {e}"));
    Run { report, elapsed: start.elapsed() }
}

/// Problems with a report: failed checks, and named checks that are missing
/// or have fewer samples than required.
fn problems(run: &Run, required: &[(&str, usize)]) -> Vec<String> {
    let mut out: Vec<String> = run
        .report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: '{}' failed on {} of {} samples (worst {:e})", run.report.suite, c.check, c.failed_samples, c.samples, c.worst_residual))
        .collect();
    for (name, min) in required {
        match run.report.checks.iter().find(|c| c.check == *name) {
            None => out.push(format!("{}: missing check '{name}'", run.report.suite)),
            Some(c) if c.samples < *min => {
                out.push(format!("{}: '{name}' ran {} samples, need {min}", run.report.suite, c.samples))
            }
            Some(_) => {}
        }
    }
    out
}

fn within(run: &Run, limit: Duration) -> Vec<String> {
    if run.elapsed > limit {
        vec![format!("{} took {:?}, limit {:?}", run.report.suite, run.elapsed, limit)]
    } else {
        vec![]
    }
}

fn observation<'a>(run: &'a Run, name: &str) -> Option<&'a serde_json::Value> {
    run.report.observations.iter().find(|o| o.name == name).map(|o| &o.value)
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Vec<String>)> = Vec::new();

    let theta = exec(Command::VerifyTheta);
    let mut p = problems(
        &theta,
        &[
            ("theta(z+1) = theta(z)", 100),
            ("theta(z+tau) = f(z) theta(z)", 100),
            ("half-theta(z+1) = half-theta(z)", 100),
            ("half-theta(z+2tau) = f(z) half-theta(z)", 100),
            ("g(z+1) = g(z)", 100),
            ("g(z+tau) = g(z) + 1", 100),
            ("h(-z) = h(z)", 100),
        ],
    );
    p.extend(within(&theta, Duration::from_secs(5)));
    results.push((1, "theta kernel quasi-periodicity", p));

    let eta = exec(Command::VerifyEta);
    let mut p = problems(
        &eta,
        &[("eta(A Z) = eta(A Z B)", 500), ("h = ([l1:1], [l1 lb + 1 : lb])", 100), ("h = ([1:0], [lb:1])", 100)],
    );
    p.extend(within(&eta, Duration::from_secs(5)));
    results.push((2, "eta well-definedness and two-step closed forms", p));

    let rational = exec(Command::VerifyRationalTables);
    let mut required: Vec<(String, usize)> = Vec::new();
    for row in ["unstable [1:0]", "unstable [lambda:1]", "stable [lambda:1]", "stable [1:0]"] {
        for check in ["det = c (z - mu)", "eta(alpha, mu) = direction", "chart at infinity", "corrupted matrix is rejected"] {
            required.push((format!("{row}: {check}"), 20));
        }
    }
    required.push(("hecke length changes by one".into(), 64 * 18));
    let required: Vec<(&str, usize)> = required.iter().map(|(s, n)| (s.as_str(), *n)).collect();
    results.push((3, "rational morphism tables", problems(&rational, &required)));

    let mut p = Vec::new();
    for n in [2, 3] {
        let r = exec(Command::ComputeSpace { curve: Curve::S2, n });
        p.extend(problems(&r, &[("membership = complement description", 20usize.pow(n as u32) + 200)]));
    }
    results.push((4, "H(S^2, n) closed forms", p));

    let m1 = exec(Command::CheckConjecture { m: 1 });
    let p = problems(
        &m1,
        &[
            ("kamnitzer, directions [l1:1], [l2:1]", 100),
            ("kamnitzer, directions [1:0], [l2:1]", 100),
            ("chi = {mu1, mu2}", 100),
        ],
    );
    results.push((5, "Kamnitzer m = 1 closed forms", p));

    let m2 = exec(Command::CheckConjecture { m: 2 });
    let m3 = exec(Command::CheckConjecture { m: 3 });
    let mut p = problems(&m1, &[("phi(h) = woodward", 200)]);
    p.extend(problems(&m2, &[("phi(h) = woodward", 200)]));
    p.extend(problems(&m3, &[]));
    if observation(&m3, "worst phi(h) - woodward residual").is_none() {
        p.push("m = 3 sweep did not report a residual".into());
    }
    let total = m1.elapsed + m2.elapsed + m3.elapsed;
    if total > Duration::from_secs(60) {
        p.push(format!("conjecture sweeps took {total:?}"));
    }
    results.push((6, "Woodward-Hecke diagram for m = 1, 2; m = 3 reported", p));

    let elliptic = exec(Command::VerifyEllipticTables);
    let mut p = problems(
        &elliptic,
        &[
            ("equivariance", 19 * 20),
            ("det alpha has one zero per period", 19 * 20),
            ("det alpha vanishes at p", 19 * 20),
            ("every row sampled", 1),
        ],
    );
    p.extend(within(&elliptic, Duration::from_secs(120)));
    results.push((7, "elliptic morphism table", p));

    let p = problems(&elliptic, &[("eta(alpha, p) = direction", 19 * 20), ("hecke length changes by one", 19 * 20)]);
    results.push((8, "single modification coherence", p));

    let double = exec(Command::VerifyDoubleTable);
    let p = problems(
        &double,
        &[
            ("two routes agree", 200),
            ("every block sampled", 1),
            ("2p = 2p1 gives the class a_j", 1),
            ("2p = 2p2 gives the class a_k", 1),
        ],
    );
    results.push((9, "double modification table", p));

    let t0 = exec(Command::ComputeSpace { curve: Curve::T2, n: 0 });
    let t1 = exec(Command::ComputeSpace { curve: Curve::T2, n: 1 });
    let t2 = exec(Command::ComputeSpace { curve: Curve::T2, n: 2 });
    let mut p = problems(&t0, &[("single coordinate reaches every grid point", 32)]);
    p.extend(problems(&t1, &[("h_total inverts", 100)]));
    p.extend(problems(
        &t2,
        &[
            ("f is injective on samples", 900),
            ("tuples on f(X) are excluded", 100),
            ("tuples off f(X) are included", 100),
        ],
    ));
    results.push((10, "H_p(T^2, n) for n = 0, 1, 2", p));

    let embed = exec(Command::EmbedCheck);
    let p = problems(
        &embed,
        &[
            ("sphere examples", 12),
            ("sphere: unstable lines give an unstable terminal bundle", 1),
            ("torus: unstable lines give an unstable terminal bundle", 1),
            ("sphere: verdict independent of the weight", 200),
            ("torus: verdict independent of the weight", 200),
            ("embedding is stable", 1),
            ("every fixture family embeds", 1),
        ],
    );
    results.push((11, "parabolic stability and embeddings", p));

    let all = [
        &theta, &eta, &rational, &m1, &m2, &m3, &elliptic, &double, &t0, &t1, &t2, &embed,
    ];
    let mut commands: Vec<Command> = vec![
        Command::VerifyTheta,
        Command::VerifyEta,
        Command::VerifyRationalTables,
        Command::CheckConjecture { m: 1 },
        Command::CheckConjecture { m: 2 },
        Command::CheckConjecture { m: 3 },
        Command::VerifyEllipticTables,
        Command::VerifyDoubleTable,
        Command::ComputeSpace { curve: Curve::T2, n: 0 },
        Command::ComputeSpace { curve: Curve::T2, n: 1 },
        Command::ComputeSpace { curve: Curve::T2, n: 2 },
        Command::EmbedCheck,
    ];
    let mut p = Vec::new();
    for (first, command) in all.iter().zip(commands.drain(..)) {
        let again = exec(command);
        if again.report.to_json() != first.report.to_json() {
            p.push(format!("{command}: rerun differs"));
        }
    }
    results.push((12, "determinism", p));

    let mut failed = 0;
    for (k, name, problems) in &results {
        if problems.is_empty() {
            println!("PASS {k:>2} {name}");
        } else {
            failed += 1;
            println!("FAIL {k:>2} {name}");
            for pr in problems {
                println!("        {pr}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
