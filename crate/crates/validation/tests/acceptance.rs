//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runs without a test harness so the lines
//! are visible under `cargo test`.
//!
//! The durability criterion kills and restarts a server process; that
//! process is this executable re-run with `SERVE_ENV` pointing at the data
//! directory.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Barrier, OnceLock};
use std::time::{Duration, Instant};

use langlie_core::estimation::score;
use langlie_core::harness::{Experiment, ExperimentReport};
use langlie_core::rng::substream;
use langlie_core::trials::BalanceTracker;
use langlie_core::walks::{
    empirical_occupancy, exhaustive_coupling_check, langlie_comparison_p, reflected_walk_stationary,
    run_reflected_walk, total_variation, visit_count, CouplingRule, LangliePredictor, ReflectedWalkParams,
};
use langlie_core::{
    fit_mle, log_likelihood, Bracket, Error, Family, LanglieState, Outcome, SensitivityModel, TrialHistory,
};
use rand::Rng;
use serde_json::{json, Value};
use Outcome::{Failure as F, Success as S};

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

const SERVE_ENV: &str = "LANGLIE_ACCEPTANCE_SERVE";

fn main() {
    if let Some(data) = std::env::var_os(SERVE_ENV) {
        serve_forever(Path::new(&data));
        return;
    }
    let criteria: [Criterion; 11] = [
        ("balance index zero iff new sum value", balance_exactness),
        ("hand-computed inputs at N=2 and N=3", hand_oracle),
        ("figure replication", figure_replication),
        ("pathwise coupling domination", coupling_domination),
        ("stochastic dominance of running maxima", running_max_dominance),
        ("boundedness proxy", boundedness_proxy),
        ("reflected walk recurrence and occupancy", reflected_walk),
        ("jump implication at zero balance", jump_implication),
        ("non-consistency contrast", non_consistency),
        ("estimation correctness", estimation_correctness),
        ("service durability", service_durability),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (passed, detail) = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!("{verdict} {name} ({:.1}s): {detail}", start.elapsed().as_secs_f64());
        failed += usize::from(!passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn run(e: Experiment, edit: impl FnOnce(&mut langlie_core::harness::ExperimentConfig)) -> ExperimentReport {
    let mut config = e.default_config();
    edit(&mut config);
    e.run(&config).unwrap()
}

fn coupling_report() -> &'static ExperimentReport {
    static REPORT: OnceLock<ExperimentReport> = OnceLock::new();
    REPORT.get_or_init(|| run(Experiment::CouplingDominance, |_| {}))
}

fn check_verdict(report: &ExperimentReport, name: &str) -> Verdict {
    let c = report.check(name).unwrap_or_else(|| panic!("no check {name}"));
    (c.passed, c.to_string())
}

fn all_of(parts: Vec<Verdict>) -> Verdict {
    let passed = parts.iter().all(|p| p.0);
    let detail = parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; ");
    (passed, detail)
}

fn balance_exactness() -> Verdict {
    let mut exceptions = 0usize;
    let mut cases = 0usize;
    for len in 1..=12 {
        for bits in 0..1u32 << len {
            let mut tracker = BalanceTracker::new();
            let mut seen = HashSet::new();
            let mut s = 0i64;
            for i in 0..len {
                let y = if bits >> i & 1 == 1 { S } else { F };
                s += y.value();
                let tau = tracker.push(y);
                exceptions += usize::from((tau == 0) != seen.insert(s));
                cases += 1;
            }
        }
    }
    let report = run(Experiment::FigurePaths, |c| {
        c.trials = 1000;
        c.replicates = 10_000;
        c.horizons = vec![1000];
    });
    let sim = report.check("prop1_tau_zero_iff_new_value").unwrap();
    (
        exceptions == 0 && sim.passed,
        format!(
            "exhaustive: {exceptions} exceptions over {cases} prefixes of length <= 12; \
             simulated 10^4 paths x 10^3: {} exceptions",
            sim.observed
        ),
    )
}

fn hand_oracle() -> Verdict {
    let br = Bracket::new(-1.5, 1.5).unwrap();
    let cases: [(&[Outcome], &[f64]); 12] = [
        (&[S, S], &[0.0, -0.75, -1.125]),
        (&[S, F], &[0.0, -0.75, 0.375]),
        (&[F, S], &[0.0, 0.75, -0.375]),
        (&[F, F], &[0.0, 0.75, 1.125]),
        (&[S, S, S], &[0.0, -0.75, -1.125, -1.3125]),
        (&[S, S, F], &[0.0, -0.75, -1.125, -0.5625]),
        (&[S, F, S], &[0.0, -0.75, 0.375, 0.1875]),
        (&[S, F, F], &[0.0, -0.75, 0.375, 0.9375]),
        (&[F, S, S], &[0.0, 0.75, -0.375, -0.9375]),
        (&[F, S, F], &[0.0, 0.75, -0.375, -0.1875]),
        (&[F, F, S], &[0.0, 0.75, 1.125, 0.5625]),
        (&[F, F, F], &[0.0, 0.75, 1.125, 1.3125]),
    ];
    let mut mismatches = Vec::new();
    for (y, expected) in cases {
        let mut st = LanglieState::new(br);
        let mut got = vec![st.next_input()];
        for &o in y {
            st.record(o);
            got.push(st.next_input());
        }
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&got) != bits(expected) {
            mismatches.push(format!("{y:?}: {got:?}"));
        }
    }
    (
        mismatches.is_empty(),
        format!("12 patterns, {} bit-level mismatches {mismatches:?}", mismatches.len()),
    )
}

fn figure_replication() -> Verdict {
    let report = run(Experiment::FigurePaths, |_| {});
    let offset = |n: usize| report.check(&format!("late_median_offset_N{n}")).unwrap().observed;
    let frac = report.statistic("final_quarter_tau_zero_fraction_N1000").unwrap().value;
    let (o50, o1000) = (offset(50), offset(1000));
    (
        o50 <= 0.05 && o1000 <= 0.05 && frac >= 0.05,
        format!(
            "100 seeds: |median(X_n, n > N/2) - xi| averaged = {o50:.4} (N=50), {o1000:.5} (N=1000), tolerance 0.05; \
             paths with tau_n = 0 in the final quarter at N=1000: {:.0}% (need >= 5%)",
            100.0 * frac
        ),
    )
}

fn coupling_domination() -> Verdict {
    let report = run(Experiment::CouplingDominance, |c| {
        c.trials = 1000;
        c.checkpoints = vec![1000];
    });
    let sim = report.check("pathwise_domination").unwrap();
    let model = SensitivityModel::probit(3.333, 9.999).unwrap();
    let br = Bracket::new(-1.5, 1.5).unwrap();
    let p = langlie_comparison_p(&model, br);
    let mut exhaustive = 0;
    let mut paths = 0;
    for n in 1..=10 {
        let r =
            exhaustive_coupling_check(LangliePredictor::new(model, br), p, n, CouplingRule::AwayFromOrigin).unwrap();
        exhaustive += r.violations;
        paths += r.paths;
    }
    (
        sim.passed && exhaustive == 0,
        format!(
            "10^4 coupled replicates x 10^3 at p = {p:.3e}: {} violations; exhaustive N <= 10: \
             {exhaustive} violations over {paths} cell paths",
            sim.observed
        ),
    )
}

fn running_max_dominance() -> Verdict {
    let report = coupling_report();
    all_of(
        [100, 1000]
            .into_iter()
            .map(|n| check_verdict(report, &format!("dominance_Q_le_P_n{n}")))
            .collect(),
    )
}

fn boundedness_proxy() -> Verdict {
    let report = coupling_report();
    let checks: Vec<_> = (2..=10)
        .map(|m| report.check(&format!("boundedness_proxy_m{m}")).unwrap())
        .collect();
    let worst = checks
        .iter()
        .map(|c| c.observed - c.threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    (
        failing.is_empty(),
        format!(
            "m = 2..10 at N = 10^4: P(max A <= m) - P(max B <= m) exceeds its band by at most {worst:.4} \
             (need <= 0); failing {failing:?}"
        ),
    )
}

fn reflected_walk() -> Verdict {
    let params = ReflectedWalkParams::new(0.25).unwrap();
    let mean_visits = |n: usize| -> f64 {
        (0..100)
            .map(|r| visit_count(&run_reflected_walk(params, n, &mut substream(5, r)).unwrap(), 3) as f64)
            .sum::<f64>()
            / 100.0
    };
    let v: Vec<f64> = [1_000, 10_000, 100_000].into_iter().map(mean_visits).collect();
    let ratios: Vec<f64> = v.windows(2).map(|w| w[1] / w[0]).collect();
    let path = run_reflected_walk(params, 1_000_000, &mut substream(6, 0)).unwrap();
    let tv = total_variation(&empirical_occupancy(&path, 30), &reflected_walk_stationary(params, 30));
    (
        ratios.iter().all(|r| (8.0..=12.0).contains(r)) && tv <= 0.02,
        format!("visit-count ratios {ratios:.2?} (need [8, 12]); total variation at 10^6 steps {tv:.4} (need <= 0.02)"),
    )
}

fn jump_implication() -> Verdict {
    let report = run(Experiment::JumpBound, |_| {});
    check_verdict(&report, "jump_implication")
}

fn non_consistency() -> Verdict {
    let report = run(Experiment::EstimatorComparison, |_| {});
    all_of(vec![
        check_verdict(&report, "rm_iqr_strictly_decreasing"),
        check_verdict(&report, "langlie_iqr_ratio_N10000_over_N100"),
        check_verdict(&report, "mle_median_bias_N1000"),
    ])
}

const X20: [f64; 20] = [
    0.0, -0.75, 0.375, -0.1875, -0.84375, 0.09375, -0.375, -0.5625, 0.28125, -0.140625, -0.6, 0.55, -0.25, 0.15, -0.45,
    -0.05, 0.7, -0.95, 0.4, -0.3,
];
const Y20: [i64; 20] = [1, -1, 1, -1, -1, 1, 1, -1, 1, -1, -1, 1, -1, 1, 1, -1, 1, -1, -1, 1];

fn grid_argmax(h: &TrialHistory, family: Family) -> (f64, f64) {
    let (mut ca, mut cb) = (0.0, 5.0);
    let (mut wa, mut wb) = (10.0, 10.0);
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, ca, cb);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = ca + wa * (i as f64 / 20.0 - 0.5);
                let b = cb + wb * (j as f64 / 20.0 - 0.5);
                if b > 0.0 {
                    let l = log_likelihood(a, b, h, family).unwrap();
                    if l > best.0 {
                        best = (l, a, b);
                    }
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        wa *= 0.5;
        wb *= 0.5;
    }
    (ca, cb)
}

fn estimation_correctness() -> Verdict {
    let br = Bracket::new(-1.5, 1.5).unwrap();
    let y: Vec<Outcome> = Y20.iter().map(|&v| Outcome::from_value(v).unwrap()).collect();
    let h = TrialHistory::from_parts(Some(br), X20.to_vec(), y).unwrap();

    let mut worst_grad = 0.0f64;
    let mut rng = substream(11, 0);
    for k in 0..100 {
        let family = if k % 2 == 0 { Family::Probit } else { Family::Logistic };
        let a: f64 = rng.random_range(-3.0..3.0);
        let b: f64 = rng.random_range(0.1..10.0);
        let g = score(a, b, &h, family).unwrap();
        let eps = 1e-5;
        let ll = |a, b| log_likelihood(a, b, &h, family).unwrap();
        let fd = [
            (ll(a + eps, b) - ll(a - eps, b)) / (2.0 * eps),
            (ll(a, b + eps) - ll(a, b - eps)) / (2.0 * eps),
        ];
        worst_grad = worst_grad.max((g[0] - fd[0]).hypot(g[1] - fd[1]) / g[0].hypot(g[1]));
    }

    let mut worst_grid = 0.0f64;
    for family in [Family::Probit, Family::Logistic] {
        let fit = fit_mle(&h, family).unwrap();
        let (ga, gb) = grid_argmax(&h, family);
        worst_grid = worst_grid
            .max((fit.alpha_hat - ga).abs())
            .max((fit.beta_hat - gb).abs());
    }

    let all_success = TrialHistory::from_parts(Some(br), vec![0.0, 0.5, -0.5], vec![S; 3]).unwrap();
    let separated = matches!(fit_mle(&all_success, Family::Probit), Err(Error::Separation(_)));
    (
        worst_grad <= 1e-6 && worst_grid <= 1e-3 && separated,
        format!(
            "gradient vs central differences: worst relative error {worst_grad:.2e} (need <= 1e-6); \
             grid oracle: worst deviation {worst_grid:.2e} (need <= 1e-3); all-success separation: {separated}"
        ),
    )
}

fn serve_forever(data: &Path) {
    let store = Arc::new(langlie_service::SessionStore::open(data).unwrap());
    let runtime = tokio::runtime::Runtime::new().unwrap();
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        println!("listening on http://{}", listener.local_addr().unwrap());
        std::io::stdout().flush().unwrap();
        langlie_service::serve(listener, store, std::future::pending())
            .await
            .unwrap();
    });
}

struct Server {
    child: Child,
    addr: SocketAddr,
}

impl Server {
    fn start(data: &Path) -> Server {
        let mut child = Command::new(std::env::current_exe().unwrap())
            .env(SERVE_ENV, data)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .parse()
            .unwrap();
        Server { child, addr }
    }

    fn call(&self, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
        http(self.addr, method, path, body)
    }

    fn json(&self, method: &str, path: &str, body: Option<&str>) -> Value {
        let (status, text) = self.call(method, path, body);
        assert!(status < 300, "{method} {path}: {status} {text}");
        serde_json::from_str(&text).unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\
         Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    (head.split(' ').nth(1).unwrap().parse().unwrap(), body.to_string())
}

/// Records `outcomes` in session `id` at the stimuli the server dictates.
fn conduct(server: &Server, id: &str, outcomes: &[i64]) {
    for &y in outcomes {
        let next = server.json("GET", &format!("/sessions/{id}/next"), None);
        let body = json!({"x": next["x"], "y": y, "expected_index": next["index"]}).to_string();
        server.json("POST", &format!("/sessions/{id}/outcomes"), Some(&body));
    }
}

fn service_durability() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sessions");
    let server = Server::start(&data);
    let mut ids = Vec::new();
    for (k, family) in ["probit", "logistic", "probit"].into_iter().enumerate() {
        let body = json!({"a": -1.5, "b": 1.5 + k as f64, "family": family}).to_string();
        let id = server.json("POST", "/sessions", Some(&body))["id"]
            .as_str()
            .unwrap()
            .to_string();
        conduct(&server, &id, &[1, -1, -1, 1, 1, -1, 1][..3 + 2 * k]);
        ids.push(id);
    }
    server.json("POST", &format!("/sessions/{}/undo", ids[1]), None);
    server.json("POST", &format!("/sessions/{}/close", ids[2]), None);
    let before: Vec<Value> = ids
        .iter()
        .map(|id| server.json("GET", &format!("/sessions/{id}"), None))
        .collect();
    drop(server);

    let server = Server::start(&data);
    let after: Vec<Value> = ids
        .iter()
        .map(|id| server.json("GET", &format!("/sessions/{id}"), None))
        .collect();
    let recovered = before == after && server.json("GET", "/sessions", None).as_array().unwrap().len() == ids.len();

    let (_, doc) = server.call("GET", &format!("/sessions/{}/export?format=json", ids[0]), None);
    let copy = server.json("POST", "/sessions/import", Some(&doc))["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (_, again) = server.call("GET", &format!("/sessions/{copy}/export?format=json"), None);
    let byte_identical = doc == again;

    let id = &ids[0];
    let next = server.json("GET", &format!("/sessions/{id}/next"), None);
    let threads = 16;
    let barrier = Arc::new(Barrier::new(threads));
    let handles: Vec<_> = (0..threads)
        .map(|k| {
            let (barrier, addr, path) = (barrier.clone(), server.addr, format!("/sessions/{id}/outcomes"));
            let body = json!({"x": next["x"], "y": if k % 2 == 0 { 1 } else { -1 }, "expected_index": next["index"]})
                .to_string();
            std::thread::spawn(move || {
                barrier.wait();
                http(addr, "POST", &path, Some(&body)).0
            })
        })
        .collect();
    let statuses: Vec<u16> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let accepted = statuses.iter().filter(|&&s| s == 200).count();
    let conflicts = statuses.iter().filter(|&&s| s == 409).count();
    let trials = server.json("GET", &format!("/sessions/{id}"), None)["trials"]
        .as_array()
        .unwrap()
        .len();
    let one_write =
        accepted == 1 && conflicts == threads - 1 && trials == before[0]["trials"].as_array().unwrap().len() + 1;

    (
        recovered && byte_identical && one_write,
        format!(
            "kill and restart recovered {} sessions identically: {recovered}; export/import byte-identical: \
             {byte_identical}; {threads} concurrent posts: {accepted} accepted, {conflicts} conflicts",
            ids.len()
        ),
    )
}
