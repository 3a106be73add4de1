//! Acceptance checks, one line per criterion. Pass criterion names as
//! arguments to run a subset; exits non-zero if any check fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use emotive_core::active::{coverage_objective, first_round_samples, select_samples};
use emotive_core::baselines::PerEmotionModel;
use emotive_core::evaluation::report::{metrics_rows, summarize, write_results, SummaryRow};
use emotive_core::evaluation::{
    quality_score, run_experiment, significance_vs_random, topx_accuracy, Choice, ConfigFile, ExperimentOutput,
    Metric, PairSide,
};
use emotive_core::human::likert_from_vad;
use emotive_core::net::{loss, style_cost, waypoint_features, LabeledDataset, StyleNet, FEATURE_DIM};
use emotive_core::opt::{base_cost, base_cost_grad, optimize, reaches_goal, CostConfig};
use emotive_core::seed::rng_from;
use emotive_core::sim::{
    dynamics_residual, dynamics_residual_grad, sample_task, Bounds, DynamicsParams, RobotState, Trajectory,
    TrajectoryGrad, STATE_DIM,
};
use emotive_core::vad::{curated_lexicon, diametric_partner, EvalEmotionSet, Vad};
use emotive_server::api::{router, AppState, JobMode};
use emotive_server::session::{QuestionKind, SessionConfig, SessionMetrics, Status};
use emotive_server::store::Store;

type Check = Result<String, String>;
type MatrixCheck = fn(&[SummaryRow]) -> Check;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- simulated matrix

fn run_matrix() -> Result<Vec<SummaryRow>, String> {
    let text = std::fs::read_to_string(repo().join("configs/sim_matrix.json")).map_err(|e| e.to_string())?;
    let cfg = ConfigFile::from_json(&text).map_err(|e| e.to_string())?;
    let mut out = ExperimentOutput::default();
    for cell in cfg.cells() {
        if cell.sh.label_noise_std != 0.0 {
            return Err("matrix must use the noiseless simulated human".into());
        }
        let t = Instant::now();
        out.extend(run_experiment(&cell).map_err(|e| e.to_string())?);
        eprintln!("  {} N={} done in {:.0}s", cell.method.name(), cell.n, t.elapsed().as_secs_f64());
    }
    if !out.failures.is_empty() {
        return Err(format!("{} seed failures: {:?}", out.failures.len(), out.failures));
    }
    for r in &out.records {
        r.check_invariants().map_err(|e| e.to_string())?;
    }
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(cfg.id());
    write_results(&dir, &out).map_err(|e| e.to_string())?;
    eprintln!("  matrix results in {}", dir.display());
    let rows = metrics_rows(&out);
    let top_ok = rows.iter().all(|r| r.top2 >= r.top1);
    let summary = summarize(&rows);
    if !top_ok {
        return Err("a record has Top-2 below Top-1".into());
    }
    Ok(summary)
}

fn cell<'a>(s: &'a [SummaryRow], method: &str, n: usize, qc: usize) -> Result<&'a SummaryRow, String> {
    s.iter()
        .find(|r| r.method == method && r.n == n && r.query_count == qc)
        .ok_or_else(|| format!("no summary for {method} N={n} at {qc} queries"))
}

fn method_ordering(s: &[SummaryRow]) -> Check {
    let qc = 80;
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for n in [2, 4, 6] {
        let (o, sp, sa) = (cell(s, "ours", n, qc)?, cell(s, "sep", n, qc)?, cell(s, "sep_all", n, qc)?);
        detail.push(format!(
            "N={n}: top1 ours {:.3} sep {:.3} sep_all {:.3}; quality ours {:.2} sep {:.2}",
            o.top1_mean, sp.top1_mean, sa.top1_mean, o.quality_mean, sp.quality_mean
        ));
        ensure(o.top1_mean >= sa.top1_mean - 0.05, format!("(a) fails at N={n}: {}", detail.last().unwrap()))?;
        gaps.push((o.top1_mean - sp.top1_mean, o.quality_mean - sp.quality_mean));
    }
    let summary = detail.join(" | ");
    ensure(gaps.windows(2).all(|w| w[1].0 > w[0].0), format!("(b) Top-1 gap not increasing in N: {gaps:?}; {summary}"))?;
    ensure(gaps[2].0 > 0.10, format!("(b) Top-1 gap at N=6 is {:.3}; {summary}", gaps[2].0))?;
    ensure(gaps.windows(2).all(|w| w[1].1 > w[0].1), format!("(c) quality gap not increasing in N: {gaps:?}; {summary}"))?;
    ensure(gaps[2].1 >= 0.3, format!("(c) quality gap at N=6 is {:.3}; {summary}", gaps[2].1))?;
    Ok(summary)
}

fn chance_baselines(s: &[SummaryRow]) -> Check {
    let mut worst: f64 = 0.0;
    for r in s.iter().filter(|r| r.query_count == 0) {
        for (name, mean, se, chance) in [
            ("quality", r.quality_mean, r.quality_se, r.quality_chance),
            ("top1", r.top1_mean, r.top1_se, r.top1_chance),
            ("top2", r.top2_mean, r.top2_se, r.top2_chance),
        ] {
            let dev = (mean - chance).abs();
            ensure(dev <= 3.0 * se, format!("{} N={} {name}: {mean:.3} vs chance {chance:.3}, se {se:.3}", r.method, r.n))?;
            if se > 0.0 {
                worst = worst.max(dev / se);
            }
        }
    }
    Ok(format!("all untrained cells within {worst:.2} SE of chance"))
}

fn learning_signal(s: &[SummaryRow]) -> Check {
    let r = cell(s, "ours", 6, 80)?;
    ensure(r.top1_mean >= 0.5, format!("ours N=6 Top-1 {:.3} below 0.5", r.top1_mean))?;
    ensure(r.top1_mean > 3.0 * r.top1_chance, "Top-1 not above 3x chance")?;
    Ok(format!("ours N=6 Top-1 {:.3} (chance {:.3}); Top-2 >= Top-1 on every record", r.top1_mean, r.top1_chance))
}

// ---------------------------------------------------------------- gradients

fn random_traj(rng: &mut impl Rng, n: usize) -> Trajectory<f64> {
    let wps = (0..n)
        .map(|_| RobotState {
            x: rng.gen_range(0.0..8.0),
            y: rng.gen_range(-0.1..1.5),
            phi: rng.gen_range(-3.0..3.0),
            vx: rng.gen_range(-6.0..6.0),
            vy: rng.gen_range(-6.0..6.0),
            vphi: rng.gen_range(-6.0..6.0),
        })
        .collect();
    let dts = (0..n - 1).map(|_| rng.gen_range(0.03..0.4)).collect();
    Trajectory::new(wps, dts).unwrap()
}

/// Central differences over every waypoint coordinate and duration; returns
/// the relative error of the analytic gradient.
fn fd_rel_error(t: &Trajectory<f64>, analytic: &TrajectoryGrad<f64>, f: impl Fn(&Trajectory<f64>) -> f64) -> f64 {
    let h = 1e-6;
    let mut num = Vec::new();
    let mut ana = Vec::new();
    for i in 0..t.len() {
        for c in 0..STATE_DIM {
            let bump = |d: f64| {
                let mut p = t.clone();
                let mut a = p.waypoints[i].to_array();
                a[c] += d;
                p.waypoints[i] = RobotState::from_array(a);
                f(&p)
            };
            num.push((bump(h) - bump(-h)) / (2.0 * h));
            ana.push(analytic.waypoints[i][c]);
        }
    }
    for i in 0..t.dts.len() {
        let bump = |d: f64| {
            let mut p = t.clone();
            p.dts[i] += d;
            f(&p)
        };
        num.push((bump(h) - bump(-h)) / (2.0 * h));
        ana.push(analytic.dts[i]);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = num.iter().zip(&ana).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&num).max(norm(&ana)).max(1e-12)
}

fn gradients() -> Check {
    let start = Instant::now();
    let mut rng = rng_from(0xACCE);
    let bounds = Bounds::default();
    let mut worst = BTreeMap::new();
    let mut record = |name: &'static str, e: f64| {
        let w = worst.entry(name).or_insert(0.0f64);
        *w = w.max(e);
    };
    for trial in 0..100u64 {
        let n = rng.gen_range(3..12);
        let t = random_traj(&mut rng, n);

        let net = StyleNet::random(rng.gen_range(4..16), rng.gen_range(3..10), trial);
        let target = Vad::clamped(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (_, g) = net.style_cost_grad(&t, &target);
        record("style_cost", fd_rel_error(&t, &g, |x| style_cost(&net, x, &target)));

        let task = sample_task(trial, &bounds);
        let cfg = CostConfig::<f64> { w_time: rng.gen_range(0.0..1.0), w_effort: rng.gen_range(0.0..1.0), ..Default::default() };
        let (_, g) = base_cost_grad(&t, &task, &cfg);
        record("base_cost", fd_rel_error(&t, &g, |x| base_cost(x, &task, &cfg)));

        let p = DynamicsParams::default();
        let (_, g) = dynamics_residual_grad(&t, &p);
        record("dynamics_residual", fd_rel_error(&t, &g, |x| dynamics_residual(x, &p)));

        let m = PerEmotionModel::<f64>::new("joy", rng.gen_range(4..16), rng.gen_range(3..10), 1e-4, trial);
        let (_, g) = m.cost_grad(&t);
        record("sep_cost", fd_rel_error(&t, &g, |x| m.cost(x)));
    }
    let secs = start.elapsed().as_secs_f64();
    for (name, w) in &worst {
        ensure(*w < 1e-4, format!("{name} relative error {w:.2e}"))?;
    }
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    let errs: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("worst relative errors {} over 100 configurations each in {secs:.1}s", errs.join(", ")))
}

// ---------------------------------------------------------------- optimizer

fn optimizer_contract() -> Check {
    let cfg = CostConfig::<f64> { alpha: 0.0, ..Default::default() };
    let net = StyleNet::random(32, 16, 0);
    let bounds = Bounds::default();
    let mut reached = 0;
    for seed in 0..100u64 {
        let task = sample_task(seed + 10_000, &bounds);
        let target = Vad::origin();
        let res = optimize(&task, &target, &net, &cfg).map_err(|e| format!("task {seed}: {e}"))?;
        ensure(res.history.windows(2).all(|w| w[1] <= w[0]), format!("task {seed}: best-so-far cost increased"))?;
        if reaches_goal(&res.trajectory, &task) {
            reached += 1;
        }
    }
    ensure(reached >= 95, format!("{reached}/100 tasks completed"))?;
    Ok(format!("{reached}/100 tasks completed; histories non-increasing"))
}

// ---------------------------------------------------------------- active learning

fn active_learning() -> Check {
    let lex = curated_lexicon::<f64>();
    let mut wins = 0;
    for trial in 0..20u64 {
        let sel = select_samples(20, &[], &lex, 500 + trial).map_err(|e| e.to_string())?;
        for run in &sel.runs {
            ensure(run.history.windows(2).all(|w| w[1] <= w[0]), format!("trial {trial}: EM objective increased"))?;
        }
        let random = first_round_samples::<f64>(20, 9_000 + trial).map_err(|e| e.to_string())?;
        if coverage_objective(&sel.samples, &[], &lex) < coverage_objective(&random, &[], &lex) {
            wins += 1;
        }
    }
    ensure(wins >= 18, format!("selection won {wins}/20"))?;
    Ok(format!("selection beat uniform candidates in {wins}/20 trials; EM monotone on every run"))
}

// ---------------------------------------------------------------- metrics

fn metric_oracles() -> Check {
    let mut rng = rng_from(0x3E7);
    for fixture in 0..1000 {
        let len = rng.gen_range(1..60);
        let likert: Vec<(u8, PairSide)> =
            (0..len).map(|_| (rng.gen_range(1..=7u8), if rng.gen() { PairSide::A } else { PairSide::B })).collect();
        let mut total = 0u32;
        for (s, side) in &likert {
            total += match side {
                PairSide::B => *s as u32,
                PairSide::A => 8 - *s as u32,
            };
        }
        let want = total as f64 / likert.len() as f64;
        let got = quality_score(&likert).map_err(|e| e.to_string())?;
        ensure(got == want, format!("fixture {fixture}: quality {got} != {want}"))?;

        let n = rng.gen_range(2..8usize);
        let choices: Vec<Choice<usize>> = (0..len)
            .map(|_| {
                let first = rng.gen_range(0..n);
                let mut second = rng.gen_range(0..n);
                while second == first {
                    second = rng.gen_range(0..n);
                }
                Choice { first, second, intended: rng.gen_range(0..n) }
            })
            .collect();
        for x in [1, 2] {
            let mut hits = 0u32;
            for c in &choices {
                let ranked = [c.first, c.second];
                if ranked[..x].contains(&c.intended) {
                    hits += 1;
                }
            }
            let want = hits as f64 / choices.len() as f64;
            let got = topx_accuracy(&choices, x).map_err(|e| e.to_string())?;
            ensure(got == want, format!("fixture {fixture}: top-{x} {got} != {want}"))?;
        }
    }
    Ok("1000 fixtures match the brute-force scores exactly".into())
}

// ---------------------------------------------------------------- identities

fn identities() -> Check {
    let mut rng = rng_from(0x1D);
    // loss is the sum of per-pair style costs when the L1 weight is zero
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let mut net = StyleNet::<f64>::random(16, 8, trial);
        net.pool_net_mut().l1_weight = 0.0;
        let mut data = LabeledDataset::default();
        let mut direct = 0.0;
        for _ in 0..rng.gen_range(1..10) {
            let n = rng.gen_range(3..10);
            let t = random_traj(&mut rng, n);
            let v = Vad::clamped(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            direct += style_cost(&net, &t, &v);
            data.push(t, v, 1);
        }
        worst = worst.max((loss(&net, &data) - direct).abs());
    }
    ensure(worst <= 1e-12, format!("loss differs from the summed style costs by {worst:e}"))?;

    let (a, b) = (Vad::clamped(-0.6, 0.2, -0.3), Vad::clamped(0.7, -0.5, 0.4));
    let mid = Vad::clamped(0.05, -0.15, 0.05);
    ensure(
        (likert_from_vad(&a, &a, &b), likert_from_vad(&b, &a, &b), likert_from_vad(&mid, &a, &b)) == (1, 7, 4),
        "Likert endpoints do not map to 1, 7, 4",
    )?;

    for _ in 0..1000 {
        let v = Vad::clamped(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        ensure(diametric_partner(diametric_partner(v)) == v, "diametric partner is not an involution")?;
    }
    let set = EvalEmotionSet::<f64>::shipped(6).map_err(|e| e.to_string())?;
    for i in 0..set.len() {
        let p = EvalEmotionSet::<f64>::partner_index(i);
        ensure(EvalEmotionSet::<f64>::partner_index(p) == i && p != i, "evaluation pairing is not an involution")?;
    }

    let net = StyleNet::<f64>::random(16, 8, 3);
    let mut worst_perm: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..15);
        let feats = waypoint_features(&random_traj(&mut rng, n));
        let mut rows: Vec<&[f64]> = feats.chunks_exact(FEATURE_DIM).collect();
        rows.shuffle(&mut rng);
        let permuted: Vec<f64> = rows.concat();
        let a = net.pool_net().forward_features(&feats).out;
        let b = net.pool_net().forward_features(&permuted).out;
        for (x, y) in a.iter().zip(&b) {
            worst_perm = worst_perm.max((x - y).abs());
        }
    }
    ensure(worst_perm <= 1e-12, format!("pooling changes by {worst_perm:e} under permutation"))?;
    Ok(format!("loss sum gap {worst:.1e}; Likert 1/7/4; involutions hold; permutation gap {worst_perm:.1e}"))
}

// ---------------------------------------------------------------- determinism

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = repo().join("configs/smoke.json");
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let out = Command::new(env!("CARGO_BIN_EXE_emotive"))
            .args(["experiment", "run", cfg.to_str().unwrap(), "--results-dir", run])
            .current_dir(tmp.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), format!("experiment run failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        files.push(std::fs::read(tmp.path().join(run).join("smoke/metrics.csv")).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], "metrics.csv differs between runs")?;
    Ok(format!("two runs wrote identical metrics.csv ({} bytes)", files[0].len()))
}

// ---------------------------------------------------------------- protocol

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Result<(StatusCode, Value), String> {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).map_err(|e| e.to_string())?;
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).map_err(|e| e.to_string())? };
    Ok((status, v))
}

/// Labels every round, then answers evaluation as a perfect rater except for
/// `slips` Likert items rated one step short.
async fn run_protocol_session(
    dir: &Path,
    seed: u64,
    slips: usize,
) -> Result<(usize, BTreeMap<usize, usize>, usize, SessionMetrics), String> {
    let store = Arc::new(Store::open(dir).map_err(|e| e.to_string())?);
    let app = router(AppState::new(store.clone(), JobMode::Inline));
    let cfg = SessionConfig::new(2, 20, 6, 3, seed);
    let (st, v) = call(&app, "POST", "/sessions", Some(json!({ "request_id": format!("acc-{seed}"), "config": cfg }))).await?;
    ensure(st == StatusCode::CREATED, format!("create: {st} {v}"))?;
    let id = v["session_id"].as_str().ok_or("no session id")?.to_string();

    let mut served = 0;
    for round in 1..=2 {
        let (_, q) = call(&app, "GET", &format!("/sessions/{id}/queries"), None).await?;
        let queries = q["queries"].as_array().ok_or("no queries")?;
        served += queries.len();
        let labels: Vec<Value> = queries.iter().map(|x| json!({ "index": x["index"], "text": "calm" })).collect();
        let (st, v) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/labels"),
            Some(json!({ "request_id": format!("labels-{round}"), "labels": labels })),
        )
        .await?;
        ensure(st == StatusCode::OK, format!("labels: {st} {v}"))?;
        let (st, v) = call(&app, "POST", &format!("/sessions/{id}/train"), Some(json!({ "request_id": format!("train-{round}") }))).await?;
        ensure(st == StatusCode::ACCEPTED, format!("train: {st} {v}"))?;
    }

    let set = EvalEmotionSet::<f64>::shipped(6).map_err(|e| e.to_string())?;
    let questions = store.get(&id).map_err(|e| e.to_string())?.snapshot().eval.clone().ok_or("no evaluation")?.questions;
    let mut likert_sets = BTreeMap::new();
    let mut choices = 0;
    let mut slipped = 0;
    loop {
        let (_, n) = call(&app, "GET", &format!("/sessions/{id}/eval/next"), None).await?;
        if n["item"].is_null() {
            break;
        }
        let index = n["item"]["index"].as_u64().ok_or("no index")? as usize;
        let q = questions.iter().find(|q| q.index == index).ok_or("unknown question")?;
        let answer = match &q.question {
            QuestionKind::Likert { set: s, emotion_b, .. } => {
                *likert_sets.entry(*s).or_insert(0) += 1;
                let toward_b = set.index_of(emotion_b) == Some(q.intended);
                let slip = slipped < slips;
                slipped += slip as usize;
                let score = match (toward_b, slip) {
                    (true, false) => 7,
                    (true, true) => 6,
                    (false, false) => 1,
                    (false, true) => 2,
                };
                json!({ "kind": "likert", "score": score })
            }
            QuestionKind::Choice { options } => {
                choices += 1;
                let first = set.name(q.intended).to_string();
                let second = options.iter().find(|o| **o != first).ok_or("one option")?.clone();
                json!({ "kind": "choice", "first": first, "second": second })
            }
        };
        let (st, v) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/eval/answer"),
            Some(json!({ "request_id": format!("answer-{index}"), "index": index, "answer": answer })),
        )
        .await?;
        ensure(st == StatusCode::OK, format!("answer: {st} {v}"))?;
    }
    let metrics = store.get(&id).map_err(|e| e.to_string())?.snapshot().metrics();
    ensure(metrics.status == Status::Done, "evaluation not finished")?;
    Ok((served, likert_sets, choices, metrics))
}

fn protocol() -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sessions = Vec::new();
    for (seed, slips) in [(1u64, 0usize), (2, 1), (3, 2)] {
        let (served, sets, choices, metrics) = rt.block_on(run_protocol_session(tmp.path(), seed, slips))?;
        ensure(served == 40, format!("session {seed} served {served} labeling queries"))?;
        ensure(sets == BTreeMap::from([(0, 6), (1, 6), (2, 6)]), format!("Likert sets {sets:?}"))?;
        ensure(choices == 18, format!("{choices} choice items"))?;
        sessions.push(metrics);
    }
    let mut lines = Vec::new();
    for metric in [Metric::Quality, Metric::Top1, Metric::Top2] {
        let scores: Vec<_> = sessions
            .iter()
            .map(|m| m.scores(metric).ok_or_else(|| "missing scores".to_string()))
            .collect::<Result<_, _>>()?;
        let tests = significance_vs_random(&scores, metric, 6, 0.05).map_err(|e| e.to_string())?;
        let overall = &tests[0];
        ensure(overall.reject, format!("{} not significant: p = {}", metric.name(), overall.p))?;
        lines.push(format!("{} p={:.1e}", metric.name(), overall.p));
    }
    Ok(format!("40 queries, Likert sets 3x6, 18 choices; ceiling sessions reject: {}", lines.join(", ")))
}

// ---------------------------------------------------------------- driver

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Check| {
        if wanted(name) {
            let t = Instant::now();
            let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
            eprintln!("  [{name}: {:.1}s]", t.elapsed().as_secs_f64());
            results.push((name, r));
        }
    };
    run("gradient_correctness", &gradients);
    run("optimizer_contract", &optimizer_contract);
    run("active_learning_contract", &active_learning);
    run("metric_oracles", &metric_oracles);
    run("identities", &identities);
    run("determinism", &determinism);
    run("protocol_shape", &protocol);

    let matrix_checks = ["method_ordering", "chance_baselines", "learning_signal"];
    if matrix_checks.iter().any(|n| wanted(n)) {
        eprintln!("  running the simulated matrix (3 methods x 3 N x 6 seeds)");
        let t = Instant::now();
        let summary = run_matrix();
        eprintln!("  [matrix: {:.0}s]", t.elapsed().as_secs_f64());
        let checks: [(&'static str, MatrixCheck); 3] =
            [("method_ordering", method_ordering), ("chance_baselines", chance_baselines), ("learning_signal", learning_signal)];
        for (name, f) in checks {
            if wanted(name) {
                results.push((name, summary.as_ref().map_err(|e| e.clone()).and_then(|s| f(s))));
            }
        }
    }

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
