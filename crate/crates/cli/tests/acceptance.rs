//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::Command;

use commdet::encoder::{
    self, attention_layer_backward, attention_layer_forward, gcn_layer_backward, gcn_layer_forward,
    AttentionParams, EncoderConfig, EncoderKind, GcnParams, InitKind, ModelParams,
};
use commdet::harness::{bench, BenchConfig, BenchmarkSummary, Method, MethodSummary, Preset};
use commdet::louvain::louvain;
use commdet::metrics::{hard_modularity, nmi, overlap};
use commdet::objective::{self, soft_modularity, LossConfig, RegMode};
use commdet::spectral::{smallest_eigenpairs, BetheHessian};
use commdet::{seed, Graph, LabelVector, Matrix, Mode, SsbmParams};
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

struct Checks(Vec<String>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.0.push(what.into());
        }
    }

    fn within(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        self.require((value - target).abs() <= tol, format!("{name} = {value:.4}, want {target} ± {tol}"));
    }

    fn done(self, summary: String) -> Outcome {
        if self.0.is_empty() {
            Outcome { ok: true, detail: summary }
        } else {
            Outcome { ok: false, detail: format!("{summary}; {}", self.0.join("; ")) }
        }
    }
}

fn mean_of(s: &MethodSummary, metric: &str) -> f64 {
    let stat = match metric {
        "modularity" => s.modularity,
        "overlap" => s.overlap,
        _ => s.nmi,
    };
    stat.map(|s| s.mean).unwrap_or(f64::NAN)
}

fn run_table(preset: Preset, methods: Vec<Method>) -> commdet::Result<BenchmarkSummary> {
    let report = bench(&BenchConfig::preset(preset, methods, 20, 0))?;
    for r in report.results.iter().filter(|r| r.error.is_some()) {
        eprintln!("  trial {} {}: {}", r.trial, r.method, r.error.as_deref().unwrap_or(""));
    }
    eprint!("{}", commdet::harness::render_table(&report.summary));
    Ok(report.summary)
}

fn table1() -> commdet::Result<Outcome> {
    use Method::*;
    let s = run_table(Preset::Assoc, vec![TrueLabels, BetheHessian, Louvain, AttentionBh, GnnBh])?;
    let mut c = Checks::new();
    let m = |x: Method| s.method(x).expect("method summarized");
    for (method, metric, target, tol) in [
        (BetheHessian, "modularity", 0.52, 0.03),
        (BetheHessian, "overlap", 0.85, 0.08),
        (BetheHessian, "nmi", 0.69, 0.08),
        (Louvain, "modularity", 0.48, 0.04),
        (Louvain, "nmi", 0.48, 0.10),
        (AttentionBh, "modularity", 0.51, 0.03),
        (AttentionBh, "overlap", 0.78, 0.12),
        (AttentionBh, "nmi", 0.67, 0.12),
        (GnnBh, "overlap", 0.66, 0.15),
        (TrueLabels, "modularity", 0.52, 0.02),
    ] {
        c.within(&format!("{} {metric}", method.name()), mean_of(m(method), metric), target, tol);
    }
    c.require(mean_of(m(TrueLabels), "overlap") == 1.0, "true-labels overlap != 1");
    c.require(mean_of(m(TrueLabels), "nmi") == 1.0, "true-labels nmi != 1");
    for method in [TrueLabels, BetheHessian, Louvain, AttentionBh, GnnBh] {
        c.require(m(method).failed == 0, format!("{} had failed trials", method.name()));
    }
    let summary = format!(
        "bh Q={:.3} ov={:.3} nmi={:.3}; louvain Q={:.3} nmi={:.3}; attention-bh Q={:.3} ov={:.3} nmi={:.3}; gnn-bh ov={:.3}",
        mean_of(m(BetheHessian), "modularity"),
        mean_of(m(BetheHessian), "overlap"),
        mean_of(m(BetheHessian), "nmi"),
        mean_of(m(Louvain), "modularity"),
        mean_of(m(Louvain), "nmi"),
        mean_of(m(AttentionBh), "modularity"),
        mean_of(m(AttentionBh), "overlap"),
        mean_of(m(AttentionBh), "nmi"),
        mean_of(m(GnnBh), "overlap"),
    );
    Ok(c.done(summary))
}

fn table2() -> commdet::Result<Outcome> {
    use Method::*;
    let s = run_table(Preset::Disassoc, vec![TrueLabels, BetheHessian, AttentionBh])?;
    let mut c = Checks::new();
    let m = |x: Method| s.method(x).expect("method summarized");
    for (method, metric, target, tol) in [
        (TrueLabels, "modularity", -0.20, 0.02),
        (BetheHessian, "modularity", -0.15, 0.03),
        (BetheHessian, "overlap", 0.21, 0.10),
        (AttentionBh, "modularity", -0.18, 0.03),
        (AttentionBh, "overlap", 0.22, 0.12),
    ] {
        c.within(&format!("{} {metric}", method.name()), mean_of(m(method), metric), target, tol);
    }
    let (att, bh) = (mean_of(m(AttentionBh), "modularity"), mean_of(m(BetheHessian), "modularity"));
    c.require(att <= bh, format!("attention-bh modularity {att:.4} above bethe-hessian {bh:.4}"));
    for method in [TrueLabels, BetheHessian, AttentionBh] {
        c.require(m(method).failed == 0, format!("{} had failed trials", method.name()));
    }
    let summary = format!(
        "true Q={:.3}; bh Q={bh:.3} ov={:.3}; attention-bh Q={att:.3} ov={:.3}",
        mean_of(m(TrueLabels), "modularity"),
        mean_of(m(BetheHessian), "overlap"),
        mean_of(m(AttentionBh), "overlap"),
    );
    Ok(c.done(summary))
}

fn snr_regimes() -> commdet::Result<Outcome> {
    let assoc = SsbmParams::associative().snr()?;
    let dis = SsbmParams::disassociative().snr()?;
    let mut c = Checks::new();
    c.require(assoc > 1.0 && (assoc - 361.0 / 145.0).abs() < 1e-12, format!("assoc snr {assoc}"));
    c.require(dis < 1.0 && (dis - 0.9).abs() < 1e-12, format!("disassoc snr {dis}"));
    Ok(c.done(format!("snr(21,2,5)={assoc:.6} snr(0,18,5)={dis:.6}")))
}

// ---- randomized fixtures ----

fn rng(s: u64) -> impl Rng {
    seed::rng(s)
}

fn uniform_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
}

fn random_graph(r: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    Graph::from_edges(n, edges).expect("valid edges")
}

fn stochastic(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = uniform_matrix(r, rows, cols).map(|x| x.abs() + 0.05);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn fd(x: &Matrix, h: f64, f: &mut impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        out[i] = (plus - minus) / (2.0 * h);
    }
    out
}

const STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-4;

/// Relative error between an analytic gradient and central differences at
/// `STEP`. Coordinates whose difference quotient moves by more than the
/// tolerance when the step shrinks tenfold straddle a ReLU kink; the smaller
/// step is used for those.
fn grad_error(analytic: &Matrix, x: &Matrix, mut f: impl FnMut(&Matrix) -> f64) -> f64 {
    let coarse = fd(x, STEP, &mut f);
    let fine = fd(x, STEP / 10.0, &mut f);
    let scale = coarse.amax().max(1e-6);
    let numeric = coarse.zip_map(&fine, |c, f| if (c - f).abs() > GRAD_TOL * scale { f } else { c });
    (analytic - &numeric).norm() / analytic.norm().max(numeric.norm()).max(1e-6)
}

fn gradient_suite() -> commdet::Result<Outcome> {
    let mut c = Checks::new();
    let mut worst: f64 = 0.0;
    let mut note = |c: &mut Checks, label: String, err: f64| {
        worst = worst.max(err);
        c.require(err < GRAD_TOL, format!("{label}: {err:e}"));
    };
    for instance in 0..10u64 {
        let mut r = rng(instance);
        let g = random_graph(&mut r, 6, 0.45);
        let params = AttentionParams::init(&mut r, 8, 2);
        let x = uniform_matrix(&mut r, 6, 8);
        let probe = uniform_matrix(&mut r, 6, 8);
        let (_, cache) = attention_layer_forward(&g, &x, &params);
        let (grad, dx) = attention_layer_backward(&cache, &params, &probe);
        let err = grad_error(&dx, &x, |xx| attention_layer_forward(&g, xx, &params).0.dot(&probe));
        note(&mut c, format!("attention {instance} input"), err);
        for (t, (name, analytic)) in grad.tensors().into_iter().enumerate() {
            let base = params.tensors()[t].1.clone();
            let err = grad_error(analytic, &base, |m| {
                let mut p = params.clone();
                *p.tensors_mut()[t] = m.clone();
                attention_layer_forward(&g, &x, &p).0.dot(&probe)
            });
            note(&mut c, format!("attention {instance} {name}"), err);
        }

        let g = random_graph(&mut r, 7, 0.4);
        let params = GcnParams::init(&mut r, 8);
        let x = uniform_matrix(&mut r, 7, 8);
        let probe = uniform_matrix(&mut r, 7, 8);
        let (_, cache) = gcn_layer_forward(&g, &x, &params);
        let (grad, dx) = gcn_layer_backward(&cache, &params, &probe);
        let err = grad_error(&dx, &x, |xx| gcn_layer_forward(&g, xx, &params).0.dot(&probe));
        note(&mut c, format!("gcn {instance} input"), err);
        for (t, (name, analytic)) in grad.tensors().into_iter().enumerate() {
            let base = params.tensors()[t].1.clone();
            let err = grad_error(analytic, &base, |m| {
                let mut p = params.clone();
                *p.tensors_mut()[t] = m.clone();
                gcn_layer_forward(&g, &x, &p).0.dot(&probe)
            });
            note(&mut c, format!("gcn {instance} {name}"), err);
        }

        for kind in [EncoderKind::Attention, EncoderKind::Gcn] {
            let n = 8 + (instance as usize % 3);
            let g = random_graph(&mut r, n, 0.4);
            let cfg = EncoderConfig { layers: 2, heads: 2, hidden: 8, clusters: 3, encoder_kind: kind, init_kind: InitKind::Random };
            let x0 = uniform_matrix(&mut r, n, 3);
            let params = encoder::init_params(&cfg, 3, instance)?;
            let mode = if instance % 2 == 0 { Mode::Associative } else { Mode::Disassociative };
            let loss_cfg = LossConfig::new(mode, 3);
            let loss_of = |p: &ModelParams, x: &Matrix| {
                let (u, _) = encoder::forward(&g, x, p).expect("finite forward");
                objective::loss(&g, &u.0, &loss_cfg).expect("valid loss")
            };
            let (u, cache) = encoder::forward(&g, &x0, &params)?;
            let du = objective::loss_grad_u(&g, &u.0, &loss_cfg)?;
            let grads = encoder::backward(&cache, &params, &du)?;
            note(&mut c, format!("{kind:?} {instance} x0"), grad_error(&grads.x0, &x0, |x| loss_of(&params, x)));
            for (t, (name, analytic)) in grads.params.named_tensors().into_iter().enumerate() {
                let base = params.named_tensors()[t].1.clone();
                let err = grad_error(analytic, &base, |m| {
                    let mut p = params.clone();
                    *p.tensors_mut()[t] = m.clone();
                    loss_of(&p, &x0)
                });
                note(&mut c, format!("{kind:?} {instance} {name}"), err);
            }
        }
    }
    let mut worst_loss: f64 = 0.0;
    for instance in 0..20u64 {
        let mut r = rng(100 + instance);
        let g = random_graph(&mut r, 8, 0.4);
        let u = stochastic(&mut r, 8, 3);
        for mode in [Mode::Associative, Mode::Disassociative] {
            for reg_mode in [RegMode::Normalized, RegMode::Literal] {
                let cfg = LossConfig { mode, lambda: 0.5, clusters: 3, reg_mode };
                let analytic = objective::loss_grad_u(&g, &u, &cfg)?;
                let numeric = fd(&u, 1e-5, &mut |uu| objective::loss_and_grad(&g, uu, &cfg).expect("loss").0.loss);
                let err = (&analytic - &numeric).norm() / analytic.norm().max(numeric.norm()).max(1e-8);
                worst_loss = worst_loss.max(err);
                c.require(err < 1e-6, format!("loss_grad_u {instance} {mode:?} {reg_mode:?}: {err:e}"));
            }
        }
    }
    Ok(c.done(format!("worst layer/end-to-end error {worst:.2e}, worst loss_grad_u error {worst_loss:.2e}")))
}

fn oracle_equivalence() -> commdet::Result<Outcome> {
    let mut c = Checks::new();
    let mut worst: f64 = 0.0;
    for pair in 0..100u64 {
        let mut r = rng(1000 + pair);
        let n = r.random_range(5..50);
        let g = random_graph(&mut r, n, 0.2);
        let k = r.random_range(1..7);
        let y = LabelVector((0..n).map(|_| r.random_range(0..k)).collect());
        let diff = (hard_modularity(&g, &y)? - soft_modularity(&g, &y.one_hot(k)?)?).abs();
        worst = worst.max(diff);
        c.require(diff < 1e-10, format!("pair {pair}: hard vs soft differ by {diff:e}"));
    }
    for s in 0..10u64 {
        let (g, _) = commdet::graph::ssbm_generate(&SsbmParams::associative(), s)?;
        let res = louvain(&g, s)?;
        let diff = (res.modularity - hard_modularity(&g, &res.labels)?).abs();
        c.require(diff < 1e-10, format!("louvain seed {s}: reported modularity off by {diff:e}"));
    }
    let (_, truth) = commdet::graph::ssbm_generate(&SsbmParams::associative(), 0)?;
    let mut r = rng(7);
    let noisy: Vec<usize> = truth.iter().map(|&l| if r.random::<f64>() < 0.4 { r.random_range(0..5) } else { l }).collect();
    let (o0, n0) = (overlap(&truth, &noisy, 5)?, nmi(&truth, &noisy)?);
    for _ in 0..100 {
        let mut s1: Vec<usize> = (0..5).collect();
        let mut s2 = s1.clone();
        s1.shuffle(&mut r);
        s2.shuffle(&mut r);
        let y: Vec<usize> = truth.iter().map(|&l| s1[l]).collect();
        let z: Vec<usize> = noisy.iter().map(|&l| s2[l]).collect();
        c.require((overlap(&y, &z, 5)? - o0).abs() < 1e-12, "overlap changed under relabeling");
        c.require((nmi(&y, &z)? - n0).abs() < 1e-12, "nmi changed under relabeling");
    }
    Ok(c.done(format!("worst hard/soft gap {worst:.1e}; overlap {o0:.3} and nmi {n0:.3} stable over 100 relabelings")))
}

fn structural_identities() -> commdet::Result<Outcome> {
    let mut c = Checks::new();
    let p3 = Graph::from_edges(3, [(0, 1), (1, 2)])?;
    let op = BetheHessian { graph: &p3, r: 1.0 };
    let pairs = smallest_eigenpairs(&op, 3)?;
    for (got, want) in pairs.values.iter().zip([0.0, 1.0, 3.0]) {
        c.require((got - want).abs() < 1e-8, format!("P3 eigenvalue {got} vs {want}"));
    }
    c.require(pairs.residuals.iter().all(|&res| res < 1e-8), format!("P3 residuals {:?}", pairs.residuals));

    let mut worst_row: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    let mut worst_u: f64 = 0.0;
    for s in 0..20u64 {
        let mut r = rng(2000 + s);
        let n = r.random_range(5..40);
        let g = random_graph(&mut r, n, 0.2);
        let ones = g.modularity_matrix_apply(&Matrix::from_element(n, 1, 1.0))?;
        worst_row = worst_row.max(ones.amax());

        let params = AttentionParams::init(&mut r, 12, 3);
        let x = uniform_matrix(&mut r, n, 12);
        let (_, cache) = attention_layer_forward(&g, &x, &params);
        for alpha in &cache.alpha {
            for u in 0..n {
                let total: f64 = alpha[cache.index.range(u)].iter().sum();
                worst_alpha = worst_alpha.max((total - 1.0).abs());
            }
        }

        let cfg = EncoderConfig::new(4, EncoderKind::Attention, InitKind::Random);
        let x0 = encoder::initial_embeddings(&g, &cfg, None, s)?;
        let (u, _) = encoder::forward(&g, &x0, &encoder::init_params(&cfg, 4, s)?)?;
        for row in u.0.row_iter() {
            worst_u = worst_u.max((row.sum() - 1.0).abs());
        }
    }
    c.require(worst_row < 1e-10, format!("modularity operator row sum {worst_row:e}"));
    c.require(worst_alpha < 1e-6, format!("attention normalization {worst_alpha:e}"));
    c.require(worst_u < 1e-6, format!("soft assignment row sums {worst_u:e}"));
    Ok(c.done(format!(
        "P3 spectrum {:?}; B row sums {worst_row:.1e}; attention sums {worst_alpha:.1e}; U row sums {worst_u:.1e}",
        pairs.values.iter().map(|v| (v * 1e9).round() / 1e9 + 0.0).collect::<Vec<_>>()
    )))
}

fn cli_determinism() -> commdet::Result<Outcome> {
    let dir = tempfile::tempdir().map_err(|e| commdet::Error::InvalidParameter(e.to_string()))?;
    let run = |threads: &str, name: &str| -> Result<Vec<serde_json::Value>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_commdet"))
            .args(["bench", "--preset", "assoc", "--methods", "all", "--trials", "2", "--seed", "11"])
            .args(["--max-steps", "15", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut rows = json["results"].as_array().cloned().unwrap_or_default();
        for row in &mut rows {
            row.as_object_mut().map(|o| o.remove("runtime_secs"));
        }
        Ok(rows)
    };
    let mut c = Checks::new();
    match (run("1", "a.json"), run("1", "b.json"), run("3", "c.json")) {
        (Ok(a), Ok(b), Ok(t3)) => {
            c.require(!a.is_empty(), "no trial results");
            c.require(a == b, "repeat run differs");
            c.require(a == t3, "3-thread run differs from 1-thread run");
            Ok(c.done(format!("{} per-trial records identical across 3 runs", a.len())))
        }
        (a, b, t3) => {
            for e in [a.err(), b.err(), t3.err()].into_iter().flatten() {
                c.require(false, format!("cli failed: {e}"));
            }
            Ok(c.done("cli bench".into()))
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> commdet::Result<Outcome>); 7] = [
        ("1 associative table", table1),
        ("2 disassociative table", table2),
        ("3 snr regimes", snr_regimes),
        ("4 gradient suite", gradient_suite),
        ("5 oracle equivalence", oracle_equivalence),
        ("6 structural identities", structural_identities),
        ("7 cli determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = std::time::Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome { ok: false, detail: format!("error: {e}") });
        let secs = started.elapsed().as_secs_f64();
        println!("{} criterion {name} ({secs:.1}s): {}", if outcome.ok { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
