//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Tolerances are fixed constants below. The desk-scale experiment trains
//! the default encoder on five synthetic splits and takes a few minutes on
//! one CPU core.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{s, Array2, Axis};
use open_intent::cli::run_from_args;
use open_intent::data::SynthConfig;
use open_intent::encoder::{load_checkpoint, save_checkpoint, EncoderConfig, EncoderModel};
use open_intent::eval::{compute_metrics, predict_from_logits};
use open_intent::loss::{cross_entropy_with_grad, softmax};
use open_intent::mixup::{mixup_forward, pair_by_shuffle, sample_lambda};
use open_intent::pipeline::{self, ExperimentSettings, SweepParam, SweepRow, Variant};
use open_intent::rng;
use open_intent::softlabel::{kl_loss, kl_loss_with_grad, soften};
use open_intent::trainer::{batch_gradients, Stage, TrainConfig};
use rand::Rng;

const SOFTEN_TOL: f64 = 1e-12;
const KL_TOL: f64 = 1e-9;
const KL_GRAD_TOL: f64 = 1e-5;
const BETA_DRAWS: usize = 100_000;
const BETA_MEAN_TOL: f64 = 0.005;
const BETA_VAR_TOL: f64 = 0.003;
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-3;
const METRICS_TOL: f64 = 1e-12;
const SUITE_BUDGET: Duration = Duration::from_secs(60);

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const MIN_ACCURACY: f64 = 0.85;
const MIN_OPEN_F1: f64 = 0.6;
const MAX_COLLAPSED_OPEN_RECALL: f64 = 0.01;
const PSEUDO_DRAWS_PER_SEED: usize = 200;
const MIN_PSEUDO_OPEN_RATE: f64 = 0.9;
const EXPERIMENT_BUDGET: Duration = Duration::from_secs(600);
const SWEEP_SEED: u64 = 0;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        if !pass {
            self.failures += 1;
        }
        println!("{} {id}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn soften_invariants() -> (bool, String) {
    let mut r = rng::stream(1, "acceptance.soften");
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = r.random_range(1..=20);
        let gold = r.random_range(1..=k);
        let xi = r.random_range(0.0..=0.49);
        let p = soften(gold, k, xi).unwrap().probs;
        let off: f64 = (1..=k).filter(|&c| c != gold).map(|c| p[c - 1].abs()).sum();
        let err = (p.sum() - 1.0).abs().max((p[k] - xi).abs()).max((p[gold - 1] - (1.0 - xi)).abs()).max(off);
        worst = worst.max(err);
    }
    (worst <= SOFTEN_TOL, format!("10000 random draws, max error {worst:.1e} (tol {SOFTEN_TOL:.0e})"))
}

fn kl_identities() -> (bool, String) {
    let mut r = rng::stream(2, "acceptance.kl");
    let (mut self_kl, mut vs_ce, mut grad_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let k = r.random_range(1..=10);
        let gold = r.random_range(1..=k);
        let xi = r.random_range(0.01..=0.49);
        let p = soften(gold, k, xi).unwrap();
        // Zero entries of p get a large negative logit; their mass is below e^-60.
        let own = p.probs.mapv(|v| if v > 0.0 { v.ln() } else { -60.0 }).insert_axis(Axis(0));
        self_kl = self_kl.max(kl_loss(&[p.clone()], &own).unwrap().abs());

        let logits = Array2::from_shape_fn((1, k + 1), |_| r.random_range(-4.0..4.0));
        let one_hot = soften(gold, k, 0.0).unwrap();
        let (ce, _) = cross_entropy_with_grad(&logits, &[gold], k + 1).unwrap();
        vs_ce = vs_ce.max((kl_loss(&[one_hot], &logits).unwrap() - ce).abs());

        let (_, grad) = kl_loss_with_grad(&[p.clone()], &logits).unwrap();
        let expected = softmax(logits.row(0)) - &p.probs;
        let h = 1e-6;
        for c in 0..=k {
            let mut plus = logits.clone();
            plus[[0, c]] += h;
            let mut minus = logits.clone();
            minus[[0, c]] -= h;
            let fd = (kl_loss(&[p.clone()], &plus).unwrap() - kl_loss(&[p.clone()], &minus).unwrap()) / (2.0 * h);
            grad_err = grad_err.max((fd - grad[[0, c]]).abs()).max((expected[c] - grad[[0, c]]).abs());
        }
    }
    (
        self_kl <= KL_TOL && vs_ce <= KL_TOL && grad_err <= KL_GRAD_TOL,
        format!("KL(p, log p) {self_kl:.1e}, |KL - CE| at xi=0 {vs_ce:.1e} (tol {KL_TOL:.0e}); gradient {grad_err:.1e} (tol {KL_GRAD_TOL:.0e})"),
    )
}

fn mixup_boundaries() -> (bool, String) {
    let model = EncoderModel::new(EncoderConfig::desk(30), 3, 5).unwrap();
    let n = model.num_layers() - 1;
    let pairs: [(&[u32], &[u32]); 3] = [(&[3, 4, 5], &[6, 7, 8]), (&[9, 10], &[11, 12]), (&[13, 14, 15, 16], &[17, 18, 19, 20])];
    let mut exact = true;
    for (a, b) in pairs {
        let ha = model.forward_layers(&model.embed(a).unwrap(), 0, n).unwrap();
        let hb = model.forward_layers(&model.embed(b).unwrap(), 0, n).unwrap();
        let za = model.represent(&[a]).unwrap().row(0).to_owned();
        let zb = model.represent(&[b]).unwrap().row(0).to_owned();
        exact &= mixup_forward(&model, &ha, &hb, 1.0, n).unwrap() == za;
        exact &= mixup_forward(&model, &ha, &hb, 0.0, n).unwrap() == zb;
    }

    let mut r = rng::stream(3, "acceptance.beta");
    let draws: Vec<f64> = (0..BETA_DRAWS).map(|_| sample_lambda(2.0, &mut r).unwrap()).collect();
    let m = mean(draws.iter().copied());
    let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / BETA_DRAWS as f64;
    let moments = (m - 0.5).abs() <= BETA_MEAN_TOL && (var - 0.05).abs() <= BETA_VAR_TOL;

    let mut r = rng::stream(4, "acceptance.pairs");
    let mut filtered = true;
    for _ in 0..5_000 {
        let len = r.random_range(1..40);
        let classes = r.random_range(1..5);
        let labels: Vec<usize> = (0..len).map(|_| r.random_range(1..=classes)).collect();
        filtered &= pair_by_shuffle(&labels, &mut r).pairs.iter().all(|&(i, j)| labels[i] != labels[j]);
    }
    (
        exact && moments && filtered,
        format!(
            "lambda 1/0 identities exact: {exact}; Beta(2,2) mean {m:.4} (0.5 +- {BETA_MEAN_TOL}), variance {var:.4} (0.05 +- {BETA_VAR_TOL}); same-class pairs filtered in 5000 batches: {filtered}"
        ),
    )
}

fn layer_composition() -> (bool, String) {
    let model = EncoderModel::new(EncoderConfig::desk(30), 3, 6).unwrap();
    let t = model.num_layers();
    let batch: [&[u32]; 3] = [&[3, 4, 5, 6], &[7, 8], &[9, 10, 11, 12, 13, 14]];
    let h0 = model.embed_batch(&batch).unwrap();
    let full = model.forward_layers(&h0, 0, t).unwrap();
    let exact = (0..=t).all(|n| {
        let mid = model.forward_layers(&h0, 0, n).unwrap();
        model.forward_layers(&mid, n, t).unwrap() == full
    });
    (exact, format!("split at every n in 0..={t} equals the full pass bit for bit: {exact}"))
}

fn relative_gradient_errors(stage: Stage, cfg: &TrainConfig, seed: u64) -> f64 {
    let model = common::tiny_model(3, 11);
    let ids: [&[u32]; 2] = [&[3, 4, 5, 6], &[7, 8, 9]];
    let labels = [1, 2];
    let loss = |m: &EncoderModel| {
        let mut r = rng::stream(seed, "mixup");
        batch_gradients(m, &ids, &labels, cfg, stage, &mut r).unwrap().0.total
    };
    let mut r = rng::stream(seed, "mixup");
    let (_, grads) = batch_gradients(&model, &ids, &labels, cfg, stage, &mut r).unwrap();
    let mut worst = 0.0f64;
    for (t, g) in grads.tensors().iter().enumerate() {
        let analytic = g.tensor.values().to_vec();
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                let mut plus = model.clone();
                plus.params_mut().tensors_mut()[t].tensor.values_mut()[i] += FD_STEP;
                let mut minus = model.clone();
                minus.params_mut().tensors_mut()[t].tensor.values_mut()[i] -= FD_STEP;
                (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = numeric.iter().zip(&analytic).map(|(a, b)| a - b).collect();
        let scale = norm(&numeric).max(norm(&analytic));
        worst = worst.max(if scale < 1e-10 { norm(&diff) } else { norm(&diff) / scale });
    }
    worst
}

fn encoder_gradients() -> (bool, String) {
    let mix_seed = (0..100)
        .find(|&s| {
            let mut r = rng::stream(s, "mixup");
            !open_intent::mixup::sample_mixup_batch(&[1, 2], 2.0, &mut r).unwrap().is_empty()
        })
        .unwrap();
    let pre = relative_gradient_errors(Stage::Pretrain, &TrainConfig::default(), 0);
    let cfg = TrainConfig {
        n_mix: Some(1),
        ..TrainConfig::default()
    };
    let open = relative_gradient_errors(Stage::Open, &cfg, mix_seed);
    (
        pre <= FD_REL_TOL && open <= FD_REL_TOL,
        format!("T=2 H=8 encoder, worst relative error per tensor: pretraining {pre:.1e}, soft labels + mixup {open:.1e} (tol {FD_REL_TOL:.0e})"),
    )
}

fn checkpoint_prefix() -> (bool, String) {
    let model = EncoderModel::new(EncoderConfig::desk(30), 4, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let batch: [&[u32]; 2] = [&[3, 4, 5], &[6, 7, 8, 9, 10]];
    let z = loaded.represent(&batch).unwrap();
    let open = loaded.classify(&z, 5).unwrap();
    let known = loaded.classify(&z, 4).unwrap();
    let prefix = known == open.slice(s![.., ..4]);
    let same = loaded.logits(&batch).unwrap() == model.logits(&batch).unwrap();
    (prefix && same, format!("K-way logits are the prefix of (K+1)-way after reload: {prefix}; logits unchanged: {same}"))
}

fn oracle_f1(preds: &[usize], golds: &[usize], k: usize) -> (f64, Vec<f64>) {
    let f1: Vec<f64> = (1..=k + 1)
        .map(|c| {
            let count = |f: &dyn Fn(usize, usize) -> bool| preds.iter().zip(golds).filter(|&(&p, &g)| f(p, g)).count() as f64;
            let tp = count(&|p, g| p == c && g == c);
            let fp = count(&|p, g| p == c && g != c);
            let fneg = count(&|p, g| p != c && g == c);
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            }
        })
        .collect();
    let acc = preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / golds.len() as f64;
    (acc, f1)
}

fn metrics_oracle() -> (bool, String) {
    let mut r = rng::stream(5, "acceptance.metrics");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = r.random_range(1..=6);
        let len = r.random_range(1..=60);
        let golds: Vec<usize> = (0..len).map(|_| r.random_range(1..=k + 1)).collect();
        let preds: Vec<usize> = (0..len).map(|_| r.random_range(1..=k + 1)).collect();
        let m = compute_metrics(&preds, &golds, k).unwrap();
        let (acc, f1) = oracle_f1(&preds, &golds, k);
        let errs = [
            m.accuracy - acc,
            m.macro_f1_all - mean(f1.iter().copied()),
            m.macro_f1_known - mean(f1[..k].iter().copied()),
            m.f1_open - f1[k],
        ];
        worst = errs.iter().chain(m.per_class.iter().zip(&f1).map(|(c, o)| c.f1 - o).collect::<Vec<_>>().iter()).fold(worst, |w, e| w.max(e.abs()));
    }
    let worked = compute_metrics(&[1, 2, 2, 3], &[1, 1, 2, 3], 2).unwrap();
    let exact = worked.macro_f1_all == (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0 && (worked.macro_f1_all - 7.0 / 9.0).abs() < 1e-15;
    (
        worst <= METRICS_TOL && exact,
        format!("1000 random instances, max deviation {worst:.1e} (tol {METRICS_TOL:.0e}); K=2 example macro F1 {:.15} = 7/9: {exact}", worked.macro_f1_all),
    )
}

struct SeedResult {
    slmm_accuracy: f64,
    slmm_open_f1: f64,
    msp_accuracy: f64,
    msp_open_f1: f64,
    collapsed_open_recall: f64,
    no_pretrain_accuracy: f64,
    pseudo_open: usize,
}

/// Fraction of fresh pseudo samples (different-class training pairs mixed at
/// layer n with Beta(alpha, alpha) weights) that the model assigns to K+1.
fn pseudo_open_count(model: &EncoderModel, prepared: &pipeline::Prepared, cfg: &TrainConfig, seed: u64) -> usize {
    let n = cfg.n_mix.unwrap_or(model.num_layers() - 1);
    let k = model.num_known();
    let train = &prepared.data.train;
    let mut r = rng::stream(seed, "acceptance.pseudo");
    let mut hits = 0;
    for _ in 0..PSEUDO_DRAWS_PER_SEED {
        let (i, j) = loop {
            let i = r.random_range(0..train.len());
            let j = r.random_range(0..train.len());
            if train.labels[i] != train.labels[j] {
                break (i, j);
            }
        };
        let lambda = sample_lambda(cfg.alpha, &mut r).unwrap();
        let h = |x: usize| model.forward_layers(&model.embed(&train.ids[x]).unwrap(), 0, n).unwrap();
        let z = mixup_forward(model, &h(i), &h(j), lambda, n).unwrap();
        let logits = model.classify(&z.insert_axis(Axis(0)), k + 1).unwrap();
        if predict_from_logits(logits.row(0)) == k + 1 {
            hits += 1;
        }
    }
    hits
}

fn desk_seed(seed: u64) -> SeedResult {
    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let bundle = pipeline::synthetic_bundle(&synth, 0.5).unwrap();
    let mut settings = ExperimentSettings::default();
    settings.train.seed = seed;
    let prepared = pipeline::prepare(&bundle, settings.model.min_count).unwrap();
    let (pretrained, report) = pipeline::pretrained_model(&prepared, &settings).unwrap();
    let start = Some((&pretrained, &report));

    let msp = pipeline::msp_metrics(&bundle, &pretrained, &prepared.test, 0.5, settings.train.batch_size).unwrap();
    let full = pipeline::finish_experiment(&bundle, &prepared, &settings, start).unwrap();
    let pseudo_open = pseudo_open_count(&full.model, &prepared, &settings.train, seed);
    let collapsed = pipeline::finish_experiment(&bundle, &prepared, &Variant::WithoutSlMm.apply(&settings), start).unwrap();
    let scratch = pipeline::finish_experiment(&bundle, &prepared, &Variant::WithoutPretraining.apply(&settings), None).unwrap();

    let r = SeedResult {
        slmm_accuracy: full.metrics.accuracy,
        slmm_open_f1: full.metrics.f1_open,
        msp_accuracy: msp.accuracy,
        msp_open_f1: msp.f1_open,
        collapsed_open_recall: collapsed.metrics.recall_open,
        no_pretrain_accuracy: scratch.metrics.accuracy,
        pseudo_open,
    };
    println!(
        "  seed {seed}: SLMM acc {:.3} open-F1 {:.3} | MSP acc {:.3} open-F1 {:.3} | w/o SL&MM open-recall {:.3} | w/o pretraining acc {:.3} | pseudo->open {}/{}",
        r.slmm_accuracy, r.slmm_open_f1, r.msp_accuracy, r.msp_open_f1, r.collapsed_open_recall, r.no_pretrain_accuracy, r.pseudo_open, PSEUDO_DRAWS_PER_SEED
    );
    r
}

fn sweep(param: SweepParam) -> Result<Vec<SweepRow>, open_intent::Error> {
    let synth = SynthConfig {
        seed: SWEEP_SEED,
        ..SynthConfig::default()
    };
    let bundle = pipeline::synthetic_bundle(&synth, 0.5)?;
    let mut settings = ExperimentSettings::default();
    settings.train.seed = SWEEP_SEED;
    let grid = param.default_grid(settings.model.num_layers);
    pipeline::sweep(&bundle, &settings, param, &grid)
}

fn cli_metrics(root: &Path) -> Result<Vec<u8>, Box<dyn std::error::Error>> {
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    run_from_args(["open-intent", "synth", "--seed", "0", "--out", &p("syn")])?;
    let corpus = format!("{}/corpus.tsv", p("syn"));
    run_from_args(["open-intent", "train", "--data", &corpus, "--known-ratio", "0.5", "--seed", "0", "--out", &p("model")])?;
    run_from_args(["open-intent", "eval", "--data", &corpus, "--known-ratio", "0.5", "--seed", "0", "--model", &p("model"), "--out", &p("eval")])?;
    Ok(std::fs::read(root.join("eval").join("metrics.json"))?)
}

fn main() {
    let mut report = Report { failures: 0 };

    let suite_start = Instant::now();
    let checks: [(&str, fn() -> (bool, String)); 7] = [
        ("1.soft-label-invariants", soften_invariants),
        ("1.kl-identities", kl_identities),
        ("1.mixup-boundaries", mixup_boundaries),
        ("1.encoder-layer-composition", layer_composition),
        ("1.encoder-finite-difference-gradients", encoder_gradients),
        ("1.encoder-checkpoint-prefix", checkpoint_prefix),
        ("1.metrics-oracle", metrics_oracle),
    ];
    for (id, f) in checks {
        let (pass, detail) = f();
        report.check(id, pass, detail);
    }
    let suite = suite_start.elapsed();
    report.check(
        "1.suite-runtime",
        suite < SUITE_BUDGET,
        format!("{:.1}s (budget {}s)", suite.as_secs_f64(), SUITE_BUDGET.as_secs()),
    );

    let desk_start = Instant::now();
    let results: Vec<SeedResult> = SEEDS.iter().map(|&s| desk_seed(s)).collect();
    let desk = desk_start.elapsed();
    let avg = |f: fn(&SeedResult) -> f64| mean(results.iter().map(f));
    let (acc, f1) = (avg(|r| r.slmm_accuracy), avg(|r| r.slmm_open_f1));
    let (msp_acc, msp_f1) = (avg(|r| r.msp_accuracy), avg(|r| r.msp_open_f1));
    report.check(
        "2.slmm-accuracy-and-open-f1",
        acc >= MIN_ACCURACY && f1 >= MIN_OPEN_F1,
        format!("mean accuracy {acc:.4} (>= {MIN_ACCURACY}), mean open F1 {f1:.4} (>= {MIN_OPEN_F1}) over {} seeds", SEEDS.len()),
    );
    report.check(
        "2.slmm-beats-msp",
        acc > msp_acc && f1 > msp_f1,
        format!("accuracy {acc:.4} vs MSP {msp_acc:.4}; open F1 {f1:.4} vs MSP {msp_f1:.4}"),
    );
    let worst_recall = results.iter().map(|r| r.collapsed_open_recall).fold(0.0, f64::max);
    report.check(
        "2.without-sl-mm-collapses",
        worst_recall <= MAX_COLLAPSED_OPEN_RECALL,
        format!("largest open recall over seeds {worst_recall:.4} (<= {MAX_COLLAPSED_OPEN_RECALL})"),
    );
    let scratch = avg(|r| r.no_pretrain_accuracy);
    report.check(
        "2.without-pretraining-underperforms",
        scratch < acc,
        format!("mean accuracy {scratch:.4} without pretraining vs {acc:.4}"),
    );
    let pseudo: usize = results.iter().map(|r| r.pseudo_open).sum();
    let rate = pseudo as f64 / (PSEUDO_DRAWS_PER_SEED * SEEDS.len()) as f64;
    report.check(
        "2.pseudo-samples-predicted-open",
        rate >= MIN_PSEUDO_OPEN_RATE,
        format!("{pseudo}/{} fresh mixup samples assigned to K+1 ({rate:.3}, >= {MIN_PSEUDO_OPEN_RATE})", PSEUDO_DRAWS_PER_SEED * SEEDS.len()),
    );
    report.check(
        "2.runtime",
        desk <= EXPERIMENT_BUDGET,
        format!("{:.1}s (budget {}s)", desk.as_secs_f64(), EXPERIMENT_BUDGET.as_secs()),
    );

    match sweep(SweepParam::Xi) {
        Ok(rows) => {
            let accs: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.value, r.metrics.accuracy)).collect();
            let best = rows.iter().map(|r| r.metrics.accuracy).fold(f64::MIN, f64::max);
            let at_zero = rows.iter().find(|r| r.value == 0.0).map(|r| r.metrics.accuracy);
            report.check(
                "3.xi-sweep-zero-below-best",
                rows.len() == 7 && at_zero.is_some_and(|a| a < best),
                format!("accuracy by xi [{}]", accs.join(" ")),
            );
        }
        Err(e) => report.check("3.xi-sweep-zero-below-best", false, format!("sweep failed: {e}")),
    }
    match sweep(SweepParam::Mu) {
        Ok(rows) => {
            let f1s: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.value, r.metrics.f1_open)).collect();
            let at = |v: f64| rows.iter().find(|r| (r.value - v).abs() < 1e-12).map(|r| r.metrics.f1_open);
            let pass = rows.len() == 5 && matches!((at(0.1), at(0.9)), (Some(lo), Some(hi)) if lo >= hi);
            report.check("3.mu-sweep-open-f1-endpoints", pass, format!("open F1 by mu [{}]", f1s.join(" ")));
        }
        Err(e) => report.check("3.mu-sweep-open-f1-endpoints", false, format!("sweep failed: {e}")),
    }

    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (cli_metrics(dirs.0.path()), cli_metrics(dirs.1.path())) {
        (Ok(a), Ok(b)) => report.check(
            "4.determinism",
            a == b,
            format!("metrics.json from two synth/train/eval runs with seed 0: {} bytes, identical: {}", a.len(), a == b),
        ),
        (a, b) => report.check(
            "4.determinism",
            false,
            format!("run failed: {:?} / {:?}", a.err().map(|e| e.to_string()), b.err().map(|e| e.to_string())),
        ),
    }

    if report.failures > 0 {
        println!("{} criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
