//! End-to-end acceptance run. Every criterion is executed in order, reported
//! on one line, and the test fails if any of them fails.
//!
//! Criterion 7 trains two full-width networks for 15 epochs and dominates the
//! runtime (about two hours on a single core).

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fragnet::arch::{estimate_flops, make_grid, Network, NetworkConfig, LEVELS};
use fragnet::checkpoint::Checkpoint;
use fragnet::data::WordSet;
use fragnet::eval::metrics::{average_precision, page_identify, rank_by_score, retrieval_eval, top_k_hit, Distance};
use fragnet::eval::{evaluate_pages, evaluate_retrieval, evaluate_words, heatmap, predict_word_probs};
use fragnet::optim::{word_loss, LrSchedule, TrainPlan};
use fragnet::train::Trainer;
use fragnet::{Mode, Tensor};
use fragnet_tensor::gradcheck::{all_coordinates, check_gradients, GradCheckReport, DEFAULT_FLOOR, DEFAULT_STEP};
use fragnet_tensor::ops::{self, Target, Window};
use rand::seq::SliceRandom;
use rand::Rng;

use common::{rng, synthetic};

type Outcome = Result<String, String>;

fn report(line: &str) {
    // bypasses the test harness capture so the lines land in the log
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

// ---------------------------------------------------------------- criterion 1

fn grad_ok(report: &GradCheckReport) -> bool {
    report.passes(1e-4, 0.99, 1e-3)
}

fn random_param(r: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::parameter(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn projection(r: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn op_check<F>(leaves: &[Tensor<f64>], mut loss: F) -> GradCheckReport
where
    F: FnMut() -> fragnet_tensor::Result<Tensor<f64>>,
{
    check_gradients(leaves, &all_coordinates(leaves), DEFAULT_STEP, DEFAULT_FLOOR, &mut loss).unwrap()
}

fn per_op_gradients() -> Vec<(&'static str, GradCheckReport)> {
    let mut r = rng(11);
    let mut out = Vec::new();
    let proj = |t: fragnet_tensor::Result<Tensor<f64>>, w: &Tensor<f64>| Ok(ops::sum(&ops::mul(&t?, w)?));

    let x = random_param(&mut r, &[2, 4, 5, 2]);
    let k = random_param(&mut r, &[2, 3, 3, 3]);
    let b = random_param(&mut r, &[3]);
    let w = projection(&mut r, &[2, 4, 5, 3]);
    out.push(("conv2d", op_check(&[x.clone(), k.clone(), b.clone()], || proj(ops::conv2d(&x, &k, &b), &w))));

    let xp = random_param(&mut r, &[2, 4, 6, 2]);
    let w = projection(&mut r, &[2, 2, 3, 2]);
    out.push(("maxpool", op_check(&[xp.clone()], || proj(ops::maxpool2x2(&xp), &w))));

    let gamma = random_param(&mut r, &[2]);
    let beta = random_param(&mut r, &[2]);
    let (rm, rv) = (Tensor::full([2], 0.2), Tensor::full([2], 0.7));
    let w = projection(&mut r, &[2, 4, 5, 2]);
    for (name, mode) in [("batchnorm/train", Mode::Train), ("batchnorm/eval", Mode::Eval)] {
        let leaves = [x.clone(), gamma.clone(), beta.clone()];
        out.push((name, op_check(&leaves, || proj(ops::batchnorm(&x, &gamma, &beta, &rm, &rv, mode), &w))));
    }

    // keep relu inputs away from the kink
    let data: Vec<f64> = (0..30)
        .map(|_| {
            let v: f64 = r.random_range(0.05..1.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let xr = Tensor::parameter([30], data).unwrap();
    let w = projection(&mut r, &[30]);
    out.push(("relu", op_check(&[xr.clone()], || proj(Ok(ops::relu(&xr)), &w))));

    let a = random_param(&mut r, &[2, 3, 4, 2]);
    let c = random_param(&mut r, &[2, 3, 4, 1]);
    let w = projection(&mut r, &[2, 3, 4, 3]);
    out.push(("concat", op_check(&[a.clone(), c.clone()], || proj(ops::concat_channels(&a, &c), &w))));

    let wins = [Window::new(0, 1, 2, 2), Window::new(1, 2, 2, 2)];
    let w = projection(&mut r, &[4, 2, 2, 2]);
    out.push(("crop", op_check(&[a.clone()], || proj(ops::crop_many(&a, &wins), &w))));

    let w = projection(&mut r, &[2, 2]);
    out.push(("global_avg_pool", op_check(&[a.clone()], || proj(ops::global_avg_pool(&a), &w))));

    let xl = random_param(&mut r, &[3, 5]);
    let wl = random_param(&mut r, &[5, 4]);
    let bl = random_param(&mut r, &[4]);
    let w = projection(&mut r, &[3, 4]);
    out.push(("linear", op_check(&[xl.clone(), wl.clone(), bl.clone()], || proj(ops::linear(&xl, &wl, &bl), &w))));

    let logits = random_param(&mut r, &[4, 5]);
    let targets = [1, 0, 4, 4];
    out.push((
        "softmax_cross_entropy",
        op_check(&[logits.clone()], || {
            let (loss, _) = ops::softmax_cross_entropy(&logits, Target::Classes(&targets))?;
            Ok(ops::sum(&loss))
        }),
    ));
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut pooled: Vec<f64> = Vec::new();
    let mut notes = Vec::new();
    for (name, rep) in per_op_gradients() {
        pooled.extend(rep.entries.iter().map(|e| e.rel_error));
        if !grad_ok(&rep) {
            notes.push(format!("{name} max rel {:.2e}", rep.max_rel_error()));
        }
    }
    let op_count = pooled.len();

    // one synthetic word image through the full network
    let config = NetworkConfig::fragnet(16, 4);
    let (words, _) = synthetic(4, 1, 1, 13, &config);
    let (image, labels) = words.batch::<f64>(&[2]);
    let net = Network::<f64>::new(config.clone(), 3).unwrap();
    // the classifier starts at zero; probe a generic point instead
    let mut r = rng(12);
    {
        let w = net.params().get("classifier.weight").unwrap();
        let std = (2.0 / config.classifier_input_dim() as f64).sqrt();
        for v in w.data_mut().iter_mut() {
            *v = r.random_range(-1.0..1.0) * std * 3f64.sqrt();
        }
    }
    let named: Vec<(String, Tensor<f64>)> = net.params().trainable().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let leaves: Vec<Tensor<f64>> = named.iter().map(|(_, t)| t.clone()).collect();
    // one coordinate in each of 20 distinct tensors, spread over the network
    let mut tensors: Vec<usize> = (0..leaves.len()).collect();
    tensors.shuffle(&mut r);
    tensors.truncate(20);
    tensors.sort();
    let coords: Vec<(usize, usize)> = tensors.into_iter().map(|t| (t, r.random_range(0..leaves[t].len()))).collect();
    let loss = || {
        let out = net.forward(&image, Mode::Train).unwrap();
        Ok(word_loss(&out.logits, out.fragments, &labels).unwrap())
    };
    let rep = check_gradients(&leaves, &coords, DEFAULT_STEP, DEFAULT_FLOOR, loss).unwrap();
    // same coordinates with a smaller step, reported for the worst one only:
    // separates gradient bugs from ReLU / max-pool kinks crossed by the step
    let fine = check_gradients(&leaves, &coords, 1e-6, DEFAULT_FLOOR, loss).unwrap();
    pooled.extend(rep.entries.iter().map(|e| e.rel_error));
    let worst = rep.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
    if worst.rel_error >= 1e-4 {
        notes.push(format!(
            "worst FragNet-16 coordinate {}[{}]: analytic {:.4e}, numeric {:.4e} (step 1e-6: {:.4e})",
            named[worst.tensor].0,
            worst.index,
            worst.analytic,
            worst.numeric,
            fine.entries.iter().find(|e| (e.tensor, e.index) == (worst.tensor, worst.index)).unwrap().numeric
        ));
    }

    let below = pooled.iter().filter(|e| **e < 1e-4).count() as f64 / pooled.len() as f64;
    let max = pooled.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} coordinates ({op_count} op, {} FragNet-16): {:.2}% < 1e-4, max rel {:.2e}; FragNet-16 max rel {:.2e}; {secs:.0}s{}",
        pooled.len(),
        rep.entries.len(),
        100.0 * below,
        max,
        rep.max_rel_error(),
        if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
    );
    ensure(below >= 0.99 && max < 1e-3 && secs < 300.0, detail)
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut r = rng(21);
    let mut checked = 0;
    for q in [16, 32, 64] {
        let config = NetworkConfig::fragnet(q, 4);
        let grid = make_grid(&config).unwrap();
        for level in 1..LEVELS - 1 {
            let (h, w) = config.level_size(level);
            let t = common::random_tensor::<f64>(&mut r, &[2, h, w, 3]);
            let pooled = ops::maxpool2x2(&t).unwrap();
            for i in 0..grid.len() {
                let chain = grid.chain(i);
                let a = ops::crop(&pooled, chain[level + 1].window()).unwrap().to_vec();
                let b = ops::maxpool2x2(&ops::crop(&t, chain[level].window()).unwrap()).unwrap().to_vec();
                if a != b {
                    return Err(format!("q={q} fragment {i} level {level} differs"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} crop/pool pairs identical"))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    for (q, expected) in [(64, 5), (32, 21), (16, 32)] {
        let grid = make_grid(&NetworkConfig::fragnet(q, 4)).unwrap();
        let ours: BTreeSet<(usize, usize, usize, usize)> = grid.specs().iter().map(|s| (s.x, s.y, s.h, s.w)).collect();
        let mut oracle = BTreeSet::new();
        for x in 0..64 {
            for y in 0..128 {
                if x % 16 == 0 && y % 16 == 0 && x + q <= 64 && y + q <= 128 {
                    oracle.insert((x, y, q, q));
                }
            }
        }
        if grid.len() != expected || ours != oracle {
            return Err(format!("q={q}: {} fragments, oracle {}", grid.len(), oracle.len()));
        }
        parts.push(format!("q={q}:{}", grid.len()));
    }
    Ok(parts.join(" "))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let mut r = rng(41);
    let image = common::random_tensor::<f32>(&mut r, &[2, 64, 128, 1]);
    let net = Network::<f32>::new(NetworkConfig::fragnet(64, 7), 1).unwrap();
    let shapes: Vec<Vec<usize>> = net.pyramid_forward(&image, Mode::Eval).unwrap().iter().map(|g| g.shape().to_vec()).collect();
    let expected = vec![vec![2, 64, 128, 64], vec![2, 32, 64, 128], vec![2, 16, 32, 256], vec![2, 8, 16, 512]];
    if shapes != expected {
        return Err(format!("pyramid shapes {shapes:?}"));
    }
    let out = net.forward(&image, Mode::Eval).unwrap();
    if out.features.shape() != [10, 1024] {
        return Err(format!("FragNet features {:?}", out.features.shape()));
    }
    let word = net.word_forward(&image, Mode::Eval).unwrap();
    let wordimg = Network::<f32>::new(NetworkConfig::wordimgnet(7), 1).unwrap();
    let wout = wordimg.forward(&image, Mode::Eval).unwrap();
    if wout.features.shape() != [2, 512] {
        return Err(format!("WordImgNet features {:?}", wout.features.shape()));
    }
    let wword = wordimg.word_forward(&image, Mode::Eval).unwrap();
    let mut worst = 0.0f64;
    for probs in [&word.word_probs, &wword.word_probs] {
        for row in probs.to_vec().chunks(7) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    ensure(worst <= 1e-6, format!("shapes match, max |row sum - 1| = {worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let mut totals = Vec::new();
    for config in [
        NetworkConfig::fragnet(32, 10),
        NetworkConfig::fragnet(64, 10),
        NetworkConfig::fragnet(16, 10),
        NetworkConfig::wordimgnet(10),
    ] {
        let rep = estimate_flops(&config).unwrap();
        for layer in &rep.layers {
            let hand = layer.in_channels as u64 * layer.height as u64 * layer.width as u64 * 9 * layer.out_channels as u64;
            if layer.per_call != hand || layer.total != hand * layer.repeats as u64 {
                return Err(format!("{} {}: {} vs {hand}", rep.label, layer.name, layer.per_call));
            }
        }
        let sum: u64 = rep.layers.iter().map(|l| l.total).sum();
        if sum != rep.total {
            return Err(format!("{} total {} vs layer sum {sum}", rep.label, rep.total));
        }
        totals.push((rep.label.clone(), rep.total));
    }
    let ordered = totals.windows(2).all(|w| w[0].1 > w[1].1);
    let text: Vec<String> = totals.iter().map(|(l, t)| format!("{l} {:.2}G", *t as f64 / 1e9)).collect();
    ensure(ordered, text.join(" > "))
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let config = NetworkConfig::fragnet(64, 10);
    // one word per writer: ten words, ten classes
    let (train, _) = synthetic(10, 1, 1, 61, &config);
    let net = Network::<f32>::new(config.clone(), 62).unwrap();
    let plan = TrainPlan {
        epochs: 200,
        batch_size: 10,
        schedule: LrSchedule::constant(1e-4).unwrap(),
        seed: 63,
        checkpoint_every: 0,
    };
    let mut trainer = Trainer::new(net, plan).unwrap();
    let all: Vec<usize> = (0..train.len()).collect();
    let (images, labels) = train.batch::<f32>(&all);
    let fragments = trainer.network.fragment_count() as f64;
    let first = trainer.train_step(&images, &labels, 1e-4).unwrap() / fragments;
    let ln_m = (10f64).ln();
    let init_ok = (first - ln_m).abs() <= 0.1 * ln_m;
    let mut reached = None;
    for step in 1..=200u64 {
        if step > 1 {
            trainer.train_step(&images, &labels, 1e-4).unwrap();
        }
        if step % 5 == 0 {
            let probs = predict_word_probs(&trainer.network, &train, 10).unwrap();
            if evaluate_words(&probs, &train).unwrap().top1 >= 100.0 {
                reached = Some(step);
                break;
            }
        }
    }
    let detail = format!(
        "initial loss/fragment {first:.4} (ln 10 = {ln_m:.4}), 100% train Top-1 {}",
        match reached {
            Some(s) => format!("at step {s}"),
            None => "not reached in 200 steps".into(),
        }
    );
    ensure(init_ok && reached.is_some(), detail)
}

// ------------------------------------------------------------ criteria 7 and 8

struct Trained {
    label: String,
    word_top1: f64,
    page_top1: f64,
    map: f64,
}

fn train_and_evaluate(config: NetworkConfig, train: &WordSet, test: &WordSet) -> Trained {
    let plan = TrainPlan {
        epochs: 15,
        batch_size: 10,
        schedule: LrSchedule::paper(),
        seed: 71,
        checkpoint_every: 0,
    };
    let label = config.label();
    let mut trainer = Trainer::new(Network::<f32>::new(config, 72).unwrap(), plan).unwrap();
    let start = Instant::now();
    trainer
        .fit(train, None, |_, rec| {
            report(&format!("  {label} epoch {} loss {:.4} ({:.0}s)", rec.epoch, rec.loss, start.elapsed().as_secs_f64()));
            Ok(())
        })
        .unwrap();
    let probs = predict_word_probs(&trainer.network, test, 10).unwrap();
    Trained {
        label,
        word_top1: evaluate_words(&probs, test).unwrap().top1,
        page_top1: evaluate_pages(&probs, test).unwrap().top1,
        map: evaluate_retrieval(&probs, test, Distance::Euclidean).unwrap().map.unwrap(),
    }
}

fn synthetic_runs() -> (Vec<Trained>, f64) {
    let start = Instant::now();
    let frag = NetworkConfig::fragnet(64, 10);
    let (train, test) = synthetic(10, 40, 10, 70, &frag);
    let runs = vec![
        train_and_evaluate(frag, &train, &test),
        train_and_evaluate(NetworkConfig::wordimgnet(10), &train, &test),
    ];
    (runs, start.elapsed().as_secs_f64())
}

fn criterion_7(runs: &[Trained], secs: f64) -> Outcome {
    // 45 minutes on 4 cores, scaled to the cores this machine has
    let budget = 45.0 * 60.0 * 4.0 / cores().min(4) as f64;
    let (frag, word) = (&runs[0], &runs[1]);
    let detail = format!(
        "{} Top-1 {:.1}% (>= 80), {} Top-1 {:.1}% (>= 60), {:.1} min on {} core(s), budget {:.0} min",
        frag.label,
        frag.word_top1,
        word.label,
        word.word_top1,
        secs / 60.0,
        cores(),
        budget / 60.0
    );
    ensure(frag.word_top1 >= 80.0 && word.word_top1 >= 60.0 && secs < budget, detail)
}

fn criterion_8(runs: &[Trained]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for run in runs {
        ok &= run.page_top1 >= run.word_top1;
        parts.push(format!("{} page {:.1}% vs word {:.1}%", run.label, run.page_top1, run.word_top1));
    }
    let soft = if runs[0].map >= runs[1].map { "holds" } else { "does not hold (soft)" };
    parts.push(format!("retrieval mAP {:.3} vs {:.3}, direction {soft}", runs[0].map, runs[1].map));
    ensure(ok, parts.join("; "))
}

// ---------------------------------------------------------------- criterion 9

fn oracle_ap(scores_by_distance: &[(f64, bool)]) -> Option<f64> {
    let total = scores_by_distance.iter().filter(|x| x.1).count();
    if total == 0 {
        return None;
    }
    // AP as the mean over relevant items of precision at their rank
    let mut sum = 0.0;
    for (i, item) in scores_by_distance.iter().enumerate() {
        if item.1 {
            let hits = scores_by_distance[..=i].iter().filter(|x| x.1).count();
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

fn criterion_9() -> Outcome {
    let mut r = rng(91);
    let mut worst = 0.0f64;
    for instance in 0..100 {
        let m = r.random_range(2..8);
        let scores: Vec<f64> = (0..m).map(|_| (r.random_range(0..5) as f64) / 4.0).collect();
        let label = r.random_range(0..m);
        // brute force: position of the label after a stable descending sort
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let rank = order.iter().position(|&c| c == label).unwrap();
        if rank_by_score(&scores, label) != rank {
            return Err(format!("instance {instance}: rank {} vs {rank}", rank_by_score(&scores, label)));
        }
        for k in [1, 5] {
            if top_k_hit(&scores, label, k) != (rank < k) {
                return Err(format!("instance {instance}: top-{k} disagrees"));
            }
        }

        let n = r.random_range(3..12);
        let dim = 3;
        let feats: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let res = retrieval_eval(&feats, &labels, Distance::Euclidean).unwrap();
        let mut aps = Vec::new();
        for q in 0..n {
            let mut others: Vec<(f64, bool)> = (0..n)
                .filter(|&i| i != q)
                .map(|i| {
                    let d: f64 = feats[q].iter().zip(&feats[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    (d, labels[i] == labels[q])
                })
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0));
            let expected = oracle_ap(&others);
            let relevant: Vec<bool> = others.iter().map(|x| x.1).collect();
            match (average_precision(&relevant), expected, res.average_precisions[q]) {
                (None, None, None) => {}
                (Some(a), Some(e), Some(g)) => {
                    worst = worst.max((a - e).abs()).max((g - e).abs());
                    aps.push(e);
                }
                other => return Err(format!("instance {instance} query {q}: {other:?}")),
            }
        }
        if !aps.is_empty() {
            let map = aps.iter().sum::<f64>() / aps.len() as f64;
            worst = worst.max((res.map - map).abs());
        }

        let words = r.random_range(1..6);
        let rows: Vec<Vec<f64>> = (0..words)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
        let page = page_identify(&refs).unwrap();
        for c in 0..m {
            let mean = rows.iter().map(|row| row[c]).sum::<f64>() / words as f64;
            worst = worst.max((page[c] - mean).abs());
        }
    }
    ensure(worst <= 1e-9, format!("100 instances, max deviation {worst:.1e}"))
}

// --------------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let config = common::narrow(NetworkConfig::fragnet(64, 4));
    let (train, test) = synthetic(4, 10, 5, 101, &config);
    let plan = TrainPlan {
        epochs: 3,
        batch_size: 5,
        schedule: LrSchedule::constant(1e-3).unwrap(),
        seed: 102,
        checkpoint_every: 0,
    };
    let run = || {
        let mut t = Trainer::new(Network::<f32>::new(config.clone(), 103).unwrap(), plan.clone()).unwrap();
        let log = t.fit(&train, None, |_, _| Ok(())).unwrap();
        (t, log)
    };
    let (trainer, a) = run();
    let (_, b) = run();
    let logs_equal = a.iter().map(|r| r.to_string()).collect::<Vec<_>>() == b.iter().map(|r| r.to_string()).collect::<Vec<_>>()
        && a.iter().zip(&b).all(|(x, y)| x.loss.to_bits() == y.loss.to_bits());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    Checkpoint::from_trainer(&trainer).save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().network::<f32>().unwrap();
    let before = predict_word_probs(&trainer.network, &test, 5).unwrap();
    let after = predict_word_probs(&restored, &test, 5).unwrap();
    let bitwise = before
        .iter()
        .flatten()
        .zip(after.iter().flatten())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(
        logs_equal && bitwise,
        format!("loss logs identical: {logs_equal}; restored evaluation bitwise equal: {bitwise}"),
    )
}

// --------------------------------------------------------------- criterion 11

fn criterion_11() -> Outcome {
    let mut worst = 0.0f64;
    for q in [16, 32, 64] {
        let config = NetworkConfig::fragnet(q, 5);
        let (train, _) = synthetic(5, 1, 1, 111, &config);
        let net = Network::<f64>::new(config, 112).unwrap();
        // give the classifier nonuniform outputs
        let mut r = rng(113);
        for v in net.params().get("classifier.weight").unwrap().data_mut().iter_mut() {
            *v = r.random_range(-0.2..0.2);
        }
        for i in 0..train.len() {
            let (image, _) = train.batch::<f64>(&[i]);
            let fragments = net.word_forward(&image, Mode::Eval).unwrap();
            for target in [0, 4] {
                let map = heatmap(&net, &image, Some(target)).unwrap();
                let oracle = fragments.fragment_probs.iter().map(|p| p.to_vec()[target]).sum::<f64>()
                    / fragments.fragment_probs.len() as f64;
                worst = worst.max((map.spatial_mean() - oracle).abs()).max((map.evidence - oracle).abs());
            }
        }
    }
    ensure(worst <= 1e-6, format!("max |spatial mean - fragment evidence| = {worst:.1e}"))
}

#[test]
fn acceptance_criteria() {
    // matrixmultiply reads this once, on first use
    std::env::set_var("MATMUL_NUM_THREADS", cores().to_string());
    let mut results: Vec<(usize, bool)> = Vec::new();
    let mut run = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (ok, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        report(&format!(
            "criterion {n}: {} [{:.0}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        ));
        results.push((n, ok));
    };

    run(1, &mut criterion_1);
    run(2, &mut criterion_2);
    run(3, &mut criterion_3);
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    run(6, &mut criterion_6);
    let trained = catch_unwind(synthetic_runs);
    match &trained {
        Ok((runs, secs)) => {
            run(7, &mut || criterion_7(runs, *secs));
            run(8, &mut || criterion_8(runs));
        }
        Err(_) => {
            run(7, &mut || Err("synthetic training panicked".into()));
            run(8, &mut || Err("synthetic training panicked".into()));
        }
    }
    run(9, &mut criterion_9);
    run(10, &mut criterion_10);
    run(11, &mut criterion_11);

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
