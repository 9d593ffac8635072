//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs every criterion by default; pass criterion numbers as arguments to run
//! a subset (`cargo test --test acceptance -- 1 7`).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use kinegen::analysis::{calibrate_affinities, features, flag_outliers, pca2, perplexity_of, tsne2, ProjectionMeta, TsneConfig};
use kinegen::classifier::{train_classifier, ClassifierConfig, EvalReport, Example, SequenceClassifier, Subset, Target, Task};
use kinegen::ingest::{differentiate, pad_class, segment, trim, velocity_norm, ChannelKind, RawRecording};
use kinegen::nn::{grad_check, Gradients, ParameterStore};
use kinegen::surrogate::{bell_profile, make_surrogate, BellShape, ClassStats, SurrogateConfig};
use kinegen::timegan::{MinMaxScaler, Role, TimeGanConfig, TimeGanNetworks};
use kinegen::{ClassLabel, Provenance, Trial, TrialSet};
use kinegen_cli::{commands, Context, RunConfig};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    check((a - b).abs() <= tol, format!("{what}: {a} vs {b} (tolerance {tol})"))
}

// ---------------------------------------------------------------------------
// 1. Formulas

fn scalar_norm(x: f64, y: f64, z: f64) -> f64 {
    x.hypot(y).hypot(z)
}

fn formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check(velocity_norm(&[3.0], &[4.0], &[0.0]).unwrap() == vec![5.0], "norm of (3,4,0)")?;
    check(velocity_norm(&[0.0], &[0.0], &[0.0]).unwrap() == vec![0.0], "norm of zero")?;
    let c: Vec<[f64; 3]> = (0..20).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let col = |k: usize| c.iter().map(|v| v[k]).collect::<Vec<_>>();
    for (got, v) in velocity_norm(&col(0), &col(1), &col(2)).unwrap().iter().zip(&c) {
        close(*got, scalar_norm(v[0], v[1], v[2]), 1e-12, "random norm")?;
    }

    let rate = 22.0;
    let positions = |f: &dyn Fn(f64) -> [f64; 3], n: usize| {
        RawRecording::new("r", rate, ChannelKind::Position, (0..n).map(|i| f(i as f64 / rate)).collect()).unwrap()
    };
    let still = differentiate(&positions(&|_| [0.3, -1.0, 2.0], 10)).unwrap();
    check(still.samples.iter().flatten().all(|&v| v == 0.0), "constant position must give zero velocity")?;
    let ramp = differentiate(&positions(&|t| [t, 0.0, 0.0], 12)).unwrap();
    for s in &ramp.samples {
        close(s[0], 1.0, 1e-12, "ramp velocity")?;
    }
    let quad = |t: f64| [0.7 * t * t - 0.2 * t, -1.3 * t * t, 0.4 * t];
    let rec = positions(&quad, 30);
    let vel = differentiate(&rec).unwrap();
    let h = 1.0 / rate;
    for (i, v) in vel.samples.iter().enumerate() {
        let p = &rec.samples;
        let (a, b, span) = if i == 0 { (1, 0, h) } else if i == p.len() - 1 { (i, i - 1, h) } else { (i + 1, i - 1, 2.0 * h) };
        for k in 0..3 {
            close(v[k], (p[a][k] - p[b][k]) / span, 1e-12, "quadratic stencil")?;
        }
    }

    let pulse = bell_profile(1.5, 1.0, rate, BellShape::new(2.0, 2.0));
    let mut stream = vec![0.0; 8];
    stream.extend(&pulse);
    stream.extend(vec![0.0; 8]);
    let peak_at = stream.iter().enumerate().fold(0, |best, (i, &v)| if v > stream[best] { i } else { best });
    let bound = 0.05 * stream[peak_at];
    let left = (0..peak_at).rev().find(|&i| stream[i] < bound).unwrap();
    let right = (peak_at..stream.len()).find(|&i| stream[i] < bound).unwrap();
    let spans = segment(&stream).unwrap();
    check(spans.len() == 1 && spans[0].start == left && spans[0].end == right, format!("single pulse spans {spans:?}, expected {left}..{right}"))?;
    let mut two = stream.clone();
    two.extend(vec![0.0; 10]);
    two.extend(&pulse);
    two.push(0.0);
    check(segment(&two).unwrap().len() == 2, "two separated pulses")?;
    check(segment(&[0.0; 30]).unwrap().is_empty(), "flat stream")?;

    let t3 = Trial::new("a", ClassLabel::W1_NC, vec![0.1, 0.2, 0.3], rate).unwrap();
    let t5 = Trial::new("b", ClassLabel::W1_NC, vec![0.1, 0.2, 0.3, 0.4, 0.5], rate).unwrap();
    let batch = pad_class(&[&t3, &t5]).unwrap();
    check(batch.length == 5 && batch.rows.row(0).to_vec() == vec![0.1, 0.2, 0.3, 0.0, 0.0], "padding {3,5}")?;
    let single = pad_class(&[&t3]).unwrap();
    check(single.length == 3 && single.rows.row(0).to_vec() == t3.v, "single trial is not padded")?;
    check(trim(&[0.0, 0.001, 0.5, 0.7, 0.002]).unwrap() == vec![0.5, 0.7], "trim example")?;
    check(trim(&[0.3, 0.1, 0.6]).unwrap() == vec![0.3, 0.1, 0.6], "trim identity")?;
    let sur = make_surrogate(&SurrogateConfig::default().with_count(25)).unwrap().trimmed().unwrap();
    for label in ClassLabel::ALL {
        let trials = sur.of_class(label);
        let b = pad_class(&trials).unwrap();
        for (row, t) in b.rows.rows().into_iter().zip(&trials) {
            check(trim(row.as_slice().unwrap()).unwrap() == t.v, format!("pad-then-trim on {}", t.trial_id))?;
        }
    }

    let f = features(&Trial::new("m", ClassLabel::W1_C, vec![0.2; 45], rate).unwrap()).unwrap();
    check(f.md == 2.0, format!("md of 45 samples: {}", f.md))?;
    let tri: Vec<f64> = (0..9).map(|i| 1.0 - (i as f64 - 4.0).abs() / 5.0).collect();
    let f = features(&Trial::new("t", ClassLabel::W1_C, tri, rate).unwrap()).unwrap();
    check(f.ad_md == 0.5 && f.pa == 1.0, "triangular profile")?;
    let f = features(&Trial::new("p", ClassLabel::W1_C, vec![0.9, 0.5, 0.2], rate).unwrap()).unwrap();
    check(f.ad_md == 0.0, "peak at first sample")?;

    let mut cfg = SurrogateConfig { noise_std: 0.0, ..SurrogateConfig::default() }.with_count(1);
    *cfg.stats_mut(ClassLabel::W1_NC) = ClassStats { count: 1, md_mean: 2.0, md_std: 0.0, pa_mean: 0.8, pa_std: 0.0 };
    let noiseless = make_surrogate(&cfg).unwrap().trimmed().unwrap();
    let t = noiseless.of_class(ClassLabel::W1_NC)[0];
    check(t.len() == 45 && features(t).unwrap().md == 2.0, format!("noiseless 2 s trial has {} samples", t.len()))?;
    let step = 1.0 / (t.len() - 1) as f64;
    close(features(t).unwrap().ad_md, 0.5, step, "symmetric surrogate ad_md")?;

    let s = MinMaxScaler::new(0.0, 2.0).unwrap();
    check(s.scale(&Array2::from_elem((1, 1), 1.0)).unwrap()[[0, 0]] == 0.5, "scaling 1 in [0, 2]")?;
    let data = Array2::from_shape_simple_fn((7, 11), || rng.random_range(-3.0..5.0));
    let fitted = MinMaxScaler::fit(&data).unwrap();
    let back = fitted.inverse_scale(&fitted.scale(&data).unwrap()).unwrap();
    for (a, b) in back.iter().zip(data.iter()) {
        close(*a, *b, 1e-12, "scaler round trip")?;
    }
    check(matches!(MinMaxScaler::fit(&Array2::from_elem((3, 3), 0.4)), Err(kinegen::Error::DegenerateData(_))), "constant batch")?;
    Ok("norm, differentiation, segmentation, padding, trimming, features and scaling examples hold".into())
}

// ---------------------------------------------------------------------------
// 2. Gradients

fn store_mut(nets: &mut TimeGanNetworks, role: Role) -> &mut ParameterStore {
    match role {
        Role::Embedder => &mut nets.embedder.store,
        Role::Recovery => &mut nets.recovery.store,
        Role::Generator => &mut nets.generator.store,
        Role::Supervisor => &mut nets.supervisor.store,
        Role::Discriminator => &mut nets.discriminator.store,
    }
}

fn role_loss(nets: &TimeGanNetworks, role: Role, x: &Array3<f64>, z: &Array3<f64>) -> (f64, Gradients) {
    match role {
        Role::Embedder => {
            let (l, g, _) = nets.refresh_loss(x.view(), 0.1).unwrap();
            (l, g)
        }
        Role::Recovery => {
            let (l, _, g) = nets.refresh_loss(x.view(), 0.1).unwrap();
            (l, g)
        }
        Role::Generator => {
            let (l, g, _) = nets.generator_loss(x.view(), z.view(), 1.0, 10.0).unwrap();
            (l, g)
        }
        Role::Supervisor => {
            let (l, _, g) = nets.generator_loss(x.view(), z.view(), 1.0, 10.0).unwrap();
            (l, g)
        }
        Role::Discriminator => nets.discriminator_loss(x.view(), z.view()).unwrap(),
    }
}

fn gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 1..=5u64 {
        let cfg = TimeGanConfig { hidden: 3, layers: 2, batch_size: 4, ..Default::default() };
        let nets = TimeGanNetworks::new(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array3::from_shape_simple_fn((6, 4, 1), || rng.random::<f64>());
        let z = Array3::from_shape_simple_fn((6, 4, 1), || rng.random::<f64>());
        for role in Role::ALL {
            let base = nets.all()[role as usize].store.clone();
            let report = grad_check(
                |s| {
                    let mut n = nets.clone();
                    *store_mut(&mut n, role) = s.clone();
                    role_loss(&n, role, &x, &z)
                },
                &base,
                1e-4,
            );
            check(report.passed(), format!("{role:?} seed {seed}: {:?}", report.failures().first()))?;
            worst = worst.max(report.entries.iter().map(|e| e.max_abs_error).fold(0.0, f64::max));
            checked += 1;
        }

        let ccfg = ClassifierConfig { hidden: 3, fc_hidden: 4, ..Default::default() };
        let model = SequenceClassifier::new(&ccfg, seed).unwrap();
        let seqs: Vec<Vec<f64>> = (0..4).map(|i| (0..3 + i).map(|_| rng.random::<f64>()).collect()).collect();
        let examples: Vec<Example> = seqs.iter().enumerate().map(|(i, v)| Example { v, class: i % 2 }).collect();
        let report = grad_check(
            |s| {
                let mut m = model.clone();
                m.store = s.clone();
                m.loss_and_grad(&examples).unwrap()
            },
            &model.store,
            1e-4,
        );
        check(report.passed(), format!("classifier seed {seed}: {:?}", report.failures().first()))?;
        worst = worst.max(report.entries.iter().map(|e| e.max_abs_error).fold(0.0, f64::max));
        checked += 1;
    }
    Ok(format!("{checked} network/seed pairs within 1e-4, largest absolute deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 3. Autoencoder memorization

fn memorization() -> Outcome {
    let cfg = TimeGanConfig { epochs: 500, ..Default::default() };
    let rows = Array2::from_elem((30, 24), 0.5);
    let mut nets = TimeGanNetworks::new(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let curve = nets.train_embedding(&rows, &cfg, &mut rng).map_err(|e| e.to_string())?;
    let first = curve.iter().position(|&l| l < 1e-3).ok_or_else(|| format!("final loss {:.3e}", curve.last().unwrap()))?;
    Ok(format!("reconstruction MSE below 1e-3 at epoch {}, final {:.2e}", first + 1, curve.last().unwrap()))
}

// ---------------------------------------------------------------------------
// 4. Classifier sanity

/// Central `mass` band of Binomial(n, p) as accuracy fractions.
fn binomial_band(n: usize, p: f64, mass: f64) -> (f64, f64) {
    let mut ln_pmf = vec![n as f64 * (1.0 - p).ln()];
    for k in 1..=n {
        let prev = ln_pmf[k - 1];
        ln_pmf.push(prev + ((n - k + 1) as f64 / k as f64).ln() + (p / (1.0 - p)).ln());
    }
    let tail = (1.0 - mass) / 2.0;
    let mut cdf = 0.0;
    let (mut lo, mut hi) = (None, None);
    for (k, l) in ln_pmf.iter().enumerate() {
        cdf += l.exp();
        if lo.is_none() && cdf >= tail {
            lo = Some(k);
        }
        if hi.is_none() && cdf >= 1.0 - tail {
            hi = Some(k);
        }
    }
    (lo.unwrap() as f64 / n as f64, hi.unwrap_or(n) as f64 / n as f64)
}

fn classifier_sanity() -> Outcome {
    let task = Task { target: Target::Care, subset: Subset::All };
    let cfg = ClassifierConfig::default();
    let mut toy = Vec::new();
    for i in 0..50 {
        let len = 6 + i % 5;
        toy.push(Trial::new(format!("slow-{i}"), ClassLabel::W1_NC, vec![0.1; len], 22.0).unwrap());
        toy.push(Trial::new(format!("fast-{i}"), ClassLabel::W1_C, vec![1.0; len], 22.0).unwrap());
    }
    let cv = train_classifier(&TrialSet::new(toy, Provenance::Real).unwrap(), task, &cfg).map_err(|e| e.to_string())?;
    let accs: Vec<f64> = cv.fits.iter().map(|f| f.val_acc).collect();
    check(accs.iter().all(|&a| a == 1.0), format!("separable toy fold accuracies {accs:?}"))?;

    let base = make_surrogate(&SurrogateConfig { seed: 11, ..SurrogateConfig::default().with_count(50) }).unwrap().trimmed().unwrap();
    let mut labels: Vec<ClassLabel> = base.trials.iter().map(|t| t.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(2024));
    let shuffled: Vec<Trial> = base.trials.iter().zip(labels).map(|(t, label)| Trial { label, ..t.clone() }).collect();
    let set = TrialSet::new(shuffled, Provenance::Real).unwrap();
    let cv = train_classifier(&set, task, &cfg).map_err(|e| e.to_string())?;
    let fold_n = set.len() / cfg.folds;
    let (lo, hi) = binomial_band(fold_n, 0.5, 0.99);
    let mean = cv.val_acc_mean;
    check((lo..=hi).contains(&mean), format!("shuffled-label accuracy {mean:.3} outside [{lo:.3}, {hi:.3}]"))?;
    Ok(format!("toy folds all 1.0; shuffled-label accuracy {mean:.3} in [{lo:.3}, {hi:.3}] (n = {fold_n} per fold)"))
}

// ---------------------------------------------------------------------------
// 5. Reduced-scale surrogate reproduction

const REDUCED: &str = "seed = 0\n[timegan]\nepochs = 300\nhidden = 28\n[classifier]\nepochs = 30\npatience = 5\n";

fn report<'a>(reports: &'a [EvalReport], target: Target, subset: Subset, dir: &str) -> &'a EvalReport {
    reports
        .iter()
        .find(|r| r.task == Task { target, subset } && format!("{:?}", r.direction).eq_ignore_ascii_case(dir))
        .expect("suite covers every cell")
}

/// `features.csv` rows keyed by (class, source).
fn feature_table(path: &Path) -> BTreeMap<(String, String), BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut out = BTreeMap::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let values = header[2..].iter().zip(&cells[2..]).map(|(h, v)| ((*h).to_owned(), v.parse().unwrap())).collect();
        out.insert((cells[0].to_owned(), cells[1].to_owned()), values);
    }
    out
}

fn reduced_pipeline() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(REDUCED, None).map_err(|e| e.to_string())?;
    cfg.surrogate = cfg.surrogate.with_count(80);
    cfg.workspace = dir.path().to_owned();
    let ctx = Context::new(cfg);
    let started = Instant::now();
    commands::pipeline(&ctx).map_err(|e| e.to_string())?;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let reports_dir = dir.path().join("reports");
    let reports: Vec<EvalReport> = serde_json::from_slice(&std::fs::read(reports_dir.join("eval.json")).unwrap()).unwrap();
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    for dir in ["TRTS", "TSTR"] {
        let care = report(&reports, Target::Care, Subset::All, dir).test_acc_mean;
        notes.push(format!("care/all {dir} {:.1}%", 100.0 * care));
        if care < 0.85 {
            failures.push(format!("(a) care/all {dir} {:.1}% < 85%", 100.0 * care));
        }
        let nc = report(&reports, Target::Weight, Subset::NotCarefulOnly, dir).test_acc_mean;
        let c = report(&reports, Target::Weight, Subset::CarefulOnly, dir).test_acc_mean;
        notes.push(format!("weight {dir} NC {:.1}% vs C {:.1}%", 100.0 * nc, 100.0 * c));
        if nc <= c {
            failures.push(format!("(b) weight {dir}: not careful {:.1}% <= careful {:.1}%", 100.0 * nc, 100.0 * c));
        }
    }

    let table = feature_table(&reports_dir.join("features.csv"));
    let get = |class: ClassLabel, source: &str, key: &str| table[&(class.to_string(), source.to_owned())][key];
    let mut synth_md = Vec::new();
    for class in ClassLabel::ALL {
        let (real, synth) = (get(class, "real", "md_mean"), get(class, "synthetic", "md_mean"));
        notes.push(format!("{class} MD {synth:.2}/{real:.2} s"));
        if (synth / real - 1.0).abs() > 0.2 {
            failures.push(format!("(c) {class} synthetic MD {synth:.3} s vs real {real:.3} s"));
        }
        synth_md.push(synth);
    }
    if !synth_md.windows(2).all(|w| w[0] < w[1]) {
        failures.push(format!("(c) synthetic MD means out of order: {synth_md:?}"));
    }

    let pooled = |care: kinegen::Care| {
        let (mut sum, mut n) = (0.0, 0.0);
        for class in ClassLabel::ALL.into_iter().filter(|c| c.care == care) {
            let k = get(class, "real", "n");
            sum += k * get(class, "real", "pa_mean");
            n += k;
        }
        sum / n
    };
    let gap = (pooled(kinegen::Care::NC) - pooled(kinegen::Care::C)).abs();
    let distances: BTreeMap<String, BTreeMap<String, f64>> =
        serde_json::from_slice(&std::fs::read(reports_dir.join("distances.json")).unwrap()).unwrap();
    for class in ClassLabel::ALL {
        let w = distances[&class.to_string()]["pa"];
        notes.push(format!("{class} PA W1 {w:.3}"));
        if w >= 0.3 * gap {
            failures.push(format!("(d) {class} PA Wasserstein {w:.3} >= 0.3 x gap {gap:.3}"));
        }
    }
    if minutes >= 60.0 {
        failures.push(format!("runtime {minutes:.1} min exceeds 60 min"));
    }
    notes.push(format!("PA gap {gap:.3}, {minutes:.1} min"));
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} | {}", failures.join("; "), notes.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// 6. Outlier rule

fn outliers() -> Outcome {
    let label = ClassLabel::W2_C;
    let cfg = SurrogateConfig { seed: 6, ..SurrogateConfig::default().with_count(1000) };
    let all = make_surrogate(&cfg).unwrap().trimmed().unwrap();
    let mut trials: Vec<Trial> = all.of_class(label).into_iter().cloned().collect();
    let md: Vec<f64> = trials.iter().map(|t| features(t).unwrap().md).collect();
    let mean = md.iter().sum::<f64>() / md.len() as f64;
    let std = (md.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / md.len() as f64).sqrt();
    let stats = cfg.stats(label);
    let mut injected = std::collections::BTreeSet::new();
    for k in 0..3 {
        let id = format!("injected-{k}");
        let v = bell_profile(mean + 5.0 * std, stats.pa_mean, cfg.rate, BellShape::new(cfg.shape_a, cfg.shape_b));
        trials.push(Trial::new(id.clone(), label, v, cfg.rate).unwrap());
        injected.insert(id);
    }
    let n = trials.len();
    let flagged = flag_outliers(&TrialSet::new(trials, Provenance::Surrogate).unwrap()).map_err(|e| e.to_string())?;
    check(flagged == injected, format!("flagged {flagged:?}"))?;
    Ok(format!("exactly the 3 injected trials flagged among {n} ({:.2}%)", 100.0 * 3.0 / n as f64))
}

// ---------------------------------------------------------------------------
// 7. Manifolds

fn manifolds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, dims) = (60, 9);
    let basis = Array2::from_shape_simple_fn((2, dims), || rng.random_range(-1.0..1.0));
    let coords = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-3.0..3.0));
    let offset = Array2::from_shape_simple_fn((1, dims), || rng.random_range(-1.0..1.0));
    let plane = coords.dot(&basis) + &offset;
    let p = pca2(&plane).map_err(|e| e.to_string())?;
    let ProjectionMeta::Pca { explained_variance } = p.meta else { return Err("PCA metadata".into()) };
    let total: f64 = explained_variance.iter().sum();
    close(total, 1.0, 1e-9, "rank-2 explained variance")?;

    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let blobs = Array2::from_shape_fn((40, 5), |(i, j)| {
        rand_distr::Distribution::sample(&normal, &mut rng) + if i >= 20 && j == 0 { 100.0 } else { 0.0 }
    });
    let t = tsne2(&blobs, &TsneConfig { perplexity: 10.0, seed: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    let d = |i: usize, j: usize| (&t.points.row(i) - &t.points.row(j)).mapv(|v| v * v).sum().sqrt();
    let (mut intra, mut inter) = (0.0_f64, f64::INFINITY);
    for i in 0..40 {
        for j in i + 1..40 {
            if (i < 20) == (j < 20) {
                intra = intra.max(d(i, j));
            } else {
                inter = inter.min(d(i, j));
            }
        }
    }
    check(intra < inter, format!("max intra-cluster {intra:.3} >= min inter-cluster {inter:.3}"))?;
    let ProjectionMeta::Tsne { kl_divergence, .. } = t.meta else { return Err("t-SNE metadata".into()) };
    check(kl_divergence.is_finite() && kl_divergence >= 0.0, format!("KL {kl_divergence}"))?;

    let pts = Array2::from_shape_simple_fn((80, 6), || rng.random_range(-1.0..1.0));
    let sq = Array2::from_shape_fn((80, 80), |(i, j)| (&pts.row(i) - &pts.row(j)).mapv(|v| v * v).sum());
    let (cond, _) = calibrate_affinities(&sq, 20.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in cond.rows() {
        worst = worst.max((perplexity_of(row.as_slice().unwrap()) - 20.0).abs());
    }
    check(worst <= 1e-4, format!("perplexity off by {worst:.2e}"))?;
    Ok(format!("PCA variance sum {total:.12}; t-SNE intra {intra:.2} < inter {inter:.2}, KL {kl_divergence:.3}; perplexity error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 8. Determinism

const SMALL: &str = "seed = 3\n[timegan]\nhidden = 4\nlayers = 2\nbatch_size = 5\nepochs = 4\n\
[classifier]\nhidden = 6\nfc_hidden = 4\nfolds = 3\nepochs = 2\n[analysis]\nperplexity = 8.0\niterations = 200\n";

fn small_config(dir: &Path) -> PathBuf {
    let mut text = String::from(SMALL);
    for (key, stats) in [("w1_nc", (1.44, 0.17, 1.0)), ("w2_nc", (1.61, 0.19, 0.93)), ("w1_c", (2.62, 0.63, 0.6)), ("w2_c", (3.04, 0.69, 0.558))] {
        text.push_str(&format!(
            "[surrogate.{key}]\ncount = 12\nmd_mean = {}\nmd_std = {}\npa_mean = {}\npa_std = 0.1\n",
            stats.0, stats.1, stats.2
        ));
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn outputs(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv" || e == "json") {
                out.push(p.strip_prefix(root).unwrap().to_owned());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let config_dir = tempfile::tempdir().unwrap();
    let config = small_config(config_dir.path());
    for ws in &runs {
        let status = Command::new(env!("CARGO_BIN_EXE_kinegen"))
            .arg("--config")
            .arg(&config)
            .arg("--workspace")
            .arg(ws.path())
            .arg("pipeline")
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .env_remove("KINEGEN_SEED")
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        check(status.success(), format!("pipeline exited with {status}"))?;
    }
    let (a, b) = (outputs(runs[0].path()), outputs(runs[1].path()));
    check(a == b, "the two runs wrote different file sets")?;
    for f in &a {
        let same = std::fs::read(runs[0].path().join(f)).unwrap() == std::fs::read(runs[1].path().join(f)).unwrap();
        check(same, format!("{} differs between runs", f.display()))?;
    }
    Ok(format!("{} CSV/JSON outputs byte-identical across two pipeline runs", a.len()))
}

// ---------------------------------------------------------------------------

struct Criterion {
    number: u32,
    name: &'static str,
    budget_secs: Option<f64>,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 8] = [
    Criterion { number: 1, name: "formula suite", budget_secs: Some(5.0), run: formulas },
    Criterion { number: 2, name: "gradient suite", budget_secs: Some(120.0), run: gradients },
    Criterion { number: 3, name: "autoencoder memorization", budget_secs: Some(120.0), run: memorization },
    Criterion { number: 4, name: "classifier sanity", budget_secs: Some(300.0), run: classifier_sanity },
    Criterion { number: 5, name: "reduced surrogate reproduction", budget_secs: None, run: reduced_pipeline },
    Criterion { number: 6, name: "outlier rule", budget_secs: Some(10.0), run: outliers },
    Criterion { number: 7, name: "manifold suite", budget_secs: Some(180.0), run: manifolds },
    Criterion { number: 8, name: "determinism", budget_secs: None, run: determinism },
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.number)) {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| (*s).to_owned()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        let outcome = match (outcome, c.budget_secs) {
            (Ok(_), Some(budget)) if secs > budget => Err(format!("took {secs:.1} s, budget {budget} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {} ({}): PASS [{secs:.1} s] {detail}", c.number, c.name),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({}): FAIL [{secs:.1} s] {detail}", c.number, c.name);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
