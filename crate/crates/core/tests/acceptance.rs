//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Runs single-threaded and takes tens of minutes on one core. Set
//! `GDP_ACCEPTANCE=1,3,8` to run a subset.

use std::time::Instant;

use gdp_core::data::Standardizer;
use gdp_core::discrete::train_discrete;
use gdp_core::gaussian::{train, ConditionalGenerator, NoiseSchedule};
use gdp_core::io::GeneratorCheckpoint;
use gdp_core::metrics::{kappa, label_frequencies, total_variation, wasserstein1_1d};
use gdp_core::nn::Mlp;
use gdp_core::predict::{empirical_loss, gdp_point, LossSpec, PredictionValue, SyntheticSampleSet};
use gdp_core::rng::{derive_seed, seeded};
use gdp_core::simbench::{
    linear_gaussian_toy, make_transfer_pair, run_benchmark, sample_response, BenchmarkReport, BenchmarkSetup, Case,
    SimConfig, TransferPairConfig,
};
use gdp_core::training::{Role, TrainConfig};
use gdp_core::transfer::{finetune_target, pretrain_source, TransferPlan, TransferSettings};
use ndarray::{array, s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Training settings for the one-dimensional toy generators.
fn toy_config(seed: u64) -> TrainConfig {
    TrainConfig { learning_rate: 3e-4, max_epochs: 1000, patience: 50, ema_decay: 0.995, seed, ..TrainConfig::default() }
}

fn toy_generator(n: usize, seed: u64) -> ConditionalGenerator {
    let (x, y) = linear_gaussian_toy(n, 2.0, &mut seeded(derive_seed(seed, 100)));
    train(x.view(), y.view(), &toy_config(seed)).expect("toy training").0
}

fn oracle_toy(x: f64, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..m).map(|_| 2.0 * x + rng.sample::<f64, _>(StandardNormal)).collect()
}

fn generated(gen: &ConditionalGenerator, x: &[f64], m: usize, seed: u64) -> Vec<f64> {
    let set = gen.sample_seeded(x, m, 10, seed).expect("sampling");
    set.continuous_values().expect("continuous").column(0).to_vec()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let mu = mean(v);
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

// criteria 1 and 2 share the six benchmark runs
fn benchmark_runs() -> Vec<BenchmarkReport> {
    let mut out = Vec::new();
    for case in [Case::I, Case::II] {
        for seed in 1..=3 {
            let start = Instant::now();
            let sim = SimConfig { case, seed, ..SimConfig::default() };
            let (report, _) = run_benchmark(&BenchmarkSetup::new(sim)).expect("benchmark run");
            eprintln!(
                "  case {case} seed {seed}: RMSE {:.3} MAD {:.3} ({:.0?})",
                report.rmse.average,
                report.mad.average,
                start.elapsed()
            );
            eprint!("{}", report.to_table());
            out.push(report);
        }
    }
    out
}

fn criterion_1(runs: &[BenchmarkReport]) -> Outcome {
    let targets = [(Case::I, 1.05, 0.78), (Case::II, 1.08, 0.79)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (case, rmse_target, mad_target) in targets {
        let rs: Vec<&BenchmarkReport> = runs.iter().filter(|r| r.case == case).collect();
        let rmse = rs.iter().map(|r| r.rmse.average).sum::<f64>() / rs.len() as f64;
        let mad = rs.iter().map(|r| r.mad.average).sum::<f64>() / rs.len() as f64;
        let ok = (rmse - rmse_target).abs() <= 0.15 && (mad - mad_target).abs() <= 0.10;
        pass &= ok;
        parts.push(format!(
            "case {case}: RMSE {rmse:.3} (target {rmse_target}±0.15), MAD {mad:.3} (target {mad_target}±0.10)"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2(runs: &[BenchmarkReport]) -> Outcome {
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| {
            let at = |a| r.rmse.value_at(a).expect("level present");
            !(at(0.05) > at(0.5) && at(0.95) > at(0.5))
        })
        .map(|r| format!("case {} seed {}", r.case, r.seed))
        .collect();
    outcome(bad.is_empty(), format!("{} of {} runs U-shaped {bad:?}", runs.len() - bad.len(), runs.len()))
}

fn criterion_3() -> Outcome {
    // dyadic values and levels keep every loss evaluation exact
    let mut rng = seeded(3);
    let mut failures = 0;
    for _ in 0..200 {
        let m = rng.random_range(1..=60);
        let values: Vec<f64> = (0..m).map(|_| f64::from(rng.random_range(-40i32..=40)) / 4.0).collect();
        let alpha = f64::from(rng.random_range(1..64)) / 64.0;
        let set = SyntheticSampleSet::continuous(vec![], Array2::from_shape_vec((m, 1), values).unwrap()).unwrap();
        let spec = LossSpec::pinball(alpha).unwrap();
        let pred = gdp_point(&set, &spec).unwrap();
        let loss_at = |v: f64| empirical_loss(&set, &spec, &PredictionValue::Vector(vec![v])).unwrap();
        let grid_min = (-480..=480).map(|k| loss_at(f64::from(k) / 32.0)).fold(f64::INFINITY, f64::min);
        if loss_at(pred.vector().unwrap()[0]) != grid_min || pred.loss_value != grid_min {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{} of 200 sample sets attain the grid minimum", 200 - failures))
}

fn criterion_4(gen: &ConditionalGenerator) -> Outcome {
    let spread = |m: usize| {
        let medians: Vec<f64> = (0..50)
            .map(|r| {
                let set = gen.sample_seeded(&[1.0], m, 10, derive_seed(40, r)).unwrap();
                gdp_point(&set, &LossSpec::pinball(0.5).unwrap()).unwrap().vector().unwrap()[0]
            })
            .collect();
        sd(&medians)
    };
    let (small, large) = (spread(10), spread(1000));
    outcome(large < 0.5 * small, format!("sd(m=1000) {large:.4} vs sd(m=10) {small:.4}, ratio {:.3}", large / small))
}

/// Exact W1 between the empirical law of `samples` and `N(mean, sd^2)`.
///
/// Integrates `|F_m^{-1}(u) - Q(u)|` piecewise, using
/// `int_a^b Q(u) du = sd * (pdf(z_a) - pdf(z_b)) + mean * (b - a)`.
fn w1_to_normal(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let unit = Normal::standard();
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let z = |u: f64| if u <= 0.0 { f64::NEG_INFINITY } else if u >= 1.0 { f64::INFINITY } else { unit.inverse_cdf(u) };
    let dens = |z: f64| if z.is_finite() { unit.pdf(z) } else { 0.0 };
    // integral of Q over [a, b]
    let q_int = |a: f64, b: f64| sd * (dens(z(a)) - dens(z(b))) + mean * (b - a);
    v.iter()
        .enumerate()
        .map(|(i, &c)| {
            let (a, b) = (i as f64 / m, (i + 1) as f64 / m);
            let cut = unit.cdf((c - mean) / sd).clamp(a, b);
            // Q < c below the cut, Q > c above it
            (c * (cut - a) - q_int(a, cut)) + (q_int(cut, b) - c * (b - cut))
        })
        .sum()
}

fn criterion_5() -> Outcome {
    // the oracle itself: a point mass at the mean is E|Z| away, a distant one about its offset
    let point = w1_to_normal(&[1.0], 1.0, 2.0);
    let far = w1_to_normal(&[40.0], 0.0, 1.0);
    if (point - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() > 1e-12 || (far - 40.0).abs() > 1e-9 {
        return outcome(false, format!("W1 oracle self-check failed: {point} {far}"));
    }
    let sizes = [500, 2000, 8000];
    let points: Vec<f64> = (0..20).map(|i| -1.5 + 3.0 * f64::from(i) / 19.0).collect();
    let mut table = Vec::new();
    for seed in 0..5u64 {
        // nested training sets: each smaller set is a prefix of the largest
        let (x_all, y_all) = linear_gaussian_toy(sizes[2], 2.0, &mut seeded(derive_seed(500, seed)));
        let mut row = Vec::new();
        for &n in &sizes {
            let (x, y) = (x_all.slice(s![..n, ..]), y_all.slice(s![..n, ..]));
            let gen = train(x, y, &toy_config(derive_seed(510, seed))).expect("toy training").0;
            let w: f64 = points
                .iter()
                .enumerate()
                .map(|(i, &x)| w1_to_normal(&generated(&gen, &[x], 2000, derive_seed(seed, i as u64)), 2.0 * x, 1.0))
                .sum::<f64>()
                / points.len() as f64;
            row.push(w);
        }
        eprintln!("  seed {seed}: W1 at n={sizes:?} = {row:.4?}");
        table.push(row);
    }
    let inversions: usize = table.iter().map(|r| r.windows(2).filter(|w| w[1] > w[0]).count()).sum();
    let means: Vec<f64> = (0..sizes.len()).map(|j| table.iter().map(|r| r[j]).sum::<f64>() / table.len() as f64).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && inversions <= 1,
        format!("mean W1 {means:.4?}, {inversions} inversion(s) over 5 seeds"),
    )
}

fn criterion_6(gen: &ConditionalGenerator) -> Outcome {
    let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let w: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let a = generated(gen, &[x], 2000, derive_seed(6, i as u64));
            wasserstein1_1d(&a, &oracle_toy(x, 2000, derive_seed(66, i as u64))).unwrap()
        })
        .collect();
    let gaussian_ok = w.iter().all(|&v| v < 0.15);

    // class probabilities switch with the sign of x
    let probs = |x: f64| if x < 0.0 { [0.6, 0.3, 0.1] } else { [0.2, 0.3, 0.5] };
    let mut rng = seeded(61);
    let n = 5000;
    let x = Array2::from_shape_simple_fn((n, 1), || rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = x
        .column(0)
        .iter()
        .map(|&v| {
            let u: f64 = rng.random();
            let p = probs(v);
            if u < p[0] { 0 } else if u < p[0] + p[1] { 1 } else { 2 }
        })
        .collect();
    let cfg = TrainConfig { seed: 6, ..TrainConfig::discrete_default() };
    let (disc, _) = train_discrete(x.view(), &labels, Some(3), &cfg).unwrap();
    let tv: Vec<f64> = [-0.5, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let set = disc.sample_seeded(&[x], 5000, derive_seed(62, i as u64)).unwrap();
            total_variation(&label_frequencies(set.labels().unwrap(), 3), &probs(x)).unwrap()
        })
        .collect();
    let discrete_ok = tv.iter().all(|&v| v < 0.05);
    outcome(gaussian_ok && discrete_ok, format!("gaussian W1 {w:.4?} (< 0.15); discrete TV {tv:.4?} (< 0.05)"))
}

fn transfer_config(seed: u64) -> TrainConfig {
    TrainConfig {
        width: 64,
        depth: 2,
        embed_dim: 32,
        learning_rate: 1e-3,
        max_epochs: 300,
        patience: 30,
        ema_decay: 0.99,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let pair_cfg = TransferPairConfig::default();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let (source, target) = make_transfer_pair(derive_seed(700, seed), &pair_cfg).unwrap();
        let cfg = transfer_config(seed);
        let (ckpt, _) = pretrain_source(source.x.view(), source.y_matrix().view(), &cfg).unwrap();
        assert_eq!(ckpt.role(), Role::Source);
        let plan = TransferPlan { source: ckpt, settings: TransferSettings::default() };
        let (tuned, _) = finetune_target(&plan, target.x.view(), target.y_matrix().view(), &cfg).unwrap();
        let (scratch, _) = train(target.x.view(), target.y_matrix().view(), &cfg).unwrap();

        let mut rng = seeded(derive_seed(710, seed));
        let mut w_tuned = 0.0;
        let mut w_scratch = 0.0;
        let points = 20;
        for i in 0..points {
            let x: Array1<f64> = Array1::from_shape_simple_fn(pair_cfg.p, || rng.sample::<f64, _>(StandardNormal) + 0.5);
            let truth: Vec<f64> = (0..1000).map(|_| sample_response(x.view(), target.beta.view(), &mut rng)).collect();
            let xs = x.to_vec();
            w_tuned += wasserstein1_1d(&generated(&tuned, &xs, 1000, derive_seed(seed, i)), &truth).unwrap();
            w_scratch += wasserstein1_1d(&generated(&scratch, &xs, 1000, derive_seed(seed, i)), &truth).unwrap();
        }
        let (a, b) = (w_tuned / points as f64, w_scratch / points as f64);
        if a < b {
            wins += 1;
        }
        lines.push(format!("{a:.3}/{b:.3}"));
        eprintln!("  seed {seed}: transfer W1 {a:.4}, scratch W1 {b:.4}");
    }
    outcome(wins >= 8, format!("transfer better in {wins} of 10 seeds (transfer/scratch W1: {})", lines.join(" ")))
}

fn gradient_check(rng: &mut impl Rng) -> f64 {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=5)];
    dims.extend((0..depth).map(|_| rng.random_range(2..=6)));
    dims.push(rng.random_range(1..=3));
    let mut net = Mlp::new(&dims, rng).unwrap();
    // nonzero biases keep pre-activations off the ReLU kink
    for b in net.biases_mut() {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let input: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&upstream).map(|(o, g)| o * g).sum::<f64>();
    let (grads, input_grad) = net.backward(&input, &upstream).unwrap();
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;
    for l in 0..net.num_layers() {
        let (rows, cols) = net.weights()[l].dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = net.clone();
                plus.weights_mut()[l][[r, c]] += h;
                let mut minus = net.clone();
                minus.weights_mut()[l][[r, c]] -= h;
                let numeric = (objective(&plus, &input) - objective(&minus, &input)) / (2.0 * h);
                worst = worst.max(rel(grads.weights[l][[r, c]], numeric));
            }
            let mut plus = net.clone();
            plus.biases_mut()[l][r] += h;
            let mut minus = net.clone();
            minus.biases_mut()[l][r] -= h;
            let numeric = (objective(&plus, &input) - objective(&minus, &input)) / (2.0 * h);
            worst = worst.max(rel(grads.biases[l][r], numeric));
        }
    }
    for i in 0..input.len() {
        let mut plus = input.clone();
        plus[i] += h;
        let mut minus = input.clone();
        minus[i] -= h;
        let numeric = (objective(&net, &plus) - objective(&net, &minus)) / (2.0 * h);
        worst = worst.max(rel(input_grad[i], numeric));
    }
    worst
}

fn criterion_8() -> Outcome {
    let mut rng = seeded(8);
    let worst_grad = (0..100).map(|_| gradient_check(&mut rng)).fold(0.0, f64::max);
    let grad_ok = worst_grad < 1e-4;

    let sched = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let worst_identity = (1..=1000)
        .map(|t| (sched.mu(t).powi(2) + sched.sigma(t).powi(2) - 1.0).abs())
        .fold(0.0, f64::max);
    let schedule_ok = worst_identity < 1e-12;

    let mut axioms_ok = true;
    for _ in 0..200 {
        let mut draw = || -> Vec<f64> {
            let n = rng.random_range(1..30);
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
        };
        let (a, b, c) = (draw(), draw(), draw());
        let ab = wasserstein1_1d(&a, &b).unwrap();
        axioms_ok &= wasserstein1_1d(&a, &a).unwrap() == 0.0;
        axioms_ok &= (ab - wasserstein1_1d(&b, &a).unwrap()).abs() < 1e-12;
        axioms_ok &= ab >= 0.0;
        axioms_ok &= ab <= wasserstein1_1d(&a, &c).unwrap() + wasserstein1_1d(&c, &b).unwrap() + 1e-12;
    }

    // 2x2 table [[20, 5], [10, 15]]: rows are truth, columns predictions
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for (t, p, count) in [(0, 0, 20), (0, 1, 5), (1, 0, 10), (1, 1, 15)] {
        truth.extend(std::iter::repeat_n(t, count));
        pred.extend(std::iter::repeat_n(p, count));
    }
    let k = kappa(&pred, &truth).unwrap();
    let kappa_ok = (k - 0.4).abs() < 1e-12;

    let xs = Standardizer { mean: vec![0.3, -0.2], std: vec![1.1, 0.9] };
    let ys = Standardizer { mean: vec![0.5], std: vec![2.0] };
    let cfg = TrainConfig { width: 16, depth: 2, embed_dim: 8, time_dim: 8, ..TrainConfig::default() };
    let gen = ConditionalGenerator::init(xs, ys, &cfg, &mut seeded(81)).unwrap();
    let back = GeneratorCheckpoint::from_json(&GeneratorCheckpoint::from_gaussian(&gen).to_json().unwrap())
        .unwrap()
        .to_gaussian()
        .unwrap();
    let mut roundtrip_ok = true;
    for _ in 0..20 {
        let y = array![[rng.random_range(-3.0..3.0)]];
        let x = array![[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]];
        let t = [rng.random_range(1..=1000)];
        let a = gen.predict_noise(y.view(), x.view(), &t).unwrap()[[0, 0]];
        let b = back.predict_noise(y.view(), x.view(), &t).unwrap()[[0, 0]];
        roundtrip_ok &= a.to_bits() == b.to_bits();
    }

    outcome(
        grad_ok && schedule_ok && axioms_ok && kappa_ok && roundtrip_ok,
        format!(
            "gradient rel err {worst_grad:.2e}; |mu^2+sigma^2-1| {worst_identity:.1e}; W1 axioms {axioms_ok}; kappa {k:.6}; checkpoint bitwise {roundtrip_ok}"
        ),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("GDP_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| selected.as_ref().is_none_or(|s| s.contains(&n));
    // the test harness passes flags such as --nocapture; ignore them
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let mut run = |n: u32, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            let start = Instant::now();
            let o = f();
            let secs = start.elapsed().as_secs_f64();
            println!("criterion {n}: {} ({secs:.0}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((n, o, secs));
        }
    };

    let mut toy: Option<ConditionalGenerator> = None;
    let mut toy_gen = || toy.get_or_insert_with(|| toy_generator(5000, 1)).clone();

    run(8, &mut criterion_8);
    run(3, &mut criterion_3);
    run(6, &mut || criterion_6(&toy_gen()));
    run(4, &mut || criterion_4(&toy_gen()));
    run(5, &mut criterion_5);
    run(7, &mut criterion_7);
    if wanted(1) || wanted(2) {
        let runs = benchmark_runs();
        run(1, &mut || criterion_1(&runs));
        run(2, &mut || criterion_2(&runs));
    }

    results.sort_by_key(|r| r.0);
    println!("acceptance summary:");
    for (n, o, _) in &results {
        println!("  criterion {n}: {}", if o.pass { "PASS" } else { "FAIL" });
    }
    if results.iter().any(|(_, o, _)| !o.pass) {
        std::process::exit(1);
    }
}
