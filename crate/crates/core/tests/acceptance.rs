// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tsnorm::data::{SplitName, WindowPair, WindowSpec};
use tsnorm::experiment::{run_experiment, ExperimentConfig, ExperimentResults};
use tsnorm::forecaster::{ForecasterKind, LinearForecaster};
use tsnorm::normalization::{
    denormalize, instance_stats, mean, modulations_with, normalize, std_dev, CminParams, GlobalStats,
    MinMaxParams, NormContext, NormKind, NormStrategy, VarianceConvention,
};
use tsnorm::shift::{energy_distance, shift_report, FeatureSpace, ShiftConfig, ShiftKind};
use tsnorm::synthetic::{generate_dataset, generate_user, SyntheticSpec, SyntheticUserParams};
use tsnorm::training::{pipeline_gradients, BpSpace, FittedNorm};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let offset = rng.random_range(-100.0..100.0);
    (0..len)
        .map(|_| offset + scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn reversibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kinds = [
        NormKind::Standard,
        NormKind::Minmax,
        NormKind::Relative,
        NormKind::PerUserStandard,
        NormKind::Instance,
        NormKind::Revin,
    ];
    let mut worst: f64 = 0.0;
    for kind in kinds {
        for _ in 0..1000 {
            let len = rng.random_range(2..200);
            let x = random_window(&mut rng, len);
            let mut strategy = NormStrategy::new(kind);
            let ctx = match kind {
                NormKind::Standard | NormKind::PerUserStandard => NormContext::Global(GlobalStats {
                    mu: rng.random_range(-50.0..50.0),
                    sigma: rng.random_range(0.1..20.0),
                }),
                NormKind::Minmax => {
                    let min = rng.random_range(-200.0..0.0);
                    NormContext::MinMax(MinMaxParams {
                        min,
                        max: min + rng.random_range(1.0..300.0),
                    })
                }
                NormKind::Relative => NormContext::Relative {
                    mean: rng.random_range(0.5..100.0),
                },
                _ => {
                    strategy = strategy.with_affine(rng.random_range(0.2..3.0), rng.random_range(-2.0..2.0));
                    NormContext::Instance(instance_stats(&x))
                }
            };
            let back = normalize(&x, &strategy, &ctx).and_then(|z| denormalize(&z, &strategy, &ctx));
            let Ok(back) = back else {
                return outcome(false, format!("{kind}: transform failed"));
            };
            let err: Vec<f64> = x.iter().zip(&back).map(|(a, b)| a - b).collect();
            worst = worst.max(max_abs(&err) / max_abs(&x));
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max relative error {worst:.2e} over 6 x 1000 windows (tol 1e-10)"),
    )
}

fn stationarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let len = rng.random_range(2..200);
        let x = random_window(&mut rng, len);
        let (alpha, beta) = (rng.random_range(0.2..3.0), rng.random_range(-2.0..2.0));
        let strategy = NormStrategy::new(NormKind::Revin).with_epsilon(0.0).with_affine(alpha, beta);
        let z = normalize(&x, &strategy, &NormContext::Instance(instance_stats(&x))).expect("non-constant");
        let m = mean(&z);
        worst_mean = worst_mean.max((m - beta).abs());
        worst_std = worst_std.max((std_dev(&z, m, VarianceConvention::Unbiased) - alpha).abs());
    }
    outcome(
        worst_mean < 1e-12 && worst_std < 1e-10,
        format!("max |mean-beta| {worst_mean:.2e} (tol 1e-12), max |std-alpha| {worst_std:.2e} (tol 1e-10)"),
    )
}

/// One random pipeline: forecaster, strategy, backpropagation space and batch.
fn random_pipeline(rng: &mut ChaCha8Rng) -> (LinearForecaster, FittedNorm, Vec<String>, Vec<WindowPair>, BpSpace) {
    let l = rng.random_range(2..12);
    let h = rng.random_range(1..6);
    let kind = if rng.random_bool(0.5) { ForecasterKind::Linear } else { ForecasterKind::Dlinear };
    let kernel = 2 * rng.random_range(0..=(l - 1) / 2) + 1;
    let mut model = LinearForecaster::init(kind, l, h, kernel, rng.random()).expect("valid shape");
    for p in model.params_mut() {
        *p += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    let norm_kind = [NormKind::None, NormKind::Standard, NormKind::Instance, NormKind::Revin, NormKind::Cmin]
        [rng.random_range(0..5)];
    let strategy = NormStrategy::new(norm_kind)
        .with_epsilon(rng.random_range(0.0..1e-3))
        .with_affine(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0))
        .learnable(true);
    let mut norm = FittedNorm::unfitted(strategy);
    norm.global = Some(GlobalStats {
        mu: rng.random_range(-5.0..5.0),
        sigma: rng.random_range(0.5..4.0),
    });
    let ids: Vec<String> = vec!["a".into(), "b".into()];
    for (i, c) in ["c1", "c2"].iter().enumerate() {
        norm.clusters.insert(
            c.to_string(),
            CminParams {
                gamma: rng.random_range(0.5..2.0),
                nu: rng.random_range(-1.0..1.0),
                alpha: rng.random_range(0.5..2.0),
                beta: rng.random_range(-1.0..1.0),
                cluster: c.to_string(),
            },
        );
        norm.user_clusters.insert(ids[i].clone(), c.to_string());
    }
    let bp = if norm_kind.is_instance() && rng.random_bool(0.5) { BpSpace::Normalized } else { BpSpace::Data };
    let batch = (0..rng.random_range(1..6))
        .map(|_| {
            let w = random_window(rng, l + h);
            WindowPair {
                x: w[..l].to_vec(),
                y: w[l..].to_vec(),
                user: rng.random_range(0..2),
                start: 0,
            }
        })
        .collect();
    (model, norm, ids, batch, bp)
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..100 {
        let (model, norm, ids, batch, bp) = random_pipeline(&mut rng);
        let (_, grads, norm_grads) = pipeline_gradients(&model, &norm, &ids, &batch, bp).expect("pipeline");
        let loss_at = |m: &LinearForecaster, n: &FittedNorm| pipeline_gradients(m, n, &ids, &batch, bp).expect("pipeline").0;
        let mut analytic = grads.0.clone();
        analytic.extend(&norm_grads);
        let mut numeric = Vec::with_capacity(analytic.len());
        let h = 1e-5;
        for i in 0..model.params().len() {
            let mut p = model.clone();
            p.params_mut()[i] += h;
            let mut q = model.clone();
            q.params_mut()[i] -= h;
            numeric.push((loss_at(&p, &norm) - loss_at(&q, &norm)) / (2.0 * h));
        }
        let base = norm.learnable_params();
        for i in 0..base.len() {
            let mut up = norm.clone();
            let mut v = base.clone();
            v[i] += h;
            up.set_learnable_params(&v);
            let mut down = norm.clone();
            v[i] -= 2.0 * h;
            down.set_learnable_params(&v);
            numeric.push((loss_at(&model, &up) - loss_at(&model, &down)) / (2.0 * h));
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        worst = worst.max(max_abs(&diff) / max_abs(&analytic).max(1e-12));
        checked += analytic.len();
    }
    outcome(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 100 configurations, {checked} partials (tol 1e-6)"),
    )
}

fn closed_form_modulations() -> Outcome {
    let (l, h) = (100, 20);
    let params = SyntheticUserParams::reference("c", 0.01, 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let mut deltas = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    // Independent pairs (own noise, random start) so the iid standard error applies.
    for i in 0..n {
        let s = rng.random_range(0..1000);
        let u = generate_user(&params, s + l + h, 1000 + i as u64);
        let m = modulations_with(&u[s..s + l], &u[s + l..s + l + h], 1e-6, VarianceConvention::Population);
        deltas.push(m.delta);
        lambdas.push(m.lambda);
    }
    let check = |v: &[f64], target: f64| {
        let m = mean(v);
        let se = std_dev(v, m, VarianceConvention::Unbiased) / (v.len() as f64).sqrt();
        (m, se, (m - target).abs() <= 3.0 * se)
    };
    let (md, sd, okd) = check(&deltas, 0.784);
    let (ml, sl, okl) = check(&lambdas, 0.929);
    outcome(
        okd && okl,
        format!("mean delta {md:.5} (3SE {:.5}) vs 0.784; mean lambda {ml:.5} (3SE {:.5}) vs 0.929", 3.0 * sd, 3.0 * sl),
    )
}

fn grid_config(slope: f64, scale_range: Option<(f64, f64)>, cells: &str) -> String {
    let scale = scale_range.map_or(String::new(), |(a, b)| format!("scale_range = [{a}, {b}]\n"));
    format!(
        r#"schema_version = 1
settings = [[40, 10], [100, 20], [100, 100]]
seeds = [0, 1, 2]

[dataset]
kind = "synthetic"
users_per_cluster = 20
length = 2000
slope = {slope}
seed = 0
{scale}
[training]
preset = "desk"
forecaster = "linear"
{cells}"#
    )
}

fn run_grid(config: &str, dir: &Path) -> ExperimentResults {
    let cfg = ExperimentConfig::from_toml(config).expect("acceptance config parses");
    run_experiment(&cfg, dir, 0).expect("grid runs")
}

fn test_metric(r: &ExperimentResults, l: usize, h: usize, cell: &str, split: SplitName, nmse: bool) -> f64 {
    let m = r.get(l, h, cell).expect("cell present").metrics[&split];
    if nmse {
        m.nmse.mean
    } else {
        m.mse.mean
    }
}

const GRID: [(usize, usize); 3] = [(40, 10), (100, 20), (100, 100)];

fn ablation_none_vs_instance() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cells = "[[cells]]\nstrategy = \"none\"\n\n[[cells]]\nstrategy = \"instance\"\n";
    let r = run_grid(&grid_config(0.1, None, cells), dir.path());
    let ratios: Vec<f64> = GRID
        .iter()
        .map(|&(l, h)| {
            test_metric(&r, l, h, "none/data", SplitName::Test2, false)
                / test_metric(&r, l, h, "instance/data", SplitName::Test2, false)
        })
        .collect();
    let shown: Vec<String> = GRID.iter().zip(&ratios).map(|((l, h), v)| format!("{l}-{h}: {v:.0}x")).collect();
    outcome(
        ratios.iter().all(|&v| v >= 100.0),
        format!("Test2 MSE none/instance {} (need >= 100x)", shown.join(", ")),
    )
}

fn normalized_bp() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cells = "[[cells]]\nstrategy = \"instance\"\nbp_space = \"data\"\n\n[[cells]]\nstrategy = \"instance\"\nbp_space = \"normalized\"\n";
    let r = run_grid(&grid_config(0.1, Some((1.0, 10.0)), cells), dir.path());
    let ratios: Vec<f64> = GRID
        .iter()
        .map(|&(l, h)| {
            test_metric(&r, l, h, "instance/normalized", SplitName::Test2, false)
                / test_metric(&r, l, h, "instance/data", SplitName::Test2, false)
        })
        .collect();
    let shown: Vec<String> = GRID.iter().zip(&ratios).map(|((l, h), v)| format!("{l}-{h}: {v:.4}")).collect();
    outcome(
        ratios.iter().all(|&v| v <= 1.02),
        format!("Test2 MSE normalized/standard BP {} (need <= 1, ties within 2%)", shown.join(", ")),
    )
}

const CMIN_CELLS: &str = "[[cells]]\nstrategy = \"revin\"\naffine = true\nbp_space = \"normalized\"\n\n\
[[cells]]\nstrategy = \"cmin\"\naffine = true\ncmin_init = true\nbp_space = \"normalized\"\n";

fn cmin_ratios(slope: f64) -> Vec<f64> {
    let dir = tempfile::tempdir().expect("tempdir");
    let r = run_grid(&grid_config(slope, None, CMIN_CELLS), dir.path());
    GRID.iter()
        .map(|&(l, h)| {
            test_metric(&r, l, h, "cmin+affine+init/normalized", SplitName::Test1, true)
                / test_metric(&r, l, h, "revin+affine/normalized", SplitName::Test1, true)
        })
        .collect()
}

fn cmin_init_advantage() -> Outcome {
    let ratios = cmin_ratios(0.01);
    let mean_ratio = mean(&ratios);
    let shown: Vec<String> = GRID.iter().zip(&ratios).map(|((l, h), v)| format!("{l}-{h}: {v:.3}")).collect();
    let steep = cmin_ratios(0.1);
    outcome(
        mean_ratio <= 0.95,
        format!(
            "Test1 nMSE cmin(init)/revin, slope 0.01: {} -> grid mean {mean_ratio:.3} (need <= 0.95); slope 0.1 grid mean {:.3} (reported only)",
            shown.join(", "),
            mean(&steep)
        ),
    )
}

#[allow(clippy::needless_range_loop)]
fn naive_energy(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (n, m) = (p.len(), q.len());
    let mut pp = 0.0;
    let mut qq = 0.0;
    let mut pq = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pp += d(&p[i], &p[j]);
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i != j {
                qq += d(&q[i], &q[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..m {
            if n != m || i != j {
                pq += d(&p[i], &q[j]);
            }
        }
    }
    let cross = if n == m { pq / (n * (n - 1)) as f64 } else { pq / (n * m) as f64 };
    2.0 * cross - pp / (n * (n - 1)) as f64 - qq / (m * (m - 1)) as f64
}

fn energy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut self_zero = true;
    let mut symmetric = true;
    for _ in 0..20 {
        let dim = rng.random_range(1..6);
        let shift = rng.random_range(0.0..2.0);
        let mut cloud = |s: f64| -> Vec<Vec<f64>> {
            (0..200)
                .map(|_| (0..dim).map(|_| s + rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        let p = cloud(0.0);
        let q = cloud(shift);
        let lib = energy_distance(&p, &q).expect("valid samples");
        worst = worst.max((lib - naive_energy(&p, &q)).abs());
        self_zero &= energy_distance(&p, &p).expect("valid") == 0.0;
        symmetric &= lib.to_bits() == energy_distance(&q, &p).expect("valid").to_bits();
    }
    outcome(
        worst <= 1e-10 && self_zero && symmetric,
        format!("max |lib - naive| {worst:.2e} (tol 1e-10), d(P,P) = 0: {self_zero}, bit-exact symmetry: {symmetric}"),
    )
}

fn statistics_collapse() -> Outcome {
    let spec = WindowSpec::new(100, 20).expect("valid");
    let data = generate_dataset(&SyntheticSpec::two_cluster(20, 2000, 0.1, 0)).expect("synthetic");
    let asg = tsnorm::data::six_way_split(&data.dataset, 0.2, [0.6, 0.2, 0.2], spec, 0).expect("split");
    let cfg = ShiftConfig::new(spec, 0);
    let report = shift_report("synthetic", &data.dataset, &asg, &cfg).expect("report");
    let get = |space, norm, shift| report.get("synthetic", space, norm, shift).expect("entry").d2;
    let mut worst_stat: f64 = 0.0;
    let mut worst_mod: f64 = 0.0;
    for shift in ShiftKind::ALL {
        worst_stat = worst_stat.max(get(FeatureSpace::Statistics, NormKind::Instance, shift).abs());
        let base = get(FeatureSpace::Modulations, NormKind::None, shift);
        for norm in [NormKind::Standard, NormKind::Instance] {
            worst_mod = worst_mod.max((get(FeatureSpace::Modulations, norm, shift) - base).abs());
        }
    }
    outcome(
        worst_stat <= 1e-6 && worst_mod <= 1e-10,
        format!(
            "statistics/instance max |d2| {worst_stat:.2e} (tol 1e-6); modulations max spread across none/standard/instance {worst_mod:.2e} (tol 1e-10)"
        ),
    )
}

fn determinism() -> Outcome {
    let config = r#"schema_version = 1
settings = [[20, 5], [30, 10]]
seeds = [0, 1]

[dataset]
kind = "synthetic"
users_per_cluster = 4
length = 400
slope = 0.1

[training]
epochs = 15

[[cells]]
strategy = "standard"

[[cells]]
strategy = "revin"
affine = true
bp_space = "normalized"

[[cells]]
strategy = "cmin"
affine = true
bp_space = "normalized"
"#;
    let cfg = ExperimentConfig::from_toml(config).expect("config");
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    run_experiment(&cfg, a.path(), 1).expect("first run");
    run_experiment(&cfg, b.path(), 4).expect("second run");
    let read = |d: &Path| std::fs::read(d.join("results.json")).expect("results.json");
    let (ra, rb) = (read(a.path()), read(b.path()));
    outcome(
        ra == rb,
        format!("results.json {} bytes, identical across 1 and 4 worker threads: {}", ra.len(), ra == rb),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("reversibility", reversibility, Some(Duration::from_secs(5))),
        ("instance stationarity", stationarity, None),
        ("gradient oracle", gradient_oracle, Some(Duration::from_secs(30))),
        ("closed-form modulations", closed_form_modulations, Some(Duration::from_secs(60))),
        ("none vs instance ablation", ablation_none_vs_instance, Some(Duration::from_secs(600))),
        ("normalized backpropagation", normalized_bp, None),
        ("cmin initialization", cmin_init_advantage, None),
        ("energy distance oracle", energy_oracle, None),
        ("statistics collapse", statistics_collapse, None),
        ("determinism", determinism, None),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut o = run();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > *b {
                o.pass = false;
                o.detail.push_str(&format!("; over time budget {:?}", b));
            }
        }
        failures += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
