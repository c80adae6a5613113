//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line to
//! stderr (uncaptured) and the test fails if any criterion fails.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{gaussian_instance, gp_oracle, knn_oracle, merge_oracle, random_instance, rmse_loop, rng};
use contin_sense::baselines::{gp_complete, knn_s_complete, mc_complete, GpConfig, McConfig, SpatialIndex};
use contin_sense::dataio::{discretize_merge, mask_columns, rank1_ground_truth, MaskMode, MaskSpec, ObservationSet};
use contin_sense::harness::{
    cells, gradcheck, prepare, run_cell, run_cells, ExperimentConfig, ExperimentResult,
    GRADCHECK_TOL,
};
use contin_sense::models::{closed_form_parameter_count, Model, ModelConfig, ModelKind};
use contin_sense::numkit::{masked_loss, Tape};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn line(n: usize, name: &str, v: &Verdict, took: Duration) {
    let status = if v.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n} {status} ({name}, {:.1} s): {}",
        took.as_secs_f64(),
        v.detail
    );
}

fn config(json: &str) -> ExperimentConfig {
    let dir = std::env::temp_dir().join("contin-sense-acceptance");
    let text = json.replace("OUT", &dir.display().to_string());
    ExperimentConfig::from_json(&text).unwrap()
}

fn rmse_of(res: &ExperimentResult, method: &str, setting: &str, seed: u64) -> f64 {
    res.records
        .iter()
        .find(|r| r.method == method && r.setting == setting && r.seed == seed)
        .and_then(|r| r.rmse)
        .unwrap_or(f64::INFINITY)
}

fn mean_rmse(res: &ExperimentResult, method: &str, setting: &str) -> f64 {
    let xs: Vec<f64> = res.select(method, setting).iter().map(|r| r.rmse.unwrap_or(f64::INFINITY)).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

const SEEDS: &str = "[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]";

fn gradient_soundness() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut coords = 0;
    for kind in ModelKind::ALL {
        let rep = gradcheck(kind, 1, 20).unwrap();
        worst = worst.max(rep.max_rel_error);
        worst_abs = worst_abs.max(rep.max_abs_error);
        coords += rep.coordinates;
    }
    verdict(
        worst < GRADCHECK_TOL,
        format!("max relative error {worst:.2e} (largest absolute gap {worst_abs:.2e}) over {coords} coordinates"),
    )
}

fn small_model_config(seed: u64) -> ModelConfig {
    ModelConfig {
        latent_dim: 3,
        hidden_dim: 4,
        decoder_layers: vec![4],
        latent_init: 0.5,
        seed,
        ..Default::default()
    }
}

/// `obs` with an all-zero, mask-zero column at `t` in position `k`.
fn with_empty_column(obs: &ObservationSet, k: usize, t: f64) -> ObservationSet {
    let n = obs.n_subareas();
    let mut aug = obs.clone();
    aug.values = aug.values.insert_column(k, &vec![0.0; n]);
    aug.mask = aug.mask.insert_column(k, &vec![0.0; n]);
    aug.times.insert(k, t);
    aug
}

fn mask_and_query_exclusion() -> Verdict {
    let mut bad = Vec::new();
    for seed in 0..10 {
        let obs = random_instance(seed + 40, 5, 7, 0.4);
        let t = 0.5 * (obs.times[2] + obs.times[3]);
        for kind in ModelKind::ALL {
            let model = Model::new(kind, &small_model_config(seed), 5, &obs.times).unwrap();
            let mut tape = Tape::new();
            let (fwd, loss) = model.loss_node(model.store(), &mut tape, &obs).unwrap();
            let adj = tape.backward(loss).unwrap();
            let g = adj.get(fwd.estimate).unwrap();
            let leaked = (0..5).any(|i| (0..7).any(|j| !obs.is_observed(i, j) && g[(i, j)] != 0.0));
            if leaked {
                bad.push(format!("{kind} seed {seed}: masked adjoint"));
            }

            let mut queried = model.clone();
            let (k, _) = queried.insert_query(t).unwrap();
            let aug = with_empty_column(&obs, k, t);
            let (l1, g1) = queried.loss_and_gradients(&aug).unwrap();
            if kind == ModelKind::Dmf {
                // no recurrence: the insertion must be invisible
                let (l0, g0) = model.loss_and_gradients(&obs).unwrap();
                let same = l0 == l1 && g0.len() == g1.len() && g0.iter().all(|(id, v)| g1.get(id) == Some(v));
                if !same {
                    bad.push(format!("dmf seed {seed}: insertion changed loss or gradients"));
                }
            } else {
                let (est, _) = queried.predict().unwrap();
                let keep: Vec<usize> = (0..est.cols()).filter(|&j| j != k).collect();
                let direct = masked_loss(&est.select_columns(&keep), &obs.values, &obs.mask).unwrap();
                let mut tape = Tape::new();
                let (fwd, l) = queried.loss_node(queried.store(), &mut tape, &aug).unwrap();
                let adj = tape.backward(l).unwrap();
                let silent = adj.get(fwd.estimate).unwrap().column(k).iter().all(|&v| v == 0.0);
                let frozen = g1.len() == model.loss_and_gradients(&obs).unwrap().1.len();
                if l1 != direct || !silent || !frozen {
                    bad.push(format!("{kind} seed {seed}: query column not excluded"));
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "30 instance/model pairs exact".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn oracle_equivalence() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut knn_ok = true;
    for seed in 0..20 {
        let mut obs = random_instance(seed, 6, 10, 0.4);
        let mut r = rng(seed ^ 0xc0);
        let coords: Vec<[f64; 2]> = (0..6).map(|_| [r.gen(), r.gen()]).collect();
        obs.coords = Some(coords.clone());
        let idx = SpatialIndex::from_coords(&coords);
        for k in 1..=4 {
            knn_ok &= knn_s_complete(&obs, k, &idx).unwrap().estimate == knn_oracle(&obs, &coords, k);
        }
    }
    pass &= knn_ok;
    notes.push(format!("knn-s exact {knn_ok}"));

    let mut gp_gap: f64 = 0.0;
    for seed in 0..10 {
        let obs = gaussian_instance(seed);
        let got = gp_complete(&obs, &GpConfig::default()).unwrap().estimate;
        gp_gap = gp_gap.max(got.max_abs_diff(&gp_oracle(&obs, 0.1)));
    }
    pass &= gp_gap < 1e-8;
    notes.push(format!("gp gap {gp_gap:.1e}"));

    let mut r = rng(3);
    let u: Vec<f64> = (0..20).map(|_| r.gen_range(0.5..2.0)).collect();
    let v: Vec<f64> = (0..40).map(|_| r.gen_range(-1.5..1.5)).collect();
    let gt = rank1_ground_truth(&u, &v, (0..40).map(|j| j as f64).collect()).unwrap();
    let obs = mask_columns(&gt, &MaskSpec::new(MaskMode::KeepRatio(0.5), 11)).unwrap();
    let mc = mc_complete(
        &obs,
        1,
        &McConfig {
            max_epochs: 20_000,
            ..Default::default()
        },
    )
    .unwrap();
    let held_out = obs.mask.map(|m| 1.0 - m);
    let mc_rmse = rmse_loop(&mc.estimate, &gt.values, &held_out);
    pass &= mc_rmse < 1e-3;
    notes.push(format!("mc held-out rmse {mc_rmse:.1e}"));

    let mut merge_ok = true;
    for seed in 0..20 {
        let obs = random_instance(seed + 500, 4, 15, 0.3);
        let unit = (obs.times[14] - obs.times[0]) / 4.5;
        let d = discretize_merge(&obs, unit).unwrap();
        let (units, values, mask) = merge_oracle(&obs, unit);
        merge_ok &= d.units == units && d.mask == mask && d.values.max_abs_diff(&values) < 1e-12;
    }
    pass &= merge_ok;
    notes.push(format!("merge exact {merge_ok}"));
    verdict(pass, notes.join(", "))
}

fn sparsity_trend() -> (Verdict, ExperimentResult) {
    let cfg = config(&format!(
        r#"{{"scenario": "sparsity-sweep",
            "dataset": {{"synthetic": {{"kind": "smooth-field", "n": 30, "m": 300, "seed": 7}}}},
            "methods": ["dmf", "rnn-dmf"],
            "mask": {{"mode": "keep-k", "k": [1, 2, 3, 4, 5]}},
            "seeds": {SEEDS}, "out_dir": "OUT/rq1"}}"#
    ));
    let res = run_cells(&cfg).unwrap();
    let wins = (0..10)
        .filter(|&s| rmse_of(&res, "rnn-dmf", "k=1", s) < rmse_of(&res, "dmf", "k=1", s))
        .count();
    let mut pass = wins >= 8;
    let mut detail = format!("rnn-dmf beats dmf at k=1 in {wins}/10");
    for method in ["dmf", "rnn-dmf"] {
        let means: Vec<f64> = (1..=5).map(|k| mean_rmse(&res, method, &format!("k={k}"))).collect();
        let monotone = means.windows(2).all(|w| w[1] <= w[0]);
        pass &= monotone;
        let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
        detail += &format!("; {method} mean by k [{}] non-increasing {monotone}", shown.join(", "));
    }
    (verdict(pass, detail), res)
}

fn deletion_trend() -> Verdict {
    let cfg = config(&format!(
        r#"{{"scenario": "deletion-ablation",
            "dataset": {{"synthetic": {{"kind": "smooth-field", "n": 30, "m": 3000, "seed": 7}}}},
            "methods": ["rnn-dmf", "time-dmf"],
            "mask": {{"mode": "keep-k", "k": 1}},
            "delete_ratios": [0.5, 0.6, 0.7, 0.8, 0.9],
            "seeds": {SEEDS}, "out_dir": "OUT/rq2"}}"#
    ));
    let res = run_cells(&cfg).unwrap();
    let wins = (0..10)
        .filter(|&s| rmse_of(&res, "time-dmf", "delete=0.9", s) < rmse_of(&res, "rnn-dmf", "delete=0.9", s))
        .count();
    let growth = |m: &str| mean_rmse(&res, m, "delete=0.9") - mean_rmse(&res, m, "delete=0.5");
    let (gt, gr) = (growth("time-dmf"), growth("rnn-dmf"));
    verdict(
        wins >= 8 && gt < gr,
        format!(
            "time-dmf beats rnn-dmf at 0.9 in {wins}/10; rmse growth 0.5 to 0.9: time-dmf {gt:.3}, rnn-dmf {gr:.3} \
             (means at 0.9: time-dmf {:.3}, rnn-dmf {:.3})",
            mean_rmse(&res, "time-dmf", "delete=0.9"),
            mean_rmse(&res, "rnn-dmf", "delete=0.9")
        ),
    )
}

fn generation() -> Verdict {
    let cfg = config(&format!(
        r#"{{"scenario": "generation",
            "dataset": {{"synthetic": {{"kind": "smooth-field", "n": 30, "m": 300, "seed": 11}}}},
            "methods": ["time-dmf", "linear"],
            "mask": {{"mode": "keep-k", "k": 1}},
            "seeds": {SEEDS}, "out_dir": "OUT/rq3"}}"#
    ));
    let res = run_cells(&cfg).unwrap();
    let wins = (0..10)
        .filter(|&s| rmse_of(&res, "time-dmf", "queries=20", s) < rmse_of(&res, "linear", "queries=20", s))
        .count();
    verdict(
        wins >= 7,
        format!(
            "query beats linear in {wins}/10 (mean {:.3} vs {:.3})",
            mean_rmse(&res, "time-dmf", "queries=20"),
            mean_rmse(&res, "linear", "queries=20")
        ),
    )
}

fn discrete_vs_continuous() -> (Verdict, ExperimentResult) {
    let cfg = config(&format!(
        r#"{{"scenario": "discrete-vs-continuous",
            "dataset": {{"synthetic": {{"kind": "smooth-field", "n": 30, "m": 1000, "seed": 11}}}},
            "methods": ["time-dmf", "mc", "knn-s", "gp", "dmf"],
            "mask": {{"mode": "keep-k", "k": 1}},
            "delete_ratios": [0.5], "unit_length_seconds": 7200,
            "seeds": {SEEDS}, "out_dir": "OUT/rq4"}}"#
    ));
    let res = run_cells(&cfg).unwrap();
    let setting = "delete=0.5";
    let rivals = ["mc", "knn-s", "gp", "dmf"];
    let wins = (0..10)
        .filter(|&s| {
            let t = rmse_of(&res, "time-dmf", setting, s);
            rivals.iter().all(|m| t < rmse_of(&res, m, setting, s))
        })
        .count();
    let means: Vec<String> = std::iter::once("time-dmf")
        .chain(rivals)
        .map(|m| format!("{m} {:.3}", mean_rmse(&res, m, setting)))
        .collect();
    (
        verdict(wins >= 8, format!("time-dmf best in {wins}/10 (means: {})", means.join(", "))),
        res,
    )
}

fn parameter_budget() -> Verdict {
    let cfg = ModelConfig::default();
    let (n, m) = (30, 300);
    let closed = closed_form_parameter_count(ModelKind::TimeDmf, &cfg, n, m);
    let times: Vec<f64> = (0..m).map(|j| j as f64).collect();
    let counted = Model::new(ModelKind::TimeDmf, &cfg, n, &times).unwrap().parameter_count();
    verdict(
        closed == counted && (5_000..=20_000).contains(&closed),
        format!("default time-dmf at {n}x{m}: closed form {closed}, store {counted}"),
    )
}

fn determinism(runs: &[&ExperimentResult]) -> Verdict {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for res in runs {
        let cfg = &res.config;
        let data = prepare(cfg).unwrap();
        for (i, cell) in cells(cfg).unwrap().iter().enumerate().step_by(7) {
            let again = run_cell(cfg, &data, cell);
            let before = &res.records[i];
            let gap = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(x), Some(y)) => (x - y).abs(),
                _ => f64::INFINITY,
            };
            worst = worst.max(gap(again.rmse, before.rmse)).max(gap(again.epsilon, before.epsilon));
            checked += 1;
        }
    }
    verdict(worst <= 1e-12, format!("{checked} cells re-run, max metric gap {worst:e}"))
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut record = |n: usize, name: &str, v: Verdict, took: Duration| {
        line(n, name, &v, took);
        if !v.pass {
            failed.push(format!("{n} {name}"));
        }
    };

    let t = Instant::now();
    let v = gradient_soundness();
    let took = t.elapsed();
    let v = Verdict {
        pass: v.pass && took < Duration::from_secs(60),
        ..v
    };
    record(1, "gradient soundness", v, took);

    let t = Instant::now();
    record(2, "mask and query exclusion", mask_and_query_exclusion(), t.elapsed());

    let t = Instant::now();
    record(3, "oracle equivalence", oracle_equivalence(), t.elapsed());

    let t = Instant::now();
    let (v, rq1) = sparsity_trend();
    let took = t.elapsed();
    let v = Verdict {
        pass: v.pass && took < Duration::from_secs(15 * 60),
        ..v
    };
    record(4, "sparsity trend", v, took);

    let t = Instant::now();
    let v = deletion_trend();
    let took = t.elapsed();
    let v = Verdict {
        pass: v.pass && took < Duration::from_secs(20 * 60),
        ..v
    };
    record(5, "deletion trend", v, took);

    let t = Instant::now();
    record(6, "generation", generation(), t.elapsed());

    let t = Instant::now();
    let (v, rq4) = discrete_vs_continuous();
    record(7, "discrete vs continuous", v, t.elapsed());

    let t = Instant::now();
    record(8, "parameter budget", parameter_budget(), t.elapsed());

    let t = Instant::now();
    record(9, "determinism", determinism(&[&rq1, &rq4]), t.elapsed());

    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
