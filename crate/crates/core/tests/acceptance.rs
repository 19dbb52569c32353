//! One PASS/FAIL line per acceptance criterion. Failures are reported but
//! only fail the process when `ACCEPTANCE_STRICT=1`.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use xlaug::classifier::{grad, Example};
use xlaug::eval::{Experiment, ExperimentConfig};
use xlaug::pool::Exclusions;
use xlaug::synthetic::{domain_pair, gaussian_vectors, random_pool, DomainPairSpec};
use xlaug::{
    brute_force_search, filter_pool, load_pool, mmr_select, retrieve, write_pool, AnnIndex, Error, HnswParams,
    LinearModel, MmrConfig, Pool, PoolView, RetrievalConfig, VectorBlock,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ann_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dim = 64;
    let data = gaussian_vectors(&mut rng, 20_000, dim);
    let queries = gaussian_vectors(&mut rng, 100, dim);
    let pool = Arc::new(pool_from_vectors(dim, &data));
    let start = Instant::now();
    let index = AnnIndex::build(PoolView::all(pool.clone()), HnswParams::default()).map_err(|e| e.to_string())?;
    let build = start.elapsed();
    let mut hits = 0usize;
    for q in &queries {
        let approx: HashSet<usize> = index.search(q, 100).map_err(|e| e.to_string())?.iter().map(|n| n.row).collect();
        let exact = brute_force_search(index.view(), q, 100).map_err(|e| e.to_string())?;
        hits += exact.iter().filter(|n| approx.contains(&n.row)).count();
    }
    let total = start.elapsed();
    let recall = hits as f64 / (100.0 * queries.len() as f64);
    let detail = format!(
        "recall@100 = {recall:.4}, build {:.1}s, build+query {:.1}s",
        build.as_secs_f64(),
        total.as_secs_f64()
    );
    if recall >= 0.95 && total.as_secs_f64() < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pool_from_vectors(dim: usize, rows: &[Vec<f32>]) -> Pool {
    let instances = (0..rows.len())
        .map(|id| xlaug::Instance {
            id,
            text: format!("row {id}"),
            label: (id % 2) as u8,
            language: "en".into(),
            source_task: "t".into(),
        })
        .collect();
    Pool::new(instances, VectorBlock::from_rows(dim, rows).unwrap()).unwrap()
}

const LANGS: [&str; 4] = ["en", "tr", "de", "ar"];
const TASKS: [&str; 5] = ["A", "B", "C", "D", "E"];

fn random_exclusions<R: Rng>(rng: &mut R) -> Exclusions {
    let langs: Vec<&str> = LANGS.iter().copied().filter(|_| rng.random_bool(0.25)).collect();
    let tasks: Vec<&str> = TASKS.iter().copied().filter(|_| rng.random_bool(0.2)).collect();
    Exclusions::new(langs, tasks)
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut shortfalls = 0;
    for trial in 0..200 {
        let rows = rng.random_range(1..=500);
        let dim = rng.random_range(1..=8);
        let dup = rng.random_range(0.0..0.5);
        let pool = Arc::new(random_pool(&mut rng, rows, dim, &LANGS, &TASKS, dup));
        let m = rng.random_range(1..=8);
        let queries = gaussian_vectors(&mut rng, m, dim);
        let r = rng.random_range(1..=50);
        let ex = random_exclusions(&mut rng);
        let k_init = rng.random_bool(0.3).then(|| rng.random_range(1..=10));
        // Alternate between indexing the whole pool and a pre-filtered view.
        let view = if trial % 2 == 0 {
            PoolView::all(pool.clone())
        } else {
            filter_pool(&pool, &ex.languages, &ex.tasks)
        };
        if view.is_empty() {
            continue;
        }
        let index = AnnIndex::build(view.clone(), HnswParams::default()).map_err(|e| e.to_string())?;
        let mut cfg = RetrievalConfig::new(r);
        cfg.exclusions = ex.clone();
        cfg.k_init = k_init;
        let got = retrieve(&index, &pool, &queries, &cfg);
        let want = oracle_retrieve(&view, &queries, r, &ex, k_init);
        match (got, want) {
            (Ok(set), Some(items)) => {
                if set.items.len() != items.len() {
                    return Err(format!("trial {trial}: {} items vs oracle {}", set.items.len(), items.len()));
                }
                for (a, b) in set.items.iter().zip(&items) {
                    let same = a.row == b.row
                        && a.provenance.query_index == b.query_index
                        && a.provenance.rank == b.rank
                        && rel_err(a.provenance.distance, b.distance) < 1e-9;
                    if !same {
                        return Err(format!("trial {trial}: {a:?} vs oracle {b:?}"));
                    }
                }
            }
            (Err(Error::Shortfall { .. }), None) => shortfalls += 1,
            (got, want) => {
                return Err(format!(
                    "trial {trial}: library {:?} vs oracle {:?}",
                    got.map(|s| s.len()),
                    want.map(|w| w.len())
                ))
            }
        }
    }
    Ok(format!("200/200 pools match ({shortfalls} agreed shortfalls)"))
}

fn mmr_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let lambdas = [0.0, 0.25, 0.5, 0.75, 1.0];
    for trial in 0..500 {
        let dim = rng.random_range(1..=8);
        let n = rng.random_range(1..=12);
        let k = rng.random_range(1..=n);
        let lambda = lambdas[trial % lambdas.len()];
        let q = gaussian_vectors(&mut rng, 1, dim).remove(0);
        let mut rows: Vec<usize> = (0..100).collect();
        rows.shuffle(&mut rng);
        let cands: Vec<(usize, Vec<f32>)> = gaussian_vectors(&mut rng, n, dim)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (rows[i], v))
            .collect();
        let refs: Vec<(usize, &[f32])> = cands.iter().map(|(r, v)| (*r, v.as_slice())).collect();
        let got = mmr_select(&q, &refs, k, lambda).map_err(|e| e.to_string())?;
        let want = oracle_mmr(&q, &cands, k, lambda);
        if got != want {
            return Err(format!("trial {trial}: {got:?} vs oracle {want:?}"));
        }
        if lambda == 1.0 {
            let mut by_rel: Vec<(f64, usize)> = cands.iter().map(|(r, v)| (naive_cosine(v, &q), *r)).collect();
            by_rel.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let top: BTreeSet<usize> = by_rel[..k].iter().map(|x| x.1).collect();
            if got.iter().copied().collect::<BTreeSet<_>>() != top {
                return Err(format!("trial {trial}: lambda=1 set differs from cosine top-k"));
            }
        }
        let scale = |v: &[f32], s: f32| v.iter().map(|x| x * s).collect::<Vec<f32>>();
        let sq = scale(&q, rng.random_range(0.1..10.0));
        let scaled: Vec<(usize, Vec<f32>)> = cands
            .iter()
            .map(|(r, v)| (*r, scale(v, rng.random_range(0.1..10.0))))
            .collect();
        let srefs: Vec<(usize, &[f32])> = scaled.iter().map(|(r, v)| (*r, v.as_slice())).collect();
        if mmr_select(&sq, &srefs, k, lambda).map_err(|e| e.to_string())? != got {
            return Err(format!("trial {trial}: not invariant to positive scaling"));
        }
    }
    Ok("500/500 instances match; lambda=1 and scaling checks hold".into())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=16);
        let n = rng.random_range(1..=32);
        let l2 = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.1) };
        let model = LinearModel {
            weights: (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
            bias: rng.random_range(-0.5..0.5),
        };
        let batch: Vec<(Vec<f32>, u8)> = gaussian_vectors(&mut rng, n, dim)
            .into_iter()
            .map(|x| (x, rng.random_range(0..=1)))
            .collect();
        let examples: Vec<Example> = batch.iter().map(|(x, y)| Example::new(x, *y)).collect();
        let (gw, gb) = grad(&model, &examples, l2).map_err(|e| e.to_string())?;
        for j in 0..dim {
            let mut wp = model.weights.clone();
            let mut wm = model.weights.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (oracle_loss(&wp, model.bias, &batch, l2) - oracle_loss(&wm, model.bias, &batch, l2)) / (2.0 * h);
            worst = worst.max(rel_err(gw[j], fd));
        }
        let fd = (oracle_loss(&model.weights, model.bias + h, &batch, l2)
            - oracle_loss(&model.weights, model.bias - h, &batch, l2))
            / (2.0 * h);
        worst = worst.max(rel_err(gb, fd));
    }
    let detail = format!("max relative error {worst:.2e} over 100 draws");
    if worst < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Distinct admissible texts in the view.
fn feasible(view: &PoolView, ex: &Exclusions) -> usize {
    let pool = view.pool();
    view.rows()
        .iter()
        .map(|&r| pool.instance(r))
        .filter(|i| !ex.excludes(i))
        .map(|i| i.text.as_str())
        .collect::<HashSet<_>>()
        .len()
}

fn exclusion_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut exact, mut shortfalls) = (0, 0);
    for trial in 0..300 {
        let rows = rng.random_range(1..=400);
        let dim = rng.random_range(1..=8);
        let dup = rng.random_range(0.0..0.6);
        let pool = Arc::new(random_pool(&mut rng, rows, dim, &LANGS, &TASKS, dup));
        let ex = random_exclusions(&mut rng);
        let index = AnnIndex::build(PoolView::all(pool.clone()), HnswParams::default()).map_err(|e| e.to_string())?;
        let m = rng.random_range(1..=8);
        let queries = gaussian_vectors(&mut rng, m, dim);
        let mut cfg = RetrievalConfig::new(rng.random_range(1..=60));
        cfg.exclusions = ex.clone();
        if rng.random_bool(0.3) {
            cfg.mmr = Some(MmrConfig {
                lambda: rng.random_range(0.0..=1.0),
                candidate_multiplier: rng.random_range(2..=3),
            });
        }
        let avail = feasible(index.view(), &ex);
        match retrieve(&index, &pool, &queries, &cfg) {
            Ok(set) => {
                if set.len() != cfg.total_r {
                    return Err(format!("trial {trial}: {} items, wanted {}", set.len(), cfg.total_r));
                }
                if set.items.iter().any(|it| ex.excludes(&it.instance)) {
                    return Err(format!("trial {trial}: excluded instance retrieved"));
                }
                let texts: HashSet<&str> = set.items.iter().map(|it| it.instance.text.as_str()).collect();
                if texts.len() != set.len() {
                    return Err(format!("trial {trial}: duplicate texts"));
                }
                exact += 1;
            }
            Err(Error::Shortfall { achieved, .. }) => {
                if avail >= cfg.total_r || achieved != avail {
                    return Err(format!(
                        "trial {trial}: shortfall with {avail} feasible texts for R={} (achieved {achieved})",
                        cfg.total_r
                    ));
                }
                shortfalls += 1;
            }
            Err(e) => return Err(format!("trial {trial}: {e}")),
        }
    }
    Ok(format!("300 configs: {exact} exact sets, {shortfalls} infeasible shortfalls, no excluded rows"))
}

fn directional_analogue() -> Outcome {
    let start = Instant::now();
    let pair = domain_pair(&DomainPairSpec {
        seed: 606,
        ..Default::default()
    });
    let mut cfg = ExperimentConfig::new("synthetic", Arc::new(pair.target), Arc::new(pair.source));
    cfg.train_sizes = vec![20];
    cfg.retrieval_counts = vec![0, 200];
    cfg.seeds = vec![1, 2, 3, 4, 5];
    cfg.val_size = 100;
    cfg.test_size = 2000;
    let exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
    let res = exp.sweep(4).map_err(|e| e.to_string())?;
    let mean = |count: usize| {
        let f: Vec<f64> = res.rows.iter().filter(|r| r.retrieval_count == count).map(|r| r.f1_macro).collect();
        100.0 * f.iter().sum::<f64>() / f.len() as f64
    };
    let (mono, aug) = (mean(0), mean(200));
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("Mono {mono:.2} vs +200 retrieved {aug:.2} (gain {:.2} points), {secs:.1}s", aug - mono);
    if aug - mono >= 5.0 && secs < 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sweep_determinism() -> Outcome {
    let pair = domain_pair(&DomainPairSpec {
        target_count: 900,
        source_count: 3000,
        seed: 707,
        ..Default::default()
    });
    let (target, source) = (Arc::new(pair.target), Arc::new(pair.source));
    let run = |workers: usize| -> Result<Vec<u8>, String> {
        let mut cfg = ExperimentConfig::new("synthetic", target.clone(), source.clone());
        cfg.train_sizes = vec![10, 20, 50];
        cfg.retrieval_counts = vec![0, 20, 100];
        cfg.seeds = vec![1, 2, 3];
        cfg.val_size = 100;
        cfg.test_size = 500;
        cfg.retrieval.mmr = None;
        let exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
        let res = exp.sweep(workers).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("results.csv");
        res.write_csv(&path).map_err(|e| e.to_string())?;
        std::fs::read(&path).map_err(|e| e.to_string())
    };
    let first = run(1)?;
    for workers in [1, 4, 8] {
        if run(workers)? != first {
            return Err(format!("results differ with {workers} workers"));
        }
    }
    Ok(format!("4 reruns byte-identical ({} bytes, workers 1/1/4/8)", first.len()))
}

fn format_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (m, v) = (dir.path().join("p.pool.jsonl"), dir.path().join("p.vec"));
    for trial in 0..1000 {
        let rows = rng.random_range(0..=40);
        let dim = rng.random_range(1..=16);
        let mut pool = random_pool(&mut rng, rows, dim, &LANGS, &["T1", "tâche", "görev"], 0.2);
        // Stress the float encoding with extreme but finite values.
        if rows > 0 && trial % 3 == 0 {
            let mut data = pool.vectors().as_slice().to_vec();
            let special = [f32::MIN_POSITIVE, -0.0, f32::MAX, f32::MIN, 1e-45];
            for (i, x) in data.iter_mut().enumerate().take(special.len()) {
                *x = special[i];
            }
            pool = Pool::new(pool.instances().to_vec(), VectorBlock::new(dim, data).unwrap()).unwrap();
        }
        write_pool(&pool, &m, &v).map_err(|e| e.to_string())?;
        let back = load_pool(&m, &v).map_err(|e| e.to_string())?;
        let bits = |p: &Pool| p.vectors().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if back.instances() != pool.instances() || bits(&back) != bits(&pool) || back.dim() != pool.dim() {
            return Err(format!("trial {trial}: round trip differs"));
        }
    }
    Ok("1000/1000 pools bit-exact".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("ann_fidelity", ann_fidelity),
        ("retrieval_oracle_equivalence", retrieval_oracle),
        ("mmr_oracle_equivalence", mmr_oracle),
        ("gradient_correctness", gradient_check),
        ("exclusion_soundness_exactness", exclusion_soundness),
        ("directional_synthetic_gain", directional_analogue),
        ("sweep_determinism", sweep_determinism),
        ("format_round_trip", format_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", 8 - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
