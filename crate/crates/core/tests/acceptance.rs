//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use caevpr::data::{
    read_dvec_bytes, read_fmap_bytes, write_dvec_bytes, write_fmap_bytes, DescriptorSet,
    FeatureMapSet,
};
use caevpr::eval::{average_precision, pr_curve, recall_at_k, topk, PrPoint};
use caevpr::model::{
    build_model, encode_set, load_checkpoint, save_checkpoint, train, ArchSpec, Backbone,
    TrainConfig, CANONICAL_D3,
};
use caevpr::ops::{adam_step, AdamConfig};
use caevpr::{MapDims, Param};
use common::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_suite_criterion() -> Outcome {
    let start = Instant::now();
    let rows = gradient_suite(GRADIENT_SEEDS);
    let elapsed = start.elapsed();
    let ok = rows.iter().all(|r| r.passed()) && elapsed < Duration::from_secs(60);
    let parts: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.1e}/{:.0e}", r.layer, r.worst, r.tolerance))
        .collect();
    outcome(
        ok,
        format!("{} seeds each; {}; {:.1?} (< 60 s)", GRADIENT_SEEDS, parts.join(", "), elapsed),
    )
}

fn geometry_criterion() -> Outcome {
    let len = |s: ArchSpec| s.descriptor_len().unwrap();
    let got = [
        len(ArchSpec::vgg16(128, 128, 256)),
        len(ArchSpec::alexnet(128, 128, 256)),
        len(ArchSpec::vgg16(128, 128, 128)),
        len(ArchSpec::alexnet(128, 128, 128)),
    ];
    let built = build_model(ArchSpec::vgg16(128, 128, 256), 0).unwrap().descriptor_len();
    outcome(
        got == [8192, 8192, 4096, 4096] && built == 8192,
        format!("vgg16/alexnet d3=256 → {}/{}, d3=128 → {}/{}", got[0], got[1], got[2], got[3]),
    )
}

fn round_trip_criterion() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for backbone in [Backbone::Vgg16, Backbone::Alexnet] {
        for d3 in CANONICAL_D3 {
            let spec = ArchSpec::for_backbone(backbone, 128, 128, d3).unwrap();
            let m = build_model(spec, 0).unwrap();
            let mut r = rng(d3 as u64);
            let x = tensor(&mut r, spec.input.batch(1));
            let z = m.encoder_forward(&m.normalize(&x).unwrap()).unwrap();
            let y = m.decoder_forward(&z).unwrap();
            checked += 1;
            if y.dims() != x.dims() {
                failures.push(format!("{backbone} d3={d3}: {:?}", y.dims()));
            }
        }
    }
    if failures.is_empty() {
        outcome(true, format!("{checked} configurations, d3 ∈ {CANONICAL_D3:?}, both backbones"))
    } else {
        outcome(false, failures.join("; "))
    }
}

fn overfit_criterion() -> Outcome {
    let run = overfit_run(64, 64, 200);
    let ratio = run.last / run.initial;
    outcome(
        ratio <= 0.10 && run.steps == 200 && run.elapsed < Duration::from_secs(120),
        format!(
            "{} steps: {:.4} → {:.4} (ratio {:.4} ≤ 0.10); {:.1?} (< 120 s)",
            run.steps, run.initial, run.last, ratio, run.elapsed
        ),
    )
}

fn adam_criterion() -> Outcome {
    let mut p = Param::filled("theta", vec![1], 0.0).unwrap();
    p.grad[0] = 1.0;
    adam_step(&mut [&mut p], &AdamConfig::default()).unwrap();
    let got = p.value[0] as f64;
    let want = -1e-3 / (1.0 + 1e-8);
    outcome(
        (got - want).abs() <= 1e-9,
        format!("θ = {got:.12} (want {want:.12} ± 1e-9)"),
    )
}

fn retrieval_criterion() -> Outcome {
    let mut r = rng(2024);
    let q = unit_vectors(&mut r, 50, 64);
    let refs = unit_vectors(&mut r, 500, 64);
    let got = topk(&descriptor_set("q", &q), &descriptor_set("r", &refs), 500).unwrap();
    let mut mismatches = 0;
    for (i, m) in got.iter().enumerate() {
        let want = brute_force_ranking(&q[i], &refs);
        for (hit, (j, _)) in m.ranked.iter().zip(&want) {
            if hit.reference_id != format!("r{j}") {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("50×500 full ranking, {mismatches} id/rank mismatches"))
}

fn metric_criterion() -> Outcome {
    let pt = |recall, precision| PrPoint {
        threshold: 0.0,
        precision,
        recall,
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    let ap = average_precision(&[pt(0.5, 1.0), pt(1.0, 0.5)]).unwrap();

    let (matches, gt) = hand_fixture();
    let ks: Vec<usize> = HAND_RECALL.iter().map(|r| r.0).collect();
    let rec = recall_at_k(&matches, &gt, &ks).unwrap();
    let recall_ok = HAND_RECALL.iter().all(|&(k, v)| rec[&k] == v);
    let th: Vec<f64> = HAND_PR.iter().map(|p| p.0).collect();
    let pr = pr_curve(&matches, &gt, &th).unwrap();
    let pr_ok = pr
        .iter()
        .zip(&HAND_PR)
        .all(|(p, &(_, tp, fp, fn_))| (p.tp, p.fp, p.fn_) == (tp, fp, fn_));

    let mut r = rng(5);
    let a = unit_vectors(&mut r, 500, 128);
    let b = unit_vectors(&mut r, 500, 128);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let s: f64 = x.iter().zip(y).map(|(&p, &q)| p as f64 * q as f64).sum();
            let d2: f64 = x.iter().zip(y).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
            (d2 - (2.0 - 2.0 * s)).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        ap == 0.75 && recall_ok && pr_ok && worst < 1e-5,
        format!(
            "AP {ap}; R@1/5/10 {:.4}/{:.4}/{:.4} {}; PR counts {}; max |d²−(2−2s)| {worst:.1e}",
            rec[&1],
            rec[&5],
            rec[&10],
            if recall_ok { "exact" } else { "MISMATCH" },
            if pr_ok { "exact" } else { "MISMATCH" },
        ),
    )
}

fn formats_criterion() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();

    let maps = {
        let mut r = rng(9);
        let mut s = FeatureMapSet::new(Backbone::Vgg16, MapDims::new(512, 30, 40));
        for i in 0..3 {
            s.push(format!("img{i:04}"), uniform(&mut r, 512 * 30 * 40, -5.0, 5.0)).unwrap();
        }
        s
    };
    let fbytes = write_fmap_bytes(&maps).unwrap();
    if read_fmap_bytes(&fbytes).ok().as_ref() != Some(&maps) {
        problems.push("fmap round trip");
    }

    let mut r = rng(10);
    let mut dvec = DescriptorSet::new(4096, *b"checksum").unwrap();
    for (i, v) in unit_vectors(&mut r, 20, 4096).into_iter().enumerate() {
        dvec.push(format!("d{i}"), v).unwrap();
    }
    let dbytes = write_dvec_bytes(&dvec).unwrap();
    if read_dvec_bytes(&dbytes).ok().as_ref() != Some(&dvec) {
        problems.push("dvec round trip");
    }

    let spec = small_spec(8, 8);
    let data = synthetic_maps(spec.input, 4, 1);
    let mut m = build_model(spec, 1).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::default() };
    train(&mut m, &data, &FeatureMapSet::new(Backbone::Custom, spec.input), &cfg).unwrap();
    let cbytes = save_checkpoint(&m).unwrap();
    match load_checkpoint(&cbytes) {
        Ok(back) => {
            let same = back.params() == m.params()
                && back.bn_states() == m.bn_states()
                && back.spec == m.spec
                && save_checkpoint(&back).unwrap() == cbytes;
            if !same {
                problems.push("checkpoint round trip");
            }
        }
        Err(_) => problems.push("checkpoint load"),
    }

    let corrupt = |b: &[u8]| {
        let mut v = b.to_vec();
        v[0] ^= 0x20;
        v
    };
    if read_fmap_bytes(&corrupt(&fbytes)).is_ok()
        || read_dvec_bytes(&corrupt(&dbytes)).is_ok()
        || load_checkpoint(&corrupt(&cbytes)).is_ok()
    {
        problems.push("corrupted magic accepted");
    }
    let cuts = |len: usize| [0, 3, 5, 12, len / 2, len - 1];
    if cuts(fbytes.len()).iter().any(|&c| read_fmap_bytes(&fbytes[..c]).is_ok())
        || cuts(dbytes.len()).iter().any(|&c| read_dvec_bytes(&dbytes[..c]).is_ok())
        || cuts(cbytes.len()).iter().any(|&c| load_checkpoint(&cbytes[..c]).is_ok())
    {
        problems.push("truncation accepted");
    }
    let elapsed = start.elapsed();
    let ok = problems.is_empty() && elapsed < Duration::from_secs(10);
    outcome(
        ok,
        if problems.is_empty() {
            format!(
                "FMAP {} B, DVEC {} B, checkpoint {} B bit-exact; magic/truncation rejected; {elapsed:.1?} (< 10 s)",
                fbytes.len(),
                dbytes.len(),
                cbytes.len()
            )
        } else {
            format!("{}; {elapsed:.1?}", problems.join(", "))
        },
    )
}

fn determinism_criterion() -> Outcome {
    let spec = small_spec(8, 16);
    let data = synthetic_maps(spec.input, 10, 3);
    let val = synthetic_maps(spec.input, 3, 4);
    let run = || {
        let mut m = build_model(spec, 77).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 5, ..TrainConfig::default() };
        let log = train(&mut m, &data, &val, &cfg).unwrap();
        let log_json = serde_json::to_vec(&log).unwrap();
        let ckpt = save_checkpoint(&m).unwrap();
        let dvec = write_dvec_bytes(&encode_set(&m, &data, 3).unwrap()).unwrap();
        (log_json, ckpt, dvec)
    };
    let (a, b) = (run(), run());
    outcome(
        a == b,
        format!(
            "log {} B, checkpoint {} B, descriptors {} B identical across two runs",
            a.0.len(),
            a.1.len(),
            a.2.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", gradient_suite_criterion),
        ("architecture geometry", geometry_criterion),
        ("shape round trip", round_trip_criterion),
        ("overfit", overfit_criterion),
        ("adam single step", adam_criterion),
        ("retrieval exactness", retrieval_criterion),
        ("metric oracles", metric_criterion),
        ("format round trips", formats_criterion),
        ("determinism", determinism_criterion),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("[{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
