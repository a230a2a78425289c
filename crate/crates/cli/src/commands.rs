use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use caevpr::data::{
    build_ground_truth_radius, frames_for_ids, load_pair_list, read_dvec, read_fmap,
    read_manifest, read_pose_table, write_dvec, write_ground_truth, DescriptorSet, FeatureMapSet,
    GroundTruth,
};
use caevpr::eval::{
    evaluate, read_matches_csv, topk, write_l2_hist_csv, write_matches_csv, write_pr_csv,
    write_report, EvalOptions, MatchResult,
};
use caevpr::model::{
    build_model, encode_set, load_checkpoint, save_checkpoint, train_with_hook, ArchSpec,
    Backbone, BlockGeometry, TrainConfig,
};
use caevpr::ops::{LayerNormConfig, LayerNormMode};
use thiserror::Error;

use crate::args::{
    BackboneArg, EncodeArgs, EvalArgs, GtArgs, LayerNormArg, MatchArgs, ProtocolArg, TrainArgs,
};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: caevpr::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] caevpr::Error),
}

fn core_exit_code(e: &caevpr::Error) -> u8 {
    match e {
        caevpr::Error::Config(_) | caevpr::Error::Architecture(_) => EXIT_USAGE,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input { source, .. } => core_exit_code(source),
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => core_exit_code(e),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_NUMERIC => "numeric",
            _ => "data",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Attaches the offending path to a library error.
fn at<T>(path: &Path, r: caevpr::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn backbone(arg: BackboneArg) -> Backbone {
    match arg {
        BackboneArg::Vgg16 => Backbone::Vgg16,
        BackboneArg::Alexnet => Backbone::Alexnet,
        BackboneArg::Custom => Backbone::Custom,
    }
}

fn arch_spec(args: &TrainArgs, features: &FeatureMapSet) -> Result<ArchSpec> {
    let bb = backbone(args.backbone);
    if features.backbone != bb {
        return Err(CliError::Input {
            path: args.features.clone(),
            source: caevpr::Error::Data(format!(
                "feature maps were extracted with {}, but --backbone is {bb}",
                features.backbone
            )),
        });
    }
    let spec = match bb {
        Backbone::Custom => {
            let blocks: [BlockGeometry; 3] = args
                .blocks
                .iter()
                .map(|b| b.parse())
                .collect::<caevpr::Result<Vec<_>>>()?
                .try_into()
                .map_err(|v: Vec<_>| {
                    CliError::Usage(format!(
                        "--blocks needs exactly three blocks, got {}",
                        v.len()
                    ))
                })?;
            ArchSpec::custom(features.dims, args.d1, args.d2, args.d3, blocks)
        }
        named => {
            if !args.blocks.is_empty() {
                return Err(CliError::Usage(format!(
                    "--blocks only applies to --backbone custom, not {named}"
                )));
            }
            ArchSpec::for_backbone(named, args.d1, args.d2, args.d3)?
        }
    };
    spec.validate()?;
    if !spec.is_canonical_d3() {
        log::warn!("d3 = {} is outside the usual powers of two 8..512", spec.d3);
    }
    Ok(spec)
}

fn loss_header(args: &TrainArgs, spec: &ArchSpec) -> String {
    let mut h = format!(
        "# caevpr train lr={} batch={} epochs={} seed={} backbone={} d1={} d2={} d3={} layernorm={}",
        args.lr,
        args.batch,
        args.epochs,
        args.seed,
        spec.backbone,
        spec.d1,
        spec.d2,
        spec.d3,
        match args.layernorm {
            LayerNormArg::PerSample => "per_sample",
            LayerNormArg::Frozen => "frozen",
        }
    );
    if spec.backbone == Backbone::Custom {
        let blocks: Vec<String> = spec.blocks.iter().map(|b| b.to_string()).collect();
        let _ = write!(h, " blocks={}", blocks.join(","));
    }
    h.push('\n');
    h
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let features = at(&args.features, read_fmap(&args.features))?;
    let val = match &args.val {
        Some(p) => at(p, read_fmap(p))?,
        None => FeatureMapSet::new(features.backbone, features.dims),
    };
    let spec = arch_spec(args, &features)?;
    let cfg = TrainConfig {
        lr: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        layernorm: match args.layernorm {
            LayerNormArg::PerSample => LayerNormConfig::default(),
            LayerNormArg::Frozen => LayerNormConfig {
                mode: LayerNormMode::FrozenStats,
                ..LayerNormConfig::default()
            },
        },
        shuffle: true,
        checkpoint_every: args.checkpoint_every,
    };
    cfg.validate()?;
    create_dir(&args.out)?;

    let mut model = build_model(spec, args.seed)?;
    log::info!(
        "training {} parameters on {} maps ({} validation)",
        model.param_count(),
        features.len(),
        val.len()
    );
    let out = args.out.clone();
    let last = args.epochs;
    let mut hook_err = None;
    let log = train_with_hook(&mut model, &features, &val, &cfg, |rec, m| {
        if rec.epoch == last {
            return Ok(());
        }
        let path = out.join(format!("checkpoint-epoch{:04}.caec", rec.epoch));
        let bytes = save_checkpoint(m)?;
        if let Err(e) = write_bytes(&path, &bytes) {
            hook_err = Some(e);
            return Err(caevpr::Error::Data("checkpoint write failed".into()));
        }
        Ok(())
    });
    if let Some(e) = hook_err {
        return Err(e);
    }
    let log = log?;

    write_bytes(&args.out.join("model.caec"), &save_checkpoint(&model)?)?;
    let mut csv = loss_header(args, &model.spec);
    csv.push_str("epoch,train_loss,val_loss\n");
    for e in &log.epochs {
        let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", e.epoch, e.train_loss, val);
    }
    write_bytes(&args.out.join("loss.csv"), csv.as_bytes())?;
    if let Some(e) = log.epochs.last() {
        println!(
            "trained {} epochs: train loss {:.6}{}",
            e.epoch,
            e.train_loss,
            e.val_loss.map(|v| format!(", val loss {v:.6}")).unwrap_or_default()
        );
    }
    Ok(())
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let bytes = fs::read(&args.checkpoint).map_err(|source| CliError::Io {
        path: args.checkpoint.clone(),
        source,
    })?;
    let model = at(&args.checkpoint, load_checkpoint(&bytes))?;
    let features = at(&args.features, read_fmap(&args.features))?;
    let descriptors = at(&args.features, encode_set(&model, &features, args.batch))?;
    at(&args.out, write_dvec(&args.out, &descriptors))?;
    println!(
        "encoded {} maps into {}-d descriptors",
        descriptors.len(),
        descriptors.dim
    );
    Ok(())
}

fn load_descriptors(path: &Path) -> Result<DescriptorSet> {
    at(path, read_dvec(path))
}

pub fn match_cmd(args: &MatchArgs) -> Result<()> {
    let q = load_descriptors(&args.queries)?;
    let r = load_descriptors(&args.references)?;
    if q.model_checksum != r.model_checksum {
        log::warn!("query and reference descriptors come from different checkpoints");
    }
    let matches = topk(&q, &r, args.k)?;
    at(&args.out, write_matches_csv(&matches, &args.out))?;
    println!("ranked {} references for {} queries", args.k, matches.len());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let gt = at(&args.gt, load_pair_list(&args.gt, None))?;
    let descriptors = match (&args.queries, &args.references) {
        (Some(q), Some(r)) => Some((load_descriptors(q)?, load_descriptors(r)?)),
        _ => None,
    };
    let matches: Vec<MatchResult> = match (&args.matches, &descriptors) {
        (Some(p), _) => at(p, read_matches_csv(p))?,
        (None, Some((q, r))) => {
            let k = args.ks.iter().copied().max().unwrap_or(1).min(r.len()).max(1);
            topk(q, r, k)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "eval needs --matches or both --queries and --references".into(),
            ))
        }
    };
    let opts = EvalOptions {
        ks: args.ks.clone(),
        threshold_count: args.thresholds,
        bins: args.bins,
    };
    let report = evaluate(
        &matches,
        &gt,
        descriptors.as_ref().map(|(q, r)| (q, r)),
        &opts,
    )?;
    create_dir(&args.out)?;
    let report_path = args.out.join("report.json");
    at(&report_path, write_report(&report, &report_path))?;
    let pr_path = args.out.join("pr_curve.csv");
    at(&pr_path, write_pr_csv(&report.pr_curve, &pr_path))?;
    match &report.l2 {
        Some(l2) => {
            let p = args.out.join("l2_hist.csv");
            at(&p, write_l2_hist_csv(l2, &p))?;
        }
        None => log::warn!("no descriptors given; skipping L2 histograms"),
    }
    let mut line = String::new();
    for (k, v) in &report.recall_at {
        let _ = write!(line, "R@{k}={v:.4} ");
    }
    let _ = write!(line, "AP={:.4}", report.ap);
    if let Some(g) = report.mean_gap {
        let _ = write!(line, " mean_gap={g:.4}");
    }
    println!("{line}");
    Ok(())
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str, protocol: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("--protocol {protocol} needs {flag}")))
}

pub fn gt(args: &GtArgs) -> Result<()> {
    let gt: GroundTruth = match args.protocol {
        ProtocolArg::Radius => {
            let qp = need(&args.queries, "--queries", "radius")?;
            let rp = need(&args.references, "--references", "radius")?;
            let q = at(qp, read_pose_table(qp))?;
            let r = at(rp, read_pose_table(rp))?;
            build_ground_truth_radius(&q, &r, args.radius)?
        }
        ProtocolArg::Frames => {
            let qp = need(&args.queries, "--queries", "frames")?;
            let rp = need(&args.references, "--references", "frames")?;
            let q = at(qp, read_manifest(qp))?;
            let r = at(rp, read_manifest(rp))?;
            frames_for_ids(&q, &r, args.window)?
        }
        ProtocolArg::Pairs => {
            let pp = need(&args.pairs, "--pairs", "pairs")?;
            let manifest = match &args.manifest {
                Some(m) => Some(at(m, read_manifest(m))?),
                None => None,
            };
            at(pp, load_pair_list(pp, manifest.as_deref()))?
        }
    };
    at(&args.out, write_ground_truth(&gt, &args.out))?;
    let pairs: usize = gt.iter().map(|(_, refs)| refs.len()).sum();
    println!("{} queries, {pairs} valid pairs", gt.len());
    Ok(())
}
