//! Command implementations behind the `kinest` binary. Each returns the
//! text it prints.

use std::fmt::Write as _;
use std::path::Path;

use crate::bench::{run_bench, BenchReport, BenchSettings};
use crate::error::{Error, Result};
use crate::infer::infer;
use crate::io::checkpoint;
use crate::io::runconfig::RunConfig;
use crate::io::seqfile::{SeqKind, SequenceFile};
use crate::io::skeleton;
use crate::kinematics::{fks_order, index_order, uks_order, KinematicTree};
use crate::metrics::{metrics, MetricReport};
use crate::model::Weights;
use crate::synth::{gen_synthetic, sparse_from_pose};
use crate::train::{train_micro, TrainReport};
use crate::verify::{self, Check, VerifyOptions};

/// Flags shared by every command; explicit flags override the run config.
#[derive(Debug, Clone, Default)]
pub struct Common<'a> {
    pub config: Option<&'a Path>,
    pub weights: Option<&'a Path>,
    pub skeleton: Option<&'a Path>,
    pub fps: Option<f64>,
    pub seed: Option<u64>,
    pub chunk: Option<usize>,
    pub out: Option<&'a Path>,
}

impl Common<'_> {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.model.seed = s;
        }
        if let Some(c) = self.chunk {
            cfg.model.chunk = c;
        }
        if let Some(f) = self.fps {
            cfg.fps = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tree(&self) -> Result<KinematicTree> {
        match self.skeleton {
            Some(p) => skeleton::load(p),
            None => Ok(KinematicTree::smpl_default()),
        }
    }

    /// Checkpoint weights if given, otherwise a fresh seeded initialization.
    pub fn weights(&self, cfg: &RunConfig) -> Result<Weights> {
        match self.weights {
            Some(p) => checkpoint::load(&cfg.model, p),
            None => Weights::init(&cfg.model),
        }
    }

    fn require_out(&self) -> Result<&Path> {
        self.out
            .ok_or_else(|| Error::InvalidValue("--out is required for this command".into()))
    }
}

pub fn orders() -> String {
    format!(
        "index: {}\nfks: {}\nuks: {}\n",
        index_order().to_csv(),
        fks_order().to_csv(),
        uks_order().to_csv()
    )
}

pub fn gen_synthetic_cmd(common: &Common, len: usize, kind: SeqKind) -> Result<String> {
    let fps = common.fps.unwrap_or(crate::metrics::DEFAULT_FPS);
    let file = gen_synthetic(common.seed.unwrap_or(0), len, kind, fps)?;
    let out = common.require_out()?;
    file.save(out)?;
    Ok(format!("wrote {len} frames of {kind} to {}\n", out.display()))
}

pub fn infer_cmd(common: &Common, input: &Path) -> Result<String> {
    let cfg = common.run_config()?;
    let w = common.weights(&cfg)?;
    let x = SequenceFile::load(input)?;
    if x.kind() != SeqKind::SparseInput {
        return Err(Error::InvalidValue(format!("{} is not a sparse_input file", input.display())));
    }
    let y = infer(&x.to_matrix(), &w)?;
    let file = SequenceFile::from_matrix(SeqKind::Pose, x.fps(), &y)?;
    // reject outputs that are not valid rotations before writing
    file.to_pose()?;
    let out = common.require_out()?;
    file.save(out)?;
    Ok(format!("wrote {} frames to {}\n", y.rows(), out.display()))
}

pub fn eval_cmd(common: &Common, pred: &Path, gt: &Path) -> Result<(MetricReport, String)> {
    let y = SequenceFile::load(pred)?;
    let z = SequenceFile::load(gt)?;
    let fps = common.fps.unwrap_or(z.fps());
    let tree = common.tree()?;
    let report = metrics(&y.to_pose()?, &z.to_pose()?, &tree, fps)?;
    if let Some(out) = common.out {
        std::fs::write(out, report.to_csv())?;
    }
    let text = report.to_string();
    Ok((report, text))
}

/// Returns the checks and their printed form; the caller maps failures to
/// the property-failure exit code.
pub fn verify_cmd(common: &Common, trials: usize, uks_override: Option<Vec<usize>>) -> (Vec<Check>, String) {
    let opts = VerifyOptions {
        seed: common.seed.unwrap_or(0),
        duality_trials: trials,
        uks_override,
    };
    let checks = verify::run(&opts);
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(text, "{} of {} properties passed", checks.len() - failed, checks.len());
    (checks, text)
}

/// Trains on one pose file. The sparse input is `input` if given,
/// otherwise derived from the pose through forward kinematics.
pub fn train_cmd(common: &Common, data: &Path, input: Option<&Path>, iters: usize, trace: Option<&Path>) -> Result<(TrainReport, String)> {
    let cfg = common.run_config()?;
    let mut w = common.weights(&cfg)?;
    let target_file = SequenceFile::load(data)?;
    let pose = target_file.to_pose()?;
    let x = match input {
        Some(p) => SequenceFile::load(p)?.to_matrix(),
        None => sparse_from_pose(&pose, &common.tree()?, target_file.fps())?,
    };
    let target = pose.with_root(None)?;
    let report = train_micro(&mut w, &x, &target, &cfg.loss, &cfg.spsa, iters)?;
    let out = common.require_out()?;
    checkpoint::save(&w, out)?;
    if let Some(p) = trace {
        std::fs::write(p, report.to_csv())?;
    }
    let smoothed = report.smoothed().last().copied().unwrap_or(report.initial);
    let text = format!(
        "parameters: {}\ninitial loss: {:.6}\nsmoothed final loss: {:.6}\nfinal loss: {:.6}\nrelative decrease: {:.1}%\nwrote weights to {}\n",
        w.param_count(),
        report.initial,
        smoothed,
        report.final_loss,
        100.0 * report.relative_decrease(),
        out.display()
    );
    Ok((report, text))
}

pub fn bench_cmd(common: &Common, lengths: &[usize], trials: usize) -> Result<(BenchReport, String)> {
    let settings = BenchSettings {
        chunk: common.chunk.unwrap_or(crate::ssd::DEFAULT_CHUNK),
        trials,
        seed: common.seed.unwrap_or(0),
        ..BenchSettings::default()
    };
    let report = run_bench(lengths, &settings)?;
    let text = report.to_string();
    Ok((report, text))
}
