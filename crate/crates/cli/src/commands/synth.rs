use std::fs::File;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::Args;

use phonation::audio::write_wav;
use phonation::dataset::{synthesize_clip, write_manifest, LabeledClip};

use super::{ensure_dir, positive, MANIFEST};
use crate::config::RunConfig;

/// `LO:HI` in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DurationRange(pub f64, pub f64);

impl FromStr for DurationRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(format!("need 0 < LO < HI, got {lo}:{hi}"));
        }
        Ok(Self(lo, hi))
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct SynthArgs {
    /// Directory that receives the WAV files and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = positive)]
    pub clips: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clip duration range in seconds, e.g. 1.2:2.0.
    #[arg(long)]
    pub duration_range: Option<DurationRange>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Writes one WAV per synthetic clip plus a manifest listing them.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<LabeledClip>> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.clips {
        config.synth.clips = n;
    }
    if let Some(DurationRange(lo, hi)) = args.duration_range {
        config.synth.duration_range_s = (lo, hi);
    }
    let config = config.finalize()?;
    config.synth.validate()?;
    ensure_dir(&args.out)?;

    let mut rows = Vec::with_capacity(config.synth.clips);
    for i in 0..config.synth.clips {
        let (clip, label) = synthesize_clip(&config.synth, i);
        let file = format!("{}.wav", label.id);
        let path = args.out.join(&file);
        write_wav(&path, &clip).with_context(|| format!("writing {}", path.display()))?;
        rows.push(LabeledClip { id: file, ..label });
    }
    let manifest = args.out.join(MANIFEST);
    let f = File::create(&manifest).with_context(|| format!("creating {}", manifest.display()))?;
    write_manifest(f, &rows)?;
    config.write_to_dir(&args.out)?;
    Ok(rows)
}
