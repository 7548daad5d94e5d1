use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use singstyle_core::dsp::{FrameConfig, DEFAULT_GL_ITERS};
use singstyle_core::flow::CFMConfig;
use singstyle_core::infill::{ConvertSettings, TrainConfig};

use crate::exit::Usage;

/// Everything a subcommand may need. Built from defaults, then the config
/// file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame: FrameConfig,
    pub model: CFMConfig,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub seed: u64,
    pub steps: usize,
    pub finetune_steps: usize,
    pub gl_iters: usize,
    pub postprocess: bool,
    pub n_songs: usize,
    pub notes_per_song: usize,
    pub corpus_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            model: CFMConfig::default(),
            batch_size: 4,
            crop_frames: 128,
            seed: 0,
            steps: 5000,
            finetune_steps: 1000,
            gl_iters: DEFAULT_GL_ITERS,
            postprocess: false,
            n_songs: 5,
            notes_per_song: 8,
            corpus_dir: None,
            cache_dir: None,
            checkpoint: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Usage(format!("invalid value {value:?} for {key}")).into())
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Usage(format!("invalid boolean {value:?} for {key}")).into()),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "sample_rate" => self.frame.sample_rate = parse(key, v)?,
            "fft_size" => self.frame.fft_size = parse(key, v)?,
            "hop" => self.frame.hop = parse(key, v)?,
            "n_mels" => {
                self.frame.n_mels = parse(key, v)?;
                self.model.n_mels = self.frame.n_mels;
            }
            "fmin" => self.frame.fmin = parse(key, v)?,
            "fmax" => self.frame.fmax = parse(key, v)?,
            "sigma_min" => self.model.sigma_min = parse(key, v)?,
            "euler_steps" => self.model.euler_steps = parse(key, v)?,
            "learning_rate" => self.model.learning_rate = parse(key, v)?,
            "style_dim" => self.model.style_dim = parse(key, v)?,
            "channels" => self.model.channels = parse(key, v)?,
            "style_tokens" => self.model.style_tokens = parse(key, v)?,
            "head_dim" => self.model.head_dim = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "crop_frames" => self.crop_frames = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "finetune_steps" => self.finetune_steps = parse(key, v)?,
            "gl_iters" => self.gl_iters = parse(key, v)?,
            "postprocess" => self.postprocess = parse_bool(key, v)?,
            "n_songs" => self.n_songs = parse(key, v)?,
            "notes_per_song" => self.notes_per_song = parse(key, v)?,
            "corpus_dir" => self.corpus_dir = Some(v.into()),
            "cache_dir" => self.cache_dir = Some(v.into()),
            "checkpoint" => self.checkpoint = Some(v.into()),
            other => return Err(Usage(format!("unknown config key {other:?}")).into()),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Usage(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(singstyle_core::Error::MissingFile(path.to_path_buf()).into());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Usage(format!("expected KEY=VALUE, got {kv:?}")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate().map_err(|e| Usage(e.to_string()))?;
        self.model.validate().map_err(|e| Usage(e.to_string()))?;
        self.train_config().validate().map_err(|e| Usage(e.to_string()))?;
        if self.model.n_mels != self.frame.n_mels {
            return Err(Usage("model and frame n_mels differ".into()).into());
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { batch_size: self.batch_size, crop_frames: self.crop_frames, seed: self.seed }
    }

    pub fn convert_settings(&self) -> ConvertSettings {
        ConvertSettings {
            euler_steps: self.model.euler_steps,
            gl_iters: self.gl_iters,
            postprocess: self.postprocess,
            seed: self.seed,
        }
    }

    /// Renders every key back to `key = value` text.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut lines = vec![
            ("sample_rate", self.frame.sample_rate.to_string()),
            ("fft_size", self.frame.fft_size.to_string()),
            ("hop", self.frame.hop.to_string()),
            ("n_mels", self.frame.n_mels.to_string()),
            ("fmin", self.frame.fmin.to_string()),
            ("fmax", self.frame.fmax.to_string()),
            ("sigma_min", self.model.sigma_min.to_string()),
            ("euler_steps", self.model.euler_steps.to_string()),
            ("learning_rate", self.model.learning_rate.to_string()),
            ("style_dim", self.model.style_dim.to_string()),
            ("channels", self.model.channels.to_string()),
            ("style_tokens", self.model.style_tokens.to_string()),
            ("head_dim", self.model.head_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("crop_frames", self.crop_frames.to_string()),
            ("seed", self.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("finetune_steps", self.finetune_steps.to_string()),
            ("gl_iters", self.gl_iters.to_string()),
            ("postprocess", self.postprocess.to_string()),
            ("n_songs", self.n_songs.to_string()),
            ("notes_per_song", self.notes_per_song.to_string()),
        ];
        for (k, p) in [("corpus_dir", &self.corpus_dir), ("cache_dir", &self.cache_dir), ("checkpoint", &self.checkpoint)] {
            if let Some(s) = path(p) {
                lines.push((k, s));
            }
        }
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nsteps = 12\n\nchannels=32\npostprocess = yes\ncorpus_dir = /tmp/x\n", "t").unwrap();
        assert_eq!((c.steps, c.model.channels, c.postprocess), (12, 32, true));
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text(), "t").unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn bad_lines_are_usage_errors() {
        let mut c = RunConfig::default();
        for bad in ["nokey", "bogus = 1", "steps = many", "postprocess = maybe"] {
            let e = c.apply_text(bad, "t").unwrap_err();
            assert!(e.chain().any(|c| c.downcast_ref::<Usage>().is_some()), "{bad}");
        }
    }
}
