//! Command-line flags and the optional TOML config file that mirrors them.
//!
//! Every flag has a config-file key of the same (kebab-case) name. Values
//! given on the command line win over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use etap_core::Precision;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    Naive,
    Standard,
    Etap,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [
        PipelineMode::Naive,
        PipelineMode::Standard,
        PipelineMode::Etap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PipelineMode::Naive => "naive",
            PipelineMode::Standard => "standard",
            PipelineMode::Etap => "etap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionArg {
    Exact64,
    Fp32,
    Fp16emu,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Exact64 => Precision::Exact64,
            PrecisionArg::Fp32 => Precision::Fp32,
            PrecisionArg::Fp16emu => Precision::Fp16Emu,
        }
    }
}

/// `--scale FLOAT|auto`; `auto` means `1/sqrt(d_qk)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScaleArg {
    Value(f64),
    Named(AutoScale),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoScale {
    Auto,
}

impl ScaleArg {
    pub fn resolve(self) -> Option<f64> {
        match self {
            ScaleArg::Value(x) => Some(x),
            ScaleArg::Named(AutoScale::Auto) => None,
        }
    }
}

impl FromStr for ScaleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(ScaleArg::Named(AutoScale::Auto));
        }
        s.parse::<f64>()
            .map(ScaleArg::Value)
            .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
    }
}

impl fmt::Display for ScaleArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleArg::Value(x) => write!(f, "{x}"),
            ScaleArg::Named(_) => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct Flags {
    /// TOML file whose keys mirror these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Pipeline to run (repeatable or comma-separated)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub mode: Option<Vec<PipelineMode>>,

    /// KV context length (repeatable or comma-separated)
    #[arg(long = "seq-len", value_delimiter = ',')]
    pub seq_len: Option<Vec<usize>>,

    #[arg(long)]
    pub batch: Option<usize>,

    #[arg(long)]
    pub heads: Option<usize>,

    #[arg(long = "q-tokens")]
    pub q_tokens: Option<usize>,

    #[arg(long = "d-qk")]
    pub d_qk: Option<usize>,

    #[arg(long = "d-v")]
    pub d_v: Option<usize>,

    /// Query block size
    #[arg(long)]
    pub br: Option<usize>,

    /// KV block size (repeatable or comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub bc: Option<Vec<usize>>,

    /// Circular buffer depth
    #[arg(long)]
    pub stages: Option<usize>,

    /// Arithmetic precision (repeatable or comma-separated)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub precision: Option<Vec<PrecisionArg>>,

    /// Logit multiplier, or `auto` for 1/sqrt(d_qk)
    #[arg(long)]
    pub scale: Option<ScaleArg>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub repeats: Option<usize>,

    /// Write the CSV/report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Allow shapes beyond the desk-scale limits
    #[arg(long = "allow-large")]
    pub allow_large: bool,

    /// Max-abs tolerance for verification checks
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// Byte budget for the naive score matrix
    #[arg(long = "max-s-bytes")]
    pub max_s_bytes: Option<usize>,

    /// Number of KV blocks to simulate (default: ceil(seq-len / bc))
    #[arg(long)]
    pub blocks: Option<u64>,

    #[arg(long = "t-load")]
    pub t_load: Option<u64>,

    #[arg(long = "t-compute")]
    pub t_compute: Option<u64>,

    #[arg(long = "t-barrier")]
    pub t_barrier: Option<u64>,

    /// Split each block's value update across consumer and producer
    #[arg(long)]
    pub split: bool,

    #[arg(long = "m-min")]
    pub m_min: Option<u64>,

    #[arg(long = "n-step")]
    pub n_step: Option<u64>,

    #[arg(long = "k-step")]
    pub k_step: Option<u64>,

    #[arg(long = "peak-tflops")]
    pub peak_tflops: Option<f64>,

    /// Negative control: rescale ETAP accumulators by exp(m_new - m_old)
    #[arg(long = "fault-amplify-rescale", hide = true)]
    pub fault_amplify_rescale: bool,
}

impl Flags {
    /// Merge with the config file named by `--config`, if any.
    pub fn resolve(self) -> Result<Flags, CliError> {
        match &self.config {
            Some(path) => {
                let file = Flags::from_file(path)?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    pub fn from_file(path: &Path) -> Result<Flags, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Field-wise `self` over `base`.
    pub fn over(self, base: Flags) -> Flags {
        Flags {
            config: self.config.or(base.config),
            mode: self.mode.or(base.mode),
            seq_len: self.seq_len.or(base.seq_len),
            batch: self.batch.or(base.batch),
            heads: self.heads.or(base.heads),
            q_tokens: self.q_tokens.or(base.q_tokens),
            d_qk: self.d_qk.or(base.d_qk),
            d_v: self.d_v.or(base.d_v),
            br: self.br.or(base.br),
            bc: self.bc.or(base.bc),
            stages: self.stages.or(base.stages),
            precision: self.precision.or(base.precision),
            scale: self.scale.or(base.scale),
            seed: self.seed.or(base.seed),
            repeats: self.repeats.or(base.repeats),
            out: self.out.or(base.out),
            allow_large: self.allow_large || base.allow_large,
            tolerance: self.tolerance.or(base.tolerance),
            max_s_bytes: self.max_s_bytes.or(base.max_s_bytes),
            blocks: self.blocks.or(base.blocks),
            t_load: self.t_load.or(base.t_load),
            t_compute: self.t_compute.or(base.t_compute),
            t_barrier: self.t_barrier.or(base.t_barrier),
            split: self.split || base.split,
            m_min: self.m_min.or(base.m_min),
            n_step: self.n_step.or(base.n_step),
            k_step: self.k_step.or(base.k_step),
            peak_tflops: self.peak_tflops.or(base.peak_tflops),
            fault_amplify_rescale: self.fault_amplify_rescale || base.fault_amplify_rescale,
        }
    }

    pub fn modes(&self) -> Result<Vec<PipelineMode>, CliError> {
        match &self.mode {
            None => Ok(PipelineMode::ALL.to_vec()),
            Some(m) if m.is_empty() => Err(CliError::Usage("mode list is empty".into())),
            Some(m) => Ok(m.clone()),
        }
    }

    pub fn seq_lens(&self, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let v = self.seq_len.clone().unwrap_or_else(|| default.to_vec());
        if v.is_empty() {
            return Err(CliError::Usage("seq-len list is empty".into()));
        }
        positive("seq-len", &v)?;
        Ok(v)
    }

    pub fn bcs(&self, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let v = self.bc.clone().unwrap_or_else(|| default.to_vec());
        if v.is_empty() {
            return Err(CliError::Usage("bc list is empty".into()));
        }
        positive("bc", &v)?;
        Ok(v)
    }

    pub fn precisions(&self) -> Result<Vec<Precision>, CliError> {
        match &self.precision {
            None => Ok(vec![Precision::Exact64]),
            Some(p) if p.is_empty() => Err(CliError::Usage("precision list is empty".into())),
            Some(p) => Ok(p.iter().map(|&a| a.into()).collect()),
        }
    }

    pub fn scale(&self) -> Result<Option<f64>, CliError> {
        let s = self.scale.and_then(ScaleArg::resolve);
        match s {
            Some(x) if !x.is_finite() || x < 0.0 => Err(CliError::Usage(format!(
                "scale must be finite and >= 0, got {x}"
            ))),
            _ => Ok(s),
        }
    }
}

/// Positive integer option with a default.
pub fn count(name: &str, value: Option<usize>, default: usize) -> Result<usize, CliError> {
    let v = value.unwrap_or(default);
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be >= 1")));
    }
    Ok(v)
}

fn positive(name: &str, values: &[usize]) -> Result<(), CliError> {
    if values.contains(&0) {
        return Err(CliError::Usage(format!("{name} values must be >= 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_parsing() {
        assert_eq!("auto".parse::<ScaleArg>().unwrap().resolve(), None);
        assert_eq!("0.125".parse::<ScaleArg>().unwrap().resolve(), Some(0.125));
        assert!("big".parse::<ScaleArg>().is_err());
    }

    #[test]
    fn file_keys_mirror_flags_and_flags_win() {
        let file: Flags = toml::from_str(
            r#"
            mode = ["etap", "naive"]
            seq-len = [64, 128]
            heads = 4
            precision = ["fp16emu"]
            scale = "auto"
            allow-large = true
            bc = [16]
            "#,
        )
        .unwrap();
        assert_eq!(file.seq_len, Some(vec![64, 128]));
        let cli = Flags {
            heads: Some(8),
            scale: Some(ScaleArg::Value(0.5)),
            ..Default::default()
        };
        let merged = cli.over(file);
        assert_eq!(merged.heads, Some(8));
        assert_eq!(
            merged.modes().unwrap(),
            vec![PipelineMode::Etap, PipelineMode::Naive]
        );
        assert_eq!(merged.precisions().unwrap(), vec![Precision::Fp16Emu]);
        assert_eq!(merged.scale().unwrap(), Some(0.5));
        assert!(merged.allow_large);
    }

    #[test]
    fn empty_mode_list_is_a_usage_error() {
        let f: Flags = toml::from_str("mode = []").unwrap();
        assert!(matches!(f.modes(), Err(CliError::Usage(_))));
        assert_eq!(Flags::default().modes().unwrap().len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Flags>("sequence = 3").is_err());
        let f: Flags = toml::from_str("scale = 0.25").unwrap();
        assert_eq!(f.scale().unwrap(), Some(0.25));
    }
}
