//! Backend selection from problem dimensions.
//!
//! Compiled defaults cover every shape. A calibration table, when one is
//! present, is consulted first. The table is line-oriented text:
//!
//! ```text
//! # mode kh_kw_max hw_min backend [channels]
//! valid 9 784 Im2colGemm
//! full 25 0 PaddedValidFull
//! gemm 48 0 Small
//! ```
//!
//! A `valid`/`full` row matches a shape when `kh*kw <= kh_kw_max` and
//! `h*w >= hw_min`; the first matching row in file order wins. The optional
//! fifth column is reserved for a channel bound and is parsed but not used
//! for matching. A `gemm` row sets the small-matrix GEMM threshold (its
//! `kh_kw_max` column is the largest extent served by the small kernel).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use super::shape::{ConvBackend, ConvMode, ConvShape};
use crate::error::{Error, Result};

/// Defaults used when no calibration row matches.
pub const VALID_IM2COL_MIN_HW: usize = 784;
pub const VALID_IM2COL_MIN_KERNEL_AREA: usize = 9;
pub const FULL_FFT_MIN_KERNEL_AREA: usize = 26;

pub const CALIBRATION_FILE: &str = "calibration.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DispatchRule {
    pub mode: ConvMode,
    pub kh_kw_max: usize,
    pub hw_min: usize,
    pub backend: ConvBackend,
    /// Reserved channel column.
    pub channels: Option<usize>,
}

impl DispatchRule {
    fn matches(&self, mode: ConvMode, shape: &ConvShape) -> bool {
        self.mode == mode
            && shape.kernel_area() <= self.kh_kw_max
            && shape.image_area() >= self.hw_min
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dispatcher {
    rules: Vec<DispatchRule>,
    small_gemm_max: Option<usize>,
}

pub fn default_valid(shape: &ConvShape) -> ConvBackend {
    if shape.image_area() >= VALID_IM2COL_MIN_HW
        && shape.kernel_area() >= VALID_IM2COL_MIN_KERNEL_AREA
    {
        ConvBackend::Im2colGemm
    } else {
        ConvBackend::DirectValid
    }
}

pub fn default_full(shape: &ConvShape) -> ConvBackend {
    if shape.kernel_area() >= FULL_FFT_MIN_KERNEL_AREA {
        ConvBackend::FftFull
    } else {
        ConvBackend::PaddedValidFull
    }
}

impl Dispatcher {
    /// Compiled defaults only.
    pub fn defaults() -> Self {
        Dispatcher::default()
    }

    pub fn from_rules(rules: Vec<DispatchRule>, small_gemm_max: Option<usize>) -> Result<Self> {
        for r in &rules {
            if r.backend.mode() != r.mode {
                return Err(Error::InvalidParameter(format!(
                    "backend {} cannot serve {} convolutions",
                    r.backend,
                    r.mode.as_str()
                )));
            }
        }
        Ok(Dispatcher {
            rules,
            small_gemm_max,
        })
    }

    pub fn rules(&self) -> &[DispatchRule] {
        &self.rules
    }

    pub fn small_gemm_max(&self) -> Option<usize> {
        self.small_gemm_max
    }

    pub fn select(&self, mode: ConvMode, shape: &ConvShape) -> ConvBackend {
        self.rules
            .iter()
            .find(|r| r.matches(mode, shape))
            .map(|r| r.backend)
            .unwrap_or_else(|| match mode {
                ConvMode::Valid => default_valid(shape),
                ConvMode::Full => default_full(shape),
            })
    }

    pub fn select_valid(&self, shape: &ConvShape) -> ConvBackend {
        self.select(ConvMode::Valid, shape)
    }

    pub fn select_full(&self, shape: &ConvShape) -> ConvBackend {
        self.select(ConvMode::Full, shape)
    }

    /// Parses a calibration table.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut small_gemm_max = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Format(format!("calibration line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(bad("expected `mode kh_kw_max hw_min backend [channels]`"));
            }
            let kh_kw_max: usize = fields[1].parse().map_err(|_| bad("kh_kw_max is not an integer"))?;
            let hw_min: usize = fields[2].parse().map_err(|_| bad("hw_min is not an integer"))?;
            let channels = match fields.get(4) {
                None | Some(&"-") | Some(&"*") => None,
                Some(v) => Some(v.parse().map_err(|_| bad("channels is not an integer"))?),
            };
            let mode = match fields[0] {
                "valid" => ConvMode::Valid,
                "full" => ConvMode::Full,
                "gemm" => {
                    if !fields[3].eq_ignore_ascii_case("small") {
                        return Err(bad("gemm rows take the backend `Small`"));
                    }
                    small_gemm_max = Some(kh_kw_max);
                    continue;
                }
                other => return Err(bad(&format!("unknown mode {other:?}"))),
            };
            let backend: ConvBackend = fields[3].parse().map_err(|_| bad("unknown backend"))?;
            if backend.mode() != mode {
                return Err(bad(&format!("{backend} is not a {} backend", mode.as_str())));
            }
            rules.push(DispatchRule {
                mode,
                kh_kw_max,
                hw_min,
                backend,
                channels,
            });
        }
        Ok(Dispatcher {
            rules,
            small_gemm_max,
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("# mode kh_kw_max hw_min backend [channels]\n");
        if let Some(g) = self.small_gemm_max {
            let _ = writeln!(s, "gemm {g} 0 Small");
        }
        for r in &self.rules {
            let _ = write!(s, "{} {} {} {}", r.mode.as_str(), r.kh_kw_max, r.hw_min, r.backend);
            if let Some(c) = r.channels {
                let _ = write!(s, " {c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Loads `path`, falling back to compiled defaults when it does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::defaults()),
            Err(e) => Err(e.into()),
        }
    }

    /// Pushes this table's GEMM threshold into the kernel configuration.
    pub fn apply_gemm_threshold(&self) {
        if let Some(g) = self.small_gemm_max {
            crate::kernels::gemm::set_small_gemm_threshold(g);
        }
    }
}

pub fn default_calibration_path() -> PathBuf {
    crate::config::data_dir().join(CALIBRATION_FILE)
}

static GLOBAL: OnceLock<Arc<Dispatcher>> = OnceLock::new();

/// Process-wide dispatcher, loaded once from the default calibration path.
/// An unreadable or malformed table falls back to the compiled defaults.
pub fn global() -> Arc<Dispatcher> {
    GLOBAL
        .get_or_init(|| {
            let d = Dispatcher::load_or_default(&default_calibration_path()).unwrap_or_default();
            d.apply_gemm_threshold();
            Arc::new(d)
        })
        .clone()
}

pub fn dispatch_valid(shape: &ConvShape) -> ConvBackend {
    global().select_valid(shape)
}

pub fn dispatch_full(shape: &ConvShape) -> ConvBackend {
    global().select_full(shape)
}

/// Backend choice for a layer: a dispatcher plus optional overrides.
#[derive(Clone, Debug)]
pub struct ConvPolicy {
    pub dispatcher: Arc<Dispatcher>,
    pub force_valid: Option<ConvBackend>,
    pub force_full: Option<ConvBackend>,
}

impl Default for ConvPolicy {
    fn default() -> Self {
        ConvPolicy {
            dispatcher: global(),
            force_valid: None,
            force_full: None,
        }
    }
}

impl ConvPolicy {
    pub fn with_dispatcher(dispatcher: Arc<Dispatcher>) -> Self {
        ConvPolicy {
            dispatcher,
            force_valid: None,
            force_full: None,
        }
    }

    /// Forces `backend` for its own mode; the other mode stays dispatched.
    pub fn forcing(mut self, backend: ConvBackend) -> Self {
        match backend.mode() {
            ConvMode::Valid => self.force_valid = Some(backend),
            ConvMode::Full => self.force_full = Some(backend),
        }
        self
    }

    pub fn valid(&self, shape: &ConvShape) -> ConvBackend {
        self.force_valid
            .unwrap_or_else(|| self.dispatcher.select_valid(shape))
    }

    pub fn full(&self, shape: &ConvShape) -> ConvBackend {
        self.force_full
            .unwrap_or_else(|| self.dispatcher.select_full(shape))
    }
}
