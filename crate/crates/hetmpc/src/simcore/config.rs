use serde::{Deserialize, Serialize};

use super::SimError;

/// Exact fraction, used for the superlinear exponent `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Ratio { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl std::str::FromStr for Ratio {
    type Err = String;

    /// Accepts `a/b` or a decimal such as `0.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let den = b.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if den == 0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            return Ok(Ratio::new(num, den));
        }
        let x: f64 = s.parse().map_err(|_| format!("not a fraction: {s:?}"))?;
        if !(x >= 0.0) {
            return Err(format!("negative fraction: {s:?}"));
        }
        let den = 1_000_000u64;
        Ok(Ratio::new((x * den as f64).round() as u64, den))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// a budget violation aborts the run
    #[default]
    Strict,
    /// violations are only recorded
    Tolerant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub polylog_c: u64,
    pub polylog_e: u32,
    pub f_exp: Option<Ratio>,
    pub seed: u64,
    pub mode: Mode,
}

const EPS: f64 = 1e-9;

impl ClusterConfig {
    pub const DEFAULT_POLYLOG_C: u64 = 8;
    pub const DEFAULT_POLYLOG_E: u32 = 1;

    pub fn new(n: usize, m: usize) -> Self {
        ClusterConfig {
            n,
            m,
            gamma: 0.5,
            polylog_c: Self::DEFAULT_POLYLOG_C,
            polylog_e: Self::DEFAULT_POLYLOG_E,
            f_exp: None,
            seed: 0,
            mode: Mode::Strict,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_polylog(mut self, c: u64, e: u32) -> Self {
        self.polylog_c = c;
        self.polylog_e = e;
        self
    }

    pub fn with_f(mut self, f: Ratio) -> Self {
        self.f_exp = Some(f);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.m < 1 {
            return Err(SimError::Config("m must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SimError::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.polylog_c == 0 || self.polylog_e == 0 {
            return Err(SimError::Config("polylog constant and exponent must be positive".into()));
        }
        if let Some(f) = self.f_exp {
            if f.den == 0 {
                return Err(SimError::Config("f has a zero denominator".into()));
            }
            let floor = 1.0 / (self.n as f64).log2();
            if f.value() + EPS < floor {
                return Err(SimError::Config(format!(
                    "f = {f} is below 1/log2(n) = {floor:.4}"
                )));
            }
        }
        Ok(())
    }

    /// ⌈log₂ n⌉, the number of bits in one word.
    pub fn log_n(&self) -> usize {
        ceil_log2(self.n).max(1)
    }

    pub fn n_gamma(&self) -> f64 {
        (self.n as f64).powf(self.gamma)
    }

    pub fn small_machines(&self) -> usize {
        ((self.m as f64 / self.n_gamma()) - EPS).ceil().max(1.0) as usize
    }

    fn polylog(&self) -> f64 {
        self.polylog_c as f64 * (self.log_n() as f64).powi(self.polylog_e as i32)
    }

    pub fn small_budget(&self) -> usize {
        (self.polylog() * self.n_gamma() + 1e-6).floor() as usize
    }

    pub fn large_budget(&self) -> usize {
        let base = match self.f_exp {
            Some(f) => (self.n as f64).powf(1.0 + f.value()),
            None => self.n as f64,
        };
        (self.polylog() * base + 1e-6).floor() as usize
    }

    /// Aggregation-tree branching factor ⌊n^γ⌋, at least 2.
    pub fn branching(&self) -> usize {
        ((self.n_gamma() + EPS).floor() as usize).max(2)
    }

    pub fn f(&self) -> Option<f64> {
        self.f_exp.map(|r| r.value())
    }
}

pub fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

pub fn floor_log2(x: usize) -> usize {
    assert!(x > 0);
    (usize::BITS - 1 - x.leading_zeros()) as usize
}
