//! Named scalar functions available to the segmentation front-end.
//!
//! All transcendentals go through `libm` so table construction is
//! bit-reproducible across platforms.

use std::str::FromStr;

/// Functions the table generator knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedFunction {
    Identity,
    Gelu,
    Exp,
    /// 1/x on a normalized range.
    Recip,
    /// 1/sqrt(x) on a normalized range.
    Rsqrt,
    Sqrt,
    Tanh,
    Sigmoid,
}

impl NamedFunction {
    pub const ALL: [NamedFunction; 8] = [
        NamedFunction::Identity,
        NamedFunction::Gelu,
        NamedFunction::Exp,
        NamedFunction::Recip,
        NamedFunction::Rsqrt,
        NamedFunction::Sqrt,
        NamedFunction::Tanh,
        NamedFunction::Sigmoid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NamedFunction::Identity => "identity",
            NamedFunction::Gelu => "gelu",
            NamedFunction::Exp => "exp",
            NamedFunction::Recip => "recip",
            NamedFunction::Rsqrt => "rsqrt",
            NamedFunction::Sqrt => "sqrt",
            NamedFunction::Tanh => "tanh",
            NamedFunction::Sigmoid => "sigmoid",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            NamedFunction::Identity => x,
            NamedFunction::Gelu => gelu(x),
            NamedFunction::Exp => libm::exp(x),
            NamedFunction::Recip => 1.0 / x,
            NamedFunction::Rsqrt => 1.0 / libm::sqrt(x),
            NamedFunction::Sqrt => libm::sqrt(x),
            NamedFunction::Tanh => libm::tanh(x),
            NamedFunction::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
        }
    }

    /// Sensible default interval when the caller does not supply one.
    pub fn default_interval(&self) -> (f64, f64) {
        match self {
            NamedFunction::Identity => (-1.0, 1.0),
            NamedFunction::Gelu => (-8.0, 8.0),
            NamedFunction::Exp => (-16.0, 0.0),
            NamedFunction::Recip => (1.0, 2.0),
            NamedFunction::Rsqrt => (1.0, 4.0),
            NamedFunction::Sqrt => (0.0, 2.0),
            NamedFunction::Tanh => (-8.0, 8.0),
            NamedFunction::Sigmoid => (-8.0, 8.0),
        }
    }
}

impl FromStr for NamedFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function {s:?}, expected one of identity/gelu/exp/recip/rsqrt/sqrt/tanh/sigmoid"))
    }
}

/// Exact GELU: `x * Phi(x)` through the error function.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// The common tanh-based GELU approximation, kept for cross-checks.
pub fn gelu_tanh(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(libm::sqrt(2.0 / std::f64::consts::PI) * (x + 0.044715 * x * x * x)))
}
