//! VLIW bundle and microprogram representation.
//!
//! One bundle dispatches at most five operations: one load/store, up to
//! three vector-compute ops, and one scalar op. Programs are static: the
//! bundle list is fixed at expansion time and the sequencer preloads any
//! constants into the scalar register file before cycle zero.

use std::fmt;

use crate::fx::{FixedPointFormat, FixedWord};

use super::{Kernel, NvuError};

/// Table slots a program may reference.
pub const TABLE_EXP: usize = 0;
pub const TABLE_RECIP: usize = 1;
pub const TABLE_RSQRT: usize = 2;
pub const TABLE_GELU: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemSpace {
    /// MMU scratchpad: kernel inputs.
    Mmem,
    /// NVU scratchpad: intermediates.
    Nmem,
    /// MMU input buffer: kernel outputs.
    Mib,
}

impl MemSpace {
    fn tag(&self) -> &'static str {
        match self {
            MemSpace::Mmem => "mmem",
            MemSpace::Nmem => "nmem",
            MemSpace::Mib => "mib",
        }
    }
}

/// LSU addressing modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Addressing {
    NonStrided { base: usize },
    Strided { base: usize, stride: usize },
    /// Gather/scatter through an index vector register (lane values are
    /// element offsets).
    Indexed { index_vr: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsuOp {
    Load { dst: u8, space: MemSpace, addr: Addressing, fmt: FixedPointFormat, lanes: usize },
    Store { src: u8, space: MemSpace, addr: Addressing },
}

/// Lane subset of a 16-bit source register processed by a widened op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Lo,
    Hi,
}

/// Vector operand: a vector register or a broadcast scalar register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VSrc {
    Vr(u8),
    Sr(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dst {
    Vr(u8),
    Sr(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcuKind {
    Add,
    Sub,
    Mul,
    ShiftImm(i32),
    Min,
    Max,
    CompareGe,
    /// Scalar accumulate of a lane sum: `dst += sum(lanes)`.
    SumAcc,
    /// Scalar accumulate of a lane inner product: `dst += sum(a*b)`.
    DotAcc,
    MaxReduce,
    /// Concatenate two half-width results into one register.
    Pack,
    PwlEval(usize),
    FindSegment(usize),
    /// Zero-extend-free lane permutation by a static pattern index swap;
    /// inputs are rearranged, formats untouched.
    Permute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VcuOp {
    pub kind: VcuKind,
    pub dst: Dst,
    pub a: VSrc,
    pub b: Option<VSrc>,
    /// Lane subset of the sources for widened/narrowed processing.
    pub half: Option<Half>,
    pub out_fmt: FixedPointFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScuKind {
    Add,
    Sub,
    Mul,
    ShiftImm(i32),
    /// Shift right by the amount held in `b` (negated: `a >> b`).
    ShiftVarNeg,
    /// Power-of-two normalization: writes the normalized mantissa to
    /// `dst` and the shift count to `dst_shift`. `even` selects the
    /// two-bit ladder landing in [1, 4).
    Normalize { even: bool, dst_shift: u8 },
    PwlEval(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScuOp {
    pub kind: ScuKind,
    pub dst: u8,
    pub a: u8,
    pub b: Option<u8>,
    pub out_fmt: FixedPointFormat,
}

/// One dispatch cycle: at most 1 LSU + 3 VCU + 1 SCU operations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VliwBundle {
    pub lsu: Option<LsuOp>,
    pub vcu: Vec<VcuOp>,
    pub scu: Option<ScuOp>,
}

impl VliwBundle {
    pub fn op_count(&self) -> usize {
        self.lsu.is_some() as usize + self.vcu.len() + self.scu.is_some() as usize
    }

    /// Distinct vector registers touched, the logical port count.
    pub fn vrf_ports(&self) -> usize {
        let mut regs: Vec<u8> = Vec::new();
        let mut push = |r: u8| {
            if !regs.contains(&r) {
                regs.push(r);
            }
        };
        if let Some(op) = &self.lsu {
            match *op {
                LsuOp::Load { dst, addr, .. } => {
                    push(dst);
                    if let Addressing::Indexed { index_vr } = addr {
                        push(index_vr);
                    }
                }
                LsuOp::Store { src, addr, .. } => {
                    push(src);
                    if let Addressing::Indexed { index_vr } = addr {
                        push(index_vr);
                    }
                }
            }
        }
        for op in &self.vcu {
            if let Dst::Vr(r) = op.dst {
                push(r);
            }
            if let VSrc::Vr(r) = op.a {
                push(r);
            }
            if let Some(VSrc::Vr(r)) = op.b {
                push(r);
            }
        }
        regs.len()
    }

    pub fn validate(&self) -> Result<(), NvuError> {
        if self.vcu.len() > 3 {
            return Err(NvuError::TooManyVcuOps(self.vcu.len()));
        }
        let ports = self.vrf_ports();
        if ports > 8 {
            return Err(NvuError::PortLimit(ports));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramMeta {
    pub kernel: Kernel,
    pub n_elements: usize,
    pub vrwidth_bits: u32,
    pub in_fmt: FixedPointFormat,
    pub out_fmt: FixedPointFormat,
}

/// An expanded kernel: the bundle sequence plus preloaded constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Microprogram {
    pub meta: ProgramMeta,
    pub bundles: Vec<VliwBundle>,
    /// Scalar registers the sequencer fills before cycle 0.
    pub const_srf: Vec<(u8, FixedWord)>,
}

impl Microprogram {
    /// Structural legality plus dataflow consistency: every register read
    /// was written by an earlier bundle, a load, or the constant pool.
    pub fn validate(&self) -> Result<(), NvuError> {
        let mut vr_written = [false; 32];
        let mut sr_written = [false; 16];
        for &(s, _) in &self.const_srf {
            sr_written[s as usize] = true;
        }
        for b in &self.bundles {
            b.validate()?;
            // Reads check against state before this bundle.
            let mut vr_reads: Vec<u8> = Vec::new();
            let mut sr_reads: Vec<u8> = Vec::new();
            if let Some(op) = &b.lsu {
                match *op {
                    LsuOp::Store { src, addr, .. } => {
                        vr_reads.push(src);
                        if let Addressing::Indexed { index_vr } = addr {
                            vr_reads.push(index_vr);
                        }
                    }
                    LsuOp::Load { addr: Addressing::Indexed { index_vr }, .. } => {
                        vr_reads.push(index_vr)
                    }
                    _ => {}
                }
            }
            for op in &b.vcu {
                if let VSrc::Vr(r) = op.a {
                    vr_reads.push(r);
                }
                match op.a {
                    VSrc::Sr(s) => sr_reads.push(s),
                    VSrc::Vr(_) => {}
                }
                if let Some(src) = op.b {
                    match src {
                        VSrc::Vr(r) => vr_reads.push(r),
                        VSrc::Sr(s) => sr_reads.push(s),
                    }
                }
                // Accumulating reductions also read their destination.
                if matches!(op.kind, VcuKind::SumAcc | VcuKind::DotAcc) {
                    if let Dst::Sr(s) = op.dst {
                        sr_reads.push(s);
                    }
                }
            }
            if let Some(op) = &b.scu {
                sr_reads.push(op.a);
                if let Some(s) = op.b {
                    sr_reads.push(s);
                }
            }
            for r in vr_reads {
                if !vr_written[r as usize] {
                    return Err(NvuError::ReadBeforeWrite(r));
                }
            }
            for s in sr_reads {
                if !sr_written[s as usize] {
                    return Err(NvuError::ScalarReadBeforeWrite(s));
                }
            }
            // Now apply writes.
            if let Some(LsuOp::Load { dst, .. }) = b.lsu {
                vr_written[dst as usize] = true;
            }
            for op in &b.vcu {
                match op.dst {
                    Dst::Vr(r) => vr_written[r as usize] = true,
                    Dst::Sr(s) => sr_written[s as usize] = true,
                }
            }
            if let Some(op) = &b.scu {
                sr_written[op.dst as usize] = true;
                if let ScuKind::Normalize { dst_shift, .. } = op.kind {
                    sr_written[dst_shift as usize] = true;
                }
            }
        }
        Ok(())
    }

    /// Textual listing, one bundle per line, for golden-file tests.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for (pool, w) in &self.const_srf {
            out.push_str(&format!("const s{pool} = {:#x} ({})\n", w.raw(), w.fmt()));
        }
        for (i, b) in self.bundles.iter().enumerate() {
            out.push_str(&format!("{i:4}:"));
            let mut parts: Vec<String> = Vec::new();
            if let Some(op) = &b.lsu {
                parts.push(format!("lsu.{}", fmt_lsu(op)));
            }
            for op in &b.vcu {
                parts.push(format!("vcu.{}", fmt_vcu(op)));
            }
            if let Some(op) = &b.scu {
                parts.push(format!("scu.{}", fmt_scu(op)));
            }
            if parts.is_empty() {
                parts.push("nop".into());
            }
            out.push_str(&format!(" {}\n", parts.join(" | ")));
        }
        out
    }
}

fn fmt_addr(a: &Addressing) -> String {
    match a {
        Addressing::NonStrided { base } => format!("[{base}]"),
        Addressing::Strided { base, stride } => format!("[{base}+{stride}k]"),
        Addressing::Indexed { index_vr } => format!("[v{index_vr}]"),
    }
}

fn fmt_lsu(op: &LsuOp) -> String {
    match op {
        LsuOp::Load { dst, space, addr, fmt, lanes } => {
            format!("load v{dst} <- {}{} x{lanes}@{fmt}", space.tag(), fmt_addr(addr))
        }
        LsuOp::Store { src, space, addr } => {
            format!("store v{src} -> {}{}", space.tag(), fmt_addr(addr))
        }
    }
}

fn fmt_vsrc(s: &VSrc) -> String {
    match s {
        VSrc::Vr(r) => format!("v{r}"),
        VSrc::Sr(r) => format!("s{r}"),
    }
}

fn fmt_dst(d: &Dst) -> String {
    match d {
        Dst::Vr(r) => format!("v{r}"),
        Dst::Sr(r) => format!("s{r}"),
    }
}

fn fmt_vcu(op: &VcuOp) -> String {
    let name = match op.kind {
        VcuKind::Add => "add".into(),
        VcuKind::Sub => "sub".into(),
        VcuKind::Mul => "mul".into(),
        VcuKind::ShiftImm(k) => format!("shift[{k}]"),
        VcuKind::Min => "min".into(),
        VcuKind::Max => "max".into(),
        VcuKind::CompareGe => "cmpge".into(),
        VcuKind::SumAcc => "sumacc".into(),
        VcuKind::DotAcc => "dotacc".into(),
        VcuKind::MaxReduce => "maxred".into(),
        VcuKind::Pack => "pack".into(),
        VcuKind::PwlEval(t) => format!("pwl[t{t}]"),
        VcuKind::FindSegment(t) => format!("findseg[t{t}]"),
        VcuKind::Permute => "perm".into(),
    };
    let half = match op.half {
        Some(Half::Lo) => ".lo",
        Some(Half::Hi) => ".hi",
        None => "",
    };
    let b = op.b.map(|s| format!(", {}", fmt_vsrc(&s))).unwrap_or_default();
    format!("{name}{half} {} <- {}{} @{}", fmt_dst(&op.dst), fmt_vsrc(&op.a), b, op.out_fmt)
}

fn fmt_scu(op: &ScuOp) -> String {
    let name = match op.kind {
        ScuKind::Add => "add".into(),
        ScuKind::Sub => "sub".into(),
        ScuKind::Mul => "mul".into(),
        ScuKind::ShiftImm(k) => format!("shift[{k}]"),
        ScuKind::ShiftVarNeg => "shiftvar-".into(),
        ScuKind::Normalize { even, dst_shift } => {
            format!("norm{} s{dst_shift}!", if even { "4" } else { "2" })
        }
        ScuKind::PwlEval(t) => format!("pwl[t{t}]"),
    };
    let b = op.b.map(|s| format!(", s{s}")).unwrap_or_default();
    format!("{name} s{} <- s{}{} @{}", op.dst, op.a, b, op.out_fmt)
}

impl fmt::Display for Microprogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.listing())
    }
}
