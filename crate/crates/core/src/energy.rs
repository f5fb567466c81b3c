//! Operation counts and 45nm energy estimates for sort layers and the
//! equivalent FP32 dense layers.
//!
//! Costs are held in hundredths of a picojoule so every total is an exact
//! integer; conversion to pJ happens only for display.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Int8Add,
    Int32AddCmp,
    Int32Mul,
    Fp32Add,
    Fp32Mul,
    Fp32Mac,
    SramRead32,
    DramRead32,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Int8Add => "int8_add",
            OpKind::Int32AddCmp => "int32_add_cmp",
            OpKind::Int32Mul => "int32_mul",
            OpKind::Fp32Add => "fp32_add",
            OpKind::Fp32Mul => "fp32_mul",
            OpKind::Fp32Mac => "fp32_mac",
            OpKind::SramRead32 => "sram_read32",
            OpKind::DramRead32 => "dram_read32",
        }
    }
}

/// Energy per operation in centi-picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub int8_add: u64,
    pub int32_add_cmp: u64,
    pub int32_mul: u64,
    pub fp32_add: u64,
    pub fp32_mul: u64,
    pub fp32_mac: u64,
    pub sram_read32: u64,
    pub dram_read32: u64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            int8_add: 3,
            int32_add_cmp: 10,
            int32_mul: 310,
            fp32_add: 90,
            fp32_mul: 370,
            fp32_mac: 460,
            sram_read32: 500,
            dram_read32: 64_000,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.int8_add,
            self.int32_add_cmp,
            self.int32_mul,
            self.fp32_add,
            self.fp32_mul,
            self.fp32_mac,
            self.sram_read32,
            self.dram_read32,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidArgument("every op cost must be positive".into()));
        }
        Ok(())
    }

    pub fn cost(&self, op: OpKind) -> u64 {
        match op {
            OpKind::Int8Add => self.int8_add,
            OpKind::Int32AddCmp => self.int32_add_cmp,
            OpKind::Int32Mul => self.int32_mul,
            OpKind::Fp32Add => self.fp32_add,
            OpKind::Fp32Mul => self.fp32_mul,
            OpKind::Fp32Mac => self.fp32_mac,
            OpKind::SramRead32 => self.sram_read32,
            OpKind::DramRead32 => self.dram_read32,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntWidth {
    Int8,
    #[default]
    Int32,
}

impl IntWidth {
    fn op(self) -> OpKind {
        match self {
            IntWidth::Int8 => OpKind::Int8Add,
            IntWidth::Int32 => OpKind::Int32AddCmp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineItem {
    pub label: String,
    pub op: OpKind,
    pub count: u64,
}

impl LineItem {
    fn new(label: impl Into<String>, op: OpKind, count: u64) -> Self {
        Self {
            label: label.into(),
            op,
            count,
        }
    }

    pub fn centi_pj(&self, model: &EnergyModel) -> u64 {
        self.count * model.cost(self.op)
    }
}

/// Arithmetic line items plus memory traffic that is reported but kept out
/// of the totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub name: String,
    pub items: Vec<LineItem>,
    pub memory: Vec<LineItem>,
}

impl EnergyProfile {
    pub fn op_count(&self) -> u64 {
        self.items.iter().map(|i| i.count).sum()
    }

    pub fn total_centi_pj(&self, model: &EnergyModel) -> u64 {
        self.items.iter().map(|i| i.centi_pj(model)).sum()
    }

    pub fn total_pj(&self, model: &EnergyModel) -> f64 {
        to_pj(self.total_centi_pj(model))
    }

    pub fn memory_pj(&self, model: &EnergyModel) -> f64 {
        to_pj(self.memory.iter().map(|i| i.centi_pj(model)).sum())
    }
}

pub fn to_pj(centi: u64) -> f64 {
    centi as f64 / 100.0
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(usize::BITS - (n - 1).leading_zeros())
    }
}

fn check_dims(n: usize, v: usize) -> Result<()> {
    if n == 0 || v == 0 {
        return Err(Error::InvalidArgument(format!("layer dimensions must be >= 1, got N={n}, V={v}")));
    }
    Ok(())
}

/// `N` filters over `V` items: `3NV` displacement ops (table read, subtract,
/// absolute-add) and an `N·⌈log₂N⌉` argsort.
pub fn profile_sort_layer(n: usize, v: usize, width: IntWidth) -> Result<EnergyProfile> {
    check_dims(n, v)?;
    let (n64, v64) = (n as u64, v as u64);
    Ok(EnergyProfile {
        name: format!("sort layer N={n} V={v}"),
        items: vec![
            LineItem::new("displacement (3NV)", width.op(), 3 * n64 * v64),
            LineItem::new("argsort (N log2 N)", width.op(), n64 * ceil_log2(n)),
        ],
        memory: vec![
            LineItem::new("index table build (V writes)", width.op(), v64),
            LineItem::new("filter bank reads (NV bytes)", OpKind::SramRead32, (n64 * v64).div_ceil(4)),
        ],
    })
}

/// Dense `V → N` layer: `NV` MACs plus a bias add and a ReLU per unit.
pub fn profile_mlp_layer(n: usize, v: usize) -> Result<EnergyProfile> {
    check_dims(n, v)?;
    let (n64, v64) = (n as u64, v as u64);
    Ok(EnergyProfile {
        name: format!("mlp layer {v}->{n}"),
        items: vec![
            LineItem::new("matrix multiply (NV MACs)", OpKind::Fp32Mac, n64 * v64),
            LineItem::new("bias + relu (2N)", OpKind::Fp32Add, 2 * n64),
        ],
        memory: vec![LineItem::new("weight reads (4NV bytes)", OpKind::SramRead32, n64 * v64)],
    })
}

/// How the class-filter layer is counted in the full-inference comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputAccounting {
    /// `3·V` ops per view, the figure used by the published comparison.
    #[default]
    SingleFilter,
    /// `3·C·V` ops per view, every class filter scored.
    AllFilters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceSpec {
    pub input_vocab: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub views: usize,
    /// Hidden widths of the dense network being compared against.
    pub mlp_hidden: Vec<usize>,
    pub accounting: OutputAccounting,
    /// Integer ops per view for the vote.
    pub vote_ops_per_view: u64,
}

impl Default for InferenceSpec {
    fn default() -> Self {
        Self {
            input_vocab: 64,
            hidden: vec![256],
            classes: 10,
            views: 7,
            mlp_hidden: vec![128],
            accounting: OutputAccounting::SingleFilter,
            vote_ops_per_view: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub sort: EnergyProfile,
    pub mlp: EnergyProfile,
}

impl Comparison {
    /// Dense energy over sort-network energy.
    pub fn ratio(&self, model: &EnergyModel) -> f64 {
        self.mlp.total_centi_pj(model) as f64 / self.sort.total_centi_pj(model) as f64
    }
}

pub fn compare_layer(n: usize, v: usize, width: IntWidth) -> Result<Comparison> {
    Ok(Comparison {
        sort: profile_sort_layer(n, v, width)?,
        mlp: profile_mlp_layer(n, v)?,
    })
}

/// Whole-model comparison counting multiply/displacement work only: no
/// argsort, bias or activation terms, as in the published table.
pub fn profile_inference(spec: &InferenceSpec) -> Result<Comparison> {
    if spec.views == 0 || spec.classes == 0 || spec.input_vocab == 0 {
        return Err(Error::InvalidArgument("views, classes and input vocabulary must be >= 1".into()));
    }
    let views = spec.views as u64;
    let mut sort_items = Vec::new();
    let mut v = spec.input_vocab;
    for (l, &n) in spec.hidden.iter().enumerate() {
        check_dims(n, v)?;
        sort_items.push(LineItem::new(
            format!("hidden layer {} (x{} views)", l + 1, spec.views),
            OpKind::Int32AddCmp,
            views * 3 * (n * v) as u64,
        ));
        v = n;
    }
    let output_filters = match spec.accounting {
        OutputAccounting::SingleFilter => 1,
        OutputAccounting::AllFilters => spec.classes as u64,
    };
    sort_items.push(LineItem::new(
        format!("output layer (x{} views)", spec.views),
        OpKind::Int32AddCmp,
        views * 3 * output_filters * v as u64,
    ));
    sort_items.push(LineItem::new("majority vote", OpKind::Int32AddCmp, views * spec.vote_ops_per_view));

    let mut mlp_items = Vec::new();
    let mut v = spec.input_vocab;
    for (l, &n) in spec.mlp_hidden.iter().chain(std::iter::once(&spec.classes)).enumerate() {
        check_dims(n, v)?;
        let label = if l == spec.mlp_hidden.len() {
            "output layer".to_string()
        } else {
            format!("hidden layer {}", l + 1)
        };
        mlp_items.push(LineItem::new(label, OpKind::Fp32Mac, (n * v) as u64));
        v = n;
    }
    Ok(Comparison {
        sort: EnergyProfile {
            name: format!("sort network x{} views", spec.views),
            items: sort_items,
            memory: Vec::new(),
        },
        mlp: EnergyProfile {
            name: "mlp".into(),
            items: mlp_items,
            memory: Vec::new(),
        },
    })
}

pub const CSV_HEADER: &str = "side,component,op,count,energy_pj";

pub fn comparison_csv(cmp: &Comparison, model: &EnergyModel) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (side, p) in [("sort", &cmp.sort), ("mlp", &cmp.mlp)] {
        for i in &p.items {
            let _ = writeln!(out, "{side},{},{},{},{:.2}", i.label, i.op.name(), i.count, to_pj(i.centi_pj(model)));
        }
        let _ = writeln!(out, "{side},total,,{},{:.2}", p.op_count(), p.total_pj(model));
    }
    let _ = writeln!(out, "ratio,mlp/sort,,,{:.4}", cmp.ratio(model));
    out
}

/// Aligned text table; energies rounded to whole pJ.
pub fn comparison_table(cmp: &Comparison, model: &EnergyModel) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "component".into(),
        "ops".into(),
        "energy (pJ)".into(),
        "op type".into(),
    ]];
    for p in [&cmp.sort, &cmp.mlp] {
        rows.push([p.name.clone(), String::new(), String::new(), String::new()]);
        for i in &p.items {
            rows.push([
                format!("  {}", i.label),
                group(i.count),
                group(to_pj(i.centi_pj(model)).round() as u64),
                i.op.name().into(),
            ]);
        }
        rows.push([
            "  total".into(),
            group(p.op_count()),
            group(p.total_pj(model).round() as u64),
            String::new(),
        ]);
        for i in &p.memory {
            rows.push([
                format!("  [memory] {}", i.label),
                group(i.count),
                group(to_pj(i.centi_pj(model)).round() as u64),
                i.op.name().into(),
            ]);
        }
    }
    let widths: Vec<usize> = (0..4).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {}",
            r[0],
            r[1],
            r[2],
            r[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    }
    let _ = writeln!(out, "ratio (mlp / sort): {:.2}x", cmp.ratio(model));
    out
}

fn group(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(128), 7);
        assert_eq!(ceil_log2(129), 8);
    }

    #[test]
    fn trivial_layers() {
        let s = profile_sort_layer(1, 1, IntWidth::Int32).unwrap();
        assert_eq!(s.items[0].count, 3);
        assert_eq!(s.items[1].count, 0);
        assert_eq!(profile_mlp_layer(1, 1).unwrap().items[0].count, 1);
        assert!(profile_sort_layer(0, 3, IntWidth::Int32).is_err());
    }

    #[test]
    fn int8_is_three_tenths() {
        let m = EnergyModel::default();
        let a = profile_sort_layer(128, 64, IntWidth::Int32).unwrap().total_centi_pj(&m);
        let b = profile_sort_layer(128, 64, IntWidth::Int8).unwrap().total_centi_pj(&m);
        assert_eq!(b * 10, a * 3);
    }

    #[test]
    fn grouping() {
        assert_eq!(group(0), "0");
        assert_eq!(group(896), "896");
        assert_eq!(group(24_576), "24,576");
        assert_eq!(group(1_234_567), "1,234,567");
    }

    #[test]
    fn views_scale_linearly() {
        let m = EnergyModel::default();
        let one = InferenceSpec { views: 7, ..Default::default() };
        let two = InferenceSpec { views: 14, ..Default::default() };
        let a = profile_inference(&one).unwrap().sort.total_centi_pj(&m);
        let b = profile_inference(&two).unwrap().sort.total_centi_pj(&m);
        assert_eq!(b, 2 * a);
    }
}
