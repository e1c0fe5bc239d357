//! Reference tables and the arithmetic checks run against them.

use serde::{Deserialize, Serialize};

use crate::accel::{
    fit_energy_coeffs, resource_usage, AcceleratorConfig, ChunkConfig, ChunkKind, EnergyCoeffs, HardwareBudget,
    LUT_PER_PE_A, LUT_PER_PE_C, LUT_PER_PE_S,
};
use crate::cosearch::pe_allocation;
use crate::search_space::{count_ops, LayerDescriptor, LayerType, MacCounts, OpCounts};

const BUNDLED: &str = include_str!("../data/reference_tables.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MultBased,
    MultFree,
    HybridBaseline,
    Searched,
    MetricAblation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRow {
    pub dataset: String,
    pub model: String,
    pub family: Family,
    /// Millions.
    pub mults: f64,
    pub shifts: f64,
    pub adds: f64,
    pub energy_mj: f64,
}

impl OpRow {
    pub fn ops(&self) -> OpCounts {
        OpCounts {
            mults: self.mults,
            shifts: self.shifts,
            adds: self.adds,
        }
    }

    /// MACs per type implied by the counting rules: every conv and shift MAC
    /// carries one add, every adder MAC two.
    pub fn implied_macs(&self) -> Option<MacCounts> {
        let m = to_units(self.mults);
        let s = to_units(self.shifts);
        let a = to_units(self.adds);
        let rest = a.checked_sub(m + s)?;
        if rest % 2 != 0 {
            return None;
        }
        Some(MacCounts {
            conv: m,
            shift: s,
            adder: rest / 2,
        })
    }
}

fn to_units(millions: f64) -> u64 {
    (millions * 1e6).round() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwRow {
    pub dataset: String,
    pub model: String,
    pub klut: f64,
    pub dsp: Option<u32>,
    pub bram: f64,
    pub latency_ms: f64,
    pub gops: f64,
    pub gops_per_klut: f64,
    pub gops_per_dsp: Option<f64>,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPeCost {
    pub lut_conv: u64,
    pub lut_shift: u64,
    pub lut_adder: u64,
    pub dsp_conv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub coarse: bool,
    pub fine: bool,
    pub avg_gops: f64,
    pub hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub version: String,
    pub description: String,
    pub op_rows: Vec<OpRow>,
    pub hw_rows: Vec<HwRow>,
    pub per_pe_cost: PerPeCost,
    pub klut_band: [f64; 2],
    pub search_ablation: Vec<AblationRow>,
}

impl ReferenceData {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled reference tables parse")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn op_row(&self, dataset: &str, model: &str) -> Option<&OpRow> {
        self.op_rows.iter().find(|r| r.dataset == dataset && r.model == model)
    }

    /// Rows of networks built from a single kind of multiply-heavy or
    /// multiply-free layer, used to fit the energy coefficients.
    pub fn baseline_energy_rows(&self) -> Vec<(OpCounts, f64)> {
        self.op_rows
            .iter()
            .filter(|r| matches!(r.family, Family::MultBased | Family::MultFree))
            .map(|r| (r.ops(), r.energy_mj))
            .collect()
    }
}

/// One pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub value: f64,
    pub expected: f64,
    /// Relative unless the group says otherwise.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub checks: Vec<Check>,
}

impl ReproReport {
    pub fn group(&self, g: &str) -> impl Iterator<Item = &Check> {
        let g = g.to_string();
        self.checks.iter().filter(move |c| c.group == g)
    }

    pub fn group_passed(&self, g: &str) -> bool {
        let mut any = false;
        for c in self.group(g) {
            any = true;
            if !c.passed {
                return false;
            }
        }
        any
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel(value: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        value.abs()
    } else {
        (value - expected).abs() / expected.abs()
    }
}

/// Layers whose per-type MAC totals are exactly `macs`: one pointwise layer
/// per type, spatial size carrying the count.
pub fn layers_with_macs(macs: &MacCounts) -> Vec<LayerDescriptor> {
    LayerType::ALL
        .iter()
        .filter(|t| macs.get(**t) > 0)
        .map(|&t| {
            let n = macs.get(t);
            // split n into channel and spatial factors small enough for u32
            let c = [1000u64, 100, 10, 1].into_iter().find(|d| n % d == 0).unwrap();
            let hw = u32::try_from(n / c).expect("MAC count fits the layer");
            LayerDescriptor::new(t, 1, c as u32, 1, 1, 1, hw, 1)
        })
        .collect()
}

/// Op counts of every row recomputed from its implied MACs through real
/// layers, compared as exact integers.
pub fn check_op_identities(data: &ReferenceData) -> Vec<Check> {
    data.op_rows
        .iter()
        .map(|r| {
            let name = format!("{}/{}", r.dataset, r.model);
            let Some(macs) = r.implied_macs() else {
                return Check {
                    group: "op_identity".into(),
                    name,
                    value: f64::NAN,
                    expected: r.adds,
                    residual: f64::INFINITY,
                    tolerance: 0.0,
                    passed: false,
                    note: if to_units(r.adds) < to_units(r.mults) + to_units(r.shifts) {
                        "adds smaller than mults + shifts".into()
                    } else {
                        "adds do not split into whole adder MACs".into()
                    },
                };
            };
            let layers = layers_with_macs(&macs);
            let raw = MacCounts::of(&layers).raw_ops();
            let want = (to_units(r.mults), to_units(r.shifts), to_units(r.adds));
            let ops = count_ops(&layers);
            let passed = raw == want;
            Check {
                group: "op_identity".into(),
                name,
                value: ops.adds,
                expected: r.adds,
                residual: (raw.2 as f64 - want.2 as f64).abs()
                    + (raw.0 as f64 - want.0 as f64).abs()
                    + (raw.1 as f64 - want.1 as f64).abs(),
                tolerance: 0.0,
                passed,
                note: format!(
                    "conv {} shift {} adder {} MACs",
                    macs.conv, macs.shift, macs.adder
                ),
            }
        })
        .collect()
}

/// Half a unit in the last printed latency digit.
pub const LATENCY_HALF_ULP_MS: f64 = 0.005;

/// GOPS = ops/latency and FPS = 1/latency. Printed latency is rounded, so a
/// row passes if some latency that rounds to the printed one reproduces both
/// printed values within `tol`. The residual reported is at the printed
/// latency.
pub fn check_throughput_identities(data: &ReferenceData, tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for h in &data.hw_rows {
        let name = format!("{}/{}", h.dataset, h.model);
        let Some(r) = data.op_row(&h.dataset, &h.model) else {
            continue;
        };
        let ops = r.ops().total() * 1e6;
        let gops_at = |ms: f64| ops / (ms * 1e-3) / 1e9;
        let fps_at = |ms: f64| 1e3 / ms;
        // latency windows (ms) matching each printed value within tol
        let windows = [
            (h.latency_ms - LATENCY_HALF_ULP_MS, h.latency_ms + LATENCY_HALF_ULP_MS),
            (ops / (h.gops * 1e9 * (1.0 + tol)) * 1e3, ops / (h.gops * 1e9 * (1.0 - tol)) * 1e3),
            (1e3 / (h.fps * (1.0 + tol)), 1e3 / (h.fps * (1.0 - tol))),
        ];
        let lo = windows.iter().map(|w| w.0).fold(f64::MIN, f64::max);
        let hi = windows.iter().map(|w| w.1).fold(f64::MAX, f64::min);
        let passed = lo <= hi;
        let g = gops_at(h.latency_ms);
        let f = fps_at(h.latency_ms);
        let note = if passed {
            format!("consistent for latency in [{lo:.4}, {hi:.4}] ms")
        } else {
            // latency each printed figure implies on its own
            format!(
                "GOPS implies {:.4} ms, FPS implies {:.4} ms",
                ops / (h.gops * 1e9) * 1e3,
                1e3 / h.fps
            )
        };
        out.push(Check {
            group: "throughput_identity".into(),
            name: format!("{name}/gops"),
            value: g,
            expected: h.gops,
            residual: rel(g, h.gops),
            tolerance: tol,
            passed,
            note: note.clone(),
        });
        out.push(Check {
            group: "throughput_identity".into(),
            name: format!("{name}/fps"),
            value: f,
            expected: h.fps,
            residual: rel(f, h.fps),
            tolerance: tol,
            passed,
            note,
        });
    }
    out
}

/// Fits energy coefficients on the baseline rows and predicts the searched
/// rows (group `energy`) and the remaining hybrid rows (group `energy_other`).
pub fn check_energy(data: &ReferenceData, tol: f64) -> (Option<EnergyCoeffs>, Vec<Check>) {
    let coeffs = match fit_energy_coeffs(&data.baseline_energy_rows()) {
        Ok(c) => c,
        Err(e) => {
            let c = Check {
                group: "energy".into(),
                name: "fit".into(),
                value: f64::NAN,
                expected: f64::NAN,
                residual: f64::INFINITY,
                tolerance: tol,
                passed: false,
                note: e.to_string(),
            };
            return (None, vec![c]);
        }
    };
    let checks = data
        .op_rows
        .iter()
        .filter(|r| matches!(r.family, Family::Searched | Family::HybridBaseline | Family::MetricAblation))
        .map(|r| {
            let v = coeffs.energy(&r.ops());
            let res = rel(v, r.energy_mj);
            Check {
                group: if r.family == Family::Searched { "energy" } else { "energy_other" }.into(),
                name: format!("{}/{}", r.dataset, r.model),
                value: v,
                expected: r.energy_mj,
                residual: res,
                tolerance: tol,
                passed: res <= tol,
                note: String::new(),
            }
        })
        .collect();
    (Some(coeffs), checks)
}

/// DSP for the full conv chunk, per-PE costs, and the LUT total of the
/// proportionally allocated config of every searched row against the band.
pub fn check_resources(data: &ReferenceData, budget: &HardwareBudget) -> Vec<Check> {
    let mut out = Vec::new();
    let pe_c = budget.max_pe_c();
    let mut cfg = AcceleratorConfig {
        chunk_c: ChunkConfig::minimal(ChunkKind::C),
        chunk_s: ChunkConfig::minimal(ChunkKind::S),
        chunk_a: ChunkConfig::minimal(ChunkKind::A),
        gb_bytes: 0,
    };
    cfg.chunk_c.pe_count = pe_c;
    let dsp = resource_usage(&cfg, 0).dsp;
    out.push(Check {
        group: "resources".into(),
        name: format!("dsp at pe_c = {pe_c}"),
        value: dsp as f64,
        expected: 545.0,
        residual: (dsp as f64 - 545.0).abs(),
        tolerance: 0.0,
        passed: dsp == 545,
        note: String::new(),
    });
    let pp = &data.per_pe_cost;
    let same = (pp.lut_conv, pp.lut_shift, pp.lut_adder) == (LUT_PER_PE_C, LUT_PER_PE_S, LUT_PER_PE_A)
        && pp.dsp_conv == 0.5;
    out.push(Check {
        group: "resources".into(),
        name: "per-PE costs".into(),
        value: f64::from(same as u8),
        expected: 1.0,
        residual: f64::from(!same as u8),
        tolerance: 0.0,
        passed: same,
        note: format!("{}/{}/{} LUT", LUT_PER_PE_C, LUT_PER_PE_S, LUT_PER_PE_A),
    });
    let [lo, hi] = data.klut_band;
    for r in data.op_rows.iter().filter(|r| r.family == Family::Searched) {
        let name = format!("{}/{}", r.dataset, r.model);
        let alloc = r.implied_macs().map(|m| pe_allocation(pe_c, &m, budget));
        let (value, note) = match alloc {
            Some(Ok(a)) => {
                cfg.chunk_s.pe_count = a.pe_s;
                cfg.chunk_a.pe_count = a.pe_a;
                let lut = resource_usage(&cfg, budget.lut_overhead).lut;
                (lut as f64 / 1000.0, format!("pe_s {} pe_a {}", a.pe_s, a.pe_a))
            }
            Some(Err(e)) => (f64::NAN, e.to_string()),
            None => (f64::NAN, "no MAC split".into()),
        };
        let passed = value >= lo && value <= hi;
        let residual = if passed { 0.0 } else if value < lo { lo - value } else { value - hi };
        out.push(Check {
            group: "resources".into(),
            name: format!("{name} klut"),
            value,
            expected: (lo + hi) / 2.0,
            residual,
            tolerance: (hi - lo) / 2.0,
            passed,
            note,
        });
    }
    out
}

/// Published search ablation: both phases, then fine only, then coarse only.
pub fn check_ablation_table(data: &ReferenceData) -> Vec<Check> {
    let find = |c: bool, f: bool| {
        data.search_ablation
            .iter()
            .find(|r| r.coarse == c && r.fine == f)
            .map(|r| r.avg_gops)
    };
    let (Some(both), Some(fine), Some(coarse)) = (find(true, true), find(false, true), find(true, false)) else {
        return vec![Check {
            group: "ablation_table".into(),
            name: "rows present".into(),
            value: 0.0,
            expected: 1.0,
            residual: 1.0,
            tolerance: 0.0,
            passed: false,
            note: String::new(),
        }];
    };
    vec![Check {
        group: "ablation_table".into(),
        name: "coarse+fine >= fine-only >= coarse-only".into(),
        value: both,
        expected: fine,
        residual: 0.0,
        tolerance: 0.0,
        passed: both >= fine && fine >= coarse,
        note: format!("{both} / {fine} / {coarse} GOPS"),
    }]
}

/// All table checks with the default tolerances.
pub fn reproduce_tables(data: &ReferenceData, budget: &HardwareBudget) -> ReproReport {
    let mut checks = check_op_identities(data);
    checks.extend(check_throughput_identities(data, 0.005));
    checks.extend(check_energy(data, 0.02).1);
    checks.extend(check_resources(data, budget));
    checks.extend(check_ablation_table(data));
    ReproReport { checks }
}
