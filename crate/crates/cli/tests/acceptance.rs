//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hwnas_cli::commands::comparison_passes;
use hwnas_core::accel::{EnergyCoeffs, HardwareBudget, LUT_PER_PE_A, LUT_PER_PE_C, LUT_PER_PE_S};
use hwnas_core::cosearch::{candidate_seed, pe_allocation, DEFAULT_NODE_CAP};
use hwnas_core::repro::{
    check_ablation_table, check_energy, check_op_identities, check_resources, check_throughput_identities, Check,
    ReferenceData,
};
use hwnas_core::search_space::{default_space, expand, sample_random, LayerDescriptor, LayerType, MacCounts};
use hwnas_core::workloads::{compare, desk_budget, desk_suite};
use hwnas_core::zeroshot::{
    combined_score, combined_scores, instantiate, kendall_tau, nn_degree_blocks, quantize_shift, zen_score,
    BlockTopology, NetLayer, ShiftRange, ShiftWeight, Tensor, Weights, ZenConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn failing(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} ({})", c.name, c.note))
        .collect()
}

fn summary(checks: &[Check]) -> String {
    let bad = failing(checks);
    let n = checks.len();
    if bad.is_empty() {
        format!("{n}/{n} checks")
    } else {
        format!("{}/{n} checks; failing: {}", n - bad.len(), bad.join("; "))
    }
}

fn c1_op_identities() -> Outcome {
    let d = ReferenceData::bundled();
    let checks = check_op_identities(&d);
    let named = ["cifar10/AdderNet-MV2", "cifar10/DeepShift-MV2"];
    let named_ok = checks.iter().filter(|c| named.contains(&c.name.as_str())).all(|c| c.passed);
    let adder = checks.iter().find(|c| c.name == named[0]).map(|c| c.value).unwrap_or(f64::NAN);
    let shift = checks.iter().find(|c| c.name == named[1]).map(|c| c.value).unwrap_or(f64::NAN);
    outcome(
        named_ok && checks.iter().all(|c| c.passed),
        format!("AdderNet-MV2 {adder:.2} M adds, DeepShift-MV2 {shift:.2} M adds; {}", summary(&checks)),
    )
}

fn c2_throughput() -> Outcome {
    let checks = check_throughput_identities(&ReferenceData::bundled(), 0.005);
    let rows: Vec<Check> = checks.into_iter().filter(|c| c.name.ends_with("/gops")).collect();
    outcome(rows.iter().all(|c| c.passed), format!("rows: {}", summary(&rows)))
}

fn c3_energy() -> Outcome {
    let (coeffs, checks) = check_energy(&ReferenceData::bundled(), 0.02);
    let searched: Vec<Check> = checks.into_iter().filter(|c| c.group == "energy").collect();
    let worst = searched.iter().map(|c| c.residual).fold(0.0, f64::max);
    let c = coeffs.map(|c| format!("{:.4e}/{:.4e}/{:.4e} mJ per M ops", c.e_mult, c.e_shift, c.e_add));
    outcome(
        coeffs.is_some() && !searched.is_empty() && searched.iter().all(|c| c.passed),
        format!("{}; worst residual {:.2}%; {}", c.unwrap_or_default(), worst * 100.0, summary(&searched)),
    )
}

fn c4_resources() -> Outcome {
    let checks = check_resources(&ReferenceData::bundled(), &HardwareBudget::default());
    outcome(checks.iter().all(|c| c.passed), summary(&checks))
}

fn c5_c6_oracle() -> (Outcome, Outcome) {
    let b = desk_budget();
    let suite = desk_suite(6, 0, &b);
    let coeffs = EnergyCoeffs::default();
    let mut rows = Vec::new();
    for w in &suite {
        match compare(w, &b, &coeffs, DEFAULT_NODE_CAP) {
            Ok(c) => rows.push(c),
            Err(e) => {
                let o = outcome(false, format!("{}: {e}", w.name));
                return (o, outcome(false, "oracle comparison did not run"));
            }
        }
    }
    let small = suite.iter().all(|w| w.layers.len() <= 6 && w.grid.c.len().max(w.grid.s.len()).max(w.grid.a.len()) <= 8);
    let exact = rows.iter().any(|c| c.ratio == 1.0);
    let ok = rows.len() >= 5 && small && exact && rows.iter().all(comparison_passes);
    let min_ratio = rows.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
    let min_nodes = rows.iter().map(|c| c.node_ratio).fold(f64::INFINITY, f64::min);
    let c5 = outcome(
        ok,
        format!(
            "{} workloads; min throughput ratio {:.4}; min node ratio {:.1}; exact 1.0 on {}",
            rows.len(),
            min_ratio,
            min_nodes,
            rows.iter().filter(|c| c.ratio == 1.0).map(|c| c.workload.as_str()).collect::<Vec<_>>().join(", ")
        ),
    );
    let broken: Vec<String> = rows
        .iter()
        .filter(|c| !c.ordering_holds())
        .map(|c| {
            format!(
                "{} ({:.1} / {:.1} / {:.1} GOPS)",
                c.workload, c.search_gops, c.fine_only_gops, c.coarse_only_gops
            )
        })
        .collect();
    let table = check_ablation_table(&ReferenceData::bundled());
    let c6 = outcome(
        broken.is_empty() && table.iter().all(|c| c.passed),
        if broken.is_empty() {
            format!("{} workloads ordered; published {}", rows.len(), table[0].note)
        } else {
            format!(
                "{}/{} workloads ordered; out of order: {}",
                rows.len() - broken.len(),
                rows.len(),
                broken.join("; ")
            )
        },
    );
    (c5, c6)
}

fn c7_allocation() -> Outcome {
    let s = default_space();
    let b = HardwareBudget::default();
    let pc = b.max_pe_c();
    let room = b.lut_total - LUT_PER_PE_C * pc as u64 - b.lut_overhead;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut exact, mut to_one, mut to_room, mut bad) = (0, 0, 0, Vec::new());
    for i in 0..100 {
        let g = sample_random(&s, &mut rng);
        let layers = expand(&s, &g).expect("sampled genomes expand");
        // chunk MAC totals summed layer by layer
        let mut macs = [0u64; 3];
        for l in &layers {
            macs[l.op_type.code() as usize] += (l.out_channels * (l.in_channels / l.groups)) as u64
                * (l.kernel * l.kernel) as u64
                * (l.out_h * l.out_w) as u64;
        }
        let m = MacCounts { conv: macs[0], shift: macs[1], adder: macs[2] };
        let a = match pe_allocation(pc, &m, &b) {
            Ok(a) => a,
            Err(e) => {
                bad.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let (ts, ta) = (pc as f64 * macs[1] as f64 / macs[0] as f64, pc as f64 * macs[2] as f64 / macs[0] as f64);
        if (a.target_s - ts).abs() > 1e-9 * ts.max(1.0) || (a.target_a - ta).abs() > 1e-9 * ta.max(1.0) {
            bad.push(format!("#{i}: targets {:.3}/{:.3} vs ratios {ts:.3}/{ta:.3}", a.target_s, a.target_a));
            continue;
        }
        let (rs, ra) = (ts.round(), ta.round());
        let must_clamp = rs < 1.0 || ra < 1.0 || LUT_PER_PE_S as f64 * rs + LUT_PER_PE_A as f64 * ra > room as f64;
        if must_clamp {
            if rs < 1.0 || ra < 1.0 {
                to_one += 1;
            } else {
                to_room += 1;
            }
            if !a.clamped || LUT_PER_PE_S * a.pe_s as u64 + LUT_PER_PE_A * a.pe_a as u64 > room {
                bad.push(format!("#{i}: clamp required but not applied ({ts:.3}/{ta:.3} -> {}/{} clamped={})", a.pe_s, a.pe_a, a.clamped));
            }
        } else if (a.pe_s as f64 - ts).abs() <= 0.5 && (a.pe_a as f64 - ta).abs() <= 0.5 && !a.clamped {
            exact += 1;
        } else {
            bad.push(format!("#{i}: pe_s {} vs {ts:.2}, pe_a {} vs {ta:.2}", a.pe_s, a.pe_a));
        }
    }
    let tail = if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) };
    outcome(
        bad.is_empty(),
        format!(
            "100 initial targets equal the MAC ratios; {exact} allocations within 0.5 PE of them; \
             clamped: {to_one} raised to 1 PE (target below 0.5), {to_room} scaled into the {room} free LUTs{tail}"
        ),
    )
}

fn c8_zero_shot() -> Outcome {
    let mut notes = Vec::new();
    let b = |c_in: &[u32], c_out: &[u32], residual| BlockTopology { c_in: c_in.to_vec(), c_out: c_out.to_vec(), residual };
    let nn = [
        (nn_degree_blocks(&[b(&[8, 16], &[16, 32], 8)]), 48.0 / 2.0 + 8.0 / 24.0),
        (nn_degree_blocks(&[b(&[16, 64, 64], &[64, 64, 24], 0)]), 152.0 / 3.0),
        (
            nn_degree_blocks(&[b(&[16, 16], &[16, 16], 16), b(&[16, 64, 64], &[64, 64, 32], 0)]),
            32.0 / 2.0 + 16.0 / 32.0 + 160.0 / 3.0,
        ),
    ];
    let nn_ok = nn.iter().all(|(a, e)| a == e);
    if !nn_ok {
        notes.push(format!("nn-degree {nn:?}"));
    }

    let s = default_space();
    let zc = ZenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut zen_bad = 0;
    for _ in 0..200 {
        let g = sample_random(&s, &mut rng);
        let seed = candidate_seed(0, g.genome_hash());
        let run = || {
            let net = instantiate(&g, &s, seed).ok()?;
            zen_score(&net, zc.alpha, zc.batch, zc.repeats, &mut ChaCha8Rng::seed_from_u64(seed + 1)).ok()
        };
        match (run(), run()) {
            (Some(a), Some(b)) if a.is_finite() && a.to_bits() == b.to_bits() => {}
            _ => zen_bad += 1,
        }
    }
    if zen_bad > 0 {
        notes.push(format!("{zen_bad}/200 zen scores non-finite or irreproducible"));
    }

    let pop: [(f64, f64); 4] = [(9.0, 9.0), (1.0, 5.0), (2.0, 4.0), (3.0, 6.0)];
    let squashed: Vec<(f64, f64)> = pop.iter().map(|p| (p.0.ln(), p.1.powi(3))).collect();
    let rank_ok = combined_score(0, &pop) == 0 && combined_scores(&pop) == combined_scores(&squashed);
    if !rank_ok {
        notes.push("combined score".into());
    }

    let xs = [1.0, 2.0, 3.0, 4.0];
    let taus = [
        kendall_tau(&xs, &xs).ok(),
        kendall_tau(&xs, &[4.0, 3.0, 2.0, 1.0]).ok(),
        kendall_tau(&xs, &[1.0, 3.0, 2.0, 4.0]).ok(),
    ];
    let tau_ok = taus[0] == Some(1.0) && taus[1] == Some(-1.0) && taus[2].is_some_and(|t| (t - 0.6667).abs() < 5e-5);
    if !tau_ok {
        notes.push(format!("kendall {taus:?}"));
    }
    let ok = nn_ok && zen_bad == 0 && rank_ok && tau_ok;
    outcome(
        ok,
        if ok {
            format!("3 topologies exact; 200 zen scores finite and repeatable; tau {:.4}", taus[2].unwrap_or(f64::NAN))
        } else {
            notes.join("; ")
        },
    )
}

fn random_desc(rng: &mut ChaCha8Rng, t: LayerType) -> LayerDescriptor {
    let c = [2u32, 3, 4, 8][rng.random_range(0..4)];
    let hw = [1u32, 4, 7, 8][rng.random_range(0..4)];
    let s = rng.random_range(1..=2);
    let k = [1u32, 3, 5][rng.random_range(0..3)];
    match rng.random_range(0..3) {
        0 => LayerDescriptor::new(t, c, c * 2, 1, 1, 1, hw, hw),
        1 => LayerDescriptor::new(t, c, c, k, s, c, hw, hw),
        _ => LayerDescriptor::new(t, c, c + 3, k, s, 1, hw, hw),
    }
}

fn c9_layers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let range = ShiftRange::default();
    let mut mismatched = 0;
    let mut positive = 0;
    for _ in 0..50 {
        let d = random_desc(&mut rng, LayerType::Shift);
        let q: Vec<ShiftWeight> = (0..NetLayer::weight_len(&d))
            .map(|_| quantize_shift(rng.random_range(-3.0..3.0), range))
            .collect();
        let shape = [4, d.in_channels as usize, d.in_h as usize, d.in_w as usize];
        let x = Tensor::randn(shape, &mut rng);
        let shift = NetLayer { desc: d, weights: Weights::Shift(q.clone()) };
        let conv = NetLayer {
            desc: LayerDescriptor { op_type: LayerType::Conv, ..d },
            weights: Weights::Real(q.iter().map(|w| w.value()).collect()),
        };
        if shift.apply(&x).ok() != conv.apply(&x).ok() {
            mismatched += 1;
        }
        let a = random_desc(&mut rng, LayerType::Adder);
        let w: Vec<f64> = (0..NetLayer::weight_len(&a)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::randn([4, a.in_channels as usize, a.in_h as usize, a.in_w as usize], &mut rng);
        match (NetLayer { desc: a, weights: Weights::Real(w) }).apply(&x) {
            Ok(y) if y.data.iter().all(|v| *v <= 0.0) => {}
            _ => positive += 1,
        }
    }
    let q = |w| {
        let s = quantize_shift(w, range);
        (s.sign, s.exp, s.value())
    };
    let fixtures = [q(2.0), q(-0.75), q(0.3)];
    let fx_ok = fixtures == [(1, 1, 2.0), (-1, 0, -1.0), (1, -2, 0.25)];
    outcome(
        mismatched == 0 && positive == 0 && fx_ok,
        format!("shift/conv mismatches {mismatched}/50; adder layers with positive output {positive}/50; quantize fixtures {fixtures:?}"),
    )
}

fn c10_determinism() -> Outcome {
    let root = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let o = Command::new(env!("CARGO_BIN_EXE_hwnas"))
            .args(["--seed", "42", "--output"])
            .arg(&dir)
            .args(["cosearch", "--population", "8", "--expand-size", "4", "--iterations", "3"])
            .env_remove("HWNAS_PARAMS__ZEN__BATCH")
            .output();
        match o {
            Ok(o) if o.status.success() => outs.push((dir, o.stdout)),
            Ok(o) => return outcome(false, format!("run {run} failed: {}", String::from_utf8_lossy(&o.stderr))),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let files = ["result.json", "log.csv", "pareto.csv"];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(outs[0].0.join(f)).unwrap_or_default();
        let b = std::fs::read(outs[1].0.join(f)).unwrap_or_default();
        if a.is_empty() || a != b {
            differing.push(f);
        }
    }
    if outs[0].1 != outs[1].1 {
        differing.push("stdout");
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "result.json, log.csv, pareto.csv and stdout identical".to_string()
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

fn report(n: usize, name: &str, limit: Duration, took: Duration, o: &Outcome) -> bool {
    let in_time = took <= limit;
    let passed = o.passed && in_time;
    let time = format!("{:.2}s/{}s", took.as_secs_f64(), limit.as_secs());
    let late = if in_time { "" } else { " over time limit;" };
    println!(
        "{} criterion {n:>2} {name} [{time}]{late} {}",
        if passed { "PASS" } else { "FAIL" },
        o.detail
    );
    passed
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() -> ExitCode {
    let sec = Duration::from_secs;
    let mut all = true;
    let (o, t) = timed(c1_op_identities);
    all &= report(1, "op-count identities", sec(1), t, &o);
    let (o, t) = timed(c2_throughput);
    all &= report(2, "throughput/FPS identities", sec(1), t, &o);
    let (o, t) = timed(c3_energy);
    all &= report(3, "energy model", sec(1), t, &o);
    let (o, t) = timed(c4_resources);
    all &= report(4, "resource accounting", sec(1), t, &o);
    let ((o5, o6), t) = timed(c5_c6_oracle);
    all &= report(5, "coarse-to-fine vs oracle", sec(600), t, &o5);
    all &= report(6, "ablation ordering", sec(600), t, &o6);
    let (o, t) = timed(c7_allocation);
    all &= report(7, "proportional PE initialization", sec(30), t, &o);
    let (o, t) = timed(c8_zero_shot);
    all &= report(8, "zero-shot metric properties", sec(300), t, &o);
    let (o, t) = timed(c9_layers);
    all &= report(9, "layer semantics", sec(60), t, &o);
    let (o, t) = timed(c10_determinism);
    all &= report(10, "end-to-end determinism", sec(300), t, &o);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
