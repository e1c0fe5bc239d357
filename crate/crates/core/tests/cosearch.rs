use hwnas_core::accel::*;
use hwnas_core::cosearch::*;
use hwnas_core::search_space::*;
use hwnas_core::workloads::{all_conv_workload, compare, desk_budget, random_workload};
use hwnas_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coeffs() -> EnergyCoeffs {
    EnergyCoeffs::default()
}

/// Best (cycles, dataflow) for one chunk by scanning every feasible dataflow.
fn brute_chunk(layers: &[LayerDescriptor], kind: ChunkKind, pe: u32, b: &HardwareBudget) -> u64 {
    enumerate_dataflows(kind, layers, b.max_gb_bytes(), b)
        .unwrap()
        .into_iter()
        .map(|dataflow| {
            let c = ChunkConfig { chunk_kind: kind, pe_count: pe, dataflow };
            chunk_cycles(layers, &c, b.max_gb_bytes(), b).unwrap()
        })
        .min()
        .unwrap()
}

fn all_of(t: LayerType, seed: u64) -> SubNetwork {
    let mut g = sample_random(&default_space(), &mut ChaCha8Rng::seed_from_u64(seed));
    for s in &mut g.stages {
        s.t = t;
    }
    g
}

#[test]
fn coarse_is_optimal_for_the_conv_chunk() {
    let b = desk_budget();
    for seed in 0..5 {
        let w = random_workload(seed, &b);
        let c = coarse_search(&w.layers, &b).unwrap();
        assert_eq!(c.chunk.pe_count, b.max_pe_c());
        let got = chunk_cycles(&w.layers, &c.chunk, b.max_gb_bytes(), &b).unwrap();
        assert_eq!(got, brute_chunk(&w.layers, ChunkKind::C, b.max_pe_c(), &b), "{}", w.name);
    }
}

#[test]
fn fine_never_worse_than_its_starting_point() {
    let b = desk_budget();
    for seed in 0..5 {
        let w = random_workload(seed, &b);
        let c = coarse_search(&w.layers, &b).unwrap();
        let f = fine_search(&w.layers, &b, &c.chunk).unwrap();
        let alloc = f.allocation;
        let start = [
            chunk_cycles(&w.layers, &c.chunk, b.max_gb_bytes(), &b).unwrap(),
            brute_chunk(&w.layers, ChunkKind::S, alloc.pe_s, &b),
            brute_chunk(&w.layers, ChunkKind::A, alloc.pe_a, &b),
        ];
        assert!(f.interval_cycles <= *start.iter().max().unwrap());
        f.config.check_budget(&b).unwrap();
        assert_eq!(f.config.gb_bytes, min_gb_size(&f.config, &w.layers, &b));
    }
}

#[test]
fn single_point_grid_oracle_is_per_chunk_optimum() {
    let b = desk_budget();
    let w = random_workload(3, &b);
    let grid = PeGrid::single(32, 8, 8);
    let out = oracle_layers(&w.layers, &b, &coeffs(), &grid, Objective::MaximizeThroughput, DEFAULT_NODE_CAP).unwrap();
    assert_eq!(
        [out.config.chunk_c.pe_count, out.config.chunk_s.pe_count, out.config.chunk_a.pe_count],
        [32, 8, 8]
    );
    let want = [(ChunkKind::C, 32), (ChunkKind::S, 8), (ChunkKind::A, 8)]
        .iter()
        .map(|(k, p)| brute_chunk(&w.layers, *k, *p, &b))
        .max()
        .unwrap();
    let got = (out.report.latency_s * b.frequency_hz).round() as u64;
    assert_eq!(got, want);
}

#[test]
fn objectives_pick_the_same_design() {
    let b = desk_budget();
    let w = random_workload(1, &b);
    let run = |o| oracle_layers(&w.layers, &b, &coeffs(), &w.grid, o, DEFAULT_NODE_CAP).unwrap();
    let a = run(Objective::MaximizeThroughput);
    let l = run(Objective::MinimizeLatency);
    assert_eq!(a.config, l.config);
}

#[test]
fn oracle_refuses_huge_grids() {
    let b = desk_budget();
    let w = random_workload(2, &b);
    let r = oracle_layers(&w.layers, &b, &coeffs(), &w.grid, Objective::default(), 10);
    assert!(matches!(r, Err(AccelError::GridTooLarge { cap: 10, .. })));
    let est = oracle_node_estimate(&w.layers, &b, &w.grid).unwrap();
    assert!(est > 10);
}

#[test]
fn all_conv_workload_search_equals_oracle() {
    let b = desk_budget();
    let w = all_conv_workload(&b);
    let c = compare(&w, &b, &coeffs(), DEFAULT_NODE_CAP).unwrap();
    assert_eq!(c.ratio, 1.0);
    assert!(c.node_ratio >= 10.0);
}

#[test]
fn all_conv_genome_gets_one_shift_and_adder_pe() {
    let s = default_space();
    let b = HardwareBudget::default();
    let (cfg, report) = search_accelerator(&all_of(LayerType::Conv, 4), &s, &b, &coeffs()).unwrap();
    assert_eq!((cfg.chunk_s.pe_count, cfg.chunk_a.pe_count), (1, 1));
    assert_eq!(report.per_chunk_time_s[1], 0.0);
    assert_eq!(report.per_chunk_time_s[2], 0.0);
}

#[test]
fn hardware_search_is_deterministic_and_in_budget() {
    let s = default_space();
    let b = HardwareBudget::default();
    let g = sample_random(&s, &mut ChaCha8Rng::seed_from_u64(8));
    let a = search_accelerator(&g, &s, &b, &coeffs()).unwrap();
    let a2 = search_accelerator(&g, &s, &b, &coeffs()).unwrap();
    assert_eq!(a, a2);
    a.0.check_budget(&b).unwrap();
    assert!(a.1.resources.dsp <= 545);
}

#[test]
fn proportional_initialization_tracks_mac_ratios() {
    let s = default_space();
    let b = HardwareBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let g = sample_random(&s, &mut rng);
        let m = MacCounts::of(&expand(&s, &g).unwrap());
        let pc = b.max_pe_c();
        let a = pe_allocation(pc, &m, &b).unwrap();
        if m.conv > 0 {
            assert_eq!(a.target_s, pc as f64 * m.shift as f64 / m.conv as f64);
            assert_eq!(a.target_a, pc as f64 * m.adder as f64 / m.conv as f64);
        }
        let room = b.lut_total - LUT_PER_PE_C * pc as u64 - b.lut_overhead;
        let (rs, ra) = (a.target_s.round() as u32, a.target_a.round() as u32);
        let needed = rs < 1 || ra < 1 || LUT_PER_PE_S * rs as u64 + LUT_PER_PE_A * ra as u64 > room;
        assert_eq!(a.clamped, needed);
        if !a.clamped {
            assert!((a.pe_s as f64 - a.target_s).abs() <= 0.5);
            assert!((a.pe_a as f64 - a.target_a).abs() <= 0.5);
        }
        assert!(LUT_PER_PE_S * a.pe_s as u64 + LUT_PER_PE_A * a.pe_a as u64 <= room);
    }
}

#[test]
fn shift_heavy_allocation_leaves_room_for_one_adder_pe() {
    let b = HardwareBudget::default();
    let pc = b.max_pe_c();
    let room = b.lut_total - LUT_PER_PE_C * pc as u64 - b.lut_overhead;
    // shift target far above the room, no adder MACs at all
    let m = MacCounts { conv: 1_000, shift: 3_023, adder: 0 };
    let a = pe_allocation(pc, &m, &b).unwrap();
    assert!(a.clamped);
    assert_eq!(a.pe_a, 1);
    assert!(LUT_PER_PE_S * a.pe_s as u64 + LUT_PER_PE_A <= room);
    assert_eq!(a.pe_s as u64, (room - LUT_PER_PE_A) / LUT_PER_PE_S);
}

proptest::proptest! {
    #[test]
    fn allocation_always_fits(
        conv in 0u64..1_000_000_000,
        shift in 0u64..1_000_000_000,
        adder in 0u64..1_000_000_000,
        pc in 1u32..=1090,
    ) {
        let b = HardwareBudget::default();
        let m = MacCounts { conv, shift, adder };
        let a = pe_allocation(pc, &m, &b).unwrap();
        let room = b.lut_total - LUT_PER_PE_C * pc as u64 - b.lut_overhead;
        proptest::prop_assert!(a.pe_s >= 1 && a.pe_a >= 1);
        proptest::prop_assert!(LUT_PER_PE_S * a.pe_s as u64 + LUT_PER_PE_A * a.pe_a as u64 <= room);
    }
}

fn candidate(g: &SubNetwork, nn: f64, zen: Option<f64>, template: &(AcceleratorConfig, PerfReport)) -> Candidate {
    Candidate {
        net: g.clone(),
        hash: g.genome_hash(),
        config: template.0,
        report: template.1,
        nn_degree: nn,
        zen_score: zen,
    }
}

#[test]
fn selection_keeps_the_best_ranks() {
    let s = default_space();
    let b = HardwareBudget::default();
    let template = search_accelerator(&smallest_genome(&s), &s, &b, &coeffs()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for round in 0..20u64 {
        let pool: Vec<Candidate> = (0..12)
            .map(|i| {
                let g = sample_random(&s, &mut rng);
                let zen = if (i + round) % 7 == 0 { None } else { Some(((i * 5 + round) % 9) as f64) };
                candidate(&g, ((i * 3 + round) % 11) as f64, zen, &template)
            })
            .collect();
        let all = rank_candidates(&pool.iter().collect::<Vec<_>>(), false);
        let kept = select(pool.clone(), 5, false);
        assert_eq!(kept.len(), 5);
        let kept_hashes: Vec<u64> = kept.iter().map(|k| k.0.hash).collect();
        let worst_kept = kept.iter().map(|k| k.1).max().unwrap();
        for (c, r) in pool.iter().zip(&all) {
            if !kept_hashes.contains(&c.hash) {
                assert!(*r >= worst_kept);
            }
        }
        assert_eq!(kept[0].1, *all.iter().min().unwrap());
        assert!(kept.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}

#[test]
fn pareto_front_is_non_dominated() {
    let s = default_space();
    let b = HardwareBudget::default();
    let t = search_accelerator(&smallest_genome(&s), &s, &b, &coeffs()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let entries: Vec<RankedEntry> = [(10.0, 3), (12.0, 5), (9.0, 1), (12.0, 4), (8.0, 6)]
        .iter()
        .map(|(g, r)| {
            let mut c = candidate(&sample_random(&s, &mut rng), 1.0, Some(1.0), &t);
            c.report.throughput_gops = *g;
            RankedEntry {
                genome: c.net.genome_string(),
                score: hwnas_core::zeroshot::ZeroShotScore { nn_degree: 1.0, zen_score: Some(1.0), combined_rank: *r },
                candidate: c,
            }
        })
        .collect();
    let front: Vec<(f64, usize)> = pareto_front(&entries)
        .iter()
        .map(|e| (e.candidate.report.throughput_gops, e.score.combined_rank))
        .collect();
    assert_eq!(front, vec![(10.0, 3), (9.0, 1), (12.0, 4)]);
}

fn small_params(seed: u64) -> SearchParams {
    SearchParams {
        population: 4,
        expand_size: 2,
        iterations: 1,
        top_k: 3,
        seed,
        zen: hwnas_core::zeroshot::ZenConfig { batch: 4, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn small_cosearch_respects_constraint() {
    let s = default_space();
    let b = HardwareBudget::default();
    let c = Constraint { max_lut: Some(110_000), ..Default::default() };
    let r = cosearch(&s, &b, &c, &small_params(3), &coeffs()).unwrap();
    assert!(!r.entries.is_empty() && r.entries.len() <= 3);
    assert_eq!(r.log.len(), 2);
    for e in r.entries.iter().chain(&r.pareto) {
        assert!(c.admits(&e.candidate.report));
        assert!(e.candidate.report.resources.lut <= 110_000);
        validate(&s, &e.candidate.net).unwrap();
    }
    assert!(r.entries.windows(2).all(|w| w[0].score.combined_rank <= w[1].score.combined_rank));
}

#[test]
fn zero_iterations_returns_initial_population() {
    let s = default_space();
    let p = SearchParams { iterations: 0, ..small_params(1) };
    let r = cosearch(&s, &HardwareBudget::default(), &Constraint::default(), &p, &coeffs()).unwrap();
    assert_eq!(r.log.len(), 1);
    assert_eq!(r.log[0].offspring, 4);
}

#[test]
fn impossible_constraint_empties_population() {
    let s = default_space();
    let c = Constraint { max_latency_s: Some(1e-12), ..Default::default() };
    let p = SearchParams { iterations: 0, ..small_params(1) };
    let r = cosearch(&s, &HardwareBudget::default(), &c, &p, &coeffs());
    assert!(matches!(r, Err(Error::EmptyPopulation)));
}

#[test]
fn invalid_params_rejected() {
    let s = default_space();
    let p = SearchParams { population: 0, ..small_params(1) };
    let r = cosearch(&s, &HardwareBudget::default(), &Constraint::default(), &p, &coeffs());
    assert!(matches!(r, Err(Error::InvalidParams(_))));
}

#[test]
fn candidate_seeds_differ() {
    let a = candidate_seed(0, 1);
    assert_ne!(a, candidate_seed(1, 1));
    assert_ne!(a, candidate_seed(0, 2));
    assert_eq!(a, candidate_seed(0, 1));
}
