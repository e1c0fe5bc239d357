use hwnas_core::search_space::*;
use hwnas_core::zeroshot::{block_topologies, nn_degree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn genome(seed: u64) -> SubNetwork {
    sample_random(&default_space(), &mut ChaCha8Rng::seed_from_u64(seed))
}

// counted straight from the genes: stem, 2 or 3 layers per block, 2 head layers
fn expected_layer_count(net: &SubNetwork) -> usize {
    let blocks: usize = net
        .stages
        .iter()
        .map(|s| s.n as usize * if s.e == 1 { 2 } else { 3 })
        .sum();
    1 + blocks + 2
}

#[test]
fn default_space_is_well_formed() {
    let s = default_space();
    s.check().unwrap();
    assert_eq!(s.choice_sets().len(), FLAT_LEN);
    assert_eq!(FLAT_LEN, 37);
}

#[test]
fn smallest_genome_layer_list() {
    let s = default_space();
    let net = smallest_genome(&s);
    let layers = expand(&s, &net).unwrap();
    assert_eq!(layers.len(), expected_layer_count(&net));
    // stem: 3x3 stride 2 from 32x32
    assert_eq!((layers[0].kernel, layers[0].stride, layers[0].out_h), (3, 2, 16));
    let last_feat = &layers[layers.len() - 3];
    assert_eq!((last_feat.out_h, last_feat.out_w), (1, 1));
}

#[test]
fn membership_violation_names_field() {
    let s = default_space();
    let mut flat = smallest_genome(&s).to_flat();
    flat[3] = 7; // stage 1 kernel
    let net = SubNetwork::from_flat(&flat).unwrap();
    match validate(&s, &net) {
        Err(SpaceError::MembershipViolation { stage, value, .. }) => {
            assert_eq!(stage, Some(1));
            assert_eq!(value, 7);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(SubNetwork::from_flat(&flat[..10]).is_err());
}

#[test]
fn counting_rule_fixtures() {
    // 6.6M conv MACs and 79.2M adder MACs give 165.0M adds
    let m = MacCounts { conv: 6_600_000, shift: 0, adder: 79_200_000 };
    assert_eq!(m.raw_ops(), (6_600_000, 0, 165_000_000));
    let s = MacCounts { conv: 6_600_000, shift: 79_200_000, adder: 0 };
    assert_eq!(s.raw_ops().2, 85_800_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_round_trip(seed in any::<u64>()) {
        let net = genome(seed);
        let back = SubNetwork::from_flat(&net.to_flat()).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(back.genome_hash(), net.genome_hash());
    }

    #[test]
    fn sampled_and_bred_genomes_are_valid(a in any::<u64>(), b in any::<u64>(), p in 0.0f64..=1.0) {
        let s = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(a ^ b);
        let x = genome(a);
        let y = genome(b);
        prop_assert!(validate(&s, &x).is_ok());
        prop_assert!(validate(&s, &mutate(&s, &x, p, &mut rng)).is_ok());
        let kid = crossover(&x, &y, &mut rng);
        prop_assert!(validate(&s, &kid).is_ok());
        for (i, v) in kid.to_flat().iter().enumerate() {
            prop_assert!(*v == x.to_flat()[i] || *v == y.to_flat()[i]);
        }
    }

    #[test]
    fn mutation_always_moves_at_rate_one(seed in any::<u64>()) {
        let s = default_space();
        let x = genome(seed);
        let m = mutate(&s, &x, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        for ((a, b), set) in x.to_flat().iter().zip(m.to_flat()).zip(s.choice_sets()) {
            prop_assert!(set.len() < 2 || *a != b);
        }
        prop_assert_eq!(mutate(&s, &x, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)), x);
    }

    #[test]
    fn expansion_shapes(seed in any::<u64>()) {
        let s = default_space();
        let net = genome(seed);
        let ex = expand_detailed(&s, &net).unwrap();
        prop_assert_eq!(ex.layers.len(), expected_layer_count(&net));
        prop_assert_eq!(ex.feature_len, ex.layers.len() - 2);
        for w in ex.layers[..ex.feature_len].windows(2) {
            prop_assert_eq!(w[0].out_channels, w[1].in_channels);
            prop_assert_eq!((w[0].out_h, w[0].out_w), (w[1].in_h, w[1].in_w));
        }
        for l in &ex.layers {
            prop_assert!(l.is_consistent());
        }
        let blocks: u32 = net.stages.iter().map(|g| g.n).sum();
        prop_assert_eq!(ex.blocks.len() as u32, blocks);
        // every block is homogeneous in type
        for b in &ex.blocks {
            let t = ex.layers[b.start].op_type;
            prop_assert!(ex.layers[b.start..b.start + b.len].iter().all(|l| l.op_type == t));
        }
    }

    #[test]
    fn op_identity(seed in any::<u64>()) {
        let s = default_space();
        let layers = expand(&s, &genome(seed)).unwrap();
        let m = MacCounts::of(&layers);
        let total: u64 = layers.iter().map(|l| l.macs()).sum();
        prop_assert_eq!(m.conv + m.shift + m.adder, total);
        let (mults, shifts, adds) = m.raw_ops();
        prop_assert_eq!(adds, m.conv + m.shift + 2 * m.adder);
        prop_assert_eq!(mults, m.conv);
        prop_assert_eq!(shifts, m.shift);
    }

    #[test]
    fn nn_degree_ignores_kernel_type_and_resolution(seed in any::<u64>(), other in any::<u64>()) {
        let s = default_space();
        let net = genome(seed);
        let donor = genome(other);
        let mut changed = net.clone();
        for (g, d) in changed.stages.iter_mut().zip(&donor.stages) {
            g.k = d.k;
            g.t = d.t;
        }
        let mut big = s.clone();
        big.input_resolution = 64;
        let base = nn_degree(&s, &net).unwrap();
        prop_assert_eq!(nn_degree(&s, &changed).unwrap(), base);
        prop_assert_eq!(nn_degree(&big, &net).unwrap(), base);
        let topo = block_topologies(&expand_detailed(&s, &net).unwrap());
        prop_assert!(topo.iter().all(|b| b.c_in.len() == b.c_out.len()));
    }
}
