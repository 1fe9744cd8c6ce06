mod support;

use proptest::prelude::*;
use rand::Rng;
use support::*;
use syhd_core::hdcore::{bundle, generate_level_table, Hypervector, ItemMemory, Quantizer};
use syhd_core::modelfile::{decode_item_memory, encode_item_memory};
use syhd_core::rng::{stream, stream_rng};

fn bits_strategy(dim: usize) -> impl Strategy<Value = Bits> {
    proptest::collection::vec(any::<bool>(), dim)
}

#[test]
fn bind_and_hamming_match_brute_force_for_every_pair() {
    for dim in 1..=8 {
        for a in 0..1u64 << dim {
            for b in 0..1u64 << dim {
                let (ba, bb) = (bits_of(a, dim), bits_of(b, dim));
                let (ha, hb) = (to_hv(&ba), to_hv(&bb));
                assert_eq!(to_bits(&ha.bind(&hb).unwrap()), xor(&ba, &bb));
                assert_eq!(ha.hamming(&hb).unwrap(), hamming(&ba, &bb));
            }
        }
    }
}

#[test]
fn bundle_matches_majority_on_every_column_pattern() {
    let mut r = rng(11);
    for dim in 1..=8 {
        for n in 1..=7 {
            for pattern in 0..1u64 << n {
                for k in 0..dim {
                    let vs: Vec<Bits> = (0..n)
                        .map(|i| {
                            let mut v: Bits = (0..dim).map(|_| r.random_bool(0.5)).collect();
                            v[k] = pattern >> i & 1 == 1;
                            v
                        })
                        .collect();
                    let hvs: Vec<Hypervector> = vs.iter().map(|v| to_hv(v)).collect();
                    assert_eq!(to_bits(&bundle(&hvs).unwrap()), majority(&vs));
                }
            }
        }
    }
}

#[test]
fn bundle_matches_majority_on_every_small_input() {
    for dim in 1..=8usize {
        for n in 1..=7usize {
            if dim * n > 16 {
                continue;
            }
            for packed in 0..1u64 << (dim * n) {
                let vs: Vec<Bits> = (0..n).map(|i| bits_of(packed >> (i * dim), dim)).collect();
                let hvs: Vec<Hypervector> = vs.iter().map(|v| to_hv(v)).collect();
                assert_eq!(to_bits(&bundle(&hvs).unwrap()), majority(&vs));
            }
        }
    }
}

#[test]
fn level_table_distances_are_exact() {
    for dim in (3..=10).map(|e| 1usize << e) {
        for q in [2, 4, 8, 16].into_iter().filter(|&q| q <= dim) {
            let table =
                generate_level_table(dim, q, &mut stream_rng(dim as u64 ^ q as u64, stream::LEVEL_TABLE)).unwrap();
            let p = dim / q;
            for i in 0..q {
                for j in 0..q {
                    assert_eq!(
                        table[i].hamming_bits(&table[j]).unwrap(),
                        i.abs_diff(j) * p,
                        "d={dim} q={q} i={i} j={j}"
                    );
                }
            }
        }
    }
}

#[test]
fn random_vectors_are_nearly_orthogonal() {
    let mut r = stream_rng(5, stream::FEATURE_SEEDS);
    let dim = 10_240;
    let vs: Vec<Hypervector> = (0..20).map(|_| Hypervector::random(dim, &mut r).unwrap()).collect();
    // Five standard deviations of Binomial(d, 1/2) / d.
    let bound = 5.0 * 0.5 / (dim as f64).sqrt();
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            let d = vs[i].hamming(&vs[j]).unwrap();
            assert!((d - 0.5).abs() < bound, "distance {d}");
        }
    }
}

#[test]
fn single_feature_round_trips_exactly() {
    let quantizer = Quantizer::uniform(1, 0.0, 1.0, 8).unwrap();
    let mem = ItemMemory::generate(quantizer.clone(), 64, 3).unwrap();
    for level in 1..=8u32 {
        let x = [(level as f64 - 0.5) / 8.0];
        let sample = quantizer.quantize(&x).unwrap();
        assert_eq!(sample.levels(), &[level]);
        assert_eq!(mem.decode(&mem.encode(&sample).unwrap()).unwrap(), sample);
        assert_eq!(mem.codec(&x).unwrap(), x.to_vec());
    }
}

proptest! {
    #[test]
    fn bind_is_self_inverse_and_commutative(a in bits_strategy(200), b in bits_strategy(200)) {
        let (ha, hb) = (to_hv(&a), to_hv(&b));
        prop_assert_eq!(ha.bind(&hb).unwrap(), hb.bind(&ha).unwrap());
        prop_assert_eq!(ha.bind(&hb).unwrap().bind(&hb).unwrap(), ha.clone());
        prop_assert_eq!(ha.bind(&ha).unwrap().count_ones(), 0);
    }

    #[test]
    fn bind_preserves_distance(a in bits_strategy(130), b in bits_strategy(130), c in bits_strategy(130)) {
        let (ha, hb, hc) = (to_hv(&a), to_hv(&b), to_hv(&c));
        prop_assert_eq!(ha.bind(&hc).unwrap().hamming(&hb.bind(&hc).unwrap()).unwrap(), ha.hamming(&hb).unwrap());
    }

    #[test]
    fn bundle_matches_majority(dim in 1usize..300, n in 1usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let vs: Vec<Bits> = (0..n).map(|_| (0..dim).map(|_| r.random_bool(0.5)).collect()).collect();
        let hvs: Vec<Hypervector> = vs.iter().map(|v| to_hv(v)).collect();
        prop_assert_eq!(to_bits(&bundle(&hvs).unwrap()), majority(&vs));
    }

    #[test]
    fn bundle_is_order_independent(dim in 1usize..200, n in 1usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut hvs: Vec<Hypervector> = (0..n).map(|_| Hypervector::random(dim, &mut r).unwrap()).collect();
        let before = bundle(&hvs).unwrap();
        hvs.reverse();
        hvs.rotate_left(n / 2);
        prop_assert_eq!(bundle(&hvs).unwrap(), before);
    }

    #[test]
    fn encoding_matches_literal_definition(dim in 8usize..160, features in 1usize..9, q in 2usize..8, seed in any::<u64>()) {
        prop_assume!(q <= dim);
        let mem = ItemMemory::generate(Quantizer::uniform(features, -1.0, 1.0, q).unwrap(), dim, seed).unwrap();
        let mut r = rng(seed);
        let x: Vec<f64> = (0..features).map(|_| r.random_range(-1.5..1.5)).collect();
        prop_assert_eq!(to_bits(&mem.encode_values(&x).unwrap()), literal_encode(&mem, &x));
    }

    #[test]
    fn item_memory_serialization_is_bit_exact(dim in 2usize..300, features in 1usize..20, q in 2usize..16, seed in any::<u64>()) {
        prop_assume!(q <= dim);
        let mem = ItemMemory::generate(Quantizer::uniform(features, -2.0, 3.5, q).unwrap(), dim, seed).unwrap();
        let bytes = encode_item_memory(&mem);
        let back = decode_item_memory(&bytes).unwrap();
        prop_assert_eq!(&back, &mem);
        prop_assert_eq!(encode_item_memory(&back), bytes);
    }

    #[test]
    fn same_seed_same_item_memory(dim in 2usize..300, q in 2usize..16, seed in any::<u64>()) {
        prop_assume!(q <= dim);
        let quantizer = Quantizer::uniform(4, 0.0, 1.0, q).unwrap();
        let a = ItemMemory::generate(quantizer.clone(), dim, seed).unwrap();
        let b = ItemMemory::generate(quantizer, dim, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
