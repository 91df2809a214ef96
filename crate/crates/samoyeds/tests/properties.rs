//! Property tests over the codec, packing, serialization, pruning, routing,
//! and traffic invariants.

use proptest::prelude::*;

use samoyeds::{
    compress_input, decode_weight, deserialize, encode_weight, pack_metadata, prune_to_format,
    route_tokens, serialize, simulate_memory_traffic, spmm_reference, spmm_tiled,
    unpack_metadata, validate_weight, DenseMatrix, Epilogue, SparseFormatConfig, TileConfig,
    TrafficScheme,
};

fn any_config() -> impl Strategy<Value = SparseFormatConfig> {
    prop_oneof![
        Just(SparseFormatConfig::new(1, 2, 16).unwrap()),
        Just(SparseFormatConfig::new(1, 2, 32).unwrap()),
        Just(SparseFormatConfig::new(4, 8, 32).unwrap()),
        Just(SparseFormatConfig::new(8, 16, 32).unwrap()),
        Just(SparseFormatConfig::new(2, 4, 8).unwrap()),
        Just(SparseFormatConfig::new(2, 2, 4).unwrap()),
        Just(SparseFormatConfig::new(3, 5, 12).unwrap()),
    ]
}

fn engine_config() -> impl Strategy<Value = SparseFormatConfig> {
    prop_oneof![
        Just(SparseFormatConfig::new(1, 2, 32).unwrap()),
        Just(SparseFormatConfig::new(4, 8, 32).unwrap()),
        Just(SparseFormatConfig::new(8, 16, 32).unwrap()),
        Just(SparseFormatConfig::new(2, 2, 64).unwrap()),
    ]
}

/// Integer-valued matrices keep every f32 sum exact.
fn int_matrix(
    cfg_strategy: impl Strategy<Value = SparseFormatConfig>,
) -> impl Strategy<Value = (SparseFormatConfig, DenseMatrix)> {
    (cfg_strategy, 1usize..=3, 1usize..=3).prop_flat_map(|(cfg, rm, cm)| {
        let rows = cfg.m as usize * rm;
        let cols = cfg.v as usize * cm;
        proptest::collection::vec(-4i8..=4i8, rows * cols).prop_map(move |vals| {
            let values = vals.into_iter().map(|v| v as f32).collect();
            (cfg, DenseMatrix::from_vec(rows, cols, values).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn codec_roundtrip((cfg, w) in int_matrix(any_config())) {
        let (pruned, report) = prune_to_format(&w, &cfg).unwrap();
        prop_assert!(report.achieved_sparsity >= cfg.sparsity() - 1e-12);
        let sw = encode_weight(&pruned, &cfg).unwrap();
        prop_assert!(validate_weight(&sw).is_empty());
        let back = decode_weight(&sw).unwrap();
        prop_assert_eq!(&back, &pruned);
        // Canonical encodings survive encode(decode(sw)) unchanged.
        let re = encode_weight(&back, &cfg).unwrap();
        prop_assert_eq!(&re, &sw);
        // Non-zero count never exceeds the format bound.
        let bound = (w.rows * w.cols) as f64 * cfg.subrow_density() * 0.5;
        prop_assert!(back.count_nonzeros() as f64 <= bound + 1e-9);
    }

    #[test]
    fn serialization_roundtrip((cfg, w) in int_matrix(any_config())) {
        let (pruned, _) = prune_to_format(&w, &cfg).unwrap();
        let sw = encode_weight(&pruned, &cfg).unwrap();
        let bytes = serialize(&sw);
        let storage_rows = sw.storage_rows();
        let expected = 25
            + storage_rows * sw.data_cols() * 4
            + storage_rows * sw.block_cols()
            + (storage_rows * sw.data_cols()).div_ceil(4);
        prop_assert_eq!(bytes.len(), expected);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(back, sw);
    }

    #[test]
    fn prune_idempotent((cfg, w) in int_matrix(any_config())) {
        let (p1, _) = prune_to_format(&w, &cfg).unwrap();
        let (p2, r2) = prune_to_format(&p1, &cfg).unwrap();
        prop_assert_eq!(p1, p2);
        prop_assert_eq!(r2.zeroed_elements, 0);
    }

    #[test]
    fn packing_bijection(panel in proptest::collection::vec(0u8..4, 256)) {
        let packed = pack_metadata(&panel).unwrap();
        prop_assert_eq!(unpack_metadata(&packed).unwrap(), panel);
    }

    #[test]
    fn routing_partitions_tokens(
        tokens in 1usize..16,
        experts in 2usize..9,
        top_k in 1usize..4,
        raw in proptest::collection::vec(-10.0f32..10.0, 16 * 9),
    ) {
        let top_k = top_k.min(experts);
        let values = raw[..tokens * experts].to_vec();
        let logits = DenseMatrix::from_vec(tokens, experts, values).unwrap();
        let routing = route_tokens(&logits, top_k).unwrap();
        let assigned: usize = routing.expert_sel.iter().map(Vec::len).sum();
        prop_assert_eq!(assigned, tokens * top_k);
        for pairs in &routing.per_token {
            prop_assert_eq!(pairs.len(), top_k);
            let sum: f32 = pairs.iter().map(|(_, g)| g).sum();
            prop_assert!((sum - 1.0).abs() < 1e-5);
            // Distinct experts per token.
            for i in 0..pairs.len() {
                for j in i + 1..pairs.len() {
                    prop_assert_ne!(pairs[i].0, pairs[j].0);
                }
            }
        }
        for sel in &routing.expert_sel {
            prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn traffic_dominance(
        m in 1usize..512,
        k in 1usize..512,
        n in 1usize..512,
        f in 0.0f64..=1.0,
        cfg in any_config(),
    ) {
        let tc = TileConfig::default();
        let samo = simulate_memory_traffic((m, k, n), &cfg, f, &tc, TrafficScheme::Samoyeds);
        for scheme in TrafficScheme::ALL {
            let other = simulate_memory_traffic((m, k, n), &cfg, f, &tc, scheme);
            prop_assert!(samo.total_bytes() <= other.total_bytes(), "{:?}", scheme);
        }
        let dense = simulate_memory_traffic((m, k, n), &cfg, f, &tc, TrafficScheme::Dense);
        if f < 1.0 || cfg.subrow_density() < 1.0 {
            // Strict dominance over the dense scheme away from the trivial
            // point (byte counts round to whole elements, so require a gap
            // of at least one element on the amplified operand).
            let slack = (k * n) as f64 * (1.0 - f) + (m * k) as f64 * (1.0 - cfg.subrow_density());
            if slack >= 1.0 {
                prop_assert!(samo.total_bytes() < dense.total_bytes());
            }
        } else {
            prop_assert_eq!(samo.total_bytes(), dense.total_bytes());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tiled_equals_reference(
        (cfg, w) in int_matrix(engine_config()),
        tokens in 1usize..12,
        raw in proptest::collection::vec(-4i8..=4i8, 12 * 192),
    ) {
        let (pruned, _) = prune_to_format(&w, &cfg).unwrap();
        let sw = encode_weight(&pruned, &cfg).unwrap();
        let values: Vec<f32> = raw[..w.cols * tokens].iter().map(|v| *v as f32).collect();
        let x_dense = DenseMatrix::from_vec(w.cols, tokens, values).unwrap();
        let sel: Vec<usize> = (0..tokens).collect();
        let x = compress_input(&x_dense, &sel).unwrap();
        let tc = TileConfig::new(32, 32, 32, 32, 32, 2).unwrap();
        let tiled = spmm_tiled(&sw, &x, &tc, &Epilogue::None).unwrap();
        let reference = spmm_reference(&sw, &x).unwrap();
        prop_assert_eq!(tiled.values, reference.values);
    }
}
