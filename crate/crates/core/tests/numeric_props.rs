use mosedti_core::{Tape, Tensor};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-30.0f64..30.0, r * c).prop_map(move |d| Tensor::matrix(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in matrix(8, 8), axis in 0usize..2) {
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let s = t.softmax(v, axis).unwrap();
        let out = t.value(s);
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        prop_assert!(out.data().iter().all(|&p| p >= 0.0));
        let (outer, inner) = if axis == 1 { (rows, cols) } else { (cols, rows) };
        for i in 0..outer {
            let sum: f64 = (0..inner)
                .map(|j| if axis == 1 { out.data()[i * cols + j] } else { out.data()[j * cols + i] })
                .sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
        }
    }

    #[test]
    fn adaptive_pool_length_and_segment_max(
        len in 1usize..300,
        out_len in 1usize..20,
        seed in any::<u64>(),
    ) {
        prop_assume!(len >= out_len);
        let data: Vec<f64> = (0..len).map(|i| ((i as u64 ^ seed).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64).collect();
        let mut t = Tape::new();
        let x = t.constant(Tensor::column(data.clone()));
        let p = t.adaptive_max_pool(x, out_len).unwrap();
        let got = t.value(p).data().to_vec();
        prop_assert_eq!(got.len(), out_len);
        // Segment i covers [floor(i L / n), floor((i + 1) L / n)).
        for (i, g) in got.iter().enumerate() {
            let (s, e) = (i * len / out_len, (i + 1) * len / out_len);
            let want = data[s..e].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(*g, want);
        }
    }

    #[test]
    fn replay_reproduces_bits(a in matrix(4, 4), scale in -2.0f64..2.0) {
        let mut t = Tape::new();
        let x = t.leaf(a.clone(), true);
        let y = t.scale(x, scale).unwrap();
        let z = t.sigmoid(y).unwrap();
        let w = t.softmax(z, 1).unwrap();
        let s = t.sum(w).unwrap();
        let first = t.value(s).data().to_vec();
        t.replay().unwrap();
        let second = t.value(s).data().to_vec();
        prop_assert_eq!(first.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), second.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn row_normalization_norms(x in matrix(6, 5)) {
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let n = t.normalize_rows(v, 1e-9).unwrap();
        let out = t.value(n);
        for r in 0..x.shape()[0] {
            let raw: f64 = x.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm: f64 = out.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - raw / (raw + 1e-9)).abs() < 1e-12);
        }
    }
}
