use dartsketch::packed::{BitReader, BitWriter, PackedVector};
use proptest::prelude::*;

fn fields() -> impl Strategy<Value = (u32, Vec<u64>)> {
    (1u32..=16).prop_flat_map(|t| (Just(t), prop::collection::vec(0..(1u64 << t), 1..600)))
}

proptest! {
    #[test]
    fn prefix_sum_equals_running_total((t, values) in fields()) {
        let v = PackedVector::from_values(t, &values).unwrap();
        let mut running = 0u64;
        for (i, x) in values.iter().enumerate() {
            running += x;
            prop_assert_eq!(v.prefix_sum(i).unwrap(), running, "t = {}, i = {}", t, i);
        }
        prop_assert!(v.prefix_sum(values.len()).is_err());
    }

    #[test]
    fn get_returns_what_was_set((t, values) in fields(), writes in prop::collection::vec((any::<usize>(), any::<u64>()), 0..50)) {
        let mut v = PackedVector::from_values(t, &values).unwrap();
        let mut model = values.clone();
        for (i, x) in writes {
            let (i, x) = (i % model.len(), x & ((1u64 << t) - 1));
            v.set(i, x).unwrap();
            model[i] = x;
        }
        prop_assert_eq!(v.iter().collect::<Vec<_>>(), model);
    }

    #[test]
    fn bit_stream_roundtrip(items in prop::collection::vec((1u32..=64, any::<u64>()), 0..100)) {
        let mut w = BitWriter::new();
        for &(bits, x) in &items {
            let x = if bits == 64 { x } else { x & ((1u64 << bits) - 1) };
            w.write(x, bits);
        }
        let total: usize = items.iter().map(|&(b, _)| b as usize).sum();
        prop_assert_eq!(w.bits_written(), total);
        let bytes = w.finish();
        prop_assert_eq!(bytes.len(), total.div_ceil(8));
        let mut r = BitReader::new(&bytes);
        for &(bits, x) in &items {
            let x = if bits == 64 { x } else { x & ((1u64 << bits) - 1) };
            prop_assert_eq!(r.read(bits).unwrap(), x);
        }
    }
}

#[test]
fn rejects_oversized_values() {
    let mut v = PackedVector::new(2, 10).unwrap();
    assert!(v.set(0, 4).is_err());
    assert!(v.set(10, 1).is_err());
    assert!(PackedVector::from_values(3, &[8]).is_err());
}
