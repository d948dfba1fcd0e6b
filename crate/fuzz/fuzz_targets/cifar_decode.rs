#![no_main]

use diswot_core::data::{cifar_record_count, decode_cifar_record, CifarVariant};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for variant in [CifarVariant::Cifar10, CifarVariant::Cifar100] {
        if let Ok(n) = cifar_record_count(data, variant) {
            for i in 0..n.min(4) {
                if let Ok(r) = decode_cifar_record(data, variant, i) {
                    assert!(r.label < variant.num_classes());
                    assert!(r.pixels.iter().all(|v| v.is_finite()));
                }
            }
            assert!(decode_cifar_record(data, variant, n).is_err());
        }
    }
});
