#![no_main]

use diswot_core::arch::{ArchDescriptor, SpaceKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    for kind in [SpaceKind::S0, SpaceKind::Nb201, SpaceKind::S2Cifar, SpaceKind::S2Imagenet] {
        if let Ok(d) = ArchDescriptor::from_arch_id(kind, s) {
            assert_eq!(ArchDescriptor::from_arch_id(kind, &d.arch_id()).unwrap(), d);
        }
    }
});
