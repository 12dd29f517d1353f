#![no_main]

use hgdomain::dataio::TissueMask;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // first byte picks how many of s0, s1, ... the mask must cover
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let order: Vec<String> = (0..n % 8).map(|i| format!("s{i}")).collect();
    if let Ok(m) = TissueMask::from_reader(rest, "fuzz", &order) {
        assert_eq!(m.len(), order.len());
        assert!(m.count() > 0);
    }
});
