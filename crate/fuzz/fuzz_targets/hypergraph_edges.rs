#![no_main]

use hgdomain::hypergraph::Hypergraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(hg) = Hypergraph::from_reader(data, "fuzz") else {
        return;
    };
    let mut out = Vec::new();
    hg.to_writer(&mut out).unwrap();
    assert_eq!(Hypergraph::from_reader(out.as_slice(), "round trip").unwrap(), hg);
});
