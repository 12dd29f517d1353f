#![no_main]

use hgdomain::dataio::ExpressionMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(expr) = ExpressionMatrix::from_reader(data, "fuzz") else {
        return;
    };
    let mut out = Vec::new();
    expr.to_writer(&mut out).unwrap();
    let back = ExpressionMatrix::from_reader(out.as_slice(), "round trip").unwrap();
    assert_eq!(back.spot_ids(), expr.spot_ids());
    assert_eq!(back.gene_ids(), expr.gene_ids());
});
