#![no_main]

use hgdomain::dataio::table::matrix_from_reader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((ids, m)) = matrix_from_reader(data, "fuzz") {
        assert_eq!(ids.len(), m.nrows());
    }
});
