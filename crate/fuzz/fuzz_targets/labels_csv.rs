#![no_main]

use hgdomain::dataio::{parse_label_table, read_labels_subset, GroundTruthLabels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((ids, raw)) = parse_label_table(data, "fuzz") else {
        return;
    };
    assert_eq!(ids.len(), raw.len());
    let truth = GroundTruthLabels::from_raw(&raw);
    assert!(truth.labels.iter().all(|&l| l < truth.n_domains));
    let half = &ids[..ids.len() / 2];
    assert_eq!(read_labels_subset(data, "fuzz", half).unwrap().len(), half.len());
});
