//! Enforces the reference-path firewall: the generator/oracle sources must
//! never import or call into the selection or merging implementations they
//! exist to check. Shared domain types come through the core crate root.

use std::path::Path;

#[test]
fn oracle_sources_do_not_touch_selection_or_merging_code() {
    let src_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let forbidden = [
        "dks::",
        "dfm::",
        "select_keyframes",
        "merge_frame",
        "merge_weights",
        "patch_saliency",
        "merge_gradient",
        "pool_f64",
        "unit_cos",
    ];
    let mut checked = 0;
    for entry in std::fs::read_dir(&src_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("rs") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        // Strip in-file test modules; only shipped code is firewalled.
        let shipped = match text.find("#[cfg(test)]") {
            Some(pos) => &text[..pos],
            None => &text,
        };
        for token in forbidden {
            assert!(
                !shipped.contains(token),
                "{} must not reference `{}`",
                path.display(),
                token
            );
        }
        checked += 1;
    }
    assert!(checked > 0, "no sources scanned");
}
