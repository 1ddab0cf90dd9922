use std::path::Path;

#[test]
fn header_declares_every_export() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/kac.h")).expect("header generated by build.rs");
    let source = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from kac.h");
    }
    for ty in ["typedef struct KacSimulation KacSimulation;", "KAC_STATUS_OK = 0", "KacKernelSpec"] {
        assert!(header.contains(ty), "{ty}");
    }
}
