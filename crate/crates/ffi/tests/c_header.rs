//! Compiles and runs a small C program against the generated header and
//! the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "submeta.h"

int main(void) {
    double a = 0.0, b = 0.0;
    if (submeta_beta_from_range(0.30, 0.54, &a, &b) != SUBMETA_STATUS_OK) return 1;
    if (a < 27.99 || a > 28.01) return 2;
    if (submeta_beta_from_moments(0.5, 0.3, &a, &b) != SUBMETA_STATUS_INVALID_INPUT) return 3;
    if (submeta_last_error() == NULL) return 4;

    SubmetaDataset *ds = NULL;
    if (submeta_dataset_bundled(SUBMETA_OUTCOME_PFS, SUBMETA_VARIANT_MAIN, &ds) != SUBMETA_STATUS_OK) return 5;
    SubmetaBlockCounts c;
    if (submeta_dataset_block_counts(ds, &c) != SUBMETA_STATUS_OK) return 6;
    printf("%zu %zu %zu %zu\n", c.positive_only, c.both, c.negative_only, c.mixed);
    submeta_dataset_free(ds);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libsubmeta_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    let bin = dir.join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    let counts = String::from_utf8(out.stdout).unwrap();
    let n: Vec<usize> = counts.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(n.len(), 4);
    assert!(n[0] > 0 && n[3] > 0);
    std::fs::remove_dir_all(dir).ok();
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("submeta-ffi-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
