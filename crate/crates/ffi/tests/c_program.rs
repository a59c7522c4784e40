//! Compiles a small C program against the generated header and the shared
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "swarm_discovery.h"

int main(void) {
    const double v[4] = {0.6, 1.0, 0.4, 0.5};
    SdController *c = NULL;
    if (sd_controller_new(v, 4, &c) != SD_STATUS_OK) return 10;
    SdHeuristic h;
    if (sd_controller_heuristic(c, SD_CONVENTION_STRICT, &h) != SD_STATUS_OK || !h.passes) return 11;

    SdRolloutSettings s = sd_rollout_settings_default();
    s.horizon = 200;
    SdTrajectory *t = NULL;
    if (sd_simulate(c, &s, 3, &t) != SD_STATUS_OK) return 12;
    double f[5];
    if (sd_trajectory_features(t, 160, f) != SD_STATUS_OK) return 13;
    float px[2500];
    if (sd_trajectory_render(t, 160, 50, px, 2500) != SD_STATUS_OK) return 14;

    const double bad[2] = {0.0, 0.0};
    SdController *d = NULL;
    if (sd_controller_new(bad, 2, &d) != SD_STATUS_INVALID_ARGUMENT) return 15;
    if (sd_last_error() == NULL) return 16;

    printf("score=%.4f speed=%.4f\n", h.score, f[0]);
    sd_trajectory_free(t);
    sd_controller_free(c);
    return 0;
}
"#;

fn lib_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = lib_dir();
    assert!(lib.join("libswarm_discovery_ffi.so").exists(), "shared library missing in {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg(format!("-I{}", include.display()))
        .arg(format!("-L{}", lib.display()))
        .args(["-lswarm_discovery_ffi", "-lm"])
        .status()
        .expect("a C compiler (cc) is required for this test");
    assert!(status.success());
    let out = Command::new(&bin).env("LD_LIBRARY_PATH", &lib).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("score="));
}
