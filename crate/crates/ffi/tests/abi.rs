use std::ffi::{CStr, CString};
use std::ptr;

use swarm_discovery_ffi::*;

fn last_error() -> String {
    let p = sd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn controller(v: &[f64]) -> *mut SdController {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { sd_controller_new(v.as_ptr(), v.len(), &mut c) }, SdStatus::Ok);
    c
}

#[test]
fn heuristic_matches_core() {
    let c = controller(&[0.6, 1.0, 0.4, 0.5]);
    let mut r = SdHeuristic::default();
    assert_eq!(unsafe { sd_controller_heuristic(c, SdConvention::Strict, &mut r) }, SdStatus::Ok);
    assert_eq!(r.metrics[0], 1.0);
    assert!((r.metrics[1] - 1.77f64.sqrt()).abs() < 1e-12);
    assert!(r.passes);
    unsafe { sd_controller_free(c) };
}

#[test]
fn bad_controller_reports_error() {
    let mut c = ptr::null_mut();
    let v = [0.1, 0.2];
    assert_eq!(unsafe { sd_controller_new(v.as_ptr(), 2, &mut c) }, SdStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(last_error().contains("4 or 9"), "{}", last_error());
    assert_eq!(unsafe { sd_controller_new(ptr::null(), 4, &mut c) }, SdStatus::NullPointer);
    assert_eq!(unsafe { sd_controller_new(v.as_ptr(), 2, ptr::null_mut()) }, SdStatus::NullPointer);
}

#[test]
fn simulate_features_and_render() {
    let c = controller(&[-0.7, 0.3, 1.0, 1.0]);
    let mut s = sd_rollout_settings_default();
    assert_eq!(s.horizon, 1200);
    s.horizon = 200;
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sd_simulate(c, &s, 7, &mut t) }, SdStatus::Ok);
    unsafe {
        assert_eq!(sd_trajectory_frame_count(t), 201);
        let n = sd_trajectory_agent_count(t);
        assert_eq!(n, s.agents);
        let mut xyt = vec![0.0; 3 * n];
        assert_eq!(sd_trajectory_frame(t, 200, xyt.as_mut_ptr(), xyt.len()), SdStatus::Ok);
        assert!(xyt.iter().all(|v| v.is_finite()));
        assert_eq!(sd_trajectory_frame(t, 201, xyt.as_mut_ptr(), xyt.len()), SdStatus::InvalidArgument);
        assert_eq!(sd_trajectory_frame(t, 0, xyt.as_mut_ptr(), 3), SdStatus::InvalidArgument);

        let mut f = [0.0; 5];
        assert_eq!(sd_trajectory_features(t, 160, f.as_mut_ptr()), SdStatus::Ok);
        assert!(f[0] > 0.0);
        assert_eq!(sd_trajectory_features(t, 500, f.as_mut_ptr()), SdStatus::InvalidArgument);

        let mut px = vec![0.0f32; 2500];
        assert_eq!(sd_trajectory_render(t, 160, 50, px.as_mut_ptr(), px.len()), SdStatus::Ok);
        assert!(px.iter().any(|&p| p > 0.0));
        assert!(px.iter().all(|&p| (0.0..=1.0).contains(&p)));
        sd_trajectory_free(t);
        sd_controller_free(c);
    }
}

#[test]
fn two_sensor_controller_simulates() {
    let mut v = vec![0.5; 8];
    v.push(swarm_discovery::controller::SENSOR_ANGLES[3]);
    let c = controller(&v);
    let mut s = sd_rollout_settings_default();
    s.horizon = 170;
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { sd_simulate(c, &s, 1, &mut t) }, SdStatus::Ok);
    unsafe {
        sd_trajectory_free(t);
        sd_controller_free(c);
    }
}

#[test]
fn novelty_matches_brute_force() {
    let archive = [0.0, 0.0, 3.0, 4.0, 6.0, 8.0];
    let b = [0.0, 0.0];
    let mut score = 0.0;
    unsafe {
        assert_eq!(sd_novelty(b.as_ptr(), 2, archive.as_ptr(), 3, 2, &mut score), SdStatus::Ok);
        assert_eq!(score, 2.5);
        assert_eq!(sd_novelty(b.as_ptr(), 2, ptr::null(), 0, 2, &mut score), SdStatus::Ok);
        assert!(score.is_infinite());
        assert_eq!(sd_novelty(b.as_ptr(), 0, archive.as_ptr(), 3, 2, &mut score), SdStatus::InvalidArgument);
    }
}

#[test]
fn embedder_round_trip() {
    use rand::SeedableRng;
    use swarm_discovery::nn::{checkpoint, Network, NetworkSpec};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.swemb");
    let net = Network::<f32>::init(NetworkSpec::default_embedding(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(2)).unwrap();
    checkpoint::save(&path, &net, serde_json::Value::Null).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(sd_embedder_load(cpath.as_ptr(), &mut e), SdStatus::Ok);
        assert_eq!(sd_embedder_input_len(e), 2500);
        assert_eq!(sd_embedder_output_dim(e), 5);
        let px: Vec<f32> = (0..2500).map(|i| (i % 7) as f32 / 7.0).collect();
        let mut y = [0.0; 5];
        assert_eq!(sd_embedder_embed(e, px.as_ptr(), px.len(), y.as_mut_ptr(), 5), SdStatus::Ok);
        let expected = net.forward(&px).unwrap();
        for (a, b) in y.iter().zip(expected) {
            assert_eq!(*a, b as f64);
        }
        assert_eq!(sd_embedder_embed(e, px.as_ptr(), 10, y.as_mut_ptr(), 5), SdStatus::InvalidArgument);
        sd_embedder_free(e);

        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(sd_embedder_load(missing.as_ptr(), &mut e), SdStatus::Io);
        std::fs::write(&path, b"garbage").unwrap();
        assert_eq!(sd_embedder_load(cpath.as_ptr(), &mut e), SdStatus::Format);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        sd_controller_free(ptr::null_mut());
        sd_trajectory_free(ptr::null_mut());
        sd_embedder_free(ptr::null_mut());
        assert_eq!(sd_trajectory_frame_count(ptr::null()), 0);
        assert_eq!(sd_embedder_output_dim(ptr::null()), 0);
        let mut r = SdHeuristic::default();
        assert_eq!(sd_controller_heuristic(ptr::null(), SdConvention::Strict, &mut r), SdStatus::NullPointer);
    }
}
