use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use posture_mpc_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { pm_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn load(name: &str) -> *mut PmScenario {
    let c = CString::new(name).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { pm_scenario_load(c.as_ptr(), &mut h) }, PmStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn null_and_unknown_inputs_report_errors() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { pm_scenario_load(ptr::null(), &mut h) }, PmStatus::NullPointer);
    assert!(last_error().contains("null"));

    let c = CString::new("no-such-scenario").unwrap();
    assert_eq!(unsafe { pm_scenario_load(c.as_ptr(), &mut h) }, PmStatus::Io);
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    let bad = CString::new("model = \"pendulum\"\ntask = \"hold\"\nduration = -1.0\n").unwrap();
    assert_eq!(unsafe { pm_scenario_from_toml(bad.as_ptr(), &mut h) }, PmStatus::Validation);
    let garbled = CString::new("model = [").unwrap();
    assert_eq!(unsafe { pm_scenario_from_toml(garbled.as_ptr(), &mut h) }, PmStatus::Parse);

    // Success clears the message.
    let s = load("hold");
    assert_eq!(last_error(), "");
    unsafe { pm_scenario_free(s) };
    unsafe { pm_scenario_free(ptr::null_mut()) };
}

#[test]
fn error_message_truncates_to_buffer() {
    let mut h = ptr::null_mut();
    unsafe { pm_scenario_load(ptr::null(), &mut h) };
    let mut small = [1 as c_char; 4];
    let n = unsafe { pm_last_error(small.as_mut_ptr(), small.len()) };
    assert!(n > 3);
    assert_eq!(small[3], 0);
    assert_eq!(unsafe { pm_last_error(ptr::null_mut(), 0) }, n);
}

#[test]
fn episode_matches_library() {
    let s = load("hold");
    unsafe {
        assert_eq!(pm_scenario_set_duration(s, 0.2), PmStatus::Ok);
        assert_eq!(pm_scenario_set_duration(s, -1.0), PmStatus::Validation);
        assert_eq!(pm_scenario_set_seed(s, 3), PmStatus::Ok);
        assert_eq!(pm_scenario_set_ablation(s, 1 << 7), PmStatus::InvalidArgument);
        assert_eq!(pm_scenario_set_ablation(s, PM_ABLATION_NO_INSTANT), PmStatus::Ok);
    }
    let mut m = PmEpisodeMetrics::default();
    assert_eq!(unsafe { pm_run_episode(s, &mut m) }, PmStatus::Ok);

    let mut cfg = posture_mpc::harness::ScenarioConfig::load("hold").unwrap().with_seed(3).unwrap();
    cfg.duration = 0.2;
    cfg.ablation.no_instant = true;
    let direct = posture_mpc::harness::run_episode(&cfg).unwrap().metrics;
    assert_eq!(m.cumulative_cost, direct.cumulative_cost);
    assert_eq!(m.plans, direct.plans);
    assert_eq!(m.fall_time, -1.0);
    unsafe { pm_scenario_free(s) };
}

#[test]
fn controller_plans_and_acts() {
    let s = load("hold");
    let (mut nq, mut nu, mut nz) = (0, 0, 0);
    assert_eq!(unsafe { pm_scenario_dims(s, &mut nq, &mut nu, &mut nz) }, PmStatus::Ok);
    assert_eq!((nq, nu, nz), (1, 2, 1));
    let (mut q, mut qd, mut a) = (vec![0.0; nq], vec![0.0; nq], vec![0.0; nu]);
    assert_eq!(
        unsafe { pm_scenario_initial_state(s, q.as_mut_ptr(), qd.as_mut_ptr(), nq, a.as_mut_ptr(), nu) },
        PmStatus::Ok
    );
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { pm_controller_new(s, &mut c) }, PmStatus::Ok);
    let mut z = vec![f64::NAN; nz];
    let mut u = vec![f64::NAN; nu];
    unsafe {
        assert_eq!(
            pm_controller_plan(c, q.as_ptr(), qd.as_ptr(), nq, a.as_ptr(), nu, 0.0, z.as_mut_ptr(), nz),
            PmStatus::Ok
        );
        assert!(z[0].is_finite());
        assert_eq!(
            pm_controller_act(c, q.as_ptr(), qd.as_ptr(), nq, a.as_ptr(), nu, 0.0, u.as_mut_ptr(), nu),
            PmStatus::Ok
        );
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
        // Wrong sizes are rejected without writing.
        assert_eq!(
            pm_controller_act(c, q.as_ptr(), qd.as_ptr(), nq + 1, a.as_ptr(), nu, 0.0, u.as_mut_ptr(), nu),
            PmStatus::Dimension
        );
        assert_eq!(
            pm_controller_act(c, q.as_ptr(), qd.as_ptr(), nq, a.as_ptr(), nu, 0.0, u.as_mut_ptr(), 1),
            PmStatus::BufferTooSmall
        );
        pm_controller_free(c);
        pm_scenario_free(s);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/posture_mpc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["pm_scenario_load", "pm_controller_plan", "PM_STATUS_OK", "PmEpisodeMetrics"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"posture_mpc.h\"\nint main(void) { PmScenario *s = 0; return pm_scenario_load(\"hold\", &s) == PM_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler available; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
