use std::ffi::{CStr, CString};
use std::ptr;

use nbiot_ffi::*;

fn last_error() -> String {
    let p = nbiot_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut NbiotConfig {
    let text = CString::new("n_devices = 200\nn_tti_per_episode = 30\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { nbiot_config_parse(text.as_ptr(), &mut cfg) }, NBIOT_OK);
    cfg
}

#[test]
fn formulas() {
    assert!((nbiot_detection_probability(1.0, 1) - (-4.0f64).exp()).abs() < 1e-12);
    let oracle = 0.5f64.ln() / (11.0f64 / 12.0).ln();
    assert!((nbiot_zeta(12, 6.0, 1e4) - oracle).abs() < 1e-12);
    assert!((nbiot_expected_requests(2.0, 12, 0) - 11.0 / 6.0).abs() < 1e-12);
    let v = unsafe { CStr::from_ptr(nbiot_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn budgets() {
    let cfg = nbiot_config_default();
    let mut budget = 0u32;
    assert_eq!(unsafe { nbiot_uplink_re_budget(cfg, &mut budget) }, NBIOT_OK);
    assert_eq!(budget, 15360);
    let g = NbiotGroupAction {
        n_rach: 1,
        f_prea: 12,
        n_repe: 1,
    };
    let a = NbiotAction { groups: [g; 3] };
    let mut cost = 0u64;
    assert_eq!(unsafe { nbiot_rach_re_cost(cfg, &a, &mut cost) }, NBIOT_OK);
    assert_eq!(cost, 144);
    unsafe { nbiot_config_free(cfg) };
}

#[test]
fn config_errors() {
    let cfg = nbiot_config_default();
    let key = CString::new("no_such_key").unwrap();
    let val = CString::new("1").unwrap();
    assert_eq!(unsafe { nbiot_config_set(cfg, key.as_ptr(), val.as_ptr()) }, NBIOT_ERR_CONFIG);
    assert!(last_error().contains("no_such_key"));
    let key = CString::new("gamma").unwrap();
    let val = CString::new("0.25").unwrap();
    assert_eq!(unsafe { nbiot_config_set(cfg, key.as_ptr(), val.as_ptr()) }, NBIOT_OK);
    assert_eq!(unsafe { nbiot_config_set(ptr::null_mut(), key.as_ptr(), val.as_ptr()) }, NBIOT_ERR_NULL);
    let bad = CString::new("rsrp_threshold1_dbm = -20").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nbiot_config_parse(bad.as_ptr(), &mut out) }, NBIOT_ERR_CONFIG);
    assert!(out.is_null());
    assert!(last_error().contains("threshold"));
    unsafe { nbiot_config_free(cfg) };
}

#[test]
fn episode_with_le_urc() {
    let cfg = small_config();
    let mut env = ptr::null_mut();
    let mut ctl = ptr::null_mut();
    unsafe {
        assert_eq!(nbiot_env_new(cfg, &mut env), NBIOT_OK);
        let repe = [1u32, 4, 8];
        assert_eq!(nbiot_le_urc_new(cfg, repe.as_ptr(), &mut ctl), NBIOT_OK);
        let n = nbiot_env_state_len(env);
        assert_eq!(n, 96);
        let mut state = vec![1.0; n];

        let mut action = NbiotAction::default();
        let mut result = NbiotStepResult::default();
        assert_eq!(nbiot_le_urc_decide(ctl, &mut action), NBIOT_OK);
        assert_eq!(
            nbiot_env_step(env, &action, &mut result, ptr::null_mut(), 0),
            NBIOT_ERR_STATE
        );

        assert_eq!(nbiot_env_reset(env, 7, state.as_mut_ptr(), state.len()), NBIOT_OK);
        assert!(state.iter().all(|&x| x == 0.0));
        let mut served = 0.0;
        let mut steps = 0;
        loop {
            assert_eq!(nbiot_le_urc_decide(ctl, &mut action), NBIOT_OK);
            assert_eq!(nbiot_env_step(env, &action, &mut result, state.as_mut_ptr(), state.len()), NBIOT_OK);
            assert_eq!(nbiot_le_urc_observe(ctl, &result, &action), NBIOT_OK);
            for (g, a) in result.groups.iter().zip(&action.groups) {
                assert_eq!(g.v_cp + g.v_sp + g.v_ip, a.n_rach * a.f_prea);
            }
            served += result.reward;
            steps += 1;
            if result.terminal {
                break;
            }
        }
        assert_eq!((steps, result.tti), (30, 30));
        assert!(served > 0.0 && served <= 200.0);
        assert_eq!(
            nbiot_env_step(env, &action, &mut result, ptr::null_mut(), 0),
            NBIOT_ERR_STATE
        );
        assert!(last_error().contains("terminated"));
        assert_eq!(nbiot_le_urc_reset(ctl), NBIOT_OK);

        let mut short = vec![0.0; 4];
        assert_eq!(nbiot_env_reset(env, 7, short.as_mut_ptr(), short.len()), NBIOT_ERR_INVALID_ARGUMENT);

        nbiot_le_urc_free(ctl);
        nbiot_env_free(env);
        nbiot_config_free(cfg);
    }
}

#[test]
fn invalid_action_rejected() {
    let cfg = small_config();
    let mut env = ptr::null_mut();
    unsafe {
        assert_eq!(nbiot_env_new(cfg, &mut env), NBIOT_OK);
        let mut state = vec![0.0; 96];
        nbiot_env_reset(env, 1, state.as_mut_ptr(), 96);
        let g = NbiotGroupAction {
            n_rach: 3,
            f_prea: 12,
            n_repe: 1,
        };
        let mut result = NbiotStepResult::default();
        let a = NbiotAction { groups: [g; 3] };
        assert_eq!(nbiot_env_step(env, &a, &mut result, ptr::null_mut(), 0), NBIOT_ERR_INVALID_ARGUMENT);
        let repe = [1u32, 3, 8];
        let mut ctl = ptr::null_mut();
        assert_eq!(nbiot_le_urc_new(cfg, repe.as_ptr(), &mut ctl), NBIOT_ERR_INVALID_ARGUMENT);
        nbiot_env_free(env);
        nbiot_config_free(cfg);
    }
}

#[test]
fn ensemble_from_checkpoint() {
    use nbiot_core::dqn::{checkpoint, DqnConfig, TrainingRun};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    let text = "n_devices = 200\nn_tti_per_episode = 30\nhidden_layers = 16\n";
    let (sim, dqn): (_, DqnConfig) = nbiot_core::cli::parse_run_config(text).unwrap();
    let mut run = TrainingRun::new(sim, &dqn, 3, 1).unwrap();
    run.run_episode().unwrap();
    checkpoint::save_file(run.ensemble(), &path).unwrap();

    let ctext = CString::new(text).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    let mut ens = ptr::null_mut();
    unsafe {
        assert_eq!(nbiot_config_parse(ctext.as_ptr(), &mut cfg), NBIOT_OK);
        assert_eq!(nbiot_ensemble_load(cpath.as_ptr(), cfg, &mut ens), NBIOT_OK);
        let state = vec![0.25; 96];
        let mut a = NbiotAction::default();
        assert_eq!(nbiot_ensemble_greedy(ens, state.as_ptr(), 96, &mut a), NBIOT_OK);
        let (expected, _) = run.ensemble().greedy_actions(&state).unwrap();
        assert_eq!(nbiot_core::ActionVector::from(a), expected);
        assert_eq!(nbiot_ensemble_greedy(ens, state.as_ptr(), 10, &mut a), NBIOT_ERR_INVALID_ARGUMENT);
        nbiot_ensemble_free(ens);

        let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(nbiot_ensemble_load(missing.as_ptr(), cfg, &mut none), NBIOT_ERR_IO);
        nbiot_config_free(cfg);
    }
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nbiot_ffi.h")).unwrap();
    for name in [
        "nbiot_env_step",
        "nbiot_le_urc_decide",
        "nbiot_ensemble_greedy",
        "nbiot_last_error",
        "NBIOT_ERR_STATE",
        "typedef struct NbiotEnv NbiotEnv;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Type-checks a small C client against the generated header.
#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include "nbiot_ffi.h"
int run(void) {
    NbiotConfig *cfg = nbiot_config_default();
    NbiotEnv *env = NULL;
    if (nbiot_env_new(cfg, &env) != NBIOT_OK) return 1;
    size_t n = nbiot_env_state_len(env);
    double state[96];
    if (n > 96 || nbiot_env_reset(env, 1, state, n) != NBIOT_OK) return 2;
    NbiotAction a = {{{1, 12, 1}, {1, 12, 4}, {1, 12, 8}}};
    NbiotStepResult r;
    int rc = nbiot_env_step(env, &a, &r, state, n);
    nbiot_env_free(env);
    nbiot_config_free(cfg);
    return rc == NBIOT_OK && !r.terminal ? 0 : 3;
}
"#,
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "C client failed to compile"),
        Err(e) => eprintln!("skipping C compile check, no cc: {e}"),
    }
}
