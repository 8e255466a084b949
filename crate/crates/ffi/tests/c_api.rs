use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use defw_ffi::*;

fn last_error() -> String {
    let p = defw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lasso_run_round_trip() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(defw_network_ring(4, &mut net), DefwStatus::Ok);
        assert_eq!(defw_network_n_agents(net), 4);
        let mut l2 = 0.0;
        assert_eq!(defw_network_lambda2(net, &mut l2), DefwStatus::Ok);
        assert!(l2 > 0.0 && l2 < 1.0);

        let mut theta_true = vec![0.0; 12];
        let mut problem = ptr::null_mut();
        let st = defw_problem_lasso_synthetic(4, 5, 12, 3, 0.0, 9, theta_true.as_mut_ptr(), &mut problem);
        assert_eq!(st, DefwStatus::Ok);
        assert_eq!(defw_problem_dim(problem), 12);
        let mut f = -1.0;
        assert_eq!(
            defw_problem_objective(problem, theta_true.as_ptr(), 12, &mut f),
            DefwStatus::Ok
        );
        assert!(f.abs() < 1e-20);

        let mut opts = defw_run_options_default();
        opts.radius = theta_true.iter().map(|v: &f64| v.abs()).sum::<f64>() * 1.2;
        opts.iterations = 40;
        let mut run = ptr::null_mut();
        assert_eq!(defw_run(problem, net, &opts, &mut run), DefwStatus::Ok);
        assert_eq!(defw_run_len(run), 40);
        let mut rec: DefwRecord = std::mem::zeroed();
        assert_eq!(defw_run_record(run, 39, &mut rec), DefwStatus::Ok);
        assert_eq!(rec.iter, 40);
        assert!(rec.objective.is_finite() && rec.gap >= 0.0);
        assert!(rec.tracking_err < 1e-10);
        let mut theta = vec![0.0; 12];
        assert_eq!(defw_run_theta(run, 0, theta.as_mut_ptr(), 12), DefwStatus::Ok);
        assert!(theta.iter().map(|v| v.abs()).sum::<f64>() <= opts.radius * (1.0 + 1e-9));

        assert_eq!(defw_run_record(run, 40, &mut rec), DefwStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        assert_eq!(
            defw_run_theta(run, 0, theta.as_mut_ptr(), 3),
            DefwStatus::DimensionMismatch
        );

        defw_run_free(run);
        defw_problem_free(problem);
        defw_network_free(net);
    }
}

#[test]
fn caller_owned_data() {
    unsafe {
        // Two agents, 2x2 identity designs; F(θ) = ½‖θ − y‖² on average.
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let y = [1.0, 0.0, 0.0, 1.0];
        let mut problem = ptr::null_mut();
        assert_eq!(
            defw_problem_lasso(2, 2, 2, a.as_ptr(), y.as_ptr(), &mut problem),
            DefwStatus::Ok
        );
        let mut f = 0.0;
        assert_eq!(
            defw_problem_objective(problem, [0.0, 0.0].as_ptr(), 2, &mut f),
            DefwStatus::Ok
        );
        assert_eq!(f, 0.5);
        defw_problem_free(problem);

        let counts = [2usize, 1];
        let rows = [0usize, 1, 1];
        let cols = [0usize, 1, 0];
        let vals = [1.0, 2.0, 3.0];
        let mut mc = ptr::null_mut();
        let st = defw_problem_matrix_completion(
            2,
            2,
            2,
            counts.as_ptr(),
            rows.as_ptr(),
            cols.as_ptr(),
            vals.as_ptr(),
            DefwMcLoss::Square,
            1.0,
            &mut mc,
        );
        assert_eq!(st, DefwStatus::Ok);
        assert_eq!(defw_problem_dim(mc), 4);
        let mut net = ptr::null_mut();
        assert_eq!(defw_network_complete(2, &mut net), DefwStatus::Ok);
        let mut opts = defw_run_options_default();
        opts.constraint = DefwConstraintKind::TraceBall;
        opts.radius = 5.0;
        opts.iterations = 10;
        let mut run = ptr::null_mut();
        assert_eq!(defw_run(mc, net, &opts, &mut run), DefwStatus::Ok);
        defw_run_free(run);
        defw_problem_free(mc);
        defw_network_free(net);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut net = ptr::null_mut();
        let edges = [0usize, 1, 2, 3];
        assert_eq!(
            defw_network_from_edges(4, edges.as_ptr(), 2, &mut net),
            DefwStatus::Disconnected
        );
        let out_of_range = [0usize, 7];
        assert_eq!(
            defw_network_from_edges(4, out_of_range.as_ptr(), 1, &mut net),
            DefwStatus::InvalidArgument
        );
        assert!(net.is_null());
        assert_eq!(defw_network_erdos_renyi(5, 0.0, 1, &mut net), DefwStatus::Disconnected);
        assert!(last_error().contains("disconnected"));
        assert_eq!(defw_network_ring(3, ptr::null_mut()), DefwStatus::NullPointer);
        assert_eq!(
            defw_network_lambda2(ptr::null(), ptr::null_mut()),
            DefwStatus::NullPointer
        );
        defw_clear_error();
        assert!(defw_last_error().is_null());

        let mut problem = ptr::null_mut();
        assert_eq!(
            defw_problem_lasso_synthetic(3, 4, 5, 2, 0.01, 1, ptr::null_mut(), &mut problem),
            DefwStatus::Ok
        );
        assert_eq!(defw_network_ring(4, &mut net), DefwStatus::Ok);
        let mut run = ptr::null_mut();
        let opts = defw_run_options_default();
        assert_eq!(defw_run(problem, net, &opts, &mut run), DefwStatus::DimensionMismatch);
        let mut bad = opts;
        bad.constraint = DefwConstraintKind::TraceBall;
        assert_eq!(defw_run(problem, net, &bad, &mut run), DefwStatus::InvalidArgument);
        assert!(run.is_null());
        defw_network_free(net);
        defw_problem_free(problem);
        defw_network_free(ptr::null_mut());
        let name = CStr::from_ptr(defw_status_name(DefwStatus::NonConvergence));
        assert_eq!(name.to_str().unwrap(), "non-convergence");
    }
}

#[test]
fn experiment_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let cfg = CString::new("kind = \"lasso\"\niterations = 20\nreference = false\n[lasso]\nd = 40\ns = 4\n").unwrap();
    let path = CString::new(csv.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(defw_experiment_run(cfg.as_ptr(), path.as_ptr()), DefwStatus::Ok);
        let bad = CString::new("kind = \"lasso\"\niterations = 0\n").unwrap();
        assert_eq!(
            defw_experiment_run(bad.as_ptr(), path.as_ptr()),
            DefwStatus::InvalidArgument
        );
        assert!(last_error().contains("iterations"));
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/defw.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for name in [
        "defw_last_error",
        "defw_network_erdos_renyi",
        "defw_problem_matrix_completion",
        "defw_run_record",
        "defw_run_free",
        "DEFW_STATUS_NULL_POINTER",
        "typedef struct DefwRun DefwRun;",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Compile a translation unit against the header when a C compiler exists.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"defw.h\"\nint main(void) {\n  DefwNetwork *net = 0;\n  DefwRunOptions o = defw_run_options_default();\n  (void)o;\n  return defw_network_ring(3, &net) == DEFW_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped the syntax check"),
    }
}
