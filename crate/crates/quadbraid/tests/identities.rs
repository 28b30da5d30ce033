use quadbraid::models::{control_sixvertex, gl2_model, ModelConfig};
use quadbraid::tensor::{c, re};
use quadbraid::verifier::*;
use quadbraid::{Boundary, Execution, Flavor, ModelSpec};

fn opts(samples: usize) -> VerifyOptions {
    VerifyOptions { samples, seed: 21, ..Default::default() }
}

#[test]
fn gl2_suite_passes() {
    let reports = standard_suite(&gl2_model(re(0.2), re(0.7)), &opts(8));
    assert_eq!(reports.len(), 8);
    for r in &reports {
        assert!(r.pass, "{r:?}");
        assert!(r.samples >= 8);
    }
}

#[test]
fn control_suites_pass() {
    for m in [
        control_sixvertex(re(0.35), re(0.0), Boundary::SP),
        control_sixvertex(re(0.35), c(0.4, 0.1), Boundary::SNP),
        control_sixvertex(re(0.35), c(0.4, 0.1), Boundary::SNP).with_flavor(Flavor::Semidynamical),
    ] {
        for r in standard_suite(&m, &opts(6)) {
            assert!(r.pass, "{} {r:?}", m.name);
        }
    }
}

#[test]
fn noise_fails_every_identity() {
    for m in [gl2_model(re(0.2), re(0.7)), control_sixvertex(re(0.35), re(0.0), Boundary::SP)] {
        for r in standard_suite(&m.perturbed(1e-3), &opts(4)) {
            assert!(!r.pass && r.max_residual > 1e-6, "{r:?}");
        }
    }
}

#[test]
fn printed_dual_matrix_fails() {
    let r = check_dual_printed_gl2(&gl2_model(re(0.2), re(0.7)), &opts(4));
    assert!(!r.pass, "{r:?}");
    assert!(r.note.is_some());
}

#[test]
fn reports_are_reproducible() {
    let m = gl2_model(re(0.2), re(0.7));
    let a = standard_suite(&m, &VerifyOptions { execution: Execution::Parallel, ..opts(4) });
    let b = standard_suite(&m, &VerifyOptions { execution: Execution::Sequential, ..opts(4) });
    assert_eq!(a, b);
    let c = standard_suite(&m, &VerifyOptions { seed: 22, ..opts(4) });
    assert_ne!(a[0].worst_point, c[0].worst_point);
}

#[test]
fn config_round_trip() {
    let text = r#"{"schema":1,"name":"gl2","n":2,"gamma":0.2,"xi":[0.7,0.0],"flavor":"fully_dynamical","boundary":"SP","chi":"diagonal","shift_sign":-1}"#;
    let cfg: ModelConfig = serde_json::from_str(text).unwrap();
    let m = ModelSpec::from_config(&cfg).unwrap();
    assert_eq!(m.flavor, Flavor::FullyDynamical);
    assert!(serde_json::from_str::<ModelConfig>(&text.replace("\"n\":2", "\"n\":2,\"extra\":1")).is_err());
    let bad = ModelConfig { schema: 2, ..cfg };
    assert!(ModelSpec::from_config(&bad).is_err());
}
