use tride_autodiff::suite::{primitive_cases, random_tensor};
use tride_autodiff::{grad_check, GradCheckOptions, PrimitiveKind, Tape};

#[test]
fn every_primitive_passes_gradcheck() {
    let opts = GradCheckOptions::default();
    let cases = primitive_cases();
    let mut covered = std::collections::HashSet::new();
    for case in &cases {
        let report = case.run(&opts).unwrap();
        assert!(
            report.max_rel_error <= 1e-4,
            "{}: max relative error {:.3e} at {:?}",
            case.name,
            report.max_rel_error,
            report.worst
        );
        covered.extend(case.kind);
    }
    // every non-leaf primitive has at least one case
    assert_eq!(covered.len(), 24);
}

#[test]
fn corrupted_backward_is_caught() {
    for case in primitive_cases() {
        let kind = case.kind.unwrap();
        if kind == PrimitiveKind::Reshape {
            continue;
        }
        let opts = GradCheckOptions {
            fault: Some(kind),
            ..Default::default()
        };
        let report = case.run(&opts).unwrap();
        assert!(report.max_rel_error > 1e-2, "{} fault went unnoticed", case.name);
    }
}

#[test]
fn conv_backward_matches_fd_on_random_2x4x4() {
    let kernel = random_tensor(&[3, 2, 3, 3], -1.0, 1.0, 99);
    let err = grad_check(
        move |t, x| {
            let k = t.constant(kernel.clone());
            let y = x.conv2d(k, None, tride_autodiff::ConvGeom::same(3, 1))?;
            tride_autodiff::suite::probe(t, y)
        },
        &random_tensor(&[2, 4, 4], -1.0, 1.0, 98),
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn softmax_rows_are_positive_and_sum_to_one() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(random_tensor(&[4, 7], -30.0, 30.0, 5));
    let y = x.softmax_lastdim().value();
    for row in y.data().chunks(7) {
        assert!(row.iter().all(|&p| p > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
