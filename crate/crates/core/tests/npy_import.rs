use std::path::PathBuf;

use wplus::store::{import_npy, NpyLatents};
use wplus::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// mirrors make_npy_fixtures.py
fn expected(i: usize) -> f64 {
    (((i as i64 * 37) % 1001) - 500) as f64 / 64.0
}

fn check(latents: &[wplus::LatentCode64], shape: (usize, usize)) {
    let mut i = 0;
    for w in latents {
        assert_eq!(w.shape(), shape);
        for &v in w.as_slice() {
            assert_eq!(v.to_bits(), expected(i).to_bits(), "element {i}");
            i += 1;
        }
    }
}

#[test]
fn single_latent_f32() {
    match import_npy::<f64>(fixture("single_f32.npy")).unwrap() {
        NpyLatents::Single(w) => check(&[w], (18, 512)),
        other => panic!("expected one latent, got {}", other.into_vec().len()),
    }
}

#[test]
fn batch_f32() {
    let ws = match import_npy::<f64>(fixture("batch_f32.npy")).unwrap() {
        NpyLatents::Batch(ws) => ws,
        NpyLatents::Single(_) => panic!("expected a batch"),
    };
    assert_eq!(ws.len(), 5);
    check(&ws, (18, 512));
}

#[test]
fn f64_both_byte_orders_and_v2_header() {
    let ws = import_npy::<f64>(fixture("small_f64.npy")).unwrap().into_vec();
    assert_eq!(ws.len(), 3);
    check(&ws, (4, 6));

    let ws = import_npy::<f64>(fixture("small_f64_be.npy")).unwrap().into_vec();
    check(&ws, (4, 6));

    let ws = import_npy::<f64>(fixture("small_f32_v2.npy")).unwrap().into_vec();
    assert_eq!(ws.len(), 2);
    check(&ws, (3, 5));
}

#[test]
fn f32_target_type() {
    let ws = import_npy::<f32>(fixture("batch_f32.npy")).unwrap().into_vec();
    assert_eq!(ws[4].get(17, 511), expected(5 * 18 * 512 - 1) as f32);
}

#[test]
fn rejected_inputs() {
    assert!(matches!(
        import_npy::<f64>(fixture("half.npy")),
        Err(Error::UnsupportedDtype(_))
    ));
    assert!(matches!(
        import_npy::<f64>(fixture("fortran_f32.npy")),
        Err(Error::FortranOrderUnsupported)
    ));
    assert!(matches!(import_npy::<f64>(fixture("missing.npy")), Err(Error::Io(_))));
}
