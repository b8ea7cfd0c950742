use std::io::Write;

use proptest::prelude::*;

use fibertt::error::FormatError;
use fibertt::harness::random_tt;
use fibertt::io::{load, load_dense, load_masked, load_pattern, load_tt, read, save, write, Dtns};
use fibertt::pattern::{mask_apply, random_pattern, FiberPattern};
use fibertt::tensor::DenseTensor;

fn bits(t: &DenseTensor) -> Vec<u64> {
    t.values().iter().map(|v| v.to_bits()).collect()
}

fn encode(obj: &Dtns) -> Vec<u8> {
    let mut out = Vec::new();
    write(&mut out, obj).unwrap();
    out
}

proptest! {
    #[test]
    fn dense_round_trip_is_bitwise(
        shape in prop::collection::vec(1usize..5, 1..4),
        seed in any::<u64>(),
    ) {
        let len: usize = shape.iter().product();
        let mut state = seed;
        let values: Vec<f64> = (0..len)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(state)
            })
            .filter(|v| !v.is_nan())
            .chain(std::iter::repeat(-0.0))
            .take(len)
            .collect();
        let t = DenseTensor::new(shape, values).unwrap();
        match read(encode(&Dtns::Dense(t.clone())).as_slice()).unwrap() {
            Dtns::Dense(back) => {
                prop_assert_eq!(back.shape(), t.shape());
                prop_assert_eq!(bits(&back), bits(&t));
            }
            _ => prop_assert!(false, "wrong kind"),
        }
    }
}

#[test]
fn tt_and_pattern_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tt = random_tt(&[15; 5], &[1, 3, 3, 3, 4, 1], 3).unwrap();
    let path = dir.path().join("tt.dtns");
    save(&path, &Dtns::Tt(tt.clone())).unwrap();
    let back = load_tt(&path).unwrap();
    assert_eq!(back, tt);
    let raw = std::fs::read(&path).unwrap();
    let header_len = raw.iter().position(|&b| b == b'\n').unwrap() + 1;
    assert_eq!((raw.len() - header_len) / 8, 555);

    let p = random_pattern(&[4, 5, 6], 0.3, 8).unwrap();
    let ppath = dir.path().join("p.dtns");
    save(&ppath, &Dtns::Pattern(p.clone())).unwrap();
    assert_eq!(load_pattern(&ppath).unwrap(), p);

    // the masked tensor survives next to its pattern
    let x = random_tt(&[4, 5, 6, 3], &[1, 2, 2, 2, 1], 1).unwrap().to_dense();
    let m = mask_apply(&x, &p).unwrap();
    let mpath = dir.path().join("m.dtns");
    save(&mpath, &Dtns::Dense(m.clone())).unwrap();
    assert_eq!(bits(&load_masked(&mpath, &p).unwrap()), bits(&m));
    assert!(matches!(load_dense(&mpath), Err(FormatError::Payload(_))));
    assert!(matches!(load_tt(&mpath), Err(FormatError::Kind { .. })));
}

#[test]
fn truncated_payload_is_a_length_error() {
    let t = DenseTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
    let mut raw = encode(&Dtns::Dense(t));
    raw.truncate(raw.len() - 3);
    match read(raw.as_slice()) {
        Err(FormatError::PayloadLength { expected, actual }) => assert_eq!((expected, actual), (48, 45)),
        other => panic!("unexpected {other:?}"),
    }
    let mut long = encode(&Dtns::Pattern(FiberPattern::full(vec![2]).unwrap()));
    long.push(1);
    assert!(matches!(read(long.as_slice()), Err(FormatError::PayloadLength { .. })));
}

#[test]
fn nan_only_in_masked_fibers() {
    let dir = tempfile::tempdir().unwrap();
    let p = FiberPattern::new(vec![2, 2], vec![true, false, true, true]).unwrap();
    let mut values = vec![1.0; 12];
    values[1] = f64::NAN; // fiber 1, masked
    values[4 + 1] = 7.0; // fiber 1 keeps a value; it is blanked on load
    let path = dir.path().join("x.dtns");
    save(&path, &Dtns::Dense(DenseTensor::new(vec![2, 2, 3], values.clone()).unwrap())).unwrap();
    let m = load_masked(&path, &p).unwrap();
    assert_eq!(m.values().iter().filter(|v| v.is_nan()).count(), 3);

    values[2 + 4] = f64::NAN; // fiber 2 is observed
    save(&path, &Dtns::Dense(DenseTensor::new(vec![2, 2, 3], values).unwrap())).unwrap();
    assert!(matches!(load_masked(&path, &p), Err(FormatError::Payload(_))));
}

#[test]
fn foreign_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dtns");
    std::fs::File::create(&path).unwrap().write_all(b"\x93NUMPY\x01\x00").unwrap();
    assert!(load(&path).is_err());
    let missing = dir.path().join("missing.dtns");
    assert!(matches!(load(&missing), Err(FormatError::Io(_))));
}
