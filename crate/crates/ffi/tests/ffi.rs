use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use polyframe_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = pf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    pf_string_free(p);
    s
}

#[test]
fn store_round_trip() {
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(pf_store_load(fixture("m3.pfemb").as_ptr(), &mut store), PfStatus::Ok);
        let d = pf_store_dimension(store);
        assert_eq!(d, 32);
        assert!(pf_store_len(store) > 0);

        let sentence = CString::new("anything").unwrap();
        let mut key = ptr::null_mut();
        assert_eq!(pf_text_key(sentence.as_ptr(), &mut key), PfStatus::Ok);
        let key = take_string(key);
        assert!(key.starts_with("t:") && key.len() == 2 + 32);

        let missing = CString::new(key).unwrap();
        let mut v = ptr::null();
        assert_eq!(
            pf_store_get(store, missing.as_ptr(), &mut v),
            PfStatus::MissingEmbedding
        );
        assert!(v.is_null());
        assert!(last_error().contains("t:"));
        pf_store_free(store);
    }
}

#[test]
fn store_get_matches_rust_loader() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/image.pfemb");
    let reference = polyframe::embeddings::load_embeddings(&path).unwrap();
    let (key, expected) = reference.iter().next().unwrap();
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(pf_store_load(fixture("image.pfemb").as_ptr(), &mut store), PfStatus::Ok);
        let k = CString::new(key).unwrap();
        let mut v = ptr::null();
        assert_eq!(pf_store_get(store, k.as_ptr(), &mut v), PfStatus::Ok);
        let got = std::slice::from_raw_parts(v, pf_store_dimension(store));
        assert_eq!(got, expected);
        pf_store_free(store);
    }
}

#[test]
fn load_errors_set_status_and_message() {
    unsafe {
        let mut store = ptr::null_mut();
        let bad = CString::new("/nonexistent/x.pfemb").unwrap();
        assert_eq!(pf_store_load(bad.as_ptr(), &mut store), PfStatus::Io);
        assert!(store.is_null());
        assert!(last_error().contains("/nonexistent/x.pfemb"));

        assert_eq!(pf_store_load(ptr::null(), &mut store), PfStatus::NullPointer);
        assert_eq!(pf_store_load(bad.as_ptr(), ptr::null_mut()), PfStatus::NullPointer);

        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            pf_store_load(not_utf8.as_ptr().cast(), &mut store),
            PfStatus::InvalidUtf8
        );

        let dir = tempfile::tempdir().unwrap();
        let garbage = dir.path().join("g.pfemb");
        std::fs::write(&garbage, "not a header\n").unwrap();
        let g = CString::new(garbage.to_str().unwrap()).unwrap();
        assert_eq!(pf_store_load(g.as_ptr(), &mut store), PfStatus::InvalidData);

        assert_eq!(pf_store_dimension(ptr::null()), 0);
        pf_store_free(ptr::null_mut());
        pf_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut store = ptr::null_mut();
        assert_eq!(pf_store_load(ptr::null(), &mut store), PfStatus::NullPointer);
    }
    let other = std::thread::spawn(|| pf_last_error_message().is_null()).join().unwrap();
    assert!(other);
    assert!(last_error().contains("path"));
}

#[test]
fn borda_matches_core() {
    // three streams, four candidates
    let scores = [0.9, 0.1, 0.5, 0.3, 0.2, 0.8, 0.4, 0.6, 0.7, 0.7, 0.1, 0.0];
    let weights = [0.6, 0.3, 0.1];
    let mut order = [0usize; 4];
    let mut fused = [0f64; 4];
    let st = unsafe {
        pf_borda_fuse(
            scores.as_ptr(),
            weights.as_ptr(),
            3,
            4,
            order.as_mut_ptr(),
            fused.as_mut_ptr(),
        )
    };
    assert_eq!(st, PfStatus::Ok);
    // hand computation with points m - rank
    // vision ranks 1,4,2,3 -> 3,0,2,1; m3 ranks 4,1,3,2 -> 0,3,1,2; vl ranks 1,2,3,4 -> 3,2,1,0
    let expected = [
        0.6 * 3.0 + 0.3 * 0.0 + 0.1 * 3.0,
        0.6 * 0.0 + 0.3 * 3.0 + 0.1 * 2.0,
        0.6 * 2.0 + 0.3 * 1.0 + 0.1 * 1.0,
        0.6 * 1.0 + 0.3 * 2.0 + 0.1 * 0.0,
    ];
    for (a, b) in fused.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{fused:?}");
    }
    assert_eq!(order, [0, 2, 3, 1]);
}

#[test]
fn borda_rejects_bad_shapes() {
    let scores = [0.0; 8];
    let weights = [0.0; 4];
    let mut order = [0usize; 2];
    let mut fused = [0f64; 2];
    unsafe {
        assert_eq!(
            pf_borda_fuse(
                scores.as_ptr(),
                weights.as_ptr(),
                4,
                2,
                order.as_mut_ptr(),
                fused.as_mut_ptr()
            ),
            PfStatus::InvalidArgument
        );
        assert_eq!(
            pf_borda_fuse(
                scores.as_ptr(),
                weights.as_ptr(),
                2,
                2,
                order.as_mut_ptr(),
                fused.as_mut_ptr()
            ),
            PfStatus::InvalidArgument
        );
        assert!(last_error().contains("zero"));
        let nan = [f64::NAN, 0.0];
        let w = [1.0];
        assert_eq!(
            pf_borda_fuse(nan.as_ptr(), w.as_ptr(), 1, 2, order.as_mut_ptr(), fused.as_mut_ptr()),
            PfStatus::Internal
        );
        assert_eq!(
            pf_borda_fuse(ptr::null(), w.as_ptr(), 1, 2, order.as_mut_ptr(), fused.as_mut_ptr()),
            PfStatus::NullPointer
        );
    }
}

#[test]
fn ndcg_values() {
    let gold = [10u32, 11, 12, 13, 14];
    let reversed = [14u32, 13, 12, 11, 10];
    let mut v = 0.0;
    unsafe {
        assert_eq!(pf_ndcg5(gold.as_ptr(), gold.as_ptr(), 5, &mut v), PfStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(pf_ndcg5(reversed.as_ptr(), gold.as_ptr(), 5, &mut v), PfStatus::Ok);
        assert!((v - 0.5128759531627177).abs() < 1e-12);
        let dup = [10u32, 10, 12, 13, 14];
        assert_eq!(
            pf_ndcg5(dup.as_ptr(), gold.as_ptr(), 5, &mut v),
            PfStatus::InvalidArgument
        );
        assert_eq!(
            pf_ndcg5(gold.as_ptr(), gold.as_ptr(), 4, &mut v),
            PfStatus::InvalidArgument
        );
    }
}

#[test]
fn pipeline_rank_matches_cli() {
    let cfg = fixture("improved.toml");
    let tsv = unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(
            pf_pipeline_open(cfg.as_ptr(), ptr::null(), 0, &mut p),
            PfStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(pf_pipeline_len(p), 75);
        let mut hash = ptr::null_mut();
        assert_eq!(pf_pipeline_config_hash(p, &mut hash), PfStatus::Ok);
        assert_eq!(take_string(hash).len(), 16);
        let mut out = ptr::null_mut();
        let mut failed = usize::MAX;
        assert_eq!(pf_pipeline_rank(p, &mut out, &mut failed), PfStatus::Ok);
        assert_eq!(failed, 0);
        pf_pipeline_free(p);
        take_string(out)
    };

    let polyframe = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/debug/polyframe");
    if polyframe.exists() {
        let out = Command::new(&polyframe)
            .args(["rank", "--no-timestamp", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), tsv);
    } else {
        assert_eq!(tsv.lines().count(), 2 + 75);
    }
}

#[test]
fn pipeline_overrides_and_errors() {
    let cfg = fixture("improved.toml");
    unsafe {
        let sets = [CString::new("pipeline.variant=baseline").unwrap()];
        let ptrs: Vec<*const std::ffi::c_char> = sets.iter().map(|s| s.as_ptr()).collect();
        let mut p = ptr::null_mut();
        assert_eq!(pf_pipeline_open(cfg.as_ptr(), ptrs.as_ptr(), 1, &mut p), PfStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(pf_pipeline_rank(p, &mut out, ptr::null_mut()), PfStatus::Ok);
        assert!(take_string(out).starts_with("# polyframe predictions variant=baseline "));
        pf_pipeline_free(p);

        let bad = [CString::new("pipeline.tua=1").unwrap()];
        let ptrs: Vec<*const std::ffi::c_char> = bad.iter().map(|s| s.as_ptr()).collect();
        assert_eq!(
            pf_pipeline_open(cfg.as_ptr(), ptrs.as_ptr(), 1, &mut p),
            PfStatus::Config
        );
        assert!(p.is_null());
        assert!(last_error().contains("pipeline.tua"));
        assert_eq!(
            pf_pipeline_open(cfg.as_ptr(), ptr::null(), 2, &mut p),
            PfStatus::NullPointer
        );
        assert_eq!(pf_pipeline_len(ptr::null()), 0);
        let mut out = ptr::null_mut();
        assert_eq!(
            pf_pipeline_rank(ptr::null(), &mut out, ptr::null_mut()),
            PfStatus::NullPointer
        );
    }
}

#[test]
fn header_is_current_and_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/polyframe.h")).unwrap();
    for name in [
        "pf_last_error_message",
        "pf_string_free",
        "pf_store_load",
        "pf_store_get",
        "pf_store_free",
        "pf_borda_fuse",
        "pf_ndcg5",
        "pf_pipeline_open",
        "pf_pipeline_rank",
        "pf_pipeline_free",
        "PF_STATUS_MISSING_EMBEDDING = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"polyframe.h\"\nint main(void) { PfStore *s = 0; return pf_store_load(\"x\", &s) == PF_STATUS_OK; }\n",
    )
    .unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("cc unavailable, skipping compile check: {e}"),
    }
}
