//! End-to-end tests driving the `samoyeds` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_samoyeds"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_csv(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn encode_writes_header_and_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(dir.path(), "w.csv", "1,0,2,0,5,0,0,6\n0,0,0,0,0,0,0,0\n3,3,3,3,1,1,1,1\n0.5,0,0,0,0,0,0,0\n");
    let out = run(
        &["encode", "w.csv", "--n", "1", "--m", "2", "--v", "4", "-o", "w.smy"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("achieved_sparsity=0.75"));

    let bytes = fs::read(dir.path().join("w.smy")).unwrap();
    assert_eq!(&bytes[..8], b"SMYDSFMT");
    assert_eq!(u16::from_le_bytes([bytes[18], bytes[19]]), 1); // n
    assert_eq!(u16::from_le_bytes([bytes[20], bytes[21]]), 2); // m
    assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 4); // v
}

#[test]
fn encode_rejects_nondivisible_shape_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(dir.path(), "bad.csv", "1,2,3\n4,5,6\n");
    let out = run(&["encode", "bad.csv", "--n", "1", "--m", "2", "--v", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("shape not divisible"));
}

#[test]
fn check_passes_fresh_file_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(dir.path(), "w.csv", "1,0,2,0\n0,0,0,0\n4,0,0,4\n0,0,0,0\n");
    let out = run(
        &["encode", "w.csv", "--n", "1", "--m", "2", "--v", "4", "-o", "w.smy"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&["check", "w.smy"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("all checks passed"));

    // Zero the final metadata byte: the position pair becomes (0,0), which
    // is not strictly increasing.
    let path = dir.path().join("w.smy");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] = 0;
    fs::write(&path, bytes).unwrap();
    let out = run(&["check", "w.smy"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("metadata"),
        "stderr should name the metadata violation: {}",
        stderr(&out)
    );
}

#[test]
fn decode_roundtrips_assume_pruned_input() {
    let dir = tempfile::tempdir().unwrap();
    let body = "1,0,2,0\n0,0,0,0\n";
    write_csv(dir.path(), "w.csv", body);
    let out = run(
        &[
            "encode", "w.csv", "--n", "1", "--m", "2", "--v", "4", "--assume-pruned", "-o",
            "w.smy",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&["decode", "w.smy", "-o", "back.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("back.csv")).unwrap(), body);
}

#[test]
fn decode_raw_format_has_shape_header() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(dir.path(), "w.csv", "1,0,2,0\n0,0,0,0\n");
    run(
        &["encode", "w.csv", "--n", "1", "--m", "2", "--v", "4", "-o", "w.smy"],
        dir.path(),
    );
    let out = run(&["decode", "w.smy", "-o", "back.bin", "--format", "raw"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = fs::read(dir.path().join("back.bin")).unwrap();
    assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()), 0x534D_594C);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    assert_eq!(bytes.len(), 16 + 2 * 4 * 4);
    assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.0);
}

#[test]
fn encode_qwen2_shape_reports_three_quarter_sparsity() {
    // 1408x2048 synthetic weight via the raw format; uniform non-zero values
    // make the achieved sparsity exactly the (1,2,16) pattern floor.
    let dir = tempfile::tempdir().unwrap();
    let (rows, cols) = (1408usize, 2048usize);
    let mut bytes = Vec::with_capacity(16 + rows * cols * 4);
    bytes.extend_from_slice(&0x534D_594Cu32.to_le_bytes());
    bytes.extend_from_slice(&(rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(cols as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    for _ in 0..rows * cols {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let v = ((state >> 40) as f32 / 16777216.0) + 0.25;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.path().join("w.bin"), bytes).unwrap();

    let out = run(
        &["encode", "w.bin", "--n", "1", "--m", "2", "--v", "16", "-o", "w.smy"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("achieved_sparsity=0.7500"), "{}", stdout(&out));
    assert!(dir.path().join("w.smy").exists());
}

#[test]
fn check_random_draws_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check", "--random", "20", "--seed", "7"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("20 random draws: all pass"));
}

#[test]
fn bench_csv_schema_is_stable_and_seeded_runs_match() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "bench", "--case", "64,64,64", "--v", "32", "--repeats", "1", "--threads", "1",
        "--seed", "5", "--csv",
    ];
    let mut a1 = args.to_vec();
    a1.push("run1.csv");
    let out = run(&a1, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let mut a2 = args.to_vec();
    a2.push("run2.csv");
    let out = run(&a2, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let r1 = fs::read_to_string(dir.path().join("run1.csv")).unwrap();
    let r2 = fs::read_to_string(dir.path().join("run2.csv")).unwrap();
    let lines1: Vec<&str> = r1.lines().collect();
    let lines2: Vec<&str> = r2.lines().collect();
    assert_eq!(
        lines1[0],
        "case_id,m,k,n,config,tile,threads,median_ms,gflops,bytes_moved,speedup_vs_dense"
    );
    assert_eq!(lines1.len(), 2);
    let cols1: Vec<&str> = lines1[1].split(',').collect();
    let cols2: Vec<&str> = lines2[1].split(',').collect();
    assert_eq!(cols1.len(), 11);
    assert_eq!(cols1[4], "1:2:32");
    // Non-timing columns are identical across seeded runs.
    for idx in [0, 1, 2, 3, 4, 5, 6, 9] {
        assert_eq!(cols1[idx], cols2[idx], "column {idx}");
    }
}

#[test]
fn bench_refuses_oversized_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["bench", "--case", "32768,32768,32768", "--v", "32", "--repeats", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("memory budget"));
}

#[test]
fn memreport_preset_prints_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["memreport", "--preset", "qwen2", "--n", "1", "--m", "2", "--v", "16"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("2883584"), "{text}");
    assert!(text.contains("ratio=0.2734"), "{text}");
    assert!(text.contains("60 experts"), "{text}");
}

#[test]
fn traffic_prints_all_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["traffic", "--shape", "128,128,128", "--selection", "0.25", "--v", "32"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for name in ["dense", "skip_row_naive", "skip_col_naive", "uncoalesced", "samoyeds"] {
        assert!(text.contains(name), "{text}");
    }
}
