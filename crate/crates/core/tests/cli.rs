use std::path::Path;
use std::process::{Command, Output};

use patchbound::logits::read_logits_file;
use patchbound::toy::{evaluate, generate_dataset, SyntheticTask, ToyPatchModel};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchbound")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn bound_prints_header_and_row() {
    let o = run(&["bound", "--n", "50000", "--k", "10", "--h", "32", "--w", "32", "--c", "3", "--ht", "8", "--wt", "8", "--stride", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_eff,d_t,mesh_term,roughness,noise_term,total"));
    assert_eq!(lines.next(), Some("49,192,0.794637909,1.01454533,4.38384769,0.741434839"));
}

#[test]
fn invalid_parameters_exit_one() {
    let o = run(&["bound", "--ht", "33", "--h", "32"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("patch exceeds image"));
    assert_eq!(run(&["bound", "--stride", "0"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--nope"]).status.code(), Some(1));
    assert_eq!(run(&["envelope", "--min-patch", "20", "--max-patch", "10"]).status.code(), Some(1));
}

#[test]
fn io_failure_exits_two_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let target = path(dir.path(), "missing/sub/env.csv");
    let o = run(&["envelope", "--out", &target]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&target));
}

#[test]
fn file_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let jobs: Vec<Vec<String>> = vec![
        vec!["sweep".into(), "--vary".into(), "stride".into(), "--values".into(), "4,8".into(), "--out".into()],
        vec!["envelope".into(), "--preset".into(), "stl10".into(), "--out".into()],
        vec!["compare".into(), "--dataset".into(), "cifar100".into(), "--out".into()],
        vec!["fixtures".into(), "--out".into()],
    ];
    for (i, job) in jobs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let file = path(d, &format!("{i}_{rep}.csv"));
            let mut args: Vec<&str> = job.iter().map(String::as_str).collect();
            args.push(&file);
            let o = run(&args);
            assert_eq!(o.status.code(), Some(0), "{:?}: {}", job, stderr(&o));
            outputs.push(std::fs::read(&file).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{job:?}");
    }
}

#[test]
fn compare_lists_published_patch_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cmp.csv");
    assert_eq!(run(&["compare", "--dataset", "cifar10", "--out", &out]).status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let sizes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["4", "8", "16", "24", "32"]);
}

#[test]
fn meshnorm_fits_two_dimensional_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let (trials, fit) = (path(dir.path(), "t.csv"), path(dir.path(), "f.csv"));
    let o = run(&["meshnorm", "--dim", "2", "--ns", "100,1000,10000", "--trials", "20", "--seed", "7", "--out", &trials, "--fit-out", &fit]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&fit).unwrap();
    let slope: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((slope + 0.5).abs() <= 0.1, "{slope}");
    assert_eq!(std::fs::read_to_string(&trials).unwrap().lines().count(), 1 + 60);
}

#[test]
fn toy_pipeline_through_aggregate_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (model, log, plg) = (path(d, "m.bin"), path(d, "log.csv"), path(d, "test.plg"));
    let o = run(&[
        "train-toy", "--train", "1000", "--test", "50", "--steps", "3000", "--seed", "4",
        "--model-out", &model, "--log-out", &log, "--logits-out", &plg,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let reported: f64 = stdout(&o).lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();

    let preds = path(d, "pred.csv");
    let o = run(&["aggregate", "--logits", &plg, "--out", &preds]);
    assert_eq!(o.status.code(), Some(0));
    let aggregated: f64 = stdout(&o).lines().nth(1).unwrap().parse().unwrap();
    assert_eq!(aggregated, reported);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 51);

    // the checkpoint reproduces the same evaluation in-process
    let loaded = ToyPatchModel::load(Path::new(&model)).unwrap();
    let (_, test) = generate_dataset(&SyntheticTask::new(4, 32, 32, 1, 0.3, 4), 1000, 50).unwrap();
    assert_eq!(evaluate(&loaded, &test, 4).unwrap().patch_avg_accuracy, reported);
    assert_eq!(read_logits_file(Path::new(&plg)).unwrap().images.len(), 50);

    let pgm = path(d, "m.pgm");
    assert_eq!(run(&["heatmap", "--logits", &plg, "--image", "0", "--class", "3", "--out", &pgm]).status.code(), Some(0));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
    assert_eq!(bytes.len(), b"P5\n32 32\n255\n".len() + 32 * 32);

    assert_eq!(run(&["heatmap", "--logits", &plg, "--class", "9", "--out", &pgm]).status.code(), Some(1));
    std::fs::write(&plg, b"PLG0garbage").unwrap();
    let o = run(&["aggregate", "--logits", &plg, "--out", &preds]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad magic"));
}

#[test]
fn help_shows_defaults_for_every_subcommand() {
    for sub in ["bound", "sweep", "envelope", "compare", "fixtures", "meshnorm", "train-toy", "aggregate", "heatmap"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        let flags = text.lines().filter(|l| l.trim_start().starts_with("--") && !l.contains("--help")).count();
        let defaults = text.matches("[default:").count();
        assert_eq!(flags, defaults, "{sub}:\n{text}");
    }
}
