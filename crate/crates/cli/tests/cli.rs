use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aberrex::blur::{self, AffineBlurModel, CorpusEntry};
use aberrex::image::{gamma_decode, gamma_encode, read_image, write_image, write_pfm, PlanarImage, GAMMA};
use aberrex::pipeline::{FringeMethod, Pipeline, PipelineConfig};
use aberrex::psf::{self, convolve, rasterize, EmpiricalPsf};
use aberrex::scene;

fn aberrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aberrex"))
        .args(args)
        .env("ABERREX_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scene(dir: &Path, name: &str, size: usize, seed: u64) -> PathBuf {
    let p = dir.join(name);
    let img = scene::color_scene(size, size, seed).with_colorspace(aberrex::image::Colorspace::Linear);
    write_pfm(&img, &p).unwrap();
    p
}

#[test]
fn correct_writes_same_size_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_scene(dir.path(), "in.pfm", 160, 1);
    let output = dir.path().join("out.png");
    let out = aberrex(&["correct", path_str(&input), path_str(&output), "--patch", "100"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let img = read_image(&output).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (160, 160, 3));
}

#[test]
fn jpeg_flag_wraps_pipeline_in_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_scene(dir.path(), "in.pfm", 140, 2);
    let output = dir.path().join("out.pfm");
    let out = aberrex(&[
        "correct",
        path_str(&input),
        path_str(&output),
        "--jpeg",
        "--patch",
        "100",
        "--fringe-method",
        "phasecorr",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = read_image(&output).unwrap();

    let src = read_image(&input).unwrap();
    let linear = Pipeline::new(PipelineConfig {
        patch_size: 100,
        fringe: "phasecorr".parse::<FringeMethod>().unwrap(),
        model: Some(AffineBlurModel::JPEG),
        threads: Some(1),
        ..Default::default()
    })
    .unwrap()
    .correct(&gamma_decode(&src, GAMMA))
    .unwrap();
    let want = gamma_encode(&linear, GAMMA);
    assert!(got.max_abs_diff(&want) < 1e-6);
}

#[test]
fn stages_compose_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_scene(dir.path(), "in.pfm", 200, 3);
    let p = |n: &str| dir.path().join(n);
    let common = ["--patch", "100", "--overlap", "0", "--fringe-method", "plk-t"];
    let run = |cmd: &str, i: &Path, o: &Path| {
        let mut args = vec![cmd, path_str(i), path_str(o)];
        args.extend_from_slice(&common);
        let out = aberrex(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    run("correct", &input, &p("all.pfm"));
    run("deblur", &input, &p("d.pfm"));
    run("defringe", &p("d.pfm"), &p("df.pfm"));
    let a = read_image(p("all.pfm")).unwrap();
    let b = read_image(p("df.pfm")).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-6);
}

#[test]
fn estimate_kernel_on_sharp_patch_reports_floor() {
    let dir = tempfile::tempdir().unwrap();
    let star = scene::siemens_star_sharp(128, 24);
    let img = PlanarImage::from_planes(&[star.clone(), star.clone(), star]).unwrap();
    let input = dir.path().join("star.pfm");
    write_pfm(&img, &input).unwrap();
    let prefix = dir.path().join("k");
    let out = aberrex(&[
        "estimate-kernel",
        path_str(&input),
        "--patch-origin",
        "0,0",
        "--model",
        "jpeg",
        "--kernels",
        path_str(&prefix),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    for ch in ["R", "G", "B"] {
        assert!(text.contains(&format!("{ch}\tsigma=0.2000\trho=0.2000")), "{text}");
    }
    assert!(dir.path().join("k_g.pfm").exists());

    let out = aberrex(&["estimate-kernel", path_str(&input)]);
    assert_eq!(code(&out), 0);
    let stds: Vec<f64> = stdout(&out)
        .lines()
        .skip(1)
        .flat_map(|l| l.split('\t').skip(1).map(|f| f[f.find('=').unwrap() + 1..].parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(stds.len(), 6);
    assert!(stds.iter().all(|&s| (0.2..0.22).contains(&s)), "{stds:?}");
}

#[test]
fn calibrate_recovers_planted_rule() {
    let dir = tempfile::tempdir().unwrap();
    let planted = AffineBlurModel::new(0.44, 0.33).unwrap();
    for i in 0..12u64 {
        let chart = scene::chart(96, i);
        let theta = 0.25 * i as f64;
        let (s, r) = (0.6 + 0.25 * i as f64, 0.5 + 0.15 * i as f64);
        let blurred = convolve(&chart, &rasterize(theta, s, r).unwrap());
        // true stds chosen so that the planted rule holds exactly; charts
        // under the variance floor are skipped by calibration anyway
        let obs = blur::calibration_samples(&blurred, theta, s, r);
        let std_of = |g: f64| (planted.c * planted.c / (g * g) - planted.sigma_b.powi(2)).sqrt();
        let k = match obs.as_slice() {
            [a, b] => (theta, std_of(a.grad_norm), std_of(b.grad_norm)),
            _ => (theta, s, r),
        };
        let entry = CorpusEntry {
            name: format!("c{i:02}"),
            image: PlanarImage::from_planes(&[blurred.clone(), blurred.clone(), blurred]).unwrap(),
            kernels: vec![k; 3],
        };
        blur::write_corpus_entry(dir.path(), &entry).unwrap();
    }
    let model_path = dir.path().join("fit.txt");
    let out = aberrex(&["calibrate", path_str(dir.path()), "--out", path_str(&model_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = AffineBlurModel::load(&model_path).unwrap();
    assert!((fit.c / planted.c - 1.0).abs() < 0.01, "{fit:?}");
    assert!((fit.sigma_b / planted.sigma_b - 1.0).abs() < 0.01, "{fit:?}");
    assert!(stdout(&out).starts_with("C="));
}

#[test]
fn degrade_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    let img = scene::color_scene(200, 200, 4);
    write_image(&img, src.join("a.png")).unwrap();
    let data = dir.path().join("data");
    let out = aberrex(&["degrade", path_str(&src), path_str(&data), "--count", "3", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("manifest.tsv").exists());

    let out = aberrex(&["eval", path_str(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "id\tR\tE_before\tE_after\tssim_blurry\tssim_deblurred"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cells: Vec<&str> = row.split('\t').collect();
        assert_eq!(cells.len(), 6);
        for c in &cells[1..] {
            assert!(c.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn fit_psf_prints_gaussian_fits() {
    let dir = tempfile::tempdir().unwrap();
    let k = rasterize(0.4, 2.0, 1.0).unwrap().padded(21).to_plane();
    let e = EmpiricalPsf::new(vec![k.clone(), k.clone(), k]).unwrap();
    let path = dir.path().join("lens.epsf");
    psf::write_epsf(&path, &[e.clone(), e]).unwrap();
    let out = aberrex(&["fit-psf", path_str(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in rows {
        let sigma: f64 = r[3].parse().unwrap();
        let rho: f64 = r[4].parse().unwrap();
        assert!((sigma - 2.0).abs() < 0.05 && (rho - 1.0).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_scene(dir.path(), "in.pfm", 120, 6);
    let o = dir.path().join("o.pfm");
    // usage
    assert_eq!(code(&aberrex(&[])), 1);
    assert_eq!(code(&aberrex(&["frobnicate"])), 1);
    assert_eq!(code(&aberrex(&["correct", path_str(&input)])), 1);
    assert_eq!(
        code(&aberrex(&["correct", path_str(&input), path_str(&o), "--fringe-method", "lk"])),
        1
    );
    assert_eq!(code(&aberrex(&["--help"])), 0);
    // io
    assert_eq!(code(&aberrex(&["correct", "/nonexistent.png", path_str(&o)])), 2);
    assert_eq!(
        code(&aberrex(&["correct", path_str(&input), path_str(&o), "--weights", "/nope.ftbw"])),
        2
    );
    // validation
    let bad = aberrex(&["correct", path_str(&input), path_str(&o), "--overlap", "0.3"]);
    assert_eq!(code(&bad), 3);
    let err = String::from_utf8_lossy(&bad.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert_eq!(
        code(&aberrex(&["correct", path_str(&input), path_str(&o), "--poly", "1,x"])),
        3
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_scene(dir.path(), "in.pfm", 120, 7);
    let o = dir.path().join("o.pfm");
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "patch = 100\noverlap = 0.3\nfringe-method = phasecorr\n").unwrap();
    let c = path_str(&cfg);
    // the file alone is invalid
    assert_eq!(code(&aberrex(&["correct", path_str(&input), path_str(&o), "--config", c])), 3);
    // a flag overrides the bad value
    let out = aberrex(&["correct", path_str(&input), path_str(&o), "--config", c, "--overlap", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&cfg, "speed = 3\n").unwrap();
    assert_eq!(code(&aberrex(&["correct", path_str(&input), path_str(&o), "--config", c])), 1);
    assert_eq!(
        code(&aberrex(&["correct", path_str(&input), path_str(&o), "--config", "/no/such.conf"])),
        2
    );
}
