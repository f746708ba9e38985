//! Acceptance checks, one PASS/FAIL line per item on stderr (also appended to
//! `acceptance.txt` under the cargo target tmp dir).
//!
//! Items 6-8 train the desk-scale phantom experiments through the `ushar`
//! binary and take tens of minutes each on a CPU.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ushar_core::metrics::{
    bhattacharyya, contrast_db, gsm, hist_correlation, histogram_of, reclassification_rate, roi_ssim,
    ssim, ssim_map, GsmRegion, Histogram, MetricReport,
};
use ushar_core::{Image, RoiLabel, RoiMaskSet};
use ushar_gan::losses::{content_loss, noise_loss, style_distance};
use ushar_gan::{lr_at_epoch, Generator, GeneratorConfig};

fn report(item: u32, passed: bool, what: &str, detail: &str) {
    let line = format!(
        "ACCEPTANCE {item:>2} {}  {what}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    let log = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance.txt");
    if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(log) {
        let _ = f.write_all(line.as_bytes());
    }
    assert!(passed, "acceptance item {item} failed: {detail}");
}

fn work_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn ushar(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_ushar"))
        .args(args)
        .env("USHAR_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "ushar {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

// ---------------------------------------------------------------------------
// Brute-force metric oracles

struct Case {
    img: Image,
    px: Array2<f64>,
    mask: RoiMaskSet,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let labels = Array2::from_shape_fn((16, 16), |(r, c)| {
        // Every label present at least once.
        if r == 0 && c < 4 {
            c as u8
        } else {
            rng.random_range(0..4u8)
        }
    });
    let stored = Array2::from_shape_fn((16, 16), |_| rng.random::<u8>());
    let px = stored.mapv(f64::from);
    Case {
        img: Image::Stored(stored),
        px,
        mask: RoiMaskSet::new(labels).unwrap(),
    }
}

fn in_label(case: &Case, label: u8) -> Vec<f64> {
    case.px
        .iter()
        .zip(case.mask.labels().iter())
        .filter(|(_, &l)| l == label)
        .map(|(&v, _)| v)
        .collect()
}

fn counts(values: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; 256];
    for &v in values {
        c[v as usize] += 1.0;
    }
    c
}

fn oracle_bd(c1: &[f64], c2: &[f64]) -> f64 {
    let n = c1.len() as f64;
    let m1 = c1.iter().sum::<f64>() / n;
    let m2 = c2.iter().sum::<f64>() / n;
    let overlap: f64 = c1.iter().zip(c2).map(|(a, b)| (a * b).sqrt()).sum();
    (1.0 - overlap / (m1 * m2 * n * n).sqrt()).max(0.0).sqrt()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Direct 11x11 window sums with mirrored borders (edge sample repeated).
fn oracle_ssim_map(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    let mut window = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (u, row) in window.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            let (du, dv) = (u as f64 - 5.0, v as f64 - 5.0);
            *cell = (-(du * du + dv * dv) / (2.0 * 1.5 * 1.5)).exp();
            total += *cell;
        }
    }
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        if i < 0 {
            (-i - 1) as usize
        } else if i >= n {
            (2 * n - i - 1) as usize
        } else {
            i as usize
        }
    };
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for u in 0..11 {
            for v in 0..11 {
                let wt = window[u][v] / total;
                let rr = mirror(r as isize + u as isize - 5, h);
                let cc = mirror(c as isize + v as isize - 5, w);
                let (x, y) = (a[[rr, cc]], b[[rr, cc]]);
                ma += wt * x;
                mb += wt * y;
                saa += wt * x * x;
                sbb += wt * y * y;
                sab += wt * x * y;
            }
        }
        let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
    })
}

fn oracle_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn oracle_gsm(case: &Case) -> f64 {
    let lumen = in_label(case, 1);
    let lumen_mean = lumen.iter().sum::<f64>() / lumen.len() as f64;
    let adv_max = in_label(case, 3).into_iter().fold(0.0, f64::max);
    oracle_median(in_label(case, 2).iter().map(|v| 190.0 * (v - lumen_mean) / adv_max).collect())
}

fn oracle_contrast(case: &Case) -> f64 {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let lumen = mean(in_label(case, 1)).max(0.5);
    20.0 * (lumen / mean(in_label(case, 3))).log10()
}

#[test]
fn item_01_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases: Vec<Case> = (0..50).map(|_| random_case(&mut rng)).collect();
    let mut worst: f64 = 0.0;
    for (i, case) in cases.iter().enumerate() {
        let other = &cases[(i + 1) % cases.len()];
        let whole: Vec<f64> = case.px.iter().copied().collect();
        let other_whole: Vec<f64> = other.px.iter().copied().collect();
        let h = histogram_of(&case.img, None, 256).unwrap();
        let g = histogram_of(&other.img, None, 256).unwrap();
        worst = worst.max((bhattacharyya(&h, &g).unwrap() - oracle_bd(&counts(&whole), &counts(&other_whole))).abs());
        worst = worst.max((hist_correlation(&h, &g).unwrap() - oracle_pearson(&counts(&whole), &counts(&other_whole))).abs());

        let lumen = case.mask.region(RoiLabel::Lumen);
        let hl = histogram_of(&case.img, Some(&lumen), 256).unwrap();
        let gl = histogram_of(&other.img, Some(&other.mask.region(RoiLabel::Lumen)), 256).unwrap();
        worst = worst.max((bhattacharyya(&hl, &gl).unwrap() - oracle_bd(&counts(&in_label(case, 1)), &counts(&in_label(other, 1)))).abs());

        let want = oracle_ssim_map(&case.px, &other.px);
        let got = ssim_map(&case.img, &other.img).unwrap();
        worst = worst.max((ssim(&case.img, &other.img).unwrap() - want.mean().unwrap()).abs());
        for label in [RoiLabel::Lumen, RoiLabel::PlaqueOrIm, RoiLabel::Adventitia] {
            let region = case.mask.region(label);
            let n = region.iter().filter(|&&m| m).count() as f64;
            let oracle = want.iter().zip(region.iter()).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / n;
            worst = worst.max((roi_ssim(&got, &region).unwrap() - oracle).abs());
        }

        worst = worst.max((gsm(&case.img, &case.mask, GsmRegion::PlaqueIm).unwrap() - oracle_gsm(case)).abs());
        worst = worst.max((contrast_db(&case.img, &case.mask).unwrap().db - oracle_contrast(case)).abs());
    }
    let elapsed = start.elapsed();
    report(
        1,
        worst < 1e-6 && elapsed < Duration::from_secs(10),
        "metric oracles on 50 random 16x16 cases (tol 1e-6, < 10 s)",
        &format!("max abs error {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    );
}

#[test]
fn item_02_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    for _ in 0..20 {
        let case = random_case(&mut rng);
        let h = histogram_of(&case.img, None, 256).unwrap();
        ok &= bhattacharyya(&h, &h).unwrap() == 0.0;
        ok &= hist_correlation(&h, &h).unwrap() == 1.0;
        ok &= ssim(&case.img, &case.img).unwrap() == 1.0;
        let g: Vec<f64> = (0..10).map(|_| rng.random_range(-20.0..80.0)).collect();
        ok &= reclassification_rate(&g, &g, 25.0).unwrap() == (0, 0.0);
    }
    let mut low = vec![0.0; 256];
    let mut high = vec![0.0; 256];
    low[..128].iter_mut().for_each(|v| *v = 1.0);
    high[128..].iter_mut().for_each(|v| *v = 2.0);
    let disjoint = bhattacharyya(&Histogram::from_counts(low), &Histogram::from_counts(high)).unwrap();
    ok &= (disjoint - 1.0).abs() < 1e-9;
    report(
        2,
        ok,
        "BD(h,h)=0, HC(h,h)=1, SSIM(a,a)=1, reclassification(x,x)=0 exact; disjoint BD=1",
        &format!("disjoint BD {disjoint}"),
    );
}

// ---------------------------------------------------------------------------
// Losses

fn uniform(seed: u64, size: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..size * size).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Tensor::from_vec(v, (1, 1, size, size), &Device::Cpu).unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar().unwrap()
}

fn gradient_error(f: impl Fn(&Tensor) -> Tensor, x0: &Tensor) -> f64 {
    let var = Var::from_tensor(x0).unwrap();
    let grads = f(var.as_tensor()).backward().unwrap();
    let analytic: Vec<f64> = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
    let base: Vec<f64> = x0.flatten_all().unwrap().to_vec1().unwrap();
    let h = 1e-5;
    let numeric: Vec<f64> = (0..base.len())
        .map(|i| {
            let eval = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                scalar(&f(&Tensor::from_vec(v, x0.dims(), &Device::Cpu).unwrap()))
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric))
}

#[test]
fn item_03_loss_identities_and_gradients() {
    let start = Instant::now();
    // Two channels in the first encoder layer, 8x8 inputs, double precision.
    let toy = GeneratorConfig {
        base_filters: 2,
        n_residual_blocks: 1,
        n_encoder_blocks: 3,
        n_decoder_blocks: 3,
        style_layers: vec![1, 2, 3],
    };
    let g = Generator::new(toy, 3, DType::F64, &Device::Cpu).unwrap();
    let y = uniform(1, 8);
    let x = uniform(2, 8);
    let (_, trunk) = g.content_features(&y).unwrap();
    let zero_content = scalar(&content_loss(&trunk, &trunk).unwrap());
    let zero_noise = scalar(&noise_loss(&g, &y, &y).unwrap());

    let noise_err = gradient_error(
        |x| {
            let gx = g.forward(x).unwrap();
            style_distance(&g.encoder_features(&gx).unwrap(), &g.encoder_features(&y).unwrap()).unwrap()
        },
        &x,
    );
    let content_err = gradient_error(
        |x| {
            let pass = g.forward_full(x).unwrap();
            let (_, fake) = g.content_features(&pass.output).unwrap();
            content_loss(&fake, &pass.trunk).unwrap()
        },
        &x,
    );
    let elapsed = start.elapsed();
    report(
        3,
        zero_content == 0.0
            && zero_noise == 0.0
            && noise_err < 1e-3
            && content_err < 1e-3
            && elapsed < Duration::from_secs(60),
        "loss identities exact; finite-difference gradients (rel err < 1e-3, < 60 s)",
        &format!(
            "content(f,f)={zero_content}, noise(g,y,y)={zero_noise}, noise grad err {noise_err:.2e}, \
             content grad err {content_err:.2e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Architecture and schedule

#[test]
fn item_04_architecture_contract() {
    let g = Generator::new(GeneratorConfig::default(), 0, DType::F32, &Device::Cpu).unwrap();
    let count = g.params().count();
    let conv = |i: usize, o: usize, k: usize, norm: bool| o * i * k * k + o + if norm { 2 * o } else { 0 };
    let closed_form = conv(1, 64, 7, true)
        + conv(64, 128, 3, true)
        + conv(128, 256, 3, true)
        + conv(256, 512, 3, true)
        + 9 * 2 * conv(512, 512, 3, true)
        + conv(512, 256, 3, true)
        + conv(256, 128, 3, true)
        + conv(128, 64, 3, true)
        + conv(64, 1, 7, false);

    let x = uniform(9, 32).to_dtype(DType::F32).unwrap();
    let shapes: Vec<Vec<usize>> = g
        .encoder_features(&x)
        .unwrap()
        .layers
        .iter()
        .map(|t| t.dims()[1..].to_vec())
        .collect();
    let shapes_ok = shapes == vec![vec![64, 32, 32], vec![128, 16, 16], vec![256, 8, 8]];

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bounded = true;
    for _ in 0..100 {
        let v: Vec<f32> = (0..256).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let y = g.forward(&Tensor::from_vec(v, (1, 1, 16, 16), &Device::Cpu).unwrap()).unwrap();
        let y: Vec<f32> = y.flatten_all().unwrap().to_vec1().unwrap();
        bounded &= y.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v));
    }
    report(
        4,
        count == 45_602_049 && count == closed_form && shapes_ok && bounded,
        "default feature stack shapes, golden parameter count, output in [-1, 1] on 100 inputs",
        &format!("count {count} (closed form {closed_form}), stack {shapes:?}, bounded {bounded}"),
    );
}

#[test]
fn item_05_schedule() {
    let lr0 = 0.0002;
    let mut worst: f64 = 0.0;
    for epoch in [0usize, 99, 100, 150, 199] {
        let want = if epoch < 100 {
            lr0
        } else {
            lr0 * (200 - epoch) as f64 / 100.0
        };
        worst = worst.max((lr_at_epoch(lr0, 100, 200, epoch).unwrap() - want).abs());
    }
    report(
        5,
        worst <= 1e-18,
        "lr 0.0002 through epoch 99, linear to 0 by epoch 200",
        &format!("max deviation {worst:.1e} at epochs 0, 99, 100, 150, 199"),
    );
}

// ---------------------------------------------------------------------------
// Desk-scale experiments

const DESK_IMAGES: &str = "128";
const DESK_TEST: &str = "32";
const DESK_EPOCHS: &str = "30";
/// Generator and discriminator width at desk scale; the full width would not
/// fit the CPU budget.
const DESK_FILTERS: &str = "8";
const CPU_BUDGET: Duration = Duration::from_secs(4 * 3600);

struct Desk {
    report: MetricReport,
    elapsed: Duration,
}

fn run_desk(kind: &str, source: &str, target: &str, seed: &str) -> Desk {
    let start = Instant::now();
    let dir = work_dir(kind);
    let p = |rel: &str| dir.join(rel).to_str().unwrap().to_owned();
    ushar(&[
        "phantom", "--kind", kind, "--n", DESK_IMAGES, "--n-test", DESK_TEST, "--seed", seed, "--out", &p("data"),
    ]);
    ushar(&[
        "train",
        "--source",
        &p(&format!("data/{source}")),
        "--target",
        &p(&format!("data/{target}")),
        "--out",
        &p("run"),
        "--epochs",
        DESK_EPOCHS,
        "--base-filters",
        DESK_FILTERS,
        "--disc-filters",
        DESK_FILTERS,
        "--seed",
        seed,
    ]);
    let checkpoint = p(&format!("run/checkpoints/epoch_{:04}", DESK_EPOCHS.parse::<usize>().unwrap()));
    let test = p(&format!("data/{source}_test"));
    ushar(&["translate", "--checkpoint", &checkpoint, "--input", &format!("{test}/images"), "--out", &p("translated")]);
    ushar(&[
        "evaluate",
        "--source",
        &test,
        "--translated",
        &p("translated"),
        "--target",
        &p(&format!("data/{target}")),
        "--masks",
        &format!("{test}/masks"),
        "--report",
        &p("report"),
    ]);
    Desk {
        report: MetricReport::read_json(&dir.join("report/report.json")).unwrap(),
        elapsed: start.elapsed(),
    }
}

fn harmonization() -> &'static Desk {
    static CELL: OnceLock<Desk> = OnceLock::new();
    CELL.get_or_init(|| run_desk("harmonization", "A", "B", "11"))
}

fn denoising() -> &'static Desk {
    static CELL: OnceLock<Desk> = OnceLock::new();
    CELL.get_or_init(|| run_desk("denoising", "C", "D", "12"))
}

fn agg(r: &MetricReport, field: &str) -> f64 {
    r.aggregates[field].mean
}

#[test]
fn item_06_desk_harmonization() {
    let desk = harmonization();
    let r = &desk.report;
    let (before, after) = (r.source_vs_target.unwrap(), r.translated_vs_target.unwrap());
    let hc_gain = after.hc.mean - before.hc.mean;
    let bd_drop = before.bd.mean - after.bd.mean;
    let contrast_change = agg(r, "contrast_out_db") - agg(r, "contrast_in_db");
    report(
        6,
        hc_gain >= 0.05 && bd_drop >= 0.05 && contrast_change.abs() <= 3.0 && desk.elapsed <= CPU_BUDGET,
        "harmonization: HC gain >= 0.05, BD drop >= 0.05, |contrast change| <= 3 dB, <= 4 h CPU",
        &format!(
            "HC {:.3} -> {:.3}, BD {:.3} -> {:.3}, contrast {:.1} -> {:.1} dB, {:.1} min",
            before.hc.mean,
            after.hc.mean,
            before.bd.mean,
            after.bd.mean,
            agg(r, "contrast_in_db"),
            agg(r, "contrast_out_db"),
            desk.elapsed.as_secs_f64() / 60.0
        ),
    );
}

#[test]
fn item_07_desk_denoising() {
    let desk = denoising();
    let r = &desk.report;
    let improved = r
        .per_image
        .iter()
        .filter(|m| match (m.contrast_in_db, m.contrast_out_db) {
            (Some(a), Some(b)) => a - b >= 10.0,
            _ => false,
        })
        .count();
    let fraction = improved as f64 / r.n as f64;
    let (lumen, wall, adventitia) = (agg(r, "ssim_lumen"), agg(r, "ssim_plaque_im"), agg(r, "ssim_adventitia"));
    report(
        7,
        fraction >= 0.9 && lumen < 0.2 && wall > 0.5 && adventitia > 0.5 && desk.elapsed <= CPU_BUDGET,
        "denoising: >= 90% gain >= 10 dB contrast; SSIM lumen < 0.2, wall and adventitia > 0.5",
        &format!(
            "{improved}/{} improved, contrast {:.1} -> {:.1} dB, SSIM lumen {lumen:.3} wall {wall:.3} \
             adventitia {adventitia:.3}, {:.1} min",
            r.n,
            agg(r, "contrast_in_db"),
            agg(r, "contrast_out_db"),
            desk.elapsed.as_secs_f64() / 60.0
        ),
    );
}

#[test]
fn item_08_anatomy_retention() {
    let (h, d) = (&harmonization().report, &denoising().report);
    let (ha, hw) = (agg(h, "ssim_adventitia"), agg(h, "ssim_whole"));
    let (da, dw) = (agg(d, "ssim_adventitia"), agg(d, "ssim_whole"));
    report(
        8,
        ha > hw && da > dw,
        "adventitia SSIM above whole-image SSIM in both tasks",
        &format!("harmonization {ha:.3} vs {hw:.3}, denoising {da:.3} vs {dw:.3}"),
    );
}

// ---------------------------------------------------------------------------
// Risk markers

fn constant_rois(lumen: u8, im: u8, adventitia: u8, background: u8) -> (Image, RoiMaskSet) {
    let labels = Array2::from_shape_fn((16, 16), |(r, _)| match r {
        0..=3 => 0u8,
        4..=7 => 3,
        8..=9 => 2,
        _ => 1,
    });
    let px = labels.mapv(|l| match l {
        0 => background,
        1 => lumen,
        2 => im,
        _ => adventitia,
    });
    (Image::Stored(px), RoiMaskSet::new(labels).unwrap())
}

#[test]
fn item_09_risk_markers() {
    let mut ok = true;
    let mut details = Vec::new();
    // Constant ROIs: median of 190 * (I - lumen) / max(adventitia) is exact.
    for (lumen, im, adv, want) in [
        (10u8, 60u8, 200u8, 190.0 * 50.0 / 200.0),
        (0, 100, 190, 100.0),
        (20, 10, 250, 190.0 * -10.0 / 250.0),
    ] {
        let (img, mask) = constant_rois(lumen, im, adv, 120);
        let got = gsm(&img, &mask, GsmRegion::PlaqueIm).unwrap();
        ok &= got == want;
        details.push(format!("{got:.4}"));
    }
    // Whole image, sorted: 96 lumen, 32 IM, 64 background, 64 adventitia
    // values. The median averages the last IM and the first background value.
    let (img, mask) = constant_rois(10, 60, 200, 120);
    let whole = gsm(&img, &mask, GsmRegion::WholeImage).unwrap();
    ok &= whole == (190.0 * 50.0 / 200.0 + 190.0 * 110.0 / 200.0) / 2.0;
    details.push(format!("whole {whole:.4}"));

    let gin = [10.0, 30.0, 25.0, 24.9, 40.0];
    let gout = [30.0, 10.0, 24.99, 25.0, 41.0];
    let crossing = reclassification_rate(&gin, &gout, 25.0).unwrap();
    let steady = reclassification_rate(&[25.0, 26.0, 3.0], &[30.0, 100.0, 24.0], 25.0).unwrap();
    ok &= crossing == (4, 0.8) && steady == (0, 0.0);
    report(
        9,
        ok,
        "GSM on constant-ROI images and reclassification counting",
        &format!("GSM {details:?}, crossing {crossing:?}, non-crossing {steady:?}"),
    );
}

// ---------------------------------------------------------------------------
// Determinism

fn pipeline(dir: &Path) {
    let p = |rel: &str| dir.join(rel).to_str().unwrap().to_owned();
    ushar(&["phantom", "--kind", "denoising", "--n", "16", "--n-test", "4", "--size", "32", "--seed", "5", "--out", &p("data")]);
    ushar(&[
        "train", "--source", &p("data/C"), "--target", &p("data/D"), "--out", &p("run"), "--epochs", "1",
        "--base-filters", "4", "--disc-filters", "4", "--residual-blocks", "2", "--seed", "5",
    ]);
    ushar(&[
        "translate", "--checkpoint", &p("run/checkpoints/epoch_0001"), "--input", &p("data/C_test/images"),
        "--out", &p("translated"),
    ]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else if path.extension().is_some_and(|e| e == "png") {
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

fn first_rows(path: &Path, n: usize) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().take(n + 1).map(str::to_owned).collect()
}

#[test]
fn item_10_determinism() {
    let (a, b) = (work_dir("determinism_a"), work_dir("determinism_b"));
    pipeline(&a);
    pipeline(&b);
    let phantoms = files(&a.join("data"));
    let translated = files(&a.join("translated"));
    let rows = first_rows(&a.join("run/loss.csv"), 10);
    let same_phantoms = !phantoms.is_empty() && phantoms == files(&b.join("data"));
    let same_rows = rows.len() == 11 && rows == first_rows(&b.join("run/loss.csv"), 10);
    let same_translations = translated.len() == 4 && translated == files(&b.join("translated"));
    report(
        10,
        same_phantoms && same_rows && same_translations,
        "identical seeds give byte-identical phantoms, loss rows and translations",
        &format!(
            "{} phantom files {same_phantoms}, 10 loss rows {same_rows}, {} translations {same_translations}",
            phantoms.len(),
            translated.len()
        ),
    );
}
