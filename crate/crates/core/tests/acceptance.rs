//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (written directly, so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::gamma::ln_gamma;

use elliptest::data::Dataset;
use elliptest::ellip::{
    normalize, plugin_variance_unknown, statistic_known, unknown_summands, variance_unknown, EntropyTuning,
    MomentEstimates, PointTerms,
};
use elliptest::entropy::{choose_k, entropy_estimate, euler_gamma, l2_optimal_weights, WeightRule};
use elliptest::kde::kde_fit;
use elliptest::knn::{knn_distances_with, Backend};
use elliptest::matrix_ops::SymMatrix;
use elliptest::simharness::{run_grid, ExperimentGrid};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {id:>2} [{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn auto_entropy(x: &Dataset) -> f64 {
    let d = x.ncols();
    let k = choose_k(d, x.nrows());
    let w = WeightRule::Auto.resolve(k, d).unwrap().weights;
    entropy_estimate(x, &w).unwrap().h_hat
}

#[test]
fn criterion_01_entropy_oracles() {
    let start = Instant::now();
    let n = 5000;
    let seeds = 50u64;
    let e = std::f64::consts::E;
    let pi = std::f64::consts::PI;
    type Draw = fn(&mut ChaCha8Rng) -> f64;
    let cases: [(&str, usize, f64, f64, Draw); 4] = [
        ("N(0,1)", 1, 0.5 * (2.0 * pi * e).ln(), 0.05, |r| r.sample(StandardNormal)),
        ("U(0,1)", 1, 0.0, 0.05, |r| r.random::<f64>()),
        ("Exp(1)", 1, 1.0, 0.05, |r| r.sample(Exp1)),
        ("N(0,I2)", 2, (2.0 * pi * e).ln(), 0.08, |r| r.sample(StandardNormal)),
    ];
    let mut all = true;
    let mut detail = Vec::new();
    for (name, d, truth, tol, draw) in cases {
        let hits = (0..seeds)
            .filter(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let x = Dataset::new(n, d, (0..n * d).map(|_| draw(&mut rng)).collect()).unwrap();
                (auto_entropy(&x) - truth).abs() <= tol
            })
            .count();
        let ok = hits as f64 >= 0.9 * seeds as f64;
        all &= ok;
        detail.push(format!("{name} {hits}/{seeds}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = all && secs < 30.0;
    report(1, "entropy oracles", pass, &format!("{} in {secs:.1}s", detail.join(", ")));
    assert!(pass);
}

/// Least-norm solution of `A w = b` from a QR factorization of `A^T`
/// (Gram-Schmidt applied twice): `w = Q R^{-T} b`.
fn least_norm(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = vec![vec![0.0; m]; m];
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    for (j, col) in a.iter().enumerate() {
        let mut v = col.clone();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                r[i][j] += c;
                v.iter_mut().zip(qi).for_each(|(vv, qq)| *vv -= c * qq);
            }
        }
        let norm = dot(&v, &v).sqrt();
        r[j][j] = norm;
        q.push(v.into_iter().map(|t| t / norm).collect());
    }
    // R^T z = b, forward substitution
    let mut z = vec![0.0; m];
    for i in 0..m {
        let acc: f64 = (0..i).map(|k| r[k][i] * z[k]).sum();
        z[i] = (b[i] - acc) / r[i][i];
    }
    (0..a[0].len()).map(|c| (0..m).map(|i| q[i][c] * z[i]).sum()).collect()
}

#[test]
fn criterion_02_weight_constraints() {
    let mut worst_res: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    for d in 4..=12usize {
        for k in d..=60usize {
            let w = l2_optimal_weights(k, d).unwrap();
            worst_res = worst_res.max(w.max_residual());

            let mut support: Vec<usize> = (1..=d).map(|j| (j * k / d).max(1)).collect();
            support.dedup();
            let rows: Vec<Vec<f64>> = (0..=d / 4)
                .map(|l| {
                    support
                        .iter()
                        .map(|&j| {
                            if l == 0 {
                                1.0
                            } else {
                                (ln_gamma(j as f64 + 2.0 * l as f64 / d as f64) - ln_gamma(j as f64)).exp()
                            }
                        })
                        .collect()
                })
                .collect();
            let mut rhs = vec![0.0; rows.len()];
            rhs[0] = 1.0;
            let oracle = least_norm(&rows, &rhs);
            let mut full = vec![0.0; k];
            for (&j, v) in support.iter().zip(&oracle) {
                full[j - 1] = *v;
            }
            for (a, b) in w.w.iter().zip(&full) {
                worst_diff = worst_diff.max((a - b).abs());
            }
        }
    }
    let pass = worst_res <= 1e-8 && worst_diff <= 1e-8;
    report(
        2,
        "L2-optimal weight constraints",
        pass,
        &format!("max residual {worst_res:.2e}, max deviation from least-norm oracle {worst_diff:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_joint_entropy_identity() {
    let n = 5000;
    let truth = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - (2f64.ln() - euler_gamma()) / 2.0;
    let m = MomentEstimates::known(vec![0.0; 2], SymMatrix::identity(2)).unwrap();
    let errs: Vec<f64> = (0..50u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let x = Dataset::new(n, 2, (0..2 * n).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
            let ns = normalize(&x, &m).unwrap();
            let parts = statistic_known(&ns, &EntropyTuning::default()).unwrap();
            parts.h_y - parts.e_log_u
        })
        .collect();
    let med = median(errs);
    let pass = (med - truth).abs() <= 0.08;
    report(
        3,
        "H(U,V) = H(Y) - (p-1) E log U",
        pass,
        &format!("median {med:.4} vs analytic {truth:.4}"),
    );
    assert!(pass);
}

fn size_bound() -> f64 {
    0.05 + 2.0 * (0.05f64 * 0.95 / 200.0).sqrt()
}

#[test]
fn criterion_04_size_unknown_mode() {
    let mut grid = ExperimentGrid::from_path(&manifest_path("configs/table1.toml")).unwrap();
    // fast preset: 25 resamples for the bias estimate
    grid.b = 25;
    assert_eq!((grid.reps, grid.alpha), (200, 0.05));
    let table = run_grid(&grid, false).unwrap();
    assert_eq!(table.rows.len(), 8);
    let bound = size_bound();
    let pass = table.rows.iter().all(|r| r.reps > 0 && r.reject_rate <= bound);
    let cells: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("S{} p={}: {:.3} ({} failed)", r.setting, r.p, r.reject_rate, r.failed))
        .collect();
    report(4, "size, unknown mode", pass, &format!("bound {bound:.3}; {}", cells.join(", ")));
    assert!(pass);
}

fn power_cell(setting: u8, s: usize) -> f64 {
    let text = format!(
        "settings = [{setting}]\nn = [500]\np = [2]\ns = [{s}]\nreps = 200\nalpha = 0.05\nseed = 20240601\nb = 100\n"
    );
    let grid = ExperimentGrid::from_toml_str(&text).unwrap();
    run_grid(&grid, false).unwrap().rows[0].reject_rate
}

#[test]
fn criterion_05_power_unknown_mode() {
    let r1 = power_cell(1, 1);
    let r3 = power_cell(3, 2);
    let pass = r1 >= 0.90 && r3 >= 0.95;
    report(
        5,
        "power, unknown mode",
        pass,
        &format!("setting 1 s=1: {r1:.3} (>= 0.90), setting 3 s=2: {r3:.3} (>= 0.95)"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_known_mode_null_shrinks() {
    let m = MomentEstimates::known(vec![0.0; 2], SymMatrix::identity(2)).unwrap();
    let scaled = |n: usize| {
        median(
            (0..50u64)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
                    let x = Dataset::new(n, 2, (0..2 * n).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
                    let ns = normalize(&x, &m).unwrap();
                    let t = statistic_known(&ns, &EntropyTuning::default()).unwrap().t;
                    ((n as f64).sqrt() * t).abs()
                })
                .collect(),
        )
    };
    let a = scaled(500);
    let b = scaled(4000);
    let pass = b < a;
    report(
        6,
        "known-mode null, median |sqrt(n) T|",
        pass,
        &format!("n=500: {a:.4}, n=4000: {b:.4}"),
    );
    assert!(pass);
}

// Scalar 2x2 helpers for the transcription oracle.
type M2 = [[f64; 2]; 2];

fn mm(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn tr(a: &M2) -> f64 {
    a[0][0] + a[1][1]
}

/// Principal square root of a 2x2 SPD matrix.
fn sqrt2(s: &M2) -> M2 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let sd = det.sqrt();
    let t = (s[0][0] + s[1][1] + 2.0 * sd).sqrt();
    [[(s[0][0] + sd) / t, s[0][1] / t], [s[1][0] / t, (s[1][1] + sd) / t]]
}

fn inv2(s: &M2) -> M2 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]]
}

/// Solves the 4x4 system `(H (x) S + S (x) H) vec X = vec R` directly.
fn kron_solve(h: &M2, s: &M2, r: &M2) -> M2 {
    let mut a = [[0.0; 5]; 4];
    // (A (x) B)[2i + k][2j + l] = A[i][j] B[k][l]; vec stacks columns
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    a[2 * i + k][2 * j + l] = h[i][j] * s[k][l] + s[i][j] * h[k][l];
                }
            }
        }
    }
    for col in 0..2 {
        for row in 0..2 {
            a[2 * col + row][4] = r[row][col];
        }
    }
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for rr in 0..4 {
            if rr != c {
                let f = a[rr][c] / a[c][c];
                for k in c..5 {
                    a[rr][k] -= f * a[c][k];
                }
            }
        }
    }
    let v: Vec<f64> = (0..4).map(|i| a[i][4] / a[i][i]).collect();
    [[v[0], v[2]], [v[1], v[3]]]
}

#[test]
fn criterion_07_influence_transcription() {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut raw = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        raw.push([1.0 + 2.0 * a, -0.5 + 0.8 * a + 0.6 * b]);
    }
    let x = Dataset::from_rows(&raw).unwrap();
    let rnd = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
    let terms = PointTerms {
        p: 2,
        xi_y: rnd(&mut rng, 0.0, 4.0),
        xi_u: rnd(&mut rng, -1.0, 2.0),
        log_u: rnd(&mut rng, -2.0, 1.5),
        h_y: 2.1,
        h_u: 0.4,
        e_log_u: 0.05,
    };
    let nf = n as f64;

    // moments
    let mut mu = [0.0; 2];
    for r in &raw {
        mu[0] += r[0] / nf;
        mu[1] += r[1] / nf;
    }
    let mut s: M2 = [[0.0; 2]; 2];
    for r in &raw {
        let c = [r[0] - mu[0], r[1] - mu[1]];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += c[i] * c[j] / nf;
            }
        }
    }
    let h = sqrt2(&s);
    let r_inv = inv2(&h);
    let mut y = Vec::new();
    let mut u = Vec::new();
    let mut v = Vec::new();
    for r in &raw {
        let c = [r[0] - mu[0], r[1] - mu[1]];
        let yi = [r_inv[0][0] * c[0] + r_inv[0][1] * c[1], r_inv[1][0] * c[0] + r_inv[1][1] * c[1]];
        let ui = (yi[0] * yi[0] + yi[1] * yi[1]).sqrt();
        y.push(yi);
        u.push(ui);
        v.push([yi[0] / ui, yi[1] / ui]);
    }

    // kernel density of U and its derivative
    let bw = nf.powf(-0.2);
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let ratio = |q: f64| {
        let mut f = 0.0;
        let mut fp = 0.0;
        for &uk in &u {
            let z = (q - uk) / bw;
            f += phi(z) / (nf * bw);
            fp += -z * phi(z) / (nf * bw * bw);
        }
        (fp / f.max(1e-12)).clamp(-10.0 / bw, 10.0 / bw)
    };
    let mut a1: M2 = [[0.0; 2]; 2];
    let mut b1: M2 = [[0.0; 2]; 2];
    let mut a2 = [0.0; 2];
    let mut b2 = [0.0; 2];
    for i in 0..n {
        let rt = ratio(u[i]);
        for a in 0..2 {
            for b in 0..2 {
                a1[a][b] += v[i][a] * v[i][b] / nf;
                b1[a][b] += rt * u[i] * v[i][a] * v[i][b] / nf;
            }
            a2[a] += v[i][a] / u[i] / nf;
            b2[a] += rt * v[i][a] / nf;
        }
    }

    let got = unknown_summands(&x, &terms, None).unwrap();
    let mut worst: f64 = 0.0;
    let mut v1_sum = 0.0;
    let mut v2_sum = 0.0;
    let mut plug_sum = 0.0;
    for i in 0..n {
        let c = [raw[i][0] - mu[0], raw[i][1] - mu[1]];
        let psi_s = [
            [c[0] * c[0] - s[0][0], c[0] * c[1] - s[0][1]],
            [c[1] * c[0] - s[1][0], c[1] * c[1] - s[1][1]],
        ];
        let sol = kron_solve(&h, &s, &psi_s);
        let psi_inv_half = [[-sol[0][0], -sol[0][1]], [-sol[1][0], -sol[1][1]]];
        let m = mm(&psi_inv_half, &h);
        let dot = |a: &[f64; 2]| a[0] * y[i][0] + a[1] * y[i][1];

        let v1 = -terms.xi_y[i] + terms.h_y - tr(&m);
        let v2 = (tr(&mm(&a1, &m)) - dot(&a2) + terms.log_u[i] - terms.e_log_u) + terms.xi_u[i] - terms.h_u
            - tr(&mm(&b1, &m))
            + dot(&b2);
        let mut cm: M2 = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                cm[a][b] = a1[a][b] - if a == b { 1.0 } else { 0.0 } - b1[a][b];
            }
        }
        let cv = [a2[0] - b2[0], a2[1] - b2[1]];
        let psi1 = tr(&mm(&cm, &m)) - dot(&cv);
        let psi2 = terms.log_u[i] - terms.xi_y[i] + terms.xi_u[i] + terms.h_y - terms.e_log_u - terms.h_u;

        for (a, b) in [(v1, got.v1[i]), (v2, got.v2[i]), (psi1, got.psi1[i]), (psi2, got.psi2[i])] {
            worst = worst.max((a - b).abs());
        }
        v1_sum += v1 * v1;
        v2_sum += v2 * v2;
        plug_sum += (psi1 + psi2).powi(2);
    }
    let sigma_oracle = (2.0 * (v1_sum / nf + v2_sum / nf)).sqrt();
    let plug_oracle = (plug_sum / nf + nf.powf(-0.5)).sqrt();
    let sigma = variance_unknown(&x, &terms, None).unwrap();
    let plug = plugin_variance_unknown(&x, &terms, None, 0.5).unwrap();
    worst = worst.max((sigma - sigma_oracle).abs()).max((plug - plug_oracle).abs());
    let pass = worst <= 1e-10;
    report(
        7,
        "unknown-moment variance transcription",
        pass,
        &format!("max abs deviation {worst:.2e} over all summands and both variances"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_kde_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(Exp1) + 0.1).collect();
    let m = kde_fit(&u, None).unwrap();
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let q = rng.random_range(0.0..6.0);
        let fd = (m.eval(q + step) - m.eval(q - step)) / (2.0 * step);
        let d = m.deriv(q);
        worst = worst.max((fd - d).abs() / d.abs());
    }
    let pass = worst <= 1e-6;
    report(8, "KDE derivative vs central differences", pass, &format!("max relative error {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_09_simulate_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "settings = [1, 3]\nn = [120]\np = [2, 3]\ns = [0, 1]\nreps = 6\nseed = 99\nb = 4\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2", "5"] {
        for format in ["csv", "json", "markdown"] {
            let out = dir.path().join(format!("t{threads}.{format}"));
            let status = Command::new(env!("CARGO_BIN_EXE_elliptest"))
                .env("ELLIPTEST_THREADS", threads)
                .args(["simulate", cfg.to_str().unwrap(), "--format", format, "-o", out.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success());
            outputs.push((format, std::fs::read(&out).unwrap()));
        }
    }
    let pass = ["csv", "json", "markdown"].iter().all(|f| {
        let same: Vec<&Vec<u8>> = outputs.iter().filter(|(g, _)| g == f).map(|(_, b)| b).collect();
        same.windows(2).all(|w| w[0] == w[1])
    });
    report(9, "simulate output independent of ELLIPTEST_THREADS", pass, "threads 1, 2, 5 x csv/json/markdown");
    assert!(pass);
}

#[test]
fn criterion_10_kd_tree_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(30..=500);
        let d = rng.random_range(1..=10);
        let k = rng.random_range(1..=25);
        let x = Dataset::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let tree = knn_distances_with(&x, k, Backend::KdTree).unwrap();
        let brute = knn_distances_with(&x, k, Backend::BruteForce).unwrap();
        for i in 0..n {
            let mut a = tree.row(i).to_vec();
            let mut b = brute.row(i).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            if a != b {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0;
    report(10, "kd-tree vs brute-force kNN", pass, &format!("100 instances, {mismatches} mismatching rows"));
    assert!(pass);
}
