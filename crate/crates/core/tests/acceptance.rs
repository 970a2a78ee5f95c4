//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use paulilab_core::ensembles::{sample_gue, sample_pauli_string_ensemble, SignKind};
use paulilab_core::harness::{run, Command, ExperimentConfig};
use paulilab_core::lowenergy::{chebyshev_witness, qpe_experiment, QpeKernel, QpeModel, WitnessConfig};
use paulilab_core::pauli::Letter;
use paulilab_core::spectral::{eigenvalues, empirical_cdf_distance, low_energy_fraction, sample_gue_spectrum};
use paulilab_core::stats::{mean, std_error};
use paulilab_core::universality::{
    moment_matching_check, moment_records, norm_tail_experiment_at, resolvent_concentration_experiment,
    resolvent_records, sample_paired_spectra, ComparisonRecord, MomentMode,
};
use paulilab_core::{Complex64, PauliString, Phase, SeedTree};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn letter_matrix(l: Letter) -> [[Complex64; 2]; 2] {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match l {
        Letter::I => [[o, z], [z, o]],
        Letter::X => [[z, o], [o, z]],
        Letter::Y => [[z, -i], [i, z]],
        Letter::Z => [[o, z], [z, -o]],
    }
}

/// Kronecker product with site 0 as the most significant factor.
fn oracle_dense(letters: &[Letter], phase: Phase) -> Vec<Vec<Complex64>> {
    let mut m = vec![vec![phase.to_complex()]];
    for &l in letters {
        let f = letter_matrix(l);
        let d = m.len();
        let mut out = vec![vec![c(0.0, 0.0); 2 * d]; 2 * d];
        for r in 0..d {
            for s in 0..d {
                for a in 0..2 {
                    for b in 0..2 {
                        out[2 * r + a][2 * s + b] = m[r][s] * f[a][b];
                    }
                }
            }
        }
        m = out;
    }
    m
}

fn oracle_mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let d = a.len();
    (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn max_diff(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let letters = [Letter::I, Letter::X, Letter::Y, Letter::Z];
    let phases: Vec<Phase> = (0..4).map(Phase::from_exponent).collect();
    let mut pairs = 0usize;
    let mut failures = 0usize;
    for n in 1..=2usize {
        let words: Vec<Vec<Letter>> = (0..4usize.pow(n as u32))
            .map(|code| (0..n).map(|s| letters[(code >> (2 * (n - 1 - s))) & 3]).collect())
            .collect();
        for wa in &words {
            for &pa in &phases {
                let a = PauliString::from_letters(wa, pa);
                let da = oracle_dense(wa, pa);
                for wb in &words {
                    for &pb in &phases {
                        let b = PauliString::from_letters(wb, pb);
                        let db = oracle_dense(wb, pb);
                        let ab = oracle_mul(&da, &db);
                        let ba = oracle_mul(&db, &da);
                        let prod = a.mul(&b).map_err(|e| e.to_string())?;
                        let pd = prod.to_dense().map_err(|e| e.to_string())?;
                        let dense: Vec<Vec<Complex64>> = (0..ab.len())
                            .map(|i| (0..ab.len()).map(|j| pd[(i, j)]).collect())
                            .collect();
                        let commutes = a.commutes(&b).map_err(|e| e.to_string())?;
                        let own = oracle_dense(&prod.letters().collect::<Vec<_>>(), prod.phase());
                        pairs += 1;
                        if max_diff(&dense, &ab) > 0.0
                            || max_diff(&own, &ab) > 0.0
                            || commutes != (max_diff(&ab, &ba) == 0.0)
                        {
                            failures += 1;
                        }
                    }
                }
            }
        }
    }
    check(
        failures == 0,
        format!("{pairs} pairs checked against dense Kronecker oracle, {failures} mismatches"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for k in 1..=3 {
        let r = moment_matching_check(3, k, SignKind::Complex, MomentMode::Exhaustive).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_deviation);
        instances = r.instances;
    }
    check(
        worst <= 1e-12 && instances == 384,
        format!("{instances} instances, max deviation over k=1..3 is {worst:.3e} (limit 1e-12)"),
    )
}

fn criterion_3() -> Outcome {
    let seed = 0xACCE_0003;
    let pauli: Vec<f64> = (0..500)
        .map(|t| {
            let s = SeedTree::new(seed).path(&[1, t]).key();
            Ok(sample_pauli_string_ensemble(6, 200, s)?
                .to_dense()?
                .normalized_trace_sq())
        })
        .collect::<paulilab_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let gue: Vec<f64> = (0..200)
        .map(|t| {
            let s = SeedTree::new(seed).path(&[2, t]).key();
            Ok(sample_gue(64, s)?.normalized_trace_sq())
        })
        .collect::<paulilab_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let (mp, sp) = (mean(&pauli), std_error(&pauli));
    let (mg, sg) = (mean(&gue), std_error(&gue));
    let within = |x: f64, se: f64| (x - 1.0).abs() <= 0.03 && (x - 1.0).abs() <= 3.0 * se;
    let ok = within(mp, sp) && within(mg, sg);
    check(
        ok,
        format!("Pauli E tr H^2 = {mp:.4} (se {sp:.4}), GUE = {mg:.4} (se {sg:.4}); need |x-1| <= 0.03 and <= 3 se"),
    )
}

fn criterion_4() -> Outcome {
    let dims = [256usize, 1024, 4096];
    let mut means = Vec::new();
    for (i, &n) in dims.iter().enumerate() {
        let d: Vec<f64> = (0..20)
            .map(|t| {
                let s = SeedTree::new(0xACCE_0004).path(&[i as u64, t]).key();
                sample_gue_spectrum(n, s).map(|sp| empirical_cdf_distance(&sp))
            })
            .collect::<paulilab_core::Result<_>>()
            .map_err(|e| e.to_string())?;
        means.push(mean(&d));
    }
    let ratios = [means[0] / means[1], means[1] / means[2]];
    check(
        ratios.iter().all(|r| (1.3..=3.0).contains(r)),
        format!(
            "mean sup-CDF distance {:.3e}, {:.3e}, {:.3e}; ratios {:.3}, {:.3} (need [1.3, 3.0])",
            means[0], means[1], means[2], ratios[0], ratios[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let r = norm_tail_experiment_at(8, 512, 0.5, 100, 0xACCE_0005).map_err(|e| e.to_string())?;
    check(
        r.exceed == 0 && r.trials == 100,
        format!(
            "{} of {} instances with norm >= {}; max norm {:.4}",
            r.exceed, r.trials, r.threshold, r.max_norm
        ),
    )
}

fn nonincreasing(rows: &[ComparisonRecord]) -> bool {
    rows.windows(2).all(|w| {
        let tol = 2.0 * (w[0].difference_se.powi(2) + w[1].difference_se.powi(2)).sqrt();
        w[1].difference <= w[0].difference + tol
    })
}

fn diffs(rows: &[ComparisonRecord]) -> String {
    rows.iter()
        .map(|r| format!("m={}: {:.2e}±{:.1e}", r.m, r.difference, r.difference_se))
        .collect::<Vec<_>>()
        .join(", ")
}

fn criterion_6() -> Outcome {
    let m_grid = [32usize, 128, 512, 2048];
    let ps = sample_paired_spectra(8, &m_grid, 200, 0xACCE_0006).map_err(|e| e.to_string())?;
    let mom = moment_records(&ps, 8).map_err(|e| e.to_string())?;
    let res = resolvent_records(&ps, 6, 0.3, &[0.0]).map_err(|e| e.to_string())?;
    let mom2 = moment_records(&ps, 2).map_err(|e| e.to_string())?;
    let zero = mom2.iter().all(|r| r.difference <= 3.0 * r.difference_se);
    let ok = nonincreasing(&mom) && nonincreasing(&res) && zero;
    check(
        ok,
        format!(
            "moments p=8 [{}]; resolvent p=6 [{}]; p=2 moments [{}]",
            diffs(&mom),
            diffs(&res),
            diffs(&mom2)
        ),
    )
}

fn criterion_7() -> Outcome {
    let fr: Vec<f64> = (0..50)
        .map(|t| {
            let s = SeedTree::new(0xACCE_0007).path(&[t]).key();
            let h = sample_pauli_string_ensemble(10, 5000, s)?.to_dense()?;
            Ok(low_energy_fraction(&eigenvalues(&h)?, 0.2))
        })
        .collect::<paulilab_core::Result<_>>()
        .map_err(|e| e.to_string())?;
    let f = mean(&fr);
    check(
        (0.026..=0.104).contains(&f),
        format!("pooled fraction {f:.5} (need [0.026, 0.104]; semicircle mass 0.05203)"),
    )
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for t in 0..5u64 {
        let s = SeedTree::new(0xACCE_0008).path(&[t]).key();
        let h = sample_pauli_string_ensemble(10, 5000, s)
            .and_then(|h| h.to_dense())
            .and_then(|h| eigenvalues(&h))
            .map_err(|e| e.to_string())?;
        let model = QpeModel {
            resolution: 0.0,
            repeats: 5,
            seed: SeedTree::new(s).child(1).key(),
            kernel: QpeKernel::Gaussian,
        };
        let r = qpe_experiment(&h, 0.2, &model, 10_000).map_err(|e| e.to_string())?;
        let sigma = (r.predicted * (1.0 - r.predicted) / r.shots as f64).sqrt();
        let z = (r.success_rate - r.predicted) / sigma;
        ok &= z.abs() <= 3.0;
        lines.push(format!("{:.4} vs {:.4} (z={z:+.2})", r.success_rate, r.predicted));
    }
    check(
        ok,
        format!("rate vs prediction over 10^4 shots, 5 repeats: {}", lines.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    let cfg = WitnessConfig::default();
    let mut worst_ratio = f64::INFINITY;
    let mut worst_trace: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut d = 0;
    for t in 0..10u64 {
        let s = SeedTree::new(0xACCE_0009).path(&[t]).key();
        let h = sample_pauli_string_ensemble(8, 2000, s).map_err(|e| e.to_string())?;
        let r = chebyshev_witness(&h, 0.3, &cfg).map_err(|e| e.to_string())?;
        d = r.d;
        worst_ratio = worst_ratio.min(r.ratio);
        worst_trace = worst_trace.max((r.trace - 1.0).abs());
        min_eig = min_eig.min(r.min_eigenvalue);
    }
    check(
        d == 8 && worst_ratio >= 0.7 && worst_trace <= 1e-8 && min_eig >= -1e-8,
        format!("d={d}, worst ratio {worst_ratio:.4}, max |tr-1| {worst_trace:.1e}, min eigenvalue {min_eig:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let n = 8;
    let small = resolvent_concentration_experiment(n, 32, 6, 0.0, 0.3, 200, 0xACCE_0010).map_err(|e| e.to_string())?;
    let large = resolvent_concentration_experiment(n, 512, 6, 0.0, 0.3, 200, 0xACCE_0010).map_err(|e| e.to_string())?;
    let exact = small.sigma_star_sq == 1.0 / (32.0 * 256.0) && large.sigma_star_sq == 1.0 / (512.0 * 256.0);
    check(
        large.relative_fluctuation < small.relative_fluctuation && exact,
        format!(
            "relative fluctuation {:.4e} (m=32) -> {:.4e} (m=512); sigma*^2 = {:e}, {:e}",
            small.relative_fluctuation, large.relative_fluctuation, small.sigma_star_sq, large.sigma_star_sq
        ),
    )
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let runs = [
        (
            Command::Universality,
            r#"{"seed": 11, "study": "moments", "n": 5, "m": [8, 64], "p": [2, 4], "trials": 40}"#,
        ),
        (
            Command::Universality,
            r#"{"seed": 11, "study": "concentration", "n": 4, "m": [4, 16], "p": [4], "eta": [0.5], "trials": 30}"#,
        ),
        (
            Command::Qpe,
            r#"{"seed": 12, "ensemble": {"variant": "pauli_strings", "n": 6, "m": 100}, "count": 3, "epsilon": [0.2],
               "qpe": {"resolution": 0.05, "repeats": 2, "shots": 2000}}"#,
        ),
        (
            Command::Dos,
            r#"{"seed": 13, "ensemble": {"variant": "gue", "N": 64}, "count": 6, "epsilon": [0.2],
               "p": [4], "eta": [0.13], "dos": {"e0": -1.6}}"#,
        ),
        (
            Command::Baseline,
            r#"{"seed": 14, "ensemble": {"variant": "pauli_strings", "n": 5, "m": 40}, "count": 4}"#,
        ),
    ];
    let root = std::env::temp_dir().join(format!("paulilab-acceptance-{}", std::process::id()));
    let mut compared = 0;
    for (i, (cmd, text)) in runs.iter().enumerate() {
        let cfg = ExperimentConfig::from_json(text).map_err(|e| e.to_string())?;
        let mut reference = None;
        for threads in [1usize, 4, 16] {
            let dir = root.join(format!("{i}-{threads}"));
            run(*cmd, &cfg, &dir, threads).map_err(|e| e.to_string())?;
            let bytes = csv_bytes(&dir);
            if bytes.is_empty() {
                return Err(format!("{} wrote no CSV", cmd.name()));
            }
            match &reference {
                None => reference = Some(bytes),
                Some(r) if *r != bytes => {
                    let _ = fs::remove_dir_all(&root);
                    return Err(format!("{} output differs at {threads} threads", cmd.name()));
                }
                Some(_) => compared += bytes.len(),
            }
        }
    }
    let _ = fs::remove_dir_all(&root);
    check(
        true,
        format!(
            "{} experiments, {compared} CSV comparisons identical across 1/4/16 threads",
            runs.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("Pauli algebra exactness", criterion_1),
        ("moment matching at N=3", criterion_2),
        ("second-moment normalization", criterion_3),
        ("semicircle CDF scaling", criterion_4),
        ("norm tail", criterion_5),
        ("universality trends", criterion_6),
        ("low-energy abundance", criterion_7),
        ("QPE success probability", criterion_8),
        ("Chebyshev witness", criterion_9),
        ("resolvent concentration", criterion_10),
        ("determinism across thread counts", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("criterion {:>2} {tag} {name} ({secs:.1}s): {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
