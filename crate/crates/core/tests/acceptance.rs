//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Fixture values are repeated here on purpose so that a change to
//! the library's copies cannot silently move the target.

use std::f64::consts::LN_10;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use prefix_universal::attention::{default_m, ControlPoints};
use prefix_universal::bounds::{covering_bounds, lambda_for_accuracy, DimensionMode, SmoothnessSpec};
use prefix_universal::kernel::{
    convolve_vmf, eigenvalue_lower_bound, kernel_eigenvalue, kernel_norm, vmf_log_normalizer, VmfKernel,
};
use prefix_universal::prefix::TargetFunction;
use prefix_universal::rng;
use prefix_universal::seq2seq::{
    aggregate_r, build_seq2seq_transformer, decode_sequence, BuildMode, DigitConfig, SeqFunction, SequenceSample,
};
use prefix_universal::sphere::uniform_sphere_sample;
use prefix_universal::verify::{
    classical_split_discrepancy, denominator_sweep, extension_discrepancy, full_mode_grid_error, hybrid_discrepancy,
    run_verify, split_head_sweep, Faults, Suite,
};

const SPLIT_HEAD_SUP: [[f64; 4]; 2] = [
    [1.2643386682e-01, 1.2530809738e-01, 1.2506958346e-01, 1.2501686446e-01],
    [7.4534198073e-02, 3.2006697164e-02, 3.1337336595e-02, 3.1266461923e-02],
];
const FULL_MODE_SUP: f64 = 2.138382535087e-05;

type Outcome = Result<(bool, String), prefix_universal::Error>;

fn c1() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for m in [2, 8, 16] {
        for lambda in [1.0, 10.0, 100.0] {
            worst = worst.max((kernel_norm(m, lambda)? - 1.0).abs());
        }
    }
    let el = t0.elapsed();
    Ok((worst <= 1e-6 && el < Duration::from_secs(5), format!("max |norm-1| {worst:.2e} in {el:.2?}")))
}

fn c2() -> Outcome {
    let mut worst = 0.0f64;
    for lambda in [0.5f64, 1.0, 5.0, 20.0] {
        let c3 = vmf_log_normalizer(2, lambda)?.exp();
        worst = worst.max((c3 * lambda.sinh() / lambda - 1.0).abs());
        worst = worst.max((kernel_eigenvalue(2, 1, lambda)? - (1.0 / lambda.tanh() - 1.0 / lambda)).abs());
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
}

fn c3() -> Outcome {
    let mut checked = 0;
    for m in [8, 12] {
        for lambda in [1.0, 10.0, 100.0] {
            for k in 0..=10 {
                let a = kernel_eigenvalue(m, k, lambda)?;
                let next = kernel_eigenvalue(m, k + 1, lambda)?;
                if !(eigenvalue_lower_bound(m, k, lambda) <= a && a <= 1.0 && next <= a) {
                    return Ok((false, format!("fails at m={m} k={k} lambda={lambda}")));
                }
                checked += 1;
            }
        }
    }
    Ok((true, format!("{checked} (m, k, lambda) triples")))
}

fn c4() -> Outcome {
    let t0 = Instant::now();
    let lambda = 10.0;
    let kern = VmfKernel::new(2, lambda)?;
    let a1 = kernel_eigenvalue(2, 1, lambda)?;
    let mut worst = 0.0f64;
    for (i, x) in uniform_sphere_sample(2, 20, 404)?.iter().enumerate() {
        let est = convolve_vmf(|y| vec![y.coords()[0]], &kern, x, 1_000_000, rng::child(405, i as u64))?;
        worst = worst.max((est.value[0] - a1 * x.coords()[0]).abs() / est.std_error[0]);
    }
    let el = t0.elapsed();
    Ok((worst <= 3.0 && el < Duration::from_secs(30), format!("max {worst:.2} standard errors in {el:.2?}")))
}

fn c5() -> Outcome {
    let spec = SmoothnessSpec::new(1.0, 1.0, 1.0, 1.0)?;
    let eps: f64 = 1e-4;
    let v = lambda_for_accuracy(eps, &spec, 8, DimensionMode::Strict)?.value * eps.powi(4) / 128.0;
    Ok(((0.99..=1.01).contains(&v), format!("ratio {v:.6}")))
}

fn c6() -> Outcome {
    for m in 8..=16 {
        for delta in [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
            let c = covering_bounds(m, delta)?;
            if !(c.lower <= c.upper) {
                return Ok((false, format!("m={m} delta={delta}")));
            }
        }
    }
    let tail: Vec<f64> =
        [0.99, 0.9999, 1.0 - 1e-8].iter().map(|&d| covering_bounds(8, d).map(|c| c.lower)).collect::<Result<_, _>>()?;
    let ok = (tail[2] - 2.0).abs() < 1e-3 && (tail[1] - 2.0).abs() <= (tail[0] - 2.0).abs();
    Ok((ok, format!("lower near delta = 1: {tail:.6?}")))
}

fn c7() -> Outcome {
    let sweep = split_head_sweep(0)?;
    let mut ok = true;
    let mut worst = 0.0f64;
    for (row, fixture) in sweep.chunks(4).zip(SPLIT_HEAD_SUP) {
        ok &= row.windows(2).all(|w| w[1].2 < w[0].2);
        for (r, f) in row.iter().zip(fixture) {
            worst = worst.max((r.2 / f - 1.0).abs());
        }
    }
    Ok((ok && worst <= 0.1, format!("decreasing {ok}, max fixture deviation {:.2}%", 100.0 * worst)))
}

fn c8() -> Outcome {
    let (m, n, lambda) = (4, 128, 32.0);
    let alphas = uniform_sphere_sample(m, n, 801)?;
    let betas = uniform_sphere_sample(m, n, 802)?;
    let cp =
        ControlPoints::new(m, lambda, alphas.into_iter().zip(betas.into_iter().map(|b| b.into_coords())).collect())?;
    let xs = uniform_sphere_sample(m, 100, 803)?;
    let at = classical_split_discrepancy(&cp, &xs, default_m(lambda, n), true)?;
    let ladder: Vec<f64> = (0..3)
        .map(|j| classical_split_discrepancy(&cp, &xs, -1.0 - j as f64 * LN_10, true))
        .collect::<Result<_, _>>()?;
    let ratios: Vec<f64> = ladder.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = at <= 1e-10 && ratios.iter().all(|&r| r >= 9.0);
    Ok((ok, format!("{at:.2e} at M = -(lambda+30+ln N); shrink per ln 10: {ratios:.3?}")))
}

fn c9() -> Outcome {
    let d = denominator_sweep()?;
    Ok((
        d[0] > d[1] && d[1] > d[2],
        format!("deviation at N = 256, 1024, 4096: {:.3e}, {:.3e}, {:.3e}", d[0], d[1], d[2]),
    ))
}

fn c10() -> Outcome {
    let f = TargetFunction::identity(3)?;
    let cp = prefix_universal::prefix::synthesize_prefix(&f, 300, 25.0, 1001)?;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        worst = worst.max(extension_discrepancy(&cp, 8, 1002 + seed)?);
    }
    Ok((worst <= 1e-10, format!("max T=8 vs T=1 distance {worst:.2e}")))
}

fn c11() -> Outcome {
    let cfg = DigitConfig::new(2)?;
    for t in 1..=3 {
        let s = build_seq2seq_transformer(&SeqFunction::mean(0), t, 0, &cfg, 64, 100.0, BuildMode::Hybrid)?;
        if s.attention_layers() != t + 2 {
            return Ok((false, format!("T={t} has {} attention layers", s.attention_layers())));
        }
    }
    let hybrid = hybrid_discrepancy(500, 1101)?;

    // every 4-digit sequence with T=2, m=1 aggregates and decodes exactly
    let cfg4 = DigitConfig::new(4)?;
    let mut round_trips = 0;
    for code in 0u32..1 << 16 {
        let el = |j: u32| ((code >> (4 * j)) & 15) as f64 / 16.0;
        let s = SequenceSample::new(1, vec![vec![el(0), el(1)], vec![el(2), el(3)]])?;
        let r = aggregate_r(&s, &cfg4)?;
        if r.ternary_string().contains('1') || decode_sequence(&r, 2, 1, &cfg4)? != s {
            return Ok((false, format!("round trip failed for {s:?}")));
        }
        round_trips += 1;
    }

    let full = full_mode_grid_error(8192, 2e4)?;
    let rel = (full / FULL_MODE_SUP - 1.0).abs();
    let ok = hybrid <= 1e-9 && rel <= 1e-6;
    Ok((
        ok,
        format!(
            "layers T+2; hybrid {hybrid:.2e}; {round_trips} exact round trips; full mode {full:.6e} (rel {rel:.1e})"
        ),
    ))
}

fn c12() -> Outcome {
    let t0 = Instant::now();
    let r = run_verify(Suite::All, &Faults::default());
    let el = t0.elapsed();
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok((
        r.passed && el <= Duration::from_secs(600),
        format!("{} checks, failures {failed:?}, {el:.1?}", r.checks.len()),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("kernel norm", c1),
        ("closed-form anchors", c2),
        ("eigenvalue sandwich", c3),
        ("funk-hecke oracle", c4),
        ("lambda asymptotics", c5),
        ("covering sandwich", c6),
        ("split-head convergence", c7),
        ("classical equals split", c8),
        ("denominator constancy", c9),
        ("element-wise extension", c10),
        ("sequence-to-sequence", c11),
        ("verify all", c12),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failures += !ok as usize;
        println!("criterion {:>2} {:<24} {}  {detail}", i + 1, name, if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
