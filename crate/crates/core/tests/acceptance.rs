//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semiclassical::classical::{
    action_closed_form, action_numeric, deterministic_hj_residual, deterministic_hj_residual_at,
    deterministic_parts, ClassicalState, PotentialSpec,
};
use semiclassical::convergence::{
    bohm_trajectories, deterministic_sweep, histogram_l1, madelung_snapshots, statistical_sweep,
    CoherentTemplate,
};
use semiclassical::hj::hopf_lax_solve;
use semiclassical::minplus::{delta_min, inf_convolution, legendre_fenchel};
use semiclassical::quantum::{
    default_eps_rho, init_coherent_state, init_gaussian_packet, l2_distance, madelung_decompose,
    madelung_residual_with, split_step_evolve, split_step_snapshots, CoherentStateParams,
    MadelungFields, MadelungResidual,
};
use semiclassical::{Grid1D, MinplusValue, SampledFunction};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// `m(x−x0)²/2t + K(x+x0)t/2 − K²t³/24m`
fn linear_action(x: f64, x0: f64, t: f64, m: f64, k: f64) -> f64 {
    m * (x - x0).powi(2) / (2.0 * t) + k * (x + x0) * t / 2.0 - k * k * t.powi(3) / (24.0 * m)
}

/// `m v0 x − ½ m v0² t + K x t − ½ K v0 t² − K² t³/6m`
fn linear_hj(x: f64, t: f64, m: f64, k: f64, v0: f64) -> f64 {
    m * v0 * x - 0.5 * m * v0 * v0 * t + k * x * t
        - 0.5 * k * v0 * t * t
        - k * k * t.powi(3) / (6.0 * m)
}

fn closed_form_action() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, k) = (1.0, 2.0);
    let pot = PotentialSpec::linear(m, k).map_err(fail)?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = rng.random_range(-3.0..=3.0);
        let x0 = rng.random_range(-3.0..=3.0);
        let t = 2.0 - rng.random_range(0.0..1.9);
        let a = action_numeric(x, t, x0, &pot).map_err(fail)?;
        worst = worst.max(rel_err(a, linear_action(x, x0, t, m, k)));
    }
    ensure(worst <= 1e-6, format!("max relative error {worst:.3e}"))
}

fn hopf_lax_oracle() -> Outcome {
    let grid = Grid1D::new(-10.0, 10.0, 4001).map_err(fail)?;
    let (m, k, v0) = (1.0, 2.0, 1.0);
    let pot = PotentialSpec::linear(m, k).map_err(fail)?;
    let s0 = SampledFunction::from_fn(grid, |x| m * v0 * x).map_err(fail)?;
    let times = [0.5, 1.0];
    let s = hopf_lax_solve(&s0, &pot, grid, &times).map_err(fail)?;
    let mut worst = 0.0f64;
    for (kk, &t) in times.iter().enumerate() {
        for i in 1000..=3000 {
            let e = (s.at(kk, i).get() - linear_hj(grid.x(i), t, m, k, v0)).abs();
            worst = worst.max(e);
        }
    }
    ensure(worst <= 5e-3, format!("sup error on [-5, 5] {worst:.3e}"))
}

fn elementary_solution() -> Outcome {
    let grid = Grid1D::new(-5.0, 5.0, 201).map_err(fail)?;
    let cases = [
        (PotentialSpec::free(1.0).map_err(fail)?, vec![0.3, 1.0, 2.5]),
        (
            PotentialSpec::linear(1.5, -1.0).map_err(fail)?,
            vec![0.5, 1.7],
        ),
        (
            PotentialSpec::harmonic(1.0, 1.0).map_err(fail)?,
            vec![0.7, 1.9, 3.0],
        ),
    ];
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for (pot, times) in &cases {
        for x0 in [-1.0, 0.5, 2.0] {
            let d = delta_min(grid, x0).map_err(fail)?;
            let s = hopf_lax_solve(&d, pot, grid, times).map_err(fail)?;
            for (k, &t) in times.iter().enumerate() {
                for (i, x) in grid.points().enumerate() {
                    let expect = action_closed_form(x, t, x0, pot).map_err(fail)?;
                    checked += 1;
                    if s.at(k, i).get() != expect {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    ensure(
        mismatches == 0,
        format!("{mismatches} of {checked} nodes differ"),
    )
}

fn dyadic_middle_third(rng: &mut ChaCha8Rng, grid: Grid1D) -> SampledFunction {
    let n = grid.len();
    let values = (0..n)
        .map(|i| {
            if (n / 3..2 * n / 3).contains(&i) && rng.random_bool(0.8) {
                MinplusValue::new(rng.random_range(-4096i32..4096) as f64 / 1024.0).unwrap()
            } else {
                MinplusValue::INFINITY
            }
        })
        .collect();
    SampledFunction::new(grid, values).unwrap()
}

/// `c + 2(x−3)₊ + 2(−3−x)₊ + Σ a (x−b)₊ + Σ a′ (b′−x)₊`, returned with its
/// Lipschitz constant.
fn convex_pl(rng: &mut ChaCha8Rng) -> (impl Fn(f64) -> f64, f64) {
    let term = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(1..=4) as f64 * 0.25,
            rng.random_range(-30..=30) as f64 * 0.1,
        )
    };
    let c = rng.random_range(-8..8) as f64 * 0.25;
    let nr = rng.random_range(0..3);
    let right: Vec<(f64, f64)> = (0..nr).map(|_| term(rng)).collect();
    let nl = rng.random_range(0..3);
    let left: Vec<(f64, f64)> = (0..nl).map(|_| term(rng)).collect();
    let lip = 2.0
        + right
            .iter()
            .map(|p| p.0)
            .sum::<f64>()
            .max(left.iter().map(|p| p.0).sum());
    let f = move |x: f64| {
        let mut v = c + 2.0 * (x - 3.0).max(0.0) + 2.0 * (-3.0 - x).max(0.0);
        for &(a, b) in &right {
            v += a * (x - b).max(0.0);
        }
        for &(a, b) in &left {
            v += a * (b - x).max(0.0);
        }
        v
    };
    (f, lip)
}

fn minplus_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let small = Grid1D::new(-3.0, 3.0, 61).map_err(fail)?;
    let wide = Grid1D::new(-8.0, 8.0, 161).map_err(fail)?;
    let p_grid = Grid1D::new(-1.0, 1.0, 9).map_err(fail)?;
    let delta = delta_min(small, 0.0).map_err(fail)?;
    let mut failures = Vec::new();
    let (mut conv_ratio, mut inv_ratio) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let f = dyadic_middle_third(&mut rng, small);
        let raw: Vec<f64> = (0..small.len())
            .map(|_| rng.random_range(-100.0..100.0))
            .collect();
        let w = SampledFunction::from_raw(small, raw).map_err(fail)?;
        for h in [&f, &w] {
            if inf_convolution(h, &delta).map_err(fail)? != *h
                || inf_convolution(&delta, h).map_err(fail)? != *h
            {
                failures.push(format!("neutral #{case}"));
            }
        }

        let g = dyadic_middle_third(&mut rng, small);
        let h = dyadic_middle_third(&mut rng, small);
        let left = inf_convolution(&inf_convolution(&f, &g).map_err(fail)?, &h).map_err(fail)?;
        let right = inf_convolution(&f, &inf_convolution(&g, &h).map_err(fail)?).map_err(fail)?;
        if left != right {
            failures.push(format!("associativity #{case}"));
        }

        let (a, la) = convex_pl(&mut rng);
        let (b, lb) = convex_pl(&mut rng);
        let fa = SampledFunction::from_fn(wide, &a).map_err(fail)?;
        let fb = SampledFunction::from_fn(wide, &b).map_err(fail)?;
        let lhs =
            legendre_fenchel(&inf_convolution(&fa, &fb).map_err(fail)?, p_grid).map_err(fail)?;
        let ca = legendre_fenchel(&fa, p_grid).map_err(fail)?;
        let cb = legendre_fenchel(&fb, p_grid).map_err(fail)?;
        let tol = 2.0 * la.max(lb) * wide.dx();
        for k in 0..p_grid.len() {
            let e = (lhs.get(k).get() - ca.get(k).get() - cb.get(k).get()).abs();
            conv_ratio = conv_ratio.max(e / tol);
        }

        let pg = Grid1D::new(-la, la, (8.0 * la).round() as usize + 1).map_err(fail)?;
        let back =
            legendre_fenchel(&legendre_fenchel(&fa, pg).map_err(fail)?, wide).map_err(fail)?;
        let tol = 2.0 * la * wide.dx();
        for k in 0..wide.len() {
            let e = (back.get(k).get() - fa.get(k).get()).abs();
            inv_ratio = inv_ratio.max(e / tol);
        }
    }
    if conv_ratio > 1.0 {
        failures.push("convolution theorem".into());
    }
    if inv_ratio > 1.0 {
        failures.push("involution".into());
    }
    let detail = format!("error/tolerance: convolution {conv_ratio:.3}, involution {inv_ratio:.3}");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn deterministic_residual() -> Outcome {
    let state = ClassicalState::new(0.3, 1.2);
    let mut worst = 0.0f64;
    let pots = [
        PotentialSpec::free(1.0).map_err(fail)?,
        PotentialSpec::linear(1.0, 2.0).map_err(fail)?,
        PotentialSpec::harmonic(1.0, 1.0).map_err(fail)?,
    ];
    for pot in &pots {
        for t in [0.5, 1.0, 2.0] {
            worst = worst.max(deterministic_hj_residual(state, pot, t, 1e-4).map_err(fail)?);
        }
    }
    let harmonic = &pots[2];
    let xi = deterministic_parts(1.0, state, harmonic).map_err(fail)?.xi;
    let off = deterministic_hj_residual_at(xi + 1.0, state, harmonic, 1.0, 1e-4).map_err(fail)?;
    ensure(
        worst <= 1e-6 && off > 1e-2,
        format!("on trajectory {worst:.3e}, off trajectory {off:.3e}"),
    )
}

fn schrodinger_solver() -> Outcome {
    let free = PotentialSpec::free(1.0).map_err(fail)?;
    let g = Grid1D::new(-20.0, 20.0, 1024).map_err(fail)?;
    let wf = init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0).map_err(fail)?;
    let out = split_step_evolve(&wf, &free, 1e-3, 1000).map_err(fail)?;
    let var = madelung_decompose(&out, default_eps_rho(&out))
        .map_err(fail)?
        .variance();
    let var_err = (var - 1.25).abs();

    let p = CoherentStateParams::new(1.0, 0.0, 1.0, 1.0, 1.0).map_err(fail)?;
    let pot = p.potential().map_err(fail)?;
    let g = Grid1D::new(-10.0, 10.0, 2048).map_err(fail)?;
    let wf = init_coherent_state(g, p).map_err(fail)?;
    let out = split_step_evolve(&wf, &pot, 2.0 * PI / 4096.0, 4096).map_err(fail)?;
    let ret = l2_distance(&wf.density(), &out.density(), &g);

    let p = CoherentStateParams::new(1.0, 0.5, 1.0, 1.0, 1.0).map_err(fail)?;
    let g = Grid1D::new(-10.0, 10.0, 512).map_err(fail)?;
    let wf = init_coherent_state(g, p).map_err(fail)?;
    let out = split_step_evolve(&wf, &pot, 1e-3, 10_000).map_err(fail)?;
    let drift = (out.norm() - wf.norm()).abs();
    ensure(
        var_err <= 1e-4 && ret <= 1e-6 && drift <= 1e-9,
        format!("variance error {var_err:.3e}, period return {ret:.3e}, norm drift {drift:.3e}"),
    )
}

fn coherent_residuals(n: usize, dt: f64, with_q: bool) -> Result<MadelungResidual, String> {
    let p = CoherentStateParams::new(1.0, 0.0, 1.0, 1.0, 1.0).map_err(fail)?;
    let pot = p.potential().map_err(fail)?;
    let g = Grid1D::new(-8.0, 8.0, n).map_err(fail)?;
    let wf = init_coherent_state(g, p).map_err(fail)?;
    let steps = (1.0 / dt).round() as usize;
    let snaps = split_step_snapshots(&wf, &pot, dt, steps + 1, 1).map_err(fail)?;
    let f: Vec<MadelungFields> = snaps[steps - 1..=steps + 1]
        .iter()
        .map(|w| madelung_decompose(w, default_eps_rho(w)))
        .collect::<Result<_, _>>()
        .map_err(fail)?;
    madelung_residual_with([&f[0], &f[1], &f[2]], dt, &pot, with_q).map_err(fail)
}

fn madelung_residuals() -> Outcome {
    let r = coherent_residuals(2048, 1e-4, true)?;
    let bare = coherent_residuals(2048, 1e-4, false)?;
    let coarse = coherent_residuals(1025, 2e-4, true)?;
    let fine = coherent_residuals(2049, 1e-4, true)?;
    let rp = coarse.phase / fine.phase;
    let rc = coarse.continuity / fine.continuity;
    let control = bare.phase / r.phase.max(1e-3);
    let ok = r.phase <= 1e-3
        && r.continuity <= 1e-3
        && (3.5..=4.5).contains(&rp)
        && (3.5..=4.5).contains(&rc)
        && control >= 10.0;
    ensure(
        ok,
        format!(
            "phase {:.3e}, continuity {:.3e}, refinement ratios {rp:.3}/{rc:.3}, control {control:.1}x",
            r.phase, r.continuity
        ),
    )
}

fn statistical_case() -> Outcome {
    let started = Instant::now();
    let pot = PotentialSpec::free(1.0).map_err(fail)?;
    let base = Grid1D::new(-16.0, 16.0, 513).map_err(fail)?;
    let hbars = [1.0, 0.5, 0.25, 0.125, 0.0625];
    let r = statistical_sweep(
        |x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt(),
        |x| x,
        &pot,
        base,
        &[1.0],
        &hbars,
        0.01,
    )
    .map_err(fail)?;
    let runtime = started.elapsed().as_secs_f64();
    let (slope_s, slope_rho) = r.orders().map_err(fail)?;
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    ensure(
        dec(&r.err_s) && dec(&r.err_rho) && runtime <= 300.0,
        format!(
            "err_S {:?}, err_rho {:?}, slopes {slope_s:.3}/{slope_rho:.3}, {runtime:.1} s",
            sci(&r.err_s),
            sci(&r.err_rho)
        ),
    )
}

fn sci(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x:.2e}")).collect()
}

fn deterministic_case() -> Outcome {
    let tpl = CoherentTemplate {
        x0: 1.0,
        v0: 0.0,
        omega: 1.0,
        mass: 1.0,
    };
    let grid = Grid1D::new(-8.0, 8.0, 1024).map_err(fail)?;
    let r = deterministic_sweep(tpl, FRAC_PI_4, &[1.0, 0.25, 0.0625], grid, 1e-3).map_err(fail)?;
    let ok = r.mean_err.iter().all(|&e| e <= 1e-3)
        && r.var_ratio.iter().all(|v| (0.99..=1.01).contains(v))
        && r.action_err.iter().all(|&e| e <= 1e-3);
    ensure(
        ok,
        format!(
            "mean {:?}, variance ratio {:?}, action {:?}",
            sci(&r.mean_err),
            r.var_ratio
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>(),
            sci(&r.action_err)
        ),
    )
}

fn bohm_equivariance() -> Outcome {
    let pot = PotentialSpec::free(1.0).map_err(fail)?;
    let g = Grid1D::new(-15.0, 15.0, 1024).map_err(fail)?;
    let wf = init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0).map_err(fail)?;
    let snaps = madelung_snapshots(&wf, &pot, 0.01, 100, 1).map_err(fail)?;
    let a = bohm_trajectories(&snaps, 100_000, 7).map_err(fail)?;
    let b = bohm_trajectories(&snaps, 100_000, 7).map_err(fail)?;
    let last = snaps.len() - 1;
    let l1 = histogram_l1(&a.positions_at(last), &snaps[last], 0.1);
    let identical = a
        .paths
        .iter()
        .zip(&b.paths)
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.paths.len() == b.paths.len();
    ensure(
        l1 <= 0.05 && identical,
        format!(
            "L1 {l1:.4} at t = {:.2}, rerun identical: {identical}",
            snaps[last].time
        ),
    )
}

const BIN: &str = env!("CARGO_BIN_EXE_semiclassical");

fn cli_run(args: &[&str]) -> Result<(Option<i32>, String), String> {
    let o = Command::new(BIN).args(args).output().map_err(fail)?;
    Ok((
        o.status.code(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    ))
}

fn write_config(dir: &Path, name: &str, text: &str) -> Result<String, String> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(fail)?;
    Ok(p.to_string_lossy().into_owned())
}

fn cli_contract() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let dir = tmp.path();
    let out = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut problems = Vec::new();

    let typo = write_config(
        dir,
        "typo.json",
        r#"{"hbra": 0.5, "grid": {"x_min": -10, "x_max": 10, "n": 256}, "time": {"t_end": 1}}"#,
    )?;
    let (code, err) = cli_run(&["schrodinger", "--config", &typo, "--output", &out("typo")])?;
    if code != Some(2) || !err.contains("hbra") {
        problems.push(format!("unknown key gave {code:?}"));
    }
    let asc = write_config(
        dir,
        "asc.json",
        r#"{"grid": {"x_min": -16, "x_max": 16, "n": 513}, "time": {"t_end": 1}, "hbars": [0.5, 1]}"#,
    )?;
    let (code, _) = cli_run(&["statistical_sweep", "--config", &asc])?;
    if code != Some(2) {
        problems.push(format!("ascending hbars gave {code:?}"));
    }
    let bad_n = write_config(
        dir,
        "n.json",
        r#"{"grid": {"x_min": -1, "x_max": 1, "n": 1.5}, "time": {"t_end": 1}}"#,
    )?;
    let (code, _) = cli_run(&["bohm", "--config", &bad_n])?;
    if code != Some(2) {
        problems.push(format!("fractional n gave {code:?}"));
    }

    let bohm = write_config(
        dir,
        "bohm.json",
        r#"{"grid": {"x_min": -15, "x_max": 15, "n": 512}, "time": {"t_end": 1, "dt": 0.01, "output_every": 10},
            "initial": {"type": "gaussian", "v0": 0.5}, "particles": 500, "seed": 11}"#,
    )?;
    let hopf = write_config(
        dir,
        "hopf.json",
        r#"{"potential": {"kind": "linear", "force": 2}, "grid": {"x_min": -10, "x_max": 10, "n": 401},
            "time": {"t_end": 1, "dt": 0.25}, "initial": {"type": "gaussian", "v0": 1}}"#,
    )?;
    for (mode, cfg, file) in [
        ("bohm", &bohm, "trajectories.csv"),
        ("hopf_lax", &hopf, "fields.csv"),
    ] {
        let mut bytes = Vec::new();
        for run in ["a", "b"] {
            let target = out(&format!("{mode}_{run}"));
            let (code, err) = cli_run(&[mode, "--config", cfg, "--output", &target])?;
            if code != Some(0) {
                problems.push(format!("{mode} exited {code:?}: {err}"));
                continue;
            }
            let data = Path::new(&target).join(file);
            let manifest = Path::new(&target).join("manifest.json");
            let written_last = match (fs::metadata(&data), fs::metadata(&manifest)) {
                (Ok(d), Ok(m)) => m.modified().map_err(fail)? >= d.modified().map_err(fail)?,
                _ => false,
            };
            if !written_last {
                problems.push(format!("{mode} manifest missing or stale"));
            }
            bytes.push(fs::read(&data).map_err(fail)?);
        }
        if bytes.len() == 2 && bytes[0] != bytes[1] {
            problems.push(format!("{mode} outputs differ between runs"));
        }
    }

    let coarse = write_config(
        dir,
        "coarse.json",
        r#"{"grid": {"x_min": -10, "x_max": 10, "n": 64}, "time": {"t_end": 0.1, "dt": 0.01},
            "initial": {"type": "gaussian", "v0": 8}}"#,
    )?;
    let (code, _) = cli_run(&[
        "schrodinger",
        "--config",
        &coarse,
        "--output",
        &out("coarse"),
    ])?;
    if code != Some(3) || dir.join("coarse").join("manifest.json").exists() {
        problems.push(format!("numeric failure gave {code:?}"));
    }

    if problems.is_empty() {
        Ok("validation exit 2, reproducible outputs, numeric exit 3, manifest last".into())
    } else {
        Err(problems.join("; "))
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("closed-form action", closed_form_action),
        ("Hopf-Lax oracle", hopf_lax_oracle),
        ("elementary solution", elementary_solution),
        ("min-plus algebra", minplus_suite),
        ("deterministic HJ residual", deterministic_residual),
        ("Schrodinger solver", schrodinger_solver),
        ("Madelung residuals", madelung_residuals),
        ("statistical limit", statistical_case),
        ("deterministic limit", deterministic_case),
        ("Bohm equivariance", bohm_equivariance),
        ("CLI contract", cli_contract),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag} {name} ({secs:.1} s): {detail}",
            i + 1
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
