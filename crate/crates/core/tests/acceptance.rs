//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quasispecies::dynamics::{self, map_g, ClassDistribution};
use quasispecies::landscape::FitnessLandscape;
use quasispecies::ldp::{self, cost_one_step, rate_multinomial};
use quasispecies::mutation::{genotype_lumping_oracle_row, LumpedMutationMatrix, MutationParams};
use quasispecies::stats::{self, cramer_bernoulli, fit_log_scaling, TwoSetChain};

// Tolerances and sizes, pinned.
const LUMPING_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-10;
const ITERATION_AGREEMENT: f64 = 1e-8;
const RANDOM_PAIRS: usize = 50;
const RATE_PAIRS: usize = 1000;
const RATE_ZERO_TOL: f64 = 1e-15;
const NEUTRAL_ELLS: [usize; 4] = [6, 8, 10, 12];
const NEUTRAL_REPLICAS: usize = 2000;
const NEUTRAL_SLOPE_BAND: f64 = 0.25;
const PERSISTENCE_MS: [u64; 5] = [10, 15, 20, 25, 30];
const PERSISTENCE_REPLICAS: usize = 1000;
const PERSISTENCE_SLOPE_BAND: f64 = 0.30;
const PSI_RESOLUTION: usize = 2000;
const SUPERCRITICAL_TOL: f64 = 0.05;
const SUBCRITICAL_MAX: f64 = 0.02;
const ONE_JUMP_BOUND: f64 = 0.405466;
const CRAMER_TOL: f64 = 1e-12;
const HITTING_TRIALS: usize = 10_000;
const SEED: u64 = 20_011_003;

type Criterion = Box<dyn Fn() -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let first = root.join("run1");
    let second = root.join("run2");
    for d in [&first, &second] {
        let _ = fs::remove_dir_all(d);
        fs::create_dir_all(d).expect("create output dir");
    }

    let criteria: Vec<(&str, Criterion)> = vec![
        ("lumping exactness", Box::new(lumping)),
        ("fixed-point closed form", Box::new(closed_form)),
        ("worked example (5,2,4), a=1", Box::new(worked_example)),
        ("rate-function zero set", Box::new(rate_zero_set)),
        (
            "neutral-phase discovery scaling",
            Box::new({
                let d = first.clone();
                move || neutral_scaling(&d)
            }),
        ),
        (
            "persistence-time exponent",
            Box::new({
                let d = first.clone();
                move || persistence_exponent(&d)
            }),
        ),
        (
            "dichotomy at desk scale",
            Box::new({
                let d = first.clone();
                move || dichotomy(&d)
            }),
        ),
        ("quasipotential sanity", Box::new(quasipotential_sanity)),
        (
            "Cramér transform and hitting-count bound",
            Box::new(hitting_bounds),
        ),
        (
            "determinism of experiment outputs",
            Box::new({
                let (a, b) = (first.clone(), second.clone());
                move || determinism(&a, &b)
            }),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = check();
        let secs = t.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {} ({secs:.1}s)", i + 1, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cli(args: &[String]) -> i32 {
    quasispecies::cli::run(std::iter::once("quasispecies".to_string()).chain(args.iter().cloned()))
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn lumping() -> Outcome {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for ell in 1..=8 {
        for kappa in [2, 3, 4] {
            for q in [0.05_f64, 0.25, 0.5] {
                let params = MutationParams::new(ell, kappa, q).unwrap();
                let lumped = LumpedMutationMatrix::new(params).unwrap();
                for k in 0..=ell {
                    let oracle = genotype_lumping_oracle_row(&params, k).unwrap();
                    for (x, y) in oracle.iter().zip(lumped.row(k)) {
                        worst = worst.max((x - y).abs());
                    }
                }
                cases += 1;
            }
        }
    }
    Outcome::new(
        worst <= LUMPING_TOL,
        format!("{cases} (ell,kappa,q) cases, max |diff| = {worst:.2e} (tol {LUMPING_TOL:e})"),
    )
}

/// Random landscape and intensity, kept away from bifurcation points where
/// `A(h) e^{-a}` is close to 1 or two fitness values nearly tie.
fn random_case(rng: &mut ChaCha8Rng) -> (FitnessLandscape<f64>, f64) {
    loop {
        let k = rng.random_range(0..=6);
        let master: f64 = rng.random_range(1.5..12.0);
        let mut values = vec![master];
        for _ in 0..k {
            values.push(rng.random_range(0.2..master));
        }
        let a = rng.random_range(0.05..master.ln() + 0.5);
        let far_from_one = values.iter().all(|v| (v * (-a).exp() - 1.0).abs() > 0.05);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let separated = sorted.windows(2).all(|w| w[1] - w[0] > 0.05);
        let trailing_ok = (values[k] - 1.0).abs() > 0.05;
        if far_from_one && separated && trailing_ok {
            if let Ok(land) = FitnessLandscape::new(values) {
                return (land, a);
            }
        }
    }
}

fn closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_residual = 0.0_f64;
    let mut worst_gap = 0.0_f64;
    let mut points = 0;
    for _ in 0..RANDOM_PAIRS {
        let (land, a) = random_case(&mut rng);
        let k = land.k();
        for fp in dynamics::fixed_points(a, &land).unwrap() {
            worst_residual = worst_residual.max(fp.residual);
            // Inside the basin: zeros below b, positive mass at b.
            let mut start = vec![0.0; k + 1];
            if fp.b <= k {
                start[fp.b] = 0.05;
            }
            let r0 = ClassDistribution::truncated(start).unwrap();
            let (lim, _) =
                dynamics::iterate_to_fixed_point(&r0, a, &land, 1e-15, 50_000_000).unwrap();
            worst_gap = worst_gap.max(lim.l1_distance(&fp.rho));
            points += 1;
        }
    }
    Outcome::new(
        worst_residual <= RESIDUAL_TOL && worst_gap <= ITERATION_AGREEMENT,
        format!(
            "{RANDOM_PAIRS} pairs, {points} fixed points, max residual {worst_residual:.2e}, max |iterate - closed form| {worst_gap:.2e}"
        ),
    )
}

fn worked_example() -> Outcome {
    let land = FitnessLandscape::new(vec![5.0, 2.0, 4.0]).unwrap();
    let a = 1.0;
    let fps = dynamics::fixed_points(a, &land).unwrap();
    let indices: Vec<usize> = fps.iter().map(|f| f.b).collect();
    let zero_last = fps.last().map(|f| f.rho.mass() == 0.0).unwrap_or(false);
    let iterate = |w: [f64; 3]| {
        let r0 = ClassDistribution::truncated(w.to_vec()).unwrap();
        dynamics::iterate_to_fixed_point(&r0, a, &land, 1e-14, 10_000_000)
            .unwrap()
            .0
    };
    let eps = 1e-3;
    let to_rho0 = iterate([eps, 0.3, 0.2]).l1_distance(&fps[0].rho);
    let to_rho2 = iterate([0.0, eps, 0.2]).l1_distance(&fps[1].rho);
    let stays = iterate([0.0, 0.0, 0.0]).mass();
    let pass =
        indices == [0, 2, 3] && zero_last && to_rho0 < 1e-8 && to_rho2 < 1e-8 && stays == 0.0;
    Outcome::new(
        pass,
        format!(
            "index set {indices:?}; |lim - rho^0| = {to_rho0:.1e}, |lim - rho^2| = {to_rho2:.1e}, origin mass {stays}"
        ),
    )
}

fn random_point(rng: &mut ChaCha8Rng, len: usize) -> ClassDistribution<f64> {
    // Uniform weights scaled to a random total mass in [0, 1).
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mass = rng.random::<f64>();
    ClassDistribution::truncated(raw.iter().map(|x| x / total * mass).collect()).unwrap()
}

fn rate_zero_set() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let mut max_on = 0.0_f64;
    let mut min_off = f64::INFINITY;
    for _ in 0..RATE_PAIRS {
        let k = rng.random_range(0..=3);
        let land = {
            let mut v: Vec<f64> = vec![rng.random_range(1.5..8.0)];
            for _ in 0..k {
                v.push(rng.random_range(0.3..v[0] * 0.95));
            }
            if (v[k] - 1.0).abs() < 1e-3 {
                v[k] = 0.5;
            }
            FitnessLandscape::new(v).unwrap()
        };
        let a = rng.random_range(0.05..2.0);
        let r = random_point(&mut rng, k + 1);
        let t = random_point(&mut rng, k + 1);
        let g = map_g(&r, a, &land).unwrap();
        max_on = max_on.max(cost_one_step(&r, &g, a, &land).unwrap());
        if t.l1_distance(&g) > 0.0 {
            min_off = min_off.min(cost_one_step(&r, &t, a, &land).unwrap());
        }
    }
    Outcome::new(
        max_on <= RATE_ZERO_TOL && min_off > 0.0,
        format!("{RATE_PAIRS} pairs, max V1(r,G(r)) = {max_on:.1e}, min V1(r,t) off G(r) = {min_off:.2e}"),
    )
}

#[derive(serde::Deserialize)]
struct HittingRow {
    value: f64,
    censored: bool,
}

fn read_csv_values(path: &Path) -> (Vec<f64>, usize) {
    let mut reader = csv::Reader::from_path(path).expect("open csv");
    let rows: Vec<HittingRow> = reader.deserialize().map(|r| r.expect("csv row")).collect();
    let censored = rows.iter().filter(|r| r.censored).count();
    (rows.into_iter().map(|r| r.value).collect(), censored)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn neutral_commands(dir: &Path) -> Vec<Vec<String>> {
    NEUTRAL_ELLS
        .iter()
        .map(|ell| {
            let mut a = args(&[
                "--seed",
                &SEED.to_string(),
                "hitting-time",
                "--kind",
                "tau-star",
                "--class",
                "0",
            ]);
            a.extend(args(&[
                "--ell",
                &ell.to_string(),
                "--m",
                &ell.to_string(),
                "--kappa",
                "2",
                "--a",
                "1",
                "--replicas",
                &NEUTRAL_REPLICAS.to_string(),
                "--cap",
                "1e9",
                "--out",
            ]));
            a.push(
                dir.join(format!("neutral_ell{ell}.csv"))
                    .display()
                    .to_string(),
            );
            a
        })
        .collect()
}

fn neutral_scaling(dir: &Path) -> Outcome {
    let mut points = Vec::new();
    for (ell, cmd) in NEUTRAL_ELLS.iter().zip(neutral_commands(dir)) {
        if cli(&cmd) != 0 {
            return Outcome::new(false, format!("hitting-time failed for ell={ell}"));
        }
        let (values, censored) = read_csv_values(&dir.join(format!("neutral_ell{ell}.csv")));
        if censored > 0 {
            return Outcome::new(false, format!("{censored} censored replicas at ell={ell}"));
        }
        points.push((*ell as f64, mean(&values)));
    }
    let fit = fit_log_scaling(&points).unwrap();
    let target = 2f64.ln();
    let rel = (fit.slope - target).abs() / target;
    Outcome::new(
        rel <= NEUTRAL_SLOPE_BAND,
        format!(
            "slope {:.4} vs ln 2 = {target:.4} (rel. error {:.1}%, band {:.0}%), means {:?}",
            fit.slope,
            rel * 100.0,
            NEUTRAL_SLOPE_BAND * 100.0,
            points.iter().map(|p| p.1.round()).collect::<Vec<_>>()
        ),
    )
}

fn persistence_commands(dir: &Path) -> Vec<Vec<String>> {
    let a = 2f64.ln().to_string();
    PERSISTENCE_MS
        .iter()
        .map(|m| {
            let mut c = args(&[
                "--seed",
                &SEED.to_string(),
                "hitting-time",
                "--kind",
                "tau0",
            ]);
            c.extend(args(&[
                "--fitness",
                "4",
                "--ell",
                "100",
                "--kappa",
                "2",
                "--a",
                &a,
                "--m",
                &m.to_string(),
                "--start",
                "fixed-point:0",
                "--replicas",
                &PERSISTENCE_REPLICAS.to_string(),
                "--cap",
                "1e9",
                "--out",
            ]));
            c.push(
                dir.join(format!("persistence_m{m}.csv"))
                    .display()
                    .to_string(),
            );
            c
        })
        .collect()
}

fn persistence_exponent(dir: &Path) -> Outcome {
    let land = FitnessLandscape::sharp_peak(4.0).unwrap();
    let psi = ldp::psi(2f64.ln(), &land, PSI_RESOLUTION).unwrap();
    let mut points = Vec::new();
    for (m, cmd) in PERSISTENCE_MS.iter().zip(persistence_commands(dir)) {
        if cli(&cmd) != 0 {
            return Outcome::new(false, format!("hitting-time failed for m={m}"));
        }
        let (values, censored) = read_csv_values(&dir.join(format!("persistence_m{m}.csv")));
        if censored > 0 {
            return Outcome::new(false, format!("{censored} censored replicas at m={m}"));
        }
        points.push((*m as f64, mean(&values)));
    }
    let fit = fit_log_scaling(&points).unwrap();
    let rel = (fit.slope - psi).abs() / psi;
    Outcome::new(
        fit.slope > 0.0 && rel <= PERSISTENCE_SLOPE_BAND,
        format!(
            "slope {:.4} vs psi(ln 2) = {psi:.4} (rel. error {:.1}%, band {:.0}%)",
            fit.slope,
            rel * 100.0,
            PERSISTENCE_SLOPE_BAND * 100.0
        ),
    )
}

fn dichotomy_configs(dir: &Path) -> [(PathBuf, PathBuf); 2] {
    let body = |q: f64| {
        format!(
            "ell = 100\nkappa = 2\nq = {q}\nm = 2000\nfitness = [10.0]\nseed = {SEED}\nhorizon = 5000\nburn_in = 500\nreplicas = 4\nstart = \"master\"\n"
        )
    };
    let sup = dir.join("supercritical.toml");
    let sub = dir.join("subcritical.toml");
    fs::write(&sup, body(0.003)).unwrap();
    fs::write(&sub, body(0.03)).unwrap();
    [
        (sup, dir.join("supercritical.json")),
        (sub, dir.join("subcritical.json")),
    ]
}

fn dichotomy_commands(dir: &Path) -> Vec<Vec<String>> {
    dichotomy_configs(dir)
        .iter()
        .map(|(cfg, out)| {
            args(&[
                "simulate",
                "--config",
                &cfg.display().to_string(),
                "--out",
                &out.display().to_string(),
            ])
        })
        .collect()
}

fn class0_mean(path: &Path) -> f64 {
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    doc["mean"][0].as_f64().unwrap()
}

fn dichotomy(dir: &Path) -> Outcome {
    for cmd in dichotomy_commands(dir) {
        if cli(&cmd) != 0 {
            return Outcome::new(false, "simulate failed");
        }
    }
    let land = FitnessLandscape::sharp_peak(10.0).unwrap();
    let rho00 = dynamics::fixed_point_closed_form(0, 0.3, &land)
        .unwrap()
        .rho
        .weights()[0];
    let sup = class0_mean(&dir.join("supercritical.json"));
    let sub = class0_mean(&dir.join("subcritical.json"));
    Outcome::new(
        (sup - rho00).abs() <= SUPERCRITICAL_TOL && sub < SUBCRITICAL_MAX,
        format!(
            "a=0.3: {sup:.4} vs rho^0_0 = {rho00:.4} (tol {SUPERCRITICAL_TOL}); a=3: {sub:.2e} (< {SUBCRITICAL_MAX})"
        ),
    )
}

fn quasipotential_sanity() -> Outcome {
    let land = FitnessLandscape::sharp_peak(4.0).unwrap();
    let threshold = land.error_threshold();
    let beyond = [threshold, threshold + 1e-9, 1.5, 3.0];
    let zero_beyond = beyond
        .iter()
        .all(|&a| ldp::psi(a, &land, PSI_RESOLUTION).unwrap() == 0.0);
    let a = 2f64.ln();
    let mut values = Vec::new();
    for res in [250, 500, 1000, PSI_RESOLUTION] {
        values.push(ldp::quasipotential(a, &land, res).unwrap().value);
    }
    let v = *values.last().unwrap();
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);
    Outcome::new(
        zero_beyond && v > 0.0 && v <= ONE_JUMP_BOUND && monotone,
        format!(
            "psi = 0 beyond ln 4: {zero_beyond}; V at 250/500/1000/2000 = {}",
            values
                .iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join("/")
        ),
    )
}

fn hitting_bounds() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        for j in 1..20 {
            let p = j as f64 / 20.0;
            let c = cramer_bernoulli(t, p).unwrap();
            let pd = ClassDistribution::truncated(vec![p]).unwrap();
            let td = ClassDistribution::truncated(vec![t]).unwrap();
            let r = rate_multinomial(&pd, &td).unwrap();
            worst = worst.max((c - r).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tight = TwoSetChain::tight(0.3, 50);
    let first = stats::hitting_count_bound_check(5, 0.6, &tight, HITTING_TRIALS, &mut rng).unwrap();
    let long = TwoSetChain {
        p: 0.3,
        window: 50,
        slow_exit: 5 * 50,
    };
    let second = stats::hitting_count_bound_check(5, 1.0, &long, HITTING_TRIALS, &mut rng).unwrap();
    Outcome::new(
        worst <= CRAMER_TOL && first.holds && second.holds,
        format!(
            "max |Lambda* - I_0| = {worst:.1e}; bound checks: freq {:.4} <= {:.4}, freq {:.4} <= {:.4}",
            first.frequency, first.bound, second.frequency, second.bound
        ),
    )
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let mut commands = neutral_commands(second);
    commands.extend(persistence_commands(second));
    commands.extend(dichotomy_commands(second));
    for cmd in &commands {
        if cli(cmd) != 0 {
            return Outcome::new(false, "rerun failed");
        }
    }
    let mut compared = 0;
    let mut names: Vec<_> = fs::read_dir(first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| {
            let n = n.to_string_lossy();
            n.ends_with(".csv") || n.ends_with(".json")
        })
        .collect();
    names.sort();
    for name in &names {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap_or_default();
        if a != b {
            return Outcome::new(
                false,
                format!("{} differs between runs", name.to_string_lossy()),
            );
        }
        compared += 1;
    }
    Outcome::new(
        compared == 11,
        format!("{compared} output files byte-identical across reruns"),
    )
}
