//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line to the
//! uncaptured stdout and asserts on the same verdict.

use std::io::Write;
use std::sync::OnceLock;

use staticnoise::generator::{asymptotic_state, short_time_rhs, PerturbativeGenerator, TimeGrid, Trajectory};
use staticnoise::models::{BoseHubbardModel, Coupling, LatticeModel, ModelBundle, QubitModel};
use staticnoise::noise::{GaussianScalar, NoiseModel};
use staticnoise::ode::Stepper;
use staticnoise::oracle::{AveragedTrajectory, EnsembleSampler, Execution};
use staticnoise::quantum::fidelity;
use staticnoise::rates::{gamma_big, gamma_big_partner, gamma_small, GammaMode, SpectralData};
use staticnoise::validation::{
    dynamical_matrix, inverse_residual, neumann_inverse, numeric_q, unperturbed_dynamical_matrix,
};
use staticnoise::{CMatrix, DensityMatrix, C64};

// criterion 1
const LATTICE_D: usize = 30;
const LATTICE_T_MAX: f64 = 4.0;
const C_INF_REL_TOL: f64 = 0.05;

// criteria 2 and 3
const N_REAL: usize = 100_000;
const MC_DT: f64 = 0.05;
const MIN_FIDELITY: f64 = 0.999;
const PURITY_PEAK_WINDOW: (f64, f64) = (1.5, 2.5);
const PURITY_MAX_DEV: f64 = 0.10;
const PURITY_LATE_START: f64 = 3.5;
const PURITY_LATE_SIGMAS: f64 = 3.0;

// criterion 4
const QUBIT_T_MAX: f64 = 5.0;
const QUBIT_DT: f64 = 0.01;
const QUBIT_SIGMAS: f64 = 3.0;
const QUBIT_ASYMPTOTE_TOL: f64 = 1e-3;

// criterion 5
const BOSON_T_MAX: f64 = 30.0;
const BOSON_DT: f64 = 0.02;
const BOSON_PLATEAU: f64 = 4.87e-3;
const BOSON_PLATEAU_TOL: f64 = 0.10;
const BOSON_PLATEAU_FROM: f64 = 25.0;
const BOSON_DECAY_RATIO: f64 = 5.0;
const BOSON_VANISH: f64 = 0.01;

// criterion 6
const TRACE_TOL: f64 = 1e-8;
const HERMITICITY_TOL: f64 = 1e-9;
const UNITALITY_TOL: f64 = 1e-9;
const ANTISYMMETRY_TOL: f64 = 1e-10;
const DEPHASING_TOL: f64 = 1e-7;
const SHORT_TIME_T: f64 = 1e-3;
const SHORT_TIME_REL_TOL: f64 = 1e-4;

// criterion 7
const Q_SAMPLES: usize = 1_000_000;
const Q_STEP: f64 = 0.02;
const Q_SIGMAS: f64 = 4.0;
const Q_FLOOR: f64 = 1e-9;
const NEUMANN_ALPHA: f64 = 0.05;
const NEUMANN_T: f64 = 0.3;
const NEUMANN_MAX_ORDER: usize = 6;

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{verdict}] criterion {criterion}: {detail}").unwrap();
    out.flush().unwrap();
}

fn info(criterion: &str, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "[INFO] criterion {criterion}: {detail}").unwrap();
    out.flush().unwrap();
}

fn adaptive() -> Stepper {
    Stepper::Adaptive { rel_tol: 1e-10, abs_tol: 1e-12 }
}

fn lattice(coupling: Coupling) -> ModelBundle {
    LatticeModel { d: LATTICE_D, tilt: 10.0, sigma: 1.0, alpha: 1.0, coupling }.build().unwrap()
}

fn qubit() -> QubitModel {
    QubitModel { lambda0: 10.0, sigma: 1.0, alpha: 1.0 }
}

fn bosons() -> BoseHubbardModel {
    BoseHubbardModel { n: 3, hopping: 1.0, u0: 1.0, tilt: 10.0, sigma: 1.0, alpha: 1.0 }
}

fn solve(bundle: &ModelBundle, t_max: f64, dt: f64) -> Trajectory {
    let gen = PerturbativeGenerator::new(&bundle.ensemble, bundle.gamma_mode).unwrap();
    gen.integrate(&bundle.rho0, &TimeGrid::uniform(t_max, dt, adaptive()).unwrap()).unwrap()
}

/// Total coherence per site.
fn coherence_per_site(rho: &DensityMatrix) -> f64 {
    rho.total_coherence() / rho.dim() as f64
}

#[test]
fn criterion_1_lattice_asymptotic_coherence() {
    let cases = [
        (Coupling::PowerLaw(0.0), 15.1e-3),
        (Coupling::PowerLaw(1.0), 4.1e-3),
        (Coupling::PowerLaw(3.0), 1.6e-3),
        (Coupling::NearestNeighbour, 1.4e-3),
    ];
    let mut all = true;
    for (coupling, want) in cases {
        let bundle = lattice(coupling);
        let traj = solve(&bundle, LATTICE_T_MAX, 0.05);
        let plateau = coherence_per_site(traj.last());
        let h_bar = bundle.ensemble.mean_hamiltonian();
        let asym = coherence_per_site(&asymptotic_state(&h_bar, &bundle.rho0).unwrap());
        let rel_p = (plateau - want).abs() / want;
        let rel_a = (asym - want).abs() / want;
        let pass = rel_p <= C_INF_REL_TOL && rel_a <= C_INF_REL_TOL;
        all &= pass;
        report(
            &format!("1 [{}]", coupling.label()),
            pass,
            &format!("c(t={LATTICE_T_MAX}) = {plateau:.4e}, asymptotic_state = {asym:.4e}, target {want:.2e}, rel. dev {rel_p:.3}/{rel_a:.3} (tol {C_INF_REL_TOL})"),
        );
    }
    assert!(all);
}

struct LatticeComparison {
    label: String,
    times: Vec<f64>,
    me: Trajectory,
    mc: AveragedTrajectory,
}

fn lattice_comparisons() -> &'static [LatticeComparison] {
    static RUNS: OnceLock<Vec<LatticeComparison>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [Coupling::PowerLaw(0.0), Coupling::PowerLaw(1.0)]
            .into_iter()
            .map(|coupling| {
                let bundle = lattice(coupling);
                let me = solve(&bundle, LATTICE_T_MAX, MC_DT);
                let times = me.times.clone();
                let sampler = EnsembleSampler::new(bundle.ensemble.clone(), 20_240_611);
                let mc = sampler.average(&bundle.rho0, &times, N_REAL, Execution::Parallel).unwrap();
                LatticeComparison { label: coupling.label(), times, me, mc }
            })
            .collect()
    })
}

#[test]
fn criterion_2_lattice_fidelity_against_oracle() {
    let mut all = true;
    for run in lattice_comparisons() {
        let (mut worst, mut at) = (f64::INFINITY, 0.0);
        for (i, mc) in run.mc.states().iter().enumerate() {
            let f = fidelity(&run.me.states[i], mc).unwrap();
            if f < worst {
                worst = f;
                at = run.times[i];
            }
        }
        let pass = worst >= MIN_FIDELITY;
        all &= pass;
        report(
            &format!("2 [{}]", run.label),
            pass,
            &format!("min fidelity {worst:.6} at t = {at:.2} (need >= {MIN_FIDELITY}, N = {N_REAL})"),
        );
    }
    assert!(all);
}

/// Standard error of `Tr ρ²` from the per-element errors, to first order.
fn purity_stderr(mean: &CMatrix, se_re: &nalgebra::DMatrix<f64>, se_im: &nalgebra::DMatrix<f64>) -> f64 {
    let mut var = 0.0;
    let d = mean.nrows();
    for j in 0..d {
        for k in j..d {
            let w = if j == k { 2.0 } else { 4.0 };
            let z = mean[(j, k)];
            var += w * w * (z.re * z.re * se_re[(j, k)].powi(2) + z.im * z.im * se_im[(j, k)].powi(2));
        }
    }
    var.sqrt()
}

#[test]
fn criterion_3_relative_purity_deviation() {
    let mut all = true;
    for run in lattice_comparisons() {
        let me = run.me.purity();
        let mut dev = Vec::with_capacity(me.len());
        let mut late_ok = true;
        let mut late_worst = 0.0f64;
        let mc_states = run.mc.states();
        for (i, &t) in run.times.iter().enumerate() {
            let p_mc = mc_states[i].purity();
            dev.push((me[i] / p_mc - 1.0).abs());
            if t >= PURITY_LATE_START {
                let se = purity_stderr(&run.mc.mean[i], &run.mc.stderr_re[i], &run.mc.stderr_im[i]);
                // E[Tr ρ̂²] carries a positive bias of Σ Var(ρ̂_jk)
                let bias: f64 = run.mc.stderr_re[i].iter().chain(run.mc.stderr_im[i].iter()).map(|s| s * s).sum();
                let gap = (me[i] - p_mc).abs();
                late_worst = late_worst.max(gap / (PURITY_LATE_SIGMAS * se + bias));
                late_ok &= gap <= PURITY_LATE_SIGMAS * se + bias;
            }
        }
        let (imax, &peak) = dev.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let t_peak = run.times[imax];
        let in_window = (PURITY_PEAK_WINDOW.0..=PURITY_PEAK_WINDOW.1).contains(&t_peak);
        let pass = in_window && peak <= PURITY_MAX_DEV && late_ok;
        all &= pass;
        report(
            &format!("3 [{}]", run.label),
            pass,
            &format!(
                "peak |P_ME/P_MC - 1| = {peak:.4} at t = {t_peak:.2} (window {:?}, max {PURITY_MAX_DEV}); late gap / ({PURITY_LATE_SIGMAS} SE + bias) = {late_worst:.2}",
                PURITY_PEAK_WINDOW
            ),
        );
    }
    assert!(all);
}

#[test]
fn criterion_4_qubit_decay_and_asymptote() {
    let model = qubit();
    let bundle = model.build().unwrap();
    let me = solve(&bundle, QUBIT_T_MAX, QUBIT_DT);
    let sampler = EnsembleSampler::new(bundle.ensemble.clone(), 7_310_052);
    let mc = sampler.average(&bundle.rho0, &me.times, N_REAL, Execution::Parallel).unwrap();
    let me12 = me.element(0, 1);
    let mc12 = mc.element(0, 1);
    let (mut worst, mut at, mut misses) = (0.0f64, 0.0, 0usize);
    for i in 1..me.times.len() {
        let z = (me12[i].re - mc12[i].re).abs() / mc.stderr_re[i][(0, 1)];
        if z > QUBIT_SIGMAS {
            misses += 1;
        }
        if z > worst {
            worst = z;
            at = me.times[i];
        }
    }
    let exact = PerturbativeGenerator::new(&bundle.ensemble, GammaMode::Exact)
        .unwrap()
        .integrate(&bundle.rho0, &TimeGrid::uniform(QUBIT_T_MAX, QUBIT_DT, adaptive()).unwrap())
        .unwrap();
    let exact_worst = (1..exact.times.len())
        .map(|i| (exact.states[i].get(0, 1).re - mc12[i].re).abs() / mc.stderr_re[i][(0, 1)])
        .fold(0.0f64, f64::max);
    let h_bar = bundle.ensemble.mean_hamiltonian();
    let asym = asymptotic_state(&h_bar, &bundle.rho0).unwrap().get(0, 1).re;
    let end = me12.last().unwrap().re;
    let pointwise = misses == 0;
    let asymptote = (end - asym).abs() <= QUBIT_ASYMPTOTE_TOL;
    report(
        "4 [pointwise]",
        pointwise,
        &format!(
            "max |ΔRe ρ12|/SE = {worst:.2} at t = {at:.2}, {misses} of {} samples beyond {QUBIT_SIGMAS} SE",
            me.times.len() - 1
        ),
    );
    info("4 [pointwise]", &format!("with exact rates the largest deviation is {exact_worst:.2} SE"));
    report(
        "4 [asymptote]",
        asymptote,
        &format!("Re ρ12(5) = {end:.5}, asymptotic Re ρ12 = {asym:.5} (tol {QUBIT_ASYMPTOTE_TOL})"),
    );
    assert!(pointwise && asymptote);
}

/// First time `|x(t)|` drops to `|x(0)|/e`.
fn show(tau: Option<f64>) -> String {
    tau.map_or_else(|| "never".to_string(), |t| format!("{t:.3}"))
}

fn e_folding_time(times: &[f64], x: &[C64]) -> Option<f64> {
    let level = x[0].norm() / std::f64::consts::E;
    let i = x.iter().position(|z| z.norm() <= level)?;
    let (a, b) = (x[i - 1].norm(), x[i].norm());
    Some(times[i - 1] + (times[i] - times[i - 1]) * (a - level) / (a - b))
}

#[test]
fn criterion_5_boson_coherence_hierarchy() {
    let bundle = bosons().build().unwrap();
    let me = solve(&bundle, BOSON_T_MAX, BOSON_DT);
    let r12 = me.element(0, 1);
    let r14 = me.element(0, 3);
    let tail: Vec<f64> =
        me.times.iter().zip(&r12).filter(|(t, _)| **t >= BOSON_PLATEAU_FROM).map(|(_, z)| z.norm()).collect();
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let plateau_ok = (plateau - BOSON_PLATEAU).abs() / BOSON_PLATEAU <= BOSON_PLATEAU_TOL;
    let tau12 = e_folding_time(&me.times, &r12);
    let tau14 = e_folding_time(&me.times, &r14);
    let ratio = match (tau12, tau14) {
        (Some(a), Some(b)) => b / a,
        _ => f64::NAN,
    };
    let ratio_ok = ratio >= BOSON_DECAY_RATIO;
    let vanish = r14.last().unwrap().norm() / r14[0].norm();
    let vanish_ok = vanish <= BOSON_VANISH;
    report("5 [plateau]", plateau_ok, &format!("mean |ρ12| on [{BOSON_PLATEAU_FROM}, {BOSON_T_MAX}] = {plateau:.4e}, target {BOSON_PLATEAU:.2e} ± {BOSON_PLATEAU_TOL}"));
    report(
        "5 [hierarchy]",
        ratio_ok,
        &format!("τ12 = {}, τ14 = {}, ratio {ratio:.2} (need >= {BOSON_DECAY_RATIO})", show(tau12), show(tau14)),
    );
    report("5 [vanish]", vanish_ok, &format!("|ρ14({BOSON_T_MAX})|/|ρ14(0)| = {vanish:.2e} (need <= {BOSON_VANISH})"));
    assert!(plateau_ok && ratio_ok && vanish_ok);
}

fn small_bundles() -> Vec<ModelBundle> {
    vec![
        qubit().build().unwrap(),
        LatticeModel { d: 8, tilt: 10.0, sigma: 1.0, alpha: 1.0, coupling: Coupling::PowerLaw(1.0) }.build().unwrap(),
        bosons().build().unwrap(),
    ]
}

#[test]
fn criterion_6_property_suite() {
    let mut all = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        all &= pass;
        report(&format!("6 [{name}]"), pass, &detail);
    };

    let (mut trace_err, mut herm_err, mut unital_err) = (0.0f64, 0.0f64, 0.0f64);
    for bundle in small_bundles() {
        let traj = solve(&bundle, 3.0, 0.05);
        trace_err = trace_err.max(traj.max_trace_error);
        herm_err = herm_err.max(traj.max_hermiticity_error);
        let d = bundle.ensemble.dim();
        let gen = PerturbativeGenerator::new(&bundle.ensemble, bundle.gamma_mode).unwrap();
        let mixed = DensityMatrix::maximally_mixed(d);
        let flat = gen.integrate(&mixed, &TimeGrid::uniform(3.0, 0.5, adaptive()).unwrap()).unwrap();
        for s in &flat.states {
            unital_err = unital_err.max((s.matrix() - mixed.matrix()).norm());
        }
        for &t in &[0.1, 0.7, 2.0] {
            unital_err = unital_err.max(gen.rhs(t, mixed.matrix()).norm());
        }
    }
    check("trace", trace_err <= TRACE_TOL, format!("max |Tr ρ - 1| = {trace_err:.2e} (tol {TRACE_TOL:e})"));
    check(
        "hermiticity",
        herm_err <= HERMITICITY_TOL,
        format!("max |ρ - ρ†| = {herm_err:.2e} (tol {HERMITICITY_TOL:e})"),
    );
    check(
        "unitality",
        unital_err <= UNITALITY_TOL,
        format!("max |ρ(t) - Id/d| = {unital_err:.2e} (tol {UNITALITY_TOL:e})"),
    );

    let mut anti = 0.0f64;
    for bundle in small_bundles() {
        let sd = bundle.ensemble.spectral();
        let d = sd.dim();
        for &t in &[0.05, 0.4, 1.3, 3.0] {
            for j in 0..d {
                for k in 0..d {
                    if j == k {
                        continue;
                    }
                    for mode in [GammaMode::Full, GammaMode::Envelope, GammaMode::Exact] {
                        let a = gamma_small(sd, j, k, t, mode).unwrap();
                        let b = gamma_small(sd, k, j, t, mode).unwrap();
                        anti = anti.max((a + b.conj()).norm());
                    }
                    for r in 0..d {
                        if r == j || r == k {
                            continue;
                        }
                        let a = gamma_big(sd, j, k, r, t).unwrap();
                        let b = gamma_big_partner(sd, k, j, r, t).unwrap();
                        anti = anti.max((a + b.conj()).norm());
                    }
                }
            }
        }
    }
    check(
        "antisymmetry",
        anti <= ANTISYMMETRY_TOL,
        format!("max |γ_jk + γ*_kj|, |Γ_jkrj + Γ*_kjjr| = {anti:.2e} (tol {ANTISYMMETRY_TOL:e})"),
    );

    let mut dephase = 0.0f64;
    for bundle in small_bundles() {
        let sd = bundle.ensemble.spectral().clone();
        let v = bundle.ensemble.perturbation().clone();
        let ens = staticnoise::ensemble::HamiltonianEnsemble::new(sd.clone(), v, 0.0).unwrap();
        for mode in [GammaMode::Full, GammaMode::Envelope] {
            let gen = PerturbativeGenerator::new(&ens, mode).unwrap();
            let traj = gen.integrate(&bundle.rho0, &TimeGrid::uniform(3.0, 0.1, adaptive()).unwrap()).unwrap();
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let d = sd.dim();
                for j in 0..d {
                    for k in 0..d {
                        let want = if j == k {
                            bundle.rho0.get(j, k)
                        } else {
                            let w = C64::new(-0.5 * sd.pair_variance(j, k) * t * t, -sd.splitting(j, k) * t);
                            bundle.rho0.get(j, k) * w.exp()
                        };
                        dephase = dephase.max((s.get(j, k) - want).norm());
                    }
                }
            }
        }
    }
    check(
        "pure dephasing",
        dephase <= DEPHASING_TOL,
        format!("max |ρ_ME - ρ_closed| at α = 0: {dephase:.2e} (tol {DEPHASING_TOL:e})"),
    );

    let mut iid = 0.0f64;
    let noise = NoiseModel::iid(6, GaussianScalar::new(0.3, 0.8).unwrap()).unwrap();
    let sd = SpectralData::new((0..6).map(|j| 3.0 * j as f64 + 0.1 * (j * j) as f64).collect(), noise).unwrap();
    for &t in &[0.0, 0.2, 1.0, 5.0] {
        for j in 0..6 {
            for k in 0..6 {
                for r in 0..6 {
                    if j != k && r != j && r != k {
                        iid = iid.max(gamma_big(&sd, j, k, r, t).unwrap().norm());
                    }
                }
            }
        }
    }
    check("iid", iid == 0.0, format!("max |Γ| under i.i.d. noise = {iid:e}"));

    let mut short = 0.0f64;
    for bundle in small_bundles() {
        let gen = PerturbativeGenerator::new(&bundle.ensemble, bundle.gamma_mode).unwrap();
        let h_bar = bundle.ensemble.mean_hamiltonian();
        let cov = bundle.ensemble.covariance();
        let d = bundle.ensemble.dim();
        let mut probes = vec![bundle.rho0.matrix().clone()];
        probes.push(CMatrix::from_fn(d, d, |j, k| {
            C64::new(1.0 / (1.0 + (j + 2 * k) as f64), 0.3 * (j as f64 - k as f64))
        }));
        for rho in probes {
            let full = gen.rhs(SHORT_TIME_T, &rho);
            let approx = short_time_rhs(&h_bar, &cov, SHORT_TIME_T, &rho).unwrap();
            short = short.max((&full - &approx).norm() / full.norm());
        }
    }
    check(
        "short time",
        short <= SHORT_TIME_REL_TOL,
        format!("max relative gap at t = {SHORT_TIME_T:e}: {short:.2e} (tol {SHORT_TIME_REL_TOL:e})"),
    );
    assert!(all);
}

/// Per generator mode, the largest `|Q_num - Q_gen|` over the allowed error
/// and where it occurs.
fn q_scores(bundle: &ModelBundle, modes: &[GammaMode]) -> Vec<(f64, f64)> {
    let gens: Vec<_> = modes.iter().map(|&m| PerturbativeGenerator::new(&bundle.ensemble, m).unwrap()).collect();
    let mut out = vec![(0.0f64, 0.0); modes.len()];
    for step in 1..=10 {
        let t = 0.1 * step as f64;
        let est = numeric_q(&bundle.ensemble, t, Q_STEP, Q_SAMPLES, 900 + step as u64).unwrap();
        for (gen, (worst, at)) in gens.iter().zip(out.iter_mut()) {
            let diff = est.q.matrix() - gen.superoperator(t).unwrap().matrix();
            for ((z, s), f) in diff.iter().zip(est.stat_error.iter()).zip(est.fd_error.iter()) {
                let score = z.norm() / (Q_SIGMAS * s + f + Q_FLOOR);
                if score > *worst {
                    *worst = score;
                    *at = t;
                }
            }
        }
    }
    out
}

#[test]
fn criterion_7_dynamical_matrix_validation() {
    let mut all = true;
    for alpha in [0.0, 0.1] {
        let bundle = QubitModel { lambda0: 10.0, sigma: 1.0, alpha }.build().unwrap();
        let scores = q_scores(&bundle, &[GammaMode::Exact, bundle.gamma_mode]);
        let (worst, at) = scores[0];
        let pass = worst <= 1.0;
        all &= pass;
        report(
            &format!("7 [Q, α = {alpha}]"),
            pass,
            &format!(
                "exact rates: max |Q_num - Q_gen| / ({Q_SIGMAS} SE + FD + {Q_FLOOR:e}) = {worst:.3} at t = {at:.1}"
            ),
        );
        let (closed, at) = scores[1];
        info(
            &format!("7 [Q, α = {alpha}]"),
            &format!("closed-form {:?} rates: score {closed:.3} at t = {at:.1}", bundle.gamma_mode),
        );
    }

    let bundle = QubitModel { lambda0: 10.0, sigma: 1.0, alpha: NEUMANN_ALPHA }.build().unwrap();
    let f = dynamical_matrix(&bundle.ensemble, &[NEUMANN_T], Q_SAMPLES, 10, 77).unwrap().mean.remove(0);
    let f0 = unperturbed_dynamical_matrix(bundle.ensemble.spectral(), NEUMANN_T);
    let residuals: Vec<f64> =
        (0..=NEUMANN_MAX_ORDER).map(|n| inverse_residual(&f, &neumann_inverse(&f, &f0, n).unwrap())).collect();
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    all &= monotone;
    let shown: Vec<String> = residuals.iter().map(|r| format!("{r:.2e}")).collect();
    report(
        &format!("7 [Neumann, α = {NEUMANN_ALPHA}]"),
        monotone,
        &format!("residual by order 0..={NEUMANN_MAX_ORDER}: {}", shown.join(", ")),
    );
    assert!(all);
}
