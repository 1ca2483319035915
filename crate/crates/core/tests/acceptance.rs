//! Acceptance suite. Runs as a plain binary (no libtest harness) so each
//! criterion prints a PASS/FAIL line in the normal test output.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qnet::criteria::{
    closed_form_i, combination_db, correlation_report, criterion_value, evaluate_criteria,
    numeric_optimal_gain_closed_form, optimal_gain, optimal_gains_for_state, Combination,
    GainTriple,
};
use qnet::gaussian::{symplectic_form, GaussianChannel, GaussianState};
use qnet::homodyne::MeasurementSession;
use qnet::network::{
    build_input_state, infer_atomic_db, input_coefficient_matrix, input_network, input_stage,
    read_from_atoms, run_pipeline, stored_covariance, write_to_atoms, ExperimentSpec,
};
use qnet::report::Reference;
use qnet::sweep::{sweep, Axis, GainMode, SweepCell, SweepSpec};
use qnet::Stage;

const REFERENCE: &str = include_str!("../data/reference_measurements.json");
const R: f64 = 0.38;
const ETA_M: f64 = 0.23;
const ETA_READ: f64 = 0.68;

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

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn reference() -> Reference {
    Reference::from_json(REFERENCE).expect("bundled reference parses")
}

fn operating_point() -> ExperimentSpec {
    ExperimentSpec::symmetric(R, ETA_M, ETA_READ)
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Oracle: Var(X2 − X3) = e^{−2r} on the input light, vacuum level 1.
fn c1_input_x() -> Outcome {
    let reference = reference();
    let published = reference.row("X2-X3").unwrap().input;
    let oracle = 10.0 * (-2.0 * R).exp().log10();
    let run = || {
        let state = build_input_state([R; 3]).unwrap();
        combination_db(&state, Combination::XDiff(1, 2), 0.0).unwrap()
    };
    let db = run();
    let mut best = Duration::MAX;
    for _ in 0..50 {
        let t = Instant::now();
        std::hint::black_box(run());
        best = best.min(t.elapsed());
    }
    let pass = within(db, oracle, 1e-12)
        && within(db, published.value(), published.err())
        && best < Duration::from_millis(1);
    Outcome::new(
        pass,
        format!(
            "X2-X3 input {db:.4} dB (oracle {oracle:.4}, measured {:.2} ± {:.2}), {best:?}",
            published.value(),
            published.err()
        ),
    )
}

/// Oracle: the analytic gain (2e^{4r} − 2)/(2e^{4r} + 1) and the quadratic
/// form evaluated by hand on the closed-form coefficient matrix.
fn c2_input_p() -> Outcome {
    let published = reference().row("g1P1+P2+P3").unwrap().input;
    let state = build_input_state([R; 3]).unwrap();
    let g = optimal_gains_for_state(&state).unwrap().g1;
    let e4 = (4.0 * R).exp();
    let g_oracle = (2.0 * e4 - 2.0) / (2.0 * e4 + 1.0);
    let c = input_coefficient_matrix([R; 3]).unwrap();
    let w = [g, 1.0, 1.0];
    let var: f64 = (0..6)
        .map(|src| {
            let coeff: f64 = (0..3).map(|k| w[k] * c[(2 * k + 1, src)]).sum();
            0.5 * coeff * coeff
        })
        .sum();
    let oracle_db = 10.0 * (var / (0.5 * (g * g + 2.0))).log10();
    let db = combination_db(&state, Combination::PSum(0), g).unwrap();
    let pass = within(g, g_oracle, 1e-12)
        && within(g, 0.7043, 5e-5)
        && within(db, oracle_db, 1e-12)
        && within(db, -2.95, 0.005)
        && within(db, published.value(), published.err());
    Outcome::new(
        pass,
        format!(
            "g1 = {g:.5}, g1P1+P2+P3 input {db:.4} dB (measured {:.2} ± {:.2})",
            published.value(),
            published.err()
        ),
    )
}

/// Oracles: Var(X_A2 − X_A3) = η e^{−2r} + (1 − η); the P row uses the gain
/// that is optimal for the released light, where the atomic value is
/// inferred.
fn c3_atomic() -> Outcome {
    let reference = reference();
    let rows = correlation_report(&operating_point()).unwrap();
    let x_oracle = 10.0 * (ETA_M * (-2.0 * R).exp() + 1.0 - ETA_M).log10();
    let g = optimal_gain(Stage::Released, R, ETA_M * ETA_READ).unwrap();
    let cov = stored_covariance(R, ETA_M).unwrap();
    let atomic = GaussianState::new(nalgebra::DVector::zeros(6), cov).unwrap();
    let p_oracle = combination_db(&atomic, Combination::PSum(0), g).unwrap();
    let (x, p) = (rows[0].atomic_db, rows[1].atomic_db);
    let px = reference.row("X2-X3").unwrap().atomic;
    let pp = reference.row("g1P1+P2+P3").unwrap().atomic;
    let pass = within(x, x_oracle, 1e-12)
        && within(x, -0.57, 0.005)
        && within(x, px.value(), px.err())
        && within(p, p_oracle, 1e-12)
        && within(p, -0.15, 0.005)
        && within(p, pp.value(), pp.err());
    Outcome::new(
        pass,
        format!(
            "atomic X2-X3 {x:.4} dB ({:.2} ± {:.2}), g1P1+P2+P3 {p:.4} dB at g = {g:.4} ({:.2} ± {:.2})",
            px.value(),
            px.err(),
            pp.value(),
            pp.err()
        ),
    )
}

/// Oracle: V_rel = η′ V_atom + (1 − η′) in vacuum units; inversion of every
/// model row back to the atomic column; published released values inverted
/// onto the published atomic values within their error bars.
fn c4_released() -> Outcome {
    let reference = reference();
    let rows = correlation_report(&operating_point()).unwrap();
    let atomic_x = ETA_M * (-2.0 * R).exp() + 1.0 - ETA_M;
    let oracle = 10.0 * (ETA_READ * atomic_x + 1.0 - ETA_READ).log10();
    let x = rows[0].released_db;
    let published = reference.row("X2-X3").unwrap().released;
    let model_inversion = rows
        .iter()
        .map(|r| (infer_atomic_db(r.released_db, ETA_READ).unwrap() - r.atomic_db).abs())
        .fold(0.0, f64::max);
    let published_inversion = reference
        .rows
        .iter()
        .map(|r| {
            let inferred = infer_atomic_db(r.released.value(), ETA_READ).unwrap();
            (inferred - r.atomic.value()).abs() - r.atomic.err()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = within(x, oracle, 1e-12)
        && within(x, -0.38, 0.005)
        && within(x, published.value(), published.err())
        && model_inversion <= 0.01
        && published_inversion <= 0.0;
    Outcome::new(
        pass,
        format!(
            "released X2-X3 {x:.4} dB ({:.2} ± {:.2}); inversion error {model_inversion:.1e} dB; \
             published inversion worst margin {published_inversion:.4} dB",
            published.value(),
            published.err()
        ),
    )
}

/// Oracle: closed form at the total efficiency with its analytic optimal
/// gain. The model point sits at 0.953; the measured dot is 0.96 ± 0.01.
fn c5_headline() -> Outcome {
    let reference = reference();
    let eta = ETA_M * ETA_READ;
    let g = optimal_gain(Stage::Released, R, eta).unwrap();
    let oracle = closed_form_i(Stage::Released, R, eta, g).unwrap();
    let at_nominal = closed_form_i(
        Stage::Released,
        R,
        0.156,
        optimal_gain(Stage::Released, R, 0.156).unwrap(),
    )
    .unwrap();
    let pipeline = run_pipeline(&operating_point()).unwrap();
    let released = pipeline.released.state();
    let res = evaluate_criteria(
        released,
        optimal_gains_for_state(released).unwrap(),
        Stage::Released,
    )
    .unwrap();
    let dot = reference.released_witness;
    let pass = within(res.witness, oracle, 1e-12)
        && within(at_nominal, 0.95347, 5e-6)
        && within(res.witness, dot.value(), 0.02)
        && res.entangled;
    Outcome::new(
        pass,
        format!(
            "I = {:.5} at eta = {eta:.4} ({at_nominal:.5} at eta = 0.156), measured {:.2} ± {:.2}, entangled = {}",
            res.witness,
            dot.value(),
            dot.err(),
            res.entangled
        ),
    )
}

fn c6_optimizer() -> Outcome {
    let mut worst_gain = 0.0f64;
    for i in 0..50 {
        for j in 0..50 {
            let r = 0.02 + 1.48 * i as f64 / 49.0;
            let eta = 0.02 + 0.98 * j as f64 / 49.0;
            let a = optimal_gain(Stage::Released, r, eta).unwrap();
            let n = numeric_optimal_gain_closed_form(Stage::Released, r, eta).unwrap();
            worst_gain = worst_gain.max((a - n).abs());
        }
        let r = 0.02 + 1.48 * i as f64 / 49.0;
        let a = optimal_gain(Stage::Input, r, 1.0).unwrap();
        let n = numeric_optimal_gain_closed_form(Stage::Input, r, 1.0).unwrap();
        worst_gain = worst_gain.max((a - n).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_engine = 0.0f64;
    for _ in 0..200 {
        let r: f64 = rng.random_range(0.0..1.5);
        let eta_m: f64 = rng.random_range(0.0..=1.0);
        let eta_read: f64 = rng.random_range(0.0..=1.0);
        let g: f64 = rng.random_range(-2.0..2.0);
        let p = run_pipeline(&ExperimentSpec::symmetric(r, eta_m, eta_read)).unwrap();
        for (stage, eff) in [
            (Stage::Input, 1.0),
            (Stage::Atomic, eta_m),
            (Stage::Released, eta_m * eta_read),
        ] {
            let state = p.stage(stage).state();
            let closed = closed_form_i(stage, r, eff, g).unwrap();
            for k in 0..3 {
                worst_engine =
                    worst_engine.max((criterion_value(state, k, g).unwrap() - closed).abs());
            }
        }
    }
    Outcome::new(
        worst_gain <= 1e-7 && worst_engine <= 1e-10,
        format!("analytic vs numeric gain {worst_gain:.1e} on 50x50; engine vs closed form {worst_engine:.1e} over 200 draws"),
    )
}

fn c7_boundaries() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    // r = 0: exactly 1 with zero gain, for any efficiency
    for eta in [0.0, 0.1, 0.156, 0.23, 0.5, 0.9, 1.0] {
        let g = optimal_gain(Stage::Released, 0.0, eta).unwrap();
        let i = closed_form_i(Stage::Released, 0.0, eta, g).unwrap();
        ok &= g == 0.0 && i == 1.0;
        let p = run_pipeline(&ExperimentSpec::symmetric(0.0, eta, 1.0)).unwrap();
        let res = evaluate_criteria(p.released.state(), GainTriple::ZERO, Stage::Released).unwrap();
        ok &= res.values().iter().all(|v| (v - 1.0).abs() <= 1e-14);
    }
    notes.push("r=0 -> I=1");

    // η = 1: stored formulas coincide with the input formulas
    let mut worst = 0.0f64;
    for r in [0.05, 0.38, 0.8, 1.4] {
        for g in [-1.0, 0.0, 0.5, 0.7043, 1.3] {
            let a = closed_form_i(Stage::Released, r, 1.0, g).unwrap();
            let b = closed_form_i(Stage::Input, r, 1.0, g).unwrap();
            worst = worst.max((a - b).abs());
        }
        let ga = optimal_gain(Stage::Released, r, 1.0).unwrap();
        let gi = optimal_gain(Stage::Input, r, 1.0).unwrap();
        worst = worst.max((ga - gi).abs());
        let p = run_pipeline(&ExperimentSpec::symmetric(r, 1.0, 1.0)).unwrap();
        worst = worst.max(max_abs(p.released.state().cov(), p.input.state().cov()));
    }
    ok &= worst <= 1e-12;
    notes.push("eta=1 -> input");

    // η = 0: vacuum everywhere downstream
    let vac = GaussianState::vacuum(3).unwrap();
    let p = run_pipeline(&ExperimentSpec::symmetric(0.9, 0.0, 0.5)).unwrap();
    let d0 = max_abs(p.atomic.state().cov(), vac.cov())
        .max(max_abs(p.released.state().cov(), vac.cov()));
    let res = evaluate_criteria(p.released.state(), GainTriple::ZERO, Stage::Released).unwrap();
    ok &= d0 <= 1e-15 && res.values().iter().all(|v| (v - 1.0).abs() <= 1e-15);
    ok &= closed_form_i(Stage::Released, 0.9, 0.0, 0.0).unwrap() == 1.0;
    notes.push("eta=0 -> vacuum");

    Outcome::new(
        ok,
        format!("{}; eta=1 worst deviation {worst:.1e}", notes.join(", ")),
    )
}

fn c8_structure() -> Outcome {
    let mut worst_symp = 0.0f64;
    let mut worst_cp = f64::INFINITY;
    let mut worst_purity = 0.0f64;
    let mut worst_coeff = 0.0f64;
    let mut worst_stored = 0.0f64;
    let omega = symplectic_form(3);
    for r in [0.0, 0.2, 0.38, 0.9, 1.5] {
        let s = input_network([r; 3]).unwrap();
        let m = s.matrix();
        worst_symp = worst_symp.max((m * &omega * m.transpose() - &omega).abs().max());
        worst_coeff = worst_coeff.max(max_abs(m, &input_coefficient_matrix([r; 3]).unwrap()));
        let state = build_input_state([r; 3]).unwrap();
        worst_purity = worst_purity.max((state.det_2v() - 1.0).abs());

        for eta in [0.0, 0.156, 0.23, 0.68, 1.0] {
            worst_cp = worst_cp
                .min(
                    GaussianChannel::loss(3, 1, eta)
                        .unwrap()
                        .cp_min_eigenvalue(),
                )
                .min(
                    GaussianChannel::retrieval(3, 2, eta)
                        .unwrap()
                        .cp_min_eigenvalue(),
                );
            let input = input_stage([r; 3]).unwrap();
            let atomic = write_to_atoms(&input, [eta; 3], [0.0; 3]).unwrap();
            worst_stored = worst_stored.max(max_abs(
                atomic.state().cov(),
                &stored_covariance(r, eta).unwrap(),
            ));
            let released = read_from_atoms(&atomic, [ETA_READ; 3]).unwrap();
            worst_stored = worst_stored.max(max_abs(
                released.state().cov(),
                &stored_covariance(r, eta * ETA_READ).unwrap(),
            ));
        }
    }
    let pass = worst_symp <= 1e-10
        && worst_cp >= -1e-9
        && worst_purity <= 1e-9
        && worst_coeff <= 1e-12
        && worst_stored <= 1e-12;
    Outcome::new(
        pass,
        format!(
            "symplectic {worst_symp:.1e}, CP min eig {worst_cp:.1e}, det(2V)-1 {worst_purity:.1e}, \
             coefficient oracle {worst_coeff:.1e}, stored oracle {worst_stored:.1e}"
        ),
    )
}

fn c9_monte_carlo() -> Outcome {
    let spec = operating_point();
    let analytic = {
        let eta = ETA_M * ETA_READ;
        closed_form_i(
            Stage::Released,
            R,
            eta,
            optimal_gain(Stage::Released, R, eta).unwrap(),
        )
        .unwrap()
    };
    let t = Instant::now();
    let session = MeasurementSession::new(&spec).unwrap();
    let report = session.estimate_all().unwrap();
    let elapsed = t.elapsed();
    let released = &report.stages[2];
    let (est, se) = (released.estimate.witness, released.standard_error.witness);
    let z = (est - analytic).abs() / se;

    let mut vac_spec = ExperimentSpec::symmetric(0.0, 1.0, 1.0);
    vac_spec.mc.seed = 11;
    let vac = MeasurementSession::new(&vac_spec)
        .unwrap()
        .estimate(Stage::Input)
        .unwrap();
    let vac_z = vac
        .combinations
        .iter()
        .map(|c| (c.variance - c.model_variance).abs() / c.variance_se)
        .fold(0.0, f64::max);

    let pass =
        spec.mc.shots == 10_000 && z <= 3.0 && vac_z <= 3.0 && elapsed < Duration::from_secs(10);
    Outcome::new(
        pass,
        format!(
            "released I = {est:.4} ± {se:.4} vs {analytic:.4} ({z:.2} SE); vacuum chain worst {vac_z:.2} SE; \
             three stages at 1e4 shots in {elapsed:.2?}"
        ),
    )
}

/// Cells whose next neighbour along η (first) or r (second) has a larger I.
fn monotonicity_violations(
    cells: &[SweepCell],
    n_eta: usize,
) -> (Vec<&SweepCell>, Vec<&SweepCell>) {
    let tol = 1e-12;
    let mut along_eta = Vec::new();
    let mut along_r = Vec::new();
    for (idx, c) in cells.iter().enumerate() {
        if idx % n_eta + 1 < n_eta && cells[idx + 1].i > c.i + tol {
            along_eta.push(c);
        }
        if cells.get(idx + n_eta).is_some_and(|n| n.i > c.i + tol) {
            along_r.push(c);
        }
    }
    (along_eta, along_r)
}

/// Monotonicity is checked on every cell of the default 121 × 101 grid.
/// The optimal-gain surface rises with r at low η (anti-squeezed noise
/// enters the P-sum faster than the correlations grow) and rises with η
/// just above η = 0 at large r, so this check reports where it breaks.
fn c10_sweeps() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for stage in [Stage::Released, Stage::Atomic] {
        let spec = SweepSpec {
            stage,
            r_range: Axis::new(0.0, 1.2, 121),
            eta_range: Axis::new(0.0, 1.0, 101),
            t_ns: 1000.0,
            gain_mode: GainMode::Optimal,
        };
        let cells = sweep(&spec).unwrap();
        ok &= cells.len() == 121 * 101;
        ok &= cells.iter().filter(|c| c.r == 0.0).all(|c| c.i == 1.0);
        let (eta_bad, r_bad) = monotonicity_violations(&cells, 101);
        ok &= eta_bad.is_empty() && r_bad.is_empty();
        let max_eta_r_bad = r_bad.iter().map(|c| c.eta).fold(f64::NAN, f64::max);
        let min_r_eta_bad = eta_bad.iter().map(|c| c.r).fold(f64::NAN, f64::min);
        let peak = cells.iter().max_by(|a, b| a.i.total_cmp(&b.i)).unwrap();
        notes.push(format!(
            "{stage}: {} cells rise along r (all at eta <= {max_eta_r_bad:.2}), {} along eta (all at r >= {min_r_eta_bad:.2}), \
             max I {:.4} at (r {:.2}, eta {:.2})",
            r_bad.len(),
            eta_bad.len(),
            peak.i,
            peak.r,
            peak.eta
        ));
    }
    let elapsed = t.elapsed();
    let atomic_point = closed_form_i(
        Stage::Atomic,
        R,
        ETA_M,
        optimal_gain(Stage::Atomic, R, ETA_M).unwrap(),
    )
    .unwrap();
    ok &= within(atomic_point, 0.927, 5e-4) && elapsed < Duration::from_secs(5);
    Outcome::new(
        ok,
        format!(
            "{}; atomic I(0.38, 0.23) = {atomic_point:.4}; two grids in {elapsed:.2?}",
            notes.join("; ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("input X-combination", c1_input_x),
        ("input P-combination at optimal gain", c2_input_p),
        ("atomic stage", c3_atomic),
        ("released stage and inversion", c4_released),
        ("headline witness", c5_headline),
        ("optimizer and engine oracles", c6_optimizer),
        ("boundaries and degeneracies", c7_boundaries),
        ("structural invariants", c8_structure),
        ("Monte Carlo", c9_monte_carlo),
        ("sweep surfaces", c10_sweeps),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {:>2}", i + 1);
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| id.contains(f.as_str()) || name.contains(f.as_str()))
        {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!(
            "{} {id} ({name}): {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        failed += usize::from(!outcome.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
