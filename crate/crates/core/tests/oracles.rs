//! Evolution checked against oracles that share no code with the integrators.

use std::f64::consts::FRAC_PI_4;

use adiabat::linalg::{self, sigma_z, CMatrix, CVector};
use adiabat::model::{build_spin_half, SpinHalfParams, SpinVariant};
use adiabat::pipeline::{self, PipelineOptions};
use adiabat::propagate;
use adiabat::spectrum::Gauge;
use adiabat::{TimeGrid, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W0: f64 = 1.0;
const W: f64 = 0.1;

fn spin_a() -> adiabat::HamiltonianModel {
    build_spin_half(SpinHalfParams { omega0: W0, omega: W, theta: FRAC_PI_4, variant: SpinVariant::A }, None).unwrap()
}

/// U_a(τ) = R(τ) exp(−i(h_a(0) − ωσz/2)τ) with R(τ) = exp(−iωτσz/2): the
/// field is static in the frame co-rotating about z.
fn rotating_frame_propagator(tau: f64) -> CMatrix {
    let h0 = spin_a().evaluate(0.0);
    let static_part = &h0 - sigma_z() * C64::new(0.5 * W, 0.0);
    let rotation = linalg::expm_hermitian(&sigma_z(), C64::new(0.0, -0.5 * W * tau));
    rotation * linalg::expm_hermitian(&static_part, C64::new(0.0, -tau))
}

#[test]
fn schrodinger_states_match_rotating_frame_oracle() {
    let grid = TimeGrid::new(100.0, 50_000).unwrap();
    let start = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
    let traj = propagate::evolve_schrodinger(&spin_a(), &start, &grid).unwrap();
    let worst = (0..grid.len())
        .step_by(500)
        .map(|k| (rotating_frame_propagator(grid.tau(k)) * &start - &traj.states[k]).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "state error {worst:e}");
}

#[test]
fn survival_matches_rotating_frame_oracle_in_both_gauges() {
    let grid = TimeGrid::new(60.0, 60_000).unwrap();
    for gauge in [Gauge::ContinuityFixed, Gauge::Analytic] {
        let options = PipelineOptions { gauge, ..PipelineOptions::default() };
        let run = pipeline::run(&spin_a(), &grid, &options).unwrap();
        let phi0 = run.frame.spectrum().eigenvector(0, 0);
        for k in (0..grid.len()).step_by(1000) {
            let psi = rotating_frame_propagator(grid.tau(k)) * &phi0;
            let expected = run.frame.spectrum().eigenvector(k, 0).dotc(&psi).norm_sqr();
            assert!((run.p_exact()[k] - expected).abs() < 1e-8, "{gauge:?} at sample {k}");
        }
    }
}

/// Smooth random Hermitian, zero-diagonal M(τ) = Σ_j A_j cos(w_j τ + p_j).
struct RandomCoupling {
    terms: Vec<(CMatrix, f64, f64)>,
}

impl RandomCoupling {
    fn new(seed: u64, d: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..3)
            .map(|_| {
                let mut a = CMatrix::zeros(d, d);
                for i in 0..d {
                    for j in i + 1..d {
                        let z = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                        a[(i, j)] = z;
                        a[(j, i)] = z.conj();
                    }
                }
                (a, rng.gen_range(0.3..2.0), rng.gen_range(0.0..6.0))
            })
            .collect();
        Self { terms }
    }

    fn at(&self, tau: f64) -> CMatrix {
        let d = self.terms[0].0.nrows();
        self.terms.iter().fold(CMatrix::zeros(d, d), |acc, (a, w, p)| acc + a * C64::new((w * tau + p).cos(), 0.0))
    }
}

/// Classical RK4 for U̇ = iM(τ)U with a much finer step than the grid.
fn rk4(m: &RandomCoupling, tau_end: f64, steps: usize) -> CMatrix {
    let h = tau_end / steps as f64;
    let d = m.terms[0].0.nrows();
    let f = |t: f64, u: &CMatrix| m.at(t) * u * C64::new(0.0, 1.0);
    let mut u = CMatrix::identity(d, d);
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = f(t, &u);
        let k2 = f(t + 0.5 * h, &(&u + &k1 * C64::new(0.5 * h, 0.0)));
        let k3 = f(t + 0.5 * h, &(&u + &k2 * C64::new(0.5 * h, 0.0)));
        let k4 = f(t + h, &(&u + &k3 * C64::new(h, 0.0)));
        u += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
    }
    u
}

#[test]
fn time_ordered_exponential_converges_to_rk4_at_second_order() {
    let m = RandomCoupling::new(3, 3);
    let tau_end = 5.0;
    let reference = rk4(&m, tau_end, 40_000);
    let mut errors = Vec::new();
    for n in [1_000, 2_000] {
        let grid = TimeGrid::new(tau_end, n).unwrap();
        let samples: Vec<CMatrix> = grid.taus().map(|t| m.at(t)).collect();
        let u = propagate::time_ordered_exponential(&samples, &grid, &[n]).unwrap().remove(0);
        assert!(linalg::unitarity_defect(&u) < 1e-9);
        errors.push(linalg::max_abs(&(u - &reference)));
    }
    assert!(errors[0] < 1e-5, "error {:e}", errors[0]);
    let order = (errors[0] / errors[1]).log2();
    assert!((1.8..2.3).contains(&order), "observed order {order}");
}

#[test]
fn coefficient_run_is_a_column_of_the_time_ordered_exponential() {
    let m = RandomCoupling::new(9, 4);
    let grid = TimeGrid::new(3.0, 600).unwrap();
    let samples: Vec<CMatrix> = grid.taus().map(|t| m.at(t)).collect();
    let at: Vec<usize> = vec![600, 150, 0];
    let u = propagate::time_ordered_exponential(&samples, &grid, &at).unwrap();
    let c = propagate::evolve_coefficients(&samples, &grid, 2).unwrap();
    for (&k, uk) in at.iter().zip(&u) {
        assert!((uk.column(2) - &c.coeffs[k]).norm() < 1e-12);
    }
    assert!(linalg::max_abs(&(&u[2] - CMatrix::identity(4, 4))) == 0.0);
}
