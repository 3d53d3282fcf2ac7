use iagflow::fields::{
    AffineDrift, ConstantDiffusion, CubicDrift, Identity, LinearDiffusion, SquareAndSine, SquaredNorm,
};
use iagflow::iag::{
    extrapolated_weak_check, iag_terms, pathwise_refinement_check, realize, skorohod_duality_check,
    weak_identity_check, ConstantCoefficients, EulerProcess, Functional, IagSetup, TamedProcess,
};
use iagflow::vdp::VdpParams;
use iagflow::{make_grid, sample_brownian, Error};
use nalgebra::{DMatrix, DVector};

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

/// `mu = 0`, `sigma = 1`, `A = 0`, `B = 1/2`, `f(x) = x^2`, `xi = 0`.
fn constant_case() -> (AffineDrift, ConstantDiffusion, ConstantCoefficients, SquaredNorm) {
    (
        AffineDrift::zero(1),
        ConstantDiffusion::scalar(1.0),
        ConstantCoefficients {
            xi: scalar(0.0),
            drift: scalar(0.0),
            diffusion: DMatrix::from_element(1, 1, 0.5),
        },
        SquaredNorm { dim: 1 },
    )
}

#[test]
fn constant_case_matches_closed_form_per_path() {
    // X_T = W_T and Y_T = W_T / 2, so lhs = 3/4 W_T^2, the trace term is
    // 1/2 (1 - 1/4) f'' T = 3/4 and the residual is 3/4 (W_T^2 - 1).
    let (mu, sigma, ito, f) = constant_case();
    let grid = make_grid(1.0, 128).unwrap();
    for sample in 0..20 {
        let path = sample_brownian(31, sample, grid, 1).unwrap();
        let w = path.terminal()[0];
        let terms = iag_terms(&mu, &sigma, &ito, &f, &path, 32).unwrap();
        assert!((terms.lhs[0] - 0.75 * w * w).abs() <= 1e-12);
        assert!((terms.trace[0] - 0.75).abs() <= 1e-12);
        assert_eq!(terms.lebesgue[0], 0.0);
        assert!((terms.skorohod_residual[0] - 0.75 * (w * w - 1.0)).abs() <= 1e-12);
        assert_eq!(terms.nodes.len(), 32);
        assert_eq!(terms.terminal_noise, vec![w]);
    }
}

#[test]
fn weak_identity_in_constant_case() {
    let (mu, sigma, ito, f) = constant_case();
    let setup = IagSetup {
        mu: &mu,
        sigma: &sigma,
        ito: &ito,
        f: &f,
        fine_grid: make_grid(1.0, 16).unwrap(),
        outer_steps: 16,
    };
    let report = weak_identity_check(&setup, 20_000, 4).unwrap();
    assert!(report.pass());
    assert_eq!(report.diverged, 0);
    assert!(report.lhs[0].within(0.75, 3.0), "{:?}", report.lhs[0]);
    assert!((report.trace[0].mean - 0.75).abs() <= 1e-12);
    assert_eq!(report.lebesgue[0].mean, 0.0);
    assert!(report.skorohod_residual[0].within(0.0, 3.0));
}

#[test]
fn decomposition_is_exact() {
    let p = VdpParams::default();
    let (mu, sigma) = (p.drift(), p.diffusion());
    let ito = EulerProcess {
        mu: &AffineDrift::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]),
            DVector::zeros(2),
        ),
        sigma: &ConstantDiffusion::new(DMatrix::from_column_slice(2, 1, &[0.2, 0.6])),
        xi: DVector::from_vec(vec![0.4, -0.3]),
    };
    let f = Identity { dim: 2 };
    let path = sample_brownian(32, 0, make_grid(1.0, 256).unwrap(), 1).unwrap();
    let terms = iag_terms(&mu, &sigma, &ito, &f, &path, 32).unwrap();
    let h = 1.0 / 32.0;
    for c in 0..2 {
        assert_eq!(
            terms.lhs[c] - terms.lebesgue[c] - terms.trace[c],
            terms.skorohod_residual[c]
        );
        let rebuilt = terms.lebesgue[c] + terms.trace[c] + terms.skorohod_residual[c];
        assert!((rebuilt - terms.lhs[c]).abs() <= 4.0 * f64::EPSILON * terms.lhs[c].abs().max(1.0));
        let leb: f64 = terms.nodes.iter().map(|n| n.lebesgue[c]).sum::<f64>() * h;
        let tr: f64 = terms.nodes.iter().map(|n| n.trace[c]).sum::<f64>() * h;
        assert!((leb - terms.lebesgue[c]).abs() <= 1e-12);
        assert!((tr - terms.trace[c]).abs() <= 1e-12);
        assert!(terms.lebesgue[c] != 0.0 && terms.trace[c] != 0.0);
    }
}

#[test]
fn zero_perturbation_gives_zero_terms() {
    let p = VdpParams::default();
    let (mu, sigma) = (p.drift(), p.diffusion());
    let ito = EulerProcess {
        mu: &mu,
        sigma: &sigma,
        xi: DVector::from_vec(vec![0.5, 0.5]),
    };
    let f = SquaredNorm { dim: 2 };
    let grid = make_grid(1.0, 64).unwrap();
    for sample in 0..10 {
        let path = sample_brownian(33, sample, grid, 1).unwrap();
        let terms = iag_terms(&mu, &sigma, &ito, &f, &path, 64).unwrap();
        assert!(terms.lhs[0].abs() <= 1e-12, "{}", terms.lhs[0]);
        assert_eq!(terms.lebesgue[0], 0.0);
        assert_eq!(terms.trace[0], 0.0);
        assert!(terms.skorohod_residual[0].abs() <= 1e-12);
        assert!(terms.nodes.iter().all(|n| n.skorohod[0] == 0.0));
    }
}

#[test]
fn matched_diffusion_has_no_trace_term() {
    let p = VdpParams::default();
    let (mu, sigma) = (p.drift(), p.diffusion());
    let ito = TamedProcess {
        mu: &mu,
        beta: p.beta_column(),
        xi: DVector::from_vec(vec![1.0, -0.5]),
        scheme_steps: 8,
    };
    let f = Identity { dim: 2 };
    let grid = make_grid(1.0, 256).unwrap();
    for sample in 0..5 {
        let path = sample_brownian(34, sample, grid, 1).unwrap();
        let terms = iag_terms(&mu, &sigma, &ito, &f, &path, 32).unwrap();
        assert!(terms.trace.iter().all(|&t| t == 0.0));
        assert!(terms.nodes.iter().all(|n| n.skorohod.iter().all(|&s| s == 0.0)));
        assert!(terms.lebesgue.iter().any(|&l| l != 0.0));
    }
}

#[test]
fn tamed_process_reproduces_the_scheme() {
    let p = VdpParams::default();
    let mu = p.drift();
    let ito = TamedProcess {
        mu: &mu,
        beta: p.beta_column(),
        xi: DVector::from_vec(vec![2.5, 2.0]),
        scheme_steps: 8,
    };
    let path = sample_brownian(35, 0, make_grid(1.0, 64).unwrap(), 1).unwrap();
    let (ys, _, _) = realize(&ito, &path).unwrap();
    let scheme = iagflow::tamed_euler(&mu, &p.beta_column(), &ito.xi, &make_grid(1.0, 8).unwrap(), &path).unwrap();
    for k in 0..=8 {
        assert!((&ys[8 * k] - &scheme.states[k]).norm() <= 1e-12);
    }
    for (j, y) in ys.iter().enumerate() {
        assert!((y - scheme.interpolate(&path, j)).norm() <= 1e-12);
    }
}

#[test]
fn coefficients_do_not_anticipate() {
    let p = VdpParams::default();
    let mu = p.drift();
    let ito = TamedProcess {
        mu: &mu,
        beta: p.beta_column(),
        xi: DVector::from_vec(vec![1.0, 1.0]),
        scheme_steps: 16,
    };
    let path = sample_brownian(36, 0, make_grid(1.0, 64).unwrap(), 1).unwrap();
    let (ys, a_s, b_s) = realize(&ito, &path).unwrap();
    for k in [0usize, 5, 31, 63] {
        let bumped = path.perturbed(k, &[0.7]);
        let (ys2, a2, b2) = realize(&ito, &bumped).unwrap();
        assert_eq!(&ys[..=k], &ys2[..=k]);
        assert_eq!(&a_s[..=k], &a2[..=k]);
        assert_eq!(&b_s[..=k], &b2[..=k]);
        assert_ne!(ys[k + 1], ys2[k + 1]);
    }
}

#[test]
fn duality_in_constant_case() {
    let (mu, sigma, ito, f) = constant_case();
    let outer = 16;
    let setup = IagSetup {
        mu: &mu,
        sigma: &sigma,
        ito: &ito,
        f: &f,
        fine_grid: make_grid(1.0, outer).unwrap(),
        outer_steps: outer,
    };
    let functionals = [
        Functional::One,
        Functional::Terminal,
        Functional::Sine,
        Functional::Square,
    ];
    let report = skorohod_duality_check(&setup, &functionals, 20_000, 9).unwrap();
    for r in &report.results[..3] {
        assert!(r.pass, "{r:?}");
    }
    assert_eq!(report.results[0].rhs.mean, 0.0);
    // Z = W_T^2: E[Z * 3/4 (W_T^2 - 1)] = 3/2, while the left-point sum of
    // 2 W_T (W_T - W_r / 2) has mean 3/2 + h/2.
    let square = &report.results[3];
    let h = 1.0 / outer as f64;
    assert!(square.lhs.within(1.5, 3.0), "{square:?}");
    assert!(square.rhs.within(1.5 + 0.5 * h, 3.0), "{square:?}");
}

#[test]
fn matched_vdp_weak_identity_after_extrapolation() {
    let p = VdpParams::default();
    let (mu, sigma) = (p.drift(), p.diffusion());
    let ito = TamedProcess {
        mu: &mu,
        beta: p.beta_column(),
        xi: p.xi(),
        scheme_steps: 8,
    };
    let f = SquaredNorm { dim: 2 };
    let setup = IagSetup {
        mu: &mu,
        sigma: &sigma,
        ito: &ito,
        f: &f,
        fine_grid: make_grid(1.0, 256).unwrap(),
        outer_steps: 32,
    };
    let report = extrapolated_weak_check(&setup, 1_000, 5).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.diverged, 0);
}

#[test]
fn matched_vdp_residual_halves_under_refinement() {
    let p = VdpParams::default();
    let (mu, sigma) = (p.drift(), p.diffusion());
    let ito = TamedProcess {
        mu: &mu,
        beta: p.beta_column(),
        xi: p.xi(),
        scheme_steps: 8,
    };
    let f = SquaredNorm { dim: 2 };
    let setup = IagSetup {
        mu: &mu,
        sigma: &sigma,
        ito: &ito,
        f: &f,
        fine_grid: make_grid(1.0, 1024).unwrap(),
        outer_steps: 16,
    };
    let report = pathwise_refinement_check(&setup, &[16, 32, 64, 128], 30, 6, (1.3, 3.0)).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.ratios.len(), 3);
}

#[test]
fn deterministic_case_residual_is_quadrature_error() {
    // Without noise the residual is the error of the left-point rule.
    let mu = CubicDrift { offset: 0.0 };
    let sigma = ConstantDiffusion::zero(1, 1);
    let ito = ConstantCoefficients {
        xi: scalar(1.0),
        drift: scalar(-0.9),
        diffusion: DMatrix::zeros(1, 1),
    };
    let f = SquaredNorm { dim: 1 };
    let path = sample_brownian(37, 0, make_grid(1.0, 4096).unwrap(), 1).unwrap();
    let errors: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&outer| {
            iag_terms(&mu, &sigma, &ito, &f, &path, outer)
                .unwrap()
                .skorohod_residual[0]
                .abs()
        })
        .collect();
    assert!(errors[0] / errors[1] > 1.5 && errors[1] / errors[2] > 1.5, "{errors:?}");
}

#[test]
fn vector_valued_test_function_in_constant_case() {
    // f = (x^2, sin x) with X_T = W_T, Y_T = W_T / 2.
    let (mu, sigma, ito, _) = constant_case();
    let path = sample_brownian(39, 0, make_grid(1.0, 64).unwrap(), 1).unwrap();
    let w = path.terminal()[0];
    let terms = iag_terms(&mu, &sigma, &ito, &SquareAndSine, &path, 64).unwrap();
    assert!((terms.lhs[0] - 0.75 * w * w).abs() <= 1e-12);
    assert!((terms.lhs[1] - (w.sin() - (0.5 * w).sin())).abs() <= 1e-12);
    assert!((terms.trace[0] - 0.75).abs() <= 1e-12);
    assert_eq!(terms.lebesgue, vec![0.0, 0.0]);
}

#[test]
fn error_cases() {
    let (mu, sigma, ito, f) = constant_case();
    let path = sample_brownian(38, 0, make_grid(1.0, 48).unwrap(), 1).unwrap();
    assert!(matches!(
        iag_terms(&mu, &sigma, &ito, &f, &path, 32),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        iag_terms(&mu, &sigma, &ito, &f, &path, 0),
        Err(Error::Config(_))
    ));
    let linear = LinearDiffusion { scale: 0.3 };
    assert!(matches!(
        iag_terms(&mu, &linear, &ito, &f, &path, 16),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        iag_terms(&mu, &sigma, &ito, &Identity { dim: 2 }, &path, 16),
        Err(Error::Domain(_))
    ));

    let setup = IagSetup {
        mu: &mu,
        sigma: &sigma,
        ito: &ito,
        f: &f,
        fine_grid: make_grid(1.0, 16).unwrap(),
        outer_steps: 16,
    };
    assert!(matches!(weak_identity_check(&setup, 50, 0), Err(Error::Config(_))));
    assert!(matches!(
        skorohod_duality_check(&setup, &[Functional::One], 50, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        pathwise_refinement_check(&setup, &[16], 10, 0, (1.3, 3.0)),
        Err(Error::Config(_))
    ));

    let mu2 = AffineDrift::zero(2);
    let sigma2 = ConstantDiffusion::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
    let ito2 = ConstantCoefficients {
        xi: DVector::zeros(2),
        drift: DVector::zeros(2),
        diffusion: DMatrix::zeros(2, 1),
    };
    let f2 = Identity { dim: 2 };
    let setup2 = IagSetup {
        mu: &mu2,
        sigma: &sigma2,
        ito: &ito2,
        f: &f2,
        fine_grid: make_grid(1.0, 16).unwrap(),
        outer_steps: 16,
    };
    assert!(matches!(
        skorohod_duality_check(&setup2, &[Functional::One], 200, 0),
        Err(Error::Domain(_))
    ));
}
