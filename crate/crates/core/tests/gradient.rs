use chanfsl_core::classify::{linear_fit, linear_predict, LinearConfig, LinearModel, LinearProblem};
use chanfsl_core::rng::CounterRng;
use chanfsl_core::FeatureVector;

/// Class `c` gets `base + 2c` samples so no gradient entry is zero by symmetry.
fn random_support(seed: u64, classes: usize, d: usize, base: usize) -> Vec<Vec<FeatureVector>> {
    let mut rng = CounterRng::new(seed, 0);
    (0..classes)
        .map(|c| {
            (0..base + 2 * c)
                .map(|_| {
                    FeatureVector::new((0..d).map(|l| rng.normal(((c + l) % 3) as f64 * 0.5, 1.0)).collect()).unwrap()
                })
                .collect()
        })
        .collect()
}

fn random_model(rng: &mut CounterRng, classes: usize, d: usize) -> LinearModel {
    let mut m = LinearModel::zeros(classes, d);
    for row in &mut m.weights {
        row.iter_mut().for_each(|w| *w = rng.uniform(-1.0, 1.0));
    }
    m.bias.iter_mut().for_each(|b| *b = rng.uniform(-1.0, 1.0));
    m
}

/// Largest relative gap between the analytic gradient and central
/// differences of the loss; magnitudes below 1e-4 count as 1e-4.
fn check(problem: &LinearProblem, model: &LinearModel) -> f64 {
    let h = 1e-5;
    let (_, gw, gb) = problem.loss_and_gradient(model);
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, plus: &LinearModel, minus: &LinearModel| {
        let fd = (problem.loss_and_gradient(plus).0 - problem.loss_and_gradient(minus).0) / (2.0 * h);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4));
    };
    for c in 0..problem.classes {
        for l in 0..problem.dim {
            let (mut p, mut m) = (model.clone(), model.clone());
            p.weights[c][l] += h;
            m.weights[c][l] -= h;
            compare(gw[c][l], &p, &m);
        }
        let (mut p, mut m) = (model.clone(), model.clone());
        p.bias[c] += h;
        m.bias[c] -= h;
        compare(gb[c], &p, &m);
    }
    worst
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..10 {
        let support = random_support(seed, 3, 4, 6);
        let problem = LinearProblem::from_support(&support, 1.0).unwrap();
        let at_zero = check(&problem, &LinearModel::zeros(3, 4));
        assert!(at_zero < 1e-5, "seed {seed}: {at_zero:e}");
        let mut rng = CounterRng::new(seed, 1);
        let model = random_model(&mut rng, 3, 4);
        let elsewhere = check(&problem, &model);
        assert!(elsewhere < 1e-5, "seed {seed}: {elsewhere:e}");
    }
}

#[test]
fn separable_data_is_fit_exactly_without_penalty() {
    let support = vec![
        vec![
            FeatureVector::new(vec![0.0, 0.1]).unwrap(),
            FeatureVector::new(vec![0.2, 0.0]).unwrap(),
        ],
        vec![
            FeatureVector::new(vec![1.0, 0.9]).unwrap(),
            FeatureVector::new(vec![0.8, 1.1]).unwrap(),
        ],
    ];
    let cfg = LinearConfig { l2_strength: 0.0, ..Default::default() };
    let model = linear_fit(&support, &cfg).unwrap();
    for (c, group) in support.iter().enumerate() {
        for v in group {
            assert_eq!(linear_predict(v, &model).unwrap(), c);
        }
    }
}
