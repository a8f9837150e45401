mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use transdim::model::THETA_VOLUME;
use transdim::sem::{choose_l, criterion, initialize_model, m_step, run_sem, SemConfig};
use transdim::{
    AllocationVector, GaussianComponent, SampleMeta, SampleSet, SummaryModel, VariableDimSample,
};

fn comp(mu: f64, s: f64, pi: f64) -> GaussianComponent {
    GaussianComponent::new(mu, s * s, pi).unwrap()
}

fn set(samples: Vec<VariableDimSample>) -> SampleSet {
    SampleSet::new(samples, SampleMeta::default()).unwrap()
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

fn assert_recovered(fit: &SummaryModel, truth: &SummaryModel, rel: f64) {
    assert_eq!(fit.n_components(), truth.n_components(), "{fit:?}");
    for (f, t) in fit.components.iter().zip(&truth.components) {
        assert!(within(f.mu, t.mu, rel), "mu {} vs {}", f.mu, t.mu);
        assert!(within(f.s(), t.s(), rel), "s {} vs {}", f.s(), t.s());
        assert!(within(f.pi, t.pi, rel), "pi {} vs {}", f.pi, t.pi);
    }
    assert!(
        within(fit.eta, truth.eta, rel),
        "eta {} vs {}",
        fit.eta,
        truth.eta
    );
}

fn self_consistency(truth: SummaryModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = set(common::generate(&truth, 10_000, &mut rng));
    let config = SemConfig {
        seed,
        ..SemConfig::default()
    };
    let result = run_sem(&samples, &config).unwrap();
    assert_recovered(&result.model, &truth, 0.10);
}

#[test]
fn recovers_a_single_component() {
    self_consistency(
        SummaryModel::on_frequencies(vec![comp(1.0, 0.05, 0.8)], 0.01).unwrap(),
        31,
    );
}

#[test]
fn recovers_two_components() {
    self_consistency(
        SummaryModel::on_frequencies(vec![comp(0.8, 0.05, 0.9), comp(2.0, 0.08, 0.6)], 0.02)
            .unwrap(),
        32,
    );
}

fn small_problem() -> SampleSet {
    let truth =
        SummaryModel::on_frequencies(vec![comp(0.7, 0.04, 0.9), comp(1.5, 0.06, 0.5)], 0.03)
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    set(common::generate(&truth, 1500, &mut rng))
}

#[test]
fn trace_invariants_hold_every_iteration() {
    let samples = small_problem();
    let config = SemConfig {
        n_iterations: 20,
        ..SemConfig::default()
    };
    let result = run_sem(&samples, &config).unwrap();
    let total_k: usize = samples.samples().iter().map(|s| s.k()).sum();
    assert_eq!(result.trace.iterations.len(), 20);
    for it in &result.trace.iterations {
        let allocated: usize = it.component_counts.iter().sum::<usize>() + it.background_count;
        assert_eq!(allocated, total_k);
        assert!(it.model.eta >= 0.0);
        for c in &it.model.components {
            assert!(c.pi > 0.0 && c.pi <= 1.0, "pi {}", c.pi);
        }
    }
    // final report sorted by mean, allocations aligned with it
    let mus: Vec<f64> = result.model.components.iter().map(|c| c.mu).collect();
    assert!(mus.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(result.allocations.len(), samples.len());
    for (z, x) in result.allocations.iter().zip(samples.samples()) {
        assert_eq!(z.len(), x.k());
    }
    let j = result.trace.criteria();
    let tail: f64 = j[j.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail >= j[0], "criterion fell: {} -> {tail}", j[0]);
}

#[test]
fn identical_seed_gives_identical_trace() {
    let samples = small_problem();
    let config = SemConfig {
        n_iterations: 8,
        seed: 99,
        ..SemConfig::default()
    };
    let a = run_sem(&samples, &config).unwrap();
    let b = run_sem(&samples, &config).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model, b.model);
    assert_eq!(a.allocations, b.allocations);
    let c = run_sem(
        &samples,
        &SemConfig {
            seed: 100,
            ..config
        },
    )
    .unwrap();
    assert_ne!(a.trace, c.trace);
}

/// Generates samples together with their true allocations.
fn generate_labelled(
    model: &SummaryModel,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<VariableDimSample>, Vec<AllocationVector>) {
    let mut xs = Vec::with_capacity(m);
    let mut zs = Vec::with_capacity(m);
    for _ in 0..m {
        let mut theta = Vec::new();
        let mut z = Vec::new();
        for (l, c) in model.components.iter().enumerate() {
            if rng.random::<f64>() < c.pi {
                theta.push(Normal::new(c.mu, c.s()).unwrap().sample(rng));
                z.push(l + 1);
            }
        }
        let n0 = Poisson::new(model.lambda0()).unwrap().sample(rng) as usize;
        for _ in 0..n0 {
            theta.push(rng.random::<f64>() * THETA_VOLUME);
            z.push(0);
        }
        xs.push(VariableDimSample::new(theta).unwrap());
        zs.push(AllocationVector::new(z, model.n_components()).unwrap());
    }
    (xs, zs)
}

#[test]
fn robust_m_step_agrees_with_closed_form_argmax() {
    let truth =
        SummaryModel::on_frequencies(vec![comp(0.9, 0.05, 0.85), comp(1.8, 0.1, 0.4)], 0.02)
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (xs, zs) = generate_labelled(&truth, 10_000, &mut rng);
    let samples = set(xs);
    let fit = m_step(&samples, &zs, &truth, 1e-4).unwrap();

    // argmax of the completed likelihood: sample mean / sd, presence frequency
    for l in 1..=2 {
        let vals: Vec<f64> = samples
            .samples()
            .iter()
            .zip(&zs)
            .flat_map(|(x, z)| {
                x.theta()
                    .iter()
                    .zip(z.labels())
                    .filter(move |(_, &lab)| lab == l)
                    .map(|(t, _)| *t)
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let presence = zs.iter().filter(|z| z.uses(l)).count() as f64 / zs.len() as f64;
        let c = &fit.components[l - 1];
        assert!(within(c.mu, mean, 0.05), "mu {} vs {mean}", c.mu);
        assert!(within(c.s(), sd, 0.05), "s {} vs {sd}", c.s());
        assert_eq!(c.pi, presence);
    }
    let n0: usize = zs.iter().map(|z| z.n_background()).sum();
    assert_eq!(fit.eta, n0 as f64 / (zs.len() as f64 * THETA_VOLUME));
}

#[test]
fn m_step_counts_presence() {
    let xs = set(vec![
        VariableDimSample::new(vec![0.5]).unwrap(),
        VariableDimSample::new(vec![0.52]).unwrap(),
        VariableDimSample::new(vec![]).unwrap(),
        VariableDimSample::new(vec![2.0]).unwrap(),
    ]);
    let zs = vec![
        AllocationVector::new(vec![1], 1).unwrap(),
        AllocationVector::new(vec![1], 1).unwrap(),
        AllocationVector::new(vec![], 1).unwrap(),
        AllocationVector::new(vec![0], 1).unwrap(),
    ];
    let prev = SummaryModel::on_frequencies(vec![comp(0.5, 0.1, 0.5)], 0.1).unwrap();
    let fit = m_step(&xs, &zs, &prev, 1e-4).unwrap();
    assert_eq!(fit.components[0].pi, 0.5);
    assert!((fit.eta - 1.0 / (4.0 * THETA_VOLUME)).abs() < 1e-15);
}

#[test]
fn initialization_recovers_sorted_slots() {
    let slots = [(0.6, 0.02), (1.4, 0.05), (2.3, 0.03)];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let samples: Vec<VariableDimSample> = (0..10_000)
        .map(|_| {
            let theta = slots
                .iter()
                .map(|&(mu, s)| Normal::new(mu, s).unwrap().sample(&mut rng))
                .collect();
            VariableDimSample::new(theta).unwrap()
        })
        .collect();
    let samples = set(samples);
    assert_eq!(choose_l(&samples, 0.9), 3);
    let init = initialize_model(&samples, 3, 1e-4).unwrap();
    for (c, &(mu, s)) in init.components.iter().zip(&slots) {
        assert!((c.mu - mu).abs() < 0.01 * mu);
        assert!(within(c.s(), s, 0.05), "s {} vs {s}", c.s());
        assert_eq!(c.pi, 0.9);
    }
    assert_eq!(init.eta, 0.0);
}

#[test]
fn choose_l_at_the_ninetieth_percentile() {
    let mut xs = Vec::new();
    for (k, n) in [(2usize, 595usize), (3, 308), (4, 78), (5, 19)] {
        for _ in 0..n {
            xs.push(
                VariableDimSample::new((0..k).map(|j| 0.5 + 0.1 * j as f64).collect()).unwrap(),
            );
        }
    }
    assert_eq!(choose_l(&set(xs), 0.9), 3);
    assert_eq!(choose_l(&set(vec![VariableDimSample::empty(); 5]), 0.9), 0);
}

#[test]
fn criterion_matches_enumeration() {
    let model = SummaryModel::on_frequencies(vec![comp(0.0, 1.0, 1.0)], 0.0).unwrap();
    let single = set(vec![VariableDimSample::new(vec![0.0]).unwrap()]);
    assert!((criterion(&single, &model).unwrap() + 0.918_938_533).abs() < 1e-8);

    let model =
        SummaryModel::on_frequencies(vec![comp(0.8, 0.1, 0.7), comp(1.6, 0.2, 0.5)], 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs = common::generate(&model, 50, &mut rng);
    let xs: Vec<_> = xs.into_iter().filter(|x| x.k() <= 4).collect();
    let oracle = xs
        .iter()
        .map(|x| common::marginal_density(x.theta(), &model).ln())
        .sum::<f64>()
        / xs.len() as f64;
    let ours = criterion(&set(xs.clone()), &model).unwrap();
    assert!((ours - oracle).abs() < 1e-10);
    let doubled: Vec<_> = xs.iter().chain(&xs).cloned().collect();
    assert!((criterion(&set(doubled), &model).unwrap() - ours).abs() < 1e-12);
}
