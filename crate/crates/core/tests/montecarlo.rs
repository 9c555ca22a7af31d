use bspde_core::coefficients::{CoefficientSet, Family};
use bspde_core::grid::{DomainSpec, Grid};
use bspde_core::montecarlo::{
    conditional_functional, empirical_density, estimate_functional, DensitySampler,
    EstimatorResult, Initial, Simulator,
};
use bspde_core::paths::{bridge_paths, brownian_paths, sampled_paths};
use bspde_core::tree::ScenarioTree;
use bspde_core::Error;

fn constant(sigma: &[f64]) -> CoefficientSet {
    CoefficientSet::new(Family::Constant { f0: 0.0 }, 1, sigma).unwrap()
}

#[test]
fn frozen_dynamics() {
    let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
    let domain = DomainSpec::interval(0.0, 1.0, 1.0).unwrap();
    let coeffs = constant(&[0.0]);
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let bundle = sampled_paths(&tree, 50, 1, 0.05, 1).unwrap();
    let trajs = sim.simulate(Initial::Point(0.3), 0.0, &bundle).unwrap();
    for p in 0..trajs.len() {
        assert_eq!(trajs.tau(p), 1.0);
        for k in 0..=trajs.n_fine {
            assert_eq!(trajs.y(p, k), 0.3);
        }
    }
}

#[test]
fn brownian_endpoint_statistics() {
    let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
    let domain = DomainSpec::truncated_line(-8.0, 8.0, 1.0).unwrap();
    let coeffs = constant(&[1.0]);
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let m = 20_000;
    let bundle = sampled_paths(&tree, m, 1, 0.05, 2).unwrap();
    let trajs = sim.simulate(Initial::Point(0.0), 0.0, &bundle).unwrap();
    let ys: Vec<f64> = (0..m).map(|p| trajs.y(p, trajs.n_fine)).collect();
    let mean = EstimatorResult::from_samples(&ys);
    assert!(mean.mean.abs() <= 3.0 * mean.stderr);
    let sq: Vec<f64> = ys.iter().map(|y| (y - mean.mean).powi(2)).collect();
    let var = EstimatorResult::from_samples(&sq);
    assert!((var.mean - 1.0).abs() <= 3.0 * var.stderr, "{var:?}");
}

fn exit_setup() -> (ScenarioTree, DomainSpec, CoefficientSet) {
    (
        ScenarioTree::new(1, 8, 4.0).unwrap(),
        DomainSpec::interval(0.0, 1.0, 4.0).unwrap(),
        constant(&[1.0]),
    )
}

#[test]
fn mean_exit_time_from_midpoint() {
    let (tree, domain, coeffs) = exit_setup();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let bundle = brownian_paths(&tree, 20_000, 1, 1e-3, 3).unwrap();
    let trajs = sim.simulate(Initial::Point(0.5), 0.0, &bundle).unwrap();
    let taus: Vec<f64> = (0..trajs.len()).map(|p| trajs.tau(p)).collect();
    let est = EstimatorResult::from_samples(&taus);
    // Discrete monitoring misses crossings and lengthens tau by about
    // 0.5826 sqrt(dt_mc) on each side of the domain.
    let shift = 0.5826 * 1e-3f64.sqrt();
    let biased = (0.5 + shift) * (0.5 + shift);
    assert!((est.mean - 0.25).abs() <= 3.0 * est.stderr + 0.03, "{est:?}");
    assert!((est.mean - biased).abs() <= 3.0 * est.stderr + 0.005, "{est:?}");

    let one = |_: f64, _: f64, _: &[f64]| 1.0;
    let f = estimate_functional(&trajs, &tree, &one);
    assert!((f.mean - est.mean).abs() < 1e-12);
    let streamed = sim.functional(Initial::Point(0.5), 0.0, &bundle, &one).unwrap();
    assert_eq!(streamed, f);
    let two = |_: f64, _: f64, _: &[f64]| 2.0;
    assert_eq!(estimate_functional(&trajs, &tree, &two).mean, 2.0 * f.mean);
    let zero = |_: f64, _: f64, _: &[f64]| 0.0;
    let z = estimate_functional(&trajs, &tree, &zero);
    assert_eq!((z.mean, z.stderr), (0.0, 0.0));
}

#[test]
fn same_seed_reproduces_trajectories() {
    let (tree, domain, coeffs) = exit_setup();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let a = sampled_paths(&tree, 500, 1, 1e-2, 4).unwrap();
    let t1 = sim.simulate(Initial::Point(0.4), 0.0, &a).unwrap();
    let t2 = sim.simulate(Initial::Point(0.4), 0.0, &a).unwrap();
    assert_eq!(t1, t2);
}

#[test]
fn shrinking_the_domain_shortens_every_path() {
    let (tree, domain, coeffs) = exit_setup();
    let small = DomainSpec::interval(0.1, 0.9, 4.0).unwrap();
    let bundle = sampled_paths(&tree, 2000, 1, 1e-2, 5).unwrap();
    let big = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    }
    .simulate(Initial::Point(0.5), 0.0, &bundle)
    .unwrap();
    let narrow = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &small,
    }
    .simulate(Initial::Point(0.5), 0.0, &bundle)
    .unwrap();
    for p in 0..bundle.count {
        assert!(narrow.tau(p) <= big.tau(p));
    }
}

#[test]
fn stderr_scales_like_inverse_root_of_sample_size() {
    let (tree, domain, coeffs) = exit_setup();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let one = |_: f64, _: f64, _: &[f64]| 1.0;
    let a = sim
        .functional(Initial::Point(0.5), 0.0, &sampled_paths(&tree, 4000, 1, 1e-2, 6).unwrap(), &one)
        .unwrap();
    let b = sim
        .functional(Initial::Point(0.5), 0.0, &sampled_paths(&tree, 8000, 1, 1e-2, 7).unwrap(), &one)
        .unwrap();
    let ratio = a.stderr / b.stderr;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn init_outside_domain_is_rejected() {
    let (tree, domain, coeffs) = exit_setup();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let bundle = sampled_paths(&tree, 5, 1, 1e-2, 8).unwrap();
    assert_eq!(
        sim.simulate(Initial::Point(1.5), 0.0, &bundle),
        Err(Error::InitOutsideDomain(1.5))
    );
}

fn gaussian(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn empirical_density_of_gaussian_paths() {
    let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
    let domain = DomainSpec::truncated_line(-8.0, 8.0, 1.0).unwrap();
    let grid = Grid::new(&domain, 161).unwrap();
    let coeffs = constant(&[0.6, 0.8]);
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let bundle = sampled_paths(&tree, 100_000, 2, 0.05, 9).unwrap();
    let trajs = sim.simulate(Initial::Point(0.0), 0.0, &bundle).unwrap();
    let hist = empirical_density(&trajs, 1.0, &grid).unwrap();
    let l1: f64 = grid
        .nodes()
        .iter()
        .zip(hist.iter())
        .map(|(x, h)| (h - gaussian(*x, 1.0)).abs())
        .sum::<f64>()
        * grid.dx();
    assert!(l1 < 0.05, "{l1}");
    let total: f64 = hist.iter().sum::<f64>() * grid.dx();
    assert!((total - 1.0).abs() < 1e-9);

    let spike = empirical_density(&trajs, 0.0, &grid).unwrap();
    assert!((spike[80] - 1.0 / grid.dx()).abs() < 1e-9);
    assert_eq!(spike.iter().filter(|v| **v != 0.0).count(), 1);
}

#[test]
fn histogram_mass_is_alive_fraction() {
    let (tree, domain, coeffs) = exit_setup();
    let grid = Grid::new(&domain, 51).unwrap();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let bundle = sampled_paths(&tree, 3000, 1, 1e-2, 10).unwrap();
    let trajs = sim.simulate(Initial::Point(0.5), 0.0, &bundle).unwrap();
    let step = 20;
    let hist = empirical_density(&trajs, 0.2, &grid).unwrap();
    let alive = (0..trajs.len()).filter(|&p| trajs.alive(p, step)).count();
    let mass: f64 = hist.iter().sum::<f64>() * grid.dx();
    assert!((mass - alive as f64 / trajs.len() as f64).abs() < 1e-12);
}

#[test]
fn conditional_mass_without_killing_is_one() {
    let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
    let domain = DomainSpec::truncated_line(-8.0, 8.0, 1.0).unwrap();
    let grid = Grid::new(&domain, 161).unwrap();
    let coeffs = CoefficientSet::new(Family::DriftRandom { kappa: 0.25 }, 1, &[0.6, 0.8]).unwrap();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let p0 = DensitySampler::new(&grid, &grid.sample(|x| gaussian(x, 0.2))).unwrap();
    let one = |_: f64, _: f64, _: &[f64]| 1.0;
    let zero = |_: f64, _: f64, _: &[f64]| 0.0;
    let path = tree.leaf_path(6);
    let est = conditional_functional(&sim, &one, &path, &[0.25, 1.0], 1000, 0.05, &p0, 11).unwrap();
    assert!(est.iter().all(|e| e.mean == 1.0 && e.stderr == 0.0));
    let est = conditional_functional(&sim, &zero, &path, &[0.5], 100, 0.05, &p0, 11).unwrap();
    assert_eq!(est[0].mean, 0.0);
}

#[test]
fn conditional_estimates_average_to_unconditional() {
    let tree = ScenarioTree::new(1, 3, 0.75).unwrap();
    let domain = DomainSpec::interval(-1.0, 1.0, 0.75).unwrap();
    let grid = Grid::new(&domain, 81).unwrap();
    let coeffs = CoefficientSet::new(Family::DriftRandom { kappa: 0.5 }, 1, &[0.6, 0.8]).unwrap();
    let sim = Simulator {
        coeffs: &coeffs,
        tree: &tree,
        domain: &domain,
    };
    let p0 = DensitySampler::new(&grid, &grid.sample(|x| 1.0 - x * x)).unwrap();
    let phi = |x: f64, _: f64, _: &[f64]| (2.0 * x).cos();
    let m = 4000;
    let mut mean = 0.0;
    let mut var = 0.0;
    for leaf in 0..tree.n_leaves() {
        let e = conditional_functional(&sim, &phi, &tree.leaf_path(leaf), &[0.5], m, 0.025, &p0, 100 + leaf as u64)
            .unwrap()[0];
        mean += e.mean * tree.prob(3);
        var += (e.stderr * tree.prob(3)).powi(2);
    }
    let bundle = sampled_paths(&tree, m * tree.n_leaves(), 2, 0.025, 12).unwrap();
    let u = sim
        .functional_at_times(Initial::Density(&p0), &bundle, &phi, &[0.5])
        .unwrap()[0];
    let sigma = (var + u.stderr * u.stderr).sqrt();
    assert!((mean - u.mean).abs() <= 3.0 * sigma, "{mean} vs {u:?}");
}

#[test]
fn free_component_increment_variance() {
    let tree = ScenarioTree::new(1, 4, 1.0).unwrap();
    let bundle = bridge_paths(&tree, &tree.leaf_path(3), 100_000, 2, 0.05, 13).unwrap();
    let mut samples = Vec::with_capacity(100_000);
    for i in 0..100_000 {
        let p = bundle.path(i);
        samples.push(p.increments[2 * 7 + 1].powi(2));
    }
    let e = EstimatorResult::from_samples(&samples);
    assert!((e.mean - 0.05).abs() <= 3.0 * e.stderr, "{e:?}");
}

#[test]
fn brownian_mode_visits_leaves_uniformly() {
    let tree = ScenarioTree::new(1, 2, 1.0).unwrap();
    let bundle = brownian_paths(&tree, 40_000, 1, 0.05, 14).unwrap();
    let mut counts = [0usize; 4];
    for i in 0..bundle.count {
        counts[bundle.path(i).leaf] += 1;
    }
    // Binomial stderr of each count is sqrt(40000 * 3/16) ~ 87.
    for c in counts {
        assert!((c as f64 - 10_000.0).abs() < 4.0 * 87.0, "{counts:?}");
    }
}
