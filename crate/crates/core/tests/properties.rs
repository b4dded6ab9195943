use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::Rng;
use reclab::dynamics::{evolve_exact, recombine};
use reclab::initdist::{monochromatic_dense, StructuredInit};
use reclab::measures::{config_index, index_config, product_measure};
use reclab::onb::SiteBases;
use reclab::profile::{count_tv_to_stationary, monochromatic_count_evolution, COUNT_CAP};
use reclab::quenched::{quenched_density, Environment};
use reclab::stats::task_rng;
use reclab::{DenseMeasure, MarginalSequence, SiteMarginal, SpinSpace, DEFAULT_CAP};

fn dense_from_seed(n: usize, k: usize, seed: u64) -> DenseMeasure {
    let mut rng = task_rng(seed, 7);
    let w = (0..k.pow(n as u32)).map(|_| rng.random::<f64>() + 1e-3).collect();
    DenseMeasure::normalize(n, k, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_product_is_symmetric_and_keeps_marginals(n in 1usize..=4, k in 2usize..=3, seed in 0u64..10_000) {
        let mu = dense_from_seed(n, k, seed);
        let nu = dense_from_seed(n, k, seed + 1);
        let ab = recombine(&mu, &nu, DEFAULT_CAP).unwrap();
        let ba = recombine(&nu, &mu, DEFAULT_CAP).unwrap();
        prop_assert!(ab.weights() == ba.weights());
        let same = recombine(&mu, &mu, DEFAULT_CAP).unwrap();
        for i in 0..n {
            let (a, b) = (same.site_marginal(i).unwrap(), mu.site_marginal(i).unwrap());
            for l in 0..k {
                prop_assert!((a[l] - b[l]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn evolution_stays_normalized(n in 1usize..=4, k in 2usize..=3, seed in 0u64..10_000) {
        let mu = dense_from_seed(n, k, seed);
        let trace = evolve_exact(&mu, 40, DEFAULT_CAP).unwrap();
        let total: f64 = trace.final_measure().weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-13);
    }
}

/// `μ_t(σ) = Σ_ξ P(ξ) h^ξ(σ) π(σ)` with every environment enumerated.
#[test]
fn annealed_average_of_quenched_laws_is_the_evolved_measure() {
    let (n, k) = (2, 2);
    let mu = dense_from_seed(n, k, 5);
    let space = SpinSpace::integers(k).unwrap();
    let marginals = (0..n).map(|i| SiteMarginal::new(mu.site_marginal(i).unwrap()).unwrap()).collect();
    let seq = MarginalSequence::new(space, marginals).unwrap();
    let bases = SiteBases::build(&seq).unwrap();
    let pi = product_measure(&seq, DEFAULT_CAP).unwrap();
    for t in 1..=2u32 {
        let leaves = 1usize << t;
        let states = k.pow(n as u32);
        let mut avg = vec![0.0; states];
        for code in 0..states.pow(leaves as u32) {
            let picks = index_config(code, leaves, states);
            let mut cells = Vec::with_capacity(leaves * n);
            let mut weight = 1.0;
            for &p in &picks {
                cells.extend(index_config(p as usize, n, k));
                weight *= mu.weights()[p as usize];
            }
            let env = Environment::new(n, k, t, cells, "enumeration").unwrap();
            for (s, slot) in avg.iter_mut().enumerate() {
                let sigma = index_config(s, n, k);
                *slot += weight * quenched_density(&env, &bases, &sigma).unwrap() * pi.weights()[s];
            }
        }
        let exact = evolve_exact(&mu, t as usize, DEFAULT_CAP).unwrap();
        for (a, b) in avg.iter().zip(exact.at(t as usize).weights()) {
            assert!((a - b).abs() < 1e-12, "t = {t}: {a} vs {b}");
        }
    }
}

#[test]
fn monochromatic_evolution_is_exchangeable() {
    let p = SiteMarginal::new(vec![0.2, 0.3, 0.5]).unwrap();
    let n = 4;
    let mu = monochromatic_dense(&p, n, DEFAULT_CAP).unwrap();
    let trace = evolve_exact(&mu, 5, DEFAULT_CAP).unwrap();
    let perm = [2usize, 0, 3, 1];
    for t in 0..=5 {
        let m = trace.at(t);
        for idx in 0..m.weights().len() {
            let sigma = index_config(idx, n, 3);
            let permuted: Vec<u8> = perm.iter().map(|&j| sigma[j]).collect();
            assert!((m.weights()[idx] - m.weights()[config_index(&permuted, 3)]).abs() < 1e-15);
        }
    }
}

#[test]
fn count_evolution_lifts_to_dense_evolution() {
    for p in [vec![0.5, 0.5], vec![0.1, 0.9], vec![0.2, 0.3, 0.5]] {
        let p = SiteMarginal::new(p).unwrap();
        let n = 4;
        let dense = evolve_exact(&monochromatic_dense(&p, n, DEFAULT_CAP).unwrap(), 4, DEFAULT_CAP).unwrap();
        for t in 0..=4u32 {
            let counts = monochromatic_count_evolution(&p, n, t, COUNT_CAP).unwrap();
            let lifted = counts.measure.lift_to_dense(DEFAULT_CAP).unwrap();
            for (a, b) in lifted.weights().iter().zip(dense.at(t as usize).weights()) {
                assert!((a - b).abs() < 1e-12, "t = {t}: {a} vs {b}");
            }
            let seq = MarginalSequence::homogeneous(SpinSpace::integers(p.k()).unwrap(), p.clone(), n).unwrap();
            let pi = product_measure(&seq, DEFAULT_CAP).unwrap();
            let dense_tv = reclab::measures::tv_distance(dense.at(t as usize), &pi).unwrap();
            assert!((count_tv_to_stationary(&counts.measure, &p).unwrap() - dense_tv).abs() < 1e-12);
        }
    }
}

#[test]
fn structured_inits_sample_their_dense_form() {
    let space = SpinSpace::integers(3).unwrap();
    let seq = MarginalSequence::random(space, 3, 0.1, &mut task_rng(3, 0)).unwrap();
    let samples = 200_000u64;
    for init in [StructuredInit::comonotonic(seq.clone()), StructuredInit::basket(seq.clone(), 2).unwrap()] {
        let dense = init.to_dense(DEFAULT_CAP).unwrap();
        let mut counts = vec![0u64; 27];
        let mut rng = task_rng(4, 0);
        let mut out = vec![0u8; 3];
        use reclab::dynamics::ConfigSampler;
        for _ in 0..samples {
            init.sample(&mut rng, &mut out);
            counts[config_index(&out, 3)] += 1;
        }
        for (c, &p) in counts.iter().zip(dense.weights()) {
            let freq = *c as f64 / samples as f64;
            let se = (p * (1.0 - p) / samples as f64).sqrt().max(1e-9);
            assert!((freq - p).abs() <= 4.5 * se, "{freq} vs {p}");
        }
    }
}
