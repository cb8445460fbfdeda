//! Genetic search over placement vectors: a weighted-sum GA and NSGA-II.
//!
//! A chromosome holds one device id per service in row-major order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    evaluate_unchecked, weighted_objective, Application, DeviceSet, NormalizationBounds, ObjectivePoint, Placement,
    WeightVector,
};
use crate::pareto::{crowding_distance, fast_nondominated_sort, hypervolume};
use crate::oracle::insert_into_front;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<usize>,
}

impl Chromosome {
    pub fn random(len: usize, devices: usize, rng: &mut impl Rng) -> Self {
        Self { genes: (0..len).map(|_| rng.gen_range(0..devices)).collect() }
    }

    pub fn to_placement(&self) -> Placement {
        Placement::new(self.genes.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMode {
    /// Each offspring mutates with the configured probability by redrawing
    /// one uniformly chosen gene.
    Offspring,
    /// Every gene is redrawn independently with probability
    /// `mutation_prob`.
    PerGene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverKind {
    Uniform,
    OnePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvoConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub mutation: MutationMode,
    pub crossover: CrossoverKind,
    pub tournament_size: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            generations: 200,
            mutation_prob: 0.15,
            mutation: MutationMode::PerGene,
            crossover: CrossoverKind::OnePoint,
            tournament_size: 2,
            elitism: 1,
            seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.population_size % 2 != 0 {
            return Err(Error::Config(format!("population size {} must be even and positive", self.population_size)));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::Config(format!("mutation probability {} outside [0, 1]", self.mutation_prob)));
        }
        if self.tournament_size == 0 || self.elitism > self.population_size {
            return Err(Error::Config("tournament size must be >= 1 and elitism <= population".into()));
        }
        Ok(())
    }
}

struct Variation<'a> {
    config: &'a EvoConfig,
    devices: usize,
}

impl Variation<'_> {
    fn crossover(&self, a: &Chromosome, b: &Chromosome, rng: &mut impl Rng) -> Chromosome {
        let genes = match self.config.crossover {
            CrossoverKind::Uniform => {
                a.genes.iter().zip(&b.genes).map(|(&x, &y)| if rng.gen_bool(0.5) { x } else { y }).collect()
            }
            CrossoverKind::OnePoint => {
                let cut = rng.gen_range(0..=a.genes.len());
                a.genes[..cut].iter().chain(&b.genes[cut..]).copied().collect()
            }
        };
        Chromosome { genes }
    }

    fn mutate(&self, c: &mut Chromosome, rng: &mut impl Rng) {
        let n = c.genes.len();
        if n == 0 || self.config.mutation_prob == 0.0 {
            return;
        }
        match self.config.mutation {
            MutationMode::Offspring => {
                if rng.gen_bool(self.config.mutation_prob) {
                    let g = rng.gen_range(0..n);
                    c.genes[g] = rng.gen_range(0..self.devices);
                }
            }
            MutationMode::PerGene => {
                for gene in &mut c.genes {
                    if rng.gen_bool(self.config.mutation_prob) {
                        *gene = rng.gen_range(0..self.devices);
                    }
                }
            }
        }
    }

    fn child(&self, a: &Chromosome, b: &Chromosome, rng: &mut impl Rng) -> Chromosome {
        let mut c = self.crossover(a, b, rng);
        self.mutate(&mut c, rng);
        c
    }
}

fn initial_population(
    app: &Application,
    devices: &DeviceSet,
    config: &EvoConfig,
    seeds: &[Placement],
    rng: &mut impl Rng,
) -> Result<Vec<Chromosome>> {
    let mut pop = Vec::with_capacity(config.population_size);
    for p in seeds.iter().take(config.population_size) {
        p.validate(app, devices)?;
        pop.push(Chromosome { genes: p.assignment.clone() });
    }
    while pop.len() < config.population_size {
        pop.push(Chromosome::random(app.len(), devices.len(), rng));
    }
    Ok(pop)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub placement: Placement,
    pub point: ObjectivePoint,
    pub value: f64,
    /// Best-ever weighted objective after initialization and after every
    /// generation.
    pub history: Vec<f64>,
}

/// Generational GA minimizing the weighted objective; returns the best
/// chromosome ever evaluated. `seeds` pre-populate the initial population.
pub fn ga_solve(
    app: &Application,
    devices: &DeviceSet,
    weights: WeightVector,
    norms: NormalizationBounds,
    config: &EvoConfig,
    seeds: &[Placement],
) -> Result<GaResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let variation = Variation { config, devices: devices.len() };
    let fitness = |c: &Chromosome| -> Result<(f64, ObjectivePoint)> {
        let point = evaluate_unchecked(app, &c.genes, devices);
        Ok((weighted_objective(point, weights, norms)?, point))
    };
    let mut pop = initial_population(app, devices, config, seeds, &mut rng)?;
    let mut scores = pop.iter().map(&fitness).collect::<Result<Vec<_>>>()?;
    let mut best = best_index(&scores);
    let mut best_ever = (pop[best].clone(), scores[best]);
    let mut history = vec![best_ever.1 .0];
    for _ in 0..config.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
        let mut next: Vec<Chromosome> = order.iter().take(config.elitism).map(|&i| pop[i].clone()).collect();
        while next.len() < config.population_size {
            let a = tournament(&scores, config.tournament_size, &mut rng);
            let b = tournament(&scores, config.tournament_size, &mut rng);
            next.push(variation.child(&pop[a], &pop[b], &mut rng));
        }
        pop = next;
        scores = pop.iter().map(&fitness).collect::<Result<Vec<_>>>()?;
        best = best_index(&scores);
        if scores[best].0 < best_ever.1 .0 {
            best_ever = (pop[best].clone(), scores[best]);
        }
        history.push(best_ever.1 .0);
    }
    let (c, (value, point)) = best_ever;
    Ok(GaResult { placement: c.to_placement(), point, value, history })
}

fn best_index(scores: &[(f64, ObjectivePoint)]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.0 < scores[best].0 {
            best = i;
        }
    }
    best
}

fn tournament(scores: &[(f64, ObjectivePoint)], size: usize, rng: &mut impl Rng) -> usize {
    let mut best = rng.gen_range(0..scores.len());
    for _ in 1..size {
        let c = rng.gen_range(0..scores.len());
        if scores[c].0 < scores[best].0 {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub population: usize,
    pub front_size: usize,
    pub hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgaResult {
    /// Every non-dominated point evaluated during the run, sorted by
    /// (time, cost), each with the first placement that attained it.
    pub front: Vec<(ObjectivePoint, Placement)>,
    pub population: Vec<(Chromosome, ObjectivePoint)>,
    pub history: Vec<GenerationStats>,
}

impl NsgaResult {
    pub fn front_points(&self) -> Vec<ObjectivePoint> {
        self.front.iter().map(|(p, _)| *p).collect()
    }
}

/// Rank and crowding distance of every member.
fn rank_and_crowd(points: &[ObjectivePoint]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in fast_nondominated_sort(points).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(points, front)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd)
}

fn crowded_better(rank: &[usize], crowd: &[f64], a: usize, b: usize) -> bool {
    rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
}

/// Elitist environmental selection of `size` members out of `points`.
/// Members repeating an objective point already present earlier are
/// considered only after every distinct point.
fn environmental_selection(points: &[ObjectivePoint], size: usize) -> Vec<usize> {
    let mut distinct = Vec::new();
    let mut repeats = Vec::new();
    for i in 0..points.len() {
        if points[..i].contains(&points[i]) {
            repeats.push(i);
        } else {
            distinct.push(i);
        }
    }
    let mut chosen = Vec::with_capacity(size);
    for pool in [distinct, repeats] {
        if chosen.len() == size {
            break;
        }
        let sub: Vec<ObjectivePoint> = pool.iter().map(|&i| points[i]).collect();
        for front in fast_nondominated_sort(&sub) {
            let room = size - chosen.len();
            if front.len() <= room {
                chosen.extend(front.iter().map(|&j| pool[j]));
            } else {
                let crowd = crowding_distance(&sub, &front);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&a, &b| crowd[b].partial_cmp(&crowd[a]).unwrap_or(Ordering::Equal));
                chosen.extend(order.iter().take(room).map(|&k| pool[front[k]]));
            }
            if chosen.len() == size {
                break;
            }
        }
    }
    chosen
}

/// NSGA-II over (time, cost). The hypervolume of each generation's rank-0
/// front is measured against `norms` as reference point.
pub fn nsga2_solve(
    app: &Application,
    devices: &DeviceSet,
    norms: NormalizationBounds,
    config: &EvoConfig,
    seeds: &[Placement],
) -> Result<NsgaResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let variation = Variation { config, devices: devices.len() };
    let reference = ObjectivePoint::new(norms.max_time, norms.max_cost);
    let eval = |c: &Chromosome| evaluate_unchecked(app, &c.genes, devices);
    let mut pop = initial_population(app, devices, config, seeds, &mut rng)?;
    let mut points: Vec<ObjectivePoint> = pop.iter().map(eval).collect();
    let mut archive: Vec<(ObjectivePoint, Vec<usize>)> = Vec::new();
    for (c, &p) in pop.iter().zip(&points) {
        insert_into_front(&mut archive, p, &c.genes);
    }
    let stats = |generation: usize, points: &[ObjectivePoint]| {
        let front: Vec<ObjectivePoint> =
            fast_nondominated_sort(points).first().map_or(Vec::new(), |f| f.iter().map(|&i| points[i]).collect());
        GenerationStats {
            generation,
            population: points.len(),
            front_size: crate::pareto::pareto_front(&front).len(),
            hypervolume: hypervolume(&front, reference),
        }
    };
    let mut history = vec![stats(0, &points)];
    for generation in 1..=config.generations {
        let (rank, crowd) = rank_and_crowd(&points);
        let pick = |rng: &mut ChaCha8Rng| {
            let a = rng.gen_range(0..pop.len());
            let b = rng.gen_range(0..pop.len());
            if crowded_better(&rank, &crowd, b, a) {
                b
            } else {
                a
            }
        };
        let mut offspring = Vec::with_capacity(config.population_size);
        while offspring.len() < config.population_size {
            let a = pick(&mut rng);
            let b = pick(&mut rng);
            offspring.push(variation.child(&pop[a], &pop[b], &mut rng));
        }
        let mut union_points = points.clone();
        union_points.extend(offspring.iter().map(eval));
        for (c, &p) in offspring.iter().zip(&union_points[pop.len()..]) {
            insert_into_front(&mut archive, p, &c.genes);
        }
        let mut union = pop;
        union.extend(offspring);
        let chosen = environmental_selection(&union_points, config.population_size);
        pop = chosen.iter().map(|&i| union[i].clone()).collect();
        points = chosen.iter().map(|&i| union_points[i]).collect();
        history.push(stats(generation, &points));
    }
    let mut front: Vec<(ObjectivePoint, Placement)> =
        archive.into_iter().map(|(p, genes)| (p, Placement::new(genes))).collect();
    front.sort_by(|a, b| a.0.time.total_cmp(&b.0.time).then(a.0.cost.total_cmp(&b.0.cost)));
    Ok(NsgaResult { front, population: pop.into_iter().zip(points).collect(), history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_scenario, ScenarioConfig};
    use crate::model::fixtures::device;
    use crate::oracle::{brute_force, DEFAULT_ENUMERATION_CAP};

    fn small(seed: u64) -> (Application, DeviceSet) {
        let cfg = ScenarioConfig {
            device_count: 2,
            rows_per_app: 3,
            op_count: 1.0,
            applications: 1,
            ..ScenarioConfig::desk().with_seed(seed)
        };
        let mut sc = generate_scenario(&cfg).unwrap();
        (sc.applications.remove(0), sc.devices)
    }

    #[test]
    fn config_validation() {
        assert!(EvoConfig { population_size: 3, ..EvoConfig::default() }.validate().is_err());
        assert!(EvoConfig { mutation_prob: 1.5, ..EvoConfig::default() }.validate().is_err());
        EvoConfig::default().validate().unwrap();
    }

    #[test]
    fn identical_population_without_mutation_is_a_fixed_point() {
        let (app, devices) = small(1);
        let norms = NormalizationBounds::analytic(&app, &devices).unwrap();
        let seed = Placement::new(vec![1, 2, 0, 1, 1, 2, 0, 0, 1]);
        let config = EvoConfig { population_size: 10, generations: 20, mutation_prob: 0.0, ..EvoConfig::default() };
        let seeds = vec![seed.clone(); 10];
        let r = ga_solve(&app, &devices, WeightVector::BALANCED, norms, &config, &seeds).unwrap();
        assert_eq!(r.placement, seed);
    }

    #[test]
    fn ga_best_ever_is_monotone_and_matches_the_oracle_on_2x2() {
        let app = Application::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]], &[]).unwrap();
        let devices = DeviceSet::new(vec![
            device(0, 30.0, 20.0, true),
            crate::model::Device { id: 1, speed: 2.0, latency: 4.0, cost: 6.0, is_cloud: false },
            crate::model::Device { id: 2, speed: 0.5, latency: 1.0, cost: 2.0, is_cloud: false },
        ])
        .unwrap();
        let norms = NormalizationBounds::analytic(&app, &devices).unwrap();
        let w = WeightVector::BALANCED;
        let oracle = brute_force(&app, &devices, &[w], norms, DEFAULT_ENUMERATION_CAP).unwrap();
        let config = EvoConfig { population_size: 20, generations: 30, seed: 3, ..EvoConfig::default() };
        let r = ga_solve(&app, &devices, w, norms, &config, &[]).unwrap();
        assert!((r.value - oracle.weighted[0].value).abs() < 1e-12);
        assert!(r.history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn nsga_population_size_and_hypervolume() {
        let (app, devices) = small(2);
        let norms = NormalizationBounds::analytic(&app, &devices).unwrap();
        let config = EvoConfig { population_size: 40, generations: 60, seed: 5, ..EvoConfig::default() };
        let r = nsga2_solve(&app, &devices, norms, &config, &[]).unwrap();
        assert!(r.history.iter().all(|g| g.population == 40));
        assert!(r.history.windows(2).all(|p| p[1].hypervolume >= p[0].hypervolume));
        for (point, placement) in &r.front {
            assert_eq!(*point, crate::model::evaluate(&app, placement, &devices).unwrap());
        }
    }

    #[test]
    fn nsga_recovers_the_front_of_a_small_instance() {
        let (app, devices) = small(3);
        let norms = NormalizationBounds::analytic(&app, &devices).unwrap();
        let oracle = brute_force(&app, &devices, &[], norms, DEFAULT_ENUMERATION_CAP).unwrap();
        let config = EvoConfig { population_size: 50, generations: 100, seed: 7, ..EvoConfig::default() };
        let r = nsga2_solve(&app, &devices, norms, &config, &[]).unwrap();
        assert_eq!(r.front_points(), oracle.front_points());
    }

    #[test]
    fn identical_members_form_one_boundary_front() {
        let points = vec![ObjectivePoint::new(3.0, 4.0); 6];
        let (rank, crowd) = rank_and_crowd(&points);
        assert!(rank.iter().all(|&r| r == 0));
        assert!(crowd.iter().all(|c| c.is_infinite()));
    }

    #[test]
    fn selection_prefers_distinct_points() {
        let p = |t, c| ObjectivePoint::new(t, c);
        let points = vec![p(1.0, 5.0), p(1.0, 5.0), p(1.0, 5.0), p(2.0, 6.0), p(5.0, 1.0)];
        let chosen = environmental_selection(&points, 3);
        assert_eq!(chosen.len(), 3);
        assert!(chosen.contains(&3) && chosen.contains(&4) && chosen.contains(&0));
    }

    #[test]
    fn solvers_are_deterministic() {
        let (app, devices) = small(4);
        let norms = NormalizationBounds::analytic(&app, &devices).unwrap();
        let config = EvoConfig { population_size: 20, generations: 10, seed: 9, ..EvoConfig::default() };
        let a = nsga2_solve(&app, &devices, norms, &config, &[]).unwrap();
        assert_eq!(a, nsga2_solve(&app, &devices, norms, &config, &[]).unwrap());
        let w = WeightVector::BALANCED;
        assert_eq!(
            ga_solve(&app, &devices, w, norms, &config, &[]).unwrap(),
            ga_solve(&app, &devices, w, norms, &config, &[]).unwrap()
        );
    }
}
