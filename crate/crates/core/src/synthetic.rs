//! Synthetic pools for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::pool::{Instance, Pool, VectorBlock};

const ALPHABET: &[&str] = &[
    "a", "b", "c", "x", "y", " ", "é", "ğ", "ş", "ж", "ы", "中", "文", "ا", "ب", "ह", "🙂", "\"", "\\", "\t",
];

/// `n` standard-normal vectors of `dim` components.
pub fn gaussian_vectors<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
        .collect()
}

/// A uniformly random direction scaled to `norm`.
pub fn random_direction<R: Rng>(rng: &mut R, dim: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-9 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

/// A short random string over a mixed-script alphabet.
pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len.max(1));
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

/// A pool of `rows` random instances. Roughly `duplicate_rate` of the rows
/// reuse the text of an earlier row; vectors are standard normal.
pub fn random_pool<R: Rng>(
    rng: &mut R,
    rows: usize,
    dim: usize,
    languages: &[&str],
    tasks: &[&str],
    duplicate_rate: f64,
) -> Pool {
    let mut instances: Vec<Instance> = Vec::with_capacity(rows);
    for id in 0..rows {
        let text = if id > 0 && rng.random_bool(duplicate_rate) {
            instances[rng.random_range(0..id)].text.clone()
        } else {
            format!("{}#{id}", random_text(rng, 12))
        };
        instances.push(Instance {
            id,
            text,
            label: rng.random_range(0..=1),
            language: languages[rng.random_range(0..languages.len())].to_string(),
            source_task: tasks[rng.random_range(0..tasks.len())].to_string(),
        });
    }
    let vecs = gaussian_vectors(rng, rows, dim);
    Pool::new(instances, VectorBlock::from_rows(dim, &vecs).expect("finite vectors")).expect("valid instances")
}

/// Label-conditional Gaussian data: class means at `offset ± (separation/2)·direction`
/// with isotropic noise `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDomain {
    /// Unit vector between the class means.
    pub direction: Vec<f64>,
    pub separation: f64,
    pub sigma: f64,
    pub offset: Vec<f64>,
}

impl ClusterDomain {
    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// The same class-conditional shape moved by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let offset = self.offset.iter().zip(shift).map(|(a, b)| a + b).collect();
        Self { offset, ..self.clone() }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, label: u8) -> Vec<f32> {
        let sign = if label == 1 { 0.5 } else { -0.5 };
        self.direction
            .iter()
            .zip(&self.offset)
            .map(|(u, o)| {
                let noise: f64 = rng.sample(StandardNormal);
                (o + sign * self.separation * u + self.sigma * noise) as f32
            })
            .collect()
    }

    /// `count` instances with fair-coin labels. Tasks are assigned round-robin.
    pub fn pool<R: Rng>(&self, rng: &mut R, count: usize, language: &str, tasks: &[&str]) -> Pool {
        let mut instances = Vec::with_capacity(count);
        let mut vecs = Vec::with_capacity(count);
        for id in 0..count {
            let label: u8 = rng.random_range(0..=1);
            let task = tasks[id % tasks.len()];
            vecs.push(self.sample(rng, label));
            instances.push(Instance {
                id,
                text: format!("{language}-{task}-{id}"),
                label,
                language: language.to_string(),
                source_task: task.to_string(),
            });
        }
        Pool::new(instances, VectorBlock::from_rows(self.dim(), &vecs).expect("finite vectors")).expect("valid instances")
    }
}

/// A low-resource target pool and a larger source pool drawn from the same
/// label-conditional distributions, the source shifted by a random offset of
/// norm `shift_norm`. Languages are `tg` (target) and `sr` (source).
#[derive(Clone, Debug)]
pub struct DomainPair {
    pub target: Pool,
    pub source: Pool,
    pub target_domain: ClusterDomain,
    pub source_domain: ClusterDomain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainPairSpec {
    pub dim: usize,
    pub separation: f64,
    pub sigma: f64,
    pub shift_norm: f64,
    pub target_count: usize,
    pub source_count: usize,
    pub seed: u64,
}

impl Default for DomainPairSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            separation: 3.0,
            sigma: 1.0,
            shift_norm: 1.0,
            target_count: 2600,
            source_count: 10_000,
            seed: 0,
        }
    }
}

pub const TARGET_LANGUAGE: &str = "tg";
pub const SOURCE_LANGUAGE: &str = "sr";
pub const SOURCE_TASKS: [&str; 4] = ["synth_a", "synth_b", "synth_c", "synth_d"];

pub fn domain_pair(spec: &DomainPairSpec) -> DomainPair {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let target_domain = ClusterDomain {
        direction: random_direction(&mut rng, spec.dim, 1.0),
        separation: spec.separation,
        sigma: spec.sigma,
        offset: vec![0.0; spec.dim],
    };
    let shift = random_direction(&mut rng, spec.dim, spec.shift_norm);
    let source_domain = target_domain.shifted(&shift);
    let target = target_domain.pool(&mut rng, spec.target_count, TARGET_LANGUAGE, &["synth_target"]);
    let source = source_domain.pool(&mut rng, spec.source_count, SOURCE_LANGUAGE, &SOURCE_TASKS);
    DomainPair {
        target,
        source,
        target_domain,
        source_domain,
    }
}
