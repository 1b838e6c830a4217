//! Seeded fixtures shared by the benchmarks.

use orthodict::linalg::procrustes_polar;
use orthodict::onb::OrthoBlock;
use orthodict::sbo::UnionDictionary;
use orthodict::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `p × m` Gaussian signals.
pub fn signals(p: usize, m: usize, seed: u64) -> Matrix {
    Matrix::gaussian(p, m, &mut rng(seed))
}

pub fn random_block(p: usize, rng: &mut ChaCha8Rng) -> OrthoBlock {
    let q = procrustes_polar(&Matrix::gaussian(p, p, rng)).expect("square");
    OrthoBlock::new(q).expect("orthonormal")
}

/// Union of `k` random orthonormal `p × p` blocks.
pub fn random_union(p: usize, k: usize, seed: u64) -> UnionDictionary {
    let mut r = rng(seed);
    UnionDictionary::new((0..k).map(|_| random_block(p, &mut r)).collect()).expect("nonempty")
}
