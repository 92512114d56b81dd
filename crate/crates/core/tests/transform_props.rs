mod common;

use proptest::prelude::*;
use tetrolet::tetromino::{catalog, CoveringIndex, COVERING_COUNT};
use tetrolet::transform::{
    bits_per_pixel, block_costs, forward, inverse, shrink, side_info_cost, CoveringMode, ImageGrid,
    ShrinkageConfig, TetroletPyramid,
};

const LAMBDA: f64 = 25.0;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn relaxed() -> CoveringMode {
    CoveringMode::relaxed(LAMBDA).unwrap()
}

/// Input plane of every level, finest first, recomputed by shorter runs of
/// the same transform.
fn level_inputs(image: &ImageGrid, levels: usize, mode: CoveringMode) -> Vec<(usize, Vec<f64>)> {
    let mut out = vec![(image.size(), image.pixels().to_vec())];
    for l in 1..levels {
        let p = forward(image, l, mode).unwrap();
        out.push((p.lowpass_side(), p.lowpass().to_vec()));
    }
    out
}

fn blocks_of(side: usize, plane: &[f64]) -> Vec<[f64; 16]> {
    let n = side / 4;
    let mut out = Vec::with_capacity(n * n);
    for bi in 0..n {
        for bj in 0..n {
            out.push(std::array::from_fn(|cell| {
                plane[(4 * bi + cell % 4) * side + 4 * bj + cell / 4]
            }));
        }
    }
    out
}

#[derive(Default)]
struct BlockAudit {
    blocks: usize,
}

impl BlockAudit {
    /// Checks the strict argmin and, in relaxed mode, replays the
    /// tolerance-plus-frequency rule independently.
    fn check(&mut self, image: &ImageGrid, levels: usize) {
        let strict = forward(image, levels, CoveringMode::Strict).unwrap();
        for (m, (side, plane)) in level_inputs(image, levels, CoveringMode::Strict)
            .iter()
            .enumerate()
        {
            for (b, block) in blocks_of(*side, plane).iter().enumerate() {
                let costs = block_costs(block, catalog());
                let chosen = strict.levels()[m].coverings()[b].get();
                let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
                assert!(costs[chosen - 1] <= costs[0]);
                assert_eq!(costs[chosen - 1], min);
                assert!(costs[..chosen - 1].iter().all(|&c| c > min));
                self.blocks += 1;
            }
        }

        let relaxed_pyr = forward(image, levels, relaxed()).unwrap();
        let mut freq = [0u32; COVERING_COUNT];
        for (m, (side, plane)) in level_inputs(image, levels, relaxed()).iter().enumerate() {
            for (b, block) in blocks_of(*side, plane).iter().enumerate() {
                let costs = block_costs(block, catalog());
                let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
                let chosen = relaxed_pyr.levels()[m].coverings()[b].get();
                assert!(costs[chosen - 1] <= min + LAMBDA);
                let mut expect = 0;
                for c in 0..COVERING_COUNT {
                    if costs[c] <= min + LAMBDA
                        && (costs[expect] > min + LAMBDA || freq[c] > freq[expect])
                    {
                        expect = c;
                    }
                }
                assert_eq!(chosen, expect + 1);
                freq[expect] += 1;
                self.blocks += 1;
            }
        }
    }
}

#[test]
fn argmin_and_relaxation_bounds_over_corpus() {
    let mut audit = BlockAudit::default();
    for im in common::random_images(100, 32, 11) {
        audit.check(&im, 4);
    }
    let mnist = common::mnist_subset();
    for im in mnist.images.iter().take(100) {
        audit.check(im, 4);
    }
    assert!(audit.blocks >= 2 * 10_000, "{} blocks", audit.blocks);
}

#[test]
fn tight_tolerance_still_bounded() {
    // A small λ makes the admissible set non-trivial.
    let lambda = 0.3;
    let mode = CoveringMode::relaxed(lambda).unwrap();
    for im in common::random_images(20, 32, 5) {
        let pyr = forward(&im, 4, mode).unwrap();
        for (m, (side, plane)) in level_inputs(&im, 4, mode).iter().enumerate() {
            for (b, block) in blocks_of(*side, plane).iter().enumerate() {
                let costs = block_costs(block, catalog());
                let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
                let chosen = pyr.levels()[m].coverings()[b].get();
                assert!(costs[chosen - 1] <= min + lambda);
            }
        }
    }
}

#[test]
fn perfect_reconstruction_and_parseval_on_mnist() {
    let mnist = common::mnist_subset();
    for im in mnist.images.iter().take(100) {
        for mode in [CoveringMode::Strict, relaxed()] {
            let pyr = forward(im, 4, mode).unwrap();
            let back = inverse(&pyr, catalog()).unwrap();
            assert!(max_abs_diff(back.pixels(), im.pixels()) <= 1e-10);
            let e = im.energy();
            assert!((pyr.energy() - e).abs() <= 1e-8 * e.max(f64::MIN_POSITIVE));
        }
    }
}

#[test]
fn side_information_count() {
    for (n, j) in [(32, 4), (32, 1), (16, 3), (64, 5), (8, 2)] {
        let im = &common::random_images(1, n, n as u64 + j as u64)[0];
        let pyr = forward(im, j, CoveringMode::Strict).unwrap();
        let count = pyr.covering_stream().len();
        assert_eq!(count as f64, side_info_cost(n, j).unwrap());
        assert_eq!(
            count,
            pyr.levels()
                .iter()
                .map(|l| l.coverings().len())
                .sum::<usize>()
        );
    }
    assert_eq!(side_info_cost(32, 4).unwrap(), 85.0);
}

#[test]
fn relaxed_streams_have_lower_entropy_on_mnist() {
    let mnist = common::mnist_subset();
    let (mut strict, mut relaxed_stream) = (Vec::new(), Vec::new());
    for im in mnist.images.iter().take(200) {
        strict.extend(
            forward(im, 4, CoveringMode::Strict)
                .unwrap()
                .covering_stream(),
        );
        relaxed_stream.extend(forward(im, 4, relaxed()).unwrap().covering_stream());
    }
    let hs = bits_per_pixel(&strict).unwrap();
    let hr = bits_per_pixel(&relaxed_stream).unwrap();
    assert!(hs >= hr, "strict {hs} bits, relaxed {hr} bits");
}

#[test]
fn covering_one_everywhere_is_a_fixed_haar_split() {
    // λ = ∞ in effect: every block keeps the first covering.
    let im = &common::random_images(1, 16, 3)[0];
    let pyr = forward(im, 2, CoveringMode::relaxed(1e9).unwrap()).unwrap();
    assert!(pyr
        .covering_stream()
        .iter()
        .all(|&c| c == CoveringIndex::FIRST.as_u8()));
}

fn image_strategy() -> impl Strategy<Value = (ImageGrid, usize)> {
    prop_oneof![Just(8usize), Just(16), Just(32)].prop_flat_map(|n| {
        let max_levels = n.trailing_zeros() as usize - 1;
        (prop::collection::vec(-10.0f64..10.0, n * n), 1..=max_levels)
            .prop_map(move |(px, j)| (ImageGrid::new(n, px).unwrap(), j))
    })
}

fn mode_strategy() -> impl Strategy<Value = CoveringMode> {
    prop_oneof![
        Just(CoveringMode::Strict),
        (0.0f64..50.0).prop_map(|l| CoveringMode::relaxed(l).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn roundtrip_is_exact((im, j) in image_strategy(), mode in mode_strategy()) {
        let pyr = forward(&im, j, mode).unwrap();
        let back = inverse(&pyr, catalog()).unwrap();
        prop_assert!(max_abs_diff(back.pixels(), im.pixels()) <= 1e-10);
    }

    #[test]
    fn energy_is_preserved((im, j) in image_strategy(), mode in mode_strategy()) {
        let pyr = forward(&im, j, mode).unwrap();
        let e = im.energy();
        prop_assert!((pyr.energy() - e).abs() <= 1e-8 * e.max(1e-300));
        prop_assert_eq!(pyr.flatten().len(), im.size() * im.size());
        prop_assert_eq!(pyr.coefficient_count(), im.size() * im.size());
    }

    #[test]
    fn serialization_roundtrip((im, j) in image_strategy(), mode in mode_strategy()) {
        let pyr = forward(&im, j, mode).unwrap();
        let back = TetroletPyramid::from_bytes(&pyr.to_bytes()).unwrap();
        prop_assert_eq!(&back, &pyr);
    }

    #[test]
    fn strict_cost_never_exceeds_fixed_covering((im, _j) in image_strategy()) {
        let pyr = forward(&im, 1, CoveringMode::Strict).unwrap();
        for (b, block) in blocks_of(im.size(), im.pixels()).iter().enumerate() {
            let costs = block_costs(block, catalog());
            let chosen = pyr.levels()[0].coverings()[b].get();
            prop_assert!(costs[chosen - 1] <= costs[0]);
        }
    }

    #[test]
    fn shrinkage_only_removes_detail((im, j) in image_strategy(), t in 0.0f64..2.0) {
        let pyr = forward(&im, j, CoveringMode::Strict).unwrap();
        let s = shrink(&pyr, ShrinkageConfig::positive_part(t)).unwrap();
        prop_assert_eq!(s.lowpass(), pyr.lowpass());
        prop_assert!(s.energy() <= pyr.energy() + 1e-12);
        prop_assert!(s.highpass_sparsity(0.0) >= pyr.highpass_sparsity(0.0));
        let same = shrink(&pyr, ShrinkageConfig::default()).unwrap();
        prop_assert_eq!(same, pyr);
    }
}
