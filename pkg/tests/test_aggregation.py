import numpy as np
import pytest
import torch

from omrn.grounder.aggregation import (TemporalAggregation, aggregate_regions, linking_score,
                                       pool_regions, select_links)
from omrn.grounder.layers import xavier_init
from omrn.utils.geometry import BoundingBox
from omrn.utils.synthetic import SynthConfig, generate_synthetic


def test_linking_score_hand_value():
    box = BoundingBox(10, 10, 4, 4)
    assert linking_score([1., 0.], box, 1, [2., 0.], box, 3, alpha=0.6) == pytest.approx(1.3)
    assert linking_score([1., 0.], box, 1, [0., 1.], BoundingBox(50, 50, 4, 4), 2) == pytest.approx(0.0)


def test_linking_score_errors():
    box = BoundingBox(10, 10, 4, 4)
    with pytest.raises(ValueError):
        linking_score([1., 0.], box, 2, [1., 0.], box, 2)
    with pytest.raises(ValueError):
        linking_score([0., 0.], box, 1, [1., 0.], box, 2)


def test_select_links_follows_appearance():
    features = np.array([[[1., 0.], [0., 1.]],
                         [[0., 1.], [1., 0.]]])
    boxes = np.tile([10., 10., 4., 4.], (2, 2, 1))
    links = select_links(features, boxes, alpha=0.6, radius=1)
    assert links.shape == (2, 2, 2)
    # frame 1 has no previous frame, frame 2 no next one
    assert list(links[0, :, 0]) == [-1, -1]
    assert list(links[0, :, 1]) == [1, 0]
    assert list(links[1, :, 0]) == [1, 0]
    assert list(links[1, :, 1]) == [-1, -1]


def test_select_links_ties_go_to_lowest_index():
    features = np.ones((2, 3, 2))
    boxes = np.tile([10., 10., 4., 4.], (2, 3, 1))
    links = select_links(features, boxes, radius=1)
    assert np.all(links[0, :, 1] == 0)


def test_zero_norm_feature_rejected():
    features = np.ones((2, 2, 3))
    features[1, 0] = 0.
    with pytest.raises(ValueError, match='frame 2 region 1'):
        select_links(features, np.tile([10., 10., 4., 4.], (2, 2, 1)), radius=1)


def test_pool_regions_truncates_at_borders():
    features = np.array([[[1., 0.]], [[3., 0.]], [[5., 0.]]])
    boxes = np.tile([10., 10., 4., 4.], (3, 1, 1))
    pooled = pool_regions(features, boxes, radius=1)
    np.testing.assert_allclose(pooled[:, 0, 0], [2., 3., 4.])


def test_no_neighbours_keeps_raw_features():
    sample = generate_synthetic(SynthConfig(num_samples=1, noise_std=0.1, seed=3)).samples[0]
    np.testing.assert_allclose(pool_regions(sample.regions, sample.boxes, radius=0),
                               sample.regions.astype(np.float64))
    single = sample.regions[:1]
    np.testing.assert_allclose(pool_regions(single, sample.boxes[:1], radius=5),
                               single.astype(np.float64))


def test_aggregate_regions_shape():
    sample = generate_synthetic(SynthConfig(num_samples=1, N=6, K=4, seed=3)).samples[0]
    module = TemporalAggregation(region_dim=16, out_dim=8)
    xavier_init(module.W_agg, torch.Generator().manual_seed(0))
    regions = aggregate_regions(sample, module, radius=2)
    assert regions.shape == (6, 4, 8)
    assert torch.isfinite(regions).all()


def initialized_aggregation(region_dim=16, out_dim=8):
    module = TemporalAggregation(region_dim=region_dim, out_dim=out_dim).double()
    generator = torch.Generator().manual_seed(0)
    xavier_init(module.W_agg, generator)
    with torch.no_grad():
        module.b_agg.uniform_(-1., 1., generator=generator)
    return module


def test_aggregate_regions_without_neighbours_is_linear():
    sample = generate_synthetic(SynthConfig(num_samples=1, N=5, K=3, noise_std=0.1, seed=4)).samples[0]
    module = initialized_aggregation()
    regions = aggregate_regions(sample, module, radius=0)
    raw = torch.as_tensor(sample.regions.astype(np.float64))
    assert torch.equal(regions, raw @ module.W_agg.t() + module.b_agg)


def test_aggregate_regions_is_permutation_equivariant():
    sample = generate_synthetic(SynthConfig(num_samples=1, N=6, K=4, noise_std=0.1, seed=5)).samples[0]
    permuted = generate_synthetic(SynthConfig(num_samples=1, N=6, K=4, noise_std=0.1, seed=5)).samples[0]
    order = np.array([3, 1, 0, 2])
    permuted.regions = permuted.regions[:, order]
    permuted.boxes = permuted.boxes[:, order]

    module = initialized_aggregation()
    expected = aggregate_regions(sample, module, radius=2)
    regions = aggregate_regions(permuted, module, radius=2)
    assert torch.allclose(regions, expected[:, order], atol=1e-12)


def test_pool_regions_matches_exhaustive_linking():
    rng = np.random.default_rng(11)
    features = rng.normal(size=(3, 2, 4))
    boxes = np.concatenate([rng.uniform(20, 60, size=(3, 2, 2)), rng.uniform(5, 30, size=(3, 2, 2))],
                           axis=-1)

    expected = np.empty_like(features)
    for n in range(3):
        for k in range(2):
            members = [features[n, k]]
            for other in range(3):
                if other == n:
                    continue
                scores = [linking_score(features[n, k], BoundingBox(*boxes[n, k]), n + 1,
                                        features[other, j], BoundingBox(*boxes[other, j]), other + 1,
                                        alpha=0.6)
                          for j in range(2)]
                members.append(features[other, int(np.argmax(scores))])
            expected[n, k] = np.mean(members, axis=0)

    np.testing.assert_allclose(pool_regions(features, boxes, alpha=0.6, radius=2), expected)
