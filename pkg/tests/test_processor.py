import numpy as np
import pytest

from omrn.processor.region_sklearn import RegionProcessor, segment_iou
from omrn.utils.synthetic import SynthConfig, generate_synthetic


def synthetic_samples(**kwargs):
    params = dict(num_samples=2, N=12, K=5, T=3, seed=7)
    params.update(kwargs)
    return generate_synthetic(SynthConfig(**params)).samples


def test_segment_iou():
    bounds = np.array([[1, 5], [6, 10], [5, 10]])
    np.testing.assert_allclose(segment_iou(bounds, (1, 5)), [1.0, 0.0, 1. / 10])


def test_features_of_a_sample():
    samples = synthetic_samples()
    features = RegionProcessor(widths=(3, 5)).fit_transform(samples)
    assert len(features) == 2

    for sample, feats in zip(samples, features):
        s, e = sample.gt_segment
        assert feats.pooled.shape == (12, 5, 16)
        assert feats.geometry.shape == (12, 5, 5, 4)
        assert feats.candidates.shape == (12, 2, 2)
        assert feats.temporal_targets.shape == (12, 2)
        assert list(np.flatnonzero(feats.gt_mask) + 1) == list(range(s, e + 1))

        # synthetic slots are disjoint: one region matches the ground truth box exactly
        inside = feats.spatial_targets[feats.gt_mask]
        np.testing.assert_allclose(np.sort(inside, axis=1)[:, -1], 1.0, atol=1e-6)
        np.testing.assert_allclose(np.sort(inside, axis=1)[:, :-1], 0.0)
        assert np.all(feats.spatial_targets[~feats.gt_mask] == 0.)
        assert feats.temporal_targets.max() <= 1.0


def test_without_temporal_aggregation():
    samples = synthetic_samples(noise_std=0.1)
    raw = RegionProcessor(ablations=('TA',)).fit_transform(samples)
    pooled = RegionProcessor().fit_transform(samples)
    np.testing.assert_array_equal(raw[0].pooled, samples[0].regions.astype(np.float64))
    assert not np.allclose(pooled[0].pooled, raw[0].pooled)


def test_parallel_transform_matches_sequential():
    samples = synthetic_samples(num_samples=3, noise_std=0.1)
    sequential = RegionProcessor().fit_transform(samples)
    parallel = RegionProcessor(n_jobs=2).fit_transform(samples)
    for a, b in zip(sequential, parallel):
        np.testing.assert_array_equal(a.pooled, b.pooled)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        RegionProcessor(widths=(5, 3)).fit([])
    with pytest.raises(ValueError):
        RegionProcessor(widths=(0,)).fit([])
    with pytest.raises(ValueError):
        RegionProcessor(radius=-1).fit([])
