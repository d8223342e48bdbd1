import filecmp
import os

import numpy as np
import pytest

from omrn.utils.filters import DatasetError, validate_sample
from omrn.utils.synthetic import (SynthConfig, generate_synthetic, nearest_prototype_tube,
                                  write_synthetic)


def test_same_seed_same_dataset():
    a = generate_synthetic(SynthConfig(num_samples=3, noise_std=0.1, seed=7))
    b = generate_synthetic(SynthConfig(num_samples=3, noise_std=0.1, seed=7))
    for x, y in zip(a.samples, b.samples):
        np.testing.assert_array_equal(x.regions, y.regions)
        np.testing.assert_array_equal(x.boxes, y.boxes)
        assert x.gt_segment == y.gt_segment
        assert x.words == y.words


def test_written_files_are_identical(tmp_path):
    cfg = SynthConfig(num_samples=2, seed=7)
    first = write_synthetic(cfg, str(tmp_path / 'a'))
    second = write_synthetic(cfg, str(tmp_path / 'b'))
    names = sorted(os.listdir(str(tmp_path / 'a')))
    assert names == sorted(os.listdir(str(tmp_path / 'b')))
    _, mismatch, errors = filecmp.cmpfiles(os.path.dirname(first), os.path.dirname(second), names,
                                           shallow=False)
    assert mismatch == [] and errors == []


def test_samples_are_valid():
    cfg = SynthConfig(num_samples=5, N=12, K=5, T=3, seed=11)
    for sample in generate_synthetic(cfg).samples:
        validate_sample(sample)
        assert sample.regions.shape == (12, 5, 16)
        assert len(sample.noun_indices) == 3
        assert 3 <= len(sample.gt_segment) <= 6


def test_invalid_configs():
    with pytest.raises(DatasetError):
        SynthConfig(K=5, T=9).validate()
    with pytest.raises(DatasetError):
        generate_synthetic(SynthConfig(num_classes=3, T=3))
    with pytest.raises(DatasetError):
        generate_synthetic(SynthConfig(sentence_length=2, T=3))


def test_planted_tube_recovered():
    dataset = generate_synthetic(SynthConfig(num_samples=4, N=12, K=5, T=3, seed=7))
    for sample, main_class in zip(dataset.samples, dataset.main_classes):
        segment, boxes = nearest_prototype_tube(sample, dataset.class_prototypes[main_class])
        assert segment == sample.gt_segment
        np.testing.assert_array_equal(np.array(boxes, dtype=np.float32), sample.gt_boxes)


def test_auxiliary_objects_present_in_every_frame():
    dataset = generate_synthetic(SynthConfig(num_samples=2, T=3, seed=4))
    for sample in dataset.samples:
        for t in range(1, 3):
            word = sample.words[sample.noun_indices[t]]
            segment, _ = nearest_prototype_tube(sample, dataset.class_prototypes[word])
            assert (segment.s, segment.e) == (1, sample.num_frames)


def test_interrogative_samples():
    dataset = generate_synthetic(SynthConfig(num_samples=3, seed=2, interrogative_rate=1.0))
    for sample in dataset.samples:
        assert sample.sentence_type == 'interrogative'
        assert sample.words[sample.noun_indices[0]] == 12
