import collections
import logging
import math

import numpy as np

from omrn.utils.converters import VideoSample, write_dataset
from omrn.utils.filters import DatasetError
from omrn.utils.geometry import Segment

logger = logging.getLogger(__name__)

_SYNTH_FIELDS = ['num_samples', 'N', 'K', 'T', 'feature_dim', 'noise_std', 'seed',
                 'word_dim', 'sentence_length', 'num_classes', 'frame_size', 'interrogative_rate']


class SynthConfig(collections.namedtuple('SynthConfig', _SYNTH_FIELDS)):
    """
    Settings of the synthetic grounding dataset.

    Parameters
    ----------
    num_samples : int
    N : int
        frames per video
    K : int
        regions per frame
    T : int
        objects mentioned per sentence, T <= K
    feature_dim : int
        region feature size D_r
    noise_std : float
        std of the Gaussian noise added to every region feature
    seed : int
        fully determines the output
    word_dim : int, optional
        word embedding size D_w (the default is 16)
    sentence_length : int, optional
        words per sentence M (the default is 8)
    num_classes : int, optional
        object classes in the vocabulary, must exceed T (the default is 12)
    frame_size : tuple, optional
        frame width and height in pixels (the default is (320, 240))
    interrogative_rate : float, optional
        fraction of samples whose main object is an interrogative word (the default is 0.0)
    """

    __slots__ = ()

    def __new__(cls, num_samples=4, N=12, K=5, T=3, feature_dim=16, noise_std=0.0, seed=0,
                word_dim=16, sentence_length=8, num_classes=12, frame_size=(320, 240),
                interrogative_rate=0.0):
        return super(SynthConfig, cls).__new__(cls, num_samples, N, K, T, feature_dim, noise_std,
                                               seed, word_dim, sentence_length, num_classes,
                                               tuple(frame_size), interrogative_rate)

    def validate(self):
        if self.T > self.K:
            raise DatasetError("Synthetic config asks for T={} objects but only K={} regions".format(
                self.T, self.K))
        if min(self.num_samples, self.N, self.K, self.T, self.feature_dim, self.word_dim) < 1:
            raise DatasetError("Synthetic sizes must be positive: {}".format(self))
        if self.num_classes <= self.T:
            raise DatasetError("num_classes={} must exceed T={}".format(self.num_classes, self.T))
        if self.sentence_length < self.T:
            raise DatasetError("sentence_length={} cannot hold T={} nouns".format(
                self.sentence_length, self.T))
        if self.noise_std < 0 or not 0 <= self.interrogative_rate <= 1:
            raise DatasetError("noise_std must be >= 0 and interrogative_rate in [0, 1]")
        return self


SyntheticDataset = collections.namedtuple(
    'SyntheticDataset', ['samples', 'class_prototypes', 'main_classes', 'embedding_table'])

NUM_FILLER_WORDS = 8


def _slot_boxes(cfg, rng):
    """Disjoint grid cells, one per region slot, as [K, 4] center/size boxes."""
    width, height = cfg.frame_size
    cols = int(math.ceil(math.sqrt(cfg.K)))
    rows = int(math.ceil(cfg.K / cols))
    cell_w, cell_h = width / cols, height / rows

    slots = np.zeros((cfg.K, 4))
    for slot in range(cfg.K):
        row, col = divmod(slot, cols)
        slots[slot] = [(col + 0.5) * cell_w, (row + 0.5) * cell_h,
                       cell_w * rng.uniform(0.4, 0.6), cell_h * rng.uniform(0.4, 0.6)]
    # drift stays inside the cell so boxes of different slots never overlap
    velocity = rng.uniform(-0.1, 0.1, size=(cfg.K, 2)) * [cell_w, cell_h] / max(cfg.N, 1)
    return slots, velocity


def _generate_sample(index, cfg, rng, class_prototypes, embedding_table):
    n_frames, n_regions = cfg.N, cfg.K
    interrogative_word = cfg.num_classes

    classes = rng.choice(cfg.num_classes, size=cfg.T, replace=False)
    pool = np.setdiff1d(np.arange(cfg.num_classes), classes)
    distractors = rng.choice(pool, size=n_regions - cfg.T, replace=len(pool) < n_regions - cfg.T)
    background = rng.choice(pool)

    # slot of object t is (main_slot + t) mod K: fixed spatial relation to the target
    main_slot = rng.integers(n_regions)
    slot_class = np.empty(n_regions, dtype=np.int64)
    for t in range(cfg.T):
        slot_class[(main_slot + t) % n_regions] = classes[t]
    free = [slot for slot in range(n_regions) if (slot - main_slot) % n_regions >= cfg.T]
    slot_class[free] = distractors

    length = rng.integers(max(1, n_frames // 4), max(1, n_frames // 2) + 1)
    start = rng.integers(1, n_frames - length + 2)
    gt_segment = Segment(start, start + length - 1)

    slots, velocity = _slot_boxes(cfg, rng)

    regions = np.zeros((n_frames, n_regions, cfg.feature_dim), dtype=np.float32)
    boxes = np.zeros((n_frames, n_regions, 4), dtype=np.float32)
    gt_boxes = []
    for n in range(n_frames):
        frame = n + 1
        order = rng.permutation(n_regions)
        for k, slot in enumerate(order):
            cls = slot_class[slot]
            if slot == main_slot and frame not in gt_segment.frames():
                cls = background
            feature = class_prototypes[cls].astype(np.float64)
            if cfg.noise_std > 0:
                feature = feature + rng.normal(0., cfg.noise_std, size=cfg.feature_dim)
            regions[n, k] = feature
            box = slots[slot].copy()
            box[:2] += velocity[slot] * n
            boxes[n, k] = box
            if slot == main_slot and frame in gt_segment.frames():
                gt_boxes.append(boxes[n, k].copy())

    positions = np.sort(rng.choice(cfg.sentence_length, size=cfg.T, replace=False))
    positions = rng.permutation(positions)
    words = rng.integers(cfg.num_classes + 1, cfg.num_classes + 1 + NUM_FILLER_WORDS,
                         size=cfg.sentence_length)
    for t in range(cfg.T):
        words[positions[t]] = classes[t]

    sentence_type = 'declarative'
    if rng.random() < cfg.interrogative_rate:
        words[positions[0]] = interrogative_word
        sentence_type = 'interrogative'

    sample = VideoSample(sample_id='synth-{:04d}'.format(index),
                         regions=regions,
                         boxes=boxes,
                         words=[int(w) for w in words],
                         embeddings=embedding_table[words],
                         noun_indices=[int(p) for p in positions],
                         gt_segment=gt_segment,
                         gt_boxes=np.stack(gt_boxes),
                         sentence_type=sentence_type)
    return sample, int(classes[0])


def generate_synthetic(cfg):
    """
    Generates videos with a planted spatio-temporal tube per sentence.

    Every sample mentions T object classes. Inside the ground truth segment exactly one
    region per frame carries the main object's prototype (plus noise); outside it the
    main object's slot shows a background class. Auxiliary objects keep a fixed slot
    offset from the target in every frame.

    Parameters
    ----------
    cfg : SynthConfig

    Returns
    -------
    SyntheticDataset

    Examples
    --------
    >>> from omrn.utils.synthetic import SynthConfig, generate_synthetic
    >>> dataset = generate_synthetic(SynthConfig(num_samples=4, N=12, K=5, T=3, seed=7))
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    class_prototypes = rng.normal(size=(cfg.num_classes, cfg.feature_dim)).astype(np.float32)
    vocabulary_size = cfg.num_classes + 1 + NUM_FILLER_WORDS
    embedding_table = rng.normal(size=(vocabulary_size, cfg.word_dim)).astype(np.float32)

    samples, main_classes = [], []
    for index in range(cfg.num_samples):
        sample, main_class = _generate_sample(index, cfg, rng, class_prototypes, embedding_table)
        samples.append(sample)
        main_classes.append(main_class)

    return SyntheticDataset(samples, class_prototypes, main_classes, embedding_table)


def write_synthetic(cfg, output_dir, split='train'):
    """Generates a synthetic dataset and writes it to `output_dir`. Returns the manifest path."""
    dataset = generate_synthetic(cfg)
    manifest_path = write_dataset(dataset.samples, output_dir, split=split)
    logger.info("Synthetic dataset with seed %d written to %s", cfg.seed, output_dir)
    return manifest_path


def nearest_prototype_tube(sample, prototype, tolerance=1e-6):
    """
    Recovers a tube by cosine matching to a known prototype.

    A frame belongs to the tube when its best region has cosine >= 1 - tolerance; the
    tube spans the first to the last such frame.

    Returns
    -------
    (Segment, list of [x, y, w, h]) or None when no frame matches
    """
    features = sample.regions.astype(np.float64)
    prototype = np.asarray(prototype, dtype=np.float64)
    cosine = features @ prototype / (np.linalg.norm(features, axis=-1) * np.linalg.norm(prototype))
    best = cosine.argmax(axis=1)
    matched = np.flatnonzero(cosine.max(axis=1) >= 1. - tolerance)
    if len(matched) == 0:
        return None

    segment = Segment(matched[0] + 1, matched[-1] + 1)
    boxes = [sample.boxes[n, best[n]].tolist() for n in range(matched[0], matched[-1] + 1)]
    return segment, boxes
