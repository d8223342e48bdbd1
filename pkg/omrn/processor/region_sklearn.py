import collections
import logging

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from omrn.grounder.aggregation import pool_regions
from omrn.grounder.localizer import DEFAULT_WIDTHS, candidate_array
from omrn.utils.geometry import pairwise_iou, rel_geometry_matrix

logger = logging.getLogger(__name__)

GroundingFeatures = collections.namedtuple(
    'GroundingFeatures', ['sample_id', 'pooled', 'boxes', 'embeddings', 'noun_indices', 'geometry',
                          'spatial_targets', 'gt_mask', 'candidates', 'temporal_targets',
                          'gt_segment', 'sentence_type'])
GroundingFeatures.__doc__ = """
Model-ready arrays of one VideoSample.

pooled : [N, K, D_r] temporally aggregated (or raw) region features
boxes : [N, K, 4]
embeddings : [M, D_w]
noun_indices : [T], main object first
geometry : [N, K, K, 4] relative geometry of region k with respect to region l
spatial_targets : [N, K] IoU with the ground truth box, 0 outside the ground truth segment
gt_mask : [N] bool, frames of the ground truth segment
candidates : [N, H, 2] 1-based candidate boundaries
temporal_targets : [N, H] tIoU of each candidate with the ground truth segment
gt_segment : (s, e)
"""


def segment_iou(bounds, segment):
    """Vectorised temporal IoU of [..., 2] inclusive bounds against one (s, e)."""
    s, e = segment
    intersection = np.minimum(bounds[..., 1], e) - np.maximum(bounds[..., 0], s) + 1
    union = np.maximum(bounds[..., 1], e) - np.minimum(bounds[..., 0], s) + 1
    return np.where(intersection > 0, intersection / union, 0.)


def convert_sample_to_features(sample, alpha, radius, widths, aggregate=True):
    """Turns one VideoSample into GroundingFeatures."""
    n_frames, n_regions, _ = sample.regions.shape
    boxes = sample.boxes.astype(np.float64)

    if aggregate:
        pooled = pool_regions(sample.regions, boxes, alpha, radius)
    else:
        pooled = sample.regions.astype(np.float64)

    s, e = sample.gt_segment
    gt_mask = np.zeros(n_frames, dtype=bool)
    gt_mask[s - 1:e] = True

    spatial_targets = np.zeros((n_frames, n_regions))
    for frame in sample.gt_segment.frames():
        spatial_targets[frame - 1] = pairwise_iou(boxes[frame - 1], sample.gt_boxes[frame - s][None])[:, 0]

    candidates = candidate_array(n_frames, widths)
    return GroundingFeatures(sample_id=sample.sample_id,
                             pooled=pooled,
                             boxes=boxes,
                             embeddings=sample.embeddings.astype(np.float64),
                             noun_indices=np.asarray(sample.noun_indices, dtype=np.int64),
                             geometry=rel_geometry_matrix(boxes),
                             spatial_targets=spatial_targets,
                             gt_mask=gt_mask,
                             candidates=candidates,
                             temporal_targets=segment_iou(candidates, (s, e)),
                             gt_segment=(s, e),
                             sentence_type=sample.sentence_type)


class RegionProcessor(BaseEstimator, TransformerMixin):
    """
    A scikit-learn transformer turning VideoSamples into GroundingFeatures: temporal
    region aggregation (link selection and mean pooling), relative geometry, candidate
    segments and the IoU / tIoU training targets.

    Parameters
    ----------
    alpha : float, optional
        balance of the IoU term in the linking score (the default is 0.6)
    radius : int, optional
        neighbour frames L on each side used by the aggregation (the default is 5)
    widths : tuple of int, optional
        candidate segment widths (the default is (3, 9, 17, 33, 65, 97, 129, 165, 197))
    ablations : tuple of str, optional
        'TA' disables the temporal aggregation; other codes are ignored here
    n_jobs : int, optional
        joblib workers, samples are independent (the default is 1)
    verbose : bool, optional

    Examples
    --------
    >>> from omrn.processor.region_sklearn import RegionProcessor
    >>> processor = RegionProcessor(alpha=0.6, radius=5)
    >>> features = processor.fit_transform(X=samples)
    """

    def __init__(self,
                 alpha=0.6,
                 radius=5,
                 widths=DEFAULT_WIDTHS,
                 ablations=(),
                 n_jobs=1,
                 verbose=False):

        self.alpha = alpha
        self.radius = radius
        self.widths = widths
        self.ablations = ablations
        self.n_jobs = n_jobs
        self.verbose = verbose

    def fit(self, X, y=None):
        if self.alpha < 0 or self.radius < 0:
            raise ValueError("alpha and radius must be non-negative, got {} and {}".format(
                self.alpha, self.radius))
        widths = list(self.widths)
        if not widths or any(w <= 0 for w in widths) or widths != sorted(widths):
            raise ValueError("widths must be positive and ascending, got {}".format(self.widths))
        return self

    def transform(self, X):
        features = Parallel(n_jobs=self.n_jobs)(
            delayed(convert_sample_to_features)(sample, self.alpha, self.radius, tuple(self.widths),
                                                'TA' not in self.ablations)
            for sample in X)
        if self.verbose:
            logger.info("Converted %d samples into grounding features", len(features))
        return features
