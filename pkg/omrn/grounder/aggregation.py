import logging

import numpy as np
import torch
import torch.nn as nn

from omrn.grounder.layers import bias, weight
from omrn.utils.geometry import box_iou, pairwise_iou

logger = logging.getLogger(__name__)


def _cosine(a, b):
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError("Cosine similarity is undefined for a zero-norm region feature")
    return float(np.dot(a, b) / (norm_a * norm_b))


def linking_score(feature1, box1, frame1, feature2, box2, frame2, alpha=0.6):
    """
    Linking score of two regions in different frames.

        s = cos(r1, r2) + alpha / |n2 - n1| * IoU(b1, b2)

    Parameters
    ----------
    feature1, feature2 : array-like
        region features
    box1, box2 : omrn.utils.geometry.BoundingBox
    frame1, frame2 : int
        frame indices, must differ
    alpha : float, optional
        balance coefficient (the default is 0.6)
    """
    if frame1 == frame2:
        raise ValueError("Linking score needs regions of two different frames")
    cosine = _cosine(np.asarray(feature1, dtype=np.float64), np.asarray(feature2, dtype=np.float64))
    return cosine + alpha / abs(frame2 - frame1) * box_iou(box1, box2)


def select_links(features, boxes, alpha=0.6, radius=5):
    """
    For every region, the best-linked region of each neighbour frame.

    Parameters
    ----------
    features : numpy.ndarray, shape [N, K, D]
    boxes : numpy.ndarray, shape [N, K, 4]
    alpha : float, optional
    radius : int, optional
        L, number of neighbour frames on each side (the default is 5)

    Returns
    -------
    links : numpy.ndarray of int, shape [N, K, 2L]
        region index chosen in frames n-L..n-1, n+1..n+L; -1 where the frame is
        outside the video. Ties go to the lowest region index.
    """
    n_frames, n_regions, _ = features.shape
    links = np.full((n_frames, n_regions, 2 * radius), -1, dtype=np.int64)
    if radius == 0 or n_frames == 1:
        return links

    features = features.astype(np.float64)
    norms = np.linalg.norm(features, axis=-1)
    if np.any(norms == 0):
        frame, region = np.argwhere(norms == 0)[0]
        raise ValueError("Zero-norm feature at frame {} region {}: cosine undefined".format(
            frame + 1, region + 1))
    unit = features / norms[..., None]

    offsets = [d for d in range(-radius, radius + 1) if d != 0]
    for n in range(n_frames):
        for slot, offset in enumerate(offsets):
            other = n + offset
            if other < 0 or other >= n_frames:
                continue
            score = unit[n] @ unit[other].T + alpha / abs(offset) * pairwise_iou(boxes[n], boxes[other])
            links[n, :, slot] = np.argmax(score, axis=1)
    return links


def pool_regions(features, boxes, alpha=0.6, radius=5):
    """
    Mean of each region with its linked neighbours (truncated at the video borders).

    Returns
    -------
    numpy.ndarray, shape [N, K, D], float64
    """
    features = np.asarray(features, dtype=np.float64)
    links = select_links(features, boxes, alpha, radius)
    n_frames, n_regions, _ = features.shape

    pooled = features.copy()
    counts = np.ones((n_frames, n_regions, 1))
    offsets = [d for d in range(-radius, radius + 1) if d != 0]
    for slot, offset in enumerate(offsets):
        for n in range(n_frames):
            chosen = links[n, :, slot]
            if chosen[0] < 0:
                continue
            pooled[n] += features[n + offset, chosen]
            counts[n] += 1
    return pooled / counts


class TemporalAggregation(nn.Module):
    """Linear transform of the pooled region features."""

    def __init__(self, region_dim, out_dim=256):
        super(TemporalAggregation, self).__init__()
        self.W_agg = weight(out_dim, region_dim)
        self.b_agg = bias(out_dim)

    def forward(self, pooled):
        return pooled @ self.W_agg.t() + self.b_agg


def aggregate_regions(sample, module, alpha=0.6, radius=5):
    """
    Temporal region aggregation of a whole sample.

    Parameters
    ----------
    sample : omrn.utils.converters.VideoSample
    module : TemporalAggregation
    alpha, radius : see `select_links`

    Returns
    -------
    torch.Tensor, shape [N, K, out_dim]
    """
    pooled = pool_regions(sample.regions, sample.boxes, alpha, radius)
    return module(torch.as_tensor(pooled, dtype=module.W_agg.dtype))
