import collections
import math

import numpy as np
import torch
import torch.nn as nn

from omrn.grounder.layers import BiGRU, bias, weight
from omrn.utils.geometry import BoundingBox, Segment

DEFAULT_WIDTHS = (3, 9, 17, 33, 65, 97, 129, 165, 197)
DEFAULT_LAMBDAS = (1.0, 1.0, 0.001, 1.0)
LOSS_NAMES = ('L_s', 'L_t', 'L_r', 'L_d')

Candidate = collections.namedtuple('Candidate', ['center', 'width_index', 'segment'])

Prediction = collections.namedtuple(
    'Prediction', ['segment', 'boxes', 'confidence', 'candidate', 'offsets', 'region_scores'])
Prediction.__doc__ = """
Predicted tube of one sample.

segment : Segment after offset adjustment
boxes : list of [x, y, w, h], one per frame of the segment
confidence : temporal confidence of the selected candidate
candidate : Candidate that was selected, before adjustment
offsets : (l_s, l_e) of the selected candidate
region_scores : [N x K] spatial scores, kept for diagnostics
"""


class Localizer(nn.Module):
    """Spatial scoring, frame attention, temporal Bi-GRU and the temporal heads."""

    def __init__(self, hidden_size=256, attention_size=256, num_widths=len(DEFAULT_WIDTHS)):
        super(Localizer, self).__init__()
        self.W_r = weight(attention_size, hidden_size)
        self.W_o = weight(attention_size, 2 * hidden_size)
        self.W_f1 = weight(attention_size, hidden_size)
        self.W_f2 = weight(attention_size, 2 * hidden_size)
        self.b_f = bias(attention_size)
        self.w_f = weight(attention_size)
        self.gru = BiGRU(hidden_size, hidden_size // 2)
        self.W_conf = weight(num_widths, hidden_size)
        self.b_conf = bias(num_widths)
        self.W_off = weight(2 * num_widths, hidden_size)
        self.b_off = bias(2 * num_widths)


def spatial_scores(final, main_object, module):
    """
    Region confidences p[n, k] = sigmoid((W_r r~)^T (W_o o_1)).

    Parameters
    ----------
    final : torch.Tensor, shape [N, K, d]
    main_object : torch.Tensor, shape [2d]
    module : Localizer
    """
    return torch.sigmoid((final @ module.W_r.t()) @ (module.W_o @ main_object))


def _soft_bce(scores, targets, epsilon):
    scores = scores.clamp(epsilon, 1 - epsilon)
    return -((1 - targets) * torch.log(1 - scores) + targets * torch.log(scores))


def spatial_loss(scores, targets, gt_mask, epsilon=1e-7):
    """
    Soft-target cross entropy of region scores against their IoU with the ground truth box,
    averaged over the ground truth frames and all regions.

    Parameters
    ----------
    scores : torch.Tensor, shape [N, K]
    targets : torch.Tensor, shape [N, K]
        IoU of each region with the ground truth box of its frame
    gt_mask : torch.BoolTensor, shape [N]
    epsilon : float, optional
        clamp of the scores (the default is 1e-7)
    """
    return _soft_bce(scores[gt_mask], targets[gt_mask], epsilon).mean()


def frame_features(final, main_object, module):
    """
    Attention-pooled frame features and their Bi-GRU context.

    Returns
    -------
    context : torch.Tensor, shape [N, d]
    pooled : torch.Tensor, shape [N, d]
    attention : torch.Tensor, shape [N, K]
    """
    logits = torch.tanh(final @ module.W_f1.t() + module.W_f2 @ main_object + module.b_f) @ module.w_f
    attention = torch.softmax(logits, dim=-1)
    pooled = torch.einsum('nk,nkd->nd', attention, final)
    return module.gru(pooled), pooled, attention


def candidate_segments(num_frames, widths=DEFAULT_WIDTHS):
    """
    All N x H candidate segments, centre-major.

    A candidate of width w centred at frame n spans
    [n - floor((w - 1) / 2), n + ceil((w - 1) / 2)] clamped to [1, N].

    Returns
    -------
    list of Candidate
    """
    candidates = []
    for center in range(1, num_frames + 1):
        for h, width in enumerate(widths):
            start = center - (width - 1) // 2
            end = center + int(math.ceil((width - 1) / 2.))
            candidates.append(Candidate(center, h, Segment(max(1, start), min(num_frames, end))))
    return candidates


def candidate_array(num_frames, widths=DEFAULT_WIDTHS):
    """Candidate boundaries as an int array [N, H, 2] of 1-based (s, e)."""
    bounds = np.array([[c.segment.s, c.segment.e] for c in candidate_segments(num_frames, widths)],
                      dtype=np.int64)
    return bounds.reshape(num_frames, len(widths), 2)


def temporal_heads(context, module):
    """
    Confidences c [N, H] in (0, 1) and boundary offsets l [N, H, 2].
    """
    confidences = torch.sigmoid(context @ module.W_conf.t() + module.b_conf)
    offsets = (context @ module.W_off.t() + module.b_off).reshape(context.shape[0], -1, 2)
    return confidences, offsets


def temporal_loss(confidences, targets, epsilon=1e-7):
    """Soft-target cross entropy of candidate confidences against their tIoU, averaged over N x H."""
    return _soft_bce(confidences, targets, epsilon).mean()


def smooth_l1(x, threshold=1.0):
    """0.5 x^2 below the threshold, |x| - 0.5 threshold above."""
    magnitude = x.abs()
    return torch.where(magnitude < threshold, 0.5 * x * x, magnitude - 0.5 * threshold)


def regression_loss(offsets, segment, gt_segment, threshold=1.0):
    """
    Smooth L1 of the selected candidate's offsets against l^_s = s - s^, l^_e = e - e^.

    Parameters
    ----------
    offsets : torch.Tensor, shape [2]
    segment : Segment
        boundaries of the selected candidate
    gt_segment : Segment
    threshold : float, optional
    """
    target = offsets.new_tensor([segment.s - gt_segment.s, segment.e - gt_segment.e])
    return smooth_l1(offsets - target, threshold).sum()


def total_loss(components, lambdas=DEFAULT_LAMBDAS):
    """lambda_1 L_s + lambda_2 L_t + lambda_3 L_r + lambda_4 L_d over a dict of components."""
    return sum(lam * components[name] for lam, name in zip(lambdas, LOSS_NAMES))


def select_candidate(confidences):
    """Index (n, h), 0-based, of the highest confidence; ties go to the lowest (n, h)."""
    flat = int(torch.argmax(confidences.reshape(-1)))
    return divmod(flat, confidences.shape[1])


def round_half_away(value):
    return int(math.floor(abs(value) + 0.5)) * (1 if value >= 0 else -1)


def adjust_segment(segment, offsets, num_frames):
    """
    s' = round(s - l_s), e' = round(e - l_e), clamped to [1, N] and reordered if needed.
    """
    start = min(max(round_half_away(segment.s - offsets[0]), 1), num_frames)
    end = min(max(round_half_away(segment.e - offsets[1]), 1), num_frames)
    if start > end:
        start, end = end, start
    return Segment(start, end)


def infer(trace, boxes, candidates, given_segment=None):
    """
    Builds the predicted tube from a forward trace.

    Parameters
    ----------
    trace : omrn.grounder.network.ForwardTrace
    boxes : numpy.ndarray, shape [N, K, 4]
    candidates : numpy.ndarray, shape [N, H, 2]
    given_segment : Segment, optional
        skip temporal selection and ground spatially inside this segment

    Returns
    -------
    Prediction
    """
    confidences = trace.confidences.detach()
    offsets = trace.offsets.detach()
    scores = trace.spatial_scores.detach().cpu().numpy()
    num_frames = scores.shape[0]

    n, h = select_candidate(confidences)
    selected = Segment(*candidates[n, h])
    l_s, l_e = (float(v) for v in offsets[n, h])
    candidate = Candidate(n + 1, h, selected)

    if given_segment is not None:
        segment = given_segment
    else:
        segment = adjust_segment(selected, (l_s, l_e), num_frames)

    chosen = scores[segment.s - 1:segment.e].argmax(axis=1)
    tube = [list(BoundingBox(*boxes[frame - 1, k])) for frame, k in zip(segment.frames(), chosen)]
    return Prediction(segment=segment,
                      boxes=tube,
                      confidence=float(confidences[n, h]),
                      candidate=candidate,
                      offsets=(l_s, l_e),
                      region_scores=scores)


def binary_entropy(targets):
    """Mean binary entropy of soft targets: the minimum of the soft-target cross entropy."""
    targets = np.clip(np.asarray(targets, dtype=np.float64), 0., 1.)
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = -(targets * np.log(targets) + (1 - targets) * np.log(1 - targets))
    return float(np.nan_to_num(terms).mean()) if terms.size else 0.0
