import collections
import math

import numpy as np


class BoundingBox(collections.namedtuple("BoundingBox", ["x", "y", "w", "h"])):
    """
    An axis-aligned box in center/size convention, in pixels.

    Parameters
    ----------
    x, y : float
        center coordinates
    w, h : float
        width and height, strictly positive
    """

    __slots__ = ()

    def __new__(cls, x, y, w, h):
        x, y, w, h = float(x), float(y), float(w), float(h)
        if not all(math.isfinite(v) for v in (x, y, w, h)):
            raise ValueError("Box coordinates must be finite, got ({}, {}, {}, {})".format(x, y, w, h))
        if w <= 0 or h <= 0:
            raise ValueError("Box width and height must be positive, got w={} h={}".format(w, h))
        return super(BoundingBox, cls).__new__(cls, x, y, w, h)

    def corners(self):
        return (self.x - self.w / 2., self.y - self.h / 2.,
                self.x + self.w / 2., self.y + self.h / 2.)


class Segment(collections.namedtuple("Segment", ["s", "e"])):
    """Inclusive 1-based frame interval [s, e]."""

    __slots__ = ()

    def __new__(cls, s, e):
        s, e = int(s), int(e)
        if s > e:
            raise ValueError("Segment start {} is after its end {}".format(s, e))
        return super(Segment, cls).__new__(cls, s, e)

    def __len__(self):
        return self.e - self.s + 1

    def frames(self):
        return range(self.s, self.e + 1)


RelGeometry = collections.namedtuple("RelGeometry", ["dx", "dy", "dw", "dh"])


def box_iou(a, b):
    """Intersection over union of two BoundingBox."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()

    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0

    intersection = inter_w * inter_h
    union = a.w * a.h + b.w * b.h - intersection
    return intersection / union


def pairwise_iou(boxes1, boxes2):
    """
    Compute IoU between two sets of center/size boxes.

    Parameters
    ----------
    boxes1 : array-like, shape [..., A, 4]
    boxes2 : array-like, shape [..., B, 4]

    Returns
    -------
    numpy.ndarray, shape [..., A, B]
    """
    boxes1 = np.asarray(boxes1, dtype=np.float64)
    boxes2 = np.asarray(boxes2, dtype=np.float64)

    lt1 = boxes1[..., :2] - boxes1[..., 2:] / 2.
    rb1 = boxes1[..., :2] + boxes1[..., 2:] / 2.
    lt2 = boxes2[..., :2] - boxes2[..., 2:] / 2.
    rb2 = boxes2[..., :2] + boxes2[..., 2:] / 2.

    lt = np.maximum(lt1[..., :, None, :], lt2[..., None, :, :])
    rb = np.minimum(rb1[..., :, None, :], rb2[..., None, :, :])
    wh = np.clip(rb - lt, 0., None)
    intersection = wh[..., 0] * wh[..., 1]

    area1 = boxes1[..., 2] * boxes1[..., 3]
    area2 = boxes2[..., 2] * boxes2[..., 3]
    union = area1[..., :, None] + area2[..., None, :] - intersection
    return intersection / union


def rel_geometry(main, aux):
    """Relative geometry of `main` expressed in the frame of `aux`."""
    return RelGeometry(dx=(main.x - aux.x) / aux.w,
                       dy=(main.y - aux.y) / aux.h,
                       dw=math.log(main.w / aux.w),
                       dh=math.log(main.h / aux.h))


def rel_geometry_matrix(boxes):
    """
    All-pairs relative geometry inside each frame.

    Parameters
    ----------
    boxes : array-like, shape [N, K, 4]

    Returns
    -------
    numpy.ndarray, shape [N, K, K, 4]
        entry [n, k, l] is rel_geometry(box k, box l) in frame n
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    main = boxes[:, :, None, :]
    aux = boxes[:, None, :, :]
    return np.stack([(main[..., 0] - aux[..., 0]) / aux[..., 2],
                     (main[..., 1] - aux[..., 1]) / aux[..., 3],
                     np.log(main[..., 2] / aux[..., 2]),
                     np.log(main[..., 3] / aux[..., 3])], axis=-1)


def temporal_iou(a, b):
    """Temporal IoU of two inclusive integer segments."""
    intersection = min(a.e, b.e) - max(a.s, b.s) + 1
    if intersection <= 0:
        return 0.0
    union = max(a.e, b.e) - min(a.s, b.s) + 1
    return intersection / union
