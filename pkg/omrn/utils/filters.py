import numpy as np


class DatasetError(ValueError):
    """A dataset record that cannot be turned into a valid VideoSample."""


def validate_sample(sample, dims=None):
    """
    Checks a VideoSample against its own invariants and the dataset dimensions

    Parameters
    ----------
    sample : omrn.utils.converters.VideoSample
    dims : dict, optional
        global dims of the manifest with keys max_frames, regions, region_dim, word_dim

    Returns
    -------
    The sample itself, so the function can be used in a comprehension

    Raises
    ------
    DatasetError
        naming the sample id and the violated constraint

    Examples
    --------
    >>> from omrn.utils.filters import validate_sample
    >>> samples = [validate_sample(s, manifest.dims) for s in samples]
    """

    sid = sample.sample_id

    if sample.regions.ndim != 3:
        raise DatasetError("Sample {}: regions must be [N x K x D_r], got shape {}".format(
            sid, sample.regions.shape))
    n_frames, n_regions, region_dim = sample.regions.shape

    if sample.boxes.shape != (n_frames, n_regions, 4):
        raise DatasetError("Sample {}: boxes shape {} does not match regions {}".format(
            sid, sample.boxes.shape, sample.regions.shape[:2]))
    if not np.all(np.isfinite(sample.boxes)) or np.any(sample.boxes[..., 2:] <= 0):
        raise DatasetError("Sample {}: boxes must be finite with positive width and height".format(sid))
    if not np.all(np.isfinite(sample.regions)):
        raise DatasetError("Sample {}: region features must be finite".format(sid))

    n_words = len(sample.words)
    if sample.embeddings.ndim != 2 or sample.embeddings.shape[0] != n_words:
        raise DatasetError("Sample {}: embeddings shape {} does not match {} words".format(
            sid, sample.embeddings.shape, n_words))
    if n_words < 1:
        raise DatasetError("Sample {}: empty sentence".format(sid))
    if not np.all(np.isfinite(sample.embeddings)):
        raise DatasetError("Sample {}: word embeddings must be finite".format(sid))

    if len(sample.noun_indices) < 1:
        raise DatasetError("Sample {}: at least one noun index is required".format(sid))
    for index in sample.noun_indices:
        if index < 0 or index >= n_words:
            raise DatasetError("Sample {}: noun index {} out of range for {} words".format(
                sid, index, n_words))

    s, e = sample.gt_segment
    if s > e:
        raise DatasetError("Sample {}: ground truth start {} is after end {}".format(sid, s, e))
    if s < 1 or e > n_frames:
        raise DatasetError("Sample {}: ground truth segment [{}, {}] outside [1, {}]".format(
            sid, s, e, n_frames))
    if sample.gt_boxes.shape != (e - s + 1, 4):
        raise DatasetError("Sample {}: expected {} ground truth boxes, got shape {}".format(
            sid, e - s + 1, sample.gt_boxes.shape))
    if np.any(sample.gt_boxes[:, 2:] <= 0):
        raise DatasetError("Sample {}: ground truth boxes must have positive size".format(sid))

    if dims:
        if n_frames > dims['max_frames']:
            raise DatasetError("Sample {}: {} frames exceed manifest maximum {}".format(
                sid, n_frames, dims['max_frames']))
        expected = (dims['regions'], dims['region_dim'], dims['word_dim'])
        actual = (n_regions, region_dim, sample.embeddings.shape[1])
        if expected != actual:
            raise DatasetError("Sample {}: (K, D_r, D_w) = {} does not match manifest {}".format(
                sid, actual, expected))

    return sample
