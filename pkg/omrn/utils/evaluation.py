""" Evaluation criteria for spatio-temporal tubes: m_tIoU, m_vIoU and vIoU@R. """
import logging

import pandas as pd

from omrn.utils.converters import load_dataset, read_predictions
from omrn.utils.geometry import BoundingBox, box_iou, temporal_iou

logger = logging.getLogger(__name__)

THRESHOLDS = (0.3, 0.5)


def viou(pred_segment, pred_boxes, gt_segment, gt_boxes):
    """
    Spatio-temporal IoU of two tubes.

    Parameters
    ----------
    pred_segment, gt_segment : omrn.utils.geometry.Segment
    pred_boxes, gt_boxes : sequence of BoundingBox (or [x, y, w, h])
        one box per frame of the corresponding segment, in frame order

    Returns
    -------
    float
        sum of per-frame box IoU over the frame intersection, divided by the size
        of the frame union
    """
    first = max(pred_segment.s, gt_segment.s)
    last = min(pred_segment.e, gt_segment.e)
    if first > last:
        return 0.0

    union = len(set(pred_segment.frames()) | set(gt_segment.frames()))
    total = 0.0
    for frame in range(first, last + 1):
        total += box_iou(BoundingBox(*pred_boxes[frame - pred_segment.s]),
                         BoundingBox(*gt_boxes[frame - gt_segment.s]))
    return total / union


def score_tubes(predictions, ground_truths):
    """Per-pair tIoU and vIoU as a DataFrame with columns tIoU, vIoU."""
    if len(predictions) != len(ground_truths):
        raise ValueError("Got {} predictions for {} ground truths".format(
            len(predictions), len(ground_truths)))

    rows = []
    for (pred_segment, pred_boxes), (gt_segment, gt_boxes) in zip(predictions, ground_truths):
        rows.append({'tIoU': temporal_iou(pred_segment, gt_segment),
                     'vIoU': viou(pred_segment, pred_boxes, gt_segment, gt_boxes)})
    return pd.DataFrame(rows, columns=['tIoU', 'vIoU'])


def summarize(scores, thresholds=THRESHOLDS):
    metrics = {'m_tIoU': float(scores['tIoU'].mean()),
               'm_vIoU': float(scores['vIoU'].mean())}
    for threshold in thresholds:
        metrics['vIoU@{}'.format(threshold)] = float((scores['vIoU'] > threshold).mean())
    return metrics


def evaluate(predictions, ground_truths, thresholds=THRESHOLDS):
    """
    Dataset-level criteria.

    Parameters
    ----------
    predictions, ground_truths : sequence of (Segment, boxes)
        aligned pairwise, one prediction per ground truth
    thresholds : tuple of float, optional
        R values of vIoU@R; a sample counts when its vIoU is strictly above R

    Returns
    -------
    dict with keys m_tIoU, m_vIoU and vIoU@R, as fractions in [0, 1]
    """
    if len(predictions) == 0:
        raise ValueError("Cannot evaluate an empty prediction set")
    return summarize(score_tubes(predictions, ground_truths), thresholds)


def evaluate_samples(samples, predictions, thresholds=THRESHOLDS):
    """
    Evaluates predictions keyed by sample id against VideoSamples.

    Returns
    -------
    metrics : dict
        overall criteria, plus one nested dict per sentence type under 'by_type'
    scores : pandas.DataFrame
        per-sample tIoU / vIoU with sample id and sentence type
    """
    ids = [sample.sample_id for sample in samples]
    missing = sorted(set(ids) - set(predictions))
    unknown = sorted(set(predictions) - set(ids))
    if missing or unknown:
        raise ValueError("Prediction ids do not match the dataset: missing {}, unknown {}".format(
            missing, unknown))

    ground_truths = [(sample.gt_segment, sample.gt_boxes) for sample in samples]
    scores = score_tubes([predictions[sid] for sid in ids], ground_truths)
    scores.insert(0, 'sample_id', ids)
    scores['sentence_type'] = [sample.sentence_type for sample in samples]

    metrics = summarize(scores, thresholds)
    metrics['by_type'] = {sentence_type: summarize(group, thresholds)
                          for sentence_type, group in scores.groupby('sentence_type')}
    return metrics, scores


def evaluate_files(manifest_path, prediction_file, thresholds=THRESHOLDS):
    """Evaluates a predictions JSON file against a dataset manifest

    Parameters
    ----------
    manifest_path : str
        dataset manifest holding the ground truth tubes
    prediction_file : str
        predictions written by omrn.utils.converters.write_predictions

    Returns
    -------
    metrics : dict
    scores : pandas.DataFrame
    """
    _, samples = load_dataset(manifest_path)
    predictions = read_predictions(prediction_file)
    return evaluate_samples(samples, predictions, thresholds)


def evaluate_pipeline(pipeline, samples, given_segment=False):
    """Evaluation method for a whole fitted GroundingPipeline

    Parameters
    ----------
    pipeline : omrn.pipeline.omrn_sklearn.GroundingPipeline
    samples : list of VideoSample
    given_segment : bool, optional
        ground only spatially inside the ground truth segment (the default is False)

    Returns
    -------
    metrics : dict
    scores : pandas.DataFrame
    """
    predictions = pipeline.predict(samples, given_segment=given_segment)
    return evaluate_samples(samples, {sid: (p.segment, p.boxes) for sid, p in predictions.items()})
