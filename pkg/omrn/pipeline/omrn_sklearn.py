import json
import os

from sklearn.base import BaseEstimator

from omrn.grounder.omrn_sklearn import CHECKPOINT_HEADER, OMRNGrounder
from omrn.processor.region_sklearn import RegionProcessor
from omrn.utils.evaluation import evaluate_samples


class GroundingPipeline(BaseEstimator):
    """
    A scikit-learn implementation of the whole grounding pipeline: region processing
    followed by the OMRN grounder.

    Parameters
    ----------
    grounder : str (path to a checkpoint directory) or OMRNGrounder, optional
    kwargs : kwargs for RegionProcessor() and OMRNGrounder()
        Please check documentation for these classes; shared names such as `widths`,
        `ablations` and `seed` go to both.

    Examples
    --------
    >>> from omrn.pipeline.omrn_sklearn import GroundingPipeline
    >>> pipeline = GroundingPipeline(steps=500, hidden_size=64, attention_size=64)
    >>> pipeline.fit(X=samples)
    >>> predictions = pipeline.predict(X=samples)

    >>> pipeline = GroundingPipeline(grounder='checkpoints/run-1')
    >>> metrics, scores = pipeline.evaluate(X=test_samples)
    """

    def __init__(self, grounder=None, **kwargs):

        # Separating kwargs
        kwargs_grounder = {key: value for key, value in kwargs.items()
                           if key in OMRNGrounder.__init__.__code__.co_varnames}

        kwargs_processor = {key: value for key, value in kwargs.items()
                            if key in RegionProcessor.__init__.__code__.co_varnames}

        unknown = set(kwargs) - set(kwargs_grounder) - set(kwargs_processor)
        if unknown:
            raise TypeError("Unknown pipeline arguments: {}".format(sorted(unknown)))

        self.grounder_settings = None
        if not grounder:
            self.grounder = OMRNGrounder(**kwargs_grounder)
        elif isinstance(grounder, str):
            self.grounder = OMRNGrounder.load(grounder)
            with open(os.path.join(grounder, CHECKPOINT_HEADER)) as f:
                saved = json.load(f).get('processor', {})
            kwargs_processor = dict(saved, **kwargs_processor)
        else:
            self.grounder = grounder

        if 'widths' not in kwargs_processor:
            kwargs_processor['widths'] = self.grounder.widths
        if 'ablations' not in kwargs_processor:
            kwargs_processor['ablations'] = self.grounder.ablations
        self.processor = RegionProcessor(**kwargs_processor)

    def transform(self, X):
        return self.processor.fit_transform(X)

    def fit(self, X, y=None):
        """ Fit the grounder on a list of VideoSamples.

        Parameters
        ----------
        X: list of omrn.utils.converters.VideoSample

        """
        self.grounder.fit(X=self.transform(X))
        return self

    def predict(self, X, given_segment=False):
        """ Compute predicted tubes

        Parameters
        ----------
        X: list of VideoSample
        given_segment: boolean
            Whether to ground only spatially inside the ground truth segment. Default: False

        Returns
        -------
        predictions: OrderedDict of sample id -> Prediction

        """
        return self.grounder.predict(self.transform(X), given_segment=given_segment)

    def evaluate(self, X, given_segment=False):
        """ Criteria of the predicted tubes against the ground truth of X

        Returns
        -------
        metrics: dict with m_tIoU, m_vIoU, vIoU@0.3, vIoU@0.5 and a per sentence type breakdown
        scores: pandas.DataFrame of per-sample tIoU and vIoU

        """
        predictions = self.predict(X, given_segment=given_segment)
        return evaluate_samples(X, {sid: (p.segment, p.boxes) for sid, p in predictions.items()})

    def save(self, path):
        """ Writes the grounder checkpoint together with the processor settings. """
        processor = self.processor.get_params()
        processor['widths'] = list(processor['widths'])
        processor['ablations'] = list(processor['ablations'])
        return self.grounder.save(path, extra={'processor': processor})
