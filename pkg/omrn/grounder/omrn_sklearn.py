import collections
import json
import logging
import os

import numpy as np
import pandas as pd
import torch
from sklearn.base import BaseEstimator
from tqdm.autonotebook import trange

from omrn.grounder.localizer import (DEFAULT_LAMBDAS, DEFAULT_WIDTHS, LOSS_NAMES, binary_entropy,
                                     infer)
from omrn.grounder.network import NonFiniteError, OMRN, init_params, to_tensors
from omrn.utils.converters import read_tensor, write_tensor
from omrn.utils.geometry import Segment

logger = logging.getLogger(__name__)

DTYPES = {'float32': torch.float32, 'float64': torch.float64}
CHECKPOINT_HEADER = 'checkpoint.json'
HISTORY_COLUMNS = ['step'] + list(LOSS_NAMES) + ['total', 'floor']


class OMRNGrounder(BaseEstimator):
    """
    A scikit-learn estimator wrapping the OMRN network: training with Adam on the
    multi-task loss, tube inference and checkpoints.

    Parameters
    ----------
    hidden_size : int, optional
        width of region / word / frame features, each GRU direction has half of it
        (the default is 256)
    attention_size : int, optional
        width of every attention projection (the default is 256)
    widths : tuple of int, optional
        candidate segment widths; only their number H shapes the network
        (the default is (3, 9, 17, 33, 65, 97, 129, 165, 197))
    lambdas : tuple of float, optional
        weights of L_s, L_t, L_r, L_d (the default is (1.0, 1.0, 0.001, 1.0))
    smooth_l1_threshold : float, optional
        (the default is 1.0)
    bce_epsilon : float, optional
        clamp of spatial and temporal scores inside the log (the default is 1e-7)
    learning_rate : float, optional
        Adam learning rate (the default is 0.0005)
    betas : tuple of float, optional
        Adam moment decays (the default is (0.9, 0.999))
    adam_epsilon : float, optional
        (the default is 1e-8)
    steps : int, optional
        optimisation steps run by `fit` (the default is 500)
    batch_size : int, optional
        samples per step, the batch loss is their mean (the default is 4)
    seed : int, optional
        seed of the initialisation and of the batch order (the default is 42)
    init_scale : float, optional
        multiplier of the Glorot bound (the default is 1.0)
    dtype : str, optional
        'float32' or 'float64' (the default is 'float32')
    ablations : tuple of str, optional
        subset of ('OM', 'CM', 'CA') switched off in the network
    verbose_logging : bool, optional
        If true, training progress and settings are logged. (the default is False)
    output_dir : str, optional
        where `fit` writes the checkpoint and the loss log. If None, nothing is saved.

    Attributes
    ----------
    model_ : omrn.grounder.network.OMRN
    optimizer_ : torch.optim.Adam
    history_ : pandas.DataFrame
        one row per step with step, L_s, L_t, L_r, L_d, total and floor
    step_ : int
        optimisation steps taken so far

    Examples
    --------
    >>> from omrn.grounder.omrn_sklearn import OMRNGrounder
    >>> grounder = OMRNGrounder(hidden_size=64, attention_size=64, steps=500)
    >>> grounder.fit(X=features)
    >>> predictions = grounder.predict(X=features)
    """

    def __init__(self,
                 hidden_size=256,
                 attention_size=256,
                 widths=DEFAULT_WIDTHS,
                 lambdas=DEFAULT_LAMBDAS,
                 smooth_l1_threshold=1.0,
                 bce_epsilon=1e-7,
                 learning_rate=0.0005,
                 betas=(0.9, 0.999),
                 adam_epsilon=1e-8,
                 steps=500,
                 batch_size=4,
                 seed=42,
                 init_scale=1.0,
                 dtype='float32',
                 ablations=(),
                 verbose_logging=False,
                 output_dir=None):

        self.hidden_size = hidden_size
        self.attention_size = attention_size
        self.widths = widths
        self.lambdas = lambdas
        self.smooth_l1_threshold = smooth_l1_threshold
        self.bce_epsilon = bce_epsilon
        self.learning_rate = learning_rate
        self.betas = betas
        self.adam_epsilon = adam_epsilon
        self.steps = steps
        self.batch_size = batch_size
        self.seed = seed
        self.init_scale = init_scale
        self.dtype = dtype
        self.ablations = ablations
        self.verbose_logging = verbose_logging
        self.output_dir = output_dir

        if self.verbose_logging:
            logging.basicConfig(format='%(asctime)s - %(levelname)s - %(name)s -   %(message)s',
                                datefmt='%m/%d/%Y %H:%M:%S',
                                level=logging.INFO)

    @property
    def torch_dtype(self):
        if self.dtype not in DTYPES:
            raise ValueError("dtype must be one of {}, got {}".format(sorted(DTYPES), self.dtype))
        return DTYPES[self.dtype]

    def initialize(self, region_dim, word_dim):
        """Builds the network for the given input sizes and initialises it from `seed`."""
        model = OMRN(region_dim, word_dim,
                     hidden_size=self.hidden_size,
                     attention_size=self.attention_size,
                     num_widths=len(self.widths),
                     ablations=[code for code in self.ablations if code != 'TA'])
        self.model_ = init_params(model, self.seed, self.init_scale).to(self.torch_dtype)
        self.region_dim_ = region_dim
        self.word_dim_ = word_dim
        self.step_ = 0
        self.optimizer_ = None
        self.history_rows_ = []
        return self

    def _ensure_model(self, features):
        if getattr(self, 'model_', None) is None:
            first = features[0]
            self.initialize(first.pooled.shape[-1], first.embeddings.shape[-1])

    def _tensors(self, X):
        return [to_tensors(f, self.torch_dtype) for f in X]

    def batch_loss(self, tensors, lambdas=None):
        """Mean weighted loss over samples. Returns (total, {component: mean tensor})."""
        lambdas = self.lambdas if lambdas is None else lambdas
        totals = []
        sums = collections.OrderedDict((name, 0.) for name in LOSS_NAMES)
        for features in tensors:
            total, components, _ = self.model_.loss(features, lambdas,
                                                    self.smooth_l1_threshold, self.bce_epsilon)
            totals.append(total)
            for name in LOSS_NAMES:
                sums[name] = sums[name] + components[name]
        count = float(len(tensors))
        return (torch.stack(totals).sum() / count,
                collections.OrderedDict((name, value / count) for name, value in sums.items()))

    def backward(self, X, lambdas=None):
        """
        Loss and analytic gradients of every registry parameter.

        Parameters
        ----------
        X : list of GroundingFeatures
        lambdas : tuple of float, optional
            overrides the estimator's loss weights

        Returns
        -------
        loss : float
        components : dict of float
        gradients : collections.OrderedDict
            registry name -> gradient tensor, zeros for parameters off the active path
        """
        self._ensure_model(X)
        total, components = self.batch_loss(self._tensors(X), lambdas)
        names, parameters = zip(*self.model_.named_parameters())
        grads = torch.autograd.grad(total, parameters, allow_unused=True)
        gradients = collections.OrderedDict(
            (name, torch.zeros_like(p) if g is None else g)
            for name, p, g in zip(names, parameters, grads))
        return total.item(), {k: v.item() for k, v in components.items()}, gradients

    def loss_floor(self, X):
        """Smallest reachable weighted loss given the soft targets of X (mean over samples)."""
        floors = []
        for features in X:
            spatial = binary_entropy(features.spatial_targets[features.gt_mask])
            temporal = binary_entropy(features.temporal_targets)
            floors.append(self.lambdas[0] * spatial + self.lambdas[1] * temporal)
        return float(np.mean(floors))

    def fit(self, X, y=None):

        if len(X) == 0:
            raise ValueError("Cannot train on an empty dataset")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("Invalid steps {} or batch_size {}".format(self.steps, self.batch_size))

        self._ensure_model(X)
        tensors = self._tensors(X)
        if self.optimizer_ is None:
            self.optimizer_ = torch.optim.Adam(self.model_.parameters(),
                                               lr=self.learning_rate,
                                               betas=tuple(self.betas),
                                               eps=self.adam_epsilon)

        batch_size = min(self.batch_size, len(tensors))
        rng = np.random.default_rng(self.seed)
        floor = self.loss_floor(X)

        if self.verbose_logging:
            logger.info("***** Running training *****")
            logger.info("  Num samples = %d", len(tensors))
            logger.info("  Batch size = %d", batch_size)
            logger.info("  Num steps = %d", self.steps)
            logger.info("  Loss floor = %.6g", floor)

        rows = []
        order = np.array([], dtype=np.int64)
        for _ in trange(int(self.steps), desc="Step", disable=not self.verbose_logging):
            if len(order) < batch_size:
                order = np.concatenate([order, rng.permutation(len(tensors))])
            batch, order = order[:batch_size], order[batch_size:]

            self.optimizer_.zero_grad()
            try:
                total, components = self.batch_loss([tensors[i] for i in batch])
            except NonFiniteError as error:
                raise NonFiniteError("Non-finite loss at step {}: {}".format(self.step_ + 1, error))
            total.backward()
            self.optimizer_.step()
            self.step_ += 1

            row = {'step': self.step_, 'total': total.item(), 'floor': floor}
            row.update((name, value.item()) for name, value in components.items())
            rows.append(row)

        self.history_rows_.extend(rows)
        if rows and self.verbose_logging:
            logger.info("  Loss %.6g -> %.6g", rows[0]["total"], rows[-1]["total"])

        if self.output_dir:
            self.save(self.output_dir)
            self.history_.to_csv(os.path.join(self.output_dir, 'loss_log.csv'),
                                 index=False, float_format='%.6g')

        return self

    def predict(self, X, given_segment=False):
        """
        Predicted tubes.

        Parameters
        ----------
        X : list of GroundingFeatures
        given_segment : bool, optional
            ground spatially inside the ground truth segment instead of selecting one
            (the default is False)

        Returns
        -------
        collections.OrderedDict
            sample id -> omrn.grounder.localizer.Prediction
        """
        self._ensure_model(X)
        predictions = collections.OrderedDict()
        with torch.no_grad():
            for features in X:
                trace = self.model_(to_tensors(features, self.torch_dtype))
                segment = Segment(*features.gt_segment) if given_segment else None
                predictions[features.sample_id] = infer(trace, features.boxes, features.candidates, segment)
        if self.verbose_logging:
            logger.info("Predicted %d tubes", len(predictions))
        return predictions

    @property
    def history_(self):
        """One row per step: step, L_s, L_t, L_r, L_d, total (weighted) and the loss floor."""
        return pd.DataFrame(self.history_rows_, columns=HISTORY_COLUMNS)

    def registry(self):
        """Ordered (name, parameter) pairs of the network."""
        return list(self.model_.named_parameters())

    def save(self, path, extra=None):
        """
        Writes a checkpoint directory: checkpoint.json plus one tensor file per parameter.

        Parameters
        ----------
        path : str
        extra : dict, optional
            additional header entries (e.g. processor settings)
        """
        if not os.path.exists(path):
            os.makedirs(path)

        params = self.get_params()
        params['output_dir'] = None
        header = {'dims': {'region_dim': self.region_dim_, 'word_dim': self.word_dim_,
                           'hidden_size': self.hidden_size, 'attention_size': self.attention_size,
                           'num_widths': len(self.widths)},
                  'seed': self.seed,
                  'step': self.step_,
                  'dtype': self.dtype,
                  'params': {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
                  'registry': [name for name, _ in self.registry()]}
        if extra:
            header.update(extra)

        for name, parameter in self.registry():
            write_tensor(os.path.join(path, '{}.omrn'.format(name)), parameter.detach().cpu().numpy())
        with open(os.path.join(path, CHECKPOINT_HEADER), 'w') as outfile:
            json.dump(header, outfile, indent=2, sort_keys=True)

        logger.info("Saved checkpoint at step %d to %s", self.step_, path)
        return path

    @classmethod
    def load(cls, path):
        """Rebuilds an estimator from a checkpoint directory written by `save`."""
        header_path = os.path.join(path, CHECKPOINT_HEADER)
        if not os.path.exists(header_path):
            raise ValueError("No checkpoint found at {}".format(path))
        with open(header_path) as f:
            header = json.load(f)

        params = {k: tuple(v) if isinstance(v, list) else v for k, v in header['params'].items()}
        grounder = cls(**params)
        grounder.initialize(header['dims']['region_dim'], header['dims']['word_dim'])
        with torch.no_grad():
            for name, parameter in grounder.registry():
                values = read_tensor(os.path.join(path, '{}.omrn'.format(name)))
                parameter.copy_(torch.as_tensor(values, dtype=parameter.dtype))
        grounder.step_ = header['step']
        return grounder
