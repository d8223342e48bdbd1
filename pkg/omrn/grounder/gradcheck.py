import collections
import copy
import logging

import numpy as np
import pandas as pd
import torch

from omrn.grounder.localizer import LOSS_NAMES
from omrn.grounder.network import to_tensors

logger = logging.getLogger(__name__)


def isolated_terms(lambdas):
    """Loss weightings to check: the combined loss, then each component alone."""
    terms = collections.OrderedDict([('total', tuple(lambdas))])
    for i, name in enumerate(LOSS_NAMES):
        terms[name] = tuple(1.0 if j == i else 0.0 for j in range(len(LOSS_NAMES)))
    return terms


def _components(model, tensors, smooth_l1_threshold, bce_epsilon):
    values = []
    for features in tensors:
        trace = model(features).check_finite()
        components = model.losses(trace, features, smooth_l1_threshold, bce_epsilon)
        values.append(torch.stack([components[name] for name in LOSS_NAMES]))
    return torch.stack(values).mean(dim=0)


def grad_check(grounder, X, tolerance=1e-4, step=1e-5, max_entries=32, atol=1e-8,
               terms=None, transform_grads=None, seed=0):
    """
    Compares analytic gradients with central finite differences in float64.

    Parameters
    ----------
    grounder : omrn.grounder.omrn_sklearn.OMRNGrounder
        initialised estimator; its network is copied, never modified
    X : list of GroundingFeatures
    tolerance : float, optional
        maximum relative error |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|) (the default is 1e-4)
    step : float, optional
        finite difference step (the default is 1e-5)
    max_entries : int, optional
        coordinates sampled per parameter, None checks all (the default is 32)
    atol : float, optional
        coordinates whose absolute error is below atol pass regardless of the relative
        error (the default is 1e-8)
    terms : dict, optional
        name -> lambda weights; defaults to the combined loss plus each isolated term
    transform_grads : callable, optional
        applied to the analytic {name: gradient} dict before comparison
    seed : int, optional
        seed of the coordinate sampling

    Returns
    -------
    pandas.DataFrame
        one row per (term, parameter) with max_rel_error, max_abs_error, checked, passed

    Examples
    --------
    >>> from omrn.grounder.gradcheck import grad_check
    >>> report = grad_check(grounder, features[:1])
    >>> assert report['passed'].all()
    """
    terms = isolated_terms(grounder.lambdas) if terms is None else terms
    weights = {name: torch.tensor(lambdas, dtype=torch.float64) for name, lambdas in terms.items()}

    model = copy.deepcopy(grounder.model_).double()
    tensors = [to_tensors(f, torch.float64) for f in X]
    names, parameters = zip(*model.named_parameters())

    def evaluate():
        return _components(model, tensors, grounder.smooth_l1_threshold, grounder.bce_epsilon)

    components = evaluate()
    analytic = {}
    for term, weight in weights.items():
        grads = torch.autograd.grad((weight * components).sum(), parameters,
                                    retain_graph=True, allow_unused=True)
        grads = collections.OrderedDict((name, torch.zeros_like(p) if g is None else g.detach())
                                        for name, p, g in zip(names, parameters, grads))
        analytic[term] = transform_grads(grads) if transform_grads else grads

    rng = np.random.default_rng(seed)
    rows = []
    with torch.no_grad():
        for name, parameter in zip(names, parameters):
            flat = parameter.view(-1)
            if max_entries is None or flat.numel() <= max_entries:
                indices = np.arange(flat.numel())
            else:
                indices = np.sort(rng.choice(flat.numel(), size=max_entries, replace=False))

            numeric = []
            for index in indices:
                original = float(flat[index])
                flat[index] = original + step
                plus = evaluate()
                flat[index] = original - step
                minus = evaluate()
                flat[index] = original
                numeric.append((plus - minus) / (2 * step))
            numeric = torch.stack(numeric)

            for term, weight in weights.items():
                g_fd = (numeric @ weight).numpy()
                g_a = analytic[term][name].reshape(-1)[torch.as_tensor(indices)].numpy()
                abs_error = np.abs(g_a - g_fd)
                rel_error = abs_error / np.maximum(1e-8, np.abs(g_a) + np.abs(g_fd))
                passed = bool(np.all((rel_error <= tolerance) | (abs_error <= atol)))
                rows.append({'term': term,
                             'parameter': name,
                             'max_rel_error': float(rel_error.max()),
                             'max_abs_error': float(abs_error.max()),
                             'checked': len(indices),
                             'passed': passed})
                if not passed:
                    logger.warning("Gradient mismatch for %s on %s: relative error %.3g",
                                   name, term, rel_error.max())

    return pd.DataFrame(rows, columns=['term', 'parameter', 'max_rel_error', 'max_abs_error',
                                       'checked', 'passed'])
