import collections
import logging

import torch
import torch.nn as nn

from omrn.grounder.aggregation import TemporalAggregation
from omrn.grounder.language import ContextAttention, build_objects, encode_words
from omrn.grounder.layers import BiGRU, is_bias, xavier_init
from omrn.grounder.localizer import (DEFAULT_LAMBDAS, DEFAULT_WIDTHS, Localizer, frame_features,
                                     regression_loss, select_candidate, spatial_loss,
                                     spatial_scores, temporal_heads, temporal_loss, total_loss)
from omrn.grounder.relation import (Matching, Modulation, RelationReasoning, diversity_loss,
                                    match, modulate, relate)
from omrn.utils.geometry import Segment

logger = logging.getLogger(__name__)

ABLATIONS = ('OM', 'CM', 'TA', 'CA')


class NonFiniteError(FloatingPointError):
    """A NaN or infinity appeared in the forward pass or the loss."""


class ForwardTrace(collections.OrderedDict):
    """Named intermediate tensors of one forward pass, in computation order."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name)

    def check_finite(self):
        for name, value in self.items():
            if value is not None and not bool(torch.isfinite(value).all()):
                raise NonFiniteError("Non-finite values in forward tensor '{}'".format(name))
        return self


FeatureTensors = collections.namedtuple(
    'FeatureTensors', ['sample_id', 'pooled', 'boxes', 'embeddings', 'noun_indices', 'geometry',
                       'spatial_targets', 'gt_mask', 'candidates', 'temporal_targets', 'gt_segment'])


def to_tensors(features, dtype=torch.float32):
    """Converts processor output (omrn.processor.region_sklearn.GroundingFeatures) to tensors."""
    return FeatureTensors(sample_id=features.sample_id,
                          pooled=torch.as_tensor(features.pooled, dtype=dtype),
                          boxes=features.boxes,
                          embeddings=torch.as_tensor(features.embeddings, dtype=dtype),
                          noun_indices=torch.as_tensor(features.noun_indices, dtype=torch.long),
                          geometry=torch.as_tensor(features.geometry, dtype=dtype),
                          spatial_targets=torch.as_tensor(features.spatial_targets, dtype=dtype),
                          gt_mask=torch.as_tensor(features.gt_mask, dtype=torch.bool),
                          candidates=features.candidates,
                          temporal_targets=torch.as_tensor(features.temporal_targets, dtype=dtype),
                          gt_segment=Segment(*features.gt_segment))


class OMRN(nn.Module):
    """
    Object-aware multi-branch relation network.

    Parameters
    ----------
    region_dim : int
        size D_r of the input region features
    word_dim : int
        size D_w of the word embeddings
    hidden_size : int, optional
        width d of region, word and frame features; each GRU direction has d / 2 units
        (the default is 256)
    attention_size : int, optional
        width a of every attention / scoring projection (the default is 256)
    num_widths : int, optional
        H, candidate widths per frame (the default is 9)
    ablations : tuple of str, optional
        components to switch off among 'OM', 'CM', 'CA' ('TA' is handled by the processor)

    Attributes
    ----------
    named_parameters() is the parameter registry: unique names such as
    'aggregation.W_agg', 'match.W_c' or 'localizer.W_conf', in a fixed order.
    """

    def __init__(self, region_dim, word_dim, hidden_size=256, attention_size=256,
                 num_widths=len(DEFAULT_WIDTHS), ablations=()):
        super(OMRN, self).__init__()
        if hidden_size % 2:
            raise ValueError("hidden_size must be even, got {}".format(hidden_size))
        unknown = set(ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError("Unknown ablations {}, expected a subset of {}".format(
                sorted(unknown), ABLATIONS))

        self.ablations = tuple(ablations)
        self.aggregation = TemporalAggregation(region_dim, hidden_size)
        self.language = BiGRU(word_dim, hidden_size // 2)
        self.context = ContextAttention(hidden_size, attention_size)
        self.branch = Modulation(hidden_size)
        self.match = Matching(hidden_size, attention_size)
        self.relation = RelationReasoning(hidden_size, attention_size)
        self.localizer = Localizer(hidden_size, attention_size, num_widths)

    def forward(self, features):
        """
        Parameters
        ----------
        features : FeatureTensors

        Returns
        -------
        ForwardTrace
        """
        trace = ForwardTrace()
        trace['regions'] = self.aggregation(features.pooled)
        trace['words'] = encode_words(features.embeddings, self.language)
        trace['objects'], trace['context_attention'] = build_objects(
            trace['words'], features.noun_indices, self.context, use_context='CA' not in self.ablations)
        trace['modulated'] = modulate(trace['regions'], trace['objects'], self.branch,
                                      enabled='OM' not in self.ablations)
        trace['match_logits'], trace['match_dist'] = match(trace['modulated'], trace['objects'], self.match)
        trace['final_regions'], trace['relation_attention'] = relate(
            trace['modulated'], trace['match_dist'], features.geometry, self.relation,
            use_matching='CM' not in self.ablations)

        main_object = trace['objects'][0]
        trace['spatial_scores'] = spatial_scores(trace['final_regions'], main_object, self.localizer)
        trace['frame_context'], trace['frame_features'], trace['frame_attention'] = frame_features(
            trace['final_regions'], main_object, self.localizer)
        trace['confidences'], trace['offsets'] = temporal_heads(trace['frame_context'], self.localizer)
        return trace

    def losses(self, trace, features, smooth_l1_threshold=1.0, bce_epsilon=1e-7):
        """
        The four loss components of one sample, unweighted.

        The candidate regressed by L_r is the highest-confidence one; the choice itself
        carries no gradient.
        """
        n, h = select_candidate(trace.confidences.detach())
        selected = Segment(*features.candidates[n, h])

        components = collections.OrderedDict()
        components['L_s'] = spatial_loss(trace.spatial_scores, features.spatial_targets,
                                         features.gt_mask, bce_epsilon)
        components['L_t'] = temporal_loss(trace.confidences, features.temporal_targets, bce_epsilon)
        components['L_r'] = regression_loss(trace.offsets[n, h], selected, features.gt_segment,
                                            smooth_l1_threshold)
        if 'CM' in self.ablations:
            components['L_d'] = trace.match_dist.new_zeros(())
        else:
            components['L_d'] = diversity_loss(trace.match_dist, features.gt_mask)
        return components

    def loss(self, features, lambdas=DEFAULT_LAMBDAS, smooth_l1_threshold=1.0, bce_epsilon=1e-7):
        """Forward pass, finiteness check and weighted loss. Returns (total, components, trace)."""
        trace = self(features).check_finite()
        components = self.losses(trace, features, smooth_l1_threshold, bce_epsilon)
        total = total_loss(components, lambdas)
        if not bool(torch.isfinite(total)):
            raise NonFiniteError("Non-finite loss for sample {}".format(features.sample_id))
        return total, components, trace


def init_params(model, seed, init_scale=1.0):
    """
    Deterministic initialisation: Glorot-uniform weights, zero biases.

    Parameters are visited in registry order from one seeded generator, so the same seed
    always gives the same values.
    """
    generator = torch.Generator().manual_seed(seed)
    for name, parameter in model.named_parameters():
        if is_bias(name):
            with torch.no_grad():
                parameter.zero_()
        else:
            xavier_init(parameter, generator, init_scale)
    return model
