import torch
import torch.nn as nn

from omrn.grounder.layers import bias, weight


class ContextAttention(nn.Module):
    """
    Context attention of every object over the words of its sentence.

        beta_tm = w_s^T tanh(W1_s s_t + W2_s s_m + b_s)
        o~_t = sum_m softmax_m(beta_t)_m s_m,   o_t = [s_t; o~_t]
    """

    def __init__(self, word_size=256, attention_size=256):
        super(ContextAttention, self).__init__()
        self.W1_s = weight(attention_size, word_size)
        self.W2_s = weight(attention_size, word_size)
        self.b_s = bias(attention_size)
        self.w_s = weight(attention_size)

    def scores(self, word_feats, noun_indices):
        nouns = word_feats[noun_indices]
        hidden = torch.tanh((nouns @ self.W1_s.t())[:, None, :]
                            + (word_feats @ self.W2_s.t())[None, :, :] + self.b_s)
        return hidden @ self.w_s

    def forward(self, word_feats, noun_indices):
        weights = torch.softmax(self.scores(word_feats, noun_indices), dim=-1)
        context = weights @ word_feats
        return torch.cat([word_feats[noun_indices], context], dim=-1), weights


def encode_words(embeddings, gru):
    """
    Word-level features of a sentence.

    Parameters
    ----------
    embeddings : torch.Tensor, shape [M, D_w]
    gru : omrn.grounder.layers.BiGRU

    Returns
    -------
    torch.Tensor, shape [M, 2 * hidden]
    """
    return gru(embeddings)


def build_objects(word_feats, noun_indices, context, use_context=True):
    """
    Object features o_t = [s_t; o~_t], row 0 being the main object.

    Parameters
    ----------
    word_feats : torch.Tensor, shape [M, d]
    noun_indices : torch.LongTensor, shape [T]
    context : ContextAttention
    use_context : bool, optional
        when False the context vector is replaced by the noun feature itself

    Returns
    -------
    objects : torch.Tensor, shape [T, 2d]
    weights : torch.Tensor, shape [T, M] or None
    """
    if not use_context:
        nouns = word_feats[noun_indices]
        return torch.cat([nouns, nouns], dim=-1), None
    return context(word_feats, noun_indices)
