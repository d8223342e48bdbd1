import torch
import torch.nn as nn

from omrn.grounder.layers import bias, weight


class Modulation(nn.Module):
    """Object-aware gate and bias shared by all branches."""

    def __init__(self, hidden_size=256):
        super(Modulation, self).__init__()
        self.W_gamma = weight(hidden_size, 2 * hidden_size)
        self.b_gamma = bias(hidden_size)
        self.W_delta = weight(hidden_size, 2 * hidden_size)
        self.b_delta = bias(hidden_size)

    def forward(self, objects):
        gamma = torch.tanh(objects @ self.W_gamma.t() + self.b_gamma)
        delta = torch.tanh(objects @ self.W_delta.t() + self.b_delta)
        return gamma, delta


class Matching(nn.Module):
    """Cross-modal matching of modulated regions with their branch object."""

    def __init__(self, hidden_size=256, attention_size=256):
        super(Matching, self).__init__()
        # objects are projected to region space so r * o and r - o are defined
        self.W_o = weight(hidden_size, 2 * hidden_size)
        self.b_o = bias(hidden_size)
        self.W_c = weight(attention_size, 4 * hidden_size)
        self.b_c = bias(attention_size)
        self.w_c = weight(attention_size)

    def forward(self, modulated, objects):
        projected = (objects @ self.W_o.t() + self.b_o)[:, None, None, :].expand_as(modulated)
        joint = torch.cat([modulated, projected, modulated * projected, modulated - projected], dim=-1)
        return torch.tanh(joint @ self.W_c.t() + self.b_c) @ self.w_c


class RelationReasoning(nn.Module):

    def __init__(self, hidden_size=256, attention_size=256):
        super(RelationReasoning, self).__init__()
        self.W1_m = weight(attention_size, hidden_size)
        self.W2_m = weight(attention_size, hidden_size)
        self.W3_m = weight(attention_size, 4)
        self.b_m = bias(attention_size)
        self.w_m = weight(attention_size)

    def forward(self, main, auxiliary, geometry):
        """Attention logits eps[t, n, k, l] between main region k and auxiliary region l."""
        hidden = torch.tanh((main @ self.W1_m.t())[None, :, :, None, :]
                            + (auxiliary @ self.W2_m.t())[:, :, None, :, :]
                            + (geometry @ self.W3_m.t())[None]
                            + self.b_m)
        return hidden @ self.w_m


def modulate(regions, objects, module, enabled=True):
    """
    Branch-wise region features r_tk = gamma_t * r_k + delta_t.

    Parameters
    ----------
    regions : torch.Tensor, shape [N, K, d]
    objects : torch.Tensor, shape [T, 2d]
    module : Modulation
    enabled : bool, optional
        when False every branch sees the unmodulated regions

    Returns
    -------
    torch.Tensor, shape [T, N, K, d]
    """
    if not enabled:
        return regions[None].expand(objects.shape[0], *regions.shape)
    gamma, delta = module(objects)
    return gamma[:, None, None, :] * regions[None] + delta[:, None, None, :]


def match(modulated, objects, module):
    """
    Matching logits d[t, n, k] and their softmax over regions.

    Returns
    -------
    logits, distributions : torch.Tensor, shape [T, N, K]
    """
    logits = module(modulated, objects)
    return logits, torch.softmax(logits, dim=-1)


def relate(modulated, distributions, geometry, module, use_matching=True):
    """
    Multi-branch relation reasoning into the main branch.

        r_1k,t = sum_l d_1k * d_tl * softmax_l(eps_1k,tl) * r_tl
        r~_k = ReLU(r_1k + sum_{t >= 2} r_1k,t)

    Parameters
    ----------
    modulated : torch.Tensor, shape [T, N, K, d]
    distributions : torch.Tensor, shape [T, N, K]
    geometry : torch.Tensor, shape [N, K, K, 4]
        relative geometry of main region k with respect to region l
    module : RelationReasoning
    use_matching : bool, optional
        when False the matching weights d are dropped (set to 1)

    Returns
    -------
    final : torch.Tensor, shape [N, K, d]
    attention : torch.Tensor, shape [T - 1, N, K, K] or None when T = 1
    """
    main = modulated[0]
    if modulated.shape[0] == 1:
        return torch.relu(main), None

    auxiliary = modulated[1:]
    attention = torch.softmax(module(main, auxiliary, geometry), dim=-1)
    weights = attention
    if use_matching:
        weights = weights * distributions[0][None, :, :, None] * distributions[1:][:, :, None, :]
    aggregated = torch.einsum('tnkl,tnld->nkd', weights, auxiliary)
    return torch.relu(main + aggregated), attention


def diversity_loss(distributions, gt_mask):
    """
    Mean pairwise inner product of branch distributions over ground truth frames.

    Parameters
    ----------
    distributions : torch.Tensor, shape [T, N, K]
    gt_mask : torch.BoolTensor, shape [N]

    Returns
    -------
    torch.Tensor scalar, 0 when T < 2
    """
    n_branches = distributions.shape[0]
    if n_branches < 2:
        return distributions.new_zeros(())

    selected = distributions[:, gt_mask]
    similarity = torch.einsum('ink,jnk->ij', selected, selected)
    i, j = torch.triu_indices(n_branches, n_branches, offset=1)
    normalizer = 0.5 * selected.shape[1] * n_branches * (n_branches - 1)
    return similarity[i, j].sum() / normalizer
