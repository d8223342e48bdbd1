import torch

from omrn.grounder.language import ContextAttention, build_objects, encode_words
from omrn.grounder.layers import BiGRU, GRUCell, xavier_init


def initialised(module, seed=0):
    generator = torch.Generator().manual_seed(seed)
    for name, parameter in module.named_parameters():
        xavier_init(parameter, generator)
    return module.double()


def test_gru_cell_with_zero_weights_halves_the_state():
    cell = GRUCell(3, 2).double()
    for parameter in cell.parameters():
        torch.nn.init.zeros_(parameter)
    h = torch.tensor([1.0, -2.0], dtype=torch.float64)
    # z = 0.5 and h~ = 0, so h' = 0.5 h
    assert torch.allclose(cell(torch.ones(3, dtype=torch.float64), h), 0.5 * h)


def test_gru_run_matches_stepwise():
    cell = initialised(GRUCell(4, 3))
    inputs = torch.randn(5, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
    h = torch.zeros(3, dtype=torch.float64)
    for i in range(5):
        h = cell(inputs[i], h)
    assert torch.allclose(cell.run(inputs)[-1], h)

    h = torch.zeros(3, dtype=torch.float64)
    for i in reversed(range(5)):
        h = cell(inputs[i], h)
    assert torch.allclose(cell.run(inputs, reverse=True)[0], h)


def test_encode_words_shape():
    gru = initialised(BiGRU(6, 4))
    embeddings = torch.randn(8, 6, dtype=torch.float64)
    assert encode_words(embeddings, gru).shape == (8, 8)


def test_context_attention_weights():
    context = initialised(ContextAttention(word_size=8, attention_size=5))
    word_feats = torch.randn(7, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
    nouns = torch.tensor([3, 0, 5])
    objects, weights = build_objects(word_feats, nouns, context)
    assert objects.shape == (3, 16)
    assert weights.shape == (3, 7)
    assert torch.allclose(weights.sum(dim=1), torch.ones(3, dtype=torch.float64))
    assert (weights > 0).all()
    assert torch.equal(objects[:, :8], word_feats[nouns])
    assert torch.allclose(objects[:, 8:], weights @ word_feats)


def test_objects_without_context_attention():
    context = initialised(ContextAttention(word_size=8, attention_size=5))
    word_feats = torch.randn(4, 8, dtype=torch.float64)
    objects, weights = build_objects(word_feats, torch.tensor([2]), context, use_context=False)
    assert weights is None
    assert torch.equal(objects, torch.cat([word_feats[2], word_feats[2]])[None])


def test_encode_words_with_zero_weights_is_zero():
    gru = BiGRU(6, 4).double()
    for parameter in gru.parameters():
        torch.nn.init.zeros_(parameter)
    embeddings = torch.randn(5, 6, dtype=torch.float64, generator=torch.Generator().manual_seed(3))
    assert torch.count_nonzero(encode_words(embeddings, gru)) == 0


def test_single_word_has_equal_directions():
    gru = BiGRU(6, 4).double()
    initialised(gru.fwd, seed=4)
    gru.bwd.load_state_dict(gru.fwd.state_dict())
    features = encode_words(torch.randn(1, 6, dtype=torch.float64), gru)
    assert features.shape == (1, 8)
    assert torch.equal(features[0, :4], features[0, 4:])


def test_zero_context_scores_average_the_words():
    context = initialised(ContextAttention(word_size=8, attention_size=5))
    torch.nn.init.zeros_(context.w_s)
    word_feats = torch.randn(6, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(5))
    objects, weights = build_objects(word_feats, torch.tensor([1, 4]), context)
    assert torch.allclose(weights, torch.full((2, 6), 1. / 6, dtype=torch.float64))
    assert torch.allclose(objects[:, 8:], word_feats.mean(dim=0).expand(2, 8))
