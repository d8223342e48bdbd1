import pytest

from omrn.pipeline.omrn_sklearn import GroundingPipeline
from omrn.utils.evaluation import evaluate_pipeline
from omrn.utils.synthetic import SynthConfig, generate_synthetic


def execute_pipeline(samples, **kwargs):
    params = dict(hidden_size=16, attention_size=16, widths=(3, 5, 7), radius=2, steps=3,
                  batch_size=2, seed=0)
    params.update(kwargs)
    pipeline = GroundingPipeline(**params)
    pipeline.fit(X=samples)
    return pipeline


def test_kwargs_are_split():
    pipeline = GroundingPipeline(alpha=0.5, radius=3, widths=(3, 5), steps=7, hidden_size=32)
    assert pipeline.processor.alpha == 0.5
    assert pipeline.processor.radius == 3
    assert pipeline.processor.widths == (3, 5)
    assert pipeline.grounder.widths == (3, 5)
    assert pipeline.grounder.steps == 7
    assert pipeline.grounder.hidden_size == 32
    with pytest.raises(TypeError):
        GroundingPipeline(unknown_argument=1)


def test_predict_and_evaluate():
    samples = generate_synthetic(SynthConfig(num_samples=3, N=8, K=4, T=2, seed=1)).samples
    pipeline = execute_pipeline(samples)

    predictions = pipeline.predict(X=samples)
    assert list(predictions) == [s.sample_id for s in samples]
    for sample in samples:
        prediction = predictions[sample.sample_id]
        assert 1 <= prediction.segment.s <= prediction.segment.e <= sample.num_frames
        assert len(prediction.boxes) == len(prediction.segment)
        assert 0. < prediction.confidence < 1.

    metrics, scores = pipeline.evaluate(X=samples)
    assert set(['m_tIoU', 'm_vIoU', 'vIoU@0.3', 'vIoU@0.5', 'by_type']) <= set(metrics)
    assert 0. <= metrics['m_vIoU'] <= metrics['m_tIoU'] <= 1.
    assert len(scores) == 3

    given, _ = evaluate_pipeline(pipeline, samples, given_segment=True)
    assert given['m_tIoU'] == pytest.approx(1.0)


def test_saved_pipeline_predicts_the_same(tmp_path):
    samples = generate_synthetic(SynthConfig(num_samples=2, N=8, K=4, T=2, seed=2)).samples
    pipeline = execute_pipeline(samples, alpha=0.4)
    pipeline.save(str(tmp_path))

    loaded = GroundingPipeline(grounder=str(tmp_path))
    assert loaded.processor.alpha == 0.4
    assert loaded.processor.radius == 2
    assert tuple(loaded.processor.widths) == (3, 5, 7)

    expected = pipeline.predict(X=samples)
    predictions = loaded.predict(X=samples)
    for sid in expected:
        assert predictions[sid].segment == expected[sid].segment
        assert predictions[sid].boxes == expected[sid].boxes


def overfit(lambdas=(1.0, 1.0, 0.001, 1.0), seed=0):
    samples = generate_synthetic(SynthConfig(num_samples=4, N=12, K=5, T=3, seed=seed)).samples
    pipeline = GroundingPipeline(hidden_size=64, attention_size=64, widths=(3, 5, 7, 9),
                                 lambdas=lambdas, learning_rate=0.0005, steps=500, batch_size=4,
                                 seed=seed)
    pipeline.fit(X=samples)
    return pipeline, samples


@pytest.mark.slow
def test_overfit_noise_free_samples():
    pipeline, samples = overfit()
    history = pipeline.grounder.history_
    reducible = history['total'] - history['floor']
    assert reducible.iloc[-1] <= 0.1 * reducible.iloc[0]
    assert history['total'].iloc[-50:].mean() < history['total'].iloc[:50].mean()

    metrics, _ = pipeline.evaluate(X=samples)
    assert metrics['m_vIoU'] >= 0.5
    assert metrics['m_tIoU'] >= 0.7


@pytest.mark.slow
def test_diversity_loss_does_not_hurt_grounding():
    wins = 0
    for seed in (0, 1, 2):
        full, samples = overfit(seed=seed)
        without, _ = overfit(lambdas=(1.0, 1.0, 0.001, 0.0), seed=seed)
        full_metrics, _ = full.evaluate(X=samples)
        without_metrics, _ = without.evaluate(X=samples)
        wins += without_metrics['m_vIoU'] <= full_metrics['m_vIoU']
    assert wins >= 2
