import numpy as np
import pytest

from lsmsim.readout import TrainConfig, evaluate, train_supervised
from lsmsim.synthetic import (
    PairedTaskSpec,
    SyntheticTaskSpec,
    gen_paired,
    gen_synthetic,
    paired_templates,
    rate_templates,
)


def test_disjoint_rate_classes_are_learned_perfectly():
    spec = SyntheticTaskSpec(num_classes=2, channels=16, T=20, samples_per_class=40, rate_on=0.6, rate_off=0.02)
    X, y = gen_synthetic(spec)
    F = X.mean(axis=1)
    layer, _ = train_supervised(F, y, TrainConfig(lr=0.5, epochs=50, batch_size=16))
    assert evaluate(layer, F, y).accuracy == 1.0


def test_same_seed_same_dataset():
    spec = SyntheticTaskSpec(seed=3, kind="order", num_classes=3)
    a, ya = gen_synthetic(spec)
    b, yb = gen_synthetic(spec)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ya, yb)


def test_zero_template_gives_zero_tensors():
    spec = SyntheticTaskSpec(num_classes=2, channels=4, T=5, samples_per_class=3)
    with pytest.warns(UserWarning, match="identical"):
        X, _ = gen_synthetic(spec, templates=np.zeros((2, 4)))
    assert X.sum() == 0


def test_labels_interleave():
    _, y = gen_synthetic(SyntheticTaskSpec(num_classes=3, samples_per_class=4))
    np.testing.assert_array_equal(y[:6], [0, 1, 2, 0, 1, 2])
    np.testing.assert_array_equal(np.bincount(y), [4, 4, 4])


def test_order_templates_have_equal_channel_totals():
    spec = SyntheticTaskSpec(num_classes=4, channels=16, T=24, kind="order", groups=4)
    tpl = rate_templates(spec)
    totals = tpl.sum(axis=1)  # expected count per channel per class
    np.testing.assert_allclose(totals, np.broadcast_to(totals[0], totals.shape))
    assert len({t.tobytes() for t in tpl}) == 4


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticTaskSpec(num_classes=1)
    with pytest.raises(ValueError):
        SyntheticTaskSpec(rate_on=1.5)
    with pytest.raises(ValueError):
        gen_synthetic(SyntheticTaskSpec(num_classes=2, channels=4, T=5), templates=np.full((2, 4), 2.0))
    with pytest.raises(ValueError):
        rate_templates(SyntheticTaskSpec(num_classes=30, kind="order", groups=3))


def test_paired_modalities():
    spec = PairedTaskSpec(num_classes=4, channels_v=10, channels_a=6, T=8, samples_per_class=5, seed=1)
    Xv, Xa, y = gen_paired(spec)
    assert Xv.shape == (20, 8, 10) and Xa.shape == (20, 8, 6)
    tv, ta = paired_templates(spec)
    assert tv.min() >= spec.rate_lo and tv.max() <= spec.rate_hi
    np.testing.assert_array_equal(gen_paired(spec)[0], Xv)
