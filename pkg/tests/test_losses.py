import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tasnn.losses import (ClassCenters, bce_loss, center_loss, embedding_loss, hybrid_loss,
                          pair_probability)

t64 = lambda v: torch.tensor(v, dtype=torch.float64)  # noqa: E731


class TestBCE:
    def test_half(self):
        assert bce_loss(t64([0.5, 0.5, 0.5]), [1, 0, 1]).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_hand_value(self):
        # -(ln 0.9 + ln 0.8) / 2
        assert bce_loss(t64([0.9, 0.2]), [1, 0]).item() == pytest.approx(0.164252033486018, abs=1e-12)

    def test_perfect_limit(self):
        assert bce_loss(t64([1 - 1e-12, 1e-12]), [1, 0]).item() < 1e-6

    def test_clamp(self):
        v = bce_loss(t64([0.0, 1.0]), [1, 0]).item()
        assert math.isfinite(v)
        assert v == pytest.approx(-math.log(1e-7), rel=1e-6)

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_nonnegative(self, rows):
        p, y = zip(*rows)
        assert bce_loss(t64(list(p)), list(y)).item() >= 0


class TestEmbeddingLoss:
    def test_uniform(self):
        assert embedding_loss(torch.zeros(3, 5, dtype=torch.float64), [0, 2, 4]).item() == \
            pytest.approx(math.log(5), abs=1e-12)

    def test_hand_value(self):
        # -ln(e^2 / (e^2 + 1))
        assert embedding_loss(t64([[2.0, 0.0]]), [0]).item() == pytest.approx(0.126928011042973, abs=1e-12)

    def test_confident_limit(self):
        assert embedding_loss(t64([[50.0, 0.0, 0.0]]), [0]).item() < 1e-15

    @pytest.mark.parametrize("label", [-1, 2])
    def test_label_range(self, label):
        with pytest.raises(ValueError):
            embedding_loss(t64([[0.0, 1.0]]), [label])


class TestCenterLoss:
    def test_hand_value(self):
        assert center_loss(t64([3.0]), [0], t64([1.0])).item() == 2.0

    def test_at_centers(self):
        c = t64([[1.0, 2.0], [3.0, 4.0]])
        assert center_loss(c[[1, 0, 1]], [1, 0, 1], c).item() == 0.0

    def test_duplication_invariance(self):
        rng = np.random.default_rng(0)
        f = t64(rng.normal(size=(5, 3)))
        y = [0, 1, 1, 0, 1]
        c = t64(rng.normal(size=(2, 3)))
        a = center_loss(f, y, c).item()
        b = center_loss(torch.cat([f, f]), y + y, c).item()
        assert a == pytest.approx(b, abs=1e-14)

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            center_loss(t64([[1.0]]), [2], t64([[0.0], [0.0]]))

    def test_ema_converges_geometrically(self):
        centers = ClassCenters(2, 3, alpha=0.5, dtype=torch.float64)
        f = t64([[1.0, 2.0, 3.0], [3.0, 2.0, 1.0], [-1.0, 0.0, 1.0]])
        y = torch.tensor([0, 0, 1])
        target = torch.stack([f[:2].mean(0), f[2]])
        gaps = []
        for _ in range(10):
            centers.update(f, y)
            gaps.append((centers.centers - target).norm().item())
        np.testing.assert_allclose(np.array(gaps[1:]) / np.array(gaps[:-1]), 0.5, rtol=1e-9)

    def test_unseen_class_center_stays(self):
        centers = ClassCenters(3, 2, alpha=0.5, dtype=torch.float64)
        centers.update(t64([[1.0, 1.0]]), torch.tensor([0]))
        assert centers.centers[1:].abs().sum().item() == 0.0


class TestHybrid:
    def test_hand_value(self):
        assert hybrid_loss(1.0, 0.5, 2.0, 0.8, 0.5) == pytest.approx(2.3, abs=1e-15)

    def test_beta_zero(self):
        assert hybrid_loss(7.0, 0.5, 2.0, 0.0, 0.5) == 1.5

    def test_reduces_to_bce(self):
        assert hybrid_loss(7.0, 0.25, 9.0, 0.0, 0.0) == 0.25

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 5))
    def test_nonnegative(self, le, lb, lc, beta, lam):
        assert hybrid_loss(le, lb, lc, beta, lam) >= 0


def test_pair_probability_monotone():
    d = t64([0.0, 0.5, 1.0, 4.0])
    p = pair_probability(d, t64(1.0))
    assert torch.all(p[1:] < p[:-1])
    assert p[2].item() == 0.5
