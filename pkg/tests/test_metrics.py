import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_auc
from tasnn.metrics import Confusion, accuracy, auc_roc, pca_projection, roc_curve


class TestAccuracy:
    def test_counts(self):
        assert accuracy(42, 50) == 84.0
        assert accuracy(19 + 23, 25 + 25) == 84.0

    def test_bounds(self):
        assert accuracy(7, 7) == 100.0
        assert accuracy(0, 1) == 0.0

    @pytest.mark.parametrize("c,m", [(1, 0), (-1, 3), (4, 3)])
    def test_invalid(self, c, m):
        with pytest.raises(ValueError):
            accuracy(c, m)


class TestAUC:
    def test_hand_value(self):
        auc, _ = auc_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert auc == 0.75

    def test_perfect_and_inverted(self):
        assert auc_roc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[0] == 1.0
        assert auc_roc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1])[0] == 0.0

    def test_all_tied(self):
        assert auc_roc([0.5] * 6, [0, 1] * 3)[0] == 0.5

    def test_single_class(self):
        with pytest.raises(ValueError):
            auc_roc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_pairwise_oracle_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 60))
        scores = rng.integers(0, 8, n) / 7.0  # coarse values force ties
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        num, den = brute_auc(scores.tolist(), labels.tolist())
        assert auc_roc(scores, labels)[0] == num / den

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_roc_shape(self, rows):
        s, y = map(np.array, zip(*rows))
        if y.min() == y.max():
            return
        fpr, tpr, _, _ = roc_curve(s, y)
        assert (fpr[0], tpr[0]) == (0, 0) and (fpr[-1], tpr[-1]) == (1, 1)
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
        assert 0.0 <= auc_roc(s, y)[0] <= 1.0

    @given(st.lists(st.tuples(st.floats(0.01, 10), st.integers(0, 1)), min_size=2, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_monotone_transform_invariance(self, rows):
        s, y = map(np.array, zip(*rows))
        if y.min() == y.max():
            return
        assert auc_roc(s, y)[0] == auc_roc(s * 8.0, y)[0]


def test_confusion_merge():
    a, b = Confusion(), Confusion()
    for pred, true in [(1, 1), (0, 1), (1, 0), (0, 0), (0, 0)]:
        a.add(pred, true)
    b.add(True, True)
    m = a.merge(b)
    assert m.to_dict() == {"tp": 2, "fp": 1, "tn": 2, "fn": 1}
    assert list(m.to_dict()) == ["tp", "fp", "tn", "fn"]
    assert m.total == 6


class TestPCA:
    def test_axis_aligned(self):
        # centred, uncorrelated, larger variance on the first axis
        x = np.array([[5.0, 0], [-5, 0], [0, 1], [0, -1], [3, 0], [-3, 0]])
        res = pca_projection(x)
        np.testing.assert_allclose(np.abs(res.coords), np.abs(x), atol=1e-10)

    def test_duplicated_dataset(self):
        x = np.random.default_rng(1).normal(size=(20, 4))
        a = pca_projection(x)
        b = pca_projection(np.vstack([x, x]))
        np.testing.assert_allclose(a.components, b.components, atol=1e-10)

    def test_reconstruction_error(self):
        x = np.random.default_rng(2).normal(size=(10, 5))
        res = pca_projection(x)
        recon = res.coords @ res.components + res.mean
        err = ((x - recon) ** 2).sum() / len(x)
        full = np.sort(np.linalg.eigvalsh(np.cov(x.T, bias=True)))[::-1]
        assert err == pytest.approx(full[2:].sum(), rel=1e-9)

    def test_sign_convention(self):
        res = pca_projection(np.random.default_rng(3).normal(size=(30, 6)))
        for c in res.components:
            assert c[np.argmax(np.abs(c))] > 0

    @pytest.mark.parametrize("x", [np.ones((5, 3)), np.ones((1, 3)), np.ones((4, 1))])
    def test_degenerate(self, x):
        with pytest.raises(ValueError):
            pca_projection(x)
