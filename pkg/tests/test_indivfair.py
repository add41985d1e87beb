import numpy as np
import pytest

from fairaudit.data import DataError, Dataset, PredictionSet
from fairaudit.indivfair import lipschitz_audit, reconstruction_audit


def smooth_score_dataset(rng, n=200, lipschitz=0.25):
    """Scores are a smooth (bounded-slope) function of whitened features, so
    the similarity inequality holds with the matching scale constant."""
    X = rng.normal(size=(n, 3))
    # the audit whitens with the empirical covariance; build the score from
    # the same whitened coordinates so the true constant is known
    cov = np.cov(X, rowvar=False, bias=True)
    vals, vecs = np.linalg.eigh(cov)
    white = X @ (vecs @ np.diag(vals**-0.5) @ vecs.T).T
    direction = np.array([1.0, 0.0, 0.0])
    z = white @ direction  # |z_i - z_j| <= d_x(i, j)
    score = 0.5 + (lipschitz / np.pi) * np.arctan(z)  # slope <= lipschitz/pi... < lipschitz
    return Dataset(s=rng.integers(0, 2, size=n), y=rng.integers(0, 2, size=n), score=score, features=X)


class TestLipschitzAudit:
    def test_identical_outputs_no_violations(self):
        rng = np.random.default_rng(1)
        d = Dataset(
            s=[0, 1] * 10,
            y=[0, 1] * 10,
            score=[0.4] * 20,
            features=rng.normal(size=(20, 2)),
        )
        res = lipschitz_audit(d)
        assert res.violations == 0
        assert res.checked_pairs == 20 * 19 // 2

    def test_identical_features_different_decisions(self):
        d = Dataset(
            s=[0, 1],
            y=[0, 1],
            score=[0.1, 0.9],
            features=np.array([[1.0, 2.0], [1.0, 2.0]]),
        )
        pred = PredictionSet.from_labels([0, 1])
        res = lipschitz_audit(d, dy="decision", pred=pred)
        assert res.violations == 1
        assert res.worst_ratio == np.inf
        assert res.top_pairs[0]["d_x"] == pytest.approx(0.0)
        assert res.top_pairs[0]["d_y"] == 1.0

    def test_smooth_function_respects_scale(self):
        rng = np.random.default_rng(7)
        d = smooth_score_dataset(rng, n=200, lipschitz=0.25)
        res = lipschitz_audit(d, scale=0.25)
        assert res.violations == 0
        assert res.exact

    def test_reorder_invariance(self):
        rng = np.random.default_rng(3)
        d = smooth_score_dataset(rng, n=60, lipschitz=1.0)
        res = lipschitz_audit(d, scale=0.01)
        perm = rng.permutation(60)
        d2 = Dataset(s=d.s[perm], y=d.y[perm], score=d.score[perm], features=d.features[perm])
        res2 = lipschitz_audit(d2, scale=0.01)
        assert res.violations == res2.violations

    def test_common_feature_rescaling_invariance(self):
        rng = np.random.default_rng(9)
        d = smooth_score_dataset(rng, n=80, lipschitz=0.5)
        res = lipschitz_audit(d, scale=0.3)
        d_scaled = d.with_(features=d.features * 37.5)
        res_scaled = lipschitz_audit(d_scaled, scale=0.3)
        assert res.violations == res_scaled.violations
        assert res.worst_ratio == pytest.approx(res_scaled.worst_ratio, rel=1e-9)

    def test_requires_features(self, toy):
        with pytest.raises(DataError):
            lipschitz_audit(toy)

    def test_pairs_csv_export(self):
        d = Dataset(
            s=[0, 1], y=[0, 1], score=[0.1, 0.9], features=np.array([[1.0], [1.0]])
        )
        res = lipschitz_audit(d)
        text = res.pairs_csv()
        assert text.splitlines()[0] == "i,j,d_y,d_x,ratio"
        assert len(text.splitlines()) == 2


class TestReconstructionAudit:
    def test_no_signal_gives_exact_half(self):
        # constant features, scores, predictions and outcomes: the attacker
        # has literally nothing, so every fold AUC is exactly 1/2
        n = 40
        d = Dataset(
            s=[0, 1] * (n // 2),
            y=[0] * n,
            score=[0.5] * n,
            features=np.ones((n, 2)),
        )
        pred = PredictionSet.from_labels([0] * n)
        res = reconstruction_audit(d, pred, folds=5, seed=1)
        assert res.auc == 0.5
        assert all(a == 0.5 for a in res.fold_aucs)

    def test_group_leaked_into_feature(self):
        rng = np.random.default_rng(4)
        n = 400
        s = rng.integers(0, 2, size=n)
        X = np.column_stack([s.astype(float), rng.normal(size=n)])
        d = Dataset(s=s, y=rng.integers(0, 2, size=n), score=rng.random(n), features=X)
        res = reconstruction_audit(d, folds=5, seed=0)
        assert res.auc >= 0.99

    def test_independent_inputs_near_half(self):
        rng = np.random.default_rng(11)
        n = 1000
        s = rng.integers(0, 2, size=n)
        d = Dataset(
            s=s,
            y=rng.integers(0, 2, size=n),
            score=rng.random(n),
            features=rng.normal(size=(n, 3)),
        )
        res = reconstruction_audit(d, folds=5, seed=2)
        assert 0.45 <= res.auc <= 0.55

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(21)
        n = 200
        d = Dataset(
            s=rng.integers(0, 2, size=n),
            y=rng.integers(0, 2, size=n),
            score=rng.random(n),
            features=rng.normal(size=(n, 2)),
        )
        a = reconstruction_audit(d, folds=4, seed=5)
        b = reconstruction_audit(d, folds=4, seed=5)
        assert a.fold_aucs == b.fold_aucs

    def test_features_used_names(self, toy):
        res = reconstruction_audit(toy, folds=3, seed=0)
        assert res.features_used == ("score", "y")
