import numpy as np
import pytest

from fairaudit.data import TOY_THRESHOLD, ThresholdPolicy, apply_policy, load_toy


@pytest.fixture(scope="session")
def toy():
    return load_toy()


@pytest.fixture(scope="session")
def toy_pred(toy):
    return apply_policy(toy, ThresholdPolicy.shared(TOY_THRESHOLD))


def random_scored_dataset(rng, n=None, groups=True):
    """Small random dataset with scores, for property tests."""
    from fairaudit.data import Dataset

    n = n or int(rng.integers(4, 13))
    while True:
        s = rng.integers(0, 2, size=n) if groups else np.zeros(n, dtype=int)
        y = rng.integers(0, 2, size=n)
        if len(np.unique(y)) == 2:
            break
    score = rng.integers(0, 11, size=n) / 10.0
    return Dataset(s=s, y=y, score=score)
