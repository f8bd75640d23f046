import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def score_csv(tmp_path):
    """Write a (mated, non_mated) pair of single-column score files."""

    def _write(mated, non_mated, name="scores"):
        mp = tmp_path / f"{name}_mated.csv"
        np_ = tmp_path / f"{name}_nonmated.csv"
        mp.write_text("\n".join(repr(float(v)) for v in mated) + "\n")
        np_.write_text("\n".join(repr(float(v)) for v in non_mated) + "\n")
        return mp, np_

    return _write
