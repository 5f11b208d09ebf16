"""Shared fixtures.

The thread-count pins must land before numpy is imported anywhere in the
process, otherwise the fast matmul path may use multi-threaded BLAS kernels
whose reduction order varies between machines.
"""

import os

for _name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ[_name] = "1"

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from signnet import tensor as tc  # noqa: E402
from signnet.glyphs import write_glyph_dataset  # noqa: E402

MINI_CONFIG = """\
input c=1 h=16 w=16
conv out=6 k=3 s=1 pad=same
relu
maxpool k=2 s=2
flatten
dense out=4
softmax
"""


@pytest.fixture(autouse=True)
def _reset_modes():
    """Every test starts and ends in deterministic mode."""
    tc.set_deterministic(True)
    yield
    tc.set_deterministic(True)


@pytest.fixture(scope="session")
def mini_glyph_root(tmp_path_factory):
    """Small 4-class glyph tree shared by the slower pipeline tests."""
    root = tmp_path_factory.mktemp("glyphs4")
    write_glyph_dataset(str(root), classes=4, per_class=12, side=16, seed=11)
    return str(root)


@pytest.fixture(scope="session")
def mini_config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "mini.cfg"
    path.write_text(MINI_CONFIG, encoding="utf-8")
    return str(path)


@pytest.fixture()
def rs():
    """Numpy RandomState for shaping test instances; signnet's own Prng is
    reserved for the code paths under test."""
    return np.random.RandomState(20260823)
