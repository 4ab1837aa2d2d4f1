"""The compiled and numpy kernel lanes must agree bit for bit."""
import os
import subprocess
import sys

import numpy as np
import pytest

from eadt import _kernels_py
from eadt._backend import active_backend

try:
    from eadt import _kernels as _compiled
except ImportError:
    _compiled = None

needs_compiled = pytest.mark.skipif(_compiled is None,
                                    reason="compiled lane not built")


def _rand_prob(rng, shape):
    return rng.random(shape, dtype=np.float32)


def _rand_mask8(rng, shape):
    return (rng.random(shape) < 0.5).astype(np.uint8)


def test_active_backend_is_known():
    assert active_backend() in ("cython", "python")


@needs_compiled
class TestLaneAgreement:
    def test_binarize(self):
        rng = np.random.default_rng(401)
        for _ in range(20):
            p = _rand_prob(rng, (3, 17, 19))
            # include thresholds equal to actual map values to stress
            # the strict comparison
            for thresh in (0.5, float(p[0, 0, 0]), 0.0, 1.0):
                a = np.empty(p.shape, dtype=np.uint8)
                b = np.empty(p.shape, dtype=np.uint8)
                _compiled.binarize(p, thresh, a)
                _kernels_py.binarize(p, thresh, b)
                assert np.array_equal(a, b)

    def test_count_above(self):
        rng = np.random.default_rng(402)
        for _ in range(20):
            p = _rand_prob(rng, (4, 13, 11))
            for thresh in (0.3, float(p[1, 2, 3]), 0.999):
                a = np.empty(4, dtype=np.int64)
                b = np.empty(4, dtype=np.int64)
                _compiled.count_above(p, thresh, a)
                _kernels_py.count_above(p, thresh, b)
                assert np.array_equal(a, b)

    def test_positive_areas(self):
        rng = np.random.default_rng(403)
        for _ in range(20):
            m = _rand_mask8(rng, (5, 9, 14))
            a = np.empty(5, dtype=np.int64)
            b = np.empty(5, dtype=np.int64)
            _compiled.positive_areas(m, a)
            _kernels_py.positive_areas(m, b)
            assert np.array_equal(a, b)

    def test_pair_counts(self):
        rng = np.random.default_rng(404)
        for _ in range(20):
            x = _rand_mask8(rng, (3, 21, 18))
            y = _rand_mask8(rng, (3, 21, 18))
            a = np.empty((3, 3), dtype=np.int64)
            b = np.empty((3, 3), dtype=np.int64)
            _compiled.pair_counts(x, y, a)
            _kernels_py.pair_counts(x, y, b)
            assert np.array_equal(a, b)

    def test_triple_threshold(self):
        rng = np.random.default_rng(405)
        for _ in range(20):
            p = _rand_prob(rng, (3, 16, 16))
            areas = rng.integers(0, 60, size=3).astype(np.int64)
            a = np.empty(p.shape, dtype=np.uint8)
            b = np.empty(p.shape, dtype=np.uint8)
            _compiled.triple_threshold(p, 0.7, 0.4, areas, a)
            _kernels_py.triple_threshold(p, 0.7, 0.4, areas, b)
            assert np.array_equal(a, b)

    def test_mean_stack_bit_exact(self):
        rng = np.random.default_rng(406)
        for _ in range(20):
            k = int(rng.integers(2, 7))
            stack = _rand_prob(rng, (k, 2, 12, 12))
            a = np.empty(stack.shape[1:], dtype=np.float32)
            b = np.empty(stack.shape[1:], dtype=np.float32)
            _compiled.mean_stack(stack, a)
            _kernels_py.mean_stack(stack, b)
            assert np.array_equal(a.view(np.uint32), b.view(np.uint32))


def _backend_in_subprocess(extra_env):
    env = {k: v for k, v in os.environ.items() if k != "EADT_PURE_PYTHON"}
    env.update(extra_env)
    out = subprocess.run(
        [sys.executable, "-c", "import eadt; print(eadt.active_backend())"],
        capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_env_var_forces_python_lane():
    assert _backend_in_subprocess({"EADT_PURE_PYTHON": "1"}) == "python"


def test_env_var_zero_means_default():
    want = "cython" if _compiled is not None else "python"
    assert _backend_in_subprocess({"EADT_PURE_PYTHON": "0"}) == want
    assert _backend_in_subprocess({}) == want
