import os
import subprocess
import sys

import numpy as np
import pytest

from mi_lab import kernels

compiled = pytest.mark.skipif(kernels.compiled_pair_forward is None, reason="extension not built")


def inputs(rng, n=9, m=7, h=13):
    return (rng.normal(size=(n, h)), rng.normal(size=(m, h)), rng.normal(size=h),
            float(rng.normal()), rng.normal(size=(n, m)))


class TestFallback:
    @pytest.mark.parametrize("act", [0, 1])
    def test_forward_matches_loops(self, rng, act):
        A, B, w, b, _ = inputs(rng, 3, 4, 5)
        f = (lambda z: np.maximum(z, 0)) if act == 0 else np.tanh
        expected = np.array([[f(A[i] + B[j]) @ w + b for j in range(4)] for i in range(3)])
        np.testing.assert_allclose(kernels.py_pair_forward(A, B, w, b, act), expected, rtol=1e-13)

    def test_backward_matches_finite_differences(self, rng):
        A, B, w, b, G = inputs(rng, 3, 4, 5)
        dA, dB, dw = kernels.py_pair_backward(A, B, w, G, 1)
        eps = 1e-6
        E = np.zeros_like(A)
        E[1, 2] = eps
        num = (np.sum(G * kernels.py_pair_forward(A + E, B, w, b, 1))
               - np.sum(G * kernels.py_pair_forward(A - E, B, w, b, 1))) / (2 * eps)
        assert dA[1, 2] == pytest.approx(num, rel=1e-6)


@compiled
class TestCompiledAgreesWithFallback:
    @pytest.mark.parametrize("act", [0, 1])
    def test_forward(self, rng, act):
        A, B, w, b, _ = inputs(rng)
        np.testing.assert_allclose(kernels.compiled_pair_forward(A, B, w, b, act),
                                   kernels.py_pair_forward(A, B, w, b, act), rtol=1e-12, atol=1e-13)

    @pytest.mark.parametrize("act", [0, 1])
    def test_backward(self, rng, act):
        A, B, w, _, G = inputs(rng)
        for c, p in zip(kernels.compiled_pair_backward(A, B, w, G, act),
                        kernels.py_pair_backward(A, B, w, G, act)):
            np.testing.assert_allclose(c, p, rtol=1e-11, atol=1e-12)


def test_env_var_forces_fallback():
    env = dict(os.environ, MI_LAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import mi_lab.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
