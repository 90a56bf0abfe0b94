import os
import subprocess
import sys

import numpy as np
import pytest

from trfunnel import _accel, _kernels

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("code", [_kernels.LINEAR, _kernels.QUADRATIC, _kernels.SIMPLE_QUADRATIC])
def test_polynomial_kernels_agree(code, rng):
    U = rng.normal(size=(12, 5))
    assert np.allclose(_kernels.poly_features_numba(U, code), _kernels.poly_features_numpy(U, code),
                       rtol=0, atol=1e-14)
    assert _kernels.poly_features_numpy(U, code).shape == (12, _kernels.n_basis(5, code))
    u = U[0].copy()
    assert np.allclose(_kernels.poly_jacobian_numba(u, code), _kernels.poly_jacobian_numpy(u, code),
                       rtol=0, atol=1e-14)


def test_gaussian_kernels_agree(rng):
    A, B = rng.normal(size=(7, 3)), rng.normal(size=(9, 3))
    assert np.allclose(_kernels.se_kernel_numba(A, B), _kernels.se_kernel_numpy(A, B), rtol=0, atol=1e-14)
    u = A[0].copy()
    assert np.allclose(_kernels.se_kernel_grad_numba(u, B), _kernels.se_kernel_grad_numpy(u, B),
                       rtol=0, atol=1e-14)


def test_unknown_polynomial_code():
    with pytest.raises(ValueError):
        _kernels.n_basis(3, 9)


def _selected(env_value):
    env = dict(os.environ)
    env.pop("TRFUNNEL_DISABLE_NUMBA", None)
    if env_value is not None:
        env["TRFUNNEL_DISABLE_NUMBA"] = env_value
    code = "from trfunnel import _accel, _kernels; print(_accel.USE_NUMBA, _kernels.poly_features.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return out.stdout.split()


def test_environment_flag_selects_numpy():
    assert _selected("1") == ["False", "poly_features_numpy"]


def test_numba_is_the_default_when_available():
    assert _selected(None) == ["True", "poly_features"]
