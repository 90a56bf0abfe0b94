"""Hot kernels for surrogate fitting and evaluation.

Each kernel exists twice: a loop-based version compiled with numba and a
vectorised numpy version. The public names at the bottom of the module bind to
one or the other according to :data:`trfunnel._accel.USE_NUMBA`. Both versions
are always importable so tests and benchmarks can compare them directly.

Polynomial form codes: 0 linear, 1 full quadratic, 2 quadratic without
cross terms.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

LINEAR, QUADRATIC, SIMPLE_QUADRATIC = 0, 1, 2


def n_basis(n, code):
    """Number of polynomial basis functions in ``n`` variables."""
    if code == LINEAR:
        return n + 1
    if code == QUADRATIC:
        return (n + 1) * (n + 2) // 2
    if code == SIMPLE_QUADRATIC:
        return 2 * n + 1
    raise ValueError(f"unknown polynomial code {code}")


# --------------------------------------------------------------------------
# numpy reference versions


def poly_features_numpy(U, code):
    """Evaluate the polynomial basis at the rows of ``U`` (shape ``(p, n)``)."""
    U = np.asarray(U, dtype=float)
    p, n = U.shape
    cols = [np.ones((p, 1)), U]
    if code == QUADRATIC:
        iu, ju = np.triu_indices(n)
        cols.append(U[:, iu] * U[:, ju])
    elif code == SIMPLE_QUADRATIC:
        cols.append(U * U)
    return np.hstack(cols)


def poly_jacobian_numpy(u, code):
    """Derivative of the basis at one point; shape ``(n_basis, n)``."""
    u = np.asarray(u, dtype=float)
    n = u.size
    blocks = [np.zeros((1, n)), np.eye(n)]
    if code == QUADRATIC:
        iu, ju = np.triu_indices(n)
        D = np.zeros((iu.size, n))
        rows = np.arange(iu.size)
        np.add.at(D, (rows, iu), u[ju])
        np.add.at(D, (rows, ju), u[iu])
        blocks.append(D)
    elif code == SIMPLE_QUADRATIC:
        blocks.append(np.diag(2.0 * u))
    return np.vstack(blocks)


def se_kernel_numpy(A, B):
    """Unit-variance squared-exponential kernel with unit length scale."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-0.5 * sq)


def se_kernel_grad_numpy(u, B):
    """Gradient of ``k(u, B_i)`` with respect to ``u``; shape ``(p, n)``."""
    u = np.asarray(u, dtype=float)
    diff = u[None, :] - np.asarray(B, dtype=float)
    k = np.exp(-0.5 * (diff * diff).sum(axis=1))
    return -diff * k[:, None]


# --------------------------------------------------------------------------
# numba versions


@njit
def poly_features_numba(U, code):
    p, n = U.shape
    if code == 0:
        m = n + 1
    elif code == 1:
        m = (n + 1) * (n + 2) // 2
    else:
        m = 2 * n + 1
    out = np.empty((p, m))
    for r in range(p):
        out[r, 0] = 1.0
        for i in range(n):
            out[r, 1 + i] = U[r, i]
        c = n + 1
        if code == 1:
            for i in range(n):
                for j in range(i, n):
                    out[r, c] = U[r, i] * U[r, j]
                    c += 1
        elif code == 2:
            for i in range(n):
                out[r, c] = U[r, i] * U[r, i]
                c += 1
    return out


@njit
def poly_jacobian_numba(u, code):
    n = u.shape[0]
    if code == 0:
        m = n + 1
    elif code == 1:
        m = (n + 1) * (n + 2) // 2
    else:
        m = 2 * n + 1
    out = np.zeros((m, n))
    for i in range(n):
        out[1 + i, i] = 1.0
    c = n + 1
    if code == 1:
        for i in range(n):
            for j in range(i, n):
                out[c, i] += u[j]
                out[c, j] += u[i]
                c += 1
    elif code == 2:
        for i in range(n):
            out[c, i] = 2.0 * u[i]
            c += 1
    return out


@njit
def se_kernel_numba(A, B):
    p, n = A.shape
    q = B.shape[0]
    out = np.empty((p, q))
    for i in range(p):
        for j in range(q):
            s = 0.0
            for d in range(n):
                t = A[i, d] - B[j, d]
                s += t * t
            out[i, j] = np.exp(-0.5 * s)
    return out


@njit
def se_kernel_grad_numba(u, B):
    p, n = B.shape
    out = np.empty((p, n))
    for i in range(p):
        s = 0.0
        for d in range(n):
            t = u[d] - B[i, d]
            s += t * t
        k = np.exp(-0.5 * s)
        for d in range(n):
            out[i, d] = -(u[d] - B[i, d]) * k
    return out


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


if USE_NUMBA:
    def poly_features(U, code):
        return poly_features_numba(_contig(np.atleast_2d(U)), code)

    def poly_jacobian(u, code):
        return poly_jacobian_numba(_contig(u), code)

    def se_kernel(A, B):
        return se_kernel_numba(_contig(np.atleast_2d(A)), _contig(np.atleast_2d(B)))

    def se_kernel_grad(u, B):
        return se_kernel_grad_numba(_contig(u), _contig(B))
else:
    poly_features = poly_features_numpy
    poly_jacobian = poly_jacobian_numpy
    se_kernel = se_kernel_numpy
    se_kernel_grad = se_kernel_grad_numpy
