"""Hot numeric kernels with a numba JIT path and a plain-numpy fallback.

The two per-arrival inner loops of the streaming pipeline live here: the
cyclic-Jacobi symmetric eigendecomposition behind the covariance whitener,
and the shifted power iteration behind the spectral meta-learner weights.

Backend selection happens once at import from the STREAMTTA_BACKEND
environment variable ("numba" or "numpy"; default: numba when importable).
The flag only swaps the compute implementation; results agree within the
documented tolerances and all experiment configuration stays explicit.
`streamtta.matcore.use_backend` can override the choice in-process, which
is what the benchmark and the test suite use to exercise both paths.
"""

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay importable
    numba = None
    HAS_NUMBA = False

_requested = os.environ.get("STREAMTTA_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        "STREAMTTA_BACKEND must be 'numba' or 'numpy', got %r" % _requested
    )
if _requested == "numba" and not HAS_NUMBA:
    raise RuntimeError("STREAMTTA_BACKEND=numba but numba is not importable")

DEFAULT_BACKEND = "numba" if (HAS_NUMBA and _requested != "numpy") else "numpy"


def _jacobi_eigh(a, rel_tol, max_sweeps):
    """Cyclic Jacobi rotations on a symmetric matrix, in place.

    Sweeps until the off-diagonal Frobenius mass drops below
    rel_tol * ||A||_F. Returns (eigenvalues, eigenvector columns), unsorted.
    """
    n = a.shape[0]
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    fro = np.sqrt(fro)
    if fro == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if np.sqrt(off) <= rel_tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
                for i in range(n):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = c * vip - s * viq
                    v[i, q] = s * vip + c * viq
    w = np.zeros(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v


def _power_iteration(q, shift, tol, max_iter):
    """Shifted power iteration toward the algebraically largest eigenpair.

    Iterates v <- (Q + shift*I) v from the normalized all-ones start so the
    run is reproducible. Returns (v, lam, converged) where lam = v.T Q v and
    convergence means ||Q v - lam v|| <= tol * |lam| on the unshifted Q.
    """
    n = q.shape[0]
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        qv = q @ v
        lam = v @ qv
        resid = 0.0
        for i in range(n):
            d = qv[i] - lam * v[i]
            resid += d * d
        if np.sqrt(resid) <= tol * abs(lam):
            return v, lam, True
        y = qv + shift * v
        norm = np.sqrt(y @ y)
        if norm == 0.0:
            return v, lam, False
        v = y / norm
    return v, lam, False


jacobi_eigh_py = _jacobi_eigh
power_iteration_py = _power_iteration

if HAS_NUMBA:
    jacobi_eigh_nb = numba.njit(cache=True)(_jacobi_eigh)
    power_iteration_nb = numba.njit(cache=True)(_power_iteration)
else:  # pragma: no cover
    jacobi_eigh_nb = None
    power_iteration_nb = None


def warmup():
    """Trigger JIT compilation of the numba kernels (no-op on numpy)."""
    if jacobi_eigh_nb is not None:
        a = np.eye(2) * 2.0
        jacobi_eigh_nb(a, 1e-12, 4)
        power_iteration_nb(np.eye(2), 1.0, 1e-10, 4)
