"""Dense symmetric-matrix numerics: eigendecomposition, inverse square root,
principal eigenvector.

Everything runs at double precision regardless of how trial data is stored;
dimensions here are small (channel counts and ensemble sizes), so the cyclic
Jacobi eigensolver on the numba backend is both simple and fast enough. The
numpy backend delegates the eigendecomposition to numpy.linalg.eigh behind
the same contract.
"""

import contextlib
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import ConvergenceError, NumericalError, ShapeError

JACOBI_REL_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60
POWER_TOL = 1e-10
POWER_MAX_ITER = 1000
FLOOR_SCALE = 1e-12

_backend = _kernels.DEFAULT_BACKEND


def active_backend():
    return _backend


def set_backend(name):
    """Select the compute backend ("numba" or "numpy") for this process."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError("backend must be 'numba' or 'numpy', got %r" % name)
    if name == "numba" and not _kernels.HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch backend (used by tests and the benchmark)."""
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


class EigPair(NamedTuple):
    values: np.ndarray  # descending
    vectors: np.ndarray  # orthonormal columns, vectors[:, i] pairs values[i]


def symmetrize(a):
    """Exactly symmetric copy: 0.5 * (A + A.T)."""
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + a.T)


def _validate_symmetric(a, op):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("%s expects a square matrix, got shape %s" % (op, a.shape))
    if not np.all(np.isfinite(a)):
        raise NumericalError("%s: non-finite entries" % op)
    scale = np.abs(a).max()
    asym = np.abs(a - a.T).max()
    if asym > 1e-8 * max(scale, 1e-300):
        raise NumericalError("%s: matrix is not symmetric (max asymmetry %g)" % (op, asym))
    return symmetrize(a)


def sym_eig(a):
    """Full eigendecomposition of a symmetric matrix.

    Returns an EigPair with eigenvalues sorted descending and matching
    orthonormal eigenvector columns, so A = V diag(w) V.T.
    """
    a = _validate_symmetric(a, "sym_eig")
    if _backend == "numba":
        w, v = _kernels.jacobi_eigh_nb(a.copy(), JACOBI_REL_TOL, JACOBI_MAX_SWEEPS)
    else:
        w, v = np.linalg.eigh(a)
    order = np.argsort(-w, kind="stable")
    return EigPair(np.ascontiguousarray(w[order]), np.ascontiguousarray(v[:, order]))


def default_floor(r):
    """Relative eigenvalue floor: 1e-12 * trace/dim, absolute 1e-12 when the
    trace vanishes (all-zero covariance)."""
    r = np.asarray(r, dtype=np.float64)
    rel = FLOOR_SCALE * np.trace(r) / r.shape[0]
    return rel if rel > 0.0 else FLOOR_SCALE


def inv_sqrt(r, floor=None):
    """Inverse matrix square root V diag(max(w, floor)^-1/2) V.T of a
    symmetric PSD matrix; flooring keeps rank-deficient inputs finite."""
    r = _validate_symmetric(r, "inv_sqrt")
    if floor is None:
        floor = default_floor(r)
    if floor <= 0.0:
        raise NumericalError("inv_sqrt: floor must be positive, got %g" % floor)
    w, v = sym_eig(r)
    inv_root = 1.0 / np.sqrt(np.maximum(w, floor))
    return symmetrize((v * inv_root) @ v.T)


def principal_eigenvector(q, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Unit eigenvector of the algebraically largest eigenvalue of symmetric Q.

    Shifted power iteration from a deterministic start; the sign is fixed so
    the entries sum to a non-negative value, making repeated calls on the
    same matrix bit-identical.

    Raises ConvergenceError when ||Qv - lam v|| > tol*|lam| after max_iter
    iterations; callers fall back to plain averaging.
    """
    q = _validate_symmetric(q, "principal_eigenvector")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    # Shift by ||Q||_F so the target eigenvalue dominates in magnitude even
    # for indefinite Q.
    shift = float(np.sqrt(np.sum(q * q)))
    if _backend == "numba":
        v, _, ok = _kernels.power_iteration_nb(q, shift, tol, max_iter)
    else:
        v, _, ok = _kernels.power_iteration_py(q, shift, tol, max_iter)
    if not ok:
        raise ConvergenceError(
            "power iteration did not converge in %d iterations" % max_iter
        )
    if v.sum() < 0.0:
        v = -v
    return v
