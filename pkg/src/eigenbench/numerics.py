"""Dense symmetric eigendecomposition and the small Gram matrix.

The decomposition is a cyclic Jacobi iteration: sweeps of plane rotations
drive the off-diagonal mass to zero. It is deliberately self-contained so it
can be checked against an independent oracle (numpy.linalg.eigh) in tests.
"""

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import ConvergenceError, InvalidInputError

# Off-diagonal Frobenius mass below this fraction of ||S||_F counts as diagonal.
CONVERGENCE_RTOL = 1e-12
MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues sorted descending; vectors' columns align with values.

    Columns are unit-norm and pairwise orthogonal. Ties keep the order the
    solver produced them in (stable by original index).
    """

    values: np.ndarray  # (n,)
    vectors: np.ndarray  # (n, n), column i pairs with values[i]


def gram_matrix(a):
    """L = A^T A, the small M x M matrix standing in for the D x D covariance.

    Exactly symmetric by construction (symmetrized to kill float noise).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise InvalidInputError(f"gram_matrix needs a non-empty 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("gram_matrix input contains non-finite entries")
    l = a.T @ a
    return (l + l.T) / 2.0


def sym_eig(s, max_sweeps=MAX_SWEEPS):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns EigenPairs with eigenvalues sorted descending (stable ties) and
    orthonormal eigenvector columns. Raises InvalidInputError on asymmetric
    input and ConvergenceError if the sweep cap is hit.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise InvalidInputError(f"sym_eig needs a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("sym_eig input contains non-finite entries")
    scale = max(1.0, np.abs(s).max())
    asym = np.abs(s - s.T).max()
    if asym > 1e-9 * scale:
        raise InvalidInputError(f"sym_eig input is asymmetric: max |S - S^T| = {asym:g}")

    n = s.shape[0]
    if n == 1:
        return EigenPairs(values=s.diagonal().copy(), vectors=np.ones((1, 1)))

    a = (s + s.T) / 2.0  # work on an exactly symmetric copy
    v = np.eye(n)
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return _sorted_pairs(np.zeros(n), v)
    conv = CONVERGENCE_RTOL * fro
    skip = conv / n  # entries this small cannot push the total mass over conv

    for _ in range(max_sweeps):
        off = _offdiag_norm(a)
        if off <= conv:
            return _sorted_pairs(a.diagonal().copy(), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                sn = t * c
                # A <- J^T A J, J the rotation in the (p, q) plane
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq

    off = _offdiag_norm(a)
    if off <= conv:
        return _sorted_pairs(a.diagonal().copy(), v)
    raise ConvergenceError(
        f"Jacobi iteration did not converge in {max_sweeps} sweeps "
        f"(off-diagonal residual {off:g}, target {conv:g})",
        residual=off,
    )


def _offdiag_norm(a):
    # computed entry-wise: subtracting the diagonal mass from ||A||_F^2 would
    # cancel catastrophically once the off-diagonal part is small
    b = a.copy()
    np.fill_diagonal(b, 0.0)
    return np.linalg.norm(b)


def _sorted_pairs(values, vectors):
    # Stable sort on negated values: descending, ties by ascending original index.
    order = np.argsort(-values, kind="stable")
    return EigenPairs(values=values[order], vectors=vectors[:, order])
