"""Dense linear-algebra kernel for two-array cross-directional systems.

Provides the joint factorization of a slow/fast response-matrix pair into a
shared output basis with normalized gain splits (``gsvd``), plus the
pseudo-inverse, regularized inverse, subspace angles and condition numbers
used by the controller synthesis, and plain CSV/JSON matrix I/O.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    RankDeficient,
    SingularSystem,
    ZeroColumn,
    ZeroMatrix,
)

#: Singular values below RANK_RTOL times the largest are treated as zero.
RANK_RTOL = 1e-12


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class ResponsePair:
    """Static response matrices of the slow and fast actuator arrays.

    The slow array must span the output space (n_s >= n_y) and the fast array
    must not exceed it (n_f <= n_y); no array may have redundant components.
    """

    R_s: np.ndarray
    R_f: np.ndarray

    def __post_init__(self):
        R_s = _as_matrix(self.R_s, "R_s")
        R_f = _as_matrix(self.R_f, "R_f")
        object.__setattr__(self, "R_s", R_s)
        object.__setattr__(self, "R_f", R_f)
        if R_s.shape[0] != R_f.shape[0]:
            raise DimensionMismatch(
                f"row counts differ: R_s has {R_s.shape[0]}, R_f has {R_f.shape[0]}"
            )
        n_y, n_s = R_s.shape
        n_f = R_f.shape[1]
        if not (n_s >= n_y >= n_f >= 1):
            raise DimensionMismatch(
                f"need n_s >= n_y >= n_f >= 1, got n_y={n_y}, n_s={n_s}, n_f={n_f}"
            )

    @property
    def n_y(self):
        return self.R_s.shape[0]

    @property
    def n_s(self):
        return self.R_s.shape[1]

    @property
    def n_f(self):
        return self.R_f.shape[1]

    def stacked(self):
        """Concatenation [R_s R_f] of the hypothetical single-array system."""
        return np.hstack([self.R_s, self.R_f])


@dataclass(frozen=True)
class GsvdFactorization:
    """Joint factorization R_s = X [diag(s_s), I | 0] U_s^T, R_f = X [diag(s_f); 0] U_f^T.

    ``X`` holds the generalized output modes (first ``n_f`` columns span the
    subspace reachable by both arrays, the rest complete the slow-only part),
    ``sigma_s``/``sigma_f`` the generalized gain split with
    sigma_s[i]**2 + sigma_f[i]**2 == 1, and ``U_s``/``U_f`` the orthogonal
    input modes.  Columns are ordered by non-increasing sigma_f and signed so
    the largest-magnitude entry of each column of X is positive.
    """

    X: np.ndarray
    sigma_s: np.ndarray
    sigma_f: np.ndarray
    U_s: np.ndarray
    U_f: np.ndarray

    @property
    def n_y(self):
        return self.X.shape[0]

    @property
    def n_s(self):
        return self.U_s.shape[0]

    @property
    def n_f(self):
        return self.U_f.shape[0]

    def gain_matrix_slow(self):
        """The n_y x n_s middle factor [diag(sigma_s), I | 0]."""
        D = np.zeros((self.n_y, self.n_s))
        D[: self.n_f, : self.n_f] = np.diag(self.sigma_s)
        for i in range(self.n_f, self.n_y):
            D[i, i] = 1.0
        return D

    def gain_matrix_fast(self):
        """The n_y x n_f middle factor [diag(sigma_f); 0]."""
        D = np.zeros((self.n_y, self.n_f))
        D[: self.n_f, : self.n_f] = np.diag(self.sigma_f)
        return D

    def reconstruct(self):
        """Rebuild (R_s, R_f) from the factors."""
        R_s = self.X @ self.gain_matrix_slow() @ self.U_s.T
        R_f = self.X @ self.gain_matrix_fast() @ self.U_f.T
        return R_s, R_f

    def x_tiso(self):
        """X with the slow-only columns zeroed (the two-array coupling map)."""
        Xt = self.X.copy()
        Xt[:, self.n_f:] = 0.0
        return Xt

    def x_inv(self):
        return np.linalg.solve(self.X, np.eye(self.n_y))


def _require_rank(A, rank, what):
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0.0 or sv[rank - 1] <= RANK_RTOL * sv[0]:
        raise RankDeficient(
            f"{what} must have rank {rank}; singular values span "
            f"[{sv[-1]:.3e}, {sv[0]:.3e}]"
        )


def gsvd(pair: ResponsePair) -> GsvdFactorization:
    """Jointly factor the response pair over a shared output basis.

    Route: orthonormalize the stacked [R_s^T; R_f^T] by thin QR, take the SVD
    of the fast block (a cosine-sine split of the stacked orthonormal factor),
    and re-orthonormalize the slow block by a second QR.  The result is
    validated purely through the reconstruction identities, so the internal
    route is interchangeable.

    Raises RankDeficient when rank(R_s) < n_y or rank(R_f) < n_f, which are
    systems outside the two-array model assumptions.
    """
    n_y, n_s, n_f = pair.n_y, pair.n_s, pair.n_f
    _require_rank(pair.R_s, n_y, "R_s")
    _require_rank(pair.R_f, n_f, "R_f")

    M = np.vstack([pair.R_s.T, pair.R_f.T])
    Q, T = np.linalg.qr(M, mode="reduced")
    Q1, Q2 = Q[:n_s], Q[n_s:]

    U_f, sigma_f, Vt = np.linalg.svd(Q2, full_matrices=True)
    sigma_f = np.minimum(sigma_f, 1.0)
    sigma_s = np.sqrt(1.0 - sigma_f**2)
    V = Vt.T

    # Slow-side orthonormal factor: columns of Q1 V are orthogonal with norms
    # (sigma_s, 1, ..., 1); QR re-normalizes them to working precision.
    W = Q1 @ V
    U1, Rw = np.linalg.qr(W)
    signs = np.sign(np.diag(Rw))
    signs[signs == 0] = 1.0
    U1 = U1 * signs
    if n_s > n_y:
        Qc, _ = np.linalg.qr(U1, mode="complete")
        U_s = np.hstack([U1, Qc[:, n_y:]])
    else:
        U_s = U1

    X = T.T @ V

    # Deterministic signs: largest-magnitude entry of each X column positive.
    for i in range(n_y):
        j = int(np.argmax(np.abs(X[:, i])))
        if X[j, i] < 0.0:
            X[:, i] = -X[:, i]
            U_s[:, i] = -U_s[:, i]
            if i < n_f:
                U_f[:, i] = -U_f[:, i]

    return GsvdFactorization(X=X, sigma_s=sigma_s, sigma_f=sigma_f, U_s=U_s, U_f=U_f)


def pseudo_inverse(A) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with the shared rank tolerance."""
    A = _as_matrix(A, "A")
    return np.linalg.pinv(A, rcond=RANK_RTOL)


def regularized_inverse(X, mu, W=None) -> np.ndarray:
    """Factor matrix (X^T W X + mu I)^-1 (W X)^T of the weighted ridge problem.

    W defaults to the identity.  For mu = 0 and invertible X this reduces to
    the plain inverse; the 2-norm is non-increasing in mu.
    """
    X = _as_matrix(X, "X")
    n = X.shape[0]
    if X.shape[1] != n:
        raise DimensionMismatch("X must be square")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if W is None:
        W = np.eye(n)
    else:
        W = _as_matrix(W, "W")
        if W.shape != (n, n):
            raise DimensionMismatch("W must match X")
        if not np.allclose(W, W.T, rtol=0.0, atol=1e-12 * np.abs(W).max()):
            raise ValueError("W must be symmetric")
        if np.linalg.eigvalsh(W)[0] <= 0.0:
            raise ValueError("W must be positive definite")
    A = X.T @ W @ X + mu * np.eye(n)
    evals = np.linalg.eigvalsh(A)
    if evals[0] <= RANK_RTOL * max(evals[-1], 0.0):
        raise SingularSystem(
            f"X^T W X + mu I numerically singular (mu={mu}, eigenvalue range "
            f"[{evals[0]:.3e}, {evals[-1]:.3e}])"
        )
    c, low = sla.cho_factor(A)
    return sla.cho_solve((c, low), (W @ X).T)


def subspace_angles(X, U) -> np.ndarray:
    """Acute angles, in degrees, between columns of X and of the orthogonal U.

    Entry (i, j) is acos(|x_i^T U_j| / ||x_i||), in [0, 90].
    """
    X = _as_matrix(X, "X")
    U = _as_matrix(U, "U")
    if X.shape[0] != U.shape[0]:
        raise DimensionMismatch("X and U must have the same number of rows")
    norms = np.linalg.norm(X, axis=0)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ZeroColumn(f"column {bad[0]} of X has zero norm")
    cosines = np.abs(X.T @ U) / norms[:, None]
    return np.degrees(np.arccos(np.clip(cosines, 0.0, 1.0)))


def condition_number(A) -> float:
    """2-norm condition number ||A|| ||A^+|| of a possibly rectangular matrix."""
    A = _as_matrix(A, "A")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise ZeroMatrix("condition number undefined for the zero matrix")
    nonzero = sv[sv > RANK_RTOL * sv[0]]
    return float(sv[0] / nonzero[-1])


# -- matrix I/O ----------------------------------------------------------------

def write_matrix_csv(path, A):
    """Row-major CSV with a `# rows cols` header; shortest round-trip floats."""
    A = _as_matrix(A, "A")
    rows, cols = A.shape
    with open(path, "w") as fh:
        fh.write(f"# {rows} {cols}\n")
        for r in range(rows):
            fh.write(",".join(repr(float(v)) for v in A[r]) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# rows cols' header")
        rows, cols = (int(tok) for tok in header[1:].split())
        A = np.empty((rows, cols))
        for r in range(rows):
            vals = fh.readline().strip().split(",")
            if len(vals) != cols:
                raise ValueError(f"{path}: row {r} has {len(vals)} values, expected {cols}")
            A[r] = [float(v) for v in vals]
    return A


def matrix_to_obj(A):
    """JSON-ready dict {"rows", "cols", "data"} with row-major data."""
    A = _as_matrix(A, "A")
    return {"rows": A.shape[0], "cols": A.shape[1], "data": [float(v) for v in A.ravel()]}


def matrix_from_obj(obj) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != rows * cols:
        raise ValueError(f"matrix object has {data.size} entries, expected {rows * cols}")
    return data.reshape(rows, cols)


def write_matrix_json(path, A):
    with open(path, "w") as fh:
        json.dump(matrix_to_obj(A), fh)


def read_matrix_json(path) -> np.ndarray:
    with open(path) as fh:
        return matrix_from_obj(json.load(fh))
