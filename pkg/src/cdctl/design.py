"""Controller synthesis for single- and two-array systems.

Builds the mid-ranging IMC filter pair, the static input compensator that
restores original-space performance when the fast array is short, the
regularization-based output compensator, the composed static gain matrices
used by the simulator, and the closed-loop pole map of the square case.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBandwidth, RankDeficient
from .numlin import (
    GsvdFactorization,
    RANK_RTOL,
    matrix_to_obj,
    pseudo_inverse,
    regularized_inverse,
)
from .plant import ScalarTransferFunction


@dataclass(frozen=True)
class MidrangingFilters:
    """IMC filter pair splitting the band between slow and fast arrays.

    q_s inverts the slow actuator up to the SISO bandwidth (integral action,
    g_s(0) q_s(0) = 1); q_f covers the band between the SISO and TISO
    bandwidths and carries no DC (q_f(0) = 0).
    """

    q_s: ScalarTransferFunction
    q_f: ScalarTransferFunction
    lambda_tiso: float
    lambda_siso: float
    tau_d: float

    def target_responses(self, omega):
        """Nominal complementary sensitivities (T_tiso, T_siso) at omega.

        These are the design targets lam/(jw+lam) * exp(-jw*tau) realized by
        the filters against matched actuators.
        """
        omega = np.asarray(omega, dtype=float)
        s = 1j * omega
        dly = np.exp(-s * self.tau_d)
        t_tiso = self.lambda_tiso / (s + self.lambda_tiso) * dly
        t_siso = self.lambda_siso / (s + self.lambda_siso) * dly
        return t_tiso, t_siso

    def to_obj(self):
        return {
            "q_s": self.q_s.to_obj(),
            "q_f": self.q_f.to_obj(),
            "lambda_tiso": self.lambda_tiso,
            "lambda_siso": self.lambda_siso,
            "tau_d": self.tau_d,
        }


def midranging_filters(a_s, a_f, tau_d, lambda_tiso, lambda_siso) -> MidrangingFilters:
    """Build the mid-ranging filter pair for first-order actuator lags.

    q_s(s) = lam_siso (s + a_s) / (a_s (s + lam_siso))
    q_f(s) = (lam_tiso - lam_siso)/a_f * s (s + a_f) /
             ((s + lam_tiso)(s + lam_siso))
    """
    if a_s <= 0 or a_f <= 0:
        raise ValueError("actuator bandwidths must be positive")
    if not (0 < lambda_siso <= lambda_tiso):
        raise InvalidBandwidth(
            f"need 0 < lambda_siso <= lambda_tiso, got {lambda_siso} > {lambda_tiso}"
        )
    q_s = ScalarTransferFunction(
        num=[lambda_siso / a_s, lambda_siso],
        den=[1.0, lambda_siso],
    )
    k = (lambda_tiso - lambda_siso) / a_f
    q_f = ScalarTransferFunction(
        num=[k, k * a_f, 0.0],
        den=[1.0, lambda_tiso + lambda_siso, lambda_tiso * lambda_siso],
    )
    return MidrangingFilters(q_s=q_s, q_f=q_f, lambda_tiso=float(lambda_tiso),
                             lambda_siso=float(lambda_siso), tau_d=float(tau_d))


def input_compensator(fact: GsvdFactorization) -> np.ndarray:
    """Static fast-array compensator: pinv of the column-truncated X, times X.

    Replaces the oblique coupling map of the raw decomposition with an
    orthogonal projector onto the jointly reachable subspace, removing the
    performance gap between original and generalized modal space.
    """
    return pseudo_inverse(fact.x_tiso()) @ fact.X


def output_compensator(fact: GsvdFactorization, mu, W=None) -> np.ndarray:
    """Regularized output gain X (X^T W X + mu I)^-1 (W X)^T."""
    return fact.X @ regularized_inverse(fact.X, mu, W)


def modal_weighting(fact: GsvdFactorization, weights) -> np.ndarray:
    """Weight matrix U diag(w) U^T over the standard left singular basis of X."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (fact.n_y,) or np.any(weights <= 0):
        raise ValueError(f"weights must be {fact.n_y} positive values")
    U, _, _ = np.linalg.svd(fact.X)
    return (U * weights) @ U.T


@dataclass(frozen=True)
class TwoArrayDesign:
    """Composed static design for the two-array IMC loop.

    K_s / K_f are the fully composed disturbance-to-input gains (including
    the regularized inverse X_mu_inv); K0_s / K0_f are the same compositions
    built on the plain inverse of X, which the simulator and the exact
    closed-loop maps combine with Gamma applied to the measured output only.
    """

    factorization: GsvdFactorization
    filters: MidrangingFilters
    mu: float
    W: np.ndarray
    Upsilon_f: np.ndarray
    Gamma: np.ndarray
    X_mu_inv: np.ndarray
    K_s: np.ndarray
    K_f: np.ndarray
    K0_s: np.ndarray
    K0_f: np.ndarray

    @property
    def n_y(self):
        return self.factorization.n_y

    @property
    def n_s(self):
        return self.factorization.n_s

    @property
    def n_f(self):
        return self.factorization.n_f

    def to_obj(self):
        f = self.factorization
        return {
            "mu": self.mu,
            "filters": self.filters.to_obj(),
            "X": matrix_to_obj(f.X),
            "sigma_s": [float(v) for v in f.sigma_s],
            "sigma_f": [float(v) for v in f.sigma_f],
            "U_s": matrix_to_obj(f.U_s),
            "U_f": matrix_to_obj(f.U_f),
            "W": matrix_to_obj(self.W),
            "Upsilon_f": matrix_to_obj(self.Upsilon_f),
            "Gamma": matrix_to_obj(self.Gamma),
            "X_mu_inv": matrix_to_obj(self.X_mu_inv),
            "K_s": matrix_to_obj(self.K_s),
            "K_f": matrix_to_obj(self.K_f),
            "K0_s": matrix_to_obj(self.K0_s),
            "K0_f": matrix_to_obj(self.K0_f),
        }


def compose_design(fact: GsvdFactorization, filters: MidrangingFilters, mu=1.0,
                   W=None) -> TwoArrayDesign:
    """Assemble compensators and static gains into a TwoArrayDesign."""
    n_y, n_f = fact.n_y, fact.n_f
    if W is None:
        W = np.eye(n_y)
    X_mu_inv = regularized_inverse(fact.X, mu, W)
    Gamma = fact.X @ X_mu_inv
    Upsilon_f = input_compensator(fact)
    X_inv = fact.x_inv()

    D_s_pinv = np.zeros((fact.n_s, n_y))
    D_s_pinv[:n_f, :n_f] = np.diag(1.0 / fact.sigma_s)
    for i in range(n_f, n_y):
        D_s_pinv[i, i] = 1.0
    D_f_pinv = np.zeros((n_f, n_y))
    D_f_pinv[:, :n_f] = np.diag(1.0 / fact.sigma_f)

    K0_s = fact.U_s @ D_s_pinv @ X_inv
    K0_f = fact.U_f @ D_f_pinv @ Upsilon_f @ X_inv
    K_s = fact.U_s @ D_s_pinv @ X_mu_inv
    K_f = fact.U_f @ D_f_pinv @ Upsilon_f @ X_mu_inv
    return TwoArrayDesign(
        factorization=fact, filters=filters, mu=float(mu), W=W,
        Upsilon_f=Upsilon_f, Gamma=Gamma, X_mu_inv=X_mu_inv,
        K_s=K_s, K_f=K_f, K0_s=K0_s, K0_f=K0_f,
    )


@dataclass(frozen=True)
class ImcEquivalentDynamics:
    """Standard-feedback equivalent dynamics of the single-array IMC loop.

    c(s) = lam (s + a) / (a (s + lam (1 - exp(-s tau)))) -- the delay sits in
    the denominator, so this is evaluated on frequency grids rather than held
    as a rational function; the simulator realizes it structurally.
    """

    lam: float
    a: float
    tau_d: float

    def freq_response(self, omega):
        omega = np.asarray(omega, dtype=float)
        s = 1j * omega
        h = (self.lam * (s + self.a)
             / (self.a * (s + self.lam * (1.0 - np.exp(-s * self.tau_d)))))
        return complex(h) if omega.ndim == 0 else h

    def to_obj(self):
        return {"lam": self.lam, "a": self.a, "tau_d": self.tau_d}


@dataclass(frozen=True)
class SingleArrayDesign:
    """Regularized modal design for a single actuator array."""

    R: np.ndarray
    lam: float
    mu: float
    a: float
    tau_d: float
    K: np.ndarray
    c: ImcEquivalentDynamics
    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray

    @property
    def n_y(self):
        return self.R.shape[0]

    @property
    def n_u(self):
        return self.R.shape[1]

    def mode_gains(self):
        """Per-mode loop gains sigma_i * k_i = sigma_i^2/(sigma_i^2 + mu)."""
        return self.Sigma**2 / (self.Sigma**2 + self.mu)

    def to_obj(self):
        return {
            "lam": self.lam, "mu": self.mu, "a": self.a, "tau_d": self.tau_d,
            "R": matrix_to_obj(self.R), "K": matrix_to_obj(self.K),
            "c": self.c.to_obj(),
            "U": matrix_to_obj(self.U),
            "Sigma": [float(v) for v in self.Sigma],
            "V": matrix_to_obj(self.V),
        }


def single_array_design(R, lam, mu, a, tau_d) -> SingleArrayDesign:
    """Gain matrix V diag(sigma_i/(mu+sigma_i^2)) U^T with IMC loop dynamics."""
    R = np.asarray(R, dtype=float)
    if lam <= 0 or a <= 0:
        raise ValueError("bandwidths must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    n_y = R.shape[0]
    U, sv, Vt = np.linalg.svd(R, full_matrices=False)
    if sv[0] == 0.0 or sv[n_y - 1] <= RANK_RTOL * sv[0]:
        raise RankDeficient("R must have full row rank")
    k = sv / (mu + sv**2)
    K = (Vt.T * k) @ U.T
    c = ImcEquivalentDynamics(lam=float(lam), a=float(a), tau_d=float(tau_d))
    return SingleArrayDesign(R=R, lam=float(lam), mu=float(mu), a=float(a),
                             tau_d=float(tau_d), K=K, c=c, U=U, Sigma=sv, V=Vt.T)


def closed_loop_poles(lam, mu, X) -> np.ndarray:
    """Square-case closed-loop poles -lam sigma_i^2/(sigma_i^2 + mu).

    sigma_i are the standard singular values of X; the poles run from -lam at
    mu = 0 toward 0 as mu grows, staying real.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    sv = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return -lam * (sv**2 / (sv**2 + mu))
