"""Frequency-domain evaluation of the closed loop.

All sweeps run on a logarithmic grid.  The scalar mid-ranging targets have
closed forms; the matrix-valued maps are assembled per frequency from the
static design.  With the output compensator active the exact loop algebra is

    S(jw)   = (I - N(jw)(I - Gamma))^-1 (I - N(jw)),
    N(jw)   = gq_s(jw) M_s + gq_f(jw) M_f,

with M_s = R_s K0_s = I and M_f = R_f K0_f the static coupling maps; at
Gamma = I this collapses to the affine form I - gq_s M_s - gq_f M_f.  Setting
``loop_scalars`` to responses of zero-order-hold discretized filters gives
the exact sampled-data response, matching the simulator to rounding error.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .design import MidrangingFilters, SingleArrayDesign, TwoArrayDesign
from .errors import DegenerateDirection, SensitivityZero, SingularLoop
from .numlin import ResponsePair, pseudo_inverse
from .plant import ScalarTransferFunction, zoh_discretize

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive angular frequencies (rad/s)."""

    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 1 or omega.size < 2:
            raise ValueError("grid needs at least two frequencies")
        if np.any(omega <= 0) or np.any(np.diff(omega) <= 0):
            raise ValueError("grid must be strictly increasing and positive")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def logspace(cls, f_min_hz=0.01, f_max_hz=5000.0, count=2000):
        f = np.logspace(np.log10(f_min_hz), np.log10(f_max_hz), count)
        return cls(omega=2.0 * np.pi * f)

    @property
    def f_hz(self):
        return self.omega / (2.0 * np.pi)

    @property
    def count(self):
        return self.omega.size


def golden_peak(fun, x_lo, x_hi, iters=120):
    """Golden-section maximizer of a scalar function on [x_lo, x_hi]."""
    a, b = float(x_lo), float(x_hi)
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def _scalar_sens_mag(lam, tau):
    return lambda f: abs(1.0 - lam / (2j * np.pi * f + lam) * np.exp(-2j * np.pi * f * tau))


@dataclass(frozen=True)
class ModalSensitivities:
    """Scalar TISO/SISO loop responses on a grid."""

    grid: FrequencyGrid
    s_tiso: np.ndarray
    s_siso: np.ndarray
    t_tiso: np.ndarray
    t_siso: np.ndarray
    lambda_tiso: float
    lambda_siso: float
    tau_d: float

    def peak(self, which="tiso"):
        """(peak_dB, freq_hz) of |S| with sub-grid golden-section refinement."""
        if which == "tiso":
            mag, lam = np.abs(self.s_tiso), self.lambda_tiso
        else:
            mag, lam = np.abs(self.s_siso), self.lambda_siso
        k = int(np.argmax(mag))
        f = self.grid.f_hz
        lo = f[max(k - 1, 0)]
        hi = f[min(k + 1, f.size - 1)]
        f_pk, m_pk = golden_peak(_scalar_sens_mag(lam, self.tau_d), lo, hi)
        return 20.0 * np.log10(m_pk), f_pk


def modal_sensitivities(filters: MidrangingFilters, g_s: ScalarTransferFunction,
                        g_f: ScalarTransferFunction, grid: FrequencyGrid) -> ModalSensitivities:
    """Scalar loop responses computed from the actual filter/actuator parts.

    t_siso = g_s q_s and t_tiso = g_s q_s + g_f q_f; for matched actuators
    these equal the closed-form targets lam/(jw+lam) e^{-jw tau}.
    """
    w = grid.omega
    gs = g_s.freq_response(w)
    gf = g_f.freq_response(w)
    t_siso = gs * filters.q_s.freq_response(w)
    t_tiso = t_siso + gf * filters.q_f.freq_response(w)
    return ModalSensitivities(grid=grid, s_tiso=1.0 - t_tiso, s_siso=1.0 - t_siso,
                              t_tiso=t_tiso, t_siso=t_siso,
                              lambda_tiso=filters.lambda_tiso,
                              lambda_siso=filters.lambda_siso, tau_d=filters.tau_d)


def nominal_loop_scalars(filters: MidrangingFilters, omega):
    """Closed-form (gq_s, gq_f) = (T_siso, T_tiso - T_siso) on the grid."""
    t_tiso, t_siso = filters.target_responses(omega)
    return t_siso, t_tiso - t_siso


def discrete_loop_scalars(filters: MidrangingFilters, g_s: ScalarTransferFunction,
                          g_f: ScalarTransferFunction, fs_hz, omega):
    """(gq_s, gq_f) evaluated from zero-order-hold discretizations at z=e^{jwT}.

    This is the loop actually realized by the sampled simulator.
    """
    gd_s = zoh_discretize(g_s, fs_hz)
    gd_f = zoh_discretize(g_f, fs_hz)
    qd_s = zoh_discretize(filters.q_s, fs_hz)
    qd_f = zoh_discretize(filters.q_f, fs_hz)
    return (gd_s.freq_response(omega) * qd_s.freq_response(omega),
            gd_f.freq_response(omega) * qd_f.freq_response(omega))


def coupling_maps(design: TwoArrayDesign, use_input_comp=True):
    """Static output-space maps (M_s, M_f) multiplying gq_s and gq_f.

    M_s = R_s K0_s = I identically; M_f is the orthogonal projector onto the
    jointly reachable subspace with the input compensator, and the oblique
    map X [I 0; 0 0] X^-1 without it.
    """
    fact = design.factorization
    M_s = np.eye(design.n_y)
    Xt = fact.x_tiso()
    if use_input_comp:
        M_f = Xt @ pseudo_inverse(Xt)
    else:
        M_f = Xt @ fact.x_inv()
    return M_s, M_f


@dataclass(frozen=True)
class SensitivitySweep:
    """Per-frequency singular-value extremes of S with the scalar envelopes."""

    grid: FrequencyGrid
    sigma_min: np.ndarray
    sigma_max: np.ndarray
    s_tiso_mag: np.ndarray
    s_siso_mag: np.ndarray
    t_tiso_mag: np.ndarray
    t_siso_mag: np.ndarray
    use_input_comp: bool
    use_output_comp: bool


def output_sensitivity_sweep(design: TwoArrayDesign, grid: FrequencyGrid,
                             use_input_comp=True, use_output_comp=True,
                             loop_scalars=None) -> SensitivitySweep:
    """Sweep the output sensitivity S(jw), returning its singular extremes.

    ``loop_scalars`` optionally supplies precomputed (gq_s, gq_f) arrays on
    the grid (e.g. from ``discrete_loop_scalars``); the default is the
    nominal continuous closed form.
    """
    n = design.n_y
    if loop_scalars is None:
        alpha, beta = nominal_loop_scalars(design.filters, grid.omega)
    else:
        alpha, beta = loop_scalars
    M_s, M_f = coupling_maps(design, use_input_comp)
    Gamma = design.Gamma if use_output_comp else np.eye(n)
    eye = np.eye(n)
    gamma_active = use_output_comp and not np.allclose(Gamma, eye, atol=1e-15)

    smin = np.empty(grid.count)
    smax = np.empty(grid.count)
    for k in range(grid.count):
        N = alpha[k] * M_s + beta[k] * M_f
        if gamma_active:
            S = np.linalg.solve(eye - N @ (eye - Gamma), eye - N)
        else:
            S = eye - N
        sv = np.linalg.svd(S, compute_uv=False)
        smax[k], smin[k] = sv[0], sv[-1]
    t_tiso = alpha + beta
    return SensitivitySweep(
        grid=grid, sigma_min=smin, sigma_max=smax,
        s_tiso_mag=np.abs(1.0 - t_tiso), s_siso_mag=np.abs(1.0 - alpha),
        t_tiso_mag=np.abs(t_tiso), t_siso_mag=np.abs(alpha),
        use_input_comp=use_input_comp, use_output_comp=use_output_comp,
    )


@dataclass(frozen=True)
class InputSensitivitySweep:
    """Per-frequency maximum gains of the disturbance-to-input maps."""

    grid: FrequencyGrid
    sigma_max_slow: np.ndarray
    sigma_max_fast: np.ndarray
    norm_K_s: float
    norm_K_f: float


def input_sensitivity_sweep(design: TwoArrayDesign, grid: FrequencyGrid) -> InputSensitivitySweep:
    """Disturbance-to-input gains |q_s(jw)| ||K_s|| and |q_f(jw)| ||K_f||.

    The dynamic factor is scalar, so the per-frequency maximum singular value
    factors into the filter magnitude times the static gain norm.
    """
    w = grid.omega
    nKs = float(np.linalg.norm(design.K_s, 2))
    nKf = float(np.linalg.norm(design.K_f, 2))
    return InputSensitivitySweep(
        grid=grid,
        sigma_max_slow=np.abs(design.filters.q_s.freq_response(w)) * nKs,
        sigma_max_fast=np.abs(design.filters.q_f.freq_response(w)) * nKf,
        norm_K_s=nKs, norm_K_f=nKf,
    )


@dataclass(frozen=True)
class OpenLoopResult:
    """Determinant trace of the open loop L(jw) = X diag(l) X^-1 Gamma.

    Determinants are carried as (unit-modulus sign, log-magnitude) pairs from
    LU factorizations so 96-dimensional loops do not overflow; ``det_l`` holds
    the literal complex values where they are representable.
    """

    grid: FrequencyGrid
    det_l: np.ndarray
    det_l_sign: np.ndarray
    det_l_logabs: np.ndarray
    det_l0_sign: np.ndarray
    det_l0_logabs: np.ndarray
    det_gamma: complex
    prop_rel_err_max: float
    min_dist_to_minus_one: float
    argmin_f_hz: float
    stable_hint: bool


def open_loop_and_margin(design: TwoArrayDesign, grid: FrequencyGrid,
                         use_output_comp=True) -> OpenLoopResult:
    """Trace det L(jw) for generalized-Nyquist inspection.

    Verifies det L = det L0 det Gamma pointwise and reports the minimum
    distance of det L to -1.  ``stable_hint`` is a necessary-condition screen
    (no crossing of the real axis left of -1 between grid points); nominal
    stability certification uses the closed-form pole map in the square case
    and simulation elsewhere.
    """
    fact = design.factorization
    n, n_f = design.n_y, design.n_f
    alpha, beta = nominal_loop_scalars(design.filters, grid.omega)
    s_tiso = 1.0 - (alpha + beta)
    s_siso = 1.0 - alpha
    tiny = 1e-300
    if np.any(np.abs(s_tiso) < tiny) or np.any(np.abs(s_siso) < tiny):
        raise SensitivityZero("scalar sensitivity vanishes on the grid")
    l_tiso = (alpha + beta) / s_tiso
    l_siso = alpha / s_siso

    Gamma = design.Gamma if use_output_comp else np.eye(n)
    sign_g, logabs_g = np.linalg.slogdet(Gamma)
    det_gamma = sign_g * np.exp(logabs_g)
    X, X_inv = fact.X, fact.x_inv()

    m = grid.count
    sign_l = np.empty(m, dtype=complex)
    logabs_l = np.empty(m)
    sign_l0 = np.empty(m, dtype=complex)
    logabs_l0 = np.empty(m)
    det_l = np.empty(m, dtype=complex)
    prop_err = 0.0
    for k in range(m):
        diag = np.concatenate([np.full(n_f, l_tiso[k]), np.full(n - n_f, l_siso[k])])
        L0 = (X * diag) @ X_inv
        sign_l0[k], logabs_l0[k] = np.linalg.slogdet(L0)
        sign_l[k], logabs_l[k] = np.linalg.slogdet(L0 @ Gamma)
        # relative identity error |det L / (det L0 det Gamma) - 1|
        ratio = (sign_l[k] / (sign_l0[k] * sign_g)) * np.exp(
            logabs_l[k] - logabs_l0[k] - logabs_g)
        prop_err = max(prop_err, abs(ratio - 1.0))
        det_l[k] = sign_l[k] * np.exp(logabs_l[k]) if logabs_l[k] < 700.0 else (
            sign_l[k] * np.inf)

    dist = np.where(logabs_l < 700.0, np.abs(det_l + 1.0), np.exp(np.minimum(logabs_l, 709.0)))
    k_min = int(np.argmin(dist))

    # crossing screen: segment of the Nyquist curve crossing (-inf, -1)
    crossed = False
    finite = logabs_l < 700.0
    for k in range(m - 1):
        if not (finite[k] and finite[k + 1]):
            continue
        a, b = det_l[k], det_l[k + 1]
        if a.imag == 0.0 and a.real <= -1.0:
            crossed = True
        elif a.imag * b.imag < 0.0:
            t = a.imag / (a.imag - b.imag)
            x = a.real + t * (b.real - a.real)
            if x <= -1.0:
                crossed = True
    return OpenLoopResult(
        grid=grid, det_l=det_l, det_l_sign=sign_l, det_l_logabs=logabs_l,
        det_l0_sign=sign_l0, det_l0_logabs=logabs_l0, det_gamma=det_gamma,
        prop_rel_err_max=float(prop_err),
        min_dist_to_minus_one=float(dist[k_min]),
        argmin_f_hz=float(grid.f_hz[k_min]),
        stable_hint=not crossed,
    )


@dataclass(frozen=True)
class RobustStabilityResult:
    """Admissible static uncertainty bound from the small-gain condition."""

    grid: FrequencyGrid
    norm_trace: np.ndarray
    delta_max: float
    argmin_f_hz: float


def uncertainty_loop_matrix(design: TwoArrayDesign, gq_pair, use_output_comp=True):
    """The map M(jw) = -Q Upsilon (I + (Gamma - I) P Q Upsilon)^-1 Gamma.

    ``gq_pair`` gives ((q_s, q_f), (g_s q_s, g_f q_f)) values at one frequency
    as scalars: the first pair builds Q Upsilon, the second the plant product
    P Q Upsilon.
    """
    n = design.n_y
    (qs, qf), (gqs, gqf) = gq_pair
    B = np.vstack([qs * design.K0_s, qf * design.K0_f])
    M_s, M_f = coupling_maps(design, use_input_comp=True)
    N = gqs * M_s + gqf * M_f
    Gamma = design.Gamma if use_output_comp else np.eye(n)
    try:
        inner = np.linalg.solve(np.eye(n) + (Gamma - np.eye(n)) @ N, Gamma)
    except np.linalg.LinAlgError as exc:
        raise SingularLoop(str(exc))
    return -B @ inner


def robust_stability_margin(design: TwoArrayDesign, g_s: ScalarTransferFunction,
                            g_f: ScalarTransferFunction, grid: FrequencyGrid,
                            use_output_comp=True) -> RobustStabilityResult:
    """Largest admissible ||[Delta_s Delta_f]|| for guaranteed stability.

    delta_max = min over the grid of 1 / ||diag(g_s I, g_f I) M(jw)||; the
    argmin frequency is reported so callers can refine locally.
    """
    n, n_s = design.n_y, design.n_s
    w = grid.omega
    gs = g_s.freq_response(w)
    gf = g_f.freq_response(w)
    qs = design.filters.q_s.freq_response(w)
    qf = design.filters.q_f.freq_response(w)
    norms = np.empty(grid.count)
    for k in range(grid.count):
        try:
            M = uncertainty_loop_matrix(
                design, ((qs[k], qf[k]), (gs[k] * qs[k], gf[k] * qf[k])),
                use_output_comp=use_output_comp)
        except SingularLoop as exc:
            raise SingularLoop(f"at f = {grid.f_hz[k]:.6g} Hz: {exc}")
        GM = np.vstack([gs[k] * M[:n_s], gf[k] * M[n_s:]])
        norms[k] = np.linalg.norm(GM, 2)
    k_max = int(np.argmax(norms))
    return RobustStabilityResult(
        grid=grid, norm_trace=norms,
        delta_max=float(1.0 / norms[k_max]),
        argmin_f_hz=float(grid.f_hz[k_max]),
    )


def single_array_mode_response(design: SingleArrayDesign, omega, t_m=None):
    """Per-mode complementary sensitivities of the regularized single-array loop.

    Mode i responds with g_i T_m / (1 - (1 - g_i) T_m) where g_i = sigma_i k_i
    and T_m is the unregularized target; ``t_m`` overrides the continuous
    closed form lam/(jw+lam) e^{-jw tau} (e.g. with a discretized loop
    response g_d(z) q_d(z)).  Returns an (n_y, len(omega)) array.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if t_m is None:
        s = 1j * omega
        t_m = design.lam / (s + design.lam) * np.exp(-s * design.tau_d)
    g = design.mode_gains()[:, None]
    return g * t_m[None, :] / (1.0 - (1.0 - g) * t_m[None, :])


# -- gain-ratio diagnostics ----------------------------------------------------

def _array_energies(y, pair: ResponsePair):
    y = np.asarray(y, dtype=float)
    p = float(np.sum((y @ pair.R_s) ** 2))
    q = float(np.sum((y @ pair.R_f) ** 2))
    tiny = np.finfo(float).tiny
    if p <= tiny or q <= tiny:
        raise DegenerateDirection(
            "direction orthogonal to an array's range; gain ratio undefined")
    return p, q


def gain_ratio(y, pair: ResponsePair) -> float:
    """Symmetric ratio of per-array gains along output direction y (>= 1)."""
    p, q = _array_energies(y, pair)
    return 0.5 * (p / q + q / p)


def gain_ratio_gradient(y, pair: ResponsePair) -> np.ndarray:
    """Gradient of ``gain_ratio``; vanishes at the generalized output modes."""
    y = np.asarray(y, dtype=float)
    p, q = _array_energies(y, pair)
    gs = pair.R_s @ (pair.R_s.T @ y)
    gf = pair.R_f @ (pair.R_f.T @ y)
    return (gs - (p / q) * gf) / q + (gf - (q / p) * gs) / p


def stationary_directions(fact) -> np.ndarray:
    """Columns y_i = (X X^T)^-1 x_i = X^-T e_i, the gain-ratio stationary points.

    Computed by a single triangular solve against X^T to avoid squaring the
    condition number.
    """
    lu, piv = sla.lu_factor(fact.X.T)
    return sla.lu_solve((lu, piv), np.eye(fact.n_y))
