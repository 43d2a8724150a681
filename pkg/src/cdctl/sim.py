"""Discrete-time closed-loop simulation of the IMC structure.

The loop runs at a fixed sample rate with zero-order-hold equivalents of the
actuator lags and IMC filters.  The plant filters carry the transport delay
(and are strictly proper), so each sample proceeds causally: read the current
actuator outputs, form the plant/model outputs, feed the compensated error
through the biproper filters, then push the new inputs into the actuators.
The output compensator acts on the measured output only (v = Gamma y - yhat),
which preserves the loop's integral action.

Also provides the synthetic response-pair generator (a stand-in for measured
machine response matrices), the resonance/broadband disturbance model, and
trace persistence (CSV and a compact CDT1 binary layout).
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .design import SingleArrayDesign, TwoArrayDesign
from .errors import (
    DimensionMismatch,
    Diverged,
    FrequencyAboveNyquist,
    InfeasibleDimensions,
    NonIntegerDelay,
)
from .numlin import ResponsePair
from .plant import (
    MultiChannelFilter,
    ScalarTransferFunction,
    actuator_lag,
    zoh_discretize,
)

_DIVERGENCE_FACTOR = 1e9
_BIN_MAGIC = b"CDT1"


@dataclass(frozen=True)
class PlantParams:
    """First-order actuator bandwidths (rad/s) and the common loop delay (s)."""

    a_s: float
    a_f: float
    tau_d: float

    def g_s(self):
        return actuator_lag(self.a_s, self.tau_d)

    def g_f(self):
        return actuator_lag(self.a_f, self.tau_d)


# -- synthetic plant -----------------------------------------------------------

def _fourier_basis(n):
    """Orthonormal basis of spatial harmonics (circulant eigenvectors)."""
    U = np.empty((n, n))
    U[:, 0] = 1.0 / np.sqrt(n)
    t = np.arange(n)
    col, k = 1, 1
    while col < n:
        c = np.cos(2.0 * np.pi * k * t / n)
        U[:, col] = c / np.linalg.norm(c)
        col += 1
        if col < n:
            s = np.sin(2.0 * np.pi * k * t / n)
            U[:, col] = s / np.linalg.norm(s)
            col += 1
        k += 1
    return U


def _banded_orthogonal(n, band, rng):
    """Orthogonal matrix mixing each mode with ~band neighbours."""
    B = np.zeros((n, n))
    for i in range(n):
        lo, hi = max(0, i - band), min(n, i + band + 1)
        B[i, lo:hi] = rng.normal(size=hi - lo)
    Q, R = np.linalg.qr(np.eye(n) + 0.8 * B / np.sqrt(2 * band + 1))
    return Q * np.sign(np.diag(R))


def synth_response_pair(n_y, n_s, n_f, target_kappa, seed) -> ResponsePair:
    """Deterministic synthetic slow/fast response pair.

    Output singular spectrum decays geometrically to 1/target_kappa over a
    smooth harmonic basis; the fast array drives a locally mixed (hence
    non-orthogonal to the slow modes) subspace, echoing the extraction of the
    two arrays from one physical corrector set.  kappa([R_s R_f]) lands within
    a factor 2 of the target and both rank conditions hold by construction.
    """
    if not (n_s >= n_y >= n_f >= 1):
        raise InfeasibleDimensions(
            f"need n_s >= n_y >= n_f >= 1, got n_y={n_y}, n_s={n_s}, n_f={n_f}")
    if target_kappa < 1.0:
        raise InfeasibleDimensions("target_kappa must be >= 1")
    rng = np.random.default_rng(seed)
    U = _fourier_basis(n_y)
    c = target_kappa ** (-np.linspace(0.0, 1.0, n_y))
    theta = np.linspace(0.35, 0.55, n_f) * np.pi / 2.0
    s = c.copy()
    s[:n_f] = c[:n_f] * np.cos(theta)
    f = c[:n_f] * np.sin(theta)
    Theta = _banded_orthogonal(n_y, max(2, n_y // 8), rng)
    V_s, _ = np.linalg.qr(rng.normal(size=(n_s, n_y)))
    V_f, _ = np.linalg.qr(rng.normal(size=(n_f, n_f)))
    R_s = (U * s) @ V_s.T
    R_f = ((U @ Theta)[:, :n_f] * f) @ V_f.T
    return ResponsePair(R_s=R_s, R_f=R_f)


# -- disturbances ----------------------------------------------------------------

@dataclass(frozen=True)
class Resonance:
    freq_hz: float
    amplitude: float
    space: str = "input"  # "input" routes through R, "output" adds directly


@dataclass(frozen=True)
class DisturbanceModel:
    """Sinusoidal resonances plus white noise and a constant offset."""

    resonances: tuple = ()
    broadband_std: float = 0.0
    offset: float = 0.0
    seed: int = 0

    @classmethod
    def default_model(cls, amplitude=1.0, seed=0):
        """Girder-style input resonances at 0.2/1/20/120 Hz, 1/f weighted,
        plus white output noise at 1% of the base amplitude."""
        freqs = (0.2, 1.0, 20.0, 120.0)
        res = tuple(Resonance(freq_hz=f, amplitude=amplitude / max(f, 1.0), space="input")
                    for f in freqs)
        return cls(resonances=res, broadband_std=0.01 * amplitude, seed=seed)

    def to_obj(self):
        return {
            "resonances": [
                {"freq_hz": r.freq_hz, "amplitude": r.amplitude, "space": r.space}
                for r in self.resonances
            ],
            "broadband_std": self.broadband_std,
            "offset": self.offset,
            "seed": self.seed,
        }

    @classmethod
    def from_obj(cls, obj):
        res = tuple(Resonance(freq_hz=float(r["freq_hz"]), amplitude=float(r["amplitude"]),
                              space=r.get("space", "input"))
                    for r in obj.get("resonances", ()))
        return cls(resonances=res, broadband_std=float(obj.get("broadband_std", 0.0)),
                   offset=float(obj.get("offset", 0.0)), seed=int(obj.get("seed", 0)))


def gen_disturbance(model: DisturbanceModel, pair: ResponsePair, n_samples, f_s) -> np.ndarray:
    """Sampled disturbance d = R d_u + d_y (n_y x N), deterministic per seed.

    Input-space resonances excite fixed random corrector directions through
    [R_s R_f]; output-space resonances and the white/offset terms add
    directly per monitor channel.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    for r in model.resonances:
        if r.freq_hz >= f_s / 2.0:
            raise FrequencyAboveNyquist(
                f"resonance at {r.freq_hz} Hz >= Nyquist {f_s / 2.0} Hz")
        if r.amplitude < 0:
            raise ValueError("resonance amplitudes must be nonnegative")
    rng = np.random.default_rng(model.seed)
    n_y = pair.n_y
    n_u = pair.n_s + pair.n_f
    R = pair.stacked()
    t = np.arange(n_samples) / f_s
    d = np.zeros((n_y, n_samples))
    for r in model.resonances:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = r.amplitude * np.sin(2.0 * np.pi * r.freq_hz * t + phase)
        if r.space == "input":
            direction = rng.normal(size=n_u)
            direction /= np.linalg.norm(direction)
            d += np.outer(R @ direction, wave)
        else:
            direction = rng.normal(size=n_y)
            direction /= np.linalg.norm(direction)
            d += np.outer(direction, wave)
    if model.broadband_std > 0.0:
        d += model.broadband_std * rng.normal(size=(n_y, n_samples))
    d += np.asarray(model.offset, dtype=float).reshape(-1, 1) if np.ndim(model.offset) else model.offset
    return d


# -- uncertainty -----------------------------------------------------------------

@dataclass(frozen=True)
class UncertaintySpec:
    """Additive static response-matrix perturbations for both arrays."""

    delta_s: np.ndarray
    delta_f: np.ndarray

    def __post_init__(self):
        ds = np.asarray(self.delta_s, dtype=float)
        df = np.asarray(self.delta_f, dtype=float)
        if not (np.all(np.isfinite(ds)) and np.all(np.isfinite(df))):
            raise DimensionMismatch("uncertainty matrices must be finite")
        object.__setattr__(self, "delta_s", ds)
        object.__setattr__(self, "delta_f", df)

    def combined_norm(self):
        """2-norm of [Delta_s Delta_f], the quantity bounded by delta_max."""
        return float(np.linalg.norm(np.hstack([self.delta_s, self.delta_f]), 2))

    @classmethod
    def zero(cls, n_y, n_s, n_f):
        return cls(delta_s=np.zeros((n_y, n_s)), delta_f=np.zeros((n_y, n_f)))

    @classmethod
    def random_with_norm(cls, n_y, n_s, n_f, norm, seed=0):
        """Random direction scaled to a prescribed combined 2-norm."""
        rng = np.random.default_rng(seed)
        D = rng.normal(size=(n_y, n_s + n_f))
        D *= norm / np.linalg.norm(D, 2)
        return cls(delta_s=D[:, :n_s], delta_f=D[:, n_s:])


# -- traces ----------------------------------------------------------------------

@dataclass
class SimTrace:
    """Sampled records of one closed-loop run."""

    y: np.ndarray
    u_s: np.ndarray
    u_f: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f_s: float
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self):
        return self.y.shape[1]

    def time(self):
        return np.arange(self.n_samples) / self.f_s

    def _column_blocks(self):
        return [("y", self.y), ("us", self.u_s), ("uf", self.u_f),
                ("d", self.d), ("e", self.e)]

    def save_csv(self, path):
        n = self.n_samples
        cols = self._column_blocks()
        header = "t," + ",".join(
            f"{tag}_{i}" for tag, arr in cols for i in range(arr.shape[0]))
        t = self.time()
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(
                {"fs_hz": self.f_s, "meta": self.meta,
                 "dims": {tag: arr.shape[0] for tag, arr in cols}},
                sort_keys=True) + "\n")
            fh.write(header + "\n")
            for k in range(n):
                row = [repr(float(t[k]))]
                for _, arr in cols:
                    row.extend(repr(float(v)) for v in arr[:, k])
                fh.write(",".join(row) + "\n")

    @classmethod
    def load_csv(cls, path):
        with open(path) as fh:
            info = json.loads(fh.readline().lstrip("# ").strip())
            fh.readline()  # column names
            rows = [line.strip().split(",") for line in fh if line.strip()]
        data = np.array([[float(v) for v in row] for row in rows]).T
        dims = info["dims"]
        blocks = {}
        offset = 1  # skip time column
        for tag in ("y", "us", "uf", "d", "e"):
            m = int(dims[tag])
            blocks[tag] = data[offset:offset + m]
            offset += m
        return cls(y=blocks["y"], u_s=blocks["us"], u_f=blocks["uf"],
                   d=blocks["d"], e=blocks["e"], f_s=float(info["fs_hz"]),
                   meta=info["meta"])

    def save_bin(self, path):
        """Little-endian CDT1 layout: magic, dims, fs, then y/u_s/u_f/d/e."""
        with open(path, "wb") as fh:
            fh.write(_BIN_MAGIC)
            n_y, n = self.y.shape
            fh.write(struct.pack("<IIIQd", n_y, self.u_s.shape[0],
                                 self.u_f.shape[0], n, self.f_s))
            meta = json.dumps(self.meta, sort_keys=True).encode()
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            for arr in (self.y, self.u_s, self.u_f, self.d, self.e):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load_bin(cls, path):
        with open(path, "rb") as fh:
            if fh.read(4) != _BIN_MAGIC:
                raise ValueError(f"{path}: not a CDT1 trace")
            n_y, n_s, n_f, n, f_s = struct.unpack("<IIIQd", fh.read(28))
            (meta_len,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(meta_len).decode())
            def read(rows):
                data = np.frombuffer(fh.read(rows * n * 8), dtype="<f8")
                return data.reshape(rows, n).copy()
            y, u_s, u_f = read(n_y), read(n_s), read(n_f)
            d, e = read(n_y), read(n_y)
        return cls(y=y, u_s=u_s, u_f=u_f, d=d, e=e, f_s=f_s, meta=meta)


def design_hash(design) -> str:
    """Stable hash of a design's serialized content."""
    blob = json.dumps(design.to_obj(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- closed-loop runs --------------------------------------------------------------

def _check_divergence(y_t, scale, t):
    if not np.all(np.isfinite(y_t)) or np.abs(y_t).max() > _DIVERGENCE_FACTOR * scale:
        raise Diverged(f"output exceeded {_DIVERGENCE_FACTOR:g} x disturbance scale "
                       f"at sample {t}")


def simulate_two_array(design: TwoArrayDesign, plant: PlantParams, disturbance,
                       uncertainty: UncertaintySpec = None, f_s=10000.0,
                       meta=None) -> SimTrace:
    """Run the two-array IMC loop against a sampled disturbance (n_y x N).

    The real plant uses R + Delta while the internal model uses R, so the
    model-error signal e = y - yhat equals the disturbance exactly when the
    uncertainty is zero.
    """
    d = np.asarray(disturbance, dtype=float)
    fact = design.factorization
    n_y, n_s, n_f = design.n_y, design.n_s, design.n_f
    if d.ndim != 2 or d.shape[0] != n_y:
        raise DimensionMismatch(f"disturbance must be {n_y} x N")
    R_s, R_f = fact.reconstruct()
    if uncertainty is None:
        uncertainty = UncertaintySpec.zero(n_y, n_s, n_f)
    if uncertainty.delta_s.shape != R_s.shape or uncertainty.delta_f.shape != R_f.shape:
        raise DimensionMismatch("uncertainty shapes must match the response pair")
    Rp_s = R_s + uncertainty.delta_s
    Rp_f = R_f + uncertainty.delta_f

    g_s = zoh_discretize(plant.g_s(), f_s)
    g_f = zoh_discretize(plant.g_f(), f_s)
    q_s = zoh_discretize(design.filters.q_s, f_s)
    q_f = zoh_discretize(design.filters.q_f, f_s)
    plant_s = MultiChannelFilter(g_s, n_s)
    plant_f = MultiChannelFilter(g_f, n_f)
    model_s = MultiChannelFilter(g_s, n_s)
    model_f = MultiChannelFilter(g_f, n_f)
    if not (plant_s.has_inherent_delay() and plant_f.has_inherent_delay()):
        raise NonIntegerDelay("actuator model needs >= 1 sample of delay to close the loop")
    filt_s = MultiChannelFilter(q_s, n_s)
    filt_f = MultiChannelFilter(q_f, n_f)

    Gamma, K0_s, K0_f = design.Gamma, design.K0_s, design.K0_f
    n = d.shape[1]
    y = np.empty((n_y, n))
    e = np.empty((n_y, n))
    u_s = np.empty((n_s, n))
    u_f = np.empty((n_f, n))
    scale = max(np.abs(d).max(), 1e-30)
    for t in range(n):
        w_s, w_f = plant_s.peek(), plant_f.peek()
        wbar_s, wbar_f = model_s.peek(), model_f.peek()
        y_t = Rp_s @ w_s + Rp_f @ w_f + d[:, t]
        yhat_t = R_s @ wbar_s + R_f @ wbar_f
        _check_divergence(y_t, scale, t)
        v_t = Gamma @ y_t - yhat_t
        us_t = -filt_s.step(K0_s @ v_t)
        uf_t = -filt_f.step(K0_f @ v_t)
        plant_s.push(us_t)
        plant_f.push(uf_t)
        model_s.push(us_t)
        model_f.push(uf_t)
        y[:, t] = y_t
        e[:, t] = y_t - yhat_t
        u_s[:, t] = us_t
        u_f[:, t] = uf_t
    meta = dict(meta or {})
    meta.setdefault("design_hash", design_hash(design))
    meta.setdefault("structure", "imc-two-array; gamma on measured output")
    return SimTrace(y=y, u_s=u_s, u_f=u_f, d=d, e=e, f_s=float(f_s), meta=meta)


def simulate_single_array(design: SingleArrayDesign, disturbance, uncertainty=None,
                          f_s=10000.0, meta=None) -> SimTrace:
    """Run the single-array IMC loop u = -K c(z) y realized structurally.

    The regularized static part enters as Gamma_y = R K on the measured
    output; the unregularized inverse K0 = V Sigma^-1 U^T and the filter
    q(z) = T_m/g close the loop, reproducing the lambda controller with its
    integral action at sample instants.
    """
    d = np.asarray(disturbance, dtype=float)
    n_y, n_u = design.n_y, design.n_u
    if d.ndim != 2 or d.shape[0] != n_y:
        raise DimensionMismatch(f"disturbance must be {n_y} x N")
    R = design.R
    delta = np.zeros_like(R) if uncertainty is None else np.asarray(uncertainty, dtype=float)
    if delta.shape != R.shape:
        raise DimensionMismatch("uncertainty must match R")
    Rp = R + delta

    # q(s) = T_m/g = lam (s + a) / (a (s + lam))
    q_tf = ScalarTransferFunction(num=[design.lam / design.a, design.lam],
                                  den=[1.0, design.lam])
    g_d = zoh_discretize(actuator_lag(design.a, design.tau_d), f_s)
    q_d = zoh_discretize(q_tf, f_s)
    plant_g = MultiChannelFilter(g_d, n_u)
    model_g = MultiChannelFilter(g_d, n_u)
    if not plant_g.has_inherent_delay():
        raise NonIntegerDelay("actuator model needs >= 1 sample of delay to close the loop")
    filt_q = MultiChannelFilter(q_d, n_u)

    Gamma_y = R @ design.K
    K0 = (design.V / design.Sigma) @ design.U.T
    n = d.shape[1]
    y = np.empty((n_y, n))
    e = np.empty((n_y, n))
    u = np.empty((n_u, n))
    scale = max(np.abs(d).max(), 1e-30)
    for t in range(n):
        w = plant_g.peek()
        wbar = model_g.peek()
        y_t = Rp @ w + d[:, t]
        yhat_t = R @ wbar
        _check_divergence(y_t, scale, t)
        v_t = Gamma_y @ y_t - yhat_t
        u_t = -filt_q.step(K0 @ v_t)
        plant_g.push(u_t)
        model_g.push(u_t)
        y[:, t] = y_t
        e[:, t] = y_t - yhat_t
        u[:, t] = u_t
    meta = dict(meta or {})
    meta.setdefault("structure", "imc-single-array; gamma on measured output")
    return SimTrace(y=y, u_s=u, u_f=np.zeros((0, n)), d=d, e=e, f_s=float(f_s),
                    meta=meta)
