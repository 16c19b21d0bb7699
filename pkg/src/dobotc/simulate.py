"""Fixed-step closed-loop simulation and run metrics.

The interconnection of plant, exosystem, disturbance observer and composite
controller is linear, so it is assembled once into

    s' = M s + N w(t),   s = [x; v; z],

and integrated with classical RK4.  The observer rows of ``N`` are zero: the
observer only sees the measured state and the applied input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dobotc.errors import DimensionError, DivergenceError, IntegrationError, ParameterError
from dobotc.plantmodel import LtiPlant, ReferenceGen
from dobotc.synthesis import CompensatorGain, ObserverDesign, TrackingGain

DIVERGENCE_LIMIT = 1e12
TAIL_FRACTION = 0.2
SETTLING_BAND = 0.02
MAX_STEPS = 10**8


# -- disturbance signals ------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    offset: float

    def __call__(self, t):
        return self.offset + 0.0 * np.asarray(t, dtype=float)

    def to_dict(self):
        return {"type": "constant", "offset": self.offset}


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(frequency * t + phase)``; frequency in rad/s."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.sin(self.frequency * np.asarray(t, dtype=float) + self.phase)

    def to_dict(self):
        return {
            "type": "sinusoid",
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class Step:
    level: float
    start: float

    def __call__(self, t):
        return np.where(np.asarray(t, dtype=float) >= self.start, self.level, 0.0)

    def to_dict(self):
        return {"type": "step", "level": self.level, "start": self.start}


TERM_TYPES = {"constant": Constant, "sinusoid": Sinusoid, "step": Step}


def term_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in TERM_TYPES:
        raise ParameterError(f"unknown disturbance term type {kind!r}")
    try:
        term = TERM_TYPES[kind](**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ParameterError(f"bad fields for {kind} term: {exc}") from exc
    for value in vars(term).values():
        if not math.isfinite(value):
            raise ParameterError(f"{kind} term has a non-finite field")
    return term


@dataclass(frozen=True)
class DisturbanceSignal:
    """Per-channel sums of constant, sinusoid and step terms."""

    channels: tuple

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(tuple(ch) for ch in self.channels))

    @property
    def q(self) -> int:
        return len(self.channels)

    @classmethod
    def zero(cls, q: int) -> "DisturbanceSignal":
        return cls(tuple(() for _ in range(q)))

    @classmethod
    def on_channel(cls, q: int, channel: int, *terms) -> "DisturbanceSignal":
        chans = [() for _ in range(q)]
        chans[channel] = tuple(terms)
        return cls(tuple(chans))

    @classmethod
    def from_list(cls, data) -> "DisturbanceSignal":
        return cls(tuple(tuple(term_from_dict(t) for t in ch) for ch in data))

    def to_list(self) -> list:
        return [[t.to_dict() for t in ch] for ch in self.channels]

    def scaled(self, factor: float) -> "DisturbanceSignal":
        def scale(term):
            if isinstance(term, Constant):
                return Constant(term.offset * factor)
            if isinstance(term, Sinusoid):
                return Sinusoid(term.amplitude * factor, term.frequency, term.phase)
            return Step(term.level * factor, term.start)

        return DisturbanceSignal(tuple(tuple(scale(t) for t in ch) for ch in self.channels))

    def max_frequency(self) -> float:
        freqs = [abs(t.frequency) for ch in self.channels for t in ch if isinstance(t, Sinusoid)]
        return max(freqs, default=0.0)

    def bound(self) -> float:
        """Upper bound on ``|w(t)|_2`` over all t."""
        per_channel = []
        for ch in self.channels:
            total = 0.0
            for t in ch:
                if isinstance(t, Constant):
                    total += abs(t.offset)
                elif isinstance(t, Sinusoid):
                    total += abs(t.amplitude)
                else:
                    total += abs(t.level)
            per_channel.append(total)
        return float(np.linalg.norm(per_channel))


def evaluate_disturbance(dist: DisturbanceSignal, t) -> np.ndarray:
    """Disturbance vector at time ``t``.

    A scalar ``t`` gives shape ``(q,)``; an array of times gives ``(len(t), q)``.
    """
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros(t_arr.shape + (dist.q,))
    for j, channel in enumerate(dist.channels):
        for term in channel:
            out[..., j] += term(t_arr)
    return out


# -- configuration and results ------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    t_end: float = 20.0
    dt: float = 1e-3
    x0: tuple = None
    observer_enabled: bool = True
    compensator_enabled: bool = True
    z0: tuple = None  # None: zero-estimate policy, z(0) = -L x(0)

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and math.isfinite(self.dt)):
            raise ParameterError("t_end and dt must be finite")
        if not 0.0 < self.dt <= self.t_end:
            raise ParameterError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.t_end / self.dt > MAX_STEPS:
            raise ParameterError(f"t_end/dt exceeds {MAX_STEPS} steps")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.z0 is not None:
            object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    u: np.ndarray
    u_c: np.ndarray
    y: np.ndarray
    y_d: np.ndarray
    e: np.ndarray
    w: np.ndarray
    w_hat: np.ndarray
    e0: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def columns(self):
        """``(name, values)`` pairs in trajectory CSV column order."""
        cols = [("t", self.t)]
        for prefix, arr in (("x", self.x), ("v", self.v), ("u", self.u), ("uc", self.u_c)):
            cols += [(f"{prefix}{i + 1}", arr[:, i]) for i in range(arr.shape[1])]
        cols += [("y", self.y), ("yd", self.y_d), ("e", self.e)]
        for prefix, arr in (("w", self.w), ("what", self.w_hat), ("e0", self.e0)):
            cols += [(f"{prefix}{i + 1}", arr[:, i]) for i in range(arr.shape[1])]
        return cols


@dataclass(frozen=True)
class Metrics:
    cost_J: float
    rms_error: float
    tail_amplitude: float
    observer_tail: float
    settling_time: float = None  # None means not settled

    def to_dict(self) -> dict:
        d = dict(vars(self))
        if self.settling_time is None:
            d["settling_time"] = "not settled"
        return d


# -- integration --------------------------------------------------------------

def rk4_step(f, t: float, s: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``s' = f(t, s)``."""
    if not h > 0.0:
        raise ParameterError(f"step size must be positive, got {h}")
    k1 = f(t, s)
    k2 = f(t + 0.5 * h, s + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, s + 0.5 * h * k2)
    k4 = f(t + h, s + h * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationError(f"non-finite derivative near t={t!r}")
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class _LoopMatrices:
    M: np.ndarray
    N: np.ndarray
    Fx: np.ndarray  # u = Fx x + Fv v + Fz z
    Fv: np.ndarray
    Fz: np.ndarray
    L: np.ndarray
    U_d: np.ndarray
    n: int
    p: int
    nz: int


def _loop_matrices(plant, ref, gain, obs, comp, use_observer, use_comp) -> _LoopMatrices:
    n, p, q, m = plant.n, ref.p, plant.q, plant.m
    A, B, Bd = plant.A, plant.B_u, plant.B_d
    nz = q if use_observer else 0
    L = obs.L if use_observer else np.zeros((q, n))
    U_d = comp.u_d if use_comp else np.zeros((m, q))

    Fx = -gain.Kx + U_d @ L
    Fv = -gain.Kv
    Fz = U_d[:, :nz] if use_observer else np.zeros((m, 0))

    dim = n + p + nz
    M = np.zeros((dim, dim))
    N = np.zeros((dim, q))
    xs, vs, zs = slice(0, n), slice(n, n + p), slice(n + p, dim)
    # plant: x' = A x + B u + Bd w
    M[xs, xs] = A + B @ Fx
    M[xs, vs] = B @ Fv
    M[xs, zs] = B @ Fz
    N[xs] = Bd
    # exosystem: v' = G v
    M[vs, vs] = ref.G
    if use_observer:
        # z' = -L Bd z - L (Bd L x + A x + B u)
        M[zs, xs] = -L @ (Bd @ L + A + B @ Fx)
        M[zs, vs] = -L @ B @ Fv
        M[zs, zs] = -L @ Bd - L @ B @ Fz
    return _LoopMatrices(M, N, Fx, Fv, Fz, L, U_d, n, p, nz)


def simulate_closed_loop(
    plant: LtiPlant,
    ref: ReferenceGen,
    gain: TrackingGain,
    obs: ObserverDesign = None,
    comp: CompensatorGain = None,
    dist: DisturbanceSignal = None,
    cfg: SimConfig = None,
) -> Trajectory:
    """Integrate the closed loop on a uniform grid and record every signal.

    The control law is ``u = -Kx x - Kv v + u_d w_hat`` with
    ``w_hat = z + L x``.  With the observer disabled, ``w_hat`` is recorded as
    zero; the compensation term is only active when both the observer and
    the compensator are enabled.
    """
    cfg = cfg or SimConfig()
    dist = dist or DisturbanceSignal.zero(plant.q)
    if dist.q != plant.q:
        raise DimensionError(f"disturbance has {dist.q} channels, plant expects {plant.q}")
    if gain.Kx.shape != (plant.m, plant.n) or gain.Kv.shape != (plant.m, ref.p):
        raise DimensionError("tracking gain does not match plant/reference dimensions")
    use_observer = obs is not None and cfg.observer_enabled
    use_comp = use_observer and comp is not None and cfg.compensator_enabled

    lm = _loop_matrices(plant, ref, gain, obs, comp, use_observer, use_comp)
    n, p, nz = lm.n, lm.p, lm.nz

    x0 = np.zeros(n) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionError(f"x0 must have length {n}")
    s = np.concatenate([x0, ref.v0])
    if use_observer:
        if cfg.z0 is None:
            z0 = -lm.L @ x0
        else:
            z0 = np.array(cfg.z0, dtype=float)
            if z0.shape != (nz,):
                raise DimensionError(f"z0 must have length {nz}")
        s = np.concatenate([s, z0])

    M, N = lm.M, lm.N
    disturbed = any(dist.channels)

    if disturbed:
        def f(t, s):
            return M @ s + N @ evaluate_disturbance(dist, t)
    else:
        def f(t, s):
            return M @ s

    steps = cfg.steps
    h = cfg.dt
    states = np.empty((steps + 1, s.size))
    states[0] = s
    for k in range(steps):
        s = rk4_step(f, k * h, s, h)
        if math.sqrt(float(s @ s)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_LIMIT:g} at t={(k + 1) * h:.6g}")
        states[k + 1] = s

    t = np.arange(steps + 1) * h
    x = states[:, :n]
    v = states[:, n:n + p]
    w = evaluate_disturbance(dist, t)
    if use_observer:
        w_hat = states[:, n + p:] + x @ lm.L.T
    else:
        w_hat = np.zeros_like(w)
    u_c = -(x @ gain.Kx.T) - v @ gain.Kv.T
    u = u_c + w_hat @ lm.U_d.T
    y = x @ plant.C_o[0]
    y_d = v @ ref.H[0]
    return Trajectory(
        t=t, x=x, v=v, u=u, u_c=u_c, y=y, y_d=y_d, e=y - y_d, w=w, w_hat=w_hat, e0=w - w_hat
    )


# -- metrics -------------------------------------------------------------------

def cost_J(traj: Trajectory, Q_e, R) -> float:
    """Trapezoidal integral of ``Q_e e^2 + u_c^T R u_c`` over the run.

    Only the baseline input ``u_c`` is costed, not the compensation term.
    """
    m = traj.u_c.shape[1]
    R = np.array(R, dtype=float)
    if R.ndim == 0:
        R = float(R) * np.eye(m)
    integrand = float(Q_e) * traj.e**2 + np.einsum("ki,ij,kj->k", traj.u_c, R, traj.u_c)
    return float(np.trapezoid(integrand, traj.t))


def _tail_mask(t: np.ndarray) -> np.ndarray:
    t_end = t[-1]
    return t >= t[0] + (1.0 - TAIL_FRACTION) * (t_end - t[0])


def settling_time(t: np.ndarray, e: np.ndarray, y_d: np.ndarray):
    """First time after which ``|e|`` stays inside 2% of ``|y_d|``.

    For a zero setpoint the band is 2% of the peak ``|e|``.  Returns None
    when the final sample is outside the band.
    """
    ref = float(np.max(np.abs(y_d)))
    band = SETTLING_BAND * (ref if ref > 0.0 else float(np.max(np.abs(e))))
    outside = np.nonzero(np.abs(e) > band)[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last == t.size - 1:
        return None
    return float(t[last + 1])


def metrics(traj: Trajectory, Q_e, R) -> Metrics:
    if traj.t.size == 0:
        raise ParameterError("empty trajectory")
    tail = _tail_mask(traj.t)
    return Metrics(
        cost_J=cost_J(traj, Q_e, R),
        rms_error=float(np.sqrt(np.mean(traj.e**2))),
        tail_amplitude=float(np.max(np.abs(traj.e[tail]))),
        observer_tail=float(np.max(np.linalg.norm(traj.e0[tail], axis=1), initial=0.0)),
        settling_time=settling_time(traj.t, traj.e, traj.y_d),
    )
