"""Plant, reference exosystem and the augmented tracking model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dobotc.errors import DimensionError, ParameterError
from dobotc.matrixlab import Spectrum, as_matrix, eigenvalues


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LtiPlant:
    """``x' = A x + B_u u + B_d w``, ``y_o = C_o x`` with a scalar output.

    ``B_d`` defaults to ``B_u`` (disturbance enters through the input
    channels).
    """

    A: np.ndarray
    B_u: np.ndarray
    B_d: np.ndarray = None
    C_o: np.ndarray = None
    input_labels: tuple = ()
    notes: tuple = ()

    def __post_init__(self):
        A = as_matrix(self.A, "A", square=True)
        B_u = as_matrix(self.B_u, "B_u")
        B_d = B_u if self.B_d is None else as_matrix(self.B_d, "B_d")
        if self.C_o is None:
            raise DimensionError("C_o is required")
        C_o = np.array(self.C_o, dtype=float)
        if C_o.ndim == 1:
            C_o = C_o.reshape(1, -1)
        C_o = as_matrix(C_o, "C_o")
        n = A.shape[0]
        if B_u.shape[0] != n:
            raise DimensionError(f"B_u must have {n} rows, got {B_u.shape}")
        if B_d.shape[0] != n:
            raise DimensionError(f"B_d must have {n} rows, got {B_d.shape}")
        if C_o.shape != (1, n):
            raise DimensionError(f"C_o must be 1x{n}, got {C_o.shape}")
        if self.input_labels and len(self.input_labels) != B_u.shape[1]:
            raise DimensionError("input_labels must name every input channel")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B_u", _frozen(B_u))
        object.__setattr__(self, "B_d", _frozen(B_d))
        object.__setattr__(self, "C_o", _frozen(C_o))
        object.__setattr__(self, "input_labels", tuple(self.input_labels))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B_u.shape[1]

    @property
    def q(self) -> int:
        return self.B_d.shape[1]

    def with_disturbance_matrix(self, B_d) -> "LtiPlant":
        return LtiPlant(self.A, self.B_u, B_d, self.C_o, self.input_labels, self.notes)

    def with_disturbance_channels(self, channels) -> "LtiPlant":
        """Keep only the listed (0-based) columns of ``B_d``."""
        channels = list(channels)
        if not channels or any(c < 0 or c >= self.q for c in channels):
            raise DimensionError(f"disturbance channels {channels} out of range for q={self.q}")
        return self.with_disturbance_matrix(self.B_d[:, channels])


@dataclass(frozen=True, eq=False)
class ReferenceGen:
    """Exosystem ``v' = G v``, ``y_d = H v``, ``v(0) = v0``."""

    G: np.ndarray
    H: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        G = as_matrix(self.G, "G", square=True)
        H = np.array(self.H, dtype=float)
        if H.ndim <= 1:
            H = H.reshape(1, -1)
        H = as_matrix(H, "H")
        v0 = np.array(self.v0, dtype=float).reshape(-1)
        p = G.shape[0]
        if H.shape != (1, p):
            raise DimensionError(f"H must be 1x{p}, got {H.shape}")
        if v0.shape != (p,):
            raise DimensionError(f"v0 must have length {p}, got {v0.shape}")
        if not np.all(np.isfinite(v0)):
            raise ParameterError("v0 must be finite")
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "v0", _frozen(v0))

    @property
    def p(self) -> int:
        return self.G.shape[0]


@dataclass(frozen=True, eq=False)
class AugmentedPlant:
    A_bar: np.ndarray
    B_u_bar: np.ndarray
    B_d_bar: np.ndarray
    Q_bar: np.ndarray


def build_weighting(C_o, H, Q_e) -> np.ndarray:
    """State weighting for the stacked state ``[x; v]``.

    Equal to ``[C_o, -H]^T Q_e [C_o, -H]``, i.e. the blocks
    ``C_o^T Q_e C_o``, ``-C_o^T Q_e H``, ``-H^T Q_e C_o``, ``H^T Q_e H``.
    """
    Q_e = float(Q_e)
    if not np.isfinite(Q_e) or Q_e <= 0.0:
        raise ParameterError(f"Q_e must be a positive scalar, got {Q_e}")
    C_o = as_matrix(np.atleast_2d(C_o), "C_o")
    H = as_matrix(np.atleast_2d(H), "H")
    if C_o.shape[0] != 1 or H.shape[0] != 1:
        raise DimensionError("C_o and H must be single rows")
    top = np.hstack([C_o.T @ C_o, -C_o.T @ H])
    bottom = np.hstack([-H.T @ C_o, H.T @ H])
    Q_bar = Q_e * np.vstack([top, bottom])
    return 0.5 * (Q_bar + Q_bar.T)


def augment(plant: LtiPlant, ref: ReferenceGen, Q_e) -> AugmentedPlant:
    n, p = plant.n, ref.p
    if plant.C_o.shape[0] != ref.H.shape[0]:
        raise DimensionError("plant output and reference output dimensions differ")
    A_bar = np.zeros((n + p, n + p))
    A_bar[:n, :n] = plant.A
    A_bar[n:, n:] = ref.G
    B_u_bar = np.vstack([plant.B_u, np.zeros((p, plant.m))])
    B_d_bar = np.vstack([plant.B_d, np.zeros((p, plant.q))])
    return AugmentedPlant(A_bar, B_u_bar, B_d_bar, build_weighting(plant.C_o, ref.H, Q_e))


def constant_reference(y_d: float) -> ReferenceGen:
    """Constant setpoint encoded as the scalar exosystem ``G=0, H=1, v0=y_d``."""
    y_d = float(y_d)
    if not np.isfinite(y_d):
        raise ParameterError("y_d must be finite")
    return ReferenceGen(G=[[0.0]], H=[[1.0]], v0=[y_d])


WAFER_A = ((3.127, 1.567), (0.2803, 0.258))
WAFER_B_U = ((6.921, 0.6338), (1.064, 0.1407))
WAFER_C_O = ((-8.083, 5.864),)
WAFER_Y_D = 166.3
WAFER_Y_5UM = 167.2

CHANNEL_NOTE = (
    "input 2 is documented both as the coating gap and as the substrate "
    "velocity; the label 'gap/velocity' keeps that ambiguity visible"
)


def wafer_plant(B_d=None) -> LtiPlant:
    """Identified second-order slot-die model (output in mean-grey units).

    Input 1 is the pump rate, input 2 the gap (or substrate velocity, see
    ``notes``).  ``B_d`` defaults to ``B_u``.
    """
    return LtiPlant(
        A=WAFER_A,
        B_u=WAFER_B_U,
        B_d=B_d,
        C_o=WAFER_C_O,
        input_labels=("pump rate", "gap/velocity"),
        notes=(CHANNEL_NOTE,),
    )


@dataclass(frozen=True)
class PlantDiagnostics:
    controllability_rank: int
    observability_rank: int
    n: int
    open_loop: Spectrum
    notes: tuple = field(default_factory=tuple)

    @property
    def controllable(self) -> bool:
        return self.controllability_rank == self.n

    @property
    def observable(self) -> bool:
        return self.observability_rank == self.n

    def to_dict(self) -> dict:
        return {
            "controllability_rank": self.controllability_rank,
            "observability_rank": self.observability_rank,
            "controllable": self.controllable,
            "observable": self.observable,
            "open_loop_spectrum": self.open_loop.to_list(),
            "open_loop_stable": self.open_loop.is_hurwitz(),
            "notes": list(self.notes),
        }


def validate(plant: LtiPlant) -> PlantDiagnostics:
    A, B, C = plant.A, plant.B_u, plant.C_o
    n = plant.n
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
    obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
    notes = list(plant.notes)
    spec = eigenvalues(A)
    rc = int(np.linalg.matrix_rank(ctrb)) if np.any(ctrb) else 0
    ro = int(np.linalg.matrix_rank(obsv)) if np.any(obsv) else 0
    if rc < n:
        notes.append(f"(A, B_u) is not controllable (rank {rc} < {n})")
    if ro < n:
        notes.append(f"(A, C_o) is not observable (rank {ro} < {n})")
    if not spec.is_hurwitz():
        notes.append("open-loop plant is unstable")
    return PlantDiagnostics(rc, ro, n, spec, tuple(notes))
