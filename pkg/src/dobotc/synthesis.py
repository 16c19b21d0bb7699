"""Tracking gain, disturbance observer and output-channel compensation gain.

The tracking controller is ``u_c = -Kx x - Kv v``.  The feedback block comes
from the plant-size Riccati equation weighted by ``C_o^T Q_e C_o``; the
exosystem block from the Sylvester equation

    (A - B_u Kx)^T P12 + P12 G = C_o^T Q_e H,   Kv = R^-1 B_u^T P12.

The full augmented Riccati equation is never solved: with a constant
reference (G = 0) the exosystem modes are uncontrollable and it has no
stabilizing solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dobotc.errors import (
    CompensationError,
    DimensionError,
    NumericalError,
    ObserverDesignError,
    ParameterError,
    SynthesisError,
)
from dobotc.matrixlab import (
    Spectrum,
    as_matrix,
    care_residual,
    eigenvalues,
    pinv,
    solve_care,
    solve_sylvester,
)
from dobotc.plantmodel import LtiPlant, ReferenceGen

DECOUPLING_TOL = 1e-8
FEEDFORWARD_MODES = ("dc", "lq")


@dataclass(frozen=True, eq=False)
class TrackingGain:
    """State-feedback plus exosystem-feedforward gain.

    ``Kx``/``Kv`` are full-size (``m`` rows); rows of inputs excluded by
    ``input_channels`` are zero.  ``Kv_lq`` is the raw ``R^-1 B_u^T P12``
    block.  With ``feedforward="dc"``, ``Kv`` is the ``R^-1``-weighted
    minimum-norm block giving unit DC gain from ``y_d`` to ``y_o``; for a
    scalar constant reference this is ``Kv_lq`` rescaled.
    """

    Kx: np.ndarray
    Kv: np.ndarray
    P11: np.ndarray
    P12: np.ndarray
    Kv_lq: np.ndarray
    Q_e: float
    R: np.ndarray
    input_channels: tuple
    feedforward: str
    are_residual: float
    closed_loop: Spectrum

    @property
    def u_bar_c(self) -> np.ndarray:
        """Feedback matrix with ``u_c = u_bar_c x`` for the state part."""
        return -self.Kx

    def control(self, x, v) -> np.ndarray:
        return -self.Kx @ x - self.Kv @ v


@dataclass(frozen=True, eq=False)
class ObserverDesign:
    L: np.ndarray
    err_dyn: np.ndarray
    spectrum: Spectrum


@dataclass(frozen=True, eq=False)
class CompensatorGain:
    u_d: np.ndarray
    residual_row: np.ndarray
    channels: tuple

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual_row))


def _weight_matrix(R, m: int) -> np.ndarray:
    R = np.array(R, dtype=float)
    if R.ndim == 0:
        R = float(R) * np.eye(m)
    R = as_matrix(R, "R", square=True)
    if R.shape != (m, m):
        raise DimensionError(f"R must be a scalar or {m}x{m}, got {R.shape}")
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(R).max())):
        raise ParameterError("R must be symmetric")
    if np.min(np.linalg.eigvalsh(R)) <= 0.0:
        raise ParameterError("R must be positive definite")
    return R


def _channels(channels, m: int, what: str) -> list:
    if channels is None:
        return list(range(m))
    channels = sorted(set(int(c) for c in channels))
    if not channels or channels[0] < 0 or channels[-1] >= m:
        raise DimensionError(f"{what} {channels} out of range for {m} inputs")
    return channels


def lqr_tracking_gain(
    plant: LtiPlant,
    ref: ReferenceGen,
    Q_e,
    R,
    *,
    input_channels=None,
    feedforward: str = "dc",
) -> TrackingGain:
    """Optimal output-tracking gain for ``plant`` following ``ref``.

    ``R`` is a scalar (meaning ``R * I``) or an ``m x m`` positive-definite
    matrix.  ``input_channels`` (0-based) restricts actuation to a subset of
    inputs; the matching principal submatrix of ``R`` is used.
    """
    if feedforward not in FEEDFORWARD_MODES:
        raise ParameterError(f"feedforward must be one of {FEEDFORWARD_MODES}")
    try:
        Q_e = float(Q_e)
        if not np.isfinite(Q_e) or Q_e <= 0.0:
            raise ParameterError(f"Q_e must be a positive scalar, got {Q_e}")
        R_full = _weight_matrix(R, plant.m)
        ch = _channels(input_channels, plant.m, "input channels")
    except (ParameterError, DimensionError) as exc:
        raise SynthesisError(str(exc), step=1) from exc
    if ref.H.shape[0] != plant.C_o.shape[0]:
        raise SynthesisError("reference and plant outputs differ in dimension", step=1)

    A, C, H, G = plant.A, plant.C_o, ref.H, ref.G
    B = plant.B_u[:, ch]
    Rs = R_full[np.ix_(ch, ch)]
    Qx = Q_e * C.T @ C
    try:
        P11 = solve_care(A, B, Qx, Rs)
    except NumericalError as exc:
        raise SynthesisError(f"baseline Riccati design failed: {exc}", step=2) from exc
    Kx_s = np.linalg.solve(Rs, B.T @ P11)
    A_cl = A - B @ Kx_s
    try:
        P12 = solve_sylvester(A_cl.T, G, Q_e * C.T @ H)
    except NumericalError as exc:
        raise SynthesisError(f"feedforward Sylvester equation failed: {exc}", step=2) from exc
    Kv_lq_s = np.linalg.solve(Rs, B.T @ P12)

    if feedforward == "dc":
        w = C @ np.linalg.solve(A_cl, B)
        Rinv_wT = np.linalg.solve(Rs, w.T)
        denom = (w @ Rinv_wT).item()
        if abs(denom) < 1e-12:
            raise SynthesisError("output has zero DC gain from the actuated inputs", step=2)
        # steady state x = A_cl^-1 B Kv v, so C x = H v needs w Kv = H
        Kv_s = Rinv_wT @ H / denom
    else:
        Kv_s = Kv_lq_s

    m = plant.m
    Kx = np.zeros((m, plant.n))
    Kv = np.zeros((m, ref.p))
    Kv_lq = np.zeros((m, ref.p))
    Kx[ch] = Kx_s
    Kv[ch] = Kv_s
    Kv_lq[ch] = Kv_lq_s
    spectrum = eigenvalues(A - plant.B_u @ Kx)
    if not spectrum.is_hurwitz():
        raise SynthesisError("closed loop A - B_u Kx is not Hurwitz", step=2)
    return TrackingGain(
        Kx=Kx,
        Kv=Kv,
        P11=P11,
        P12=P12,
        Kv_lq=Kv_lq,
        Q_e=Q_e,
        R=R_full,
        input_channels=tuple(ch),
        feedforward=feedforward,
        are_residual=care_residual(A, B, Qx, Rs, P11),
        closed_loop=spectrum,
    )


def design_observer(plant: LtiPlant, L) -> ObserverDesign:
    """Accept ``L`` iff the estimation-error matrix ``-L B_d`` is Hurwitz."""
    try:
        L = as_matrix(L, "L")
    except (DimensionError, NumericalError) as exc:
        raise ObserverDesignError(str(exc), step=3) from exc
    if L.shape != (plant.q, plant.n):
        raise ObserverDesignError(
            f"observer gain must be {plant.q}x{plant.n}, got {L.shape}", step=3
        )
    err_dyn = -L @ plant.B_d
    spectrum = eigenvalues(err_dyn)
    if not spectrum.is_hurwitz():
        raise ObserverDesignError(
            f"estimation error dynamics -L B_d are not Hurwitz; spectrum {spectrum.to_list()}",
            step=6,
        )
    return ObserverDesign(L=L, err_dyn=err_dyn, spectrum=spectrum)


def compensator_gain(plant: LtiPlant, gain: TrackingGain, *, channels=None) -> CompensatorGain:
    """Gain ``u_d`` removing the DC effect of ``w`` on the output.

    ``u_d = -(C_o S B_u)^+ C_o S B_d`` with ``S = (A - B_u Kx)^-1``.
    ``channels`` (0-based) restricts compensation to a subset of inputs;
    rows of other inputs are zero.
    """
    try:
        ch = _channels(channels, plant.m, "compensation channels")
    except DimensionError as exc:
        raise CompensationError(str(exc), step=5) from exc
    A_cl = plant.A + plant.B_u @ gain.u_bar_c
    try:
        S_Bu = np.linalg.solve(A_cl, plant.B_u)
        S_Bd = np.linalg.solve(A_cl, plant.B_d)
    except np.linalg.LinAlgError as exc:
        raise CompensationError(f"closed-loop matrix is singular: {exc}", step=5) from exc
    row_u = plant.C_o @ S_Bu[:, ch]
    row_d = plant.C_o @ S_Bd
    if np.linalg.norm(row_u) < 1e-12:
        raise CompensationError(
            "output-uncontrollable compensation: no selected input moves the output at DC",
            step=5,
        )
    u_d = np.zeros((plant.m, plant.q))
    u_d[ch] = -pinv(row_u) @ row_d
    residual_row = plant.C_o @ np.linalg.solve(A_cl, plant.B_d + plant.B_u @ u_d)
    if np.linalg.norm(residual_row) > DECOUPLING_TOL:
        raise CompensationError(
            f"output-rejection certificate failed: |residual| = {np.linalg.norm(residual_row):.3e}",
            step=5,
        )
    return CompensatorGain(u_d=u_d, residual_row=residual_row, channels=tuple(ch))
