"""Goodness-of-fit of a state-space model against measured input/output data."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.linalg import expm

from dobotc.errors import DataError, DimensionError
from dobotc.plantmodel import LtiPlant


def fit_percent(y, y_hat) -> float:
    """NRMSE fit: ``100 * (1 - |y - y_hat| / |y - mean(y)|)``."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise DimensionError("y and y_hat differ in length")
    spread = np.linalg.norm(y - y.mean())
    if spread == 0.0:
        raise DataError("measured output is constant; fit is undefined")
    return float(100.0 * (1.0 - np.linalg.norm(y - y_hat) / spread))


def simulate_zoh(plant: LtiPlant, t, U, x0=None) -> np.ndarray:
    """Open-loop output for inputs held constant between samples.

    Each interval is propagated exactly with the matrix exponential of
    ``[[A, B], [0, 0]]``, so uneven sample spacing is allowed.
    """
    t = np.asarray(t, dtype=float)
    U = np.asarray(U, dtype=float).reshape(t.size, -1)
    n, m = plant.n, plant.m
    if U.shape[1] != m:
        raise DimensionError(f"data has {U.shape[1]} input columns, model expects {m}")
    if np.any(np.diff(t) <= 0):
        raise DataError("time column must be strictly increasing")
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = plant.A
    aug[:n, n:] = plant.B_u
    cache = {}
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y = np.empty(t.size)
    for k in range(t.size):
        y[k] = plant.C_o[0] @ x
        if k + 1 == t.size:
            break
        h = t[k + 1] - t[k]
        if h not in cache:
            E = expm(aug * h)
            cache[h] = (E[:n, :n], E[:n, n:])
        Ad, Bd = cache[h]
        x = Ad @ x + Bd @ U[k]
    return y


def read_io_csv(path, m: int):
    """Read ``t,u1..um,y`` columns; returns ``(t, U, y)``."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in lines[0].split(",")]
    expected = ["t"] + [f"u{i + 1}" for i in range(m)] + ["y"]
    if header != expected:
        raise DataError(f"expected columns {','.join(expected)}, got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if line.strip()])
    except ValueError as exc:
        raise DataError(f"non-numeric entry in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != m + 2:
        raise DataError(f"{path} needs at least two complete rows")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise DataError("time column must be strictly increasing")
    return t, data[:, 1:1 + m], data[:, -1]


def write_io_csv(path, t, U, y) -> None:
    U = np.asarray(U, dtype=float).reshape(len(t), -1)
    header = ",".join(["t"] + [f"u{i + 1}" for i in range(U.shape[1])] + ["y"])
    rows = np.column_stack([t, U, y])
    lines = [header] + [",".join("%.17g" % v for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def synthetic_dataset(plant: LtiPlant, *, samples=200, dt=0.01, hold=10, seed=0, noise_ratio=0.0):
    """Random piecewise-constant inputs and the model's ZOH response.

    With ``noise_ratio > 0`` a zero-mean perturbation orthogonal to the
    centred clean output is added, scaled so that
    ``|noise| = noise_ratio * |y_clean - mean(y_clean)|``.  The fit of the
    model on such data is then exactly
    ``100 * (1 - r / sqrt(1 + r^2))``.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(samples) * dt
    levels = rng.uniform(-1.0, 1.0, size=(-(-samples // hold), plant.m))
    U = np.repeat(levels, hold, axis=0)[:samples]
    y_clean = simulate_zoh(plant, t, U)
    if noise_ratio == 0.0:
        return t, U, y_clean
    yc = y_clean - y_clean.mean()
    noise = rng.standard_normal(samples)
    noise -= noise.mean()
    noise -= (noise @ yc) / (yc @ yc) * yc
    noise *= noise_ratio * np.linalg.norm(yc) / np.linalg.norm(noise)
    return t, U, y_clean + noise


def expected_fit(noise_ratio: float) -> float:
    r = float(noise_ratio)
    return 100.0 * (1.0 - r / np.sqrt(1.0 + r * r))


def model_fit(plant: LtiPlant, t, U, y) -> float:
    return fit_percent(y, simulate_zoh(plant, t, U))
