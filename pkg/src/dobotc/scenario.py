"""Scenario configuration, synthesis pipeline, reports and trajectory CSV I/O.

A scenario file is YAML (JSON is accepted too, being a subset).  Matrices are
row-major nested lists and channel indices are 1-based, matching the CSV
column names.  Unknown keys are errors.

    plant:        {preset: wafer}  or  {A, B_u, C_o, [B_d]}
                  optional: B_d (override), disturbance_channels: [1]
    reference:    {y_d: 166.3}  or  {G, H, v0}
    weights:      {Q_e: 5, R: 5, [input_channels: [1, 2]], [feedforward: dc|lq]}
    observer:     {L: [[3, 0], [0, 3]]}  or  "off"
    compensator:  {enabled: true, [channels: [2]]}
    disturbance:  per-channel lists of terms, e.g.
                  [[{type: sinusoid, amplitude: 0.1, frequency: 1.0}], []]
    sim:          {t_end: 20, dt: 0.001, [x0: [0, 0]], [z0: zero | [..]]}
    seed:         0
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from dobotc import __version__
from dobotc.errors import (
    ConfigError,
    DataError,
    DimensionError,
    NumericalError,
    ObserverDesignError,
    ParameterError,
    SynthesisError,
)
from dobotc.matrixlab import care_residual, eigenvalues
from dobotc.plantmodel import LtiPlant, ReferenceGen, constant_reference, wafer_plant, validate
from dobotc.simulate import (
    DisturbanceSignal,
    Metrics,
    SimConfig,
    Trajectory,
    metrics,
    simulate_closed_loop,
)
from dobotc.synthesis import (
    CompensatorGain,
    ObserverDesign,
    TrackingGain,
    compensator_gain,
    design_observer,
    lqr_tracking_gain,
)

DEFAULT_SEED = 0
SECTIONS = ("plant", "reference", "weights", "observer", "compensator", "disturbance", "sim", "seed")


# -- parsing helpers ---------------------------------------------------------------

def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}")


def _number(x, where) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where} must be a number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(f"{where} must be finite")
    return x


def _matrix(x, where) -> list:
    if not isinstance(x, list) or not x or not all(isinstance(r, list) and r for r in x):
        raise ConfigError(f"{where} must be a non-empty nested list (row-major matrix)")
    width = len(x[0])
    if any(len(r) != width for r in x):
        raise ConfigError(f"{where} has ragged rows")
    return [[_number(v, where) for v in r] for r in x]


def _vector(x, where) -> list:
    if not isinstance(x, list) or not x:
        raise ConfigError(f"{where} must be a non-empty list")
    return [_number(v, where) for v in x]


def _channels(x, where):
    if x is None:
        return None
    if not isinstance(x, list) or not x or not all(isinstance(c, int) and not isinstance(c, bool) for c in x):
        raise ConfigError(f"{where} must be a non-empty list of 1-based integers")
    if min(x) < 1:
        raise ConfigError(f"{where} indices are 1-based")
    return list(x)


# -- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    plant: dict
    reference: dict
    weights: dict
    observer: object  # dict with L, or None for "off"
    compensator: dict
    disturbance: list
    sim: dict
    seed: int = DEFAULT_SEED

    @classmethod
    def from_dict(cls, raw) -> "ScenarioConfig":
        _check_keys(raw, SECTIONS, "config")
        for key in ("plant", "reference", "weights"):
            if key not in raw:
                raise ConfigError(f"missing required section '{key}'")

        plant = raw["plant"]
        _check_keys(plant, ("preset", "A", "B_u", "B_d", "C_o", "disturbance_channels"), "plant")
        p = {}
        if "preset" in plant:
            if plant["preset"] != "wafer":
                raise ConfigError(f"unknown plant preset {plant['preset']!r}")
            if any(k in plant for k in ("A", "B_u", "C_o")):
                raise ConfigError("plant: give either a preset or explicit A, B_u, C_o")
            p["preset"] = "wafer"
        else:
            for k in ("A", "B_u", "C_o"):
                if k not in plant:
                    raise ConfigError(f"plant.{k} is required without a preset")
                p[k] = _matrix(plant[k], f"plant.{k}")
        if "B_d" in plant:
            p["B_d"] = _matrix(plant["B_d"], "plant.B_d")
        dch = _channels(plant.get("disturbance_channels"), "plant.disturbance_channels")
        if dch is not None:
            p["disturbance_channels"] = dch

        ref = raw["reference"]
        _check_keys(ref, ("y_d", "G", "H", "v0"), "reference")
        if "y_d" in ref:
            if any(k in ref for k in ("G", "H", "v0")):
                raise ConfigError("reference: give either y_d or G, H, v0")
            r = {"y_d": _number(ref["y_d"], "reference.y_d")}
        else:
            if not all(k in ref for k in ("G", "H", "v0")):
                raise ConfigError("reference needs y_d or all of G, H, v0")
            r = {
                "G": _matrix(ref["G"], "reference.G"),
                "H": _matrix(ref["H"], "reference.H"),
                "v0": _vector(ref["v0"], "reference.v0"),
            }

        w = raw["weights"]
        _check_keys(w, ("Q_e", "R", "input_channels", "feedforward"), "weights")
        if "Q_e" not in w or "R" not in w:
            raise ConfigError("weights needs Q_e and R")
        weights = {"Q_e": _number(w["Q_e"], "weights.Q_e")}
        if weights["Q_e"] <= 0:
            raise ConfigError("weights.Q_e must be positive")
        weights["R"] = _matrix(w["R"], "weights.R") if isinstance(w["R"], list) else _number(w["R"], "weights.R")
        ich = _channels(w.get("input_channels"), "weights.input_channels")
        if ich is not None:
            weights["input_channels"] = ich
        ff = w.get("feedforward", "dc")
        if ff not in ("dc", "lq"):
            raise ConfigError("weights.feedforward must be 'dc' or 'lq'")
        weights["feedforward"] = ff

        obs_raw = raw.get("observer", "off")
        if obs_raw == "off" or obs_raw is None:
            observer = None
        else:
            _check_keys(obs_raw, ("L",), "observer")
            if "L" not in obs_raw:
                raise ConfigError("observer needs L (or the string 'off')")
            observer = {"L": _matrix(obs_raw["L"], "observer.L")}

        comp_raw = raw.get("compensator", {"enabled": False})
        _check_keys(comp_raw, ("enabled", "channels"), "compensator")
        enabled = comp_raw.get("enabled", True)
        if not isinstance(enabled, bool):
            raise ConfigError("compensator.enabled must be true or false")
        compensator = {"enabled": enabled}
        cch = _channels(comp_raw.get("channels"), "compensator.channels")
        if cch is not None:
            compensator["channels"] = cch

        dist_raw = raw.get("disturbance", [])
        if not isinstance(dist_raw, list) or not all(isinstance(ch, list) for ch in dist_raw):
            raise ConfigError("disturbance must be a list of per-channel term lists")
        try:
            disturbance = DisturbanceSignal.from_list(dist_raw).to_list()
        except (ParameterError, TypeError, ValueError) as exc:
            raise ConfigError(f"disturbance: {exc}") from exc

        sim_raw = raw.get("sim", {})
        _check_keys(sim_raw, ("t_end", "dt", "x0", "z0"), "sim")
        sim = {
            "t_end": _number(sim_raw.get("t_end", 20.0), "sim.t_end"),
            "dt": _number(sim_raw.get("dt", 1e-3), "sim.dt"),
        }
        if "x0" in sim_raw:
            sim["x0"] = _vector(sim_raw["x0"], "sim.x0")
        z0 = sim_raw.get("z0", "zero")
        if z0 != "zero":
            sim["z0"] = _vector(z0, "sim.z0")

        seed = raw.get("seed", DEFAULT_SEED)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError("seed must be an integer")

        cfg = cls(p, r, weights, observer, compensator, disturbance, sim, seed)
        cfg.build_plant()
        cfg.build_reference()
        cfg.sim_config()
        cfg._check_dimensions()
        return cfg

    def to_dict(self) -> dict:
        d = {
            "plant": self.plant,
            "reference": self.reference,
            "weights": self.weights,
            "observer": "off" if self.observer is None else self.observer,
            "compensator": self.compensator,
            "disturbance": self.disturbance,
            "sim": self.sim,
            "seed": self.seed,
        }
        return json.loads(json.dumps(d))

    # -- model construction

    def build_plant(self) -> LtiPlant:
        p = self.plant
        try:
            if p.get("preset") == "wafer":
                plant = wafer_plant()
            else:
                plant = LtiPlant(p["A"], p["B_u"], None, p["C_o"])
            if "B_d" in p:
                plant = plant.with_disturbance_matrix(p["B_d"])
            if "disturbance_channels" in p:
                plant = plant.with_disturbance_channels([c - 1 for c in p["disturbance_channels"]])
        except (DimensionError, NumericalError) as exc:
            raise ConfigError(f"plant: {exc}") from exc
        return plant

    def build_reference(self) -> ReferenceGen:
        r = self.reference
        try:
            if "y_d" in r:
                return constant_reference(r["y_d"])
            return ReferenceGen(r["G"], r["H"], r["v0"])
        except (DimensionError, ParameterError, NumericalError) as exc:
            raise ConfigError(f"reference: {exc}") from exc

    def disturbance_signal(self) -> DisturbanceSignal:
        if not self.disturbance:
            return DisturbanceSignal.zero(self.build_plant().q)
        return DisturbanceSignal.from_list(self.disturbance)

    def sim_config(self, **overrides) -> SimConfig:
        s = self.sim
        try:
            cfg = SimConfig(
                t_end=s["t_end"],
                dt=s["dt"],
                x0=s.get("x0"),
                observer_enabled=self.observer is not None,
                compensator_enabled=self.compensator["enabled"],
                z0=s.get("z0"),
            )
            return replace(cfg, **overrides) if overrides else cfg
        except ParameterError as exc:
            raise ConfigError(f"sim: {exc}") from exc

    def _check_dimensions(self):
        plant = self.build_plant()
        if self.disturbance and len(self.disturbance) != plant.q:
            raise ConfigError(f"disturbance lists {len(self.disturbance)} channels, plant has q={plant.q}")
        if "x0" in self.sim and len(self.sim["x0"]) != plant.n:
            raise ConfigError(f"sim.x0 must have length {plant.n}")
        if "z0" in self.sim and len(self.sim["z0"]) != plant.q:
            raise ConfigError(f"sim.z0 must have length {plant.q}")
        R = self.weights["R"]
        if isinstance(R, list) and (len(R) != plant.m or len(R[0]) != plant.m):
            raise ConfigError(f"weights.R must be a scalar or {plant.m}x{plant.m}")
        for key, where in ((self.weights.get("input_channels"), "weights.input_channels"),
                           (self.compensator.get("channels"), "compensator.channels")):
            if key is not None and max(key) > plant.m:
                raise ConfigError(f"{where} exceeds the {plant.m} plant inputs")


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return ScenarioConfig.from_dict(raw)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# -- synthesis pipeline ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Synthesis:
    plant: LtiPlant
    ref: ReferenceGen
    gain: TrackingGain
    observer: ObserverDesign
    compensator: CompensatorGain
    dist: DisturbanceSignal
    assumptions: dict


def synthesize(cfg: ScenarioConfig) -> Synthesis:
    """Run the design procedure; errors carry the failing step number."""
    # step 1: system parameters
    plant = cfg.build_plant()
    ref = cfg.build_reference()
    dist = cfg.disturbance_signal()

    # step 2: baseline tracking controller
    w = cfg.weights
    ich = w.get("input_channels")
    try:
        gain = lqr_tracking_gain(
            plant,
            ref,
            w["Q_e"],
            np.array(w["R"], dtype=float),
            input_channels=None if ich is None else [c - 1 for c in ich],
            feedforward=w["feedforward"],
        )
    except SynthesisError:
        raise
    except Exception as exc:
        raise SynthesisError(str(exc), step=2) from exc

    # step 3: disturbance observer structure
    L = None
    if cfg.observer is not None:
        L = np.array(cfg.observer["L"], dtype=float)
        if L.shape != (plant.q, plant.n):
            raise ObserverDesignError(f"observer gain must be {plant.q}x{plant.n}, got {L.shape}", step=3)

    # step 4: assumptions on the disturbance (bounded; slow relative to the observer)
    bound = dist.bound()
    if not math.isfinite(bound):
        raise SynthesisError("disturbance is not bounded", step=4)
    assumptions = {"disturbance_bound": bound, "max_disturbance_frequency": dist.max_frequency()}
    if L is not None:
        slowest = -eigenvalues(-L @ plant.B_d).max_real
        assumptions["observer_slowest_rate"] = slowest
        assumptions["slow_variation_ratio"] = (
            dist.max_frequency() / slowest if slowest > 0 else math.inf
        )

    # step 5: compensation gain
    comp = None
    if cfg.compensator["enabled"]:
        cch = cfg.compensator.get("channels")
        comp = compensator_gain(plant, gain, channels=None if cch is None else [c - 1 for c in cch])

    # step 6: estimation-error stability
    observer = design_observer(plant, L) if L is not None else None
    return Synthesis(plant, ref, gain, observer, comp, dist, assumptions)


def run_simulation(cfg: ScenarioConfig, synth: Synthesis, **overrides) -> Trajectory:
    return simulate_closed_loop(
        synth.plant,
        synth.ref,
        synth.gain,
        synth.observer,
        synth.compensator,
        synth.dist,
        cfg.sim_config(**overrides),
    )


def run_metrics(synth: Synthesis, traj: Trajectory) -> Metrics:
    return metrics(traj, synth.gain.Q_e, synth.gain.R)


# -- reports -------------------------------------------------------------------------

def certificates(synth: Synthesis) -> dict:
    """Recompute every synthesis certificate from the stored matrices."""
    plant, gain = synth.plant, synth.gain
    ch = list(gain.input_channels)
    B = plant.B_u[:, ch]
    Rs = gain.R[np.ix_(ch, ch)]
    Qx = gain.Q_e * plant.C_o.T @ plant.C_o
    are_res = care_residual(plant.A, B, Qx, Rs, gain.P11)
    are_tol = 1e-8 * (1.0 + float(np.linalg.norm(Qx)))
    cl = eigenvalues(plant.A - plant.B_u @ gain.Kx)
    out = {
        "closed_loop_spectrum": cl.to_list(),
        "closed_loop_hurwitz": cl.is_hurwitz(),
        "are_residual": are_res,
        "are_residual_ok": are_res <= are_tol,
    }
    if synth.compensator is not None:
        A_cl = plant.A - plant.B_u @ gain.Kx
        row = plant.C_o @ np.linalg.solve(A_cl, plant.B_d + plant.B_u @ synth.compensator.u_d)
        out["u_d"] = synth.compensator.u_d.tolist()
        out["decoupling_residual_norm"] = float(np.linalg.norm(row))
        out["decoupling_ok"] = out["decoupling_residual_norm"] <= 1e-8
    if synth.observer is not None:
        spec = eigenvalues(-synth.observer.L @ plant.B_d)
        out["observer_spectrum"] = spec.to_list()
        out["observer_hurwitz"] = spec.is_hurwitz()
    out["all_pass"] = all(v for k, v in out.items() if k.endswith(("_ok", "_hurwitz")))
    return out


def summary_report(cfg: ScenarioConfig, synth: Synthesis, metrics_: Metrics = None) -> dict:
    report = {
        "tool": "dobotc",
        "version": __version__,
        "certificates": certificates(synth),
        "gains": {
            "Kx": synth.gain.Kx.tolist(),
            "Kv": synth.gain.Kv.tolist(),
            "feedforward": synth.gain.feedforward,
        },
        "assumptions": synth.assumptions,
        "plant_diagnostics": validate(synth.plant).to_dict(),
        "config": cfg.to_dict(),
    }
    if metrics_ is not None:
        report["metrics"] = metrics_.to_dict()
    return report


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=True) + "\n")


# -- trajectory CSV ------------------------------------------------------------------

def format_number(x: float) -> str:
    return "%.17g" % x


def trajectory_csv(traj: Trajectory) -> str:
    cols = traj.columns()
    header = ",".join(name for name, _ in cols)
    data = np.column_stack([vals for _, vals in cols])
    lines = [header]
    lines += [",".join(format_number(v) for v in row) for row in data]
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_csv(traj))


def read_trajectory_csv(path) -> Trajectory:
    """Rebuild a Trajectory from a CSV written by ``write_trajectory_csv``."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])

    def group(prefix):
        idx = []
        k = 1
        while f"{prefix}{k}" in header:
            idx.append(header.index(f"{prefix}{k}"))
            k += 1
        return data[:, idx]

    col = {name: i for i, name in enumerate(header)}
    for required in ("t", "y", "yd", "e"):
        if required not in col:
            raise DataError(f"trajectory CSV lacks column {required!r}")
    return Trajectory(
        t=data[:, col["t"]],
        x=group("x"),
        v=group("v"),
        u=group("u"),
        u_c=group("uc"),
        y=data[:, col["y"]],
        y_d=data[:, col["yd"]],
        e=data[:, col["e"]],
        w=group("w"),
        w_hat=group("what"),
        e0=group("e0"),
    )


# -- variants --------------------------------------------------------------------------

DEFAULT_VARIANTS = "obs=on,comp=off;obs=on,comp=on"
_VARIANT_KEYS = {"obs": "observer", "observer": "observer", "comp": "compensator", "compensator": "compensator"}


def parse_variants(spec: str) -> list:
    """Parse ``"obs=on,comp=off;obs=on,comp=on"`` into flag dictionaries."""
    variants = []
    for chunk in (spec or "").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        flags = {"observer": True, "compensator": True}
        for item in chunk.split(","):
            key, _, value = item.strip().partition("=")
            if key.strip() not in _VARIANT_KEYS or value.strip() not in ("on", "off"):
                raise ConfigError(f"bad variant item {item!r}; use obs=on|off, comp=on|off")
            flags[_VARIANT_KEYS[key.strip()]] = value.strip() == "on"
        variants.append(flags)
    if not variants:
        raise ConfigError("variant list is empty")
    return variants


def variant_label(flags: dict) -> str:
    return f"obs={'on' if flags['observer'] else 'off'},comp={'on' if flags['compensator'] else 'off'}"


def compare(cfg: ScenarioConfig, variants: list, synth: Synthesis = None) -> list:
    """Simulate each variant and return rows of metrics.

    Every row carries ``tail_ratio``, its tail amplitude divided by that of
    the first variant.
    """
    if not variants:
        raise ConfigError("variant list is empty")
    synth = synth or synthesize(cfg)
    rows = []
    for flags in variants:
        traj = run_simulation(
            cfg,
            synth,
            observer_enabled=flags["observer"] and synth.observer is not None,
            compensator_enabled=flags["compensator"] and synth.compensator is not None,
        )
        rows.append({"variant": variant_label(flags), **run_metrics(synth, traj).to_dict()})
    base = rows[0]["tail_amplitude"]
    for row in rows:
        row["tail_ratio"] = row["tail_amplitude"] / base if base > 0 else math.nan
    return rows
