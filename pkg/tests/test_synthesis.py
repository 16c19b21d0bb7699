import math

import numpy as np
import pytest
from scipy.linalg import expm

from dobotc import (
    DisturbanceSignal,
    LtiPlant,
    SimConfig,
    compensator_gain,
    constant_reference,
    design_observer,
    lqr_tracking_gain,
    wafer_plant,
    simulate_closed_loop,
)
from dobotc.errors import CompensationError, ObserverDesignError, SynthesisError
from dobotc.matrixlab import care_residual, eigenvalues
from dobotc.simulate import Constant

from conftest import WEIGHT_SETS


def scalar_plant():
    return LtiPlant([[-1.0]], [[1.0]], None, [[1.0]])


def test_scalar_chain_by_hand():
    # P11: -2P - P^2 + 1 = 0; Kx = P11; A_cl = -1 - Kx = -sqrt(2)
    # P12: A_cl * P12 = Q_e * C * H = 1  ->  P12 = -1/sqrt(2)
    gain = lqr_tracking_gain(scalar_plant(), constant_reference(1.0), 1.0, 1.0, feedforward="lq")
    s2 = math.sqrt(2.0)
    assert gain.P11[0, 0] == pytest.approx(s2 - 1, abs=1e-12)
    assert gain.Kx[0, 0] == pytest.approx(s2 - 1, abs=1e-12)
    assert gain.P12[0, 0] == pytest.approx(-1 / s2, abs=1e-12)
    assert gain.Kv[0, 0] == pytest.approx(-1 / s2, abs=1e-12)
    # unit DC gain needs w Kv = 1 with w = C A_cl^-1 B = -1/sqrt(2)
    dc = lqr_tracking_gain(scalar_plant(), constant_reference(1.0), 1.0, 1.0)
    assert dc.Kv[0, 0] == pytest.approx(-s2, abs=1e-12)
    assert dc.Kv_lq[0, 0] == pytest.approx(-1 / s2, abs=1e-12)


@pytest.mark.parametrize("Q_e,r", WEIGHT_SETS + [(2.0, 1.0)])
def test_wafer_gain_invariants(plant, ref, Q_e, r):
    gain = lqr_tracking_gain(plant, ref, Q_e, r)
    R = r * np.eye(2)
    Qx = Q_e * plant.C_o.T @ plant.C_o
    assert care_residual(plant.A, plant.B_u, Qx, R, gain.P11) <= 1e-8 * (1 + np.linalg.norm(Qx))
    assert gain.closed_loop.max_real < 0
    np.testing.assert_allclose(gain.Kx, np.linalg.solve(R, plant.B_u.T @ gain.P11), atol=1e-10)
    np.testing.assert_allclose(gain.Kv_lq, np.linalg.solve(R, plant.B_u.T @ gain.P12), atol=1e-10)
    A_cl = plant.A - plant.B_u @ gain.Kx
    resid = A_cl.T @ gain.P12 + gain.P12 @ ref.G - Q_e * plant.C_o.T @ ref.H
    assert np.linalg.norm(resid) <= 1e-10 * (1 + np.linalg.norm(Qx))
    # dc feedforward: unit static gain from y_d to y_o
    w = plant.C_o @ np.linalg.solve(A_cl, plant.B_u)
    np.testing.assert_allclose(w @ gain.Kv, ref.H, atol=1e-12)


def test_lq_feedforward_has_static_error(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 5.0, 5.0, feedforward="lq")
    A_cl = plant.A - plant.B_u @ gain.Kx
    ratio = (plant.C_o @ np.linalg.solve(A_cl, plant.B_u) @ gain.Kv).item()
    assert 0.99 < ratio < 1.0


def test_small_state_weight_gives_small_gain():
    plant = LtiPlant([[-1.0, 0.5], [0.0, -2.0]], [[1.0], [1.0]], None, [[1.0, 0.0]])
    norms = [np.linalg.norm(lqr_tracking_gain(plant, constant_reference(1.0), q, 1.0).Kx)
             for q in (1.0, 1e-3, 1e-6)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] < 1e-6


def test_input_channel_mask(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 5.0, 5.0, input_channels=[0])
    np.testing.assert_array_equal(gain.Kx[1], 0.0)
    np.testing.assert_array_equal(gain.Kv[1], 0.0)
    assert gain.closed_loop.is_hurwitz()


def test_unstabilizable_plant_is_synthesis_error():
    plant = LtiPlant(np.eye(2), [[1.0], [0.0]], None, [[1.0, 1.0]])
    with pytest.raises(SynthesisError) as exc:
        lqr_tracking_gain(plant, constant_reference(1.0), 1.0, 1.0)
    assert exc.value.step == 2


def test_sylvester_singularity_is_synthesis_error():
    # closed loop eigenvalue -sqrt(2) mirrored by exosystem eigenvalue +sqrt(2)
    plant = LtiPlant([[-1.0]], [[1.0]], None, [[1.0]])
    ref = constant_reference(1.0)
    ref = type(ref)([[math.sqrt(2.0)]], [[1.0]], [1.0])
    with pytest.raises(SynthesisError):
        lqr_tracking_gain(plant, ref, 1.0, 1.0, feedforward="lq")


def test_bad_weights():
    with pytest.raises(SynthesisError) as exc:
        lqr_tracking_gain(scalar_plant(), constant_reference(1.0), 0.0, 1.0)
    assert exc.value.step == 1
    with pytest.raises(SynthesisError):
        lqr_tracking_gain(scalar_plant(), constant_reference(1.0), 1.0, -1.0)


# -- observer

def test_wafer_observer_accepted(plant):
    obs = design_observer(plant, np.diag([3.0, 3.0]))
    LB = 3.0 * plant.B_u
    tr, det = np.trace(LB), np.linalg.det(LB)
    assert tr == pytest.approx(21.19, abs=0.01)
    assert det == pytest.approx(2.69, abs=0.01)
    disc = math.sqrt(tr * tr - 4 * det)
    expected = [-(tr - disc) / 2, -(tr + disc) / 2]
    assert [re for re, _ in obs.spectrum] == pytest.approx(expected, rel=1e-10)
    np.testing.assert_array_equal(obs.err_dyn, -np.diag([3.0, 3.0]) @ plant.B_d)


@pytest.mark.parametrize("L", [np.zeros((2, 2)), -np.diag([3.0, 3.0])])
def test_observer_rejected(plant, L):
    with pytest.raises(ObserverDesignError) as exc:
        design_observer(plant, L)
    assert exc.value.step == 6
    assert "spectrum" in str(exc.value)


def test_observer_shape_error(plant):
    with pytest.raises(ObserverDesignError) as exc:
        design_observer(plant, np.eye(3))
    assert exc.value.step == 3


# -- compensator

def test_scalar_matched_compensator():
    plant = scalar_plant()
    gain = lqr_tracking_gain(plant, constant_reference(1.0), 1.0, 1.0)
    comp = compensator_gain(plant, gain)
    assert comp.u_d[0, 0] == pytest.approx(-1.0, abs=1e-12)


def test_wafer_matched_compensator(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 5.0, 5.0)
    comp = compensator_gain(plant, gain)
    A_cl = plant.A - plant.B_u @ gain.Kx
    direct = plant.C_o @ np.linalg.inv(A_cl) @ (plant.B_d + plant.B_u @ comp.u_d)
    assert np.linalg.norm(direct) <= 1e-8
    assert comp.residual_norm <= 1e-8


def test_wafer_gap_channel_compensator(plant, ref):
    gap_plant = plant.with_disturbance_channels([1])
    gain = lqr_tracking_gain(gap_plant, ref, 2.0, 1.0)
    comp = compensator_gain(gap_plant, gain)
    assert comp.u_d.shape == (2, 1)
    assert comp.residual_norm <= 1e-8


def test_pump_disturbance_gap_compensation(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 2.0, 1.0)
    comp = compensator_gain(plant, gain, channels=[1])
    np.testing.assert_array_equal(comp.u_d[0], 0.0)
    assert comp.residual_norm <= 1e-8


def test_output_uncontrollable_compensation():
    # input 2 does not reach the output at all
    plant = LtiPlant([[-1.0, 0.0], [0.0, -2.0]], [[1.0, 0.0], [0.0, 1.0]], None, [[1.0, 0.0]])
    gain = lqr_tracking_gain(plant, constant_reference(1.0), 1.0, 1.0, input_channels=[0])
    with pytest.raises(CompensationError) as exc:
        compensator_gain(plant, gain, channels=[1])
    assert exc.value.step == 5


# -- properties checked by simulation

def test_monotone_in_state_weight(plant, ref):
    """With R fixed, a larger Q_e never increases the integrated squared error."""
    def ise(Q_e, r):
        gain = lqr_tracking_gain(plant, ref, Q_e, r)
        traj = simulate_closed_loop(plant, ref, gain, cfg=SimConfig(t_end=20.0, dt=1e-3))
        return float(np.trapezoid(traj.e**2, traj.t))

    assert ise(10.0, 5.0) <= ise(5.0, 5.0)
    assert ise(10.0, 2.5) <= ise(5.0, 2.5)


def test_asymptotic_tracking(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 5.0, 5.0)
    T = 40.0 / abs(gain.closed_loop.max_real)
    traj = simulate_closed_loop(plant, ref, gain, cfg=SimConfig(t_end=round(T, 2), dt=5e-3))
    assert abs(traj.e[-1]) <= 1e-6 * (1 + 166.3)


def test_observer_error_is_matrix_exponential(plant, ref):
    gain = lqr_tracking_gain(plant, ref, 5.0, 5.0)
    obs = design_observer(plant, np.diag([3.0, 3.0]))
    dist = DisturbanceSignal(((Constant(0.2),), (Constant(-0.1),)))
    traj = simulate_closed_loop(plant, ref, gain, obs, None, dist, SimConfig(t_end=5.0, dt=1e-3))
    e00 = traj.e0[0]
    expected = np.array([expm(obs.err_dyn * t) @ e00 for t in traj.t])
    assert np.max(np.abs(traj.e0 - expected)) <= 1e-6
