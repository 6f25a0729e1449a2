"""Tests for plant_sim module."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from adaptive_kmpc.errors import ConfigurationError, InputError
from adaptive_kmpc.plant_sim import (
    ClockSpec,
    Disturbance,
    DisturbanceKind,
    JitterMode,
    Plant,
    PlantParams,
    PlantState,
    advance,
    clamp_torque,
    forward_dynamics,
    gravity_torque,
    jittered_clock,
    mass_matrix,
    state_derivative,
    step,
    total_energy,
)


def _unforced_energy_drift(params, q0, duration):
    plant = Plant(params, PlantState.at_rest(q0))
    start = total_energy(params, plant.state)
    zero = np.zeros(params.dof)
    worst = 0.0
    for t in np.arange(1, round(duration * 100) + 1) * 0.01:
        plant.apply(zero, t)
        worst = max(worst, abs(total_energy(params, plant.state) - start))
    return worst


def test_build_defaults(params_1r):
    """Test default link parameters of a uniform rod."""
    assert params_1r.dof == 1
    assert params_1r.com[0] == pytest.approx(0.15)
    assert params_1r.inertia[0] == pytest.approx(0.6 * 0.09 / 12.0)
    assert params_1r.torque_limit == 6.0


def test_build_rejects_three_joints():
    """Test that only 1R and 2R arms are supported."""
    with pytest.raises(ConfigurationError):
        PlantParams.build(3)


def test_build_rejects_negative_payload():
    """Test payload validation."""
    with pytest.raises(ConfigurationError):
        PlantParams.build(1, payload=-0.1)


def test_structure_inverse_2r(params_2r):
    """Test the belt transmission from motor to joint torques."""
    np.testing.assert_allclose(params_2r.structure_inverse @ [1.0, 0.0], [1.0, 0.0])
    np.testing.assert_allclose(params_2r.structure_inverse @ [0.0, 1.0], [1.0, 1.0])


def test_structure_matrix_round_trip(params_2r, rng):
    """Test that motor torque S tau drives the joints exactly like tau."""
    np.testing.assert_allclose(
        params_2r.structure @ params_2r.structure_inverse, np.eye(2), atol=1e-12
    )
    x = rng.normal(size=4)
    tau = rng.normal(size=2)

    via_motors = state_derivative(params_2r, x, params_2r.structure @ tau)
    direct = state_derivative(params_2r, x, np.zeros(2), d_ext=tau)

    np.testing.assert_allclose(via_motors, direct, atol=1e-12)


def test_payload_adds_point_mass_inertia(params_1r):
    """Test that the payload acts as a point mass at the link tip."""
    loaded = params_1r.with_payload(0.5)

    expected = 0.6 * 0.09 / 12.0 + 0.6 * 0.15**2 + 0.5 * 0.3**2
    assert mass_matrix(loaded, [0.3])[0, 0] == pytest.approx(expected)
    assert gravity_torque(loaded, [math.pi / 2])[0] == pytest.approx(
        (0.6 * 0.15 + 0.5 * 0.3) * 9.81
    )


def test_mass_matrix_2r_symmetric_positive(params_2r, rng):
    """Test that M(q) is symmetric positive definite."""
    for q in rng.uniform(-math.pi, math.pi, size=(20, 2)):
        m = mass_matrix(params_2r, q)

        np.testing.assert_allclose(m, m.T)
        assert np.all(np.linalg.eigvalsh(m) > 0)


def test_hanging_rest_is_equilibrium(params_2r):
    """Test zero gravity torque and zero energy at the hanging rest."""
    state = PlantState.at_rest([0.0, 0.0])

    np.testing.assert_allclose(gravity_torque(params_2r, state.q), [0.0, 0.0])
    np.testing.assert_allclose(
        state_derivative(params_2r, state.x, [0.0, 0.0]), np.zeros(4)
    )
    assert total_energy(params_2r, state) == 0.0


def test_upright_energy_1r(params_1r):
    """Test potential energy at the upright position."""
    state = PlantState.at_rest([math.pi])

    assert total_energy(params_1r, state) == pytest.approx(2 * 0.6 * 9.81 * 0.15)


def test_state_derivative_batched(params_2r, rng):
    """Test that column-batched evaluation matches single evaluation."""
    states = rng.normal(size=(4, 5))
    torques = rng.normal(size=(2, 5))

    batched = state_derivative(params_2r, states, torques)

    for k in range(5):
        np.testing.assert_allclose(
            batched[:, k], state_derivative(params_2r, states[:, k], torques[:, k])
        )


def test_forward_dynamics_at_zero_velocity(params_2r):
    """Test M q_dd = S^-1 u + d_ext - G when velocity terms vanish."""
    q = np.array([0.3, -0.5])
    u = np.array([1.0, 0.5])
    d_ext = np.array([0.2, 0.0])

    qdd = forward_dynamics(params_2r, PlantState.at_rest(q), u, d_ext)

    rhs = params_2r.structure_inverse @ u + d_ext - gravity_torque(params_2r, q)
    np.testing.assert_allclose(mass_matrix(params_2r, q) @ qdd, rhs, atol=1e-12)


def test_energy_conserved_1r():
    """Test energy drift of an unforced frictionless pendulum over 10 s."""
    params = PlantParams.build(1, friction=0.0)

    assert _unforced_energy_drift(params, [1.0], 10.0) < 1e-5


def test_energy_conserved_2r():
    """Test energy drift of an unforced frictionless double pendulum."""
    params = PlantParams.build(2, friction=0.0)

    assert _unforced_energy_drift(params, [1.0, 0.5], 5.0) < 1e-4


def test_friction_dissipates_energy(params_1r):
    """Test that viscous friction removes energy."""
    plant = Plant(params_1r, PlantState.at_rest([1.0]))
    start = total_energy(params_1r, plant.state)

    plant.apply([0.0], 2.0)

    assert total_energy(params_1r, plant.state) < start


def test_rk4_fourth_order_convergence():
    """Test the observed order against a tight adaptive reference."""
    params = PlantParams.build(1, friction=0.0)
    x0 = np.array([1.0, 0.0])
    reference = solve_ivp(
        lambda t, x: state_derivative(params, x, [0.0]),
        (0.0, 1.0),
        x0,
        method="DOP853",
        rtol=1e-13,
        atol=1e-13,
    ).y[:, -1]

    errors = []
    for n_steps in (100, 200):
        state = PlantState.from_vector(x0)
        for _ in range(n_steps):
            state = step(params, state, [0.0], Disturbance.none(), 1.0 / n_steps)
        errors.append(np.linalg.norm(state.x - reference))

    order = math.log2(errors[0] / errors[1])
    assert 3.7 <= order <= 4.3


def test_clamp_torque(params_2r):
    """Test symmetric saturation."""
    np.testing.assert_array_equal(
        clamp_torque(params_2r, [10.0, -7.0]), [6.0, -6.0]
    )


def test_plant_apply_returns_clamped_torque(params_1r):
    """Test that the applied torque is the saturated one."""
    plant = Plant(params_1r, PlantState.at_rest([0.0]))

    applied = plant.apply([20.0], 0.01)

    np.testing.assert_array_equal(applied, [6.0])
    assert plant.t == 0.01


def test_advance_reaches_target_time_exactly(params_1r):
    """Test that substeps end exactly at the requested time."""
    state = PlantState.at_rest([0.2], t=0.1)

    result = advance(params_1r, state, [0.0], Disturbance.none(), 0.1 + 0.0107)

    assert result.t == 0.1 + 0.0107


def test_advance_rejects_past_target(params_1r):
    """Test that integration must move forward."""
    with pytest.raises(InputError):
        advance(
            params_1r, PlantState.at_rest([0.0], t=1.0), [0.0], Disturbance.none(), 1.0
        )


def test_step_rejects_non_positive_dt(params_1r):
    """Test the integration step check."""
    with pytest.raises(InputError):
        step(params_1r, PlantState.at_rest([0.0]), [0.0], Disturbance.none(), 0.0)


def test_state_from_vector_odd_length():
    """Test that a state must hold equal numbers of angles and rates."""
    with pytest.raises(InputError):
        PlantState.from_vector([0.0, 0.0, 0.0])


def test_impulse_is_half_sine():
    """Test the impulse profile inside and outside its window."""
    dist = Disturbance(DisturbanceKind.IMPULSE, 1.0, 1.2, np.array([2.0, 0.0]))

    np.testing.assert_allclose(dist.torque(1.1, 2), [2.0, 0.0])
    np.testing.assert_allclose(dist.torque(1.05, 2), [2.0 * math.sin(math.pi / 4), 0])
    np.testing.assert_array_equal(dist.torque(0.9, 2), [0.0, 0.0])
    np.testing.assert_array_equal(dist.torque(1.3, 2), [0.0, 0.0])


def test_constant_push_is_rectangular():
    """Test the constant push profile."""
    dist = Disturbance(DisturbanceKind.CONSTANT_PUSH, 0.5, 1.0, np.array([0.3]))

    np.testing.assert_array_equal(dist.torque(0.5, 1), [0.3])
    np.testing.assert_array_equal(dist.torque(1.0, 1), [0.3])
    np.testing.assert_array_equal(dist.torque(1.01, 1), [0.0])


def test_short_magnitude_pads_trailing_joints():
    """Test that a one-entry torque only pushes joint 1 of a 2R arm."""
    dist = Disturbance(DisturbanceKind.CONSTANT_PUSH, 0.0, 1.0, np.array([1.5]))

    np.testing.assert_array_equal(dist.torque(0.5, 2), [1.5, 0.0])


def test_payload_change_window():
    """Test that a payload change only applies inside its window."""
    dist = Disturbance(DisturbanceKind.PAYLOAD_CHANGE, 1.0, 2.0, np.array([0.4]))

    assert dist.payload(1.5) == 0.4
    assert dist.payload(2.5) == 0.0
    np.testing.assert_array_equal(dist.torque(1.5, 1), [0.0])


def test_payload_change_slows_response(params_1r):
    """Test that extra payload changes the trajectory."""
    dist = Disturbance(DisturbanceKind.PAYLOAD_CHANGE, 0.0, 1.0, np.array([0.5]))
    start = PlantState.at_rest([0.0])

    free = advance(params_1r, start, [1.0], Disturbance.none(), 0.2)
    loaded = advance(params_1r, start, [1.0], dist, 0.2)

    assert loaded.q[0] < free.q[0]


def test_disturbance_rejects_reversed_window():
    """Test window validation."""
    with pytest.raises(ConfigurationError):
        Disturbance(DisturbanceKind.IMPULSE, 2.0, 1.0, np.array([1.0]))


def test_jittered_clock_bounds():
    """Test that every interval lies in the 90-110 Hz band."""
    stamps = jittered_clock(100.0, JitterMode.UNIFORM, 7, 1000, t0=-2.0)

    intervals = np.diff(stamps)
    assert stamps[0] == -2.0
    assert np.all(intervals >= 1.0 / 110.0)
    assert np.all(intervals <= 1.0 / 90.0)
    assert np.std(intervals) > 0


def test_jittered_clock_deterministic():
    """Test that one seed gives one clock."""
    first = jittered_clock(100.0, JitterMode.UNIFORM, 11, 50)
    second = jittered_clock(100.0, JitterMode.UNIFORM, 11, 50)
    other = jittered_clock(100.0, JitterMode.UNIFORM, 12, 50)

    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, other)


def test_clock_without_jitter():
    """Test the fixed-period clock."""
    stamps = jittered_clock(100.0, JitterMode.NONE, None, 5)

    np.testing.assert_allclose(stamps, [0.0, 0.01, 0.02, 0.03, 0.04])


def test_clock_spec_until_and_streams():
    """Test the stamp range and independent streams of one seed."""
    clock = ClockSpec(mean_hz=100.0, jitter=JitterMode.UNIFORM, seed=5)

    stamps = clock.until(1.0)
    other = clock.until(1.0, stream=1)

    assert stamps[0] == 0.0
    assert stamps[-1] <= 1.0
    assert stamps[-1] > 1.0 - 1.0 / 90.0
    assert not np.array_equal(stamps[:10], other[:10])
    np.testing.assert_array_equal(stamps, clock.until(1.0))


def test_clock_spec_rejects_zero_frequency():
    """Test clock frequency validation."""
    with pytest.raises(ConfigurationError):
        ClockSpec(mean_hz=0.0)
