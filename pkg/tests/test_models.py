import math

import numpy as np
import pytest

from sampled_nmpc import (
    SamplerConfig,
    SamplerState,
    buck_boost_step,
    calibrate_buck_terminal_level,
    cart_spring_step,
    draw_samples,
    make_benchmark,
    terminal_control,
    terminal_set,
    wmr_step,
)
from sampled_nmpc.errors import ConfigError, NoTerminalLawError
from sampled_nmpc.models import (
    BUCK_TERMINAL_LEVEL,
    BUCK_U_EQ,
    BUCK_X_EQ,
    BuckBoostParams,
    CART_P,
    CART_TERMINAL_LEVEL,
    CartSpringParams,
    WmrParams,
)


def halton_points_in_ellipsoid(ellipsoid, count):
    """Deterministic low-discrepancy fill of an ellipsoidal set."""
    box = ellipsoid.bounding_box()
    state = SamplerState(SamplerConfig(scheme="halton"))
    points = []
    while len(points) < count:
        for candidate in draw_samples(state, box, 256):
            if ellipsoid.contains(candidate):
                points.append(candidate)
                if len(points) == count:
                    break
    return np.array(points)


class TestCartSpring:
    def test_origin_is_equilibrium(self):
        assert np.array_equal(cart_spring_step(np.zeros(2), np.zeros(1)), np.zeros(2))

    def test_spring_term_only(self):
        nxt = cart_spring_step(np.array([1.0, 0.0]), np.zeros(1))
        assert nxt[0] == 1.0
        assert nxt[1] == -0.4 * 0.33 * math.exp(-1.0)

    def test_force_term_only(self):
        nxt = cart_spring_step(np.zeros(2), np.array([1.0]))
        assert np.array_equal(nxt, np.array([0.0, 0.4]))

    def test_terminal_control_values(self):
        assert terminal_control("cart-spring", np.zeros(2)) == pytest.approx([0.0])
        drift = np.array([1.0, -0.4 * 0.33 * math.exp(-1.0)])
        expected = -(0.8783 * drift[0] + 1.1204 * drift[1])
        assert terminal_control("cart-spring", np.array([1.0, 0.0]))[0] == pytest.approx(expected)
        assert expected == pytest.approx(-0.8239, abs=5e-4)

    def test_terminal_set_membership(self):
        ell = terminal_set("cart-spring")
        assert ell.level == CART_TERMINAL_LEVEL
        assert ell.contains(np.zeros(2))
        # quadratic value at (1, 0) is the top-left weight, above the level
        assert ell.value(np.array([1.0, 0.0])) == CART_P[0, 0] > CART_TERMINAL_LEVEL
        assert not ell.contains(np.array([1.0, 0.0]))

    def test_terminal_set_sits_inside_position_bounds(self):
        half_width = math.sqrt(CART_TERMINAL_LEVEL * np.linalg.inv(CART_P)[0, 0])
        assert half_width <= 2.65

    def test_terminal_ingredients_on_sampled_set(self, cart10):
        # decrease of the terminal cost plus the stage cost, invariance of the
        # set, and admissibility of the feedback, on 1000 deterministic points
        model, cost = cart10.model, cart10.cost
        ell = terminal_set("cart-spring")
        points = halton_points_in_ellipsoid(ell, 1000)
        for x in points:
            u = model.terminal_law(x)
            assert abs(u[0]) <= 4.5
            x_next = model.step(x, u)
            assert ell.value(x_next) + cost.stage_cost(0, x, u) <= ell.value(x) + 1e-9
            assert ell.contains(x_next)

    def test_params_must_be_positive(self):
        with pytest.raises(ConfigError):
            CartSpringParams(ts=0.0)


class TestBuckBoost:
    def test_equilibrium_is_exact_fixed_point(self):
        nxt = buck_boost_step(BUCK_X_EQ, BUCK_U_EQ)
        assert np.max(np.abs(nxt - BUCK_X_EQ)) < 1e-9

    def test_origin_maps_to_origin(self):
        assert np.array_equal(buck_boost_step(np.zeros(2), np.zeros(2)), np.zeros(2))

    def test_linear_decay_of_inductor_current(self):
        p = BuckBoostParams()
        nxt = buck_boost_step(np.array([0.0, 1.0]), np.zeros(2))
        assert nxt[0] == 0.0
        assert nxt[1] == pytest.approx(1.0 - p.ts * p.r_l / p.l_f, rel=1e-15)
        assert nxt[1] == pytest.approx(0.990909090909, rel=1e-9)

    def test_terminal_control_at_equilibrium(self):
        assert np.array_equal(terminal_control("buck-boost", BUCK_X_EQ), BUCK_U_EQ)

    def test_terminal_set_centered_at_equilibrium(self):
        ell = terminal_set("buck-boost")
        assert ell.contains(BUCK_X_EQ)
        assert ell.level == BUCK_TERMINAL_LEVEL

    def test_shipped_level_matches_calibration(self):
        level = calibrate_buck_terminal_level(boundary_points=2000, bisection_steps=24)
        assert BUCK_TERMINAL_LEVEL <= level  # shipped constant is safely inside
        assert level == pytest.approx(7.5435, abs=2e-3)

    def test_quadratic_value_decreases_under_terminal_law(self):
        model = make_benchmark("buck-boost", 1, None).model
        ell = terminal_set("buck-boost")
        points = halton_points_in_ellipsoid(ell, 1000)
        for x in points:
            u = model.terminal_law(x)
            assert np.all(u >= 0.0) and np.all(u <= 1.0)
            x_next = model.step(x, u)
            assert ell.value(x_next) <= ell.value(x)
            assert ell.contains(x_next)

    def test_terminal_set_sits_inside_state_box(self):
        box = terminal_set("buck-boost").bounding_box()
        assert box.lower[0] >= -0.1 and box.upper[0] <= 22.5
        assert box.lower[1] >= 0.0 and box.upper[1] <= 3.0


class TestWmr:
    def test_straight_drive(self):
        nxt = wmr_step(np.zeros(3), np.array([0.47, 0.0]))
        np.testing.assert_allclose(nxt, [0.047, 0.0, 0.0], atol=1e-15)

    def test_zero_velocity_is_fixed_point(self):
        x = np.array([1.2, -3.4, 0.7])
        assert np.array_equal(wmr_step(x, np.zeros(2)), x)

    def test_sideways_drive(self):
        nxt = wmr_step(np.array([0.0, 0.0, math.pi / 2]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(nxt, [0.0, 0.1, math.pi / 2], atol=1e-15)

    def test_no_terminal_law(self):
        with pytest.raises(NoTerminalLawError):
            terminal_control("wmr", np.zeros(3))
        assert terminal_set("wmr") is None

    def test_params_validate(self):
        with pytest.raises(ConfigError):
            WmrParams(ts=-1.0)


class TestBenchmarkAssembly:
    def test_unknown_plant_rejected(self):
        with pytest.raises(ConfigError):
            make_benchmark("inverted-pendulum", 5, None)
        with pytest.raises(ConfigError):
            terminal_set("inverted-pendulum")

    def test_model_overrides_move_the_equilibrium(self):
        bench = make_benchmark("buck-boost", 5, {"v_s": 12.0})
        x_eq, u_eq = bench.model.equilibrium
        # d1*v_s / (R_L + R_H d2^2) with v_s = 12 and the published duty cycles
        assert x_eq == pytest.approx([24.0, 0.6])
        assert np.array_equal(u_eq, BUCK_U_EQ)
        nxt = bench.model.step(x_eq, u_eq)
        assert np.max(np.abs(nxt - x_eq)) < 1e-9

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            make_benchmark("cart-spring", 5, {"spring": 2.0})

    def test_cart_default_has_terminal_set(self):
        bench = make_benchmark("cart-spring", 5, None)
        assert bench.constraints.terminal is not None
        assert bench.constraints.terminal.level == CART_TERMINAL_LEVEL

    def test_terminal_level_override(self):
        bench = make_benchmark("cart-spring", 5, {"terminal_level": 1.0})
        assert bench.constraints.terminal.level == 1.0
        bench = make_benchmark("cart-spring", 5, {"terminal_level": None})
        assert bench.constraints.terminal is None
        bench = make_benchmark("buck-boost", 5, {"terminal_level": BUCK_TERMINAL_LEVEL})
        assert bench.constraints.terminal is not None

    def test_wmr_cost_schedule(self):
        bench = make_benchmark("wmr", 5, None)
        qs = bench.cost.stage_state_weights
        assert np.array_equal(qs[0], np.zeros((3, 3)))
        for j in range(1, 5):
            assert np.array_equal(qs[j], 2.0 ** (j - 1) * np.diag([1.0, 1.0, 0.5]))
        assert np.array_equal(bench.cost.terminal_weight,
                              50.0 * 2.0 ** 4 * np.diag([1.0, 1.0, 0.5]))

    def test_wmr_obstacle_override(self):
        bench = make_benchmark("wmr", 5, {"obstacle": {"center": [1.0, 1.0], "radius": 0.5}})
        assert not bench.constraints.state_ok(np.array([1.0, 1.2, 0.0]))
        bench = make_benchmark("wmr", 5, {"obstacle": None})
        assert bench.constraints.obstacles == ()

    def test_batch_step_agrees_with_step(self):
        rng = np.random.Generator(np.random.Philox(key=2))
        for plant, n, m in (("cart-spring", 2, 1), ("buck-boost", 2, 2), ("wmr", 3, 2)):
            bench = make_benchmark(plant, 3, None)
            xs = rng.uniform(-1.0, 1.0, (16, n))
            us = rng.uniform(0.0, 0.5, (16, m))
            batch = bench.model.batch_step(xs, us)
            rows = np.array([bench.model.step(x, u) for x, u in zip(xs, us)])
            np.testing.assert_allclose(batch, rows, rtol=1e-12, atol=1e-15)
