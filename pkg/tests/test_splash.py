import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rainsim.errors import ArgumentError, FormatError
from rainsim.splash import (
    Mechanism,
    RainParticle,
    RainParticleSet,
    SplashConfig,
    VehicleState,
    emit_splash,
    perlin3,
    perlin3_many,
    simulate_splash,
    step_particles,
)

CAR = VehicleState((0.0, 0.0, 0.0), heading=0.3, speed=10.0)


# -- Perlin noise ----------------------------------------------------------


def test_perlin_zero_on_lattice():
    assert perlin3(2, -5, 7) == 0.0
    pts = np.random.default_rng(0).integers(-100, 100, (500, 3))
    assert (perlin3_many(pts, seed=3) == 0.0).all()


def test_perlin_deterministic():
    assert perlin3(0.3, 1.7, -2.2, seed=11) == perlin3(0.3, 1.7, -2.2, seed=11)


def test_perlin_seed_changes_field():
    pts = np.random.default_rng(1).uniform(-10, 10, (100, 3))
    assert not np.array_equal(perlin3_many(pts, 0), perlin3_many(pts, 1))


def test_perlin_bounded_bulk():
    pts = np.random.default_rng(2).uniform(-50, 50, (100_000, 3))
    v = perlin3_many(pts, seed=5)
    assert np.abs(v).max() <= 1.0
    assert v.std() > 0.1


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 2**64 - 1))
def test_perlin_bounded_property(x, y, z, seed):
    assert -1.0 <= perlin3(x, y, z, seed) <= 1.0


def test_perlin_continuous():
    p = np.array([[0.37, -1.21, 4.02]])
    eps = 1e-7
    d = perlin3_many(p + eps, 9) - perlin3_many(p, 9)
    assert abs(d[0]) < 1e-5


# -- Vehicle and config ----------------------------------------------------


def test_vehicle_rejects_negative_speed():
    with pytest.raises(ArgumentError):
        VehicleState((0, 0, 0), 0.0, -1.0)


def test_wheel_contacts_geometry():
    v = VehicleState((1.0, 2.0, 0.0), 0.0, 5.0, wheelbase=2.0, track_width=1.0)
    np.testing.assert_allclose(v.wheel_contact_points, [[2, 2.5, 0], [2, 1.5, 0], [0, 2.5, 0], [0, 1.5, 0]])


def test_config_validation():
    with pytest.raises(ArgumentError):
        SplashConfig(dt=0.0)
    with pytest.raises(ArgumentError):
        SplashConfig(duration=0.001, dt=0.01)
    with pytest.raises(ArgumentError):
        SplashConfig(mechanism_gains={"BW": -1.0, "SW": 0.1, "TP": 0.1})


def test_config_json_roundtrip(tmp_path):
    cfg = SplashConfig(emission_rate=123.0, seed=2**63 + 5)
    assert SplashConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(FormatError):
        SplashConfig.from_dict({"emission_rat": 1.0})


# -- Emission --------------------------------------------------------------


def test_zero_speed_emits_nothing():
    assert emit_splash(VehicleState((0, 0, 0), 0.0, 0.0), SplashConfig(), 0.0) == []


def test_emission_count_example():
    cfg = SplashConfig(emission_rate=100.0, dt=0.01)
    ps = emit_splash(CAR, cfg, 0.0)
    assert len(ps) == 12
    counts = {m: sum(p.mechanism is m for p in ps) for m in Mechanism}
    assert counts == {Mechanism.BW: 4, Mechanism.SW: 4, Mechanism.TP: 4}


def test_emission_deterministic():
    cfg = SplashConfig(seed=42)
    assert emit_splash(CAR, cfg, 0.2) == emit_splash(CAR, cfg, 0.2)


def test_emission_outside_window():
    with pytest.raises(ArgumentError):
        emit_splash(CAR, SplashConfig(duration=1.0), 1.5)


def test_launch_geometry():
    cfg = SplashConfig(emission_rate=100.0, dt=0.01)
    contacts = CAR.wheel_contact_points
    expect = {Mechanism.BW: 30.0, Mechanism.SW: 45.0, Mechanism.TP: 60.0}
    for k, p in enumerate(emit_splash(CAR, cfg, 0.0)):
        wheel = k // 3
        np.testing.assert_allclose(p.position, contacts[wheel])
        v = np.asarray(p.velocity)
        speed = np.linalg.norm(v)
        gain = cfg.gain(p.mechanism)
        assert 0.8 * gain * CAR.speed - 1e-12 <= speed <= 1.2 * gain * CAR.speed + 1e-12
        elev = math.degrees(math.asin(v[2] / speed))
        assert elev == pytest.approx(expect[p.mechanism])
        horiz = v[:2] / np.linalg.norm(v[:2])
        fwd = CAR.forward[:2]
        if p.mechanism is Mechanism.BW:
            assert horiz @ fwd == pytest.approx(1.0)
        elif p.mechanism is Mechanism.TP:
            assert horiz @ fwd == pytest.approx(-1.0)
        else:
            outward = (contacts[wheel][:2] - np.asarray(CAR.position[:2])) @ CAR.left[:2]
            assert np.sign(horiz @ CAR.left[:2]) == np.sign(outward)


def test_speed_factor_clamped():
    fast = VehicleState((0, 0, 0), 0.0, 100.0)
    cfg = SplashConfig(emission_rate=100.0, dt=0.01)
    assert len(emit_splash(fast, cfg, 0.0)) == 12 * 3


# -- Stepping --------------------------------------------------------------

STILL = SplashConfig(drag_coefficient=0.0, wind_amplitude=0.0)


def test_gravity_step():
    p = RainParticle((0.0, 0.0, 10.0), (0.0, 0.0, 0.0), 0.0, Mechanism.BW)
    (q,) = step_particles([p], 0.1, STILL)
    np.testing.assert_allclose(q.velocity, [0, 0, -0.981], rtol=0, atol=1e-15)
    assert q.position[2] == pytest.approx(10.0 - 0.0981)


def test_horizontal_advance():
    ps = [RainParticle((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), 0.0, Mechanism.SW)]
    for k in range(3):
        ps = step_particles(ps, 0.01, STILL)
        assert ps[0].position[0] == pytest.approx(0.01 * (k + 1))


def test_ground_absorption():
    p = RainParticle((0.0, 0.0, 0.0), (0.0, 0.0, -1.0), 0.0, Mechanism.TP)
    assert step_particles([p], 0.01, STILL) == []


def test_step_rejects_bad_dt():
    with pytest.raises(ArgumentError):
        step_particles(RainParticleSet(), 0.0, STILL)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.floats(0.5, 20))
def test_horizontal_velocity_constant_without_drag_or_wind(steps, vx):
    ps = RainParticleSet.from_particles([RainParticle((0, 0, 50.0), (vx, -0.5 * vx, 3.0), 0.0, Mechanism.BW)])
    for _ in range(steps):
        ps = step_particles(ps, 0.01, STILL)
    assert ps.velocity[0, 0] == vx and ps.velocity[0, 1] == -0.5 * vx


# -- Full simulation -------------------------------------------------------


def test_no_vehicles_empty():
    assert len(simulate_splash([], SplashConfig())) == 0


def test_one_vehicle_nonempty_above_ground():
    ps = simulate_splash([CAR], SplashConfig(duration=1.0))
    assert len(ps) > 0
    assert (ps.position[:, 2] >= 0).all()


def test_simulation_deterministic():
    cfg = SplashConfig(duration=0.5, seed=99)
    assert simulate_splash([CAR], cfg) == simulate_splash([CAR], cfg)


def test_adjacent_seeds_differ():
    a = simulate_splash([CAR], SplashConfig(duration=0.5, seed=4))
    b = simulate_splash([CAR], SplashConfig(duration=0.5, seed=5))
    assert a != b


@settings(max_examples=15, deadline=None)
@given(st.floats(10, 400), st.floats(10, 400), st.integers(0, 1000))
def test_count_monotone_in_emission_rate(r1, r2, seed):
    lo, hi = sorted((r1, r2))
    base = SplashConfig(duration=0.2, dt=0.02, seed=seed)
    a = simulate_splash([CAR], base.replace(emission_rate=lo))
    b = simulate_splash([CAR], base.replace(emission_rate=hi))
    assert len(a) <= len(b)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0, 12))
def test_survivors_above_ground(seed, speed):
    v = VehicleState((3.0, -2.0, 0.0), 1.0, speed)
    ps = simulate_splash([v], SplashConfig(duration=0.3, dt=0.02, seed=seed))
    assert (ps.position[:, 2] >= 0).all()
    assert np.isfinite(ps.position).all()
