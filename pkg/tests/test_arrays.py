"""Array responses, pulse taps, and direction handling."""

import numpy as np
import pytest

from risloc.arrays import (
    DirectionVector,
    PulseShape,
    UpaGeometry,
    axis_response,
    pulse_delay_vector,
    resolve_direction_z,
    upa_response,
)
from risloc.errors import ConfigError, DegenerateGeometry, InconsistentDirection


def test_direction_requires_unit_norm():
    with pytest.raises(InconsistentDirection):
        DirectionVector(0.5, 0.5, 0.5)
    d = DirectionVector(0.6, 0.0, 0.8)
    assert d.horizontal_norm() == pytest.approx(0.6)
    n = d.negated()
    assert (n.x, n.y, n.z) == (-0.6, 0.0, -0.8)


def test_towards_normalizes_and_rejects_coincident():
    d = DirectionVector.towards((1.0, 2.0, 3.0), (1.0, 2.0, 13.0))
    assert (d.x, d.y, d.z) == (0.0, 0.0, 1.0)
    with pytest.raises(DegenerateGeometry):
        DirectionVector.towards((1.0, 2.0, 3.0), (1.0, 2.0, 3.0))


def test_upa_geometry_validation():
    assert UpaGeometry(3, 5).size == 15
    with pytest.raises(ConfigError):
        UpaGeometry(0, 4)


def test_axis_response_quarter_turns():
    got = axis_response(4, 0.5)
    want = np.array([1.0, -1.0j, -1.0, 1.0j])
    np.testing.assert_allclose(got, want, atol=1e-15)
    assert np.allclose(np.abs(axis_response(7, -0.37)), 1.0)


def test_upa_response_matches_elementwise_definition():
    geom = UpaGeometry(3, 4)
    d = DirectionVector(0.3, -0.4, np.sqrt(1 - 0.25))
    got = upa_response(d, geom)
    for ix in range(geom.n_x):
        for iy in range(geom.n_y):
            want = np.exp(-1j * np.pi * (ix * d.x + iy * d.y))
            assert got[ix * geom.n_y + iy] == pytest.approx(want, abs=1e-14)


def test_upa_response_conjugate_symmetry():
    geom = UpaGeometry(4, 3)
    rng = np.random.default_rng(2)
    for _ in range(5):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        d = DirectionVector(*v)
        np.testing.assert_allclose(
            upa_response(d.negated(), geom), np.conj(upa_response(d, geom)), atol=1e-14
        )
        assert np.allclose(np.abs(upa_response(d, geom)), 1.0)


def test_resolve_round_trips_projected_directions():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        sign = -1 if v[2] < 0 else 1
        back = resolve_direction_z(v[0], v[1], sign)
        np.testing.assert_allclose([back.x, back.y, back.z], v, atol=1e-12)


def test_pulse_defaults_to_sinc():
    pulse = PulseShape.sinc(1.0e-9, 4)
    assert pulse.window == pytest.approx(4.0e-9)
    assert pulse.evaluate(0.0) == pytest.approx(1.0)
    # half-sample offsets, frozen reference values of the bandlimited pulse
    assert pulse.evaluate(0.5e-9) == pytest.approx(0.6366197723675814, abs=1e-15)
    assert pulse.evaluate(1.5e-9) == pytest.approx(-0.21220659078919378, abs=1e-15)
    assert pulse.evaluate(2.5e-9) == pytest.approx(0.12732395447351627, abs=1e-15)


def test_pulse_validation_and_custom_shape():
    with pytest.raises(ConfigError):
        PulseShape(sample_period=0.0, tap_count=4)
    with pytest.raises(ConfigError):
        PulseShape(sample_period=1e-9, tap_count=0)
    box = PulseShape(1.0, 3, evaluate=lambda t: np.where(np.abs(t) < 0.5, 1.0, 0.0))
    np.testing.assert_allclose(pulse_delay_vector(1.0, box), [0.0, 1.0, 0.0])


def test_on_sample_delay_gives_one_hot_taps():
    pulse = PulseShape.sinc(2.0e-9, 6)
    for k in range(pulse.tap_count):
        taps = pulse_delay_vector(k * pulse.sample_period, pulse)
        want = np.zeros(pulse.tap_count)
        want[k] = 1.0
        np.testing.assert_allclose(taps, want, atol=1e-12)
        assert np.linalg.norm(taps) == pytest.approx(1.0, abs=1e-12)


def test_half_sample_delay_taps_frozen():
    pulse = PulseShape.sinc(1.0e-9, 4)
    taps = pulse_delay_vector(0.5e-9, pulse)
    want = [
        0.6366197723675814,
        0.6366197723675814,
        -0.21220659078919378,
        0.12732395447351627,
    ]
    np.testing.assert_allclose(taps, want, atol=1e-15)


def test_resolve_direction_z_signs_and_errors():
    d = resolve_direction_z(0.3, -0.4, -1)
    assert d.z == pytest.approx(-0.8660254037844386, abs=1e-15)
    up = resolve_direction_z(0.3, -0.4, 1)
    assert up.z == pytest.approx(0.8660254037844386, abs=1e-15)
    horizontal = resolve_direction_z(0.6, 0.8, -1)
    assert horizontal.z == 0.0
    with pytest.raises(InconsistentDirection):
        resolve_direction_z(0.9, 0.9, -1)
    with pytest.raises(ConfigError):
        resolve_direction_z(0.1, 0.1, 0)
