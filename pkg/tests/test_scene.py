"""Scene tracing, channel tap assembly, and serialization."""

import math

import numpy as np
import pytest

from risloc.arrays import (
    SPEED_OF_LIGHT,
    DirectionVector,
    PulseShape,
    UpaGeometry,
    pulse_delay_vector,
    upa_response,
)
from risloc.errors import (
    ConfigError,
    DegenerateGeometry,
    NonUnitModulus,
    ShapeMismatch,
)
from risloc.scene import (
    ChannelTaps,
    PropagationPath,
    Scene,
    Surface,
    assemble_bm_taps,
    assemble_brm_taps,
    default_surfaces,
    overall_taps,
    read_paths_csv,
    trace_paths,
    write_paths_csv,
)

ROOM = ((-5.0, 5.0), (-5.0, 5.0), (0.0, 3.0))


def small_scene(**kwargs):
    base = dict(room=ROOM, bs=(0.0, 0.0, 1.0), ris=(4.0, 0.0, 2.0), ms=(2.0, 0.0, 1.0))
    base.update(kwargs)
    return Scene(**base)


def rand_direction(rng):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return DirectionVector(*v)


def rot_z(d, angle):
    c, s = math.cos(angle), math.sin(angle)
    return DirectionVector(c * d.x - s * d.y, s * d.x + c * d.y, d.z)


# ---------------------------------------------------------------------------
# scene validation and serialization


def test_scene_rejects_positions_outside_room():
    with pytest.raises(ConfigError):
        small_scene(ms=(9.0, 0.0, 1.0))
    with pytest.raises(ConfigError):
        Scene(room=((0, 0), (0, 1), (0, 1)), bs=(0, 0, 0), ris=(0, 1, 0), ms=(0, 0.5, 0.5))
    with pytest.raises(ConfigError):
        small_scene(blockage={"xx": True})


def test_default_surfaces_cover_all_faces():
    surfaces = default_surfaces(ROOM, reflection=complex(-0.5, 0.1))
    assert len(surfaces) == 6
    assert {(s.axis, s.offset) for s in surfaces} == {
        (2, 0.0),
        (2, 3.0),
        (0, -5.0),
        (0, 5.0),
        (1, -5.0),
        (1, 5.0),
    }
    assert all(s.reflection == complex(-0.5, 0.1) for s in surfaces)


def test_scene_json_roundtrip(tmp_path):
    scene = small_scene(blockage={"bm": True})
    path = tmp_path / "scene.json"
    scene.save_json(path)
    back = Scene.load_json(path)
    assert back.room == scene.room
    np.testing.assert_allclose(back.ms, scene.ms)
    assert back.blockage == {"bm": True, "br": False, "rm": False}
    assert back.carrier_frequency == scene.carrier_frequency
    assert [(s.name, s.axis, s.offset, s.reflection) for s in back.surfaces] == [
        (s.name, s.axis, s.offset, s.reflection) for s in scene.surfaces
    ]
    with pytest.raises(ConfigError):
        Scene.from_dict({"room": [[0, 1]]})


def test_paths_csv_roundtrip(tmp_path):
    scene = small_scene()
    rows = [("bm", p) for p in trace_paths(scene, scene.bs, scene.ms)]
    f = tmp_path / "paths.csv"
    write_paths_csv(f, rows)
    back = read_paths_csv(f)
    assert len(back) == len(rows)
    for (src_a, pa), (src_b, pb) in zip(rows, back):
        assert src_a == src_b
        assert pa.gain == pb.gain
        assert pa.delay == pb.delay
        assert (pa.departure.x, pa.departure.y, pa.departure.z) == (
            pb.departure.x,
            pb.departure.y,
            pb.departure.z,
        )
        assert pa.label == pb.label


# ---------------------------------------------------------------------------
# image-source tracing


def test_floor_bounce_matches_hand_geometry():
    scene = small_scene(bs=(0.0, 0.0, 1.0), ms=(2.0, 0.0, 1.0))
    paths = trace_paths(scene, scene.bs, scene.ms)
    by_label = {p.label: p for p in paths}
    floor = by_label["floor"]
    length = 2.0 * math.sqrt(2.0)
    assert floor.delay == pytest.approx(length / SPEED_OF_LIGHT, rel=1e-12)
    inv = 1.0 / math.sqrt(2.0)
    assert (floor.departure.x, floor.departure.y) == pytest.approx((inv, 0.0), abs=1e-12)
    assert floor.departure.z == pytest.approx(-inv, abs=1e-12)
    assert floor.arrival.z == pytest.approx(-inv, abs=1e-12)
    # reflected amplitude: free-space loss of the unfolded length times the coefficient
    lam = scene.wavelength
    assert abs(floor.gain) == pytest.approx(0.7 * lam / (4 * math.pi * length), rel=1e-12)


def test_los_gain_and_direction():
    scene = small_scene()
    los = trace_paths(scene, scene.bs, scene.ms)[0]
    assert los.label == "los"
    d = float(np.linalg.norm(scene.ms - scene.bs))
    lam = scene.wavelength
    want = (lam / (4 * math.pi * d)) * np.exp(-2j * math.pi * d / lam)
    assert los.gain == pytest.approx(want, rel=1e-12)
    assert los.length == pytest.approx(d, rel=1e-12)
    assert (los.departure.x, los.departure.y, los.departure.z) == (1.0, 0.0, 0.0)


def test_paths_sorted_by_delay_and_los_first():
    scene = small_scene()
    paths = trace_paths(scene, scene.bs, scene.ms)
    delays = [p.delay for p in paths]
    assert delays == sorted(delays)
    assert paths[0].label == "los"


def test_blocked_los_keeps_reflections():
    scene = small_scene()
    paths = trace_paths(scene, scene.bs, scene.ms, blocked_los=True)
    labels = {p.label for p in paths}
    assert "los" not in labels
    assert "floor" in labels and "ceiling" in labels


def test_endpoint_on_plane_skips_surface():
    scene = small_scene(bs=(0.0, 0.0, 0.0))
    labels = {p.label for p in trace_paths(scene, scene.bs, scene.ms)}
    assert "floor" not in labels


def test_straddled_plane_gives_no_first_order_bounce():
    scene = small_scene(bs=(0.0, 0.0, 2.5), ms=(2.0, 0.0, 0.5))
    shelf = [Surface("shelf", 2, 1.0, complex(-0.9, 0.0))]
    assert trace_paths(scene, scene.bs, scene.ms, surfaces=shelf) == [
        trace_paths(scene, scene.bs, scene.ms, surfaces=shelf)[0]
    ]
    assert trace_paths(scene, scene.bs, scene.ms, surfaces=shelf)[0].label == "los"


def test_coincident_endpoints_raise():
    scene = small_scene()
    with pytest.raises(DegenerateGeometry):
        trace_paths(scene, scene.ms, scene.ms)


def test_surface_validation():
    with pytest.raises(ConfigError):
        Surface("bad", 3, 0.0)
    mirrored = Surface("floor", 2, 0.0).mirror(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(mirrored, [1.0, 2.0, -3.0])


# ---------------------------------------------------------------------------
# channel tap assembly


def test_single_path_taps_are_rank_one():
    rng = np.random.default_rng(5)
    pulse = PulseShape.sinc(1e-9, 6)
    path = PropagationPath(
        gain=0.4 - 0.1j,
        departure=rand_direction(rng),
        arrival=rand_direction(rng),
        delay=2.3e-9,
        label="los",
    )
    bs, ms = UpaGeometry(3, 2), UpaGeometry(2, 2)
    taps = assemble_bm_taps([path], bs, ms, pulse, clock_offset=0.0)
    assert taps.tap_count == 6
    pvec = pulse_delay_vector(2.3e-9, pulse)
    outer = np.outer(upa_response(path.arrival, ms), np.conj(upa_response(path.departure, bs)))
    want = path.gain * pvec[:, None, None] * outer[None, :, :]
    np.testing.assert_allclose(taps.taps, want, atol=1e-14)


def test_on_grid_delay_occupies_single_tap():
    rng = np.random.default_rng(6)
    pulse = PulseShape.sinc(1e-9, 8)
    path = PropagationPath(
        gain=1.0 + 0.5j,
        departure=rand_direction(rng),
        arrival=rand_direction(rng),
        delay=3e-9,
        label="los",
    )
    taps = assemble_bm_taps([path], UpaGeometry(2, 2), UpaGeometry(2, 2), pulse, 0.0)
    per_tap = np.linalg.norm(taps.taps.reshape(8, -1), axis=1)
    assert np.count_nonzero(per_tap > 1e-12) == 1
    assert per_tap[3] > 0


def test_energy_rotation_invariant_for_separated_taps():
    # unit-modulus steering entries make each path's energy directionless;
    # distinct on-grid delays remove angular cross terms between paths
    rng = np.random.default_rng(7)
    pulse = PulseShape.sinc(1e-9, 8)
    paths = [
        PropagationPath(
            gain=complex(rng.normal(), rng.normal()),
            departure=rand_direction(rng),
            arrival=rand_direction(rng),
            delay=d * 1e-9,
            label=f"p{d}",
        )
        for d in (0, 2, 5)
    ]
    bs, ms = UpaGeometry(3, 3), UpaGeometry(2, 3)
    base = assemble_bm_taps(paths, bs, ms, pulse, 0.0).energy()
    assert base == pytest.approx(sum(abs(p.gain) ** 2 for p in paths) * bs.size * ms.size, rel=1e-9)
    for angle in (0.3, 1.1, math.pi / 2):
        rotated = [
            PropagationPath(p.gain, rot_z(p.departure, angle), rot_z(p.arrival, angle), p.delay, p.label)
            for p in paths
        ]
        energy = assemble_bm_taps(rotated, bs, ms, pulse, 0.0).energy()
        assert energy == pytest.approx(base, rel=1e-9)


def test_clock_shift_equals_delay_shift():
    rng = np.random.default_rng(8)
    pulse = PulseShape.sinc(1e-9, 8)
    bs, ms, ris = UpaGeometry(2, 2), UpaGeometry(2, 2), UpaGeometry(2, 2)
    delta = 0.7e-9
    bm = [
        PropagationPath(0.9 - 0.2j, rand_direction(rng), rand_direction(rng), 1.9e-9, "los"),
        PropagationPath(0.2 + 0.1j, rand_direction(rng), rand_direction(rng), 4.4e-9, "floor"),
    ]
    shifted = [
        PropagationPath(p.gain, p.departure, p.arrival, p.delay + delta, p.label) for p in bm
    ]
    a = assemble_bm_taps(bm, bs, ms, pulse, clock_offset=0.2e-9)
    b = assemble_bm_taps(shifted, bs, ms, pulse, clock_offset=0.2e-9 + delta)
    np.testing.assert_allclose(a.taps, b.taps, atol=1e-14)

    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, ris.size))
    br = [PropagationPath(0.5 + 0.0j, rand_direction(rng), rand_direction(rng), 1.1e-9, "los")]
    rm = [PropagationPath(0.3 - 0.4j, rand_direction(rng), rand_direction(rng), 2.0e-9, "los")]
    rm_shift = [PropagationPath(p.gain, p.departure, p.arrival, p.delay + delta, p.label) for p in rm]
    a = assemble_brm_taps(br, rm, phases, bs, ris, ms, pulse, clock_offset=0.2e-9)
    b = assemble_brm_taps(br, rm_shift, phases, bs, ris, ms, pulse, clock_offset=0.2e-9 + delta)
    np.testing.assert_allclose(a.taps, b.taps, atol=1e-14)


def test_brm_coupling_reduces_to_scalar_for_single_element_ris():
    rng = np.random.default_rng(9)
    pulse = PulseShape.sinc(1e-9, 6)
    one = UpaGeometry(1, 1)
    bs, ms = UpaGeometry(2, 2), UpaGeometry(2, 1)
    br = PropagationPath(0.5 - 0.3j, rand_direction(rng), rand_direction(rng), 1.0e-9, "los")
    rm = PropagationPath(0.2 + 0.6j, rand_direction(rng), rand_direction(rng), 2.0e-9, "los")
    theta = np.exp(0.77j)
    taps = assemble_brm_taps([br], [rm], np.array([theta]), bs, one, ms, pulse, 0.0)
    pvec = pulse_delay_vector(3.0e-9, pulse)
    outer = np.outer(upa_response(rm.arrival, ms), np.conj(upa_response(br.departure, bs)))
    want = br.gain * rm.gain * theta * pvec[:, None, None] * outer[None, :, :]
    np.testing.assert_allclose(taps.taps, want, atol=1e-14)


def test_brm_validates_phase_vector():
    rng = np.random.default_rng(10)
    pulse = PulseShape.sinc(1e-9, 4)
    geom = UpaGeometry(2, 2)
    br = [PropagationPath(1.0, rand_direction(rng), rand_direction(rng), 1e-9, "los")]
    rm = [PropagationPath(1.0, rand_direction(rng), rand_direction(rng), 1e-9, "los")]
    with pytest.raises(ShapeMismatch):
        assemble_brm_taps(br, rm, np.ones(3), geom, geom, geom, pulse, 0.0)
    with pytest.raises(NonUnitModulus):
        assemble_brm_taps(br, rm, 0.5 * np.ones(4), geom, geom, geom, pulse, 0.0)


def test_out_of_window_paths_warn_and_drop():
    rng = np.random.default_rng(11)
    pulse = PulseShape.sinc(1e-9, 4)
    geom = UpaGeometry(2, 2)
    late = [PropagationPath(1.0, rand_direction(rng), rand_direction(rng), 9e-9, "floor")]
    with pytest.warns(UserWarning):
        taps = assemble_bm_taps(late, geom, geom, pulse, clock_offset=0.0)
    assert taps.energy() == 0.0
    early = [PropagationPath(1.0, rand_direction(rng), rand_direction(rng), 1e-9, "los")]
    with pytest.warns(UserWarning):
        taps = assemble_bm_taps(early, geom, geom, pulse, clock_offset=5e-9)
    assert taps.energy() == 0.0


def test_overall_taps_adds_and_validates():
    rng = np.random.default_rng(12)
    pulse = PulseShape.sinc(1e-9, 4)
    geom = UpaGeometry(2, 2)
    p = [PropagationPath(1.0, rand_direction(rng), rand_direction(rng), 1e-9, "los")]
    a = assemble_bm_taps(p, geom, geom, pulse, 0.0)
    b = assemble_bm_taps(p, geom, geom, pulse, 0.0)
    total = overall_taps(a, b)
    np.testing.assert_allclose(total.taps, 2 * a.taps, atol=1e-15)
    c = assemble_bm_taps(p, geom, geom, pulse, 0.5e-9)
    with pytest.raises(ShapeMismatch):
        overall_taps(a, c)
    with pytest.raises(ShapeMismatch):
        ChannelTaps(np.zeros((2, 2)), 0.0)
