import math

import numpy as np
import pytest

from evtr.events import EventFrame
from evtr.geometry import Pose2D
from evtr.topomap import (
    MapChecksumError,
    MapFormatError,
    MapTruncatedError,
    TopometricMap,
    should_record,
)


def blank(w=320, h=180):
    return EventFrame.from_pixels(np.zeros((h, w), dtype=np.uint8))


def filled_map(k, rng, w=32, h=8):
    m = TopometricMap(width=w, height=h)
    for i in range(k):
        px = (rng.random((h, w)) < 0.2).astype(np.uint8)
        m.record(EventFrame.from_pixels(px), Pose2D(0.2 * i, 0.01 * i, 0.001 * i))
    return m


class TestShouldRecord:
    def test_translation_threshold(self):
        assert should_record(Pose2D(), Pose2D(0.2, 0, 0), 0.2, math.radians(15))

    def test_rotation_threshold(self):
        assert should_record(Pose2D(), Pose2D(0, 0, 0.2618), 0.2, math.radians(15))

    def test_identical_poses(self):
        assert not should_record(Pose2D(1, 2, 3), Pose2D(1, 2, 3), 0.2, math.radians(15))

    def test_rotation_wraps(self):
        assert not should_record(Pose2D(0, 0, math.pi - 0.05), Pose2D(0, 0, -math.pi + 0.05),
                                 0.2, math.radians(15))

    def test_below_both(self):
        assert not should_record(Pose2D(), Pose2D(0.19, 0, 0.2), 0.2, math.radians(15))


class TestRecord:
    def test_first_node(self):
        m = TopometricMap()
        node = m.record(blank(), Pose2D())
        assert len(m) == 1 and node.index == 0

    def test_same_pose_twice_is_stored(self):
        m = TopometricMap()
        m.record(blank(), Pose2D())
        m.record(blank(), Pose2D())
        assert [n.index for n in m.nodes] == [0, 1]

    def test_geometry_mismatch(self):
        with pytest.raises(ValueError):
            TopometricMap().record(blank(160, 90), Pose2D())

    def test_intervals_must_be_positive(self):
        with pytest.raises(ValueError):
            TopometricMap(delta_d=0)


class TestSearchSpace:
    @pytest.fixture
    def m100(self):
        m = TopometricMap(width=8, height=1)
        for i in range(100):
            m.record(blank(8, 1), Pose2D(i, 0, 0))
        return m

    def test_interior(self, m100):
        assert m100.search_space(10, 4).indices == tuple(range(6, 15))

    def test_clamped_low(self, m100):
        assert m100.search_space(1, 4).indices == tuple(range(0, 6))

    def test_clamped_high(self, m100):
        assert m100.search_space(99, 4).indices == tuple(range(95, 100))

    def test_size_bounds_and_contiguity(self, m100):
        for k in range(100):
            for s in range(6):
                idx = m100.search_space(k, s).indices
                assert s + 1 <= len(idx) <= 2 * s + 1 and k in idx
                assert list(idx) == list(range(idx[0], idx[-1] + 1))

    def test_empty_map(self):
        with pytest.raises(RuntimeError):
            TopometricMap().search_space(0, 4)

    def test_out_of_range(self, m100):
        with pytest.raises(IndexError):
            m100.search_space(100, 4)


class TestPersistence:
    def test_round_trip(self, tmp_path, rng):
        m = filled_map(51, rng)
        m.save(tmp_path / "m.evtr")
        back = TopometricMap.load(tmp_path / "m.evtr")
        assert back == m
        for a, b in zip(m.nodes, back.nodes):
            assert np.array_equal(a.frame.bits, b.frame.bits)
            assert a.pose.as_tuple() == b.pose.as_tuple()
        assert back.to_bytes() == m.to_bytes()

    def test_default_geometry_survives(self, rng):
        m = TopometricMap()
        back = TopometricMap.from_bytes(m.to_bytes())
        assert back == m and back.delta_alpha == pytest.approx(math.radians(15), abs=5e-4)

    def test_bad_magic(self, rng):
        blob = bytearray(filled_map(3, rng).to_bytes())
        blob[:4] = b"XXXX"
        with pytest.raises(MapFormatError, match="magic"):
            TopometricMap.from_bytes(bytes(blob))

    def test_bad_version(self, rng):
        blob = bytearray(filled_map(3, rng).to_bytes())
        blob[4] = 99
        with pytest.raises(MapFormatError, match="version"):
            TopometricMap.from_bytes(bytes(blob))

    def test_truncated_names_node(self, rng):
        m = filled_map(5, rng)
        blob = m.to_bytes()
        record = 24 + 8 * 4
        cut = 6 + 24 + 2 * record + 10  # inside node 2
        with pytest.raises(MapTruncatedError) as err:
            TopometricMap.from_bytes(blob[:cut])
        assert err.value.node_index == 2 and "node 2" in str(err.value)

    def test_checksum(self, rng):
        blob = bytearray(filled_map(3, rng).to_bytes())
        blob[40] ^= 0x01
        with pytest.raises(MapChecksumError):
            TopometricMap.from_bytes(bytes(blob))

    def test_trailing_bytes(self, rng):
        with pytest.raises(MapFormatError):
            TopometricMap.from_bytes(filled_map(2, rng).to_bytes() + b"\0")

    def test_error_types_are_distinct(self):
        assert not issubclass(MapChecksumError, MapTruncatedError)
        assert not issubclass(MapTruncatedError, MapChecksumError)
