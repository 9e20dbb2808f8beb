"""Teach-phase topometric map: an ordered list of (event frame, odometry pose).

On-disk layout (all little-endian)::

    magic      4s   b"EVTR"
    version    u16
    header     K u32, width u16, height u16, tau_us u32,
               delta_d_mm u32, delta_alpha_mrad u32, fov_mdeg u32
    K records  pose 3 x f64 (x, y, theta), then height rows of
               ceil(width / 8) bytes of packed pixels
    crc32      u32 over header and records

The header stores the recording intervals and field of view in integer
milli-units, so those three values round-trip at that resolution; frames and
poses round-trip exactly.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from evtr.correlation import SearchSpace
from evtr.events import DEFAULT_TAU_US, EventFrame
from evtr.geometry import Pose2D, wrap_angle

MAGIC = b"EVTR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<IHHIIII")
_POSE = struct.Struct("<3d")


class MapFormatError(ValueError):
    """Bad magic or unsupported format version."""


class MapTruncatedError(MapFormatError):
    """File ends before all declared records were read."""

    def __init__(self, message: str, node_index: int | None = None):
        super().__init__(message)
        self.node_index = node_index


class MapChecksumError(MapFormatError):
    """Payload does not match the stored CRC32."""


@dataclass(frozen=True, eq=False)
class MapNode:
    frame: EventFrame
    pose: Pose2D
    index: int

    def __eq__(self, other: object) -> bool:
        # window timestamps are not persisted; pixels, pose and index are
        if not isinstance(other, MapNode):
            return NotImplemented
        return (self.index == other.index and self.pose == other.pose
                and self.frame.shape == other.frame.shape
                and np.array_equal(self.frame.bits, other.frame.bits))


@dataclass(eq=False)
class TopometricMap:
    """Nodes recorded during teaching plus the recording geometry.

    Mutable while teaching (single writer), treated as read-only afterwards.
    """

    width: int = 320
    height: int = 180
    tau_us: int = DEFAULT_TAU_US
    delta_d: float = 0.2
    delta_alpha: float = math.radians(15.0)
    fov_deg: float = 36.0
    nodes: list[MapNode] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.delta_d <= 0 or self.delta_alpha <= 0:
            raise ValueError("recording intervals must be positive")

    def _header(self) -> tuple:
        return (self.width, self.height, self.tau_us, round(self.delta_d * 1000),
                round(self.delta_alpha * 1000), round(self.fov_deg * 1000))

    def __eq__(self, other: object) -> bool:
        # geometry compares at header resolution, nodes exactly
        if not isinstance(other, TopometricMap):
            return NotImplemented
        return self._header() == other._header() and self.nodes == other.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, k: int) -> MapNode:
        return self.nodes[k]

    @property
    def poses(self) -> list[Pose2D]:
        return [n.pose for n in self.nodes]

    def record(self, frame: EventFrame, pose: Pose2D) -> MapNode:
        """Append a node; recording policy lives in :func:`should_record`."""
        if (frame.width, frame.height) != (self.width, self.height):
            raise ValueError(
                f"frame is {frame.width}x{frame.height}, map stores {self.width}x{self.height}")
        node = MapNode(frame, pose, len(self.nodes))
        self.nodes.append(node)
        return node

    def search_space(self, k: int, s: int) -> SearchSpace:
        """Frames ``k - s .. k + s`` clamped to the map."""
        if not self.nodes:
            raise RuntimeError("map is empty")
        if not 0 <= k < len(self.nodes):
            raise IndexError(f"goal index {k} outside map of {len(self.nodes)} nodes")
        if s < 0:
            raise ValueError("search half-width must be non-negative")
        lo, hi = max(0, k - s), min(len(self.nodes) - 1, k + s)
        idx = tuple(range(lo, hi + 1))
        return SearchSpace(tuple(self.nodes[j].frame for j in idx), idx, k, s)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        payload = bytearray(_HEADER.pack(len(self.nodes), *self._header()))
        for node in self.nodes:
            payload += _POSE.pack(*node.pose.as_tuple())
            payload += node.frame.bits.tobytes()
        head = MAGIC + struct.pack("<H", FORMAT_VERSION)
        return head + bytes(payload) + struct.pack("<I", zlib.crc32(payload))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TopometricMap":
        return cls.from_bytes(Path(path).read_bytes(), name=str(path))

    @classmethod
    def from_bytes(cls, blob: bytes, name: str = "<bytes>") -> "TopometricMap":
        if len(blob) < 6 or blob[:4] != MAGIC:
            raise MapFormatError(f"{name}: not an EVTR map (bad magic)")
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != FORMAT_VERSION:
            raise MapFormatError(f"{name}: unsupported map format version {version}")
        pos = 6
        if len(blob) < pos + _HEADER.size:
            raise MapTruncatedError(f"{name}: truncated header")
        count, width, height, tau, dd_mm, da_mrad, fov_mdeg = _HEADER.unpack_from(blob, pos)
        pos += _HEADER.size
        row_bytes = (width + 7) // 8
        record_size = _POSE.size + height * row_bytes
        m = cls(width, height, tau, dd_mm / 1000, da_mrad / 1000, fov_mdeg / 1000)
        for k in range(count):
            if len(blob) < pos + record_size:
                raise MapTruncatedError(f"{name}: file truncated in node {k}", node_index=k)
            x, y, theta = _POSE.unpack_from(blob, pos)
            bits = np.frombuffer(blob, dtype=np.uint8, count=height * row_bytes,
                                 offset=pos + _POSE.size).reshape(height, row_bytes)
            pos += record_size
            m.nodes.append(MapNode(EventFrame(width, height, 0, tau, bits), Pose2D(x, y, theta), k))
        if len(blob) < pos + 4:
            raise MapTruncatedError(f"{name}: missing checksum")
        (stored,) = struct.unpack_from("<I", blob, pos)
        if zlib.crc32(blob[6:pos]) != stored:
            raise MapChecksumError(f"{name}: checksum mismatch")
        if len(blob) != pos + 4:
            raise MapFormatError(f"{name}: {len(blob) - pos - 4} trailing bytes")
        return m


def should_record(last_pose: Pose2D, current_pose: Pose2D, delta_d: float, delta_alpha: float) -> bool:
    """True once the robot has moved ``delta_d`` meters or turned ``delta_alpha`` radians."""
    moved = math.hypot(current_pose.x - last_pose.x, current_pose.y - last_pose.y)
    turned = abs(wrap_angle(current_pose.theta - last_pose.theta))
    return moved >= delta_d or turned >= delta_alpha
