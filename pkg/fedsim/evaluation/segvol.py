"""
Label volumes and the SEGVOL file format.

    SEGVOL v1 nx ny nz sx sy sz\n
    nx*ny*nz bytes of uint8 labels, x varying fastest
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fedsim.errors import VolumeFormatError

VALID_LABELS = (0, 1, 2, 4)
SEGVOL_MAGIC = "SEGVOL"
SEGVOL_VERSION = "v1"


def volume_diagonal(dims, spacing) -> float:
    extent = np.asarray(dims, dtype=np.float64) * np.asarray(spacing, dtype=np.float64)
    return float(np.sqrt(np.sum(extent**2)))


@dataclass(frozen=True, eq=False)
class LabelVolume:
    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        raw = np.asarray(self.voxels)
        if raw.ndim != 3 or min(raw.shape) < 1:
            raise VolumeFormatError(f"label volume must be a non-empty 3D grid, got shape {raw.shape}")
        if raw.dtype.kind not in "biu":
            raise VolumeFormatError(f"labels must be integers, got dtype {raw.dtype}")
        # checked before the uint8 cast, which would wrap 260 to 4
        if not np.all(np.isin(raw, VALID_LABELS)):
            bad = sorted(set(np.unique(raw).tolist()) - set(VALID_LABELS))
            raise VolumeFormatError(f"labels {bad} are not in {VALID_LABELS}")
        voxels = raw.astype(np.uint8)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
            raise VolumeFormatError(f"spacing must be three positive reals, got {self.spacing}")
        voxels.setflags(write=False)
        object.__setattr__(self, "voxels", voxels)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    @property
    def diagonal(self) -> float:
        """Physical length of the volume diagonal in mm."""
        return volume_diagonal(self.dims, self.spacing)


def write_segvol(volume: LabelVolume, path: str | Path) -> Path:
    path = Path(path)
    nx, ny, nz = volume.dims
    sx, sy, sz = (repr(s) for s in volume.spacing)
    header = f"{SEGVOL_MAGIC} {SEGVOL_VERSION} {nx} {ny} {nz} {sx} {sy} {sz}\n".encode("ascii")
    path.write_bytes(header + volume.voxels.tobytes(order="F"))
    return path


def read_segvol(path: str | Path) -> LabelVolume:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise VolumeFormatError(f"cannot read {path}: {exc}") from exc
    end = blob.find(b"\n")
    if end < 0:
        raise VolumeFormatError(f"{path}: missing SEGVOL header line")
    fields = blob[:end].decode("ascii", errors="replace").split()
    if len(fields) != 8 or fields[0] != SEGVOL_MAGIC or fields[1] != SEGVOL_VERSION:
        raise VolumeFormatError(f"{path}: bad header {' '.join(fields)!r}")
    try:
        dims = tuple(int(f) for f in fields[2:5])
        spacing = tuple(float(f) for f in fields[5:8])
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: bad header values: {exc}") from exc
    if min(dims) < 1:
        raise VolumeFormatError(f"{path}: dimensions must be positive, got {dims}")
    payload = blob[end + 1:]
    expected = dims[0] * dims[1] * dims[2]
    if len(payload) != expected:
        raise VolumeFormatError(f"{path}: {len(payload)} voxel bytes, header declares {expected}")
    voxels = np.frombuffer(payload, dtype=np.uint8).reshape(dims, order="F")
    return LabelVolume(voxels, spacing)
