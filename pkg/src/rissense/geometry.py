"""Scene layout: RIS element grid, element groups, Tx/Rx antennas and the
space-of-interest block grid.

Coordinate frame: origin at the RIS center, RIS in the y-z plane, +x is the
RIS normal pointing into the room, +z points up.

Blocks are indexed x-fastest, then y, then z::

    m = ix + Mx * (iy + My * iz)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def _default_tx(distance: float = 1.2, azimuth_deg: float = 60.0) -> tuple:
    a = np.deg2rad(azimuth_deg)
    return (distance * np.cos(a), distance * np.sin(a), 0.0)


@dataclass(frozen=True)
class SceneGeometry:
    """Immutable description of the sensing scene.

    ``rx_position=None`` places the Rx 0.05 m below the RIS bottom edge on
    the RIS plane.
    """

    ris_rows: int = 48
    ris_cols: int = 48
    element_pitch: float = 0.015
    group_rows: int = 4
    group_cols: int = 4
    tx_position: tuple = field(default_factory=_default_tx)
    rx_position: tuple | None = None
    soi_origin: tuple = (1.0, -0.5, -0.8)
    soi_extent: tuple = (0.4, 1.0, 1.6)
    block_side: float = 0.2
    block_counts: tuple = (2, 5, 8)

    def __post_init__(self):
        for name in ("ris_rows", "ris_cols", "group_rows", "group_cols"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.ris_rows % self.group_rows or self.ris_cols % self.group_cols:
            raise ValueError(
                f"{self.ris_rows}x{self.ris_cols} elements cannot be tiled by "
                f"{self.group_rows}x{self.group_cols} groups")
        if self.element_pitch <= 0 or self.block_side <= 0:
            raise ValueError("element_pitch and block_side must be positive")
        if len(self.block_counts) != 3 or min(self.block_counts) < 1:
            raise ValueError("block_counts must be three positive integers")
        for axis, (count, extent) in enumerate(zip(self.block_counts, self.soi_extent)):
            if not np.isclose(count * self.block_side, extent, rtol=1e-9, atol=1e-12):
                raise ValueError(
                    f"axis {'xyz'[axis]}: {count} blocks of side {self.block_side} "
                    f"do not cover extent {extent}")
        object.__setattr__(self, "tx_position", tuple(float(v) for v in self.tx_position))
        object.__setattr__(self, "soi_origin", tuple(float(v) for v in self.soi_origin))
        object.__setattr__(self, "soi_extent", tuple(float(v) for v in self.soi_extent))
        object.__setattr__(self, "block_counts", tuple(int(v) for v in self.block_counts))
        if self.rx_position is None:
            rx = (0.0, 0.0, -self.ris_rows * self.element_pitch / 2 - 0.05)
            object.__setattr__(self, "rx_position", rx)
        else:
            object.__setattr__(self, "rx_position", tuple(float(v) for v in self.rx_position))
        if self.rx_position[2] >= -self.ris_rows * self.element_pitch / 2:
            raise ValueError("rx_position must lie below the RIS bottom edge")

    @property
    def n_elements(self) -> int:
        return self.ris_rows * self.ris_cols

    @property
    def n_groups(self) -> int:
        return self.group_rows * self.group_cols

    @property
    def group_size(self) -> int:
        return self.n_elements // self.n_groups

    @property
    def n_blocks(self) -> int:
        mx, my, mz = self.block_counts
        return mx * my * mz

    @property
    def los_distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.tx_position, self.rx_position)))


def _check_index(value: int, upper: int, what: str) -> int:
    if not 0 <= value < upper:
        raise IndexError(f"{what} index {value} out of range [0, {upper})")
    return int(value)


def element_positions(scene: SceneGeometry) -> np.ndarray:
    """Centers of all elements, shape (N, 3), row-major from the top-left."""
    rows, cols, p = scene.ris_rows, scene.ris_cols, scene.element_pitch
    r, c = np.divmod(np.arange(scene.n_elements), cols)
    y = (c - (cols - 1) / 2) * p
    z = ((rows - 1) / 2 - r) * p
    return np.column_stack([np.zeros_like(y), y, z])


def element_position(scene: SceneGeometry, n: int) -> np.ndarray:
    _check_index(n, scene.n_elements, "element")
    return element_positions(scene)[n]


def element_groups(scene: SceneGeometry) -> np.ndarray:
    """Group label of every element; groups are rectangular tiles, row-major."""
    tile_r = scene.ris_rows // scene.group_rows
    tile_c = scene.ris_cols // scene.group_cols
    r, c = np.divmod(np.arange(scene.n_elements), scene.ris_cols)
    return (r // tile_r) * scene.group_cols + c // tile_c


def group_members(scene: SceneGeometry) -> list[np.ndarray]:
    labels = element_groups(scene)
    return [np.flatnonzero(labels == g) for g in range(scene.n_groups)]


def block_centers(scene: SceneGeometry) -> np.ndarray:
    """Centers of all space blocks, shape (M, 3), x-fastest ordering."""
    mx, my, mz = scene.block_counts
    iz, iy, ix = np.meshgrid(np.arange(mz), np.arange(my), np.arange(mx), indexing="ij")
    idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
    return np.asarray(scene.soi_origin) + (idx + 0.5) * scene.block_side


def block_center(scene: SceneGeometry, m: int) -> np.ndarray:
    _check_index(m, scene.n_blocks, "block")
    return block_centers(scene)[m]


def block_index(scene: SceneGeometry, point) -> int:
    """Index of the block containing ``point`` (inverse of :func:`block_center`)."""
    rel = (np.asarray(point, dtype=float) - scene.soi_origin) / scene.block_side
    ix, iy, iz = np.floor(rel).astype(int)
    mx, my, mz = scene.block_counts
    if not (0 <= ix < mx and 0 <= iy < my and 0 <= iz < mz):
        raise IndexError(f"point {tuple(point)} lies outside the space of interest")
    return int(ix + mx * (iy + my * iz))


def block_grid_index(scene: SceneGeometry, ix: int, iy: int, iz: int) -> int:
    mx, my, mz = scene.block_counts
    if not (0 <= ix < mx and 0 <= iy < my and 0 <= iz < mz):
        raise IndexError(f"grid cell ({ix}, {iy}, {iz}) outside {scene.block_counts}")
    return ix + mx * (iy + my * iz)


def path_distance_matrices(scene: SceneGeometry) -> tuple[np.ndarray, np.ndarray]:
    """All Tx-element distances ``d_n`` (N,) and element-block-Rx path
    lengths ``d_nm`` (N, M)."""
    el = element_positions(scene)
    bl = block_centers(scene)
    d_n = np.linalg.norm(el - np.asarray(scene.tx_position), axis=1)
    to_block = np.linalg.norm(el[:, None, :] - bl[None, :, :], axis=2)
    block_rx = np.linalg.norm(bl - np.asarray(scene.rx_position), axis=1)
    return d_n, to_block + block_rx[None, :]


def path_distances(scene: SceneGeometry, n: int, m: int) -> tuple[float, float]:
    el = element_position(scene, n)
    bl = block_center(scene, m)
    d_n = np.linalg.norm(np.asarray(scene.tx_position) - el)
    d_nm = np.linalg.norm(el - bl) + np.linalg.norm(bl - np.asarray(scene.rx_position))
    return float(d_n), float(d_nm)


def direction_angles(vectors: np.ndarray) -> np.ndarray:
    """(polar-from-normal, azimuth) in degrees for direction vectors (..., 3).

    The polar angle is measured from the RIS normal +x; the azimuth is the
    angle of the in-plane projection, measured from +y toward +z.
    """
    v = np.asarray(vectors, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0):
        raise ValueError("degenerate zero-length direction")
    polar = np.degrees(np.arccos(np.clip(v[..., 0] / norm, -1.0, 1.0)))
    azimuth = np.degrees(np.arctan2(v[..., 2], v[..., 1]))
    return np.stack([polar, azimuth], axis=-1)


def reflection_angle_matrices(scene: SceneGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Incidence angles (N, 2) and reflection angles (N, M, 2) in degrees."""
    el = element_positions(scene)
    bl = block_centers(scene)
    theta_i = direction_angles(np.asarray(scene.tx_position) - el)
    theta_r = direction_angles(bl[None, :, :] - el[:, None, :])
    return theta_i, theta_r


def reflection_angles(scene: SceneGeometry, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    el = element_position(scene, n)
    bl = block_center(scene, m)
    return (direction_angles(np.asarray(scene.tx_position) - el),
            direction_angles(bl - el))
