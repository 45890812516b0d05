"""Synthetic posture scenes and labeled measurement datasets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .geometry import SceneGeometry, block_grid_index
from .recognizer import LabeledDataset
from .ris import ConfigurationMatrix


@dataclass(frozen=True)
class PostureSpec:
    """Occupied blocks of a posture and the per-sample reflectivity model."""

    name: str
    occupancy: tuple
    magnitude_range: tuple = (0.1, 0.5)
    phase_range: tuple = (0.0, 2 * np.pi)
    activation_prob: float = 0.7

    def __post_init__(self):
        occ = tuple(sorted({int(m) for m in self.occupancy}))
        if not occ:
            raise ValueError(f"posture {self.name!r} has an empty occupancy")
        lo, hi = self.magnitude_range
        if not 0 <= lo <= hi:
            raise ValueError("magnitude_range must satisfy 0 <= low <= high")
        if not 0 < self.activation_prob <= 1:
            raise ValueError("activation_prob must lie in (0, 1]")
        object.__setattr__(self, "occupancy", occ)


@dataclass(frozen=True)
class DatasetSpec:
    samples_per_class: int = 150
    n_train: int = 120
    n_test: int = 30
    noise: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        if self.n_train < 0 or self.n_test < 0 or self.n_train + self.n_test != self.samples_per_class:
            raise ValueError("n_train + n_test must equal samples_per_class")


def default_postures(scene: SceneGeometry) -> list[PostureSpec]:
    """Standing, sitting, bending and lying masks.

    On the 2 x 5 x 8 grid: standing is the 8-block column at y index 2;
    sitting the lower 5 blocks of it plus a knee block in front; bending the
    lower 4 plus two torso blocks in front; lying the 5 floor blocks along y.
    Other grids scale the heights proportionally.
    """
    mx, my, mz = scene.block_counts
    if mx < 2:
        raise ValueError("default postures need at least two block layers along x")
    c = my // 2
    cell = lambda ix, iy, iz: block_grid_index(scene, ix, iy, iz)  # noqa: E731
    column = lambda h: [cell(0, c, z) for z in range(h)]  # noqa: E731
    return [
        PostureSpec("standing", tuple(column(mz))),
        PostureSpec("sitting", tuple(column(math.ceil(5 * mz / 8)) + [cell(1, c, 2 * mz // 8)])),
        PostureSpec("bending", tuple(column(math.ceil(4 * mz / 8))
                                     + [cell(1, c, 3 * mz // 8), cell(1, c, 4 * mz // 8)])),
        PostureSpec("lying", tuple(cell(0, y, 0) for y in range(my))),
    ]


def posture_reflection_vector(spec: PostureSpec, n_blocks: int, seed=None) -> ch.SpaceReflectionVector:
    """Random sparse reflection vector supported inside the posture's mask.

    Each occupied block reflects with probability ``activation_prob``; if no
    block fires, one occupied block is switched on so the posture is never
    invisible.
    """
    if max(spec.occupancy) >= n_blocks:
        raise ValueError(f"posture {spec.name!r} occupies blocks outside the grid")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    occ = np.asarray(spec.occupancy)
    active = rng.random(occ.size) < spec.activation_prob
    if not active.any():
        active[rng.integers(occ.size)] = True
    mags = rng.uniform(*spec.magnitude_range, occ.size)
    phases = rng.uniform(*spec.phase_range, occ.size)
    eta = np.zeros(n_blocks, dtype=complex)
    eta[occ[active]] = mags[active] * np.exp(1j * phases[active])
    return ch.SpaceReflectionVector(eta)


def generate_dataset(T: ConfigurationMatrix, A: ch.SensingDictionary, postures, spec: DatasetSpec,
                     params: ch.RadioParams, d_los: float) -> tuple[LabeledDataset, LabeledDataset]:
    """Labeled (train, test) datasets; the first ``n_train`` samples of every
    class go to the training split.

    Sample ``s`` of class ``c`` draws its reflection vector and noise from the
    substream seeded by ``(seed, c, s)``.
    """
    if len(postures) < 2:
        raise ValueError("need at least two postures")
    variances = ch.calibrate_noise(A, params)
    train_y, train_l, test_y, test_l = [], [], [], []
    for c, posture in enumerate(postures):
        for s in range(spec.samples_per_class):
            rng = np.random.default_rng([spec.seed, c, s])
            eta = posture_reflection_vector(posture, A.n_blocks, rng)
            y = ch.synthesize_batch(T, A, eta.eta, params, d_los, spec.noise, rng, variances)[0]
            if s < spec.n_train:
                train_y.append(y)
                train_l.append(c)
            else:
                test_y.append(y)
                test_l.append(c)
    K = T.n_frames
    as_set = lambda ys, ls, split: LabeledDataset(  # noqa: E731
        np.array(ys).reshape(-1, K), np.array(ls, dtype=int), split)
    return as_set(train_y, train_l, "train"), as_set(test_y, test_l, "test")


# -- text artifact ------------------------------------------------------------
#
#   # rissense dataset v1
#   # split=train frames=K t_hash=... a_hash=... seed=...
#   label,re_1,im_1,...,re_K,im_K
#   0,...

_DS_MAGIC = "# rissense dataset v1"


def dumps_dataset(ds: LabeledDataset, t_hash: str = "", a_hash: str = "", seed=0) -> str:
    out = io.StringIO()
    out.write(_DS_MAGIC + "\n")
    out.write(f"# split={ds.split} frames={ds.n_frames} t_hash={t_hash} "
              f"a_hash={a_hash} seed={seed}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["label"] + [f"{p}_{k + 1}" for k in range(ds.n_frames) for p in ("re", "im")])
    for y, lab in zip(ds.Y, ds.labels):
        fields = np.empty(2 * y.size)
        fields[0::2], fields[1::2] = y.real, y.imag
        w.writerow([int(lab)] + [f"{v:.17g}" for v in fields])
    return out.getvalue()


def loads_dataset(text: str) -> tuple[LabeledDataset, dict]:
    """Parse a dataset artifact; returns the dataset and its header fields."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != _DS_MAGIC:
        raise ValueError("line 1: not a dataset artifact")
    if len(lines) < 3 or not lines[1].startswith("#"):
        raise ValueError("line 2: missing dataset header")
    meta = dict(tok.split("=", 1) for tok in lines[1][1:].split())
    K = int(meta["frames"])
    ys, labels = [], []
    for lineno, row in enumerate(csv.reader(lines[3:]), start=4):
        if not row:
            continue
        if len(row) != 2 * K + 1:
            raise ValueError(f"line {lineno}: expected {2 * K + 1} fields, got {len(row)}")
        try:
            labels.append(int(row[0]))
            v = np.array([float(f) for f in row[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        ys.append(v[0::2] + 1j * v[1::2])
    ds = LabeledDataset(np.array(ys).reshape(-1, K), np.array(labels, dtype=int),
                        meta.get("split", "train"))
    return ds, meta
