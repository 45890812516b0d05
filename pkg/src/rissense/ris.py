"""RIS element states, reflection coefficients and configuration matrices.

A configuration matrix holds K frames; each frame gives, for every one of the
L groups, the fraction of the frame spent in each of the N_a states. Fractions
are stored normalized (each group row sums to one); the frame length is kept
as metadata only.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class StateTable:
    """Normal-direction (amplitude ratio, phase shift) of each element state."""

    amplitudes: tuple = (0.97, 0.97, 0.92, 0.88)
    phases: tuple = (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4)
    pattern_exponent: float = 0.0

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        phases = tuple(float(p) for p in self.phases)
        if len(amps) != len(phases):
            raise ValueError("amplitudes and phases differ in length")
        if len(amps) < 2:
            raise ValueError("a state table needs at least two states")
        if any(not 0 < a <= 1 for a in amps):
            raise ValueError("amplitude ratios must lie in (0, 1]")
        if any(not 0 <= p < 2 * np.pi for p in phases):
            raise ValueError("phase shifts must lie in [0, 2*pi)")
        if self.pattern_exponent < 0:
            raise ValueError("pattern_exponent must be non-negative")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)

    @property
    def n_states(self) -> int:
        return len(self.amplitudes)

    @property
    def coefficients(self) -> np.ndarray:
        """Normal-direction complex reflection coefficient of every state."""
        return np.asarray(self.amplitudes) * np.exp(1j * np.asarray(self.phases))


def angular_pattern(theta_r_polar_deg, exponent: float) -> np.ndarray:
    """cos^q of the reflection polar angle, clipped at zero behind the surface."""
    c = np.clip(np.cos(np.deg2rad(theta_r_polar_deg)), 0.0, None)
    if exponent == 0:
        return np.ones_like(c)
    return c ** exponent


def reflection_coefficient(table: StateTable, theta_i, theta_r, state_index: int) -> complex:
    if not 0 <= state_index < table.n_states:
        raise IndexError(f"state index {state_index} out of range [0, {table.n_states})")
    # The incidence angle is accepted for interface completeness; the
    # tabulated values already correspond to the design incidence.
    del theta_i
    gain = angular_pattern(np.asarray(theta_r, dtype=float)[0], table.pattern_exponent)
    return complex(table.coefficients[state_index] * gain)


@dataclass(frozen=True, eq=False)
class ConfigurationMatrix:
    """K x (L * N_a) matrix of normalized state durations.

    Column ``l * n_states + i`` is the share of the frame that group ``l``
    spends in state ``i``.
    """

    durations: np.ndarray
    n_groups: int
    n_states: int
    frame_length: float = 1.0
    # set False only for intermediate, possibly infeasible matrices
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        d = np.array(self.durations, dtype=float, copy=True)
        if d.ndim == 1:
            d = d[None, :]
        if d.ndim != 2 or d.shape[1] != self.n_groups * self.n_states or d.shape[0] < 1:
            raise ValueError(
                f"durations of shape {d.shape} do not match L={self.n_groups}, "
                f"N_a={self.n_states}")
        d.setflags(write=False)
        object.__setattr__(self, "durations", d)
        if self.check:
            report = validate_configuration(self)
            if not report.ok:
                raise ValueError(f"infeasible configuration matrix: {report}")

    @property
    def n_frames(self) -> int:
        return self.durations.shape[0]

    @property
    def shape(self) -> tuple:
        return self.durations.shape

    def grouped(self) -> np.ndarray:
        """View of the durations as (K, L, N_a)."""
        return self.durations.reshape(self.n_frames, self.n_groups, self.n_states)

    def with_frame(self, k: int, t_k) -> "ConfigurationMatrix":
        d = self.durations.copy()
        d[k] = t_k
        return ConfigurationMatrix(d, self.n_groups, self.n_states, self.frame_length)

    def __eq__(self, other):
        if not isinstance(other, ConfigurationMatrix):
            return NotImplemented
        return (self.n_groups == other.n_groups and self.n_states == other.n_states
                and np.array_equal(self.durations, other.durations))

    def __hash__(self):
        return hash(self.durations.tobytes())


@dataclass
class ViolationReport:
    off_simplex: list = field(default_factory=list)   # (k, l, row_sum, deficit)
    negative: list = field(default_factory=list)      # (k, l, i, value)

    @property
    def ok(self) -> bool:
        return not self.off_simplex and not self.negative

    def __str__(self):
        if self.ok:
            return "ok"
        parts = [f"row (k={k}, l={l}) sums to {s:.12g} (deficit {d:.3g})"
                 for k, l, s, d in self.off_simplex]
        parts += [f"entry (k={k}, l={l}, i={i}) = {v:.3g} < 0"
                  for k, l, i, v in self.negative]
        return "; ".join(parts)


def validate_configuration(T: ConfigurationMatrix, tol: float = SIMPLEX_TOL) -> ViolationReport:
    g = np.asarray(T.durations).reshape(-1, T.n_groups, T.n_states)
    report = ViolationReport()
    sums = g.sum(axis=2)
    for k, l in zip(*np.nonzero(np.abs(sums - 1.0) > tol)):
        report.off_simplex.append((int(k), int(l), float(sums[k, l]), float(1.0 - sums[k, l])))
    for k, l, i in zip(*np.nonzero(g < -tol)):
        report.negative.append((int(k), int(l), int(i), float(g[k, l, i])))
    if not np.all(np.isfinite(g)):
        report.negative.append((-1, -1, -1, float("nan")))
    return report


def random_configuration(K: int, L: int, N_a: int, seed) -> ConfigurationMatrix:
    """Each group row drawn uniformly on the simplex (flat Dirichlet)."""
    if min(K, L, N_a) < 1:
        raise ValueError("K, L and N_a must all be >= 1")
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(N_a), size=(K, L))
    return ConfigurationMatrix(rows.reshape(K, L * N_a), L, N_a)


def fixed_state_configuration(K: int, L: int, N_a: int, state: int = 0) -> ConfigurationMatrix:
    """Every group of every frame held in one state for the whole frame."""
    d = np.zeros((K, L, N_a))
    d[:, :, state] = 1.0
    return ConfigurationMatrix(d.reshape(K, L * N_a), L, N_a)


def uniform_configuration(K: int, L: int, N_a: int) -> ConfigurationMatrix:
    return ConfigurationMatrix(np.full((K, L * N_a), 1.0 / N_a), L, N_a)


# -- plain-text artifact ---------------------------------------------------
#
#   # rissense configuration-matrix v1
#   # frames=K groups=L states=N_a frame_length=delta
#   t_11 t_12 ... t_1(L*N_a)
#   ...

_T_MAGIC = "# rissense configuration-matrix v1"


def dumps_configuration(T: ConfigurationMatrix) -> str:
    out = io.StringIO()
    out.write(_T_MAGIC + "\n")
    out.write(f"# frames={T.n_frames} groups={T.n_groups} states={T.n_states} "
              f"frame_length={T.frame_length!r}\n")
    for row in T.durations:
        out.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    return out.getvalue()


def loads_configuration(text: str) -> ConfigurationMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _T_MAGIC:
        raise ValueError("not a configuration-matrix artifact (bad magic line)")
    if len(lines) < 2 or not lines[1].startswith("#"):
        raise ValueError("configuration-matrix artifact is missing its header")
    meta = dict(tok.split("=", 1) for tok in lines[1][1:].split())
    try:
        K, L, N_a = int(meta["frames"]), int(meta["groups"]), int(meta["states"])
        delta = float(meta.get("frame_length", 1.0))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed configuration-matrix header: {lines[1]!r}") from exc
    rows = []
    for lineno, ln in enumerate(lines[2:], start=3):
        try:
            rows.append([float(v) for v in ln.split()])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: non-numeric field") from exc
    if len(rows) != K or any(len(r) != L * N_a for r in rows):
        raise ValueError(f"expected {K} rows of {L * N_a} fields")
    return ConfigurationMatrix(np.array(rows), L, N_a, delta)


def save_configuration(T: ConfigurationMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_configuration(T))


def load_configuration(path) -> ConfigurationMatrix:
    with open(path) as fh:
        return loads_configuration(fh.read())


def configuration_hash(T: ConfigurationMatrix) -> str:
    return hashlib.sha256(dumps_configuration(T).encode()).hexdigest()[:16]
