"""Sensing dictionary, direct LoS gain and per-frame measurement synthesis.

The reflected contribution of block ``m`` through group ``l`` in state ``i``
sums, over the elements of the group,

    lambda * r * sqrt(g_T,n * g_R,m) * exp(-2j*pi*(d_n + d_nm)/lambda)
    / (4*pi * d_n * d_nm)

and the K frame means are ``y = h_d P_t + P_t T A eta + h_rl P_t + sigma``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict

import numpy as np

from . import geometry as geo
from .ris import ConfigurationMatrix, StateTable, angular_pattern


@dataclass(frozen=True)
class RadioParams:
    """Link budget and noise parameters.

    When ``multipath_variance``/``noise_variance`` are ``None`` they are
    derived from ``snr_db`` by :func:`calibrate_noise`.
    """

    carrier_frequency: float = 3.198e9
    transmit_power: float = 1.0
    tx_gain_los: float = 1.0
    rx_gain_los: float = 1.0
    tx_gain: float = 1.0
    tx_half_beamwidth_deg: float = 30.0
    rx_gain: float = 1.0
    multipath_variance: float | None = None
    noise_variance: float | None = None
    snr_db: float = 20.0
    include_los: bool = True

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be positive")
        if self.transmit_power <= 0:
            raise ValueError("transmit_power must be positive")
        for name in ("tx_gain_los", "rx_gain_los", "tx_gain", "rx_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("multipath_variance", "noise_variance"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def wavelength(self) -> float:
        return geo.SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True, eq=False)
class SensingDictionary:
    """Complex (L * N_a) x M matrix; row ``l * N_a + i`` is group l, state i."""

    A: np.ndarray
    n_groups: int
    n_states: int
    carrier_frequency: float = 0.0
    scene_hash: str = ""

    def __post_init__(self):
        A = np.array(self.A, dtype=complex, copy=True)
        if A.ndim != 2 or A.shape[0] != self.n_groups * self.n_states:
            raise ValueError(f"dictionary shape {A.shape} does not match "
                             f"L={self.n_groups}, N_a={self.n_states}")
        if not np.all(np.isfinite(A)):
            raise ValueError("dictionary has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n_blocks(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple:
        return self.A.shape


@dataclass(frozen=True, eq=False)
class SpaceReflectionVector:
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=complex))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.eta)


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    y: np.ndarray
    seed: object = None
    noise: bool = False


def direct_los_gain(params: RadioParams, d_los: float) -> complex:
    if d_los <= 0:
        raise ValueError(f"LoS distance must be positive, got {d_los}")
    lam = params.wavelength
    return complex(lam / (4 * np.pi) * np.sqrt(params.tx_gain_los * params.rx_gain_los)
                   * np.exp(-2j * np.pi * d_los / lam) / d_los)


def tx_gains(scene: geo.SceneGeometry, params: RadioParams) -> np.ndarray:
    """Horn gain toward each element: flat main lobe aimed at the RIS center."""
    tx = np.asarray(scene.tx_position)
    to_el = geo.element_positions(scene) - tx
    boresight = -tx / np.linalg.norm(tx)
    cosang = to_el @ boresight / np.linalg.norm(to_el, axis=1)
    inside = cosang >= np.cos(np.deg2rad(params.tx_half_beamwidth_deg)) - 1e-12
    return np.where(inside, params.tx_gain, 0.0)


def element_block_gains(scene: geo.SceneGeometry, table: StateTable,
                        params: RadioParams) -> np.ndarray:
    """Per-(element, block) gain with a unit reflection coefficient, (N, M)."""
    lam = params.wavelength
    d_n, d_nm = geo.path_distance_matrices(scene)
    g = np.sqrt(tx_gains(scene, params)[:, None] * params.rx_gain)
    gain = lam * g * np.exp(-2j * np.pi * (d_n[:, None] + d_nm) / lam) \
        / (4 * np.pi * d_n[:, None] * d_nm)
    if table.pattern_exponent:
        _, theta_r = geo.reflection_angle_matrices(scene)
        gain = gain * angular_pattern(theta_r[..., 0], table.pattern_exponent)
    return gain


def build_dictionary(scene: geo.SceneGeometry, table: StateTable,
                     params: RadioParams) -> SensingDictionary:
    gain = element_block_gains(scene, table, params)
    labels = geo.element_groups(scene)
    L, M = scene.n_groups, scene.n_blocks
    per_group = np.zeros((L, M), dtype=complex)
    np.add.at(per_group, labels, gain)
    # the angular pattern is state-independent, so states only scale per_group
    A = (per_group[:, None, :] * table.coefficients[None, :, None]).reshape(L * table.n_states, M)
    return SensingDictionary(A, L, table.n_states, params.carrier_frequency,
                             scene_hash(scene, table, params))


def scene_hash(scene: geo.SceneGeometry, table: StateTable, params: RadioParams) -> str:
    blob = repr((asdict(scene), asdict(table), asdict(params))).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def reference_block_power(A: SensingDictionary, params: RadioParams) -> float:
    """Mean received power of one unit-reflectivity block with every group
    held in the first state."""
    first = np.asarray(A.A).reshape(A.n_groups, A.n_states, -1)[:, 0, :].sum(axis=0)
    return float(params.transmit_power ** 2 * np.mean(np.abs(first) ** 2))


def calibrate_noise(A: SensingDictionary, params: RadioParams) -> tuple[float, float]:
    """Resolve (multipath_variance, noise_variance).

    Unset variances are chosen so that the reference block power sits
    ``snr_db`` above the total per-frame disturbance, split evenly between
    the multipath and receiver-noise terms.
    """
    eps_rl, eps_n = params.multipath_variance, params.noise_variance
    if eps_rl is not None and eps_n is not None:
        return eps_rl, eps_n
    total = reference_block_power(A, params) / 10 ** (params.snr_db / 10)
    if eps_rl is None:
        eps_rl = total / 2 / params.transmit_power ** 2
    if eps_n is None:
        eps_n = total / 2
    return float(eps_rl), float(eps_n)


def complex_normal(rng: np.random.Generator, variance: float, size) -> np.ndarray:
    s = np.sqrt(variance / 2)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _check_shapes(T: ConfigurationMatrix, A: SensingDictionary, n_eta: int):
    if T.durations.shape[1] != A.A.shape[0]:
        raise ValueError(f"configuration width {T.durations.shape[1]} != "
                         f"dictionary rows {A.A.shape[0]}")
    if n_eta != A.n_blocks:
        raise ValueError(f"reflection vector length {n_eta} != M={A.n_blocks}")


def synthesize_batch(T: ConfigurationMatrix, A: SensingDictionary, etas: np.ndarray,
                     params: RadioParams, d_los: float, noise: bool,
                     rng: np.random.Generator | None = None,
                     variances: tuple[float, float] | None = None) -> np.ndarray:
    """Measurement vectors for a batch of reflection vectors, shape (B, K)."""
    etas = np.atleast_2d(np.asarray(etas, dtype=complex))
    _check_shapes(T, A, etas.shape[1])
    P = params.transmit_power
    offset = direct_los_gain(params, d_los) * P if params.include_los else 0.0
    y = offset + P * (etas @ (T.durations @ A.A).T)
    if noise:
        if rng is None:
            raise ValueError("noisy synthesis needs a random generator")
        eps_rl, eps_n = variances if variances is not None else calibrate_noise(A, params)
        y = y + P * complex_normal(rng, eps_rl, y.shape) + complex_normal(rng, eps_n, y.shape)
    return y


def synthesize_measurement(T: ConfigurationMatrix, A: SensingDictionary,
                           eta: SpaceReflectionVector | np.ndarray, params: RadioParams,
                           d_los: float, noise: bool = False, seed=None) -> MeasurementVector:
    eta = eta.eta if isinstance(eta, SpaceReflectionVector) else np.asarray(eta, dtype=complex)
    if eta.ndim != 1:
        raise ValueError("eta must be a vector")
    rng = np.random.default_rng(seed) if noise else None
    y = synthesize_batch(T, A, eta[None, :], params, d_los, noise, rng)[0]
    return MeasurementVector(y, seed, noise)


# -- binary artifact ------------------------------------------------------

def save_dictionary(A: SensingDictionary, path) -> None:
    np.savez(path, A=A.A, shape=np.array(A.shape), n_groups=A.n_groups,
             n_states=A.n_states, carrier_frequency=A.carrier_frequency,
             scene_hash=np.array(A.scene_hash), format=np.array("rissense-dictionary-v1"))


def load_dictionary(path) -> SensingDictionary:
    with np.load(path, allow_pickle=False) as f:
        if str(f["format"]) != "rissense-dictionary-v1":
            raise ValueError("not a sensing-dictionary artifact")
        A = f["A"]
        if tuple(f["shape"]) != A.shape:
            raise ValueError("dictionary header shape disagrees with payload")
        return SensingDictionary(A, int(f["n_groups"]), int(f["n_states"]),
                                 float(f["carrier_frequency"]), str(f["scene_hash"]))


def dictionary_hash(A: SensingDictionary) -> str:
    return hashlib.sha256(np.ascontiguousarray(A.A).tobytes()).hexdigest()[:16]
