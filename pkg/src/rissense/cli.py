"""Command-line experiment runner.

Subcommands::

    optimize-config   build the dictionary, run FCAO, write T* and the mu history
    gen-dataset       synthesize labeled train/test sets for a stored T
    train-eval        train the decision network and evaluate it on the test set
    compare           optimized vs random vs non-configurable, one row each
    coherence-report  pairwise coherences of the measurement matrix for a stored T

Every run is fully determined by the config file and the seed. Artifacts
carry hashes of the configuration matrix and the sensing dictionary, and
downstream commands refuse inputs whose hashes do not match.

Exit codes: 0 success, 2 config error, 3 artifact error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import channel as ch
from . import coherence as coh
from . import fcao
from . import recognizer as rec
from . import ris
from . import scenes
from .geometry import SceneGeometry

log = logging.getLogger("rissense")

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class ArtifactError(ValueError):
    pass


# -- configuration ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    scene: SceneGeometry = field(default_factory=SceneGeometry)
    radio: ch.RadioParams = field(default_factory=ch.RadioParams)
    states: ris.StateTable = field(default_factory=ris.StateTable)
    n_frames: int = 10
    fcao: fcao.FcaoParams = field(default_factory=fcao.FcaoParams)
    dataset: scenes.DatasetSpec = field(default_factory=scenes.DatasetSpec)
    network: rec.TrainOptions = field(default_factory=rec.TrainOptions)
    learning_rate: float = 0.01
    cost: rec.CostModel = field(default_factory=lambda: rec.CostModel.zero_one(4))
    seed: int = 0
    out_dir: str = "out"

    @property
    def n_groups(self) -> int:
        return self.scene.n_groups

    @property
    def n_states(self) -> int:
        return self.states.n_states


_TUPLE_FIELDS = {"tx_position", "rx_position", "soi_origin", "soi_extent", "block_counts",
                 "amplitudes", "phases", "hidden"}


def _section(raw: dict, name: str, cls, drop=()):
    """Instantiate ``cls`` from ``raw[name]``; unknown keys are errors."""
    data = raw.pop(name, {})
    if not isinstance(data, dict):
        raise ConfigError(f"[{name}] must be a table")
    allowed = {f.name for f in fields(cls)} - set(drop)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    kwargs = {k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
              for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def parse_config(text: str) -> ExperimentConfig:
    """Strictly parse a TOML experiment config.

    Sections: ``[scene]``, ``[radio]``, ``[states]``, ``[frames]``, ``[fcao]``,
    ``[dataset]``, ``[network]``, ``[cost]``; top-level keys ``seed`` and
    ``out_dir``. ``[frames]`` holds ``K`` and may restate ``L``, ``N_a`` and
    ``M``, which must then agree with the scene and state table.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    scene = _section(raw, "scene", SceneGeometry)
    radio = _section(raw, "radio", ch.RadioParams)
    states = _section(raw, "states", ris.StateTable)
    fp = _section(raw, "fcao", fcao.FcaoParams)
    ds = _section(raw, "dataset", scenes.DatasetSpec, drop=("seed",))

    net = dict(raw.pop("network", {}))
    lr = net.pop("learning_rate", 0.01)
    if not isinstance(lr, (int, float)) or not 0 < lr < 1:
        raise ConfigError("[network] learning_rate must lie in (0, 1)")
    raw["network"] = net
    opts = _section(raw, "network", rec.TrainOptions)

    frames = raw.pop("frames", {})
    unknown = sorted(set(frames) - {"K", "L", "N_a", "M"})
    if unknown:
        raise ConfigError(f"[frames] unknown key(s): {', '.join(unknown)}")
    K = frames.get("K", 10)
    if not isinstance(K, int) or K < 2:
        raise ConfigError("[frames] K must be an integer >= 2")
    for key, actual in (("L", scene.n_groups), ("N_a", states.n_states), ("M", scene.n_blocks)):
        if key in frames and frames[key] != actual:
            raise ConfigError(f"[frames] {key}={frames[key]} disagrees with the "
                              f"scene/state table ({actual})")

    cost_raw = raw.pop("cost", {})
    unknown = sorted(set(cost_raw) - {"matrix", "priors"})
    if unknown:
        raise ConfigError(f"[cost] unknown key(s): {', '.join(unknown)}")
    n_post = 4
    try:
        chi = np.array(cost_raw.get("matrix", 1.0 - np.eye(n_post)), dtype=float)
        cost = rec.CostModel(chi, cost_raw.get("priors"))
    except ValueError as exc:
        raise ConfigError(f"[cost] {exc}") from exc
    if cost.n_postures != n_post:
        raise ConfigError(f"[cost] matrix must be {n_post}x{n_post} (one row per posture)")

    seed = raw.pop("seed", 0)
    out_dir = raw.pop("out_dir", "out")
    if raw:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(raw))}")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return ExperimentConfig(scene, radio, states, K, fp, ds, opts, float(lr), cost, seed,
                            str(out_dir))


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# -- pipeline stages --------------------------------------------------------

def build_dictionary(cfg: ExperimentConfig) -> ch.SensingDictionary:
    return ch.build_dictionary(cfg.scene, cfg.states, cfg.radio)


def initial_configuration(cfg: ExperimentConfig) -> ris.ConfigurationMatrix:
    """Seeded random starting point; also serves as the random benchmark."""
    return ris.random_configuration(cfg.n_frames, cfg.n_groups, cfg.n_states, cfg.seed)


def optimize(cfg: ExperimentConfig, A: ch.SensingDictionary) -> fcao.FcaoResult:
    return fcao.fcao_optimize(initial_configuration(cfg), A, cfg.fcao, seed=cfg.seed)


def make_datasets(cfg: ExperimentConfig, T: ris.ConfigurationMatrix, A: ch.SensingDictionary):
    spec = replace(cfg.dataset, seed=cfg.seed)
    return scenes.generate_dataset(T, A, scenes.default_postures(cfg.scene), spec,
                                   cfg.radio, cfg.scene.los_distance)


def train_and_evaluate(cfg: ExperimentConfig, train: rec.LabeledDataset,
                       test: rec.LabeledDataset):
    if train.n_frames != cfg.n_frames or test.n_frames != cfg.n_frames:
        raise ArtifactError(f"datasets have {train.n_frames}/{test.n_frames} frames, "
                            f"config expects K={cfg.n_frames}")
    result = rec.train(train, cfg.cost, cfg.learning_rate, cfg.seed, cfg.network)
    return result, rec.evaluate(result.net, test, cfg.cost)


@dataclass
class CompareRow:
    case: str
    mu: float
    accuracy: float
    cost: float


def compare(cfg: ExperimentConfig, A: ch.SensingDictionary | None = None,
            T_opt: ris.ConfigurationMatrix | None = None) -> list[CompareRow]:
    """Optimized, random and non-configurable pipelines with shared seeds."""
    A = build_dictionary(cfg) if A is None else A
    T_rand = initial_configuration(cfg)
    if T_opt is None:
        T_opt = optimize(cfg, A).T
    T_fixed = ris.fixed_state_configuration(cfg.n_frames, cfg.n_groups, cfg.n_states, 0)
    rows = []
    for case, T in (("optimized", T_opt), ("random", T_rand), ("fixed", T_fixed)):
        train, test = make_datasets(cfg, T, A)
        _, report = train_and_evaluate(cfg, train, test)
        rows.append(CompareRow(case, coh.mu_of(T, A), report.accuracy, report.cost))
    return rows


def compare_csv(rows: list[CompareRow]) -> str:
    lines = ["case,mu,accuracy,psi_hat"]
    lines += [f"{r.case},{r.mu:.12g},{r.accuracy:.12g},{r.cost:.12g}" for r in rows]
    return "\n".join(lines) + "\n"


# -- artifact helpers -------------------------------------------------------

def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _read_configuration(path) -> ris.ConfigurationMatrix:
    try:
        return ris.load_configuration(path)
    except OSError as exc:
        raise ArtifactError(f"cannot read configuration matrix {path}: {exc}") from exc
    except ValueError as exc:
        raise ArtifactError(f"{path}: {exc}") from exc


def _check_configuration(T: ris.ConfigurationMatrix, cfg: ExperimentConfig, path) -> None:
    expected = (cfg.n_frames, cfg.n_groups, cfg.n_states)
    if (T.n_frames, T.n_groups, T.n_states) != expected:
        raise ArtifactError(f"{path}: configuration matrix is K,L,N_a="
                            f"{(T.n_frames, T.n_groups, T.n_states)}, config expects {expected}")


def _read_dataset(path, a_hash: str):
    try:
        ds, meta = scenes.loads_dataset(Path(path).read_text())
    except OSError as exc:
        raise ArtifactError(f"cannot read dataset {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise ArtifactError(f"{path}: {exc}") from exc
    if meta.get("a_hash") != a_hash:
        raise ArtifactError(f"{path}: dictionary hash {meta.get('a_hash')!r} does not match "
                            f"the config's dictionary ({a_hash})")
    return ds, meta


# -- subcommands ------------------------------------------------------------

def cmd_optimize_config(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out_dir)
    A = build_dictionary(cfg)
    res = optimize(cfg, A)
    _write(out / "T_opt.txt", ris.dumps_configuration(res.T))
    _write(out / "mu_history.csv", fcao.history_csv(res.history))
    print(f"mu {res.history[0][2]:.6f} -> {res.mu:.6f} after {res.history[-1][0]} iterations; "
          f"T hash {ris.configuration_hash(res.T)}")
    return EXIT_OK


def cmd_gen_dataset(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out_dir)
    t_path = Path(args.T) if args.T else out / "T_opt.txt"
    T = _read_configuration(t_path)
    _check_configuration(T, cfg, t_path)
    A = build_dictionary(cfg)
    train, test = make_datasets(cfg, T, A)
    t_hash, a_hash = ris.configuration_hash(T), ch.dictionary_hash(A)
    _write(out / "train.csv", scenes.dumps_dataset(train, t_hash, a_hash, cfg.seed))
    _write(out / "test.csv", scenes.dumps_dataset(test, t_hash, a_hash, cfg.seed))
    print(f"{len(train)} train / {len(test)} test rows; T hash {t_hash}; A hash {a_hash}")
    return EXIT_OK


def cmd_train_eval(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out_dir)
    a_hash = ch.dictionary_hash(build_dictionary(cfg))
    train, tm = _read_dataset(args.train or out / "train.csv", a_hash)
    test, sm = _read_dataset(args.test or out / "test.csv", a_hash)
    if tm.get("t_hash") != sm.get("t_hash"):
        raise ArtifactError("train and test sets come from different configuration matrices")
    result, report = train_and_evaluate(cfg, train, test)
    _write(out / "model.json", rec.dumps_model(result.net))
    _write(out / "report.csv", report.to_csv())
    print(f"accuracy {report.accuracy:.4f} psi_hat {report.cost:.4f} "
          f"epochs {result.epochs} final_loss {result.losses[-1]:.6g}")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    T_opt = None
    if args.T:
        T_opt = _read_configuration(args.T)
        _check_configuration(T_opt, cfg, args.T)
    text = compare_csv(compare(cfg, T_opt=T_opt))
    _write(Path(cfg.out_dir) / "compare.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_coherence_report(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out_dir)
    t_path = Path(args.T) if args.T else out / "T_opt.txt"
    T = _read_configuration(t_path)
    _check_configuration(T, cfg, t_path)
    text = coh.coherence_report(coh.measurement_matrix(T, build_dictionary(cfg)))
    _write(out / "coherence.csv", text)
    print(text.rstrip().splitlines()[-1])
    return EXIT_OK


COMMANDS = {
    "optimize-config": cmd_optimize_config,
    "gen-dataset": cmd_gen_dataset,
    "train-eval": cmd_train_eval,
    "compare": cmd_compare,
    "coherence-report": cmd_coherence_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config (defaults apply if omitted)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--noise", choices=("on", "off"), help="override dataset noise")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="rissense", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("optimize-config", parents=[common], help="run FCAO")
    g = sub.add_parser("gen-dataset", parents=[common], help="synthesize datasets")
    g.add_argument("--T", help="configuration matrix (default OUT/T_opt.txt)")
    t = sub.add_parser("train-eval", parents=[common], help="train and evaluate")
    t.add_argument("--train", help="training set (default OUT/train.csv)")
    t.add_argument("--test", help="test set (default OUT/test.csv)")
    c = sub.add_parser("compare", parents=[common], help="optimized vs random vs fixed")
    c.add_argument("--T", help="use this optimized matrix instead of running FCAO")
    r = sub.add_parser("coherence-report", parents=[common], help="pairwise coherences")
    r.add_argument("--T", help="configuration matrix (default OUT/T_opt.txt)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.noise is not None:
            cfg.dataset = replace(cfg.dataset, noise=args.noise == "on")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (FloatingPointError, coh.DegenerateColumnError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
