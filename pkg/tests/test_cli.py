import numpy as np
import pytest

from rissense import cli
from rissense import fcao
from rissense import ris
from rissense import scenes

SMALL = """
seed = 3

[scene]
ris_rows = 8
ris_cols = 8
group_rows = 2
group_cols = 2
soi_origin = [1.0, -0.5, -0.4]
soi_extent = [0.4, 1.0, 0.8]
block_counts = [2, 5, 4]

[frames]
K = 4
L = 4
N_a = 4
M = 40

[fcao]
max_outer_iterations = 6
n_al = 2
pattern_budget = 30

[dataset]
samples_per_class = 10
n_train = 8
n_test = 2

[network]
hidden = [8]
init = "scaled"
max_epochs = 15
patience = 3
learning_rate = 0.05
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(SMALL)
    return path


def run(config, out, *extra):
    return cli.main([extra[0], "--config", str(config), "--out", str(out), *extra[1:]])


def test_defaults_match_full_scale():
    cfg = cli.ExperimentConfig()
    assert (cfg.n_frames, cfg.n_groups, cfg.n_states, cfg.scene.n_blocks) == (10, 16, 4, 80)
    assert cli.parse_config("").n_frames == 10


def test_parse_config_sections(config):
    cfg = cli.load_config(config)
    assert cfg.seed == 3 and cfg.n_frames == 4 and cfg.n_groups == 4
    assert cfg.fcao.max_outer_iterations == 6
    assert cfg.network.hidden == (8,) and cfg.learning_rate == 0.05
    assert cfg.scene.block_counts == (2, 5, 4)


@pytest.mark.parametrize("snippet, field", [
    ("[scene]\nris_rowz = 4\n", "ris_rowz"),
    ("[fcao]\nbogus = 1\n", "bogus"),
    ("[frames]\nK = 10\nL = 9\n", "L=9"),
    ("[frames]\nM = 81\n", "M=81"),
    ("[frames]\nQ = 1\n", "Q"),
    ("[cost]\nmatrix = [[0, 1], [1, 0]]\n", "4x4"),
    ("[network]\nlearning_rate = 2.0\n", "learning_rate"),
    ("[dataset]\nseed = 4\n", "seed"),
    ("colour = 1\n", "colour"),
    ("[scene]\ngroup_rows = 5\n", "scene"),
    ("not toml ===", "TOML"),
])
def test_config_errors_name_the_field(tmp_path, capsys, snippet, field):
    path = tmp_path / "bad.toml"
    path.write_text(snippet)
    assert cli.main(["optimize-config", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["compare", "--config", str(tmp_path / "none.toml")]) == 2


def test_full_pipeline_and_determinism(config, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(config, out, "optimize-config") == 0
        assert run(config, out, "gen-dataset") == 0
        assert run(config, out, "train-eval") == 0
        assert run(config, out, "coherence-report") == 0
    for name in ("T_opt.txt", "mu_history.csv", "train.csv", "test.csv", "model.json",
                 "report.csv", "coherence.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name

    mus = [float(line.split(",")[2]) for line in (a / "mu_history.csv").read_text().splitlines()[1:]]
    assert all(y <= x for x, y in zip(mus, mus[1:]))
    T = ris.load_configuration(a / "T_opt.txt")
    assert ris.validate_configuration(T).ok
    train, meta = scenes.loads_dataset((a / "train.csv").read_text())
    assert len(train) == 32 and meta["t_hash"] == ris.configuration_hash(T)
    assert "# accuracy=" in (a / "report.csv").read_text()
    assert (a / "coherence.csv").read_text().rstrip().splitlines()[-1].startswith("# mu=")


def test_dataset_header_hash_tracks_T(config, tmp_path):
    cfg = cli.load_config(config)
    T1 = ris.random_configuration(4, 4, 4, 1)
    T2 = ris.random_configuration(4, 4, 4, 2)
    hashes = []
    for i, T in enumerate((T1, T2)):
        ris.save_configuration(T, tmp_path / f"T{i}.txt")
        out = tmp_path / f"o{i}"
        assert run(config, out, "gen-dataset", "--T", str(tmp_path / f"T{i}.txt")) == 0
        hashes.append(scenes.loads_dataset((out / "train.csv").read_text())[1]["t_hash"])
    assert hashes[0] != hashes[1]
    assert cfg.seed == 3


def test_noise_off_rerun_equality(config, tmp_path):
    ris.save_configuration(ris.random_configuration(4, 4, 4, 0), tmp_path / "T.txt")
    texts = []
    for out in ("n1", "n2"):
        assert run(config, tmp_path / out, "gen-dataset", "--T", str(tmp_path / "T.txt"),
                   "--noise", "off") == 0
        texts.append((tmp_path / out / "train.csv").read_text())
    assert texts[0] == texts[1]
    assert run(config, tmp_path / "n3", "gen-dataset", "--T", str(tmp_path / "T.txt"),
               "--noise", "on") == 0
    assert (tmp_path / "n3" / "train.csv").read_text() != texts[0]


def test_artifact_errors(config, tmp_path, capsys):
    out = tmp_path / "x"
    assert run(config, out, "gen-dataset") == 3                 # no T yet
    bad = tmp_path / "bad.txt"
    bad.write_text("garbage\n")
    assert run(config, out, "gen-dataset", "--T", str(bad)) == 3
    wrong = tmp_path / "wrong.txt"
    ris.save_configuration(ris.random_configuration(5, 4, 4, 0), wrong)
    assert run(config, out, "coherence-report", "--T", str(wrong)) == 3
    assert "K,L,N_a" in capsys.readouterr().err
    infeasible = ris.dumps_configuration(ris.random_configuration(4, 4, 4, 0)).replace("0.", "0.9", 3)
    (tmp_path / "inf.txt").write_text(infeasible)
    assert run(config, out, "gen-dataset", "--T", str(tmp_path / "inf.txt")) == 3


def test_train_eval_rejects_mismatched_or_malformed_data(config, tmp_path, capsys):
    ris.save_configuration(ris.random_configuration(4, 4, 4, 0), tmp_path / "T.txt")
    out = tmp_path / "d"
    assert run(config, out, "gen-dataset", "--T", str(tmp_path / "T.txt")) == 0
    text = (out / "train.csv").read_text()
    lines = text.splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0]
    (out / "broken.csv").write_text("\n".join(lines) + "\n")
    assert run(config, out, "train-eval", "--train", str(out / "broken.csv")) == 3
    assert "line 6" in capsys.readouterr().err
    meta_line = lines[1]
    swapped = text.replace(meta_line, meta_line.replace("a_hash=", "a_hash=ff"))
    (out / "other.csv").write_text(swapped)
    assert run(config, out, "train-eval", "--train", str(out / "other.csv")) == 3


def test_train_eval_on_separable_toy(tmp_path, capsys):
    # four well separated, noise-free point classes on a 2-frame scene
    cfg_text = SMALL.replace("K = 4", "K = 2").replace("max_epochs = 15", "max_epochs = 300")
    path = tmp_path / "toy.toml"
    path.write_text(cfg_text)
    cfg = cli.load_config(path)
    a_hash = cli.ch.dictionary_hash(cli.build_dictionary(cfg))
    rng = np.random.default_rng(0)
    centers = np.array([[3, 3], [-3, 3], [3, -3], [-3, -3]], dtype=complex)
    for split, n in (("train", 20), ("test", 5)):
        labels = np.repeat(np.arange(4), n)
        Y = centers[labels] + 0.1 * rng.normal(size=(4 * n, 2))
        ds = cli.rec.LabeledDataset(Y, labels, split)
        (tmp_path / f"{split}.csv").write_text(scenes.dumps_dataset(ds, "toy", a_hash, 0))
    assert cli.main(["train-eval", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert "accuracy 1.0000" in capsys.readouterr().out
    report = (tmp_path / "report.csv").read_text()
    assert "# accuracy=1\n" in report


def test_compare_three_rows(config, tmp_path, capsys):
    assert run(config, tmp_path, "compare") == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0] == "case,mu,accuracy,psi_hat"
    rows = [ln.split(",") for ln in lines[1:]]
    assert [r[0] for r in rows] == ["optimized", "random", "fixed"]
    mu = {r[0]: float(r[1]) for r in rows}
    assert mu["optimized"] <= mu["random"]
    assert mu["fixed"] == pytest.approx(1.0)
    assert capsys.readouterr().out == (tmp_path / "compare.csv").read_text()


def test_fixed_benchmark_is_one_hot_on_first_state():
    T = ris.fixed_state_configuration(3, 4, 4, 0)
    np.testing.assert_array_equal(T.grouped()[..., 0], 1.0)
    np.testing.assert_array_equal(T.grouped()[..., 1:], 0.0)


def test_numeric_failure_exit_code(config, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise FloatingPointError("loss diverged")
    monkeypatch.setattr(cli.rec, "train", boom)
    ris.save_configuration(ris.random_configuration(4, 4, 4, 0), tmp_path / "T.txt")
    assert run(config, tmp_path, "gen-dataset", "--T", str(tmp_path / "T.txt")) == 0
    assert run(config, tmp_path, "train-eval") == 4
    assert "numeric failure" in capsys.readouterr().err


def test_module_entry_point(config, tmp_path):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "rissense", "coherence-report", "--config",
                          str(config), "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 3


def test_history_and_optimizer_agree(config):
    cfg = cli.load_config(config)
    A = cli.build_dictionary(cfg)
    res = cli.optimize(cfg, A)
    again = fcao.fcao_optimize(cli.initial_configuration(cfg), A, cfg.fcao, seed=cfg.seed)
    assert res.history == again.history
