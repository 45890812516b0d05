import numpy as np
import pytest

from rissense import channel as ch
from rissense import ris
from rissense import scenes


def cells(scene, occupancy):
    mx, my, _ = scene.block_counts
    return {(m % mx, (m // mx) % my, m // (mx * my)) for m in occupancy}


def test_default_postures_on_full_grid(full_scene):
    post = scenes.default_postures(full_scene)
    assert [p.name for p in post] == ["standing", "sitting", "bending", "lying"]
    as_cells = [cells(full_scene, p.occupancy) for p in post]
    assert as_cells[0] == {(0, 2, z) for z in range(8)}
    assert as_cells[1] == {(0, 2, z) for z in range(5)} | {(1, 2, 2)}
    assert as_cells[2] == {(0, 2, z) for z in range(4)} | {(1, 2, 3), (1, 2, 4)}
    assert as_cells[3] == {(0, y, 0) for y in range(5)}
    sets = [set(p.occupancy) for p in post]
    assert all(a != b for i, a in enumerate(sets) for b in sets[i + 1:])
    assert max(len(s) for s in sets) <= 12


def test_default_postures_small_grid(small_scene):
    post = scenes.default_postures(small_scene)
    sets = [set(p.occupancy) for p in post]
    assert all(a != b for i, a in enumerate(sets) for b in sets[i + 1:])
    assert all(max(s) < small_scene.n_blocks for s in sets)


def test_posture_spec_validation():
    with pytest.raises(ValueError):
        scenes.PostureSpec("empty", ())
    with pytest.raises(ValueError):
        scenes.PostureSpec("bad", (1,), magnitude_range=(0.5, 0.1))
    with pytest.raises(ValueError):
        scenes.PostureSpec("bad", (1,), activation_prob=0.0)
    with pytest.raises(ValueError):
        scenes.DatasetSpec(samples_per_class=10, n_train=8, n_test=3)


def test_reflection_vector_support_and_degenerate_draw(full_scene):
    standing = scenes.default_postures(full_scene)[0]
    for seed in range(200):
        eta = scenes.posture_reflection_vector(standing, 80, seed).eta
        support = np.flatnonzero(eta)
        assert 1 <= support.size <= 8
        assert set(support) <= set(standing.occupancy)
        assert np.all((np.abs(eta[support]) >= 0.1) & (np.abs(eta[support]) <= 0.5))
    fixed = scenes.PostureSpec("c", (3, 5, 9), magnitude_range=(0.3, 0.3), activation_prob=1.0)
    eta = scenes.posture_reflection_vector(fixed, 10, 1).eta
    np.testing.assert_allclose(np.abs(eta[[3, 5, 9]]), 0.3)
    with pytest.raises(ValueError):
        scenes.posture_reflection_vector(fixed, 8, 0)


def test_reflection_vector_activation_rate():
    spec = scenes.PostureSpec("p", tuple(range(10)))
    counts = [np.count_nonzero(scenes.posture_reflection_vector(spec, 10, s).eta) for s in range(2000)]
    assert np.mean(counts) == pytest.approx(7.0, abs=0.15)


def test_generate_dataset_default_protocol(full_scene, full_dictionary):
    T = ris.random_configuration(10, 16, 4, 0)
    post = scenes.default_postures(full_scene)
    params = ch.RadioParams()
    tr, te = scenes.generate_dataset(T, full_dictionary, post, scenes.DatasetSpec(),
                                     params, full_scene.los_distance)
    assert len(tr) == 480 and len(te) == 120
    np.testing.assert_array_equal(np.bincount(tr.labels), 120)
    np.testing.assert_array_equal(np.bincount(te.labels), 30)
    assert tr.split == "train" and te.split == "test"
    tr2, _ = scenes.generate_dataset(T, full_dictionary, post, scenes.DatasetSpec(),
                                     params, full_scene.los_distance)
    np.testing.assert_array_equal(tr.Y, tr2.Y)


def test_generate_dataset_noise_free_determinism(small_scene, small_dictionary):
    T = ris.random_configuration(4, small_dictionary.n_groups, small_dictionary.n_states, 1)
    params = ch.RadioParams()
    fixed = [scenes.PostureSpec("a", (0, 3), (0.2, 0.2), (0.5, 0.5), 1.0),
             scenes.PostureSpec("b", (10, 20), (0.2, 0.2), (1.0, 1.0), 1.0)]
    spec = scenes.DatasetSpec(samples_per_class=6, n_train=4, n_test=2, noise=False)
    tr, te = scenes.generate_dataset(T, small_dictionary, fixed, spec, params, small_scene.los_distance)
    for c in (0, 1):
        rows = tr.Y[tr.labels == c]
        assert np.all(rows == rows[0])
    random_post = [scenes.PostureSpec("a", (0, 3, 5)), scenes.PostureSpec("b", (10, 20, 30))]
    tr, te = scenes.generate_dataset(T, small_dictionary, random_post, spec, params,
                                     small_scene.los_distance)
    a = {tuple(y) for y in tr.Y[tr.labels == 0]}
    b = {tuple(y) for y in tr.Y[tr.labels == 1]}
    assert not a & b


def test_generate_dataset_errors(small_dictionary):
    T = ris.random_configuration(4, small_dictionary.n_groups, small_dictionary.n_states, 1)
    with pytest.raises(ValueError):
        scenes.generate_dataset(T, small_dictionary, [scenes.PostureSpec("a", (0,))],
                                scenes.DatasetSpec(), ch.RadioParams(), 1.0)


def test_dataset_round_trip(small_scene, small_dictionary):
    T = ris.random_configuration(3, small_dictionary.n_groups, small_dictionary.n_states, 2)
    spec = scenes.DatasetSpec(samples_per_class=5, n_train=3, n_test=2, seed=4)
    tr, _ = scenes.generate_dataset(T, small_dictionary, scenes.default_postures(small_scene),
                                    spec, ch.RadioParams(), small_scene.los_distance)
    text = scenes.dumps_dataset(tr, "abc", "def", 4)
    back, meta = scenes.loads_dataset(text)
    np.testing.assert_array_equal(back.Y, tr.Y)
    np.testing.assert_array_equal(back.labels, tr.labels)
    assert meta["t_hash"] == "abc" and meta["a_hash"] == "def" and meta["seed"] == "4"
    assert scenes.dumps_dataset(back, "abc", "def", 4) == text


def test_dataset_parse_errors():
    with pytest.raises(ValueError, match="line 1"):
        scenes.loads_dataset("nope\n")
    good = "# rissense dataset v1\n# split=train frames=1 t_hash= a_hash= seed=0\nlabel,re_1,im_1\n"
    with pytest.raises(ValueError, match="line 4"):
        scenes.loads_dataset(good + "0,1.0\n")
    with pytest.raises(ValueError, match="line 5"):
        scenes.loads_dataset(good + "0,1.0,2.0\n1,x,2\n")
