import numpy as np
import numpy.linalg as la
import pytest

from eigenbench import eigenfaces as ef
from eigenbench.errors import (
    DegenerateTrainingError,
    DimensionMismatchError,
    EmptySelectionError,
    InvalidInputError,
    ModelFormatError,
    UnsupportedVersionError,
)


def make_training_set(rng, n_subjects=4, per_subject=3, dim=25, noise=6.0):
    protos = rng.uniform(0, 255, size=(n_subjects, dim))
    vectors, subjects = [], []
    for s in range(n_subjects):
        for _ in range(per_subject):
            img = np.clip(protos[s] + rng.normal(0, noise, size=dim), 0, 255)
            vectors.append(img)
            subjects.append(f"s{s}")
    return ef.TrainingSet(vectors=np.array(vectors), subjects=subjects)


# ------------------------------------------------------------- mean / center

def test_mean_of_identical_images():
    v = np.array([3.0, 1.0, 4.0])
    ts = ef.TrainingSet(vectors=np.stack([v, v]), subjects=["a", "b"])
    assert np.array_equal(ef.compute_mean(ts), v)


def test_mean_two_point():
    ts = ef.TrainingSet(vectors=np.array([[0.0, 0.0], [10.0, 20.0]]), subjects=["a", "b"])
    assert np.array_equal(ef.compute_mean(ts), [5.0, 10.0])


def test_mean_matches_summation_oracle():
    rng = np.random.default_rng(0)
    vecs = rng.uniform(0, 255, size=(6, 11))
    ts = ef.TrainingSet(vectors=vecs, subjects=[f"s{i}" for i in range(6)])
    expected = np.array([sum(vecs[i, d] for i in range(6)) / 6 for d in range(11)])
    assert np.allclose(ef.compute_mean(ts), expected, rtol=1e-12)


def test_center_columns_and_zero_sum():
    ts = ef.TrainingSet(vectors=np.array([[2.0], [4.0]]), subjects=["a", "b"])
    a = ef.center(ts, np.array([3.0]))
    assert np.array_equal(a, [[-1.0, 1.0]])

    rng = np.random.default_rng(1)
    ts = make_training_set(rng)
    a = ef.center(ts, ef.compute_mean(ts))
    assert np.abs(a.sum(axis=1)).max() <= 1e-9 * ts.dim * 255


def test_center_all_identical_is_zero():
    v = np.full(9, 120.0)
    ts = ef.TrainingSet(vectors=np.stack([v, v, v]), subjects=["a", "b", "c"])
    assert np.all(ef.center(ts, ef.compute_mean(ts)) == 0.0)


# ------------------------------------------------------------------ selection

def test_select_top_k():
    assert np.array_equal(ef.select_eigenfaces([5.0, 3.0, 1.0], ef.SelectionRule(top_k=2)),
                          [0, 1])


def test_select_value_threshold():
    kept = ef.select_eigenfaces([5.0, 3.0, 1.0], ef.SelectionRule(value_threshold=2.0))
    assert np.array_equal(kept, [0, 1])


def test_select_minus_infinity_keeps_all():
    kept = ef.select_eigenfaces([5.0, 3.0, 1.0, -0.1], ef.keep_all())
    assert np.array_equal(kept, [0, 1, 2, 3])


def test_select_paper_scale_spectrum():
    # spectrum shaped like the published experiment: 230 values from 5.9288e9
    # down to -1.8949e-7, cutoff 4.2201e5 keeping exactly the top 188
    lam = np.concatenate([
        np.geomspace(5.9288e9, 4.2201e5, 188),
        np.geomspace(4.2200e5, 1e-6, 41),
        [-1.8949e-7],
    ])
    lam[187] = 4.2201e5  # pin the boundary value exactly at the cutoff
    kept = ef.select_eigenfaces(lam, ef.SelectionRule(value_threshold=4.2201e5))
    assert kept.size == 188
    assert lam.size == 230


def test_select_empty_result_is_error():
    with pytest.raises(EmptySelectionError):
        ef.select_eigenfaces([5.0, 3.0], ef.SelectionRule(value_threshold=10.0))


def test_select_requires_sorted_input():
    with pytest.raises(InvalidInputError):
        ef.select_eigenfaces([1.0, 5.0], ef.SelectionRule(top_k=1))


def test_selection_rule_exactly_one_setting():
    with pytest.raises(InvalidInputError):
        ef.SelectionRule()
    with pytest.raises(InvalidInputError):
        ef.SelectionRule(top_k=2, value_threshold=1.0)
    with pytest.raises(InvalidInputError):
        ef.SelectionRule(top_k=0)


# ------------------------------------------------------------------- distance

def test_distance_axioms():
    a = np.array([1.0, 2.0])
    b = np.array([4.0, 6.0])
    assert ef.distance(a, a) == 0.0
    assert ef.distance(a, b) == 25.0  # 3^2 + 4^2, squared Euclidean
    assert ef.distance(b, a) == ef.distance(a, b)
    assert ef.distance(a, b) > 0.0


def test_distance_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        ef.distance([1.0], [1.0, 2.0])


# ------------------------------------------------------------------- training

def test_train_rank_one_pair():
    with pytest.warns(UserWarning):  # single-subject gallery
        ts = ef.TrainingSet(vectors=np.array([[0.0, 0.0, 0.0], [12.0, 0.0, 9.0]]),
                            subjects=["a", "a"])
    model = ef.train(ts, ef.keep_all())
    nonzero = model.eigenvalues > 1e-10 * model.eigenvalues[0]
    assert nonzero.sum() == 1
    assert model.kept_count == 1


def test_train_zero_noise_rank_bound():
    # 5 distinct prototypes, 6 copies each: mean-centered rank <= 4
    rng = np.random.default_rng(2)
    protos = rng.uniform(0, 255, size=(5, 16))
    vecs = np.repeat(protos, 6, axis=0)
    ts = ef.TrainingSet(vectors=vecs, subjects=[f"s{i // 6}" for i in range(30)])
    model = ef.train(ts, ef.keep_all())
    assert model.kept_count <= 4
    # oracle: rank of A A^T on tiny D by brute force
    a = ef.center(ts, ef.compute_mean(ts))
    c_eigs = np.sort(la.eigvalsh(a @ a.T))[::-1]
    rank = int((c_eigs > 1e-10 * c_eigs[0]).sum())
    assert model.kept_count == rank


def test_train_degenerate_set():
    v = np.full(8, 33.0)
    ts = ef.TrainingSet(vectors=np.stack([v, v, v]), subjects=["a", "b", "c"])
    with pytest.raises(DegenerateTrainingError):
        ef.train(ts, ef.keep_all())


def test_train_retains_full_spectrum():
    rng = np.random.default_rng(3)
    ts = make_training_set(rng)
    model = ef.train(ts, ef.SelectionRule(top_k=2))
    assert len(model.eigenvalues) == ts.count
    assert model.kept_count == 2
    assert all(len(p) == 2 for p in model.class_projections.values())


def test_eigenface_columns_orthonormal():
    rng = np.random.default_rng(4)
    model = ef.train(make_training_set(rng), ef.keep_all())
    g = model.eigenfaces.T @ model.eigenfaces
    assert np.abs(g - np.eye(model.kept_count)).max() <= 1e-6


def test_lifted_vectors_match_covariance_eigenvectors():
    # tiny D so C = A A^T can be decomposed by brute force (oracle: eigh)
    rng = np.random.default_rng(5)
    ts = make_training_set(rng, n_subjects=3, per_subject=2, dim=16)
    model = ef.train(ts, ef.keep_all())
    a = ef.center(ts, ef.compute_mean(ts))
    w, v = la.eigh(a @ a.T)
    order = np.argsort(w)[::-1]
    for i in range(model.kept_count):
        u = model.eigenfaces[:, i]
        ref = v[:, order[i]]
        assert np.abs(u - ref).max() <= 1e-6 or np.abs(u + ref).max() <= 1e-6


def test_reconstruction_from_full_basis():
    rng = np.random.default_rng(6)
    ts = make_training_set(rng)
    model = ef.train(ts, ef.keep_all())
    for i in range(ts.count):
        img = ts.vectors[i]
        rebuilt = model.mean_face + model.eigenfaces @ ef.project(img, model)
        assert la.norm(rebuilt - img) <= 1e-6 * la.norm(img)


# ----------------------------------------------------------------- projection

def test_project_mean_is_zero():
    rng = np.random.default_rng(7)
    model = ef.train(make_training_set(rng), ef.keep_all())
    assert np.allclose(ef.project(model.mean_face, model), 0.0, atol=1e-9)


def test_project_single_eigenface_offset():
    rng = np.random.default_rng(8)
    model = ef.train(make_training_set(rng), ef.keep_all())
    img = model.mean_face + model.eigenfaces[:, 0]
    omega = ef.project(img, model)
    expected = np.zeros(model.kept_count)
    expected[0] = 1.0
    assert np.allclose(omega, expected, atol=1e-8)


def test_project_matches_dot_product_oracle():
    rng = np.random.default_rng(9)
    model = ef.train(make_training_set(rng), ef.keep_all())
    img = rng.uniform(0, 255, size=model.pixel_count)
    omega = ef.project(img, model)
    for i in range(model.kept_count):
        assert omega[i] == pytest.approx(model.eigenfaces[:, i] @ (img - model.mean_face),
                                         rel=1e-12, abs=1e-12)


def test_project_dimension_mismatch():
    rng = np.random.default_rng(10)
    model = ef.train(make_training_set(rng), ef.keep_all())
    with pytest.raises(DimensionMismatchError):
        ef.project(np.zeros(model.pixel_count + 1), model)


def test_class_projection_averages():
    rng = np.random.default_rng(11)
    ts = make_training_set(rng, n_subjects=3, per_subject=4)
    model = ef.train(ts, ef.keep_all())
    # brute-force re-average per subject
    for sid in model.class_projections:
        own = [ef.project(ts.vectors[i], model)
               for i in range(ts.count) if ts.subjects[i] == sid]
        assert np.allclose(model.class_projections[sid],
                           np.mean(own, axis=0), rtol=1e-10, atol=1e-8)


def test_class_projection_single_image_subject():
    vecs = np.array([[0.0, 10.0, 0.0], [50.0, 0.0, 5.0], [50.0, 6.0, 5.0]])
    ts = ef.TrainingSet(vectors=vecs, subjects=["a", "b", "b"])
    model = ef.train(ts, ef.keep_all())
    assert np.allclose(model.class_projections["a"],
                       ef.project(vecs[0], model), atol=1e-9)


# -------------------------------------------------------------------- pruning

def test_pruned_projection_is_prefix_of_full():
    rng = np.random.default_rng(12)
    ts = make_training_set(rng)
    full = ef.train(ts, ef.keep_all())
    pruned = ef.truncate_model(full, 3)
    img = rng.uniform(0, 255, size=full.pixel_count)
    # BLAS summation order varies with operand shape, so the freshly computed
    # projection is prefix-equal only to rounding; stored templates are exact
    assert np.allclose(ef.project(img, pruned), ef.project(img, full)[:3],
                       rtol=1e-12, atol=1e-9)
    for sid in full.class_projections:
        assert np.array_equal(pruned.class_projections[sid],
                              full.class_projections[sid][:3])


def test_truncate_bounds():
    rng = np.random.default_rng(13)
    full = ef.train(make_training_set(rng), ef.keep_all())
    with pytest.raises(InvalidInputError):
        ef.truncate_model(full, 0)
    with pytest.raises(InvalidInputError):
        ef.truncate_model(full, full.kept_count + 1)


def test_argmax_stable_under_nonzero_pruning():
    # dropping only zero-variance directions cannot change predictions
    rng = np.random.default_rng(14)
    ts = make_training_set(rng, n_subjects=5, per_subject=3)
    full = ef.train(ts, ef.keep_all())
    again = ef.train(ts, ef.SelectionRule(top_k=full.kept_count))
    for _ in range(10):
        img = rng.uniform(0, 255, size=full.pixel_count)
        a = ef.identify(img, full, theta=np.inf)
        b = ef.identify(img, again, theta=np.inf)
        assert a.subject_id == b.subject_id


# ------------------------------------------------------------------- matching

def test_identify_self_match_zero_noise():
    rng = np.random.default_rng(15)
    ts = make_training_set(rng, noise=0.0, per_subject=1)
    model = ef.train(ts, ef.keep_all())
    d = ef.identify(ts.vectors[2], model, theta=1e12)
    assert d.accepted
    assert d.subject_id == ts.subjects[2]
    assert d.distance == pytest.approx(0.0, abs=1e-10)


def test_identify_zero_threshold_rejects():
    rng = np.random.default_rng(16)
    ts = make_training_set(rng, noise=8.0)
    model = ef.train(ts, ef.keep_all())
    probe = rng.uniform(0, 255, size=model.pixel_count)
    d = ef.identify(probe, model, theta=0.0)
    assert not d.accepted
    assert d.distance > 0


def test_identify_monotone_in_threshold():
    rng = np.random.default_rng(17)
    ts = make_training_set(rng, noise=10.0)
    model = ef.train(ts, ef.keep_all())
    probe = np.clip(ts.vectors[0] + rng.normal(0, 20, ts.dim), 0, 255)
    base = ef.identify(probe, model, theta=np.inf).distance
    for t1, t2 in [(base * 0.5, base), (base, base * 2)]:
        a = ef.identify(probe, model, theta=t1)
        b = ef.identify(probe, model, theta=t2)
        assert (not a.accepted) or b.accepted


def test_identify_tie_breaks_lexicographically():
    rng = np.random.default_rng(18)
    model = ef.train(make_training_set(rng), ef.keep_all())
    tpl = np.zeros(model.kept_count)
    model.class_projections = {"zeta": tpl.copy(), "alpha": tpl.copy()}
    d = ef.identify(model.mean_face, model, theta=np.inf)
    assert d.subject_id == "alpha"


def test_identify_populates_all_distances():
    rng = np.random.default_rng(19)
    ts = make_training_set(rng, n_subjects=4)
    model = ef.train(ts, ef.keep_all())
    d = ef.identify(ts.vectors[0], model, theta=np.inf)
    assert set(d.per_class_distances) == set(model.class_projections)
    best = min(d.per_class_distances.items(), key=lambda kv: (kv[1], kv[0]))
    assert d.subject_id == best[0]


# -------------------------------------------------------------- serialization

def models_equal(a, b):
    return (np.array_equal(a.mean_face, b.mean_face)
            and np.array_equal(a.eigenvalues, b.eigenvalues)
            and np.array_equal(a.eigenfaces, b.eigenfaces)
            and a.dims == b.dims
            and a.class_counts == b.class_counts
            and set(a.class_projections) == set(b.class_projections)
            and all(np.array_equal(a.class_projections[s], b.class_projections[s])
                    for s in a.class_projections))


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(20)
    model = ef.train(make_training_set(rng), ef.keep_all(), dims=(5, 5))
    path = tmp_path / "m.efm"
    ef.save_model(model, path)
    loaded = ef.load_model(path)
    assert models_equal(model, loaded)
    # and the file itself is deterministic
    ef.save_model(loaded, tmp_path / "m2.efm")
    assert (tmp_path / "m2.efm").read_bytes() == path.read_bytes()


def test_model_bad_magic(tmp_path):
    path = tmp_path / "m.efm"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ModelFormatError):
        ef.load_model(path)


def test_model_future_version(tmp_path):
    rng = np.random.default_rng(21)
    model = ef.train(make_training_set(rng), ef.keep_all())
    path = tmp_path / "m.efm"
    ef.save_model(model, path)
    data = bytearray(path.read_bytes())
    data[3] = ord("9")
    path.write_bytes(bytes(data))
    with pytest.raises(UnsupportedVersionError):
        ef.load_model(path)


def test_model_checksum_failure(tmp_path):
    rng = np.random.default_rng(22)
    model = ef.train(make_training_set(rng), ef.keep_all())
    path = tmp_path / "m.efm"
    ef.save_model(model, path)
    data = bytearray(path.read_bytes())
    data[40] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ModelFormatError):
        ef.load_model(path)


def test_model_truncation(tmp_path):
    rng = np.random.default_rng(23)
    model = ef.train(make_training_set(rng), ef.keep_all())
    path = tmp_path / "m.efm"
    ef.save_model(model, path)
    path.write_bytes(path.read_bytes()[:30])
    with pytest.raises(ModelFormatError):
        ef.load_model(path)
