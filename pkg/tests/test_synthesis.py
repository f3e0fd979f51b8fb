import numpy as np
import pytest
from scipy import stats

from yono.errors import EmptyMemory
from yono.geometry import sample_sphere_neighbors, sample_truncated_gaussian
from yono.prototypes import Prototype, PrototypeMemory
from yono.synthesis import (
    Synthesizer,
    read_embedding_csv,
    sampling_spec,
    synthesize,
    synthesize_minibatch,
    write_embedding_csv,
)


def unit(rng, m):
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


def memory_of(*protos):
    return PrototypeMemory(protos[0].direction.size).save(protos)


def test_degenerate_spread_pins_cosine():
    rng = np.random.default_rng(0)
    p = unit(rng, 8)
    mem = memory_of(Prototype(1, p, 0.8, 1e-12, 5))
    batch = synthesize(mem, 200, rng=rng)
    np.testing.assert_allclose(batch.embeddings @ p, 0.8, atol=1e-8)


def test_identity_rotation_reduces_to_neighbor_sampler():
    m = 6
    u = np.eye(m)[0]
    proto = Prototype(0, u, 0.9, 0.02, 10)
    syn = Synthesizer(memory_of(proto))
    np.testing.assert_array_equal(syn.rotations[0], np.eye(m))
    got = syn.sample_class(0, 50, np.random.default_rng(4))
    rng = np.random.default_rng(4)
    a = sample_truncated_gaussian(sampling_spec(proto), rng, 50)
    np.testing.assert_allclose(got, sample_sphere_neighbors(a, m, rng), atol=1e-15)


def test_cosine_preserved_and_unit_norm():
    rng = np.random.default_rng(1)
    protos = [Prototype(k, unit(rng, 16), 0.85 + 0.02 * k, 0.03, 10) for k in range(4)]
    mem = memory_of(*protos)
    syn = Synthesizer(mem)
    batch = syn.per_class(100, rng)
    assert len(batch) == 400
    np.testing.assert_allclose(np.linalg.norm(batch.embeddings, axis=1), 1.0, atol=1e-12)
    for k in range(4):
        z = batch.embeddings[batch.labels == k]
        cos = z @ mem[k].direction
        lo, hi = syn.specs[k].support
        assert np.all((cos >= lo - 1e-12) & (cos <= hi + 1e-12))
        # recover a from the canonical frame and compare
        v = z @ syn.rotations[k]
        np.testing.assert_allclose(cos, v[:, 0], atol=1e-8)


def test_monte_carlo_mean_m16():
    rng = np.random.default_rng(2)
    p = unit(rng, 16)
    n = 10**4
    batch = synthesize(memory_of(Prototype(0, p, 0.92, 0.03, 1)), n, rng=rng)
    cos = batch.embeddings @ p
    se = stats.truncnorm(-1.96, 1.96, loc=0.92, scale=0.03).std() / np.sqrt(n)
    assert abs(cos.mean() - 0.92) < 3 * se


def test_orthogonal_component_isotropic():
    rng = np.random.default_rng(3)
    p = unit(rng, 16)
    z = synthesize(memory_of(Prototype(0, p, 0.9, 0.03, 1)), 10**5, rng=rng).embeddings
    orth = z - np.outer(z @ p, p)
    assert np.linalg.norm(orth.mean(axis=0)) < 0.02


def test_ks_against_truncated_normal():
    rng = np.random.default_rng(4)
    p = unit(rng, 16)
    z = synthesize(memory_of(Prototype(0, p, 0.92, 0.03, 1)), 10**5, rng=rng).embeddings
    ref = stats.truncnorm(-1.96, 1.96, loc=0.92, scale=0.03)
    assert stats.kstest(z @ p, ref.cdf).statistic < 0.01


def test_sampling_spec_shrinks_and_falls_back():
    tight = sampling_spec(Prototype(0, np.eye(3)[0], 0.99, 0.5, 1))
    lo, hi = tight.support
    assert -1 < lo and hi < 1
    fb = sampling_spec(Prototype(0, np.eye(3)[0], 0.9, float("nan"), 1))
    assert fb.std == pytest.approx((1 - 0.9) / 1.96 * (1 - 1e-6))
    # single-sample prototypes store mu = 1
    one = sampling_spec(Prototype(0, np.eye(3)[0], 1.0, 1e-4, 1))
    assert one.support[1] < 1


def test_antipodal_prototype_is_handled():
    mem = memory_of(Prototype(0, -np.eye(4)[0], 0.9, 0.02, 1))
    z = synthesize(mem, 20, rng=np.random.default_rng(0)).embeddings
    np.testing.assert_allclose(z @ mem[0].direction, z[:, 0] * -1, atol=1e-12)
    assert np.all(z @ mem[0].direction > 0.8)


def test_minibatch_single_class():
    mem = memory_of(Prototype(7, np.eye(3)[1], 0.9, 0.02, 1))
    batch = synthesize_minibatch(mem, 8, np.random.default_rng(0))
    assert len(batch) == 8 and set(batch.labels.tolist()) == {7}


def test_minibatch_uniform_labels():
    rng = np.random.default_rng(5)
    mem = memory_of(*[Prototype(k, unit(rng, 5), 0.9, 0.02, 1) for k in range(4)])
    batch = synthesize_minibatch(mem, 4000, rng)
    counts = np.bincount(batch.labels, minlength=4)
    assert np.all(np.abs(counts - 1000) < 4 * np.sqrt(4000 * 0.25 * 0.75))


def test_minibatch_deterministic():
    rng = np.random.default_rng(6)
    mem = memory_of(*[Prototype(k, unit(rng, 5), 0.9, 0.02, 1) for k in range(3)])
    a = synthesize_minibatch(mem, 64, np.random.default_rng(9))
    b = synthesize_minibatch(mem, 64, np.random.default_rng(9))
    np.testing.assert_array_equal(a.embeddings, b.embeddings)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_empty_memory_raises():
    with pytest.raises(EmptyMemory):
        synthesize(PrototypeMemory(4), 3, rng=np.random.default_rng(0))
    with pytest.raises(EmptyMemory):
        synthesize_minibatch(PrototypeMemory(4), 3, np.random.default_rng(0))


def test_embedding_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    ext = rng.standard_normal((3, 4))
    syn = rng.standard_normal((2, 4))
    path = tmp_path / "emb.csv"
    write_embedding_csv(path, 4, [("extracted", [1, 1, 2], ext), ("synthetic", [1, 2], syn)])
    assert path.read_text().splitlines()[0] == "class_id,kind,c0,c1,c2,c3"
    dump = read_embedding_csv(path)
    assert dump.kinds == ["extracted"] * 3 + ["synthetic"] * 2
    np.testing.assert_array_equal(dump.class_ids, [1, 1, 2, 1, 2])
    np.testing.assert_array_equal(dump.embeddings, np.vstack([ext, syn]))
