"""Embedding store, selection QUBO construction, solving, and diversity."""

import numpy as np
import pytest

from kpp.active import (
    EmbeddingStore,
    SelectionConfig,
    build_selection_qubo,
    cardinality_lambda_bound,
    diversity_score,
    get_embedding,
    load_embeddings,
    make_clustered_store,
    save_embeddings,
    select_batch,
    solve_qubo_exhaustive,
)
from kpp.errors import ConfigError, DomainError
from kpp.ising import qubo_energy


def store_of(vectors, uncertainty):
    return EmbeddingStore.from_raw(
        [f"id{i}" for i in range(len(vectors))], np.asarray(vectors, float), uncertainty
    )


def random_store(m, d, rng):
    return EmbeddingStore.from_raw(
        [f"id{i}" for i in range(m)],
        rng.normal(size=(m, d)),
        rng.uniform(0.0, 1.0, m),
    )


def brute_minimum(p):
    idx = np.arange(1 << p.n)
    x = ((idx[:, None] >> np.arange(p.n)) & 1).astype(np.float64)
    energies = x @ p.linear + p.offset
    for (i, j), c in p.quadratic.items():
        energies += c * x[:, i] * x[:, j]
    return energies, x


class TestStore:
    def test_get_embedding(self):
        store = store_of([[3.0, 4.0]], [0.5])
        vec = get_embedding(store, 0)
        np.testing.assert_allclose(vec, [0.6, 0.8], atol=1e-12)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)

    def test_out_of_range(self):
        store = store_of([[1.0, 0.0]], [0.1])
        with pytest.raises(IndexError):
            get_embedding(store, 1)

    def test_zero_vector_rejected(self):
        with pytest.raises(DomainError):
            store_of([[0.0, 0.0]], [0.1])

    def test_unnormalized_rejected_by_constructor(self):
        with pytest.raises(DomainError):
            EmbeddingStore(ids=("a",), vectors=np.array([[2.0, 0.0]]), uncertainty=[0.1])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DomainError):
            EmbeddingStore(
                ids=("a", "a"), vectors=np.eye(2), uncertainty=[0.1, 0.2]
            )


class TestBuildSelectionQubo:
    def test_two_candidate_instance(self):
        # identical embeddings, gamma = 3: h = (-1, -1), J_01 = 3
        store = store_of([[1.0, 0.0], [1.0, 0.0]], [1.0, 1.0])
        cfg = SelectionConfig(k=1, gamma=3.0, lam=0.0)
        p = build_selection_qubo(store, [0, 1], cfg)
        np.testing.assert_allclose(p.linear, [-1.0, -1.0])
        assert p.quadratic == {(0, 1): 3.0}
        energies, x = brute_minimum(p)
        best = x[int(np.argmin(energies))]
        assert energies.min() == -1.0
        assert best.sum() == 1.0

    def test_gamma_zero_lambda_zero_selects_all_positive(self):
        rng = np.random.default_rng(0)
        store = random_store(8, 4, rng)
        cfg = SelectionConfig(k=1, gamma=0.0, lam=0.0)
        p = build_selection_qubo(store, list(range(8)), cfg)
        energies, x = brute_minimum(p)
        best = x[int(np.argmin(energies))]
        expected = (store.uncertainty > 0).astype(float)
        np.testing.assert_array_equal(best, expected)

    def test_lambda_bound_forces_cardinality(self):
        rng = np.random.default_rng(1)
        for trial in range(5):
            store = random_store(10, 6, rng)
            cands = list(range(10))
            k = int(rng.integers(2, 6))
            lam = cardinality_lambda_bound(store, cands, gamma=1.0)
            cfg = SelectionConfig(k=k, gamma=1.0, lam=lam)
            p = build_selection_qubo(store, cands, cfg)
            energies, x = brute_minimum(p)
            optima = x[energies <= energies.min() + 1e-9]
            assert np.all(optima.sum(axis=1) == k)

    def test_penalty_expansion_offset(self):
        store = store_of([[1.0, 0.0], [0.0, 1.0]], [0.3, 0.4])
        cfg = SelectionConfig(k=2, gamma=0.5, lam=2.0)
        p = build_selection_qubo(store, [0, 1], cfg)
        assert p.offset == 2.0 * 4
        np.testing.assert_allclose(p.linear, [-0.3 + 2.0 * (1 - 4), -0.4 + 2.0 * (1 - 4)])
        assert p.quadratic[(0, 1)] == pytest.approx(0.5 * 0.0 + 2.0 * 2)

    def test_too_few_candidates(self):
        store = store_of([[1.0, 0.0]], [0.1])
        with pytest.raises(ConfigError):
            build_selection_qubo(store, [0], SelectionConfig(k=2))


class TestSelectBatch:
    def test_two_candidate_chooses_one(self):
        store = store_of([[1.0, 0.0], [1.0, 0.0]], [1.0, 1.0])
        cfg = SelectionConfig(k=1, gamma=3.0, lam=0.0, solver="exact")
        result = select_batch(store, [0, 1], cfg)
        assert len(result.chosen_indices) == 1
        assert result.objective == -1.0

    def test_exact_matches_brute_force_n16(self):
        rng = np.random.default_rng(2)
        store = random_store(16, 8, rng)
        cfg = SelectionConfig(k=4, gamma=1.0, lam=0.5, solver="exact")
        result = select_batch(store, list(range(16)), cfg)
        p = build_selection_qubo(store, list(range(16)), cfg)
        energies, _ = brute_minimum(p)
        assert result.objective == pytest.approx(energies.min(), abs=1e-9)

    def test_objective_equals_energy_of_decoded_config(self):
        rng = np.random.default_rng(3)
        store = random_store(12, 5, rng)
        cfg = SelectionConfig(k=3, gamma=1.0, lam=1.0, solver="exact")
        result = select_batch(store, list(range(12)), cfg)
        p = build_selection_qubo(store, list(range(12)), cfg)
        x = np.zeros(12)
        x[list(result.chosen_indices)] = 1.0
        assert result.objective == pytest.approx(qubo_energy(p, x), abs=1e-9)

    def test_duplicates_not_co_selected(self):
        # two copies of one direction plus two distinct directions
        vecs = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        u = [0.5, 0.5, 0.5, 0.5]
        store = store_of(vecs, u)
        cfg = SelectionConfig(k=2, gamma=2.0 * 0.5 + 1.0, lam=0.0, solver="exact")
        result = select_batch(store, [0, 1, 2, 3], cfg)
        assert not {0, 1} <= set(result.chosen_indices)

    def test_sa_solver_matches_exact_on_small_instance(self):
        rng = np.random.default_rng(4)
        store = random_store(10, 4, rng)
        lam = cardinality_lambda_bound(store, list(range(10)), gamma=1.0)
        exact = select_batch(
            store, list(range(10)), SelectionConfig(k=3, lam=lam, solver="exact")
        )
        annealed = select_batch(
            store, list(range(10)), SelectionConfig(k=3, lam=lam, solver="sa"), seed=7
        )
        assert annealed.objective == pytest.approx(exact.objective, abs=1e-9)

    def test_scaling_invariance_of_argmin(self):
        rng = np.random.default_rng(5)
        store = random_store(8, 4, rng)
        cfg = SelectionConfig(k=2, gamma=1.0, lam=0.0)
        p1 = build_selection_qubo(store, list(range(8)), cfg)
        e1, x = brute_minimum(p1)
        for c in (0.5, 3.0, 17.0):
            scaled = type(p1)(
                n=p1.n,
                linear=p1.linear * c,
                quadratic={k: v * c for k, v in p1.quadratic.items()},
                offset=p1.offset * c,
            )
            e2, _ = brute_minimum(scaled)
            argmins1 = set(np.flatnonzero(e1 <= e1.min() + 1e-12))
            argmins2 = set(np.flatnonzero(e2 <= e2.min() + 1e-12))
            assert argmins1 == argmins2


class TestDiversity:
    def test_identical_vectors(self):
        store = store_of([[1.0, 0.0], [1.0, 0.0]], [0.1, 0.1])
        assert diversity_score(store, [0, 1]) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        store = store_of([[1.0, 0.0], [0.0, 1.0]], [0.1, 0.1])
        assert diversity_score(store, [0, 1]) == pytest.approx(0.0)

    def test_requires_two(self):
        store = store_of([[1.0, 0.0]], [0.1])
        with pytest.raises(DomainError):
            diversity_score(store, [0])

    def test_selected_beats_random_on_clustered_benchmark(self):
        store, _ = make_clustered_store(m=32, clusters=4, dim=8, seed=6)
        cands = list(range(32))
        lam = cardinality_lambda_bound(store, cands, gamma=1.0)
        cfg = SelectionConfig(k=6, gamma=1.0, lam=lam, solver="sa")
        result = select_batch(store, cands, cfg, seed=8)
        rng = np.random.default_rng(9)
        random_scores = [
            diversity_score(store, rng.choice(32, size=6, replace=False))
            for _ in range(100)
        ]
        assert result.diversity < float(np.mean(random_scores))


class TestEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(10)
        store = random_store(5, 3, rng)
        path = tmp_path / "emb.txt"
        save_embeddings(path, store)
        loaded = load_embeddings(path)
        assert loaded.ids == store.ids
        np.testing.assert_allclose(loaded.vectors, store.vectors, atol=1e-12)
        np.testing.assert_allclose(loaded.uncertainty, store.uncertainty, atol=1e-12)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("2 3\nid0 0.5 1.0 0.0\n")
        from kpp.errors import ParseError

        with pytest.raises(ParseError):
            load_embeddings(path)


class TestExhaustiveSolver:
    def test_cap(self):
        from kpp.ising import QuboProblem

        with pytest.raises(ConfigError):
            solve_qubo_exhaustive(QuboProblem(n=21, linear=np.zeros(21)))
