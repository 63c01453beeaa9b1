"""Active batch selection: an embedding store, the selection QUBO built from
uncertainty and pairwise similarity, solvers, and batch diversity scoring.

The selection objective over x in {0,1}^n (x_i = 1 picks candidate i):

    H(x) = sum_i h_i x_i + sum_{i<j} J_ij x_i x_j

with h_i = -uncertainty_i (minimization prefers uncertain samples) and
J_ij = gamma * max(0, cos(v_i, v_j)) (similar pairs penalize co-selection).
The objective is unconstrained, so a quadratic cardinality penalty
lambda * (sum x_i - k)^2 can be folded in; lambda at least
10 * (max|h| + n * max|J|) provably forces every optimum to cardinality k
(one selection move changes the base objective by at most
max|h| + n * max|J| and the penalty by at least lambda).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, ParseError
from .ising import QuboProblem, qubo_energy, qubo_to_ising
from .samplers import SamplerConfig, simulated_anneal

EXHAUSTIVE_CAP = 20


@dataclass(frozen=True)
class EmbeddingStore:
    """Unit-normalized embedding rows with per-sample uncertainty scores."""

    ids: tuple[str, ...]
    vectors: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        uncertainty = np.asarray(self.uncertainty, dtype=np.float64)
        ids = tuple(str(i) for i in self.ids)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0] or len(uncertainty) != len(ids):
            raise DimensionError("ids, vectors, and uncertainty lengths must agree")
        if len(set(ids)) != len(ids):
            raise DomainError("ids must be unique")
        if not np.all(np.isfinite(vectors)) or not np.all(np.isfinite(uncertainty)):
            raise DomainError("non-finite store entries")
        if np.any(uncertainty < 0):
            raise DomainError("uncertainty scores must be nonnegative")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise DomainError("vectors must be L2-normalized within 1e-6")
        vectors = vectors.copy()
        vectors.flags.writeable = False
        uncertainty = uncertainty.copy()
        uncertainty.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "uncertainty", uncertainty)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_raw(cls, ids, vectors, uncertainty) -> "EmbeddingStore":
        """Normalize rows on ingestion; zero vectors are rejected."""
        vectors = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise DomainError("zero embedding vector")
        return cls(ids=tuple(ids), vectors=vectors / norms, uncertainty=uncertainty)


def get_embedding(store: EmbeddingStore, index: int) -> np.ndarray:
    """Stored unit vector at `index`; raises IndexError out of range."""
    if not 0 <= index < len(store):
        raise IndexError(f"index {index} out of range for store of {len(store)}")
    return store.vectors[index]


@dataclass(frozen=True)
class SelectionConfig:
    """Batch size k, similarity weight gamma, cardinality weight lam."""

    k: int
    gamma: float = 1.0
    lam: float = 0.0
    solver: str = "auto"  # auto | exact | sa

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.gamma < 0 or self.lam < 0:
            raise ConfigError("gamma and lambda must be nonnegative")
        if self.solver not in ("auto", "exact", "sa"):
            raise ConfigError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class SelectionResult:
    chosen_indices: tuple[int, ...]  # positions in the candidate list
    chosen_ids: tuple[str, ...]
    objective: float
    diversity: float | None


def cardinality_lambda_bound(store: EmbeddingStore, candidates: Sequence[int], gamma: float) -> float:
    """Penalty weight that provably forces optima to have cardinality k."""
    candidates = list(candidates)
    u = store.uncertainty[candidates]
    v = store.vectors[candidates]
    sim = gamma * np.maximum(0.0, v @ v.T)
    np.fill_diagonal(sim, 0.0)
    max_h = float(np.max(np.abs(u))) if len(u) else 0.0
    max_j = float(np.max(sim)) if len(candidates) > 1 else 0.0
    return 10.0 * max_h + 10.0 * len(candidates) * max_j


def build_selection_qubo(
    store: EmbeddingStore, candidates: Sequence[int], cfg: SelectionConfig
) -> QuboProblem:
    """Selection QUBO over the candidate subset, cardinality penalty included.

    The penalty lambda * (sum x - k)^2 expands to lambda * (1 - 2k) on every
    linear term, 2 * lambda on every pairwise term, and lambda * k^2 in the
    offset (using x_i^2 = x_i).
    """
    candidates = list(candidates)
    n = len(candidates)
    if n < cfg.k:
        raise ConfigError(f"need at least k={cfg.k} candidates, got {n}")
    if len(set(candidates)) != n:
        raise DomainError("duplicate candidate indices")
    for c in candidates:
        if not 0 <= c < len(store):
            raise IndexError(f"candidate {c} out of range")
    u = store.uncertainty[candidates]
    v = store.vectors[candidates]
    linear = -u + cfg.lam * (1.0 - 2.0 * cfg.k)
    sims = v @ v.T
    quadratic = {}
    for i in range(n):
        for j in range(i + 1, n):
            c = cfg.gamma * max(0.0, float(sims[i, j])) + 2.0 * cfg.lam
            if c != 0.0:
                quadratic[(i, j)] = c
    return QuboProblem(n=n, linear=linear, quadratic=quadratic, offset=cfg.lam * cfg.k**2)


def solve_qubo_exhaustive(p: QuboProblem) -> np.ndarray:
    """Brute-force argmin over all 2^n binary configurations."""
    if p.n > EXHAUSTIVE_CAP:
        raise ConfigError(f"n={p.n} exceeds the exhaustive cap {EXHAUSTIVE_CAP}")
    idx = np.arange(1 << p.n)
    x = ((idx[:, None] >> np.arange(p.n)) & 1).astype(np.float64)
    energies = x @ p.linear + p.offset
    for (i, j), c in p.quadratic.items():
        energies += c * x[:, i] * x[:, j]
    return x[int(np.argmin(energies))]


def select_batch(
    store: EmbeddingStore,
    candidates: Sequence[int],
    cfg: SelectionConfig,
    seed: int = 0,
    reads: int = 256,
) -> SelectionResult:
    """Build the selection QUBO, solve it, and decode the chosen batch.

    `exact` enumerates (candidate counts up to 20); `sa` anneals the Ising
    image; `auto` picks whichever fits.
    """
    candidates = list(candidates)
    problem = build_selection_qubo(store, candidates, cfg)
    solver = cfg.solver
    if solver == "auto":
        solver = "exact" if problem.n <= EXHAUSTIVE_CAP else "sa"
    if solver == "exact":
        x = solve_qubo_exhaustive(problem)
    else:
        ising = qubo_to_ising(problem)
        result = simulated_anneal(ising, SamplerConfig(seed=seed, reads=reads, top_k=1))
        x = (np.asarray(result.best.spins, dtype=np.float64) + 1.0) / 2.0
    chosen = tuple(int(c) for c, flag in zip(candidates, x) if flag > 0.5)
    positions = tuple(i for i, flag in enumerate(x) if flag > 0.5)
    diversity = diversity_score(store, chosen) if len(chosen) >= 2 else None
    return SelectionResult(
        chosen_indices=chosen,
        chosen_ids=tuple(store.ids[c] for c in chosen),
        objective=qubo_energy(problem, x),
        diversity=diversity,
    )


def diversity_score(store: EmbeddingStore, chosen: Sequence[int]) -> float:
    """Mean pairwise cosine similarity among the chosen vectors (lower is
    more diverse)."""
    chosen = list(chosen)
    if len(chosen) < 2:
        raise DomainError("diversity needs at least 2 chosen samples")
    v = store.vectors[chosen]
    sims = v @ v.T
    n = len(chosen)
    upper = sims[np.triu_indices(n, k=1)]
    return float(upper.mean())


def make_clustered_store(
    m: int = 64, clusters: int = 4, dim: int = 16, noise: float = 0.15, seed: int = 0
) -> tuple[EmbeddingStore, np.ndarray]:
    """Synthetic benchmark store: `m` points around orthonormal cluster
    centers, uncertainty uniform in [0.5, 1].  Returns (store, labels)."""
    if clusters > dim:
        raise ConfigError("need dim >= clusters for orthonormal centers")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    centers = basis[:clusters]
    labels = rng.integers(0, clusters, size=m)
    points = centers[labels] + noise * rng.normal(size=(m, dim))
    ids = [f"s{i}" for i in range(m)]
    store = EmbeddingStore.from_raw(ids, points, rng.uniform(0.5, 1.0, m))
    return store, labels


# ---------------------------------------------------------------------------
# Embedding file format: header `d m`, then m lines `id u v_1 ... v_d`.
# ---------------------------------------------------------------------------


def save_embeddings(path, store: EmbeddingStore):
    with open(path, "w") as fh:
        fh.write(f"{store.vectors.shape[1]} {len(store)}\n")
        for i, sid in enumerate(store.ids):
            vec = " ".join(repr(float(v)) for v in store.vectors[i])
            fh.write(f"{sid} {float(store.uncertainty[i])!r} {vec}\n")


def load_embeddings(path) -> EmbeddingStore:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("embedding header must be `d m`", line=1)
        try:
            d, m = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("embedding header must be `d m`", line=1) from None
        ids, uncertainty, vectors = [], [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 2:
                raise ParseError(f"expected id, score, and {d} components", line=lineno)
            ids.append(parts[0])
            try:
                uncertainty.append(float(parts[1]))
                vectors.append([float(x) for x in parts[2:]])
            except ValueError:
                raise ParseError("malformed number", line=lineno) from None
    if len(ids) != m:
        raise ParseError(f"header declared {m} rows, found {len(ids)}")
    return EmbeddingStore.from_raw(ids, np.asarray(vectors), np.asarray(uncertainty))
