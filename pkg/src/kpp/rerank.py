"""Residual-energy reranking: binary spin encoding of token sequences,
local-sum importance reweighting of proposal candidates, and NCE training of
the energy model.

The reranked law over k candidates x_1..x_k multiplies the proposal by
exp(-E(x_i)) and normalizes by the local sum (no global partition function):

    w_i = exp(-E(x_i)) / sum_j exp(-E(x_j))

NCE trains E by classifying data positives against proposal negatives:

    L = mean_{x+} log sigmoid(-E(x+)) + mean_{x-} log sigmoid(E(x-))

maximized here by descending -L; no partition function appears.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ebm import BmGradients, BmParams, bm_energies
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    DomainError,
    EmptyBatchError,
    EncodingError,
)


@dataclass(frozen=True)
class SpinEncoderConfig:
    """Sequence-to-bits encoding.

    `token_bits` concatenates the fixed-width (MSB-first) binary expansion of
    each token id: injective for in-range ids at fixed sequence length.
    `random_projection` takes the signs of a seeded random linear map of the
    sequence's token-count vector.
    """

    mode: str
    n_spins: int
    bits_per_token: int | None = None
    projection_seed: int | None = None
    vocab_size: int | None = None

    def __post_init__(self):
        if self.mode not in ("token_bits", "random_projection"):
            raise ConfigError(f"unknown encoder mode {self.mode!r}")
        if self.n_spins < 1:
            raise ConfigError("n_spins must be positive")
        if self.mode == "token_bits":
            if not self.bits_per_token or self.bits_per_token < 1:
                raise ConfigError("token_bits mode needs bits_per_token >= 1")
            if self.n_spins % self.bits_per_token != 0:
                raise ConfigError("n_spins must be a multiple of bits_per_token")
            if self.vocab_size is None:
                object.__setattr__(self, "vocab_size", 1 << self.bits_per_token)
            elif self.vocab_size > (1 << self.bits_per_token):
                raise ConfigError("vocab_size exceeds bits_per_token capacity")
        else:
            if self.projection_seed is None:
                raise ConfigError("random_projection mode needs projection_seed")
            if not self.vocab_size or self.vocab_size < 1:
                raise ConfigError("random_projection mode needs vocab_size")


def encode_binary(sequence: Sequence[int], cfg: SpinEncoderConfig) -> np.ndarray:
    """Encode one token-id sequence as a 0/1 vector of length n_spins."""
    ids = np.asarray(sequence, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise EncodingError("sequence must be a nonempty id list")
    if np.any(ids < 0) or np.any(ids >= cfg.vocab_size):
        raise EncodingError(f"token id outside [0, {cfg.vocab_size})")
    if cfg.mode == "token_bits":
        width = cfg.bits_per_token
        if len(ids) * width != cfg.n_spins:
            raise EncodingError(
                f"sequence of {len(ids)} tokens needs n_spins={len(ids) * width}"
            )
        shifts = np.arange(width - 1, -1, -1)
        bits = (ids[:, None] >> shifts[None, :]) & 1
        return bits.reshape(-1).astype(np.float64)
    rng = np.random.default_rng(cfg.projection_seed)
    projection = rng.normal(size=(cfg.n_spins, cfg.vocab_size))
    counts = np.bincount(ids, minlength=cfg.vocab_size).astype(np.float64)
    return (projection @ counts >= 0.0).astype(np.float64)


@dataclass(frozen=True)
class CandidateSet:
    """k proposal candidates: raw sequences, encodings, optional energies."""

    tokens: tuple[tuple[int, ...], ...]
    encodings: np.ndarray
    energies: np.ndarray | None = None

    def __post_init__(self):
        enc = np.asarray(self.encodings, dtype=np.float64)
        if enc.ndim != 2 or enc.shape[0] != len(self.tokens) or enc.shape[0] < 1:
            raise DimensionError("encodings must be one row per candidate")
        object.__setattr__(self, "encodings", enc)

    @property
    def k(self) -> int:
        return len(self.tokens)


def encode_candidates(sequences: Sequence[Sequence[int]], cfg: SpinEncoderConfig) -> CandidateSet:
    encodings = np.stack([encode_binary(seq, cfg) for seq in sequences])
    return CandidateSet(tokens=tuple(tuple(int(t) for t in s) for s in sequences), encodings=encodings)


def evaluate_candidates(c: CandidateSet, qbm: BmParams) -> CandidateSet:
    """Fill candidate energies under the energy model."""
    if c.encodings.shape[1] != qbm.n:
        raise DimensionError(f"encodings have {c.encodings.shape[1]} spins, model has {qbm.n}")
    return CandidateSet(tokens=c.tokens, encodings=c.encodings, energies=bm_energies(qbm, c.encodings))


def residual_weights(c: CandidateSet, qbm: BmParams) -> np.ndarray:
    """Local-sum importance weights: softmax of the negated energies.

    Stabilized by subtracting the minimum energy; invariant under adding a
    constant to every energy, and sums to 1.
    """
    evaluated = evaluate_candidates(c, qbm)
    e = evaluated.energies
    w = np.exp(-(e - e.min()))
    return w / w.sum()


def resample_candidate(weights: np.ndarray, seed: int) -> int:
    """One categorical draw from the weight simplex; deterministic by seed."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DomainError("weights must be a nonempty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DomainError("weights must not all be zero")
    u = np.random.default_rng(seed).random() * total
    return int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, w.size - 1))


@dataclass(frozen=True)
class NceBatch:
    """Positive (data) and negative (proposal) encodings for one NCE step."""

    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positives, dtype=np.float64)
        neg = np.asarray(self.negatives, dtype=np.float64)
        if pos.ndim != 2 or neg.ndim != 2 or pos.shape[0] == 0 or neg.shape[0] == 0:
            raise EmptyBatchError("both sides of an NCE batch must be nonempty")
        if pos.shape[1] != neg.shape[1]:
            raise DimensionError("positive and negative encodings differ in width")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # min(x, 0) - log1p(exp(-|x|)): no overflow for |x| up to 1e4 and beyond
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def nce_objective(qbm: BmParams, b: NceBatch) -> float:
    """L = mean log sigmoid(-E(x+)) + mean log sigmoid(E(x-)); always <= 0."""
    e_pos = bm_energies(qbm, b.positives)
    e_neg = bm_energies(qbm, b.negatives)
    return float(_log_sigmoid(-e_pos).mean() + _log_sigmoid(e_neg).mean())


def nce_gradients(qbm: BmParams, b: NceBatch) -> BmGradients:
    """Analytic gradient of -L (the descent objective) w.r.t. the parameters.

    dE/d bias_i = -z_i and dE/d coupling_ij = -z_i z_j, so per-sample
    gradients are sufficient statistics scaled by sigmoid factors.
    """
    e_pos = bm_energies(qbm, b.positives)
    e_neg = bm_energies(qbm, b.negatives)
    sp = _sigmoid(e_pos)  # d(-log sigmoid(-E))/dE
    sn = _sigmoid(-e_neg)  # -d(-log sigmoid(E))/dE
    zp, zn = b.positives, b.negatives
    bias = -(sp @ zp) / len(zp) + (sn @ zn) / len(zn)
    corr_p = zp.T @ (zp * sp[:, None]) / len(zp)
    corr_n = zn.T @ (zn * sn[:, None]) / len(zn)
    coupling = np.triu(-corr_p + corr_n, k=1)
    return BmGradients(bias=bias, coupling=coupling)


Proposal = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class UniformPoolProposal:
    """Stub generator: uniform draws from an enumerated candidate pool."""

    pool: np.ndarray

    def __call__(self, rng: np.random.Generator, count: int) -> np.ndarray:
        idx = rng.integers(0, len(self.pool), size=count)
        return self.pool[idx]


@dataclass(frozen=True)
class UnigramProposal:
    """Stub generator: i.i.d. tokens from a unigram law, then encoded."""

    token_probs: np.ndarray
    length: int
    encoder: SpinEncoderConfig

    def __call__(self, rng: np.random.Generator, count: int) -> np.ndarray:
        probs = np.asarray(self.token_probs, dtype=np.float64)
        probs = probs / probs.sum()
        seqs = rng.choice(len(probs), size=(count, self.length), p=probs)
        return np.stack([encode_binary(s, self.encoder) for s in seqs])


def train_nce(
    qbm0: BmParams,
    data: np.ndarray,
    proposal: Proposal,
    steps: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
    negatives: int = 32,
) -> tuple[BmParams, list[float]]:
    """Descend -L for `steps` steps; deterministic given seed.

    `data` holds positive encodings; `proposal` yields negatives per step.
    Returns the trained parameters and the per-step objective L.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise EmptyBatchError("train_nce needs positive encodings")
    params = qbm0
    history: list[float] = []
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    for _ in range(steps):
        idx = rng.integers(0, len(data), size=min(batch_size, len(data)))
        batch = NceBatch(positives=data[idx], negatives=proposal(rng, negatives))
        grads = nce_gradients(params, batch)
        bias = params.bias - lr * grads.bias
        coupling = params.coupling - lr * grads.coupling
        if not (np.all(np.isfinite(bias)) and np.all(np.isfinite(coupling))):
            raise DivergenceError("non-finite parameter during NCE training")
        params = BmParams(n=params.n, bias=bias, coupling=coupling)
        history.append(nce_objective(params, batch))
    return params, history


def rerank_records(c: CandidateSet, qbm: BmParams) -> list[dict]:
    """Per-candidate report rows: {index, energy, weight}."""
    evaluated = evaluate_candidates(c, qbm)
    weights = residual_weights(c, qbm)
    return [
        {"index": i, "energy": float(e), "weight": float(w)}
        for i, (e, w) in enumerate(zip(evaluated.energies, weights))
    ]


# ---------------------------------------------------------------------------
# Candidate pool file: one token-id sequence per line, ids space-separated.
# ---------------------------------------------------------------------------


def save_pool(path, sequences: Sequence[Sequence[int]]):
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(" ".join(str(int(t)) for t in seq) + "\n")


def load_pool(path) -> list[list[int]]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append([int(t) for t in line.split()])
    return out
