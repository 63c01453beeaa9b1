"""Boltzmann-machine core: energies, the parameter-to-Ising map, phase
statistics, the energy-difference objective, gradients, and training.

Model energies carry explicit minus signs (standard form over z in {0,1}):

    RBM:  E(v, h) = -b.v - c.h - v^T W h
    BM:   E(z)    = -bias.z - sum_{i<j} coupling_ij z_i z_j

The Ising module omits the leading minus, so :func:`to_ising` absorbs the
signs during the substitution z = (1 + s) / 2.  For the RBM the algebra gives

    field(v_i)  = -b_i / 2 - sum_j W_ij / 4
    field(h_j)  = -c_j / 2 - sum_i W_ij / 4
    J(v_i, h_j) = -W_ij / 4
    offset      = -sum(b) / 2 - sum(c) / 2 - sum(W) / 4

and for the BM analogously with `coupling` in place of W.  Energies agree
exactly on every configuration, which the tests verify exhaustively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import (
    DimensionError,
    DivergenceError,
    DomainError,
    EmptyBatchError,
    SizeLimitError,
)
from .ising import IsingProblem
from .samplers import SamplerConfig, estimate_moments, exact_enumerate, sample

EXACT_UNIT_CAP = 20


def _finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite entries in {name}")
    return arr


@dataclass(frozen=True)
class RbmParams:
    """Restricted Boltzmann machine parameters (bipartite: W couples v to h)."""

    n_visible: int
    n_hidden: int
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        w = _finite("weights", self.weights)
        b = _finite("visible_bias", self.visible_bias)
        c = _finite("hidden_bias", self.hidden_bias)
        if w.shape != (self.n_visible, self.n_hidden):
            raise DimensionError(f"weights shape {w.shape} != ({self.n_visible}, {self.n_hidden})")
        if b.shape != (self.n_visible,) or c.shape != (self.n_hidden,):
            raise DimensionError("bias lengths inconsistent with unit counts")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", c)

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, scale: float = 0.01, seed: int = 0):
        """Weights uniform in (-scale, scale), biases zero."""
        rng = np.random.default_rng(seed)
        return cls(
            n_visible=n_visible,
            n_hidden=n_hidden,
            weights=rng.uniform(-scale, scale, (n_visible, n_hidden)),
            visible_bias=np.zeros(n_visible),
            hidden_bias=np.zeros(n_hidden),
        )

    @property
    def n_units(self) -> int:
        return self.n_visible + self.n_hidden


@dataclass(frozen=True)
class BmParams:
    """Fully-visible Boltzmann machine; `coupling` is strictly upper triangular."""

    n: int
    bias: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        b = _finite("bias", self.bias)
        c = _finite("coupling", self.coupling)
        if b.shape != (self.n,):
            raise DimensionError(f"bias length {b.shape} != ({self.n},)")
        if c.shape != (self.n, self.n):
            raise DimensionError(f"coupling shape {c.shape} != ({self.n}, {self.n})")
        if np.any(np.tril(c) != 0.0):
            raise DomainError("coupling must be strictly upper triangular")
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "coupling", c)

    @classmethod
    def zeros(cls, n: int):
        return cls(n=n, bias=np.zeros(n), coupling=np.zeros((n, n)))

    @property
    def n_units(self) -> int:
        return self.n


Params = Union[RbmParams, BmParams]


def _as_binary(batch, n: int, what: str) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise DimensionError(f"{what} has shape {arr.shape}, expected (batch, {n})")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise DomainError(f"{what} entries must be 0 or 1")
    return arr


def rbm_energy(p: RbmParams, v, h) -> float:
    """E(v, h) = -b.v - c.h - v^T W h."""
    v = _as_binary(v, p.n_visible, "visible config")[0]
    h = _as_binary(h, p.n_hidden, "hidden config")[0]
    return float(-p.visible_bias @ v - p.hidden_bias @ h - v @ p.weights @ h)


def bm_energy(p: BmParams, z) -> float:
    """E(z) = -bias.z - sum_{i<j} coupling_ij z_i z_j."""
    z = _as_binary(z, p.n, "config")[0]
    return float(-p.bias @ z - z @ p.coupling @ z)


def bm_energies(p: BmParams, batch: np.ndarray) -> np.ndarray:
    """Vectorized BM energies for a (m, n) batch of 0/1 rows."""
    z = _as_binary(batch, p.n, "batch")
    return -(z @ p.bias) - np.einsum("bi,ij,bj->b", z, p.coupling, z)


def to_ising(p: Params) -> tuple[IsingProblem, list[tuple[str, int]]]:
    """Map {0,1} model parameters to an Ising problem over n_units spins.

    Returns the problem and a unit map: spin index -> ("v"|"h", unit) for an
    RBM (visible block first) or ("z", unit) for a BM.  Energies agree with
    the {0,1} form exactly under z = (1 + s) / 2.
    """
    if isinstance(p, RbmParams):
        nv, nh = p.n_visible, p.n_hidden
        field = np.concatenate(
            [
                -p.visible_bias / 2.0 - p.weights.sum(axis=1) / 4.0,
                -p.hidden_bias / 2.0 - p.weights.sum(axis=0) / 4.0,
            ]
        )
        coupling = {
            (i, nv + j): -p.weights[i, j] / 4.0
            for i in range(nv)
            for j in range(nh)
            if p.weights[i, j] != 0.0
        }
        offset = float(-p.visible_bias.sum() / 2.0 - p.hidden_bias.sum() / 2.0 - p.weights.sum() / 4.0)
        mapping = [("v", i) for i in range(nv)] + [("h", j) for j in range(nh)]
        return IsingProblem(n=nv + nh, field=field, coupling=coupling, offset=offset), mapping
    if isinstance(p, BmParams):
        incident = p.coupling.sum(axis=1) + p.coupling.sum(axis=0)
        field = -p.bias / 2.0 - incident / 4.0
        coupling = {
            (i, j): -p.coupling[i, j] / 4.0
            for i in range(p.n)
            for j in range(i + 1, p.n)
            if p.coupling[i, j] != 0.0
        }
        offset = float(-p.bias.sum() / 2.0 - p.coupling.sum() / 4.0)
        mapping = [("z", i) for i in range(p.n)]
        return IsingProblem(n=p.n, field=field, coupling=coupling, offset=offset), mapping
    raise TypeError(f"unsupported parameter type {type(p).__name__}")


@dataclass(frozen=True)
class PhaseStatistics:
    """Sufficient-statistic means of one phase (data side or model side).

    For an RBM: `mean_visible`, `mean_hidden`, and the (n_visible, n_hidden)
    visible-hidden correlation block.  For a BM: `mean_hidden` is None and
    `correlations` is the full symmetric (n, n) matrix with the unit means on
    its diagonal (z_i^2 = z_i).
    """

    mean_visible: np.ndarray
    mean_hidden: np.ndarray | None
    correlations: np.ndarray

    @property
    def mean_units(self) -> np.ndarray:
        return self.mean_visible

    def __post_init__(self):
        for arr in (self.mean_visible, self.mean_hidden, self.correlations):
            if arr is not None and (np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12)):
                raise DomainError("phase statistics must lie in [0, 1]")


@dataclass(frozen=True)
class RbmGradients:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray


@dataclass(frozen=True)
class BmGradients:
    bias: np.ndarray
    coupling: np.ndarray


GradientSet = Union[RbmGradients, BmGradients]


def hidden_conditional(p: RbmParams, v: np.ndarray) -> np.ndarray:
    """p(h_j = 1 | v) = logistic(c_j + sum_i v_i W_ij), rows aligned with v."""
    logits = p.hidden_bias + v @ p.weights
    return 1.0 / (1.0 + np.exp(-logits))


def positive_phase(p: Params, batch) -> PhaseStatistics:
    """Data-side statistics; RBM hidden units use exact conditionals."""
    if isinstance(p, RbmParams):
        v = _as_binary(batch, p.n_visible, "batch")
        if v.shape[0] == 0:
            raise EmptyBatchError("positive phase needs a nonempty batch")
        hp = hidden_conditional(p, v)
        return PhaseStatistics(
            mean_visible=v.mean(axis=0),
            mean_hidden=hp.mean(axis=0),
            correlations=v.T @ hp / v.shape[0],
        )
    if isinstance(p, BmParams):
        z = _as_binary(batch, p.n, "batch")
        if z.shape[0] == 0:
            raise EmptyBatchError("positive phase needs a nonempty batch")
        corr = z.T @ z / z.shape[0]
        return PhaseStatistics(mean_visible=z.mean(axis=0), mean_hidden=None, correlations=corr)
    raise TypeError(f"unsupported parameter type {type(p).__name__}")


def _spin_to_unit_stats(first: np.ndarray, second: np.ndarray):
    """Map spin moments to {0,1} statistics via z = (1 + s) / 2."""
    mean_z = (1.0 + first) / 2.0
    zz = (1.0 + first[:, None] + first[None, :] + second) / 4.0
    return np.clip(mean_z, 0.0, 1.0), np.clip(zz, 0.0, 1.0)


def negative_phase(
    p: Params, backend: str, cfg=None, weighting: str = "multiplicity", client_config=None
) -> PhaseStatistics:
    """Model-side statistics estimated by sampling the Ising image.

    `backend="exact"` uses the enumerated Boltzmann distribution directly (no
    read-budget quantization); other backends sample, estimate spin moments
    with the given weighting, and map them back to {0,1} statistics.
    """
    problem, _ = to_ising(p)
    if backend == "exact":
        if problem.n > EXACT_UNIT_CAP:
            raise SizeLimitError(f"{problem.n} units exceed exact cap {EXACT_UNIT_CAP}")
        moments = exact_enumerate(problem, beta=1.0).moments()
    else:
        ss = sample(backend, problem, cfg, client_config=client_config)
        moments = estimate_moments(ss, weighting)
    mean_z, zz = _spin_to_unit_stats(moments.first, moments.second)
    if isinstance(p, RbmParams):
        nv = p.n_visible
        return PhaseStatistics(
            mean_visible=mean_z[:nv],
            mean_hidden=mean_z[nv:],
            correlations=zz[:nv, nv:],
        )
    return PhaseStatistics(mean_visible=mean_z, mean_hidden=None, correlations=zz)


def stats_energy(p: Params, stats: PhaseStatistics) -> float:
    """Expected model energy under a phase (energy is linear in the stats)."""
    if isinstance(p, RbmParams):
        return float(
            -p.visible_bias @ stats.mean_visible
            - p.hidden_bias @ stats.mean_hidden
            - np.sum(p.weights * stats.correlations)
        )
    return float(-p.bias @ stats.mean_units - np.sum(p.coupling * stats.correlations))


def energy_difference_loss(p: Params, batch, neg: PhaseStatistics) -> float:
    """Mean data energy minus expected model energy."""
    pos = positive_phase(p, batch)
    return stats_energy(p, pos) - stats_energy(p, neg)


def gradients_from_phases(p: Params, pos: PhaseStatistics, neg: PhaseStatistics) -> GradientSet:
    """Model-phase minus data-phase statistics, shaped like the parameters."""
    if isinstance(p, RbmParams):
        return RbmGradients(
            weights=neg.correlations - pos.correlations,
            visible_bias=neg.mean_visible - pos.mean_visible,
            hidden_bias=neg.mean_hidden - pos.mean_hidden,
        )
    diff = neg.correlations - pos.correlations
    return BmGradients(bias=neg.mean_units - pos.mean_units, coupling=np.triu(diff, k=1))


def parameter_gradients(
    p: Params, batch, backend: str, cfg=None, weighting: str = "multiplicity"
) -> GradientSet:
    """NLL gradient estimate: model-phase minus data-phase statistics.

    Returned values are descent increments: subtracting them scaled by a
    learning rate moves parameters toward the data.
    """
    pos = positive_phase(p, batch)
    neg = negative_phase(p, backend, cfg, weighting)
    return gradients_from_phases(p, pos, neg)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def rbm_free_energy(p: RbmParams, v: np.ndarray) -> np.ndarray:
    """F(v) = -b.v - sum_j softplus(c_j + (vW)_j); p(v) ~ exp(-F(v))."""
    v = _as_binary(v, p.n_visible, "visible batch")
    return -(v @ p.visible_bias) - _softplus(p.hidden_bias + v @ p.weights).sum(axis=1)


def _all_binary(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.float64)


def exact_nll(p: Params, data) -> float:
    """Exact average negative log-likelihood by full enumeration."""
    if p.n_units > EXACT_UNIT_CAP:
        raise SizeLimitError(f"{p.n_units} units exceed exact cap {EXACT_UNIT_CAP}")
    if isinstance(p, RbmParams):
        data = _as_binary(data, p.n_visible, "data")
        if data.shape[0] == 0:
            raise EmptyBatchError("exact_nll needs data")
        free = rbm_free_energy(p, _all_binary(p.n_visible))
        log_z = _logsumexp(-free)
        return float(rbm_free_energy(p, data).mean() + log_z)
    data = _as_binary(data, p.n, "data")
    if data.shape[0] == 0:
        raise EmptyBatchError("exact_nll needs data")
    energies = bm_energies(p, _all_binary(p.n))
    log_z = _logsumexp(-energies)
    return float(bm_energies(p, data).mean() + log_z)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    backend: str = "exact"
    sampler: SamplerConfig | None = None
    weight_init_scale: float = 0.01
    seed: int = 0
    track_nll: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")


def _step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence((seed, step)).generate_state(1, dtype=np.uint64)[0])


def train(p0: Params, data, tc: TrainConfig) -> tuple[Params, list[dict]]:
    """Minibatch gradient descent on the sampled NLL gradient.

    Deterministic given `tc.seed`: batch order and per-step sampler seeds are
    derived from it.  Emits one metrics record per epoch with the mean batch
    energy-difference loss and, when the model is small enough, the exact NLL.
    """
    if isinstance(p0, RbmParams):
        data = _as_binary(data, p0.n_visible, "data")
    else:
        data = _as_binary(data, p0.n, "data")
    if data.shape[0] == 0:
        raise EmptyBatchError("training needs data")
    rng = np.random.default_rng(np.random.SeedSequence((tc.seed, 0)))
    params = p0
    metrics: list[dict] = []
    step = 0
    for epoch in range(tc.epochs):
        order = rng.permutation(data.shape[0])
        losses = []
        for start in range(0, data.shape[0], tc.batch_size):
            batch = data[order[start : start + tc.batch_size]]
            cfg = tc.sampler
            if cfg is not None:
                cfg = replace(cfg, seed=_step_seed(tc.seed, step))
            pos = positive_phase(params, batch)
            neg = negative_phase(params, tc.backend, cfg)
            losses.append(stats_energy(params, pos) - stats_energy(params, neg))
            params = _apply(params, gradients_from_phases(params, pos, neg), tc.learning_rate)
            step += 1
        record = {"epoch": epoch, "loss": float(np.mean(losses))}
        if tc.track_nll and params.n_units <= EXACT_UNIT_CAP:
            record["nll"] = exact_nll(params, data)
        metrics.append(record)
    return params, metrics


def _apply(p: Params, g: GradientSet, lr: float) -> Params:
    if isinstance(p, RbmParams):
        arrays = (
            p.weights - lr * g.weights,
            p.visible_bias - lr * g.visible_bias,
            p.hidden_bias - lr * g.hidden_bias,
        )
    else:
        arrays = (p.bias - lr * g.bias, p.coupling - lr * g.coupling)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise DivergenceError("non-finite parameter after update")
    if isinstance(p, RbmParams):
        return RbmParams(p.n_visible, p.n_hidden, *arrays)
    return BmParams(p.n, *arrays)


def bars_and_stripes(side: int, seed: int = 0) -> np.ndarray:
    """All 2^(side+1) - 2 distinct bar/stripe patterns, shuffled by seed.

    Row patterns make every row constant; column patterns every column; the
    all-zeros and all-ones grids appear once each.
    """
    if side < 2:
        raise DomainError("side must be >= 2")
    patterns = set()
    for mask in range(1 << side):
        bits = [(mask >> r) & 1 for r in range(side)]
        patterns.add(tuple(b for b in bits for _ in range(side)))  # constant rows
        patterns.add(tuple(bits[c % side] for c in range(side * side)))  # constant cols
    ordered = sorted(patterns)
    rng = np.random.default_rng(seed)
    return np.array(ordered, dtype=np.float64)[rng.permutation(len(ordered))]


# ---------------------------------------------------------------------------
# File formats: datasets are one 0/1 string per line; metrics are NDJSON.
# ---------------------------------------------------------------------------


def save_dataset(path, configs: np.ndarray):
    configs = np.asarray(configs)
    with open(path, "w") as fh:
        for row in configs:
            fh.write("".join(str(int(v)) for v in row) + "\n")


def load_dataset(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([int(ch) for ch in line])
    return np.asarray(rows, dtype=np.float64)


def save_metrics(path, metrics: list[dict]):
    with open(path, "w") as fh:
        for record in metrics:
            fh.write(json.dumps(record) + "\n")


def save_params(path, p: Params):
    """Parameters as JSON; floats round-trip exactly."""
    if isinstance(p, RbmParams):
        payload = {
            "type": "rbm",
            "n_visible": p.n_visible,
            "n_hidden": p.n_hidden,
            "weights": p.weights.tolist(),
            "visible_bias": p.visible_bias.tolist(),
            "hidden_bias": p.hidden_bias.tolist(),
        }
    else:
        payload = {
            "type": "bm",
            "n": p.n,
            "bias": p.bias.tolist(),
            "coupling": p.coupling.tolist(),
        }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_params(path) -> Params:
    with open(path) as fh:
        payload = json.load(fh)
    kind = payload.get("type")
    if kind == "rbm":
        return RbmParams(
            n_visible=payload["n_visible"],
            n_hidden=payload["n_hidden"],
            weights=np.asarray(payload["weights"]),
            visible_bias=np.asarray(payload["visible_bias"]),
            hidden_bias=np.asarray(payload["hidden_bias"]),
        )
    if kind == "bm":
        return BmParams(
            n=payload["n"],
            bias=np.asarray(payload["bias"]),
            coupling=np.asarray(payload["coupling"]),
        )
    raise DomainError(f"unknown parameter file type {kind!r}")
