"""Discrete latent relaxation and the KL objective against a Boltzmann prior.

The continuous relaxation maps uniform noise rho and a Bernoulli probability
q to a smooth proxy zeta in [0, 1] for the binary latent variable:

    zeta(rho, q) = (1 / beta) * log[ max(rho + q - 1, 0) / q * (e^beta - 1) + 1 ]

zeta is exactly 0 iff rho <= 1 - q, so P(zeta > 0) = q under rho ~ U(0, 1),
and zeta = 1 at rho = 1.  The KL divergence of a factorized posterior against
a Boltzmann prior decomposes into the posterior's negative entropy, the
expected prior energy (closed form in q, since the energy is multilinear),
and log Z; only the gradient of log Z ever needs sampling, never its value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ebm import BmGradients, BmParams, EXACT_UNIT_CAP, bm_energies, negative_phase
from .errors import DimensionError, DomainError, KinkError, SizeLimitError


@dataclass(frozen=True)
class RelaxationParams:
    """Relaxation scale and the probability clamp."""

    beta: float = 0.5
    epsilon: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise DomainError("beta must be finite and positive")
        if not 0 < self.epsilon < 0.5:
            raise DomainError("epsilon must lie in (0, 0.5)")


@dataclass(frozen=True)
class BernoulliProbs:
    """Per-unit activation probabilities, clamped away from {0, 1}."""

    q: np.ndarray
    epsilon: float = 1e-6

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1:
            raise DimensionError("q must be a vector")
        if not np.all(np.isfinite(q)) or np.any(q < 0.0) or np.any(q > 1.0):
            raise DomainError("q entries must lie in [0, 1]")
        object.__setattr__(self, "q", np.clip(q, self.epsilon, 1.0 - self.epsilon))

    def __len__(self) -> int:
        return len(self.q)


def _clamp_q(q: float, eps: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q={q} outside [0, 1]")
    return min(max(q, eps), 1.0 - eps)


def _zeta(rho, q, beta):
    """Vectorized relaxation formula; inputs already validated/clamped.

    The upper clamp removes float spill above 1.0 (rho + q - 1.0 can exceed
    q by an ulp at rho = 1), keeping the contractual range [0, 1] exact.
    """
    a = math.expm1(beta)
    lifted = np.maximum(rho + q - 1.0, 0.0) / q
    return np.minimum(np.log1p(lifted * a) / beta, 1.0)


def relax_zeta(rho: float, q: float, rp: RelaxationParams = RelaxationParams()) -> float:
    """Continuous relaxation of one Bernoulli(q) draw from noise rho."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho={rho} outside [0, 1]")
    q = _clamp_q(q, rp.epsilon)
    return float(_zeta(rho, q, rp.beta))


def zeta_partial_q(rho: float, q: float, rp: RelaxationParams = RelaxationParams()) -> float:
    """Analytic d zeta / d q; zero on the flat region rho < 1 - q.

    The formula has a kink at rho = 1 - q where the two one-sided derivatives
    differ; evaluation exactly there raises KinkError so the caller can pick a
    subgradient deliberately.  (The sampling path hits the kink with
    probability zero.)
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho={rho} outside [0, 1]")
    q = _clamp_q(q, rp.epsilon)
    if rho == 1.0 - q:
        raise KinkError(f"derivative undefined at rho = 1 - q = {rho}")
    if rho < 1.0 - q:
        return 0.0
    a = math.expm1(rp.beta)
    u = (rho + q - 1.0) / q
    return float(a * (1.0 - rho) / (q * q) / (rp.beta * (a * u + 1.0)))


def sample_relaxed(q: BernoulliProbs, rp: RelaxationParams, seed: int) -> np.ndarray:
    """Draw rho ~ U(0,1) i.i.d. and relax elementwise; deterministic by seed."""
    rng = np.random.default_rng(seed)
    rho = rng.random(len(q))
    return _zeta(rho, q.q, rp.beta)


@dataclass(frozen=True)
class KlBreakdown:
    """The three KL terms; `total` is their sum and is >= 0 up to roundoff."""

    neg_entropy: float
    expected_energy: float
    log_partition: float

    @property
    def total(self) -> float:
        return self.neg_entropy + self.expected_energy + self.log_partition


def kl_boltzmann_exact(q: BernoulliProbs, prior: BmParams) -> KlBreakdown:
    """KL(q || Boltzmann(prior)) computed exactly, term by term.

    Negative entropy and the expected energy are closed forms in q (the
    energy is multilinear and q is factorized); log Z is enumerated.
    """
    if prior.n != len(q):
        raise DimensionError(f"prior has {prior.n} units, q has {len(q)}")
    if prior.n > EXACT_UNIT_CAP:
        raise SizeLimitError(f"n={prior.n} exceeds exact cap {EXACT_UNIT_CAP}")
    qv = q.q
    neg_entropy = float(np.sum(qv * np.log(qv) + (1.0 - qv) * np.log(1.0 - qv)))
    expected_energy = float(-prior.bias @ qv - qv @ prior.coupling @ qv)
    idx = np.arange(1 << prior.n)
    configs = ((idx[:, None] >> np.arange(prior.n)) & 1).astype(np.float64)
    energies = bm_energies(prior, configs)
    m = float(np.max(-energies))
    log_partition = m + float(np.log(np.sum(np.exp(-energies - m))))
    return KlBreakdown(
        neg_entropy=neg_entropy,
        expected_energy=expected_energy,
        log_partition=log_partition,
    )


def kl_direct(q: BernoulliProbs, prior: BmParams) -> float:
    """Direct-definition KL by summing q(z) log(q(z) / p(z)) over all z."""
    if prior.n > EXACT_UNIT_CAP:
        raise SizeLimitError(f"n={prior.n} exceeds exact cap {EXACT_UNIT_CAP}")
    idx = np.arange(1 << prior.n)
    configs = ((idx[:, None] >> np.arange(prior.n)) & 1).astype(np.float64)
    qv = q.q
    log_qz = configs @ np.log(qv) + (1.0 - configs) @ np.log(1.0 - qv)
    energies = bm_energies(prior, configs)
    m = float(np.max(-energies))
    log_z = m + float(np.log(np.sum(np.exp(-energies - m))))
    log_pz = -energies - log_z
    return float(np.sum(np.exp(log_qz) * (log_qz - log_pz)))


def kl_grad_theta(
    q: BernoulliProbs, prior: BmParams, backend: str, cfg=None, client_config=None
) -> BmGradients:
    """Gradient of the KL w.r.t. the prior parameters.

    d/d theta E_q[E_theta] is closed form in q; d log Z / d theta is the
    negative model expectation of dE/d theta, estimated from the configured
    sampler (the spec's offload target).  With the exact backend this equals
    finite differences of the exact KL.
    """
    if prior.n != len(q):
        raise DimensionError(f"prior has {prior.n} units, q has {len(q)}")
    stats = negative_phase(prior, backend, cfg, client_config=client_config)
    qv = q.q
    bias_grad = stats.mean_units - qv
    coupling_grad = np.triu(stats.correlations - np.outer(qv, qv), k=1)
    return BmGradients(bias=bias_grad, coupling=coupling_grad)
