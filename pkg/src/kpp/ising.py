"""Canonical QUBO and Ising problem forms, energies, and conversions.

Energy convention (no leading minus, matching the selection objective):

    QUBO:   E(x) = sum_i h_i x_i + sum_{i<j} J_ij x_i x_j + offset,   x_i in {0, 1}
    Ising:  E(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset,   s_i in {-1, +1}

Physics texts often write the Ising Hamiltonian with a leading minus; this
module does not.  The two forms are related by the substitution
x = (1 + s) / 2, and every conversion propagates the constant offset so that
absolute energies (not just argmins) agree exactly between forms.

Problems are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ParseError

Coeffs = dict[tuple[int, int], float]


def _normalize_quadratic(n: int, quadratic, diagonal_hint: str) -> Coeffs:
    """Fold arbitrary (i, j) keys into a strictly-upper-triangular map.

    Symmetric or lower-triangular input is accepted; (i, j) and (j, i)
    coefficients are summed into the (min, max) key.  Diagonal keys are
    rejected with a hint naming where the term belongs.
    """
    out: Coeffs = {}
    for (i, j), c in dict(quadratic).items():
        i, j = int(i), int(j)
        if i == j:
            raise DomainError(
                f"diagonal coefficient ({i},{i}) not allowed; {diagonal_hint}"
            )
        if not 0 <= i < n or not 0 <= j < n:
            raise DimensionError(f"index ({i},{j}) out of range for n={n}")
        c = float(c)
        if not math.isfinite(c):
            raise DomainError(f"non-finite coefficient at ({i},{j})")
        key = (i, j) if i < j else (j, i)
        out[key] = out.get(key, 0.0) + c
    return out


def _check_linear(n: int, linear) -> np.ndarray:
    vec = np.asarray(linear, dtype=np.float64)
    if vec.shape != (n,):
        raise DimensionError(f"linear terms have shape {vec.shape}, expected ({n},)")
    if not np.all(np.isfinite(vec)):
        raise DomainError("non-finite linear coefficient")
    vec = vec.copy()
    vec.flags.writeable = False
    return vec


@dataclass(frozen=True)
class QuboProblem:
    """Quadratic objective over binary variables x in {0, 1}^n."""

    n: int
    linear: np.ndarray
    quadratic: Coeffs = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "linear", _check_linear(self.n, self.linear))
        object.__setattr__(
            self,
            "quadratic",
            _normalize_quadratic(self.n, self.quadratic, "use a linear term (x_i^2 = x_i)"),
        )
        if not math.isfinite(self.offset):
            raise DomainError("non-finite offset")


@dataclass(frozen=True)
class IsingProblem:
    """Quadratic energy over spins s in {-1, +1}^n."""

    n: int
    field: np.ndarray
    coupling: Coeffs = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "field", _check_linear(self.n, self.field))
        object.__setattr__(
            self,
            "coupling",
            _normalize_quadratic(self.n, self.coupling, "diagonal couplings are forbidden (s_i^2 = 1 is a constant)"),
        )
        if not math.isfinite(self.offset):
            raise DomainError("non-finite offset")

    def coupling_matrix(self) -> np.ndarray:
        """Dense symmetric coupling matrix with zero diagonal."""
        mat = np.zeros((self.n, self.n))
        for (i, j), c in self.coupling.items():
            mat[i, j] = c
            mat[j, i] = c
        return mat


def _as_config(values, n: int, allowed: tuple[int, int], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise DimensionError(f"{what} has length {arr.shape}, expected ({n},)")
    lo, hi = allowed
    if not np.all((arr == lo) | (arr == hi)):
        raise DomainError(f"{what} entries must be in {{{lo}, {hi}}}")
    return arr


def qubo_energy(p: QuboProblem, x) -> float:
    """Evaluate the QUBO objective at a binary configuration."""
    arr = _as_config(x, p.n, (0, 1), "binary config")
    e = float(p.linear @ arr) + p.offset
    for (i, j), c in p.quadratic.items():
        e += c * arr[i] * arr[j]
    return e


def ising_energy(p: IsingProblem, s) -> float:
    """Evaluate the Ising energy at a spin configuration."""
    arr = _as_config(s, p.n, (-1, 1), "spin config")
    e = float(p.field @ arr) + p.offset
    for (i, j), c in p.coupling.items():
        e += c * arr[i] * arr[j]
    return e


def ising_energies(p: IsingProblem, spins: np.ndarray) -> np.ndarray:
    """Vectorized Ising energies for a (m, n) matrix of +-1 rows."""
    spins = np.asarray(spins, dtype=np.float64)
    if spins.ndim != 2 or spins.shape[1] != p.n:
        raise DimensionError(f"spin matrix has shape {spins.shape}, expected (m, {p.n})")
    e = spins @ p.field + p.offset
    for (i, j), c in p.coupling.items():
        e += c * spins[:, i] * spins[:, j]
    return e


def qubo_to_ising(p: QuboProblem) -> IsingProblem:
    """Convert under x_i = (1 + s_i) / 2; energies agree exactly on all configs.

    J'_ij = J_ij / 4
    h'_i  = h_i / 2 + (sum over couplings incident to i) / 4
    off'  = offset + sum_i h_i / 2 + sum_{i<j} J_ij / 4
    """
    h = p.linear / 2.0
    offset = p.offset + float(np.sum(p.linear)) / 2.0
    coupling: Coeffs = {}
    for (i, j), c in p.quadratic.items():
        coupling[(i, j)] = c / 4.0
        h[i] += c / 4.0
        h[j] += c / 4.0
        offset += c / 4.0
    return IsingProblem(n=p.n, field=h, coupling=coupling, offset=offset)


def ising_to_qubo(p: IsingProblem) -> QuboProblem:
    """Inverse of :func:`qubo_to_ising`; round-trips coefficients exactly."""
    quadratic: Coeffs = {}
    h = 2.0 * p.field.copy()
    offset = p.offset
    for (i, j), c in p.coupling.items():
        quadratic[(i, j)] = 4.0 * c
        h[i] -= 2.0 * c
        h[j] -= 2.0 * c
    offset -= float(np.sum(h)) / 2.0 + sum(quadratic.values()) / 4.0
    return QuboProblem(n=p.n, linear=h, quadratic=quadratic, offset=offset)


def binary_to_spins(x) -> np.ndarray:
    """Map {0,1} to {-1,+1}: s = 2x - 1."""
    return 2.0 * np.asarray(x, dtype=np.float64) - 1.0


def spins_to_binary(s) -> np.ndarray:
    """Map {-1,+1} to {0,1}: x = (1 + s) / 2."""
    return (1.0 + np.asarray(s, dtype=np.float64)) / 2.0


# ---------------------------------------------------------------------------
# Problem file format
#
# header:   `p qubo N` or `p ising N`
# body:     `i j c` with 0-based indices; i == j is a linear term, i < j a
#           quadratic term; one optional `offset c` line; `#` starts a comment.
# ---------------------------------------------------------------------------


def parse_problem(text: str) -> QuboProblem | IsingProblem:
    """Parse the coordinate-list problem format."""
    kind = None
    n = 0
    linear = None
    quadratic: Coeffs = {}
    seen_linear: set[int] = set()
    offset = 0.0
    offset_seen = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if kind is None:
            if parts[0] != "p":
                raise ParseError("expected header `p qubo N` or `p ising N`", lineno)
            if len(parts) != 3 or parts[1] not in ("qubo", "ising"):
                raise ParseError(f"malformed header {line!r}", lineno)
            try:
                n = int(parts[2])
            except ValueError:
                raise ParseError(f"bad variable count {parts[2]!r}", lineno) from None
            if n < 0:
                raise ParseError("variable count must be nonnegative", lineno)
            kind = parts[1]
            linear = np.zeros(n)
            continue
        if parts[0] == "offset":
            if offset_seen:
                raise ParseError("duplicate offset line", lineno)
            if len(parts) != 2:
                raise ParseError("offset line takes exactly one value", lineno)
            try:
                offset = float(parts[1])
            except ValueError:
                raise ParseError(f"bad offset {parts[1]!r}", lineno) from None
            offset_seen = True
            continue
        if len(parts) != 3:
            raise ParseError(f"malformed line {line!r}", lineno)
        try:
            i, j, c = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"malformed line {line!r}", lineno) from None
        if not 0 <= i < n or not 0 <= j < n:
            raise ParseError(f"index out of range for n={n}", lineno)
        if i == j:
            if i in seen_linear:
                raise ParseError(f"duplicate linear entry for {i}", lineno)
            seen_linear.add(i)
            linear[i] = c
        else:
            key = (min(i, j), max(i, j))
            if key in quadratic:
                raise ParseError(f"duplicate entry for ({key[0]},{key[1]})", lineno)
            quadratic[key] = c

    if kind is None:
        raise ParseError("missing header `p qubo N` or `p ising N`")
    if kind == "qubo":
        return QuboProblem(n=n, linear=linear, quadratic=quadratic, offset=offset)
    return IsingProblem(n=n, field=linear, coupling=quadratic, offset=offset)


def serialize_problem(p: QuboProblem | IsingProblem) -> str:
    """Canonical text form: header, offset if nonzero, nonzero terms in order."""
    if isinstance(p, QuboProblem):
        kind, linear, quadratic = "qubo", p.linear, p.quadratic
    elif isinstance(p, IsingProblem):
        kind, linear, quadratic = "ising", p.field, p.coupling
    else:
        raise TypeError(f"cannot serialize {type(p).__name__}")
    lines = [f"p {kind} {p.n}"]
    if p.offset != 0.0:
        lines.append(f"offset {float(p.offset)!r}")
    for i in range(p.n):
        if linear[i] != 0.0:
            lines.append(f"{i} {i} {float(linear[i])!r}")
    for (i, j) in sorted(quadratic):
        if quadratic[(i, j)] != 0.0:
            lines.append(f"{i} {j} {float(quadratic[(i, j)])!r}")
    return "\n".join(lines) + "\n"
