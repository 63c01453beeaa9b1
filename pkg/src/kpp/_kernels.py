"""Numba-compiled Monte Carlo inner loops.

Both kernels consume pre-drawn uniforms so that all randomness lives in the
caller's per-stream generators; the kernels themselves are pure functions.
A chain consumes exactly one uniform per proposed flip, accepted or not.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def anneal_reads(Jsym, h, temps, sweeps_per_stage, inits, uniforms):
    """Independent single-flip Metropolis chains under a cooling ladder.

    Each read r starts from ``inits[r]`` and sweeps sites 0..n-1 at every
    temperature of ``temps`` for ``sweeps_per_stage`` sweeps.  Returns both
    the best-energy state each read visited (the optimizer output) and the
    final chain state (an approximate Boltzmann sample at the last
    temperature).  Energies are tracked incrementally; the caller
    re-evaluates them exactly afterwards.
    """
    reads, n = inits.shape
    best_spins = np.empty((reads, n), np.float64)
    best_energy = np.empty(reads, np.float64)
    final_spins = np.empty((reads, n), np.float64)
    for r in prange(reads):
        s = inits[r].copy()
        f = np.empty(n, np.float64)
        for i in range(n):
            acc = h[i]
            for j in range(n):
                acc += Jsym[i, j] * s[j]
            f[i] = acc
        e = 0.0
        for i in range(n):
            e += h[i] * s[i]
            for j in range(i + 1, n):
                e += Jsym[i, j] * s[i] * s[j]
        best_e = e
        best_s = s.copy()
        col = 0
        for t_idx in range(temps.shape[0]):
            inv_t = 1.0 / temps[t_idx]
            for _ in range(sweeps_per_stage):
                for i in range(n):
                    de = -2.0 * s[i] * f[i]
                    u = uniforms[r, col]
                    col += 1
                    if de <= 0.0 or u < np.exp(-de * inv_t):
                        s[i] = -s[i]
                        delta = 2.0 * s[i]
                        for j in range(n):
                            f[j] += delta * Jsym[i, j]
                        e += de
                        if e < best_e:
                            best_e = e
                            best_s[:] = s
        best_spins[r] = best_s
        best_energy[r] = best_e
        final_spins[r] = s
    return best_spins, best_energy, final_spins


@njit(cache=True)
def metropolis_chain(Jsym, h, beta, sweeps, burn_in, thin, init, uniforms):
    """Fixed-temperature random-site Metropolis chain.

    Sites are proposed uniformly at random (two uniforms per step: site pick,
    then accept draw) so the chain satisfies detailed balance for Boltzmann
    at ``beta`` and mixes to the uniform law in the beta -> 0 limit, where a
    systematic scan would deterministically alternate a state with its
    complement.  One sweep is ``n`` steps.  After ``burn_in`` sweeps, the
    chain state after every ``thin``-th step is recorded (per step, not per
    sweep: at beta ~ 0 every proposal is accepted, so any fixed even number
    of flips between records would freeze the state parity).
    """
    n = init.shape[0]
    s = init.copy()
    f = np.empty(n, np.float64)
    for i in range(n):
        acc = h[i]
        for j in range(n):
            acc += Jsym[i, j] * s[j]
        f[i] = acc
    n_keep = (sweeps * n) // thin
    kept = np.empty((n_keep, n), np.float64)
    col = 0
    k = 0
    kept_step = 0
    for sweep in range(burn_in + sweeps):
        for _ in range(n):
            i = int(uniforms[col] * n)
            if i == n:
                i = n - 1
            col += 1
            de = -2.0 * s[i] * f[i]
            u = uniforms[col]
            col += 1
            if de <= 0.0 or u < np.exp(-de * beta):
                s[i] = -s[i]
                delta = 2.0 * s[i]
                for j in range(n):
                    f[j] += delta * Jsym[i, j]
            if sweep >= burn_in:
                kept_step += 1
                if kept_step % thin == 0 and k < n_keep:
                    kept[k] = s
                    k += 1
    return kept[:k]
