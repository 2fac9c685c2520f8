"""Exact click-pattern probabilities and the collision / distance analysis.

Threshold probabilities are Torontonians of reduced kernels, PNR
probabilities are Hafnians, and the collision probability ties the two
distributions together: the L1 distance between the PNR and threshold
distributions equals the total collision probability.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import NumericalError
from .gaussian import (
    ClickPattern,
    PNRPattern,
    apply_interferometer,
    haar_unitary,
    husimi_covariance,
    kernel_matrix,
    reduce_matrix,
    squeezed_state,
    sqrt_det_sigma,
)
from .hafnian import hafnian_xo
from .torontonian import torontonian

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-10
ENUMERATION_MODES = 12
COLLISION_MODES = 10
PURITY_TOL = 1e-8


def _require_zero_mean(state):
    if np.abs(state.r).max(initial=0.0) > 1e-12:
        raise ValueError("probability formulas require a zero-mean state")


def _as_click_pattern(state, pattern):
    if isinstance(pattern, ClickPattern):
        if pattern.modes != state.modes:
            raise ValueError("pattern mode count does not match the state")
        return pattern
    return ClickPattern(state.modes, tuple(pattern))


def _clamp_probability(p, where):
    if p < -CLAMP_TOL or p > 1 + CLAMP_TOL:
        raise NumericalError(f"{where}: probability {p!r} outside [0, 1] beyond tolerance")
    if p < 0 or p > 1:
        log.warning("%s: clamped probability %.3e to [0, 1]", where, p)
    return min(max(p, 0.0), 1.0)


def state_kernel(state):
    """(Husimi covariance, kernel, sqrt(det Sigma)) for a state; shared precompute."""
    sigma = husimi_covariance(state)
    return sigma, kernel_matrix(sigma), sqrt_det_sigma(sigma)


def threshold_prob(state, pattern, threads=1):
    """Probability of a threshold click pattern: Tor(O_(S)) / sqrt(det Sigma)."""
    _require_zero_mean(state)
    pattern = _as_click_pattern(state, pattern)
    sigma, kernel, sqdet = state_kernel(state)
    tor = torontonian(reduce_matrix(kernel.matrix, pattern), threads=threads)
    return _clamp_probability(tor.value / sqdet, "threshold_prob")


def pnr_prob(state, pattern):
    """Probability of a photon-number outcome: Haf(X O_(S)) / (sqrt(det Sigma) prod s_k!)."""
    _require_zero_mean(state)
    if not isinstance(pattern, PNRPattern):
        pattern = PNRPattern(state.modes, tuple(pattern))
    sigma, kernel, sqdet = state_kernel(state)
    reduced = reduce_matrix(kernel.matrix, pattern)
    if reduced.shape[0] == 0:
        haf = 1.0
    else:
        haf = hafnian_xo(reduced)
    denom = sqdet * math.prod(math.factorial(c) for c in pattern.counts)
    return _clamp_probability(haf / denom, "pnr_prob")


def threshold_prob_oracle(state, pattern):
    """Same probability by inclusion-exclusion over vacuum overlaps.

    Uses only determinants of submatrices of Sigma (the probability that a
    set of modes T all read vacuum is 1/sqrt(det Sigma_(T))), never forming
    Sigma^{-1} or the kernel; independent cross-check of the Torontonian
    route and its sign convention.
    """
    _require_zero_mean(state)
    pattern = _as_click_pattern(state, pattern)
    sigma = husimi_covariance(state)
    clicked = [i - 1 for i in pattern.clicked]
    silent = [i for i in range(state.modes) if i + 1 not in pattern.clicked]
    total = 0.0
    for size in range(len(clicked) + 1):
        for combo in itertools.combinations(clicked, size):
            kept = sorted(silent + list(combo))
            if kept:
                idx = np.array(kept + [i + state.modes for i in kept])
                det = np.linalg.det(sigma.sigma[np.ix_(idx, idx)]).real
            else:
                det = 1.0
            total += (-1) ** size / math.sqrt(det)
    return _clamp_probability(total, "threshold_prob_oracle")


def _patterns_with_support(support, total):
    """All count vectors over ``support`` (0-based), each >= 1, summing to ``total``."""
    if total < len(support) or not support:
        return
    for cuts in itertools.combinations(range(1, total), len(support) - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(b - a for a, b in zip(bounds, bounds[1:]))


@dataclass(frozen=True)
class TorHafnianSum:
    """Partial sums of the PNR expansion of a Torontonian."""

    pattern: ClickPattern
    partial_sums: tuple  # (total photons N, cumulative sum) pairs
    value: float
    residual_bound: float


def tor_as_hafnian_sum(state, pattern, photon_cutoff):
    """Expand Tor(O_(S)) as the sum of Hafnian terms over PNR patterns on S.

    Sums Haf(X O_(S')) / prod(s'!) over all PNR patterns supported exactly
    on the click set, with total photons up to ``photon_cutoff``. Partial
    sums increase monotonically toward the Torontonian; the residual bound
    is sqrt(det Sigma) times the probability of more than ``photon_cutoff``
    total photons.
    """
    _require_zero_mean(state)
    pattern = _as_click_pattern(state, pattern)
    if pattern.size > 4:
        raise ValueError("Hafnian-sum expansion limited to |S| <= 4")
    if photon_cutoff < pattern.size:
        raise ValueError("photon cutoff below the click count")
    sigma, kernel, sqdet = state_kernel(state)
    support = [i - 1 for i in pattern.clicked]
    running = 0.0
    partials = []
    for total in range(pattern.size, photon_cutoff + 1):
        for counts in _patterns_with_support(support, total):
            mult = [0] * state.modes
            for mode, c in zip(support, counts):
                mult[mode] = c
            reduced = reduce_matrix(kernel.matrix, mult)
            term = hafnian_xo(reduced) / math.prod(math.factorial(c) for c in counts)
            running += term
        partials.append((total, running))
    if pattern.size == 0:
        partials = [(0, 1.0)]
        running = 1.0
    moments = _state_photon_moments(state)
    tail = float(moments.distribution[photon_cutoff + 1:].sum()) + moments.tail_bound
    return TorHafnianSum(pattern, tuple(partials), running, sqdet * tail)


@dataclass(frozen=True)
class ThresholdDistribution:
    """Exact threshold distribution over all 2^l click patterns."""

    modes: int
    table: dict
    normalization_defect: float

    def __post_init__(self):
        if min(self.table.values()) < -CLAMP_TOL:
            raise NumericalError("negative probability in threshold distribution")
        if abs(self.normalization_defect) > 1e-9:
            raise NumericalError(
                f"threshold distribution normalization defect {self.normalization_defect:.3e}"
            )

    def probability(self, clicked):
        return self.table[tuple(clicked)]

    def items_sorted(self):
        return sorted(self.table.items())

    def total_variation(self, other_table):
        keys = set(self.table) | set(other_table)
        return 0.5 * sum(abs(self.table.get(k, 0.0) - other_table.get(k, 0.0)) for k in keys)


def distribution(state, threads=1):
    """Enumerate threshold probabilities for every click pattern (l <= 12)."""
    _require_zero_mean(state)
    if state.modes > ENUMERATION_MODES:
        raise ValueError(f"full enumeration limited to {ENUMERATION_MODES} modes")
    sigma, kernel, sqdet = state_kernel(state)
    table = {}
    for mask in range(1 << state.modes):
        clicked = tuple(i + 1 for i in range(state.modes) if mask >> i & 1)
        mult = [1 if i + 1 in clicked else 0 for i in range(state.modes)]
        tor = torontonian(reduce_matrix(kernel.matrix, mult), threads=threads)
        table[clicked] = _clamp_probability(tor.value / sqdet, f"distribution{clicked}")
    defect = math.fsum(table.values()) - 1.0
    return ThresholdDistribution(state.modes, table, defect)


@dataclass(frozen=True)
class PhotonMoments:
    """Moments of the total photon number of a product of squeezed vacua."""

    mean: float
    second_moment: float
    tail_bound: float
    distribution: np.ndarray  # q(N) for N = 0..cutoff


def photon_moments(r_vec, cutoff, tail_tol=1e-12):
    """Total-photon-number moments for squeezed-vacuum inputs.

    Builds each mode's photon-number law (even counts only), convolves
    them into q(N), and reports E[N], E[N^2] and the truncation tail. The
    truncated moments are checked against the closed forms
    E[n_i] = sinh^2(r_i), Var[n_i] = sinh^2(2 r_i)/2.
    """
    r_vec = np.atleast_1d(np.asarray(r_vec, dtype=float))
    q = np.zeros(cutoff + 1)
    q[0] = 1.0
    for r in r_vec:
        pmf = _squeezed_pmf(r, cutoff)
        q = np.convolve(q, pmf)[: cutoff + 1]
    tail = max(0.0, 1.0 - float(q.sum()))
    if tail > tail_tol:
        raise ValueError(f"photon cutoff {cutoff} leaves tail {tail:.3e} > {tail_tol:.0e}")
    ns = np.arange(cutoff + 1)
    mean = float(np.dot(q, ns))
    second = float(np.dot(q, ns ** 2))
    mean_exact = float(np.sum(np.sinh(r_vec) ** 2))
    var_exact = float(np.sum(np.sinh(2 * r_vec) ** 2) / 2)
    second_exact = var_exact + mean_exact ** 2
    slack = tail * cutoff ** 2 + 1e-9
    if abs(mean - mean_exact) > slack or abs(second - second_exact) > slack:
        raise NumericalError("truncated photon moments disagree with the closed forms")
    return PhotonMoments(mean, second, tail, q)


def _squeezed_pmf(r, cutoff):
    """Photon-number law of one squeezed vacuum up to ``cutoff``."""
    pmf = np.zeros(cutoff + 1)
    t2 = math.tanh(r) ** 2
    term = 1.0 / math.cosh(r)
    pmf[0] = term
    for m in range(1, cutoff // 2 + 1):
        term *= t2 * (2 * m - 1) / (2 * m)
        pmf[2 * m] = term
    return pmf


def _effective_squeezings(state):
    """Squeezing parameters of the pure normal modes of a zero-mean state.

    The eigenvalues of a pure covariance come in exp(+-2 r_j) pairs; mixed
    states (symplectic eigenvalues above 1) are rejected.
    """
    from .gaussian import symplectic_form

    nus = np.abs(np.linalg.eigvals(1j * symplectic_form(state.modes) @ state.V))
    nus = np.sort(nus)[: state.modes]
    if np.abs(nus - 1).max() > PURITY_TOL:
        raise ValueError("photon moments from the covariance require a pure state")
    eigs = np.sort(np.linalg.eigvalsh(state.V))[::-1][: state.modes]
    return 0.5 * np.log(eigs)


def _state_photon_moments(state, tail_tol=1e-12):
    r_eff = _effective_squeezings(state)
    cutoff = 16
    while True:
        try:
            return photon_moments(r_eff, cutoff, tail_tol=tail_tol)
        except ValueError:
            cutoff *= 2
            if cutoff > 4096:
                raise


@dataclass(frozen=True)
class CollisionReport:
    """Collision probability and the threshold/PNR distance it controls."""

    modes: int
    epsilon: float
    gaps: dict  # click pattern -> (Tor - Haf)/sqrt(det Sigma), all >= 0
    mean_photons: float
    mean_photons_sq: float
    haar_bound: float
    l1_patternwise: float | None = None
    photon_cutoff: int | None = None
    residual_bound: float | None = None

    def __post_init__(self):
        if not -CLAMP_TOL <= self.epsilon <= 1 + CLAMP_TOL:
            raise NumericalError(f"collision probability {self.epsilon!r} outside [0, 1]")
        if self.gaps and min(self.gaps.values()) < -CLAMP_TOL:
            raise NumericalError("threshold probability fell below its collision-free part")


def collision_probability(state, photon_cutoff="auto"):
    """Total collision probability and the per-pattern Tor - Haf gaps.

    epsilon is computed exactly as sum_S (Tor[O_(S)] - Haf[X O_(S)]) /
    sqrt(det Sigma) over all click patterns. The L1 distance between the
    PNR and threshold distributions is also accumulated pattern by pattern
    up to ``photon_cutoff`` ("auto": 8 for l <= 4, skipped above; None:
    always skipped); it matches epsilon within the reported residual bound.
    """
    _require_zero_mean(state)
    if state.modes > COLLISION_MODES:
        raise ValueError(f"collision analysis limited to {COLLISION_MODES} modes")
    if photon_cutoff == "auto":
        photon_cutoff = 8 if state.modes <= 4 else None
    sigma, kernel, sqdet = state_kernel(state)
    gaps = {}
    threshold = {}
    for mask in range(1 << state.modes):
        clicked = tuple(i + 1 for i in range(state.modes) if mask >> i & 1)
        mult = [1 if i + 1 in clicked else 0 for i in range(state.modes)]
        reduced = reduce_matrix(kernel.matrix, mult)
        tor = torontonian(reduced).value
        haf = hafnian_xo(reduced) if reduced.shape[0] else 1.0
        gaps[clicked] = (tor - haf) / sqdet
        threshold[clicked] = tor / sqdet
    epsilon = min(max(math.fsum(gaps.values()), 0.0), 1.0)
    moments = _state_photon_moments(state)
    bound = 8.0 * moments.second_moment / state.modes
    l1 = cutoff_used = residual = None
    if photon_cutoff is not None:
        l1, residual = _l1_patternwise(state, kernel, sqdet, threshold, photon_cutoff, moments)
        cutoff_used = photon_cutoff
    return CollisionReport(
        modes=state.modes,
        epsilon=epsilon,
        gaps=gaps,
        mean_photons=moments.mean,
        mean_photons_sq=moments.second_moment,
        haar_bound=bound,
        l1_patternwise=l1,
        photon_cutoff=cutoff_used,
        residual_bound=residual,
    )


def _l1_patternwise(state, kernel, sqdet, threshold, cutoff, moments):
    """Direct pattern-wise sum of |p(S') - p'(S')| over PNR outcomes up to the cutoff."""
    if cutoff < state.modes:
        raise ValueError("photon cutoff must reach the mode count for the L1 route")
    total = 0.0
    for counts in itertools.product(range(cutoff + 1), repeat=state.modes):
        n = sum(counts)
        if n == 0 or n > cutoff:
            continue
        reduced = reduce_matrix(kernel.matrix, counts)
        p = hafnian_xo(reduced) / (sqdet * math.prod(math.factorial(c) for c in counts))
        if max(counts) <= 1:
            clicked = tuple(i + 1 for i, c in enumerate(counts) if c)
            total += abs(p - threshold[clicked])
        else:
            total += p
    # N = 0: the empty PNR pattern and the empty click pattern coincide.
    tail = float(moments.distribution[cutoff + 1:].sum()) + moments.tail_bound
    return 0.5 * total, 0.5 * tail + 1e-12


@dataclass(frozen=True)
class HaarCollisionResult:
    """Monte Carlo estimate of the Haar-averaged collision probability."""

    modes: int
    trials: int
    mean_epsilon: float
    stderr: float
    bound: float
    epsilons: tuple


def haar_collision_experiment(modes, r_vec, trials, rng):
    """Sample Haar interferometers and compare mean collision probability to 8 E[N^2]/l.

    The bound is strict in expectation; the sample mean is required to stay
    below it (up to roundoff when both sides vanish).
    """
    if modes > 8:
        raise ValueError("Haar collision experiment limited to 8 modes")
    if trials < 30:
        raise ValueError("need at least 30 trials for a meaningful mean")
    r_vec = np.atleast_1d(np.asarray(r_vec, dtype=float))
    if r_vec.size != modes:
        raise ValueError("need one squeezing parameter per mode")
    base = squeezed_state(r_vec)
    eps = []
    for _ in range(trials):
        state = apply_interferometer(base, haar_unitary(modes, rng))
        eps.append(collision_probability(state, photon_cutoff=None).epsilon)
    eps = np.asarray(eps)
    mean = float(eps.mean())
    stderr = float(eps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    bound = 8.0 * photon_moments(r_vec, _auto_cutoff(r_vec)).second_moment / modes
    if mean > bound + 1e-12:
        raise NumericalError(f"sample mean collision probability {mean:.6g} exceeds the bound {bound:.6g}")
    return HaarCollisionResult(modes, trials, mean, stderr, bound, tuple(eps.tolist()))


def _auto_cutoff(r_vec):
    cutoff = 16
    while True:
        try:
            photon_moments(r_vec, cutoff)
            return cutoff
        except ValueError:
            cutoff *= 2
            if cutoff > 4096:
                raise


def haar_bound_confidence(result, confidence=0.95):
    """One-sided upper confidence limit for the mean collision probability."""
    if result.trials < 2:
        return result.mean_epsilon
    tval = stats.t.ppf(confidence, result.trials - 1)
    return result.mean_epsilon + tval * result.stderr
