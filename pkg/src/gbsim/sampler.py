"""Exact threshold-detector sampling by mode-by-mode chain-rule conditioning.

The working state is a signed mixture of Gaussian states. Projecting one
mode onto vacuum is a Gaussian (Schur-complement) update; a click splits
every branch into the unconditioned marginal minus the vacuum-conditioned
branch, doubling the branch count. Weights always sum to one but need not
stay positive.

Branches are stored as stacked arrays (weights, covariances, means); a
step updates each branch in turn, so the per-sample cost follows the
branch count directly (one Schur complement per branch per mode).

The per-mode no-click weight of a branch with block ``V_B`` and mean
``r_B`` is the vacuum overlap

    q = 2 exp(-r_B^T (V_B + 1)^{-1} r_B / 2) / sqrt(det(V_B + 1)).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .gaussian import ClickPattern, QuadratureState, interferometer_symplectic

WEIGHT_TOL = 1e-9
PROB_CLAMP = 1e-10
MIN_EVENT_PROB = 1e-300

_MASK64 = (1 << 64) - 1


def substream_id(seed, index):
    """64-bit substream id for sample ``index`` of a batch.

    SplitMix64: advance the seed by (index+1) times the golden-ratio
    increment, then apply the standard finalizer. Documented so external
    tools can reproduce any single sample of a batch.
    """
    z = (int(seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class GaussianMixture:
    """Signed mixture of Gaussian states on the not-yet-measured modes.

    ``labels`` keeps the original 1-based mode indices; ``history`` records
    (label, outcome) pairs in measurement order. Structural invariants
    (weight sum, branch-count bound) are enforced on construction; the
    per-branch uncertainty-relation check is available via ``validate()``.
    """

    labels: tuple
    weights: np.ndarray
    covs: np.ndarray
    means: np.ndarray
    history: tuple = ()

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = len(self.labels)
        covs = np.asarray(self.covs, dtype=float).reshape(len(weights), 2 * m, 2 * m)
        means = np.asarray(self.means, dtype=float).reshape(len(weights), 2 * m)
        total = math.fsum(weights)
        # roundoff scales with the cancelling signed-weight magnitudes
        scale = max(1.0, math.fsum(abs(w) for w in weights))
        if abs(total - 1.0) > WEIGHT_TOL * scale:
            raise NumericalError(f"mixture weights sum to {total!r}, expected 1")
        clicks = sum(outcome for _, outcome in self.history)
        if len(weights) > 2 ** clicks:
            raise NumericalError(f"{len(weights)} branches exceed 2^{clicks} after {clicks} clicks")
        for arr in (weights, covs, means):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "means", means)

    @classmethod
    def from_state(cls, state):
        return cls(
            labels=tuple(range(1, state.modes + 1)),
            weights=np.array([1.0]),
            covs=np.asarray(state.V)[None, :, :],
            means=np.asarray(state.r)[None, :],
        )

    @property
    def modes(self):
        return len(self.labels)

    @property
    def branch_count(self):
        return len(self.weights)

    @property
    def branches(self):
        """(weight, QuadratureState) pairs; states skip re-validation."""
        return tuple(
            (float(a), QuadratureState(V, r, validate=False))
            for a, V, r in zip(self.weights, self.covs, self.means)
        )

    @property
    def clicked_labels(self):
        return tuple(label for label, outcome in self.history if outcome)

    def validate(self, tol=1e-8):
        """Check every branch covariance against the uncertainty relation."""
        from .gaussian import min_physicality_eigenvalue

        worst = min(min_physicality_eigenvalue(V) for V in self.covs)
        if worst < -tol:
            raise NumericalError(f"mixture branch violates physicality: min eig {worst:.3e}")
        return worst


def _mode_position(mixture, label):
    try:
        return mixture.labels.index(label)
    except ValueError:
        raise ValueError(f"mode {label} is not available (remaining: {mixture.labels})") from None


def _step_blocks(mixture, pos):
    """Per-branch vacuum-overlap weights and Schur-complement updates.

    One branch update is an O(modes^2) matrix operation; branches are
    processed in order in a plain loop, which keeps the per-sample cost
    proportional to the branch count (the 2^clicks law) and the summation
    order fixed.
    """
    m = mixture.modes
    bidx = [pos, pos + m]
    aidx = [i for i in range(2 * m) if i != pos and i != pos + m]
    count = mixture.branch_count
    n_rest = 2 * m - 2
    q = np.empty(count)
    marg_cov = np.empty((count, n_rest, n_rest))
    marg_mean = np.empty((count, n_rest))
    cond_cov = np.empty((count, n_rest, n_rest))
    cond_mean = np.empty((count, n_rest))
    for k in range(count):
        V = mixture.covs[k]
        r = mixture.means[k]
        a = V[bidx[0], bidx[0]] + 1.0
        b = V[bidx[0], bidx[1]]
        d = V[bidx[1], bidx[1]] + 1.0
        det = a * d - b * b
        if det <= 0:
            raise NumericalError("V_B + 1 is singular; the mixture is corrupted")
        inv = np.array([[d, -b], [-b, a]]) / det
        rB = r[bidx]
        q[k] = 2.0 * math.exp(-0.5 * float(rB @ inv @ rB)) / math.sqrt(det)
        VA = V[np.ix_(aidx, aidx)]
        VAB = V[np.ix_(aidx, bidx)]
        gain = VAB @ inv
        marg_cov[k] = VA
        marg_mean[k] = r[aidx]
        cond_cov[k] = VA - gain @ VAB.T
        cond_mean[k] = marg_mean[k] - gain @ rB
    return q, marg_cov, marg_mean, cond_cov, cond_mean


def condition_no_click(state, mode):
    """Vacuum-project one mode of a Gaussian state.

    Returns (q, conditioned state on the remaining modes) where q is the
    no-click probability of that mode; the state is None when no modes
    remain.
    """
    if isinstance(state, QuadratureState):
        mixture = GaussianMixture.from_state(state)
    else:
        mixture = state
    pos = _mode_position(mixture, mode)
    q, _, _, cond_cov, cond_mean = _step_blocks(mixture, pos)
    if mixture.modes == 1:
        return float(q[0]), None
    conditioned = QuadratureState(cond_cov[0], cond_mean[0], validate=False)
    return float(q[0]), conditioned


def _prepare(mixture, label):
    """Partition around one mode and compute the mixture no-click probability."""
    pos = _mode_position(mixture, label)
    q, marg_cov, marg_mean, cond_cov, cond_mean = _step_blocks(mixture, pos)
    p = float(mixture.weights @ q)
    if p < -PROB_CLAMP or p > 1 + PROB_CLAMP:
        raise NumericalError(f"no-click probability {p!r} outside [0, 1] beyond tolerance")
    return pos, q, min(max(p, 0.0), 1.0), marg_cov, marg_mean, cond_cov, cond_mean


def _apply(mixture, label, outcome, prepared):
    """Finish a step with a known outcome: (probability of the outcome, new mixture)."""
    pos, q, p, VA, rA, cond_cov, cond_mean = prepared  # VA/rA: unconditioned marginals
    labels = mixture.labels[:pos] + mixture.labels[pos + 1:]
    history = mixture.history + ((label, outcome),)
    if outcome == 0:
        if p < MIN_EVENT_PROB:
            raise NumericalError(f"forced no-click on mode {label} has vanishing probability")
        weights = mixture.weights * q / p
        new = GaussianMixture(
            labels=labels,
            weights=weights / weights.sum(),
            covs=cond_cov,
            means=cond_mean,
            history=history,
        )
        return p, new
    if 1.0 - p < MIN_EVENT_PROB:
        raise NumericalError(f"forced click on mode {label} has vanishing probability")
    # Click: each branch splits into (marginal) - q (vacuum-conditioned).
    weights = np.concatenate([mixture.weights, -mixture.weights * q]) / (1.0 - p)
    new = GaussianMixture(
        labels=labels,
        weights=weights / weights.sum(),
        covs=np.concatenate([VA, cond_cov]),
        means=np.concatenate([rA, cond_mean]),
        history=history,
    )
    return 1.0 - p, new


def _advance(mixture, label, outcome):
    """Forced-outcome step: returns (probability of that outcome, new mixture)."""
    return _apply(mixture, label, outcome, _prepare(mixture, label))


def step(mixture, mode, rng):
    """Measure one mode of a mixture with a threshold detector.

    The coin uses one uniform draw u; the detector clicks when u >= p with
    p the mixture no-click probability. Returns (outcome bit, new mixture).
    """
    if isinstance(mixture, QuadratureState):
        mixture = GaussianMixture.from_state(mixture)
    prepared = _prepare(mixture, mode)
    outcome = 1 if rng.random() >= prepared[2] else 0
    _, new = _apply(mixture, mode, outcome, prepared)
    return outcome, new


def prune(mixture, threshold):
    """Drop branches with |weight| below ``threshold`` and renormalize.

    Approximate: the result is no longer an exact representation of the
    conditional state. Exploration tool only.
    """
    keep = np.abs(mixture.weights) >= threshold
    if keep.all():
        return mixture
    if not keep.any():
        raise NumericalError("pruning removed every branch")
    weights = mixture.weights[keep]
    return GaussianMixture(
        labels=mixture.labels,
        weights=weights / weights.sum(),
        covs=mixture.covs[keep],
        means=mixture.means[keep],
        history=mixture.history,
    )


@dataclass(frozen=True)
class SampleRecord:
    """One threshold sample plus its per-step diagnostics."""

    pattern: ClickPattern
    noclick_probs: tuple
    branch_counts: tuple
    seed: int | None = None
    substream: int | None = None

    @property
    def clicks(self):
        return len(self.pattern.clicked)


def _measurement_order(modes, order):
    if order is None:
        return list(range(modes, 0, -1))
    order = [int(i) for i in order]
    if sorted(order) != list(range(1, modes + 1)):
        raise ValueError("measurement order must be a permutation of 1..l")
    return order


def sample_mixture(mixture, rng, order=None, prune_threshold=None):
    """Run the chain rule over all remaining modes of a mixture."""
    if order is None:
        order = sorted(mixture.labels, reverse=True)
    else:
        order = [int(i) for i in order]
        if sorted(order) != sorted(mixture.labels):
            raise ValueError("measurement order must be a permutation of the remaining modes")
    probs = []
    counts = []
    for label in order:
        prepared = _prepare(mixture, label)
        p = prepared[2]
        outcome = 1 if rng.random() >= p else 0
        _, mixture = _apply(mixture, label, outcome, prepared)
        if prune_threshold:
            mixture = prune(mixture, prune_threshold)
        probs.append(p)
        counts.append(mixture.branch_count)
    return mixture, tuple(probs), tuple(counts)


def sample(state, rng, order=None, prune_threshold=None):
    """Draw one exact threshold sample from a Gaussian state.

    Modes are measured from the highest index down by default. Cost grows
    as the branch count doubles with each click.
    """
    mixture = GaussianMixture.from_state(state)
    final, probs, counts = sample_mixture(mixture, rng, order=order, prune_threshold=prune_threshold)
    clicked = tuple(sorted(final.clicked_labels))
    return SampleRecord(
        pattern=ClickPattern(state.modes, clicked),
        noclick_probs=probs,
        branch_counts=counts,
    )


def sample_batch(state, n, seed, order=None, threads=1, prune_threshold=None):
    """Draw ``n`` independent samples reproducibly.

    Sample ``i`` uses the RNG substream ``substream_id(seed, i)``, so the
    batch content does not depend on execution order or thread count and
    any sub-range can be regenerated in isolation.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")

    def one(i):
        sub = substream_id(seed, i)
        rng = np.random.Generator(np.random.PCG64(sub))
        rec = sample(state, rng, order=order, prune_threshold=prune_threshold)
        return SampleRecord(rec.pattern, rec.noclick_probs, rec.branch_counts, int(seed), sub)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(n)))
    return [one(i) for i in range(n)]


def herald(state, measured, outcomes, order=None):
    """Condition on fixed threshold outcomes for a subset of modes.

    ``measured`` lists 1-based mode labels, ``outcomes`` the forced bits
    (1 = click). Measurement runs from the highest label down unless
    ``order`` overrides it. Returns (mixture on the unmeasured modes,
    heralding probability); the probability equals the threshold
    probability of the corresponding pattern of the marginal state on the
    measured modes.
    """
    measured = [int(m) for m in measured]
    if len(set(measured)) != len(measured):
        raise ValueError("measured modes must be distinct")
    forced = dict(zip(measured, (int(b) for b in outcomes)))
    if len(forced) != len(measured):
        raise ValueError("need one outcome per measured mode")
    mixture = state if isinstance(state, GaussianMixture) else GaussianMixture.from_state(state)
    sequence = sorted(measured, reverse=True) if order is None else list(order)
    probability = 1.0
    for label in sequence:
        factor, mixture = _advance(mixture, label, forced[label])
        probability *= factor
        if probability < MIN_EVENT_PROB:
            raise NumericalError("forced outcome has probability below 1e-300")
    return mixture, probability


def mixture_apply_interferometer(mixture, unitary):
    """Apply a linear interferometer to every branch of a mixture."""
    from .gaussian import ComplexUnitary

    if not isinstance(unitary, ComplexUnitary):
        unitary = ComplexUnitary(unitary)
    if unitary.dimension != mixture.modes:
        raise ValueError("unitary dimension does not match the mixture")
    S = interferometer_symplectic(unitary.matrix)
    return GaussianMixture(
        labels=mixture.labels,
        weights=mixture.weights,
        covs=np.einsum("ij,bjk,lk->bil", S, mixture.covs, S),
        means=mixture.means @ S.T,
        history=mixture.history,
    )


def chain_rule_probability(state, pattern, order=None):
    """Probability of a full pattern as the product of forced-step factors.

    Equals the Torontonian-based threshold probability; used as the
    chain-rule consistency check.
    """
    pattern = pattern if isinstance(pattern, ClickPattern) else ClickPattern(state.modes, tuple(pattern))
    outcomes = [1 if (m in pattern.clicked) else 0 for m in range(1, state.modes + 1)]
    sequence = _measurement_order(state.modes, order)
    mixture = GaussianMixture.from_state(state)
    probability = 1.0
    for label in sequence:
        factor, mixture = _advance(mixture, label, outcomes[label - 1])
        probability *= factor
    return probability
