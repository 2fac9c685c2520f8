"""Homodyne and heterodyne measurements on signed Gaussian mixtures.

Outcomes live in the quadrature plane (x, p) with hbar = 2; a heterodyne
outcome relates to the coherent amplitude by alpha = (x + i p) / 2. Each
branch contributes a genuine 2D Gaussian with classical covariance
V_B + W, so the signed mixture density integrates to one by construction
(weights sum to one); pointwise nonnegativity is probed numerically when a
density is built.

Sampling inverts the exact 1D marginal CDF and then the conditional CDF,
both closed-form error-function mixtures, by bracketed bisection in CDF
space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .errors import NumericalError
from .gaussian import QuadratureState
from .sampler import GaussianMixture, herald, mixture_apply_interferometer, sample_mixture

NEGATIVITY_PROBES = 10_000
NEGATIVITY_TOL = -1e-9
DEFAULT_HOMODYNE_S = 1e3
CDF_TOL = 1e-12
MIN_EVENT_PROB = 1e-300


@dataclass(frozen=True)
class GaussianPOVM:
    """Single-mode Gaussian measurement with 2x2 covariance W."""

    W: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.shape != (2, 2) or abs(W[0, 1] - W[1, 0]) > 1e-12 * max(1.0, np.abs(W).max()):
            raise ValueError("W must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(W)[0] <= 0:
            raise ValueError("W must be positive definite")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)


def heterodyne():
    """Heterodyne measurement: W = identity."""
    return GaussianPOVM(np.eye(2), "het")


def homodyne(s=DEFAULT_HOMODYNE_S):
    """x-quadrature homodyne as the s >> 1 limit: W = diag(1/s^2, s^2).

    Finite s approximates an ideal quadrature measurement with outcome
    variance error O(1/s^2).
    """
    if s <= 0:
        raise ValueError("squeezing factor s must be positive")
    return GaussianPOVM(np.diag([1.0 / s ** 2, s ** 2]), "hom")


def marginal(mixture, mode):
    """Single-mode marginal of a mixture: 2x2 blocks, weights unchanged."""
    if isinstance(mixture, QuadratureState):
        mixture = GaussianMixture.from_state(mixture)
    pos = mixture.labels.index(mode) if mode in mixture.labels else None
    if pos is None:
        raise ValueError(f"mode {mode} not present (remaining: {mixture.labels})")
    m = mixture.modes
    idx = np.array([pos, pos + m])
    return GaussianMixture(
        labels=(mode,),
        weights=mixture.weights,
        covs=mixture.covs[:, idx[:, None], idx[None, :]],
        means=mixture.means[:, idx],
        history=mixture.history,
    )


@dataclass(frozen=True)
class OutcomeDensity:
    """Signed-Gaussian-mixture density over the outcome plane (x, p)."""

    weights: np.ndarray
    covs: np.ndarray  # (B, 2, 2): V_B + W per branch
    means: np.ndarray  # (B, 2)
    povm: GaussianPOVM
    probe_points: int = field(default=NEGATIVITY_PROBES, compare=False)

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        covs = np.asarray(self.covs, dtype=float).reshape(len(weights), 2, 2)
        means = np.asarray(self.means, dtype=float).reshape(len(weights), 2)
        if abs(weights.sum() - 1.0) > 1e-9:
            raise NumericalError("density weights must sum to 1")
        dets = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] ** 2
        if np.any(dets <= 0) or np.any(covs[:, 0, 0] <= 0):
            raise NumericalError("component covariance is not positive definite")
        for arr in (weights, covs, means):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "means", means)
        if self.probe_points:
            self._probe_negativity(self.probe_points)

    def _probe_negativity(self, count):
        sigma = np.sqrt(np.maximum(self.covs[:, 0, 0].max(), self.covs[:, 1, 1].max()))
        lo = self.means.min(axis=0) - 6 * sigma
        hi = self.means.max(axis=0) + 6 * sigma
        points = qmc.scale(qmc.Halton(d=2, seed=7).random(count), lo, hi)
        values = self.pdf(points)
        low = float(values.min())
        if low < NEGATIVITY_TOL:
            raise NumericalError(f"signed mixture is not a valid density: pdf = {low:.3e} < 0")

    def pdf(self, points):
        """Density at an (n, 2) array of outcome points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        diff = points[:, None, :] - self.means[None, :, :]
        a = self.covs[:, 0, 0]
        b = self.covs[:, 0, 1]
        d = self.covs[:, 1, 1]
        det = a * d - b * b
        quad = (
            d[None, :] * diff[:, :, 0] ** 2
            - 2 * b[None, :] * diff[:, :, 0] * diff[:, :, 1]
            + a[None, :] * diff[:, :, 1] ** 2
        ) / det[None, :]
        comps = np.exp(-0.5 * quad) / (2 * math.pi * np.sqrt(det))[None, :]
        return comps @ self.weights

    def marginal_cdf_x(self, x):
        """CDF of the first outcome coordinate (a signed mixture of normals)."""
        x = np.asarray(x, dtype=float)
        sig = np.sqrt(self.covs[:, 0, 0])
        z = (x[..., None] - self.means[:, 0]) / sig
        return ndtr(z) @ self.weights

    def _conditional_components(self, x):
        """Weights/means/variances of p given x (per sampled x, vectorized)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        var_x = self.covs[:, 0, 0]
        phi = np.exp(-0.5 * (x[:, None] - self.means[None, :, 0]) ** 2 / var_x) / np.sqrt(
            2 * math.pi * var_x
        )
        w = self.weights[None, :] * phi
        norm = w.sum(axis=1, keepdims=True)
        if np.any(np.abs(norm) < MIN_EVENT_PROB):
            raise NumericalError("conditional density vanished at the sampled point")
        w = w / norm
        slope = self.covs[:, 0, 1] / var_x
        mu = self.means[None, :, 1] + slope[None, :] * (x[:, None] - self.means[None, :, 0])
        var = self.covs[:, 1, 1] - self.covs[:, 0, 1] ** 2 / var_x
        return w, mu, np.broadcast_to(var[None, :], mu.shape)


def outcome_density(mixture, povm):
    """Outcome density of a Gaussian measurement on a single-mode mixture."""
    if isinstance(mixture, QuadratureState):
        mixture = GaussianMixture.from_state(mixture)
    if mixture.modes != 1:
        raise ValueError("outcome_density expects a single-mode mixture; take a marginal first")
    return OutcomeDensity(
        weights=mixture.weights,
        covs=mixture.covs + povm.W[None, :, :],
        means=mixture.means,
        povm=povm,
    )


def _invert_mixture_cdf(u, weights, means, sigmas, tol):
    """Vectorized bisection for signed-normal-mixture CDFs.

    The CDF is monotone (the mixture is a true density); every target u in
    (0, 1) is bracketed by mean +- 12 sigma and bisected until the CDF
    mismatch drops below ``tol`` (or the bracket reaches floating point
    resolution).
    """
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, (means - 12 * sigmas).min(axis=-1))
    hi = np.full(u.shape, (means + 12 * sigmas).max(axis=-1))

    def cdf(x):
        z = (x[..., None] - means) / sigmas
        return np.sum(ndtr(z) * weights, axis=-1)

    # widen brackets for extreme quantiles
    for _ in range(64):
        bad = cdf(lo) > u
        if not bad.any():
            break
        lo = np.where(bad, lo - (hi - lo), lo)
    for _ in range(64):
        bad = cdf(hi) < u
        if not bad.any():
            break
        hi = np.where(bad, hi + (hi - lo), hi)
    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = cdf(x)
        err = fx - u
        done = np.abs(err) <= tol
        width_ok = (hi - lo) <= 1e-14 * np.maximum(1.0, np.abs(x))
        if np.all(done | width_ok):
            break
        hi = np.where(err > 0, x, hi)
        lo = np.where(err > 0, lo, x)
        x = 0.5 * (lo + hi)
    else:
        raise NumericalError("inverse-CDF bisection did not converge; density is likely invalid")
    return x


def sample_outcomes(density, n, rng, tol=CDF_TOL):
    """Draw ``n`` exact outcomes from a density; returns an (n, 2) array.

    First coordinate by inverse CDF of the x marginal, second by inverse
    CDF of the conditional mixture, each to ``tol`` in CDF space.
    """
    u = rng.random((n, 2))
    sig_x = np.sqrt(density.covs[:, 0, 0])
    xs = _invert_mixture_cdf(u[:, 0], density.weights, density.means[:, 0], sig_x, tol)
    w, mu, var = density._conditional_components(xs)
    ps = np.empty(n)
    # conditional parameters differ per draw; bisection still vectorizes
    sig = np.sqrt(var)
    lo = (mu - 12 * sig).min(axis=1)
    hi = (mu + 12 * sig).max(axis=1)

    def cdf(x):
        return np.sum(ndtr((x[:, None] - mu) / sig) * w, axis=1)

    target = u[:, 1]
    for _ in range(64):
        bad = cdf(lo) > target
        if not bad.any():
            break
        lo = np.where(bad, lo - (hi - lo), lo)
    for _ in range(64):
        bad = cdf(hi) < target
        if not bad.any():
            break
        hi = np.where(bad, hi + (hi - lo), hi)
    x = 0.5 * (lo + hi)
    for _ in range(200):
        err = cdf(x) - target
        done = np.abs(err) <= tol
        width_ok = (hi - lo) <= 1e-14 * np.maximum(1.0, np.abs(x))
        if np.all(done | width_ok):
            break
        hi = np.where(err > 0, x, hi)
        lo = np.where(err > 0, lo, x)
        x = 0.5 * (lo + hi)
    else:
        raise NumericalError("conditional inverse-CDF bisection did not converge")
    ps[:] = x
    return np.column_stack([xs, ps])


def sample_outcome(density, rng, tol=CDF_TOL):
    """Draw one exact outcome (x, p) from a density."""
    return sample_outcomes(density, 1, rng, tol)[0]


def backaction(mixture, mode, povm, outcome):
    """Propagate a Gaussian measurement outcome into the remaining modes.

    Per branch: covariance gets the Schur complement against V_B + W, the
    mean moves by the regression gain times (outcome - r_B), and weights
    are reweighted by the branch outcome likelihoods.
    """
    if isinstance(mixture, QuadratureState):
        mixture = GaussianMixture.from_state(mixture)
    outcome = np.asarray(outcome, dtype=float).reshape(2)
    if not np.all(np.isfinite(outcome)):
        raise ValueError("outcome must be finite")
    try:
        pos = mixture.labels.index(mode)
    except ValueError:
        raise ValueError(f"mode {mode} not present (remaining: {mixture.labels})") from None
    m = mixture.modes
    bidx = np.array([pos, pos + m])
    aidx = np.array([i for i in range(2 * m) if i != pos and i != pos + m], dtype=int)
    VB = mixture.covs[:, bidx[:, None], bidx[None, :]] + povm.W[None, :, :]
    VA = mixture.covs[:, aidx[:, None], aidx[None, :]]
    VAB = mixture.covs[:, aidx[:, None], bidx[None, :]]
    rB = mixture.means[:, bidx]
    rA = mixture.means[:, aidx]
    a = VB[:, 0, 0]
    b = VB[:, 0, 1]
    d = VB[:, 1, 1]
    det = a * d - b * b
    if np.any(det <= 0):
        raise NumericalError("V_B + W is not positive definite; the mixture is corrupted")
    inv = np.empty_like(VB)
    inv[:, 0, 0] = d / det
    inv[:, 1, 1] = a / det
    inv[:, 0, 1] = inv[:, 1, 0] = -b / det
    diff = outcome[None, :] - rB
    q = np.exp(-0.5 * np.einsum("bi,bij,bj->b", diff, inv, diff)) / (2 * math.pi * np.sqrt(det))
    p = float(mixture.weights @ q)
    if p < MIN_EVENT_PROB:
        raise NumericalError("measurement outcome has vanishing density")
    gain = VAB @ inv
    new_weights = mixture.weights * q / p
    new_weights = new_weights / new_weights.sum()
    return GaussianMixture(
        labels=mixture.labels[:pos] + mixture.labels[pos + 1:],
        weights=new_weights,
        covs=VA - np.einsum("bij,bkj->bik", gain, VAB),
        means=rA + np.einsum("bij,bj->bi", gain, diff),
        history=mixture.history,
    )


def measure_all_cv(mixture, povm, rng, tol=CDF_TOL):
    """Measure every remaining mode of a mixture with one POVM, highest label first."""
    records = []
    for label in sorted(mixture.labels, reverse=True):
        single = marginal(mixture, label)
        density = outcome_density(single, povm)
        outcome = sample_outcome(density, rng, tol)
        records.append({"mode": label, "povm": povm.label, "outcome": [float(outcome[0]), float(outcome[1])]})
        if mixture.modes > 1:
            mixture = backaction(mixture, label, povm, outcome)
        else:
            break
    return records


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration of one of the four sampling pipelines.

    A: squeezed inputs, interferometer, threshold detectors.
    B: heralded single photons (click on the idler of a two-mode squeezer),
       interferometer, threshold detectors.
    C: heralded single photons, interferometer, homodyne on every mode.
    D: click-conditioned sources, interferometer, heterodyne on every mode.

    Costs per shot: A grows as 2^clicks; B pays 2^heralds branches times
    2^clicks; C and D pay the 2^heralds branch count in every one of the l
    single-mode measurements.
    """

    pipeline: str
    modes: int
    shots: int
    seed: int
    squeezing: tuple = ()
    herald_count: int = 0
    herald_squeezing: float = 1.0
    unitary: np.ndarray | None = None
    homodyne_s: float = DEFAULT_HOMODYNE_S
    cdf_tolerance: float = CDF_TOL

    def __post_init__(self):
        if self.pipeline not in ("A", "B", "C", "D"):
            raise ValueError("pipeline must be one of A, B, C, D")
        if self.modes < 1 or self.shots < 1:
            raise ValueError("need at least one mode and one shot")
        if self.herald_count > self.modes:
            raise ValueError("cannot herald more photons than signal modes")


def paired_source_state(signal_modes, pairs, r):
    """Signal modes, the first ``pairs`` of which are two-mode squeezed with idlers.

    Modes 1..signal_modes are the signal; idler j sits at signal_modes + j
    and is correlated with signal mode j.
    """
    total = signal_modes + pairs
    V = np.eye(2 * total)
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    for j in range(pairs):
        sig, idl = j, signal_modes + j
        V[sig, sig] = V[idl, idl] = c
        V[sig, idl] = V[idl, sig] = s
        V[total + sig, total + sig] = V[total + idl, total + idl] = c
        V[total + sig, total + idl] = V[total + idl, total + sig] = -s
    return QuadratureState(V, validate=False)


def _signal_mixture(config, rng):
    """Heralded, interferometer-evolved mixture on the signal modes (B/C/D)."""
    from .gaussian import haar_unitary
    from .sampler import substream_id

    if config.unitary is not None:
        U = np.asarray(config.unitary, dtype=complex)
    else:
        U = haar_unitary(config.modes, rng).matrix
    if config.herald_count:
        source = paired_source_state(config.modes, config.herald_count, config.herald_squeezing)
        idlers = list(range(config.modes + 1, config.modes + config.herald_count + 1))
        mixture, prob = herald(source, idlers, [1] * len(idlers))
    else:
        vac = QuadratureState(np.eye(2 * config.modes), validate=False)
        mixture, prob = GaussianMixture.from_state(vac), 1.0
    return mixture_apply_interferometer(mixture, U), prob, U


def simulate_pipeline(config):
    """Run one of the four pipelines; returns (records, metadata)."""
    from .gaussian import haar_unitary, squeezed_state, apply_interferometer
    from .sampler import substream_id

    meta = {"pipeline": config.pipeline, "modes": config.modes, "shots": config.shots, "seed": config.seed}
    records = []
    setup_rng = np.random.Generator(np.random.PCG64(substream_id(config.seed, 0)))
    signal_labels = set(range(1, config.modes + 1))
    if config.pipeline == "A":
        r_vec = config.squeezing if config.squeezing else (0.0,) * config.modes
        if config.unitary is not None:
            U = np.asarray(config.unitary, dtype=complex)
        else:
            U = haar_unitary(config.modes, setup_rng).matrix
        state = apply_interferometer(squeezed_state(r_vec), U)
        for i in range(config.shots):
            rng = np.random.Generator(np.random.PCG64(substream_id(config.seed, i + 1)))
            final, probs, counts = sample_mixture(GaussianMixture.from_state(state), rng)
            records.append({"shot": i, "pattern": sorted(final.clicked_labels)})
        return records, meta
    mixture, herald_prob, U = _signal_mixture(config, setup_rng)
    meta["herald_probability"] = herald_prob
    meta["branches"] = mixture.branch_count
    if config.pipeline == "B":
        for i in range(config.shots):
            rng = np.random.Generator(np.random.PCG64(substream_id(config.seed, i + 1)))
            final, probs, counts = sample_mixture(mixture, rng)
            clicks = sorted(set(final.clicked_labels) & signal_labels)
            records.append({"shot": i, "pattern": clicks})
        return records, meta
    povm = homodyne(config.homodyne_s) if config.pipeline == "C" else heterodyne()
    for i in range(config.shots):
        rng = np.random.Generator(np.random.PCG64(substream_id(config.seed, i + 1)))
        records.append({"shot": i, "cv": measure_all_cv(mixture, povm, rng, tol=config.cdf_tolerance)})
    return records, meta
