"""Torontonian evaluation by direct power-set summation.

The Torontonian of a 2N x 2N Hermitian kernel with the (alpha, alpha*)
block structure is

    Tor(O) = sum over subsets Z of [N] of (-1)^(N - |Z|) / sqrt(det(1 - O_(Z)))

where O_(Z) keeps rows and columns {Z, Z + N}. The sign is attached to the
kept subset so that the empty subset contributes (-1)^N; with this
convention Tor is a probability weight: Tor([[0, t], [t, 0]]) = 1/sqrt(1 - t^2) - 1.

Terms are evaluated in bitmask order (mask 0 .. 2^N - 1, bit k = mode k+1)
in fixed-size chunks. Each chunk is summed exactly (Shewchuk/fsum) and the
chunk partials are reduced in index order, so the value is bitwise
reproducible for any worker-thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PhysicalityError
from .gaussian import KernelMatrix

CHUNK_BITS = 13  # 8192 subsets per summation chunk
CANCELLATION_RATIO = 1e12

# Flipped by the validation mutation tests only; never set in production code.
_SIGN_FLIP = False


@dataclass(frozen=True)
class TorontonianResult:
    """Value of a Torontonian plus summation diagnostics."""

    value: float
    terms: int
    max_term_magnitude: float
    summation: str
    cancellation_warning: bool

    def __float__(self):
        return self.value


def _as_matrix(O):
    if isinstance(O, KernelMatrix):
        return np.asarray(O.matrix)
    O = np.asarray(O, dtype=complex)
    if O.ndim != 2 or O.shape[0] != O.shape[1] or O.shape[0] % 2:
        raise ValueError("kernel must be a square 2N x 2N matrix")
    scale = max(1.0, np.abs(O).max(initial=0.0))
    if O.size and np.abs(O - O.conj().T).max() > 1e-10 * scale:
        raise PhysicalityError("kernel must be Hermitian")
    return O


def _subset_indices(masks, modes):
    """Row/column index arrays (B, 2k) for equally sized subset masks."""
    bits = (masks[:, None] >> np.arange(modes)) & 1
    k = int(bits[0].sum())
    idx = np.nonzero(bits)[1].reshape(len(masks), k)
    return np.concatenate([idx, idx + modes], axis=1)


def _chunk_terms(O, modes, start, stop):
    """Signed terms for masks in [start, stop), in mask order."""
    masks = np.arange(start, stop, dtype=np.int64)
    sizes = np.zeros(len(masks), dtype=np.int64)
    m = masks.copy()
    while m.any():
        sizes += m & 1
        m >>= 1
    terms = np.empty(len(masks))
    for k in np.unique(sizes):
        sel = sizes == k
        if k == 0:
            terms[sel] = (-1.0) ** modes
            continue
        rows = _subset_indices(masks[sel], modes)
        sub = O[rows[:, :, None], rows[:, None, :]]
        mat = np.eye(2 * k) - sub
        try:
            chol = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            _locate_failure(mat, masks[sel], modes)
            raise
        logdiag = np.log(np.abs(np.diagonal(chol, axis1=1, axis2=2)))
        sign = -1.0 if (modes - k) % 2 else 1.0
        terms[sel] = sign * np.exp(-logdiag.sum(axis=1))
    if _SIGN_FLIP:
        terms = -terms
    return terms


def _locate_failure(mats, masks, modes):
    for mat, mask in zip(mats, masks):
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            subset = [i + 1 for i in range(modes) if int(mask) >> i & 1]
            raise PhysicalityError(
                f"1 - O_(Z) is not positive definite for subset Z = {subset}; "
                "the kernel does not come from a physical state"
            ) from None


def torontonian(O, threads=1):
    """Evaluate the Torontonian of a kernel matrix.

    Parameters
    ----------
    O : KernelMatrix or 2N x 2N Hermitian array with the block structure.
    threads : worker threads for the subset chunks. The result is bitwise
        identical for every thread count.

    Returns
    -------
    TorontonianResult
    """
    O = _as_matrix(O)
    modes = O.shape[0] // 2
    if modes == 0:
        return TorontonianResult(1.0, 1, 1.0, "empty", False)
    total_masks = 1 << modes
    chunk = min(total_masks, 1 << CHUNK_BITS)
    starts = list(range(0, total_masks, chunk))

    def run(start):
        terms = _chunk_terms(O, modes, start, min(start + chunk, total_masks))
        return math.fsum(terms), float(np.abs(terms).max())

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run, starts))
    else:
        partials = [run(s) for s in starts]
    value = math.fsum(p[0] for p in partials)
    max_term = float(max(p[1] for p in partials))
    if not math.isfinite(value):
        raise NumericalError("Torontonian summation overflowed")
    warn = bool(max_term > CANCELLATION_RATIO * max(abs(value), np.finfo(float).tiny))
    return TorontonianResult(
        value=value,
        terms=total_masks,
        max_term_magnitude=max_term,
        summation=f"chunked-fsum({chunk})/ordered-reduce",
        cancellation_warning=warn,
    )


def subset_determinant(O, subset):
    """det(1 - O_(Z)) for one kept subset Z of 1-based mode indices."""
    O = _as_matrix(O)
    modes = O.shape[0] // 2
    subset = sorted(int(i) for i in subset)
    if any(i < 1 or i > modes for i in subset):
        raise ValueError(f"subset indices must lie in [1, {modes}]")
    if len(set(subset)) != len(subset):
        raise ValueError("subset indices must be distinct")
    if not subset:
        return 1.0
    idx = np.array([i - 1 for i in subset] + [i - 1 + modes for i in subset])
    mat = np.eye(2 * len(subset)) - O[np.ix_(idx, idx)]
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise PhysicalityError(f"1 - O_(Z) is not positive definite for subset Z = {subset}") from None
    return float(np.prod(np.abs(np.diagonal(chol)) ** 2))


def _powersum_series(eigs, order):
    """Taylor coefficients (length order+1) of det(1 - eta C)^(-1/2) from eigenvalues."""
    coeff = np.zeros(order + 1, dtype=complex)
    coeff[0] = 1.0
    if len(eigs) == 0:
        return coeff
    a = np.zeros(order + 1, dtype=complex)
    for k in range(1, order + 1):
        a[k] = np.sum(eigs ** k) / (2 * k)
    for m in range(1, order + 1):
        coeff[m] = sum(j * a[j] * coeff[m - j] for j in range(1, m + 1)) / m
    return coeff


def torontonian_series(O, order):
    """Power-series coefficients c_0 .. c_order of Tor(eta * O) in eta.

    Each subset contributes the series of det(1 - eta O_(Z))^(-1/2),
    computed from the eigenvalues of O_(Z); the signed subset sum then
    yields the coefficients. c_0 = 0 whenever N >= 1.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    O = _as_matrix(O)
    modes = O.shape[0] // 2
    out = np.zeros(order + 1)
    if modes == 0:
        out[0] = 1.0
        return out
    acc = np.zeros(order + 1, dtype=complex)
    for mask in range(1 << modes):
        idx = [i for i in range(modes) if mask >> i & 1]
        sign = -1.0 if (modes - len(idx)) % 2 else 1.0
        if _SIGN_FLIP:
            sign = -sign
        if not idx:
            acc[0] += sign
            continue
        rows = np.array(idx + [i + modes for i in idx])
        eigs = np.linalg.eigvalsh(O[np.ix_(rows, rows)])
        acc += sign * _powersum_series(eigs.astype(complex), order)
    if np.abs(acc.imag).max() > 1e-9 * max(1.0, np.abs(acc.real).max()):
        raise NumericalError("Torontonian series produced a non-real coefficient")
    return acc.real
