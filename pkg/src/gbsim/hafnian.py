"""Two independent Hafnian evaluators and the Torontonian series bridge.

``hafnian_naive`` enumerates perfect matchings straight from the definition
and serves as the oracle. ``hafnian_powerset`` evaluates the power-set
trace formula

    Haf(A) = sum over subsets Z of [l] of (-1)^(l - |Z|) f((A X)_(Z))

for a symmetric 2l x 2l matrix, where f(C) is the coefficient of eta^l in
det(1 - eta C)^(-1/2) and the reduction keeps rows/columns {Z, Z + l}. The
complement sign and the post-multiplication by X are fixed by agreement
with the naive evaluator (exercised in the test suite and by the
``validate`` command); flipping either breaks 4x4 random inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError
from .gaussian import KernelMatrix, block_swap
from .torontonian import torontonian_series

NAIVE_MAX_DIM = 16  # (2m-1)!! growth; oracle scale
POWERSET_MAX_DIM = 30
_EIGENVALUE_TRACE_DIM = 8  # below this, traces come from explicit matrix powers

# Mutation hooks for the validation driver; never set in production code.
_WRONG_REDUCTION = False
_SIGN_FLIP = False


def _check_symmetric(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if A.shape[0] % 2:
        raise ValueError("Hafnian requires an even-dimensional matrix")
    scale = max(1.0, np.abs(A).max(initial=0.0))
    if A.size and np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError("matrix must be symmetric (A = A^T)")
    return A


def hafnian_naive(A):
    """Hafnian by explicit perfect-matching enumeration ((2m-1)!! terms)."""
    A = _check_symmetric(A)
    n = A.shape[0]
    if n == 0:
        return complex(1.0)
    if n > NAIVE_MAX_DIM:
        raise ValueError(f"naive Hafnian limited to dimension {NAIVE_MAX_DIM}")

    def rec(rem):
        if not rem:
            return 1.0 + 0j
        first = rem[0]
        total = 0j
        for pos in range(1, len(rem)):
            partner = rem[pos]
            total += A[first, partner] * rec(rem[1:pos] + rem[pos + 1:])
        return total

    return complex(rec(tuple(range(n))))


def f_coefficient(C, order):
    """Coefficient of eta^order in det(1 - eta C)^(-1/2).

    Equivalently the order-th coefficient of exp(sum_k Tr(C^k) eta^k / (2k));
    extending the trace sum beyond ``order`` cannot change it. Traces come
    from eigenvalues for dimension >= 8 and from explicit matrix powers
    below that.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    C = np.asarray(C, dtype=complex)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("matrix must be square")
    if order == 0:
        return complex(1.0)
    if C.shape[0] == 0:
        return complex(0.0)
    return complex(_exp_series_coefficient(_power_traces(C, order), order))


def _power_traces(C, order):
    """[Tr(C), Tr(C^2), ..., Tr(C^order)] as Python complex numbers."""
    traces = []
    if C.shape[0] >= _EIGENVALUE_TRACE_DIM:
        eigs = np.linalg.eigvals(C)
        current = eigs.copy()
        traces.append(complex(current.sum()))
        for _ in range(order - 1):
            current *= eigs
            traces.append(complex(current.sum()))
    else:
        power = C
        traces.append(complex(power.trace()))
        for _ in range(order - 1):
            power = power @ C
            traces.append(complex(power.trace()))
    return traces


def _exp_series_coefficient(traces, order):
    """[eta^order] of exp(sum_k traces[k-1] eta^k / (2k)) by the exp-of-series recurrence."""
    a = [0j] + [traces[k - 1] / (2 * k) for k in range(1, order + 1)]
    coeff = [1.0 + 0j] + [0j] * order
    for m in range(1, order + 1):
        acc = 0j
        for j in range(1, m + 1):
            acc += j * a[j] * coeff[m - j]
        coeff[m] = acc / m
    return coeff[order]


def hafnian_powerset(A):
    """Hafnian via the power-set trace formula (2^l terms)."""
    A = _check_symmetric(A)
    n = A.shape[0]
    if n == 0:
        return complex(1.0)
    if n > POWERSET_MAX_DIM:
        raise ValueError(f"power-set Hafnian limited to dimension {POWERSET_MAX_DIM}")
    half = n // 2
    if _WRONG_REDUCTION:
        AX = A  # deliberately broken arrangement for the mutation test
    else:
        AX = A[:, list(range(half, n)) + list(range(half))]
    total = 0j
    for mask in range(1 << half):
        idx = [i for i in range(half) if mask >> i & 1]
        if not idx:
            continue  # f of the empty matrix vanishes for order >= 1
        rows = np.array(idx + [i + half for i in idx])
        sub = AX[rows[:, None], rows[None, :]]
        sign = -1.0 if (half - len(idx)) % 2 else 1.0
        if _SIGN_FLIP:
            sign = -sign
        total += sign * _exp_series_coefficient(_power_traces(sub, half), half)
    return complex(total)


def hafnian_from_torontonian(O):
    """Haf(X O) extracted as the eta^l coefficient of Tor(eta O).

    The kernel is 2l x 2l; the l-th Taylor coefficient of the eta-scaled
    Torontonian equals the Hafnian of X O, which must be real for kernels
    of physical states.
    """
    if isinstance(O, KernelMatrix):
        modes = O.modes
    else:
        O = np.asarray(O, dtype=complex)
        modes = O.shape[0] // 2
    coeffs = torontonian_series(O, modes)
    return float(coeffs[modes])


def hafnian_xo(O):
    """Haf(X O) for a kernel matrix, via the power-set evaluator.

    The product X O is symmetric whenever O has the (alpha, alpha*) block
    structure; the result must be real for physical kernels.
    """
    mat = np.asarray(O.matrix if isinstance(O, KernelMatrix) else O, dtype=complex)
    modes = mat.shape[0] // 2
    if modes == 0:
        return 1.0
    value = hafnian_powerset(block_swap(modes) @ mat)
    # power-trace roundoff leaves a tiny imaginary residue on large reductions
    if abs(value.imag) > 1e-6 * max(1.0, abs(value.real)):
        raise NumericalError(f"Haf(XO) should be real for physical kernels, got {value}")
    return float(value.real)
