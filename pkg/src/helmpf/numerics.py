"""Precision-parameterized complex arithmetic on top of gmpy2.

Every routine here works at the precision of the active gmpy2 context.
Use :func:`working_precision` to set it for a block of code; contexts are
thread-local, so concurrent solves at different precisions do not interfere.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

DEFAULT_PRECISION = 256
MACHINE_PRECISION = 53


class NumericsError(ArithmeticError):
    pass


class SingularMatrixError(NumericsError):
    def __init__(self, column: int, pivot: float, threshold: float):
        super().__init__(
            f"matrix is singular to working precision at column {column} "
            f"(|pivot|={pivot:.3e} < {threshold:.3e})"
        )
        self.column = column


class RootFindingError(NumericsError):
    def __init__(self, failed: Sequence[int], sweeps: int):
        super().__init__(
            f"root iteration did not converge after {sweeps} sweeps; "
            f"unpolished roots at indices {list(failed)}"
        )
        self.failed = list(failed)


@contextmanager
def working_precision(bits: int):
    """Run the enclosed block with ``bits`` of significand precision."""
    if bits < 2:
        raise ValueError("precision must be at least 2 bits")
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)) as ctx:
        yield ctx


def current_precision() -> int:
    return gmpy2.get_context().precision


def tolerance(bits: int | None = None) -> mpfr:
    """Relative comparison tolerance 2^(-p/2)."""
    p = current_precision() if bits is None else bits
    return mpfr(2) ** (-(p // 2))


def to_mpfr(x) -> mpfr:
    # repr() of a float is its shortest round-trip decimal, so per-unit data
    # such as 0.7 become the decimal 0.7 rounded at working precision.
    if isinstance(x, float):
        return mpfr(repr(x))
    if isinstance(x, int):
        return mpfr(x)
    return mpfr(x)


def to_mpc(z) -> mpc:
    """Convert a number (or a ``[re, im]`` pair) to mpc at working precision."""
    if isinstance(z, mpc):
        return mpc(z)
    if isinstance(z, (tuple, list)):
        re, im = z
        return mpc(to_mpfr(re), to_mpfr(im))
    if isinstance(z, complex):
        return mpc(to_mpfr(z.real), to_mpfr(z.imag))
    return mpc(to_mpfr(z), 0)


def to_complex(z) -> complex:
    return complex(float(z.real), float(z.imag))


def format_mpfr(x, digits: int = 17) -> str:
    """Scientific notation with ``digits`` significant digits, like format(x, '.{d-1}e')."""
    if digits < 2:
        raise ValueError("format_mpfr needs at least 2 significant digits")
    x = mpfr(x)
    if not gmpy2.is_finite(x):
        return "nan" if gmpy2.is_nan(x) else ("-inf" if x < 0 else "inf")
    if x == 0:
        return ("-" if gmpy2.is_signed(x) else "") + "0." + "0" * (digits - 1) + "e+00"
    mant, exp, _ = x.digits(10, digits)
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-")
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+03d}"


def cabs(z) -> mpfr:
    return abs(z)


def cvector(values: Iterable) -> list[mpc]:
    return [to_mpc(v) for v in values]


def cmatrix(rows: Iterable[Iterable]) -> list[list[mpc]]:
    return [[to_mpc(v) for v in row] for row in rows]


def matrix_norm(a: Sequence[Sequence[mpc]]) -> mpfr:
    """Infinity norm (maximum absolute row sum)."""
    best = mpfr(0)
    for row in a:
        s = mpfr(0)
        for v in row:
            s += abs(v)
        if s > best:
            best = s
    return best


def vector_norm(x: Sequence[mpc]) -> mpfr:
    best = mpfr(0)
    for v in x:
        m = abs(v)
        if m > best:
            best = m
    return best


def matvec(a: Sequence[Sequence[mpc]], x: Sequence[mpc]) -> list[mpc]:
    out = []
    for row in a:
        s = mpc(0)
        for aij, xj in zip(row, x):
            s += aij * xj
        out.append(s)
    return out


# ---------------------------------------------------------------------------
# dense LU with partial pivoting


@dataclass(frozen=True)
class LUFactors:
    """Packed LU factors: unit-lower L below the diagonal, U on and above it.

    ``perm[k]`` is the original row that ended up in position ``k``.
    """

    lu: tuple[tuple[mpc, ...], ...]
    perm: tuple[int, ...]
    precision: int

    @property
    def n(self) -> int:
        return len(self.perm)


def lu_factor(a: Sequence[Sequence]) -> LUFactors:
    n = len(a)
    if any(len(row) != n for row in a):
        raise ValueError("lu_factor needs a square matrix")
    m = [[to_mpc(v) for v in row] for row in a]
    p = current_precision()
    norm = matrix_norm(m)
    threshold = n * mpfr(2) ** (-p) * norm
    perm = list(range(n))
    for k in range(n):
        piv = max(range(k, n), key=lambda r: abs(m[r][k]))
        mag = abs(m[piv][k])
        if mag <= threshold or mag == 0:
            raise SingularMatrixError(k, float(mag), float(threshold))
        if piv != k:
            m[k], m[piv] = m[piv], m[k]
            perm[k], perm[piv] = perm[piv], perm[k]
        rowk = m[k]
        inv = 1 / rowk[k]
        for i in range(k + 1, n):
            rowi = m[i]
            if rowi[k] == 0:
                continue
            f = rowi[k] * inv
            rowi[k] = f
            for j in range(k + 1, n):
                rowi[j] -= f * rowk[j]
    return LUFactors(tuple(tuple(r) for r in m), tuple(perm), p)


def lu_solve(f: LUFactors, b: Sequence) -> list[mpc]:
    n = f.n
    if len(b) != n:
        raise ValueError(f"right-hand side has length {len(b)}, expected {n}")
    lu = f.lu
    y = [to_mpc(b[f.perm[i]]) for i in range(n)]
    for i in range(n):
        row = lu[i]
        s = y[i]
        for j in range(i):
            s -= row[j] * y[j]
        y[i] = s
    for i in range(n - 1, -1, -1):
        row = lu[i]
        s = y[i]
        for j in range(i + 1, n):
            s -= row[j] * y[j]
        y[i] = s / row[i]
    return y


def solve(a: Sequence[Sequence], b: Sequence) -> list[mpc]:
    return lu_solve(lu_factor(a), b)


# ---------------------------------------------------------------------------
# polynomials


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with ascending-degree mpc coefficients, trailing zeros trimmed."""

    coeffs: tuple[mpc, ...]

    def __init__(self, coeffs: Iterable):
        cs = [to_mpc(c) for c in coeffs]
        while len(cs) > 1 and cs[-1] == 0:
            cs.pop()
        if not cs:
            cs = [mpc(0)]
        object.__setattr__(self, "coeffs", tuple(cs))

    @property
    def degree(self) -> int:
        if len(self.coeffs) == 1 and self.coeffs[0] == 0:
            return -1
        return len(self.coeffs) - 1

    def __call__(self, s) -> mpc:
        acc = mpc(0)
        for c in reversed(self.coeffs):
            acc = acc * s + c
        return acc

    def __len__(self) -> int:
        return len(self.coeffs)

    def derivative(self) -> "Polynomial":
        return Polynomial([k * c for k, c in enumerate(self.coeffs)][1:] or [0])

    def abs_eval(self, s) -> mpfr:
        """Sum of |c_k| |s|^k, the scale for relative backward errors."""
        r = abs(s)
        acc = mpfr(0)
        for c in reversed(self.coeffs):
            acc = acc * r + abs(c)
        return acc

    def norm(self) -> mpfr:
        return vector_norm(self.coeffs)

    def trimmed(self, rel_tol) -> "Polynomial":
        """Drop trailing coefficients smaller than ``rel_tol`` times the norm."""
        cut = rel_tol * self.norm()
        cs = list(self.coeffs)
        while len(cs) > 1 and abs(cs[-1]) <= cut:
            cs.pop()
        return Polynomial(cs)

    @classmethod
    def from_roots(cls, roots: Iterable, lead=1) -> "Polynomial":
        cs = [to_mpc(lead)]
        for r in roots:
            r = to_mpc(r)
            nxt = [mpc(0)] * (len(cs) + 1)
            for k, c in enumerate(cs):
                nxt[k + 1] += c
                nxt[k] -= r * c
            cs = nxt
        return cls(cs)


def _horner_with_derivative(cs: Sequence[mpc], z: mpc) -> tuple[mpc, mpc]:
    p = cs[-1]
    dp = mpc(0)
    for c in reversed(cs[:-1]):
        dp = dp * z + p
        p = p * z + c
    return p, dp


# golden-angle offset keeps the starting circle off any symmetry axis
_START_ANGLE = math.pi * (3 - math.sqrt(5))


def _double_seeds(work: Sequence[mpc], radius: mpfr, sweeps: int = 300):
    """Aberth in hardware floats on the polynomial rescaled to unit root radius.

    Only a warm start: the multiprecision sweeps that follow fix whatever
    double precision cannot resolve. Returns None if the floats misbehave.
    """
    dd = len(work) - 1
    scaled = [c * radius ** k for k, c in enumerate(work)]
    big = max(abs(c) for c in scaled)
    a = np.array([complex(c / big) for c in scaled])[::-1]
    da = np.polyder(a)
    k = np.arange(dd)
    z = np.exp(1j * (2 * np.pi * k / dd + _START_ANGLE))
    with np.errstate(all="ignore"):
        for _ in range(sweeps):
            ratio = np.polyval(a, z) / np.polyval(da, z)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1 / diff
            np.fill_diagonal(inv, 0.0)
            corr = ratio / (1 - ratio * inv.sum(axis=1))
            z = z - corr
            if not np.all(np.isfinite(z)):
                return None
            if np.max(np.abs(corr)) < 1e-14:
                break
    if len(set(z.tolist())) < dd:
        return None
    return [radius * mpc(complex(w)) for w in z]


def poly_roots(q: Polynomial, max_sweeps: int = 500, polish_steps: int = 3) -> list[mpc]:
    """All roots of ``q`` by Aberth-Ehrlich simultaneous iteration.

    Starting points lie on the circle of radius |c0/cd|^(1/d). After the
    simultaneous phase every root gets a few Newton polishing steps. Raises
    :class:`RootFindingError` when some roots do not reach a backward error
    below 2^(-p/2).
    """
    d = q.degree
    if d < 1:
        raise ValueError("poly_roots needs degree >= 1")
    lead = q.coeffs[-1]
    cs = [c / lead for c in q.coeffs]
    if d == 1:
        return [-cs[0]]

    p = current_precision()
    tol = tolerance(p)
    step_tol = mpfr(2) ** (-(p - 8))
    zero_roots = 0
    while zero_roots < d and cs[zero_roots] == 0:
        zero_roots += 1
    work = cs[zero_roots:]
    dd = len(work) - 1
    roots = [mpc(0)] * zero_roots
    if dd == 0:
        return roots
    if dd == 1:
        return roots + [-work[0]]

    radius = abs(work[0]) ** (mpfr(1) / dd)
    if radius == 0:
        radius = mpfr(1)
    z = _double_seeds(work, radius)
    if z is None:
        two_pi = 2 * gmpy2.const_pi()
        z = []
        for k in range(dd):
            theta = two_pi * k / dd + mpfr(_START_ANGLE)
            z.append(radius * mpc(gmpy2.cos(theta), gmpy2.sin(theta)))

    poly = Polynomial(work)
    # rounding floor of Horner's rule; ill-conditioned roots never step below it
    floor = 4 * dd * mpfr(2) ** (-p)
    active = [True] * dd
    sweeps = 0
    while any(active) and sweeps < max_sweeps:
        sweeps += 1
        for k in range(dd):
            if not active[k]:
                continue
            zk = z[k]
            pk, dpk = _horner_with_derivative(work, zk)
            if pk == 0:
                active[k] = False
                continue
            ratio = pk / dpk if dpk != 0 else mpc(0)
            s = mpc(0)
            for j in range(dd):
                if j != k:
                    diff = zk - z[j]
                    if diff != 0:
                        s += 1 / diff
            denom = 1 - ratio * s
            corr = ratio / denom if denom != 0 else ratio
            z[k] = zk - corr
            scale = abs(z[k]) if abs(z[k]) > 1 else mpfr(1)
            if abs(corr) <= step_tol * scale:
                active[k] = False
            elif abs(pk) <= floor * poly.abs_eval(zk):
                active[k] = False

    for k in range(dd):
        zk = z[k]
        for _ in range(polish_steps):
            pk, dpk = _horner_with_derivative(work, zk)
            if pk == 0 or dpk == 0:
                break
            nxt = zk - pk / dpk
            # Newton can jump to a neighbouring root of a tight cluster; only
            # accept steps that reduce the backward error
            if abs(poly(nxt)) * poly.abs_eval(zk) >= abs(pk) * poly.abs_eval(nxt):
                break
            zk = nxt
        z[k] = zk

    failed = [k for k in range(dd) if abs(poly(z[k])) > tol * poly.abs_eval(z[k])]
    if failed:
        raise RootFindingError(failed, sweeps)
    return roots + z


def backward_error(q: Polynomial, root) -> mpfr:
    """|q(z)| / sum |c_k||z|^k."""
    scale = q.abs_eval(root)
    if scale == 0:
        return mpfr(0)
    return abs(q(root)) / scale


def match_roots(found: Sequence, expected: Sequence) -> list[tuple[mpc, mpc]]:
    """Pair two equal-size root multisets by greedy nearest assignment."""
    pool = list(expected)
    pairs = []
    for z in found:
        j = min(range(len(pool)), key=lambda i: abs(pool[i] - z))
        pairs.append((z, pool.pop(j)))
    return pairs


def convolve_at(a: Sequence[mpc], b: Sequence[mpc], n: int, start: int = 0) -> mpc:
    """Coefficient n of the product series, summing a[m] b[n-m] for m >= start."""
    s = mpc(0)
    for m in range(start, n + 1):
        s += a[m] * b[n - m]
    return s
