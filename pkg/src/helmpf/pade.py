"""Padé approximants, C-fractions and zero-pole extraction."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from gmpy2 import mpc, mpfr

from .numerics import (
    Polynomial,
    SingularMatrixError,
    current_precision,
    format_mpfr,
    lu_factor,
    lu_solve,
    poly_roots,
    tolerance,
    to_mpc,
)


class PoleProximityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PadeApproximant:
    L: int
    M: int
    numerator: Polynomial
    denominator: Polynomial
    effective_degree: tuple[int, int]

    @property
    def defect(self) -> int:
        """How far the denominator degree had to drop below M."""
        return self.M - self.effective_degree[1]

    def __call__(self, s):
        return evaluate(self, s)


def _coef(coeffs, k):
    return coeffs[k] if 0 <= k < len(coeffs) else mpc(0)


def _numerator(coeffs, b, L):
    a = []
    for k in range(L + 1):
        acc = mpc(0)
        for j in range(min(k, len(b) - 1) + 1):
            acc += b[j] * coeffs[k - j]
        a.append(acc)
    return a


def pade_from_series(coeffs: Sequence, L: int, M: int) -> PadeApproximant:
    """PA[L/M] with b_0 = 1 from the first L+M+1 coefficients.

    Rows L+1..L+M of denominator * series = numerator give an M x M
    Toeplitz system for b_1..b_M. If it is singular at working precision
    the denominator degree drops until it is solvable.
    """
    if L < 0 or M < 0:
        raise ValueError("degrees must be non-negative")
    if len(coeffs) < L + M + 1:
        raise ValueError(f"PA[{L}/{M}] needs {L + M + 1} coefficients, got {len(coeffs)}")
    cs = [to_mpc(c) for c in coeffs[: L + M + 1]]
    m = M
    while True:
        if m == 0:
            b = [mpc(1)]
            break
        rows = [[_coef(cs, L + i - j) for j in range(1, m + 1)] for i in range(1, m + 1)]
        rhs = [-_coef(cs, L + i) for i in range(1, m + 1)]
        try:
            b = [mpc(1)] + lu_solve(lu_factor(rows), rhs)
            break
        except SingularMatrixError:
            m -= 1
    a = _numerator(cs, b, L)
    tol = tolerance()
    num = Polynomial(a).trimmed(tol)
    den = Polynomial(b).trimmed(tol)
    return PadeApproximant(L, M, Polynomial(a), Polynomial(b), (max(num.degree, 0), den.degree))


def diagonal_degree(n_coeffs: int) -> int:
    """Largest diagonal degree used for N+1 coefficients: floor((N-1)/2)."""
    return max((n_coeffs - 2) // 2, 0)


def diagonal_values(coeffs: Sequence, s) -> list:
    """Values PA[M/M](s) for M = 0 .. (len(coeffs)-1)//2 by Wynn's epsilon algorithm.

    Same numbers as solving each Toeplitz system and evaluating, at O(K^2)
    total cost. An entry is None where the table hits an exact zero
    difference (a degenerate block).
    """
    s = to_mpc(s)
    sums, acc, power = [], mpc(0), mpc(1)
    for c in coeffs:
        acc += to_mpc(c) * power
        power *= s
        sums.append(acc)
    if not sums:
        return []
    prev: list = [mpc(0)] * (len(sums) + 1)
    cur: list = sums
    out: list = [sums[0]]
    for k in range(1, len(sums)):
        nxt = []
        for n in range(len(cur) - 1):
            a, b = cur[n], cur[n + 1]
            if a is None or b is None:
                # 1/inf = 0 rule across a degenerate entry
                nxt.append(prev[n + 1])
                continue
            diff = b - a
            base = prev[n + 1]
            nxt.append(None if diff == 0 or base is None else base + 1 / diff)
        prev, cur = cur, nxt
        if k % 2 == 0:
            out.append(cur[0])
    return out


@dataclass(frozen=True)
class CFraction:
    """c0 + a1 s/(1 + a2 s/(1 + a3 s/(1 + ...))) with partial numerators a_k."""

    c0: mpc
    partial: tuple[mpc, ...]
    terminated: bool = False

    @property
    def depth(self) -> int:
        return len(self.partial)


def _reciprocal(series: Sequence[mpc], n: int) -> list[mpc]:
    """First n coefficients of 1/series (series[0] != 0)."""
    inv0 = 1 / series[0]
    out = [inv0]
    for k in range(1, n):
        acc = mpc(0)
        for j in range(1, min(k, len(series) - 1) + 1):
            acc += series[j] * out[k - j]
        out.append(-acc * inv0)
    return out


def cfraction_from_series(coeffs: Sequence, depth: int | None = None) -> CFraction:
    """Build the C-fraction by repeated reciprocal series.

    Each level divides the tail (u_2, u_3, ...) by u_1 and inverts; the
    linear coefficient of the inverse is the next partial numerator. From
    K+1 coefficients at most K partial numerators are available.
    """
    cs = [to_mpc(c) for c in coeffs]
    if depth is None:
        depth = len(cs) - 1
    depth = min(depth, len(cs) - 1)
    partial: list[mpc] = []
    if depth <= 0:
        return CFraction(cs[0], ())
    tol = tolerance()
    scale = max((abs(c) for c in cs), default=mpfr(0))
    u = cs
    while len(partial) < depth:
        if len(u) < 2:
            break
        a = u[1]
        if a == 0 or abs(a) <= tol * tol * scale:
            return CFraction(cs[0], tuple(partial), True)
        partial.append(a)
        if len(u) < 3 or len(partial) == depth:
            break
        tail = [mpc(1)] + [x / a for x in u[2:]]
        u = _reciprocal(tail, len(tail))
        scale = max(abs(x) for x in u)
    return CFraction(cs[0], tuple(partial), False)


@dataclass(frozen=True)
class Rational:
    numerator: Polynomial
    denominator: Polynomial

    def normalized(self) -> "Rational":
        b0 = self.denominator.coeffs[0]
        return Rational(
            Polynomial([c / b0 for c in self.numerator.coeffs]),
            Polynomial([c / b0 for c in self.denominator.coeffs]),
        )

    def __call__(self, s):
        return self.numerator(s) / self.denominator(s)


def convergent(cf: CFraction, k: int) -> Rational:
    """A_k/B_k via A_k = A_{k-1} + a_k s A_{k-2} (same for B)."""
    if k < 0 or k > cf.depth:
        raise ValueError(f"convergent {k} beyond C-fraction depth {cf.depth}")
    a_prev, a_cur = [mpc(1)], [cf.c0]
    b_prev, b_cur = [mpc(0)], [mpc(1)]
    for j in range(k):
        alpha = cf.partial[j]
        a_next = _add_shifted(a_cur, a_prev, alpha)
        b_next = _add_shifted(b_cur, b_prev, alpha)
        a_prev, a_cur = a_cur, a_next
        b_prev, b_cur = b_cur, b_next
    return Rational(Polynomial(a_cur), Polynomial(b_cur))


def _add_shifted(p, q, alpha):
    """p(s) + alpha * s * q(s)."""
    out = list(p) + [mpc(0)] * max(0, len(q) + 1 - len(p))
    for i, c in enumerate(q):
        out[i + 1] += alpha * c
    return out


def evaluate(pa, s) -> mpc:
    """Numerator(s) / denominator(s); refuses to evaluate on top of a pole."""
    s = to_mpc(s)
    den = pa.denominator(s)
    if abs(den) <= tolerance() * pa.denominator.abs_eval(s):
        raise PoleProximityError(f"evaluation point {complex(s)} is at a pole")
    return pa.numerator(s) / den


def match_defect(pa: PadeApproximant, coeffs: Sequence) -> float:
    """Relative size of denominator*series - numerator through order L+M."""
    b = pa.denominator.coeffs
    a = pa.numerator.coeffs
    worst = 0.0
    scale = max(abs(to_mpc(c)) for c in coeffs[: pa.L + pa.M + 1]) or mpfr(1)
    bnorm = max(abs(x) for x in b)
    for k in range(pa.L + pa.M + 1):
        acc = mpc(0)
        for j in range(min(k, len(b) - 1) + 1):
            acc += b[j] * to_mpc(coeffs[k - j])
        target = a[k] if k < len(a) else mpc(0)
        worst = max(worst, float(abs(acc - target) / (scale * bnorm)))
    return worst


@dataclass(frozen=True)
class ZeroPoleSet:
    zeros: tuple[mpc, ...]
    poles: tuple[mpc, ...]
    zero_froissart: tuple[bool, ...]
    pole_froissart: tuple[bool, ...]
    L: int
    M: int
    bus: str = ""
    tag: str = ""

    def genuine_poles(self) -> list[mpc]:
        return [p for p, f in zip(self.poles, self.pole_froissart) if not f]

    def real_axis_poles(self, lo: float, hi: float, imag_tol: float = 1e-6) -> list[float]:
        """Non-Froissart poles within imag_tol (relative) of the real segment (lo, hi)."""
        out = []
        for p in self.genuine_poles():
            re = float(p.real)
            if lo < re < hi and abs(float(p.imag)) <= imag_tol * max(1.0, abs(re)):
                out.append(re)
        return sorted(out)

    def to_rows(self) -> list[list]:
        rows = []
        for kind, pts, flags in (("zero", self.zeros, self.zero_froissart),
                                 ("pole", self.poles, self.pole_froissart)):
            for z, f in zip(pts, flags):
                rows.append([self.bus, self.L, self.M, kind, z.real, z.imag, int(f)])
        return rows


def froissart_distance(bits: int | None = None) -> mpfr:
    p = current_precision() if bits is None else bits
    return mpfr(10) ** (-mpfr(p) / 8)


def zero_pole(pa: PadeApproximant, bus: str = "", tag: str = "") -> ZeroPoleSet:
    """Roots of the trimmed numerator and denominator, with Froissart doublets flagged."""
    tol = tolerance()
    num = pa.numerator.trimmed(tol)
    den = pa.denominator.trimmed(tol)
    zeros = poly_roots(num) if num.degree >= 1 else []
    poles = poly_roots(den) if den.degree >= 1 else []
    eps = froissart_distance()
    zf = [False] * len(zeros)
    pf = [False] * len(poles)
    for i, z in enumerate(zeros):
        for j, p in enumerate(poles):
            if abs(z - p) <= eps * max(mpfr(1), abs(p)):
                zf[i] = True
                pf[j] = True
    return ZeroPoleSet(tuple(zeros), tuple(poles), tuple(zf), tuple(pf), pa.L, pa.M, bus, tag)


def screened_poles(pa: PadeApproximant) -> list[tuple[mpc, bool]]:
    """Denominator roots with a Froissart flag, without finding the numerator roots.

    The distance from a pole to the nearest zero is estimated by the Newton
    step |N(z)/N'(z)| of the numerator; cheaper than :func:`zero_pole` when
    only the poles matter.
    """
    tol = tolerance()
    num = pa.numerator.trimmed(tol)
    den = pa.denominator.trimmed(tol)
    if den.degree < 1:
        return []
    eps = froissart_distance()
    dnum = num.derivative()
    out = []
    for z in poly_roots(den):
        nz, dz = num(z), dnum(z)
        if nz == 0:
            flag = True
        elif dz == 0:
            flag = False
        else:
            flag = abs(nz / dz) <= eps * max(mpfr(1), abs(z))
        out.append((z, flag))
    return out


def zero_pole_csv(sets: Sequence[ZeroPoleSet], digits: int = 17) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bus", "L", "M", "kind", "re", "im", "froissart_flag"])
    for zp in sets:
        for bus, L, M, kind, re, im, flag in zp.to_rows():
            w.writerow([bus, L, M, kind, format_mpfr(re, digits), format_mpfr(im, digits), flag])
    return buf.getvalue()
