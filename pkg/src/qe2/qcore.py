"""q-arithmetic primitives and the adaptive series engine.

Scalars come in two flavours: exact ``fractions.Fraction`` (used when the
deformation parameter is rational and exact answers are wanted) and mpmath
extended-precision floats.  Every function here accepts either and returns
the matching flavour where exactness is possible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import mp, mpf, mpc, workdps

from .errors import NonConvergent, SingularPoint

__all__ = [
    "QParam", "PrecisionCtx", "SeriesResult",
    "q_number", "q_factorial", "q_pochhammer", "q_exp", "q_exp_invbase",
]


@dataclass(frozen=True)
class QParam:
    """Deformation parameter, 0 < q < 1 strictly; the rescaling constant is 1."""

    value: object  # Fraction for exact mode, mpf/float otherwise

    def __post_init__(self):
        if not (0 < self.value < 1):
            raise ValueError(f"q must satisfy 0 < q < 1, got {self.value}")

    @property
    def exact(self) -> bool:
        return isinstance(self.value, Fraction)

    def mpf(self) -> mpf:
        v = self.value
        if isinstance(v, Fraction):
            return mpf(v.numerator) / mpf(v.denominator)
        return mpf(v)


@dataclass(frozen=True)
class PrecisionCtx:
    """Working precision and truncation policy for all series evaluation."""

    digits: int = 50
    max_terms: int = 500
    rtol: object = 1e-12
    atol: object = 1e-30

    def __post_init__(self):
        if self.digits < 30:
            raise ValueError("digits must be >= 30")
        if mpf(self.rtol) < mpf(10) ** (-self.digits + 10):
            raise ValueError("rtol leaves no guard digits for this precision")

    def workdps(self):
        return workdps(self.digits)

    def rtol_mp(self) -> mpf:
        return mpf(self.rtol)

    def atol_mp(self) -> mpf:
        return mpf(self.atol)


@dataclass(frozen=True)
class SeriesResult:
    """Value of a (possibly infinite) series plus convergence metadata."""

    value: object
    terms_used: int
    tail_estimate: object
    converged: bool

    def require(self):
        if not self.converged:
            raise NonConvergent("series did not converge", partial=self.value)
        return self.value


def _as_mp(x):
    if isinstance(x, Fraction):
        return mpf(x.numerator) / mpf(x.denominator)
    if isinstance(x, complex):
        return mpc(x)
    if isinstance(x, (mpf, mpc)):
        return x
    return mpf(x)


def q_number(n: int, q: QParam):
    """(n)_q = (1 - q^n)/(1 - q); exact when q is a Fraction."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    qv = q.value
    if isinstance(qv, Fraction):
        return (1 - qv ** n) / (1 - qv)
    qm = q.mpf()
    return (1 - qm ** n) / (1 - qm)


def q_factorial(n: int, q: QParam):
    """(n)_q! = prod_{k=1..n} (k)_q; empty product is 1."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = Fraction(1) if q.exact else mpf(1)
    for k in range(1, n + 1):
        out = out * q_number(k, q)
    return out


def q_pochhammer(a, q: QParam, k=None):
    """(a; q)_k = prod_{i=0..k-1} (1 - a q^i); k=None means the infinite product.

    The infinite case truncates once |a q^i| drops below 10^-digits of the
    ambient mpmath precision; |q| < 1 guarantees convergence.
    """
    if k is not None:
        if k < 0:
            raise ValueError("k must be nonnegative or None")
        if q.exact and isinstance(a, (int, Fraction)):
            out = Fraction(1)
            qv = q.value
            for i in range(k):
                out *= 1 - a * qv ** i
            return out
        am = _as_mp(a)
        qm = q.mpf()
        out = mpc(1) if isinstance(am, mpc) else mpf(1)
        for i in range(k):
            out *= 1 - am * qm ** i
        return out
    am = _as_mp(a)
    qm = q.mpf()
    out = mpc(1) if isinstance(am, mpc) else mpf(1)
    eps = mpf(10) ** (-mp.dps - 5)
    term = am
    i = 0
    while abs(term) > eps:
        out *= 1 - term
        term *= qm
        i += 1
        if i > 100 * mp.dps:
            break
    return out


def _series_sum(term_gen, ctx: PrecisionCtx):
    """Sum terms adaptively.

    Convergence is *declared* when the last three term magnitudes all fall
    below rtol*|partial| + atol with the term-ratio trend below 1; the
    summation itself continues to working precision (so downstream
    comparisons at rtol keep full guard margin), and the reported tail is
    the geometric estimate at the final stop.
    """
    rtol = ctx.rtol_mp()
    atol = ctx.atol_mp()
    work = mpf(10) ** (-(mp.dps - 6))
    total = mpf(0)
    last = []
    terms = 0
    prev_mag = None
    ratio = None
    max_mag = mpf(0)
    declared = False
    for t in term_gen:
        total = total + t
        terms += 1
        mag = abs(t)
        max_mag = max(max_mag, mag)
        if prev_mag is not None and prev_mag > 0:
            ratio = mag / prev_mag
        prev_mag = mag
        last.append(mag)
        if len(last) > 3:
            last.pop(0)
        trending = ratio is not None and ratio < 1
        if len(last) == 3 and trending \
                and max(last) < rtol * abs(total) + atol:
            declared = True
        if declared and len(last) == 3 and trending \
                and max(last) < work * (abs(total) + mpf("1e-4") * max_mag):
            tail = mag * ratio / (1 - ratio) if 0 < ratio < 1 else mag
            return SeriesResult(total, terms, tail, True)
        if terms >= ctx.max_terms:
            tail = mag
            return SeriesResult(total, terms, tail, declared)
    # generator exhausted: exact termination
    return SeriesResult(total, terms, mpf(0), True)


def q_exp(x, q: QParam, ctx: PrecisionCtx) -> SeriesResult:
    """Deformed exponential e_q^x.

    Inside the series radius 1/(1-q) the defining sum Sum x^k/(k)_q! is used;
    everywhere the product form 1/(((1-q)x); q)_inf is the canonical value,
    and it is what is returned outside the radius.
    """
    with ctx.workdps():
        xm = _as_mp(x)
        qm = q.mpf()
        if _product_pole_index(xm, qm) is not None:
            raise SingularPoint(f"e_q^x undefined: (1-q)x = q^-i for x={x}")
        radius = 1 / (1 - qm)
        if abs(xm) < mpf("0.9") * radius:
            def gen():
                term = mpf(1) if not isinstance(xm, mpc) else mpc(1)
                k = 0
                while True:
                    yield term
                    k += 1
                    term = term * xm / q_number(k, QParam(qm))
            res = _series_sum(gen(), ctx)
            if res.converged:
                return res
        val = 1 / q_pochhammer((1 - qm) * xm, QParam(qm))
        return SeriesResult(val, 0, mpf(0), True)


def _product_pole_index(x, qm):
    """Return i >= 0 with (1-q)x = q^-i if x sits on a pole, else None."""
    u = (1 - qm) * x
    if isinstance(u, mpc):
        if u.imag != 0:
            return None
        u = u.real
    if u < 1:
        return None
    i = 0
    p = mpf(1)
    tol = mpf(10) ** (-mp.dps + 6)
    while p <= u * (1 + tol):
        if abs(u - 1 / p) <= tol * u:
            return i
        i += 1
        p *= qm
        if i > 20 * mp.dps:
            return None
    return None


def q_exp_invbase(x, q: QParam, ctx: PrecisionCtx) -> SeriesResult:
    """Entire companion exponential e_{q^-1}^x = Sum q^{k(k-1)/2} x^k/(k)_q!.

    Equals the convergent product (-(1-q)x; q)_inf for every x.
    """
    with ctx.workdps():
        xm = _as_mp(x)
        qm = q.mpf()

        def gen():
            term = mpf(1) if not isinstance(xm, mpc) else mpc(1)
            k = 0
            while True:
                yield term
                k += 1
                term = term * xm * qm ** (k - 1) / q_number(k, QParam(qm))
        res = _series_sum(gen(), ctx)
        if not res.converged:  # entire series; only hit with tiny max_terms
            return res
        return res
