"""Named special functions: q-Kummer, Hahn-Exton q-Bessel, Moak q-Laguerre,
plus classical Kummer/Bessel power series used as limit targets.

The classical functions are implemented on the same precision framework as
the q-series (plain power-series loops on mpmath scalars) so the limit
checks do not lean on any external special-function library.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from mpmath import mp, mpf, mpc

from .errors import DenominatorPole, NonConvergent
from .qcore import (PrecisionCtx, QParam, SeriesResult, _as_mp, _series_sum,
                    q_factorial, q_number, q_pochhammer)

__all__ = [
    "QKummerArgs", "q_kummer", "q_bessel", "q_laguerre",
    "kummer_1f1", "bessel_j", "terminating_index",
]


@dataclass(frozen=True)
class QKummerArgs:
    a: object
    b: object
    x: object


def terminating_index(a, q: QParam, ctx: PrecisionCtx, max_index=None):
    """Index s >= 0 with a = q^-s (within atol in float mode), else None."""
    if isinstance(a, (int, Fraction)) and q.exact:
        if a <= 0:
            return None
        s = 0
        p = Fraction(1)
        af = Fraction(a)
        while p <= af:
            if af == 1 / p:
                return s
            s += 1
            p *= q.value
            if max_index is not None and s > max_index:
                return None
        return None
    am = _as_mp(a)
    if isinstance(am, mpc):
        if am.imag != 0:
            return None
        am = am.real
    if am < 1 - ctx.atol_mp():
        return None
    qm = q.mpf()
    s = 0
    p = mpf(1)
    while p <= am * (1 + mpf(10) ** (-10)):
        if abs(am - 1 / p) <= ctx.atol_mp() * max(mpf(1), am):
            return s
        s += 1
        p *= qm
        if max_index is not None and s > max_index:
            return None
    return None


def _check_denominator(b, q: QParam, ctx: PrecisionCtx, n_terms: int, what="b"):
    s = terminating_index(b, q, ctx, max_index=n_terms)
    if s is not None and s < n_terms:
        raise DenominatorPole(
            f"{what} = q^-{s} zeroes a denominator factor within the summed range")


def q_kummer(args: QKummerArgs, q: QParam, ctx: PrecisionCtx) -> SeriesResult:
    """Phi^q(a, b; x) = Sum_k q^{k(k-1)/2} (a;q)_k / ((q;q)_k (b;q)_k) ((1-q)x)^k.

    Terminates exactly after s+1 terms when a = q^-s; otherwise the Gaussian
    q^{k(k-1)/2} damping makes the series entire in x and it is truncated
    adaptively.
    """
    with ctx.workdps():
        a = _as_mp(args.a)
        b = _as_mp(args.b)
        x = _as_mp(args.x)
        qm = q.mpf()
        stop = terminating_index(args.a, q, ctx, max_index=ctx.max_terms)
        horizon = (stop + 1) if stop is not None else ctx.max_terms
        _check_denominator(args.b, q, ctx, horizon)

        def gen():
            apoch = mpc(1)
            bpoch = mpc(1)
            qpoch_k = mpc(1)
            k = 0
            while stop is None or k <= stop:
                yield (qm ** (mpf(k) * (k - 1) / 2) * apoch / (qpoch_k * bpoch)
                       * ((1 - qm) * x) ** k)
                apoch *= 1 - a * qm ** k
                bpoch *= 1 - b * qm ** k
                qpoch_k *= 1 - qm ** (k + 1)
                k += 1
                if apoch == 0:
                    break
        res = _series_sum(gen(), ctx)
        if not res.converged and stop is None:
            raise NonConvergent("q-Kummer series exhausted max_terms",
                                partial=res.value)
        if stop is not None:
            # exact polynomial: no tail
            res = SeriesResult(res.value, res.terms_used, mpf(0), True)
        return res


def q_bessel(k: int, x, q: QParam, ctx: PrecisionCtx) -> SeriesResult:
    """Hahn-Exton q-Bessel J_k^q(x) = x^k/(k)_q! Phi^q(0, q^{1+k}; (q-1) q x^2).

    Summed directly (own loop) so the composition through q_kummer stays an
    independent cross-check path.
    """
    if k < 0:
        raise ValueError("order must be nonnegative")
    with ctx.workdps():
        xm = _as_mp(x)
        qm = q.mpf()
        pref = xm ** k / _as_mp(q_factorial(k, q))
        arg = (qm - 1) * qm * xm ** 2

        def gen():
            bpoch = mpc(1)
            qpoch_j = mpc(1)
            j = 0
            while True:
                yield pref * qm ** (mpf(j) * (j - 1) / 2) / (qpoch_j * bpoch) \
                    * ((1 - qm) * arg) ** j
                bpoch *= 1 - qm ** (1 + k + j)
                qpoch_j *= 1 - qm ** (j + 1)
                j += 1
        if pref == 0:
            return SeriesResult(mpf(0), 1, mpf(0), True)
        res = _series_sum(gen(), ctx)
        if not res.converged:
            raise NonConvergent("q-Bessel series exhausted max_terms",
                                partial=res.value)
        return res


def q_laguerre(n: int, alpha: int, x, q: QParam, ctx: PrecisionCtx):
    """Moak q-Laguerre L^{q(alpha)}_n(x) via its terminating q-Kummer form.

    Integer alpha in [-n, -1] makes a denominator factor vanish inside the
    summed range (the prefactor zero cannot cancel it pointwise), so that
    range is rejected with DenominatorPole.  alpha < -n is well defined.
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    with ctx.workdps():
        if -n <= alpha <= -1:
            raise DenominatorPole(
                f"q-Laguerre with alpha={alpha} in [-n, -1] hits a vanishing "
                "denominator among the summed terms")
        qm = q.mpf()
        pref = (q_pochhammer(qm ** (1 + alpha), q, n)
                / q_pochhammer(qm, q, n))
        res = q_kummer(QKummerArgs(qm ** (-n), qm ** (1 + alpha),
                                   qm ** (1 + alpha + n) * _as_mp(x)), q, ctx)
        return pref * res.value


def kummer_1f1(c, d, x, ctx: PrecisionCtx):
    """Classical confluent series Phi(c, d; x) = Sum (c)_k/((d)_k k!) x^k.

    Terminates exactly for nonpositive integer c; a nonpositive integer d is
    a pole unless the series terminates first.
    """
    with ctx.workdps():
        cm = _as_mp(c)
        dm = _as_mp(d)
        xm = _as_mp(x)
        stop = None
        if cm == int(cm) and cm <= 0:
            stop = int(-cm)
        if dm == int(dm) and dm <= 0:
            if stop is None or -int(dm) < stop:
                raise DenominatorPole(f"1F1 pole: d = {d} nonpositive integer")

        def gen():
            term = mpf(1) if not isinstance(xm, mpc) else mpc(1)
            k = 0
            while stop is None or k <= stop:
                yield term
                term = term * (cm + k) / ((dm + k) * (k + 1)) * xm
                k += 1
        res = _series_sum(gen(), ctx)
        if not res.converged:
            raise NonConvergent("1F1 series exhausted max_terms", partial=res.value)
        return res.value


def bessel_j(j: int, x, ctx: PrecisionCtx):
    """Classical Bessel J_j(x) by its power series at ctx precision."""
    if j < 0:
        raise ValueError("order must be nonnegative")
    with ctx.workdps():
        xm = _as_mp(x)
        if xm == 0:
            return mpf(1) if j == 0 else mpf(0)
        fact_j = mpf(1)
        for r in range(1, j + 1):
            fact_j *= r
        pref = (xm / 2) ** j / fact_j

        def gen():
            term = pref
            k = 0
            while True:
                yield term
                term = term * (-(xm / 2) ** 2) / ((k + 1) * (k + 1 + j))
                k += 1
        res = _series_sum(gen(), ctx)
        if not res.converged:
            raise NonConvergent("Bessel series exhausted max_terms",
                                partial=res.value)
        return res.value
