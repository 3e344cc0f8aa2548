"""Closed-form representation data: weight profiles, creation-image matrix
elements, and the irreducible matrix-element scalars.

Conventions locked against the operator oracle in qalgebra:

* ``f_weight`` carries the prefactor q^{j(j+1)/4} (-i lam)^j / (j)_q!.  This
  is the normalization that satisfies the lowering/raising recursions of the
  right action exactly (the alternative q^{j^2/4} (+i lam)^j fails them by
  -q^{-1/4} per step; see tests).
* ``t_elem`` evaluates the confluent (q-Kummer) closed forms; the q-Bessel
  rewriting agrees only with prefactor (i q^{+1/4})^{jcol-i} on the
  jcol >= i branch, which is what ``t_elem_bessel`` uses.
* ``expansion_gauge`` is the extra factor (-1)^{|a|-|b|} q^{(|a|-|b|)/4}
  relating ``t_elem`` to the coefficients of the coaction expansion of the
  weight operators; it is measured by the oracle and pinned by tests.
"""
from __future__ import annotations

from dataclasses import dataclass

from mpmath import mp, mpf, mpc, sqrt

from .errors import TruncationError
from .qcore import (PrecisionCtx, QParam, _as_mp, q_factorial, q_number,
                    q_pochhammer)
from .qspecial import QKummerArgs, q_bessel, q_kummer, q_laguerre

__all__ = [
    "RepWeight", "ZetaPoint", "f_weight", "phi_mn", "d_elem", "u_elem",
    "u_shift_coeff", "t_elem", "t_elem_bessel", "d_scalar", "expansion_gauge",
    "eq_minus",
]


@dataclass(frozen=True)
class RepWeight:
    """Representation weight; zero only for trivial-case tests."""

    value: float
    allow_trivial: bool = False

    def __post_init__(self):
        if self.value == 0 and not self.allow_trivial:
            raise ValueError("weight 0 collapses to the trivial representation; "
                             "pass allow_trivial=True if that is intended")

    def mpf(self):
        return _as_mp(self.value)


@dataclass(frozen=True)
class ZetaPoint:
    """Point on the spectrum of 1 - (1-q) z*z, i.e. zeta = q^m, m >= 0."""

    value: object

    def mpf(self):
        return _as_mp(self.value)

    @staticmethod
    def from_level(m: int, q: QParam) -> "ZetaPoint":
        if m < 0:
            raise ValueError("level must be nonnegative")
        return ZetaPoint(q.mpf() ** m)


def eq_minus(x, q: QParam):
    """e_q^{-x} for x >= 0 via the everywhere-convergent product form."""
    return 1 / q_pochhammer(-(1 - q.mpf()) * _as_mp(x), q)


def f_weight(j: int, w: RepWeight, zeta: ZetaPoint, q: QParam,
             ctx: PrecisionCtx):
    """Radial profile of the weight operator:

        f_j(zeta) = q^{j(j+1)/4} (-i lam)^j / (j)_q!
                    * Phi^q(zeta^-1, q^{j+1}; q^{j+1} lam^2 zeta)

    At zeta = q^m the first series parameter is q^-m and the sum terminates
    after m+1 terms.
    """
    if j < 0:
        raise ValueError("profile index must be nonnegative")
    with ctx.workdps():
        qm = q.mpf()
        zv = zeta.mpf()
        if zv == 0:
            raise ValueError("zeta must be nonzero")
        lam = w.mpf()
        pref = qm ** (mpf(j) * (j + 1) / 4) * (mpc(0, -1) * lam) ** j \
            / _as_mp(q_factorial(j, q))
        if pref == 0:
            return mpc(0)
        res = q_kummer(QKummerArgs(1 / zv, qm ** (j + 1),
                                   qm ** (j + 1) * lam ** 2 * zv), q, ctx)
        return pref * res.value


def phi_mn(m: int, n: int, x, q: QParam, ctx: PrecisionCtx):
    """sqrt((n)_q!/(m)_q!) sqrt(e_q^{-x}) / (n-m)_q!
    * Phi^q(q^-m, q^{1+n-m}; q^{n+1} x), for n >= m and x = eta^2 >= 0."""
    if n < m:
        raise ValueError("requires n >= m")
    with ctx.workdps():
        qm = q.mpf()
        xm = _as_mp(x)
        pref = sqrt(_as_mp(q_factorial(n, q)) / _as_mp(q_factorial(m, q))) \
            * sqrt(eq_minus(xm, q)) / _as_mp(q_factorial(n - m, q))
        res = q_kummer(QKummerArgs(qm ** (-m), qm ** (1 + n - m),
                                   qm ** (n + 1) * xm), q, ctx)
        return pref * res.value


def phi_mn_laguerre(m: int, n: int, x, q: QParam, ctx: PrecisionCtx):
    """Same quantity through the Moak q-Laguerre route (independent path)."""
    if n < m:
        raise ValueError("requires n >= m")
    with ctx.workdps():
        xm = _as_mp(x)
        return sqrt(eq_minus(xm, q) * _as_mp(q_factorial(m, q))
                    / _as_mp(q_factorial(n, q))) \
            * q_laguerre(m, n - m, xm, q, ctx)


def d_elem(j: int, w: RepWeight, m: int, n: int, q: QParam,
           ctx: PrecisionCtx):
    """Matrix element of the weight operator on the oscillator index:

        (D_j)_{mn} = sqrt((n)_q!/(m)_q!) f_j(q^m) delta_{j,n-m}   (j >= 0)
        (D_{-j})_{mn} = (D_j)_{nm}
    """
    if m < 0 or n < 0:
        return mpc(0)
    if j < 0:
        return d_elem(-j, w, n, m, q, ctx)
    if n - m != j:
        return mpc(0)
    with ctx.workdps():
        return sqrt(_as_mp(q_factorial(n, q)) / _as_mp(q_factorial(m, q))) \
            * f_weight(j, w, ZetaPoint.from_level(m, q), q, ctx)


def u_shift_coeff(m: int, n: int, x, q: QParam, ctx: PrecisionCtx):
    """Scalar coefficient of the basis-change block U_mn acting on a charge
    state with eta^2 = x; the state index shifts by m + n.

    n >= m:  A^-m B*^{n-m} Phi_mn(eta)    -> Phi_mn(x) x^{(n-m)/2} q^{(n-m)(n-m+1)/4}
    m >= n:  q^{(m-n)(m-n-1)/2} A^-m (-B)^{m-n} Phi_nm(eta)
                                          -> (-1)^{m-n} q^{(m-n)(m-n-1)/4} x^{(m-n)/2} Phi_nm(x)

    All factors are real; the operators are applied right to left with the
    diagonal part evaluated first, exactly as the shift rules dictate.
    """
    with ctx.workdps():
        qm = q.mpf()
        xm = _as_mp(x)
        if n >= m:
            k = n - m
            return phi_mn(m, n, xm, q, ctx) * xm ** (mpf(k) / 2) \
                * qm ** (mpf(k) * (k + 1) / 4)
        k = m - n
        return (-1) ** k * qm ** (mpf(k) * (k - 1) / 4) * xm ** (mpf(k) / 2) \
            * phi_mn(n, m, xm, q, ctx)


def u_elem(m: int, i: int, n: int, jw: int, q: QParam, ctx: PrecisionCtx):
    """<i| U_mn |jw> on the charge basis; nonzero only for i = jw + m + n."""
    if i != jw + m + n:
        return mpf(0)
    return u_shift_coeff(m, n, q.mpf() ** jw, q, ctx)


def t_elem(i: int, jcol: int, w: RepWeight, x, q: QParam, ctx: PrecisionCtx):
    """Scalar radial part of the irreducible matrix element t_{i,jcol},
    evaluated at input eta^2 = x (the confluent closed forms).

    The charge-shift factors (the unitary shift to the power i-jcol and the
    double shift to the power jcol) carry unit coefficients and are the
    caller's bookkeeping; the full operator moves a charge state down by
    i + jcol.
    """
    with ctx.workdps():
        qm = q.mpf()
        xm = _as_mp(x)
        lam = w.mpf()
        iu = mpc(0, 1)
        if i >= jcol:
            p = i - jcol
            pref = qm ** (mpf(i ** 2 - jcol ** 2) / 4) * (iu * lam) ** p \
                / _as_mp(q_factorial(p, q)) \
                * (xm * qm ** (-2 * jcol)) ** (mpf(p) / 2) \
                * qm ** (-mpf(p) * (p - 1) / 4)
            arg = (qm - 1) * qm ** (1 - jcol) * lam ** 2 * xm
        else:
            p = jcol - i
            pref = qm ** (mpf(i ** 2 - jcol ** 2) / 4) * (iu * lam) ** p \
                / _as_mp(q_factorial(p, q)) * xm ** (mpf(p) / 2) \
                * qm ** (mpf(p) * (p + 1) / 4)
            arg = (qm - 1) * qm ** (1 - i) * lam ** 2 * xm
        if pref == 0:
            return mpc(0)
        res = q_kummer(QKummerArgs(mpf(0), qm ** (1 + p), arg), q, ctx)
        return pref * res.value


def t_elem_bessel(i: int, jcol: int, w: RepWeight, x, q: QParam,
                  ctx: PrecisionCtx):
    """q-Bessel rewriting of t_elem (independent path).

    Both branches need prefactor (i q^{+1/4})^{|i-jcol|}; the minus-quarter
    power sometimes quoted for the jcol >= i branch disagrees with the
    confluent form by q^{(jcol-i)/2} and with the oracle.
    """
    with ctx.workdps():
        qm = q.mpf()
        xm = _as_mp(x)
        lam = w.mpf()
        iu = mpc(0, 1)
        if i >= jcol:
            p = i - jcol
            arg = qm ** (-mpf(jcol) / 2) * lam * sqrt(xm)
        else:
            p = jcol - i
            arg = qm ** (-mpf(i) / 2) * lam * sqrt(xm)
        return (iu * qm ** mpf("0.25")) ** p * q_bessel(p, arg, q, ctx).value


def expansion_gauge(a: int, b: int, q: QParam):
    """Factor relating t_elem to the coaction-expansion coefficients:

        t~_{a,b} = (-1)^{|a|-|b|} q^{(|a|-|b|)/4} t_elem(a, b)

    Measured entrywise against the coaction oracle (see tests); equals 1
    when |a| = |b|, so it is invisible in the diagonal examples.
    """
    d = abs(a) - abs(b)
    return (-1) ** d * q.mpf() ** (mpf(d) / 4)


def d_scalar(j: int, w: RepWeight, x, q: QParam, ctx: PrecisionCtx):
    """Scalar profile f_j at zeta = 1 - (1-q) x; continuous surrogate used
    by the limit checks only."""
    if j < 0:
        raise ValueError("profile index must be nonnegative")
    with ctx.workdps():
        zeta = ZetaPoint(1 - (1 - q.mpf()) * _as_mp(x))
        return f_weight(j, w, zeta, q, ctx)
