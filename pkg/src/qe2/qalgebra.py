"""Ground-truth oracle: exact normal-ordered arithmetic in the deformed
plane algebra and truncated oscillator-by-charge matrices.

Everything here is built from the generator shift rules alone, so it is an
independent arbiter for the closed forms in repmatrix.  Exact mode works in
the field Q(i, sqrt(q)) for rational q; matrices of the elementary shifts
use quadratic-surd entries so products of two generators are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import mp, mpf, mpc, sqrt

from .errors import DegreeOverflow, TruncationError
from .qcore import PrecisionCtx, QParam, _as_mp, q_factorial, q_number
from .repmatrix import RepWeight

__all__ = [
    "QExact", "RootScalar", "NOPoly", "FockBasis", "OpMatrix",
    "nopoly_normal_product", "nopoly_adjoint", "r_action", "expand_d_poly",
    "build_fock_ops", "build_u_constructive", "coaction_weight_apply",
    "coaction_weight_sandwich",
]


# ---------------------------------------------------------------------------
# exact scalars
# ---------------------------------------------------------------------------

class QExact:
    """Element of Q(i, sqrt(q)): (a_re + i a_im) + (b_re + i b_im) sqrt(q)."""

    __slots__ = ("q", "a_re", "a_im", "b_re", "b_im")

    def __init__(self, q: Fraction, a_re=0, a_im=0, b_re=0, b_im=0):
        self.q = q
        self.a_re = Fraction(a_re)
        self.a_im = Fraction(a_im)
        self.b_re = Fraction(b_re)
        self.b_im = Fraction(b_im)

    @classmethod
    def rational(cls, q, r):
        return cls(q, r, 0, 0, 0)

    @classmethod
    def gaussian(cls, q, re, im):
        return cls(q, re, im, 0, 0)

    def is_zero(self):
        return not (self.a_re or self.a_im or self.b_re or self.b_im)

    def __add__(self, other):
        return QExact(self.q, self.a_re + other.a_re, self.a_im + other.a_im,
                      self.b_re + other.b_re, self.b_im + other.b_im)

    def __sub__(self, other):
        return QExact(self.q, self.a_re - other.a_re, self.a_im - other.a_im,
                      self.b_re - other.b_re, self.b_im - other.b_im)

    def __neg__(self):
        return QExact(self.q, -self.a_re, -self.a_im, -self.b_re, -self.b_im)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return QExact(self.q, self.a_re * other, self.a_im * other,
                          self.b_re * other, self.b_im * other)
        q = self.q
        # (a1 + b1 s)(a2 + b2 s) = (a1 a2 + q b1 b2) + (a1 b2 + b1 a2) s
        ar = (self.a_re * other.a_re - self.a_im * other.a_im
              + q * (self.b_re * other.b_re - self.b_im * other.b_im))
        ai = (self.a_re * other.a_im + self.a_im * other.a_re
              + q * (self.b_re * other.b_im + self.b_im * other.b_re))
        br = (self.a_re * other.b_re - self.a_im * other.b_im
              + self.b_re * other.a_re - self.b_im * other.a_im)
        bi = (self.a_re * other.b_im + self.a_im * other.b_re
              + self.b_re * other.a_im + self.b_im * other.a_re)
        return QExact(q, ar, ai, br, bi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return QExact(self.q, self.a_re / other, self.a_im / other,
                          self.b_re / other, self.b_im / other)
        raise TypeError("division only by rationals")

    def times_i(self):
        return QExact(self.q, -self.a_im, self.a_re, -self.b_im, self.b_re)

    def conjugate(self):
        return QExact(self.q, self.a_re, -self.a_im, self.b_re, -self.b_im)

    def times_q_halfpow(self, k: int):
        """Multiply by q^{k/2} for integer k (negative allowed)."""
        q = self.q
        if k % 2 == 0:
            return self * (q ** (k // 2))
        half = q ** ((k - 1) // 2)
        # (a + b s) s = q b + a s
        return QExact(q, q * self.b_re * half, q * self.b_im * half,
                      self.a_re * half, self.a_im * half)

    def __eq__(self, other):
        return (self.q == other.q and self.a_re == other.a_re
                and self.a_im == other.a_im and self.b_re == other.b_re
                and self.b_im == other.b_im)

    def __hash__(self):
        return hash((self.q, self.a_re, self.a_im, self.b_re, self.b_im))

    def to_mpc(self):
        s = sqrt(mpf(self.q.numerator) / mpf(self.q.denominator))
        f = lambda x: mpf(x.numerator) / mpf(x.denominator)
        return mpc(f(self.a_re) + f(self.b_re) * s,
                   f(self.a_im) + f(self.b_im) * s)

    def __repr__(self):
        return (f"QExact({self.a_re}+{self.a_im}i + "
                f"({self.b_re}+{self.b_im}i)*sqrt({self.q}))")


def _frac_sqrt(r: Fraction):
    """Exact square root of a Fraction if it is a perfect square, else None."""
    if r < 0:
        return None
    n, d = r.numerator, r.denominator
    sn, sd = math.isqrt(n), math.isqrt(d)
    if sn * sn == n and sd * sd == d:
        return Fraction(sn, sd)
    return None


class RootScalar:
    """Quadratic surd c*sqrt(r) with exact rational c and r >= 0.

    Supports the products and same-radicand sums that arise when multiplying
    two ladder matrices; incompatible sums raise, which keeps exactness
    honest instead of silently approximating.
    """

    __slots__ = ("c", "r")

    def __init__(self, c, r=1):
        c = Fraction(c)
        r = Fraction(r)
        if r < 0:
            raise ValueError("radicand must be nonnegative")
        if c == 0 or r == 0:
            self.c = Fraction(0)
            self.r = Fraction(1)
            return
        s = _frac_sqrt(r)
        if s is not None:
            c, r = c * s, Fraction(1)
        self.c = c
        self.r = r

    def is_zero(self):
        return self.c == 0

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return RootScalar(self.c * other, self.r)
        return RootScalar(self.c * other.c, self.r * other.r)

    __rmul__ = __mul__

    def __neg__(self):
        return RootScalar(-self.c, self.r)

    def __add__(self, other):
        if isinstance(other, int) and other == 0:
            return self
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        if self.r == other.r:
            return RootScalar(self.c + other.c, self.r)
        ratio = _frac_sqrt(self.r / other.r)
        if ratio is not None:
            return RootScalar(self.c * ratio + other.c, other.r)
        raise ArithmeticError(f"cannot add sqrt({self.r}) and sqrt({other.r}) exactly")

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = RootScalar(other)
        return self.c == other.c and self.r == other.r

    def __hash__(self):
        return hash((self.c, self.r))

    def conjugate(self):
        return self

    def to_mpf(self):
        return (mpf(self.c.numerator) / mpf(self.c.denominator)
                * sqrt(mpf(self.r.numerator) / mpf(self.r.denominator)))

    def __repr__(self):
        return f"{self.c}*sqrt({self.r})" if self.r != 1 else f"{self.c}"


# ---------------------------------------------------------------------------
# normal-ordered polynomials
# ---------------------------------------------------------------------------

_REORDER_MEMO: dict = {}


def _reorder(a: int, b: int, qv):
    """Rewrite z^a z*^b as sum of z*^n z^m: returns {(n, m): rational}.

    Uses z z*^b = q^b z*^b z + (b)_q z*^{b-1} repeatedly; coefficients are
    exact for Fraction q and floats otherwise.
    """
    key = (qv, a, b)
    if key in _REORDER_MEMO:
        return _REORDER_MEMO[key]
    if a == 0 or b == 0:
        out = {(b, a): qv ** 0}
    else:
        one = qv ** 0
        bq = (one - qv ** b) / (one - qv)
        out = {}
        for (n, m), c in _reorder(a - 1, b, qv).items():
            out[(n, m + 1)] = out.get((n, m + 1), 0) + qv ** b * c
        for (n, m), c in _reorder(a - 1, b - 1, qv).items():
            out[(n, m)] = out.get((n, m), 0) + bq * c
    _REORDER_MEMO[key] = out
    return out


class NOPoly:
    """Normal-ordered element sum c_{nm} z*^n z^m of the deformed plane.

    Coefficients are QExact in exact mode or mpmath complex in float mode;
    both expose the same arithmetic surface.  ``truncated_at`` tags a
    polynomial that approximates a series cut at that total degree.
    """

    def __init__(self, q: QParam, coeffs=None, degree_bound=None,
                 truncated_at=None):
        self.q = q
        self.coeffs = dict(coeffs or {})
        self.degree_bound = degree_bound
        self.truncated_at = truncated_at
        self._drop_zeros()

    def _drop_zeros(self):
        dead = [k for k, v in self.coeffs.items() if _is_zero_coeff(v)]
        for k in dead:
            del self.coeffs[k]

    @classmethod
    def zero(cls, q):
        return cls(q)

    @classmethod
    def monomial(cls, q: QParam, n: int, m: int, coeff=None):
        if coeff is None:
            coeff = QExact.rational(q.value, 1) if q.exact else mpc(1)
        return cls(q, {(n, m): coeff})

    def degree(self):
        return max((n + m for n, m in self.coeffs), default=0)

    def copy(self):
        return NOPoly(self.q, self.coeffs, self.degree_bound, self.truncated_at)

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return NOPoly(self.q, out, self.degree_bound,
                      _merge_trunc(self.truncated_at, other.truncated_at))

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        return NOPoly(self.q, {k: v * c for k, v in self.coeffs.items()},
                      self.degree_bound, self.truncated_at)

    def max_abs(self):
        vals = []
        for v in self.coeffs.values():
            vals.append(abs(v.to_mpc()) if isinstance(v, QExact) else abs(v))
        return max(vals, default=mpf(0))

    def is_zero(self):
        return not self.coeffs

    def __repr__(self):
        items = sorted(self.coeffs.items())
        return "NOPoly(" + " + ".join(f"[{v!r}] z*^{n} z^{m}" for (n, m), v in items) + ")"


def _is_zero_coeff(v):
    if isinstance(v, QExact):
        return v.is_zero()
    return v == 0


def _merge_trunc(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def nopoly_normal_product(p1: NOPoly, p2: NOPoly) -> NOPoly:
    """Exact normal-ordered product; bilinear and associative."""
    q = p1.q
    qv = q.value if q.exact else q.mpf()
    out = {}
    bound = p1.degree_bound or p2.degree_bound
    for (n1, m1), c1 in p1.coeffs.items():
        for (n2, m2), c2 in p2.coeffs.items():
            if bound is not None and n1 + m1 + n2 + m2 > bound:
                raise DegreeOverflow(
                    f"product degree {n1 + m1 + n2 + m2} exceeds bound {bound}")
            c12 = c1 * c2
            for (nn, mm), r in _reorder(m1, n2, qv).items():
                key = (n1 + nn, m2 + mm)
                term = c12 * r if not isinstance(c12, QExact) else c12 * Fraction(r)
                out[key] = out[key] + term if key in out else term
    return NOPoly(q, out, bound, _merge_trunc(p1.truncated_at, p2.truncated_at))


def nopoly_adjoint(p: NOPoly) -> NOPoly:
    """Conjugate-linear anti-automorphism: (c z*^n z^m)* = conj(c) z*^m z^n."""
    out = {}
    for (n, m), c in p.coeffs.items():
        out[(m, n)] = c.conjugate() if hasattr(c, "conjugate") else c.conjugate()
    return NOPoly(p.q, out, p.degree_bound, p.truncated_at)


def r_action(gen: str, p: NOPoly, q: QParam = None) -> NOPoly:
    """Right realization of the deformed enveloping algebra on monomials:

        K:  z*^n z^m -> q^{m-n} z*^n z^m
        P:  z*^n z^m -> i q^{-n} (m)_q z*^n z^{m-1}
        P*: z*^n z^m -> i q^{-n+1} (n)_q z*^{n-1} z^m
    """
    q = q or p.q
    exact = q.exact
    qv = q.value if exact else q.mpf()
    out = {}

    def add(key, val):
        out[key] = out[key] + val if key in out else val

    for (n, m), c in p.coeffs.items():
        if gen == "K":
            fac = qv ** (m - n)
            add((n, m), c * Fraction(fac) if exact else c * fac)
        elif gen == "P":
            if m >= 1:
                num = qv ** (-n) * (1 - qv ** m) / (1 - qv)
                v = (c * Fraction(num)).times_i() if exact else c * mpc(0, 1) * num
                add((n, m - 1), v)
        elif gen == "P*":
            if n >= 1:
                num = qv ** (-n + 1) * (1 - qv ** n) / (1 - qv)
                v = (c * Fraction(num)).times_i() if exact else c * mpc(0, 1) * num
                add((n - 1, m), v)
        else:
            raise ValueError(f"unknown generator {gen!r}")
    return NOPoly(q, out, p.degree_bound, p.truncated_at)


def expand_d_poly(j: int, w: RepWeight, degree_cutoff: int, q: QParam) -> NOPoly:
    """Weight operator as a normal-ordered polynomial, truncated at
    ``degree_cutoff`` total degree.

    The profile is expanded through its confluent series; the k-th term's
    zeta-product prod_{i<k}(zeta - q^i) is normal-ordered with NOPoly
    arithmetic and collapses to a single monomial z*^k z^k, so truncation is
    exact monomial-by-monomial below the cutoff.
    """
    if j < 0:
        raise ValueError("index must be nonnegative")
    if degree_cutoff < j:
        raise ValueError("cutoff must be at least the index")
    exact = q.exact
    qv = q.value if exact else q.mpf()
    lam = Fraction(w.value) if exact else _as_mp(w.value)

    if exact:
        pref = QExact.rational(qv, 1).times_q_halfpow(j * (j + 1) // 2)
        minus_i_lam = QExact.gaussian(qv, 0, -lam)
        for _ in range(j):
            pref = pref * minus_i_lam
        pref = pref / q_factorial(j, q)
    else:
        pref = qv ** (mpf(j) * (j + 1) / 4) * (mpc(0, -1) * lam) ** j \
            / _as_mp(q_factorial(j, q))

    one = QExact.rational(qv, 1) if exact else mpc(1)
    zeta = NOPoly(q, {(0, 0): one,
                      (1, 1): one * Fraction(qv - 1) if exact else mpc(qv - 1)})
    acc = NOPoly.zero(q)
    prod = NOPoly(q, {(0, 0): one})
    k = 0
    coef_k = pref
    truncated = None
    while True:
        if 2 * k + j > degree_cutoff:
            truncated = degree_cutoff
            break
        term = prod.scale(coef_k)
        shifted = NOPoly(q, {(n, m + j): c for (n, m), c in term.coeffs.items()})
        acc = acc + shifted
        # extend: prod <- (zeta - q^k) prod, coef ratio for step k -> k+1
        step = NOPoly(q, dict(zeta.coeffs))
        qk = Fraction(qv ** k) if exact else qv ** k
        step.coeffs[(0, 0)] = step.coeffs[(0, 0)] - (one * qk)
        prod = nopoly_normal_product(step, prod)
        ratio_num = qv ** k * (1 - qv) * qv ** (j + 1) * (lam * lam) \
            / ((1 - qv ** (k + 1)) * (1 - qv ** (j + k + 1)))
        coef_k = coef_k * Fraction(ratio_num) if exact else coef_k * ratio_num
        k += 1
    out = NOPoly(q, acc.coeffs, None, truncated)
    return out


# ---------------------------------------------------------------------------
# truncated basis and operator matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FockBasis:
    """Truncated oscillator (0..n_max) by charge (j_min..j_max) basis."""

    n_max: int
    j_min: int
    j_max: int

    def __post_init__(self):
        if self.n_max < 4:
            raise ValueError("n_max must be at least 4")
        if self.j_max - self.j_min < 8:
            raise ValueError("charge window must span at least 8")

    def states(self):
        for n in range(self.n_max + 1):
            for j in range(self.j_min, self.j_max + 1):
                yield (n, j)

    def __contains__(self, state):
        n, j = state
        return 0 <= n <= self.n_max and self.j_min <= j <= self.j_max

    def dim(self):
        return (self.n_max + 1) * (self.j_max - self.j_min + 1)

    def interior(self, state, margin_n=2, margin_j=2):
        n, j = state
        return (n <= self.n_max - margin_n
                and self.j_min + margin_j <= j <= self.j_max - margin_j)


class OpMatrix:
    """Sparse operator matrix over a FockBasis, entries exact or mp-float."""

    def __init__(self, basis: FockBasis, label="", entries=None):
        self.basis = basis
        self.label = label
        self.entries = dict(entries or {})

    def set(self, row, col, val):
        self.entries[(row, col)] = val

    def get(self, row, col):
        return self.entries.get((row, col))

    def __matmul__(self, other):
        bycol = {}
        for (r, c), v in self.entries.items():
            bycol.setdefault(c, []).append((r, v))
        out = {}
        for (k, c2), v2 in other.entries.items():
            for (r, v1) in bycol.get(k, ()):
                key = (r, c2)
                term = v1 * v2
                out[key] = out[key] + term if key in out else term
        return OpMatrix(self.basis, f"({self.label}@{other.label})", out)

    def __add__(self, other):
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out[k] + v if k in out else v
        return OpMatrix(self.basis, f"({self.label}+{other.label})", out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        return OpMatrix(self.basis, self.label,
                        {k: c * v for k, v in self.entries.items()})

    def dagger(self):
        out = {}
        for (r, c), v in self.entries.items():
            out[(c, r)] = v.conjugate() if hasattr(v, "conjugate") else v
        return OpMatrix(self.basis, self.label + "^+", out)

    @classmethod
    def identity(cls, basis, exact_q=None):
        one = RootScalar(1) if exact_q is not None else mpf(1)
        return cls(basis, "1", {(s, s): one for s in basis.states()})

    def apply(self, vec):
        bycol = getattr(self, "_bycol", None)
        if bycol is None:
            bycol = {}
            for (r, c), v in self.entries.items():
                bycol.setdefault(c, []).append((r, v))
            self._bycol = bycol
        out = {}
        for c, amp in vec.items():
            for (r, v) in bycol.get(c, ()):
                out[r] = out.get(r, mpc(0)) + v * amp
        return out

    def max_abs_interior(self, margin_n=2, margin_j=2):
        mx = mpf(0)
        for (r, c), v in self.entries.items():
            if self.basis.interior(r, margin_n, margin_j) \
                    and self.basis.interior(c, margin_n, margin_j):
                a = abs(v.to_mpf()) if isinstance(v, RootScalar) else \
                    abs(v.to_mpc()) if isinstance(v, QExact) else abs(v)
                mx = max(mx, a)
        return mx

    def is_zero_interior(self, margin_n=2, margin_j=2):
        """Exact-zero test on interior entries (exact scalar modes)."""
        for (r, c), v in self.entries.items():
            if self.basis.interior(r, margin_n, margin_j) \
                    and self.basis.interior(c, margin_n, margin_j):
                if isinstance(v, (RootScalar, QExact)):
                    if not v.is_zero():
                        return False
                elif v != 0:
                    return False
        return True

    def dump(self, fh):
        """row, col, re, im per line (text matrix interchange format)."""
        for (r, c), v in sorted(self.entries.items()):
            if isinstance(v, RootScalar):
                z = mpc(v.to_mpf())
            elif isinstance(v, QExact):
                z = v.to_mpc()
            else:
                z = mpc(v)
            fh.write(f"{r[0]} {r[1]} {c[0]} {c[1]} {mp.nstr(z.real, 17)} {mp.nstr(z.imag, 17)}\n")


def build_fock_ops(basis: FockBasis, q: QParam, exact=None):
    """Shift matrices for z, z^+, B, B^+, A, V from the defining rules:

        z|n,j>   = sqrt((n)_q) |n-1,j>      z^+|n,j> = sqrt((n+1)_q)|n+1,j>
        B|n,j>   = q^{j/2} |n,j-1>          B^+|n,j> = q^{(j+1)/2}|n,j+1>
        A|n,j>   = |n,j-2>                  V|n,j>   = |n,j-1>

    The second creation line is the adjoint-completed reading of the
    defining display (validated by the relation tests).  Exact mode stores
    quadratic-surd entries.
    """
    if exact is None:
        exact = q.exact
    ops = {name: OpMatrix(basis, name) for name in
           ("z", "zdag", "B", "Bdag", "A", "V")}
    qv = q.value if exact else q.mpf()

    def rootq_pow(j):
        # q^{j/2} exactly
        if exact:
            if j % 2 == 0:
                return RootScalar(qv ** (j // 2))
            return RootScalar(qv ** ((j - 1) // 2), qv)
        return q.mpf() ** (mpf(j) / 2)

    for (n, j) in basis.states():
        if n >= 1:
            v = RootScalar(1, q_number(n, q)) if exact else sqrt(q_number(n, q))
            if (n - 1, j) in basis:
                ops["z"].set((n - 1, j), (n, j), v)
        if n + 1 <= basis.n_max:
            v = RootScalar(1, q_number(n + 1, q)) if exact else sqrt(q_number(n + 1, q))
            ops["zdag"].set((n + 1, j), (n, j), v)
        if (n, j - 1) in basis:
            ops["B"].set((n, j - 1), (n, j), rootq_pow(j))
        if (n, j + 1) in basis:
            ops["Bdag"].set((n, j + 1), (n, j), rootq_pow(j + 1))
        if (n, j - 2) in basis:
            one = RootScalar(1) if exact else mpf(1)
            ops["A"].set((n, j - 2), (n, j), one)
        if (n, j - 1) in basis:
            one = RootScalar(1) if exact else mpf(1)
            ops["V"].set((n, j - 1), (n, j), one)
    return ops


def eta2_matrix(basis: FockBasis, q: QParam, power=1, exact=None):
    """Diagonal matrix of (B^+B)^power, eigenvalue q^{j*power}."""
    if exact is None:
        exact = q.exact
    qv = q.value if exact else q.mpf()
    out = OpMatrix(basis, f"eta^{2 * power}")
    for s in basis.states():
        _, j = s
        v = RootScalar(qv ** (j * power)) if exact else qv ** (j * power)
        out.set(s, s, v)
    return out


# ---------------------------------------------------------------------------
# constructive basis change
# ---------------------------------------------------------------------------

def _eq_minus_mp(x, q: QParam):
    """e_q^{-x} for x >= 0, product form, at ambient precision."""
    qm = q.mpf()
    out = mpf(1)
    term = (1 - qm) * x
    eps = mpf(10) ** (-mp.dps - 5)
    while abs(term) > eps:
        out *= 1 + term
        term *= qm
    return 1 / out


def build_u_constructive(basis: FockBasis, q: QParam, ctx: PrecisionCtx,
                         columns=None, leak_tol=None):
    """Basis-change matrix built by operator application alone.

    Each column (n, j) is sqrt(e_q^{-B^+B}), then the alternating series in
    (A^+ B z^+), then n normalized applications of (B^+ + A^+ z^+), applied
    to |0, j>.  Mass pushed across the truncation boundary is accumulated
    per column; columns above ``leak_tol`` are reported in the audit and a
    TruncationError is raised if an explicitly requested column is invalid.

    Returns (U, audit) with audit mapping column -> leaked amplitude bound.
    """
    with ctx.workdps():
        qm = q.mpf()
        if leak_tol is None:
            leak_tol = mpf(10) ** (-(ctx.digits - 10))
        requested = set(columns) if columns is not None else None
        U = OpMatrix(basis, "U")
        audit = {}

        def apply_rule(rule, vec, leak):
            out = {}
            for (n, j), c in vec.items():
                for (n2, j2), f in rule(n, j):
                    if (n2, j2) in basis:
                        out[(n2, j2)] = out.get((n2, j2), mpc(0)) + f * c
                    else:
                        leak[0] += abs(f * c)
            return out

        sq = lambda n: sqrt(q_number(n, QParam(qm)))
        raise_rule = lambda n, j: [((n + 1, j + 1), qm ** (mpf(j) / 2) * sq(n + 1))]
        dzd_rule = lambda n, j: [((n, j + 1), qm ** (mpf(j + 1) / 2)),
                                 ((n + 1, j + 2), sq(n + 1))]

        for j0 in range(basis.j_min, basis.j_max + 1):
            leak = [mpf(0)]
            vec = {(0, j0): mpc(sqrt(_eq_minus_mp(qm ** j0, q)))}
            term = dict(vec)
            acc = dict(vec)
            k = 0
            while term:
                k += 1
                term = apply_rule(raise_rule, term, leak)
                fk = (-1) ** k / _as_mp(q_factorial(k, QParam(qm)))
                for key, c in term.items():
                    acc[key] = acc.get(key, mpc(0)) + fk * c
                if k > basis.n_max + 2:
                    break
            col = acc
            for ncol in range(basis.n_max + 1):
                key = (ncol, j0)
                if requested is None or key in requested:
                    audit[key] = leak[0]
                    if leak[0] <= leak_tol:
                        for row, c in col.items():
                            if abs(c) > mpf(10) ** (-mp.dps + 2):
                                U.set(row, key, c)
                    elif requested is not None:
                        raise TruncationError(
                            f"column {key} leaks {mp.nstr(leak[0], 5)} across the cutoff")
                if ncol == basis.n_max:
                    break
                col = apply_rule(dzd_rule, col, leak)
                norm = sq(ncol + 1)
                col = {kk: c / norm for kk, c in col.items()}
        return U, audit


# ---------------------------------------------------------------------------
# coaction application (the delta-image of the weight operators)
# ---------------------------------------------------------------------------

def _profile_series_coeffs(j: int, lam, q: QParam, kmax: int):
    """Coefficients c_k of f_j(zeta) = sum_k c_k prod_{i<k}(zeta - q^i)."""
    qm = q.mpf()
    pref = qm ** (mpf(j) * (j + 1) / 4) * (mpc(0, -1) * lam) ** j \
        / _as_mp(q_factorial(j, q))
    coeffs = [pref]
    c = pref
    for k in range(kmax):
        c = c * qm ** k * (1 - qm) * qm ** (j + 1) * lam ** 2 \
            / ((1 - qm ** (k + 1)) * (1 - qm ** (j + k + 1)))
        coeffs.append(c)
    return coeffs


def coaction_weight_apply(j: int, w: RepWeight, q: QParam, ctx: PrecisionCtx,
                          ket, basis: FockBasis, kmax=None):
    """delta(D_j)|ket> on the truncated basis (integer charge lattice).

    For j >= 0 applies delta(z)^j then the profile series in
    zeta_delta = 1 - (1-q) delta(z*) delta(z); for j < 0 the series first,
    then delta(z*)^{|j|}.
    """
    with ctx.workdps():
        qm = q.mpf()
        lam = w.mpf()
        if kmax is None:
            kmax = ctx.max_terms
        sq = lambda n: sqrt(q_number(n, QParam(qm)))

        def apply_rule(rule, vec):
            out = {}
            for (n, jj), c in vec.items():
                for (n2, j2), f in rule(n, jj):
                    if (n2, j2) in basis:
                        out[(n2, j2)] = out.get((n2, j2), mpc(0)) + f * c
            return out

        dz = lambda n, jj: ([((n, jj - 1), qm ** (mpf(jj) / 2))]
                            + ([((n - 1, jj - 2), sq(n))] if n >= 1 else []))
        dzd = lambda n, jj: [((n, jj + 1), qm ** (mpf(jj + 1) / 2)),
                             ((n + 1, jj + 2), sq(n + 1))]

        def zeta_apply(vec):
            wv = apply_rule(dzd, apply_rule(dz, vec))
            out = dict(vec)
            for kk, c in wv.items():
                out[kk] = out.get(kk, mpc(0)) - (1 - qm) * c
            return out

        jj = abs(j)
        vec = dict(ket)
        if j >= 0:
            for _ in range(j):
                vec = apply_rule(dz, vec)
        coeffs = _profile_series_coeffs(jj, lam, q, kmax)
        acc = {}
        prodv = dict(vec)
        terms = 0
        for k in range(kmax + 1):
            ck = coeffs[k]
            mx = mpf(0)
            for key, c in prodv.items():
                acc[key] = acc.get(key, mpc(0)) + ck * c
                mx = max(mx, abs(c))
            terms = k + 1
            if k > 4 and mx * abs(ck) < mpf(10) ** (-mp.dps - 5):
                break
            zp = zeta_apply(prodv)
            prodv = {key: zp.get(key, mpc(0)) - qm ** k * prodv.get(key, mpc(0))
                     for key in set(zp) | set(prodv)}
        if j < 0:
            for _ in range(-j):
                acc = apply_rule(dzd, acc)
        return acc, terms


def coaction_weight_sandwich(j: int, w: RepWeight, q: QParam,
                             ctx: PrecisionCtx, n: int, x, fock_cap=None,
                             kmax=None):
    """delta(D_j) applied to the charge-generic state |n; eta^2 = x>.

    Works on the offset lattice (fock level, charge offset) with every shift
    coefficient expressed through sqrt(x) and powers of q, so x need not be
    a point of the charge spectrum.  Returns ({(fock, offset): amp}, terms);
    offsets are relative to the input state.  The oscillator cap defaults to
    a value the series cannot reach, so no mass is lost.
    """
    with ctx.workdps():
        qm = q.mpf()
        lam = w.mpf()
        xm = _as_mp(x)
        if kmax is None:
            kmax = ctx.max_terms
        if fock_cap is None:
            fock_cap = n + kmax + abs(j) + 2
        rx = sqrt(xm)
        sq = lambda nn: sqrt(q_number(nn, QParam(qm)))

        def apply_rule(rule, vec):
            out = {}
            for (nn, p), c in vec.items():
                for (n2, p2), f in rule(nn, p):
                    if 0 <= n2 <= fock_cap:
                        out[(n2, p2)] = out.get((n2, p2), mpc(0)) + f * c
            return out

        # B|p> = sqrt(x) q^{p/2} |p-1>, B^+|p> = sqrt(x) q^{(p+1)/2} |p+1>
        dz = lambda nn, p: ([((nn, p - 1), rx * qm ** (mpf(p) / 2))]
                            + ([((nn - 1, p - 2), sq(nn))] if nn >= 1 else []))
        dzd = lambda nn, p: [((nn, p + 1), rx * qm ** (mpf(p + 1) / 2)),
                             ((nn + 1, p + 2), sq(nn + 1))]

        def zeta_apply(vec):
            wv = apply_rule(dzd, apply_rule(dz, vec))
            out = dict(vec)
            for kk, c in wv.items():
                out[kk] = out.get(kk, mpc(0)) - (1 - qm) * c
            return out

        jj = abs(j)
        vec = {(n, 0): mpc(1)}
        if j >= 0:
            for _ in range(j):
                vec = apply_rule(dz, vec)
        coeffs = _profile_series_coeffs(jj, lam, q, kmax)
        acc = {}
        prodv = dict(vec)
        terms = 0
        quiet = 0
        for k in range(kmax + 1):
            ck = coeffs[k]
            mx = mpf(0)
            for key, c in prodv.items():
                acc[key] = acc.get(key, mpc(0)) + ck * c
                mx = max(mx, abs(c))
            terms = k + 1
            scale = max((abs(c) for c in acc.values()), default=mpf(1))
            if mx * abs(ck) < mpf(10) ** (-mp.dps - 5) * max(scale, mpf(1)):
                quiet += 1
                if quiet >= 3 and k > 4:
                    break
            else:
                quiet = 0
            zp = zeta_apply(prodv)
            prodv = {key: zp.get(key, mpc(0)) - qm ** k * prodv.get(key, mpc(0))
                     for key in set(zp) | set(prodv)}
        if j < 0:
            for _ in range(-j):
                acc = apply_rule(dzd, acc)
        return acc, terms
