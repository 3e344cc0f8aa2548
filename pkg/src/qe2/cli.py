"""Command-line front end: single evaluations, verification grids, and
oracle audits."""
from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

from mpmath import mp, mpf, mpc, workdps

from . import identities, qalgebra
from .errors import (DegreeOverflow, DenominatorPole, GridFileError,
                     NonConvergent, SingularPoint, TruncationError)
from .identities import (FAIL, INCONCLUSIVE, PASS, GridSpec, run_grid,
                         write_csv, write_jsonl)
from .qcore import PrecisionCtx, QParam, q_exp, q_exp_invbase, q_factorial, \
    q_number, q_pochhammer
from .qspecial import QKummerArgs, bessel_j, kummer_1f1, q_bessel, q_kummer, \
    q_laguerre
from .repmatrix import (RepWeight, ZetaPoint, d_elem, d_scalar, f_weight,
                        phi_mn, t_elem, u_elem)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_ORACLE = 3
EXIT_USAGE = 64
EXIT_GRIDFILE = 65

VERIFY_NAMES = {
    "sum-two": "sum_two", "sum-three": "sum_three", "sum-four": "sum_four",
    "example-A": "example_A", "example-A-classical": "example_A_classical",
    "example-B": "example_B", "example-C": "example_C",
    "limit-kummer": "limit_q1_kummer", "limit-plane": "limit_q1_plane",
    "limit-sigma": "limit_sigma0",
}


def parse_number(text):
    """Accept ints, floats, and exact 'p/r' rationals."""
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    try:
        return int(text)
    except ValueError:
        return float(text)


def _parse_range(text):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [parse_number(v) for v in text.split(",") if v != ""]


def parse_grid_file(path):
    """Flat ``key = v1,v2`` lines with ``lo..hi`` integer ranges."""
    grid = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise GridFileError(f"cannot read grid file: {exc}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GridFileError(f"line {lineno}: expected 'key = values'", lineno)
        key, _, vals = line.partition("=")
        key = key.strip()
        if not key:
            raise GridFileError(f"line {lineno}: empty key", lineno)
        try:
            grid[key] = _parse_range(vals.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise GridFileError(f"line {lineno}: bad value list ({exc})", lineno)
        if not grid[key]:
            raise GridFileError(f"line {lineno}: empty value list", lineno)
    if not grid:
        raise GridFileError("grid file defines no parameters")
    return grid


def build_parser():
    p = argparse.ArgumentParser(prog="qe2",
                                description="q-special functions and "
                                            "summation-identity verification")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--q", type=parse_number, default=None)
        sp.add_argument("--lambda", dest="lam", type=parse_number, default=None)
        sp.add_argument("--x", type=parse_number, default=None)
        sp.add_argument("--j", type=int, default=None)
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--m", type=int, default=None)
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--i", type=int, default=None)
        sp.add_argument("--jw", type=int, default=None)
        sp.add_argument("--a", type=parse_number, default=None)
        sp.add_argument("--b", type=parse_number, default=None)
        sp.add_argument("--c", type=parse_number, default=None)
        sp.add_argument("--d", type=parse_number, default=None)
        sp.add_argument("--alpha", type=int, default=None)
        default_digits = int(os.environ.get("QE2_DIGITS", "50"))
        sp.add_argument("--digits", type=int, default=default_digits)
        sp.add_argument("--max-terms", type=int, default=500)
        sp.add_argument("--rtol", type=float, default=1e-12)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    pe = sub.add_parser("eval", help="evaluate one special function")
    pe.add_argument("function")
    common(pe)

    pv = sub.add_parser("verify", help="verify an identity on a grid")
    pv.add_argument("identity", choices=sorted(VERIFY_NAMES))
    pv.add_argument("--grid", type=str, default=None)
    common(pv)

    po = sub.add_parser("oracle", help="run operator-algebra audits")
    po.add_argument("check", choices=("relations", "u-match", "covariance",
                                      "closing", "lemma"))
    po.add_argument("--N", type=int, default=10)
    po.add_argument("--J", type=str, default="-8..8")
    po.add_argument("--cutoff", type=int, default=7)
    common(po)
    return p


def _ctx(args):
    return PrecisionCtx(digits=args.digits, max_terms=args.max_terms,
                        rtol=args.rtol)


def _qparam(args):
    if args.q is None:
        raise SystemExit(EXIT_USAGE)
    return QParam(args.q if isinstance(args.q, Fraction) else mpf(args.q))


def _fmt(z):
    z = mpc(z)
    return f"{mp.nstr(z.real, 20)}{'+' if z.imag >= 0 else '-'}{mp.nstr(abs(z.imag), 20)}j"


def cmd_eval(args):
    ctx = _ctx(args)
    fn = args.function
    need = lambda *names: _require(args, names)
    with ctx.workdps():
        try:
            if fn == "q_number":
                need("n", "q")
                val, meta = q_number(args.n, _qparam(args)), None
            elif fn == "q_factorial":
                need("n", "q")
                val, meta = q_factorial(args.n, _qparam(args)), None
            elif fn == "q_pochhammer":
                need("a", "q")
                val, meta = q_pochhammer(args.a, _qparam(args), args.k), None
            elif fn == "q_exp":
                need("x", "q")
                res = q_exp(args.x, _qparam(args), ctx)
                val, meta = res.value, res
            elif fn == "q_exp_invbase":
                need("x", "q")
                res = q_exp_invbase(args.x, _qparam(args), ctx)
                val, meta = res.value, res
            elif fn == "q_kummer":
                need("a", "b", "x", "q")
                res = q_kummer(QKummerArgs(args.a, args.b, args.x), _qparam(args), ctx)
                val, meta = res.value, res
            elif fn == "q_bessel":
                need("k", "x", "q")
                res = q_bessel(args.k, args.x, _qparam(args), ctx)
                val, meta = res.value, res
            elif fn == "q_laguerre":
                need("n", "alpha", "x", "q")
                val, meta = q_laguerre(args.n, args.alpha, args.x, _qparam(args), ctx), None
            elif fn == "kummer_1f1":
                need("c", "d", "x")
                val, meta = kummer_1f1(args.c, args.d, args.x, ctx), None
            elif fn == "bessel_j":
                need("j", "x")
                val, meta = bessel_j(args.j, args.x, ctx), None
            elif fn == "phi_mn":
                need("m", "n", "x", "q")
                val, meta = phi_mn(args.m, args.n, args.x, _qparam(args), ctx), None
            elif fn == "f_weight":
                need("j", "lam", "x", "q")
                val = f_weight(args.j, RepWeight(args.lam, allow_trivial=True),
                               ZetaPoint(args.x), _qparam(args), ctx)
                meta = None
            elif fn == "d_elem":
                need("j", "lam", "m", "n", "q")
                val = d_elem(args.j, RepWeight(args.lam, allow_trivial=True),
                             args.m, args.n, _qparam(args), ctx)
                meta = None
            elif fn == "u_elem":
                need("m", "i", "n", "jw", "q")
                val = u_elem(args.m, args.i, args.n, args.jw, _qparam(args), ctx)
                meta = None
            elif fn == "t_elem":
                need("i", "j", "lam", "x", "q")
                val = t_elem(args.i, args.j, RepWeight(args.lam, allow_trivial=True),
                             args.x, _qparam(args), ctx)
                meta = None
            elif fn == "d_scalar":
                need("j", "lam", "x", "q")
                val = d_scalar(args.j, RepWeight(args.lam, allow_trivial=True),
                               args.x, _qparam(args), ctx)
                meta = None
            else:
                print(f"unknown function: {fn}", file=sys.stderr)
                return EXIT_USAGE
        except NonConvergent:
            print("non-convergent", file=sys.stderr)
            return EXIT_INCONCLUSIVE
        except (DenominatorPole, SingularPoint) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
    if isinstance(val, Fraction):
        print(f"value {val.numerator}/{val.denominator}")
    else:
        print(f"value {_fmt(val)}")
    if meta is not None:
        print(f"terms_used {meta.terms_used}")
        print(f"tail_estimate {mp.nstr(mpf(meta.tail_estimate), 5)}")
        if not meta.converged:
            return EXIT_INCONCLUSIVE
    return EXIT_OK


def _require(args, names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        print(f"missing required flags: {', '.join('--' + m for m in missing)}",
              file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def cmd_verify(args):
    ctx = _ctx(args)
    identity = VERIFY_NAMES[args.identity]
    if args.grid:
        try:
            grid = parse_grid_file(args.grid)
        except GridFileError as exc:
            print(f"grid file error: {exc}", file=sys.stderr)
            return EXIT_GRIDFILE
    else:
        grid = {}
        for name, val in (("j", args.j), ("k", args.k), ("m", args.m),
                          ("n", args.n), ("i", args.i), ("jw", args.jw),
                          ("q", args.q), ("lambda", args.lam), ("x", args.x)):
            if val is not None:
                grid[name] = [val]
    spec = GridSpec(identity, grid, ctx)
    reports = list(run_grid(spec))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.format == "jsonl":
            write_jsonl(reports, out)
        else:
            write_csv(reports, out)
    finally:
        if args.out:
            out.close()
    statuses = [r.status for r in reports]
    if any(s == FAIL for s in statuses):
        return EXIT_FAIL
    if any(s == INCONCLUSIVE for s in statuses):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_oracle(args):
    ctx = _ctx(args)
    try:
        jlo, jhi = (int(v) for v in args.J.split(".."))
    except ValueError:
        print("bad --J range; expected lo..hi", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.check == "relations":
            return _oracle_relations(args, ctx, jlo, jhi)
        if args.check == "u-match":
            return _oracle_umatch(args, ctx, jlo, jhi)
        if args.check == "covariance":
            return _oracle_covariance(args, ctx)
        if args.check == "closing":
            return _oracle_closing(args, ctx, jlo, jhi)
        if args.check == "lemma":
            return _oracle_lemma(args, ctx)
    except (DegreeOverflow, TruncationError) as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_USAGE


def _oracle_relations(args, ctx, jlo, jhi):
    q = QParam(args.q if isinstance(args.q, Fraction) else Fraction(str(args.q)))
    basis = qalgebra.FockBasis(args.N, jlo, jhi)
    ops = qalgebra.build_fock_ops(basis, q, exact=True)
    ident = qalgebra.OpMatrix.identity(basis, exact_q=q.value)
    checks = {
        "osc-commutation": (ops["z"] @ ops["zdag"])
            - (ops["zdag"] @ ops["z"]).scale(qalgebra.RootScalar(q.value)) - ident,
        "translation-commutation": (ops["B"] @ ops["Bdag"])
            - (ops["Bdag"] @ ops["B"]).scale(qalgebra.RootScalar(q.value)),
        "rotation-B": (ops["A"] @ ops["B"])
            - (ops["B"] @ ops["A"]).scale(qalgebra.RootScalar(q.value)),
        "rotation-Bdag": (ops["A"] @ ops["Bdag"])
            - (ops["Bdag"] @ ops["A"]).scale(qalgebra.RootScalar(q.value)),
        "rotation-unitary": (ops["A"].dagger() @ ops["A"]) - ident,
    }
    bad = 0
    for name, diff in checks.items():
        ok = diff.is_zero_interior()
        print(f"{name}: {'exact' if ok else 'VIOLATED'}")
        bad += 0 if ok else 1
    if bad:
        print(f"{bad} relation(s) violated", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def _oracle_umatch(args, ctx, jlo, jhi):
    from .repmatrix import u_elem as u_closed
    q = QParam(mpf(args.q) if not isinstance(args.q, Fraction)
               else mpf(args.q.numerator) / args.q.denominator)
    basis = qalgebra.FockBasis(args.N, jlo, jhi)
    with ctx.workdps():
        U, audit = qalgebra.build_u_constructive(basis, q, ctx)
        block = args.N // 2
        err = mpf(0)
        tol = mpf(10) ** (-(ctx.digits - 10))
        for (row, col), v in U.entries.items():
            m, i = row
            n, jw = col
            if m > block or n > block or audit.get(col, mpf(1)) > tol:
                continue
            if not (jlo + 2 <= i <= jhi - 2):
                continue
            err = max(err, abs(v - u_elem(m, i, n, jw, q, ctx)))
        print(f"max |constructive - closed| on interior block: {mp.nstr(err, 5)}")
        return EXIT_OK if err < mpf("1e-15") else EXIT_ORACLE


def _oracle_covariance(args, ctx):
    q = QParam(args.q if isinstance(args.q, Fraction) else Fraction(str(args.q)))
    lam = args.lam if args.lam is not None else Fraction(1, 2)
    w = RepWeight(lam)
    j = args.j if args.j is not None else 1
    cutoff = args.cutoff
    dj = qalgebra.expand_d_poly(j, w, cutoff, q)
    djm1 = qalgebra.expand_d_poly(j - 1, w, cutoff, q)
    lhs = qalgebra.r_action("P", dj)
    lam_f = Fraction(lam)
    # compare on the common monomial range (k-diagonal action)
    kmax = (cutoff - j) // 2
    ok = True
    for k in range(kmax + 1):
        key = (k, k + j - 1)
        a = lhs.coeffs.get(key)
        b = djm1.coeffs.get(key)
        b = b.times_q_halfpow(j) * lam_f if b is not None else None
        if (a is None) != (b is None) or (a is not None and not (a - b).is_zero()):
            ok = False
    kq = qalgebra.r_action("K", dj)
    for key, v in dj.coeffs.items():
        target = v * (q.value ** j)
        got = kq.coeffs.get(key)
        if got is None or not (got - target).is_zero():
            ok = False
    print(f"covariance j={j} lambda={lam}: {'exact' if ok else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_ORACLE


def _oracle_closing(args, ctx, jlo, jhi):
    q = QParam(args.q if isinstance(args.q, Fraction) else Fraction(str(args.q)))
    basis = qalgebra.FockBasis(args.N, jlo, jhi)
    ops = qalgebra.build_fock_ops(basis, q, exact=True)
    kmax = args.k if args.k is not None else 4
    bad = 0
    for k in range(1, kmax + 1):
        Bk = ops["B"]
        Bdk = ops["Bdag"]
        for _ in range(k - 1):
            Bk = Bk @ ops["B"]
            Bdk = Bdk @ ops["Bdag"]
        eta2k = qalgebra.eta2_matrix(basis, q, power=k, exact=True)
        d1 = (Bk @ Bdk) - eta2k.scale(qalgebra.RootScalar(
            q.value ** (k * (k + 1) // 2)))
        d2 = (Bdk @ Bk) - eta2k.scale(qalgebra.RootScalar(
            Fraction(1) / q.value ** (k * (k - 1) // 2)))
        ok1 = d1.is_zero_interior(margin_j=k + 1)
        ok2 = d2.is_zero_interior(margin_j=k + 1)
        print(f"k={k}: forward {'exact' if ok1 else 'VIOLATED'}, "
              f"reverse {'exact' if ok2 else 'VIOLATED'}")
        bad += (not ok1) + (not ok2)
    return EXIT_OK if bad == 0 else EXIT_ORACLE


def _oracle_lemma(args, ctx):
    """Determine the shift-exponential commutation identity numerically."""
    from fractions import Fraction as F
    q = QParam(args.q if isinstance(args.q, Fraction) else F(str(args.q)))
    x = args.x if args.x is not None else F(3, 10)
    ok = qalgebra_lemma_check(q, F(x), 24)
    print("z e_q^{-x z*} = -x e_q^{-x z*} + e_q^{-q x z*} z : "
          + ("holds" if ok else "VIOLATED"))
    return EXIT_OK if ok else EXIT_ORACLE


def qalgebra_lemma_check(q: QParam, x, order: int) -> bool:
    """Exact truncated check of the corrected commutation lemma."""
    from fractions import Fraction as F
    qv = q.value
    one = qalgebra.QExact.rational(qv, 1)

    def eq_poly(coef):
        coeffs = {}
        run = F(1)
        for k in range(order + 1):
            coeffs[(k, 0)] = qalgebra.QExact.rational(qv, (-coef) ** k * run)
            run /= _qnum_frac(k + 1, qv)
        return qalgebra.NOPoly(q, coeffs)

    z = qalgebra.NOPoly(q, {(0, 1): one})
    lhs = qalgebra.nopoly_normal_product(z, eq_poly(F(x)))
    rhs = eq_poly(F(x)).scale(qalgebra.QExact.rational(qv, -F(x)))
    rhs = rhs + qalgebra.nopoly_normal_product(eq_poly(qv * F(x)), z)
    diff = lhs - rhs
    return all(v.is_zero() for (nn, mm), v in diff.coeffs.items()
               if nn + mm <= order - 1)


def _qnum_frac(n, qv):
    return (1 - qv ** n) / (1 - qv)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "oracle":
            return cmd_oracle(args)
    except SystemExit as exc:
        return exc.code
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
