"""Hypergeometric classification, convergence regions, and continuation.

classify() turns a representation's gamma structure into Pochhammer data by
exact integer-step root extraction (duplication handled by the 4**n-scaled
split of Gamma(2n+c)); half-integer steps are classified on the even
subsequence n -> 2m.  Regions compare |argument| against 1 and canonicalise
so that reciprocal arguments land in complementary regions.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .core import (AffineForm, BracketSeries, CoefficientTerm, GammaFactor,
                   INDEX, PARAMETER, ParamPower, QC, Symbol, _frac_text,
                   _merge_gammas, _merge_params)
from .solve import (IndexAssignment, SeriesRepresentation, dedupe,
                    enumerate_assignments, evaluate_assignment)
from . import numerics
from .numerics import (Env, NumericConfig, NumericValue, pfq_sum)


class UnclassifiableError(ValueError):
    pass


class ContinuationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# symbolic argument products and regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymbolicProduct:
    """coeff * prod(sym**expo): the argument of a classified series."""

    coeff: Fraction = Fraction(1)
    powers: tuple[tuple[Symbol, Fraction], ...] = ()

    @staticmethod
    def build(coeff: Fraction, powers: dict[Symbol, Fraction]
              ) -> "SymbolicProduct":
        clean = tuple(sorted(((s, e) for s, e in powers.items() if e != 0),
                             key=lambda t: t[0].name))
        return SymbolicProduct(coeff, clean)

    def evaluate(self, env: Env) -> complex:
        v = complex(self.coeff)
        for s, e in self.powers:
            if s not in env:
                raise KeyError(f"unassigned parameter {s.name}")
            v *= env[s].to_complex() ** complex(e)
        return v

    def text(self) -> str:
        parts = [] if self.coeff == 1 and self.powers else [_frac_text(self.coeff)]
        if self.coeff != 1 and self.powers:
            parts = [_frac_text(self.coeff)]
        for s, e in self.powers:
            parts.append(s.name if e == 1 else f"{s.name}^{_frac_text(e)}")
        return "*".join(parts) if parts else "1"

    def canonical(self) -> "SymbolicProduct":
        """Strip the sign; for pure-symbol arguments reduce exponents by
        their gcd so |beta^2/alpha^2| and |beta/alpha| collapse."""
        coeff = abs(self.coeff)
        powers = self.powers
        if powers and coeff == 1:
            nums = [abs(e.numerator) for _, e in powers]
            dens = [e.denominator for _, e in powers]
            g = Fraction(math.gcd(*nums) if len(nums) > 1 else nums[0],
                         math.lcm(*dens) if len(dens) > 1 else dens[0])
            if g not in (0, 1):
                powers = tuple((s, e / g) for s, e in powers)
        return SymbolicProduct(coeff, powers)

    def reciprocal(self) -> "SymbolicProduct":
        return SymbolicProduct(1 / self.coeff,
                               tuple((s, -e) for s, e in self.powers))


EVERYWHERE = "everywhere"
INSIDE = "insideUnitDisk"
OUTSIDE = "outsideUnitDisk"
NOWHERE = "nowhere"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class Region:
    kind: str
    expr: Optional[SymbolicProduct] = None
    tag: str = ""

    def key(self) -> str:
        if self.kind in (EVERYWHERE, NOWHERE):
            return self.kind
        if self.kind == EMPIRICAL:
            return f"{EMPIRICAL}:{self.tag}"
        return f"{self.kind}:{self.expr.canonical().text()}"

    def text(self) -> str:
        if self.kind == EVERYWHERE:
            return "everywhere"
        if self.kind == NOWHERE:
            return "nowhere"
        if self.kind == EMPIRICAL:
            return f"empirical({self.tag})"
        op = "<" if self.kind == INSIDE else ">"
        return f"|{self.expr.canonical().text()}| {op} 1"

    def contains(self, env: Env) -> Optional[bool]:
        if self.kind == EVERYWHERE:
            return True
        if self.kind == NOWHERE:
            return False
        if self.kind == EMPIRICAL:
            return None  # decided by the summation itself
        mag = abs(self.expr.evaluate(env))
        return mag < 1.0 if self.kind == INSIDE else mag > 1.0

    def complements(self, other: "Region") -> bool:
        if self.kind != INSIDE or other.kind != INSIDE:
            return False
        return (self.expr.canonical().reciprocal().canonical().text()
                == other.expr.canonical().text())


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypergeometricData:
    upper: tuple[AffineForm, ...]
    lower: tuple[AffineForm, ...]
    argument: SymbolicProduct
    prefactor: CoefficientTerm
    step: int = 1  # 1: the series itself; s>1: data of the subsequence n=s*m

    def p(self) -> int:
        return len(self.upper)

    def q(self) -> int:
        return len(self.lower)

    def to_json(self) -> dict:
        return {"upper": [str(a) for a in self.upper],
                "lower": [str(b) for b in self.lower],
                "argument": self.argument.text(),
                "step": self.step}


_MAX_STEP = 4


def classify(rep: SeriesRepresentation) -> HypergeometricData:
    """Pochhammer data of a one-dimensional representation.

    Raises UnclassifiableError for irrational/large gamma steps; such
    representations are still summable by direct term generation.
    """
    n = rep.free_index
    if n is None:
        raise UnclassifiableError("dimension-0 representation has no series")
    term = rep.term
    if tuple(term.factorial_indices) != (n,):
        raise UnclassifiableError("free index must carry exactly one phi")

    dens = [term.sign_exponent.coefficient(n).denominator]
    for g in term.gammas:
        dens.append(g.argument.coefficient(n).denominator)
    for p in term.params:
        dens.append(p.exponent.coefficient(n).denominator)
    step = math.lcm(*dens)
    if step > _MAX_STEP:
        raise UnclassifiableError(f"gamma step denominator {step} too large")

    sub = {n: AffineForm.sym(n, step)}
    gammas = list(_merge_gammas(
        [GammaFactor(g.argument.substitute(sub), g.power)
         for g in term.gammas]
        + [GammaFactor(AffineForm.sym(n, step).shifted(1), -1)]))
    sign_coeff = term.sign_exponent.coefficient(n) * step
    assert sign_coeff.denominator == 1

    upper: list[AffineForm] = []
    lower: list[AffineForm] = []
    arg_coeff = Fraction(1)
    arg_powers: dict[Symbol, Fraction] = {}

    if int(sign_coeff) % 2 == 1:
        arg_coeff = -arg_coeff
    for p in term.params:
        gamma_exp = p.exponent.coefficient(n) * step
        if gamma_exp == 0:
            continue
        if isinstance(p.base, Fraction):
            if gamma_exp.denominator == 1:
                arg_coeff *= p.base ** int(gamma_exp)
            else:
                raise UnclassifiableError(
                    "fractional power of a rational base in the argument")
        else:
            arg_powers[p.base] = arg_powers.get(p.base, Fraction(0)) + gamma_exp

    for g in gammas:
        a = g.argument.coefficient(n)
        if a.denominator != 1:
            raise UnclassifiableError("non-integer gamma step after scaling")
        a = int(a)
        if a == 0:
            continue
        beta = g.argument.drop(n)
        if a > 0:
            roots = [beta.shifted(l).scaled(Fraction(1, a)) for l in range(a)]
            dest = upper if g.power > 0 else lower
            arg_coeff *= Fraction(a ** a) ** g.power
        else:
            m = -a
            roots = [beta.scaled(Fraction(-1, m)).shifted(Fraction(l, m))
                     for l in range(1, m + 1)]
            dest = lower if g.power > 0 else upper
            arg_coeff *= (Fraction((-1) ** m, m ** m)) ** g.power
        for r in roots:
            dest.extend([r] * abs(g.power))

    _cancel(upper, lower)
    one = AffineForm.const(1)
    if one in lower:
        lower.remove(one)
    else:
        upper.append(one)
    upper.sort(key=str)
    lower.sort(key=str)

    prefactor = _substituted_term(term, {n: AffineForm.const(0)},
                                  drop_factorials=(n,))
    return HypergeometricData(tuple(upper), tuple(lower),
                              SymbolicProduct.build(arg_coeff, arg_powers),
                              prefactor, step)


def _cancel(upper: list[AffineForm], lower: list[AffineForm]) -> None:
    i = 0
    while i < len(upper):
        if upper[i] in lower:
            lower.remove(upper[i])
            upper.pop(i)
        else:
            i += 1


def _substituted_term(term: CoefficientTerm, sub, drop_factorials=()) -> CoefficientTerm:
    return CoefficientTerm(
        scale=term.scale,
        params=_merge_params(ParamPower(p.base, p.exponent.substitute(sub))
                             for p in term.params),
        gammas=_merge_gammas(GammaFactor(g.argument.substitute(sub), g.power)
                             for g in term.gammas),
        sign_exponent=term.sign_exponent.substitute(sub),
        factorial_indices=tuple(s for s in term.factorial_indices
                                if s not in drop_factorials),
    )


def convergence_region(h: HypergeometricData) -> Region:
    if h.p() < h.q() + 1:
        return Region(EVERYWHERE)
    if h.p() == h.q() + 1:
        return Region(INSIDE, h.argument)
    return Region(NOWHERE)


def group_by_region(reps: Sequence[SeriesRepresentation]
                    ) -> list[tuple[Region, list[SeriesRepresentation],
                                    list[Optional[HypergeometricData]]]]:
    """Partition representations by canonical convergence region (Rule 3).

    Dimension-0 representations converge everywhere (they are constants);
    unclassifiable ones get their own empirical region, summed on faith
    with a runtime ratio test.
    """
    buckets: dict[str, tuple[Region, list, list]] = {}
    order: list[str] = []
    for rep in reps:
        if rep.free_index is None:
            region: Region = Region(EVERYWHERE)
            data: Optional[HypergeometricData] = None
        else:
            try:
                data = classify(rep)
                region = convergence_region(data)
            except UnclassifiableError as exc:
                data = None
                region = Region(EMPIRICAL, tag=rep.origin_name())
        k = region.key()
        if k not in buckets:
            buckets[k] = (region, [], [])
            order.append(k)
        buckets[k][1].append(rep)
        buckets[k][2].append(data)
    return [buckets[k] for k in sorted(order)]


# ---------------------------------------------------------------------------
# exact term-ratio reconstruction (invariant support)
# ---------------------------------------------------------------------------

def reconstructed_ratio(h: HypergeometricData, n: int,
                        env: dict[Symbol, Fraction]) -> Fraction:
    """t(n+1)/t(n) from the Pochhammer data, exact over the rationals."""
    num = _eval_product(h.argument, env)
    for a in h.upper:
        num *= _eval_affine(a, env) + n
    den = Fraction(n + 1)
    for b in h.lower:
        den *= _eval_affine(b, env) + n
    return num / den


def exact_term_ratio(term: CoefficientTerm, free: Symbol, n: int,
                     env: dict[Symbol, Fraction]) -> Fraction:
    """t(n+1)/t(n) straight from the gamma structure, exact over Q."""
    out = Fraction(1)
    sc = term.sign_exponent.coefficient(free)
    if sc.denominator != 1:
        raise UnclassifiableError("half-integer sign step has no rational ratio")
    out *= Fraction(-1) ** int(sc)
    for p in term.params:
        c = p.exponent.coefficient(free)
        base = p.base if isinstance(p.base, Fraction) else env[p.base]
        if c.denominator != 1:
            raise UnclassifiableError("fractional exponent step")
        out *= Fraction(base) ** int(c)
    for g in term.gammas:
        a = g.argument.coefficient(free)
        if a.denominator != 1:
            raise UnclassifiableError("non-integer gamma step")
        a = int(a)
        if a == 0:
            continue
        beta = _eval_affine(g.argument.drop(free), env)
        if a > 0:
            block = Fraction(1)
            for l in range(a):
                block *= a * n + beta + l
        else:
            block = Fraction(1)
            for l in range(1, -a + 1):
                block /= a * n + beta - l
        out *= block ** g.power
    if free in term.factorial_indices:
        out /= (n + 1)
    return out


def _eval_affine(a: AffineForm, env: dict[Symbol, Fraction]) -> Fraction:
    v = a.constant
    for s, c in a.terms:
        v += c * env[s]
    return v


def _eval_product(p: SymbolicProduct, env: dict[Symbol, Fraction]) -> Fraction:
    v = p.coeff
    for s, e in p.powers:
        if e.denominator != 1:
            raise UnclassifiableError("fractional argument power")
        v *= env[s] ** int(e)
    return v


# ---------------------------------------------------------------------------
# pFq bracket representation and analytic continuation
# ---------------------------------------------------------------------------

def pfq_bracket_series(p: int, q: int) -> BracketSeries:
    """Bracket representation of pFq: p+q+1 indices, p+q brackets.

    Indices n, t1..tp, s1..sq; parameters a1..ap, b1..bq and the argument x.
    """
    n = Symbol("n", INDEX)
    ts = [Symbol(f"t{j + 1}", INDEX) for j in range(p)]
    ss = [Symbol(f"s{k + 1}", INDEX) for k in range(q)]
    avs = [Symbol(f"a{j + 1}", PARAMETER) for j in range(p)]
    bvs = [Symbol(f"b{k + 1}", PARAMETER) for k in range(q)]
    x = Symbol("x", PARAMETER)
    indices = [n] + ts + ss
    sign = AffineForm.build({s: 1 for s in indices})
    sign = sign + AffineForm.sym(n, q - 1)
    coeff = CoefficientTerm(
        params=(ParamPower(x, AffineForm.sym(n)),),
        gammas=_merge_gammas([GammaFactor(AffineForm.sym(a), -1) for a in avs]
                             + [GammaFactor(AffineForm.sym(b, -1).shifted(1), -1)
                                for b in bvs]),
        sign_exponent=sign,
        factorial_indices=tuple(sorted(indices)),
    )
    brackets = [AffineForm.build({n: 1, ts[j]: 1, avs[j]: 1}) for j in range(p)]
    brackets += [AffineForm.build({n: -1, ss[k]: 1, bvs[k]: -1}, 1)
                 for k in range(q)]
    return BracketSeries(tuple(indices), coeff, tuple(brackets),
                         index_origins=tuple(s.name for s in indices),
                         bracket_origins=tuple(
                             [f"poch:a{j + 1}" for j in range(p)]
                             + [f"poch:b{k + 1}" for k in range(q)]))


def continue_pfq(upper: Sequence[complex], lower: Sequence[complex],
                 x: complex, cfg: Optional[NumericConfig] = None
                 ) -> tuple[complex, dict]:
    """Analytic continuation of (q+1)Fq to |x| > 1.

    The t-family of the bracket representation supplies the q+1 series
    converging for |x| > 1; their sum (Rule 3) with principal-branch
    (-x)^(-a_i) prefactors is the continued value.  The certificate lists
    the series actually summed, with the bracket pipeline's classification
    as a structural cross-check.
    """
    cfg = cfg or NumericConfig()
    p, q = len(upper), len(lower)
    if p != q + 1:
        raise ContinuationError("continuation requires p == q + 1")
    if abs(x) <= 1.0:
        raise ContinuationError("|x| <= 1: use the direct series")
    for i in range(p):
        for j in range(p):
            if i != j and _near_integer(upper[i] - upper[j]):
                raise ContinuationError(
                    f"upper parameters {i + 1} and {j + 1} differ by an "
                    f"integer: gamma poles in the continuation formula")
    for b in lower:
        if _near_integer(b) and b.real <= 0:
            raise ContinuationError("nonpositive-integer lower parameter")

    series = pfq_bracket_series(p, q)
    assignments, skipped = enumerate_assignments(series)
    if skipped:
        raise ContinuationError("pFq bracket system lost rank unexpectedly")
    reps = [evaluate_assignment(series, a) for a in assignments]

    env: Env = {Symbol("x", PARAMETER): _qc_close(x)}
    for j, v in enumerate(upper):
        env[Symbol(f"a{j + 1}", PARAMETER)] = _qc_close(v)
    for k, v in enumerate(lower):
        env[Symbol(f"b{k + 1}", PARAMETER)] = _qc_close(v)

    value = 0.0 + 0.0j
    certificate: dict = {"p": p, "q": q, "x": [x.real, x.imag], "series": [],
                         "determinants": [str(a.det_abs) for a in assignments]}
    for a, rep in zip(assignments, reps):
        name = rep.origin_name()
        if not name.startswith("t"):
            continue
        i = int(name[1:]) - 1
        data = classify(rep)
        expected_upper = sorted([str(AffineForm.sym(Symbol(f"a{i+1}")))]
                                + [str(AffineForm.sym(Symbol(f"a{i+1}"))
                                       + AffineForm.sym(Symbol(f"b{k+1}"), -1)
                                       + AffineForm.const(1))
                                   for k in range(q)])
        got_upper = sorted(str(u) for u in data.upper)
        if got_upper != expected_upper:
            raise ContinuationError(
                f"pipeline upper parameters {got_upper} disagree with the "
                f"continuation formula {expected_upper}")
        ai = upper[i]
        pref = _principal_pow(-x, -complex(ai))
        for j in range(p):
            if j != i:
                pref *= numerics.gamma(upper[j] - ai) / numerics.gamma(upper[j])
        for k in range(q):
            pref *= numerics.gamma(lower[k]) / numerics.gamma(lower[k] - ai)
        ups = [ai] + [1 - lower[k] + ai for k in range(q)]
        lws = [1 - upper[j] + ai for j in range(p) if j != i]
        f = pfq_sum(ups, lws, 1.0 / x, cfg)
        if not f.ok():
            raise ContinuationError(f"t{i + 1} series failed: {f.status}")
        value += pref * f.value
        certificate["series"].append({
            "origin": name,
            "pfq": data.to_json(),
            "region": convergence_region(data).text(),
            "prefactor": [pref.real, pref.imag],
            "sum": [f.value.real, f.value.imag],
            "terms": f.terms_used,
        })
    return value, certificate


def _principal_pow(base: complex, expo: complex) -> complex:
    """base**expo on the principal branch, with -0.0j normalised to +0.0j
    so negated positive reals land at Arg = +pi, not -pi."""
    if base.imag == 0.0:
        base = complex(base.real, 0.0)
    return cmath.exp(expo * cmath.log(base))


def _near_integer(z: complex, tol: float = 1e-12) -> bool:
    return abs(z.imag) < tol and abs(z.real - round(z.real)) < tol


def _qc_close(z: complex) -> QC:
    return QC(Fraction(z.real).limit_denominator(10 ** 12),
              Fraction(z.imag).limit_denominator(10 ** 12))


# ---------------------------------------------------------------------------
# hypergeometric ODE residual (theta form), used by the verification suite
# ---------------------------------------------------------------------------

def hyp_ode_residual(upper: Sequence[complex], lower: Sequence[complex],
                     x0: complex, value_fn, h: float = 0.05) -> float:
    """|theta prod(theta+b-1) y - x prod(theta+a) y| at x0, theta = x d/dx.

    y is sampled on a local stencil and modelled by a polynomial in
    (x - x0); the theta operators act exactly on that polynomial.
    """
    import numpy as np

    q = len(lower)
    deg = 2 * (q + 2)
    offsets = np.arange(-deg // 2, deg // 2 + 1)
    us = offsets * h
    ys = np.array([value_fn(x0 + u) for u in us], dtype=complex)
    coeffs = np.polynomial.polynomial.polyfit(us, ys, deg)

    def theta(c: "np.ndarray") -> "np.ndarray":
        # (u + x0) d/du acting on sum c_k u^k
        d = np.polynomial.polynomial.polyder(c)
        term1 = np.polynomial.polynomial.polymulx(d)
        return np.polynomial.polynomial.polyadd(term1, x0 * d)

    lhs = coeffs.copy()
    for b in lower:
        lhs = np.polynomial.polynomial.polyadd(theta(lhs), (b - 1) * lhs)
    lhs = theta(lhs)

    rhs = coeffs.copy()
    for a in upper:
        rhs = np.polynomial.polynomial.polyadd(theta(rhs), a * rhs)
    rhs = np.polynomial.polynomial.polyadd(
        np.polynomial.polynomial.polymulx(rhs), x0 * rhs)

    resid = np.polynomial.polynomial.polysub(lhs, rhs)
    return abs(np.polynomial.polynomial.polyval(0.0, resid))
