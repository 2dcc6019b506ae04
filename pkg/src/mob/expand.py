"""Turn an IntegrandSpec into a single BracketSeries.

Expansion order: known power series first (exp, besselj), then explicit
multinomials, then deferred sub-sums accumulated along the way, then one
bracket per integration variable.  Index names n1, n2, ... follow creation
order so traces can be compared line by line with hand expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import (AffineForm, BracketSeries, CoefficientTerm, GammaFactor,
                   INDEX, ParamPower, Symbol, VARIABLE, BracketError)
from .parser import (ExpFactor, IntegrandSpec, KnownSeriesFactor, Monomial,
                     MultinomialFactor, PowerFactor, SubSum)


class ExpansionError(ValueError):
    pass


class StructuralDivergence(ExpansionError):
    """An integration variable never occurs: its bracket would be <1>."""


@dataclass(frozen=True)
class TraceStep:
    rule: str
    origin: str
    created_indices: tuple[str, ...]
    detail: str


@dataclass(frozen=True)
class ExpansionTrace:
    steps: tuple[TraceStep, ...]

    def to_json(self) -> list[dict]:
        return [{"rule": s.rule, "origin": s.origin,
                 "indices": list(s.created_indices), "detail": s.detail}
                for s in self.steps]


@dataclass
class _Workspace:
    indices: list[Symbol] = field(default_factory=list)
    index_origins: list[str] = field(default_factory=list)
    coeff: CoefficientTerm = field(default_factory=CoefficientTerm.one)
    brackets: list[AffineForm] = field(default_factory=list)
    bracket_origins: list[str] = field(default_factory=list)
    var_exponents: dict[Symbol, AffineForm] = field(default_factory=dict)
    # accumulated sub-sum exponents, keyed by canonical content
    subsums: dict[tuple, tuple[SubSum, AffineForm]] = field(default_factory=dict)
    subsum_order: list[tuple] = field(default_factory=list)
    steps: list[TraceStep] = field(default_factory=list)

    def new_index(self, origin: str) -> Symbol:
        sym = Symbol(f"n{len(self.indices) + 1}", INDEX)
        self.indices.append(sym)
        self.index_origins.append(origin)
        self.coeff = self.coeff.times(CoefficientTerm(
            sign_exponent=AffineForm.sym(sym), factorial_indices=(sym,)))
        return sym

    def add_subsum_exponent(self, ss: SubSum, expo: AffineForm) -> None:
        k = ss.key()
        if k in self.subsums:
            self.subsums[k] = (ss, self.subsums[k][1] + expo)
        else:
            self.subsums[k] = (ss, expo)
            self.subsum_order.append(k)

    def apply_monomial_power(self, mono: Monomial, expo: AffineForm) -> None:
        """Multiply the integrand by mono**expo (exactly)."""
        c = mono.coeff
        if c < 0:
            self.coeff = self.coeff.times(
                CoefficientTerm(sign_exponent=expo))
            c = -c
        if c != 1:
            self.coeff = self.coeff.with_param(c, expo)
        for s, p in mono.powers:
            contrib = expo.scaled(p)
            if s.kind == VARIABLE:
                self.var_exponents[s] = self.var_exponents.get(
                    s, AffineForm()) + contrib
            else:
                self.coeff = self.coeff.with_param(s, contrib)
        for ss, mult in mono.subsums:
            self.add_subsum_exponent(ss, expo.scaled(mult))


def expand_known_series(ws: _Workspace, factor, origin: str) -> None:
    """exp(+-u) and besselj(nu, u) power-series expansions."""
    if isinstance(factor, ExpFactor):
        n = ws.new_index(origin)
        if factor.sign > 0:
            # exp(+u) = sum phi_n (-u)^n: the (-1)^n stays in the sign
            # exponent so the monomial's parameters keep positive bases
            ws.coeff = ws.coeff.times(
                CoefficientTerm(sign_exponent=AffineForm.sym(n)))
        ws.apply_monomial_power(factor.argument, AffineForm.sym(n))
        ws.steps.append(TraceStep("exp", origin, (n.name,),
                                  f"exp series index {n.name}"))
        return
    if isinstance(factor, KnownSeriesFactor) and factor.tag == "besselj":
        k = ws.new_index(origin)
        expo = AffineForm.sym(k, 2) + factor.order
        ws.coeff = ws.coeff.with_param(Fraction(1, 2), expo)
        ws.apply_monomial_power(factor.argument, expo)
        ws.coeff = ws.coeff.with_gamma(AffineForm.sym(k) + factor.order.shifted(1),
                                       -1)
        ws.steps.append(TraceStep("besselj", origin, (k.name,),
                                  f"Bessel J series index {k.name}"))
        return
    raise ExpansionError(f"unknown series factor {factor!r}")


def expand_rule1(ws: _Workspace, summands: tuple[Monomial, ...],
                 exponent: AffineForm, origin: str) -> None:
    """Multinomial bracket expansion of (a_1+...+a_r)**exponent.

    With alpha = -exponent: one new index per summand, one new bracket
    <alpha + sum(m_i)>, coefficient divided by Gamma(alpha).
    """
    if not summands:
        raise ExpansionError("rule 1 applied to an empty multinomial")
    alpha = exponent.scaled(-1)
    created = []
    total = alpha
    for j, mono in enumerate(summands):
        m = ws.new_index(f"{origin}:s{j}")
        created.append(m.name)
        ws.apply_monomial_power(mono, AffineForm.sym(m))
        total = total + AffineForm.sym(m)
    ws.coeff = ws.coeff.with_gamma(alpha, -1)
    ws.brackets.append(total)
    ws.bracket_origins.append(origin)
    ws.steps.append(TraceStep("rule1", origin, tuple(created),
                              f"bracket <{total}>, coefficient /Gamma({alpha})"))


def expand_deferred(ws: _Workspace) -> None:
    """Expand accumulated sub-sums like (x+y)**(n1+n2) at the last step."""
    while ws.subsum_order:
        key = ws.subsum_order.pop(0)
        ss, expo = ws.subsums.pop(key)
        if expo.is_zero():
            ws.steps.append(TraceStep("deferred", "subsum", (),
                                      "zero exponent: factor is 1, skipped"))
            continue
        expand_rule1(ws, ss.monomials, expo, origin="deferred")


def integrate_monomials(ws: _Workspace, spec: IntegrandSpec) -> None:
    """One bracket per integration variable: int x^(a-1) dx -> <a>."""
    for v in spec.integration_vars:
        expo = ws.var_exponents.get(v, AffineForm())
        if expo.is_zero():
            raise StructuralDivergence(
                f"variable {v.name} does not occur in the expanded integrand; "
                f"its bracket would be the constant-divergent <1>")
        arg = expo.shifted(1)
        ws.brackets.append(arg)
        ws.bracket_origins.append(f"var:{v.name}")
        ws.steps.append(TraceStep("integrate", f"var:{v.name}", (),
                                  f"bracket <{arg}>"))


def expand_spec(spec: IntegrandSpec) -> tuple[BracketSeries, ExpansionTrace]:
    ws = _Workspace()
    # power factors carry no indices; apply them first
    for i, f in enumerate(spec.factors):
        if isinstance(f, PowerFactor):
            mono = Monomial(powers=((f.base, Fraction(1)),))
            ws.apply_monomial_power(mono, f.exponent)
    for i, f in enumerate(spec.factors):
        if isinstance(f, (ExpFactor, KnownSeriesFactor)):
            expand_known_series(ws, f, origin=f"f{i}")
    for i, f in enumerate(spec.factors):
        if isinstance(f, MultinomialFactor):
            expo = f.exponent
            key = SubSum(f.summands).key()
            if key in ws.subsums:
                # merge with exponent accumulated from exp-argument divisors
                expo = expo + ws.subsums.pop(key)[1]
                ws.subsum_order.remove(key)
            expand_rule1(ws, f.summands, expo, origin=f"f{i}")
    expand_deferred(ws)
    integrate_monomials(ws, spec)
    series = BracketSeries(
        indices=tuple(ws.indices),
        coefficient=ws.coeff,
        brackets=tuple(ws.brackets),
        overall_scale=spec.overall_scale,
        bracket_origins=tuple(ws.bracket_origins),
        index_origins=tuple(ws.index_origins),
    )
    return series, ExpansionTrace(tuple(ws.steps))


def replay_trace(spec: IntegrandSpec, trace: ExpansionTrace) -> BracketSeries:
    """Re-run the deterministic expansion, checking it matches the trace."""
    series, fresh = expand_spec(spec)
    if fresh != trace:
        raise ExpansionError("trace does not replay: expansion diverged from "
                             "the recorded steps")
    return series
