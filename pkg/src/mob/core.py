"""Exact symbolic substrate: affine forms, gamma products, bracket series.

Everything here is immutable and exact (rational coefficients throughout).
No floating point enters until the numerics module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

Rational = Fraction

INDEX = "index"
PARAMETER = "parameter"
REGULATOR = "regulator"
VARIABLE = "variable"


class BracketError(ValueError):
    """Structural error while building or manipulating bracket series."""


@dataclass(frozen=True, order=True)
class Symbol:
    name: str
    kind: str = PARAMETER

    def __repr__(self) -> str:
        return f"{self.name}:{self.kind[0]}"


def _as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    raise TypeError(f"expected exact rational, got {type(x).__name__}")


@dataclass(frozen=True)
class QC:
    """Exact complex rational, used for assignments and pole detection."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __add__(self, other: "QC") -> "QC":
        return QC(self.re + other.re, self.im + other.im)

    def __mul__(self, other: "QC") -> "QC":
        return QC(self.re * other.re - self.im * other.im,
                  self.re * other.im + self.im * other.re)

    def scale(self, c: Fraction) -> "QC":
        return QC(self.re * c, self.im * c)

    def is_real(self) -> bool:
        return self.im == 0

    def is_nonpositive_integer(self) -> bool:
        return self.im == 0 and self.re.denominator == 1 and self.re <= 0

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    @staticmethod
    def of(x) -> "QC":
        if isinstance(x, QC):
            return x
        if isinstance(x, complex):
            raise TypeError("use exact rationals, not float complex")
        return QC(_as_rational(x))


@dataclass(frozen=True)
class AffineForm:
    """Exact linear expression: sum of coeff*symbol plus a rational constant."""

    terms: tuple[tuple[Symbol, Fraction], ...] = ()
    constant: Fraction = Fraction(0)

    @staticmethod
    def build(terms: Mapping[Symbol, Fraction] | Iterable[tuple[Symbol, Fraction]],
              constant=0) -> "AffineForm":
        acc: dict[Symbol, Fraction] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for sym, c in items:
            c = _as_rational(c)
            if c == 0:
                continue
            acc[sym] = acc.get(sym, Fraction(0)) + c
        clean = tuple(sorted(((s, c) for s, c in acc.items() if c != 0),
                             key=lambda t: (t[0].kind != INDEX, t[0].name)))
        return AffineForm(clean, _as_rational(constant))

    @staticmethod
    def const(c) -> "AffineForm":
        return AffineForm((), _as_rational(c))

    @staticmethod
    def sym(s: Symbol, coeff=1) -> "AffineForm":
        return AffineForm.build({s: _as_rational(coeff)})

    def __add__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm.build(list(self.terms) + list(other.terms),
                                self.constant + other.constant)

    def __sub__(self, other: "AffineForm") -> "AffineForm":
        return self + other.scaled(Fraction(-1))

    def scaled(self, c) -> "AffineForm":
        c = _as_rational(c)
        if c == 0:
            return AffineForm()
        return AffineForm(tuple((s, k * c) for s, k in self.terms), self.constant * c)

    def shifted(self, c) -> "AffineForm":
        return AffineForm(self.terms, self.constant + _as_rational(c))

    def coefficient(self, s: Symbol) -> Fraction:
        for sym, c in self.terms:
            if sym == s:
                return c
        return Fraction(0)

    def drop(self, s: Symbol) -> "AffineForm":
        return AffineForm(tuple(t for t in self.terms if t[0] != s), self.constant)

    def symbols(self) -> tuple[Symbol, ...]:
        return tuple(s for s, _ in self.terms)

    def is_zero(self) -> bool:
        return not self.terms and self.constant == 0

    def is_constant(self) -> bool:
        return not self.terms

    def substitute(self, assignment: Mapping[Symbol, "AffineForm"]) -> "AffineForm":
        out = AffineForm.const(self.constant)
        for s, c in self.terms:
            if s in assignment:
                out = out + assignment[s].scaled(c)
            else:
                out = out + AffineForm.sym(s, c)
        return out

    def eval_exact(self, env: Mapping[Symbol, QC]) -> QC:
        acc = QC(self.constant)
        for s, c in self.terms:
            if s not in env:
                raise KeyError(f"unassigned symbol {s.name}")
            acc = acc + env[s].scale(c)
        return acc

    def text(self, index_order: tuple[Symbol, ...] = ()) -> str:
        """Render as e.g. 'n1+2*n2+2*nu+1' (indices first, then params)."""
        rank = {s: i for i, s in enumerate(index_order)}
        ordered = sorted(self.terms,
                         key=lambda t: (0, rank[t[0]], "") if t[0] in rank
                         else (1, 0, t[0].name))
        parts: list[str] = []
        for s, c in ordered:
            if c == 1:
                piece = s.name
            elif c == -1:
                piece = f"-{s.name}"
            else:
                piece = f"{_frac_text(c)}*{s.name}"
            if parts and not piece.startswith("-"):
                parts.append("+" + piece)
            else:
                parts.append(piece)
        if self.constant != 0 or not parts:
            c = self.constant
            piece = _frac_text(c)
            if parts and c > 0:
                parts.append("+" + piece)
            else:
                parts.append(piece)
        return "".join(parts)

    def __str__(self) -> str:
        return self.text()


def _frac_text(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def affine_substitute(form: AffineForm,
                      assignment: Mapping[Symbol, AffineForm]) -> AffineForm:
    """Apply an index assignment to an affine form; non-indices pass through."""
    for s in assignment:
        if s.kind != INDEX:
            raise BracketError(f"cannot substitute non-index symbol {s.name}")
    return form.substitute(assignment)


@dataclass(frozen=True)
class GammaFactor:
    argument: AffineForm
    power: int = 1

    def __post_init__(self):
        if self.power == 0:
            raise BracketError("gamma factor with zero power")


PowerBase = Union[Symbol, Fraction]


@dataclass(frozen=True)
class ParamPower:
    """base**exponent with base a parameter symbol or an exact rational."""

    base: PowerBase
    exponent: AffineForm


def _base_key(b: PowerBase) -> tuple:
    if isinstance(b, Symbol):
        return (1, b.name, 0, 0)
    return (0, "", b.numerator, b.denominator)


@dataclass(frozen=True)
class CoefficientTerm:
    """Coefficient structure of one bracket-series term.

    scale * (-1)**sign_exponent * prod(params) * prod(gammas)
          * prod(1/Gamma(n+1) for n in factorial_indices)
    """

    scale: Fraction = Fraction(1)
    params: tuple[ParamPower, ...] = ()
    gammas: tuple[GammaFactor, ...] = ()
    sign_exponent: AffineForm = AffineForm()
    factorial_indices: tuple[Symbol, ...] = ()

    @staticmethod
    def one() -> "CoefficientTerm":
        return CoefficientTerm()

    def times(self, other: "CoefficientTerm") -> "CoefficientTerm":
        return CoefficientTerm(
            scale=self.scale * other.scale,
            params=_merge_params(self.params + other.params),
            gammas=_merge_gammas(self.gammas + other.gammas),
            sign_exponent=self.sign_exponent + other.sign_exponent,
            factorial_indices=tuple(sorted(self.factorial_indices
                                           + other.factorial_indices)),
        )

    def with_param(self, base: PowerBase, exponent: AffineForm) -> "CoefficientTerm":
        return self.times(CoefficientTerm(params=(ParamPower(base, exponent),)))

    def with_gamma(self, argument: AffineForm, power: int) -> "CoefficientTerm":
        return self.times(CoefficientTerm(gammas=(GammaFactor(argument, power),)))

    def symbols(self) -> set[Symbol]:
        out: set[Symbol] = set(self.factorial_indices)
        out.update(self.sign_exponent.symbols())
        for p in self.params:
            if isinstance(p.base, Symbol):
                out.add(p.base)
            out.update(p.exponent.symbols())
        for g in self.gammas:
            out.update(g.argument.symbols())
        return out


def _merge_params(ps: Iterable[ParamPower]) -> tuple[ParamPower, ...]:
    acc: dict[tuple, tuple[PowerBase, AffineForm]] = {}
    for p in ps:
        if isinstance(p.base, Fraction) and p.base == 1:
            continue
        k = _base_key(p.base)
        if k in acc:
            acc[k] = (p.base, acc[k][1] + p.exponent)
        else:
            acc[k] = (p.base, p.exponent)
    out = [ParamPower(b, e) for b, e in acc.values() if not e.is_zero()]
    return tuple(sorted(out, key=lambda p: _base_key(p.base)))


def _gamma_key(g: GammaFactor) -> tuple:
    return (tuple((s.name, s.kind, c) for s, c in g.argument.terms), g.argument.constant)


def _merge_gammas(gs: Iterable[GammaFactor]) -> tuple[GammaFactor, ...]:
    acc: dict[tuple, tuple[AffineForm, int]] = {}
    for g in gs:
        k = _gamma_key(g)
        if k in acc:
            acc[k] = (g.argument, acc[k][1] + g.power)
        else:
            acc[k] = (g.argument, g.power)
    out = [GammaFactor(a, p) for a, p in acc.values() if p != 0]
    return tuple(sorted(out, key=_gamma_key))


@dataclass(frozen=True)
class BracketSeries:
    """Formal multi-index sum of coefficient terms times brackets.

    Origins are bookkeeping only (regulator targeting and reports); they do
    not participate in value semantics.
    """

    indices: tuple[Symbol, ...]
    coefficient: CoefficientTerm
    brackets: tuple[AffineForm, ...]
    overall_scale: Fraction = Fraction(1)
    bracket_origins: tuple[str, ...] = ()
    index_origins: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.brackets) > len(self.indices):
            raise BracketError(
                f"over-determined series: {len(self.brackets)} brackets for "
                f"{len(self.indices)} indices")
        used: set[Symbol] = set()
        for b in self.brackets:
            used.update(b.symbols())
        used.update(self.coefficient.symbols())
        for idx in self.indices:
            if idx.kind != INDEX:
                raise BracketError(f"summation symbol {idx.name} must have index kind")
            if idx not in used:
                raise BracketError(f"index {idx.name} appears nowhere in the series")
        if set(self.coefficient.factorial_indices) != set(self.indices):
            raise BracketError("every summation index must carry its indicator phi")

    @property
    def dimension(self) -> int:
        return len(self.indices) - len(self.brackets)

    def parameters(self) -> tuple[Symbol, ...]:
        syms: set[Symbol] = set()
        for b in self.brackets:
            syms.update(b.symbols())
        syms.update(self.coefficient.symbols())
        out = [s for s in syms if s.kind in (PARAMETER, REGULATOR)]
        return tuple(sorted(out, key=lambda s: s.name))

    def canonical_text(self) -> str:
        return format_series(self)


def canonicalize(series: BracketSeries) -> BracketSeries:
    """Rename indices to n1, n2, ... in first-appearance order; sort factors.

    Idempotent and value-preserving; origins are carried along.
    """
    mapping = {old: Symbol(f"n{i + 1}", INDEX)
               for i, old in enumerate(series.indices)}
    sub = {old: AffineForm.sym(new) for old, new in mapping.items()}
    coeff = CoefficientTerm(
        scale=series.coefficient.scale,
        params=_merge_params(ParamPower(p.base, p.exponent.substitute(sub))
                             for p in series.coefficient.params),
        gammas=_merge_gammas(GammaFactor(g.argument.substitute(sub), g.power)
                             for g in series.coefficient.gammas),
        sign_exponent=series.coefficient.sign_exponent.substitute(sub),
        factorial_indices=tuple(sorted(mapping[s]
                                       for s in series.coefficient.factorial_indices)),
    )
    return BracketSeries(
        indices=tuple(mapping[s] for s in series.indices),
        coefficient=coeff,
        brackets=tuple(b.substitute(sub) for b in series.brackets),
        overall_scale=series.overall_scale,
        bracket_origins=series.bracket_origins,
        index_origins=series.index_origins,
    )


# ---------------------------------------------------------------------------
# canonical text form
# ---------------------------------------------------------------------------

def format_series(series: BracketSeries) -> str:
    """Stable text form, e.g.
    sum[n1,n2] phi(n1,n2) * alpha^(n1) * (beta/2)^(2*n2+nu) / Gamma(n2+nu+1) * <n1+2*n2+2*nu+1>
    """
    idx = series.indices
    names = ",".join(s.name for s in idx)
    scale = series.overall_scale * series.coefficient.scale
    head = "" if scale == 1 else _frac_text(scale) + " * "
    out = [f"{head}sum[{names}] phi({names})"]

    coeff = series.coefficient
    explicit_sign = coeff.sign_exponent
    for s in idx:
        explicit_sign = explicit_sign + AffineForm.sym(s, -1)
    if not explicit_sign.is_zero():
        out.append(f" * (-1)^({explicit_sign.text(idx)})")

    for base, exponent, group in _grouped_params(coeff.params):
        out.append(f" * {_power_text(base, group, exponent, idx)}")

    for g in coeff.gammas:
        out.append(_gamma_text(g, idx))

    for b in series.brackets:
        out.append(f" * <{b.text(idx)}>")
    return "".join(out)


def format_term(coeff: CoefficientTerm, free: Optional[Symbol]) -> str:
    """Text form of a representation's per-term coefficient."""
    idx = (free,) if free is not None else ()
    names = ",".join(s.name for s in idx)
    parts = [f"phi({names})" if names else "1"]
    if coeff.scale != 1:
        parts[0] = _frac_text(coeff.scale) + " * " + parts[0]
    explicit_sign = coeff.sign_exponent
    for s in coeff.factorial_indices:
        explicit_sign = explicit_sign + AffineForm.sym(s, -1)
    if not explicit_sign.is_zero():
        parts.append(f" * (-1)^({explicit_sign.text(idx)})")
    for base, exponent, group in _grouped_params(coeff.params):
        parts.append(f" * {_power_text(base, group, exponent, idx)}")
    for g in coeff.gammas:
        parts.append(_gamma_text(g, idx))
    return "".join(parts)


def _gamma_text(g: GammaFactor, idx: tuple[Symbol, ...]) -> str:
    op = "*" if g.power > 0 else "/"
    p = abs(g.power)
    suffix = f"^{p}" if p > 1 else ""
    return f" {op} Gamma({g.argument.text(idx)}){suffix}"


def _grouped_params(params: tuple[ParamPower, ...]):
    """Group factors sharing an exponent so (1/2)^E * beta^E prints (beta/2)^(E)."""
    by_exp: dict[tuple, list[ParamPower]] = {}
    order: list[tuple] = []
    for p in params:
        k = (tuple((s.name, s.kind, c) for s, c in p.exponent.terms),
             p.exponent.constant)
        if k not in by_exp:
            by_exp[k] = []
            order.append(k)
        by_exp[k].append(p)
    out = []
    for k in order:
        group = by_exp[k]
        out.append((group[0].base, group[0].exponent, group))

    def group_rank(entry):
        _, _, group = entry
        names = sorted(p.base.name for p in group if isinstance(p.base, Symbol))
        return (0, names[0]) if names else (1, "")

    out.sort(key=group_rank)
    return out


def _power_text(base: PowerBase, group: list[ParamPower],
                exponent: AffineForm, idx: tuple[Symbol, ...]) -> str:
    num = Fraction(1)
    names: list[str] = []
    for p in group:
        if isinstance(p.base, Symbol):
            names.append(p.base.name)
        else:
            num *= p.base
    core = "*".join(names)
    if num != 1 or not names:
        if num.denominator == 1:
            core = f"{num.numerator}" + (f"*{core}" if core else "")
        else:
            core = (f"{num.numerator}*{core}" if num.numerator != 1 and core
                    else f"{num.numerator}" if not core else core)
            core = f"{core}/{num.denominator}"
    text = f"({core})" if (len(group) > 1 or num != 1) else core
    return f"{text}^({exponent.text(idx)})"
