"""Integrand DSL, assignment syntax, and canonical bracket-series text.

This is the only module that consumes raw text. Recursive descent over a
hand-rolled token stream; every error carries the offending position.

Grammar (whitespace-insensitive, '#' comments to end of line):

    spec    := "int" "[" var ("," var)* "]" product
    product := item (("*" | "/") item)*
    item    := rational | name ["^" aff] | "exp" "(" smono ")"
             | "besselj" "(" aff "," mono ")" | "(" sumexpr ")" "^" aff
    sumexpr := ["-"] mono (("+" | "-") mono)*
    mono    := mfac (("*" | "/") mfac)*
    mfac    := rational | name ["^" srational] | "(" sumexpr ")" ["^" sint]
    aff     := ["-"] (rational | name | "(" affsum ")")
    affsum  := affterm (("+" | "-") affterm)*
    affterm := rational ["*" name] | name ["*" rational | "/" integer]

`a / b` is sugar for `a * b^-1`.  One nesting level of parenthesised sums
inside a mono is supported; deeper nesting is rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from typing import Optional

from .core import (AffineForm, BracketSeries, CoefficientTerm, GammaFactor,
                   INDEX, PARAMETER, ParamPower, QC, Symbol, VARIABLE,
                   _frac_text, _merge_gammas, _merge_params)


class MobParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos
        self.message = message


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubSum:
    """Parenthesised sum of plain monomials, e.g. (x+y); one nesting level."""

    monomials: tuple["Monomial", ...]

    def key(self) -> tuple:
        return tuple(sorted(m.key() for m in self.monomials))


@dataclass(frozen=True)
class Monomial:
    coeff: Fraction = Fraction(1)
    powers: tuple[tuple[Symbol, Fraction], ...] = ()
    subsums: tuple[tuple[SubSum, int], ...] = ()

    def key(self) -> tuple:
        return (self.coeff,
                tuple(sorted((s.name, c) for s, c in self.powers)),
                tuple(sorted((ss.key(), m) for ss, m in self.subsums)))

    def times(self, other: "Monomial") -> "Monomial":
        powers: dict[Symbol, Fraction] = {}
        for s, c in self.powers + other.powers:
            powers[s] = powers.get(s, Fraction(0)) + c
        subs: dict[tuple, tuple[SubSum, int]] = {}
        for ss, m in self.subsums + other.subsums:
            k = ss.key()
            subs[k] = (ss, subs[k][1] + m) if k in subs else (ss, m)
        return Monomial(self.coeff * other.coeff,
                        tuple(sorted(((s, c) for s, c in powers.items() if c),
                                     key=lambda t: t[0].name)),
                        tuple(v for v in subs.values() if v[1]))

    def inverted(self) -> "Monomial":
        return Monomial(1 / self.coeff,
                        tuple((s, -c) for s, c in self.powers),
                        tuple((ss, -m) for ss, m in self.subsums))


@dataclass(frozen=True)
class PowerFactor:
    base: Symbol
    exponent: AffineForm


@dataclass(frozen=True)
class ExpFactor:
    sign: int
    argument: Monomial


@dataclass(frozen=True)
class MultinomialFactor:
    summands: tuple[Monomial, ...]
    exponent: AffineForm


@dataclass(frozen=True)
class KnownSeriesFactor:
    tag: str
    order: AffineForm
    argument: Monomial


Factor = object  # union of the four factor kinds


@dataclass(frozen=True)
class IntegrandSpec:
    integration_vars: tuple[Symbol, ...]
    parameters: tuple[Symbol, ...]
    factors: tuple[Factor, ...]
    overall_scale: Fraction = Fraction(1)
    regulator_requests: tuple[tuple[str, Symbol], ...] = ()


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<float>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[\[\]()^*/+\-,=<>])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str, allow_float: bool = False) -> list[Token]:
    out: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MobParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            if kind == "float" and not allow_float:
                raise MobParseError("decimal literals are only allowed in "
                                    "assignments", pos)
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("eof", "", len(text)))
    return out


class _Stream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            raise MobParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                                t.pos)
        return t

    def accept(self, text: str) -> bool:
        if self.peek().text == text:
            self.i += 1
            return True
        return False


# ---------------------------------------------------------------------------
# integrand DSL
# ---------------------------------------------------------------------------

class _SpecParser:
    def __init__(self, text: str):
        self.ts = _Stream(_tokenize(text))
        self.variables: dict[str, Symbol] = {}
        self.parameters: dict[str, Symbol] = {}

    def lookup(self, name: str, pos: int) -> Symbol:
        if name in ("exp", "besselj", "int"):
            raise MobParseError(f"reserved word {name!r} cannot be a symbol", pos)
        if name in self.variables:
            return self.variables[name]
        sym = self.parameters.get(name)
        if sym is None:
            sym = Symbol(name, PARAMETER)
            self.parameters[name] = sym
        return sym

    def parse(self) -> IntegrandSpec:
        ts = self.ts
        t = ts.next()
        if t.text != "int":
            raise MobParseError("spec must start with 'int'", t.pos)
        ts.expect("[")
        while True:
            t = ts.next()
            if t.kind != "name":
                raise MobParseError("expected integration variable name", t.pos)
            if t.text in self.variables:
                raise MobParseError(f"duplicate variable {t.text!r}", t.pos)
            self.variables[t.text] = Symbol(t.text, VARIABLE)
            if ts.accept("]"):
                break
            ts.expect(",")
        factors: list[Factor] = []
        scale = Fraction(1)
        invert = False
        while True:
            item, const = self.item()
            if const is not None:
                scale *= 1 / const if invert else const
            else:
                if invert:
                    item = _invert_factor(item, ts.peek().pos)
                factors.append(item)
            nxt = ts.peek()
            if nxt.text == "*":
                ts.next()
                invert = False
            elif nxt.text == "/":
                ts.next()
                invert = True
            elif nxt.kind == "eof":
                break
            else:
                raise MobParseError(f"expected '*', '/' or end of input, found "
                                    f"{nxt.text!r}", nxt.pos)
        for name in self.variables:
            if name in self.parameters:
                raise MobParseError(f"symbol {name!r} used both as variable and "
                                    f"parameter", 0)
        # symbols like alpha^0 drop out of monomials, so derive the parameter
        # list from what the factors actually reference
        used = _referenced_parameters(factors)
        params = tuple(sorted((s for s in self.parameters.values()
                               if s in used), key=lambda s: s.name))
        return IntegrandSpec(tuple(self.variables.values()), params,
                             tuple(factors), scale)

    def item(self) -> tuple[Optional[Factor], Optional[Fraction]]:
        ts = self.ts
        t = ts.peek()
        if t.kind == "int":
            ts.next()
            return None, Fraction(int(t.text))
        if t.kind == "name":
            if t.text == "exp":
                ts.next()
                ts.expect("(")
                mono = self.mono(signed=True, depth=0)
                ts.expect(")")
                if mono.coeff == 0:
                    raise MobParseError("exp argument must be nonzero", t.pos)
                sign = 1 if mono.coeff > 0 else -1
                return ExpFactor(sign, replace(mono, coeff=abs(mono.coeff))), None
            if t.text == "besselj":
                ts.next()
                ts.expect("(")
                order = self.aff()
                ts.expect(",")
                arg = self.mono(signed=False, depth=0)
                ts.expect(")")
                if arg.subsums:
                    raise MobParseError("besselj argument must be a plain monomial",
                                        t.pos)
                return KnownSeriesFactor("besselj", order, arg), None
            ts.next()
            sym = self.lookup(t.text, t.pos)
            exponent = self.aff() if ts.accept("^") else AffineForm.const(1)
            return PowerFactor(sym, exponent), None
        if t.text == "(":
            ts.next()
            summands = self.sumexpr(depth=0)
            ts.expect(")")
            ts.expect("^")
            exponent = self.aff()
            if (exponent.is_constant() and exponent.constant.denominator == 1
                    and exponent.constant >= 0):
                raise MobParseError("multinomial exponent must not be a "
                                    "nonnegative integer constant; expand it "
                                    "in the input instead", t.pos)
            if len(summands) == 0:
                raise MobParseError("empty multinomial", t.pos)
            return MultinomialFactor(tuple(summands), exponent), None
        raise MobParseError(f"expected a factor, found {t.text or 'end of input'!r}",
                            t.pos)

    def sumexpr(self, depth: int) -> list[Monomial]:
        ts = self.ts
        sign = Fraction(-1) if ts.accept("-") else Fraction(1)
        first = self.mono(signed=False, depth=depth)
        out = [replace(first, coeff=first.coeff * sign)]
        while True:
            if ts.accept("+"):
                sign = Fraction(1)
            elif ts.accept("-"):
                sign = Fraction(-1)
            else:
                return out
            m = self.mono(signed=False, depth=depth)
            out.append(replace(m, coeff=m.coeff * sign))

    def mono(self, signed: bool, depth: int) -> Monomial:
        ts = self.ts
        acc = Monomial()
        if signed and ts.accept("-"):
            acc = replace(acc, coeff=Fraction(-1))
        invert = False
        while True:
            t = ts.peek()
            if t.kind == "int":
                ts.next()
                piece = Monomial(coeff=Fraction(int(t.text)))
            elif t.kind == "name":
                ts.next()
                sym = self.lookup(t.text, t.pos)
                expo = Fraction(1)
                if ts.accept("^"):
                    expo = self.srational()
                piece = Monomial(powers=((sym, expo),))
            elif t.text == "(":
                if depth >= 1:
                    raise MobParseError("sums nested deeper than one level are "
                                        "not supported", t.pos)
                ts.next()
                inner = self.sumexpr(depth=depth + 1)
                ts.expect(")")
                for m in inner:
                    if m.subsums:
                        raise MobParseError("sums nested deeper than one level "
                                            "are not supported", t.pos)
                mult = 1
                if ts.accept("^"):
                    mult = self.sint()
                piece = Monomial(subsums=((SubSum(tuple(inner)), mult),))
            else:
                raise MobParseError(f"expected a monomial factor, found "
                                    f"{t.text or 'end of input'!r}", t.pos)
            acc = acc.times(piece.inverted() if invert else piece)
            if ts.accept("*"):
                invert = False
            elif ts.accept("/"):
                invert = True
            else:
                return acc

    def srational(self) -> Fraction:
        ts = self.ts
        neg = ts.accept("-")
        t = ts.next()
        if t.kind != "int":
            raise MobParseError("expected a rational exponent", t.pos)
        val = Fraction(int(t.text))
        if ts.peek().text == "/" and ts.tokens[ts.i + 1].kind == "int":
            ts.next()
            val /= int(ts.next().text)
        return -val if neg else val

    def sint(self) -> int:
        ts = self.ts
        neg = ts.accept("-")
        t = ts.next()
        if t.kind != "int":
            raise MobParseError("expected an integer exponent", t.pos)
        return -int(t.text) if neg else int(t.text)

    def aff(self) -> AffineForm:
        ts = self.ts
        neg = ts.accept("-")
        t = ts.peek()
        if t.text == "(":
            ts.next()
            form = self.affsum()
            ts.expect(")")
        elif t.kind == "int":
            form = AffineForm.const(self.srational())
        elif t.kind == "name":
            ts.next()
            sym = self.lookup(t.text, t.pos)
            self._check_param(sym, t.pos)
            form = AffineForm.sym(sym)
        else:
            raise MobParseError(f"expected an exponent, found "
                                f"{t.text or 'end of input'!r}", t.pos)
        return form.scaled(-1) if neg else form

    def affsum(self) -> AffineForm:
        ts = self.ts
        form = AffineForm()
        sign = Fraction(-1) if ts.accept("-") else Fraction(1)
        while True:
            form = form + self.affterm().scaled(sign)
            if ts.accept("+"):
                sign = Fraction(1)
            elif ts.accept("-"):
                sign = Fraction(-1)
            else:
                return form

    def affterm(self) -> AffineForm:
        ts = self.ts
        t = ts.next()
        if t.kind == "int":
            coeff = Fraction(int(t.text))
            if ts.peek().text == "/" and ts.tokens[ts.i + 1].kind == "int":
                ts.next()
                coeff /= int(ts.next().text)
            if ts.accept("*"):
                t2 = ts.next()
                if t2.kind != "name":
                    raise MobParseError("expected a symbol after '*'", t2.pos)
                sym = self.lookup(t2.text, t2.pos)
                self._check_param(sym, t2.pos)
                return AffineForm.sym(sym, coeff)
            return AffineForm.const(coeff)
        if t.kind == "name":
            sym = self.lookup(t.text, t.pos)
            self._check_param(sym, t.pos)
            coeff = Fraction(1)
            if ts.peek().text == "*" and ts.tokens[ts.i + 1].kind == "int":
                ts.next()
                coeff = Fraction(int(ts.next().text))
            elif ts.peek().text == "/" and ts.tokens[ts.i + 1].kind == "int":
                ts.next()
                coeff = Fraction(1, int(ts.next().text))
            return AffineForm.sym(sym, coeff)
        raise MobParseError(f"expected an affine term, found "
                            f"{t.text or 'end of input'!r}", t.pos)

    def _check_param(self, sym: Symbol, pos: int) -> None:
        if sym.kind == VARIABLE:
            raise MobParseError(f"exponent must be affine in parameters only, "
                                f"but {sym.name!r} is an integration variable", pos)


def _referenced_parameters(factors) -> set[Symbol]:
    out: set[Symbol] = set()

    def from_affine(a: AffineForm) -> None:
        out.update(s for s in a.symbols() if s.kind == PARAMETER)

    def from_mono(m: Monomial) -> None:
        out.update(s for s, _ in m.powers if s.kind == PARAMETER)
        for ss, _ in m.subsums:
            for inner in ss.monomials:
                from_mono(inner)

    for f in factors:
        if isinstance(f, PowerFactor):
            if f.base.kind == PARAMETER:
                out.add(f.base)
            from_affine(f.exponent)
        elif isinstance(f, ExpFactor):
            from_mono(f.argument)
        elif isinstance(f, KnownSeriesFactor):
            from_affine(f.order)
            from_mono(f.argument)
        elif isinstance(f, MultinomialFactor):
            from_affine(f.exponent)
            for m in f.summands:
                from_mono(m)
    return out


def _invert_factor(factor: Factor, pos: int) -> Factor:
    if isinstance(factor, PowerFactor):
        return replace(factor, exponent=factor.exponent.scaled(-1))
    if isinstance(factor, ExpFactor):
        return replace(factor, sign=-factor.sign)
    if isinstance(factor, MultinomialFactor):
        return replace(factor, exponent=factor.exponent.scaled(-1))
    raise MobParseError("cannot divide by this factor; use an explicit "
                        "negative exponent", pos)


def parse_spec(text: str) -> IntegrandSpec:
    """Parse the integrand DSL into an IntegrandSpec (deterministic)."""
    return _SpecParser(text).parse()


# ---------------------------------------------------------------------------
# printer (parse . print == identity on the corpus)
# ---------------------------------------------------------------------------

def print_spec(spec: IntegrandSpec) -> str:
    parts = []
    if spec.overall_scale != 1:
        parts.append(_frac_text(spec.overall_scale))
    for f in spec.factors:
        parts.append(_factor_text(f))
    head = "int[" + ",".join(v.name for v in spec.integration_vars) + "] "
    return head + " * ".join(parts)


def _aff_outer_text(form: AffineForm) -> str:
    if form.is_constant() and form.constant.denominator == 1:
        return _frac_text(form.constant)
    if len(form.terms) == 1 and form.constant == 0 and form.terms[0][1] == 1:
        return form.terms[0][0].name
    return "(" + form.text() + ")"


def _mono_text(m: Monomial) -> str:
    parts: list[str] = []
    if m.coeff != 1 or (not m.powers and not m.subsums):
        parts.append(_frac_text(m.coeff))
    for s, c in m.powers:
        parts.append(s.name if c == 1 else f"{s.name}^{_signed_frac_text(c)}")
    for ss, mult in m.subsums:
        inner = "+".join(_mono_text(x) for x in ss.monomials).replace("+-", "-")
        parts.append(f"({inner})" if mult == 1 else f"({inner})^{mult}")
    return "*".join(parts)


def _signed_frac_text(c: Fraction) -> str:
    return _frac_text(c)


def _factor_text(f: Factor) -> str:
    if isinstance(f, PowerFactor):
        if f.exponent == AffineForm.const(1):
            return f.base.name
        return f"{f.base.name}^{_aff_outer_text(f.exponent)}"
    if isinstance(f, ExpFactor):
        arg = _mono_text(f.argument)
        return f"exp(-{arg})" if f.sign < 0 else f"exp({arg})"
    if isinstance(f, KnownSeriesFactor):
        return f"{f.tag}({_aff_outer_text(f.order)}, {_mono_text(f.argument)})"
    if isinstance(f, MultinomialFactor):
        inner = "+".join(_mono_text(m) for m in f.summands).replace("+-", "-")
        return f"({inner})^{_aff_outer_text(f.exponent)}"
    raise TypeError(f"unknown factor {f!r}")


# ---------------------------------------------------------------------------
# assignments
# ---------------------------------------------------------------------------

def parse_assignments(text: str,
                      known: Optional[set[str]] = None) -> dict[Symbol, QC]:
    """Parse 'name=value,...' where value is decimal, p/q, or (re,im).

    Values are exact complex rationals.  Unknown names are rejected when a
    set of known parameter names is supplied.
    """
    out: dict[Symbol, QC] = {}
    if not text.strip():
        return out
    ts = _Stream(_tokenize(text, allow_float=True))
    while True:
        t = ts.next()
        if t.kind != "name":
            raise MobParseError("expected a parameter name", t.pos)
        if known is not None and t.text not in known:
            raise MobParseError(f"unknown parameter {t.text!r}", t.pos)
        name = t.text
        ts.expect("=")
        value = _parse_value(ts)
        out[Symbol(name, PARAMETER)] = value
        if ts.peek().kind == "eof":
            return out
        ts.expect(",")


def _parse_value(ts: _Stream) -> QC:
    if ts.accept("("):
        re_part = _parse_real(ts)
        ts.expect(",")
        im_part = _parse_real(ts)
        ts.expect(")")
        return QC(re_part, im_part)
    return QC(_parse_real(ts))


def _parse_real(ts: _Stream) -> Fraction:
    neg = ts.accept("-")
    t = ts.next()
    if t.kind == "float":
        val = Fraction(Decimal(t.text))
    elif t.kind == "int":
        val = Fraction(int(t.text))
        if ts.peek().text == "/":
            ts.next()
            d = ts.next()
            if d.kind != "int":
                raise MobParseError("expected denominator", d.pos)
            val /= int(d.text)
    else:
        raise MobParseError(f"unparseable value {t.text!r}", t.pos)
    return -val if neg else val


# ---------------------------------------------------------------------------
# canonical bracket-series text
# ---------------------------------------------------------------------------

def parse_series_text(text: str) -> BracketSeries:
    """Parse the canonical text form produced by core.format_series."""
    ts = _Stream(_tokenize(text))
    scale = Fraction(1)
    t = ts.peek()
    if t.kind == "int":
        ts.next()
        scale = Fraction(int(t.text))
        if ts.peek().text == "/":
            ts.next()
            scale /= int(ts.next().text)
        ts.expect("*")
    tok = ts.next()
    if tok.text != "sum":
        raise MobParseError("expected 'sum'", tok.pos)
    ts.expect("[")
    indices: list[Symbol] = []
    while True:
        t = ts.next()
        if t.kind != "name":
            raise MobParseError("expected index name", t.pos)
        indices.append(Symbol(t.text, INDEX))
        if ts.accept("]"):
            break
        ts.expect(",")
    idx_map = {s.name: s for s in indices}

    def lookup(name: str) -> Symbol:
        return idx_map.get(name, Symbol(name, PARAMETER))

    tok = ts.next()
    if tok.text != "phi":
        raise MobParseError("expected 'phi'", tok.pos)
    ts.expect("(")
    phi: list[Symbol] = []
    while True:
        t = ts.next()
        if t.kind != "name":
            raise MobParseError("expected index name", t.pos)
        phi.append(lookup(t.text))
        if ts.accept(")"):
            break
        ts.expect(",")

    sign = AffineForm.build({s: 1 for s in phi})
    params: list[ParamPower] = []
    gammas: list[GammaFactor] = []
    brackets: list[AffineForm] = []

    def parse_affine() -> AffineForm:
        form = AffineForm()
        sgn = Fraction(-1) if ts.accept("-") else Fraction(1)
        while True:
            t = ts.next()
            if t.kind == "int":
                coeff = Fraction(int(t.text))
                if ts.peek().text == "/" and ts.tokens[ts.i + 1].kind == "int":
                    ts.next()
                    coeff /= int(ts.next().text)
                if ts.accept("*"):
                    t2 = ts.next()
                    form = form + AffineForm.sym(lookup(t2.text), coeff * sgn)
                else:
                    form = form + AffineForm.const(coeff * sgn)
            elif t.kind == "name":
                form = form + AffineForm.sym(lookup(t.text), sgn)
            else:
                raise MobParseError("expected affine term", t.pos)
            if ts.accept("+"):
                sgn = Fraction(1)
            elif ts.accept("-"):
                sgn = Fraction(-1)
            else:
                return form

    while ts.peek().kind != "eof":
        if ts.accept("*"):
            inverted = False
        elif ts.accept("/"):
            inverted = True
        else:
            raise MobParseError("expected '*' or '/'", ts.peek().pos)
        t = ts.next()
        if t.text == "<":
            arg = parse_affine()
            ts.expect(">")
            if inverted:
                raise MobParseError("cannot divide by a bracket", t.pos)
            brackets.append(arg)
        elif t.text == "Gamma":
            ts.expect("(")
            arg = parse_affine()
            ts.expect(")")
            power = 1
            if ts.accept("^"):
                power = int(ts.next().text)
            gammas.append(GammaFactor(arg, -power if inverted else power))
        elif t.text == "(" and ts.peek().text == "-1":
            raise MobParseError("unreachable", t.pos)
        elif t.text == "(":
            # either (-1)^(...) or a grouped base like (beta/2)
            if ts.peek().kind == "int" and ts.peek().text == "1" and \
               ts.tokens[ts.i - 1].text == "(":
                pass
            nxt = ts.peek()
            if nxt.text == "-":
                ts.next()
                one = ts.next()
                if one.text != "1":
                    raise MobParseError("expected (-1)", one.pos)
                ts.expect(")")
                ts.expect("^")
                ts.expect("(")
                e = parse_affine()
                ts.expect(")")
                if inverted:
                    e = e.scaled(-1)
                sign = sign + e
                continue
            num = Fraction(1)
            bases: list[Symbol] = []
            while True:
                t2 = ts.next()
                if t2.kind == "int":
                    num *= int(t2.text)
                elif t2.kind == "name":
                    bases.append(lookup(t2.text))
                else:
                    raise MobParseError("expected base factor", t2.pos)
                if ts.accept("*"):
                    continue
                if ts.accept("/"):
                    d = ts.next()
                    num /= int(d.text)
                    ts.expect(")")
                    break
                ts.expect(")")
                break
            ts.expect("^")
            ts.expect("(")
            e = parse_affine()
            ts.expect(")")
            if inverted:
                e = e.scaled(-1)
            if num != 1:
                params.append(ParamPower(num, e))
            for b in bases:
                params.append(ParamPower(b, e))
        elif t.kind == "name" or t.kind == "int":
            if t.kind == "int":
                base: object = Fraction(int(t.text))
                if ts.peek().text == "/" and ts.tokens[ts.i + 1].kind == "int":
                    ts.next()
                    base /= int(ts.next().text)
            else:
                base = lookup(t.text)
            e = AffineForm.const(1)
            if ts.accept("^"):
                ts.expect("(")
                e = parse_affine()
                ts.expect(")")
            if inverted:
                e = e.scaled(-1)
            params.append(ParamPower(base, e))
        else:
            raise MobParseError(f"unexpected token {t.text!r}", t.pos)

    coeff = CoefficientTerm(
        scale=Fraction(1),
        params=_merge_params(params),
        gammas=_merge_gammas(gammas),
        sign_exponent=sign,
        factorial_indices=tuple(sorted(phi)),
    )
    return BracketSeries(tuple(indices), coeff, tuple(brackets),
                         overall_scale=scale)
