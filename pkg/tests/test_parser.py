from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mob.parser import (ExpFactor, KnownSeriesFactor, MobParseError,
                        MultinomialFactor, PowerFactor, parse_assignments,
                        parse_spec, print_spec)


class TestParseSpec:
    def test_bessel(self):
        spec = parse_spec("int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)")
        assert [v.name for v in spec.integration_vars] == ["x"]
        assert [p.name for p in spec.parameters] == ["alpha", "beta", "nu"]
        assert len(spec.factors) == 3
        assert isinstance(spec.factors[0], PowerFactor)
        assert isinstance(spec.factors[1], ExpFactor)
        assert spec.factors[1].sign == -1
        assert isinstance(spec.factors[2], KnownSeriesFactor)

    def test_c2k_deferred_subsum(self):
        spec = parse_spec(
            "int[x,y] 2 * x^k * y^k * ( x*y*(x+y) + (x+y) )^-(k+1)")
        assert spec.overall_scale == 2
        multi = [f for f in spec.factors if isinstance(f, MultinomialFactor)]
        assert len(multi) == 1
        assert len(multi[0].summands) == 2
        assert all(m.subsums for m in multi[0].summands)

    def test_gamma_integrand(self):
        spec = parse_spec("int[x] x^(a-1) * exp(-x)")
        assert [p.name for p in spec.parameters] == ["a"]

    def test_malformed_power_reports_position(self):
        with pytest.raises(MobParseError) as exc:
            parse_spec("int[x] x^")
        assert exc.value.pos == 9

    def test_division_sugar(self):
        spec = parse_spec("int[x] x^a / exp(x)")
        assert isinstance(spec.factors[1], ExpFactor)
        assert spec.factors[1].sign == -1

    def test_exp_with_subsum_divisor(self):
        spec = parse_spec("int[x,y] exp(-x*y*s/(x+y)) * (x+y)^-2")
        exp = spec.factors[0]
        assert isinstance(exp, ExpFactor)
        assert exp.argument.subsums[0][1] == -1

    def test_rejects_nonnegative_integer_multinomial_exponent(self):
        with pytest.raises(MobParseError):
            parse_spec("int[x,y] (x+y)^2")

    def test_rejects_deep_nesting(self):
        with pytest.raises(MobParseError) as exc:
            parse_spec("int[x,y,z] ( x*(y*(x+z)+y) + z )^-1")
        assert "one level" in str(exc.value)

    def test_rejects_variable_in_exponent(self):
        with pytest.raises(MobParseError):
            parse_spec("int[x,y] x^(y+1)")

    def test_rejects_duplicate_variable(self):
        with pytest.raises(MobParseError):
            parse_spec("int[x,x] x^2")

    def test_rejects_float_literals(self):
        with pytest.raises(MobParseError):
            parse_spec("int[x] x^1.5")

    def test_comments_and_whitespace(self):
        spec = parse_spec("# heading\nint[x]  x^(a-1)\n  * exp(-x) # tail\n")
        assert len(spec.factors) == 2

    def test_determinism(self, corpus):
        for text in corpus.values():
            assert parse_spec(text) == parse_spec(text)


class TestPrintRoundTrip:
    def test_corpus_round_trip(self, corpus):
        for name, text in corpus.items():
            spec = parse_spec(text)
            assert parse_spec(print_spec(spec)) == spec, name


class TestParseAssignments:
    def test_basic(self):
        vals = parse_assignments("alpha=2,beta=1,nu=0")
        by_name = {s.name: v for s, v in vals.items()}
        assert by_name["alpha"].re == 2 and by_name["alpha"].im == 0
        assert by_name["nu"].re == 0

    def test_single(self):
        vals = parse_assignments("k=1")
        assert next(iter(vals.values())).re == 1

    def test_feynman_values_exact(self):
        vals = parse_assignments("s=3,m2=1,eps=0.1")
        by_name = {s.name: v for s, v in vals.items()}
        assert by_name["eps"].re == F(1, 10)  # decimal parsed exactly
        assert by_name["s"].re == 3

    def test_rational_and_complex(self):
        vals = parse_assignments("a=2/3,z=(1,-1/2)")
        by_name = {s.name: v for s, v in vals.items()}
        assert by_name["a"].re == F(2, 3)
        assert by_name["z"].re == 1 and by_name["z"].im == F(-1, 2)

    def test_unknown_parameter_rejected(self):
        with pytest.raises(MobParseError):
            parse_assignments("zz=1", known={"a", "b"})

    def test_unparseable_value(self):
        with pytest.raises(MobParseError):
            parse_assignments("a=oops")

    def test_empty(self):
        assert parse_assignments("") == {}


# grammar-driven fuzzing: parsing never crashes with non-MobParseError
names = st.sampled_from(["x", "y", "alpha", "nu", "k", "s"])
rationals = st.one_of(st.integers(0, 99).map(str),
                      st.tuples(st.integers(1, 99), st.integers(1, 9))
                      .map(lambda t: f"{t[0]}/{t[1]}"))


@st.composite
def monomials(draw, depth=0):
    parts = [draw(names)]
    for _ in range(draw(st.integers(0, 2))):
        part = draw(names)
        if draw(st.booleans()):
            part += "^" + draw(rationals)
        parts.append(part)
    if depth == 0 and draw(st.booleans()):
        inner = "+".join(draw(monomials(depth=1)) for _ in
                         range(draw(st.integers(1, 2))))
        parts.append(f"({inner})")
    return "*".join(parts)


@st.composite
def affs(draw):
    kind = draw(st.integers(0, 2))
    if kind == 0:
        return draw(names.filter(lambda s: s not in ("x", "y")))
    if kind == 1:
        return ("-" if draw(st.booleans()) else "") + draw(rationals)
    return f"-({draw(names.filter(lambda s: s not in ('x', 'y')))}+1)"


@st.composite
def factors(draw):
    kind = draw(st.integers(0, 3))
    if kind == 0:
        return draw(names) + draw(st.sampled_from(["", "^2", "^(k+1)"]))
    if kind == 1:
        return f"exp(-{draw(monomials())})"
    if kind == 2:
        return f"besselj({draw(affs())}, {draw(monomials())})"
    summands = "+".join(draw(monomials()) for _ in
                        range(draw(st.integers(1, 3))))
    return f"({summands})^{draw(affs())}"


@st.composite
def spec_strings(draw):
    n_factors = draw(st.integers(1, 4))
    body = " * ".join(draw(factors()) for _ in range(n_factors))
    return f"int[x,y] {body}"


class TestFuzzTotality:
    @settings(max_examples=250, deadline=None)
    @given(spec_strings())
    def test_grammarish_strings_never_crash(self, text):
        try:
            spec = parse_spec(text)
        except MobParseError:
            return
        assert parse_spec(print_spec(spec)) == spec

    @settings(max_examples=250, deadline=None)
    @given(st.text(alphabet="int[]xy^*/+-() 0123456789abk,=.", max_size=60))
    def test_arbitrary_strings_never_crash(self, text):
        try:
            parse_spec(text)
        except MobParseError:
            pass
