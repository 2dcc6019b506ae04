import cmath
import math
import random
from fractions import Fraction as F

import mpmath as mp
import pytest

from mob.core import AffineForm, CoefficientTerm, GammaFactor, INDEX, \
    PARAMETER, ParamPower, QC, REGULATOR, Symbol
from mob.expand import expand_spec
from mob.parser import parse_assignments, parse_spec
from mob.solve import SeriesRepresentation, enumerate_assignments, \
    evaluate_assignment
from mob.numerics import (CONVERGED, DIVERGENT, GammaPole, NumericConfig,
                          TermPole, a_parameter_limit, digamma,
                          dirichlet_l3_2, epsilon_group_limit,
                          epsilon_pair_limit, euler_gamma, gamma, lgamma,
                          neville_zero, pfq_sum, polylog, quadrature_oracle,
                          sum_series, term_ratio_fn, term_value, zeta3)

mp.mp.dps = 30
CFG = NumericConfig()


class TestGamma:
    def test_half(self):
        assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)

    def test_negative_half_integer(self):
        # reflection oracle: Gamma(-1.5) = pi / (sin(-1.5 pi) Gamma(2.5))
        oracle = math.pi / (math.sin(-1.5 * math.pi) * math.gamma(2.5))
        assert gamma(-1.5) == pytest.approx(oracle, rel=1e-13)
        assert gamma(-1.5) == pytest.approx(4 * math.sqrt(math.pi) / 3,
                                            rel=1e-13)

    def test_positive_integers_exact(self):
        for nn in (1, 2, 3, 10, 20):
            assert gamma(float(nn)) == float(math.factorial(nn - 1))

    def test_pole_signalled(self):
        for z in (0.0, -1.0, -7.0):
            with pytest.raises(GammaPole):
                gamma(z)

    def test_relative_error_on_test_set(self):
        rng = random.Random(11)
        for _ in range(400):
            z = complex(rng.uniform(-10, 10), rng.uniform(-10, 10))
            if abs(z.imag) < 1e-2 and z.real <= 0.5 \
                    and abs(z.real - round(z.real)) < 1e-2:
                continue
            ref = complex(mp.gamma(z))
            assert abs(gamma(z) - ref) <= 1e-13 * abs(ref)

    def test_recurrence(self):
        rng = random.Random(5)
        for _ in range(1000):
            z = complex(rng.uniform(-10, 10), rng.uniform(-10, 10))
            if abs(z.imag) < 1e-2 and abs(z.real - round(z.real)) < 1e-2:
                continue
            assert abs(gamma(z + 1) - z * gamma(z)) <= 1e-12 * abs(gamma(z + 1))

    def test_duplication(self):
        rng = random.Random(6)
        for _ in range(300):
            z = complex(rng.uniform(0.1, 8), rng.uniform(-8, 8))
            lhs = gamma(2 * z)
            rhs = (2.0 ** (2 * z - 1) * gamma(z) * gamma(z + 0.5)
                   / math.sqrt(math.pi))
            assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_reflection(self):
        rng = random.Random(7)
        for _ in range(300):
            z = complex(rng.uniform(0.05, 0.95), rng.uniform(-5, 5))
            lhs = gamma(z) * gamma(1 - z)
            rhs = cmath.pi / cmath.sin(cmath.pi * z)
            assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_lgamma_consistent(self):
        rng = random.Random(8)
        for _ in range(300):
            z = complex(rng.uniform(-15, 15), rng.uniform(-30, 30))
            if abs(z.imag) < 0.3 and z.real <= 0.5:
                continue
            ref = complex(mp.gamma(z))
            assert abs(cmath.exp(lgamma(z)) - ref) <= 5e-13 * abs(ref)


class TestDigamma:
    def test_at_one(self):
        assert digamma(1.0) == pytest.approx(-euler_gamma(), abs=1e-13)

    def test_finite_difference_consistency(self):
        h = 1e-5
        rng = random.Random(9)
        for _ in range(50):
            z = complex(rng.uniform(0.3, 9), rng.uniform(-6, 6))
            fd = (gamma(z + h) - gamma(z - h)) / (2 * h * gamma(z))
            assert abs(digamma(z) - fd) <= 1e-7 * (1 + abs(fd))

    def test_vs_mpmath(self):
        rng = random.Random(10)
        for _ in range(200):
            z = complex(rng.uniform(-10, 10), rng.uniform(-10, 10))
            if abs(z.imag) < 1e-2 and z.real <= 0.5 \
                    and abs(z.real - round(z.real)) < 1e-2:
                continue
            ref = complex(mp.digamma(z))
            assert abs(digamma(z) - ref) <= 1e-12 * (1 + abs(ref))


class TestReferenceConstants:
    def test_zeta3(self):
        assert zeta3() == pytest.approx(float(mp.zeta(3)), abs=1e-15)

    def test_l32(self):
        ref = float((mp.psi(1, mp.mpf(1) / 3) - mp.psi(1, mp.mpf(2) / 3)) / 9)
        assert dirichlet_l3_2() == pytest.approx(ref, abs=1e-14)

    def test_euler_gamma(self):
        assert euler_gamma() == pytest.approx(float(mp.euler), abs=1e-15)

    def test_polylog(self):
        for s, z in ((2, 0.5), (3, 0.5), (3, -0.99), (2, 0.97)):
            assert polylog(s, z) == pytest.approx(
                complex(mp.polylog(s, z)), rel=1e-13)


def _gamma_a_rep():
    s, _ = expand_spec(parse_spec("int[x] x^(a-1) * exp(-x)"))
    asg, _sk = enumerate_assignments(s)
    return evaluate_assignment(s, asg[0])


class TestSumSeries:
    def test_gamma_a_by_rule2(self):
        # sum phi_n <n+a> evaluates (empty free set after rule 2 on the
        # 1-bracket series) to Gamma(a): here via the 0-dim representation
        rep = _gamma_a_rep()
        for a in ("1/2", "1", "37/10"):
            env = parse_assignments(f"a={a}")
            v = sum_series(rep, env, CFG)
            ref = float(mp.gamma(F(a)))
            assert v.ok()
            assert abs(v.value - ref) <= 1e-12 * abs(ref)

    def test_geometric_1f0(self):
        v = pfq_sum([1.0], [], 0.37, CFG)
        assert v.ok()
        assert v.value == pytest.approx(1 / (1 - 0.37), rel=1e-12)

    def test_divergence_detected(self):
        v = pfq_sum([1.0], [], 1.25, CFG)
        assert v.status == DIVERGENT

    def test_ratio_matches_termwise(self):
        # same values with and without the ratio fast path
        s, _ = expand_spec(parse_spec(
            "int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)"))
        asg, _sk = enumerate_assignments(s)
        rep = next(evaluate_assignment(s, a) for a in asg
                   if a.free_indices[0].name == "n2")
        env = parse_assignments("nu=1/3,alpha=3,beta=1")
        ratio = term_ratio_fn(rep.term, rep.free_index, env)
        assert ratio is not None
        t = term_value(rep.term, rep.free_index, 0, env)
        for nn in range(12):
            direct = term_value(rep.term, rep.free_index, nn, env)
            assert abs(t - direct) <= 1e-12 * (abs(direct) + 1e-30)
            t = t * ratio(nn)

    def test_ratio_through_stable_pole_constellation(self):
        # Gamma(-n)/Gamma(-2n) resolved termwise equals the recurrence route
        n_ = Symbol("n", INDEX)
        term = CoefficientTerm(
            gammas=(GammaFactor(AffineForm.sym(n_, -1), 1),
                    GammaFactor(AffineForm.sym(n_, -2), -1),
                    GammaFactor(AffineForm.sym(n_).shifted(1), 1)),
            sign_exponent=AffineForm.sym(n_),
            factorial_indices=(n_,))
        env = {}
        # direct: 2 (-1)^n (2n)! / n! times phi sign and factorials
        ratio = term_ratio_fn(term, n_, env)
        assert ratio is not None
        t = term_value(term, n_, 0, env)
        assert t == pytest.approx(2.0, rel=1e-13)  # n=0 value
        for nn in range(8):
            direct = term_value(term, n_, nn, env)
            assert abs(t - direct) <= 1e-11 * abs(direct)
            t = t * ratio(nn)

    def test_constant_pole_raises(self):
        n_ = Symbol("n", INDEX)
        term = CoefficientTerm(
            gammas=(GammaFactor(AffineForm.const(-2), 1),),
            sign_exponent=AffineForm.sym(n_), factorial_indices=(n_,))
        with pytest.raises(TermPole):
            term_value(term, n_, 3, {})

    def test_constant_denominator_pole_gives_zero(self):
        n_ = Symbol("n", INDEX)
        term = CoefficientTerm(
            gammas=(GammaFactor(AffineForm.const(-2), -1),
                    GammaFactor(AffineForm.sym(n_).shifted(1), 1)),
            sign_exponent=AffineForm.sym(n_), factorial_indices=(n_,))
        assert term_value(term, n_, 3, {}) == 0


class TestEpsilonLimits:
    def _c3_pair(self, k):
        from mob.pipeline import RunRequest, insert_regulators
        text = ("int[x,y,z] 2/3 * x^k * y^k * z^k * "
                "( x*y*z*(x+y) + z*(x+y) + x*y*z^2 + x*y )^-(k+1)")
        s, _ = expand_spec(parse_spec(text))
        s, _regs = insert_regulators(
            s, RunRequest(text, regulate=(("z", "eps"),)))
        asg, _sk = enumerate_assignments(s)
        reps = {a.free_indices[0].name: evaluate_assignment(s, a) for a in asg}
        env = parse_assignments(f"k={k}")
        return reps["n3"], reps["n4"], env, Symbol("eps", REGULATOR)

    def test_c3_k1_value_and_routes(self):
        plus, minus, env, eps = self._c3_pair(1)
        v = epsilon_pair_limit(plus, minus, env, eps, CFG)
        assert v.ok()
        ref = dirichlet_l3_2()  # C3 = L_{-3}(2), summed independently
        assert abs(v.value - ref) <= 1e-10 * abs(ref)
        assert v.extras["route"] == "analytic"
        assert abs(v.extras["analytic"] - v.extras["extrapolated"]) <= 1e-8

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_routes_agree_on_c3k(self, k):
        plus, minus, env, eps = self._c3_pair(k)
        v = epsilon_pair_limit(plus, minus, env, eps, CFG)
        assert v.ok()
        assert abs(v.extras["analytic"] - v.extras["extrapolated"]) \
            <= 1e-8 * (1 + abs(v.value))

    def test_eps_free_pair_is_plain_sum(self):
        rep = _gamma_a_rep()
        env = parse_assignments("a=3/2")
        eps = Symbol("eps", REGULATOR)
        v = epsilon_pair_limit(rep, rep, env, eps, CFG)
        ref = sum_series(rep, env, CFG)
        assert v.value == ref.value
        assert v.extras["route"] == "eps-free"

    def test_higher_order_pole_rejected_by_pair_route(self):
        # squared singular gamma: the analytic route must refuse and fall
        # back to extrapolation
        n_ = Symbol("n", INDEX)
        eps = Symbol("eps", REGULATOR)
        base = CoefficientTerm(
            gammas=(GammaFactor(AffineForm.build({n_: -1, eps: -1}), 2),
                    GammaFactor(AffineForm.build({n_: 1, eps: 1}, 2), 2),),
            sign_exponent=AffineForm.sym(n_), factorial_indices=(n_,))
        flip = CoefficientTerm(
            gammas=(GammaFactor(AffineForm.build({n_: -1, eps: 1}), 2),
                    GammaFactor(AffineForm.build({n_: 1, eps: -1}, 2), 2),),
            sign_exponent=AffineForm.sym(n_), factorial_indices=(n_,))
        from mob.solve import IndexAssignment
        origin = IndexAssignment((n_,), (), F(1))
        rp = SeriesRepresentation(n_, base, F(1), origin)
        rm = SeriesRepresentation(n_, flip, F(1), origin)
        v = epsilon_pair_limit(rp, rm, {}, eps, CFG)
        assert v.extras["route"] == "extrapolated"
        assert "higher-order pole" in v.extras["analytic_unsupported"]


class TestAParameterLimit:
    def test_constant_input(self):
        v = a_parameter_limit(lambda a: 3.25 + 0j, CFG)
        assert v.value == pytest.approx(3.25, abs=1e-13)

    def test_c4_limit_function(self):
        # the known A -> 1 limit of the C4 group (polylog closed form is a
        # test oracle only)
        def f(a):
            a = F(a)
            sa = math.sqrt(float(a))
            la = math.log(float(a))
            li3 = polylog(3, sa) - polylog(3, -sa)
            li2 = polylog(2, sa) - polylog(2, -sa)
            atan = math.log((1 + sa) / (1 - sa))
            return (la * la * atan / (24 * sa) + li3.real / (3 * sa)
                    - la * li2.real / (6 * sa))
        v = a_parameter_limit(f, CFG)
        target = 7 * zeta3() / 12
        assert abs(v.value - target) <= 1e-8

    def test_neville_kills_powers(self):
        hs = [2.0 ** -j for j in range(3, 13)]
        vs = [1.0 + 3 * h - 2 * h * h + h ** 3 for h in hs]
        value, err = neville_zero(hs, vs)
        assert value == pytest.approx(1.0, abs=1e-12)


class TestQuadratureOracle:
    def test_bessel_integral(self, corpus):
        spec = parse_spec(corpus["bessel"])
        env = parse_assignments("nu=0,alpha=2,beta=1")
        v = quadrature_oracle(spec, env)
        assert v.ok()
        assert v.value.real == pytest.approx(1 / math.sqrt(5), abs=1e-8)

    def test_c2_integral(self, corpus):
        spec = parse_spec(corpus["c2k"])
        env = parse_assignments("k=1")
        v = quadrature_oracle(spec, env)
        assert v.ok()
        assert v.value.real == pytest.approx(1.0, abs=1e-6)

    def test_c3_logarithmic_reduction(self):
        # (2/3) int ln(1+x)/(x^2+x+1) dx as a raw callable
        def f(x):
            return math.log1p(x) / (x * x + x + 1)
        v = quadrature_oracle(f, dims=1)
        assert v.ok()
        assert (2 / 3) * v.value.real == pytest.approx(dirichlet_l3_2(),
                                                       abs=1e-8)
