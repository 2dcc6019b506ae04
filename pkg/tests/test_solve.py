import itertools
from fractions import Fraction as F

import pytest

from mob.core import (AffineForm, BracketSeries, INDEX, Symbol, canonicalize,
                      format_series)
from mob.expand import expand_spec
from mob.parser import parse_spec, parse_assignments
from mob.solve import (OverDeterminedError, dedupe, enumerate_assignments,
                       evaluate_assignment)


def expanded(text):
    s, _ = expand_spec(parse_spec(text))
    return s


class TestEnumerate:
    def test_bessel_two_assignments(self):
        s = expanded("int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)")
        asg, skipped = enumerate_assignments(s)
        assert not skipped
        by_free = {a.free_indices[0].name: a for a in asg}
        assert set(by_free) == {"n1", "n2"}
        # free n2 (the Bessel index): n1* = -2 n2 - 2 nu - 1, det 1
        a = by_free["n2"]
        assert a.det_abs == 1
        sol = dict(a.bound_solution)[Symbol("n1", INDEX)]
        assert sol.text() == "-2*n2-2*nu-1"
        # free n1 (the exp index): n2* = -n1/2 - nu - 1/2, det 2
        b = by_free["n1"]
        assert b.det_abs == 2
        sol = dict(b.bound_solution)[Symbol("n2", INDEX)]
        assert sol.text() == "-1/2*n1-nu-1/2"

    def test_c2k_unique_solution(self):
        s = expanded("int[x,y] 2 * x^k * y^k * ( x*y*(x+y) + (x+y) )^-(k+1)")
        asg, skipped = enumerate_assignments(s)
        assert len(asg) == 1 and not skipped
        a = asg[0]
        assert a.free_indices == ()
        assert a.det_abs == 2
        expected = "-1/2*k-1/2"
        assert all(v.text() == expected for _, v in a.bound_solution)

    def test_h_singular_choices_recorded(self, corpus):
        s = expanded(corpus["feynman_h"])
        asg, skipped = enumerate_assignments(s)
        assert sorted(a.free_indices[0].name for a in asg) == ["n1", "n2", "n4"]
        assert sorted(sk.free_indices[0].name for sk in skipped) == ["n3", "n5"]
        assert all(sk.reason == "singular system" for sk in skipped)

    def test_solutions_annihilate_brackets(self, corpus):
        for text in corpus.values():
            s = expanded(text)
            asg, _ = enumerate_assignments(s)
            for a in asg:
                assert a.verify(s)

    def test_overdetermined_rejected(self):
        n = Symbol("n", INDEX)
        from mob.core import CoefficientTerm
        coeff = CoefficientTerm(sign_exponent=AffineForm.sym(n),
                                factorial_indices=(n,))
        s = BracketSeries((n,), coeff, (AffineForm.sym(n).shifted(1),))
        # fabricate an extra bracket via object surgery is not possible
        # (construction fails), so check the constructor path directly
        with pytest.raises(Exception):
            BracketSeries((n,), coeff, (AffineForm.sym(n).shifted(1),
                                        AffineForm.sym(n).shifted(2)))

    def test_det_invariant_under_permutations(self, corpus):
        s = expanded(corpus["c3k"])
        asg, _ = enumerate_assignments(s)
        dets = {a.free_indices[0].name: a.det_abs for a in asg}
        # permute brackets and indices; |det| per free choice is unchanged
        perm = (3, 0, 4, 1, 2)
        s2 = BracketSeries(
            indices=s.indices,
            coefficient=s.coefficient,
            brackets=tuple(s.brackets[i] for i in perm),
            overall_scale=s.overall_scale,
            bracket_origins=tuple(s.bracket_origins[i] for i in perm),
            index_origins=s.index_origins)
        asg2, _ = enumerate_assignments(s2)
        dets2 = {a.free_indices[0].name: a.det_abs for a in asg2}
        assert dets == dets2


class TestEvaluate:
    def test_bessel_k_free_matches_series_3_5(self):
        s = expanded("int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)")
        asg, _ = enumerate_assignments(s)
        rep = next(evaluate_assignment(s, a) for a in asg
                   if a.free_indices[0].name == "n2")
        assert rep.prefactor == 1
        assert rep.term_text() == (
            "phi(n2) * alpha^(-2*n2-2*nu-1) * (beta/2)^(2*n2+nu)"
            " / Gamma(n2+nu+1) * Gamma(2*n2+2*nu+1)")

    def test_bessel_n_free_matches_series_3_7(self):
        # the bound phi is consumed whole: no residual (-1)^(k*) factor
        s = expanded("int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)")
        asg, _ = enumerate_assignments(s)
        rep = next(evaluate_assignment(s, a) for a in asg
                   if a.free_indices[0].name == "n1")
        assert rep.prefactor == F(1, 2)
        assert rep.term_text() == (
            "phi(n1) * alpha^(n1) * (beta/2)^(-n1-nu-1)"
            " / Gamma(-1/2*n1+1/2) * Gamma(1/2*n1+nu+1/2)")

    def test_c2k_closed_form_structure(self):
        s = expanded("int[x,y] 2 * x^k * y^k * ( x*y*(x+y) + (x+y) )^-(k+1)")
        asg, _ = enumerate_assignments(s)
        rep = evaluate_assignment(s, asg[0])
        assert rep.free_index is None
        assert rep.prefactor == 1  # overall 2 / det 2
        assert rep.term_text() == (
            "1 * Gamma(1/2*k+1/2)^4 / Gamma(k+1)^2")

    def test_no_bound_index_survives(self, corpus):
        for text in corpus.values():
            s = expanded(text)
            asg, _ = enumerate_assignments(s)
            for a in asg:
                rep = evaluate_assignment(s, a)
                leftover = rep.term.symbols() & set(s.indices)
                assert leftover <= {rep.free_index}


class TestDedupe:
    def test_c4_merges_equal_series(self, corpus):
        # with regulators inserted, exactly n5/n6 and n7/n8 coincide
        from mob.pipeline import RunRequest, insert_regulators
        s = expanded(corpus["c4"])
        req = RunRequest(corpus["c4"],
                         regulate=(("x", "eps"), ("y", "eps"),
                                   ("z", "eps"), ("w", "eps")),
                         split_summand=0)
        s, _regs = insert_regulators(s, req)
        asg, _ = enumerate_assignments(s)
        reps = [evaluate_assignment(s, a) for a in asg]
        deduped = dedupe(reps)
        names = [r.origin_name() for r in deduped]
        assert names == ["n1", "n2", "n3", "n4", "n5", "n7"]
        merged = {r.origin_name(): r.merged_from for r in deduped}
        assert merged["n5"] == ("n6",)
        assert merged["n7"] == ("n8",)

    def test_unregulated_c4_collapses_by_symmetry(self, corpus):
        s = expanded(corpus["c4"])
        asg, _ = enumerate_assignments(s)
        reps = [evaluate_assignment(s, a) for a in asg]
        assert len(dedupe(reps)) == 1

    def test_bessel_both_kept(self):
        s = expanded("int[x] x^nu * exp(-alpha*x) * besselj(nu, beta*x)")
        asg, _ = enumerate_assignments(s)
        reps = [evaluate_assignment(s, a) for a in asg]
        assert len(dedupe(reps)) == 2

    def test_single_rep_unchanged(self):
        s = expanded("int[x] x^(a-1) * exp(-x)")
        asg, _ = enumerate_assignments(s)
        reps = [evaluate_assignment(s, asg[0])]
        assert dedupe(reps) == reps
