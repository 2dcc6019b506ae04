"""Rule 2/3 engine: free-index enumeration and exact linear solving.

The bracket linear systems are solved by Gaussian elimination over exact
rationals with affine right-hand sides (free indices and parameters are
carried through symbolically), so solved index values like -(k+1)/2 stay
exact for downstream gamma-argument classification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .core import (AffineForm, BracketSeries, CoefficientTerm, GammaFactor,
                   Symbol, _merge_gammas, _merge_params, ParamPower,
                   format_term)


class SolveError(ValueError):
    pass


class OverDeterminedError(SolveError):
    """More brackets than indices: the whole run is aborted."""


@dataclass(frozen=True)
class IndexAssignment:
    free_indices: tuple[Symbol, ...]
    bound_solution: tuple[tuple[Symbol, AffineForm], ...]
    det_abs: Fraction

    def solution_map(self) -> dict[Symbol, AffineForm]:
        return dict(self.bound_solution)

    def verify(self, series: BracketSeries) -> bool:
        sub = self.solution_map()
        return all(b.substitute(sub).is_zero() for b in series.brackets)


@dataclass(frozen=True)
class SkippedAssignment:
    free_indices: tuple[Symbol, ...]
    reason: str


@dataclass(frozen=True)
class SeriesRepresentation:
    """One Rule-2 output: a single series in the free index (or a constant).

    prefactor collects the overall scale, the coefficient's rational scale
    and 1/|det A|; term holds everything per-term.
    """

    free_index: Optional[Symbol]
    term: CoefficientTerm
    prefactor: Fraction
    origin: IndexAssignment
    merged_from: tuple[str, ...] = ()

    def term_text(self) -> str:
        return format_term(self.term, self.free_index)

    def origin_name(self) -> str:
        return self.free_index.name if self.free_index else "(all bound)"


def enumerate_assignments(series: BracketSeries
                          ) -> tuple[list[IndexAssignment], list[SkippedAssignment]]:
    """All invertible choices of free indices (Rule 3), singular ones recorded."""
    n_idx = len(series.indices)
    n_br = len(series.brackets)
    if n_br > n_idx:
        raise OverDeterminedError(
            f"{n_br} brackets for {n_idx} indices: over-determined system")
    dim = n_idx - n_br
    out: list[IndexAssignment] = []
    skipped: list[SkippedAssignment] = []
    for free in itertools.combinations(series.indices, dim):
        bound = tuple(s for s in series.indices if s not in free)
        solved = _solve_exact(series.brackets, bound, free)
        if solved is None:
            skipped.append(SkippedAssignment(free, "singular system"))
            continue
        solution, det = solved
        a = IndexAssignment(free, tuple(solution.items()), abs(det))
        assert a.verify(series), "bracket arguments do not vanish at solution"
        out.append(a)
    return out, skipped


def _solve_exact(brackets: tuple[AffineForm, ...], bound: tuple[Symbol, ...],
                 free: tuple[Symbol, ...]
                 ) -> Optional[tuple[dict[Symbol, AffineForm], Fraction]]:
    """Solve the square system 'all brackets vanish' for the bound indices.

    Right-hand sides are affine forms over the free indices and parameters.
    Returns None when the coefficient matrix is singular.
    """
    m = len(bound)
    pos = {s: j for j, s in enumerate(bound)}
    rows: list[list[Fraction]] = []
    rhs: list[AffineForm] = []
    for b in brackets:
        row = [Fraction(0)] * m
        rest = AffineForm.const(b.constant)
        for s, c in b.terms:
            if s in pos:
                row[pos[s]] = c
            else:
                rest = rest + AffineForm.sym(s, c)
        rows.append(row)
        rhs.append(rest.scaled(-1))

    det = Fraction(1)
    for col in range(m):
        pivot = next((r for r in range(col, m) if rows[r][col] != 0), None)
        if pivot is None:
            return None
        if pivot != col:
            rows[col], rows[pivot] = rows[pivot], rows[col]
            rhs[col], rhs[pivot] = rhs[pivot], rhs[col]
            det = -det
        det *= rows[col][col]
        inv = 1 / rows[col][col]
        rows[col] = [c * inv for c in rows[col]]
        rhs[col] = rhs[col].scaled(inv)
        for r in range(m):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
                rhs[r] = rhs[r] - rhs[col].scaled(f)
    return {bound[j]: rhs[j] for j in range(m)}, det


def evaluate_assignment(series: BracketSeries,
                        a: IndexAssignment) -> SeriesRepresentation:
    """Rule 2: substitute the solved indices and attach Gamma(-n*) factors.

    The indicator phi of every bound index is consumed whole (factorial and
    sign) and replaced by Gamma(-n*); explicit sign factors in the
    coefficient are substituted and may acquire non-integer exponents,
    interpreted as exp(i*pi*(.)) at numeric time.
    """
    if len(a.free_indices) > 1:
        raise SolveError("representations with more than one free index are "
                         "not supported (multi-dimensional series are out of "
                         "scope)")
    sub = a.solution_map()
    coeff = series.coefficient

    sign = coeff.sign_exponent
    for b in sub:
        sign = sign + AffineForm.sym(b, -1)
    sign = sign.substitute(sub)

    gammas = [GammaFactor(g.argument.substitute(sub), g.power)
              for g in coeff.gammas]
    for b, solution in a.bound_solution:
        gammas.append(GammaFactor(solution.scaled(-1), 1))

    params = [ParamPower(p.base, p.exponent.substitute(sub))
              for p in coeff.params]
    factorials = tuple(s for s in coeff.factorial_indices if s not in sub)

    term = CoefficientTerm(
        scale=Fraction(1),
        params=_merge_params(params),
        gammas=_merge_gammas(gammas),
        sign_exponent=sign,
        factorial_indices=factorials,
    )
    free = a.free_indices[0] if a.free_indices else None
    if free is not None:
        leftover = term.symbols() & set(series.indices) - {free}
    else:
        leftover = term.symbols() & set(series.indices)
    if leftover:
        raise SolveError(f"bound indices survived substitution: {leftover}")
    prefactor = series.overall_scale * series.coefficient.scale / a.det_abs
    return SeriesRepresentation(free, term, prefactor, a)


_CANON_FREE = Symbol("n", "index")


def _canonical_key(rep: SeriesRepresentation) -> tuple:
    if rep.free_index is not None:
        sub = {rep.free_index: AffineForm.sym(_CANON_FREE)}
        term = CoefficientTerm(
            scale=rep.term.scale,
            params=_merge_params(ParamPower(p.base, p.exponent.substitute(sub))
                                 for p in rep.term.params),
            gammas=_merge_gammas(GammaFactor(g.argument.substitute(sub), g.power)
                                 for g in rep.term.gammas),
            sign_exponent=rep.term.sign_exponent.substitute(sub),
            factorial_indices=tuple(_CANON_FREE if s == rep.free_index else s
                                    for s in rep.term.factorial_indices),
        )
    else:
        term = rep.term
    return (format_term(term, _CANON_FREE if rep.free_index else None),
            rep.prefactor)


def dedupe(reps: list[SeriesRepresentation]) -> list[SeriesRepresentation]:
    """Collapse representations with identical canonical term and prefactor."""
    seen: dict[tuple, int] = {}
    out: list[SeriesRepresentation] = []
    for rep in reps:
        key = _canonical_key(rep)
        if key in seen:
            kept = out[seen[key]]
            out[seen[key]] = SeriesRepresentation(
                kept.free_index, kept.term, kept.prefactor, kept.origin,
                merged_from=kept.merged_from + (rep.origin_name(),))
        else:
            seen[key] = len(out)
            out.append(rep)
    return out
