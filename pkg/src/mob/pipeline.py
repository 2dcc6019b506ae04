"""End-to-end driver: parse -> expand -> solve -> analyze -> numerics -> report.

Owns regulator insertion (epsilon bracket shifts and the A convergence
splitter) and the strategy for taking the associated limits:

* epsilon-symmetric pairs with simple termwise poles get the analytic
  psi-limit, cross-checked against ladder extrapolation;
* groups whose divergences only cancel jointly (double poles, epsilon-shifted
  unpaired members) are summed termwise at +-epsilon and extrapolated;
* the A splitter is removed last by Richardson extrapolation along A -> 1,
  with the inner epsilon limit taken first at every ladder point.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

from .core import (AffineForm, BracketSeries, CoefficientTerm, GammaFactor,
                   ParamPower, QC, REGULATOR, Symbol, _merge_gammas,
                   _merge_params, format_series)
from .parser import (IntegrandSpec, MultinomialFactor, parse_assignments,
                     parse_spec)
from .expand import ExpansionTrace, expand_spec
from .solve import (SeriesRepresentation, dedupe, enumerate_assignments,
                    evaluate_assignment)
from .analyze import (HypergeometricData, Region, EMPIRICAL, group_by_region)
from . import numerics
from .numerics import (CONVERGED, DIVERGENT, Env, NumericConfig, NumericValue,
                       TermPole, epsilon_group_limit, epsilon_pair_limit,
                       a_parameter_limit, sum_series)


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class RunRequest:
    spec_text: str
    assignments: str = ""
    regulate: tuple[tuple[str, str], ...] = ()   # (variable, epsilon name)
    split_summand: Optional[int] = None          # summand index, symbol 'A'
    split_symbol: str = "A"
    config: NumericConfig = field(default_factory=NumericConfig)
    trace: bool = False


EXIT_OK = 0
EXIT_STRUCTURAL = 1
EXIT_NO_CONVERGENT_GROUP = 2


@dataclass
class EvaluationReport:
    data: dict

    @property
    def exit_code(self) -> int:
        return self.data["exit"]

    def final_value(self) -> Optional[complex]:
        fin = self.data.get("final") or {}
        vals = fin.get("values") or []
        if not vals:
            return None
        v = vals[0]["value"]
        return complex(v[0], v[1])

    def to_json(self, with_timestamp: bool = True) -> str:
        doc = dict(self.data)
        if with_timestamp:
            doc["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                             time.gmtime())
        return json.dumps(doc, indent=2, allow_nan=True)

    def human_text(self) -> str:
        d = self.data
        lines = [f"bracket series: {d['bracket_series']}",
                 f"dimension: {d['dimension']}"]
        for a in d["index_assignments"]:
            lines.append(f"  free {a['free']}: {a['status']}"
                         + (f" det {a['det']}" if "det" in a else ""))
        for g in d["groups"]:
            lines.append(f"group {g['region']}: members {g['members']}"
                         f" in_region={g['in_region']}")
            if g.get("value") is not None:
                lines.append(f"  value = {g['value'][0]!r} + {g['value'][1]!r}i"
                             f"  (est err {g['error']:.2e}, {g['method']})")
            elif g.get("status"):
                lines.append(f"  {g['status']}: {g.get('reason', '')}")
        fin = d.get("final") or {}
        for v in fin.get("values", []):
            lines.append(f"final [{v['region']}]: {v['value'][0]!r}"
                         f" + {v['value'][1]!r}i")
        if fin.get("cross_region_disagreement"):
            lines.append("warning: converged groups disagree beyond tolerance")
        lines.append(f"exit: {d['exit']}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# regulator insertion
# ---------------------------------------------------------------------------

def insert_regulators(series: BracketSeries, req: RunRequest
                      ) -> tuple[BracketSeries, list[Symbol]]:
    """Shift brackets by epsilon (== multiplying the integrand by var**eps)
    and attach A**index to the designated multinomial summand."""
    brackets = list(series.brackets)
    coeff = series.coefficient
    regs: list[Symbol] = []
    for var, eps_name in req.regulate:
        eps = Symbol(eps_name, REGULATOR)
        if eps not in regs:
            regs.append(eps)
        target = f"var:{var}"
        try:
            pos = series.bracket_origins.index(target)
        except ValueError:
            raise PipelineError(f"cannot regulate {var!r}: no bracket for it")
        brackets[pos] = brackets[pos] + AffineForm.sym(eps)
    if req.split_summand is not None:
        a_sym = Symbol(req.split_symbol, REGULATOR)
        regs.append(a_sym)
        target_suffix = f":s{req.split_summand}"
        pos = next((i for i, o in enumerate(series.index_origins)
                    if o.startswith("f") and o.endswith(target_suffix)), None)
        if pos is None:
            raise PipelineError(
                f"cannot split summand {req.split_summand}: no rule-1 index "
                f"originates from it")
        coeff = coeff.with_param(a_sym, AffineForm.sym(series.indices[pos]))
    return BracketSeries(series.indices, coeff, tuple(brackets),
                         series.overall_scale, series.bracket_origins,
                         series.index_origins), regs


# ---------------------------------------------------------------------------
# epsilon pairing
# ---------------------------------------------------------------------------

def _eps_key(rep: SeriesRepresentation, eps: Symbol, flip: bool) -> str:
    """Canonical term text with the free index renamed, eps optionally
    negated, and pure-eps parameter powers stripped (pairing is defined
    modulo overall base**(c*eps) factors, cf. the A**(-2 eps) mismatch)."""
    from .core import format_term
    sub: dict[Symbol, AffineForm] = {}
    free = rep.free_index
    canon = Symbol("n", "index")
    if free is not None:
        sub[free] = AffineForm.sym(canon)
    if flip:
        sub[eps] = AffineForm.sym(eps, -1)
    params = []
    for p in rep.term.params:
        e = p.exponent.substitute(sub)
        e_eps = e.coefficient(eps)
        e = e + AffineForm.sym(eps, -e_eps)  # strip the pure-eps component
        if not e.is_zero():
            params.append(ParamPower(p.base, e))
    term = CoefficientTerm(
        scale=rep.term.scale,
        params=_merge_params(params),
        gammas=_merge_gammas(GammaFactor(g.argument.substitute(sub), g.power)
                             for g in rep.term.gammas),
        sign_exponent=rep.term.sign_exponent.substitute(sub),
        factorial_indices=tuple(canon if s == free else s
                                for s in rep.term.factorial_indices),
    )
    return f"{rep.prefactor}|{format_term(term, canon if free else None)}"


@dataclass
class EpsilonPairing:
    pairs: list[tuple[SeriesRepresentation, SeriesRepresentation]]
    self_even: list[SeriesRepresentation]
    eps_free: list[SeriesRepresentation]
    unpaired: list[SeriesRepresentation]


def pair_epsilon_representations(reps: Sequence[SeriesRepresentation],
                                 eps: Symbol) -> EpsilonPairing:
    """Match representations mapped to each other by eps -> -eps."""
    def depends(rep: SeriesRepresentation) -> bool:
        return eps in rep.term.symbols()

    eps_free = [r for r in reps if not depends(r)]
    active = [r for r in reps if depends(r)]
    keys = [_eps_key(r, eps, flip=False) for r in active]
    flipped = [_eps_key(r, eps, flip=True) for r in active]
    used = [False] * len(active)
    pairs = []
    self_even = []
    unpaired = []
    for i, r in enumerate(active):
        if used[i]:
            continue
        used[i] = True
        if flipped[i] == keys[i]:
            self_even.append(r)
            continue
        j = next((j for j in range(i + 1, len(active))
                  if not used[j] and keys[j] == flipped[i]), None)
        if j is None:
            unpaired.append(r)
        else:
            used[j] = True
            pairs.append((r, active[j]))
    return EpsilonPairing(pairs, self_even, eps_free, unpaired)


# ---------------------------------------------------------------------------
# group evaluation
# ---------------------------------------------------------------------------

def _group_value(members: list[SeriesRepresentation], env: Env,
                 eps_syms: list[Symbol], a_sym: Optional[Symbol],
                 cfg: NumericConfig) -> NumericValue:
    eps_active = [e for e in eps_syms if e not in env]
    if a_sym is not None and a_sym not in env:
        def at_a(a: Fraction) -> complex:
            env_a = dict(env)
            env_a[a_sym] = QC(a)
            inner = _group_value(members, env_a, eps_syms, None, cfg)
            if not inner.ok():
                raise numerics.NumericsError(
                    f"group sum failed at A={a}: {inner.status}")
            return inner.value
        out = a_parameter_limit(at_a, cfg)
        out.extras["method"] = "A-limit(" + out.extras.pop("method", "inner") + ")"
        return out
    if not eps_active:
        total = 0.0 + 0.0j
        err = 0.0
        terms = 0
        parts = []
        for rep in members:
            v = sum_series(rep, env, cfg)
            parts.append({"origin": rep.origin_name(), "status": v.status,
                          "terms": v.terms_used})
            if not v.ok():
                return NumericValue(v.value, v.error_estimate, v.terms_used,
                                    v.status,
                                    {"method": "direct", "parts": parts,
                                     **v.extras})
            total += v.value
            err += v.error_estimate
            terms += v.terms_used
        return NumericValue(total, err, terms, CONVERGED,
                            {"method": "direct", "parts": parts})
    if len(eps_active) > 1:
        raise PipelineError("at most one symbolic regulator per run")
    eps = eps_active[0]
    pairing = pair_epsilon_representations(members, eps)
    if pairing.unpaired:
        raise PipelineError(
            "unpaired epsilon-dependent representation(s) "
            f"{[r.origin_name() for r in pairing.unpaired]} required for a "
            f"group sum")
    # per-pair analytic route when possible, whole-group ladder otherwise
    if not pairing.self_even:
        try:
            total = 0.0 + 0.0j
            err = 0.0
            terms = 0
            extras: dict = {"method": "eps-pairs", "pairs": []}
            for plus, minus in pairing.pairs:
                v = epsilon_pair_limit(plus, minus, env, eps, cfg)
                if not v.ok():
                    raise numerics.NumericsError(f"pair failed: {v.status}")
                total += v.value
                err += v.error_estimate
                terms += v.terms_used
                extras["pairs"].append(
                    {"plus": plus.origin_name(), "minus": minus.origin_name(),
                     "route": v.extras.get("route"),
                     "analytic": _c2l(v.extras.get("analytic")),
                     "extrapolated": _c2l(v.extras.get("extrapolated")),
                     "route_disagreement": v.extras.get("route_disagreement")})
            env0 = dict(env)
            env0[eps] = QC(Fraction(0))
            for rep in pairing.eps_free:
                v = sum_series(rep, env0, cfg)
                if not v.ok():
                    raise numerics.NumericsError(
                        f"eps-free member failed: {v.status}")
                total += v.value
                err += v.error_estimate
                terms += v.terms_used
            return NumericValue(total, err, terms, CONVERGED, extras)
        except numerics.NumericsError as exc:
            fallback_reason = str(exc)
    else:
        fallback_reason = "epsilon-shifted self-symmetric member present"
    out = epsilon_group_limit(members, env, eps, cfg)
    out.extras["method"] = "eps-group-ladder"
    out.extras["why_not_pairs"] = fallback_reason
    return out


def _c2l(z) -> Optional[list[float]]:
    if z is None:
        return None
    z = complex(z)
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# the run
# ---------------------------------------------------------------------------

def run(req: RunRequest) -> EvaluationReport:
    t0 = time.perf_counter()
    doc: dict = {"schema": 1, "spec": req.spec_text.strip()}
    spec = parse_spec(req.spec_text)
    known = {p.name for p in spec.parameters}
    reg_names = {name for _, name in req.regulate}
    if req.split_summand is not None:
        reg_names.add(req.split_symbol)
    overlap = known & reg_names
    if overlap:
        raise PipelineError(f"regulator name(s) {sorted(overlap)} collide "
                            f"with spec parameters")
    env = parse_assignments(req.assignments, known=known | reg_names)
    doc["assignments"] = {s.name: [str(v.re), str(v.im)]
                          for s, v in sorted(env.items(),
                                             key=lambda kv: kv[0].name)}
    doc["regulators"] = [{"variable": v, "symbol": e} for v, e in req.regulate]
    if req.split_summand is not None:
        doc["regulators"].append({"summand": req.split_summand,
                                  "symbol": req.split_symbol})

    series, trace = expand_spec(spec)
    series, reg_syms = insert_regulators(series, req)
    eps_syms = [s for s in reg_syms if s.name != req.split_symbol
                or req.split_summand is None]
    a_sym = Symbol(req.split_symbol, REGULATOR) \
        if req.split_summand is not None else None
    if a_sym is not None and a_sym in eps_syms:
        eps_syms.remove(a_sym)

    doc["bracket_series"] = format_series(series)
    doc["dimension"] = series.dimension
    if req.trace:
        doc["trace"] = trace.to_json()

    assignments, skipped = enumerate_assignments(series)
    reps = [evaluate_assignment(series, a) for a in assignments]
    reps = dedupe(reps)

    records = []
    for a in assignments:
        rec = {"free": [s.name for s in a.free_indices],
               "det": str(a.det_abs),
               "bound": {b.name: str(v) for b, v in a.bound_solution},
               "status": "evaluated"}
        records.append(rec)
    for sk in skipped:
        records.append({"free": [s.name for s in sk.free_indices],
                        "status": f"skipped: {sk.reason}"})
    kept = {r.origin_name() for r in reps}
    for rec in records:
        if rec["status"] == "evaluated" and rec["free"] \
                and rec["free"][0] not in kept:
            rec["status"] = "deduplicated"
    doc["index_assignments"] = records

    groups = group_by_region(reps)
    env_check: Env = dict(env)
    for e in eps_syms:
        if e not in env_check:
            env_check[e] = QC(Fraction(0))
    if a_sym is not None and a_sym not in env_check:
        env_check[a_sym] = QC(req.config.a_ladder[0])

    group_docs = []
    converged: list[tuple[Region, NumericValue]] = []
    for region, members, datas in groups:
        gdoc: dict = {
            "region": region.text(),
            "members": [r.origin_name() for r in members],
            "pfq": [d.to_json() if d is not None else None for d in datas],
        }
        inside = region.contains(env_check)
        gdoc["in_region"] = inside
        if inside is False:
            gdoc["status"] = "out of region at this assignment"
            gdoc["value"] = None
        else:
            try:
                v = _group_value(members, env, eps_syms, a_sym, req.config)
            except (numerics.NumericsError, TermPole) as exc:
                gdoc["status"] = DIVERGENT
                gdoc["reason"] = str(exc)
                gdoc["value"] = None
                group_docs.append(gdoc)
                continue
            gdoc["status"] = v.status
            gdoc["method"] = v.extras.get("method", "direct")
            if v.ok():
                gdoc["value"] = [v.value.real, v.value.imag]
                gdoc["error"] = v.error_estimate
                gdoc["terms"] = v.terms_used
                for key in ("pairs", "why_not_pairs", "parts", "ladder"):
                    if key in v.extras:
                        gdoc[key] = v.extras[key]
                if "samples" in v.extras:
                    gdoc["a_samples"] = [_c2l(s) for s in v.extras["samples"]]
                converged.append((region, v))
            else:
                gdoc["value"] = None
                gdoc["reason"] = v.extras.get("reason", v.status)
        group_docs.append(gdoc)
    doc["groups"] = group_docs

    final: dict = {"values": []}
    for region, v in converged:
        final["values"].append({"region": region.text(),
                                "value": [v.value.real, v.value.imag],
                                "error": v.error_estimate})
    if len(converged) > 1:
        vals = [v.value for _, v in converged]
        spread = max(abs(a - b) for a in vals for b in vals)
        scale = max(1.0, max(abs(a) for a in vals))
        tol = 1e3 * sum(v.error_estimate for _, v in converged)
        final["cross_region_spread"] = spread
        final["cross_region_disagreement"] = bool(spread > max(tol, 1e-9 * scale))
    doc["final"] = final
    doc["timing"] = {"seconds": round(time.perf_counter() - t0, 6)}
    doc["exit"] = EXIT_OK if converged else EXIT_NO_CONVERGENT_GROUP
    return EvaluationReport(doc)
