"""Seeded scenario runner.

A scenario is a JSON file with a schema tag, a seed, and an ordered list of
steps.  Each step names an operation and its parameters; constructive steps
may bind their result to a handle that later steps reference by name.  The
runner executes steps in order and accumulates one report entry per step.

Reports are canonical: keys sorted, no whitespace, one trailing newline.
The worker count is threaded through to operations that can use it but is
never written into the report, so runs with the same seed produce identical
bytes no matter how many workers share the loop.  Randomized steps draw
their seed from a hash of the scenario seed and the step index, so inserting
a step never shifts the randomness of the ones before it.

A step with ``"assert": true`` promotes its check into an invariant: a
failed verdict stops the run with a verification error.  Errors from the
operation itself (bad input, capacity, a violated precondition) stop the
run the same way, and the exit code of the result mirrors the error class.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction

from .boolean import (
    biased_measure,
    check_global,
    check_uniform_biased_floor,
    hypercontractivity_check,
    max_global_restriction,
    measure_upgrade,
    stability,
    verify_sharp_threshold,
)
from .bounds import bound_rhs, example_23, fstar_family, verify_instance
from .domains import Domain, check_rt_spread, check_tau_homogeneous, domain_from_json_obj
from .errors import ParseError, SforgeError, VerificationError
from .family import SetFamily, family_from_json_obj
from .pipelines import (
    Decomposition,
    SystemSST,
    cluster_system,
    delta_filter,
    down_closed_cover,
    peel_high_uniformity,
    reduce_intersections,
    simplify,
    spread_approximation,
)
from .spread import check_spread, spread_lemma_mc
from .sunflowers import (
    CoreMode,
    CorePredicate,
    find_sunflower,
    max_sunflower_free,
    phi_exact,
    product_kernel,
)

SCHEMA = 1


def canonical_report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, separators=(",", ":")) + "\n").encode()


@dataclass(frozen=True)
class ScenarioResult:
    report: dict
    exit_code: int

    def canonical_bytes(self) -> bytes:
        return canonical_report_bytes(self.report)


# ---------------------------------------------------------------------------
# parameter coercion


def _int(step: dict, key: str, default=None) -> int:
    if key not in step:
        if default is not None:
            return default
        raise ParseError(f"step is missing required key {key!r}", op=step.get("op"))
    value = step[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"step key {key!r} must be an integer", op=step.get("op"))
    return value


def _frac(step: dict, key: str, default=None) -> Fraction:
    if key not in step:
        if default is not None:
            return Fraction(default)
        raise ParseError(f"step is missing required key {key!r}", op=step.get("op"))
    value = step[key]
    if isinstance(value, bool):
        raise ParseError(f"step key {key!r} must be a number or 'a/b' string", op=step.get("op"))
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"step key {key!r} is not a valid fraction: {value!r}")
    raise ParseError(f"step key {key!r} must be a number or 'a/b' string", op=step.get("op"))


def _name(step: dict, required: bool = False) -> str | None:
    name = step.get("name")
    if name is None:
        if required:
            raise ParseError("step needs a 'name' to bind its result", op=step.get("op"))
        return None
    if not isinstance(name, str) or not name:
        raise ParseError("step key 'name' must be a non-empty string", op=step.get("op"))
    return name


def _handle(ctx: "_Context", step: dict, key: str, want: type):
    if key not in step:
        raise ParseError(f"step is missing required key {key!r}", op=step.get("op"))
    ref = step[key]
    if not isinstance(ref, str):
        raise ParseError(f"step key {key!r} must name a handle", op=step.get("op"))
    ref = ref[1:] if ref.startswith("@") else ref
    if ref not in ctx.handles:
        raise ParseError(f"unknown handle {ref!r}", op=step.get("op"))
    value = ctx.handles[ref]
    if not isinstance(value, want):
        raise ParseError(
            f"handle {ref!r} is a {type(value).__name__}, not a {want.__name__}",
            op=step.get("op"),
        )
    return value


_MODES = {"any": CoreMode.ANY, "exact": CoreMode.EXACT, "at-most": CoreMode.AT_MOST}


def _pred(step: dict, petals_key: str = "petals") -> CorePredicate:
    petals = _int(step, petals_key)
    mode_name = step.get("mode", "any")
    if mode_name not in _MODES:
        raise ParseError(f"unknown core mode {mode_name!r}", op=step.get("op"))
    bound = None
    if "core-bound" in step:
        bound = _int(step, "core-bound")
    degenerate = step.get("degenerate-small", False)
    if not isinstance(degenerate, bool):
        raise ParseError("step key 'degenerate-small' must be a boolean", op=step.get("op"))
    return CorePredicate(petals, _MODES[mode_name], bound, degenerate)


def _family_summary(F: SetFamily) -> dict:
    out = {"size": len(F.members), "ground": F.ground.n}
    if F.uniformity is not None:
        out["uniformity"] = F.uniformity
    return out


# ---------------------------------------------------------------------------
# operations


def _op_domain(ctx, step):
    name = _name(step, required=True)
    spec = {k: v for k, v in step.items() if k not in ("op", "name", "assert")}
    A = domain_from_json_obj(spec)
    report = {
        "kind": A.kind,
        "k": A.k,
        "size": len(A.family.members),
        "ground": A.ground_bits.bit_length(),
    }
    return report, name, A


def _op_family(ctx, step):
    name = _name(step, required=True)
    if "domain" in step:
        A = _handle(ctx, step, "domain", Domain)
        F = A.family
    else:
        F = family_from_json_obj({"n": step.get("n"), "sets": step.get("sets")})
    return _family_summary(F), name, F


def _op_product_kernel(ctx, step):
    name = _name(step, required=True)
    T = product_kernel(_int(step, "petals"), _int(step, "core-size"))
    return _family_summary(T), name, T


def _op_example_23(ctx, step):
    name = _name(step)
    T = _handle(ctx, step, "skeleton", SetFamily)
    F = example_23(_int(step, "n"), _int(step, "k"), _int(step, "petals"), _int(step, "core-size"), T)
    return _family_summary(F), name, F


def _op_fstar(ctx, step):
    name = _name(step)
    A = _handle(ctx, step, "domain", Domain)
    T = _handle(ctx, step, "skeleton", SetFamily)
    F = fstar_family(A, T, _int(step, "petals"))
    return _family_summary(F), name, F


def _op_phi(ctx, step):
    res = phi_exact(
        _int(step, "petals"),
        _int(step, "core-size"),
        _int(step, "support"),
        budget=_int(step, "budget", 50_000_000),
    )
    return res.as_report(), None, None


def _op_find(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    pred = _pred(step)
    wit = find_sunflower(F, pred)
    report = {"pred": pred.describe(), "found": wit is not None}
    if wit is not None:
        report["witness"] = wit.as_report()
    return report, None, None


def _op_assert_free(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    pred = _pred(step)
    wit = find_sunflower(F, pred)
    if wit is not None:
        raise VerificationError(
            "family contains a forbidden sunflower", pred=pred.describe(), witness=wit.as_report()
        )
    return {"pred": pred.describe(), "found": False}, None, None


def _op_max_free(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    pred = _pred(step)
    res = max_sunflower_free(
        F, pred, budget=_int(step, "budget", 2_000_000), symmetry=step.get("symmetry")
    )
    return res.as_report(), None, None


def _op_rt_spread(ctx, step):
    A = _handle(ctx, step, "domain", Domain)
    return check_rt_spread(A, _frac(step, "r"), _int(step, "core-size")).as_report(), None, None


def _op_homogeneous(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    A = _handle(ctx, step, "domain", Domain)
    return check_tau_homogeneous(F, A, _frac(step, "tau")).as_report(), None, None


def _op_spread_check(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    return check_spread(F, _frac(step, "R")).as_report(), None, None


def _op_mc(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    est = spread_lemma_mc(
        F,
        _frac(step, "R"),
        _int(step, "m"),
        _frac(step, "delta"),
        _int(step, "trials"),
        seed=ctx.step_seed,
        threads=ctx.threads,
        with_exact=bool(step.get("with-exact", False)),
    )
    return est.as_report(), None, None


def _op_measure(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    p = _frac(step, "p")
    return {"p": str(p), "value": str(biased_measure(F, p))}, None, None


def _op_global(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    verdict = check_global(F, _frac(step, "p"), _frac(step, "tau"))
    return verdict.as_report(), None, None


def _op_max_global(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    res = max_global_restriction(F, _frac(step, "p"), _frac(step, "tau"))
    return res.as_report(), None, None


def _op_stability(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    p, rho = _frac(step, "p"), _frac(step, "rho")
    return {"p": str(p), "rho": str(rho), "value": str(stability(F, p, rho))}, None, None


def _op_threshold(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    tau = _frac(step, "tau") if "tau" in step else None
    rep = verify_sharp_threshold(F, _frac(step, "p"), _frac(step, "p-tilde"), tau)
    return rep.as_report(), None, None


def _op_upgrade(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    rep = measure_upgrade(F, _frac(step, "p"), _frac(step, "tau"), _int(step, "z"), _int(step, "m"))
    return rep.as_report(), None, None


def _op_hyper(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    rep = hypercontractivity_check(
        F, _frac(step, "p"), _frac(step, "tau"), _frac(step, "rho"), _int(step, "q")
    )
    return rep.as_report(), None, None


def _op_uniform_floor(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    return check_uniform_biased_floor(F).as_report(), None, None


def _op_approx(ctx, step):
    name = _name(step)
    F = _handle(ctx, step, "family", SetFamily)
    A = _handle(ctx, step, "domain", Domain)
    floor = _frac(step, "floor") if "floor" in step else None
    D = spread_approximation(F, A, _frac(step, "tau"), _int(step, "q"), floor)
    return D.as_report(), name, D


def _op_simplify(ctx, step):
    name = _name(step)
    F = _handle(ctx, step, "family", SetFamily)
    A = _handle(ctx, step, "domain", Domain)
    res = simplify(F, A, _int(step, "petals"), _int(step, "core-size"), _frac(step, "eps"))
    return res.as_report(), name, res.core_family


def _op_cover(ctx, step):
    name = _name(step)
    F = _handle(ctx, step, "family", SetFamily)
    A = _handle(ctx, step, "domain", Domain)
    res = down_closed_cover(F, A, _int(step, "petals"), _int(step, "core-size"), _frac(step, "w"))
    return res.as_report(), name, res.core_family


def _op_reduce(ctx, step):
    name = _name(step)
    D = _handle(ctx, step, "decomposition", Decomposition)
    A = _handle(ctx, step, "domain", Domain)
    U = reduce_intersections(D, A, _int(step, "petals"), _int(step, "core-size"), _frac(step, "alpha"))
    return U.as_report(), name, U


def _op_cluster(ctx, step):
    U = _handle(ctx, step, "system", SystemSST)
    A = _handle(ctx, step, "domain", Domain)
    return cluster_system(U, A, _frac(step, "lam")).as_report(), None, None


def _op_peel(ctx, step):
    F = _handle(ctx, step, "family", SetFamily)
    res = peel_high_uniformity(F, _int(step, "petals"), _int(step, "core-size"))
    return res.as_report(), None, None


def _op_delta(ctx, step):
    name = _name(step)
    F = _handle(ctx, step, "family", SetFamily)
    res = delta_filter(F, _int(step, "petals"), _int(step, "core-size"))
    return res.as_report(), name, res.family


def _op_verify_instance(ctx, step):
    A = _handle(ctx, step, "domain", Domain)
    s, t = _int(step, "petals"), _int(step, "core-size")
    pred = None
    if "mode" in step or "core-bound" in step:
        pred = _pred(step, petals_key="petals")
    rep = verify_instance(A, s, t, pred=pred, budget=_int(step, "budget", 2_000_000))
    return rep, None, None


def _op_bound(ctx, step):
    name = step.get("bound")
    if not isinstance(name, str):
        raise ParseError("step key 'bound' must name a formula", op=step.get("op"))
    params = step.get("params", {})
    if not isinstance(params, dict):
        raise ParseError("step key 'params' must be an object", op=step.get("op"))
    return bound_rhs(name, params).as_report(), None, None


_OPS = {
    "domain": _op_domain,
    "family": _op_family,
    "product-kernel": _op_product_kernel,
    "example-23": _op_example_23,
    "fstar": _op_fstar,
    "phi": _op_phi,
    "find": _op_find,
    "assert-free": _op_assert_free,
    "max-free": _op_max_free,
    "rt-spread": _op_rt_spread,
    "homogeneous": _op_homogeneous,
    "spread-check": _op_spread_check,
    "mc": _op_mc,
    "measure": _op_measure,
    "global": _op_global,
    "max-global": _op_max_global,
    "stability": _op_stability,
    "threshold": _op_threshold,
    "upgrade": _op_upgrade,
    "hyper": _op_hyper,
    "uniform-floor": _op_uniform_floor,
    "approx": _op_approx,
    "simplify": _op_simplify,
    "cover": _op_cover,
    "reduce": _op_reduce,
    "cluster": _op_cluster,
    "peel": _op_peel,
    "delta": _op_delta,
    "verify-instance": _op_verify_instance,
    "bound": _op_bound,
}


# ---------------------------------------------------------------------------
# the runner


class _Context:
    def __init__(self, seed: int, threads: int):
        self.seed = seed
        self.threads = threads
        self.handles: dict[str, object] = {}
        self.step_seed = 0


def step_seed(scenario_seed: int, index: int) -> int:
    """Per-step seed, independent of every other step's."""
    digest = hashlib.sha256(f"sforge-scenario:{scenario_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def load_scenario(source) -> dict:
    """Parse and structurally validate a scenario from a path or a dict."""
    if isinstance(source, dict):
        obj = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ParseError(f"cannot read scenario: {exc}")
        except json.JSONDecodeError as exc:
            raise ParseError(f"scenario is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise ParseError("scenario must be a JSON object")
    if obj.get("schema") != SCHEMA:
        raise ParseError(f"scenario schema must be {SCHEMA}", found=obj.get("schema"))
    seed = obj.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ParseError("scenario seed must be an integer")
    steps = obj.get("steps", [])
    if not isinstance(steps, list):
        raise ParseError("scenario steps must be a list")
    for i, step in enumerate(steps):
        if not isinstance(step, dict):
            raise ParseError(f"step {i} is not an object")
        op = step.get("op")
        if op not in _OPS:
            raise ParseError(f"step {i} has unknown op {op!r}")
    return {"schema": SCHEMA, "seed": seed, "steps": steps}


def run_scenario(source, threads: int = 1) -> ScenarioResult:
    """Execute a scenario and return its report with the process exit code.

    The run stops at the first failing step; the report still carries every
    completed entry plus the error entry, so a failed run is as inspectable
    as a clean one.
    """
    scenario = load_scenario(source)
    ctx = _Context(scenario["seed"], threads)
    entries = []
    exit_code = 0
    for i, step in enumerate(scenario["steps"]):
        op = step["op"]
        ctx.step_seed = step_seed(ctx.seed, i)
        try:
            report, name, value = _OPS[op](ctx, step)
            if step.get("assert") and _report_failed(report):
                raise VerificationError("asserted check failed", op=op, step=i)
        except SforgeError as exc:
            entries.append({"step": i, "op": op, "error": exc.as_report()})
            exit_code = exc.exit_code
            break
        entry = {"step": i, "op": op, "report": report}
        if name is not None and value is not None:
            ctx.handles[name] = value
            entry["handle"] = name
        entries.append(entry)
    report = {"schema": SCHEMA, "seed": ctx.seed, "steps": entries}
    return ScenarioResult(report, exit_code)


def _report_failed(report: dict) -> bool:
    if report.get("ok") is False:
        return True
    if report.get("violation") is True:
        return True
    if report.get("found") is True:
        return True
    if report.get("violations"):
        return True
    return False
