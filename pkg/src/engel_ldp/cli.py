"""``engel-ldp`` command-line front end.

Output layout (schema ``engel-ldp/1``):

* JSON: one object per line.  The first line holds ``schema``, ``config`` (the
  parsed flags) and ``summary``; each following line is one data row.
* CSV: ``# schema=...``, ``# config=<json>`` and ``# summary=<json>`` comment
  lines, then a header row and data rows.

Big integers are written as decimal strings.  ``read_output`` parses both forms.

Exit codes: 0 success, 1 check failure, 2 usage or invalid parameters,
3 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

from . import acceptance, chains, dist, engel, experiments, ldp
from .chains import ProcessKind
from .errors import ResourceError
from .rng import RngStream

SCHEMA = "engel-ldp/1"
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

# flags that do not change results and are left out of the config echo
_NOT_ECHOED = {"output", "threads", "format", "handler"}


class CheckFailed(Exception):
    """Raised by a handler whose check failed; the output is still written."""

    def __init__(self, summary, rows=()):
        super().__init__(json.dumps(summary, sort_keys=True, default=str))
        self.summary = summary
        self.rows = list(rows)


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def render(config: dict, summary: dict, rows: "Sequence[dict]", fmt: str) -> str:
    if fmt == "json":
        lines = [json.dumps({"schema": SCHEMA, "config": config, "summary": summary}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in rows]
        return "\n".join(lines) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}\n")
    buf.write("# config=" + json.dumps(config, sort_keys=True) + "\n")
    buf.write("# summary=" + json.dumps(summary, sort_keys=True) + "\n")
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_csv_cell(r[c]) for c in cols])
    return buf.getvalue()


def read_output(text: str) -> tuple[dict, list[dict]]:
    """Parse ``render`` output back into ``(header, rows)``.

    CSV cells come back as strings.
    """
    if text.startswith("{"):
        lines = [json.loads(s) for s in text.splitlines() if s.strip()]
        head = lines[0]
        if head.get("schema") != SCHEMA:
            raise ValueError(f"unexpected schema {head.get('schema')!r}")
        return head, lines[1:]
    head: dict = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition("=")
            head[key] = val if key == "schema" else json.loads(val)
        else:
            body.append(line)
    if head.get("schema") != SCHEMA:
        raise ValueError(f"unexpected schema {head.get('schema')!r}")
    rows = list(csv.DictReader(body)) if body else []
    return head, rows


def _kind(args) -> ProcessKind:
    return ProcessKind(args.family, getattr(args, "initial", None))


def _float_list(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            # start:stop:step, stop inclusive
            a, b, *c = (int(v) for v in part.split(":"))
            out.extend(range(a, b + 1, c[0] if c else 1))
        elif part:
            out.append(int(part))
    return out


# --- handlers: each returns (summary, rows) ---------------------------------


def cmd_expand(args):
    x = engel.parse_rational(args.x)
    seq = engel.expand(x, args.kind, args.max_digits)
    summary = {
        "kind": seq.kind.value,
        "digits": [str(d) for d in seq.digits],
        "terminated": seq.terminated,
        "exact": engel.reconstruct(seq) == x,
    }
    return summary, []


def cmd_sample(args):
    kind = _kind(args)
    rows = []
    for p in range(args.paths):
        rng = RngStream(args.seed, p)
        if args.method == "williams":
            path = chains.sample_path_williams(kind, args.n, rng).path()
        else:
            path = chains.sample_path_transition(kind, args.n, rng, args.exact_bits)
        for step, s in enumerate(path.states):
            rows.append({"path": p, "step": step, "state": str(s), "log_state": math.log(s)})
    return {"kind": kind.label(), "paths": args.paths}, rows


def cmd_records(args):
    fh = sys.stdin if args.input == "-" else open(args.input)
    try:
        values = [float(tok) for line in fh for tok in line.split()]
    finally:
        if fh is not sys.stdin:
            fh.close()
    path = chains.record_times(values)
    rows = [{"k": k, "record_time": str(t)} for k, t in enumerate(path.states)]
    return {"length": len(values), "records": len(path.states)}, rows


def cmd_dp(args):
    d = dist.forward_dp(_kind(args), args.n, args.cap)
    rows = [{"state": str(j), "log_prob": lp} for j, lp in d.rows(args.min_log_prob)]
    summary = {
        "kind": d.kind.label(),
        "log_escaped": d.log_escaped,
        "log_tracked_mass": d.log_tracked_mass(),
    }
    return summary, rows


def cmd_tail(args):
    kind = _kind(args)
    lps = dist.tail_probs_lower(kind, _int_list(args.n), args.x, args.budget)
    rows = []
    for n, lp in sorted(lps.items()):
        rows.append({
            "n": n,
            "threshold": str(dist.lower_threshold(n, args.x, args.budget)),
            "log_prob": lp,
            "rate_estimate": -lp / n,
        })
    return {"kind": kind.label()}, rows


def cmd_mgf(args):
    res = dist.log_mgf(_kind(args), args.n, args.theta, args.cap)
    out = res.to_json()
    out["rate"] = res.rate
    return out, []


def cmd_lemma1(args):
    rows = []
    bad = 0
    for j in _int_list(args.j):
        for t in _float_list(args.theta):
            b = dist.lemma1_bracket(j, t, args.truncation)
            bad += not b.holds
            rows.append(b.to_json())
    summary = {"cases": len(rows), "violations": bad}
    if bad:
        raise CheckFailed(summary, rows)
    return summary, rows


def _rate_spec(args):
    return ldp.RateFunctionSpec(args.family, args.a)


def cmd_rate(args):
    spec = _rate_spec(args)
    rows = [{"x": x, "rate": ldp.rate(spec, x)} for x in _float_list(args.x)]
    return {"family": spec.family, "a": spec.a}, rows


def cmd_mgf_closed(args):
    rows = [{"theta": t, "log_mgf": ldp.log_mgf_closed(args.family, t)} for t in _float_list(args.theta)]
    return {"family": args.family.upper()}, rows


def cmd_legendre(args):
    fam = args.family.upper()
    lam = ldp.lambda_c if fam == "C" else ldp.lambda_a
    rate_fn = ldp.rate_c if fam == "C" else ldp.rate_a
    rows = []
    for x in _float_list(args.x):
        r = ldp.legendre_numeric(lam, x, (args.theta_min, args.theta_max), args.grid)
        exact = rate_fn(x)
        rows.append({
            "x": x,
            "supremum": r.supremum,
            "argmax_theta": r.argmax_theta,
            "closed_form": exact,
            "abs_err": abs(r.supremum - exact) if math.isfinite(exact) else None,
        })
    return {"family": fam}, rows


def cmd_compare(args):
    count = int(round((args.x_max - args.x_min) / args.step)) + 1
    grid = [round(args.x_min + k * args.step, 12) for k in range(count)]
    rows = [{"x": x, "I_C": c, "I_A": a, "gap": g} for x, c, a, g in ldp.compare_rates(grid)]
    return {"points": len(rows)}, rows


def _estimates(args):
    kind = _kind(args)
    ns = _int_list(args.n)
    if args.method == "dp":
        if args.side != "lower":
            raise ValueError("the exact DP route covers lower tails only")
        x = _float_list(args.x)
        if len(x) != 1:
            raise ValueError("the DP route takes a single x")
        return experiments.estimate_tails_dp(kind, ns, x[0], args.budget)
    if args.seed is None:
        raise ValueError("--seed is required for Monte Carlo")
    out = []
    xs = _float_list(args.x)
    for n in ns:
        rng = RngStream(args.seed, n)
        out.extend(experiments.estimate_tails_mc(kind, n, xs, args.side.upper(), args.replicas, rng, args.threads))
    return out


def _est_row(e) -> dict:
    r = e.to_row()
    r["rate_estimate"] = -e.log_prob / e.n if math.isfinite(e.log_prob) else None
    return r


def cmd_estimate(args):
    ests = _estimates(args)
    return {"estimates": len(ests)}, [_est_row(e) for e in ests]


def cmd_fit(args):
    ests = _estimates(args)
    xs = sorted({e.x for e in ests})
    summary = {"fits": []}
    for x in xs:
        fit = experiments.fit_rate([e for e in ests if e.x == x])
        summary["fits"].append({
            "x": x,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "stderr": fit.stderr,
            "two_point_slope": fit.two_point_slope,
            "rate": ldp.rate(ldp.RateFunctionSpec(args.family, args.initial if args.family.upper() == "A" else None), x),
        })
    return summary, [_est_row(e) for e in ests]


def _check_p(res, alpha):
    summary = res.to_json()
    summary["alpha"] = alpha
    summary["passed"] = res.p_value > alpha
    return summary


def cmd_gof(args):
    kind = _kind(args)
    res = experiments.gof_transition(kind, args.i, args.samples, RngStream(args.seed, 0), args.bins, args.source)
    rows = [{"bin": k, "observed": int(o), "expected": float(e)}
            for k, (o, e) in enumerate(zip(res.observed, res.expected))]
    summary = _check_p(res, args.alpha)
    if not summary["passed"]:
        raise CheckFailed(summary, rows)
    return summary, rows


def cmd_xval(args):
    res = experiments.cross_validate_samplers(_kind(args), args.n, args.replicas, RngStream(args.seed, 0), args.against)
    summary = _check_p(res, args.alpha)
    if not summary["passed"]:
        raise CheckFailed(summary)
    return summary, []


def cmd_gap(args):
    rows = experiments.williams_gap_report(_int_list(args.n), args.paths, RngStream(args.seed, 0))
    return {"monitored": True}, rows


# --- parser ------------------------------------------------------------------


def _positive(v: str) -> int:
    k = int(v)
    if k < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def _add_common(p, stochastic=False, seed_required=True):
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--output", help="write here instead of stdout")
    if stochastic:
        p.add_argument("--seed", type=int, required=seed_required)
        p.add_argument("--threads", type=_positive, default=1)


def _add_kind(p):
    p.add_argument("--family", type=str.upper, choices=["C", "A"], required=True)
    p.add_argument("--initial", type=_positive, help="C_0 (default 1) or A_0 (default 2)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="engel-ldp", description="Engel expansions, digit chains and their large deviations.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="exact Engel / modified Engel digits of a rational")
    p.add_argument("--kind", type=engel.ExpansionKind.parse, default=engel.ExpansionKind.ENGEL,
                   help="engel or modified")
    p.add_argument("--x", required=True, help="rational p/q in (0,1)")
    p.add_argument("--max-digits", type=_positive, default=200)
    _add_common(p)
    p.set_defaults(handler=cmd_expand)

    p = sub.add_parser("sample", help="sample process paths")
    _add_kind(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--paths", type=_positive, default=1)
    p.add_argument("--method", choices=["transition", "williams"], default="transition")
    p.add_argument("--exact-bits", type=_positive, help="use k-bit exact uniforms")
    _add_common(p, stochastic=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("records", help="record times of a stream of reals")
    p.add_argument("--input", default="-", help="file of whitespace-separated reals, '-' for stdin")
    _add_common(p)
    p.set_defaults(handler=cmd_records)

    p = sub.add_parser("dp", help="exact truncated law of X_n")
    _add_kind(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cap", type=_positive, required=True)
    p.add_argument("--min-log-prob", type=float, default=-math.inf)
    _add_common(p)
    p.set_defaults(handler=cmd_dp)

    p = sub.add_parser("tail", help="exact lower-tail log P(log X_n <= n(1+x))")
    _add_kind(p)
    p.add_argument("--n", required=True, help="comma list, a:b[:step] ranges allowed")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--budget", type=_positive, default=dist.DEFAULT_STATE_BUDGET)
    _add_common(p)
    p.set_defaults(handler=cmd_tail)

    p = sub.add_parser("mgf", help="bracketed log E(X_n^theta), theta <= 0")
    _add_kind(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--cap", type=_positive, default=1_000_000)
    _add_common(p)
    p.set_defaults(handler=cmd_mgf)

    p = sub.add_parser("lemma1", help="bracket of the one-step moment sum")
    p.add_argument("--j", required=True, help="comma list of states")
    p.add_argument("--theta", required=True, help="comma list of exponents < 1")
    p.add_argument("--truncation", type=_positive)
    _add_common(p)
    p.set_defaults(handler=cmd_lemma1)

    p = sub.add_parser("rate", help="closed-form rate function")
    p.add_argument("--family", type=str.upper, choices=["C", "A"], required=True)
    p.add_argument("--a", type=int, help="A_0 for family A")
    p.add_argument("--x", required=True, help="comma list")
    _add_common(p)
    p.set_defaults(handler=cmd_rate)

    p = sub.add_parser("mgf-closed", help="limiting scaled log-MGF")
    p.add_argument("--family", type=str.upper, choices=["C", "A"], required=True)
    p.add_argument("--theta", required=True, help="comma list")
    _add_common(p)
    p.set_defaults(handler=cmd_mgf_closed)

    p = sub.add_parser("legendre", help="numeric conjugate of the limiting log-MGF")
    p.add_argument("--family", type=str.upper, choices=["C", "A"], required=True)
    p.add_argument("--x", required=True, help="comma list")
    p.add_argument("--theta-min", type=float, default=-100.0)
    p.add_argument("--theta-max", type=float, default=100.0)
    p.add_argument("--grid", type=int, default=401)
    _add_common(p)
    p.set_defaults(handler=cmd_legendre)

    p = sub.add_parser("compare", help="I_C, I_A and their gap on a grid")
    p.add_argument("--x-min", type=float, default=-1.5)
    p.add_argument("--x-max", type=float, default=4.0)
    p.add_argument("--step", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(handler=cmd_compare)

    for name, handler, helptext in (
        ("estimate", cmd_estimate, "tail probability estimates"),
        ("fit", cmd_fit, "rate fit from tail estimates"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_kind(p)
        p.add_argument("--n", required=True, help="comma list, a:b[:step] ranges allowed")
        p.add_argument("--x", required=True, help="comma list (one value for dp)")
        p.add_argument("--side", choices=["lower", "upper"], default="upper")
        p.add_argument("--method", choices=["mc", "dp"], default="mc")
        p.add_argument("--replicas", type=_positive, default=100_000)
        p.add_argument("--budget", type=_positive, default=dist.DEFAULT_STATE_BUDGET)
        _add_common(p, stochastic=True, seed_required=False)
        p.set_defaults(handler=handler)

    p = sub.add_parser("gof", help="chi-square test of one-step moves")
    _add_kind(p)
    p.add_argument("--i", type=_positive, required=True)
    p.add_argument("--samples", type=_positive, default=100_000)
    p.add_argument("--source", choices=["transition", "williams", "records", "digits"], default="transition")
    p.add_argument("--bins", type=_positive)
    p.add_argument("--alpha", type=float, default=0.001)
    _add_common(p, stochastic=True)
    p.set_defaults(handler=cmd_gof)

    p = sub.add_parser("xval", help="cross-validate samplers at step n")
    _add_kind(p)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--replicas", type=_positive, default=100_000)
    p.add_argument("--against", choices=["williams", "exact"], default="williams")
    p.add_argument("--alpha", type=float, default=0.001)
    _add_common(p, stochastic=True)
    p.set_defaults(handler=cmd_xval)

    p = sub.add_parser("gap", help="quantiles of the coupling gaps")
    p.add_argument("--n", required=True, help="comma list")
    p.add_argument("--paths", type=_positive, default=10_000)
    _add_common(p, stochastic=True)
    p.set_defaults(handler=cmd_gap)

    p = sub.add_parser("acceptance", help="run the acceptance suite")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--only", help="comma list of criterion numbers")
    p.add_argument("--output", help="summary CSV path (stdout if omitted)")
    p.set_defaults(handler=None)
    return ap


def _config(args) -> dict:
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_ECHOED:
            continue
        if isinstance(v, float) and not math.isfinite(v):
            v = repr(v)
        elif hasattr(v, "value"):
            v = v.value
        cfg[k] = v
    return cfg


def _write(text: str, path) -> None:
    if path:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_acceptance(args) -> int:
    only = set(_int_list(args.only)) if args.only else None
    results = acceptance.run_all(args.seed, only)
    _write(acceptance.summary_csv(results, args.seed), args.output)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def main(argv: "Sequence[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "acceptance":
        return _run_acceptance(args)
    status = EXIT_OK
    try:
        summary, rows = args.handler(args)
    except CheckFailed as exc:
        print(f"engel-ldp: check failed: {exc}", file=sys.stderr)
        summary, rows, status = exc.summary, exc.rows, EXIT_CHECK
    except ResourceError as exc:
        print(f"engel-ldp: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, IndexError, OSError) as exc:
        print(f"engel-ldp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write(render(_config(args), summary, rows, args.format), args.output)
    return status


if __name__ == "__main__":
    sys.exit(main())
