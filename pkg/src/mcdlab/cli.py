"""``mcdlab`` command line: analyze, construct, crosscheck, sweep.

Exit codes: 0 success, 2 input or validation error, 3 solver stall,
4 internal invariant breach.  Errors are reported as JSON objects on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .confidence import BRACKET_TOL, InvariantError, confidence_report
from .constructions import (
    ConstructionError,
    WitnessFamily,
    ensemble_from_family,
    ensemble_from_witness,
    family_identity_residual,
    predicted_max_confidence,
    predicted_Q,
    witness_identity_residual,
)
from .cones import exactness_scope
from .ensemble import EnsembleError, load, load_operator, save
from .minerr import crosscheck_theorem5
from .report import Timer, analyze_report, crosscheck_to_json, dumps, file_digest, verify_report
from .sampling import random_ensemble
from .sdp import SolverStallError

EXIT_OK, EXIT_INPUT, EXIT_STALL, EXIT_INVARIANT = 0, 2, 3, 4
_STALLED = {"stalled", "infeasible", "unbounded"}


class ConfigError(ValueError):
    code = "config"


class CliError(Exception):
    def __init__(self, exit_code: int, code: str, message: str):
        super().__init__(message)
        self.exit_code, self.code, self.message = exit_code, code, message


def default_seed() -> int:
    raw = os.environ.get("MCDLAB_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_INPUT, "config", f"MCDLAB_SEED must be an integer, got {raw!r}") from None


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _summary(report: dict) -> str:
    lines = [f"dims {'x'.join(map(str, report['ensemble']['dims']))}, {report['ensemble']['n']} states, seed {report['seed']}"]
    for st in report["states"]:
        flag = {True: "nonlocal", False: "local", None: "undecided"}[st["nonlocal"]]
        lines.append(
            f"  j={st['j']}  C={st['C_j']:.12g}  Q=[{st['Q_lower']:.12g}, {st['Q_upper']:.12g}]"
            f"  {'exact' if st['exact'] else 'bracket'}  {flag}"
        )
    for c in report.get("crosscheck", []):
        if c["certified"]:
            lines.append(f"  j={c['j']}  two-state check: r={c['r']:.12g}  p_G={c['p_G']:.12g}  p_SEP=r")
    return "\n".join(lines)


def _load_ensemble(path: str):
    E = load(path)
    return E, file_digest(path)


def _check_j(j: int | None, n: int) -> list[int] | None:
    if j is None:
        return None
    if not 1 <= j <= n:
        raise CliError(EXIT_INPUT, "index", f"--j must lie in 1..{n}, got {j}")
    return [j - 1]


def _status_exit(report: dict, reps, E) -> tuple[int, list[str]]:
    problems = []
    if any(r.locc is not None and r.locc.solver_status in _STALLED and not r.exact
           and r.Q_upper - r.Q_lower > BRACKET_TOL for r in reps):
        return EXIT_STALL, ["solver stalled on a PPT program"]
    for st in report["states"]:
        problems += [f"j={st['j']}: {v}" for v in st["invariant_violations"]]
    problems += verify_report(json.loads(dumps(report)), E)
    return (EXIT_INVARIANT if problems else EXIT_OK), problems


def cmd_analyze(args) -> int:
    E, digest = _load_ensemble(args.file)
    timer = Timer()
    report, reps = analyze_report(
        E, path=args.file, digest=digest, js=_check_j(args.j, E.n), seed=args.seed, gap_tol=args.tol, timer=timer
    )
    code, problems = _status_exit(report, reps, E)
    report["problems"] = problems
    if args.timings:
        report["timings"] = timer.stages
    text = dumps(report)
    if args.json:
        _emit(text, args.json)
        print(_summary(report))
    else:
        _emit(text, None)
    if code == EXIT_STALL:
        raise CliError(code, "solver_stall", problems[0])
    if code == EXIT_INVARIANT:
        raise CliError(code, "invariant", "; ".join(problems))
    return EXIT_OK


def _construct_single(paths):
    if len(paths) != 1:
        raise CliError(EXIT_INPUT, "usage", "single mode takes exactly one witness file")
    W = load_operator(paths[0])
    E = ensemble_from_witness(W)
    info = {
        "mode": "single",
        "identity_residual": max(witness_identity_residual(W, E, q) for q in (0.25, 0.5, 0.75)),
    }
    return E, info, None


def _construct_family(paths):
    ws = [load_operator(p) for p in paths]
    F = WitnessFamily.verified(ws)
    if F.epsilon <= 0:
        raise ConstructionError(f"sum of witnesses is not positive definite (epsilon = {F.epsilon:.3g})")
    E = ensemble_from_family(F)
    info = {
        "mode": "family",
        "epsilon": F.epsilon,
        "lambdas": list(F.lambdas),
        "deltas": list(F.deltas),
        "identity_residual": max(family_identity_residual(F, E, j, q) for j in range(F.n) for q in (0.25, 0.5, 0.75)),
        "predicted": [
            {"j": j + 1, "C_j": predicted_max_confidence(F, j), "Q_j": predicted_Q(F, j),
             "Q_bound": F.lambdas[j] / (F.lam - F.epsilon)}
            for j in range(F.n)
        ],
    }
    return E, info, F


def _guarantees(report: dict, info: dict, exact: bool) -> list[str]:
    bad = []
    if info["identity_residual"] > 1e-12:
        bad.append(f"algebraic identity residual {info['identity_residual']:.3g}")
    states = report["states"]
    if info["mode"] == "single":
        st = states[0]
        if abs(st["C_j"] - 1) > 1e-9:
            bad.append(f"C_1 = {st['C_j']!r}, expected 1")
        if st["Q_lower"] > 0.5 + BRACKET_TOL or (exact and st["Q_upper"] > 0.5 + BRACKET_TOL):
            bad.append(f"Q_1 bracket [{st['Q_lower']}, {st['Q_upper']}] exceeds 1/2")
        return bad
    for st, pred in zip(states, info["predicted"]):
        if abs(st["C_j"] - pred["C_j"]) > 1e-8:
            bad.append(f"j={st['j']}: C_j = {st['C_j']!r}, closed form {pred['C_j']!r}")
        if st["Q_lower"] > pred["Q_bound"] + BRACKET_TOL:
            bad.append(f"j={st['j']}: Q_lower exceeds lambda_j/(lambda - eps)")
        if exact and pred["Q_j"] is not None and abs(st["Q_upper"] - pred["Q_j"]) > BRACKET_TOL:
            bad.append(f"j={st['j']}: Q_upper = {st['Q_upper']!r}, closed form {pred['Q_j']!r}")
        if not st["C_j"] > pred["Q_bound"] + 1e-9:
            bad.append(f"j={st['j']}: C_j does not exceed lambda_j/(lambda - eps)")
    return bad


def cmd_construct(args) -> int:
    build = _construct_single if args.mode == "single" else _construct_family
    E, info, _ = build(args.witness)
    save(E, args.out)
    report, reps = analyze_report(E, path=args.out, digest=file_digest(args.out), seed=args.seed, crosscheck=False)
    code, problems = _status_exit(report, reps, E)
    problems += _guarantees(report, info, exactness_scope(E.dims).is_exact)
    report["construction"] = info
    report["problems"] = problems
    _emit(dumps(report), args.json)
    if code == EXIT_STALL:
        raise CliError(code, "solver_stall", problems[0])
    if problems:
        raise CliError(EXIT_INVARIANT, "guarantee", f"ensemble written to {args.out} but: " + "; ".join(problems))
    return EXIT_OK


def cmd_crosscheck(args) -> int:
    E, digest = _load_ensemble(args.file)
    (j,) = _check_j(args.j, E.n)
    rep = confidence_report(E, j, seed=args.seed)
    check = crosscheck_theorem5(E, j, rep, seed=args.seed)
    out = {
        "schema_version": 1,
        "input": {"path": args.file, "sha256": digest},
        "seed": args.seed,
        "C_j": rep.C_j,
        "Q_upper": rep.Q_upper,
        "crosscheck": crosscheck_to_json(check, j),
    }
    _emit(dumps(out), args.json)
    return EXIT_OK


# --- sweep -------------------------------------------------------------------------

SWEEP_FIELDS = ["sample", "j", "dims", "n", "eta_j", "C_j", "Q_lower", "Q_upper", "gap", "exact", "nonlocal", "ordering_ok"]


def load_sweep_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    dims = cfg.get("dims")
    if not (isinstance(dims, list) and dims and all(isinstance(d, int) and d >= 1 for d in dims)):
        raise ConfigError("'dims' must be a nonempty list of positive integers")
    samples = cfg.get("samples")
    if not (isinstance(samples, int) and samples >= 1):
        raise ConfigError("'samples' must be a positive integer")
    n = cfg.get("n", 2)
    if isinstance(n, int):
        n = [n, n]
    if not (isinstance(n, list) and len(n) == 2 and all(isinstance(k, int) and k >= 1 for k in n) and n[0] <= n[1]):
        raise ConfigError("'n' must be a positive integer or a [min, max] pair")
    law = cfg.get("law", "mixed")
    if law not in ("mixed", "pure"):
        raise ConfigError("'law' must be 'mixed' or 'pure'")
    rank = cfg.get("rank")
    if rank is not None and not (isinstance(rank, int) and rank >= 1):
        raise ConfigError("'rank' must be a positive integer")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a nonnegative integer")
    return {"dims": dims, "samples": samples, "n": n, "law": law, "rank": rank, "seed": seed}


def _sweep_sample(task):
    index, seq, cfg, see_saw_seed = task
    t = time.perf_counter()
    rng = np.random.default_rng(seq)
    n = int(rng.integers(cfg["n"][0], cfg["n"][1] + 1))
    E = random_ensemble(cfg["dims"], n, rng, rank=cfg["rank"], pure=cfg["law"] == "pure")
    rows = []
    for j in range(E.n):
        rep = confidence_report(E, j, seed=see_saw_seed)
        rows.append({
            "sample": index,
            "j": j + 1,
            "dims": "x".join(map(str, E.dims)),
            "n": E.n,
            "eta_j": E.priors[j],
            "C_j": rep.C_j,
            "Q_lower": rep.Q_lower,
            "Q_upper": rep.Q_upper,
            "gap": rep.C_j - rep.Q_upper,
            "exact": rep.exact,
            "nonlocal": rep.nonlocal_,
            "ordering_ok": not rep.check_invariants(E.priors[j]),
        })
    seconds = time.perf_counter() - t
    for r in rows:
        r["seconds"] = seconds
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def run_sweep(cfg: dict, workers: int = 1, seed: int = 0, timings: bool = False) -> str:
    """CSV text, one row per (sample, j), ordered by sample index."""
    seqs = np.random.SeedSequence(cfg["seed"]).spawn(cfg["samples"])
    tasks = [(i, s, cfg, seed) for i, s in enumerate(seqs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_sample, tasks))
    else:
        results = [_sweep_sample(t) for t in tasks]
    fields = SWEEP_FIELDS + (["seconds"] if timings else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for rows in results:
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    cfg = load_sweep_config(args.config)
    workers = args.workers if args.workers is not None else min(os.cpu_count() or 1, cfg["samples"])
    text = run_sweep(cfg, max(1, workers), args.seed, args.timings)
    Path(args.out).write_text(text)
    bad = [line for line in text.splitlines()[1:] if line.split(",")[SWEEP_FIELDS.index("ordering_ok")] != "true"]
    if bad:
        raise CliError(EXIT_INVARIANT, "invariant", f"{len(bad)} rows violate the ordering chain")
    print(f"wrote {len(text.splitlines()) - 1} rows to {args.out}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=None, help="see-saw seed (default $MCDLAB_SEED or 0)")

    a = sub.add_parser("analyze", help="confidence report for an ensemble file")
    a.add_argument("file")
    a.add_argument("--j", type=int, default=None, help="1-based state index (default: all)")
    a.add_argument("--tol", type=float, default=None, help="gap threshold for the nonlocal flag (default 1e-6)")
    seeded(a)
    a.add_argument("--json", default=None, help="write the JSON report here and print a summary")
    a.add_argument("--timings", action="store_true", help="include wall-clock seconds per stage")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("construct", help="build an ensemble from witness files")
    c.add_argument("--mode", choices=["single", "family"], required=True)
    c.add_argument("witness", nargs="+")
    c.add_argument("--out", required=True, help="ensemble file to write")
    c.add_argument("--json", default=None, help="write the JSON report here instead of stdout")
    seeded(c)
    c.set_defaults(func=cmd_construct)

    x = sub.add_parser("crosscheck", help="two-state minimum-error cross-check")
    x.add_argument("file")
    x.add_argument("--j", type=int, required=True)
    x.add_argument("--json", default=None)
    seeded(x)
    x.set_defaults(func=cmd_crosscheck)

    s = sub.add_parser("sweep", help="random-ensemble sweep to CSV")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--timings", action="store_true", help="add a per-sample seconds column")
    seeded(s)
    s.set_defaults(func=cmd_sweep)
    return p


def _error(exit_code: int, code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "exit_code": exit_code, "message": message}}, sort_keys=True) + "\n")
    return exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except CliError as exc:
        return _error(exc.exit_code, exc.code, exc.message)
    except (EnsembleError, ConstructionError, ConfigError) as exc:
        return _error(EXIT_INPUT, getattr(exc, "code", "invalid_input"), str(exc))
    except SolverStallError as exc:
        return _error(EXIT_STALL, "solver_stall", str(exc))
    except InvariantError as exc:
        return _error(EXIT_INVARIANT, "invariant", str(exc))
    except OSError as exc:
        return _error(EXIT_INPUT, "io", str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
