"""``mbspovm`` command-line interface.

Every subcommand prints one JSON document on stdout. Failures print a JSON
error object on stderr and exit with 2 (invalid input) or 3 (solver did not
converge). Commands that write files also write a run manifest next to them.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .errors import SolverNotConverged, ValidationError

SEED_ENV = "MBSPOVM_SEED"
BUILTIN = "builtin"
DEFAULT_BOUND = 62.5152


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, default=_json_default)


def write_manifest(path: Path, command: str, args: argparse.Namespace, inputs, outputs, wall_time: float) -> None:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": _version(),
        "wall_time_s": wall_time,
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default))


# --- loaders -----------------------------------------------------------------


def _load_unitary(spec: str, clean: bool):
    from .mbs import MultiportUnitary, builtin_matrices
    from .quantum_core import matrix_from_json, nearest_unitary

    if spec.startswith(BUILTIN + ":"):
        name = spec.split(":", 1)[1]
        data = builtin_matrices()
        if name not in ("U4", "U7"):
            raise ValidationError(f"unknown builtin unitary {name!r} (choose U4 or U7)")
        u = data[name]
    else:
        doc = json.loads(Path(spec).read_text())
        m = matrix_from_json(doc["matrix"] if "matrix" in doc else doc)
        label = doc.get("label", Path(spec).stem)
        if clean:
            return MultiportUnitary(nearest_unitary(m), label + " (nearest unitary)")
        u = MultiportUnitary(m, label, doc.get("data_tolerance", 1e-8))
    if clean:
        u = MultiportUnitary(nearest_unitary(u.matrix), u.label + " (nearest unitary)")
    return u


def _load_strategy(spec: str):
    from .game import load_strategy, protocol_strategy

    return protocol_strategy() if spec == BUILTIN else load_strategy(spec)


def _load_tables(spec: str):
    """Probability tables from a builtin name, a probability CSV or a count CSV."""
    from .game import tables_from_csv
    from .stats import CSV_HEADER as COUNT_HEADER
    from .stats import counts_to_probabilities, golden_tables, load_counts

    if spec.startswith(BUILTIN):
        name = spec.split(":", 1)[1] if ":" in spec else "experiment"
        tables = golden_tables()
        if name not in tables:
            raise ValidationError(f"unknown builtin tables {name!r} (choose theory or experiment)")
        return tables[name]
    text = Path(spec).read_text()
    header = text.splitlines()[0].strip().split(",") if text else []
    if header == COUNT_HEADER:
        return counts_to_probabilities(load_counts(spec))
    return tables_from_csv(text)


# --- commands ----------------------------------------------------------------


def cmd_enumerate_povms(args):
    from .mbs import (
        PovmSpec,
        build_povm,
        builtin_matrices,
        canonical_rank1_form,
        enumerate_subsets,
        max_element_distance,
        povm_from_block,
    )
    from .quantum_core import is_projective, ket_to_json, matrix_to_json

    u = _load_unitary(args.unitary, args.nearest_unitary)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = builtin_matrices()
    files, rows = [], []
    for subset in enumerate_subsets(u.ports, args.dim):
        povm = build_povm(u, PovmSpec(subset))
        form = canonical_rank1_form(povm)
        name = out / ("povm_" + "".join(str(k) for k in subset) + ".json")
        name.write_text(
            json.dumps(
                {
                    "unitary": u.label,
                    "subset": list(subset),
                    "elements": [matrix_to_json(e) for e in povm],
                    "weights": form.weights.tolist(),
                    "directions": [ket_to_json(v) for v in form.directions],
                },
                indent=1,
            )
        )
        files.append(name)
        row = {
            "subset": list(subset),
            "completeness_residual": povm.completeness_residual,
            "projective": is_projective(povm),
        }
        block = data["blocks"].get(tuple(subset)) if u.ports == 7 and args.dim == 4 else None
        if block is not None:
            printed = povm_from_block(block, tol=data["data_tolerance"])
            dist = max_element_distance(printed, povm)
            row["distance_to_builtin"] = dist
            row["equivalent_to_builtin"] = dist <= data["data_tolerance"]
            # printed blocks and rebuilt kets may differ by per-column phases only
            row["columnwise_phase_difference"] = float(
                np.max(np.abs(block - u.matrix.conj().T[[k - 1 for k in subset], :]))
            )
        rows.append(row)
    report = {
        "unitary": u.label,
        "unitarity_deviation": u.deviation,
        "dim": args.dim,
        "count": len(files),
        "max_completeness_residual": max(r["completeness_residual"] for r in rows),
        "all_equivalent_to_builtin": all(r.get("equivalent_to_builtin", True) for r in rows),
        "povms": rows,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=1, default=_json_default))
    files.append(report_path)
    summary = {k: v for k, v in report.items() if k != "povms"}
    summary["out"] = str(out)
    return summary, [], files, out / "manifest.json"


def cmd_score(args):
    from .game import score, score_breakdown, score_from_probabilities

    if args.tables:
        t = _load_tables(args.tables)
        w, sigma = score_from_probabilities(t)
        return {"W": w, "sigma": sigma, "source": args.tables}, [args.tables], [], None
    s = _load_strategy(args.strategy)
    tables = score_breakdown(s)
    doc = {
        "W": score(s),
        "source": args.strategy,
        "proj": tables.proj.tolist(),
        "povm": tables.povm.tolist(),
    }
    return doc, [args.strategy], [], None


def cmd_seesaw(args):
    from .game import save_strategy
    from .seesaw import Mode, SeesawConfig, run_seesaw

    initial = _load_strategy(args.initial) if args.initial else None
    final = None
    if args.final:
        final = _load_strategy(args.final).final
    config = SeesawConfig(
        mode=Mode(args.mode),
        restarts=args.restarts,
        max_iters=args.max_iters,
        tol=args.tol,
        rng_seed=args.seed,
        final_povm=final,
    )
    trace = run_seesaw(config, initial)
    doc = trace.to_json()
    doc["mode"] = config.mode.value
    doc["seed"] = args.seed
    outputs, manifest = [], None
    if args.out:
        out = Path(args.out)
        save_strategy(trace.strategy, out)
        outputs.append(out)
        manifest = out.with_name(out.stem + ".manifest.json")
    inputs = [p for p in (args.initial, args.final) if p]
    return doc, inputs, outputs, manifest


def cmd_bound(args):
    from .nv_bound import compute_upper_bound

    report = compute_upper_bound(args.samples, args.seed, word_set=args.word_set, real=not args.complex)
    doc = report.to_json()
    outputs, manifest = [], None
    if args.out:
        out = Path(args.out)
        out.write_text(json.dumps(doc, indent=1, sort_keys=True))
        outputs.append(out)
        manifest = out.with_name(out.stem + ".manifest.json")
    return doc, [], outputs, manifest


def cmd_simulate(args):
    from .photonics import NoiseModel, simulate_counts
    from .stats import save_counts, sidecar_path

    s = _load_strategy(args.strategy)
    noise = NoiseModel(mu=args.mu, shots=args.shots, visibility=args.visibility, phase_jitter=args.jitter)
    table = simulate_counts(s, noise, args.seed)
    table.metadata["seed"] = args.seed
    table.metadata["strategy"] = args.strategy
    out = Path(args.out)
    save_counts(table, out)
    doc = {
        "out": str(out),
        "settings": len(table.settings()),
        "total_counts": int(sum(r.counts for r in table.records)),
        "metadata": table.metadata,
    }
    return doc, [args.strategy], [out, sidecar_path(out)], out.with_name(out.stem + ".manifest.json")


def cmd_certify(args):
    from .stats import certify

    t = _load_tables(args.tables)
    c = certify(t, args.bound, args.threshold)
    return c.to_json(), [args.tables], [], None


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbspovm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate-povms", help="all POVMs of a multiport unitary")
    e.add_argument("--unitary", default="builtin:U7", help="builtin:U4, builtin:U7 or a matrix JSON file")
    e.add_argument("--dim", type=int, default=4)
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--nearest-unitary", action="store_true", help="replace the matrix by its polar factor first")
    e.set_defaults(func=cmd_enumerate_povms)

    s = sub.add_parser("score", help="game score of a strategy or of probability tables")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--strategy", default=BUILTIN, help="strategy JSON or 'builtin'")
    g.add_argument("--tables", help="probability or count CSV, or builtin:theory / builtin:experiment")
    s.set_defaults(func=cmd_score)

    w = sub.add_parser("seesaw", help="see-saw lower bound")
    w.add_argument("--mode", choices=["fixed_final", "projective_relaxed", "free"], default="free")
    w.add_argument("--restarts", type=int, default=50)
    w.add_argument("--max-iters", type=int, default=500)
    w.add_argument("--tol", type=float, default=1e-9)
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--initial", help="strategy JSON to start the first restart from")
    w.add_argument("--final", help="strategy JSON whose final measurement is frozen (fixed_final)")
    w.add_argument("--out", help="write the best strategy here")
    w.set_defaults(func=cmd_seesaw)

    b = sub.add_parser("bound", help="moment-matrix upper bound for projective strategies")
    b.add_argument("--samples", type=int, default=2000, help="sample budget")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--word-set", choices=["full", "diagonal"], default="full")
    b.add_argument("--complex", action="store_true", help="sample complex moment matrices (solved through their real parts)")
    b.add_argument("--out", help="write the report here")
    b.set_defaults(func=cmd_bound)

    m = sub.add_parser("simulate", help="simulate detector counts")
    m.add_argument("--strategy", default=BUILTIN)
    m.add_argument("--shots", type=int, default=10_000)
    m.add_argument("--visibility", type=float, default=0.997)
    m.add_argument("--jitter", type=float, default=0.0, help="phase jitter sigma (rad)")
    m.add_argument("--mu", type=float, default=0.2)
    m.add_argument("--seed", type=int, default=None)
    m.add_argument("--out", required=True, help="count CSV path")
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="significance of the violation of the projective bound")
    c.add_argument("--tables", default="builtin:experiment")
    c.add_argument("--bound", type=float, default=DEFAULT_BOUND)
    c.add_argument("--threshold", type=float, default=0.01)
    c.set_defaults(func=cmd_certify)
    return p


def _fail(kind: str, exc: Exception, code: int, **extra) -> int:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    doc.update(extra)
    print(_dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        doc, inputs, outputs, manifest = args.func(args)
        if manifest is not None:
            write_manifest(Path(manifest), args.command, args, inputs, outputs, time.perf_counter() - start)
    except SolverNotConverged as exc:
        return _fail("solver_not_converged", exc, 3, residuals=exc.residuals)
    except (ValidationError, OSError, KeyError, json.JSONDecodeError) as exc:
        return _fail("validation", exc, 2)
    print(_dumps(doc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
