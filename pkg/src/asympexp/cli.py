"""``asympexp`` command line front end.

Exit codes: 0 success, 1 the analysis found a refutation or a failed
check, 2 usage or input error, 3 an internal size limit was hit.
"""

from __future__ import annotations

import argparse
import io as _io
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import io as aio
from ._parallel import THREADS_ENV, resolve_threads
from ._subsets import MAX_EXACT_DEFAULT
from .coarse import boundary_transfer_check, distortion_check, estimate_moduli, pullback_bound_check, transfer_refutation
from .errors import AsympExpError, DensityViolated, ExactTooLarge, FormatError, NotConverged
from .expansion import (
    certificate_from_report,
    default_radii,
    expansion_profile,
    ql_equivalence_audit,
    separated_product,
)
from .generators import GeneratorSpec, family_sequence, glued_sequence, interleaved_counterexample
from .jacobi import jacobi_eigh
from .linalg import KERNEL_TOL, discrete_laplacian, poincare_constant
from .space import SpaceSequence
from .ula import non_ula_certificate

EXIT_OK, EXIT_FOUND, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- parsing helpers


def _fraction(s: str) -> Fraction:
    try:
        return Fraction(s.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from exc


def _fraction_list(s: str) -> list[Fraction]:
    return [_fraction(t) for t in s.split(",") if t.strip()]


def _radius_list(s: str) -> list[float]:
    """``1,2,5`` or ranges such as ``1..4``."""
    out: list[float] = []
    for t in s.split(","):
        t = t.strip()
        if not t:
            continue
        if ".." in t:
            lo, hi = t.split("..", 1)
            try:
                a, b = int(lo), int(hi)
            except ValueError as exc:
                raise argparse.ArgumentTypeError(f"ranges need integer ends: {t!r}") from exc
            out.extend(float(r) for r in range(a, b + 1))
        else:
            out.append(float(_fraction(t)))
    if not out:
        raise argparse.ArgumentTypeError("empty radius list")
    return out


def _int_list(s: str) -> list[int]:
    try:
        return [int(t) for t in s.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer list: {s!r}") from exc


# ---------------------------------------------------------------- output


class Run:
    """Collects outputs and manifest data for one command."""

    def __init__(self, args: argparse.Namespace, argv: Sequence[str]):
        self.args = args
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.started = time.perf_counter()

    def read(self, path: str) -> str:
        self.inputs[path] = aio.sha256_file(path) if Path(path).is_file() else ""
        return path

    def emit(self, text: str, path: str | None) -> None:
        if path is None or path == "-":
            sys.stdout.write(text)
            return
        Path(path).write_text(text)
        self.outputs.append(path)

    def manifest(self, code: int) -> dict:
        a = self.args
        flags = {k: getattr(a, k) for k in ("mode", "max_exact", "size_gate") if hasattr(a, k)}
        flags["threads"] = resolve_threads(a.threads)
        seeds = [a.seed] if getattr(a, "seed", None) is not None else []
        return {
            "format": "amrun-v1",
            "command": self.argv,
            "seeds": seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "toolVersion": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "modeFlags": flags,
            "exitCode": code,
            "wallTime": time.perf_counter() - self.started,
        }

    def write_manifest(self, code: int) -> None:
        path = self.args.manifest
        if path is None and self.outputs:
            path = self.outputs[0] + ".manifest.json"
        text = aio.dumps(self.manifest(code))
        if path is None:
            sys.stderr.write(text)
        else:
            Path(path).write_text(text)


def _check_limit(S: SpaceSequence, mode: str, max_exact: int) -> None:
    from ._subsets import check_exact

    if mode == "exact":
        for p in S.pieces:
            check_exact(p.n, max_exact)


# ---------------------------------------------------------------- commands


def cmd_gen(run: Run) -> int:
    a = run.args
    fam = a.family
    if a.degree < 1:
        raise UsageError(f"degree must be positive, got {a.degree}")
    if fam == "interleaved":
        if a.out is None:
            raise UsageError("gen --family interleaved needs --out PREFIX")
        X, Y, m = interleaved_counterexample(a.count, a.degree, a.seed)
        spec = GeneratorSpec(fam, {"count": a.count, "degree": a.degree, "seed": a.seed}).to_json()
        run.emit(aio.dumps(aio.space_to_json(X, spec)), a.out + ".X.json")
        run.emit(aio.dumps(aio.space_to_json(Y, spec)), a.out + ".Y.json")
        run.emit(aio.dumps(aio.map_to_json(m)), a.out + ".map.json")
        return EXIT_OK
    if not a.sizes:
        raise UsageError("--sizes is required")
    try:
        if fam == "glued":
            S, parts = glued_sequence(a.sizes, a.base, a.small, a.degree, a.seed, a.small_sizes)
            params = {"base": a.base, "small": a.small, "sizes": a.sizes, "smallSizes": [f for _, f in parts],
                      "degree": a.degree, "seed": a.seed}
        else:
            S = family_sequence(fam, a.sizes, a.degree, a.seed)
            params = {"sizes": a.sizes, "degree": a.degree, "seed": a.seed}
    except (ValueError, AsympExpError) as exc:
        if isinstance(exc, AsympExpError) and not isinstance(exc, ValueError):
            raise
        raise UsageError(str(exc)) from exc
    run.emit(aio.dumps(aio.space_to_json(S, GeneratorSpec(fam, params).to_json())), a.out)
    return EXIT_OK


def cmd_expansion(run: Run) -> int:
    a = run.args
    S = aio.load_space(run.read(a.file))
    _check_limit(S, a.mode, a.max_exact)
    R_list = a.r or default_radii(S)
    rep = expansion_profile(S, a.alpha, R_list, a.mode, a.max_exact, a.threads)
    run.emit(rep.to_csv(), a.out)
    code = EXIT_OK
    if a.c is not None:
        verdicts = []
        for al in a.alpha:
            for R in R_list:
                cert = certificate_from_report(rep, len(S), al, a.c, R, a.mode)
                verdicts.append(cert.to_json())
                if cert.verdict == "Refuted":
                    code = EXIT_FOUND
        run.emit(aio.dumps({"mode": a.mode, "windowRule": rep.window_rule, "verdicts": verdicts}), a.verdicts or _sibling(a.out, ".verdicts.json"))
    return code


def _sibling(out: str | None, suffix: str) -> str | None:
    return None if out is None or out == "-" else out + suffix


def cmd_qlprofile(run: Run) -> int:
    a = run.args
    S = aio.load_space(run.read(a.file))
    _check_limit(S, a.mode, a.max_exact)
    R_list = a.r or default_radii(S)
    sep = separated_product(S, R_list, a.mode, a.max_exact, a.threads)
    audit = ql_equivalence_audit(S, R_list, a.mode, a.max_exact, a.threads)
    import csv

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["piece", "R", "maxProduct", "normalized", "sqrtProductOverSize", "propagation", "agree",
                "witnessA", "witnessB", "mode"])
    for s, q in zip(sep.rows, audit.rows):
        w.writerow([s.piece, format(s.R, ".17g"), s.max_product, format(s.normalized, ".17g"),
                    format(q.separation, ".17g"), format(q.propagation, ".17g"), "true" if q.ok else "false",
                    " ".join(map(str, s.witness_a)), " ".join(map(str, s.witness_b)), s.mode])
    run.emit(buf.getvalue(), a.out)
    return EXIT_OK if audit.ok else EXIT_FOUND


def cmd_spectral(run: Run) -> int:
    a = run.args
    S = aio.load_space(run.read(a.file))
    lap = discrete_laplacian(S)
    consts = poincare_constant(S, a.threads)
    from ._parallel import pmap

    def one(k: int) -> dict:
        n = S.pieces[k].n
        w, v = jacobi_eigh(lap.block(k))
        ker = np.abs(w) <= KERNEL_TOL
        q = v[:, ker]
        resid = float(np.abs(q @ q.T - np.full((n, n), 1.0 / n)).max())
        above = w[w > KERNEL_TOL]
        return {
            "piece": k,
            "n": n,
            "eigenvalues": [float(x) for x in w],
            "spectralGap": float(above.min()) if above.size else None,
            "kernelDim": int(ker.sum()),
            "kernelResidual": resid,
            "poincareConstant": consts[k],
        }

    pieces = pmap(one, range(len(S)), a.threads)
    run.emit(aio.dumps({"kernelTol": KERNEL_TOL, "pieces": pieces}), a.out)
    return EXIT_OK


def cmd_ula(run: Run) -> int:
    a = run.args
    S = aio.load_space(run.read(a.file))
    certs = non_ula_certificate(S, a.r, a.c, a.size_gate, a.s_values, a.max_exact, a.threads)
    out = {"R": a.r, "c": float(a.c), "eps": float(1 / a.c - 1), "certificates": [c.to_json() for c in certs]}
    run.emit(aio.dumps(out), a.out)
    return EXIT_OK if all(c.certified for c in certs) else EXIT_FOUND


def _default_witnesses(Y: SpaceSequence, pieces, alpha, R, c, mode, max_exact) -> list[dict]:
    found = []
    for k in pieces:
        p = Y.pieces[k]
        pm = mode if mode != "auto" else ("exact" if p.n <= max_exact else "heuristic")
        row = expansion_profile(p, [alpha], [R], pm, max_exact).rows[0]
        if row.vacuous or row.boundary * c.denominator > c.numerator * row.size:
            continue
        found.append({"codomainPiece": int(k), "B": [int(Y.offsets[k]) + j for j in row.witness],
                      "ratio": row.min_ratio, "mode": pm})
    return found


def cmd_coarse(run: Run) -> int:
    a = run.args
    X = aio.load_space(run.read(a.space_x))
    Y = aio.load_space(run.read(a.space_y))
    m = aio.load_map(run.read(a.map), X, Y)
    mod = estimate_moduli(m)
    if a.witnesses is not None:
        raw = aio.read_json(run.read(a.witnesses))
        if not isinstance(raw, list) or any(not isinstance(b, list) for b in raw):
            raise FormatError("witness file must be a list of global codomain point lists")
        wit = [{"codomainPiece": int(Y.piece_index[b[0]]) if b else -1, "B": [int(x) for x in b], "ratio": None, "mode": "given"}
               for b in raw]
    else:
        touched = sorted({int(k) for n in range(len(X)) for k in m.touched(n)})
        if a.witness_pieces is not None:
            bad = sorted(set(a.witness_pieces) - set(touched))
            if bad:
                raise UsageError(f"codomain pieces {bad} are not hit by the map")
            touched = sorted(set(a.witness_pieces))
        wit = _default_witnesses(Y, touched, a.alpha, a.r, a.c, a.mode, a.max_exact)
    Bs = [w["B"] for w in wit]
    pull, bdry = [], []
    for B in Bs:
        pull.append(pullback_bound_check(m, B, a.D).to_json())
        bdry.extend(c.to_json() for c in boundary_transfer_check(m, B, a.s))
    traces = [t.to_json() for t in transfer_refutation(m, Bs, a.r, a.s, None if a.witness_alpha is None else a.witness_alpha)]
    t = mod.t.tolist()
    out = {
        "moduli": {
            "t": t,
            "rhoPlus": mod.rho_plus.tolist(),
            "rhoMinus": mod.rho_minus.tolist(),
            "D": mod.D,
            "pieceD": list(mod.piece_D),
            "K": mod.K,
            "prefixLength": mod.prefix_length,
            "distortionOk": distortion_check(m, mod),
        },
        "parameters": {"alpha": float(a.alpha), "c": float(a.c), "R": a.r, "S": a.s, "D": a.D, "mode": a.mode},
        "witnesses": wit,
        "pullback": pull,
        "boundaryTransfer": bdry,
        "transfer": traces,
    }
    run.emit(aio.dumps(out), a.out)
    ok = all(c["ok"] for c in pull + bdry) and all(
        tr["status"] != "transferred" or all(c["ok"] for c in tr["checks"]) for tr in traces
    )
    return EXIT_OK if ok else EXIT_FOUND


def cmd_audit(run: Run) -> int:
    a = run.args
    S = aio.load_space(run.read(a.file))
    _check_limit(S, a.mode, a.max_exact)
    R_list = a.r or default_radii(S)
    rep = ql_equivalence_audit(S, R_list, a.mode, a.max_exact, a.threads)
    rows = [{"piece": r.piece, "R": r.R, "separation": r.separation, "propagation": r.propagation,
             "mode": r.mode, "ok": r.ok} for r in rep.rows]
    run.emit(aio.dumps({"ok": rep.ok, "mode": a.mode, "rows": rows}), a.out)
    return EXIT_OK if rep.ok else EXIT_FOUND


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help=f"worker cap (fallback: ${THREADS_ENV}, then 1)")
    common.add_argument("--manifest", default=None, help="run manifest path (default: <out>.manifest.json, else stderr)")
    common.add_argument("--out", "-o", default=None, help="report path (default: stdout)")

    analysis = _Parser(add_help=False)
    analysis.add_argument("--mode", choices=("exact", "heuristic"), default="exact")
    analysis.add_argument("--max-exact", type=int, default=MAX_EXACT_DEFAULT)

    p = _Parser(prog="asympexp", description="Finite-scale diagnostics for asymptotic expanders and quasi-locality.")
    p.add_argument("--version", action="version", version=f"asympexp {__version__}")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate an amspace-v1 sequence")
    g.add_argument("--family", required=True,
                   choices=("cycle", "path", "complete", "hypercube", "random-regular", "glued", "interleaved"))
    g.add_argument("--sizes", type=_int_list, default=None)
    g.add_argument("--degree", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--base", default="random-regular", help="base family for glued pieces")
    g.add_argument("--small", default="path", help="small family for glued pieces")
    g.add_argument("--small-sizes", type=_int_list, default=None)
    g.add_argument("--count", type=int, default=3, help="number of pieces for the interleaved bundle")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("expansion", parents=[common, analysis], help="expansion profile and certificates")
    e.add_argument("file")
    e.add_argument("--alpha", type=_fraction_list, default=[Fraction(1, 2)])
    e.add_argument("--r", type=_radius_list, default=None)
    e.add_argument("--c", type=_fraction, default=None, help="expansion constant; enables verdicts")
    e.add_argument("--verdicts", default=None, help="verdict JSON path (default: <out>.verdicts.json)")
    e.set_defaults(func=cmd_expansion)

    q = sub.add_parser("ql-profile", parents=[common, analysis], help="separated products vs propagation")
    q.add_argument("file")
    q.add_argument("--r", type=_radius_list, default=None)
    q.set_defaults(func=cmd_qlprofile)

    s = sub.add_parser("spectral", parents=[common], help="Laplacian spectra and kernel projections")
    s.add_argument("file")
    s.set_defaults(func=cmd_spectral)

    u = sub.add_parser("ula", parents=[common], help="sparse-decomposition certificates")
    u.add_argument("file")
    u.add_argument("--r", type=float, required=True)
    u.add_argument("--c", type=_fraction, default=Fraction(1, 2))
    u.add_argument("--s-values", type=_radius_list, default=None)
    u.add_argument("--no-size-gate", dest="size_gate", action="store_false")
    u.add_argument("--max-exact", type=int, default=MAX_EXACT_DEFAULT)
    u.set_defaults(func=cmd_ula)

    c = sub.add_parser("coarse", parents=[common], help="coarse moduli and transfer inequalities")
    c.add_argument("space_x")
    c.add_argument("space_y")
    c.add_argument("map")
    c.add_argument("--alpha", type=_fraction, default=Fraction(1, 2), help="density floor for witness search")
    c.add_argument("--r", type=float, default=1.0)
    c.add_argument("--s", type=float, default=1.0)
    c.add_argument("--c", type=_fraction, default=Fraction(1, 2))
    c.add_argument("--D", type=float, default=None, help="density parameter (default: realised density)")
    c.add_argument("--witness-alpha", type=_fraction, default=None)
    c.add_argument("--witnesses", default=None, help="JSON list of codomain sets B (global indices)")
    c.add_argument("--witness-pieces", type=_int_list, default=None, help="codomain pieces searched for witnesses")
    c.add_argument("--mode", choices=("auto", "exact", "heuristic"), default="auto")
    c.add_argument("--max-exact", type=int, default=MAX_EXACT_DEFAULT)
    c.set_defaults(func=cmd_coarse)

    a = sub.add_parser("audit", parents=[common, analysis], help="quasi-locality equivalence audit")
    a.add_argument("file")
    a.add_argument("--r", type=_radius_list, default=None)
    a.set_defaults(func=cmd_audit)
    return p


def _replay(path: str, extra: list[str]) -> list[str]:
    data = aio.read_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("command"), list):
        raise FormatError(f"{path} is not a run manifest")
    for f, digest in data.get("inputs", {}).items():
        if digest and (not Path(f).is_file() or aio.sha256_file(f) != digest):
            raise FormatError(f"input {f} changed since the manifest was written")
    argv = [str(x) for x in data["command"]]
    return argv + extra


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv[:1] == ["--replay"] and len(argv) >= 2:
            argv = _replay(argv[1], argv[2:])
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        resolve_threads(args.threads)
    except UsageError as exc:
        print(f"asympexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ValueError) as exc:
        print(f"asympexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run = Run(args, argv)
    try:
        code = args.func(run)
    except UsageError as exc:
        print(f"asympexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExactTooLarge, NotConverged) as exc:
        print(f"asympexp: limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except DensityViolated as exc:
        print(f"asympexp: error: {exc} (point {exc.point}, distance {exc.distance:g})", file=sys.stderr)
        return EXIT_USAGE
    except (AsympExpError, ValueError, OSError) as exc:
        print(f"asympexp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run.write_manifest(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
