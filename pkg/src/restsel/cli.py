"""Command-line interface: ``restsel {fit,select,simulate,verify,rerun}``.

Design and response files are headerless CSV. Restrictions are JSON
(``{"R": [[...]], "r": [...]}`` or a list of expressions such as
``"b1=2*b2"``) or plain text with one expression per line.

With ``--out DIR`` every command writes its outputs plus ``manifest.json``;
``restsel rerun DIR/manifest.json --out OTHER`` reproduces them byte for byte.

Exit codes: 0 success, 1 a verification row failed, 2 usage error,
3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset, RestrictedLS, RestrictionSet, equality_restriction
from .criteria import CRITERIA, resolve_criterion
from .errors import (
    ConfigError,
    DataError,
    NoFeasibleModelError,
    NumericalError,
    ParseError,
    ReplicationError,
    RestselError,
)
from .selection import nested_restriction_exclusion, nested_subsets, restriction_powerset, select
from .simulation.experiment import SimConfig, run_experiment
from .simulation.optimism import theorem_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

FAMILY_ALIASES = {
    "nested": "nested_subsets",
    "nested_subsets": "nested_subsets",
    "powerset": "gr_powerset",
    "gr_powerset": "gr_powerset",
    "nested-exclusion": "gr_nested",
    "gr_nested": "gr_nested",
}


# ---------------------------------------------------------------- input files


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_matrix(path) -> np.ndarray:
    """Headerless numeric CSV; blank lines are skipped, every row must have the same width."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from None
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"row {lineno}, column {col}: not a number: {cell.strip()!r}",
                                 path=str(path), line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"row {lineno}, column {col}: non-finite value {cell.strip()!r}",
                                 path=str(path), line=lineno)
            vals.append(v)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row {lineno}: expected {width} values, got {len(vals)}",
                             path=str(path), line=lineno)
        rows.append(vals)
    if not rows:
        raise ParseError("file contains no data", path=str(path))
    return np.array(rows, dtype=np.float64)


def read_vector(path) -> np.ndarray:
    """One value per line (a single column) or a single row."""
    M = read_matrix(path)
    if M.shape[1] == 1:
        return M[:, 0]
    if M.shape[0] == 1:
        return M[0]
    raise ParseError(f"expected a single column, got {M.shape[0]}x{M.shape[1]}", path=str(path))


def read_restrictions(path, p: int) -> RestrictionSet:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
        exprs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                exprs.append((lineno, line))
    try:
        if doc is None:
            rows = []
            for lineno, expr in exprs:
                try:
                    rows.append(equality_restriction([expr], p).rows()[0])
                except DataError as exc:
                    raise ParseError(str(exc), path=str(path), line=lineno) from None
            if not rows:
                return RestrictionSet.empty(p)
            return RestrictionSet(np.vstack([r for r, _ in rows]), np.array([t for _, t in rows]))
        if isinstance(doc, dict):
            if set(doc) != {"R", "r"}:
                raise ParseError('restriction JSON object needs exactly the keys "R" and "r"', path=str(path))
            R = np.array(doc["R"], dtype=np.float64).reshape(-1, p) if doc["R"] else np.zeros((0, p))
            return RestrictionSet(R, np.array(doc["r"], dtype=np.float64).reshape(-1))
        if isinstance(doc, list):
            return equality_restriction(doc, p) if doc else RestrictionSet.empty(p)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ParseError(str(exc), path=str(path)) from None
    raise ParseError("restriction JSON must be an object or a list", path=str(path))


# ---------------------------------------------------------------- output files


def jsonable(obj):
    """Recursively convert numpy values and map infinities to ``"inf"``/``"-inf"``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _cell(v) -> tuple[str, str]:
    """CSV cell text and flag text; infinities become an empty cell plus a flag."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "", ("inf" if v > 0 else "-inf")
        return repr(v), ""
    return str(v), ""


def dump_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header) + ["flags"])
    for row in rows:
        cells, flags = [], []
        for name, v in zip(header, row):
            text, flag = _cell(v)
            cells.append(text)
            if flag:
                flags.append(f"{name}={flag}")
        w.writerow(cells + [";".join(flags)])
    return buf.getvalue()


# ---------------------------------------------------------------- commands
#
# Each command takes a resolved config dict and returns (files, text): the
# output files as {name: content} and a short human-readable summary.


def _load_data(cfg) -> Dataset:
    X = read_matrix(cfg["design"])
    y = read_vector(cfg["response"])
    if y.shape[0] != X.shape[0]:
        raise DataError(f"design has {X.shape[0]} rows but response has {y.shape[0]} values")
    return Dataset(X, y)


def run_fit(cfg):
    data = _load_data(cfg)
    rest = read_restrictions(cfg["restrictions"], data.p) if cfg.get("restrictions") else RestrictionSet.empty(data.p)
    fit = RestrictedLS(data.X, rest).fit(data.y)
    report = {
        "beta_hat": fit.beta_hat,
        "sigma_hat_sq": fit.sigma_hat_sq,
        "rss": fit.rss,
        "n": fit.n,
        "p": fit.p,
        "m": fit.m,
        "k": fit.k,
    }
    text = f"n={fit.n} p={fit.p} m={fit.m} k={fit.k} rss={fit.rss:.6g} sigma_hat_sq={fit.sigma_hat_sq:.6g}\n"
    text += "beta_hat: " + " ".join(f"{b:.6g}" for b in fit.beta_hat) + "\n"
    return {"fit.json": dump_json(report)}, text


def _family(name: str, base: RestrictionSet | None, p: int):
    if name == "nested_subsets":
        return nested_subsets(p)
    if base is None:
        raise DataError(f"family '{name}' needs --restrictions with the base restriction rows")
    if name == "gr_powerset":
        return restriction_powerset(base, p)
    return nested_restriction_exclusion(base, p)


def run_select(cfg):
    data = _load_data(cfg)
    base = read_restrictions(cfg["restrictions"], data.p) if cfg.get("restrictions") else None
    family = _family(cfg["family"], base, data.p)
    res = select(data, family, cfg["criteria"], seed=cfg["seed"], folds=cfg["folds"])
    report = res.to_dict()
    report["family"] = cfg["family"]
    report["dropped"] = list(family.dropped)
    header = ["label", "m", "k"] + list(res.scores)
    rows = [
        [lab, int(res.m[i]), int(res.k[i])] + [float(res.scores[c][i]) for c in res.scores]
        for i, lab in enumerate(res.labels)
    ]
    text = "".join(
        f"{c}: k={res.chosen_k(c)} m={res.chosen_m(c)} label={res.chosen_label(c)}\n" for c in res.scores
    )
    return {"select.json": dump_json(report), "scores.csv": dump_csv(header, rows)}, text


REP_COLUMNS = ["rep", "criterion", "chosen_label", "k", "m", "rmse", "log_kl", "log_kl_model"]


def run_simulate(cfg):
    config = SimConfig.from_dict(cfg["sim"])
    results, summary = run_experiment(config, workers=cfg.get("workers", 1))
    rows = [[row[c] for c in REP_COLUMNS] for r in results for row in r.rows()]
    text = "".join(
        f"{c}: mean k={s['mean_size']:.4g} mean m={s['num_restrictions']:.4g} mean rmse={s['mean_rmse']:.4g}\n"
        for c, s in summary.criteria.items()
    )
    return {"replications.csv": dump_csv(REP_COLUMNS, rows), "summary.json": dump_json(summary.to_dict())}, text


def run_verify(cfg):
    rows = theorem_suite(
        n=cfg["n"], p=cfg["p"], m=cfg["m"], sigma0_sq=cfg["sigma0_sq"], reps=cfg["reps"],
        seed=cfg["seed"], rho=cfg["rho"], threshold=cfg["threshold"],
    )

    def fmt(v, spec):
        return "-" if v is None else format(v, spec)

    lines = [f"{'quantity':<12} {'target':>12} {'estimate':>12} {'se':>10} {'z':>7}  status"]
    for r in rows:
        lines.append(
            f"{r.name:<12} {fmt(r.target, '12.6f')} {fmt(r.estimate, '12.6f')} {fmt(r.se, '10.5f')} "
            f"{fmt(r.z, '7.2f')}  {r.status}{'  (' + r.reason + ')' if r.reason else ''}"
        )
    failed = any(r.status == "FAIL" for r in rows)
    return {"verify.json": dump_json({"rows": [r.to_dict() for r in rows], "all_pass": not failed})}, \
        "\n".join(lines) + "\n", failed


COMMANDS = {"fit": run_fit, "select": run_select, "simulate": run_simulate, "verify": run_verify}
INPUT_KEYS = ("design", "response", "restrictions")


def _inputs(cfg) -> dict:
    out = {}
    for key in INPUT_KEYS:
        if cfg.get(key):
            path = Path(cfg[key])
            try:
                out[key] = {"path": str(path), "sha256": _sha256(path)}
            except OSError as exc:
                raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from None
    return out


def execute(command: str, cfg: dict, out: str | None):
    """Run ``command`` and write its outputs and manifest into ``out`` (if given)."""
    result = COMMANDS[command](cfg)
    files, text = result[0], result[1]
    failed = result[2] if len(result) > 2 else False
    if out is not None:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "subcommand": command,
            "version": __version__,
            "seed": cfg.get("seed", cfg.get("sim", {}).get("seed")),
            "config": cfg,
            "inputs": _inputs(cfg),
            "outputs": {name: hashlib.sha256(body.encode()).hexdigest() for name, body in sorted(files.items())},
        }
        for name, body in sorted(files.items()):
            (outdir / name).write_text(body)
        (outdir / "manifest.json").write_text(dump_json(manifest))
    return files, text, failed


def rerun(manifest_path, out):
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot load manifest: {exc}", path=str(path)) from None
    command = manifest.get("subcommand")
    if command not in COMMANDS:
        raise ConfigError("subcommand", f"unknown subcommand {command!r}")
    if manifest.get("version") != __version__:
        print(f"warning: manifest written by version {manifest.get('version')}, running {__version__}",
              file=sys.stderr)
    cfg = manifest["config"]
    for key, info in manifest.get("inputs", {}).items():
        if _sha256(Path(info["path"])) != info["sha256"]:
            raise DataError(f"input '{key}' ({info['path']}) changed since the manifest was written")
    return execute(command, cfg, out)


# ---------------------------------------------------------------- argument parsing


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {v}")
    return v


def _pos_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _criteria(text: str) -> list:
    try:
        names = [resolve_criterion(c) for c in text.split(",") if c.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not names:
        raise argparse.ArgumentTypeError("empty criterion list")
    return list(dict.fromkeys(names))


def _family_arg(text: str) -> str:
    try:
        return FAMILY_ALIASES[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown family {text!r}; choose nested, powerset or nested-exclusion") from None


def _signal(text: str):
    if text in ("low", "high"):
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected low, high or a positive noise variance, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"noise variance must be positive, got {text}")
    return v


def _beta(text: str):
    if text in ("sparse6", "dense"):
        return text
    try:
        return [float(b) for b in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected sparse6, dense or a comma list of numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restsel",
        description="Fit linear regressions under linear equality restrictions and select among them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--design", required=True, help="headerless CSV design matrix (n rows, p columns)")
        p.add_argument("--response", required=True, help="headerless CSV response (one value per line)")
        p.add_argument("--restrictions", help="restriction file: JSON {R, r}, JSON list of expressions, or text")

    def out_arg(p, required=False):
        p.add_argument("--out", required=required, help="output directory (files plus manifest.json)")

    p = sub.add_parser("fit", help="restricted maximum likelihood fit")
    data_args(p)
    out_arg(p)

    p = sub.add_parser("select", help="score a candidate family and pick the best model per criterion")
    data_args(p)
    p.add_argument("--family", type=_family_arg, default="nested_subsets",
                   help="nested | powerset | nested-exclusion (the latter two use --restrictions as base rows)")
    p.add_argument("--criteria", type=_criteria, default=list(CRITERIA), help="comma list, e.g. raicc,aicc,sp")
    p.add_argument("--seed", type=_u64, default=0, help="seed of the K-fold split")
    p.add_argument("--folds", type=_pos_int, default=10)
    out_arg(p)

    p = sub.add_parser("simulate", help="Monte Carlo model-selection experiment")
    p.add_argument("--config", help="JSON experiment configuration; flags override its fields")
    p.add_argument("--n", type=_pos_int)
    p.add_argument("--p", type=_pos_int)
    p.add_argument("--rho", type=float)
    p.add_argument("--x-design", choices=("fixed", "random"))
    p.add_argument("--beta", type=_beta, help="sparse6 | dense | comma list of coefficients")
    p.add_argument("--signal", type=_signal, help="low | high | noise variance")
    p.add_argument("--family", type=_family_arg)
    p.add_argument("--criteria", type=_criteria)
    p.add_argument("--reps", type=_pos_int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--folds", type=_pos_int)
    p.add_argument("--workers", type=_pos_int, default=1, help="worker processes (output is unchanged)")
    out_arg(p, required=True)

    p = sub.add_parser("verify", help="compare Monte Carlo optimism with its closed forms")
    p.add_argument("--n", type=_pos_int, default=20)
    p.add_argument("--p", type=_pos_int, default=5)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--sigma0-sq", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--reps", type=_pos_int, default=200_000)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--threshold", type=float, default=3.0, help="pass when |z| <= threshold")
    out_arg(p)

    p = sub.add_parser("rerun", help="reproduce a previous run from its manifest")
    p.add_argument("manifest")
    out_arg(p, required=True)
    return parser


def _sim_config(args) -> dict:
    cfg = {}
    if args.config:
        path = Path(args.config)
        try:
            cfg = json.loads(path.read_text())
        except OSError as exc:
            raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
        if not isinstance(cfg, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
    overrides = {
        "n": args.n, "p": args.p, "rho": args.rho, "design": args.x_design, "beta_spec": args.beta,
        "signal": args.signal, "family": args.family, "criteria": args.criteria, "reps": args.reps,
        "seed": args.seed, "folds": args.folds,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if "family" in cfg and isinstance(cfg["family"], str):
        cfg["family"] = FAMILY_ALIASES.get(cfg["family"], cfg["family"])
    if "wilcoxon_pairs" not in cfg and isinstance(cfg.get("criteria"), list):
        # keep only the default comparisons whose criteria were requested
        try:
            chosen = {resolve_criterion(c) for c in cfg["criteria"]}
        except (ValueError, AttributeError):
            chosen = None
        if chosen is not None:
            default = SimConfig.__dataclass_fields__["wilcoxon_pairs"].default
            cfg["wilcoxon_pairs"] = [list(pair) for pair in default if set(pair) <= chosen]
    return SimConfig.from_dict(cfg).to_dict()


def _abs(path):
    return str(Path(path).resolve()) if path else None


def _resolve(args) -> dict:
    for key in INPUT_KEYS:
        if hasattr(args, key):
            setattr(args, key, _abs(getattr(args, key)))
    if args.command == "fit":
        return {"design": args.design, "response": args.response, "restrictions": args.restrictions}
    if args.command == "select":
        return {"design": args.design, "response": args.response, "restrictions": args.restrictions,
                "family": args.family, "criteria": args.criteria, "seed": args.seed, "folds": args.folds}
    if args.command == "simulate":
        return {"sim": _sim_config(args), "workers": args.workers}
    return {"n": args.n, "p": args.p, "m": args.m, "sigma0_sq": args.sigma0_sq, "rho": args.rho,
            "reps": args.reps, "seed": args.seed, "threshold": args.threshold}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ReplicationError):
        return _exit_code(exc.cause)
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, (NumericalError, NoFeasibleModelError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "rerun":
            _, text, failed = rerun(args.manifest, args.out)
        else:
            _, text, failed = execute(args.command, _resolve(args), args.out)
    except RestselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    sys.stdout.write(text)
    return EXIT_FAIL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
