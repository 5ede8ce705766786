"""``gaitlab`` command-line entry point.

Every subcommand reads its tunables from ``--set key=value`` (repeatable),
and ``pipeline`` additionally from a key=value config file. Each artifact
starts with a provenance header naming the package version, the seed and the
fully resolved settings; output paths are left out of it so two runs into
different directories still produce identical files.

Exit codes: 0 success, 1 bad input, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import threading
from pathlib import Path

from . import __version__, plots
from .dataset import Dataset, load_table, parse_table, stratified_split, table_csv
from .errors import GaitlabError, InputError, InvariantError
from .evaluation import (
    SELECTION_MODES, EvalReport, compare_classifiers, evaluate_holdout, grid_search,
    predict_table, reports_csv, reports_text, tune_csv,
)
from .features import (
    DEFAULT_CONFIG, FeatureConfig, detect_steps, extract_all, feature_table_csv,
)
from .gaitsim import cohort_config_items, cohort_from_config, generate_cohort, parse_kv
from .learn.model import ModelSpec, default_knn_grid, fit, read_model, write_model
from .selection import DEFAULT_BINS, DEFAULT_K, rank_features, ranking_csv, ranking_text
from .telemetry import (
    Session, Task, assemble_session, decode_stream, encode_session, read_session,
    receive_tcp, session_to_csv,
)

SEED_ENV = "GAITLAB_SEED"
PROG = "gaitlab"

_COHORT_KEYS = {"n_control", "n_pd", "preset", "duration_s", "sample_rate_hz", "noise_g",
                "noise_dps"}
_EVAL_DEFAULTS = {"folds": "5", "select_k": str(DEFAULT_K), "bins": str(DEFAULT_BINS),
                  "selection": "honest", "grid": "default"}
_PIPELINE_DEFAULTS = {**_EVAL_DEFAULTS, "test_fraction": "0.25", "via_wire": "1",
                      "write_sessions": "0", "preset": "strong"}


class _Parser(argparse.ArgumentParser):
    """Turns usage errors into InputError so they share the exit-code mapping."""

    def error(self, message):
        where = self.prog.removeprefix(PROG).strip()
        raise InputError(f"{where}: {message}" if where else message)


# --- settings ---------------------------------------------------------------

def _overrides(pairs: list[str] | None) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise InputError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def _settings(defaults: dict[str, str], given: dict[str, str], what: str) -> dict[str, str]:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise InputError(f"unknown {what} setting(s): {', '.join(unknown)}; "
                         f"known: {', '.join(sorted(defaults))}")
    return {**defaults, **given}


def _int(cfg: dict, key: str, lo: int | None = None) -> int:
    try:
        val = int(cfg[key])
    except ValueError:
        raise InputError(f"{key} must be an integer, got {cfg[key]!r}") from None
    if lo is not None and val < lo:
        raise InputError(f"{key} must be >= {lo}")
    return val


def _float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise InputError(f"{key} must be a number, got {cfg[key]!r}") from None


def _flag(cfg: dict, key: str) -> bool:
    val = cfg[key].lower()
    if val not in ("0", "1", "true", "false", "yes", "no"):
        raise InputError(f"{key} must be 0 or 1, got {cfg[key]!r}")
    return val in ("1", "true", "yes")


def _seed(args, fallback: str | None = None) -> int:
    """``--seed`` beats an explicit config value, which beats GAITLAB_SEED; default 0."""
    for raw, source in ((args.seed, "--seed"), (fallback, "config seed"),
                        (os.environ.get(SEED_ENV), SEED_ENV)):
        if raw is None or raw == "":
            continue
        try:
            return int(raw)
        except ValueError:
            raise InputError(f"{source} must be an integer, got {raw!r}") from None
    return 0


def _grid(text: str) -> list[ModelSpec]:
    if text == "default":
        return default_knn_grid()
    return [ModelSpec.parse(part) for part in text.split(";") if part.strip()]


def _select_k(cfg: dict) -> int | None:
    return _int(cfg, "select_k", 0) or None


def _selection(cfg: dict) -> str:
    if cfg["selection"] not in SELECTION_MODES:
        raise InputError(f"selection must be one of {', '.join(SELECTION_MODES)}")
    return cfg["selection"]


def _header(command: str, seed: int | None, config: dict, **resolved: dict) -> str:
    """Provenance comment: version and seed, the given settings, then any resolved groups."""
    lines = [f"{PROG} {__version__} command={command} seed={'-' if seed is None else seed}"]
    if config:
        lines.append("config " + " ".join(f"{k}={v}" for k, v in config.items()))
    for name, items in resolved.items():
        lines.append(f"{name} " + " ".join(f"{k}={v}" for k, v in items.items()))
    return "\n".join(lines)


def _write(path, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise InputError(f"output directory {str(path.parent)!r} does not exist")
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _info(msg: str) -> None:
    print(msg)


# --- simulate ---------------------------------------------------------------

def _cohort_config(args, extra: dict[str, str]) -> tuple[dict[str, str], int]:
    cfg = parse_kv(Path(args.config).read_text()) if args.config else {}
    cfg.update(extra)
    seed = _seed(args, cfg.get("seed"))
    cfg["seed"] = str(seed)
    return cfg, seed


def _check_cohort_keys(cfg: dict[str, str], allowed: set[str]) -> None:
    for key in cfg:
        if key in allowed or key == "seed" or key.split(".", 1)[0] in ("control", "pd"):
            continue
        raise InputError(f"unknown setting {key!r}")


def cmd_simulate(args) -> int:
    cfg, seed = _cohort_config(args, _overrides(args.set))
    _check_cohort_keys(cfg, _COHORT_KEYS)
    spec = cohort_from_config(cfg)
    resolved = cohort_config_items(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header("simulate", seed, {k: v for k, v in cfg.items() if k != "seed"})
    manifest = [f"# {line}" for line in header.splitlines()]
    manifest += [f"{k}={v}" for k, v in resolved.items()]
    _write(out / "cohort.txt", "\n".join(manifest) + "\n")
    sessions = generate_cohort(spec)
    extra = {"gaitlab": __version__, "seed": seed, "source": "simulate"}
    for s in sessions:
        stem = f"{s.subject_id}_{s.task.value}"
        _write(out / f"{stem}.csv", session_to_csv(s, extra))
        if args.raw:
            (out / f"{stem}.bin").write_bytes(encode_session(s))
    _info(f"simulated {len(sessions)} sessions ({spec.n_control} control, {spec.n_pd} PD) "
          f"into {out}")
    return 0


# --- ingest -----------------------------------------------------------------

def _read_source(args) -> tuple[bytes, str]:
    if args.tcp is not None:
        if args.source:
            raise InputError("give either a source file or --tcp, not both")
        ready = threading.Event()
        data = receive_tcp(args.tcp, args.host, timeout=args.timeout, ready=ready)
        return data, f"tcp:{args.tcp}"
    if not args.source:
        raise InputError("ingest needs a source file, '-' for stdin, or --tcp PORT")
    if args.source == "-":
        return sys.stdin.buffer.read(), "stdin"
    return Path(args.source).read_bytes(), Path(args.source).name


def cmd_ingest(args) -> int:
    data, origin = _read_source(args)
    records, stats = decode_stream(data)
    label = None if args.label in (None, "?") else int(args.label)
    session = assemble_session(records, args.subject, args.task, args.rate, label)
    extra = {"gaitlab": __version__, "seed": "-", "source": origin, "frames": stats.frames,
             "bad_magic": stats.bad_magic, "bad_crc": stats.bad_crc,
             "bad_device": stats.bad_device, "truncated": stats.truncated}
    _write(args.out, session_to_csv(session, extra))
    if args.figure:
        steps = detect_steps(session) if session.has_valid_duration else None
        plots.session_trace(session, args.figure, steps,
                            header=_header("ingest", None, {"source": origin}))
    gaps = len(session.gap_report) if session.gap_report else 0
    _info(f"ingested {stats.frames} frames ({stats.errors} rejected) -> {session.n} samples, "
          f"{gaps} long gaps, written to {args.out}")
    return 0


# --- extract ----------------------------------------------------------------

def _session_paths(inputs: list[str]) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.glob("*.csv")))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(2, "No such file or directory", item)
    if not paths:
        raise InputError("no session CSV files found")
    return paths


def _failures_csv(failures, comment: str) -> str:
    lines = [f"# {line}" for line in comment.splitlines()]
    lines.append("subject_id,task,reason")
    lines += [f"{f.subject_id},{f.task.value},\"{f.reason}\"" for f in failures]
    return "\n".join(lines) + "\n"


def _feature_config(items: dict[str, str]) -> FeatureConfig:
    return DEFAULT_CONFIG.with_overrides(items)


def _config_items(cfg: FeatureConfig) -> dict[str, object]:
    return dict(vars(cfg))


def cmd_extract(args) -> int:
    fcfg = _feature_config(_overrides(args.set))
    sessions = [read_session(p) for p in _session_paths(args.inputs)]
    vectors, failures = extract_all(sessions, fcfg)
    header = _header("extract", None, _config_items(fcfg))
    _write(args.out, feature_table_csv(vectors, header))
    if args.failures:
        _write(args.failures, _failures_csv(failures, header))
    for f in failures:
        print(f"warning: {f.subject_id}/{f.task.value}: {f.reason}", file=sys.stderr)
    _info(f"extracted {len(vectors)} of {len(sessions)} sessions into {args.out}")
    if not vectors:
        raise InputError("every session failed feature extraction")
    return 0


# --- rank / tune / train ----------------------------------------------------

def cmd_rank(args) -> int:
    cfg = _settings({"k": str(DEFAULT_K), "bins": str(DEFAULT_BINS)}, _overrides(args.set), "rank")
    ds = load_table(args.table)
    ranked = rank_features(ds, _int(cfg, "k", 1), _int(cfg, "bins", 2))
    header = _header("rank", None, {**cfg, "table": Path(args.table).name, "rows": ds.n})
    _write(args.out, ranking_csv(ranked, header))
    if args.figure:
        plots.feature_ranking(ranked, args.figure, header=header)
    print(ranking_text(ranked), end="")
    return 0


def _tune_settings(args) -> dict[str, str]:
    return _settings(_EVAL_DEFAULTS, _overrides(args.set), "tune")


def cmd_tune(args) -> int:
    cfg = _tune_settings(args)
    seed = _seed(args)
    ds = load_table(args.table)
    tune = grid_search(_grid(cfg["grid"]), ds, _int(cfg, "folds", 2), seed, _select_k(cfg),
                       _int(cfg, "bins", 2), _selection(cfg))
    header = _header("tune", seed, {**cfg, "table": Path(args.table).name, "rows": ds.n})
    _write(args.out, tune_csv(tune, header))
    if args.figure:
        plots.tuning_curves(tune, args.figure, header=header)
    _info(f"best {tune.best_spec.label()} mean CV accuracy {tune.best.mean_accuracy:.2f}% "
          f"({cfg['selection']} selection, {len(tune.results)} candidates, "
          f"{len(tune.skipped)} skipped)")
    return 0


def _fit_model(spec: ModelSpec, ds: Dataset, cfg: dict, header_cfg: dict, seed: int | None):
    features = None
    if cfg.get("features"):
        features = [f.strip() for f in cfg["features"].split(",") if f.strip()]
    elif _select_k(cfg):
        features = rank_features(ds, _select_k(cfg), _int(cfg, "bins", 2)).selected
    model = fit(spec, ds, features)
    model.meta.update({"gaitlab": __version__, "seed": "-" if seed is None else seed,
                       "trained_rows": ds.n})
    model.meta.update({f"config.{k}": v for k, v in header_cfg.items()})
    return model


def cmd_train(args) -> int:
    cfg = _settings({"select_k": "0", "bins": str(DEFAULT_BINS), "features": ""},
                    _overrides(args.set), "train")
    spec = ModelSpec.parse(args.spec)
    ds = load_table(args.table)
    model = _fit_model(spec, ds, cfg, {**cfg, "table": Path(args.table).name}, None)
    write_model(args.out, model)
    _info(f"trained {spec.label()} on {ds.n} rows with {len(model.feature_names)} features "
          f"-> {args.out}")
    return 0


# --- evaluate / predict -----------------------------------------------------

def cmd_evaluate(args) -> int:
    model = read_model(args.model)
    ds = load_table(args.table)
    if ds.y is None:
        raise InputError(f"{args.table} has no labels; use 'gaitlab predict' instead")
    report = evaluate_holdout(model, ds)
    header = _header("evaluate", None, {"model": Path(args.model).name,
                                        "table": Path(args.table).name, "rows": ds.n})
    _write(args.out, reports_csv([report], header))
    print(reports_text([report], "Held-out accuracy"), end="")
    return 0


def cmd_predict(args) -> int:
    model = read_model(args.model)
    ds = load_table(args.table)
    preds = predict_table(model, ds)
    header = _header("predict", None, {"model": Path(args.model).name,
                                       "table": Path(args.table).name, "rows": ds.n})
    _write(args.out, preds.to_csv(header))
    _info(f"wrote {len(preds.row_ids)} predictions to {args.out}")
    return 0


# --- pipeline ---------------------------------------------------------------

def _via_wire(s: Session) -> Session:
    records, stats = decode_stream(encode_session(s))
    if stats.errors:
        raise InvariantError(f"{s.subject_id}/{s.task.value}: clean stream decoded with errors")
    return assemble_session(records, s.subject_id, s.task, s.sample_rate_hz, s.label)


def _pipeline_config(args) -> tuple[dict[str, str], int]:
    cfg = dict(_PIPELINE_DEFAULTS)
    if args.config:
        cfg.update(parse_kv(Path(args.config).read_text()))
    cfg.update(_overrides(args.set))
    for key in cfg:
        head = key.split(".", 1)[0]
        if key in _PIPELINE_DEFAULTS or key in _COHORT_KEYS or key == "seed" \
                or head in ("control", "pd", "feature"):
            continue
        raise InputError(f"unknown pipeline setting {key!r}")
    seed = _seed(args, cfg.get("seed"))
    cfg["seed"] = str(seed)
    return cfg, seed


def _summary(ranked, comparison: list[EvalReport], tune, tune_global, holdout: EvalReport,
             n_sessions: int, n_failed: int, ds: Dataset, train: Dataset, test: Dataset,
             header: str) -> str:
    lines = [f"# {line}" for line in header.splitlines()]
    lines += [
        f"sessions: {n_sessions} simulated, {n_failed} failed extraction",
        f"subjects: {ds.n} usable ({ds.dropped} dropped); train {train.n}, test {test.n}",
        f"selected features: {', '.join(ranked.selected)}",
        f"best grid spec: {tune.best_spec.label()}",
        f"grid CV accuracy honest: {tune.best.mean_accuracy:.4f}%",
        f"grid CV accuracy global: {tune_global.best.mean_accuracy:.4f}% "
        f"({tune_global.best_spec.label()})",
        f"held-out accuracy: {holdout.mean_accuracy:.4f}% on {holdout.n} subjects",
        "",
        reports_text(comparison, "Classifier comparison (CV on training split)").rstrip(),
    ]
    return "\n".join(lines) + "\n"


def cmd_pipeline(args) -> int:
    cfg, seed = _pipeline_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cohort_cfg = {k: v for k, v in cfg.items()
                  if k in _COHORT_KEYS or k == "seed" or k.split(".", 1)[0] in ("control", "pd")}
    spec = cohort_from_config(cohort_cfg)
    fcfg = _feature_config({k.split(".", 1)[1]: v for k, v in cfg.items()
                            if k.startswith("feature.")})
    folds, bins = _int(cfg, "folds", 2), _int(cfg, "bins", 2)
    select_k, selection = _select_k(cfg), _selection(cfg)
    grid = _grid(cfg["grid"])
    test_fraction = _float(cfg, "test_fraction")
    header = _header("pipeline", seed, cfg, cohort=cohort_config_items(spec),
                     features=_config_items(fcfg))
    _write(out / "config.txt", "\n".join([f"# {l}" for l in header.splitlines()]
                                         + [f"{k}={v}" for k, v in cfg.items()]) + "\n")

    sessions = generate_cohort(spec)
    if _flag(cfg, "via_wire"):
        sessions = [_via_wire(s) for s in sessions]
    if _flag(cfg, "write_sessions"):
        sdir = out / "sessions"
        sdir.mkdir(exist_ok=True)
        extra = {"gaitlab": __version__, "seed": seed, "source": "pipeline"}
        for s in sessions:
            _write(sdir / f"{s.subject_id}_{s.task.value}.csv", session_to_csv(s, extra))

    vectors, failures = extract_all(sessions, fcfg)
    long_csv = feature_table_csv(vectors, header)
    _write(out / "features.csv", long_csv)
    _write(out / "extraction_failures.csv", _failures_csv(failures, header))
    ds = parse_table(long_csv)
    _write(out / "table.csv", table_csv(ds, header))

    train, test = stratified_split(ds, test_fraction, seed)
    _write(out / "train.csv", table_csv(train, header))
    _write(out / "test.csv", table_csv(test, header))

    ranked = rank_features(train, select_k or train.d, bins)
    _write(out / "ranking.csv", ranking_csv(ranked, header))
    _write(out / "ranking.txt", "".join(f"# {l}\n" for l in header.splitlines())
           + ranking_text(ranked))
    plots.feature_ranking(ranked, out / "ranking.png", header=header)

    comparison = compare_classifiers(train, folds, seed, select_k, bins, selection)
    _write(out / "comparison.csv", reports_csv(comparison, header))
    plots.classifier_comparison(comparison, out / "comparison.png", header=header)

    tune = grid_search(grid, train, folds, seed, select_k, bins, selection)
    tune_global = grid_search(grid, train, folds, seed, select_k, bins, "global")
    _write(out / "tuning.csv", tune_csv(tune, header))
    _write(out / "tuning_global.csv", tune_csv(tune_global, header))
    plots.tuning_curves(tune, out / "tuning.png", header=header)

    model = fit(tune.best_spec, train, ranked.selected if select_k else None)
    model.meta.update({"gaitlab": __version__, "seed": seed, "trained_rows": train.n})
    model.meta.update({f"config.{k}": v for k, v in cfg.items()})
    write_model(out / "model.glm", model)

    holdout = evaluate_holdout(model, test)
    preds = predict_table(model, test.without_labels())
    _write(out / "evaluation.csv", reports_csv([holdout], header))
    _write(out / "predictions.csv", preds.to_csv(header))
    if len(model.feature_names) >= 2:
        plots.knn_scatter(train, test, tuple(model.feature_names[:2]), out / "knn_scatter.png",
                          preds.labels, header=header)

    summary = _summary(ranked, comparison, tune, tune_global, holdout, len(sessions),
                       len(failures), ds, train, test, header)
    _write(out / "summary.txt", summary)
    print(summary[summary.index("sessions:"):], end="")
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", default=None,
                        help=f"random seed (default: config value, then ${SEED_ENV}, then 0)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a setting; repeatable")

    parser = _Parser(prog=PROG, description="Wearable gait screening pipeline.")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--config", help="key=value cohort config file")
    p.add_argument("--out", required=True, help="output directory for session CSVs")
    p.add_argument("--raw", action="store_true", help="also write wire-format .bin streams")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="decode raw frames into a session CSV")
    p.add_argument("source", nargs="?", help="frame file, or '-' for stdin")
    p.add_argument("--tcp", type=int, metavar="PORT", help="accept one TCP connection instead")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--timeout", type=float, default=30.0, help="TCP timeout in seconds")
    p.add_argument("--subject", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], default="walk")
    p.add_argument("--rate", type=int, default=100, help="nominal sample rate in Hz")
    p.add_argument("--label", choices=["0", "1", "?"], default="?")
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="PNG trace of the first seconds with detected steps")
    p.set_defaults(func=cmd_ingest, seed=None)

    p = sub.add_parser("extract", parents=[common], help="session CSVs to a feature table")
    p.add_argument("inputs", nargs="+", help="session CSV files or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--failures", help="CSV listing sessions that failed extraction")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("rank", parents=[common], help="mutual-information feature ranking")
    p.add_argument("table")
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="PNG bar chart")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("tune", parents=[common], help="grid search with stratified CV")
    p.add_argument("table")
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="PNG accuracy-vs-k plot")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", parents=[common], help="fit one model and write a GLM1 file")
    p.add_argument("table")
    p.add_argument("--spec", required=True, help="e.g. 'knn:k=7,metric=manhattan'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a labeled table")
    p.add_argument("table")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate, seed=None)

    p = sub.add_parser("predict", help="predict labels for a table")
    p.add_argument("table")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict, seed=None)

    p = sub.add_parser("pipeline", parents=[common], help="simulate through evaluation")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)
    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv`` and run one subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else 0
    except InvariantError as exc:
        print(f"{PROG}: internal error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"{PROG}: error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (GaitlabError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
