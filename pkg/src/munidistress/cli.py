"""Command-line entry point.

Every flag can also be set through an environment variable named
``MUNIDIST_<FLAG>`` (upper case, dashes as underscores), e.g.
``MUNIDIST_SEED=3``; an explicit flag wins over the environment.

Exit status: 0 on success, 1 on invalid input, 2 on an internal fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import report as out
from .analysis import coefficient_report, forward_fp_analysis
from .domain import (DEFAULT_YEARS, LAGGED_INDICATORS, CalibrationError, DistressError,
                     InvalidInputError)
from .evaluation import derive_seed, expand_grid, grid_search, stratified_kfold
from .features import (FeatureMatrix, apply_standardizer, build_features, fit_pca,
                       fit_standardizer, project)
from .ingest import load_panel, write_archive_csv, write_panel_csv
from .models import DEFAULT_PARAMS, FAMILIES, class_weights, default_threshold, \
    predict_labels, predict_scores, train_model
from .models import io as model_io
from .pipeline import FOLDS, MODEL, PipelineConfig, run_pipeline, split_features
from .synth import SynthConfig, generate

ENV_PREFIX = "MUNIDIST_"
SUBCOMMANDS = ("synth", "ingest", "featurize", "cv", "grid", "train", "evaluate", "predict",
               "explain", "fp-analysis", "pca")

log = logging.getLogger("munidistress")


class UsageError(InvalidInputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    panel: Path | None = None
    archive: Path | None = None
    out: Path = Path("out")
    seed: int = 0
    train_fraction: float = 0.8
    folds: int = 5
    threshold: float | None = None
    family: str = "logistic"
    grid: dict | None = None
    params: dict | None = None
    lagged: tuple[str, ...] = LAGGED_INDICATORS
    horizon: int = 4
    anchor_year: int | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise InvalidInputError("--train-fraction must lie strictly between 0 and 1")
        if self.folds < 2:
            raise InvalidInputError("--folds must be at least 2")
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown family {self.family!r}")
        if self.horizon < 1:
            raise InvalidInputError("--horizon must be at least 1")
        if self.jobs < 1:
            raise InvalidInputError("--jobs must be at least 1")
        for p in (self.panel, self.archive):
            if p is not None and not Path(p).is_file():
                raise InvalidInputError(f"no such file: {p}")

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.family, self.grid, self.params, self.train_fraction,
                              self.folds, self.seed, self.threshold, self.jobs, self.lagged)

    def require_inputs(self) -> None:
        if self.panel is None or self.archive is None:
            raise InvalidInputError("--panel and --archive are required")


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from None


def _lag_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _years(text: str) -> tuple[int, int]:
    try:
        a, b = text.split("-")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError("expected FIRST-LAST, e.g. 2016-2020") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--panel", type=Path, help="financial panel CSV")
    p.add_argument("--archive", type=Path, help="distress archive CSV")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--threshold", type=float, default=None,
                   help="decision threshold (default 0.5; 0 for svm margins)")
    p.add_argument("--family", choices=FAMILIES, default="logistic")
    p.add_argument("--grid", type=Path, default=None, help="JSON file of hyperparameter lists")
    p.add_argument("--params", type=_json_arg, default=None,
                   help='fixed hyperparameters as JSON, e.g. \'{"penalty": "l2", "C": 5}\'')
    p.add_argument("--lags", type=_lag_list, default=LAGGED_INDICATORS,
                   help="comma-separated indicators to difference year over year")
    p.add_argument("--horizon", type=int, default=4)
    p.add_argument("--anchor-year", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--model", type=Path, default=None, help="serialized model JSON")
    p.add_argument("--matrix", type=Path, default=None, help="feature table CSV (predict)")
    p.add_argument("--components", type=int, default=2, help="PCA components")
    # synth
    p.add_argument("--n-municipalities", type=int, default=7904)
    p.add_argument("--years", type=_years, default=DEFAULT_YEARS)
    p.add_argument("--prevalence", type=float, default=416 / 39520)
    p.add_argument("--noise-scale", type=float, default=0.3)
    p.add_argument("--margin", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="munidistress",
                     description="Municipal financial-distress early-warning pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic panel, archive and ground truth",
        "ingest": "parse, merge and clean the input CSVs",
        "featurize": "write the unscaled design matrix",
        "cv": "k-fold cross-validation of fixed hyperparameters",
        "grid": "cross-validated grid search",
        "train": "fit one model on the training split",
        "evaluate": "grid search, refit and hold-out test",
        "predict": "score rows with a saved model",
        "explain": "rank logistic coefficients",
        "fp-analysis": "follow anchor-year false positives forward",
        "pca": "principal-component projection of the design matrix",
    }
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=helps[name], description=helps[name]))
    return parser


def _apply_env(args: argparse.Namespace, parser: argparse.ArgumentParser, argv) -> None:
    """Fill flags not given on the command line from MUNIDIST_* variables."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for action in sub._actions:
        if not action.option_strings or action.dest == "help":
            continue
        flag = action.option_strings[-1]
        if flag in given:
            continue
        env = ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper()
        if env in os.environ:
            raw = os.environ[env]
            try:
                value = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{env}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{env}: invalid choice {value!r}")
            setattr(args, action.dest, value)


def _load_grid(path: Path | None, family: str):
    if path is None:
        return None
    try:
        grid = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"grid file {path} is not valid JSON: {exc}") from None
    if family in grid and isinstance(grid[family], dict):
        grid = grid[family]
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise InvalidInputError("grid file must map hyperparameter names to value lists")
    expand_grid(family, grid)
    return grid


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(args.panel, args.archive, args.out, args.seed, args.train_fraction,
                    args.folds, args.threshold, args.family,
                    _load_grid(args.grid, args.family), args.params, tuple(args.lags),
                    args.horizon, args.anchor_year, args.jobs)
    if cfg.params is not None and not isinstance(cfg.params, dict):
        raise InvalidInputError("--params must be a JSON object")
    cfg.validate()
    return cfg


def _ingest(cfg: RunConfig):
    cfg.require_inputs()
    return load_panel(cfg.panel, cfg.archive)


def _features(cfg: RunConfig):
    panel, report, _ = _ingest(cfg)
    fm, n_imputed = build_features(panel, cfg.lagged)
    return panel, report, fm, n_imputed


def _threshold(cfg: RunConfig) -> float:
    return default_threshold(cfg.family) if cfg.threshold is None else cfg.threshold


def _write_curves(outdir: Path, prefix: str, roc, pr) -> None:
    out.write_curve(outdir / f"{prefix}_roc.csv", roc)
    out.write_curve(outdir / f"{prefix}_pr.csv", pr)


def _load_model(cfg: RunConfig, args):
    if args.model is None:
        raise InvalidInputError("--model is required")
    try:
        text = Path(args.model).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InvalidInputError(f"no such file: {args.model}") from None
    try:
        return model_io.loads(text)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidInputError(f"cannot read model {args.model}: {exc}") from None


def cmd_synth(cfg: RunConfig, args) -> str:
    scfg = SynthConfig(args.n_municipalities, tuple(args.years), args.prevalence, cfg.seed,
                       None, args.noise_scale, None, args.margin)
    panel, archive, truth = generate(scfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with out.atomic_path(cfg.out / "panel.csv") as tmp:
        write_panel_csv(panel, tmp)
    with out.atomic_path(cfg.out / "archive.csv") as tmp:
        write_archive_csv(archive, tmp)
    out.write_text(cfg.out / "ground_truth.json", json.dumps(truth.to_dict(), sort_keys=True))
    return (f"synth: {len(panel)} records, {panel.n_positive} positive, "
            f"{len(archive.events)} archive events -> {cfg.out}")


def cmd_ingest(cfg: RunConfig, args) -> str:
    panel, report, archive = _ingest(cfg)
    with out.atomic_path(cfg.out / "clean_panel.csv") as tmp:
        panel.frame.to_csv(tmp, index=False, float_format=None)
    out.write_json(cfg.out / "cleaning_report.json", report.to_dict())
    return (f"ingest: kept {report.rows_kept} of {report.rows_read} rows, "
            f"{panel.n_positive} positive -> {cfg.out}")


def cmd_featurize(cfg: RunConfig, args) -> str:
    _, _, fm, n_imputed = _features(cfg)
    with out.atomic_path(cfg.out / "features.csv") as tmp:
        fm.to_csv(tmp)
    out.write_json(cfg.out / "features_report.json",
                   {"kind": "features_report", "n_rows": len(fm),
                    "columns": list(fm.column_names), "n_lag_imputed": n_imputed})
    return f"featurize: {len(fm)} rows x {len(fm.column_names)} columns -> {cfg.out}"


def _train_portion(cfg: RunConfig):
    _, _, fm, _ = _features(cfg)
    train_idx, test_idx = split_features(fm, cfg.pipeline())
    return fm, fm.subset(train_idx), fm.subset(test_idx)


def _search_artifacts(cfg: RunConfig, result, prefix: str) -> None:
    header, rows = result.table()
    out.write_csv(cfg.out / f"{prefix}_candidates.csv", header, rows)
    roc, pr = result.curves()
    _write_curves(cfg.out, prefix, roc, pr)
    doc = result.to_dict()
    doc.update({"kind": f"{prefix}_report", "roc": roc.to_dict(), "pr": pr.to_dict(),
                "seed": cfg.seed, "threshold": _threshold(cfg)})
    out.write_json(cfg.out / f"{prefix}_report.json", doc)


def cmd_cv(cfg: RunConfig, args) -> str:
    _, train, _ = _train_portion(cfg)
    params = cfg.params if cfg.params is not None else DEFAULT_PARAMS[cfg.family]
    folds = stratified_kfold(train, cfg.folds, derive_seed(cfg.seed, FOLDS))
    result = grid_search(cfg.family, train, [params], folds, derive_seed(cfg.seed, MODEL),
                         jobs=cfg.jobs, threshold=cfg.threshold)
    _search_artifacts(cfg, result, "cv")
    return f"cv: {cfg.family} {params} mean macro F1 {result.best.mean_f1:.4f} -> {cfg.out}"


def cmd_grid(cfg: RunConfig, args) -> str:
    _, train, _ = _train_portion(cfg)
    folds = stratified_kfold(train, cfg.folds, derive_seed(cfg.seed, FOLDS))
    result = grid_search(cfg.family, train, cfg.grid, folds, derive_seed(cfg.seed, MODEL),
                         jobs=cfg.jobs, threshold=cfg.threshold)
    _search_artifacts(cfg, result, "grid")
    return (f"grid: {len(result.candidates)} candidates, best {result.best.params} "
            f"mean macro F1 {result.best.mean_f1:.4f} -> {cfg.out}")


def cmd_train(cfg: RunConfig, args) -> str:
    _, train, _ = _train_portion(cfg)
    params = cfg.params if cfg.params is not None else DEFAULT_PARAMS[cfg.family]
    std = fit_standardizer(train)
    weights = class_weights(train.labels)
    seed = derive_seed(cfg.seed, MODEL)
    model = train_model(cfg.family, apply_standardizer(std, train), weights, params, seed)
    meta = {"seed": seed, "class_weights": weights.to_dict(), "n_train": len(train),
            "split": {"seed": cfg.seed, "train_fraction": cfg.train_fraction}}
    out.write_text(cfg.out / "model.json", model_io.dumps(model, std, meta))
    return f"train: {cfg.family} {model.params} on {len(train)} rows -> {cfg.out / 'model.json'}"


def cmd_evaluate(cfg: RunConfig, args) -> str:
    panel, report, _ = _ingest(cfg)
    res = run_pipeline(panel, cfg.pipeline(), policy=None)
    ev = res.evaluation
    doc = ev.to_dict()
    doc["seed"] = cfg.seed
    doc["cleaning"] = report.to_dict()
    out.write_json(cfg.out / "evaluation_report.json", doc)
    meta = dict(ev.model["metadata"])
    meta["split"] = {"seed": cfg.seed, "train_fraction": cfg.train_fraction}
    out.write_text(cfg.out / "model.json", model_io.dumps(res.model, res.standardizer, meta))
    _write_curves(cfg.out, "test", ev.roc, ev.pr)
    if res.search is not None:
        _search_artifacts(cfg, res.search, "grid")
    test = res.test
    out.write_csv(cfg.out / "test_predictions.csv",
                  ["municipality_id", "year", "score", "predicted", "label"],
                  [[m, int(y), s, int(p), int(l)] for m, y, s, p, l in
                   zip(test.municipality_ids, test.years, ev.test_scores,
                       predict_labels(ev.test_scores, ev.threshold), test.labels)])
    cm = ev.confusion
    return (f"evaluate: {cfg.family} {ev.params} test tp={cm.tp} fn={cm.fn} fp={cm.fp} "
            f"tn={cm.tn} macro F1 {ev.metrics.macro_f1:.4f} -> {cfg.out}")


def cmd_predict(cfg: RunConfig, args) -> str:
    model, std, _ = _load_model(cfg, args)
    if args.matrix is not None:
        try:
            fm = FeatureMatrix.from_csv(args.matrix)
        except FileNotFoundError:
            raise InvalidInputError(f"no such file: {args.matrix}") from None
    else:
        _, _, fm, _ = _features(cfg)
    rows = apply_standardizer(std, fm) if std is not None else fm
    scores = predict_scores(model, rows)
    thr = default_threshold(model) if cfg.threshold is None else cfg.threshold
    pred = predict_labels(scores, thr)
    out.write_csv(cfg.out / "predictions.csv", ["municipality_id", "year", "score", "predicted"],
                  [[m, int(y), s, int(p)] for m, y, s, p in
                   zip(fm.municipality_ids, fm.years, scores, pred)])
    return f"predict: {len(fm)} rows, {int(pred.sum())} predicted positive -> {cfg.out}"


def cmd_explain(cfg: RunConfig, args) -> str:
    model, _, _ = _load_model(cfg, args)
    rep = coefficient_report(model)
    out.write_json(cfg.out / "coefficients.json", rep.to_dict())
    header, rows = rep.table()
    out.write_csv(cfg.out / "coefficients.csv", header, rows)
    top = rep.entries[0]
    return f"explain: {len(rep.entries)} coefficients, largest {top[0]}={top[1]:.4f} -> {cfg.out}"


def cmd_fp_analysis(cfg: RunConfig, args) -> str:
    model, std, _ = _load_model(cfg, args)
    panel, _, fm, _ = _features(cfg)
    _, test_idx = split_features(fm, cfg.pipeline())
    anchor = cfg.anchor_year if cfg.anchor_year is not None else int(panel.frame["year"].min())
    rep = forward_fp_analysis(model, fm.subset(test_idx), panel, anchor, cfg.horizon,
                              cfg.threshold, std)
    out.write_json(cfg.out / "fp_report.json", rep.to_dict())
    header, rows = rep.table()
    out.write_csv(cfg.out / "fp_detail.csv", header, rows)
    return (f"fp-analysis: {rep.n_false_positive} false positives in {anchor}, "
            f"{rep.n_fp_later_distressed} later distressed "
            f"({rep.fraction_later_distressed:.3f}) -> {cfg.out}")


def cmd_pca(cfg: RunConfig, args) -> str:
    _, _, fm, _ = _features(cfg)
    scaled = apply_standardizer(fit_standardizer(fm), fm)
    pca = fit_pca(scaled, args.components)
    scores = project(pca, scaled)
    out.write_json(cfg.out / "pca_report.json",
                   {"kind": "pca_report", "k": args.components,
                    "explained_variance": pca.explained_variance.tolist(),
                    "explained_variance_ratio": pca.explained_variance_ratio.tolist(),
                    "cumulative_ratio": float(pca.explained_variance_ratio.sum()),
                    "columns": list(pca.column_names),
                    "components": pca.components.tolist()})
    header = ["municipality_id", "year", *[f"pc{i + 1}" for i in range(args.components)],
              "label"]
    out.write_csv(cfg.out / "pca_scores.csv", header,
                  [[m, int(y), *s, int(l)] for m, y, s, l in
                   zip(fm.municipality_ids, fm.years, scores.tolist(), fm.labels)])
    return (f"pca: {args.components} components explain "
            f"{pca.explained_variance_ratio.sum():.3f} of variance -> {cfg.out}")


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "featurize": cmd_featurize, "cv": cmd_cv,
    "grid": cmd_grid, "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict,
    "explain": cmd_explain, "fp-analysis": cmd_fp_analysis, "pca": cmd_pca,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        _apply_env(args, parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        cfg = config_from_args(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        print(COMMANDS[args.command](cfg, args))
        return 0
    except (InvalidInputError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DistressError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal fault", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
