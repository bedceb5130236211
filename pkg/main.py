"""
Command-line entry point.

  python main.py gen --spec default_spec.json --out data
  python main.py calibrate --out runs
  python main.py run --data data --out runs --respondent oracle --scorer heuristic
  python main.py run --spec default_spec.json --trials 10 --ablation no-history --out runs
  python main.py eval --out runs
  python main.py replay runs/coin/trial_000/trace.json

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import timedelta
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from ownership.acquisition import RunTrace, compare_traces, run_acquisition, trace_respondent
from ownership.base import AcquisitionAborted, InputError, OwnershipError, describe_error
from ownership.baselines import as_owner_sets, predict_all
from ownership.config import RunConfig, load_config
from ownership.conformal import (
    calibrate_environment,
    coverage,
    fit_calibration,
    load_calibration,
    save_calibration,
)
from ownership.datagen import (
    DEFAULT_SPEC_PATH,
    Environment,
    generate_environment,
    load_dataset,
    load_spec,
    load_truth,
    save_truth,
    split_by_time,
    write_dataset,
)
from ownership.evaluation import (
    compute_metrics,
    report_rows,
    step_curve,
    step_rows,
    summarize,
    summarize_steps,
)
from ownership.interaction import ConsoleRespondent, OracleRespondent, Respondent, ScriptedRespondent
from ownership.llm_server import Completer, LlmCompleter, ReplayCompleter
from ownership.scoring import ScorerBackend
from ownership.usage_history import segment_sessions
from ownership.utils import read_json, write_json

logger = logging.getLogger("ownership.cli")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
OBJECT_CONTEXT_NOTE = "context-disabled scorer; approximates an object-centric LLM baseline"

# ----------------------------------------------------------------------
# Backends from configuration
# ----------------------------------------------------------------------


def build_completer(cfg: RunConfig) -> Optional[Completer]:
    kind = cfg.scorer_kind
    if kind == "heuristic":
        return None
    if kind == "llm":
        return LlmCompleter(cfg.llm_params(), transcript_path=cfg.record)
    if kind == "replay":
        path = cfg.scorer.split(":", 1)[1] if ":" in cfg.scorer else ""
        if not path:
            raise InputError("Use --scorer replay:<transcript file>")
        return ReplayCompleter(path)
    raise InputError(f"Unknown scorer '{cfg.scorer}'. Expected heuristic, llm or replay:<file>")


def build_scorer(
    cfg: RunConfig,
    completer: Optional[Completer],
    affinity: Optional[Mapping[str, Mapping[str, float]]] = None,
) -> ScorerBackend:
    """Scenario affinity entries are the base; --config affinity entries override them per role and class."""
    table = {role: dict(row) for role, row in (affinity or {}).items()}
    for role, row in cfg.affinity.items():
        table.setdefault(role, {}).update(row)
    return ScorerBackend(
        kind=cfg.scorer_kind,
        completer=completer,
        weights=cfg.heuristic_weights(),
        affinity=table or None,
        window_days=cfg.window_days,
    )


def build_respondent(spec: str, env: Environment) -> Respondent:
    if spec == "oracle":
        return OracleRespondent(env.truth.owners, env.roster)
    if spec == "console":
        return ConsoleRespondent()
    if spec.startswith("scripted:"):
        return ScriptedRespondent.from_file(spec.split(":", 1)[1])
    raise InputError(f"Unknown respondent '{spec}'. Expected oracle, console or scripted:<file>")


def method_label(cfg: RunConfig) -> str:
    if cfg.method != "coin":
        return cfg.method
    label = cfg.flags().label
    return "coin" if label == "full" else f"coin_{label}"


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> int:
    spec = load_spec(cfg.spec or DEFAULT_SPEC_PATH)
    seed = cfg.seed if cfg.seed else spec.seed
    env = generate_environment(spec, seed=seed)
    out = Path(cfg.data_dir or cfg.out)
    write_dataset(env, out)

    gap = timedelta(minutes=cfg.session_gap_minutes)
    sessions = sum(len(segment_sessions(env.log, oid, gap)) for oid in env.map.ids)
    by_category: Dict[str, int] = {}
    for category in env.truth.categories.values():
        by_category[category] = by_category.get(category, 0) + 1
    print(f"Generated dataset in {out}")
    print(f"  users:    {len(env.roster)} ({', '.join(env.roster.names)})")
    print(f"  objects:  {len(env.map)} " + ", ".join(f"{k}={v}" for k, v in sorted(by_category.items())))
    print(f"  events:   {len(env.log)}")
    print(f"  sessions: {sessions}")
    return 0


def cmd_calibrate(cfg: RunConfig) -> int:
    spec = load_spec(cfg.spec or DEFAULT_SPEC_PATH)
    completer = build_completer(cfg)
    backend = build_scorer(cfg, completer, spec.affinity)
    flags = cfg.flags()
    samples = calibrate_environment(
        spec,
        seed=cfg.seed,
        n_envs=cfg.calibration_envs,
        backend=backend,
        spatial=cfg.spatial_params(),
        similarity=cfg.similarity_params(),
        flags=flags,
        window_days=cfg.window_days,
        train_days=cfg.train_days,
        workers=cfg.workers,
    )
    model = fit_calibration(samples, cfg.alpha, cfg.alpha_cp, scorer=f"{cfg.scorer_kind}:{flags.label}")
    path = Path(cfg.calibration or Path(cfg.out) / "calibration.json")
    save_calibration(model, path)
    cov = coverage(samples, model.q_alpha)
    print(f"Calibration written to {path}")
    print(f"  samples: {model.n_calibration}  q_alpha: {model.q_alpha:.4f}  q_cp: {model.q_cp:.4f}")
    print(f"  in-sample coverage: full={cov['full']:.3f} any-owner={cov['any']:.3f}")
    return 0


def _write_transcript(trace: RunTrace, path: Path) -> None:
    lines = []
    for step in trace.steps:
        if step.question is None:
            continue
        lines.append(f"[{step.index}] {step.selected}")
        lines.append(f"  Q: {step.question['text']}")
        if step.answer is not None:
            lines.append(f"  A: {step.answer}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _run_trial(cfg: RunConfig, env: Environment, trial_dir: Path, data_dir: str, cal_path: Path) -> None:
    label = method_label(cfg)
    save_truth(env.truth, trial_dir / "truth.json")
    write_json(
        {"config": cfg.model_dump(mode="json"), "data_dir": data_dir, "calibration": str(cal_path)},
        trial_dir / "run.json",
    )

    if cfg.method != "coin":
        predictions = as_owner_sets(predict_all(env.log, env.map.ids, cfg.method))
        write_json({"method": label, "predictions": predictions, "n_questions": 0}, trial_dir / "predictions.json")
        return

    cal = load_calibration(cal_path)
    completer = build_completer(cfg)
    scorer = build_scorer(cfg, completer, env.affinity)
    dialogue = completer if cfg.uses_llm_dialogue else None
    log = env.log if cfg.train_days is None else split_by_time(env.log, cfg.train_days)[0]
    try:
        trace = run_acquisition(
            env.map,
            log,
            env.roster,
            scorer,
            build_respondent(cfg.respondent, env),
            cal,
            q_max=cfg.q_max,
            truth=env.truth.owners,
            params=cfg.acquisition_params(),
            question_completer=dialogue,
            answer_completer=dialogue,
        )
    except AcquisitionAborted as e:
        if isinstance(e.trace, RunTrace):
            write_json(e.trace.to_dict(), trial_dir / "trace.json")
            _write_transcript(e.trace, trial_dir / "transcript.txt")
        raise
    write_json(trace.to_dict(), trial_dir / "trace.json")
    _write_transcript(trace, trial_dir / "transcript.txt")
    write_json(
        {"method": label, "predictions": trace.final_predictions, "n_questions": trace.q_cnt},
        trial_dir / "predictions.json",
    )
    logger.info("%s: %d question(s), stop=%s", trial_dir, trace.q_cnt, trace.stop_reason)


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if cfg.scorer_kind == "llm" and not cfg.record:
        cfg = cfg.model_copy(update={"record": str(out / "transcript.sqlite")})
    cal_path = Path(cfg.calibration or out / "calibration.json")
    if cfg.data_dir and cfg.trials > 1:
        raise InputError("--trials > 1 needs --spec; a fixed --data dataset would repeat the same trial")
    if cfg.method == "coin" and not cal_path.exists():
        raise InputError(f"Calibration file '{cal_path}' not found; run the calibrate command first")

    base_env = load_dataset(cfg.data_dir) if cfg.data_dir else None
    if base_env is None and not cfg.spec:
        raise InputError("run needs --data <dataset dir> or --spec <scenario spec>")
    spec = load_spec(cfg.spec) if base_env is None else None

    run_dir = out / method_label(cfg)
    for i in range(cfg.trials):
        trial_dir = run_dir / f"trial_{i:03d}"
        if base_env is not None:
            env, data_dir = base_env, str(cfg.data_dir)
        else:
            env = generate_environment(spec, seed=cfg.seed + i)
            data_dir = str(trial_dir / "data")
            write_dataset(env, data_dir)
        _run_trial(cfg, env, trial_dir, data_dir, cal_path)
    print(f"Wrote {cfg.trials} trial(s) to {run_dir}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    rows: List[Dict[str, Any]] = []
    curves: Dict[str, List[List[Any]]] = {}
    notes: Dict[str, str] = {}
    for pred_path in sorted(out.glob("*/trial_*/predictions.json")):
        trial_dir = pred_path.parent
        trial = int(trial_dir.name.split("_")[-1])
        data = read_json(pred_path)
        method = str(data["method"])
        truth = load_truth(trial_dir / "truth.json")
        report = compute_metrics(data["predictions"], truth.owners, truth.categories, data.get("n_questions"))
        rows.extend(report_rows(method, trial, report))
        if "object-context-only" in method:
            notes[method] = OBJECT_CONTEXT_NOTE
        trace_path = trial_dir / "trace.json"
        if trace_path.exists():
            trace = RunTrace.from_dict(read_json(trace_path))
            curves.setdefault(method, []).append([trial, step_curve(trace, truth.owners)])
    if not rows:
        raise InputError(f"No predictions found under '{out}'")

    summary = summarize(rows)
    srows: List[Dict[str, Any]] = []
    for method, items in sorted(curves.items()):
        length = max(len(curve) for _, curve in items)
        for trial, curve in items:
            srows.extend(step_rows(method, trial, curve, length))
    steps = summarize_steps(srows)

    report: Dict[str, Any] = {}
    for rec in summary.to_dict(orient="records"):
        report.setdefault(rec["method"], {}).setdefault(rec["category"], {})[rec["metric"]] = {
            "mean": rec["mean"],
            "std": rec["std"],
            "trials": int(rec["trials"]),
        }
    for method, note in notes.items():
        report[method]["note"] = note
    write_json(report, out / "report.json")
    summary.to_csv(out / "report.csv", index=False, float_format="%.6f")
    steps.to_csv(out / "steps.csv", index=False, float_format="%.6f")

    overall = summary[summary["category"] == "overall"]
    print(overall.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    print(f"\nReports written to {out}")
    return 0


def cmd_replay(trace_path: str, overrides: Dict[str, Any]) -> int:
    trial_dir = Path(trace_path).parent
    meta = read_json(trial_dir / "run.json")
    saved = dict(meta["config"])
    if overrides.get("scorer"):
        saved["scorer"] = overrides["scorer"]
    elif saved.get("scorer") == "llm":
        saved["scorer"] = f"replay:{saved.get('record')}"
    saved["respondent"] = "oracle"
    cfg = load_config(None, saved)

    env = load_dataset(meta["data_dir"])
    cal = load_calibration(meta["calibration"])
    original = RunTrace.from_dict(read_json(trace_path))
    completer = build_completer(cfg)
    dialogue = completer if cfg.uses_llm_dialogue else None
    log = env.log if cfg.train_days is None else split_by_time(env.log, cfg.train_days)[0]
    try:
        replayed = run_acquisition(
            env.map,
            log,
            env.roster,
            build_scorer(cfg, completer, env.affinity),
            trace_respondent(original),
            cal,
            q_max=original.q_max,
            truth=env.truth.owners,
            params=cfg.acquisition_params(),
            question_completer=dialogue,
            answer_completer=dialogue,
        )
    except AcquisitionAborted as e:
        if not original.aborted:
            raise
        replayed = e.trace
    diffs = compare_traces(original, replayed)
    if diffs:
        print("Replay differs from the recorded trace:")
        for d in diffs:
            print(f"  - {d}")
        return 2
    print(f"Replay matches {trace_path} ({replayed.q_cnt} question(s), {len(replayed.steps)} pass(es))")
    return 0


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS)


def _scoring(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scorer", help="heuristic | llm | replay:<transcript>")
    parser.add_argument("--ablation", help="comma list: no-questioning, no-background, no-history, "
                        "no-neighbors, no-similars, object-context-only")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--record", help="transcript file recording live llm completions")
    parser.add_argument("--train-days", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description="Ownership inference with active questioning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--spec", help="scenario spec (default: bundled default_spec.json)")

    p = sub.add_parser("calibrate", help="calibrate conformal thresholds on generated environments")
    _common(p)
    _scoring(p)
    p.add_argument("--spec")
    p.add_argument("--calibration", help="calibration file to write")
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-cp", type=float)
    p.add_argument("--calibration-envs", type=int)

    p = sub.add_parser("run", help="run acquisition (or a baseline) for one or more trials")
    _common(p)
    _scoring(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--spec", help="regenerate an environment per trial from this spec")
    p.add_argument("--calibration")
    p.add_argument("--respondent", help="oracle | scripted:<file> | console")
    p.add_argument("--method", choices=["coin", "last_user", "frequency"])
    p.add_argument("--dialogue", choices=["auto", "template", "llm"])
    p.add_argument("--q-max", type=int)
    p.add_argument("--trials", type=int, help="number of trials; with --spec each trial regenerates the household (seed + i)")

    p = sub.add_parser("eval", help="evaluate every run under --out")
    _common(p)

    p = sub.add_parser("replay", help="re-execute a recorded trace and compare")
    p.add_argument("trace")
    p.add_argument("--scorer")
    p.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS)
    return parser


_OVERRIDES = {
    "seed": "seed",
    "out": "out",
    "spec": "spec",
    "data": "data_dir",
    "calibration": "calibration",
    "scorer": "scorer",
    "respondent": "respondent",
    "method": "method",
    "dialogue": "dialogue",
    "q_max": "q_max",
    "trials": "trials",
    "workers": "workers",
    "record": "record",
    "train_days": "train_days",
    "alpha": "alpha",
    "alpha_cp": "alpha_cp",
    "calibration_envs": "calibration_envs",
}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = {
        field: getattr(args, name, None) for name, field in _OVERRIDES.items()
    }
    ablation = getattr(args, "ablation", None)
    if ablation is not None:
        overrides["ablation"] = [a.strip() for a in ablation.split(",") if a.strip()]
    return load_config(getattr(args, "config", None), overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.environ.get("OWNERSHIP_LOG_LEVEL") or "INFO").upper()
    if level not in LOG_LEVELS:
        level = "INFO"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args.trace, {"scorer": args.scorer})
        cfg = config_from_args(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_eval(cfg)
    except InputError as e:
        print(json.dumps(describe_error(e)), file=sys.stderr)
        return 1
    except (OwnershipError, OSError) as e:
        logger.error("%s", e)
        print(json.dumps(describe_error(e)), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
