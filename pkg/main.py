# main.py
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from core.base_space import FiniteBaseSpace
from core.config_space import ConfigSpace, Configuration, mixed_poisson_weights, poisson_weights
from core.errors import InvalidInputError, LabError
from core.models import ExperimentConfig, LevyMixture
from core.settings import LabDefaults, get_settings
from data import default_registry
from data.io_utils import read_json, write_frame_csv

load_dotenv()

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
)
logger = logging.getLogger("upsilon-lab")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2


def load_config(path: str = "config.yaml") -> dict:
    if not Path(path).exists():
        logger.debug("no lab config at %s; using defaults", path)
        return {}
    with open(path) as f:
        return yaml.safe_load(f) or {}


def parse_levy(text: str) -> LevyMixture:
    """``"1:0.5,2:0.5"`` -> atoms (s, w)."""
    pairs = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        s, sep, w = item.partition(":")
        if not sep:
            raise InvalidInputError(f"mixture atom {item!r} must read s:w")
        pairs.append((float(s), float(w)))
    return LevyMixture.from_pairs(pairs)


def parse_levels(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def experiment_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Experiment file (if any) overlaid with explicit command-line flags."""
    data: dict = {}
    if getattr(args, "experiment", None):
        data = read_json(args.experiment)
        if not isinstance(data, dict):
            raise InvalidInputError(f"{args.experiment} must hold a JSON object")
    overrides = {
        "fixture": getattr(args, "fixture", None),
        "n_max": getattr(args, "n_max", None),
        "s": getattr(args, "s", None),
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
        "output": getattr(args, "output", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "levy", None):
        data["levy"] = parse_levy(args.levy).model_dump()
    if getattr(args, "suites", None):
        data["suites"] = [s.strip() for s in args.suites.split(",") if s.strip()]
    if getattr(args, "t_grid", None):
        data["t_grid"] = [float(t) for t in args.t_grid.split(",")]
    if "threads" not in data:
        data["threads"] = get_settings().threads
    data.setdefault("fixture", "two_state")
    return ExperimentConfig.model_validate(data)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_validate(args: argparse.Namespace, lab: LabDefaults) -> int:
    config = experiment_from_args(args)
    base = default_registry().build(config.fixture)
    base.require_irreducible()
    print(f"valid: {config.fixture.label} ({base.n} states, irreducible, metric={'yes' if base.metric is not None else 'no'})")
    return EXIT_OK


def run_enumerate(args: argparse.Namespace, lab: LabDefaults) -> int:
    config = experiment_from_args(args)
    base = default_registry().build(config.fixture)
    cspace = ConfigSpace(base, config.n_max, lab.max_configs)
    print(f"{config.fixture.label}: {len(cspace)} configurations up to {cspace.n_max} particles")
    for k in range(cspace.n_max + 1):
        print(f"  sector {k}: {cspace.sector_size(k)}")
    if args.output:
        import pandas as pd

        frame = pd.DataFrame(cspace.occupations, columns=list(base.states))
        frame.insert(0, "total", cspace.totals)
        write_frame_csv(frame, args.output)
        print(f"wrote {args.output}")
    if args.generator_csv:
        from core.lift import export_generator_csv

        export_generator_csv(cspace, args.generator_csv)
        print(f"wrote {args.generator_csv}")
    return EXIT_OK


def run_measures(args: argparse.Namespace, lab: LabDefaults) -> int:
    config = experiment_from_args(args)
    base = default_registry().build(config.fixture)
    cspace = ConfigSpace(base, config.n_max, lab.max_configs)
    mu = mixed_poisson_weights(cspace, config.levy) if config.levy is not None else poisson_weights(cspace, config.intensity)
    print(f"{mu.kind} measure on {len(cspace)} configurations: mass {mu.mass:.12g}, tail {mu.tail:.3e}")
    if args.output:
        mu.to_csv(cspace, args.output)
        print(f"wrote {args.output}")
    return EXIT_OK


def parse_configuration(base: FiniteBaseSpace, text: str) -> Configuration:
    """Comma-separated state labels with repetition; an empty string is the empty configuration."""
    return Configuration.from_labels(base, [s.strip() for s in text.split(",") if s.strip()])


def run_transport(args: argparse.Namespace, lab: LabDefaults) -> int:
    from core.lift import kernel_config_row
    from core.transport import config_distance, dirac, wasserstein_config

    config = experiment_from_args(args)
    base = default_registry().build(config.fixture)
    gamma = parse_configuration(base, args.source)
    eta = parse_configuration(base, args.target)
    cspace = ConfigSpace(base, max(gamma.total, eta.total), lab.max_configs)
    if args.t is None:
        mu, nu = dirac(cspace, gamma), dirac(cspace, eta)
    else:
        mu, nu = kernel_config_row(cspace, gamma, args.t), kernel_config_row(cspace, eta, args.t)
    plan = wasserstein_config(cspace, mu, nu, limit=lab.ot_sector_limit)
    print(f"d({gamma.label(base)}, {eta.label(base)}) = {config_distance(base, gamma, eta).value:.12g}")
    print(f"W2 = {plan.distance:.12g} ({plan.status})")
    if args.output:
        plan.to_csv(args.output, labels=[c.label(base) for c in cspace.configs])
        print(f"wrote {args.output}")
    return EXIT_OK


def run_verify(args: argparse.Namespace, lab: LabDefaults) -> int:
    from verify.engine import VerificationEngine
    from verify.report import SuiteSummary, emit_report

    config = experiment_from_args(args)
    settings = get_settings()
    if config.output is None:
        settings.output_dir.mkdir(parents=True, exist_ok=True)
    report = VerificationEngine(config, lab=lab, settings=settings).run()
    path = settings.resolve_output(config.output, "suite_report.json")
    emit_report(report, path)
    print(SuiteSummary(report).to_text())
    print(f"\nReport written to {path}")
    return EXIT_FAILED if report.exact_failures else EXIT_OK


def run_study(args: argparse.Namespace, lab: LabDefaults) -> int:
    from verify.report import emit_study, emit_study_csv
    from verify.studies import STUDIES, run_convergence_study

    study_ids = sorted(STUDIES) if args.id == "all" else [args.id]
    levels = parse_levels(args.levels) if args.levels else None
    settings = get_settings()
    out_dir = Path(args.output) if args.output else settings.output_dir
    if not args.output:
        out_dir.mkdir(parents=True, exist_ok=True)
    failed = 0
    for study_id in study_ids:
        study = run_convergence_study(study_id, levels, defaults=lab.studies)
        defects = ", ".join(f"{d:.3e}" for d in study.defects)
        print(f"{study.study_id:<20} levels {study.levels} defects [{defects}] order {study.fitted_order:.2f} {'pass' if study.passed else 'FAIL'}")
        emit_study(study, out_dir / f"{study_id}.json")
        emit_study_csv(study, out_dir / f"{study_id}.csv")
        failed += 0 if study.passed else 1
    return EXIT_FAILED if failed else EXIT_OK


def run_report_diff(args: argparse.Namespace, lab: LabDefaults) -> int:
    from verify.report import diff_reports, load_report

    differences = diff_reports(load_report(args.left), load_report(args.right))
    if not differences:
        print("reports are identical")
        return EXIT_OK
    print(f"{len(differences)} differing entries:")
    for path in differences[:50]:
        print(f"  {path}")
    return EXIT_FAILED


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--experiment", default=None, help="ExperimentConfig JSON file")
    parser.add_argument("--fixture", default=None, help="two_state | circle:n=8 | custom:path=base.json")
    parser.add_argument("--n-max", dest="n_max", type=int, default=None, help="Particle cap")
    parser.add_argument("--s", type=float, default=None, help="Poisson intensity scaling")
    parser.add_argument("--levy", default=None, help="Mixture atoms as s:w,s:w")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--output", default=None, help="Output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Configuration-space calculus verification lab")
    parser.add_argument("--config", default="config.yaml", help="Lab defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Validate an experiment and its fixture")
    _add_experiment_args(p)
    p = sub.add_parser("enumerate", help="Enumerate configurations (CSV with --output)")
    _add_experiment_args(p)
    p.add_argument("--generator-csv", dest="generator_csv", default=None, help="Write the lifted generator as row,col,value")
    p = sub.add_parser("measures", help="Poisson or mixed Poisson weights (CSV with --output)")
    _add_experiment_args(p)
    p = sub.add_parser("transport", help="Optimal transport between two configurations (plan CSV with --output)")
    _add_experiment_args(p)
    p.add_argument("--from", dest="source", required=True, help="State labels, e.g. 0,0,3")
    p.add_argument("--to", dest="target", required=True, help="State labels, e.g. 1,2,5")
    p.add_argument("--t", type=float, default=None, help="Transport heat kernel rows at this time instead of Diracs")
    p = sub.add_parser("verify", help="Run check suites and write the report")
    _add_experiment_args(p)
    p.add_argument("--suites", default=None, help="Comma-separated suites, tiers, check ids, controls, studies or all")
    p.add_argument("--t-grid", dest="t_grid", default=None, help="Comma-separated times")
    p.add_argument("--threads", type=int, default=None)
    p = sub.add_parser("study", help="Run refinement studies")
    p.add_argument("--id", default="all", help="Study id or all")
    p.add_argument("--levels", default=None, help="Comma-separated circle sizes")
    p.add_argument("--output", default=None, help="Directory for study JSON and CSV")
    p = sub.add_parser("report-diff", help="Compare two reports, ignoring timing")
    p.add_argument("left")
    p.add_argument("right")
    return parser


COMMANDS = {
    "validate": run_validate,
    "enumerate": run_enumerate,
    "measures": run_measures,
    "transport": run_transport,
    "verify": run_verify,
    "study": run_study,
    "report-diff": run_report_diff,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.getLogger().setLevel(get_settings().log_level.upper())
    try:
        lab = LabDefaults.from_config(load_config(args.config))
        return COMMANDS[args.command](args, lab)
    except (ValidationError, LabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
