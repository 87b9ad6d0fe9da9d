"""Command-line front end: `ububu run | strong-order | ess-report | ingest`."""
import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from ububu.cli.ingest import dataset_hash, ingest_matches, ingest_mnist, load_dataset, save_dataset
from ububu.cli.report import (
    ResultRow,
    histogram,
    read_results,
    result_files,
    write_reports,
    write_results,
    write_table,
)
from ububu.config import build_functions, config_hash, load_config, rhmc_config, run_config
from ububu.core import NoiseKey, Stream, derive_seed
from ububu.couplings import coupled_gap_rms
from ububu.diagnostics import ess, strong_order_fit
from ububu.errors import (
    ConfigError,
    DataError,
    DiagnosticsError,
    ModelError,
    NumericalError,
    ParameterError,
)
from ububu.estimator import EstimatorReport, run_estimator
from ububu.models.potential import Potential
from ububu.models.preconditioned import precondition
from ububu.models.synthetic import ingest_synthetic
from ububu.rhmc import autotune, run_rhmc

logger = logging.getLogger(__name__)

DEFAULT_RUNS = 8
DEFAULT_BOOTSTRAP = 2000

VALIDATION_ERRORS = (ConfigError, ParameterError, DataError, ModelError)
RUNTIME_ERRORS = (NumericalError, DiagnosticsError)


def build_model(config: dict) -> Potential:
    section = dict(config["model"])
    kind = section.pop("kind")
    if "dataset" in section:
        potential = load_dataset(section["dataset"])
        if potential.name != kind:
            raise ConfigError(["model", "dataset"], f"It holds a '{potential.name}' dataset, not '{kind}'")
        logger.info(f"Loaded dataset {section['dataset']} ({dataset_hash(potential)[:12]})")
    else:
        try:
            potential = ingest_synthetic(kind, section, config.get("seed", 0))
        except ModelError as e:
            raise ConfigError(["model"], str(e)) from e
    if config["sampler"].get("precondition", False):
        potential = precondition(potential)
    return potential


def _output_dir(config: dict, output: Optional[str]) -> str:
    directory = output or config.get("output", "results")
    os.makedirs(directory, exist_ok=True)
    return directory


def _provenance(config: dict) -> dict:
    return {"config_sha256": config_hash(config), "seed": config["seed"], "ess_normalisation": "ensemble"}


def _run_reports(config: dict, potential: Potential, threads: int) -> List[EstimatorReport]:
    functions = build_functions(config, potential)
    runs = config.get("diagnostics", {}).get("runs", DEFAULT_RUNS)
    seeds = [derive_seed(config["seed"], r) for r in range(runs)]
    info = potential.hessian_at_min()
    if config["sampler"]["mode"] == "rhmc":
        draft = rhmc_config(config, potential)
        if config["sampler"].get("rhmc", {}).get("autotune", False):
            draft = autotune(potential, draft)

        def task(seed: int) -> EstimatorReport:
            return run_rhmc(potential, replace(draft, seed=seed), functions)
    else:
        resolved = run_config(config).resolve(info.m, info.M, potential.n_data)

        def task(seed: int) -> EstimatorReport:
            return run_estimator(potential, replace(resolved, seed=seed), functions)

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, seeds))


def cmd_run(config_path: str, seed: int = None, threads: int = 1, output: str = None) -> str:
    """Run the configured sampler R times and write results.csv, reports.json and timing.json."""
    start = time.perf_counter()
    config = load_config(config_path, seed)
    directory = _output_dir(config, output)
    potential = build_model(config)
    reports = _run_reports(config, potential, threads)

    n_boot = config.get("diagnostics", {}).get("bootstrap", DEFAULT_BOOTSTRAP)
    summary = ess(reports, n_boot, NoiseKey(config["seed"], stream=Stream.DIAGNOSTICS))
    experiment = config_hash(config)[:12]
    kappa = getattr(potential, "base", potential).hessian_at_min().condition_number
    ci_lo, ci_hi = summary.ci if summary.ci is not None else (np.full(len(summary.functions), math.nan),) * 2
    rows = [
        ResultRow(experiment, config["model"]["kind"], config["sampler"]["mode"], potential.dim, float(kappa), name,
                  float(summary.mean[i]), float(summary.estimator_variance[i]), float(summary.ess[i]),
                  float(summary.grads_per_ess[i]), float(ci_lo[i]), float(ci_hi[i]), summary.work, config["seed"])
        for i, name in enumerate(summary.functions)
    ]
    provenance = _provenance(config)
    write_results(os.path.join(directory, "results.csv"), rows, provenance)
    write_reports(os.path.join(directory, "reports.json"), reports, provenance)
    with open(os.path.join(directory, "timing.json"), "w", encoding="utf-8") as f:
        json.dump({"wall_time": time.perf_counter() - start, "runs": len(reports)}, f)
    logger.info(f"Wrote {len(rows)} result rows to {directory}")
    return directory


def cmd_strong_order(config_path: str, seed: int = None, output: str = None) -> str:
    """RMS gap between chains at h and h/2 per stepsize, with the fitted order."""
    config = load_config(config_path, seed)
    if "strong_order" not in config:
        raise ConfigError(["strong_order"], "It is required by the strong-order command")
    section = config["strong_order"]
    directory = _output_dir(config, output)
    potential = build_model(config)
    stepsizes = sorted(section["stepsizes"], reverse=True)
    info = potential.hessian_at_min()
    gaps = coupled_gap_rms(potential, section["kernel"], stepsizes, config["sampler"].get("gamma", math.sqrt(info.m)),
                           section.get("replicates", 16), section.get("duration", 1.0), config["seed"],
                           section.get("tau", 2), section.get("n_b", 1))
    stable = [(h, g) for h, g in zip(stepsizes, gaps) if math.isfinite(g) and g > 0]
    for h, g in zip(stepsizes, gaps):
        if not (math.isfinite(g) and g > 0):
            logger.warning(f"{section['kernel']} coupling unstable at h={h}; stepsize skipped")
    try:
        fit = strong_order_fit([h for h, _ in stable], [g for _, g in stable])
    except ParameterError as e:
        raise DiagnosticsError(f"cmd_strong_order: {e}") from e
    lo, hi = fit.slope - 1.96 * fit.stderr, fit.slope + 1.96 * fit.stderr
    rows = [(h, g, fit.slope, lo, hi) for h, g in stable]
    write_table(os.path.join(directory, "strong_order.csv"), ["h", "rms_gap", "slope", "slope_lo", "slope_hi"], rows,
                _provenance(config))
    logger.info(f"{section['kernel']}: strong order {fit.slope:.3f} ± {fit.stderr:.3f}")
    return directory


def cmd_ess_report(directory: str, output: str = None) -> str:
    """Histogram of grads/ESS over all rows and the per-mode maximum with its interval."""
    rows_by_mode = {}
    for path in result_files(directory):
        _, rows = read_results(path)
        for row in rows:
            rows_by_mode.setdefault(row.mode, []).append(row)
    output = output or directory
    os.makedirs(output, exist_ok=True)
    bins, summary = [], []
    for mode in sorted(rows_by_mode):
        rows = rows_by_mode[mode]
        bins.extend((mode, lo, hi, count) for lo, hi, count in histogram([r.grads_per_ess for r in rows]))
        worst = max(rows, key=lambda r: r.grads_per_ess)
        summary.append((mode, worst.grads_per_ess, worst.ci_lo, worst.ci_hi, worst.function, len(rows)))
    provenance = {"source": os.path.abspath(directory)}
    write_table(os.path.join(output, "histogram.csv"), ["mode", "bin_lo", "bin_hi", "count"], bins, provenance)
    write_table(os.path.join(output, "summary.csv"),
                ["mode", "max_grads_per_ess", "ci_lo", "ci_hi", "function", "rows"], summary, provenance)
    return output


def cmd_ingest(kind: str, output: str, images: str = None, labels: str = None, matches: str = None,
               subsample: int = None, factor: int = 1, sizes: dict = None, seed: int = 0) -> str:
    if kind == "mnist":
        if not images or not labels:
            raise ConfigError(["images"], "MNIST ingestion needs --images and --labels")
        potential = ingest_mnist(images, labels, subsample, factor)
    elif kind == "matches":
        if not matches:
            raise ConfigError(["matches"], "Match ingestion needs --matches")
        potential = ingest_matches(matches)
    else:
        potential = ingest_synthetic(kind, sizes or {}, seed)
    digest = save_dataset(potential, output)
    logger.info(f"Saved {potential!r} to {output}")
    return digest


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ububu", description="Unbiased multilevel kinetic Langevin Monte Carlo.")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser, config: bool = True):
        if config:
            sub.add_argument("--config", required=True, help="experiment JSON file")
            sub.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sub.add_argument("--output", default=None, help="output directory")
        sub.add_argument("--verbose", "-v", action="count", default=0)

    run = commands.add_parser("run", help="run an estimator experiment")
    common(run)
    run.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")

    strong = commands.add_parser("strong-order", help="fit the strong order of a coupled kernel")
    common(strong)

    report = commands.add_parser("ess-report", help="summarise grads/ESS over result files")
    report.add_argument("directory")
    common(report, config=False)

    ingest = commands.add_parser("ingest", help="convert raw data into a dataset file")
    ingest.add_argument("kind", choices=["mnist", "matches", "gaussian", "quartic", "multinomial", "poisson"])
    ingest.add_argument("--images")
    ingest.add_argument("--labels")
    ingest.add_argument("--matches")
    ingest.add_argument("--subsample", type=int, default=2000, help="number of leading MNIST images kept")
    ingest.add_argument("--downscale", type=int, default=4, help="MNIST mean-pooling factor, 4 gives 7x7 images")
    ingest.add_argument("--sizes", default="{}", help="JSON object of synthetic sizes")
    ingest.add_argument("--seed", type=int, default=0)
    ingest.add_argument("--output", required=True, help="dataset file (.npz)")
    ingest.add_argument("--verbose", "-v", action="count", default=0)
    return parser


def main(argv: Sequence[str] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cmd_run(args.config, args.seed, args.threads, args.output)
        elif args.command == "strong-order":
            cmd_strong_order(args.config, args.seed, args.output)
        elif args.command == "ess-report":
            cmd_ess_report(args.directory, args.output)
        else:
            try:
                sizes = json.loads(args.sizes)
            except json.JSONDecodeError as e:
                raise ConfigError(["sizes"], f"Invalid JSON: {e.msg}")
            print(cmd_ingest(args.kind, args.output, args.images, args.labels, args.matches, args.subsample,
                             args.downscale, sizes, args.seed))
    except VALIDATION_ERRORS as e:
        print(f"ububu {args.command}: {e}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as e:
        print(f"ububu {args.command}: {e}", file=sys.stderr)
        return 2
    return 0
