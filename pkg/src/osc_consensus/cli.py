"""Command-line workbench for quantized consensus of oscillator networks."""

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from .config import ScenarioConfig, load_config, parse_grid, render_config
from .errors import ConfigError, ConsensusError
from .gains import GainPlan, design_gains, format_feasibility_report
from .model import SystemModel, build_system, l_abs_sum_identity, l_closed_form, l_direct
from .network import (
    Network,
    build_network,
    complete_weights,
    cycle_weights,
    load_edge_list,
    parse_edge_list,
    path_weights,
    random_network,
    weights_from_edges,
)
from .quantizer import LevelSchedule, make_schedule, minimal_schedule
from .reporting import (
    RATE_HEADERS,
    SPECTRAL_HEADERS,
    format_summary,
    spectral_table,
    write_csv,
    write_text,
    write_trace,
)
from .sim import SimConfig, initial_bounds, initial_states, metrics, run
from .spectral import graded_gains, power_bound_check, radius_expansion_check, report_rows

# Load environment variables
load_dotenv()

# Configure logging with a more detailed format
logging.basicConfig(
    level=getattr(logging, os.getenv("LOG_LEVEL", "INFO")),
    format="%(asctime)s - %(name)s - %(levelname)s\n%(message)s\n"
)
logger = logging.getLogger(__name__)

# Default configuration values
DEFAULT_OPTIONS = {
    "out": os.getenv("OSC_CONSENSUS_OUT", "results"),
    "workers": int(os.getenv("OSC_CONSENSUS_WORKERS", "1")),
    "m_max": 6,
    "theta_steps": 50,
    "rate_theta_steps": 100,
    "oracle_digits": 40,
    "oracle_tolerance": 1e-9,
    "min_abs_sin": 0.05,
    "spectral_epsilons": (1e-3, 3e-4, 1e-4, 3e-5),
    "slope_tolerance": 0.1,
    "power_epsilon": 1e-4,
    "power_s_max": 2000,
    "power_trials": 100,
    "power_slack": 1.2,
}

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2
EXIT_CHECK = 3


@dataclass
class RunSpec:
    """One invocation of the workbench."""
    command: str
    config: Optional[Path] = None
    out: Path = Path(DEFAULT_OPTIONS["out"])
    seed: Optional[int] = None
    overrides: List[str] = field(default_factory=list)
    grid: Optional[Path] = None
    m_max: int = DEFAULT_OPTIONS["m_max"]
    theta_steps: int = DEFAULT_OPTIONS["theta_steps"]
    workers: int = DEFAULT_OPTIONS["workers"]

    def resolved_overrides(self) -> List[str]:
        if self.seed is None:
            return list(self.overrides)
        return list(self.overrides) + [f"run.seed={self.seed}"]


@dataclass
class CommandResult:
    """Exit status, printable message and the files written."""
    status: int
    message: str
    files: Dict[str, Path] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)


@dataclass
class Scenario:
    """Objects assembled from a validated config."""
    config: ScenarioConfig
    model: SystemModel
    network: Network
    schedule: LevelSchedule
    plan: GainPlan
    sim_config: SimConfig


def build_graph(config: ScenarioConfig, rng: np.random.Generator, base_dir: Optional[Path] = None) -> Network:
    """Network for the [graph] section."""
    graph = config.graph
    if graph.seed is not None:
        rng = np.random.default_rng(graph.seed)
    if graph.source == "file":
        if not graph.path:
            raise ConfigError("graph.path is required when graph.source = file")
        path = Path(graph.path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return load_edge_list(path, directed=graph.directed, nodes=graph.nodes)
    if graph.source == "inline":
        if not graph.edges:
            raise ConfigError("graph.edges is required when graph.source = inline")
        nodes, edges = parse_edge_list(graph.edges.replace(";", "\n"), nodes=graph.nodes, source="graph.edges")
        return build_network(weights_from_edges(nodes, edges, graph.directed), directed=graph.directed)
    if graph.nodes is None:
        raise ConfigError(f"graph.nodes is required when graph.source = {graph.source}")
    if graph.source == "random":
        return random_network(graph.nodes, graph.probability, graph.directed, rng)
    if graph.source == "complete":
        return build_network(complete_weights(graph.nodes), directed=graph.directed)
    if graph.source == "path":
        return build_network(path_weights(graph.nodes), directed=graph.directed)
    return build_network(cycle_weights(graph.nodes, graph.directed), directed=graph.directed)


def assemble(config: ScenarioConfig, base_dir: Optional[Path] = None) -> Scenario:
    """Model, network, schedule, gain plan and simulator config from one seed."""
    rng = np.random.default_rng(config.run.seed)
    model = build_system(config.system.m, config.system.theta)
    network = build_graph(config, rng, base_dir)
    schedule = make_schedule(model.m, model.theta, config.quantizer.levels, config.quantizer.levels_initial)
    initial = initial_states(network.N, model.m, rng, config.initial.mode, config.initial.low, config.initial.high)

    cstar, cdeltastar = initial_bounds(network, initial)
    cstar = config.initial.cstar or max(cstar, np.finfo(float).tiny)
    cdeltastar = config.initial.cdeltastar or max(cdeltastar, np.finfo(float).tiny)
    plan = design_gains(
        model,
        network,
        h=config.gains.h,
        epsilon=config.gains.epsilon,
        criteria=config.gains.criteria,
        cstar=cstar,
        cdeltastar=cdeltastar,
    )
    p0 = config.gains.p0 if config.gains.p0 is not None else plan.p0_min
    sim_config = SimConfig(
        model=model,
        network=network,
        plan=plan,
        schedule=schedule,
        p0=p0,
        horizon=config.run.horizon,
        initial=initial,
        seed=config.run.seed,
        cstar=cstar,
        cdeltastar=cdeltastar,
        allow_insufficient_rate=config.quantizer.allow_insufficient_rate,
    )
    return Scenario(config=config, model=model, network=network, schedule=schedule, plan=plan, sim_config=sim_config)


def theta_grid(steps: int, min_abs_sin: float) -> np.ndarray:
    """Angles in (0, pi) with |sin(theta)| >= min_abs_sin."""
    edge = math.asin(min_abs_sin) + 1e-9
    return np.linspace(edge, math.pi - edge, steps)


def rate_rows(m_values: Sequence[int], thetas: Sequence[float]) -> List[List]:
    """(m, theta, M_steady, bits, bracket_ok) for every grid point."""
    rows = []
    for m in m_values:
        for theta in thetas:
            schedule = minimal_schedule(m, float(theta))
            rows.append([m, float(theta), schedule.M_steady, schedule.bits, m <= schedule.bits <= 2 * m])
    return rows


def _sweep_worker(job: Tuple[str, str, List[str], str]) -> Tuple[str, int, Dict[str, object]]:
    run_id, config_path, overrides, out_dir = job
    spec = RunSpec(command="simulate", config=Path(config_path), out=Path(out_dir) / run_id, overrides=overrides)
    try:
        result = Workbench().simulate(spec)
    except ConsensusError as exc:
        return run_id, EXIT_DOMAIN, {"error": str(exc)}
    return run_id, result.status, result.summary


class Workbench:
    """Core command implementations; every method returns a CommandResult."""

    def __init__(self) -> None:
        logger.debug("Workbench initialized")

    def load(self, spec: RunSpec) -> ScenarioConfig:
        if spec.config is None:
            raise ConfigError(f"{spec.command} needs --config")
        return load_config(spec.config, spec.resolved_overrides())

    def simulate(self, spec: RunSpec) -> CommandResult:
        """Run one scenario and write trace, symbol log, summary and manifest."""
        config = self.load(spec)
        scenario = assemble(config, base_dir=Path(spec.config).parent)
        trace = run(scenario.sim_config)
        report = metrics(
            trace,
            m=scenario.model.m,
            theta=scenario.model.theta,
            rate_tolerance=config.run.rate_tolerance,
            allow_short=True,
        )
        report.update({
            "bits": scenario.schedule.bits,
            "bits_initial": scenario.schedule.bits_initial,
            "M_initial": scenario.schedule.M_initial,
            "M_steady": scenario.schedule.M_steady,
            "epsilon": scenario.plan.epsilon,
            "p0": scenario.sim_config.p0,
            "p0_min": scenario.plan.p0_min,
            "elapsed_seconds": trace.elapsed,
        })

        out = Path(spec.out)
        files = write_trace(out, trace)
        files["summary"] = write_text(
            out / "summary.txt",
            format_summary("run summary", report) + "\n" + format_feasibility_report(scenario.plan.feasibility),
        )
        derived = {
            "lambda2_real": scenario.network.lambda2_real,
            "h": scenario.plan.h,
            "epsilon": scenario.plan.epsilon,
            "gamma": scenario.plan.gamma,
            "p0_min": scenario.plan.p0_min,
            "p0_used": scenario.sim_config.p0,
            "M_steady": scenario.schedule.M_steady,
            "bits": scenario.schedule.bits,
        }
        files["manifest"] = write_text(out / "manifest.cfg", render_config(config, derived))

        failures = []
        if report["decoder_mismatch"] != 0:
            failures.append("decoder estimates diverged from encoder estimates")
        if not config.quantizer.allow_insufficient_rate:
            if report["saturation_count"]:
                failures.append(f"{report['saturation_count']} saturation events")
            if report["rate_within_gamma"] is False:
                failures.append(f"fitted rate {report['fitted_rate']:.6f} exceeds gamma {report['gamma']:.6f}")
        text = format_summary("run summary", report)
        if failures:
            return CommandResult(EXIT_CHECK, f"❌ **Check failed**: {'; '.join(failures)}\n{text}", files, report)
        return CommandResult(EXIT_OK, f"✅ **Run complete** in `{out}`\n{text}", files, report)

    def verify_lemma3(self, spec: RunSpec) -> CommandResult:
        """Compare the closed-form row combination with the direct one on an (m, theta) grid."""
        tolerance = DEFAULT_OPTIONS["oracle_tolerance"]
        rows = []
        failures = 0
        for m in range(1, spec.m_max + 1):
            for theta in theta_grid(spec.theta_steps, DEFAULT_OPTIONS["min_abs_sin"]):
                theta = float(theta)
                closed = l_closed_form(m, theta)
                direct = l_direct(build_system(m, theta), digits=DEFAULT_OPTIONS["oracle_digits"])
                scale = float(np.max(np.abs(closed)))
                error = float(np.max(np.abs(closed - direct))) / scale
                identity = l_abs_sum_identity(m, theta)
                identity_error = abs(float(np.sum(np.abs(closed))) - identity) / identity
                ok = error <= tolerance and identity_error <= tolerance
                failures += not ok
                rows.append([m, theta, error, identity_error, ok])
        path = write_csv(Path(spec.out) / "lemma3.csv", ["m", "theta", "rel_error", "sum_identity_rel_error", "ok"], rows)
        summary = {"cases": len(rows), "failures": failures, "tolerance": tolerance}
        text = format_summary("row combination check", summary)
        status = EXIT_CHECK if failures else EXIT_OK
        mark = "❌ **Check failed**" if failures else "✅ **All cases agree**"
        return CommandResult(status, f"{mark}\n{text}", {"lemma3": path}, summary)

    def spectral_check(self, spec: RunSpec) -> CommandResult:
        """Slope fits of the closed-loop radius for every nonzero eigenvalue of the scenario."""
        config = self.load(spec)
        scenario = assemble(config, base_dir=Path(spec.config).parent)
        tolerance = DEFAULT_OPTIONS["slope_tolerance"]
        rows = []
        worst = 0.0
        worst_power = 0.0
        for lam in scenario.network.nonzero_eigenvalues:
            value = complex(lam) if abs(lam.imag) > 0 else float(lam.real)
            report = radius_expansion_check(
                scenario.model,
                scenario.plan.c,
                value,
                DEFAULT_OPTIONS["spectral_epsilons"],
                power_epsilon=DEFAULT_OPTIONS["power_epsilon"],
                s_max=DEFAULT_OPTIONS["power_s_max"],
                trials=DEFAULT_OPTIONS["power_trials"],
                seed=config.run.seed,
            )
            worst = max(worst, report.relative_error)
            worst_power = max(worst_power, max(report.lemma2_margins.values()))
            rows.extend(report_rows(scenario.model, report))
        path = write_csv(Path(spec.out) / "spectral.csv", SPECTRAL_HEADERS, spectral_table(rows))
        gate = scenario.plan.feasibility.checks[-1]
        summary = {
            "eigenvalues": len(scenario.network.nonzero_eigenvalues),
            "worst_slope_relative_error": worst,
            "worst_power_ratio": worst_power,
            "spectral_gate_margin": gate.margin,
        }
        text = format_summary("spectral check", summary) + "\n" + format_feasibility_report(scenario.plan.feasibility)
        if worst > tolerance:
            return CommandResult(EXIT_CHECK, f"❌ **Check failed**: slope error {worst:.3f} above {tolerance}\n{text}", {"spectral": path}, summary)
        return CommandResult(EXIT_OK, f"✅ **Slopes agree**\n{text}", {"spectral": path}, summary)

    def power_bounds(self, spec: RunSpec) -> CommandResult:
        """Entrywise bounds on A_i^s xi for the scenario's eigenvalues at a small epsilon."""
        config = self.load(spec)
        scenario = assemble(config, base_dir=Path(spec.config).parent)
        epsilon = DEFAULT_OPTIONS["power_epsilon"]
        k = graded_gains(scenario.plan.c, epsilon)
        rows = []
        worst = 0.0
        for lam in scenario.network.nonzero_eigenvalues:
            value = complex(lam) if abs(lam.imag) > 0 else float(lam.real)
            ratios = power_bound_check(
                scenario.model,
                k,
                value,
                epsilon,
                DEFAULT_OPTIONS["power_s_max"],
                DEFAULT_OPTIONS["power_trials"],
                seed=config.run.seed,
            )
            for j, ratio in ratios.items():
                rows.append([float(lam.real), float(lam.imag), j, ratio])
                worst = max(worst, ratio)
        path = write_csv(Path(spec.out) / "power_bounds.csv", ["lambda_real", "lambda_imag", "pair", "max_ratio"], rows)
        summary = {"epsilon": epsilon, "worst_ratio": worst, "slack": DEFAULT_OPTIONS["power_slack"]}
        text = format_summary("power bound check", summary)
        if worst > DEFAULT_OPTIONS["power_slack"]:
            return CommandResult(EXIT_CHECK, f"❌ **Check failed**: ratio {worst:.3f}\n{text}", {"power_bounds": path}, summary)
        return CommandResult(EXIT_OK, f"✅ **Bounds hold**\n{text}", {"power_bounds": path}, summary)

    def rate_table(self, spec: RunSpec) -> CommandResult:
        """Minimal level counts and bits over m = 1 .. m_max and a theta grid."""
        thetas = sorted(set(np.linspace(0.01, math.pi - 0.01, DEFAULT_OPTIONS["rate_theta_steps"]).tolist()) | {math.pi / 3, math.pi / 2})
        rows = rate_rows(range(1, spec.m_max + 1), thetas)
        path = write_csv(Path(spec.out) / "rate_table.csv", RATE_HEADERS, rows)
        failures = sum(1 for row in rows if not row[-1])
        summary = {"rows": len(rows), "bracket_failures": failures}
        text = format_summary("rate table", summary)
        if failures:
            return CommandResult(EXIT_CHECK, f"❌ **Check failed**\n{text}", {"rate_table": path}, summary)
        return CommandResult(EXIT_OK, f"✅ **Rate table written**\n{text}", {"rate_table": path}, summary)

    def sweep(self, spec: RunSpec) -> CommandResult:
        """Cartesian product of grid values, one simulate run per combination."""
        if spec.config is None or spec.grid is None:
            raise ConfigError("sweep needs --config and --grid")
        if not Path(spec.grid).is_file():
            raise FileNotFoundError(f"grid file not found: {spec.grid}")
        combinations = parse_grid(Path(spec.grid).read_text(), source=str(spec.grid))
        jobs = []
        for index, combination in enumerate(combinations, start=1):
            overrides = spec.resolved_overrides() + [f"{key}={value}" for key, value in combination.items()]
            jobs.append((f"run-{index:04d}", str(spec.config), overrides, str(spec.out)))

        if spec.workers > 1:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                results = list(pool.map(_sweep_worker, jobs))
        else:
            results = [_sweep_worker(job) for job in jobs]

        columns = sorted({key for combination in combinations for key in combination})
        metric_keys = ["fitted_rate", "gamma", "saturation_count", "final_error", "bits", "bits_sent"]
        rows = []
        by_id = {run_id: (status, summary) for run_id, status, summary in results}
        for (run_id, _, _, _), combination in sorted(zip(jobs, combinations), key=lambda pair: pair[0][0]):
            status, summary = by_id[run_id]
            rows.append([run_id, status] + [combination.get(column, "") for column in columns] + [summary.get(key, "") for key in metric_keys] + [summary.get("error", "")])
        path = write_csv(Path(spec.out) / "sweep.csv", ["run_id", "status"] + columns + metric_keys + ["error"], rows)
        failed = sum(1 for status, _ in by_id.values() if status != EXIT_OK)
        summary = {"runs": len(jobs), "failed": failed}
        text = format_summary("sweep", summary)
        if failed:
            return CommandResult(EXIT_CHECK, f"❌ **{failed} run(s) failed**\n{text}", {"sweep": path}, summary)
        return CommandResult(EXIT_OK, f"✅ **Sweep complete**\n{text}", {"sweep": path}, summary)

    def dispatch(self, spec: RunSpec) -> CommandResult:
        handlers = {
            "simulate": self.simulate,
            "verify-lemma3": self.verify_lemma3,
            "spectral-check": self.spectral_check,
            "power-bounds": self.power_bounds,
            "rate-table": self.rate_table,
            "sweep": self.sweep,
        }
        return handlers[spec.command](spec)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Quantized consensus workbench for oscillator networks")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser, needs_config: bool) -> None:
        sub.add_argument("--config", type=Path, required=needs_config, help="Scenario file")
        sub.add_argument("--out", type=Path, default=Path(DEFAULT_OPTIONS["out"]), help="Output directory")
        sub.add_argument("--seed", type=int, default=None, help="Overrides [run] seed")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="Override a config key")

    common(subparsers.add_parser("simulate", help="Run one closed-loop scenario"), needs_config=True)
    verify = subparsers.add_parser("verify-lemma3", help="Closed-form vs direct row combination")
    common(verify, needs_config=False)
    verify.add_argument("--m-max", type=int, default=DEFAULT_OPTIONS["m_max"])
    verify.add_argument("--theta-steps", type=int, default=DEFAULT_OPTIONS["theta_steps"])
    common(subparsers.add_parser("spectral-check", help="Closed-loop radius slope fits"), needs_config=True)
    common(subparsers.add_parser("power-bounds", help="Entrywise bounds on closed-loop powers"), needs_config=True)
    rate = subparsers.add_parser("rate-table", help="Minimal bits per (m, theta)")
    common(rate, needs_config=False)
    rate.add_argument("--m-max", type=int, default=DEFAULT_OPTIONS["m_max"])
    sweep = subparsers.add_parser("sweep", help="Run a grid of scenarios")
    common(sweep, needs_config=True)
    sweep.add_argument("--grid", type=Path, required=True, help="Grid file of section.key = v1, v2 lines")
    sweep.add_argument("--workers", type=int, default=DEFAULT_OPTIONS["workers"])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the workbench."""
    args = build_parser().parse_args(argv)
    spec = RunSpec(
        command=args.command,
        config=args.config,
        out=args.out,
        seed=args.seed,
        overrides=list(args.overrides),
        grid=getattr(args, "grid", None),
        m_max=getattr(args, "m_max", DEFAULT_OPTIONS["m_max"]),
        theta_steps=getattr(args, "theta_steps", DEFAULT_OPTIONS["theta_steps"]),
        workers=getattr(args, "workers", DEFAULT_OPTIONS["workers"]),
    )
    logger.info(f"Starting {spec.command}")
    try:
        result = Workbench().dispatch(spec)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsensusError as exc:
        print(f"❌ Error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(result.message)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
