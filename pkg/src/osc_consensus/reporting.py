"""CSV traces and key-value summary blocks."""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .sim import SimTrace

logger = logging.getLogger(__name__)

SPECTRAL_HEADERS = ["m", "theta", "lambda", "epsilon", "rho", "predicted_rho", "slope_fit", "predicted_slope"]
RATE_HEADERS = ["m", "theta", "M_steady", "bits", "bracket_ok"]
SYMBOL_HEADERS = ["t", "agent", "symbol", "d_value", "saturated"]


def write_csv(filename: Union[str, Path], headers: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Writes a list of lists to a CSV file."""
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(headers)
        writer.writerows(rows)
    logger.info(f"Saved results to '{path}'")
    return path


def trace_table(trace: SimTrace) -> Tuple[List[str], List[List]]:
    """t, x_{i,j}, delta_inf_j, delta_max_j, max_quant_err, saturations, u_i (1-based labels)."""
    steps, N, n = trace.states.shape[0] - 1, trace.states.shape[1], trace.states.shape[2]
    headers = ["t"]
    headers += [f"x_{i + 1}_{j + 1}" for i in range(N) for j in range(n)]
    headers += [f"delta_inf_{j + 1}" for j in range(n)]
    headers += [f"delta_max_{j + 1}" for j in range(n)]
    headers += ["max_quant_err", "saturations"]
    headers += [f"u_{i + 1}" for i in range(N)]

    rows = []
    for t in range(steps + 1):
        row = [t]
        row += trace.states[t].ravel().tolist()
        row += trace.delta_inf[t].tolist()
        row += trace.delta_max[t].tolist()
        if t == 0:
            row += [0.0, 0]
            row += [0.0] * N
        else:
            row += [float(trace.quant_err_inf[t - 1]), int(np.count_nonzero(trace.saturated[t - 1]))]
            row += trace.controls[t - 1].tolist()
        rows.append(row)
    return headers, rows


def symbol_table(trace: SimTrace) -> Tuple[List[str], List[List]]:
    """One row per agent and step."""
    rows = []
    steps, N = trace.symbols.shape
    for t in range(steps):
        for i in range(N):
            rows.append([
                t + 1,
                i + 1,
                int(trace.symbols[t, i]),
                float(trace.d_values[t, i]),
                int(trace.saturated[t, i]),
            ])
    return SYMBOL_HEADERS, rows


def write_trace(out_dir: Union[str, Path], trace: SimTrace) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    headers, rows = trace_table(trace)
    symbol_headers, symbol_rows = symbol_table(trace)
    return {
        "trace": write_csv(out_dir / "trace.csv", headers, rows),
        "symbols": write_csv(out_dir / "symbols.csv", symbol_headers, symbol_rows),
    }


def spectral_table(rows: Iterable[Dict[str, float]]) -> List[List]:
    return [[row[header] for header in SPECTRAL_HEADERS] for row in rows]


def _render(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render(item) for item in value) + "]"
    return str(value)


def format_summary(title: str, values: Dict[str, object]) -> str:
    """Key-value block under an upper-case title, closed by a rule."""
    lines = [title.upper()]
    lines += [f"{key} = {_render(value)}" for key, value in values.items()]
    lines.append("=" * 80)
    return "\n".join(lines)


def write_text(filename: Union[str, Path], text: str) -> Path:
    path = Path(filename)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n")
    logger.info(f"Saved report to '{path}'")
    return path
