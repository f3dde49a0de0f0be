"""Experiment orchestration: run one config or a theta sweep, distill, write reports."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from subspace_qkd.config import ExperimentConfig
from subspace_qkd.distill import BlockSpec, KeyRateReport, block_invert, key_rate, privacy_amplify
from subspace_qkd.protocol import RUNNERS, RunReport

CSV_HEADER = ("theta", "sent", "delivered", "accepted", "r_b", "r_b_se", "t_p", "t_p_se", "key_rate")

# Extra entropy words separating post-processing streams from the simulation chunks.
_BLOCK_STREAM = 0xB10C
_HASH_STREAM = 0x4A54


def _substream(seed: int, tag: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, tag])


def distill_report(report: RunReport, cfg: ExperimentConfig) -> RunReport:
    """Attach key rate, abort decision and privacy-amplified key to ``report``."""
    est = report.estimate
    alice, bob = report.alice_key, report.bob_key
    r_b = est.r_b
    if cfg.block_size is not None and len(alice) >= cfg.block_size:
        rng = np.random.default_rng(_substream(cfg.seed, _BLOCK_STREAM))
        inv = block_invert(alice, bob, BlockSpec(cfg.block_size), cfg.block_reveal_fraction, rng)
        keep = ~inv.consumed
        alice, bob = alice[keep], inv.bob_bits[keep]
        r_b = inv.residual_error_estimate
        report.extra["block_inversion"] = {
            "blocks": int(len(inv.flipped)),
            "flipped": int(inv.flipped.sum()),
            "revealed": int(inv.revealed.sum()),
            "residual_error_estimate": r_b,
        }

    if math.isfinite(est.t_p) and math.isfinite(r_b):
        # Out-of-range estimates stay raw in the estimate; entropy needs [0, 1].
        report.key = key_rate(_clip01(r_b), _clip01(est.t_p),
                              accepted_fraction=_finite_or_zero(report.accepted_fraction_z),
                              z_sift_fraction=_finite_or_zero(report.z_sift_fraction))
        report.aborted = bool(est.t_p > cfg.abort_if_tp_above)
    else:
        # An undefined phase-flip rate certifies nothing.
        report.key = KeyRateReport(r_b, est.t_p, 0.0, 0.0, no_key=True)
        report.aborted = True
    out_len = 0
    if not report.aborted and not report.key.no_key:
        out_len = int(math.floor(len(alice) * report.key.rate_per_accepted_bit))
    hash_seed = int(_substream(cfg.seed, _HASH_STREAM).generate_state(1, np.uint64)[0])
    report.final_key = privacy_amplify(alice, out_len, hash_seed)
    report.extra["residual_qber"] = float(np.mean(alice != bob)) if len(alice) else None
    return report


def _clip01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _finite_or_zero(x: float) -> float:
    return x if math.isfinite(x) else 0.0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def report_json(report: RunReport) -> str:
    return json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n"


def csv_row(report: RunReport) -> dict:
    est = report.estimate
    theta = report.theta
    return {
        "theta": "" if theta is None else repr(float(theta)),
        "sent": report.counts["sent"],
        "delivered": report.counts["delivered"],
        "accepted": report.counts["accepted"],
        "r_b": repr(float(est.r_b)),
        "r_b_se": repr(float(est.r_b_se)),
        "t_p": repr(float(est.t_p)),
        "t_p_se": repr(float(est.t_p_se)),
        "key_rate": repr(float(report.key.rate_per_accepted_bit)) if report.key else "",
    }


def reports_csv(reports: Sequence[RunReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(csv_row(r))
    return buf.getvalue()


def format_report(report: RunReport, fmt: str) -> str:
    return reports_csv([report]) if fmt == "csv" else report_json(report)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Run the configured protocol, distill, and write ``cfg.output_path`` if set."""
    report = distill_report(RUNNERS[cfg.protocol](cfg), cfg)
    if write and cfg.output_path:
        Path(cfg.output_path).write_text(format_report(report, cfg.output_format), encoding="utf-8")
    return report


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    values: tuple[float, ...]
    parameter: str = "theta"

    def __post_init__(self) -> None:
        if self.parameter != "theta":
            raise ValueError(f"unsupported sweep parameter {self.parameter!r}")
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


def row_seed(base_seed: int, row_index: int) -> int:
    """Seed of sweep row ``row_index``. Depends on position, not on the value."""
    return int(np.random.SeedSequence([base_seed, row_index]).generate_state(1, np.uint64)[0])


def sweep_configs(spec: SweepSpec) -> list[ExperimentConfig]:
    return [
        replace(spec.base.with_theta(v), seed=row_seed(spec.base.seed, i), output_path=None)
        for i, v in enumerate(spec.values)
    ]


def _run_row(cfg: ExperimentConfig) -> RunReport:
    return run_experiment(cfg, write=False)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[RunReport]:
    """One full run per theta value, returned in ``spec.values`` order."""
    configs = sweep_configs(spec)
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_row, configs))
    return [_run_row(c) for c in configs]
