"""Seeded experiment sweeps, metrics and CSV output."""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..algebra import condition_number, spectral_norm
from ..errors import NonFinite
from ..recovery import SolverConfig, run
from ..sensing import generate_ensemble, measure
from ..synthetic import GroundTruthSpec, generate_ground_truth, incoherence
from .tensor_io import read_tensor

log = logging.getLogger(__name__)

THRESHOLDS = (1e-2, 1e-4, 1e-6)
SUMMARY_COLUMNS = (
    "variant", "init", "kappa", "seed", "iterations", "final_rel_err", "final_dis",
    "iters_to_1e-2", "iters_to_1e-4", "iters_to_1e-6", "psnr_mean", "psnr_min",
)


@dataclass
class MetricRow:
    variant: str
    init: str
    kappa: float
    seed: int
    iterations: int
    final_rel_err: float
    final_dis: float
    iters_to: dict
    psnr_mean: float = None
    psnr_min: float = None

    def as_csv_row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return "inf" if math.isinf(v) else repr(v)
            return str(v)

        return [fmt(v) for v in (
            self.variant, self.init, float(self.kappa), self.seed, self.iterations,
            self.final_rel_err, self.final_dis,
            *(self.iters_to[t] for t in THRESHOLDS), self.psnr_mean, self.psnr_min,
        )]


def iterations_to_threshold(rel_errs, threshold):
    """First iteration below ``threshold`` that never climbs above twice it later.

    Returns None when no such iteration exists.
    """
    errs = np.asarray(rel_errs, dtype=float)
    # suffix maxima of everything strictly after t
    later_max = np.append(np.maximum.accumulate(errs[::-1])[::-1][1:], -np.inf)
    hits = np.flatnonzero((errs < threshold) & (later_max <= 2 * threshold))
    return int(hits[0]) if hits.size else None


def psnr(x, x_hat, peak=1.0):
    """PSNR of every lateral slice: ``10 log10(peak^2 n1 n3 / ||x(i) - x_hat(i)||_F^2)``."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        from ..errors import DimensionMismatch
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {x_hat.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    n1, _, n3 = x.shape
    err = np.sum((x - x_hat) ** 2, axis=(0, 2))
    with np.errstate(divide="ignore"):
        return 10 * np.log10(peak**2 * n1 * n3 / err)


def _seed_pair(seed):
    """Independent seeds for the truth and the ensemble of one trial."""
    return 2 * seed, 2 * seed + 1


def load_truth(cfg, kappa, seed):
    if cfg.truth_path is not None:
        return read_tensor(cfg.truth_path)
    truth_seed, _ = _seed_pair(seed)
    return generate_ground_truth(GroundTruthSpec(cfg.n1, cfg.n2, cfg.n3, cfg.r, kappa, truth_seed))


def solver_config(cfg, spec, x_star):
    kappa = spec.kappa if spec.kappa is not None else condition_number(x_star)
    if cfg.x_norm == "truth":
        x_norm = spectral_norm(x_star)
    elif cfg.x_norm == "estimate":
        x_norm = None
    else:
        x_norm = float(cfg.x_norm)
    return SolverConfig(
        r=cfg.r, m0=cfg.m0, mc=cfg.mc, variant=spec.variant, T=cfg.T,
        eta_coeff=cfg.c_eta, kappa=kappa,
        mu=cfg.mu if cfg.mu is not None else incoherence(x_star, cfg.r),
        trunc_const=cfg.trunc_C, init=cfg.init, init_basis=cfg.init_basis,
        split=cfg.split, nested=cfg.nested, stop_tol=cfg.stop_tol, x_norm=x_norm, seed=spec.seed,
    )


def trace_name(spec):
    kappa = "file" if spec.kappa is None else f"{spec.kappa:g}"
    return f"trace_{spec.variant}_kappa{kappa}_seed{spec.seed}.csv"


def prepare_run(cfg, spec):
    """Truth, ensemble, measurements and solver settings for one run."""
    x_star = load_truth(cfg, spec.kappa, spec.seed)
    n1, n2, n3 = x_star.shape
    scfg = solver_config(cfg, spec, x_star)
    _, ens_seed = _seed_pair(spec.seed)
    ensemble = generate_ensemble(n1, n2, n3, scfg.schedule().m_total, ens_seed)
    return x_star, ensemble, measure(ensemble, x_star, scfg.schedule()), scfg


def metric_row(cfg, spec, scfg, x_star, state, trace):
    row = MetricRow(
        variant=spec.variant, init=cfg.init,
        kappa=spec.kappa if spec.kappa is not None else scfg.kappa, seed=spec.seed,
        iterations=len(trace) - 1,
        final_rel_err=trace.rel_err[-1], final_dis=trace.dis[-1],
        iters_to={t: iterations_to_threshold(trace.rel_err, t) for t in THRESHOLDS},
    )
    if x_star.min() >= 0 and x_star.max() <= 1:
        values = psnr(x_star, state.X)
        row.psnr_mean = float(np.mean(values))
        row.psnr_min = float(np.min(values))
    return row


def run_single(cfg, spec, out_dir):
    x_star, ensemble, y, scfg = prepare_run(cfg, spec)
    path = Path(out_dir) / trace_name(spec)
    try:
        state, trace = run(ensemble, y, scfg, x_star=x_star)
    except NonFinite as exc:
        if exc.trace is not None:
            exc.trace.to_csv(path, timing=cfg.timing)
        raise
    trace.to_csv(path, timing=cfg.timing)
    row = metric_row(cfg, spec, scfg, x_star, state, trace)
    log.info("%s kappa=%s seed=%d: %d iterations, rel_err %.3e",
             spec.variant, spec.kappa, spec.seed, row.iterations, row.final_rel_err)
    return row


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv_row())


def run_experiment(cfg, out_dir=None, threads=1):
    """Run every (variant, kappa, seed) combination and write CSVs.

    Writes one trace CSV per run plus ``summary.csv``.  The summary is
    rewritten after every finished run so partial results survive a failure.
    """
    out_dir = Path(out_dir or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = cfg.runs()
    rows = [None] * len(specs)
    summary = out_dir / "summary.csv"

    def job(index):
        rows[index] = run_single(cfg, specs[index], out_dir)
        return index

    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for _ in pool.map(job, range(len(specs))):
                    write_summary(summary, [r for r in rows if r is not None])
        else:
            for index in range(len(specs)):
                job(index)
                write_summary(summary, [r for r in rows if r is not None])
    finally:
        write_summary(summary, [r for r in rows if r is not None])
    return rows


def summary_from_trace(path):
    """Recompute the trace-derived summary fields from a trace CSV."""
    from ..recovery import RecoveryTrace

    trace = RecoveryTrace.from_csv(path)
    return {
        "iterations": len(trace) - 1,
        "final_rel_err": trace.rel_err[-1],
        "final_dis": trace.dis[-1],
        **{f"iters_to_{t:g}": iterations_to_threshold(trace.rel_err, t) for t in THRESHOLDS},
    }


__all__ = [
    "MetricRow",
    "THRESHOLDS",
    "iterations_to_threshold",
    "metric_row",
    "prepare_run",
    "psnr",
    "run_experiment",
    "run_single",
    "summary_from_trace",
    "write_summary",
]
