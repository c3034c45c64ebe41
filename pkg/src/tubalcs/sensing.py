"""Local Gaussian sensing of lateral slices and the sample-splitting schedule.

Every lateral slice ``x[:, i, :]`` is observed through its own probes
``A_i[:, j, :]``; measurement ``y[j, i]`` is the Frobenius inner product of
probe ``j`` with slice ``i``.

Probe storage layout is ``(n2, m, n1, n3)`` so that ``probes[i, j]`` is the
``n1 x n3`` matrix ``A_i[:, j, :]``.  The Gaussian stream for slice ``i`` is
keyed by ``(seed, i)`` and consumed probe by probe, entries in C order, so a
probe is reproducible from ``(seed, i, j)`` alone no matter how many probes
the ensemble holds.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .algebra import as_tensor3
from .errors import DimensionMismatch, InvalidSchedule

__all__ = [
    "SensingEnsemble",
    "MeasurementSet",
    "SplitSchedule",
    "generate_ensemble",
    "measure",
    "build_schedule",
    "probes_for",
    "STAGES",
]

STAGES = ("threshold", "init", "u_update", "v_update")
SCHEDULE_MODES = ("split", "pooled", "nested")


def _slice_stream(seed, i, stop, n1, n3):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
    return rng.standard_normal(stop * n1 * n3).reshape(stop, n1, n3)


@dataclass(frozen=True, eq=False)
class SensingEnsemble:
    """Per-slice Gaussian probe tensors ``{A_i}``.

    ``storage="streamed"`` keeps nothing in memory and regenerates probes from
    the seed on every access; both modes return bit-identical values.
    """

    n1: int
    n2: int
    n3: int
    m_total: int
    seed: int
    storage: str = "materialized"
    _data: np.ndarray = field(default=None, repr=False)

    def slice_probes(self, i, start=0, stop=None):
        """Probes ``start..stop-1`` of slice ``i`` as an ``(m, n1, n3)`` array."""
        stop = self.m_total if stop is None else stop
        if not (0 <= i < self.n2 and 0 <= start <= stop <= self.m_total):
            raise IndexError(f"slice {i}, probes [{start}, {stop}) out of range")
        if self._data is not None:
            return self._data[i, start:stop]
        return _slice_stream(self.seed, i, stop, self.n1, self.n3)[start:]

    def probes(self, start=0, stop=None):
        """All slices' probes in ``[start, stop)``: shape ``(n2, m, n1, n3)``."""
        stop = self.m_total if stop is None else stop
        if self._data is not None:
            if not 0 <= start <= stop <= self.m_total:
                raise IndexError(f"probes [{start}, {stop}) out of range")
            return self._data[:, start:stop]
        return np.stack([self.slice_probes(i, start, stop) for i in range(self.n2)])

    def probe(self, i, j):
        return self.slice_probes(i, j, j + 1)[0]

    def materialize(self):
        if self._data is not None:
            return self
        data = np.stack([self.slice_probes(i) for i in range(self.n2)])
        return SensingEnsemble(self.n1, self.n2, self.n3, self.m_total, self.seed,
                               "materialized", data)


def generate_ensemble(n1, n2, n3, m_total, seed, storage="materialized"):
    for name, val in (("n1", n1), ("n2", n2), ("n3", n3), ("m_total", m_total)):
        if int(val) < 1:
            raise ValueError(f"{name} must be positive, got {val}")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if storage not in ("materialized", "streamed"):
        raise ValueError(f"unknown storage mode {storage!r}")
    ens = SensingEnsemble(int(n1), int(n2), int(n3), int(m_total), int(seed), "streamed")
    return ens.materialize() if storage == "materialized" else ens


@dataclass(frozen=True)
class SplitSchedule:
    """How probes are divided among algorithm stages.

    In ``split`` mode there are ``2T + 1`` disjoint groups stored in order:
    groups ``1..2T-1`` hold ``mc`` probes, groups ``2T`` and ``2T+1`` hold
    ``m0``.  In ``pooled`` mode nothing is split and every stage sees all
    ``max(m0, mc)`` probes.  ``nested`` is pooled with initialization stages
    restricted to the first ``m0`` probes and iteration stages to the first
    ``mc``.
    """

    mode: str
    T: int
    m0: int
    mc: int

    @property
    def n_groups(self):
        return 2 * self.T + 1 if self.mode == "split" else 1

    @property
    def group_sizes(self):
        if self.mode != "split":
            return [self.m_total]
        return [self.mc] * (2 * self.T - 1) + [self.m0, self.m0]

    @property
    def m_total(self):
        if self.mode != "split":
            return max(self.m0, self.mc)
        return (2 * self.T - 1) * self.mc + 2 * self.m0

    def group_range(self, k):
        """Probe range of group ``k`` (1-based, split mode)."""
        if self.mode != "split" or not 1 <= k <= self.n_groups:
            raise InvalidSchedule(f"group {k} does not exist in this schedule")
        start = sum(self.group_sizes[: k - 1])
        return range(start, start + self.group_sizes[k - 1])

    def group_map(self):
        """Group index of every probe; 0 means the single pooled group."""
        if self.mode != "split":
            return np.zeros(self.m_total, dtype=np.int64)
        return np.repeat(np.arange(1, self.n_groups + 1), self.group_sizes)


def build_schedule(T, m0, mc, mode="pooled"):
    if mode not in SCHEDULE_MODES:
        raise InvalidSchedule(f"mode must be one of {SCHEDULE_MODES}, got {mode!r}")
    if T < 1 or m0 < 1 or mc < 1:
        raise InvalidSchedule(f"need T, m0, mc >= 1, got T={T}, m0={m0}, mc={mc}")
    return SplitSchedule(mode, int(T), int(m0), int(mc))


def stage_group(schedule, stage, t=None):
    """Group index used by a stage in split mode."""
    T = schedule.T
    if stage == "threshold":
        return 2 * T
    if stage == "init":
        return 2 * T + 1
    if stage == "u_update":
        if t is None or not 1 <= t <= T - 1:
            raise InvalidSchedule(f"u_update needs 1 <= t <= {T - 1}, got {t}")
        return T + t
    if stage == "v_update":
        if t is None or not 0 <= t <= T - 1:
            raise InvalidSchedule(f"v_update needs 0 <= t <= {T - 1}, got {t}")
        return t + 1
    raise InvalidSchedule(f"unknown stage {stage!r}")


def probes_for(schedule, stage, t=None):
    """Probe index range feeding ``stage`` at iteration ``t``."""
    group = stage_group(schedule, stage, t)
    if schedule.mode == "split":
        return schedule.group_range(group)
    if schedule.mode == "pooled":
        return range(0, schedule.m_total)
    if stage in ("threshold", "init"):
        return range(0, schedule.m0)
    return range(0, schedule.mc)


@dataclass(eq=False)
class MeasurementSet:
    """Measurements ``values[j, i]`` of probe ``j`` on slice ``i``."""

    values: np.ndarray
    groups: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatch("measurement values must be (m_total, n2)")
        if self.groups is None:
            self.groups = np.zeros(self.values.shape[0], dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if self.groups.shape != (self.values.shape[0],):
            raise DimensionMismatch("group map must have one entry per probe")

    @property
    def m_total(self):
        return self.values.shape[0]

    @property
    def n2(self):
        return self.values.shape[1]

    def select(self, probe_range):
        return self.values[probe_range.start:probe_range.stop]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice", "probe", "group", "value"])
            for i in range(self.n2):
                for j in range(self.m_total):
                    g = int(self.groups[j])
                    writer.writerow([i, j, g if g else "", repr(float(self.values[j, i]))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        n2 = 1 + max(int(r["slice"]) for r in rows)
        m = 1 + max(int(r["probe"]) for r in rows)
        values = np.full((m, n2), np.nan)
        groups = np.zeros(m, dtype=np.int64)
        for r in rows:
            i, j = int(r["slice"]), int(r["probe"])
            values[j, i] = float(r["value"])
            groups[j] = int(r["group"]) if r["group"] else 0
        if np.isnan(values).any():
            raise DimensionMismatch(f"{path}: measurement grid is incomplete")
        return cls(values, groups)


def measure(ensemble, x, schedule=None):
    """Take every probe's measurement of every lateral slice of ``x``."""
    x = as_tensor3(x, "x")
    if x.shape != (ensemble.n1, ensemble.n2, ensemble.n3):
        raise DimensionMismatch(
            f"tensor {x.shape} does not match ensemble "
            f"{(ensemble.n1, ensemble.n2, ensemble.n3)}"
        )
    if schedule is not None and schedule.m_total != ensemble.m_total:
        raise DimensionMismatch(
            f"schedule needs {schedule.m_total} probes, ensemble has {ensemble.m_total}"
        )
    values = np.empty((ensemble.m_total, ensemble.n2))
    for i in range(ensemble.n2):
        values[:, i] = np.einsum("jpk,pk->j", ensemble.slice_probes(i), x[:, i, :])
    groups = schedule.group_map() if schedule is not None else None
    return MeasurementSet(values, groups)
