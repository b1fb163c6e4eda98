"""Wall-time, energy and emission accounting for pipeline phases.

Energy is modeled as average device draw times wall time (times PUE), not
read from hardware counters, so records are portable and exactly testable
with a fake clock.  The long-term projection extends a training record by
a per-inference cost, affine in the number of cases.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import ConfigError, MeterError

PHASES = ("pu_select", "augment", "genaug", "train", "eval")


@dataclass(frozen=True)
class PowerModel:
    device_watts: float = 50.0
    pue: float = 1.0
    grid_intensity: float = 300.0  # gCO2e per kWh

    def __post_init__(self):
        if self.device_watts <= 0 or self.grid_intensity <= 0:
            raise ConfigError("device watts and grid intensity must be positive")
        if self.pue < 1.0:
            raise ConfigError("PUE cannot be below 1")


@dataclass(frozen=True)
class EmissionRecord:
    phase: str
    wall_seconds: float
    energy_kwh: float
    emissions_g: float


def make_record(phase: str, wall_seconds: float, pm: PowerModel) -> EmissionRecord:
    """energy_kwh = wall/3600 * watts/1000 * pue; emissions = energy * grid.
    Evaluated exactly in this form so fake-clock tests can assert equality.
    """
    if phase not in PHASES:
        raise ConfigError(f"unknown phase {phase!r}")
    if wall_seconds < 0:
        raise MeterError("clock ran backwards")
    energy = (wall_seconds / 3600.0) * (pm.device_watts / 1000.0) * pm.pue
    return EmissionRecord(
        phase=phase, wall_seconds=wall_seconds, energy_kwh=energy, emissions_g=energy * pm.grid_intensity
    )


class Meter:
    """Accumulates one record per measured phase.

    A single scope may be active at a time; measuring inside a running
    measurement is a usage error.  The clock is injectable (any callable
    returning seconds) so tests can drive it deterministically.
    """

    def __init__(self, pm: PowerModel | None = None, clock: Callable[[], float] = time.perf_counter):
        self.pm = pm or PowerModel()
        self.clock = clock
        self.records: list[EmissionRecord] = []
        self._active: str | None = None

    def measure(self, phase: str, work: Callable[[], object]):
        """Run work(), append the record, return (result, record).
        A failing task propagates its exception and leaves no record."""
        if self._active is not None:
            raise MeterError(f"measurement of {self._active!r} still in progress")
        if phase not in PHASES:
            raise ConfigError(f"unknown phase {phase!r}")
        self._active = phase
        start = self.clock()
        try:
            result = work()
        finally:
            self._active = None
        record = make_record(phase, self.clock() - start, self.pm)
        self.records.append(record)
        return result, record


class FakeClock:
    """Deterministic clock for tests: reads the current value; advance()
    moves it forward."""

    def __init__(self, start: float = 0.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float):
        self.now += seconds


def project_longterm(train_rec: EmissionRecord, per_inference_g: float, n_cases: int) -> float:
    """Total emissions after n_cases rankings: training cost plus the
    linear inference term."""
    if per_inference_g < 0 or n_cases < 0:
        raise ConfigError("projection inputs must be non-negative")
    return train_rec.emissions_g + per_inference_g * n_cases


DEFAULT_PROJECTION_GRID = (0, 1, 10, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000)


def write_projection_csv(
    train_rec: EmissionRecord,
    per_inference_g: float,
    path: str | Path,
    grid: Sequence[int] = DEFAULT_PROJECTION_GRID,
):
    """Projection curve over a log-spaced case grid, for external plotting."""
    rows = ["n_cases,total_g"]
    for n in grid:
        rows.append(f"{n},{project_longterm(train_rec, per_inference_g, n)!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_emissions_csv(records: Sequence[EmissionRecord], path: str | Path):
    rows = ["phase,wall_seconds,energy_kwh,emissions_g"]
    for r in records:
        rows.append(f"{r.phase},{r.wall_seconds!r},{r.energy_kwh!r},{r.emissions_g!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
