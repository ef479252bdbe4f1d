"""Open-loop arrival schedule generation and client assignment.

One seeded generator produces the global request schedule for a target QPS;
the schedule is then partitioned round-robin over a finite client pool so the
simulator can judge, per request, whether its client was free at the
scheduled instant (the timeliness test).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelError

_RATE_CHUNK = 16384  # gap draws per block while filling a horizon


@dataclass(frozen=True)
class ArrivalModel:
    """Arrival process: evenly spaced, Poisson, or bursty Zipf-multiplier gaps.

    The zipf model draws inter-arrival gaps g = c * Z with Z sampled from a
    bounded Zipf(alpha) over {1..support_n}; c normalizes the mean gap to
    1/qps, so small Z values produce dense request bursts separated by long
    pauses.
    """

    kind: str  # deterministic | poisson | zipf
    alpha: float = 1.0
    support_n: int = 1000

    KINDS = ("deterministic", "poisson", "zipf")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ModelError(f"arrival model: unknown kind {self.kind!r}")
        if self.kind == "zipf":
            if self.alpha <= 0:
                raise ModelError("arrival model: zipf alpha must be > 0")
            if self.support_n < 2:
                raise ModelError("arrival model: zipf support_n must be >= 2")

    def label(self) -> str:
        if self.kind == "zipf":
            return f"zipf({self.alpha},{self.support_n})"
        return self.kind


@dataclass(frozen=True)
class ArrivalSchedule:
    """Scheduled request issue times for one run."""

    times: np.ndarray  # seconds, non-decreasing, all < duration
    target_qps: float
    model: ArrivalModel
    seed: int
    duration: float

    def __len__(self) -> int:
        return len(self.times)

    @property
    def realized_qps(self) -> float:
        return len(self.times) / self.duration


@dataclass(frozen=True)
class ClientAssignment:
    """Round-robin partition of schedule indices over n_clients clients."""

    client_indices: tuple[np.ndarray, ...]
    n_clients: int


def build_schedule(model: ArrivalModel, qps: float, duration: float,
                   seed: int) -> ArrivalSchedule:
    """Generate the arrival schedule for one run.

    Identical (model, qps, duration, seed) always yields the identical
    schedule.
    """
    if qps <= 0:
        raise ModelError("qps: must be positive")
    if duration <= 0:
        raise ModelError("duration: must be positive")
    if model.kind == "deterministic":
        n = int(np.floor(qps * duration + 1e-9))
        times = np.arange(n, dtype=np.float64) / qps
    elif model.kind == "poisson":
        rng = np.random.default_rng(seed)
        times = _accumulate_gaps(
            lambda k: rng.exponential(1.0 / qps, k), duration)
    else:
        rng = np.random.default_rng(seed)
        support = np.arange(1, model.support_n + 1, dtype=np.float64)
        weights = support ** (-model.alpha)
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        mean_z = float(np.sum(support * weights) / np.sum(weights))
        scale = 1.0 / (qps * mean_z)

        def draw(k: int) -> np.ndarray:
            z = np.searchsorted(cdf, rng.random(k), side="right") + 1
            return scale * z

        times = _accumulate_gaps(draw, duration)
    return ArrivalSchedule(times=times, target_qps=qps, model=model,
                           seed=seed, duration=duration)


def _accumulate_gaps(draw, duration: float) -> np.ndarray:
    """Cumulate gap draws until the horizon is covered, then cut."""
    chunks: list[np.ndarray] = []
    total = 0.0
    while total < duration:
        gaps = draw(_RATE_CHUNK)
        cum = total + np.cumsum(gaps)
        chunks.append(cum)
        total = float(cum[-1])
    times = np.concatenate(chunks)
    return times[times < duration].copy()


def assign_clients(schedule: ArrivalSchedule,
                   n_clients: int) -> ClientAssignment:
    """Partition requests round-robin: client i gets i, i+n, i+2n, ..."""
    if n_clients < 1:
        raise ModelError("n_clients: must be >= 1")
    n = len(schedule.times)
    idx = np.arange(n)
    parts = tuple(idx[c::n_clients] for c in range(n_clients))
    return ClientAssignment(client_indices=parts, n_clients=n_clients)


def export_schedule(schedule: ArrivalSchedule, path: str | Path) -> None:
    """Write the schedule as two-column text (index, scheduled_time_seconds).

    Header comments carry the generation parameters so imports round-trip.
    """
    lines = [
        f"# target_qps: {schedule.target_qps!r}",
        f"# model: {schedule.model.kind}",
        f"# alpha: {schedule.model.alpha!r}",
        f"# support_n: {schedule.model.support_n}",
        f"# seed: {schedule.seed}",
        f"# duration: {schedule.duration!r}",
    ]
    lines.extend(f"{i} {float(t)!r}" for i, t in enumerate(schedule.times))
    Path(path).write_text("\n".join(lines) + "\n")


def import_schedule(path: str | Path) -> ArrivalSchedule:
    """Read back a schedule written by export_schedule."""
    meta: dict[str, str] = {}
    times: list[float] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelError(f"{path}:{lineno}: expected 'index time'")
        times.append(float(parts[1]))
    model = ArrivalModel(
        kind=meta.get("model", "deterministic"),
        alpha=float(meta.get("alpha", "1.0")),
        support_n=int(meta.get("support_n", "1000")),
    )
    arr = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(arr) < 0):
        raise ModelError(f"{path}: times must be non-decreasing")
    return ArrivalSchedule(
        times=arr,
        target_qps=float(meta.get("target_qps", "0") or 0) or
        (len(arr) / float(meta["duration"]) if "duration" in meta else 0.0),
        model=model,
        seed=int(meta.get("seed", "0")),
        duration=float(meta.get("duration", arr[-1] + 1.0 if len(arr) else 1.0)),
    )
