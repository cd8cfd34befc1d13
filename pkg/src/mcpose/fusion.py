"""Asynchronous per-camera ingestion with a fixed-rate fusion tick.

Many producer threads may ingest concurrently (one per camera); exactly
one consumer runs tick.  Each camera owns a latest-wins slot: stale
arrivals (capture timestamp not newer than the stored one) are dropped
and counted.  A tick triangulates only views fresher than the staleness
horizon and emits only when some slot changed since the last emission.

Time is injected everywhere: tests drive a virtual clock, the live CLI
passes wall-clock time.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

from .errors import InvariantViolationError
from .geometry import Camera
from .skeleton import Skeleton2D, Skeleton3D
from .triangulation import InsufficientViewsError, WeightParams, triangulate_skeleton


@dataclass(frozen=True)
class LatencyRecord:
    """Per-camera timing of one emitted frame."""

    camera: int
    capture_to_ingest: float
    ingest_to_output: float

    def __post_init__(self):
        if self.capture_to_ingest < 0 or self.ingest_to_output < 0:
            raise InvariantViolationError("latency components must be non-negative")


@dataclass(frozen=True)
class FusionConfig:
    tick_rate: float = 100.0
    staleness_horizon: float = 0.5
    weight_params: WeightParams = field(default_factory=WeightParams)

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise InvariantViolationError(f"tick_rate must be positive, got {self.tick_rate}")
        if self.staleness_horizon <= 0:
            raise InvariantViolationError(f"staleness_horizon must be positive, got {self.staleness_horizon}")


@dataclass(frozen=True)
class _Slot:
    view: Skeleton2D
    arrival: float


class ViewBuffer:
    """Latest view per camera with per-slot atomic replacement."""

    def __init__(self):
        self._slots: dict[int, _Slot] = {}
        self._lock = threading.Lock()
        self._version = 0
        self.reorder_count = 0

    def ingest(self, view: Skeleton2D, arrival: float) -> bool:
        """Store the view unless an equal-or-newer one is already present."""
        slot = _Slot(view=view, arrival=arrival)
        with self._lock:
            current = self._slots.get(view.camera)
            if current is not None and view.timestamp <= current.view.timestamp:
                self.reorder_count += 1
                return False
            self._slots[view.camera] = slot
            self._version += 1
            return True

    def snapshot(self) -> tuple[dict[int, _Slot], int]:
        with self._lock:
            return dict(self._slots), self._version

    def discard_older_than(self, cutoff: float) -> None:
        with self._lock:
            stale = [c for c, slot in self._slots.items() if slot.view.timestamp < cutoff]
            for c in stale:
                del self._slots[c]

    def __len__(self) -> int:
        with self._lock:
            return len(self._slots)


@dataclass(frozen=True)
class FusionOutput:
    skeleton: Skeleton3D
    latency: list[LatencyRecord]
    tick_cost: float  # seconds spent triangulating


class FusionLoop:
    """Single consumer combining the freshest per-camera views at tick_rate."""

    def __init__(self, rig: Mapping[int, Camera] | Sequence[Camera], config: FusionConfig):
        if not isinstance(rig, Mapping):
            rig = {cam.id: cam for cam in rig}
        self.rig = dict(rig)
        self.config = config
        self.buffer = ViewBuffer()
        self.prior: Optional[Skeleton3D] = None
        self._emitted_version = 0
        self._last_emit_time: Optional[float] = None

    def ingest(self, view: Skeleton2D, arrival: float) -> bool:
        return self.buffer.ingest(view, arrival)

    def tick(self, now: float) -> Optional[FusionOutput]:
        """Fuse fresh views; None when nothing new or fewer than two views."""
        cutoff = now - self.config.staleness_horizon
        self.buffer.discard_older_than(cutoff)
        slots, version = self.buffer.snapshot()
        if version == self._emitted_version:
            return None
        fresh = {c: s for c, s in slots.items() if s.view.timestamp >= cutoff}
        if len(fresh) < 2:
            return None
        started = time.perf_counter()
        try:
            skeleton = triangulate_skeleton(
                {c: s.view for c, s in fresh.items()},
                self.rig,
                self.config.weight_params,
                self.prior,
                timestamp=now,
            )
        except InsufficientViewsError:
            return None
        cost = time.perf_counter() - started
        self._emitted_version = version
        self.prior = skeleton
        self._last_emit_time = now
        output_time = now + cost
        records = [
            LatencyRecord(
                camera=c,
                capture_to_ingest=max(0.0, s.arrival - s.view.timestamp),
                ingest_to_output=max(0.0, output_time - s.arrival),
            )
            for c, s in sorted(fresh.items())
        ]
        return FusionOutput(skeleton=skeleton, latency=records, tick_cost=cost)


def follow(
    loop: FusionLoop,
    paths: Sequence[str],
    *,
    idle_timeout: float = 2.0,
    clock=time.monotonic,
    on_output=None,
) -> list[FusionOutput]:
    """Tail JSON Lines inputs (regular files or named pipes) live.

    One reader thread per input ingests views as lines appear, stamping
    arrivals on a wall-driven clock rebased to the first view's capture
    timestamp.  The consumer ticks at the configured rate until every
    reader hits end-of-stream (pipes: all writers closed; files: no new
    data for ``idle_timeout`` seconds).
    """
    import json as _json

    from .skeleton import skeleton2d_from_obj

    outputs: list[FusionOutput] = []
    epoch: dict = {}
    start_wall = clock()
    lock = threading.Lock()
    done = threading.Event()
    remaining = threading.Semaphore(0)

    def now() -> float:
        with lock:
            base = epoch.get("t0")
        if base is None:
            return start_wall
        return base + (clock() - start_wall)

    def reader(path: str):
        try:
            with open(path, "r", encoding="utf-8") as f:
                idle_since = clock()
                while not done.is_set():
                    line = f.readline()
                    if not line:
                        if clock() - idle_since > idle_timeout:
                            break
                        time.sleep(0.002)
                        continue
                    idle_since = clock()
                    line = line.strip()
                    if not line:
                        continue
                    view = skeleton2d_from_obj(_json.loads(line))
                    with lock:
                        epoch.setdefault("t0", view.timestamp)
                    loop.ingest(view, arrival=now())
        finally:
            remaining.release()

    threads = [threading.Thread(target=reader, args=(p,), daemon=True) for p in paths]
    for t in threads:
        t.start()
    period = 1.0 / loop.config.tick_rate
    alive = len(threads)
    try:
        while True:
            while remaining.acquire(blocking=False):
                alive -= 1
            out = loop.tick(now())
            if out is not None:
                outputs.append(out)
                if on_output is not None:
                    on_output(out)
            if alive == 0:
                break
            time.sleep(period)
    finally:
        done.set()
        for t in threads:
            t.join(timeout=1.0)
    return outputs


def replay(
    loop: FusionLoop,
    streams: Mapping[int, Sequence[Skeleton2D]],
    *,
    transport_delay: float = 0.0,
) -> Iterator[FusionOutput]:
    """Drive the loop over recorded streams on a virtual clock.

    Arrivals happen at capture time plus ``transport_delay``; ticks run
    on the loop's configured grid from the first arrival to the last
    arrival plus one staleness horizon.  Arrivals at a tick instant are
    ingested before the tick fires.
    """
    arrivals = sorted(
        ((view.timestamp + transport_delay, view) for views in streams.values() for view in views),
        key=lambda pair: (pair[0], pair[1].camera),
    )
    if not arrivals:
        return
    period = 1.0 / loop.config.tick_rate
    start = arrivals[0][0]
    end = arrivals[-1][0] + loop.config.staleness_horizon
    i = 0
    k = 0
    while True:
        tick_time = start + k * period
        if tick_time > end:
            break
        while i < len(arrivals) and arrivals[i][0] <= tick_time:
            loop.ingest(arrivals[i][1], arrival=arrivals[i][0])
            i += 1
        out = loop.tick(tick_time)
        if out is not None:
            yield out
        k += 1
