"""Walk dynamics: single-step reference semantics and a fast chunked engine.

A walk keeps a ring buffer of its last N increments. At each step it may
first re-evaluate its regime (always, for the instantaneous version; only
once the current law has produced the full window, for the delayed version)
and then draws one increment from the active law. Decisions compare the
window SUM against N*threshold, half-open: strictly below the lower threshold
moves down, at-or-above the upper one moves up. The first N steps always use
the initial regime, for both versions.

``step_delayed``/``step_instantaneous`` implement exactly one step and are
the reference semantics. ``run`` implements the same dynamics but draws
increments in chunks and scans window sums vectorised; at a regime switch the
unused tail of a chunk is discarded, so a run is reproducible given its seed
but does not consume the stream in the same order as repeated step_* calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .distributions import IncrementDistribution, sample, sample_n
from .errors import InvalidInputError
from .theory import ModelSpec, threshold_bounds

__all__ = [
    "WalkState",
    "SojournRecord",
    "TraceSummary",
    "RunResult",
    "BlockOutcome",
    "init",
    "step_delayed",
    "step_instantaneous",
    "run",
    "sample_exit",
    "sample_block_Z",
    "sample_block_outcomes",
]

# rolling window sums are refreshed by exact recomputation this often
_RESUM_INTERVAL = 1 << 20

_VERSIONS = ("delayed", "instantaneous")


@dataclass
class WalkState:
    """Mutable per-walk state. ``window`` is a ring buffer; ``head`` marks the
    oldest entry (the next one to be overwritten)."""

    position: float
    time: int
    regime: int
    consecutive_uses: int
    window: np.ndarray
    window_sum: float
    head: int = 0
    steps_since_resum: int = 0

    def window_chronological(self) -> np.ndarray:
        """Window contents oldest-first."""
        return np.concatenate([self.window[self.head:], self.window[:self.head]])


@dataclass(frozen=True)
class SojournRecord:
    """One stay in one regime. ``steps`` counts every draw made under that
    regime's law (the forced window-refill included); ``exit_direction`` is
    'up'/'down', or None when the run's horizon cut the stay short."""

    regime: int | None
    steps: int
    displacement: float
    exit_direction: str | None
    censored: bool = False


@dataclass(frozen=True)
class TraceSummary:
    """Checkpoint rows: running position and speed at selected times."""

    times: np.ndarray
    positions: np.ndarray
    speeds: np.ndarray
    regimes: np.ndarray
    window_avgs: np.ndarray


@dataclass(frozen=True)
class RunResult:
    spec: ModelSpec
    version: str
    steps: int
    final_state: WalkState
    records: tuple[SojournRecord, ...]
    trace: TraceSummary
    occupancy_steps: np.ndarray
    increments: np.ndarray | None = None

    @property
    def terminal_speed(self) -> float:
        return self.final_state.position / self.final_state.time


def _check_version(version: str) -> bool:
    if version not in _VERSIONS:
        raise InvalidInputError(f"version must be one of {_VERSIONS}, got {version!r}")
    return version == "delayed"


def init(spec: ModelSpec, rng) -> WalkState:
    """Fresh walk after its N forced initial-regime steps."""
    n = spec.window
    draws = sample_n(spec.dists[spec.initial_regime], n, rng)
    return WalkState(
        position=float(draws.sum()),
        time=n,
        regime=spec.initial_regime,
        consecutive_uses=n,
        window=np.array(draws, dtype=float),
        window_sum=float(draws.sum()),
    )


def _step(state: WalkState, spec: ModelSpec, rng, delayed: bool) -> WalkState:
    n = spec.window
    if not delayed or state.consecutive_uses >= n:
        lo, hi = threshold_bounds(spec, state.regime)
        if state.window_sum < n * lo:
            state.regime -= 1
            state.consecutive_uses = 0
        elif state.window_sum >= n * hi:
            state.regime += 1
            state.consecutive_uses = 0
    x = sample(spec.dists[state.regime], rng)
    old = float(state.window[state.head])
    state.window[state.head] = x
    state.head = (state.head + 1) % n
    state.window_sum += x - old
    state.steps_since_resum += 1
    if state.steps_since_resum >= _RESUM_INTERVAL:
        state.window_sum = float(state.window.sum())
        state.steps_since_resum = 0
    state.position += x
    state.time += 1
    state.consecutive_uses += 1
    return state


def step_delayed(state: WalkState, spec: ModelSpec, rng) -> WalkState:
    """One step; the regime rule only fires once the current law filled the window."""
    return _step(state, spec, rng, delayed=True)


def step_instantaneous(state: WalkState, spec: ModelSpec, rng) -> WalkState:
    """One step; the regime rule fires before every draw."""
    return _step(state, spec, rng, delayed=False)


def _default_checkpoints(n: int, steps: int) -> np.ndarray:
    pts = np.unique(np.geomspace(n, steps, num=64).round().astype(np.int64))
    return pts[(pts >= n) & (pts <= steps)]


class _Engine:
    """Chunked implementation of one run. See module docstring for the
    dynamics; the invariants maintained between loop iterations are

    * ``window`` holds the last min(t, N) increments, oldest first;
    * ``forced`` counts draws that must still happen without rule evaluation;
    * every rule decision happens either at the loop top (exact window sum)
      or inside a chunk scan, once per draw, never twice.
    """

    def __init__(self, spec, delayed, steps, rng, checkpoint_times, record_increments, chunk_size):
        self.spec = spec
        self.delayed = delayed
        self.steps = steps
        self.rng = rng
        self.n = spec.window
        self.lo_sums = np.array([self.n * threshold_bounds(spec, i)[0] for i in range(spec.l + 1)])
        self.hi_sums = np.array([self.n * threshold_bounds(spec, i)[1] for i in range(spec.l + 1)])
        self.chunk_size = chunk_size
        self.pos = 0.0
        self.t = 0
        self.cur = spec.initial_regime
        self.window = np.empty(0, dtype=float)
        self.records: list[SojournRecord] = []
        self.sojourn_start_t = 0
        self.sojourn_start_pos = 0.0
        self.occupancy = np.zeros(spec.l + 1, dtype=np.int64)
        self.ckpt_times = checkpoint_times
        self.ckpt_next = 0
        self.ckpt_pos: list[float] = []
        self.ckpt_regime: list[int] = []
        self.ckpt_wavg: list[float] = []
        self.keep_increments = record_increments
        self.increments: list[np.ndarray] = []

    def _next_chunk_len(self, grown: int) -> int:
        if self.chunk_size is not None:
            return self.chunk_size
        return min(max(64, 2 * self.n) << grown, 1 << 17)

    def _absorb(self, chunk: np.ndarray, c0: np.ndarray | None) -> None:
        """Account for ``chunk`` being drawn under the current regime.

        ``c0`` is the zero-prefixed cumsum of window+chunk when the caller
        already built it; otherwise it is built here on demand for
        checkpoint resolution.
        """
        k = len(chunk)
        if k == 0:
            return
        b = len(self.window)
        while self.ckpt_next < len(self.ckpt_times) and self.ckpt_times[self.ckpt_next] <= self.t + k:
            u = int(self.ckpt_times[self.ckpt_next])
            if c0 is None:
                full = np.concatenate([self.window, chunk])
                c0 = np.concatenate([[0.0], np.cumsum(full)])
            j = u - self.t  # in 1..k
            self.ckpt_pos.append(self.pos + float(c0[b + j] - c0[b]))
            self.ckpt_regime.append(self.cur)
            back = b + j - self.n
            if u >= self.n and back >= 0:
                self.ckpt_wavg.append(float(c0[b + j] - c0[back]) / self.n)
            else:
                self.ckpt_wavg.append(math.nan)
            self.ckpt_next += 1
        if self.keep_increments:
            self.increments.append(chunk.copy())
        self.pos += float(chunk.sum()) if c0 is None else float(c0[b + k] - c0[b])
        self.occupancy[self.cur] += k
        self.t += k
        if k >= self.n:
            self.window = chunk[-self.n:].copy()
        else:
            self.window = np.concatenate([self.window, chunk])[-self.n:]

    def _close_sojourn(self, direction: str | None) -> None:
        self.records.append(SojournRecord(
            regime=self.cur,
            steps=self.t - self.sojourn_start_t,
            displacement=self.pos - self.sojourn_start_pos,
            exit_direction=direction,
            censored=direction is None,
        ))
        self.sojourn_start_t = self.t
        self.sojourn_start_pos = self.pos

    def run(self) -> RunResult:
        n, steps = self.n, self.steps
        forced = n  # the initial window refill, both versions
        forced_after_switch = n if self.delayed else 1
        grown = 0
        while self.t < steps:
            law = self.spec.dists[self.cur]
            if forced > 0:
                k = min(forced, steps - self.t)
                self._absorb(sample_n(law, k, self.rng), None)
                forced -= k
                continue
            lo, hi = self.lo_sums[self.cur], self.hi_sums[self.cur]
            s = float(self.window.sum())  # exact: kills rolling drift
            if s < lo or s >= hi:
                self._close_sojourn("down" if s < lo else "up")
                self.cur += -1 if s < lo else 1
                forced = forced_after_switch
                grown = 0
                continue
            m = min(self._next_chunk_len(grown), steps - self.t)
            grown += 1
            chunk = sample_n(law, m, self.rng)
            c0 = np.concatenate([[0.0], np.cumsum(np.concatenate([self.window, chunk]))])
            ws = c0[n:] - c0[: m + 1]  # ws[j]: window sum after j draws of this chunk
            viol = (ws < lo) | (ws >= hi)
            viol[0] = False  # checked exactly at loop top
            hit = int(np.argmax(viol)) if viol.any() else 0
            if hit == 0 or self.t + hit == steps:
                # no decision inside this chunk belongs to the horizon
                self._absorb(chunk, c0)
                continue
            self._absorb(chunk[:hit], c0[: n + hit + 1])
            out_low = bool(ws[hit] < lo)
            self._close_sojourn("down" if out_low else "up")
            self.cur += -1 if out_low else 1
            forced = forced_after_switch
            grown = 0
        if self.t > self.sojourn_start_t:
            self._close_sojourn(None)
        return self._result()

    def _result(self) -> RunResult:
        win = self.window.copy()
        # the run always ends inside a sojourn, so the last (censored) record
        # counts the draws since the most recent switch
        state = WalkState(
            position=self.pos,
            time=self.t,
            regime=self.cur,
            consecutive_uses=self.records[-1].steps,
            window=win,
            window_sum=float(win.sum()),
        )
        times = np.asarray(self.ckpt_times[: self.ckpt_next], dtype=np.int64)
        positions = np.asarray(self.ckpt_pos)
        trace = TraceSummary(
            times=times,
            positions=positions,
            speeds=positions / np.maximum(times, 1),
            regimes=np.asarray(self.ckpt_regime, dtype=np.int64),
            window_avgs=np.asarray(self.ckpt_wavg),
        )
        incs = None
        if self.keep_increments:
            incs = np.concatenate(self.increments) if self.increments else np.empty(0)
        return RunResult(
            spec=self.spec,
            version="delayed" if self.delayed else "instantaneous",
            steps=self.steps,
            final_state=state,
            records=tuple(self.records),
            trace=trace,
            occupancy_steps=self.occupancy,
            increments=incs,
        )


def run(
    spec: ModelSpec,
    version: str,
    steps: int,
    rng,
    *,
    checkpoint_times=None,
    record_increments: bool = False,
    chunk_size: int | None = None,
) -> RunResult:
    """Simulate ``steps`` draws and return records, trace and final state.

    ``checkpoint_times`` defaults to ~64 geometrically spaced times in
    [N, steps]; extra times can be supplied (they are merged, deduplicated and
    clipped). ``chunk_size`` pins the internal draw chunk length, which
    changes how much of the stream is discarded at switches but never the
    dynamics; it exists for tests.
    """
    delayed = _check_version(version)
    steps = int(steps)
    if steps < spec.window:
        raise InvalidInputError(f"steps={steps} must be at least the window length {spec.window}")
    if chunk_size is not None and chunk_size < 1:
        raise InvalidInputError("chunk_size must be positive")
    if checkpoint_times is None:
        ckpts = _default_checkpoints(spec.window, steps)
    else:
        extra = np.asarray(list(checkpoint_times), dtype=np.int64)
        ckpts = np.unique(np.concatenate([_default_checkpoints(spec.window, steps), extra]))
        ckpts = ckpts[(ckpts >= 1) & (ckpts <= steps)]
    eng = _Engine(spec, delayed, steps, rng, ckpts, record_increments, chunk_size)
    return eng.run()


def sample_exit(
    d: IncrementDistribution,
    r_lo: float,
    r_hi: float,
    n: int,
    rng,
    cap: int = 10_000_000,
) -> SojournRecord:
    """One fresh stay between thresholds: refill the window with N draws of
    ``d``, then step until the window average leaves [r_lo, r_hi).

    Returns steps (exit time + N), displacement, and the exit direction;
    infinite bounds make that side unreachable. If the stay would exceed
    ``cap`` total draws it is returned censored.
    """
    if not r_lo < r_hi:
        raise InvalidInputError(f"need r_lo < r_hi, got ({r_lo}, {r_hi})")
    if n < 1 or cap < n:
        raise InvalidInputError(f"need 1 <= N <= cap, got N={n}, cap={cap}")
    lo, hi = n * r_lo, n * r_hi
    window = sample_n(d, n, rng)
    pos = float(window.sum())
    t = n
    m = max(64, 2 * n)
    while True:
        s = float(window.sum())
        if s < lo or s >= hi:
            return SojournRecord(None, t, pos, "down" if s < lo else "up", False)
        if t >= cap:
            return SojournRecord(None, t, pos, None, True)
        k = min(m, cap - t)
        m = min(2 * m, 1 << 17)
        chunk = sample_n(d, k, rng)
        c0 = np.concatenate([[0.0], np.cumsum(np.concatenate([window, chunk]))])
        ws = c0[n:] - c0[: k + 1]
        viol = (ws < lo) | (ws >= hi)
        viol[0] = False
        hit = int(np.argmax(viol)) if viol.any() else 0
        if hit == 0:
            pos += float(c0[n + k] - c0[n])
            t += k
            window = chunk[-n:].copy() if k >= n else np.concatenate([window, chunk])[-n:]
            continue
        pos += float(c0[n + hit] - c0[n])
        t += hit
        out_low = bool(ws[hit] < lo)
        return SojournRecord(None, t, pos, "down" if out_low else "up", False)


class BlockOutcome(Enum):
    """What the N window averages inside one 2N-1 increment block did:
    UP crossed the upper threshold only, DOWN dropped below the lower only,
    BOTH did both, NONE stayed inside."""

    UP = "up"
    DOWN = "down"
    BOTH = "both"
    NONE = "none"


def _classify(ws: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Outcome codes 0=UP 1=DOWN 2=BOTH 3=NONE for rows of window sums."""
    up = ws.max(axis=1) >= hi
    dn = ws.min(axis=1) < lo
    return np.where(up & ~dn, 0, np.where(~up & dn, 1, np.where(up & dn, 2, 3)))


_OUTCOME_BY_CODE = (BlockOutcome.UP, BlockOutcome.DOWN, BlockOutcome.BOTH, BlockOutcome.NONE)


def _block_window_sums(d, n: int, count: int, rng) -> np.ndarray:
    draws = sample_n(d, count * (2 * n - 1), rng).reshape(count, 2 * n - 1)
    c = np.cumsum(draws, axis=1)
    c0 = np.concatenate([np.zeros((count, 1)), c], axis=1)
    return c0[:, n:] - c0[:, :n]  # N sums per row


def sample_block_Z(d: IncrementDistribution, r_lo: float, r_hi: float, n: int, rng) -> BlockOutcome:
    """Classify one fresh block of 2N-1 increments of ``d``."""
    if not r_lo < r_hi:
        raise InvalidInputError(f"need r_lo < r_hi, got ({r_lo}, {r_hi})")
    if n < 1:
        raise InvalidInputError(f"N must be >= 1, got {n}")
    ws = _block_window_sums(d, n, 1, rng)
    return _OUTCOME_BY_CODE[int(_classify(ws, n * r_lo, n * r_hi)[0])]


def sample_block_outcomes(
    d: IncrementDistribution, r_lo: float, r_hi: float, n: int, rng, count: int,
    batch: int = 1 << 22,
) -> dict[BlockOutcome, int]:
    """Outcome counts over ``count`` independent blocks, drawn in batches."""
    if not r_lo < r_hi:
        raise InvalidInputError(f"need r_lo < r_hi, got ({r_lo}, {r_hi})")
    if n < 1 or count < 1:
        raise InvalidInputError("N and count must be >= 1")
    rows_per_batch = max(1, batch // (2 * n - 1))
    tallies = np.zeros(4, dtype=np.int64)
    done = 0
    while done < count:
        rows = min(rows_per_batch, count - done)
        ws = _block_window_sums(d, n, rows, rng)
        tallies += np.bincount(_classify(ws, n * r_lo, n * r_hi), minlength=4)
        done += rows
    return {out: int(tallies[i]) for i, out in enumerate(_OUTCOME_BY_CODE)}
