"""Agent-based order book driven by trader opinions.

``N`` traders hold integer opinions; ``M`` of them own one share each.
Each update picks a trader with probability proportional to
``(1 + |p_i - p|)**(-gamma)``, moves its opinion by a drifted random step
in ``{-l..l}``, and, if the move breaks the ordering between owners and
non-owners, executes a trade with the boundary trader on the other side.
Both traders then jump ``k`` ticks away from the trading price.

The whole update lives in one jit kernel so that long runs stay cheap; the
single-step helpers below call the same kernel pieces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._jit import njit
from .rng import RngLike, as_generator, as_kernel_state, next_u64, next_uniform
from .stats import SeriesRecord

PRICE_FORMULAS = ("mid", "half_spread")
DRIFT_RULES = ("sign", "role")
H_TABLE_SIZE = 1 << 14
SERIES_COLUMNS = ("step", "price", "ask", "bid", "gap", "delta_ext")


@dataclass(frozen=True)
class GameConfig:
    n_traders: int = 2000
    n_shares: int = 1000
    gamma: float = 1.5
    l: int = 4
    drift_magnitude: float = 0.1
    ext_mean: float = 0.12
    ext_rate_steps: int = 2000
    jump_away_range: tuple[int, int] = (5, 20)
    record_every: int = 100
    init_width: int = 400
    price_formula: str = "mid"
    drift_rule: str = "sign"

    def __post_init__(self):
        errors = []
        if self.n_traders < 2:
            errors.append(f"n_traders must be >= 2, got {self.n_traders}")
        if not 0 < self.n_shares < self.n_traders:
            errors.append(f"n_shares must lie in (0, n_traders), got {self.n_shares}")
        if not self.gamma >= 0:
            errors.append(f"gamma must be non-negative, got {self.gamma}")
        if self.l < 1:
            errors.append(f"l must be >= 1, got {self.l}")
        if not self.drift_magnitude > 0:
            errors.append(f"drift_magnitude must be positive, got {self.drift_magnitude}")
        if not self.ext_mean > 0:
            errors.append(f"ext_mean must be positive, got {self.ext_mean}")
        if self.ext_rate_steps < 1:
            errors.append(f"ext_rate_steps must be >= 1, got {self.ext_rate_steps}")
        lo, hi = self.jump_away_range
        if not 0 <= lo <= hi:
            errors.append(f"jump_away_range must be an interval lo..hi with 0 <= lo <= hi, got {lo}..{hi}")
        if self.record_every < 1:
            errors.append(f"record_every must be >= 1, got {self.record_every}")
        if self.init_width < 0:
            errors.append(f"init_width must be >= 0, got {self.init_width}")
        if self.price_formula not in PRICE_FORMULAS:
            errors.append(f"price_formula must be one of {PRICE_FORMULAS}, got {self.price_formula!r}")
        if self.drift_rule not in DRIFT_RULES:
            errors.append(f"drift_rule must be one of {DRIFT_RULES}, got {self.drift_rule!r}")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class OrderBookState:
    opinions: np.ndarray
    owns: np.ndarray
    time_step: int = 0

    def copy(self) -> "OrderBookState":
        return OrderBookState(self.opinions.copy(), self.owns.copy(), self.time_step)

    @property
    def n_shares(self) -> int:
        return int(np.count_nonzero(self.owns))

    def is_stable(self) -> bool:
        """Owners hold the ``M`` highest opinions (equal opinions may sit on either side)."""
        if self.owns.all() or not self.owns.any():
            return True
        return bool(self.opinions[self.owns].min() >= self.opinions[~self.owns].max())

    def snapshot_rows(self):
        return zip(range(self.opinions.size), self.opinions.tolist(), self.owns.astype(int).tolist())


@dataclass(frozen=True)
class MarketQuote:
    ask: int
    bid: int
    price: float


@dataclass
class ExternalForce:
    strength: float
    next_switch: int


def top_m_owners(opinions, m: int) -> np.ndarray:
    """Ownership flags for the ``m`` highest opinions; ties go to the lower index."""
    opinions = np.asarray(opinions)
    order = np.lexsort((np.arange(opinions.size), -opinions))
    owns = np.zeros(opinions.size, dtype=np.bool_)
    owns[order[:m]] = True
    return owns


def init_book(config: GameConfig, rng: RngLike) -> OrderBookState:
    half = config.init_width // 2
    lo = -half
    hi = config.init_width - half
    ops = as_generator(rng).integers(lo, hi + 1, size=config.n_traders).astype(np.int64)
    return OrderBookState(ops, top_m_owners(ops, config.n_shares), 0)


# ------------------------------------------------------------------ kernels

@njit
def _price(ask, bid, mid):
    if mid:
        return 0.5 * (ask + bid)
    return 0.5 * (ask - bid)


@njit
def _scan_ask(ops, owns):
    """Lowest owner opinion and the lowest index holding it."""
    best = 0
    j = -1
    for i in range(ops.shape[0]):
        if owns[i] and (j < 0 or ops[i] < best):
            best = ops[i]
            j = i
    return best, j


@njit
def _scan_bid(ops, owns):
    """Highest non-owner opinion and the lowest index holding it."""
    best = 0
    j = -1
    for i in range(ops.shape[0]):
        if not owns[i] and (j < 0 or ops[i] > best):
            best = ops[i]
            j = i
    return best, j


@njit
def _uniform_index(st, n):
    return int(next_uniform(st) * n)


@njit
def _weight(ops_i, price, gamma, htab):
    x = abs(ops_i - price)
    m = int(2.0 * x)
    if m < htab.shape[0]:
        return htab[m]
    return (1.0 + x) ** (-gamma)


@njit
def _select_rejection(ops, price, gamma, htab, st):
    n = ops.shape[0]
    while True:
        i = _uniform_index(st, n)
        if next_uniform(st) < _weight(ops[i], price, gamma, htab):
            return i


@njit
def _propose(q, l, st):
    """``d`` uniform on ``{-l..l}``, kept with probability ``min(q**d, 1)`` else 0."""
    d = _uniform_index(st, 2 * l + 1) - l
    if d == 0:
        return 0
    w = q**d
    if w >= 1.0 or next_uniform(st) < w:
        return d
    return 0


@njit
def _apply(ops, owns, i, d, ask, bid, kmin, kmax, st):
    """Apply ``p_i += d``; trade with the boundary trader when ordering breaks.

    Returns ``(ask, bid, traded)``.
    """
    v = ops[i] + d
    if owns[i]:
        if v < bid:
            _, j = _scan_bid(ops, owns)
            k = kmin + _uniform_index(st, kmax - kmin + 1)
            ops[i] = bid - k
            ops[j] = bid + k
            owns[i] = False
            owns[j] = True
            a, _ = _scan_ask(ops, owns)
            b, _ = _scan_bid(ops, owns)
            return a, b, True
        old = ops[i]
        ops[i] = v
        if v < ask:
            ask = v
        elif old == ask and v > old:
            ask, _ = _scan_ask(ops, owns)
        return ask, bid, False
    if v > ask:
        _, j = _scan_ask(ops, owns)
        k = kmin + _uniform_index(st, kmax - kmin + 1)
        ops[i] = ask + k
        ops[j] = ask - k
        owns[i] = True
        owns[j] = False
        a, _ = _scan_ask(ops, owns)
        b, _ = _scan_bid(ops, owns)
        return a, b, True
    old = ops[i]
    ops[i] = v
    if v > bid:
        bid = v
    elif old == bid and v < old:
        bid, _ = _scan_bid(ops, owns)
    return ask, bid, False


@njit
def _draw_strength(ext_mean, st):
    s = -ext_mean * math.log(1.0 - next_uniform(st))
    if next_u64(st) >> np.uint64(63):
        s = -s
    return math.exp(s)


@njit
def _draw_wait(log_keep, st):
    """Geometric waiting time on ``{1, 2, ...}`` with ``log_keep = log(1 - 1/mean)``."""
    if log_keep == 0.0:
        return 1
    u = 1.0 - next_uniform(st)
    return 1 + int(math.floor(math.log(u) / log_keep))


@njit
def _gap(ops, r_hi, r_lo, scratch):
    n = ops.shape[0]
    scratch[:] = ops
    scratch.sort()
    return scratch[n - r_hi] - scratch[n - r_lo]


@njit
def _violations(ops, owns, m, ask, bid):
    cnt = 0
    for i in range(owns.shape[0]):
        if owns[i]:
            cnt += 1
    bad = 0
    if cnt != m:
        bad += 1
    a, _ = _scan_ask(ops, owns)
    b, _ = _scan_bid(ops, owns)
    if a < b:
        bad += 1
    if a != ask or b != bid:
        bad += 1
    return bad


@njit
def _advance(ops, owns, clock, strength, n_updates, gamma, l, drift, ext_mean, log_keep,
             kmin, kmax, record_every, mid, sign_rule, r_hi, r_lo, htab, st, out, check,
             stop_gap):
    """Run up to ``n_updates`` updates, recording every ``record_every``.

    ``clock = [time_step, next_switch, trades, violations]`` and
    ``strength = [delta_ext]`` are updated in place.  Returns the number of
    rows written to ``out``; stops early after a row whose gap exceeds
    ``stop_gap`` (when positive).
    """
    m = 0
    for i in range(owns.shape[0]):
        if owns[i]:
            m += 1
    ask, _ = _scan_ask(ops, owns)
    bid, _ = _scan_bid(ops, owns)
    scratch = np.empty_like(ops)
    up = math.exp(drift)
    down = math.exp(-drift)
    rows = 0
    for _ in range(n_updates):
        if clock[0] >= clock[1]:
            strength[0] = _draw_strength(ext_mean, st)
            clock[1] = clock[0] + _draw_wait(log_keep, st)
        price = _price(ask, bid, mid)
        i = _select_rejection(ops, price, gamma, htab, st)
        if sign_rule:
            if ops[i] < price:
                q = up
            elif ops[i] > price:
                q = down
            else:
                q = 1.0
        else:
            q = up if owns[i] else down
        d = _propose(q * strength[0], l, st)
        if d != 0:
            ask, bid, traded = _apply(ops, owns, i, d, ask, bid, kmin, kmax, st)
            if traded:
                clock[2] += 1
        clock[0] += 1
        if check:
            clock[3] += _violations(ops, owns, m, ask, bid)
        if clock[0] % record_every == 0 and rows < out.shape[0]:
            g = _gap(ops, r_hi, r_lo, scratch)
            out[rows, 0] = clock[0]
            out[rows, 1] = _price(ask, bid, mid)
            out[rows, 2] = ask
            out[rows, 3] = bid
            out[rows, 4] = g
            out[rows, 5] = strength[0]
            rows += 1
            if stop_gap >= 0.0 and g > stop_gap:
                return rows
    return rows


# ------------------------------------------------------------- public API

def _weight_table(gamma: float) -> np.ndarray:
    return (1.0 + 0.5 * np.arange(H_TABLE_SIZE)) ** (-float(gamma))


def gap_ranks(n: int) -> tuple[int, int]:
    """Descending ranks ``ceil(0.475 n)`` and ``ceil(0.525 n)`` whose opinions define the gap."""
    return (475 * n + 999) // 1000, (525 * n + 999) // 1000


def gap(book: OrderBookState) -> int:
    r_hi, r_lo = gap_ranks(book.opinions.size)
    s = np.sort(book.opinions)
    n = s.size
    return int(s[n - r_hi] - s[n - r_lo])


def quote(book: OrderBookState, price_formula: str = "mid") -> MarketQuote:
    if book.owns.all() or not book.owns.any():
        raise ValueError("degenerate market: need at least one owner and one non-owner")
    if price_formula not in PRICE_FORMULAS:
        raise ValueError(f"price_formula must be one of {PRICE_FORMULAS}")
    ask = int(book.opinions[book.owns].min())
    bid = int(book.opinions[~book.owns].max())
    return MarketQuote(ask, bid, float(_price(ask, bid, price_formula == "mid")))


def selection_weights(book: OrderBookState, gamma: float, price: float | None = None) -> np.ndarray:
    """Normalised selection probabilities ``(1 + |p_i - p|)**(-gamma) / Z``."""
    if price is None:
        price = quote(book).price
    w = (1.0 + np.abs(book.opinions - price)) ** (-float(gamma))
    return w / w.sum()


def select_trader(book: OrderBookState, gamma: float, rng: RngLike, method: str = "rejection",
                  price: float | None = None, size: int | None = None):
    """Draw trader index(es) with probability proportional to ``(1 + |p_i - p|)**(-gamma)``.

    ``method="rejection"`` proposes uniformly and accepts with the weight
    (the weight is at most 1); ``method="cumulative"`` inverts the explicit
    cumulative weights.  Both have the same law.
    """
    if price is None:
        price = quote(book).price
    n = 1 if size is None else int(size)
    if method == "rejection":
        st = as_kernel_state(rng)
        ops = book.opinions.astype(np.int64)
        htab = _weight_table(gamma)
        out = np.array([_select_rejection(ops, float(price), float(gamma), htab, st)
                        for _ in range(n)], dtype=np.int64)
    elif method == "cumulative":
        cdf = np.cumsum(selection_weights(book, gamma, price))
        u = as_generator(rng).random(n) * cdf[-1]
        out = np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1).astype(np.int64)
    else:
        raise ValueError(f"unknown method {method!r}")
    return int(out[0]) if size is None else out


def move_pmf(q: float, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Support ``-l..l`` and probabilities ``min(q**d, 1)/(2l+1)``, rest on 0."""
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    d = np.arange(-l, l + 1)
    p = np.minimum(float(q) ** d.astype(float), 1.0) / (2 * l + 1)
    p[l] = 0.0
    p[l] = 1.0 - p.sum()
    return d, p


def drift_factor(book: OrderBookState, i: int, config: GameConfig, price: float | None = None) -> float:
    """``delta_{p_i, p}``: towards the price under ``sign``, by ownership under ``role``."""
    up = math.exp(config.drift_magnitude)
    if config.drift_rule == "role":
        return up if book.owns[i] else 1.0 / up
    if price is None:
        price = quote(book, config.price_formula).price
    p_i = book.opinions[i]
    if p_i < price:
        return up
    if p_i > price:
        return 1.0 / up
    return 1.0


def propose_move(book: OrderBookState, i: int, ext: ExternalForce, config: GameConfig,
                 rng: RngLike) -> int:
    q = drift_factor(book, i, config) * ext.strength
    return int(_propose(q, config.l, as_kernel_state(rng)))


def apply_update(book: OrderBookState, i: int, d: int, config: GameConfig,
                 rng: RngLike) -> OrderBookState:
    """New book after trader ``i`` moves by ``d``; the input book is left untouched."""
    if abs(d) > config.l:
        raise ValueError(f"|d| must be <= l={config.l}, got {d}")
    out = book.copy()
    q = quote(out)
    kmin, kmax = config.jump_away_range
    _apply(out.opinions, out.owns, int(i), int(d), q.ask, q.bid, kmin, kmax, as_kernel_state(rng))
    out.time_step += 1
    return out


def init_force(config: GameConfig, rng: RngLike, time_step: int = 0) -> ExternalForce:
    st = as_kernel_state(rng)
    s = _draw_strength(config.ext_mean, st)
    return ExternalForce(float(s), int(time_step + _draw_wait(_log_keep(config), st)))


def _log_keep(config: GameConfig) -> float:
    return math.log1p(-1.0 / config.ext_rate_steps) if config.ext_rate_steps > 1 else 0.0


@dataclass
class GameRun:
    """Recorded rows ``(step, price, ask, bid, gap, delta_ext)`` plus run counters."""

    data: np.ndarray
    trades: int = 0
    violations: int = 0
    snapshots: dict = field(default_factory=dict)
    stopped_early: bool = False

    def column(self, name: str) -> np.ndarray:
        return self.data[:, SERIES_COLUMNS.index(name)]

    @property
    def step(self):
        return self.column("step").astype(np.int64)

    @property
    def price(self):
        return self.column("price")

    @property
    def gap(self):
        return self.column("gap")

    def series(self, name: str) -> SeriesRecord:
        return SeriesRecord(self.step, self.column(name), name)

    def rows(self):
        for r in self.data:
            yield (int(r[0]), float(r[1]), int(r[2]), int(r[3]), int(r[4]), float(r[5]))


class OpinionGame:
    """Stateful runner: one book, one force, one kernel random stream."""

    def __init__(self, config: GameConfig, rng: RngLike, book: OrderBookState | None = None,
                 force: ExternalForce | None = None):
        self.config = config
        gen = as_generator(rng)
        self.book = init_book(config, gen) if book is None else book.copy()
        self._st = gen.integers(0, 2**64, size=1, dtype=np.uint64)
        if force is None:
            strength = _draw_strength(config.ext_mean, self._st)
            wait = _draw_wait(_log_keep(config), self._st)
            force = ExternalForce(float(strength), self.book.time_step + int(wait))
        self._clock = np.array([self.book.time_step, force.next_switch, 0, 0], dtype=np.int64)
        self._strength = np.array([force.strength])
        self._htab = _weight_table(config.gamma)

    @property
    def force(self) -> ExternalForce:
        return ExternalForce(float(self._strength[0]), int(self._clock[1]))

    @property
    def trades(self) -> int:
        return int(self._clock[2])

    @property
    def violations(self) -> int:
        return int(self._clock[3])

    def advance(self, n_updates: int, check: bool = False, stop_gap: float = -1.0) -> np.ndarray:
        """Run ``n_updates`` updates; returns the rows recorded meanwhile."""
        c = self.config
        n_updates = int(n_updates)
        t0 = int(self._clock[0])
        n_rows = (t0 + n_updates) // c.record_every - t0 // c.record_every
        out = np.empty((n_rows, len(SERIES_COLUMNS)))
        r_hi, r_lo = gap_ranks(c.n_traders)
        kmin, kmax = c.jump_away_range
        rows = _advance(self.book.opinions, self.book.owns, self._clock, self._strength, n_updates,
                        float(c.gamma), int(c.l), float(c.drift_magnitude), float(c.ext_mean),
                        _log_keep(c), int(kmin), int(kmax), int(c.record_every),
                        c.price_formula == "mid", c.drift_rule == "sign", r_hi, r_lo,
                        self._htab, self._st, out, bool(check), float(stop_gap))
        self.book.time_step = int(self._clock[0])
        return out[:rows]


def step(book: OrderBookState, ext: ExternalForce, config: GameConfig,
         rng: RngLike) -> tuple[OrderBookState, ExternalForce]:
    """One update (force renewal, select, propose, apply) on a copy of ``book``."""
    game = OpinionGame(replace(config, record_every=max(config.record_every, 1)), rng, book, ext)
    game.advance(1)
    return game.book, game.force


def run(config: GameConfig, horizon_updates: int, rng: RngLike, snapshot_steps=(),
        check: bool = False, stop_gap_factor: float | None = None,
        baseline_records: int = 100, book: OrderBookState | None = None) -> GameRun:
    """Simulate ``horizon_updates`` updates and record the series.

    ``stop_gap_factor`` ends the run at the first record whose gap exceeds
    that multiple of the median gap over the first ``baseline_records``
    records.  ``snapshot_steps`` are update counts at which the full book is
    copied.
    """
    if horizon_updates < config.record_every:
        raise ValueError(f"horizon_updates must be >= record_every={config.record_every}")
    game = OpinionGame(config, rng, book)
    start = game.book.time_step
    marks = sorted({int(s) for s in snapshot_steps if 0 <= int(s) - start <= horizon_updates})
    snaps = {}
    chunks = []
    stopped = False
    target = start + int(horizon_updates)
    stop_gap = -1.0
    baseline_end = start + baseline_records * config.record_every
    while game.book.time_step < target:
        now = game.book.time_step
        if now in marks:
            snaps[now] = game.book.copy()
        nxt = target
        for s in marks:
            if s > now:
                nxt = min(nxt, s)
                break
        if stop_gap_factor is not None and now < baseline_end:
            nxt = min(nxt, baseline_end)
        rows = game.advance(nxt - now, check=check, stop_gap=stop_gap)
        chunks.append(rows)
        if stop_gap >= 0 and rows.shape[0] and rows[-1, 4] > stop_gap:
            stopped = True
            break
        if stop_gap_factor is not None and game.book.time_step == baseline_end:
            base = np.concatenate(chunks)[:baseline_records, 4]
            stop_gap = float(stop_gap_factor * np.median(base))
    if game.book.time_step in marks:
        snaps[game.book.time_step] = game.book.copy()
    data = np.concatenate(chunks) if chunks else np.empty((0, len(SERIES_COLUMNS)))
    return GameRun(data, game.trades, game.violations, snaps, stopped)


__all__ = [
    "GameConfig", "OrderBookState", "MarketQuote", "ExternalForce", "GameRun", "OpinionGame",
    "init_book", "init_force", "quote", "select_trader", "selection_weights", "move_pmf",
    "drift_factor", "propose_move", "apply_update", "step", "run", "gap", "gap_ranks",
    "top_m_owners", "SERIES_COLUMNS",
]
