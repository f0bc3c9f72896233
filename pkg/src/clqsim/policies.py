"""Learning schedulers (UCB, MW-UCB, BP-UCB) and full-knowledge oracles.

All index arithmetic keeps integer success/selection counts so sample
means are exact ratios, never drifting running averages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .model import NetworkInstance, ScheduleSet, SingleQueueInstance, as_network

VARIANTS = (
    "ucb",
    "mw_ucb",
    "bp_ucb",
    "oracle_best",
    "oracle_mw",
    "oracle_bp",
    "fixed",
    "round_robin",
)

_CLI_NAMES = {
    "ucb": "ucb",
    "mw-ucb": "mw_ucb",
    "bp-ucb": "bp_ucb",
    "oracle-best": "oracle_best",
    "oracle-mw": "oracle_mw",
    "oracle-bp": "oracle_bp",
    "round-robin": "round_robin",
}

LEARNING_VARIANTS = ("ucb", "mw_ucb", "bp_ucb")


class PolicyError(ValueError):
    """A policy produced an inadmissible decision."""


class ObservationMismatch(ValueError):
    """An outcome was reported for a server the schedule did not select."""


@dataclass
class PolicyState:
    """Learning state: per-server counts, successes, transition tallies."""

    k: int
    n: int
    t: int = 1
    counts: list[int] = field(default_factory=list)
    succ: list[int] = field(default_factory=list)
    trans: list[list[int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.counts:
            self.counts = [0] * self.k
        if not self.succ:
            self.succ = [0] * self.k
        if not self.trans:
            self.trans = [[0] * self.n for _ in range(self.k)]

    @property
    def mu_hat(self) -> list[float]:
        return [s / c if c else 0.0 for s, c in zip(self.succ, self.counts)]

    @property
    def r_hat(self) -> list[list[float]]:
        return [
            [r / c if c else 0.0 for r in row]
            for row, c in zip(self.trans, self.counts)
        ]

    def record(self, server: int, success: int, target: int | None) -> None:
        """Fold one selected server's outcome into the running tallies."""
        self.counts[server] += 1
        if success:
            self.succ[server] += 1
            if target is not None:
                self.trans[server][target] += 1


def ucb_index(mu_hat: float, count: int, t: float) -> float:
    """Optimistic service-rate index, clamped into [0, 1]."""
    if count == 0:
        return 1.0
    return min(1.0, mu_hat + math.sqrt(2.0 * math.log(t) / count))


def lcb_transition(r_hat: float, count: int, t: float) -> float:
    """Pessimistic transition-rate index, clamped into [0, 1]."""
    if count == 0:
        return 0.0
    return max(0.0, r_hat - math.sqrt(2.0 * math.log(t) / count))


def ucb_select(state: PolicyState, q: int) -> int | None:
    """Server with the highest optimistic index; None when the queue is empty."""
    if q == 0:
        return None
    best, best_idx = -1.0, 0
    for srv in range(state.k):
        c = state.counts[srv]
        mh = state.succ[srv] / c if c else 0.0
        idx = ucb_index(mh, c, state.t)
        if idx > best:
            best, best_idx = idx, srv
    return best_idx


def feasible_schedules(
    schedules: ScheduleSet,
    server_queue: Sequence[int],
    q: Sequence[int],
) -> list[tuple[int, ...]]:
    """Schedules whose per-queue server demand fits the current queue."""
    out = []
    for sigma in schedules.schedules:
        load = [0] * len(q)
        for srv, on in enumerate(sigma):
            if on:
                load[server_queue[srv]] += 1
        if all(load[i] <= q[i] for i in range(len(q))):
            out.append(sigma)
    return out


def maxweight_select(
    q: Sequence[int],
    rates: Sequence[float],
    schedules: ScheduleSet,
    server_queue: Sequence[int],
) -> tuple[int, ...]:
    """Feasible schedule maximizing sum_n Q_n * (selected rate mass at n).

    Ties go to the first-encountered schedule in stored order.
    """
    best_w, best = -math.inf, None
    for sigma in feasible_schedules(schedules, server_queue, q):
        w = 0.0
        for srv, on in enumerate(sigma):
            if on:
                w += rates[srv] * q[server_queue[srv]]
        if w > best_w:
            best_w, best = w, sigma
    return best


def backpressure_select(
    q: Sequence[int],
    mu_bar: Sequence[float],
    r_lower: Sequence[Sequence[float]],
    schedules: ScheduleSet,
    server_queue: Sequence[int],
) -> tuple[int, ...]:
    """MaxWeight with per-server penalties for feeding long queues."""
    n = len(q)
    gain = []
    for srv in range(len(mu_bar)):
        pen = sum(r_lower[srv][i] * q[i] for i in range(n))
        gain.append(mu_bar[srv] * q[server_queue[srv]] - pen)
    best_w, best = -math.inf, None
    for sigma in feasible_schedules(schedules, server_queue, q):
        w = 0.0
        for srv, on in enumerate(sigma):
            if on:
                w += gain[srv]
        if w > best_w:
            best_w, best = w, sigma
    return best


def observe(
    state: PolicyState,
    schedule: Sequence[int],
    services: dict[int, int],
    transitions: dict[int, int | None] | None = None,
) -> PolicyState:
    """Fold the revealed outcomes of one period into the state.

    services maps selected server -> 0/1 outcome; transitions maps a
    successful server -> destination queue (None for exit).
    """
    transitions = transitions or {}
    selected = {srv for srv, on in enumerate(schedule) if on}
    for srv in services:
        if srv not in selected:
            raise ObservationMismatch(f"service outcome for unselected server {srv}")
    for srv in transitions:
        if srv not in selected:
            raise ObservationMismatch(f"transition outcome for unselected server {srv}")
    for srv in sorted(selected):
        s = services.get(srv, 0)
        state.record(srv, s, transitions.get(srv) if s else None)
    return state


@dataclass(frozen=True)
class PolicyHandle:
    """Variant tag plus the parameters the variant needs.

    Oracle runners receive true rates from the instance at run time;
    learning runners never see them.
    """

    variant: str
    fixed_server: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise PolicyError(f"unknown policy variant {self.variant!r}")
        if self.variant == "fixed" and self.fixed_server is None:
            raise PolicyError("fixed policy needs a server index")

    @classmethod
    def parse(cls, name: str) -> "PolicyHandle":
        """Parse a CLI policy string such as 'mw-ucb' or 'fixed:2'."""
        if name.startswith("fixed:"):
            return cls(variant="fixed", fixed_server=int(name.split(":", 1)[1]))
        variant = _CLI_NAMES.get(name, name if name in VARIANTS else None)
        if variant is None:
            raise PolicyError(f"unknown policy {name!r}")
        return cls(variant=variant)

    @property
    def cli_name(self) -> str:
        if self.variant == "fixed":
            return f"fixed:{self.fixed_server}"
        return self.variant.replace("_", "-")

    @property
    def learning(self) -> bool:
        return self.variant in LEARNING_VARIANTS


class Runner:
    """Per-run decision engine for one policy on one instance."""

    def __init__(self, handle: PolicyHandle, inst: SingleQueueInstance | NetworkInstance):
        net = as_network(inst)
        self.handle = handle
        self.k = net.k
        self.n = net.n
        self.schedules = net.schedules
        self.server_queue = net.server_queue
        self.state = PolicyState(k=net.k, n=net.n) if handle.learning else None
        self._rr = 0
        v = handle.variant
        if v == "fixed" and not 0 <= handle.fixed_server < net.k:
            raise PolicyError(f"fixed server {handle.fixed_server} outside range")
        if v in ("oracle_best", "oracle_mw", "oracle_bp"):
            self._mu = list(net.mu)
            self._best = max(range(net.k), key=lambda i: net.mu[i])
            self._r_true = [
                [net.mu[srv] * net.transitions[srv][i] for i in range(net.n)]
                for srv in range(net.k)
            ]

    # -- single-queue selection ------------------------------------------

    def select_server(self, q: int, t: int) -> int | None:
        """Server choice for the scalar-queue dynamics; None = idle."""
        if q == 0:
            return None
        v = self.handle.variant
        if v in ("ucb", "mw_ucb", "bp_ucb"):
            # On one queue the weight/penalty structure degenerates to
            # the plain optimistic index argmax.
            self.state.t = t
            return ucb_select(self.state, q)
        if v in ("oracle_best", "oracle_mw", "oracle_bp"):
            return self._best
        if v == "fixed":
            return self.handle.fixed_server
        j = self._rr % self.k
        self._rr += 1
        return j

    # -- network selection ------------------------------------------------

    def select_schedule(self, q: Sequence[int], t: int) -> tuple[int, ...]:
        v = self.handle.variant
        if v in ("ucb", "mw_ucb"):
            self.state.t = t
            mu_bar = [
                ucb_index(
                    self.state.succ[i] / self.state.counts[i] if self.state.counts[i] else 0.0,
                    self.state.counts[i],
                    t,
                )
                for i in range(self.k)
            ]
            return maxweight_select(q, mu_bar, self.schedules, self.server_queue)
        if v == "bp_ucb":
            self.state.t = t
            mu_bar, r_low = [], []
            for i in range(self.k):
                c = self.state.counts[i]
                mu_bar.append(
                    ucb_index(self.state.succ[i] / c if c else 0.0, c, t)
                )
                r_low.append(
                    [
                        lcb_transition(self.state.trans[i][j] / c if c else 0.0, c, t)
                        for j in range(self.n)
                    ]
                )
            return backpressure_select(q, mu_bar, r_low, self.schedules, self.server_queue)
        if v == "oracle_mw":
            return maxweight_select(q, self._mu, self.schedules, self.server_queue)
        if v == "oracle_bp":
            return backpressure_select(
                q, self._mu, self._r_true, self.schedules, self.server_queue
            )
        if v in ("oracle_best", "fixed"):
            srv = self._best if v == "oracle_best" else self.handle.fixed_server
            return self._singleton_if_feasible(q, srv)
        if max(q) == 0:
            # Align with the scalar dynamics, where an empty queue never
            # consults the policy: the rotation pointer must not move.
            return (0,) * self.k
        srv = self._rr % self.k
        self._rr += 1
        return self._singleton_if_feasible(q, srv)

    def _singleton_if_feasible(self, q: Sequence[int], srv: int) -> tuple[int, ...]:
        sigma = tuple(1 if i == srv else 0 for i in range(self.k))
        if sigma in self.schedules.schedules and q[self.server_queue[srv]] >= 1:
            return sigma
        return (0,) * self.k
