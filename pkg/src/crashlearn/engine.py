"""Asynchronous consensus-plus-likelihood belief updates under crash faults.

Protocol per agent i and iteration t:
  1. transmit the current belief to every out-neighbor,
  2. wait until iteration-t messages from len(in_neighbors) - f distinct
     senders have been delivered; the quorum is exactly the earliest such
     messages, ties broken by sender label,
  3. draw one private signal and replace the belief with the normalized
     product of the likelihood row and the geometric mean of the quorum
     beliefs together with its own, each raised to 1/(quorum size + 1).

Crash faults remove an agent at one of four points inside an iteration:
  before_transmit  dies at the start of the iteration, sends nothing;
  after_transmit   sends, then dies without updating;
  mid_update       sends, consumes a quorum and a signal, overwrites only
                   the first partial_count log-belief entries with the
                   unnormalized update values, renormalizes, then dies;
  after_update     finishes the iteration normally, then dies, so it never
                   acts again from the next iteration on.
Dead agents keep their last belief frozen and are dropped from every later
quorum because they never transmit again.

Scheduling is deterministic given (config, seed). Message delays come from
per-sender substreams (uniform mode), a fixed table (fixed mode), or a
worst-case scheduler (adversarial_latest) that withholds every message as
long as possible, which collapses execution to synchronized rounds where
each quorum is the lowest-labeled transmitting in-neighbors. Signals come
from per-agent substreams consumed in iteration order, so the signal
sequence of an agent does not depend on the delay schedule.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .graphs import DirectedGraph
from .observation import LikelihoodModel, signal_from_uniform

CRASH_PHASES = ("before_transmit", "after_transmit", "mid_update", "after_update")
ADVERSARY_MODES = ("uniform", "fixed", "adversarial_latest")

SIGNAL_STREAM = 0
DELAY_STREAM = 1

BELIEF_NORMALIZATION_TOLERANCE = 1e-9


class ConfigError(ValueError):
    """Simulation configuration rejected before any execution starts."""


class DeadlockError(RuntimeError):
    """An alive agent can never assemble its quorum; execution cannot finish."""


class TraceInvariantError(RuntimeError):
    """A persisted or constructed trace violates a protocol invariant."""


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class CrashEvent:
    """One scheduled crash. partial_count is only meaningful for mid_update."""

    agent: int
    iteration: int
    phase: str
    partial_count: int | None = None

    def to_dict(self) -> dict:
        return {"agent": self.agent, "iteration": self.iteration,
                "phase": self.phase, "partial_count": self.partial_count}

    @classmethod
    def from_dict(cls, payload: Mapping) -> CrashEvent:
        pc = payload.get("partial_count")
        return cls(agent=int(payload["agent"]), iteration=int(payload["iteration"]),
                   phase=str(payload["phase"]),
                   partial_count=None if pc is None else int(pc))


def _delay_key(sender: int, receiver: int) -> str:
    return f"{sender}->{receiver}"


@dataclass(frozen=True)
class AdversarySchedule:
    """Message-delay regime plus the crash plan.

    fixed_delays is only read in fixed mode: None means every link delay is
    zero, a float is a shared constant, and a mapping gives one delay per
    directed edge (all edges must be covered).
    """

    mode: str = "uniform"
    dmax: float = 1.0
    fixed_delays: float | Mapping[tuple[int, int], float] | None = None
    crash_plan: tuple[CrashEvent, ...] = ()

    def delay_for(self, sender: int, receiver: int) -> float:
        if self.fixed_delays is None:
            return 0.0
        if isinstance(self.fixed_delays, (int, float)):
            return float(self.fixed_delays)
        return float(self.fixed_delays[(sender, receiver)])

    def to_dict(self) -> dict:
        fixed = self.fixed_delays
        if isinstance(fixed, Mapping):
            fixed = {_delay_key(s, r): float(d) for (s, r), d in sorted(fixed.items())}
        return {"mode": self.mode, "dmax": self.dmax, "fixed_delays": fixed,
                "crash_plan": [ev.to_dict() for ev in self.crash_plan]}

    @classmethod
    def from_dict(cls, payload: Mapping) -> AdversarySchedule:
        fixed = payload.get("fixed_delays")
        if isinstance(fixed, Mapping):
            parsed = {}
            for key, value in fixed.items():
                sender, _, receiver = key.partition("->")
                parsed[(int(sender), int(receiver))] = float(value)
            fixed = parsed
        elif fixed is not None:
            fixed = float(fixed)
        return cls(mode=str(payload.get("mode", "uniform")),
                   dmax=float(payload.get("dmax", 1.0)),
                   fixed_delays=fixed,
                   crash_plan=tuple(CrashEvent.from_dict(ev)
                                    for ev in payload.get("crash_plan", ())))


@dataclass(frozen=True)
class SimulationConfig:
    graph: DirectedGraph
    f: int
    model: LikelihoodModel
    theta_star: str
    iterations: int
    seed: int
    adversary: AdversarySchedule = field(default_factory=AdversarySchedule)

    def validate(self) -> None:
        g, model = self.graph, self.model
        if g.n != model.n:
            raise ConfigError(f"graph has {g.n} nodes but model has {model.n} agents")
        if not 0 <= self.f <= g.min_in_degree:
            raise ConfigError(f"f={self.f} outside [0, min in-degree={g.min_in_degree}]")
        if self.iterations < 1:
            raise ConfigError(f"iterations={self.iterations} must be >= 1")
        if self.theta_star not in model.hypotheses:
            raise ConfigError(f"theta_star {self.theta_star!r} not a hypothesis")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        adv = self.adversary
        if adv.mode not in ADVERSARY_MODES:
            raise ConfigError(f"unknown adversary mode {adv.mode!r}")
        if adv.mode == "uniform":
            if not (math.isfinite(adv.dmax) and adv.dmax > 0):
                raise ConfigError(f"uniform mode needs dmax > 0, got {adv.dmax}")
        if adv.mode == "fixed" and adv.fixed_delays is not None:
            if isinstance(adv.fixed_delays, Mapping):
                missing = [e for e in g.edges if e not in adv.fixed_delays]
                if missing:
                    raise ConfigError(f"fixed_delays missing edges {sorted(missing)[:5]}")
                bad = {e: d for e, d in adv.fixed_delays.items()
                       if not (math.isfinite(d) and d >= 0)}
                if bad:
                    raise ConfigError(f"fixed_delays must be finite and >= 0: {bad}")
            elif not (math.isfinite(adv.fixed_delays) and adv.fixed_delays >= 0):
                raise ConfigError(f"fixed delay must be finite and >= 0")
        plan = adv.crash_plan
        if len(plan) > self.f:
            raise ConfigError(f"{len(plan)} crash events exceed f={self.f}")
        agents = [ev.agent for ev in plan]
        if len(set(agents)) != len(agents):
            raise ConfigError("crash plan agents must be distinct")
        for ev in plan:
            if not 1 <= ev.agent <= g.n:
                raise ConfigError(f"crash agent {ev.agent} outside 1..{g.n}")
            if not 1 <= ev.iteration <= self.iterations:
                raise ConfigError(f"crash iteration {ev.iteration} outside "
                                  f"1..{self.iterations}")
            if ev.phase not in CRASH_PHASES:
                raise ConfigError(f"unknown crash phase {ev.phase!r}")
            if ev.phase == "mid_update":
                if ev.partial_count is None or not 1 <= ev.partial_count <= model.m - 1:
                    raise ConfigError(f"mid_update partial_count must lie in "
                                      f"1..{model.m - 1}, got {ev.partial_count}")
            elif ev.partial_count is not None:
                raise ConfigError(f"partial_count only applies to mid_update")

    def to_dict(self) -> dict:
        return {"graph": self.graph.to_dict(), "f": self.f,
                "model": self.model.to_dict(), "theta_star": self.theta_star,
                "iterations": self.iterations, "seed": self.seed,
                "adversary": self.adversary.to_dict()}

    @classmethod
    def from_dict(cls, payload: Mapping) -> SimulationConfig:
        return cls(graph=DirectedGraph.from_dict(payload["graph"]),
                   f=int(payload["f"]),
                   model=LikelihoodModel.from_dict(payload["model"]),
                   theta_star=str(payload["theta_star"]),
                   iterations=int(payload["iterations"]),
                   seed=int(payload["seed"]),
                   adversary=AdversarySchedule.from_dict(payload.get("adversary", {})))


# -- belief arithmetic --------------------------------------------------------

def combine_log_beliefs(current: np.ndarray, neighbor_logs: Sequence[np.ndarray],
                        quorum_size: int, log_likelihood: np.ndarray) -> np.ndarray:
    """Unnormalized log update. Weights sum to exactly 1.0 in floats.

    neighbor_logs must already be ordered (ascending sender label) so the
    summation order, and therefore the rounding, is reproducible.
    """
    if len(neighbor_logs) != quorum_size:
        raise ValueError(f"expected {quorum_size} neighbor beliefs, "
                         f"got {len(neighbor_logs)}")
    weight = 1.0 / (quorum_size + 1)
    self_weight = 1.0 - quorum_size * weight
    acc = self_weight * current
    for other in neighbor_logs:
        acc = acc + weight * other
    return acc + log_likelihood


def normalize_log_belief(unnormalized: np.ndarray) -> np.ndarray:
    return unnormalized - logsumexp(unnormalized)


def update_belief(current: np.ndarray, neighbor_logs: Sequence[np.ndarray],
                  signal: str, model: LikelihoodModel, agent: int,
                  quorum_size: int) -> np.ndarray:
    """One full belief update in log space; returns a normalized vector."""
    column = model.log_likelihoods(agent, signal)
    return normalize_log_belief(
        combine_log_beliefs(current, neighbor_logs, quorum_size, column))


def partial_update_belief(current: np.ndarray, neighbor_logs: Sequence[np.ndarray],
                          signal: str, model: LikelihoodModel, agent: int,
                          quorum_size: int, partial_count: int) -> np.ndarray:
    """Crash artifact of mid_update: only the first partial_count entries get
    the unnormalized update values before the whole vector is renormalized."""
    column = model.log_likelihoods(agent, signal)
    unnormalized = combine_log_beliefs(current, neighbor_logs, quorum_size, column)
    mixed = current.copy()
    mixed[:partial_count] = unnormalized[:partial_count]
    return normalize_log_belief(mixed)


# -- trace --------------------------------------------------------------------

@dataclass(eq=False)
class AgentRecord:
    """State of one agent at the end of one iteration it was alive for."""

    completed: bool
    quorum: tuple[int, ...] | None
    signal: str | None
    log_belief: np.ndarray
    crash_phase: str | None = None


class ExecutionTrace:
    """Everything one run produced, indexed by iteration then agent."""

    def __init__(self, config: SimulationConfig, initial_log_belief: np.ndarray,
                 records: Sequence[dict[int, AgentRecord]],
                 final_alive: frozenset[int]):
        if len(records) != config.iterations:
            raise ValueError(f"{len(records)} iteration records for "
                             f"{config.iterations} iterations")
        self.config = config
        self.initial_log_belief = initial_log_belief
        self.records = tuple(dict(sorted(r.items())) for r in records)
        self.final_alive = frozenset(final_alive)

    @property
    def iterations(self) -> int:
        return self.config.iterations

    @property
    def n(self) -> int:
        return self.config.graph.n

    def record(self, t: int, agent: int) -> AgentRecord:
        return self.records[t - 1][agent]

    def alive_at_start(self, t: int) -> frozenset[int]:
        """Agents that began iteration t; t = iterations + 1 gives survivors."""
        if t == self.iterations + 1:
            return self.final_alive
        return frozenset(self.records[t - 1])

    def completed_at(self, t: int) -> frozenset[int]:
        return frozenset(a for a, rec in self.records[t - 1].items() if rec.completed)

    def transmitters_at(self, t: int) -> frozenset[int]:
        return frozenset(a for a, rec in self.records[t - 1].items()
                         if rec.crash_phase != "before_transmit")

    def log_belief_before(self, t: int, agent: int) -> np.ndarray:
        """Belief the agent held entering iteration t (end of t - 1)."""
        for back in range(t - 1, 0, -1):
            rec = self.records[back - 1].get(agent)
            if rec is not None:
                return rec.log_belief
        return self.initial_log_belief[agent - 1]

    def crash_events_observed(self) -> tuple[tuple[int, int, str], ...]:
        seen = []
        for t, per_agent in enumerate(self.records, start=1):
            for agent, rec in per_agent.items():
                if rec.crash_phase is not None:
                    seen.append((agent, t, rec.crash_phase))
        return tuple(sorted(seen))


def min_final_posterior(trace: ExecutionTrace) -> float:
    """Smallest posterior on the true hypothesis among surviving agents."""
    star = trace.config.model.hypothesis_index(trace.config.theta_star)
    last = trace.records[-1]
    values = [math.exp(last[a].log_belief[star]) for a in sorted(trace.final_alive)]
    if not values:
        raise ValueError("no surviving agents")
    return min(values)


def converged(trace: ExecutionTrace, threshold: float) -> bool:
    return min_final_posterior(trace) >= threshold


# -- execution ----------------------------------------------------------------

def _signal_rng(seed: int, agent: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, SIGNAL_STREAM, agent]))


def _delay_rng(seed: int, agent: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, DELAY_STREAM, agent]))


class _AgentState:
    __slots__ = ("cur_iter", "ready_time", "belief", "buffers", "dead", "finished")

    def __init__(self, belief: np.ndarray):
        self.cur_iter = 1
        self.ready_time = 0.0
        self.belief = belief
        self.buffers: dict[int, list[tuple[float, int, np.ndarray]]] = {}
        self.dead = False
        self.finished = False


def run_execution(config: SimulationConfig) -> ExecutionTrace:
    """Simulate one run to completion; deterministic in (config, seed)."""
    config.validate()
    if config.adversary.mode == "adversarial_latest":
        return _run_round_based(config)
    return _run_event_driven(config)


def _initial_beliefs(config: SimulationConfig) -> np.ndarray:
    m = config.model.m
    return np.full((config.graph.n, m), -math.log(m), dtype=np.float64)


def _run_event_driven(config: SimulationConfig) -> ExecutionTrace:
    g, model, T = config.graph, config.model, config.iterations
    adversary = config.adversary
    need = {i: len(g.in_neighbors[i]) - config.f for i in g.nodes}
    crash_at = {(ev.agent, ev.iteration): ev for ev in adversary.crash_plan}
    signal_rngs = {i: _signal_rng(config.seed, i) for i in g.nodes}
    delay_rngs = {i: _delay_rng(config.seed, i) for i in g.nodes}
    uniform_mode = adversary.mode == "uniform"

    initial = _initial_beliefs(config)
    agents = {i: _AgentState(initial[i - 1].copy()) for i in g.nodes}
    records: list[dict[int, AgentRecord]] = [{} for _ in range(T)]
    heap: list[tuple[float, int, int, int, int, np.ndarray]] = []
    seq = 0

    def transmit(i: int, t: int, now: float) -> None:
        nonlocal seq
        payload = agents[i].belief.copy()
        for j in sorted(g.out_neighbors[i]):
            if uniform_mode:
                delay = float(delay_rngs[i].uniform(0.0, adversary.dmax))
            else:
                delay = adversary.delay_for(i, j)
            heapq.heappush(heap, (now + delay, i, j, seq, t, payload))
            seq += 1

    def begin_iteration(i: int, t: int, now: float) -> bool:
        """Transmit for iteration t unless a crash intercepts; False if died."""
        state = agents[i]
        event = crash_at.get((i, t))
        if event is not None and event.phase == "before_transmit":
            records[t - 1][i] = AgentRecord(False, None, None, state.belief.copy(),
                                            "before_transmit")
            state.dead = True
            return False
        transmit(i, t, now)
        if event is not None and event.phase == "after_transmit":
            records[t - 1][i] = AgentRecord(False, None, None, state.belief.copy(),
                                            "after_transmit")
            state.dead = True
            return False
        return True

    def try_advance(i: int) -> None:
        state = agents[i]
        while not state.dead and not state.finished:
            t = state.cur_iter
            buffered = state.buffers.get(t, ())
            if len(buffered) < need[i]:
                return
            taken = buffered[:need[i]]    # delivery order, ties already by label
            quorum = tuple(sorted(sender for _, sender, _ in taken))
            neighbor_logs = [payload for _, sender, payload
                             in sorted(taken, key=lambda entry: entry[1])]
            when = max([state.ready_time] + [dt for dt, _, _ in taken])
            signal = signal_from_uniform(model, i, config.theta_star,
                                         signal_rngs[i].random())
            event = crash_at.get((i, t))
            if event is not None and event.phase == "mid_update":
                state.belief = partial_update_belief(
                    state.belief, neighbor_logs, signal, model, i, need[i],
                    event.partial_count)
                records[t - 1][i] = AgentRecord(False, quorum, signal,
                                                state.belief.copy(), "mid_update")
                state.dead = True
                return
            state.belief = update_belief(state.belief, neighbor_logs, signal,
                                         model, i, need[i])
            phase = "after_update" if event is not None else None
            records[t - 1][i] = AgentRecord(True, quorum, signal,
                                            state.belief.copy(), phase)
            if event is not None:
                state.dead = True
                return
            if t == T:
                state.finished = True
                return
            state.cur_iter = t + 1
            state.ready_time = when
            if not begin_iteration(i, t + 1, when):
                return

    for i in sorted(g.nodes):
        begin_iteration(i, 1, 0.0)
    for i in sorted(g.nodes):
        try_advance(i)

    while heap:
        when, sender, receiver, _, tag, payload = heapq.heappop(heap)
        state = agents[receiver]
        if state.dead or state.finished or tag < state.cur_iter:
            continue
        state.buffers.setdefault(tag, []).append((when, sender, payload))
        if tag == state.cur_iter:
            try_advance(receiver)

    stuck = [i for i, st in agents.items() if not st.dead and not st.finished]
    if stuck:
        detail = {i: (agents[i].cur_iter,
                      len(agents[i].buffers.get(agents[i].cur_iter, ())))
                  for i in stuck}
        raise DeadlockError(f"agents stuck as (iteration, buffered): {detail}")

    final_alive = frozenset(i for i, st in agents.items() if st.finished)
    return ExecutionTrace(config, initial, records, final_alive)


def _run_round_based(config: SimulationConfig) -> ExecutionTrace:
    """Worst-case scheduler: lock-step rounds, quorums take the lowest labels.

    Withholding every message until the receiver's deadline means nobody can
    run ahead, and the adversary serves each agent exactly the messages of
    the lowest-labeled transmitting in-neighbors.
    """
    g, model, T = config.graph, config.model, config.iterations
    need = {i: len(g.in_neighbors[i]) - config.f for i in g.nodes}
    crash_at = {(ev.agent, ev.iteration): ev for ev in config.adversary.crash_plan}
    uniforms = {i: _signal_rng(config.seed, i).random(T) for i in g.nodes}

    initial = _initial_beliefs(config)
    beliefs = {i: initial[i - 1].copy() for i in g.nodes}
    alive = set(g.nodes)
    records: list[dict[int, AgentRecord]] = [{} for _ in range(T)]

    for t in range(1, T + 1):
        snapshots: dict[int, np.ndarray] = {}
        for i in sorted(alive):
            event = crash_at.get((i, t))
            if event is None or event.phase != "before_transmit":
                snapshots[i] = beliefs[i]
        died: set[int] = set()
        for i in sorted(alive):
            event = crash_at.get((i, t))
            if event is not None and event.phase in ("before_transmit",
                                                     "after_transmit"):
                records[t - 1][i] = AgentRecord(False, None, None,
                                                beliefs[i].copy(), event.phase)
                died.add(i)
                continue
            available = sorted(j for j in g.in_neighbors[i] if j in snapshots)
            if len(available) < need[i]:
                raise DeadlockError(f"agent {i} has {len(available)} live "
                                    f"in-neighbors at iteration {t}, "
                                    f"needs {need[i]}")
            quorum = tuple(available[:need[i]])
            neighbor_logs = [snapshots[j] for j in quorum]
            signal = signal_from_uniform(model, i, config.theta_star,
                                         uniforms[i][t - 1])
            if event is not None and event.phase == "mid_update":
                beliefs[i] = partial_update_belief(
                    beliefs[i], neighbor_logs, signal, model, i, need[i],
                    event.partial_count)
                records[t - 1][i] = AgentRecord(False, quorum, signal,
                                                beliefs[i].copy(), "mid_update")
                died.add(i)
                continue
            beliefs[i] = update_belief(beliefs[i], neighbor_logs, signal,
                                       model, i, need[i])
            phase = "after_update" if event is not None else None
            records[t - 1][i] = AgentRecord(True, quorum, signal,
                                            beliefs[i].copy(), phase)
            if event is not None:
                died.add(i)
        alive -= died

    return ExecutionTrace(config, initial, records, frozenset(alive))


# -- persistence --------------------------------------------------------------

def write_trace(trace: ExecutionTrace, path) -> None:
    """One JSON object per line: a header record, then one record per
    (iteration, alive agent) in (t, agent) order."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in iter_trace_lines(trace):
            fh.write(line)
            fh.write("\n")


def iter_trace_lines(trace: ExecutionTrace) -> Iterator[str]:
    header = {"kind": "header", "config": trace.config.to_dict(),
              "initial_log_belief": trace.initial_log_belief.tolist()}
    yield json.dumps(header, sort_keys=True)
    for t in range(1, trace.iterations + 1):
        for agent in sorted(trace.records[t - 1]):
            rec = trace.records[t - 1][agent]
            row = {"kind": "step", "t": t, "agent": agent, "alive": True,
                   "completed": rec.completed,
                   "quorum": None if rec.quorum is None else list(rec.quorum),
                   "signal": rec.signal,
                   "log_belief": rec.log_belief.tolist(),
                   "crash_phase": rec.crash_phase}
            yield json.dumps(row, sort_keys=True)


def read_trace(path) -> ExecutionTrace:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise TraceInvariantError("empty trace file")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise TraceInvariantError("first line is not a header record")
    config = SimulationConfig.from_dict(header["config"])
    initial = np.asarray(header["initial_log_belief"], dtype=np.float64)
    if initial.shape != (config.graph.n, config.model.m):
        raise TraceInvariantError(f"initial beliefs have shape {initial.shape}")
    records: list[dict[int, AgentRecord]] = [{} for _ in range(config.iterations)]
    for line in lines[1:]:
        row = json.loads(line)
        if row.get("kind") != "step":
            raise TraceInvariantError(f"unexpected record kind {row.get('kind')!r}")
        t, agent = int(row["t"]), int(row["agent"])
        if not 1 <= t <= config.iterations:
            raise TraceInvariantError(f"step iteration {t} out of range")
        if agent in records[t - 1]:
            raise TraceInvariantError(f"duplicate record for t={t} agent={agent}")
        quorum = row["quorum"]
        records[t - 1][agent] = AgentRecord(
            completed=bool(row["completed"]),
            quorum=None if quorum is None else tuple(int(q) for q in quorum),
            signal=row["signal"],
            log_belief=np.asarray(row["log_belief"], dtype=np.float64),
            crash_phase=row["crash_phase"])
    last = records[-1]
    final_alive = frozenset(a for a, rec in last.items()
                            if rec.completed and rec.crash_phase is None)
    return ExecutionTrace(config, initial, records, final_alive)


def validate_trace(trace: ExecutionTrace) -> None:
    """Check every protocol invariant a trace must satisfy; raise on the first
    violation. Does not re-run the scheduler, so it accepts any delivery
    order, but quorums must name real transmitting in-neighbors."""
    config = trace.config
    config.validate()
    g, model, T = config.graph, config.model, config.iterations
    need = {i: len(g.in_neighbors[i]) - config.f for i in g.nodes}
    if trace.alive_at_start(1) != g.nodes:
        raise TraceInvariantError("iteration 1 must include every agent")

    planned = tuple(sorted((ev.agent, ev.iteration, ev.phase)
                           for ev in config.adversary.crash_plan))
    if trace.crash_events_observed() != planned:
        raise TraceInvariantError(
            f"observed crashes {trace.crash_events_observed()} differ from "
            f"plan {planned}")

    for t in range(1, T + 1):
        alive = trace.alive_at_start(t)
        transmitters = trace.transmitters_at(t)
        expected_next = set()
        for agent, rec in trace.records[t - 1].items():
            where = f"t={t} agent={agent}"
            if agent not in g.nodes:
                raise TraceInvariantError(f"{where}: unknown agent")
            belief = rec.log_belief
            if belief.shape != (model.m,) or not np.all(np.isfinite(belief)):
                raise TraceInvariantError(f"{where}: malformed log beliefs")
            gap = abs(float(logsumexp(belief)))
            if gap > BELIEF_NORMALIZATION_TOLERANCE:
                raise TraceInvariantError(f"{where}: beliefs unnormalized "
                                          f"(logsumexp={gap:.3e})")
            if rec.completed:
                if rec.crash_phase not in (None, "after_update"):
                    raise TraceInvariantError(f"{where}: completed record with "
                                              f"phase {rec.crash_phase}")
                if rec.crash_phase is None:
                    expected_next.add(agent)
            elif rec.crash_phase not in ("before_transmit", "after_transmit",
                                         "mid_update"):
                raise TraceInvariantError(f"{where}: incomplete record needs a "
                                          f"crash phase, got {rec.crash_phase}")
            has_quorum = rec.completed or rec.crash_phase == "mid_update"
            if has_quorum:
                if rec.quorum is None or rec.signal is None:
                    raise TraceInvariantError(f"{where}: missing quorum or signal")
                if len(rec.quorum) != need[agent]:
                    raise TraceInvariantError(f"{where}: quorum size "
                                              f"{len(rec.quorum)} != {need[agent]}")
                if list(rec.quorum) != sorted(set(rec.quorum)):
                    raise TraceInvariantError(f"{where}: quorum not strictly "
                                              f"increasing")
                bad = set(rec.quorum) - g.in_neighbors[agent]
                if bad:
                    raise TraceInvariantError(f"{where}: quorum members {sorted(bad)} "
                                              f"are not in-neighbors")
                ghosts = set(rec.quorum) - transmitters
                if ghosts:
                    raise TraceInvariantError(f"{where}: quorum members {sorted(ghosts)} "
                                              f"did not transmit at t={t}")
                if rec.signal not in model.signals(agent):
                    raise TraceInvariantError(f"{where}: unknown signal "
                                              f"{rec.signal!r}")
            else:
                if rec.quorum is not None or rec.signal is not None:
                    raise TraceInvariantError(f"{where}: {rec.crash_phase} record "
                                              f"must not carry quorum or signal")
                previous = trace.log_belief_before(t, agent)
                if not np.array_equal(belief, previous):
                    raise TraceInvariantError(f"{where}: belief changed without "
                                              f"an update")
        nxt = trace.alive_at_start(t + 1)
        if set(nxt) != expected_next:
            raise TraceInvariantError(
                f"iteration {t + 1} alive set {sorted(nxt)} != survivors of "
                f"iteration {t} {sorted(expected_next)}")
