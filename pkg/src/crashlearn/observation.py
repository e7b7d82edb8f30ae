"""Per-agent finite signal models and identifiability analysis.

Each agent i observes i.i.d. signals from a finite alphabet with a strictly
positive likelihood row per hypothesis. Identifiability questions are always
about ordered hypothesis pairs: globally (summing information over all
agents) and locally (summing only over a reduced graph's source component,
which is what survives worst-case crashes and link starvation).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graphs import (DEFAULT_ENUMERATION_CAP, DirectedGraph, ReducedGraph,
                     enumerate_reduced_graphs)

ZERO_TOLERANCE = 1e-12          # "nonzero" means strictly above this
ROW_SUM_TOLERANCE = 1e-12       # direct construction
FILE_ROW_SUM_TOLERANCE = 1e-9   # JSON loading, rows renormalized afterwards


class IdentifiabilityPreconditionError(RuntimeError):
    """Source-based identifiability was queried on a non-detectable topology."""


class LikelihoodModel:
    """Immutable collection of per-agent likelihood tables.

    Args:
        hypotheses: ordered hypothesis labels (at least one, all distinct).
        signal_spaces: per-agent ordered signal labels.
        tables: per-agent arrays of shape (m, |signals_i|); every entry
            strictly positive, every row summing to 1 within ROW_SUM_TOLERANCE.
    """

    def __init__(self, hypotheses: Sequence[str],
                 signal_spaces: Sequence[Sequence[str]],
                 tables: Sequence[np.ndarray],
                 _row_tolerance: float = ROW_SUM_TOLERANCE):
        hyp = tuple(str(h) for h in hypotheses)
        if not hyp:
            raise ValueError("need at least one hypothesis")
        if len(set(hyp)) != len(hyp):
            raise ValueError("hypothesis labels must be distinct")
        if len(signal_spaces) != len(tables):
            raise ValueError("one table per agent required")
        if not tables:
            raise ValueError("need at least one agent")
        spaces: list[tuple[str, ...]] = []
        mats: list[np.ndarray] = []
        for idx, (sig, tab) in enumerate(zip(signal_spaces, tables), start=1):
            labels = tuple(str(s) for s in sig)
            if not labels or len(set(labels)) != len(labels):
                raise ValueError(f"agent {idx}: signal labels empty or duplicated")
            arr = np.asarray(tab, dtype=np.float64)
            if arr.shape != (len(hyp), len(labels)):
                raise ValueError(f"agent {idx}: table shape {arr.shape} != "
                                 f"({len(hyp)}, {len(labels)})")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValueError(f"agent {idx}: entries must be finite and > 0")
            gap = np.abs(arr.sum(axis=1) - 1.0).max()
            if gap > _row_tolerance:
                raise ValueError(f"agent {idx}: row sums off by {gap:.3e} "
                                 f"(tolerance {_row_tolerance:.0e})")
            arr = arr.copy()
            arr.setflags(write=False)
            spaces.append(labels)
            mats.append(arr)
        self.hypotheses: tuple[str, ...] = hyp
        self._hyp_index = {h: k for k, h in enumerate(hyp)}
        self._spaces = tuple(spaces)
        self._signal_index = tuple({s: k for k, s in enumerate(sp)} for sp in spaces)
        self._tables = tuple(mats)
        logs = []
        for arr in mats:
            lg = np.log(arr)
            lg.setflags(write=False)
            logs.append(lg)
        self._log_tables = tuple(logs)
        cums = []
        for arr in mats:
            cm = np.cumsum(arr, axis=1)
            cm.setflags(write=False)
            cums.append(cm)
        self._cumulative = tuple(cums)

    # -- basic accessors ----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self._tables)

    @property
    def m(self) -> int:
        return len(self.hypotheses)

    def agents(self) -> range:
        return range(1, self.n + 1)

    def hypothesis_index(self, theta: str) -> int:
        try:
            return self._hyp_index[theta]
        except KeyError:
            raise ValueError(f"unknown hypothesis {theta!r}") from None

    def signals(self, agent: int) -> tuple[str, ...]:
        return self._spaces[agent - 1]

    def table(self, agent: int) -> np.ndarray:
        return self._tables[agent - 1]

    def log_table(self, agent: int) -> np.ndarray:
        return self._log_tables[agent - 1]

    def signal_index(self, agent: int, signal: str) -> int:
        try:
            return self._signal_index[agent - 1][signal]
        except KeyError:
            raise ValueError(f"agent {agent} has no signal {signal!r}") from None

    def log_likelihoods(self, agent: int, signal: str) -> np.ndarray:
        """Column of log-likelihoods over hypotheses for one observed signal."""
        return self._log_tables[agent - 1][:, self.signal_index(agent, signal)]

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, payload: Mapping) -> LikelihoodModel:
        hyp = [str(h) for h in payload["hypotheses"]]
        spaces, tables = [], []
        for idx, spec in enumerate(payload["agents"], start=1):
            labels = [str(s) for s in spec["signals"]]
            table = spec["likelihood"]
            missing = [h for h in hyp if h not in table]
            if missing:
                raise ValueError(f"agent {idx}: missing likelihood rows {missing}")
            rows = []
            for h in hyp:
                row = np.asarray(table[h], dtype=np.float64)
                if row.shape != (len(labels),):
                    raise ValueError(f"agent {idx}, hypothesis {h}: row length "
                                     f"{row.size} != {len(labels)} signals")
                rows.append(row)
            arr = np.vstack(rows)
            if np.any(arr <= 0.0):
                raise ValueError(f"agent {idx}: zero or negative likelihood entry")
            gap = np.abs(arr.sum(axis=1) - 1.0).max()
            if gap > FILE_ROW_SUM_TOLERANCE:
                raise ValueError(f"agent {idx}: row sums off by {gap:.3e}")
            arr = arr / arr.sum(axis=1, keepdims=True)
            spaces.append(labels)
            tables.append(arr)
        return cls(hyp, spaces, tables)

    def to_dict(self) -> dict:
        return {
            "hypotheses": list(self.hypotheses),
            "agents": [
                {"signals": list(self._spaces[k]),
                 "likelihood": {h: [float(x) for x in self._tables[k][r]]
                                for r, h in enumerate(self.hypotheses)}}
                for k in range(self.n)
            ],
        }

    @classmethod
    def from_json(cls, text: str) -> LikelihoodModel:
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- information quantities ---------------------------------------------------

def kl_divergence(model: LikelihoodModel, agent: int, theta1: str, theta2: str) -> float:
    """KL divergence (natural log) between agent's rows for theta1 and theta2."""
    a = model.hypothesis_index(theta1)
    b = model.hypothesis_index(theta2)
    tab = model.table(agent)
    p, q = tab[a], tab[b]
    return float(np.sum(p * (np.log(p) - np.log(q))))


def expected_log_ratios(model: LikelihoodModel, theta: str, theta_star: str) -> np.ndarray:
    """Per-agent expectation of log(l(s|theta)/l(s|theta_star)) under theta_star.

    Equals minus the KL divergence from the true row to the theta row, hence
    always in [-compute_log_ratio_bound(model), 0].
    """
    return np.array([-kl_divergence(model, i, theta_star, theta)
                     for i in model.agents()])


def _ordered_pairs(model: LikelihoodModel):
    hyp = model.hypotheses
    return [(a, b) for a in hyp for b in hyp if a != b]


def compute_log_ratio_bound(model: LikelihoodModel) -> float:
    """Largest |log(l(w|theta1)/l(w|theta2))| over agents, pairs, signals (C0)."""
    worst = 0.0
    for i in model.agents():
        lg = model.log_table(i)
        for a in range(model.m):
            for b in range(model.m):
                if a == b:
                    continue
                worst = max(worst, float(np.max(np.abs(lg[a] - lg[b]))))
    return worst


def check_failure_free_identifiability(model: LikelihoodModel,
                                       tolerance: float = ZERO_TOLERANCE,
                                       ) -> tuple[bool, tuple[str, str] | None]:
    """True iff for every ordered pair the network-wide KL sum is nonzero."""
    for a, b in _ordered_pairs(model):
        total = sum(kl_divergence(model, i, a, b) for i in model.agents())
        if total <= tolerance:
            return False, (a, b)
    return True, None


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Global and crash-worst-case identifiability for (model, graph, f)."""

    failure_free_ok: bool
    assumption1_ok: bool
    worst_pair_and_source: tuple[str, str, frozenset[int]] | None
    C0: float
    C1: float

    def to_dict(self) -> dict:
        witness = self.worst_pair_and_source
        if witness is not None:
            witness = {"theta_star": witness[0], "theta": witness[1],
                       "source": sorted(witness[2])}
        return {"failure_free_ok": self.failure_free_ok,
                "assumption1_ok": self.assumption1_ok,
                "worst_pair_and_source": witness,
                "C0": self.C0, "C1": self.C1}


def check_assumption1(model: LikelihoodModel, g: DirectedGraph, f: int,
                      max_candidates: int = DEFAULT_ENUMERATION_CAP,
                      tolerance: float = ZERO_TOLERANCE,
                      reduced: tuple[ReducedGraph, ...] | None = None,
                      ) -> IdentifiabilityReport:
    """Every reduced-graph source component must distinguish every ordered pair.

    Raises IdentifiabilityPreconditionError if some reduced graph lacks a
    unique source component. C1 is the smallest source KL sum over reduced
    graphs and ordered pairs, clamped to 0.0 when the check fails (m == 1 is
    vacuous: C1 = +inf).
    """
    if g.n != model.n:
        raise ValueError(f"graph has {g.n} nodes but model has {model.n} agents")
    if reduced is None:
        reduced = enumerate_reduced_graphs(g, f, max_candidates=max_candidates)
    sources: list[frozenset[int]] = []
    seen: set[frozenset[int]] = set()
    for rg in reduced:
        decomp = rg.source_decomposition()
        if not decomp.unique_source:
            raise IdentifiabilityPreconditionError(
                f"reduced graph on nodes {sorted(rg.nodes)} has "
                f"{len(decomp.source_components)} source components")
        src = decomp.source_components[0]
        if src not in seen:
            seen.add(src)
            sources.append(src)

    c0 = compute_log_ratio_bound(model)
    ff_ok, _ = check_failure_free_identifiability(model, tolerance=tolerance)
    pairs = _ordered_pairs(model)
    if not pairs:
        return IdentifiabilityReport(failure_free_ok=True, assumption1_ok=True,
                                     worst_pair_and_source=None,
                                     C0=c0, C1=math.inf)
    per_agent = {(a, b): [kl_divergence(model, i, a, b) for i in model.agents()]
                 for a, b in pairs}
    worst_value = math.inf
    worst_witness: tuple[str, str, frozenset[int]] | None = None
    for a, b in pairs:
        kls = per_agent[(a, b)]
        for src in sources:
            total = sum(kls[i - 1] for i in src)
            if total < worst_value:
                worst_value = total
                worst_witness = (a, b, src)
    ok = worst_value > tolerance
    c1 = float(worst_value) if ok else 0.0
    return IdentifiabilityReport(failure_free_ok=ff_ok, assumption1_ok=ok,
                                 worst_pair_and_source=worst_witness,
                                 C0=c0, C1=c1)


def compute_source_divergence_floor(model: LikelihoodModel, g: DirectedGraph, f: int,
                                    max_candidates: int = DEFAULT_ENUMERATION_CAP,
                                    ) -> float:
    """C1: minimum over reduced-graph sources and ordered pairs of the KL sum."""
    return check_assumption1(model, g, f, max_candidates=max_candidates).C1


def signal_from_uniform(model: LikelihoodModel, agent: int, theta_star: str,
                        u: float) -> str:
    """Map one uniform [0, 1) variate to a signal label via the inverse CDF."""
    row = model._cumulative[agent - 1][model.hypothesis_index(theta_star)]
    idx = int(np.searchsorted(row, u, side="right"))
    idx = min(idx, row.size - 1)    # guard the u ~ 1.0 edge
    return model.signals(agent)[idx]


def sample_signal(model: LikelihoodModel, agent: int, theta_star: str,
                  rng: np.random.Generator) -> str:
    """Draw one signal label for the agent under the true hypothesis."""
    return signal_from_uniform(model, agent, theta_star, rng.random())


def bernoulli_agent(p: float, q: float,
                    signals: tuple[str, str] = ("a", "b")) -> tuple[tuple[str, str], np.ndarray]:
    """Two-signal table helper: P(signals[0]) = p under the first hypothesis, q under the second."""
    table = np.array([[p, 1.0 - p], [q, 1.0 - q]], dtype=np.float64)
    return signals, table
