"""Construction of composite networks from a component pool.

Three strategies over an ordered pool:

  dbcn        greedy chain: insert one component per step, trying every
              activation, keep the candidate with the lowest selection
              loss, then prune the deepest layers whose gain is small;
  bbcn        pairwise-balanced merges of the base components first,
              then the greedy chain for whatever remains;
  exhaustive  same merge tree, but each operand may additionally have
              its internal weights opened for training ('o') or kept
              frozen ('x'), every combination trained.

Each step trains only the newly added mixing weights (plus any newly
opened component blocks); the already-built subtree acts as a frozen
feature extractor.  Candidate seeds derive from a stable description
of the candidate, so the same candidate trains identically no matter
which search produced it.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import Activation, LINEAR, SL
from .model import (
    Activate,
    Combine,
    Component,
    ComponentRef,
    CompositeNetwork,
    Dataset,
    KIND_PRETRAINED,
    ROLE_BASE,
    count_parameters,
    loss_l2,
    single_component_network,
)
from .training import TrainConfig, TrainingError, parameter_layout, train

_CANDIDATE_GUARD = 2**12


class ConstructionError(RuntimeError):
    pass


@dataclass
class ConstructionConfig:
    activations: tuple[Activation, ...] = (LINEAR, SL)
    delta: float = 0.0
    k0: int = 2
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    selection_metric: str = "train_loss"  # or "validation_loss"
    jobs: int = 1

    def __post_init__(self):
        if not self.activations:
            raise ConstructionError("need at least one activation")
        if self.selection_metric not in ("train_loss", "validation_loss"):
            raise ConstructionError(f"unknown selection metric {self.selection_metric!r}")
        if self.jobs < 1:
            raise ConstructionError("jobs must be positive")


@dataclass
class CandidateRecord:
    description: str
    train_loss: float
    test_loss: float
    trainable: int
    total: int

    def metric(self, selection_metric: str) -> float:
        return self.train_loss if selection_metric == "train_loss" else self.test_loss


@dataclass
class StepRecord:
    label: str
    candidates: list[CandidateRecord]
    front_runner: str


@dataclass
class ConstructionReport:
    algorithm: str
    order: list[str]
    steps: list[StepRecord]
    final: CompositeNetwork
    final_components: dict[str, Component]
    pruned_from: int
    final_depth: int
    final_train_loss: float
    final_test_loss: float
    selection_metric: str
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        counts = count_parameters(self.final, self.final_components)
        return {
            "algorithm": self.algorithm,
            "order": list(self.order),
            "selection_metric": self.selection_metric,
            "steps": [
                {
                    "label": s.label,
                    "front_runner": s.front_runner,
                    "candidates": [
                        {
                            "description": c.description,
                            "train_loss": c.train_loss,
                            "test_loss": c.test_loss,
                            "trainable": c.trainable,
                            "total": c.total,
                        }
                        for c in s.candidates
                    ],
                }
                for s in self.steps
            ],
            "pruned_from": self.pruned_from,
            "final_depth": self.final_depth,
            "final": {
                "train_loss": self.final_train_loss,
                "test_loss": self.final_test_loss,
                "trainable": counts["trainable"],
                "total": counts["total"],
            },
            "network": self.final.to_dict(),
            "components": [c.to_dict() for c in self.final_components.values()],
            "notes": list(self.notes),
        }


# -- ordering --------------------------------------------------------------


def order_components(pool, per_component_loss) -> list[Component]:
    """Stable sort: pre-trained first, then base before auxiliary, then
    ascending loss; entries without a loss sort last within their group."""
    pool = list(pool)
    if isinstance(per_component_loss, dict):
        losses = per_component_loss
    else:
        losses = {c.id: v for c, v in zip(pool, per_component_loss)}

    def key(comp: Component):
        loss = losses.get(comp.id)
        return (
            0 if comp.kind == KIND_PRETRAINED else 1,
            0 if comp.role == ROLE_BASE else 1,
            float("inf") if loss is None else float(loss),
        )

    return sorted(pool, key=key)


def component_loss(comp: Component, data: Dataset, split: str = "train") -> float:
    net = single_component_network(comp.id)
    return loss_l2(net, {comp.id: comp}, data, split)


# -- internal state --------------------------------------------------------


@dataclass
class _State:
    name: str
    net: CompositeNetwork
    comps: dict[str, Component]
    train_loss: float
    test_loss: float
    # non-instantiated components that entered the subtree but have not
    # been trained yet; they open up at the next merge involving them
    fresh: set[str] = field(default_factory=set)

    def metric(self, selection_metric: str) -> float:
        return self.train_loss if selection_metric == "train_loss" else self.test_loss


def _component_state(comp: Component, data: Dataset) -> _State:
    net = single_component_network(comp.id)
    comps = {comp.id: comp}
    tr = loss_l2(net, comps, data, "train")
    te = loss_l2(net, comps, data, "test") if data.test_idx.size else float("nan")
    fresh = {comp.id} if any(not f for f in comp.frozen) else set()
    return _State(comp.id, net, comps, tr, te, fresh)


def _derive_seed(base: int, key: str) -> int:
    digest = hashlib.sha256(f"{base}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class _Namer:
    def __init__(self):
        self.count = 0

    def next(self, prefix: str) -> str:
        self.count += 1
        return f"{prefix}:{self.count}"


@dataclass
class _Candidate:
    description: str
    seed_key: str
    net: CompositeNetwork
    comps: dict[str, Component]
    trainable: set[str]


def _build_candidate(
    left: _State,
    right: _State,
    activation: Activation,
    namer: _Namer,
    description: str,
    seed_key: str,
    opened: set[str],
) -> _Candidate:
    nodes = list(left.net.nodes) + list(right.net.nodes)
    comps = {**left.comps, **right.comps}
    k = 2
    mix = Combine(namer.next("mix"), [left.net.root, right.net.root], np.array([0.0, 1.0 / k, 1.0 / k]))
    nodes.append(mix)
    root = mix.id
    if activation.tag != "linear":
        act = Activate(namer.next("act"), mix.id, activation)
        nodes.append(act)
        root = act.id
    net = CompositeNetwork(nodes, root)
    # the new mixing weights always train; component blocks only when opened now
    trainable = {mix.id}
    for ref in net.ref_nodes():
        if ref.component in opened:
            trainable.add(ref.id)
    return _Candidate(description, seed_key, net, comps, trainable)


def _train_candidate(cand: _Candidate, data: Dataset, cfg: ConstructionConfig):
    tcfg = replace(cfg.train_cfg, seed=_derive_seed(cfg.train_cfg.seed, cand.seed_key))
    layout = parameter_layout(cand.net, cand.comps, cand.trainable)
    try:
        result = train(cand.net, cand.comps, data, tcfg, trainable_nodes=cand.trainable)
    except TrainingError as exc:
        return None, CandidateRecord(
            cand.description,
            float("inf"),
            float("inf"),
            layout.size,
            count_parameters(cand.net, cand.comps)["total"],
        ), str(exc)
    last = result.history[-1]
    record = CandidateRecord(
        cand.description,
        last.train_loss,
        last.test_loss,
        layout.size,
        count_parameters(result.net, result.components)["total"],
    )
    state = _State("", result.net, result.components, last.train_loss, last.test_loss)
    return state, record, None


def _run_step(
    label: str,
    candidates: list[_Candidate],
    data: Dataset,
    cfg: ConstructionConfig,
    winner_name: str,
) -> tuple[_State, StepRecord, list[str]]:
    if cfg.jobs > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(lambda c: _train_candidate(c, data, cfg), candidates))
    else:
        outcomes = [_train_candidate(c, data, cfg) for c in candidates]
    records = [rec for _, rec, _ in outcomes]
    notes = [
        f"{label}: candidate {rec.description} failed training: {err}"
        for (_, rec, err) in outcomes
        if err is not None
    ]
    best = None
    for state, rec, err in outcomes:
        if err is not None:
            continue
        if np.isnan(rec.metric(cfg.selection_metric)):
            raise ConstructionError(
                f"{label}: selection metric {cfg.selection_metric!r} is undefined "
                "(empty test split?)"
            )
        if best is None or rec.metric(cfg.selection_metric) < best[1].metric(cfg.selection_metric):
            best = (state, rec)
    if best is None:
        raise ConstructionError(f"{label}: every candidate failed training")
    state, rec = best
    state.name = winner_name
    return state, StepRecord(label, records, rec.description), notes


def _prune_index(metric_values: list[float], delta: float) -> int:
    """Walk from the deepest network down, dropping layers whose loss
    gain over the previous depth is at most delta."""
    i = len(metric_values) - 1
    while i >= 1:
        gain = metric_values[i - 1] - metric_values[i]
        if gain <= delta:
            i -= 1
        else:
            break
    return i


def _greedy_chain(
    initial: _State,
    rest: list[Component],
    data: Dataset,
    cfg: ConstructionConfig,
    namer: _Namer,
    first_depth: int,
    merge_start: int,
):
    """Shared chain loop: returns (chain states, step records, notes)."""
    chain = [initial]
    steps: list[StepRecord] = []
    notes: list[str] = []
    for offset, comp in enumerate(rest):
        depth = first_depth + offset + 1
        merge_index = merge_start + offset
        prev = chain[-1]
        right = _component_state(comp, data)
        opened = prev.fresh | right.fresh
        lmark = "o" if prev.fresh else "x"
        rmark = "o" if right.fresh else "x"
        candidates = []
        for act in cfg.activations:
            candidates.append(
                _build_candidate(
                    prev,
                    right,
                    act,
                    namer,
                    description=f"{act.label}({prev.name},{comp.id})",
                    seed_key=f"merge{merge_index}:{act.tag}:{lmark}{rmark}",
                    opened=opened,
                )
            )
        state, record, step_notes = _run_step(
            f"depth {depth}", candidates, data, cfg, winner_name=f"g{depth}"
        )
        steps.append(record)
        notes.extend(step_notes)
        chain.append(state)
    return chain, steps, notes


# -- public algorithms -----------------------------------------------------


def _ordered(pool, data, assume_ordered: bool) -> list[Component]:
    pool = list(pool)
    if not pool:
        raise ConstructionError("component pool is empty")
    if assume_ordered:
        return pool
    losses = {
        c.id: component_loss(c, data, "train") for c in pool if c.kind == KIND_PRETRAINED
    }
    return order_components(pool, losses)


def dbcn(
    pool,
    data: Dataset,
    cfg: ConstructionConfig | None = None,
    assume_ordered: bool = False,
) -> ConstructionReport:
    """Greedy deep chain: one component per depth, then delta-pruning."""
    cfg = cfg or ConstructionConfig()
    pool = _ordered(pool, data, assume_ordered)
    namer = _Namer()
    initial = _component_state(pool[0], data)
    initial.name = "g1"
    chain, steps, notes = _greedy_chain(
        initial, pool[1:], data, cfg, namer, first_depth=1, merge_start=0
    )
    return _finish_chain_report("dbcn", pool, chain, steps, notes, cfg)


def bbcn(
    pool,
    data: Dataset,
    cfg: ConstructionConfig | None = None,
    assume_ordered: bool = False,
) -> ConstructionReport:
    """Balanced pairwise merges of the first k0 (base) components, then
    the greedy chain over the remainder."""
    cfg = cfg or ConstructionConfig()
    pool = _ordered(pool, data, assume_ordered)
    k0 = cfg.k0
    if k0 < 2:
        warnings.warn("k0 < 2: balanced stage degenerates to the greedy chain")
        report = dbcn(pool, data, cfg, assume_ordered=True)
        return replace_algorithm(report, "bbcn")
    if k0 > len(pool):
        raise ConstructionError(f"k0 = {k0} exceeds pool size {len(pool)}")
    bases = pool[:k0]
    if any(c.role != ROLE_BASE for c in bases):
        raise ConstructionError("first k0 pool entries must be base components")

    namer = _Namer()
    level = []
    for t, comp in enumerate(bases, start=1):
        st = _component_state(comp, data)
        st.name = f"h0_{t}"
        level.append(st)
    steps: list[StepRecord] = []
    notes: list[str] = []
    s = 1
    merge_index = 0
    while len(level) > 1:
        nxt: list[_State] = []
        count = len(level)
        slots = math.ceil(count / 2)
        for t in range(slots):
            if count % 2 == 1 and t == slots - 1:
                carried = level[2 * t]
                notes.append(f"h{s}_{t + 1} <- {carried.name} (carried unmerged)")
                carried = _State(
                    f"h{s}_{t + 1}",
                    carried.net,
                    carried.comps,
                    carried.train_loss,
                    carried.test_loss,
                    carried.fresh,
                )
                nxt.append(carried)
                continue
            left, right_state = level[2 * t], level[2 * t + 1]
            lmark = "o" if left.fresh else "x"
            rmark = "o" if right_state.fresh else "x"
            candidates = [
                _build_candidate(
                    left,
                    right_state,
                    act,
                    namer,
                    description=f"{act.label}({left.name},{right_state.name})",
                    seed_key=f"balance{s}:{t}:{act.tag}:{lmark}{rmark}",
                    opened=left.fresh | right_state.fresh,
                )
                for act in cfg.activations
            ]
            state, record, step_notes = _run_step(
                f"balance level {s} slot {t + 1}",
                candidates,
                data,
                cfg,
                winner_name=f"h{s}_{t + 1}",
            )
            steps.append(record)
            notes.extend(step_notes)
            nxt.append(state)
        level = nxt
        s += 1

    root = level[0]
    root.name = f"g{k0}"
    chain, chain_steps, chain_notes = _greedy_chain(
        root, pool[k0:], data, cfg, namer, first_depth=k0, merge_start=0
    )
    steps.extend(chain_steps)
    notes.extend(chain_notes)
    return _finish_chain_report("bbcn", pool, chain, steps, notes, cfg)


def replace_algorithm(report: ConstructionReport, name: str) -> ConstructionReport:
    report.algorithm = name
    return report


def _finish_chain_report(
    algorithm: str,
    pool: list[Component],
    chain: list[_State],
    steps: list[StepRecord],
    notes: list[str],
    cfg: ConstructionConfig,
) -> ConstructionReport:
    metric_values = [st.metric(cfg.selection_metric) for st in chain]
    keep = _prune_index(metric_values, cfg.delta)
    final = chain[keep]
    if keep < len(chain) - 1:
        notes.append(
            f"pruned chain from depth {len(chain)} to depth {keep + 1} (delta={cfg.delta})"
        )
    return ConstructionReport(
        algorithm=algorithm,
        order=[c.id for c in pool],
        steps=steps,
        final=final.net,
        final_components=final.comps,
        pruned_from=len(chain),
        final_depth=keep + 1,
        final_train_loss=final.train_loss,
        final_test_loss=final.test_loss,
        selection_metric=cfg.selection_metric,
        notes=notes,
    )


# -- exhaustive search -----------------------------------------------------


def balanced_schedule(count: int, k0: int):
    """Merge tree with the balanced shape over the first k0 leaves and a
    chain over the rest (the default exhaustive layout)."""
    k0 = max(1, min(k0, count))
    level: list = list(range(k0))
    while len(level) > 1:
        nxt = []
        slots = math.ceil(len(level) / 2)
        for t in range(slots):
            if len(level) % 2 == 1 and t == slots - 1:
                nxt.append(level[2 * t])
            else:
                nxt.append((level[2 * t], level[2 * t + 1]))
        level = nxt
    tree = level[0]
    for i in range(k0, count):
        tree = (tree, i)
    return tree


def chain_schedule(count: int):
    tree = 0
    for i in range(1, count):
        tree = (tree, i)
    return tree


def _schedule_leaves(node) -> list[int]:
    if isinstance(node, int):
        return [node]
    return _schedule_leaves(node[0]) + _schedule_leaves(node[1])


def _count_candidates(node, pool, n_act: int) -> int:
    if isinstance(node, int):
        return 0
    total = _count_candidates(node[0], pool, n_act) + _count_candidates(node[1], pool, n_act)
    lv = _n_variants(node[0], pool)
    rv = _n_variants(node[1], pool)
    return total + lv * rv * n_act


def _n_variants(node, pool) -> int:
    if isinstance(node, int):
        return 1 if any(not f for f in pool[node].frozen) else 2
    return 2


def exhaustive(
    pool,
    data: Dataset,
    cfg: ConstructionConfig | None = None,
    schedule=None,
    allow_large: bool = False,
    assume_ordered: bool = False,
) -> ConstructionReport:
    """Train every frozen/open x activation combination at each merge of
    the schedule and keep the per-merge winner."""
    cfg = cfg or ConstructionConfig()
    pool = _ordered(pool, data, assume_ordered)
    if schedule is None or schedule == "balanced":
        schedule = balanced_schedule(len(pool), cfg.k0)
    elif schedule == "chain":
        schedule = chain_schedule(len(pool))
    leaves = _schedule_leaves(schedule)
    if sorted(leaves) != list(range(len(pool))):
        raise ConstructionError("schedule must cover every pool index exactly once")

    total_candidates = _count_candidates(schedule, pool, len(cfg.activations))
    if total_candidates > _CANDIDATE_GUARD and not allow_large:
        raise ConstructionError(
            f"{total_candidates} candidates exceed the guard of {_CANDIDATE_GUARD}; "
            "pass allow_large=True (or --allow-large) to override"
        )

    namer = _Namer()
    steps: list[StepRecord] = []
    notes: list[str] = []
    counter = {"merge": 0}

    def variants(state: _State, node) -> list[tuple[str, _State, set[str]]]:
        if isinstance(node, int) and any(not f for f in pool[node].frozen):
            # a component that is already open only exists in open form
            return [("o", state, {pool[node].id})]
        opened_comps = {cid: comp.opened_copy() for cid, comp in state.comps.items()}
        opened_state = _State(
            state.name, state.net, opened_comps, state.train_loss, state.test_loss
        )
        return [("x", state, set()), ("o", opened_state, set(opened_comps))]

    def build(node) -> _State:
        if isinstance(node, int):
            st = _component_state(pool[node], data)
            st.name = pool[node].id
            return st
        left = build(node[0])
        right = build(node[1])
        mi = counter["merge"]
        counter["merge"] += 1
        candidates = []
        for act in cfg.activations:
            for lmark, lstate, lopen in variants(left, node[0]):
                for rmark, rstate, ropen in variants(right, node[1]):
                    candidates.append(
                        _build_candidate(
                            lstate,
                            rstate,
                            act,
                            namer,
                            description=f"{act.label}({left.name}^{lmark},{right.name}^{rmark})",
                            seed_key=f"merge{mi}:{act.tag}:{lmark}{rmark}",
                            opened=lopen | ropen,
                        )
                    )
        state, record, step_notes = _run_step(
            f"merge {mi + 1}", candidates, data, cfg, winner_name=f"g{mi + 1}"
        )
        steps.append(record)
        notes.extend(step_notes)
        return state

    final = build(schedule)
    depth = counter["merge"] + 1
    return ConstructionReport(
        algorithm="exhaustive",
        order=[c.id for c in pool],
        steps=steps,
        final=final.net,
        final_components=final.comps,
        pruned_from=depth,
        final_depth=depth,
        final_train_loss=final.train_loss,
        final_test_loss=final.test_loss,
        selection_metric=cfg.selection_metric,
        notes=notes,
    )
