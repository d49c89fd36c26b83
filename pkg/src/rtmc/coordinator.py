"""Coordinator machinery for the noiseless perfect-memory problem.

The coordinator knows the symbols one encoder has sent so far, selects a
partial-encoding function for the next stage, and observes the emitted
symbol. Its information state is the posterior over the encoder's
(observation, latent-belief) pair; with the other encoder fixed this is a
perfectly observed controlled Markov process, solved exactly by backward
induction over the finitely many reachable states.

State ids are graph-local: stage lists are built breadth-first, states
deduplicated in sup norm, actions ordered lexicographically over their
symbol assignments. Identical instance and budget give a bit-identical
graph and value table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import beliefs, engine, policies
from .errors import BudgetExceededError, ModelError
from .model import PERFECT_MEMORY, Instance

DEDUP_TOL = 1e-9


def reachable_a_beliefs(source, encoder_index: int, T: int,
                        project=None) -> beliefs.CanonicalBeliefSet:
    """All posteriors on the latent variable over positive-probability prefixes."""
    a_size = source.a_prior.shape[0]
    bset = beliefs.CanonicalBeliefSet(a_size)
    init_i = source.init[encoder_index]
    frontier = []
    for x in range(init_i.shape[1]):
        p = source.a_prior * init_i[:, x]
        if p.any():
            b = beliefs.init_a_belief(x, source.a_prior, init_i, project)
            bset.intern(b)
            frontier.append((x, b, p))
    for t in range(2, T + 1):
        kernel_t = source.kernels[encoder_index][t - 2]
        nxt = []
        for x, b, p in frontier:
            for x2 in range(kernel_t.shape[2]):
                p2 = p * kernel_t[:, x, x2]
                if p2.any():
                    b2 = beliefs.update_a_belief(b, x, x2, kernel_t, project)
                    bset.intern(b2)
                    nxt.append((x2, b2, p2))
        frontier = nxt
    return bset


class ReachableXiGraph:
    """Breadth-first closure of coordinator information states.

    ``stages[t]`` lists the distinct states reachable at stage t (stage 0
    holds only the empty sentinel). For each stage-(t-1) state, the action
    space is every map from the stage-t successor support to the symbol
    alphabet; ``edges[t][state][symbols]`` maps an action (by its symbol
    tuple) to {z: (probability, successor id)} with zero-probability
    symbols omitted.
    """

    def __init__(self, instance: Instance, encoder_index: int = 0, T: int | None = None,
                 max_actions: int = 10**6, project=None):
        if instance.receiver.mode != PERFECT_MEMORY:
            raise ModelError("the coordinator construction assumes the perfect-memory problem")
        self.instance = instance
        self.encoder_index = encoder_index
        self.T = T if T is not None else instance.alphabets.horizon
        self.project = project
        self.b_set = beliefs.CanonicalBeliefSet(instance.alphabets.a_size)
        z_size = instance.alphabets.z_sizes[encoder_index]
        source = instance.source

        self.stages: list[list[beliefs.XiState]] = [[beliefs.xi_sentinel()]]
        self.supports: list[list[tuple]] = [[]]       # per stage t>=1: per stage-(t-1) state
        self.actions: list[list[list]] = [[]]         # per stage t>=1: per state: PartialEncoders
        self.edges: list[list[dict]] = [[]]           # per stage t>=1: per state: symbols->...
        self.sentinel_id = 0

        for t in range(1, self.T + 1):
            new_states: list[beliefs.XiState] = []
            supports_t, actions_t, edges_t = [], [], []
            for state in self.stages[t - 1]:
                support, weights = beliefs.xi_successor_support(
                    state, source, encoder_index, self.b_set, project
                )
                n_actions = z_size ** len(support)
                if n_actions > max_actions:
                    raise BudgetExceededError(
                        f"stage {t}: {n_actions} partial functions exceed budget {max_actions}",
                        count=n_actions,
                    )
                acts = [
                    policies.PartialEncoder(support=support, symbols=symbols)
                    for symbols in itertools.product(range(z_size), repeat=len(support))
                ]
                edge_map = {}
                for w in acts:
                    by_z: dict[int, float] = {}
                    for pair, p in zip(support, weights):
                        z = w(*pair)
                        by_z[z] = by_z.get(z, 0.0) + float(p)
                    targets = {}
                    for z, pz in sorted(by_z.items()):
                        if pz <= 0.0:
                            continue
                        keep = [q for q, pair in enumerate(support) if w(*pair) == z]
                        xi2 = beliefs.XiState(
                            stage=t,
                            support=tuple(support[q] for q in keep),
                            weights=np.array([weights[q] for q in keep]) / pz,
                        )
                        idx = None
                        for known_idx, known in enumerate(new_states):
                            if known.close_to(xi2, DEDUP_TOL):
                                idx = known_idx
                                break
                        if idx is None:
                            new_states.append(xi2)
                            idx = len(new_states) - 1
                        targets[z] = (pz, idx)
                    edge_map[w.symbols] = targets
                supports_t.append(support)
                actions_t.append(acts)
                edges_t.append(edge_map)
            self.stages.append(new_states)
            self.supports.append(supports_t)
            self.actions.append(actions_t)
            self.edges.append(edges_t)

    def step(self, t: int, state_id: int, w: policies.PartialEncoder, z: int) -> int:
        """Successor state id after emitting z at stage t from a stage-(t-1) state."""
        return self.edges[t][state_id][w.symbols][z][1]

    def to_dict(self):
        out = {"encoder_index": self.encoder_index, "T": self.T, "stages": []}
        out["beliefs"] = [b.tolist() for b in self.b_set]
        for t in range(self.T + 1):
            stage = {
                "states": [
                    {"support": [list(p) for p in s.support], "weights": s.weights.tolist()}
                    for s in self.stages[t]
                ]
            }
            if t >= 1:
                stage["actions"] = [
                    {
                        "support": [list(p) for p in self.supports[t][sid]],
                        "count": len(self.actions[t][sid]),
                    }
                    for sid in range(len(self.stages[t - 1]))
                ]
                stage["edges"] = [
                    [
                        [list(symbols), z, pz, target]
                        for symbols, targets in sorted(self.edges[t][sid].items())
                        for z, (pz, target) in sorted(targets.items())
                    ]
                    for sid in range(len(self.stages[t - 1]))
                ]
            out["stages"].append(stage)
        return out


def build_reachable_xi_graph(instance: Instance, encoder2=None, T: int | None = None,
                             max_actions: int = 10**6, project=None,
                             encoder_index: int = 0):
    """Graph plus (optionally) the fixed other encoder's forward tables."""
    graph = ReachableXiGraph(instance, encoder_index, T, max_actions, project)
    forward2 = None
    if encoder2 is not None:
        forward2 = beliefs.FixedEncoderForward(instance, encoder2, 1 - encoder_index)
    return graph, forward2


def _oriented_stage_cost(graph, xi, forward2, rho_t):
    """Stage cost with distortion axes ordered for either encoder role."""
    if graph.encoder_index == 0:
        return beliefs.coordinator_stage_cost(xi, forward2, rho_t, graph.b_set)
    return beliefs.coordinator_stage_cost(
        xi, forward2, np.swapaxes(rho_t, 0, 1), graph.b_set
    )


@dataclass(frozen=True)
class ValueTable:
    """Backward-induction values over reachable information states.

    ``values[t-1][s]`` is the optimal cost-to-go from stage-t state s
    (stage-t cost included); ``argmin[t]`` gives, per stage-t state, the
    index of the optimal stage-(t+1) action (``argmin[0]`` has the single
    sentinel entry). ``v0`` is the optimal total cost.
    """

    values: tuple
    argmin: tuple
    v0: float

    def to_dict(self):
        return {
            "v0": self.v0,
            "values": [v.tolist() for v in self.values],
            "argmin": [a.tolist() for a in self.argmin],
        }


def solve_dp(graph: ReachableXiGraph, forward2: beliefs.FixedEncoderForward,
             rho=None) -> ValueTable:
    """Backward induction over the reachable-state graph.

    Terminal values are the stage-T expected distortions; earlier values
    add the best expected continuation over partial functions, ties going
    to the smallest action index.
    """
    inst = graph.instance
    T = graph.T
    rho = rho if rho is not None else inst.distortion.rho
    values = [None] * (T + 1)  # values[t] over stage-t states, t=1..T
    argmin = [None] * T        # argmin[t] over stage-t states, t=0..T-1

    values[T] = np.array(
        [_oriented_stage_cost(graph, xi, forward2, rho[T - 1]) for xi in graph.stages[T]]
    )
    for t in range(T - 1, -1, -1):
        n_states = len(graph.stages[t])
        vals = np.zeros(n_states)
        args = np.zeros(n_states, dtype=np.int64)
        for sid in range(n_states):
            best = np.inf
            best_w = -1
            for w_id, w in enumerate(graph.actions[t + 1][sid]):
                targets = graph.edges[t + 1][sid][w.symbols]
                cont = 0.0
                for z, (pz, succ) in targets.items():
                    cont += pz * values[t + 1][succ]
                if cont < best:
                    best = cont
                    best_w = w_id
            stage_cost = (
                0.0
                if t == 0
                else _oriented_stage_cost(graph, graph.stages[t][sid], forward2, rho[t - 1])
            )
            vals[sid] = stage_cost + best
            args[sid] = best_w
        if t == 0:
            v0 = float(vals[0])
            argmin[0] = args
        else:
            values[t] = vals
            argmin[t] = args
    return ValueTable(values=tuple(values[1:]), argmin=tuple(argmin), v0=v0)


def extract_selection_rule(values: ValueTable, graph: ReachableXiGraph) -> policies.CoordinatorRule:
    """Markov selection rule from the stored argmins."""
    stages = []
    for t in range(1, graph.T + 1):
        stage = {
            sid: graph.actions[t][sid][int(values.argmin[t - 1][sid])]
            for sid in range(len(graph.stages[t - 1]))
        }
        stages.append(stage)
    return policies.CoordinatorRule(form="markov", stages=tuple(stages))


def markov_rule_encoder(rule: policies.CoordinatorRule, graph: ReachableXiGraph):
    """Runnable encoder implementing symbols = G(state)(observation, belief)."""
    return policies.coordinator_to_structured(rule, graph, graph.b_set)


# ---------------------------------------------------------------------------
# History-form rules: enumeration and direct evaluation.
# ---------------------------------------------------------------------------


def count_history_rules(graph: ReachableXiGraph) -> int:
    """Number of selection rules over reachable histories."""

    def count_from(t, state_id):
        if t > graph.T:
            return 1
        total = 0
        for w_id, w in enumerate(graph.actions[t][state_id]):
            prod = 1
            for z, (pz, succ) in graph.edges[t][state_id][w.symbols].items():
                prod *= count_from(t + 1, succ)
            total += prod
        return total

    return count_from(1, 0)


def enumerate_history_rules(graph: ReachableXiGraph, max_rules: int = 10**5):
    """All reachability-restricted history-form selection rules.

    A rule assigns a partial function to every transmitted history that
    can occur under the rule itself; past selections are functions of the
    history, so histories alone key the tables. The count is checked
    against ``max_rules`` before materializing.
    """
    n = count_history_rules(graph)
    if n > max_rules:
        raise BudgetExceededError(f"{n} history rules exceed budget {max_rules}", count=n)

    def expand(t, frontier, stages):
        # frontier: list of (z_history, state_id) reachable at stage t-1
        if t > graph.T:
            yield tuple(dict(s) for s in stages)
            return
        option_lists = []
        for zh, sid in frontier:
            option_lists.append(list(enumerate(graph.actions[t][sid])))
        for combo in itertools.product(*option_lists):
            stage = {}
            nxt = []
            for (zh, sid), (w_id, w) in zip(frontier, combo):
                stage[zh] = w
                for z, (pz, succ) in sorted(graph.edges[t][sid][w.symbols].items()):
                    nxt.append((zh + (z,), succ))
            yield from expand(t + 1, nxt, stages + [stage])

    yield from expand(1, [((), 0)], [])


def history_rule_cost(graph: ReachableXiGraph, stages,
                      forward2: beliefs.FixedEncoderForward, rho=None) -> float:
    """Expected total distortion of a history-form rule, computed on the graph.

    Walks the information state forward along every positive-probability
    symbol history, accumulating the per-stage expected distortions; this
    is the coordinator-side evaluation route, independent of the system
    simulator.
    """
    inst = graph.instance
    rho = rho if rho is not None else inst.distortion.rho

    def recurse(t, state_id, zh, prob):
        if t > graph.T:
            return 0.0
        w = stages[t - 1][zh]
        total = 0.0
        for z, (pz, succ) in graph.edges[t][state_id][w.symbols].items():
            xi2 = graph.stages[t][succ]
            stage_cost = _oriented_stage_cost(graph, xi2, forward2, rho[t - 1])
            total += prob * pz * stage_cost + recurse(t + 1, succ, zh + (z,), prob * pz)
        return total

    return recurse(1, 0, (), 1.0)


def rule_to_encoder(graph: ReachableXiGraph, stages) -> policies.PartialFunctionEncoder:
    """The encoder that implements a history-form rule without a coordinator."""
    return policies.PartialFunctionEncoder(stages=tuple(dict(s) for s in stages),
                                           b_set=graph.b_set)


def p2_brute_force(instance: Instance, encoder2, max_rules: int = 10**5,
                   max_actions: int = 10**6, encoder_index: int = 0):
    """Exhaustive minimum over encoder strategies of the restricted form.

    Enumerates every (observation, belief, transmitted-history) strategy
    tree for the chosen encoder, fixing the other one, and evaluates each
    through the exact system evaluator with the posterior-optimal decoder.
    Returns (min cost, argmin index, all costs, graph).
    """
    graph = ReachableXiGraph(instance, encoder_index, max_actions=max_actions)
    costs = []
    trees = list(enumerate_history_rules(graph, max_rules))
    for stages in trees:
        enc = rule_to_encoder(graph, stages)
        pair = (enc, encoder2) if encoder_index == 0 else (encoder2, enc)
        asm = engine.SystemAssembly(
            instance=instance, encoders=pair, decoder=policies.TauDecoder()
        )
        costs.append(engine.expected_distortion_exact(asm).total)
    costs = np.array(costs)
    best = int(np.argmin(costs))
    return float(costs[best]), best, costs, graph


def verify_equivalence_p2(instance: Instance, encoder2, max_rules: int = 10**5,
                          max_actions: int = 10**6, tol: float = 1e-12) -> dict:
    """Check that the team problem and the coordinator problem achieve the same costs.

    Both directions of the simulation argument are exercised on the same
    reachability-restricted rule space: each rule is evaluated once as an
    encoder strategy through the system simulator and once as a
    coordinator rule through the information-state walk. The achievable
    cost multisets must coincide.
    """
    graph = ReachableXiGraph(instance, 0, max_actions=max_actions)
    forward2 = beliefs.FixedEncoderForward(instance, encoder2, 1)
    team_costs = []
    coord_costs = []
    for stages in enumerate_history_rules(graph, max_rules):
        enc = rule_to_encoder(graph, stages)
        asm = engine.SystemAssembly(
            instance=instance, encoders=(enc, encoder2), decoder=policies.TauDecoder()
        )
        team_costs.append(engine.expected_distortion_exact(asm).total)
        coord_costs.append(history_rule_cost(graph, stages, forward2))
    team = np.sort(np.array(team_costs))
    coord = np.sort(np.array(coord_costs))
    max_gap = float(np.max(np.abs(team - coord))) if team.size else 0.0
    pairwise_gap = float(np.max(np.abs(np.array(team_costs) - np.array(coord_costs))))
    return {
        "n_rules": len(team_costs),
        "multiset_gap": max_gap,
        "rulewise_gap": pairwise_gap,
        "min_team": float(team[0]),
        "min_coordinator": float(coord[0]),
        "passed": bool(max_gap <= tol and abs(team[0] - coord[0]) <= tol),
    }


def alternating_best_response(instance: Instance, encoder2_init, sweeps: int = 2,
                              max_actions: int = 10**6):
    """Heuristic: alternate exact single-encoder optimization between the encoders.

    Each half-sweep solves the coordinator program for one encoder with
    the other fixed. The result is a local optimum of the alternating
    scheme; no global-optimality claim is made.
    """
    other = encoder2_init
    other_index = 1
    history = []
    current = {1: encoder2_init, 0: None}
    for _ in range(2 * sweeps):
        me = 1 - other_index
        graph, forward_other = build_reachable_xi_graph(
            instance, current[other_index], max_actions=max_actions, encoder_index=me
        )
        table = solve_dp(graph, forward_other)
        rule = extract_selection_rule(table, graph)
        current[me] = markov_rule_encoder(rule, graph)
        history.append(table.v0)
        other_index = me
    return current[0], current[1], history
