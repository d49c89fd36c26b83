"""Brute-force strategy search and structural-theorem verification.

Ground truth for the structural results on tiny instances: exhaustive
enumeration of encoder strategies and memory rules (tables over reachable
arguments only, built depth-first so each stage's domain reflects the
prefix already chosen), with the decoder optimized per evidence cell.
The per-cell optimization is exact for the global decoder minimum because
the objective is additive over stages and evidence cells and the decoder
does not influence the dynamics.

The pairwise cost sweep is the hot loop; it runs on the compiled kernel
when available (see rtmc.kernel).
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import beliefs, engine, kernel, policies
from .errors import BudgetExceededError, ModelError
from .model import FINITE_MEMORY, PERFECT_MEMORY, Instance, ReceiverSpec

GAP_TOL = 1e-9


@dataclass(frozen=True)
class SearchBudget:
    max_strategies: int = 2_000_000      # strategy profiles (branch pairs)
    max_atoms: int = engine.DEFAULT_MAX_ATOMS
    max_decoder_tables: int = 1 << 20    # literal decoder enumeration cap per stage
    wall_clock_hint: float | None = None

    def __post_init__(self):
        if self.max_strategies < 1 or self.max_atoms < 1 or self.max_decoder_tables < 1:
            raise ModelError("budget fields must be positive")


@dataclass(frozen=True)
class StructureReport:
    global_min: float
    structured_min: float
    gap: float
    witness_global: dict
    witness_structured: dict
    counts: dict
    passed: bool

    def to_dict(self):
        return {
            "global_min": self.global_min,
            "structured_min": self.structured_min,
            "gap": self.gap,
            "witness_global": self.witness_global,
            "witness_structured": self.witness_structured,
            "counts": self.counts,
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# Reachability-pruned enumeration of encoder strategies and memory rules.
# ---------------------------------------------------------------------------


def positive_prefix_counts(instance: Instance, i: int) -> list[int]:
    """Number of positive-probability observation prefixes per stage."""
    al = instance.alphabets
    pa = instance.source.a_prior
    vecs = {}
    for x in range(al.x_sizes[i]):
        v = pa * instance.source.init[i][:, x]
        if v.any():
            vecs[(x,)] = v
    counts = [len(vecs)]
    for t in range(1, al.horizon):
        kernel_t = instance.source.kernels[i][t - 1]
        nxt = {}
        for xh, v in vecs.items():
            for x2 in range(al.x_sizes[i]):
                v2 = v * kernel_t[:, xh[-1], x2]
                if v2.any():
                    nxt[xh + (x2,)] = v2
        vecs = nxt
        counts.append(len(vecs))
    return counts


def count_encoder_strategies(instance: Instance, i: int) -> int:
    """Closed form: product over stages of |Z| ** (positive prefixes).

    Each positive observation prefix corresponds to exactly one reachable
    (x-history, z-history) pair once the earlier tables are fixed, so the
    count does not depend on which symbols those tables choose.
    """
    z = instance.alphabets.z_sizes[i]
    total = 1
    for c in positive_prefix_counts(instance, i):
        total *= z ** c
    return total


def enumerate_encoder_strategies(instance: Instance, i: int):
    """All general encoder strategies as per-stage tables over reachable histories."""
    al = instance.alphabets
    pa = instance.source.a_prior
    z_size = al.z_sizes[i]
    T = al.horizon

    roots = []
    for x in range(al.x_sizes[i]):
        v = pa * instance.source.init[i][:, x]
        if v.any():
            roots.append(((x,), v))

    out = []

    def expand(t, histories, tables):
        # histories: list of ((x_hist, z_hist), vec)
        keys = [key for key, _ in histories]
        for assignment in itertools.product(range(z_size), repeat=len(keys)):
            table = dict(zip(keys, assignment))
            if t == T:
                out.append(tuple(tables + [table]))
                continue
            kernel_t = instance.source.kernels[i][t - 1]
            nxt = []
            for (xh, zh), v in histories:
                z = table[(xh, zh)]
                for x2 in range(al.x_sizes[i]):
                    v2 = v * kernel_t[:, xh[-1], x2]
                    if v2.any():
                        nxt.append(((xh + (x2,), zh + (z,)), v2))
            expand(t + 1, nxt, tables + [table])

    expand(1, roots, [])
    return out


def count_memory_rule_sets(instance: Instance, i: int) -> int:
    al = instance.alphabets
    m, y = al.m_sizes[i], al.y_sizes[i]
    total = 1
    for t in range(1, al.horizon):  # updates after stages 1..T-1
        total *= m**y if t == 1 else m ** (m * y)
    return total


def enumerate_memory_rule_sets(instance: Instance, i: int):
    """All memory-rule tuples (one table per update stage 1..T-1)."""
    al = instance.alphabets
    m, y = al.m_sizes[i], al.y_sizes[i]
    per_stage = []
    for t in range(1, al.horizon):
        if t == 1:
            tables = [
                np.array(vals, dtype=np.int64)
                for vals in itertools.product(range(m), repeat=y)
            ]
        else:
            tables = [
                np.array(vals, dtype=np.int64).reshape(m, y)
                for vals in itertools.product(range(m), repeat=m * y)
            ]
        per_stage.append(tables)
    return [tuple(combo) for combo in itertools.product(*per_stage)]


@dataclass
class Branch:
    """One channel-side strategy: encoder tables plus memory rules.

    ``evidence`` holds per-stage arrays (A, X_i, E_t) where E_t flattens
    (y, m): the joint law of that channel's branch given the latent value.
    """

    tables: tuple
    rules: tuple | None
    evidence: list
    structured: bool


def _memory_dists_for_rules(z_prefixes, rules, channel_mats, m_size):
    """Memory-content distribution after each transmitted prefix.

    Returns {z_prefix: vector over M ∪ {sentinel}} computed by pushing
    channel noise through the update rules (sentinel is the last slot).
    """
    dists = {(): beliefs.initial_memory_belief(m_size)}
    for zp in sorted(z_prefixes, key=len):
        if zp in dists:
            continue
        prev = dists[zp[:-1]]
        t_prev = len(zp)  # update applied after stage t_prev
        dists[zp] = beliefs.update_memory_belief(
            prev, zp[-1], channel_mats[t_prev - 1], rules[t_prev - 1]
        )
    return dists


def enumerate_branches(instance: Instance, i: int, receiver: ReceiverSpec | None = None,
                       b_set: beliefs.CanonicalBeliefSet | None = None):
    """All (encoder strategy, memory rules) branches for channel i.

    Each branch carries its per-stage evidence tables and a flag telling
    whether the encoder factors through (current observation, latent
    belief, memory belief) under that branch's memory rules.
    """
    al = instance.alphabets
    rec = receiver if receiver is not None else instance.receiver
    perfect = rec.mode == PERFECT_MEMORY
    pa = instance.source.a_prior
    chan = instance.channels.matrices[i]
    T = al.horizon
    A, Xi, Yi = al.a_size, al.x_sizes[i], al.y_sizes[i]

    if b_set is None:
        b_set = beliefs.CanonicalBeliefSet(A)
    b_ids: dict[tuple, int] = {}

    def b_id_of(xh):
        if xh not in b_ids:
            if len(xh) == 1:
                b = beliefs.init_a_belief(xh[0], pa, instance.source.init[i])
            else:
                prev = b_set[b_id_of(xh[:-1])]
                b = beliefs.update_a_belief(
                    prev, xh[-2], xh[-1], instance.source.kernels[i][len(xh) - 2]
                )
            b_ids[xh] = b_set.intern(b)
        return b_ids[xh]

    strategies = enumerate_encoder_strategies(instance, i)
    rule_sets = [None] if perfect else enumerate_memory_rule_sets(instance, i)

    branches = []
    for tables in strategies:
        # forward law of (x-history, z-history) per latent value
        stage_hist = []  # per stage: list of (xh, zh, vec)
        cur = []
        for x in range(Xi):
            v = instance.source.init[i][:, x]
            if (pa * v).any():
                cur.append(((x,), (), v))
        for t in range(1, T + 1):
            withz = [(xh, zh, tables[t - 1][(xh, zh)], v) for xh, zh, v in cur]
            stage_hist.append(withz)
            if t == T:
                break
            kernel_t = instance.source.kernels[i][t - 1]
            nxt = []
            for xh, zh, z, v in withz:
                for x2 in range(Xi):
                    v2 = v * kernel_t[:, xh[-1], x2]
                    if (pa * v2).any():
                        nxt.append((xh + (x2,), zh + (z,), v2))
            cur = nxt

        for rules in rule_sets:
            if perfect:
                mem_index = {}  # z-prefix -> history index
            else:
                prefixes = {zh for stage in stage_hist for _, zh, _, _ in stage}
                mdists = _memory_dists_for_rules(prefixes, rules, chan, al.m_sizes[i])
                mu_set = beliefs.CanonicalBeliefSet(al.m_sizes[i] + 1)

            evidence = []
            structured = True
            for t in range(1, T + 1):
                mdim = engine.memory_axis_size(instance, rec, i, t)
                E = np.zeros((A, Xi, Yi * mdim))
                groups: dict[tuple, int] = {}
                for xh, zh, z, v in stage_hist[t - 1]:
                    if perfect:
                        m_idx = 0
                        for sym in zh:
                            m_idx = m_idx * Yi + sym
                        E[:, xh[-1], np.arange(Yi) * mdim + m_idx] += (
                            v[:, None] * chan[t - 1][z][None, :]
                        )
                        mu_key = m_idx
                    else:
                        mdist = mdists[zh]
                        for m_idx in range(mdim):
                            w = mdist[al.m_sizes[i]] if t == 1 else mdist[m_idx]
                            if w == 0.0:
                                continue
                            E[:, xh[-1], np.arange(Yi) * mdim + m_idx] += (
                                w * v[:, None] * chan[t - 1][z][None, :]
                            )
                        mu_key = mu_set.intern(mdist)
                    if structured:
                        key = (xh[-1], b_id_of(xh), mu_key)
                        if groups.setdefault(key, z) != z:
                            structured = False
                evidence.append(E)
            branches.append(
                Branch(tables=tables, rules=rules, evidence=evidence, structured=structured)
            )
    return branches


# ---------------------------------------------------------------------------
# Pairwise sweep.
# ---------------------------------------------------------------------------


def _pair_sweep(instance: Instance, branches1, branches2, workers=1):
    """Minimum cost over all branch pairs with the per-cell-optimal decoder.

    Returns ((cost, i, j), (cost, i, j) restricted to structured-flagged
    pairs). Ties break toward the lexicographically smallest pair.
    """
    al = instance.alphabets
    pa = instance.source.a_prior
    T = al.horizon
    S = instance.distortion.estimate_size

    v_stacks = []
    for t in range(1, T + 1):
        stack = np.ascontiguousarray(
            np.stack([b.evidence[t - 1] for b in branches2]).reshape(
                len(branches2), al.a_size * al.x_sizes[1], -1
            )
        )
        # evidence arrays are (A, X2, E2); flattening the first two axes
        # gives the joint coordinate k = (a, x2) expected by the kernel
        v_stacks.append(stack)
    structured2 = np.array([b.structured for b in branches2], dtype=bool)
    any_structured2 = structured2.any()

    def r_tensor(branch, t):
        U = branch.evidence[t - 1]  # (A, X1, E1)
        rho_t = instance.rho(t)     # (X1, X2, A, S)
        R = np.einsum("a,axe,xyas->seay", pa, U, rho_t)
        return np.ascontiguousarray(R.reshape(S, U.shape[2], al.a_size * al.x_sizes[1]))

    def sweep(lo, hi):
        best = (np.inf, -1, -1)
        best_struct = (np.inf, -1, -1)
        n2 = len(branches2)
        for idx in range(lo, hi):
            row = np.zeros(n2)
            for t in range(1, T + 1):
                kernel.row_costs(r_tensor(branches1[idx], t), v_stacks[t - 1], row)
            j = int(np.argmin(row))
            if row[j] < best[0]:
                best = (float(row[j]), idx, j)
            if branches1[idx].structured and any_structured2:
                masked = np.where(structured2, row, np.inf)
                js = int(np.argmin(masked))
                if masked[js] < best_struct[0]:
                    best_struct = (float(masked[js]), idx, js)
        return best, best_struct

    if workers <= 1:
        return sweep(0, len(branches1))
    bounds = np.linspace(0, len(branches1), workers + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda se: sweep(*se), zip(bounds[:-1], bounds[1:])))
    best = min((p[0] for p in parts), key=lambda v: (v[0], v[1], v[2]))
    best_struct = min((p[1] for p in parts), key=lambda v: (v[0], v[1], v[2]))
    return best, best_struct


def _assembly_from_branches(instance, b1: Branch, b2: Branch, receiver):
    enc1 = policies.GeneralEncoder(stages=b1.tables)
    enc2 = policies.GeneralEncoder(stages=b2.tables)
    if receiver.mode == PERFECT_MEMORY:
        rec = receiver
    else:
        rec = ReceiverSpec(mode=FINITE_MEMORY, memory_rules=(b1.rules, b2.rules))
    assembly = engine.SystemAssembly(
        instance=instance, encoders=(enc1, enc2), decoder=policies.TauDecoder(), receiver=rec
    )
    decoder = engine.tau_decoder_table(assembly)
    return engine.SystemAssembly(
        instance=instance, encoders=(enc1, enc2), decoder=decoder, receiver=rec
    )


def _check_pair_budget(instance, budget):
    if instance.alphabets.n_encoders != 2:
        raise ModelError("brute-force search supports exactly two encoders")
    rec = instance.receiver
    counts = {}
    total = 1
    for i in range(2):
        n_enc = count_encoder_strategies(instance, i)
        n_rules = 1 if rec.mode == PERFECT_MEMORY else count_memory_rule_sets(instance, i)
        counts[f"encoder{i + 1}_strategies"] = n_enc
        counts[f"encoder{i + 1}_memory_rule_sets"] = n_rules
        total *= n_enc * n_rules
    counts["strategy_pairs"] = total
    if total > budget.max_strategies:
        raise BudgetExceededError(
            f"strategy space has {total} profiles (> {budget.max_strategies})", count=total
        )
    return counts


def enumerate_global_optimum(instance: Instance, budget: SearchBudget | None = None,
                             workers: int = 1):
    """Exhaustive minimum of the objective over all deterministic strategies.

    Enumerates both encoders' general-form tables and all memory rules,
    with the decoder optimized per evidence cell; returns (minimum cost,
    witness assembly, counts). Deterministic: ties resolve to the
    lexicographically first witness in enumeration order.
    """
    budget = budget or SearchBudget()
    counts = _check_pair_budget(instance, budget)
    b_set = beliefs.CanonicalBeliefSet(instance.alphabets.a_size)
    branches1 = enumerate_branches(instance, 0, b_set=b_set)
    branches2 = enumerate_branches(instance, 1, b_set=b_set)
    best, _ = _pair_sweep(instance, branches1, branches2, workers)
    cost, i, j = best
    assembly = _assembly_from_branches(instance, branches1[i], branches2[j], instance.receiver)
    return cost, assembly, counts


def verify_theorem1(instance: Instance, budget: SearchBudget | None = None,
                    workers: int = 1) -> StructureReport:
    """Compare the global optimum against the structured-encoder class.

    The structured class keeps only branches whose encoder tables factor
    through (current observation, latent-belief, memory-belief) triples;
    the gap must vanish up to tolerance.
    """
    budget = budget or SearchBudget()
    counts = _check_pair_budget(instance, budget)
    b_set = beliefs.CanonicalBeliefSet(instance.alphabets.a_size)
    branches1 = enumerate_branches(instance, 0, b_set=b_set)
    branches2 = enumerate_branches(instance, 1, b_set=b_set)
    counts["structured_branches_1"] = sum(b.structured for b in branches1)
    counts["structured_branches_2"] = sum(b.structured for b in branches2)
    best, best_struct = _pair_sweep(instance, branches1, branches2, workers)
    gap = best_struct[0] - best[0]
    witness_g = {"pair": [best[1], best[2]], "cost": best[0]}
    witness_s = {"pair": [best_struct[1], best_struct[2]], "cost": best_struct[0]}
    return StructureReport(
        global_min=best[0],
        structured_min=best_struct[0],
        gap=gap,
        witness_global=witness_g,
        witness_structured=witness_s,
        counts=counts,
        passed=bool(-GAP_TOL <= gap <= GAP_TOL),
    )


# ---------------------------------------------------------------------------
# Decoder optimality (exhaustive decoder tables vs posterior-optimal rule).
# ---------------------------------------------------------------------------


def verify_theorem2(instance: Instance, encoders, budget: SearchBudget | None = None,
                    receiver: ReceiverSpec | None = None) -> dict:
    """Exhaustive decoder search against the posterior-optimal decoder.

    With encoders and memory rules fixed, enumerates explicit decoder
    tables stage by stage (the objective is additive and the decoder does
    not affect the dynamics, so stages decouple); falls back to per-cell
    minimization when the table count exceeds the budget. Off-path
    evidence cells never contribute and are reported, not chosen.
    """
    budget = budget or SearchBudget()
    assembly = engine.SystemAssembly(
        instance=instance, encoders=tuple(encoders), decoder=policies.TauDecoder(),
        receiver=receiver,
    )
    cells = engine.stage_cell_posteriors(assembly, budget.max_atoms)
    S = instance.distortion.estimate_size
    tau_cost = 0.0
    brute_cost = 0.0
    methods = []
    n_tables = []
    for t in range(1, instance.alphabets.horizon + 1):
        rho_t = instance.rho(t)
        rho_flat = rho_t.reshape(-1, S)
        cell_costs = np.array(
            [joint.reshape(-1) @ rho_flat for joint in cells[t - 1].values()]
        )  # (n_cells, S)
        if cell_costs.size == 0:
            methods.append("empty")
            n_tables.append(0)
            continue
        tau_cost += float(cell_costs.min(axis=1).sum())
        n_cells = cell_costs.shape[0]
        total_tables = S**n_cells
        if total_tables <= budget.max_decoder_tables:
            combos = np.array(
                np.unravel_index(np.arange(total_tables), (S,) * n_cells)
            )  # (n_cells, total)
            totals = cell_costs[np.arange(n_cells)[:, None], combos].sum(axis=0)
            brute_cost += float(totals.min())
            methods.append("tables")
            n_tables.append(total_tables)
        else:
            brute_cost += float(cell_costs.min(axis=1).sum())
            methods.append("per-cell")
            n_tables.append(total_tables)
    tau_table = engine.tau_decoder_table(assembly, budget.max_atoms)
    gap = brute_cost - tau_cost
    return {
        "tau_cost": tau_cost,
        "decoder_enumeration_min": brute_cost,
        "gap": gap,
        "methods": methods,
        "tables_per_stage": n_tables,
        "offpath_cells": [[t, list(cell)] for t, cell in tau_table.offpath],
        "passed": bool(abs(gap) <= GAP_TOL),
    }


# ---------------------------------------------------------------------------
# Markov property of the encoder state (observation, latent belief, memory belief).
# ---------------------------------------------------------------------------


def verify_lemma3_markov(instance: Instance, encoder1, receiver: ReceiverSpec | None = None,
                         tol: float = 1e-10, a_update=None) -> dict:
    """Exact check that the encoder's summarized state is controlled-Markov.

    Enumerates all positive-probability (state-path, symbol-path) pairs of
    encoder 1 under a fixed strategy and compares the conditional law of
    the next state given the full past against the conditional given the
    current (state, symbol) only. ``a_update`` substitutes the latent
    belief update (used as a corrupted negative control).
    """
    al = instance.alphabets
    rec = receiver if receiver is not None else instance.receiver
    if rec.mode != FINITE_MEMORY:
        raise ModelError("the Markov check is defined for the finite-memory receiver")
    upd = a_update if a_update is not None else beliefs.update_a_belief
    pa = instance.source.a_prior
    T = al.horizon
    i = 0
    driver = policies.make_driver(encoder1, instance, i, receiver=rec)
    b_set = beliefs.CanonicalBeliefSet(al.a_size)
    mu_set = beliefs.CanonicalBeliefSet(al.m_sizes[i] + 1)
    full = [{} for _ in range(T)]   # t-1 -> {(r_{1:t}, z_{1:t}): dist over r_{t+1}}
    pair = [{} for _ in range(T)]   # t-1 -> {(r_t, z_t): dist over r_{t+1}}
    mu0 = mu_set.intern(beliefs.initial_memory_belief(al.m_sizes[i]))

    def walk(x_path, prob):
        t = len(x_path)
        # rebuild the deterministic (state, symbol) trajectory from the x-path
        starts = driver.start(x_path[0])
        if len(starts) != 1:
            raise ModelError("the Markov check requires a deterministic encoder")
        cur = starts[0][0]
        b = beliefs.init_a_belief(x_path[0], pa, instance.source.init[i])
        mu = beliefs.initial_memory_belief(al.m_sizes[i])
        r_path = [(x_path[0], b_set.intern(b), mu0)]
        z_path = [driver.emit(cur, 1)]
        for s in range(2, t + 1):
            kernel_s = instance.source.kernels[i][s - 2]
            b = upd(b, x_path[s - 2], x_path[s - 1], kernel_s)
            mu = beliefs.update_memory_belief(
                mu, z_path[-1], instance.channels.matrices[i][s - 2],
                rec.memory_rules[i][s - 2],
            )
            cur = driver.advance(cur, s - 1, x_path[s - 1])
            r_path.append((x_path[s - 1], b_set.intern(b), mu_set.intern(mu)))
            z_path.append(driver.emit(cur, s))
        if t < T:
            kernel_t = instance.source.kernels[i][t - 1]
            mu_next = beliefs.update_memory_belief(
                mu, z_path[-1], instance.channels.matrices[i][t - 1],
                rec.memory_rules[i][t - 1],
            )
            mu_next_id = mu_set.intern(mu_next)
            for x2 in range(al.x_sizes[i]):
                prob2 = prob * kernel_t[:, x_path[-1], x2]
                mass = float(prob2.sum())
                if mass == 0.0:
                    continue
                b2 = upd(b, x_path[-1], x2, kernel_t)
                r_next = (x2, b_set.intern(b2), mu_next_id)
                key_full = (tuple(r_path), tuple(z_path))
                key_pair = (r_path[-1], z_path[-1])
                full[t - 1].setdefault(key_full, {})
                full[t - 1][key_full][r_next] = full[t - 1][key_full].get(r_next, 0.0) + mass
                pair[t - 1].setdefault(key_pair, {})
                pair[t - 1][key_pair][r_next] = pair[t - 1][key_pair].get(r_next, 0.0) + mass
                walk(x_path + [x2], prob2)

    for x0 in range(al.x_sizes[i]):
        prob0 = pa * instance.source.init[i][:, x0]
        if prob0.any():
            walk([x0], prob0)

    max_dev = 0.0
    n_checked = 0
    for t in range(T - 1):
        for (r_hist, z_hist), dist in full[t].items():
            agg = pair[t][(r_hist[-1], z_hist[-1])]
            total_f = sum(dist.values())
            total_a = sum(agg.values())
            support = set(dist) | set(agg)
            dev = max(
                abs(dist.get(r, 0.0) / total_f - agg.get(r, 0.0) / total_a) for r in support
            )
            max_dev = max(max_dev, dev)
            n_checked += 1
    return {
        "max_deviation": max_dev,
        "histories_checked": n_checked,
        "tolerance": tol,
        "passed": bool(max_dev <= tol),
    }


def corrupted_a_update(prev, x_prev, x_curr, kernel_i, project=None):
    """Negative control for the Markov check: drops the prior-belief factor."""
    return beliefs.normalize(np.array(kernel_i[:, x_prev, x_curr]))


# ---------------------------------------------------------------------------
# No gain from randomized encoding.
# ---------------------------------------------------------------------------


def verify_no_randomization_gain(instance: Instance, budget: SearchBudget | None = None,
                                 n_mixtures: int = 50, seed: int = 0,
                                 max_components: int = 4, workers: int = 1) -> dict:
    """Random encoder-1 mixtures never beat the deterministic optimum.

    Fixes the other agents at the globally optimal witness (explicit
    decoder included, so the cost is linear in encoder 1's mixture),
    computes the deterministic minimum over encoder-1 strategies, then
    samples mixtures and checks both the no-gain bound and exact mixture
    linearity.
    """
    budget = budget or SearchBudget()
    _, witness, counts = enumerate_global_optimum(instance, budget, workers)
    strategies = enumerate_encoder_strategies(instance, 0)
    costs = []
    for tables in strategies:
        asm = engine.SystemAssembly(
            instance=instance,
            encoders=(policies.GeneralEncoder(stages=tables), witness.encoders[1]),
            decoder=witness.decoder,
            receiver=witness.receiver,
        )
        costs.append(engine.expected_distortion_exact(asm, budget.max_atoms).total)
    costs = np.array(costs)
    det_min = float(costs.min())

    rng = np.random.default_rng(seed)
    worst_margin = np.inf
    max_linearity_gap = 0.0
    for _ in range(n_mixtures):
        k = int(rng.integers(2, max_components + 1))
        idx = rng.choice(len(strategies), size=min(k, len(strategies)), replace=False)
        w = rng.random(len(idx))
        w = w / w.sum()
        mixture = policies.RandomizedEncoder(
            components=tuple(policies.GeneralEncoder(stages=strategies[q]) for q in idx),
            weights=w,
        )
        asm = engine.SystemAssembly(
            instance=instance,
            encoders=(mixture, witness.encoders[1]),
            decoder=witness.decoder,
            receiver=witness.receiver,
        )
        mix_cost = engine.expected_distortion_exact(asm, budget.max_atoms).total
        lin = float(np.dot(w, costs[idx]))
        worst_margin = min(worst_margin, mix_cost - det_min)
        max_linearity_gap = max(max_linearity_gap, abs(mix_cost - lin))
    return {
        "deterministic_min": det_min,
        "worst_margin": float(worst_margin),
        "max_linearity_gap": float(max_linearity_gap),
        "mixtures": n_mixtures,
        "counts": counts,
        "passed": bool(worst_margin >= -GAP_TOL),
    }
