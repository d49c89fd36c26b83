"""Belief objects and their recursions.

Four conditional distributions drive everything downstream:

* an encoder's posterior on the latent coupling variable given its own
  observation history (updated multiplicatively by the transition
  likelihood),
* an encoder's posterior on the receiver's separated memory given its own
  transmitted symbols (pushed through channel noise and the memory rule),
* the receiver's posterior on the full source state given its current
  evidence (computed here directly from the joint law, as the reference
  definition),
* the coordinator's posterior over the encoder's (observation, belief)
  pair under noiseless feedthrough, together with the induced stage cost.

All outputs are renormalized after every update; conditioning on an event
of probability zero raises ImpossibleEvidenceError.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleEvidenceError
from .model import PERFECT_MEMORY, Instance

PMF_TOL = 1e-9
DEDUP_TOL = 1e-9


def normalize(weights: np.ndarray) -> np.ndarray:
    total = float(weights.sum())
    if total <= 0.0 or not np.isfinite(total):
        raise ImpossibleEvidenceError("conditioning event has probability zero")
    return weights / total


def is_pmf(weights, tol=PMF_TOL) -> bool:
    w = np.asarray(weights, dtype=float)
    return bool(np.all(w >= 0) and abs(w.sum() - 1.0) <= tol)


class CanonicalBeliefSet:
    """Interned list of distinct pmf vectors, deduplicated in sup norm.

    Reachable beliefs are exact rationals in principle; float arithmetic
    makes a tolerance necessary. Interning mutates shared state, so build
    these in a single-threaded enumeration phase.
    """

    def __init__(self, dim: int, tol: float = DEDUP_TOL):
        self.dim = dim
        self.tol = tol
        self._items: list[np.ndarray] = []

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx: int) -> np.ndarray:
        return self._items[idx]

    def __iter__(self):
        return iter(self._items)

    def find(self, b) -> int | None:
        b = np.asarray(b, dtype=float)
        for idx, item in enumerate(self._items):
            if np.max(np.abs(item - b)) <= self.tol:
                return idx
        return None

    def intern(self, b) -> int:
        idx = self.find(b)
        if idx is not None:
            return idx
        b = np.array(b, dtype=float)
        b.flags.writeable = False
        self._items.append(b)
        return len(self._items) - 1

    def lookup(self, b) -> int:
        idx = self.find(b)
        if idx is None:
            raise KeyError(f"belief {b} not interned")
        return idx


class BeliefGrid:
    """Uniform grid projection on [0, 1] for the binary latent variable.

    Snaps a two-point belief to the nearest of ``resolution + 1`` evenly
    spaced grid points. This is an approximation device only; no error
    bound is claimed.
    """

    def __init__(self, resolution: int):
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        self.resolution = resolution

    def __call__(self, b: np.ndarray) -> np.ndarray:
        if b.shape != (2,):
            raise ValueError("grid projection is defined for binary latent alphabets")
        p = round(float(b[0]) * self.resolution) / self.resolution
        return np.array([p, 1.0 - p])


# ---------------------------------------------------------------------------
# Encoder belief on the latent variable.
# ---------------------------------------------------------------------------


def init_a_belief(x_1: int, a_prior: np.ndarray, init_i: np.ndarray, project=None) -> np.ndarray:
    """Posterior on the latent variable after the first observation."""
    b = normalize(a_prior * init_i[:, x_1])
    return project(b) if project is not None else b


def update_a_belief(prev, x_prev: int, x_curr: int, kernel_i, project=None) -> np.ndarray:
    """One Bayes step: reweight by the per-latent transition likelihood.

    ``kernel_i`` has shape (A, X, X); rows are P(x_curr | a, x_prev).
    """
    b = normalize(prev * kernel_i[:, x_prev, x_curr])
    return project(b) if project is not None else b


def a_belief_along(x_path, a_prior, init_i, kernels_i, project=None):
    """Beliefs after each prefix of an observation path (list of length len(x_path))."""
    out = [init_a_belief(x_path[0], a_prior, init_i, project)]
    for t in range(1, len(x_path)):
        out.append(update_a_belief(out[-1], x_path[t - 1], x_path[t], kernels_i[t - 1], project))
    return out


# ---------------------------------------------------------------------------
# Encoder belief on the receiver's separated memory.
# ---------------------------------------------------------------------------


def initial_memory_belief(m_size: int) -> np.ndarray:
    """Point mass on the dummy initial memory (index m_size stands for it).

    The stage-1 memory belief is not a pmf in the paper's convention; the
    sentinel slot makes it one without changing any downstream quantity.
    """
    mu = np.zeros(m_size + 1)
    mu[m_size] = 1.0
    return mu


def update_memory_belief(prev, z_prev: int, channel_prev, rule_prev) -> np.ndarray:
    """Push the memory belief through channel noise and the update rule.

    ``rule_prev`` is the update applied after the previous stage: shape
    (Y,) for the first stage (memory starts at the dummy value), (M, Y)
    afterwards. The result lives on the memory alphabet plus a zero-weight
    sentinel slot.
    """
    m_size = prev.shape[0] - 1
    out = np.zeros(m_size + 1)
    noise = channel_prev[z_prev]
    if rule_prev.ndim == 1:
        for y, py in enumerate(noise):
            out[rule_prev[y]] += prev[m_size] * py
    else:
        for m_from in range(m_size):
            w = prev[m_from]
            if w == 0.0:
                continue
            for y, py in enumerate(noise):
                out[rule_prev[m_from, y]] += w * py
    return out


def memory_belief_along(z_path, channels_i, rules_i, m_size):
    """Memory beliefs held at stages 1..len(z_path)+1 (stage-1 entry is the sentinel mass)."""
    out = [initial_memory_belief(m_size)]
    for t, z in enumerate(z_path):
        out.append(update_memory_belief(out[-1], z, channels_i[t], rules_i[t]))
    return out


# ---------------------------------------------------------------------------
# Receiver belief, computed directly from the joint law.
# ---------------------------------------------------------------------------


def _memory_after(y_path, rules_i, mode, y_size):
    """Memory content after consuming y_path (index form; () history for perfect mode)."""
    if mode == PERFECT_MEMORY:
        m = 0
        for y in y_path:
            m = m * y_size + y
        return m
    m = None
    for t, y in enumerate(y_path):
        m = rules_i[t][y] if t == 0 else rules_i[t][m, y]
    return m


def receiver_belief_direct(instance: Instance, encoders, ys, ms, t, receiver=None):
    """Exact receiver posterior on the source state by full path enumeration.

    This is the by-definition computation of the receiver belief: the
    joint over the latent variable, all observation paths, and all channel
    noise outcomes is enumerated, then conditioned on the stage-t evidence
    (ys[i], ms[i]): the symbols received at stage t and the memory
    contents carried into stage t. For perfect memory, ms[i] is the
    radix-|Y| index of the length-(t-1) received history. Intended for
    desk-scale instances only.

    Returns the posterior over (x^1_t, ..., x^n_t, a) as an array of shape
    x_sizes + (a_size,).
    """
    from . import policies as _policies

    al = instance.alphabets
    rec = receiver if receiver is not None else instance.receiver
    drivers = [
        _policies.make_driver(enc, instance, i, receiver=rec) for i, enc in enumerate(encoders)
    ]
    perfect = rec.mode == PERFECT_MEMORY

    # Per encoder: weights over (x_t, y_t, m_{t-1}) consistent with its evidence,
    # obtained by brute enumeration of that encoder's (x-path, y-path) pairs.
    per_enc = []
    for i in range(al.n_encoders):
        acc = np.zeros((al.a_size, al.x_sizes[i]))
        for x_path in itertools.product(range(al.x_sizes[i]), repeat=t):
            px = np.array(instance.source.init[i][:, x_path[0]])
            for s in range(1, t):
                px = px * instance.source.kernels[i][s - 1][:, x_path[s - 1], x_path[s]]
            if not px.any():
                continue
            starts = drivers[i].start(x_path[0])
            for node, w_node in starts:
                z_path = []
                cur = node
                for s in range(1, t + 1):
                    z_path.append(drivers[i].emit(cur, s))
                    if s < t:
                        cur = drivers[i].advance(cur, s, x_path[s])
                for y_path in itertools.product(range(al.y_sizes[i]), repeat=t):
                    if y_path[-1] != ys[i]:
                        continue
                    py = 1.0
                    for s in range(t):
                        py *= instance.channels.matrices[i][s][z_path[s], y_path[s]]
                        if py == 0.0:
                            break
                    if py == 0.0:
                        continue
                    m_prev = _memory_after(y_path[:-1], None if perfect else rec.memory_rules[i],
                                           rec.mode, al.y_sizes[i])
                    if perfect:
                        if m_prev != ms[i]:
                            continue
                    elif t > 1 and m_prev != ms[i]:
                        continue
                    acc[:, x_path[-1]] += px * w_node * py
        per_enc.append(acc)

    # P(x_1..x_n, a | evidence) is proportional to prior(a) * prod_i acc_i[a, x_i]
    shape = tuple(al.x_sizes) + (al.a_size,)
    out = np.zeros(shape)
    for combo in itertools.product(*(range(s) for s in al.x_sizes)):
        w = np.array(instance.source.a_prior)
        for i in range(al.n_encoders):
            w = w * per_enc[i][:, combo[i]]
        out[combo] = w
    return normalize(out)


# ---------------------------------------------------------------------------
# Coordinator information state for the noiseless / perfect-memory problem.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XiState:
    """Coordinator's posterior over the encoder's (observation, belief) pair.

    ``support`` holds (x, belief-id) pairs referring to a CanonicalBeliefSet;
    stage 0 is the empty sentinel mirroring the convention that the initial
    information state is null.
    """

    stage: int
    support: tuple[tuple[int, int], ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def as_dict(self):
        return dict(zip(self.support, self.weights.tolist()))

    def close_to(self, other, tol=DEDUP_TOL) -> bool:
        return (
            self.stage == other.stage
            and self.support == other.support
            and self.weights.shape == other.weights.shape
            and np.max(np.abs(self.weights - other.weights), initial=0.0) <= tol
        )


XI_SENTINEL_STAGE = 0


def xi_sentinel() -> XiState:
    return XiState(stage=XI_SENTINEL_STAGE, support=(), weights=np.zeros(0))


def xi_successor_support(prev: XiState, source, encoder_index, belief_set, project=None):
    """One-step predictive over (x, belief) pairs entering stage prev.stage + 1.

    Returns (support, weights): the positive-probability pairs, with new
    belief values interned into ``belief_set``. This is the domain on which
    a stage-(prev.stage + 1) partial encoding function must be defined.
    """
    t = prev.stage + 1
    a_prior = source.a_prior
    init_i = source.init[encoder_index]
    acc: dict[tuple[int, int], float] = {}
    if prev.stage == XI_SENTINEL_STAGE and not prev.support:
        x_size = init_i.shape[1]
        for x in range(x_size):
            p = float(a_prior @ init_i[:, x])
            if p > 0.0:
                b = init_a_belief(x, a_prior, init_i, project)
                key = (x, belief_set.intern(b))
                acc[key] = acc.get(key, 0.0) + p
    else:
        kernel = source.kernels[encoder_index][t - 2]
        x_size = kernel.shape[2]
        for (x_prev, b_prev_id), w in zip(prev.support, prev.weights):
            b_prev = belief_set[b_prev_id]
            for x in range(x_size):
                p = float(b_prev @ kernel[:, x_prev, x])
                if w * p > 0.0:
                    b = update_a_belief(b_prev, x_prev, x, kernel, project)
                    key = (x, belief_set.intern(b))
                    acc[key] = acc.get(key, 0.0) + w * p
    support = tuple(sorted(acc))
    weights = np.array([acc[k] for k in support])
    return support, weights


def update_xi(prev: XiState, z1: int, w, source, encoder_index, belief_set, project=None) -> XiState:
    """Condition the one-step predictive on the transmitted symbol.

    ``w`` maps (x, belief-id) pairs from the successor support to channel
    symbols; pairs mapped to a different symbol than the observed ``z1``
    are discarded and the rest renormalized.
    """
    support, weights = xi_successor_support(prev, source, encoder_index, belief_set, project)
    keep = [idx for idx, pair in enumerate(support) if w(*pair) == z1]
    if not keep:
        raise ImpossibleEvidenceError(f"symbol {z1} has probability zero at stage {prev.stage + 1}")
    new_support = tuple(support[idx] for idx in keep)
    new_weights = normalize(weights[keep])
    return XiState(stage=prev.stage + 1, support=new_support, weights=new_weights)


def symbol_distribution(prev: XiState, w, source, encoder_index, belief_set, z_size, project=None):
    """P(z | information state, partial function): the coordinator's observation law."""
    support, weights = xi_successor_support(prev, source, encoder_index, belief_set, project)
    probs = np.zeros(z_size)
    for pair, p in zip(support, weights):
        probs[w(*pair)] += p
    return probs


# ---------------------------------------------------------------------------
# Forward tables for a fixed encoder and the induced receiver belief.
# ---------------------------------------------------------------------------


class FixedEncoderForward:
    """Per-latent forward law of a fixed encoder over noiseless feedthrough.

    ``table(t)`` maps each positive-probability transmitted history of
    length t to an (A, X_i) array of P(history, x_t | a). Precomputed once
    and shared read-only by receiver-belief and stage-cost evaluation.
    """

    def __init__(self, instance: Instance, policy, encoder_index: int):
        from . import policies as _policies

        self.instance = instance
        self.encoder_index = encoder_index
        al = instance.alphabets
        i = encoder_index
        driver = _policies.make_driver(policy, instance, i, receiver=instance.receiver)
        T = al.horizon
        A = al.a_size
        Xi = al.x_sizes[i]

        # states: (node, z-history) -> (A,) vector of P(x-path leading here | a)
        tables = []
        state: dict[tuple, np.ndarray] = {}
        for x in range(Xi):
            for node, w_node in driver.start(x):
                z = driver.emit(node, 1)
                key = (node, (z,), x)
                state[key] = state.get(key, np.zeros(A)) + instance.source.init[i][:, x] * w_node
        for t in range(1, T + 1):
            tab: dict[tuple, np.ndarray] = {}
            for (node, zh, x), vec in state.items():
                arr = tab.setdefault(zh, np.zeros((A, Xi)))
                arr[:, x] += vec
            tables.append(tab)
            if t == T:
                break
            nxt: dict[tuple, np.ndarray] = {}
            kernel = instance.source.kernels[i][t - 1]
            for (node, zh, x), vec in state.items():
                for x2 in range(Xi):
                    vec2 = vec * kernel[:, x, x2]
                    if not vec2.any():
                        continue
                    node2 = driver.advance(node, t, x2)
                    z2 = driver.emit(node2, t + 1)
                    key = (node2, zh + (z2,), x2)
                    if key in nxt:
                        nxt[key] = nxt[key] + vec2
                    else:
                        nxt[key] = vec2
            state = nxt
        self._tables = tables

    def table(self, t: int) -> dict[tuple, np.ndarray]:
        return self._tables[t - 1]


def xi_marginal_on_latent(xi: XiState, belief_set, a_size: int) -> np.ndarray:
    """q[x, a] = P(x, a | coordinator information): mixes beliefs over the support."""
    xs = 1 + max((x for x, _ in xi.support), default=0)
    q = np.zeros((xs, a_size))
    for (x, b_id), wgt in zip(xi.support, xi.weights):
        q[x] += wgt * belief_set[b_id]
    return q


def psi_from_xi(xi: XiState, z2_history, forward2: FixedEncoderForward, belief_set) -> np.ndarray:
    """Receiver belief from the coordinator state and the other channel's history.

    Factorizes as P(z^2-history, x^2 | a) times the latent-weighted
    coordinator marginal; valid when the second encoder's strategy is
    fixed. Returns an array of shape (X1, X2, A), normalized.
    """
    inst = forward2.instance
    al = inst.alphabets
    t = len(z2_history)
    tab = forward2.table(t)
    if tuple(z2_history) not in tab:
        raise ImpossibleEvidenceError(f"history {z2_history} has probability zero")
    f2 = tab[tuple(z2_history)]  # (A, X2)
    q = xi_marginal_on_latent(xi, belief_set, al.a_size)  # (X1, A)
    psi = np.einsum("ia,aj->ija", q, f2)
    return normalize(psi)


def coordinator_stage_cost(xi: XiState, forward2: FixedEncoderForward, rho_t, belief_set) -> float:
    """Expected stage distortion given the coordinator's information.

    Averages, over the second channel's histories, the cost of the
    estimate that is optimal for the induced receiver belief. The argmin
    uses unnormalized weights; scale invariance makes that equal to
    minimizing against the normalized belief, with ties broken toward the
    smallest estimate index.
    """
    inst = forward2.instance
    al = inst.alphabets
    t = xi.stage
    q = xi_marginal_on_latent(xi, belief_set, al.a_size)  # (X1, A)
    total = 0.0
    for f2 in forward2.table(t).values():
        costs = np.einsum("ia,aj,ijas->s", q, f2, rho_t)
        total += float(costs.min())
    return total
