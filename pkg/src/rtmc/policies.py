"""Decision rules: encoders, partial-encoding functions, selection rules,
memory updates, and the posterior-optimal decoder.

Encoder tables cover reachable arguments only; querying an argument that
never occurs with positive probability raises MissingEntryError rather
than returning an arbitrary symbol. This keeps policy-space enumeration
counting exactly the decision-relevant degrees of freedom.

Every policy is evaluated through a small driver protocol:

* ``start(x)`` returns [(node, weight)] for the first observation,
* ``emit(node, t)`` returns the transmitted symbol at stage t,
* ``advance(node, t, x_next)`` returns the stage-(t+1) node.

Deterministic policies return a single unit-weight start node; behavioral
mixtures spread the start over their components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import beliefs
from .errors import MissingEntryError, ModelError
from .model import FINITE_MEMORY, PERFECT_MEMORY, Instance, ReceiverSpec


# ---------------------------------------------------------------------------
# Policy classes.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneralEncoder:
    """Full-history table: per stage, (x-history, z-history) -> symbol."""

    stages: tuple[dict, ...]

    def emit(self, x_hist, z_hist, t):
        try:
            return self.stages[t - 1][(tuple(x_hist), tuple(z_hist))]
        except KeyError:
            raise MissingEntryError(f"history {(x_hist, z_hist)} unreachable at stage {t}") from None


@dataclass(frozen=True)
class StructuredEncoder:
    """Stage table on (observation, latent-belief id, memory-belief id).

    The companion belief sets give meaning to the ids; they are shared
    with whatever machinery built the table.
    """

    stages: tuple[dict, ...]
    b_set: beliefs.CanonicalBeliefSet
    mu_set: beliefs.CanonicalBeliefSet


@dataclass(frozen=True)
class PartialEncoder:
    """One partial-encoding function: (observation, belief id) -> symbol."""

    support: tuple[tuple[int, int], ...]
    symbols: tuple[int, ...]

    def __call__(self, x, b_id):
        try:
            return self.symbols[self.support.index((x, b_id))]
        except ValueError:
            raise MissingEntryError(f"pair {(x, b_id)} outside support") from None

    def as_dict(self):
        return dict(zip(self.support, self.symbols))


@dataclass(frozen=True)
class PartialFunctionEncoder:
    """Coordinator-driven encoder: one partial function per transmitted history.

    ``stages[t-1]`` maps each reachable z-history of length t-1 to the
    partial function used at stage t. Equivalent to a selection rule for
    the coordinator, restricted to histories that actually occur.
    """

    stages: tuple[dict, ...]
    b_set: beliefs.CanonicalBeliefSet

    def partial(self, z_hist, t) -> PartialEncoder:
        try:
            return self.stages[t - 1][tuple(z_hist)]
        except KeyError:
            raise MissingEntryError(f"history {z_hist} unreachable at stage {t}") from None


@dataclass(frozen=True)
class CoordinatorEncoder:
    """Stationary-domain encoder from a Markov selection rule.

    Encodes with f_t(x, b, xi) = G_t(xi)(x, b) while advancing the
    information state along the graph that enumerated the reachable
    states. ``graph`` is a coordinator.ReachableXiGraph.
    """

    rules: tuple[dict, ...]  # per stage: xi-id -> PartialEncoder
    graph: object
    b_set: beliefs.CanonicalBeliefSet

    def partial(self, xi_id, t) -> PartialEncoder:
        try:
            return self.rules[t - 1][xi_id]
        except KeyError:
            raise MissingEntryError(f"state {xi_id} has no rule at stage {t}") from None


@dataclass(frozen=True)
class RandomizedEncoder:
    """Finite behavioral mixture of deterministic encoders.

    The component is drawn once, independently of the system, before the
    first stage; thereafter the realized component plays deterministically.
    """

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class CoordinatorRule:
    """Selection rule for the coordinator.

    History form: stages[t-1] maps the transmitted history (length t-1)
    to the stage-t partial function; past selections are recoverable from
    the history under the rule itself, so they are not part of the key.
    Markov form: stages[t-1] maps a stage-(t-1) information-state id to
    the stage-t partial function.
    """

    form: str  # "history" | "markov"
    stages: tuple[dict, ...]

    def partial(self, key, t) -> PartialEncoder:
        try:
            return self.stages[t - 1][key]
        except KeyError:
            raise MissingEntryError(f"argument {key} unreachable at stage {t}") from None


@dataclass(frozen=True)
class TauDecoder:
    """Marker: decode by minimizing posterior expected distortion."""


@dataclass(frozen=True)
class ExplicitDecoder:
    """Per-stage tables keyed by (y^1, ..., y^n, m^1, ..., m^n).

    ``offpath`` lists cells that were completed with a default estimate
    because their evidence has probability zero under the policies the
    table was built for.
    """

    stages: tuple[dict, ...]
    offpath: tuple = ()

    def estimate(self, cell, t):
        try:
            return self.stages[t - 1][cell]
        except KeyError:
            raise MissingEntryError(f"evidence {cell} not covered at stage {t}") from None


# ---------------------------------------------------------------------------
# Operations.
# ---------------------------------------------------------------------------


def decode_tau(psi, rho_t) -> int:
    """Estimate minimizing expected distortion under ``psi``.

    ``psi`` is a pmf over the source state space (any shape); ``rho_t``
    adds a trailing estimate axis. Ties break toward the smallest
    estimate index. The argmin is invariant to positive scaling of either
    argument, so unnormalized weights are accepted.
    """
    psi = np.asarray(psi, dtype=float)
    rho_t = np.asarray(rho_t, dtype=float)
    costs = psi.reshape(-1) @ rho_t.reshape(-1, rho_t.shape[-1])
    return int(np.argmin(costs))


def structured_encode(enc: StructuredEncoder, state, t) -> int:
    """Table lookup for a (x, b-id, mu-id) triple reachable at stage t."""
    try:
        return enc.stages[t - 1][tuple(state)]
    except KeyError:
        raise MissingEntryError(f"state {state} unreachable at stage {t}") from None


def coordinator_to_structured(rules: CoordinatorRule, graph, b_set) -> CoordinatorEncoder:
    """Bind a Markov selection rule to its graph as a runnable encoder."""
    if rules.form != "markov":
        raise ModelError("expected a Markov-form selection rule")
    return CoordinatorEncoder(rules=rules.stages, graph=graph, b_set=b_set)


def detection_memory_rule(alphabets, blank: int = 0) -> ReceiverSpec:
    """Latch rules: each memory holds the first non-blank received symbol.

    Requires m_sizes[i] == y_sizes[i] so the memory can store a received
    symbol, with ``blank`` doubling as the empty-memory value.
    """
    rules = []
    for i in range(alphabets.n_encoders):
        y = alphabets.y_sizes[i]
        if alphabets.m_sizes[i] != y:
            raise ModelError(f"encoder {i}: latch memory needs m_size == y_size")
        if not 0 <= blank < y:
            raise ModelError("blank symbol outside the received alphabet")
        first = np.arange(y, dtype=np.int64)  # memory starts blank: take y
        later = np.empty((y, y), dtype=np.int64)
        for m in range(y):
            later[m, :] = np.arange(y) if m == blank else m
        stages = [first] + [later for _ in range(max(alphabets.horizon - 2, 0))]
        rules.append(tuple(stages[: max(alphabets.horizon - 1, 0)]))
    return ReceiverSpec(mode=FINITE_MEMORY, memory_rules=tuple(rules))


def randomize_encoder(mix) -> RandomizedEncoder:
    """Behavioral mixture from (encoder, weight) pairs; weights must form a pmf."""
    components = tuple(enc for enc, _ in mix)
    weights = np.array([w for _, w in mix], dtype=float)
    if not beliefs.is_pmf(weights):
        raise ModelError("mixture weights must be a probability mass function")
    return RandomizedEncoder(components=components, weights=weights)


def random_general_encoder(instance: Instance, i: int, rng) -> GeneralEncoder:
    """Uniformly random symbols on every reachable history (for fixed-encoder checks)."""
    al = instance.alphabets
    pa = instance.source.a_prior
    z_size = al.z_sizes[i]
    stages = []
    cur = []
    for x in range(al.x_sizes[i]):
        v = pa * instance.source.init[i][:, x]
        if v.any():
            cur.append(((x,), (), v))
    for t in range(1, al.horizon + 1):
        table = {}
        withz = []
        for xh, zh, v in cur:
            z = int(rng.integers(z_size))
            table[(xh, zh)] = z
            withz.append((xh, zh, z, v))
        stages.append(table)
        if t == al.horizon:
            break
        kernel_t = instance.source.kernels[i][t - 1]
        cur = []
        for xh, zh, z, v in withz:
            for x2 in range(al.x_sizes[i]):
                v2 = v * kernel_t[:, xh[-1], x2]
                if v2.any():
                    cur.append((xh + (x2,), zh + (z,), v2))
    return GeneralEncoder(stages=tuple(stages))


# ---------------------------------------------------------------------------
# Drivers.
# ---------------------------------------------------------------------------


class _GeneralDriver:
    def __init__(self, enc: GeneralEncoder):
        self.enc = enc

    def start(self, x):
        return [(((x,), ()), 1.0)]

    def emit(self, node, t):
        x_hist, z_hist = node
        return self.enc.emit(x_hist, z_hist, t)

    def advance(self, node, t, x_next):
        x_hist, z_hist = node
        z = self.enc.emit(x_hist, z_hist, t)
        return (x_hist + (x_next,), z_hist + (z,))


class _StructuredDriver:
    """Runs a structured encoder by updating both belief coordinates."""

    def __init__(self, enc: StructuredEncoder, instance: Instance, i: int, receiver):
        self.enc = enc
        self.instance = instance
        self.i = i
        self.receiver = receiver
        if receiver.mode != FINITE_MEMORY:
            raise ModelError("structured encoders are defined for the finite-memory receiver")

    def start(self, x):
        b = beliefs.init_a_belief(x, self.instance.source.a_prior, self.instance.source.init[self.i])
        mu = beliefs.initial_memory_belief(self.instance.alphabets.m_sizes[self.i])
        node = (x, self.enc.b_set.intern(b), self.enc.mu_set.intern(mu))
        return [(node, 1.0)]

    def emit(self, node, t):
        return structured_encode(self.enc, node, t)

    def advance(self, node, t, x_next):
        x, b_id, mu_id = node
        z = structured_encode(self.enc, node, t)
        kernel = self.instance.source.kernels[self.i][t - 1]
        b = beliefs.update_a_belief(self.enc.b_set[b_id], x, x_next, kernel)
        mu = beliefs.update_memory_belief(
            self.enc.mu_set[mu_id],
            z,
            self.instance.channels.matrices[self.i][t - 1],
            self.receiver.memory_rules[self.i][t - 1],
        )
        return (x_next, self.enc.b_set.intern(b), self.enc.mu_set.intern(mu))


class _PartialTreeDriver:
    def __init__(self, enc: PartialFunctionEncoder, instance: Instance, i: int):
        self.enc = enc
        self.instance = instance
        self.i = i

    def start(self, x):
        b = beliefs.init_a_belief(x, self.instance.source.a_prior, self.instance.source.init[self.i])
        return [((x, self.enc.b_set.intern(b), ()), 1.0)]

    def emit(self, node, t):
        x, b_id, z_hist = node
        return self.enc.partial(z_hist, t)(x, b_id)

    def advance(self, node, t, x_next):
        x, b_id, z_hist = node
        z = self.emit(node, t)
        kernel = self.instance.source.kernels[self.i][t - 1]
        b = beliefs.update_a_belief(self.enc.b_set[b_id], x, x_next, kernel)
        return (x_next, self.enc.b_set.intern(b), z_hist + (z,))


class _CoordinatorDriver:
    def __init__(self, enc: CoordinatorEncoder, instance: Instance, i: int):
        self.enc = enc
        self.instance = instance
        self.i = i

    def start(self, x):
        b = beliefs.init_a_belief(x, self.instance.source.a_prior, self.instance.source.init[self.i])
        return [((x, self.enc.b_set.intern(b), self.enc.graph.sentinel_id), 1.0)]

    def emit(self, node, t):
        x, b_id, xi_id = node
        return self.enc.partial(xi_id, t)(x, b_id)

    def advance(self, node, t, x_next):
        x, b_id, xi_id = node
        w = self.enc.partial(xi_id, t)
        z = w(x, b_id)
        kernel = self.instance.source.kernels[self.i][t - 1]
        b = beliefs.update_a_belief(self.enc.b_set[b_id], x, x_next, kernel)
        next_id = self.enc.graph.step(t, xi_id, w, z)
        return (x_next, self.enc.b_set.intern(b), next_id)


class _RandomizedDriver:
    def __init__(self, enc: RandomizedEncoder, inner):
        self.inner = inner
        self.weights = enc.weights

    def start(self, x):
        out = []
        for idx, drv in enumerate(self.inner):
            w = float(self.weights[idx])
            if w == 0.0:
                continue
            for node, p in drv.start(x):
                out.append(((idx, node), w * p))
        return out

    def emit(self, node, t):
        idx, sub = node
        return self.inner[idx].emit(sub, t)

    def advance(self, node, t, x_next):
        idx, sub = node
        return (idx, self.inner[idx].advance(sub, t, x_next))


def make_driver(policy, instance: Instance, encoder_index: int, receiver=None):
    receiver = receiver if receiver is not None else instance.receiver
    if isinstance(policy, GeneralEncoder):
        return _GeneralDriver(policy)
    if isinstance(policy, StructuredEncoder):
        return _StructuredDriver(policy, instance, encoder_index, receiver)
    if isinstance(policy, PartialFunctionEncoder):
        return _PartialTreeDriver(policy, instance, encoder_index)
    if isinstance(policy, CoordinatorEncoder):
        return _CoordinatorDriver(policy, instance, encoder_index)
    if isinstance(policy, RandomizedEncoder):
        inner = [make_driver(c, instance, encoder_index, receiver) for c in policy.components]
        return _RandomizedDriver(policy, inner)
    raise ModelError(f"unsupported encoder policy {type(policy).__name__}")


# ---------------------------------------------------------------------------
# Serialization: stage-indexed tables with explicit key tuples.
# ---------------------------------------------------------------------------


def _belief_set_to_list(bset: beliefs.CanonicalBeliefSet):
    return [b.tolist() for b in bset]


def _belief_set_from_list(items, dim):
    bset = beliefs.CanonicalBeliefSet(dim)
    for b in items:
        bset.intern(np.asarray(b, dtype=float))
    return bset


def policy_to_dict(policy) -> dict:
    if isinstance(policy, GeneralEncoder):
        return {
            "kind": "general",
            "stages": [
                [[list(xh), list(zh), int(z)] for (xh, zh), z in sorted(stage.items())]
                for stage in policy.stages
            ],
        }
    if isinstance(policy, StructuredEncoder):
        return {
            "kind": "structured",
            "b_set": _belief_set_to_list(policy.b_set),
            "mu_set": _belief_set_to_list(policy.mu_set),
            "stages": [
                [[list(key), int(z)] for key, z in sorted(stage.items())]
                for stage in policy.stages
            ],
        }
    if isinstance(policy, PartialFunctionEncoder):
        return {
            "kind": "partial_tree",
            "b_set": _belief_set_to_list(policy.b_set),
            "stages": [
                [[list(zh), [list(p) for p in w.support], list(w.symbols)]
                 for zh, w in sorted(stage.items())]
                for stage in policy.stages
            ],
        }
    if isinstance(policy, RandomizedEncoder):
        return {
            "kind": "randomized",
            "weights": policy.weights.tolist(),
            "components": [policy_to_dict(c) for c in policy.components],
        }
    if isinstance(policy, TauDecoder):
        return {"kind": "decoder_tau"}
    if isinstance(policy, ExplicitDecoder):
        return {
            "kind": "decoder_explicit",
            "offpath": [[int(t), list(cell)] for t, cell in policy.offpath],
            "stages": [
                [[list(cell), int(s)] for cell, s in sorted(stage.items())]
                for stage in policy.stages
            ],
        }
    if isinstance(policy, CoordinatorRule):
        def enc_key(key):
            if policy.form == "markov":
                return int(key)
            return list(key)

        return {
            "kind": "coordinator_rule",
            "form": policy.form,
            "stages": [
                [[enc_key(key), [list(p) for p in w.support], list(w.symbols)]
                 for key, w in sorted(stage.items())]
                for stage in policy.stages
            ],
        }
    raise ModelError(f"cannot serialize policy {type(policy).__name__}")


def policy_from_dict(d: dict, a_size: int | None = None, m_size: int | None = None):
    kind = d.get("kind")
    if kind == "general":
        stages = tuple(
            {(tuple(xh), tuple(zh)): int(z) for xh, zh, z in stage} for stage in d["stages"]
        )
        return GeneralEncoder(stages=stages)
    if kind == "structured":
        if a_size is None or m_size is None:
            a_size = len(d["b_set"][0]) if d["b_set"] else 1
            m_size = len(d["mu_set"][0]) - 1 if d["mu_set"] else 1
        b_set = _belief_set_from_list(d["b_set"], a_size)
        mu_set = _belief_set_from_list(d["mu_set"], m_size + 1)
        stages = tuple({tuple(key): int(z) for key, z in stage} for stage in d["stages"])
        return StructuredEncoder(stages=stages, b_set=b_set, mu_set=mu_set)
    if kind == "partial_tree":
        a_size = a_size if a_size is not None else (len(d["b_set"][0]) if d["b_set"] else 1)
        b_set = _belief_set_from_list(d["b_set"], a_size)
        stages = tuple(
            {
                tuple(zh): PartialEncoder(
                    support=tuple((int(x), int(b)) for x, b in support),
                    symbols=tuple(int(s) for s in symbols),
                )
                for zh, support, symbols in stage
            }
            for stage in d["stages"]
        )
        return PartialFunctionEncoder(stages=stages, b_set=b_set)
    if kind == "randomized":
        comps = tuple(policy_from_dict(c, a_size, m_size) for c in d["components"])
        return RandomizedEncoder(components=comps, weights=np.asarray(d["weights"], dtype=float))
    if kind == "decoder_tau":
        return TauDecoder()
    if kind == "decoder_explicit":
        stages = tuple({tuple(cell): int(s) for cell, s in stage} for stage in d["stages"])
        offpath = tuple((int(t), tuple(cell)) for t, cell in d.get("offpath", []))
        return ExplicitDecoder(stages=stages, offpath=offpath)
    if kind == "coordinator_rule":
        form = d["form"]

        def dec_key(key):
            return int(key) if form == "markov" else tuple(key)

        stages = tuple(
            {
                dec_key(key): PartialEncoder(
                    support=tuple((int(x), int(b)) for x, b in support),
                    symbols=tuple(int(s) for s in symbols),
                )
                for key, support, symbols in stage
            }
            for stage in d["stages"]
        )
        return CoordinatorRule(form=form, stages=stages)
    raise ModelError(f"unknown policy kind {kind!r}")


def save_policy(policy, path):
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_policy(path, a_size=None, m_size=None):
    with open(path) as fh:
        return policy_from_dict(json.load(fh), a_size, m_size)
