"""Exact and Monte Carlo evaluation of a complete system.

The exact evaluator propagates the factored joint distribution forward:
conditioned on the latent variable, each encoder-channel-memory branch
evolves independently, so the state is one weighted node set per encoder
rather than a flat product over paths. Flat path enumeration is kept in
the test suite as an independent cross-check.

Evidence cells at stage t are tuples (y^1, ..., y^n, m^1, ..., m^n) where
m^i is the memory carried into stage t: index 0 (dummy) at stage 1, a
memory symbol afterwards, and the radix-|Y| index of the received history
in perfect-memory mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import beliefs, policies
from .errors import BudgetExceededError, ModelError
from .model import PERFECT_MEMORY, Instance, ReceiverSpec

DEFAULT_MAX_ATOMS = 10**8


@dataclass(frozen=True)
class SystemAssembly:
    """Instance plus strategy: per-encoder policies, memory rules, decoder.

    ``receiver`` overrides the instance's receiver spec when the memory
    rules are part of the strategy being evaluated; None uses the
    instance's own.
    """

    instance: Instance
    encoders: tuple
    decoder: object
    receiver: ReceiverSpec | None = None

    @property
    def effective_receiver(self) -> ReceiverSpec:
        return self.receiver if self.receiver is not None else self.instance.receiver


@dataclass(frozen=True)
class EvaluationReport:
    total: float
    per_stage: tuple[float, ...]
    method: str
    samples: int | None = None
    stderr: float | None = None
    seed: int | None = None

    def to_dict(self):
        out = {
            "total": self.total,
            "per_stage": list(self.per_stage),
            "method": self.method,
        }
        if self.method == "mc":
            out.update({"samples": self.samples, "stderr": self.stderr, "seed": self.seed})
        return out


def memory_axis_size(instance: Instance, receiver: ReceiverSpec, i: int, t: int) -> int:
    """Size of the m^i axis at stage t (memory carried into stage t)."""
    if t == 1:
        return 1
    if receiver.mode == PERFECT_MEMORY:
        return instance.alphabets.y_sizes[i] ** (t - 1)
    return instance.alphabets.m_sizes[i]


def _evidence_tables(assembly: SystemAssembly, max_atoms: int):
    """Per stage and encoder: arrays E[a, x_i, y_i, m_i] of joint weights.

    E sums over everything not shown, conditioned on nothing: it is the
    joint law of (x^i_t, y^i_t, m^i_{t-1}) and the latent variable for
    that branch, with the prior not yet applied.
    """
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    if inst.source.order != 1:
        raise ModelError("evaluation requires a first-order source (lift it first)")
    T = al.horizon
    A = al.a_size
    perfect = rec.mode == PERFECT_MEMORY
    drivers = [
        policies.make_driver(enc, inst, i, receiver=rec) for i, enc in enumerate(assembly.encoders)
    ]

    atoms = 0
    per_stage = [[] for _ in range(T)]
    for i in range(al.n_encoders):
        Xi, Yi = al.x_sizes[i], al.y_sizes[i]
        chan = inst.channels.matrices[i]
        # state: (node, x, m) -> vector over the latent alphabet
        state: dict[tuple, np.ndarray] = {}
        for x in range(Xi):
            vec0 = inst.source.init[i][:, x]
            if not vec0.any():
                continue
            for node, w in drivers[i].start(x):
                key = (node, x, 0)
                state[key] = state.get(key, 0.0) + vec0 * w
        for t in range(1, T + 1):
            mdim = memory_axis_size(inst, rec, i, t)
            atoms += len(state) * A
            if atoms > max_atoms:
                raise BudgetExceededError(
                    f"forward propagation exceeds atom budget ({atoms} > {max_atoms})",
                    count=atoms,
                )
            E = np.zeros((A, Xi, Yi, mdim))
            emitted = {}
            for (node, x, m), vec in state.items():
                z = drivers[i].emit(node, t)
                emitted[(node, x, m)] = z
                E[:, x, :, m] += vec[:, None] * chan[t - 1][z][None, :]
            per_stage[t - 1].append(E)
            if t == T:
                break
            kernel = inst.source.kernels[i][t - 1]
            rule = None if perfect else rec.memory_rules[i][t - 1]
            nxt: dict[tuple, np.ndarray] = {}
            for (node, x, m), vec in state.items():
                z = emitted[(node, x, m)]
                noise = chan[t - 1][z]
                # successor memory weights given this branch
                mem: dict[int, float] = {}
                for y, py in enumerate(noise):
                    if py == 0.0:
                        continue
                    if perfect:
                        m2 = m * Yi + y
                    elif t == 1:
                        m2 = int(rule[y])
                    else:
                        m2 = int(rule[m, y])
                    mem[m2] = mem.get(m2, 0.0) + float(py)
                for x2 in range(Xi):
                    vec2 = vec * kernel[:, x, x2]
                    if not vec2.any():
                        continue
                    node2 = drivers[i].advance(node, t, x2)
                    for m2, pm in mem.items():
                        key = (node2, x2, m2)
                        if key in nxt:
                            nxt[key] = nxt[key] + vec2 * pm
                        else:
                            nxt[key] = vec2 * pm
            state = nxt
    return per_stage


def stage_cell_posteriors(assembly: SystemAssembly, max_atoms: int = DEFAULT_MAX_ATOMS):
    """Per stage: dict mapping evidence cells to unnormalized joint weights.

    Each value is an array over (x^1, ..., x^n, a): the joint probability
    of that state and the cell's evidence. Normalizing a value gives the
    receiver belief at that cell; the weights themselves carry P(cell).
    Cells of probability zero are absent.
    """
    inst = assembly.instance
    al = inst.alphabets
    pa = inst.source.a_prior
    tables = _evidence_tables(assembly, max_atoms)
    out = []
    for t in range(1, al.horizon + 1):
        stage = {}
        per_enc_cells = []
        for i, E in enumerate(tables[t - 1]):
            mask = E.sum(axis=(0, 1))  # (Y, M)
            per_enc_cells.append([(y, m) for (y, m) in zip(*np.nonzero(mask))])
        for combo in itertools.product(*per_enc_cells):
            joint = pa
            for i, (y, m) in enumerate(combo):
                joint = np.einsum("...a,ax->...xa", joint, tables[t - 1][i][:, :, y, m])
            if joint.max() <= 0.0:
                continue
            cell = tuple(int(y) for y, _ in combo) + tuple(int(m) for _, m in combo)
            stage[cell] = joint
        out.append(stage)
    return out


def _stage_costs_from_cells(assembly: SystemAssembly, cells):
    inst = assembly.instance
    dec = assembly.decoder
    per_stage = []
    for t in range(1, inst.alphabets.horizon + 1):
        rho_t = inst.rho(t)
        rho_flat = rho_t.reshape(-1, rho_t.shape[-1])
        total = 0.0
        for cell, joint in cells[t - 1].items():
            costs = joint.reshape(-1) @ rho_flat
            if isinstance(dec, policies.TauDecoder):
                total += float(costs.min())
            else:
                total += float(costs[dec.estimate(cell, t)])
        per_stage.append(total)
    return per_stage


def expected_distortion_exact(
    assembly: SystemAssembly, max_atoms: int = DEFAULT_MAX_ATOMS
) -> EvaluationReport:
    """Exact objective value by forward propagation of the factored joint."""
    cells = stage_cell_posteriors(assembly, max_atoms)
    per_stage = _stage_costs_from_cells(assembly, cells)
    return EvaluationReport(
        total=float(sum(per_stage)), per_stage=tuple(per_stage), method="exact"
    )


def stage_state_marginals(assembly: SystemAssembly, max_atoms: int = DEFAULT_MAX_ATOMS):
    """Per-stage joint law of (x^1, ..., x^n, a): a probe of the propagated source."""
    inst = assembly.instance
    pa = inst.source.a_prior
    tables = _evidence_tables(assembly, max_atoms)
    out = []
    for stage in tables:
        joint = pa
        for E in stage:
            joint = np.einsum("...a,ax->...xa", joint, E.sum(axis=(2, 3)))
        out.append(joint)
    return out


def tau_decoder_table(assembly: SystemAssembly, max_atoms: int = DEFAULT_MAX_ATOMS):
    """Materialize the posterior-optimal decoder as explicit stage tables.

    Cells whose evidence has probability zero under the assembly's
    policies cannot be decoded from a posterior; they are completed with
    estimate 0 and flagged in the returned decoder's ``offpath`` field.
    """
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    cells = stage_cell_posteriors(assembly, max_atoms)
    stages = []
    offpath = []
    for t in range(1, al.horizon + 1):
        rho_t = inst.rho(t)
        table = {}
        ranges = [range(al.y_sizes[i]) for i in range(al.n_encoders)] + [
            range(memory_axis_size(inst, rec, i, t)) for i in range(al.n_encoders)
        ]
        for cell in itertools.product(*ranges):
            joint = cells[t - 1].get(cell)
            if joint is None:
                table[cell] = 0
                offpath.append((t, cell))
            else:
                table[cell] = policies.decode_tau(joint, rho_t)
        stages.append(table)
    return policies.ExplicitDecoder(stages=tuple(stages), offpath=tuple(offpath))


# ---------------------------------------------------------------------------
# Monte Carlo.
# ---------------------------------------------------------------------------


def _dense_symbol_tables(assembly: SystemAssembly):
    """Per encoder: components, weights, and per-stage symbol arrays.

    For component c of encoder i, symbol[t][h] is the transmitted symbol
    after x-history with radix-|X| index h, or -1 if that history has
    probability zero (it can then never be sampled).
    """
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    out = []
    for i, enc in enumerate(assembly.encoders):
        if isinstance(enc, policies.RandomizedEncoder):
            comps = enc.components
            weights = np.asarray(enc.weights, dtype=float)
        else:
            comps = (enc,)
            weights = np.ones(1)
        Xi = al.x_sizes[i]
        support_a = inst.source.a_prior > 0
        tabs = []
        for comp in comps:
            driver = policies.make_driver(comp, inst, i, receiver=rec)
            stage_tabs = [np.full(Xi ** (t + 1), -1, dtype=np.int64) for t in range(al.horizon)]
            frontier = []
            for x in range(Xi):
                if not inst.source.init[i][support_a, x].any():
                    continue
                for node, _ in driver.start(x):
                    frontier.append((node, x, x))  # (node, hist index, last x)
            for t in range(1, al.horizon + 1):
                nxt = []
                for node, h, x in frontier:
                    stage_tabs[t - 1][h] = driver.emit(node, t)
                    if t < al.horizon:
                        kernel = inst.source.kernels[i][t - 1]
                        for x2 in range(Xi):
                            if not kernel[support_a, x, x2].any():
                                continue
                            nxt.append((driver.advance(node, t, x2), h * Xi + x2, x2))
                frontier = nxt
            tabs.append(stage_tabs)
        out.append((tabs, weights))
    return out


def _dense_decoder(assembly: SystemAssembly, max_atoms):
    """Per stage: estimate array indexed by (y..., m...); off-path cells hold 0."""
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    dec = assembly.decoder
    if isinstance(dec, policies.TauDecoder):
        dec = tau_decoder_table(assembly, max_atoms)
    out = []
    for t in range(1, al.horizon + 1):
        shape = tuple(al.y_sizes) + tuple(
            memory_axis_size(inst, rec, i, t) for i in range(al.n_encoders)
        )
        arr = np.zeros(shape, dtype=np.int64)
        for cell, s in dec.stages[t - 1].items():
            arr[cell] = s
        out.append(arr)
    return out


def _inverse_cdf(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rowwise categorical sampling: rows (n, k) pmfs, u (n,) uniforms."""
    cum = np.cumsum(rows, axis=1)
    return (u[:, None] * cum[:, -1:] > cum).sum(axis=1)


def sample_source_paths(instance: Instance, samples: int, seed: int):
    """Vectorized draws from the source law: (latent values, per-encoder paths).

    Returns (a, xs) with a of shape (samples,) and xs[i] of shape
    (samples, T). Uses the same counter-based generator discipline as the
    Monte Carlo evaluator.
    """
    al = instance.alphabets
    n, T = al.n_encoders, al.horizon
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((samples, 1 + n * T))
    a = _inverse_cdf(np.broadcast_to(instance.source.a_prior, (samples, al.a_size)), u[:, 0])
    xs = [np.zeros((samples, T), dtype=np.int64) for _ in range(n)]
    col = 1
    for t in range(T):
        for i in range(n):
            if t == 0:
                xs[i][:, 0] = _inverse_cdf(instance.source.init[i][a], u[:, col])
            else:
                kernel = instance.source.kernels[i][t - 1]
                xs[i][:, t] = _inverse_cdf(kernel[a, xs[i][:, t - 1]], u[:, col])
            col += 1
    return a, xs


def simulate_mc(
    assembly: SystemAssembly,
    samples: int,
    seed: int,
    workers: int = 1,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> EvaluationReport:
    """Seeded i.i.d. rollouts of the assembled system.

    Sample k consumes row k of a uniform-draw matrix generated by a
    counter-based generator keyed on the seed, so the report is
    bit-identical for identical (seed, samples, assembly) regardless of
    how samples are sharded across workers. ``workers`` partitions the
    sample range; results are merged in sample order.
    """
    if samples < 1:
        raise ModelError("samples must be >= 1")
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    n, T = al.n_encoders, al.horizon
    perfect = rec.mode == PERFECT_MEMORY

    symbol_tables = _dense_symbol_tables(assembly)
    decoder_tables = _dense_decoder(assembly, max_atoms)

    draws = 1 + n + n * T + n * T  # latent, components, observations, channel noise
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((samples, draws))

    def run_block(lo, hi):
        ub = u[lo:hi]
        count = hi - lo
        col = 0
        a = _inverse_cdf(np.broadcast_to(inst.source.a_prior, (count, al.a_size)), ub[:, col])
        col += 1
        comp = []
        for i in range(n):
            _, weights = symbol_tables[i]
            comp.append(_inverse_cdf(np.broadcast_to(weights, (count, len(weights))), ub[:, col]))
            col += 1
        x = [None] * n
        hist = [None] * n
        mem = [np.zeros(count, dtype=np.int64) for _ in range(n)]
        stage_costs = np.zeros((count, T))
        per_stage_evidence_cols = []
        for t in range(1, T + 1):
            ys = []
            for i in range(n):
                if t == 1:
                    x[i] = _inverse_cdf(inst.source.init[i][a], ub[:, col])
                    hist[i] = x[i].copy()
                else:
                    kernel = inst.source.kernels[i][t - 2]
                    x[i] = _inverse_cdf(kernel[a, x[i]], ub[:, col])
                    hist[i] = hist[i] * al.x_sizes[i] + x[i]
                col += 1
            z = []
            for i in range(n):
                tabs, _ = symbol_tables[i]
                zt = np.empty(count, dtype=np.int64)
                for c_idx in range(len(tabs)):
                    sel = comp[i] == c_idx
                    if sel.any():
                        zt[sel] = tabs[c_idx][t - 1][hist[i][sel]]
                z.append(zt)
            for i in range(n):
                chan = inst.channels.matrices[i][t - 1]
                ys.append(_inverse_cdf(chan[z[i]], ub[:, col]))
                col += 1
            # stage cost
            idx = tuple(ys) + tuple(mem[i] for i in range(n))
            est = decoder_tables[t - 1][idx]
            rho_t = inst.rho(t)
            stage_costs[:, t - 1] = rho_t[tuple(x) + (a, est)]
            per_stage_evidence_cols.append(idx)
            # memory update
            if t < T:
                for i in range(n):
                    if perfect:
                        mem[i] = mem[i] * al.y_sizes[i] + ys[i]
                    else:
                        rule = rec.memory_rules[i][t - 1]
                        mem[i] = rule[ys[i]] if t == 1 else rule[mem[i], ys[i]]
        return stage_costs

    if workers <= 1:
        stage_costs = run_block(0, samples)
    else:
        bounds = np.linspace(0, samples, workers + 1, dtype=int)
        blocks = [run_block(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        stage_costs = np.concatenate(blocks, axis=0)

    totals = stage_costs.sum(axis=1)
    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return EvaluationReport(
        total=mean,
        per_stage=tuple(float(v) for v in stage_costs.mean(axis=0)),
        method="mc",
        samples=samples,
        stderr=stderr,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Single-trajectory trace.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: int
    latent: int
    observations: tuple          # per stage: tuple of x^i
    symbols: tuple               # per stage: tuple of z^i
    received: tuple              # per stage: tuple of y^i
    memories: tuple              # per stage: tuple of m^i carried into the stage
    a_beliefs: tuple             # per stage, per encoder: posterior on the latent
    memory_beliefs: tuple        # per stage, per encoder (finite mode only)
    receiver_beliefs: tuple      # per stage: posterior over (x..., a) at the evidence
    estimates: tuple
    stage_distortions: tuple

    @property
    def total(self):
        return float(sum(self.stage_distortions))

    def to_dict(self):
        return {
            "seed": self.seed,
            "latent": self.latent,
            "observations": [list(v) for v in self.observations],
            "symbols": [list(v) for v in self.symbols],
            "received": [list(v) for v in self.received],
            "memories": [list(v) for v in self.memories],
            "a_beliefs": [[b.tolist() for b in row] for row in self.a_beliefs],
            "memory_beliefs": [[b.tolist() for b in row] for row in self.memory_beliefs],
            "receiver_beliefs": [b.tolist() for b in self.receiver_beliefs],
            "estimates": list(self.estimates),
            "stage_distortions": list(self.stage_distortions),
            "total": self.total,
        }


def trace_rollout(assembly: SystemAssembly, seed: int,
                  max_atoms: int = DEFAULT_MAX_ATOMS) -> TrajectoryRecord:
    """One sampled path with every internal quantity, for debugging and docs."""
    inst = assembly.instance
    rec = assembly.effective_receiver
    al = inst.alphabets
    n, T = al.n_encoders, al.horizon
    perfect = rec.mode == PERFECT_MEMORY
    rng = np.random.Generator(np.random.Philox(key=seed))
    cells = stage_cell_posteriors(assembly, max_atoms)
    dec = assembly.decoder
    drivers = [
        policies.make_driver(enc, inst, i, receiver=rec) for i, enc in enumerate(assembly.encoders)
    ]

    def draw(pmf):
        return int(_inverse_cdf(np.asarray(pmf, dtype=float)[None, :], np.array([rng.random()]))[0])

    a = draw(inst.source.a_prior)
    nodes = [None] * n
    xs = [None] * n
    mems = [0] * n
    bel = [None] * n
    mu = [beliefs.initial_memory_belief(al.m_sizes[i]) for i in range(n)]

    observations, symbols, received, memories = [], [], [], []
    a_beliefs, memory_beliefs, receiver_beliefs = [], [], []
    estimates, stage_distortions = [], []

    for t in range(1, T + 1):
        for i in range(n):
            if t == 1:
                xs[i] = draw(inst.source.init[i][a])
                starts = drivers[i].start(xs[i])
                probs = np.array([w for _, w in starts])
                nodes[i] = starts[draw(probs)][0]
                bel[i] = beliefs.init_a_belief(xs[i], inst.source.a_prior, inst.source.init[i])
            else:
                kernel = inst.source.kernels[i][t - 2]
                x_new = draw(kernel[a, xs[i]])
                bel[i] = beliefs.update_a_belief(bel[i], xs[i], x_new, kernel)
                nodes[i] = drivers[i].advance(nodes[i], t - 1, x_new)
                xs[i] = x_new
        zs = [drivers[i].emit(nodes[i], t) for i in range(n)]
        ys = [draw(inst.channels.matrices[i][t - 1][zs[i]]) for i in range(n)]
        cell = tuple(ys) + tuple(mems)
        joint = cells[t - 1][cell]
        psi = joint / joint.sum()
        rho_t = inst.rho(t)
        if isinstance(dec, policies.TauDecoder):
            est = policies.decode_tau(psi, rho_t)
        else:
            est = dec.estimate(cell, t)
        observations.append(tuple(xs))
        symbols.append(tuple(zs))
        received.append(tuple(ys))
        memories.append(tuple(mems))
        a_beliefs.append(tuple(np.array(b) for b in bel))
        memory_beliefs.append(tuple(np.array(m) for m in mu))
        receiver_beliefs.append(psi)
        estimates.append(est)
        stage_distortions.append(float(rho_t[tuple(xs) + (a, est)]))
        if t < T:
            for i in range(n):
                if perfect:
                    mems[i] = mems[i] * al.y_sizes[i] + ys[i]
                else:
                    rule = rec.memory_rules[i][t - 1]
                    mems[i] = int(rule[ys[i]]) if t == 1 else int(rule[mems[i], ys[i]])
                    mu[i] = beliefs.update_memory_belief(
                        mu[i], zs[i], inst.channels.matrices[i][t - 1], rule
                    )
    return TrajectoryRecord(
        seed=seed,
        latent=a,
        observations=tuple(observations),
        symbols=tuple(symbols),
        received=tuple(received),
        memories=tuple(memories),
        a_beliefs=tuple(a_beliefs),
        memory_beliefs=tuple(memory_beliefs),
        receiver_beliefs=tuple(receiver_beliefs),
        estimates=tuple(estimates),
        stage_distortions=tuple(stage_distortions),
    )
