"""Problem instances: alphabets, source, channels, receiver, distortion.

An Instance is the complete description of one communication problem:
n encoders observing conditionally independent Markov chains (coupled by
a latent time-invariant variable), per-encoder noisy channels, a receiver
with either separated finite memories or perfect memory, and per-stage
distortion tables. Instances are immutable after validation and safe for
concurrent reads.

Stage indices are 1-based in the problem description and 0-based in the
stored per-stage tuples:

* ``source.kernels[i][t-1]`` is the transition from stage t to t+1,
* ``channels.matrices[i][t-1]`` is the channel used at stage t,
* ``receiver.memory_rules[i][t-1]`` is the update applied after stage t
  (only t = 1..T-1 are stored; the final update can never influence an
  estimate),
* ``distortion.rho[t-1]`` is the stage-t distortion table with axes
  (x^1, ..., x^n, a, estimate).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError

ROW_TOL = 1e-9

FINITE_MEMORY = "finite-memory"
PERFECT_MEMORY = "perfect-memory"


def _freeze(a):
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _freeze_int(a):
    a = np.asarray(a, dtype=np.int64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Alphabets:
    n_encoders: int
    x_sizes: tuple[int, ...]
    a_size: int
    z_sizes: tuple[int, ...]
    y_sizes: tuple[int, ...]
    m_sizes: tuple[int, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "x_sizes", tuple(int(v) for v in self.x_sizes))
        object.__setattr__(self, "z_sizes", tuple(int(v) for v in self.z_sizes))
        object.__setattr__(self, "y_sizes", tuple(int(v) for v in self.y_sizes))
        object.__setattr__(self, "m_sizes", tuple(int(v) for v in self.m_sizes))


@dataclass(frozen=True, eq=False)
class SourceModel:
    """Conditionally independent Markov chains given the latent variable.

    ``order`` > 1 marks a kth-order description meant as input for
    :func:`lift_kth_order`: the kernel at stage t then conditions on the
    last min(t, order) observations, flattened C-style oldest first, so
    its shape is (A, X**min(t, order), X).
    """

    a_prior: np.ndarray                       # (A,)
    init: tuple[np.ndarray, ...]              # per encoder, (A, X_i)
    kernels: tuple[tuple[np.ndarray, ...], ...]  # per encoder, per t=1..T-1
    order: int = 1

    def __post_init__(self):
        object.__setattr__(self, "a_prior", _freeze(self.a_prior))
        object.__setattr__(self, "init", tuple(_freeze(v) for v in self.init))
        object.__setattr__(
            self, "kernels", tuple(tuple(_freeze(k) for k in ks) for ks in self.kernels)
        )

    @classmethod
    def homogeneous(cls, a_prior, init, kernels, horizon, order=1):
        """Time-invariant shorthand: one kernel per encoder, reused at all stages."""
        n_steps = max(horizon - 1, 0)
        ks = tuple(tuple(_freeze(k) for _ in range(n_steps)) for k in kernels)
        return cls(a_prior=a_prior, init=tuple(init), kernels=ks, order=order)


@dataclass(frozen=True, eq=False)
class ChannelModel:
    matrices: tuple[tuple[np.ndarray, ...], ...]  # per encoder, per t=1..T: (Z_i, Y_i)

    def __post_init__(self):
        object.__setattr__(
            self, "matrices", tuple(tuple(_freeze(m) for m in ms) for ms in self.matrices)
        )

    @classmethod
    def homogeneous(cls, matrices, horizon):
        return cls(tuple(tuple(_freeze(m) for _ in range(horizon)) for m in matrices))

    @classmethod
    def noiseless(cls, z_sizes, horizon):
        return cls.homogeneous([np.eye(z) for z in z_sizes], horizon)

    def is_noiseless(self):
        return all(
            m.shape[0] == m.shape[1] and np.array_equal(m, np.eye(m.shape[0]))
            for ms in self.matrices
            for m in ms
        )


@dataclass(frozen=True, eq=False)
class ReceiverSpec:
    """Receiver memory architecture.

    Finite mode stores one rule per stage t = 1..T-1 and encoder:
    stage-1 rules have shape (Y_i,) (memory starts at the dummy value),
    later rules have shape (M_i, Y_i). Perfect mode keeps the full
    received history per channel and requires noiseless channels.
    """

    mode: str
    memory_rules: tuple[tuple[np.ndarray, ...], ...] | None = None

    def __post_init__(self):
        if self.memory_rules is not None:
            object.__setattr__(
                self,
                "memory_rules",
                tuple(tuple(_freeze_int(r) for r in rs) for rs in self.memory_rules),
            )

    @classmethod
    def perfect(cls):
        return cls(mode=PERFECT_MEMORY, memory_rules=None)

    @classmethod
    def homogeneous(cls, first_rules, later_rules, horizon):
        rules = []
        for r1, rl in zip(first_rules, later_rules):
            rs = [_freeze_int(r1)] + [_freeze_int(rl) for _ in range(max(horizon - 2, 0))]
            rules.append(tuple(rs[: max(horizon - 1, 0)]))
        return cls(mode=FINITE_MEMORY, memory_rules=tuple(rules))


@dataclass(frozen=True, eq=False)
class DistortionSpec:
    estimate_size: int
    rho: tuple[np.ndarray, ...]  # per t=1..T, axes (x^1, ..., x^n, a, s)

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(_freeze(r) for r in self.rho))

    @classmethod
    def homogeneous(cls, estimate_size, rho, horizon):
        r = _freeze(rho)
        return cls(estimate_size=estimate_size, rho=tuple(r for _ in range(horizon)))


@dataclass(frozen=True, eq=False)
class Instance:
    alphabets: Alphabets
    source: SourceModel
    channels: ChannelModel
    receiver: ReceiverSpec
    distortion: DistortionSpec

    @property
    def n(self):
        return self.alphabets.n_encoders

    @property
    def horizon(self):
        return self.alphabets.horizon

    def kernel(self, i, t):
        """Transition kernel from stage t to t+1 for encoder i (t = 1..T-1)."""
        return self.source.kernels[i][t - 1]

    def channel(self, i, t):
        return self.channels.matrices[i][t - 1]

    def memory_rule(self, i, t):
        """Memory update applied after stage t (t = 1..T-1)."""
        return self.receiver.memory_rules[i][t - 1]

    def rho(self, t):
        return self.distortion.rho[t - 1]


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "ok": self.ok,
            "violations": [{"path": v.path, "message": v.message} for v in self.violations],
        }


def _check_pmf_rows(out, arr, path, expected_shape=None):
    if expected_shape is not None and arr.shape != expected_shape:
        out.append(Violation(path, f"shape {arr.shape} != expected {expected_shape}"))
        return
    if not np.all(np.isfinite(arr)):
        out.append(Violation(path, "non-finite entry"))
        return
    if np.any(arr < 0):
        out.append(Violation(path, "negative entry"))
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        out.append(Violation(path, "row not normalized"))


def validate(instance: Instance) -> ValidationReport:
    """Check all structural invariants; report every violation with its field path."""
    out = []
    al = instance.alphabets
    n = al.n_encoders
    T = al.horizon

    if n < 1:
        out.append(Violation("alphabets.n_encoders", "must be >= 1"))
    if T < 1:
        out.append(Violation("alphabets.horizon", "must be >= 1"))
    for name, sizes in [
        ("x_sizes", al.x_sizes),
        ("z_sizes", al.z_sizes),
        ("y_sizes", al.y_sizes),
        ("m_sizes", al.m_sizes),
    ]:
        if len(sizes) != n:
            out.append(Violation(f"alphabets.{name}", f"expected {n} entries"))
        if any(s < 1 for s in sizes):
            out.append(Violation(f"alphabets.{name}", "all sizes must be >= 1"))
    if al.a_size < 1:
        out.append(Violation("alphabets.a_size", "must be >= 1"))
    if out:
        return ValidationReport(tuple(out))

    src = instance.source
    if src.order < 1:
        out.append(Violation("source.order", "must be >= 1"))
    _check_pmf_rows(out, src.a_prior, "source.a_prior", (al.a_size,))
    if len(src.init) != n:
        out.append(Violation("source.init", f"expected {n} entries"))
    else:
        for i, arr in enumerate(src.init):
            _check_pmf_rows(out, arr, f"source.init[{i}]", (al.a_size, al.x_sizes[i]))
    if len(src.kernels) != n:
        out.append(Violation("source.kernels", f"expected {n} entries"))
    else:
        for i, ks in enumerate(src.kernels):
            if len(ks) != max(T - 1, 0):
                out.append(Violation(f"source.kernels[{i}]", f"expected {max(T - 1, 0)} stages"))
                continue
            for t_idx, k in enumerate(ks):
                hist = al.x_sizes[i] ** min(t_idx + 1, max(src.order, 1))
                _check_pmf_rows(
                    out, k, f"source.kernels[{i}][{t_idx}]", (al.a_size, hist, al.x_sizes[i])
                )

    ch = instance.channels
    if len(ch.matrices) != n:
        out.append(Violation("channels.matrices", f"expected {n} entries"))
    else:
        for i, ms in enumerate(ch.matrices):
            if len(ms) != T:
                out.append(Violation(f"channels.matrices[{i}]", f"expected {T} stages"))
                continue
            for t_idx, m in enumerate(ms):
                _check_pmf_rows(
                    out, m, f"channels.matrices[{i}][{t_idx}]", (al.z_sizes[i], al.y_sizes[i])
                )

    rec = instance.receiver
    if rec.mode not in (FINITE_MEMORY, PERFECT_MEMORY):
        out.append(Violation("receiver.mode", f"unknown mode {rec.mode!r}"))
    elif rec.mode == PERFECT_MEMORY:
        if rec.memory_rules is not None:
            out.append(Violation("receiver.memory_rules", "perfect-memory mode takes no rules"))
        if not ch.is_noiseless():
            out.append(Violation("receiver.mode", "P2 requires noiseless channels"))
        if al.y_sizes != al.z_sizes:
            out.append(Violation("alphabets.y_sizes", "perfect-memory mode requires y_sizes == z_sizes"))
    else:
        if rec.memory_rules is None:
            out.append(Violation("receiver.memory_rules", "finite-memory mode requires rules"))
        elif len(rec.memory_rules) != n:
            out.append(Violation("receiver.memory_rules", f"expected {n} entries"))
        else:
            for i, rs in enumerate(rec.memory_rules):
                if len(rs) != max(T - 1, 0):
                    out.append(
                        Violation(f"receiver.memory_rules[{i}]", f"expected {max(T - 1, 0)} stages")
                    )
                    continue
                for t_idx, r in enumerate(rs):
                    path = f"receiver.memory_rules[{i}][{t_idx}]"
                    want = (al.y_sizes[i],) if t_idx == 0 else (al.m_sizes[i], al.y_sizes[i])
                    if r.shape != want:
                        out.append(Violation(path, f"shape {r.shape} != expected {want}"))
                    elif np.any(r < 0) or np.any(r >= al.m_sizes[i]):
                        out.append(Violation(path, "memory value out of range"))

    dis = instance.distortion
    if dis.estimate_size < 1:
        out.append(Violation("distortion.estimate_size", "must be >= 1"))
    if len(dis.rho) != T:
        out.append(Violation("distortion.rho", f"expected {T} stages"))
    else:
        x_shape = tuple(al.x_sizes) if src.order == 1 else None
        for t_idx, r in enumerate(dis.rho):
            path = f"distortion.rho[{t_idx}]"
            if x_shape is not None and r.shape != x_shape + (al.a_size, dis.estimate_size):
                out.append(
                    Violation(path, f"shape {r.shape} != expected {x_shape + (al.a_size, dis.estimate_size)}")
                )
            elif not np.all(np.isfinite(r)):
                out.append(Violation(path, "non-finite entry"))
            elif np.any(r < 0):
                out.append(Violation(path, "negative entry"))

    return ValidationReport(tuple(out))


def require_valid(instance: Instance):
    report = validate(instance)
    if not report.ok:
        first = report.violations[0]
        raise ModelError(f"invalid instance: {first.path}: {first.message}")
    return instance


# ---------------------------------------------------------------------------
# Extensions: kth-order regrouping, finite-delay regrouping, point-to-point.
# ---------------------------------------------------------------------------


def tuple_states(size: int, lengths) -> list[tuple[int, ...]]:
    """All tuples over range(size) with the given lengths, shortest first."""
    states = []
    for length in lengths:
        states.extend(itertools.product(range(size), repeat=length))
    return states


def lift_kth_order(instance: Instance, k: int) -> Instance:
    """Regroup a kth-order conditionally Markov source into a first-order Instance.

    The regrouped observation of encoder i at stage t is the tuple of its
    last min(t, k) raw observations; the state space is the union of all
    tuple lengths 1..min(k, T). Distortion is evaluated on the newest
    component of each tuple. For k = 1 the instance is returned unchanged.
    """
    if k == 0:
        raise ModelError("k = 0 is not a valid Markov order")
    if k == 1:
        if instance.source.order != 1:
            raise ModelError("k = 1 lift requires a first-order source")
        return instance
    if instance.source.order != k:
        raise ModelError(f"source.order is {instance.source.order}, expected {k}")

    al = instance.alphabets
    T = al.horizon
    max_len = min(k, T)
    states = []
    index = []
    for i in range(al.n_encoders):
        sts = tuple_states(al.x_sizes[i], range(1, max_len + 1))
        states.append(sts)
        index.append({s: j for j, s in enumerate(sts)})
    lifted_sizes = tuple(len(s) for s in states)

    init = []
    for i in range(al.n_encoders):
        arr = np.zeros((al.a_size, lifted_sizes[i]))
        for x in range(al.x_sizes[i]):
            arr[:, index[i][(x,)]] = instance.source.init[i][:, x]
        init.append(arr)

    kernels = []
    for i in range(al.n_encoders):
        per_stage = []
        for t in range(1, T):  # transition from stage t to t+1
            hist_len = min(t, k)
            raw = instance.source.kernels[i][t - 1]  # (A, X**hist_len, X)
            arr = np.zeros((al.a_size, lifted_sizes[i], lifted_sizes[i]))
            arr[:, :, 0] = 1.0  # unreachable-length rows: arbitrary valid pmf
            for u in states[i]:
                if len(u) != hist_len:
                    continue
                row = index[i][u]
                arr[:, row, 0] = 0.0
                flat = np.ravel_multi_index(u, (al.x_sizes[i],) * hist_len) if hist_len > 1 else u[0]
                for x in range(al.x_sizes[i]):
                    v = u + (x,) if len(u) < k else u[1:] + (x,)
                    arr[:, row, index[i][v]] += raw[:, flat, x]
            per_stage.append(arr)
        kernels.append(tuple(per_stage))

    rho = []
    for t in range(1, T + 1):
        raw = instance.distortion.rho[t - 1]
        arr = np.zeros(lifted_sizes + (al.a_size, instance.distortion.estimate_size))
        for combo in itertools.product(*(range(s) for s in lifted_sizes)):
            last = tuple(states[i][combo[i]][-1] for i in range(al.n_encoders))
            arr[combo] = raw[last]
        rho.append(arr)

    lifted = Instance(
        alphabets=replace(al, x_sizes=lifted_sizes),
        source=SourceModel(
            a_prior=instance.source.a_prior, init=tuple(init), kernels=tuple(kernels), order=1
        ),
        channels=instance.channels,
        receiver=instance.receiver,
        distortion=DistortionSpec(instance.distortion.estimate_size, tuple(rho)),
    )
    return require_valid(lifted)


def lift_delay(instance: Instance, d: int) -> Instance:
    """Regroup an instance so a d-stage estimation delay becomes zero-delay.

    The lifted horizon is T + d; the encoder observation at stage t is the
    tuple (x_{max(1, t-d)}, ..., x_{min(t, T)}). Stages 1..d have zero
    distortion; stage t > d evaluates the original stage-(t-d) table on
    the oldest tuple component. Channels and memory rules beyond stage T
    reuse the final original stage. For d = 0 the instance is returned
    unchanged.
    """
    if d < 0:
        raise ModelError("delay must be >= 0")
    if d == 0:
        return instance
    if instance.source.order != 1:
        raise ModelError("delay lift requires a first-order source")

    al = instance.alphabets
    T = al.horizon
    T_new = T + d

    def lo(t):
        return max(1, t - d)

    def hi(t):
        return min(t, T)

    lengths = sorted({hi(t) - lo(t) + 1 for t in range(1, T_new + 1)})
    states = []
    index = []
    for i in range(al.n_encoders):
        sts = tuple_states(al.x_sizes[i], lengths)
        states.append(sts)
        index.append({s: j for j, s in enumerate(sts)})
    lifted_sizes = tuple(len(s) for s in states)

    init = []
    for i in range(al.n_encoders):
        arr = np.zeros((al.a_size, lifted_sizes[i]))
        for x in range(al.x_sizes[i]):
            arr[:, index[i][(x,)]] = instance.source.init[i][:, x]
        init.append(arr)

    kernels = []
    for i in range(al.n_encoders):
        per_stage = []
        for t in range(1, T_new):  # transition from stage t to t+1
            length = hi(t) - lo(t) + 1
            arr = np.zeros((al.a_size, lifted_sizes[i], lifted_sizes[i]))
            arr[:, :, 0] = 1.0
            grows = hi(t + 1) == hi(t) + 1
            drops = lo(t + 1) == lo(t) + 1
            for u in states[i]:
                if len(u) != length:
                    continue
                row = index[i][u]
                arr[:, row, 0] = 0.0
                if grows:
                    raw = instance.source.kernels[i][t - 1]
                    for x in range(al.x_sizes[i]):
                        v = (u[1:] if drops else u) + (x,)
                        arr[:, row, index[i][v]] += raw[:, u[-1], x]
                else:
                    v = u[1:] if drops else u
                    arr[:, row, index[i][v]] = 1.0
            per_stage.append(arr)
        kernels.append(tuple(per_stage))

    est = instance.distortion.estimate_size
    rho = []
    for t in range(1, T_new + 1):
        arr = np.zeros(lifted_sizes + (al.a_size, est))
        if t > d:
            raw = instance.distortion.rho[t - d - 1]
            for combo in itertools.product(*(range(s) for s in lifted_sizes)):
                first = tuple(states[i][combo[i]][0] for i in range(al.n_encoders))
                arr[combo] = raw[first]
        rho.append(arr)

    chans = tuple(
        tuple(ms[t - 1] if t <= T else ms[T - 1] for t in range(1, T_new + 1))
        for ms in instance.channels.matrices
    )
    if instance.receiver.mode == PERFECT_MEMORY:
        receiver = instance.receiver
    else:
        rules = []
        for i, rs in enumerate(instance.receiver.memory_rules):
            ext = list(rs)
            while len(ext) < T_new - 1:
                if ext:
                    last = ext[-1]
                    # keep the (M, Y) form when extending past the original horizon
                    if last.ndim == 1:
                        hold = np.tile(np.arange(al.m_sizes[i])[:, None], (1, al.y_sizes[i]))
                        ext.append(hold)
                    else:
                        ext.append(last)
                else:
                    ext.append(np.zeros(al.y_sizes[i], dtype=np.int64))
            rules.append(tuple(ext))
        receiver = ReceiverSpec(mode=FINITE_MEMORY, memory_rules=tuple(rules))

    lifted = Instance(
        alphabets=replace(al, x_sizes=lifted_sizes, horizon=T_new),
        source=SourceModel(
            a_prior=instance.source.a_prior, init=tuple(init), kernels=tuple(kernels), order=1
        ),
        channels=ChannelModel(chans),
        receiver=receiver,
        distortion=DistortionSpec(est, tuple(rho)),
    )
    return require_valid(lifted)


def degenerate_p4(instance: Instance) -> Instance:
    """Embed a single-encoder point-to-point problem as a two-encoder Instance.

    The second encoder gets one-point observation, transmission, reception
    and memory alphabets, so it carries no information; distortion tables
    gain a trivial axis for it.
    """
    if instance.alphabets.n_encoders != 1:
        raise ModelError("degenerate_p4 expects a single-encoder instance")
    al = instance.alphabets
    A = al.a_size
    alphabets = Alphabets(
        n_encoders=2,
        x_sizes=(al.x_sizes[0], 1),
        a_size=A,
        z_sizes=(al.z_sizes[0], 1),
        y_sizes=(al.y_sizes[0], 1),
        m_sizes=(al.m_sizes[0], 1),
        horizon=al.horizon,
    )
    source = SourceModel(
        a_prior=instance.source.a_prior,
        init=(instance.source.init[0], np.ones((A, 1))),
        kernels=(
            instance.source.kernels[0],
            tuple(np.ones((A, 1, 1)) for _ in range(max(al.horizon - 1, 0))),
        ),
        order=instance.source.order,
    )
    channels = ChannelModel(
        (instance.channels.matrices[0], tuple(np.eye(1) for _ in range(al.horizon)))
    )
    if instance.receiver.mode == PERFECT_MEMORY:
        receiver = ReceiverSpec.perfect()
    else:
        n_rules = max(al.horizon - 1, 0)
        second = tuple(
            np.zeros(1, dtype=np.int64) if t == 0 else np.zeros((1, 1), dtype=np.int64)
            for t in range(n_rules)
        )
        receiver = ReceiverSpec(
            mode=FINITE_MEMORY, memory_rules=(instance.receiver.memory_rules[0], second)
        )
    rho = tuple(np.expand_dims(r, axis=1) for r in instance.distortion.rho)
    out = Instance(
        alphabets=alphabets,
        source=source,
        channels=channels,
        receiver=receiver,
        distortion=DistortionSpec(instance.distortion.estimate_size, rho),
    )
    return require_valid(out)


def swap_encoders(instance: Instance) -> Instance:
    """Exchange the roles of the two encoders (distortion axes included)."""
    if instance.alphabets.n_encoders != 2:
        raise ModelError("swap_encoders requires exactly two encoders")
    al = instance.alphabets
    alphabets = replace(
        al,
        x_sizes=al.x_sizes[::-1],
        z_sizes=al.z_sizes[::-1],
        y_sizes=al.y_sizes[::-1],
        m_sizes=al.m_sizes[::-1],
    )
    source = SourceModel(
        a_prior=instance.source.a_prior,
        init=instance.source.init[::-1],
        kernels=instance.source.kernels[::-1],
        order=instance.source.order,
    )
    channels = ChannelModel(instance.channels.matrices[::-1])
    if instance.receiver.mode == PERFECT_MEMORY:
        receiver = instance.receiver
    else:
        receiver = ReceiverSpec(FINITE_MEMORY, instance.receiver.memory_rules[::-1])
    rho = tuple(np.swapaxes(r, 0, 1) for r in instance.distortion.rho)
    return Instance(alphabets, source, channels, receiver,
                    DistortionSpec(instance.distortion.estimate_size, rho))


# ---------------------------------------------------------------------------
# JSON interchange. One document, unknown fields rejected.
# ---------------------------------------------------------------------------


def _expect_keys(d, allowed, path):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ModelError(f"{path}: unknown fields {sorted(unknown)}")


def instance_to_dict(instance: Instance) -> dict:
    al = instance.alphabets
    rec = instance.receiver
    out = {
        "alphabets": {
            "n_encoders": al.n_encoders,
            "x_sizes": list(al.x_sizes),
            "a_size": al.a_size,
            "z_sizes": list(al.z_sizes),
            "y_sizes": list(al.y_sizes),
            "m_sizes": list(al.m_sizes),
            "horizon": al.horizon,
        },
        "source": {
            "a_prior": instance.source.a_prior.tolist(),
            "init": [v.tolist() for v in instance.source.init],
            "kernels": [[k.tolist() for k in ks] for ks in instance.source.kernels],
            "order": instance.source.order,
        },
        "channels": {
            "matrices": [[m.tolist() for m in ms] for ms in instance.channels.matrices],
        },
        "receiver": {
            "mode": rec.mode,
            "memory_rules": None
            if rec.memory_rules is None
            else [[r.tolist() for r in rs] for rs in rec.memory_rules],
        },
        "distortion": {
            "estimate_size": instance.distortion.estimate_size,
            "rho": [r.tolist() for r in instance.distortion.rho],
        },
    }
    return out


def instance_from_dict(d: dict) -> Instance:
    _expect_keys(d, ["alphabets", "source", "channels", "receiver", "distortion"], "instance")
    for key in ["alphabets", "source", "channels", "receiver", "distortion"]:
        if key not in d:
            raise ModelError(f"instance: missing field {key!r}")
    a = d["alphabets"]
    _expect_keys(
        a,
        ["n_encoders", "x_sizes", "a_size", "z_sizes", "y_sizes", "m_sizes", "horizon"],
        "alphabets",
    )
    alphabets = Alphabets(
        n_encoders=int(a["n_encoders"]),
        x_sizes=a["x_sizes"],
        a_size=int(a["a_size"]),
        z_sizes=a["z_sizes"],
        y_sizes=a["y_sizes"],
        m_sizes=a["m_sizes"],
        horizon=int(a["horizon"]),
    )
    s = d["source"]
    _expect_keys(s, ["a_prior", "init", "kernels", "order"], "source")
    source = SourceModel(
        a_prior=s["a_prior"],
        init=tuple(np.asarray(v, dtype=float) for v in s["init"]),
        kernels=tuple(tuple(np.asarray(k, dtype=float) for k in ks) for ks in s["kernels"]),
        order=int(s.get("order", 1)),
    )
    c = d["channels"]
    _expect_keys(c, ["matrices"], "channels")
    channels = ChannelModel(
        tuple(tuple(np.asarray(m, dtype=float) for m in ms) for ms in c["matrices"])
    )
    r = d["receiver"]
    _expect_keys(r, ["mode", "memory_rules"], "receiver")
    receiver = ReceiverSpec(
        mode=r["mode"],
        memory_rules=None
        if r["memory_rules"] is None
        else tuple(tuple(np.asarray(t, dtype=np.int64) for t in rs) for rs in r["memory_rules"]),
    )
    di = d["distortion"]
    _expect_keys(di, ["estimate_size", "rho"], "distortion")
    distortion = DistortionSpec(
        estimate_size=int(di["estimate_size"]),
        rho=tuple(np.asarray(t, dtype=float) for t in di["rho"]),
    )
    return Instance(alphabets, source, channels, receiver, distortion)


def save_instance(instance: Instance, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def instance_hash(instance: Instance) -> str:
    blob = json.dumps(instance_to_dict(instance), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
