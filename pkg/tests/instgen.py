"""Random instances and policies for the test suite."""

import numpy as np

from rtmc import model


def pmf(rng, n):
    w = rng.random(n) + 0.05
    return w / w.sum()


def pmf_rows(rng, shape):
    w = rng.random(shape) + 0.05
    return w / w.sum(axis=-1, keepdims=True)


def random_instance(
    rng,
    x_sizes=(2, 2),
    a_size=2,
    z_sizes=(2, 2),
    y_sizes=None,
    m_sizes=(2, 2),
    T=2,
    noisy=True,
    mode=model.FINITE_MEMORY,
    estimate_size=2,
):
    n = len(x_sizes)
    if mode == model.PERFECT_MEMORY:
        noisy = False
    y_sizes = tuple(y_sizes) if y_sizes is not None else tuple(z_sizes)
    if not noisy:
        y_sizes = tuple(z_sizes)
    al = model.Alphabets(
        n_encoders=n,
        x_sizes=tuple(x_sizes),
        a_size=a_size,
        z_sizes=tuple(z_sizes),
        y_sizes=y_sizes,
        m_sizes=tuple(m_sizes),
        horizon=T,
    )
    source = model.SourceModel(
        a_prior=pmf(rng, a_size),
        init=tuple(pmf_rows(rng, (a_size, x)) for x in x_sizes),
        kernels=tuple(
            tuple(pmf_rows(rng, (a_size, x, x)) for _ in range(T - 1)) for x in x_sizes
        ),
    )
    if noisy:
        matrices = tuple(
            tuple(pmf_rows(rng, (z_sizes[i], y_sizes[i])) for _ in range(T))
            for i in range(n)
        )
    else:
        matrices = tuple(tuple(np.eye(z_sizes[i]) for _ in range(T)) for i in range(n))
    channels = model.ChannelModel(matrices)
    if mode == model.PERFECT_MEMORY:
        receiver = model.ReceiverSpec.perfect()
    else:
        rules = []
        for i in range(n):
            per_stage = []
            for t in range(1, T):
                if t == 1:
                    per_stage.append(rng.integers(m_sizes[i], size=y_sizes[i]))
                else:
                    per_stage.append(rng.integers(m_sizes[i], size=(m_sizes[i], y_sizes[i])))
            rules.append(tuple(np.asarray(r, dtype=np.int64) for r in per_stage))
        receiver = model.ReceiverSpec(mode=model.FINITE_MEMORY, memory_rules=tuple(rules))
    distortion = model.DistortionSpec(
        estimate_size=estimate_size,
        rho=tuple(rng.random(tuple(x_sizes) + (a_size, estimate_size)) for _ in range(T)),
    )
    inst = model.Instance(al, source, channels, receiver, distortion)
    return model.require_valid(inst)


def random_sized_instance(rng, hi=2, T=2, noisy=None, estimate_hi=3):
    """Sizes drawn independently from {1..hi}; channel noise optional."""
    x_sizes = tuple(int(rng.integers(1, hi + 1)) for _ in range(2))
    z_sizes = tuple(int(rng.integers(1, hi + 1)) for _ in range(2))
    m_sizes = tuple(int(rng.integers(1, hi + 1)) for _ in range(2))
    a_size = int(rng.integers(1, hi + 1))
    if noisy is None:
        noisy = bool(rng.integers(2))
    return random_instance(
        rng,
        x_sizes=x_sizes,
        a_size=a_size,
        z_sizes=z_sizes,
        m_sizes=m_sizes,
        T=T,
        noisy=noisy,
        estimate_size=int(rng.integers(1, estimate_hi + 1)),
    )


def random_p2_instance(rng, x1=2, x2=2, a_size=2, z1=2, z2=2, T=2, estimate_size=2):
    return random_instance(
        rng,
        x_sizes=(x1, x2),
        a_size=a_size,
        z_sizes=(z1, z2),
        m_sizes=(1, 1),
        T=T,
        noisy=False,
        mode=model.PERFECT_MEMORY,
        estimate_size=estimate_size,
    )


def random_explicit_decoder(rng, instance, receiver=None):
    """Random estimates on the full evidence cell space (off-path included)."""
    import itertools

    from rtmc import engine

    rec = receiver if receiver is not None else instance.receiver
    al = instance.alphabets
    stages = []
    for t in range(1, al.horizon + 1):
        ranges = [range(al.y_sizes[i]) for i in range(al.n_encoders)] + [
            range(engine.memory_axis_size(instance, rec, i, t))
            for i in range(al.n_encoders)
        ]
        table = {
            cell: int(rng.integers(instance.distortion.estimate_size))
            for cell in itertools.product(*ranges)
        }
        stages.append(table)
    from rtmc import policies

    return policies.ExplicitDecoder(stages=tuple(stages))


def perfect_as_finite(instance):
    """Re-encode perfect memory as an explicit finite memory of history indices.

    The memory alphabet is Y**(T-1); the rules append each received symbol
    in radix-Y. Entries that can never occur (indices beyond the stage's
    history length) map to 0.
    """
    al = instance.alphabets
    if instance.receiver.mode != model.PERFECT_MEMORY:
        raise ValueError("expected a perfect-memory instance")
    T = al.horizon
    rules = []
    m_sizes = []
    for i in range(al.n_encoders):
        y = al.y_sizes[i]
        m = max(y ** (T - 1), 1)
        m_sizes.append(m)
        per_stage = []
        for t in range(1, T):
            if t == 1:
                per_stage.append(np.arange(y, dtype=np.int64))
            else:
                tab = np.zeros((m, y), dtype=np.int64)
                for h in range(y ** (t - 1)):
                    for sym in range(y):
                        tab[h, sym] = h * y + sym
                per_stage.append(tab)
        rules.append(tuple(per_stage))
    al2 = model.Alphabets(
        n_encoders=al.n_encoders,
        x_sizes=al.x_sizes,
        a_size=al.a_size,
        z_sizes=al.z_sizes,
        y_sizes=al.y_sizes,
        m_sizes=tuple(m_sizes),
        horizon=T,
    )
    receiver = model.ReceiverSpec(mode=model.FINITE_MEMORY, memory_rules=tuple(rules))
    inst = model.Instance(al2, instance.source, instance.channels, receiver, instance.distortion)
    return model.require_valid(inst)
