"""Independent reference computations for the test suite.

Everything here enumerates complete joint realizations and conditions by
definition; nothing reuses the recursions or the factored evaluator under
test. Desk scale only.
"""

import itertools

import numpy as np

from rtmc import model, policies
from rtmc.model import PERFECT_MEMORY


def _driver_paths(instance, encoders, receiver, T):
    """All (weight over latent, per-encoder x/z/y paths, memory) realizations.

    Yields (prob_vector_over_a, xs, zs, ys, ms) where xs[i] is encoder i's
    observation path, ms[i][t-1] the memory carried into stage t.
    """
    al = instance.alphabets
    rec = receiver if receiver is not None else instance.receiver
    perfect = rec.mode == PERFECT_MEMORY
    drivers = [
        policies.make_driver(enc, instance, i, receiver=rec) for i, enc in enumerate(encoders)
    ]

    def encoder_branches(i):
        out = []
        for x_path in itertools.product(range(al.x_sizes[i]), repeat=T):
            px = np.array(instance.source.init[i][:, x_path[0]])
            for s in range(1, T):
                px = px * instance.source.kernels[i][s - 1][:, x_path[s - 1], x_path[s]]
            if not px.any():
                continue
            for node0, w0 in drivers[i].start(x_path[0]):
                z_path = []
                node = node0
                for s in range(1, T + 1):
                    z_path.append(drivers[i].emit(node, s))
                    if s < T:
                        node = drivers[i].advance(node, s, x_path[s])
                for y_path in itertools.product(range(al.y_sizes[i]), repeat=T):
                    py = w0
                    for s in range(T):
                        py *= instance.channels.matrices[i][s][z_path[s], y_path[s]]
                    if py == 0.0:
                        continue
                    ms = [0]
                    m = 0
                    for s in range(1, T):
                        if perfect:
                            m = m * al.y_sizes[i] + y_path[s - 1]
                        else:
                            rule = rec.memory_rules[i][s - 1]
                            m = int(rule[y_path[s - 1]]) if s == 1 else int(rule[m, y_path[s - 1]])
                        ms.append(m)
                    out.append((px * py, x_path, tuple(z_path), y_path, tuple(ms)))
        return out

    branches = [encoder_branches(i) for i in range(al.n_encoders)]
    for combo in itertools.product(*branches):
        pa_vec = np.array(instance.source.a_prior)
        for (px, *_rest) in combo:
            pa_vec = pa_vec * px
        if not pa_vec.any():
            continue
        yield pa_vec, combo


def flat_expected_distortion(assembly):
    """Objective value by complete path enumeration (the flat oracle)."""
    instance = assembly.instance
    al = instance.alphabets
    T = al.horizon
    rec = assembly.effective_receiver
    dec = assembly.decoder
    tau = isinstance(dec, policies.TauDecoder)

    realizations = list(_driver_paths(instance, assembly.encoders, rec, T))
    estimates = [{} for _ in range(T)]
    if tau:
        cell_joint = [dict() for _ in range(T)]
        for pa_vec, combo in realizations:
            for t in range(1, T + 1):
                cell = tuple(br[3][t - 1] for br in combo) + tuple(br[4][t - 1] for br in combo)
                joint = cell_joint[t - 1].setdefault(
                    cell, np.zeros(tuple(al.x_sizes) + (al.a_size,))
                )
                state = tuple(br[1][t - 1] for br in combo)
                joint[state] += pa_vec
        for t in range(1, T + 1):
            for cell, joint in cell_joint[t - 1].items():
                estimates[t - 1][cell] = policies.decode_tau(joint, instance.rho(t))

    per_stage = np.zeros(T)
    for pa_vec, combo in realizations:
        for t in range(1, T + 1):
            cell = tuple(br[3][t - 1] for br in combo) + tuple(br[4][t - 1] for br in combo)
            s = estimates[t - 1][cell] if tau else dec.estimate(cell, t)
            state = tuple(br[1][t - 1] for br in combo)
            rho = instance.rho(t)
            for a in range(al.a_size):
                per_stage[t - 1] += pa_vec[a] * rho[state + (a, s)]
    return float(per_stage.sum()), per_stage


def direct_a_posterior(instance, i, x_path):
    """P(latent | observation path) as one unnormalized product, normalized once."""
    w = np.array(instance.source.a_prior) * instance.source.init[i][:, x_path[0]]
    for s in range(1, len(x_path)):
        w = w * instance.source.kernels[i][s - 1][:, x_path[s - 1], x_path[s]]
    total = w.sum()
    if total <= 0:
        raise ValueError("path has probability zero")
    return w / total


def direct_memory_posterior(instance, i, rules, z_path):
    """P(memory after consuming z_path | z_path) by channel-noise enumeration."""
    al = instance.alphabets
    t = len(z_path)
    m_size = al.m_sizes[i]
    out = np.zeros(m_size + 1)
    if t == 0:
        out[m_size] = 1.0
        return out
    for y_path in itertools.product(range(al.y_sizes[i]), repeat=t):
        p = 1.0
        for s in range(t):
            p *= instance.channels.matrices[i][s][z_path[s], y_path[s]]
        if p == 0.0:
            continue
        m = None
        for s, y in enumerate(y_path):
            m = int(rules[s][y]) if s == 0 else int(rules[s][m, y])
        out[m] += p
    return out


def direct_xi(instance, i, w_seq, z_path, b_set):
    """P(x_t, belief_t | symbols, partial functions) by joint enumeration.

    Beliefs along each path are computed by the one-shot product rule (not
    the recursion) and matched into ``b_set`` by value.
    """
    t = len(z_path)
    al = instance.alphabets
    acc = {}
    for x_path in itertools.product(range(al.x_sizes[i]), repeat=t):
        w = np.array(instance.source.a_prior) * instance.source.init[i][:, x_path[0]]
        for s in range(1, t):
            w = w * instance.source.kernels[i][s - 1][:, x_path[s - 1], x_path[s]]
        mass = float(w.sum())
        if mass == 0.0:
            continue
        ok = True
        b_id = None
        for s in range(1, t + 1):
            b = direct_a_posterior(instance, i, x_path[:s])
            b_id = b_set.lookup(b)
            if w_seq[s - 1](x_path[s - 1], b_id) != z_path[s - 1]:
                ok = False
                break
        if ok:
            key = (x_path[-1], b_id)
            acc[key] = acc.get(key, 0.0) + mass
    total = sum(acc.values())
    if total <= 0:
        raise ValueError("history has probability zero")
    return {k: v / total for k, v in acc.items()}


def delayed_objective_brute_force(instance, d):
    """Exhaustive optimum of the d-delayed objective on the raw instance.

    Encoders observe the raw chain (frozen after stage T), transmit for
    T + d stages, and the stage-t cost for t > d evaluates the original
    stage-(t-d) distortion at the stage-(t-d) state. Decoders are
    optimized per evidence cell. Completely independent of the lift code.
    """
    al = instance.alphabets
    T = al.horizon
    total_T = T + d

    def channel(i, t):
        return instance.channels.matrices[i][min(t, T) - 1]

    def memory_rule(i, t):
        rules = instance.receiver.memory_rules[i]
        return rules[min(t, len(rules)) - 1]

    def encoder_strategies(i):
        # histories: (x_{1:min(t,T)}, z_{1:t-1}) with positive probability
        out = []

        def expand(t, histories, tables):
            keys = [k for k, _ in histories]
            for assignment in itertools.product(range(al.z_sizes[i]), repeat=len(keys)):
                table = dict(zip(keys, assignment))
                if t == total_T:
                    out.append(tables + [table])
                    continue
                nxt = []
                for (xh, zh), v in histories:
                    z = table[(xh, zh)]
                    if t < T:
                        kern = instance.source.kernels[i][t - 1]
                        for x2 in range(al.x_sizes[i]):
                            v2 = v * kern[:, xh[-1], x2]
                            if v2.any():
                                nxt.append(((xh + (x2,), zh + (z,)), v2))
                    else:
                        nxt.append(((xh, zh + (z,)), v))
                expand(t + 1, nxt, tables + [table])

        roots = []
        for x in range(al.x_sizes[i]):
            v = instance.source.a_prior * instance.source.init[i][:, x]
            if v.any():
                roots.append((((x,), ()), v))
        expand(1, roots, [])
        return out

    def x_paths(i):
        out = []
        for xp in itertools.product(range(al.x_sizes[i]), repeat=T):
            v = np.array(instance.source.init[i][:, xp[0]])
            for s in range(1, T):
                v = v * instance.source.kernels[i][s - 1][:, xp[s - 1], xp[s]]
            if v.any():
                out.append((xp, v))
        return out

    paths = [x_paths(i) for i in range(al.n_encoders)]

    def branch_realizations(i, tables):
        # (per-a weight, x-path, y-paths over total_T, memory per stage)
        out = []
        for xp, v in paths[i]:
            zs = []
            xh, zh = (xp[0],), ()
            for t in range(1, total_T + 1):
                z = tables[t - 1][(xh, zh)]
                zs.append(z)
                zh = zh + (z,)
                if t < T:
                    xh = xh + (xp[t],)
            for yp in itertools.product(*(range(al.y_sizes[i]) for _ in range(total_T))):
                p = 1.0
                for t in range(total_T):
                    p *= channel(i, t + 1)[zs[t], yp[t]]
                if p == 0.0:
                    continue
                ms = [0]
                m = None
                for t in range(1, total_T):
                    rule = memory_rule(i, t)
                    m = int(rule[yp[t - 1]]) if t == 1 else int(rule[m, yp[t - 1]])
                    ms.append(m)
                out.append((v * p, xp, yp, tuple(ms)))
        return out

    best = np.inf
    strategies = [encoder_strategies(i) for i in range(al.n_encoders)]
    for combo_tables in itertools.product(*strategies):
        branches = [branch_realizations(i, combo_tables[i]) for i in range(al.n_encoders)]
        cell_joint = [dict() for _ in range(total_T)]
        for parts in itertools.product(*branches):
            w = np.array(instance.source.a_prior)
            for v, *_ in parts:
                w = w * v
            if not w.any():
                continue
            for t in range(d + 1, total_T + 1):
                cell = tuple(p[2][t - 1] for p in parts) + tuple(p[3][t - 1] for p in parts)
                state = tuple(p[1][t - d - 1] for p in parts)
                joint = cell_joint[t - 1].setdefault(
                    cell, np.zeros(tuple(al.x_sizes) + (al.a_size,))
                )
                joint[state] += w
        cost = 0.0
        for t in range(d + 1, total_T + 1):
            rho = instance.rho(t - d)
            for joint in cell_joint[t - 1].values():
                cost += float(
                    (joint.reshape(-1) @ rho.reshape(-1, rho.shape[-1])).min()
                )
        best = min(best, cost)
    return best


def kth_order_path_law(instance, k):
    """Joint law of both raw observation paths under the kth-order kernels."""
    al = instance.alphabets
    T = al.horizon
    law = {}
    for a in range(al.a_size):
        pa = instance.source.a_prior[a]
        if pa == 0.0:
            continue
        per_enc = []
        for i in range(al.n_encoders):
            probs = {}
            for xp in itertools.product(range(al.x_sizes[i]), repeat=T):
                p = instance.source.init[i][a, xp[0]]
                for t in range(1, T):
                    hist = xp[max(0, t - k):t]
                    flat = (
                        np.ravel_multi_index(hist, (al.x_sizes[i],) * len(hist))
                        if len(hist) > 1
                        else hist[0]
                    )
                    p *= instance.source.kernels[i][t - 1][a, flat, xp[t]]
                if p > 0:
                    probs[xp] = p
            per_enc.append(probs)
        for combo in itertools.product(*(p.items() for p in per_enc)):
            key = tuple(xp for xp, _ in combo)
            w = pa
            for _, p in combo:
                w *= p
            law[key] = law.get(key, 0.0) + w
    return law


def first_order_path_law(instance, state_maps=None):
    """Joint law of both observation paths under a first-order instance.

    ``state_maps[i]`` optionally translates each lifted state index to a
    raw symbol before accumulating.
    """
    al = instance.alphabets
    T = al.horizon
    law = {}
    for a in range(al.a_size):
        pa = instance.source.a_prior[a]
        if pa == 0.0:
            continue
        per_enc = []
        for i in range(al.n_encoders):
            probs = {}
            for xp in itertools.product(range(al.x_sizes[i]), repeat=T):
                p = instance.source.init[i][a, xp[0]]
                for t in range(1, T):
                    p *= instance.source.kernels[i][t - 1][a, xp[t - 1], xp[t]]
                if p > 0:
                    mapped = (
                        xp if state_maps is None else tuple(state_maps[i][s] for s in xp)
                    )
                    probs[mapped] = probs.get(mapped, 0.0) + p
            per_enc.append(probs)
        for combo in itertools.product(*(p.items() for p in per_enc)):
            key = tuple(xp for xp, _ in combo)
            w = pa
            for _, p in combo:
                w *= p
            law[key] = law.get(key, 0.0) + w
    return law


def single_encoder_brute_force(instance):
    """Native exhaustive optimum for a one-encoder instance (no embedding).

    Enumerates encoder tables and memory rules directly and evaluates by
    flat path enumeration with per-cell decoding.
    """
    al = instance.alphabets
    assert al.n_encoders == 1
    T = al.horizon
    i = 0

    def encoder_strategies():
        out = []

        def expand(t, histories, tables):
            keys = [k for k, _ in histories]
            for assignment in itertools.product(range(al.z_sizes[i]), repeat=len(keys)):
                table = dict(zip(keys, assignment))
                if t == T:
                    out.append(tables + [table])
                    continue
                kern = instance.source.kernels[i][t - 1]
                nxt = []
                for (xh, zh), v in histories:
                    z = table[(xh, zh)]
                    for x2 in range(al.x_sizes[i]):
                        v2 = v * kern[:, xh[-1], x2]
                        if v2.any():
                            nxt.append(((xh + (x2,), zh + (z,)), v2))
                expand(t + 1, nxt, tables + [table])

        roots = []
        for x in range(al.x_sizes[i]):
            v = instance.source.a_prior * instance.source.init[i][:, x]
            if v.any():
                roots.append((((x,), ()), v))
        expand(1, roots, [])
        return out

    def rule_sets():
        m, y = al.m_sizes[i], al.y_sizes[i]
        per_stage = []
        for t in range(1, T):
            if t == 1:
                per_stage.append(
                    [np.array(v, dtype=np.int64) for v in itertools.product(range(m), repeat=y)]
                )
            else:
                per_stage.append(
                    [
                        np.array(v, dtype=np.int64).reshape(m, y)
                        for v in itertools.product(range(m), repeat=m * y)
                    ]
                )
        return [tuple(c) for c in itertools.product(*per_stage)]

    best = np.inf
    for tables in encoder_strategies():
        for rules in rule_sets():
            cell_joint = [dict() for _ in range(T)]
            for xp in itertools.product(range(al.x_sizes[i]), repeat=T):
                v = instance.source.a_prior * instance.source.init[i][:, xp[0]]
                for s in range(1, T):
                    v = v * instance.source.kernels[i][s - 1][:, xp[s - 1], xp[s]]
                if not v.any():
                    continue
                zs = []
                xh, zh = (xp[0],), ()
                for t in range(1, T + 1):
                    z = tables[t - 1][(xh, zh)]
                    zs.append(z)
                    if t < T:
                        xh, zh = xh + (xp[t],), zh + (z,)
                for yp in itertools.product(range(al.y_sizes[i]), repeat=T):
                    p = 1.0
                    for t in range(T):
                        p *= instance.channels.matrices[i][t][zs[t], yp[t]]
                    if p == 0.0:
                        continue
                    ms = [0]
                    m = None
                    for t in range(1, T):
                        m = (
                            int(rules[t - 1][yp[t - 1]])
                            if t == 1
                            else int(rules[t - 1][m, yp[t - 1]])
                        )
                        ms.append(m)
                    for t in range(1, T + 1):
                        cell = (yp[t - 1], ms[t - 1])
                        joint = cell_joint[t - 1].setdefault(
                            cell, np.zeros((al.x_sizes[i], al.a_size))
                        )
                        joint[xp[t - 1]] += v * p
            cost = 0.0
            for t in range(1, T + 1):
                rho = instance.rho(t)
                for joint in cell_joint[t - 1].values():
                    cost += float((joint.reshape(-1) @ rho.reshape(-1, rho.shape[-1])).min())
            best = min(best, cost)
    return float(best)
