import numpy as np
import pytest

from rtmc import engine, model, policies
from rtmc.errors import ModelError

from tests import instgen, oracles


def test_validate_well_formed(rng):
    inst = instgen.random_instance(rng)
    assert model.validate(inst).ok


def test_validate_rejects_unnormalized_kernel(rng):
    inst = instgen.random_instance(rng)
    kernels = [list(ks) for ks in inst.source.kernels]
    bad = np.array(kernels[0][0])
    bad[0, 0, :] *= 0.9
    kernels[0][0] = bad
    broken = model.Instance(
        inst.alphabets,
        model.SourceModel(inst.source.a_prior, inst.source.init,
                          tuple(tuple(ks) for ks in kernels)),
        inst.channels,
        inst.receiver,
        inst.distortion,
    )
    report = model.validate(broken)
    assert not report.ok
    assert any(
        v.path == "source.kernels[0][0]" and "not normalized" in v.message
        for v in report.violations
    )


def test_validate_rejects_noisy_perfect_memory(rng):
    inst = instgen.random_instance(rng, noisy=True)
    broken = model.Instance(
        inst.alphabets, inst.source, inst.channels, model.ReceiverSpec.perfect(),
        inst.distortion,
    )
    report = model.validate(broken)
    assert not report.ok
    assert any("noiseless" in v.message for v in report.violations)


def test_validation_report_paths_cover_shapes(rng):
    inst = instgen.random_instance(rng)
    bad_rho = list(inst.distortion.rho)
    bad_rho[0] = -np.abs(bad_rho[0])
    broken = model.Instance(
        inst.alphabets, inst.source, inst.channels, inst.receiver,
        model.DistortionSpec(inst.distortion.estimate_size, tuple(bad_rho)),
    )
    report = model.validate(broken)
    assert any(v.path == "distortion.rho[0]" for v in report.violations)


def test_json_round_trip(rng, tmp_path):
    inst = instgen.random_instance(rng, noisy=True)
    path = tmp_path / "inst.json"
    model.save_instance(inst, path)
    back = model.load_instance(path)
    assert model.instance_hash(back) == model.instance_hash(inst)
    assert model.validate(back).ok


def test_json_rejects_unknown_fields(rng, tmp_path):
    inst = instgen.random_instance(rng)
    doc = model.instance_to_dict(inst)
    doc["extra"] = 1
    with pytest.raises(ModelError, match="unknown fields"):
        model.instance_from_dict(doc)
    doc.pop("extra")
    doc["source"]["bogus"] = []
    with pytest.raises(ModelError, match="source"):
        model.instance_from_dict(doc)


# ---------------------------------------------------------------------------
# kth-order lift
# ---------------------------------------------------------------------------


def _kth_order_instance(rng, k=2, x=2, a=2, T=3):
    base = instgen.random_instance(rng, x_sizes=(x, x), a_size=a, T=T, noisy=False)
    kernels = []
    for i in range(2):
        per_stage = []
        for t in range(1, T):
            hist = x ** min(t, k)
            per_stage.append(instgen.pmf_rows(rng, (a, hist, x)))
        kernels.append(tuple(per_stage))
    source = model.SourceModel(
        a_prior=base.source.a_prior, init=base.source.init, kernels=tuple(kernels), order=k
    )
    inst = model.Instance(base.alphabets, source, base.channels, base.receiver, base.distortion)
    assert model.validate(inst).ok
    return inst


def test_lift_k1_is_identity(rng):
    inst = instgen.random_instance(rng)
    assert model.lift_kth_order(inst, 1) is inst


def test_lift_k0_rejected(rng):
    inst = instgen.random_instance(rng)
    with pytest.raises(ModelError):
        model.lift_kth_order(inst, 0)


def test_lift_k2_state_count(rng):
    inst = _kth_order_instance(rng, k=2, x=2, T=3)
    lifted = model.lift_kth_order(inst, 2)
    assert lifted.alphabets.x_sizes == (6, 6)  # length-1 plus length-2 tuples


def test_lift_k2_marginal_law_matches(rng):
    inst = _kth_order_instance(rng, k=2, x=2, T=3)
    lifted = model.lift_kth_order(inst, 2)
    states = model.tuple_states(2, range(1, 3))
    state_map = [
        {idx: s[-1] for idx, s in enumerate(states)},
        {idx: s[-1] for idx, s in enumerate(states)},
    ]
    direct = oracles.kth_order_path_law(inst, 2)
    via_lift = oracles.first_order_path_law(lifted, state_maps=state_map)
    assert set(direct) == set(via_lift)
    for key, p in direct.items():
        assert abs(p - via_lift[key]) <= 1e-12


# ---------------------------------------------------------------------------
# delay lift
# ---------------------------------------------------------------------------


def test_lift_d0_is_identity(rng):
    inst = instgen.random_instance(rng)
    assert model.lift_delay(inst, 0) is inst


def test_lift_d1_horizon_and_zero_stages(rng):
    inst = instgen.random_instance(rng, T=2, noisy=False)
    lifted = model.lift_delay(inst, 1)
    assert lifted.alphabets.horizon == 3
    assert float(np.abs(lifted.distortion.rho[0]).max()) == 0.0
    assert model.validate(lifted).ok


def _delay_test_instance(rng):
    # second encoder trivial to keep the direct delayed search enumerable
    return instgen.random_instance(
        rng, x_sizes=(2, 1), a_size=1, z_sizes=(2, 1), m_sizes=(1, 1), T=2,
        noisy=False, estimate_size=2,
    )


def test_lift_d1_matches_direct_delayed_optimum(rng):
    from rtmc import oracle

    inst = _delay_test_instance(rng)
    lifted = model.lift_delay(inst, 1)
    direct = oracles.delayed_objective_brute_force(inst, 1)
    cost, _, _ = oracle.enumerate_global_optimum(lifted, oracle.SearchBudget())
    assert abs(cost - direct) <= 1e-12


# ---------------------------------------------------------------------------
# point-to-point embedding
# ---------------------------------------------------------------------------


def _single_encoder_instance(rng, T=2):
    return instgen.random_instance(
        rng, x_sizes=(2,), a_size=2, z_sizes=(2,), m_sizes=(2,), T=T, noisy=True,
        estimate_size=2,
    )


def test_degenerate_p4_shapes(rng):
    inst = _single_encoder_instance(rng)
    two = model.degenerate_p4(inst)
    assert two.alphabets.x_sizes == (2, 1)
    assert two.alphabets.z_sizes == (2, 1)
    assert model.validate(two).ok


def test_degenerate_p4_matches_native_single_encoder_optimum(rng):
    from rtmc import oracle

    inst = _single_encoder_instance(rng)
    native = oracles.single_encoder_brute_force(inst)
    two = model.degenerate_p4(inst)
    cost, _, _ = oracle.enumerate_global_optimum(two, oracle.SearchBudget())
    assert abs(cost - native) <= 1e-9


# ---------------------------------------------------------------------------
# source factorization probe
# ---------------------------------------------------------------------------


def test_simulated_transitions_factor(rng):
    """Engine-sampled transition frequencies obey the factored source law."""
    inst = instgen.random_instance(rng, T=2, noisy=False, m_sizes=(1, 1))
    n = 10**5
    a, xs = engine.sample_source_paths(inst, n, seed=20240811)
    # condition on the most frequent stage-1 state
    keys = a * 4 + xs[0][:, 0] * 2 + xs[1][:, 0]
    key = int(np.bincount(keys).argmax())
    sel = keys == key
    a0, x10, x20 = key // 4, (key // 2) % 2, key % 2
    m = int(sel.sum())
    assert m > 10**4
    k1 = inst.source.kernels[0][0][a0, x10]
    k2 = inst.source.kernels[1][0][a0, x20]
    for v1 in range(2):
        for v2 in range(2):
            freq = float(np.mean((xs[0][sel, 1] == v1) & (xs[1][sel, 1] == v2)))
            p = k1[v1] * k2[v2]
            sigma = np.sqrt(p * (1 - p) / m)
            assert abs(freq - p) <= 3 * sigma
