"""Batch experiment runner.

Subcommands: validate, exact, mc, brute, verify, dp, trace. Every report
embeds the instance content hash, tool version, seed, and budgets so
identical inputs produce byte-identical JSON. Configuration is by flags
only.

Exit codes: 0 success/PASS, 1 verification FAIL, 2 usage or validation
error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, coordinator, engine, model, oracle, policies
from .errors import BudgetExceededError, ImpossibleEvidenceError, MissingEntryError, ModelError


@dataclass
class RunConfig:
    command: str
    instance: str
    policy: str | None = None
    encoder2: str | None = None
    out: str | None = None
    fmt: str = "json"
    seed: int = 0
    samples: int = 10000
    workers: int = 1
    max_strategies: int = 2_000_000
    max_atoms: int = engine.DEFAULT_MAX_ATOMS
    max_actions: int = 10**6
    max_rules: int = 10**5
    checks: tuple[str, ...] = ()
    policy_out: str | None = None
    graph_out: str | None = None
    no_cross_check: bool = False


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    else:
        if isinstance(value, list):
            value = json.dumps(value, sort_keys=True)
        rows.append((prefix, value))


def _emit(report: dict, cfg: RunConfig):
    if cfg.fmt == "csv":
        rows = []
        _flatten("", report, rows)
        text = "key,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
    else:
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _envelope(cfg: RunConfig, instance, result: dict) -> dict:
    return {
        "tool": "rtmc",
        "version": __version__,
        "command": cfg.command,
        "instance_hash": model.instance_hash(instance),
        "seed": cfg.seed,
        "budgets": {
            "max_strategies": cfg.max_strategies,
            "max_atoms": cfg.max_atoms,
            "max_actions": cfg.max_actions,
            "max_rules": cfg.max_rules,
        },
        "workers": cfg.workers,
        "result": result,
    }


def _load_assembly(cfg: RunConfig, instance) -> engine.SystemAssembly:
    if cfg.policy is None:
        raise ModelError("this command requires --policy (assembly JSON)")
    with open(cfg.policy) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"encoders", "decoder", "memory_rules"}
    if unknown:
        raise ModelError(f"assembly: unknown fields {sorted(unknown)}")
    al = instance.alphabets
    encoders = tuple(
        policies.policy_from_dict(d, al.a_size, al.m_sizes[i])
        for i, d in enumerate(doc["encoders"])
    )
    decoder = policies.policy_from_dict(doc.get("decoder", {"kind": "decoder_tau"}))
    receiver = None
    if doc.get("memory_rules") is not None:
        receiver = model.ReceiverSpec(
            mode=model.FINITE_MEMORY,
            memory_rules=tuple(
                tuple(np.asarray(r, dtype=np.int64) for r in rs) for rs in doc["memory_rules"]
            ),
        )
    return engine.SystemAssembly(
        instance=instance, encoders=encoders, decoder=decoder, receiver=receiver
    )


def _fixed_encoders(instance, seed):
    rng = np.random.default_rng(seed)
    return tuple(
        policies.random_general_encoder(instance, i, rng)
        for i in range(instance.alphabets.n_encoders)
    )


def run(cfg: RunConfig) -> int:
    instance = model.load_instance(cfg.instance)
    report_v = model.validate(instance)
    if cfg.command == "validate":
        _emit(_envelope(cfg, instance, report_v.to_dict()), cfg)
        if not report_v.ok:
            first = report_v.violations[0]
            print(f"invalid instance: {first.path}: {first.message}", file=sys.stderr)
            return 2
        return 0
    if not report_v.ok:
        first = report_v.violations[0]
        print(f"invalid instance: {first.path}: {first.message}", file=sys.stderr)
        return 2

    if cfg.command == "exact":
        asm = _load_assembly(cfg, instance)
        rep = engine.expected_distortion_exact(asm, cfg.max_atoms)
        _emit(_envelope(cfg, instance, rep.to_dict()), cfg)
        return 0

    if cfg.command == "mc":
        asm = _load_assembly(cfg, instance)
        rep = engine.simulate_mc(asm, cfg.samples, cfg.seed, cfg.workers, cfg.max_atoms)
        _emit(_envelope(cfg, instance, rep.to_dict()), cfg)
        return 0

    if cfg.command == "trace":
        asm = _load_assembly(cfg, instance)
        rec = engine.trace_rollout(asm, cfg.seed, cfg.max_atoms)
        _emit(_envelope(cfg, instance, rec.to_dict()), cfg)
        return 0

    if cfg.command == "brute":
        budget = oracle.SearchBudget(max_strategies=cfg.max_strategies, max_atoms=cfg.max_atoms)
        cost, witness, counts = oracle.enumerate_global_optimum(instance, budget, cfg.workers)
        result = {"minimum": cost, "counts": counts}
        if cfg.policy_out:
            doc = {
                "encoders": [policies.policy_to_dict(e) for e in witness.encoders],
                "decoder": policies.policy_to_dict(witness.decoder),
                "memory_rules": None
                if witness.effective_receiver.memory_rules is None
                else [
                    [r.tolist() for r in rs] for rs in witness.effective_receiver.memory_rules
                ],
            }
            with open(cfg.policy_out, "w") as fh:
                json.dump(doc, fh, sort_keys=True, indent=2)
                fh.write("\n")
            result["policy_out"] = cfg.policy_out
        _emit(_envelope(cfg, instance, result), cfg)
        return 0

    if cfg.command == "verify":
        checks = cfg.checks or ("theorem1", "theorem2", "lemma3", "no-randomization")
        budget = oracle.SearchBudget(max_strategies=cfg.max_strategies, max_atoms=cfg.max_atoms)
        results = {}
        ok = True
        if "theorem1" in checks:
            rep = oracle.verify_theorem1(instance, budget, cfg.workers)
            results["theorem1"] = rep.to_dict()
            ok &= rep.passed
        if "theorem2" in checks:
            encs = _fixed_encoders(instance, cfg.seed)
            results["theorem2"] = oracle.verify_theorem2(instance, encs, budget)
            ok &= results["theorem2"]["passed"]
        if "lemma3" in checks:
            encs = _fixed_encoders(instance, cfg.seed)
            results["lemma3"] = oracle.verify_lemma3_markov(instance, encs[0])
            ok &= results["lemma3"]["passed"]
        if "no-randomization" in checks:
            results["no_randomization"] = oracle.verify_no_randomization_gain(
                instance, budget, seed=cfg.seed, workers=cfg.workers
            )
            ok &= results["no_randomization"]["passed"]
        results["passed"] = bool(ok)
        _emit(_envelope(cfg, instance, results), cfg)
        for name in checks:
            key = name.replace("-", "_")
            entry = results.get(key) or results.get(name)
            status = "PASS" if entry.get("passed") else "FAIL"
            print(f"{name}: {status}", file=sys.stderr)
        return 0 if ok else 1

    if cfg.command == "dp":
        if cfg.encoder2:
            with open(cfg.encoder2) as fh:
                enc2 = policies.policy_from_dict(
                    json.load(fh), instance.alphabets.a_size, instance.alphabets.m_sizes[1]
                )
        else:
            # no policy given: fix encoder 2 to a seeded random strategy
            enc2 = _fixed_encoders(instance, cfg.seed)[1]
        graph, forward2 = coordinator.build_reachable_xi_graph(
            instance, enc2, max_actions=cfg.max_actions
        )
        table = coordinator.solve_dp(graph, forward2)
        rule = coordinator.extract_selection_rule(table, graph)
        encoder1 = coordinator.markov_rule_encoder(rule, graph)
        asm = engine.SystemAssembly(
            instance=instance, encoders=(encoder1, enc2), decoder=policies.TauDecoder()
        )
        exact = engine.expected_distortion_exact(asm, cfg.max_atoms)
        result = {
            "v0": table.v0,
            "extracted_policy_exact_cost": exact.total,
            "states_per_stage": [len(s) for s in graph.stages],
            "value_table": table.to_dict(),
        }
        if not cfg.no_cross_check:
            try:
                best, _, _, _ = coordinator.p2_brute_force(
                    instance, enc2, cfg.max_rules, cfg.max_actions
                )
                result["brute_minimum"] = best
                result["brute_gap"] = table.v0 - best
            except BudgetExceededError as exc:
                result["brute_minimum"] = None
                result["brute_skipped"] = str(exc)
        if cfg.policy_out:
            with open(cfg.policy_out, "w") as fh:
                json.dump(policies.policy_to_dict(rule), fh, sort_keys=True, indent=2)
                fh.write("\n")
            result["policy_out"] = cfg.policy_out
        if cfg.graph_out:
            with open(cfg.graph_out, "w") as fh:
                json.dump(graph.to_dict(), fh, sort_keys=True, indent=2)
                fh.write("\n")
            result["graph_out"] = cfg.graph_out
        _emit(_envelope(cfg, instance, result), cfg)
        if result.get("brute_minimum") is not None and abs(result["brute_gap"]) > oracle.GAP_TOL:
            return 1
        return 0

    raise ModelError(f"unknown command {cfg.command!r}")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=False):
        sp.add_argument("--instance", required=True, help="instance JSON file")
        if policy:
            sp.add_argument("--policy", help="assembly JSON file")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--max-strategies", type=int, default=2_000_000)
        sp.add_argument("--max-atoms", type=int, default=engine.DEFAULT_MAX_ATOMS)
        sp.add_argument("--max-actions", type=int, default=10**6)
        sp.add_argument("--max-rules", type=int, default=10**5)

    common(sub.add_parser("validate", help="check an instance file"))
    common(sub.add_parser("exact", help="exact expected distortion"), policy=True)
    mc = sub.add_parser("mc", help="Monte Carlo estimate")
    common(mc, policy=True)
    mc.add_argument("--samples", type=int, default=10000)
    br = sub.add_parser("brute", help="exhaustive strategy search")
    common(br)
    br.add_argument("--policy-out", help="write the witness assembly here")
    ve = sub.add_parser("verify", help="structural-theorem verification suites")
    common(ve)
    ve.add_argument("--theorem1", action="append_const", const="theorem1", dest="checks")
    ve.add_argument("--theorem2", action="append_const", const="theorem2", dest="checks")
    ve.add_argument("--lemma3", action="append_const", const="lemma3", dest="checks")
    ve.add_argument(
        "--no-randomization", action="append_const", const="no-randomization", dest="checks"
    )
    dp = sub.add_parser("dp", help="coordinator dynamic program")
    common(dp)
    dp.add_argument("--encoder2", help="fixed second-encoder policy JSON")
    dp.add_argument("--policy-out", help="write the extracted selection rule here")
    dp.add_argument("--graph-out", help="write the reachable-state graph here")
    dp.add_argument("--no-cross-check", action="store_true")
    common(sub.add_parser("trace", help="dump one rollout"), policy=True)
    return p


def config_from_args(args) -> RunConfig:
    return RunConfig(
        command=args.command,
        instance=args.instance,
        policy=getattr(args, "policy", None),
        encoder2=getattr(args, "encoder2", None),
        out=args.out,
        fmt=args.fmt,
        seed=args.seed,
        samples=getattr(args, "samples", 10000),
        workers=args.workers,
        max_strategies=args.max_strategies,
        max_atoms=args.max_atoms,
        max_actions=args.max_actions,
        max_rules=args.max_rules,
        checks=tuple(getattr(args, "checks", None) or ()),
        policy_out=getattr(args, "policy_out", None),
        graph_out=getattr(args, "graph_out", None),
        no_cross_check=getattr(args, "no_cross_check", False),
    )


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return run(config_from_args(args))
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3
    except (ModelError, ImpossibleEvidenceError, MissingEntryError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
