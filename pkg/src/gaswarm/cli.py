"""Command-line entry point ``gaswarm``.

Exit codes: 0 success, 2 infeasible or invalid input, 3 time limit, 4 format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import datagen as dg
from . import training as tr
from .gas import (NetworkError, ObjectiveWeights, build_instance_milp, load_instance,
                  load_network, mode_sequence, save_instance, save_network, station_d_template,
                  toy_station)
from .gas.io import FormatError
from .milp import SolveParams, Status, solve_milp
from .neural import NetConfig, NetworkPair, load_pair, save_pair
from .neural.weights import read_arrays
from .pipeline import evaluate_suite, primal_heuristic, warm_start_solve

EXIT_OK, EXIT_INFEASIBLE, EXIT_TIME_LIMIT, EXIT_FORMAT = 0, 2, 3, 4
NETWORKS = {"toy": toy_station, "station-d": station_d_template}

log = logging.getLogger("gaswarm")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="global 64-bit seed")
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--time-limit", type=float, default=3600.0, help="per-solve limit in seconds")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _train_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training parameters (override the profile)")
    for f in fields(tr.TrainConfig):
        if f.name == "split":
            g.add_argument("--split", type=float, nargs=3, metavar=("TRAIN", "TEST", "VAL"))
            continue
        g.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), dest=f"cfg_{f.name}")
    n = p.add_argument_group("architecture")
    n.add_argument("--channels", type=int, default=NetConfig.channels)
    n.add_argument("--generator-blocks", type=int, default=NetConfig.generator_blocks)
    n.add_argument("--discriminator-blocks", type=int, default=NetConfig.discriminator_blocks)
    n.add_argument("--beta", type=float, default=NetConfig.beta)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    root = argparse.ArgumentParser(prog="gaswarm", description=__doc__.splitlines()[0])
    sub = root.add_subparsers(dest="group", required=True)

    net = sub.add_parser("net", help="network files").add_subparsers(dest="cmd", required=True)
    synth = net.add_parser("synth", parents=[common], help="write a built-in station")
    synth.add_argument("--kind", choices=sorted(NETWORKS), default="toy")

    data = sub.add_parser("data", help="synthetic data").add_subparsers(dest="cmd", required=True)
    gen = data.add_parser("generate", parents=[common], help="labelled dataset")
    gen.add_argument("--net", type=Path, required=True)
    gen.add_argument("--num-states", type=int, default=100)
    gen.add_argument("--num-scenarios", type=int, default=2000)
    gen.add_argument("--time-step-difference", type=int, default=8)
    gen.add_argument("--horizon", type=int, default=2)
    gen.add_argument("--eval-instances", type=int, default=0,
                     help="also write this many unlabelled instances for evaluation")

    train = sub.add_parser("train", help="network training").add_subparsers(dest="cmd", required=True)
    pre = train.add_parser("pretrain", parents=[common], help="discriminator pretraining")
    alt = train.add_parser("alternating", parents=[common], help="alternating training")
    for p in (pre, alt):
        p.add_argument("--net", type=Path, required=True)
        p.add_argument("--data", type=Path, required=True)
        _train_overrides(p)
    alt.add_argument("--weights", type=Path, required=True, help="pretrained weights")

    solve = sub.add_parser("solve", parents=[common], help="solve one instance")
    solve.add_argument("--net", type=Path, required=True)
    solve.add_argument("--instance", type=Path, required=True)
    solve.add_argument("--mode", choices=("cold", "heuristic", "warmstart"), default="cold")
    solve.add_argument("--weights", type=Path)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a suite of instances")
    ev.add_argument("--net", type=Path, required=True)
    ev.add_argument("--instances", type=Path, required=True, help="directory of instance files")
    ev.add_argument("--weights", type=Path, required=True)
    ev.add_argument("--timings", action="store_true",
                    help="write wall-clock columns (reports are then not byte-reproducible)")
    return root


# -- commands -------------------------------------------------------------

def _params(args) -> SolveParams:
    return SolveParams(time_limit_s=args.time_limit)


def _train_config(args) -> tr.TrainConfig:
    over = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(tr.TrainConfig)
            if f.name != "split" and getattr(args, f"cfg_{f.name}", None) is not None}
    if args.split:
        over["split"] = tuple(args.split)
    return tr.TrainConfig.profile(args.profile, **over)


def _net_config(args) -> NetConfig:
    return NetConfig(args.channels, args.generator_blocks, args.discriminator_blocks, beta=args.beta)


def _states_of(samples) -> list:
    seen, out = set(), []
    for s in samples:
        key = json.dumps(s.pi.initial_state.to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            out.append(s.pi.initial_state)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_net_synth(args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "network.json"
    save_network(NETWORKS[args.kind](), path)
    print(path)
    return EXIT_OK


def cmd_data_generate(args) -> int:
    net = load_network(args.net)
    args.out.mkdir(parents=True, exist_ok=True)
    gen = dg.GenerationConfig(args.num_states, args.num_scenarios, args.time_step_difference, args.horizon)
    sampler = dg.SamplerConfig.from_network(net)
    states = dg.build_state_pool(net, gen.num_states, gen.time_step_difference, args.seed, sampler,
                                 params=_params(args))
    failures: list[dg.GenerationFailure] = []
    samples = dg.generate_dataset(net, gen, args.seed, sampler, params=_params(args), failures=failures,
                                  states=states)
    dg.write_dataset(samples, len(net.modes), args.out / "dataset.ndjson")
    meta = {"seed": args.seed, "rng": "numpy Philox, SeedSequence([seed, phase, index])",
            "num_states": gen.num_states, "num_scenarios": gen.num_scenarios,
            "time_step_difference": gen.time_step_difference, "horizon": gen.horizon,
            "labelled": len(samples), "failures": [f.__dict__ for f in failures]}
    if args.eval_instances:
        inst_dir = args.out / "instances"
        inst_dir.mkdir(exist_ok=True)
        src = tr.ScenarioSource(net, states, gen.horizon, sampler)
        for i in range(args.eval_instances):
            (inst,) = src.draw(dg.make_rng(args.seed, 9, i), 1)
            save_instance(inst, inst_dir / f"instance_{i:04d}.json")
        meta["eval_instances"] = args.eval_instances
    _write_json(args.out / "dataset.meta.json", meta)
    print(f"{len(samples)} labelled samples, {len(failures)} failures")
    return EXIT_OK


def cmd_train_pretrain(args) -> int:
    net = load_network(args.net)
    samples = dg.read_dataset(args.data)
    if not samples:
        raise CliError(EXIT_FORMAT, f"{args.data} holds no samples")
    cfg = _train_config(args)
    pair = NetworkPair.create(net, samples[0].pi.horizon, _net_config(args), seed=args.seed)
    result = tr.pretrain_discriminator(pair, samples, cfg, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    save_pair(pair, args.out / "pretrained.gwnn", extra={"pretrain": result.to_dict()})
    _write_json(args.out / "pretrain.json", {"config": cfg.__dict__, "result": result.to_dict()})
    print(f"test L1 {result.initial_test_loss:.6g} -> {result.final_test_loss:.6g}, "
          f"validation {result.validation_loss:.6g}")
    return EXIT_OK


def cmd_train_alternating(args) -> int:
    net = load_network(args.net)
    samples = dg.read_dataset(args.data)
    header, _ = read_arrays(args.weights)
    try:
        pre = tr.PretrainResult(**header["extra"]["pretrain"])
    except (KeyError, TypeError) as exc:
        raise CliError(EXIT_FORMAT, f"{args.weights} carries no pretraining record") from exc
    pair = load_pair(args.weights, net)
    cfg = _train_config(args)
    source = tr.ScenarioSource(net, _states_of(samples), pair.encoder.horizon, dg.SamplerConfig.from_network(net))
    evals = source.draw(dg.make_rng(args.seed, 8), 256)
    hist = tr.train_alternating(pair, samples, pre, source, cfg, args.seed, params=_params(args),
                                checkpoint_dir=args.out / "checkpoints", eval_instances=evals)
    final = tr.mean_generator_loss(pair, evals)
    save_pair(pair, args.out / "trained.gwnn", extra={"pretrain": pre.to_dict()})
    _write_json(args.out / "history.json", {"config": cfg.__dict__, "history": hist.to_dict(),
                                            "final_generator_loss": final})
    print(f"generator loss {hist.initial_generator_loss:.6g} -> {final:.6g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    net = load_network(args.net)
    inst = load_instance(args.instance)
    params = _params(args)
    weights = ObjectiveWeights()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.mode != "cold" and args.weights is None:
        raise CliError(EXIT_INFEASIBLE, f"--mode {args.mode} needs --weights")
    if args.mode == "cold":
        res = solve_milp(build_instance_milp(net, inst, weights), params)
        out = {"mode": "cold", "status": res.status.value, "objective": res.objective,
               "nodes": res.node_count}
    elif args.mode == "heuristic":
        h = primal_heuristic(net, inst, load_pair(args.weights, net), weights, params)
        res = h.result
        out = {"mode": "heuristic", "status": res.status.value, "objective": res.objective,
               "nodes": res.node_count, "generated_modes": list(h.z1.modes)}
    else:
        res = solve_milp(build_instance_milp(net, inst, weights), params)
        rec = warm_start_solve(net, inst, load_pair(args.weights, net), weights, params,
                               args.instance.stem, cold=res)
        out = {"mode": "warmstart", "status": res.status.value, "objective": rec.f_warm,
               "heuristic_objective": rec.f_heuristic, "hint_accepted": rec.accepted,
               "nodes_warm": rec.nodes_warm, "nodes_cold": rec.nodes_cold}
    if res.has_solution:
        out["modes"] = [net.modes[m].id for m in mode_sequence(net, res.point, inst.horizon).modes]
        out["point"] = res.point
    _write_json(args.out / f"solution_{args.mode}.json", out)
    print(f"{out['status']} {out['objective']}")
    if res.status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    if res.time_limit_hit:
        return EXIT_TIME_LIMIT
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_network(args.net)
    files = sorted(Path(args.instances).glob("*.json"))
    if not files:
        raise CliError(EXIT_INFEASIBLE, f"no instance files in {args.instances}")
    instances = [(f.stem, load_instance(f)) for f in files]
    pair = load_pair(args.weights, net)
    report = evaluate_suite(net, instances, pair, params=_params(args),
                            config={"seed": args.seed, "profile": args.profile, "network": net.name,
                                    "instances": len(files), "time_limit_s": args.time_limit})
    csv_path, json_path = report.write(args.out, timings=args.timings)
    agg = report.aggregate(args.timings)
    print(f"{csv_path}: acceptance {agg.get('acceptance_rate', 0):.2f}")
    return EXIT_TIME_LIMIT if any(r.status_cold == Status.FEASIBLE.value for r in report.records) else EXIT_OK


COMMANDS = {("net", "synth"): cmd_net_synth, ("data", "generate"): cmd_data_generate,
            ("train", "pretrain"): cmd_train_pretrain, ("train", "alternating"): cmd_train_alternating,
            ("solve", None): cmd_solve, ("eval", None): cmd_eval}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[(args.group, getattr(args, "cmd", None))](args)
    except CliError as exc:
        print(f"gaswarm: {exc}", file=sys.stderr)
        return exc.code
    except (FormatError, json.JSONDecodeError) as exc:
        print(f"gaswarm: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NetworkError, ValueError) as exc:
        print(f"gaswarm: invalid input: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
