"""Desk-scale learning curves: discriminator pretraining and alternating training.

    python scripts/learning_signal.py --seed 0 --out runs/learning.json
"""
import argparse
import json
import logging
import time
from pathlib import Path

from gaswarm import datagen as dg
from gaswarm import training as tr
from gaswarm.gas import toy_station
from gaswarm.neural import NetConfig, NetworkPair


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--num-states", type=int, default=100)
    ap.add_argument("--num-scenarios", type=int, default=2000)
    ap.add_argument("--out", type=Path, default=Path("runs/learning.json"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    net = toy_station()
    gen = dg.GenerationConfig(args.num_states, args.num_scenarios, 8, 2)
    sampler = dg.SamplerConfig.from_network(net)
    t0 = time.perf_counter()
    states = dg.build_state_pool(net, gen.num_states, gen.time_step_difference, args.seed, sampler)
    samples = dg.generate_dataset(net, gen, args.seed, sampler, states=states)
    t_data = time.perf_counter() - t0

    cfg = tr.TrainConfig.desk()
    pair = NetworkPair.create(net, gen.horizon, NetConfig(), seed=args.seed)
    pre = tr.pretrain_discriminator(pair, samples, cfg, args.seed)
    source = tr.ScenarioSource(net, states, gen.horizon, sampler)
    evals = source.draw(dg.make_rng(args.seed, 8), 256)
    hist = tr.train_alternating(pair, samples, pre, source, cfg, args.seed, eval_instances=evals)

    out = {"seed": args.seed, "samples": len(samples), "data_seconds": t_data,
           "pretrain": pre.to_dict(), "history": hist.to_dict(),
           "final_generator_loss": tr.mean_generator_loss(pair, evals),
           "seconds": time.perf_counter() - t0}
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=1) + "\n")
    print(f"held-out L1 {pre.initial_test_loss:.4f} -> {pre.final_test_loss:.4f}")
    print(f"generator loss {hist.initial_generator_loss:.4f} -> {hist.generator_losses[-1][-1]:.4f}")


if __name__ == "__main__":
    main()
