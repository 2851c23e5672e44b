"""Batch front-end: reproducible training runs, evaluation, extraction,
seed sweeps, and the scaling benchmark.

Every run writes a manifest (command, seed, full effective config and its
hash, git revision, timestamp) into --out before any training starts, and
never writes outside --out.  Config files are flat key = value text with one
section per task; values are integers, floats, booleans, or quoted strings.
Exit codes: 0 success, 1 runtime failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import subprocess
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .extraction import Program, evaluate_boolean, extract, render_text, simplify
from .network import LogicMachine, rl_noise, supervised_noise
from .predicates import input_groups
from .ilp import TASKS, TrainingDiverged, evaluate, make_instance, pss, train_supervised
from .ilp.tasks import network_config
from .rl import RLConfig, train_rl
from .rl.blocksworld import TASK_SIGNATURES as RL_TASKS

NOISE_KEYS = ("tau", "tau_decay", "tau_floor", "beta", "beta_decay", "beta_floor",
              "dropout", "dropout_decay", "dropout_floor", "kind", "dropout_mode")
TRAIN_KEYS = ("epochs", "batch_size", "steps_per_epoch", "val_instances")
RL_KEYS = tuple(f.name for f in dataclasses.fields(RLConfig))


# ---------------------------------------------------------------------------
# config files

def parse_flat_config(text: str) -> dict:
    """Flat key = value sections; values parse as int, float, bool or string."""
    sections: dict = {}
    current = "defaults"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        sections.setdefault(current, {})[key] = _parse_value(value)
    return sections


def _parse_value(token: str):
    if token.lower() in ("true", "false"):
        return token.lower() == "true"
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "\"'":
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def effective_config(args, task: str) -> dict:
    merged = {}
    if getattr(args, "config", None):
        sections = parse_flat_config(Path(args.config).read_text())
        merged.update(sections.get("defaults", {}))
        merged.update(sections.get(task, {}))
    if getattr(args, "epochs", None) is not None:
        merged["epochs"] = args.epochs
    return merged


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# manifests

def git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or None
    except OSError:
        return None


def write_manifest(out: Path, command: str, task: str, seed, config: dict,
                   outputs: list) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "task": task,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "git_revision": git_revision(),
        "created_unix": time.time(),
        "outputs": outputs,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def write_results(out: Path, payload: dict):
    payload = dict(payload, manifest="manifest.json")
    (out / "results.json").write_text(json.dumps(payload, indent=1))


# ---------------------------------------------------------------------------
# commands

def cmd_train_ilp(args) -> int:
    cfg = effective_config(args, args.task)
    out = Path(args.out or f"runs/train-ilp-{args.task}-s{args.seed}")
    write_manifest(out, "train-ilp", args.task, args.seed, cfg,
                   ["model.ckpt", "program.txt", "program.json", "metrics.csv",
                    "results.json"])
    noise = supervised_noise(**{k: cfg[k] for k in NOISE_KEYS if k in cfg})
    kwargs = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    try:
        res = train_supervised(args.task, args.seed, noise=noise, out_dir=out,
                               log=_row_printer(args), **kwargs)
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    rate = evaluate(res.program, args.task, count=args.count)
    write_results(out, {"task": args.task, "seed": args.seed,
                        "converged": res.converged, "epochs": res.epochs_run,
                        "wall_seconds": res.wall_seconds,
                        "success_rate_train_size": rate})
    print(f"{args.task} seed {args.seed}: converged={res.converged} "
          f"epochs={res.epochs_run} success@{TASKS[args.task].train_n}={rate:.3f}")
    return 0


def _row_printer(args):
    if getattr(args, "quiet", False):
        return None
    def log(row):
        fields = " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in row.items())
        print(fields, flush=True)
    return log


def load_artifact(path: str):
    path = Path(path)
    if path.suffix == ".json":
        return Program.from_json(path.read_text())
    machine, _ = LogicMachine.load(path)
    return machine


def cmd_eval(args) -> int:
    artifact = load_artifact(args.artifact)
    spec = TASKS[args.task]
    size = args.size or spec.train_n
    rate = evaluate(artifact, args.task, count=args.count, size=size)
    out = Path(args.out or f"runs/eval-{args.task}")
    write_manifest(out, "eval", args.task, None,
                   {"artifact": str(args.artifact), "count": args.count,
                    "size": size}, ["results.json"])
    write_results(out, {"task": args.task, "size": size, "count": args.count,
                        "success_rate": rate})
    print(f"{args.task} @ n={size}: success rate {rate:.4f} over {args.count} instances")
    return 0


def cmd_extract(args) -> int:
    machine, _ = LogicMachine.load(args.artifact)
    target = args.target_name or next(
        (s.target_name for s in TASKS.values()
         if network_config(s).to_dict() == machine.config.to_dict()), "Target")
    program = simplify(extract(machine, target))
    out = Path(args.out or "runs/extract")
    write_manifest(out, "extract", target, None, {"artifact": str(args.artifact)},
                   ["program.txt", "program.json"])
    (out / "program.txt").write_text(render_text(program) + "\n")
    (out / "program.json").write_text(program.to_json())
    print(render_text(program))
    return 0


def cmd_train_rl(args) -> int:
    cfg_dict = effective_config(args, args.task)
    out = Path(args.out or f"runs/train-rl-{args.task}-s{args.seed}")
    write_manifest(out, "train-rl", args.task, args.seed, cfg_dict,
                   ["model.ckpt", "policy.txt", "policy.json", "metrics.csv",
                    "results.json"])
    rl_cfg = RLConfig(**{k: cfg_dict[k] for k in RL_KEYS if k in cfg_dict})
    noise = rl_noise(**{k: cfg_dict[k] for k in NOISE_KEYS if k in cfg_dict})
    try:
        res = train_rl(args.task, args.seed, cfg=rl_cfg, noise=noise,
                       out_dir=out, log=_row_printer(args))
    except RuntimeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    write_results(out, {"task": args.task, "seed": args.seed, "solved": res.solved,
                        "episodes": res.episodes, "eval": res.final_eval,
                        "wall_seconds": res.wall_seconds})
    ev = res.final_eval
    print(f"{args.task} seed {args.seed}: solved={res.solved} episodes={res.episodes} "
          f"det={ev['program_det']['success']:.2f} "
          f"stoch={ev['program_stoch']['success']:.2f} "
          f"avg_reward={max(ev['program_det']['avg_reward'], ev['program_stoch']['avg_reward']):.3f}")
    return 0


def cmd_pss(args) -> int:
    cfg = effective_config(args, args.task)
    out = Path(args.out or f"runs/pss-{args.task}")
    write_manifest(out, "pss", args.task, list(range(args.seeds)), cfg,
                   ["results.json"])
    noise_over = {k: cfg[k] for k in NOISE_KEYS if k in cfg}
    train_kwargs = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    if noise_over:
        train_kwargs["noise"] = supervised_noise(**noise_over)
    result = pss(args.task, seeds=args.seeds, train_kwargs=train_kwargs,
                 jobs=args.jobs,
                 log=lambda seed, r: print(f"seed {seed}: {r}", flush=True))
    write_results(out, result)
    print(f"{args.task}: PSS {result['pss']:.0f}% over {args.seeds} seeds")
    return 0


def _measure(fn, repeats=3):
    fn()  # warmup, discarded
    times = []
    tracemalloc.start()
    for _ in range(repeats):
        tracemalloc.reset_peak()
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return min(times), peak


def cmd_bench_scaling(args) -> int:
    machine, _ = LogicMachine.load(args.artifact)
    spec = TASKS[args.task]
    program = simplify(extract(machine, spec.target_name))
    sizes = parse_sizes(args.sizes)
    out = Path(args.out or f"runs/bench-{args.task}")
    write_manifest(out, "bench-scaling", args.task, None,
                   {"artifact": str(args.artifact), "sizes": sizes,
                    "mode": args.mode}, ["bench.csv"])
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        inst = make_instance(spec, n, rng)
        row = {"n": n}
        if args.mode in ("program", "both"):
            t, mem = _measure(lambda: evaluate_boolean(program, inst.inputs, n))
            row["program_time_s"], row["program_mem_bytes"] = t, mem
        if args.mode in ("soft", "both"):
            floats = {k: v.astype(float) for k, v in inst.inputs.items()}
            def soft():
                with ad.no_grad():
                    machine.forward(input_groups(floats, n), supervised_noise())
            try:
                t, mem = _measure(soft)
                row["soft_time_s"], row["soft_mem_bytes"] = t, mem
            except MemoryError:
                row["soft_time_s"], row["soft_mem_bytes"] = "oom", "oom"
        rows.append(row)
        print(row, flush=True)

    fields = sorted({k for r in rows for k in r}, key=lambda k: (k != "n", k))
    with open(out / "bench.csv", "w") as fh:
        fh.write(",".join(fields) + "\n")
        for r in rows:
            fh.write(",".join(str(r.get(k, "")) for k in fields) + "\n")

    usable = [r for r in rows if isinstance(r.get("program_time_s"), float)]
    if args.mode in ("program", "both") and len(usable) >= 3:
        ns = np.log([r["n"] for r in usable])
        ts = np.log([r["program_time_s"] for r in usable])
        slope = float(np.polyfit(ns, ts, 1)[0])
        print(f"program eval log-log time exponent: {slope:.2f} "
              f"(breadth {spec.breadth})")
    return 0


def parse_sizes(text: str):
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 10
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",")]


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="logiclearn")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, task_choices, with_seed=True):
        p.add_argument("--task", required=True, choices=sorted(task_choices))
        if with_seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("train-ilp", help="train a task and extract its program")
    common(p, TASKS)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--count", type=int, default=250)
    p.set_defaults(fn=cmd_train_ilp)

    p = sub.add_parser("eval", help="success rate of a checkpoint or program")
    common(p, TASKS, with_seed=False)
    p.add_argument("--artifact", required=True)
    p.add_argument("--count", type=int, default=250)
    p.add_argument("--size", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("extract", help="extract the program from a checkpoint")
    p.add_argument("--artifact", required=True)
    p.add_argument("--target-name", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train-rl", help="train a blocks-world policy")
    common(p, RL_TASKS)
    p.add_argument("--epochs", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_train_rl)

    p = sub.add_parser("pss", help="percentage of successful seeds")
    common(p, TASKS, with_seed=False)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(fn=cmd_pss)

    p = sub.add_parser("bench-scaling", help="time/memory vs object count")
    common(p, TASKS, with_seed=False)
    p.add_argument("--artifact", required=True)
    p.add_argument("--sizes", default="10:130:10")
    p.add_argument("--mode", choices=["soft", "program", "both"], default="both")
    p.set_defaults(fn=cmd_bench_scaling)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
