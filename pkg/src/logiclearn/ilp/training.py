"""Supervised training on the benchmark tasks.

Per gradient step a fresh batch of instances is generated, run through the
machine in training mode (shared selection noise across the batch), and
scored with class-reweighted binary cross-entropy over all groundings.  An
epoch is a fixed number of steps followed by one annealing move; after each
epoch the extracted, simplified program is scored on a frozen validation set
and training stops early once it is perfect there.

All randomness derives from the run seed through named child streams, so a
repeated run is bit-identical.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import autodiff as ad
from ..extraction import evaluate_boolean, extract, interpretability_gauge, simplify
from ..network import LogicMachine, NoiseSchedule, supervised_noise
from ..predicates import input_groups
from .generators import ILPInstance, make_instance
from .tasks import TASKS, TaskSpec, network_config

POS_WEIGHT_CAP = 100.0


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    task_id: str
    seed: int
    machine: LogicMachine
    program: object            # simplified extracted program
    raw_program: object
    metrics: list
    epochs_run: int
    converged: bool
    wall_seconds: float
    noise: NoiseSchedule


def batch_groups(instances, n):
    stacked = {}
    for name in instances[0].inputs:
        stacked[name] = np.stack([inst.inputs[name] for inst in instances]).astype(float)
    return input_groups(stacked, n, batched=True)


def bce_loss(head: ad.Node, targets: np.ndarray) -> ad.Node:
    """Class-reweighted binary cross-entropy over all groundings.

    Positives are weighted by the batch negative/positive ratio (capped) so
    sparse targets do not collapse to the all-false predictor.
    """
    y = targets.astype(float)
    n_pos = float(y.sum())
    n_neg = float(y.size - n_pos)
    w_pos = min(POS_WEIGHT_CAP, n_neg / n_pos) if n_pos > 0 else 1.0
    p = ad.clip(head, 1e-12, 1.0 - 1e-12)
    pos_term = ad.mul_const(ad.log(p), w_pos * y)
    neg_term = ad.mul_const(ad.log(ad.affine_neg(p)), 1.0 - y)
    denom = w_pos * n_pos + n_neg
    return ad.scale(ad.sum_all(ad.add(pos_term, neg_term)), -1.0 / denom)


def program_success(program, instances) -> float:
    """Fraction of instances where every grounding matches the target."""
    good = 0
    for inst in instances:
        out = evaluate_boolean(program, inst.inputs, inst.n)
        good += bool(np.array_equal(out, inst.target))
    return good / len(instances)


def train_supervised(task, seed: int, *, epochs: Optional[int] = None,
                     batch_size: int = 4, steps_per_epoch: int = 25,
                     noise: Optional[NoiseSchedule] = None,
                     val_instances: int = 64, out_dir=None,
                     log=None) -> TrainResult:
    """Train one machine on one task from one seed; see module docstring."""
    spec = task if isinstance(task, TaskSpec) else TASKS[task]
    cap = epochs if epochs is not None else spec.epoch_cap
    noise = noise if noise is not None else supervised_noise()

    seq = np.random.SeedSequence(seed)
    init_rng, noise_rng, data_rng, val_rng = (np.random.default_rng(s)
                                              for s in seq.spawn(4))
    machine = LogicMachine(network_config(spec), init_rng)
    adam = ad.AdamState(machine.parameters(), lr=0.005)
    params = machine.parameters()
    val_set = [make_instance(spec, spec.train_n, val_rng) for _ in range(val_instances)]

    start = time.perf_counter()
    metrics = []
    converged = False
    epochs_run = 0
    program = raw_program = None
    for epoch in range(cap):
        losses = []
        correct = total = 0
        for _ in range(steps_per_epoch):
            insts = [make_instance(spec, spec.train_n, data_rng)
                     for _ in range(batch_size)]
            groups = batch_groups(insts, spec.train_n)
            targets = np.stack([inst.target for inst in insts])
            head = machine.forward(groups, noise, training=True, rng=noise_rng)
            loss = bce_loss(head, targets)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"{spec.task_id} seed {seed}: non-finite loss at epoch {epoch} "
                    f"(tau={noise.tau:.4g} beta={noise.beta:.4g})")
            ad.backward(loss)
            adam.step()
            ad.zero_grads(params)
            losses.append(float(loss.value))
            correct += int(((head.value > 0.5) == targets).sum())
            total += targets.size

        noise = noise.anneal()
        raw_program = extract(machine, spec.target_name)
        program = simplify(raw_program)
        extract_acc = program_success(program, val_set)
        row = {"epoch": epoch, "loss": float(np.mean(losses)),
               "soft_acc": correct / total, "extract_acc": extract_acc,
               "tau": noise.tau, "beta": noise.beta, "dropout": noise.dropout,
               "gauge": interpretability_gauge(machine, noise.tau)}
        metrics.append(row)
        epochs_run = epoch + 1
        if log:
            log(row)
        if extract_acc == 1.0:
            converged = True
            break

    if program is None:  # zero-epoch run still yields a valid artifact
        raw_program = extract(machine, spec.target_name)
        program = simplify(raw_program)

    result = TrainResult(spec.task_id, seed, machine, program, raw_program,
                         metrics, epochs_run, converged,
                         time.perf_counter() - start, noise)
    if out_dir is not None:
        save_artifacts(result, out_dir)
    return result


def save_artifacts(result: TrainResult, out_dir):
    from pathlib import Path
    from ..extraction import render_text

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.machine.save(out / "model.ckpt")
    (out / "program.txt").write_text(render_text(result.program) + "\n")
    (out / "program.json").write_text(result.program.to_json())
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "soft_acc",
                                                "extract_acc", "tau", "beta",
                                                "dropout", "gauge"])
        writer.writeheader()
        writer.writerows(result.metrics)


def soft_success(machine: LogicMachine, instances) -> float:
    good = 0
    for inst in instances:
        with ad.no_grad():
            head = machine.forward(input_groups(
                {k: v.astype(float) for k, v in inst.inputs.items()}, inst.n),
                supervised_noise())
        good += bool(np.array_equal(head.value > 0.5, inst.target))
    return good / len(instances)


def evaluate(artifact, task, count: int = 250, size: Optional[int] = None,
             seed: int = 9000) -> float:
    """Success rate over fresh random instances.

    An instance is a success iff every grounding of the target matches the
    oracle (soft models thresholded at 0.5).
    """
    spec = task if isinstance(task, TaskSpec) else TASKS[task]
    n = size if size is not None else spec.train_n
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, count]))
    instances = [make_instance(spec, n, rng) for _ in range(count)]
    if isinstance(artifact, LogicMachine):
        return soft_success(artifact, instances)
    return program_success(artifact, instances)


def _pss_one(packed):
    task_id, seed, eval_count, train_kwargs = packed
    res = train_supervised(TASKS[task_id], seed, **train_kwargs)
    rate = evaluate(res.program, TASKS[task_id], count=eval_count,
                    size=TASKS[task_id].train_n)
    return seed, {"success_rate": rate, "epochs": res.epochs_run,
                  "converged": res.converged}


def pss(task, seeds=10, *, eval_count: int = 250, train_kwargs: Optional[dict] = None,
        jobs: int = 1, log=None) -> dict:
    """Percentage of seeds whose extracted program is perfect at training size.

    Seeds are independent; with jobs > 1 they train in parallel workers, each
    owning its own tape and seed-derived random streams.
    """
    spec = task if isinstance(task, TaskSpec) else TASKS[task]
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    packed = [(spec.task_id, seed, eval_count, train_kwargs or {})
              for seed in seed_list]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(_pss_one, packed))
    else:
        pairs = [_pss_one(p) for p in packed]
    results = {}
    for seed, row in pairs:
        results[seed] = row
        if log:
            log(seed, row)
    pct = 100.0 * np.mean([r["success_rate"] == 1.0 for r in results.values()])
    return {"task": spec.task_id, "pss": pct, "seeds": results}
