"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line.  The training-based criteria take hours on one core when
no artifact cache is present (see acceptance_helpers.cache_dir)."""

import os
import time
import tracemalloc

import numpy as np
import pytest

from logiclearn import autodiff as ad
from logiclearn import predicates as pr
from logiclearn.extraction import evaluate_boolean, extract
from logiclearn.ilp import TASKS, make_instance, oracle, train_supervised
from logiclearn.ilp.generators import instance_inputs
from logiclearn.network import (LogicMachine, NetworkConfig, module_forward,
                                sample_gumbel, supervised_noise)
from logiclearn.rl import RLConfig, ValueNet, enumerate_states, train_rl
from logiclearn.rl.agent import pair_indices
from logiclearn.rl.blocksworld import BlocksWorld
from logiclearn.rl.critic import gru_cell

from acceptance_helpers import first_perfect_seed, train_cached
from helpers import check_grads, fd_directional, max_rel_err

EASY_TASKS = ["has-father", "has-sister", "is-grandparent", "adjacent-to-red",
              "4-connectivity", "1-outdegree"]
HARD_TASKS = ["is-uncle", "6-connectivity", "2-outdegree"]

_ilp_winners: dict = {}


def report(criterion, name, ok, detail=""):
    print(f"ACCEPTANCE {criterion} {name}: {'PASS' if ok else 'FAIL'} {detail}",
          flush=True)
    return ok


def winner_for(task, max_seeds):
    if task not in _ilp_winners:
        _ilp_winners[task] = first_perfect_seed(task, max_seeds)
    return _ilp_winners[task]


# -- criterion 1: benchmark reproduction --------------------------------------

@pytest.mark.parametrize("task", EASY_TASKS)
def test_criterion1_easy_tasks(task):
    seed, program, attempts = winner_for(task, max_seeds=5)
    detail = f"winning seed={seed} attempts={ {s: a.get('epochs_run') for s, a in attempts.items()} }"
    assert report(1, task, seed is not None, detail), attempts


@pytest.mark.parametrize("task", HARD_TASKS)
def test_criterion1_hard_tasks(task):
    seed, program, attempts = winner_for(task, max_seeds=10)
    detail = f"winning seed={seed} attempts={ {s: a.get('epochs_run') for s, a in attempts.items()} }"
    assert report(1, task, seed is not None, detail), attempts


def test_criterion1_mg_uncle_best_effort():
    # reported, not gated: one bounded attempt (the full budget runs hours)
    epochs = int(os.environ.get("LOGICLEARN_MGUNCLE_EPOCHS", "200"))
    program, meta = train_cached("is-mg-uncle", seed=0, epochs=epochs)
    report(1, "is-mg-uncle (best-effort)", meta.get("converged", False),
           f"epochs={meta['epochs_run']} converged={meta['converged']} "
           f"success={meta.get('success_train_size')}")


# -- criterion 2: program equivalence gate -------------------------------------

def test_criterion2_grandparent_equivalence_10k():
    seed, program, _ = winner_for("is-grandparent", max_seeds=5)
    assert program is not None, "needs a converged grandparent run"
    spec = TASKS["is-grandparent"]
    rng = np.random.default_rng(12345)
    mismatches = 0
    total = 10_000
    for i in range(total):
        n = 5 + (i * 96) // total          # spans 5..100
        inputs = instance_inputs(spec, n, rng)
        got = evaluate_boolean(program, inputs, n)
        want = oracle(spec, inputs, n)
        mismatches += int(not np.array_equal(got, want))
    assert report(2, "grandparent-equivalence",
                  mismatches == 0, f"{mismatches} mismatched instances of {total}")


# -- criterion 3: gradient suite ------------------------------------------------

def scalarize(node, proj):
    return ad.sum_all(ad.mul(node, ad.leaf(proj)))


def test_criterion3_operation_gradients():
    rng = np.random.default_rng(0)
    failures = []

    def many(name, build, make_arrays, points=100, tol=1e-5):
        worst = 0.0
        for _ in range(points):
            try:
                worst = max(worst, check_grads(build, make_arrays(), tol=tol))
            except AssertionError as err:
                failures.append(f"{name}: {err}")
                return
        # cover the op at 100 points total

    pair = lambda: [rng.uniform(0.1, 0.9, (2, 3)), rng.uniform(0.1, 0.9, (2, 3))]
    many("mul", lambda ls: ad.sum_all(ad.mul(ls[0], ls[1])), pair)
    many("add", lambda ls: ad.sum_all(ad.add(ls[0], ls[1])), pair)
    many("sub", lambda ls: ad.sum_all(ad.sub(ls[0], ls[1])), pair)
    many("affine_neg", lambda ls: ad.sum_all(ad.affine_neg(ls[0])),
         lambda: [rng.uniform(0.1, 0.9, 5)])
    many("fuzzy-conj", lambda ls: ad.sum_all(ad.mul(ls[0], ls[1])), pair)
    many("fuzzy-disj",
         lambda ls: ad.sum_all(ad.add(ls[0], ad.mul(ls[1], ad.affine_neg(ls[0])))),
         pair)
    many("exp", lambda ls: ad.sum_all(ad.exp(ls[0])), lambda: [rng.normal(size=4)])
    many("log", lambda ls: ad.sum_all(ad.log(ls[0])),
         lambda: [rng.uniform(0.2, 2.0, 4)])
    many("sigmoid", lambda ls: ad.sum_all(ad.sigmoid(ls[0])),
         lambda: [rng.normal(size=4)])
    many("tanh", lambda ls: ad.sum_all(ad.tanh(ls[0])), lambda: [rng.normal(size=4)])
    many("reduce-max", lambda ls: ad.sum_all(ad.reduce(ls[0], 1, "max")),
         lambda: [rng.uniform(0, 1, (3, 4)) + np.arange(12).reshape(3, 4) * 0.01])
    many("reduce-min", lambda ls: ad.sum_all(ad.reduce(ls[0], 1, "min")),
         lambda: [rng.uniform(0, 1, (3, 4)) + np.arange(12).reshape(3, 4) * 0.01])
    many("permute", lambda ls: ad.sum_all(ad.mul(ad.permute_axes(ls[0], (1, 0)),
                                                 ad.leaf(np.ones((3, 2))))),
         lambda: [rng.normal(size=(2, 3))])
    many("broadcast_last", lambda ls: ad.sum_all(ad.broadcast_last(ls[0], 3)),
         lambda: [rng.normal(size=4)])
    many("matmul", lambda ls: ad.sum_all(ad.matmul(ls[0], ls[1])),
         lambda: [rng.normal(size=(2, 3)), rng.normal(size=(3, 2))])
    many("matvec", lambda ls: ad.sum_all(ad.matvec(ls[0], ls[1])),
         lambda: [rng.normal(size=(3, 2)), rng.normal(size=2)])
    many("weighted_sum",
         lambda ls: ad.sum_all(ad.weighted_sum(ls[:3], ls[3])),
         lambda: [rng.uniform(0, 1, (2, 2)) for _ in range(3)] + [rng.uniform(0.1, 1, 3)])
    proj6 = rng.normal(size=6)
    many("softmax_temp",
         lambda ls: ad.sum_all(ad.mul(ad.softmax_temp(ls[0], 0.7), ad.leaf(proj6))),
         lambda: [rng.normal(size=6)])
    proj26 = rng.normal(size=(2, 6))
    many("softmax_rows",
         lambda ls: ad.sum_all(ad.mul(ad.softmax_rows(ls[0], 0.7), ad.leaf(proj26))),
         lambda: [rng.normal(size=(2, 6))])
    many("minimum", lambda ls: ad.sum_all(ad.minimum(ls[0], ls[1])), pair)
    many("maximum", lambda ls: ad.sum_all(ad.maximum(ls[0], ls[1])), pair)
    proj_h = rng.normal(size=(2, 3))
    many("gru-cell",
         lambda ls: ad.sum_all(ad.mul(gru_cell(ls[0], ls[1], ls[2], ls[3], ls[4], 3),
                                      ad.leaf(proj_h))),
         lambda: [rng.normal(size=(2, 4)), rng.normal(size=(2, 3)),
                  rng.normal(size=(4, 9)), rng.normal(size=(3, 9)),
                  rng.normal(size=9)])

    # the fused logic-unit forward (selection mixture + connectives)
    n = 3
    proj_unit = rng.normal(size=(n, 8))
    def unit_build(ls):
        g2 = pr.PredicateGroup(2, n, ["E"], ad.reshape(ls[0], (n, n, 1)))
        cs = pr.build_candidates({2: g2}, 1, 2)
        from logiclearn.network import UnitSpec
        spec = UnitSpec(8, 2)
        theta = ad.reshape(ls[1], (spec.n_selectors, cs.layout.k + 1))
        out = module_forward(cs, theta, spec, supervised_noise(), training=False)
        return ad.sum_all(ad.mul(out.node, ad.leaf(proj_unit)))
    probe = pr.build_candidates({2: pr.group_from_arrays([("E", np.zeros((n, n)))], n, 2)}, 1, 2)
    many("logic-unit", unit_build,
         lambda: [rng.uniform(0.05, 0.95, (n, n)),
                  rng.normal(size=(16, probe.layout.k + 1))],
         points=25)

    assert report(3, "operation-gradients", not failures, "; ".join(failures))


def test_criterion3_full_critic_gradient():
    rng = np.random.default_rng(1)
    net = ValueNet([("IsFloor", 1), ("Top", 1), ("On", 2)], hidden=5, rng=rng)
    params = net.parameters()
    n = 3
    worst = 0.0
    for point in range(100):
        obs = {"IsFloor": rng.random(n), "Top": rng.random(n),
               "On": rng.random((n, n))}
        out = net.forward(obs)
        ad.backward(out)
        grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.value)
                 for p in params]
        ad.zero_grads(params)
        direction = [rng.normal(size=p.value.shape) for p in params]

        def f(arrays):
            saved = [p.value for p in params]
            for p, a in zip(params, arrays):
                p.value = a
            try:
                with ad.no_grad():
                    return float(net.forward(obs).value)
            finally:
                for p, s in zip(params, saved):
                    p.value = s

        numeric = fd_directional(f, [p.value for p in params], direction)
        analytic = sum(float(np.vdot(g, d)) for g, d in zip(grads, direction))
        worst = max(worst, max_rel_err(analytic, numeric))
        # perturb parameters between points so each check sits elsewhere
        for p in params:
            p.value = p.value + rng.normal(scale=0.05, size=p.value.shape)
    assert report(3, "full-critic-gradient", worst < 1e-4, f"max rel err {worst:.3g}")


# -- criterion 4: extraction equivalence ----------------------------------------

def test_criterion4_extraction_equivalence_50_draws():
    rng = np.random.default_rng(2)
    cfg = NetworkConfig(depth=3, breadth=3, n_out=8, n_atoms=2,
                        input_signature=[("E", 2), ("R", 1)], target_arity=1)
    bad = 0
    for draw in range(50):
        machine = LogicMachine(cfg, np.random.default_rng(1000 + draw))
        program = extract(machine, "T")
        for _ in range(4):
            n = int(rng.integers(2, 5))
            e = rng.random((n, n)) < 0.5
            r = rng.random(n) < 0.5
            groups = pr.input_groups({"E": e.astype(float), "R": r.astype(float)}, n)
            hard = machine.forward(groups, harden=True).value.astype(bool)
            if not np.array_equal(hard, evaluate_boolean(program, {"E": e, "R": r}, n)):
                bad += 1
                break
    assert report(4, "hardened-forward-vs-program", bad == 0,
                  f"{bad} mismatching draws of 50")


# -- criterion 5: Gumbel-max property --------------------------------------------

def test_criterion5_gumbel_max_frequencies():
    rng = np.random.default_rng(3)
    draws = 100_000
    worst = 0.0
    for _ in range(10):
        k = int(rng.integers(3, 9))
        theta = rng.normal(scale=1.0, size=k)
        g = sample_gumbel((draws, k), 1.0, rng)
        counts = np.bincount(np.argmax(theta + g, axis=1), minlength=k) / draws
        w = np.exp(theta - theta.max())
        w /= w.sum()
        worst = max(worst, float(np.abs(counts - w).max()))
    assert report(5, "gumbel-argmax-vs-softmax", worst < 0.01,
                  f"max abs deviation {worst:.4f}")


# -- criterion 6: relational control reproduction --------------------------------

TABLE2_REWARD = {"unstack": 0.920, "stack": 0.920, "on": 0.896}

_rl_results: dict = {}


def rl_winner(task):
    from acceptance_helpers import rl_winner_cached
    if task not in _rl_results:
        _rl_results[task] = rl_winner_cached(task, max_seeds=5)
    return _rl_results[task]


def reference_on_move(obs, n):
    """(OnGoal(a,b) or IsFloor(b)) and not On(a,b) and Top(a)."""
    on_goal, is_floor = obs["OnGoal"], obs["IsFloor"]
    return (on_goal | is_floor[None, :]) & ~obs["On"] & obs["Top"][:, None]


@pytest.mark.parametrize("task", ["unstack", "stack", "on"])
def test_criterion6_rl_tasks(task):
    winner = rl_winner(task)
    solved = winner is not None
    detail = ""
    reward_ok = False
    if solved:
        reward_ok = abs(winner["reward"] - TABLE2_REWARD[task]) <= 0.05
        detail = (f"seed={winner['seed']} episodes={winner['episodes']} "
                  f"avg_reward={winner['reward']:.3f} (target {TABLE2_REWARD[task]})")
    ok = solved and reward_ok
    assert report(6, f"{task}-5-variations", ok, detail)


def test_criterion6_on_policy_equivalence():
    winner = rl_winner("on")
    assert winner is not None, "needs a solved on-task run"
    env = BlocksWorld("on", n_blocks=4)
    idx = pair_indices(env.n_objects)
    mismatches = 0
    states = 0
    for support_state in enumerate_states(4):
        for a in range(4):
            for b in range(4):
                if a == b:
                    continue
                state = support_state.__class__(support_state.support, 0, (a, b))
                if env.goal_reached(state):
                    continue
                states += 1
                obs = env.observations(state)
                got = evaluate_boolean(winner["program"], obs,
                                       env.n_objects).reshape(-1)[idx]
                want = reference_on_move(obs, env.n_objects).reshape(-1)[idx]
                if not np.array_equal(got, want):
                    mismatches += 1
    assert report(6, "on-policy-rule-equivalence", mismatches == 0,
                  f"{mismatches} differing states of {states}")


# -- criterion 7: scaling direction ----------------------------------------------

def measure(fn, repeats=3):
    fn()
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


def test_criterion7_scaling():
    seed, program, _ = winner_for("is-grandparent", max_seeds=5)
    assert program is not None, "needs a converged grandparent run"
    spec = TASKS["is-grandparent"]
    from acceptance_helpers import machine_for
    machine = machine_for("is-grandparent", seed)
    rng = np.random.default_rng(4)

    sizes = list(range(10, 101, 10))
    prog_times = []
    for n in sizes:
        inst = make_instance(spec, n, rng)
        t, _ = measure(lambda: evaluate_boolean(program, inst.inputs, n), repeats=3)
        prog_times.append(max(t, 1e-7))
    slope = float(np.polyfit(np.log(sizes), np.log(prog_times), 1)[0])

    inst = make_instance(spec, 100, rng)
    floats = {k: v.astype(float) for k, v in inst.inputs.items()}
    prog_t, prog_mem = measure(lambda: evaluate_boolean(program, inst.inputs, 100),
                               repeats=2)
    def soft():
        with ad.no_grad():
            machine.forward(pr.input_groups(floats, 100), supervised_noise())
    soft_t, soft_mem = measure(soft, repeats=2)

    ok = (prog_t < soft_t and prog_mem < soft_mem
          and slope <= spec.breadth + 0.3)
    assert report(7, "scaling",
                  ok,
                  f"program {prog_t * 1e3:.1f}ms/{prog_mem / 1e6:.1f}MB vs "
                  f"soft {soft_t * 1e3:.0f}ms/{soft_mem / 1e6:.0f}MB at n=100; "
                  f"fit exponent {slope:.2f} <= {spec.breadth + 0.3}")


# -- criterion 8: ablation switches -----------------------------------------------

def test_criterion8_ablation_switches():
    outcomes = {}
    variants = {
        "no-noise": supervised_noise(kind="none"),
        "constant-schedules": supervised_noise(tau_decay=1.0, beta_decay=1.0,
                                               dropout_decay=1.0),
        "no-dropout": supervised_noise(dropout=0.0, dropout_floor=0.0,
                                       dropout_mode="off"),
        "gaussian-noise": supervised_noise(kind="gaussian"),
    }
    for name, noise in variants.items():
        res = train_supervised("has-father", seed=0, epochs=2, noise=noise,
                               val_instances=8)
        schedule_ok = True
        if name == "constant-schedules":
            schedule_ok = res.noise.tau == 1.0 and res.noise.beta == 1.0
        outcomes[name] = len(res.metrics) == 2 and schedule_ok

    res = train_rl("unstack", seed=0, cfg=RLConfig(episode_cap=15, eval_every=1,
                                                   algo="reinforce"))
    outcomes["reinforce"] = len(res.metrics) >= 1
    res = train_rl("unstack", seed=0, cfg=RLConfig(episode_cap=15, eval_every=1,
                                                   algo="ppo"))
    outcomes["ppo"] = len(res.metrics) >= 1

    bad = [k for k, v in outcomes.items() if not v]
    assert report(8, "ablation-switches", not bad, f"failed: {bad}" if bad else
                  f"all {len(outcomes)} variants ran end-to-end")
