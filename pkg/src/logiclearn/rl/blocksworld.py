"""Blocks-world environment for the relational control tasks.

Objects are m blocks plus the floor (index m).  Every block rests on exactly
one support; the support relation forms a forest rooted at the floor, and at
most one block sits directly on any block (the floor holds any number).
Observable predicates are IsFloor(X), Top(X) and On(X, Y), plus OnGoal(X, Y)
for the goal-directed task.  Top(X) holds when X is a block with nothing on
it; the floor is never Top.

Actions are Move(X, Y) over ordered object pairs with X != Y.  A legal move
requires Top(X), X not the floor, and Y either the floor or Top(Y); illegal
moves leave the state unchanged but still consume the step.  Episodes end
when the task's goal holds (all blocks on the floor for unstack; a single
tower for stack; the goal pair resting for on) or at the horizon.  Rewards
are a constant per-step penalty plus a terminal bonus on reaching the goal;
the shaping constants reproduce roughly 0.92-scale episode returns for
short optimal episodes and are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

TASK_SIGNATURES = {
    "unstack": [("IsFloor", 1), ("Top", 1), ("On", 2)],
    "stack": [("IsFloor", 1), ("Top", 1), ("On", 2)],
    "on": [("IsFloor", 1), ("Top", 1), ("On", 2), ("OnGoal", 2)],
}


@dataclass(frozen=True)
class BlocksState:
    support: tuple            # per block: index of its support (block or floor)
    steps: int = 0
    goal: tuple = None        # (a, b) pair for the on task

    @property
    def n_blocks(self) -> int:
        return len(self.support)


class BlocksWorld:
    def __init__(self, task: str, n_blocks: int = 4, horizon: int = 50,
                 step_penalty: float = 0.02, terminal_reward: float = 1.0):
        if task not in TASK_SIGNATURES:
            raise ValueError(f"unknown blocks-world task {task!r}")
        self.task = task
        self.n_blocks = n_blocks
        self.n_objects = n_blocks + 1
        self.floor = n_blocks
        self.horizon = horizon
        self.step_penalty = step_penalty
        self.terminal_reward = terminal_reward
        self.pairs = [(x, y) for x in range(self.n_objects)
                      for y in range(self.n_objects) if x != y]

    # -- state construction --------------------------------------------------

    def random_support(self, rng: np.random.Generator) -> tuple:
        support = [None] * self.n_blocks
        occupied = set()
        for b in rng.permutation(self.n_blocks):
            tops = [i for i in range(self.n_blocks)
                    if support[i] is not None and i not in occupied]
            options = [self.floor] + tops
            pick = options[int(rng.integers(len(options)))]
            support[b] = pick
            if pick != self.floor:
                occupied.add(pick)
        return tuple(support)

    def reset(self, rng: np.random.Generator) -> BlocksState:
        """Random non-terminal initial state (and goal pair for the on task)."""
        while True:
            support = self.random_support(rng)
            goal = None
            if self.task == "on":
                a, b = rng.choice(self.n_blocks, size=2, replace=False)
                goal = (int(a), int(b))
            state = BlocksState(support, 0, goal)
            if not self.goal_reached(state):
                return state

    # -- predicates -----------------------------------------------------------

    def tops(self, state: BlocksState) -> np.ndarray:
        """Top(X): no block on X and X is not the floor."""
        covered = np.zeros(self.n_objects, dtype=bool)
        for b, s in enumerate(state.support):
            if s != self.floor:
                covered[s] = True
        top = ~covered
        top[self.floor] = False
        return top

    def observations(self, state: BlocksState) -> dict:
        n = self.n_objects
        on = np.zeros((n, n), dtype=bool)
        for b, s in enumerate(state.support):
            on[b, s] = True
        is_floor = np.zeros(n, dtype=bool)
        is_floor[self.floor] = True
        obs = {"IsFloor": is_floor, "Top": self.tops(state), "On": on}
        if self.task == "on":
            on_goal = np.zeros((n, n), dtype=bool)
            on_goal[state.goal] = True
            obs["OnGoal"] = on_goal
        return obs

    # -- dynamics ---------------------------------------------------------------

    def legal(self, state: BlocksState, x: int, y: int) -> bool:
        if x == self.floor or x == y:
            return False
        top = self.tops(state)
        if not top[x]:
            return False
        return y == self.floor or top[y]

    def goal_reached(self, state: BlocksState) -> bool:
        if self.task == "unstack":
            return all(s == self.floor for s in state.support)
        if self.task == "stack":
            return sum(s == self.floor for s in state.support) == 1
        a, b = state.goal
        return state.support[a] == b

    def step(self, state: BlocksState, action) -> tuple:
        """Apply Move(X, Y); returns (state, reward, done)."""
        if isinstance(action, (int, np.integer)):
            if not 0 <= action < len(self.pairs):
                raise ValueError(f"action index {action} outside [0, {len(self.pairs)})")
            x, y = self.pairs[action]
        else:
            x, y = action
            if x == y or not (0 <= x < self.n_objects and 0 <= y < self.n_objects):
                raise ValueError(f"malformed action ({x}, {y})")
        support = state.support
        if self.legal(state, x, y):
            support = tuple(y if b == x else s for b, s in enumerate(support))
        nxt = BlocksState(support, state.steps + 1, state.goal)
        reached = self.goal_reached(nxt)
        reward = -self.step_penalty + (self.terminal_reward if reached else 0.0)
        done = reached or nxt.steps >= self.horizon
        return nxt, reward, done

    def optimal_steps(self, state: BlocksState) -> int:
        """Exact shortest solution length by breadth-first search."""
        if self.goal_reached(state):
            return 0
        seen = {state.support}
        frontier = [state]
        depth = 0
        while frontier:
            depth += 1
            nxt_frontier = []
            for st in frontier:
                for x, y in self.pairs:
                    if not self.legal(st, x, y):
                        continue
                    support = tuple(y if b == x else s for b, s in enumerate(st.support))
                    if support in seen:
                        continue
                    child = BlocksState(support, 0, st.goal)
                    if self.goal_reached(child):
                        return depth
                    seen.add(support)
                    nxt_frontier.append(child)
            frontier = nxt_frontier
        raise RuntimeError("goal unreachable")


def enumerate_states(n_blocks: int, goal=None):
    """All valid support configurations (forests with unit block capacity)."""
    floor = n_blocks
    states = []
    def valid(support):
        used = [s for s in support if s != floor]
        if len(used) != len(set(used)):
            return False
        for b in range(n_blocks):        # acyclic: every chain hits the floor
            seen = set()
            cur = b
            while cur != floor:
                if cur in seen:
                    return False
                seen.add(cur)
                cur = support[cur]
        return True

    def rec(prefix):
        if len(prefix) == n_blocks:
            if valid(prefix):
                states.append(BlocksState(tuple(prefix), 0, goal))
            return
        for s in list(range(n_blocks)) + [floor]:
            if s != len(prefix):
                rec(prefix + [s])
    rec([])
    return states


# ---------------------------------------------------------------------------
# frozen evaluation variations

def parse_variations(text: str, task: str):
    """Plain-text block layouts: one variation per line, stacks bottom-first
    separated by '|', with 'goal a b' appended for the on task."""
    variations = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        goal = None
        if "goal" in line:
            line, goal_part = line.split("goal")
            goal = tuple(int(t) for t in goal_part.split())
        blocks = {}
        n_blocks = 0
        for stack in line.split("|"):
            ids = [int(t) for t in stack.split()]
            for pos, b in enumerate(ids):
                blocks[b] = ids[pos - 1] if pos else None
            n_blocks += len(ids)
        support = tuple(blocks[b] if blocks[b] is not None else n_blocks
                        for b in range(n_blocks))
        variations.append(BlocksState(support, 0, goal))
    return variations


def render_variation(state: BlocksState, floor: int) -> str:
    stacks = []
    roots = [b for b, s in enumerate(state.support) if s == floor]
    for root in sorted(roots):
        stack = [root]
        while True:
            above = [b for b, s in enumerate(state.support) if s == stack[-1]]
            if not above:
                break
            stack.append(above[0])
        stacks.append(" ".join(str(b) for b in stack))
    line = " | ".join(stacks)
    if state.goal is not None:
        line += f"  goal {state.goal[0]} {state.goal[1]}"
    return line


def load_variations(task: str):
    text = resources.files("logiclearn.rl").joinpath(f"fixtures/{task}.txt").read_text()
    return parse_variations(text, task)


def generate_all_variations(seed: int = 0, count: int = 5, n_blocks: int = 4):
    """Regenerate the frozen evaluation variations (provenance of fixtures/).

    One shared stream draws the three tasks in order; states whose optimal
    solution is shorter than two moves are skipped so episode returns stay
    away from the trivial ceiling.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for task in ("unstack", "stack", "on"):
        env = BlocksWorld(task, n_blocks=n_blocks)
        picked = []
        while len(picked) < count:
            state = env.reset(rng)
            if env.optimal_steps(state) >= 2:
                picked.append(state)
        out[task] = picked
    return out
