"""Monte Carlo Tree Search over refinement candidates for one function.

Tree layout::

    Init (root, the untouched function)
     ├── Gen   one per initial candidate, spread over the model pool
     │    ├── Success   candidate compiled and passed every test
     │    └── Fix ...   repair attempts carrying compiler / test feedback
     └── ...

Gen and Fix nodes are created as placeholders and only call the model when
they are first expanded or simulated through ("materialized"). A candidate
at depth ``d`` needs ``d < max_depth`` to be materialized, so Success nodes
never sit deeper than ``max_depth``.

Each materialized candidate carries the reward of the edge from its parent,
``(C_child - C_parent) + w * (S_child - S_parent)``, so rewards along a path
telescope to the overall improvement from the root.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

from .code_model import FunctionUnit, ProjectSnapshot, substitute
from .errors import ParseError, ProviderError, RefineError
from .refiner import SYSTEM_PROMPT, Conversation, Refiner, UsageRecord, build_prompt, make_feedback_message, postprocess
from .safety import SafetyBaseline, count_constructs, safety_ratio
from .validation import TestCase, ValidationResult, compile_score

log = logging.getLogger(__name__)

INIT, GEN, FIX, SUCCESS = "Init", "Gen", "Fix", "Success"
WITH_FEEDBACK, NO_FEEDBACK = "with-feedback", "no-feedback"


class Validator(Protocol):
    def validate(self, program: ProjectSnapshot, suite: Sequence[TestCase] | None = None) -> ValidationResult: ...


@dataclass(frozen=True)
class RefinementAction:
    kind: str
    model_id: str


@dataclass
class SearchConfig:
    num_rollouts: int = 10
    uct_c: float = 1.5
    max_depth: int = 5
    gen_children: int = 4
    fix_children: int = 2
    reward_weight: float = 2.0
    seed: int = 0
    early_exit: bool = False
    dead_penalty: float = -1.0
    parallel: bool = False

    def __post_init__(self):
        if self.num_rollouts < 1 or self.max_depth < 1 or self.gen_children < 1 or self.fix_children < 0:
            raise ValueError("num_rollouts, max_depth and gen_children must be >= 1")
        if self.reward_weight < 0:
            raise ValueError("reward_weight must be >= 0")


@dataclass(eq=False)
class SearchNode:
    node_type: str
    program: ProjectSnapshot
    conversation: Conversation
    depth: int = 0
    body: str | None = None
    action: RefinementAction | None = None
    seed: int = 0
    parent: "SearchNode | None" = field(default=None, repr=False)
    children: list["SearchNode"] = field(default_factory=list, repr=False)
    edge_reward: float = 0.0
    q_value: float = 0.0
    visits: int = 0
    materialized: bool = False
    dead: bool = False
    validation: ValidationResult | None = None
    compile_score: float | None = None
    safety: float | None = None
    response: str | None = None
    order: int = 0
    id: str = ""

    @property
    def is_terminal(self) -> bool:
        return self.node_type == SUCCESS or self.dead

    def walk(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class SearchResult:
    best: SearchNode
    found_success: bool
    rollouts_used: int
    usage: UsageRecord
    tree_stats: dict[str, Any]
    root: SearchNode

    @property
    def program(self) -> ProjectSnapshot:
        return self.best.program


# ---------------------------------------------------------------------------
# pure pieces


def uct_score(child: SearchNode, parent_visits: int, uct_c: float) -> float:
    """Mean return through ``child`` plus the exploration bonus; +inf when unvisited.

    The return of taking ``child`` includes its own edge reward, which the
    node's accumulated value does not (that edge is credited to the parent).
    """
    if child.visits == 0:
        return math.inf
    exploit = child.edge_reward + child.q_value / child.visits
    if parent_visits <= 0:
        return exploit
    return exploit + uct_c * math.sqrt(math.log(parent_visits) / child.visits)


def node_reward(prev: tuple[float, float], curr: tuple[float, float], w: float) -> float:
    """(C_curr - C_prev) + w * (S_curr - S_prev) for (C, S) pairs."""
    return (curr[0] - prev[0]) + w * (curr[1] - prev[1])


def backpropagate(path: Sequence[SearchNode]) -> None:
    """Each node gains one visit and the rewards of the edges below it on ``path``."""
    below = 0.0
    for node in reversed(path):
        node.visits += 1
        node.q_value += below
        below += node.edge_reward


def find_best_solution(root: SearchNode) -> SearchNode:
    """Highest-safety Success node (shallower, then earlier on ties), else the root."""
    successes = [n for n in root.walk() if n.node_type == SUCCESS]
    if not successes:
        return root
    return min(successes, key=lambda n: (-(n.safety or 0.0), n.depth, n.order))


def _exhausted(node: SearchNode) -> bool:
    """Nothing left to learn below ``node``: every leaf is a Success or dead node."""
    if node.node_type == SUCCESS or node.dead:
        return True
    if not node.materialized:
        return False
    return all(_exhausted(c) for c in node.children)


def _selectable(node: SearchNode) -> bool:
    # unvisited siblings always get their first visit, even when nothing lies below them
    return not node.dead and (node.visits == 0 or not _exhausted(node))


def select(root: SearchNode, config: SearchConfig) -> list[SearchNode]:
    path = [root]
    node = root
    while (
        node.materialized
        and not node.is_terminal
        and node.children
        and node.depth < config.max_depth
    ):
        options = [c for c in node.children if _selectable(c)]
        if not options:
            break
        best = options[0]
        best_score = uct_score(best, node.visits, config.uct_c)
        for child in options[1:]:
            score = uct_score(child, node.visits, config.uct_c)
            if score > best_score:
                best, best_score = child, score
        path.append(best)
        node = best
    return path


# ---------------------------------------------------------------------------
# the search


class TreeSearch:
    """One search tree for one function unit."""

    def __init__(
        self,
        unit: FunctionUnit,
        program: ProjectSnapshot,
        config: SearchConfig,
        *,
        refiner: Refiner,
        validator: Validator,
        baseline: SafetyBaseline | None = None,
        suite: Sequence[TestCase] | None = None,
        root_safety: float | None = None,
    ):
        self.unit = program.unit(unit.id)
        self.program = program
        self.config = config
        self.refiner = refiner
        self.validator = validator
        self.suite = list(suite) if suite else None
        self.baseline = baseline or SafetyBaseline(count_constructs(program))
        self._counter = itertools.count()
        self.base_conversation = Conversation.start(build_prompt(self.unit), SYSTEM_PROMPT)
        if root_safety is None:
            root_safety = safety_ratio(count_constructs(program), self.baseline, True)
        # the input program is compilable by premise
        self.root = self._new_node(
            INIT, program, self.base_conversation, depth=0, body=self.unit.body,
        )
        self.root.materialized = True
        self.root.compile_score = 1.0
        self.root.safety = root_safety
        self.rollouts_used = 0
        self._usage_start = refiner.usage

    # -- node creation ------------------------------------------------------

    def _new_node(self, node_type: str, program: ProjectSnapshot, conversation: Conversation, **kw) -> SearchNode:
        order = next(self._counter)
        return SearchNode(node_type, program, conversation, order=order, id=f"n{order}", **kw)

    def _add_child(self, parent: SearchNode, node_type: str, conversation: Conversation, **kw) -> SearchNode:
        child = self._new_node(node_type, parent.program, conversation, depth=parent.depth + 1, parent=parent, **kw)
        parent.children.append(child)
        return child

    def _spawn_gen_children(self, root: SearchNode) -> None:
        models = self.refiner.pool.model_ids
        k = len(models)
        base, extra = divmod(self.config.gen_children, k)
        for mi, model in enumerate(models):
            for slot in range(base + (1 if mi < extra else 0)):
                self._add_child(
                    root, GEN, self.base_conversation,
                    action=RefinementAction(NO_FEEDBACK, model), seed=self.config.seed + slot,
                )

    # -- materialization ----------------------------------------------------

    def materialize(self, node: SearchNode) -> None:
        """Query the model for ``node``, validate the candidate and attach its children."""
        if self._evaluate(node):
            self._attach(node)

    def _evaluate(self, node: SearchNode) -> bool:
        """Model call, extraction, validation and edge reward; leaves the tree shape alone.

        Returns True when ``node`` was evaluated now and still needs its children.
        """
        if node.materialized or node.node_type not in (GEN, FIX):
            return False
        node.materialized = True
        parent = node.parent
        try:
            text, _ = self.refiner.generate(
                node.action.model_id, node.conversation, node.seed,
                node_id=node.id, function_id=self.unit.id,
            )
        except ProviderError as exc:
            self._kill(node, f"transport: {exc}")
            return False
        node.response = text
        node.conversation = node.conversation.extend("assistant", text)
        try:
            body = postprocess(text)
            program = substitute(self.program, self.unit.id, body)
        except RefineError as exc:
            self._kill(node, f"extraction: {exc}")
            return False
        node.body = body
        node.program = program
        result = self.validator.validate(program, self.suite)
        node.validation = result
        node.compile_score = compile_score(result.compile)
        safety = 0.0
        if result.compile.success:
            try:
                safety = safety_ratio(count_constructs(program), self.baseline, True)
            except ParseError as exc:
                log.warning("could not count constructs for %s: %s", node.id, exc)
        node.safety = safety
        node.edge_reward = node_reward(
            (parent.compile_score, parent.safety), (node.compile_score, node.safety), self.config.reward_weight
        )
        return True

    def _attach(self, node: SearchNode) -> None:
        result = node.validation
        if result.passed:
            success = self._add_child(
                node, SUCCESS, node.conversation, body=node.body, action=node.action, seed=node.seed,
                materialized=True, validation=result, compile_score=node.compile_score, safety=node.safety,
            )
            success.program = node.program
            return
        # repairs need room for their own Success child
        if node.depth + 1 >= self.config.max_depth:
            return
        conversation = node.conversation.extend("user", make_feedback_message(result))
        for slot in range(self.config.fix_children):
            child = self._add_child(
                node, FIX, conversation,
                action=RefinementAction(WITH_FEEDBACK, node.action.model_id), seed=self.config.seed + slot,
            )
            child.program = node.program

    def _kill(self, node: SearchNode, why: str) -> None:
        log.info("node %s dead (%s)", node.id, why)
        node.dead = True
        node.edge_reward = self.config.dead_penalty

    def _materialize_all(self, nodes: Sequence[SearchNode]) -> None:
        todo = [n for n in nodes if not n.materialized]
        if self.config.parallel and len(todo) > 1:
            # model calls and builds overlap; children are attached in creation order
            with ThreadPoolExecutor(max_workers=len(todo)) as pool:
                fresh = list(pool.map(self._evaluate, todo))
            for node, needs_children in zip(todo, fresh):
                if needs_children:
                    self._attach(node)
        else:
            for n in todo:
                self.materialize(n)

    # -- the four phases ----------------------------------------------------

    def select(self) -> list[SearchNode]:
        return select(self.root, self.config)

    def expand(self, leaf: SearchNode) -> None:
        if leaf.node_type == INIT:
            if not leaf.children:
                self._spawn_gen_children(leaf)
        elif not leaf.materialized and leaf.depth < self.config.max_depth:
            self.materialize(leaf)

    def simulate(self, leaf: SearchNode) -> list[SearchNode]:
        """Greedy descent by edge reward until a Success node, a dead end or the depth limit."""
        path: list[SearchNode] = []
        node = leaf
        while not node.is_terminal and node.children and node.depth < self.config.max_depth:
            self._materialize_all(node.children)
            alive = [c for c in node.children if not c.dead]
            if not alive:
                break
            best = alive[0]
            for c in alive[1:]:
                if c.edge_reward > best.edge_reward:
                    best = c
            path.append(best)
            node = best
        return path

    def rollout(self) -> SearchNode:
        path = self.select()
        leaf = path[-1]
        self.expand(leaf)
        tail = self.simulate(leaf)
        backpropagate(path + tail)
        self.rollouts_used += 1
        return tail[-1] if tail else leaf

    def run(self) -> SearchResult:
        for _ in range(self.config.num_rollouts):
            self.rollout()
            if self.config.early_exit:
                best = find_best_solution(self.root)
                if best.node_type == SUCCESS and (best.safety or 0.0) >= 1.0:
                    break
        return self.result()

    def result(self) -> SearchResult:
        best = find_best_solution(self.root)
        return SearchResult(
            best=best,
            found_success=best.node_type == SUCCESS,
            rollouts_used=self.rollouts_used,
            usage=self.refiner.usage - self._usage_start,
            tree_stats=tree_stats(self.root),
            root=self.root,
        )


def tree_stats(root: SearchNode) -> dict[str, Any]:
    by_type = {INIT: 0, GEN: 0, FIX: 0, SUCCESS: 0}
    max_depth = 0
    dead = materialized = 0
    for n in root.walk():
        by_type[n.node_type] += 1
        max_depth = max(max_depth, n.depth)
        dead += n.dead
        materialized += n.materialized
    return {"node_counts": by_type, "max_depth": max_depth, "dead": dead, "materialized": materialized}


def dump_tree(root: SearchNode) -> list[dict[str, Any]]:
    """Flat, JSON-friendly export of every node in creation order."""
    rows = []
    for n in sorted(root.walk(), key=lambda n: n.order):
        rows.append(
            {
                "id": n.id,
                "parent": n.parent.id if n.parent else None,
                "type": n.node_type,
                "depth": n.depth,
                "model": n.action.model_id if n.action else None,
                "action": n.action.kind if n.action else None,
                "seed": n.seed,
                "materialized": n.materialized,
                "dead": n.dead,
                "edge_reward": n.edge_reward,
                "q_value": n.q_value,
                "visits": n.visits,
                "compile_score": n.compile_score,
                "safety": n.safety,
                "compile_errors": n.validation.compile.error_count if n.validation else None,
            }
        )
    return rows


def mcts_search(
    unit: FunctionUnit,
    program: ProjectSnapshot,
    config: SearchConfig,
    suite: Sequence[TestCase] | None = None,
    *,
    refiner: Refiner,
    validator: Validator,
    baseline: SafetyBaseline | None = None,
) -> SearchResult:
    """Refine ``unit`` inside ``program``; the result's program is the input when nothing validated."""
    return TreeSearch(
        unit, program, config, refiner=refiner, validator=validator, baseline=baseline, suite=suite
    ).run()
