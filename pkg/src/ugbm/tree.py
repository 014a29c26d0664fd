"""Leaf-wise regression tree growth and single-tree prediction."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, PartitionAssignment
from .loss import GradHess
from .splitter import Mode, NodeStats, SplitCandidate, SplitDescriptor, SplitterConfig, find_split


@dataclass(frozen=True)
class TreeConfig:
    mode: Mode = Mode.UNBIASED
    min_data_in_leaf: int = 1
    merge_validation: bool = True
    n_total: int = 1
    max_leaves: int = 31
    max_depth: int = 10
    min_split_gain: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_leaves < 1 or self.max_depth < 0:
            raise ValueError("max_leaves must be >= 1 and max_depth >= 0")

    def splitter(self) -> SplitterConfig:
        return SplitterConfig(self.mode, self.min_data_in_leaf, self.merge_validation, self.n_total)


@dataclass
class TreeNode:
    id: int
    depth: int
    weight: float
    n_train: int
    g_train: float
    split: Optional[SplitDescriptor] = None
    left: Optional[int] = None
    right: Optional[int] = None
    scores: Optional[tuple[float, float, float]] = None
    stats: Optional[NodeStats] = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class PopEvent:
    """One iteration of the growth loop: which leaf was popped and what happened."""

    node: int
    feature: int
    score: float
    action: str  # "split" or "stop"


@dataclass
class Tree:
    nodes: list[TreeNode]
    n_features: int
    importance_delta: np.ndarray = field(default=None)
    trace: list[PopEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.importance_delta is None:
            self.importance_delta = np.zeros(self.n_features)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def n_leaves(self) -> int:
        return sum(n.is_leaf for n in self.nodes)

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def internal_nodes(self):
        return [n for n in self.nodes if not n.is_leaf]

    def scale_weights(self, c: float) -> "Tree":
        nodes = [
            TreeNode(n.id, n.depth, n.weight * c, n.n_train, n.g_train, n.split, n.left, n.right, n.scores, n.stats)
            for n in self.nodes
        ]
        return Tree(nodes, self.n_features, self.importance_delta.copy(), list(self.trace))

    def route(self, X) -> dict[int, np.ndarray]:
        """Row indices reaching every node (internal nodes included)."""
        X = np.asarray(X, dtype=np.float64)
        out = {0: np.arange(X.shape[0])}
        stack = [0]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                continue
            rows = out[node.id]
            go_left = node.split.goes_left(X[rows, node.split.feature])
            out[node.left] = rows[go_left]
            out[node.right] = rows[~go_left]
            stack.extend((node.left, node.right))
        return out

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        for node_id, rows in self.route(X).items():
            node = self.nodes[node_id]
            if node.is_leaf:
                out[rows] = node.weight
        return out

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            d = {"id": n.id}
            if n.is_leaf:
                d["leaf"] = {"weight": n.weight}
            else:
                split = {"feature": n.split.feature}
                if n.split.is_categorical:
                    split["left_categories"] = sorted(n.split.left_codes)
                else:
                    split["threshold"] = n.split.threshold
                split.update(scores=list(n.scores), left=n.left, right=n.right)
                d["split"] = split
                # internal weight kept so prefix sub-trees remain usable
                d["weight"] = n.weight
            d["depth"] = n.depth
            d["stats"] = {"n_train": n.n_train, "g_train": n.g_train}
            nodes.append(d)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "Tree":
        nodes = []
        for i, nd in enumerate(d["nodes"]):
            if nd["id"] != i:
                raise ValueError("node ids must be dense and ordered")
            stats = nd["stats"]
            if "leaf" in nd:
                nodes.append(TreeNode(i, nd["depth"], float(nd["leaf"]["weight"]), int(stats["n_train"]), float(stats["g_train"])))
                continue
            sp = nd["split"]
            if "left_categories" in sp:
                desc = SplitDescriptor(int(sp["feature"]), left_codes=frozenset(sp["left_categories"]))
            else:
                desc = SplitDescriptor(int(sp["feature"]), threshold=float(sp["threshold"]))
            if not 0 <= desc.feature < n_features:
                raise ValueError(f"split feature {desc.feature} out of range")
            nodes.append(
                TreeNode(
                    i, nd["depth"], float(nd.get("weight", 0.0)), int(stats["n_train"]), float(stats["g_train"]),
                    desc, int(sp["left"]), int(sp["right"]), tuple(float(s) for s in sp["scores"]),
                )
            )
        for n in nodes:
            if not n.is_leaf and not (0 < n.left < len(nodes) and 0 < n.right < len(nodes)):
                raise ValueError("child id out of range")
        return cls(nodes, n_features)


def predict_row(tree: Tree, row) -> float:
    """Route one row (indexable by feature) to its leaf and return the leaf weight."""
    node = tree.root
    while not node.is_leaf:
        x = row[node.split.feature]
        if node.split.is_categorical:
            left = int(x) in node.split.left_codes
        else:
            left = x <= node.split.threshold
        node = tree.nodes[node.left if left else node.right]
    return node.weight


def _priority(cand: SplitCandidate, mode: Mode) -> float:
    return cand.gain if mode == Mode.CLASSIC else cand.score3


def grow(dataset: Dataset, grad_hess: GradHess, buckets: PartitionAssignment, config: TreeConfig, executor=None) -> Tree:
    """Grow one tree best-first.

    The frontier holds splittable leaves keyed by their best split's score
    (score3 in unbiased mode, the classic gain otherwise). Each iteration pops
    the best leaf and credits its score to the split feature; if the score is
    below ``min_split_gain`` growth ends, otherwise the leaf is split. In
    classic mode only materialized splits are credited.
    """
    sconf = config.splitter()
    root_rows = np.arange(dataset.n_rows)
    root_stats = NodeStats.from_rows(root_rows, grad_hess, buckets)
    nodes = [TreeNode(0, 0, root_stats.weight(), root_stats.n_train, root_stats.g_train, stats=root_stats)]
    rows_of = {0: root_rows}
    tree = Tree(nodes, dataset.n_features)

    heap: list = []
    candidates: dict[int, SplitCandidate] = {}

    def consider(node: TreeNode):
        if node.depth >= config.max_depth:
            return
        cand = find_split(rows_of[node.id], dataset, grad_hess, buckets, sconf, executor=executor, parent=node.stats)
        if cand is None:
            return
        candidates[node.id] = cand
        heapq.heappush(heap, (-_priority(cand, config.mode), node.id))

    if config.max_leaves > 1:
        consider(nodes[0])

    n_leaves = 1
    while n_leaves < config.max_leaves and heap:
        _, node_id = heapq.heappop(heap)
        cand = candidates.pop(node_id)
        score = _priority(cand, config.mode)
        if score < config.min_split_gain:
            if config.mode == Mode.UNBIASED:
                tree.importance_delta[cand.feature] += score
            tree.trace.append(PopEvent(node_id, cand.feature, score, "stop"))
            break
        tree.importance_delta[cand.feature] += score
        tree.trace.append(PopEvent(node_id, cand.feature, score, "split"))

        parent = nodes[node_id]
        rows = rows_of.pop(node_id)
        go_left = cand.descriptor.goes_left(dataset.columns[cand.feature].values[rows])
        children = []
        for child_rows, child_stats in ((rows[go_left], cand.left_stats), (rows[~go_left], cand.right_stats)):
            child = TreeNode(
                len(nodes), parent.depth + 1, child_stats.weight(), child_stats.n_train, child_stats.g_train,
                stats=child_stats,
            )
            nodes.append(child)
            rows_of[child.id] = child_rows
            children.append(child)
        parent.split = cand.descriptor
        parent.left, parent.right = children[0].id, children[1].id
        parent.scores = (cand.score1, cand.score2, cand.score3)
        n_leaves += 1
        if n_leaves < config.max_leaves:
            for child in children:
                consider(child)
    return tree
