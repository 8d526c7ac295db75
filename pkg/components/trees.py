"""
Binary coupling trees over qubits, their labellings, and exact tree states.

Spins are stored as twice-spin integers throughout. A leaf is a spin-1/2 qubit whose |0>
is the M = +1/2 state.
"""
import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
from sympy import Rational
from sympy.physics.quantum.cg import CG

from components.errors import PreconditionError
from components.qstate import StateVector, relabel_qubits


@dataclass
class TreeNode:
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    leaf: Optional[int] = None
    twice_s: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    def leaves(self) -> List[int]:
        if self.is_leaf:
            return [self.leaf]
        return self.left.leaves() + self.right.leaves()

    def preorder(self) -> Iterator["TreeNode"]:
        yield self
        if not self.is_leaf:
            yield from self.left.preorder()
            yield from self.right.preorder()

    def postorder(self) -> Iterator["TreeNode"]:
        if not self.is_leaf:
            yield from self.left.postorder()
            yield from self.right.postorder()
        yield self

    def internal_nodes(self) -> List["TreeNode"]:
        return [node for node in self.preorder() if not node.is_leaf]

    def label(self) -> int:
        return 1 if self.is_leaf else self.twice_s

    def stripped(self) -> "TreeNode":
        """
        Copy of the shape without internal labels
        """
        if self.is_leaf:
            return TreeNode(leaf=self.leaf)
        return TreeNode(self.left.stripped(), self.right.stripped())

    def copy(self) -> "TreeNode":
        if self.is_leaf:
            return TreeNode(leaf=self.leaf)
        return TreeNode(self.left.copy(), self.right.copy(), twice_s=self.twice_s)

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.leaf}
        return {"left": self.left.to_dict(), "right": self.right.to_dict(), "label_2S": self.twice_s}

    @classmethod
    def from_dict(cls, data: dict) -> "TreeNode":
        if "leaf" in data:
            return cls(leaf=int(data["leaf"]))
        if "left" not in data or "right" not in data:
            raise PreconditionError(f"Internal tree node needs both children: {data}")
        label = data.get("label_2S")
        return cls(cls.from_dict(data["left"]), cls.from_dict(data["right"]),
                   twice_s=None if label is None else int(label))


def _check_shape(root: TreeNode):
    for node in root.preorder():
        if not node.is_leaf and (node.left is None or node.right is None):
            raise PreconditionError("Every internal node needs exactly two children")
    leaves = root.leaves()
    if len(set(leaves)) != len(leaves):
        raise PreconditionError(f"Leaf qubits repeat: {leaves}")


@dataclass
class UnlabelledTree:
    root: TreeNode

    def __post_init__(self):
        _check_shape(self.root)

    @property
    def leaves(self) -> List[int]:
        return self.root.leaves()


@dataclass
class LabelledTree:
    root: TreeNode
    root_twice_sz: int = 0

    def __post_init__(self):
        _check_shape(self.root)

    @property
    def leaves(self) -> List[int]:
        return self.root.leaves()

    @property
    def root_twice_s(self) -> int:
        return self.root.label()

    def validate(self) -> "LabelledTree":
        for node in self.root.postorder():
            if node.is_leaf:
                continue
            if node.twice_s is None:
                raise PreconditionError("Labelled tree has an unlabelled internal node")
            a, b, c = node.left.label(), node.right.label(), node.twice_s
            if not abs(a - b) <= c <= a + b or (a + b - c) % 2:
                raise PreconditionError(f"Labels ({a}, {b}) -> {c} break the triangle or parity rule")
        s = self.root_twice_s
        if abs(self.root_twice_sz) > s or (s - self.root_twice_sz) % 2:
            raise PreconditionError(f"Root 2Sz={self.root_twice_sz} is inconsistent with 2S={s}")
        return self

    def labels(self) -> List[int]:
        """
        Internal labels in pre-order
        """
        return [node.twice_s for node in self.root.internal_nodes()]

    def shape(self) -> UnlabelledTree:
        return UnlabelledTree(self.root.stripped())

    def to_dict(self) -> dict:
        return {"node": self.root.to_dict(), "root_2Sz": self.root_twice_sz}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def tree_from_json(text: str):
    """
    LabelledTree when every internal node carries a label, UnlabelledTree otherwise
    """
    data = json.loads(text)
    root = TreeNode.from_dict(data["node"])
    if all(node.twice_s is not None for node in root.internal_nodes()):
        return LabelledTree(root, int(data.get("root_2Sz", 0))).validate()
    return UnlabelledTree(root)


def caterpillar(qubits: Sequence[int], labels: Optional[Sequence[int]] = None) -> TreeNode:
    """
    Left-deep chain ((q0, q1), q2), ...; labels, when given, go bottom-up on the internal nodes
    """
    node = TreeNode(leaf=qubits[0])
    for k, q in enumerate(qubits[1:]):
        node = TreeNode(node, TreeNode(leaf=q), twice_s=None if labels is None else labels[k])
    return node


def symmetric_chain(qubits: Sequence[int]) -> TreeNode:
    """
    Caterpillar whose every vertex carries its maximal spin
    """
    return caterpillar(qubits, list(range(2, len(qubits) + 1)))


def balanced(qubits: Sequence[int]) -> TreeNode:
    if len(qubits) == 1:
        return TreeNode(leaf=qubits[0])
    half = len(qubits) // 2
    return TreeNode(balanced(qubits[:half]), balanced(qubits[half:]))


def singlet_pairs_tree(qubits: Sequence[int]) -> LabelledTree:
    """
    Singlets on consecutive qubit pairs, joined by a left-deep chain of spin-0 vertices
    """
    pairs = [TreeNode(TreeNode(leaf=a), TreeNode(leaf=b), twice_s=0) for a, b in zip(qubits[::2], qubits[1::2])]
    node = pairs[0]
    for pair in pairs[1:]:
        node = TreeNode(node, pair, twice_s=0)
    return LabelledTree(node, 0)


def enumerate_labellings(shape: UnlabelledTree, root_twice_s: Optional[int] = None,
                         root_twice_sz: Optional[int] = None) -> List[LabelledTree]:
    """
    Every valid labelling of the shape, optionally restricted to one root spin
    """
    def options(node: TreeNode) -> List[TreeNode]:
        if node.is_leaf:
            return [TreeNode(leaf=node.leaf)]
        result = []
        for left, right in itertools.product(options(node.left), options(node.right)):
            a, b = left.label(), right.label()
            for c in range(abs(a - b), a + b + 1, 2):
                result.append(TreeNode(left.copy(), right.copy(), twice_s=c))
        return result

    labellings = []
    for root in options(shape.root):
        s = root.label()
        if root_twice_s is not None and s != root_twice_s:
            continue
        sz = s if root_twice_sz is None else root_twice_sz
        if abs(sz) <= s and (s - sz) % 2 == 0:
            labellings.append(LabelledTree(root, sz))
    return labellings


@lru_cache(maxsize=None)
def clebsch_gordan(j1: int, m1: int, j2: int, m2: int, j: int, m: int) -> float:
    """
    <j1 m1; j2 m2 | j m> with every argument given as twice its value
    """
    half = lambda x: Rational(x, 2)
    return float(CG(half(j1), half(m1), half(j2), half(m2), half(j), half(m)).doit())


def _coupled_vectors(node: TreeNode) -> Dict[int, np.ndarray]:
    """
    |S, M> of the node over its own leaves (leaf k of node.leaves() is local qubit k), by 2M
    """
    if node.is_leaf:
        return {1: np.array([1.0, 0.0]), -1: np.array([0.0, 1.0])}
    left, right = _coupled_vectors(node.left), _coupled_vectors(node.right)
    j1, j2, j = node.left.label(), node.right.label(), node.twice_s
    size = 2 ** len(node.leaves())
    vectors = {}
    for m in range(-j, j + 1, 2):
        vec = np.zeros(size)
        for m1, v1 in left.items():
            m2 = m - m1
            if m2 not in right:
                continue
            coeff = clebsch_gordan(j1, m1, j2, m2, j, m)
            if coeff != 0.0:
                vec = vec + coeff * np.kron(right[m2], v1)
        vectors[m] = vec
    return vectors


def tree_state(tree: LabelledTree, n_qubits: Optional[int] = None) -> StateVector:
    """
    Exact |lambda> with the root's 2Sz, built by Clebsch-Gordan coupling bottom-up
    """
    tree.validate()
    leaves = tree.leaves
    n = len(leaves) if n_qubits is None else n_qubits
    if sorted(leaves) != list(range(n)):
        raise PreconditionError(f"Tree leaves {leaves} must cover qubits 0..{n - 1}")
    vector = _coupled_vectors(tree.root)[tree.root_twice_sz]
    local = StateVector(n, vector.astype(complex))
    return relabel_qubits(local, {k: q for k, q in enumerate(leaves)})


def tree_overlap_sq(a: LabelledTree, b: LabelledTree) -> float:
    va, vb = tree_state(a), tree_state(b)
    return float(abs(np.vdot(va.amps, vb.amps)) ** 2)


def dicke_state(n_qubits: int, twice_m: int) -> StateVector:
    """
    Normalized symmetric state of n qubits with 2M = n - 2 * (number of ones)
    """
    ones = (n_qubits - twice_m) // 2
    if (n_qubits - twice_m) % 2 or not 0 <= ones <= n_qubits:
        raise PreconditionError(f"2M={twice_m} is not reachable with {n_qubits} qubits")
    indices = np.arange(2 ** n_qubits)
    popcount = np.array([bin(i).count("1") for i in indices])
    amps = (popcount == ones).astype(complex)
    return StateVector(n_qubits, amps / np.linalg.norm(amps))
