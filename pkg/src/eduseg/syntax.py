"""Constituency trees and the span queries used by the segmentation features.

Leaves are word nodes with span ``(k, k)`` and no children.  Every leaf sits
under a preterminal whose label is the part-of-speech tag.  All span queries
below consider internal nodes (constituents) only; a preterminal always wins
over its leaf, so excluding leaves never changes an answer except for
``lowest_spanning_subtree`` with ``i == j``, where the preterminal is wanted.
"""

from __future__ import annotations

from .exceptions import FormatError, MembershipError

WORD_PLACEHOLDER = "<w>"


class Node:
    """A node in a :class:`ParseTree`.  Immutable once the tree is built."""

    __slots__ = ("label", "start", "end", "children", "parent", "depth")

    def __init__(self, label, start, end, children=(), parent=None, depth=0):
        self.label = label
        self.start = start
        self.end = end
        self.children = tuple(children)
        self.parent = parent
        self.depth = depth

    @property
    def span(self):
        return (self.start, self.end)

    @property
    def is_leaf(self):
        return not self.children

    @property
    def is_preterminal(self):
        return len(self.children) == 1 and self.children[0].is_leaf

    def __repr__(self):
        return f"Node({self.label!r}, span={self.span})"


class ParseTree:
    """A rooted, ordered constituency tree over the tokens of one sentence.

    Build one with :func:`parse_bracketed_tree` or :meth:`from_nested`.
    """

    def __init__(self, root):
        self.root = root
        self.nodes = []
        stack = [root]
        while stack:
            node = stack.pop()
            self.nodes.append(node)
            stack.extend(reversed(node.children))
        self.leaves = [n for n in self.nodes if n.is_leaf]
        self._members = {id(n) for n in self.nodes}
        for k, leaf in enumerate(self.leaves, start=1):
            if leaf.span != (k, k):
                raise FormatError(f"leaf {k} has span {leaf.span}")

    @classmethod
    def from_nested(cls, nested):
        """Build from ``(label, [children...])`` tuples with ``str`` leaves."""
        counter = [0]

        def build(item, depth):
            if isinstance(item, str):
                counter[0] += 1
                return Node(item, counter[0], counter[0], depth=depth)
            label, kids = item
            if not kids:
                raise FormatError(f"constituent {label!r} has no children")
            built = [build(k, depth + 1) for k in kids]
            if any(b.is_leaf for b in built) and len(built) > 1:
                raise FormatError(f"word under non-preterminal {label!r}")
            node = Node(label, built[0].start, built[-1].end, built, depth=depth)
            for b in built:
                b.parent = node
            return node

        root = build(nested, 0)
        if root.is_leaf:
            raise FormatError("tree has no constituents")
        return cls(root)

    def __len__(self):
        return len(self.leaves)

    def __contains__(self, node):
        return id(node) in self._members

    @property
    def words(self):
        return [leaf.label for leaf in self.leaves]

    @property
    def pos_tags(self):
        return [leaf.parent.label for leaf in self.leaves]

    def preterminal(self, i):
        _check_index(self, i)
        return self.leaves[i - 1].parent

    def to_bracketed(self):
        def render(node):
            if node.is_leaf:
                return node.label
            return "(" + node.label + " " + " ".join(render(c) for c in node.children) + ")"

        return render(self.root)

    def structure(self):
        """Nested-tuple view, convenient for structural equality checks."""

        def walk(node):
            if node.is_leaf:
                return node.label
            return (node.label, tuple(walk(c) for c in node.children))

        return walk(self.root)

    def __eq__(self, other):
        return isinstance(other, ParseTree) and self.structure() == other.structure()

    def __hash__(self):
        return hash(self.structure())

    def __repr__(self):
        return f"ParseTree({self.to_bracketed()!r})"


def parse_bracketed_tree(text):
    """Parse a single-rooted bracketed expression such as PTB output.

    A PTB-style empty outer wrapper ``( (S ...) )`` is removed.
    """
    if not text or not text.strip():
        raise FormatError("empty tree text", offset=0)
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def read_symbol():
        nonlocal pos
        begin = pos
        while pos < n and not text[pos].isspace() and text[pos] not in "()":
            pos += 1
        return text[begin:pos]

    def read_node():
        nonlocal pos
        skip_ws()
        if pos >= n:
            raise FormatError("unexpected end of input", offset=pos)
        if text[pos] != "(":
            raise FormatError(f"expected '(' but found {text[pos]!r}", offset=pos)
        pos += 1
        skip_ws()
        label = read_symbol()
        children = []
        while True:
            skip_ws()
            if pos >= n:
                raise FormatError("unbalanced brackets: unexpected end of input", offset=pos)
            ch = text[pos]
            if ch == ")":
                pos += 1
                break
            if ch == "(":
                children.append(read_node())
            else:
                children.append(read_symbol())
        if not children:
            raise FormatError(f"constituent {label!r} has no children", offset=pos)
        return (label, children)

    nested = read_node()
    skip_ws()
    if pos != n:
        raise FormatError("trailing characters after tree", offset=pos)
    while nested[0] == "" and len(nested[1]) == 1 and not isinstance(nested[1][0], str):
        nested = nested[1][0]
    if nested[0] == "":
        raise FormatError("constituent without a label", offset=0)
    return ParseTree.from_nested(nested)


def _check_index(tree, i):
    if not 1 <= i <= len(tree.leaves):
        raise IndexError(f"token index {i} outside 1..{len(tree.leaves)}")


def largest_constituent_starting_at(tree, i):
    """Topmost constituent whose span begins at token ``i``."""
    node = tree.preterminal(i)
    while node.parent is not None and node.parent.start == i:
        node = node.parent
    return node


def largest_constituent_ending_at(tree, i):
    """Topmost constituent whose span ends at token ``i``."""
    node = tree.preterminal(i)
    while node.parent is not None and node.parent.end == i:
        node = node.parent
    return node


def node_depth(tree, node):
    """Number of edges from the root to ``node``."""
    if node not in tree:
        raise MembershipError(f"{node!r} does not belong to this tree")
    return node.depth


def production_rule(node):
    """``"PARENT -> CHILD ..."``; lexical children become a placeholder."""
    if node.is_leaf:
        raise ValueError("production_rule requires an internal node")
    rhs = " ".join(WORD_PLACEHOLDER if c.is_leaf else c.label for c in node.children)
    return f"{node.label} -> {rhs}"


def lowest_spanning_subtree(tree, i, j):
    """Deepest constituent whose span contains tokens ``i..j``."""
    _check_index(tree, j)
    if i > j:
        raise IndexError(f"empty range {i}..{j}")
    node = tree.preterminal(i)
    while node.end < j:
        node = node.parent
    return node


def count_constituents_over(tree, i, j):
    """Size of the greedy left-to-right cover of ``i..j`` by maximal constituents."""
    if i > j:
        return 0
    _check_index(tree, i)
    _check_index(tree, j)
    count = 0
    cursor = i
    while cursor <= j:
        node = tree.preterminal(cursor)
        while (node.parent is not None and node.parent.start == cursor
               and node.parent.end <= j):
            node = node.parent
        count += 1
        cursor = node.end + 1
    return count
