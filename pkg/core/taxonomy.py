"""The five-level category tree: gender → family → category → sub-category,
with attributes attached to one or more categories.

Tree files are line-oriented text, one node per line::

    level<TAB>id<TAB>name<TAB>parent_or_attachment_list

``level`` is one of gender, family, category, sub-category, attribute. For
attributes the last field is a comma-separated list of category ids; for
genders it is empty. Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

GENDER = "gender"
FAMILY = "family"
CATEGORY = "category"
SUB_CATEGORY = "sub_category"
ATTRIBUTE = "attribute"

LEVELS = (GENDER, FAMILY, CATEGORY, SUB_CATEGORY, ATTRIBUTE)

PARENT_LEVEL = {FAMILY: GENDER, CATEGORY: FAMILY, SUB_CATEGORY: CATEGORY}

_LEVEL_ALIASES = {"sub-category": SUB_CATEGORY, "subcategory": SUB_CATEGORY}


class TaxonomyError(ValueError):
    """Raised for unknown ids, duplicate ids and malformed tree files."""
    pass


@dataclass(frozen=True)
class Node:
    """One node of the tree.

    Attributes:
        level: One of LEVELS
        id: Unique identifier across the whole tree
        name: Human-readable label
        links: Parent id(s) for gender/family/category/sub-category nodes
               (exactly one expected, none for genders); attached category
               ids for attributes
    """
    level: str
    id: str
    name: str
    links: tuple[str, ...] = ()


@dataclass(frozen=True)
class Violation:
    """A structural problem found by :func:`validate_tree`."""
    node_id: str
    rule: str
    message: str


class CategoryTree:
    """Immutable category tree with per-level index maps.

    Per-level order is the order nodes were given in; model output columns
    follow that order.
    """

    def __init__(self, nodes: list[Node]):
        self._nodes: dict[str, Node] = {}
        self._by_level: dict[str, list[str]] = {level: [] for level in LEVELS}
        for node in nodes:
            if node.level not in self._by_level:
                raise TaxonomyError(f"Unknown level {node.level!r} for node {node.id!r}")
            if node.id in self._nodes:
                raise TaxonomyError(f"Duplicate id {node.id!r}")
            self._nodes[node.id] = node
            self._by_level[node.level].append(node.id)

        self._index = {
            level: {node_id: i for i, node_id in enumerate(ids)}
            for level, ids in self._by_level.items()
        }
        self._children: dict[str, list[str]] = {node_id: [] for node_id in self._nodes}
        self._attachments: dict[str, list[str]] = {c: [] for c in self._by_level[CATEGORY]}
        for node in self._nodes.values():
            if node.level == ATTRIBUTE:
                for category in node.links:
                    if category in self._attachments:
                        self._attachments[category].append(node.id)
            else:
                for parent in node.links:
                    if parent in self._children:
                        self._children[parent].append(node.id)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> list[Node]:
        return list(self._nodes.values())

    def ids(self, level: str) -> list[str]:
        return list(self._by_level[level])

    @property
    def genders(self) -> list[str]:
        return self.ids(GENDER)

    @property
    def families(self) -> list[str]:
        return self.ids(FAMILY)

    @property
    def categories(self) -> list[str]:
        return self.ids(CATEGORY)

    @property
    def sub_categories(self) -> list[str]:
        return self.ids(SUB_CATEGORY)

    @property
    def attributes(self) -> list[str]:
        return self.ids(ATTRIBUTE)

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise TaxonomyError(f"Unknown id {node_id!r}") from None

    def index(self, level: str, node_id: str) -> int:
        try:
            return self._index[level][node_id]
        except KeyError:
            raise TaxonomyError(f"Unknown {level} id {node_id!r}") from None

    def level_of(self, node_id: str) -> str:
        return self.node(node_id).level

    def parent(self, node_id: str) -> str | None:
        """The single parent of a non-attribute node (None for genders)."""
        node = self.node(node_id)
        if node.level == ATTRIBUTE:
            raise TaxonomyError(f"Attribute {node_id!r} has attachments, not a parent")
        if node.level == GENDER:
            return None
        if len(node.links) != 1:
            raise TaxonomyError(f"Node {node_id!r} does not have exactly one parent")
        return node.links[0]

    def children(self, node_id: str) -> list[str]:
        self.node(node_id)
        return list(self._children[node_id])

    def sub_categories_of(self, category_id: str) -> list[str]:
        if self.level_of(category_id) != CATEGORY:
            raise TaxonomyError(f"{category_id!r} is not a category")
        return self.children(category_id)

    def attributes_of(self, category_id: str) -> list[str]:
        if self.level_of(category_id) != CATEGORY:
            raise TaxonomyError(f"{category_id!r} is not a category")
        return list(self._attachments[category_id])

    def category_ancestors(self, category_id: str) -> tuple[str, str]:
        """(family, gender) of a category."""
        if self.level_of(category_id) != CATEGORY:
            raise TaxonomyError(f"{category_id!r} is not a category")
        family = self.parent(category_id)
        gender = self.parent(family)
        return family, gender

    def infer_ancestors(self, sub_category_id: str) -> tuple[str, str, str]:
        """(category, family, gender) of a sub-category."""
        if self.level_of(sub_category_id) != SUB_CATEGORY:
            raise TaxonomyError(f"{sub_category_id!r} is not a sub-category")
        category = self.parent(sub_category_id)
        family, gender = self.category_ancestors(category)
        return category, family, gender

    def is_consistent(
        self,
        category_id: str,
        sub_category_id: str,
        attribute_ids=(),
    ) -> tuple[bool, list[tuple[str, str]]]:
        """Check a labelling against the tree.

        Returns (ok, pairs) where pairs lists every inconsistent
        (category, sub-category) and (category, attribute) pair.
        """
        if self.level_of(category_id) != CATEGORY:
            raise TaxonomyError(f"{category_id!r} is not a category")
        pairs: list[tuple[str, str]] = []
        if self.parent(sub_category_id) != category_id:
            pairs.append((category_id, sub_category_id))
        attached = set(self._attachments[category_id])
        for attribute in sorted(attribute_ids, key=lambda a: self.index(ATTRIBUTE, a)):
            if attribute not in attached:
                pairs.append((category_id, attribute))
        return not pairs, pairs

    def to_text(self) -> str:
        lines = []
        for level in LEVELS:
            label = "sub-category" if level == SUB_CATEGORY else level
            for node_id in self._by_level[level]:
                node = self._nodes[node_id]
                lines.append(f"{label}\t{node.id}\t{node.name}\t{','.join(node.links)}")
        return "\n".join(lines) + "\n"


def validate_tree(tree: CategoryTree) -> list[Violation]:
    """Every structural rule of the tree; an empty list means the tree is valid."""
    violations: list[Violation] = []

    def flag(node_id: str, rule: str, message: str) -> None:
        violations.append(Violation(node_id, rule, message))

    for node in tree.nodes:
        if node.level == GENDER:
            if node.links:
                flag(node.id, "gender parent", f"gender {node.id!r} must not have a parent")
            continue

        if node.level == ATTRIBUTE:
            if not node.links:
                flag(node.id, "empty attachment", f"attribute {node.id!r} is not attached to any category")
            for target in node.links:
                if target not in tree:
                    flag(node.id, "unknown attachment", f"attribute {node.id!r} attaches to unknown {target!r}")
                elif tree.level_of(target) == SUB_CATEGORY:
                    flag(node.id, "sub-category attachment",
                         f"attribute {node.id!r} attaches to sub-category {target!r}")
                elif tree.level_of(target) != CATEGORY:
                    flag(node.id, "attachment level", f"attribute {node.id!r} attaches to non-category {target!r}")
            continue

        if len(node.links) > 1:
            flag(node.id, "multiple parents", f"{node.id!r} has parents {', '.join(node.links)}")
        elif not node.links:
            flag(node.id, "missing parent", f"{node.id!r} has no parent")
        for parent in node.links:
            if parent not in tree:
                flag(node.id, "unknown parent", f"{node.id!r} has unknown parent {parent!r}")
            elif tree.level_of(parent) != PARENT_LEVEL[node.level]:
                flag(node.id, "parent level",
                     f"{node.id!r} ({node.level}) has parent {parent!r} at level {tree.level_of(parent)}")

    for category in tree.categories:
        if not tree.children(category):
            flag(category, "childless category", f"category {category!r} has no sub-categories")

    return violations


def parse_tree(text: str) -> CategoryTree:
    nodes = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) == 3:
            parts.append("")
        if len(parts) != 4:
            raise TaxonomyError(f"Line {line_no}: expected 4 tab-separated fields, got {len(parts)}")
        level, node_id, name, links = (p.strip() for p in parts)
        level = _LEVEL_ALIASES.get(level.lower(), level.lower())
        if level not in LEVELS:
            raise TaxonomyError(f"Line {line_no}: unknown level {level!r}")
        if not node_id:
            raise TaxonomyError(f"Line {line_no}: empty id")
        link_ids = tuple(part.strip() for part in links.split(",") if part.strip())
        nodes.append(Node(level, node_id, name, link_ids))
    return CategoryTree(nodes)


def load_tree(path: str | Path) -> CategoryTree:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise TaxonomyError(f"Cannot read tree file {path}: {e}") from e
    return parse_tree(text)


def dump_tree(tree: CategoryTree, path: str | Path) -> None:
    Path(path).write_text(tree.to_text(), encoding="utf-8")
