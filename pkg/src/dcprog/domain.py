"""Domains of expressions as lists of convex constraints."""

from __future__ import annotations

from typing import Iterable, Mapping

from .errors import DomainViolation
from .expr import Constraint, _postorder, as_expr


class DomainConstraints:
    """Deduplicated list of constraints whose feasible set is the closure of a domain."""

    def __init__(self, constraints: Iterable[Constraint] = ()):
        self._items: dict[tuple, Constraint] = {}
        self.extend(constraints)

    def extend(self, constraints: Iterable[Constraint]) -> None:
        for c in constraints:
            self._items.setdefault(c.key, c)

    @property
    def constraints(self) -> list[Constraint]:
        return list(self._items.values())

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self):
        return len(self._items)

    def __repr__(self):
        return f"DomainConstraints({self.constraints!r})"


def domain(e) -> DomainConstraints:
    """Union of every atom's domain rule over the tree rooted at ``e``.

    Full-domain atoms contribute nothing, so affine expressions give an empty
    list.
    """
    e = as_expr(e)
    out = DomainConstraints()
    for node in _postorder(e):
        out.extend(node.domain_rule())
    return out


def contains(d: DomainConstraints | Iterable[Constraint], assignment: Mapping | None = None,
             tol: float = 1e-9) -> bool:
    for c in d:
        try:
            if c.violation(assignment) > tol:
                return False
        except DomainViolation:
            return False
    return True


__all__ = ["DomainConstraints", "domain", "contains"]
