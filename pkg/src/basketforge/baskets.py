"""Transaction datasets, canonical itemsets, and support arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable

Itemset = tuple[str, ...]

COMMENT_PREFIX = "#"


class ParseError(ValueError):
    """Malformed basket input. ``line_no`` is 1-based when known."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def validate_item(name: str) -> str:
    """Check one item token; returns it unchanged when valid."""
    if not name or name != name.strip():
        raise ValueError(f"invalid item token {name!r}")
    if "," in name or "\n" in name or "\r" in name:
        raise ValueError(f"item {name!r} contains a separator character")
    return name


def canonical_itemset(items: Iterable[str]) -> Itemset:
    """Sorted tuple of distinct validated item names."""
    out = tuple(sorted(set(items)))
    if not out:
        raise ValueError("itemset needs at least one item")
    for name in out:
        validate_item(name)
    return out


@dataclass(frozen=True)
class Transaction:
    """One basket: a canonical itemset plus its 0-based dataset position."""

    id: int
    items: Itemset


@dataclass(frozen=True)
class TransactionDataset:
    transactions: tuple[Transaction, ...]
    universe: Itemset

    def __post_init__(self):
        for pos, tx in enumerate(self.transactions):
            if tx.id != pos:
                raise ValueError(f"transaction ids must be 0..n-1, got {tx.id} at {pos}")
        union = set()
        for tx in self.transactions:
            union.update(tx.items)
        if tuple(sorted(union)) != self.universe:
            raise ValueError("universe does not match the union of transaction items")

    def __len__(self) -> int:
        return len(self.transactions)


@dataclass(frozen=True)
class MiningParams:
    min_support: float
    min_confidence: float

    def __post_init__(self):
        if not 0.0 < self.min_support <= 1.0:
            raise ValueError(f"min_support must be in (0, 1], got {self.min_support}")
        if not 0.0 < self.min_confidence <= 1.0:
            raise ValueError(f"min_confidence must be in (0, 1], got {self.min_confidence}")


@dataclass(frozen=True)
class AssociationRule:
    antecedent: Itemset
    consequent: Itemset
    support: float
    confidence: float
    union_count: int

    def __post_init__(self):
        if not self.antecedent or not self.consequent:
            raise ValueError("rule sides must be non-empty")
        if set(self.antecedent) & set(self.consequent):
            raise ValueError("rule sides must be disjoint")
        if not 0.0 < self.support <= self.confidence <= 1.0:
            raise ValueError(
                f"need 0 < support <= confidence <= 1, got {self.support}, {self.confidence}"
            )
        if self.union_count < 1:
            raise ValueError("union_count must be positive")


def make_dataset(baskets: Iterable[Iterable[str]]) -> TransactionDataset:
    """Build a canonical dataset from raw item collections."""
    transactions = tuple(
        Transaction(i, canonical_itemset(items)) for i, items in enumerate(baskets)
    )
    if not transactions:
        raise ParseError("no transactions")
    union = set()
    for tx in transactions:
        union.update(tx.items)
    return TransactionDataset(transactions, tuple(sorted(union)))


def parse_transactions(source: str | IO[str] | Iterable[str]) -> TransactionDataset:
    """Parse the basket file format: one comma-separated transaction per line.

    Blank lines and ``#`` comment lines are skipped. Items are trimmed and
    deduplicated within a line; an empty item token is a hard error.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    baskets: list[list[str]] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith(COMMENT_PREFIX):
            continue
        tokens = [tok.strip() for tok in line.split(",")]
        if any(not tok for tok in tokens):
            raise ParseError("empty item token", line_no)
        baskets.append(tokens)
    if not baskets:
        raise ParseError("no transactions")
    return make_dataset(baskets)


def serialize_transactions(dataset: TransactionDataset) -> str:
    """Canonical text form; re-parsing it reproduces the dataset exactly."""
    return "".join(",".join(tx.items) + "\n" for tx in dataset.transactions)


def absolute_support_threshold(min_support: float, n: int) -> int:
    """Minimum transaction count an itemset needs: ceil(min_support * n), at least 1."""
    if n < 1:
        raise ValueError(f"need at least one transaction, got {n}")
    if not 0.0 < min_support <= 1.0:
        raise ValueError(f"min_support must be in (0, 1], got {min_support}")
    # Going through the decimal repr keeps user-written fractions exact:
    # 0.07 * 100 must give threshold 7, not ceil(7.000000000000001) = 8.
    return max(1, math.ceil(Fraction(str(min_support)) * n))


def count_support(dataset: TransactionDataset, itemset: Itemset) -> int:
    """Transactions containing ``itemset``, by exhaustive scan.

    Deliberately unoptimized; this is the oracle everything else is tested
    against.
    """
    target = set(itemset)
    return sum(1 for tx in dataset.transactions if target.issubset(tx.items))
