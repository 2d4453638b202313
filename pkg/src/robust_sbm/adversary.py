"""Budgeted edge-corruption generators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetTooSmall, ConfigError, ExhaustedMoves, SizeMismatch
from .graphmat import SparseGraph


@dataclass
class CorruptionReport:
    edits: list  # [((u, v), "+" | "-"), ...] with u < v
    touched_vertices: set = field(default_factory=set)

    @property
    def budget_used(self) -> int:
        return len(self.edits)

    def inserted(self):
        return [p for p, op in self.edits if op == "+"]

    def deleted(self):
        return [p for p, op in self.edits if op == "-"]

    def inverse(self) -> "CorruptionReport":
        flip = {"+": "-", "-": "+"}
        return CorruptionReport([(p, flip[op]) for p, op in self.edits], set(self.touched_vertices))

    def to_text(self) -> str:
        return "".join(f"{op} {u} {v}\n" for (u, v), op in self.edits)

    @classmethod
    def from_text(cls, text: str) -> "CorruptionReport":
        edits = []
        for no, ln in enumerate(text.splitlines(), 1):
            if not ln.strip():
                continue
            parts = ln.split()
            if len(parts) != 3 or parts[0] not in ("+", "-"):
                raise ConfigError(f"line {no}: expected '+ u v' or '- u v'")
            u, v = int(parts[1]), int(parts[2])
            edits.append(((min(u, v), max(u, v)), parts[0]))
        touched = {x for p, _ in edits for x in p}
        return cls(edits, touched)

    def save(self, path):
        Path(path).write_text(self.to_text())


def apply_report(g: SparseGraph, rep: CorruptionReport) -> SparseGraph:
    """Apply edits, checking each one is legal (insert a non-edge, delete an edge)."""
    n = g.n
    keys = set(g.keys().tolist())
    seen = set()
    for (u, v), op in rep.edits:
        if u == v or not (0 <= u < n and 0 <= v < n):
            raise ConfigError(f"illegal pair ({u}, {v})")
        key = min(u, v) * n + max(u, v)
        if key in seen:
            raise ConfigError(f"pair ({u}, {v}) edited twice")
        seen.add(key)
        if op == "+":
            if key in keys:
                raise ConfigError(f"insertion of existing edge ({u}, {v})")
            keys.add(key)
        else:
            if key not in keys:
                raise ConfigError(f"deletion of missing edge ({u}, {v})")
            keys.remove(key)
    k = np.fromiter(keys, dtype=np.int64, count=len(keys))
    return SparseGraph.from_pairs(n, k // n, k % n)


def _report_from_flips(g: SparseGraph, us, vs) -> CorruptionReport:
    edits = []
    for u, v in zip(us, vs):
        u, v = int(min(u, v)), int(max(u, v))
        edits.append(((u, v), "-" if g.has_edge(u, v) else "+"))
    return CorruptionReport(edits, {x for p, _ in edits for x in p})


def corrupt_random(g: SparseGraph, budget: int, seed):
    """Flip ``budget`` distinct uniformly random vertex pairs."""
    n = g.n
    total = n * (n - 1) // 2
    if budget < 0 or budget > n * n / 4 or budget > total:
        raise ConfigError("budget out of range")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(total, size=budget, replace=False)) if budget else np.empty(0, np.int64)
    from .model import _tri_decode

    i, j = _tri_decode(idx, n)
    rep = _report_from_flips(g, i, j)
    return apply_report(g, rep), rep


def corrupt_hub(g: SparseGraph, budget: int, seed):
    """Plant a near-clique on about sqrt(2 budget) random vertices.

    Missing pairs inside the hub are inserted in random order until the budget
    is spent.  If the hub was already dense enough that the budget is not used
    up, another random vertex joins the hub and the process repeats.
    """
    if budget < 3:
        raise BudgetTooSmall("hub corruption needs budget >= 3")
    n = g.n
    rng = np.random.default_rng(seed)
    size = min(n, math.ceil(math.sqrt(2 * budget)))
    order = rng.permutation(n)
    hub = list(order[:size])
    nxt = size
    edits = []
    done = set()
    while True:
        missing = [
            (min(a, b), max(a, b))
            for ia, a in enumerate(hub)
            for b in hub[ia + 1:]
            if not g.has_edge(a, b) and (min(a, b), max(a, b)) not in done
        ]
        need = budget - len(edits)
        if len(missing) >= need:
            pick = rng.permutation(len(missing))[:need]
            chosen = [missing[i] for i in sorted(pick)]
        else:
            chosen = missing
        for p in chosen:
            edits.append(((int(p[0]), int(p[1])), "+"))
            done.add(p)
        if len(edits) == budget:
            break
        if nxt >= n:
            raise ExhaustedMoves("graph too small to spend the hub budget")
        hub.append(order[nxt])
        nxt += 1
    rep = CorruptionReport(edits, {x for p, _ in edits for x in p})
    return apply_report(g, rep), rep


def corrupt_monotone(g: SparseGraph, labels, budget: int, seed):
    """Delete random cross-community edges and insert random intra-community non-edges.

    About half the budget goes to deletions (all cross edges if there are
    fewer), the rest to insertions.
    """
    lab = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    n = g.n
    if budget < 0:
        raise ConfigError("budget must be >= 0")
    rng = np.random.default_rng(seed)
    u, v = g.edges[:, 0], g.edges[:, 1]
    cross = np.flatnonzero(lab[u] != lab[v])
    sizes = np.bincount(lab, minlength=int(lab.max()) + 1 if lab.size else 1)
    intra_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    intra_free = intra_pairs - int(np.sum(lab[u] == lab[v]))
    if cross.size + intra_free < budget:
        raise ExhaustedMoves(f"only {cross.size + intra_free} monotone moves for budget {budget}")
    n_del = min(cross.size, budget // 2)
    n_ins = budget - n_del
    if n_ins > intra_free:
        n_ins = intra_free
        n_del = budget - n_ins
    edits = []
    picked = np.sort(cross[rng.choice(cross.size, size=n_del, replace=False)]) if n_del else []
    for e in picked:
        edits.append(((int(u[e]), int(v[e])), "-"))
    members = [np.flatnonzero(lab == c) for c in range(sizes.size)]
    chosen = set()
    if n_ins:
        if intra_free <= 4 * n_ins:
            free = [
                (int(a), int(b))
                for m in members
                for ia, a in enumerate(m)
                for b in m[ia + 1:]
                if not g.has_edge(a, b)
            ]
            for i in sorted(rng.choice(len(free), size=n_ins, replace=False).tolist()):
                chosen.add(free[i])
        else:
            weights = (sizes * (sizes - 1) / 2.0)
            weights = weights / weights.sum()
            while len(chosen) < n_ins:
                c = rng.choice(sizes.size, p=weights)
                a, b = rng.choice(members[c], size=2, replace=False)
                p = (int(min(a, b)), int(max(a, b)))
                if p not in chosen and not g.has_edge(*p):
                    chosen.add(p)
    edits.extend((p, "+") for p in sorted(chosen))
    rep = CorruptionReport(edits, {x for p, _ in edits for x in p})
    return apply_report(g, rep), rep


def corruption_distance(g1: SparseGraph, g2: SparseGraph) -> int:
    if g1.n != g2.n:
        raise SizeMismatch("graphs have different vertex counts")
    return int(np.setxor1d(g1.keys(), g2.keys(), assume_unique=True).size)


def cut_size(g: SparseGraph, labels) -> int:
    lab = labels.labels if hasattr(labels, "labels") else np.asarray(labels)
    return int(np.sum(lab[g.edges[:, 0]] != lab[g.edges[:, 1]]))
