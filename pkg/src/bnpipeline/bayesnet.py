"""Directed acyclic graphs, Dirichlet-categorical fitting, and exact queries.

Inference is exact enumeration over the states of the unobserved variables,
vectorized as a product of broadcast CPT factors. Networks at the scale this
package targets (around ten nodes, five to ten states each) stay well inside
the default enumeration cap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import DataError, Dataset, Schema
from .infotheory import entropy

DEFAULT_ENUMERATION_CAP = 10_000_000


class GraphError(Exception):
    pass


class CycleError(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class MissingEdge(GraphError):
    pass


class EnumerationTooLarge(Exception):
    pass


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph over named nodes."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node names")
        known = set(self.nodes)
        seen = set()
        for p, c in self.edges:
            if p not in known or c not in known:
                raise GraphError(f"edge ({p}, {c}) references unknown node")
            if p == c:
                raise GraphError(f"self-loop on {p!r}")
            if (p, c) in seen:
                raise DuplicateEdge(f"duplicate edge ({p}, {c})")
            seen.add((p, c))
        topological_sort(self)  # raises CycleError on cycles

    def parents(self, node: str) -> tuple[str, ...]:
        if node not in self.nodes:
            raise GraphError(f"unknown node {node!r}")
        return tuple(p for p, c in self.edges if c == node)

    def children(self, node: str) -> tuple[str, ...]:
        if node not in self.nodes:
            raise GraphError(f"unknown node {node!r}")
        return tuple(c for p, c in self.edges if p == node)

    def has_edge(self, parent: str, child: str) -> bool:
        return (parent, child) in set(self.edges)


def topological_sort(dag: Dag) -> list[str]:
    """Kahn's algorithm with lexicographic tie-breaking; raises CycleError."""
    indeg = {n: 0 for n in dag.nodes}
    for _, c in dag.edges:
        indeg[c] += 1
    ready = sorted(n for n, d in indeg.items() if d == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        changed = False
        for c in dag.children(node):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(dag.nodes):
        raise CycleError("graph contains a directed cycle")
    return order


def dag_add_edge(dag: Dag, parent: str, child: str) -> Dag:
    if dag.has_edge(parent, child):
        raise DuplicateEdge(f"edge ({parent}, {child}) already present")
    return Dag(dag.nodes, dag.edges + ((parent, child),))


def reverse_edge(dag: Dag, parent: str, child: str) -> Dag:
    if not dag.has_edge(parent, child):
        raise MissingEdge(f"no edge ({parent}, {child}) to reverse")
    edges = tuple(e for e in dag.edges if e != (parent, child)) + ((child, parent),)
    return Dag(dag.nodes, edges)


# ---------------------------------------------------------------------------
# structure files: one `PARENT -> CHILD` line per edge, optional `node NAME`
# lines for isolated nodes, '#' comments.
# ---------------------------------------------------------------------------

def read_structure(path: str | Path) -> Dag:
    nodes: list[str] = []
    edges: list[tuple[str, str]] = []

    def note(name: str) -> None:
        if name not in nodes:
            nodes.append(name)

    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("node "):
            note(line[len("node ") :].strip())
            continue
        if "->" not in line:
            raise DataError(f"{path}:{lineno}: expected 'PARENT -> CHILD' or 'node NAME'")
        parent, child = (s.strip() for s in line.split("->", 1))
        if not parent or not child:
            raise DataError(f"{path}:{lineno}: malformed edge line")
        note(parent)
        note(child)
        edges.append((parent, child))
    try:
        return Dag(tuple(sorted(nodes)), tuple(edges))
    except GraphError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_structure(dag: Dag, path: str | Path) -> None:
    lines = [f"{p} -> {c}" for p, c in sorted(dag.edges)]
    linked = {n for e in dag.edges for n in e}
    lines.extend(f"node {n}" for n in sorted(set(dag.nodes) - linked))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# conjugate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cpt:
    """Dirichlet count tables for one node: rows indexed by parent configuration.

    Parent configurations are mixed-radix numbers over parent_order with the
    last parent varying fastest. alpha holds the prior pseudo-counts and
    counts the observed tallies; their sum parameterizes the posterior.
    """

    node: str
    parent_order: tuple[str, ...]
    alpha: np.ndarray  # (configs, states)
    counts: np.ndarray  # same shape

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        n = np.asarray(self.counts, dtype=float)
        if a.shape != n.shape or a.ndim != 2:
            raise ValueError("alpha and counts must be 2-D with identical shape")
        if np.any(a <= 0):
            raise ValueError("prior pseudo-counts must be positive")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "counts", n)
        a.setflags(write=False)
        n.setflags(write=False)

    @property
    def posterior(self) -> np.ndarray:
        return self.alpha + self.counts

    @property
    def posterior_mean(self) -> np.ndarray:
        post = self.posterior
        return post / post.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class FittedNetwork:
    dag: Dag
    schema: Schema
    cpts: dict[str, Cpt]

    def __post_init__(self):
        for node in self.dag.nodes:
            if node not in self.cpts:
                raise ValueError(f"missing CPT for node {node!r}")
            cpt = self.cpts[node]
            if cpt.parent_order != _parent_order(self.dag, self.schema, node):
                raise ValueError(f"CPT parent order mismatch for {node!r}")
            q = _config_count(self.schema, cpt.parent_order)
            r = self.schema.cardinality(node)
            if cpt.alpha.shape != (q, r):
                raise ValueError(f"CPT shape mismatch for {node!r}")


def _parent_order(dag: Dag, schema: Schema, node: str) -> tuple[str, ...]:
    parents = set(dag.parents(node))
    return tuple(n for n in schema.names if n in parents)


def _config_count(schema: Schema, parent_order: Sequence[str]) -> int:
    q = 1
    for p in parent_order:
        q *= schema.cardinality(p)
    return q


def _config_strides(schema: Schema, parent_order: Sequence[str]) -> list[int]:
    strides = []
    acc = 1
    for p in reversed(parent_order):
        strides.append(acc)
        acc *= schema.cardinality(p)
    return list(reversed(strides))


def cpt_parameter_count(network: FittedNetwork, node: str) -> int:
    """Size of the node's probability table: (product of parent cardinalities) x states."""
    cpt = network.cpts[node]
    return _config_count(network.schema, cpt.parent_order) * network.schema.cardinality(node)


def family_counts(data: Dataset, node: str, parents: Sequence[str]) -> np.ndarray:
    """Count table (parent configurations x node states) for one family."""
    order = tuple(parents)
    q = _config_count(data.schema, order)
    r = data.schema.cardinality(node)
    if not data.n_records:
        return np.zeros((q, r), dtype=np.int64)
    cfg = np.zeros(data.n_records, dtype=np.int64)
    for p, stride in zip(order, _config_strides(data.schema, order)):
        cfg += data.column(p) * stride
    flat = np.bincount(cfg * r + data.column(node), minlength=q * r)
    return flat.reshape(q, r)


def fit_conjugate(dag: Dag, data: Dataset, alpha0: float = 1.0) -> FittedNetwork:
    """Tally per-family counts and attach uniform Dirichlet(alpha0) priors."""
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    missing = set(dag.nodes) - set(data.schema.names)
    if missing:
        raise DataError(f"data lacks variables {sorted(missing)}")
    cpts = {}
    for node in dag.nodes:
        order = _parent_order(dag, data.schema, node)
        counts = family_counts(data, node, order).astype(float)
        cpts[node] = Cpt(node, order, np.full(counts.shape, float(alpha0)), counts)
    return FittedNetwork(dag, data.schema, cpts)


# ---------------------------------------------------------------------------
# exact queries by enumeration
# ---------------------------------------------------------------------------

def _enumerate_unobserved(
    network: FittedNetwork, evidence: Mapping[str, int], max_states: int
) -> tuple[np.ndarray, list[str]]:
    """Unnormalized joint over the unobserved variables' state grid.

    Factors whose whole family is observed are constants that cancel in any
    later normalization and are skipped.
    """
    schema = network.schema
    for var, state in evidence.items():
        if not 0 <= state < schema.cardinality(var):
            raise ValueError(f"evidence state {state} out of range for {var!r}")
    order = [n for n in schema.names if n in network.dag.nodes and n not in evidence]
    total = 1
    for n in order:
        total *= schema.cardinality(n)
        if total > max_states:
            raise EnumerationTooLarge(
                f"enumeration over {len(order)} unobserved variables exceeds cap {max_states}"
            )
    axis_of = {n: i for i, n in enumerate(order)}
    grid_shape = tuple(schema.cardinality(n) for n in order)

    joint = np.ones(grid_shape if grid_shape else (1,), dtype=float)
    for node in network.dag.nodes:
        cpt = network.cpts[node]
        scope = cpt.parent_order + (node,)
        if not any(v in axis_of for v in scope):
            continue
        table = cpt.posterior_mean.reshape(
            tuple(schema.cardinality(p) for p in cpt.parent_order) + (schema.cardinality(node),)
        )
        index: list = []
        free_vars = []
        for v in scope:
            if v in evidence:
                index.append(int(evidence[v]))
            else:
                index.append(slice(None))
                free_vars.append(v)
        factor = table[tuple(index)]
        # lay the factor out on the enumeration grid by axis, size-1 elsewhere
        axes = [axis_of[v] for v in free_vars]
        factor = np.transpose(factor, np.argsort(axes))
        shape = [1] * len(order)
        for a in sorted(axes):
            shape[a] = grid_shape[a]
        joint = joint * factor.reshape(shape if order else (1,))
    return joint, order


def joint_marginal(
    network: FittedNetwork,
    evidence: Mapping[str, int],
    query: Sequence[str],
    max_states: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """Exact p(query | evidence) at posterior-mean parameters.

    Returns an array with one axis per query variable (schema state order).
    Evidence values are state indices; a query variable that is itself
    observed comes back as a point mass.
    """
    schema = network.schema
    joint, order = _enumerate_unobserved(network, evidence, max_states)
    axis_of = {n: i for i, n in enumerate(order)}
    keep = []
    for qv in query:
        if qv in evidence:
            continue
        if qv not in axis_of:
            raise GraphError(f"unknown query variable {qv!r}")
        keep.append(axis_of[qv])
    drop = tuple(a for a in range(len(order)) if a not in keep)
    marg = joint.sum(axis=drop) if drop else joint
    # reorder axes to match the requested query order, expanding evidence
    # variables to one-hot axes so the result always covers every query var
    out = marg
    current = [order[a] for a in sorted(keep)]
    if current:
        out = np.transpose(out, [current.index(qv) for qv in query if qv in current])
    full = np.zeros(tuple(schema.cardinality(qv) for qv in query))
    idx = []
    expand_shape = []
    for qv in query:
        if qv in evidence:
            idx.append(int(evidence[qv]))
        else:
            idx.append(slice(None))
            expand_shape.append(schema.cardinality(qv))
    full[tuple(idx)] = out.reshape(tuple(expand_shape)) if expand_shape else float(out.sum())
    total_mass = full.sum()
    if total_mass <= 0:
        raise ValueError("evidence has zero probability under the model")
    return full / total_mass


def joint_query(
    network: FittedNetwork,
    evidence: Mapping[str, int],
    query: str,
    max_states: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """Distribution of one variable given evidence, at posterior-mean parameters."""
    return joint_marginal(network, evidence, (query,), max_states=max_states)


def sensitivity(
    network: FittedNetwork, target: str, predictor: str,
    max_states: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Entropy reduction H(T) - H(T|V) of the target under the fitted network joint."""
    if target == predictor:
        raise ValueError("target and predictor must differ")
    joint = joint_marginal(network, {}, (target, predictor), max_states=max_states)
    ht = entropy(joint.sum(axis=1))
    hv = entropy(joint.sum(axis=0))
    htv = entropy(joint)
    return ht + hv - htv


def sensitivity_report(
    network: FittedNetwork, target: str, max_states: int = DEFAULT_ENUMERATION_CAP
) -> list[tuple[str, float]]:
    """Per-predictor sensitivity scores sorted by decreasing score.

    The network joint is enumerated once and reduced to each (target,
    predictor) pair, rather than re-enumerating per predictor.
    """
    joint, order = _enumerate_unobserved(network, {}, max_states)
    joint = joint / joint.sum()
    axis_of = {n: i for i, n in enumerate(order)}
    if target not in axis_of:
        raise GraphError(f"unknown target {target!r}")
    t_ax = axis_of[target]
    ht = entropy(joint.sum(axis=tuple(a for a in range(len(order)) if a != t_ax)))
    scores = []
    for node in network.dag.nodes:
        if node == target:
            continue
        v_ax = axis_of[node]
        pair = joint.sum(axis=tuple(a for a in range(len(order)) if a not in (t_ax, v_ax)))
        hv = entropy(pair.sum(axis=0 if t_ax < v_ax else 1))
        scores.append((node, ht + hv - entropy(pair)))
    scores.sort(key=lambda kv: (-kv[1], kv[0]))
    return scores


def write_fitted_network(network: FittedNetwork, path: str | Path) -> None:
    """CSV of posterior pseudo-counts: (node, parent_config, state, alpha_posterior)."""
    schema = network.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node", "parent_config", "state", "alpha_posterior"])
        for node in schema.names:
            if node not in network.cpts:
                continue
            cpt = network.cpts[node]
            post = cpt.posterior
            strides = _config_strides(schema, cpt.parent_order)
            for j in range(post.shape[0]):
                if cpt.parent_order:
                    parts = []
                    for p, stride in zip(cpt.parent_order, strides):
                        state = (j // stride) % schema.cardinality(p)
                        parts.append(f"{p}={schema.spec(p).states[state]}")
                    label = "|".join(parts)
                else:
                    label = "-"
                for k, state_label in enumerate(schema.spec(node).states):
                    writer.writerow([node, label, state_label, repr(float(post[j, k]))])
