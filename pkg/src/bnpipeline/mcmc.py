"""Posterior simulation and posterior-predictive target distributions.

With categorical nodes and Dirichlet priors the parameter posterior is an
independent Dirichlet per CPT row, so the sampler draws exact independent
samples per chain. Adaptation and burn-in are honored as configuration (the
recorded trace starts after them) even though the draws need no warm-up.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bayesnet import DEFAULT_ENUMERATION_CAP, EnumerationTooLarge, FittedNetwork, joint_query
from .dataset import VariableSpec, numeric_state_values


class ConstantChain(Exception):
    pass


@dataclass(frozen=True)
class McmcConfig:
    seed: int
    chains: int = 3
    adapt_iters: int = 1000
    burnin_iters: int = 1000
    sample_iters: int = 10000
    thin: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.adapt_iters < 0 or self.burnin_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.sample_iters < 1:
            raise ValueError("sample_iters must be at least 1")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    @property
    def kept_per_chain(self) -> int:
        return (self.sample_iters + self.thin - 1) // self.thin


@dataclass(frozen=True)
class TraceSet:
    """Recorded parameter draws, one (kept, configs, states) array per chain per node."""

    node_dims: dict[str, tuple[int, int]]
    draws: dict[str, list[np.ndarray]]

    @property
    def n_chains(self) -> int:
        return len(next(iter(self.draws.values())))

    def parameters(self) -> dict[str, list[np.ndarray]]:
        """Flat view: '<node>_<index>' -> per-chain 1-D sample arrays."""
        out: dict[str, list[np.ndarray]] = {}
        for node, chains in self.draws.items():
            q, r = self.node_dims[node]
            for j in range(q):
                for k in range(r):
                    out[f"{node}_{j * r + k}"] = [c[:, j, k] for c in chains]
        return out


@dataclass(frozen=True)
class PosteriorPredictive:
    """Full predictive distribution for one record's target."""

    record_id: int
    probs: np.ndarray
    mean: float
    predicted: int  # state index; ties resolve to the lowest index
    true_state: int | None = None


def summarize_distribution(probs: Sequence[float], values: Sequence[float]) -> tuple[float, int]:
    """Mean numeric value and modal state index of a target distribution."""
    p = np.asarray(probs, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.shape != v.shape:
        raise ValueError("probs and values must align")
    return float(p @ v), int(np.argmax(p))


def _chain_rng(seed: int, chain: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain, stream)))


def _draw_chain(
    network: FittedNetwork, nodes: Sequence[str], config: McmcConfig, chain: int, stream: int
) -> dict[str, np.ndarray]:
    """Exact Dirichlet draws for each requested node, post burn-in and thinned."""
    rng = _chain_rng(config.seed, chain, stream)
    skip = config.adapt_iters + config.burnin_iters
    total = skip + config.sample_iters
    keep = np.arange(skip, total, config.thin)
    out = {}
    for node in nodes:
        post = network.cpts[node].posterior
        q, r = post.shape
        arr = np.empty((keep.size, q, r))
        for j in range(q):
            arr[:, j, :] = rng.dirichlet(post[j], size=total)[keep]
        out[node] = arr
    return out


def sample_parameters(
    network: FittedNetwork, config: McmcConfig, nodes: Sequence[str] | None = None
) -> TraceSet:
    """Simulate CPT parameters for the requested nodes across independent chains."""
    monitored = list(nodes) if nodes is not None else [
        n for n in network.schema.names if n in network.cpts
    ]
    for n in monitored:
        if n not in network.cpts:
            raise ValueError(f"unknown node {n!r}")
    draws: dict[str, list[np.ndarray]] = {n: [] for n in monitored}
    for chain in range(config.chains):
        per_node = _draw_chain(network, monitored, config, chain, stream=0)
        for n in monitored:
            draws[n].append(per_node[n])
    dims = {n: network.cpts[n].posterior.shape for n in monitored}
    return TraceSet(dims, draws)


# ---------------------------------------------------------------------------
# posterior prediction
# ---------------------------------------------------------------------------

def _validate_record(
    network: FittedNetwork, record: Mapping[str, int], target: str
) -> None:
    schema = network.schema
    for var, state in record.items():
        if var == target:
            raise ValueError("evidence must not include the target variable")
        if var not in schema.names:
            raise ValueError(f"unknown evidence variable {var!r}")
        if not 0 <= state < schema.cardinality(var):
            raise ValueError(f"unknown evidence state {state} for {var!r}")


def _mcmc_record_probs(
    network: FittedNetwork,
    record: Mapping[str, int],
    target: str,
    tables: dict[str, np.ndarray],
    max_states: int,
) -> np.ndarray:
    """Monte-Carlo posterior predictive: the per-draw joint mass of
    (target state, evidence) is averaged over draws and normalized once,
    which converges to the exact-mode conditional as draws grow.

    Families whose scope is fully observed factor out of both the average
    and the normalization (their draws are independent of the rest), so
    only factors touching the target or another unobserved variable are
    gathered.
    """
    schema = network.schema
    dag = network.dag
    r_t = schema.cardinality(target)
    hidden = [n for n in schema.names if n in dag.nodes and n not in record and n != target]
    n_assign = r_t
    for h in hidden:
        n_assign *= schema.cardinality(h)
        if n_assign > max_states:
            raise EnumerationTooLarge(
                f"enumeration over hidden variables exceeds cap {max_states}"
            )
    unobserved = [target] + hidden
    mesh = np.indices(tuple(schema.cardinality(v) for v in unobserved))
    assign = {v: mesh[i].ravel() for i, v in enumerate(unobserved)}

    n_draws = next(iter(tables.values())).shape[0]
    prod = np.ones((n_draws, n_assign))
    for node in dag.nodes:
        cpt = network.cpts[node]
        scope = cpt.parent_order + (node,)
        if not any(v in assign for v in scope):
            continue
        q, r = cpt.posterior.shape
        cfg = np.zeros(n_assign, dtype=np.int64)
        stride = 1
        for p in reversed(cpt.parent_order):
            val = assign[p] if p in assign else record[p]
            cfg = cfg + val * stride
            stride *= schema.cardinality(p)
        state = assign[node] if node in assign else np.full(n_assign, record[node])
        flat_idx = cfg * r + state
        prod *= tables[node].reshape(n_draws, q * r)[:, flat_idx]

    joint_mass = prod.reshape(n_draws, r_t, -1).sum(axis=2).mean(axis=0)
    return joint_mass / joint_mass.sum()


def posterior_predict(
    network: FittedNetwork,
    evidence_records: Sequence[Mapping[str, int]],
    config: McmcConfig | None = None,
    mode: str = "exact",
    target: str | None = None,
    true_states: Sequence[int] | None = None,
    max_states: int = DEFAULT_ENUMERATION_CAP,
) -> list[PosteriorPredictive]:
    """Predictive target distribution for each evidence record.

    mode="exact" evaluates the conditional at posterior-mean parameters by
    enumeration; mode="mcmc" estimates the same quantity by Monte Carlo,
    averaging per-draw joint mass over simulated parameter draws before
    normalizing. Records may leave predictor variables unobserved, which are
    then enumerated alongside the target.
    """
    if mode not in ("exact", "mcmc"):
        raise ValueError(f"unknown mode {mode!r}")
    tgt = target if target is not None else network.schema.target
    if tgt not in network.dag.nodes:
        raise ValueError(f"target {tgt!r} is not a network node")
    if true_states is not None and len(true_states) != len(evidence_records):
        raise ValueError("true_states length must match evidence_records")
    values = numeric_state_values(network.schema.spec(tgt))

    tables: dict[str, np.ndarray] | None = None
    if mode == "mcmc":
        if config is None:
            raise ValueError("mcmc mode needs an McmcConfig")
        # families never touching an unobserved variable cancel out of every
        # record's predictive, so their parameters are not worth drawing
        maybe_hidden = {tgt}
        for record in evidence_records:
            maybe_hidden.update(n for n in network.dag.nodes if n not in record)
        needed = [
            node
            for node in network.dag.nodes
            if maybe_hidden & set(network.cpts[node].parent_order + (node,))
        ]
        chunks = [
            _draw_chain(network, needed, config, chain, stream=1)
            for chain in range(config.chains)
        ]
        tables = {
            node: np.concatenate([c[node] for c in chunks], axis=0) for node in needed
        }

    results = []
    for i, record in enumerate(evidence_records):
        _validate_record(network, record, tgt)
        if mode == "exact":
            probs = joint_query(network, dict(record), tgt, max_states=max_states)
        else:
            probs = _mcmc_record_probs(network, record, tgt, tables, max_states)
        mean, predicted = summarize_distribution(probs, values)
        results.append(
            PosteriorPredictive(
                record_id=i,
                probs=probs,
                mean=mean,
                predicted=predicted,
                true_state=None if true_states is None else int(true_states[i]),
            )
        )
    return results


def write_predictions(
    predictions: Sequence[PosteriorPredictive], spec: VariableSpec, path: str | Path
) -> None:
    """CSV with one row per record: per-state percent (2 decimals), mean,
    modal prediction, and the true state when known."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"state_{s}" for s in spec.states] + ["mean", "predicted", "true"])
        for p in predictions:
            row = [f"{100.0 * x:.2f}" for x in p.probs]
            row.append(f"{p.mean:.4f}")
            row.append(spec.states[p.predicted])
            row.append("" if p.true_state is None else spec.states[p.true_state])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# convergence diagnostics and trace export
# ---------------------------------------------------------------------------

def gelman_rubin(traces: TraceSet) -> dict[str, float]:
    """Split-chain potential scale reduction factor per parameter."""
    params = traces.parameters()
    if not params:
        raise ValueError("no monitored parameters")
    first = next(iter(params.values()))
    if len(first) < 2:
        raise ValueError("need at least 2 chains")
    if min(c.size for c in first) < 10:
        raise ValueError("need at least 10 samples per chain")
    out = {}
    for name, chains in params.items():
        half = min(c.size for c in chains) // 2
        splits = []
        for c in chains:
            splits.append(c[:half])
            splits.append(c[half : 2 * half])
        seqs = np.vstack(splits)
        m, n = seqs.shape
        within = seqs.var(axis=1, ddof=1).mean()
        if within == 0.0:
            raise ConstantChain(f"parameter {name} has zero within-chain variance")
        between = n * seqs.mean(axis=1).var(ddof=1)
        var_plus = (n - 1) / n * within + between / n
        out[name] = float(np.sqrt(var_plus / within))
    return out


def _kde(samples: np.ndarray, grid_points: int = 256) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(samples, dtype=float)
    n = s.size
    std = float(s.std())
    if std == 0.0:
        bw = max(abs(float(s[0])), 1.0) * 1e-9
    else:
        bw = std * (4.0 / (3.0 * n)) ** 0.2
    grid = np.linspace(s.min() - 4.0 * bw, s.max() + 4.0 * bw, grid_points)
    z = (grid[:, None] - s[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * math.sqrt(2.0 * math.pi))
    return grid, dens


def export_traces(traces: TraceSet, out_dir: str | Path) -> list[Path]:
    """Per-parameter trace and density CSVs under out_dir.

    trace_<node>_<index>.csv holds (chain, iteration, value) rows; the
    matching density_<node>_<index>.csv holds a per-chain kernel density
    estimate as (chain, value, density) rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, chains in traces.parameters().items():
        node, index = name.rsplit("_", 1)
        trace_path = out / f"trace_{node}_{index}.csv"
        with open(trace_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "iteration", "value"])
            for chain_no, series in enumerate(chains, 1):
                for it, value in enumerate(series, 1):
                    writer.writerow([chain_no, it, repr(float(value))])
        dens_path = out / f"density_{node}_{index}.csv"
        with open(dens_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chain", "value", "density"])
            for chain_no, series in enumerate(chains, 1):
                grid, dens = _kde(series)
                for v, d in zip(grid, dens):
                    writer.writerow([chain_no, repr(float(v)), repr(float(d))])
        written.extend([trace_path, dens_path])
    return written
