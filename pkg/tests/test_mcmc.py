import math

import numpy as np
import pytest

from bnpipeline.bayesnet import Cpt, Dag, FittedNetwork, fit_conjugate
from bnpipeline.dataset import Dataset, Schema, VariableSpec
from bnpipeline.mcmc import (
    ConstantChain,
    McmcConfig,
    PosteriorPredictive,
    TraceSet,
    export_traces,
    gelman_rubin,
    posterior_predict,
    sample_parameters,
    summarize_distribution,
    write_predictions,
)
from bnpipeline.simulate import sample_dataset


def make_schema(cards, names=None, target_index=0):
    names = names or [chr(ord("A") + i) for i in range(len(cards))]
    specs = [
        VariableSpec(n, tuple(str(s) for s in range(r)), "target" if i == target_index else "predictor")
        for i, (n, r) in enumerate(zip(names, cards))
    ]
    return Schema(tuple(specs))


def single_node_network(posterior_row):
    row = np.asarray(posterior_row, dtype=float)[None, :]
    schema = make_schema([row.shape[1]])
    dag = Dag(schema.names)
    cpt = Cpt("A", (), row, np.zeros_like(row))
    return FittedNetwork(dag, schema, {"A": cpt})


def toy_chain_network(seed=0, n=300):
    schema = make_schema([3, 3, 3])
    dag = Dag(schema.names, (("A", "B"), ("B", "C")))
    rng = np.random.default_rng(seed)
    tables = {
        "A": rng.dirichlet([4, 4, 4], size=1),
        "B": rng.dirichlet([2, 2, 2], size=3),
        "C": rng.dirichlet([2, 2, 2], size=3),
    }
    data = sample_dataset(dag, schema, tables, n, seed=seed + 1)
    return fit_conjugate(dag, data)


def tv_distance(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            McmcConfig(seed=1, chains=0)
        with pytest.raises(ValueError):
            McmcConfig(seed=1, sample_iters=0)
        with pytest.raises(ValueError):
            McmcConfig(seed=1, thin=0)
        with pytest.raises(ValueError):
            McmcConfig(seed=1, burnin_iters=-1)

    def test_kept_per_chain(self):
        assert McmcConfig(seed=1, sample_iters=10).kept_per_chain == 10
        assert McmcConfig(seed=1, sample_iters=10, thin=3).kept_per_chain == 4


class TestSampleParameters:
    def test_prior_sampling_mean(self):
        net = single_node_network([1.0, 1.0, 1.0])
        cfg = McmcConfig(seed=5, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=4000)
        traces = sample_parameters(net, cfg)
        draws = np.concatenate(traces.draws["A"], axis=0)[:, 0, :]
        se = draws.std(axis=0) / math.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - 1 / 3) <= 3 * se + 1e-3)

    def test_posterior_mean_two_one(self):
        net = single_node_network([3.0, 2.0])  # counts (2,1) plus flat prior
        cfg = McmcConfig(seed=6, chains=3, adapt_iters=100, burnin_iters=100, sample_iters=4000)
        traces = sample_parameters(net, cfg)
        draws = np.concatenate(traces.draws["A"], axis=0)[:, 0, 0]
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - 0.6) <= 3 * se + 1e-3

    def test_same_seed_identical(self):
        net = toy_chain_network()
        cfg = McmcConfig(seed=7, chains=2, adapt_iters=10, burnin_iters=10, sample_iters=50)
        a = sample_parameters(net, cfg)
        b = sample_parameters(net, cfg)
        for node in a.draws:
            for ca, cb in zip(a.draws[node], b.draws[node]):
                assert np.array_equal(ca, cb)

    def test_rows_stay_on_simplex(self):
        net = toy_chain_network()
        cfg = McmcConfig(seed=8, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=200)
        traces = sample_parameters(net, cfg)
        for chains in traces.draws.values():
            for arr in chains:
                assert np.all(arr >= 0)
                assert np.allclose(arr.sum(axis=2), 1.0, atol=1e-9)

    def test_thinning_and_monitor_subset(self):
        net = toy_chain_network()
        cfg = McmcConfig(seed=9, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=100, thin=4)
        traces = sample_parameters(net, cfg, nodes=["B"])
        assert list(traces.draws) == ["B"]
        assert traces.draws["B"][0].shape[0] == 25

    def test_unknown_node(self):
        net = toy_chain_network()
        with pytest.raises(ValueError):
            sample_parameters(net, McmcConfig(seed=1), nodes=["Z"])


class TestSummaries:
    def test_percent_row_summary(self):
        percents = [0.03, 0.01, 0.15, 0.99, 23.94, 70.8, 3.82, 0.1, 0.07, 0.1]
        probs = np.array(percents) / 100.0
        mean, mode = summarize_distribution(probs, [float(v) for v in range(1, 11)])
        assert round(mean, 4) == 5.7813
        assert mode == 5  # state labelled "6"

    def test_tie_breaks_to_lowest_state(self):
        _, mode = summarize_distribution([0.4, 0.4, 0.2], [1.0, 2.0, 3.0])
        assert mode == 0


class TestPosteriorPredict:
    def test_single_node_exact_is_posterior_mean(self):
        net = single_node_network([3.0, 2.0])
        (pred,) = posterior_predict(net, [{}], mode="exact")
        assert np.allclose(pred.probs, [0.6, 0.4])
        assert pred.predicted == 0
        assert pred.mean == pytest.approx(0.6 * 0 + 0.4 * 1)

    def test_single_node_mcmc_close_to_conjugate(self):
        net = single_node_network([3.0, 2.0])
        cfg = McmcConfig(seed=3, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=5000)
        (pred,) = posterior_predict(net, [{}], config=cfg, mode="mcmc")
        assert tv_distance(pred.probs, [0.6, 0.4]) < 0.02

    def test_mcmc_matches_exact_on_toy_chain(self):
        net = toy_chain_network(seed=4)
        cfg = McmcConfig(seed=11, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=10000)
        records = [{"B": 1, "C": 2}, {"B": 0, "C": 0}, {"C": 1}]
        exact = posterior_predict(net, records, mode="exact")
        sampled = posterior_predict(net, records, config=cfg, mode="mcmc")
        for e, s in zip(exact, sampled):
            assert tv_distance(e.probs, s.probs) < 0.02

    def test_convergence_toward_exact_with_more_draws(self):
        net = toy_chain_network(seed=12, n=60)
        record = {"B": 2, "C": 0}
        (exact,) = posterior_predict(net, [record], mode="exact")
        improved = 0
        for rep in range(20):
            small = McmcConfig(seed=100 + rep, chains=1, adapt_iters=0, burnin_iters=0,
                               sample_iters=2000)
            big = McmcConfig(seed=100 + rep, chains=1, adapt_iters=0, burnin_iters=0,
                             sample_iters=200_000)
            (p_small,) = posterior_predict(net, [record], config=small, mode="mcmc")
            (p_big,) = posterior_predict(net, [record], config=big, mode="mcmc")
            if tv_distance(p_big.probs, exact.probs) < tv_distance(p_small.probs, exact.probs):
                improved += 1
        assert improved >= 18

    def test_unobserved_states_keep_mass(self):
        # target declared on ten states but observed only on the first eight
        schema = Schema((
            VariableSpec("T", tuple(str(i) for i in range(1, 11)), "target"),
            VariableSpec("F", ("0", "1")),
        ))
        rng = np.random.default_rng(13)
        records = np.column_stack([rng.integers(0, 8, 200), rng.integers(0, 2, 200)])
        data = Dataset(schema, records)
        net = fit_conjugate(Dag(schema.names, (("T", "F"),)), data)
        for mode, cfg in (
            ("exact", None),
            ("mcmc", McmcConfig(seed=1, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=2000)),
        ):
            (pred,) = posterior_predict(net, [{"F": 1}], config=cfg, mode=mode)
            assert np.all(pred.probs > 0)
            assert pred.probs.size == 10

    def test_determinism(self):
        net = toy_chain_network(seed=15)
        cfg = McmcConfig(seed=21, chains=2, adapt_iters=5, burnin_iters=5, sample_iters=500)
        a = posterior_predict(net, [{"B": 1}], config=cfg, mode="mcmc")
        b = posterior_predict(net, [{"B": 1}], config=cfg, mode="mcmc")
        assert np.array_equal(a[0].probs, b[0].probs)

    def test_true_states_attached(self):
        net = toy_chain_network(seed=16)
        preds = posterior_predict(net, [{"B": 0, "C": 0}], mode="exact", true_states=[2])
        assert preds[0].true_state == 2

    def test_errors(self):
        net = toy_chain_network(seed=17)
        with pytest.raises(ValueError):
            posterior_predict(net, [{"A": 0, "B": 0}], mode="exact")  # target as evidence
        with pytest.raises(ValueError):
            posterior_predict(net, [{"Z": 0}], mode="exact")
        with pytest.raises(ValueError):
            posterior_predict(net, [{"B": 9}], mode="exact")
        with pytest.raises(ValueError):
            posterior_predict(net, [{"B": 0}], mode="mcmc")  # config missing
        with pytest.raises(ValueError):
            posterior_predict(net, [{"B": 0}], mode="typo")

    def test_predictions_csv(self, tmp_path):
        spec = VariableSpec("T", tuple(str(i) for i in range(1, 4)), "target")
        preds = [
            PosteriorPredictive(0, np.array([0.2, 0.5, 0.3]), 2.1, 1, 2),
            PosteriorPredictive(1, np.array([0.7, 0.2, 0.1]), 1.4, 0, None),
        ]
        write_predictions(preds, spec, tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "state_1,state_2,state_3,mean,predicted,true"
        assert lines[1] == "20.00,50.00,30.00,2.1000,2,3"
        assert lines[2] == "70.00,20.00,10.00,1.4000,1,"


class TestGelmanRubin:
    def test_same_distribution_chains_near_one(self):
        net = toy_chain_network(seed=18)
        cfg = McmcConfig(seed=30, chains=3, adapt_iters=0, burnin_iters=0, sample_iters=2000)
        rhat = gelman_rubin(sample_parameters(net, cfg))
        assert max(rhat.values()) < 1.05

    def test_disjoint_chains_blow_up(self):
        rng = np.random.default_rng(0)
        low = 0.1 + 0.001 * rng.standard_normal((500, 1, 1))
        high = 0.9 + 0.001 * rng.standard_normal((500, 1, 1))
        traces = TraceSet({"A": (1, 1)}, {"A": [low, high]})
        rhat = gelman_rubin(traces)
        assert rhat["A_0"] > 1.1

    def test_constant_chains_error(self):
        flat = np.full((100, 1, 1), 0.5)
        traces = TraceSet({"A": (1, 1)}, {"A": [flat, flat.copy()]})
        with pytest.raises(ConstantChain):
            gelman_rubin(traces)

    def test_preconditions(self):
        arr = np.random.default_rng(1).random((100, 1, 1))
        with pytest.raises(ValueError):
            gelman_rubin(TraceSet({"A": (1, 1)}, {"A": [arr]}))
        short = np.random.default_rng(2).random((5, 1, 1))
        with pytest.raises(ValueError):
            gelman_rubin(TraceSet({"A": (1, 1)}, {"A": [short, short]}))


class TestExportTraces:
    def test_files_and_row_counts(self, tmp_path):
        net = single_node_network([2.0, 3.0, 4.0])
        cfg = McmcConfig(seed=40, chains=3, adapt_iters=0, burnin_iters=0, sample_iters=1000)
        traces = sample_parameters(net, cfg)
        export_traces(traces, tmp_path)
        for k in range(3):
            trace = tmp_path / f"trace_A_{k}.csv"
            assert trace.is_file()
            lines = trace.read_text().splitlines()
            assert lines[0] == "chain,iteration,value"
            assert len(lines) == 1 + 3 * 1000
        # same run, same files
        again = tmp_path / "again"
        export_traces(traces, again)
        assert (again / "trace_A_1.csv").read_bytes() == (tmp_path / "trace_A_1.csv").read_bytes()

    def test_density_integrates_to_one(self, tmp_path):
        net = single_node_network([5.0, 5.0])
        cfg = McmcConfig(seed=41, chains=2, adapt_iters=0, burnin_iters=0, sample_iters=800)
        export_traces(sample_parameters(net, cfg), tmp_path)
        rows = (tmp_path / "density_A_0.csv").read_text().splitlines()[1:]
        by_chain = {}
        for row in rows:
            chain, value, dens = row.split(",")
            by_chain.setdefault(chain, []).append((float(value), float(dens)))
        for pts in by_chain.values():
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            assert np.trapezoid(ys, xs) == pytest.approx(1.0, abs=0.01)
