import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensormc import cli, factorgraph
from tensormc.errors import ConfigError
from tensormc.harness import bench
from tensormc.harness.config import ExperimentConfig, load_config, parse_config
from tensormc.harness.records import COLUMNS, EstimateRecord, read_csv, write_csv
from tensormc.harness.sweep import dump_graphs, run_sweep
from tensormc.harness.verify import CHECKS, verify_suite
from tensormc.logtensor import LogTensor

ONE = """
[one]
model = hierarchical
n = 3
methods = tmc
k = 4
seeds = 1
"""

SMALL = """
[small]
model = hierarchical   # inline comments are fine
n = 4
data_seed = 2
methods = vae, iwae, tmc, smc
k = 2, 8
seeds = 3
seed_base = 10

[chain]
model = chain
n = 6
methods = tmc, tmc-nonfactorised
k = 2
seeds = 2
"""


# --- records

finite = st.floats(allow_nan=False, allow_infinity=False)
records = st.builds(EstimateRecord, st.sampled_from(["tmc", "iwae", "smc"]), st.integers(1, 4096),
                    st.integers(1, 1024), st.integers(0, 2**63 - 1), finite, finite, st.integers(0, 2**62))


@settings(max_examples=30, deadline=None)
@given(st.lists(records, max_size=10))
def test_csv_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("csv") / "out.csv"
    write_csv(recs, path)
    assert read_csv(path) == recs


def test_csv_header_and_neg_inf(tmp_path):
    path = tmp_path / "r.csv"
    rec = EstimateRecord("tmc", 2, 3, 0, -math.inf, -1.5, 10)
    write_csv([rec], path)
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)
    assert read_csv(path) == [rec]
    with pytest.raises(ValueError):
        EstimateRecord("tmc", 2, 3, 0, 0.0, 0.0, -1)


# --- config

def test_parse_config():
    cfgs = parse_config(SMALL)
    assert [c.name for c in cfgs] == ["small", "chain"]
    small = cfgs[0]
    assert small.methods == ("vae", "iwae", "tmc", "smc")
    assert small.ks == (2, 8) and small.seeds == 3 and small.seed_base == 10 and small.data_seed == 2


@pytest.mark.parametrize("text", [
    "",
    "[x]\nn = 3\nmethods = tmc\nk = 2\n\n[x]\nn=2\nmethods=tmc\nk=2\n",
    "[x]\nmodel = hierarchical\nn = 3\nmethods = magic\nk = 2\n",
    "[x]\nmodel = lattice\nn = 3\nmethods = tmc\nk = 2\n",
    "[x]\nn = 3\nmethods = tmc\nk = 0\n",
    "[x]\nn = 3\nmethods = tmc\nk = two\n",
    "[x]\nn = 3\nmethods = tmc\nk = 2\nseeds = 0\n",
    "[x]\nn = 3\nmethods = tmc\n",
    "[x]\nn = 3\nmethods = tmc\nk = 8192\n",
    "[x]\nn = 3\nmethods = tmc\nk = 2\nproposal = learned\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_large_runs_need_flag():
    text = "[x]\nn = 3\nmethods = iwae\nk = 8192\n"
    assert parse_config(text, allow_large=True)[0].ks == (8192,)


def test_shipped_configs_parse():
    for name in ("hierarchical_k", "hierarchical_n", "chain_proposals"):
        assert load_config(f"configs/{name}.cfg")


# --- sweep

def test_one_point_one_record(tmp_path):
    out = tmp_path / "one.csv"
    recs = run_sweep(parse_config(ONE), out)
    assert len(recs) == 1
    assert read_csv(out) == recs
    r = recs[0]
    assert (r.method, r.K, r.N, r.seed) == ("tmc", 4, 3, 0) and r.elapsed_ns >= 0


def _stable(recs):
    return [(r.method, r.K, r.N, r.seed, r.estimate, r.ground_truth) for r in recs]


def test_sweep_reproducible_and_thread_order_independent():
    cfgs = parse_config(SMALL)
    a = run_sweep(cfgs)
    b = run_sweep(cfgs, threads=4)
    assert _stable(a) == _stable(b)
    assert len(a) == 4 * 2 * 3 + 2 * 1 * 2
    by_model = {}
    for r in a:
        by_model.setdefault(r.N, set()).add(r.ground_truth)
    assert all(len(v) == 1 for v in by_model.values())


def test_seed_base_override():
    cfg = parse_config(ONE)[0]
    recs = run_sweep(cfg, seed_base=50)
    assert recs[0].seed == 50


def test_unwritable_output():
    with pytest.raises(OSError):
        run_sweep(parse_config(ONE), "/nonexistent-dir/out.csv")


def test_dump_graph():
    text = dump_graphs(parse_config(ONE))
    assert "# one tmc K=4" in text
    assert "factor 0 scope=[0] shape=[4]" in text
    assert "factor 1 scope=[1,0] shape=[4,4]" in text


# --- cost benchmark

def test_bench_k1_positive_and_csv(tmp_path):
    rows = bench.run_cost_benchmark([4, 4], [1, 2], repetitions=1, hidden=8)
    assert [k for k, _ in rows] == [1, 2] and all(ns > 0 for _, ns in rows)
    bench.write_bench_csv(rows, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("K,elapsed_ns")


def test_bench_rejects_bad_widths():
    with pytest.raises(ValueError):
        bench.run_cost_benchmark([0], [1])


def test_bench_estimate_matches_generic_graph_path():
    # the fused pairwise densities against a direct per-pair evaluation
    model = bench.LayeredChain([3, 2], hidden=5, seed=1)
    z = np.random.default_rng(0).normal(size=(4, 3))
    mu, ls = model.net(1, np.random.default_rng(1).normal(size=(5, 2)))
    pw = bench._pairwise(z, mu, ls)
    for k in range(4):
        for j in range(5):
            var = np.exp(2 * ls[j])
            ref = np.sum(-0.5 * np.log(2 * np.pi * var) - 0.5 * (z[k] - mu[j]) ** 2 / var)
            assert pw[k, j] == pytest.approx(ref, abs=1e-10)


def test_layer_doubling_roughly_doubles_time():
    def median_ns(layers):
        return bench.run_cost_benchmark([16] * layers, [64], repetitions=5, hidden=64)[0][1]

    assert median_ns(8) / median_ns(4) < 3.0


# --- verify and CLI

def test_verify_all_pass():
    results = verify_suite()
    assert [r.name for r in results] == list(CHECKS)
    assert all(r.passed for r in results), [r for r in results if not r.passed]


def test_verify_stable_across_seeds():
    for seed in range(1, 5):
        assert all(r.passed for r in verify_suite(seed=seed))


def test_verify_catches_normalisation_fault(monkeypatch):
    real = factorgraph.contract

    def skewed(factors, axis, cardinal_norm=True):
        t = real(factors, axis, cardinal_norm)
        return LogTensor(t.axes, t.data + math.log(2.0), check=False)

    monkeypatch.setattr(factorgraph, "contract", skewed)
    (result,) = verify_suite("brute-force")
    assert not result.passed


def test_cli_sweep_and_verify(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "one.cfg"
    cfg.write_text(ONE)
    out = tmp_path / "one.csv"
    assert cli.main(["--threads", "2", "sweep", "--config", str(cfg), "--out", str(out), "--dump-graph"]) == 0
    assert len(read_csv(out)) == 1
    assert "factor 0" in capsys.readouterr().out
    assert cli.main(["verify", "--filter", "logmmexp"]) == 0
    assert capsys.readouterr().out.startswith("PASS logmmexp")
    assert cli.main(["verify", "--filter", "no-such-check"]) == 1


def test_cli_bench(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["bench-cost", "--layers", "4,4", "--k", "2,4", "--reps", "1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[x]\nn = 3\nmethods = nope\nk = 2\n")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_threads_env(monkeypatch, tmp_path):
    cfg = tmp_path / "one.cfg"
    cfg.write_text(ONE)
    monkeypatch.setenv("TENSORMC_THREADS", "3")
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 0
