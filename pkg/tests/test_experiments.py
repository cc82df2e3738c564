import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from vfoldpen.experiments import (
    PURPOSES,
    ReplicationResult,
    SelectorResult,
    appendix_selectors,
    benchmark,
    resolve_workers,
    run_replication,
    run_replications,
    stream,
    summarize,
    table1_selectors,
)
from vfoldpen.histogram_core import HistogramModel, Partition1D, bias, build_collection
from vfoldpen.scenarios import SCENARIOS, generate, get_scenario, linear_scenario
from vfoldpen.errors import ConfigError
from vfoldpen.selectors import Method, SelectorSpec

GOLDEN = Path(__file__).parent / "golden" / "s1_losses.json"


# --- scenarios and streams ----------------------------------------------------------


def test_scenario_table():
    assert set(SCENARIOS) == {
        "S1", "S2", "HSd1", "HSd2", "S1000", "Ssqrt0.1", "S0.1", "Svar2", "Sqrt", "His6", "DopReg", "Dop2bin",
    }
    assert SCENARIOS["HSd1"].n == 2048
    assert SCENARIOS["S1000"].n == 1000
    assert SCENARIOS["Ssqrt0.1"].mean_noise_variance() == pytest.approx(0.1)
    assert SCENARIOS["S0.1"].mean_noise_variance() == pytest.approx(0.01)
    assert SCENARIOS["S2"].mean_noise_variance() == pytest.approx(1 / 3)
    with pytest.raises(ConfigError):
        get_scenario("BOGUS")


def test_generate_reproducible_and_in_range():
    a = generate(SCENARIOS["S1"], stream(3, 0, "data"))
    b = generate(SCENARIOS["S1"], stream(3, 0, "data"))
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_array_equal(a.ys, b.ys)
    assert a.n == 200
    assert np.all((a.xs >= 0) & (a.xs < 1))


def test_generate_noiseless():
    sc = SCENARIOS["S1"]
    d = generate(sc, np.random.default_rng(0), noiseless=True)
    np.testing.assert_allclose(d.ys, np.sin(np.pi * d.xs), rtol=1e-15)


def test_generate_noise_variance():
    sc = SCENARIOS["S2"].with_n(200_000)
    d = generate(sc, np.random.default_rng(1))
    resid = d.ys - sc.s(d.xs)
    assert resid.var() == pytest.approx(1 / 3, rel=0.01)


def test_streams_are_distinct():
    keys = [(0, 0, "data"), (0, 1, "data"), (1, 0, "data"), (0, 0, "folds"), (0, 0, "stratified-folds")]
    draws = {k: stream(*k).random() for k in keys}
    assert len(set(draws.values())) == len(keys)
    assert stream(0, 0, "folds", 2).random() != stream(0, 0, "folds", 5).random()
    assert set(PURPOSES) == {"data", "folds", "stratified-folds"}
    with pytest.raises(KeyError):
        stream(0, 0, "other")


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("VFOLD_THREADS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    monkeypatch.delenv("VFOLD_THREADS")
    assert resolve_workers(None) >= 1


# --- rosters ------------------------------------------------------------------------


def test_table1_roster():
    labels = [s.label for s in table1_selectors()]
    assert labels == [
        "E[penid]", "E[penid]+", "Mal", "Mal+",
        "2-FCV", "5-FCV", "10-FCV", "20-FCV", "LOO",
        "pen2-F", "pen5-F", "pen10-F", "pen20-F", "penLoo",
        "pen2-F+", "pen5-F+", "pen10-F+", "pen20-F+", "penLoo+",
    ]


def test_appendix_roster():
    labels = [s.label for s in appendix_selectors()]
    assert labels[4:6] == ["Mal*", "Mal*+"]
    assert len(labels) == len(table1_selectors()) + 2


# --- replications and summaries -----------------------------------------------------


def test_replication_basic():
    sel = [SelectorSpec(Method.PATH_ORACLE), SelectorSpec(Method.VFCV, V=2), SelectorSpec(Method.MALLOWS)]
    rep = run_replication(SCENARIOS["S1"], sel, master_seed=4, replication=2)
    assert rep.oracle_loss == min(rep.model_losses.values())
    assert rep.selectors[0].loss == rep.oracle_loss
    for r in rep.selectors:
        assert r.loss >= rep.oracle_loss
        assert rep.model_losses[r.chosen] == r.loss


def test_path_oracle_scores_one():
    sel = [SelectorSpec(Method.PATH_ORACLE)]
    t = benchmark(SCENARIOS["S1"], sel, N=4, master_seed=0)
    row = t.row("path-oracle")
    assert row.C_or == pytest.approx(1.0, rel=1e-14)
    assert row.C_path_or == pytest.approx(1.0, rel=1e-14)
    assert row.se_path_or == pytest.approx(0.0, abs=1e-14)


def test_single_model_collection():
    sc = SCENARIOS["S1"]
    col = [HistogramModel(0, Partition1D.regular(4))]
    sel = [SelectorSpec(Method.VFCV, V=5), SelectorSpec(Method.PEN_VF_GENERAL, V=2), SelectorSpec(Method.MALLOWS)]
    reps = [run_replication(sc, sel, 0, i, collection=col) for i in range(3)]
    t = summarize(sc, sel, reps)
    for row in t.rows:
        assert row.C_or == pytest.approx(1.0, rel=1e-14)
        assert row.C_prime_or == pytest.approx(1.0, rel=1e-14)


def test_summary_by_hand():
    def rep(i, oracle, loss, models):
        return ReplicationResult(i, oracle, models, [SelectorResult(0, 1, loss)])

    reps = [rep(0, 1.0, 2.0, {0: 2.0, 1: 1.0}), rep(1, 2.0, 2.0, {0: 2.0, 1: 3.0})]
    spec = [SelectorSpec(Method.MALLOWS)]
    row = summarize(SCENARIOS["S1"], spec, reps).rows[0]
    assert row.C_or == pytest.approx(2.0 / 1.5)
    assert row.C_path_or == pytest.approx(1.5)
    assert row.se_path_or == pytest.approx(math.sqrt(0.5) / math.sqrt(2))
    assert row.C_prime_or == pytest.approx(1.0)
    assert row.se_or == pytest.approx(0.0)


def test_summary_records_failures():
    reps = [
        ReplicationResult(0, 1.0, {0: 1.0}, [SelectorResult(None, None, math.nan, 0, "boom")]),
        ReplicationResult(1, 1.0, {0: 1.0}, [SelectorResult(0, 1, 1.0)]),
    ]
    row = summarize(SCENARIOS["S1"], [SelectorSpec(Method.MALLOWS)], reps).rows[0]
    assert row.failures == 1 and row.N == 1


def test_c_prime_at_most_c_or():
    t = benchmark(SCENARIOS["S1"], table1_selectors(), N=6, master_seed=11)
    for row in t.rows:
        assert row.C_prime_or <= row.C_or * (1 + 1e-12)
        assert row.C_or >= 1.0 and row.C_path_or >= 1.0


def test_selector_order_invariance():
    sel = [SelectorSpec(Method.VFCV, V=5), SelectorSpec(Method.PEN_VF_GENERAL, V=5), SelectorSpec(Method.MALLOWS)]
    a = run_replication(SCENARIOS["S2"], sel, 9, 1)
    b = run_replication(SCENARIOS["S2"], sel[::-1], 9, 1)
    assert [r.loss for r in a.selectors] == [r.loss for r in b.selectors[::-1]]


def test_workers_do_not_change_results():
    sel = table1_selectors()[:6]
    one = run_replications(SCENARIOS["S1"], sel, 5, 3, workers=1)
    two = run_replications(SCENARIOS["S1"], sel, 5, 3, workers=2)
    assert [[s.loss for s in r.selectors] for r in one] == [[s.loss for s in r.selectors] for r in two]


def test_benchmark_needs_two_reps():
    with pytest.raises(ValueError):
        benchmark(SCENARIOS["S1"], table1_selectors(), N=1, master_seed=0)


def test_table_dict_round_trip():
    t = benchmark(SCENARIOS["S1"], table1_selectors()[:3], N=2, master_seed=0)
    back = type(t).from_dict(json.loads(json.dumps(t.to_dict())))
    assert back == t


def test_svar2_direction():
    # noise lives only on [1/2, 1), so good selectors refine the left half more
    sc = SCENARIOS["Svar2"]
    col = {m.id: m for m in build_collection(sc.collection_kind, sc.n)}
    sel = [SelectorSpec(Method.PEN_VF_GENERAL, V=5), SelectorSpec(Method.IDEAL_EXPECTED_PENALTY)]
    reps = run_replications(sc, sel, 30, 2)
    for k in range(len(sel)):
        left = []
        right = []
        for r in reps:
            part = col[r.selectors[k].chosen].partition
            left.append(int(np.sum(part.hi <= 0.5)))
            right.append(int(np.sum(part.lo >= 0.5)))
        assert np.median(left) > np.median(right)


def test_linear_scenario_bias():
    sc = linear_scenario(500, 0.3)
    assert sc.n == 500 and sc.mean_noise_variance() == pytest.approx(0.09)
    assert bias(sc, HistogramModel(0, Partition1D.regular(4))) == pytest.approx(1 / 192, rel=1e-9)


# --- golden snapshot ----------------------------------------------------------------


def _snapshot():
    reps = run_replications(SCENARIOS["S1"], table1_selectors(), 3, 5, workers=1)
    return [
        {
            "replication": r.replication,
            "oracle": r.oracle_loss,
            "losses": {s.label: x.loss for s, x in zip(table1_selectors(), r.selectors)},
        }
        for r in reps
    ]


def test_golden_losses():
    snap = _snapshot()
    if os.environ.get("VFOLD_REGEN_GOLDEN"):
        GOLDEN.parent.mkdir(exist_ok=True)
        GOLDEN.write_text(json.dumps(snap, indent=1))
    ref = json.loads(GOLDEN.read_text())
    assert len(ref) == len(snap)
    for a, b in zip(ref, snap):
        assert a["replication"] == b["replication"]
        assert b["oracle"] == pytest.approx(a["oracle"], rel=1e-12)
        assert set(a["losses"]) == set(b["losses"])
        for k in a["losses"]:
            assert b["losses"][k] == pytest.approx(a["losses"][k], rel=1e-12), k
