import random

import pytest

from robostore.errors import JobFailed, UnknownFunction, UnknownTable, ZeroSplits
from robostore.mapreduce import JobSpec, MapReduceEngine, default_registry, sequential_fold
from robostore.storage import ColumnPath, ColumnStore


def make_store(values, table="notes"):
    store = ColumnStore()
    store.create_table(table, [("text", False)])
    for i, value in enumerate(values):
        store.put(ColumnPath(table, b"row%04d" % i, "text", "body"), value)
    return store


def wordcount_spec(splits=2):
    return JobSpec(table="notes", map_fn="wordcount", reduce_fn="sum", splits=splits)


# --- submit ---

def test_single_split_equals_sequential():
    store = make_store([b"a b", b"b c", b"c"])
    engine = MapReduceEngine(store, workers=3)
    job = engine.submit(wordcount_spec(splits=1))
    assert engine.wait(job) == sequential_fold(store, wordcount_spec(splits=1))


def test_one_row_per_worker():
    store = make_store([b"x", b"y", b"z"])
    engine = MapReduceEngine(store, workers=3)
    job = engine.submit(wordcount_spec(splits=3))
    state = engine.job_state(job)
    assert [len(s.rows) for s in state.splits] == [1, 1, 1]
    assert engine.wait(job) == {"x": 1, "y": 1, "z": 1}


def test_submit_errors():
    store = make_store([b"a"])
    engine = MapReduceEngine(store)
    with pytest.raises(ZeroSplits):
        engine.submit(JobSpec("notes", "wordcount", "sum", 0))
    with pytest.raises(UnknownFunction):
        engine.submit(JobSpec("notes", "nope", "sum", 1))
    with pytest.raises(UnknownFunction):
        engine.submit(JobSpec("notes", "wordcount", "nope", 1))
    with pytest.raises(UnknownTable):
        engine.submit(JobSpec("ghosts", "wordcount", "sum", 1))


def test_any_spec_matches_fold_oracle():
    rng = random.Random(4)
    words = ["grip", "lift", "turn", "hold"]
    values = [" ".join(rng.choice(words) for _ in range(rng.randint(0, 6))).encode()
              for _ in range(30)]
    store = make_store(values)
    for m in (1, 3, 7, 30, 40):
        engine = MapReduceEngine(store, workers=4, seed=m)
        spec = wordcount_spec(splits=m)
        assert engine.wait(engine.submit(spec)) == sequential_fold(store, spec)


# --- wait ---

def test_empty_input_gives_empty_result():
    store = make_store([])
    engine = MapReduceEngine(store)
    assert engine.wait(engine.submit(wordcount_spec())) == {}


def test_word_count_over_name_fixture():
    store = make_store([b"Arun", b"son", b"Raju", b"son"])
    engine = MapReduceEngine(store)
    result = engine.wait(engine.submit(wordcount_spec(splits=2)))
    assert result == {"son": 2, "Arun": 1, "Raju": 1}


def test_result_invariant_across_split_counts():
    store = make_store([b"p q", b"q r", b"r s", b"s t", b"t u"])
    results = []
    for m in range(1, 9):
        engine = MapReduceEngine(store, workers=3, seed=0)
        results.append(engine.wait(engine.submit(wordcount_spec(splits=m))))
    assert all(r == results[0] for r in results)


def test_max_ts_and_match_count_functions():
    store = ColumnStore()
    store.create_table("scans", [("img", False)])
    store.put(ColumnPath("scans", b"r1", "img", "data"), b"xxabcxxabc", ts=50)
    store.put(ColumnPath("scans", b"r2", "img", "data"), b"abc", ts=900)
    engine = MapReduceEngine(store)
    top = engine.wait(engine.submit(JobSpec("scans", "maxts", "max", 2)))
    assert top == {"max_ts": 900}
    spec = JobSpec("scans", "matchcount", "sum", 2, params={"template": b"abc"})
    assert engine.wait(engine.submit(spec)) == {"matches": 3}
    assert sequential_fold(store, spec) == {"matches": 3}


# --- worker failure ---

def test_fail_idle_worker_no_job_effect():
    store = make_store([b"a b c"])
    engine = MapReduceEngine(store, workers=3)
    engine.fail_worker(2)
    assert engine.wait(engine.submit(wordcount_spec())) == {"a": 1, "b": 1, "c": 1}


def test_fail_mid_map_still_matches_oracle():
    store = make_store([b"w%d" % (i % 5) for i in range(40)])
    spec = wordcount_spec(splits=8)
    expect = sequential_fold(store, spec)
    for victim_count in (1, 2, 3):
        engine = MapReduceEngine(store, workers=4, seed=victim_count)
        job = engine.submit(spec)
        for v in range(victim_count):
            engine.loop.run_for(1)
            engine.fail_worker(v)
        assert engine.wait(job) == expect


def test_fail_all_workers_fails_job():
    store = make_store([b"a"])
    engine = MapReduceEngine(store, workers=2)
    job = engine.submit(wordcount_spec())
    engine.fail_worker(0)
    engine.fail_worker(1)
    with pytest.raises(JobFailed):
        engine.wait(job)


def test_no_double_count_after_reexecution():
    store = make_store([b"dup"] * 12)
    spec = wordcount_spec(splits=6)
    engine = MapReduceEngine(store, workers=3, seed=9)
    job = engine.submit(spec)
    engine.loop.run_for(1)
    engine.fail_worker(0)
    result = engine.wait(job)
    assert result == {"dup": 12}


def test_retry_budget_exhaustion():
    store = make_store([b"a"])
    engine = MapReduceEngine(store, workers=2, retry_budget=3)
    job = engine.submit(wordcount_spec(splits=1))
    state = engine.job_state(job)
    # keep killing whichever worker holds the split, reviving the other
    for _ in range(8):
        if state.phase == "Failed":
            break
        split = state.splits[0]
        if split.worker is not None:
            victim = split.worker
            engine.fail_worker(victim)
            engine.net.set_alive(victim, True)
        engine.loop.run_for(1)
    with pytest.raises(JobFailed):
        engine.wait(job)
    assert "retry budget" in state.failure


# --- determinism and reduce contract ---

def test_fixed_seed_reproduces_results_and_trace():
    store = make_store([b"m n", b"n o", b"o p"])
    traces = []
    for _ in range(2):
        engine = MapReduceEngine(store, workers=3, seed=11)
        engine.loop.enable_trace()
        engine.wait(engine.submit(wordcount_spec(splits=3)))
        traces.append("\n".join(engine.loop.trace))
    assert traces[0] == traces[1]


def test_reduce_functions_are_order_insensitive():
    rng = random.Random(21)
    registry = default_registry()
    for name in ("sum", "max"):
        fn = registry.reduce_fn(name)
        values = [rng.randint(0, 50) for _ in range(20)]
        shuffled = values[:]
        rng.shuffle(shuffled)
        assert fn("k", values, {}) == fn("k", shuffled, {})
