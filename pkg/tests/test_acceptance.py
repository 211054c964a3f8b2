"""Acceptance criteria 1-9, each checked at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (also collected in the
terminal summary) before asserting. Run just this file with

    pytest tests/test_acceptance.py -v -s

The steering criteria (5-8) share one module-scoped experiment: the agent is
trained to checkpoint 200 with its experience recorded in a knowledge store,
then every arm is evaluated on the same 10 seeds for a 2500-step horizon.
"""

from __future__ import annotations

import shutil
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
import pytest

from symbolic_xrl.cli import main
from symbolic_xrl.core import SchemaA1, SchemaA2, validate_trajectory
from symbolic_xrl.experiment import relative_improvement, run_episode, train_with_store
from symbolic_xrl.explain import (
    FrequencyTable,
    compare_distributions,
    decision_effect_density,
    effect_distribution,
    export_kg,
    state_distribution,
)
from symbolic_xrl.intent import parse_intent
from symbolic_xrl.p2 import P2Estimator, QuartileTracker
from symbolic_xrl.playground import MimoEnv, MimoEnvConfig
from symbolic_xrl.playground.env import make_step
from symbolic_xrl.steering import SteeringConfig
from symbolic_xrl.store import ExperienceStore, build_kg
from symbolic_xrl.symbolizer import (
    change_predicate,
    nearest_percentage,
    symbolize_scalar,
    symbolize_trajectory,
    vocabulary_size,
)

SEEDS = range(10)
T = 2500
FRACTIONS = (0.0, 0.25, 0.5, 0.75)
WINDOW = (round(0.68 * T), round(0.88 * T))


def random_a2_trajectory(steps: int, seed: int):
    env = MimoEnv(MimoEnvConfig(seed=seed, horizon=steps))
    rng = np.random.default_rng(seed)
    out = []
    for t in range(steps):
        state = env.state
        mask = rng.integers(0, 2, size=7).tolist()
        _, r = env.step(mask)
        out.append(make_step(t, state, mask, r))
    return validate_trajectory(out, SchemaA2())


# -- 1 ------------------------------------------------------------------------


def test_criterion_1_vocabulary(acceptance):
    sizes = {n: vocabulary_size(n) for n in ("A1-explora", "A2-explora", "A2-symb")}
    exact = sizes == {"A1-explora": 31_752, "A2-explora": 128, "A2-symb": 75}
    observed = set()
    for seed in range(3):
        trace = symbolize_trajectory(random_a2_trajectory(2500, seed))
        observed |= {term for action in trace.actions for term in action}
    ok = exact and len(observed) <= 75
    assert acceptance(1, ok, f"sizes={sizes} observed_A2_actions={len(observed)} (<=75)")


# -- 2 ------------------------------------------------------------------------


def p2(p: float, xs) -> float:
    est = P2Estimator(p)
    for x in xs:
        est.observe(float(x))
    return est.estimate()


def test_criterion_2_p2_accuracy(acceptance):
    xs = np.random.default_rng(2024).uniform(size=100_000)
    uniform_err = {p: abs(p2(p, xs) - float(np.quantile(xs, p))) for p in (0.25, 0.5, 0.75)}
    uniform_ok = all(e < 0.01 for e in uniform_err.values())

    # Relative error against the sorted oracle. The standard normal median is
    # about 0, where a relative band vanishes; that one cell is judged against
    # 2% of the interquartile range instead and its literal relative rate is printed.
    hits, literal = Counter(), Counter()
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        samples = {"normal": rng.normal(size=10_000), "exponential": rng.exponential(size=10_000)}
        for dist, ys in samples.items():
            exact = {p: float(np.quantile(ys, p)) for p in (0.25, 0.5, 0.75)}
            for p, q in exact.items():
                err = abs(p2(p, ys) - q)
                rel_ok = err <= 0.02 * abs(q)
                literal[(dist, p)] += rel_ok
                if dist == "normal" and p == 0.5:
                    rel_ok = err <= 0.02 * (exact[0.75] - exact[0.25])
                hits[(dist, p)] += rel_ok
    stream_ok = all(h >= 95 for h in hits.values())
    detail = (f"uniform_100k_max_abs_err={max(uniform_err.values()):.5f} "
              f"seeds_within_2pct={{{', '.join(f'{d}@{p}:{h}' for (d, p), h in sorted(hits.items()))}}} "
              f"literal_relative_normal_median={literal[('normal', 0.5)]}/100")
    assert acceptance(2, uniform_ok and stream_ok, detail)


# -- 3 ------------------------------------------------------------------------


def test_criterion_3_symbolizer_goldens(acceptance):
    schema = SchemaA1()
    goldens = {12: 3, 23: 5, 40: 9}
    golden_ok = all(schema.category(prb) == c for prb, c in goldens.items()) and nearest_percentage(2, 3) == 75

    rng = np.random.default_rng(33)
    tracker = QuartileTracker()
    bad = 0
    prev = 0.0
    for i in range(10_000):
        kind = i % 4
        if kind == 0:
            cur = prev
        elif kind == 1:
            cur = prev * (1 + rng.uniform(-0.02, 0.02))
        else:
            cur = float(rng.normal(0, 10) * 10.0 ** rng.integers(-3, 4))
        tracker.observe(cur)
        term = symbolize_scalar("x@embb", prev, cur, tracker, 0.01, 1e-9)
        matches = [p for p in ("inc", "dec", "const") if term.pred == p]
        diff, bound = cur - prev, max(0.01 * abs(prev), 1e-9)
        expected = "const" if abs(diff) <= bound else ("inc" if diff > 0 else "dec")
        markers = tracker.estimates()
        expected_label = f"Q{1 + sum(cur > m for m in markers)}"
        if len(matches) != 1 or term.pred != expected or term.args != (expected_label,):
            bad += 1
        if change_predicate(prev, cur, 0.01, 1e-9) != expected:
            bad += 1
        prev = cur
    ok = golden_ok and bad == 0
    assert acceptance(3, ok, f"goldens={'ok' if golden_ok else 'wrong'} fuzz_violations={bad}/10000")


# -- 4 ------------------------------------------------------------------------


def test_criterion_4_kg_and_analytics(acceptance):
    rng = np.random.default_rng(44)
    vocab = [f"sched(g{g},{q},{pct})" for g in range(3) for q in ("Q1", "Q2", "Q3", "Q4", "MAX")
             for pct in (25, 50, 75, 100)] + [f"noSched(g{g})" for g in range(3)]
    failures = []
    for i in range(1000):
        seqs = [[vocab[j] for j in rng.integers(0, len(vocab), size=rng.integers(1, 40))]
                for _ in range(rng.integers(1, 4))]
        kg = build_kg(seqs)
        if dict(kg.nodes) != dict(Counter(k for s in seqs for k in s)):
            failures.append(f"nodes#{i}")
        probs = kg.probabilities()
        for src in {s for s, _ in probs}:
            if abs(sum(p for (s, _), p in probs.items() if s == src) - 1.0) > 1e-9:
                failures.append(f"outprob#{i}")
        transitions = Counter((s[k], s[k + 1]) for s in seqs for k in range(len(s) - 1))
        if dict(kg.edges) != dict(transitions):
            failures.append(f"edges#{i}")
        for fmt in ("json", "dot"):
            if export_kg(kg, fmt) != export_kg(build_kg(seqs), fmt):
                failures.append(f"export-{fmt}#{i}")

    traj = random_a2_trajectory(10_000, 4)
    trace = symbolize_trajectory(traj)
    oracle_states = Counter(str(term) for s in trace.states for term in s)
    got = state_distribution(trace)["all"]
    if dict(got.counts) != dict(oracle_states):
        failures.append("state-dist")
    # effect of the action at t is the state at t+1
    oracle_effects = Counter(str(term) for s in trace.states[1:] for term in s)
    if dict(effect_distribution(trace).counts) != dict(oracle_effects):
        failures.append("effect-dist")
    pairs = Counter((trace.actions[t].key, trace.states[t + 1].key) for t in range(len(trace) - 1))
    total = sum(pairs.values())
    rows, cols = Counter(), Counter()
    for (r, c), n in pairs.items():
        rows[r] += n
        cols[c] += n
    for norm, denom in (("joint", lambda r, c: total), ("row", lambda r, c: rows[r]), ("col", lambda r, c: cols[c])):
        cells = decision_effect_density(trace, normalization=norm).cells()
        oracle = {k: n / denom(*k) for k, n in pairs.items()}
        if set(cells) != set(oracle) or any(abs(cells[k] - v) > 1e-12 for k, v in oracle.items()):
            failures.append(f"density-{norm}")
    half = len(trace) // 2
    a = Counter(str(x) for s in trace.states[:half] for x in s)
    b = Counter(str(x) for s in trace.states[half:] for x in s)
    na, nb = sum(a.values()), sum(b.values())
    first = symbolize_trajectory(validate_trajectory(traj.steps[:half], SchemaA2()))
    if dict(state_distribution(first)["all"].counts) != dict(a):
        failures.append("prefix-dist")
    deltas = compare_distributions(state_distribution(first)["all"], FrequencyTable(dict(b)))
    oracle_delta = {k: b[k] / nb - a[k] / na for k in set(a) | set(b)}
    if {d.key for d in deltas} != set(oracle_delta) or any(abs(d.delta - oracle_delta[d.key]) > 1e-12 for d in deltas):
        failures.append("deltas")
    ok = not failures
    assert acceptance(4, ok, f"kg_sequences=1000 trace_steps={len(trace)} failures={failures[:5]}")


# -- 5-8: shared steering experiment --------------------------------------------


@pytest.fixture(scope="module")
def experiment():
    env_cfg = MimoEnvConfig(seed=1, horizon=T)
    ckpts, returns, snapshot = train_with_store(env_cfg, 200, (50, 100, 200))
    intents = (parse_intent(f"notSchedule(6) @ [{WINDOW[0]},{WINDOW[1]}]"),)
    arms = {f"rm{f}": (200, SteeringConfig(mode="reward-max", start_frac=f)) for f in FRACTIONS}
    arms.update({
        "off200": (200, SteeringConfig(mode="off")),
        "off50": (50, SteeringConfig(mode="off")),
        "condition": (200, SteeringConfig(mode="condition", intents=intents)),
        "force": (200, SteeringConfig(mode="force", intents=intents)),
        "accel50": (50, SteeringConfig(mode="accel", start_frac=0.25)),
        "accel200": (200, SteeringConfig(mode="accel", start_frac=0.25)),
    })
    lo, hi = WINDOW
    results = defaultdict(dict)
    for seed in SEEDS:
        for name, (ck, conf) in arms.items():
            r = run_episode(env_cfg, ckpts[ck], conf, seed, snapshot, T, epsilon=0.05)
            # keep summaries only; each result carries a full store copy
            results[name][seed] = EpisodeSummary(
                cumulative_reward=r.cumulative_reward,
                n_decisions=len(r.decisions),
                n_replaced=sum(r.replacements().values()),
                user6_in_window=sum(int(d.applied[6]) for d in r.decisions if lo <= d.t <= hi)
                + sum(st.action["mask"][6] for st in r.steps if lo <= st.t <= hi),
                dominance_violations=dominance_violations(snapshot, r, conf.delta) if conf.mode == "reward-max" else 0,
            )
    return {"results": results, "returns": returns, "intents": intents}


@dataclass(frozen=True)
class EpisodeSummary:
    cumulative_reward: float
    n_decisions: int
    n_replaced: int
    user6_in_window: int
    dominance_violations: int


def dominance_violations(snapshot, result, delta: float) -> int:
    """Replay the store step by step and check every replacement against brute-force means."""
    sums: dict[tuple[str, str], list[float]] = defaultdict(lambda: [0.0, 0])
    concretes: dict[tuple[str, str], list] = defaultdict(list)
    for e in ExperienceStore.from_dict(snapshot).experiences:
        sums[(e.state, e.action)][0] += e.reward
        sums[(e.state, e.action)][1] += 1
        concretes[(e.state, e.action)].append(e.concrete)
    episode = result.store.experiences[-len(result.steps):]
    by_t = {d.t: d for d in result.decisions}
    bad = 0
    for exp in episode:
        d = by_t.get(exp.t)
        if d is not None and d.replaced:
            means = {a: s / n for (st, a), (s, n) in sums.items() if st == d.matched_state}
            est_prop = means.get(d.proposed_action)
            best = max(means.values()) if means else None
            if (est_prop is None or best is None
                    or abs(means.get(d.applied_action, float("nan")) - d.est_applied) > 1e-9
                    or abs(est_prop - d.est_proposed) > 1e-9
                    or d.est_applied < best - 1e-9
                    or not d.est_applied > d.est_proposed + delta
                    or list(d.applied) not in concretes[(d.matched_state, d.applied_action)]):
                bad += 1
        sums[(exp.state, exp.action)][0] += exp.reward
        sums[(exp.state, exp.action)][1] += 1
        concretes[(exp.state, exp.action)].append(exp.concrete)
    return bad


def improvements(results, arm: str) -> list[float]:
    return [relative_improvement(results[arm][s].cumulative_reward, results["off200"][s].cumulative_reward)
            for s in SEEDS]


def test_criterion_5_reward_max_improvement(experiment, acceptance):
    res = experiment["results"]
    imp = improvements(res, "rm0.0")
    med = statistics.median(imp)
    n_replaced = sum(r.n_replaced for r in res["rm0.0"].values())
    violations = sum(r.dominance_violations for f in FRACTIONS for r in res[f"rm{f}"].values())
    ok = med > 0 and violations == 0 and n_replaced > 0
    detail = (f"median_rel_improvement={100 * med:+.3f}% per_seed={[round(100 * x, 3) for x in imp]} "
              f"replacements={n_replaced} dominance_violations={violations} (reference point 11.76% not reproduced)")
    assert acceptance(5, ok, detail)


def test_criterion_6_start_fraction_trend(experiment, acceptance):
    res = experiment["results"]
    medians = {f: statistics.median(improvements(res, f"rm{f}")) for f in FRACTIONS}
    ok = medians[0.0] >= medians[0.75]
    detail = "median_improvement_by_start_frac=" + str({f: f"{100 * m:+.3f}%" for f, m in medians.items()})
    assert acceptance(6, ok, detail)


def test_criterion_7_decision_conditioning(experiment, acceptance):
    res, intents = experiment["results"], experiment["intents"]
    lo, hi = WINDOW
    scheduled = sum(r.user6_in_window for r in res["condition"].values())
    forced_scheduled = sum(r.user6_in_window for r in res["force"].values())
    full_logs = all(r.n_decisions == T for r in res["condition"].values())
    cond = statistics.median(r.cumulative_reward for r in res["condition"].values())
    force = statistics.median(r.cumulative_reward for r in res["force"].values())
    ok = full_logs and scheduled == 0 and forced_scheduled == 0 and cond >= force
    detail = (f"window=[{lo},{hi}] user6_scheduled_in_window={scheduled} median_cum_condition={cond:.2f} "
              f"median_cum_force={force:.2f} intents={[str(i) for i in intents]}")
    assert acceptance(7, ok, detail)


def test_criterion_8_accelerated_learning(experiment, acceptance):
    res = experiment["results"]
    cum = {arm: [res[arm][s].cumulative_reward for s in SEEDS] for arm in ("off50", "off200", "accel50", "accel200")}
    mean50, mean200 = np.mean(cum["off50"]), np.mean(cum["off200"])
    gaps_off = [b - a for a, b in zip(cum["off50"], cum["off200"])]
    gaps_ias = [b - a for a, b in zip(cum["accel50"], cum["accel200"])]
    narrowed = sum(abs(g) < abs(g0) for g, g0 in zip(gaps_ias, gaps_off))
    ok = mean50 < mean200 and narrowed >= 7
    detail = (f"mean_return50={mean50:.2f} mean_return200={mean200:.2f} gap_narrowed_seeds={narrowed}/10 "
              f"gap_no_ias={[round(g, 1) for g in gaps_off]} gap_ias={[round(g, 1) for g in gaps_ias]}")
    assert acceptance(8, ok, detail)


# -- 9 ------------------------------------------------------------------------

PIPELINE_CONFIG = """
[env]
horizon = 300
seed = 9

[agent]
train_horizon = 50

[run]
seeds = 2
"""


def run_pipeline(d) -> None:
    cfg = str(d / "c.ini")
    (d / "c.ini").write_text(PIPELINE_CONFIG)
    steps = [
        ["train", "--config", cfg, "--episodes", "6", "--checkpoints", "3,6", "--out", str(d / "train")],
        ["simulate", "--config", cfg, "--checkpoint", str(d / "train/ckpt_6.json"), "--out", str(d / "sim")],
        ["symbolize", "--schema", "a2", "--in", str(d / "sim/trace.jsonl"), "--out", str(d / "sim/symbolic.jsonl"),
         "--store", str(d / "sim/store.json")],
        ["explain", "--in", str(d / "sim/symbolic.jsonl"), "--kg", str(d / "sim/kg.json"), "--dist",
         str(d / "sim/dist.csv"), "--density", str(d / "sim/density.csv")],
        ["explain", "--in", str(d / "sim/symbolic.jsonl"), "--kg", str(d / "sim/kg.dot"), "--group", "1"],
        ["steer", "--config", cfg, "--checkpoint", str(d / "train/ckpt_6.json"), "--mode", "reward-max",
         "--out", str(d / "steer")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


def snapshot_tree(root) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_end_to_end_determinism(tmp_path, acceptance):
    work = tmp_path / "work"
    work.mkdir()
    run_pipeline(work)
    first = snapshot_tree(work)
    shutil.rmtree(work)
    work.mkdir()
    run_pipeline(work)
    second = snapshot_tree(work)
    differing = sorted(k for k in set(first) | set(second) if first.get(k) != second.get(k))
    kinds = Counter(p.rsplit(".", 1)[-1] for p in first)
    ok = not differing and len(first) > 10
    assert acceptance(9, ok, f"files={len(first)} by_type={dict(sorted(kinds.items()))} differing={differing}")
