"""Command-line entry point: simulate, train, symbolize, explain, steer, compare.

Configuration is an INI file (sections ``env``, ``agent``, ``symbolizer``,
``steering``, ``run``); command-line flags override it and ``SYMBXRL_SEED``
overrides the environment seed. Every output is written atomically and is
a pure function of config, seeds and inputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import statistics
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .core import SchemaA1, TraceError, TermSyntaxError, dump_steps, read_trace, validate_trajectory
from .explain import (
    NORMALIZATIONS,
    FrequencyTable,
    compare_distributions,
    decision_effect_density,
    deltas_csv,
    effect_distribution,
    export_kg,
    group_kg,
    project,
    term_filter,
)
from .intent import Intent, IntentError, read_intents, satisfies_all
from .playground import AgentConfig, MimoEnv, MimoEnvConfig, QAgent, moving_average, synth_trace_a1
from .experiment import relative_improvement, run_episode, train_with_store
from .steering import REASONS, SteeringConfig, run_steered_episode
from .store import ExperienceStore, StoreError, atomic_write
from .symbolizer import SymbolicTrace, SymbolizerState, symbolize_trajectory

log = logging.getLogger("symbxrl")

SEED_ENV = "SYMBXRL_SEED"


@dataclass(frozen=True)
class SymbolizerConfig:
    eps_rel: float = 0.01
    floor: float = 1e-9


@dataclass(frozen=True)
class SteerSettings:
    mode: str = "reward-max"
    start_frac: float = 0.0
    delta: float = 0.0
    max_distance: float = 1.0
    fallback: bool = True
    intents: str = ""


@dataclass(frozen=True)
class RunSettings:
    seeds: int = 10
    first_seed: int = 0
    epsilon: float = 0.05
    episodes: int = 200
    checkpoints: tuple[int, ...] = (50, 100, 200)


@dataclass(frozen=True)
class RunConfig:
    env: MimoEnvConfig = field(default_factory=MimoEnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    symbolizer: SymbolizerConfig = field(default_factory=SymbolizerConfig)
    steering: SteerSettings = field(default_factory=SteerSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        if self.run.seeds < 1:
            raise ValueError("seeds must be non-empty")

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.run.first_seed, self.run.first_seed + self.run.seeds))

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section in ("env", "agent", "symbolizer", "steering", "run"):
            cp[section] = {k: _ini_value(v) for k, v in asdict(getattr(self, section)).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        parts = {}
        for section, typ in (("env", MimoEnvConfig), ("agent", AgentConfig), ("symbolizer", SymbolizerConfig),
                             ("steering", SteerSettings), ("run", RunSettings)):
            known = {f.name: f for f in fields(typ)}
            values = {}
            if cp.has_section(section):
                for key, raw in cp[section].items():
                    if key not in known:
                        raise ValueError(f"[{section}] unknown key {key!r}")
                    values[key] = _parse_value(raw, getattr(typ(), key))
            parts[section] = typ(**values)
        return cls(**parts)


def _ini_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def _parse_value(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if default is None:
        return float(raw) if raw else None
    return raw


def load_config(path: str | None) -> RunConfig:
    if path:
        with open(path, encoding="utf-8") as f:
            cfg = RunConfig.from_ini(f.read())
    else:
        cfg = RunConfig()
    override = os.environ.get(SEED_ENV)
    if override:
        seed = int(override)
        cfg = replace(cfg, env=cfg.env.replace(seed=seed), agent=replace(cfg.agent, seed=seed))
    return cfg


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def _f(x: float) -> str:
    return repr(float(x))


# -- simulate / train ------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    if args.schema == "a1":
        traj = synth_trace_a1(cfg.env.seed, args.steps or cfg.env.horizon)
        atomic_write(out / "trace.jsonl", dump_steps(traj))
        log.info("wrote %d A1 steps", len(traj))
        return
    agent = QAgent.load(args.checkpoint, seed=cfg.env.seed) if args.checkpoint else QAgent(cfg.env.n_users, seed=cfg.env.seed)
    epsilon = cfg.run.epsilon if args.checkpoint else 1.0
    env = MimoEnv(cfg.env)
    res = run_steered_episode(env, agent, ExperienceStore(), SteeringConfig(mode="off"), args.steps or cfg.env.horizon,
                              record=False, epsilon=epsilon)
    atomic_write(out / "trace.jsonl", dump_steps(res.steps))
    log.info("wrote %d steps, cumulative reward %.3f", len(res.steps), res.cumulative_reward)


def cmd_train(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    checkpoints = tuple(int(x) for x in args.checkpoints.split(",")) if args.checkpoints else cfg.run.checkpoints
    episodes = args.episodes or max(max(checkpoints), cfg.run.episodes)
    saved, returns, snapshot = train_with_store(cfg.env, episodes, checkpoints, cfg.agent, cfg.symbolizer.eps_rel,
                                                cfg.symbolizer.floor)
    store = ExperienceStore.from_dict(snapshot)
    for ep, ckpt in sorted(saved.items()):
        atomic_write(out / f"ckpt_{ep}.json", json.dumps(ckpt, separators=(",", ":")))
    ma = moving_average(returns, 20)
    _write_csv(out / "training_curve.csv", ("episode", "return", "moving_avg20"),
               ((i + 1, _f(r), _f(m)) for i, (r, m) in enumerate(zip(returns, ma))))
    store.save(out / "store.json")
    log.info("trained %d episodes; checkpoints %s; store holds %d experiences", episodes, sorted(saved), len(store))


# -- symbolize / explain ---------------------------------------------------


def cmd_symbolize(args, cfg: RunConfig) -> None:
    schema = SchemaA1() if args.schema == "a1" else cfg.env.schema
    traj = validate_trajectory(read_trace(args.input), schema)
    store_path = Path(args.store) if args.store else None
    store = ExperienceStore.load(store_path) if store_path and store_path.exists() else ExperienceStore()
    symbolizer = SymbolizerState(schema, args.eps_rel, cfg.symbolizer.floor)
    if store.trackers:
        symbolizer.load_trackers(store.trackers)
    trace = symbolize_trajectory(traj, symbolizer)
    atomic_write(args.out, trace.dumps())
    if store_path:
        store.start_sequence()
        for step, state, action in zip(traj, trace.states, trace.actions):
            store.record(state, action, step.action, step.reward, step.t)
        store.start_sequence()
        store.trackers = symbolizer.trackers_to_dict()
        store.save(store_path)
    log.info("symbolized %d steps", len(trace))


def _group_name(trace: SymbolicTrace, group: int) -> str:
    subjects = {t.subject for s in trace.actions for t in s}
    if any(s.startswith("g") and "@" not in s for s in subjects):
        return f"g{group}"
    slices = SchemaA1().slices
    if not 0 <= group < len(slices):
        raise ValueError(f"group {group} out of range for slices {slices}")
    return slices[group]


def cmd_explain(args, cfg: RunConfig) -> None:
    with open(args.input, encoding="utf-8") as f:
        trace = SymbolicTrace.loads(f.read())
    group = _group_name(trace, args.group) if len(trace) else f"g{args.group}"
    if args.kg:
        fmt = "json" if str(args.kg).endswith(".json") else "dot"
        atomic_write(args.kg, export_kg(group_kg(trace, group), fmt))
    if args.dist:
        keep = term_filter(group=group) if args.filter_group else None
        atomic_write(args.dist, effect_distribution(trace, keep).to_csv())
    if args.density:
        dmap = decision_effect_density(trace, project(group=group), project(group=group, kpi=args.effect_kpi),
                                       args.normalize)
        atomic_write(args.density, dmap.to_csv())
        atomic_write(Path(args.density).with_suffix(".marginals.csv"), dmap.marginals_csv())
    log.info("explained %d steps for %s", len(trace), group)


# -- steer -----------------------------------------------------------------


def _violations(steps, intents: list[Intent]) -> int:
    return sum(not satisfies_all(s.action["mask"], intents, s.t) for s in steps)


def _write_run(run_dir: Path, seed: int, res, decisions: bool) -> None:
    atomic_write(run_dir / f"seed_{seed}.trace.jsonl", dump_steps(res.steps))
    atomic_write(run_dir / f"seed_{seed}.symbolic.jsonl", res.symbolic_trace().dumps())
    if decisions:
        atomic_write(run_dir / f"seed_{seed}.decisions.jsonl", res.decision_log())


def cmd_steer(args, cfg: RunConfig) -> None:
    s = cfg.steering
    mode = args.mode or s.mode
    intent_path = args.intent or s.intents
    intents = read_intents(intent_path, cfg.env.schema) if intent_path else []
    sconf = SteeringConfig(mode=mode, start_frac=s.start_frac if args.start_frac is None else args.start_frac,
                           delta=s.delta if args.delta is None else args.delta, max_distance=s.max_distance,
                           fallback=s.fallback, intents=tuple(intents))
    seeds = list(range(cfg.run.first_seed, cfg.run.first_seed + args.seeds)) if args.seeds else cfg.seed_list
    with open(args.checkpoint, encoding="utf-8") as f:
        ckpt = json.load(f)
    store_path = Path(args.store) if args.store else Path(args.checkpoint).with_name("store.json")
    if store_path.exists():
        snapshot = ExperienceStore.load(store_path).to_dict()
    elif mode == "accel":
        snapshot = None
    else:
        raise FileNotFoundError(f"knowledge store {store_path} not found (train writes one next to the checkpoints)")
    out = Path(args.out)
    rows = []
    for seed in seeds:
        results = {}
        arms = [("baseline", SteeringConfig(mode="off")), (mode, sconf)]
        if mode == "condition":
            arms.append(("force", SteeringConfig(mode="force", start_frac=sconf.start_frac, intents=sconf.intents)))
        for name, conf in arms:
            res = run_episode(cfg.env, ckpt, conf, seed, snapshot, epsilon=cfg.run.epsilon,
                              eps_rel=cfg.symbolizer.eps_rel, floor=cfg.symbolizer.floor)
            _write_run(out / name, seed, res, decisions=conf.mode != "off")
            results[name] = res
        base, steered = results["baseline"], results[mode]
        rel = relative_improvement(steered.cumulative_reward, base.cumulative_reward)
        counts = steered.reason_counts()
        row = [seed, _f(base.cumulative_reward), _f(steered.cumulative_reward), _f(rel)]
        row += [counts[r] for r in REASONS] + [sum(steered.replacements().values())]
        row.append(_violations(steered.steps, intents))
        if mode == "condition":
            row += [_f(results["force"].cumulative_reward), _violations(results["force"].steps, intents)]
        rows.append(row)
        log.info("seed %d: baseline %.2f, %s %.2f (%+.3f%%)", seed, base.cumulative_reward, mode,
                 steered.cumulative_reward, 100 * rel)
    header = ["seed", "cum_baseline", "cum_steered", "rel_improvement"] + [f"n_{r}" for r in REASONS] + ["n_replaced", "violations"]
    if mode == "condition":
        header += ["cum_force", "violations_force"]
    median = statistics.median(float(r[3]) for r in rows)
    footer = ["median", _f(statistics.median(float(r[1]) for r in rows)),
              _f(statistics.median(float(r[2]) for r in rows)), _f(median)] + [""] * (len(header) - 4)
    if mode == "condition":
        footer[-2] = _f(statistics.median(float(r[-2]) for r in rows))
    _write_csv(out / "summary.csv", header, rows + [footer])
    log.info("median relative improvement %+.4f%%", 100 * median)


# -- compare ---------------------------------------------------------------


def _seed_files(run: Path, suffix: str) -> dict[int, Path]:
    out = {}
    for p in run.glob(f"seed_*.{suffix}"):
        out[int(p.name.split(".")[0][5:])] = p
    return out


def cmd_compare(args, cfg: RunConfig) -> None:
    a, b, out = Path(args.run_a), Path(args.run_b), Path(args.out)
    sym_a, sym_b = _seed_files(a, "symbolic.jsonl"), _seed_files(b, "symbolic.jsonl")
    seeds = sorted(set(sym_a) & set(sym_b))
    if not seeds:
        raise FileNotFoundError(f"no common seeds between {a} and {b}")

    def action_table(files) -> FrequencyTable:
        keys = []
        for seed in seeds:
            with open(files[seed], encoding="utf-8") as f:
                for rec in map(json.loads, f.read().splitlines()):
                    keys.extend(rec["action_terms"])
        return FrequencyTable.from_keys(keys)

    atomic_write(out / "action_deltas.csv", deltas_csv(compare_distributions(action_table(sym_a), action_table(sym_b))))
    tr_a, tr_b = _seed_files(a, "trace.jsonl"), _seed_files(b, "trace.jsonl")
    rows = []
    for seed in seeds:
        ra = [st.reward for st in read_trace(tr_a[seed])]
        rb = [st.reward for st in read_trace(tr_b[seed])]
        ca = cb = 0.0
        for t, (x, y) in enumerate(zip(ra, rb)):
            ca += x
            cb += y
            rows.append((seed, t, _f(ca), _f(cb), _f((cb - ca) / abs(ca) if ca else 0.0)))
    _write_csv(out / "relative_reward.csv", ("seed", "t", "cum_a", "cum_b", "rel"), rows)
    log.info("compared %d seeds", len(seeds))


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symbxrl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.add_argument("--config", help="INI config file")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("simulate", cmd_simulate, help="write a raw trace")
    sp.add_argument("--out", required=True)
    sp.add_argument("--schema", choices=("a1", "a2"), default="a2")
    sp.add_argument("--checkpoint", help="agent checkpoint; a random policy is used without one")
    sp.add_argument("--steps", type=int)

    sp = add("train", cmd_train, help="train the playground agent")
    sp.add_argument("--out", default=".")
    sp.add_argument("--checkpoints", help="comma-separated episode counts, e.g. 50,100,200")
    sp.add_argument("--episodes", type=int)

    sp = add("symbolize", cmd_symbolize, help="raw trace to symbolic trace")
    sp.add_argument("--schema", choices=("a1", "a2"), required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--store", help="experience store to update (created if missing)")
    sp.add_argument("--eps-rel", type=float, default=0.01)

    sp = add("explain", cmd_explain, help="distributions, density maps and KG exports")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--kg", help="KG output (.dot or .json)")
    sp.add_argument("--dist", help="effect distribution CSV")
    sp.add_argument("--density", help="decision/effect density CSV")
    sp.add_argument("--normalize", choices=NORMALIZATIONS, default="joint")
    sp.add_argument("--group", type=int, default=0, help="group (A2) or slice index (A1)")
    sp.add_argument("--filter-group", action="store_true", help="restrict the effect distribution to the group")
    sp.add_argument("--effect-kpi", help="restrict density effects to one KPI, e.g. DTU")

    sp = add("steer", cmd_steer, help="steered vs unsteered episodes over several seeds")
    sp.add_argument("--mode", choices=("reward-max", "condition", "accel"))
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--store", help="knowledge store (default: store.json next to the checkpoint)")
    sp.add_argument("--intent", help="intent file")
    sp.add_argument("--start-frac", type=float)
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--out", required=True)

    sp = add("compare", cmd_compare, help="delta tables between two runs")
    sp.add_argument("run_a")
    sp.add_argument("run_b")
    sp.add_argument("--out", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        args.fn(args, cfg)
    except (OSError, ValueError, TraceError, TermSyntaxError, IntentError, StoreError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
