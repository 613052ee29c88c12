"""Command-line entry point: ``tandemq {validate-sim,train,eval,sweep}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .agent import DdpgAgent, LearningCurve, train_loop
from .config import RunConfig
from .experiment import AgentPolicy, StaticPolicy, evaluate, make_agent, make_env
from .metrics import curve_series, export_csv, summarize
from .nn import CheckpointError
from .sim import ConfigError
from .tuning import lambda_sweep, select_lambda, slot_length_advisor
from .validation import run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ORACLE = 3
EXIT_RUNTIME = 4

log = logging.getLogger("tandemq")


class OracleFailure(RuntimeError):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from e


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from e


def _setting(text: str) -> tuple[list[str], object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.split("."), parsed


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--episodes", type=int, help="training episodes per run")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")
    common.add_argument("--set", dest="settings", action="append", type=_setting, default=[],
                        metavar="KEY=VALUE", help="override a config entry, e.g. qos.slot_len=15")

    p = argparse.ArgumentParser(prog="tandemq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate-sim", parents=[common], help="simulator oracle checks")
    v.add_argument("--departures", type=int, default=10**6)
    v.add_argument("--schedules", type=int, default=1000)

    t = sub.add_parser("train", parents=[common], help="train controllers, one per run seed")
    t.add_argument("--seeds", type=_int_list, help="run indices, e.g. 0,1,2,3")
    t.add_argument("--resume", action="store_true",
                   help="continue runs from the checkpoints in --out-dir")

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or fixed rates")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--checkpoint", help="agent checkpoint directory")
    g.add_argument("--static-rates", type=_float_list, help="fixed per-stage rates")
    e.add_argument("--eval-seeds", type=int, help="number of evaluation sample paths")
    e.add_argument("--horizon", type=float, help="time units per sample path")

    s = sub.add_parser("sweep", parents=[common], help="trade-off coefficient sweep")
    s.add_argument("--lambdas", type=_float_list)
    s.add_argument("--slot-lens", type=_float_list,
                   help="repeat the sweep for each slot length")
    s.add_argument("--seeds", type=_int_list)
    return p


def load_config(args) -> RunConfig:
    overrides: dict = {}
    for path, value in args.settings:
        node = overrides
        for k in path[:-1]:
            node = node.setdefault(k, {})
        node[path[-1]] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.episodes is not None:
        overrides.setdefault("training", {})["episodes"] = args.episodes
    return RunConfig.load(args.config, overrides)


def _out(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(d / "config.json")
    return d


def _echo(args, text: str) -> None:
    if not args.quiet:
        print(text)


# -- subcommands ---------------------------------------------------------------

def cmd_validate_sim(args, cfg: RunConfig) -> int:
    out = _out(cfg)
    results = run_suite(args.departures, args.schedules, cfg.seed, cfg.backend)
    (out / "validate_sim.json").write_text(json.dumps([asdict(r) for r in results], indent=2) + "\n")
    for r in results:
        _echo(args, r.line())
    if not all(r.passed for r in results):
        raise OracleFailure("simulator oracle check failed")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = _out(cfg)
    total = cfg.training.episodes
    runs = args.seeds if args.seeds is not None else list(cfg.training.seeds)
    series = []
    for i in runs:
        run_dir = out / f"run_{i}"
        run_dir.mkdir(exist_ok=True)
        ckpt = run_dir / "checkpoint"
        episodes_csv = run_dir / "episodes.csv"
        env = make_env(cfg, i)
        history = LearningCurve()
        if args.resume and (ckpt / "agent_state.json").exists():
            agent, extra = DdpgAgent.load(ckpt)
            if agent.obs_dim != cfg.network.n_stages:
                raise ConfigError("checkpoint does not match the configured number of stages")
            history = LearningCurve.from_csv(episodes_csv)
            done = int(extra.get("episodes_done", len(history)))
            history.episodes = history.episodes[:done]
            log.info("run %d: resuming after episode %d", i, done)
        else:
            agent = make_agent(cfg, i)
            done = 0

        every = cfg.training.checkpoint_every or total
        while done < total:
            n = min(every, total - done)
            part = train_loop(env, agent, n, total_episodes=total, start_episode=done,
                              on_episode=lambda s, i=i: log.info(
                                  "run %d episode %d: violation=%.4f sum_rate=%.3f reward=%.3f",
                                  i, s.episode, s.violation_prob, s.mean_sum_rate, s.mean_reward))
            history.episodes.extend(part.episodes)
            done += n
            history.to_csv(episodes_csv)
            agent.save(ckpt, extra={"episodes_done": done, "run_index": i})
        if not (ckpt / "agent_state.json").exists():
            agent.save(ckpt, extra={"episodes_done": 0, "run_index": i})
        history.to_csv(episodes_csv)
        s = curve_series(history)
        export_csv(summarize([s]), run_dir / "learning_curve.csv")
        series.append(s)
        if len(history):
            tail = history.episodes[-max(1, len(history) // 10):]
            _echo(args, f"run {i}: {len(history)} episodes, late violation "
                        f"{_nanmean([e.violation_prob for e in tail]):.4f}, "
                        f"late sum-rate {_nanmean([e.mean_sum_rate for e in tail]):.3f}")
        else:
            _echo(args, f"run {i}: 0 episodes")
    if series:
        export_csv(summarize(series), out / "learning_curve.csv")
    return EXIT_OK


def _nanmean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return sum(xs) / len(xs) if xs else math.nan


def cmd_eval(args, cfg: RunConfig) -> int:
    out = _out(cfg)
    n = cfg.network.n_stages
    if args.static_rates is not None:
        if len(args.static_rates) != n:
            raise ConfigError(f"--static-rates needs {n} values, got {len(args.static_rates)}")
        policy = StaticPolicy(args.static_rates, cfg.network)
        label = "static " + ",".join(f"{r:g}" for r in args.static_rates)
    else:
        path = args.checkpoint or cfg.checkpoint
        if path is None:
            raise ConfigError("eval needs --checkpoint or --static-rates")
        if not (Path(path) / "agent_state.json").exists():
            raise ConfigError(f"no checkpoint found in {path}")
        agent, _ = DdpgAgent.load(path, with_replay=False)
        if agent.obs_dim != n or agent.act_dim != n:
            raise ConfigError(f"checkpoint controls {agent.act_dim} stages, config has {n}")
        policy = AgentPolicy(agent)
        label = f"checkpoint {path}"

    ev = evaluate(cfg, policy, n_seeds=args.eval_seeds, horizon=args.horizon)
    for k, w in enumerate(ev.windows):
        export_csv(summarize([w.series()]), out / f"windows_seed_{k}.csv")
    export_csv(summarize([w.series() for w in ev.windows]), out / "windows.csv")
    report = {"policy": label, "pooled": asdict(ev.pooled), "per_seed": [asdict(s) for s in ev.summaries]}
    (out / "summary.json").write_text(json.dumps(report, indent=2, default=_json_float) + "\n")
    p = ev.pooled
    _echo(args, f"{label}: violation {p.violation_prob:.4f} ± {p.violation_ci:.4f}, "
                f"sum-rate {p.mean_sum_rate:.3f} ± {p.sum_rate_ci:.3f}, "
                f"reward {p.mean_reward:.3f}, arrivals {p.n_arrivals}")
    return EXIT_OK


def _json_float(x):
    return float(x)


def cmd_sweep(args, cfg: RunConfig) -> int:
    out = _out(cfg)
    lambdas = args.lambdas or list(cfg.sweep.lambdas)
    seeds = args.seeds if args.seeds is not None else list(cfg.sweep.seeds)
    slot_lens = args.slot_lens or [cfg.qos.slot_len]
    (out / "slot_length_advice.json").write_text(
        json.dumps(slot_length_advisor(cfg.qos, cfg.network), indent=2) + "\n")
    selections = {}
    for T in slot_lens:
        cell = cfg.replace(qos={"slot_len": T})
        d = out / f"T_{T:g}" if len(slot_lens) > 1 else out
        d.mkdir(parents=True, exist_ok=True)
        result = lambda_sweep(cell, lambdas, seeds, cfg.training.episodes, d / "checkpoints")
        result.to_csv(d / "sweep.csv")
        sel = select_lambda(result.by_lambda(), cell.qos.eps_ub)
        selections[f"{T:g}"] = {
            "lambda_star": sel.lambda_star,
            "constraint_met": sel.constraint_met,
            "violation_prob": sel.row.violation_prob,
            "violation_ci": sel.row.violation_ci,
            "sum_rate": sel.row.sum_rate,
        }
        for row in result.by_lambda():
            _echo(args, f"T={T:g} lambda={row.lambda_tradeoff:g}: violation "
                        f"{row.violation_prob:.4f} ± {row.violation_ci:.4f}, sum-rate {row.sum_rate:.3f}")
        note = "" if sel.constraint_met else " (constraint unmet on grid)"
        _echo(args, f"T={T:g}: selected lambda* = {sel.lambda_star:g}{note}")
    (out / "selection.json").write_text(json.dumps(selections, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {
    "validate-sim": cmd_validate_sim,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, CheckpointError) as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except OracleFailure as e:
        log.error("%s", e)
        return EXIT_ORACLE
    except Exception as e:  # noqa: BLE001
        log.exception("runtime error: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
