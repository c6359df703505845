"""Command-line driver.

Subcommands: train, eval, sweep, solve, demo-instability, audit. Exit codes:
0 success, 2 configuration error, 3 runtime failure, 4 audit failure.

A run directory holds ``config.json`` (the resolved configuration),
``manifest.json`` (config hash, code version, last episode),
``checkpoints/`` (binary designs per checkpoint plus a resumable trainer
state), ``train.csv``, ``potential.csv`` and a ``DONE`` marker once finished.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import pickle
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .envs import SyntheticLinearMG, parse_payoff_file
from .evaluation import full_report, outcome_fractions, self_play
from .linear_fa import read_designs, write_designs
from .ovi import TrainedAgents, Trainer, TrainHooks, optimism_audit
from .stability import format_table, nash_instability_demo
from .stage_solver import Method, SolverConfig, StagePayoff, rqre_solve

log = logging.getLogger("rqre")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_AUDIT = 0, 2, 3, 4
OPTIMISM_THRESHOLD = 0.95
SUMMARY_COLUMNS = [
    "tau",
    "epsilon",
    "episodes",
    "final_team_return_ma100",
    "eval_team_return",
    "eval_stderr",
    "fraction_stag_stag",
    "fraction_hare_hare",
    "fraction_mixed",
]


class AuditFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _atomic_write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _load_run_config(run_dir: Path) -> RunConfig:
    path = run_dir / "config.json"
    if not path.exists():
        raise FileNotFoundError(f"{run_dir}: not a run directory (no config.json)")
    return RunConfig.model_validate_json(path.read_text(encoding="utf-8"))


def _checkpoints(run_dir: Path) -> list[Path]:
    return sorted((run_dir / "checkpoints").glob("ep*.bin"), key=lambda p: int(p.stem[2:]))


def _latest_checkpoint(run_dir: Path) -> Path | None:
    found = _checkpoints(run_dir)
    return found[-1] if found else None


def agents_from_checkpoint(path: Path, cfg: RunConfig, env) -> TrainedAgents:
    designs, weights, _ = read_designs(path)
    if len(designs) != env.spec.horizon or designs[0].d != env.spec.d:
        raise ValueError(f"{path}: checkpoint does not match the configured environment")
    tcfg = cfg.train_config(env)
    return TrainedAgents(
        designs,
        weights,
        tcfg.solver,
        tcfg.hyper,
        env.joint_features,
        tuple(env.spec.action_counts),
        tcfg.reward_scale,
        tcfg.env_risk,
        env.feature_parts,
        [d.count > 0 for d in designs],
    )


# ---------------------------------------------------------------------------
# train


def run_train(cfg: RunConfig, force: bool = False, quiet: bool = False) -> Path:
    """Train into ``cfg.output_dir``; resumes from the last trainer state, skips when done."""
    out = Path(cfg.output_dir)
    if (out / "DONE").exists() and not force:
        if not quiet:
            print(f"{out}: already complete (use --force to rerun)")
        return out
    if force and out.exists():
        for name in ("DONE", "train.csv", "potential.csv", "manifest.json"):
            (out / name).unlink(missing_ok=True)
        for p in (out / "checkpoints").glob("*"):
            p.unlink()
    out.mkdir(parents=True, exist_ok=True)
    env = cfg.build_env()
    tcfg = cfg.train_config(env)
    digest = cfg.digest()
    _atomic_write(out / "config.json", cfg.canonical() + "\n")
    ckpt_dir = out / "checkpoints"

    def manifest(episode: int, complete: bool):
        data = {
            "config_hash": digest,
            "code_version": __version__,
            "episode": episode,
            "complete": complete,
            "checkpoints": [p.name for p in _checkpoints(out)],
        }
        _atomic_write(out / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")

    def on_checkpoint(trainer: Trainer, episode: int):
        write_designs(ckpt_dir / f"ep{episode}.bin", trainer.agents.designs, episode)
        _atomic_write(ckpt_dir / "state.pkl", pickle.dumps(trainer))
        _atomic_write(out / "train.csv", "\n".join(trainer.log.csv_lines()) + "\n")
        manifest(episode, False)
        if not quiet:
            print(f"episode {episode}: team return (MA100) {trainer.log.rows[-1][2]:.3f}", flush=True)

    hooks = TrainHooks(on_checkpoint=on_checkpoint, strict=False)
    state = ckpt_dir / "state.pkl"
    trainer = None
    if state.exists():
        resumed = pickle.loads(state.read_bytes())
        if getattr(resumed, "cfg", None) == tcfg:
            trainer = resumed
            trainer.hooks = hooks
            if not quiet:
                print(f"{out}: resuming at episode {trainer.episode}")
    if trainer is None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        trainer = Trainer(env, tcfg, hooks)
    agents, train_log = trainer.run()
    write_designs(ckpt_dir / f"ep{trainer.episode}.bin", agents.designs, trainer.episode)
    _atomic_write(out / "train.csv", "\n".join(train_log.csv_lines()) + "\n")
    rows = [[h + 1, a.cumulative, a.bound, a.steps, int(a.passed)] for h, a in enumerate(train_log.potential)]
    _atomic_write(out / "potential.csv", _csv_text(["stage", "cumulative", "bound", "steps", "passed"], rows))
    state.unlink(missing_ok=True)
    manifest(trainer.episode, True)
    _atomic_write(out / "DONE", "")
    if not quiet:
        print(f"{out}: trained {trainer.episode} episodes; final team return (MA100) {train_log.rows[-1][2]:.3f}")
    return out


# ---------------------------------------------------------------------------
# eval


def run_eval(cfg: RunConfig, checkpoint: Path, partner: Path | None = None, out: Path | None = None) -> Path:
    env = cfg.build_env()
    ckpt = checkpoint
    if ckpt.is_dir():
        ckpt = _latest_checkpoint(ckpt)
        if ckpt is None:
            raise FileNotFoundError(f"{checkpoint}: no checkpoints found")
    agents = agents_from_checkpoint(ckpt, cfg, env)
    mate = agents_from_checkpoint(partner, cfg, env) if partner else None
    report = full_report(agents, env, cfg.eval_config(), partner=mate)
    dest = out or Path(cfg.output_dir) / "eval.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(dest)
    print(f"wrote {dest}")
    for rec in report.records:
        if rec["metric"] in ("team_return", "retention") or rec["metric"].startswith("fraction"):
            print(f"{rec['condition']:>18} {str(rec['delta']):>5} {rec['metric']:>20} {_fmt(rec['value'])}")
    return dest


# ---------------------------------------------------------------------------
# sweep


def _cell_name(tau: float, eps: float) -> str:
    return f"tau{tau!r}_eps{eps!r}"


def _run_cell(cfg_json: str) -> dict:
    cfg = RunConfig.model_validate_json(cfg_json)
    out = Path(cfg.output_dir)
    result_path = out / "result.json"
    if (out / "DONE").exists() and result_path.exists():
        return json.loads(result_path.read_text())
    run_train(cfg, quiet=True)
    env = cfg.build_env()
    agents = agents_from_checkpoint(_latest_checkpoint(out), cfg, env)
    ecfg = cfg.eval_config()
    sp = self_play(agents, env, ecfg)
    fr = None
    if env.name in ("grid_stag_hunt", "stag_hunt"):
        fr = outcome_fractions(agents, env, ecfg)
    with open(out / "train.csv", encoding="utf-8") as fh:
        last = list(csv.DictReader(fh))[-1]
    result = {
        "tau": cfg.solver.tau,
        "epsilon": cfg.solver.epsilon,
        "episodes": cfg.train.episodes,
        "final_team_return_ma100": float(last["team_return_ma100"]),
        "eval_team_return": sp["mean"],
        "eval_stderr": sp["stderr"],
        "fraction_stag_stag": None if fr is None else fr[0],
        "fraction_hare_hare": None if fr is None else fr[1],
        "fraction_mixed": None if fr is None else fr[2],
    }
    _atomic_write(result_path, json.dumps(result, sort_keys=True) + "\n")
    return result


def run_sweep(cfg: RunConfig, workers: int = 1) -> Path:
    if cfg.sweep is None:
        raise ConfigError("sweep: the config has no [sweep] table")
    root = Path(cfg.output_dir)
    cells = [
        cfg.with_cell(tau, eps, str(root / _cell_name(tau, eps))).canonical()
        for tau, eps in itertools.product(cfg.sweep.tau, cfg.sweep.epsilon)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = []
        for k, cell in enumerate(cells, 1):
            results.append(_run_cell(cell))
            print(f"cell {k}/{len(cells)} done", flush=True)
    rows = [[r[c] for c in SUMMARY_COLUMNS] for r in results]
    _atomic_write(root / "summary.csv", _csv_text(SUMMARY_COLUMNS, rows))
    print(f"wrote {root / 'summary.csv'} ({len(rows)} rows)")
    return root / "summary.csv"


# ---------------------------------------------------------------------------
# solve, demo, audit


def run_solve(path: Path, eps: float, tau: float, method: str, tol: float, max_iters: int, stream=None) -> None:
    stream = stream or sys.stdout
    payoff: StagePayoff = parse_payoff_file(path)
    cfg = SolverConfig(epsilon=eps, tau=tau, method=Method(method), tol=tol, max_iters=max_iters)
    profile, diag = rqre_solve(payoff, cfg)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["kind", "player", "index", "value"])
    for i, dist in enumerate(profile):
        for a, p in enumerate(dist):
            writer.writerow(["profile", i, a, repr(float(p))])
    for i, g in enumerate(diag.exploitability):
        writer.writerow(["exploitability", i, "", repr(float(g))])
    for t, r in enumerate(diag.trace, 1):
        writer.writerow(["trace", "", t, repr(float(r))])
    if not diag.certified:
        log.warning("solve not certified: exploitability %.3e above tol %.1e", diag.max_exploitability, tol)


def run_demo_instability(stream=None) -> None:
    stream = stream or sys.stdout
    print(format_table(nash_instability_demo([0.1, 0.01, 0.001])), file=stream)


def run_audit(run_dir: Path, probes: int = 1000) -> list[str]:
    """Design validity, elliptical potential and (synthetic only) optimism; returns report lines.

    Raises ``AuditFailure`` listing every failed check.
    """
    if not run_dir.is_dir() or not any(run_dir.iterdir()):
        raise FileNotFoundError(f"{run_dir}: empty or missing run directory")
    cfg = _load_run_config(run_dir)
    ckpt = _latest_checkpoint(run_dir)
    if ckpt is None:
        raise FileNotFoundError(f"{run_dir}: no checkpoints")
    lines, failures = [], []
    try:
        designs, weights, _ = read_designs(ckpt)
    except ValueError as exc:
        raise AuditFailure(str(exc)) from None
    for h, design in enumerate(designs):
        for problem in design.check():
            failures.append(f"design stage {h + 1}: {problem}")
    lines.append(f"designs ({ckpt.name}): {'FAIL' if failures else 'PASS'}")
    pot = run_dir / "potential.csv"
    if pot.exists():
        with open(pot, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        bad = [r for r in rows if float(r["cumulative"]) > float(r["bound"])]
        for r in bad:
            failures.append(f"elliptical potential stage {r['stage']}: {r['cumulative']} > {r['bound']}")
        worst = max(float(r["cumulative"]) / float(r["bound"]) for r in rows)
        lines.append(f"elliptical potential: {'FAIL' if bad else 'PASS'} (max cumulative/bound {worst:.3f})")
    else:
        failures.append("elliptical potential: potential.csv missing (run incomplete)")
    env = cfg.build_env()
    if isinstance(env, SyntheticLinearMG) and not failures:
        agents = agents_from_checkpoint(ckpt, cfg, env)
        frac = optimism_audit(agents, env, probes=probes, seed=cfg.seed)
        ok = frac >= OPTIMISM_THRESHOLD
        lines.append(f"optimism: {'PASS' if ok else 'FAIL'} (fraction {frac:.3f}, threshold {OPTIMISM_THRESHOLD})")
        if not ok:
            failures.append(f"optimism fraction {frac:.3f} below {OPTIMISM_THRESHOLD}")
    if failures:
        raise AuditFailure("\n".join(lines + failures))
    return lines


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rqre", description="Risk-sensitive QRE learning via optimistic value iteration.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train agents from a config file")
    p.add_argument("config", type=Path)
    p.add_argument("--force", action="store_true", help="discard a finished or partial run and start over")
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("config", type=Path)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint file or run directory")
    p.add_argument("--partner", type=Path, help="checkpoint of the perturbed partner (default: self)")
    p.add_argument("--out", type=Path)
    p = sub.add_parser("sweep", help="train every (tau, epsilon) cell of the [sweep] axes")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("solve", help="solve a stage game from a payoff file")
    p.add_argument("payoff_file", type=Path)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--method", choices=[m.value for m in Method], default=Method.FIXED_POINT.value)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1000)
    sub.add_parser("demo-instability", help="print the Nash-versus-RQRE stability table")
    p = sub.add_parser("audit", help="audit a finished run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--probes", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            run_train(load_config(args.config), force=args.force)
        elif args.command == "eval":
            run_eval(load_config(args.config), args.checkpoint, args.partner, args.out)
        elif args.command == "sweep":
            run_sweep(load_config(args.config), workers=args.workers)
        elif args.command == "solve":
            run_solve(args.payoff_file, args.eps, args.tau, args.method, args.tol, args.max_iters)
        elif args.command == "demo-instability":
            run_demo_instability()
        elif args.command == "audit":
            for line in run_audit(args.run_dir, args.probes):
                print(line)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuditFailure as exc:
        print(f"audit failed:\n{exc}", file=sys.stderr)
        return EXIT_AUDIT
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
