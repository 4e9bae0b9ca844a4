"""Command line entry point: ``laneforecast <command> [options]``.

Every command accepts ``--config`` (a ``key = value`` file), ``--seed``,
``--out`` and repeated ``--set key=value`` overrides.  Keys are matched
against the model, training and synthesis settings by name; ``profile``
selects the base model (paper, reduced or tiny).  Tabular results go to
stdout and to TSV files in ``--out``; figures are written next to them.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from ..mapgraph import MapError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import apply_overrides, parse_value, read_config
from .diagnostics import model_gradcheck
from .metrics import evaluate
from .model import LaneGCNModel, ModelConfig, predict, prepare
from .plots import plot_ablation, plot_loss_curve, plot_metrics, plot_scene
from .scenario import (
    ScenarioParseError,
    load_forecasts,
    load_scenarios,
    save_forecasts,
    save_scenarios,
)
from .synth import SynthSpec, synth_corpus
from .train import TrainConfig, TrainingDiverged, train

log = logging.getLogger("laneforecast")

PROFILES = {"paper": ModelConfig.paper, "reduced": ModelConfig.reduced, "tiny": ModelConfig.tiny}

# name -> overrides of the full model; the axes of the stage and operator ablations
ABLATIONS = {
    "full": {},
    "no_a2a": {"a2a": False},
    "no_l2a": {"l2a": False},
    "no_a2l_l2l": {"a2l": False, "l2l": False},
    "no_multi_type": {"multi_type": False},
    "no_dilation": {"dilations": (1,)},
    "no_residual": {"residual": False},
    "graphconv": {"multi_type": False, "dilations": (1,), "residual": False},
}


class UsageError(Exception):
    pass


def _settings(args) -> dict:
    values = read_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = parse_value(value)
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _model_config(values: dict, profile: str | None = None) -> ModelConfig:
    name = profile or values.get("profile", "reduced")
    if name not in PROFILES:
        raise UsageError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return apply_overrides(PROFILES[name](), values)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(path) -> LaneGCNModel:
    state, meta = load_checkpoint(path)
    model = LaneGCNModel(ModelConfig.from_dict(meta["model"]))
    model.load_state_dict(state)
    return model


def cmd_synth(args, values) -> int:
    spec = apply_overrides(SynthSpec(), values)
    if args.n is not None:
        spec = apply_overrides(spec, {"n_scenarios": args.n})
    if args.topology:
        topo = tuple(t.strip() for t in args.topology.split(","))
        spec = apply_overrides(spec, {"topology": topo[0] if len(topo) == 1 else topo})
    corpus = synth_corpus(spec)
    path = _out_dir(args) / args.name
    save_scenarios(path, corpus)
    print(f"wrote {len(corpus)} scenarios to {path}")
    return 0


def _train_config(values, n_scenes, args) -> TrainConfig:
    cfg = apply_overrides(TrainConfig(), values)
    steps = args.steps if args.steps is not None else values.get("steps")
    batch = args.batch_size or cfg.batch_size
    if steps is not None:
        keep = {k: v for k, v in values.items()
                if k in ("lr", "lr_decayed", "beta1", "beta2", "adam_eps", "seed")}
        cfg = TrainConfig.for_steps(int(steps), n_scenes, batch_size=batch, **keep)
    elif args.batch_size:
        cfg = apply_overrides(cfg, {"batch_size": batch})
    return cfg


def cmd_train(args, values) -> int:
    corpus = load_scenarios(args.data)
    mcfg = _model_config(values, args.profile)
    model = LaneGCNModel(mcfg)
    scenes = [prepare(s, mcfg) for s in corpus]
    tcfg = _train_config(values, len(scenes), args)
    out = _out_dir(args)
    t0 = time.time()
    res = train(corpus, model, tcfg, out_dir=out, prepared=scenes)
    plot_loss_curve(res.losses, out / "loss_curve.png", res.cls_losses, res.reg_losses)
    print(f"steps\t{res.steps}\nepochs\t{res.epochs}\nfinal_loss\t{res.losses[-1]:.6f}\n"
          f"seconds\t{time.time() - t0:.1f}")
    print(f"checkpoint\t{out / 'model.ckpt'}")
    return 0


def cmd_predict(args, values) -> int:
    scenarios = load_scenarios(args.data)
    model = _load_model(args.checkpoint)
    fc = predict(model, scenarios)
    path = _out_dir(args) / "forecasts.jsonl"
    save_forecasts(path, fc)
    print(f"wrote {len(fc)} forecasts to {path}")
    return 0


def cmd_eval(args, values) -> int:
    scenarios = load_scenarios(args.data)
    if args.forecasts:
        fc = load_forecasts(args.forecasts)
    elif args.checkpoint:
        fc = predict(_load_model(args.checkpoint), scenarios)
    else:
        raise UsageError("eval needs --forecasts or --checkpoint")
    ks = tuple(int(k) for k in args.k.split(","))
    report = evaluate(fc, scenarios, ks)
    out = _out_dir(args)
    (out / "metrics.tsv").write_text(report.to_tsv())
    plot_metrics(report, out / "metrics.png")
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_gradcheck(args, values) -> int:
    cfg = _model_config(values, args.profile or values.get("profile", "tiny"))
    t0 = time.time()
    report = model_gradcheck(cfg, seed=int(values.get("seed", 0)), entries=args.entries)
    print(f"max_rel_error\t{report.max_rel_error:.3e}")
    print(f"checks\t{report.checks}\nskipped_kinks\t{report.skipped}\n"
          f"seconds\t{time.time() - t0:.1f}")
    ok = report.passed(args.tol)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_ablate(args, values) -> int:
    train_set = load_scenarios(args.data)
    test_set = load_scenarios(args.test) if args.test else train_set
    names = args.variants.split(",") if args.variants else list(ABLATIONS)
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise UsageError(f"unknown variants {unknown}; choose from {list(ABLATIONS)}")
    base = _model_config(values, args.profile)
    out = _out_dir(args)
    rows = ["variant\tparams\tminADE_1\tminFDE_1\tminADE_6\tminFDE_6\tMR_6"]
    ade6, fde6 = [], []
    for name in names:
        cfg = apply_overrides(base, ABLATIONS[name])
        model = LaneGCNModel(cfg)
        scenes = [prepare(s, cfg) for s in train_set]
        tcfg = _train_config(values, len(scenes), args)
        train(train_set, model, tcfg, prepared=scenes)
        save_checkpoint(out / f"{name}.ckpt", model.state_dict(), {"model": cfg.to_dict()})
        rep = evaluate(predict(model, test_set), test_set, (1, 6))
        rows.append(f"{name}\t{model.num_parameters()}\t{rep.min_ade[1]:.6f}\t{rep.min_fde[1]:.6f}"
                    f"\t{rep.min_ade[6]:.6f}\t{rep.min_fde[6]:.6f}\t{rep.miss_rate[6]:.6f}")
        ade6.append(rep.min_ade[6])
        fde6.append(rep.min_fde[6])
        print(rows[-1], flush=True)
    (out / "ablation.tsv").write_text("\n".join(rows) + "\n")
    plot_ablation(names, ade6, fde6, out / "ablation.png")
    print(f"wrote {out / 'ablation.tsv'}")
    return 0


def cmd_plot(args, values) -> int:
    scenarios = load_scenarios(args.data)
    fc = {}
    if args.forecasts:
        fc = {f.scenario_id: f for f in load_forecasts(args.forecasts)}
    elif args.checkpoint:
        fc = {f.scenario_id: f for f in predict(_load_model(args.checkpoint), scenarios)}
    if args.ids:
        wanted = set(args.ids.split(","))
        chosen = [s for s in scenarios if s.id in wanted]
    else:
        chosen = scenarios[:args.limit]
    out = _out_dir(args)
    for s in chosen:
        path = plot_scene(s, fc.get(s.id), out / f"{s.id}.png")
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int, help="overrides the seed setting")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one setting; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="laneforecast", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scenario corpus")
    p.add_argument("--n", type=int, help="number of scenarios")
    p.add_argument("--topology", help="comma list of straight, curve, fork, merge, parallel")
    p.add_argument("--name", default="scenarios.jsonl", help="file name inside --out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model on a scenario file")
    p.add_argument("--data", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--steps", type=int, help="stop after this many updates")
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="write world-frame agent forecasts")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="minADE / minFDE / MR report")
    p.add_argument("--data", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--forecasts")
    src.add_argument("--checkpoint")
    p.add_argument("--k", default="1,6", help="comma list of K values")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the model")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--entries", type=int, default=2, help="single coordinates per tensor")
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", parents=[common], help="train and compare model variants")
    p.add_argument("--data", required=True, help="training scenarios")
    p.add_argument("--test", help="held-out scenarios (default: the training file)")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--variants", help="comma list from: " + ", ".join(ABLATIONS))
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", parents=[common], help="render scenes and forecasts to PNG")
    p.add_argument("--data", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--forecasts")
    src.add_argument("--checkpoint")
    p.add_argument("--ids", help="comma list of scenario ids")
    p.add_argument("--limit", type=int, default=4)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, _settings(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"laneforecast: error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioParseError, CheckpointError, MapError, TrainingDiverged,
            FileNotFoundError, ValueError) as exc:
        print(f"laneforecast: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
