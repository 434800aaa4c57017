"""Command-line driver for reproducible downscaling runs.

Subcommands: gen-data, train, evaluate, compare-backends, diagnostics.
Every invocation resolves its configuration (defaults <- --config JSON <-
dotted-key overrides such as ``--train.steps 200``) and writes it, together
with the command's own arguments, to ``resolved_config.json`` in the output
directory, so any run can be replayed with ``--config`` on that file.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from .config import load_config, save_config
from .corrdiff import make_schedule
from .data import FieldSpec, build_dataset, default_ood_spec, read_dataset, write_dataset
from .errors import ConfigurationError, NumericError
from .evaluate import (
    compare_backends_run,
    comparison_table,
    diagnostics_run,
    evaluate_model,
    write_eval_outputs,
)
from .qsim import NoiseParams
from .train import load_model, train_stage


def _parser():
    parser = argparse.ArgumentParser(
        prog="qdscale",
        description="Hybrid quantum-classical corrective diffusion downscaling of "
                    "synthetic wind fields.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (e.g. a resolved_config.json)")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    common(p)
    p.add_argument("--out", help="dataset directory to create")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-val", type=int, dest="n_val")
    p.add_argument("--n-ood", type=int, dest="n_ood")

    p = sub.add_parser("train", help="train one stage")
    common(p)
    p.add_argument("--stage", choices=["regression", "diffusion"])
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="run directory")
    p.add_argument("--regression", help="regression run directory (diffusion stage)")

    p = sub.add_parser("evaluate", help="score trained models on a split")
    common(p)
    p.add_argument("--run", action="append", help="diffusion run directory (repeatable)")
    p.add_argument("--data")
    p.add_argument("--split", choices=["val", "ood"], default="val")
    p.add_argument("--members", type=int)
    p.add_argument("--times", type=int, help="evaluate this many evenly spaced timesteps")

    p = sub.add_parser("compare-backends", help="exact vs noisy quantum inference")
    common(p)
    p.add_argument("--run", help="hybrid diffusion run directory")
    p.add_argument("--data")
    p.add_argument("--split", choices=["val", "ood"], default="val")
    p.add_argument("--p-dep", type=float, dest="p_dep")
    p.add_argument("--p-ro", type=float, dest="p_ro")
    p.add_argument("--shots", type=int)
    p.add_argument("--times", type=int, help="timesteps to compare (default 20)")
    p.add_argument("--members", type=int, help="ensemble members per timestep (default 16)")
    p.add_argument("--out", help="output directory (default <run>/compare_backends)")

    p = sub.add_parser("diagnostics", help="structural diagnostics from saved ensembles")
    common(p)
    p.add_argument("--run", action="append", help="evaluated run directory (repeatable)")
    p.add_argument("--data")
    p.add_argument("--split", choices=["val", "ood"], default="val")
    p.add_argument("--out", help="output directory (default <first run>/diagnostics_<split>)")
    return parser


def _require(value, flag):
    if value is None:
        raise ConfigurationError("missing required option %s" % flag)
    return value


def _run_value(args, cfg, attr, key=None):
    """CLI flag if given, else the value stored under cfg['run']."""
    explicit = getattr(args, attr, None)
    if explicit is not None:
        return explicit
    return cfg["run"].get(key or attr)


def _stamp(command):
    return Path("runs") / ("%s-%s" % (command, time.strftime("%Y%m%d-%H%M%S")))


def _write_resolved(cfg, run_block, outdir):
    cfg = dict(cfg)
    cfg["run"] = run_block
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "resolved_config.json")


def _load_dataset(args, cfg):
    data = _require(_run_value(args, cfg, "data"), "--data")
    return read_dataset(data), str(Path(data).resolve())


def _cmd_gen_data(args, cfg):
    out = _require(_run_value(args, cfg, "out"), "--out")
    d = cfg["data"]
    for key in ("n_train", "n_val", "n_ood"):
        override = getattr(args, key)
        if override is not None:
            d[key] = override
    id_spec = FieldSpec(size=d["size"], gamma=d["gamma"], sigma=d["sigma"],
                        mean_u=d["mean_u"], mean_v=d["mean_v"], rho=d["rho"],
                        seed=cfg["seed"])
    ood_spec = default_ood_spec(id_spec, gamma=d["ood_gamma"],
                                mean_shift=d["ood_mean_shift"])
    ds = build_dataset(id_spec, d["n_train"], d["n_val"], d["n_ood"], ood_spec=ood_spec)
    write_dataset(ds, out)
    _write_resolved(cfg, {"command": "gen-data", "out": str(Path(out).resolve())}, out)
    print("wrote %d/%d/%d samples to %s"
          % (d["n_train"], d["n_val"], d["n_ood"], out))
    return 0


def _cmd_train(args, cfg):
    stage = _require(_run_value(args, cfg, "stage"), "--stage")
    dataset, data_dir = _load_dataset(args, cfg)
    out = _run_value(args, cfg, "out") or str(_stamp("train-" + stage))
    run_block = {"command": "train", "stage": stage, "data": data_dir,
                 "out": str(Path(out).resolve())}
    regression = None
    if stage == "diffusion":
        reg_dir = _run_value(args, cfg, "regression")
        if reg_dir is None:
            raise ConfigurationError(
                "the diffusion stage needs --regression pointing at a trained "
                "regression run"
            )
        regression = load_model(reg_dir, cfg, "regression")
        run_block["regression"] = str(Path(reg_dir).resolve())
    _write_resolved(cfg, run_block, out)
    train_stage(cfg, dataset, out, stage, regression=regression)
    print("checkpoint in %s" % out)
    return 0


def _load_diffusion_run(run_dir):
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "resolved_config.json")
    if cfg["run"].get("stage") != "diffusion":
        raise ConfigurationError("%s is not a diffusion training run" % run_dir)
    diffusion = load_model(run_dir, cfg, "diffusion")
    regression = load_model(cfg["run"]["regression"], cfg, "regression")
    sched = make_schedule(cfg["diffusion"]["T"], cfg["diffusion"]["schedule"])
    return cfg, regression, diffusion, sched


def _cmd_evaluate(args, cfg):
    runs = _run_value(args, cfg, "run", key="runs")
    if not runs:
        raise ConfigurationError("missing required option --run")
    if len(runs) > 2:
        raise ConfigurationError("evaluate compares at most two runs")
    dataset, data_dir = _load_dataset(args, cfg)
    split = _run_value(args, cfg, "split") or "val"
    members = _run_value(args, cfg, "members")
    if members is None:
        members = cfg["eval"]["members"]
    times = _run_value(args, cfg, "times")
    reports = []
    for run in runs:
        _, regression, diffusion, sched = _load_diffusion_run(run)
        report, ensembles, regressions, ids = evaluate_model(
            regression, diffusion, dataset, split, members, sched, seed=cfg["seed"],
            times=times, model_name=Path(run).name,
            log=lambda msg: print(msg, file=sys.stderr),
        )
        eval_dir = Path(run) / ("eval_%s" % split)
        write_eval_outputs(eval_dir, report, ensembles, regressions, ids,
                           extra_meta={"seed": cfg["seed"]})
        _write_resolved(
            cfg,
            {"command": "evaluate", "runs": [str(Path(r).resolve()) for r in runs],
             "data": data_dir, "split": split, "members": members, "times": times},
            eval_dir,
        )
        for line in report.summary_lines():
            print(line)
        reports.append(report)
    if len(reports) == 2:
        lines, wins = comparison_table(reports[0], reports[1])
        for line in lines:
            print(line)
        with open(Path(runs[1]) / ("eval_%s" % split) /
                  ("wins_vs_%s.json" % Path(runs[0]).name), "w") as fh:
            json.dump(wins, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_compare_backends(args, cfg):
    run = _require(_run_value(args, cfg, "run"), "--run")
    dataset, data_dir = _load_dataset(args, cfg)
    run_cfg, regression, diffusion, sched = _load_diffusion_run(run)
    if not run_cfg["hybrid"]["enabled"]:
        raise ConfigurationError(
            "%s trained a classical model: no quantum layer to perturb" % run
        )
    noise_cfg = dict(cfg["noise"])
    for attr, key in (("p_dep", "p_dep"), ("p_ro", "p_ro"), ("shots", "shots")):
        val = _run_value(args, cfg, attr, key=attr)
        if val is not None:
            noise_cfg[key] = val
    noise = NoiseParams(p_dep=noise_cfg["p_dep"], p_ro=noise_cfg["p_ro"],
                        shots=noise_cfg["shots"], seed=noise_cfg["seed"])
    split = _run_value(args, cfg, "split") or "val"
    times = _run_value(args, cfg, "times")
    times = 20 if times is None else times
    members = _run_value(args, cfg, "members")
    members = 16 if members is None else members
    out = _run_value(args, cfg, "out") or str(Path(run) / "compare_backends")
    rows, summary = compare_backends_run(
        regression, diffusion, dataset, sched, noise, out,
        split=split, times=times, members=members, seed=cfg["seed"],
        log=lambda msg: print(msg, file=sys.stderr),
    )
    _write_resolved(
        cfg,
        {"command": "compare-backends", "run": str(Path(run).resolve()),
         "data": data_dir, "split": split, "times": times,
         "members": members, "out": str(Path(out).resolve())},
        out,
    )
    print("max |delta| = %g over %d rows (p_dep=%g, p_ro=%g, shots=%d)"
          % (summary["max_abs_delta"], len(rows), noise.p_dep, noise.p_ro, noise.shots))
    return 0


def _cmd_diagnostics(args, cfg):
    runs = _run_value(args, cfg, "run", key="runs")
    if not runs:
        raise ConfigurationError("missing required option --run")
    dataset, data_dir = _load_dataset(args, cfg)
    split = _run_value(args, cfg, "split") or "val"
    out = _run_value(args, cfg, "out") or str(Path(runs[0]) / ("diagnostics_%s" % split))
    entries = [(Path(r).name, Path(r) / ("eval_%s" % split)) for r in runs]
    info = diagnostics_run(entries, dataset, split, out,
                           neighborhoods=cfg["eval"]["fss_neighborhoods"])
    _write_resolved(
        cfg,
        {"command": "diagnostics", "runs": [str(Path(r).resolve()) for r in runs],
         "data": data_dir, "split": split, "out": str(Path(out).resolve())},
        out,
    )
    print("diagnostics for %s written to %s (p99 threshold %.3f)"
          % (", ".join(info["sources"]), out, info["threshold"]))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare-backends": _cmd_compare_backends,
    "diagnostics": _cmd_diagnostics,
}


def main(argv=None):
    parser = _parser()
    args, leftover = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, override_tokens=leftover)
        return _COMMANDS[args.command](args, cfg)
    except ConfigurationError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except NumericError as exc:
        print("numeric error: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
