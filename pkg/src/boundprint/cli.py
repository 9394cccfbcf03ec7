"""Command-line entry point: ``boundprint <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 input or format problem, 4 numeric failure.
Each subcommand echoes its resolved configuration to stderr as one JSON line
(suppressed with ``-q``) and prints a short summary or JSON result to stdout.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .data import SyntheticSpec, emit_csv, generate, load_csv, split, write_manifest
from .errors import BoundprintError, InputError, StageError
from .experiment import (BUNDLED_CONFIGS, EvalReport, RunResult, emit_report, load_config,
                         score_fingerprint, with_overrides)
from .fingerprint import METHODS, CWConfig, ExtractConfig, extract, load_fingerprint, save_fingerprint
from .modelio import digest, load_model, save_model
from .nn import ARCHITECTURES, TrainConfig, accuracy, make_network, train
from .parallel import default_threads
from .suspects import SuiteConfig, build_suspect_suite, load_suite, save_suite
from .verify import SubprocessOracle, serve, verify


class UsageError(Exception):
    pass


def _existing(path, what):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {path}")
    return p


def _output(path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _echo(args, payload):
    if not args.quiet:
        print(json.dumps({"command": args.command, **payload}, sort_keys=True, default=str),
              file=sys.stderr)


def _threads(args):
    return default_threads() if args.threads is None else max(1, args.threads)


def _load_data(args):
    return load_csv(_existing(args.data, "data file"), header=args.header,
                    rescale=not args.no_rescale)


def _parse_method(method, init, label):
    """``ipguard-TL`` style names carry their own strategy suffix."""
    name, _, suffix = method.partition("-")
    name = name.lower()
    if name not in METHODS:
        raise UsageError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    if suffix:
        suffix = suffix.upper()
        if len(suffix) != 2 or suffix[0] not in "TR" or suffix[1] not in "RL":
            raise UsageError(f"bad strategy suffix -{suffix}; use -TR, -TL, -RR or -RL")
        if (init and init != suffix[0]) or (label and label != suffix[1]):
            raise UsageError("strategy suffix conflicts with --init/--label")
        init, label = suffix[0], suffix[1]
    return name, init or "T", label or "L"


def cmd_data(args):
    spec = SyntheticSpec(kind=args.kind, n_per_class=args.n_per_class, c=args.classes,
                         noise_sigma=args.noise, d=args.dim, seed=args.seed)
    _echo(args, {"spec": vars(spec), "out": args.out})
    data = generate(spec)
    out = _output(args.out)
    emit_csv(data, out, header=args.header)
    write_manifest(spec, data, out.with_suffix(".manifest.json"))
    print(f"wrote {len(data)} points (d={data.d}, c={data.c}) to {out}")
    return 0


def cmd_train(args):
    data = _load_data(args)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                      seed=args.seed, l2_penalty=args.l2)
    _echo(args, {"data": args.data, "arch": args.arch, "train": vars(cfg), "out": args.out})
    net = make_network(args.arch, data.d, data.c, args.seed)
    net = train(net, data, cfg)
    save_model(net, _output(args.out))
    print(f"trained {args.arch} to train accuracy {accuracy(net, data):.4f}; "
          f"saved {args.out} ({digest(net)[:12]})")
    return 0


def cmd_suite(args):
    target = load_model(_existing(args.target, "target model"))
    data = _load_data(args)
    train_data, test_data = split(data, args.split, args.seed)
    suite_cfg = SuiteConfig(n_same_arch=args.n_same_arch, n_diff_arch=args.n_diff_arch,
                            n_forests=args.n_forests, finetune_lr=args.finetune_lr,
                            include_ladders=not args.no_ladders, seed=args.seed)
    tcfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       seed=args.seed)
    _echo(args, {"target": args.target, "data": args.data, "split": args.split,
                 "suite": vars(suite_cfg), "train": vars(tcfg), "out": args.out})
    suite = build_suspect_suite(target, train_data, test_data, suite_cfg, tcfg, _threads(args))
    manifest = save_suite(suite, args.out, target)
    print(f"{len(suite.positives)} positive and {len(suite.negatives)} negative suspects; "
          f"manifest {manifest}")
    return 0


def _extract_config(args, init, label):
    return ExtractConfig(
        n=args.n, k=args.k, epsilon=args.epsilon, alpha=args.alpha, lr=args.lr,
        max_iters=args.max_iters, init_strategy=init, label_strategy=label, seed=args.seed,
        cw=CWConfig(binary_search_steps=args.cw_steps, c_init=args.cw_c, inner_iters=args.cw_iters),
        polish=args.polish,
    )


def cmd_extract(args):
    method, init, label = _parse_method(args.method, args.init, args.label)
    target = load_model(_existing(args.target, "target model"))
    if args.data is None and method != "random" and init == "T":
        raise UsageError(f"--data is required for {method} with training-data starts (init T)")
    data = _load_data(args) if args.data is not None else None
    cfg = _extract_config(args, init, label)
    _echo(args, {"method": method, "target": args.target, "data": args.data,
                 "extract": {k: v for k, v in vars(cfg).items() if k != "cw"},
                 "cw": vars(cfg.cw), "threads": _threads(args), "out": args.out})
    fp = extract(method, target, data, cfg, _threads(args))
    save_fingerprint(fp, _output(args.out))
    shown = method if method == "random" else method + cfg.suffix
    print(f"{shown}: {fp.n} points, {int(fp.converged.sum())} converged, "
          f"{fp.seconds:.2f}s; saved {args.out}")
    return 0


def _calibrated_tau(path):
    try:
        obj = json.loads(_existing(path, "calibration file").read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"calibration file is not JSON: {exc}") from None
    if isinstance(obj, dict) and "tau" in obj:
        return float(obj["tau"])
    if isinstance(obj, dict) and "runs" in obj:
        report = EvalReport.from_json(obj)
        return float(report.best_run().tau)
    raise InputError(f"{path}: no 'tau' field and not an experiment report")


def cmd_verify(args):
    if args.tau is None and args.calibration is None:
        raise UsageError("verify needs --tau or --calibration")
    if (args.suspect is None) == (args.remote is None):
        raise UsageError("give exactly one of --suspect or --remote")
    fp = load_fingerprint(_existing(args.fingerprint, "fingerprint"))
    tau = args.tau if args.tau is not None else _calibrated_tau(args.calibration)
    if args.suspect is not None:
        oracle = load_model(_existing(args.suspect, "suspect model"))
    else:
        oracle = SubprocessOracle(shlex.split(args.remote), input_dim=fp.d, timeout=args.timeout)
    _echo(args, {"fingerprint": args.fingerprint, "suspect": args.suspect, "remote": args.remote,
                 "tau": tau, "threads": _threads(args)})
    try:
        verdict = verify(fp, oracle, tau, _threads(args))
    finally:
        if isinstance(oracle, SubprocessOracle):
            oracle.close()
    out = verdict.to_json()
    print(json.dumps(out))
    if args.out:
        _output(args.out).write_text(json.dumps(out, indent=2))
    return 0


def cmd_evaluate(args):
    fp = load_fingerprint(_existing(args.fingerprint, "fingerprint"))
    manifest = Path(args.suite)
    if manifest.is_dir():
        manifest = manifest / "suite.json"
    suite = load_suite(_existing(manifest, "suite manifest"))
    _echo(args, {"fingerprint": args.fingerprint, "suite": args.suite, "r": args.r,
                 "threads": _threads(args), "out": args.out})
    rates, summary = score_fingerprint(fp, suite, args.r, _threads(args))
    suffix = f"-{fp.params.get('init_strategy', 'R')}{fp.params.get('label_strategy', '')}"
    run = RunResult(fp.method, suffix, fp.params, rates,
                    converged=int(fp.converged.sum()), extraction_seconds=fp.seconds, **summary)
    obj = {"fingerprint": args.fingerprint, "target_digest": fp.target_digest, "tau": run.tau,
           "aruc": run.aruc, "auc": run.auc, "gap": run.gap, "rates": rates, "curve": run.curve}
    _output(args.out).write_text(json.dumps(obj, indent=2))
    print(f"ARUC {run.aruc:.4f}  AUC {run.auc:.4f}  gap {run.gap:+.4f}  tau {run.tau}; "
          f"saved {args.out}")
    return 0


def cmd_experiment(args):
    cfg_path = args.config or BUNDLED_CONFIGS / "blobs.json"
    cfg = load_config(_existing(cfg_path, "experiment config"))
    if args.seed is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo(args, {"config": cfg, "threads": _threads(args), "out": str(out_dir)})
    from .experiment import run_experiment

    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    report = run_experiment(cfg, threads=_threads(args), log=log)
    emit_report(report, "json", out_dir / "report.json")
    emit_report(report, "csv", out_dir / "curve.csv")
    parts = [f"{m} ARUC {report.runs[i].aruc:.3f}" for m, i in report.best.items()]
    print(f"{'; '.join(parts)}; wrote {out_dir / 'report.json'}")
    return 0


def cmd_serve(args):
    model = load_model(_existing(args.model, "model"))
    serve(model)
    return 0


def _add_common(p, seed_required=False):
    p.add_argument("--seed", type=int, required=seed_required, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: BMK_THREADS or all cores)")
    p.add_argument("-q", "--quiet", action="store_true", help="do not echo the config")


def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="CSV of features followed by a label")
    p.add_argument("--header", action="store_true", help="the CSV has a header row")
    p.add_argument("--no-rescale", action="store_true", help="features are already in [0,1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boundprint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("data", help="generate a synthetic dataset as CSV")
    _add_common(p, seed_required=True)
    p.add_argument("--kind", choices=["blobs", "moons", "spirals"], default="blobs")
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--header", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_data)

    p = sub.add_parser("train", help="train a target network")
    _add_common(p, seed_required=True)
    _add_data(p)
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="small-mlp")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("suite", help="build positive and negative suspects")
    _add_common(p, seed_required=True)
    _add_data(p)
    p.add_argument("--target", required=True)
    p.add_argument("--split", type=float, default=0.8, help="train fraction")
    p.add_argument("--lr", type=float, default=0.01, help="retraining learning rate")
    p.add_argument("--finetune-lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--n-same-arch", type=int, default=10)
    p.add_argument("--n-diff-arch", type=int, default=5)
    p.add_argument("--n-forests", type=int, default=5)
    p.add_argument("--no-ladders", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("extract", help="extract a fingerprint")
    _add_common(p, seed_required=True)
    _add_data(p, required=False)
    p.add_argument("--target", required=True)
    p.add_argument("--method", default="ipguard",
                   help="ipguard|random|fgsm|igsm|cw, optionally with a -TR/-TL/-RR/-RL suffix")
    p.add_argument("--init", choices=["T", "R"], default=None)
    p.add_argument("--label", choices=["R", "L"], default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=1.0 / 255.0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--cw-steps", type=int, default=6)
    p.add_argument("--cw-c", type=float, default=1.0)
    p.add_argument("--cw-iters", type=int, default=500)
    p.add_argument("--polish", action="store_true", help="bisect converged points onto the boundary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="check one suspect against a fingerprint")
    _add_common(p)
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--suspect", help="model file")
    p.add_argument("--remote", help="command line of a line-JSON oracle process")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--calibration", help="JSON with a 'tau' field, or an experiment report")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="score a fingerprint against a suspect suite")
    _add_common(p)
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--suite", required=True, help="suite directory or its suite.json manifest")
    p.add_argument("--r", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a config-driven end-to-end experiment")
    _add_common(p)
    p.add_argument("--config", default=None, help="JSON config (default: bundled blobs config)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("serve", help="answer label queries for a model on stdin/stdout")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_serve, quiet=True, threads=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"boundprint {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"boundprint: {exc}", file=sys.stderr)
        return exc.exit_code
    except BoundprintError as exc:
        print(f"boundprint: [{args.command}] {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"boundprint: [{args.command}] {exc}", file=sys.stderr)
        return 3
    except ArithmeticError as exc:
        print(f"boundprint: [{args.command}] {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
