"""Command line interface.

Every subcommand is driven by one JSON config (--config); flags only
override the seed or choose output paths.  Stdout and all written
artifacts are byte-reproducible for a given config; timing goes to
stderr.  Exit codes: 0 ok, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

from .classify import TraceRecorder
from .config import (RunConfig, SEED_CLASSIFY, SEED_FIXTURE, SEED_NET_INIT,
                     SEED_TRAIN, SEED_VARIANCE, build_dataset, build_denoiser,
                     build_options, build_schedule, parse_config)
from .denoisers.mlp import (MlpDenoiser, finite_diff_gradcheck, random_batch,
                            train_denoiser)
from .errors import ConfigurationError, NumericError
from .harness import (classify_one, make_winoground_fixture,
                      read_score_matrices, run_benchmark, scaling_curve,
                      timestep_accuracy_curve, variance_report,
                      winoground_text_score, write_score_matrices)
from .rng import derive_seed, generator
from .strategy import EvenlySpaced, UniformRandom, evenly_spaced_ts, \
    prune_candidates


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig.from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _outpath(args, cfg, default_name):
    path = args.output if args.output else os.path.join(cfg.output_dir,
                                                        default_name)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _outdir(args, cfg):
    d = args.output if args.output else cfg.output_dir
    os.makedirs(d, exist_ok=True)
    return d


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if cfg.denoiser.kind != "mlp":
        raise ConfigurationError("denoiser.kind: train requires an mlp denoiser")
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    net = build_denoiser(cfg, dataset, schedule, for_training=True)
    trace = train_denoiser(net, dataset, schedule,
                           steps=cfg.train.steps,
                           batch_size=cfg.train.batch_size,
                           lr=cfg.train.lr,
                           seed=derive_seed(cfg.seed, SEED_TRAIN),
                           p_uncond=cfg.denoiser.p_uncond,
                           log_every=cfg.train.log_every)
    out = _outpath(args, cfg, "model.dck")
    from .checkpoint import save_checkpoint
    save_checkpoint(net, cfg.to_dict(), out)
    if args.trace:
        trace.write_csv(args.trace)
    print(f"trained {cfg.train.steps} steps, final loss {trace.final_loss!r}")
    print(f"checkpoint written to {out}")
    return 0


def cmd_classify(args) -> int:
    cfg = _load_config(args)
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    denoiser = build_denoiser(cfg, dataset, schedule)
    options = build_options(cfg, dataset)
    if not 0 <= args.index < len(dataset.xs):
        raise ConfigurationError(
            f"--index {args.index} out of range for dataset of "
            f"{len(dataset.xs)} samples")
    x = dataset.xs[args.index]
    master = derive_seed(cfg.seed, SEED_CLASSIFY)
    cand = list(range(dataset.n_classes))
    if options.prune_k is not None:
        scores = options.pruner(x, generator(derive_seed(master, args.index, 1)))
        cand = sorted(int(k) for k in prune_candidates(scores, options.prune_k))
    trace = TraceRecorder() if args.trace else None
    res = classify_one(x, cand, denoiser, schedule, options,
                       derive_seed(master, args.index), trace=trace,
                       input_id=args.index)
    if args.trace:
        trace.write_csv(args.trace)
    print(f"input {args.index} label {int(dataset.labels[args.index])}")
    print(f"predicted {int(res.predicted)}")
    for k, c in enumerate(res.classes):
        elim = res.eliminated_at_stage[k]
        tail = "" if elim is None else f" eliminated_at_stage {elim}"
        print(f"class {c}: mean_error {float(res.mean_errors[k])!r} "
              f"trials {int(res.trial_counts[k])} "
              f"posterior {float(res.posterior[k])!r}{tail}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    denoiser = build_denoiser(cfg, dataset, schedule)
    options = build_options(cfg, dataset)
    trace = TraceRecorder() if args.trace else None
    rep = run_benchmark(dataset, denoiser, schedule, options,
                        master_seed=derive_seed(cfg.seed, SEED_CLASSIFY),
                        jobs=args.jobs, trace=trace)
    out = _outdir(args, cfg)
    rep.write_csv(os.path.join(out, "benchmark.csv"))
    rep.write_summary(os.path.join(out, "summary.json"))
    if args.trace:
        trace.write_csv(args.trace)
    print(f"inputs {len(rep.rows)}")
    print(f"accuracy {rep.accuracy!r}")
    print(f"mean_per_class_accuracy {rep.mean_per_class_accuracy!r}")
    print(f"total_evaluations {rep.total_evaluations}")
    print(f"config_hash {rep.config_hash}")
    print(f"wall time {rep.wall_time:.3f}s", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    denoiser = build_denoiser(cfg, dataset, schedule)
    options = build_options(cfg, dataset)
    ts = cfg.sweep.timesteps
    if ts is None:
        ts = evenly_spaced_ts(cfg.sweep.n_points, schedule.T)
    curve = timestep_accuracy_curve(dataset, denoiser, schedule, ts,
                                    cfg.sweep.n_trials, base_options=options,
                                    master_seed=derive_seed(cfg.seed,
                                                            SEED_CLASSIFY),
                                    jobs=args.jobs)
    curve.write_csv(_outpath(args, cfg, "timestep_curve.csv"))
    for t, a in zip(curve.ts, curve.accuracies):
        print(f"t {t} accuracy {a!r}")
    return 0


def cmd_scaling(args) -> int:
    cfg = _load_config(args)
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    denoiser = build_denoiser(cfg, dataset, schedule)
    options = build_options(cfg, dataset)
    if cfg.scaling.strategies:
        strategies = {name: sc.build() for name, sc in cfg.scaling.strategies}
    else:
        strategies = {"uniform-random": UniformRandom(),
                      "evenly-spaced-8": EvenlySpaced(8)}
    rep = scaling_curve(dataset, denoiser, schedule, strategies,
                        cfg.scaling.budgets, options,
                        master_seed=derive_seed(cfg.seed, SEED_CLASSIFY),
                        jobs=args.jobs)
    rep.write_csv(_outpath(args, cfg, "scaling.csv"))
    for row in rep.rows:
        print(f"strategy {row.strategy} trials {row.n_trials} "
              f"accuracy {row.accuracy!r}")
    return 0


def cmd_variance(args) -> int:
    cfg = _load_config(args)
    dataset = build_dataset(cfg)
    schedule = build_schedule(cfg)
    denoiser = build_denoiser(cfg, dataset, schedule)
    vc = cfg.variance
    if not 0 <= vc.input_index < len(dataset.xs):
        raise ConfigurationError("variance.input_index out of range")
    for c in (vc.class_a, vc.class_b):
        if not 0 <= c < dataset.n_classes:
            raise ConfigurationError(f"variance class {c} out of range")
    options = build_options(cfg, dataset)
    rep = variance_report(dataset.xs[vc.input_index], (vc.class_a, vc.class_b),
                          denoiser, schedule, n_sets=vc.n_sets,
                          set_size=vc.set_size,
                          master_seed=derive_seed(cfg.seed, SEED_VARIANCE),
                          loss=options.loss, objective=options.objective)
    rep.write_csv(_outpath(args, cfg, "variance.csv"))
    print(f"sets {vc.n_sets} set_size {vc.set_size}")
    print(f"paired_variance {rep.paired_variance!r}")
    print(f"unpaired_variance {rep.unpaired_variance!r}")
    print(f"ratio {rep.unpaired_variance / rep.paired_variance!r}")
    return 0


def cmd_winoground(args) -> int:
    cfg = _load_config(args)
    wc = cfg.winoground
    if args.scores:
        matrices = read_score_matrices(args.scores)
    else:
        matrices = make_winoground_fixture(wc.n_examples,
                                           seed=derive_seed(cfg.seed,
                                                            SEED_FIXTURE),
                                           height=wc.height, width=wc.width,
                                           noise_sigma=wc.noise_sigma,
                                           set_size=wc.set_size)
    if args.output:
        write_score_matrices(_outpath(args, cfg, "scores.csv"), matrices)
    score = winoground_text_score(matrices)
    print(f"examples {len(matrices)}")
    print(f"text_score {score!r}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    gc = cfg.gradcheck
    schedule = build_schedule(cfg)
    net = MlpDenoiser(data_shape=(4,), n_classes=3, hidden=gc.hidden,
                      embed_dim=gc.embed_dim, activation="tanh",
                      variance_head=gc.variance_head,
                      seed=derive_seed(cfg.seed, SEED_NET_INIT))
    batch = random_batch(net, gc.batch_size, schedule.T,
                         seed=derive_seed(cfg.seed, SEED_FIXTURE))
    report = finite_diff_gradcheck(net, batch)
    for name in sorted(report.per_param):
        print(f"param {name} rel_dev {report.per_param[name]!r}")
    print(f"max_rel_dev {report.max_rel_dev!r} worst {report.worst_param}")
    if report.max_rel_dev > gc.tolerance:
        raise NumericError(
            f"gradient check failed: max relative deviation "
            f"{report.max_rel_dev!r} exceeds tolerance {gc.tolerance!r}")
    print("gradcheck ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffcls",
        description="Classify by comparing per-class denoising errors of a "
                    "diffusion model.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--output", "-o", default=None,
                        help="output path (file for single artifacts, "
                             "directory for benchmark)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="train an mlp denoiser, write a checkpoint")
    p.add_argument("--trace", help="write step,loss CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common],
                       help="classify one dataset input")
    p.add_argument("--index", type=int, default=0, help="dataset input index")
    p.add_argument("--trace", help="write per-point error CSV here")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("benchmark", parents=[common],
                       help="classify the whole dataset, report accuracy")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.add_argument("--trace", help="write per-point error CSV here")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep-timesteps", parents=[common],
                       help="accuracy with all trials pinned to one t, per t")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scaling", parents=[common],
                       help="accuracy vs trial budget per strategy")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("variance", parents=[common],
                       help="paired vs unpaired error-difference variance")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("winoground", parents=[common],
                       help="image/caption score-matrix text score")
    p.add_argument("--scores", help="read score matrices from this CSV "
                                    "instead of generating the fixture")
    p.set_defaults(func=cmd_winoground)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="check mlp gradients against finite differences")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        code = args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    print(f"elapsed {time.perf_counter() - start:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
