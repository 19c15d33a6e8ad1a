"""``kitinet`` command line: kernel-check, dsmc, train, sweep.

Exit codes: 0 success, 1 check or experiment failure, 2 usage or config error.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks, config as config_mod, dsmc, io
from .condense import export_heatmap
from .errors import DivergenceDetected, InvalidConfig
from .experiment import score_snapshots
from .net import flatten_params, make_sine_dataset, train

log = logging.getLogger("kitinet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _start(cfg, out, command):
    out.mkdir(parents=True, exist_ok=True)
    io.write_text(out / "config.echo.json", config_mod.dumps(cfg))
    io.write_json(out / "run_meta.json", io.run_meta(command))


def cmd_kernel_check(cfg, out):
    _start(cfg, out, "kernel-check")
    results = checks.run_all(cfg.kiti, cfg.check.trials, cfg.check.gradient_points)
    io.write_csv(out / "kernel_check.csv", ["check_name", "metric", "tolerance", "pass"],
                 [(r.name, r.metric, r.tolerance, r.passed) for r in results])
    io.write_manifest(out)
    for r in results:
        log.info("%-24s metric=%.3e tol=%.1e %s", r.name, r.metric, r.tolerance,
                 "pass" if r.passed else "FAIL")
    failed = [r for r in results if not r.passed]
    if failed:
        r = failed[0]
        print(f"kernel-check failed: {r.name} (metric {r.metric:.6g} > tolerance {r.tolerance:g})",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_dsmc(cfg, out):
    c = cfg.dsmc
    _start(cfg, out, "dsmc")
    axes = "xyz"[:c.dimensionality]
    header = ["step", "time"] + [f"total_momentum_{a}" for a in axes] + [
        "kinetic_energy", "temperature", "l2_to_maxwell"]
    rows = []

    def observe(state):
        rows.append([state.step, state.time, *dsmc.total_momentum(state),
                     dsmc.kinetic_energy(state), dsmc.temperature(state),
                     dsmc.l2_to_maxwell(state, c.hist_bins)])
        if state.step % 100 == 0:
            log.info("step %d  l2=%.4f", state.step, rows[-1][-1])

    state = dsmc.run(c, observer=observe)
    io.write_csv(out / "timeseries.csv", header, rows)
    edges, dens = dsmc.speed_histogram(state, c.hist_bins)
    ref = dsmc.maxwell_reference(dsmc.temperature(state), c.dimensionality, edges)
    io.write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", "density", "reference_density"],
                 zip(edges[:-1], edges[1:], dens, ref))
    io.write_manifest(out)
    return EXIT_OK


def _write_training(out, run, layers, threshold):
    io.write_csv(out / "loss.csv", ["epoch", "train_mse"], run.losses)
    for epoch, params in sorted(run.snapshots.items()):
        shapes = ";".join(f"W{i}={W.shape[0]}x{W.shape[1]},b{i}={b.shape[0]}"
                          for i, (W, b) in enumerate(params, start=1))
        io.write_csv(out / "snapshots" / f"epoch_{epoch:04d}.csv", ["value"],
                     ([x] for x in flatten_params(params)),
                     comment=f"epoch={epoch} layout=row-major {shapes}")
    matrices, scores = score_snapshots(run.snapshots, layers, threshold)
    for mat in matrices:
        io.write_text(out / "heatmaps" / f"layer{mat.layer_index}_epoch{mat.epoch:04d}.csv",
                      export_heatmap(mat))
    io.write_csv(out / "scores.csv", ["epoch", "layer", "threshold", "score"],
                 [(e, l, threshold, s) for e, l, s in scores])
    return scores


def cmd_train(cfg, out):
    _start(cfg, out, "train")
    spec, tc = cfg.network_spec(), cfg.train_config()
    dataset = make_sine_dataset(cfg.train.n_samples, seed=cfg.train.data_seed)
    status = EXIT_OK
    try:
        run = train(spec, tc, dataset)
    except DivergenceDetected as exc:
        print(f"train failed: {exc}", file=sys.stderr)
        run, status = exc.partial, EXIT_FAIL
    scores = _write_training(out, run, cfg.train.analyze_layers, cfg.train.threshold)
    io.write_manifest(out)
    if run.losses:
        log.info("final mse %.6g", run.losses[-1][1])
    for e, l, s in scores:
        log.info("epoch %d layer %d score %.4f", e, l, s)
    return status


def sweep_grid(cfg):
    """Deduplicated (n_divide, coll_coef) points that divide the hidden width."""
    seen, points = set(), []
    for nd in cfg.sweep.n_divide:
        for cc in cfg.sweep.coll_coef:
            key = (int(nd), float(cc))
            if key in seen:
                log.warning("duplicate sweep point n_divide=%d coll_coef=%g ignored", *key)
                continue
            seen.add(key)
            if cfg.network.hidden_dim % key[0]:
                log.warning("skipping n_divide=%d: does not divide hidden_dim=%d",
                            key[0], cfg.network.hidden_dim)
                continue
            points.append(key)
    return points


def sweep_point(cfg, n_divide, coll_coef, seed):
    kiti = replace(cfg.kiti, n_divide=n_divide, coll_coef=coll_coef, seed=seed)
    spec = cfg.network_spec(kiti=kiti)
    dataset = make_sine_dataset(cfg.train.n_samples, seed=cfg.train.data_seed)
    layer = cfg.train.analyze_layers[0]
    try:
        run = train(spec, cfg.train_config(seed=seed), dataset)
        _, scores = score_snapshots({cfg.train.epochs: run.params}, (layer,), cfg.train.threshold)
        return run.losses[-1][1] if run.losses else float("nan"), scores[0][2]
    except DivergenceDetected as exc:
        log.warning("n_divide=%d coll_coef=%g seed=%d diverged at epoch %d",
                    n_divide, coll_coef, seed, exc.epoch)
        return float("nan"), float("nan")


def cmd_sweep(cfg, out):
    _start(cfg, out, "sweep")
    points = sweep_grid(cfg)
    rows = []
    for nd, cc in points:
        for seed in cfg.sweep.seeds:
            mse, score = sweep_point(cfg, nd, cc, int(seed))
            log.info("n_divide=%d coll_coef=%g seed=%d mse=%.6g score=%.4f", nd, cc, seed, mse, score)
            rows.append((nd, cc, int(seed), mse, score))
    rows.sort(key=lambda r: r[:3])
    io.write_csv(out / "sweep.csv",
                 ["n_divide", "coll_coef", "seed", "final_train_mse", "final_score"], rows)
    io.write_manifest(out)
    return EXIT_OK if points else EXIT_FAIL


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "dsmc": cmd_dsmc,
    "train": cmd_train,
    "sweep": cmd_sweep,
}


def build_parser():
    p = argparse.ArgumentParser(prog="kitinet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config; omitted sections use defaults")
        s.add_argument("--output", type=Path, help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="override every seed in the config")
        s.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return p


def _configure_logging(quiet):
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    if not any(getattr(h, "_kitinet", False) for h in log.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        handler._kitinet = True
        log.addHandler(handler)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    _configure_logging(args.quiet)
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.from_dict({})
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise InvalidConfig("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        out = args.output if args.output is not None else Path(cfg.output_dir)
        if args.command == "sweep" and not cfg.network.kiti_layers:
            raise InvalidConfig("sweep needs at least one entry in network.kiti_layers")
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            return COMMANDS[args.command](cfg, Path(out))
        except InvalidConfig as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
