"""Command-line pipeline: simulate, inject, train, score, eval, gradcheck.

Exit codes: 0 success, 1 usage/config error, 2 data or parse error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import can_log, evaluation, scorer, simulator
from .config import ConfigError, load_config
from .dataset import build_windows, split_chronological
from .lstm import gradcheck, serialize, training
from .lstm.network import NumericFailure, init_model, predict

log = logging.getLogger("canids")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_frames(path):
    try:
        frames, errors = can_log.read_log(path)
    except OSError as exc:
        raise DataError(f"cannot read log {path}: {exc}") from exc
    for err in errors[:10]:
        log.warning("%s: %s", path, err)
    if len(errors) > 10:
        log.warning("%s: %d more malformed lines", path, len(errors) - 10)
    return frames


def _write_log(frames, path, truth_path=None):
    with open(path, "w", encoding="ascii") as fh:
        can_log.write_log(frames, fh)
    if truth_path:
        with open(truth_path, "w", encoding="ascii") as fh:
            simulator.write_truth_csv(frames, fh)


def _parse_aid(text: str) -> int:
    try:
        aid = int(text, 16)
    except ValueError:
        raise UsageError(f"--aid must be hex, got {text!r}") from None
    if not 0 <= aid <= can_log.MAX_AID:
        raise UsageError(f"--aid {text} outside 0..7FF")
    return aid


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    frames = simulator.TRACE_GENERATORS[cfg.trace](cfg.trace_spec(), cfg.target_aid)
    _write_log(frames, args.out, args.truth)
    log.info("wrote %d %s frames to %s", len(frames), cfg.trace, args.out)
    return EXIT_OK


def cmd_inject(args) -> int:
    cfg = load_config(args.config, args.seed)
    ambient = _read_frames(args.in_log)
    merged = simulator.inject_attack(ambient, cfg.attack_spec())
    _write_log(merged, args.out, args.truth)
    log.info("injected %d frames", len(merged) - len(ambient))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    aid = _parse_aid(args.aid)
    frames = can_log.filter_by_aid(_read_frames(args.log), aid)
    mcfg = cfg.model_config()
    ds = build_windows(frames, mcfg.window)
    train_ds, holdout = split_chronological(ds, cfg.train_fraction)
    if train_ds.N < 2:
        raise DataError(f"aid {aid:03X}: {len(frames)} frames give only {train_ds.N} training windows")
    params, report = training.train(init_model(mcfg, mcfg.seed), train_ds, mcfg)
    train_err = scorer.prediction_error(train_ds.Y, predict(params, train_ds.X))
    em = scorer.fit_error_model(train_err)
    serialize.save_model(params, args.model)
    with open(args.errmodel, "w", encoding="ascii") as fh:
        fh.write(em.to_text())
    lines = [f"aid = {aid:03X}", f"n_train = {train_ds.N}", f"n_holdout = {holdout.N}",
             f"epochs = {len(report.epoch_losses)}", f"final_loss = {report.final_loss!r}",
             f"first_loss = {report.epoch_losses[0] if report.epoch_losses else float('nan')!r}",
             f"error_mu = {em.mu!r}", f"error_sigma = {em.sigma!r}"]
    if holdout.N:
        hold_err = scorer.prediction_error(holdout.Y, predict(params, holdout.X))
        lines.append(f"holdout_error_mean = {float(np.mean(hold_err))!r}")
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w", encoding="ascii") as fh:
            fh.write(text)
    sys.stdout.write(text)
    log.info("training took %.1f s", report.wall_time)
    return EXIT_OK


def cmd_score(args) -> int:
    aid = _parse_aid(args.aid)
    params = serialize.load_model(args.model)
    try:
        with open(args.errmodel, encoding="ascii") as fh:
            em = scorer.GaussianErrorModel.from_text(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read error model: {exc}") from exc
    frames = can_log.filter_by_aid(_read_frames(args.log), aid)
    scores = scorer.score_stream(params, em, frames)
    with open(args.out, "w", encoding="ascii") as fh:
        scorer.write_scores_csv(scores, fh)
    log.info("wrote %d scores to %s", len(scores), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        with open(args.scores, encoding="ascii") as fh:
            scores = scorer.read_scores_csv(fh)
        with open(args.truth, encoding="ascii") as fh:
            truth = simulator.read_truth_csv(fh)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    labeled = evaluation.attach_truth(scores, truth)
    report = evaluation.summarize(labeled)
    with open(args.report, "w", encoding="ascii") as fh:
        fh.write(report.to_kv())
    with open(args.report + ".txt", "w", encoding="ascii") as fh:
        fh.write(report.to_text())
    if args.series:
        with open(args.series, "w", encoding="ascii") as fh:
            scorer.write_scores_csv(labeled, fh)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = gradcheck.TINY_CONFIG
    seed = 0
    if args.config is not None or args.seed is not None:
        run = load_config(args.config, args.seed)
        seed = run.seed
        if args.config is not None:
            cfg = run.model_config()
    worst = 0.0
    for s in range(seed, seed + 3):
        res = gradcheck.check_gradients(cfg, seed=s)
        worst = max(worst, res.max_rel_error)
        print(f"seed {s}: max relative error {res.max_rel_error:.3e}")
    ok = worst < GRADCHECK_TOL
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="canids", description="Bit-level CAN payload prediction IDS")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("simulate", help="generate an ambient trace")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("inject", help="inject fixed-payload attack frames")
    common(sp)
    sp.add_argument("--in", dest="in_log", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", required=True)
    sp.set_defaults(func=cmd_inject)

    sp = sub.add_parser("train", help="train one AID's predictor and fit its error model")
    common(sp)
    sp.add_argument("--log", required=True)
    sp.add_argument("--aid", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--errmodel", required=True)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="score one AID's frames")
    sp.add_argument("--model", required=True)
    sp.add_argument("--errmodel", required=True)
    sp.add_argument("--log", required=True)
    sp.add_argument("--aid", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, help="accepted for uniformity; scoring is deterministic")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="summarize scores against ground truth")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--report", required=True)
    sp.add_argument("--series", help="also write the labeled score series here")
    sp.add_argument("--seed", type=int, help="accepted for uniformity; unused")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"canids: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"canids: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, can_log.CanLogError, serialize.ModelFileError, training.EmptyDataset,
            scorer.TooFewErrors, evaluation.OneClassOnly, KeyError, ValueError, OSError) as exc:
        print(f"canids: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
