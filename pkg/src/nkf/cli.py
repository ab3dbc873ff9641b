"""Command-line entry point wiring all modules.

Subcommands: ``synth`` (generate the synthetic corpus), ``train`` (fit the
model, writing per-epoch checkpoints and a loss history), ``enhance``
(apply one of the nkf/kf/wiener/lstm pipelines), ``eval`` (per-utterance
metric rows plus per-condition aggregates), and ``gradcheck`` (full
finite-difference verification of the training gradients).

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
divergence. Every command echoes its fully-resolved configuration next to
its outputs.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import data_io, enhancer, kalman, metrics
from .config import load_config, parse_assignments, save_config
from .errors import ConfigError, DataError, NkfError, NumericsError
from .networks import build_model, load_checkpoint

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nkf", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--preset", choices=("desk", "full"),
                        help="configuration preset (default desk)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", required=True, help="corpus output directory")

    p = sub.add_parser("train", help="train the enhancement model")
    p.add_argument("--corpus", required=True, help="corpus directory (with manifest.csv)")
    p.add_argument("--out", required=True, help="checkpoint/output directory")
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many optimizer steps")

    p = sub.add_parser("enhance", help="enhance utterances")
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--wav", help="single noisy wav to enhance")
    p.add_argument("--manifest", help="corpus manifest to read utterances from")
    p.add_argument("--split", default="test", choices=data_io.SPLITS)
    p.add_argument("--method", default="nkf",
                   choices=("nkf", "kf", "wiener", "lstm"))
    p.add_argument("--oracle-noise", action="store_true",
                   help="use the manifest's scaled-noise files for the noise variance")
    p.add_argument("--dump-grids", action="store_true",
                   help="also write per-utterance inspection grids (.npz)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="score enhanced utterances against clean")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=data_io.SPLITS)
    p.add_argument("--enhanced", required=True, help="directory of enhanced wavs")
    p.add_argument("--out", required=True, help="report csv path")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _model_from_cfg(cfg, seed=None):
    return build_model(
        cfg.n_bins, lstm_units=cfg.lstm_unit_list, fnn_hidden=cfg.fnn_hidden,
        context=cfg.context, window=cfg.window, hop=cfg.hop,
        variance_span=cfg.variance_span, sample_rate=cfg.sample_rate,
        log_features=cfg.log_features, seed=cfg.seed if seed is None else seed)


def cmd_synth(cfg, args) -> int:
    manifest = data_io.synth_corpus(cfg, args.out)
    save_config(cfg, os.path.join(args.out, "resolved.cfg"))
    counts = {s: len(manifest.split_entries(s)) for s in data_io.SPLITS}
    print(f"wrote corpus to {args.out}: "
          + ", ".join(f"{v} {k}" for k, v in counts.items()))
    return 0


def cmd_train(cfg, args) -> int:
    manifest = data_io.load_manifest(os.path.join(args.corpus, "manifest.csv"))
    model = _model_from_cfg(cfg)
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "resolved.cfg"))
    model, history = enhancer.train(model, manifest, cfg, out_dir=args.out,
                                    max_steps=args.max_steps)
    print(f"trained {len(history)} steps; "
          f"loss {history[0]:.6f} -> {history[-1]:.6f}; "
          f"checkpoint {os.path.join(args.out, 'model.nkf')}")
    return 0


def _enhance_inputs(cfg, args):
    if args.wav and args.manifest:
        raise ConfigError("give either --wav or --manifest, not both")
    if args.wav:
        utt_id = os.path.splitext(os.path.basename(args.wav))[0]
        yield utt_id, data_io.read_wav(args.wav, cfg.sample_rate), None
    elif args.manifest:
        manifest = data_io.load_manifest(args.manifest)
        for e in manifest.split_entries(args.split):
            yield e.utt_id, data_io.read_wav(e.noisy_path, cfg.sample_rate), e
    else:
        raise ConfigError("enhance needs --wav or --manifest")


def _oracle_grid(cfg, entry):
    if entry is None:
        raise ConfigError("--oracle-noise needs --manifest")
    noise = data_io.read_wav(entry.noise_path, cfg.sample_rate)
    return data_io.oracle_noise_variance(noise, cfg)


def cmd_enhance(cfg, args) -> int:
    model = None
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    oracle_ok = args.method in ("kf", "wiener") and args.oracle_noise
    if model is None and not oracle_ok:
        raise ConfigError(f"--method {args.method} requires --checkpoint "
                          "(kf and wiener may use --oracle-noise instead)")
    os.makedirs(args.out, exist_ok=True)
    save_config(cfg, os.path.join(args.out, "resolved.cfg"))
    count = 0
    for utt_id, noisy, entry in _enhance_inputs(cfg, args):
        if args.method == "kf":
            grid = _oracle_grid(cfg, entry) if args.oracle_noise else None
            result = kalman.enhance_kf_baseline(noisy, cfg, sigma_v2_grid=grid,
                                                model=model)
        elif args.method == "wiener" and args.oracle_noise:
            result = enhancer.enhance_wiener(noisy, cfg, _oracle_grid(cfg, entry))
        else:
            result = enhancer.enhance(model, noisy, method=args.method)
        data_io.write_wav(result.waveform, os.path.join(args.out, f"{utt_id}.wav"))
        if args.dump_grids:
            grids = {k: v for k, v in vars(result.grids).items() if v is not None}
            np.savez(os.path.join(args.out, f"{utt_id}_grids.npz"), **grids)
        count += 1
    if count == 0:
        raise DataError("no utterances to enhance")
    print(f"enhanced {count} utterance(s) with method {args.method} into {args.out}")
    return 0


def cmd_eval(cfg, args) -> int:
    manifest = data_io.load_manifest(args.manifest)
    rows = []
    for e in manifest.split_entries(args.split):
        enhanced_path = os.path.join(args.enhanced, f"{e.utt_id}.wav")
        if not os.path.exists(enhanced_path):
            continue
        clean = data_io.read_wav(e.clean_path, cfg.sample_rate)
        noisy = data_io.read_wav(e.noisy_path, cfg.sample_rate)
        enhanced = data_io.read_wav(enhanced_path, cfg.sample_rate)
        row = {"utt_id": e.utt_id, "snr_db": e.mix.snr_db}
        row.update(metrics.evaluate_pair(clean, enhanced, cfg.window, cfg.hop))
        noisy_scores = metrics.evaluate_pair(clean, noisy, cfg.window, cfg.hop)
        row.update({f"{k}_noisy": v for k, v in noisy_scores.items()})
        rows.append(row)
    if not rows:
        raise DataError("no enhanced utterances found to evaluate")
    report = metrics.summarize_rows(rows)
    fields = ["utt_id", "snr_db", "fwsegsnr", "segsnr", "amp_mse",
              "fwsegsnr_noisy", "segsnr_noisy", "amp_mse_noisy"]
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        for snr, agg in report.per_condition.items():
            summary = {"utt_id": f"MEAN@{snr:g}dB", "snr_db": snr}
            summary.update(agg)
            writer.writerow(summary)
    save_config(cfg, os.path.splitext(args.out)[0] + ".cfg")
    for snr, agg in report.per_condition.items():
        print(f"condition {snr:g} dB: fwsegsnr {agg['fwsegsnr']:.2f} dB, "
              f"segsnr {agg['segsnr']:.2f} dB, amp_mse {agg['amp_mse']:.5f}")
    return 0


def cmd_gradcheck(cfg, args) -> int:
    err = enhancer.gradient_check(seed=args.seed)
    print(f"max relative gradient error: {err:.3e}")
    if not err < GRADCHECK_TOLERANCE:
        raise NumericsError(f"gradient check failed: {err:.3e} >= {GRADCHECK_TOLERANCE}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, parse_assignments(args.set),
                          preset=args.preset)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except NkfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
