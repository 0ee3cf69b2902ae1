"""Command-line entry points: ``python -m ctckws {synth,train,spot,eval}``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
divergence during training.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import synth
from .ctc import DEFAULT_ALPHABET, AlphabetError
from .decoder import (DEFAULT_REFRACTORY, DETECTION_COLUMNS, KeywordError, detection_row,
                      read_detections_csv, read_keyword_list)
from .evaluate import (DEFAULT_WINDOW, events_at, latency_stats,
                       match_detections, pr_sweep, read_truth_csv, sweep_events, write_pr_csv,
                       write_truth_csv)
from .features import FeatureError, fit_normalizer, iter_wav_chunks, normalize
from .lstm import NetworkConfig, init_params
from .modelio import ModelFormatError, load_model, save_model
from .pipeline import SpottingPipeline
from .streamfile import StreamFormatError, StreamReader, StreamWriter, read_stream, write_stream
from .training import TrainingDiverged, train_stream

log = logging.getLogger("ctckws")

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("KWS_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"KWS_SEED must be an integer, got {env!r}") from None


# synth ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.sentences < 1 or args.eval_sentences < 0:
        raise UsageError("sentence counts must be positive")
    seed = _seed(args)
    try:
        sc = synth.SynthConfig(mean_duration=args.mean_duration, jitter=args.jitter,
                               separation=args.separation, noise_std=args.noise_std, seed=seed)
    except synth.SynthError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    train = synth.build_corpus(synth.DEFAULT_VOCABULARY, args.sentences, sc, seed=seed * 1000 + 1)
    _write_manifest(out, train)
    if args.eval_sentences:
        ev = synth.build_corpus(synth.DEFAULT_VOCABULARY, args.eval_sentences, sc,
                                seed=seed * 1000 + 2)
        stream = synth.concatenate_stream(ev, sc, seed=seed * 1000 + 3)
        (out / "eval").mkdir(exist_ok=True)
        # the stream, and the same frames split into the leading pause plus one file per utterance
        write_stream(out / "stream.kwstrm", stream.features, "features")
        bounds = [0] + stream.utterance_offsets + [len(stream.features)]
        for i, (a, b) in enumerate(zip(bounds, bounds[1:])):
            write_stream(out / "eval" / f"part_{i:05d}.kwstrm", stream.features[a:b], "features")
        write_truth_csv(out / "truth.csv", stream.occurrences)
    (out / "keywords_multi.txt").write_text("\n".join(synth.MULTI_KEYWORDS) + "\n")
    (out / "keywords_mono.txt").write_text("\n".join(synth.MONO_KEYWORDS) + "\n")
    print(f"wrote {args.sentences} training utterances ({train.num_frames} frames) to {out}")
    return 0


def _write_manifest(out: Path, corpus):
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "transcription", "frames"])
        for i, utt in enumerate(corpus.utterances):
            uid = f"utt_{i:05d}"
            write_stream(out / "features" / f"{uid}.kwstrm", utt.features, "features")
            w.writerow([uid, utt.text, utt.num_frames])


# train ---------------------------------------------------------------------

def load_corpus_dir(path, input_dim: int):
    """Read ``manifest.csv`` and the per-utterance feature streams."""
    root = Path(path)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise DataError(f"no manifest.csv in {root}")
    out = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                x, _, _ = read_stream(root / "features" / f"{row['id']}.kwstrm", "features")
            except (OSError, StreamFormatError) as exc:
                raise DataError(f"utterance {row['id']}: {exc}") from None
            if x.shape[1] != input_dim:
                raise DataError(f"utterance {row['id']} has dim {x.shape[1]}, network expects {input_dim}")
            if len(x) != int(row["frames"]):
                raise DataError(f"utterance {row['id']}: manifest says {row['frames']} frames, file has {len(x)}")
            out.append((x.astype(np.float64), DEFAULT_ALPHABET.encode(row["transcription"])))
    if not out:
        raise DataError("corpus is empty")
    return out


def cmd_train(args) -> int:
    seed = _seed(args)
    try:
        layers = [int(s) for s in args.layers.split(",")]
        cfg = NetworkConfig(layer_sizes=layers, unroll_length=args.unroll,
                            update_period=args.update_period, learning_rate=args.lr,
                            momentum=args.momentum, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pairs = load_corpus_dir(args.corpus, cfg.input_dim)
    stats = fit_normalizer(np.vstack([x for x, _ in pairs]))
    pairs = [(normalize(x, stats).astype(cfg.dtype), y) for x, y in pairs]
    n_val = int(round(len(pairs) * args.validation_fraction))
    val = pairs[len(pairs) - n_val:] if n_val else None
    train = pairs[:len(pairs) - n_val]
    params = init_params(cfg)
    with open(args.loss_log or Path(args.model).with_suffix(".loss.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["update", "frames", "loss", "segments", "grad_norm", "learning_rate"])

        def record(r):
            w.writerow([r.update, r.frames, repr(r.loss), r.segments, repr(r.grad_norm),
                        repr(r.learning_rate)])

        try:
            res = train_stream(cfg, train, args.updates, validation=val,
                               validate_every=args.validate_every, params=params, callback=record)
        except TrainingDiverged as exc:
            print(f"training diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
    save_model(args.model, res.params, cfg, stats, DEFAULT_ALPHABET)
    last = [r.loss for r in res.history[-50:] if np.isfinite(r.loss)]
    print(f"{len(res.history)} updates, recent loss {np.mean(last) if last else float('nan'):.4f}, "
          f"skipped {res.skipped_segments} long utterances; model written to {args.model}")
    return 0


# spot ----------------------------------------------------------------------

def _keywords(args) -> list[str]:
    kws = list(args.keyword or [])
    if args.keywords:
        try:
            kws += read_keyword_list(args.keywords)
        except OSError as exc:
            raise DataError(str(exc)) from None
    if not kws:
        raise UsageError("give --keyword or --keywords")
    return kws


def _input_blocks(paths, chunk_frames: int):
    """Yield ``(kind, block)`` over the inputs in order, as one continuous stream."""
    for p in paths:
        if str(p).lower().endswith(".wav"):
            for samples, rate in iter_wav_chunks(p, chunk_frames * 160):
                if rate != 16000:
                    raise DataError(f"{p}: sample rate {rate}, need 16000")
                yield "audio", samples
            continue
        with StreamReader(p) as r:
            if r.kind == "scores":
                raise DataError(f"{p}: score streams cannot be spotted")
            for block in r.chunks(chunk_frames):
                yield r.kind, block


def cmd_spot(args) -> int:
    if args.mode == "filler" and args.semantics == "sum":
        raise UsageError("--semantics sum is undefined with --mode filler; use max")
    model = load_model(args.model) if args.model else None
    pipe = SpottingPipeline(_keywords(args), model, args.mode, args.semantics,
                            args.threshold_per_char, args.refractory)
    kind = None
    scores_out = StreamWriter(args.scores, "scores", len(pipe.keywords)) if args.scores else None
    with open(args.out, "w", newline="") as fh:
        rows = csv.writer(fh)
        rows.writerow(DETECTION_COLUMNS)
        try:
            for k, block in _input_blocks(args.inputs, args.chunk_frames):
                if kind is None:
                    kind = k
                elif k != kind:
                    raise DataError("all inputs must be of the same kind")
                if k == "posteriors":
                    if block.shape[1] != len(pipe.spotter.alphabet):
                        raise DataError(f"posterior dim {block.shape[1]} does not match the alphabet")
                    scores, events = pipe.push_posteriors(block)
                else:
                    if model is None:
                        raise UsageError(f"{k} input needs --model")
                    if k == "features" and block.shape[1] != model.config.input_dim:
                        raise DataError(f"feature dim {block.shape[1]}, model expects {model.config.input_dim}")
                    scores, events = (pipe.push_audio(block) if k == "audio"
                                      else pipe.push_features(block))
                _emit(rows, scores_out, scores, events)
            _emit(rows, scores_out, *pipe.flush())
        finally:
            if scores_out is not None:
                scores_out.close()
    return 0


def _emit(rows, scores_out, scores, events):
    if scores_out is not None and len(scores):
        scores_out.write(scores)
    for ev in events:
        rows.writerow(detection_row(ev))


# eval ----------------------------------------------------------------------

def _sweep_values(text: str) -> np.ndarray:
    try:
        parts = [float(s) for s in text.split(":")]
    except ValueError:
        raise UsageError(f"bad --sweep {text!r}; expected lo:hi:n") from None
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):
        raise UsageError(f"bad --sweep {text!r}; expected lo:hi:n")
    return np.linspace(parts[0], parts[1], int(parts[2]))


def cmd_eval(args) -> int:
    ths = _sweep_values(args.sweep)
    try:
        truth = read_truth_csv(args.truth)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read truth table: {exc}") from None
    truth_kws = {t.keyword for t in truth}
    if args.scores:
        if not (args.keywords or args.keyword):
            raise UsageError("--scores needs the keyword list used by spot")
        kws = [k.lower() for k in _keywords(args)]
        frames, _, _ = read_stream(args.scores, "scores")
        if frames.shape[1] != len(kws):
            raise DataError(f"score stream has {frames.shape[1]} columns for {len(kws)} keywords")
        _check_keywords(kws, truth_kws)
        scores = {k: frames[:, i].astype(np.float64) for i, k in enumerate(kws)}
        res = pr_sweep(scores, truth, ths, refractory=args.refractory, window=args.window)
        best_events = events_at(scores, {k: len(k) for k in kws}, res.best.threshold,
                                args.refractory)
    elif args.detections:
        events = read_detections_csv(args.detections)
        kws = [k.lower() for k in _keywords(args)] if (args.keywords or args.keyword) \
            else sorted(truth_kws)
        _check_keywords(kws, truth_kws)
        stray = {e.keyword for e in events} - set(kws)
        if stray:
            raise DataError(f"detections for keywords not under evaluation: {sorted(stray)}")
        truth = [t for t in truth if t.keyword in set(kws)]
        res = sweep_events(events, truth, ths, window=args.window)
        best_events = [e for e in events if e.score > -res.best.threshold * len(e.keyword)]
    else:
        raise UsageError("give --scores or --detections")
    if args.out:
        write_pr_csv(args.out, res)
    b = res.best
    print(f"max-F1 {b.f1:.4f} at threshold {b.threshold:.4g} "
          f"(precision {b.precision:.4f}, recall {b.recall:.4f})")
    eval_truth = [t for t in truth if t.keyword in set(kws)]
    lat = latency_stats(match_detections(best_events, eval_truth, args.window).pairs)
    if lat.empty:
        print("latency: no matched detections")
    else:
        print(f"latency: median {lat.median_ms:.0f} ms, mean {lat.mean_ms:.1f} ms, "
              f"max {lat.max_ms:.0f} ms over {lat.count} matches")
    return 0


def _check_keywords(kws, truth_kws):
    missing = sorted(set(kws) - truth_kws)
    if missing:
        # legitimate for short streams; every detection of these is a false alarm
        print(f"warning: no truth occurrences for {missing}", file=sys.stderr)


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctckws", description="CTC keyword spotting tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus and evaluation stream")
    s.add_argument("out")
    s.add_argument("--seed", type=int)
    s.add_argument("--sentences", type=int, default=200)
    s.add_argument("--eval-sentences", type=int, default=100)
    s.add_argument("--noise-std", type=float, default=1.0)
    s.add_argument("--separation", type=float, default=4.0)
    s.add_argument("--mean-duration", type=int, default=4)
    s.add_argument("--jitter", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a network on a corpus directory")
    t.add_argument("corpus")
    t.add_argument("model")
    t.add_argument("--loss-log")
    t.add_argument("--layers", default="32,32,32")
    t.add_argument("--unroll", type=int, default=512)
    t.add_argument("--update-period", type=int, default=256)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--updates", type=int, default=2000)
    t.add_argument("--validation-fraction", type=float, default=0.1)
    t.add_argument("--validate-every", type=int, default=250)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("spot", help="stream input through the network and keyword decoder")
    k.add_argument("inputs", nargs="+", help="WAV files or feature/posterior streams, "
                                              "decoded back to back with carried state")
    k.add_argument("--model")
    k.add_argument("--keyword", action="append")
    k.add_argument("--keywords", help="keyword list file")
    k.add_argument("--mode", choices=["keyword-only", "filler"], default="keyword-only")
    k.add_argument("--semantics", choices=["sum", "max"], default="sum")
    k.add_argument("--threshold-per-char", type=float, default=1.0)
    k.add_argument("--refractory", type=int, default=DEFAULT_REFRACTORY)
    k.add_argument("--chunk-frames", type=int, default=1024)
    k.add_argument("--out", required=True, help="detections CSV")
    k.add_argument("--scores", help="optional per-frame score stream")
    k.set_defaults(func=cmd_spot)

    e = sub.add_parser("eval", help="precision/recall sweep against a truth table")
    e.add_argument("truth")
    e.add_argument("--scores")
    e.add_argument("--detections")
    e.add_argument("--keyword", action="append")
    e.add_argument("--keywords")
    e.add_argument("--sweep", default="0:6:50", help="lo:hi:n per-character thresholds")
    e.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    e.add_argument("--refractory", type=int, default=DEFAULT_REFRACTORY)
    e.add_argument("--out", help="PR curve CSV")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ctckws {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StreamFormatError, ModelFormatError, FeatureError, KeywordError,
            AlphabetError, OSError) as exc:
        print(f"ctckws {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
