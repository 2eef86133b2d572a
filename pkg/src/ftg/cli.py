"""Command line interface.

Subcommands: train, generate, evaluate, corpus, midi convert/inspect, serve.
A --config file (TOML or JSON, flat or sectioned per subcommand) supplies
defaults; explicit flags win. Failures print one machine-readable JSON object
to stderr and exit nonzero:

    0  success
    2  usage or invalid input
    3  infeasible constraint specification
    4  I/O or file-format failure
    5  internal error
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from ftg.checkpoint import load_checkpoint, save_checkpoint
from ftg.corpus import (CorpusSpec, examples_from_pieces, load_corpus,
                        save_corpus, synth_corpus)
from ftg.denoisers import ToyDenoiser
from ftg.errors import (CheckpointError, InfeasibleConstraintError,
                        InvalidInputError, LengthMismatchError, MetricError,
                        MidiParseError, ScheduleError, UnsupportedMeterError)
from ftg.guidance import Conditions, GuidanceConfig, SamplerPlan, sample
from ftg.metrics import (FEATURES, chord_similarity_many, moa_many,
                         out_of_key_rate, rhythm_match_rate)
from ftg.midi_io import emit_midi, parse_midi, quantize, select_tracks
from ftg.pianoroll import piano_roll_from_json
from ftg.schedule import linear_schedule
from ftg.theory import (ChordProgression, ColumnSpec, KeySequence,
                        KeySignature, rhythm_controls_from_pattern)
from ftg.training import TrainConfig, train

CHORD_UNIT_STEPS = {"step": 1, "beat": 4, "measure": 16}


def _load_config(path: str) -> dict:
    blob = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(blob.decode("utf-8"))
    if path.endswith(".json"):
        return json.loads(blob)
    raise InvalidInputError(f"config must be .toml or .json, got {path!r}")


def _fail(code: int, error: str, message: str, **extra) -> int:
    payload = {"error": error, "message": message}
    payload.update(extra)
    print(json.dumps(payload), file=sys.stderr)
    return code


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------- train


def cmd_train(args: argparse.Namespace) -> int:
    if args.corpus:
        examples = load_corpus(args.corpus)
    else:
        examples = examples_from_pieces(
            synth_corpus(CorpusSpec(pieces=args.pieces, seed=args.corpus_seed)))
    denoiser = ToyDenoiser(width=args.width, temb_dim=args.temb_dim,
                           seed=args.seed)
    sched = linear_schedule(T=args.timesteps)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         lr=args.lr, weight_decay=args.weight_decay,
                         p_drop=args.p_drop)
    report = train(denoiser, examples, config, sched, seed=args.seed)

    out = Path(args.out)
    save_checkpoint(out, denoiser, sched, meta={
        "epochs": config.epochs, "examples": len(examples),
        "final_loss": report.final_epoch_loss})
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(report.epoch_losses, start=1):
            writer.writerow([i, f"{loss:.6f}"])
    _write_json(None, {
        "checkpoint": str(out), "loss_csv": str(loss_csv),
        "examples": len(examples),
        "first_epoch_loss": report.first_epoch_loss,
        "final_epoch_loss": report.final_epoch_loss})
    return 0


# ------------------------------------------------------------- generate


def cmd_generate(args: argparse.Namespace) -> int:
    if args.checkpoint:
        denoiser, sched, _ = load_checkpoint(args.checkpoint)
    else:
        print("no checkpoint given; sampling from a freshly initialized toy "
              "model", file=sys.stderr)
        denoiser = ToyDenoiser(width=8, temb_dim=16, seed=0)
        sched = linear_schedule(T=100)

    chords = None
    if args.chords:
        symbols = args.chords.split()
        steps = CHORD_UNIT_STEPS[args.chords_unit]
        if len(symbols) * steps != args.length:
            raise InvalidInputError(
                f"{len(symbols)} chord symbols at unit {args.chords_unit!r} "
                f"cover {len(symbols) * steps} steps, need {args.length}")
        chords = ChordProgression.from_symbols(symbols, steps)
    rhythm = spec = None
    if args.rhythm:
        rhythm, spec = rhythm_controls_from_pattern(args.rhythm, args.length)
    if args.rhythm_spec:
        rules = json.loads(Path(args.rhythm_spec).read_text())
        if not isinstance(rules, list) or len(rules) != args.length:
            raise InvalidInputError(
                f"rhythm spec file must hold one rule per step ({args.length})")
        spec = tuple(ColumnSpec(rule["kind"], rule.get("n", 1))
                     for rule in rules)
    keys = None
    if args.key:
        keys = KeySequence.constant(KeySignature.parse(args.key), args.length)
    melody = None
    if args.melody_json:
        melody = piano_roll_from_json(json.loads(Path(args.melody_json).read_text()))

    conditions = Conditions(length=args.length, chords=chords, rhythm=rhythm,
                            rhythm_spec=spec, melody=melody, keys=keys)
    guidance = GuidanceConfig(w=args.w, harmonic=not args.no_harmonic,
                              rhythm=not args.no_rhythm, kappa=args.kappa)
    plan = SamplerPlan(mode=args.mode, num_steps=args.steps, eta=args.eta)

    start = time.perf_counter()
    result = sample(denoiser, conditions, sched, guidance, plan, seed=args.seed)
    wall_ms = (time.perf_counter() - start) * 1000.0

    Path(args.out).write_bytes(emit_midi(melody, result.roll))
    audit = {
        "out": args.out,
        "out_of_key_rate": out_of_key_rate(result.roll, result.keys),
        "rhythm_match_rate": (rhythm_match_rate(result.roll, rhythm)
                              if rhythm is not None else None),
        "wall_ms": wall_ms,
        "seed": args.seed,
        "keys": [k.symbol for k in result.keys.keys],
        "warnings": list(result.warnings),
    }
    _write_json(args.audit_out, audit)
    return 0


# ------------------------------------------------------------- evaluate


def _load_rolls(directory: str) -> list[tuple[str, object]]:
    paths = sorted(Path(directory).glob("*.mid")) + sorted(Path(directory).glob("*.midi"))
    if not paths:
        raise InvalidInputError(f"no MIDI files in {directory!r}")
    rolls = []
    for path in paths:
        tracks = quantize(parse_midi(path.read_bytes()))
        _, accomp = select_tracks(tracks)
        rolls.append((path.name, accomp))
    return rolls


def cmd_evaluate(args: argparse.Namespace) -> int:
    gen = _load_rolls(args.gen)
    gt = _load_rolls(args.gt)
    n = min(len(gen), len(gt))
    if len(gen) != len(gt):
        print(f"directory sizes differ ({len(gen)} vs {len(gt)}); "
              f"evaluating first {n} pairs of each", file=sys.stderr)
    pairs = [(g, t) for (_, g), (_, t) in zip(gen[:n], gt[:n])]

    report = {"pairs": n,
              "chord_similarity": chord_similarity_many(
                  pairs, args.bars_per_segment).to_json()}
    for feature in FEATURES:
        report[f"moa_{feature}"] = moa_many(pairs, feature,
                                            args.bars_per_segment)
    _write_json(args.out, report)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value", "ci95"])
            sim = report["chord_similarity"]
            writer.writerow(["chord_similarity", f"{sim['mean']:.6f}",
                             f"{sim['ci95']:.6f}"])
            for feature in FEATURES:
                writer.writerow([f"moa_{feature}",
                                 f"{report[f'moa_{feature}']:.6f}", ""])
    return 0


# --------------------------------------------------------------- corpus


def cmd_corpus(args: argparse.Namespace) -> int:
    spec = CorpusSpec(pieces=args.pieces, measures=args.measures,
                      seed=args.seed)
    pieces = synth_corpus(spec)
    save_corpus(pieces, args.out, spec=spec)
    _write_json(None, {"out": args.out, "pieces": len(pieces)})
    return 0


# ----------------------------------------------------------------- midi


def cmd_midi_convert(args: argparse.Namespace) -> int:
    tracks = quantize(parse_midi(Path(args.input).read_bytes()))
    melody, accomp = select_tracks(tracks)
    Path(args.out).write_bytes(emit_midi(melody, accomp, tempo=args.tempo))
    _write_json(None, {"out": args.out, "tracks": [name for name, _ in tracks]})
    return 0


def cmd_midi_inspect(args: argparse.Namespace) -> int:
    doc = parse_midi(Path(args.input).read_bytes())
    tracks = quantize(doc)
    info = {
        "ticks_per_quarter": doc.ticks_per_quarter,
        "tempo_events": len(doc.tempo_events),
        "time_signatures": len(doc.time_signatures),
        "tracks": [
            {"name": name,
             "length_steps": roll.length,
             "onsets": int(roll.onsets().sum()),
             "pitch_range": ([int(p) for p in
                              np.nonzero(roll.data.any(axis=(0, 1)))[0][[0, -1]]]
                             if roll.data.any() else None)}
            for name, roll in tracks],
    }
    _write_json(None, info)
    return 0


# ---------------------------------------------------------------- serve


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from ftg.service import create_app

    app = create_app(checkpoint_dir=args.checkpoint_dir)
    if args.init_toy:
        app.state.service.set_model(
            "toy-init", ToyDenoiser(width=8, temb_dim=16, seed=0),
            linear_schedule(T=100))
    elif args.preload:
        app.state.service.load(args.preload)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --------------------------------------------------------------- parser


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="ftg", description="constrained-diffusion accompaniment engine")
    parser.add_argument("--config", help="TOML or JSON file with defaults")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    p = subparsers["train"] = sub.add_parser(
        "train", help="train the toy denoiser and write a checkpoint")
    p.add_argument("--corpus", help="corpus directory (default: synthesize)")
    p.add_argument("--pieces", type=int, default=64)
    p.add_argument("--corpus-seed", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--p-drop", type=float, default=0.5)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--temb-dim", type=int, default=16)
    p.add_argument("--timesteps", type=int, default=100,
                   help="diffusion schedule length T")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.ftgc")
    p.add_argument("--loss-csv")
    p.set_defaults(func=cmd_train)

    p = subparsers["generate"] = sub.add_parser(
        "generate", help="sample an accompaniment and write MIDI + audit")
    p.add_argument("--checkpoint")
    p.add_argument("--chords", help='space-separated symbols, e.g. "C F G C"')
    p.add_argument("--chords-unit", choices=sorted(CHORD_UNIT_STEPS),
                   default="measure")
    p.add_argument("--key", help="key symbol, e.g. C or Am (default: derive)")
    p.add_argument("--rhythm",
                   help="pattern, x=onset required . =unconstrained o=none")
    p.add_argument("--rhythm-spec",
                   help='JSON file: per-step [{"kind": "exactly", "n": 2}, ...]')
    p.add_argument("--melody-json", help="piano-roll JSON file to condition on")
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--mode", choices=["ddpm", "ddim"], default="ddim")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--w", type=float, default=None,
                   help="guidance weight (default: auto)")
    p.add_argument("--kappa", type=float, default=1e-6)
    p.add_argument("--no-harmonic", action="store_true")
    p.add_argument("--no-rhythm", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out.mid")
    p.add_argument("--audit-out", help="write audit JSON here (default stdout)")
    p.set_defaults(func=cmd_generate)

    p = subparsers["evaluate"] = sub.add_parser(
        "evaluate", help="compare generated vs ground-truth MIDI directories")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--bars-per-segment", type=int, default=2)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="also write metric CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = subparsers["corpus"] = sub.add_parser(
        "corpus", help="synthesize a deterministic training corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--pieces", type=int, default=64)
    p.add_argument("--measures", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corpus)

    p = subparsers["midi"] = sub.add_parser("midi", help="MIDI utilities")
    midi_sub = p.add_subparsers(dest="midi_command", required=True)
    q = midi_sub.add_parser("convert",
                            help="re-emit a file quantized to the 16th grid")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--tempo", type=int, default=120)
    q.set_defaults(func=cmd_midi_convert)
    q = midi_sub.add_parser("inspect", help="print quantized track summary")
    q.add_argument("--in", dest="input", required=True)
    q.set_defaults(func=cmd_midi_inspect)

    p = subparsers["serve"] = sub.add_parser(
        "serve", help="run the HTTP generation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--checkpoint-dir",
                   help="defaults to $FTG_CHECKPOINT_DIR or ./checkpoints")
    p.add_argument("--preload", help="checkpoint id to load at startup")
    p.add_argument("--init-toy", action="store_true",
                   help="start with a freshly initialized toy model loaded")
    p.set_defaults(func=cmd_serve)

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, rest = pre.parse_known_args(argv)
        if known.config:
            config = _load_config(known.config)
            command = next((tok for tok in rest if not tok.startswith("-")), None)
            if command in subparsers:
                section = config.get(command, config)
                if isinstance(section, dict):
                    subparsers[command].set_defaults(
                        **{k.replace("-", "_"): v for k, v in section.items()
                           if not isinstance(v, dict)})
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InfeasibleConstraintError as exc:
        return _fail(3, "infeasible_constraint", str(exc), columns=exc.columns,
                     required=exc.required, candidates=exc.candidates)
    except (MidiParseError, UnsupportedMeterError, CheckpointError,
            OSError) as exc:
        return _fail(4, "io_error", f"{type(exc).__name__}: {exc}")
    except (InvalidInputError, LengthMismatchError, ScheduleError, MetricError,
            ValueError, json.JSONDecodeError) as exc:
        return _fail(2, "invalid_input", f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # noqa: BLE001 - last-resort operator surface
        return _fail(5, "internal_error", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
