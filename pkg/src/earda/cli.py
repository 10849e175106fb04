"""Command-line entry point tying the pipeline together.

Subcommands: preprocess, synth, train, eval, ablate, spectrum. Options come
from a sectioned key-value config file overridden by flags (flag > file >
default). Report paths write machine-readable CSV/JSON plus a rendered PNG
figure. Exit codes: 0 success, 2 missing or unreadable inputs, 64 usage or
config errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dann
from . import datasets as ds
from . import eval as ev
from . import figures
from . import signal as sig

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_USAGE = 64

FORMAT_VERSION = 1
DATA_ROOT_ENV = "EARDA_DATA_ROOT"

COMMANDS = ("preprocess", "synth", "train", "eval", "ablate", "spectrum")

# every key a config file may set, per section
CONFIG_SCHEMA = {
    "data": {"motionsense_root", "hhar_root", "ucihar_root", "shoaib_root"},
    "preprocess": {"inputs", "corpus", "corpus_root", "filter",
                   "filter_cutoff_hz", "filter_order", "out"},
    "synth": {"seed", "per_class", "amplitude_multiplier",
              "interference_low_hz", "interference_high_hz", "noise_sigma", "out"},
    "train": {"source_windows", "target_windows", "lambda", "batch_size",
              "epochs", "learning_rate", "seed", "filter",
              "checkpoint_selection", "supervised_target", "no_da", "out"},
    "eval": {"checkpoint", "windows", "out"},
    "ablate": {"mode", "source_windows", "target_windows", "lambda",
               "batch_size", "epochs", "learning_rate", "seed", "out"},
    "spectrum": {"recording", "channel", "out"},
}


class UsageError(Exception):
    """Bad flags or config: maps to exit code 64."""


class MissingInputError(Exception):
    """Absent or unreadable input: maps to exit code 2."""


# ---------------------------------------------------------------------------
# config files: sectioned key = value text, round-trip stable
# ---------------------------------------------------------------------------

def parse_config(text: str) -> dict:
    """Parse the flat sectioned key-value format.

    Unknown sections or keys are rejected. The canonical form (one
    "key = value" per line, one blank line between sections) re-serializes
    byte-identically.
    """
    sections: dict = {}
    current_name = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in CONFIG_SCHEMA:
                raise UsageError(f"line {lineno}: unknown config section [{name}]")
            if name in sections:
                raise UsageError(f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current_name = name
            continue
        if "=" not in stripped:
            raise UsageError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        if current_name is None:
            raise UsageError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_SCHEMA[current_name]:
            raise UsageError(
                f"line {lineno}: unknown key {key!r} in section [{current_name}]"
            )
        if key in sections[current_name]:
            raise UsageError(f"line {lineno}: duplicate key {key!r}")
        sections[current_name][key] = value
    return sections


def serialize_config(sections: dict) -> str:
    chunks = []
    for name, body in sections.items():
        lines = [f"[{name}]"]
        lines.extend(f"{k} = {v}" for k, v in body.items())
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    return parse_config(path.read_text())


def _get(cfg: dict, section: str, key: str, default=None):
    return cfg.get(section, {}).get(key, default)


def _as_bool(value, what: str) -> bool:
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("1", "true", "yes", "on"):
        return True
    if str(value).lower() in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{what}: expected a boolean, got {value!r}")


def _as_int(value, what: str) -> int:
    try:
        return int(str(value))
    except ValueError:
        raise UsageError(f"{what}: expected an integer, got {value!r}") from None


def _as_float(value, what: str) -> float:
    try:
        return float(str(value))
    except ValueError:
        raise UsageError(f"{what}: expected a number, got {value!r}") from None


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _out_dir(opts) -> Path:
    out = Path(opts.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_window_file(path, what: str):
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"{what} not found: {path}")
    return ds.load_windows(path)


def _write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _train_config(opts) -> dann.TrainConfig:
    try:
        return dann.TrainConfig(
            domain_weight=_as_float(opts.get("lambda", 0.3), "lambda"),
            batch_size=_as_int(opts.get("batch_size", 32), "batch_size"),
            epochs=_as_int(opts.get("epochs", 200), "epochs"),
            learning_rate=_as_float(opts.get("learning_rate", 1e-3), "learning_rate"),
            seed=_as_int(opts.get("seed", 0), "seed"),
            target_filter_enabled=_as_bool(opts.get("filter", True), "filter"),
            checkpoint_selection=str(opts.get("checkpoint_selection", "best_target_val")),
            supervised_target=_as_bool(opts.get("supervised_target", True),
                                       "supervised_target"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _protocol_splits(source_windows, target_windows, seed: int):
    src = ds.split(source_windows, ds.SplitSpec(0.8, 0.1, 0.1, seed=seed))
    tgt = None
    if target_windows is not None:
        tgt = ds.split(target_windows, ds.SplitSpec(0.1, 0.1, 0.8, seed=seed))
    return src, tgt


def _window_counts(windows) -> dict:
    per_class = {a.name.lower(): 0 for a in ds.ActivityLabel}
    per_domain = {d.name.lower(): 0 for d in ds.DomainTag}
    per_head: dict = {}
    for w in windows:
        per_class[w.label.name.lower()] += 1
        per_domain[w.domain.name.lower()] += 1
        per_head[w.head.value] = per_head.get(w.head.value, 0) + 1
    return {"per_class": per_class, "per_domain": per_domain, "per_head": per_head}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_preprocess(opts) -> int:
    filter_on = _as_bool(opts.get("filter", True), "filter")
    spec = None
    if filter_on:
        spec = sig.FilterSpec(
            cutoff_hz=_as_float(opts.get("filter_cutoff_hz", 5.0), "filter_cutoff_hz"),
            order=_as_int(opts.get("filter_order", 4), "filter_order"),
            zero_phase=True,
        )
    recordings = []
    corpus = opts.get("corpus")
    if corpus:
        data_section = opts.get("_data", {})
        root = opts.get("corpus_root") or data_section.get(f"{str(corpus).lower()}_root")
        if not root:
            env_root = os.environ.get(DATA_ROOT_ENV)
            if not env_root:
                raise UsageError(
                    f"corpus {corpus!r} needs corpus_root or ${DATA_ROOT_ENV}"
                )
            root = str(Path(env_root) / str(corpus).lower())
        try:
            recordings.extend(ds.adapt_public(str(corpus), root))
        except ds.CorpusFormatError as exc:
            raise MissingInputError(str(exc)) from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    inputs = opts.get("inputs") or []
    if isinstance(inputs, str):
        inputs = [p for p in inputs.split(",") if p.strip()]
    for item in inputs:
        p = Path(str(item).strip())
        if p.is_dir():
            files = sorted(p.glob("*.csv"))
            if not files:
                raise MissingInputError(f"no canonical CSV files in {p}")
            recordings.extend(ds.load_canonical(f) for f in files)
        elif p.is_file():
            recordings.append(ds.load_canonical(p))
        else:
            raise MissingInputError(f"input not found: {p}")
    if not recordings:
        raise UsageError("preprocess needs canonical inputs or a corpus name")

    windows = []
    for rec in recordings:
        windows.extend(ds.preprocess_recording(rec, filter_spec=spec))
    out = _out_dir(opts)
    ds.save_windows(windows, out / "windows.csv")
    manifest = {
        "format_version": FORMAT_VERSION,
        "windows": len(windows),
        **_window_counts(windows),
        "window_length": ds.WINDOW_LENGTH,
        "rate_hz": ds.TARGET_RATE_HZ,
        "filter": {
            "enabled": filter_on,
            "cutoff_hz": spec.cutoff_hz if spec else None,
            "order": spec.order if spec else None,
            "zero_phase": True if spec else None,
        },
        "recordings": len(recordings),
    }
    _write_json(manifest, out / "manifest.json")
    print(f"preprocess: {len(recordings)} recordings -> {len(windows)} windows -> {out}")
    return EXIT_OK


def cmd_synth(opts) -> int:
    seed = _as_int(opts.get("seed", 0), "seed")
    try:
        gen = ds.SynthConfig(
            per_class=_as_int(opts.get("per_class", 50), "per_class"),
            source_amplitude_multiplier=_as_float(
                opts.get("amplitude_multiplier", 2.0), "amplitude_multiplier"),
            interference_band_hz=(
                _as_float(opts.get("interference_low_hz", 6.0), "interference_low_hz"),
                _as_float(opts.get("interference_high_hz", 10.0), "interference_high_hz"),
            ),
            noise_sigma=_as_float(opts.get("noise_sigma", 0.03), "noise_sigma"),
        )
    except ds.ConfigError as exc:
        raise UsageError(str(exc)) from None
    source, target = ds.synth_generate(gen, seed=seed)
    out = _out_dir(opts)
    ds.save_windows(source, out / "source_windows.csv")
    ds.save_windows(target, out / "target_windows.csv")
    ds.save_canonical(ds.synth_recording(source, location="pocket"),
                      out / "source_recording.csv")
    ds.save_canonical(ds.synth_recording(target, location="head"),
                      out / "target_recording.csv")
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "generator": {
            "per_class": gen.per_class,
            "source_amplitude_multiplier": gen.source_amplitude_multiplier,
            "interference_band_hz": list(gen.interference_band_hz),
            "noise_sigma": gen.noise_sigma,
            "base_freq_hz": {a.name.lower(): f for a, f in gen.base_freq_hz.items()},
            "base_amplitude": {a.name.lower(): v for a, v in gen.base_amplitude.items()},
        },
        "source": _window_counts(source),
        "target": _window_counts(target),
    }
    _write_json(manifest, out / "manifest.json")
    print(f"synth: {len(source)} source + {len(target)} target windows -> {out}")
    return EXIT_OK


def cmd_train(opts) -> int:
    no_da = _as_bool(opts.get("no_da", False), "no_da")
    cfg = _train_config(opts)
    if not opts.get("source_windows"):
        raise UsageError("train needs source_windows")
    source = _load_window_file(opts["source_windows"], "source window file")
    target = None
    if not no_da:
        if not opts.get("target_windows"):
            raise UsageError("train needs target_windows (or no_da)")
        target = _load_window_file(opts["target_windows"], "target window file")
    src_splits, tgt_splits = _protocol_splits(source, target, cfg.seed)

    if no_da:
        model, report = dann.train_source_only(src_splits, cfg)
    else:
        model, report = dann.train_dann(src_splits, tgt_splits, cfg)

    out = _out_dir(opts)
    dann.save_checkpoint(model, out / "model.ckpt", seed=cfg.seed)
    _write_json(report.to_dict(), out / "train_report.json")
    figures.training_curves(report.to_dict(), out / "training_curves.png")
    ds.save_windows(src_splits[2], out / "source_test_windows.csv")
    if tgt_splits is not None:
        ds.save_windows(tgt_splits[2], out / "target_test_windows.csv")
    last = report.epochs[-1]
    parts = [f"epochs={len(report.epochs)}", f"selected={report.selected_epoch}",
             f"label_loss={last.label_loss:.4f}", f"total={last.total:.4f}"]
    if last.source_val_accuracy is not None:
        parts.append(f"source_val={last.source_val_accuracy:.3f}")
    if last.target_val_accuracy is not None:
        parts.append(f"target_val={last.target_val_accuracy:.3f}")
    print("train: " + " ".join(parts))
    return EXIT_OK


def cmd_eval(opts) -> int:
    if not opts.get("checkpoint"):
        raise UsageError("eval needs a checkpoint path")
    if not opts.get("windows"):
        raise UsageError("eval needs a windows file")
    ckpt = Path(opts["checkpoint"])
    if not ckpt.is_file():
        raise MissingInputError(f"checkpoint not found: {ckpt}")
    try:
        model = dann.load_checkpoint(ckpt)
    except (dann.CheckpointVersionError, dann.CheckpointCorruptError) as exc:
        raise MissingInputError(str(exc)) from None
    windows = _load_window_file(opts["windows"], "windows file")
    rep = ev.evaluate_model(model, windows)
    out = _out_dir(opts)
    _write_json(rep.to_dict(), out / "eval_report.json")
    (out / "eval_report.txt").write_text(ev.render_table(rep))
    figures.confusion_figure(rep.confusion, out / "confusion_matrix.png")
    print(f"eval: accuracy={rep.overall_accuracy:.4f} macro_f1={rep.macro_f1:.4f} "
          f"windows={rep.total}")
    return EXIT_OK


def cmd_ablate(opts) -> int:
    mode = str(opts.get("mode", "")).lower()
    if mode not in ("da", "filter"):
        raise UsageError(f"ablate mode must be 'da' or 'filter', got {mode!r}")
    cfg = _train_config(opts)
    if not opts.get("source_windows") or not opts.get("target_windows"):
        raise UsageError("ablate needs source_windows and target_windows")
    source = _load_window_file(opts["source_windows"], "source window file")
    target = _load_window_file(opts["target_windows"], "target window file")
    src_splits, tgt_splits = _protocol_splits(source, target, cfg.seed)
    out = _out_dir(opts)
    if mode == "da":
        comp = ev.ablate_da(src_splits, tgt_splits, cfg)
        _write_json(comp.to_dict(), out / "ablate_da.json")
        figures.comparison_figure(
            comp.with_da.confusion, comp.without_da.confusion, out / "ablate_da.png",
        )
        print(f"ablate da: with={comp.with_da.overall_accuracy:.4f} "
              f"without={comp.without_da.overall_accuracy:.4f} "
              f"gap={comp.accuracy_gap:+.4f}")
    else:
        comp = ev.ablate_filter(src_splits, tgt_splits, cfg)
        _write_json(comp.to_dict(), out / "ablate_filter.json")
        figures.filter_comparison_figure(comp.to_dict(), out / "ablate_filter.png")
        print(f"ablate filter: filtered={comp.filtered.overall_accuracy:.4f} "
              f"unfiltered={comp.unfiltered.overall_accuracy:.4f} "
              f"delta={comp.overall_delta:+.4f}")
    return EXIT_OK


def cmd_spectrum(opts) -> int:
    if not opts.get("recording"):
        raise UsageError("spectrum needs a recording path")
    channel = str(opts.get("channel", "gyro")).lower()
    if channel not in ("accel", "gyro"):
        raise UsageError(f"channel must be 'accel' or 'gyro', got {channel!r}")
    path = Path(opts["recording"])
    if not path.is_file():
        raise MissingInputError(f"recording not found: {path}")
    rec = ds.load_canonical(path)
    axes = rec.accel if channel == "accel" else rec.gyro
    series = sig.magnitude(axes[:, 0], axes[:, 1], axes[:, 2])
    sp = sig.spectrum(series, rec.rate_hz)
    out = _out_dir(opts)
    csv_path = out / "spectrum.csv"
    with open(csv_path, "w") as fh:
        fh.write("freq_hz,magnitude\n")
        for f, m in zip(sp.freqs, sp.magnitudes):
            fh.write(f"{repr(float(f))},{repr(float(m))}\n")
    figures.spectrum_figure(sp.freqs, sp.magnitudes, out / "spectrum.png",
                            title=f"{channel} magnitude spectrum")
    peak = sp.freqs[int(np.argmax(sp.magnitudes))]
    print(f"spectrum: {len(sp.freqs)} bins, peak at {peak:.2f} Hz -> {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="earda",
                     description="Domain-adaptive activity recognition pipeline")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name, add_help=True)
        p.error = parser.error
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        if name == "preprocess":
            p.add_argument("inputs", nargs="*", metavar="RECORDING")
            p.add_argument("--no-filter", action="store_true")
            p.add_argument("--corpus")
            p.add_argument("--corpus-root")
        elif name == "synth":
            p.add_argument("--per-class", type=int)
        elif name == "train":
            p.add_argument("source_windows", nargs="?")
            p.add_argument("target_windows", nargs="?")
            p.add_argument("--no-da", action="store_true")
            p.add_argument("--no-filter", action="store_true")
            p.add_argument("--epochs", type=int)
            p.add_argument("--lambda", dest="domain_weight", type=float)
        elif name == "eval":
            p.add_argument("checkpoint", nargs="?")
            p.add_argument("windows", nargs="?")
        elif name == "ablate":
            p.add_argument("source_windows", nargs="?")
            p.add_argument("target_windows", nargs="?")
            p.add_argument("--mode", choices=["da", "filter"])
            p.add_argument("--epochs", type=int)
            p.add_argument("--lambda", dest="domain_weight", type=float)
        elif name == "spectrum":
            p.add_argument("recording", nargs="?")
            p.add_argument("--channel", choices=["accel", "gyro"])
    return parser


def _merge_options(command: str, args: argparse.Namespace) -> dict:
    file_cfg = load_config(args.config) if args.config else {}
    opts = dict(file_cfg.get(command, {}))
    if command in ("preprocess",) and file_cfg.get("data"):
        opts.setdefault("_data", file_cfg["data"])

    def override(key, value):
        if value is not None and value is not False:
            opts[key] = value

    override("seed", args.seed)
    override("out", args.out)
    if command == "preprocess":
        if args.inputs:
            existing = opts.get("inputs", "")
            listed = [p for p in str(existing).split(",") if p.strip()]
            opts["inputs"] = listed + list(args.inputs)
        if args.no_filter:
            opts["filter"] = "off"
        override("corpus", args.corpus)
        override("corpus_root", args.corpus_root)
    elif command == "synth":
        override("per_class", args.per_class)
    elif command == "train":
        override("source_windows", args.source_windows)
        override("target_windows", args.target_windows)
        if args.no_da:
            opts["no_da"] = "on"
        if args.no_filter:
            opts["filter"] = "off"
        override("epochs", args.epochs)
        override("lambda", args.domain_weight)
    elif command == "eval":
        override("checkpoint", args.checkpoint)
        override("windows", args.windows)
    elif command == "ablate":
        override("source_windows", args.source_windows)
        override("target_windows", args.target_windows)
        override("mode", args.mode)
        override("epochs", args.epochs)
        override("lambda", args.domain_weight)
    elif command == "spectrum":
        override("recording", args.recording)
        override("channel", args.channel)
    return opts


_DISPATCH = {
    "preprocess": cmd_preprocess,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "spectrum": cmd_spectrum,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand")
        opts = _merge_options(args.command, args)
        return _DISPATCH[args.command](opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ds.SchemaError, ds.DataError, ds.LabelError, ds.CorpusFormatError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT


if __name__ == "__main__":
    sys.exit(main())
