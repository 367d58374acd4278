"""Command-line entry point: ``eeg-bilstm <command> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_open, sha256_file
from .config import load_config, stage_seed, synth_config, train_config
from .core import (
    Segment,
    bandpass,
    detect_bad_channels,
    downsample,
    drop_channels,
    filter as filter_recording,
    read_recording_csv,
    rereference_common_average,
    segment,
    write_recording_csv,
)
from .errors import ConfigError, DataError, EEGError, NoPeak
from .features import de_sequence, detect_p300, parse_bands, read_feature_sequence, write_feature_sequence
from .geometry import GLOBAL_PAIRS, build_adjacency, load_layout, standard_62_layout, write_adjacency
from .nn import BiLSTMClassifier, evaluate, load_checkpoint, save_checkpoint, train
from .synth import generate_erp_epoch, generate_recording, make_dataset, read_labels, write_labels

log = logging.getLogger("eeg_bilstm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.original = exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- output helpers --------------------------------------------------------------

@contextmanager
def staged_dir(out_dir):
    """Write into a hidden staging directory, then move files into ``out_dir``."""
    out = Path(out_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        yield tmp
        for f in sorted(tmp.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_json(obj, path):
    with atomic_open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def _digests(paths):
    return {str(p): sha256_file(p) for p in sorted(map(str, paths)) if os.path.isfile(p)}


@contextmanager
def stage(name):
    """Tag any failure inside the block with the stage name."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


class Manifest:
    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.timings = {}
        self.outputs = []

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            with stage(name):
                yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def write(self, path):
        _write_json({
            "command": self.command,
            "config": self.cfg,
            "seed": self.cfg["seed"],
            "version": __version__,
            "timings_s": self.timings,
            "outputs": _digests(self.outputs),
        }, path)


# -- stages ----------------------------------------------------------------------

def stage_generate(cfg, out_dir):
    scfg = synth_config(cfg)
    data = make_dataset(scfg)
    n_per = scfg.segments_per_class
    written = []
    with staged_dir(out_dir) as tmp:
        recordings = []
        for k, prof in enumerate(scfg.profiles):
            rec = generate_recording(scfg, prof.class_id)
            name = f"class{prof.class_id}"
            write_recording_csv(rec, tmp / f"{name}.csv", tmp / f"{name}.markers")
            recordings.append({"file": f"{name}.csv", "markers": f"{name}.markers",
                               "class_id": prof.class_id, "label": prof.label,
                               "segments": n_per})
            written += [f"{name}.csv", f"{name}.markers"]
        labels = np.repeat([p.class_id for p in scfg.profiles], n_per)
        write_labels(labels, tmp / "labels.csv")
        _write_split(data.train_index, data.val_index, tmp / "split.csv")
        _write_json({"rate": scfg.rate, "window_s": scfg.window_s, "recordings": recordings,
                     "channels": [f"CH{c + 1}" for c in range(scfg.channels)]},
                    tmp / "dataset.json")
        written += ["labels.csv", "split.csv", "dataset.json"]
    return [Path(out_dir) / f for f in written]


def _write_split(train_idx, val_idx, path):
    subset = {int(i): "train" for i in train_idx}
    subset.update({int(i): "val" for i in val_idx})
    with atomic_open(path) as fh:
        fh.write("segment_index,subset\n")
        for i in sorted(subset):
            fh.write(f"{i},{subset[i]}\n")


def _read_split(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "segment_index,subset":
            raise DataError(f"{path}: header must be 'segment_index,subset'")
        for line in fh:
            if line.strip():
                try:
                    i, s = line.strip().split(",")
                    out[int(i)] = s
                except ValueError:
                    raise DataError(f"{path}: malformed row {line.strip()!r}") from None
    return out


def _copy_meta(src, dst, names=("labels.csv", "split.csv")):
    for n in names:
        if (Path(src) / n).exists():
            shutil.copyfile(Path(src) / n, Path(dst) / n)


def stage_preprocess(cfg, data_dir, out_dir):
    data_dir = Path(data_dir)
    meta = _read_json(data_dir / "dataset.json")
    p = cfg["preprocess"]
    recs = []
    for r in meta["recordings"]:
        rec = read_recording_csv(data_dir / r["file"], meta["rate"], data_dir / r["markers"])
        if p["target_rate"] is not None:
            rec = downsample(rec, float(p["target_rate"]))
        recs.append(rec)
    bad = set()
    for rec in recs:
        bad.update(lab.name for lab in detect_bad_channels(rec, float(p["var_factor"]),
                                                           float(p["flat_eps"])))
    if bad:
        log.info("dropping bad channels: %s", ", ".join(sorted(bad)))
    spec = bandpass(float(p["low_hz"]), float(p["high_hz"]), int(p["order"]))
    out_meta = dict(meta, recordings=[], bad_channels=sorted(bad))
    written = []
    with staged_dir(out_dir) as tmp:
        for r, rec in zip(meta["recordings"], recs):
            rec = drop_channels(rec, bad)
            if rec.n_channels < 2:
                raise DataError("fewer than 2 channels left after bad-channel rejection")
            rec = filter_recording(rereference_common_average(rec), spec)
            write_recording_csv(rec, tmp / r["file"], tmp / r["markers"])
            out_meta["recordings"].append(r)
            out_meta["rate"] = rec.rate
            out_meta["channels"] = rec.channel_names
            written += [r["file"], r["markers"]]
        _copy_meta(data_dir, tmp)
        _write_json(out_meta, tmp / "dataset.json")
        written += ["labels.csv", "split.csv", "dataset.json"]
    return [Path(out_dir) / f for f in written]


def stage_features(cfg, data_dir, out_dir):
    data_dir = Path(data_dir)
    meta = _read_json(data_dir / "dataset.json")
    f = cfg["features"]
    bands = parse_bands(f["bands"])
    steps = int(f["steps"])
    labels = read_labels(data_dir / "labels.csv")
    written = []
    with staged_dir(out_dir) as tmp:
        idx = 0
        shape = None
        for r in meta["recordings"]:
            rec = read_recording_csv(data_dir / r["file"], meta["rate"])
            segs = segment(rec, float(f["window_s"]), r["class_id"])
            if len(segs) < r["segments"]:
                raise DataError(f"{r['file']}: {len(segs)} windows, expected {r['segments']}")
            for seg in segs[: r["segments"]]:
                fs = de_sequence(seg, bands, steps)
                name = f"seq_{idx:05d}.csv"
                write_feature_sequence(fs, tmp / name)
                written.append(name)
                shape = fs.values.shape
                idx += 1
        if idx != len(labels):
            raise DataError(f"{idx} segments but {len(labels)} labels")
        _copy_meta(data_dir, tmp)
        _write_json({"count": idx, "steps": shape[0], "channels": shape[1], "bands":
                     [b.name for b in bands], "rate": meta["rate"],
                     "window_s": float(f["window_s"])}, tmp / "features.json")
        written += ["labels.csv", "split.csv", "features.json"]
    return [Path(out_dir) / n for n in written]


def load_feature_dir(feat_dir, subset="all"):
    feat_dir = Path(feat_dir)
    meta = _read_json(feat_dir / "features.json")
    labels = read_labels(feat_dir / "labels.csv")
    split = _read_split(feat_dir / "split.csv") if (feat_dir / "split.csv").exists() else {}
    idx = [i for i in range(meta["count"]) if subset == "all" or split.get(i) == subset]
    if not idx:
        raise DataError(f"no sequences in subset {subset!r}")
    X = np.stack([read_feature_sequence(feat_dir / f"seq_{i:05d}.csv").flat() for i in idx])
    return X, labels[idx]


def stage_adjacency(cfg, out_path):
    a = cfg["adjacency"]
    layout = standard_62_layout() if a["montage"] in ("standard62", "standard_62") \
        else load_layout(a["montage"])
    adj = build_adjacency(layout, a["k"], GLOBAL_PAIRS if a["global_pairs"] else ())
    write_adjacency(adj, out_path)
    return [Path(out_path)]


def stage_train(cfg, feat_dir, out_dir):
    tcfg = train_config(cfg)
    arch = cfg["train"]["arch"]
    Xtr, ytr = load_feature_dir(feat_dir, "train")
    Xva, yva = load_feature_dir(feat_dir, "val")
    clf, metrics = train(Xtr, arch, tcfg, labels=ytr, validation=(Xva, yva))
    out = Path(out_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    extra = {"arch": clf.model_.arch, "best_epoch": clf.best_epoch_,
             "epochs": tcfg.epochs, "n_parameters": clf.n_parameters()}
    with staged_dir(out) as tmp:
        save_checkpoint(clf.model_, tmp / "model.nlstm")
        metrics.write(tmp / "metrics.txt", extra)
        metrics.write_loss_history(tmp / "loss_history.csv")
    return metrics, extra, [out / "model.nlstm", out / "metrics.txt", out / "loss_history.csv"]


def stage_eval(model_path, feat_dir, subset="val"):
    model = load_checkpoint(model_path)
    X, y = load_feature_dir(feat_dir, subset)
    return evaluate(model, X, y)


# -- commands --------------------------------------------------------------------

def _overrides(args, mapping):
    return {key: getattr(args, attr, None) for attr, key in mapping.items()}


COMMON = {"seed": "seed", "threads": "threads"}
SYNTH_FLAGS = {"classes": "synth.classes", "segments": "synth.segments",
               "channels": "synth.channels", "rate": "synth.rate",
               "gain_ratio": "synth.gain_ratio", "noise_floor": "synth.noise_floor"}
PRE_FLAGS = {"target_rate": "preprocess.target_rate", "low_hz": "preprocess.low_hz",
             "high_hz": "preprocess.high_hz", "order": "preprocess.order",
             "var_factor": "preprocess.var_factor", "flat_eps": "preprocess.flat_eps"}
FEAT_FLAGS = {"bands": "features.bands", "steps": "features.steps", "window": "features.window_s"}
ADJ_FLAGS = {"montage": "adjacency.montage", "k": "adjacency.k"}
TRAIN_FLAGS = {"arch": "train.arch", "epochs": "train.epochs", "lr": "train.learning_rate",
               "batch_size": "train.batch_size", "dropout": "train.dropout_rate",
               "hidden": "train.hidden_size", "dense": "train.dense_units",
               "clip_norm": "train.clip_norm", "split": "train.split"}


def _config(args, *flag_maps):
    over = _overrides(args, COMMON)
    for m in flag_maps:
        over.update(_overrides(args, m))
    if getattr(args, "no_pairs", False):
        over["adjacency.global_pairs"] = False
    return load_config(args.config, over)


def cmd_generate(args):
    cfg = _config(args, SYNTH_FLAGS, {"split": "train.split"})
    man = Manifest("generate", cfg)
    with man.stage("generate"):
        man.outputs += stage_generate(cfg, args.out)
    man.write(Path(args.out) / "manifest.json")
    print(f"wrote {cfg['synth']['classes'] * cfg['synth']['segments']} labelled segments to {args.out}")


def cmd_preprocess(args):
    cfg = _config(args, PRE_FLAGS)
    man = Manifest("preprocess", cfg)
    with man.stage("preprocess"):
        man.outputs += stage_preprocess(cfg, args.data, args.out)
    man.write(Path(args.out) / "manifest.json")


def cmd_features(args):
    cfg = _config(args, FEAT_FLAGS)
    man = Manifest("features", cfg)
    with man.stage("features"):
        man.outputs += stage_features(cfg, args.data, args.out)
    man.write(Path(args.out) / "manifest.json")


def cmd_adjacency(args):
    cfg = _config(args, ADJ_FLAGS)
    man = Manifest("adjacency", cfg)
    with man.stage("adjacency"):
        man.outputs += stage_adjacency(cfg, args.out)
    man.write(Path(str(args.out) + ".manifest.json"))


def cmd_train(args):
    cfg = _config(args, TRAIN_FLAGS)
    man = Manifest("train", cfg)
    with man.stage("train"):
        metrics, extra, outs = stage_train(cfg, args.features, args.out)
        man.outputs += outs
    man.write(Path(args.out) / "manifest.json")
    sys.stdout.write(metrics.to_text(extra))


def cmd_eval(args):
    with stage("eval"):
        metrics = stage_eval(args.model, args.features, args.subset)
        if args.out:
            metrics.write(args.out)
    sys.stdout.write(metrics.to_text())


def cmd_erp(args):
    lo, hi = args.window
    rows = []
    with stage("erp"):
        if args.synthetic:
            ep = generate_erp_epoch(args.rate, args.pre_ms, args.post_ms, args.latency,
                                    args.amplitude, args.noise, seed=args.seed or 0)
            epochs = [("synthetic", ep.segment, ep.stimulus_index)]
        else:
            if not args.recording or not args.markers:
                raise ConfigError("--recording and --markers are required without --synthetic")
            rec = read_recording_csv(args.recording, args.rate, args.markers)
            pre = int(round(args.pre_ms * rec.rate / 1000))
            post = int(round(args.post_ms * rec.rate / 1000))
            epochs = []
            for m in rec.markers:
                a, b = m.sample_index - pre, m.sample_index + post + 1
                if a < 0 or b > rec.n_times:
                    log.warning("marker %s at %d too close to the edge; skipped", m.label, m.sample_index)
                    continue
                epochs.append((m.label, Segment(rec.samples[:, a:b], rec.rate,
                                                labels=rec.channel_names), pre))
        for label, seg, stim in epochs:
            for ch in range(seg.n_channels):
                one = Segment(seg.samples[ch:ch + 1], seg.rate, labels=[seg.labels[ch].name])
                try:
                    comp = detect_p300(one, stim, (lo, hi))[0]
                    rows.append((label, comp.channel.name, repr(comp.latency_ms), repr(comp.amplitude)))
                except NoPeak:
                    rows.append((label, seg.labels[ch].name, "nopeak", "nopeak"))
    text = "marker,channel,latency_ms,amplitude\n" + "".join(",".join(r) + "\n" for r in rows)
    if args.out:
        with atomic_open(args.out) as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_pipeline(args):
    cfg = _config(args, SYNTH_FLAGS, PRE_FLAGS, FEAT_FLAGS, ADJ_FLAGS, TRAIN_FLAGS)
    if args.dry_run:
        print("config OK")
        return
    out = Path(args.out)
    if not out.is_dir():
        raise ConfigError(f"output directory does not exist: {out}")
    dirs = {k: out / k for k in ("data", "preprocessed", "features", "model")}
    for d in dirs.values():
        d.mkdir(exist_ok=True)
    man = Manifest("pipeline", cfg)
    with man.stage("generate"):
        man.outputs += stage_generate(cfg, dirs["data"])
    with man.stage("preprocess"):
        man.outputs += stage_preprocess(cfg, dirs["data"], dirs["preprocessed"])
    with man.stage("features"):
        man.outputs += stage_features(cfg, dirs["preprocessed"], dirs["features"])
    with man.stage("adjacency"):
        man.outputs += stage_adjacency(cfg, out / "adjacency.csv")
    with man.stage("train"):
        metrics, extra, outs = stage_train(cfg, dirs["features"], dirs["model"])
        man.outputs += outs
    with man.stage("eval"):
        ev = stage_eval(dirs["model"] / "model.nlstm", dirs["features"], "val")
        ev.write(out / "eval_metrics.txt")
        man.outputs.append(out / "eval_metrics.txt")
    man.write(out / "manifest.json")
    sys.stdout.write(metrics.to_text(extra))


# -- parser ------------------------------------------------------------------------

def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI in milliseconds") from None
    return lo, hi


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file; flags override it")
    common.add_argument("--seed", type=int, help="run seed (all randomness derives from it)")
    common.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="eeg-bilstm", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_,
                              allow_abbrev=False)

    def synth_flags(sp):
        sp.add_argument("--classes", type=int)
        sp.add_argument("--segments", type=int, help="segments per class")
        sp.add_argument("--channels", type=int)
        sp.add_argument("--rate", type=float, help="sampling rate in Hz")
        sp.add_argument("--gain-ratio", type=float, help="dominant-band power gain")
        sp.add_argument("--noise-floor", type=float)

    def pre_flags(sp):
        sp.add_argument("--target-rate", type=float)
        sp.add_argument("--low-hz", type=float)
        sp.add_argument("--high-hz", type=float)
        sp.add_argument("--order", type=int)
        sp.add_argument("--var-factor", type=float)
        sp.add_argument("--flat-eps", type=float)

    def feat_flags(sp):
        sp.add_argument("--bands", help="e.g. delta:0.1-3,theta:4-7,...")
        sp.add_argument("--steps", type=int, help="DE sub-windows per segment")
        sp.add_argument("--window", type=float, help="segment length in seconds")

    def adj_flags(sp):
        sp.add_argument("--montage", help="'standard62' or a label,x,y,z file")
        sp.add_argument("--k", type=int, help="neighbours per channel (default 20%% of n)")
        sp.add_argument("--no-pairs", action="store_true", help="skip the global pairs")

    def train_flags(sp):
        sp.add_argument("--arch", help="lstm, bilstm, bilstm-attw, bilstm-attg, bilstm-attwg")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--dropout", type=float)
        sp.add_argument("--hidden", type=int)
        sp.add_argument("--dense", type=int)
        sp.add_argument("--clip-norm", type=float)
        sp.add_argument("--split", type=float, help="training fraction")

    sp = add("generate", "write labelled synthetic recordings")
    synth_flags(sp)
    sp.add_argument("--split", type=float, help="training fraction")
    sp.add_argument("--out", required=True, help="existing output directory")
    sp.set_defaults(func=cmd_generate)

    sp = add("preprocess", "decimate, reject bad channels, re-reference, band-pass")
    pre_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_preprocess)

    sp = add("features", "differential-entropy sequences per segment")
    feat_flags(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_features)

    sp = add("adjacency", "channel adjacency matrix from montage geometry")
    adj_flags(sp)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_adjacency)

    sp = add("train", "train a recurrent classifier on a features directory")
    train_flags(sp)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = add("eval", "score a checkpoint on a features directory")
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--subset", choices=("train", "val", "all"), default="val")
    sp.add_argument("--out", help="write metrics to this file too")
    sp.set_defaults(func=cmd_eval)

    sp = add("erp", "P300 latency and amplitude per marker and channel")
    sp.add_argument("--recording", help="recording CSV")
    sp.add_argument("--markers", help="markers sidecar file")
    sp.add_argument("--rate", type=float, default=500.0)
    sp.add_argument("--pre-ms", type=float, default=100.0)
    sp.add_argument("--post-ms", type=float, default=600.0)
    sp.add_argument("--window", type=_window, default=(250.0, 400.0), help="LO,HI ms")
    sp.add_argument("--synthetic", action="store_true", help="analyse a generated epoch")
    sp.add_argument("--latency", type=float, default=300.0)
    sp.add_argument("--amplitude", type=float, default=10.0)
    sp.add_argument("--noise", type=float, default=0.5)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_erp)

    sp = add("pipeline", "generate -> preprocess -> features -> adjacency -> train -> eval")
    synth_flags(sp)
    pre_flags(sp)
    feat_flags(sp)
    adj_flags(sp)
    train_flags(sp)
    sp.add_argument("--out", help="existing output directory")
    sp.add_argument("--dry-run", action="store_true", help="validate the config only")
    sp.set_defaults(func=cmd_pipeline)
    return p


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, (DataError, OSError, EEGError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def _available_cpus():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "pipeline" and not args.dry_run and not args.out:
        parser.error("pipeline requires --out unless --dry-run is given")
    try:
        from threadpoolctl import threadpool_limits
        threads = min(args.threads or 1, _available_cpus())
        with threadpool_limits(limits=threads):
            args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = _exit_code(exc.original)
        if code == EXIT_INTERNAL:
            log.debug("internal error", exc_info=exc.original)
        return code
    except (EEGError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
