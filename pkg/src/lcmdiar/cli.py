"""Command-line front end: ``lcmdiar <command> [options]``.

Commands: train-ubm, train-tv, train-plda, diarize, score, synth. Every
run-configuration key can be set in a ``--config`` file and overridden with
a ``--kebab-case`` flag. Exit codes: 0 ok, 1 usage, 2 data/format error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import archive
from .config import RunConfig
from .corpus import (
    SpeechMarks,
    load_features,
    read_speech_marks,
    write_features,
    write_speech_marks,
)
from .errors import DataError, FormatError, LcmdError, NumericError, ParameterError, ParseError
from .evaluate import compute_der, read_rttm, write_rttm_labels
from .gmm import train_ubm
from .pipeline import diarize, utterance_stats
from .scoring import preprocess_ivectors, train_plda
from .synth import ConversationSpec, random_chain, synthesize_conversation, synthesize_sessions
from .tvspace import extract_ivector, train_tv

logger = logging.getLogger("lcmdiar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration overrides")
    g.add_argument("--config", type=Path, help="key = value configuration file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            g.add_argument(flag, dest=f.name, default=None, action=argparse.BooleanOptionalAction)
        else:
            conv = {"int": int, "float": float}.get(f.type, str)
            g.add_argument(flag, dest=f.name, type=conv, default=None, metavar=f.type.upper())


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    return cfg.with_overrides(**over)


def _archive_path(args, cfg: RunConfig) -> Path:
    path = cfg.archive
    if not path:
        raise ParameterError("no model archive given (--archive)")
    return Path(path)


def _read_list(path: Path, need_labels: bool):
    """A list file holds one ``features.fmx [speaker]`` entry per line."""
    paths, labels = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) > 2 or (need_labels and len(parts) != 2):
            raise ParseError("expected 'features.fmx speaker'" if need_labels
                             else "expected 'features.fmx [speaker]'", path, lineno)
        p = Path(parts[0])
        paths.append(p if p.is_absolute() else Path(path).parent / p)
        labels.append(parts[1] if len(parts) == 2 else None)
    if not paths:
        raise DataError(f"{path}: list is empty")
    return paths, labels


def _log_trace(name, trace):
    for i, v in enumerate(trace):
        logger.info("%s iter %d objective %.6f", name, i, v)


def cmd_train_ubm(args, cfg: RunConfig) -> int:
    paths, _ = _read_list(args.list, need_labels=False)
    feats = [load_features(p) for p in paths]
    trace = []
    ubm = train_ubm(feats, cfg.n_components, cfg.ubm_iters, cfg.seed, trace=trace)
    _log_trace("ubm", trace)
    path = _archive_path(args, cfg)
    archive.write_archive(archive.ubm_arrays(ubm), path)
    print(f"wrote {path} (ubm: {cfg.n_components} components, dim {ubm.dim})")
    return EXIT_OK


def cmd_train_tv(args, cfg: RunConfig) -> int:
    path = _archive_path(args, cfg)
    arrays = archive.read_archive(path)
    ubm = archive.load_ubm(arrays, needed_by="train-tv")
    paths, _ = _read_list(args.list, need_labels=False)
    stats = utterance_stats(ubm, [load_features(p) for p in paths])
    trace = []
    tv = train_tv(stats, ubm, cfg.rank, cfg.tv_iters, cfg.seed, trace=trace)
    _log_trace("tv", trace)
    arrays = {k: v for k, v in arrays.items() if not k.startswith(("plda.", "prep."))}
    arrays.update(archive.tv_arrays(tv))
    archive.write_archive(arrays, path)
    print(f"wrote {path} (tv: rank {cfg.rank})")
    return EXIT_OK


def cmd_train_plda(args, cfg: RunConfig) -> int:
    path = _archive_path(args, cfg)
    arrays = archive.read_archive(path)
    models = archive.load_models(arrays, need_plda=False, needed_by="train-plda")
    paths, labels = _read_list(args.list, need_labels=True)
    stats = utterance_stats(models.ubm, [load_features(p) for p in paths])
    ivecs = np.stack([extract_ivector(models.tv, s) for s in stats])
    prep = preprocess_ivectors(ivecs)
    trace = []
    plda = train_plda(prep.apply(ivecs), labels, cfg.plda_rank, cfg.plda_iters, trace=trace)
    _log_trace("plda", trace)
    archive.update_archive(path, archive.plda_arrays(plda, prep))
    print(f"wrote {path} (plda: rank {cfg.plda_rank}, {len(set(labels))} speakers)")
    return EXIT_OK


def _threads(requested: int | None) -> int:
    cap = os.environ.get("LCMD_THREADS")
    n = requested or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"LCMD_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def cmd_diarize(args, cfg: RunConfig) -> int:
    dcfg = cfg.diarization_config()
    if args.marks and len(args.marks) != len(args.features):
        raise ParameterError("give one --marks file per features file")
    if args.out and len(args.features) != 1:
        raise ParameterError("--out takes a single input; use --out-dir for batches")
    if not args.out and not args.out_dir:
        raise ParameterError("need --out or --out-dir")
    arrays = archive.read_archive(_archive_path(args, cfg))
    models = archive.load_models(arrays, need_plda=dcfg.backend != "vb" or dcfg.init != "random",
                                 needed_by=f"diarize --backend {dcfg.backend}")

    def one(k):
        fpath = Path(args.features[k])
        feats = load_features(fpath)
        marks = read_speech_marks(args.marks[k]) if args.marks else None
        file_id = fpath.stem
        result, hyp = diarize(feats, marks, models, dcfg, file_id)
        if args.out:
            out = Path(args.out)
            diag = Path(args.diagnostics) if args.diagnostics else out.with_suffix(".diag.csv")
        else:
            out = Path(args.out_dir) / f"{file_id}.rttm"
            diag = Path(args.out_dir) / f"{file_id}.diag.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        write_rttm_labels(hyp, out)
        diag.write_text(result.diagnostics_csv())
        return f"{fpath}: {len(hyp.turns)} turns, {result.iterations} iterations -> {out}"

    jobs = _threads(args.jobs)
    if jobs == 1:
        lines = [one(k) for k in range(len(args.features))]
    else:
        with ThreadPoolExecutor(jobs) as pool:
            lines = list(pool.map(one, range(len(args.features))))
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_score(args, cfg: RunConfig) -> int:
    ref = read_rttm(args.ref)
    hyp = read_rttm(args.hyp)
    res = compute_der(ref, hyp, collar=cfg.collar, score_overlap=cfg.score_overlap)
    print(res.csv() if args.csv else res.format())
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)
    chain = random_chain(cfg.synth_dim, cfg.synth_components, cfg.synth_rank,
                         cfg.synth_speaker_rank, seed=cfg.seed, tv_scale=cfg.synth_tv_scale,
                         frame_noise=cfg.synth_frame_noise)
    sessions = synthesize_sessions(chain, cfg.synth_train_speakers, cfg.synth_sessions,
                                   cfg.synth_session_duration, seed=cfg.seed + 1,
                                   frame_shift=cfg.frame_shift)
    lines = []
    for k, (f, spk) in enumerate(sessions):
        name = f"{spk}_{k:04d}.fmx"
        write_features(f, out / "train" / name)
        lines.append(f"train/{name} {spk}\n")
    (out / "train.lst").write_text("".join(lines))
    spec = ConversationSpec(cfg.synth_speakers, cfg.duration, cfg.mean_turn, cfg.min_turn,
                            cfg.frame_shift)
    rec_lines = []
    for k in range(cfg.synth_conversations):
        file_id = f"rec{k:03d}"
        f, ref = synthesize_conversation(spec, chain, seed=cfg.seed + 100 + k, file_id=file_id)
        write_features(f, out / "test" / f"{file_id}.fmx")
        write_speech_marks(SpeechMarks(((0.0, round(f.frames * f.frame_shift, 6)),)),
                           out / "test" / f"{file_id}.marks")
        write_rttm_labels(ref, out / "test" / f"{file_id}.rttm")
        rec_lines.append(f"test/{file_id}.fmx\n")
    (out / "test.lst").write_text("".join(rec_lines))
    print(f"wrote {len(sessions)} training sessions and {cfg.synth_conversations} "
          f"conversations to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lcmdiar", description="Latent class model speaker diarization")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
        return p

    for name, fn, what in (("train-ubm", cmd_train_ubm, "train the UBM (writes a new archive)"),
                           ("train-tv", cmd_train_tv, "train T on top of the UBM stage"),
                           ("train-plda", cmd_train_plda, "train preprocessing and PLDA")):
        p = command(name, fn, what)
        p.add_argument("list", type=Path, help="list file: 'features.fmx [speaker]' per line")

    p = command("diarize", cmd_diarize, "diarize one or more recordings")
    p.add_argument("features", nargs="+", help="FMX1 feature files")
    p.add_argument("-S", dest="n_speakers", type=int, default=None, help="number of speakers")
    p.add_argument("--marks", action="append", help="speech-mark file; repeat once per features file")
    p.add_argument("--out", help="hypothesis RTTM (single input)")
    p.add_argument("--out-dir", help="directory for <id>.rttm and <id>.diag.csv")
    p.add_argument("--diagnostics", help="per-iteration diagnostics CSV (single input)")
    p.add_argument("--jobs", type=int, default=1, help="recordings diarized concurrently")

    p = command("score", cmd_score, "compute DER of a hypothesis RTTM")
    p.add_argument("ref", type=Path)
    p.add_argument("hyp", type=Path)
    p.add_argument("--csv", action="store_true", help="machine-readable output")

    p = command("synth", cmd_synth, "write a seeded synthetic dataset")
    p.add_argument("out_dir", type=Path)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _run_config(args)
        return args.fn(args, cfg)
    except ParameterError as exc:
        print(f"lcmdiar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, OSError) as exc:
        print(f"lcmdiar: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"lcmdiar: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LcmdError as exc:
        print(f"lcmdiar: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
