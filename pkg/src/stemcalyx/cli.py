"""Command-line front end.

Exit status: 0 success, 1 usage or parameter error, 2 data or format
error, 3 numerical or training failure. Set STEMCALYX_VERBOSE=1 (or pass
-v) for progress logging on stderr.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .classify import (FUSION_SUBSETS, KINDS, Dataset, compare_fusions, evaluate, load_model,
                       predict_indices, save_model, split_drop_one_out, train_from_config)
from .config import PipelineConfig
from .descriptors import BlockKind, block_slices, extract_all
from .errors import (DataFormatError, DegenerateRegionError, DescriptorError,
                     EmptyRegionError, GenerationError, ImageFormatError, NumericalError,
                     ParameterError, TrainingError)
from .imaging import CandidateObject, load_image, load_mask, save_image, to_grayscale, trace_boundary
from .labels import LABEL_ORDER
from .pipeline import (FeatureRow, StageError, detect, featurize_corpus, read_features,
                       rows_to_dataset, write_features)
from .synthgen import gen_corpus

log = logging.getLogger("stemcalyx")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

CANDIDATE_COLUMNS = ("id", "file", "origin_x", "origin_y", "area",
                     "bbox_x", "bbox_y", "bbox_w", "bbox_h")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def exit_code_for(exc):
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, (UsageError, ParameterError)):
        return EXIT_USAGE
    if isinstance(exc, (NumericalError, TrainingError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ImageFormatError, DataFormatError, EmptyRegionError,
                        DegenerateRegionError, DescriptorError, GenerationError, OSError,
                        ValueError)):
        return EXIT_DATA
    return None


# ------------------------------------------------------------------ helpers

def _config(args):
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return cfg.with_overrides(overrides) if overrides else cfg


def _echo_config(cfg, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg.save(path)


def _sidecar(path, suffix):
    path = Path(path)
    return path.with_name(path.name + suffix)


def _load_dataset(path):
    rows, layout = read_features(path)
    return rows_to_dataset(rows, layout)


def _pick_split(dataset, cfg, subset, fraction=None):
    if subset == "all":
        return dataset
    train, test = split_drop_one_out(dataset, fraction or cfg.train_fraction, cfg.rng_seed)
    return train if subset == "train" else test


# ----------------------------------------------------------------- commands

def cmd_detect(args):
    cfg = _config(args)
    try:
        image = load_image(args.image)
    except (OSError, ImageFormatError) as exc:
        raise StageError("load", exc) from exc
    det = detect(image, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overlay = det.gray.copy()
    with open(out / "candidates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANDIDATE_COLUMNS)
        for i, cand in enumerate(det.candidates):
            name = f"candidate_{i:03d}.pgm"
            save_image(cand.mask, out / name)
            x0, y0, bw, bh = cand.bbox
            w.writerow([i, name, cand.origin[0], cand.origin[1], cand.area, x0, y0, bw, bh])
            overlay[cand.boundary[:, 1], cand.boundary[:, 0]] = 255
    save_image(overlay, out / "overlay.pgm")
    save_image(det.fruit, out / "fruit.pgm")
    save_image(det.filtered, out / "gray.pgm")
    _echo_config(cfg, out / "config.txt")
    if not det.growcut_converged:
        log.warning("grow-cut stopped after %d passes without converging", det.growcut_passes)
    print(f"{len(det.candidates)} candidates -> {out}")
    return EXIT_OK


def _candidate_rows(cand_dir, cfg):
    cand_dir = Path(cand_dir)
    table = cand_dir / "candidates.csv"
    if not table.exists():
        raise DataFormatError(f"{table} not found")
    gray = None
    if cfg.mf_intensity_mass:
        gray_path = cand_dir / "gray.pgm"
        if not gray_path.exists():
            raise DataFormatError("intensity mass needs gray.pgm next to the candidates")
        gray = to_grayscale(load_image(gray_path))
    with open(table, newline="") as fh:
        records = list(csv.DictReader(fh))
    try:
        records.sort(key=lambda r: int(r["id"]))
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{table}: bad candidate id column ({exc})") from None
    dcfg = cfg.descriptor_config()
    rows, skipped = [], 0
    for rec in records:
        try:
            mask = load_mask(cand_dir / rec["file"])
            origin = (int(rec["origin_x"]), int(rec["origin_y"]))
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{table}: bad candidate record ({exc})") from None
        try:
            cand = CandidateObject(mask=mask, origin=origin, area=int(mask.sum()),
                                   boundary=trace_boundary(mask, origin))
            vec = extract_all(cand, dcfg, None, gray)
        except (DescriptorError, EmptyRegionError) as exc:
            log.warning("candidate %s skipped: %s", rec["id"], exc)
            skipped += 1
            continue
        rows.append(FeatureRow(rec["id"], "", "", None, vec.as_array()))
    return rows, skipped


def cmd_extract(args):
    cfg = _config(args)
    if args.corpus:
        def progress(done, total):
            if done % 50 == 0 or done == total:
                log.info("featurised %d/%d scenes", done, total)
        rows, skipped = featurize_corpus(args.source, cfg, progress)
    else:
        rows, skipped = _candidate_rows(args.source, cfg)
    layout = cfg.descriptor_config().layout
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_features(args.out, rows, layout)
    _echo_config(cfg, _sidecar(args.out, ".config.txt"))
    if skipped:
        print(f"warning: {skipped} candidates skipped", file=sys.stderr)
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    data = _pick_split(_load_dataset(args.features), cfg, args.subset)
    model = train_from_config(data, cfg)
    Path(args.model).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.model)
    _echo_config(cfg, _sidecar(args.model, ".config.txt"))
    print(f"{cfg.classifier} model on {len(data)} samples -> {args.model}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _config(args)
    model = load_model(args.model)
    data = _pick_split(_load_dataset(args.features), cfg, args.subset)
    report = evaluate(model, data)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        (out / "report.csv").write_text(report.to_csv())
        _echo_config(cfg, out / "config.txt")
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    rows, layout = read_features(args.features)
    if layout != model.layout:
        raise DataFormatError(f"feature layout {layout} does not match the model")
    idx = predict_indices(model, np.stack([r.values for r in rows])) if rows else []
    lines = ["sample_id,predicted"] + [f"{r.sample_id},{LABEL_ORDER[i].value}"
                                       for r, i in zip(rows, idx)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _grid(text, cast):
    try:
        values = [cast(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None
    if not values:
        raise UsageError("empty grid")
    return values


def sweep_rows(dataset, cfg, axis, grid):
    """(value, n_train, n_test, per-class TPR..., accuracy) for each grid point."""
    out = []
    for value in grid:
        if axis == "fourier_k":
            slices = block_slices(dataset.layout)
            if BlockKind.FOURIER not in slices:
                raise DataFormatError("features have no Fourier block")
            available = slices[BlockKind.FOURIER].stop - slices[BlockKind.FOURIER].start
            if not 1 <= value <= available:
                raise ParameterError(f"K={value} outside 1..{available}")
            fd = dataset.select_blocks([BlockKind.FOURIER])
            data = Dataset(fd.X[:, :value], fd.labels, fd.apple_ids, fd.view_ids,
                            fd.sample_ids, ((BlockKind.FOURIER, value),))
            train, test = split_drop_one_out(data, cfg.train_fraction, cfg.rng_seed)
        else:
            train, test = split_drop_one_out(dataset, value, cfg.rng_seed)
        report = evaluate(train_from_config(train, cfg), test)
        out.append((value, len(train), len(test), *report.tpr.tolist(), report.accuracy))
    return out


def cmd_sweep(args):
    cfg = _config(args)
    cast = int if args.axis == "fourier_k" else float
    grid = _grid(args.grid, cast)
    rows = sweep_rows(_load_dataset(args.features), cfg, args.axis, grid)
    header = [args.axis, "n_train", "n_test"] + [f"tpr_{l.value}" for l in LABEL_ORDER] + ["accuracy"]
    lines = [",".join(header)] + [",".join(repr(v) for v in row) for row in rows]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(lines) + "\n")
    _echo_config(cfg, _sidecar(args.out, ".config.txt"))
    print(f"{len(rows)} grid points -> {args.out}")
    return EXIT_OK


def cmd_fusion(args):
    cfg = _config(args)
    data = _load_dataset(args.features)
    train, test = split_drop_one_out(data, cfg.train_fraction, cfg.rng_seed)
    kinds = _grid(args.classifiers, str) if args.classifiers else list(KINDS)
    unknown = [k for k in kinds if k not in KINDS]
    if unknown:
        raise UsageError(f"unknown classifiers {unknown}")
    table = compare_fusions(train, test, kinds, FUSION_SUBSETS, k=cfg.knn_k, c=cfg.svm_c,
                            degree=cfg.svm_degree, gamma=cfg.svm_gamma, tol=cfg.svm_tol,
                            max_passes=cfg.svm_max_passes, ridge=cfg.ldc_ridge)
    sys.stdout.write(table.to_text())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(table.to_csv())
        _echo_config(cfg, _sidecar(args.out, ".config.txt"))
    return EXIT_OK


def cmd_synth(args):
    if args.n < 4:
        raise ParameterError(f"n must be >= 4, got {args.n}")
    gen_corpus(args.n, args.seed, args.out, args.image_size)
    print(f"{3 * args.n} scenes -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="stemcalyx", description="Stem/calyx versus defect recognition on fruit images.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--backend", choices=["compiled", "python"],
                   help="kernel implementation (default: compiled when built)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")

    sp = sub.add_parser("detect", help="find candidate regions in one image")
    sp.add_argument("image")
    sp.add_argument("--out", required=True, help="output directory")
    common(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("extract", help="descriptor CSV from candidates or a corpus")
    sp.add_argument("source", help="detect output directory, or corpus directory with --corpus")
    sp.add_argument("--corpus", action="store_true", help="source is a synthetic corpus")
    sp.add_argument("--out", required=True, help="feature CSV to write")
    common(sp)
    sp.set_defaults(func=cmd_extract)

    split_help = "which part of the apple-wise split to use"
    sp = sub.add_parser("train", help="fit a classifier")
    sp.add_argument("features")
    sp.add_argument("--model", required=True, help="model file to write")
    sp.add_argument("--subset", choices=["train", "test", "all"], default="train", help=split_help)
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="TPR/FPR report for a model")
    sp.add_argument("features")
    sp.add_argument("--model", required=True)
    sp.add_argument("--subset", choices=["train", "test", "all"], default="test", help=split_help)
    sp.add_argument("--out", help="directory for report.txt and report.csv")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("predict", help="label feature rows with a model")
    sp.add_argument("features")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", help="CSV to write (default stdout)")
    sp.set_defaults(func=cmd_predict, config=None, set=None)

    sp = sub.add_parser("sweep", help="accuracy over a parameter grid")
    sp.add_argument("features")
    sp.add_argument("--axis", choices=["fourier_k", "train_fraction"], required=True)
    sp.add_argument("--grid", required=True, help="comma-separated values")
    sp.add_argument("--out", required=True, help="sweep CSV to write")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("fusion", help="accuracy of each classifier per descriptor subset")
    sp.add_argument("features")
    sp.add_argument("--classifiers", help="comma-separated subset of knn,svm,ldc")
    sp.add_argument("--out", help="CSV to write")
    common(sp)
    sp.set_defaults(func=cmd_fusion)

    sp = sub.add_parser("synth", help="generate a synthetic labelled corpus")
    sp.add_argument("--n", type=int, required=True, help="scenes per class")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--image-size", type=int, default=256)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)
    return p


def _setup_logging(verbose):
    env = os.environ.get("STEMCALYX_VERBOSE", "").strip().lower()
    on = verbose or env not in ("", "0", "false", "no", "off")
    logging.basicConfig(level=logging.INFO if on else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"stemcalyx: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    _setup_logging(args.verbose)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if args.backend:
            if args.backend not in _backend.available():
                raise UsageError(f"{args.backend} kernels are not available in this build")
            _backend.set_backend(args.backend)
        return args.func(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        stage = f" [{exc.stage}]" if isinstance(exc, StageError) else ""
        cause = exc.cause if isinstance(exc, StageError) else exc
        print(f"stemcalyx: error{stage}: {cause}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
