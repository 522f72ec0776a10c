"""Command-line entry point: ``pairnilm {synth,crossval,study,train,predict,rerun}``.

Every run writes ``manifest.json`` next to its outputs. ``pairnilm rerun
<manifest>`` repeats the recorded command and checks that the outputs come
out byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, dataio, harness, synth
from .ensemble import ENSEMBLE_INDEX, VOTING_RULES, load_ensemble, save_ensemble
from .harness import ExperimentConfig
from .mlp import TrainOptions

DATA_ENV = "PAIRNILM_DATA"
MANIFEST = "manifest.json"

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_SKIPPED = 0, 1, 2, 3

log = logging.getLogger("pairnilm")


class CliError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, argv, command, config, outputs, timings, corpus=None):
    manifest = {
        "tool": "pairnilm",
        "version": __version__,
        "python": platform.python_version(),
        "command": command,
        "argv": list(argv),
        "config": config,
        "corpus_digest": corpus,
        "outputs": {p.name: _sha256(p) for p in sorted(outputs)},
        "timings_s": timings,
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def _data_dir(args) -> Path:
    path = args.data_dir or os.environ.get(DATA_ENV)
    if not path:
        raise CliError(f"no corpus directory given and ${DATA_ENV} is unset")
    return Path(path)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc.strerror or exc}") from None
    return out


def _config(args) -> ExperimentConfig:
    opts = TrainOptions(
        max_iterations=args.max_iterations,
        restarts=args.restarts,
        patience=None if args.patience == 0 else args.patience,
        eval_every=args.eval_every,
        validation_fraction=args.validation_fraction,
        hidden_dim=args.hidden,
        line_search=args.line_search,
        seed=args.seed,
    )
    return ExperimentConfig(
        epsilon=args.epsilon,
        voting=args.voting,
        train_fraction=getattr(args, "train_fraction", 1.0),
        phase_shift_tau=getattr(args, "tau", None),
        prior_knowledge=getattr(args, "prior_knowledge", False),
        scoring=args.scoring,
        seed=args.seed,
        train_opts=opts,
        jobs=args.jobs,
    )


def _load(args):
    root = _data_dir(args)
    try:
        ds = dataio.load_corpus(root)
    except dataio.CorpusError as exc:
        raise CliError(f"corpus {root}: {exc}") from None
    return root, ds


def cmd_synth(args, argv) -> int:
    out = _out_dir(args.out_dir)
    t0 = time.perf_counter()
    spec = synth.SynthSpec(
        houses=args.houses,
        instances_per_house=args.instances,
        periods=args.periods,
        sample_rate_hz=args.fs,
        grid_freq_hz=args.fg,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    ds = synth.generate(spec)
    written = dataio.save_corpus(ds, out)
    write_manifest(
        out, argv, "synth",
        {k: v for k, v in vars(args).items() if k not in ("func", "out_dir")},
        written, {"total": time.perf_counter() - t0},
    )
    print(f"wrote {len(ds)} measurements to {out}")
    return EXIT_OK


def _finish(report_list, strict: bool) -> int:
    skipped = sorted({h for rep in report_list for h in rep.skipped})
    if skipped:
        log.warning("skipped folds: %s", skipped)
        if strict:
            return EXIT_SKIPPED
    return EXIT_OK


def cmd_crossval(args, argv) -> int:
    root, ds = _load(args)
    out = _out_dir(args.out)
    cfg = _config(args)
    t0 = time.perf_counter()
    rep = harness.leave_house_out(ds, cfg)
    elapsed = time.perf_counter() - t0
    json_path, text_path = out / "report.json", out / "report.txt"
    json_path.write_text(rep.to_json())
    text_path.write_text(rep.to_text())
    write_manifest(
        out, argv, "crossval", cfg.to_dict(), [json_path, text_path],
        {"crossval": elapsed}, dataio.corpus_digest(root),
    )
    print(rep.to_text(), end="")
    return _finish([rep], args.strict)


def _parse_values(kind: str, raw: str):
    try:
        values = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"--values must be comma-separated numbers, got {raw!r}") from None
    if not values:
        raise CliError("--values is empty")
    if kind == "phase":
        bad = [v for v in values if v != int(v) or v < 0]
        if bad:
            raise CliError(f"phase offsets must be non-negative integers: {bad}")
        return [int(v) for v in values]
    if kind == "size":
        bad = [v for v in values if not 0 < v <= 1]
        if bad:
            raise CliError(f"training fractions must lie in (0, 1]: {bad}")
    return values


def cmd_study(args, argv) -> int:
    root, ds = _load(args)
    out = _out_dir(args.out)
    cfg = _config(args)
    values = _parse_values(args.study, args.values)
    reports: dict = {}
    t0 = time.perf_counter()
    if args.study == "size":
        results = harness.study_training_size(ds, cfg, values, reports)
    elif args.study == "freq":
        problems = harness.check_rates(ds, values)
        if problems:
            raise CliError("invalid sampling rates:\n  " + "\n  ".join(problems))
        results = harness.study_sampling_freq(ds, cfg, values, reports)
    else:
        results = harness.study_phase_shift(ds, cfg, values, reports)
    elapsed = time.perf_counter() - t0
    csv_path = out / f"study_{args.study}.csv"
    harness.write_sweep_csv(results, csv_path)
    reports_path = out / f"study_{args.study}_reports.json"
    reports_path.write_text(
        json.dumps({f"{x:g}": rep.to_dict() for x, rep in reports.items()}, indent=1, sort_keys=True) + "\n"
    )
    write_manifest(
        out, argv, f"study:{args.study}", cfg.to_dict() | {"values": values},
        [csv_path, reports_path], {"study": elapsed}, dataio.corpus_digest(root),
    )
    print(csv_path.read_text(), end="")
    return _finish(list(reports.values()), args.strict)


def cmd_train(args, argv) -> int:
    root, ds = _load(args)
    out = _out_dir(args.out)
    cfg = _config(args)
    t0 = time.perf_counter()
    fold = harness.fit_dataset(ds, cfg, cfg.seed, harness.Fold(None, cfg.seed))
    if fold.ensemble is None:
        raise CliError("; ".join(fold.warnings) or "nothing to train")
    d = ds.measurements[0].period
    save_ensemble(
        fold.ensemble, out,
        {
            "epsilon": cfg.epsilon,
            "period": d,
            "voting": cfg.voting,
            "train_houses": fold.train_houses,
            "val_houses": fold.val_houses,
            "omitted_pairs": fold.omitted_pairs,
        },
    )
    outputs = sorted(p for p in out.iterdir() if p.name != MANIFEST)
    write_manifest(
        out, argv, "train", cfg.to_dict(), outputs,
        {"train": time.perf_counter() - t0}, dataio.corpus_digest(root),
    )
    print(f"trained {len(fold.ensemble)} pairwise networks into {out}")
    return EXIT_OK


def cmd_predict(args, argv) -> int:
    root, ds = _load(args)
    ens = load_ensemble(args.model_dir)
    extra = set(ds.label_space) - set(ens.label_space)
    if extra:
        raise CliError(f"corpus has categories the model does not know: {sorted(extra)}")
    manifest = json.loads((Path(args.model_dir) / ENSEMBLE_INDEX).read_text())
    cfg = _config(args)
    cfg = replace(cfg, epsilon=manifest.get("epsilon", cfg.epsilon))
    preds = harness.predict_measurements(ens, ds, cfg, tau=args.tau)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["file,house,category,predicted"]
    for k, label in preds:
        m = ds.measurements[k]
        lines.append(f"{m.source},{m.house_id},{m.category},{'' if label is None else label}")
    out.write_text("\n".join(lines) + "\n")
    correct = sum(1 for k, lab in preds if lab == ds.measurements[k].category)
    print(f"{correct}/{len(preds)} measurements match their recorded category")
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    old_argv = list(manifest["argv"])
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(args.out) if args.out else Path(tmp)
        new_argv = _retarget(old_argv, manifest["command"], str(target))
        code = main(new_argv)
        if code not in (EXIT_OK, EXIT_SKIPPED):
            return code
        fresh = json.loads((target / MANIFEST).read_text())
    if fresh["outputs"] != manifest["outputs"]:
        diff = sorted(
            k for k in set(fresh["outputs"]) | set(manifest["outputs"])
            if fresh["outputs"].get(k) != manifest["outputs"].get(k)
        )
        print(f"outputs differ from the manifest: {diff}", file=sys.stderr)
        return EXIT_ERROR
    print(f"reproduced {len(manifest['outputs'])} output files bit-identically")
    return EXIT_OK


def _retarget(argv, command, target):
    argv = list(argv)
    if command == "synth":
        old = build_parser().parse_args(argv).out_dir
        argv[argv.index(old)] = target
        return argv
    if "--out" in argv:
        argv[argv.index("--out") + 1] = target
    else:
        argv += ["--out", target]
    return argv


def _add_experiment_flags(p, with_data=True):
    if with_data:
        p.add_argument("data_dir", nargs="?", help=f"corpus directory (default ${DATA_ENV})")
    p.add_argument("--epsilon", type=int, default=10, help="sliding step in samples (default 10)")
    p.add_argument("--voting", choices=VOTING_RULES, default="weighted")
    p.add_argument("--scoring", choices=("measurement", "window"), default="measurement",
                   help="score whole measurements (majority over windows) or single windows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=30, help="hidden units per network")
    p.add_argument("--max-iterations", type=int, default=300)
    p.add_argument("--restarts", type=int, default=1, help="random re-initializations per network")
    p.add_argument("--patience", type=int, default=20,
                   help="validation checks without improvement before stopping (0 = never)")
    p.add_argument("--eval-every", type=int, default=5, help="CG iterations between validation checks")
    p.add_argument("--validation-fraction", type=float, default=0.30)
    p.add_argument("--line-search", choices=("wolfe", "armijo"), default="wolfe")
    p.add_argument("--jobs", type=int, default=1, help="concurrent folds")
    p.add_argument("--strict", action="store_true", help="exit non-zero when folds are skipped")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairnilm",
        description="Appliance identification with a one-vs-one ensemble of small networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--houses", type=int, default=12)
    p.add_argument("--instances", type=int, default=3, help="instances per category and house")
    p.add_argument("--periods", type=int, default=20)
    p.add_argument("--fs", type=float, default=30_000.0, help="sample rate in Hz")
    p.add_argument("--fg", type=float, default=60.0, help="grid frequency in Hz")
    p.add_argument("--noise", type=float, default=0.03, help="noise sigma relative to peak")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("crossval", help="leave-house-out cross-validation")
    _add_experiment_flags(p)
    p.add_argument("--train-fraction", type=float, default=1.0)
    p.add_argument("--tau", type=int, default=None, help="test on the single period starting here")
    p.add_argument("--prior-knowledge", action="store_true",
                   help="confine each fold's vote to the test house's categories")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("study", help="robustness sweeps written as x,alpha,kappa CSV")
    p.add_argument("study", choices=("size", "freq", "phase"))
    _add_experiment_flags(p)
    p.add_argument("--values", required=True,
                   help="comma-separated fractions (size), rates in Hz (freq) or offsets (phase)")
    p.add_argument("--prior-knowledge", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("train", help="train an ensemble on a whole corpus")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True, help="model directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a corpus with a trained ensemble")
    p.add_argument("model_dir")
    _add_experiment_flags(p)
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV file for predictions")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rerun", help="repeat a run from its manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="keep the re-run outputs here")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, dataio.CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
