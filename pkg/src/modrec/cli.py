"""``modrec`` command line: generate, features, train, eval, bench, defaults.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure
(diverged training, unreadable or corrupt files).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import container, dataset, evaluate, expertfeat
from .baselines import make_classifier
from .config import NEURAL, ConfigError, RunConfig
from .iqcore import to_iq_rows
from .neuralnet.model import Model, build_model
from .neuralnet.train import TrainingDiverged, predict, train

log = logging.getLogger("modrec")

OUT_ENV = "MODREC_OUT"


class RuntimeFailure(RuntimeError):
    pass


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV) or "runs")


def _resolve_out(arg, cfg: RunConfig, default_name: str) -> Path:
    if arg:
        return Path(arg)
    if cfg.out_dir:
        return Path(cfg.out_dir) / default_name
    return out_root() / default_name


def _load_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if getattr(args, "config", None) else RunConfig()
    over = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v
    if getattr(args, "threads", None):
        over["workers"] = str(min(args.threads, int(over.get("workers", cfg.workers))))
    return cfg.override(over) if over else cfg


# -- model inputs ---------------------------------------------------------------------

def _inputs(model_name: str, ds, standardizer=None, fit=False):
    """Network IQ tensor or (standardized) expert features for ``model_name``."""
    if model_name in ("cnn", "cnn2"):
        return to_iq_rows(ds.iq), None
    if standardizer is None and fit:
        standardizer = expertfeat.Standardizer()
    X, _ = expertfeat.featurize_dataset(ds, standardizer, fit=fit)
    return X, standardizer


def _neural_kwargs(cfg: RunConfig):
    return {} if cfg.dropout is None else {"dropout": cfg.dropout}


def _new_classifier(name, cfg: RunConfig):
    if name == "tree":
        return make_classifier("tree", max_depth=cfg.tree_max_depth, min_leaf=cfg.tree_min_leaf)
    if name == "svm":
        return make_classifier("svm", C=cfg.svm_c, gamma=cfg.svm_gamma)
    return make_classifier(name)


def fit_model(name: str, cfg: RunConfig, tr, va, progress=None):
    """Train one model on split datasets; returns ``(model, standardizer, history)``."""
    std = expertfeat.Standardizer() if cfg.standardize else None
    Xtr, std = _inputs(name, tr, std, fit=std is not None)
    if name in NEURAL:
        Xva, _ = _inputs(name, va, std)
        model = build_model(name, seed=cfg.train_seed, dtype=cfg.dtype, **_neural_kwargs(cfg))
        if name == "dnn-feat" and model.spec.input_shape != (Xtr.shape[1],):
            raise ConfigError("dnn-feat input width does not match the feature count")
        model, hist = train(model, Xtr, tr.labels, Xva, va.labels, cfg.train_config(), progress)
        return model, std, hist
    clf = _new_classifier(name, cfg).fit(Xtr, tr.labels)
    return clf, std, None


def predict_labels(model, X):
    if isinstance(model, Model):
        return np.argmax(predict(model, X), axis=1)
    return model.predict(X)


def _std_meta(std):
    if std is None:
        return None
    return {"mean": std.mean.tolist(), "std": std.std.tolist()}


def _std_from_meta(d):
    if not d:
        return None
    return expertfeat.Standardizer(np.array(d["mean"]), np.array(d["std"]))


def _model_name(model, meta):
    return meta.get("model_name") or (model.spec.name.lower() if isinstance(model, Model) else model.kind)


# -- commands -------------------------------------------------------------------------

def cmd_defaults(args) -> int:
    sys.stdout.write(RunConfig().dumps())
    return 0


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg = cfg.override({"seed": args.seed})
    out = Path(args.out) if args.out else _resolve_out(None, cfg, "dataset.rmd")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = dataset.build_dataset(cfg.generation())
    ds.manifest["run_config"] = cfg.as_dict()
    digest = dataset.save(ds, out)
    for key, n in ds.manifest["counts"].items():
        print(f"{key}\t{n}")
    print(f"frames {len(ds)}")
    print(f"sha256 {digest}  {out}")
    return 0


def cmd_features(args) -> int:
    ds = dataset.load(args.input)
    X = expertfeat.extract_features(ds.iq) if len(ds) else np.empty((0, expertfeat.N_FEATURES))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    expertfeat.write_csv(out, X, ds.labels, ds.snrs)
    print(f"wrote {X.shape[0]}x{X.shape[1]} features to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.model:
        cfg = cfg.override({"model": args.model})
    out = _resolve_out(args.out, cfg, f"train_{cfg.model}")
    out.mkdir(parents=True, exist_ok=True)
    ds = dataset.load(args.input)
    tr, va, te = dataset.split(ds, cfg.split_spec())
    (out / "config.txt").write_text(cfg.dumps(), encoding="utf-8")
    model_path = out / "model.rmm"
    meta = {"model_name": cfg.model, "split": cfg.split_spec().__dict__,
            "run_config": cfg.as_dict(), "dataset": str(args.input)}

    def checkpoint(epoch, hist):
        if hist.best_epoch == epoch:
            container.save_model(model_path, model_ref[0],
                                 dict(meta, best_epoch=epoch, standardizer=_std_meta(std_ref[0])))
        log.info("epoch %d val_acc %.4f", epoch, hist.val_acc[-1])

    model_ref, std_ref = [None], [None]
    if cfg.model in NEURAL:
        # build here so the checkpoint callback can see the live model
        std = expertfeat.Standardizer() if cfg.standardize else None
        Xtr, std = _inputs(cfg.model, tr, std, fit=std is not None)
        Xva, _ = _inputs(cfg.model, va, std)
        std_ref[0] = std
        model = build_model(cfg.model, seed=cfg.train_seed, dtype=cfg.dtype, **_neural_kwargs(cfg))
        model_ref[0] = model
        try:
            model, hist = train(model, Xtr, tr.labels, Xva, va.labels, cfg.train_config(), checkpoint)
        except TrainingDiverged as e:
            raise RuntimeFailure(f"training aborted: {e}") from None
        hist.write_csv(out / "history.csv")
        meta["best_epoch"] = hist.best_epoch
        summary = {"epochs": len(hist), "best_epoch": hist.best_epoch,
                   "best_val_loss": float(hist.val_loss[hist.best_epoch]),
                   "best_val_acc": float(hist.val_acc[hist.best_epoch])}
    else:
        model, std, _ = fit_model(cfg.model, cfg, tr, va)
        Xva, _ = _inputs(cfg.model, va, std)
        acc = float(np.mean(predict_labels(model, Xva) == va.labels)) if len(va) else float("nan")
        with open(out / "history.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,train_acc,val_acc\n")
            Xtr, _ = _inputs(cfg.model, tr, std)
            tacc = float(np.mean(predict_labels(model, Xtr) == tr.labels))
            fh.write(f"0,nan,nan,{tacc:.10g},{acc:.10g}\n")
        summary = {"val_acc": acc}
        if getattr(model, "warnings", None):
            summary["warnings"] = list(model.warnings)
    meta["standardizer"] = _std_meta(std)
    container.save_model(model_path, model, meta)
    print(json.dumps(summary, sort_keys=True))
    print(f"model {model_path}")
    return 0


def cmd_eval(args) -> int:
    ds = dataset.load(args.input)
    model, meta = container.load_model(args.model)
    rc = meta.get("run_config") or {}
    cfg = RunConfig().override({k: v if not isinstance(v, list) else tuple(v)
                                for k, v in rc.items()}) if rc else RunConfig()
    if args.split == "test":
        _, _, ds = dataset.split(ds, dataset.SplitSpec(**meta["split"]) if "split" in meta
                                 else cfg.split_spec())
    name = _model_name(model, meta)
    X, _ = _inputs(name, ds, _std_from_meta(meta.get("standardizer")))
    preds = predict_labels(model, X)
    snrs = tuple(args.snr) if args.snr else cfg.confusion_snrs
    out = _resolve_out(args.out, cfg, f"eval_{name}")
    report_cfg = {"run_config": cfg.as_dict(), "dataset": str(args.input),
                  "model_file": str(args.model), "split": args.split}
    s = evaluate.emit_report(out, report_cfg, name, preds, ds.labels, ds.snrs,
                             confusion_snrs=snrs, plot=not args.no_plot)
    print(f"overall accuracy {s['overall_accuracy']:.4f} on {s['n_examples']} frames")
    for row in s["accuracy_by_snr"]:
        if row["n"]:
            print(f"{row['snr']:>4} dB  {row['accuracy']:.4f}  n={row['n']}")
    print(f"report {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    models = tuple(args.models.split(",")) if args.models else cfg.bench_models
    for m in models:
        if m not in cfgmod.MODELS:
            raise ConfigError(f"unknown model {m!r}")
    reps = args.repetitions or cfg.bench_repetitions
    ds = dataset.load(args.input)
    tr, va, te = dataset.split(ds, cfg.split_spec())
    rep = evaluate.TimingReport()
    for name in models:
        std = expertfeat.Standardizer() if cfg.standardize else None
        Xtr, std = _inputs(name, tr, std, fit=std is not None)
        Xte, _ = _inputs(name, te, std)
        train_s, model = [], None
        for _ in range(reps):
            t = evaluate.time_call(lambda: fit_model(name, cfg, tr, va), 1, warmup=False)
            train_s.append(t[0])
        model, _, _ = fit_model(name, cfg, tr, va)
        cls_s = evaluate.time_call(lambda: predict_labels(model, Xte), reps)
        rep.add(name, train_s, cls_s, len(tr), len(te))
        print(f"{name:<9} train {np.median(train_s):9.3f} s  classify {np.median(cls_s):9.4f} s "
              f"({len(te)} frames)")
    out = _resolve_out(args.out, cfg, "bench")
    out.mkdir(parents=True, exist_ok=True)
    (out / "timing.json").write_text(json.dumps({"config": cfg.as_dict(), **rep.as_dict()},
                                                indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"environment: {rep.environment}")
    print(f"report {out / 'timing.json'}")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="modrec", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Synthesize modulation datasets, train classifiers, and evaluate them.",
        epilog="config keys (flat 'key = value' file, lists comma separated):\n" + cfgmod.key_help()
        + f"\n\nDefault output root is ${OUT_ENV} or ./runs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p.add_argument("--threads", type=int, default=None, help="cap on worker processes")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="run config file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override one config key (repeatable)")

    sp = sub.add_parser("defaults", help="print every config key with its default")
    sp.set_defaults(func=cmd_defaults)

    sp = sub.add_parser("generate", help="build and save a dataset")
    common(sp)
    sp.add_argument("--out", help="dataset file (manifest goes next to it as .json)")
    sp.add_argument("--seed", type=int, help="override the master seed")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("features", help="write the 32 expert features as CSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("train", help="train one model on a dataset")
    common(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--model", choices=cfgmod.MODELS)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained model and write report files")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--model", required=True, help="model file from 'train'")
    sp.add_argument("--out", help="report directory")
    sp.add_argument("--snr", type=int, action="append", help="SNR for a confusion CSV (repeatable)")
    sp.add_argument("--split", choices=("test", "all"), default="test")
    sp.add_argument("--no-plot", action="store_true", help="skip snr_curve.svg")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="time training and classification per model")
    common(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--models", help="comma list of models")
    sp.add_argument("--repetitions", type=int)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (RuntimeFailure, dataset.DatasetFormatError, container.ContainerError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
