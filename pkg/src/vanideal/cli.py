"""Command-line front end.

Subcommands::

    vanideal synth       sample a labeled synthetic dataset
    vanideal fit         preprocess, fit generators, prune, train the head
    vanideal eval        accuracy, per-class accuracy and confusion counts
    vanideal complexity  spectral-complexity report for a bundle
    vanideal baseline    random-monomial layer or linear head, same training path

Every file written by a command depends only on its arguments (seed
included), so reruns produce identical bytes. Wall-clock figures are printed
to stdout and never written into bundles or metrics files.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import avinn, spectral
from .bundle import atomic_write_text, dumps, load_bundle, save_bundle
from .errors import ConfigError, DataError, NumericalError, VanidealError
from .features import Dataset, load_dataset, synth_manifolds, write_dataset
from .vanishing import Algorithm, VanishConfig

log = logging.getLogger("vanideal")

PRESETS = {
    "circles": {
        "noise": 0.02,
        "classes": [
            {"shape": "circle", "radius": 1.0, "count": 500},
            {"shape": "circle", "radius": 0.5, "count": 500},
        ],
    },
    # three curves whose generators share only part of their monomials
    "curves3": {
        "noise": 0.01,
        "classes": [
            {"shape": "circle", "radius": 0.8, "count": 500},
            {"shape": "lines", "count": 500, "segments": [[[-0.5, -0.9], [0.5, 0.9]], [[0.9, -0.5], [-0.9, 0.5]]]},
            {"shape": "circle", "radius": 0.35, "center": [0.2, -0.1], "count": 500},
        ],
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters shared by ``fit`` and ``baseline``."""

    vanish: VanishConfig
    train: avinn.TrainConfig
    keep_fraction: float = 1.0
    pca_dims: int | None = 128
    rescale: bool = True
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError(f"--keep-fraction must be in (0, 1], got {self.keep_fraction}")
        if self.pca_dims is not None and self.pca_dims < 1:
            raise ConfigError(f"--pca-dims must be >= 1, got {self.pca_dims}")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")

    def to_dict(self) -> dict:
        v, t = self.vanish, self.train
        return {
            "algorithm": v.algorithm.value,
            "psi": v.psi,
            "tau": v.tau,
            "max_degree": v.max_degree,
            "subsample": v.subsample,
            "solver_tolerance": v.solver_tolerance,
            "solver_max_iters": v.solver_max_iters,
            "pca_dims": self.pca_dims,
            "rescale": self.rescale,
            "keep_fraction": self.keep_fraction,
            "lr": t.lr,
            "momentum": t.momentum,
            "epochs": t.epochs,
            "batch": t.batch,
            "finetune_coeffs": t.finetune_coeffs,
            "seed": self.seed,
        }


def _run_config(args) -> RunConfig:
    subsample = args.subsample if args.subsample and args.subsample > 0 else None
    pca = args.pca_dims if args.pca_dims and args.pca_dims > 0 else None
    if args.pca_dims is not None and args.pca_dims < 0:
        raise ConfigError(f"--pca-dims must be >= 0 (0 disables PCA), got {args.pca_dims}")
    if args.subsample is not None and args.subsample < 0:
        raise ConfigError(f"--subsample must be >= 0 (0 disables it), got {args.subsample}")
    vanish = VanishConfig(
        psi=args.psi,
        tau=args.tau,
        max_degree=args.max_degree,
        algorithm=Algorithm(args.algorithm),
        subsample=subsample,
        seed=args.seed,
    )
    train = avinn.TrainConfig(
        lr=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch=args.batch,
        finetune_coeffs=args.finetune_coeffs,
        seed=args.seed,
    )
    return RunConfig(vanish, train, args.keep_fraction, pca, not args.no_rescale, args.seed, args.workers)


def _train_split(data: Dataset) -> Dataset:
    train = data.part("train")
    if len(train) == 0:
        raise DataError("dataset has no rows in the train split")
    return train


def _accuracy(model: avinn.Classifier, data: Dataset) -> float:
    return float(np.mean(model.predict(data.points) == data.labels))


def _accuracy_line(model, data: Dataset) -> str:
    parts = [f"train_accuracy={_accuracy(model, data.part('train')):.4f}"]
    test = data.part("test")
    if len(test):
        parts.append(f"test_accuracy={_accuracy(model, test):.4f}")
    return " ".join(parts)


# --- commands ----------------------------------------------------------------


def cmd_synth(spec, seed: int, out, noise: float | None = None, test_count: int = 0) -> Dataset:
    """``spec`` is a preset name, a path to a JSON spec, or an already-parsed dict."""
    if isinstance(spec, str) and spec in PRESETS:
        spec = PRESETS[spec]
    elif isinstance(spec, (str, Path)):
        try:
            spec = json.loads(Path(spec).read_text())
        except FileNotFoundError:
            raise ConfigError(
                f"unknown spec {str(spec)!r}: not a preset ({', '.join(PRESETS)}) or a file"
            ) from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec {spec}: {exc}") from exc
    if isinstance(spec, list):
        spec = {"classes": spec}
    if not isinstance(spec, dict) or "classes" not in spec:
        raise ConfigError("spec needs a 'classes' list")
    if test_count < 0:
        raise ConfigError("--test-count must be >= 0")
    classes = [dict(c) for c in spec["classes"]]
    if test_count:
        for c in classes:
            c["test_count"] = test_count
    data = synth_manifolds(classes, spec.get("noise", 0.0) if noise is None else noise, seed)
    try:
        write_dataset(data, out)
    except OSError as exc:
        raise DataError(f"cannot write {out}: {exc}") from exc
    return data


def cmd_fit(data_path, out, cfg: RunConfig, stats_path=None, prune_split: str = "train") -> avinn.FitResult:
    data = load_dataset(data_path)
    train = _train_split(data)
    K = data.n_classes
    prune_data = None
    if prune_split != "train":
        prune_data = data.part(prune_split)
        if len(prune_data) == 0:
            raise DataError(f"no rows in the {prune_split!r} split for pruning scores")
    res = avinn.fit_avinn(
        train, cfg.vanish, cfg.train, cfg.keep_fraction, cfg.pca_dims, cfg.rescale, K, cfg.workers,
        prune_data,
    )
    rep = res.prune_report
    manifest = {
        "kind": "avinn",
        "config": dict(cfg.to_dict(), prune_split=prune_split),
        "pruning": {
            "monomials_before": rep.monomials_before,
            "monomials_after": rep.monomials_after,
            "polynomials_before": rep.polynomials_before,
            "polynomials_after": rep.polynomials_after,
            "retained": rep.retained,
        },
    }
    save_bundle(out, res.model, manifest, res.generator_sets)

    rows = ["class,monomials,polynomials,seconds"]
    for gs, fitted in zip(res.generator_sets, res.fitted_sets):
        rows.append(
            f"{gs.class_label},{gs.stats['monomials']},{gs.stats['polynomials']},"
            f"{fitted.stats.get('seconds', 0.0):.4f}"
        )
    table = "\n".join(rows) + "\n"
    if stats_path is not None:
        atomic_write_text(stats_path, table)
    print(table, end="")
    print(
        f"layer: polynomials={res.model.layer.n_polys} monomials={res.model.layer.n_monomials} "
        + _accuracy_line(res.model, data)
    )
    return res


def evaluate(model: avinn.Classifier, data: Dataset) -> dict:
    """Accuracy, per-class accuracy and confusion counts (rows: true class)."""
    if len(data) == 0:
        raise DataError("evaluation set is empty")
    K = model.n_classes
    if data.labels.max() >= K:
        raise DataError(f"label {int(data.labels.max())} outside [0, {K})")
    expect = model.preprocessor.input_dim if model.preprocessor is not None else model.layer.n_vars
    if data.dim != expect:
        raise DataError(f"dataset has {data.dim} features, bundle expects {expect}")
    pred = model.predict(data.points)
    conf = np.zeros((K, K), dtype=int)
    np.add.at(conf, (data.labels, pred), 1)
    support = conf.sum(axis=1)
    per_class = [float(conf[k, k] / support[k]) if support[k] else None for k in range(K)]
    return {
        "n": int(len(data)),
        "accuracy": float(np.trace(conf) / len(data)),
        "per_class_accuracy": per_class,
        "support": support.tolist(),
        "confusion": conf.tolist(),
    }


def _select(data: Dataset, split: str) -> Dataset:
    if split == "all":
        return data
    if split == "auto":
        test = data.part("test")
        return test if len(test) else data
    return data.part(split)


def cmd_eval(bundle, data_path, out=None, csv_path=None, split: str = "auto") -> dict:
    model, _ = load_bundle(bundle)
    data = _select(load_dataset(data_path), split)
    metrics = evaluate(model, data)
    metrics["split"] = split
    if out is not None:
        atomic_write_text(out, dumps(metrics))
    if csv_path is not None:
        lines = ["class,support,accuracy"]
        for k, (s, a) in enumerate(zip(metrics["support"], metrics["per_class_accuracy"])):
            lines.append(f"{k},{s},{'' if a is None else repr(a)}")
        atomic_write_text(csv_path, "\n".join(lines) + "\n")

    # throughput is timing-dependent, so it only goes to stdout
    t0 = time.perf_counter()
    model.predict(data.points)
    dt = time.perf_counter() - t0
    shown = dict(metrics, throughput_rows_per_s=len(data) / dt if dt > 0 else None)
    print(json.dumps(shown, sort_keys=True))
    return metrics


def _network_layers(path):
    if path is None:
        return [], None
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read network file {path}: {exc}") from exc

    def layers(items):
        out = []
        for it in items:
            W = np.atleast_2d(np.array(it["W"], dtype=float))
            rho = float(it.get("rho", 1.0))
            if not rho > 0:
                raise ConfigError("Lipschitz constants rho must be > 0")
            out.append((W, rho))
        return out

    full = spec.get("full")
    return layers(spec.get("truncated", [])), (layers(full) if full is not None else None)


def cmd_complexity(
    bundle,
    out,
    data_path=None,
    gamma: float | None = None,
    delta: float = 0.05,
    network=None,
    tau: float | None = None,
    lambda1: float | None = None,
    lambda2: float | None = None,
    split: str = "train",
) -> spectral.SpectralReport:
    """Theorem report for the bundle's layer and head, plus the margin bound when data is given.

    ``lambda1``/``lambda2`` are optional caps on the head norms; they must
    dominate the measured values and then replace them in the bounds.
    """
    if not 0 < delta < 1:
        raise ConfigError(f"--delta must be in (0, 1), got {delta}")
    if gamma is not None and not gamma > 0:
        raise ConfigError(f"--gamma must be > 0, got {gamma}")
    if data_path is not None and gamma is None:
        raise ConfigError("--gamma is required together with --data")
    if tau is not None and not tau > 0:
        raise ConfigError("--tau must be > 0")
    model, _ = load_bundle(bundle)
    trunc, full = _network_layers(network)
    enc = spectral.encode_layer(model.layer)
    rep = spectral.theorem_report(trunc, enc, model.weights, full, tau=tau)
    for name, given, measured in (("lambda1", lambda1, rep.lambda1), ("lambda2", lambda2, rep.lambda2)):
        if given is None:
            continue
        if given < measured * (1 - 1e-12):
            raise ConfigError(f"--{name} {given} is below the measured value {measured}")
        setattr(rep, name, float(given))
    if lambda1 is not None or lambda2 is not None:
        spectral.refresh_bounds(rep)
    if data_path is not None:
        data = _select(load_dataset(data_path), split)
        if len(data) == 0:
            raise DataError("no rows for the margin report")
        Z = model.preprocessor(data.points) if model.preprocessor is not None else data.points
        logits = model.logits(data.points)
        rep.gamma = float(gamma)
        rep.margin_loss = spectral.margin_loss_from_logits(logits, data.labels, gamma)
        rep.generalization_bound = spectral.generalization_bound(
            rep, float(np.linalg.norm(Z)), len(data), delta
        )
    d = rep.to_dict()
    d["delta"] = delta
    atomic_write_text(out, dumps(d))
    print(
        f"bound_product={rep.bound_product:.6g} measured_product={rep.measured_product:.6g} "
        f"bound_sum={rep.bound_sum:.6g} measured_sum={rep.measured_sum:.6g} all_ok={rep.all_ok}"
    )
    return rep


def cmd_baseline(data_path, out, cfg: RunConfig, kind: str, reference=None) -> avinn.Classifier:
    data = load_dataset(data_path)
    train = _train_split(data)
    K = data.n_classes
    manifest = {"kind": kind, "config": cfg.to_dict()}
    if kind == "random-monomials":
        if reference is None:
            raise ConfigError("random-monomials baseline needs --reference BUNDLE for shape matching")
        ref, ref_man = load_bundle(reference)
        if ref.preprocessor is not None and ref.preprocessor.input_dim != train.dim:
            raise DataError(f"reference expects {ref.preprocessor.input_dim} features, data has {train.dim}")
        pre = ref.preprocessor
        layer = avinn.random_layer_like(ref.layer, cfg.seed)
        assert (layer.n_polys, layer.n_monomials, layer.class_sizes) == (
            ref.layer.n_polys,
            ref.layer.n_monomials,
            list(ref.layer.class_sizes),
        ), "random layer is not shape-matched to the reference"
        manifest["reference"] = {"polynomials": ref.layer.n_polys, "monomials": ref.layer.n_monomials}
    elif kind == "linear-head":
        from .features import fit_preprocessor

        pre = fit_preprocessor(train.points, cfg.pca_dims, cfg.rescale)
        layer = avinn.identity_layer(pre.output_dim)
    else:
        raise ConfigError(f"unknown baseline {kind!r}")
    Z = pre(train.points) if pre is not None else train.points
    model = avinn.train_head(layer, Dataset(Z, train.labels), cfg.train, K, pre)
    save_bundle(out, model, manifest)
    print(f"baseline={kind} polynomials={layer.n_polys} monomials={layer.n_monomials} " + _accuracy_line(model, data))
    return model


# --- argument parsing ----------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="delimited dataset with a train split")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default="abm")
    p.add_argument("--psi", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=10.0)
    p.add_argument("--max-degree", type=int, default=5)
    p.add_argument("--pca-dims", type=int, default=128, help="0 disables PCA")
    p.add_argument("--no-rescale", action="store_true", help="skip tanh rescaling")
    p.add_argument("--keep-fraction", type=float, default=1.0)
    p.add_argument("--subsample", type=int, default=512, help="points per class for fitting; 0 uses all")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--finetune-coeffs", action="store_true")
    p.add_argument("--workers", type=int, default=1, help="threads for per-class fits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vanideal", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="sample a synthetic dataset")
    p.add_argument("--spec", required=True, help=f"preset ({', '.join(PRESETS)}) or JSON file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=None, help="override the spec's noise level")
    p.add_argument("--test-count", type=int, default=0, help="test points per class")

    p = sub.add_parser("fit", help="fit an AVINN classifier")
    _add_run_flags(p)
    p.add_argument("--stats", default=None, help="write the per-class stats table (CSV)")
    p.add_argument("--prune-split", default="train", help="split used for pruning scores (e.g. val)")

    p = sub.add_parser("eval", help="evaluate a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["auto", "train", "test", "all"], default="auto")
    p.add_argument("--out", default=None, help="metrics file (JSON)")
    p.add_argument("--csv", default=None, help="per-class accuracy CSV")

    p = sub.add_parser("complexity", help="spectral-complexity report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None, help="dataset for the margin loss and bound")
    p.add_argument("--split", choices=["auto", "train", "test", "all"], default="train")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=None, help="coefficient budget; default measured")
    p.add_argument("--lambda1", type=float, default=None, help="cap on the head spectral norm")
    p.add_argument("--lambda2", type=float, default=None, help="cap on the head norm ratio")
    p.add_argument("--network", default=None, help="JSON with truncated/full (W, rho) layers")

    p = sub.add_parser("baseline", help="random-monomial or linear-head baseline")
    _add_run_flags(p)
    p.add_argument("--kind", choices=["random-monomials", "linear-head"], required=True)
    p.add_argument("--reference", default=None, help="AVINN bundle to shape-match")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args.spec, args.seed, args.out, args.noise, args.test_count)
        elif args.command == "fit":
            cmd_fit(args.data, args.out, _run_config(args), args.stats, args.prune_split)
        elif args.command == "eval":
            cmd_eval(args.bundle, args.data, args.out, args.csv, args.split)
        elif args.command == "complexity":
            cmd_complexity(
                args.bundle, args.out, args.data, args.gamma, args.delta,
                args.network, args.tau, args.lambda1, args.lambda2, args.split,
            )
        elif args.command == "baseline":
            cmd_baseline(args.data, args.out, _run_config(args), args.kind, args.reference)
    except VanidealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
