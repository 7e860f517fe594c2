"""On-disk formats: model bundles, generator sets and reports.

A bundle is a directory of JSON files::

    manifest.json     format tag, model kind, run configuration, seed
    preprocess.json   PCA mean/components and tanh mu/sigma (either may be null)
    layer.json        monomial basis and per-class polynomials
    head.json         linear head weights and bias
    generators.json   fitted generator sets with their order ideals (optional)

Polynomials are lists of ``{"exponents": [...], "coefficient": c}`` records.
Floats are written with ``repr`` precision, so save/load round-trips exactly
and identical models produce identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .avinn import Classifier, PolynomialLayer
from .errors import DataError
from .features import PcaMap, Preprocessor, RescaleMap
from .polycore import Monomial, MonomialBasis, OrderIdeal, Polynomial
from .vanishing import GeneratorSet

FORMAT = "vanideal-bundle/1"

__all__ = [
    "FORMAT",
    "atomic_write_text",
    "dumps",
    "save_bundle",
    "load_bundle",
    "polynomial_records",
    "polynomial_from_records",
    "generator_sets_to_dict",
    "generator_sets_from_dict",
]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def polynomial_records(p: Polynomial) -> list[dict]:
    return [
        {"exponents": list(m.exponents), "coefficient": float(c)}
        for m, c in zip(p.monomials, p.coeffs)
    ]


def polynomial_from_records(records: list[dict], basis: MonomialBasis) -> Polynomial:
    mons = [Monomial(tuple(r["exponents"])) for r in records]
    return Polynomial(basis, [basis.index(m) for m in mons], [r["coefficient"] for r in records])


def layer_to_dict(layer: PolynomialLayer) -> dict:
    classes = []
    row = 0
    for k, size in enumerate(layer.class_sizes):
        polys = []
        for _ in range(size):
            nz = np.flatnonzero(layer.coeff_matrix[row])
            polys.append(
                [
                    {"exponents": list(layer.basis[j].exponents), "coefficient": float(layer.coeff_matrix[row, j])}
                    for j in nz
                ]
            )
            row += 1
        classes.append({"label": k, "polynomials": polys})
    return {
        "n_vars": layer.n_vars,
        "activation": layer.activation,
        "basis": [list(m.exponents) for m in layer.basis],
        "classes": classes,
    }


def layer_from_dict(d: dict) -> PolynomialLayer:
    n = int(d["n_vars"])
    basis = MonomialBasis([Monomial(tuple(e)) for e in d["basis"]], n_vars=n)
    rows, sizes = [], []
    for cls in d["classes"]:
        sizes.append(len(cls["polynomials"]))
        for recs in cls["polynomials"]:
            row = np.zeros(len(basis))
            for r in recs:
                row[basis.index(Monomial(tuple(r["exponents"])))] = r["coefficient"]
            rows.append(row)
    C = np.array(rows) if rows else np.zeros((0, len(basis)))
    return PolynomialLayer(basis, C, sizes, d.get("activation", "abs"))


def preprocessor_to_dict(pre: Preprocessor | None, input_dim: int) -> dict:
    if pre is None:
        return {"input_dim": input_dim, "pca": None, "rescale": None}
    return {
        "input_dim": pre.input_dim,
        "pca": None if pre.pca is None else {"mean": pre.pca.mean, "components": pre.pca.components},
        "rescale": None if pre.rescale is None else {"mu": pre.rescale.mu, "sigma": pre.rescale.sigma},
    }


def preprocessor_from_dict(d: dict) -> Preprocessor:
    pca = None
    if d.get("pca") is not None:
        pca = PcaMap(np.array(d["pca"]["mean"], dtype=float), np.atleast_2d(np.array(d["pca"]["components"], dtype=float)))
    resc = None
    if d.get("rescale") is not None:
        resc = RescaleMap(np.array(d["rescale"]["mu"], dtype=float), np.array(d["rescale"]["sigma"], dtype=float))
    return Preprocessor(int(d["input_dim"]), pca, resc)


def generator_sets_to_dict(sets: list[GeneratorSet]) -> list[dict]:
    out = []
    for gs in sets:
        stats = {k: v for k, v in gs.stats.items() if k not in ("seconds", "fit_values")}
        out.append(
            {
                "label": gs.class_label,
                "order_ideal": [list(m.exponents) for m in gs.order_ideal.sorted()],
                "generators": [polynomial_records(g) for g in gs.generators],
                "stats": stats,
            }
        )
    return out


def generator_sets_from_dict(items: list[dict], n_vars: int) -> list[GeneratorSet]:
    sets = []
    for it in items:
        order = [Monomial(tuple(e)) for e in it["order_ideal"]]
        mons = set(order)
        for recs in it["generators"]:
            mons.update(Monomial(tuple(r["exponents"])) for r in recs)
        basis = MonomialBasis(mons, n_vars=n_vars)
        gens = [polynomial_from_records(recs, basis) for recs in it["generators"]]
        sets.append(
            GeneratorSet(gens, OrderIdeal(order, n_vars), basis, int(it["label"]), dict(it.get("stats", {})))
        )
    return sets


def save_bundle(
    path,
    model: Classifier,
    manifest: dict,
    generator_sets: list[GeneratorSet] | None = None,
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    input_dim = model.preprocessor.input_dim if model.preprocessor is not None else model.layer.n_vars
    man = {"format": FORMAT, "n_classes": model.n_classes, "input_dim": input_dim, **manifest}
    atomic_write_text(path / "manifest.json", dumps(man))
    atomic_write_text(path / "preprocess.json", dumps(preprocessor_to_dict(model.preprocessor, input_dim)))
    atomic_write_text(path / "layer.json", dumps(layer_to_dict(model.layer)))
    atomic_write_text(path / "head.json", dumps({"weights": model.weights, "bias": model.bias}))
    if generator_sets is not None:
        atomic_write_text(path / "generators.json", dumps(generator_sets_to_dict(generator_sets)))


def load_bundle(path) -> tuple[Classifier, dict]:
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise DataError(f"{path} is not a model bundle (no manifest.json)")
    man = _read_json(path / "manifest.json")
    if man.get("format") != FORMAT:
        raise DataError(f"unsupported bundle format {man.get('format')!r}")
    pre = preprocessor_from_dict(_read_json(path / "preprocess.json"))
    layer = layer_from_dict(_read_json(path / "layer.json"))
    head = _read_json(path / "head.json")
    W = np.array(head["weights"], dtype=float).reshape(-1, layer.n_polys)
    model = Classifier(layer, W, np.array(head["bias"], dtype=float), pre)
    return model, man


def load_generator_sets(path) -> list[GeneratorSet]:
    path = Path(path)
    layer = _read_json(path / "layer.json")
    return generator_sets_from_dict(_read_json(path / "generators.json"), int(layer["n_vars"]))


__all__ += ["layer_to_dict", "layer_from_dict", "load_generator_sets"]
