"""Model JSON document: fixed field order, reals written with 17 significant digits."""
from __future__ import annotations

import json
import math
from pathlib import Path

from .cgnc import CgncModel, ModelError, NodeCpd
from .structure import DagStructure


def _real(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ModelError(f"cannot serialize non-finite value {x}")
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _real(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def model_to_dict(model: CgncModel) -> dict:
    edges = []
    for i, ps in enumerate(model.structure.parents):
        for j in ps:
            edges.append([j, i, model.cpds[0][i].weight_map[j], model.cpds[1][i].weight_map[j]])
    edges.sort(key=lambda e: (e[0], e[1]))
    return {
        "n": model.n,
        "feature_names": list(model.feature_names),
        "priors": [model.priors[0], model.priors[1]],
        "edges": edges,
        "cpds": [
            [
                {
                    "parents": list(cpd.parents),
                    "weights": [float(w) for w in cpd.weights],
                    "intercept": cpd.intercept,
                    "variance": cpd.variance,
                }
                for cpd in model.cpds[c]
            ]
            for c in (0, 1)
        ],
    }


def dumps_model(model: CgncModel) -> str:
    return _emit(model_to_dict(model), 2, 0) + "\n"


def model_from_dict(doc: dict) -> CgncModel:
    try:
        n = int(doc["n"])
        parents = [tuple(int(j) for j in cpd["parents"]) for cpd in doc["cpds"][0]]
        structure = DagStructure(n, tuple(parents))
        cpds = tuple(
            tuple(
                NodeCpd(
                    tuple(int(j) for j in cpd["parents"]),
                    tuple(float(w) for w in cpd["weights"]),
                    float(cpd["intercept"]),
                    float(cpd["variance"]),
                )
                for cpd in doc["cpds"][c]
            )
            for c in (0, 1)
        )
        priors = tuple(float(p) for p in doc["priors"])
        names = tuple(doc.get("feature_names", ()))
    except (KeyError, TypeError, IndexError) as exc:
        raise ModelError(f"malformed model document: {exc}") from None
    return CgncModel(structure, priors, cpds, names)


def save_model(model: CgncModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> CgncModel:
    path = Path(path)
    if not path.is_file():
        raise ModelError(f"no such model file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from None
    return model_from_dict(doc)
