"""Versioned JSON persistence for trained models.

Floats are written with ``repr`` precision by :mod:`json`, so a save/load
round trip reproduces every parameter bit for bit.  Files carry no trailing
newline: any truncation leaves invalid JSON and is reported as a load error.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ModelLoadError, VersionError
from .base import Encoder, Model
from .bayes import NaiveBayesModel, NbConfig
from .linear import LinearSvmModel, LogisticConfig, LogisticModel, SvmConfig
from .mlp import MlpConfig, MlpModel
from .trees import (DecisionTreeModel, ForestConfig, ForestModel, GbtConfig, GbtModel,
                    TreeConfig, TreeNode)

FORMAT = "chd-model"
VERSION = 1


def _params(model: Model) -> dict:
    if isinstance(model, (LogisticModel, LinearSvmModel)):
        return {"weights": model.weights.tolist(), "bias": model.bias,
                "encoder": model.encoder.to_dict()}
    if isinstance(model, MlpModel):
        return {
            "layers": [{"W": W.tolist(), "b": b.tolist(), "activation": act}
                       for W, b, act in model.layers],
            "encoder": model.encoder.to_dict(),
        }
    if isinstance(model, NaiveBayesModel):
        return {
            "priors": model.priors.tolist(),
            "means": model.means.tolist(),
            "variances": model.variances.tolist(),
            "categorical": model.categorical.tolist(),
            "cat_probs": {str(j): t.tolist() for j, t in model.cat_probs.items()},
        }
    if isinstance(model, DecisionTreeModel):
        return {"n_features": model.n_features, "root": model.root.to_dict()}
    if isinstance(model, ForestModel):
        return {"n_features": model.n_features, "max_features": model.max_features,
                "tree_seeds": model.tree_seeds, "trees": [t.to_dict() for t in model.trees]}
    if isinstance(model, GbtModel):
        return {"n_features": model.n_features, "init_score": model.init_score,
                "shrinkage": model.shrinkage, "trees": [t.to_dict() for t in model.trees]}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_to_dict(model: Model) -> dict:
    return {"format": FORMAT, "version": VERSION, "kind": model.kind,
            "config": asdict(model.config), "params": _params(model)}


def model_from_dict(doc: dict) -> Model:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelLoadError("not a model file")
    if doc.get("version") != VERSION:
        raise VersionError(f"unsupported model version {doc.get('version')!r} (expected {VERSION})")
    kind, cfg, p = doc["kind"], doc["config"], doc["params"]
    if kind == "logistic_regression":
        return LogisticModel(p["weights"], p["bias"], Encoder.from_dict(p["encoder"]),
                             LogisticConfig(**cfg))
    if kind == "svm":
        return LinearSvmModel(p["weights"], p["bias"], Encoder.from_dict(p["encoder"]),
                              SvmConfig(**cfg))
    if kind == "multilayer_perceptron":
        layers = [(np.array(L["W"]), np.array(L["b"]), L["activation"]) for L in p["layers"]]
        return MlpModel(layers, Encoder.from_dict(p["encoder"]), MlpConfig(**cfg))
    if kind == "naive_bayes":
        cat = {int(j): np.array(t) for j, t in p["cat_probs"].items()}
        return NaiveBayesModel(p["priors"], p["means"], p["variances"], cat, p["categorical"],
                               NbConfig(**cfg))
    if kind == "decision_tree":
        return DecisionTreeModel(TreeNode.from_dict(p["root"]), p["n_features"], TreeConfig(**cfg))
    if kind == "random_forest":
        trees = [TreeNode.from_dict(t) for t in p["trees"]]
        return ForestModel(trees, p["tree_seeds"], p["max_features"], p["n_features"],
                           ForestConfig(**cfg))
    if kind == "gradient_boosted_tree":
        trees = [TreeNode.from_dict(t) for t in p["trees"]]
        return GbtModel(p["init_score"], trees, p["shrinkage"], p["n_features"], GbtConfig(**cfg))
    raise ModelLoadError(f"unknown model kind {kind!r}")


def dumps_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1, ensure_ascii=False)


def save_model(model: Model, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> Model:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    try:
        return model_from_dict(doc)
    except ModelLoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model file {path}: {exc}") from exc
