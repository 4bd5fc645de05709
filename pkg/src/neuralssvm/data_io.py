"""Dataset and model files.

Both formats are UTF-8 JSON text.  A dataset file is line-delimited: one
header object, then one object per sample.  A model file is a single
object holding the architecture descriptor and flat parameter arrays.
Floats are written with ``repr``, the shortest decimal that round-trips
exactly, so reading a file back reproduces every bit.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .classifier import UnaryClassifier
from .factors import FactorModel, factor_from_descriptor
from .graph_model import Dataset, EdgeStateIndex, FactorGraphSample, validate_sample

DATASET_FORMAT = "neuralssvm-dataset"
MODEL_FORMAT = "neuralssvm-model"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message names the offending line/record."""


class ModelFormatError(ValueError):
    pass


class IncompatibleModelError(ValueError):
    pass


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def dataset_to_text(dataset: Dataset) -> str:
    header = {"format": DATASET_FORMAT, "version": FORMAT_VERSION,
              "n_labels": dataset.n_labels, "d_u": dataset.d_u, "d_i": dataset.d_i,
              "n_samples": len(dataset)}
    if dataset.class_names is not None:
        header["class_names"] = list(dataset.class_names)
    lines = [_dumps(header)]
    for s in dataset.samples:
        rec = {"nodes": s.node_features.tolist(),
               "edges": [[int(i), int(j), f] for (i, j), f in
                         zip(s.edges.tolist(), s.edge_features.tolist())]}
        if s.ground_truth is not None:
            rec["labels"] = s.ground_truth.tolist()
        lines.append(_dumps(rec))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_text(dataset))


def _record_to_sample(rec, k: int, header: dict) -> FactorGraphSample:
    where = f"record {k} (line {k + 2})"
    if not isinstance(rec, dict) or "nodes" not in rec or "edges" not in rec:
        raise DatasetFormatError(f"{where}: expected an object with 'nodes' and 'edges'")
    d_u, d_i = header["d_u"], header["d_i"]
    nodes = rec["nodes"]
    for r, row in enumerate(nodes):
        if len(row) != d_u:
            raise DatasetFormatError(
                f"{where}: node {r} has {len(row)} features, header says d_u={d_u}")
    edges, feats = [], []
    for e, item in enumerate(rec["edges"]):
        if len(item) != 3:
            raise DatasetFormatError(f"{where}: edge {e} is not [i, j, features]")
        i, j, f = item
        if len(f) != d_i:
            raise DatasetFormatError(
                f"{where}: edge {e} has {len(f)} features, header says d_i={d_i}")
        edges.append((i, j))
        feats.append(f)
    try:
        sample = FactorGraphSample(np.array(nodes, dtype=np.float64).reshape(len(nodes), d_u),
                                   np.array(edges, dtype=np.intp).reshape(-1, 2),
                                   np.array(feats, dtype=np.float64).reshape(len(feats), d_i),
                                   rec.get("labels"))
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{where}: {exc}") from None
    problems = validate_sample(sample, header["n_labels"], d_u, d_i)
    if problems:
        raise DatasetFormatError(f"{where}: " + "; ".join(problems))
    return sample


def dataset_from_text(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1 (header): {exc.msg}") from None
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError("line 1 (header): not a dataset header")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"line 1 (header): unsupported version {header.get('version')!r}")
    for key in ("n_labels", "d_u", "d_i"):
        if not isinstance(header.get(key), int) or header[key] < 0:
            raise DatasetFormatError(f"line 1 (header): missing or invalid {key!r}")
    if header["n_labels"] < 2:
        raise DatasetFormatError("line 1 (header): n_labels must be at least 2")
    samples = []
    for k, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"record {k} (line {k + 2}): {exc.msg}") from None
        samples.append(_record_to_sample(rec, k, header))
    expected = header.get("n_samples")
    if expected is not None and expected != len(samples):
        raise DatasetFormatError(
            f"record {len(samples)}: file truncated, header announces {expected} records")
    return Dataset(header["n_labels"], header["d_u"], header["d_i"], samples,
                   header.get("class_names"))


def read_dataset(path) -> Dataset:
    return dataset_from_text(Path(path).read_text(encoding="utf-8"))


def _factor_to_dict(factor):
    if factor is None:
        return None
    return {**factor.descriptor(), "params": factor.params.tolist()}


def _factor_from_dict(d):
    if d is None:
        return None
    desc = {k: v for k, v in d.items() if k != "params"}
    return factor_from_descriptor(desc, np.array(d["params"], dtype=np.float64))


def model_to_text(model: FactorModel) -> str:
    obj = {"format": MODEL_FORMAT, "version": FORMAT_VERSION, "regime": model.regime,
           "n_labels": model.n_labels, "edge_mode": model.idx.mode,
           "unary": _factor_to_dict(model.unary),
           "pairwise": _factor_to_dict(model.pairwise),
           "classifier": (None if model.classifier is None
                          else model.classifier.weights.tolist()),
           "meta": model.meta}
    return json.dumps(obj, allow_nan=False, sort_keys=True) + "\n"


def model_from_text(text: str) -> FactorModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file")
    if obj.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {obj.get('version')!r}")
    try:
        idx = EdgeStateIndex(obj["n_labels"], obj["edge_mode"])
        clf = obj.get("classifier")
        model = FactorModel(obj["n_labels"], idx, _factor_from_dict(obj.get("unary")),
                            _factor_from_dict(obj.get("pairwise")),
                            None if clf is None else UnaryClassifier(np.array(clf)),
                            obj.get("regime", ""), obj.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad model architecture: {exc}") from None
    if model.unary is not None and model.unary.d_out != model.n_labels:
        raise ModelFormatError("unary factor output size does not match the label count")
    if model.pairwise is not None and model.pairwise.d_out != idx.dim:
        raise ModelFormatError("pairwise factor output size does not match the edge states")
    return model


def save_model(model: FactorModel, path) -> None:
    atomic_write_text(path, model_to_text(model))


def load_model(path) -> FactorModel:
    return model_from_text(Path(path).read_text(encoding="utf-8"))


def check_compatible(model: FactorModel, dataset: Dataset) -> None:
    """Raise ``IncompatibleModelError`` if the model cannot score the dataset."""
    if model.n_labels != dataset.n_labels:
        raise IncompatibleModelError(
            f"model has {model.n_labels} labels, dataset has {dataset.n_labels}")
    d_unary = dataset.d_u
    if model.classifier is not None:
        if model.classifier.d_in != dataset.d_u:
            raise IncompatibleModelError(
                f"classifier expects {model.classifier.d_in} node features, "
                f"dataset has {dataset.d_u}")
        d_unary = model.n_labels
    if model.unary is not None and model.unary.d_in != d_unary:
        raise IncompatibleModelError(
            f"unary factor expects {model.unary.d_in} inputs, dataset provides {d_unary}")
    if model.pairwise is not None and model.pairwise.d_in != dataset.d_i:
        raise IncompatibleModelError(
            f"pairwise factor expects {model.pairwise.d_in} edge features, "
            f"dataset has {dataset.d_i}")
