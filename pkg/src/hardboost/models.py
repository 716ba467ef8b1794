"""Reference base models: linear embedder, Gaussian generator, softmax classifier.

The boosting pipelines are model-agnostic; these are the simplest members of
each interface, chosen so every fit is closed-form or plain gradient descent
and therefore exactly reproducible.

* ``EmbeddingModel`` ridge-regresses class-mean visual features onto
  semantic vectors and classifies by nearest mapped prototype.
* ``GenerativeModel`` maps a semantic vector to a class mean and samples
  around it with a shared diagonal covariance.
* ``Classifier`` is multinomial logistic regression trained by full-batch
  (optionally mini-batch) gradient descent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureTable, SemanticTable, atomic_write_bytes

COVARIANCE_FLOOR = 1e-6

_MODEL_MAGIC = b"ZSM1"
_MODEL_VERSION = 1
_KIND_EMBEDDING = 1
_KIND_GENERATIVE = 2
_KIND_CLASSIFIER = 3


class SingularFitError(ValueError):
    """Normal equations were singular; a positive ridge is required."""


def _class_means(
    table: FeatureTable, semantics: SemanticTable
) -> tuple[list[str], np.ndarray, np.ndarray]:
    labels = sorted(set(table.labels))
    if not labels:
        raise ValueError("cannot fit on an empty table")
    feats = table.features.astype(np.float64)
    means = []
    for cls in labels:
        if cls not in semantics:
            raise ValueError(f"training label {cls!r} has no semantic vector")
        rows = table.rows_for(cls)
        means.append(feats[rows].mean(axis=0))
    return labels, np.stack(means), semantics.matrix(labels)


def _ridge_solve(design: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Least-squares map ``design -> targets``; returns (target_dim, s)."""
    gram = design.T @ design + ridge * np.eye(design.shape[1])
    rhs = design.T @ targets
    try:
        coeff_t = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise SingularFitError(
            "normal equations are singular; refit with ridge > 0"
        ) from None
    if not np.isfinite(coeff_t).all():
        raise SingularFitError("normal equations are singular; refit with ridge > 0")
    return coeff_t.T


# ---------------------------------------------------------------------------
# embedding model


@dataclass(frozen=True)
class EmbeddingModel:
    """Linear semantic-to-visual map with bias, fitted on class means."""

    weights: np.ndarray  # (v, s)
    bias: np.ndarray  # (v,)
    ridge: float

    def prototype(self, e: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(e, dtype=np.float64) + self.bias


def fit_embedding(
    train: FeatureTable, semantics: SemanticTable, ridge: float = 0.0
) -> EmbeddingModel:
    """Closed-form ridge fit of class-mean features on semantic vectors."""
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    _, means, sem = _class_means(train, semantics)
    sem_center = sem.mean(axis=0)
    mean_center = means.mean(axis=0)
    weights = _ridge_solve(sem - sem_center, means - mean_center, ridge)
    bias = mean_center - weights @ sem_center
    return EmbeddingModel(weights=weights, bias=bias, ridge=float(ridge))


def fit_embedding_rows(
    sem_rows: np.ndarray, targets: np.ndarray, ridge: float = 0.0
) -> EmbeddingModel:
    """Ridge fit over explicit (semantic vector, feature vector) rows.

    Same closed form as :func:`fit_embedding` but without the collapse to
    class means, so repeated rows weight the fit by their multiplicity.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    sem_rows = np.asarray(sem_rows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if sem_rows.shape[0] != targets.shape[0] or sem_rows.shape[0] == 0:
        raise ValueError("need one semantic row per target row")
    sem_center = sem_rows.mean(axis=0)
    target_center = targets.mean(axis=0)
    weights = _ridge_solve(sem_rows - sem_center, targets - target_center, ridge)
    bias = target_center - weights @ sem_center
    return EmbeddingModel(weights=weights, bias=bias, ridge=float(ridge))


def _prototype_matrix(
    model: EmbeddingModel, candidates, semantics: SemanticTable
) -> tuple[list[str], np.ndarray]:
    cand = sorted(candidates)
    if not cand:
        raise ValueError("candidate set is empty")
    protos = semantics.matrix(cand) @ model.weights.T + model.bias
    return cand, protos


def classify_embedding(
    model: EmbeddingModel, x: np.ndarray, candidates, semantics: SemanticTable
) -> str:
    """Nearest mapped prototype among the candidates; ties break on class id."""
    cand, protos = _prototype_matrix(model, candidates, semantics)
    diffs = np.asarray(x, dtype=np.float64)[None, :] - protos
    return cand[int(np.argmin((diffs**2).sum(axis=1)))]


def classify_embedding_batch(
    model: EmbeddingModel, features: np.ndarray, candidates, semantics: SemanticTable
) -> list[str]:
    cand, protos = _prototype_matrix(model, candidates, semantics)
    feats = np.asarray(features, dtype=np.float64)
    diffs = feats[:, None, :] - protos[None, :, :]
    picks = (diffs**2).sum(axis=2).argmin(axis=1)
    return [cand[i] for i in picks]


# ---------------------------------------------------------------------------
# generative model


@dataclass(frozen=True)
class GenerativeModel:
    """Semantic-conditioned Gaussian with shared diagonal covariance."""

    coeff: np.ndarray  # (v, s)
    covariance: np.ndarray  # (v,), strictly positive
    ridge: float

    def class_mean(self, e: np.ndarray) -> np.ndarray:
        return self.coeff @ np.asarray(e, dtype=np.float64)


def fit_generator(
    train: FeatureTable,
    semantics: SemanticTable,
    ridge: float = 0.0,
    synth=None,
) -> GenerativeModel:
    """Ridge-regress group means on semantic vectors; pool residual variance.

    Real classes form one group each (their class mean against the class
    semantic vector).  Synthesized rows, which carry continuous interpolated
    semantic vectors, group by exact semantic vector -- typically singleton
    groups that shape the map without contributing scatter.  The shared
    covariance is the within-group variance pooled over all rows with a
    degrees-of-freedom correction, floored at ``COVARIANCE_FLOOR``.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    _, means, sem = _class_means(train, semantics)
    group_sems = [sem]
    group_means = [means]
    sq_dev = np.zeros(train.dim, dtype=np.float64)
    n_rows = train.n
    n_groups = sem.shape[0]
    feats = train.features.astype(np.float64)
    for cls_idx, cls in enumerate(sorted(set(train.labels))):
        rows = feats[train.rows_for(cls)]
        sq_dev += ((rows - means[cls_idx]) ** 2).sum(axis=0)

    if synth is not None and len(synth) > 0:
        if synth.semantics.shape[1] != semantics.dim:
            raise ValueError(
                f"synthesized semantic dimension {synth.semantics.shape[1]} "
                f"!= table dimension {semantics.dim}"
            )
        sem_rows = synth.semantics.astype(np.float64)
        feat_rows = synth.features.astype(np.float64)
        groups: dict[bytes, list[int]] = {}
        for i in range(len(synth)):
            groups.setdefault(sem_rows[i].tobytes(), []).append(i)
        for key in groups:
            members = feat_rows[groups[key]]
            mean = members.mean(axis=0)
            group_sems.append(sem_rows[groups[key][0]][None, :])
            group_means.append(mean[None, :])
            sq_dev += ((members - mean) ** 2).sum(axis=0)
        n_rows += len(synth)
        n_groups += len(groups)

    design = np.concatenate(group_sems)
    targets = np.concatenate(group_means)
    coeff = _ridge_solve(design, targets, ridge)
    dof = max(n_rows - n_groups, 1)
    covariance = np.maximum(sq_dev / dof, COVARIANCE_FLOOR)
    return GenerativeModel(coeff=coeff, covariance=covariance, ridge=float(ridge))


def sample_generator(
    model: GenerativeModel, e: np.ndarray, n: int, seed: int
) -> np.ndarray:
    """Draw ``n`` feature vectors conditioned on semantic vector ``e``."""
    if n < 0:
        raise ValueError("sample count must be >= 0")
    v = model.coeff.shape[0]
    if n == 0:
        return np.empty((0, v), dtype=np.float64)
    rng = np.random.default_rng(seed)
    mean = model.class_mean(e)
    return mean + rng.standard_normal((n, v)) * np.sqrt(model.covariance)


# ---------------------------------------------------------------------------
# softmax classifier


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int | None = None  # None = full batch
    seed: int = 0


@dataclass(frozen=True)
class Classifier:
    classes: tuple[str, ...]
    weights: np.ndarray  # (n_classes, v)
    bias: np.ndarray  # (n_classes,)
    config: ClassifierConfig
    loss_history: tuple[float, ...] = field(default=(), repr=False)

    def logits(self, features: np.ndarray) -> np.ndarray:
        feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if feats.shape[1] != self.weights.shape[1]:
            raise ValueError(
                f"feature dimension {feats.shape[1]} != model dimension "
                f"{self.weights.shape[1]}"
            )
        return feats @ self.weights.T + self.bias


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def cross_entropy_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    label_idx: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of softmax(features @ W.T + b) and its gradients."""
    probs = _softmax(features @ weights.T + bias)
    n = features.shape[0]
    picked = probs[np.arange(n), label_idx]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    probs[np.arange(n), label_idx] -= 1.0
    probs /= n
    return loss, probs.T @ features, probs.sum(axis=0)


def fit_classifier(
    features: np.ndarray,
    labels,
    classes=None,
    config: ClassifierConfig = ClassifierConfig(),
) -> Classifier:
    """Gradient-descent softmax regression; deterministic given the seed."""
    feats = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if len(labels) != feats.shape[0]:
        raise ValueError("one label per training row is required")
    class_list = sorted(set(labels)) if classes is None else sorted(classes)
    index = {cls: i for i, cls in enumerate(class_list)}
    unknown = sorted(set(labels) - set(index))
    if unknown:
        raise ValueError(f"label {unknown[0]!r} is not in the class set")
    y = np.asarray([index[l] for l in labels])

    n, v = feats.shape
    weights = np.zeros((len(class_list), v))
    bias = np.zeros(len(class_list))
    rng = np.random.default_rng(config.seed)
    history = []

    def full_loss() -> float:
        probs = _softmax(feats @ weights.T + bias)
        return float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())

    for epoch in range(config.epochs):
        if config.batch_size is None or config.batch_size >= n:
            loss, gw, gb = cross_entropy_and_grad(weights, bias, feats, y)
            history.append(loss)
            weights = weights - config.learning_rate * gw
            bias = bias - config.learning_rate * gb
        else:
            history.append(full_loss())
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                chunk = order[start : start + config.batch_size]
                _, gw, gb = cross_entropy_and_grad(weights, bias, feats[chunk], y[chunk])
                weights = weights - config.learning_rate * gw
                bias = bias - config.learning_rate * gb
        if not (np.isfinite(history[-1]) and np.isfinite(weights).all()):
            raise ValueError(
                f"training diverged at epoch {epoch}; lower the learning rate"
            )
    history.append(full_loss())
    if not np.isfinite(history[-1]):
        raise ValueError(
            f"training diverged at epoch {config.epochs - 1}; lower the learning rate"
        )
    return Classifier(
        classes=tuple(class_list),
        weights=weights,
        bias=bias,
        config=config,
        loss_history=tuple(history),
    )


def predict_proba(model: Classifier, features: np.ndarray) -> np.ndarray:
    return _softmax(model.logits(features))


def predict_classifier(model: Classifier, x: np.ndarray) -> str:
    """Highest-logit class; ties break on class id (classes are sorted)."""
    logits = model.logits(x)
    return model.classes[int(np.argmax(logits[0]))]


def predict_classifier_batch(model: Classifier, features: np.ndarray) -> list[str]:
    picks = model.logits(features).argmax(axis=1)
    return [model.classes[i] for i in picks]


# ---------------------------------------------------------------------------
# checkpoint blobs


def _pack_array(arr: np.ndarray) -> bytes:
    return arr.astype("<f8", copy=False).tobytes(order="C")


def save_model(model, path) -> None:
    """Checkpoint a fitted model (magic ``ZSM1``, little-endian float64)."""
    out = [_MODEL_MAGIC, struct.pack("<I", _MODEL_VERSION)]
    if isinstance(model, EmbeddingModel):
        v, s = model.weights.shape
        out.append(struct.pack("<BIId", _KIND_EMBEDDING, v, s, model.ridge))
        out.append(_pack_array(model.weights))
        out.append(_pack_array(model.bias))
    elif isinstance(model, GenerativeModel):
        v, s = model.coeff.shape
        out.append(struct.pack("<BIId", _KIND_GENERATIVE, v, s, model.ridge))
        out.append(_pack_array(model.coeff))
        out.append(_pack_array(model.covariance))
    elif isinstance(model, Classifier):
        c, v = model.weights.shape
        cfg = model.config
        out.append(
            struct.pack(
                "<BIIdIIQ",
                _KIND_CLASSIFIER,
                c,
                v,
                cfg.learning_rate,
                cfg.epochs,
                0 if cfg.batch_size is None else cfg.batch_size,
                cfg.seed,
            )
        )
        out.append(_pack_array(model.weights))
        out.append(_pack_array(model.bias))
        block = "\n".join(model.classes).encode("utf-8")
        out.append(struct.pack("<I", len(block)) + block)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    atomic_write_bytes(path, b"".join(out))


def load_model(path):
    """Load a checkpoint written by :func:`save_model`.

    Classifier loss history is not checkpointed; a loaded classifier has an
    empty history but identical predictions.
    """
    raw = Path(path).read_bytes()
    if raw[:4] != _MODEL_MAGIC:
        raise ValueError(f"{path}: missing {_MODEL_MAGIC!r} magic header")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    kind = raw[8]
    offset = 9
    if kind in (_KIND_EMBEDDING, _KIND_GENERATIVE):
        v, s, ridge = struct.unpack_from("<IId", raw, offset)
        offset += 16
        first = np.frombuffer(raw, dtype="<f8", count=v * s, offset=offset).reshape(v, s)
        offset += v * s * 8
        second = np.frombuffer(raw, dtype="<f8", count=v, offset=offset)
        if kind == _KIND_EMBEDDING:
            return EmbeddingModel(weights=first.copy(), bias=second.copy(), ridge=ridge)
        return GenerativeModel(coeff=first.copy(), covariance=second.copy(), ridge=ridge)
    if kind == _KIND_CLASSIFIER:
        c, v, lr, epochs, batch, seed = struct.unpack_from("<IIdIIQ", raw, offset)
        offset += 32
        weights = np.frombuffer(raw, dtype="<f8", count=c * v, offset=offset).reshape(c, v)
        offset += c * v * 8
        bias = np.frombuffer(raw, dtype="<f8", count=c, offset=offset)
        offset += c * 8
        (block_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        classes = raw[offset : offset + block_len].decode("utf-8").split("\n")
        if len(classes) != c:
            raise ValueError(f"{path}: {len(classes)} class names for {c} classes")
        return Classifier(
            classes=tuple(classes),
            weights=weights.copy(),
            bias=bias.copy(),
            config=ClassifierConfig(
                learning_rate=lr,
                epochs=epochs,
                batch_size=None if batch == 0 else batch,
                seed=seed,
            ),
        )
    raise ValueError(f"{path}: unknown model kind {kind}")
