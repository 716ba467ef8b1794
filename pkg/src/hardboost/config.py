"""Run configuration files (strict-keyed JSON)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import ConfigError
from .hars import HarsConfig
from .harst import HarstConfig
from .models import ClassifierConfig

_TOP_KEYS = {
    "K",
    "T",
    "alpha",
    "beta",
    "S",
    "N_u",
    "seed",
    "metric",
    "base_model",
    "selection",
    "label_space",
    "ridge",
    "classifier",
}
_CLASSIFIER_KEYS = {"learning_rate", "epochs", "batch_size", "seed"}
_METRICS = {"ss", "cf", "pncf"}
_BASE_MODELS = {"embedding", "generative"}


@dataclass(frozen=True)
class RunConfig:
    """Union of every pipeline knob, as read from a config file."""

    hard_count: int = 2
    iterations: int = 6
    alpha: float = 2.0
    beta: float = 2.0
    support_count: int = 2
    n_unseen: int = 300
    seed: int = 0
    metric: str = "ss"
    base_model: str = "generative"
    selection: str = "cfbs"
    label_space: str = "unseen"
    ridge: float = 0.1
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(**{**self.as_dict_args(), "seed": seed})

    def as_dict_args(self) -> dict:
        return {
            "hard_count": self.hard_count,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "beta": self.beta,
            "support_count": self.support_count,
            "n_unseen": self.n_unseen,
            "seed": self.seed,
            "metric": self.metric,
            "base_model": self.base_model,
            "selection": self.selection,
            "label_space": self.label_space,
            "ridge": self.ridge,
            "classifier": self.classifier,
        }

    def to_json_dict(self) -> dict:
        return {
            "K": self.hard_count,
            "T": self.iterations,
            "alpha": self.alpha,
            "beta": self.beta,
            "S": self.support_count,
            "N_u": self.n_unseen,
            "seed": self.seed,
            "metric": self.metric,
            "base_model": self.base_model,
            "selection": self.selection,
            "label_space": self.label_space,
            "ridge": self.ridge,
            "classifier": {
                "learning_rate": self.classifier.learning_rate,
                "epochs": self.classifier.epochs,
                "batch_size": self.classifier.batch_size,
                "seed": self.classifier.seed,
            },
        }

    def digest(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def hars(self) -> HarsConfig:
        return HarsConfig(
            hard_count=self.hard_count,
            support_count=self.support_count,
            alpha=self.alpha,
            beta=self.beta,
            n_unseen=self.n_unseen,
            seed=self.seed,
            ridge=self.ridge,
            classifier=self.classifier,
        )

    def harst(self) -> HarstConfig:
        metric = "cf" if self.metric == "ss" else self.metric
        return HarstConfig(
            iterations=self.iterations,
            hard_count=self.hard_count,
            metric=metric,
            base=self.base_model,
            selection=self.selection,
            label_space=self.label_space,
            n_unseen=self.n_unseen,
            seed=self.seed,
            ridge=self.ridge,
            classifier=self.classifier,
        )


def parse_run_config(obj: dict, source: str = "config") -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    unknown = sorted(set(obj) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown key {unknown[0]!r}")
    clf_obj = obj.get("classifier", {})
    if not isinstance(clf_obj, dict):
        raise ConfigError(f"{source}: classifier must be an object")
    unknown = sorted(set(clf_obj) - _CLASSIFIER_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown classifier key {unknown[0]!r}")

    defaults = RunConfig()
    try:
        metric = str(obj.get("metric", defaults.metric))
        base_model = str(obj.get("base_model", defaults.base_model))
        if metric not in _METRICS:
            raise ConfigError(f"{source}: metric must be one of {sorted(_METRICS)}")
        if base_model not in _BASE_MODELS:
            raise ConfigError(f"{source}: base_model must be one of {sorted(_BASE_MODELS)}")
        classifier = ClassifierConfig(
            learning_rate=float(clf_obj.get("learning_rate", 0.1)),
            epochs=int(clf_obj.get("epochs", 200)),
            batch_size=(
                None
                if clf_obj.get("batch_size") is None
                else int(clf_obj["batch_size"])
            ),
            seed=int(clf_obj.get("seed", 0)),
        )
        return RunConfig(
            hard_count=int(obj.get("K", defaults.hard_count)),
            iterations=int(obj.get("T", defaults.iterations)),
            alpha=float(obj.get("alpha", defaults.alpha)),
            beta=float(obj.get("beta", defaults.beta)),
            support_count=int(obj.get("S", defaults.support_count)),
            n_unseen=int(obj.get("N_u", defaults.n_unseen)),
            seed=int(obj.get("seed", defaults.seed)),
            metric=metric,
            base_model=base_model,
            selection=str(obj.get("selection", defaults.selection)),
            label_space=str(obj.get("label_space", defaults.label_space)),
            ridge=float(obj.get("ridge", defaults.ridge)),
            classifier=classifier,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None


def load_run_config(path) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_run_config(obj, source=str(path))
