"""JSON run configuration: loading, schema validation and model construction."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema
import numpy as np

from .estimator import LossConfig, OptimizerOptions
from .exceptions import ConfigError
from .modeldsl import ParamSpec
from .ssm import ModelSpec, TemplateModel, get_builtin
from .varsieve import DataSet, select_lags

SCHEMA_VERSION = 1
_AUTO = re.compile(r"^\s*auto\s*\(\s*(\d+)\s*,\s*(aic|bic)\s*\)\s*$")


def load_schema() -> dict:
    return json.loads(resources.files("otfilter").joinpath("config_schema.json").read_text("utf-8"))


def _line_of(text: str, path) -> Optional[int]:
    """Best-effort line number of the deepest key in ``path``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    pos = 0
    for key in keys:
        hit = text.find(f'"{key}"', pos)
        if hit < 0:
            break
        pos = hit
    return text.count("\n", 0, pos) + 1


def validate(doc: Any, text: str = "", source: str = "<config>") -> None:
    """Raise :class:`ConfigError` on the first schema violation, with its location."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = "/".join(map(str, err.absolute_path)) or "(root)"
        line = _line_of(text, list(err.absolute_path)) if text else None
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: {where}: {err.message}")


@dataclass
class RunConfig:
    """Validated configuration plus the directory that relative paths resolve against."""

    raw: dict
    base_dir: Path

    @classmethod
    def from_file(cls, path, overrides: Optional[dict] = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(doc, path.parent, overrides, text, str(path))

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".", overrides: Optional[dict] = None, text: str = "",
                  source: str = "<config>") -> "RunConfig":
        doc = copy.deepcopy(doc)
        for key, val in (overrides or {}).items():
            if val is not None:
                doc[key] = val
        validate(doc, text, source)
        cfg = cls(doc, Path(base_dir))
        cfg.check()
        return cfg

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def section(self, key) -> dict:
        return dict(self.raw.get(key, {}))

    def path(self, key) -> Optional[Path]:
        val = self.raw.get(key)
        if val is None:
            return None
        p = Path(val)
        return p if p.is_absolute() else self.base_dir / p

    def check(self) -> None:
        for key in ("data", "estimates"):
            p = self.path(key)
            if p is not None and not p.is_file():
                raise ConfigError(f"{key} file not found: {p}")
        self.model()

    # -- derived objects ----------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def output_dir(self) -> Path:
        p = self.path("output")
        return p if p is not None else Path("otf_output")

    def model(self, key: str = "model") -> ModelSpec:
        return build_model(self.raw[key] if key in self.raw else self.raw["model"])

    def data(self) -> DataSet:
        p = self.path("data")
        if p is None:
            raise ConfigError("this command needs a 'data' file")
        return DataSet.from_csv(p)

    def lags(self, data=None) -> int:
        spec = self.raw.get("lags", 4)
        if isinstance(spec, int):
            return spec
        m = _AUTO.match(spec)
        if data is None:
            raise ConfigError("automatic lag selection needs data")
        return select_lags(data, int(m.group(1)), m.group(2))

    def loss(self, k: int) -> LossConfig:
        w = self.raw.get("weighting", "inverse_variance")
        return LossConfig(w if isinstance(w, str) else np.asarray(w, dtype=float),
                          bool(self.raw.get("prior_penalty", False)), k)

    def optimizer(self, spec: ModelSpec) -> OptimizerOptions:
        o = self.section("optimizer")
        start = None
        if "start" in self.raw:
            start = spec.theta_from_dict(self.raw["start"])
            if not spec.in_bounds(start):
                raise ConfigError(f"start {self.raw['start']} violates parameter bounds")
        return OptimizerOptions(
            n_starts=o.get("n_starts", 8), max_evals=o.get("max_evals", 4000), xatol=o.get("xatol", 1e-8),
            seed=self.seed, perturbation=o.get("perturbation", 0.25), keep_trace=o.get("trace", False),
            start=start,
        )

    def theta(self, spec: ModelSpec) -> np.ndarray:
        """Fixed ``theta`` from the config, an estimates file, or the model defaults."""
        if "theta" in self.raw:
            th = spec.theta_from_dict(self.raw["theta"])
        elif "estimates" in self.raw:
            doc = json.loads(self.path("estimates").read_text(encoding="utf-8"))
            th = spec.theta_from_dict(doc.get("theta_hat", doc))
        elif spec.defaults is not None:
            th = np.asarray(spec.defaults, dtype=float)
        else:
            raise ConfigError("no parameter values: give 'theta' or 'estimates'")
        if not spec.in_bounds(th):
            raise ConfigError(f"theta {th.tolist()} violates parameter bounds")
        return th


def build_model(entry: Union[str, dict]) -> ModelSpec:
    """A builtin name such as ``"arma(1,0)"`` or a template block."""
    if isinstance(entry, str):
        return get_builtin(entry)
    params = [ParamSpec(p["name"], p.get("lower", -np.inf), p.get("upper", np.inf), p.get("prior", {}))
              for p in entry["params"]]
    defaults = None
    if "defaults" in entry:
        missing = [p.name for p in params if p.name not in entry["defaults"]]
        if missing:
            raise ConfigError(f"template defaults miss {missing}")
        defaults = [entry["defaults"][p.name] for p in params]
    return TemplateModel(params, entry["mu"], entry["A"], entry["B"], entry["C"], entry["D"],
                         name=entry.get("name", "template"), defaults=defaults)
