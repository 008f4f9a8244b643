"""Experiment configuration: YAML files describing scenes, fields and a task."""
from __future__ import annotations

from pathlib import Path

import yaml

from .dtn import RectScene
from .fields import GaugeFunction, ScalarField, VectorField, apply_gauge
from .scene import Scene, SceneError

TASKS = ("trace", "sinogram", "reconstruct", "dtn", "dtn-compare", "gauge-check", "stability")
RECT_TASKS = ("dtn", "dtn-compare")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}.{key}", "missing required key")
    return d[key]


def _complex(v, where):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(where, "complex values are [re, im] pairs")
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigError(where, f"not a number: {v!r}") from None


class Library:
    """Named field presets resolved lazily (presets may reference each other)."""

    def __init__(self, cfg: dict, base: Path):
        self.base = base
        self.raw = {
            "scalars": cfg.get("scalars") or {},
            "vectors": cfg.get("vectors") or {},
            "gauges": cfg.get("gauges") or {},
        }
        for section, entries in self.raw.items():
            if not isinstance(entries, dict):
                raise ConfigError(section, "expected a mapping of names to presets")
        self.cache: dict = {}

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def get(self, section: str, name, where: str):
        if isinstance(name, dict):
            return self._build(section, name, where)
        key = (section, name)
        if key not in self.cache:
            if name not in self.raw[section]:
                raise ConfigError(where, f"unknown {section[:-1]} preset name {name!r}")
            self.cache[key] = self._build(section, self.raw[section][name], f"{section}.{name}")
        return self.cache[key]

    def scalar(self, name, where="scalars") -> ScalarField:
        return self.get("scalars", name, where)

    def vector(self, name, where="vectors") -> VectorField:
        return self.get("vectors", name, where)

    def gauge(self, name, where="gauges") -> GaugeFunction:
        return self.get("gauges", name, where)

    def _build(self, section, spec, where):
        if not isinstance(spec, dict):
            raise ConfigError(where, "preset must be a mapping")
        preset = _need(spec, "preset", where)
        try:
            builder = getattr(self, f"_{section}_{preset}")
        except AttributeError:
            raise ConfigError(f"{where}.preset", f"unknown preset {preset!r}") from None
        try:
            return builder(spec, where)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(where, f"bad preset parameters ({exc})") from exc

    # scalars
    def _scalars_constant(self, s, w):
        return ScalarField.constant(_complex(_need(s, "value", w), f"{w}.value"))

    def _scalars_gaussian(self, s, w):
        return ScalarField.gaussian(
            _need(s, "center", w), float(_need(s, "width", w)), _complex(s.get("amplitude", 1.0), f"{w}.amplitude")
        )

    def _scalars_grid(self, s, w):
        return ScalarField.from_csv(self._path(_need(s, "path", w)))

    def _scalars_sum(self, s, w):
        terms = [self.scalar(t, f"{w}.terms") for t in _need(s, "terms", w)]
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out

    def _scalars_scaled(self, s, w):
        return _complex(_need(s, "factor", w), f"{w}.factor") * self.scalar(_need(s, "field", w), f"{w}.field")

    # vectors
    def _vectors_zero(self, s, w):
        return VectorField.zero()

    def _vectors_constant(self, s, w):
        return VectorField.constant([float(c) for c in _need(s, "value", w)])

    def _vectors_uniform_field(self, s, w):
        return VectorField.uniform_field(float(s.get("strength", 1.0)), s.get("center", (0.0, 0.0)))

    def _vectors_ab_flux(self, s, w):
        return VectorField.ab_flux(_need(s, "center", w), float(_need(s, "alpha", w)))

    def _vectors_grid(self, s, w):
        return VectorField.from_csv(self._path(_need(s, "path", w)))

    def _vectors_gradient_of(self, s, w):
        return VectorField.gradient_of(self.gauge(_need(s, "gauge", w), f"{w}.gauge"))

    def _vectors_gauged(self, s, w):
        return apply_gauge(self.vector(_need(s, "base", w), f"{w}.base"), self.gauge(_need(s, "gauge", w), f"{w}.gauge"))

    def _vectors_sum(self, s, w):
        terms = [self.vector(t, f"{w}.terms") for t in _need(s, "terms", w)]
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out

    def _vectors_scaled(self, s, w):
        return float(_need(s, "factor", w)) * self.vector(_need(s, "field", w), f"{w}.field")

    # gauges
    def _gauges_constant(self, s, w):
        return GaugeFunction.constant(float(_need(s, "value", w)))

    def _gauges_polynomial(self, s, w):
        return GaugeFunction.polynomial({(int(i), int(j)): float(c) for i, j, c in _need(s, "coeffs", w)})

    def _gauges_plane_wave(self, s, w):
        return GaugeFunction.plane_wave(_need(s, "wavevector", w), float(s.get("phase", 0.0)), float(s.get("amplitude", 1.0)))

    def _gauges_bump(self, s, w):
        return GaugeFunction.bump(_need(s, "center", w), float(_need(s, "radius", w)), float(s.get("amplitude", 1.0)))

    def _gauges_disk_factor(self, s, w):
        return GaugeFunction.disk_factor(s.get("center", (0.0, 0.0)), float(_need(s, "radius", w)))

    def _gauges_rect_factor(self, s, w):
        return GaugeFunction.rect_factor(float(_need(s, "a", w)), float(_need(s, "b", w)))

    def _gauges_product(self, s, w):
        factors = [self.gauge(f, f"{w}.factors") for f in _need(s, "factors", w)]
        out = factors[0]
        for f in factors[1:]:
            out = out * f
        return out

    def _gauges_sum(self, s, w):
        terms = [self.gauge(t, f"{w}.terms") for t in _need(s, "terms", w)]
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out


def load_config(path, task: str | None = None) -> dict:
    """Read and check a YAML experiment config.

    ``task`` is the subcommand; a ``task`` key in the file, if present, must
    agree with it.
    """
    path = Path(path)
    try:
        cfg = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    if task is None:
        task = _need(cfg, "task", "config")
    elif cfg.get("task", task) != task:
        raise ConfigError("task", f"config is for task {cfg['task']!r}, not {task!r}")
    cfg["task"] = task
    if task not in TASKS:
        raise ConfigError("task", f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    scene = _need(cfg, "scene", "config")
    if not isinstance(scene, dict):
        raise ConfigError("scene", "expected a mapping")
    kind = scene.get("kind", "smooth")
    if kind not in ("smooth", "rect"):
        raise ConfigError("scene.kind", "expected 'smooth' or 'rect'")
    if task in RECT_TASKS and kind != "rect":
        raise ConfigError("scene.kind", f"task {task!r} needs a rectilinear scene")
    if task not in RECT_TASKS and kind != "smooth":
        raise ConfigError("scene.kind", f"task {task!r} needs a smooth scene")
    cfg.setdefault("params", {})
    if not isinstance(cfg["params"], dict):
        raise ConfigError("params", "expected a mapping")
    cfg["_base"] = path.parent
    return cfg


def build_scene(cfg: dict):
    spec = cfg["scene"]
    try:
        if spec.get("kind", "smooth") == "rect":
            return RectScene.from_dict(spec)
        _need(spec, "outer", "scene")
        return Scene.from_dict(spec)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, SceneError) as exc:
        raise ConfigError("scene", f"invalid scene ({exc})") from exc
